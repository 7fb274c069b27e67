"""Figure rendering for CLI reports (PNG files next to the CSV outputs)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

FIG_DPI = 150


def render_potential(path: str | Path, pot, prof) -> None:
    """Pair potential and strain-energy density with landmark markers."""
    from qclab.potential import phi_derivs, strain_energy

    fig, axes = plt.subplots(1, 2, figsize=(9, 3.2))
    r = np.linspace(0.85, 2.4, 400)
    ax = axes[0]
    ax.plot(r, phi_derivs(pot, r, 0), label=r"$\varphi$")
    ax.plot(r, phi_derivs(pot, r, 1), label=r"$\varphi'$")
    ax.plot(r, 0.05 * phi_derivs(pot, r, 2), label=r"$\varphi''/20$")
    for x, name in ((prof.a0, "$a_0$"), (prof.r_tilde_1, r"$\tilde r_1$"),
                    (prof.r_tilde_2, r"$\tilde r_2$")):
        ax.axvline(x, color="0.7", lw=0.8, zorder=0)
        ax.annotate(name, (x, ax.get_ylim()[0]), xytext=(2, 4),
                    textcoords="offset points", fontsize=8)
    ax.axhline(0.0, color="0.5", lw=0.6)
    ax.set_ylim(-3, 3)
    ax.set_xlabel("spacing r")
    ax.legend(fontsize=8)

    ax = axes[1]
    D = np.linspace(0.9, 1.6, 400)
    ax.plot(D, [strain_energy(pot, prof.a0, d, 1) for d in D], label="W'")
    ax.axhline(prof.phi_max, color="0.6", ls="--", lw=0.8,
               label=f"load limit {prof.phi_max:.4f}")
    ax.axvline(prof.d_tilde, color="0.7", lw=0.8, zorder=0)
    ax.annotate(r"$\widetilde D$", (prof.d_tilde, 0), xytext=(3, 4),
                textcoords="offset points", fontsize=8)
    ax.set_xlabel("strain D")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=FIG_DPI)
    plt.close(fig)


def render_bands(path: str | Path, tables: dict[str, np.ndarray]) -> None:
    """Loading response with its contraction bands, one band per rate."""
    fig, ax = plt.subplots(figsize=(6, 4))
    base = None
    for label, rows in tables.items():
        ax.fill_between(rows[:, 0], rows[:, 2], rows[:, 3], alpha=0.25, label=rf"$\alpha={label}$")
        base = rows if base is None or rows[-1, 0] > base[-1, 0] else base
    if base is not None:
        ax.plot(base[:, 0], base[:, 1], "k-", lw=1.2, label="r(s)")
    ax.set_xlabel("load fraction s")
    ax.set_ylabel("spacing")
    ax.legend(fontsize=8)
    ax.set_title("uniform response and contraction windows")
    fig.tight_layout()
    fig.savefig(path, dpi=FIG_DPI)
    plt.close(fig)


def render_fracture(path: str | Path, history, final_r, threshold: float,
                    fracture_element: int | None) -> None:
    """Inner-iterate divergence and the final spacing profile."""
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.2))
    ax = axes[0]
    hist = np.asarray(history, dtype=float)
    ax.plot(hist[:, 0], hist[:, 1], "o-", ms=3)
    ax.axhline(threshold, color="r", ls="--", lw=0.8, label="fracture threshold")
    ax.set_xlabel("inner iteration")
    ax.set_ylabel("max spacing")
    ax.legend(fontsize=8)

    ax = axes[1]
    n_half = (len(final_r) - 1) // 2
    j = np.arange(-n_half, n_half + 1)
    ax.bar(j, final_r, width=0.8)
    ax.axhline(threshold, color="r", ls="--", lw=0.8)
    if fracture_element is not None:
        ax.annotate("fracture", (fracture_element, final_r[fracture_element + n_half]),
                    xytext=(0, -12), textcoords="offset points",
                    ha="center", fontsize=8, color="r")
    ax.set_xlabel("element")
    ax.set_ylabel("spacing")
    fig.tight_layout()
    fig.savefig(path, dpi=FIG_DPI)
    plt.close(fig)


def render_continuation(path: str | Path, staircase: np.ndarray, gammas: np.ndarray) -> None:
    """Measured error staircase under the supersolution and window radius."""
    fig, ax = plt.subplots(figsize=(6, 4))
    s = staircase[:, 0]
    ax.semilogy(s, staircase[:, 2], "k-", lw=1.0, label=r"window radius $\delta(s)$")
    ax.semilogy(s, gammas, "s--", ms=3, label=r"supersolution $\gamma_q$")
    err = np.maximum(staircase[:, 1], 1e-17)
    ax.semilogy(s, err, "o-", ms=3, label=r"measured error $e_q$")
    ax.set_xlabel("load fraction s")
    ax.set_ylabel("max-norm error")
    ax.legend(fontsize=8)
    ax.set_title("continuation error budget")
    fig.tight_layout()
    fig.savefig(path, dpi=FIG_DPI)
    plt.close(fig)
