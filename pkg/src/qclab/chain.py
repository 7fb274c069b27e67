"""Fully atomistic reference chain: energy, forces, and a Newton oracle.

Atoms are indexed i = -M..M+1 with positions y_i, the right end pinned at
y_{M+1}.  The second-neighbor energy is

    E(y) = sum_{i=-M}^{M} phi(y_{i+1} - y_i) + sum_{i=-M}^{M-1} phi(y_{i+2} - y_i)

and dead loads enter through  E_ext = - sum_i f_i y_i  for i = -M..M.
Out-of-range bond terms are dropped (index guards), which is where the
surface effects at the chain ends come from.

This module is the ground-truth oracle for the quasicontinuum models: the
solver here is a damped Newton iteration on all interior positions, direct
banded linear algebra, tolerance 1e-10 in the max norm of the residual.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import solve_banded

from qclab.potential import PairPotential, phi_derivs


class NonconvergenceError(RuntimeError):
    """Newton failed; carries the last iterate for inspection."""

    def __init__(self, message: str, last: "AtomChain"):
        self.last = last
        super().__init__(message)


@dataclass(frozen=True)
class AtomChain:
    """A chain of 2M+2 atoms with the right end constrained.

    y holds positions for atoms -M..M+1 in order; dead_loads holds the
    per-atom forces f_i for i = -M..M (the constrained atom carries none).
    """

    M: int
    y: np.ndarray
    dead_loads: np.ndarray
    potential: PairPotential

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        f = np.asarray(self.dead_loads, dtype=float)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "dead_loads", f)
        if y.shape != (2 * self.M + 2,):
            raise ValueError(f"need {2 * self.M + 2} positions for M={self.M}, got {y.shape}")
        if f.shape != (2 * self.M + 1,):
            raise ValueError(f"need {2 * self.M + 1} dead loads for M={self.M}, got {f.shape}")
        if np.any(np.diff(y) <= 0.0):
            raise ValueError("atom positions must be strictly increasing")

    @property
    def y_fixed(self) -> float:
        return float(self.y[-1])

    @classmethod
    def uniform(cls, M: int, spacing: float, potential: PairPotential,
                dead_loads: np.ndarray | None = None, y_end: float | None = None) -> "AtomChain":
        """Uniformly spaced chain; the right end defaults to (M+1)*spacing."""
        idx = np.arange(-M, M + 2, dtype=float)
        y = idx * spacing
        if y_end is not None:
            y = y + (y_end - y[-1])
        if dead_loads is None:
            dead_loads = np.zeros(2 * M + 1)
        return cls(M=M, y=y, dead_loads=dead_loads, potential=potential)


def tension_load(M: int, phi_load: float) -> np.ndarray:
    """Dead loads for uniform tension: -phi_load on the left end atom only."""
    f = np.zeros(2 * M + 1)
    f[0] = -phi_load
    return f


def pair_energy(p: PairPotential, y: np.ndarray) -> float:
    """Second-neighbor interaction energy of ordered positions y."""
    e1 = np.sum(phi_derivs(p, np.diff(y), 0))
    e2 = np.sum(phi_derivs(p, y[2:] - y[:-2], 0))
    return float(e1 + e2)


def pair_forces(p: PairPotential, y: np.ndarray) -> np.ndarray:
    """-dE/dy_i of the second-neighbor energy for every atom except the last."""
    n = y.size
    d1 = phi_derivs(p, np.diff(y), 1)          # n-1 nearest bonds
    d2 = phi_derivs(p, y[2:] - y[:-2], 1)      # n-2 second bonds
    F = np.zeros(n)
    # nearest bond (i, i+1) pulls i right (+) and i+1 left (-)
    F[:-1] += d1
    F[1:] -= d1
    # second bond (i, i+2)
    F[:-2] += d2
    F[2:] -= d2
    return F[:-1]                   # constrained atom M+1 has no equation


def atomistic_energy(c: AtomChain) -> float:
    """Second-neighbor interaction energy of the chain (no external part)."""
    return pair_energy(c.potential, c.y)


def total_energy(c: AtomChain) -> float:
    """Interaction energy plus dead-load potential -sum f_i y_i."""
    return atomistic_energy(c) - float(np.dot(c.dead_loads, c.y[:-1]))


def atomistic_forces(c: AtomChain) -> np.ndarray:
    """Forces F_i = -dE/dy_i for the unconstrained atoms i = -M..M.

    F_i = [phi'(y_{i+1}-y_i) + phi'(y_{i+2}-y_i)]
        - [phi'(y_i-y_{i-1}) + phi'(y_i-y_{i-2})],
    with bonds that would reach outside the chain dropped.
    """
    return pair_forces(c.potential, c.y)


def _hessian_banded(c: AtomChain) -> np.ndarray:
    """Hessian of the interaction energy wrt the free atoms, LAPACK banded.

    Pentadiagonal: bond (i, j) adds phi'' to (i,i) and (j,j) and -phi'' to
    (i,j).  Returned in solve_banded's (2, 2) diagonal-ordered form.
    """
    p, y = c.potential, c.y
    nfree = y.size - 1
    k1 = phi_derivs(p, np.diff(y), 2)
    k2 = phi_derivs(p, y[2:] - y[:-2], 2)
    diag = np.zeros(nfree)
    off1 = np.zeros(nfree - 1)
    off2 = np.zeros(nfree - 2)
    for stiff, span, off in ((k1, 1, off1), (k2, 2, off2)):
        i = np.arange(stiff.size)
        j = i + span
        free = j < nfree           # bonds touching the constrained atom only add to diag[i]
        np.add.at(diag, i, stiff)
        np.add.at(diag, j[free], stiff[free])
        np.add.at(off, i[free], -stiff[free])
    ab = np.zeros((5, nfree))
    ab[0, 2:] = off2
    ab[1, 1:] = off1
    ab[2, :] = diag
    ab[3, :-1] = off1
    ab[4, :-2] = off2
    return ab


def atomistic_solve(c: AtomChain, tol: float = 1e-10, max_iter: int = 200) -> AtomChain:
    """Damped Newton solve of F_i + f_i = 0 at fixed right end.

    The line search halves the step until the total energy decreases;
    ordering violations during the search also trigger halving.  Raises
    NonconvergenceError (with the last iterate attached) on divergence,
    which is the expected outcome for loads beyond the load limit.
    """
    cur = c
    e_cur = total_energy(cur)
    res_cur = float(np.max(np.abs(atomistic_forces(cur) + cur.dead_loads)))
    for _ in range(max_iter):
        if res_cur <= tol:
            return cur
        residual = atomistic_forces(cur) + cur.dead_loads
        ab = _hessian_banded(cur)
        try:
            step = solve_banded((2, 2), ab, residual)
        except np.linalg.LinAlgError:
            step = residual
        # grad(E_total) = -residual, so +step is the Newton descent direction.
        # Accept on energy decrease or on residual decrease (the energy goes
        # flat to round-off before the residual reaches the tolerance).
        t = 1.0
        for _ in range(60):
            y_new = cur.y.copy()
            y_new[:-1] += t * step
            if np.any(np.diff(y_new) <= 0.0):
                t *= 0.5
                continue
            trial = replace(cur, y=y_new)
            e_new = total_energy(trial)
            res_new = float(np.max(np.abs(atomistic_forces(trial) + trial.dead_loads)))
            if e_new < e_cur or res_new <= (1.0 - 1e-4 * t) * res_cur:
                cur, e_cur, res_cur = trial, e_new, res_new
                break
            t *= 0.5
        else:
            raise NonconvergenceError("line search stalled", cur)
    raise NonconvergenceError(f"no convergence in {max_iter} Newton iterations", cur)
