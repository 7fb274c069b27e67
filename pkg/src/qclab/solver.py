"""Preconditioned iteration for the force-based equilibrium equations.

The equilibrium problem at conjugate load Phi is

    psi^QCF(r) + Phi = 0,

solved by the fixed-point iteration  psi^QCE(r^{p+1}) = -Phi - psi^G(r^p):
each outer step turns the last ghost correction into a dead load for the
energy-based model and relaxes it (inner solve).  Within a contraction
window Omega = (r_L, r_U)^{2N+1} whose hypotheses certify

    alpha = 16 |phi''(2 r_L)| / (phi''(r_U) - 5 |phi''(2 r_L)|) < 1,

the outer map is an alpha-contraction with the equilibrium as its fixed
point, so convergence is guaranteed rather than observed.

The inner solve is a damped Newton iteration on the spacing residual
psi^QCE(r) - rhs with a tridiagonal Jacobian and a backtracking line search
on the preconditioner's potential; when that potential loses coercivity
(load beyond the energy model's limit), the iterates run off to large
spacings, which is reported as fracture rather than an error in the math.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import solve_banded

from qclab.potential import PairPotential, PotentialProfile, phi_derivs
from qclab.qc import QcMesh, ghost_stress, qce_energy, qce_stress, qce_stress_jacobian, qcf_stress


class HypothesisError(ValueError):
    """A contraction-window hypothesis is violated where a certificate is required."""


class InnerSolveFailure(RuntimeError):
    """The inner minimization failed; carries the last iterate and history.

    reason is one of 'fracture' (a spacing ran past the fracture threshold,
    the expected failure mode at excessive loads), 'collapse' (a spacing
    approached zero), 'line-search', or 'max-iterations'.
    """

    def __init__(self, reason: str, last_r: np.ndarray, history: list):
        self.reason = reason
        self.last_r = last_r
        self.history = history
        super().__init__(f"inner solve failed: {reason} (max spacing {np.max(last_r):.4f})")


@dataclass(frozen=True)
class ContractionWindow:
    """Spacing box (r_lower, r_upper)^{2N+1} with its contraction constant."""

    r_lower: float
    r_upper: float
    alpha: float

    def contains(self, r: np.ndarray) -> bool:
        return bool(np.all(r >= self.r_lower) and np.all(r <= self.r_upper))


def contraction_constant(p: PairPotential, r_lower: float, r_upper: float) -> float:
    """alpha = 16 |phi''(2 r_L)| / (phi''(r_U) - 5 |phi''(2 r_L)|).

    Raises HypothesisError when the denominator is not positive (the window
    is too wide for the diagonal-dominance argument).
    """
    num = 16.0 * abs(phi_derivs(p, 2.0 * r_lower, 2))
    den = phi_derivs(p, r_upper, 2) - 5.0 * abs(phi_derivs(p, 2.0 * r_lower, 2))
    if den <= 0.0:
        raise HypothesisError(
            f"phi''(r_U) - 5 |phi''(2 r_L)| = {den:.6g} <= 0 for window "
            f"({r_lower:.6g}, {r_upper:.6g})"
        )
    return float(num / den)


@dataclass(frozen=True)
class HypothesisReport:
    """Certificate (or violation list) for the contraction-window hypotheses."""

    certified: bool
    violations: tuple[str, ...] = ()


def check_hypotheses(
    p: PairPotential,
    prof: PotentialProfile,
    window: ContractionWindow,
    Phi: np.ndarray,
) -> HypothesisReport:
    """Verify the three window hypotheses for a given conjugate load.

    (i)   r2/2 < r_L < r_U,
    (ii)  phi''(r_U) + 21 phi''(2 r_L) > 0,
    (iii) phi'(r_L) + 6 phi'(2 r_L) - 4 phi'(2 r_U) < Phi_j
          < phi'(r_U) + 6 phi'(2 r_U) - 4 phi'(2 r_L)   for every j.
    """
    rl, ru = window.r_lower, window.r_upper
    Phi = np.atleast_1d(np.asarray(Phi, dtype=float))
    violations: list[str] = []
    if not (prof.r_tilde_2 / 2.0 < rl < ru):
        violations.append(
            f"window ordering: need r2/2 = {prof.r_tilde_2 / 2.0:.6g} < r_L < r_U, "
            f"got r_L={rl:.6g}, r_U={ru:.6g}"
        )
    dd = phi_derivs(p, ru, 2) + 21.0 * phi_derivs(p, 2.0 * rl, 2)
    if not dd > 0.0:
        violations.append(f"diagonal dominance: phi''(r_U) + 21 phi''(2 r_L) = {dd:.6g} <= 0")
    d = lambda rr: phi_derivs(p, rr, 1)
    lo = d(rl) + 6.0 * d(2.0 * rl) - 4.0 * d(2.0 * ru)
    hi = d(ru) + 6.0 * d(2.0 * ru) - 4.0 * d(2.0 * rl)
    bad = np.nonzero((Phi <= lo) | (Phi >= hi))[0]
    if bad.size:
        n_half = (Phi.size - 1) // 2
        j = int(bad[0]) - n_half
        violations.append(
            f"load bounds: Phi_j = {Phi[bad[0]]:.6g} at j={j} outside ({lo:.6g}, {hi:.6g})"
        )
    return HypothesisReport(certified=not violations, violations=tuple(violations))


@dataclass(frozen=True)
class InnerResult:
    r: np.ndarray
    iterations: int
    history: tuple        # (iteration, max spacing) per accepted iterate


def _inner_potential(m: QcMesh, p: PairPotential, rhs: np.ndarray, r: np.ndarray) -> float:
    # stationary points of E^QCE(r) + sum_j nu_j rhs_j r_j satisfy psi^QCE = rhs
    return qce_energy(m, r, p) + float(np.dot(m.nu * rhs, r))


def inner_minimize(
    m: QcMesh,
    p: PairPotential,
    rhs: np.ndarray,
    guess_r: np.ndarray,
    tol: float = 1e-12,
    max_iter: int = 500,
    fracture_spacing: float | None = None,
    min_spacing: float | None = None,
) -> InnerResult:
    """Solve psi^QCE(r) = rhs by damped Newton from guess_r.

    Newton directions come from the tridiagonal stress Jacobian; when the
    direction is not a descent direction for the inner potential (indefinite
    Hessian -- the signature of a disappearing minimum), steepest descent is
    used instead so the iterates keep sliding downhill.  A spacing running
    past ``fracture_spacing`` aborts with InnerSolveFailure('fracture'):
    this is the physical fracture signal, not a numerical accident.
    """
    r = np.asarray(guess_r, dtype=float).copy()
    if min_spacing is None:
        min_spacing = 0.05 * m.a0
    nu = m.nu
    history = [(0, float(np.max(r)))]
    energy = _inner_potential(m, p, rhs, r)
    g = qce_stress(m, r, p) - rhs
    res = float(np.max(np.abs(g)))
    for it in range(1, max_iter + 1):
        if res <= tol:
            return InnerResult(r=r, iterations=it - 1, history=tuple(history))
        grad = -nu * g                      # gradient of the inner potential
        try:
            step = solve_banded((1, 1), qce_stress_jacobian(m, r, p), -g)
        except np.linalg.LinAlgError:
            step = None
        if step is None or not np.all(np.isfinite(step)) or float(np.dot(grad, step)) >= 0.0:
            step = -grad                    # fallback: steepest descent
        big = float(np.max(np.abs(step)))
        if big > 0.5:                       # never move a spacing by more than 0.5 per trial
            step = step * (0.5 / big)
        slope = float(np.dot(grad, step))
        # Accept on sufficient energy decrease, or on residual decrease:
        # near convergence the energy is flat to round-off while Newton
        # still contracts the residual quadratically.
        t = 1.0
        while True:
            r_try = r + t * step
            if np.all(r_try > min_spacing):
                e_try = _inner_potential(m, p, rhs, r_try)
                g_try = qce_stress(m, r_try, p) - rhs
                res_try = float(np.max(np.abs(g_try)))
                if e_try <= energy + 1e-4 * t * slope or res_try <= (1.0 - 1e-4 * t) * res:
                    break
            t *= 0.5
            if t < 1e-14:
                raise InnerSolveFailure("line-search", r, history)
        r, energy, g, res = r_try, e_try, g_try, res_try
        history.append((it, float(np.max(r))))
        if np.any(r <= 2.0 * min_spacing):
            raise InnerSolveFailure("collapse", r, history)
        if fracture_spacing is not None and float(np.max(r)) > fracture_spacing:
            raise InnerSolveFailure("fracture", r, history)
    raise InnerSolveFailure("max-iterations", r, history)


def outer_iterate(
    m: QcMesh,
    p: PairPotential,
    r_p: np.ndarray,
    Phi: np.ndarray,
    inner_tol: float = 1e-12,
    fracture_spacing: float | None = None,
) -> InnerResult:
    """One preconditioned step: solve psi^QCE(r^{p+1}) = -Phi - psi^G(r^p)."""
    rhs = -np.asarray(Phi, dtype=float) - ghost_stress(m, r_p, p)
    return inner_minimize(m, p, rhs, r_p, tol=inner_tol, fracture_spacing=fracture_spacing)


def residual_norm(m: QcMesh, p: PairPotential, r: np.ndarray, Phi: np.ndarray) -> float:
    """Equilibrium residual ||psi^QCF(r) + Phi||_inf."""
    return float(np.max(np.abs(qcf_stress(m, r, p) + Phi)))


@dataclass(frozen=True)
class OuterStep:
    p: int
    residual_inf: float
    in_window: bool
    inner_iters: int
    max_spacing: float


@dataclass
class IterationTrace:
    """Record of one load step: per-outer-iterate rows plus the outcome.

    status is 'converged', 'max-iters', 'fracture', or 'inner-failure'.
    """

    steps: list[OuterStep] = field(default_factory=list)
    status: str = "converged"
    final_r: np.ndarray | None = None
    fracture_element: int | None = None
    inner_history: tuple = ()
    window: ContractionWindow | None = None

    @property
    def residuals(self) -> np.ndarray:
        return np.array([s.residual_inf for s in self.steps])

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["p", "residual_inf", "in_window", "inner_iters", "max_spacing"])
            for s in self.steps:
                w.writerow([s.p, repr(s.residual_inf), int(s.in_window),
                            s.inner_iters, repr(s.max_spacing)])

    def to_json(self, path: str | Path) -> None:
        payload = {
            "status": self.status,
            "final_spacings": [float(v) for v in self.final_r] if self.final_r is not None else None,
            "fracture_element": self.fracture_element,
            "window": None if self.window is None else {
                "r_lower": self.window.r_lower,
                "r_upper": self.window.r_upper,
                "alpha": self.window.alpha,
            },
            "inner_history": [[int(i), float(s)] for i, s in self.inner_history],
        }
        Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True))


def solve_at_load(
    m: QcMesh,
    p: PairPotential,
    r0: np.ndarray,
    Phi: np.ndarray,
    steps: int | None = None,
    tol: float | None = None,
    window: ContractionWindow | None = None,
    max_outer: int = 200,
    inner_tol: float = 1e-12,
    fracture_spacing: float | None = None,
) -> IterationTrace:
    """Outer iteration at a fixed load: P steps, or iterate to a residual.

    Exactly one of ``steps`` (fixed iteration count) and ``tol`` (residual
    target, capped at max_outer iterations) drives termination; giving both
    stops at whichever comes first.  Fracture and inner failures are
    recorded in the trace status, not raised.
    """
    if steps is None and tol is None:
        raise ValueError("need a fixed step count, a residual tolerance, or both")
    Phi = np.asarray(Phi, dtype=float)
    r = np.asarray(r0, dtype=float).copy()
    trace = IterationTrace(window=window)

    def in_window(rr) -> bool:
        return window.contains(rr) if window is not None else False

    trace.steps.append(OuterStep(0, residual_norm(m, p, r, Phi), in_window(r), 0, float(np.max(r))))
    trace.final_r = r
    count = 0
    while True:
        if steps is not None and count >= steps:
            break
        if tol is not None and trace.steps[-1].residual_inf <= tol:
            break
        if count >= max_outer:
            trace.status = "max-iters"
            return trace
        try:
            res = outer_iterate(m, p, r, Phi, inner_tol=inner_tol,
                                fracture_spacing=fracture_spacing)
        except InnerSolveFailure as fail:
            threshold = fracture_spacing if fracture_spacing is not None else np.inf
            fractured = fail.reason == "fracture" or float(np.max(fail.last_r)) > threshold
            trace.status = "fracture" if fractured else "inner-failure"
            trace.final_r = fail.last_r
            trace.inner_history = tuple(fail.history)
            if fractured:
                trace.fracture_element = int(np.argmax(fail.last_r)) - m.N
            return trace
        r = res.r
        count += 1
        trace.steps.append(OuterStep(count, residual_norm(m, p, r, Phi), in_window(r),
                                     res.iterations, float(np.max(r))))
        trace.final_r = r
    trace.status = "converged"
    return trace


def detect_fracture(trace: IterationTrace, fracture_spacing: float) -> tuple[bool, int | None]:
    """Whether any recorded spacing exceeded the threshold, and where.

    The location is the signed element index of the widest gap in the state
    at failure (for fractured traces) or in the final state otherwise.
    """
    if trace.fracture_element is not None:
        return True, trace.fracture_element
    if trace.final_r is not None and float(np.max(trace.final_r)) > fracture_spacing:
        n_half = (trace.final_r.size - 1) // 2
        return True, int(np.argmax(trace.final_r)) - n_half
    return False, None
