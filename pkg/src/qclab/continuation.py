"""Load-stepping: response curve, contraction radii, and provable plans.

For the uniform tension path Phi(s) = scale * s the equilibrium response is
the uniform state r(s) e with

    phi'(r(s)) + 2 phi'(2 r(s)) = scale * s,

valid up to the load limit.  Around it, a one-parameter family of
contraction windows (r(s) - delta, r(s) + delta) with prescribed rate alpha
is obtained by solving

    phi''(r(s) + delta) + (5 + 16/alpha) phi''(2 (r(s) - delta)) = 0,

and delta(s) shrinks to zero at a terminal load fraction beyond which no
window of rate alpha exists.

A load plan is a grid 0 = s_0 <= ... <= s_Q = 1 with iteration counts P_q.
Its supersolution

    gamma_q = alpha^{P_q} (kappa(s_q) - kappa(s_{q-1}) + gamma_{q-1})

dominates the true errors whenever every initial guess lands inside its
window, i.e. whenever

    kappa(s_q) - kappa(s_{q-1}) + gamma_{q-1} <= delta(s_q)      (admissible),

where kappa(s) integrates the response speed k(s) = |r'(s)|.  Two planners
are provided: a uniform-step planner that guarantees a max-norm tolerance
along the whole path from worst-case constants, and a greedy endpoint
planner (largest admissible steps, one iteration each, all remaining
iterations at s = 1) that is work-optimal for endpoint accuracy.  The two
plan rewrites -- enlarging steps to the window boundary and splitting a
multi-iteration step -- are the executable form of the optimality
argument: both preserve admissibility and never increase gamma_Q.

Planners consume profiles abstractly (kappa, delta, alpha), so they work
unchanged for synthetic profiles in tests.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import PchipInterpolator

from qclab.potential import PairPotential, PotentialProfile, chain_tension, phi_derivs
from qclab.qc import QcMesh
from qclab.rootfind import bracketed_root
from qclab.solver import (
    ContractionWindow,
    IterationTrace,
    check_hypotheses,
    solve_at_load,
)


class LoadLimitError(ValueError):
    """Requested load at or beyond the load limit: no uniform response."""


class WindowExhaustedError(RuntimeError):
    """No contraction window of the requested rate exists at this load."""


class StallError(RuntimeError):
    """The greedy planner cannot reach s = 1: the window died on the way."""


class RewriteInapplicableError(RuntimeError):
    """A plan rewrite's preconditions do not hold for this plan."""


class PlanError(ValueError):
    """A planner precondition is violated (e.g. tolerance vs window size)."""


class ExecutionAborted(RuntimeError):
    """Plan execution stopped early; carries the step index and trace."""

    def __init__(self, step: int, reason: str, trace: IterationTrace | None = None):
        self.step = step
        self.reason = reason
        self.trace = trace
        super().__init__(f"aborted at load step q={step}: {reason}")


@dataclass(frozen=True)
class LoadPath:
    """Scalar tension path Phi(s) = scale * s, uniform across repatoms."""

    scale: float = 2.76

    def tension(self, s: float) -> float:
        return self.scale * float(s)


def uniform_response(p: PairPotential, prof: PotentialProfile, load: float) -> float:
    """Spacing r with phi'(r) + 2 phi'(2r) = load on the stable branch.

    Newton from a0: the tension is increasing and concave on (a0, r_star),
    so the iterates approach the root monotonically from below.
    """
    if load >= prof.phi_max:
        raise LoadLimitError(f"load {load:.6g} is at or beyond the load limit {prof.phi_max:.6g}")
    if load < 0.0:
        raise LoadLimitError(f"load must be nonnegative, got {load:.6g}")
    if load == 0.0:
        return prof.a0
    r = prof.a0
    for _ in range(200):
        f = chain_tension(p, r) - load
        step = f / chain_tension(p, r, 1)
        r -= step
        if abs(step) <= 1e-15 * r:
            break
    return float(r)


def _response_grid(p: PairPotential, prof: PotentialProfile, loads: np.ndarray) -> np.ndarray:
    """Vectorized Newton for the uniform response at many loads at once."""
    r = np.full(loads.shape, prof.a0)
    for _ in range(200):
        f = chain_tension(p, r) - loads
        step = f / chain_tension(p, r, 1)
        r = r - step
        if float(np.max(np.abs(step))) <= 1e-15:
            break
    return r


def contraction_radius(p: PairPotential, prof: PotentialProfile, r_s: float, alpha: float) -> float:
    """Half-width delta of the rate-alpha window centered at response r_s.

    Solves phi''(r_s + d) + (5 + 16/alpha) phi''(2 (r_s - d)) = 0.  The
    bracket is [0, r1 - r_s]: beyond it phi''(r_s + d) is negative, so no
    window can close the balance.
    """
    C = 5.0 + 16.0 / alpha

    def g(d):
        return phi_derivs(p, r_s + d, 2) + C * phi_derivs(p, 2.0 * (r_s - d), 2)

    def dg(d):
        return phi_derivs(p, r_s + d, 3) - 2.0 * C * phi_derivs(p, 2.0 * (r_s - d), 3)

    if g(0.0) <= 0.0:
        raise WindowExhaustedError(
            f"no rate-{alpha:g} window at response spacing {r_s:.8g}")
    hi = prof.r_tilde_1 - r_s
    delta = bracketed_root(g, 0.0, hi, df=dg, abs_tol=1e-13)
    if not (r_s - delta > prof.r_tilde_2 / 2.0):
        raise WindowExhaustedError(
            f"window lower edge {r_s - delta:.6g} fell below r2/2")
    return float(delta)


def terminal_load_fraction(p: PairPotential, prof: PotentialProfile,
                           alpha: float, scale: float) -> float:
    """Load fraction s* at which the rate-alpha window shrinks to a point.

    The terminal response rho solves phi''(rho) + (5 + 16/alpha) phi''(2 rho) = 0;
    s* is the corresponding load over the path scale.  May exceed 1.
    """
    C = 5.0 + 16.0 / alpha
    g = lambda rho: phi_derivs(p, rho, 2) + C * phi_derivs(p, 2.0 * rho, 2)
    dg = lambda rho: phi_derivs(p, rho, 3) + 2.0 * C * phi_derivs(p, 2.0 * rho, 3)
    rho = bracketed_root(g, prof.a0, prof.r_star, df=dg, abs_tol=1e-13)
    return float(chain_tension(p, rho)) / scale


def _travel_tables(p, prof, path, kappa_panels, k2_panels):
    """Response grid, speed grid, cumulative-travel interpolant, and the
    interpolation curvature constant for the path (shared machinery)."""
    if path.tension(1.0) >= prof.phi_max:
        raise LoadLimitError(
            f"path endpoint load {path.tension(1.0):.6g} reaches the load limit")
    s_nodes = np.linspace(0.0, 1.0, kappa_panels + 1)
    r_nodes = _response_grid(p, prof, path.scale * s_nodes)
    k_nodes = path.scale / chain_tension(p, r_nodes, 1)
    kappa_interp = PchipInterpolator(s_nodes, _cumulative_simpson(k_nodes, s_nodes))

    s2 = np.linspace(0.0, 1.0, k2_panels + 1)
    r2 = _response_grid(p, prof, path.scale * s2)
    h = s2[1] - s2[0]
    curv = np.abs(r2[2:] - 2.0 * r2[1:-1] + r2[:-2]) / h**2
    k2 = 1.1 * float(np.max(curv)) / 2.0
    return s_nodes, r_nodes, k_nodes, kappa_interp, k2


@dataclass(frozen=True)
class GrowthBounds:
    """Response-travel bounds of a load path: kappa(s), k(s), and the
    interpolation curvature constant k2."""

    kappa: object
    k: object
    k2: float


def growth_bounds(p: PairPotential, prof: PotentialProfile,
                  path: LoadPath = LoadPath(), kappa_panels: int = 8192,
                  k2_panels: int = 4096) -> GrowthBounds:
    """Travel bounds of the uniform response along a tension path.

    k(s) = scale / (phi''(r(s)) + 4 phi''(2 r(s))) by implicit
    differentiation of the response equation; kappa accumulates it by
    composite Simpson quadrature; k2 comes from second differences of the
    response grid with a 1.1 safety factor.
    """
    _, _, _, kappa_interp, k2 = _travel_tables(p, prof, path, kappa_panels, k2_panels)

    def speed(s: float) -> float:
        return path.scale / float(chain_tension(p, uniform_response(p, prof, path.tension(s)), 1))

    return GrowthBounds(kappa=lambda s: float(kappa_interp(s)), k=speed, k2=k2)


class QcContractionProfile:
    """Response and window profile of the tension path for one rate alpha.

    kappa is accumulated by composite Simpson quadrature of k(s) on a fixed
    node grid (monotone C^1 interpolation between nodes); delta is an exact
    scalar solve per call; k2 bounds half the response curvature from second
    differences on a finer grid, with a 1.1 safety factor.  The default
    panel count keeps the quadrature error of kappa(1) below 1e-8 even
    though k steepens sharply toward the load limit.
    """

    def __init__(self, p: PairPotential, prof: PotentialProfile, alpha: float,
                 path: LoadPath = LoadPath(), kappa_panels: int = 8192, k2_panels: int = 4096):
        self.potential = p
        self.landmarks = prof
        self.alpha = float(alpha)
        self.path = path
        self.terminal_s = terminal_load_fraction(p, prof, alpha, path.scale)

        s_nodes, r_nodes, k_nodes, kappa_interp, k2 = _travel_tables(
            p, prof, path, kappa_panels, k2_panels)
        self._r_interp = PchipInterpolator(s_nodes, r_nodes)
        self._kappa_interp = kappa_interp
        self._k_max = float(np.max(k_nodes))
        self.k2 = k2

    # -- response and derived quantities -------------------------------
    def r(self, s: float) -> float:
        """Uniform response spacing at load fraction s (s may exceed 1)."""
        load = self.path.tension(s)
        if load >= self.landmarks.phi_max:
            raise LoadLimitError(f"s={s:.6g} is beyond the load limit")
        guess = float(self._r_interp(min(max(s, 0.0), 1.0)))
        r = guess
        for _ in range(100):
            f = chain_tension(self.potential, r) - load
            step = f / chain_tension(self.potential, r, 1)
            r -= step
            if abs(step) <= 1e-15 * max(1.0, r):
                break
        return float(r)

    def k(self, s: float) -> float:
        """Response speed |dr/ds| = scale / (phi''(r) + 4 phi''(2r))."""
        return self.path.scale / float(chain_tension(self.potential, self.r(s), 1))

    def kappa(self, s: float) -> float:
        """Accumulated response travel, integral of k from 0 to s."""
        return float(self._kappa_interp(s))

    def delta(self, s: float) -> float:
        return contraction_radius(self.potential, self.landmarks, self.r(s), self.alpha)

    def window(self, s: float) -> ContractionWindow:
        d = self.delta(s)
        r = self.r(s)
        return ContractionWindow(r_lower=r - d, r_upper=r + d, alpha=self.alpha)

    @property
    def delta_floor(self) -> float:
        """Worst-case (smallest) window half-width on [0, 1]: delta(1)."""
        return self.delta(1.0)

    @property
    def k_max(self) -> float:
        return self._k_max

    @property
    def fracture_spacing(self) -> float:
        return self.landmarks.fracture_spacing


def _cumulative_simpson(f: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Cumulative integral on a uniform grid, Simpson pairs + quadratic ends."""
    h = x[1] - x[0]
    out = np.zeros_like(f)
    # integral over [x_i, x_{i+1}] of the parabola through (i, i+1, i+2)
    fwd = h / 12.0 * (5.0 * f[:-2] + 8.0 * f[1:-1] - f[2:])
    # same over [x_{i+1}, x_{i+2}]
    bwd = h / 12.0 * (-f[:-2] + 8.0 * f[1:-1] + 5.0 * f[2:])
    inc = np.empty(f.size - 1)
    inc[0] = fwd[0]
    inc[1:] = bwd
    out[1:] = np.cumsum(inc)
    return out


@dataclass(frozen=True)
class ConstantProfile:
    """Flat profile (delta, k constant) for planner algebra and tests."""

    delta_const: float
    k_const: float
    alpha: float
    k2: float = 0.0

    def kappa(self, s: float) -> float:
        return self.k_const * float(s)

    def delta(self, s: float) -> float:
        return self.delta_const

    @property
    def delta_floor(self) -> float:
        return self.delta_const

    @property
    def k_max(self) -> float:
        return self.k_const


# ---------------------------------------------------------------------------
# plans
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LoadPlan:
    """Load steps s_0..s_Q, per-step iteration counts, and supersolution."""

    s: np.ndarray          # Q+1 load fractions, s[0] = 0
    P: np.ndarray          # Q iteration counts
    gamma: np.ndarray      # Q+1 supersolution values, gamma[0] = gamma_0
    alpha: float

    def __post_init__(self):
        object.__setattr__(self, "s", np.asarray(self.s, dtype=float))
        object.__setattr__(self, "P", np.asarray(self.P, dtype=int))
        object.__setattr__(self, "gamma", np.asarray(self.gamma, dtype=float))
        if self.s.size != self.P.size + 1 or self.gamma.size != self.s.size:
            raise ValueError("inconsistent plan array lengths")

    @property
    def Q(self) -> int:
        return self.P.size

    @property
    def work(self) -> int:
        return int(np.sum(self.P))

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["q", "s_q", "P_q", "gamma_q"])
            w.writerow([0, repr(float(self.s[0])), 0, repr(float(self.gamma[0]))])
            for q in range(1, self.Q + 1):
                w.writerow([q, repr(float(self.s[q])), int(self.P[q - 1]),
                            repr(float(self.gamma[q]))])

    def to_json(self, path: str | Path, meta: dict | None = None) -> None:
        payload = {
            "alpha": self.alpha,
            "work": self.work,
            "s": [float(v) for v in self.s],
            "P": [int(v) for v in self.P],
            "gamma": [float(v) for v in self.gamma],
        }
        if meta:
            payload["profile"] = meta
        Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True))


def supersolution(s: np.ndarray, P: np.ndarray, alpha: float, gamma0: float, profile) -> np.ndarray:
    """gamma_q = alpha^{P_q} (kappa(s_q) - kappa(s_{q-1}) + gamma_{q-1})."""
    s = np.asarray(s, dtype=float)
    P = np.asarray(P, dtype=int)
    gamma = np.empty(s.size)
    gamma[0] = gamma0
    for q in range(1, s.size):
        travel = profile.kappa(s[q]) - profile.kappa(s[q - 1])
        gamma[q] = alpha ** int(P[q - 1]) * (travel + gamma[q - 1])
    return gamma


def _step_residual(profile, s, s_prev, gamma_prev):
    """kappa(s) - kappa(s_prev) + gamma_prev - delta(s); +inf past the window."""
    try:
        return profile.kappa(s) - profile.kappa(s_prev) + gamma_prev - profile.delta(s)
    except WindowExhaustedError:
        return np.inf


def _solve_step(profile, s_prev: float, gamma_prev: float, s_hi: float = 1.0,
                res_tol: float = 1e-12) -> float:
    """Largest admissible step: root of the boundary equation, capped at s_hi.

    Bisection on (s_prev, s_hi] with residual tolerance res_tol; the left
    end is excluded so steps are positive.
    """
    if _step_residual(profile, s_hi, s_prev, gamma_prev) <= 0.0:
        return s_hi
    a, b = s_prev, s_hi
    for _ in range(200):
        mid = 0.5 * (a + b)
        res = _step_residual(profile, mid, s_prev, gamma_prev)
        if abs(res) <= res_tol and np.isfinite(res):
            return mid
        if res > 0.0:
            b = mid
        else:
            a = mid
        if b - a <= 1e-16:
            break
    return 0.5 * (a + b)


def plan_endpoint(eps: float, alpha: float, gamma0: float, profile,
                  max_steps: int = 100000, h_min: float = 1e-12) -> LoadPlan:
    """Greedy endpoint plan: maximal steps, one iteration each, finish at 1.

    Every step solves the window-boundary equation; the final step keeps
    iterating until the supersolution reaches eps:
    P_Q = ceil((ln eps - ln(kappa(1) - kappa(s_{Q-1}) + gamma_{Q-1})) / ln alpha),
    clamped to at least one iteration.
    """
    if eps <= 0.0:
        raise PlanError("tolerance eps must be positive")
    if not gamma0 < profile.delta(0.0):
        raise PlanError(f"gamma0 = {gamma0:.6g} must be below delta(0)")
    if hasattr(profile, "alpha") and not np.isclose(profile.alpha, alpha):
        raise PlanError(f"profile was built for alpha={profile.alpha}, planner got {alpha}")
    s_list = [0.0]
    P_list: list[int] = []
    gamma_list = [float(gamma0)]
    while s_list[-1] < 1.0:
        if len(P_list) >= max_steps:
            raise StallError(f"planner exceeded {max_steps} steps")
        s_prev, g_prev = s_list[-1], gamma_list[-1]
        s_new = _solve_step(profile, s_prev, g_prev)
        if s_new >= 1.0 - 1e-9:
            s_new = 1.0        # snap roots that land a hair below the end
        if s_new < 1.0 and s_new - s_prev < h_min:
            raise StallError(
                f"window exhausted before the path end: stalled at s = {s_prev:.6f}")
        travel = profile.kappa(s_new) - profile.kappa(s_prev)
        s_list.append(s_new)
        P_list.append(1)
        gamma_list.append(alpha * (travel + g_prev))
    gap = profile.kappa(1.0) - profile.kappa(s_list[-2]) + gamma_list[-2]
    P_final = max(1, math.ceil((math.log(eps) - math.log(gap)) / math.log(alpha)))
    P_list[-1] = P_final
    gamma_list[-1] = alpha ** P_final * gap
    return LoadPlan(s=np.array(s_list), P=np.array(P_list),
                    gamma=np.array(gamma_list), alpha=alpha)


@dataclass(frozen=True)
class AdmissibilityReport:
    admissible: bool
    violation: str = ""
    q: int | None = None


def is_admissible(plan: LoadPlan, eps: float, profile,
                  slack: float = 1e-9) -> AdmissibilityReport:
    """Check ordering, the window constraint at every step, and gamma_Q <= eps.

    The window constraint is closed; ``slack`` absorbs the planner's own
    root-solve residual so boundary-tight plans certify.
    """
    s, P, gamma = plan.s, plan.P, plan.gamma
    if s[0] != 0.0 or s[-1] != 1.0:
        return AdmissibilityReport(False, f"path must run 0..1, got {s[0]}..{s[-1]}", None)
    if np.any(np.diff(s) < 0.0):
        q = int(np.nonzero(np.diff(s) < 0.0)[0][0]) + 1
        return AdmissibilityReport(False, "load steps must be nondecreasing", q)
    if np.any(P < 1):
        q = int(np.nonzero(P < 1)[0][0]) + 1
        return AdmissibilityReport(False, "every step needs at least one iteration", q)
    expected = supersolution(s, P, plan.alpha, float(gamma[0]), profile)
    if not np.allclose(gamma, expected, rtol=1e-9, atol=1e-12):
        return AdmissibilityReport(False, "gamma does not satisfy the recurrence", None)
    for q in range(1, s.size):
        lhs = profile.kappa(s[q]) - profile.kappa(s[q - 1]) + gamma[q - 1]
        try:
            dq = profile.delta(s[q])
        except WindowExhaustedError:
            return AdmissibilityReport(False, f"no window at s_{q} = {s[q]:.6f}", q)
        if lhs > dq + slack:
            return AdmissibilityReport(
                False, f"guess error bound {lhs:.6g} exceeds window {dq:.6g}", q)
    if gamma[-1] > eps + 1e-15:
        return AdmissibilityReport(False, f"gamma_Q = {gamma[-1]:.6g} > eps = {eps:.6g}", plan.Q)
    return AdmissibilityReport(True)


def maximize_steps(plan: LoadPlan, profile) -> LoadPlan:
    """Enlarge every non-final step to the window boundary (or to s = 1).

    Keeps the iteration counts; a left-to-right sweep re-solves the
    boundary equation with the already-enlarged history, which never moves
    a step backwards and never increases the final supersolution.
    """
    alpha = plan.alpha
    s_new = plan.s.copy()
    gamma_new = plan.gamma.copy()
    for q in range(1, plan.Q):        # final step stays pinned at 1
        root = _solve_step(profile, float(s_new[q - 1]), float(gamma_new[q - 1]))
        if root >= 1.0 - 1e-9:
            root = 1.0
        s_new[q] = max(float(plan.s[q]), root)
        travel = profile.kappa(s_new[q]) - profile.kappa(s_new[q - 1])
        gamma_new[q] = alpha ** int(plan.P[q - 1]) * (travel + gamma_new[q - 1])
    travel = profile.kappa(s_new[-1]) - profile.kappa(s_new[-2])
    gamma_new[-1] = alpha ** int(plan.P[-1]) * (travel + gamma_new[-2])
    return LoadPlan(s=s_new, P=plan.P.copy(), gamma=gamma_new, alpha=alpha)


def split_step(plan: LoadPlan, j: int, profile, maximal_tol: float = 1e-7) -> LoadPlan:
    """Split step j (P_j > 1) into two steps of counts (1, P_j - 1).

    The inserted point solves
    kappa(s_j + ds) - kappa(s_j) + alpha delta(s_j) = delta(s_j + ds) with
    0 < ds < s_{j+1} - s_j, which exists when steps up to j are maximal.
    Total work is unchanged and the final supersolution strictly drops.
    """
    if not (1 <= j <= plan.Q - 2):
        raise RewriteInapplicableError(f"need 1 <= j <= Q-2 = {plan.Q - 2}, got j={j}")
    if plan.P[j - 1] <= 1:
        raise RewriteInapplicableError(f"step j={j} has P_j = {plan.P[j - 1]}, nothing to split")
    for q in range(1, j + 1):
        lhs = profile.kappa(plan.s[q]) - profile.kappa(plan.s[q - 1]) + plan.gamma[q - 1]
        if plan.s[q] < 1.0 and abs(lhs - profile.delta(plan.s[q])) > maximal_tol:
            raise RewriteInapplicableError(
                f"step q={q} is not maximal; run maximize_steps first")
    sj, sj1 = float(plan.s[j]), float(plan.s[j + 1])
    alpha = plan.alpha
    base = alpha * profile.delta(sj)          # supersolution after one iteration at s_j

    def res(ds):
        return profile.kappa(sj + ds) - profile.kappa(sj) + base - profile.delta(sj + ds)

    if not (res(0.0) < 0.0 and res(sj1 - sj) > 0.0):
        raise RewriteInapplicableError(
            f"insertion equation has no root in (0, {sj1 - sj:.6g})")
    ds = bracketed_root(res, 0.0, sj1 - sj, abs_tol=1e-12)
    s_new = np.insert(plan.s, j + 1, sj + ds)
    P_new = np.insert(plan.P, j, 1)
    P_new[j] = plan.P[j - 1] - 1              # counts at (s_j, s_j + ds)
    P_new[j - 1] = 1
    gamma_new = supersolution(s_new, P_new, alpha, float(plan.gamma[0]), profile)
    return LoadPlan(s=s_new, P=P_new, gamma=gamma_new, alpha=alpha)


def merge_trailing_steps(plan: LoadPlan, profile) -> LoadPlan:
    """Combine consecutive steps pinned at s = 1 into one (summed counts)."""
    at_end = np.isclose(plan.s[1:], 1.0)
    first = int(np.argmax(at_end)) if at_end.any() else plan.Q - 1
    if first >= plan.Q - 1:
        return plan
    s_new = np.concatenate([plan.s[: first + 1], [1.0]])
    P_new = np.concatenate([plan.P[:first], [int(np.sum(plan.P[first:]))]])
    gamma_new = supersolution(s_new, P_new, plan.alpha, float(plan.gamma[0]), profile)
    return LoadPlan(s=s_new, P=P_new, gamma=gamma_new, alpha=plan.alpha)


@dataclass(frozen=True)
class UniformPlan:
    """Outcome of the uniform-step planner for a path tolerance eps."""

    h_opt: float
    P: int
    Q: int
    plan: LoadPlan

    @property
    def work(self) -> int:
        return self.Q * self.P


def plan_uniform(eps: float, profile) -> UniformPlan:
    """Uniform steps and iteration count for a 2*eps path guarantee.

    Worst-case constants over [0, 1]: delta = min delta(s), k = max k(s),
    and the curvature bound k2.  The step is
    h = min((delta - eps)/k, sqrt(eps/k2)) so initial guesses stay in the
    window and the piecewise-linear interpolant stays within eps; the
    iteration count P = ceil(ln(eps/(eps + k h)) / ln alpha) brings each
    node error below eps.
    """
    if eps <= 0.0:
        raise PlanError("tolerance eps must be positive")
    delta = profile.delta_floor
    if 2.0 * eps > delta:
        raise PlanError(
            f"need 2 eps <= delta: eps = {eps:.6g}, worst-case delta = {delta:.6g}")
    k = profile.k_max
    k2 = profile.k2
    h_window = (delta - eps) / k
    h_opt = h_window if k2 == 0.0 else min(h_window, math.sqrt(eps / k2))
    P = max(1, math.ceil(math.log(eps / (eps + k * h_opt)) / math.log(profile.alpha)))
    Q = max(1, math.ceil(1.0 / h_opt))
    s = np.linspace(0.0, 1.0, Q + 1)
    P_arr = np.full(Q, P, dtype=int)
    gamma = supersolution(s, P_arr, profile.alpha, 0.0, profile)
    return UniformPlan(h_opt=h_opt, P=P, Q=Q,
                       plan=LoadPlan(s=s, P=P_arr, gamma=gamma, alpha=profile.alpha))


# ---------------------------------------------------------------------------
# execution
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExecutedStep:
    q: int
    s: float
    P: int
    gamma: float
    error: float            # ||r_q - r(s_q) e||_inf against the uniform response
    residual: float
    trace: IterationTrace


@dataclass
class RunResult:
    """Executed plan: per-step records and the final state."""

    steps: list[ExecutedStep] = field(default_factory=list)
    final_r: np.ndarray | None = None

    @property
    def errors(self) -> np.ndarray:
        return np.array([st.error for st in self.steps])

    @property
    def gammas(self) -> np.ndarray:
        return np.array([st.gamma for st in self.steps])


def run_plan(mesh: QcMesh, plan: LoadPlan, profile: QcContractionProfile,
             certify: bool = True, inner_tol: float = 1e-12) -> RunResult:
    """Execute a plan: P_q preconditioned iterations per step, zeroth-order
    starts (each step begins from the previous accepted state).

    Each step's window is certified against the hypotheses before iterating
    (certify=False skips that, for deliberately inadmissible experiments).
    Fracture or stalling raises ExecutionAborted with the step index.
    """
    p = profile.potential
    prof = profile.landmarks
    n = mesh.n_elements
    r_cur = np.full(n, prof.a0)          # exact response at s = 0
    result = RunResult()
    for q in range(1, plan.Q + 1):
        s_q = float(plan.s[q])
        Phi = np.full(n, profile.path.tension(s_q))
        try:
            window = profile.window(s_q)
        except WindowExhaustedError as exc:
            raise ExecutionAborted(q, f"no contraction window: {exc}") from exc
        if certify:
            report = check_hypotheses(p, prof, window, Phi)
            if not report.certified:
                raise ExecutionAborted(q, "window hypotheses failed: "
                                       + "; ".join(report.violations))
        trace = solve_at_load(
            mesh, p, r_cur, Phi, steps=int(plan.P[q - 1]), window=window,
            inner_tol=inner_tol, fracture_spacing=prof.fracture_spacing,
        )
        if trace.status != "converged":
            raise ExecutionAborted(q, trace.status, trace)
        r_cur = trace.final_r
        err = float(np.max(np.abs(r_cur - profile.r(s_q))))
        result.steps.append(ExecutedStep(
            q=q, s=s_q, P=int(plan.P[q - 1]), gamma=float(plan.gamma[q]),
            error=err, residual=trace.steps[-1].residual_inf, trace=trace,
        ))
    result.final_r = r_cur
    return result


# ---------------------------------------------------------------------------
# figure-data emitters
# ---------------------------------------------------------------------------

def band_table(profile: QcContractionProfile, points: int = 512) -> np.ndarray:
    """(s, r(s), r - delta, r + delta) rows up to where the window exhausts."""
    limit = profile.landmarks.phi_max / profile.path.scale
    s_end = min(profile.terminal_s * (1.0 - 1e-9), limit * (1.0 - 1e-9))
    rows = np.empty((points, 4))
    for i, s in enumerate(np.linspace(0.0, s_end, points)):
        r = profile.r(s)
        d = contraction_radius(profile.potential, profile.landmarks, r, profile.alpha)
        rows[i] = (s, r, r - d, r + d)
    return rows


def staircase_table(run: RunResult, profile: QcContractionProfile) -> np.ndarray:
    """(s_q, measured error, window radius) rows for an executed plan."""
    rows = np.empty((len(run.steps), 3))
    for i, st in enumerate(run.steps):
        rows[i] = (st.s, st.error, profile.delta(st.s))
    return rows
