"""Pair potentials, the second-neighbor strain-energy density, and landmarks.

The chain interacts through a classical pair potential ``phi(r)`` with a
second-neighbor cutoff, so a uniformly spaced chain at spacing ``r`` stores
``phi(r) + phi(2 r)`` per atom and sustains the tension

    F(r) = phi'(r) + 2 phi'(2 r).

Everything the contraction theory needs about the potential is condensed
into a handful of landmark quantities (:class:`PotentialProfile`):

    a0      equilibrium spacing, root of F
    r1      inflection of phi (root of phi'')
    r2      root of phi'''
    r_star  spacing of maximal tension, root of phi'' (r) + 4 phi''(2 r)
    d_tilde strain at maximal tension, r_star / a0
    phi_max the load limit F(r_star)

Units are nondimensional: the Lennard-Jones well depth and radius are
absorbed into the potential.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from qclab.rootfind import BracketError, bracketed_root, scan_bracket


class ProfileError(RuntimeError):
    """A landmark quantity could not be located; names the failed landmark."""

    def __init__(self, landmark: str, message: str):
        self.landmark = landmark
        super().__init__(f"{landmark}: {message}")


class PairPotential:
    """A C^3 pair law supplying the value and three analytic derivatives."""

    kind: str = "abstract"

    def phi(self, r, order: int = 0):
        raise NotImplementedError


@dataclass(frozen=True)
class LennardJones(PairPotential):
    """phi(r) = r^-12 - 2 r^-6, well depth 1 at r = 1."""

    kind: str = "lennard-jones"

    def phi(self, r, order: int = 0):
        r = np.asarray(r, dtype=float)
        if order == 0:
            out = r**-12 - 2.0 * r**-6
        elif order == 1:
            out = -12.0 * r**-13 + 12.0 * r**-7
        elif order == 2:
            out = 156.0 * r**-14 - 84.0 * r**-8
        elif order == 3:
            out = -2184.0 * r**-15 + 672.0 * r**-9
        else:
            raise ValueError(f"derivative order must be 0..3, got {order}")
        return out if out.ndim else float(out)


@dataclass(frozen=True)
class QuarticBond(PairPotential):
    """Quartic bond law phi(r) = k/2 (r-c)^2 - g/6 (r-c)^3 + h/24 (r-c)^4.

    Test potential: the coefficients control the landmark layout directly,
    so shape-assumption violations can be manufactured.  The defaults give
    a chain whose second-neighbor softening is so strong that the uniform
    chain is unstable at its own equilibrium spacing (D-tilde < 1).  Not
    physical at large r (the quartic grows), irrelevant on sampled grids.
    """

    k: float = 20.0
    g: float = 160.0
    h: float = 320.0
    c: float = 1.0
    kind: str = "quartic-bond"

    def phi(self, r, order: int = 0):
        r = np.asarray(r, dtype=float)
        x = r - self.c
        if order == 0:
            out = self.k / 2 * x**2 - self.g / 6 * x**3 + self.h / 24 * x**4
        elif order == 1:
            out = self.k * x - self.g / 2 * x**2 + self.h / 6 * x**3
        elif order == 2:
            out = self.k - self.g * x + self.h / 2 * x**2
        elif order == 3:
            out = -self.g + self.h * x
        else:
            raise ValueError(f"derivative order must be 0..3, got {order}")
        return out if out.ndim else float(out)


def phi_derivs(p: PairPotential, r, order: int = 0):
    """phi, phi', phi'' or phi''' at spacing r (scalar or array), r > 0."""
    if order not in (0, 1, 2, 3):
        raise ValueError(f"derivative order must be 0..3, got {order}")
    if np.any(np.asarray(r) <= 0.0):
        raise ValueError("pair potential is defined for r > 0 only")
    return p.phi(r, order)


def chain_tension(p: PairPotential, r, order: int = 0):
    """F(r) = phi'(r) + 2 phi'(2r), the uniform-chain tension, and dF/dr.

    order=0 gives F, order=1 gives F' = phi''(r) + 4 phi''(2r).
    """
    if order == 0:
        return phi_derivs(p, r, 1) + 2.0 * phi_derivs(p, 2.0 * np.asarray(r), 1)
    if order == 1:
        return phi_derivs(p, r, 2) + 4.0 * phi_derivs(p, 2.0 * np.asarray(r), 2)
    raise ValueError("chain_tension supports order 0 or 1")


def strain_energy(p: PairPotential, a0: float, D, order: int = 0):
    """Strain-energy density W(D) = (phi(D a0) + phi(2 D a0)) / a0.

    Derivatives are taken in the strain D by the chain rule:
    W'(D) = phi'(D a0) + 2 phi'(2 D a0),
    W''(D) = a0 (phi''(D a0) + 4 phi''(2 D a0)).
    """
    if np.any(np.asarray(D) <= 0.0):
        raise ValueError("strain D must be positive")
    r = np.asarray(D, dtype=float) * a0
    if order == 0:
        return (phi_derivs(p, r, 0) + phi_derivs(p, 2.0 * r, 0)) / a0
    if order == 1:
        return phi_derivs(p, r, 1) + 2.0 * phi_derivs(p, 2.0 * r, 1)
    if order == 2:
        return a0 * (phi_derivs(p, r, 2) + 4.0 * phi_derivs(p, 2.0 * r, 2))
    raise ValueError("strain_energy supports order 0..2")


@dataclass(frozen=True)
class PotentialProfile:
    """Landmark quantities of a pair potential (see module docstring)."""

    a0: float
    r_tilde_1: float
    r_tilde_2: float
    d_tilde: float
    r_star: float
    phi_max: float

    @property
    def fracture_spacing(self) -> float:
        """Spacing beyond which a bond is counted as broken (1.5 r1)."""
        return 1.5 * self.r_tilde_1


def _landmark_root(p, name, f, df, lo, hi, samples=256):
    try:
        a, b = scan_bracket(f, lo, hi, samples)
        return bracketed_root(f, a, b, df=df, abs_tol=1e-12)
    except BracketError as exc:
        raise ProfileError(name, str(exc)) from exc


def compute_profile(p: PairPotential) -> PotentialProfile:
    """Locate a0, r1, r2, r_star and the load limit by bracketed root solves.

    Brackets follow the assumed landmark ordering 0 < a0 < r1 < r2 < 2 a0,
    with a scan-first search so that a potential violating the assumptions
    fails loudly (ProfileError naming the landmark) instead of silently
    returning a wrong root.
    """
    a0 = _landmark_root(
        p, "a0",
        lambda r: chain_tension(p, r),
        lambda r: chain_tension(p, r, 1),
        0.5, 2.0,
    )
    r1 = _landmark_root(
        p, "r_tilde_1",
        lambda r: phi_derivs(p, r, 2),
        lambda r: phi_derivs(p, r, 3),
        a0, 2.0 * a0,
    )
    r2 = _landmark_root(
        p, "r_tilde_2",
        lambda r: phi_derivs(p, r, 3),
        None,
        r1, 2.0 * a0,
    )
    # r_star solves phi''(r) + 4 phi''(2r) = 0, i.e. W''(r/a0) = 0; D-tilde
    # is the same root expressed as a strain, so both come from one solve.
    r_star = _landmark_root(
        p, "r_star",
        lambda r: chain_tension(p, r, 1),
        None,
        0.25 * a0, 2.0 * a0,
    )
    phi_max = float(chain_tension(p, r_star))
    return PotentialProfile(
        a0=a0, r_tilde_1=r1, r_tilde_2=r2,
        d_tilde=r_star / a0, r_star=r_star, phi_max=phi_max,
    )


@dataclass(frozen=True)
class ConditionCheck:
    name: str
    passed: bool
    detail: str = ""


@dataclass(frozen=True)
class AssumptionReport:
    """Outcome of sampling the shape assumptions of a potential."""

    checks: tuple[ConditionCheck, ...] = field(default_factory=tuple)

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failed(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]


def _sign_pattern(f, boundary, lo, hi, n=2048, boundary_tol_scale=1e-9):
    """Check f > 0 on (lo, boundary) and f < 0 on (boundary, hi).

    Values within ``boundary_tol_scale * max|f|`` of zero are treated as
    sitting on the sign boundary and accepted for either side.
    """
    xs = np.linspace(lo, hi, n)
    fs = f(xs)
    atol = boundary_tol_scale * float(np.max(np.abs(fs)))
    below = xs < boundary
    ok_below = np.all(fs[below] > -atol)
    ok_above = np.all(fs[~below] < atol)
    if ok_below and ok_above:
        return True, ""
    bad = xs[below][fs[below] <= -atol] if not ok_below else xs[~below][fs[~below] >= atol]
    return False, f"sign violated near x={bad[0]:.6g}"


def verify_assumptions(p: PairPotential, prof: PotentialProfile) -> AssumptionReport:
    """Sample the six shape assumptions the contraction theory relies on.

    Sign conditions are sampled on dense grids (the left ends stay away from
    the r -> 0 singularity); the two ordering conditions are exact
    comparisons of landmark values.
    """
    checks = []
    a0, r1, r2, dt = prof.a0, prof.r_tilde_1, prof.r_tilde_2, prof.d_tilde

    ok, why = _sign_pattern(lambda r: phi_derivs(p, r, 2), r1, 0.5 * a0, 2.0 * a0)
    checks.append(ConditionCheck("phi'' > 0 below r1, < 0 beyond", ok, why))

    ok, why = _sign_pattern(lambda r: -phi_derivs(p, r, 3), r2, 0.5 * a0, 2.0 * a0)
    checks.append(ConditionCheck("phi''' < 0 below r2, > 0 beyond", ok, why))

    ok, why = _sign_pattern(lambda D: -strain_energy(p, a0, D, 1), 1.0, 0.55, 2.0)
    checks.append(ConditionCheck("W' < 0 below D=1, > 0 beyond", ok, why))

    ok, why = _sign_pattern(lambda D: strain_energy(p, a0, D, 2), dt, 0.55, 2.0)
    checks.append(ConditionCheck("W'' > 0 below D-tilde, < 0 beyond", ok, why))

    order_ok = 0.0 < a0 < r1 < r2 < 2.0 * a0
    checks.append(ConditionCheck(
        "ordering 0 < a0 < r1 < r2 < 2 a0", order_ok,
        "" if order_ok else f"a0={a0:.6g} r1={r1:.6g} r2={r2:.6g}",
    ))

    dt_ok = dt > 1.0
    checks.append(ConditionCheck(
        "D-tilde > 1", dt_ok, "" if dt_ok else f"D-tilde={dt:.6g}",
    ))
    return AssumptionReport(tuple(checks))
