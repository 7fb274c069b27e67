"""Quasicontinuum formulations over a representative-atom mesh.

A mesh selects representative atoms (repatoms) j = -N..N+1 at reference
lattice indices ell_j, with ell_{-N} = -M and ell_{N+1} = M+1.  Element j
joins repatoms j and j+1, contains nu_j = ell_{j+1} - ell_j atoms, and
carries the deformed spacing r_j = (z_{j+1} - z_j) / nu_j.  Repatoms
-K+1..K are atomistic; the remainder are continuum, and nu = 1 is enforced
on elements -K-1..K+1 so atomistic forces need no interpolation.

Five formulations coexist here:

  CQC   the constrained model, exact atomistic energy of interpolated
        positions (conservative, consistent, expensive);
  local pure continuum, bulk strain energy only;
  QCF   force-based mixing of atomistic and local forces per repatom
        (consistent, not conservative);
  QCE   energy-based mixing with per-repatom energies (conservative, has
        ghost forces at the interface) -- the preconditioner;
  the conjugate-stress forms of QCF/QCE on element spacings, in which the
  preconditioned iteration is formulated and analyzed.

The QCE energy is assembled from an explicit bond table (built once per
mesh), and its spacing-conjugate stress and Jacobian are derived from that
same table, so interface cases are never transcribed by hand.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from qclab.chain import pair_energy, pair_forces
from qclab.potential import PairPotential, phi_derivs, strain_energy


@dataclass(frozen=True, eq=False)
class QcMesh:
    """Representative-atom layout over the reference lattice x_i = i * a0."""

    M: int
    N: int
    K: int
    ell: np.ndarray          # reference indices of repatoms, signed j = -N..N+1
    a0: float

    def __post_init__(self):
        ell = np.asarray(self.ell, dtype=int)
        object.__setattr__(self, "ell", ell)
        if not (self.N >= 1 and 0 <= self.K <= self.N - 1):
            raise ValueError(f"need 1 <= N and 0 <= K <= N-1, got N={self.N} K={self.K}")
        if ell.shape != (2 * self.N + 2,):
            raise ValueError(f"need {2 * self.N + 2} repatom indices, got {ell.shape}")
        if ell[0] != -self.M or ell[-1] != self.M + 1:
            raise ValueError("repatoms must span ell_{-N} = -M .. ell_{N+1} = M+1")
        if np.any(np.diff(ell) < 1):
            raise ValueError("repatom indices must be strictly increasing")
        lo, hi = max(-self.K - 1, -self.N), min(self.K + 1, self.N)
        if np.any(self.nu[self.eidx(lo):self.eidx(hi) + 1] != 1):
            raise ValueError("elements -K-1..K+1 must contain a single atom (nu = 1)")

    # ---- indexing helpers (signed index -> array index) ----
    def ridx(self, j: int) -> int:
        """Array index of repatom j in -N..N+1."""
        return j + self.N

    def eidx(self, j: int) -> int:
        """Array index of element j in -N..N."""
        return j + self.N

    @cached_property
    def nu(self) -> np.ndarray:
        """Atoms per element, signed j = -N..N."""
        return np.diff(self.ell)

    @cached_property
    def x(self) -> np.ndarray:
        """Reference positions of all atoms i = -M..M+1."""
        return np.arange(-self.M, self.M + 2) * self.a0

    @cached_property
    def element_lengths(self) -> np.ndarray:
        """Reference element lengths L_j = nu_j * a0."""
        return self.nu * self.a0

    @property
    def n_elements(self) -> int:
        return 2 * self.N + 1

    @cached_property
    def atomistic_repatoms(self) -> np.ndarray:
        """Boolean mask over repatom force indices j = -N..N (True = atomistic)."""
        j = np.arange(-self.N, self.N + 1)
        return (j >= -self.K + 1) & (j <= self.K)

    @cached_property
    def atom_element(self) -> np.ndarray:
        """Element index (array form) containing each atom i = -M..M+1."""
        e = np.searchsorted(self.ell, np.arange(-self.M, self.M + 2), side="right") - 1
        return np.minimum(e, self.n_elements - 1)   # atom M+1 assigned to last element

    @classmethod
    def uncoarsened(cls, M: int, K: int, a0: float) -> "QcMesh":
        """Every atom a repatom: N = M, nu = 1 throughout."""
        return cls(M=M, N=M, K=K, ell=np.arange(-M, M + 2), a0=a0)

    @classmethod
    def graded(cls, M: int, N: int, K: int, a0: float) -> "QcMesh":
        """Symmetric mesh: single atoms through the interface zone, the
        remaining atoms spread as evenly as possible over the outer
        continuum elements (coarsest at the chain ends)."""
        if M < N:
            raise ValueError(f"need M >= N, got M={M} N={N}")
        if M == N:
            return cls.uncoarsened(M, K, a0)
        outer = N - K - 1
        if outer < 1:
            raise ValueError(f"cannot coarsen with K={K}, N={N}: no outer continuum elements")
        atoms, slots = M - K - 1, outer
        base, extra = divmod(atoms, slots)
        left = np.full(outer, base)
        left[:extra] += 1                   # coarsest elements at the chain end
        nu = np.concatenate([left, np.ones(2 * K + 3, dtype=int), left[::-1]])
        return cls.from_nu(nu, K, a0)

    @classmethod
    def from_nu(cls, nu, K: int, a0: float) -> "QcMesh":
        """Mesh from an element-occupancy pattern nu_j, signed j = -N..N."""
        nu = np.asarray(nu, dtype=int)
        if nu.size % 2 == 0:
            raise ValueError("nu must have odd length 2N+1")
        total = int(np.sum(nu))
        if total % 2 == 0:
            raise ValueError("sum(nu) must be odd so that M is an integer")
        N = (nu.size - 1) // 2
        M = (total - 1) // 2
        ell = np.concatenate(([-M], -M + np.cumsum(nu)))
        return cls(M=M, N=N, K=K, ell=ell, a0=a0)

    # QCE bond table: per bond a coefficient c and an argument m1*r[i1] (+ m2*r[i2]),
    # so that E^QCE = sum_b c_b phi(arg_b).  Built once, reused by energy,
    # stress, and Jacobian assembly.
    @cached_property
    def _qce_bonds(self):
        coeff, i1, m1, i2, m2 = [], [], [], [], []

        def bond(c, a, ma, b=None, mb=0):
            coeff.append(c)
            i1.append(self.eidx(a))
            m1.append(ma)
            i2.append(self.eidx(b) if b is not None else 0)
            m2.append(mb)

        cont = [j for j in range(-self.N, -self.K + 1)] + \
               [j for j in range(self.K + 1, self.N + 2)]
        for j in cont:
            for e in (j - 1, j):
                if -self.N <= e <= self.N:
                    ne = float(self.nu[self.eidx(e)])
                    bond(0.5 * ne, e, 1)          # nu_e/2 * phi(r_e)
                    bond(0.5 * ne, e, 2)          # nu_e/2 * phi(2 r_e)
        for j in range(-self.K + 1, self.K + 1):  # atomistic repatoms
            bond(0.5, j, 1)                       # phi(r_j)/2
            bond(0.5, j, 1, j + 1, 1)             # phi(r_j + r_{j+1})/2
            bond(0.5, j - 1, 1)                   # phi(r_{j-1})/2
            bond(0.5, j - 1, 1, j - 2, 1)         # phi(r_{j-1} + r_{j-2})/2
        return (np.asarray(coeff), np.asarray(i1), np.asarray(m1, dtype=float),
                np.asarray(i2), np.asarray(m2, dtype=float))


@dataclass(frozen=True)
class RepState:
    """Repatom positions z (right end fixed) over a mesh."""

    mesh: QcMesh
    z: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        object.__setattr__(self, "z", z)
        if z.shape != (2 * self.mesh.N + 2,):
            raise ValueError(f"need {2 * self.mesh.N + 2} repatom positions, got {z.shape}")
        if np.any(self.r <= 0.0):
            raise ValueError("element spacings must be positive")

    @cached_property
    def r(self) -> np.ndarray:
        """Deformed lattice spacing per element, r_j = (z_{j+1} - z_j)/nu_j."""
        return np.diff(self.z) / self.mesh.nu

    @property
    def strains(self) -> np.ndarray:
        """Deformation gradients D_j = r_j / a0."""
        return self.r / self.mesh.a0

    @classmethod
    def from_spacings(cls, mesh: QcMesh, r, z_end: float | None = None) -> "RepState":
        """Rebuild positions from element spacings and the fixed right end."""
        r = np.asarray(r, dtype=float)
        if z_end is None:
            z_end = (mesh.M + 1) * mesh.a0
        gaps = mesh.nu * r
        z = np.empty(r.size + 1)
        z[-1] = z_end
        z[:-1] = z_end - np.cumsum(gaps[::-1])[::-1]
        return cls(mesh=mesh, z=z)

    @classmethod
    def uniform(cls, mesh: QcMesh, spacing: float) -> "RepState":
        return cls.from_spacings(mesh, np.full(mesh.n_elements, float(spacing)))


# ---------------------------------------------------------------------------
# constrained (CQC) model
# ---------------------------------------------------------------------------

def interpolate(m: QcMesh, st: RepState) -> np.ndarray:
    """All atom positions from repatom positions via the mesh hat functions.

    Within element e the interpolant is linear in the reference index, so
    atom ell_e + t sits at z_e + t * r_e.
    """
    e = m.atom_element
    i = np.arange(-m.M, m.M + 2)
    t = i - m.ell[e]
    return st.z[e] + t * st.r[e]


def _hat_weights(m: QcMesh):
    """Per-atom accumulation targets and hat weights for i = -M..M."""
    e = m.atom_element[:-1]
    i = np.arange(-m.M, m.M + 1)
    t = (i - m.ell[e]) / m.nu[e]
    return e, t


def cqc_energy(m: QcMesh, st: RepState, p: PairPotential) -> float:
    """Exact atomistic energy of the interpolated positions."""
    return pair_energy(p, interpolate(m, st))


def cqc_forces(m: QcMesh, st: RepState, p: PairPotential) -> np.ndarray:
    """Conjugate force on repatoms j = -N..N: hat-weighted atomistic forces."""
    Fa = pair_forces(p, interpolate(m, st))
    e, t = _hat_weights(m)
    F = np.zeros(2 * m.N + 2)
    np.add.at(F, e, (1.0 - t) * Fa)
    np.add.at(F, e + 1, t * Fa)
    return F[:-1]                  # z_{N+1} is constrained


def conjugate_external(m: QcMesh, dead_loads: np.ndarray) -> np.ndarray:
    """Dead loads made conjugate to the repatoms with the same hat weights."""
    f = np.asarray(dead_loads, dtype=float)
    if f.shape != (2 * m.M + 1,):
        raise ValueError(f"need {2 * m.M + 1} dead loads, got {f.shape}")
    e, t = _hat_weights(m)
    out = np.zeros(2 * m.N + 2)
    np.add.at(out, e, (1.0 - t) * f)
    np.add.at(out, e + 1, t * f)
    return out[:-1]


@dataclass(frozen=True)
class EnergySplit:
    """CQC energy split into bulk, chain-end surface, and interface parts."""

    bulk: float
    surface: float
    interface: float

    @property
    def total(self) -> float:
        return self.bulk + self.surface + self.interface


def energy_decomposition(m: QcMesh, st: RepState, p: PairPotential) -> EnergySplit:
    """Split the constrained energy exactly into bulk + surface + interface.

    bulk      sum_j L_j W(D_j)
    surface   -phi(2 r_{-N})/2 - phi(2 r_N)/2
    interface sum_j [-phi(2 r_{j-1})/2 + phi(r_{j-1} + r_j) - phi(2 r_j)/2],

    a second divided difference per interior mesh node, which vanishes for
    uniform strain.  The three parts sum to cqc_energy to round-off.
    """
    r = st.r
    W = strain_energy(p, m.a0, st.strains, 0)
    bulk = float(np.sum(m.element_lengths * W))
    half2 = 0.5 * phi_derivs(p, 2.0 * r, 0)
    surface = float(-half2[0] - half2[-1])
    interface = float(np.sum(-half2[:-1] + phi_derivs(p, r[:-1] + r[1:], 0) - half2[1:]))
    return EnergySplit(bulk=bulk, surface=surface, interface=interface)


# ---------------------------------------------------------------------------
# local (continuum-only) model
# ---------------------------------------------------------------------------

def local_energy(m: QcMesh, r: np.ndarray, p: PairPotential) -> float:
    """Bulk strain energy sum_j L_j W(D_j) of spacings r."""
    W = strain_energy(p, m.a0, np.asarray(r) / m.a0, 0)
    return float(np.sum(m.element_lengths * W))


def local_forces(m: QcMesh, r: np.ndarray, p: PairPotential) -> np.ndarray:
    """F^L_j = W'(D_j) - W'(D_{j-1}) on j = -N..N (W' = 0 left of the mesh)."""
    w = strain_energy(p, m.a0, np.asarray(r) / m.a0, 1)
    F = np.empty_like(w)
    F[0] = w[0]
    F[1:] = w[1:] - w[:-1]
    return F


# ---------------------------------------------------------------------------
# force-based (QCF) model
# ---------------------------------------------------------------------------

def qcf_forces(m: QcMesh, r: np.ndarray, p: PairPotential) -> np.ndarray:
    """Per-repatom forces, atomistic formula on -K+1..K, local elsewhere."""
    r = np.asarray(r, dtype=float)
    F = local_forces(m, r, p)
    lo, hi = m.eidx(-m.K + 1), m.eidx(m.K)      # atomistic repatom rows
    if hi >= lo:
        j = np.arange(lo, hi + 1)
        d = lambda rr: phi_derivs(p, rr, 1)
        F[j] = (d(r[j]) + d(r[j] + r[j + 1])) - (d(r[j - 1]) + d(r[j - 1] + r[j - 2]))
    return F


def qcf_stress_from_forces(m: QcMesh, r: np.ndarray, p: PairPotential) -> np.ndarray:
    """Spacing-conjugate QCF stress as partial sums -sum_{i<=j} F^QCF_i."""
    return -np.cumsum(qcf_forces(m, r, p))


def qcf_stress(m: QcMesh, r: np.ndarray, p: PairPotential) -> np.ndarray:
    """Spacing-conjugate QCF stress in closed form.

    -psi_j is the local stress w_j = phi'(r_j) + 2 phi'(2 r_j) in the
    continuum, the atomistic bond stress plus the left-interface mismatch
    I_{-K} in the atomistic region, and w_j + I_{-K} - I_K beyond the right
    interface, with I_j = 2 phi'(2 r_j) - phi'(r_j + r_{j-1}) - phi'(r_j + r_{j+1}).
    """
    r = np.asarray(r, dtype=float)
    d = lambda rr: phi_derivs(p, rr, 1)
    w = d(r) + 2.0 * d(2.0 * r)
    minus_psi = w.copy()

    def mismatch(j):
        e = m.eidx(j)
        return 2.0 * d(2.0 * r[e]) - d(r[e] + r[e - 1]) - d(r[e] + r[e + 1])

    I_left, I_right = mismatch(-m.K), mismatch(m.K)
    lo, hi = m.eidx(-m.K + 1), m.eidx(m.K)
    if hi >= lo:
        j = np.arange(lo, hi + 1)
        minus_psi[j] = d(r[j]) + d(r[j] + r[j - 1]) + d(r[j] + r[j + 1]) + I_left
    minus_psi[hi + 1:] = w[hi + 1:] + I_left - I_right
    return -minus_psi


# ---------------------------------------------------------------------------
# energy-based (QCE) model: the preconditioner
# ---------------------------------------------------------------------------

def qce_energy(m: QcMesh, r: np.ndarray, p: PairPotential) -> float:
    """Partitioned quasicontinuum energy from the mesh bond table."""
    coeff, i1, m1, i2, m2 = m._qce_bonds
    r = np.asarray(r, dtype=float)
    args = m1 * r[i1] + m2 * r[i2]
    return float(np.sum(coeff * phi_derivs(p, args, 0)))


def qce_stress(m: QcMesh, r: np.ndarray, p: PairPotential) -> np.ndarray:
    """psi^QCE_j = -(1/nu_j) dE^QCE/dr_j, assembled from the bond table."""
    coeff, i1, m1, i2, m2 = m._qce_bonds
    r = np.asarray(r, dtype=float)
    dphi = phi_derivs(p, m1 * r[i1] + m2 * r[i2], 1)
    g = np.zeros(m.n_elements)
    np.add.at(g, i1, coeff * m1 * dphi)
    np.add.at(g, i2, coeff * m2 * dphi)
    return -g / m.nu


def qce_stress_jacobian(m: QcMesh, r: np.ndarray, p: PairPotential) -> np.ndarray:
    """Tridiagonal d psi^QCE / dr in LAPACK (1,1) banded form.

    Every bond couples at most two consecutive elements, so the spacing
    Hessian of E^QCE is tridiagonal; rows are scaled by -1/nu_j.
    """
    coeff, i1, m1, i2, m2 = m._qce_bonds
    r = np.asarray(r, dtype=float)
    ddphi = phi_derivs(p, m1 * r[i1] + m2 * r[i2], 2)
    n = m.n_elements
    diag = np.zeros(n)
    upper = np.zeros(n)   # H[j, j+1] stored at j
    lower = np.zeros(n)   # H[j+1, j] stored at j
    np.add.at(diag, i1, coeff * m1 * m1 * ddphi)
    np.add.at(diag, i2, coeff * m2 * m2 * ddphi)
    cross = coeff * m1 * m2 * ddphi
    lo = np.minimum(i1, i2)
    pair = m2 != 0.0
    np.add.at(upper, lo[pair], cross[pair])
    np.add.at(lower, lo[pair], cross[pair])
    scale = -1.0 / m.nu
    ab = np.zeros((3, n))
    ab[0, 1:] = upper[:-1] * scale[:-1]        # J[j, j+1]
    ab[1, :] = diag * scale
    ab[2, :-1] = lower[:-1] * scale[1:]        # J[j+1, j]
    return ab


def qce_forces(m: QcMesh, r: np.ndarray, p: PairPotential) -> np.ndarray:
    """Position-conjugate QCE forces via F_j = -psi_j + psi_{j-1}."""
    psi = qce_stress(m, r, p)
    F = np.empty_like(psi)
    F[0] = -psi[0]
    F[1:] = -psi[1:] + psi[:-1]
    return F


def ghost_stress(m: QcMesh, r: np.ndarray, p: PairPotential) -> np.ndarray:
    """Ghost correction psi^G = psi^QCF - psi^QCE (interface-supported)."""
    return qcf_stress(m, r, p) - qce_stress(m, r, p)


def conjugate_load(f: np.ndarray) -> np.ndarray:
    """Loads conjugate to element spacings: Phi_j = -sum_{i<=j} f_i."""
    return -np.cumsum(np.asarray(f, dtype=float))


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def serialize_state(m: QcMesh, st: RepState) -> str:
    """Line-oriented text form: header M N K a0, repatom indices, positions.

    Floats are written with repr so parsing reproduces them bit-exactly.
    """
    buf = io.StringIO()
    buf.write(f"{m.M} {m.N} {m.K} {m.a0!r}\n")
    buf.write(" ".join(str(int(v)) for v in m.ell) + "\n")
    buf.write(" ".join(repr(float(v)) for v in st.z) + "\n")
    return buf.getvalue()


def parse_state(text: str) -> tuple[QcMesh, RepState]:
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    if len(lines) != 3:
        raise ValueError("expected 3 lines: header, repatom indices, positions")
    M, N, K, a0 = lines[0].split()
    mesh = QcMesh(M=int(M), N=int(N), K=int(K),
                  ell=np.array([int(v) for v in lines[1].split()]), a0=float(a0))
    state = RepState(mesh=mesh, z=np.array([float(v) for v in lines[2].split()]))
    return mesh, state
