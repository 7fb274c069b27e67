"""One-dimensional quasicontinuum laboratory.

Solves the force-based quasicontinuum (QCF) equilibrium equations of a
second-neighbor pair-potential chain by a fixed-point iteration
preconditioned with the energy-based quasicontinuum (QCE) model, certifies
convergence through explicit contraction windows, and plans load-stepping
(continuation) schedules that are provably admissible.
"""

from qclab.potential import (
    LennardJones,
    PairPotential,
    PotentialProfile,
    compute_profile,
    phi_derivs,
    strain_energy,
    verify_assumptions,
)
from qclab.chain import AtomChain, atomistic_energy, atomistic_forces, atomistic_solve, tension_load
from qclab.qc import QcMesh, RepState
from qclab.solver import ContractionWindow, IterationTrace, contraction_constant, solve_at_load
from qclab.continuation import (
    ConstantProfile,
    LoadPath,
    LoadPlan,
    QcContractionProfile,
    plan_endpoint,
    plan_uniform,
    run_plan,
)

__version__ = "0.1.0"
