"""Numerical toolkit for 2x2 canonical systems ``J u' = z H u``."""

from .analysis import (
    IntervalSet, HerglotzSample, harmonic_measure, hyperbolic_distance, quadrature_nodes,
    value_distribution_integral, boundary_m, reflectionless_defect, bp_discrepancy,
    weyl_separation_bound, ac_support_estimate, omega_limit_probe,
)
from .errors import (
    CanonicalSystemError, ValidationError, DomainError, PoleError, ReductionError,
    NonContractionError, ConvergenceError,
)
from .hamiltonian import (
    PSDMatrix2, HamiltonianCell, HalfLineHamiltonian, WholeLineHamiltonian, TestFamily,
    evaluate_at, normalize_trace, shift_by, functions_equal, metric_distance,
)
from .reductions import (
    SchrodingerProblem, DiracPotential, JacobiProblem, schrodinger_to_canonical, dirac_to_canonical,
    jacobi_to_canonical, jacobi_reduction, m_relation_report,
)
from .solver import TransferMatrix, transfer, wronskian, energy_integrals, greens_identity_residual, picard_solve
from .weyl import (
    WeylDisk, MValue, BoundaryCondition, disk_at, m_on_interval, m_halfline, m_halfline_batch,
    mobius_change_alpha, translate_m, classify_limit_type,
)

__version__ = "0.1.0"
