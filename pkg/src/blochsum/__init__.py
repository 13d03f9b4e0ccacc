"""Numerical experiments on momentum matrix elements of periodic Schrödinger operators."""
from .decay import commutator_norm, decay_exponent_fit, ratio_stabilization, theorem1_ratio
from .delta import delta_levels, delta_pi, delta_sumrule_divergence, holder_fit, riemann_partial_sum
from .fiber import assemble_fiber, band_structure, solve_fiber
from .model import (
    ContourSpec,
    FourierPotential,
    KGrid,
    PlaneWaveBasis,
    PotentialSpec,
    build_basis,
    build_potential,
    sample_brillouin,
)
from .momentum import feynman_hellmann_check, momentum_matrix, supnorm_growth
from .perturb import feshbach_eigenvalue, fd_second_derivative, kp_second_derivative, nested_sum_apatra2
from .sumrule import oscillation_series, sumrule_lhs, sumrule_rhs_partial
from .trace import (
    FermiDirac,
    compare_traces,
    contour_integral_quadrature,
    divided_difference,
    fd_divided_difference,
    residue_value,
    trace_oracle_direct,
    trace_per_unit_volume,
)

__version__ = "0.1.0"
