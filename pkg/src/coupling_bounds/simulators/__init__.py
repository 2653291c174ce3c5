"""Monte Carlo process engines with explicit couplings.

Three families: convex-potential diffusions under the shared-noise
(synchronous) coupling, lattice random walks under the coordinatewise
independent-until-meeting coupling, and the symmetric exclusion process on a
torus driven by its graphical representation, including the coin-flip coupled
pair construction for neighbor-swap initial conditions.
"""

from coupling_bounds.simulators.diffusion import (
    DiffusionCoupledResult,
    DiffusionSpec,
    ou_integral_variance,
    ou_logmgf_bound,
    ou_occupation_samples,
    simulate_diffusion_coupled,
)
from coupling_bounds.simulators.random_walk import (
    OrnsteinResult,
    ornstein_pair_occupation,
    ornstein_tau_batch,
    simulate_rw_ornstein,
)
from coupling_bounds.simulators.sep import (
    CoupledSepResult,
    SepConfig,
    SepResult,
    VarianceCurve,
    coupled_discrepancy_profile,
    local_function,
    occupation_set,
    occupation_variance_curve,
    simulate_sep,
    simulate_sep_coupled,
)

__all__ = [
    "DiffusionCoupledResult",
    "DiffusionSpec",
    "ou_integral_variance",
    "ou_logmgf_bound",
    "ou_occupation_samples",
    "simulate_diffusion_coupled",
    "OrnsteinResult",
    "ornstein_pair_occupation",
    "ornstein_tau_batch",
    "simulate_rw_ornstein",
    "CoupledSepResult",
    "SepConfig",
    "SepResult",
    "VarianceCurve",
    "coupled_discrepancy_profile",
    "local_function",
    "occupation_set",
    "occupation_variance_curve",
    "simulate_sep",
    "simulate_sep_coupled",
]
