"""Simulation and analysis of the Winfree mean-field oscillator model."""

__version__ = "0.1.0"

from .integrator import IntegratorConfig, Trajectory, integrate, integrate_until_mean
from .locking import LockedSolution, extract_psi, find_locked_solution, poincare_map
from .model import (
    EnsembleParams,
    EnsembleState,
    ModelSpec,
    make_frequencies,
    make_initial_conditions,
    vector_field,
)
from .observables import mean_dispersion, order_d, order_r, sync_verdict
from .theory import (
    DispersionCurve,
    DomainCertificate,
    TheoryConstants,
    alpha_term,
    beta_kappa,
    capacity_D,
    certify_domain,
    gain_L,
    h_integral,
    in_invariant_set,
    kappa_star,
    periodic_affine_solution,
)
