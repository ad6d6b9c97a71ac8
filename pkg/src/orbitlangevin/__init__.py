"""Langevin dynamics with noise projected relative to an isometric group action."""

from .actions import (GroupAction, GroupElement, ProjectionPair, apply_element,
                      group_tangent_frame, haar_matrices, haar_sample, make_action,
                      orbit_tangent_frame, retract_to_group)
from .config import ExperimentConfig, parse_config
from .errors import (ConfigError, NonFinite, NonRetractable, NotTangent,
                     OrbitLangevinError, QuadratureFailure, RankDeficient,
                     SingularOrbit, StepRejected)
from .geometry import (CouplingOperators, CurvatureData, coupling_operators,
                       grad_log_orbit_volume, hessian_identity_residual,
                       log_orbit_volume, mean_curvature,
                       second_fundamental_form_group, second_fundamental_form_orbit)
from .sde import (PotentialSpec, SdeSystem, StationaryProfile, TrajectoryBatch,
                  integrate, integrate_batch, integrate_refined_pair,
                  make_auxiliary_system, make_coupled_system,
                  make_fully_projected_system, make_isotropic_curvature_system,
                  make_orbit_bm_system, make_potential_spec, make_projected_system,
                  radial_oracle_system, sample_invariant_initial,
                  stationary_potential_spec)
from .stats import (EquivalenceReport, StationaryCheck, energy_distance,
                    invariance_test, ks_two_sample, permutation_test,
                    plateau_reference, stationary_check, stationary_reference)

__version__ = "0.1.0"
