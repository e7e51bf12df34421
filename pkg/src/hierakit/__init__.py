"""Spectral toolkit for BBGKY and Gross-Pitaevskii hierarchies on the torus."""
from .collision import (CosineBumpProfile, GaussianProfile, GridProfile, Potential, bbgky_b,
                        bbgky_b_error, bbgky_b_main, gp_b, gp_b_full, gp_b_minus, gp_b_plus,
                        make_potential)
from .convergence import (ConvergenceReport, nls_reference_solve, run_bbgky_vs_gp,
                          run_derivation_experiment)
from .errors import (DegenerateInputError, HierakitError, InvalidConfigurationError,
                     InvalidInputError, InvalidParameterError, NonContractiveError, ResourceError,
                     UnderResolvedPotentialError, UnsupportedDepthError)
from .estimates import (bbgky_error_scaling, estimate_J_constant, potential_difference_rate,
                        strichartz_ratio)
from .marginals import (Marginal, MarginalSequence, Trajectory, calh_xi_norm, factorized_marginal,
                        h_alpha_norm, k_schedule, partial_trace, spacetime_norm, truncate)
from .nbody import (WaveFunction, marginal_from_wavefunction, nbody_energy, schrodinger_evolve,
                    symmetrize_wavefunction)
from .solver import (HierarchyProblem, count_duhamel_summands, duhamel_series_solve, duhamel_term,
                     hierarchy_residual, picard_solve)
from .spectral import (BracketTable, TorusGrid, fourier_forward, fourier_inverse, free_propagate)

__version__ = "0.1.0"
