"""CP decomposition of covariance and general tensors.

Composite PCA (CPCA) gives a spectral starting point, and iterative concurrent
orthogonalization (ICO) refines it. Tensors are numpy arrays linearized with
the first index varying fastest, and modes are numbered from 0.
"""
__version__ = "0.1.0"

from .baselines import ALSConfig, als_fit, als_randomized, hosvd_init
from .bench import ExperimentConfig, run_experiment
from .coherence import (CoherenceReport, MatchResult, RateBundle, coherence_report,
                        eigengaps, gamma_root, iteration_bound, match_components,
                        sin_theta, snr_and_rates)
from .cp_model import (CPDecomposition, SampleBatch, compose, covariance_tensor,
                       data_matrix, gen_basis, gen_noisy_cp, gen_spiked_samples,
                       make_rng, random_cp)
from .cpca import cpca_general, cpca_symmetric, cpca_symmetric_from_data
from .ico import (FitTrace, ICOConfig, ico_general, ico_symmetric,
                  ico_symmetric_from_data, one_step_update)
from .propcheck import CheckReport, run_check
from .tensor_core import fold, khatri_rao, read_tensor, unfold, unfold_group, write_tensor
