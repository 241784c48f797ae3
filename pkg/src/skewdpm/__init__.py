"""Dirichlet process mixtures of multivariate skew-normal and skew-t distributions."""

__version__ = "0.1.0"

from .exceptions import (ChainFailureError, ComponentCollapseError, ConfigError,
                         ConstraintError, CorruptResultsError, DataFormatError,
                         DegenerateSampleError, DegenerateSliceError, FcsFormatError,
                         NotPositiveDefiniteError, NumericalDomainError, NumericalError,
                         ParseError, SkewDPMError, UndefinedMetricError,
                         UnsupportedFeatureError)
from .linalg import SpdMatrix
from .distributions import (SkewNormalCanonical, SkewNormalParams, SkewTParams,
                            convert_canonical_to_re, convert_re_to_canonical, make_rng,
                            sn_logpdf, st_logpdf)
from .model import (BaseMeasure, ClusterParams, ConcentrationPrior, DataMatrix, NuPrior,
                    SNiWParams, default_hyperparams, expected_num_clusters)
from .sampler import ChainConfig, ChainState, PosteriorDraws, run_chain
from .sequential import (MapPriorConfig, build_informative_prior, em_sniw, fit_gamma_mle,
                         mle_niw, mle_sniw)
from .partition import (binder_point_estimate, f_measure_total, f_point_estimate,
                        limited_f_measure, similarity_matrix)
from .diagnostics import gelman_rubin, iterations_to_convergence
from .simulate import four_cluster_scenario, simulate_mixture
from .dataio import (ResultBundle, TransformSpec, inverse_transform, read_csv,
                     read_results, transform, write_results)
from .fcs import read_fcs

__all__ = [name for name in dir() if not name.startswith("_")]
