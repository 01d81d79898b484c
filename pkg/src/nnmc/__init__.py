"""Neural-network operators and parallel Markov-chain retrieval for raster fields."""

from .errors import NnmcError
from .inversion import build_grid_matrix, invert_direct, invert_iterative, roundtrip_error
from .lattice import LatticeState, PairPotential, gibbs_measure_exact, local_field, pca_stationary_exact
from .operators import BoxDomain, GridFunction, OperatorConfig, build_index_set, operator_eval, rescale_raster
from .raster_io import RasterField, band_stats, clip_percentile, load_raster, normalize_minmax, save_raster
from .retrieval import map_estimate, retrieve_ft, threshold_classify
from .samplers import gibbs_step, metropolis_step, pca_step, run_chain, tv_distance
from .sigmoid import SigmoidSpec, phi_eval, psi_eval, sigma_eval

__version__ = "0.1.0"
