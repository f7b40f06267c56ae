"""Dirichlet-process mixtures of exponential random graph models.

Fits ensembles of networks with two samplers that share one scan: one uses
auxiliary graph simulation and importance-sampled normalizing-constant
ratios, the other replaces the likelihood by the pseudo-likelihood. Exact
enumeration of tiny graphs is included for checking both.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    CapacityError,
    ConfigError,
    DomainError,
    DpmErgmError,
    ParseError,
    SpecError,
    StructuralError,
)
from .graph import Covariates, Ensemble, Graph, load_ensemble, save_ensemble, toggle_edge  # noqa: E402
from .stats import ModelSpec, StatTerm, change_stats, compute_stats  # noqa: E402
from .simulate import SimConfig, exact_distribution, simulate_ergm  # noqa: E402
from .ratio import RatioConfig, estimate_ratio, make_path, sweep_estimator  # noqa: E402
from .dpm import DpmConfig, run_iims  # noqa: E402
from .pseudo import log_pl, run_pms  # noqa: E402
from .assess import adjusted_rand_index, posterior_predictive, summarize_trace  # noqa: E402
from .synth import MixtureSpec, generate  # noqa: E402
