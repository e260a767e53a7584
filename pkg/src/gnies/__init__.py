"""Greedy search for interventional equivalence classes of linear Gaussian SCMs
under noise interventions with unknown targets."""

from ._backend import BACKEND
from .exceptions import (
    DimensionMismatch,
    EnumerationOverflow,
    GniesError,
    InvalidClassRepresentation,
    NoConsistentExtension,
    NonConvergenceWarning,
    PreconditionViolated,
    SingularSystem,
)
from .graphs import (
    Dag,
    GraphClass,
    Pdag,
    dag_to_cpdag,
    dag_to_icpdag,
    enumerate_all_dags,
    enumerate_class,
    gnies_completion,
    meek_closure,
    pdag_to_dag,
)
from .metrics import MetricReport, tdp_fdp, varsortability
from .scm import GenParams, ScmModel, entailed_covariance, random_scm, sample
from .score import LocalKey, ScoreCache, SufficientStats, full_score, local_score, sufficient_stats
from .search import SearchError, SearchResult, gnies_fit, inner_fit, pool_stats

__version__ = "0.1.0"
