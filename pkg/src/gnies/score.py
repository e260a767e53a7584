"""Penalized multi-environment Gaussian likelihood score.

For node ``i`` with parents ``S`` the local log-likelihood is

    -1/2 sum_e n_e [ln 2pi + ln w_e + q_e(b) / w_e],
    q_e(b) = (e_i - b)' Sigma^e (e_i - b),

maximised over coefficients ``b`` supported on ``S`` shared by all
environments, and variances ``w_e`` that are shared unless ``i`` is an
intervention target. The penalty is ``lambda`` times the number of free
parameters ``|S| + max(|E| * [i in I], 1)``.
"""

import math
import threading
import warnings
from dataclasses import dataclass

import numpy as np

from . import _backend
from .exceptions import NonConvergenceWarning, SingularSystem

LOG_2PI = math.log(2 * math.pi)
REL_TOL = 1e-8
MAX_ITER = 200
FLOOR_SCALE = 1e-10


@dataclass(frozen=True, eq=False)
class SufficientStats:
    """Per-environment MLE covariances ``sigmas[e]`` and sample counts ``ns[e]``."""

    sigmas: np.ndarray
    ns: np.ndarray

    def __post_init__(self):
        sigmas = np.array(self.sigmas, dtype=float)
        ns = np.array(self.ns, dtype=np.int64).reshape(-1)
        if sigmas.ndim != 3 or sigmas.shape[1] != sigmas.shape[2]:
            raise ValueError("sigmas must have shape (n_envs, p, p)")
        if sigmas.shape[0] != ns.shape[0] or ns.shape[0] == 0:
            raise ValueError("need one sample count per environment")
        if np.any(ns < 1):
            raise ValueError("sample counts must be positive")
        sigmas.setflags(write=False)
        ns.setflags(write=False)
        object.__setattr__(self, "sigmas", sigmas)
        object.__setattr__(self, "ns", ns)
        pooled = np.einsum("e,eij->ij", ns / ns.sum(), sigmas)
        floor = FLOOR_SCALE * np.trace(pooled) / sigmas.shape[1]
        object.__setattr__(self, "variance_floor", max(floor, np.finfo(float).tiny))
        object.__setattr__(self, "_nsf", ns.astype(float))

    @property
    def p(self):
        return self.sigmas.shape[1]

    @property
    def n_envs(self):
        return self.sigmas.shape[0]

    @property
    def N(self):
        return int(self.ns.sum())

    def bic_lambda(self):
        return 0.5 * math.log(self.N)

    def to_json(self):
        return {"sigmas": self.sigmas.tolist(), "ns": self.ns.tolist()}

    @classmethod
    def from_json(cls, obj):
        return cls(obj["sigmas"], obj["ns"])


def sufficient_stats(datasets):
    """Center each environment's ``n_e x p`` matrix and take ``X'X / n_e``."""
    datasets = [np.asarray(X, dtype=float) for X in datasets]
    if not datasets:
        raise ValueError("no environments given")
    p = datasets[0].shape[1] if datasets[0].ndim == 2 else None
    sigmas, ns = [], []
    for X in datasets:
        if X.ndim != 2 or X.shape[1] != p:
            raise ValueError("every environment needs the same number of columns")
        if X.shape[0] < 2:
            raise ValueError("every environment needs at least two rows")
        Xc = X - X.mean(axis=0)
        sigmas.append(Xc.T @ Xc / X.shape[0])
        ns.append(X.shape[0])
    return SufficientStats(np.array(sigmas), np.array(ns))


@dataclass(frozen=True, order=True)
class LocalKey:
    node: int
    parents: tuple
    intervened: bool

    def __post_init__(self):
        parents = tuple(sorted(int(j) for j in self.parents))
        if self.node in parents:
            raise ValueError("a node cannot be its own parent")
        object.__setattr__(self, "node", int(self.node))
        object.__setattr__(self, "parents", parents)
        object.__setattr__(self, "intervened", bool(self.intervened))


@dataclass(frozen=True)
class ScoreValue:
    loglik: float
    dof: int
    penalized: float

    def __add__(self, other):
        return ScoreValue(self.loglik + other.loglik, self.dof + other.dof,
                          self.penalized + other.penalized)


ZERO = ScoreValue(0.0, 0, 0.0)


@dataclass(frozen=True)
class MleResult:
    b: np.ndarray
    omega: np.ndarray
    iterations: int
    converged: bool
    floored: bool = False
    history: tuple = ()


def _blocks(key, stats):
    S = list(key.parents)
    i = key.node
    sig = stats.sigmas
    return sig[:, S][:, :, S], sig[:, S, i], sig[:, i, i]


def local_mle(key, stats, rel_tol=REL_TOL, max_iter=MAX_ITER):
    """Maximum-likelihood coefficients and noise variance(s) for one node.

    Non-targets get the closed-form pooled fit with a single variance.
    Targets alternate between weighted least squares for ``b`` and
    per-environment variances; with one environment both coincide. The
    profiled likelihood of a target need not be concave, so the alternation
    starts from the pooled fit and from every single-environment fit, and
    the best end point wins (earliest start on ties).
    """
    sss, ssi, sii = _blocks(key, stats)
    ns = stats._nsf
    floor = stats.variance_floor
    if key.intervened and stats.n_envs > 1:
        b, om, it, conv, hist = _multistart(sss, ssi, sii, ns, rel_tol, max_iter, floor)
        if not conv:
            warnings.warn(f"alternating MLE hit {max_iter} iterations for {key}",
                          NonConvergenceWarning, stacklevel=2)
        q = _residuals(sss, ssi, sii, b)
        return MleResult(b, om, it, conv, bool(np.any(q < floor)), tuple(hist))
    if sss.shape[1]:
        b = _backend.solve_spd(np.einsum("e,eij->ij", ns, sss), ns @ ssi)
    else:
        b = np.zeros(0)
    q = _residuals(sss, ssi, sii, b)
    w = float(ns @ q) / float(ns.sum())
    floored = w < floor
    return MleResult(b, np.array([max(w, floor)]), 0, True, floored)


def _multistart(sss, ssi, sii, ns, rel_tol, max_iter, floor):
    best = _backend.alternating_mle(sss, ssi, sii, ns, rel_tol, max_iter, floor)
    if sss.shape[1] == 0:
        return best
    for e in range(len(ns)):
        w0 = np.zeros_like(ns)
        w0[e] = ns[e]
        try:
            run = _backend.alternating_mle(sss, ssi, sii, ns, rel_tol, max_iter, floor, w0)
        except SingularSystem:
            continue  # this environment alone cannot identify b
        if run[4][-1] < best[4][-1]:
            best = run
    return best


def _residuals(sss, ssi, sii, b):
    if b.shape[0] == 0:
        return np.array(sii, dtype=float)
    return sii - 2.0 * (ssi @ b) + np.einsum("i,eij,j->e", b, sss, b)


def local_dof(key, n_envs):
    return len(key.parents) + max(n_envs * int(key.intervened), 1)


def local_loglik(key, stats):
    """Maximised log-likelihood of node ``key.node`` (nats)."""
    mle = local_mle(key, stats)
    sss, ssi, sii = _blocks(key, stats)
    q = _residuals(sss, ssi, sii, mle.b)
    ns = stats._nsf
    om = np.broadcast_to(mle.omega, q.shape)
    return float(-0.5 * np.sum(ns * (LOG_2PI + np.log(om) + q / om)))


class ScoreCache:
    """Thread-safe map from LocalKey to unpenalized local scores.

    Stored values carry ``loglik`` and ``dof`` with ``penalized == loglik``;
    the penalty is applied by the caller, so one cache serves every lambda.
    """

    def __init__(self):
        self._data = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def get(self, key):
        v = self._data.get(key)
        if v is None:
            self.misses += 1
        else:
            self.hits += 1
        return v

    def put(self, key, value):
        with self._lock:
            self._data.setdefault(key, value)

    def invalidate_node(self, node):
        """Drop every entry for ``node``; returns how many were removed."""
        with self._lock:
            stale = [k for k in self._data if k.node == node]
            for k in stale:
                del self._data[k]
        return len(stale)

    def __len__(self):
        return len(self._data)

    def __contains__(self, key):
        return key in self._data


def score_cache():
    return ScoreCache()


def _raw_local(key, stats, cache):
    if cache is not None:
        v = cache.get(key)
        if v is not None:
            return v
    ll = local_loglik(key, stats)
    v = ScoreValue(ll, local_dof(key, stats.n_envs), ll)
    if cache is not None:
        cache.put(key, v)
    return v


def local_score(key, stats, lam, cache=None):
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    raw = _raw_local(key, stats, cache)
    return ScoreValue(raw.loglik, raw.dof, raw.loglik - lam * raw.dof)


def full_score(d, I, stats, lam, cache=None):
    """Sum of local scores of DAG ``d`` with targets ``I``."""
    if d.p != stats.p:
        raise ValueError(f"graph has {d.p} nodes but data has {stats.p} variables")
    I = frozenset(I)
    total = ZERO
    for i in range(d.p):
        total = total + local_score(LocalKey(i, tuple(d.parents(i)), i in I), stats, lam, cache)
    return total


def total_dof(d, I, n_envs):
    """Free-parameter count: edges + p + |I| (|E| - 1)."""
    return d.n_edges + d.p + len(frozenset(I)) * (n_envs - 1)
