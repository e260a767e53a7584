"""Linear Gaussian SCMs with noise or hard interventions.

The model is ``X^e = B X^e + eps^e`` with ``eps^e ~ N(0, diag(omegas[e]))``;
``B[i, j]`` is the weight of the edge ``j -> i``. Hard-intervened targets of an
environment have their row of ``B`` zeroed in that environment only.
"""

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .graphs import Dag, GraphClass, as_targets, enumerate_all_dags

ORACLE_TOL = 1e-7


@dataclass(frozen=True, eq=False)
class ScmModel:
    B: np.ndarray
    omegas: np.ndarray
    hard_targets: tuple = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        B = np.array(self.B, dtype=float)
        omegas = np.atleast_2d(np.array(self.omegas, dtype=float))
        p = B.shape[0]
        if B.shape != (p, p):
            raise ValueError("B must be square")
        if omegas.shape[1] != p or omegas.shape[0] < 1:
            raise ValueError("omegas must be a non-empty list of length-p vectors")
        if not np.all(omegas > 0):
            raise ValueError("noise variances must be strictly positive")
        if np.any(np.diag(B) != 0):
            raise ValueError("B must have a zero diagonal")
        Dag.from_weights(B)  # raises on cycles
        hard = tuple(tuple(sorted(int(i) for i in h)) for h in self.hard_targets)
        if not hard:
            hard = tuple(() for _ in range(omegas.shape[0]))
        if len(hard) != omegas.shape[0]:
            raise ValueError("need one hard-target list per environment")
        B.setflags(write=False)
        omegas.setflags(write=False)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "omegas", omegas)
        object.__setattr__(self, "hard_targets", hard)

    @property
    def p(self):
        return self.B.shape[0]

    @property
    def n_envs(self):
        return self.omegas.shape[0]

    @property
    def dag(self):
        return Dag.from_weights(self.B)

    def weights(self, e):
        """Connectivity matrix in force in environment ``e``."""
        self._check_env(e)
        if not self.hard_targets[e]:
            return self.B
        B = self.B.copy()
        B[list(self.hard_targets[e]), :] = 0.0
        return B

    def _check_env(self, e):
        if not 0 <= e < self.n_envs:
            raise IndexError(f"environment {e} out of range (have {self.n_envs})")

    def to_json(self):
        return {
            "B": self.B.tolist(),
            "omegas": self.omegas.tolist(),
            "hard_targets": [list(h) for h in self.hard_targets],
            "meta": self.meta,
        }

    @classmethod
    def from_json(cls, obj):
        return cls(obj["B"], obj["omegas"], tuple(obj.get("hard_targets", ())),
                   dict(obj.get("meta", {})))


@dataclass(frozen=True)
class GenParams:
    p: int = 10
    avg_degree: float = 2.7
    weight_range: tuple = (0.5, 1.0)
    variance_range: tuple = (1.0, 2.0)
    intervention_variance_range: tuple = (5.0, 10.0)
    n_envs: int = 5
    intervention_kind: str = "noise"
    seed: int = 0

    def __post_init__(self):
        if self.p < 2:
            raise ValueError("p must be at least 2")
        if self.n_envs < 1:
            raise ValueError("need at least one environment")
        if self.n_envs > self.p:
            raise ValueError("each interventional environment needs a distinct target")
        for name in ("weight_range", "variance_range", "intervention_variance_range"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ValueError(f"{name} must be ordered")
        if self.variance_range[0] <= 0 or self.intervention_variance_range[0] <= 0:
            raise ValueError("variances must be positive")
        if not 0 <= self.avg_degree <= self.p - 1:
            raise ValueError("avg_degree must lie in [0, p-1]")
        if self.intervention_kind not in ("noise", "hard"):
            raise ValueError("intervention_kind must be 'noise' or 'hard'")


def entailed_covariance(m, e):
    """Sigma^e = (I - B^e)^{-1} Omega^e (I - B^e)^{-T}."""
    B = m.weights(e)
    W = np.linalg.inv(np.eye(m.p) - B)
    S = W @ np.diag(m.omegas[e]) @ W.T
    return (S + S.T) / 2


def sample(m, e, n, seed):
    """``n`` i.i.d. rows from environment ``e`` (numpy PCG64 seeded by ``seed``)."""
    if n < 1:
        raise ValueError("n must be positive")
    B = m.weights(e)
    rng = np.random.default_rng(seed)
    eps = rng.standard_normal((n, m.p)) * np.sqrt(m.omegas[e])
    return np.linalg.solve(np.eye(m.p) - B, eps.T).T


def random_scm(gp):
    """Random ER model per ``gp``.

    Returns ``(model, targets, env_targets)``: environment 0 is observational
    and environment k >= 1 intervenes on ``env_targets[k]`` alone.
    """
    rng = np.random.default_rng(gp.seed)
    p = gp.p
    order = rng.permutation(p)
    prob = gp.avg_degree / (p - 1)
    B = np.zeros((p, p))
    for a, b in combinations(range(p), 2):
        if rng.uniform() < prob:
            B[order[b], order[a]] = rng.uniform(*gp.weight_range)
    base = rng.uniform(*gp.variance_range, size=p)
    targets = rng.choice(p, size=gp.n_envs - 1, replace=False)
    omegas = [base.copy()]
    env_targets = [()]
    for t in targets:
        om = base.copy()
        om[t] = rng.uniform(*gp.intervention_variance_range)
        omegas.append(om)
        env_targets.append((int(t),))
    hard = env_targets if gp.intervention_kind == "hard" else ()
    meta = {"order": order.tolist(), "seed": gp.seed, "kind": gp.intervention_kind}
    m = ScmModel(B, np.array(omegas), tuple(hard), meta)
    return m, frozenset(int(t) for t in targets), env_targets


def intervention_targets(m):
    """Variables whose stored noise variance differs between some two environments."""
    om = m.omegas
    return frozenset(int(j) for j in range(m.p) if np.any(om[:, j] != om[0, j]))


def check_intervention_heterogeneity(m, rtol=1e-12):
    """True iff changed variances change by pairwise distinct factors in every env pair."""
    om = m.omegas
    for e, f in combinations(range(m.n_envs), 2):
        changed = [j for j in range(m.p) if om[e, j] != om[f, j]]
        ratios = [om[e, j] / om[f, j] for j in changed]
        for r, s in combinations(ratios, 2):
            if abs(r - s) <= rtol * max(abs(r), abs(s)):
                return False
    return True


def _population_fit(d, sigmas):
    """Regress each node on its ``d``-parents under every covariance.

    Returns per-environment coefficient matrices and noise variances.
    """
    p = d.p
    Bs, Os = [], []
    for S in sigmas:
        Bt = np.zeros((p, p))
        om = np.empty(p)
        for i in range(p):
            pa = sorted(d.parents(i))
            if pa:
                b = np.linalg.solve(S[np.ix_(pa, pa)], S[pa, i])
                Bt[i, pa] = b
                om[i] = S[i, i] - S[i, pa] @ b
            else:
                om[i] = S[i, i]
        Bs.append(Bt)
        Os.append(om)
    return Bs, Os


def _equivalent_members(m, tol):
    if m.p > 5:
        raise ValueError("exhaustive oracle supports p <= 5")
    sigmas = [entailed_covariance(m, e) for e in range(m.n_envs)]
    out = []
    for d in enumerate_all_dags(m.p):
        try:
            Bs, Os = _population_fit(d, sigmas)
        except np.linalg.LinAlgError as exc:
            raise ArithmeticError("singular covariance submatrix") from exc
        ok = all(np.max(np.abs(Bt - Bs[0])) <= tol for Bt in Bs[1:])
        if ok:
            for Bt, om, S in zip(Bs, Os, sigmas):
                if np.any(om <= 0):
                    ok = False
                    break
                W = np.linalg.inv(np.eye(m.p) - Bt)
                if np.max(np.abs(W @ np.diag(om) @ W.T - S)) > tol:
                    ok = False
                    break
        if ok:
            out.append((d, Bs[0]))
    return out


def equivalent_graphs_oracle(m, tol=ORACLE_TOL):
    """Brute-force set of DAGs supporting a distribution-equivalent model."""
    return GraphClass(d for d, _ in _equivalent_members(m, tol))


def sparsest(cls):
    k = min(d.n_edges for d in cls.members)
    return GraphClass(d for d in cls.members if d.n_edges == k)


def check_model_truthfulness(m, tol=ORACLE_TOL):
    """Every equivalent model's (I - B~)(I - B)^{-1} has diagonal entries above ``tol``."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    Winv = np.linalg.inv(np.eye(m.p) - m.B)
    for _, Bt in _equivalent_members(m, tol):
        M = (np.eye(m.p) - Bt) @ Winv
        if np.any(np.abs(np.diag(M)) <= tol):
            return False
    return True


def min_partial_correlation(m, e=0, zero_tol=1e-9):
    """Smallest nonzero |partial correlation| of any pair given any conditioning set.

    Entries at or below ``zero_tol`` count as exact zeros (d-separations). A
    model is delta-strongly faithful in environment ``e`` iff the result is at
    least delta. Exhaustive over conditioning sets, so meant for small ``p``.
    """
    S = entailed_covariance(m, e)
    best = math.inf
    for i, j in combinations(range(m.p), 2):
        rest = [k for k in range(m.p) if k not in (i, j)]
        for r in range(len(rest) + 1):
            for C in combinations(rest, r):
                idx = [i, j, *C]
                P = np.linalg.inv(S[np.ix_(idx, idx)])
                pc = abs(P[0, 1]) / math.sqrt(P[0, 0] * P[1, 1])
                if pc > zero_tol:
                    best = min(best, pc)
    return best


def hard_family(env_targets):
    """Target family of a set of environments (one member per environment)."""
    return [as_targets(t) for t in env_targets]
