"""Greedy search over I-equivalence classes and over intervention targets.

The inner procedure is GES run on I-CPDAGs: insert operators in a forward
phase, delete operators in a backward phase and edge reversals in a turning
phase, each step followed by the completion to the I-CPDAG. The outer procedure searches over target sets, scoring each
candidate set by the inner procedure.
"""

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import chain, combinations

import numpy as np

from .exceptions import GniesError
from .graphs import Dag, Pdag, as_targets, gnies_completion, pdag_to_dag, topological_order
from .score import (
    LocalKey,
    ScoreCache,
    SufficientStats,
    full_score,
    local_mle,
    local_score,
)

logger = logging.getLogger(__name__)

REL_IMPROVEMENT = 1e-9


@dataclass(frozen=True, order=True)
class InsertOp:
    x: int
    y: int
    T: tuple = ()

    @property
    def kind(self):
        return "insert"


@dataclass(frozen=True, order=True)
class DeleteOp:
    x: int
    y: int
    H: tuple = ()

    @property
    def kind(self):
        return "delete"


@dataclass
class SearchResult:
    icpdag: Pdag
    targets: frozenset
    score: object
    lam: float
    method: str = "inner"
    trace: list = field(default_factory=list)

    def to_json(self):
        return {
            "icpdag": self.icpdag.to_json(),
            "targets": sorted(self.targets),
            "score": self.score.penalized,
            "loglik": self.score.loglik,
            "dof": self.score.dof,
            "lambda": self.lam,
            "method": self.method,
            "trace": self.trace,
        }


class SearchError(GniesError):
    pass


def _subsets(items):
    items = sorted(items)
    return chain.from_iterable(combinations(items, r) for r in range(len(items) + 1))


def _is_clique(c, nodes):
    return all(c.is_adjacent(a, b) for a, b in combinations(nodes, 2))


def _na(c, y, x):
    """Undirected neighbours of y that are adjacent to x."""
    return c.neighbors(y) & c.adjacent(x)


def _semi_directed_path(c, src, dst, blocked):
    """Is there a path src ... dst following undirected or forward-directed edges
    that avoids ``blocked``?"""
    seen = {src}
    stack = [src]
    while stack:
        u = stack.pop()
        for v in chain(c.children(u), c.neighbors(u)):
            if v == dst:
                return True
            if v not in seen and v not in blocked:
                seen.add(v)
                stack.append(v)
    return False


def valid_inserts(c):
    """All valid Insert(x, y, T) on ``c`` in lexicographic order."""
    ops = []
    p = c.p
    for x in range(p):
        adj_x = c.adjacent(x)
        for y in range(p):
            if x == y or y in adj_x:
                continue
            na = _na(c, y, x)
            t0 = c.neighbors(y) - adj_x
            for T in _subsets(t0):
                block = na | set(T)
                if not _is_clique(c, block):
                    continue
                if _semi_directed_path(c, y, x, block):
                    continue
                ops.append(InsertOp(x, y, T))
    return ops


def valid_deletes(c):
    """All valid Delete(x, y, H) on ``c`` in lexicographic order."""
    ops = []
    p = c.p
    for x in range(p):
        for y in range(p):
            if x == y:
                continue
            if not (y in c.children(x) or y in c.neighbors(x)):
                continue
            na = _na(c, y, x)
            for H in _subsets(na):
                if _is_clique(c, na - set(H)):
                    ops.append(DeleteOp(x, y, H))
    return ops


def apply_insert(c, op):
    """Add x -> y and orient t -> y for t in T; the result is not completed."""
    if c.is_adjacent(op.x, op.y) or not set(op.T) <= c.neighbors(op.y):
        raise ValueError(f"invalid operator {op} for this graph")
    A = np.array(c.amat)
    A[op.x, op.y] = 1
    for t in op.T:
        A[op.y, t] = 0
    return Pdag.from_amat(A)


def apply_delete(c, op):
    """Remove the x, y edge and orient y -> h, and any undirected x - h as x -> h."""
    if not (op.y in c.children(op.x) or op.y in c.neighbors(op.x)):
        raise ValueError(f"invalid operator {op} for this graph")
    if not set(op.H) <= _na(c, op.y, op.x):
        raise ValueError(f"invalid operator {op} for this graph")
    A = np.array(c.amat)
    A[op.x, op.y] = A[op.y, op.x] = 0
    for h in op.H:
        A[h, op.y] = 0
        if A[op.x, h] and A[h, op.x]:
            A[h, op.x] = 0
    return Pdag.from_amat(A)


def insert_parent_sets(c, op):
    """(old, new) parent sets of y implied by Insert(x, y, T)."""
    old = c.parents(op.y) | _na(c, op.y, op.x) | set(op.T)
    return old, old | {op.x}


def delete_parent_sets(c, op):
    """(old, new) parent sets of y implied by Delete(x, y, H)."""
    new = (c.parents(op.y) | _na(c, op.y, op.x)) - set(op.H) - {op.x}
    return new | {op.x}, new


@dataclass(frozen=True, order=True)
class TurnOp:
    """Reverse x -> y (in the class's representative DAG) into y -> x."""

    x: int
    y: int

    @property
    def kind(self):
        return "turn"


def valid_turns(c):
    """Edge reversals of the representative extension that keep it acyclic."""
    d = pdag_to_dag(c)
    ops = []
    for x, y in d.directed:
        A = np.array(d.amat)
        A[x, y], A[y, x] = 0, 1
        if topological_order(A) is not None:
            ops.append(TurnOp(x, y))
    return ops


def apply_turn(c, op):
    d = pdag_to_dag(c)
    A = np.array(d.amat)
    if not A[op.x, op.y]:
        raise ValueError(f"invalid operator {op} for this graph")
    A[op.x, op.y], A[op.y, op.x] = 0, 1
    return Dag.from_amat(A)


def turn_score_delta(op, c, I, stats, lam, cache=None):
    d = pdag_to_dag(c)
    I = frozenset(I)
    px, py = d.parents(op.x), d.parents(op.y)
    return (_delta(op.x, px, px | {op.y}, I, stats, lam, cache)
            + _delta(op.y, py, py - {op.x}, I, stats, lam, cache))


def _delta(y, old, new, I, stats, lam, cache):
    iv = y in I
    after = local_score(LocalKey(y, tuple(new), iv), stats, lam, cache)
    before = local_score(LocalKey(y, tuple(old), iv), stats, lam, cache)
    return after.penalized - before.penalized


def insert_score_delta(op, c, I, stats, lam, cache=None):
    old, new = insert_parent_sets(c, op)
    return _delta(op.y, old, new, frozenset(I), stats, lam, cache)


def delete_score_delta(op, c, I, stats, lam, cache=None):
    old, new = delete_parent_sets(c, op)
    return _delta(op.y, old, new, frozenset(I), stats, lam, cache)


def _improves(delta, score):
    return delta > REL_IMPROVEMENT * max(1.0, abs(score))


def _class_score(c, I, stats, lam, cache):
    return full_score(pdag_to_dag(c), I, stats, lam, cache)


PHASES = {}
# turning reverses single edges that the completion locked at target nodes;
# forward/backward alone cannot undo such an orientation
DEFAULT_PHASES = ("forward", "backward", "turning")


def inner_fit(stats, I=(), lam=None, cache=None, start=None, max_steps=None,
              phases=DEFAULT_PHASES, iterate=True):
    """Greedy search over I-equivalence classes for fixed targets.

    Runs the given phases in order, each until no operator improves the
    score; with ``iterate`` the sequence repeats while any phase made a
    step. ``phases=("forward", "backward"), iterate=False`` is plain GES.
    Starts from the empty graph unless ``start`` (an I-CPDAG) is given.
    """
    unknown = set(phases) - set(PHASES)
    if unknown:
        raise ValueError(f"unknown phases {sorted(unknown)}")
    p = stats.p
    I = as_targets(I, p)
    lam = stats.bic_lambda() if lam is None else lam
    c = Pdag(p) if start is None else start
    score = _class_score(c, I, stats, lam, cache)
    cap = 10 * p * p if max_steps is None else max_steps
    trace = []
    steps = 0
    while True:
      improved = False
      for phase in phases:
        gen, apply, delta_fn = PHASES[phase]
        while True:
            best, best_delta = None, -math.inf
            for op in gen(c):
                d = delta_fn(op, c, I, stats, lam, cache)
                if d > best_delta:
                    best, best_delta = op, d
            if best is None or not _improves(best_delta, score.penalized):
                break
            steps += 1
            if steps > cap:
                raise SearchError(f"inner search exceeded {cap} steps")
            c = gnies_completion(apply(c, best), I)
            new_score = _class_score(c, I, stats, lam, cache)
            trace.append({
                "phase": phase,
                "op": best.kind,
                "x": best.x,
                "y": best.y,
                "set": list(getattr(best, "T", getattr(best, "H", ()))),
                "delta": best_delta,
                "score": new_score.penalized,
            })
            score = new_score
            improved = True
      if not (iterate and improved):
        break
    return SearchResult(c, I, score, lam, "inner", trace)


PHASES.update({
    "forward": (valid_inserts, apply_insert, insert_score_delta),
    "backward": (valid_deletes, apply_delete, delete_score_delta),
    "turning": (valid_turns, apply_turn, turn_score_delta),
})


def pool_stats(stats):
    """Collapse all environments into one (means were removed per environment)."""
    ns = stats.ns
    pooled = np.einsum("e,eij->ij", ns / ns.sum(), stats.sigmas)
    return SufficientStats(pooled[None], np.array([ns.sum()]))


def noise_variance_ranking(stats, lam=None, cache=None, descending=True,
                           phases=DEFAULT_PHASES, iterate=True):
    """Order variables by the spread of their per-environment noise variances.

    Fits the inner procedure with every variable a target, then ranks nodes by
    the population variance over environments of their fitted noise variances.
    Returns ``(order, statistic)``.
    """
    res = inner_fit(stats, range(stats.p), lam, cache, phases=phases, iterate=iterate)
    d = pdag_to_dag(res.icpdag)
    stat = np.empty(stats.p)
    for i in range(stats.p):
        mle = local_mle(LocalKey(i, tuple(d.parents(i)), True), stats)
        stat[i] = np.var(mle.omega)
    order = sorted(range(stats.p), key=lambda i: (-stat[i] if descending else stat[i], i))
    return order, stat


def _threads(threads):
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get("GNIES_THREADS")
    return max(1, int(env)) if env else 1


class _Scorer:
    """Memoised S(I) = inner_fit score, optionally evaluated in a thread pool."""

    def __init__(self, stats, lam, cache, threads, phases, iterate):
        self.stats, self.lam, self.cache = stats, lam, cache
        self.results = {}
        self.threads = threads
        self.opts = {"phases": phases, "iterate": iterate}

    def _run(self, I):
        return inner_fit(self.stats, I, self.lam, self.cache, **self.opts)

    def fit(self, I):
        I = frozenset(I)
        if I not in self.results:
            self.results[I] = self._run(I)
        return self.results[I]

    def score(self, I):
        return self.fit(I).score.penalized

    def many(self, sets):
        sets = [frozenset(s) for s in sets]
        todo = [s for s in dict.fromkeys(sets) if s not in self.results]
        if self.threads > 1 and len(todo) > 1:
            with ThreadPoolExecutor(self.threads) as pool:
                fits = list(pool.map(self._run, todo))
            self.results.update(zip(todo, fits))
        return [self.score(s) for s in sets]


def gnies_fit(stats, lam=None, method="greedy", known_targets=(), cache=None,
              threads=None, max_targets=None, rank_descending=True,
              phases=DEFAULT_PHASES, iterate=True):
    """Estimate targets and the I-CPDAG with unknown intervention targets.

    ``method="greedy"`` adds then removes the single target that most
    improves the score; ``method="rank"`` tries targets in the order given by
    :func:`noise_variance_ranking`. Targets in ``known_targets`` are never
    removed. With a single environment no target is identifiable and the
    result uses ``known_targets`` as is.
    """
    if method not in ("greedy", "rank"):
        raise ValueError("method must be 'greedy' or 'rank'")
    p = stats.p
    lam = stats.bic_lambda() if lam is None else lam
    known = as_targets(known_targets, p)
    cache = ScoreCache() if cache is None else cache
    max_targets = p if max_targets is None else max_targets
    scorer = _Scorer(stats, lam, cache, _threads(threads), phases, iterate)
    current = known
    s_curr = scorer.score(current)
    outer = []

    def accept(phase, j, s_next):
        nonlocal s_curr
        outer.append({"phase": phase, "target": j, "score": s_next})
        logger.debug("%s target %d: %.6f -> %.6f", phase, j, s_curr, s_next)
        s_curr = s_next

    if stats.n_envs == 1:
        # one environment: every target set scores every DAG identically, so
        # differences between S(I) could only come from the search path
        pass
    elif method == "greedy":
        while len(current) < max_targets:
            cands = [j for j in range(p) if j not in current]
            if not cands:
                break
            scores = scorer.many(current | {j} for j in cands)
            k = int(np.argmax(scores))
            if not _improves(scores[k] - s_curr, s_curr):
                break
            current = current | {cands[k]}
            accept("add_target", cands[k], scores[k])
        while True:
            cands = sorted(current - known)
            if not cands:
                break
            scores = scorer.many(current - {j} for j in cands)
            k = int(np.argmax(scores))
            if not _improves(scores[k] - s_curr, s_curr):
                break
            current = current - {cands[k]}
            accept("remove_target", cands[k], scores[k])
    else:
        order, stat = noise_variance_ranking(stats, lam, cache, rank_descending,
                                             phases, iterate)
        for j in order:
            if j in current:
                continue
            if len(current) >= max_targets:
                break
            s_next = scorer.score(current | {j})
            if not _improves(s_next - s_curr, s_curr):
                break
            current = current | {j}
            accept("add_target", j, s_next)
        for j in reversed(order):
            if j not in current or j in known:
                continue
            s_next = scorer.score(current - {j})
            if not _improves(s_next - s_curr, s_curr):
                break
            current = current - {j}
            accept("remove_target", j, s_next)
    final = scorer.fit(current)
    return SearchResult(final.icpdag, final.targets, final.score, lam, method,
                        outer + final.trace)
