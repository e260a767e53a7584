"""Class-level recovery metrics and the varsortability diagnostic."""

from dataclasses import asdict, dataclass

import numpy as np

from .exceptions import DimensionMismatch
from .graphs import Dag, topological_order


@dataclass(frozen=True)
class MetricReport:
    tdp: float
    fdp: float
    exact: bool
    true_class_size: int
    est_class_size: int
    truncated: bool = False

    def to_json(self):
        return asdict(self)


def _tdp_term(truth_edges, est_edges):
    # an edgeless truth member is recovered by anything
    if not truth_edges:
        return 1.0
    return len(truth_edges & est_edges) / len(truth_edges)


def _fdp_term(est_edges, truth_edges):
    if not est_edges:
        return 0.0
    return len(est_edges - truth_edges) / len(est_edges)


def tdp_fdp(truth, est):
    """True and false discovery proportions between two graph classes.

    Both are worst cases over the estimate, each estimate compared with its
    closest true member: TDP = min over estimates of max over true members
    of the share of true edges recovered, FDP = max over estimates of min
    over true members of the share of estimated edges that are wrong. A class
    compared with itself scores (1, 0). Edges compare as directed pairs.
    ``exact`` reports equality of the member sets.
    """
    if truth.p != est.p:
        raise DimensionMismatch("classes are over different node counts")
    T = [frozenset(d.directed) for d in truth.members]
    E = [frozenset(d.directed) for d in est.members]
    tdp = min(max(_tdp_term(t, e) for t in T) for e in E)
    fdp = max(min(_fdp_term(e, t) for t in T) for e in E)
    return MetricReport(
        tdp=float(tdp),
        fdp=float(fdp),
        exact=truth.members == est.members,
        true_class_size=len(truth),
        est_class_size=len(est),
        truncated=bool(truth.truncated or est.truncated),
    )


def _ancestor_pairs(d):
    order = topological_order(d.amat)
    anc = {i: set() for i in range(d.p)}
    for j in order:
        for i in d.parents(j):
            anc[j] |= anc[i] | {i}
    return [(i, j) for j in range(d.p) for i in sorted(anc[j])]


def varsortability(d, variances):
    """Share of ancestor/descendant pairs whose marginal variance increases.

    Ties count one half. Raises ValueError when ``d`` has no directed paths.
    """
    if not isinstance(d, Dag):
        raise TypeError("varsortability needs a DAG")
    v = np.asarray(variances, dtype=float)
    if v.shape != (d.p,):
        raise DimensionMismatch("need one variance per node")
    pairs = _ancestor_pairs(d)
    if not pairs:
        raise ValueError("varsortability is undefined without directed paths")
    score = sum(1.0 if v[i] < v[j] else 0.5 if v[i] == v[j] else 0.0 for i, j in pairs)
    return score / len(pairs)


def model_varsortability(m, e=0):
    from .scm import entailed_covariance

    return varsortability(m.dag, np.diag(entailed_covariance(m, e)))
