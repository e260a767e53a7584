"""Graph types and purely graphical algorithms.

Graphs are stored as dense ``p x p`` int8 adjacency matrices: ``A[i, j] = 1``
and ``A[j, i] = 0`` encodes ``i -> j``; ``A[i, j] = A[j, i] = 1`` encodes the
undirected edge ``i - j``. All graph objects are immutable.
"""

from functools import cached_property, lru_cache
from itertools import combinations, product

import numpy as np

from . import _backend
from .exceptions import (
    DimensionMismatch,
    EnumerationOverflow,
    InvalidClassRepresentation,
    NoConsistentExtension,
    PreconditionViolated,
)

MAX_ENUM_NODES = 5
DEFAULT_CLASS_LIMIT = 10**6


class Pdag:
    """Partially directed acyclic graph over nodes ``0..p-1``."""

    def __init__(self, p, directed=(), undirected=()):
        A = np.zeros((p, p), dtype=np.int8)
        for i, j in directed:
            _check_pair(i, j, p)
            A[i, j] = 1
        for i, j in undirected:
            _check_pair(i, j, p)
            A[i, j] = A[j, i] = 1
        for i, j in directed:
            if A[j, i]:
                raise ValueError(f"edge {i},{j} given twice or in both directions")
        self._init(A)
        self._validate()

    def _init(self, A):
        A = np.ascontiguousarray(A, dtype=np.int8)
        A.setflags(write=False)
        self.amat = A
        self._key = A.tobytes()

    @classmethod
    def from_amat(cls, A):
        A = np.asarray(A)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("adjacency must be square")
        if np.any(np.diag(A)):
            raise ValueError("self-loops are not allowed")
        obj = cls.__new__(cls)
        obj._init((A != 0).astype(np.int8))
        obj._validate()
        return obj

    def _validate(self):
        if topological_order(self.amat) is None:
            raise ValueError("directed part of the PDAG contains a cycle")

    @property
    def p(self):
        return self.amat.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Pdag):
            return NotImplemented
        return self.p == other.p and self._key == other._key

    def __hash__(self):
        return hash((self.p, self._key))

    def __repr__(self):
        und = self.undirected
        if und:
            return f"{type(self).__name__}(p={self.p}, directed={self.directed}, undirected={und})"
        return f"{type(self).__name__}(p={self.p}, directed={self.directed})"

    @cached_property
    def _lists(self):
        M = self.amat.tolist()
        p = len(M)
        pa = [frozenset(j for j in range(p) if M[j][i] and not M[i][j]) for i in range(p)]
        ch = [frozenset(j for j in range(p) if M[i][j] and not M[j][i]) for i in range(p)]
        ne = [frozenset(j for j in range(p) if M[i][j] and M[j][i]) for i in range(p)]
        adj = [frozenset(j for j in range(p) if M[i][j] or M[j][i]) for i in range(p)]
        return pa, ch, ne, adj

    def parents(self, i):
        """Nodes with a directed edge into ``i``."""
        return self._lists[0][i]

    def children(self, i):
        return self._lists[1][i]

    def neighbors(self, i):
        """Nodes joined to ``i`` by an undirected edge."""
        return self._lists[2][i]

    def adjacent(self, i):
        return self._lists[3][i]

    def is_adjacent(self, i, j):
        return bool(self.amat[i, j] or self.amat[j, i])

    @cached_property
    def directed(self):
        A = self.amat
        return sorted((int(i), int(j)) for i, j in zip(*np.nonzero(A & (1 - A.T))))

    @cached_property
    def undirected(self):
        A = self.amat
        return sorted((int(i), int(j)) for i, j in zip(*np.nonzero(np.triu(A & A.T))))

    @property
    def n_edges(self):
        return len(self.directed) + len(self.undirected)

    def to_json(self):
        return {
            "p": self.p,
            "directed": [list(e) for e in self.directed],
            "undirected": [list(e) for e in self.undirected],
        }

    @classmethod
    def from_json(cls, obj):
        g = Pdag(int(obj["p"]), [tuple(e) for e in obj.get("directed", [])],
                 [tuple(e) for e in obj.get("undirected", [])])
        if cls is Pdag:
            return g
        return cls.from_amat(g.amat)


class Dag(Pdag):
    """Directed acyclic graph; ``edges`` lists ordered pairs ``(i, j)`` for i -> j."""

    def __init__(self, p, edges=()):
        super().__init__(p, directed=edges)

    def _validate(self):
        A = self.amat
        if np.any(A & A.T):
            raise ValueError("a DAG cannot contain undirected edges")
        if topological_order(A) is None:
            raise ValueError("graph contains a directed cycle")

    @property
    def edges(self):
        return self.directed

    @classmethod
    def from_weights(cls, B):
        """Graph of a connectivity matrix: edge j -> i iff ``B[i, j] != 0``."""
        return cls.from_amat((np.asarray(B) != 0).T)

    @cached_property
    def v_structures(self):
        return frozenset(_v_structures(self))

    @cached_property
    def skeleton(self):
        return frozenset(_skeleton(self))


class GraphClass:
    """Non-empty finite set of DAGs over the same node count."""

    def __init__(self, members, truncated=False):
        members = frozenset(members)
        if not members:
            raise InvalidClassRepresentation("a graph class must be non-empty")
        ps = {d.p for d in members}
        if len(ps) != 1:
            raise DimensionMismatch("class members differ in node count")
        self.members = members
        self.p = ps.pop()
        self.truncated = truncated

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(sorted(self.members, key=lambda d: d.directed))

    def __contains__(self, d):
        return d in self.members

    def __eq__(self, other):
        if not isinstance(other, GraphClass):
            return NotImplemented
        return self.members == other.members

    def __hash__(self):
        return hash(self.members)

    def __repr__(self):
        return f"GraphClass(p={self.p}, size={len(self)}, truncated={self.truncated})"


def _check_pair(i, j, p):
    if not (0 <= i < p and 0 <= j < p):
        raise ValueError(f"node index out of range in edge ({i}, {j}) for p={p}")
    if i == j:
        raise ValueError("self-loops are not allowed")


def as_targets(I, p=None):
    """Canonical target set (frozenset of ints), optionally range-checked."""
    I = frozenset(int(i) for i in I)
    if p is not None and any(not 0 <= i < p for i in I):
        raise ValueError(f"intervention target out of range for p={p}: {sorted(I)}")
    return I


def topological_order(A):
    """Kahn ordering of the directed part of ``A``; None if there is a cycle.

    Undirected pairs are ignored.
    """
    A = np.asarray(A)
    D = (A != 0) & (A.T == 0)
    indeg = D.sum(axis=0).tolist()
    p = len(indeg)
    succ = [np.flatnonzero(D[i]).tolist() for i in range(p)]
    ready = [i for i in range(p) if indeg[i] == 0]
    order = []
    while ready:
        i = ready.pop(0)
        order.append(i)
        for j in succ[i]:
            indeg[j] -= 1
            if indeg[j] == 0:
                ready.append(j)
    return order if len(order) == p else None


def _check_same_p(d1, d2):
    if d1.p != d2.p:
        raise DimensionMismatch(f"graphs have {d1.p} and {d2.p} nodes")


def _skeleton(g):
    A = g.amat
    S = A | A.T
    return {frozenset((int(i), int(j))) for i, j in zip(*np.nonzero(np.triu(S)))}


def skeleton(g):
    """Set of unordered adjacent pairs (as frozensets)."""
    if isinstance(g, Dag):
        return g.skeleton
    return frozenset(_skeleton(g))


def _v_structures(d):
    out = set()
    for k in range(d.p):
        for i, j in combinations(sorted(d.parents(k)), 2):
            if not d.is_adjacent(i, j):
                out.add((i, k, j))
    return out


def v_structures(d):
    """Triples ``(i, k, j)``, ``i < j``, with ``i -> k <- j`` and i, j non-adjacent."""
    if isinstance(d, Dag):
        return d.v_structures
    return frozenset(_v_structures(d))


def markov_equivalent(d1, d2):
    _check_same_p(d1, d2)
    return skeleton(d1) == skeleton(d2) and v_structures(d1) == v_structures(d2)


def i_equivalence_key(d, I):
    """Hashable summary so that equal keys <=> I-equivalence."""
    I = sorted(as_targets(I, d.p))
    return (d.p, skeleton(d), v_structures(d), tuple(d.parents(i) for i in I))


def i_equivalent(d1, d2, I):
    _check_same_p(d1, d2)
    I = as_targets(I, d1.p)
    if not markov_equivalent(d1, d2):
        return False
    return all(d1.parents(i) == d2.parents(i) for i in I)


def augment(d, I):
    """Add one source node per target; the k-th smallest target gets node p+k."""
    I = sorted(as_targets(I, d.p))
    p = d.p
    edges = list(d.directed) + [(p + k, i) for k, i in enumerate(I)]
    return Dag(p + len(I), edges)


def _remove_into(d, H):
    A = d.amat.copy()
    for h in H:
        A[:, h] = 0
    return Dag.from_amat(A)


def is_conservative(family, p):
    family = [as_targets(H, p) for H in family]
    return all(any(j not in H for H in family) for j in range(p))


def h_equivalent(d1, d2, family):
    """Equivalence under hard interventions on a conservative target family."""
    _check_same_p(d1, d2)
    family = [as_targets(H, d1.p) for H in family]
    if not is_conservative(family, d1.p):
        raise PreconditionViolated("target family is not conservative")
    if not markov_equivalent(d1, d2):
        return False
    return all(skeleton(_remove_into(d1, H)) == skeleton(_remove_into(d2, H))
               for H in family)


def interventional_dag(d, family):
    """Add one source node per non-empty family member, pointing into its targets."""
    family = sorted({as_targets(Y, d.p) for Y in family if Y}, key=sorted)
    p = d.p
    edges = list(d.directed)
    for k, Y in enumerate(family):
        edges.extend((p + k, y) for y in sorted(Y))
    return Dag(p + len(family), edges)


def y_equivalent(d1, d2, family):
    """Equivalence under general interventions; the family must contain the empty set."""
    _check_same_p(d1, d2)
    family = [as_targets(Y, d1.p) for Y in family]
    if frozenset() not in family:
        raise PreconditionViolated("target family must contain the empty set")
    return markov_equivalent(interventional_dag(d1, family), interventional_dag(d2, family))


def meek_closure(g):
    """Orient edges with Meek rules R1-R4 until fixpoint."""
    A = np.array(g.amat, dtype=np.int8, order="C")
    if _backend.meek_closure_inplace(A) == 0:
        return g
    return Pdag.from_amat(A)


def pdag_to_dag(g):
    """Consistent extension by repeated sink elimination.

    Among eligible sinks the highest index is removed first, so a lone
    undirected edge is oriented toward its higher endpoint.
    """
    p = g.p
    M = g.amat.tolist()
    out = [row[:] for row in M]
    remaining = set(range(p))

    def adj(i, j):
        return M[i][j] or M[j][i]

    while remaining:
        for x in sorted(remaining, reverse=True):
            if any(M[x][j] and not M[j][x] for j in remaining):
                continue
            nbrs = [j for j in remaining if M[x][j] and M[j][x]]
            adjs = [j for j in remaining if j != x and adj(x, j)]
            if all(adj(y, z) for y in nbrs for z in adjs if z != y):
                break
        else:
            raise NoConsistentExtension("PDAG admits no consistent extension")
        for y in nbrs:
            out[x][y] = 0
        remaining.discard(x)
        for j in range(p):
            M[x][j] = M[j][x] = 0
    return Dag.from_amat(np.array(out, dtype=np.int8))


def _orient_as(A, d, nodes):
    for i in nodes:
        for j in range(d.p):
            if d.amat[i, j] and not d.amat[j, i]:
                A[i, j], A[j, i] = 1, 0
            elif d.amat[j, i] and not d.amat[i, j]:
                A[j, i], A[i, j] = 1, 0


def _pattern(d):
    S = d.amat | d.amat.T
    A = np.array(S, dtype=np.int8)
    for i, k, j in v_structures(d):
        A[k, i] = 0
        A[k, j] = 0
    return A


def dag_to_cpdag(d):
    """CPDAG of the Markov equivalence class of ``d``."""
    A = _pattern(d)
    _backend.meek_closure_inplace(A)
    return Pdag.from_amat(A)


def dag_to_icpdag(d, I):
    """I-CPDAG: the pattern plus every edge at a target oriented as in ``d``, Meek-closed."""
    I = as_targets(I, d.p)
    A = _pattern(d)
    _orient_as(A, d, I)
    _backend.meek_closure_inplace(A)
    return Pdag.from_amat(A)


def gnies_completion(g, I):
    """Complete a PDAG to the I-CPDAG of the class containing its extension."""
    I = as_targets(I, g.p)
    for i in I:
        if g.neighbors(i):
            raise PreconditionViolated(
                f"target {i} has undirected edges to {sorted(g.neighbors(i))}")
    c = dag_to_cpdag(pdag_to_dag(g))
    A = np.array(c.amat, dtype=np.int8)
    _orient_as(A, g, I)
    _backend.meek_closure_inplace(A)
    return Pdag.from_amat(A)


def enumerate_class(c, I=(), limit=DEFAULT_CLASS_LIMIT, truncate=False):
    """All DAGs whose I-CPDAG is ``c``.

    Undirected edges are oriented one at a time with Meek propagation after
    every choice; complete orientations are kept iff they round-trip to ``c``.
    Past ``limit`` members this raises EnumerationOverflow, or returns a class
    flagged ``truncated`` when ``truncate`` is set.
    """
    I = as_targets(I, c.p)
    found = set()
    truncated = False
    stack = [np.array(c.amat, dtype=np.int8)]
    while stack:
        A = stack.pop()
        und = np.argwhere(np.triu(A & A.T))
        if len(und) == 0:
            if topological_order(A) is None:
                continue
            d = Dag.from_amat(A)
            if dag_to_icpdag(d, I) == c:
                if len(found) >= limit:
                    if not truncate:
                        raise EnumerationOverflow(f"class exceeds {limit} members")
                    truncated = True
                    break
                found.add(d)
            continue
        i, j = (int(v) for v in und[0])
        for a, b in ((j, i), (i, j)):
            B = A.copy()
            B[b, a] = 0
            _backend.meek_closure_inplace(B)
            if topological_order(B) is not None:
                stack.append(B)
    if not found:
        raise InvalidClassRepresentation("no DAG maps back to the given I-CPDAG")
    return GraphClass(found, truncated=truncated)


@lru_cache(maxsize=None)
def _all_dags(p):
    pairs = list(combinations(range(p), 2))
    out = []
    for states in product((0, 1, 2), repeat=len(pairs)):
        pa = [0] * p
        for (i, j), s in zip(pairs, states):
            if s == 1:
                pa[j] |= 1 << i
            elif s == 2:
                pa[i] |= 1 << j
        if _acyclic_masks(pa, p):
            A = np.zeros((p, p), dtype=np.int8)
            for j in range(p):
                for i in range(p):
                    if pa[j] >> i & 1:
                        A[i, j] = 1
            d = Dag.__new__(Dag)
            d._init(A)
            out.append(d)
    return tuple(out)


def _acyclic_masks(pa, p):
    done = 0
    while done != (1 << p) - 1:
        progressed = False
        for j in range(p):
            if not done >> j & 1 and pa[j] & ~done == 0:
                done |= 1 << j
                progressed = True
        if not progressed:
            return False
    return True


def enumerate_all_dags(p):
    """Yield every labeled DAG on ``p <= 5`` nodes exactly once."""
    if p < 0 or p > MAX_ENUM_NODES:
        raise ValueError(f"exhaustive enumeration supports 0 <= p <= {MAX_ENUM_NODES}")
    yield from _all_dags(p)
