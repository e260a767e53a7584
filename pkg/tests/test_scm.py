import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gnies.graphs import enumerate_all_dags, i_equivalent
from gnies.scm import (
    GenParams,
    ScmModel,
    check_intervention_heterogeneity,
    check_model_truthfulness,
    entailed_covariance,
    equivalent_graphs_oracle,
    intervention_targets,
    min_partial_correlation,
    random_scm,
    sample,
    sparsest,
)


def chain2(w=1.0, omegas=((1.0, 1.0),)):
    B = np.zeros((2, 2))
    B[1, 0] = w
    return ScmModel(B, np.array(omegas))


# ------------------------------------------------------------ model

def test_model_validation():
    with pytest.raises(ValueError):
        ScmModel(np.zeros((2, 2)), [[1.0, 0.0]])
    with pytest.raises(ValueError):
        ScmModel(np.array([[0, 1.0], [1.0, 0]]), [[1.0, 1.0]])
    with pytest.raises(ValueError):
        ScmModel(np.eye(2), [[1.0, 1.0]])
    with pytest.raises(ValueError):
        ScmModel(np.zeros((2, 2)), [[1.0, 1.0]], hard_targets=((), ()))


def test_model_json_round_trip():
    m, _, _ = random_scm(GenParams(p=5, n_envs=3, intervention_kind="hard", seed=4))
    back = ScmModel.from_json(m.to_json())
    assert np.array_equal(back.B, m.B) and np.array_equal(back.omegas, m.omegas)
    assert back.hard_targets == m.hard_targets


def test_env_index_checked():
    with pytest.raises(IndexError):
        entailed_covariance(chain2(), 1)


# ------------------------------------------------------- covariance

def test_covariance_examples():
    m = ScmModel(np.zeros((2, 2)), [[1.0, 2.0]])
    assert np.array_equal(entailed_covariance(m, 0), np.diag([1.0, 2.0]))
    assert np.allclose(entailed_covariance(chain2(), 0), [[1, 1], [1, 2]], atol=1e-15)


def test_covariance_regression_recovers_weights():
    m, _, _ = random_scm(GenParams(p=6, n_envs=2, seed=1))
    S = entailed_covariance(m, 0)
    for i in range(m.p):
        pa = sorted(m.dag.parents(i))
        if pa:
            b = np.linalg.solve(S[np.ix_(pa, pa)], S[pa, i])
            assert np.allclose(b, m.B[i, pa], atol=1e-12)


@given(st.integers(0, 10**6), st.permutations(range(5)))
def test_covariance_permutation_equivariant(seed, perm):
    m, _, _ = random_scm(GenParams(p=5, n_envs=2, seed=seed))
    P = np.array(perm)
    mp = ScmModel(m.B[np.ix_(P, P)], m.omegas[:, P])
    for e in range(2):
        S, Sp = entailed_covariance(m, e), entailed_covariance(mp, e)
        assert np.allclose(Sp, S[np.ix_(P, P)], rtol=1e-12, atol=1e-12)


# ----------------------------------------------------------- sampling

def test_sample_deterministic_and_lln():
    m = chain2()
    X = sample(m, 0, 1_000_000, 3)
    assert np.array_equal(sample(m, 0, 50, 7), sample(m, 0, 50, 7))
    assert np.max(np.abs(np.cov(X.T, bias=True) - entailed_covariance(m, 0))) < 0.01


def test_sample_standard_normal_mean():
    n = 20000
    X = sample(ScmModel(np.zeros((3, 3)), [[1.0] * 3]), 0, n, 0)
    assert np.all(np.abs(X.mean(axis=0)) < 4 / math.sqrt(n))


def test_hard_intervention_cuts_parents():
    m, _, env_targets = random_scm(GenParams(p=6, n_envs=4, intervention_kind="hard", seed=5))
    n = 20000
    for e in range(1, m.n_envs):
        (t,) = env_targets[e]
        pa = sorted(m.dag.parents(t))
        if not pa:
            continue
        X = sample(m, e, n, 100 + e)
        Xc = X - X.mean(axis=0)
        b, *_ = np.linalg.lstsq(Xc[:, pa], Xc[:, t], rcond=None)
        assert np.all(np.abs(b) < 4 / math.sqrt(n))


# ---------------------------------------------------------- generator

def test_gen_params_validation():
    with pytest.raises(ValueError):
        GenParams(p=1)
    with pytest.raises(ValueError):
        GenParams(p=3, n_envs=4)
    with pytest.raises(ValueError):
        GenParams(weight_range=(1.0, 0.5))
    with pytest.raises(ValueError):
        GenParams(intervention_kind="soft")


def test_random_scm_edge_count():
    counts = [random_scm(GenParams(seed=s))[0].dag.n_edges for s in range(1000)]
    # binomial(45, 0.3): mean 13.5, sd of the mean about 0.1
    assert abs(np.mean(counts) - 13.5) < 0.5


def test_random_scm_ranges():
    for s in range(20):
        m, I, env_targets = random_scm(GenParams(seed=s))
        w = m.B[m.B != 0]
        assert np.all((w >= 0.5) & (w <= 1.0))
        assert len(I) == 4 and len({t for t in env_targets[1:]}) == 4
        assert np.all((m.omegas[0] >= 1) & (m.omegas[0] <= 2))
        for e in range(1, 5):
            (t,) = env_targets[e]
            assert 5 <= m.omegas[e, t] <= 10
            others = np.delete(m.omegas[e], t)
            assert np.all((others >= 1) & (others <= 2))
        assert intervention_targets(m) == I
        assert m.meta["kind"] == "noise" and sorted(m.meta["order"]) == list(range(10))


def test_random_scm_deterministic():
    a, b = random_scm(GenParams(seed=9))[0], random_scm(GenParams(seed=9))[0]
    assert np.array_equal(a.B, b.B) and np.array_equal(a.omegas, b.omegas)


# ------------------------------------------------------------ checkers

def test_intervention_targets_examples():
    assert intervention_targets(chain2()) == frozenset()
    assert intervention_targets(chain2(omegas=((1, 1), (1, 5)))) == {1}
    assert intervention_targets(chain2(omegas=((1, 1), (1, 1)))) == frozenset()


def test_heterogeneity():
    assert not check_intervention_heterogeneity(chain2(omegas=((1, 1), (2, 2))))
    assert check_intervention_heterogeneity(chain2(omegas=((1, 1), (2, 3))))
    for s in range(10):
        assert check_intervention_heterogeneity(random_scm(GenParams(seed=s))[0])


def test_truthfulness():
    assert check_model_truthfulness(ScmModel(np.zeros((3, 3)), [[1.0, 2.0, 3.0]]))
    for s in range(5):
        m, _, _ = random_scm(GenParams(p=4, n_envs=3, seed=s))
        assert check_model_truthfulness(m)
    with pytest.raises(ValueError):
        check_model_truthfulness(chain2(), tol=0)


def test_oracle_contains_truth_and_supergraphs():
    m = chain2(0.8, omegas=((1, 1.5), (3, 1.5)))
    cls = equivalent_graphs_oracle(m)
    assert m.dag in cls
    for d in enumerate_all_dags(2):
        if set(m.dag.directed) <= set(d.directed):
            assert d in cls


def test_oracle_single_env_sparsest_is_mec():
    m, _, _ = random_scm(GenParams(p=4, n_envs=1, seed=2))
    cls = sparsest(equivalent_graphs_oracle(m))
    mec = {d for d in enumerate_all_dags(4) if i_equivalent(d, m.dag, ())}
    assert cls.members == mec


def test_oracle_shrinks_with_more_envs():
    m, _, _ = random_scm(GenParams(p=4, n_envs=3, seed=7))
    full = equivalent_graphs_oracle(m)
    fewer = ScmModel(m.B, m.omegas[:2])
    assert full.members <= equivalent_graphs_oracle(fewer).members


def test_oracle_size_guard():
    m, _, _ = random_scm(GenParams(p=6, n_envs=2, seed=0))
    with pytest.raises(ValueError):
        equivalent_graphs_oracle(m)


def test_min_partial_correlation():
    # independent variables: every partial correlation vanishes
    assert min_partial_correlation(ScmModel(np.zeros((3, 3)), [[1.0] * 3])) == math.inf
    assert math.isclose(min_partial_correlation(chain2()), 1 / math.sqrt(2))
