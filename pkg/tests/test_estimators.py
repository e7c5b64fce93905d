import math
from itertools import permutations

import mpmath
import numpy as np
import pytest

from scbi.core import kl_divergence, normalize_columns, normalize_vector, sample_column_stochastic
from scbi.errors import BoundaryPrior, DimensionMismatch, InvalidMatrix
from scbi.estimators import (EpisodeConfig, Mode, bi_teacher_distribution, bi_update, episode_uniforms,
                             fit_log_odds_slope, log_odds_rate, normalized_kl, roc_bi, roc_bi_batch,
                             roc_report, roc_scbi, roc_scbi_batch, run_episode, scbi_teacher_distribution,
                             scbi_update, sharp_matrix, simulate)
from scbi.fixtures import FIXTURES
from scbi.sinkhorn import scbi_scaled

from conftest import EXAMPLE_M, random_interior, random_positive

R1 = 1 / (1 + np.sqrt(1 / 3))


def test_bi_two_by_two_steps():
    np.testing.assert_allclose(bi_teacher_distribution(EXAMPLE_M, 0), [0.75, 0.25])
    t1 = bi_update(EXAMPLE_M, [0.5, 0.5], 0)
    np.testing.assert_allclose(t1, [0.6, 0.4], atol=1e-12)
    np.testing.assert_allclose(bi_update(EXAMPLE_M, t1, 0), [0.692, 0.308], atol=1e-3)
    np.testing.assert_allclose(bi_update(EXAMPLE_M, t1, 0), [9 / 13, 4 / 13], atol=1e-12)


def test_bi_trivial_cases():
    U = np.array([[0.5, 0.2], [0.5, 0.8]])
    np.testing.assert_allclose(bi_teacher_distribution(U, 0), [0.5, 0.5])
    M = np.array([[0.4, 0.4], [0.1, 0.5], [0.5, 0.1]])
    np.testing.assert_allclose(bi_update(M, [0.3, 0.7], 0), [0.3, 0.7], atol=1e-15)
    with pytest.raises(InvalidMatrix):
        bi_teacher_distribution([[0.5, 0.2], [0.6, 0.8]], 0)
    with pytest.raises(IndexError):
        bi_teacher_distribution(U, 2)


def test_scbi_two_by_two_steps():
    np.testing.assert_allclose(scbi_teacher_distribution(EXAMPLE_M, [0.5, 0.5], 0), [0.634, 0.366], atol=1e-3)
    t1 = scbi_update(EXAMPLE_M, [0.5, 0.5], 0)
    np.testing.assert_allclose(t1, [0.634, 0.366], atol=1e-3)
    np.testing.assert_allclose(scbi_teacher_distribution(EXAMPLE_M, t1, 0), [0.60, 0.40], atol=1e-2)
    np.testing.assert_allclose(scbi_update(EXAMPLE_M, t1, 0), [0.758, 0.242], atol=1e-3)
    with pytest.raises(BoundaryPrior):
        scbi_update(EXAMPLE_M, [1.0, 0.0], 0)


def test_scbi_teacher_on_symmetric_matrix():
    S = np.array([[0.5, 0.3, 0.2], [0.3, 0.5, 0.2], [0.2, 0.2, 0.6]])
    tau = scbi_teacher_distribution(S, np.full(3, 1 / 3), 0)
    np.testing.assert_allclose(tau, normalize_columns(scbi_scaled(S, np.full(3, 1 / 3)))[:, 0], atol=1e-12)
    np.testing.assert_allclose(tau.sum(), 1, atol=1e-12)


def test_scbi_two_step_derivation(rng):
    """Row d of the scaled matrix equals a Bayes step with the column-normalized scaled likelihood."""
    for _ in range(300):
        n = int(rng.integers(2, 6))
        m = int(rng.integers(2, n + 1))
        M = random_positive(rng, n, m)
        theta = random_interior(rng, m)
        S = scbi_scaled(M, theta)
        C = normalize_columns(S)
        for d in range(n):
            np.testing.assert_allclose(scbi_update(M, theta, d), normalize_vector(C[d] * theta), atol=1e-10)


def test_expected_posterior_improves(rng):
    for _ in range(300):
        n = int(rng.integers(2, 6))
        m = int(rng.integers(2, n + 1))
        M = random_positive(rng, n, m)
        theta = random_interior(rng, m)
        h = int(rng.integers(m))
        tau = scbi_teacher_distribution(M, theta, h)
        nxt = sum(tau[d] * scbi_update(M, theta, d)[h] for d in range(n))
        assert nxt >= theta[h] - 1e-12


def test_bi_order_invariance(rng):
    for _ in range(100):
        M = normalize_columns(random_positive(rng, 4, 3))
        data = rng.integers(0, 4, size=4)
        results = []
        for perm in set(permutations(data.tolist())):
            th = np.full(3, 1 / 3)
            for d in perm:
                th = bi_update(M, th, d)
            results.append(th)
        for r in results[1:]:
            np.testing.assert_allclose(r, results[0], atol=1e-10)


def test_scbi_order_dependence():
    M = FIXTURES.matrix("m1")
    th = np.full(3, 1 / 3)
    a = scbi_update(M, scbi_update(M, th, 0), 1)
    b = scbi_update(M, scbi_update(M, th, 1), 0)
    assert np.max(np.abs(a - b)) > 1e-6


def test_episode_config_validation():
    M = FIXTURES.matrix("m1")
    with pytest.raises(DimensionMismatch):
        EpisodeConfig(M, FIXTURES.matrix("m1p"), [1 / 3] * 3, [1 / 3] * 3)
    with pytest.raises(BoundaryPrior):
        EpisodeConfig.shared(M, [0.0, 0.5, 0.5], true_hypothesis=0)
    with pytest.raises(IndexError):
        EpisodeConfig.shared(M, [1 / 3] * 3, true_hypothesis=3)
    cfg = EpisodeConfig.shared(M, [1 / 3] * 3, mode="bi")
    assert cfg.mode is Mode.BI


def test_forced_episode_matches_two_by_two():
    cfg = EpisodeConfig.shared(EXAMPLE_M, [0.5, 0.5], rounds=2, mode=Mode.BI)
    tr = run_episode(cfg, data=[0, 0])
    np.testing.assert_allclose(tr.learner_posteriors[1], [0.6, 0.4], atol=1e-12)
    np.testing.assert_allclose(tr.learner_posteriors[2], [0.692, 0.308], atol=1e-3)
    cfg = EpisodeConfig.shared(EXAMPLE_M, [0.5, 0.5], rounds=2, mode=Mode.SCBI)
    tr = run_episode(cfg, data=[0, 0])
    np.testing.assert_allclose(tr.learner_posteriors[1], [0.634, 0.366], atol=1e-3)
    np.testing.assert_allclose(tr.learner_posteriors[2], [0.758, 0.242], atol=1e-3)


def test_shared_episode_teacher_equals_learner():
    cfg = EpisodeConfig.shared(FIXTURES.matrix("m2"), FIXTURES.prior("theta2"), rounds=40, seed=3)
    tr = run_episode(cfg)
    np.testing.assert_allclose(tr.teacher_posteriors, tr.learner_posteriors, atol=1e-9)
    assert tr.data.shape == (40,) and tr.learner_posteriors.shape == (41, 3)
    np.testing.assert_allclose(tr.learner_posteriors.sum(axis=1), 1, atol=1e-9)


def test_episode_equals_manual_composition():
    M3 = FIXTURES.matrix("m3")
    cfg = EpisodeConfig.shared(M3, FIXTURES.prior("theta1"), rounds=25, seed=11)
    tr = run_episode(cfg)
    u = np.random.default_rng(11).random(25)
    th = FIXTURES.prior("theta1")
    for k in range(25):
        tau = scbi_teacher_distribution(M3, th, 0)
        d = int(np.searchsorted(np.cumsum(tau), u[k]))
        assert d == tr.data[k]
        th = scbi_update(M3, th, d)
        np.testing.assert_allclose(tr.learner_posteriors[k + 1], th, atol=1e-9)


def test_mismatched_episode_uses_each_matrix():
    T = FIXTURES.matrix("m1")
    L = FIXTURES.matrix("m2")
    p = np.full(3, 1 / 3)
    cfg = EpisodeConfig(T, L, p, p, rounds=5, seed=2)
    tr = run_episode(cfg)
    tt, ll = p, p
    for k, d in enumerate(tr.data):
        tt, ll = scbi_update(T, tt, d), scbi_update(L, ll, d)
        np.testing.assert_allclose(tr.teacher_posteriors[k + 1], tt, atol=1e-9)
        np.testing.assert_allclose(tr.learner_posteriors[k + 1], ll, atol=1e-9)


def test_episode_is_deterministic():
    cfg = EpisodeConfig.shared(FIXTURES.matrix("m4"), FIXTURES.prior("theta4"), rounds=30, seed=5, mode="bi")
    a, b = run_episode(cfg), run_episode(cfg)
    assert np.array_equal(a.data, b.data)
    np.testing.assert_array_equal(a.learner_posteriors, b.learner_posteriors)


def test_batched_simulation_matches_single_runs():
    M = FIXTURES.matrix("m5")
    p = FIXTURES.prior("theta5")
    u = episode_uniforms(4, range(6), 30)
    res = simulate(M, M, p, p, 1, Mode.SCBI, uniforms=u)
    for i in range(6):
        tr = run_episode(EpisodeConfig.shared(M, p, true_hypothesis=1, rounds=30), rng=None, data=res.data[i])
        np.testing.assert_allclose(np.exp(res.learner_log[i]), tr.learner_posteriors[-1], atol=1e-9)


def test_long_episode_log_odds_stay_finite():
    cfg = EpisodeConfig.shared(FIXTURES.matrix("m2"), FIXTURES.prior("theta1"), rounds=3000, seed=1)
    tr = run_episode(cfg)
    assert np.all(np.isfinite(tr.learner_log_odds))
    assert tr.learner_log_odds[-1] > 500


def test_stop_threshold_freezes_episodes():
    M = FIXTURES.matrix("m3")
    p = np.full(3, 1 / 3)
    res = simulate(M, M, p, p, 0, Mode.SCBI, uniforms=episode_uniforms(0, range(50), 500), stop_threshold=0.99)
    assert np.all(res.stop_round < 500)
    assert np.all(np.exp(res.teacher_log[:, 0]) >= 0.99)
    k = res.stop_round
    assert np.all(res.data[np.arange(50), k - 1] >= 0)
    assert all(np.all(res.data[i, k[i]:] == -1) for i in range(50))


# -- rates ---------------------------------------------------------------------------

def _kl_mp(p, q):
    mpmath.mp.dps = 40
    return sum(mpmath.mpf(a) * mpmath.log(mpmath.mpf(a) / mpmath.mpf(b)) for a, b in zip(p, q))


def _oracle_rates(M, h):
    """Independent high-precision evaluation of both rate formulas."""
    mpmath.mp.dps = 40
    n, m = M.shape
    cols = [[mpmath.mpf(M[i, j]) / sum(mpmath.mpf(M[k, j]) for k in range(n)) for i in range(n)] for j in range(m)]
    bi = min(_kl_mp(cols[h], cols[g]) for g in range(m) if g != h)
    sc = []
    for g in range(m):
        if g == h:
            continue
        r = [cols[g][i] / cols[h][i] for i in range(n)]
        s = sum(r)
        sc.append(_kl_mp([mpmath.mpf(1) / n] * n, [x / s for x in r]))
    return float(bi), float(min(sc))


def test_two_by_two_rates():
    r, g = roc_bi(EXAMPLE_M, 0)
    assert r == pytest.approx(0.75 * math.log(1.5) + 0.25 * math.log(0.5), abs=1e-14) and g == 1
    r, g, S = roc_scbi(EXAMPLE_M, 0)
    np.testing.assert_allclose(S, [[0.5, 0.25], [0.5, 0.75]], atol=1e-15)
    assert r == pytest.approx(kl_divergence([0.5, 0.5], [0.25, 0.75]), abs=1e-15)
    assert r == pytest.approx(0.14384, abs=1e-5)
    assert roc_bi(EXAMPLE_M, 1)[0] == pytest.approx(kl_divergence([0.5, 0.5], [0.75, 0.25]))


@pytest.mark.parametrize("name", ["m1", "m2", "m3", "m4", "m5", "m1p", "m2p", "m3p"])
def test_fixture_rates_against_oracle(name):
    M = FIXTURES.matrix(name)
    for h in range(M.shape[1]):
        bi, sc = _oracle_rates(M, h)
        assert roc_bi(M, h)[0] == pytest.approx(bi, rel=1e-10)
        assert roc_scbi(M, h)[0] == pytest.approx(sc, rel=1e-10)


def test_frozen_fixture_rates():
    # computed once with the high-precision oracle above, h = first hypothesis
    expected = {"m1": (0.0756632, 0.1229933), "m2": (0.4759799, 0.4535096), "m3": (0.2182356, 0.4744989),
                "m4": (0.0868014, 0.0937675), "m5": (0.0707456, 0.0666634)}
    for name, (bi, sc) in expected.items():
        M = FIXTURES.matrix(name)
        assert roc_bi(M, 0)[0] == pytest.approx(bi, abs=1e-6)
        assert roc_scbi(M, 0)[0] == pytest.approx(sc, abs=1e-6)


def test_sharp_matrix_and_normalized_kl_agree(rng):
    for _ in range(1000):
        n = int(rng.integers(2, 6))
        m = int(rng.integers(2, n + 1))
        M = sample_column_stochastic(n, m, rng)
        h = int(rng.integers(m))
        rate, g, S = roc_scbi(M, h)
        np.testing.assert_allclose(S[:, h], 1 / n, atol=1e-12)
        alt = min(normalized_kl(M[:, h], M[:, j]) for j in range(m) if j != h)
        assert rate == pytest.approx(alt, rel=1e-12, abs=1e-15)
        assert rate > 0


def test_rates_vanish_for_nearly_parallel_columns():
    base = np.array([0.5, 0.3, 0.2])
    prev = np.inf
    for eps in (1e-1, 1e-2, 1e-3, 1e-4):
        M = np.column_stack([base, normalize_vector(base + eps * np.array([1, -1, 0]))])
        r = roc_bi(M, 0)[0]
        assert r < prev
        prev = r
        assert roc_scbi(M, 0)[0] < 10 * eps ** 2
    assert prev < 1e-7


def test_rates_invariant_under_rescaling(rng):
    for _ in range(200):
        M = sample_column_stochastic(4, 3, rng)
        T = normalize_columns(M * rng.uniform(0.2, 5, 3))
        for h in range(3):
            assert roc_bi(T, h)[0] == pytest.approx(roc_bi(M, h)[0], rel=1e-10)
            assert roc_scbi(T, h)[0] == pytest.approx(roc_scbi(M, h)[0], rel=1e-10)


def test_batch_rates_match_scalar(rng):
    Ms = np.stack([sample_column_stochastic(5, 3, rng) for _ in range(40)])
    bi, gb = roc_bi_batch(Ms)
    sc, gs = roc_scbi_batch(Ms)
    for i, M in enumerate(Ms):
        for h in range(3):
            assert bi[i, h] == pytest.approx(roc_bi(M, h)[0], rel=1e-10)
            assert sc[i, h] == pytest.approx(roc_scbi(M, h)[0], rel=1e-9)
            assert gb[i, h] == roc_bi(M, h)[1] and gs[i, h] == roc_scbi(M, h)[1]


def test_roc_report():
    rep = roc_report(FIXTURES.matrix("m3"))
    assert rep.per_hypothesis_bi.shape == (3,) and np.all(rep.per_hypothesis_scbi > 0)
    assert rep.relevant_column[0] == roc_scbi(FIXTURES.matrix("m3"), 0)[1]
    with pytest.raises(InvalidMatrix):
        roc_bi(np.array([[0.5], [0.5]]), 0)


def test_log_odds_fits():
    fit = fit_log_odds_slope(np.full(20, 0.5))
    assert fit.endpoint == 0 and fit.slope == pytest.approx(0, abs=1e-12) and not fit.saturated
    k = np.arange(200)
    c = 0.07
    fit = fit_log_odds_slope(1 / (1 + np.exp(-c * k)), burn_in=10)
    assert fit.endpoint == pytest.approx(c, rel=1e-9) and fit.slope == pytest.approx(c, rel=1e-9)
    fit = fit_log_odds_slope(np.array([0.5, 0.9, 1.0]))
    assert fit.saturated and np.isfinite(fit.endpoint)
    end, slope = log_odds_rate(c * k)
    assert end == pytest.approx(c) and slope == pytest.approx(c)
