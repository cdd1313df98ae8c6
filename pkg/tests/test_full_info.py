import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from wagerlearn.core import QUADRATIC, ForecastPanel, RngStream, WeightVector, check_simplex
from wagerlearn.errors import ParameterError, SizeError
from wagerlearn.full_info import (
    EXACT,
    Algorithm,
    PredictionMode,
    default_eta,
    doubling_phases,
    elf_round_winner_probs,
    elfx_round_winner_probs,
    elfx_selection_distribution,
    elfx_winner_matrix,
    exact_count_distribution,
    hedge_update,
    make_learner,
    mwu_update,
    run_doubling,
    run_full_info,
    selection_from_winner_probs,
    tie_shared_selection,
    wsu_phase_eta,
    wsu_update,
    wsu_update_wagering,
)
from wagerlearn.wagering import wswm_payoffs_array

SELECT, AGGREGATE = PredictionMode.SELECT_ONE, PredictionMode.AGGREGATE


def random_panel(seed, T, k):
    g = np.random.default_rng(seed)
    return ForecastPanel(g.random((T, k)), (g.random(T) < 0.5).astype(int))


# --------------------------------------------------------------- updates

@pytest.mark.parametrize("pi,losses,eta,expected", [
    ((0.5, 0.5), (0.0, 1.0), 0.1, (0.525, 0.475)),
    ((0.5, 0.5), (0.0, 1.0), 0.5, (0.625, 0.375)),
    ((0.2, 0.3, 0.5), (0.4, 0.4, 0.4), 0.3, (0.2, 0.3, 0.5)),
])
def test_wsu_update_examples(pi, losses, eta, expected):
    np.testing.assert_allclose(wsu_update(pi, losses, eta).weights, expected, atol=1e-15)


@pytest.mark.parametrize("eta", [0.0, -0.1, 0.51, 1.0])
def test_wsu_update_rejects_eta(eta):
    with pytest.raises(ParameterError):
        wsu_update([0.5, 0.5], [0, 1], eta)


def test_wsu_keeps_zero_weight_at_zero():
    out = wsu_update([0.0, 0.4, 0.6], [1.0, 0.0, 0.5], 0.5)
    assert out.weights[0] == 0.0


@given(st.integers(1, 10), st.integers(0, 2**32 - 1), st.floats(1e-6, 0.5))
def test_wsu_validity_and_two_forms(k, seed, eta):
    g = np.random.default_rng(seed)
    pi = g.random(k) + 1e-12
    pi /= pi.sum()
    reports = g.random(k)
    r = int(g.integers(0, 2))
    closed = wsu_update(pi, QUADRATIC(reports, r), eta)
    mixed = wsu_update_wagering(pi, reports, r, eta)
    assert check_simplex(closed.weights)
    np.testing.assert_allclose(closed.weights, mixed.weights, rtol=0, atol=1e-12)
    raw = eta * wswm_payoffs_array(reports, pi, r) + (1 - eta) * pi
    np.testing.assert_allclose(closed.weights, raw, rtol=0, atol=1e-12)


def test_wsu_validity_bulk(gen):
    k = gen.integers(2, 12, size=10_000)
    for kk in np.unique(k):
        n = int((k == kk).sum())
        pi = gen.random((n, kk)) + 1e-12
        pi /= pi.sum(axis=1, keepdims=True)
        ell = gen.random((n, kk))
        eta = gen.uniform(1e-6, 0.5, (n, 1))
        nxt = pi * (1 - eta * (ell - np.sum(pi * ell, axis=1, keepdims=True)))
        assert check_simplex(nxt)


def test_mwu_update_examples():
    w = mwu_update([1, 1], [0, 1], 0.1)
    np.testing.assert_allclose(w, [1, 0.9])
    np.testing.assert_allclose(w / w.sum(), [10 / 19, 9 / 19], atol=1e-15)
    w = mwu_update([2, 1], [1, 1], 0.5)
    np.testing.assert_allclose(w, [1, 0.5])
    np.testing.assert_array_equal(mwu_update([3.0, 2.0], [0, 0], 0.7), [3.0, 2.0])
    with pytest.raises(ParameterError):
        mwu_update([1, 1], [0, 1], 1.0)
    with pytest.raises(ParameterError):
        mwu_update([1, 0], [0, 1], 0.1)


def test_hedge_update_examples():
    np.testing.assert_allclose(hedge_update([1, 1], [0, 1], math.log(2)), [1, 0.5], atol=1e-15)
    np.testing.assert_array_equal(hedge_update([1.0, 4.0], [0, 0], 2.0), [1.0, 4.0])
    w = hedge_update([1, 1, 1], [1, 1, 1], 3.7)
    np.testing.assert_allclose(w / w.sum(), [1 / 3] * 3, atol=1e-15)


# ------------------------------------------------------- winner lotteries

@pytest.mark.parametrize("losses,expected", [
    ((0.3, 0.3, 0.3), (1 / 3,) * 3),
    ((0.0, 1.0), (0.75, 0.25)),
    ((0, 0, 0, 1), (0.3125, 0.3125, 0.3125, 0.0625)),
])
def test_elfx_winner_probs(losses, expected):
    np.testing.assert_allclose(elfx_round_winner_probs(losses).weights, expected, atol=1e-15)


@pytest.mark.parametrize("losses,expected", [
    ((0.4, 0.4, 0.4), (1 / 3,) * 3),
    ((0.0, 1.0), (1.0, 0.0)),
    ((0, 1, 1), (2 / 3, 1 / 6, 1 / 6)),
])
def test_elf_winner_probs(losses, expected):
    np.testing.assert_allclose(elf_round_winner_probs(losses).weights, expected, atol=1e-15)


def test_elf_requires_two_experts():
    with pytest.raises(ParameterError):
        elf_round_winner_probs([0.3])
    with pytest.raises(ParameterError):
        make_learner(Algorithm.ELF, 1)


@given(st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_elfx_winner_probs_equal_uniform_wager_payoffs(k, seed):
    g = np.random.default_rng(seed)
    reports, r = g.random(k), int(g.integers(0, 2))
    lottery = elfx_round_winner_probs(QUADRATIC(reports, r)).weights
    payoff = wswm_payoffs_array(reports, np.full(k, 1 / k), r)
    np.testing.assert_allclose(lottery, payoff, atol=1e-15)


def brute_force_selection(probs):
    probs = np.asarray(probs)
    t, k = probs.shape
    out = np.zeros(k)
    for seq in itertools.product(range(k), repeat=t):
        p = np.prod([probs[tau, x] for tau, x in enumerate(seq)])
        counts = np.bincount(seq, minlength=k)
        out += p * tie_shared_selection(counts)
    return out


def test_selection_examples():
    empty = np.zeros((0, 3))
    np.testing.assert_allclose(elfx_selection_distribution(empty).weights, [1 / 3] * 3)
    one = elfx_selection_distribution([[0.0, 1.0]])
    np.testing.assert_allclose(one.weights, [0.75, 0.25], atol=1e-15)
    two = elfx_selection_distribution([[0.0, 1.0], [0.0, 1.0]])
    # 0.75^2 + 2 * 0.75 * 0.25 * 0.5
    assert abs(two.weights[0] - 0.75) <= 1e-15


@given(st.integers(2, 4), st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_exact_selection_matches_brute_force(k, t, seed):
    g = np.random.default_rng(seed)
    hist = g.random((t, k))
    exact = elfx_selection_distribution(hist, EXACT).weights
    np.testing.assert_allclose(exact, brute_force_selection(elfx_winner_matrix(hist)), atol=1e-13)


def test_exact_count_distribution_mass():
    probs = np.array([[0.2, 0.8], [0.6, 0.4], [0.5, 0.5]])
    counts, mass = exact_count_distribution(probs)
    assert abs(mass.sum() - 1) <= 1e-15
    assert np.all(counts.sum(axis=1) == 3)
    # all three rounds won by expert 0
    assert mass[np.all(counts == [3, 0], axis=1)][0] == pytest.approx(0.2 * 0.6 * 0.5, abs=1e-16)


def test_exact_budget():
    with pytest.raises(SizeError):
        elfx_selection_distribution(np.zeros((21, 2)), EXACT)
    elfx_selection_distribution(np.zeros((20, 2)), EXACT)
    with pytest.raises(SizeError):
        exact_count_distribution(np.full((11, 4), 0.25))


def test_sampled_selection_close_to_exact():
    g = np.random.default_rng(3)
    probs = elfx_winner_matrix(g.random((6, 3)))
    exact = selection_from_winner_probs(probs, EXACT).weights
    est = selection_from_winner_probs(probs, 200_000, RngStream(9)).weights
    # binomial standard error is at most 0.5 / sqrt(2e5) ~ 1.1e-3
    np.testing.assert_allclose(est, exact, atol=5e-3)


def test_sampling_rejects_bad_count():
    with pytest.raises(ParameterError):
        selection_from_winner_probs([[0.5, 0.5]], 0)


# --------------------------------------------------------------- defaults

def test_default_eta_values():
    assert default_eta(Algorithm.WSU, SELECT, 5, 100) == math.sqrt(math.log(5) / 100)
    assert default_eta(Algorithm.WSU, SELECT, 5, 1) == 0.5
    assert default_eta(Algorithm.HEDGE, SELECT, 5, 100) == math.sqrt(8 * math.log(5) / 100)
    assert default_eta(Algorithm.HEDGE, AGGREGATE, 5, 100) == 1.0
    assert default_eta(Algorithm.MWU, SELECT, 1, 100) == 0.5


# ------------------------------------------------------------------ runs

@pytest.mark.parametrize("alg", [Algorithm.WSU, Algorithm.MWU, Algorithm.HEDGE, Algorithm.ELFX])
@pytest.mark.parametrize("mode", [SELECT, AGGREGATE])
def test_single_expert_has_zero_regret(alg, mode):
    panel = random_panel(1, 30, 1)
    run = run_full_info(panel, alg, mode, rng=RngStream(2))
    np.testing.assert_allclose(run.trace.regret, 0.0, atol=1e-15)


def test_wsu_one_step_consistency():
    panel = ForecastPanel(np.array([[0.9, 0.2]]), [1])
    run = run_full_info(panel, Algorithm.WSU, SELECT, eta=0.3, rng=RngStream(4))
    i = run.chosen[0]
    assert run.learner_losses[0] == panel.losses()[0, i]
    np.testing.assert_allclose(run.pis[1], wsu_update([0.5, 0.5], panel.losses()[0], 0.3).weights,
                               atol=1e-15)


def test_wsu_aggregate_example():
    panel = ForecastPanel(np.array([[0.9, 0.2]]), [1])
    run = run_full_info(panel, Algorithm.WSU, AGGREGATE, eta=0.2)
    assert run.learner_losses[0] == pytest.approx(0.2025, abs=1e-15)
    assert run.learner_losses[0] <= 0.325


@pytest.mark.parametrize("alg", list(Algorithm))
def test_aggregate_loss_below_weighted_expert_loss(alg):
    panel = random_panel(5, 60, 4)
    run = run_full_info(panel, alg, AGGREGATE, num_samples=500, rng=RngStream(1))
    weighted = np.sum(run.pis[:-1] * panel.losses(), axis=1)
    assert np.all(run.learner_losses <= weighted + 1e-12)
    assert check_simplex(run.pis)


@pytest.mark.parametrize("alg", [Algorithm.WSU, Algorithm.MWU, Algorithm.HEDGE])
@pytest.mark.parametrize("mode", [SELECT, AGGREGATE])
def test_stepping_matches_batch(alg, mode):
    panel = random_panel(8, 80, 5)
    rng = RngStream(21, 3)
    run = run_full_info(panel, alg, mode, rng=rng)
    learner = make_learner(alg, 5, mode, eta=run.params["eta"], rng=rng)
    losses, chosen = [], []
    for t in range(panel.horizon):
        np.testing.assert_allclose(learner.pi.weights, run.pis[t], rtol=0, atol=1e-13)
        learner.observe_reports(panel.reports[t])
        learner.predict()
        chosen.append(learner.chosen)
        losses.append(learner.observe_outcome(panel.outcomes[t]))
        learner.update()
    np.testing.assert_allclose(losses, run.learner_losses, atol=1e-13)
    if mode is SELECT:
        assert chosen == run.chosen.tolist()


@pytest.mark.parametrize("alg", [Algorithm.ELFX, Algorithm.ELF])
@pytest.mark.parametrize("samples", [EXACT, 64])
def test_elf_stepping_matches_batch(alg, samples):
    panel = random_panel(13, 12, 2)
    rng = RngStream(5, 1)
    run = run_full_info(panel, alg, SELECT, num_samples=samples, rng=rng)
    learner = make_learner(alg, 2, SELECT, num_samples=samples, rng=rng)
    for t in range(panel.horizon):
        np.testing.assert_allclose(learner.pi.weights, run.pis[t], atol=1e-13)
        learner.observe_reports(panel.reports[t])
        learner.predict()
        assert learner.chosen == run.chosen[t]
        learner.observe_outcome(panel.outcomes[t])
        learner.update()


def test_elfx_select_frequencies_follow_pi():
    # many fresh lotteries at a fixed history should reproduce pi
    hist = np.array([[0.0, 1.0, 0.5], [0.2, 0.1, 0.9]])
    exact = elfx_selection_distribution(hist).weights
    learner = make_learner(Algorithm.ELFX, 3, SELECT, num_samples=EXACT, rng=RngStream(3))
    for row in hist:
        learner._advance(row)
    picks = np.bincount([learner._select() for _ in range(20_000)], minlength=3) / 20_000
    np.testing.assert_allclose(picks, exact, atol=0.015)


def test_learner_protocol_errors():
    learner = make_learner(Algorithm.WSU, 2, eta=0.1)
    with pytest.raises(RuntimeError):
        learner.predict()
    learner.observe_reports([0.1, 0.2])
    with pytest.raises(RuntimeError):
        learner.update()
    with pytest.raises(ParameterError):
        make_learner(Algorithm.WSU, 2)


def test_elf_linear_regret_on_alternating_panel():
    from wagerlearn.harness.simulate import alternating_leader_panel
    panel = alternating_leader_panel(200)
    run = run_full_info(panel, Algorithm.ELF, SELECT, num_samples=16, rng=RngStream(0))
    # the leader is wrong on every even round; ties cost 1/2 in expectation
    slope = np.polyfit(np.arange(1, 201), run.trace.regret, 1)[0]
    assert 0.15 < slope < 0.35


def test_deterministic_runs():
    panel = random_panel(2, 50, 3)
    a = run_full_info(panel, Algorithm.ELFX, SELECT, num_samples=100, rng=RngStream(6))
    b = run_full_info(panel, Algorithm.ELFX, SELECT, num_samples=100, rng=RngStream(6))
    np.testing.assert_array_equal(a.pis, b.pis)
    np.testing.assert_array_equal(a.chosen, b.chosen)


# --------------------------------------------------------------- doubling

def test_doubling_phases():
    assert doubling_phases(1) == [(1, 1, 1)]
    assert doubling_phases(5) == [(1, 1, 1), (2, 2, 2), (3, 4, 4), (5, 5, 8)]
    for T in range(1, 300):
        assert len(doubling_phases(T)) <= math.ceil(math.log2(T)) + 1


def test_doubling_eta():
    assert wsu_phase_eta(2, 1) == 0.5
    assert wsu_phase_eta(3, 64) == math.sqrt(math.log(3) / 64)


def test_doubling_constant_losses_zero_regret():
    panel = ForecastPanel(np.full((37, 3), 0.3), np.ones(37, dtype=int))
    run = run_doubling(panel, Algorithm.WSU, SELECT, rng=RngStream(1))
    np.testing.assert_allclose(run.trace.regret, 0.0, atol=1e-12)


def test_doubling_resets_weights():
    panel = random_panel(4, 9, 3)
    run = run_doubling(panel, Algorithm.WSU, AGGREGATE, rng=RngStream(1))
    starts = [start for start, _, _ in doubling_phases(9)]
    for s in starts:
        np.testing.assert_allclose(run.pis[s - 1], [1 / 3] * 3, atol=1e-15)
