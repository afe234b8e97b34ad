import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from palgpfa.dataset import CountDataset
from palgpfa.obs_models import (Interval, ObservationModel, approximated_term, binomial,
                                binomial_from_counts, exact_loglik, fit_neuron_quadratics,
                                loglik_derivatives, negbinom, nonlinear_term, poisson, rate,
                                select_intervals)
from palgpfa.simulate import sample_counts

from conftest import lstsq_quadratic


def cell(y):
    return CountDataset(np.array([[[y]]], dtype=float))


def test_rates():
    assert rate(poisson(), [0.0]) == pytest.approx([1.0])
    assert rate(binomial(10), [0.0]) == pytest.approx([5.0])
    assert rate(negbinom(1.0), [math.log(3)]) == pytest.approx([3.0])
    lam = rate(binomial((4, 10)), np.array([[50.0, -50.0], [0.0, 3.0]]))
    assert np.all(lam >= 0) and np.all(lam <= np.array([[4], [10]]))
    assert np.isfinite(rate(poisson(), [1e4])).all()


def test_exact_loglik_examples():
    assert exact_loglik(poisson(), cell(0), [0.0]) == pytest.approx(-1.0)
    assert exact_loglik(poisson(), cell(2), [0.0]) == pytest.approx(-1 - math.log(2))
    assert exact_loglik(binomial(1), cell(1), [0.0]) == pytest.approx(math.log(0.5))


@pytest.mark.parametrize("eta", [-1.3, 0.0, 0.7, 2.2])
def test_exact_loglik_matches_scipy(eta):
    for y in range(6):
        assert exact_loglik(poisson(), cell(y), [eta]) == pytest.approx(stats.poisson.logpmf(y, math.exp(eta)))
        p = 1 / (1 + math.exp(-eta))
        assert exact_loglik(binomial(7), cell(y), [eta]) == pytest.approx(stats.binom.logpmf(y, 7, p))
        alpha, m = 0.6, math.exp(eta)
        r = 1 / alpha
        assert exact_loglik(negbinom(alpha), cell(y), [eta]) == pytest.approx(
            stats.nbinom.logpmf(y, r, r / (r + m)))


@pytest.mark.parametrize("eta", [-2.0, 0.0, 1.5])
def test_normalisation(eta):
    tot = sum(math.exp(exact_loglik(binomial(12), cell(y), [eta])) for y in range(13))
    assert tot == pytest.approx(1.0, abs=1e-10)
    for model in (poisson(), negbinom(1.0)):
        tot = sum(math.exp(exact_loglik(model, cell(y), [eta])) for y in range(201))
        assert tot == pytest.approx(1.0, abs=1e-6)


def test_invalid_counts():
    with pytest.raises(ValueError, match="exceeds"):
        exact_loglik(binomial(3), cell(4), [0.0])
    with pytest.raises(ValueError, match="negative"):
        CountDataset(np.array([[[-1.0]]]))


def test_nonlinear_terms():
    assert nonlinear_term(poisson())(0.0) == 1.0
    assert nonlinear_term(binomial(5))(0.0) == pytest.approx(-math.log(2))
    assert nonlinear_term(negbinom(1.0))(0.0) == pytest.approx(math.log(2))
    x = np.linspace(-3, 3, 7)
    np.testing.assert_allclose(approximated_term(binomial(5))(x), -nonlinear_term(binomial(5))(x))


def _rates_dataset(means, T=10, R=2):
    return CountDataset(np.broadcast_to(np.asarray(means, float)[:, None, None], (len(means), T, R)).copy())


def test_select_intervals_examples():
    iv = select_intervals(poisson(), _rates_dataset([1.0]))
    assert iv.intervals[0] == Interval(-2.0, 2.0)
    iv = select_intervals(binomial(10), _rates_dataset([5.0]))
    assert iv.centers[0] == pytest.approx(0.0)
    assert (iv.intervals[0].lo, iv.intervals[0].hi) == pytest.approx((-4.0, 4.0))
    iv = select_intervals(negbinom(), _rates_dataset([math.exp(2)]))
    assert (iv.intervals[0].lo, iv.intervals[0].hi) == pytest.approx((-2.0, 6.0))


def test_select_intervals_widths_and_floor():
    Y = _rates_dataset([0.0, 3.0, 10.0], T=5, R=4)
    for model, hw in ((poisson(), 2), (negbinom(), 4), (binomial(10), 4)):
        iv = select_intervals(model, Y)
        for c, interval in zip(iv.centers, iv.intervals):
            assert interval.lo < c < interval.hi
            assert interval.width == pytest.approx(2 * hw)
        assert np.all(np.isfinite(iv.centers))
    assert select_intervals(poisson(), Y).centers[0] == pytest.approx(math.log(1 / 20))


@given(st.floats(0.1, 20))
def test_identical_neurons_identical_intervals(m):
    Y = _rates_dataset([m] * 4)
    for model in (poisson(), negbinom(), binomial(25)):
        assert len(set(select_intervals(model, Y).intervals)) == 1


def test_neuron_quadratics():
    Y = _rates_dataset([1.0, 1.0, 1.0])
    quads = fit_neuron_quadratics(poisson(), select_intervals(poisson(), Y))
    assert len({q.coefficients for q in quads}) == 1
    assert all(q.a > 0 for q in quads)
    model = negbinom(1.0)
    q = fit_neuron_quadratics(model, select_intervals(model, _rates_dataset([1.0])))[0]
    assert (q.interval.lo, q.interval.hi) == (-4.0, 4.0)
    np.testing.assert_allclose(q.coefficients, lstsq_quadratic(lambda x: np.logaddexp(0, x), -4, 4), atol=1e-8)


@given(st.floats(-10, 10), st.sampled_from(["poisson", "binomial", "negbinom"]))
def test_fitted_terms_are_convex(center, kind):
    model = {"poisson": poisson(), "binomial": binomial(3), "negbinom": negbinom(0.5)}[kind]
    from palgpfa.obs_models import NeuronIntervals
    hw = 2.0 if kind == "poisson" else 4.0
    iv = NeuronIntervals((Interval(center - hw, center + hw),), np.array([center]))
    assert fit_neuron_quadratics(model, iv)[0].a > 0


def test_negbinom_moments():
    Y = sample_counts(negbinom(1.0), np.zeros((1, 1)), np.zeros((1, 100_000)), 1, seed=7)
    y = Y.counts.ravel()
    n = y.size
    se_mean = y.std() / math.sqrt(n)
    assert abs(y.mean() - 1.0) < 3 * se_mean  # W = 0 gives m = 1
    W = np.array([[1.0]])
    X = np.full((1, 100_000), math.log(3))
    y = sample_counts(negbinom(1.0), W, X, 1, seed=8).counts.ravel()
    se_mean = y.std() / math.sqrt(n)
    dev2 = (y - y.mean()) ** 2
    se_var = dev2.std() / math.sqrt(n)
    assert abs(y.mean() - 3) < 3 * se_mean
    assert abs(y.var(ddof=1) - 12) < 3 * se_var


def test_loglik_derivatives_match_exact_loglik():
    rng = np.random.default_rng(3)
    Y = CountDataset(rng.integers(0, 6, size=(3, 4, 2)).astype(float))
    eta = rng.normal(size=(3, 4))
    for model in (poisson(), binomial(6), negbinom(0.7)):
        _, g, h = loglik_derivatives(model, Y, eta)
        eps = 1e-5
        for i in range(3):
            for t in range(4):
                e = np.zeros_like(eta)
                e[i, t] = eps
                fd = (exact_loglik(model, Y, eta + e) - exact_loglik(model, Y, eta - e)) / (2 * eps)
                fd2 = (loglik_derivatives(model, Y, eta + e)[1][i, t]
                       - loglik_derivatives(model, Y, eta - e)[1][i, t]) / (2 * eps)
                assert g[i, t] == pytest.approx(fd, rel=1e-6, abs=1e-7)
                assert -h[i, t] == pytest.approx(fd2, rel=1e-6, abs=1e-7)
        assert np.all(h >= 0)


def test_model_construction():
    with pytest.raises(ValueError):
        ObservationModel("gaussian")
    with pytest.raises(ValueError):
        negbinom(0.0)
    with pytest.raises(ValueError):
        binomial(0)
    assert negbinom().alpha == 1.0
    Y = CountDataset(np.array([[[0, 3]], [[2, 1]]], dtype=float))
    assert binomial_from_counts(Y).n == (3, 2)
    assert binomial_from_counts(Y, shared=True).n == (3,)
    assert binomial_from_counts(CountDataset(np.zeros((1, 2, 1)))).n == (1,)
