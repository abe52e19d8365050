import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.stats import norm, truncnorm

from app.statmodels.detection import DetectionModel
from app.statmodels.gaussian import GaussianLocationModel, gaussian_kl
from app.statmodels.logistic import (
    LogisticData,
    LogisticModel,
    read_logistic_csv,
    sigmoid,
    softplus,
    write_logistic_csv,
)
from app.statmodels.truth import (
    CorrectTruth,
    GaussianMisspecifiedTruth,
    ObservationSource,
    average_kl,
    kl_to_model,
    min_kl,
    sample_observation,
    truth_entropy,
)
from app.utils.errors import ModelError, NonpositiveScale, OutOfSupport, SupportMismatch, UnsupportedModel


@given(
    st.floats(min_value=-5, max_value=5),
    st.floats(min_value=-10, max_value=10),
    st.floats(min_value=0.1, max_value=5),
)
def test_gaussian_loglik_matches_scipy(theta, x, sigma):
    model = GaussianLocationModel(sigma)
    assert model.loglik(np.array([theta]), x) == pytest.approx(norm.logpdf(x, theta, sigma), abs=1e-9)


def test_nonpositive_scale_rejected():
    with pytest.raises(NonpositiveScale):
        GaussianLocationModel(0.0)
    with pytest.raises(NonpositiveScale):
        DetectionModel((0.5, 0.5), -1.0)


def test_gaussian_samples_have_the_right_moments():
    model = GaussianLocationModel(2.0)
    u = np.random.default_rng(0).random((20000, 2))
    draws = np.array(model.sample(np.array([1.5]), u))
    assert draws.mean() == pytest.approx(1.5, abs=0.05)
    assert draws.std() == pytest.approx(2.0, abs=0.05)


def test_gaussian_fisher_in_both_charts():
    model = GaussianLocationModel(2.0)
    charts = model.fisher_charts()
    assert charts["location"] == pytest.approx(model.fisher(np.array([0.3]))[0, 0])
    assert charts["location"] * charts["mean_parameter"] == pytest.approx(1.0)


def test_softplus_is_stable():
    assert softplus(800.0) == pytest.approx(800.0)
    assert softplus(-800.0) == pytest.approx(0.0)
    assert softplus(0.0) == pytest.approx(math.log(2.0))
    assert sigmoid(-800.0) == 0.0
    assert sigmoid(800.0) == 1.0


def test_logistic_loglik_and_derivatives():
    model = LogisticModel(2)
    theta = np.array([0.3, -1.2])
    d = LogisticData(x=np.array([1.0, 0.5]), y=1)
    eta = 0.3 - 0.6
    assert model.loglik(theta, d) == pytest.approx(eta - math.log1p(math.exp(eta)))
    s = 1 / (1 + math.exp(-eta))
    assert np.allclose(model.grad_psi(theta, d.x), s * d.x)
    assert np.allclose(model.hess_psi(theta, d.x), s * (1 - s) * np.outer(d.x, d.x))


def test_logistic_labels_must_be_binary():
    with pytest.raises(ModelError):
        LogisticData(x=np.zeros(2), y=2)


def test_logistic_csv_round_trip(tmp_path):
    model = LogisticModel(3)
    data = model.sample(np.array([1.0, -0.5, 0.25]), np.random.default_rng(1).random((25, 7)))
    path = tmp_path / "data.csv"
    write_logistic_csv(path, data)
    assert path.read_text().splitlines()[0] == "x1,x2,x3,y"
    restored = read_logistic_csv(path)
    assert [d.y for d in restored] == [d.y for d in data]
    assert np.array_equal(np.array([d.x for d in restored]), np.array([d.x for d in data]))


def test_detection_density_integrates_to_one():
    model = DetectionModel((0.0, 0.0), 0.05)
    theta = np.array([0.3, 0.0])
    mass, _ = integrate.quad(lambda x: math.exp(model.loglik(theta, x)), 0.0, model.upper, points=[0.3])
    assert mass == pytest.approx(1.0, abs=1e-8)


def test_detection_readings_outside_the_range():
    model = DetectionModel((0.0, 0.0), 0.05)
    with pytest.raises(OutOfSupport):
        model.loglik(np.array([0.3, 0.0]), -0.1)
    with pytest.raises(ModelError):
        DetectionModel((1.5, 0.0), 0.1)


@pytest.mark.parametrize("mu", [0.01, 0.3, 0.9])
def test_detection_truncated_moments(mu):
    model = DetectionModel((0.1, 0.1), 0.1)
    a, b = model.limits(mu)
    reference = truncnorm(a, b, loc=mu, scale=model.sigma)
    assert model.truncated_mean(mu) == pytest.approx(reference.mean(), rel=1e-7)
    assert model.truncated_variance(mu) == pytest.approx(reference.var(), rel=1e-6)


def test_detection_samples_stay_in_range():
    model = DetectionModel((0.1, 0.1), 0.1)
    u = np.random.default_rng(2).random((5000, 1))
    draws = np.array(model.sample(np.array([0.12, 0.1]), u))
    assert draws.min() >= 0.0
    assert draws.max() <= model.upper
    assert draws.mean() == pytest.approx(model.truncated_mean(0.02), abs=0.005)


def test_detection_gradient_matches_finite_differences():
    model = DetectionModel((0.4, 0.9), 0.1)
    theta = np.array([0.5, 0.45])
    h = 1e-6
    numeric = np.array([
        (model.psi(theta + h * e) - model.psi(theta - h * e)) / (2 * h) for e in np.eye(2)
    ])
    assert np.allclose(model.grad_psi(theta), numeric, rtol=1e-5)


def test_observation_source_is_deterministic():
    models = [GaussianLocationModel(1.0) for _ in range(3)]
    truth = CorrectTruth(np.array([0.5]))
    first = ObservationSource(models, truth, seed=4, replication=0)
    second = ObservationSource(models, truth, seed=4, replication=0)
    other = ObservationSource(models, truth, seed=4, replication=1)
    steps = [1, 2, 256, 257, 600]
    assert [first.at(t) for t in steps] == [second.at(t) for t in steps]
    assert first.at(1) != other.at(1)
    assert first.at(257)[2] == sample_observation(models[2], truth, 2, 257, seed=4, replication=0)


def test_misspecified_truth_draws_from_its_own_scale():
    model = GaussianLocationModel(1.0)
    truth = GaussianMisspecifiedTruth(mean0=0.5, sigma0=2.0)
    draws = np.array(truth.sample(model, 0, np.random.default_rng(3).random((20000, 2))))
    assert draws.std() == pytest.approx(2.0, abs=0.05)
    assert truth.target().tolist() == [0.5]
    with pytest.raises(UnsupportedModel):
        truth.sample(LogisticModel(2), 0, np.zeros((1, 5)))


def test_gaussian_kl_closed_forms():
    model = GaussianLocationModel(1.0)
    truth = GaussianMisspecifiedTruth(mean0=0.5, sigma0=2.0)
    assert kl_to_model(truth, model, [0.5]).value == pytest.approx(0.5 * (4 - 1 - math.log(4)))
    assert min_kl(truth, model) == pytest.approx(0.5 * (4 - 1 - math.log(4)))
    assert min_kl(CorrectTruth(np.array([0.5])), model) == 0.0
    assert gaussian_kl(0.0, 1.0, 1.0, 1.0) == pytest.approx(0.5)
    assert truth_entropy(truth, [model]) == pytest.approx(0.5 * (1 + math.log(2 * math.pi * 4)))


def test_logistic_kl_is_small_near_the_truth():
    truth = CorrectTruth(np.array([1.0, -0.5]))
    model = LogisticModel(2)
    near = kl_to_model(truth, model, [1.0, -0.5], draws=4000)
    far = kl_to_model(truth, model, [-1.0, 0.5], draws=4000)
    assert near.value == pytest.approx(0.0, abs=1e-12)
    assert far.value > 0.1
    assert far.method == "monte_carlo"


def test_detection_kl_outside_the_square():
    truth = CorrectTruth(np.array([0.5, 0.45]))
    with pytest.raises(SupportMismatch):
        kl_to_model(truth, DetectionModel((0.1, 0.1), 0.1), [1.5, 0.5])


@settings(max_examples=25, deadline=None)
@given(st.floats(min_value=-2, max_value=2))
def test_average_kl_is_quadratic_for_gaussian_agents(theta):
    models = [GaussianLocationModel(s) for s in (0.5, 1.0, 2.0)]
    truth = CorrectTruth(np.array([0.0]))
    expected = np.mean([theta ** 2 / (2 * s * s) for s in (0.5, 1.0, 2.0)])
    assert average_kl(truth, models, [theta]) == pytest.approx(expected)
