import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar
from scipy.stats import chi2, norm, truncnorm

from app.belief.grid import GridBelief
from app.belief.natural import AtomTable, NaturalBelief
from app.belief.network import distributed_update, ideal_posterior, initial_state
from app.belief.priors import GaussianPrior
from app.estimators.fisher import (
    average_fisher,
    logistic_fisher,
    network_loss,
    population_loss,
    published_detection_fisher,
)
from app.estimators.laplace import LaplaceApprox, chi2_cdf, chi2_quantile, credible_region, laplace_approx
from app.estimators.newton import (
    detection_m_estimate,
    estimate_for_belief,
    gaussian_m_estimate,
    m_estimate,
    newton_minimize,
)
from app.graph.schedule import GraphSchedule
from app.graph.topology import identity_matrix, metropolis_weights, named_topology
from app.statmodels.base import NetworkModel
from app.statmodels.detection import DetectionModel
from app.statmodels.gaussian import GaussianLocationModel
from app.statmodels.logistic import LogisticModel
from app.statmodels.truth import CorrectTruth, ObservationSource
from app.utils.errors import IndefiniteHessian, NoConvergence, RepresentationMismatch, SingularFisher, UnsupportedModel


def run(network, prior, truth, schedule, t, seed=0):
    state = initial_state(network, prior)
    source = ObservationSource(network.models, truth, seed=seed, replication=0)
    for step in range(1, t + 1):
        state = distributed_update(state, source.at(step), schedule.weights_at(step - 1))
    return state, source


def quadratic(center, hessian):
    center = np.asarray(center, dtype=float)
    hessian = np.asarray(hessian, dtype=float)

    def objective(theta):
        diff = theta - center
        return 0.5 * diff @ hessian @ diff, hessian @ diff, hessian

    return objective


def test_newton_solves_a_quadratic_in_one_step():
    result = newton_minimize(quadratic([1.0, -2.0], [[2.0, 0.5], [0.5, 1.0]]), [0.0, 0.0])
    assert result.converged
    assert result.iters == 1
    assert np.allclose(result.theta_hat, [1.0, -2.0])
    assert not result.boundary


def test_newton_stops_on_the_box_boundary():
    result = newton_minimize(quadratic([1.5, 0.5], np.eye(2)), [0.5, 0.5], box=(np.zeros(2), np.ones(2)))
    assert result.converged
    assert result.boundary
    assert np.allclose(result.theta_hat, [1.0, 0.5])


def test_newton_without_levenberg_rejects_concave_objectives():
    with pytest.raises(IndefiniteHessian):
        newton_minimize(lambda th: (-th @ th, -2 * th, -2 * np.eye(1)), [1.0])


def test_gaussian_estimate_is_the_sample_mean(standard_prior, gaussian_truth):
    network = NetworkModel([GaussianLocationModel(1.0)])
    state, source = run(network, standard_prior, gaussian_truth, GraphSchedule.static(identity_matrix(1)), 25)
    xs = [source.at(k)[0] for k in range(1, 26)]
    estimate = gaussian_m_estimate(state.belief(0))
    assert estimate.status == "closed_form"
    assert estimate.theta_hat[0] == pytest.approx(np.mean(xs))
    assert estimate.grad_norm == pytest.approx(0.0, abs=1e-12)


def test_gaussian_estimate_before_any_data(gaussian_network, standard_prior):
    estimate = gaussian_m_estimate(initial_state(gaussian_network, standard_prior).belief(0))
    assert estimate.status == "prior_mode"
    assert estimate.theta_hat.tolist() == [0.0]


def test_separated_logistic_data_report_separation():
    network = NetworkModel([LogisticModel(1)])
    belief = NaturalBelief(
        network=network,
        atoms=AtomTable(owners=np.array([0, 0]), covariates=np.array([[1.0], [-1.0]])),
        chi=np.array([1.0]),
        w=np.ones(2),
        prior=GaussianPrior.isotropic(1, 4.0),
        step=2,
    )
    estimate = estimate_for_belief(belief)
    assert estimate.status == "separation"
    assert not estimate.converged
    assert estimate.theta_hat[0] > 5.0
    with pytest.raises(NoConvergence):
        estimate.raise_for_status()


def test_logistic_estimate_approaches_the_truth(ring4):
    network = NetworkModel([LogisticModel(2) for _ in range(4)])
    truth = CorrectTruth(np.array([1.0, -0.5]))
    state, _ = run(network, GaussianPrior.isotropic(2, 4.0), truth, GraphSchedule.static(ring4), 400, seed=6)
    estimate = estimate_for_belief(state.belief(0)).raise_for_status()
    assert np.linalg.norm(estimate.theta_hat - truth.theta0) < 0.3


def test_newton_agrees_with_a_derivative_free_minimizer():
    network = NetworkModel([LogisticModel(1) for _ in range(2)])
    truth = CorrectTruth(np.array([1.0]))
    schedule = GraphSchedule.static(metropolis_weights(named_topology("complete", 2)))
    state, _ = run(network, GaussianPrior.isotropic(1, 4.0), truth, schedule, 150, seed=9)
    belief = state.belief(0)
    estimate = estimate_for_belief(belief).raise_for_status()
    reference = minimize_scalar(
        lambda th: belief.agent_loss(np.array([th]))[0],
        bounds=(-10.0, 10.0),
        method="bounded",
        options={"xatol": 1e-10},
    )
    assert estimate.theta_hat[0] == pytest.approx(reference.x, abs=1e-6)


def test_detection_estimate_with_little_noise(unit_square):
    network = NetworkModel([DetectionModel(z, 0.02) for z in [(0.1, 0.1), (0.9, 0.2), (0.4, 0.9)]])
    truth = CorrectTruth(np.array([0.5, 0.45]))
    schedule = GraphSchedule.static(metropolis_weights(named_topology("complete", 3)))
    state, _ = run(network, unit_square, truth, schedule, 100, seed=2)
    estimate = detection_m_estimate(state.belief(1))
    assert np.linalg.norm(estimate.theta_hat - truth.theta0) < 0.01
    assert not estimate.boundary


def test_detection_estimate_of_a_flat_loss_is_the_corner(detection_network, unit_square):
    estimate = detection_m_estimate(initial_state(detection_network, unit_square).belief(0))
    assert estimate.theta_hat.tolist() == [0.0, 0.0]
    assert estimate.boundary


def test_grid_estimates_need_the_prior():
    grid = GridBelief.uniform([0.0], [1.0], 11)
    with pytest.raises(RepresentationMismatch):
        estimate_for_belief(grid)


@pytest.mark.parametrize("df", [1, 2, 5])
@pytest.mark.parametrize("prob", [0.5, 0.9, 0.95])
def test_chi2_quantile_matches_scipy(df, prob):
    assert chi2_quantile(prob, df) == pytest.approx(chi2.ppf(prob, df), rel=1e-8)


@given(st.floats(min_value=0.01, max_value=40.0), st.integers(min_value=1, max_value=6))
def test_chi2_cdf_matches_scipy(q, df):
    assert chi2_cdf(q, df) == pytest.approx(chi2.cdf(q, df), abs=1e-12)


def test_chi2_quantile_edges():
    assert chi2_quantile(0.0, 2) == 0.0
    assert chi2_quantile(1.0, 2) == math.inf


def test_detection_fisher_is_the_truncated_variance():
    model = DetectionModel((0.1, 0.1), 0.1)
    theta = np.array([0.5, 0.45])
    mu, u = model.direction(theta)
    a, b = model.limits(mu)
    variance = truncnorm(a, b, loc=mu, scale=model.sigma).var()
    assert np.allclose(model.fisher(theta), variance / model.var ** 2 * np.outer(u, u), rtol=1e-6)


def test_average_fisher_matches_the_reading_variance(detection_network):
    theta = np.array([0.5, 0.45])
    models = detection_network.models
    rng = np.random.default_rng(11)
    n = 100_000
    estimate = np.zeros((2, 2))
    variance = np.zeros((2, 2))
    for model in models:
        _, u = model.direction(theta)
        x = np.array(model.sample(theta, rng.random((n, 1))))
        centered = x - x.mean()
        v = np.mean(centered ** 2)
        se = math.sqrt((np.mean(centered ** 4) - v * v) / n)
        scale = np.outer(u, u) / model.var ** 2 / len(models)
        estimate += scale * v
        variance += (scale * se) ** 2
    fisher = average_fisher(models, theta)
    assert np.all(np.abs(estimate - fisher) <= 4 * np.sqrt(variance) + 1e-12)


def test_published_detection_matrix_squares_the_mean_shift(detection_network):
    theta = np.array([0.5, 0.45])
    models = detection_network.models
    expected = np.zeros((2, 2))
    for model in models:
        mu, u = model.direction(theta)
        a, b = model.limits(mu)
        shift = (norm.pdf(b) - norm.pdf(a)) / (norm.cdf(b) - norm.cdf(a))
        expected += np.outer(u, u) / model.var ** 2 * shift ** 2
    published = published_detection_fisher(models, theta)
    assert np.allclose(published, expected / len(models), rtol=1e-8)
    fisher = average_fisher(models, theta)
    assert np.linalg.norm(published - fisher) > 0.5 * np.linalg.norm(fisher)
    with pytest.raises(UnsupportedModel):
        published_detection_fisher([GaussianLocationModel(1.0)], theta)


def detection_recovery(network, prior, seeds, t):
    """Estimate error, boundary flag and observed-vs-expected covariance gap per seed"""
    truth = CorrectTruth(np.array([0.5, 0.45]))
    schedule = GraphSchedule.static(metropolis_weights(named_topology("complete", network.m)))
    errors, boundary, gaps = [], [], []
    for seed in seeds:
        state, _ = run(network, prior, truth, schedule, t, seed=seed)
        belief = state.belief(0)
        estimate = detection_m_estimate(belief)
        observed = laplace_approx(belief, estimate, information="observed").covariance
        expected = LaplaceApprox.from_fisher(
            estimate.theta_hat, average_fisher(network.models, estimate.theta_hat), t
        ).covariance
        errors.append(np.linalg.norm(estimate.theta_hat - truth.theta0))
        boundary.append(estimate.boundary)
        gaps.append(np.linalg.norm(observed - expected) / np.linalg.norm(expected))
    return np.array(errors), boundary, np.array(gaps)


def test_detection_recovers_the_target(detection_network, unit_square):
    errors, boundary, gaps = detection_recovery(detection_network, unit_square, range(5), 500)
    assert np.median(errors) < 0.02
    assert not any(boundary)
    assert np.median(gaps) < 0.05


@pytest.mark.slow
def test_detection_recovers_the_target_over_many_seeds(detection_network, unit_square):
    errors, boundary, gaps = detection_recovery(detection_network, unit_square, range(30), 2000)
    assert np.median(errors) < 0.02
    assert not any(boundary)
    assert np.median(gaps) < 0.05


def test_average_fisher_for_gaussian_agents():
    models = [GaussianLocationModel(s) for s in (1.0, 2.0)]
    assert average_fisher(models, [0.3])[0, 0] == pytest.approx((1.0 + 0.25) / 2)


def test_logistic_fisher_uses_the_covariates():
    x = np.array([[1.0, 0.0], [0.0, 2.0]])
    fisher = logistic_fisher(np.zeros(2), x)
    assert np.allclose(fisher, np.diag([0.125, 0.5]))


def test_singular_fisher_is_reported():
    with pytest.raises(SingularFisher):
        LaplaceApprox.from_fisher([0.0, 0.0], np.zeros((2, 2)), 10)
    with pytest.raises(SingularFisher):
        average_fisher([DetectionModel((0.1, 0.1), 0.1)], [0.5, 0.45])


def test_laplace_charts_agree_for_gaussian_agents(gaussian_network, standard_prior, gaussian_truth, ring4_schedule):
    state, _ = run(gaussian_network, standard_prior, gaussian_truth, ring4_schedule, 50)
    belief = state.belief(2)
    expected = laplace_approx(belief)
    observed = laplace_approx(belief, information="observed")
    assert expected.covariance[0, 0] == pytest.approx(1.0 / 50)
    assert observed.covariance[0, 0] == pytest.approx(expected.covariance[0, 0])
    assert expected.center[0] == pytest.approx(gaussian_m_estimate(belief).theta_hat[0])
    with pytest.raises(RepresentationMismatch):
        laplace_approx(belief, information="sandwich")


def test_credible_region_scales():
    laplace = LaplaceApprox.from_fisher([0.0], np.array([[1.0]]), 100)
    agent = credible_region(laplace, 0.05)
    network = credible_region(laplace, 0.05, scale="network", m=4)
    assert agent.radius_sq == pytest.approx(chi2.ppf(0.95, 1) / 100, rel=1e-8)
    assert network.radius_sq == pytest.approx(agent.radius_sq / 4)
    assert agent.laplace_mass() == pytest.approx(0.95, abs=1e-9)
    assert network.laplace_mass() == pytest.approx(0.95, abs=1e-9)
    assert network.divisor == 400
    assert agent.contains([0.19]) and not agent.contains([0.2])
    with pytest.raises(RepresentationMismatch):
        credible_region(laplace, 0.05, scale="global")


def test_population_loss(gaussian_truth):
    models = [GaussianLocationModel(1.0)] * 3
    entropy = 0.5 * (1 + math.log(2 * math.pi))
    assert population_loss(gaussian_truth, models, [0.5]) == pytest.approx(entropy)
    assert population_loss(gaussian_truth, models, [1.5]) == pytest.approx(entropy + 0.5)
    with pytest.raises(UnsupportedModel):
        population_loss(gaussian_truth, [LogisticModel(2)], [0.0, 0.0])


def test_network_loss_is_minimized_at_the_pooled_mean(gaussian_network, standard_prior, gaussian_truth):
    source = ObservationSource(gaussian_network.models, gaussian_truth, seed=3, replication=0)
    data = [source.at(k) for k in range(1, 41)]
    ideal = ideal_posterior(gaussian_network, standard_prior, data)
    pooled = float(np.mean(data))
    value, grad, hess = network_loss(ideal, np.array([pooled]))
    assert grad[0] == pytest.approx(0.0, abs=1e-10)
    assert hess[0, 0] == pytest.approx(1.0)
    assert value == pytest.approx(-0.5 * pooled ** 2)
    estimate = m_estimate(lambda th: network_loss(ideal, th), [0.0])
    assert estimate.theta_hat[0] == pytest.approx(pooled, abs=1e-8)


@pytest.mark.slow
def test_logistic_belief_mahalanobis_masses_follow_chi2(ring4):
    network = NetworkModel([LogisticModel(2) for _ in range(4)])
    truth = CorrectTruth(np.array([1.0, -0.5]))
    t = 2000
    state, _ = run(network, GaussianPrior.isotropic(2, 4.0), truth, GraphSchedule.static(ring4), t, seed=8)
    belief = state.belief(0)
    laplace = laplace_approx(belief)
    grid = GridBelief.rasterize_natural(belief, n=201, refine=False)
    diff = grid.nodes() - laplace.center
    distance = np.einsum("ij,jk,ik->i", diff, np.linalg.inv(laplace.covariance), diff)
    for level in (0.5, 0.9):
        assert grid.mass_where(distance <= chi2.ppf(level, 2)) == pytest.approx(level, rel=0.1)
