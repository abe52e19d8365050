import math

import numpy as np
import pytest
from scipy.stats import foldnorm, norm

from app.belief.grid import GridBelief
from app.belief.natural import AtomTable, NaturalBelief
from app.belief.network import distributed_update, initial_state
from app.belief.priors import GaussianPrior, UniformPrior
from app.diagnostics.bvm import _gaussian_l1_1d, bvm_tv, bvm_tv_misspecified
from app.diagnostics.consistency import consistency_mass, kl_interval
from app.diagnostics.contraction import (
    approximation_bound,
    approximation_constant,
    baseline_kl,
    contraction_bound,
    fit_asymptote,
    fit_constant,
    fit_slope,
    gamma_sq,
    gamma_sq_bound,
    gamma_sq_time_varying_bound,
    kl_to_ideal,
    posterior_risk,
)
from app.diagnostics.coverage import coverage_experiment, region_outcome, summarize_outcomes, wilson_interval
from app.diagnostics.divergence import BoxDensity, GaussianDensity, divergence, gaussian_renyi
from app.diagnostics.lln_clt import distributed_lln_clt_check, lln_clt_replication, network_accumulate
from app.estimators.laplace import LaplaceApprox
from app.graph.schedule import GraphSchedule, matrix_power_product
from app.graph.topology import identity_matrix, metropolis_weights, named_topology
from app.statmodels.base import NetworkModel
from app.statmodels.gaussian import GaussianLocationModel
from app.statmodels.logistic import LogisticModel
from app.statmodels.truth import CorrectTruth, GaussianMisspecifiedTruth, ObservationSource
from app.utils.errors import GraphError, NonIntegrable, SupportMismatch, UnsupportedModel

STD = GaussianDensity([0.0], [[1.0]])
SHIFTED = GaussianDensity([1.0], [[2.0]])


def single_agent_belief(t, prior=None, seed=5, truth=None, sigma=1.0):
    network = NetworkModel([GaussianLocationModel(sigma)])
    prior = prior or GaussianPrior.isotropic(1, 1.0)
    truth = truth or CorrectTruth(np.array([0.5]))
    state = initial_state(network, prior)
    source = ObservationSource(network.models, truth, seed=seed, replication=0)
    for step in range(1, t + 1):
        state = distributed_update(state, source.at(step), np.eye(1))
    xbar = float(np.mean([source.at(k)[0] for k in range(1, t + 1)]))
    return state.belief(0), xbar


def as_box(density):
    lower, upper = density.box()
    return BoxDensity(density.log_pdf, lower, upper)


# divergences


def test_gaussian_kl_closed_form():
    report = divergence(STD, SHIFTED, "kl")
    assert report.method == "closed_form"
    assert report.value == pytest.approx(0.5 * math.log(2.0))


def test_quadrature_agrees_with_the_closed_form():
    for kind in ("kl", "hellinger", "chisq"):
        closed = divergence(STD, SHIFTED, kind).value
        assert divergence(as_box(STD), as_box(SHIFTED), kind).value == pytest.approx(closed, rel=1e-6)


def test_renyi_orders_map_onto_named_divergences():
    assert divergence(STD, SHIFTED, "renyi", rho=1.0).value == pytest.approx(divergence(STD, SHIFTED, "kl").value)
    assert divergence(STD, SHIFTED, "renyi", rho=0.5).value == pytest.approx(gaussian_renyi(STD, SHIFTED, 0.5))
    assert divergence(STD, SHIFTED, "renyi", rho=2.0).value == pytest.approx(gaussian_renyi(STD, SHIFTED, 2.0))


def test_renyi_of_equal_variance_gaussians():
    q = GaussianDensity([1.0], [[1.0]])
    assert divergence(STD, q, "renyi", rho=3.0).value == pytest.approx(1.5)


def test_renyi_is_infinite_when_the_mixed_covariance_degenerates():
    wide = GaussianDensity([0.0], [[4.0]])
    assert gaussian_renyi(wide, STD, 4.0) == math.inf


def test_total_variation_uses_the_half_convention():
    report = divergence(STD, GaussianDensity([1.0], [[1.0]]), "tv")
    assert report.convention == "half_l1"
    assert report.method == "quadrature"
    assert report.value == pytest.approx(2 * norm.cdf(0.5) - 1, abs=1e-6)


def test_monte_carlo_kl_brackets_the_truth():
    report = divergence(STD, SHIFTED, "kl", method="monte_carlo", draws=40000, seed=3)
    assert report.method == "monte_carlo"
    assert abs(report.value - 0.5 * math.log(2.0)) < 4 * report.stderr


def test_kl_needs_absolute_continuity():
    wide = BoxDensity(lambda x: np.full(len(x), -math.log(2.0)), [0.0], [2.0])
    narrow = BoxDensity(lambda x: np.where(x[:, 0] <= 1.0, 0.0, -np.inf), [0.0], [1.0])
    with pytest.raises(SupportMismatch):
        divergence(wide, narrow, "kl")


def test_divergence_argument_errors():
    with pytest.raises(SupportMismatch):
        divergence(STD, SHIFTED, "wasserstein")
    with pytest.raises(SupportMismatch):
        divergence(STD, SHIFTED, "renyi")
    with pytest.raises(SupportMismatch):
        divergence(STD, GaussianDensity([0.0, 0.0], np.eye(2)), "kl")
    with pytest.raises(NonIntegrable):
        divergence(as_box(STD), as_box(SHIFTED), "kl", method="monte_carlo")


# Bernstein-von Mises


@pytest.mark.parametrize("delta", [0.0, 0.3, 2.0])
def test_gaussian_l1_matches_the_shift_formula(delta):
    assert _gaussian_l1_1d(0.0, 1.0, delta, 1.0) == pytest.approx(2 * (2 * norm.cdf(delta / 2) - 1), abs=1e-9)


def test_bvm_distance_shrinks_with_t():
    values = []
    for t in (5, 50, 500):
        belief, xbar = single_agent_belief(t)
        laplace = LaplaceApprox.from_fisher([xbar], np.eye(1), t)
        report = bvm_tv(belief, laplace)
        assert report.convention == "l1"
        assert report.fisher_chart == "location"
        values.append(report.tv_to_gaussian)
    assert values[0] > values[-1]
    assert values[1] > values[-1]
    assert 0.0 <= values[-1] < 0.05


def test_bvm_lattice_with_a_flat_prior():
    belief, xbar = single_agent_belief(50, prior=UniformPrior(np.array([-3.0]), np.array([4.0])))
    laplace = LaplaceApprox.from_fisher([xbar], np.eye(1), 50)
    report = bvm_tv(belief, laplace)
    assert report.tv_to_gaussian < 1e-5
    assert report.tail_mass < 1e-6


def test_bvm_on_a_grid_belief():
    prior = UniformPrior(np.array([-3.0]), np.array([4.0]))
    network = NetworkModel([GaussianLocationModel(1.0)])
    state = initial_state(network, prior, "grid", resolution=1401)
    source = ObservationSource(network.models, CorrectTruth(np.array([0.5])), seed=5, replication=0)
    for step in range(1, 51):
        state = distributed_update(state, source.at(step), np.eye(1))
    xbar = float(np.mean([source.at(k)[0] for k in range(1, 51)]))
    report = bvm_tv(state.belief(0), LaplaceApprox.from_fisher([xbar], np.eye(1), 50))
    assert report.tv_to_gaussian < 2e-3


def test_misspecified_bvm_reports_three_centres():
    belief, xbar = single_agent_belief(100, truth=GaussianMisspecifiedTruth(0.5, 2.0))
    reports = bvm_tv_misspecified(belief, LaplaceApprox.from_fisher([xbar], np.eye(1), 100), [0.5])
    assert [r.center for r in reports] == ["theta_hat", "theta0", "theta0_x2"]
    assert reports[1].scale == pytest.approx(10.0)
    assert reports[2].scale == pytest.approx(5.0)
    assert all(0.0 <= r.tv_to_gaussian <= 2.0 for r in reports)


def test_bvm_lattice_needs_at_most_two_parameters():
    belief = NaturalBelief(
        network=NetworkModel([LogisticModel(3)]),
        atoms=AtomTable.empty(3),
        chi=np.zeros(3),
        w=np.zeros(0),
        prior=GaussianPrior.isotropic(3, 1.0),
        step=1,
    )
    with pytest.raises(NonIntegrable):
        bvm_tv(belief, LaplaceApprox.from_fisher(np.zeros(3), np.eye(3), 1))


# consistency


def test_kl_interval_of_correct_gaussians():
    lo, hi = kl_interval(CorrectTruth(np.array([0.5])), [GaussianLocationModel(1.0)], 0.02)
    assert (lo, hi) == pytest.approx((0.3, 0.7))


def test_kl_interval_is_empty_below_the_misspecification_floor():
    truth = GaussianMisspecifiedTruth(0.5, 2.0)
    models = [GaussianLocationModel(1.0)]
    floor = 0.5 * (4 - 1 - math.log(4))
    assert kl_interval(truth, models, floor) is None
    belief, _ = single_agent_belief(10, truth=truth)
    assert consistency_mass(belief, truth, models, floor) == 0.0


def test_consistency_mass_in_closed_form():
    truth = CorrectTruth(np.array([0.5]))
    models = [GaussianLocationModel(1.0)]
    belief, _ = single_agent_belief(40)
    mean, cov = belief.gaussian_params()
    sd = math.sqrt(cov[0, 0])
    expected = norm.cdf((0.7 - mean[0]) / sd) - norm.cdf((0.3 - mean[0]) / sd)
    assert consistency_mass(belief, truth, models, 0.02) == pytest.approx(expected)
    assert consistency_mass(belief, truth, models, math.inf) == 1.0
    late, _ = single_agent_belief(3000)
    assert consistency_mass(late, truth, models, 0.02) > 0.99


def test_distance_neighbourhood_on_a_detection_grid(detection_network, unit_square):
    state = initial_state(detection_network, unit_square, "grid", resolution=51)
    truth = CorrectTruth(np.array([0.5, 0.45]))
    assert consistency_mass(state.belief(0), truth, detection_network.models, 2.0, "distance") == pytest.approx(1.0)
    small = consistency_mass(state.belief(0), truth, detection_network.models, 0.1, "distance")
    assert small == pytest.approx(math.pi * 0.01, abs=0.005)


# contraction


def test_gamma_bounds():
    assert gamma_sq_bound(1, 1.0, 10, 3.0) == 0.0
    assert gamma_sq_bound(4, 1 / 3, 100, 2.0) == pytest.approx(16 * 4 * math.log(4) * 3 / 100 * 2.0)
    assert gamma_sq_time_varying_bound(8, 0.0, 1 / 3, 100, 1.0) == math.inf
    assert gamma_sq_time_varying_bound(8, 0.1, 1 / 3, 100, 1.0) == pytest.approx(4 * 64 * 3 / 100)
    frequent = (16 * 8 * math.log(8) + 8 * 8 * math.log(0.5)) / (0.5 * (1 / 3) * 100)
    assert gamma_sq_time_varying_bound(8, 0.5, 1 / 3, 100, 1.0) == pytest.approx(frequent)
    assert approximation_bound(8, 1 / 3, 100, 1.0, lam=1.0) == gamma_sq_bound(8, 1 / 3, 100, 1.0)
    assert contraction_bound(4, 0.5, 10, 1.0, 0.25) == pytest.approx(0.1 + gamma_sq_bound(4, 0.5, 10, 1.0) + 0.25)
    with pytest.raises(GraphError):
        gamma_sq_time_varying_bound(1, 0.5, 1.0, 10, 1.0)


def test_baseline_and_constant():
    models = [GaussianLocationModel(1.0)] * 2
    correct = CorrectTruth(np.array([0.5]))
    wrong = GaussianMisspecifiedTruth(0.5, 2.0)
    assert baseline_kl(correct, models) == 0.0
    assert baseline_kl(wrong, models) == pytest.approx(0.5 * (4 - 1 - math.log(4)))
    assert approximation_constant(correct, models) == pytest.approx(0.5 * (1 + math.log(2 * math.pi)))


def test_posterior_risk_for_gaussian_beliefs():
    belief, _ = single_agent_belief(20)
    mean, cov = belief.gaussian_params()
    delta, var = mean[0] - 0.5, cov[0, 0]
    truth = CorrectTruth(np.array([0.5]))
    models = [GaussianLocationModel(1.0)]
    assert posterior_risk(belief, [0.5], "sq") == pytest.approx(delta ** 2 + var)
    assert posterior_risk(belief, [0.5], "abs") == pytest.approx(
        foldnorm(abs(delta) / math.sqrt(var), scale=math.sqrt(var)).mean()
    )
    assert posterior_risk(belief, [0.5], "kl_risk", truth, models) == pytest.approx(0.5 * (delta ** 2 + var))
    with pytest.raises(UnsupportedModel):
        posterior_risk(belief, [0.5], "huber")


def test_posterior_risk_on_a_lattice():
    grid = GridBelief.from_log_density(lambda x: norm.logpdf(x[:, 0], 0.3, 0.1), [-1.0], [1.0], 2001)
    assert posterior_risk(grid, [0.0], "sq") == pytest.approx(0.1, abs=1e-5)


def test_single_agent_has_no_graph_error():
    network = NetworkModel([GaussianLocationModel(1.0)])
    report = gamma_sq(
        3, network, GaussianPrior.isotropic(1, 1.0), GraphSchedule.static(identity_matrix(1)),
        CorrectTruth(np.array([0.5])), 30,
    )
    assert report.gamma_sq == pytest.approx(0.0, abs=1e-15)
    assert report.bound == 0.0


def test_gamma_sq_on_a_ring_respects_its_bound(gaussian_network, standard_prior, gaussian_truth, ring4_schedule):
    report = gamma_sq(8, gaussian_network, standard_prior, ring4_schedule, gaussian_truth, 50, seed=1)
    assert report.replications == 8
    assert 0.0 < report.gamma_sq <= report.bound
    assert report.baseline == 0.0
    assert report.expected_loss > 0.0


def test_kl_between_beliefs_by_quadrature():
    flat = UniformPrior(np.array([-3.0]), np.array([4.0]))
    belief, _ = single_agent_belief(30, prior=flat)
    assert kl_to_ideal(belief, belief) == pytest.approx(0.0, abs=1e-8)


def test_fits():
    ts = np.array([10.0, 100.0, 1000.0])
    assert fit_slope(ts, 3.0 / ts) == pytest.approx(-1.0)
    fit = fit_asymptote(ts, 0.2 + 5.0 / ts)
    assert fit["asymptote"] == pytest.approx(0.2)
    assert fit["rate_coefficient"] == pytest.approx(5.0)
    constant = fit_constant([2.0, 4.0, 6.0], [1.0, 2.0, 2.0])
    assert constant["constant"] == pytest.approx(2.0)
    assert constant["max_relative_spread"] == pytest.approx(0.5)


# coverage


def test_wilson_interval():
    assert wilson_interval(0, 0) == (0.0, 1.0)
    lo, hi = wilson_interval(50, 100)
    assert lo == pytest.approx(0.4038, abs=1e-4)
    assert hi == pytest.approx(0.5962, abs=1e-4)
    assert wilson_interval(0, 10)[0] == pytest.approx(0.0, abs=1e-12)


def test_region_outcome_nests_the_network_region():
    belief, xbar = single_agent_belief(50)
    laplace = LaplaceApprox.from_fisher([xbar], np.eye(1), 50)
    outcome = region_outcome(belief, [0.5], 0.1, 4, laplace=laplace)
    assert outcome["radius_network"] == pytest.approx(outcome["radius_agent"] / 4)
    assert outcome["distance_sq"] == pytest.approx((xbar - 0.5) ** 2)
    assert outcome["covered_agent"] or not outcome["covered_network"]


def test_coverage_near_nominal_on_a_ring(gaussian_network, standard_prior, gaussian_truth, ring4_schedule):
    report = coverage_experiment(100, gaussian_network, standard_prior, ring4_schedule, gaussian_truth, 50, 0.1, seed=4)
    assert report.replications == 100
    assert 0.78 <= report.coverage["network"] <= 0.98
    assert report.coverage["agent"] >= report.coverage["network"]
    assert "outcomes" not in report.to_dict()


def test_summaries_flag_misspecification():
    outcomes = [{"covered_agent": True, "covered_network": False}] * 3
    report = summarize_outcomes(outcomes, 0.1, 10, 2, misspecified=True)
    assert report.misspecified
    assert report.coverage == {"agent": 1.0, "network": 0.0}


# law of large numbers and central limit


def test_network_accumulate_matches_products(ring4):
    schedule = GraphSchedule.bernoulli(ring4, 0.4, seed=8)
    t = 15
    streams = np.random.default_rng(0).normal(size=(1, t, 4, 1))
    total = network_accumulate([schedule], streams)[0, :, 0]
    expected = sum(matrix_power_product(schedule, k, t).T @ streams[0, k - 1, :, 0] for k in range(1, t + 1))
    assert np.allclose(total, expected)


def test_lln_and_clt_on_a_path():
    path = GraphSchedule.static(metropolis_weights(named_topology("path", 3)))
    report = distributed_lln_clt_check(3, 2000, path, [0.0, 1.0, 2.0], sds=[1.0, 2.0, 0.5], replications=100, seed=1)
    assert report.network_mean == [1.0]
    assert report.lln_max_error < 0.1
    assert report.ks_pvalue > 1e-3
    assert len(report.z_means) == 100


def test_constant_streams_have_no_clt_statistic():
    path = GraphSchedule.static(metropolis_weights(named_topology("path", 3)))
    report = distributed_lln_clt_check(3, 50, path, [1.0, 1.0, 1.0], sds=[0.0, 0.0, 0.0], replications=2)
    assert report.lln_max_error == pytest.approx(0.0, abs=1e-12)
    assert math.isnan(report.ks_distance)


def test_single_replication_rows(ring4):
    out = lln_clt_replication(4, 100, GraphSchedule.static(ring4), [0, 1, 2, 3], [1.0] * 4, seed=0, replication=0)
    assert out["z_mean"].shape == (4,)
    assert out["clt_stat"].shape == (4,)
