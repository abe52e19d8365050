"""Damped Newton minimization with optional box projection."""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from app.utils.errors import IndefiniteHessian, NoConvergence, RepresentationMismatch

logger = logging.getLogger(__name__)

GRAD_TOL = 1e-10
MAX_ITER = 100
MAX_HALVINGS = 60
SEPARATION_NORM = 1e6
BOUNDARY_TOL = 1e-12
FLAT_CURVATURE = 1e-8
STEP_FLOOR = 1e-12
DETECTION_LATTICE = 101

Objective = Callable[[np.ndarray], Tuple[float, np.ndarray, np.ndarray]]


@dataclass(frozen=True, eq=False)
class MEstimate:
    theta_hat: np.ndarray
    grad_norm: float
    iters: int
    converged: bool
    status: str = "converged"
    value: float = math.nan
    boundary: bool = False

    def raise_for_status(self) -> "MEstimate":
        if not self.converged:
            raise NoConvergence(
                f"Newton stopped with status '{self.status}' after {self.iters} iterations "
                f"(gradient norm {self.grad_norm:.3g})",
                {"theta_hat": self.theta_hat.tolist(), "status": self.status},
            )
        return self


def _projected_gradient(theta, grad, box):
    if box is None:
        return grad
    lower, upper = box
    grad = grad.copy()
    grad[(theta <= lower + BOUNDARY_TOL) & (grad > 0)] = 0.0
    grad[(theta >= upper - BOUNDARY_TOL) & (grad < 0)] = 0.0
    return grad


def _on_boundary(theta, box) -> bool:
    if box is None:
        return False
    lower, upper = box
    return bool(np.any(theta <= lower + BOUNDARY_TOL) or np.any(theta >= upper - BOUNDARY_TOL))


def _newton_direction(grad: np.ndarray, hess: np.ndarray, levenberg: bool) -> np.ndarray:
    hess = 0.5 * (hess + hess.T)
    shift = 0.0
    scale = max(1.0, float(np.max(np.abs(np.diag(hess)))))
    while True:
        try:
            factor = np.linalg.cholesky(hess + shift * np.eye(len(grad)))
            return -np.linalg.solve(factor.T, np.linalg.solve(factor, grad))
        except np.linalg.LinAlgError:
            if not levenberg:
                raise IndefiniteHessian("Hessian is not positive definite on the Newton path")
            shift = 1e-8 * scale if shift == 0.0 else 10.0 * shift


def newton_minimize(
    objective: Objective,
    theta_init,
    box: Optional[Tuple[np.ndarray, np.ndarray]] = None,
    max_iter: int = MAX_ITER,
    tol: float = GRAD_TOL,
    levenberg: Optional[bool] = None,
) -> MEstimate:
    """Minimize with step-halving on the objective value.

    Stops when the (projected) gradient norm falls below ``tol * (1 + |f|)``.
    A box projects every trial point and implies the Levenberg fallback for
    indefinite Hessians. Iterates whose norm exceeds 1e6 stop the search with
    status ``separation``.
    """
    if levenberg is None:
        levenberg = box is not None
    theta = np.atleast_1d(np.asarray(theta_init, dtype=float)).copy()
    if box is not None:
        box = (np.asarray(box[0], dtype=float), np.asarray(box[1], dtype=float))
        theta = np.clip(theta, *box)
    value, grad, hess = objective(theta)
    status = "max_iter"
    iters = 0
    for iters in range(1, max_iter + 1):
        pgrad = _projected_gradient(theta, grad, box)
        if np.linalg.norm(pgrad) < tol * (1.0 + abs(value)):
            status = "converged"
            iters -= 1
            break
        direction = _newton_direction(grad, hess, levenberg)
        step = 1.0
        accepted = False
        for _ in range(MAX_HALVINGS):
            trial = theta + step * direction
            if box is not None:
                trial = np.clip(trial, *box)
            trial_value, trial_grad, trial_hess = objective(trial)
            if math.isfinite(trial_value) and trial_value <= value:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            # no representable decrease left along a vanishing Newton step
            small = np.linalg.norm(direction) <= STEP_FLOOR * (1.0 + np.linalg.norm(theta))
            status = "converged" if small else "stalled"
            break
        moved = np.linalg.norm(trial - theta)
        theta, value, grad, hess = trial, trial_value, trial_grad, trial_hess
        if np.linalg.norm(theta) > SEPARATION_NORM:
            status = "separation"
            break
        if moved == 0.0:
            status = "stalled"
            break
    else:
        pgrad = _projected_gradient(theta, grad, box)
        if np.linalg.norm(pgrad) < tol * (1.0 + abs(value)):
            status = "converged"

    grad_norm = float(np.linalg.norm(_projected_gradient(theta, grad, box)))
    if status != "converged" and grad_norm < tol * (1.0 + abs(value)):
        status = "converged"
    if status != "converged":
        logger.debug("newton stopped: %s after %d iterations, |g|=%.3g", status, iters, grad_norm)
    return MEstimate(
        theta_hat=theta,
        grad_norm=grad_norm,
        iters=iters,
        converged=status == "converged",
        status=status,
        value=float(value),
        boundary=_on_boundary(theta, box),
    )


def m_estimate(loss: Objective, theta_init, max_iter: int = MAX_ITER) -> MEstimate:
    """Unconstrained minimizer of a surrogate loss.

    A solution whose curvature has vanished is a limit at infinity rather
    than a minimum (perfect separation in logistic data, or fewer
    observations than parameters); it is reported with status
    ``separation`` instead of a finite estimate.
    """
    result = newton_minimize(loss, theta_init, max_iter=max_iter, levenberg=True)
    if result.status in ("converged", "max_iter"):
        _, _, hess = loss(result.theta_hat)
        curvature = float(np.min(np.linalg.eigvalsh(0.5 * (hess + hess.T))))
        if curvature < FLAT_CURVATURE * (1.0 + abs(result.value)):
            logger.debug("loss is flat at %s, treating as separation", result.theta_hat.tolist())
            return MEstimate(
                theta_hat=result.theta_hat, grad_norm=result.grad_norm, iters=result.iters,
                converged=False, status="separation", value=result.value,
            )
    return result


def _loss_estimate(belief, theta: np.ndarray, status: str = "closed_form") -> MEstimate:
    value, grad, _ = belief.agent_loss(theta)
    return MEstimate(
        theta_hat=theta, grad_norm=float(np.linalg.norm(grad)), iters=0,
        converged=True, status=status, value=float(value),
    )


def gaussian_m_estimate(belief) -> MEstimate:
    """Closed form: invert grad B_t(theta) = chi, i.e. theta = chi / sum_a w[a] / sigma_a^2"""
    curvature = 0.0
    for j, model in enumerate(belief.network.models):
        curvature += float(np.sum(belief.w[belief.atoms.owners == j])) / model.var
    if curvature <= 0.0:
        # no evidence yet: every theta minimizes the constant loss
        return _loss_estimate(belief, belief.prior.mode(), status="prior_mode")
    return _loss_estimate(belief, np.atleast_1d(belief.chi / curvature))


def detection_m_estimate(belief, n: int = DETECTION_LATTICE) -> MEstimate:
    """Lattice argmin over [0,1]^2 polished by projected Newton.

    Ties on the lattice go to the lowest linear index, so a constant loss
    returns the corner (0, 0) with the boundary flag set.
    """
    lower, upper = np.zeros(2), np.ones(2)
    axes = [np.linspace(0.0, 1.0, n)] * 2
    mesh = np.meshgrid(*axes, indexing="ij")
    nodes = np.stack([g.reshape(-1) for g in mesh], axis=1)
    values = belief.agent_loss_batch(nodes)
    index = int(np.argmin(np.where(np.isfinite(values), values, np.inf)))
    coarse = nodes[index]
    polished = newton_minimize(belief.agent_loss, coarse, box=(lower, upper), levenberg=True)
    if polished.value > float(values[index]):
        logger.debug("detection polish moved uphill, keeping lattice point %s", coarse.tolist())
        value, grad, _ = belief.agent_loss(coarse)
        return MEstimate(
            theta_hat=coarse, grad_norm=float(np.linalg.norm(_projected_gradient(coarse, grad, (lower, upper)))),
            iters=polished.iters, converged=False, status="lattice", value=float(value),
            boundary=_on_boundary(coarse, (lower, upper)),
        )
    return polished


def grid_m_estimate(grid, prior) -> MEstimate:
    """Lattice minimizer of the loss implied by a grid belief, -(log q - log prior) / t"""
    nodes = grid.nodes()
    with np.errstate(invalid="ignore"):
        loss = -(grid.logw - prior.log_density_batch(nodes)) / max(grid.step, 1)
    index = int(np.argmin(np.where(np.isfinite(loss), loss, np.inf)))
    theta = nodes[index].copy()
    return MEstimate(
        theta_hat=theta, grad_norm=math.nan, iters=0, converged=True, status="lattice",
        value=float(loss[index]), boundary=_on_boundary(theta, (grid.lower, grid.upper)),
    )


def estimate_for_belief(belief, prior=None) -> MEstimate:
    """theta_hat_t^j for any belief, dispatched on its representation and model"""
    from app.belief.grid import GridBelief

    if isinstance(belief, GridBelief):
        if prior is None:
            raise RepresentationMismatch("grid beliefs need the prior to recover their loss")
        return grid_m_estimate(belief, prior)
    kind = belief.network.kind
    if kind == "gaussian":
        return gaussian_m_estimate(belief)
    if kind == "detection":
        return detection_m_estimate(belief)
    return m_estimate(belief.agent_loss, belief.prior.mode())
