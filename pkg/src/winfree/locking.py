"""Return map to the section ``mean = 0`` and the periodically locked solution.

The map follows the flow until the mean has advanced by 2*pi and then
translates back by 2*pi along the diagonal. A fixed point is a locked
solution: every phase advances by exactly 2*pi over the return time.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .integrator import IntegratorConfig, Trajectory, integrate, integrate_until_mean
from .model import TWO_PI, EnsembleParams, EnsembleState, FloatArray, ModelSpec
from .observables import mean_dispersion
from .theory import DomainCertificate

logger = logging.getLogger(__name__)

SECTION_TOL = 1e-10
CLOSURE_TOL = 1e-7


class LockingError(RuntimeError):
    """No locked solution found. This says nothing about existence."""


@dataclass(frozen=True, eq=False)
class LockedSolution:
    x_star: FloatArray = field(repr=False)
    theta: float
    omega: float
    psi_t: FloatArray = field(repr=False)
    psi: FloatArray = field(repr=False)
    iterations: int
    map_residual: float
    flow_residual: float

    @property
    def psi_max(self) -> float:
        return float(np.max(np.abs(self.psi)))

    def to_dict(self, include_psi: bool = False) -> dict:
        out = {
            "N": int(self.x_star.size),
            "theta": self.theta,
            "Omega": self.omega,
            "iterations": self.iterations,
            "map_residual": self.map_residual,
            "flow_residual": self.flow_residual,
            "psi_max": self.psi_max,
            "dispersion": float(np.ptp(self.x_star)),
            "x_star": self.x_star.tolist(),
        }
        if include_psi:
            out["psi_t"] = self.psi_t.tolist()
            out["psi"] = self.psi.tolist()
        return out


def poincare_map(
    X,
    params: EnsembleParams,
    model: ModelSpec,
    config: IntegratorConfig = IntegratorConfig(),
    t_max: float = 1e3,
) -> tuple[FloatArray, float]:
    """Image of ``X`` (mean 0) under the return map and the return time."""
    x = np.asarray(X, dtype=np.float64).ravel()
    mu = mean_dispersion(x)[0]
    if abs(mu) > SECTION_TOL:
        raise ValueError(f"state is off the section: mean {mu:.3e}")
    state, theta = integrate_until_mean(EnsembleState(0.0, x), params, model, config,
                                        target_mean=TWO_PI, t_max=t_max)
    return state.x - TWO_PI, theta


def extract_psi(traj: Trajectory, omega: float,
                closure_tol: float = CLOSURE_TOL) -> tuple[FloatArray, FloatArray, float]:
    """Deviations ``x_i(s) - omega s`` along one period.

    Returns the sample times (from 0), the deviations with shape
    ``(samples, N)`` and ``max |psi|``. Raises if the trajectory does not
    close up to the 2*pi translation.
    """
    s = traj.t - traj.t[0]
    psi = traj.x - omega * s[:, None]
    gap = float(np.max(np.abs(psi[-1] - psi[0])))
    if gap > closure_tol:
        raise LockingError(f"trajectory does not close: |psi(theta) - psi(0)| = {gap:.3e}")
    return s, psi, float(np.max(np.abs(psi)))


def _initial_iterate(params: EnsembleParams, certificate: Optional[DomainCertificate],
                     seed: Optional[int]) -> FloatArray:
    if params.gamma > 0:
        x = 1e-3 * (params.omega - 1.0) / params.gamma
    else:
        x = np.zeros(params.N)
    cap = None
    if certificate is not None and certificate.curve is not None:
        cap = 0.5 * float(certificate.curve(0.0))
    if seed is not None:
        rng = np.random.default_rng(seed)
        scale = 0.1 * (cap if cap is not None else 1e-3)
        x = x + rng.uniform(-scale, scale, params.N)
    x = x - np.mean(x)
    spread = np.ptp(x)
    if cap is not None and spread >= cap:
        x = x * (cap / spread)
    return x


def _anderson_update(xs: list, gs: list) -> FloatArray:
    """Type-II Anderson mixing over the stored iterates and map images."""
    F = np.array([g - x for x, g in zip(xs, gs)]).T
    G = np.array(gs).T
    dF = np.diff(F, axis=1)
    dG = np.diff(G, axis=1)
    coef, *_ = np.linalg.lstsq(dF, F[:, -1], rcond=None)
    return G[:, -1] - dG @ coef


def find_locked_solution(
    params: EnsembleParams,
    model: ModelSpec,
    config: IntegratorConfig = IntegratorConfig(),
    certificate: Optional[DomainCertificate] = None,
    seed: Optional[int] = None,
    max_iters: int = 5000,
    tol: float = 1e-10,
    flow_tol: float = 1e-8,
    accelerate: bool = False,
    history: int = 5,
    t_max: float = 1e3,
) -> LockedSolution:
    """Fixed point of the return map by Picard iteration.

    The mean is re-centred to 0 after every application of the map. With
    ``accelerate`` the iterates are mixed with Anderson acceleration.
    Convergence is declared when ``max |P(X) - X| <= tol``; the full-period
    flow residual is then checked against ``flow_tol``.
    """
    if certificate is not None and not certificate.in_U:
        raise ValueError("certificate is outside the certified domain")
    x = _initial_iterate(params, certificate, seed)
    xs: list = []
    gs: list = []
    residual = np.inf
    for it in range(1, max_iters + 1):
        image, theta = poincare_map(x, params, model, config, t_max=t_max)
        image -= np.mean(image)
        residual = float(np.max(np.abs(image - x)))
        if residual <= tol:
            break
        if accelerate:
            xs.append(x)
            gs.append(image)
            if len(xs) > history + 1:
                xs.pop(0)
                gs.pop(0)
            x = _anderson_update(xs, gs) if len(xs) > 1 else image
            x = x - np.mean(x)
        else:
            x = image
    else:
        raise LockingError(
            f"no locked solution found: residual {residual:.3e} after {max_iters} iterations"
        )
    logger.debug("return map converged in %d iterations (residual %.3e)", it, residual)

    traj = integrate(EnsembleState(0.0, x), params, model, config, t_end=theta, record_every=1)
    flow_residual = float(np.max(np.abs(traj.x[-1] - x - TWO_PI)))
    if flow_residual > flow_tol:
        raise LockingError(f"flow residual {flow_residual:.3e} exceeds {flow_tol:.1e}")
    omega = TWO_PI / theta
    psi_t, psi, _ = extract_psi(traj, omega)
    return LockedSolution(x_star=x, theta=theta, omega=omega, psi_t=psi_t, psi=psi,
                          iterations=it, map_residual=residual, flow_residual=flow_residual)


def return_time_bounds(params: EnsembleParams, model: ModelSpec,
                       certificate: DomainCertificate) -> tuple[float, float]:
    """Lower and upper bounds on the return time for a certified point."""
    lower = TWO_PI / (1.0 + params.gamma + params.kappa * model.sup_P * model.sup_R)
    margin = (1.0 - params.gamma - certificate.C_tilde * params.kappa * certificate.D
              - params.kappa / certificate.kappa_star)
    upper = TWO_PI / margin if margin > 0 else np.inf
    return lower, upper
