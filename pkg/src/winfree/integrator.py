"""Fixed-step RK4 integration of the ensemble with mean-value event location."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from . import _kernels
from .model import EnsembleParams, EnsembleState, FloatArray, ModelSpec, field_rhs
from .observables import mean_dispersion, order_d


class IntegrationError(RuntimeError):
    """Base class for integration failures."""


class NonFiniteStateError(IntegrationError):
    pass


class MeanNotReachedError(IntegrationError):
    """The mean did not reach its target before ``t_max``."""


class MeanDecreasingError(IntegrationError):
    """The mean kept decreasing over a whole detection window."""


@dataclass(frozen=True)
class IntegratorConfig:
    h: float = 1e-2
    method: str = "RK4"
    event_tolerance: float = 1e-12
    # False forces the generic numpy path even for the P_beta family
    use_kernel: bool = True

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError(f"step size must be positive, got {self.h}")
        if not self.event_tolerance > 0:
            raise ValueError("event_tolerance must be positive")
        if self.method != "RK4":
            raise ValueError(f"unsupported method {self.method!r}")


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Recorded samples ``t[k]``, ``x[k]`` plus cached mean and ``d`` values."""

    t: FloatArray
    x: FloatArray = field(repr=False)
    mu: FloatArray = field(repr=False)
    d: FloatArray = field(repr=False)

    @classmethod
    def from_states(cls, t: FloatArray, x: FloatArray) -> "Trajectory":
        mu = np.array([mean_dispersion(row)[0] for row in x])
        d = np.array([order_d(row) for row in x])
        return cls(t=t, x=x, mu=mu, d=d)

    @property
    def final(self) -> EnsembleState:
        return EnsembleState(self.t[-1], self.x[-1])


def _fast(model: ModelSpec, config: IntegratorConfig) -> bool:
    return config.use_kernel and model.beta is not None


def rk4_step(x: FloatArray, params: EnsembleParams, model: ModelSpec, h: float,
             config: IntegratorConfig) -> FloatArray:
    """One classical RK4 step of size ``h`` (same arithmetic as bulk runs)."""
    if _fast(model, config):
        out = np.empty((2, x.size))
        status, _ = _kernels.rk4_run(x, params.omega, params.kappa, model.beta,
                                     h, 0, h, 1, out)
        if status != _kernels.OK:
            raise NonFiniteStateError("non-finite state in single RK4 step")
        return out[-1].copy()
    w, k = params.omega, params.kappa
    k1 = field_rhs(x, w, k, model)
    k2 = field_rhs(x + 0.5 * h * k1, w, k, model)
    k3 = field_rhs(x + 0.5 * h * k2, w, k, model)
    k4 = field_rhs(x + h * k3, w, k, model)
    x_new = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(x_new)):
        raise NonFiniteStateError("non-finite state in single RK4 step")
    return x_new


def _split_span(span: float, h: float) -> tuple[int, float]:
    n = int(span // h)
    rem = span - n * h
    if rem >= h * (1.0 - 1e-9):
        n, rem = n + 1, 0.0
    elif rem <= h * 1e-9:
        rem = 0.0
    return n, rem


def integrate(
    state0: EnsembleState,
    params: EnsembleParams,
    model: ModelSpec,
    config: IntegratorConfig = IntegratorConfig(),
    t_end: float = 1.0,
    record_every: int = 1,
) -> Trajectory:
    """RK4 from ``state0.t`` to ``t_end``; the last step is shortened to land
    exactly on ``t_end``. Every ``record_every``-th state is kept, plus the
    final one."""
    if state0.N != params.N:
        raise ValueError(f"state has {state0.N} phases, params {params.N}")
    if not t_end > state0.t:
        raise ValueError(f"t_end={t_end} must exceed the initial time {state0.t}")
    if record_every < 1:
        raise ValueError("record_every must be >= 1")
    h = config.h
    t0 = state0.t
    n_steps, last_h = _split_span(t_end - t0, h)
    ks = np.arange(0, n_steps, record_every)
    if last_h == 0.0 and n_steps == 0:
        ks = np.array([0])
    times = np.append(t0 + ks * h, t_end)
    out = np.empty((times.size, params.N))

    if _fast(model, config):
        status, k_fail = _kernels.rk4_run(state0.x, params.omega, params.kappa,
                                          model.beta, h, n_steps, last_h,
                                          record_every, out)
        if status == _kernels.NON_FINITE:
            raise NonFiniteStateError(
                f"non-finite state at step {k_fail} (t ~ {t0 + k_fail * h:.6g})"
            )
    else:
        x = state0.x.copy()
        out[0] = x
        row = 1
        for k in range(1, n_steps + 1):
            try:
                x = rk4_step(x, params, model, h, config)
            except NonFiniteStateError:
                raise NonFiniteStateError(
                    f"non-finite state at step {k} (t ~ {t0 + k * h:.6g})"
                ) from None
            if k % record_every == 0 and row < times.size - 1:
                out[row] = x
                row += 1
        if last_h > 0.0:
            x = rk4_step(x, params, model, last_h, config)
        out[-1] = x
    return Trajectory.from_states(times, out)


def _steps_below(x, params, model, config, target, max_steps, window):
    """Advance by full steps while the mean stays below ``target``.

    Returns (last state below target, full steps taken, status)."""
    if _fast(model, config):
        x_out = np.empty_like(x)
        status, k = _kernels.rk4_until_mean(x, params.omega, params.kappa,
                                            model.beta, config.h, target,
                                            max_steps, window, x_out)
        return x_out, k, status
    mu = np.mean(x)
    falling = 0
    for k in range(max_steps):
        x_next = rk4_step(x, params, model, config.h, config)
        mu_next = np.mean(x_next)
        if mu_next >= target:
            return x, k, _kernels.OK
        falling = falling + 1 if mu_next < mu else 0
        if falling >= window:
            return x_next, k + 1, _kernels.MEAN_DECREASING
        x, mu = x_next, mu_next
    return x, max_steps, _kernels.NOT_REACHED


def _hermite_guess(m0, m1, dm0, dm1, h, target):
    """Root of the cubic Hermite interpolant of the mean across one step."""
    def p(tau):
        s = tau / h
        h00 = 2 * s**3 - 3 * s**2 + 1
        h10 = s**3 - 2 * s**2 + s
        h01 = -2 * s**3 + 3 * s**2
        h11 = s**3 - s**2
        return h00 * m0 + h10 * h * dm0 + h01 * m1 + h11 * h * dm1 - target
    if p(0.0) * p(h) > 0:
        return 0.5 * h
    return brentq(p, 0.0, h, xtol=1e-15)


def integrate_until_mean(
    state0: EnsembleState,
    params: EnsembleParams,
    model: ModelSpec,
    config: IntegratorConfig = IntegratorConfig(),
    target_mean: float = 2.0 * np.pi,
    t_max: float = 1e4,
    window: Optional[int] = None,
) -> tuple[EnsembleState, float]:
    """First state along the flow whose mean equals ``target_mean``.

    The crossing is bracketed between two RK4 samples and located on the
    partial RK4 step itself (seeded by a cubic Hermite interpolant), so the
    returned state is exactly what ``integrate`` produces at that time.
    ``window`` is the number of consecutive decreasing steps treated as a
    persistent decrease (default: one time unit).
    """
    if state0.N != params.N:
        raise ValueError(f"state has {state0.N} phases, params {params.N}")
    mu0 = mean_dispersion(state0.x)[0]
    if not mu0 < target_mean:
        raise ValueError(f"target mean {target_mean} must exceed the initial mean {mu0}")
    h = config.h
    tol = config.event_tolerance
    if window is None:
        window = max(1, int(math.ceil(1.0 / h)))

    t_base, x = state0.t, state0.x.copy()
    while True:
        budget = int(math.ceil((state0.t + t_max - t_base) / h))
        if budget <= 0:
            raise MeanNotReachedError(f"mean {np.mean(x):.6g} short of {target_mean} at t_max")
        x_k, k, status = _steps_below(x, params, model, config, target_mean, budget, window)
        t_k = t_base + k * h
        if status == _kernels.NON_FINITE:
            raise NonFiniteStateError(f"non-finite state near t={t_k:.6g}")
        if status == _kernels.NOT_REACHED:
            raise MeanNotReachedError(
                f"mean {np.mean(x_k):.6g} still below {target_mean} at t={t_k:.6g}"
            )
        if status == _kernels.MEAN_DECREASING:
            raise MeanDecreasingError(
                f"mean decreased for {window} consecutive steps up to t={t_k:.6g}"
            )
        x_next = rk4_step(x_k, params, model, h, config)
        m0 = np.mean(x_k) - target_mean
        m1 = np.mean(x_next) - target_mean
        if m1 < 0.0:
            # compiled and numpy means disagree in the last ulp; keep stepping
            x, t_base = x_next, t_k + h
            continue
        break

    if m0 >= 0.0:
        # numpy mean already on target at the bracket start (ulp-level gap)
        return EnsembleState(t_k, x_k), t_k

    def g(tau):
        if tau == 0.0:
            return m0
        return np.mean(rk4_step(x_k, params, model, tau, config)) - target_mean

    dm0 = np.mean(field_rhs(x_k, params.omega, params.kappa, model))
    dm1 = np.mean(field_rhs(x_next, params.omega, params.kappa, model))
    guess = _hermite_guess(m0, m1, dm0, dm1, h, 0.0)
    lo, hi = 0.0, h
    eps = 1e-7 * h
    a, b = max(0.0, guess - eps), min(h, guess + eps)
    if g(a) < 0.0 <= g(b):
        lo, hi = a, b
    tau = brentq(g, lo, hi, xtol=1e-16, rtol=4 * np.finfo(float).eps, maxiter=200)
    x_cross = rk4_step(x_k, params, model, tau, config)
    resid = abs(np.mean(x_cross) - target_mean)
    if resid > tol:
        raise IntegrationError(f"event located only to {resid:.3e} in the mean")
    t_cross = t_k + tau
    return EnsembleState(t_cross, x_cross), t_cross
