"""Compiled RK4 loops for the P_beta(x) = 1 + cos(x + beta), R = sin family.

Status codes returned by the loops: 0 ok, 1 non-finite state, 2 step budget
exhausted before the mean reached its target, 3 mean decreased over a
whole window of consecutive steps.
"""

import numba as nb
import numpy as np

OK = 0
NON_FINITE = 1
NOT_REACHED = 2
MEAN_DECREASING = 3


@nb.njit(cache=True, fastmath=False)
def _rhs(x, omega, kappa, beta, out):
    n = x.size
    m = 0.0
    for j in range(n):
        m += 1.0 + np.cos(x[j] + beta)
    m /= n
    c = kappa * m
    for i in range(n):
        out[i] = omega[i] - c * np.sin(x[i])


@nb.njit(cache=True, fastmath=False)
def _step(x, omega, kappa, beta, h, k1, k2, k3, k4, tmp):
    n = x.size
    _rhs(x, omega, kappa, beta, k1)
    for i in range(n):
        tmp[i] = x[i] + 0.5 * h * k1[i]
    _rhs(tmp, omega, kappa, beta, k2)
    for i in range(n):
        tmp[i] = x[i] + 0.5 * h * k2[i]
    _rhs(tmp, omega, kappa, beta, k3)
    for i in range(n):
        tmp[i] = x[i] + h * k3[i]
    _rhs(tmp, omega, kappa, beta, k4)
    finite = True
    for i in range(n):
        x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        if not np.isfinite(x[i]):
            finite = False
    return finite


@nb.njit(cache=True)
def rk4_run(x0, omega, kappa, beta, h, n_steps, last_h, record_every, out):
    """Take ``n_steps`` steps of size ``h`` then one of ``last_h`` (if nonzero).

    Row ``r`` of ``out`` receives the state after ``r * record_every`` steps;
    the final state always goes in the last row. Returns (status, steps done).
    """
    n = x0.size
    x = x0.copy()
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    tmp = np.empty(n)
    out[0, :] = x
    row = 1
    for k in range(1, n_steps + 1):
        if not _step(x, omega, kappa, beta, h, k1, k2, k3, k4, tmp):
            out[out.shape[0] - 1, :] = x
            return NON_FINITE, k
        if k % record_every == 0 and row < out.shape[0] - 1:
            out[row, :] = x
            row += 1
    if last_h != 0.0:
        if not _step(x, omega, kappa, beta, last_h, k1, k2, k3, k4, tmp):
            out[out.shape[0] - 1, :] = x
            return NON_FINITE, n_steps + 1
    out[out.shape[0] - 1, :] = x
    return OK, n_steps


@nb.njit(cache=True)
def rk4_until_mean(x0, omega, kappa, beta, h, target, max_steps, window, x_out):
    """Step until the mean reaches ``target``; ``x_out`` gets the last state
    strictly below it. Returns (status, number of full steps taken)."""
    n = x0.size
    x = x0.copy()
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    tmp = np.empty(n)
    mu = np.mean(x)
    falling = 0
    for k in range(max_steps):
        x_out[:] = x
        if not _step(x, omega, kappa, beta, h, k1, k2, k3, k4, tmp):
            return NON_FINITE, k
        mu_next = np.mean(x)
        if mu_next >= target:
            return OK, k
        falling = falling + 1 if mu_next < mu else 0
        if falling >= window:
            return MEAN_DECREASING, k + 1
        mu = mu_next
    x_out[:] = x
    return NOT_REACHED, max_steps
