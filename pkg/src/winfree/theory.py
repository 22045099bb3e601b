"""Closed-form objects behind the certified synchronization domain.

Covers the locking threshold ``kappa_star``, the averaged stability integral
``H``, the coefficient ``beta_kappa`` and its periodic affine solution (the
dispersion curve), the constants ``C``/``C~``, the source term ``alpha``, the
capacity ``D(kappa)``, the gain ``L(kappa)`` and membership in the certified
parameter set and in the invariant tube around the diagonal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from .model import TWO_PI, FloatArray, ModelSpec
from .observables import mean_dispersion

QUAD_PANELS = 4096
QUAD_TOL = 1e-10
MAX_PANELS = 1 << 20
KSTAR_GRID = 16384
CURVE_GRID = 2048


class QuadratureError(ArithmeticError):
    """Composite Simpson failed to settle within the panel budget."""


class SyncHypothesisError(ValueError):
    """The averaged stability integral is not certifiably positive."""


class MeanVelocityError(ValueError):
    """The mean velocity bound ``1 - gamma - C~ kappa D - kappa/kappa*`` is not positive."""


class CouplingRangeError(ValueError):
    """kappa outside the range where the requested object is defined."""


# -- quadrature -------------------------------------------------------------

def simpson(f: Callable[[FloatArray], FloatArray], a: float, b: float, panels: int) -> float:
    """Composite Simpson rule with an even number of panels."""
    if panels % 2:
        panels += 1
    x = np.linspace(a, b, panels + 1)
    y = f(x)
    h = (b - a) / panels
    return float(h / 3.0 * (y[0] + y[-1] + 4.0 * y[1:-1:2].sum() + 2.0 * y[2:-1:2].sum()))


def simpson_checked(f, a: float, b: float, panels: int = QUAD_PANELS, tol: float = QUAD_TOL) -> float:
    """Simpson with a halving-step error estimate.

    The panel count doubles until the fine and coarse results agree within
    ``tol``; a disagreement that survives ``MAX_PANELS`` raises.
    """
    coarse = simpson(f, a, b, panels // 2)
    while True:
        fine = simpson(f, a, b, panels)
        if abs(fine - coarse) <= tol:
            return fine
        if panels >= MAX_PANELS:
            raise QuadratureError(
                f"Simpson estimates differ by {abs(fine - coarse):.3e} at {panels} panels"
            )
        coarse, panels = fine, panels * 2


def negative_part_integral(f, a: float = 0.0, b: float = TWO_PI, panels: int = QUAD_PANELS,
                           tol: float = QUAD_TOL) -> float:
    """Integral of ``max(0, -f)`` over ``[a, b]``.

    Sign changes are located on the Simpson grid and refined by root
    finding, so each piece is smooth and Simpson keeps its order.
    """
    x = np.linspace(a, b, panels + 1)
    y = f(x)
    cuts = [a]
    for i in np.nonzero(np.signbit(y[:-1]) != np.signbit(y[1:]))[0]:
        if y[i] == 0.0:
            cuts.append(float(x[i]))
        else:
            cuts.append(brentq(lambda s: float(f(np.array([s]))[0]), x[i], x[i + 1], xtol=1e-15))
    cuts.append(b)
    total = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        if hi - lo <= 0.0:
            continue
        # f keeps one sign on each piece (it may touch zero inside, so no
        # point probe); the piece's own integral tells which sign
        piece_panels = max(16, int(panels * (hi - lo) / (b - a)) & ~1)
        piece = simpson_checked(f, lo, hi, piece_panels, tol)
        if piece < 0.0:
            total -= piece
    return total


# -- locking threshold and stability integral --------------------------------

def _golden_max(f, lo: float, hi: float, tol: float = 1e-12) -> float:
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def max_PR(model: ModelSpec) -> tuple[float, float]:
    """Location and value of ``max_x P(x) R(x)`` (smallest maximiser on ties)."""
    x = np.linspace(0.0, TWO_PI, KSTAR_GRID, endpoint=False)
    y = model.P(x) * model.R(x)
    i = int(np.argmax(y))
    dx = x[1] - x[0]

    def pr(s):
        s = np.array([s])
        return float((model.P(s) * model.R(s))[0])

    x_best = _golden_max(pr, x[i] - dx, x[i] + dx)
    y_best = pr(x_best)
    if y_best < y[i]:
        return float(x[i]), float(y[i])
    return x_best, y_best


def kappa_star(model: ModelSpec) -> float:
    """Locking threshold ``1 / max P R``; ``math.inf`` when ``P R <= 0`` everywhere."""
    _, top = max_PR(model)
    if top <= 0.0:
        return math.inf
    return 1.0 / top


def _require_below_kstar(model: ModelSpec, kappa: float, kstar: Optional[float] = None) -> float:
    if kstar is None:
        kstar = kappa_star(model)
    if not 0.0 <= kappa < kstar:
        raise CouplingRangeError(f"kappa={kappa} outside [0, kappa*={kstar})")
    return kstar


def h_integral(model: ModelSpec, kappa: float) -> float:
    """Integral over one period of ``P R' / (1 - kappa P R)``."""
    _require_below_kstar(model, kappa)

    def integrand(s):
        return model.P(s) * model.dR(s) / (1.0 - kappa * model.P(s) * model.R(s))

    return simpson_checked(integrand, 0.0, TWO_PI)


def beta_kappa(model: ModelSpec, kappa: float, s):
    """``kappa P(s) R'(s) / (1 - kappa P(s) R(s))``; accepts scalars or arrays."""
    s_arr = np.asarray(s, dtype=np.float64)
    den = 1.0 - kappa * model.P(s_arr) * model.R(s_arr)
    if np.any(den <= 0.0):
        raise CouplingRangeError(f"1 - kappa P R vanishes for kappa={kappa}")
    out = kappa * model.P(s_arr) * model.dR(s_arr) / den
    return float(out) if out.ndim == 0 else out


# -- periodic solution of the affine dispersion equation ----------------------

@dataclass(frozen=True, eq=False)
class DispersionCurve:
    """Positive periodic solution of ``D' = alpha - beta(s) D`` sampled on
    ``n + 1`` nodes covering ``[0, 2 pi]`` (both ends included)."""

    alpha: float
    s: FloatArray = field(repr=False)
    beta: FloatArray = field(repr=False)
    delta: FloatArray = field(repr=False)
    B: FloatArray = field(repr=False)
    beta_integral: float = 0.0
    beta_negative_integral: float = 0.0

    def __call__(self, s):
        """Periodic linear interpolation of the curve."""
        return np.interp(np.mod(s, TWO_PI), self.s, self.delta)

    @property
    def max(self) -> float:
        return float(np.max(self.delta))

    @property
    def upper_bound(self) -> float:
        """Sup bound ``alpha 2 pi e^{int beta^-} / (1 - e^{-int beta})``."""
        return (self.alpha * TWO_PI * math.exp(self.beta_negative_integral)
                / -math.expm1(-self.beta_integral))


def periodic_affine_solution(alpha: float, beta_fn: Callable[[FloatArray], FloatArray],
                             n: int = CURVE_GRID) -> DispersionCurve:
    """Evaluate the unique periodic solution of ``D' = alpha - beta D``.

    Uses ``D(s) = alpha * int_s^{s+2pi} exp(B(t) - B(s)) dt / (exp(B(2pi)) - 1)``
    with ``B`` the cumulative integral of ``beta``. Both ``B`` and the
    cumulative integral of ``exp(B)`` are tabulated cell by cell with
    Simpson's rule, which turns the outer integral into O(n) work.
    """
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    s = np.linspace(0.0, TWO_PI, n + 1)
    hc = TWO_PI / n
    left = s[:-1]
    b = np.asarray(beta_fn(s), dtype=np.float64)
    b_q1 = beta_fn(left + 0.25 * hc)
    b_mid = beta_fn(left + 0.5 * hc)
    b_q3 = beta_fn(left + 0.75 * hc)

    B = np.concatenate(([0.0], np.cumsum(hc / 6.0 * (b[:-1] + 4.0 * b_mid + b[1:]))))
    total = float(B[-1])
    if not total > 0.0:
        raise ValueError(f"integral of beta over a period must be positive, got {total}")
    # refine the last-node value with the quarter points (same Simpson on half cells)
    B_half = B[:-1] + 0.5 * hc / 6.0 * (b[:-1] + 4.0 * b_q1 + b_mid)
    B_fine_total = float(np.sum(0.5 * hc / 6.0 * (b[:-1] + 4.0 * b_q1 + b_mid)
                                + 0.5 * hc / 6.0 * (b_mid + 4.0 * b_q3 + b[1:])))

    E = np.exp(B)
    E_half = np.exp(B_half)
    A = np.concatenate(([0.0], np.cumsum(hc / 6.0 * (E[:-1] + 4.0 * E_half + E[1:]))))
    A_total = A[-1]
    I = np.exp(-B) * ((A_total - A) + math.exp(total) * A)
    delta = alpha * I / math.expm1(total)

    neg = negative_part_integral(beta_fn)
    return DispersionCurve(alpha=float(alpha), s=s, beta=b, delta=delta, B=B,
                           beta_integral=B_fine_total, beta_negative_integral=neg)


# -- constants of the certified domain ---------------------------------------

@dataclass(frozen=True)
class TheoryConstants:
    C: float
    C_tilde: float

    @classmethod
    def from_model(cls, model: ModelSpec) -> "TheoryConstants":
        return cls(
            C=model.sup_P * model.sup_d2R + model.sup_dP * model.sup_dR,
            C_tilde=model.sup_dP * model.sup_R + model.sup_P * model.sup_dR,
        )


def mean_velocity_margin(gamma: float, kappa: float, D: float, constants: TheoryConstants,
                      kstar: float) -> float:
    """``1 - gamma - C~ kappa D - kappa/kappa*``; positive means the mean increases."""
    return 1.0 - gamma - constants.C_tilde * kappa * D - kappa / kstar


def alpha_term(gamma: float, kappa: float, D: float, constants: TheoryConstants,
               kstar: float) -> float:
    """Source term of the dispersion inequality."""
    margin = mean_velocity_margin(gamma, kappa, D, constants, kstar)
    if not margin > 0.0:
        raise MeanVelocityError(f"mean-velocity margin {margin} is not positive")
    C, Ct = constants.C, constants.C_tilde
    lock = 1.0 - kappa / kstar
    drift = 2.0 * gamma + C * kappa * D * D
    return drift / lock + (drift + Ct * kappa * D) * (gamma + Ct * kappa * D) / (margin * lock)


def capacity_D(kappa: float, constants: TheoryConstants, kstar: float, L: float) -> float:
    """``min(1, L / (2(2+C)/(1-q) + 2 C~ (1+C~) kappa / (1-q)^2))`` with ``q = kappa/kappa*``."""
    if not 0.0 < kappa < kstar:
        raise CouplingRangeError(f"kappa={kappa} outside (0, kappa*={kstar})")
    C, Ct = constants.C, constants.C_tilde
    lock = 1.0 - kappa / kstar
    den = 2.0 * (2.0 + C) / lock + 2.0 * Ct * (1.0 + Ct) * kappa / lock**2
    return min(1.0, L / den)


def gain_L(model: ModelSpec, kappa: float, kstar: Optional[float] = None) -> float:
    """``(1 - e^{-int beta_k}) / (2 pi kappa e^{int beta_k^-})``.

    Raises ``SyncHypothesisError`` when the integral of ``beta_kappa`` is not above the
    quadrature tolerance.
    """
    kstar = _require_below_kstar(model, kappa, kstar)
    if kappa == 0.0:
        raise CouplingRangeError("gain L is defined for kappa > 0")

    def bk(s):
        return beta_kappa(model, kappa, s)

    total = simpson_checked(bk, 0.0, TWO_PI)
    if not total > QUAD_TOL:
        raise SyncHypothesisError(f"integral of beta_kappa is {total:.3e} for kappa={kappa}")
    neg = negative_part_integral(bk)
    return -math.expm1(-total) / (TWO_PI * kappa * math.exp(neg))


# -- certificate ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DomainCertificate:
    gamma: float
    kappa: float
    kappa_star: float
    C: float
    C_tilde: float
    L: float
    D: float
    alpha: Optional[float]
    in_U: bool
    mean_increasing: bool
    curve: Optional[DispersionCurve] = field(default=None, repr=False)

    @property
    def max_delta(self) -> Optional[float]:
        return None if self.curve is None else self.curve.max

    @property
    def curve_below_D(self) -> Optional[bool]:
        return None if self.curve is None else self.curve.max < self.D

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "kappa": self.kappa,
            "kappa_star": self.kappa_star,
            "C": self.C,
            "C_tilde": self.C_tilde,
            "L": self.L,
            "D": self.D,
            "alpha": self.alpha,
            "in_U": self.in_U,
            "mean_increasing": self.mean_increasing,
            "max_delta": self.max_delta,
        }


def certify_domain(model: ModelSpec, gamma: float, kappa: float, n: int = CURVE_GRID,
                   kstar: Optional[float] = None) -> DomainCertificate:
    """Decide whether ``(gamma, kappa)`` lies in the certified set and, if so,
    build its dispersion curve. Failures of the synchronization hypothesis propagate as ``SyncHypothesisError``."""
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    if not kappa > 0.0:
        raise ValueError(f"kappa must be positive, got {kappa}")
    if kstar is None:
        kstar = kappa_star(model)
    consts = TheoryConstants.from_model(model)
    if not kappa < kstar:
        return DomainCertificate(gamma, kappa, kstar, consts.C, consts.C_tilde,
                                 math.nan, math.nan, None, False, False)
    L = gain_L(model, kappa, kstar)
    D = capacity_D(kappa, consts, kstar, L)
    margin = mean_velocity_margin(gamma, kappa, D, consts, kstar)
    in_U = gamma < kappa * D * D
    alpha = None
    curve = None
    if in_U and margin > 0.0:
        alpha = alpha_term(gamma, kappa, D, consts, kstar)
        curve = periodic_affine_solution(alpha, lambda s: beta_kappa(model, kappa, s), n)
    return DomainCertificate(gamma, kappa, kstar, consts.C, consts.C_tilde, L, D, alpha,
                             in_U, margin > 0.0, curve)


def in_invariant_set(X, certificate: DomainCertificate) -> bool:
    """Whether the dispersion of ``X`` is strictly below the curve at its mean."""
    if not certificate.in_U or certificate.curve is None:
        raise ValueError("certificate does not lie in the certified domain")
    mu, spread = mean_dispersion(X)
    return bool(spread < float(certificate.curve(mu)))
