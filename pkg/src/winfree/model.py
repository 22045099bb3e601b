"""Winfree mean-field model: coupling functions, parameters, vector field.

The ensemble obeys

    dx_i/dt = omega_i - (kappa / N) * sum_j P(x_j) * R(x_i)

with ``P`` and ``R`` smooth 2*pi-periodic functions. Phases are stored as
real lifts and never reduced modulo 2*pi here.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from numpy.typing import NDArray

FloatArray = NDArray[np.float64]
Periodic = Callable[[FloatArray], FloatArray]

TWO_PI = 2.0 * np.pi


class DimensionError(ValueError):
    """State and parameters disagree on the number of oscillators."""


@dataclass(frozen=True)
class ModelSpec:
    """Coupling functions ``P``, ``R`` with derivatives and declared sup-norms.

    All evaluators must accept and return numpy arrays. ``beta`` is set only
    for the ``P_beta(x) = 1 + cos(x + beta)``, ``R = sin`` family, which
    unlocks the compiled integration kernel.
    """

    P: Periodic
    dP: Periodic
    R: Periodic
    dR: Periodic
    d2R: Periodic
    sup_P: float
    sup_dP: float
    sup_R: float
    sup_dR: float
    sup_d2R: float
    beta: Optional[float] = None
    name: str = "custom"

    @classmethod
    def simplified(cls, beta: float) -> "ModelSpec":
        """The family ``P_beta(x) = 1 + cos(x + beta)``, ``R(x) = sin(x)``."""
        beta = float(beta)
        if not 0.0 <= beta <= np.pi:
            raise ValueError(f"beta must lie in [0, pi], got {beta}")
        return cls(
            P=lambda x: 1.0 + np.cos(x + beta),
            dP=lambda x: -np.sin(x + beta),
            R=np.sin,
            dR=np.cos,
            d2R=lambda x: -np.sin(x),
            sup_P=2.0,
            sup_dP=1.0,
            sup_R=1.0,
            sup_dR=1.0,
            sup_d2R=1.0,
            beta=beta,
            name=f"P_beta(beta={beta!r})",
        )

    @property
    def sup_norms(self) -> dict[str, float]:
        return {
            "P": self.sup_P,
            "dP": self.sup_dP,
            "R": self.sup_R,
            "dR": self.sup_dR,
            "d2R": self.sup_d2R,
        }

    def validate(self, n_grid: int = 4096, fd_step: float = 1e-4) -> None:
        """Check periodicity, derivative consistency and sup-norm declarations.

        Raises ``ValueError`` describing the first failed check.
        """
        x = np.linspace(0.0, TWO_PI, n_grid, endpoint=False)
        for name, f in (("P", self.P), ("R", self.R)):
            gap = np.max(np.abs(f(x + TWO_PI) - f(x)))
            if gap > 1e-12:
                raise ValueError(f"{name} is not 2*pi-periodic (gap {gap:.3e})")

        h = fd_step
        checks = (
            ("dP", self.P, self.dP),
            ("dR", self.R, self.dR),
            ("d2R", self.dR, self.d2R),
        )
        for name, f, df in checks:
            fd = (f(x + h) - f(x - h)) / (2.0 * h)
            # O(h^2) truncation with unit-scale third derivatives, plus roundoff
            err = np.max(np.abs(fd - df(x)))
            if err > 10.0 * h * h + 1e-9:
                raise ValueError(f"{name} disagrees with finite differences ({err:.3e})")

        for name, f in (("P", self.P), ("dP", self.dP), ("R", self.R),
                        ("dR", self.dR), ("d2R", self.d2R)):
            grid_max = float(np.max(np.abs(f(x))))
            declared = self.sup_norms[name]
            if declared < 0 or declared < grid_max - 1e-12:
                raise ValueError(
                    f"declared sup-norm of {name} ({declared}) below grid max {grid_max}"
                )


@dataclass(frozen=True, eq=False)
class EnsembleParams:
    """Number of oscillators, coupling, spectrum half-width and frequencies."""

    kappa: float
    gamma: float
    omega: FloatArray

    def __post_init__(self):
        omega = np.ascontiguousarray(self.omega, dtype=np.float64).ravel()
        object.__setattr__(self, "omega", omega)
        if omega.size < 1:
            raise ValueError("need at least one oscillator")
        if self.kappa < 0:
            raise ValueError(f"kappa must be >= 0, got {self.kappa}")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        slack = 1e-12
        if np.any(np.abs(omega - 1.0) > self.gamma + slack):
            raise ValueError("natural frequencies must lie in [1 - gamma, 1 + gamma]")

    @property
    def N(self) -> int:
        return int(self.omega.size)


@dataclass(frozen=True, eq=False)
class EnsembleState:
    """Time and the N phase lifts at that time."""

    t: float
    x: FloatArray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "x", np.array(self.x, dtype=np.float64).ravel())
        object.__setattr__(self, "t", float(self.t))

    @property
    def N(self) -> int:
        return int(self.x.size)


def field_rhs(x: FloatArray, omega: FloatArray, kappa: float, model: ModelSpec) -> FloatArray:
    """Array-level vector field; the mean field is formed once, O(N)."""
    m = np.mean(model.P(x))
    return omega - kappa * m * model.R(x)


def vector_field(state: EnsembleState, params: EnsembleParams, model: ModelSpec) -> FloatArray:
    """Time derivative of every phase lift at ``state``."""
    if state.N != params.N:
        raise DimensionError(f"state has {state.N} phases but params describe {params.N}")
    return field_rhs(state.x, params.omega, params.kappa, model)


def make_frequencies(
    N: int,
    gamma: float,
    scheme: str = "equidistant",
    seed: Optional[int] = None,
) -> FloatArray:
    """Natural frequencies in ``[1 - gamma, 1 + gamma]``.

    ``equidistant`` spans both endpoints (a single oscillator gets 1.0);
    ``seeded-uniform`` returns sorted uniform draws reproducible from ``seed``.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
    if scheme == "equidistant":
        if N == 1:
            return np.ones(1)
        i = np.arange(N, dtype=np.float64)
        return 1.0 - gamma + 2.0 * gamma * i / (N - 1)
    if scheme == "seeded-uniform":
        rng = np.random.default_rng(seed)
        return np.sort(rng.uniform(1.0 - gamma, 1.0 + gamma, size=N))
    raise ValueError(f"unknown frequency scheme {scheme!r}")


def make_initial_conditions(N: int, low: float, high: float, seed: Optional[int] = None) -> EnsembleState:
    """Uniform random phases on ``[low, high]`` at ``t = 0``.

    ``low == high`` is accepted and collapses to a constant state.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if low > high:
        raise ValueError(f"empty interval [{low}, {high}]")
    rng = np.random.default_rng(seed)
    return EnsembleState(0.0, rng.uniform(low, high, size=N))
