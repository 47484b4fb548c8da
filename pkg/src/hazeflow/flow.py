"""Haze-aware vector field and the fixed-step ODE solvers that integrate it.

The field combines the purifier output with a lambda-weighted LUT
correction; Euler, midpoint, and classic RK4 steps advance the image from
the hazy state at t=0 to the clear state at t=1. Gradients flow through
the unrolled solver (discretize-then-optimize).
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field
from typing import Callable, Optional

import numpy as np

from .errors import DataError, DivergenceError
from .lut import Lut3D, trilinear_apply
from .purifier import PurifierNet, purify
from .tensor import Tensor

SOLVERS = ("euler", "midpoint", "rk4")

# vector-field evaluations per step
FIELD_EVALS = {"euler": 1, "midpoint": 2, "rk4": 4}


@dataclass
class FlowConfig:
    solver: str = "rk4"
    steps: int = 4
    t0: float = 0.0
    t1: float = 1.0
    lam: float = 0.5

    def __post_init__(self):
        if self.solver not in SOLVERS:
            raise ValueError(f"unknown solver {self.solver!r}, expected one of {SOLVERS}")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.t1 <= self.t0:
            raise ValueError("time range must satisfy t1 > t0")
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")

    @property
    def dt(self) -> float:
        return (self.t1 - self.t0) / self.steps


def vector_field(x: Tensor, net: PurifierNet, lut: Optional[Lut3D],
                 lam: float) -> Tensor:
    """f(x) = purify(x) + lam * LUT(clamp(x)).

    The LUT branch sees the clamped image (its domain is [0, C_max]); the
    purifier sees the raw state. With lam == 0 the LUT branch is skipped
    entirely, so the grid receives no gradient.
    """
    o_m = purify(x, net)
    if lam == 0 or lut is None:
        return o_m
    o_lut = trilinear_apply(x.clamp(0.0, lut.c_max), lut)
    return o_m + o_lut * lam


def euler_step(x, f: Callable, t: float, dt: float):
    return x + f(t, x) * dt


def midpoint_step(x, f: Callable, t: float, dt: float):
    return x + f(t + dt / 2.0, x + f(t, x) * (dt / 2.0)) * dt


def rk4_step(x, f: Callable, t: float, dt: float):
    k1 = f(t, x)
    k2 = f(t + dt / 2.0, x + k1 * (dt / 2.0))
    k3 = f(t + dt / 2.0, x + k2 * (dt / 2.0))
    k4 = f(t + dt, x + k3 * dt)
    return x + (k1 + 2.0 * k2 + 2.0 * k3 + k4) * (dt / 6.0)


_STEPPERS = {"euler": euler_step, "midpoint": midpoint_step, "rk4": rk4_step}


def _values(state) -> np.ndarray:
    return state.data if isinstance(state, Tensor) else np.asarray(state)


@dataclass
class IntegrationResult:
    """Final solver state plus the clamped image and optional snapshots."""
    raw_final: object
    output: object
    trajectory: list = dataclass_field(default_factory=list)


def integrate_field(x0, field: Callable, cfg: FlowConfig,
                    record: bool = False):
    """Advance x0 through cfg.steps solver steps of the given field.

    Returns (raw final state, list of intermediate states X_1..X_n when
    recording). No clamping is applied here; intermediate states stay
    free so the solver arithmetic is exact.
    """
    stepper = _STEPPERS[cfg.solver]
    dt = cfg.dt
    x = x0
    snapshots = []
    for i in range(cfg.steps):
        t = cfg.t0 + i * dt
        x = stepper(x, field, t, dt)
        if not np.all(np.isfinite(_values(x))):
            raise DivergenceError(
                f"non-finite state after solver step {i + 1}", step=i + 1)
        if record:
            snapshots.append(x)
    return x, snapshots


def integrate(x0: Tensor, net: PurifierNet, lut: Optional[Lut3D],
              cfg: FlowConfig, record_trajectory: bool = False) -> IntegrationResult:
    """Run the haze-aware flow from a [0,1] image; output is clamped to [0,1].

    The unclamped final state is kept on the result for training losses.
    """
    vals = _values(x0)
    if vals.min() < -1e-6 or vals.max() > 1.0 + 1e-6:
        raise DataError(
            f"input image values [{vals.min():.4g}, {vals.max():.4g}] "
            "outside [0, 1]")

    def field(t: float, x: Tensor) -> Tensor:
        return vector_field(x, net, lut, cfg.lam)

    raw, snapshots = integrate_field(x0, field, cfg, record=record_trajectory)
    return IntegrationResult(raw_final=raw, output=raw.clamp(0.0, 1.0),
                             trajectory=snapshots)
