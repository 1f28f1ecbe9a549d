"""Per-axis extended Kalman filter over a sinusoidal image offset.

State x = [theta, omega, a, b, c]: the tracked coordinate is modelled as
h(x) = a*sin(theta) + b*cos(theta) + c with theta advancing at omega rad/s.
Prediction is linear (theta += omega*dt); the measurement is linearized at the
current state. Updates use the Joseph-form covariance so P stays symmetric
positive semidefinite, and innovations beyond 5 standard deviations are
rejected as outliers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, NumericalDegeneracyError, OrderingError
from .freqest import SinusoidInit

GATE_SIGMAS = 5.0

STATE_THETA, STATE_OMEGA, STATE_A, STATE_B, STATE_C = range(5)

TRACE_DTYPE = np.dtype(
    [
        ("t", "<u8"),
        ("theta", "<f8"),
        ("omega", "<f8"),
        ("a", "<f8"),
        ("b", "<f8"),
        ("c", "<f8"),
        ("innovation", "<f8"),
        ("accepted", "?"),
    ]
)


def _default_q() -> np.ndarray:
    return np.diag([1e-8, 1e-4, 1e-4, 1e-4, 1e-4])


@dataclass(frozen=True)
class NoiseConfig:
    """Process noise Q (per second of elapsed time) and measurement std (px)."""

    q: np.ndarray = field(default_factory=_default_q)
    sigma_r: float = 0.5

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        if q.shape != (5, 5):
            raise ConfigError(f"Q must be 5x5, got {q.shape}")
        if self.sigma_r <= 0:
            raise ConfigError(f"sigma_r must be positive, got {self.sigma_r}")
        object.__setattr__(self, "q", q)


class StateSnapshot(NamedTuple):
    """Immutable copy of the filter mean, safe to read concurrently."""

    theta: float
    omega: float
    a: float
    b: float
    c: float
    t_us: int


@dataclass
class SinusoidState:
    theta: float
    omega: float
    a: float
    b: float
    c: float
    covariance: np.ndarray
    t_us: int

    def snapshot(self) -> StateSnapshot:
        return StateSnapshot(self.theta, self.omega, self.a, self.b, self.c, self.t_us)


def wrap_theta(theta: float) -> float:
    """Wrap the phase state to (-pi, pi]."""
    return theta - 2.0 * math.pi * math.ceil((theta - math.pi) / (2.0 * math.pi))


def init(
    fit: SinusoidInit,
    t_ref_us: int,
    init_var: tuple[float, float, float, float, float] | None = None,
) -> SinusoidState:
    """Seed the filter from a least-squares fit, with theta = 0 at t_ref.

    The fit's (a, b) live on theta' = omega*t; rotating them by omega*t_ref
    moves them onto theta = omega*(t - t_ref), so h(x0) equals the fit
    evaluated at the reference time.
    """
    rot = fit.omega * t_ref_us * 1e-6
    ca, sa = math.cos(rot), math.sin(rot)
    a0 = fit.a * ca - fit.b * sa
    b0 = fit.a * sa + fit.b * ca
    if init_var is None:
        amp = math.hypot(a0, b0)
        init_var = (
            0.1**2,
            (0.05 * max(fit.omega, 1.0)) ** 2,
            (0.1 * amp + 0.1) ** 2,
            (0.1 * amp + 0.1) ** 2,
            1.0,
        )
    return SinusoidState(
        theta=0.0,
        omega=fit.omega,
        a=a0,
        b=b0,
        c=fit.c,
        covariance=np.diag(init_var).astype(float),
        t_us=int(t_ref_us),
    )


def predict(state: SinusoidState, t_us: int, noise: NoiseConfig) -> SinusoidState:
    """Advance the filter to t_us in place: theta += omega*dt, P <- F P F' + Q*dt."""
    t_us = int(t_us)
    if t_us < state.t_us:
        raise OrderingError(f"predict to t={t_us} before state time {state.t_us}")
    dt = (t_us - state.t_us) * 1e-6
    state.theta = wrap_theta(state.theta + state.omega * dt)
    f = np.eye(5)
    f[STATE_THETA, STATE_OMEGA] = dt
    state.covariance = f @ state.covariance @ f.T + noise.q * dt
    state.t_us = t_us
    return state


def update(state: SinusoidState, z: float, noise: NoiseConfig) -> tuple[SinusoidState, float, bool]:
    """Fuse one coordinate measurement in place.

    Returns (state, innovation, accepted). Innovations beyond GATE_SIGMAS
    standard deviations leave the state untouched.
    """
    st, ct = math.sin(state.theta), math.cos(state.theta)
    h_jac = np.array([state.a * ct - state.b * st, 0.0, st, ct, 1.0])
    predicted = state.a * st + state.b * ct + state.c
    innovation = z - predicted
    p = state.covariance
    s = float(h_jac @ p @ h_jac) + noise.sigma_r**2
    if s <= 0:
        raise NumericalDegeneracyError(f"innovation variance {s} is not positive")
    if abs(innovation) > GATE_SIGMAS * math.sqrt(s):
        return state, innovation, False
    k = (p @ h_jac) / s
    mean = np.array([state.theta, state.omega, state.a, state.b, state.c]) + k * innovation
    ikh = np.eye(5) - np.outer(k, h_jac)
    p_new = ikh @ p @ ikh.T + noise.sigma_r**2 * np.outer(k, k)
    state.theta = wrap_theta(float(mean[STATE_THETA]))
    state.omega = float(mean[STATE_OMEGA])
    state.a = float(mean[STATE_A])
    state.b = float(mean[STATE_B])
    state.c = float(mean[STATE_C])
    state.covariance = 0.5 * (p_new + p_new.T)
    return state, innovation, True


def amplitude_phase(state: SinusoidState | StateSnapshot) -> tuple[float, float]:
    """Report (A, phi) with A = hypot(a, b), phi = atan2(b, a); (0, 0) when A = 0."""
    amp = math.hypot(state.a, state.b)
    if amp == 0.0:
        return 0.0, 0.0
    return amp, math.atan2(state.b, state.a)


def predict_offset(
    state_u: SinusoidState | StateSnapshot,
    state_v: SinusoidState | StateSnapshot,
    t_us,
):
    """Oscillatory offset (du, dv) at time t without mutating the filters.

    Vectorized over t_us. Accepts live states or snapshots; uses only the
    mean, so concurrent filter updates cannot tear a read mid-way when
    snapshots are passed.
    """
    t = np.asarray(t_us, dtype=np.float64)
    th_u = state_u.theta + state_u.omega * (t - state_u.t_us) * 1e-6
    th_v = state_v.theta + state_v.omega * (t - state_v.t_us) * 1e-6
    du = state_u.a * np.sin(th_u) + state_u.b * np.cos(th_u)
    dv = state_v.a * np.sin(th_v) + state_v.b * np.cos(th_v)
    return du, dv


def filter_samples(
    samples: np.ndarray,
    state: SinusoidState,
    noise: NoiseConfig,
    axis: str = "u",
) -> tuple[SinusoidState, np.ndarray]:
    """Predict/update through a sample stream; returns the state and a trace."""
    trace = np.empty(samples.shape[0], dtype=TRACE_DTYPE)
    for i, s in enumerate(samples):
        predict(state, int(s["t"]), noise)
        _, innov, ok = update(state, float(s[axis]), noise)
        trace[i] = (s["t"], state.theta, state.omega, state.a, state.b, state.c, innov, ok)
    return state, trace


def write_trace_csv(dest, trace: np.ndarray) -> None:
    lines = ["t_us,theta,omega,a,b,c,innovation"]
    lines.extend(
        f"{int(r['t'])},{r['theta']:.9g},{r['omega']:.9g},{r['a']:.9g},"
        f"{r['b']:.9g},{r['c']:.9g},{r['innovation']:.9g}"
        for r in trace
    )
    payload = ("\n".join(lines) + "\n").encode()
    if hasattr(dest, "write"):
        dest.write(payload)
    else:
        with open(dest, "wb") as fh:
            fh.write(payload)
