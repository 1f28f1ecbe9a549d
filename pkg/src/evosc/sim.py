"""Event-camera simulator for a sensor on a driven harmonic mount.

The camera translates in its image plane as A*cos(omega*t + phi) per axis, so
the latent log-intensity seen at pixel p is the scene pattern sampled at
p - offset(t). Events follow the usual threshold-crossing model: a pixel emits
when the latent value moves a full contrast threshold away from its stored
reference, the reference steps by the threshold, and the event time is the
linear-interpolated crossing instant inside the integration step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core import EVENT_DTYPE, SensorGeometry, empty_events
from .errors import BehindCameraError, ConfigError, ResonanceError

TWO_PI = 2.0 * math.pi

DEFAULT_STEP_US = 50
DEFAULT_REFRACTORY_US = 100
DEFAULT_THRESHOLD = 0.2


def wrap_angle(phi: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    return phi - TWO_PI * math.ceil((phi - math.pi) / TWO_PI)


# ---------------------------------------------------------------------------
# drive physics


@dataclass(frozen=True)
class MotorParams:
    """DC motor constants: back-EMF constant (V*s/rad), winding resistance
    (ohm) and load torque (N*m)."""

    k_phi: float = 0.00374
    resistance_ohm: float = 3.75
    load_torque_nm: float = 0.216e-3


def motor_speed(voltage: float, motor: MotorParams) -> float:
    """Steady motor speed in rad/s under a resistive-drop load model.

    omega = V/k_phi - (R/k_phi^2) * T_load, floored at zero (the rotor does
    not run backwards under load).
    """
    if motor.k_phi <= 0:
        raise ConfigError(f"k_phi must be positive, got {motor.k_phi}")
    omega = voltage / motor.k_phi - (motor.resistance_ohm / motor.k_phi**2) * motor.load_torque_nm
    return max(0.0, omega)


@dataclass(frozen=True)
class PhysicalOscillator:
    """Mass-spring-damper driven by a rotating eccentric mass.

    mass_kg: oscillating mass entering the resonance denominator
    eccentric_mass_kg, eccentricity_m: the rotating imbalance (force m*e*w^2)
    damping, stiffness: viscous damping c (N*s/m) and spring constant k (N/m)
    omega_drive: rotation rate in rad/s
    """

    mass_kg: float
    eccentric_mass_kg: float
    eccentricity_m: float
    damping: float
    stiffness: float
    omega_drive: float

    def __post_init__(self):
        for name in ("mass_kg", "eccentric_mass_kg", "eccentricity_m", "stiffness"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.damping < 0 or self.omega_drive < 0:
            raise ConfigError("damping and omega_drive must be non-negative")


def steady_state(osc: PhysicalOscillator) -> tuple[float, float]:
    """Steady-state response (amplitude_m, phase_rad) of the driven mount.

    amplitude = m e w^2 / sqrt((k - m w^2)^2 + (c w)^2)
    phase     = atan2(c w, k - m w^2)

    so the displacement is amplitude * sin(w t - phase). At resonance with no
    damping the response is unbounded and ResonanceError is raised.
    """
    m, w = osc.mass_kg, osc.omega_drive
    force = osc.eccentric_mass_kg * osc.eccentricity_m * w * w
    elastic = osc.stiffness - m * w * w
    dissip = osc.damping * w
    denom_sq = elastic * elastic + dissip * dissip
    if denom_sq == 0.0:
        raise ResonanceError(
            f"undamped drive at resonance (k = m*w^2 = {osc.stiffness}) has no steady state"
        )
    return force / math.sqrt(denom_sq), math.atan2(dissip, elastic)


@dataclass(frozen=True)
class WorldMotion:
    """Camera translation in metres: axis i moves as amp_i*cos(omega*t + phi_i)."""

    amp_x_m: float
    amp_y_m: float
    omega: float
    phi_x: float = 0.0
    phi_y: float = 0.0

    @classmethod
    def from_steady_state(cls, osc: PhysicalOscillator, circular: bool = True) -> "WorldMotion":
        """Map the sin(w t - phase) steady state onto the cos convention.

        A rotating imbalance shakes both in-plane axes; circular mode uses
        equal amplitudes with the x axis a quarter turn ahead.
        """
        amp, phase = steady_state(osc)
        phi_y = wrap_angle(-phase - math.pi / 2.0)
        phi_x = wrap_angle(phi_y + math.pi / 2.0) if circular else phi_y
        amp_x = amp if circular else 0.0
        return cls(amp_x_m=amp_x, amp_y_m=amp, omega=osc.omega_drive, phi_x=phi_x, phi_y=phi_y)


def project(
    point_w: np.ndarray,
    extrinsics: np.ndarray,
    geometry: SensorGeometry,
    t_s: float,
    motion: WorldMotion,
) -> tuple[float, float]:
    """Project a world point through the oscillating pinhole camera at time t.

    extrinsics is the 4x4 world-to-camera transform at rest; the mount adds an
    in-plane camera translation, which shifts the camera-frame point by the
    same amount before the pinhole division.
    """
    pw = np.asarray(point_w, dtype=float)
    pc = extrinsics @ np.array([pw[0], pw[1], pw[2], 1.0])
    x = pc[0] + motion.amp_x_m * math.cos(motion.omega * t_s + motion.phi_x)
    y = pc[1] + motion.amp_y_m * math.cos(motion.omega * t_s + motion.phi_y)
    z = pc[2]
    if z <= 0:
        raise BehindCameraError(f"point projects behind the camera (z = {z:.6g})")
    f = geometry.focal_length_px
    return f * x / z + geometry.cx, f * y / z + geometry.cy


# ---------------------------------------------------------------------------
# image-plane oscillation


@dataclass(frozen=True)
class OscillatorConfig:
    """Image-plane oscillation: pixel offset A_i*cos(omega*t + phi_i) per axis."""

    amp_x_px: float
    amp_y_px: float
    omega: float
    phi_x: float = 0.0
    phi_y: float = 0.0

    def __post_init__(self):
        if self.amp_x_px < 0 or self.amp_y_px < 0:
            raise ConfigError("amplitudes must be non-negative")
        if self.omega < 0:
            raise ConfigError("omega must be non-negative")
        object.__setattr__(self, "phi_x", wrap_angle(self.phi_x))
        object.__setattr__(self, "phi_y", wrap_angle(self.phi_y))

    def scaled(self, s: float) -> "OscillatorConfig":
        return replace(self, amp_x_px=self.amp_x_px * s, amp_y_px=self.amp_y_px * s)

    @classmethod
    def from_world(
        cls, motion: WorldMotion, geometry: SensorGeometry, depth_m: float
    ) -> "OscillatorConfig":
        """Image amplitude of a world oscillation seen at depth Z: A = f*amp/Z."""
        if depth_m <= 0:
            raise ConfigError(f"depth must be positive, got {depth_m}")
        f = geometry.focal_length_px
        return cls(
            amp_x_px=f * motion.amp_x_m / depth_m,
            amp_y_px=f * motion.amp_y_m / depth_m,
            omega=motion.omega,
            phi_x=motion.phi_x,
            phi_y=motion.phi_y,
        )

    def to_dict(self) -> dict:
        return {
            "amp_x_px": self.amp_x_px,
            "amp_y_px": self.amp_y_px,
            "omega_rad_s": self.omega,
            "phi_x": self.phi_x,
            "phi_y": self.phi_y,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OscillatorConfig":
        return cls(
            amp_x_px=float(d["amp_x_px"]),
            amp_y_px=float(d["amp_y_px"]),
            omega=float(d["omega_rad_s"]),
            phi_x=float(d.get("phi_x", 0.0)),
            phi_y=float(d.get("phi_y", 0.0)),
        )


def camera_offset(t, cfg: OscillatorConfig):
    """Image-plane camera offset (du, dv) in pixels; vectorized over t (seconds)."""
    t = np.asarray(t, dtype=float)
    du = cfg.amp_x_px * np.cos(cfg.omega * t + cfg.phi_x)
    dv = cfg.amp_y_px * np.cos(cfg.omega * t + cfg.phi_y)
    return du, dv


# ---------------------------------------------------------------------------
# scene patterns (log intensity in [0, 1] before the contrast scale)


@dataclass(frozen=True)
class Checkerboard:
    period_px: float = 16.0
    edge_sharpness: float = 4.0

    def sample(self, xs, ys):
        k = TWO_PI / self.period_px
        gx = np.tanh(self.edge_sharpness * np.sin(k * xs))
        gy = np.tanh(self.edge_sharpness * np.sin(k * ys))
        return 0.5 * (gx * gy + 1.0)


@dataclass(frozen=True)
class Stripes:
    period_px: float = 16.0
    angle_rad: float = 0.0
    edge_sharpness: float = 4.0

    def sample(self, xs, ys):
        k = TWO_PI / self.period_px
        s = xs * math.cos(self.angle_rad) + ys * math.sin(self.angle_rad)
        return 0.5 * (np.tanh(self.edge_sharpness * np.sin(k * s)) + 1.0)


@dataclass(frozen=True)
class Disks:
    """Bright disks on a dark background, centred at offset + k*pitch."""

    radius_px: float = 6.0
    pitch_px: float = 32.0
    edge_width_px: float = 1.0
    offset_px: float | None = None

    def sample(self, xs, ys):
        p = self.pitch_px
        off = 0.5 * p if self.offset_px is None else self.offset_px
        dx = np.mod(xs - off + 0.5 * p, p) - 0.5 * p
        dy = np.mod(ys - off + 0.5 * p, p) - 0.5 * p
        r = np.hypot(dx, dy)
        return np.clip((self.radius_px - r) / self.edge_width_px + 0.5, 0.0, 1.0)


@dataclass(frozen=True)
class Triangle:
    """A single filled equilateral triangle (vertex up) on a dark background."""

    center_x: float
    center_y: float
    radius_px: float = 12.0
    edge_width_px: float = 1.0

    def sample(self, xs, ys):
        x = xs - self.center_x
        y = ys - self.center_y
        inner = np.full(np.broadcast(x, y).shape, np.inf)
        for i in range(3):
            ang = -math.pi / 2.0 + i * TWO_PI / 3.0
            nx, ny = math.cos(ang), math.sin(ang)
            # distance inward from each edge line of the inscribed-circle triangle
            inner = np.minimum(inner, 0.5 * self.radius_px - (x * nx + y * ny))
        return np.clip(inner / self.edge_width_px + 0.5, 0.0, 1.0)


@dataclass(frozen=True)
class Bitmap:
    """Arbitrary log-intensity image sampled with bilinear interpolation."""

    image: np.ndarray

    def sample(self, xs, ys):
        img = self.image
        h, w = img.shape
        x = np.clip(xs, 0.0, w - 1.0)
        y = np.clip(ys, 0.0, h - 1.0)
        x0 = np.floor(x).astype(np.int64)
        y0 = np.floor(y).astype(np.int64)
        x1 = np.minimum(x0 + 1, w - 1)
        y1 = np.minimum(y0 + 1, h - 1)
        fx = x - x0
        fy = y - y0
        top = img[y0, x0] * (1.0 - fx) + img[y0, x1] * fx
        bot = img[y1, x0] * (1.0 - fx) + img[y1, x1] * fx
        return top * (1.0 - fy) + bot * fy


PATTERNS = {
    "checkerboard": Checkerboard,
    "stripes": Stripes,
    "disks": Disks,
    "triangle": Triangle,
}


@dataclass(frozen=True)
class DepthPlane:
    """Axis-aligned region (x0, y0, x1, y1) of the frame lying at one depth.

    region=None covers the whole frame. An optional per-plane pattern
    overrides the scene default.
    """

    depth_m: float = 1.0
    region: tuple[int, int, int, int] | None = None
    pattern: object | None = None

    def __post_init__(self):
        if self.depth_m <= 0:
            raise ConfigError(f"plane depth must be positive, got {self.depth_m}")


@dataclass(frozen=True)
class SceneSpec:
    """Scene content: a pattern, its log-intensity contrast, and depth planes.

    Planes partition the frame; the image-plane amplitude of plane i scales by
    depth_0 / depth_i relative to the configured amplitude (nearer planes move
    further on the sensor).
    """

    pattern: object = field(default_factory=Checkerboard)
    contrast: float = 0.5
    depth_planes: tuple[DepthPlane, ...] = (DepthPlane(),)

    def __post_init__(self):
        if self.contrast <= 0:
            raise ConfigError(f"contrast must be positive, got {self.contrast}")
        if not self.depth_planes:
            raise ConfigError("at least one depth plane is required")


@dataclass
class SimOutput:
    """Simulated stream plus the generating ground truth, one config per plane."""

    events: np.ndarray
    truth: list[OscillatorConfig]
    geometry: SensorGeometry
    scene: SceneSpec | None = None


# ---------------------------------------------------------------------------
# event generation


def _plane_mask(region, geometry: SensorGeometry) -> np.ndarray:
    mask = np.zeros((geometry.height, geometry.width), dtype=bool)
    if region is None:
        mask[:] = True
    else:
        x0, y0, x1, y1 = region
        mask[y0:y1, x0:x1] = True
    return mask


def _generate(
    samplers,
    geometry: SensorGeometry,
    duration_s: float,
    threshold: float,
    step_us: int,
    refractory_us: int,
    rng: np.random.Generator,
    noise_rate_hz: float,
    max_crossings: int = 16,
) -> np.ndarray:
    """Run the threshold-crossing model.

    samplers: list of (mask, field_fn) where field_fn(t_s) returns the latent
    log intensity for the whole frame; masks partition the frame.
    """
    if threshold <= 0:
        raise ConfigError(f"contrast threshold must be positive, got {threshold}")
    if duration_s <= 0:
        raise ConfigError(f"duration must be positive, got {duration_s}")
    h, w = geometry.height, geometry.width

    def latent(t_s: float) -> np.ndarray:
        out = np.zeros((h, w))
        for mask, field_fn in samplers:
            out[mask] = field_fn(t_s)[mask]
        return out

    n_steps = int(round(duration_s * 1e6 / step_us))
    l_prev = latent(0.0)
    l_ref = l_prev.copy()
    last_emit = np.full((h, w), -1e18)
    ts_list, xs_list, ys_list, ps_list = [], [], [], []

    for i in range(n_steps):
        t0 = i * step_us
        t1 = t0 + step_us
        l_now = latent(t1 * 1e-6)
        delta = l_now - l_ref
        n_cross = np.floor(np.abs(delta) / threshold).astype(np.int64)
        np.minimum(n_cross, max_crossings, out=n_cross)
        if n_cross.any():
            pol = np.sign(delta)
            rise = l_now - l_prev
            for k in range(1, int(n_cross.max()) + 1):
                yy, xx = np.nonzero(n_cross >= k)
                level = l_ref[yy, xx] + pol[yy, xx] * (k * threshold)
                frac = (level - l_prev[yy, xx]) / rise[yy, xx]
                t_ev = t0 + np.clip(frac, 0.0, 1.0) * step_us
                ok = t_ev >= last_emit[yy, xx] + refractory_us
                if ok.any():
                    ts_list.append(t_ev[ok])
                    xs_list.append(xx[ok])
                    ys_list.append(yy[ok])
                    ps_list.append(pol[yy, xx][ok])
                    last_emit[yy[ok], xx[ok]] = t_ev[ok]
            l_ref += pol * n_cross * threshold
        l_prev = l_now

    if noise_rate_hz > 0:
        n_noise = rng.poisson(noise_rate_hz * w * h * duration_s)
        if n_noise:
            ts_list.append(rng.uniform(0.0, duration_s * 1e6, n_noise))
            xs_list.append(rng.integers(0, w, n_noise))
            ys_list.append(rng.integers(0, h, n_noise))
            ps_list.append(rng.choice(np.array([-1.0, 1.0]), n_noise))

    if not ts_list:
        return empty_events()
    t = np.concatenate(ts_list)
    order = np.argsort(t, kind="stable")
    out = np.empty(t.shape[0], dtype=EVENT_DTYPE)
    out["t"] = np.round(t[order]).astype(np.uint64)
    out["x"] = np.concatenate(xs_list)[order]
    out["y"] = np.concatenate(ys_list)[order]
    out["p"] = np.concatenate(ps_list)[order]
    return out


def simulate(
    scene: SceneSpec,
    cfg: OscillatorConfig,
    geometry: SensorGeometry,
    duration_s: float,
    threshold: float = DEFAULT_THRESHOLD,
    seed: int = 0,
    step_us: int = DEFAULT_STEP_US,
    refractory_us: int = DEFAULT_REFRACTORY_US,
    noise_rate_hz: float = 0.0,
) -> SimOutput:
    """Simulate the oscillating camera watching a static scene.

    cfg gives the image-plane amplitude of the nearest-listed plane (plane 0);
    other planes scale by depth_0/depth_i. Identical inputs and seed produce a
    byte-identical stream.
    """
    xs, ys = np.meshgrid(np.arange(geometry.width, dtype=float),
                         np.arange(geometry.height, dtype=float))
    z0 = scene.depth_planes[0].depth_m
    samplers = []
    truth = []
    for plane in scene.depth_planes:
        plane_cfg = cfg.scaled(z0 / plane.depth_m)
        pattern = plane.pattern if plane.pattern is not None else scene.pattern
        mask = _plane_mask(plane.region, geometry)

        def field_fn(t_s, pattern=pattern, plane_cfg=plane_cfg):
            du, dv = camera_offset(t_s, plane_cfg)
            return scene.contrast * pattern.sample(xs - du, ys - dv)

        samplers.append((mask, field_fn))
        truth.append(plane_cfg)

    events = _generate(
        samplers, geometry, duration_s, threshold, step_us, refractory_us,
        np.random.default_rng(seed), noise_rate_hz,
    )
    return SimOutput(events=events, truth=truth, geometry=geometry, scene=scene)


def simulate_moving_target(
    freq_hz: float,
    path_radius_px: float,
    geometry: SensorGeometry,
    duration_s: float,
    pattern: object | None = None,
    contrast: float = 0.5,
    threshold: float = DEFAULT_THRESHOLD,
    seed: int = 0,
    step_us: int = DEFAULT_STEP_US,
    refractory_us: int = DEFAULT_REFRACTORY_US,
    noise_rate_hz: float = 0.0,
) -> SimOutput:
    """Static camera watching an object translating on a circular path.

    The default object is a triangle at frame centre. Truth records the
    circular path as a per-axis cosine with the y axis a quarter turn behind.
    """
    if freq_hz <= 0 or path_radius_px <= 0:
        raise ConfigError("freq_hz and path_radius_px must be positive")
    if pattern is None:
        pattern = Triangle(center_x=(geometry.width - 1) / 2.0,
                           center_y=(geometry.height - 1) / 2.0)
    omega = TWO_PI * freq_hz
    cfg = OscillatorConfig(
        amp_x_px=path_radius_px, amp_y_px=path_radius_px,
        omega=omega, phi_x=0.0, phi_y=-math.pi / 2.0,
    )
    xs, ys = np.meshgrid(np.arange(geometry.width, dtype=float),
                         np.arange(geometry.height, dtype=float))

    def field_fn(t_s):
        du, dv = camera_offset(t_s, cfg)
        return contrast * pattern.sample(xs - du, ys - dv)

    mask = np.ones((geometry.height, geometry.width), dtype=bool)
    events = _generate(
        [(mask, field_fn)], geometry, duration_s, threshold, step_us,
        refractory_us, np.random.default_rng(seed), noise_rate_hz,
    )
    scene = SceneSpec(pattern=pattern, contrast=contrast)
    return SimOutput(events=events, truth=[cfg], geometry=geometry, scene=scene)
