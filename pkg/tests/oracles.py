"""Independent reference implementations used as test oracles.

Everything here is deliberately written the slow, obvious way (pure Python
loops, brute-force linear algebra, high-precision arithmetic) so it shares no
code path with the package under test.
"""

from collections import deque

import mpmath as mp
import numpy as np

mp.mp.dps = 30


def flood_fill_components(bits: np.ndarray) -> int:
    """8-connected component count by breadth-first flood fill."""
    h, w = bits.shape
    seen = np.zeros_like(bits, dtype=bool)
    count = 0
    for sy in range(h):
        for sx in range(w):
            if not bits[sy, sx] or seen[sy, sx]:
                continue
            count += 1
            queue = deque([(sy, sx)])
            seen[sy, sx] = True
            while queue:
                y, x = queue.popleft()
                for dy in (-1, 0, 1):
                    for dx in (-1, 0, 1):
                        ny, nx = y + dy, x + dx
                        if 0 <= ny < h and 0 <= nx < w and bits[ny, nx] and not seen[ny, nx]:
                            seen[ny, nx] = True
                            queue.append((ny, nx))
    return count


def steady_state_reference(mass_kg, ecc_mass_kg, ecc_m, damping, stiffness, omega):
    """Rotating-imbalance steady state in 30-digit arithmetic -> (amp, phase)."""
    M = mp.mpf(repr(mass_kg))
    m = mp.mpf(repr(ecc_mass_kg))
    e = mp.mpf(repr(ecc_m))
    c = mp.mpf(repr(damping))
    k = mp.mpf(repr(stiffness))
    w = mp.mpf(repr(omega))
    den = mp.sqrt((k - M * w**2) ** 2 + (c * w) ** 2)
    amp = m * e * w**2 / den
    phase = mp.atan2(c * w, k - M * w**2)
    return float(amp), float(phase)


def bernoulli_entropy_reference(q) -> float:
    """Binary entropy in bits at occupancy q, high precision."""
    qq = mp.mpf(repr(q))
    if qq == 0 or qq == 1:
        return 0.0
    return float(-(qq * mp.log(qq, 2) + (1 - qq) * mp.log(1 - qq, 2)))


def project_reference(point_m, extrinsics, focal_px, cx, cy):
    """Pinhole projection by explicit homogeneous matrix product."""
    p = np.asarray([point_m[0], point_m[1], point_m[2], 1.0])
    cam = np.asarray(extrinsics) @ p
    if cam[2] <= 0:
        raise ValueError("behind camera")
    return (
        focal_px * cam[0] / cam[2] + cx,
        focal_px * cam[1] / cam[2] + cy,
    )


def exponential_centroid(ts_us, xs, ys, tau_s):
    """Per-event exponentially weighted centroid, one output row per event."""
    weight = 0.0
    cu = cv = 0.0
    t_last = None
    out = []
    for t, x, y in zip(ts_us, xs, ys):
        decay = 1.0 if t_last is None else np.exp(-(t - t_last) * 1e-6 / tau_s)
        t_last = t
        weight = weight * decay + 1.0
        cu += (x - cu) / weight
        cv += (y - cv) / weight
        out.append((t, cu, cv, weight))
    return out


def direct_nudft(times_s, values, omegas):
    """Literal nonuniform DFT magnitude, one omega at a time."""
    mags = []
    for w in omegas:
        acc = 0 + 0j
        for t, v in zip(times_s, values):
            acc += v * np.exp(-1j * w * t)
        mags.append(abs(acc))
    return np.asarray(mags)


def gaussian_kernel_reference(sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian taps over radius ceil(3*sigma)."""
    radius = int(np.ceil(3.0 * sigma))
    xs = np.arange(-radius, radius + 1, dtype=float)
    k = np.exp(-0.5 * (xs / sigma) ** 2)
    return k / k.sum()


def brute_force_junctions(skel: np.ndarray) -> int:
    """Set pixels with more than two set 8-neighbours, by direct enumeration."""
    h, w = skel.shape
    count = 0
    for r in range(h):
        for c in range(w):
            if not skel[r, c]:
                continue
            n = 0
            for dr in (-1, 0, 1):
                for dc in (-1, 0, 1):
                    if dr == 0 and dc == 0:
                        continue
                    rr, cc = r + dr, c + dc
                    if 0 <= rr < h and 0 <= cc < w and skel[rr, cc]:
                        n += 1
            if n > 2:
                count += 1
    return count


def jacobian_fd(h_fn, state, eps=1e-7):
    """Finite-difference Jacobian of h_fn at state (1-D array)."""
    state = np.asarray(state, dtype=float)
    base = h_fn(state)
    out = np.empty(state.shape[0])
    for i in range(state.shape[0]):
        bumped = state.copy()
        bumped[i] += eps
        out[i] = (h_fn(bumped) - base) / eps
    return out


# Frozen reference values, computed with the formulas above at 30 digits.
MOTOR_OMEGA_2V = 476.850925105  # V=2.0, k_phi=0.00374, R=3.75, T_q=0.216e-3
STEADY_AMP_REF = 6.33614306666e-4  # M=0.1, m=0.01, e=0.005, c=2, k=4000, w=150
STEADY_PHASE_REF = 0.169778273968
MIN_DETECT_D_REF = 1.01660863882  # fov=39 deg, res=720, r=1 mm, threshold=1 px
ENTROPY_QUARTER = 0.811278124459
