import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evosc.errors import ConfigError, OrderingError
from evosc.track import (
    SAMPLE_DTYPE,
    CentroidTracker,
    PatchSpec,
    delag_coefficients,
    lowpass_gain,
    read_samples_csv,
    samples_array,
    track_events,
    write_samples_csv,
)

from oracles import exponential_centroid


def test_sample_dtype_layout():
    assert SAMPLE_DTYPE.itemsize == 4 + 8 + 8 + 8
    assert [SAMPLE_DTYPE.fields[n][0].str for n in ("id", "t", "u", "v")] == [
        "<u4", "<u8", "<f8", "<f8",
    ]


class TestPatchSpec:
    def test_boundary_is_inclusive(self):
        p = PatchSpec(cx=10.0, cy=10.0, half_size=4)
        assert p.contains(14.0, 6.0)
        assert not p.contains(14.1, 10.0)

    def test_unsigned_coords_left_of_centre(self):
        # uint16 minus scalar must not wrap around
        p = PatchSpec(cx=30, cy=30, half_size=12)
        x = np.array([20], dtype=np.uint16)
        y = np.array([25], dtype=np.uint16)
        assert p.contains(x, y)[0]
        far = np.array([2], dtype=np.uint16)
        assert not p.contains(far, y)[0]

    def test_vectorized_matches_scalar(self):
        p = PatchSpec(cx=31.5, cy=15.0, half_size=3)
        xs = np.arange(64, dtype=np.uint16)
        ys = np.full(64, 15, dtype=np.uint16)
        mask = p.contains(xs, ys)
        for i in range(64):
            assert mask[i] == p.contains(float(i), 15.0)

    def test_bad_half_size(self):
        with pytest.raises(ConfigError):
            PatchSpec(cx=0.0, cy=0.0, half_size=0)


class TestCentroidTracker:
    def make(self, **kw):
        defaults = dict(patch=PatchSpec(cx=16.0, cy=16.0, half_size=15),
                        tau_s=0.01, emit_period_s=1e-9, min_weight=1.0)
        defaults.update(kw)
        return CentroidTracker(**defaults)

    def test_matches_reference_recursion(self):
        rng = np.random.default_rng(0)
        n = 300
        ts = np.cumsum(rng.integers(1, 400, size=n)).tolist()
        xs = rng.uniform(2.0, 30.0, size=n).tolist()
        ys = rng.uniform(2.0, 30.0, size=n).tolist()
        tracker = self.make()
        got = [tracker.ingest(t, x, y) for t, x, y in zip(ts, xs, ys)]
        ref = exponential_centroid(ts, xs, ys, tau_s=0.01)
        assert all(s is not None for s in got)
        for (_, t, u, v), (rt, ru, rv, _) in zip(got, ref):
            assert t == rt
            assert u == pytest.approx(ru, abs=1e-12)
            assert v == pytest.approx(rv, abs=1e-12)

    def test_first_event_snaps_centroid(self):
        tracker = self.make()
        _, _, u, v = tracker.ingest(10, 3.0, 27.0)
        assert (u, v) == (3.0, 27.0)

    def test_out_of_patch_events_ignored(self):
        tracker = self.make()
        assert tracker.ingest(1, 200.0, 200.0) is None
        assert tracker.weight == 0.0

    def test_backwards_time_rejected(self):
        tracker = self.make()
        tracker.ingest(100, 16.0, 16.0)
        with pytest.raises(OrderingError):
            tracker.ingest(99, 16.0, 16.0)

    def test_min_weight_gates_emission(self):
        # events 10 tau apart: weight never accumulates past ~1
        tracker = self.make(min_weight=5.0, tau_s=0.001)
        out = [tracker.ingest(t, 16.0, 16.0) for t in range(0, 100_000, 10_000)]
        assert all(s is None for s in out)

    def test_dense_events_pass_min_weight(self):
        tracker = self.make(min_weight=5.0, tau_s=0.01)
        out = [tracker.ingest(t, 16.0, 16.0) for t in range(0, 1000, 100)]
        assert out[-1] is not None

    def test_emit_period_thins_samples(self):
        tracker = self.make(emit_period_s=0.001)
        samples = [tracker.ingest(t, 16.0, 16.0) for t in range(0, 20_000, 100)]
        kept = [s for s in samples if s is not None]
        ts = [s[1] for s in kept]
        assert np.all(np.diff(ts) >= 1000)
        assert len(kept) == pytest.approx(20, abs=2)

    def test_warmup_suppresses_early_samples(self):
        tracker = self.make(warmup_s=0.005)
        samples = [tracker.ingest(t, 16.0, 16.0) for t in range(0, 10_000, 100)]
        emitted_t = [s[1] for s in samples if s is not None]
        assert emitted_t and emitted_t[0] >= 5000

    def test_run_equals_event_loop(self):
        rng = np.random.default_rng(1)
        n = 500
        ev = np.empty(n, dtype=[("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "i1")])
        ev["t"] = np.cumsum(rng.integers(1, 200, size=n))
        ev["x"] = rng.integers(0, 64, size=n)
        ev["y"] = rng.integers(0, 64, size=n)
        ev["p"] = 1
        tracker = self.make(patch=PatchSpec(cx=20.0, cy=20.0, half_size=10))
        ref = self.make(patch=PatchSpec(cx=20.0, cy=20.0, half_size=10))
        got = tracker.run(ev)
        rows = []
        for r in ev:
            s = ref.ingest(int(r["t"]), float(r["x"]), float(r["y"]))
            if s is not None:
                rows.append(s)
        want = samples_array(rows)
        assert got.tobytes() == want.tobytes()

    def test_bad_parameters_rejected(self):
        with pytest.raises(ConfigError):
            self.make(tau_s=0.0)
        with pytest.raises(ConfigError):
            self.make(min_weight=0.5)


def test_track_events_merges_sorted_by_time_then_id():
    rng = np.random.default_rng(2)
    n = 2000
    ev = np.empty(n, dtype=[("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "i1")])
    ev["t"] = np.cumsum(rng.integers(1, 50, size=n))
    ev["x"] = rng.integers(0, 32, size=n)
    ev["y"] = rng.integers(0, 32, size=n)
    ev["p"] = 1
    trackers = [
        CentroidTracker(PatchSpec(cx=8.0, cy=16.0, half_size=8), min_weight=1.0,
                        emit_period_s=1e-4, tracker_id=1),
        CentroidTracker(PatchSpec(cx=24.0, cy=16.0, half_size=8), min_weight=1.0,
                        emit_period_s=1e-4, tracker_id=2),
    ]
    merged = track_events(ev, trackers)
    assert set(np.unique(merged["id"])) == {1, 2}
    key = merged["t"].astype(np.int64) * 10 + merged["id"]
    assert np.all(np.diff(key) > 0)


def test_track_events_empty_tracker_list():
    ev = np.empty(0, dtype=[("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "i1")])
    assert track_events(ev, []).shape == (0,)


def test_lowpass_gain_reference_points():
    assert lowpass_gain(0.0, 0.005) == 1.0
    assert lowpass_gain(200.0, 0.005) == pytest.approx(1.0 / math.sqrt(2.0))
    assert lowpass_gain(100.0 * math.pi, 0.005) == pytest.approx(
        1.0 / math.sqrt(1.0 + (0.5 * math.pi) ** 2)
    )


@given(
    a=st.floats(-10.0, 10.0), b=st.floats(-10.0, 10.0),
    omega=st.floats(1.0, 500.0), tau=st.floats(1e-4, 0.05),
)
def test_delag_inverts_first_order_lag(a, b, omega, tau):
    """delag o lag is the identity on (a, b) phasors."""
    true_p = complex(b, -a)
    meas_p = true_p / complex(1.0, omega * tau)
    a2, b2 = delag_coefficients(-meas_p.imag, meas_p.real, omega, tau)
    assert a2 == pytest.approx(a, abs=1e-9)
    assert b2 == pytest.approx(b, abs=1e-9)


def _fit_sin_cos(t_s, values, omega):
    design = np.column_stack([
        np.sin(omega * t_s), np.cos(omega * t_s), np.ones_like(t_s),
    ])
    coef, *_ = np.linalg.lstsq(design, values, rcond=None)
    return coef  # a, b, c


def test_tracker_lag_matches_first_order_model():
    """Centroid of a dense sinusoidal source is attenuated and phase lagged
    exactly as the exponential window predicts."""
    # 10 us steps keep the half-step discretization bias inside tolerance
    omega, tau, amp = 100.0 * math.pi, 0.005, 3.0
    ts = np.arange(0, 1_000_000, 10, dtype=np.int64)
    xs = 32.0 + amp * np.sin(omega * ts * 1e-6)
    tracker = CentroidTracker(PatchSpec(cx=32.0, cy=32.0, half_size=10),
                              tau_s=tau, emit_period_s=1e-9, min_weight=1.0)
    rows = []
    for t, x in zip(ts.tolist(), xs.tolist()):
        s = tracker.ingest(t, x, 32.0)
        if s is not None:
            rows.append(s)
    samples = samples_array(rows)
    keep = samples["t"] * 1e-6 > 5.0 * tau
    t_s = samples["t"][keep] * 1e-6
    a, b, _ = _fit_sin_cos(t_s, samples["u"][keep], omega)
    meas = complex(b, -a)
    assert abs(meas) / amp == pytest.approx(lowpass_gain(omega, tau), rel=5e-3)
    # truth is pure sine, phasor angle -pi/2; the lag rotates by -atan(w tau)
    assert np.angle(meas) == pytest.approx(
        -math.pi / 2.0 - math.atan(omega * tau), abs=5e-3
    )
    a2, b2 = delag_coefficients(a, b, omega, tau)
    recovered = complex(b2, -a2)
    assert abs(recovered) == pytest.approx(amp, rel=5e-3)
    assert np.angle(recovered) == pytest.approx(-math.pi / 2.0, abs=5e-3)


def test_tracked_disk_amplitude_and_phase(disk_stream, disk_cfg):
    """End to end: events from an oscillating disk, delagged fit recovers the
    commanded image motion."""
    tau = 0.005
    tracker = CentroidTracker(PatchSpec(cx=32.0, cy=32.0, half_size=14),
                              tau_s=tau, warmup_s=3 * tau)
    samples = tracker.run(disk_stream.events)
    assert samples.shape[0] > 500
    t_s = samples["t"] * 1e-6
    omega = disk_cfg.omega
    for axis, phi_true in (("u", disk_cfg.phi_x), ("v", disk_cfg.phi_y)):
        a, b, _ = _fit_sin_cos(t_s, samples[axis], omega)
        a2, b2 = delag_coefficients(a, b, omega, tau)
        p = complex(b2, -a2)
        assert abs(p) == pytest.approx(3.0, rel=0.06)
        assert math.remainder(np.angle(p) - phi_true, 2.0 * math.pi) == pytest.approx(
            0.0, abs=0.06
        )


class TestSamplesCsv:
    def test_round_trip(self):
        samples = samples_array([
            (1, 100, 3.125, 7.5), (1, 1100, 3.25, 7.0), (2, 1100, -0.5, 12.0),
        ])
        buf = io.BytesIO()
        write_samples_csv(buf, samples)
        back = read_samples_csv(io.StringIO(buf.getvalue().decode()))
        assert back.tobytes() == samples.tobytes()

    def test_header_written(self):
        buf = io.BytesIO()
        write_samples_csv(buf, samples_array([]))
        assert buf.getvalue() == b"id,t_us,u,v\n"

    def test_bad_header_rejected(self):
        with pytest.raises(ConfigError, match="header"):
            read_samples_csv(io.StringIO("t,u,v\n1,2,3\n"))

    def test_file_path_round_trip(self, tmp_path):
        samples = samples_array([(0, 5, 1.0, 2.0)])
        dest = tmp_path / "s.csv"
        write_samples_csv(dest, samples)
        assert read_samples_csv(dest).tobytes() == samples.tobytes()
