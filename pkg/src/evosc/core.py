"""Core event-stream types: events, sensor geometry, accumulated frames.

An event stream is a packed numpy structured array (one record per event)
sorted by timestamp. Timestamps are integer microseconds, coordinates are
pixel indices, polarity is +1 (brightness increase) or -1 (decrease).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BoundsError, ConfigError, OrderingError

# Packed little-endian record layout, 13 bytes per event. This dtype is also
# the on-disk binary record format, so streams round-trip via tobytes().
EVENT_DTYPE = np.dtype([("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "<i1")])


@dataclass(frozen=True)
class SensorGeometry:
    """Pinhole sensor description. Focal length and principal point in pixels."""

    width: int
    height: int
    focal_length_px: float = 100.0
    cx: float | None = None
    cy: float | None = None

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ConfigError(f"sensor dimensions must be positive, got {self.width}x{self.height}")
        if self.focal_length_px <= 0:
            raise ConfigError(f"focal length must be positive, got {self.focal_length_px}")
        if self.cx is None:
            object.__setattr__(self, "cx", (self.width - 1) / 2.0)
        if self.cy is None:
            object.__setattr__(self, "cy", (self.height - 1) / 2.0)

    @classmethod
    def from_dict(cls, d: dict) -> "SensorGeometry":
        return cls(
            width=int(d["width"]),
            height=int(d["height"]),
            focal_length_px=float(d.get("focal_length_px", 100.0)),
            cx=d.get("cx"),
            cy=d.get("cy"),
        )

    def to_dict(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "focal_length_px": self.focal_length_px,
            "cx": self.cx,
            "cy": self.cy,
        }

    @classmethod
    def load(cls, path: str | Path) -> "SensorGeometry":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")


def make_events(t, x, y, p, validate: bool = True) -> np.ndarray:
    """Assemble an event stream from per-field sequences."""
    t = np.asarray(t, dtype=np.uint64)
    out = np.empty(t.shape[0], dtype=EVENT_DTYPE)
    out["t"] = t
    out["x"] = np.asarray(x, dtype=np.uint16)
    out["y"] = np.asarray(y, dtype=np.uint16)
    out["p"] = np.asarray(p, dtype=np.int8)
    if validate:
        validate_events(out)
    return out


def empty_events() -> np.ndarray:
    return np.empty(0, dtype=EVENT_DTYPE)


def validate_events(events: np.ndarray, geometry: SensorGeometry | None = None) -> None:
    """Check ordering, polarity domain and (optionally) pixel bounds.

    Raises OrderingError / BoundsError on the first violation found.
    """
    if events.dtype != EVENT_DTYPE:
        raise ConfigError(f"expected event dtype {EVENT_DTYPE}, got {events.dtype}")
    if events.shape[0] == 0:
        return
    t = events["t"]
    if events.shape[0] > 1:
        bad = np.nonzero(t[1:] < t[:-1])[0]
        if bad.size:
            i = int(bad[0]) + 1
            raise OrderingError(
                f"timestamp decreases at record {i}: {int(t[i])} < {int(t[i - 1])}"
            )
    pol = events["p"]
    bad = np.nonzero((pol != 1) & (pol != -1))[0]
    if bad.size:
        i = int(bad[0])
        raise BoundsError(f"polarity must be +1 or -1, record {i} has {int(pol[i])}")
    if geometry is not None:
        oob = np.nonzero((events["x"] >= geometry.width) | (events["y"] >= geometry.height))[0]
        if oob.size:
            i = int(oob[0])
            raise BoundsError(
                f"record {i} at ({int(events['x'][i])}, {int(events['y'][i])}) outside "
                f"{geometry.width}x{geometry.height} sensor"
            )


@dataclass
class AccumFrame:
    """Per-pixel event counts over a half-open time window [t0, t1) in µs."""

    counts: np.ndarray
    t0: int
    t1: int

    @property
    def width(self) -> int:
        return self.counts.shape[1]

    @property
    def height(self) -> int:
        return self.counts.shape[0]


@dataclass
class BinaryFrame:
    """Boolean occupancy frame: a pixel is set when it saw at least one event."""

    bits: np.ndarray
    t0: int
    t1: int


def accumulate(events: np.ndarray, window: tuple[int, int], geometry: SensorGeometry) -> AccumFrame:
    """Count events per pixel over the half-open window [t0, t1)."""
    t0, t1 = int(window[0]), int(window[1])
    if t1 <= t0:
        raise ConfigError(f"window must satisfy t1 > t0, got [{t0}, {t1})")
    t = events["t"]
    lo, hi = np.searchsorted(t, [t0, t1], side="left")
    sel = events[lo:hi]
    flat = sel["y"].astype(np.int64) * geometry.width + sel["x"].astype(np.int64)
    counts = np.bincount(flat, minlength=geometry.width * geometry.height)
    counts = counts.reshape(geometry.height, geometry.width)
    return AccumFrame(counts=counts, t0=t0, t1=t1)


def binarize(frame: AccumFrame) -> BinaryFrame:
    return BinaryFrame(bits=frame.counts > 0, t0=frame.t0, t1=frame.t1)


def window_starts(t_begin: int, t_end: int, window_us: int) -> np.ndarray:
    """Start times of the disjoint windows tiling [t_begin, t_end)."""
    if window_us <= 0:
        raise ConfigError(f"window length must be positive, got {window_us}")
    return np.arange(int(t_begin), int(t_end), int(window_us), dtype=np.int64)
