#!/usr/bin/env python3
"""Benchmark the fixed-state compensation hot path on random event streams."""

import argparse
import math

import numpy as np

from evosc.compensate import states_from_config, throughput_bench
from evosc.core import SensorGeometry, make_events
from evosc.sim import OscillatorConfig


def random_events(n, width, height, rate_hz, rng):
    span_us = int(n / rate_hz * 1e6)
    return make_events(
        np.sort(rng.integers(0, max(span_us, 1), n)),
        rng.integers(0, width, n),
        rng.integers(0, height, n),
        rng.choice([-1, 1], n),
        validate=False,
    )


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.strip())
    ap.add_argument("--sizes", type=int, nargs="+",
                    default=[100_000, 1_000_000, 10_000_000])
    ap.add_argument("--repeats", type=int, default=10)
    ap.add_argument("--width", type=int, default=1280)
    ap.add_argument("--height", type=int, default=720)
    ap.add_argument("--rate", type=float, default=1e7, help="synthetic event rate, Hz")
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args(argv)

    geom = SensorGeometry(width=args.width, height=args.height)
    su, sv = states_from_config(
        OscillatorConfig(amp_x_px=3.0, amp_y_px=2.0, omega=100.0 * math.pi,
                         phi_x=0.1, phi_y=-1.0)
    )
    rng = np.random.default_rng(args.seed)

    print(f"{'events':>12} {'ns/event':>10} {'+/-':>8} {'Mev/s':>8}")
    for n in args.sizes:
        events = random_events(n, args.width, args.height, args.rate, rng)
        b = throughput_bench(events, su, sv, geom, repeats=args.repeats)
        print(f"{n:12d} {b['ns_per_event_mean']:10.2f} {b['ns_per_event_std']:8.2f} "
              f"{b['events_per_second']/1e6:8.2f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
