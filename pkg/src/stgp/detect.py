"""Sequential change detection on filtered modal traces.

The monitored signal per wavenumber is the amplitude of the derivative
coefficients.  Two rules are provided: a robust threshold on the deviation
from a baseline window (MAD-scaled, so alarms are invariant to trace
scaling), and a one-sided CUSUM on the standardized trace.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kalman import FilterResult, modal_amplitude

MAD_TO_SIGMA = 1.4826  # normal-consistency factor for the median absolute deviation
SCALE_FLOOR = 1e-12


def default_watch_set(max_abs: int = 3) -> tuple:
    """All wavenumbers with max(|k1|, |k2|) <= max_abs (k1 >= 0 half-plane)."""
    out = []
    for k1 in range(0, max_abs + 1):
        for k2 in range(-max_abs, max_abs + 1):
            if k1 == 0 and k2 < 0:
                continue
            out.append((k1, k2))
    return tuple(sorted(out))


@dataclass(frozen=True)
class DetectionConfig:
    method: str = "threshold"          # "threshold" | "cusum"
    baseline_window: int = 10
    threshold: float = 4.0
    cusum_drift: float = 0.5
    watch_set: tuple = field(default_factory=default_watch_set)

    def __post_init__(self):
        if self.baseline_window < 2:
            raise ValueError("baseline_window must be >= 2")
        if not self.threshold > 0:
            raise ValueError("threshold must be positive")
        if self.method not in ("threshold", "cusum"):
            raise ValueError(f"unknown detection method {self.method!r}")


@dataclass(frozen=True)
class TraceStats:
    center: float
    scale: float
    degenerate: bool


@dataclass(frozen=True)
class AlarmReport:
    """First-alarm frames per wavenumber plus the earliest across the watch set."""

    alarms: dict                       # wavenumber -> frame index or None
    combined: object                   # earliest alarm frame or None
    stats: dict                        # wavenumber -> TraceStats
    method: str
    baseline_window: int


def beta_traces(result: FilterResult, watch) -> dict:
    """Amplitude series of the derivative coefficients for each watched mode."""
    out = {}
    for k in watch:
        out[tuple(k)] = modal_amplitude(result, tuple(k), which="beta")
    return out


def alpha_traces(result: FilterResult, watch) -> dict:
    """Amplitude series of the field coefficients for each watched mode."""
    out = {}
    for k in watch:
        out[tuple(k)] = modal_amplitude(result, tuple(k), which="alpha")
    return out


def _baseline_stats(trace: np.ndarray, window: int) -> TraceStats:
    base = trace[:window]
    center = float(np.mean(base))
    mad = float(np.median(np.abs(base - np.median(base))))
    scale = MAD_TO_SIGMA * mad
    degenerate = scale < SCALE_FLOOR
    if degenerate:
        scale = SCALE_FLOOR
    return TraceStats(center=center, scale=scale, degenerate=degenerate)


def _first_alarm(trace: np.ndarray, stats: TraceStats, cfg: DetectionConfig):
    start = cfg.baseline_window
    if cfg.method == "threshold":
        dev = np.abs(trace[start:] - stats.center)
        hits = np.flatnonzero(dev > cfg.threshold * stats.scale)
        return int(start + hits[0]) if hits.size else None
    z = (trace[start:] - stats.center) / stats.scale
    g = 0.0
    for i, zi in enumerate(z):
        g = max(0.0, g + zi - cfg.cusum_drift)
        if g > cfg.threshold:
            return int(start + i)
    return None


def detect(traces: dict, cfg: DetectionConfig = None) -> AlarmReport:
    """Scan traces for the first departure from their baseline behaviour.

    Frames up to ``baseline_window`` calibrate the center and MAD scale; the
    scan starts right after.  The combined alarm is the earliest per-mode
    alarm across the given traces.
    """
    cfg = cfg or DetectionConfig()
    alarms = {}
    stats = {}
    for k, trace in traces.items():
        trace = np.asarray(trace, dtype=float)
        if trace.size <= cfg.baseline_window:
            raise ValueError(
                f"trace for {k} has {trace.size} frames, needs more than "
                f"baseline_window = {cfg.baseline_window}")
        st = _baseline_stats(trace, cfg.baseline_window)
        stats[k] = st
        alarms[k] = _first_alarm(trace, st, cfg)
    fired = [a for a in alarms.values() if a is not None]
    combined = min(fired) if fired else None
    return AlarmReport(alarms=alarms, combined=combined, stats=stats,
                       method=cfg.method, baseline_window=cfg.baseline_window)
