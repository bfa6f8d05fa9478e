"""Learning-curve analysis: windowed success rates, stable rate, convergence
steps, and the acceleration ratio between two runs."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

DEFAULT_WINDOW = 50
DEFAULT_DELTA = 0.05
DEFAULT_K = 5


@dataclass(frozen=True)
class StabilityParams:
    delta: float = DEFAULT_DELTA
    k: int = DEFAULT_K

    def __post_init__(self):
        if self.delta <= 0 or self.k < 1:
            raise ValueError("need delta > 0 and k >= 1")


def window_rates(outcomes: list[int], window: int = DEFAULT_WINDOW) -> np.ndarray:
    """Success rate per non-overlapping box of `window` attempts; remainder dropped."""
    if window < 1:
        raise ValueError("window must be >= 1")
    if len(outcomes) < window:
        raise ValueError(f"curve of {len(outcomes)} attempts is shorter than window {window}")
    arr = np.asarray(outcomes, dtype=float)
    n = len(arr) // window
    return arr[:n * window].reshape(n, window).mean(axis=1)


def stable_rate(y: np.ndarray, params: StabilityParams = StabilityParams()) -> float | None:
    """Mean of the last k window rates, provided the curve has settled: all k
    window-to-window changes across those final windows stay below delta.
    None when the tail is still moving. Judging the tail rather than the
    first quiet stretch matters on curves that idle near zero before
    learning starts; those are not converged."""
    y = np.asarray(y, dtype=float)
    if len(y) < params.k + 1:
        raise ValueError(f"need at least {params.k + 1} windows, got {len(y)}")
    tail = y[-(params.k + 1):]
    if np.all(np.abs(np.diff(tail)) < params.delta):
        return float(y[-params.k:].mean())
    return None


def convergence_steps(y: np.ndarray, g_bar: float, p: float,
                      window: int = DEFAULT_WINDOW) -> int | None:
    """Attempt count until the windowed rate first reaches p% of g_bar; None if never."""
    if not 0 < p <= 100:
        raise ValueError("p must be in (0, 100]")
    threshold = (p / 100.0) * g_bar
    hits = np.nonzero(np.asarray(y, dtype=float) >= threshold)[0]
    if hits.size == 0:
        return None
    return int(hits[0] + 1) * window


def acceleration_ratio(r_baseline: float, r_accelerated: float) -> float:
    """m = (r - r') / r'; positive when the accelerated method converges sooner."""
    if r_accelerated <= 0 or r_baseline <= 0:
        raise ValueError("convergence step counts must be positive")
    return (r_baseline - r_accelerated) / r_accelerated


def analyze_curve(outcomes: list[int], window: int = DEFAULT_WINDOW,
                  stability: StabilityParams = StabilityParams(),
                  percents: tuple[int, ...] = (50, 60, 70, 80, 90),
                  final_window: int = 100) -> dict:
    """Per-run metrics bundle as written to metrics.json.

    When the stability scan finds no qualifying run, the mean of the last k
    windows stands in for the stable rate and `converged` is False.
    """
    y = window_rates(outcomes, window)
    if len(y) >= stability.k + 1:
        g_bar = stable_rate(y, stability)
    else:
        g_bar = None  # too short to judge stability
    converged = g_bar is not None
    if g_bar is None:
        g_bar = float(y[-stability.k:].mean())
    cs = {str(p): convergence_steps(y, g_bar, p, window) for p in percents}
    tail = outcomes[-final_window:] if len(outcomes) >= final_window else outcomes
    return {
        "G_final": float(np.mean(tail)),
        "G_bar": g_bar,
        "Cs": cs,
        "converged": converged,
        "window": window,
        "n_windows": int(len(y)),
    }


def write_metrics(metrics: dict, path: str) -> None:
    with open(path, "w") as f:
        json.dump(metrics, f, indent=2)


def read_metrics(path: str) -> dict:
    with open(path) as f:
        return json.load(f)
