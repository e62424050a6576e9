"""Exact Brownian bridge sampling on the torus.

A torus bridge from x to y is sampled in two stages: first a winding class
w per coordinate with probability proportional to exp(-(dy + 2 pi w)^2 / 2t),
then an exact Euclidean Gaussian bridge to the lifted endpoint y + 2 pi w.
Endpoints are pinned exactly: positions[0] == x and positions[-1] equals the
lift bitwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import TWO_PI, winding_cutoff


@dataclass(frozen=True)
class BridgePath:
    """Single discretized bridge; positions are the unwrapped lift."""

    x: np.ndarray
    y: np.ndarray
    t: float
    steps: int
    winding: np.ndarray
    positions: np.ndarray

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.positions, axis=0)

    @property
    def lift_endpoint(self) -> np.ndarray:
        return self.y + TWO_PI * self.winding

    @property
    def wrapped_positions(self) -> np.ndarray:
        return np.mod(self.positions, TWO_PI)


def sample_winding(rng: np.random.Generator, d: int, x, y, t: float, n_paths: int):
    """Winding classes, one integer per coordinate per path."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    wmax = winding_cutoff(t)
    ws = np.arange(-wmax, wmax + 1)
    out = np.empty((n_paths, d), dtype=np.int64)
    u = rng.random((n_paths, d))
    for m in range(d):
        weights = np.exp(-((y[m] - x[m] + TWO_PI * ws) ** 2) / (2.0 * t))
        cdf = np.cumsum(weights)
        cdf /= cdf[-1]
        out[:, m] = ws[np.searchsorted(cdf, u[:, m])]
    return out


def _bridge_positions(
    rng: np.random.Generator, x, z, t: float, steps: int, n_paths: int, d: int
):
    """Euclidean bridge positions from x to per-path endpoints z, exact law.

    Sequential conditional sampling; the final step is deterministic, so the
    endpoint is assigned rather than rounded.
    """
    h = t / steps
    pos = np.empty((n_paths, steps + 1, d))
    cur = np.broadcast_to(np.asarray(x, dtype=float), (n_paths, d)).copy()
    pos[:, 0, :] = cur
    for k in range(steps - 1):
        tau = t - k * h
        mean = cur + (z - cur) * (h / tau)
        std = np.sqrt(h * (tau - h) / tau)
        cur = mean + std * rng.standard_normal((n_paths, d))
        pos[:, k + 1, :] = cur
    pos[:, steps, :] = z
    return pos


def sample_bridge_batch(
    rng: np.random.Generator, d: int, x, y, t: float, steps: int, n_paths: int
):
    """Torus bridges; returns (windings, positions) with positions unwrapped.

    Draw order is fixed (windings first, then one Gaussian block per step),
    so a given generator state yields a reproducible batch.
    """
    if steps < 2:
        raise ValueError("need at least 2 steps")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    windings = sample_winding(rng, d, x, y, t, n_paths)
    z = y + TWO_PI * windings
    positions = _bridge_positions(rng, x, z, t, steps, n_paths, d)
    return windings, positions


def sample_bridge(
    rng: np.random.Generator, d: int, x, y, t: float, steps: int
) -> BridgePath:
    windings, positions = sample_bridge_batch(rng, d, x, y, t, steps, 1)
    return BridgePath(
        np.asarray(x, dtype=float),
        np.asarray(y, dtype=float),
        t,
        steps,
        windings[0],
        positions[0],
    )


def standard_bridge_increments(
    rng: np.random.Generator, d: int, steps: int, n_paths: int
):
    """Increments of the standard Euclidean bridge 0 -> 0 on [0, 1]."""
    zeros = np.zeros(d)
    pos = _bridge_positions(rng, zeros, np.zeros((n_paths, d)), 1.0, steps, n_paths, d)
    return pos[:, :-1, :], np.diff(pos, axis=1)
