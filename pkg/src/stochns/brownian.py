"""Reproducible Wiener increments from a counter-based generator.

Every increment is a pure function of (master_seed, path_index, refinement
level, global step index, process index): the Philox counter is keyed by the
first three and advanced directly to the requested cell, so any block can be
drawn in any order, from any thread, with bit-identical results. Gaussians
come from the inverse normal CDF applied to the raw 64-bit words; the mapping
is pinned for reproducibility across releases.

Refinement is a Brownian bridge: fine increments are conditioned to sum to
the coarse ones exactly, drawing their randomness from the next level's
stream so nested refinement never collides with parent positions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

_U53 = 2.0 ** -53
_MAX_PATHS = 1 << 48  # level is packed above the path index in the Philox key


@dataclass(frozen=True)
class PathSpec:
    """Identity of one sample path of the full Wiener family."""

    master_seed: int
    path_index: int
    n_processes: int

    def __post_init__(self):
        if not (0 <= self.path_index < _MAX_PATHS):
            raise ValueError("path_index out of range")
        if self.n_processes < 0:
            raise ValueError("n_processes must be >= 0")


@dataclass(frozen=True)
class IncrementBlock:
    """Increments dW[step, process] ~ N(0, dt) for consecutive steps.

    step0 is the absolute index of the first row at this block's resolution;
    level counts bridge refinements (0 = base stream).
    """

    spec: PathSpec
    dt: float
    step0: int
    increments: np.ndarray = field(repr=False)
    level: int = 0

    def __post_init__(self):
        self.increments.flags.writeable = False

    @property
    def n_steps(self) -> int:
        return self.increments.shape[0]

    def wiener_values(self) -> np.ndarray:
        """Cumulative path W at the right endpoints of each step, per process."""
        return np.cumsum(self.increments, axis=0)


def _philox_key(spec: PathSpec, level: int) -> np.ndarray:
    mixed = np.uint64(spec.path_index) ^ (np.uint64(level) << np.uint64(48))
    return np.array([np.uint64(spec.master_seed & 0xFFFFFFFFFFFFFFFF), mixed],
                    dtype=np.uint64)


def _standard_normals(spec: PathSpec, level: int, start_cell: int,
                      count: int) -> np.ndarray:
    """count standard normals at consecutive stream cells, by direct counter access."""
    if count == 0:
        return np.zeros(0)
    bg = np.random.Philox(key=_philox_key(spec, level))
    if start_cell:
        bg.advance(start_cell)
    words = bg.random_raw(4 * count)[::4]  # one counter block per cell
    uniforms = ((words >> np.uint64(11)).astype(np.float64) + 0.5) * _U53
    return ndtri(uniforms)


def increments(spec: PathSpec, t0: float, dt: float, n_steps: int) -> IncrementBlock:
    """Wiener increments for n_steps steps of size dt starting at time t0.

    t0 must sit on the step grid; the block depends only on (spec, step
    index of t0, dt), so requesting a tail block reproduces the matching
    slice of a longer one bit for bit.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    if n_steps < 0:
        raise ValueError("n_steps must be >= 0")
    step0 = int(round(t0 / dt))
    if abs(step0 * dt - t0) > 1e-9 * max(1.0, abs(t0)):
        raise ValueError(f"t0={t0} is not on the dt={dt} step grid")
    cells = n_steps * spec.n_processes
    z = _standard_normals(spec, 0, step0 * spec.n_processes, cells)
    dw = (np.sqrt(dt) * z).reshape(n_steps, spec.n_processes)
    return IncrementBlock(spec=spec, dt=dt, step0=step0, increments=dw, level=0)


def refine(block: IncrementBlock, factor: int) -> IncrementBlock:
    """Brownian-bridge subdivision: factor fine steps per coarse step.

    The fine increments are exact conditional samples given the coarse ones:
    each group of `factor` has mean dW/factor and bridge covariance, and sums
    to the coarse increment to rounding. Randomness comes from the next
    refinement level's stream.
    """
    if factor < 2:
        raise ValueError("refinement factor must be >= 2")
    n_steps, n_proc = block.increments.shape
    fine_dt = block.dt / factor
    fine_step0 = block.step0 * factor
    cells = n_steps * factor * n_proc
    z = _standard_normals(block.spec, block.level + 1, fine_step0 * n_proc, cells)
    z = z.reshape(n_steps, factor, n_proc)
    centred = z - z.mean(axis=1, keepdims=True)
    fine = (block.increments[:, None, :] / factor
            + np.sqrt(fine_dt) * centred).reshape(n_steps * factor, n_proc)
    return IncrementBlock(spec=block.spec, dt=fine_dt, step0=fine_step0,
                          increments=fine, level=block.level + 1)
