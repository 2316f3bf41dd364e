"""Per-path driving noise on a uniform grid and its exact pathwise time
reversal.

Reversal maps the Brownian increment over [t_k, t_{k+1}] to minus the
increment over the mirrored cell, and a jump event (t, l) to (T - t, -l).
A jump in cell (t_k, t_{k+1}] is applied at the end of the cell; under
reversal it is applied at the end of the mirrored cell ``n - 1 - k``.  Cell
indices are stored explicitly so the coupling between a path and its
reversal is exact in floating point.

Substreams are counter-based: path ``i`` of seed ``s`` owns the Philox
stream keyed ``(s, i)``; Brownian draws start at counter 0 and jump draws at
counter 2^62 in the high word, so the two never overlap and bundles are
reproducible independent of worker count or evaluation order.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .levy import JointJumpStructure, LevyMeasure, levy_transform, sample_jumps

FORWARD = "forward"
REVERSED = "reversed"

_JUMP_STREAM_COUNTER = (0, 0, 0, 1 << 62)
_PAIR_STREAM_COUNTER = (0, 0, 0, 1 << 61)


class DirectionError(ValueError):
    """Direction-tag mismatch between a bundle and the flow consuming it."""


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid 0 = t_0 < ... < t_n = T."""

    T: float
    n_steps: int

    def __post_init__(self):
        if self.T <= 0:
            raise ValueError("horizon T must be positive")
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")

    @property
    def dt(self) -> float:
        return self.T / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n_steps + 1)

    def cell_of(self, t: np.ndarray) -> np.ndarray:
        """Cell index k with t in (t_k, t_{k+1}]."""
        k = np.ceil(np.asarray(t) / self.dt).astype(int) - 1
        return np.clip(k, 0, self.n_steps - 1)


@dataclass(frozen=True, eq=False)
class NoiseBundle:
    """One path's Brownian increments and jump events.

    ``measure`` is the law of the stored jump sizes: the generating measure
    for a forward bundle, its reflection after one reversal.
    """

    grid: TimeGrid
    dw: np.ndarray
    jump_times: np.ndarray
    jump_sizes: np.ndarray
    jump_cells: np.ndarray
    measure: LevyMeasure
    direction: str = FORWARD

    def cell_sums(self) -> np.ndarray:
        """Total jump size applied at the end of each cell, shape (n_steps,)."""
        out = np.zeros(self.grid.n_steps)
        np.add.at(out, self.jump_cells, self.jump_sizes)
        return out

    def require_direction(self, direction: str):
        if self.direction != direction:
            raise DirectionError(
                f"bundle direction is {self.direction!r}, flow needs {direction!r}")


def _philox_generators(seed: int, path_index: int):
    """(increment stream, jump stream) for one path."""
    gen_w = np.random.Generator(np.random.Philox(key=[seed, path_index]))
    gen_j = np.random.Generator(
        np.random.Philox(key=[seed, path_index], counter=list(_JUMP_STREAM_COUNTER)))
    return gen_w, gen_j


def generate_noise(grid: TimeGrid, measure: LevyMeasure, seed: int,
                   path_index: int) -> NoiseBundle:
    """Forward bundle for one path, deterministic given (seed, path_index)."""
    gen_w, gen_j = _philox_generators(seed, path_index)
    dw = gen_w.standard_normal(grid.n_steps) * np.sqrt(grid.dt)
    times, sizes = sample_jumps(measure, grid.T, gen_j) if not measure.is_zero \
        else (np.empty(0), np.empty(0))
    cells = grid.cell_of(times) if len(times) else np.empty(0, int)
    return NoiseBundle(grid, dw, times, sizes, cells, measure, FORWARD)


def reverse_noise(b: NoiseBundle) -> NoiseBundle:
    """Exact pathwise time reversal; an involution up to float rounding of
    the jump times (sizes, cells and increments round-trip bitwise)."""
    n = b.grid.n_steps
    dw = -b.dw[::-1]
    times = (b.grid.T - b.jump_times)[::-1]
    sizes = -b.jump_sizes[::-1]
    cells = (n - 1 - b.jump_cells)[::-1]
    direction = REVERSED if b.direction == FORWARD else FORWARD
    return NoiseBundle(b.grid, dw, times, sizes, cells,
                       levy_transform(b.measure, "reflect"), direction)


def levy_path_value(b: NoiseBundle, measure: LevyMeasure, k: int) -> float:
    """Value of the driving jump process at grid index ``k``.

    Forward bundle: the compensated compound-Poisson value
    ``sum_{cells < k} sizes - t_k * k1(m)``.  Reversed bundle: the stored
    (reflected) sizes with the opposite drift sign, so that on every grid
    point the reversed value equals ``L_{T - t_k} - L_T`` exactly.
    """
    if not (0 <= k <= b.grid.n_steps):
        raise IndexError(f"grid index {k} out of range [0, {b.grid.n_steps}]")
    if measure != b.measure:
        raise ValueError("measure does not match the one stored in the bundle")
    t_k = k * b.grid.dt
    jump_sum = float(b.jump_sizes[b.jump_cells < k].sum())
    if b.direction == FORWARD:
        return jump_sum - t_k * measure.k1
    return jump_sum + t_k * levy_transform(measure, "reflect").k1


# ----------------------------------------------------------------------
# batched generation (path-identical to generate_noise)
# ----------------------------------------------------------------------

class _StreamScrubber:
    """Reusable Philox generator re-keyed per path; avoids per-path object
    construction while producing draws identical to a fresh generator."""

    def __init__(self):
        self._bg = np.random.Philox(key=[0, 0])
        self.gen = np.random.Generator(self._bg)
        self._state = self._bg.state

    def rekey(self, seed: int, path_index: int, counter=(0, 0, 0, 0)):
        st = self._state
        st["state"]["key"][:] = (seed, path_index)
        st["state"]["counter"][:] = counter
        st["buffer_pos"] = 4
        st["has_uint32"] = 0
        st["uinteger"] = 0
        self._bg.state = st
        return self.gen


def batch_noise(grid: TimeGrid, measure: LevyMeasure, seed: int,
                start: int, count: int):
    """Increments and per-cell jump sums for paths [start, start + count).

    Returns ``(dw, jump_cell_sums)`` with shape (count, n_steps) each.  Row
    ``i`` is bitwise identical to ``generate_noise(..., start + i)``.
    """
    n = grid.n_steps
    sqdt = np.sqrt(grid.dt)
    dw = np.empty((count, n))
    jsum = np.zeros((count, n))
    w_scr = _StreamScrubber()
    j_scr = _StreamScrubber()
    with_jumps = not measure.is_zero
    for i in range(count):
        idx = start + i
        gen_w = w_scr.rekey(seed, idx)
        dw[i] = gen_w.standard_normal(n)
        if with_jumps:
            gen_j = j_scr.rekey(seed, idx, _JUMP_STREAM_COUNTER)
            times, sizes = sample_jumps(measure, grid.T, gen_j)
            if len(times):
                np.add.at(jsum[i], grid.cell_of(times), sizes)
    dw *= sqdt
    return dw, jsum


def reverse_batch(dw: np.ndarray, jsum: np.ndarray):
    """Batch analogue of :func:`reverse_noise` on (dw, cell sums) arrays."""
    return -dw[:, ::-1], -jsum[:, ::-1]


# ----------------------------------------------------------------------
# two-asset noise
# ----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PairNoiseBundle:
    """Joint driving noise for a two-asset model.

    ``dw1`` and ``dw_perp`` are independent N(0, dt) increment arrays; the
    simulator builds the second Brownian motion from the instantaneous
    correlation, which may depend on the state.  The jump list is joint:
    event j moves asset i by ``exp(l_i)`` at the end of cell ``cells[j]``.
    """

    grid: TimeGrid
    dw1: np.ndarray
    dw_perp: np.ndarray
    jump_times: np.ndarray
    jump_l1: np.ndarray
    jump_l2: np.ndarray
    jump_cells: np.ndarray
    structure: JointJumpStructure
    direction: str = FORWARD

    def cell_sums(self):
        n = self.grid.n_steps
        s1 = np.zeros(n)
        s2 = np.zeros(n)
        np.add.at(s1, self.jump_cells, self.jump_l1)
        np.add.at(s2, self.jump_cells, self.jump_l2)
        return s1, s2

    def require_direction(self, direction: str):
        if self.direction != direction:
            raise DirectionError(
                f"bundle direction is {self.direction!r}, flow needs {direction!r}")


def generate_pair_noise(grid: TimeGrid, structure: JointJumpStructure,
                        seed: int, path_index: int) -> PairNoiseBundle:
    gen_w = np.random.Generator(np.random.Philox(key=[seed, path_index]))
    gen_p = np.random.Generator(
        np.random.Philox(key=[seed, path_index], counter=list(_PAIR_STREAM_COUNTER)))
    gen_j = np.random.Generator(
        np.random.Philox(key=[seed, path_index], counter=list(_JUMP_STREAM_COUNTER)))
    sqdt = np.sqrt(grid.dt)
    dw1 = gen_w.standard_normal(grid.n_steps) * sqdt
    dwp = gen_p.standard_normal(grid.n_steps) * sqdt
    times, l1, l2 = structure.sample(grid.T, gen_j) if not structure.is_zero \
        else (np.empty(0), np.empty(0), np.empty(0))
    cells = grid.cell_of(times) if len(times) else np.empty(0, int)
    return PairNoiseBundle(grid, dw1, dwp, times, l1, l2, cells, structure, FORWARD)


def reverse_pair_noise(b: PairNoiseBundle) -> PairNoiseBundle:
    n = b.grid.n_steps
    direction = REVERSED if b.direction == FORWARD else FORWARD
    return PairNoiseBundle(
        b.grid,
        -b.dw1[::-1],
        -b.dw_perp[::-1],
        (b.grid.T - b.jump_times)[::-1],
        -b.jump_l1[::-1],
        -b.jump_l2[::-1],
        (n - 1 - b.jump_cells)[::-1],
        b.structure.reflect(),
        direction,
    )


def batch_pair_noise(grid: TimeGrid, structure: JointJumpStructure, seed: int,
                     start: int, count: int):
    """Batched pair noise: (dw1, dw_perp, jsum1, jsum2), rows identical to
    :func:`generate_pair_noise` for the same path index."""
    n = grid.n_steps
    sqdt = np.sqrt(grid.dt)
    dw1 = np.empty((count, n))
    dwp = np.empty((count, n))
    js1 = np.zeros((count, n))
    js2 = np.zeros((count, n))
    w_scr = _StreamScrubber()
    p_scr = _StreamScrubber()
    j_scr = _StreamScrubber()
    with_jumps = not structure.is_zero
    for i in range(count):
        idx = start + i
        dw1[i] = w_scr.rekey(seed, idx).standard_normal(n)
        dwp[i] = p_scr.rekey(seed, idx, _PAIR_STREAM_COUNTER).standard_normal(n)
        if with_jumps:
            gen_j = j_scr.rekey(seed, idx, _JUMP_STREAM_COUNTER)
            times, l1, l2 = structure.sample(grid.T, gen_j)
            if len(times):
                cells = grid.cell_of(times)
                np.add.at(js1[i], cells, l1)
                np.add.at(js2[i], cells, l2)
    dw1 *= sqdt
    dwp *= sqdt
    return dw1, dwp, js1, js2
