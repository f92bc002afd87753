"""Brownian paths and the Ornstein-Uhlenbeck process on path space.

The OU process is realised through the Brownian sheet: ``U_s(t) = B(e^s, t) /
e^{s/2}``.  Between two parameter values ``s < S`` this gives the exact update

    U_S = U_s * sqrt(1 - lam) + V * sqrt(lam),   lam = 1 - exp(-(S - s)),

with ``V`` a Brownian path independent of ``U_s``, so an ensemble over a sorted
list of ``s`` values is a Markov chain of such updates.

Randomness comes from :class:`RngStream`, a counter-based (Philox) stream that
is a pure function of ``(master_seed, replicate_index, substream_counter)``.
Batched calls draw a whole block of replicates from one stream; the block
index plays the role of ``replicate_index``, so results depend only on how
replicates are grouped into blocks, never on which worker ran them.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterator, Sequence

import numpy as np

# -zeta(1/2)/sqrt(2*pi): shift between discretely and continuously monitored
# barriers for Brownian motion sampled with step dt.
BRIDGE_SHIFT = 1.4603545088095868 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid with ``2**(k + refine) + 1`` points on ``[0, t_max]``.

    ``refine`` adds Brownian-bridge midpoint levels on top of the level-``k``
    skeleton, drawn from a separate substream, so a refined path agrees with
    the unrefined one at the coarse points.  ``continuity_correction`` makes
    :meth:`sup_shift` return the discrete-monitoring barrier shift.
    """

    k: int = 12
    t_max: float = 1.0
    refine: int = 0
    continuity_correction: bool = False

    def __post_init__(self) -> None:
        if self.k < 4:
            raise ValueError(f"grid resolution k must be >= 4, got {self.k}")
        if not self.t_max > 0:
            raise ValueError("t_max must be positive")
        if self.refine < 0:
            raise ValueError("refine must be >= 0")

    @property
    def cells(self) -> int:
        return 2 ** (self.k + self.refine)

    @property
    def coarse_cells(self) -> int:
        return 2**self.k

    @property
    def dt(self) -> float:
        return self.t_max / self.cells

    @property
    def points(self) -> np.ndarray:
        return np.linspace(0.0, self.t_max, self.cells + 1)

    def index_at(self, horizon: float) -> int:
        """Index of the last grid point in ``[0, horizon]``."""
        if horizon > self.t_max * (1 + 1e-12):
            raise ValueError(f"horizon {horizon} exceeds grid length {self.t_max}")
        return min(self.cells, int(math.floor(horizon / self.dt + 1e-9)))

    def sup_shift(self) -> float:
        return BRIDGE_SHIFT * math.sqrt(self.dt) if self.continuity_correction else 0.0

    def refined(self, levels: int = 2) -> "TimeGrid":
        return replace(self, refine=self.refine + levels)


@dataclass(frozen=True)
class RngStream:
    master_seed: int
    replicate_index: int = 0
    substream_counter: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        if self.replicate_index < 0 or self.substream_counter < 0:
            raise ValueError("stream indices must be nonnegative")

    def generator(self, part: int = 0) -> np.random.Generator:
        key = (self.replicate_index, self.substream_counter)
        if part:
            key = key + (part,)
        seq = np.random.SeedSequence(self.master_seed, spawn_key=key)
        return np.random.Generator(np.random.Philox(seq))

    def substream(self, counter: int) -> "RngStream":
        return replace(self, substream_counter=counter)

    def ids(self) -> dict[str, int]:
        return {
            "master_seed": self.master_seed,
            "replicate_index": self.replicate_index,
            "substream_counter": self.substream_counter,
        }


class _PathSource:
    """Draws Brownian paths for one stream: skeleton and bridge refinement
    come from two independent generators."""

    def __init__(self, grid: TimeGrid, stream: RngStream):
        self.grid = grid
        self.coarse = stream.generator()
        self.fine = stream.generator(part=1) if grid.refine else None

    def draw(self, size: int | None) -> np.ndarray:
        g = self.grid
        n = g.coarse_cells
        dt = g.t_max / n
        shape = (n,) if size is None else (size, n)
        inc = self.coarse.standard_normal(shape)
        inc *= math.sqrt(dt)
        path = np.empty(shape[:-1] + (n + 1,))
        path[..., 0] = 0.0
        np.cumsum(inc, axis=-1, out=path[..., 1:])
        for _ in range(g.refine):
            m = path.shape[-1] - 1
            z = self.fine.standard_normal(path.shape[:-1] + (m,))
            finer = np.empty(path.shape[:-1] + (2 * m + 1,))
            finer[..., ::2] = path
            finer[..., 1::2] = 0.5 * (path[..., :-1] + path[..., 1:]) + math.sqrt(dt / 4) * z
            path = finer
            dt /= 2
        return path


def sample_brownian(grid: TimeGrid, stream: RngStream, size: int | None = None) -> np.ndarray:
    """Brownian path on ``grid`` (shape ``(cells+1,)`` or ``(size, cells+1)``)."""
    return _PathSource(grid, stream).draw(size)


def ou_initial(grid: TimeGrid, stream: RngStream, size: int | None = None) -> np.ndarray:
    """``U_0``: the stationary law of the OU process is Wiener measure."""
    return sample_brownian(grid, stream, size)


def _ou_coeffs(ds: float) -> tuple[float, float]:
    return math.exp(-0.5 * ds), math.sqrt(-math.expm1(-ds))


def ou_evolve(current: np.ndarray, ds: float, grid: TimeGrid, stream: RngStream) -> np.ndarray:
    """Advance ``U_s`` to ``U_{s+ds}`` with a fresh independent Brownian path."""
    if not ds > 0:
        raise ValueError(f"ds must be positive, got {ds}")
    current = np.asarray(current, dtype=float)
    if current.shape[-1] != grid.cells + 1:
        raise ValueError("current path is not defined on this grid")
    size = None if current.ndim == 1 else current.shape[0]
    v = sample_brownian(grid, stream, size)
    a, b = _ou_coeffs(ds)
    return a * current + b * v


def _check_s_values(s_values: Sequence[float]) -> np.ndarray:
    s = np.asarray(s_values, dtype=float)
    if s.ndim != 1 or s.size == 0:
        raise ValueError("s_values must be a nonempty 1-d sequence")
    if np.any(np.diff(s) < 0):
        raise ValueError("s_values must be sorted")
    if s[0] < 0 or not np.all(np.isfinite(s)):
        raise ValueError("s_values must be finite and nonnegative")
    return s


def ou_chain(
    s_values: Sequence[float], grid: TimeGrid, stream: RngStream, size: int | None = None
) -> Iterator[np.ndarray]:
    """Yield ``U_s`` for each ``s`` in order, one path (or block) at a time.

    Repeated ``s`` values yield the same path.  The draw order (initial path,
    then one fresh path per positive gap) is shared with :func:`ou_ensemble`.
    """
    s = _check_s_values(s_values)
    src = _PathSource(grid, stream)
    u = src.draw(size)
    yield u
    for gap in np.diff(s):
        if gap > 0:
            a, b = _ou_coeffs(float(gap))
            v = src.draw(size)
            v *= b
            u = a * u
            u += v
        yield u


@dataclass
class OUEnsemble:
    s_values: np.ndarray
    grid: TimeGrid
    values: np.ndarray  # (len(s),  cells+1) or (size, len(s), cells+1)
    provenance: dict = field(default_factory=dict)

    def to_csv(self, path: str | Path, replicate: int = 0) -> None:
        """Long-format ``(s, t, value)`` table of one replicate."""
        vals = self.values if self.values.ndim == 2 else self.values[replicate]
        t = self.grid.points
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["s", "t", "value"])
            for i, s in enumerate(self.s_values):
                for j in range(t.size):
                    w.writerow([repr(float(s)), repr(float(t[j])), repr(float(vals[i, j]))])

    def manifest(self) -> dict:
        return {
            "master_seed": self.provenance.get("master_seed"),
            "replicate_index": self.provenance.get("replicate_index"),
            "substream_counter": self.provenance.get("substream_counter"),
            "k": self.grid.k,
            "refine": self.grid.refine,
            "t_max": self.grid.t_max,
            "s_values": [float(s) for s in self.s_values],
        }

    def write(self, directory: str | Path, stem: str = "ensemble") -> tuple[Path, Path]:
        directory = Path(directory)
        csv_path = directory / f"{stem}.csv"
        json_path = directory / f"{stem}.json"
        self.to_csv(csv_path)
        json_path.write_text(json.dumps(self.manifest(), indent=2, sort_keys=True) + "\n")
        return csv_path, json_path


def ou_ensemble(
    s_values: Sequence[float], grid: TimeGrid, stream: RngStream, size: int | None = None
) -> OUEnsemble:
    s = _check_s_values(s_values)
    paths = list(ou_chain(s, grid, stream, size))
    axis = 0 if size is None else 1
    return OUEnsemble(s, grid, np.stack(paths, axis=axis), stream.ids())


def sup_norm(path: np.ndarray, horizon: float = 1.0, grid: TimeGrid | None = None):
    """Max of ``|path|`` over grid points in ``[0, horizon]``.

    Without a grid the path is taken to span ``[0, 1]`` uniformly.
    Works on the last axis, so blocks of paths are reduced row-wise.
    """
    path = np.asarray(path, dtype=float)
    if grid is None:
        grid_len = 1.0
        n = path.shape[-1] - 1
        if horizon > grid_len * (1 + 1e-12):
            raise ValueError(f"horizon {horizon} exceeds grid length 1")
        idx = min(n, int(math.floor(horizon * n + 1e-9)))
    else:
        idx = grid.index_at(horizon)
    out = np.abs(path[..., : idx + 1]).max(axis=-1)
    return float(out) if out.ndim == 0 else out


def ensemble_sup_norms(
    s_values: Sequence[float],
    grid: TimeGrid,
    stream: RngStream,
    size: int,
    horizon: float | None = None,
) -> np.ndarray:
    """Raw ``sup_{[0, horizon]} |U_s|`` for each replicate and each ``s``.

    Same draws as ``ou_ensemble(..., size)`` but streamed, so memory stays at
    a couple of path blocks regardless of ``len(s_values)``.
    """
    horizon = grid.t_max if horizon is None else horizon
    idx = grid.index_at(horizon)
    s = _check_s_values(s_values)
    out = np.empty((size, s.size))
    for i, u in enumerate(ou_chain(s, grid, stream, size)):
        out[:, i] = np.abs(u[:, : idx + 1]).max(axis=1)
    return out


@dataclass(frozen=True)
class ConfinementRegion:
    """``{|x| <= r, |x sqrt(1-lam) + y sqrt(lam)| <= r}``."""

    lam: float
    r: float

    def __post_init__(self) -> None:
        if not 0 < self.lam <= 1:
            raise ValueError("lam must lie in (0, 1]")
        if not self.r > 0:
            raise ValueError("r must be positive")


def planar_confinement(
    region: ConfinementRegion, grid: TimeGrid, stream: RngStream, size: int | None = None
):
    """Does a planar Brownian path stay in the region on ``[0, 1]``?"""
    src = _PathSource(grid, stream)
    x = src.draw(size)
    y = src.draw(size)
    idx = grid.index_at(1.0)
    x = x[..., : idx + 1]
    y = y[..., : idx + 1]
    mixed = x * math.sqrt(1 - region.lam) + y * math.sqrt(region.lam)
    thr = region.r - grid.sup_shift()
    inside = (np.abs(x).max(axis=-1) <= thr) & (np.abs(mixed).max(axis=-1) <= thr)
    return bool(inside) if np.ndim(inside) == 0 else inside


# -- replicate blocks ----------------------------------------------------------


def block_sizes(replicates: int, block_size: int) -> list[int]:
    if replicates < 1 or block_size < 1:
        raise ValueError("replicates and block_size must be positive")
    full, rest = divmod(replicates, block_size)
    return [block_size] * full + ([rest] if rest else [])


def run_blocks(
    fn: Callable[[int, int], np.ndarray],
    replicates: int,
    block_size: int,
    workers: int = 1,
) -> np.ndarray:
    """Evaluate ``fn(block_index, block_len)`` for every block and concatenate
    in block order.  Output does not depend on ``workers``."""
    sizes = block_sizes(replicates, block_size)
    if workers <= 1 or len(sizes) == 1:
        parts = [fn(b, n) for b, n in enumerate(sizes)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(fn, range(len(sizes)), sizes))
    return np.concatenate(parts, axis=0)
