"""Monte Carlo hitting probabilities and relative capacities of sup-norm balls.

For a set ``G`` of OU times and a radius ``r`` the lab estimates

    p_G = P{ min_{s in G} sup_{[0,1]} |U_s| <= r }     (hit_prob)
    cap_G = E[ 1{hit within G cap [0, E]} ],  E ~ Exp(1)   (capacity)

where the infimum over ``G`` is taken over its leftmost greedy packing at
mesh ``eps_s`` (default ``r**6``).  The exponential horizon is integrated out
per replicate: a replicate whose first hit occurs at ``tau`` contributes
``exp(-tau)``, which has the same mean as sampling ``E`` and less variance.

All estimates built from the same ``(points, config)`` reuse one simulated
matrix of sup-norms, so joint comparisons are made on shared samples.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from collections import OrderedDict
from typing import Sequence

import numpy as np
from scipy import stats

from .engine import RngStream, TimeGrid, ensemble_sup_norms, run_blocks
from .sets import SetModel, kolmogorov_entropy, kolmogorov_points
from .smallball import sigma_series

Z95 = 1.959963984540054


class McResourceError(RuntimeError):
    """The requested discretisation exceeds the configured point cap."""


@dataclass(frozen=True)
class EventSpec:
    """The sup-norm ball ``{f : sup_{[0, horizon]} |f| <= r}``."""

    r: float
    horizon: float = 1.0

    def __post_init__(self) -> None:
        if not 0 < self.r:
            raise ValueError(f"r must be positive, got {self.r}")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")


@dataclass(frozen=True)
class McConfig:
    replicates: int = 10_000
    k: int = 12
    eps_s: float | None = None
    master_seed: int = 0
    block_size: int = 1000
    workers: int = 1
    continuity_correction: bool = True
    refine: int = 0
    max_points: int = 2048

    def __post_init__(self) -> None:
        if self.replicates < 100:
            raise ValueError("replicates must be >= 100")
        if self.eps_s is not None and not self.eps_s > 0:
            raise ValueError("eps_s must be positive")
        if self.block_size < 1:
            raise ValueError("block_size must be positive")

    def grid(self, horizon: float = 1.0) -> TimeGrid:
        return TimeGrid(self.k, horizon, self.refine, self.continuity_correction)

    def mesh(self, r: float) -> float:
        return self.eps_s if self.eps_s is not None else r**6

    def key(self) -> tuple:
        """Fields that determine simulated numbers (``workers`` excluded)."""
        return (
            self.replicates,
            self.k,
            self.master_seed,
            self.block_size,
            self.continuity_correction,
            self.refine,
        )


@dataclass(frozen=True)
class McEstimate:
    value: float
    stderr: float
    ci95: tuple[float, float]
    replicates: int

    @classmethod
    def from_indicators(cls, hits: np.ndarray) -> "McEstimate":
        """Binomial estimate with a Wilson score interval."""
        n = hits.size
        p = float(np.count_nonzero(hits)) / n
        se = math.sqrt(p * (1 - p) / n)
        z2 = Z95**2
        centre = (p + z2 / (2 * n)) / (1 + z2 / n)
        half = Z95 * math.sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / (1 + z2 / n)
        lo, hi = max(0.0, centre - half), min(1.0, centre + half)
        return cls(p, se, (min(lo, p), max(hi, p)), n)

    @classmethod
    def from_samples(cls, x: np.ndarray) -> "McEstimate":
        """Mean of ``[0, 1]``-valued samples with a clipped normal interval."""
        n = x.size
        p = float(np.mean(x))
        se = float(np.std(x, ddof=1)) / math.sqrt(n) if n > 1 else 0.0
        return cls(p, se, (max(0.0, p - Z95 * se), min(1.0, p + Z95 * se)), n)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ci95"] = list(self.ci95)
        return d


_CACHE: "OrderedDict[tuple, np.ndarray]" = OrderedDict()
_CACHE_SIZE = 6


def _simulate(points: tuple[float, ...], cfg: McConfig, horizon: float) -> np.ndarray:
    grid = cfg.grid(horizon)

    def block(b: int, n: int) -> np.ndarray:
        return ensemble_sup_norms(points, grid, RngStream(cfg.master_seed, b, 0), n, horizon)

    return run_blocks(block, cfg.replicates, cfg.block_size, cfg.workers)


def sup_matrix(points: Sequence[float], cfg: McConfig, horizon: float = 1.0) -> np.ndarray:
    """``(replicates, len(points))`` raw sup-norms of ``U_s`` on ``[0, horizon]``.

    Results are memoised on ``(points, cfg.key(), horizon)``; the worker count
    is not part of the key because it cannot change the numbers.
    """
    pts = tuple(float(p) for p in points)
    if len(pts) > cfg.max_points:
        raise McResourceError(
            f"{len(pts)} OU times requested, cap is {cfg.max_points}; raise eps_s or max_points"
        )
    key = (pts, cfg.key(), float(horizon))
    if key in _CACHE:
        _CACHE.move_to_end(key)
        return _CACHE[key]
    out = _simulate(pts, cfg, float(horizon))
    out.setflags(write=False)
    _CACHE[key] = out
    while len(_CACHE) > _CACHE_SIZE:
        _CACHE.popitem(last=False)
    return out


def clear_cache() -> None:
    _CACHE.clear()


def _threshold(r: float, cfg: McConfig, horizon: float) -> float:
    return r - cfg.grid(horizon).sup_shift()


def discretize(G: SetModel, eps_s: float) -> list[float]:
    if G.is_empty:
        raise ValueError("G is empty")
    pts = kolmogorov_points(G, eps_s)
    if pts[0] < 0 or pts[-1] > 1:
        raise ValueError("G must lie in [0, 1]")
    return pts


def _inside(points: Sequence[float], r: float, cfg: McConfig, horizon: float = 1.0) -> np.ndarray:
    return sup_matrix(points, cfg, horizon) <= _threshold(r, cfg, horizon)


def _first_hit_weights(inside: np.ndarray, points: Sequence[float]) -> np.ndarray:
    hit = inside.any(axis=1)
    first = np.argmax(inside, axis=1)
    tau = np.asarray(points)[first]
    return np.where(hit, np.exp(-tau), 0.0)


def hit_prob(G: SetModel, event: EventSpec, cfg: McConfig) -> McEstimate:
    """``P{ exists s in G_disc : sup_{[0, horizon]} |U_s| <= r }``."""
    pts = discretize(G, cfg.mesh(event.r))
    return McEstimate.from_indicators(_inside(pts, event.r, cfg, event.horizon).any(axis=1))


def capacity(G: SetModel, event: EventSpec, cfg: McConfig) -> McEstimate:
    """Relative capacity with the exponential horizon integrated out."""
    pts = discretize(G, cfg.mesh(event.r))
    w = _first_hit_weights(_inside(pts, event.r, cfg, event.horizon), pts)
    return McEstimate.from_samples(w)


@dataclass(frozen=True)
class SandwichReport:
    hit: McEstimate
    cap: McEstimate
    q: float
    lower_gap: float  # cap - e^{-q} hit
    upper_gap: float  # hit - cap
    lower_stderr: float
    upper_stderr: float

    def holds(self, n_se: float = 3.0) -> bool:
        return (
            self.lower_gap >= -n_se * self.lower_stderr
            and self.upper_gap >= -n_se * self.upper_stderr
        )


def _paired(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    d = x - y
    return float(d.mean()), float(d.std(ddof=1) / math.sqrt(d.size))


def capacity_sandwich(G: SetModel, event: EventSpec, cfg: McConfig) -> SandwichReport:
    """``e^{-q} p_G <= cap_G <= p_G`` with ``q = max G``, on shared samples."""
    pts = discretize(G, cfg.mesh(event.r))
    inside = _inside(pts, event.r, cfg, event.horizon)
    hits = inside.any(axis=1).astype(float)
    w = _first_hit_weights(inside, pts)
    q = max(pts[-1], 0.0)
    lo, lo_se = _paired(w, math.exp(-q) * hits)
    up, up_se = _paired(hits, w)
    return SandwichReport(
        McEstimate.from_indicators(hits > 0), McEstimate.from_samples(w), q, lo, up, lo_se, up_se
    )


@dataclass(frozen=True)
class HorizonEquivalence:
    """Bound ``(eps/2e) cap_{R+} <= cap_{[0,eps]}`` with ``cap_{R+}`` truncated."""

    eps: float
    horizon: float
    cap_short: McEstimate
    cap_long: McEstimate
    truncation: float
    lhs: float
    slack: float
    slack_stderr: float


def horizon_equivalence(
    r: float, cfg: McConfig, eps: float = 1.0, horizon: float = 5.0
) -> HorizonEquivalence:
    """Compare ``cap_{[0, eps]}`` with ``cap_{[0, horizon]}`` on one ensemble.

    ``cap_{R+} <= cap_{[0, horizon]} + exp(-horizon)``, so the check uses that
    upper bound on the left-hand side.
    """
    mesh = cfg.mesh(r)
    pts = np.arange(0.0, horizon + 0.5 * mesh, mesh)
    pts = pts[pts <= horizon + 1e-12]
    inside = _inside(pts, r, cfg)
    w_long = _first_hit_weights(inside, pts)
    short = pts <= eps + 1e-12
    w_short = _first_hit_weights(inside[:, short], pts[short])
    trunc = math.exp(-horizon)
    scale = eps / (2 * math.e)
    slack_samples = w_short - scale * w_long
    slack = float(slack_samples.mean()) - scale * trunc
    se = float(slack_samples.std(ddof=1) / math.sqrt(slack_samples.size))
    return HorizonEquivalence(
        eps,
        horizon,
        McEstimate.from_samples(w_short),
        McEstimate.from_samples(w_long),
        trunc,
        scale * (float(w_long.mean()) + trunc),
        slack,
        se,
    )


@dataclass(frozen=True)
class RatioRow:
    r: float
    K: int
    sigma: float
    hit: McEstimate
    cap: McEstimate
    ratio: float
    ratio_stderr: float
    ratio_ci: tuple[float, float]


@dataclass
class RatioTable:
    rows: list[RatioRow]

    @property
    def max_ratio(self) -> float:
        return max(r.ratio for r in self.rows)

    @property
    def min_ratio(self) -> float:
        return min(r.ratio for r in self.rows)

    @property
    def band(self) -> float:
        return self.max_ratio / self.min_ratio if self.min_ratio > 0 else math.inf


def ratio_experiment(G: SetModel, r_sweep: Sequence[float], cfg: McConfig) -> RatioTable:
    """``rho(G, r) = p_G / (K_G(r^6) sigma(r))`` over a sweep of radii."""
    rows = []
    for r in r_sweep:
        if not 0 < r < 1:
            raise ValueError(f"radius {r} outside (0, 1)")
        mesh = cfg.mesh(r)
        K = kolmogorov_entropy(G, r**6)
        if K < 1:
            raise ValueError("K_G(r^6) must be >= 1")
        pts = discretize(G, mesh)
        inside = _inside(pts, r, cfg)
        hit = McEstimate.from_indicators(inside.any(axis=1))
        cap = McEstimate.from_samples(_first_hit_weights(inside, pts))
        sig = sigma_series(r).value
        denom = K * sig
        rows.append(
            RatioRow(
                r,
                K,
                sig,
                hit,
                cap,
                hit.value / denom,
                hit.stderr / denom,
                (hit.ci95[0] / denom, hit.ci95[1] / denom),
            )
        )
    return RatioTable(rows)


@dataclass(frozen=True)
class CrossRatio:
    r: float
    value: float  # (cap_F / cap_G) * (K_G / K_F)


def cross_set_ratio(
    F: SetModel, G: SetModel, r_sweep: Sequence[float], cfg: McConfig
) -> list[CrossRatio]:
    """Capacity ratio of two subsets of [0, 1] normalised by their entropy ratio."""
    tf = ratio_experiment(F, r_sweep, cfg)
    tg = ratio_experiment(G, r_sweep, cfg)
    out = []
    for a, b in zip(tf.rows, tg.rows):
        out.append(CrossRatio(a.r, (a.cap.value / b.cap.value) * (b.K / a.K)))
    return out


def joint_prob(s: float, S: float, r: float, cfg: McConfig, diagnostic: bool = False) -> McEstimate:
    """``P{U*_s <= r, U*_S <= r}`` from one OU update of size ``S - s``.

    ``diagnostic=True`` lifts the ``S <= 1`` restriction (decoupling checks).
    """
    if S < s:
        raise ValueError("need s <= S")
    if s < 0 or (S > 1 and not diagnostic):
        raise ValueError("need 0 <= s <= S <= 1 (pass diagnostic=True to go beyond 1)")
    # the OU process is stationary, so only the gap matters
    pts = (0.0,) if S == s else (0.0, S - s)
    return McEstimate.from_indicators(_inside(pts, r, cfg).all(axis=1))


@dataclass(frozen=True)
class DecayRow:
    gap: float
    x: float  # gap^{1/3} / r^2
    joint: McEstimate
    log_ratio: float  # ln(joint / sigma)


@dataclass
class DecayReport:
    r: float
    sigma: float
    rows: list[DecayRow]
    spearman: float
    max_rise_in_se: float  # largest increase between consecutive gaps, in stderr units

    def monotone(self, n_se: float = 2.0) -> bool:
        return self.max_rise_in_se <= n_se


def decay_experiment(gaps: Sequence[float], r: float, cfg: McConfig) -> DecayReport:
    """Joint small-ball probability against the OU gap on common random numbers."""
    sig = sigma_series(r).value
    rows = []
    joint_samples = []
    for g in sorted(gaps):
        hits = _inside((0.0, float(g)), r, cfg).all(axis=1)
        est = McEstimate.from_indicators(hits)
        joint_samples.append(hits.astype(float))
        rows.append(DecayRow(float(g), float(g) ** (1 / 3) / r**2, est, math.log(est.value / sig)))
    worst = -math.inf
    for a, b in zip(joint_samples, joint_samples[1:]):
        rise, se = _paired(b, a)
        worst = max(worst, rise / se if se > 0 else (math.inf if rise > 0 else -math.inf))
    rho = stats.spearmanr([r_.x for r_ in rows], [r_.log_ratio for r_ in rows]).statistic
    return DecayReport(r, sig, rows, float(rho), worst)


@dataclass(frozen=True)
class CountingStats:
    k: int
    mean_N: float
    second_moment_N: float
    pz_lower_bound: float
    mean_stderr: float
    sigma: float
    hit: McEstimate
    A_hat: float  # second_moment_N / (k sigma)


def counting_stats(G: SetModel, r: float, cfg: McConfig) -> CountingStats:
    """Moments of ``N_r = #{i : U*_{s(i)} <= r}`` over the packing points."""
    if G.is_empty:
        raise ValueError("G is empty: K = 0")
    pts = discretize(G, cfg.mesh(r))
    inside = _inside(pts, r, cfg)
    N = inside.sum(axis=1).astype(float)
    m1 = float(N.mean())
    m2 = float((N * N).mean())
    se = float(N.std(ddof=1) / math.sqrt(N.size))
    pz = m1 * m1 / m2 if m2 > 0 else 0.0
    sig = sigma_series(r).value
    k = len(pts)
    return CountingStats(
        k, m1, m2, pz, se, sig, McEstimate.from_indicators(N > 0), m2 / (k * sig)
    )


@dataclass(frozen=True)
class ShortWindow:
    r: float
    estimate: McEstimate
    sigma: float
    ratio: float
    ratio_to_marginal: float  # against the s = 0 marginal of the same sample
    n_points: int


def short_window_bound(r: float, cfg: McConfig, n_points: int = 33) -> ShortWindow:
    """``P{ inf_{s in [0, r^6]} U*_s <= r }`` over a uniform s-grid of the window."""
    if not 0 < r < 1:
        raise ValueError("r must lie in (0, 1)")
    pts = np.linspace(0.0, r**6, n_points)
    inside = _inside(pts, r, cfg)
    est = McEstimate.from_indicators(inside.any(axis=1))
    marginal = float(inside[:, 0].mean())
    sig = sigma_series(r).value
    return ShortWindow(
        r, est, sig, est.value / sig, est.value / marginal if marginal else math.inf, n_points
    )


def refinement_pair(G: SetModel, event: EventSpec, cfg: McConfig) -> tuple[McEstimate, McEstimate]:
    """Hit probability at mesh ``eps_s`` and at ``eps_s / 2``."""
    coarse = hit_prob(G, event, cfg)
    fine = hit_prob(G, event, replace(cfg, eps_s=cfg.mesh(event.r) / 2))
    return coarse, fine
