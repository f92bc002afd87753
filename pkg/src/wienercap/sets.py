"""Borel subsets of [0, 1] and their metric-entropy statistics.

A :class:`SetSpec` is what a user writes down (an interval, some points, a
self-similar Cantor recipe, or a union of those).  :func:`normalize_set`
turns it into a canonical :class:`SetModel`: disjoint sorted closed intervals
plus isolated points.  All entropy-type queries run on the model.

The Kolmogorov entropy ``K_G(eps)`` is the largest number of points of ``G``
that are pairwise at least ``eps`` apart.  On the line the leftmost greedy
sweep is optimal, so it is computed exactly.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

import numpy as np

# Relative slack used when comparing separations with eps.  Gaps equal to eps
# count as separated; the slack absorbs representation error in a + n*eps.
TIE_RTOL = 1e-9

DEFAULT_SWEEP = tuple(2.0 ** -j for j in range(3, 13))


class SetSpecError(ValueError):
    """Invalid set description (bad coordinates or Cantor parameters)."""


class TruncationError(ValueError):
    """Query below the resolution of a truncated Cantor model."""


def _check_coord(x: float, what: str) -> float:
    x = float(x)
    if not math.isfinite(x) or x < 0.0 or x > 1.0:
        raise SetSpecError(f"{what}={x!r} lies outside [0, 1]")
    return x


@dataclass(frozen=True)
class Interval:
    a: float
    b: float

    def __post_init__(self) -> None:
        a = _check_coord(self.a, "a")
        b = _check_coord(self.b, "b")
        if a > b:
            raise SetSpecError(f"interval endpoints out of order: [{a}, {b}]")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)


@dataclass(frozen=True)
class FinitePoints:
    points: tuple[float, ...]

    def __post_init__(self) -> None:
        pts = tuple(sorted(_check_coord(p, "point") for p in self.points))
        object.__setattr__(self, "points", pts)


@dataclass(frozen=True)
class SetUnion:
    children: tuple["SetSpec", ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "children", tuple(self.children))


@dataclass(frozen=True)
class Cantor:
    """Self-similar Cantor set: ``m`` equally spaced copies scaled by ``ratio``.

    The level-``depth`` cover consists of ``m**depth`` closed intervals of
    length ``ratio**depth``; the first copy starts at 0 and the last ends at 1.
    """

    m: int
    ratio: float
    depth: int

    def __post_init__(self) -> None:
        if int(self.m) != self.m or self.m < 2:
            raise SetSpecError(f"Cantor needs an integer m >= 2, got {self.m!r}")
        if int(self.depth) != self.depth or self.depth < 0:
            raise SetSpecError(f"Cantor depth must be a nonnegative integer, got {self.depth!r}")
        ratio = float(self.ratio)
        if not 0.0 < ratio <= 1.0:
            raise SetSpecError(f"Cantor ratio must lie in (0, 1], got {ratio}")
        if self.m * ratio > 1.0 + 1e-12:
            raise SetSpecError(f"Cantor pieces overlap: m*ratio = {self.m * ratio} > 1")
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "depth", int(self.depth))
        object.__setattr__(self, "ratio", ratio)

    @property
    def dimension(self) -> float:
        return math.log(self.m) / math.log(1.0 / self.ratio)

    @property
    def resolution(self) -> float:
        """Length of the level-``depth`` intervals."""
        return self.ratio ** self.depth

    def cover(self) -> np.ndarray:
        """Level-``depth`` intervals as an ``(m**depth, 2)`` array."""
        gap = (1.0 - self.ratio) / (self.m - 1)
        lefts = np.zeros(1)
        scale = 1.0
        for _ in range(self.depth):
            lefts = (lefts[:, None] + gap * scale * np.arange(self.m)[None, :]).ravel()
            scale *= self.ratio
        rights = np.minimum(lefts + scale, 1.0)
        return np.column_stack([lefts, rights])


SetSpec = Interval | FinitePoints | SetUnion | Cantor


@dataclass(frozen=True)
class SetModel:
    """Canonical form: disjoint sorted closed intervals plus outside points.

    ``generators`` keeps any Cantor recipes the model was built from, and
    ``solid`` records whether some positive-length interval came from a
    plain :class:`Interval` rather than a Cantor cover.  ``solid=None`` means
    the provenance is unknown (the model was built by hand).
    """

    intervals: tuple[tuple[float, float], ...] = ()
    points: tuple[float, ...] = ()
    generators: tuple[Cantor, ...] = ()
    solid: bool | None = False

    @property
    def is_empty(self) -> bool:
        return not self.intervals and not self.points

    @property
    def resolution(self) -> float:
        """Smallest scale at which the model still represents its set."""
        if not self.generators:
            return 0.0
        return max(g.resolution for g in self.generators)

    @property
    def truncated(self) -> bool:
        return bool(self.generators)

    def items(self) -> list[tuple[float, float]]:
        """Intervals and points (as degenerate intervals) sorted by left end."""
        out = list(self.intervals) + [(p, p) for p in self.points]
        out.sort()
        return out

    def contains(self, x: float) -> bool:
        if any(a <= x <= b for a, b in self.intervals):
            return True
        return x in self.points

    def exact_dimension(self) -> float | None:
        """Closed-form dimension when the provenance allows one."""
        if self.is_empty:
            return None
        if self.solid is None:
            return None
        if self.solid:
            return 1.0
        if self.generators:
            return max(g.dimension for g in self.generators)
        return 0.0


def _merge(intervals: Iterable[tuple[float, float]]) -> list[tuple[float, float]]:
    merged: list[list[float]] = []
    for a, b in sorted(intervals):
        if merged and a <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], b)
        else:
            merged.append([a, b])
    return [(a, b) for a, b in merged]


def _collect(spec: SetSpec, intervals: list, points: list, gens: list, solid: list) -> None:
    if isinstance(spec, Interval):
        if spec.a == spec.b:
            points.append(spec.a)
        else:
            intervals.append((spec.a, spec.b))
            solid.append(True)
    elif isinstance(spec, FinitePoints):
        points.extend(spec.points)
    elif isinstance(spec, Cantor):
        gens.append(spec)
        intervals.extend(map(tuple, spec.cover().tolist()))
    elif isinstance(spec, SetUnion):
        for child in spec.children:
            _collect(child, intervals, points, gens, solid)
    elif isinstance(spec, SetModel):
        intervals.extend(spec.intervals)
        points.extend(spec.points)
        gens.extend(spec.generators)
        solid.append(spec.solid)
    else:
        raise TypeError(f"not a set description: {spec!r}")


def normalize_set(spec: SetSpec | SetModel) -> SetModel:
    """Canonical model of ``spec``; idempotent on models."""
    intervals: list[tuple[float, float]] = []
    points: list[float] = []
    gens: list[Cantor] = []
    solid: list[bool | None] = []
    _collect(spec, intervals, points, gens, solid)

    merged = _merge(intervals)
    lefts = [a for a, _ in merged]
    outside = []
    for p in sorted(set(points)):
        i = np.searchsorted(lefts, p, side="right") - 1
        if i >= 0 and merged[i][0] <= p <= merged[i][1]:
            continue
        outside.append(p)

    if any(s is None for s in solid):
        solid_flag: bool | None = None
    else:
        solid_flag = any(solid)
    # keep generator order stable and drop duplicates
    uniq = tuple(dict.fromkeys(gens))
    return SetModel(tuple(merged), tuple(outside), uniq, solid_flag)


# -- entropy -----------------------------------------------------------------


def _check_eps(model: SetModel, eps: np.ndarray) -> None:
    if np.any(~np.isfinite(eps)) or np.any(eps <= 0):
        raise ValueError("eps must be positive and finite")
    res = model.resolution
    if res > 0 and np.any(eps < res * (1 - TIE_RTOL)):
        raise TruncationError(
            f"eps={float(eps.min()):.3g} is below the Cantor truncation scale {res:.3g}; "
            "increase the depth"
        )


def _greedy_counts(model: SetModel, eps: np.ndarray) -> np.ndarray:
    """Leftmost-greedy packing counts for every eps at once."""
    count = np.zeros(eps.shape, dtype=np.int64)
    nxt = np.full(eps.shape, -np.inf)
    slack = TIE_RTOL * eps
    for a, b in model.items():
        ok = nxt <= b + slack
        start = np.minimum(np.maximum(a, nxt), b)
        n = np.floor((b - start) / eps + TIE_RTOL).astype(np.int64) + 1
        n = np.where(ok, n, 0)
        count += n
        nxt = np.where(ok, start + n * eps, nxt)
    return count


def kolmogorov_entropy(model: SetModel, eps: float | Sequence[float] | np.ndarray):
    """Maximal size of an eps-separated subset of ``model``.

    Accepts a scalar or an array of eps values (vectorised over eps).
    """
    arr = np.asarray(eps, dtype=float)
    _check_eps(model, np.atleast_1d(arr))
    counts = _greedy_counts(model, np.atleast_1d(arr))
    if arr.ndim == 0:
        return int(counts[0])
    return counts.reshape(arr.shape)


def kolmogorov_points(model: SetModel, eps: float) -> list[float]:
    """Leftmost greedy witness: ``kolmogorov_entropy(model, eps)`` points."""
    eps = float(eps)
    _check_eps(model, np.array([eps]))
    out: list[float] = []
    nxt = -math.inf
    slack = TIE_RTOL * eps
    for a, b in model.items():
        if nxt > b + slack:
            continue
        start = min(max(a, nxt), b)
        n = int(math.floor((b - start) / eps + TIE_RTOL)) + 1
        out.extend(min(start + i * eps, b) for i in range(n))
        nxt = start + n * eps
    return out


def minkowski_content(model: SetModel, n: int | Sequence[int] | np.ndarray):
    """Number of cells ``[j/n, (j+1)/n)``, ``0 <= j <= n``, that meet the set."""
    arr = np.asarray(n)
    flat = np.atleast_1d(arr).astype(np.int64)
    if np.any(flat < 1):
        raise ValueError("n must be >= 1")
    nf = flat.astype(float)
    total = np.zeros(flat.shape, dtype=np.int64)
    prev_hi = np.full(flat.shape, -1, dtype=np.int64)
    for a, b in model.items():
        lo = np.floor(a * nf + 1e-9).astype(np.int64)
        hi = np.minimum(np.floor(b * nf + 1e-9).astype(np.int64), flat)
        lo = np.maximum(lo, prev_hi + 1)
        total += np.maximum(hi - lo + 1, 0)
        prev_hi = np.maximum(prev_hi, hi)
    if arr.ndim == 0:
        return int(total[0])
    return total.reshape(arr.shape)


@dataclass(frozen=True)
class EntropyProfile:
    epsilons: tuple[float, ...]
    counts: tuple[int, ...]


def entropy_profile(model: SetModel, epsilons: Sequence[float]) -> EntropyProfile:
    eps = np.array(sorted(set(float(e) for e in epsilons), reverse=True))
    counts = kolmogorov_entropy(model, eps)
    return EntropyProfile(tuple(eps.tolist()), tuple(int(c) for c in counts))


@dataclass(frozen=True)
class DimensionEstimate:
    upper_minkowski: float
    packing: float
    exact: bool
    regression_r2: float


def dimension_estimate(
    model: SetModel, eps_sweep: Sequence[float] | None = None
) -> DimensionEstimate:
    """Box-counting slope of ``ln K(eps)`` against ``ln(1/eps)``.

    ``packing`` is the closed form when the model's provenance gives one
    (Cantor recipe, interval union, finite set); otherwise it falls back to
    the regression slope and ``exact`` is False.
    """
    if model.is_empty:
        raise ValueError("dimension of the empty set is undefined")
    eps = np.array(sorted(set(float(e) for e in (DEFAULT_SWEEP if eps_sweep is None else eps_sweep))))
    if eps.size < 2:
        raise ValueError("need at least two distinct eps values")
    if eps.size < 4 or eps[-1] / eps[0] < 100:
        warnings.warn("eps sweep is short; slope estimate will be noisy", stacklevel=2)
    counts = kolmogorov_entropy(model, eps)
    x = np.log(1.0 / eps)
    y = np.log(counts.astype(float))
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else max(0.0, 1.0 - float(np.sum(resid**2)) / ss_tot)
    slope = float(slope)
    if abs(slope) < 1e-12:
        slope = 0.0

    exact = model.exact_dimension()
    if exact is None:
        return DimensionEstimate(slope, slope, False, r2)
    return DimensionEstimate(slope, exact, True, r2)


# -- serialization -------------------------------------------------------------


def spec_to_dict(spec: SetSpec) -> dict[str, Any]:
    if isinstance(spec, Interval):
        return {"kind": "interval", "a": spec.a, "b": spec.b}
    if isinstance(spec, FinitePoints):
        return {"kind": "points", "points": list(spec.points)}
    if isinstance(spec, Cantor):
        return {"kind": "cantor", "m": spec.m, "ratio": spec.ratio, "depth": spec.depth}
    if isinstance(spec, SetUnion):
        return {"kind": "union", "children": [spec_to_dict(c) for c in spec.children]}
    raise TypeError(f"not a set description: {spec!r}")


def spec_from_dict(data: dict[str, Any]) -> SetSpec:
    try:
        kind = data["kind"]
        if kind == "interval":
            return Interval(data["a"], data["b"])
        if kind in ("points", "point"):
            pts = data["points"] if "points" in data else [data["x"]]
            return FinitePoints(tuple(pts))
        if kind == "cantor":
            return Cantor(data["m"], data["ratio"], data["depth"])
        if kind == "union":
            return SetUnion(tuple(spec_from_dict(c) for c in data["children"]))
    except (KeyError, TypeError) as exc:
        raise SetSpecError(f"malformed set spec {data!r}: {exc}") from exc
    raise SetSpecError(f"unknown set kind {data.get('kind')!r}")


def dumps_spec(spec: SetSpec) -> str:
    return json.dumps(spec_to_dict(spec), sort_keys=True)


def loads_spec(text: str) -> SetSpec:
    return spec_from_dict(json.loads(text))


def _number(tok: str) -> float:
    if "/" in tok:
        num, den = tok.split("/", 1)
        return float(num) / float(den)
    return float(tok)


def _split_top(text: str) -> list[str]:
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch == "[":
            depth += 1
        elif ch == "]":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    if cur:
        parts.append("".join(cur))
    return [p.strip() for p in parts if p.strip()]


def parse_set(text: str) -> SetSpec:
    """Parse the CLI shorthand or a JSON object.

    ``interval:a:b``, ``point:x``, ``points:x1,x2``, ``cantor:m:ratio:depth``,
    ``union:[spec,spec,...]``.  Numbers may be written as fractions (``1/3``).
    """
    text = text.strip()
    if text.startswith("{"):
        return loads_spec(text)
    kind, _, rest = text.partition(":")
    kind = kind.lower()
    try:
        if kind == "interval":
            a, b = rest.split(":")
            return Interval(_number(a), _number(b))
        if kind == "point":
            return FinitePoints((_number(rest),))
        if kind == "points":
            return FinitePoints(tuple(_number(t) for t in rest.split(",") if t))
        if kind == "cantor":
            m, ratio, depth = rest.split(":")
            return Cantor(int(m), _number(ratio), int(depth))
        if kind == "union":
            body = rest.strip()
            if not (body.startswith("[") and body.endswith("]")):
                raise SetSpecError("union needs a bracketed list: union:[...]")
            return SetUnion(tuple(parse_set(p) for p in _split_top(body[1:-1])))
        if kind == "empty":
            return FinitePoints(())
    except ValueError as exc:
        if isinstance(exc, SetSpecError):
            raise
        raise SetSpecError(f"cannot parse set spec {text!r}: {exc}") from exc
    raise SetSpecError(f"unknown set kind in {text!r}")


def describe(spec: SetSpec) -> str:
    """Inverse of :func:`parse_set` (shorthand form)."""
    if isinstance(spec, Interval):
        return f"interval:{spec.a!r}:{spec.b!r}"
    if isinstance(spec, FinitePoints):
        if len(spec.points) == 1:
            return f"point:{spec.points[0]!r}"
        return "points:" + ",".join(repr(p) for p in spec.points)
    if isinstance(spec, Cantor):
        return f"cantor:{spec.m}:{spec.ratio!r}:{spec.depth}"
    return "union:[" + ",".join(describe(c) for c in spec.children) + "]"
