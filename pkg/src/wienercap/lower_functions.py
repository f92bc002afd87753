"""Decreasing functions ``H`` used as lower-function candidates.

Every family is evaluated through ``ln t`` rather than ``t`` so that the
astronomically large times met in integral tests (``t = exp(exp(20))``)
never have to be formed.

``ln+ x`` is taken to be ``ln(max(x, e))``, hence ``ln+ >= 1`` everywhere.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Any

import numpy as np

PI2_8 = math.pi**2 / 8.0


def lnp_of_log(log_x):
    """``ln+ x`` given ``ln x``."""
    return np.maximum(log_x, 1.0)


def lnp(x):
    return np.maximum(np.log(np.maximum(x, math.e)), 1.0)


def iterated_logs(log_t):
    """Return ``(ln+ ln+ t, ln+ ln+ ln+ t)`` from ``ln t``."""
    l1 = lnp_of_log(np.asarray(log_t, dtype=float))
    l2 = lnp(l1)
    l3 = lnp(l2)
    return l2, l3


class LowerFunctionSpec:
    """Base class; subclasses implement :meth:`value_log`."""

    def value_log(self, log_t):
        raise NotImplementedError

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore"):
            out = self.value_log(np.log(np.maximum(t, 1e-300)))
        return float(out) if out.ndim == 0 else out

    def to_dict(self) -> dict[str, Any]:
        raise NotImplementedError


@dataclass(frozen=True)
class HNu(LowerFunctionSpec):
    """``pi / sqrt(8 (ln+ln+ t + nu ln+ln+ln+ t))``."""

    nu: float

    def __post_init__(self) -> None:
        if not (self.nu >= 0 and math.isfinite(self.nu)):
            raise ValueError(f"nu must be a finite number >= 0, got {self.nu}")

    def inv_h2_log(self, log_t):
        """``1/H^2`` from ``ln t``."""
        l2, l3 = iterated_logs(log_t)
        return (l2 + self.nu * l3) / PI2_8

    def value_log(self, log_t):
        return 1.0 / np.sqrt(self.inv_h2_log(log_t))

    def to_dict(self) -> dict[str, Any]:
        return {"kind": "hnu", "nu": self.nu}


@dataclass(frozen=True)
class CriticalChung(LowerFunctionSpec):
    """``sqrt(c / ln+ln+ t)``."""

    c: float

    def __post_init__(self) -> None:
        if not (self.c > 0 and math.isfinite(self.c)):
            raise ValueError(f"c must be positive, got {self.c}")

    def inv_h2_log(self, log_t):
        l2, _ = iterated_logs(log_t)
        return l2 / self.c

    def value_log(self, log_t):
        return 1.0 / np.sqrt(self.inv_h2_log(log_t))

    def to_dict(self) -> dict[str, Any]:
        return {"kind": "chung", "c": self.c}


@dataclass(frozen=True)
class Tabulated(LowerFunctionSpec):
    """Nonincreasing samples ``(t, H)``, interpolated linearly in ``ln t``."""

    samples: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        pts = tuple((float(t), float(h)) for t, h in self.samples)
        if len(pts) < 2:
            raise ValueError("a tabulated H needs at least two samples")
        ts = [t for t, _ in pts]
        hs = [h for _, h in pts]
        if any(t <= 0 for t in ts) or any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("tabulated t values must be positive and strictly increasing")
        if any(h <= 0 for h in hs):
            raise ValueError("tabulated H must be positive")
        if any(b > a for a, b in zip(hs, hs[1:])):
            raise ValueError("tabulated H must be nonincreasing")
        object.__setattr__(self, "samples", pts)

    @property
    def t_min(self) -> float:
        return self.samples[0][0]

    @property
    def t_max(self) -> float:
        return self.samples[-1][0]

    def value_log(self, log_t):
        log_t = np.asarray(log_t, dtype=float)
        xs = np.log([t for t, _ in self.samples])
        hs = np.array([h for _, h in self.samples])
        if np.any(log_t < xs[0] - 1e-12) or np.any(log_t > xs[-1] + 1e-12):
            raise ValueError(
                f"tabulated H covers t in [{self.t_min:g}, {self.t_max:g}] only"
            )
        return np.interp(log_t, xs, hs)

    def inv_h2_log(self, log_t):
        return 1.0 / self.value_log(log_t) ** 2

    def to_dict(self) -> dict[str, Any]:
        return {"kind": "tabulated", "samples": [list(p) for p in self.samples]}


def lower_from_dict(data: dict[str, Any]) -> LowerFunctionSpec:
    kind = data.get("kind")
    if kind == "hnu":
        return HNu(float(data["nu"]))
    if kind == "chung":
        return CriticalChung(float(data["c"]))
    if kind == "tabulated":
        return Tabulated(tuple(tuple(p) for p in data["samples"]))
    raise ValueError(f"unknown lower-function kind {kind!r}")


def parse_lower(text: str) -> LowerFunctionSpec:
    """``hnu:NU``, ``chung:C``, ``tabulated:t1:h1,t2:h2,...`` or JSON."""
    text = text.strip()
    if text.startswith("{"):
        return lower_from_dict(json.loads(text))
    kind, _, rest = text.partition(":")
    kind = kind.lower()
    if kind == "hnu":
        return HNu(float(rest))
    if kind == "chung":
        return CriticalChung(float(rest))
    if kind == "tabulated":
        pairs = []
        for item in rest.split(","):
            t, h = item.split(":")
            pairs.append((float(t), float(h)))
        return Tabulated(tuple(pairs))
    raise ValueError(f"cannot parse lower function {text!r}")


def describe_lower(H: LowerFunctionSpec) -> str:
    if isinstance(H, HNu):
        return f"hnu:{H.nu!r}"
    if isinstance(H, CriticalChung):
        return f"chung:{H.c!r}"
    return "tabulated:" + ",".join(f"{t!r}:{h!r}" for t, h in H.samples)
