"""Small-ball probabilities of Brownian motion and the Erdos time skeleton.

``sigma(r) = P(sup_{[0,1]} |W| <= r)`` is evaluated from the classical
eigenfunction series

    sigma(r) = 4/pi * sum_k (-1)^k / (2k+1) * exp(-(2k+1)^2 pi^2 / (8 r^2)),

whose leading term is the small-ball asymptotic.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .lower_functions import LowerFunctionSpec, lnp_of_log

FOUR_OVER_PI = 4.0 / math.pi
PI2_8 = math.pi**2 / 8.0
MAX_TERMS = 100_000
DEFAULT_TOL = 1e-14


@dataclass(frozen=True)
class SmallBallValue:
    r: float
    value: float
    truncation_terms: int
    truncation_bound: float


def _term(k: int, r: float) -> float:
    return FOUR_OVER_PI / (2 * k + 1) * math.exp(-((2 * k + 1) ** 2) * PI2_8 / (r * r))


def sigma_series(r: float, tol: float = DEFAULT_TOL) -> SmallBallValue:
    """Sum the alternating series until the next term drops below ``tol * partial``.

    ``truncation_bound`` is the magnitude of the first omitted term, which
    bounds the error of an alternating series with decreasing terms.
    """
    r = float(r)
    if not r > 0:
        raise ValueError(f"r must be positive, got {r}")
    if not tol > 0:
        raise ValueError("tol must be positive")
    total = 0.0
    k = 0
    while True:
        term = _term(k, r)
        total += term if k % 2 == 0 else -term
        k += 1
        nxt = _term(k, r)
        if nxt < tol * total or nxt == 0.0:
            return SmallBallValue(r, total, k, nxt)
        if k >= MAX_TERMS:
            raise RuntimeError(f"series did not converge for r={r}")


def sigma(r, tol: float = DEFAULT_TOL):
    """Vectorised ``sigma(r)`` (value only)."""
    arr = np.asarray(r, dtype=float)
    out = np.array([sigma_series(x, tol).value for x in arr.ravel()])
    if arr.ndim == 0:
        return float(out[0])
    return out.reshape(arr.shape)


def sigma_asymptotic(r):
    """Leading term ``(4/pi) exp(-pi^2/(8 r^2))``."""
    arr = np.asarray(r, dtype=float)
    if np.any(arr <= 0):
        raise ValueError("r must be positive")
    out = FOUR_OVER_PI * np.exp(-PI2_8 / arr**2)
    return float(out) if out.ndim == 0 else out


def sigma_scaled(c: float, horizon: float, tol: float = DEFAULT_TOL) -> float:
    """``P(sup_{[0,T]} |W| <= c)`` via Brownian scaling."""
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    return sigma_series(c / math.sqrt(horizon), tol).value


# -- Erdos skeleton ------------------------------------------------------------


def erdos_log(n):
    """``ln e_n = n / ln+ n``; vectorised over integer ``n >= 1``."""
    n = np.asarray(n, dtype=float)
    if np.any(n < 1):
        raise ValueError("n must be >= 1")
    return n / lnp_of_log(np.log(n))


@dataclass(frozen=True)
class ErdosSequence:
    n: int
    log_e_n: float
    e_n: float
    H_n: float | None = None


def erdos_sequence(n: int, H: LowerFunctionSpec | None = None) -> ErdosSequence:
    """``e_n = exp(n / ln+ n)`` and ``H_n = H(e_n)``.

    ``e_n`` overflows to ``inf`` for large ``n``; ``log_e_n`` stays exact.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    log_e = float(erdos_log(n))
    e_n = math.exp(log_e) if log_e < 709.0 else math.inf
    h = None if H is None else float(H.value_log(log_e))
    return ErdosSequence(int(n), log_e, e_n, h)


def _log_expm1(d):
    """``ln(e^d - 1)`` for ``d > 0`` without overflow."""
    d = np.asarray(d, dtype=float)
    with np.errstate(over="ignore"):
        small = np.log(np.expm1(np.minimum(d, 50.0)))
    big = d + np.log1p(-np.exp(-d))
    return np.where(d < 50.0, small, big)


@dataclass(frozen=True)
class BlockingQuantities:
    i: int
    j: int
    lam: float
    delta: float
    H_i: float
    H_j: float


def blocking_quantities(i: int, j: int, H: LowerFunctionSpec) -> BlockingQuantities:
    """``lambda_ij = e_j/(e_j - e_i)`` and ``delta_ij = H_j sqrt(lambda) + H_i sqrt(lambda - 1)``."""
    if not (j > i >= 1):
        raise ValueError(f"need j > i >= 1, got i={i}, j={j}")
    xi, xj = erdos_log(i), erdos_log(j)
    d = float(xj - xi)
    # lambda - 1 = e_i / (e_j - e_i) = 1/expm1(d)
    log_lm1 = -float(_log_expm1(d))
    lam_minus_1 = math.exp(log_lm1) if log_lm1 > -745 else 0.0
    lam = 1.0 + lam_minus_1
    h_i = float(H.value_log(xi))
    h_j = float(H.value_log(xj))
    delta = h_j * math.sqrt(lam) + h_i * math.exp(0.5 * log_lm1)
    return BlockingQuantities(int(i), int(j), lam, delta, h_i, h_j)


# -- inequality audits ----------------------------------------------------------

AUDIT_MIN_N = 10
AUDIT_MAX_N = 10**7


@dataclass
class AuditReport:
    """Rows ``(inequality, n, j, lhs, rhs, ratio)`` plus summary constants.

    Only a log-thinned subset of rows is stored; the summary statistics use
    every ``n`` in range.
    """

    inequality: str
    n_range: tuple[int, int]
    rows: list[tuple[str, int, int, float, float, float]] = field(default_factory=list)
    fitted_a: float | None = None
    min_ratio: float | None = None
    violations: int = 0
    checked: int = 0

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["inequality", "n", "j", "lhs", "rhs", "ratio"])
        for row in self.rows:
            w.writerow([row[0], row[1], row[2], repr(row[3]), repr(row[4]), repr(row[5])])
        return buf.getvalue()


def _check_range(n_range: tuple[int, int]) -> tuple[int, int]:
    lo, hi = int(n_range[0]), int(n_range[1])
    if lo > hi:
        raise ValueError("empty n range")
    if hi > AUDIT_MAX_N:
        raise ValueError(f"audit ranges are capped at {AUDIT_MAX_N}")
    # asymptotic statements: small n are not audited
    return max(lo, AUDIT_MIN_N), hi


def _thin(n: np.ndarray, max_rows: int) -> np.ndarray:
    if n.size <= max_rows:
        return np.arange(n.size)
    idx = np.unique(np.geomspace(1, n.size, max_rows).astype(np.int64) - 1)
    return idx


def audit_key_ee(
    n_range: tuple[int, int], H: LowerFunctionSpec, a: float | None = None, max_rows: int = 2000
) -> AuditReport:
    """Two-sided spacing bound ``(1/a) H_n^2 e_{n+1} <= e_{n+1} - e_n <= a H_{n+1}^2 e_n``.

    Everything is divided by ``e_n`` so no ``e_n`` is ever formed.  The
    fitted ``a`` is the smallest constant making both sides hold on the range;
    if ``a`` is given, violations are counted against it instead.
    """
    lo, hi = _check_range(n_range)
    n = np.arange(lo, hi + 1, dtype=float)
    x0, x1 = erdos_log(n), erdos_log(n + 1)
    d = x1 - x0
    spacing = np.expm1(d)  # (e_{n+1} - e_n) / e_n
    h_n = H.value_log(x0)
    h_n1 = H.value_log(x1)
    lower = h_n**2 * np.exp(d)  # H_n^2 e_{n+1} / e_n
    upper = h_n1**2
    need_low = lower / spacing
    need_up = spacing / upper
    fitted = float(max(need_low.max(), need_up.max()))
    a_used = fitted if a is None else float(a)
    bad = int(np.sum(need_low > a_used * (1 + 1e-12)) + np.sum(need_up > a_used * (1 + 1e-12)))
    rep = AuditReport("key-ee", (lo, hi), fitted_a=fitted, violations=bad, checked=2 * n.size)
    if not np.all(np.isfinite(need_low)) or not np.all(np.isfinite(need_up)):
        rep.violations += 1
    for k in _thin(n, max_rows):
        nn = int(n[k])
        rep.rows.append(("key-ee-lower", nn, nn + 1, float(lower[k]), float(spacing[k]), float(need_low[k])))
        rep.rows.append(("key-ee-upper", nn, nn + 1, float(spacing[k]), float(upper[k]), float(need_up[k])))
    rep.min_ratio = float(min(1 / need_low.max(), 1 / need_up.max()))
    return rep


def audit_ees(
    n_range: tuple[int, int], threshold: float = 0.9, n_i: int = 60, max_rows: int = 2000
) -> AuditReport:
    """Ratio ``(e_j - e_i) / (e_i (j-i)/ln i)`` for ``j in (i, 2i]``.

    ``i`` runs over a log-spaced sample of the range; every ``j`` is checked.
    """
    lo, hi = _check_range(n_range)
    i_vals = np.unique(np.geomspace(lo, hi, n_i).astype(np.int64))
    rep = AuditReport("ees", (lo, hi))
    worst = math.inf
    stash = []
    for i in i_vals:
        j = np.arange(i + 1, 2 * i + 1, dtype=float)
        d = erdos_log(j) - erdos_log(float(i))
        log_lhs = _log_expm1(d)
        log_rhs = np.log((j - i) / math.log(i))
        log_ratio = log_lhs - log_rhs
        with np.errstate(over="ignore"):
            ratio = np.exp(log_ratio)
        worst = min(worst, float(ratio.min()))
        rep.violations += int(np.sum(ratio < threshold))
        rep.checked += j.size
        with np.errstate(over="ignore"):
            lhs = np.exp(log_lhs)
        sel = _thin(j, max(2, max_rows // len(i_vals)))
        stash.extend(
            ("ees", int(i), int(j[k]), float(lhs[k]), float((j[k] - i) / math.log(i)), float(ratio[k]))
            for k in sel
        )
    rep.rows = stash
    rep.min_ratio = worst
    return rep


def audit_wlog(n_range: tuple[int, int], H: LowerFunctionSpec, max_rows: int = 2000) -> AuditReport:
    """Normalisation band ``1/sqrt(ln+ n) <= H_n <= 2/sqrt(ln+ n)``."""
    lo, hi = _check_range(n_range)
    n = np.arange(lo, hi + 1, dtype=float)
    h = H.value_log(erdos_log(n))
    scaled = h * np.sqrt(lnp_of_log(np.log(n)))
    bad = int(np.sum((scaled < 1.0) | (scaled > 2.0)))
    rep = AuditReport("wlog", (lo, hi), violations=bad, checked=n.size)
    rep.min_ratio = float(scaled.min())
    rep.fitted_a = float(scaled.max())
    for k in _thin(n, max_rows):
        rep.rows.append(("wlog", int(n[k]), int(n[k]), float(h[k]), float(1 / math.sqrt(max(math.log(n[k]), 1))), float(scaled[k])))
    return rep


def audit_inequalities(
    n_range: tuple[int, int], H: LowerFunctionSpec, which: str = "key-ee", **kwargs
) -> AuditReport:
    if which == "key-ee":
        return audit_key_ee(n_range, H, **kwargs)
    if which == "ees":
        return audit_ees(n_range, **kwargs)
    if which == "wlog":
        return audit_wlog(n_range, H, **kwargs)
    raise ValueError(f"unknown inequality {which!r}")
