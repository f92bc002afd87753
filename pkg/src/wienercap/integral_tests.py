"""Integral tests for lower functions.

The central quantity is

    psi_H(G) = int_1^inf K_G(H(s)^6) / (s H(s)^2) * exp(-pi^2 / (8 H(s)^2)) ds.

Its convergence for the families ``H_nu`` and ``sqrt(c / ln ln t)`` is decided
at triple-logarithmic scales no quadrature can reach, so verdicts for those
families come from the substitution ``u = ln ln s``: with ``K_G(eps) ~
eps^{-d}`` the integrand becomes ``(u + nu ln u)^(m + 3d) u^(-nu) du`` (for
``H_nu``) or ``u^(m + 3d) e^{u (1 - pi^2/(8c))} du`` (for the critical
family), ``m`` being the power of ``1/H^2``.  Quadrature is still available for
partial integrals and for tabulated ``H``, as a diagnostic.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
from scipy import integrate

from .lower_functions import CriticalChung, HNu, LowerFunctionSpec, Tabulated, describe_lower
from .sets import SetModel, kolmogorov_entropy
from .smallball import erdos_log, sigma

PI2_8 = math.pi**2 / 8.0
LOG_MAX_E = math.log(1e300)


class Verdict(str, Enum):
    CONVERGES = "converges"
    DIVERGES = "diverges"
    UNDETERMINED = "undetermined"


@dataclass
class PsiResult:
    partial_integrals: list[tuple[float, float]] = field(default_factory=list)
    verdict: Verdict = Verdict.UNDETERMINED
    method: str = "analytic"
    threshold: float | None = None
    reason: str = ""
    loglog_T: list[float] = field(default_factory=list)

    def to_dict(self, H: LowerFunctionSpec | None = None, G_spec: str | None = None) -> dict:
        return {
            "H_spec": None if H is None else describe_lower(H),
            "G_spec": G_spec,
            "verdict": self.verdict.value,
            "method": self.method,
            "threshold": self.threshold,
            "reason": self.reason,
            "partials": [
                {"T": t, "loglog_T": u, "value": v}
                for (t, v), u in zip(self.partial_integrals, self.loglog_T)
            ],
        }


# -- integrand -------------------------------------------------------------------


def _entropy_term(inv_h2, G: SetModel | None):
    if G is None:
        return 0.0
    return np.log(np.asarray(kolmogorov_entropy(G, inv_h2 ** -3.0), dtype=float))


def _log_weight(H: LowerFunctionSpec, log_s: np.ndarray, power: int, G: SetModel | None):
    """Log of ``K_G(H^6) H^{-2 power} exp(-pi^2/(8H^2))`` at ``ln s``."""
    inv_h2 = np.asarray(H.inv_h2_log(log_s), dtype=float)
    return power * np.log(inv_h2) - PI2_8 * inv_h2 + _entropy_term(inv_h2, G)


def _inv_h2_loglog(H: LowerFunctionSpec, u: float) -> float:
    # u = ln ln s >= 1, so ln+ ln+ s = u and ln+ ln+ ln+ s = ln+ u
    if isinstance(H, HNu):
        return (u + H.nu * max(math.log(u), 1.0)) / PI2_8
    if isinstance(H, CriticalChung):
        return u / H.c
    return float(H.inv_h2_log(math.exp(u)))


def _integrand_x(H, power, G):
    # variable x = ln s, ds/s = dx
    def f(x):
        return float(np.exp(_log_weight(H, np.array([x]), power, G))[0])

    return f


def _integrand_u(H, power, G):
    # variable u = ln ln s (s >= e^e), ds/s = e^u du; the e^u is folded into the exponent
    def f(u):
        inv_h2 = _inv_h2_loglog(H, u)
        if isinstance(H, HNu):
            # pi^2/(8H^2) - u = nu ln+ u, computed without cancellation
            expo = -H.nu * max(math.log(u), 1.0)
        else:
            expo = u - PI2_8 * inv_h2
        return math.exp(power * math.log(inv_h2) + expo + float(_entropy_term(inv_h2, G)))

    return f


def _quad(f, a: float, b: float) -> float:
    if b <= a:
        return 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, _ = integrate.quad(f, a, b, limit=500, epsrel=1e-9, epsabs=0.0)
    return val


def _to_loglog(T_list: Sequence[float] | None, loglog_T: Sequence[float] | None) -> list[float]:
    if loglog_T is not None:
        uu = [float(u) for u in loglog_T]
    elif T_list is not None:
        if any(t < math.e for t in T_list):
            raise ValueError("every T must be >= e")
        uu = [math.log(math.log(float(t))) for t in T_list]
    else:
        raise ValueError("give T_list or loglog_T")
    if any(b <= a for a, b in zip(uu, uu[1:])):
        raise ValueError("T values must be increasing")
    return uu


def _check_tabulated(H: LowerFunctionSpec, top_log_s: float) -> None:
    if isinstance(H, Tabulated):
        if H.t_min > 1.0 or math.log(H.t_max) < top_log_s - 1e-12:
            raise ValueError(
                f"tabulated H covers [{H.t_min:g}, {H.t_max:g}], need [1, e^{top_log_s:g}]"
            )


def partial_integrals(
    H: LowerFunctionSpec,
    T_list: Sequence[float] | None = None,
    *,
    loglog_T: Sequence[float] | None = None,
    power: int = 1,
    G: SetModel | None = None,
) -> list[float]:
    """``int_1^T K_G(H^6) H^{-2 power} exp(-pi^2/(8H^2)) ds/s`` for each ``T``.

    ``G=None`` drops the entropy factor.  Large ``T`` can be passed through
    ``loglog_T = ln ln T``.  The range up to ``s = e^e`` is integrated in
    ``ln s``, the rest in ``ln ln s``.
    """
    uu = _to_loglog(T_list, loglog_T)
    _check_tabulated(H, math.exp(uu[-1]))
    fx = _integrand_x(H, power, G)
    fu = _integrand_u(H, power, G)
    out, acc, prev_x, prev_u = [], 0.0, 0.0, 1.0
    for u in uu:
        x = math.exp(u)
        acc += _quad(fx, prev_x, min(x, math.e))
        prev_x = max(prev_x, min(x, math.e))
        if u > 1.0:
            acc += _quad(fu, prev_u, u)
            prev_u = u
        out.append(acc)
    return out


TAIL_QUAD_LIMIT = 1e5


def tail_integral(
    H: LowerFunctionSpec, loglog_from: float, *, power: int = 1, G: SetModel | None = None
) -> float:
    """``int_T^inf`` of the same integrand, where ``ln ln T = loglog_from >= 1``.

    Quadrature in ``u = ln ln s`` up to ``u = 1e5``.  Beyond that the
    integrand is replaced by its power law ``u^-alpha`` (``alpha = nu - m - 3d``)
    or, for the critical family, its exponential, and integrated in closed
    form.  Returns ``inf`` when the integral diverges.
    """
    if isinstance(H, Tabulated):
        raise ValueError("tabulated H has no tail beyond its domain")
    d = 0.0 if G is None else G.exact_dimension()
    if d is None:
        raise ValueError("tail needs a set with closed-form dimension")
    if _analytic(H, power, d)[0] is Verdict.DIVERGES:
        return math.inf
    f = _integrand_u(H, power, G)
    lo = max(loglog_from, 1.0)
    hi = max(lo, TAIL_QUAD_LIMIT)
    val = 0.0
    # split the range geometrically so quad sees a smooth integrand on each piece
    edges = np.geomspace(lo, hi, 40) if hi > lo else [lo]
    for a, b in zip(edges, edges[1:]):
        val += _quad(f, float(a), float(b))
    g_hi = f(hi)
    if isinstance(H, HNu):
        alpha = H.nu - power - 3 * d
        val += g_hi * hi / (alpha - 1.0)
    else:
        val += g_hi / (PI2_8 / H.c - 1.0)
    return val


# -- analytic classification ------------------------------------------------------


def _analytic(H: LowerFunctionSpec, power: int, d: float) -> tuple[Verdict, float | None, str]:
    if isinstance(H, HNu):
        thr = power + 1 + 3 * d
        v = Verdict.CONVERGES if H.nu > thr else Verdict.DIVERGES
        return v, thr, f"integrand ~ u^({power + 3 * d:g} - nu) du; converges iff nu > {thr:g}"
    if isinstance(H, CriticalChung):
        v = Verdict.CONVERGES if H.c < PI2_8 else Verdict.DIVERGES
        return v, PI2_8, "integrand ~ poly(u) exp(u (1 - pi^2/(8c))) du; converges iff c < pi^2/8"
    return Verdict.UNDETERMINED, None, "no closed form for tabulated H; convergence is a tail property"


def classify(H: LowerFunctionSpec, G: SetModel) -> PsiResult:
    """Convergence of ``psi_H(G)`` from the dimension of ``G``."""
    d = G.exact_dimension()
    if G.is_empty:
        return PsiResult(verdict=Verdict.CONVERGES, threshold=None, reason="K of the empty set is 0")
    if d is None:
        return PsiResult(reason="set has no closed-form Minkowski dimension")
    verdict, thr, why = _analytic(H, 1, d)
    return PsiResult(verdict=verdict, threshold=thr, reason=why)


def _scalar_test(H: LowerFunctionSpec, power: int, T_list, loglog_T) -> PsiResult:
    verdict, thr, why = _analytic(H, power, 0.0)
    res = PsiResult(verdict=verdict, threshold=thr, reason=why)
    if isinstance(H, Tabulated):
        res.method = "numeric"
        top = math.log(math.log(H.t_max)) if H.t_max > math.e else None
        uu = _to_loglog(T_list, loglog_T) if (T_list or loglog_T) else ([top] if top else [])
        if uu:
            res.loglog_T = uu
            vals = partial_integrals(H, loglog_T=uu, power=power)
            res.partial_integrals = [(_T_of(u), v) for u, v in zip(uu, vals)]
    elif T_list is not None or loglog_T is not None:
        uu = _to_loglog(T_list, loglog_T)
        res.loglog_T = uu
        vals = partial_integrals(H, loglog_T=uu, power=power)
        res.partial_integrals = [(_T_of(u), v) for u, v in zip(uu, vals)]
    return res


def qs_verdict(H: LowerFunctionSpec, T_list=None, *, loglog_T=None) -> PsiResult:
    """``int_1^inf exp(-pi^2/(8H^2)) ds / (s H^8)`` (quasi-sure test)."""
    return _scalar_test(H, 4, T_list, loglog_T)


def as_verdict(H: LowerFunctionSpec, T_list=None, *, loglog_T=None) -> PsiResult:
    """``int_1^inf exp(-pi^2/(8H^2)) ds / (s H^2)`` (almost-sure test)."""
    return _scalar_test(H, 1, T_list, loglog_T)


def _T_of(u: float) -> float:
    x = math.exp(u)
    return math.exp(x) if x < 709 else math.inf


def psi_numeric(
    H: LowerFunctionSpec,
    G: SetModel,
    T_list: Sequence[float] | None = None,
    *,
    loglog_T: Sequence[float] | None = None,
) -> PsiResult:
    """Partial integrals of ``psi_H(G)`` by adaptive quadrature.

    The verdict is the analytic one when the family and the set allow it;
    otherwise it is Undetermined, since no finite set of partial integrals
    decides convergence.
    """
    uu = _to_loglog(T_list, loglog_T)
    vals = partial_integrals(H, loglog_T=uu, power=1, G=G)
    base = classify(H, G)
    res = PsiResult(
        partial_integrals=[(_T_of(u), v) for u, v in zip(uu, vals)],
        verdict=base.verdict,
        method="analytic" if base.verdict is not Verdict.UNDETERMINED else "numeric",
        threshold=base.threshold,
        reason=base.reason,
        loglog_T=uu,
    )
    return res


# -- sum against integral -------------------------------------------------------------


@dataclass
class SumIntegralReport:
    checkpoints: list[int]
    partial_sums: list[float]
    partial_integrals: list[float]
    increment_ratios: list[float]
    ratio_band: float
    verdict: Verdict
    contradictions: list[str]

    @property
    def consistent(self) -> bool:
        return not self.contradictions


def erdos_cap() -> int:
    """Largest ``N`` with ``e_N < 1e300``."""
    lo, hi = 1, 10**6
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if erdos_log(mid) < LOG_MAX_E:
            lo = mid
        else:
            hi = mid - 1
    return lo


def sum_integral_equivalence(
    H: LowerFunctionSpec,
    G: SetModel,
    N: int,
    n_checkpoints: int = 12,
    start: int = 10,
    band_limit: float = 4.0,
) -> SumIntegralReport:
    """Compare ``sum_n K_G(H_n^6) sigma(H_n)`` with ``psi_H(G)`` up to ``T = e_N``.

    Both are tracked at geometric checkpoints.  The ratio of their increments
    between checkpoints should stay in a bounded band; it is what makes the
    two converge or diverge together.  A contradiction is recorded when the
    band exceeds ``band_limit`` or, for a convergent verdict, when the
    increments fail to shrink.
    """
    if N > 10**6:
        raise ValueError("N must be <= 1e6")
    if erdos_log(N) >= LOG_MAX_E:
        raise ValueError(f"e_N overflows the 1e300 cap; use N <= {erdos_cap()}")
    if N <= start:
        raise ValueError(f"N must exceed {start}")
    n = np.arange(1, N + 1, dtype=float)
    log_e = erdos_log(n)
    h = H.value_log(log_e)
    K = kolmogorov_entropy(G, h**6).astype(float)
    terms = K * sigma(h)
    csum = np.cumsum(terms)

    cps = sorted(set(np.geomspace(start, N, n_checkpoints).astype(int).tolist()))
    uu = [math.log(float(erdos_log(c))) for c in cps]
    ints = partial_integrals(H, loglog_T=uu, power=1, G=G)
    sums = [float(csum[c - 1]) for c in cps]

    ratios = []
    for a in range(1, len(cps)):
        ds = sums[a] - sums[a - 1]
        di = ints[a] - ints[a - 1]
        ratios.append(ds / di if di > 0 else math.inf)
    band = max(ratios) / min(ratios) if ratios and min(ratios) > 0 else math.inf

    verdict = classify(H, G).verdict
    problems = []
    if not math.isfinite(band) or band > band_limit:
        problems.append(f"increment ratio band {band:.3g} exceeds {band_limit}")
    if any(b < a for a, b in zip(sums, sums[1:])) or any(b < a for a, b in zip(ints, ints[1:])):
        problems.append("partial quantities are not nondecreasing")
    if verdict is Verdict.CONVERGES and len(cps) >= 3:
        du = np.diff(uu)
        inc_s = np.diff(sums) / du
        inc_i = np.diff(ints) / du
        if not (inc_s[-1] < inc_s[0] and inc_i[-1] < inc_i[0]):
            problems.append("increments do not shrink although the integral converges")
    return SumIntegralReport(cps, sums, ints, ratios, band, verdict, problems)


# -- decompositions ---------------------------------------------------------------------


@dataclass
class DecompositionResult:
    finite: bool | None
    verdicts: list[Verdict]
    witness: int | None
    reason: str = ""


def psi_decomposed(H: LowerFunctionSpec, pieces: Sequence[SetModel]) -> DecompositionResult:
    """``Psi_H`` over a given decomposition: finite iff every piece converges."""
    if not pieces:
        raise ValueError("need at least one piece")
    results = [classify(H, p) for p in pieces]
    verdicts = [r.verdict for r in results]
    for i, v in enumerate(verdicts):
        if v is Verdict.UNDETERMINED:
            return DecompositionResult(None, verdicts, i, results[i].reason)
    for i, v in enumerate(verdicts):
        if v is Verdict.DIVERGES:
            return DecompositionResult(False, verdicts, i, f"piece {i} diverges")
    return DecompositionResult(True, verdicts, None, "every piece converges")


def verdict_json(res: PsiResult, H: LowerFunctionSpec, G_spec: str | None) -> str:
    return json.dumps(res.to_dict(H, G_spec), indent=2, sort_keys=True)
