"""Command-line front end.

Every subcommand turns its flags into a JSON config, runs in a fresh
directory under ``--out`` (or ``$WIENERCAP_OUT``) and finishes by writing
``manifest.json``.  Passing a previous manifest back through ``--config``
replays the run; ``--workers`` may differ without changing any output.

Exit codes: 0 success, 2 invalid config, 3 undetermined verdict, 4 Monte
Carlo resource cap.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path
from typing import Callable, Sequence

from .capacity import EventSpec, McConfig, McResourceError, hit_prob, ratio_experiment
from .engine import RngStream, TimeGrid, ou_ensemble, sup_norm
from .integral_tests import Verdict, as_verdict, psi_numeric, qs_verdict
from .lower_functions import LowerFunctionSpec, Tabulated, lower_from_dict, parse_lower
from .runs import Run, default_out_dir, load_config
from .sets import (
    SetSpecError,
    TruncationError,
    describe,
    dimension_estimate,
    entropy_profile,
    normalize_set,
    parse_set,
    spec_from_dict,
    spec_to_dict,
)
from .smallball import audit_inequalities, sigma_asymptotic, sigma_series

EXIT_OK, EXIT_CONFIG, EXIT_UNDETERMINED, EXIT_MC_CAP = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


# -- parsing helpers -------------------------------------------------------------


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from exc


def _geom(text: str) -> list[float]:
    """``start:stop:factor`` -> start, start*factor, ... while >= stop."""
    try:
        start, stop, factor = (float(t) for t in text.split(":"))
    except ValueError as exc:
        raise ConfigError(f"--eps-geom wants start:stop:factor, got {text!r}") from exc
    if not (start > 0 and stop > 0 and 0 < factor < 1 and stop <= start):
        raise ConfigError("--eps-geom needs start >= stop > 0 and 0 < factor < 1")
    out, e = [], start
    while e >= stop * (1 - 1e-12):
        out.append(e)
        e *= factor
    return out


def _int_range(text: str) -> list[int]:
    try:
        lo, hi = (int(float(t)) for t in text.split(":"))
    except ValueError as exc:
        raise ConfigError(f"--n wants lo:hi, got {text!r}") from exc
    return [lo, hi]


def _set_dict(text: str) -> dict:
    return spec_to_dict(parse_set(text))


def _model(cfg: dict):
    return normalize_set(spec_from_dict(cfg["set"]))


def _mc(cfg: dict, workers: int) -> McConfig:
    return McConfig(
        replicates=cfg["reps"],
        k=cfg["k"],
        eps_s=cfg.get("eps_s"),
        master_seed=cfg["seed"],
        block_size=cfg["block_size"],
        workers=workers,
        continuity_correction=cfg["correction"],
        max_points=cfg.get("max_points", 2048),
    )


def _mc_flags(p: argparse.ArgumentParser, reps: int) -> None:
    p.add_argument("--reps", type=int, default=reps, help="Monte Carlo replicates")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--k", type=int, default=12, help="time grid has 2^k cells")
    p.add_argument("--block-size", type=int, default=1000)
    p.add_argument("--no-correction", action="store_true", help="raw grid maximum, no continuity shift")


def _mc_config(a: argparse.Namespace) -> dict:
    return {
        "reps": a.reps,
        "seed": a.seed,
        "k": a.k,
        "block_size": a.block_size,
        "correction": not a.no_correction,
    }


# -- entropy ---------------------------------------------------------------------


def config_entropy(a) -> dict:
    if a.eps is None and a.eps_geom is None:
        raise ConfigError("give --eps or --eps-geom")
    eps = _floats(a.eps) if a.eps is not None else _geom(a.eps_geom)
    if not eps or any(not e > 0 for e in eps):
        raise ConfigError("eps values must be positive")
    return {"command": "entropy", "set": _set_dict(a.set), "eps": eps}


def run_entropy(cfg: dict, run: Run) -> int:
    G = _model(cfg)
    with run.timed("entropy_profile"):
        prof = entropy_profile(G, cfg["eps"])
    run.write_csv("profile.csv", ["eps", "K"], zip(prof.epsilons, prof.counts))
    for e, k in zip(prof.epsilons, prof.counts):
        print(f"eps={e!r} K={k}")
    if len(prof.epsilons) >= 2 and not G.is_empty:
        with run.timed("dimension_estimate"):
            import warnings

            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                est = dimension_estimate(G, prof.epsilons)
        run.write_json(
            "dimension.json",
            {
                "slope": est.upper_minkowski,
                "packing": est.packing,
                "exact": est.exact,
                "regression_r2": est.regression_r2,
            },
        )
        print(f"slope={est.upper_minkowski:.4f} exact={est.packing:.4f}")
    return EXIT_OK


# -- smallball ---------------------------------------------------------------------


def config_smallball(a) -> dict:
    rs = _floats(a.r)
    if any(not r > 0 for r in rs):
        raise ConfigError("radii must be positive")
    cfg = {"command": "smallball", "r": rs, "tol": a.tol, "compare_mc": a.compare_mc}
    if a.compare_mc:
        cfg.update(_mc_config(a))
    return cfg


def run_smallball(cfg: dict, run: Run, workers: int) -> int:
    rows = []
    with run.timed("sigma_series"):
        for r in cfg["r"]:
            v = sigma_series(r, cfg["tol"])
            rows.append((r, v.value, sigma_asymptotic(r), v.truncation_terms, v.truncation_bound))
    run.write_csv("sigma.csv", ["r", "sigma", "asymptotic", "terms", "truncation_bound"], rows)
    for r, v, *_ in rows:
        print(f"sigma({r!r}) = {v:.5f}")
    if cfg["compare_mc"]:
        mc = _mc(cfg, workers)
        G = normalize_set(parse_set("point:0"))
        out = []
        with run.timed("monte_carlo"):
            for r, v, *_ in rows:
                est = hit_prob(G, EventSpec(r), mc)
                diff = est.value - v
                tol = max(3 * est.stderr, 0.02 * v)
                out.append((r, v, est.value, est.stderr, diff, abs(diff) <= tol))
        run.write_csv("mc_compare.csv", ["r", "series", "mc", "stderr", "diff", "agrees"], out)
        note = (
            "grid maximum shifted by the Brownian-bridge continuity correction"
            if mc.continuity_correction
            else "raw grid maximum: biased upward by O(sqrt(dt))"
        )
        run.write_json("mc_note.json", {"bias_note": note, "k": mc.k})
        for r, v, m, se, d, ok in out:
            print(f"r={r!r} series={v:.5f} mc={m:.5f} se={se:.5f} {'ok' if ok else 'MISMATCH'}")
    return EXIT_OK


# -- capacity ------------------------------------------------------------------------


def config_capacity(a) -> dict:
    rs = _floats(a.r)
    if any(not 0 < r < 1 for r in rs):
        raise ConfigError("radii must lie in (0, 1)")
    cfg = {"command": "capacity", "set": _set_dict(a.set), "r": rs, "eps_s": a.eps_s, "max_points": a.max_points}
    cfg.update(_mc_config(a))
    return cfg


def run_capacity(cfg: dict, run: Run, workers: int) -> int:
    G = _model(cfg)
    mc = _mc(cfg, workers)
    with run.timed("ratio_experiment"):
        tab = ratio_experiment(G, cfg["r"], mc)
    header = [
        "r", "K", "sigma",
        "hit", "hit_se", "hit_lo", "hit_hi",
        "cap", "cap_se", "cap_lo", "cap_hi",
        "rho", "rho_se", "rho_lo", "rho_hi",
    ]
    rows = [
        (
            w.r, w.K, w.sigma,
            w.hit.value, w.hit.stderr, *w.hit.ci95,
            w.cap.value, w.cap.stderr, *w.cap.ci95,
            w.ratio, w.ratio_stderr, *w.ratio_ci,
        )
        for w in tab.rows
    ]
    run.write_csv("capacity.csv", header, rows)
    band = {"max_ratio": tab.max_ratio, "min_ratio": tab.min_ratio, "band": tab.band}
    run.write_json("band.json", band)
    for w in tab.rows:
        print(f"r={w.r!r} K={w.K} hit={w.hit.value:.5f} cap={w.cap.value:.5f} rho={w.ratio:.4f}")
    print(f"band max/min = {tab.band:.3f}")
    return EXIT_OK


# -- liltest -----------------------------------------------------------------------


def config_liltest(a) -> dict:
    H = parse_lower(a.H)
    mode = a.mode or ("psi" if a.set else None)
    if mode is None:
        raise ConfigError("give --mode qs|as, or --set for the psi test")
    if mode == "psi" and not a.set:
        raise ConfigError("--mode psi needs --set")
    cfg = {"command": "liltest", "H": H.to_dict(), "mode": mode, "loglog": _floats(a.loglog)}
    if a.set:
        cfg["set"] = _set_dict(a.set)
    return cfg


def _usable_loglog(H: LowerFunctionSpec, G, uu: Sequence[float]) -> list[float]:
    """Drop checkpoints outside a tabulated domain or below the set's resolution."""
    out = []
    for u in sorted(uu):
        if u < 0:
            continue
        log_s = math.exp(u)
        if isinstance(H, Tabulated) and not (math.log(H.t_min) <= 0 and log_s <= math.log(H.t_max)):
            break
        if G is not None and G.truncated:
            eps = float(H.value_log(log_s)) ** 6
            if eps < G.resolution:
                break
        out.append(u)
    return out


def run_liltest(cfg: dict, run: Run) -> int:
    H = lower_from_dict(cfg["H"])
    G = _model(cfg) if "set" in cfg else None
    mode = cfg["mode"]
    uu = _usable_loglog(H, G if mode == "psi" else None, cfg["loglog"])
    with run.timed(f"{mode}_test"):
        if mode == "psi":
            res = psi_numeric(H, G, loglog_T=uu) if uu else psi_numeric(H, G, loglog_T=[0.0])
            if not uu:
                res.partial_integrals, res.loglog_T = [], []
        elif mode == "qs":
            res = qs_verdict(H, loglog_T=uu or None)
        elif mode == "as":
            res = as_verdict(H, loglog_T=uu or None)
        else:
            raise ConfigError(f"unknown mode {mode!r}")
    g_spec = describe(spec_from_dict(cfg["set"])) if "set" in cfg else None
    run.write_json("verdict.json", res.to_dict(H, g_spec))
    run.write_csv(
        "partials.csv",
        ["loglog_T", "value"],
        [(u, v) for u, (_, v) in zip(res.loglog_T, res.partial_integrals)],
    )
    thr = "" if res.threshold is None else f" threshold={res.threshold:.4f}"
    print(f"{mode}: {res.verdict.value}{thr}")
    if res.verdict is Verdict.UNDETERMINED:
        print(f"reason: {res.reason}", file=sys.stderr)
        return EXIT_UNDETERMINED
    return EXIT_OK


# -- audit -----------------------------------------------------------------------------


def config_audit(a) -> dict:
    cfg = {"command": "audit", "ineq": a.ineq, "n": _int_range(a.n), "H": parse_lower(a.H).to_dict()}
    if a.a is not None:
        cfg["a"] = a.a
    return cfg


def run_audit(cfg: dict, run: Run) -> int:
    H = lower_from_dict(cfg["H"])
    kwargs = {"a": cfg["a"]} if "a" in cfg and cfg["ineq"] == "key-ee" else {}
    with run.timed("audit"):
        rep = audit_inequalities(tuple(cfg["n"]), H, cfg["ineq"], **kwargs)
    run.write_csv("audit.csv", ["inequality", "n", "j", "lhs", "rhs", "ratio"], rep.rows)
    summary = {
        "inequality": rep.inequality,
        "n_range": list(rep.n_range),
        "checked": rep.checked,
        "violations": rep.violations,
        "fitted_a": rep.fitted_a,
        "min_ratio": rep.min_ratio,
    }
    run.write_json("summary.json", summary)
    fa = "" if rep.fitted_a is None else f" fitted_a={rep.fitted_a:.4f}"
    print(f"{rep.inequality}: {rep.violations} violations of {rep.checked}{fa}")
    return EXIT_OK


# -- simulate -----------------------------------------------------------------------------


def config_simulate(a) -> dict:
    return {
        "command": "simulate",
        "s": _floats(a.s),
        "k": a.k,
        "seed": a.seed,
        "replicate": a.replicate,
    }


def run_simulate(cfg: dict, run: Run) -> int:
    grid = TimeGrid(cfg["k"])
    stream = RngStream(cfg["seed"], cfg["replicate"], 0)
    with run.timed("ou_ensemble"):
        ens = ou_ensemble(cfg["s"], grid, stream)
    ens.to_csv(run.dir / "paths.csv")
    run.outputs.append("paths.csv")
    sups = [(s, sup_norm(ens.values[i], grid=grid)) for i, s in enumerate(ens.s_values.tolist())]
    run.write_csv("sup_norms.csv", ["s", "sup_norm"], sups)
    run.write_json("ensemble.json", ens.manifest())
    print(f"wrote {len(cfg['s'])} paths with {grid.cells + 1} points each")
    return EXIT_OK


# -- wiring -----------------------------------------------------------------------------

COMMANDS: dict[str, tuple[Callable, Callable]] = {
    "entropy": (config_entropy, lambda c, r, w: run_entropy(c, r)),
    "smallball": (config_smallball, run_smallball),
    "capacity": (config_capacity, run_capacity),
    "liltest": (config_liltest, lambda c, r, w: run_liltest(c, r)),
    "audit": (config_audit, lambda c, r, w: run_audit(c, r)),
    "simulate": (config_simulate, lambda c, r, w: run_simulate(c, r)),
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wienercap", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name: str, help_: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_)
        p.add_argument("--out", type=Path, default=None, help="output root (default $WIENERCAP_OUT or ./runs)")
        p.add_argument("--config", type=Path, default=None, help="config or manifest JSON to replay")
        p.add_argument("--workers", type=int, default=1)
        return p

    p = add("entropy", "Kolmogorov entropy profile and dimension slope")
    p.add_argument("--set", default="interval:0:1")
    p.add_argument("--eps", default=None, help="comma-separated eps values")
    p.add_argument("--eps-geom", default=None, help="start:stop:factor")

    p = add("smallball", "small-ball probability table")
    p.add_argument("--r", default="1.0")
    p.add_argument("--tol", type=float, default=1e-14)
    p.add_argument("--compare-mc", action="store_true")
    _mc_flags(p, 200_000)

    p = add("capacity", "hit probabilities, capacities and rho ratios")
    p.add_argument("--set", default="point:0")
    p.add_argument("--r", default="0.8")
    p.add_argument("--eps-s", type=float, default=None, help="OU-time mesh (default r^6)")
    p.add_argument("--max-points", type=int, default=2048)
    _mc_flags(p, 10_000)

    p = add("liltest", "integral-test verdicts for a lower function")
    p.add_argument("--H", default="hnu:6")
    p.add_argument("--mode", choices=["psi", "qs", "as"], default=None)
    p.add_argument("--set", default=None)
    p.add_argument("--loglog", default="1,2,3,5,8", help="checkpoints in ln ln T")

    p = add("audit", "numerical audit of the blocking inequalities")
    p.add_argument("--ineq", choices=["key-ee", "ees", "wlog"], default="key-ee")
    p.add_argument("--n", default="100:100000")
    p.add_argument("--H", default="hnu:0")
    p.add_argument("--a", type=float, default=None, help="test against this constant instead of fitting")

    p = add("simulate", "one OU chain of Brownian paths")
    p.add_argument("--s", default="0,0.5,1")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--replicate", type=int, default=0)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    make_config, runner = COMMANDS[args.command]
    try:
        if args.config is not None:
            cfg = load_config(args.config)
            if cfg["command"] != args.command:
                raise ConfigError(f"config is for {cfg['command']!r}, not {args.command!r}")
        else:
            cfg = make_config(args)
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        run = Run(args.out or default_out_dir(), cfg, {"workers": args.workers})
    except (ConfigError, SetSpecError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        code = runner(cfg, run, args.workers)
    except McResourceError as exc:
        print(f"Monte Carlo cap: {exc}", file=sys.stderr)
        run.close("mc_cap")
        return EXIT_MC_CAP
    except (ConfigError, SetSpecError, TruncationError, ValueError, KeyError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        run.close("invalid")
        return EXIT_CONFIG
    run.close("ok" if code == EXIT_OK else "undetermined")
    print(f"run directory: {run.dir}")
    return code


if __name__ == "__main__":
    raise SystemExit(main())
