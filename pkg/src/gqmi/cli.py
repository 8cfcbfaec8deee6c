"""Batch command-line interface.

Exit codes: 0 success, 2 usage error, 3 input error, 4 verification failure.
``GQMI_THREADS`` caps the scan worker pool.
"""
from __future__ import annotations

import argparse
import csv
import itertools
import json
import math
import os
import re
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import ensembles as ens
from .coherence import (coherence_surplus, density_from_ensemble, entropy_gap_check,
                        product_marginal_density)
from .estimators import (InsufficientScalesError, PartitionSpec, kl_phase_to_uniform,
                         mutual_information, scale_table, scaling_fit)
from .geometry import StatePoint

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_VERIFY = 0, 2, 3, 4
LN2 = math.log(2.0)


class UsageError(Exception):
    pass


# generator -> (required params, defaults); names match the CLI flags (dashes -> underscores)
GENERATORS = {
    "dirac": (("p0",), {"phi0": 0.0}),
    "haar": (("D",), {}),
    "diagonal": (("p0",), {}),
    "naive-gaussian": (("p0", "phi0", "sigma_p", "sigma_phi"), {}),
    "fs-gaussian": (("sigma",), {"p0": 0.5, "phi0": math.pi}),
    "spiral": (("delta",), {}),
    "canonical": (("beta", "g"), {}),
}
PARAM_FLAGS = ("D", "p0", "phi0", "sigma_p", "sigma_phi", "sigma", "delta", "beta", "g")

_PI_RE = re.compile(r"^([+-]?[0-9.eE+-]*)\*?(?:pi|π)(?:/([0-9.eE+]+))?$")


def parse_real(s: str) -> float:
    """Float literal, or a multiple/fraction of pi such as 'pi/4' or '3*pi/4'."""
    s = str(s).strip()
    try:
        return float(s)
    except ValueError:
        pass
    m = _PI_RE.match(s)
    if not m:
        raise UsageError(f"cannot parse number {s!r}")
    k = m.group(1)
    k = 1.0 if k in ("", "+") else -1.0 if k == "-" else float(k)
    return k * math.pi / (float(m.group(2)) if m.group(2) else 1.0)


def parse_range(s: str) -> list[float]:
    """'start:stop:count' with inclusive endpoints, or a single value."""
    parts = str(s).split(":")
    if len(parts) == 1:
        return [parse_real(parts[0])]
    if len(parts) != 3:
        raise UsageError(f"range {s!r} must look like start:stop:count")
    a, b = parse_real(parts[0]), parse_real(parts[1])
    try:
        c = int(parts[2])
    except ValueError:
        raise UsageError(f"range count in {s!r} must be an integer") from None
    if c < 1:
        raise UsageError(f"range {s!r} is empty")
    if c == 1:
        if a != b:
            raise UsageError(f"range {s!r} has one point but start != stop")
        return [a]
    return np.linspace(a, b, c).tolist()


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _threads() -> int:
    v = os.environ.get("GQMI_THREADS")
    if v:
        try:
            return max(1, int(v))
        except ValueError:
            raise UsageError(f"GQMI_THREADS must be an integer, got {v!r}") from None
    return os.cpu_count() or 1


def _spec(args) -> PartitionSpec:
    if args.kmin < 0 or args.kmax < args.kmin:
        raise UsageError("need 0 <= --kmin <= --kmax")
    window = None if args.window == 0 else args.window
    if window is not None and window < 3:
        raise UsageError("--window must be 0 (all scales) or >= 3")
    return PartitionSpec.dyadic(args.kmin, args.kmax, window)


def _mcmc(args) -> ens.McmcConfig | None:
    fields = {"sigma_p": args.mcmc_step_p, "sigma_phi": args.mcmc_step_phi, "burn": args.burn,
              "thin": args.thin, "chains": args.chains}
    given = {k: v for k, v in fields.items() if v is not None}
    if not given:
        return None
    try:
        return ens.McmcConfig(**given)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def make_ensemble(gen: str, params: dict, n: int, seed, mcmc=None) -> ens.Ensemble:
    """Build an ensemble from a generator name and its (already parsed) parameters."""
    if gen not in GENERATORS:
        raise UsageError(f"unknown generator {gen!r}; choose from {', '.join(GENERATORS)}")
    req, defaults = GENERATORS[gen]
    missing = [k for k in req if params.get(k) is None]
    if missing:
        raise UsageError(f"generator {gen!r} needs --{missing[0].replace('_', '-')}")
    if gen != "dirac" and seed is None:
        raise UsageError(f"generator {gen!r} is stochastic: --seed is required")
    if n is None or n < 1:
        raise UsageError("--n must be a positive integer")
    prm = dict(defaults)
    prm.update({k: v for k, v in params.items() if v is not None})
    try:
        if gen == "dirac":
            p0, phi0 = prm["p0"], prm["phi0"]
            if isinstance(p0, list):
                phi = phi0 if isinstance(phi0, list) else [0.0] * len(p0)
                x = StatePoint(p0, phi)
            else:
                x = StatePoint.qubit(float(p0), float(phi0))
            return ens.sample_dirac(x, n)
        if gen == "haar":
            return ens.sample_haar(int(prm["D"]), n, seed)
        if gen == "diagonal":
            p0 = prm["p0"] if isinstance(prm["p0"], list) else [1 - prm["p0"], prm["p0"]]
            return ens.sample_diagonal(p0, n, seed)
        if gen == "naive-gaussian":
            return ens.sample_naive_gaussian(prm["p0"], prm["phi0"], prm["sigma_p"],
                                             prm["sigma_phi"], n, seed)
        if gen == "fs-gaussian":
            x0 = StatePoint.qubit(float(prm["p0"]), float(prm["phi0"]))
            return ens.sample_fs_gaussian(x0, prm["sigma"], n, seed, mcmc)
        if gen == "spiral":
            if not 0 <= prm["delta"] <= math.pi:
                raise UsageError(f"--delta must lie in the valid range [0, pi], got {prm['delta']}")
            return ens.sample_spiral(prm["delta"], n, seed)
        return ens.sample_canonical(prm["beta"], prm["g"], n, seed, mcmc)
    except ValueError as exc:
        raise UsageError(f"invalid parameters for {gen}: {exc}") from None


def _param_value(name, raw):
    if raw is None:
        return None
    if name == "D":
        return int(raw)
    if "," in str(raw):
        return [parse_real(x) for x in str(raw).split(",")]
    return parse_real(raw)


def _gen_params(args) -> dict:
    return {k: _param_value(k, getattr(args, k)) for k in PARAM_FLAGS}


def _write_json(obj, path):
    text = json.dumps(obj, indent=2, sort_keys=False, allow_nan=False) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _load(path) -> ens.Ensemble:
    try:
        return ens.read_jsonl(path)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    except ens.EnsembleFormatError as exc:
        raise InputError(f"{path}: {exc}") from None


class InputError(Exception):
    pass


# --- units ---------------------------------------------------------------------------

_INFO_KEYS = {"entropies", "raw_entropies", "intercept", "I_eps", "I_fit", "I_plateau", "I",
              "plateau_diag", "values", "KL_phi", "C", "delta_C", "KL", "lhs", "rhs"}


def _to_bits(obj):
    if isinstance(obj, dict):
        out = {}
        for k, v in obj.items():
            if k in _INFO_KEYS:
                out[k] = _scale(v)
            else:
                out[k] = _to_bits(v)
        return out
    if isinstance(obj, list):
        return [_to_bits(v) for v in obj]
    return obj


def _scale(v):
    if isinstance(v, list):
        return [_scale(x) for x in v]
    if isinstance(v, float):
        return v / LN2
    return v


# --- estimation helpers shared by estimate and scan -----------------------------------

def estimate_report(e: ens.Ensemble, spec: PartitionSpec) -> dict:
    tb = scale_table(e, spec)
    out = {"meta": e.meta}
    for which in ("joint", "p", "phi"):
        try:
            out[f"scaling_{which}"] = scaling_fit(e, spec, which, table=tb).to_dict()
        except InsufficientScalesError as exc:
            out[f"scaling_{which}"] = {"error": str(exc)}
    try:
        out["mutual_information"] = mutual_information(e, spec, table=tb).to_dict()
    except InsufficientScalesError as exc:
        out["mutual_information"] = {"error": str(exc)}
    try:
        out["kl_phase_to_uniform"] = kl_phase_to_uniform(e, spec, table=tb).to_dict()
    except InsufficientScalesError as exc:
        out["kl_phase_to_uniform"] = {"error": str(exc)}
    return out


SCAN_METRICS = ("I", "D_I", "I_fit", "I_plateau", "plateau_diag", "n_scales", "D_joint",
                "H_G_joint", "R2_joint", "D_p", "D_phi", "KL_intercept", "KL_slope", "C",
                "delta_C", "acceptance_rate", "warnings")


def scan_point(job):
    gen, params, n, seed, mcmc, spec = job
    e = make_ensemble(gen, params, n, seed, mcmc)
    row = dict.fromkeys(SCAN_METRICS, float("nan"))
    row["acceptance_rate"] = e.diagnostics.get("acceptance_rate", float("nan"))
    warn = [e.diagnostics["warning"]] if "warning" in e.diagnostics else []
    tb = scale_table(e, spec)
    try:
        mi = mutual_information(e, spec, table=tb)
        row.update(I=mi.I, D_I=mi.D_I, I_fit=mi.I_fit, I_plateau=mi.I_plateau,
                   plateau_diag=mi.plateau_diag, n_scales=len(mi.fit_scales))
        warn += mi.warnings
        fits = {w: scaling_fit(e, spec, w, table=tb) for w in ("joint", "p", "phi")}
        row.update(D_joint=fits["joint"].dimension, H_G_joint=fits["joint"].intercept,
                   R2_joint=fits["joint"].r2, D_p=fits["p"].dimension, D_phi=fits["phi"].dimension)
        kl = kl_phase_to_uniform(e, spec, table=tb)
        row.update(KL_intercept=kl.intercept, KL_slope=kl.slope)
        sur = coherence_surplus(e, spec, table=tb)
        row.update(C=sur.C, delta_C=sur.delta_C)
    except InsufficientScalesError as exc:
        warn.append(str(exc))
    row["warnings"] = "; ".join(warn)
    return row


# --- commands -------------------------------------------------------------------------

def cmd_sample(args) -> int:
    if args.gen is None:
        raise UsageError("sample needs --gen")
    e = make_ensemble(args.gen, _gen_params(args), args.n, args.seed, _mcmc(args))
    if args.out is None:
        raise UsageError("sample needs --out")
    ens.write_jsonl(e, args.out)
    return EXIT_OK


def cmd_estimate(args) -> int:
    spec = _spec(args)
    e = _load(args.input)
    rep = estimate_report(e, spec)
    rep["config"] = {"input": args.input, "kmin": args.kmin, "kmax": args.kmax,
                     "window": args.window, "units": args.units}
    if args.units == "bits":
        rep = _to_bits(rep)
    _write_json(rep, args.out)
    return EXIT_OK


def cmd_scan(args) -> int:
    if args.gen is None:
        raise UsageError("scan needs --gen")
    if args.out is None:
        raise UsageError("scan needs --out")
    spec = _spec(args)
    mcmc = _mcmc(args)
    req, defaults = GENERATORS.get(args.gen, ((), {}))
    if args.gen not in GENERATORS:
        raise UsageError(f"unknown generator {args.gen!r}; choose from {', '.join(GENERATORS)}")
    axes = {}
    fixed = {}
    for k in PARAM_FLAGS:
        raw = getattr(args, k)
        if raw is None:
            continue
        if ":" in str(raw):
            axes[k] = parse_range(raw)
            if k == "D":
                axes[k] = [int(round(v)) for v in axes[k]]
        else:
            fixed[k] = _param_value(k, raw)
    if not axes:
        raise UsageError("scan needs at least one parameter given as start:stop:count")
    names = list(axes)
    grid = list(itertools.product(*(axes[k] for k in names)))
    jobs = [(args.gen, {**fixed, **dict(zip(names, pt))}, args.n, args.seed, mcmc, spec)
            for pt in grid]
    # validate the first point up front so usage errors surface before any work
    _validate_job(jobs[0])
    workers = min(_threads(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(scan_point, jobs))
    else:
        rows = [scan_point(j) for j in jobs]
    header = names + list(SCAN_METRICS)
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for pt, row in zip(grid, rows):
            wr.writerow([_fmt(v) for v in pt] + [_fmt(row[m]) for m in SCAN_METRICS])
    sidecar = {"command": "scan", "generator": args.gen, "axes": axes, "fixed": fixed,
               "n": args.n, "seed": args.seed, "scales": list(spec.scales), "window": spec.window,
               "mcmc": None if mcmc is None else mcmc.as_dict(), "rows": len(rows),
               "seed_policy": "every grid point uses the same seed"}
    _write_json(sidecar, args.out + ".json")
    return EXIT_OK


def _validate_job(job):
    gen, params, n, seed, _, _ = job
    req, _ = GENERATORS[gen]
    missing = [k for k in req if params.get(k) is None]
    if missing:
        raise UsageError(f"generator {gen!r} needs --{missing[0].replace('_', '-')}")
    if gen != "dirac" and seed is None:
        raise UsageError(f"generator {gen!r} is stochastic: --seed is required")
    if gen == "spiral":
        d = params["delta"]
        if any(not 0 <= v <= math.pi for v in (d if isinstance(d, list) else [d])):
            raise UsageError("--delta must lie in the valid range [0, pi]")


def cmd_chain(args) -> int:
    from .spinchain import ChainConfig, mi_time_series

    if args.out is None:
        raise UsageError("chain needs --out")
    site = args.site - args.site_origin
    try:
        cfg = ChainConfig(L=args.L, J=args.J, alpha=args.alpha, h=args.h, site=site,
                          initial=args.init, t_max=args.tmax, dt=args.dt)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    spec = _spec(args)
    t0 = time.perf_counter()
    try:
        rows = mi_time_series(cfg, spec, eps_fixed=args.eps_fixed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    cols = ("t", "I", "D_I", "plateau_diag", "n_points", "drop_mass", "I_fixed", "n_scales",
            "norm_drift", "energy_drift")
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(cols)
        for r in rows:
            wr.writerow([_fmt(getattr(r, c)) for c in cols])
    side = {"command": "chain", "config": cfg.to_dict(),
            "site_zero_based": site, "site_one_based": site + 1,
            "site_origin_flag": args.site_origin, "seed": args.seed,
            "scales": list(spec.scales), "window": spec.window, "eps_fixed": args.eps_fixed,
            "rows": len(rows), "runtime_s": round(time.perf_counter() - t0, 3)}
    _write_json(side, args.out + ".json")
    return EXIT_OK


def cmd_coherence(args) -> int:
    spec = _spec(args)
    e = _load(args.input)
    tb = scale_table(e, spec)
    rho = density_from_ensemble(e)
    try:
        sur = coherence_surplus(e, spec, table=tb, rho=rho).to_dict()
        gap = entropy_gap_check(e, spec, table=tb, rho=rho).to_dict()
    except InsufficientScalesError as exc:
        raise InputError(f"{args.input}: {exc}") from None
    rep = {**sur, "entropy_gap": gap,
           "rho": {"re": rho.data.real.tolist(), "im": rho.data.imag.tolist()}}
    if len(e.blocks) == 1:
        sig = product_marginal_density(e).data
        rep["sigma_product_marginals"] = {
            "re": sig.real.tolist(), "im": sig.imag.tolist(),
            "estimator": "exact empirical product of the P and Phi marginals"}
    rep["config"] = {"input": args.input, "kmin": args.kmin, "kmax": args.kmax,
                     "window": args.window, "units": args.units}
    if args.units == "bits":
        rep = _to_bits(rep)
    _write_json(rep, args.out)
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import GROUPS, run_suite

    only = None
    if args.only:
        only = [g.strip() for g in args.only.split(",") if g.strip()]
        expanded = []
        for g in only:
            if g == "oracles":
                expanded += ["spiral", "dimension", "chain"]
            else:
                expanded.append(g)
        only = expanded
        bad = [g for g in only if g not in GROUPS]
        if bad:
            raise UsageError(f"unknown --only group(s) {bad}; choose from "
                             f"{', '.join(sorted(GROUPS) + ['oracles'])}")
    t0 = time.perf_counter()
    checks = run_suite(n=args.n, only=only, seed=args.seed, log=print)
    secs = time.perf_counter() - t0
    failed = [c for c in checks if not c.passed]
    print(f"{len(checks) - len(failed)}/{len(checks)} checks passed in {secs:.1f}s")
    if args.out:
        _write_json({"n": args.n, "seed": args.seed, "seconds": secs,
                     "checks": [{"name": c.name, "passed": c.passed, "detail": c.detail}
                                for c in checks]}, args.out)
    return EXIT_VERIFY if failed else EXIT_OK


# --- parser ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_scales(p):
    p.add_argument("--kmin", type=int, default=1, help="coarsest scale 2^-kmin (default 1)")
    p.add_argument("--kmax", type=int, default=10, help="finest scale 2^-kmax (default 10)")
    p.add_argument("--window", type=int, default=3,
                   help="fit over the finest N included scales; 0 = all (default 3)")
    p.add_argument("--units", choices=("nats", "bits"), default="nats")


def _add_gen(p, ranges=False):
    kind = "value or start:stop:count" if ranges else "value"
    p.add_argument("--gen", help=f"generator: {', '.join(GENERATORS)}")
    p.add_argument("--n", type=int, default=1_000_000)
    p.add_argument("--seed", type=int)
    p.add_argument("--D", help=f"Hilbert-space dimension (haar); {kind}")
    p.add_argument("--p0", help=f"centre p_1, or a comma list for a full simplex point; {kind}")
    p.add_argument("--phi0", help=f"centre phase phi_1 (or comma list for dirac); {kind}")
    p.add_argument("--sigma-p", dest="sigma_p", help=kind)
    p.add_argument("--sigma-phi", dest="sigma_phi", help=kind)
    p.add_argument("--sigma", help=f"fs-gaussian width; {kind}")
    p.add_argument("--delta", help=f"spiral noise half-width in [0, pi]; {kind}")
    p.add_argument("--beta", help=f"inverse temperature; {kind}")
    p.add_argument("--g", help=f"transverse coupling; {kind}")
    p.add_argument("--mcmc-step-p", dest="mcmc_step_p", type=float)
    p.add_argument("--mcmc-step-phi", dest="mcmc_step_phi", type=float)
    p.add_argument("--burn", type=int)
    p.add_argument("--thin", type=int)
    p.add_argument("--chains", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="gqmi", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("sample", help="draw an ensemble and write it as JSONL")
    _add_gen(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("estimate", help="scaling fits, mutual information and KL of a JSONL file")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", help="JSON report path (default stdout)")
    _add_scales(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("scan", help="estimate over a parameter grid and write CSV")
    _add_gen(p, ranges=True)
    p.add_argument("--out")
    _add_scales(p)
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("chain", help="spin-chain projected-ensemble time series (CSV)")
    p.add_argument("--L", type=int, default=14)
    p.add_argument("--J", type=float, default=1.0)
    p.add_argument("--alpha", type=float, default=2.0)
    p.add_argument("--h", type=float, default=-0.6)
    p.add_argument("--site", type=int, default=6)
    p.add_argument("--site-origin", dest="site_origin", type=int, choices=(0, 1), default=0,
                   help="index origin of --site (default 0)")
    p.add_argument("--tmax", type=float, default=20.0)
    p.add_argument("--dt", type=float, default=0.1)
    p.add_argument("--init", default="up",
                   help="up, down, plus, minus, y, neel, or a per-site string over 01+-rl")
    p.add_argument("--seed", type=int, help="recorded only; the evolution is deterministic")
    p.add_argument("--eps-fixed", dest="eps_fixed", type=float, default=2.0**-3)
    p.add_argument("--out")
    _add_scales(p)
    p.set_defaults(func=cmd_chain)

    p = sub.add_parser("coherence", help="coherence surplus and entropy-gap report (JSON)")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out")
    _add_scales(p)
    p.set_defaults(func=cmd_coherence)

    p = sub.add_parser("verify", help="run the built-in numerical check suite")
    p.add_argument("--only", help="comma list of groups: spiral, nulls, dimension, canonical, "
                                  "fsgauss, theorem1, axioms, chain, oracles")
    p.add_argument("--n", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=2024)
    p.add_argument("--out", help="optional JSON report")
    p.set_defaults(func=cmd_verify)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"gqmi {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InputError as exc:
        print(f"gqmi {args.command}: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
