"""Command-line entry point: ``curetime {fit,simulate,bootstrap,diagnose,crs}``.

Every command writes a ``*.manifest.json`` next to its main output with the
command line, resolved configuration, input digests, seed and timestamps.
Exit codes: 0 ok, 1 input error, 2 flagged result, 3 internal error.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import logging
import sys
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .bootstrap import bootstrap
from .data import DataError, Dataset, Schema, load_dataset, write_dataset
from .excess import FAMILIES
from .lifetable import LifeTable, load_lifetable, synthetic_lifetable
from .nonparam import DEFAULT_PROBES, crs_cure_time, cure_check_report, plot_pair_svg, write_pair_csv
from .optimizer import CtmFit, OptimizerConfig, fit, grid_search_tau, read_key_values
from .simgen import PRESETS, SimDesign, StudyConfig, generate, preset, resolve_censoring, run_study

log = logging.getLogger("curetime")

EXIT_OK, EXIT_INPUT, EXIT_FLAGGED, EXIT_INTERNAL = 0, 1, 2, 3


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


# --- shared helpers ----------------------------------------------------------------------

def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _jsonable(v):
    if isinstance(v, Path):
        return str(v)
    if isinstance(v, (float, np.floating)):
        return float(v) if np.isfinite(v) else None
    if isinstance(v, np.integer):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    return v


def write_json(path, obj) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(_jsonable(obj), indent=2, allow_nan=False) + "\n", encoding="utf-8")


def write_manifest(output, args, argv, inputs, config: dict, started: str) -> Path:
    path = Path(str(output) + ".manifest.json") if not Path(output).is_dir() else Path(output) / "manifest.json"
    manifest = {
        "command": args.command,
        "argv": list(argv),
        "config": config,
        "inputs": {str(p): _sha256(p) for p in inputs if p is not None},
        "seed": getattr(args, "seed", None),
        "version": __version__,
        "started": started,
        "finished": _now(),
    }
    write_json(path, manifest)
    return path


def _load_lifetable(args) -> tuple[LifeTable, list]:
    if args.lifetable is None:
        return synthetic_lifetable(), []
    try:
        return load_lifetable(args.lifetable, probabilities=args.lifetable_probabilities), [args.lifetable]
    except OSError as exc:
        raise InputError(f"cannot read life table: {exc}") from None


def _load_data(path) -> Dataset:
    try:
        return load_dataset(path, Schema())
    except OSError as exc:
        raise InputError(f"cannot read data: {exc}") from None


def _optimizer(args) -> OptimizerConfig:
    values = read_key_values(args.config) if getattr(args, "config", None) else {}
    cfg = OptimizerConfig.from_mapping(values)
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, restart_seed=args.seed)
    return cfg


def _columns(d: Dataset, names) -> list[int] | None:
    """Covariate indices for a name list; the intercept is always kept."""
    if names is None:
        return None
    idx = [0]
    for name in names:
        matches = [j for j, c in enumerate(d.covariate_names) if c == name or c.startswith(name + "=")]
        if not matches:
            raise InputError(f"unknown covariate {name!r}; available: {', '.join(d.covariate_names[1:])}")
        idx.extend(j for j in matches if j not in idx)
    return idx


def _strata(d: Dataset, by):
    """Yield ``(label, mask, subset)`` for each combination of the ``by`` columns."""
    if not by:
        yield "all", np.ones(d.n, dtype=bool), d
        return
    try:
        cols = [d.column(c) for c in by]
    except KeyError as exc:
        raise InputError(f"unknown stratification column {exc.args[0]!r}") from None
    keys = np.array([" ".join(f"{c}={v}" for c, v in zip(by, row)) for row in zip(*cols)], dtype=object)
    for key in sorted(set(keys)):
        mask = keys == key
        yield key, mask, d.subset(mask)


def _add_io(p, data=True):
    if data:
        p.add_argument("--data", required=True, type=Path, help="observation CSV")
    p.add_argument("--lifetable", type=Path, help="life-table CSV (year, age, sex, hazard); "
                   "omitted means the bundled synthetic table")
    p.add_argument("--lifetable-probabilities", action="store_true",
                   help="life-table values are annual death probabilities, not rates")


# --- fit ----------------------------------------------------------------------------------

def _fit_one(d, lt, family, cfg, args, x1, x2):
    if args.grid:
        if x2 is not None and x2 != [0]:
            raise InputError("--grid needs an intercept-only cure time (use --x2 with no columns)")
        g = grid_search_tau(d, lt, family, cfg, kappa=args.kappa, x1_cols=x1, mu_link=args.mu_link)
        return g.fit, {"grid_tau": g.tau}
    f = fit(d, lt, family, cfg, kappa=args.kappa, sigma_n=args.sigma, x1_cols=x1, x2_cols=x2,
            mu_link=args.mu_link)
    return f, {}


def cmd_fit(args, argv) -> int:
    started = _now()
    d = _load_data(args.data)
    lt, lt_inputs = _load_lifetable(args)
    cfg = _optimizer(args)
    x1, x2 = _columns(d, args.x1), _columns(d, args.x2)
    screening = {}
    if args.screen_by:
        keep = np.ones(d.n, dtype=bool)
        for key, mask, sub in _strata(d, args.screen_by):
            rep = cure_check_report(sub, lt)
            screening[key] = rep.verdict
            if rep.verdict == "no statistical cure":
                keep &= ~mask
                log.warning("stratum %s shows no statistical cure; excluded from the fit", key)
        if not keep.any():
            raise InputError("every stratum was screened out")
        d = d.subset(keep)

    families = list(FAMILIES) if args.select_by_loglik else [args.family]
    candidates = {}
    for fam in families:
        candidates[fam] = _fit_one(d, lt, fam, cfg, args, x1, x2)
    chosen = max(candidates, key=lambda k: candidates[k][0].loglik)
    f, extra = candidates[chosen]

    x1m = d.x if f.x1_cols is None else d.x[:, f.x1_cols]
    x2m = d.x if f.x2_cols is None else d.x[:, f.x2_cols]
    check = cure_check_report(d, lt, tau_hat=float(np.max(f.tau)))
    flags = list(check.flags)
    if not f.converged:
        flags.append("fit did not converge")
    out = f.to_dict()
    out.update(extra)
    out["strata"] = f.strata(x1m, x2m)
    out["cure_check"] = check.to_dict()
    out["flags"] = flags
    if args.select_by_loglik:
        out["model_selection"] = {k: v[0].loglik for k, v in candidates.items()}
    if screening:
        out["screening"] = screening
    write_json(args.out, out)
    if args.diagnostics:
        _write_diagnostics(check, Path(args.diagnostics), "all")
    write_manifest(args.out, args, argv, [args.data, *lt_inputs, args.config],
                   {"family": chosen, "optimizer": cfg.to_dict(), "x1": args.x1, "x2": args.x2,
                    "grid": args.grid, "kappa": args.kappa, "sigma": args.sigma,
                    "mu_link": args.mu_link, "screen_by": args.screen_by}, started)
    print(f"{chosen}: loglik={f.loglik:.4f} tau=[{np.min(f.tau):.3f}, {np.max(f.tau):.3f}] "
          f"converged={f.converged}")
    return EXIT_OK if f.converged else EXIT_FLAGGED


def _write_diagnostics(report, outdir: Path, label: str):
    outdir.mkdir(parents=True, exist_ok=True)
    for p in report.probes:
        stem = outdir / f"{_safe(label)}_c{p.c:g}"
        write_pair_csv(stem.with_suffix(".csv"), p.pair)
        plot_pair_svg(stem.with_suffix(".svg"), p.pair, f"{label}, c = {p.c:g}")


def _safe(label: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in label)


# --- simulate -----------------------------------------------------------------------------

def _design_from_file(path) -> SimDesign:
    values = read_key_values(path)
    kinds = {f.name: f.type for f in fields(SimDesign)}
    out = {}
    for key, raw in values.items():
        if key not in kinds:
            raise InputError(f"unknown design key {key!r}")
        t = str(kinds[key])
        if raw.lower() in ("none", ""):
            out[key] = None
        elif "tuple" in t:
            out[key] = tuple(float(v) for v in raw.split(","))
        elif t.startswith("int"):
            out[key] = int(raw)
        elif "float" in t:
            out[key] = float(raw)
        else:
            out[key] = raw
    if "age_range" in out and out["age_range"] is not None:
        out["age_range"] = tuple(int(v) for v in out["age_range"])
    if "name" not in out:
        out["name"] = Path(path).stem
    return SimDesign(**out)


def cmd_simulate(args, argv) -> int:
    started = _now()
    if args.preset:
        try:
            design = preset(args.preset)
        except KeyError as exc:
            raise InputError(str(exc.args[0])) from None
    else:
        design = _design_from_file(args.design)
    overrides = {k: v for k, v in (("reps", args.reps), ("n", args.n)) if v is not None}
    design = replace(design, **overrides)
    lt, lt_inputs = _load_lifetable(args)
    design = resolve_censoring(design, lt)
    outdir = Path(args.out_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    if args.write_datasets:
        for r, (d, _) in enumerate(generate(design, lt, args.seed)):
            write_dataset(d, outdir / "datasets" / f"rep{r:04d}.csv")
    study = StudyConfig(fit_family=args.fit_family, optimizer=_optimizer(args),
                        bootstrap_B=args.bootstrap, threads=args.threads)
    result = run_study(design, lt, args.seed, study)
    result.write_csv(outdir / "summary.csv")
    result.write_estimates(outdir / "estimates.csv")
    (outdir / "summary.txt").write_text(result.table() + "\n", encoding="utf-8")
    print(result.table())
    write_manifest(outdir, args, argv, [*lt_inputs, args.design, args.config],
                   {"design": design.to_dict(), "fit_family": result.fit_family,
                    "bootstrap_B": args.bootstrap, "threads": args.threads,
                    "optimizer": study.optimizer.to_dict()}, started)
    flagged = result.failed > 0.2 * design.reps or int(np.sum(result.ok)) < 2
    return EXIT_FLAGGED if flagged else EXIT_OK


# --- bootstrap ----------------------------------------------------------------------------

def cmd_bootstrap(args, argv) -> int:
    started = _now()
    if args.B < 2:
        raise InputError("--B must be at least 2")
    try:
        f = CtmFit.from_dict(json.loads(Path(args.fit).read_text(encoding="utf-8")))
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read fit JSON: {exc}") from None
    if not f.converged and not args.force:
        raise InputError("fit did not converge; pass --force to bootstrap anyway")
    d = _load_data(args.data)
    lt, lt_inputs = _load_lifetable(args)
    cfg = _optimizer(args)
    res = bootstrap(f, d, lt, args.B, args.seed, optimizer=cfg, threads=args.threads)
    res.write_json(args.out)
    if args.replicates:
        res.write_replicates(args.replicates)
    write_manifest(args.out, args, argv, [args.fit, args.data, *lt_inputs, args.config],
                   {"B": args.B, "threads": args.threads, "optimizer": cfg.to_dict()}, started)
    for name, est, se, p in zip(res.names, res.estimate, res.se, res.p_normal):
        print(f"{name:<24} {est:>10.4f} {se:>10.4f} {p:>8.4f}")
    for flag in res.flags:
        print("flag:", flag)
    return EXIT_OK if res.reliable and not any("zero" in fl for fl in res.flags) else EXIT_FLAGGED


# --- diagnose / crs -----------------------------------------------------------------------

def cmd_diagnose(args, argv) -> int:
    started = _now()
    d = _load_data(args.data)
    lt, lt_inputs = _load_lifetable(args)
    tau = args.tau
    if tau is None and args.fit:
        tau = float(np.max(CtmFit.from_dict(json.loads(Path(args.fit).read_text())).tau))
    outdir = Path(args.out_dir)
    report = {}
    for key, _, sub in _strata(d, args.by):
        rep = cure_check_report(sub, lt, tau_hat=tau, probes=args.probes, min_at_risk=args.min_at_risk)
        for flag in rep.flags:
            log.warning("%s: %s", key, flag)
        _write_diagnostics(rep, outdir, key)
        report[key] = rep.to_dict()
        print(f"{key}: {rep.verdict}")
    write_json(outdir / "report.json", report)
    write_manifest(outdir, args, argv, [args.data, *lt_inputs, args.fit],
                   {"probes": args.probes, "tau": tau, "by": args.by, "min_at_risk": args.min_at_risk}, started)
    return EXIT_OK


def cmd_crs(args, argv) -> int:
    started = _now()
    d = _load_data(args.data)
    lt, lt_inputs = _load_lifetable(args)
    grid = np.arange(0.0, float(np.max(d.z)) + args.step / 2, args.step) if args.step else None
    out = {}
    for key, _, sub in _strata(d, args.by):
        out[key] = {}
        for thr in args.threshold:
            k = crs_cure_time(sub, lt, thr, grid, min_at_risk=args.min_at_risk)
            out[key][f"CRS{round(thr * 100):d}"] = k
            print(f"{key}: CRS{round(thr * 100):d} = {'none' if k is None else f'{k:g}'}")
    write_json(args.out, out)
    write_manifest(args.out, args, argv, [args.data, *lt_inputs],
                   {"threshold": args.threshold, "by": args.by, "step": args.step,
                    "min_at_risk": args.min_at_risk}, started)
    return EXIT_OK


# --- parser -------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="curetime", description="Cure time model estimation and diagnostics.")
    parser.add_argument("--version", action="version", version=f"curetime {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="estimate the cure time model")
    _add_io(p)
    fam = p.add_mutually_exclusive_group()
    fam.add_argument("--family", choices=FAMILIES, default="weibull")
    fam.add_argument("--select-by-loglik", action="store_true",
                     help="fit every family and keep the largest unpenalized log-likelihood")
    p.add_argument("--mu-link", choices=("identity", "log"), default="identity",
                   help="link for the log-normal location")
    p.add_argument("--x1", nargs="*", help="covariates for the excess-time parameters (default: all)")
    p.add_argument("--x2", nargs="*", help="covariates for the cure time (default: all; none = intercept only)")
    p.add_argument("--grid", action="store_true", help="grid search for an intercept-only cure time")
    p.add_argument("--kappa", type=float, help="ridge constant (default 1/n)")
    p.add_argument("--sigma", type=float, help="sigmoid bandwidth (default n^-1/2)")
    p.add_argument("--screen-by", nargs="+", metavar="COL",
                   help="drop strata of these columns that show no statistical cure before fitting")
    p.add_argument("--config", type=Path, help="optimizer key=value file")
    p.add_argument("--diagnostics", type=Path, help="directory for conditional-curve CSV/SVG files")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=Path("fit.json"))

    p = sub.add_parser("simulate", help="run a simulation study")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", help=f"one of {', '.join(PRESETS)}")
    src.add_argument("--design", type=Path, help="design key=value file")
    _add_io(p, data=False)
    p.add_argument("--reps", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--fit-family", choices=FAMILIES)
    p.add_argument("--bootstrap", type=int, default=0, metavar="B",
                   help="bootstrap replicates per dataset for the SE column")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--config", type=Path)
    p.add_argument("--write-datasets", action="store_true")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out-dir", type=Path, default=Path("sim_out"))

    p = sub.add_parser("bootstrap", help="parametric bootstrap of a saved fit")
    p.add_argument("--fit", required=True, type=Path)
    _add_io(p)
    p.add_argument("--B", type=int, default=500)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--config", type=Path)
    p.add_argument("--force", action="store_true", help="bootstrap a non-converged fit")
    p.add_argument("--replicates", type=Path, help="also write the replicate matrix as CSV")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=Path("bootstrap.json"))

    p = sub.add_parser("diagnose", help="conditional survival cure check")
    _add_io(p)
    p.add_argument("--probes", nargs="+", type=float, default=list(DEFAULT_PROBES))
    p.add_argument("--tau", type=float, help="estimated cure time to probe as well")
    p.add_argument("--fit", type=Path, help="take the cure time from a fit JSON")
    p.add_argument("--by", nargs="+", metavar="COL", help="stratify by these columns")
    p.add_argument("--min-at-risk", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", type=Path, default=Path("diagnostics"))

    p = sub.add_parser("crs", help="conditional relative survival cure times")
    _add_io(p)
    p.add_argument("--threshold", nargs="+", type=float, default=[0.95, 0.99])
    p.add_argument("--by", nargs="+", metavar="COL")
    p.add_argument("--step", type=float, default=0.1, help="grid spacing in years")
    p.add_argument("--min-at-risk", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=Path("crs.json"))
    return parser


COMMANDS = {"fit": cmd_fit, "simulate": cmd_simulate, "bootstrap": cmd_bootstrap,
            "diagnose": cmd_diagnose, "crs": cmd_crs}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args, argv)
    except (InputError, DataError, KeyError, ValueError) as exc:
        msg = exc.args[0] if exc.args else str(exc)
        print(f"curetime {args.command}: error: {msg}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"curetime {args.command}: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
