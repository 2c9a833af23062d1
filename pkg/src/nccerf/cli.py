"""Command-line front end.

Subcommands: ``simulate``, ``fit``, ``benchmark``, ``plot``, ``check`` and
``config``. Every command that writes files puts them under ``--out`` along
with a ``manifest.json`` recording the command line, the resolved
configuration, input hashes, seed, version, timestamps and the outputs.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import (LABELS, assumption_tests, fit, linear_nc,
                        normalize_mode)
from .config import build_config, config_items, dump_config, load_config
from .data import ModelConfig, format_float, load_csv, save_csv
from .errors import ConfigError, NCCerfError, StorageError, ValidationError
from .identification import read_cerf, write_cerf
from .simulation import (SCENARIOS, Scenario, run_replications, simulate,
                         true_cerf, write_report)
from .svgplot import align, render

MANIFEST = "manifest.json"
COVERAGE_BAR = 0.8


# ---------------------------------------------------------------------------
# manifest helpers


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _out_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise StorageError(f"cannot create {out}: {exc}") from exc
    return out


def write_manifest(out: Path, command, argv, started, inputs=(), outputs=(),
                   config=None, seed=None, extra=None) -> Path:
    record = {
        "command": command,
        "argv": list(argv),
        "version": __version__,
        "seed": seed,
        "config": config_items(config) if config is not None else None,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": {Path(p).name: _sha256(p) for p in outputs},
        "started": started,
        "finished": _now(),
    }
    if extra:
        record.update(extra)
    path = out / MANIFEST
    try:
        path.write_text(json.dumps(record, indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise StorageError(f"cannot write {path}: {exc}") from exc
    return path


def resolve_config(args) -> ModelConfig:
    """Config file (INI or a previous manifest) plus command-line overrides."""
    overrides = {k: getattr(args, k, None) for k in
                 ("K", "n_knots", "iterations", "burn_in", "thinning", "seed",
                  "grid_points")}
    path = getattr(args, "config", None)
    if path and str(path).endswith(".json"):
        try:
            record = json.loads(Path(path).read_text(encoding="utf-8"))
            items = record["config"]
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"{path} is not a manifest with a config "
                              f"echo: {exc}") from exc
        from .config import parse_value
        values = {k: parse_value(k, v) for k, v in items.items()}
        values.update({k: v for k, v in overrides.items() if v is not None})
        return build_config(values)
    return load_config(path, overrides)


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args, argv):
    started = _now()
    out = _out_dir(args.out)
    data = simulate(Scenario(args.scenario, args.n, args.seed))
    if args.mask_u:
        data = data.without_u()
    path = save_csv(data, out / "data.csv")
    write_manifest(out, "simulate", argv, started, outputs=[path],
                   seed=args.seed,
                   extra={"scenario": args.scenario, "n": args.n,
                          "mask_u": bool(args.mask_u)})
    print(f"wrote {path} ({data.n} rows)")


def _column_map(args):
    return {r: getattr(args, r) for r in ("y", "x", "z", "w")}


def _covariates(args):
    return tuple(c.strip() for c in (args.covariates or "").split(",")
                 if c.strip())


def cmd_fit(args, argv):
    started = _now()
    mode = normalize_mode(args.mode)
    config = resolve_config(args)
    u_col = args.u_column if mode == "yxu" else None
    data = load_csv(args.data, _column_map(args), _covariates(args), u_col)
    out = _out_dir(args.out)
    outputs = []
    if mode == "linear_nc":
        res = linear_nc(data, n_boot=args.n_boot, seed=config.seed,
                        tol=config.tol)
        path = out / "effect.csv"
        row = res.as_row()
        try:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(",".join(row) + "\n")
                fh.write(",".join(str(v) if isinstance(v, int)
                                  else format_float(v)
                                  for v in row.values()) + "\n")
        except OSError as exc:
            raise StorageError(f"cannot write {path}: {exc}") from exc
        outputs.append(path)
        print(f"effect {res.estimate:.6g}  95% CI [{res.ci_low:.6g}, "
              f"{res.ci_high:.6g}]")
    else:
        est = fit(data, config, mode, chains=args.chains,
                  threads=args.threads)
        est.meta["label"] = LABELS[mode]
        draws = out / "draws.csv"
        est.chain.write(draws, out / "draws_meta.json")
        write_cerf(est, out / "cerf.csv", out / "cerf.json")
        outputs += [draws, out / "draws_meta.json", out / "cerf.csv",
                    out / "cerf.json"]
        print(f"{LABELS[mode]}: {len(est.chain)} retained draws, "
              f"{est.grid.size} grid points -> {out / 'cerf.csv'}")
    write_manifest(out, "fit", argv, started, inputs=[args.data],
                   outputs=outputs, config=config, seed=config.seed,
                   extra={"mode": mode, "chains": args.chains})


def _thresholds(report) -> dict:
    """Pass/fail of the coverage and bias-comparison checks."""
    summ = report.summary()["modes"]
    out = {}
    if "bnp_nc" in summ:
        cov = summ["bnp_nc"]["coverage_pooled_central"].get("0.95")
        if cov is not None:
            out["coverage_95_central"] = {
                "value": cov, "threshold": COVERAGE_BAR,
                "pass": cov >= COVERAGE_BAR}
        if "yx" in summ:
            a = summ["bnp_nc"]["rmse_central_mean"]
            b = summ["yx"]["rmse_central_mean"]
            out["rmse_bnp_nc_below_yx"] = {"bnp_nc": a, "yx": b,
                                           "pass": a < b}
    return out


def cmd_benchmark(args, argv):
    started = _now()
    config = resolve_config(args)
    modes = [normalize_mode(m) for m in args.modes.split(",") if m.strip()]
    if "linear_nc" in modes:
        raise ConfigError("benchmark supports bnp-nc, yx and yxu")
    out = _out_dir(args.out)
    outputs = []

    def progress(mode, r, secs):
        if not args.quiet:
            print(f"  {mode} replicate {r}: {secs:.1f}s", file=sys.stderr)

    for sid in args.scenario:
        t0 = time.perf_counter()
        report = run_replications(sid, args.n, args.replicates, config,
                                  modes=modes, progress=progress,
                                  threads=args.threads)
        thr = _thresholds(report)
        outputs += write_report(report, out, thr)
        for f in report.failed:
            print(f"scenario {sid} {f[0]} replicate {f[1]} failed: {f[2]}",
                  file=sys.stderr)
        for name, t in thr.items():
            print(f"scenario {sid} {name}: "
                  f"{'PASS' if t['pass'] else 'FAIL'} {t}")
        print(f"scenario {sid} done in {time.perf_counter() - t0:.0f}s")
    write_manifest(out, "benchmark", argv, started, outputs=outputs,
                   config=config, seed=config.seed,
                   extra={"scenarios": args.scenario, "n": args.n,
                          "replicates": args.replicates, "modes": modes})


def _read_truth(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ValidationError(f"{path} has no rows")
    header = rows[0]
    body = np.array(rows[1:], dtype=float)
    ycol = next((c for c in ("truth", "y", "value") if c in header), None)
    if "x" not in header or ycol is None:
        raise ValidationError(f"{path}: need columns x and truth")
    return body[:, header.index("x")], body[:, header.index(ycol)]


def cmd_plot(args, argv):
    started = _now()
    labels = args.labels.split(",") if args.labels else []
    ests = []
    for i, p in enumerate(args.cerf):
        try:
            ests.append(read_cerf(p, labels[i] if i < len(labels) else None))
        except (OSError, ValueError) as exc:
            if isinstance(exc, NCCerfError):
                raise
            raise ValidationError(f"cannot read {p}: {exc}") from exc
    ests = align(ests, args.interpolate)
    truth = None
    if args.truth:
        truth = _read_truth(args.truth)
    elif args.truth_scenario:
        g = ests[0].grid
        truth = (g, true_cerf(args.truth_scenario, g))
    out = _out_dir(args.out)
    svg = out / args.name
    try:
        svg.write_text(render(ests, truth, title=args.title or ""),
                       encoding="utf-8")
    except OSError as exc:
        raise StorageError(f"cannot write {svg}: {exc}") from exc
    inputs = list(args.cerf) + ([args.truth] if args.truth else [])
    write_manifest(out, "plot", argv, started, inputs=inputs, outputs=[svg])
    print(f"wrote {svg}")


def cmd_check(args, argv):
    started = _now()
    data = load_csv(args.data, _column_map(args), _covariates(args),
                    args.u_column)
    report = assumption_tests(data)
    text = report.to_text()
    print(text, end="")
    if args.out:
        out = _out_dir(args.out)
        report.write_csv(out / "assumptions.csv")
        (out / "assumptions.txt").write_text(text, encoding="utf-8")
        write_manifest(out, "check", argv, started, inputs=[args.data],
                       outputs=[out / "assumptions.csv",
                                out / "assumptions.txt"])


def cmd_config(args, argv):
    cfg = ModelConfig() if args.defaults else resolve_config(args)
    print(dump_config(cfg), end="")


# ---------------------------------------------------------------------------
# argument parsing


def _add_columns(p):
    g = p.add_argument_group("column mapping")
    for role in ("y", "x", "z", "w"):
        g.add_argument(f"--{role}", default=role, metavar="NAME",
                       help=f"header of the {role} column (default {role})")
    g.add_argument("--covariates", metavar="A,B",
                   help="comma-separated measured covariate headers")


def _add_model(p):
    g = p.add_argument_group("model")
    g.add_argument("--config", metavar="FILE",
                   help="INI file with a [model] section, or a manifest.json")
    g.add_argument("--seed", type=int)
    g.add_argument("-K", "--K", type=int, dest="K",
                   help="truncation level")
    g.add_argument("--n-knots", type=int)
    g.add_argument("--iterations", type=int)
    g.add_argument("--burn-in", type=int)
    g.add_argument("--thinning", type=int)
    g.add_argument("--grid-points", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="nccerf",
        description="Exposure-response curves under unmeasured confounding "
                    "with negative controls.")
    ap.add_argument("--version", action="version",
                    version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write a simulated dataset")
    p.add_argument("--scenario", type=int, required=True, choices=SCENARIOS)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mask-u", action="store_true",
                   help="omit the confounder column")
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit a model to a CSV")
    p.add_argument("data")
    p.add_argument("--mode", default="bnp-nc",
                   help="bnp-nc, yx, yxu or linear-nc")
    p.add_argument("--u-column", default="u",
                   help="confounder column for mode yxu")
    p.add_argument("--chains", type=int, default=1)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--n-boot", type=int, default=1000,
                   help="bootstrap resamples for linear-nc")
    p.add_argument("--out", required=True)
    _add_columns(p)
    _add_model(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("benchmark", help="replicated simulation study")
    p.add_argument("--scenario", type=int, nargs="+", required=True,
                   choices=SCENARIOS)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--replicates", type=int, default=30)
    p.add_argument("--modes", default="bnp-nc",
                   help="comma-separated, e.g. bnp-nc,yx,yxu")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--quiet", action="store_true")
    p.add_argument("--out", required=True)
    _add_model(p)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("plot", help="SVG of one or more CERF files")
    p.add_argument("cerf", nargs="+")
    p.add_argument("--truth", metavar="CSV", help="CSV with x,truth columns")
    p.add_argument("--truth-scenario", type=int, choices=SCENARIOS)
    p.add_argument("--labels", help="comma-separated legend labels")
    p.add_argument("--interpolate", action="store_true",
                   help="resample to the first file's grid")
    p.add_argument("--title")
    p.add_argument("--name", default="cerf.svg", help="output file name")
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("check", help="linear tests of the NC assumptions")
    p.add_argument("data")
    p.add_argument("--u-column", help="confounder column, if observed")
    p.add_argument("--out", help="directory for the CSV report")
    _add_columns(p)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("config", help="print configuration")
    p.add_argument("--defaults", action="store_true",
                   help="print built-in defaults")
    _add_model(p)
    p.set_defaults(func=cmd_config)
    return ap


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    try:
        args.func(args, argv)
    except NCCerfError as exc:
        print(f"nccerf {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"nccerf {args.command}: error: {exc}", file=sys.stderr)
        return StorageError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
