"""Command-line entry point: ``tsre {sample,canonicalize,solve,sweep,analyze}``.

Exit codes: 0 success, 2 configuration error, 3 degeneracy warning,
4 unsupported topology, 5 solver failure.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import os
import sys
import warnings
from importlib import metadata
from pathlib import Path

import numpy as np

from .eigensolver import lowest_two
from .ensemble import TsreSample, sample
from .errors import (ConfigError, ConvergenceError, DegeneracyWarning, ExcitedStateError,
                     KramersWarning, TsreError, UnsupportedTopologyError)
from .gauge import canonicalize
from .graph import graph_from_config
from .hamiltonian import HamiltonianOperator
from .harness import (PRESETS, SweepConfig, aggregate, analyze_records, fmt, read_records,
                      run_sweep, write_csv)
from .observables import effective_rank, entanglement_entropy

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DEGENERATE = 3
EXIT_TOPOLOGY = 4
EXIT_SOLVER = 5

log = logging.getLogger("tsre")


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _load_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"{path}: file not found") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc


def _round12(x):
    """Round floats in a JSON-like tree to 12 significant digits."""
    if isinstance(x, dict):
        return {k: _round12(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_round12(v) for v in x]
    if isinstance(x, np.ndarray):
        return _round12(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return float(f"{x:.12g}") if np.isfinite(x) else None
    return x


def _dump(doc, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_round12(doc), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_table(path, columns, table) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# " + " ".join(columns) + "\n")
        for row in np.atleast_2d(table):
            fh.write(" ".join(fmt(v) for v in row) + "\n")


def _out_dir(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_sample(args) -> int:
    cfg = _load_json(args.config)
    graph_cfg = cfg.get("graph", cfg) if isinstance(cfg, dict) else cfg
    g = graph_from_config(graph_cfg)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    out = _out_dir(args)
    start = int(cfg.get("first_realization", 0)) if isinstance(cfg, dict) else 0
    for r in range(start, start + args.count):
        s = sample(g, seed, r)
        _dump(s.to_json(), out / f"sample_{r:05d}.json")
    print(f"wrote {args.count} samples to {out}")
    return EXIT_OK


def _load_sample(path) -> TsreSample:
    try:
        return TsreSample.from_json(_load_json(path))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, TsreError):
            raise
        raise ConfigError(f"{path}: not a sample file ({exc})") from exc


def cmd_canonicalize(args) -> int:
    s = _load_sample(args.sample)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", DegeneracyWarning)
        form = canonicalize(s)
    out = Path(args.out) if args.out else Path(args.sample).with_suffix(".canonical.json")
    if out.suffix != ".json":
        out.mkdir(parents=True, exist_ok=True)
        out = out / (Path(args.sample).stem + ".canonical.json")
    _dump(form.to_json(), out)
    diag = form.to_json()["diagnostics"]
    print(f"max asymmetry {diag['max_asymmetry']:.3e}, root off-diagonal {diag['first_bond_offdiagonal']:.3e}")
    if form.degenerate or any(issubclass(w.category, DegeneracyWarning) for w in caught):
        print("warning: degenerate singular values, canonical form not unique", file=sys.stderr)
        return EXIT_DEGENERATE
    return EXIT_OK


def cmd_solve(args) -> int:
    s = _load_sample(args.sample)
    h = HamiltonianOperator(s, args.pauli)
    sol = lowest_two(h, tol=args.tol)
    psi = sol.psi0.amplitudes / np.linalg.norm(sol.psi0.amplitudes)
    ent = entanglement_entropy(psi, s.n // 2, s.n)
    doc = {"e0": sol.e0, "e1": sol.e1, "gap": sol.gap, "degenerate_flag": sol.degenerate_flag,
           "entropy_bits": ent.entropy_bits, "chi_eff": effective_rank(ent.schmidt_spectrum, 1e-6),
           "iterations": sol.iterations, "residual_norms": list(sol.residual_norms)}
    if args.out:
        _dump(doc, args.out)
    print(json.dumps(_round12(doc), sort_keys=True))
    return EXIT_OK


def _sweep_plan(args) -> dict:
    """name -> (config dict, analysis spec or None)."""
    if args.preset:
        if args.preset not in PRESETS:
            raise ConfigError(f"unknown preset {args.preset!r}; known: {sorted(PRESETS)}")
        p = PRESETS[args.preset]
        plan = {}
        for name, cfg in p["sweeps"].items():
            spec = p["analysis"] if len(p["sweeps"]) == 1 else p["analysis"][name]
            plan[name] = (dict(cfg), spec)
        return plan
    if not args.config:
        raise ConfigError("sweep needs --config or --preset")
    doc = _load_json(args.config)
    spec = doc.pop("analysis", None) if isinstance(doc, dict) else None
    return {"main": (doc, spec)}


def cmd_sweep(args) -> int:
    out = _out_dir(args)
    manifest_path = out / "manifest.json"
    if args.resume and manifest_path.exists():
        manifest = _load_json(manifest_path)
        plan = {k: (v["config"], v.get("analysis")) for k, v in manifest["sweeps"].items()}
    else:
        plan = _sweep_plan(args)
        if args.seed is not None:
            for cfg, _ in plan.values():
                cfg["master_seed"] = args.seed
        manifest = {"version": _version(), "created": _now(), "status": "running", "sweeps": {}}
    configs = {name: SweepConfig.from_dict(cfg) for name, (cfg, _) in plan.items()}
    warnings_list = [m for c in configs.values() for m in c.kramers_warnings()]
    for name, cfg in configs.items():
        entry = manifest["sweeps"].setdefault(name, {})
        entry.update({
            "config": cfg.to_dict(),
            "analysis": plan[name][1],
            "records_jsonl": f"{name}.jsonl",
            "records_csv": f"{name}.csv",
        })
        entry.setdefault("completed", {})
    manifest["warnings"] = warnings_list
    manifest["master_seeds"] = {n: c.master_seed for n, c in configs.items()}
    manifest["status"] = "running"
    manifest["started"] = _now()
    _dump(manifest, manifest_path)

    failures = 0
    for name, cfg in configs.items():
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", KramersWarning)
            records = run_sweep(cfg, workers=args.workers, jsonl_path=out / f"{name}.jsonl",
                                resume=args.resume)
        write_csv(records, out / f"{name}.csv")
        rows = aggregate(records)
        _dump(rows, out / f"{name}.summary.json")
        entry = manifest["sweeps"][name]
        entry["completed"] = {f"{r['n']}:{fmt(r['lambda'])}": {"count": r["count"], "failures": r["failures"]}
                              for r in rows}
        failures += sum(r["failures"] for r in rows)
        if plan[name][1]:
            try:
                _emit_analysis(records, plan[name][1], out / f"{name}_analysis")
            except TsreError as exc:
                entry["analysis_error"] = str(exc)
    manifest["status"] = "complete"
    manifest["finished"] = _now()
    manifest["failures"] = failures
    _dump(manifest, manifest_path)
    for m in warnings_list:
        print(f"warning: {m}", file=sys.stderr)
    if failures:
        print(f"warning: {failures} realizations failed; see the error column", file=sys.stderr)
    print(f"sweep complete, outputs in {out}")
    return EXIT_OK


def _emit_analysis(records, spec, out: Path) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    results = analyze_records(records, spec)
    summary = {}
    for name, res in results.items():
        _write_table(out / f"{name}.txt", res["columns"], res["table"])
        fits = {k: f.to_json() for k, f in res.get("fits", {}).items()}
        summary[name] = {"fits": fits, "summary": res.get("summary", {})}
        if fits:
            _dump(fits, out / f"{name}.fit.json")
    _dump(summary, out / "analysis.json")
    return summary


def cmd_analyze(args) -> int:
    records = []
    for path in args.records:
        records.extend(read_records(path))
    if args.preset:
        if args.preset not in PRESETS:
            raise ConfigError(f"unknown preset {args.preset!r}")
        spec = PRESETS[args.preset]["analysis"]
        if "analyses" not in spec:
            raise ConfigError("this preset has several analyses; pass --config with one of them")
    elif args.config:
        spec = _load_json(args.config)
    else:
        raise ConfigError("analyze needs --config or --preset")
    summary = _emit_analysis(records, spec, _out_dir(args))
    print(json.dumps(_round12(summary), sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tsre", description="Two-spin random ensemble laboratory")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="draw ensemble members")
    p.add_argument("--config", required=True, help="graph config JSON")
    p.add_argument("--seed", type=int)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("canonicalize", help="gauge-fix a sample")
    p.add_argument("sample")
    p.add_argument("--out")
    p.set_defaults(func=cmd_canonicalize)

    p = sub.add_parser("solve", help="lowest two levels of a sample")
    p.add_argument("sample")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--pauli", action="store_true", help="Pauli-matrix normalization")
    p.add_argument("--out")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="ensemble sweep over sizes and field strengths")
    p.add_argument("--config")
    p.add_argument("--preset")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out")
    p.add_argument("--resume", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("analyze", help="histograms and scaling fits from records")
    p.add_argument("records", nargs="+", help="JSON-lines or CSV record files")
    p.add_argument("--config", help="analysis spec JSON")
    p.add_argument("--preset")
    p.add_argument("--out")
    p.set_defaults(func=cmd_analyze)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "workers", None) is None and "TSRE_WORKERS" in os.environ and hasattr(args, "workers"):
        try:
            args.workers = int(os.environ["TSRE_WORKERS"])
        except ValueError:
            print("error: TSRE_WORKERS must be an integer", file=sys.stderr)
            return EXIT_CONFIG
    try:
        return args.func(args)
    except UnsupportedTopologyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TOPOLOGY
    except (ConvergenceError, ExcitedStateError) as exc:
        print(f"error: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ConfigError, TsreError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
