"""Ensemble sweeps over (N, lambda) and the analyses run on their records.

Every record is a pure function of ``(config, N, lambda, realization)``:
samples for size N use a seed derived from ``(master_seed, N)``, and the
same unit-variance draws are reused for every lambda (only the field
strength changes). Records are therefore identical whatever the worker
count or completion order, and a resumed sweep reproduces an
uninterrupted one.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from . import dmrg as dmrg_mod
from .eigensolver import lowest_two
from .ensemble import sample
from .errors import ConfigError, KramersWarning, TsreError
from .graph import build_chain, build_ring
from .hamiltonian import HamiltonianOperator
from .observables import (chain_correlation_profile, effective_rank, entanglement_entropy,
                          ring_correlation_profile)
from .stats import (fit_correlation_length, fit_entropy_saturation_divergence, fit_entropy_scaling,
                    fit_gap_scaling, fit_xi_lambda, ks_distance_gue, mean_se,
                    normalized_gap_histogram, normalized_gaps)

__all__ = [
    "SweepConfig",
    "EnsembleRecord",
    "CSV_COLUMNS",
    "PRESETS",
    "size_seed",
    "compute_record",
    "run_sweep",
    "aggregate",
    "read_records",
    "write_csv",
    "analyze_records",
    "ANALYSES",
    "fmt",
]

log = logging.getLogger(__name__)

CSV_COLUMNS = ["n", "lambda", "realization", "method", "e0", "e1", "gap", "entropy_bits",
               "chi_eff", "degenerate_flag", "error"]
CHI_EPSILON = 1e-6


def fmt(x) -> str:
    """Decimal text with 12 significant digits."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.12g}"


def size_seed(master_seed: int, n: int) -> int:
    """Sample seed for size ``n``; keeps different sizes statistically independent."""
    return int(np.random.SeedSequence([int(master_seed), int(n)]).generate_state(1, np.uint64)[0])


@dataclass
class SweepConfig:
    graph: str = "chain"
    n_list: list = field(default_factory=lambda: [8])
    lambda_list: list = field(default_factory=lambda: [1.0])
    realizations: object = 10  # int, or {N: count}
    master_seed: int = 0
    mu: float = 1.0
    solver: str = "exact"
    tol: float = 1e-10
    chi_max: int = 64
    dmrg_sweeps: int = 30
    dmrg_energy_tol: float = 1e-10
    entropy: bool = True
    correlations: bool = False
    pauli_normalization: bool = False

    def __post_init__(self):
        if self.graph not in ("chain", "ring"):
            raise ConfigError(f"graph must be 'chain' or 'ring', got {self.graph!r}")
        if self.solver not in ("exact", "dmrg"):
            raise ConfigError(f"solver must be 'exact' or 'dmrg', got {self.solver!r}")
        try:
            self.n_list = [int(n) for n in self.n_list]
            self.lambda_list = [float(x) for x in self.lambda_list]
            self.master_seed = int(self.master_seed)
            if isinstance(self.realizations, dict):
                self.realizations = {int(k): int(v) for k, v in self.realizations.items()}
            else:
                self.realizations = int(self.realizations)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"malformed sweep config: {exc}") from exc
        if not self.n_list or not self.lambda_list:
            raise ConfigError("n_list and lambda_list must be non-empty")
        if any(x < 0 or not math.isfinite(x) for x in self.lambda_list):
            raise ConfigError("lambda values must be finite and non-negative")
        lo = 3 if self.graph == "ring" else 2
        if any(n < lo for n in self.n_list):
            raise ConfigError(f"{self.graph} sizes must be at least {lo}")
        if self.solver == "dmrg" and self.graph != "chain":
            raise ConfigError("the dmrg solver supports open chains only")
        counts = [self.count(n) for n in self.n_list]
        if any(c < 1 for c in counts):
            raise ConfigError("realizations must be at least 1")

    def count(self, n: int) -> int:
        if isinstance(self.realizations, dict):
            if n not in self.realizations:
                raise ConfigError(f"no realization count for N={n}")
            return self.realizations[n]
        return self.realizations

    def kramers_warnings(self) -> list:
        odd = [n for n in self.n_list if n % 2]
        if odd and 0.0 in self.lambda_list:
            return [f"N={n} with lambda=0 is time-reversal invariant with odd N: "
                    "every level is doubly degenerate and the gap vanishes" for n in odd]
        return []

    def keys(self) -> list:
        return [(n, lam, r) for n in self.n_list for lam in self.lambda_list for r in range(self.count(n))]

    def to_dict(self) -> dict:
        d = asdict(self)
        if isinstance(d["realizations"], dict):
            d["realizations"] = {str(k): v for k, v in d["realizations"].items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SweepConfig":
        if not isinstance(d, dict):
            raise ConfigError("sweep config must be a JSON object")
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown sweep config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class EnsembleRecord:
    n: int
    lam: float
    realization: int
    method: str
    e0: float = float("nan")
    e1: float = float("nan")
    gap: float = float("nan")
    entropy_bits: Optional[float] = None
    chi_eff: Optional[int] = None
    degenerate_flag: bool = False
    error: str = ""
    c_of_r: Optional[list] = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def key(self) -> tuple:
        return (self.n, self.lam, self.realization)

    @property
    def ok(self) -> bool:
        return not self.error

    def csv_row(self) -> list:
        return [fmt(self.n), fmt(self.lam), fmt(self.realization), self.method, fmt(self.e0),
                fmt(self.e1), fmt(self.gap), fmt(self.entropy_bits), fmt(self.chi_eff),
                fmt(self.degenerate_flag), self.error]

    def to_json(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        for k in ("e0", "e1", "gap"):
            if not math.isfinite(d[k]):
                d[k] = None
        return d

    @classmethod
    def from_json(cls, d: dict) -> "EnsembleRecord":
        d = dict(d)
        d["lam"] = d.pop("lambda")
        for k in ("e0", "e1", "gap"):
            if d.get(k) is None:
                d[k] = float("nan")
        return cls(**d)


def _graph(cfg: SweepConfig, n: int, lam: float):
    build = build_chain if cfg.graph == "chain" else build_ring
    return build(n, cfg.mu, lam)


def compute_record(cfg: SweepConfig, n: int, lam: float, realization: int) -> EnsembleRecord:
    """Solve one realization; solver failures are stored in ``error``."""
    rec = EnsembleRecord(n, float(lam), int(realization), cfg.solver)
    s = sample(_graph(cfg, n, lam), size_seed(cfg.master_seed, n), realization)
    try:
        if cfg.solver == "exact":
            _solve_exact(cfg, s, rec)
        else:
            _solve_dmrg(cfg, s, rec)
    except TsreError as exc:
        rec.error = f"{type(exc).__name__}: {exc}"
    if rec.entropy_bits is not None and not 0.0 <= rec.entropy_bits <= n / 2 + 1e-9:
        rec.error = rec.error or f"entropy {rec.entropy_bits} outside [0, N/2]"
    return rec


def _solve_exact(cfg, s, rec):
    h = HamiltonianOperator(s, cfg.pauli_normalization)
    sol = lowest_two(h, tol=cfg.tol)
    rec.e0, rec.e1, rec.gap = sol.e0, sol.e1, sol.gap
    rec.degenerate_flag = sol.degenerate_flag
    rec.diagnostics = {
        "iterations": sol.iterations,
        "matvecs": sol.matvecs,
        "residual_norms": list(sol.residual_norms),
        "spectral_range": sol.spectral_range,
    }
    psi = sol.psi0.amplitudes / np.linalg.norm(sol.psi0.amplitudes)
    if cfg.entropy:
        ent = entanglement_entropy(psi, s.n // 2, s.n)
        rec.entropy_bits = ent.entropy_bits
        rec.chi_eff = effective_rank(ent.schmidt_spectrum, CHI_EPSILON)
    if cfg.correlations:
        if cfg.graph == "ring":
            prof = ring_correlation_profile(psi, s.graph, cfg.pauli_normalization)
        else:
            prof = chain_correlation_profile(psi, s.n, cfg.pauli_normalization)
        rec.c_of_r = [float(x) for x in prof.c_of_r]


def _solve_dmrg(cfg, s, rec):
    mpo = dmrg_mod.build_mpo(s, cfg.pauli_normalization)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        gs = dmrg_mod.dmrg_ground(mpo, cfg.chi_max, cfg.dmrg_sweeps, cfg.dmrg_energy_tol,
                                  seed=size_seed(cfg.master_seed, s.n) ^ rec.realization)
        ex = dmrg_mod.dmrg_first_excited(mpo, gs.mps, chi_max=cfg.chi_max, sweeps=cfg.dmrg_sweeps,
                                         energy_tol=cfg.dmrg_energy_tol,
                                         seed=size_seed(cfg.master_seed, s.n) ^ (rec.realization + 1))
    rec.e0, rec.e1 = gs.energy, ex.energy
    rec.gap = max(ex.energy - gs.energy, 0.0)
    rec.diagnostics = {"ground": gs.diagnostics, "excited": ex.diagnostics}
    if cfg.entropy:
        ent = dmrg_mod.mps_entropy(gs.mps, s.n // 2)
        rec.entropy_bits = ent.entropy_bits
        rec.chi_eff = effective_rank(ent.schmidt_spectrum, CHI_EPSILON)
    if cfg.correlations:
        prof = []
        for d in range(1, s.n):
            vals = [dmrg_mod.mps_correlation(gs.mps, i, i + d, cfg.pauli_normalization)
                    for i in range(1, s.n - d + 1)]
            prof.append(float(np.mean(vals)))
        rec.c_of_r = prof


def _task(args):
    cfg_dict, n, lam, r = args
    return compute_record(SweepConfig.from_dict(cfg_dict), n, lam, r).to_json()


def _resolve_workers(workers: Optional[int]) -> int:
    if workers is None:
        env = os.environ.get("TSRE_WORKERS")
        if env:
            try:
                workers = int(env)
            except ValueError as exc:
                raise ConfigError(f"TSRE_WORKERS must be an integer, got {env!r}") from exc
        else:
            workers = 1
    if workers < 1:
        raise ConfigError("workers must be at least 1")
    return workers


def _sort_key(cfg: SweepConfig):
    n_pos = {n: i for i, n in enumerate(cfg.n_list)}
    l_pos = {lam: i for i, lam in enumerate(cfg.lambda_list)}
    return lambda rec: (n_pos.get(rec.n, len(n_pos)), l_pos.get(rec.lam, len(l_pos)), rec.realization)


def run_sweep(
    cfg: SweepConfig,
    workers: Optional[int] = None,
    jsonl_path=None,
    resume: bool = False,
    progress=None,
) -> list:
    """Run every (N, lambda, realization) of ``cfg`` and return sorted records.

    With ``jsonl_path`` each record is appended as it completes; with
    ``resume`` records already in that file are kept and not recomputed.
    """
    workers = _resolve_workers(workers)
    for msg in cfg.kramers_warnings():
        warnings.warn(msg, KramersWarning, stacklevel=2)
    done = {}
    if resume and jsonl_path is not None and Path(jsonl_path).exists():
        for rec in read_records(jsonl_path):
            done[rec.key] = rec
    wanted = set(cfg.keys())
    todo = [k for k in cfg.keys() if k not in done]
    sink = None
    if jsonl_path is not None:
        mode = "a" if resume else "w"
        sink = open(jsonl_path, mode, encoding="utf-8")
    try:
        def emit(rec):
            done[rec.key] = rec
            if sink is not None:
                sink.write(json.dumps(rec.to_json(), sort_keys=True) + "\n")
                sink.flush()
            if progress is not None:
                progress(rec)

        if workers == 1 or len(todo) <= 1:
            for n, lam, r in todo:
                emit(compute_record(cfg, n, lam, r))
        else:
            d = cfg.to_dict()
            with ProcessPoolExecutor(max_workers=workers) as pool:
                chunk = max(1, len(todo) // (8 * workers))
                for out in pool.map(_task, [(d, n, lam, r) for n, lam, r in todo], chunksize=chunk):
                    emit(EnsembleRecord.from_json(out))
    finally:
        if sink is not None:
            sink.close()
    records = [rec for key, rec in done.items() if key in wanted]
    return sorted(records, key=_sort_key(cfg))


def write_csv(records: Iterable[EnsembleRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for rec in records:
            w.writerow(rec.csv_row())


def _nan_if_none(x):
    return float("nan") if x is None else x


def read_records(path) -> list:
    """Load records from a JSON-lines or CSV file."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"record file {path} not found")
    out = []
    if path.suffix == ".csv":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            missing = {"n", "lambda", "realization", "gap"} - set(reader.fieldnames or [])
            if missing:
                raise ConfigError(f"record file lacks columns {sorted(missing)}")
            for row in reader:
                def num(key, cast=float):
                    v = row.get(key, "")
                    return cast(v) if v not in ("", None) else None

                out.append(EnsembleRecord(
                    n=int(row["n"]), lam=float(row["lambda"]), realization=int(row["realization"]),
                    method=row.get("method", "exact"), e0=_nan_if_none(num("e0")),
                    e1=_nan_if_none(num("e1")),
                    gap=float(row["gap"]) if row["gap"] else float("nan"),
                    entropy_bits=num("entropy_bits"), chi_eff=num("chi_eff", int),
                    degenerate_flag=row.get("degenerate_flag") == "1", error=row.get("error", "")))
        return out
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(EnsembleRecord.from_json(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ConfigError(f"{path}:{line_no}: malformed record ({exc})") from exc
    return out


def _groups(records) -> dict:
    groups = {}
    for rec in records:
        groups.setdefault((rec.n, rec.lam), []).append(rec)
    return groups


def aggregate(records) -> list:
    """Per-(N, lambda) means and errors, ordered by (N, lambda).

    Failed records are counted but excluded from the statistics.
    """
    rows = []
    for (n, lam), recs in sorted(_groups(records).items()):
        ok = sorted((r for r in recs if r.ok), key=lambda r: r.realization)
        row = {"n": n, "lambda": lam, "count": len(recs), "successes": len(ok),
               "failures": len(recs) - len(ok),
               "degenerate": sum(r.degenerate_flag for r in ok)}
        for name in ("gap", "e0", "entropy_bits", "chi_eff"):
            vals = [getattr(r, name) for r in ok if getattr(r, name) is not None]
            vals = [v for v in vals if math.isfinite(v)]
            if len(vals) >= 2:
                row[name], row[name + "_se"] = mean_se(vals)
        profs = [r.c_of_r for r in ok if r.c_of_r is not None]
        if len(profs) >= 2:
            arr = np.array(profs)
            row["c_of_r"] = arr.mean(axis=0).tolist()
            row["c_of_r_se"] = (arr.std(axis=0) / math.sqrt(len(arr))).tolist()
        rows.append(row)
    return rows


def _select(rows, n=None, lam=None):
    out = [r for r in rows if (n is None or r["n"] == n) and (lam is None or np.isclose(r["lambda"], lam))]
    if not out:
        raise ConfigError(f"no records for N={n}, lambda={lam}")
    return out


def _analysis_gap_histogram(records, rows, spec):
    n, lam = spec.get("n"), spec.get("lambda")
    recs = [r for r in records if r.ok and (n is None or r.n == n) and (lam is None or np.isclose(r.lam, lam))]
    hist = normalized_gap_histogram(recs, spec.get("bins", 40), tuple(spec.get("range", (0.0, 4.0))))
    table = hist.table()[:, :3]
    return {"table": table, "columns": ["g_tilde", "empirical_density", "gue_density"],
            "summary": {"count": hist.count, "ks_gue": ks_distance_gue(normalized_gaps(recs))}}


def _analysis_gap_scaling(records, rows, spec):
    sel = _select(rows, lam=spec.get("lambda"))
    ns = [r["n"] for r in sel]
    g = [r["gap"] for r in sel]
    fits = {m: fit_gap_scaling(ns, g, m) for m in ("power_law", "exponential")}
    table = np.column_stack([ns, g, [r["gap_se"] for r in sel]])
    return {"table": table, "columns": ["n", "mean_gap", "se"],
            "fits": fits, "summary": {m: f.rss for m, f in fits.items()}}


def _analysis_entropy_scaling(records, rows, spec):
    sel = _select(rows, lam=spec.get("lambda"))
    ns = [r["n"] for r in sel]
    s = [r["entropy_bits"] for r in sel]
    mode = spec.get("mode", "log")
    fit = fit_entropy_scaling(ns, s, mode)
    table = np.column_stack([ns, s, [r["entropy_bits_se"] for r in sel]])
    return {"table": table, "columns": ["n", "mean_entropy_bits", "se"], "fits": {mode: fit}}


def _analysis_correlation_profile(records, rows, spec):
    sel = _select(rows, n=spec.get("n"), lam=spec.get("lambda"))[0]
    if "c_of_r" not in sel:
        raise ConfigError("records carry no correlation profiles")
    c = np.array(sel["c_of_r"])
    r = np.arange(1, len(c) + 1)
    out = {"table": np.column_stack([r, c, sel["c_of_r_se"]]), "columns": ["r", "c_of_r", "se"]}
    if "r_range" in spec:
        out["fits"] = {"xi": fit_correlation_length(r, c, spec["r_range"])}
    return out


def _analysis_xi_lambda(records, rows, spec):
    n = spec.get("n")
    r_range = spec.get("r_range", [2, 4])
    lams, xis, errs = [], [], []
    for row in sorted(_select(rows, n=n), key=lambda x: x["lambda"]):
        if row["lambda"] <= 0 or "c_of_r" not in row:
            continue
        c = np.array(row["c_of_r"])
        fit = fit_correlation_length(np.arange(1, len(c) + 1), c, r_range)
        lams.append(row["lambda"])
        xis.append(fit.params["xi"])
        errs.append(fit.errors["xi"])
    out = {"table": np.column_stack([lams, xis, errs]), "columns": ["lambda", "xi_base2", "se"],
           "summary": {"monotone_decreasing": bool(np.all(np.diff(xis) < 0))}}
    if sum(1 for x in lams if x <= spec.get("lam_max", 1.0) and not np.isclose(x, 0.1)) >= 2:
        out["fits"] = {"xi_lambda": fit_xi_lambda(lams, xis, spec.get("lam_max", 1.0))}
    return out


def _analysis_sinf_lambda(records, rows, spec):
    lams, sinf, plateau = [], [], []
    for lam in sorted({r["lambda"] for r in rows}):
        if lam <= 0:
            continue
        sel = [r for r in _select(rows, lam=lam) if "entropy_bits" in r]
        if len(sel) < 3:
            continue
        fit = fit_entropy_scaling([r["n"] for r in sel], [r["entropy_bits"] for r in sel],
                                  "saturation")
        lams.append(lam)
        # the largest size stands in when the saturation fit is ill-determined
        value = fit.params["s_inf"]
        if not (math.isfinite(value) and 0 <= value <= 2 * sel[-1]["entropy_bits"] + 1):
            value = sel[-1]["entropy_bits"]
        sinf.append(value)
        plateau.append(sel[-1]["entropy_bits"])
    out = {"table": np.column_stack([lams, sinf, plateau]),
           "columns": ["lambda", "s_inf", "s_largest_n"]}
    if sum(1 for x in lams if x < 1.0) >= 2:
        out["fits"] = {"divergence": fit_entropy_saturation_divergence(
            lams, sinf, spec.get("k", 4.0), spec.get("lam_star", 4.0))}
    return out


ANALYSES = {
    "gap_histogram": _analysis_gap_histogram,
    "gap_scaling": _analysis_gap_scaling,
    "entropy_scaling": _analysis_entropy_scaling,
    "correlation_profile": _analysis_correlation_profile,
    "xi_lambda": _analysis_xi_lambda,
    "sinf_lambda": _analysis_sinf_lambda,
}


def analyze_records(records, spec: dict) -> dict:
    """Run the analyses listed in ``spec['analyses']``; returns name -> result."""
    if not isinstance(spec, dict) or not isinstance(spec.get("analyses"), list):
        raise ConfigError("analysis spec needs a list 'analyses'")
    rows = aggregate(records)
    out = {}
    for i, item in enumerate(spec["analyses"]):
        kind = item.get("kind") if isinstance(item, dict) else None
        if kind not in ANALYSES:
            raise ConfigError(f"unknown analysis {kind!r}; known: {sorted(ANALYSES)}")
        out[item.get("name", f"{i:02d}_{kind}")] = ANALYSES[kind](records, rows, item)
    return out


_CHAIN8_16 = [8, 10, 12, 14, 16]

PRESETS = {
    "fig1-desk": {
        "sweeps": {"main": {"graph": "chain", "n_list": [8, 10], "lambda_list": [1.0],
                            "realizations": 2000, "entropy": False}},
        "analysis": {"analyses": [{"kind": "gap_histogram", "n": 8, "lambda": 1.0},
                                  {"kind": "gap_histogram", "n": 10, "lambda": 1.0}]},
    },
    "fig2-desk": {
        "sweeps": {"main": {"graph": "chain", "n_list": [8, 10, 12, 14], "lambda_list": [1.0, 0.0],
                            "realizations": 500, "entropy": False}},
        "analysis": {"analyses": [{"kind": "gap_scaling", "lambda": 1.0},
                                  {"kind": "gap_scaling", "lambda": 0.0}]},
    },
    "fig3-desk": {
        "sweeps": {"main": {"graph": "chain", "n_list": _CHAIN8_16, "lambda_list": [0.0, 1.0],
                            "realizations": {8: 400, 10: 400, 12: 400, 14: 300, 16: 200}}},
        "analysis": {"analyses": [{"kind": "entropy_scaling", "lambda": 0.0, "mode": "log"},
                                  {"kind": "entropy_scaling", "lambda": 1.0, "mode": "saturation"}]},
    },
    "fig4-desk": {
        "sweeps": {"main": {"graph": "ring", "n_list": [12, 16], "lambda_list": [0.0, 1.0],
                            "realizations": 200, "entropy": False, "correlations": True}},
        "analysis": {"analyses": [{"kind": "correlation_profile", "n": n, "lambda": lam}
                                  for n in (12, 16) for lam in (0.0, 1.0)]},
    },
    "fig56-desk": {
        "sweeps": {
            "xi": {"graph": "ring", "n_list": [12], "lambda_list": [0.25, 0.5, 1.0, 2.0],
                   "realizations": 200, "entropy": False, "correlations": True},
            "sinf": {"graph": "chain", "n_list": [6, 8, 10, 12],
                     "lambda_list": [0.0625, 0.125, 0.25, 0.5, 1.0, 2.0], "realizations": 200},
        },
        "analysis": {"xi": {"analyses": [{"kind": "xi_lambda", "n": 12, "r_range": [2, 4]}]},
                     "sinf": {"analyses": [{"kind": "sinf_lambda"}]}},
    },
}
