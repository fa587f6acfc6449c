"""Orchestration of runs: path CSV sink with resume, result and oracle JSON documents."""
from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import platform
import time
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from . import estimators as est
from .config import RunConfig
from .lattice import FiniteT, Projector, mode_to_dict
from .noneq import (AllPathsAbandoned, PathResult, WorkEnsemble, estimate_renyi, iter_paths)

SCHEMA_VERSION = "1.0"
PATHS_FILE = "paths.csv"
RESULT_FILE = "result.json"
CSV_COLUMNS = ("run_id", "interval_index", "path_index", "walker_seed", "W", "abandoned", "final_NB")


class RunError(RuntimeError):
    pass


def load_schema() -> dict:
    text = resources.files("sreqmc").joinpath("schemas/result.schema.json").read_text("utf-8")
    return json.loads(text)


def validate_result(doc: dict) -> None:
    import jsonschema

    jsonschema.validate(doc, load_schema())


def run_id(cfg: RunConfig) -> str:
    """Content hash of the materialised config (output location excluded)."""
    echo = cfg.echo()
    echo.pop("output", None)
    blob = json.dumps(echo, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def format_work(res: PathResult) -> str:
    return "inf" if res.abandoned else format(res.work, ".17g")


def _row(rid: str, res: PathResult) -> list:
    return [rid, res.interval_index, res.path_index, res.walker_seed, format_work(res),
            int(res.abandoned), res.final_nb]


# ---------------------------------------------------------------------------
# paths.csv


def read_paths(path: Path) -> Tuple[str, List[PathResult]]:
    """Rows of a paths file as PathResults; returns (run_id, rows)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise RunError(f"{path}: empty paths file")
        if tuple(header) != CSV_COLUMNS:
            raise RunError(f"{path}: unexpected columns {header}")
        rows, rid = [], None
        for line in reader:
            if len(line) != len(CSV_COLUMNS):
                raise RunError(f"{path}: malformed row {line}")
            if rid is None:
                rid = line[0]
            elif line[0] != rid:
                raise RunError(f"{path}: rows from several runs")
            rows.append(PathResult(float(line[4]), line[5] == "1", int(line[6]), int(line[3]),
                                   int(line[1]), int(line[2])))
    return rid or "", rows


def _trim_partial_line(path: Path) -> None:
    """Drop an unterminated trailing row left by an interrupted writer."""
    with open(path, "rb+") as fh:
        data = fh.read()
        cut = data.rfind(b"\n") + 1
        if cut != len(data):
            fh.truncate(cut)


def _open_sink(path: Path, rid: str, resume: bool) -> Tuple[set, object]:
    done = set()
    if resume and path.exists() and path.stat().st_size:
        _trim_partial_line(path)
        old_rid, rows = read_paths(path)
        if rows and old_rid != rid:
            raise RunError(f"{path} belongs to run {old_rid}, not {rid}; refusing to resume")
        done = {(r.interval_index, r.path_index) for r in rows}
        fh = open(path, "a", newline="")
    else:
        fh = open(path, "w", newline="")
        csv.writer(fh, lineterminator="\n").writerow(CSV_COLUMNS)
        fh.flush()
    return done, fh


# ---------------------------------------------------------------------------
# result documents


def _float(x: float) -> Optional[float]:
    return float(x) if math.isfinite(x) else None


def _config_block(cfg: RunConfig) -> dict:
    return {"config": cfg.echo(), "system": {"n_sites": cfg.geometry.n_sites, "n_bonds": cfg.geometry.n_bonds,
                                              "mode": mode_to_dict(cfg.mode)}}


def _base_doc(cfg: RunConfig, method: str) -> dict:
    return {"schema_version": SCHEMA_VERSION, "method": method, "quantity": cfg.quantity,
            "renyi_n": cfg.params.renyi_n, "run_id": run_id(cfg), "seed": cfg.seed,
            "code_version": __version__,
            "environment": {"python": platform.python_version(), "numpy": np.__version__,
                            "backend": os.environ.get("SREQMC_BACKEND", "numba")},
            **_config_block(cfg)}


def ensembles_from_rows(cfg: RunConfig, rows: Sequence[PathResult]) -> List[WorkEnsemble]:
    intervals = cfg.plan.schedule.split(cfg.plan.intervals)
    ens = [WorkEnsemble([], iv, {"interval_index": k}) for k, iv in enumerate(intervals)]
    for r in sorted(rows, key=lambda r: (r.interval_index, r.path_index)):
        ens[r.interval_index].results.append(r)
    return ens


def interval_report(ens: WorkEnsemble, k: int, delta_f: float, delta_f_err: float) -> dict:
    rep = {"index": k, "lambda_start": ens.interval.lambda_start, "lambda_end": ens.interval.lambda_end,
           "paths": len(ens.results), "completed": int(ens.works().size),
           "abandoned_fraction": ens.abandoned_fraction, "delta_f": _float(delta_f),
           "delta_f_stderr": _float(delta_f_err)}
    w = ens.works()
    if w.size >= 2:
        st = est.work_stats(ens)
        rep["work_stats"] = {k2: (_float(v) if isinstance(v, float) else v) for k2, v in st.to_dict().items()}
    return rep


def qmc_result(cfg: RunConfig, rows: Sequence[PathResult], wall_time: float) -> dict:
    ens = ensembles_from_rows(cfg, rows)
    expected = cfg.plan.paths_per_interval
    for k, e in enumerate(ens):
        if len(e.results) != expected:
            raise RunError(f"interval {k} has {len(e.results)} of {expected} paths")
    r = estimate_renyi(ens, cfg.params.renyi_n)
    doc = _base_doc(cfg, "qmc")
    doc.update({
        "estimate": r.value, "stderr": r.stderr,
        "intervals": [interval_report(e, k, r.diagnostics["delta_f"][k], r.diagnostics["delta_f_stderr"][k])
                      for k, e in enumerate(ens)],
        "abandoned_fraction": float(np.mean([e.abandoned_fraction for e in ens])),
        "wall_time_s": wall_time,
    })
    return doc


def write_json(path: Path, doc: dict) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# entry points


def run(cfg: RunConfig, out_dir: Optional[str] = None, workers: int = 1, resume: bool = False,
        progress=None) -> dict:
    """Execute the protocol, streaming rows to paths.csv, then write result.json."""
    out = Path(out_dir or cfg.output_directory)
    out.mkdir(parents=True, exist_ok=True)
    rid = run_id(cfg)
    csv_path = out / PATHS_FILE
    t0 = time.perf_counter()
    done, fh = _open_sink(csv_path, rid, resume)
    try:
        writer = csv.writer(fh, lineterminator="\n")
        skip = (lambda k, j: (k, j) in done) if done else (lambda k, j: False)
        for res in iter_paths(cfg.geometry, cfg.params, cfg.mode, cfg.kind, cfg.plan, cfg.seed,
                              workers=workers, skip=skip):
            writer.writerow(_row(rid, res))
            fh.flush()
            if progress is not None:
                progress(res)
    finally:
        fh.close()
    _, rows = read_paths(csv_path)
    doc = qmc_result(cfg, rows, time.perf_counter() - t0)
    if "csv" not in cfg.formats:
        csv_path.unlink()
    validate_result(doc)
    if "json" in cfg.formats:
        write_json(out / RESULT_FILE, doc)
    return doc


def oracle_result(cfg: RunConfig, finite_m: bool = False) -> dict:
    """Exact counterpart of a run, in the same result schema (``method: exact``)."""
    from . import oracle

    t0 = time.perf_counter()
    vals = oracle.exact_quantity(cfg.geometry, cfg.params, cfg.mode, cfg.quantity, finite_m=finite_m)
    doc = _base_doc(cfg, "exact")
    doc.update({"estimate": vals["estimate"], "stderr": 0.0,
                "exact": {k: float(v) for k, v in vals.items()},
                "finite_m": bool(finite_m and isinstance(cfg.mode, Projector)),
                "wall_time_s": time.perf_counter() - t0})
    if isinstance(cfg.mode, Projector):
        doc["exact"].update({k: float(v) for k, v in oracle.projector_spectrum(cfg.geometry, cfg.params).items()})
    validate_result(doc)
    return doc


# ---------------------------------------------------------------------------
# statistics over existing path files


def _sibling_size(paths_file: Path) -> Optional[int]:
    res = paths_file.parent / RESULT_FILE
    if res.exists():
        with open(res, encoding="utf-8") as fh:
            return int(json.load(fh)["system"]["n_sites"])
    return None


def stats_report(files: Sequence[str], out_dir: str, sizes: Optional[Sequence[int]] = None,
                 bins: int = 20) -> dict:
    """Work statistics per file and interval, histograms, and an SNR fit over sizes."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if sizes is not None and len(sizes) != len(files):
        raise RunError("--sizes needs one entry per paths file")
    report = {"schema_version": SCHEMA_VERSION, "files": []}
    snr_points: Dict[int, Tuple[float, float]] = {}
    for i, name in enumerate(files):
        path = Path(name)
        rid, rows = read_paths(path)
        if not rows:
            raise RunError(f"{path}: no path rows")
        by_interval: Dict[int, list] = {}
        for r in rows:
            by_interval.setdefault(r.interval_index, []).append(r.work)
        entry = {"file": str(path), "run_id": rid, "intervals": []}
        for k in sorted(by_interval):
            w = np.array(by_interval[k])
            st = est.work_stats(w)
            gc = est.gaussian_consistency(st, w) if not st.degenerate else None
            counts, edges = est.histogram(w, bins)
            hist_path = out / f"hist_{i:02d}_{path.parent.name or 'run'}_k{k}.csv"
            with open(hist_path, "w", newline="") as fh:
                wr = csv.writer(fh, lineterminator="\n")
                wr.writerow(["bin_left", "bin_right", "count", "density"])
                width = np.diff(edges)
                dens = counts / max(counts.sum(), 1) / np.where(width > 0, width, 1)
                for a, b, c, d in zip(edges[:-1], edges[1:], counts, dens):
                    wr.writerow([format(a, ".17g"), format(b, ".17g"), int(c), format(d, ".17g")])
            entry["intervals"].append({"index": k, "work_stats": st.to_dict(), "gaussian_consistency": gc,
                                       "histogram": str(hist_path)})
            if k == 0 and not st.degenerate:
                size = sizes[i] if sizes is not None else _sibling_size(path)
                if size is not None:
                    snr_points[int(size)] = (est.snr_exp_work(w), est.snr_work(w))
        report["files"].append(entry)
    if len(snr_points) >= 3:
        ns = sorted(snr_points)
        fit = est.fit_snr_scaling(ns, [snr_points[n][0] for n in ns], [snr_points[n][1] for n in ns])
        report["snr_fit"] = fit.to_dict()
        grid = np.geomspace(min(ns), max(ns), 50)
        with open(out / "fit_lines.csv", "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["n_sites", "snr_fit"])
            for n, s in zip(grid, fit.predict(grid)):
                wr.writerow([format(n, ".17g"), format(s, ".17g")])
        report["fit_lines"] = str(out / "fit_lines.csv")
    else:
        report["snr_fit"] = None
    report = _nan_to_none(report)
    write_json(out / "stats.json", report)
    return report


def _nan_to_none(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _nan_to_none(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_nan_to_none(v) for v in obj]
    return obj
