"""Report persistence: long-format CSV plus a JSON sidecar.

Floats are written with :func:`repr`, which round-trips exactly, so reading
a report and writing it again reproduces the file byte for byte.
"""
from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

REPORT_COLUMNS = ("study", "arm", "width", "metric", "value", "se")
KERNEL_COLUMNS = ("layer", "alpha", "beta", "label_alpha", "label_beta", "value", "se", "provenance")


def atomic_write(path, data: str) -> Path:
    """Write ``data`` to a temporary file next to ``path`` and rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def rows_to_csv(rows: Iterable, columns=REPORT_COLUMNS) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def parse_report_csv(text: str) -> list:
    """Inverse of :func:`rows_to_csv` for report rows."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(header) != REPORT_COLUMNS:
        raise ValueError(f"not a report CSV: expected header {','.join(REPORT_COLUMNS)}")
    rows = []
    for study, arm, width, metric, value, se in reader:
        rows.append((study, arm, int(width) if width else None, metric, float(value), float(se)))
    return rows


def read_report(path) -> list:
    return parse_report_csv(Path(path).read_text())


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def summary(report, run_config: Optional[dict] = None) -> dict:
    slopes = {k: (None if f is None else {"slope": f.slope, "se": f.se, "ci_low": f.ci_low,
                                           "ci_high": f.ci_high, "intercept": f.intercept})
              for k, f in report.slopes.items()}
    return _jsonable({
        "study": report.study,
        "config_hash": report.config_hash,
        "seed": report.meta.get("seed"),
        "ladder": report.ladder.to_dict() if report.ladder is not None else None,
        "flags": report.flags,
        "slopes": slopes,
        "meta": {k: v for k, v in report.meta.items() if k != "seed"},
        "run_config": run_config,
    })


def write_report(report, path, run_config: Optional[dict] = None) -> Path:
    """Atomically write ``report.rows()`` as CSV and a JSON sidecar at ``path + '.json'``."""
    atomic_write(path, rows_to_csv(report.rows()))
    atomic_write(sidecar_path(path), json.dumps(summary(report, run_config), indent=2, sort_keys=True) + "\n")
    return Path(path)


def kernel_rows(kernels) -> list:
    rows = []
    for K in kernels:
        n = K.entries.shape[0]
        labels = K.labels or [str(i) for i in range(n)]
        for a in range(n):
            for b in range(n):
                se = None if K.se is None else float(K.se[a, b])
                rows.append((K.layer, a, b, labels[a], labels[b], float(K.entries[a, b]), se, K.provenance))
    return rows


def kernels_to_csv(kernels) -> str:
    return rows_to_csv(kernel_rows(kernels), KERNEL_COLUMNS)


def write_kernels(kernels, path, run_config: Optional[dict] = None, seed: Optional[int] = None,
                  config_hash: str = "") -> Path:
    atomic_write(path, kernels_to_csv(kernels))
    meta = {"study": "kernel", "config_hash": config_hash, "seed": seed, "run_config": run_config,
            "layers": [{"layer": K.layer, "provenance": K.provenance, "labels": list(K.labels),
                        "entries": K.entries, "se": K.se} for K in kernels]}
    atomic_write(sidecar_path(path), json.dumps(_jsonable(meta), indent=2, sort_keys=True) + "\n")
    return Path(path)
