"""Dataset, posterior, model and config files.

Labels CSV: header ``task_id,worker_id,label``, 0-based integers.
Features CSV: header ``task_id,f0,...,f{d-1}``, floats with 17 significant digits.
Truth CSV: header ``task_id,label``.
Config: one ``key = value`` pair per line, ``#`` starts a comment.
"""

from __future__ import annotations

import csv
import json
import os
import tempfile
from pathlib import Path
from typing import Optional

import numpy as np

from .core import CrowdDataset, DataError

LABEL_HEADER = ["task_id", "worker_id", "label"]
TRUTH_HEADER = ["task_id", "label"]


def atomic_write_text(path, text: str) -> None:
    """Write to a temporary file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def fmt_float(x: float) -> str:
    return "%.17g" % x


def _read_rows(path, header):
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    got = [h.strip() for h in rows[0]]
    if header is not None and got != header:
        raise DataError(f"{path}:1: expected header {','.join(header)}, got {','.join(got)}")
    return path, got, rows[1:]


def _ints(path, lineno, row, width):
    if len(row) != width:
        raise DataError(f"{path}:{lineno}: expected {width} fields, got {len(row)}")
    try:
        return [int(v) for v in row]
    except ValueError:
        raise DataError(f"{path}:{lineno}: non-integer field in {row}") from None


def load_features(path) -> np.ndarray:
    fpath, header, frows = _read_rows(path, None)
    d = len(header) - 1
    if header[0] != "task_id" or header[1:] != [f"f{j}" for j in range(d)]:
        raise DataError(f"{fpath}:1: expected header task_id,f0,...,f{{d-1}}")
    feats = {}
    for n, row in enumerate(frows, start=2):
        if not row:
            continue
        if len(row) != d + 1:
            raise DataError(f"{fpath}:{n}: expected {d + 1} fields, got {len(row)}")
        try:
            feats[int(row[0])] = [float(v) for v in row[1:]]
        except ValueError:
            raise DataError(f"{fpath}:{n}: malformed number in {row}") from None
    if sorted(feats) != list(range(len(feats))):
        raise DataError(f"{fpath}: task ids must be 0..{len(feats) - 1} without gaps")
    return np.array([feats[t] for t in range(len(feats))], dtype=np.float64).reshape(len(feats), d)


def load_truth(path, num_classes: Optional[int] = None) -> np.ndarray:
    tpath, _, trows = _read_rows(path, TRUTH_HEADER)
    tt = {}
    for n, row in enumerate(trows, start=2):
        if not row:
            continue
        t, y = _ints(tpath, n, row, 2)
        if y < 0 or (num_classes is not None and y >= num_classes):
            raise DataError(f"{tpath}:{n}: label {y} out of range")
        tt[t] = y
    if sorted(tt) != list(range(len(tt))):
        raise DataError(f"{tpath}: task ids must be 0..{len(tt) - 1} without gaps")
    return np.array([tt[t] for t in range(len(tt))], dtype=np.int64)


def load_dataset(labels_path, features_path=None, truth_path=None,
                 num_classes: Optional[int] = None, num_tasks: Optional[int] = None,
                 num_workers: Optional[int] = None) -> CrowdDataset:
    """Read and validate a dataset; every error names the offending file and line.

    Sizes default to one more than the largest id seen (and for the tasks,
    the feature/truth row counts).
    """
    path, _, rows = _read_rows(labels_path, LABEL_HEADER)
    triples = []
    first_line = {}
    for n, row in enumerate(rows, start=2):
        if not row:
            continue
        t, w, y = _ints(path, n, row, 3)
        if t < 0 or w < 0 or y < 0:
            raise DataError(f"{path}:{n}: negative id or label")
        if num_classes is not None and y >= num_classes:
            raise DataError(f"{path}:{n}: label {y} out of range [0, {num_classes})")
        if (t, w) in first_line:
            raise DataError(f"{path}:{n}: duplicate (task, worker) pair ({t}, {w}), "
                            f"first seen on line {first_line[(t, w)]}")
        first_line[(t, w)] = n
        triples.append((t, w, y))
    arr = np.array(triples, dtype=np.int64).reshape(-1, 3)

    features = load_features(features_path) if features_path is not None else None
    truth = load_truth(truth_path, num_classes) if truth_path is not None else None

    if num_tasks is None:
        cands = [int(arr[:, 0].max()) + 1 if arr.size else 0]
        cands += [x.shape[0] for x in (features, truth) if x is not None]
        num_tasks = max(cands)
    if num_workers is None:
        num_workers = int(arr[:, 1].max()) + 1 if arr.size else 0
    if num_classes is None:
        cands = [2, int(arr[:, 2].max()) + 1 if arr.size else 0]
        if truth is not None and truth.size:
            cands.append(int(truth.max()) + 1)
        num_classes = max(cands)
    bad = np.flatnonzero(arr[:, 0] >= num_tasks) if arr.size else []
    if len(bad):
        raise DataError(f"{path}:{bad[0] + 2}: task_id {arr[bad[0], 0]} out of range [0, {num_tasks})")
    return CrowdDataset(num_tasks, num_workers, num_classes, arr[:, 0], arr[:, 1], arr[:, 2],
                        features, truth)


def labels_csv(dataset: CrowdDataset) -> str:
    lines = [",".join(LABEL_HEADER)]
    lines += [f"{t},{w},{y}" for t, w, y in zip(dataset.tasks, dataset.workers, dataset.labels)]
    return "\n".join(lines) + "\n"


def features_csv(features: np.ndarray) -> str:
    d = features.shape[1]
    lines = [",".join(["task_id"] + [f"f{j}" for j in range(d)])]
    lines += [",".join([str(i)] + [fmt_float(v) for v in row]) for i, row in enumerate(features)]
    return "\n".join(lines) + "\n"


def truth_csv(truth: np.ndarray) -> str:
    lines = [",".join(TRUTH_HEADER)] + [f"{i},{y}" for i, y in enumerate(truth)]
    return "\n".join(lines) + "\n"


def save_dataset(dataset: CrowdDataset, labels_path, features_path=None, truth_path=None) -> None:
    atomic_write_text(labels_path, labels_csv(dataset))
    if features_path is not None and dataset.features is not None:
        atomic_write_text(features_path, features_csv(dataset.features))
    if truth_path is not None and dataset.truth is not None:
        atomic_write_text(truth_path, truth_csv(dataset.truth))


def posterior_csv(q: np.ndarray) -> str:
    K = q.shape[1]
    lines = [",".join(["task_id"] + [f"q{k}" for k in range(K)] + ["label"])]
    pred = np.argmax(q, axis=1)
    lines += [",".join([str(i)] + [fmt_float(v) for v in row] + [str(int(pred[i]))])
              for i, row in enumerate(q)]
    return "\n".join(lines) + "\n"


def load_posterior(path) -> np.ndarray:
    path, header, rows = _read_rows(path, None)
    K = len(header) - 2
    return np.array([[float(v) for v in row[1:K + 1]] for row in rows if row], dtype=np.float64)


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def save_json(path, obj) -> None:
    atomic_write_text(path, dump_json(obj))


def load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise DataError(f"{path}: no such file") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None


def parse_config(text: str, source: str = "<config>") -> dict:
    """Flat ``key = value`` pairs; values stay strings."""
    out = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"{source}:{n}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise DataError(f"{source}:{n}: empty key")
        out[key.replace("-", "_")] = value
    return out


def load_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    return parse_config(path.read_text(), str(path))
