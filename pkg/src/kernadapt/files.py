"""Dataset CSV, model JSON and report CSV formats.

Floats are written with ``repr``, the shortest string that round-trips, so
save/load is lossless.  All files are UTF-8 with ``\\n`` line endings.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from kernadapt.data import Dataset
from kernadapt.errors import InputError
from kernadapt.kernels import KernelSpec
from kernadapt.ridge import FLAVORS, KernelModel

MODEL_VERSION = "1"


def _num(v) -> str:
    return repr(float(v))


def format_dataset(data: Dataset) -> str:
    n, l = data.dimension, data.n_targets
    header = [f"x{i + 1}" for i in range(n)] + [f"y{j + 1}" for j in range(l)]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for x, y in zip(data.points, data.targets):
        w.writerow([_num(v) for v in x] + [_num(v) for v in y])
    return buf.getvalue()


def save_dataset(data: Dataset, path) -> None:
    Path(path).write_text(format_dataset(data), encoding="utf-8", newline="\n")


def parse_dataset(text: str, expected_targets: int | None = None) -> Dataset:
    """Parse ``x1,...,xn,y1,...,yl`` CSV.

    Target columns are the ones whose header starts with ``y``; without
    such headers the last ``expected_targets`` (default 1) columns are used.
    """
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise InputError("empty file: no header")
    header = [h.strip() for h in rows[0]]
    n_y = sum(1 for h in header if h.lower().startswith("y"))
    if n_y == 0:
        n_y = expected_targets or 1
    elif expected_targets is not None and n_y != expected_targets:
        raise InputError(f"header has {n_y} target columns, expected {expected_targets}")
    width = len(header)
    if width <= n_y:
        raise InputError("header needs at least one feature and one target column")
    values = []
    for lineno, rec in enumerate(rows[1:], start=2):
        if not rec or all(not f.strip() for f in rec):
            continue
        if len(rec) != width:
            raise InputError(f"line {lineno}: expected {width} fields, got {len(rec)}")
        try:
            vals = [float(f) for f in rec]
        except ValueError:
            raise InputError(f"line {lineno}: non-numeric field") from None
        if not all(math.isfinite(v) for v in vals):
            raise InputError(f"line {lineno}: non-finite value")
        values.append(vals)
    if not values:
        raise InputError("empty dataset")
    arr = np.array(values)
    return Dataset(arr[:, : width - n_y], arr[:, width - n_y:])


def load_dataset(path, expected_targets: int | None = None) -> Dataset:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    return parse_dataset(text, expected_targets)


def model_to_dict(model: KernelModel) -> dict:
    spec = model.spec
    return {
        "version": MODEL_VERSION,
        "dimension": spec.dimension,
        "family": "gaussian",
        "width_mode": spec.mode,
        "sigma_min": float(spec.sigma_min),
        "sigma_max": float(spec.sigma_max),
        "centers": model.centers.tolist(),
        "widths": np.asarray(spec.widths).tolist(),
        "weights": model.weights.tolist(),
        "lambda_used": model.lambda_used,
        "flavor": model.flavor,
    }


def model_from_dict(doc) -> KernelModel:
    if not isinstance(doc, dict):
        raise InputError("model file must hold a JSON object")
    version = doc.get("version")
    if version != MODEL_VERSION:
        raise InputError(f"unsupported model version {version!r} (reader is {MODEL_VERSION!r})")

    def field(name):
        if name not in doc:
            raise InputError(f"model file is missing field {name!r}")
        return doc[name]

    if field("family") != "gaussian":
        raise InputError(f"field 'family': unsupported kernel family {doc['family']!r}")
    if field("flavor") not in FLAVORS:
        raise InputError(f"field 'flavor': unknown flavor {doc['flavor']!r}")
    try:
        spec = KernelSpec(int(field("dimension")), field("width_mode"),
                          np.asarray(field("widths"), dtype=float),
                          float(field("sigma_min")), float(field("sigma_max")))
    except (TypeError, ValueError) as exc:
        raise InputError(f"kernel fields: {exc}") from exc
    try:
        centers = np.asarray(field("centers"), dtype=float)
        weights = np.asarray(field("weights"), dtype=float)
        lam = float(field("lambda_used"))
    except (TypeError, ValueError) as exc:
        raise InputError(f"field 'centers'/'weights'/'lambda_used': {exc}") from exc
    if centers.ndim != 2:
        raise InputError("field 'centers' must be a list of points")
    if weights.ndim != 2:
        raise InputError("field 'weights' must be a list of rows")
    return KernelModel(centers, spec, weights, lam, doc["flavor"])


def save_model(model: KernelModel, path) -> None:
    text = json.dumps(model_to_dict(model), indent=1) + "\n"
    Path(path).write_text(text, encoding="utf-8", newline="\n")


def load_model(path) -> KernelModel:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"model file is not valid JSON: {exc}") from exc
    return model_from_dict(doc)


def write_csv(path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(["" if v is None else (_num(v) if isinstance(v, (float, np.floating)) else v)
                    for v in row])
    Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="\n")


def write_grid_values(path, grid, truth_values, predictions) -> None:
    """Grid-values CSV ``a,b,truth,prediction`` (first target column)."""
    pred = np.asarray(predictions).reshape(len(grid), -1)[:, 0]
    write_csv(path, ["a", "b", "truth", "prediction"],
              ([float(g[0]), float(g[1]), float(t), float(p)]
               for g, t, p in zip(grid, truth_values, pred)))


def write_trace(path, trace) -> None:
    write_csv(path, ["iter", "objective", "train_sup", "test_sup"],
              ([r.iteration, float(r.objective), float(r.train_sup),
                None if r.test_sup is None else float(r.test_sup)] for r in trace.records))
