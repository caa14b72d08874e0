"""Dataset and report file formats.

A dataset is a CSV of per-sample rows (index, context state, context input,
measurements) plus a sidecar JSON descriptor holding everything needed to
rebuild the model (ids, names, boxes, constants, and simulation truth when
known). All numeric output uses shortest round-trip formatting and sorted
JSON keys, so identical inputs give identical bytes.
"""

from __future__ import annotations

import csv
import json
import os

import numpy as np

from .canon import Dataset, InvalidModelError, SampleContext
from .models import build_model, model_descriptor

__all__ = ["write_json", "read_json", "write_dataset", "read_dataset"]


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def _fmt(v):
    return repr(float(v))


def write_dataset(base, dataset: Dataset, model, truth1=None, truth2=None,
                  sigma=None, seed=None):
    """Write <base>.csv and <base>.model.json; returns both paths."""
    csv_path = base + ".csv"
    meta_path = base + ".model.json"
    nx = dataset.contexts[0].x.size
    nu = dataset.contexts[0].u.size
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["k"]
            + [f"x_{i + 1}" for i in range(nx)]
            + [f"u_{i + 1}" for i in range(nu)]
            + [f"z_{i + 1}" for i in range(dataset.m)]
        )
        for k, ctx in enumerate(dataset.contexts):
            w.writerow(
                [k]
                + [_fmt(v) for v in ctx.x]
                + [_fmt(v) for v in ctx.u]
                + [_fmt(v) for v in dataset.z[k]]
            )
    meta = model_descriptor(model)
    meta["N"] = dataset.N
    if truth1 is not None:
        meta["truth1"] = [float(v) for v in truth1]
    if truth2 is not None:
        meta["truth2"] = [float(v) for v in truth2]
    if sigma is not None:
        meta["sigma"] = [float(v) for v in np.atleast_1d(sigma)]
    if seed is not None and not isinstance(seed, np.random.SeedSequence):
        meta["seed"] = int(seed)
    write_json(meta_path, meta)
    return csv_path, meta_path


def read_dataset(base):
    """Load a dataset written by write_dataset; accepts the base path or the
    CSV path. Returns (dataset, model, meta)."""
    if base.endswith(".csv"):
        base = base[:-4]
    csv_path = base + ".csv"
    meta_path = base + ".model.json"
    if not os.path.exists(csv_path) or not os.path.exists(meta_path):
        raise InvalidModelError(f"missing dataset files {csv_path} / {meta_path}")
    meta = read_json(meta_path)
    m = int(meta["m"])
    with open(csv_path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, rows = rows[0], rows[1:]
    nx = sum(1 for h in header if h.startswith("x_"))
    nu = sum(1 for h in header if h.startswith("u_"))
    if header[0] != "k" or len(header) != 1 + nx + nu + m:
        raise InvalidModelError(f"unexpected dataset header in {csv_path}")
    contexts = []
    z = np.empty((len(rows), m))
    for i, row in enumerate(rows):
        vals = [float(v) for v in row[1:]]
        contexts.append(SampleContext(
            x=np.array(vals[:nx]), u=np.array(vals[nx:nx + nu]), k=i
        ))
        z[i] = vals[nx + nu:]
    contexts = tuple(contexts)
    model = build_model(meta["model_id"], contexts, meta.get("constants"))
    dataset = Dataset(contexts=contexts, z=z, model_id=meta["model_id"])
    return dataset, model, meta
