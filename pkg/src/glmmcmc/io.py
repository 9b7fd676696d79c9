"""Config files, dataset CSVs, chain files and their metadata sidecars.

Layouts
-------
dataset CSV : header ``y[,trials],x1..xk,g1..gr``; ``g*`` columns are group labels
chain CSV   : header of coordinate names, one row per kept iteration, floats as ``%.17g``
sidecar     : ``<chain>.meta.json`` with sorted keys and no timestamps
"""
import csv
import hashlib
import json
import os
from pathlib import Path

import numpy as np

from . import __version__
from .chain import SampleMatrix
from .errors import ModelError
from .simulate import Dataset


class ConfigError(ModelError):
    """Unreadable or inconsistent configuration or input file."""


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    return cfg


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def config_hash(cfg, data_path=None):
    """SHA-256 over the canonical effective config and, if given, the dataset bytes."""
    h = hashlib.sha256(canonical_json(cfg).encode())
    if data_path is not None:
        h.update(file_digest(data_path).encode())
    return h.hexdigest()


def _sorted_columns(fields, prefix):
    cols = [f for f in fields if f.startswith(prefix) and f[len(prefix):].isdigit()]
    return sorted(cols, key=lambda f: int(f[len(prefix):]))


def read_dataset(path):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read dataset {path}: {exc.strerror}") from None
    if not rows:
        raise ConfigError(f"dataset {path} is empty")
    header = [h.strip() for h in rows[0]]
    body = [r for r in rows[1:] if any(c.strip() for c in r)]
    if "y" not in header:
        raise ConfigError(f"dataset {path} has no 'y' column")
    for i, r in enumerate(body):
        if len(r) != len(header):
            raise ConfigError(f"dataset {path} line {i + 2}: expected {len(header)} fields, got {len(r)}")
    col = {h: [r[k].strip() for r in body] for k, h in enumerate(header)}
    xs = _sorted_columns(header, "x")
    gs = _sorted_columns(header, "g")
    if not gs:
        raise ConfigError(f"dataset {path} needs at least one group column g1")
    try:
        y = np.array([float(v) for v in col["y"]])
        trials = np.array([float(v) for v in col["trials"]]) if "trials" in col else np.ones(len(body))
        cov = np.array([[float(col[x][i]) for x in xs] for i in range(len(body))]).reshape(len(body), len(xs))
    except ValueError as exc:
        raise ConfigError(f"dataset {path}: non-numeric value ({exc})") from None
    groups = np.zeros((len(body), len(gs)), dtype=int)
    levels = []
    for j, g in enumerate(gs):
        labels = sorted(set(col[g]), key=_label_key)
        index = {lab: k for k, lab in enumerate(labels)}
        groups[:, j] = [index[v] for v in col[g]]
        levels.append(labels)
    return Dataset(y, trials, cov, groups, levels)


def _label_key(label):
    try:
        return (0, float(label), label)
    except ValueError:
        return (1, 0.0, label)


def write_dataset(path, ds):
    k = ds.covariates.shape[1]
    r = ds.groups.shape[1]
    header = ["y", "trials"] + [f"x{i + 1}" for i in range(k)] + [f"g{j + 1}" for j in range(r)]
    lines = [",".join(header)]
    for i in range(ds.m):
        vals = [str(int(ds.y[i])), str(int(ds.trials[i]))]
        vals += [repr(float(v)) for v in ds.covariates[i]]
        vals += [ds.levels[j][ds.groups[i, j]] for j in range(r)]
        lines.append(",".join(vals))
    _write_text(path, "\n".join(lines) + "\n")


def write_json(path, obj):
    _write_text(path, json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _write_text(path, text):
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def meta_path(chain_path):
    p = str(chain_path)
    return (p[:-4] if p.endswith(".csv") else p) + ".meta.json"


def write_chain(path, samples, seed, cfg_hash, extra=None):
    """Chain CSV plus its metadata sidecar; byte-identical for identical inputs."""
    lines = [",".join(samples.names)]
    lines.extend(",".join("%.17g" % v for v in row) for row in samples.data.tolist())
    _write_text(path, "\n".join(lines) + "\n")
    meta = {
        "acceptance_rate": samples.acceptance_rate,
        "burn_in": samples.burn_in,
        "config_hash": cfg_hash,
        "n_iter": samples.n_iter,
        "n_rows": len(samples),
        "names": samples.names,
        "sampler": samples.sampler,
        "seed": seed,
        "step_size": samples.step_size,
        "thin": samples.thin,
        "version": __version__,
    }
    if extra:
        meta.update(extra)
    write_json(meta_path(path), meta)
    return meta


def read_chain(path):
    try:
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().strip().split(",")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except OSError as exc:
        raise ConfigError(f"cannot read chain {path}: {exc.strerror}") from None
    except ValueError as exc:
        raise ConfigError(f"chain {path} is malformed: {exc}") from None
    if data.size == 0:
        data = np.zeros((0, len(header)))
    meta = {}
    mp = meta_path(path)
    if os.path.exists(mp):
        with open(mp, encoding="utf-8") as fh:
            meta = json.load(fh)
    if data.shape[1] != len(header):
        raise ConfigError(f"chain {path}: header has {len(header)} names, rows have {data.shape[1]}")
    return SampleMatrix(data, header, meta.get("burn_in", 0), meta.get("thin", 1),
                        meta.get("n_iter", data.shape[0]), meta.get("sampler", "unknown"),
                        acceptance_rate=meta.get("acceptance_rate"), step_size=meta.get("step_size"),
                        meta=meta)
