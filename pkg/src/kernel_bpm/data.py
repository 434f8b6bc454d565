"""Datasets and on-disk formats.

* IDX (MNIST) files, optionally gzip-compressed, are read as they are.
* Matrices use the ``BPMMAT01`` container: 8-byte magic, u64 rows, u64 cols
  (little endian), then row-major little-endian float64 payload.
* Experiment records are JSON Lines (one object per row, append-safe) with a
  fixed key schema per record kind, plus a CSV export with one header row.
"""

from __future__ import annotations

import csv
import gzip
import io
import json
import math
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Literal, Optional

import numpy as np

from . import seeding

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
MATRIX_MAGIC = b"BPMMAT01"
NORM_RTOL = 1e-9

Source = Literal["mnist_even_odd", "synthetic_gaussians", "synthetic_xor"]


class DataError(ValueError):
    pass


class CorruptFileError(DataError):
    pass


class ReportSchemaError(DataError):
    pass


@dataclass(frozen=True, eq=False)
class Dataset:
    X: np.ndarray
    Y: np.ndarray
    source: Source
    seed: int

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        Y = np.array(self.Y, dtype=float)
        if X.ndim != 2 or X.shape[0] < 1 or Y.shape != (X.shape[0],):
            raise DataError(f"inconsistent dataset shapes {X.shape}, {Y.shape}")
        if not np.all(np.abs(Y) == 1):
            raise DataError("labels must be +-1")
        d0 = X.shape[1]
        sq = np.einsum("ij,ij->i", X, X)
        if np.any(np.abs(sq - d0) > NORM_RTOL * d0):
            raise DataError("rows are not normalised to ||x||^2 = d0")
        X.setflags(write=False)
        Y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d0(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.X[idx], self.Y[idx], self.source, self.seed)

    def split(self, n_first: int) -> tuple["Dataset", "Dataset"]:
        if not 0 < n_first < self.n:
            raise DataError("split point out of range")
        return self.subset(np.arange(n_first)), self.subset(np.arange(n_first, self.n))


def normalize_rows(X) -> np.ndarray:
    """Rescale every row to squared norm d0."""
    X = np.asarray(X, dtype=float)
    norms = np.linalg.norm(X, axis=1)
    if np.any(norms == 0):
        raise DataError("cannot normalise an all-zero row")
    return X * (math.sqrt(X.shape[1]) / norms)[:, None]


# --- IDX --------------------------------------------------------------------


def _read_bytes(path) -> bytes:
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        try:
            raw = gzip.decompress(raw)
        except (OSError, EOFError) as exc:
            raise CorruptFileError(f"{path}: bad gzip stream") from exc
    return raw


def read_idx(path, expected_magic: int) -> np.ndarray:
    """Parse an unsigned-byte IDX file into an array of shape given by its header."""
    raw = _read_bytes(path)
    if len(raw) < 4:
        raise CorruptFileError(f"{path}: truncated header")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise DataError(f"{path}: bad magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    ndim = magic & 0xFF
    head = 4 + 4 * ndim
    if len(raw) < head:
        raise CorruptFileError(f"{path}: truncated header")
    dims = struct.unpack(f">{ndim}I", raw[4:head])
    size = int(np.prod(dims))
    if len(raw) - head < size:
        raise CorruptFileError(f"{path}: payload has {len(raw) - head} bytes, header says {size}")
    return np.frombuffer(raw, dtype=np.uint8, count=size, offset=head).reshape(dims)


def write_idx(path, array: np.ndarray, compress: Optional[bool] = None) -> None:
    array = np.asarray(array)
    if array.dtype != np.uint8:
        raise DataError("only unsigned-byte IDX files are supported")
    magic = 0x00000800 | array.ndim
    payload = struct.pack(">I", magic) + struct.pack(f">{array.ndim}I", *array.shape)
    payload += array.tobytes(order="C")
    if compress is None:
        compress = str(path).endswith(".gz")
    if compress:
        payload = gzip.compress(payload, mtime=0)
    Path(path).write_bytes(payload)


def even_odd_labels(digits) -> np.ndarray:
    """Even digits map to +1, odd digits to -1."""
    return np.where(np.asarray(digits) % 2 == 0, 1.0, -1.0)


def load_mnist(images_path, labels_path, count: int, seed: int) -> Dataset:
    """``count`` MNIST digits drawn by a seeded shuffle, labelled even/odd.

    Pixels are scaled to [0, 1] and each image is then rescaled to squared
    norm 784.
    """
    images = read_idx(images_path, IDX_IMAGES_MAGIC)
    digits = read_idx(labels_path, IDX_LABELS_MAGIC)
    if images.ndim != 3 or digits.ndim != 1 or images.shape[0] != digits.shape[0]:
        raise DataError("image and label files disagree")
    total = images.shape[0]
    if count < 1 or count > total:
        raise DataError(f"requested {count} examples from a file holding {total}")
    order = seeding.as_generator(seed).permutation(total)[:count]
    X = images[order].reshape(count, -1).astype(float) / 255.0
    return Dataset(normalize_rows(X), even_odd_labels(digits[order]), "mnist_even_odd", seed)


def synthetic_gaussians(n: int, d0: int, separation: float, seed: int) -> Dataset:
    """Two unit-variance spherical clusters at ``+-(separation/2) e_1``, balanced labels."""
    if n < 1 or d0 < 1:
        raise DataError("need n >= 1 and d0 >= 1")
    rng = seeding.as_generator(seed)
    Y = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    X = rng.standard_normal((n, d0))
    X[:, 0] += Y * separation / 2.0
    return Dataset(normalize_rows(X), Y, "synthetic_gaussians", seed)


def synthetic_xor(n: int, d0: int, seed: int) -> Dataset:
    """Label is the sign of ``x_1 * x_2``; not linearly separable."""
    if n < 1 or d0 < 2:
        raise DataError("need n >= 1 and d0 >= 2")
    rng = seeding.as_generator(seed)
    X = rng.standard_normal((n, d0))
    Y = np.where(X[:, 0] * X[:, 1] >= 0, 1.0, -1.0)
    return Dataset(normalize_rows(X), Y, "synthetic_xor", seed)


# --- BPMMAT01 ---------------------------------------------------------------


def save_matrix(path, matrix) -> None:
    M = np.asarray(matrix, dtype="<f8")
    if M.ndim != 2:
        raise DataError("save_matrix takes a 2-d array")
    with open(path, "wb") as fh:
        fh.write(MATRIX_MAGIC)
        fh.write(struct.pack("<QQ", *M.shape))
        fh.write(np.ascontiguousarray(M).tobytes())


def load_matrix(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 24:
        raise CorruptFileError(f"{path}: truncated header")
    if raw[:8] != MATRIX_MAGIC:
        raise CorruptFileError(f"{path}: bad magic {raw[:8]!r}")
    rows, cols = struct.unpack("<QQ", raw[8:24])
    need = rows * cols * 8
    if len(raw) - 24 != need:
        raise CorruptFileError(f"{path}: payload has {len(raw) - 24} bytes, expected {need}")
    return np.frombuffer(raw, dtype="<f8", offset=24).reshape(rows, cols).astype(float)


# --- reports ----------------------------------------------------------------

# keys every record of a kind must carry; values may be null where a quantity
# was not computed for that row
REPORT_SCHEMA = {
    "bounds": (
        "n", "delta", "seed", "jitter_used", "kl_iso",
        "log_inv_py", "log_inv_py_se", "log_inv_py_method", "log_inv_py_draws",
        "gibbs_bound", "bpm_bound_centroid", "bpm_bound_com", "bpm_bound_com_conservative",
        "rademacher_bound", "rademacher_note", "c_bound",
        "gibbs_vacuous", "bpm_centroid_vacuous", "rademacher_vacuous",
    ),
    "eval": (
        "n", "seed", "jitter_used", "test_count", "ensemble",
        "eps_gibbs", "eps_bayes", "eps_bpm", "delta_approx", "alpha_gibbs",
        "bayes_ties", "bpm_ties", "c_bound", "optimistic_bpm_bound",
    ),
    "error": ("n", "seed", "message"),
}


def bounds_record(rep) -> dict:
    est = rep.log_inv_py
    vac = rep.vacuous()
    return {
        "record": "bounds",
        "n": rep.n,
        "delta": rep.delta,
        "seed": rep.seed,
        "jitter_used": rep.jitter_used,
        "kl_iso": rep.kl_iso,
        "log_inv_py": None if est is None else est.log_inv_py,
        "log_inv_py_se": None if est is None else est.std_error,
        "log_inv_py_method": None if est is None else est.method,
        "log_inv_py_draws": None if est is None else est.draws,
        "gibbs_bound": rep.gibbs_bound,
        "bpm_bound_centroid": rep.bpm_bound_centroid,
        "bpm_bound_com": rep.bpm_bound_com,
        "bpm_bound_com_conservative": rep.bpm_bound_com_conservative,
        "rademacher_bound": rep.rademacher_bound,
        "rademacher_note": rep.rademacher_note,
        "c_bound": rep.c_bound,
        "gibbs_vacuous": vac["gibbs_bound"],
        "bpm_centroid_vacuous": vac["bpm_bound_centroid"],
        "rademacher_vacuous": vac["rademacher_bound"],
    }


def eval_record(ev, *, n: int, seed: int, jitter_used: float, ensemble: int, **extra) -> dict:
    from .bounds import c_bound, optimistic_bpm_bound

    cb = ob = None
    if ev.alpha_gibbs > 0:
        cb = c_bound(ev.eps_gibbs, ev.alpha_gibbs)
        ob = optimistic_bpm_bound(ev.eps_gibbs, ev.alpha_gibbs, ev.delta_approx)
    rec = {
        "record": "eval",
        "n": n,
        "seed": seed,
        "jitter_used": jitter_used,
        "test_count": ev.test_count,
        "ensemble": ensemble,
        "eps_gibbs": ev.eps_gibbs,
        "eps_bayes": ev.eps_bayes,
        "eps_bpm": ev.eps_bpm,
        "delta_approx": ev.delta_approx,
        "alpha_gibbs": ev.alpha_gibbs,
        "bayes_ties": ev.bayes_ties,
        "bpm_ties": ev.bpm_ties,
        "c_bound": cb,
        "optimistic_bpm_bound": ob,
    }
    rec.update(extra)
    return rec


def validate_record(rec: dict) -> dict:
    kind = rec.get("record")
    if kind not in REPORT_SCHEMA:
        raise ReportSchemaError(f"unknown record kind {kind!r}")
    missing = [k for k in REPORT_SCHEMA[kind] if k not in rec]
    if missing:
        raise ReportSchemaError(f"{kind} record missing fields: {', '.join(missing)}")
    return rec


def _json_value(v):
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    if isinstance(v, np.generic):
        return v.item()
    return v


def save_report(path, record: dict) -> None:
    """Append one validated record as a JSON line."""
    validate_record(record)
    line = json.dumps({k: _json_value(v) for k, v in record.items()}, sort_keys=False)
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(line + "\n")


def load_reports(path) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ReportSchemaError(f"{path}:{lineno}: not a JSON record") from exc
            for k, v in rec.items():
                if v in ("inf", "-inf", "nan"):
                    rec[k] = float(v)
            out.append(validate_record(rec))
    return out


def write_csv(path, records: Iterable[dict], fields: Optional[list[str]] = None) -> None:
    records = list(records)
    if fields is None:
        fields = []
        for rec in records:
            for k in rec:
                if k not in fields:
                    fields.append(k)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for rec in records:
        w.writerow({k: ("" if rec.get(k) is None else _json_value(rec.get(k))) for k in fields})
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())
    os.replace(tmp, path)
