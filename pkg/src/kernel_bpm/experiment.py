"""Experiment pipelines behind the command line: bounds sweeps, classifier
comparisons and posterior sampling over an n-grid.

Seeds: the dataset uses ``derive(seed, 0)``; grid point ``i`` uses the unit seed
``derive(seed, i + 1)`` and draws each of its random streams from
``generator(unit, k)`` with a fixed stream number ``k`` per purpose. Every
output row records both seeds.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Optional

import numpy as np

from . import bounds, data, seeding
from .classifier import (
    coefficients,
    ensemble_interpolants,
    evaluate,
    gibbs_votes,
    predictive_variances,
    sign,
)
from .gram import factorize, geometric_mean_eigenvalue, rkhs_norm_sq
from .kernel import KernelSpec, gram_matrix, kernel_matrix
from .orthant import complexity_A, orthant_ghk
from .sampler import (
    ChainMeta,
    PosteriorSamples,
    centre_of_mass_labels,
    sample_gp_orthant_gibbs,
    sample_iso_orthant,
)

log = logging.getLogger(__name__)

STREAM_ISO = 0
STREAM_NOISE = 1
STREAM_GHK = 2
STREAM_CHAIN = 3

DEFAULT_MNIST_DIR = Path(__file__).resolve().parents[2] / "data" / "mnist5k"


class ConfigError(ValueError):
    pass


@dataclass
class DatasetConfig:
    source: str = "mnist_even_odd"
    images: Optional[str] = None
    labels: Optional[str] = None
    d0: int = 16
    separation: float = 4.0


@dataclass
class KernelConfig:
    kind: str = "arccosine"
    depth: int = 7
    lengthscale: float = 1.0


@dataclass
class ExperimentConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    kernel: KernelConfig = field(default_factory=KernelConfig)
    n_grid: list = field(default_factory=lambda: [100, 200, 500, 1000])
    test_count: int = 1000
    delta: float = 0.1
    ensemble: int = 1000
    burn_in: int = 100
    thinning: int = 10
    chains: Optional[int] = None
    ycom_cap: int = 200
    ghk_draws: int = 10_000
    seed: int = 0
    out_dir: str = "runs"
    posterior: str = "iso"

    def validate(self) -> "ExperimentConfig":
        grid = list(self.n_grid)
        if not grid:
            raise ConfigError("n_grid is empty")
        if any(not isinstance(n, int) or n < 2 for n in grid):
            raise ConfigError("n_grid entries must be integers >= 2")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError("n_grid must be strictly increasing")
        for name in ("test_count", "ensemble", "thinning", "ghk_draws"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.burn_in < 0 or self.ycom_cap < 0:
            raise ConfigError("burn_in and ycom_cap must be non-negative")
        if not 0.0 < self.delta < 1.0:
            raise ConfigError("delta must lie in (0, 1)")
        if self.posterior not in ("iso", "gp"):
            raise ConfigError("posterior must be 'iso' or 'gp'")
        if self.dataset.source not in ("mnist_even_odd", "synthetic_gaussians", "synthetic_xor"):
            raise ConfigError(f"unknown dataset source {self.dataset.source!r}")
        try:
            self.kernel_spec(784 if self.dataset.source == "mnist_even_odd" else self.dataset.d0)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return self

    def kernel_spec(self, d0: int) -> KernelSpec:
        k = self.kernel
        return KernelSpec(k.kind, d0, depth=k.depth, lengthscale=k.lengthscale)


def _build(cls, raw: dict):
    names = {f.name for f in fields(cls)}
    unknown = set(raw) - names
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {', '.join(sorted(unknown))}")
    return cls(**raw)


def config_from_dict(raw: dict) -> ExperimentConfig:
    raw = dict(raw)
    ds = _build(DatasetConfig, raw.pop("dataset", {}) or {})
    kc = _build(KernelConfig, raw.pop("kernel", {}) or {})
    cfg = _build(ExperimentConfig, raw)
    cfg.dataset = ds
    cfg.kernel = kc
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    return config_from_dict(raw)


def config_dict(cfg: ExperimentConfig) -> dict:
    return asdict(cfg)


# --- data -------------------------------------------------------------------


def load_dataset(cfg: ExperimentConfig) -> tuple[data.Dataset, data.Dataset]:
    """Test set first, then a nested training pool large enough for the grid."""
    total = max(cfg.n_grid) + cfg.test_count
    dseed = seeding.derive(cfg.seed, 0)
    ds = cfg.dataset
    if ds.source == "mnist_even_odd":
        images = Path(ds.images) if ds.images else DEFAULT_MNIST_DIR / "images-idx3-ubyte.gz"
        labels = Path(ds.labels) if ds.labels else DEFAULT_MNIST_DIR / "labels-idx1-ubyte.gz"
        full = data.load_mnist(images, labels, total, dseed)
    elif ds.source == "synthetic_gaussians":
        full = data.synthetic_gaussians(total, ds.d0, ds.separation, dseed)
    else:
        full = data.synthetic_xor(total, ds.d0, dseed)
    test, pool = full.split(cfg.test_count)
    return test, pool


def _unit_seed(cfg: ExperimentConfig, i: int) -> int:
    return seeding.derive(cfg.seed, i + 1)


# --- pipelines --------------------------------------------------------------


def bounds_row(cfg: ExperimentConfig, train: data.Dataset, unit: int) -> dict:
    n = train.n
    spec = cfg.kernel_spec(train.d0)
    f = factorize(gram_matrix(spec, train.X))
    A = complexity_A(f, train.Y)
    est = None
    if n <= cfg.ycom_cap:
        est = orthant_ghk(f, train.Y, cfg.ghk_draws, seeding.generator(unit, STREAM_GHK))
    rep = bounds.bound_report(
        n=n,
        delta=cfg.delta,
        A=A,
        rkhs_norm_sq_Y=rkhs_norm_sq(f, train.Y),
        jitter_used=f.jitter_used,
        orthant=est,
        seed=unit,
    )
    rec = data.bounds_record(rep)
    rec["data_seed"] = seeding.derive(cfg.seed, 0)
    return rec


def compare_eval(cfg: ExperimentConfig, train: data.Dataset, test: data.Dataset, unit: int):
    """Evaluate the ensemble and the centroidal BPM on the test set; returns (eval, extras)."""
    n = train.n
    spec = cfg.kernel_spec(train.d0)
    f = factorize(gram_matrix(spec, train.X))
    KtX = kernel_matrix(spec, test.X, train.X)
    var, clamped = predictive_variances(spec, f, train.X, test.X, KtX=KtX)
    if cfg.posterior == "iso":
        post = sample_iso_orthant(
            geometric_mean_eigenvalue(f), train.Y, cfg.ensemble, seeding.generator(unit, STREAM_ISO)
        )
    else:
        post = sample_gp_orthant_gibbs(
            f, train.Y, cfg.ensemble, cfg.burn_in, cfg.thinning,
            seed=seeding.derive(unit, STREAM_CHAIN), chains=cfg.chains,
        )
    votes = gibbs_votes(ensemble_interpolants(f, post, KtX), var, seeding.generator(unit, STREAM_NOISE))
    centroid = KtX @ coefficients(f, train.Y)
    ev = evaluate(test.Y, votes, sign(centroid), bpm_ties=int(np.count_nonzero(centroid == 0)))

    extra: dict[str, Any] = {
        "jitter_used": f.jitter_used,
        "data_seed": seeding.derive(cfg.seed, 0),
        "posterior": cfg.posterior,
        "variance_clamped": clamped,
        "eps_bpm_com": None,
        "ycom_samples": None,
    }
    if n <= cfg.ycom_cap:
        chain = post if cfg.posterior == "gp" else sample_gp_orthant_gibbs(
            f, train.Y, cfg.ensemble, cfg.burn_in, cfg.thinning,
            seed=seeding.derive(unit, STREAM_CHAIN), chains=cfg.chains,
        )
        com_pred = sign(KtX @ coefficients(f, centre_of_mass_labels(chain)))
        extra["eps_bpm_com"] = math.fsum(com_pred != test.Y) / test.n
        extra["ycom_samples"] = chain.m
    return ev, extra


def compare_row(cfg: ExperimentConfig, train: data.Dataset, test: data.Dataset, unit: int) -> dict:
    ev, extra = compare_eval(cfg, train, test, unit)
    jitter = extra.pop("jitter_used")
    return data.eval_record(ev, n=train.n, seed=unit, jitter_used=jitter, ensemble=cfg.ensemble, **extra)


def _run_grid(cfg: ExperimentConfig, name: str, row_fn) -> list[dict]:
    cfg.validate()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jsonl = out / f"{name}.jsonl"
    if jsonl.exists():
        jsonl.unlink()
    test, pool = load_dataset(cfg)
    rows = []
    for i, n in enumerate(cfg.n_grid):
        unit = _unit_seed(cfg, i)
        train = pool.subset(np.arange(n))
        try:
            rec = row_fn(cfg, train, test, unit)
        except (ValueError, ArithmeticError, RuntimeError, np.linalg.LinAlgError) as exc:
            log.error("n=%d failed: %s", n, exc)
            rec = {"record": "error", "n": n, "seed": unit, "message": str(exc)}
        data.save_report(jsonl, rec)
        rows.append(rec)
        log.info("%s n=%d done", name, n)
    data.write_csv(out / f"{name}.csv", [r for r in rows if r["record"] != "error"])
    return rows


def run_bounds(cfg: ExperimentConfig) -> list[dict]:
    return _run_grid(cfg, "bounds", lambda c, tr, te, u: bounds_row(c, tr, u))


def run_compare(cfg: ExperimentConfig) -> list[dict]:
    return _run_grid(cfg, "compare", compare_row)


def run_sample(cfg: ExperimentConfig, n: Optional[int] = None) -> Path:
    """Draw a posterior sample matrix for one training size and persist it."""
    cfg.validate()
    n = n or cfg.n_grid[0]
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _, pool = load_dataset(replace(cfg, n_grid=[max(n, 2)]))
    train = pool.subset(np.arange(n))
    unit = seeding.derive(cfg.seed, 1)
    f = factorize(gram_matrix(cfg.kernel_spec(train.d0), train.X))
    if cfg.posterior == "iso":
        post = sample_iso_orthant(
            geometric_mean_eigenvalue(f), train.Y, cfg.ensemble, seeding.generator(unit, STREAM_ISO)
        )
    else:
        post = sample_gp_orthant_gibbs(
            f, train.Y, cfg.ensemble, cfg.burn_in, cfg.thinning,
            seed=seeding.derive(unit, STREAM_CHAIN), chains=cfg.chains,
        )
    path = out / f"samples_{cfg.posterior}_n{n}.bpmmat"
    data.save_matrix(path, post.samples)
    meta = {
        "posterior_kind": post.posterior_kind,
        "n": n,
        "m": post.m,
        "Y": post.Y.astype(int).tolist(),
        "chain_meta": asdict(post.chain_meta),
        "data_seed": seeding.derive(cfg.seed, 0),
        "jitter_used": f.jitter_used,
    }
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2) + "\n")
    return path


def load_samples(path):
    """Reload a persisted sample matrix with its sidecar metadata."""
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    return PosteriorSamples(
        data.load_matrix(path),
        meta["posterior_kind"],
        np.asarray(meta["Y"], dtype=float),
        ChainMeta(**meta["chain_meta"]),
    )
