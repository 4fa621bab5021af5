"""Execute an experiment grid and write its CSV tables.

Layout of the output directory::

    runs/<run_id>/record.csv      per-iteration diagnostics of one run
    runs/<run_id>/particles.csv   final weighted particles
    runs/<run_id>/metrics.csv     metric rows of one run
    runs.csv, particles.csv, metrics.csv   the per-run files merged
    aggregate.csv                 per-variant median / quartiles / IQR of every metric
    failures.csv                  runs that raised, with the reason
    manifest.json                 config hash, seeds, versions, failure count
"""

import csv
import hashlib
import json
import os
import re
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from ..benchmarks import exact_reference, multistart_reference
from ..diagnostics import MMDReference, covariance_rmse, mode_coverage, pooled_moments, weighted_moments
from ..exceptions import ConfigurationError
from ..smc.particles import ess, resample
from ..smc.sampler import RUN_COLUMNS, run
from ..targets import (
    BananaTarget,
    GaussianMixtureTarget,
    GaussianTarget,
    NoisyTarget,
    SensorNetworkTarget,
    generate_sensor_dataset,
)
from .config import ExperimentConfig
from .presets import PRESET_DIR

__all__ = [
    "AGGREGATE_STATS",
    "METRIC_COLUMNS",
    "ExperimentResult",
    "aggregate_metrics",
    "build_initial",
    "build_reference",
    "build_target",
    "resolve_output_dir",
    "run_experiment",
]

METRIC_COLUMNS = ("run_id", "metric", "value", "n_ref", "seed")
FAILURE_COLUMNS = ("run_id", "variant", "seed", "error")
AGGREGATE_STATS = ("median", "q25", "q75", "iqr")
OUTPUT_ENV = "KSMC_OUTPUT_DIR"


def _resolve_file(name, base_dir):
    path = Path(name)
    candidates = [path] if path.is_absolute() else [
        *([Path(base_dir) / path] if base_dir is not None else []), Path.cwd() / path, PRESET_DIR / path,
    ]
    for c in candidates:
        if c.is_file():
            return c
    raise ConfigurationError(f"dataset file not found: {name}")


def build_target(spec, base_dir=None):
    """Instantiate the target described by a validated ``target`` mapping."""
    kind = spec["kind"]
    if kind == "banana":
        target = BananaTarget(int(spec.get("dim", 8)), float(spec.get("b", 0.1)), float(spec.get("v", 100.0)))
    elif kind == "gaussian":
        target = GaussianTarget(spec["mean"], spec.get("cov"), float(spec.get("log_scale", 0.0)))
    elif kind == "gaussian_mixture":
        target = GaussianMixtureTarget(spec["weights"], spec["means"], spec["covs"],
                                       float(spec.get("log_scale", 0.0)))
    elif kind == "sensor":
        if "dataset" in spec:
            target, _ = SensorNetworkTarget.load(_resolve_file(spec["dataset"], base_dir))
        else:
            gen = dict(spec["generate"])
            target, _ = generate_sensor_dataset(
                gen.pop("n_unknown"), gen.pop("n_bases", 2), random_state=gen.pop("seed", None), **gen
            )
    else:
        raise ConfigurationError(f"unknown target kind '{kind}'")
    if spec.get("noise_tau2") is not None:
        target = NoisyTarget(target, float(spec["noise_tau2"]))
    return target


def build_initial(spec, target):
    if spec is None or spec.get("kind") == "prior":
        inner = getattr(target, "inner", target)
        prior = getattr(inner, "prior", None)
        if prior is None:
            raise ConfigurationError("this target has no prior; give an explicit 'initial'")
        return prior
    d = target.dim
    mean = np.broadcast_to(np.asarray(spec.get("mean", 0.0), dtype=float), (d,))
    return GaussianTarget(mean, spec.get("cov", 1.0))


def _exact_moments(target):
    inner = getattr(target, "inner", target)
    if isinstance(inner, BananaTarget):
        return inner.mean(), inner.covariance()
    if isinstance(inner, GaussianTarget):
        return inner.mean, inner.cov
    if isinstance(inner, GaussianMixtureTarget):
        w = inner.weights
        mu = np.array([c.mean for c in inner.components])
        covs = np.array([c.cov for c in inner.components])
        mean = w @ mu
        dev = mu - mean
        cov = np.einsum("k,kij->ij", w, covs) + np.einsum("k,ki,kj->ij", w, dev, dev)
        return mean, cov
    raise ConfigurationError(f"no exact moments for {type(inner).__name__}")


def build_reference(cfg, target):
    ref = cfg.reference
    kind = ref.get("kind", "none")
    seed = ref.get("seed", 12345)
    if kind == "none":
        return None
    inner = getattr(target, "inner", target)
    if kind == "exact":
        return exact_reference(inner, ref.get("n", 100000), seed)
    labels = ref.get("labels")
    return multistart_reference(
        inner, ref.get("n", 10000), n_chains=ref.get("n_chains", 100),
        n_iterations=ref.get("n_iterations", 50000),
        labels="reflection" if labels == "reflection" else None, random_state=seed,
    )


def _slug(text):
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", text)


def _run_id(label, seed):
    return f"{_slug(label)}-seed{seed}"


def _metric_rows(cfg, record, target, reference, scorer, seed, run_id):
    rows = []
    n_ref = reference.n if reference is not None else 0
    ps = record.particles
    opts = cfg.metric_options

    def add(name, value, with_ref=False):
        rows.append({"run_id": run_id, "metric": name, "value": float(value),
                     "n_ref": n_ref if with_ref else 0, "seed": seed})

    for metric in cfg.metrics:
        if metric == "mmd":
            add("mmd", scorer.score(ps.X, ps.weights).value, True)
        elif metric == "mmd_unbiased":
            flat = resample(ps, "systematic", np.random.default_rng([seed, 1]))
            add("mmd_unbiased", scorer.score(flat.X, estimator="unbiased").mmd2, True)
        elif metric == "mmd_series":
            for t, (X, logw) in enumerate(record.history, start=1):
                w = np.exp(logw - np.max(logw))
                add(f"mmd_t{t}", scorer.score(X, w).value, True)
        elif metric == "log_evidence":
            add("log_evidence", record.log_evidence)
        elif metric == "evidence_ratio":
            log_z = getattr(target, "log_normalizer", None)
            if log_z is None:
                raise ConfigurationError("evidence_ratio needs a target with a known normalizer")
            add("evidence_ratio", np.exp(record.log_evidence - log_z))
        elif metric in ("covariance_rmse", "mean_rmse"):
            true_mean, true_cov = _exact_moments(target)
            if record.history and record.algorithm in ("RW-PMC", "GRIS", "KGRIS"):
                mean, cov = pooled_moments(record.history, burn_in=int(opts.get("burn_in", 0)))
            else:
                mean, cov = weighted_moments(ps)
            if metric == "covariance_rmse":
                add(metric, covariance_rmse(cov, true_cov))
            else:
                add(metric, np.sqrt(np.mean((mean - true_mean) ** 2)))
        elif metric == "mode_coverage":
            add("mode_coverage", mode_coverage(ps, reference.modes, float(opts["mode_radius"])), True)
        elif metric == "final_ess":
            add("final_ess", ess(ps))
    return rows


def _write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for k, v in row.items()})


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# Worker state, set once per process so large references are not re-sent per run.
_STATE = {}


def _init_worker(cfg, reference):
    target = build_target(cfg.target, cfg.base_dir)
    _STATE.update(
        cfg=cfg,
        target=target,
        initial=build_initial(cfg.initial, target),
        reference=reference,
        scorer=MMDReference(reference.samples) if reference is not None else None,
    )


def _execute(task):
    label, seed, run_dir = task
    cfg, target = _STATE["cfg"], _STATE["target"]
    variant = cfg.variant(label)
    run_id = _run_id(label, seed)
    try:
        record = run(variant.sampler, target, _STATE["initial"], random_state=seed,
                     record_timing=cfg.record_timing)
        rows = record.rows(run_id)
        metrics = _metric_rows(cfg, record, target, _STATE["reference"], _STATE["scorer"], seed, run_id)
    except Exception as exc:  # recorded, the grid carries on
        msg = f"{type(exc).__name__}: {exc}"
        if not isinstance(exc, (ConfigurationError, ArithmeticError, ValueError, RuntimeError)):
            msg += " | " + traceback.format_exc(limit=3).replace("\n", " ")
        return {"run_id": run_id, "variant": label, "seed": seed, "error": msg}
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    _write_csv(run_dir / "record.csv", RUN_COLUMNS, rows)
    parts = record.particle_rows(run_id)
    _write_csv(run_dir / "particles.csv", list(parts[0]) if parts else ["run_id", "particle_id", "weight"], parts)
    _write_csv(run_dir / "metrics.csv", METRIC_COLUMNS, metrics)
    return None


def aggregate_metrics(metric_rows, run_variant):
    """Per-variant median, quartiles and IQR of every metric.

    ``metric_rows`` are dicts with ``run_id``, ``metric`` and ``value``;
    ``run_variant`` maps run ids to variant labels. Returns
    ``(columns, rows)`` with one row per variant.
    """
    order, values = [], {}
    for row in metric_rows:
        name = row["metric"]
        if name not in order:
            order.append(name)
        variant = run_variant[row["run_id"]]
        values.setdefault((variant, name), []).append(float(row["value"]))
    columns = ["variant"] + [f"{m}_{s}" for m in order for s in AGGREGATE_STATS]
    out = []
    for variant in dict.fromkeys(run_variant.values()):
        row = {"variant": variant}
        for m in order:
            vals = values.get((variant, m))
            if vals:
                q25, med, q75 = np.percentile(vals, [25, 50, 75])
                row.update({f"{m}_median": float(med), f"{m}_q25": float(q25),
                            f"{m}_q75": float(q75), f"{m}_iqr": float(q75 - q25)})
            else:
                row.update({f"{m}_{s}": "" for s in AGGREGATE_STATS})
        out.append(row)
    return columns, out


@dataclass
class ExperimentResult:
    output_dir: Path
    n_runs: int
    failures: list = field(default_factory=list)

    @property
    def exit_status(self):
        return 0 if not self.failures else 1

    def path(self, name):
        return self.output_dir / name


def resolve_output_dir(cfg, output_dir=None):
    """``output_dir`` argument, else ``$KSMC_OUTPUT_DIR/<name>``, else the config's, else ``results/<name>``."""
    if output_dir is not None:
        return Path(output_dir)
    env = os.environ.get(OUTPUT_ENV)
    if env:
        return Path(env) / _slug(cfg.name)
    if cfg.output_dir:
        out = Path(cfg.output_dir)
        return out if out.is_absolute() or cfg.base_dir is None else Path.cwd() / out
    return Path("results") / _slug(cfg.name)


def config_hash(cfg):
    canonical = json.dumps(cfg.source, sort_keys=True, default=str)
    return hashlib.sha256(canonical.encode()).hexdigest()


def run_experiment(cfg: ExperimentConfig, output_dir=None, threads=1, progress=None, reference=None):
    """Run every (variant, seed) pair of ``cfg`` and write the CSV tables.

    Parameters
    ----------
    threads : int
        Worker processes for run-level parallelism. Every run is seeded by
        its own seed, so results do not depend on this value.
    progress : callable, optional
        ``progress(done, total)`` after every finished run.
    reference : ReferenceSample, optional
        Use this instead of building the configured reference.
    """
    out = resolve_output_dir(cfg, output_dir)
    out.mkdir(parents=True, exist_ok=True)
    target = build_target(cfg.target, cfg.base_dir)
    build_initial(cfg.initial, target)
    if reference is None:
        reference = build_reference(cfg, target)

    tasks = [(v.label, seed, str(out / "runs" / _run_id(v.label, seed)))
             for v in cfg.variants for seed in cfg.seeds]
    failures = []
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads, initializer=_init_worker,
                                 initargs=(cfg, reference)) as pool:
            for done, result in enumerate(pool.map(_execute, tasks), start=1):
                if result is not None:
                    failures.append(result)
                if progress:
                    progress(done, len(tasks))
    else:
        _init_worker(cfg, reference)
        for done, task in enumerate(tasks, start=1):
            result = _execute(task)
            if result is not None:
                failures.append(result)
            if progress:
                progress(done, len(tasks))

    failed = {f["run_id"] for f in failures}
    runs, particles, metrics = [], [], []
    particle_columns = None
    run_variant = {}
    for label, seed, run_dir in tasks:
        run_id = _run_id(label, seed)
        if run_id in failed:
            continue
        run_variant[run_id] = label
        run_dir = Path(run_dir)
        runs.extend(_read_csv(run_dir / "record.csv"))
        p = _read_csv(run_dir / "particles.csv")
        if p and particle_columns is None:
            particle_columns = list(p[0])
        particles.extend(p)
        metrics.extend(_read_csv(run_dir / "metrics.csv"))
    _write_csv(out / "runs.csv", RUN_COLUMNS, runs)
    _write_csv(out / "particles.csv", particle_columns or ["run_id", "particle_id", "weight"], particles)
    _write_csv(out / "metrics.csv", METRIC_COLUMNS, metrics)
    columns, agg = aggregate_metrics(metrics, run_variant)
    _write_csv(out / "aggregate.csv", columns, agg)
    _write_csv(out / "failures.csv", FAILURE_COLUMNS, failures)

    manifest = {
        "experiment": cfg.name,
        "config_hash": config_hash(cfg),
        "seeds": list(cfg.seeds),
        "variants": cfg.labels,
        "software_version": __version__,
        "numpy_version": np.__version__,
        "reference": {
            "kind": cfg.reference.get("kind", "none"),
            "n": reference.n if reference is not None else 0,
            "seed": cfg.reference.get("seed", 12345),
            "n_modes": reference.n_modes if reference is not None else 0,
        },
        "n_runs": len(tasks),
        "n_failed": len(failures),
        "exit_status": 0 if not failures else 1,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return ExperimentResult(out, len(tasks), failures)
