"""Experiment configuration files (YAML).

An experiment is a grid of sampler variants times seeds on one target.
Schema (``?`` marks optional keys)::

    name: str
    description?: str
    target:
      kind: banana | gaussian | gaussian_mixture | sensor
      ...kind-specific parameters (see TARGET_KEYS)
      noise_tau2?: float        # wrap in the log-normal pseudo-marginal target
    initial?:                   # default: the target's prior (sensor only)
      kind: gaussian | prior
      mean?: float or list
      cov?: float, list or matrix
    defaults?: {SamplerConfig fields}   # shared by every variant
    variants:
      - label: str
        sampler: {SamplerConfig fields}
    seeds: [int, ...] or {start: int, count: int}
    reference?:
      kind: none | exact | multistart
      n?: int                    # reference sample size
      seed?: int
      n_chains?, n_iterations?: int   # multistart only
      labels?: none | reflection      # multistart only
    metrics?: [str, ...]         # see METRICS
    metric_options?:
      mode_radius?: float
      burn_in?: int              # iterations dropped from pooled PMC moments
    output_dir?: str
    record_timing?: bool         # false keeps reruns byte-identical
"""

import copy
import difflib
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from ..exceptions import ConfigurationError
from ..smc.sampler import SamplerConfig

__all__ = ["METRICS", "ExperimentConfig", "load_config", "parse_config"]

METRICS = {
    "mmd": "final MMD to the reference (polynomial degree 3, standardized)",
    "mmd_unbiased": "U-statistic MMD^2 of an equally weighted resample vs the reference",
    "mmd_series": "MMD to the reference after every iteration (mmd_t<t>)",
    "log_evidence": "final log evidence estimate",
    "evidence_ratio": "Z_hat / Z for targets with a known normalizer",
    "covariance_rmse": "entrywise RMSE of the estimated covariance vs the exact one",
    "mean_rmse": "RMSE of the estimated mean vs the exact one",
    "mode_coverage": "number of reference modes within mode_radius of a particle",
    "final_ess": "effective sample size after the last iteration",
}
NEEDS_REFERENCE = {"mmd", "mmd_unbiased", "mmd_series", "mode_coverage"}

TARGET_KEYS = {
    "banana": {"dim", "b", "v"},
    "gaussian": {"mean", "cov", "log_scale"},
    "gaussian_mixture": {"weights", "means", "covs", "log_scale"},
    "sensor": {"dataset", "generate"},
}
TOP_KEYS = {"name", "description", "target", "initial", "defaults", "variants", "seeds", "reference", "metrics",
            "metric_options", "output_dir", "record_timing"}
REQUIRED = ("name", "target", "variants", "seeds")
REFERENCE_KEYS = {"kind", "n", "seed", "n_chains", "n_iterations", "labels"}
METRIC_OPTION_KEYS = {"mode_radius", "burn_in"}
SAMPLER_KEYS = {f.name for f in fields(SamplerConfig)}


@dataclass
class Variant:
    label: str
    sampler: SamplerConfig


@dataclass
class ExperimentConfig:
    name: str
    target: dict
    variants: list
    seeds: list
    initial: dict = None
    reference: dict = field(default_factory=lambda: {"kind": "none"})
    metrics: list = field(default_factory=list)
    metric_options: dict = field(default_factory=dict)
    output_dir: str = None
    record_timing: bool = False
    description: str = ""
    base_dir: Path = None
    source: dict = None

    @property
    def labels(self):
        return [v.label for v in self.variants]

    def variant(self, label):
        for v in self.variants:
            if v.label == label:
                return v
        raise KeyError(label)

    def with_seeds(self, seeds):
        out = copy.copy(self)
        out.seeds = [int(s) for s in seeds]
        out.variants = [Variant(v.label, SamplerConfig(**{**vars(v.sampler), "seed": None}))
                        for v in self.variants]
        if out.source is not None:
            out.source = {**out.source, "seeds": out.seeds}
        return out


def _unknown(keys, allowed, where, errs):
    for key in sorted(set(keys) - set(allowed)):
        hint = difflib.get_close_matches(key, sorted(allowed), n=1)
        suffix = f" (did you mean '{hint[0]}'?)" if hint else ""
        errs.append(f"unknown key '{key}' in {where}{suffix}")


def _parse_seeds(raw, errs):
    if isinstance(raw, dict):
        _unknown(raw, {"start", "count"}, "seeds", errs)
        count, start = raw.get("count"), raw.get("start", 0)
        if not isinstance(count, int) or count < 1:
            errs.append("seeds.count must be a positive integer")
            return []
        return list(range(int(start), int(start) + count))
    if isinstance(raw, int):
        raw = [raw]
    if not isinstance(raw, list) or not raw or not all(isinstance(s, int) for s in raw):
        errs.append("seeds must be a nonempty list of integers or {start, count}")
        return []
    if len(set(raw)) != len(raw):
        errs.append("seeds must be unique")
    return list(raw)


def _check_target(spec, errs):
    if not isinstance(spec, dict):
        errs.append("target must be a mapping")
        return
    kind = spec.get("kind")
    if kind not in TARGET_KEYS:
        errs.append(f"unknown target kind '{kind}'; choose from {sorted(TARGET_KEYS)}")
        return
    _unknown(set(spec) - {"kind", "noise_tau2"}, TARGET_KEYS[kind], f"target ({kind})", errs)
    if "noise_tau2" in spec and not (isinstance(spec["noise_tau2"], (int, float)) and spec["noise_tau2"] >= 0):
        errs.append("target.noise_tau2 must be >= 0")
    if kind == "banana":
        if int(spec.get("dim", 8)) < 2:
            errs.append("banana dim must be >= 2")
        if not spec.get("v", 100.0) > 0:
            errs.append("banana v must be > 0")
    elif kind == "gaussian" and "mean" not in spec:
        errs.append("missing required field 'target.mean'")
    elif kind == "gaussian_mixture":
        for key in ("weights", "means", "covs"):
            if key not in spec:
                errs.append(f"missing required field 'target.{key}'")
    elif kind == "sensor" and ("dataset" in spec) == ("generate" in spec):
        errs.append("sensor target needs exactly one of 'dataset' or 'generate'")


def parse_config(data, base_dir=None):
    """Validate a parsed YAML mapping; raises listing every violation."""
    if not isinstance(data, dict):
        raise ConfigurationError("experiment config must be a mapping")
    errs = []
    _unknown(data, TOP_KEYS, "experiment", errs)
    for key in REQUIRED:
        if key not in data:
            errs.append(f"missing required field '{key}'")
    if "target" in data:
        _check_target(data["target"], errs)
    seeds = _parse_seeds(data["seeds"], errs) if "seeds" in data else []

    initial = data.get("initial")
    if initial is not None:
        if not isinstance(initial, dict) or initial.get("kind") not in ("gaussian", "prior"):
            errs.append("initial.kind must be 'gaussian' or 'prior'")
        else:
            _unknown(initial, {"kind", "mean", "cov"}, "initial", errs)
    elif isinstance(data.get("target"), dict) and data["target"].get("kind") != "sensor":
        errs.append("missing required field 'initial' (only sensor targets default to their prior)")

    defaults = data.get("defaults") or {}
    if not isinstance(defaults, dict):
        errs.append("defaults must be a mapping of sampler options")
        defaults = {}
    _unknown(defaults, SAMPLER_KEYS, "defaults", errs)

    variants = []
    raw_variants = data.get("variants", [])
    if "variants" in data and (not isinstance(raw_variants, list) or not raw_variants):
        errs.append("variants must be a nonempty list")
        raw_variants = []
    for i, raw in enumerate(raw_variants):
        where = f"variants[{i}]"
        if not isinstance(raw, dict):
            errs.append(f"{where} must be a mapping")
            continue
        _unknown(raw, {"label", "sampler"}, where, errs)
        label = raw.get("label")
        sampler = raw.get("sampler") or {}
        if label is None:
            errs.append(f"missing required field '{where}.label'")
            label = f"variant{i}"
        where = f"variant '{label}'"
        if "algorithm" not in sampler and "algorithm" not in defaults:
            errs.append(f"missing required field 'algorithm' in {where}")
            continue
        merged = {**defaults, **sampler}
        _unknown(merged, SAMPLER_KEYS, where, errs)
        merged = {k: v for k, v in merged.items() if k in SAMPLER_KEYS}
        if isinstance(merged.get("rho"), list):
            merged["rho"] = tuple(merged["rho"])
        try:
            cfg = SamplerConfig(**merged)
        except TypeError as exc:
            errs.append(f"{where}: {exc}")
            continue
        errs.extend(f"{where}: {p}" for p in cfg.problems())
        variants.append(Variant(str(label), cfg))
    labels = [v.label for v in variants]
    dupes = sorted({lab for lab in labels if labels.count(lab) > 1})
    if dupes:
        errs.append(f"variant labels must be unique; repeated: {', '.join(dupes)}")

    reference = dict(data.get("reference") or {"kind": "none"})
    _unknown(reference, REFERENCE_KEYS, "reference", errs)
    reference.setdefault("kind", "none")
    if reference["kind"] not in ("none", "exact", "multistart"):
        errs.append(f"unknown reference kind '{reference['kind']}'")
    if reference.get("labels", "none") not in ("none", "reflection", None):
        errs.append("reference.labels must be 'none' or 'reflection'")
    for key in ("n", "n_chains", "n_iterations"):
        if key in reference and not (isinstance(reference[key], int) and reference[key] >= 2):
            errs.append(f"reference.{key} must be an integer >= 2")

    metrics = data.get("metrics") or []
    if not isinstance(metrics, list):
        errs.append("metrics must be a list")
        metrics = []
    for m in metrics:
        if m not in METRICS:
            hint = difflib.get_close_matches(str(m), sorted(METRICS), n=1)
            errs.append(f"unknown metric '{m}'" + (f" (did you mean '{hint[0]}'?)" if hint else ""))
    if set(metrics) & NEEDS_REFERENCE and reference["kind"] == "none":
        errs.append(f"metrics {sorted(set(metrics) & NEEDS_REFERENCE)} need a reference sample")
    if "mmd_series" in metrics:
        for v in variants:
            v.sampler.keep_history = True
    options = data.get("metric_options") or {}
    _unknown(options, METRIC_OPTION_KEYS, "metric_options", errs)
    if "mode_coverage" in metrics and not options.get("mode_radius", 0) > 0:
        errs.append("metric mode_coverage needs metric_options.mode_radius > 0")

    if errs:
        raise ConfigurationError("invalid experiment config:\n  - " + "\n  - ".join(errs))
    if {"covariance_rmse", "mean_rmse"} & set(metrics):
        for v in variants:
            if v.sampler.algorithm in ("RW-PMC", "GRIS", "KGRIS"):
                v.sampler.keep_history = True
    return ExperimentConfig(
        name=str(data["name"]),
        target=dict(data["target"]),
        variants=variants,
        seeds=seeds,
        initial=initial,
        reference=reference,
        metrics=list(metrics),
        metric_options=dict(options),
        output_dir=data.get("output_dir"),
        record_timing=bool(data.get("record_timing", False)),
        description=str(data.get("description", "")),
        base_dir=Path(base_dir) if base_dir is not None else None,
        source=data,
    )


def load_config(path):
    """Read and validate an experiment YAML file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"could not parse {path}: {exc}") from exc
    return parse_config(data, base_dir=path.parent)

