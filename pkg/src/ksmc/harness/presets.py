"""Shipped experiment configurations."""

import difflib
import textwrap
from pathlib import Path

import yaml

from ..exceptions import ConfigurationError
from .config import load_config

__all__ = ["PRESET_DIR", "describe_preset", "list_presets", "load_preset", "preset_path"]

PRESET_DIR = Path(__file__).resolve().parent.parent / "presets"


def list_presets():
    """Names of the shipped presets, sorted."""
    return sorted(p.stem for p in PRESET_DIR.glob("*.yaml"))


def preset_path(name):
    path = PRESET_DIR / f"{name}.yaml"
    if not path.is_file():
        names = list_presets()
        hint = difflib.get_close_matches(str(name), names, n=3, cutoff=0.4)
        msg = f"unknown preset '{name}'"
        if hint:
            msg += f"; did you mean {', '.join(repr(h) for h in hint)}?"
        raise ConfigurationError(f"{msg}\navailable presets: {', '.join(names)}")
    return path


def load_preset(name):
    return load_config(preset_path(name))


def describe_preset(name):
    """Human-readable summary: description, variants, seeds and metrics."""
    path = preset_path(name)
    data = yaml.safe_load(path.read_text())
    cfg = load_config(path)
    lines = [cfg.name, ""]
    lines += textwrap.wrap(" ".join(str(data.get("description", "")).split()), 76)
    lines += ["", f"target:   {cfg.target['kind']}  " + ", ".join(
        f"{k}={v}" for k, v in cfg.target.items() if k != "kind")]
    for v in cfg.variants:
        s = v.sampler
        lines.append(f"variant:  {v.label}  ({s.algorithm}, N={s.n_particles}, T={s.n_iterations})")
    lines.append(f"seeds:    {len(cfg.seeds)} ({cfg.seeds[0]}..{cfg.seeds[-1]})")
    lines.append(f"metrics:  {', '.join(cfg.metrics) or '-'}")
    if cfg.reference.get("kind", "none") != "none":
        lines.append(f"reference: {cfg.reference['kind']}, n={cfg.reference.get('n')}")
    return "\n".join(lines)
