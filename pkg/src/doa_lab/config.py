"""YAML experiment configs and bundled figure presets.

A config is a mapping with a ``command`` key naming the CLI subcommand and
one section per ingredient (``scenario``, ``sweep``, ``kappa``, ...). See the
README for the schema; every bundled preset under ``presets/`` is a worked
example.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import yaml

from .array_model import SOURCE_MODES, ArrayScenario

PRESET_DIR = Path(__file__).with_name("presets")
COMMANDS = ("mp-hist", "mse-sweep", "kappa", "clt-check", "unconditional-compare", "spikes")


class ConfigError(ValueError):
    """Malformed or inconsistent experiment config."""


def list_presets() -> List[str]:
    return sorted(p.stem for p in PRESET_DIR.glob("*.yaml"))


def resolve_config_path(path_or_name: str) -> Path:
    """A filesystem path, or the name of a bundled preset."""
    p = Path(path_or_name)
    if p.is_file():
        return p
    preset = PRESET_DIR / f"{path_or_name}.yaml"
    if preset.is_file():
        return preset
    raise ConfigError(f"no config file or preset named {path_or_name!r} (presets: {', '.join(list_presets())})")


def config_hash(cfg: Dict[str, Any]) -> str:
    """Short SHA-256 of the canonical JSON form of a config."""
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class LoadedConfig:
    name: str
    path: Path
    data: Dict[str, Any]
    digest: str

    @property
    def command(self) -> str:
        return self.data["command"]

    def section(self, key: str, required: bool = True) -> Dict[str, Any]:
        sec = self.data.get(key)
        if sec is None:
            if required:
                raise ConfigError(f"{self.name}: missing section {key!r}")
            return {}
        if not isinstance(sec, dict):
            raise ConfigError(f"{self.name}: section {key!r} must be a mapping")
        return sec


def load_config(path_or_name: str) -> LoadedConfig:
    path = resolve_config_path(path_or_name)
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    cmd = data.get("command")
    if cmd not in COMMANDS:
        raise ConfigError(f"{path}: command must be one of {COMMANDS}, got {cmd!r}")
    return LoadedConfig(path.stem, path, data, config_hash(data))


def _check_keys(sec: Dict[str, Any], allowed: Sequence[str], where: str):
    extra = set(sec) - set(allowed)
    if extra:
        raise ConfigError(f"{where}: unknown keys {sorted(extra)}")


SCENARIO_KEYS = ("M", "N", "doas", "doas_beamwidths", "close", "source_cov", "noise_power", "sources", "seed")


def scenario_from(sec: Dict[str, Any]) -> ArrayScenario:
    """Build an :class:`ArrayScenario` from a ``scenario`` section.

    DoAs are given by exactly one of ``doas`` (radians), ``doas_beamwidths``
    (multiples of ``2 pi / M``) or ``close: {theta1, alpha}`` /
    ``close: {theta1, beamwidths}``; the last form fixes the spacing scale
    ``alpha`` so that the second DoA sits ``alpha / N`` from the first.
    """
    _check_keys(sec, SCENARIO_KEYS, "scenario")
    try:
        M, N = int(sec["M"]), int(sec["N"])
    except KeyError as exc:
        raise ConfigError(f"scenario: missing {exc.args[0]!r}") from None
    given = [k for k in ("doas", "doas_beamwidths", "close") if k in sec]
    if len(given) != 1:
        raise ConfigError("scenario: give exactly one of doas, doas_beamwidths, close")
    kw: Dict[str, Any] = {}
    if "doas" in sec:
        kw["doas"] = tuple(float(x) for x in sec["doas"])
    elif "doas_beamwidths" in sec:
        kw["doas"] = tuple(float(x) * 2.0 * np.pi / M for x in sec["doas_beamwidths"])
    else:
        close = sec["close"]
        _check_keys(close, ("theta1", "alpha", "beamwidths"), "scenario.close")
        if ("alpha" in close) == ("beamwidths" in close):
            raise ConfigError("scenario.close: give exactly one of alpha, beamwidths")
        alpha = float(close["alpha"]) if "alpha" in close else N * float(close["beamwidths"]) * 2.0 * np.pi / M
        kw["spacing"] = (float(close.get("theta1", 0.0)), alpha)
    if "source_cov" in sec:
        kw["source_cov"] = np.array(sec["source_cov"], dtype=complex)
    sources = sec.get("sources", "gaussian")
    if sources not in SOURCE_MODES:
        raise ConfigError(f"scenario.sources must be one of {SOURCE_MODES}")
    try:
        return ArrayScenario(M=M, N=N, noise_power=float(sec.get("noise_power", 1.0)),
                             seed=int(sec.get("seed", 0)), sources=sources, **kw)
    except ValueError as exc:
        raise ConfigError(f"scenario: {exc}") from exc


def snr_grid(spec) -> np.ndarray:
    """``[a, b, ...]`` or ``{start, stop, step}`` (stop inclusive)."""
    if isinstance(spec, dict):
        _check_keys(spec, ("start", "stop", "step"), "snr_db")
        start, stop, step = float(spec["start"]), float(spec["stop"]), float(spec.get("step", 1.0))
        if step <= 0 or stop < start:
            raise ConfigError("snr_db: need step > 0 and stop >= start")
        n = int(np.floor((stop - start) / step + 1e-9)) + 1
        return start + step * np.arange(n)
    if isinstance(spec, (int, float)):
        return np.array([float(spec)])
    try:
        return np.array([float(x) for x in spec])
    except TypeError:
        raise ConfigError(f"snr_db: cannot parse {spec!r}") from None


@dataclass
class RunConfig:
    """Resolved CLI invocation: config plus command-line overrides."""

    subcommand: str
    config: LoadedConfig
    out_dir: Path
    trials: Optional[int] = None
    seed: Optional[int] = None
    threads: Optional[int] = None
    svg: bool = False
    extra: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.out_dir = Path(self.out_dir)
        if self.config.command != self.subcommand:
            raise ConfigError(
                f"config {self.config.name!r} is for {self.config.command!r}, not {self.subcommand!r}"
            )
        probe = self.out_dir / ".write-test"
        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            probe.write_text("")
            probe.unlink()
        except OSError as exc:
            raise ConfigError(f"output directory {self.out_dir} is not writable ({exc})") from exc

    def trials_or(self, default: int) -> int:
        n = self.trials if self.trials is not None else int(default)
        if n < 1:
            raise ConfigError("trials must be >= 1")
        return n

    def seed_or(self, default: int) -> int:
        s = self.seed if self.seed is not None else int(default)
        if not 0 <= s < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        return s
