"""Run configuration: one JSON document plus ``--set key=value`` overrides.

Relative paths inside a config file resolve against the file's directory.
"""
from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .dataset import WindowSpec
from .errors import ConfigInvalid
from .evaluate import EvalConfig
from .ingest import UniverseRules
from .preprocess import PreprocessConfig
from .svm import SvmConfig
from .synth import SynthSpec

PATH_KEYS = ("fundamentals", "prices", "index", "meta", "announcements")
EXECUTION_KEYS = ("output_dir", "workers")


def default_config() -> dict:
    return {
        "paths": {k: None for k in PATH_KEYS},
        "universe": dataclasses.asdict(UniverseRules()),
        "preprocess": dataclasses.asdict(PreprocessConfig()),
        "window": {"prediction_year": None, "lookback": 5, "train_years": 5, "horizon_months": 3},
        "svm": {**dataclasses.asdict(SvmConfig()), "solver": SvmConfig().solver.value},
        "search": {"grid_search": True, "grid_exponents": list(range(-4, 5)), "ratio": 0.9},
        "realization_count": 100,
        "master_seed": 0,
        "workers": 1,
        "output_dir": "out",
        "synth": {**dataclasses.asdict(SynthSpec()), "signal_features": [0, 1, 2], "seed": None},
        "sweep": {"ratios": [0.5, 0.6, 0.7, 0.8, 0.9], "realizations": 20},
    }


def _merge(base: dict, override: dict, where="") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key not in out:
            raise ConfigInvalid(f"unknown config key {where}{key}")
        if isinstance(out[key], dict) and isinstance(value, dict):
            out[key] = _merge(out[key], value, f"{where}{key}.")
        else:
            out[key] = value
    return out


def parse_override(text: str) -> tuple[list[str], object]:
    if "=" not in text:
        raise ConfigInvalid(f"--set expects key=value, got {text!r}")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip().split("."), value


def apply_override(doc: dict, keys: list[str], value) -> None:
    node = doc
    for k in keys[:-1]:
        if not isinstance(node.get(k), dict):
            raise ConfigInvalid(f"unknown config key {'.'.join(keys)}")
        node = node[k]
    if keys[-1] not in node:
        raise ConfigInvalid(f"unknown config key {'.'.join(keys)}")
    node[keys[-1]] = value


@dataclass
class RunConfig:
    doc: dict = field(default_factory=default_config)
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def load(cls, path=None, overrides=(), seed=None, out=None) -> RunConfig:
        doc = default_config()
        base = Path.cwd()
        if path is not None:
            path = Path(path)
            try:
                user = json.loads(path.read_text(encoding="utf-8"))
            except FileNotFoundError:
                raise ConfigInvalid(f"config file not found: {path}") from None
            except json.JSONDecodeError as exc:
                raise ConfigInvalid(f"config file is not valid JSON: {exc}") from None
            if not isinstance(user, dict):
                raise ConfigInvalid("config root must be an object")
            doc = _merge(doc, user)
            base = path.resolve().parent
        for item in overrides:
            apply_override(doc, *parse_override(item))
        if seed is not None:
            doc["master_seed"] = int(seed)
        if out is not None:
            doc["output_dir"] = str(Path(out).resolve())
        cfg = cls(doc, base)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        try:
            self.universe_rules()
            self.preprocess_config()
            self.eval_config()
            seed = int(self.doc["master_seed"])
            if not 0 <= seed < 2 ** 64:
                raise ValueError("master_seed must be an unsigned 64-bit integer")
            if int(self.doc["realization_count"]) < 1:
                raise ValueError("realization_count must be >= 1")
        except (TypeError, ValueError) as exc:
            raise ConfigInvalid(f"invalid configuration: {exc}") from None

    @property
    def master_seed(self) -> int:
        return int(self.doc["master_seed"])

    @property
    def realization_count(self) -> int:
        return int(self.doc["realization_count"])

    @property
    def output_dir(self) -> Path:
        return self.resolve(self.doc["output_dir"])

    def resolve(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    def path(self, key: str) -> Path:
        value = self.doc["paths"].get(key)
        if not value:
            raise ConfigInvalid(f"paths.{key} is not set")
        p = self.resolve(value)
        if not p.exists():
            raise ConfigInvalid(f"paths.{key} does not exist: {p}")
        return p

    def universe_rules(self) -> UniverseRules:
        return UniverseRules(**self.doc["universe"])

    def preprocess_config(self) -> PreprocessConfig:
        return PreprocessConfig(**self.doc["preprocess"])

    def window_spec(self, default_year: int) -> WindowSpec:
        w = dict(self.doc["window"])
        if w.get("prediction_year") is None:
            w["prediction_year"] = default_year
        try:
            return WindowSpec(**w)
        except (TypeError, ValueError) as exc:
            raise ConfigInvalid(f"invalid window: {exc}") from None

    def svm_config(self) -> SvmConfig:
        return SvmConfig(**self.doc["svm"])

    def eval_config(self) -> EvalConfig:
        s = self.doc["search"]
        return EvalConfig(
            svm=self.svm_config(),
            ratio=float(s["ratio"]),
            grid_search=bool(s["grid_search"]),
            grid_exponents=tuple(int(e) for e in s["grid_exponents"]),
            workers=int(self.doc["workers"]),
        )

    def synth_spec(self) -> SynthSpec:
        s = dict(self.doc["synth"])
        if s.get("seed") is None:
            s["seed"] = self.master_seed
        s["signal_features"] = tuple(s["signal_features"])
        try:
            return SynthSpec(**s)
        except TypeError as exc:
            raise ConfigInvalid(f"invalid synth section: {exc}") from None

    def canonical(self) -> str:
        """Canonical JSON of the result-affecting settings (no output_dir, no workers)."""
        doc = {k: v for k, v in self.doc.items() if k not in EXECUTION_KEYS}
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()
