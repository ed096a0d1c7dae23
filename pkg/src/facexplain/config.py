"""Run configuration: TOML on disk, one normalized dict in memory.

All relative paths are resolved against the config file's own directory.
Validation reports every problem it finds, not just the first; loading a
config applies defaults so every stochastic stage carries an explicit seed
and the normalized dict round-trips losslessly through run.json.
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigValidationError
from .semantics import FillStrategy

try:
    import tomllib
except ModuleNotFoundError:  # py310
    import tomli as tomllib

__all__ = ["RunConfig", "DEFAULTS"]

DEFAULTS: dict = {
    "model": {"kind": "synthetic", "dim": 16, "seed": 11, "offset_scale": 0.05, "weights": []},
    "semantics": {"set": "set2"},
    "data": {"manifest": "", "pairs": ""},
    "methods": {
        "names": ["eaoc", "lime", "kernelshap"],
        "eaoc": {"groups": 0, "seed": 5},
        "lime": {"samples": 512, "kernel_width": 0.25, "ridge": 1e-3, "seed": 5, "norm": 1},
        "kernelshap": {"mode": "auto", "samples": 2048, "seed": 5, "value_fn": "single"},
    },
    "occlusion": {"fill": "gray"},
    "output": {"dir": "out"},
    "evaluation": {"target": "representation", "trials": 20, "seed": 13, "rankings": []},
    "explain": {"top_k": 10, "ranking": ""},
    "llm": {
        "base_url": "",
        "model": "",
        "api_key_env": "LLM_API_KEY",
        "temperature": 0.2,
        "timeout": 30.0,
        "retries": 2,
        "fixtures": "llm-fixtures",
    },
}

_KNOWN_METHODS = ("eaoc", "lime", "kernelshap")
_GENERATE_DEFAULTS = {
    "count": 48, "pairs": 24, "seed": 7, "width": 64, "height": 64,
    "grid_rows": 1, "grid_cols": 13, "intensities": "varied",
}


def _merge(defaults: dict, override: dict) -> dict:
    out = copy.deepcopy(defaults)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


@dataclass
class RunConfig:
    raw: dict
    base_dir: Path

    @classmethod
    def from_toml(cls, path: str | Path) -> "RunConfig":
        path = Path(path).resolve()
        try:
            parsed = tomllib.loads(path.read_text())
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise ConfigValidationError([f"{path}: cannot parse TOML ({exc})"]) from exc
        return cls.from_dict(parsed, base_dir=path.parent)

    @classmethod
    def from_dict(cls, parsed: dict, base_dir: str | Path) -> "RunConfig":
        raw = _merge(DEFAULTS, parsed)
        if "generate" in raw.get("data", {}):
            raw["data"]["generate"] = _merge(_GENERATE_DEFAULTS, raw["data"]["generate"])
        return cls(raw=raw, base_dir=Path(base_dir).resolve())

    def resolve(self, relpath: str) -> Path:
        p = Path(relpath)
        return p if p.is_absolute() else (self.base_dir / p)

    def to_dict(self) -> dict:
        return {"base_dir": str(self.base_dir), "config": copy.deepcopy(self.raw)}

    @classmethod
    def from_run_record(cls, record: dict) -> "RunConfig":
        return cls(raw=copy.deepcopy(record["config"]), base_dir=Path(record["base_dir"]))

    # -- validation ---------------------------------------------------------

    def problems(self) -> list[str]:
        cfg = self.raw
        issues: list[str] = []

        model = cfg["model"]
        if model["kind"] not in ("synthetic", "onnx"):
            issues.append(f"model.kind: expected 'synthetic' or 'onnx', got '{model['kind']}'")
        if model["kind"] == "onnx":
            for key in ("path", "input_name", "output_name"):
                if not model.get(key):
                    issues.append(f"model.{key}: required for ONNX models")
            if model.get("path") and not self.resolve(model["path"]).exists():
                issues.append(f"model.path: file not found: {self.resolve(model['path'])}")

        sset = cfg["semantics"]["set"]
        if sset not in ("set0", "set1", "set2") and not self.resolve(sset).exists():
            issues.append(f"semantics.set: neither a built-in id nor an existing file: '{sset}'")

        data = cfg["data"]
        generate = data.get("generate")
        if generate:
            for key in ("count", "pairs", "seed", "width", "height", "grid_rows", "grid_cols"):
                if not isinstance(generate.get(key), int) or generate[key] < 0:
                    issues.append(f"data.generate.{key}: must be a nonnegative integer")
            if generate.get("count", 0) < 2:
                issues.append("data.generate.count: need at least 2 images")
            if generate.get("intensities") not in ("varied", "uniform"):
                issues.append("data.generate.intensities: expected varied|uniform")
        else:
            if not data.get("manifest"):
                issues.append("data.manifest: required unless data.generate is present")
            elif not self.resolve(data["manifest"]).exists():
                issues.append(f"data.manifest: file not found: {self.resolve(data['manifest'])}")
            if data.get("pairs") and not self.resolve(data["pairs"]).exists():
                issues.append(f"data.pairs: file not found: {self.resolve(data['pairs'])}")
            if data.get("calibration_manifest") and not self.resolve(data["calibration_manifest"]).exists():
                issues.append(
                    f"data.calibration_manifest: file not found: {self.resolve(data['calibration_manifest'])}"
                )

        names = cfg["methods"]["names"]
        if not names:
            issues.append("methods.names: at least one method required")
        for name in names:
            if name not in _KNOWN_METHODS:
                issues.append(f"methods.names: unknown method '{name}' (choose from {_KNOWN_METHODS})")
        for method in _KNOWN_METHODS:
            if "seed" not in cfg["methods"][method]:
                issues.append(f"methods.{method}.seed: every stochastic stage needs a seed")
        if cfg["methods"]["kernelshap"].get("mode") not in ("auto", "exact", "sampled"):
            issues.append("methods.kernelshap.mode: expected auto|exact|sampled")
        if cfg["methods"]["kernelshap"].get("value_fn") not in ("single", "pair"):
            issues.append("methods.kernelshap.value_fn: expected single|pair")

        try:
            FillStrategy.parse(cfg["occlusion"]["fill"])
        except Exception:
            issues.append(f"occlusion.fill: unknown strategy '{cfg['occlusion']['fill']}'")

        ev = cfg["evaluation"]
        if ev["target"] not in ("representation", "similarity"):
            issues.append(f"evaluation.target: expected representation|similarity, got '{ev['target']}'")
        if not isinstance(ev["trials"], int) or ev["trials"] < 1:
            issues.append("evaluation.trials: must be a positive integer")
        if "seed" not in ev:
            issues.append("evaluation.seed: every stochastic stage needs a seed")
        for ranking in ev.get("rankings", []):
            if not self.resolve(ranking).exists():
                issues.append(f"evaluation.rankings: file not found: {self.resolve(ranking)}")

        explain = cfg["explain"]
        if explain.get("ranking") not in ("", "uniform") and not self.resolve(explain["ranking"]).exists():
            issues.append(f"explain.ranking: file not found: {self.resolve(explain['ranking'])}")
        if not isinstance(explain.get("top_k"), int) or explain["top_k"] < 1:
            issues.append("explain.top_k: must be a positive integer")

        return issues

    def validate(self) -> None:
        issues = self.problems()
        if issues:
            raise ConfigValidationError(issues)

    # -- accessors ----------------------------------------------------------

    @property
    def output_dir(self) -> Path:
        return self.resolve(self.raw["output"]["dir"])

    @property
    def fill(self) -> FillStrategy:
        return FillStrategy.parse(self.raw["occlusion"]["fill"])


def write_run_record(path: Path, *, command: str, config: RunConfig, params: dict,
                     created: str, version: str) -> None:
    record = {
        "tool": "facexplain",
        "version": version,
        "command": command,
        "created": created,
        "params": params,
        **config.to_dict(),
    }
    path.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")


def read_run_record(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())
