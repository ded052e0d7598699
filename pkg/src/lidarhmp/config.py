"""Run configuration: a model config plus optimization and bookkeeping keys."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

from .model import DESK, PAPER, ModelConfig


class RunConfigError(ValueError):
    pass


PRESETS = {
    "desk": {**DESK.to_json(), "lr": 1e-4, "batch": 8, "epochs": 300},
    "paper": {**PAPER.to_json(), "lr": 1e-4, "batch": 128, "epochs": 100},
}


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig = DESK
    lr: float = 1e-4
    batch: int = 8
    epochs: int = 300
    seed: int = 0
    preset: str = "desk"
    max_steps: int | None = None  # stop early after this many optimizer steps
    stride: int = 1  # window stride over sequences
    ckpt_every: int = 1  # epochs between checkpoints

    _EXTRA = ("lr", "batch", "epochs", "seed", "preset", "max_steps", "stride", "ckpt_every")

    @classmethod
    def allowed_keys(cls) -> set[str]:
        return {f.name for f in dataclasses.fields(ModelConfig)} | set(cls._EXTRA)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        unknown = set(d) - cls.allowed_keys()
        if unknown:
            raise RunConfigError(f"unknown config keys: {sorted(unknown)}")
        preset = d.get("preset", "desk")
        if preset not in PRESETS:
            raise RunConfigError(f"preset must be one of {sorted(PRESETS)}, got {preset!r}")
        merged = {**PRESETS[preset], **d, "preset": preset}
        model_keys = {f.name for f in dataclasses.fields(ModelConfig)}
        model = ModelConfig.from_json({k: merged[k] for k in model_keys if k in merged})
        try:
            model.validate()
        except ValueError as exc:
            raise RunConfigError(str(exc)) from None
        extra = {k: merged[k] for k in cls._EXTRA if k in merged}
        cfg = cls(model=model, **extra)
        if cfg.batch < 1 or cfg.epochs < 0 or cfg.lr < 0 or cfg.stride < 1:
            raise RunConfigError("batch >= 1, epochs >= 0, lr >= 0 and stride >= 1 required")
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise RunConfigError(f"{path}: invalid JSON ({exc})") from None

    def to_dict(self) -> dict:
        d = self.model.to_json()
        for k in self._EXTRA:
            d[k] = getattr(self, k)
        return d

    def replace(self, **kw) -> "RunConfig":
        model_keys = {f.name for f in dataclasses.fields(ModelConfig)}
        mk = {k: v for k, v in kw.items() if k in model_keys}
        rk = {k: v for k, v in kw.items() if k not in model_keys}
        model = dataclasses.replace(self.model, **mk) if mk else self.model
        return dataclasses.replace(self, model=model, **rk)
