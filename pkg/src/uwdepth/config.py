"""Single-file pipeline configuration aggregating every tunable."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import FileFormatError, ParameterError
from .imaging import BlurConfig
from .losses import DistillConfig, LossConfig
from .enhancement import SharpenConfig


@dataclass(frozen=True)
class PipelineConfig:
    """All pipeline hyperparameters, parseable from one JSON file.

    ``paths`` is an optional string map callers may use as defaults for CLI
    path flags.
    """

    loss: LossConfig = LossConfig()
    tgam_blur: BlurConfig = BlurConfig(k=2, sigma=1.5)
    tgam_beta: float = 0.98
    tgam_epsilon: float = 5.0
    distill: DistillConfig = DistillConfig()
    sharpen: SharpenConfig = SharpenConfig()
    rotation_gamma: float = 15.0
    smoothness_weight: float = 1e-3
    attenuation_frame_stride: int = 20
    paths: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (0.0 < self.tgam_beta < 1.0):
            raise ParameterError("tgam_beta must be in (0, 1)")
        if not (0.0 < self.tgam_epsilon < 100.0):
            raise ParameterError("tgam_epsilon must be in (0, 100)")
        if self.rotation_gamma < 0:
            raise ParameterError("rotation_gamma must be >= 0")
        if self.smoothness_weight < 0:
            raise ParameterError("smoothness_weight must be >= 0")
        if self.attenuation_frame_stride < 1:
            raise ParameterError("attenuation_frame_stride must be >= 1")

    def to_json(self) -> dict:
        return {
            "loss": {"alpha": self.loss.alpha, "ssim_window": self.loss.ssim_window,
                     "ssim_c1": self.loss.ssim_c1, "ssim_c2": self.loss.ssim_c2},
            "tgam": {"blur_k": self.tgam_blur.k, "blur_sigma": self.tgam_blur.sigma,
                     "beta": self.tgam_beta, "epsilon": self.tgam_epsilon},
            "distill": {"tau": self.distill.tau, "lambda0": self.distill.lambda0,
                        "decay_steps": self.distill.decay_steps},
            "sharpen": {"lowpass_k": self.sharpen.lowpass.k,
                        "lowpass_sigma": self.sharpen.lowpass.sigma},
            "rotation_gamma": self.rotation_gamma,
            "smoothness_weight": self.smoothness_weight,
            "attenuation_frame_stride": self.attenuation_frame_stride,
            "paths": dict(self.paths),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PipelineConfig":
        defaults = cls()
        loss_o = obj.get("loss", {})
        tgam_o = obj.get("tgam", {})
        dist_o = obj.get("distill", {})
        sharp_o = obj.get("sharpen", {})
        return cls(
            loss=LossConfig(
                alpha=loss_o.get("alpha", defaults.loss.alpha),
                ssim_window=loss_o.get("ssim_window", defaults.loss.ssim_window),
                ssim_c1=loss_o.get("ssim_c1", defaults.loss.ssim_c1),
                ssim_c2=loss_o.get("ssim_c2", defaults.loss.ssim_c2)),
            tgam_blur=BlurConfig(k=tgam_o.get("blur_k", defaults.tgam_blur.k),
                                 sigma=tgam_o.get("blur_sigma",
                                                  defaults.tgam_blur.sigma)),
            tgam_beta=tgam_o.get("beta", defaults.tgam_beta),
            tgam_epsilon=tgam_o.get("epsilon", defaults.tgam_epsilon),
            distill=DistillConfig(
                tau=dist_o.get("tau", defaults.distill.tau),
                lambda0=dist_o.get("lambda0", defaults.distill.lambda0),
                decay_steps=dist_o.get("decay_steps", defaults.distill.decay_steps)),
            sharpen=SharpenConfig(
                lowpass=BlurConfig(
                    k=sharp_o.get("lowpass_k", defaults.sharpen.lowpass.k),
                    sigma=sharp_o.get("lowpass_sigma",
                                      defaults.sharpen.lowpass.sigma))),
            rotation_gamma=obj.get("rotation_gamma", defaults.rotation_gamma),
            smoothness_weight=obj.get("smoothness_weight",
                                      defaults.smoothness_weight),
            attenuation_frame_stride=obj.get("attenuation_frame_stride",
                                             defaults.attenuation_frame_stride),
            paths=obj.get("paths", {}),
        )

    @classmethod
    def load(cls, path: str | Path | None) -> "PipelineConfig":
        if path is None:
            return cls()
        try:
            with open(path) as fh:
                obj = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise FileFormatError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(obj, dict):
            raise FileFormatError(f"config must hold a JSON object: {path}")
        return cls.from_json(obj)

    def save(self, path: str | Path):
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")
