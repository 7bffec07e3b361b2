"""Depth evaluation: median scaling and the seven standard error/accuracy metrics."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DegenerateInputError, ParameterError
from .imaging import DepthMap


@dataclass(frozen=True)
class MetricReport:
    """Error metrics (lower better) and threshold accuracies (higher better)."""

    abs_rel: float
    sq_rel: float
    rmse: float
    rmse_log: float
    delta1: float
    delta2: float
    delta3: float
    n_valid: int

    def to_json(self) -> dict:
        return asdict(self)

    def table_row(self, label: str = "") -> str:
        cells = [f"{v:10.3f}" for v in (self.abs_rel, self.sq_rel, self.rmse,
                                        self.rmse_log, self.delta1, self.delta2,
                                        self.delta3)]
        prefix = f"{label:<24s}" if label else ""
        return prefix + "".join(cells)

    @staticmethod
    def table_header(label_col: bool = False) -> str:
        names = ["Abs Rel", "Sq Rel", "RMSE", "RMSE log",
                 "d<1.25", "d<1.25^2", "d<1.25^3"]
        prefix = " " * 24 if label_col else ""
        return prefix + "".join(f"{n:>10s}" for n in names)


def _joint_mask(pred: DepthMap, gt: DepthMap) -> np.ndarray:
    if pred.depth.shape != gt.depth.shape:
        raise ParameterError("prediction/ground-truth shape mismatch")
    return pred.valid & gt.valid & (pred.depth > 0) & (gt.depth > 0)


def median_scale(pred: DepthMap, gt: DepthMap) -> DepthMap:
    """Rescale the prediction so its median matches the ground truth's.

    Medians are taken over jointly-valid positive pixels; the ratio is
    applied to the whole map, removing the global scale ambiguity of
    monocular predictions.
    """
    joint = _joint_mask(pred, gt)
    if not joint.any():
        raise ParameterError("no jointly-valid pixels for median scaling")
    med_pred = float(np.median(pred.depth[joint]))
    if med_pred <= 0:
        raise DegenerateInputError("prediction median is not positive",
                                   median=med_pred)
    scale = float(np.median(gt.depth[joint])) / med_pred
    return DepthMap(pred.depth * scale, pred.valid)


def depth_metrics(pred: DepthMap, gt: DepthMap) -> MetricReport:
    """Compute all seven metrics over jointly-valid positive pixels.

    Accuracy thresholds use a strict max(p/g, g/p) < 1.25^i comparison.
    """
    joint = _joint_mask(pred, gt)
    if not joint.any():
        raise ParameterError("no jointly-valid pixels for evaluation")
    p = pred.depth[joint]
    g = gt.depth[joint]

    diff = p - g
    abs_rel = float(np.mean(np.abs(diff) / g))
    sq_rel = float(np.mean(diff ** 2 / g))
    rmse = math.sqrt(float(np.mean(diff ** 2)))
    rmse_log = math.sqrt(float(np.mean((np.log(p) - np.log(g)) ** 2)))
    ratio = np.maximum(p / g, g / p)
    return MetricReport(
        abs_rel=abs_rel,
        sq_rel=sq_rel,
        rmse=rmse,
        rmse_log=rmse_log,
        delta1=float(np.mean(ratio < 1.25)),
        delta2=float(np.mean(ratio < 1.25 ** 2)),
        delta3=float(np.mean(ratio < 1.25 ** 3)),
        n_valid=int(joint.sum()),
    )
