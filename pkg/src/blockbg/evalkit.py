"""Background-quality metrics, Gaussian foreground segmentation and a median baseline."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

EP_THRESHOLD = 20


def _same_shape(a, b, what="images"):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"{what} differ in geometry: {a.shape} vs {b.shape}")
    return a, b


def _abs_diff(estimate, truth) -> np.ndarray:
    estimate, truth = _same_shape(estimate, truth)
    return np.abs(estimate.astype(np.float64) - truth.astype(np.float64))


def age(estimate, truth) -> float:
    """Average grey-level error: mean absolute pixel difference."""
    return float(_abs_diff(estimate, truth).mean())


def error_pixels(estimate, truth, threshold: float = EP_THRESHOLD) -> tuple[int, np.ndarray]:
    """Pixels whose absolute error is strictly greater than ``threshold``."""
    mask = _abs_diff(estimate, truth) > threshold
    return int(mask.sum()), mask


def clustered_error_pixels(mask) -> int:
    """Error pixels whose in-bounds 4-connected neighbours are all error pixels."""
    mask = np.asarray(mask, dtype=bool)
    padded = np.pad(mask, 1, constant_values=True)
    clustered = (mask & padded[:-2, 1:-1] & padded[2:, 1:-1]
                 & padded[1:-1, :-2] & padded[1:-1, 2:])
    return int(clustered.sum())


@dataclass
class EvalReport:
    age: float
    ep_count: int
    cep_count: int
    ep_threshold: float = EP_THRESHOLD

    def as_dict(self) -> dict:
        return {"age": self.age, "ep": self.ep_count, "cep": self.cep_count,
                "ep_threshold": self.ep_threshold}


def evaluate_background(estimate, truth, threshold: float = EP_THRESHOLD) -> EvalReport:
    eps, mask = error_pixels(estimate, truth, threshold)
    return EvalReport(age=age(estimate, truth), ep_count=eps,
                      cep_count=clustered_error_pixels(mask), ep_threshold=threshold)


def average_reports(reports) -> dict:
    """Mean of AGE, EP and CEP over several reports (sub-sequence protocol)."""
    reports = list(reports)
    return {
        "age": float(np.mean([r.age for r in reports])),
        "ep": float(np.mean([r.ep_count for r in reports])),
        "cep": float(np.mean([r.cep_count for r in reports])),
        "ep_threshold": reports[0].ep_threshold,
    }


@dataclass
class SegmentationScore:
    tp: int
    fp: int
    fn: int

    @property
    def similarity(self) -> float:
        denom = self.tp + self.fp + self.fn
        return self.tp / denom if denom else 0.0

    def __add__(self, other: "SegmentationScore") -> "SegmentationScore":
        return SegmentationScore(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)

    def as_dict(self) -> dict:
        return {**asdict(self), "similarity": self.similarity}


def similarity(predicted, truth) -> SegmentationScore:
    """Pixel counts of true positives, false positives and false negatives.

    ``tp / (tp + fp + fn)`` is exposed as ``.similarity`` (0 when nothing is
    positive in either mask).
    """
    predicted, truth = _same_shape(predicted, truth, "masks")
    predicted = predicted.astype(bool)
    truth = truth.astype(bool)
    return SegmentationScore(
        tp=int(np.count_nonzero(predicted & truth)),
        fp=int(np.count_nonzero(predicted & ~truth)),
        fn=int(np.count_nonzero(~predicted & truth)),
    )


def gaussian_segment(frame, mean, variance, k: float = 2.5, var_floor: float = 4.0) -> np.ndarray:
    """Foreground where ``(x - mean)**2 > k**2 * max(variance, var_floor)``."""
    frame, mean = _same_shape(frame, mean)
    variance = np.broadcast_to(np.asarray(variance, dtype=np.float64), mean.shape)
    diff = frame.astype(np.float64) - mean.astype(np.float64)
    return diff * diff > k * k * np.maximum(variance, var_floor)


def direct_gaussian_model(frames) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel temporal mean and population variance of a training sequence."""
    stack = np.asarray(getattr(frames, "frames", frames), dtype=np.float64)
    return stack.mean(axis=0), stack.var(axis=0)


def segment_sequence(frames, mean, variance, truth_masks=None, k: float = 2.5,
                     var_floor: float = 4.0):
    """Segment every frame; returns ``(masks, score)``, score ``None`` without truth.

    ``mean`` and ``variance`` may cover a cropped region (whole blocks only);
    frames and truth masks are cropped to match.
    """
    mean = np.asarray(mean)
    h, w = mean.shape
    masks = []
    total = SegmentationScore(0, 0, 0)
    for index, frame in enumerate(frames):
        mask = gaussian_segment(np.asarray(frame)[:h, :w], mean, variance, k, var_floor)
        masks.append(mask)
        if truth_masks is not None:
            total = total + similarity(mask, np.asarray(truth_masks[index])[:h, :w])
    return masks, (total if truth_masks is not None else None)


def median_oracle(frames) -> np.ndarray:
    """Per-pixel temporal median; an even count averages the middle pair, rounding half up."""
    stack = np.asarray(getattr(frames, "frames", frames))
    if stack.shape[0] < 1:
        raise ValueError("median of an empty sequence")
    med = np.median(stack.astype(np.float64), axis=0)
    return np.clip(np.floor(med + 0.5), 0, 255).astype(np.uint8)
