"""Per-node representative sets built sequentially from incoming frames.

Every node keeps a small list of distinct block clusters. An incoming block
joins the best-correlated cluster that also lies within the noise threshold
on mean absolute difference; otherwise it starts a new cluster.

The scalar helpers (:func:`correlation`, :func:`mad`,
:func:`match_representative`, :func:`update_representative`) define the
rules. :class:`SceneModel` applies the same rules to all nodes of a frame at
once.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EstimationError, GeometryError
from .frame_io import FrameSequence, NodeGrid, tile_blocks

FLAT_SIGMA = 1e-9
T2_FLOOR = 0.5
DEFAULT_T1 = 0.8
TRAINING_FRAMES = 100


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"label dimensions differ: {a.size} vs {b.size}")
    return a, b


def correlation(a, b) -> float:
    """Pearson correlation of two equally sized blocks.

    Flat blocks (population std below ``1e-9``) correlate 1 with each other
    and 0 with anything textured.
    """
    a, b = _pair(a, b)
    ac = a - a.mean()
    bc = b - b.mean()
    na = math.sqrt(ac @ ac)
    nb = math.sqrt(bc @ bc)
    root = math.sqrt(a.size)
    flat_a = na / root < FLAT_SIGMA
    flat_b = nb / root < FLAT_SIGMA
    if flat_a and flat_b:
        return 1.0
    if flat_a or flat_b:
        return 0.0
    return min(1.0, max(-1.0, float(ac @ bc) / (na * nb)))


def mad(a, b) -> float:
    """Mean absolute difference between two equally sized blocks."""
    a, b = _pair(a, b)
    return float(np.abs(a - b).mean())


@dataclass
class Representative:
    mean: np.ndarray
    variance: float = 0.0
    weight: int = 1

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64).ravel()
        if self.weight < 1:
            raise ValueError("a representative needs weight >= 1")
        if self.variance < 0:
            raise ValueError("variance must be non-negative")

    @property
    def pixel_variance(self) -> float:
        """Per-pixel share of the summed block variance."""
        return self.variance / self.mean.size


@dataclass
class RepresentativeSet:
    reps: list[Representative] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.reps)

    def __getitem__(self, index) -> Representative:
        return self.reps[index]

    def __iter__(self):
        return iter(self.reps)

    @property
    def weights(self) -> np.ndarray:
        return np.array([r.weight for r in self.reps], dtype=np.int64)

    @property
    def total_weight(self) -> int:
        return int(sum(r.weight for r in self.reps))


@dataclass
class NoiseThresholds:
    t1: float = DEFAULT_T1
    t2: float = 2.0
    q31_mean: float = float("nan")
    q31_std: float = float("nan")

    def __post_init__(self):
        if not 0 < self.t1 <= 1:
            raise ValueError(f"t1 must lie in (0, 1], got {self.t1}")
        if not self.t2 > 0:
            raise ValueError(f"t2 must be positive, got {self.t2}")


def interquartile_threshold(points) -> tuple[float, float, float]:
    """Return ``(t2, mean, std)`` from the middle half of the sorted points.

    Points with sorted index in ``[floor(n/4), floor(3n/4)]`` are kept; the
    threshold is twice the mean plus two population standard deviations.
    """
    points = np.sort(np.asarray(points, dtype=np.float64).ravel())
    n = points.size
    if n == 0:
        raise EstimationError("no MAD points to estimate the noise threshold from")
    lo, hi = int(math.floor(0.25 * n)), int(math.floor(0.75 * n))
    kept = points[lo : min(hi, n - 1) + 1]
    mu = float(kept.mean())
    sd = float(kept.std())
    return 2.0 * (mu + 2.0 * sd), mu, sd


def successive_mads(frames, grid: NodeGrid) -> np.ndarray:
    """MAD between co-located labels of each pair of consecutive frames."""
    points = []
    previous = tile_blocks(frames[0], grid).astype(np.float64)
    for frame in frames[1:]:
        current = tile_blocks(frame, grid).astype(np.float64)
        points.append(np.abs(current - previous).mean(axis=1))
        previous = current
    return np.concatenate(points)


def estimate_noise_threshold(frames, grid: NodeGrid, t1: float = DEFAULT_T1,
                             training_frames: int = TRAINING_FRAMES) -> NoiseThresholds:
    """Estimate the MAD threshold from the first ``min(F, training_frames)`` frames."""
    if isinstance(frames, FrameSequence):
        frames = frames.frames
    length = min(len(frames), training_frames)
    if length < 2:
        raise EstimationError("noise threshold estimation needs at least 2 frames")
    t2, mu, sd = interquartile_threshold(successive_mads(frames[:length], grid))
    if t2 <= 0:
        t2 = T2_FLOOR
    return NoiseThresholds(t1=t1, t2=t2, q31_mean=mu, q31_std=sd)


def match_representative(rep_set: RepresentativeSet, label,
                         thresholds: NoiseThresholds) -> int | None:
    """Index of the best-correlated representative passing both similarity tests."""
    best, best_corr = None, -math.inf
    for index, rep in enumerate(rep_set):
        corr = correlation(rep.mean, label)
        if corr > thresholds.t1 and mad(rep.mean, label) < thresholds.t2 and corr > best_corr:
            best, best_corr = index, corr
    return best


def update_representative(rep: Representative, label) -> Representative:
    """Fold one more matching block into a representative's running statistics."""
    label = np.asarray(label, dtype=np.float64).ravel()
    w = rep.weight
    diff = label - rep.mean
    return Representative(
        mean=rep.mean + diff / (w + 1),
        variance=(w - 1) / w * rep.variance + float(diff @ diff) / (w + 1),
        weight=w + 1,
    )


class SceneModel:
    """Representative sets for every node of a grid.

    Storage is a padded array of shape ``(nodes, capacity, N*N)``; node
    ``k`` owns slots ``[0, counts[k])``. Capacity grows a slot at a time.
    """

    def __init__(self, grid: NodeGrid, thresholds: NoiseThresholds, fps: float = 25.0,
                 capacity: int = 1):
        self.grid = grid
        self.thresholds = thresholds
        self.fps = float(fps)
        nodes, dim = grid.node_count, grid.dim
        capacity = max(1, capacity)
        self.means = np.zeros((nodes, capacity, dim))
        self.variances = np.zeros((nodes, capacity))
        self.weights = np.zeros((nodes, capacity), dtype=np.int64)
        self.counts = np.zeros(nodes, dtype=np.int64)
        # centred L2 norm of each stored mean, kept in step with ``means``
        self._norms = np.zeros((nodes, capacity))
        self.frames_ingested = 0
        self.peak_model_bytes = 0
        self.peak_allocated_bytes = self.allocated_bytes

    @property
    def capacity(self) -> int:
        return self.means.shape[1]

    @property
    def node_count(self) -> int:
        return self.grid.node_count

    def node_index(self, row: int, col: int) -> int:
        return row * self.grid.cols + col

    def set_sizes(self) -> np.ndarray:
        """Number of representatives per node as a ``(rows, cols)`` array."""
        return self.counts.reshape(self.grid.shape).copy()

    def rep_set(self, row: int, col: int) -> RepresentativeSet:
        k = self.node_index(row, col)
        return RepresentativeSet([
            Representative(self.means[k, s].copy(), float(self.variances[k, s]), int(self.weights[k, s]))
            for s in range(self.counts[k])
        ])

    def set_node(self, row: int, col: int, rep_set: RepresentativeSet) -> None:
        k = self.node_index(row, col)
        self._ensure_capacity(len(rep_set))
        self.counts[k] = len(rep_set)
        for s, rep in enumerate(rep_set):
            self.means[k, s] = rep.mean
            self.variances[k, s] = rep.variance
            self.weights[k, s] = rep.weight
            self._norms[k, s] = _centred_norm(rep.mean)
        self._track_memory()

    def weight_slice(self, k: int) -> np.ndarray:
        return self.weights[k, : self.counts[k]]

    @property
    def total_reps(self) -> int:
        return int(self.counts.sum())

    @property
    def model_bytes(self) -> int:
        """Bytes needed for the state space: each rep holds N*N + 2 scalars."""
        return self.total_reps * (self.grid.dim + 2) * 8

    @property
    def allocated_bytes(self) -> int:
        return int(self.means.nbytes + self.variances.nbytes + self.weights.nbytes
                   + self._norms.nbytes + self.counts.nbytes)

    def _track_memory(self) -> None:
        self.peak_model_bytes = max(self.peak_model_bytes, self.model_bytes)
        self.peak_allocated_bytes = max(self.peak_allocated_bytes, self.allocated_bytes)

    def _ensure_capacity(self, needed: int) -> None:
        extra = needed - self.capacity
        if extra <= 0:
            return
        nodes, dim = self.grid.node_count, self.grid.dim
        self.means = np.concatenate([self.means, np.zeros((nodes, extra, dim))], axis=1)
        self.variances = np.concatenate([self.variances, np.zeros((nodes, extra))], axis=1)
        self.weights = np.concatenate(
            [self.weights, np.zeros((nodes, extra), dtype=np.int64)], axis=1)
        self._norms = np.concatenate([self._norms, np.zeros((nodes, extra))], axis=1)

    def ingest(self, frame) -> None:
        ingest_frame(self, frame)

    def ingest_all(self, frames) -> "SceneModel":
        for frame in frames:
            ingest_frame(self, frame)
        return self


def _centred_norm(vectors) -> np.ndarray:
    centred = vectors - vectors.mean(axis=-1, keepdims=True)
    return np.sqrt(np.einsum("...d,...d->...", centred, centred))


def ingest_frame(model: SceneModel, frame) -> SceneModel:
    """Match every block of ``frame`` against its node's set and update in place."""
    frame = np.asarray(frame)
    if frame.shape != (model.grid.height, model.grid.width):
        raise GeometryError(
            f"frame shape {frame.shape} does not match model geometry "
            f"{(model.grid.height, model.grid.width)}"
        )
    labels = tile_blocks(frame, model.grid).astype(np.float64)
    nodes, dim = labels.shape
    root = math.sqrt(dim)
    t1, t2 = model.thresholds.t1, model.thresholds.t2

    centred = labels - labels.mean(axis=1, keepdims=True)
    label_norm = np.sqrt(np.einsum("nd,nd->n", centred, centred))

    cap = model.capacity
    active = np.arange(cap)[None, :] < model.counts[:, None]
    # stored means need not be centred: a centred label is orthogonal to constants
    dots = np.einsum("nkd,nd->nk", model.means, centred)
    rep_norm = model._norms
    flat_l = (label_norm / root < FLAT_SIGMA)[:, None]
    flat_r = rep_norm / root < FLAT_SIGMA
    with np.errstate(divide="ignore", invalid="ignore"):
        corr = np.clip(dots / (rep_norm * label_norm[:, None]), -1.0, 1.0)
    corr = np.where(flat_l & flat_r, 1.0, np.where(flat_l | flat_r, 0.0, corr))
    mads = np.abs(model.means - labels[:, None, :]).mean(axis=2)

    ok = active & (corr > t1) & (mads < t2)
    score = np.where(ok, corr, -np.inf)
    best = np.argmax(score, axis=1)
    matched = ok.any(axis=1)

    hit = np.flatnonzero(matched)
    if hit.size:
        slot = best[hit]
        w = model.weights[hit, slot].astype(np.float64)
        diff = labels[hit] - model.means[hit, slot]
        model.means[hit, slot] += diff / (w + 1)[:, None]
        model.variances[hit, slot] = ((w - 1) / w * model.variances[hit, slot]
                                      + np.einsum("nd,nd->n", diff, diff) / (w + 1))
        model.weights[hit, slot] += 1
        model._norms[hit, slot] = _centred_norm(model.means[hit, slot])

    miss = np.flatnonzero(~matched)
    if miss.size:
        slot = model.counts[miss]
        model._ensure_capacity(int(slot.max()) + 1)
        model.means[miss, slot] = labels[miss]
        model.variances[miss, slot] = 0.0
        model.weights[miss, slot] = 1
        model._norms[miss, slot] = label_norm[miss]
        model.counts[miss] += 1

    model.frames_ingested += 1
    model._track_memory()
    return model


def build_scene_model(frames, block_size: int = 16, t1: float = DEFAULT_T1,
                      t2: float | None = None, fps: float | None = None,
                      training_frames: int = TRAINING_FRAMES) -> SceneModel:
    """Estimate thresholds (unless ``t2`` is given) and ingest every frame."""
    if not isinstance(frames, FrameSequence):
        frames = FrameSequence(np.asarray(frames), fps=fps or 25.0)
    grid = NodeGrid.for_frames(frames, block_size)
    if t2 is None:
        thresholds = estimate_noise_threshold(frames, grid, t1, training_frames)
    else:
        thresholds = NoiseThresholds(t1=t1, t2=t2)
    model = SceneModel(grid, thresholds, fps=fps or frames.fps)
    return model.ingest_all(frames)
