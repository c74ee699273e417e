"""Background labelling over the node grid.

Nodes with a single representative are fixed first. The remaining nodes are
filled in raster order as soon as enough labelled neighbours exist, each
taking the representative with the highest weighted log posterior

    log l(r_k) + eta_eff * log p(r_k)

where the likelihood comes from capped occurrence weights and the prior is a
Gibbs distribution over per-pixel spectral clique energies. Iterated
conditional modes then revisits nodes whose neighbourhood changed.
"""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .frame_io import FrameSequence, NodeGrid
from .repset import SceneModel, estimate_noise_threshold, NoiseThresholds
from .spectral import (CLIQUES, PAIRS, assemble_clique, assemble_pair, clique_neighbours,
                       dct_matrix, low_band_energy, retained_extent)

HALF_TOLERANCE = 1e-9
EMPTY = -1


@dataclass(frozen=True)
class GibbsParams:
    eta: float = 3.0
    w_max_seconds: float = 5.0
    icm_iterations: int = 5
    temperature_divisor: float = 10.0
    truncation: str = "square"
    parallel: bool = False

    def __post_init__(self):
        if self.eta < 1:
            raise ValueError("eta must be at least 1")
        if self.icm_iterations < 0:
            raise ValueError("icm_iterations must be non-negative")
        if not self.w_max_seconds > 0:
            raise ValueError("w_max_seconds must be positive")
        if not self.temperature_divisor > 0:
            raise ValueError("temperature_divisor must be positive")
        if self.truncation not in ("square", "zigzag"):
            raise ValueError(f"unknown truncation {self.truncation!r}")

    def w_max(self, fps: float) -> float:
        return self.w_max_seconds * fps


class BackgroundGrid:
    """Chosen representative index per node; ``-1`` marks an empty node."""

    def __init__(self, model: SceneModel, labels=None):
        self.model = model
        if labels is None:
            labels = np.full(model.grid.shape, EMPTY, dtype=np.int64)
        labels = np.array(labels, dtype=np.int64).reshape(model.grid.shape)
        if np.any(labels >= model.counts.reshape(model.grid.shape)) or np.any(labels < EMPTY):
            raise ValueError("label index out of range for its representative set")
        self.labels = labels
        self.history: dict = {}

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape

    @property
    def block_size(self) -> int:
        return self.model.grid.block_size

    def __getitem__(self, node) -> int:
        return int(self.labels[node])

    def __setitem__(self, node, index: int) -> None:
        k = self.model.node_index(*node)
        if not (index == EMPTY or 0 <= index < self.model.counts[k]):
            raise ValueError(f"label {index} out of range at node {node}")
        self.labels[node] = index

    def is_empty(self, node) -> bool:
        return self.labels[node] == EMPTY

    def is_complete(self) -> bool:
        return not np.any(self.labels == EMPTY)

    def empty_count(self) -> int:
        return int(np.count_nonzero(self.labels == EMPTY))

    def block(self, row: int, col: int):
        index = self.labels[row, col]
        if index == EMPTY:
            return None
        n = self.block_size
        return self.model.means[self.model.node_index(row, col), index].reshape(n, n)

    def copy(self) -> "BackgroundGrid":
        other = BackgroundGrid(self.model, self.labels.copy())
        other.history = dict(self.history)
        return other

    def chosen_variances(self) -> np.ndarray:
        """Per-pixel variance of each chosen representative, ``(rows, cols)``."""
        self._require_complete()
        k = np.arange(self.model.node_count)
        return self.model.variances[k, self.labels.ravel()].reshape(self.shape) / self.model.grid.dim

    def render(self) -> np.ndarray:
        """Background image from the chosen means, rounded half up to ``uint8``."""
        self._require_complete()
        return _render(self.model, self._chosen_means())

    def mean_image(self) -> np.ndarray:
        """Chosen means as an unrounded ``float64`` raster."""
        self._require_complete()
        from .frame_io import untile_blocks

        return untile_blocks(self._chosen_means(), self.model.grid)

    def render_variance(self) -> np.ndarray:
        """Per-pixel variance map: each block shares its representative's variance."""
        n = self.block_size
        return np.kron(self.chosen_variances(), np.ones((n, n)))

    def _chosen_means(self) -> np.ndarray:
        k = np.arange(self.model.node_count)
        return self.model.means[k, self.labels.ravel()]

    def _require_complete(self) -> None:
        if not self.is_complete():
            raise ValueError(f"{self.empty_count()} nodes are still unlabelled")


def _render(model: SceneModel, means: np.ndarray) -> np.ndarray:
    from .frame_io import untile_blocks

    image = untile_blocks(means, model.grid)
    # the tolerance keeps running-mean drift from flipping exact halves down
    return np.clip(np.floor(image + 0.5 + HALF_TOLERANCE), 0, 255).astype(np.uint8)


@dataclass
class PosteriorBreakdown:
    log_likelihood: np.ndarray
    log_prior: np.ndarray
    log_posterior: np.ndarray
    energies: np.ndarray
    clique_count: int
    eta_eff: float
    cliques: tuple[str, ...] = ()

    @property
    def likelihood(self) -> np.ndarray:
        return np.exp(self.log_likelihood)

    @property
    def prior(self) -> np.ndarray:
        return np.exp(self.log_prior)


# -- stage 2 ----------------------------------------------------------------

def initialize_partial(model: SceneModel) -> BackgroundGrid:
    """Fix every node whose representative set has exactly one member."""
    labels = np.where(model.counts == 1, 0, EMPTY).reshape(model.grid.shape)
    return BackgroundGrid(model, labels)


def corner_nodes(shape) -> list[tuple[int, int]]:
    rows, cols = shape
    seen = []
    for node in [(0, 0), (0, cols - 1), (rows - 1, 0), (rows - 1, cols - 1)]:
        if node not in seen:
            seen.append(node)
    return seen


def seed_corners(model: SceneModel, grid: BackgroundGrid) -> BackgroundGrid:
    """Seed an all-empty grid with the heaviest representative among the corners."""
    if grid.empty_count() != grid.labels.size:
        return grid
    best = None
    for node in corner_nodes(grid.shape):
        weights = model.weight_slice(model.node_index(*node))
        index = int(np.argmax(weights))
        if best is None or weights[index] > best[0]:
            best = (int(weights[index]), node, index)
    _, node, index = best
    grid[node] = index
    grid.history["seed"] = {"node": list(node), "index": index, "weight": best[0]}
    return grid


# -- neighbourhood ------------------------------------------------------------

def _labelled(grid: BackgroundGrid, row: int, col: int) -> bool:
    rows, cols = grid.shape
    return 0 <= row < rows and 0 <= col < cols and grid.labels[row, col] != EMPTY


def eligible(grid: BackgroundGrid, node, allow_fallback: bool = True) -> tuple[str, ...]:
    """Cliques usable to label ``node``.

    Returns every 2x2 clique whose three other nodes are labelled. When none
    is complete and ``allow_fallback`` is set, returns the two-node pairs
    (``"up"``, ``"down"``, ``"left"``, ``"right"``) for each labelled
    4-neighbour. An empty tuple means the node cannot be labelled yet.
    """
    full = tuple(cid for cid in CLIQUES
                 if all(_labelled(grid, r, c) for r, c in clique_neighbours(node, cid)))
    if full or not allow_fallback:
        return full
    r, c = node
    return tuple(d for d, (dv, dh) in PAIRS.items() if _labelled(grid, r + dv, c + dh))


def participating_neighbours(node, usable) -> set[tuple[int, int]]:
    r, c = node
    nodes = set()
    for cid in usable:
        if cid in CLIQUES:
            nodes.update(clique_neighbours(node, cid))
        else:
            dv, dh = PAIRS[cid]
            nodes.add((r + dv, c + dh))
    return nodes


# -- probabilities ------------------------------------------------------------

def label_likelihood(weights, params: GibbsParams, fps: float) -> np.ndarray:
    """Occurrence weights capped at ``w_max_seconds * fps``, normalised to sum to 1."""
    if hasattr(weights, "weights"):
        weights = weights.weights
    weights = np.asarray(weights, dtype=np.float64)
    if weights.size == 0:
        raise ValueError("a node needs at least one representative")
    capped = np.minimum(weights, params.w_max(fps))
    return capped / capped.sum()


def _log_prior(energies: np.ndarray, params: GibbsParams) -> np.ndarray:
    shifted = energies - energies.min()
    spread = shifted.mean()
    if not spread > 0:
        return np.full(energies.shape, -np.log(energies.size))
    # T = spread / divisor, folded in so that rescaling U cancels exactly
    logits = -params.temperature_divisor * (shifted / spread)
    # the minimum-energy logit is 0, so the log-sum-exp is stable
    return logits - np.log(np.exp(logits).sum())


def label_prior(energies, params: GibbsParams) -> np.ndarray:
    """Gibbs prior over candidates with a temperature adapted to the energy spread.

    ``T = (mean(U) - min(U)) / temperature_divisor``, so rescaling all energies
    leaves the prior unchanged; equal energies give a uniform prior.
    """
    energies = np.asarray(energies, dtype=np.float64)
    if energies.size == 0 or not np.all(np.isfinite(energies)):
        raise ValueError("energies must be a non-empty finite vector")
    return np.exp(_log_prior(energies, params))


# -- energies -----------------------------------------------------------------

def _batched_energy(tiles: np.ndarray, truncation: str) -> np.ndarray:
    _, rows, cols = tiles.shape
    coeffs = dct_matrix(rows) @ tiles @ dct_matrix(cols).T
    coeffs[:, 0, 0] = 0.0
    if truncation == "square":
        band = np.abs(coeffs[:, : retained_extent(rows), : retained_extent(cols)])
        return band.sum(axis=(1, 2))
    return np.array([low_band_energy(c, truncation) for c in coeffs])


def candidate_energies(grid: BackgroundGrid, node, candidates, usable,
                       truncation: str = "square") -> np.ndarray:
    """Mean per-pixel clique energy for each candidate block (rows of ``candidates``)."""
    candidates = np.asarray(candidates, dtype=np.float64)
    if not usable:
        raise ValueError(f"node {node} has no usable clique")
    totals = np.zeros(len(candidates))
    for cid in usable:
        build = assemble_clique if cid in CLIQUES else assemble_pair
        tiles = np.stack([build(grid, node, cid, cand) for cand in candidates])
        totals += _batched_energy(tiles, truncation) / tiles[0].size
    return totals / len(usable)


def node_energy(grid: BackgroundGrid, node, candidate, usable=None,
                truncation: str = "square") -> tuple[float, int]:
    """Per-pixel clique energy of one candidate, averaged over usable cliques."""
    if usable is None:
        usable = eligible(grid, node)
    if not usable:
        raise ValueError(f"node {node} has no usable clique")
    energy = candidate_energies(grid, node, np.asarray(candidate)[None], usable, truncation)
    return float(energy[0]), len(usable)


def select_label(model: SceneModel, grid: BackgroundGrid, node, params: GibbsParams,
                 usable=None) -> tuple[int, PosteriorBreakdown]:
    """Candidate maximising ``log l + eta_eff * log p`` at ``node``.

    Ties go to the larger raw weight, then the lower index.
    """
    if usable is None:
        usable = eligible(grid, node)
    if not usable:
        raise ValueError(f"node {node} has no usable clique")
    k = model.node_index(*node)
    count = int(model.counts[k])
    weights = model.weights[k, :count]
    log_l = np.log(label_likelihood(weights, params, model.fps))
    energies = candidate_energies(grid, node, model.means[k, :count], usable, params.truncation)
    log_p = _log_prior(energies, params)
    eta_eff = float(min(params.eta, len(participating_neighbours(node, usable))))
    posterior = log_l + eta_eff * log_p
    best = min(range(count), key=lambda s: (-posterior[s], -weights[s], s))
    return best, PosteriorBreakdown(log_l, log_p, posterior, energies, len(usable), eta_eff,
                                    tuple(usable))


# -- stage 3 ----------------------------------------------------------------

def _fill_pass(model, grid, params, allow_fallback) -> int:
    labelled = 0
    rows, cols = grid.shape
    for r in range(rows):
        for c in range(cols):
            if grid.labels[r, c] != EMPTY:
                continue
            usable = eligible(grid, (r, c), allow_fallback)
            if usable:
                grid.labels[r, c], _ = select_label(model, grid, (r, c), params, usable)
                labelled += 1
    return labelled


def fill_background(model: SceneModel, params: GibbsParams,
                    grid: BackgroundGrid | None = None) -> BackgroundGrid:
    """Label every empty node, starting from ``grid`` or from stage 2 plus corner seeding.

    Raster passes label nodes that have a complete clique; new labels are
    visible to later nodes of the same pass. A pass that labels nothing is
    followed by one pass allowing pair cliques, and if that also stalls the
    first empty node takes its heaviest representative.
    """
    if grid is None:
        grid = seed_corners(model, initialize_partial(model))
    else:
        grid = grid.copy()
    passes = fallback_passes = forced = 0
    while not grid.is_complete():
        passes += 1
        if _fill_pass(model, grid, params, allow_fallback=False):
            continue
        passes += 1
        fallback_passes += 1
        if _fill_pass(model, grid, params, allow_fallback=True):
            continue
        node = tuple(int(v) for v in np.argwhere(grid.labels == EMPTY)[0])
        grid.labels[node] = int(np.argmax(model.weight_slice(model.node_index(*node))))
        forced += 1
    grid.history.update(fill_passes=passes, fallback_passes=fallback_passes, forced_nodes=forced)
    return grid


def _neighbours8(node, shape):
    r, c = node
    rows, cols = shape
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if (dr or dc) and 0 <= r + dr < rows and 0 <= c + dc < cols:
                yield (r + dr, c + dc)


def _icm_step(model, grid, node, params):
    """Best challenger at ``node`` if it strictly beats the incumbent, else ``None``."""
    best, post = select_label(model, grid, node, params)
    current = grid.labels[node]
    if best != current and post.log_posterior[best] > post.log_posterior[current]:
        return best
    return None


def icm_refine(model: SceneModel, grid: BackgroundGrid, params: GibbsParams) -> BackgroundGrid:
    """Iterated conditional modes on a complete grid.

    The first iteration visits every node; later ones only nodes with a
    changed 8-neighbour. Stops after ``params.icm_iterations`` iterations or
    once an iteration changes nothing. With ``params.parallel`` each
    iteration evaluates against a frozen copy and applies changes together.
    """
    grid = grid.copy()
    if not grid.is_complete():
        raise ValueError("icm_refine needs a complete grid")
    changes: list[int] = []
    multi = model.counts.reshape(grid.shape) > 1
    visit = sorted(map(tuple, np.argwhere(multi).tolist()))
    for _ in range(params.icm_iterations):
        if params.parallel:
            frozen = grid.copy()
            with ThreadPoolExecutor() as pool:
                moves = list(pool.map(lambda n: _icm_step(model, frozen, n, params), visit))
            changed = [node for node, move in zip(visit, moves) if move is not None]
            for node, move in zip(visit, moves):
                if move is not None:
                    grid.labels[node] = move
        else:
            changed = []
            for node in visit:
                move = _icm_step(model, grid, node, params)
                if move is not None:
                    grid.labels[node] = move
                    changed.append(node)
        changes.append(len(changed))
        if not changed:
            break
        nxt = {n for node in changed for n in _neighbours8(node, grid.shape) if multi[n]}
        visit = sorted(nxt)
    grid.history["icm_changes"] = changes
    return grid


# -- end to end ---------------------------------------------------------------

@dataclass
class EstimateResult:
    image: np.ndarray
    grid: BackgroundGrid
    model: SceneModel
    report: dict = field(default_factory=dict)


def _s_histogram(model: SceneModel) -> dict[str, int]:
    values, counts = np.unique(model.counts, return_counts=True)
    return {str(int(v)): int(c) for v, c in zip(values, counts)}


def estimate_background(frames: FrameSequence, config=None, **overrides) -> EstimateResult:
    """Run threshold estimation, representative collection, filling and ICM."""
    from .config import EstimatorConfig

    config = EstimatorConfig.coerce(config, **overrides)
    if not isinstance(frames, FrameSequence):
        frames = FrameSequence(np.asarray(frames), fps=config.fps)
    if frames.frame_count < 2:
        from .errors import EstimationError

        raise EstimationError("background estimation needs at least 2 frames")
    fps = config.fps
    params = config.gibbs()
    start = time.perf_counter()

    grid_geom = NodeGrid.for_frames(frames, config.block_size)
    if config.t2 is None:
        thresholds = estimate_noise_threshold(frames, grid_geom, config.t1, config.training_frames)
    else:
        thresholds = NoiseThresholds(t1=config.t1, t2=config.t2)
    t_thresh = time.perf_counter()

    model = SceneModel(grid_geom, thresholds, fps=fps)
    for frame in frames:
        model.ingest(frame)
    t_stage1 = time.perf_counter()

    grid = initialize_partial(model)
    stage2_filled = grid.labels.size - grid.empty_count()
    grid = seed_corners(model, grid)
    filled = fill_background(model, params, grid)
    refined = icm_refine(model, filled, params)
    image = refined.render()
    end = time.perf_counter()

    runtime = end - start
    raw_bytes = frames.frame_count * frames.width * frames.height
    report = {
        "frames": frames.frame_count,
        "width": frames.width,
        "height": frames.height,
        "grid": {"rows": grid_geom.rows, "cols": grid_geom.cols, "block_size": grid_geom.block_size},
        "thresholds": {"t1": thresholds.t1, "t2": thresholds.t2,
                       "q31_mean": thresholds.q31_mean, "q31_std": thresholds.q31_std},
        "s_histogram": _s_histogram(model),
        "stage2_filled": int(stage2_filled),
        "seed": filled.history.get("seed", grid.history.get("seed")),
        "fill_passes": filled.history["fill_passes"],
        "fallback_passes": filled.history["fallback_passes"],
        "forced_nodes": filled.history["forced_nodes"],
        "icm_changes": refined.history.get("icm_changes", []),
        "peak_model_bytes": int(model.peak_model_bytes),
        "peak_allocated_bytes": int(model.peak_allocated_bytes),
        "raw_frame_bytes": int(raw_bytes),
        "model_memory_ratio": model.peak_model_bytes / raw_bytes,
        "runtime_ms": runtime * 1000.0,
        "stage_ms": {"thresholds": (t_thresh - start) * 1000.0,
                     "collect": (t_stage1 - t_thresh) * 1000.0,
                     "label": (end - t_stage1) * 1000.0},
        "frames_per_second": frames.frame_count / runtime if runtime > 0 else float("inf"),
    }
    refined.history["fill"] = filled.history
    return EstimateResult(image=image, grid=refined, model=model, report=report)
