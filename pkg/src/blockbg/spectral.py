"""Block DCT and the spectral clique potential.

A clique tile is the 2N x 2N raster formed by a candidate block and three
labelled neighbours (or, as a fallback, the N x 2N / 2N x N raster of the
candidate and one 4-connected neighbour). Its potential is the sum of absolute
low-band DCT coefficients with the DC term removed, so smoother continuations
score lower.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

RETAINED_FRACTION = 0.75

# (vertical step, horizontal step) of the two 4-neighbours spanning each clique
CLIQUES = {
    "TL": (-1, -1),
    "TR": (-1, 1),
    "BL": (1, -1),
    "BR": (1, 1),
}
PAIRS = {
    "up": (-1, 0),
    "down": (1, 0),
    "left": (0, -1),
    "right": (0, 1),
}


def retained_extent(size: int) -> int:
    """``ceil(sqrt(0.75 * size**2))`` in exact integer arithmetic."""
    target = 3 * size * size  # compare 4 P^2 against 3 M^2
    p = math.isqrt(target // 4)
    while 4 * p * p < target:
        p += 1
    return p


@lru_cache(maxsize=None)
def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II basis, rows indexed by frequency."""
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    basis = np.cos(np.pi * (2 * i + 1) * k / (2 * n)) * math.sqrt(2.0 / n)
    basis[0] /= math.sqrt(2.0)
    basis.flags.writeable = False
    return basis


def _dct2(tile: np.ndarray) -> np.ndarray:
    rows, cols = tile.shape
    return dct_matrix(rows) @ tile @ dct_matrix(cols).T


def dct2(tile) -> np.ndarray:
    """Orthonormal 2-D DCT-II of a square tile."""
    tile = np.asarray(tile, dtype=np.float64)
    if tile.ndim != 2 or tile.shape[0] != tile.shape[1]:
        raise ValueError(f"dct2 needs a square tile, got shape {tile.shape}")
    if tile.shape[0] < 2:
        raise ValueError("dct2 needs a tile of at least 2x2")
    return _dct2(tile)


@lru_cache(maxsize=None)
def zigzag_mask(rows: int, cols: int, fraction: float = RETAINED_FRACTION) -> np.ndarray:
    """Boolean mask of the first ``ceil(fraction*rows*cols)`` coefficients in zig-zag order."""
    v, u = np.indices((rows, cols))
    diag = v + u
    # odd anti-diagonals run top to bottom, even ones bottom to top
    within = np.where(diag % 2 == 1, v, -v)
    order = np.lexsort((within.ravel(), diag.ravel()))
    keep = math.ceil(fraction * rows * cols - 1e-12)
    mask = np.zeros(rows * cols, dtype=bool)
    mask[order[:keep]] = True
    mask = mask.reshape(rows, cols)
    mask.flags.writeable = False
    return mask


def low_band_energy(coeffs: np.ndarray, truncation: str = "square") -> float:
    rows, cols = coeffs.shape
    if truncation == "square":
        return float(np.abs(coeffs[: retained_extent(rows), : retained_extent(cols)]).sum())
    if truncation == "zigzag":
        return float(np.abs(coeffs[zigzag_mask(rows, cols)]).sum())
    raise ValueError(f"unknown truncation {truncation!r}")


def clique_energy(tile, truncation: str = "square") -> float:
    """Spectral potential of a clique tile.

    The DC coefficient is zeroed and the absolute values of the low-band
    coefficients are summed: the leading ``P x P`` square with
    ``P = ceil(sqrt(0.75 M^2))`` by default, or the first 75% in zig-zag
    order with ``truncation="zigzag"``. Rectangular pair tiles use the same
    rule per axis.
    """
    tile = np.asarray(tile, dtype=np.float64)
    if tile.ndim != 2 or min(tile.shape) < 2:
        raise ValueError(f"invalid clique tile of shape {tile.shape}")
    coeffs = _dct2(tile)
    coeffs[0, 0] = 0.0
    return low_band_energy(coeffs, truncation)


def _block(background, row, col):
    rows, cols = background.shape
    if not (0 <= row < rows and 0 <= col < cols):
        return None
    return background.block(row, col)


def _candidate_block(candidate, n: int) -> np.ndarray:
    candidate = np.asarray(candidate, dtype=np.float64)
    if candidate.size != n * n:
        raise ValueError(f"candidate has {candidate.size} values, expected {n * n}")
    return candidate.reshape(n, n)


def clique_neighbours(node, clique_id: str) -> list[tuple[int, int]]:
    """Nodes other than ``node`` in the given 2x2 clique."""
    dv, dh = CLIQUES[clique_id]
    r, c = node
    return [(r + dv, c), (r, c + dh), (r + dv, c + dh)]


def assemble_clique(background, node, clique_id: str, candidate):
    """Place ``candidate`` at ``node`` with the clique's three neighbours.

    ``background`` must expose ``shape`` (rows, cols), ``block_size`` and
    ``block(row, col)`` returning an N x N array or ``None`` when empty.
    Returns the 2N x 2N tile, or ``None`` if a neighbour is missing.
    """
    n = background.block_size
    dv, dh = CLIQUES[clique_id]
    r, c = node
    vertical = _block(background, r + dv, c)
    horizontal = _block(background, r, c + dh)
    diagonal = _block(background, r + dv, c + dh)
    if vertical is None or horizontal is None or diagonal is None:
        return None
    x = _candidate_block(candidate, n)
    top, bottom = ((diagonal, vertical), (horizontal, x)) if dv < 0 else ((horizontal, x), (diagonal, vertical))
    if dh > 0:
        top, bottom = top[::-1], bottom[::-1]
    return np.block([list(top), list(bottom)])


def assemble_pair(background, node, direction: str, candidate):
    """Two-node fallback tile: the candidate beside one labelled 4-neighbour."""
    n = background.block_size
    dv, dh = PAIRS[direction]
    r, c = node
    other = _block(background, r + dv, c + dh)
    if other is None:
        return None
    x = _candidate_block(candidate, n)
    if dv:
        return np.vstack([other, x] if dv < 0 else [x, other])
    return np.hstack([other, x] if dh < 0 else [x, other])
