"""Frame ingestion, block tiling and image output.

Frames are held as ``uint8`` arrays of shape ``(height, width)``. Nodes of the
block grid are addressed as ``(row, col)``; a node covers the pixel rectangle
``[row*N, row*N + N) x [col*N, col*N + N)``.
"""
from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import GeometryError, IngestError, WriteError

IMAGE_SUFFIXES = (".pgm", ".ppm", ".pnm", ".png")
RAW_SUFFIXES = (".y", ".raw", ".gray", ".grey")

_LUMA = np.array([0.299, 0.587, 0.114])


@dataclass
class FrameSequence:
    """Ordered greyscale frames sharing one geometry."""

    frames: np.ndarray
    fps: float = 25.0

    def __post_init__(self):
        frames = np.asarray(self.frames)
        if frames.ndim == 2:
            frames = frames[None]
        if frames.ndim != 3:
            raise GeometryError(f"expected a (F, H, W) stack, got shape {frames.shape}")
        if frames.shape[0] < 1:
            raise GeometryError("a frame sequence needs at least one frame")
        if frames.dtype != np.uint8:
            if frames.size and (frames.min() < 0 or frames.max() > 255):
                raise ValueError("frame intensities must lie in [0, 255]")
            frames = np.floor(frames + 0.5).astype(np.uint8) if frames.dtype.kind == "f" \
                else frames.astype(np.uint8)
        if not self.fps > 0:
            raise ValueError(f"fps must be positive, got {self.fps}")
        self.frames = frames

    @property
    def frame_count(self) -> int:
        return self.frames.shape[0]

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    @property
    def width(self) -> int:
        return self.frames.shape[2]

    def __len__(self) -> int:
        return self.frame_count

    def __iter__(self) -> Iterator[np.ndarray]:
        return iter(self.frames)

    def __getitem__(self, index):
        return self.frames[index]

    def subsequence(self, start: int, stop: int) -> "FrameSequence":
        return FrameSequence(self.frames[start:stop], fps=self.fps)

    def split(self, parts: int) -> list["FrameSequence"]:
        """Cut into ``parts`` consecutive pieces of equal length (remainder dropped)."""
        if parts < 1 or parts > self.frame_count:
            raise ValueError(f"cannot split {self.frame_count} frames into {parts} parts")
        step = self.frame_count // parts
        return [self.subsequence(k * step, (k + 1) * step) for k in range(parts)]


@dataclass(frozen=True)
class NodeGrid:
    block_size: int
    width: int
    height: int
    cols: int = field(init=False)
    rows: int = field(init=False)

    def __post_init__(self):
        if self.block_size < 1:
            raise ValueError("block_size must be positive")
        cols = self.width // self.block_size
        rows = self.height // self.block_size
        if cols < 1 or rows < 1:
            raise GeometryError(
                f"a {self.width}x{self.height} frame is smaller than one "
                f"{self.block_size}x{self.block_size} block"
            )
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "rows", rows)

    @classmethod
    def for_frames(cls, frames: FrameSequence, block_size: int) -> "NodeGrid":
        return cls(block_size, frames.width, frames.height)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    @property
    def node_count(self) -> int:
        return self.rows * self.cols

    @property
    def dim(self) -> int:
        return self.block_size * self.block_size

    @property
    def cropped_shape(self) -> tuple[int, int]:
        return (self.rows * self.block_size, self.cols * self.block_size)

    def pixel_rect(self, row: int, col: int) -> tuple[slice, slice]:
        n = self.block_size
        return slice(row * n, row * n + n), slice(col * n, col * n + n)


def to_greyscale(rgb) -> np.ndarray:
    """BT.601 luma of an ``(..., 3)`` raster, rounded half up to ``uint8``."""
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.shape[-1] != 3:
        raise ValueError(f"expected three channels, got shape {rgb.shape}")
    luma = rgb @ _LUMA
    return np.clip(np.floor(luma + 0.5), 0, 255).astype(np.uint8)


def tile_blocks(frame, grid: NodeGrid) -> np.ndarray:
    """Split a frame into vectorised node labels.

    Returns an array of shape ``(rows*cols, N*N)``; row ``r*cols + c`` holds
    node ``(r, c)`` with its pixels in row-major order. Pixels past the last
    whole block are cropped.
    """
    frame = np.asarray(frame)
    if frame.shape[0] < grid.block_size or frame.shape[1] < grid.block_size:
        raise GeometryError(f"frame {frame.shape} is smaller than one block")
    if frame.shape != (grid.height, grid.width):
        raise GeometryError(
            f"frame shape {frame.shape} does not match grid source {(grid.height, grid.width)}"
        )
    n = grid.block_size
    h, w = grid.cropped_shape
    blocks = frame[:h, :w].reshape(grid.rows, n, grid.cols, n).swapaxes(1, 2)
    return blocks.reshape(grid.node_count, n * n)


def untile_blocks(labels, grid: NodeGrid) -> np.ndarray:
    """Inverse of :func:`tile_blocks`; returns the cropped raster."""
    labels = np.asarray(labels)
    n = grid.block_size
    blocks = labels.reshape(grid.rows, grid.cols, n, n).swapaxes(1, 2)
    return blocks.reshape(grid.cropped_shape)


# -- image files ------------------------------------------------------------

def _pnm_header(data: bytes, path) -> tuple[bytes, list[int], int]:
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise IngestError(f"{path}: truncated PNM header")
        if data[pos : pos + 1] == b"#":
            end = data.find(b"\n", pos)
            pos = len(data) if end < 0 else end + 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates maxval from the raster
    pos += 1
    try:
        values = [int(t) for t in tokens[1:]]
    except ValueError:
        raise IngestError(f"{path}: malformed PNM header") from None
    return tokens[0], values, pos


def read_pnm(path) -> np.ndarray:
    """Read a binary P5 (grey) or P6 (colour) file as a greyscale ``uint8`` raster."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise IngestError(f"{path}: {exc.strerror or exc}") from exc
    magic, (width, height, maxval), offset = _pnm_header(data, path)
    if magic not in (b"P5", b"P6"):
        raise IngestError(f"{path}: unsupported PNM type {magic!r}")
    if not 0 < maxval < 256:
        raise IngestError(f"{path}: only 8-bit PNM files are supported (maxval {maxval})")
    channels = 3 if magic == b"P6" else 1
    count = width * height * channels
    if offset > len(data):
        raise IngestError(f"{path}: no pixel data")
    raster = np.frombuffer(data, dtype=np.uint8, count=-1, offset=offset)
    if raster.size < count:
        raise IngestError(f"{path}: expected {count} pixel bytes, found {raster.size}")
    raster = raster[:count]
    if maxval != 255:
        raster = np.floor(raster * (255.0 / maxval) + 0.5).clip(0, 255).astype(np.uint8)
    if channels == 3:
        return to_greyscale(raster.reshape(height, width, 3))
    return raster.reshape(height, width).copy()


def read_image(path) -> np.ndarray:
    """Read one PGM/PPM/PNG file as greyscale ``uint8``."""
    path = Path(path)
    if path.suffix.lower() != ".png":
        return read_pnm(path)
    from PIL import Image

    try:
        with Image.open(path) as img:
            img.load()
            if img.mode in ("L", "P", "1", "LA", "I", "I;16"):
                if img.mode in ("I", "I;16"):
                    raise IngestError(f"{path}: only 8-bit PNG files are supported")
                return np.asarray(img.convert("L"), dtype=np.uint8).copy()
            return to_greyscale(np.asarray(img.convert("RGB")))
    except IngestError:
        raise
    except (OSError, ValueError) as exc:
        raise IngestError(f"{path}: cannot decode image ({exc})") from exc


def _frame_sort_key(path: Path):
    digits = re.findall(r"\d+", path.stem)
    number = int(digits[-1]) if digits else float("inf")
    return (number, path.name)


def list_frame_files(directory) -> list[Path]:
    directory = Path(directory)
    files = [p for p in directory.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES]
    return sorted(files, key=_frame_sort_key)


def read_raw(path, width: int, height: int) -> np.ndarray:
    """Planar 8-bit luma frames packed back to back."""
    if not width or not height or width < 1 or height < 1:
        raise GeometryError("raw input needs positive --width and --height")
    try:
        data = np.fromfile(path, dtype=np.uint8)
    except OSError as exc:
        raise IngestError(f"{path}: {exc.strerror or exc}") from exc
    frame_bytes = width * height
    if data.size == 0 or data.size % frame_bytes:
        raise GeometryError(
            f"{path}: {data.size} bytes is not a whole number of {width}x{height} frames"
        )
    return data.reshape(-1, height, width)


def load_sequence(source, width: int | None = None, height: int | None = None,
                  fps: float = 25.0, limit: int | None = None) -> FrameSequence:
    """Load a frame directory or a raw planar luma file.

    Directory frames are ordered by the last number in each file name, ties
    broken lexically. A file source is treated as raw luma and needs
    ``width`` and ``height``.
    """
    source = Path(source)
    if not source.exists():
        raise IngestError(f"{source}: no such file or directory")
    if source.is_file():
        frames = read_raw(source, width, height)
        if limit is not None:
            frames = frames[:limit]
        return FrameSequence(frames, fps=fps)

    files = list_frame_files(source)
    if not files:
        raise IngestError(f"{source}: no image frames found")
    if limit is not None:
        files = files[:limit]
    stack = None
    for index, path in enumerate(files):
        frame = read_image(path)
        if stack is None:
            stack = np.empty((len(files),) + frame.shape, dtype=np.uint8)
        elif frame.shape != stack.shape[1:]:
            raise GeometryError(
                f"{path.name}: frame is {frame.shape[1]}x{frame.shape[0]}, "
                f"expected {stack.shape[2]}x{stack.shape[1]}"
            )
        stack[index] = frame
    return FrameSequence(stack, fps=fps)


def _check_raster(raster) -> np.ndarray:
    raster = np.asarray(raster)
    if raster.ndim != 2:
        raise ValueError(f"expected a 2-D raster, got shape {raster.shape}")
    if raster.size and (raster.min() < 0 or raster.max() > 255):
        raise ValueError("raster values must lie in [0, 255]")
    if raster.dtype != np.uint8:
        raster = np.floor(raster + 0.5).astype(np.uint8) if raster.dtype.kind == "f" \
            else raster.astype(np.uint8)
    return raster


def pgm_bytes(raster) -> bytes:
    raster = _check_raster(raster)
    h, w = raster.shape
    return b"P5\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(raster).tobytes()


def write_image(raster, path, format: str | None = None) -> None:
    """Write an 8-bit greyscale raster as binary PGM or PNG.

    The format is taken from ``format`` ("pgm" or "png") or else the suffix.
    """
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".") or "pgm").lower()
    raster = _check_raster(raster)
    try:
        if fmt == "pgm":
            path.write_bytes(pgm_bytes(raster))
        elif fmt == "png":
            from PIL import Image

            Image.fromarray(raster).save(path, format="PNG")
        else:
            raise ValueError(f"unsupported image format {fmt!r}")
    except OSError as exc:
        raise WriteError(f"{path}: {exc.strerror or exc}") from exc


def write_sequence(frames, directory, format: str = "pgm", start: int = 1) -> list[Path]:
    """Write frames as zero-padded numbered files; returns the paths."""
    directory = Path(directory)
    try:
        os.makedirs(directory, exist_ok=True)
    except OSError as exc:
        raise WriteError(f"{directory}: {exc.strerror or exc}") from exc
    paths = []
    for offset, frame in enumerate(frames):
        path = directory / f"{start + offset:04d}.{format}"
        write_image(frame, path, format)
        paths.append(path)
    return paths
