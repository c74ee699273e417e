"""Synthetic cluttered sequences with known background and foreground masks.

A :class:`SynthSpec` describes a static background plus rectangular
occluders. Each occluder carries its own texture, a dwell interval of frames
(1-based, inclusive) and a straight-line trajectory. Occluders are painted in
list order over the background, then i.i.d. Gaussian noise is added and the
result is rounded and clamped to 8 bits.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import ConfigError
from .frame_io import FrameSequence, read_image, write_image, write_sequence

TEXTURES = ("flat", "stripes", "checker", "noise")


def textured_background(width: int, height: int, seed: int = 0) -> np.ndarray:
    """Smooth random scene with fine texture everywhere, as ``uint8``."""
    rng = np.random.default_rng(seed)
    y, x = np.mgrid[0:height, 0:width].astype(np.float64)
    image = 100.0 + 40.0 * (x / max(width, 1)) + 25.0 * (y / max(height, 1))
    for _ in range(6):
        wavelength = rng.uniform(24.0, 96.0)
        theta = rng.uniform(0.0, math.pi)
        phase = rng.uniform(0.0, 2 * math.pi)
        amplitude = rng.uniform(8.0, 20.0)
        image += amplitude * np.sin(2 * math.pi * (x * math.cos(theta) + y * math.sin(theta))
                                    / wavelength + phase)
    fine = gaussian_filter(rng.normal(size=(height, width)), 1.2)
    image += 7.0 * fine / fine.std()
    return np.clip(np.floor(image + 0.5), 15, 240).astype(np.uint8)


def occluder_texture(width: int, height: int, kind: str, intensity: float,
                     seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    y, x = np.mgrid[0:height, 0:width]
    if kind == "flat":
        patch = np.full((height, width), float(intensity))
    elif kind == "stripes":
        period = int(rng.integers(5, 11))
        patch = intensity + 35.0 * np.where((x // period) % 2 == 0, 1.0, -1.0)
    elif kind == "checker":
        cell = int(rng.integers(4, 9))
        patch = intensity + 35.0 * np.where(((x // cell) + (y // cell)) % 2 == 0, 1.0, -1.0)
    elif kind == "noise":
        patch = intensity + 30.0 * gaussian_filter(rng.normal(size=(height, width)), 1.0) * 2.5
    else:
        raise ConfigError(f"unknown occluder texture {kind!r}; expected one of {TEXTURES}")
    if kind != "flat":
        patch += 6.0 * rng.normal(size=(height, width))
    return np.clip(np.floor(patch + 0.5), 0, 255)


@dataclass
class Occluder:
    """Rectangle ``(x, y, width, height)`` at the first dwell frame, moving by ``velocity`` px/frame."""

    rect: tuple[int, int, int, int]
    dwell: tuple[int, int]
    intensity: float = 60.0
    texture: str = "stripes"
    velocity: tuple[float, float] = (0.0, 0.0)
    seed: int = 0

    def position(self, frame_number: int) -> tuple[int, int]:
        steps = frame_number - self.dwell[0]
        x, y = self.rect[0], self.rect[1]
        return (int(math.floor(x + self.velocity[0] * steps + 0.5)),
                int(math.floor(y + self.velocity[1] * steps + 0.5)))

    def active(self, frame_number: int) -> bool:
        return self.dwell[0] <= frame_number <= self.dwell[1]


@dataclass
class SynthSpec:
    width: int = 320
    height: int = 240
    frame_count: int = 450
    noise_sigma: float = 1.0
    fps: float = 25.0
    background_seed: int = 0
    background_path: str | None = None
    occluders: list[Occluder] = field(default_factory=list)

    def validate(self) -> None:
        if self.width < 1 or self.height < 1 or self.frame_count < 1:
            raise ConfigError("width, height and frame_count must be positive")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be non-negative")
        for index, occ in enumerate(self.occluders):
            first, last = occ.dwell
            if not 1 <= first <= last <= self.frame_count:
                raise ConfigError(
                    f"occluder {index}: dwell {occ.dwell} outside [1, {self.frame_count}]")
            w, h = occ.rect[2], occ.rect[3]
            if w < 1 or h < 1:
                raise ConfigError(f"occluder {index}: empty rectangle")
            for f in (first, last):
                x, y = occ.position(f)
                if x < 0 or y < 0 or x + w > self.width or y + h > self.height:
                    raise ConfigError(f"occluder {index} leaves the frame at frame {f}")
            if occ.texture not in TEXTURES:
                raise ConfigError(f"occluder {index}: unknown texture {occ.texture!r}")

    def to_dict(self) -> dict:
        data = asdict(self)
        data["occluders"] = [
            {**o, "rect": list(o["rect"]), "dwell": list(o["dwell"]), "velocity": list(o["velocity"])}
            for o in data["occluders"]
        ]
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "SynthSpec":
        data = dict(data)
        try:
            occluders = [Occluder(rect=tuple(o["rect"]), dwell=tuple(o["dwell"]),
                                  intensity=o.get("intensity", 60.0),
                                  texture=o.get("texture", "stripes"),
                                  velocity=tuple(o.get("velocity", (0.0, 0.0))),
                                  seed=o.get("seed", 0))
                         for o in data.pop("occluders", [])]
            spec = cls(occluders=occluders, **data)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid synthetic sequence description: {exc}") from None
        spec.validate()
        return spec


@dataclass
class SyntheticSequence:
    frames: FrameSequence
    truth: np.ndarray
    masks: np.ndarray  # (F, H, W) bool


def synth_sequence(spec: SynthSpec, seed: int = 0) -> SyntheticSequence:
    """Render a spec; identical ``(spec, seed)`` gives bit-identical output."""
    spec.validate()
    if spec.background_path:
        truth = read_image(spec.background_path)
        if truth.shape != (spec.height, spec.width):
            raise ConfigError("background image does not match the declared geometry")
    else:
        truth = textured_background(spec.width, spec.height, spec.background_seed)
    patches = [occluder_texture(o.rect[2], o.rect[3], o.texture, o.intensity, o.seed)
               for o in spec.occluders]
    rng = np.random.default_rng(seed)
    frames = np.empty((spec.frame_count, spec.height, spec.width), dtype=np.uint8)
    masks = np.zeros(frames.shape, dtype=bool)
    base = truth.astype(np.float64)
    for index in range(spec.frame_count):
        number = index + 1
        canvas = base.copy()
        for occ, patch in zip(spec.occluders, patches):
            if not occ.active(number):
                continue
            x, y = occ.position(number)
            h, w = patch.shape
            canvas[y : y + h, x : x + w] = patch
            masks[index, y : y + h, x : x + w] = True
        if spec.noise_sigma > 0:
            canvas += rng.normal(0.0, spec.noise_sigma, size=canvas.shape)
        frames[index] = np.clip(np.floor(canvas + 0.5), 0, 255)
    return SyntheticSequence(FrameSequence(frames, fps=spec.fps), truth, masks)


def stationary_occluder_spec(frame_count: int = 450, still_frames: int = 350,
                             noise_sigma: float = 1.0) -> SynthSpec:
    """QVGA scene with one 64x96 textured occluder present for the first ``still_frames``."""
    return SynthSpec(
        width=320, height=240, frame_count=frame_count, noise_sigma=noise_sigma,
        background_seed=7,
        occluders=[Occluder(rect=(136, 72, 64, 96), dwell=(1, still_frames),
                            intensity=70.0, texture="stripes", seed=11)],
    )


def bootstrap_spec(frame_count: int = 320, phase: int = 40, noise_sigma: float = 1.0) -> SynthSpec:
    """Every frame is partly occluded; quasi-stationary occluders rotate between eight sites.

    In each phase five of the eight sites hold a distinct textured occluder,
    so each site is covered for 5/8 of the sequence.
    """
    sites = [(8 + 38 * i, 8 + 56 * j) for j in range(2) for i in range(4)]
    textures = ("stripes", "checker", "noise")
    occluders = []
    phases = frame_count // phase
    for p in range(phases):
        for s in range(5):
            site = (p + 3 * s) % 8
            x, y = sites[site]
            first = p * phase + 1
            occluders.append(Occluder(rect=(x, y, 32, 44), dwell=(first, first + phase - 1),
                                      intensity=float(40 + 30 * ((p + s) % 6)),
                                      texture=textures[(p + s) % 3], seed=100 + 8 * p + s))
    return SynthSpec(width=160, height=120, frame_count=frame_count, noise_sigma=noise_sigma,
                     background_seed=3, occluders=occluders)


def load_spec(path) -> SynthSpec:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    return SynthSpec.from_dict(data)


def write_synthetic(seq: SyntheticSequence, spec: SynthSpec, seed: int, directory) -> Path:
    """Write ``frames/``, ``masks/``, ``truth.pgm`` and ``spec.json`` under ``directory``."""
    directory = Path(directory)
    write_sequence(seq.frames.frames, directory / "frames")
    write_sequence((seq.masks * 255).astype(np.uint8), directory / "masks")
    write_image(seq.truth, directory / "truth.pgm")
    (directory / "spec.json").write_text(
        json.dumps({"seed": seed, "spec": spec.to_dict()}, indent=2, sort_keys=True) + "\n")
    return directory
