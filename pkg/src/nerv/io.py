"""Frame directories, synthetic test videos and flat key=value run configs."""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DataError, InvalidConfigError

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff", ".ppm"}


@dataclass
class VideoTensor:
    frames: np.ndarray  # (T, H, W, 3) float32 in [0, 1]
    filenames: list[str] = field(default_factory=list)

    def __post_init__(self):
        f = np.asarray(self.frames, dtype=np.float32)
        if f.ndim != 4 or f.shape[-1] != 3 or f.shape[0] < 1:
            raise DataError(f"video must be (T, H, W, 3) with T >= 1, got {f.shape}")
        self.frames = np.clip(f, 0.0, 1.0)

    @property
    def shape(self) -> tuple[int, int, int]:
        T, H, W, _ = self.frames.shape
        return T, H, W

    @property
    def fingerprint(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.frames).tobytes()).hexdigest()

    def __len__(self):
        return self.frames.shape[0]


def _to_unit(arr: np.ndarray) -> np.ndarray:
    if arr.dtype == np.uint8:
        out = arr.astype(np.float32) / 255.0
    elif arr.dtype in (np.uint16, np.int32) or arr.dtype.kind in "iu":
        out = arr.astype(np.float32) / 65535.0
    else:
        out = arr.astype(np.float32)
    if out.ndim == 2:
        out = np.repeat(out[..., None], 3, axis=-1)
    return out[..., :3]


def load_frames(directory) -> VideoTensor:
    """Read every image in ``directory`` in lexicographic filename order."""
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"{directory} is not a directory")
    files = sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not files:
        raise DataError(f"no image files in {directory}")
    frames = []
    for p in files:
        with Image.open(p) as im:
            if im.mode not in ("L", "RGB", "RGBA", "I;16", "I"):
                im = im.convert("RGB")
            arr = np.asarray(im)
        frame = _to_unit(arr)
        if frames and frame.shape != frames[0].shape:
            raise DataError(f"{p.name} has resolution {frame.shape[:2]}, expected {frames[0].shape[:2]}")
        frames.append(frame)
    return VideoTensor(np.stack(frames), [p.name for p in files])


def to_uint8(frames) -> np.ndarray:
    """[0, 1] floats to 8-bit with round-half-away-from-zero."""
    v = np.clip(np.asarray(frames, dtype=np.float64), 0.0, 1.0) * 255.0
    return np.floor(v + 0.5).astype(np.uint8)


def frame_filename(i: int) -> str:
    return f"frame_{i:05d}.png"


def save_frames(video, directory, indices=None) -> list[Path]:
    frames = np.asarray(getattr(video, "frames", video))
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    idx = range(len(frames)) if indices is None else indices
    paths = []
    for frame, i in zip(frames, idx):
        path = directory / frame_filename(i)
        Image.fromarray(to_uint8(frame)).save(path)
        paths.append(path)
    return paths


# -- synthetic sources -------------------------------------------------------


def synthetic_video(kind: str = "texture", frames: int = 16, height: int = 128, width: int = 128, seed: int = 0):
    """Deterministic test videos.

    ``texture``: a colour gradient plus oriented sinusoidal texture (periods
    10-18 px), both translating 2 px per frame.  ``detail``: the same with a
    stronger, finer texture (periods 4-7 px) that small-window filters blur.
    ``shape``: a soft-edged disc moving 1 px per frame over a static
    gradient.  ``static``: one textured frame repeated.
    """
    rng = np.random.default_rng(seed)
    y, x = np.mgrid[0:height, 0:width].astype(np.float64)
    out = np.empty((frames, height, width, 3))
    if kind in ("texture", "static", "detail"):
        theta = rng.uniform(0, np.pi, size=3)
        period = rng.uniform(4, 7, size=3) if kind == "detail" else rng.uniform(10, 18, size=3)
        amp = 0.2 if kind == "detail" else 0.12
        phase = rng.uniform(0, 2 * np.pi, size=3)
        for t in range(frames):
            shift = 0 if kind == "static" else 2.0 * t
            u = x - shift
            grad = np.stack([u / width, y / height, 1 - (u + y) / (width + height)], -1)
            tex = sum(
                np.sin(2 * np.pi * (np.cos(a) * u + np.sin(a) * y) / p + ph)
                for a, p, ph in zip(theta, period, phase)
            )
            out[t] = 0.15 + 0.45 * (0.5 + 0.5 * np.tanh(grad * 2 - 1)) + amp * tex[..., None] / 3 * np.array([1.0, 0.6, -0.8])
    elif kind == "shape":
        base = np.stack([0.2 + 0.5 * x / width, 0.3 + 0.4 * y / height, 0.6 - 0.3 * x / width], -1)
        color = np.array([0.95, 0.8, 0.2])
        r = min(height, width) / 6
        for t in range(frames):
            cx, cy = width / 3 + t, height / 2
            d = np.hypot(x - cx, y - cy)
            alpha = np.clip(r + 1.0 - d, 0.0, 2.0)[..., None] / 2
            out[t] = base * (1 - alpha) + color * alpha
    else:
        raise InvalidConfigError(f"unknown synthetic video kind {kind!r}")
    return VideoTensor(np.clip(out, 0, 1).astype(np.float32), [frame_filename(i) for i in range(frames)])


# -- flat key=value configs --------------------------------------------------


def _coerce(value: str, like, key: str):
    value = value.strip()
    try:
        if isinstance(like, bool):
            if value.lower() in ("1", "true", "yes", "on"):
                return True
            if value.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if isinstance(like, int):
            return int(value)
        if isinstance(like, float):
            return float(value)
        if isinstance(like, tuple):
            items = [v for v in value.replace("x", ",").split(",") if v.strip()]
            if like and isinstance(like[0], str):
                return tuple(v.strip() for v in items)
            return tuple(int(v) for v in items)
    except ValueError as e:
        raise InvalidConfigError(f"bad value for {key}: {value!r}") from e
    if like is None and value.lower() in ("", "none", "auto"):
        return None
    if like is None:
        return _coerce(value, (0,), key)
    return value


def parse_kv(text: str) -> dict[str, str]:
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfigError(f"config line {n}: expected key = value, got {line!r}")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def apply_overrides(obj, raw: dict[str, str], consumed: set | None = None):
    """Return a copy of dataclass ``obj`` with matching keys from ``raw`` coerced and applied."""
    changes = {}
    for f in dataclasses.fields(obj):
        if f.name in raw:
            changes[f.name] = _coerce(raw[f.name], getattr(obj, f.name), f.name)
            if consumed is not None:
                consumed.add(f.name)
    if not changes:
        return obj
    if hasattr(obj, "replace"):
        return obj.replace(**changes)
    return dataclasses.replace(obj, **changes)


def format_kv(*objs, extra: dict | None = None) -> str:
    lines = []
    for obj in objs:
        for f in dataclasses.fields(obj):
            v = getattr(obj, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(i) for i in v)
            lines.append(f"{f.name} = {v}")
    for k, v in (extra or {}).items():
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"
