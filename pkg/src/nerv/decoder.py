"""Decode side: rebuild a model from a ``.nrv`` stream and render frames by index."""

from __future__ import annotations

import copy
import logging
import os
import platform
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import torch

from .bitstream import decode_symbols, deserialize
from .compression import CompressedArtifact, artifact_state
from .errors import CorruptStreamError, DomainError
from .model import NervModel, frame_time

log = logging.getLogger(__name__)


def _expected_shapes(config) -> dict[str, tuple[int, ...]]:
    with torch.device("meta"):
        ghost = NervModel(config)
    return {k: tuple(v.shape) for k, v in ghost.state_dict().items() if v.is_floating_point()}


def model_from_artifact(artifact: CompressedArtifact, symbols: np.ndarray | None = None) -> NervModel:
    if symbols is None:
        symbols = decode_symbols(artifact)
    expected = _expected_shapes(artifact.config)
    got = {rec.name: tuple(rec.shape) for rec in artifact.tensors}
    if got != expected:
        missing = sorted(set(expected) - set(got))
        extra = sorted(set(got) - set(expected))
        raise CorruptStreamError(f"tensor table does not match the declared architecture (missing {missing}, unexpected {extra})")
    state = artifact_state(artifact, symbols)
    model = NervModel(artifact.config)
    with torch.no_grad():
        sd = model.state_dict()
        for name, value in state.items():
            sd[name].copy_(torch.from_numpy(value.astype(np.float32)))
    model.frame_count = artifact.frame_count
    model.eval()
    return model


def load(data) -> NervModel:
    """Model with dequantized weights from ``.nrv`` bytes (or a path to a file)."""
    if isinstance(data, (str, os.PathLike)):
        with open(data, "rb") as fh:
            data = fh.read()
    return model_from_artifact(deserialize(data))


@torch.no_grad()
def _render(model, t: float) -> np.ndarray:
    x = torch.tensor([t], dtype=torch.float64)
    return model(x)[0].permute(1, 2, 0).float().numpy()


def decode_frames(model: NervModel, indices, workers: int = 1, num_frames: int | None = None) -> np.ndarray:
    """Frames (k, H, W, 3) for integer ``indices``, each rendered independently.

    Workers split the frame list; results do not depend on order or worker count.
    """
    T = num_frames if num_frames is not None else getattr(model, "frame_count", None)
    if T is None:
        raise DomainError("frame count unknown: pass num_frames")
    indices = [int(i) for i in indices]
    for i in indices:
        if not 0 <= i < T:
            raise DomainError(f"frame index {i} outside [0, {T - 1}]")
    if model.training:
        model.eval()
    times = [float(t) for t in frame_time(np.asarray(indices, dtype=np.int64), T)] if indices else []
    if workers <= 1 or len(times) <= 1:
        frames = [_render(model, t) for t in times]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            frames = list(pool.map(lambda t: _render(model, t), times))
    H, W = model.config.target_resolution
    return np.stack(frames) if frames else np.zeros((0, H, W, 3), dtype=np.float32)


def hardware_descriptor() -> str:
    return (
        f"{platform.machine()} {platform.processor() or 'cpu'}, {os.cpu_count()} cores, "
        f"torch {torch.__version__} ({torch.get_num_threads()} threads)"
    )


def benchmark_fps(model, n_frames: int = 8, precision: str = "full", num_frames: int | None = None) -> float:
    """Frames per second of a timed decode of ``n_frames`` frames.

    Works for image-wise models and pixel-wise baselines alike.  ``half``
    runs inference in float16 on a copy of the model; backends lacking
    float16 kernels fall back to full precision with a warning.
    """
    from .baselines import PixelwiseModel, render_frame

    n_frames = max(int(n_frames), 1)
    T = num_frames or getattr(model, "frame_count", None) or n_frames
    idx = [i % T for i in range(n_frames)]
    if precision not in ("full", "half"):
        raise ValueError(f"precision must be 'full' or 'half', got {precision!r}")

    if isinstance(model, PixelwiseModel):
        H, W = model.resolution

        def run():
            for i in idx:
                render_frame(model, i, T, H, W)

    else:
        net = model
        if precision == "half":
            net = copy.deepcopy(model).half().eval()
            try:
                _render(net, 1.0)
            except RuntimeError as e:
                log.warning("float16 inference unsupported here (%s); timing full precision", e)
                net = model

        def run():
            decode_frames(net, idx, num_frames=T)

    run_start = time.perf_counter()
    run()
    elapsed = time.perf_counter() - run_start
    fps = n_frames / max(elapsed, 1e-9)
    log.info("decoded %d frames at %.2f fps (%s precision) on %s", n_frames, fps, precision, hardware_descriptor())
    return fps
