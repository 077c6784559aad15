"""Grad-CAM and guided-backpropagation saliency for the MMPN image encoder."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np

from .imaging.enhance import resize_bilinear
from .model.network import MMPN
from .nn import Tensor
from .nn import functional as F

TARGETS = ("p_myopia", "p_high_myopia")
DEFAULT_TARGET = "p_high_myopia"
OVERLAY_ALPHA = 0.4


@dataclass(frozen=True)
class Heatmap:
    grid: np.ndarray  # h x w, nonnegative
    upsampled: np.ndarray  # S x S in [0, 1]
    target: str
    image_index: int
    zero_gradient: bool = False


def target_name(target) -> str:
    if isinstance(target, str):
        return target
    if isinstance(target, tuple) and target[0] == "ser":
        return f"ser{target[1]}"
    return getattr(target, "__name__", "custom")


def parse_target(text: str):
    """'p_myopia', 'p_high_myopia' or 'serJ' (0-based predicted year J)."""
    if text in TARGETS:
        return text
    if text.startswith("ser") and text[3:].isdigit():
        return ("ser", int(text[3:]))
    raise ValueError(f"unknown explanation target {text!r}")


def _select(out: dict, target, m: int) -> Tensor:
    if callable(target):
        return target(out)
    if target == "p_myopia":
        return out["probs"][:, 0].sum()
    if target == "p_high_myopia":
        return out["probs"][:, 1].sum()
    if isinstance(target, tuple) and target[0] == "ser":
        j = int(target[1])
        if not 0 <= j < m:
            raise ValueError(f"SER step {j} outside the model's horizon of {m}")
        return out["pred_z"][:, j].sum()
    raise ValueError(f"unknown explanation target {target!r}")


def _forward(model: MMPN, images: np.ndarray, input_sers, track_input: bool = False):
    images = np.asarray(images, dtype=model.encoder.stem.weight.dtype)
    if images.ndim != 4:
        raise ValueError("images must be n x 3 x S x S for one sample")
    x = Tensor(images[None], requires_grad=track_input)
    return x, model(x, np.asarray(input_sers, dtype=np.float64).reshape(1, -1))


def cam_grid(activations: np.ndarray, gradients: np.ndarray) -> np.ndarray:
    """relu(sum_k alpha_k A_k) with alpha_k the spatial mean of dT/dA_k."""
    alpha = gradients.mean(axis=(1, 2))
    return np.maximum(np.tensordot(alpha, activations, axes=(0, 0)), 0.0)


def max_normalize(values: np.ndarray) -> np.ndarray:
    peak = float(values.max()) if values.size else 0.0
    return values / peak if peak > 0 else np.zeros_like(values)


def grad_cam(model: MMPN, images: np.ndarray, input_sers, target=DEFAULT_TARGET,
             image_index: int = 0) -> Heatmap:
    """Heatmap over one input-year image of a sample.

    ``images`` is n x 3 x S x S (model-normalised); ``target`` is a head name,
    ``("ser", j)`` or a callable mapping the forward output dict to a scalar Tensor.
    """
    model.eval()
    model.zero_grad()
    _, out = _forward(model, images, input_sers)
    acts = out["activations"]
    if not 0 <= image_index < acts.shape[0]:
        raise ValueError(f"image_index {image_index} outside 0..{acts.shape[0] - 1}")
    _select(out, target, model.config.m).backward()
    grads = acts.grad if acts.grad is not None else np.zeros_like(acts.data)
    grid = cam_grid(acts.data[image_index], grads[image_index])
    zero = not np.any(grads[image_index])
    side = model.config.image_side
    up = max_normalize(np.maximum(resize_bilinear(grid, side, side), 0.0))
    model.zero_grad()
    return Heatmap(grid, up, target_name(target), image_index, zero)


def guided_backprop(model: MMPN, images: np.ndarray, input_sers, target=DEFAULT_TARGET,
                    image_index: int = 0, channel_sum: bool = False) -> np.ndarray:
    """|d target / d input| through gated ReLUs; S x S x 3 (or S x S) in [0, 1]."""
    model.eval()
    model.zero_grad()
    x, out = _forward(model, images, input_sers, track_input=True)
    with F.guided_relu():
        _select(out, target, model.config.m).backward()
    grad = x.grad[0, image_index] if x.grad is not None else np.zeros(x.shape[2:])
    model.zero_grad()
    sal = np.abs(grad).transpose(1, 2, 0)
    if channel_sum:
        sal = sal.sum(axis=2)
    return max_normalize(sal)


@lru_cache(maxsize=1)
def colormap() -> np.ndarray:
    """256 x 3 uint8 blue-to-red lookup table."""
    text = (resources.files("myopred") / "data" / "bluered_lut.csv").read_text()
    rows = list(csv.DictReader(text.splitlines()))
    return np.array([[int(r["r"]), int(r["g"]), int(r["b"])] for r in rows], dtype=np.uint8)


def overlay(heatmap: np.ndarray, image: np.ndarray, alpha: float = OVERLAY_ALPHA) -> np.ndarray:
    """Blend the colour-mapped heatmap over an RGB image; returns uint8."""
    heat = np.asarray(heatmap, dtype=np.float64)
    img = np.asarray(image)
    if img.dtype != np.uint8:
        img = np.round(np.clip(img, 0.0, 1.0) * 255.0)
    img = img.astype(np.float64)
    if heat.shape != img.shape[:2]:
        raise ValueError(f"heatmap {heat.shape} does not match image {img.shape[:2]}")
    idx = np.round(np.clip(heat, 0.0, 1.0) * 255.0).astype(np.intp)
    colour = colormap()[idx].astype(np.float64)
    return np.round((1.0 - alpha) * img + alpha * colour).astype(np.uint8)


def heatmap_filename(sample_id: str, year: int, target, method: str) -> str:
    return f"{sample_id}_{year}_{target_name(target)}_{method}.png"


def explain_sample(model: MMPN, images: np.ndarray, input_sers, display: list[np.ndarray],
                   target=DEFAULT_TARGET) -> list[tuple[int, str, np.ndarray, bool]]:
    """Overlays for every input-year image: (image_index, method, rgb, zero_gradient)."""
    results = []
    for t in range(images.shape[0]):
        cam = grad_cam(model, images, input_sers, target, t)
        results.append((t, "gradcam", overlay(cam.upsampled, display[t]), cam.zero_gradient))
        gb = guided_backprop(model, images, input_sers, target, t, channel_sum=True)
        results.append((t, "guided", overlay(gb, display[t]), not np.any(gb)))
    return results

