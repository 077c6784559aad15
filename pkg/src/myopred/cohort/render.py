"""Procedural macula-centred fundus photographs.

The images carry a tessellation texture whose contrast rises with the
progression rate and, more weakly, with current myopia, so a network can
recover part of a child's future trajectory from a single photograph.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ASPECT = 1.25  # raw photographs are wider than tall


@dataclass(frozen=True)
class FundusStyle:
    """Per-subject appearance that stays fixed across annual visits."""

    disc_side: float  # +1 disc on the right of the frame, -1 on the left
    brightness: float
    tint: tuple
    vessel_bends: tuple
    vessel_angles: tuple

    @classmethod
    def draw(cls, rng: np.random.Generator) -> "FundusStyle":
        n = 6
        return cls(
            disc_side=1.0 if rng.random() < 0.5 else -1.0,
            brightness=float(rng.normal(1.0, 0.05)),
            tint=tuple(float(v) for v in rng.normal(1.0, 0.04, size=3)),
            vessel_bends=tuple(float(v) for v in rng.uniform(0.6, 1.6, size=n)),
            vessel_angles=tuple(float(v) for v in np.linspace(-0.9, 0.9, n) + rng.normal(0, 0.08, size=n)),
        )


def texture_amplitude(ser: float, rate: float) -> float:
    """Tessellation contrast, monotone non-decreasing in rate and in myopia."""
    return 0.03 + 0.15 * float(np.clip(rate, 0.0, 2.0)) + 0.03 * float(np.clip(-ser, 0.0, 8.0)) / 8.0


def render_fundus(height: int, style: FundusStyle, ser: float, rate: float,
                  rng: np.random.Generator) -> np.ndarray:
    """Render an H x (1.25 H) x 3 uint8 photograph."""
    width = int(round(height * ASPECT))
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    # normalized coordinates; the fundus disc has radius 1 in units of height/2
    v = (yy + 0.5 - height / 2) / (height / 2)
    u = (xx + 0.5 - width / 2) / (height / 2)
    r2 = u * u + v * v
    inside = np.clip((0.97 - np.sqrt(r2)) / 0.03, 0.0, 1.0)

    base = np.array([190.0, 88.0, 42.0]) * np.array(style.tint) * style.brightness
    shade = 1.0 - 0.30 * r2
    img = base[None, None, :] * shade[..., None]

    # macula: darker pigmented centre
    img *= (1.0 - 0.35 * np.exp(-r2 / (2 * 0.12**2)))[..., None]

    # tessellation: choroidal texture visible through a thinning retina
    amp = texture_amplitude(ser, rate)
    pattern = np.zeros_like(u)
    for _ in range(4):
        theta = rng.uniform(0, np.pi)
        freq = rng.uniform(7.0, 10.0)
        phase = rng.uniform(0, 2 * np.pi)
        pattern += np.cos(freq * np.pi * (u * np.cos(theta) + v * np.sin(theta)) + phase)
    pattern /= 4.0
    img *= (1.0 + amp * pattern)[..., None]

    # vessel arcades leaving the optic disc
    dx, dy = 0.55 * style.disc_side, 0.0
    vessel = np.zeros_like(u)
    t = np.linspace(0.0, 1.0, max(40, height // 2))
    for bend, angle in zip(style.vessel_bends, style.vessel_angles):
        direction = -style.disc_side
        px = dx + direction * t * 1.1 * np.cos(angle)
        py = dy + t * 0.9 * np.sin(angle) * bend + 0.25 * np.sign(angle) * t * t
        d2 = np.full_like(u, np.inf)
        for x0, y0 in zip(px, py):
            d2 = np.minimum(d2, (u - x0) ** 2 + (v - y0) ** 2)
        vessel = np.maximum(vessel, np.exp(-d2 / (2 * 0.022**2)))
    img = img * (1.0 - 0.45 * vessel[..., None]) + np.array([30.0, 5.0, 5.0]) * vessel[..., None]

    # optic disc
    disc_r2 = (u - dx) ** 2 + (v - dy) ** 2
    disc = np.clip((0.12 - np.sqrt(disc_r2)) / 0.03, 0.0, 1.0)
    disc_color = np.array([250.0, 215.0, 150.0]) * style.brightness
    img = img * (1.0 - disc[..., None]) + disc_color[None, None, :] * disc[..., None]

    img = img * inside[..., None]
    img += rng.normal(0.0, 1.5, size=img.shape)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)
