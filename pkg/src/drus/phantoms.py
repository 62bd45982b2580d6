"""Synthetic reflectivity phantoms and simulated channel data."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forward import ForwardOperator, apply_forward
from .geometry import ImageGrid

PAPER_GAMMAS = (0.3, 0.7, 1.0, 1.5, 2.0, 2.5)


@dataclass(frozen=True)
class BrightScatterer:
    position: tuple[float, float]
    amplitude: float = 10.0


@dataclass(frozen=True)
class AnechoicDisk:
    center: tuple[float, float]
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("disk radius must be > 0")


@dataclass(frozen=True)
class SpeckleBackground:
    mean_amplitude: float = 1.0
    density: float = 1.0

    def __post_init__(self):
        if self.mean_amplitude < 0:
            raise ValueError("speckle amplitude must be >= 0")
        if not 0.0 <= self.density <= 1.0:
            raise ValueError("speckle density must be in [0, 1]")


@dataclass(frozen=True)
class PhantomSpec:
    grid: ImageGrid
    features: tuple = ()
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(self.features))
        g = self.grid
        x0, z0 = g.origin
        x1 = x0 + (g.width - 1) * g.pixel_pitch[0]
        z1 = z0 + (g.height - 1) * g.pixel_pitch[1]
        for f in self.features:
            pos = getattr(f, "position", None) or getattr(f, "center", None)
            if pos is None:
                continue
            if not (x0 <= pos[0] <= x1 and z0 <= pos[1] <= z1):
                raise ValueError(f"feature {f} lies outside the image grid")

    @property
    def scatterers(self):
        return [f for f in self.features if isinstance(f, BrightScatterer)]

    @property
    def disks(self):
        return [f for f in self.features if isinstance(f, AnechoicDisk)]


def nearest_pixel(grid: ImageGrid, position) -> tuple[int, int]:
    ix = int(round((position[0] - grid.origin[0]) / grid.pixel_pitch[0]))
    iz = int(round((position[1] - grid.origin[1]) / grid.pixel_pitch[1]))
    return min(max(iz, 0), grid.height - 1), min(max(ix, 0), grid.width - 1)


def disk_mask(grid: ImageGrid, center, radius) -> np.ndarray:
    pts = grid.positions()
    r = np.hypot(pts[:, 0] - center[0], pts[:, 1] - center[1])
    return (r <= radius).reshape(grid.shape)


def render_phantom(spec: PhantomSpec) -> np.ndarray:
    """Ground-truth reflectivity, shape ``(height, width)``.

    Priority where features overlap: scatterer > anechoic disk > speckle.
    Speckle is zero-mean Gaussian per pixel so its envelope is Rayleigh.
    """
    g = spec.grid
    rng = np.random.default_rng(spec.seed)
    x = np.zeros(g.shape)
    for f in spec.features:
        if isinstance(f, SpeckleBackground):
            amp = rng.standard_normal(g.shape) * f.mean_amplitude
            if f.density < 1.0:
                amp *= rng.random(g.shape) < f.density
            x += amp
    for f in spec.disks:
        x[disk_mask(g, f.center, f.radius)] = 0.0
    for f in spec.scatterers:
        x[nearest_pixel(g, f.position)] = f.amplitude
    return x


def synvitro_layout(grid: ImageGrid, *, radius_fraction: float = 0.14,
                    scatterer_amplitude: float = 10.0, speckle: float = 1.0,
                    seed: int = 0) -> PhantomSpec:
    """Six bright scatterers in two rows around a row of four anechoic disks.

    Positions are fractions of the field of view; the disk radius is
    ``radius_fraction`` of the smaller physical extent.
    """
    x0, z0 = grid.origin
    wx = (grid.width - 1) * grid.pixel_pitch[0]
    wz = (grid.height - 1) * grid.pixel_pitch[1]

    def at(u, v):
        return (x0 + u * wx, z0 + v * wz)

    r = radius_fraction * min(wx, wz)
    feats = [SpeckleBackground(speckle)]
    feats += [AnechoicDisk(at(u, 0.5), r) for u in (0.125, 0.375, 0.625, 0.875)]
    feats += [BrightScatterer(at(u, v), scatterer_amplitude)
              for v in (0.15, 0.85) for u in (0.25, 0.5, 0.75)]
    return PhantomSpec(grid, tuple(feats), seed)


def speckle_only(grid: ImageGrid, seed: int = 0, amplitude: float = 1.0) -> PhantomSpec:
    return PhantomSpec(grid, (SpeckleBackground(amplitude),), seed)


def simulate_channel_data(x, op: ForwardOperator, gamma: float, seed: int = 0) -> np.ndarray:
    """``y = H x + gamma * e`` with ``e ~ N(0, I)`` drawn from ``seed``."""
    if gamma < 0:
        raise ValueError("noise level must be >= 0")
    y = apply_forward(op, x)
    if gamma > 0:
        y = y + gamma * np.random.default_rng(seed).standard_normal(y.shape)
    return y


def noise_seed(seed: int, index: int) -> int:
    """Per-level noise seed so each noise level draws an independent stream."""
    return int(np.random.SeedSequence([seed, 1, index]).generate_state(1)[0])

