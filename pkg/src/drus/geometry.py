"""Acquisition geometry: transducer array, image grid, pulse and apodization.

Coordinates are ``(lateral, axial)`` in meters. The array sits at axial
position 0 and images are stored ``(height, width)`` = ``(axial, lateral)``
with pixel ``n = iz * width + ix``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

# Delays closer than this to an integer sample are snapped onto it.
DELAY_SNAP = 1e-9


class TransmitKind(str, enum.Enum):
    PLANE_WAVE = "plane_wave"
    SYNTHETIC_APERTURE = "synthetic_aperture"


@dataclass(frozen=True)
class Transmit:
    kind: TransmitKind = TransmitKind.PLANE_WAVE
    angle: float = 0.0
    element: int = 0

    @classmethod
    def plane_wave(cls, angle: float = 0.0) -> "Transmit":
        return cls(TransmitKind.PLANE_WAVE, angle=float(angle))

    @classmethod
    def synthetic_aperture(cls, element: int) -> "Transmit":
        return cls(TransmitKind.SYNTHETIC_APERTURE, element=int(element))


@dataclass(frozen=True)
class ArrayGeometry:
    """Linear receive array and the transmit event that insonifies the medium."""

    element_positions: np.ndarray
    sound_speed: float
    sampling_frequency: float
    sample_count: int
    transmit: Transmit = field(default_factory=Transmit)

    def __post_init__(self):
        pos = np.array(self.element_positions, dtype=np.float64, copy=True)
        if pos.ndim != 2 or pos.shape[1] != 2 or pos.shape[0] < 1:
            raise ValueError("element_positions must have shape (L, 2) with L >= 1")
        if not np.all(np.isfinite(pos)):
            raise ValueError("element positions must be finite")
        if np.any(np.diff(pos[:, 0]) <= 0):
            raise ValueError("element positions must be strictly increasing laterally")
        if not self.sound_speed > 0:
            raise ValueError("sound_speed must be > 0")
        if not self.sampling_frequency > 0:
            raise ValueError("sampling_frequency must be > 0")
        if int(self.sample_count) < 1:
            raise ValueError("sample_count must be >= 1")
        if self.transmit.kind is TransmitKind.SYNTHETIC_APERTURE and not (
            0 <= self.transmit.element < pos.shape[0]
        ):
            raise ValueError("synthetic aperture transmit element out of range")
        pos.setflags(write=False)
        object.__setattr__(self, "element_positions", pos)
        object.__setattr__(self, "sample_count", int(self.sample_count))

    @classmethod
    def linear(
        cls,
        n_elements: int,
        pitch: float,
        sound_speed: float = 1540.0,
        sampling_frequency: float = 20e6,
        sample_count: int = 1,
        transmit: Transmit | None = None,
    ) -> "ArrayGeometry":
        """Evenly spaced array centered on lateral position 0."""
        x = (np.arange(n_elements) - (n_elements - 1) / 2.0) * pitch
        pos = np.stack([x, np.zeros_like(x)], axis=1)
        return cls(pos, sound_speed, sampling_frequency, sample_count, transmit or Transmit())

    @property
    def element_count(self) -> int:
        return self.element_positions.shape[0]

    def with_sample_count(self, k: int) -> "ArrayGeometry":
        return ArrayGeometry(
            self.element_positions, self.sound_speed, self.sampling_frequency, k, self.transmit
        )


@dataclass(frozen=True)
class ImageGrid:
    width: int
    height: int
    pixel_pitch: tuple[float, float]
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if int(self.width) < 1 or int(self.height) < 1:
            raise ValueError("image grid must contain at least one pixel")
        dx, dz = (float(v) for v in self.pixel_pitch)
        if not (dx > 0 and dz > 0):
            raise ValueError("pixel pitches must be > 0")
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))
        object.__setattr__(self, "pixel_pitch", (dx, dz))
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))

    @property
    def size(self) -> int:
        return self.width * self.height

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def lateral(self) -> np.ndarray:
        return self.origin[0] + np.arange(self.width) * self.pixel_pitch[0]

    def axial(self) -> np.ndarray:
        return self.origin[1] + np.arange(self.height) * self.pixel_pitch[1]

    def positions(self) -> np.ndarray:
        """Pixel centers as an ``(N, 2)`` array in storage order."""
        zz, xx = np.meshgrid(self.axial(), self.lateral(), indexing="ij")
        return np.stack([xx.ravel(), zz.ravel()], axis=1)

    def position(self, pixel) -> np.ndarray:
        iz, ix = self.index(pixel)
        return np.array(
            [
                self.origin[0] + ix * self.pixel_pitch[0],
                self.origin[1] + iz * self.pixel_pitch[1],
            ]
        )

    def index(self, pixel) -> tuple[int, int]:
        """``(iz, ix)`` for either a flat index or an ``(iz, ix)`` pair."""
        if np.ndim(pixel) == 0:
            n = int(pixel)
            if not 0 <= n < self.size:
                raise IndexError(f"pixel {n} outside grid of {self.size}")
            return divmod(n, self.width)
        iz, ix = (int(v) for v in pixel)
        if not (0 <= iz < self.height and 0 <= ix < self.width):
            raise IndexError(f"pixel {(iz, ix)} outside grid {self.shape}")
        return iz, ix

    def flat(self, iz: int, ix: int) -> int:
        return iz * self.width + ix


@dataclass(frozen=True)
class PulseEchoResponse:
    samples: np.ndarray
    center: int = 0

    def __post_init__(self):
        s = np.array(self.samples, dtype=np.float64, copy=True).ravel()
        if s.size < 1:
            raise ValueError("pulse must have at least one sample")
        if not np.all(np.isfinite(s)):
            raise ValueError("pulse samples must be finite")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "center", int(self.center))

    @classmethod
    def delta(cls) -> "PulseEchoResponse":
        return cls(np.ones(1), 0)

    @classmethod
    def gaussian(
        cls, center_frequency: float, sampling_frequency: float, cycles: float = 3.0
    ) -> "PulseEchoResponse":
        """Cosine burst under a Gaussian envelope whose +-3 sigma span holds ``cycles`` periods."""
        sigma_t = cycles / (6.0 * center_frequency)
        half = int(math.ceil(3.0 * sigma_t * sampling_frequency))
        t = np.arange(-half, half + 1) / sampling_frequency
        s = np.cos(2 * np.pi * center_frequency * t) * np.exp(-0.5 * (t / sigma_t) ** 2)
        return cls(s, half)

    def __len__(self):
        return self.samples.size


class Window(str, enum.Enum):
    HANN = "hann"
    TUKEY = "tukey"
    RECT = "rect"
    NONE = "none"  # every element contributes with weight 1


@dataclass(frozen=True)
class ApodizationLaw:
    window: Window = Window.HANN
    f_number: float = 0.5
    taper: float = 0.25

    def __post_init__(self):
        object.__setattr__(self, "window", Window(self.window))
        if not self.f_number > 0:
            raise ValueError("f_number must be > 0")
        if not 0.0 <= self.taper <= 1.0:
            raise ValueError("taper fraction must be in [0, 1]")

    def weights(self, lateral_offset, depth) -> np.ndarray:
        """Receive weight for elements at ``lateral_offset`` from a pixel at ``depth``."""
        off = np.abs(np.asarray(lateral_offset, dtype=np.float64))
        depth = np.asarray(depth, dtype=np.float64)
        off, depth = np.broadcast_arrays(off, depth)
        if self.window is Window.NONE:
            return np.ones(off.shape)
        half = np.maximum(depth, 0.0) / (2.0 * self.f_number)
        with np.errstate(divide="ignore", invalid="ignore"):
            u = np.where(half > 0, off / np.where(half > 0, half, 1.0), np.where(off == 0, 0.0, np.inf))
        w = np.zeros(off.shape)
        inside = u <= 1.0
        ui = u[inside]
        if self.window is Window.RECT:
            w[inside] = 1.0
        elif self.window is Window.HANN:
            w[inside] = 0.5 * (1.0 + np.cos(np.pi * ui))
        else:
            a = self.taper
            if a == 0.0:
                w[inside] = 1.0
            else:
                flat = ui <= 1.0 - a
                wi = np.ones(ui.shape)
                edge = ~flat
                wi[edge] = 0.5 * (1.0 + np.cos(np.pi * (ui[edge] - (1.0 - a)) / a))
                w[inside] = wi
        return w

    def half_aperture(self, depth: float) -> float:
        """Lateral acceptance half-width at ``depth``; infinite for ``Window.NONE``."""
        if self.window is Window.NONE:
            return math.inf
        return max(depth, 0.0) / (2.0 * self.f_number)


@dataclass(frozen=True)
class AcquisitionSetup:
    geometry: ArrayGeometry
    grid: ImageGrid
    pulse: PulseEchoResponse
    apodization: ApodizationLaw = field(default_factory=ApodizationLaw)

    @property
    def n_pixels(self) -> int:
        return self.grid.size

    @property
    def n_samples(self) -> int:
        return self.geometry.sample_count * self.geometry.element_count

    def replace(self, **kw) -> "AcquisitionSetup":
        d = dict(geometry=self.geometry, grid=self.grid, pulse=self.pulse, apodization=self.apodization)
        d.update(kw)
        return AcquisitionSetup(**d)


def _transmit_path(geometry: ArrayGeometry, points: np.ndarray) -> np.ndarray:
    tx = geometry.transmit
    pos = geometry.element_positions
    if tx.kind is TransmitKind.PLANE_WAVE:
        direction = np.array([math.sin(tx.angle), math.cos(tx.angle)])
        # t = 0 when the first element fires
        return points @ direction - np.min(pos @ direction)
    src = pos[tx.element]
    return np.hypot(points[:, 0] - src[0], points[:, 1] - src[1])


def delay_matrix(setup: AcquisitionSetup) -> np.ndarray:
    """Two-way delays in samples, shape ``(N, L)``."""
    g = setup.geometry
    pts = setup.grid.positions()
    pos = g.element_positions
    rx = np.hypot(pts[:, None, 0] - pos[None, :, 0], pts[:, None, 1] - pos[None, :, 1])
    tau = (_transmit_path(g, pts)[:, None] + rx) / g.sound_speed * g.sampling_frequency
    near = np.rint(tau)
    return np.where(np.abs(tau - near) < DELAY_SNAP, near, tau)


def apodization_matrix(law: ApodizationLaw, setup: AcquisitionSetup) -> np.ndarray:
    """Receive apodization weights, shape ``(N, L)``."""
    pts = setup.grid.positions()
    pos = setup.geometry.element_positions
    return law.weights(pts[:, None, 0] - pos[None, :, 0], pts[:, None, 1] - pos[None, :, 1])


def compute_delay(setup: AcquisitionSetup, pixel, j: int) -> float:
    """Two-way delay in samples from the transmit event to pixel and back to receiver ``j``."""
    g = setup.geometry
    if not 0 <= j < g.element_count:
        raise IndexError(f"receiver {j} out of range")
    p = setup.grid.position(pixel)
    e = g.element_positions[j]
    rx = math.hypot(p[0] - e[0], p[1] - e[1])
    tau = (float(_transmit_path(g, p[None, :])[0]) + rx) / g.sound_speed * g.sampling_frequency
    near = round(tau)
    return float(near) if abs(tau - near) < DELAY_SNAP else tau


def apodization_weight(law: ApodizationLaw, setup: AcquisitionSetup, pixel, j: int) -> float:
    if not 0 <= j < setup.geometry.element_count:
        raise IndexError(f"receiver {j} out of range")
    p = setup.grid.position(pixel)
    e = setup.geometry.element_positions[j]
    return float(law.weights(p[0] - e[0], p[1] - e[1]))


def required_sample_count(
    geometry: ArrayGeometry, grid: ImageGrid, pulse: PulseEchoResponse, law: ApodizationLaw | None = None
) -> int:
    """Smallest K that holds every (weighted) echo including the pulse tail."""
    setup = AcquisitionSetup(geometry.with_sample_count(1), grid, pulse, law or ApodizationLaw(Window.NONE))
    tau = delay_matrix(setup)
    if law is not None:
        active = apodization_matrix(law, setup) > 0
        tau = tau[active] if active.any() else tau
    tail = len(pulse) - pulse.center
    return int(math.floor(float(np.max(tau)))) + tail + 1
