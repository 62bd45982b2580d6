"""Linear observation models and their SVD spectral space."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

RANK_EPS = 1e-10


class SVDConvergenceError(RuntimeError):
    pass


class NoiseKind(str, enum.Enum):
    WHITE = "white"
    CORRELATED = "correlated"


class Provenance(str, enum.Enum):
    DRUS = "drus"
    WDRUS = "wdrus"
    CUSTOM = "custom"


@dataclass(frozen=True)
class NoiseLaw:
    """Noise on ``y_d``: white with std ``scale``, or ``scale * F n`` for a cov factor ``F``."""

    kind: NoiseKind = NoiseKind.WHITE
    scale: float = 0.0
    factor: object = None

    def __post_init__(self):
        object.__setattr__(self, "kind", NoiseKind(self.kind))
        if self.scale < 0:
            raise ValueError("noise scale must be >= 0")


@dataclass(frozen=True)
class LinearModel:
    """``y_d = A x + n_d`` with ``A`` of shape ``(m, N)``.

    ``transform`` (optional) maps raw channel data to ``y_d``; it is ``B`` for
    the beamformed model and ``C B`` for the whitened one.
    """

    matrix: np.ndarray
    noise: NoiseLaw = field(default_factory=NoiseLaw)
    provenance: Provenance = Provenance.CUSTOM
    transform: object = None
    image_shape: tuple | None = None

    def __post_init__(self):
        a = np.array(self.matrix, dtype=np.float64, copy=True)
        if a.ndim != 2:
            raise ValueError("model matrix must be 2-D")
        if not np.all(np.isfinite(a)):
            raise ValueError("model matrix must be finite")
        a.setflags(write=False)
        object.__setattr__(self, "matrix", a)
        object.__setattr__(self, "provenance", Provenance(self.provenance))
        if self.image_shape is not None and int(np.prod(self.image_shape)) != a.shape[1]:
            raise ValueError("image_shape does not match the model's column count")

    @property
    def shape(self):
        return self.matrix.shape

    def observe(self, y_raw) -> np.ndarray:
        """``y_d`` from raw channel data through the recorded transform."""
        if self.transform is None:
            raise ValueError("model has no measurement transform")
        t = self.transform
        y_raw = np.asarray(y_raw, dtype=np.float64).ravel()
        return t.matvec(y_raw) if hasattr(t, "matvec") else np.asarray(t) @ y_raw


@dataclass(frozen=True)
class SpectralDecomposition:
    U: np.ndarray
    s: np.ndarray
    V: np.ndarray
    rank_eps: float = RANK_EPS

    def __post_init__(self):
        # one memory layout regardless of origin (solver output or a cache
        # file), so downstream BLAS products are bit-reproducible
        for name in ("U", "s", "V"):
            a = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            if a is getattr(self, name) and a.flags.writeable:
                a = a.copy()
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def n(self) -> int:
        return self.V.shape[0]

    @property
    def m(self) -> int:
        return self.U.shape[0]

    @property
    def singular_values(self) -> np.ndarray:
        """Length-``N`` singular values, zero-padded past ``min(m, N)``."""
        full = np.zeros(self.n)
        full[: self.s.size] = self.s
        return full

    @property
    def observed(self) -> np.ndarray:
        """Mask of spectral coordinates with a usable singular value."""
        s = self.singular_values
        smax = s[0] if s.size else 0.0
        return s > self.rank_eps * smax

    @property
    def rank(self) -> int:
        return int(self.observed.sum())


def _is_symmetric(a: np.ndarray) -> bool:
    if a.shape[0] != a.shape[1]:
        return False
    scale = np.max(np.abs(a)) if a.size else 0.0
    return bool(np.max(np.abs(a - a.T)) <= 1e-12 * max(scale, 1e-300))


def svd(model, rank_eps: float = RANK_EPS) -> SpectralDecomposition:
    """Full SVD ``A = U diag(s) V^T`` with singular values descending.

    Symmetric matrices go through the symmetric eigensolver (sign folded into
    ``U``), which is several times faster for the ``B H`` model.
    """
    a = model.matrix if isinstance(model, LinearModel) else np.asarray(model, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise ValueError("model matrix must be finite")
    try:
        if _is_symmetric(a):
            e, q = np.linalg.eigh(0.5 * (a + a.T))
            order = np.argsort(-np.abs(e), kind="stable")
            e, q = e[order], q[:, order]
            s = np.abs(e)
            sign = np.where(e < 0, -1.0, 1.0)
            u = q * sign[None, :]
            v = q
        else:
            u, s, vt = np.linalg.svd(a, full_matrices=True)
            v = vt.T
    except np.linalg.LinAlgError as exc:
        raise SVDConvergenceError(f"SVD failed for matrix of shape {a.shape}: {exc}") from exc
    return SpectralDecomposition(u, s, v, rank_eps)


def to_spectral_measurement(d: SpectralDecomposition, y_d) -> np.ndarray:
    """``S^+ U^T y_d``, length ``N``; unobserved coordinates are NaN (missing, not zero)."""
    y_d = np.asarray(y_d, dtype=np.float64)
    if y_d.shape[0] != d.m:
        raise ValueError(f"measurement has length {y_d.shape[0]}, model has {d.m} rows")
    uty = d.U.T @ y_d
    out = np.full((d.n,) + y_d.shape[1:], np.nan)
    idx = np.flatnonzero(d.observed)
    s = d.singular_values[idx]
    out[idx] = uty[idx] / (s if y_d.ndim == 1 else s[:, None])
    return out


def spectral_noise_std(d: SpectralDecomposition, sigma_d: float) -> np.ndarray:
    """Per-coordinate noise std ``sigma_d / s_i`` of the spectral measurement (inf where missing)."""
    s = d.singular_values
    with np.errstate(divide="ignore"):
        return np.where(d.observed, sigma_d / np.where(d.observed, s, 1.0), np.inf)


def to_spectral_image(d: SpectralDecomposition, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != d.n:
        raise ValueError(f"image has {x.shape[0]} pixels, decomposition expects {d.n}")
    return d.V.T @ x


def from_spectral_image(d: SpectralDecomposition, xbar) -> np.ndarray:
    xbar = np.asarray(xbar, dtype=np.float64)
    if xbar.shape[0] != d.n:
        raise ValueError(f"spectral image has {xbar.shape[0]} entries, decomposition expects {d.n}")
    return d.V @ xbar
