"""Whitening of the beamformed noise and the whitened model ``C B y = C B H x + C B n``.

With ``B B^T = V diag(lam) V^T`` the whitener keeps the ``M`` leading
eigenpairs, ``C = diag(lam_M)^(-1/2) V_M^T``, so ``C B B^T C^T = I_M``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .beamforming import Beamformer
from .forward import ForwardOperator
from .spectral import LinearModel, NoiseKind, NoiseLaw, Provenance

DEFAULT_EPS = 1e-6


class DegenerateBeamformerError(ValueError):
    pass


@dataclass(frozen=True)
class TruncationRule:
    """Keep eigenvalues ``>= eps * lam_max``, or exactly ``count`` of them when given."""

    eps: float = DEFAULT_EPS
    count: int | None = None

    def __post_init__(self):
        if not self.eps >= 0:
            raise ValueError("eps must be >= 0")
        if self.count is not None and self.count < 1:
            raise ValueError("count must be >= 1")

    def retained(self, lam: np.ndarray) -> int:
        pos = int(np.count_nonzero(lam > 0))
        if self.count is not None:
            return min(self.count, pos)
        return min(int(np.count_nonzero(lam >= self.eps * lam[0])), pos)


@dataclass(frozen=True)
class Whitener:
    C: np.ndarray
    eigenvalues: np.ndarray
    V: np.ndarray
    M: int
    rule: TruncationRule

    def apply(self, v) -> np.ndarray:
        return self.C @ np.asarray(v, dtype=np.float64)


def gram(b: Beamformer) -> np.ndarray:
    """``B B^T`` as a dense symmetric matrix."""
    m = b.matrix.scipy()
    g = m @ m.T
    g = g.toarray() if sp.issparse(g) else np.asarray(g)
    return 0.5 * (g + g.T)


def eigendecompose_gram(b: Beamformer) -> tuple[np.ndarray, np.ndarray]:
    """Eigenpairs of ``B B^T`` with eigenvalues sorted descending and clipped at 0."""
    g = gram(b)
    if not np.all(np.isfinite(g)):
        raise ValueError("beamformer has non-finite entries")
    try:
        lam, v = np.linalg.eigh(g)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError(f"eigendecomposition failed: {exc}") from exc
    order = np.argsort(-lam, kind="stable")
    return v[:, order], np.maximum(lam[order], 0.0)


def build_whitener(V, lam, rule: TruncationRule | None = None) -> Whitener:
    rule = rule or TruncationRule()
    lam = np.asarray(lam, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    if lam.size == 0 or not lam[0] > 0:
        raise DegenerateBeamformerError("B B^T has no positive eigenvalue")
    if np.any(np.diff(lam) > 0):
        raise ValueError("eigenvalues must be sorted descending")
    m = rule.retained(lam)
    c = V[:, :m].T / np.sqrt(lam[:m])[:, None]
    return Whitener(c, lam, V, m, rule)


class ComposedTransform:
    """``y -> C (B y)`` without materializing ``C B``."""

    def __init__(self, c: np.ndarray, b):
        self.c = c
        self.b = b
        self.shape = (c.shape[0], b.shape[1])

    def matvec(self, y):
        return self.c @ self.b.matvec(y)

    def matmat(self, y):
        return self.c @ self.b.matmat(y)


def compose_whitened_model(w: Whitener, b: Beamformer, op: ForwardOperator,
                           gamma: float = 0.0) -> LinearModel:
    """``A = C B H`` (``M x N``) with white noise of std ``gamma``."""
    if w.C.shape[1] != b.shape[0] or b.shape[1] != op.shape[0]:
        raise ValueError(f"shapes do not chain: C {w.C.shape}, B {b.shape}, H {op.shape}")
    bh = b.matrix.scipy() @ op.matrix.scipy()
    bh = bh.toarray() if sp.issparse(bh) else np.asarray(bh)
    return LinearModel(
        w.C @ bh,
        NoiseLaw(NoiseKind.WHITE, gamma),
        Provenance.WDRUS,
        transform=ComposedTransform(w.C, b.matrix),
        image_shape=op.image_shape,
    )
