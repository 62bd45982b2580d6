"""Discretized pulse-echo operator ``H`` mapping reflectivity to channel data.

Rows are receiver-major: receiver ``j`` owns rows ``j*K .. j*K + K - 1``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .geometry import (
    AcquisitionSetup,
    ApodizationLaw,
    PulseEchoResponse,
    apodization_matrix,
    delay_matrix,
)
from .operators import DENSE_THRESHOLD, StoredMatrix


@dataclass(frozen=True)
class ForwardOperator:
    matrix: StoredMatrix
    setup: AcquisitionSetup | None = None

    @classmethod
    def from_matrix(cls, h) -> "ForwardOperator":
        """Wrap an explicit matrix (no acquisition geometry attached)."""
        h = np.asarray(h, dtype=np.float64)
        if h.ndim != 2:
            raise ValueError("operator matrix must be 2-D")
        return cls(StoredMatrix.from_scipy(h, dense=True))

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    @property
    def image_shape(self):
        return self.setup.grid.shape if self.setup is not None else None

    @property
    def n_samples(self) -> int:
        return self.setup.geometry.sample_count

    @property
    def n_receivers(self) -> int:
        return self.setup.geometry.element_count

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def block(self, j: int) -> slice:
        k = self.n_samples
        return slice(j * k, (j + 1) * k)

    def digest(self) -> str:
        return self.matrix.digest()


def build_forward_operator(
    setup: AcquisitionSetup,
    pulse: PulseEchoResponse | None = None,
    law: ApodizationLaw | None = None,
    *,
    dense_threshold: float = DENSE_THRESHOLD,
) -> ForwardOperator:
    """Assemble ``H`` column by column.

    Column ``n`` holds, for each receiver, the pulse delayed by the two-way
    time of flight to pixel ``n`` and scaled by the receive apodization.
    ``pulse`` and ``law`` default to those of ``setup``. Echo samples past the
    recording window are truncated.
    """
    pulse = setup.pulse if pulse is None else pulse
    law = setup.apodization if law is None else law
    setup = setup.replace(pulse=pulse, apodization=law)
    if setup.grid.size < 1:
        raise ValueError("empty image grid")
    if not np.all(np.isfinite(pulse.samples)):
        raise ValueError("pulse samples must be finite")

    tau = delay_matrix(setup)
    w = apodization_matrix(law, setup)
    k = setup.geometry.sample_count
    indptr, rows, vals = kernels.assemble_echo_columns(tau, w, pulse.samples, pulse.center, k)
    shape = (k * setup.geometry.element_count, setup.grid.size)
    mat = StoredMatrix.from_csc_triplets(shape, indptr, rows, vals, threshold=dense_threshold)
    return ForwardOperator(mat, setup)


def apply_forward(op: ForwardOperator, x) -> np.ndarray:
    """Noiseless channel data ``y = H x``, flattened receiver-major."""
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size != op.shape[1]:
        raise ValueError(f"image has {x.size} pixels, operator expects {op.shape[1]}")
    return op.matrix.matvec(x)


def channel_matrix(op: ForwardOperator, y) -> np.ndarray:
    """Reshape flat channel data to ``(L, K)``."""
    return np.asarray(y).reshape(op.n_receivers, op.n_samples)
