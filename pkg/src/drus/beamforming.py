"""Image-domain projections ``B`` and the beamformed model ``B y = B H x + B n``."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import kernels
from .forward import ForwardOperator
from .geometry import AcquisitionSetup, ApodizationLaw, apodization_matrix, delay_matrix
from .operators import StoredMatrix
from .spectral import LinearModel, NoiseKind, NoiseLaw, Provenance


class BeamformerKind(str, enum.Enum):
    MATCHED_FILTER = "matched_filter"
    DELAY_AND_SUM = "delay_and_sum"
    CUSTOM = "custom"


@dataclass(frozen=True)
class Beamformer:
    matrix: StoredMatrix
    kind: BeamformerKind = BeamformerKind.CUSTOM
    law: ApodizationLaw | None = None
    setup: AcquisitionSetup | None = None
    image_shape: tuple | None = None

    @property
    def shape(self):
        return self.matrix.shape

    @classmethod
    def from_matrix(cls, b) -> "Beamformer":
        b = np.asarray(b, dtype=np.float64)
        if b.ndim != 2:
            raise ValueError("beamformer matrix must be 2-D")
        return cls(StoredMatrix.from_scipy(sp.csc_matrix(b)))

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()


def matched_filter(op: ForwardOperator) -> Beamformer:
    """``B = H^T``."""
    return Beamformer(
        op.matrix.transpose(),
        BeamformerKind.MATCHED_FILTER,
        op.setup.apodization if op.setup is not None else None,
        op.setup,
        op.image_shape,
    )


def das_beamformer(setup: AcquisitionSetup, law: ApodizationLaw | None = None, *,
                   normalize: bool = True) -> Beamformer:
    """Delay-and-sum: per receiver, the linearly interpolated sample at the pixel's delay.

    Rows are scaled by apodization and, with ``normalize``, divided by the
    number of receivers with nonzero weight for that pixel.
    """
    law = setup.apodization if law is None else law
    tau = delay_matrix(setup)
    w = apodization_matrix(law, setup)
    k = setup.geometry.sample_count
    indptr, cols, vals = kernels.assemble_das_rows(tau, w, k, normalize)
    shape = (setup.grid.size, k * setup.geometry.element_count)
    csr = sp.csr_matrix((vals, cols, indptr), shape=shape)
    return Beamformer(StoredMatrix.from_scipy(csr), BeamformerKind.DELAY_AND_SUM, law, setup,
                      setup.grid.shape)


def beamform(b: Beamformer, y) -> np.ndarray:
    """``B y`` as a flat image vector."""
    y = np.asarray(y, dtype=np.float64).ravel()
    if y.size != b.shape[1]:
        raise ValueError(f"channel data has {y.size} samples, beamformer expects {b.shape[1]}")
    return b.matrix.matvec(y)


def compose_model(b: Beamformer, op: ForwardOperator, gamma: float = 0.0) -> LinearModel:
    """Materialize ``A = B H`` with correlated noise ``gamma * B n``."""
    if b.shape[1] != op.shape[0]:
        raise ValueError(f"beamformer {b.shape} does not chain with operator {op.shape}")
    bh = b.matrix.scipy() @ op.matrix.scipy()
    a = bh.toarray() if sp.issparse(bh) else np.asarray(bh)
    if b.kind is BeamformerKind.MATCHED_FILTER:
        a = 0.5 * (a + a.T)
    return LinearModel(
        a,
        NoiseLaw(NoiseKind.CORRELATED, gamma, b.matrix),
        Provenance.DRUS,
        transform=b.matrix,
        image_shape=op.image_shape,
    )
