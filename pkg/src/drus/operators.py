"""Matrix storage shared by the forward operator and the beamformers."""

from __future__ import annotations

import hashlib

import numpy as np
import scipy.sparse as sp

from . import kernels

DENSE_THRESHOLD = 0.25


class StoredMatrix:
    """A real matrix held either dense or as sorted CSC triplets.

    ``matvec`` accumulates column by column in index order for both storage
    kinds, so switching storage never changes a result bit. ``matmat`` and the
    scipy view are for bulk work where that guarantee is not needed.
    """

    def __init__(self, shape, *, dense=None, csc=None):
        self.shape = (int(shape[0]), int(shape[1]))
        if (dense is None) == (csc is None):
            raise ValueError("exactly one of dense/csc must be given")
        if dense is not None:
            dense = np.array(dense, dtype=np.float64, order="C", copy=True)
            if dense.shape != self.shape:
                raise ValueError(f"dense shape {dense.shape} != {self.shape}")
            if not np.all(np.isfinite(dense)):
                raise ValueError("matrix entries must be finite")
            dense.setflags(write=False)
            self._dense = dense
            self._csc = None
        else:
            indptr, indices, data = (np.asarray(a) for a in csc)
            indptr = indptr.astype(np.int64)
            indices = indices.astype(np.int64)
            data = data.astype(np.float64)
            if indptr.size != self.shape[1] + 1:
                raise ValueError("indptr length must be n_cols + 1")
            if not np.all(np.isfinite(data)):
                raise ValueError("matrix entries must be finite")
            for a in (indptr, indices, data):
                a.setflags(write=False)
            self._csc = (indptr, indices, data)
            self._dense = None
        self._scipy = None

    @classmethod
    def from_csc_triplets(cls, shape, indptr, indices, data, threshold=DENSE_THRESHOLD):
        """Pick dense storage when the nonzero fraction exceeds ``threshold``."""
        m = cls(shape, csc=(indptr, indices, data))
        total = m.shape[0] * m.shape[1]
        if total and m.nnz / total > threshold:
            return cls(shape, dense=m.toarray())
        return m

    @classmethod
    def from_scipy(cls, mat, *, dense=False):
        mat = sp.csc_matrix(mat)
        mat.sum_duplicates()
        mat.sort_indices()
        if dense:
            return cls(mat.shape, dense=mat.toarray())
        return cls(mat.shape, csc=(mat.indptr, mat.indices, mat.data))

    @property
    def is_dense(self) -> bool:
        return self._dense is not None

    @property
    def nnz(self) -> int:
        if self._dense is not None:
            return int(np.count_nonzero(self._dense))
        return int(self._csc[2].size)

    @property
    def csc(self):
        if self._csc is None:
            m = sp.csc_matrix(self._dense)
            m.sort_indices()
            return (m.indptr.astype(np.int64), m.indices.astype(np.int64), m.data)
        return self._csc

    def toarray(self) -> np.ndarray:
        if self._dense is not None:
            return self._dense.copy()
        return self.scipy().toarray()

    def scipy(self):
        """Read-only scipy CSC view (or a dense ndarray for dense storage)."""
        if self._dense is not None:
            return self._dense
        if self._scipy is None:
            indptr, indices, data = self._csc
            self._scipy = sp.csc_matrix((data, indices, indptr), shape=self.shape)
        return self._scipy

    def matvec(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 1 or x.size != self.shape[1]:
            raise ValueError(f"expected vector of length {self.shape[1]}, got shape {x.shape}")
        if self._dense is not None:
            return kernels.dense_matvec(self._dense, x)
        indptr, indices, data = self._csc
        return kernels.csc_matvec(indptr, indices, data, x, self.shape[0])

    def matmat(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[0] != self.shape[1]:
            raise ValueError(f"expected leading dimension {self.shape[1]}, got {x.shape[0]}")
        out = self.scipy() @ x
        return np.asarray(out)

    def transpose(self) -> "StoredMatrix":
        if self._dense is not None:
            return StoredMatrix(self.shape[::-1], dense=self._dense.T)
        t = self.scipy().T.tocsc()
        t.sort_indices()
        return StoredMatrix(t.shape, csc=(t.indptr, t.indices, t.data))

    @property
    def T(self) -> "StoredMatrix":
        return self.transpose()

    def digest(self) -> str:
        """Content hash independent of the storage kind."""
        h = hashlib.sha256()
        h.update(np.asarray(self.shape, dtype="<i8").tobytes())
        indptr, indices, data = self.csc
        for a, dt in ((indptr, "<i8"), (indices, "<i8"), (data, "<f8")):
            h.update(np.ascontiguousarray(a, dtype=dt).tobytes())
        return h.hexdigest()
