"""Pure numpy implementation of the assembly and apply kernels.

Mirrors ``_kernels.pyx`` operation for operation so both backends produce
bit-identical arrays.
"""

import numpy as np


def assemble_echo_columns(delays, weights, pulse, center, n_samples):
    """Column-major triplets of the echo matrix.

    For pixel ``n`` and receiver ``j`` with nonzero weight, the pulse is placed
    at fractional delay ``delays[n, j]`` (linear interpolation between the two
    neighbouring integer shifts) inside receiver block ``j``. Rows that fall
    outside ``[0, n_samples)`` are dropped. Returns ``(indptr, rows, vals)``
    of a CSC matrix with ``n_samples * L`` rows and ``N`` columns.
    """
    delays = np.ascontiguousarray(delays, dtype=np.float64)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    pulse = np.ascontiguousarray(pulse, dtype=np.float64)
    n_pix, n_rx = delays.shape
    p = pulse.size
    ext = np.zeros(p + 2)
    ext[1:-1] = pulse

    k0 = np.floor(delays)
    frac = delays - k0
    offs = np.arange(p + 1)
    # row within the receiver block for each (n, j, o)
    r = k0.astype(np.int64)[:, :, None] - center + offs[None, None, :]
    cur = ext[offs + 1]
    prev = ext[offs]
    w = weights[:, :, None]
    f = frac[:, :, None]
    vals = w * ((1.0 - f) * cur + f * prev)
    keep = (w != 0.0) & (r >= 0) & (r < n_samples) & (vals != 0.0)
    rows = r + (np.arange(n_rx, dtype=np.int64) * n_samples)[None, :, None]
    counts = keep.reshape(n_pix, -1).sum(axis=1)
    indptr = np.zeros(n_pix + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    return indptr, rows[keep].astype(np.int64), vals[keep]


def assemble_das_rows(delays, weights, n_samples, normalize):
    """Row-major triplets of the delay-and-sum matrix (``N`` rows, ``K * L`` columns).

    Each row picks, per active receiver, the two samples bracketing the delay
    with linear-interpolation weights. With ``normalize`` the row is divided
    by its count of nonzero-weight receivers. Returns ``(indptr, cols, vals)``.
    """
    delays = np.ascontiguousarray(delays, dtype=np.float64)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    n_pix, n_rx = delays.shape
    active = weights != 0.0
    cnt = active.sum(axis=1).astype(np.float64)
    if not normalize:
        cnt = np.ones(n_pix)
    cnt = np.where(cnt > 0, cnt, 1.0)[:, None, None]

    k0 = np.floor(delays)
    frac = delays - k0
    r = k0.astype(np.int64)[:, :, None] + np.arange(2)[None, None, :]
    w = weights[:, :, None]
    f = frac[:, :, None]
    lin = np.concatenate([1.0 - f, f], axis=2)
    vals = (w * lin) / cnt
    keep = active[:, :, None] & (r >= 0) & (r < n_samples) & (vals != 0.0)
    cols = r + (np.arange(n_rx, dtype=np.int64) * n_samples)[None, :, None]
    counts = keep.reshape(n_pix, -1).sum(axis=1)
    indptr = np.zeros(n_pix + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    return indptr, cols[keep].astype(np.int64), vals[keep]


def csc_matvec(indptr, indices, data, x, n_rows):
    """``y = A x`` accumulated column by column in index order."""
    y = np.zeros(n_rows)
    x = np.asarray(x, dtype=np.float64)
    for c in range(indptr.size - 1):
        lo, hi = indptr[c], indptr[c + 1]
        if hi > lo:
            # row indices are unique within a column
            y[indices[lo:hi]] += data[lo:hi] * x[c]
    return y


def dense_matvec(a, x):
    """``y = A x`` accumulated column by column, same order as ``csc_matvec``."""
    a = np.asarray(a, dtype=np.float64)
    y = np.zeros(a.shape[0])
    for c in range(a.shape[1]):
        y += a[:, c] * x[c]
    return y
