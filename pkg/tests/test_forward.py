import numpy as np
import pytest

from drus import _kernels_py, kernels
from drus.forward import ForwardOperator, apply_forward, build_forward_operator, channel_matrix
from drus.geometry import (
    AcquisitionSetup,
    ApodizationLaw,
    ArrayGeometry,
    ImageGrid,
    PulseEchoResponse,
    Transmit,
    Window,
    apodization_matrix,
    delay_matrix,
)
from drus.operators import StoredMatrix

from conftest import brute_force_channel_data, make_setup


def test_matches_direct_summation(rng):
    s = make_setup(nx=8, nz=8, n_elements=4, transmit=Transmit.plane_wave(0.15))
    op = build_forward_operator(s)
    for _ in range(5):
        x = rng.standard_normal(s.grid.size)
        want = brute_force_channel_data(s, x)
        got = apply_forward(op, x)
        assert np.linalg.norm(got - want) <= 1e-9 * np.linalg.norm(want)


def test_synthetic_aperture_matches_direct_summation(rng):
    s = make_setup(nx=6, nz=6, n_elements=4, transmit=Transmit.synthetic_aperture(2),
                   window=Window.TUKEY, f_number=0.8)
    op = build_forward_operator(s)
    x = rng.standard_normal(s.grid.size)
    want = brute_force_channel_data(s, x)
    assert np.linalg.norm(apply_forward(op, x) - want) <= 1e-9 * np.linalg.norm(want)


def _single_pixel_setup(depth_samples, k=32, pulse=None):
    c, fs = 1540.0, 20e6
    geo = ArrayGeometry.linear(1, 1e-4, c, fs, k)
    grid = ImageGrid(1, 1, (1e-4, 1e-4), (0.0, depth_samples * c / (2 * fs)))
    return AcquisitionSetup(geo, grid, pulse or PulseEchoResponse.delta(), ApodizationLaw(Window.NONE))


def test_integer_delay_places_delta_exactly():
    op = build_forward_operator(_single_pixel_setup(7))
    col = op.toarray()[:, 0]
    assert col[7] == 1.0 and np.count_nonzero(col) == 1


def test_fractional_delay_splits_between_neighbours():
    op = build_forward_operator(_single_pixel_setup(7.25))
    col = op.toarray()[:, 0]
    assert col[7] == pytest.approx(0.75) and col[8] == pytest.approx(0.25)


def test_echo_past_window_is_truncated():
    pulse = PulseEchoResponse(np.array([1.0, 2.0, 3.0]), 1)
    op = build_forward_operator(_single_pixel_setup(9, k=10, pulse=pulse))
    col = op.toarray()[:, 0]
    assert col[8] == 1.0 and col[9] == 2.0 and col.sum() == 3.0


def test_receiver_major_layout(small_setup):
    op = build_forward_operator(small_setup)
    x = np.zeros(small_setup.grid.size)
    x[10] = 1.0
    y = channel_matrix(op, apply_forward(op, x))
    assert y.shape == (small_setup.geometry.element_count, small_setup.geometry.sample_count)
    h = op.toarray()
    for j in range(y.shape[0]):
        assert np.array_equal(y[j], h[op.block(j), 10])


def test_dense_and_sparse_storage_are_bit_identical(small_setup, rng):
    sparse = build_forward_operator(small_setup, dense_threshold=1.0)
    dense = build_forward_operator(small_setup, dense_threshold=0.0)
    assert not sparse.matrix.is_dense and dense.matrix.is_dense
    x = rng.standard_normal(small_setup.grid.size)
    assert np.array_equal(apply_forward(sparse, x), apply_forward(dense, x))
    assert sparse.digest() == dense.digest()


def test_dimension_mismatch_raises(small_setup):
    op = build_forward_operator(small_setup)
    with pytest.raises(ValueError):
        apply_forward(op, np.zeros(small_setup.grid.size + 1))


def test_nonfinite_pulse_rejected(small_setup):
    with pytest.raises(ValueError):
        build_forward_operator(small_setup, pulse=PulseEchoResponse(np.array([1.0, np.nan])))


def test_from_matrix_wraps_explicit_operator():
    op = ForwardOperator.from_matrix(np.eye(3))
    assert op.shape == (3, 3) and op.image_shape is None


# -- backend parity ----------------------------------------------------------

BACKENDS = kernels.backends()


@pytest.mark.skipif("cython" not in BACKENDS, reason="compiled extension not built")
def test_backends_assemble_identically():
    s = make_setup(nx=12, nz=10, n_elements=6, transmit=Transmit.plane_wave(0.1))
    tau, w = delay_matrix(s), apodization_matrix(s.apodization, s)
    args = (tau, w, s.pulse.samples, s.pulse.center, s.geometry.sample_count)
    a = BACKENDS["cython"].assemble_echo_columns(*args)
    b = _kernels_py.assemble_echo_columns(*args)
    for u, v in zip(a, b):
        assert np.array_equal(np.asarray(u), np.asarray(v))
    a = BACKENDS["cython"].assemble_das_rows(tau, w, s.geometry.sample_count, True)
    b = _kernels_py.assemble_das_rows(tau, w, s.geometry.sample_count, True)
    for u, v in zip(a, b):
        assert np.array_equal(np.asarray(u), np.asarray(v))


@pytest.mark.skipif("cython" not in BACKENDS, reason="compiled extension not built")
def test_backends_apply_identically(small_setup, rng):
    op = build_forward_operator(small_setup)
    indptr, indices, data = op.matrix.csc
    x = rng.standard_normal(small_setup.grid.size)
    n = op.shape[0]
    a = BACKENDS["cython"].csc_matvec(indptr, indices, data, x, n)
    b = _kernels_py.csc_matvec(indptr, indices, data, x, n)
    assert np.array_equal(np.asarray(a), b)
    dense = op.toarray()
    assert np.array_equal(np.asarray(BACKENDS["cython"].dense_matvec(dense, x)),
                          _kernels_py.dense_matvec(dense, x))
    assert np.array_equal(b, _kernels_py.dense_matvec(dense, x))


def test_stored_matrix_transpose_roundtrip(rng):
    a = rng.standard_normal((5, 4))
    a[a < 0.3] = 0
    m = StoredMatrix.from_scipy(a)
    assert np.array_equal(m.T.T.toarray(), a)
    assert np.array_equal(m.T.toarray(), a.T)
