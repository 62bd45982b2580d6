import numpy as np
import pytest

from drus.beamforming import (
    Beamformer,
    BeamformerKind,
    beamform,
    compose_model,
    das_beamformer,
    matched_filter,
)
from drus.forward import apply_forward, build_forward_operator
from drus.geometry import (
    AcquisitionSetup,
    ApodizationLaw,
    ArrayGeometry,
    ImageGrid,
    PulseEchoResponse,
    Window,
)
from drus.spectral import NoiseKind, Provenance



def test_matched_filter_is_transpose(small_setup):
    op = build_forward_operator(small_setup)
    b = matched_filter(op)
    assert b.kind is BeamformerKind.MATCHED_FILTER
    assert np.array_equal(b.toarray(), op.toarray().T)


def test_das_hand_example():
    # two receivers, one pixel: delays 3.0 and 4.5 samples
    c, fs = 1540.0, 20e6
    geo = ArrayGeometry.linear(1, 1e-4, c, fs, 10)
    grid = ImageGrid(1, 1, (1e-4, 1e-4), (0.0, 3 * c / (2 * fs)))
    s = AcquisitionSetup(geo, grid, PulseEchoResponse.delta(), ApodizationLaw(Window.NONE))
    b = das_beamformer(s).toarray()
    want = np.zeros((1, 10))
    want[0, 3] = 1.0
    assert np.array_equal(b, want)
    # fractional delay 4.5 -> half weight on samples 4 and 5
    grid = ImageGrid(1, 1, (1e-4, 1e-4), (0.0, 4.5 * c / (2 * fs)))
    s = AcquisitionSetup(geo, grid, PulseEchoResponse.delta(), ApodizationLaw(Window.NONE))
    row = das_beamformer(s).toarray()[0]
    assert row[4] == pytest.approx(0.5) and row[5] == pytest.approx(0.5)


def test_das_normalization_counts_active_receivers(small_setup):
    raw = das_beamformer(small_setup, normalize=False).toarray()
    norm = das_beamformer(small_setup).toarray()
    k = small_setup.geometry.sample_count
    nrx = small_setup.geometry.element_count
    blocks = raw.reshape(raw.shape[0], nrx, k)
    active = np.count_nonzero(np.abs(blocks).sum(axis=2) > 0, axis=1)
    assert np.allclose(norm * active[:, None], raw)


def test_das_of_uniform_data_is_mean_apodization(small_setup):
    # every sample equal to one: each pixel reads sum_j w_j / count
    b = das_beamformer(small_setup, ApodizationLaw(Window.RECT, 0.5))
    img = beamform(b, np.ones(b.shape[1]))
    inside = img > 0
    assert np.allclose(img[inside], 1.0)


def test_beamform_rejects_wrong_length(small_setup):
    b = matched_filter(build_forward_operator(small_setup))
    with pytest.raises(ValueError):
        beamform(b, np.zeros(b.shape[1] - 1))


def test_compose_model_matches_products(small_setup, rng):
    op = build_forward_operator(small_setup)
    b = das_beamformer(small_setup)
    m = compose_model(b, op, gamma=0.3)
    assert m.provenance is Provenance.DRUS
    assert m.noise.kind is NoiseKind.CORRELATED and m.noise.scale == 0.3
    x = rng.standard_normal(op.shape[1])
    assert np.allclose(m.matrix @ x, beamform(b, apply_forward(op, x)), rtol=1e-12, atol=1e-12)
    assert np.allclose(m.observe(apply_forward(op, x)), m.matrix @ x, atol=1e-12)


def test_matched_filter_model_is_exactly_symmetric(small_setup):
    op = build_forward_operator(small_setup)
    a = compose_model(matched_filter(op), op).matrix
    assert np.array_equal(a, a.T)
    assert np.min(np.linalg.eigvalsh(a)) > -1e-9 * np.max(np.abs(a))


def test_compose_shape_mismatch(small_setup):
    op = build_forward_operator(small_setup)
    with pytest.raises(ValueError):
        compose_model(Beamformer.from_matrix(np.eye(3)), op)
