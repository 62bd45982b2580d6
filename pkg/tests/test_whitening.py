import numpy as np
import pytest

from drus.beamforming import Beamformer, das_beamformer, matched_filter
from drus.forward import apply_forward, build_forward_operator
from drus.spectral import NoiseKind, Provenance
from drus.whitening import (
    DegenerateBeamformerError,
    TruncationRule,
    build_whitener,
    compose_whitened_model,
    eigendecompose_gram,
    gram,
)


@pytest.mark.parametrize("kind", ["das", "mf"])
def test_whitened_noise_covariance_is_identity(small_setup, kind):
    op = build_forward_operator(small_setup)
    b = das_beamformer(small_setup) if kind == "das" else matched_filter(op)
    v, lam = eigendecompose_gram(b)
    w = build_whitener(v, lam)
    cb = w.C @ gram(b) @ w.C.T
    assert np.max(np.abs(cb - np.eye(w.M))) < 1e-8


def test_eigenvalues_sorted_and_nonnegative(small_setup):
    v, lam = eigendecompose_gram(das_beamformer(small_setup))
    assert np.all(np.diff(lam) <= 0) and lam.min() >= 0
    assert np.allclose(v.T @ v, np.eye(v.shape[1]), atol=1e-10)


def test_truncation_rules():
    lam = np.array([4.0, 1.0, 1e-3, 1e-9, 0.0])
    assert TruncationRule(1e-6).retained(lam) == 3
    assert TruncationRule(0.1).retained(lam) == 2
    assert TruncationRule(count=2).retained(lam) == 2
    assert TruncationRule(count=10).retained(lam) == 4  # never past the positive ones


def test_identity_beamformer_gives_identity_whitener():
    b = Beamformer.from_matrix(np.eye(5))
    w = build_whitener(*eigendecompose_gram(b))
    assert w.M == 5
    assert np.allclose(np.abs(w.C), np.abs(np.eye(5)[np.argmax(np.abs(w.C), axis=1)]))
    assert np.allclose(w.C.T @ w.C, np.eye(5))


def test_degenerate_beamformer_raises():
    b = Beamformer.from_matrix(np.zeros((3, 4)))
    with pytest.raises(DegenerateBeamformerError):
        build_whitener(*eigendecompose_gram(b))


def test_unsorted_eigenvalues_rejected():
    with pytest.raises(ValueError):
        build_whitener(np.eye(2), np.array([1.0, 2.0]))


def test_whitened_model(small_setup, rng):
    op = build_forward_operator(small_setup)
    b = das_beamformer(small_setup)
    w = build_whitener(*eigendecompose_gram(b))
    m = compose_whitened_model(w, b, op, gamma=0.5)
    assert m.shape == (w.M, op.shape[1])
    assert m.provenance is Provenance.WDRUS and m.noise.kind is NoiseKind.WHITE
    x = rng.standard_normal(op.shape[1])
    y = apply_forward(op, x)
    assert np.allclose(m.observe(y), m.matrix @ x, atol=1e-10)


def test_empirical_whitened_noise(small_setup):
    b = das_beamformer(small_setup)
    w = build_whitener(*eigendecompose_gram(b), TruncationRule(count=16))
    cb = w.C @ b.toarray()
    n = np.random.default_rng(3).standard_normal((cb.shape[1], 20000))
    cov = np.cov(cb @ n)
    assert np.max(np.abs(cov - np.eye(16))) < 0.05
