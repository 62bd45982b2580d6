import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drus.ddrm import (
    CASE_CONSISTENT,
    CASE_NOISY,
    CASE_UNOBSERVED,
    DenoiserError,
    GaussianPrior,
    Identity,
    PriorDenoiser,
    SamplerConfig,
    SamplerState,
    ScaleMap,
    SoftThreshold,
    init_state,
    make_schedule,
    reconstruct,
    reference_denoisers,
    sample_chains,
    step_coefficients,
)
from drus.spectral import LinearModel


def test_schedule_endpoints_and_monotone():
    s = make_schedule(1000, 50, 0.01, 2.0)
    assert s.T == 1000 and s.it == 50
    assert s.timesteps[0] == 1000 and s.timesteps[-1] == 1
    assert s.sigma(1000) == pytest.approx(2.0) and s.sigma(1) == pytest.approx(0.01)
    ratios = s.sigmas[1:] / s.sigmas[:-1]
    assert np.allclose(ratios, ratios[0])
    p = s.path()
    assert p.size == 51 and p[-1] == 0.0 and np.all(np.diff(p) < 0)


def test_schedule_linear_and_single_step():
    s = make_schedule(10, 1, 0.1, 1.0, rule="linear")
    assert list(s.timesteps) == [10]
    assert np.allclose(np.diff(s.sigmas), 0.1)


@pytest.mark.parametrize("kw", [dict(it=0), dict(it=20, T=10), dict(sigma_min=0.0),
                                dict(sigma_min=2.0, sigma_max=1.0), dict(rule="cosine")])
def test_schedule_rejects(kw):
    with pytest.raises(ValueError):
        make_schedule(**{"T": 100, "it": 10, **kw})


positive = st.floats(1e-4, 10.0)


@settings(max_examples=300, deadline=None)
@given(sig_t=positive, frac=st.floats(0.0, 0.999), rho=st.one_of(st.just(np.inf), st.floats(0.0, 20.0)),
       eta=st.floats(0.0, 1.0), eta_b=st.floats(0.0, 1.0))
def test_coefficient_invariants(sig_t, frac, rho, eta, eta_b):
    sig_n = sig_t * frac
    a, b, c, d, case = step_coefficients(sig_t, sig_n, np.array([rho]), eta, eta_b)
    assert a[0] + b[0] + c[0] == pytest.approx(1.0, abs=1e-12)
    if case[0] == CASE_UNOBSERVED:
        assert b[0] == 0.0
        var = (a[0] * sig_t) ** 2 + d[0] ** 2
        assert var == pytest.approx(sig_n ** 2 * (1 - eta ** 2) + (eta * sig_n) ** 2, abs=1e-12)
    elif case[0] == CASE_NOISY:
        assert a[0] == 0.0 and sig_n < rho
        assert (b[0] * rho) ** 2 + d[0] ** 2 == pytest.approx(sig_n ** 2, rel=1e-9, abs=1e-14)
    else:
        assert case[0] == CASE_CONSISTENT and a[0] == 0.0 and b[0] == eta_b
        assert d[0] >= 0


def test_coefficient_cases_by_rho():
    *_, case = step_coefficients(1.0, 0.5, np.array([np.inf, 0.8, 0.2]), 0.85, 1.0)
    assert list(case) == [CASE_UNOBSERVED, CASE_NOISY, CASE_CONSISTENT]


def test_gaussian_prior_is_mmse_shrinkage():
    g = GaussianPrior(4.0)
    assert np.allclose(g.predict_x0(np.array([5.0]), 1.0), [4.0])
    assert SoftThreshold(1.0).predict_x0(np.array([3.0, -0.5]), 2.0).tolist() == [1.0, 0.0]
    assert set(reference_denoisers()) == {"gaussian", "soft", "identity"}
    with pytest.raises(ValueError):
        GaussianPrior(0.0)


def _model(rng, m=12, n=10):
    return LinearModel(rng.standard_normal((m, n)))


def test_noiseless_identity_prior_recovers_least_squares(rng):
    model = _model(rng)
    x = rng.standard_normal(10)
    y = model.matrix @ x
    out = reconstruct(model, y, Identity(), make_schedule(100, 10), SamplerConfig(sigma_d=0.0))
    assert np.allclose(out, x, atol=1e-10)


def test_chains_do_not_depend_on_chain_count(rng):
    model = _model(rng, 6, 10)
    y = rng.standard_normal(6)
    sched = make_schedule(100, 8)
    two = sample_chains(model, y, GaussianPrior(), sched, SamplerConfig(sigma_d=0.1, seed=5, chains=2))
    five = sample_chains(model, y, GaussianPrior(), sched, SamplerConfig(sigma_d=0.1, seed=5, chains=5))
    assert np.allclose(two, five[:2], rtol=0, atol=1e-12)
    assert not np.allclose(five[0], five[1])


def test_sampling_is_deterministic(rng):
    model = _model(rng, 6, 10)
    y = rng.standard_normal(6)
    cfg = SamplerConfig(sigma_d=0.1, seed=11, chains=3)
    sched = make_schedule(100, 8)
    a = sample_chains(model, y, GaussianPrior(), sched, cfg)
    b = sample_chains(model, y, GaussianPrior(), sched, cfg)
    assert np.array_equal(a, b)


def test_unbatched_denoiser_gets_image_shape(rng):
    seen = []

    class Shaped(PriorDenoiser):
        def predict_x0(self, x_t, sigma_t):
            seen.append(x_t.shape)
            return x_t * 0.5

    model = LinearModel(rng.standard_normal((5, 6)), image_shape=(2, 3))
    sample_chains(model, np.ones(5), Shaped(), make_schedule(10, 3), SamplerConfig(chains=2))
    assert set(seen) == {(2, 3)}


def test_nonfinite_denoiser_output_aborts(rng):
    class Broken(PriorDenoiser):
        batched = True

        def predict_x0(self, x_t, sigma_t):
            return np.full_like(x_t, np.nan)

    with pytest.raises(DenoiserError):
        reconstruct(_model(rng), np.ones(12), Broken(), make_schedule(10, 3), SamplerConfig())


def test_wrong_shape_denoiser_output_aborts(rng):
    class Short(PriorDenoiser):
        def predict_x0(self, x_t, sigma_t):
            return x_t.ravel()[:-1]

    with pytest.raises(DenoiserError):
        reconstruct(_model(rng), np.ones(12), Short(), make_schedule(10, 3), SamplerConfig())


def test_state_records_cases(rng):
    model = LinearModel(np.diag([1.0, 0.1, 0.0]))
    st_ = SamplerState()
    reconstruct(model, np.ones(3), GaussianPrior(), make_schedule(100, 5, sigma_max=1.0),
                SamplerConfig(sigma_d=0.05), state=st_)
    assert len(st_.case_counts) == 5
    assert all(sum(c) == 3 and c[CASE_UNOBSERVED] == 1 for c in st_.case_counts)


def test_init_state_falls_back_for_noisy_coordinates():
    diag = {}
    rho = np.array([0.1, 5.0, np.inf])
    x = init_state(np.array([2.0, 3.0, np.nan]), rho, 1.0, np.random.default_rng(0), diagnostics=diag)
    assert diag["init_fallback"] == 1 and np.all(np.isfinite(x))


def test_scale_map():
    s = ScaleMap.symmetric(3.0)
    assert s.to_model(3.0) == 1.0 and s.to_physical(-1.0) == -3.0
    s = ScaleMap(0.0, 4.0)
    assert np.allclose(s.to_physical(s.to_model([0.3, 3.9])), [0.3, 3.9])
    assert ScaleMap.fit([-2.0, 1.0]).hi == 2.0
    with pytest.raises(ValueError):
        ScaleMap(1.0, 1.0)


def test_scale_map_commutes_with_scaled_prior(rng):
    # a Gaussian prior of variance v in model units equals variance v * b^2 physically
    model = _model(rng, 5, 8)
    y = rng.standard_normal(5)
    sched = make_schedule(100, 6)
    cfg = SamplerConfig(sigma_d=0.2, seed=1)
    b = 3.0
    scaled = reconstruct(model, y, GaussianPrior(1.0), sched, cfg, scale=ScaleMap.symmetric(b))
    cfg_p = SamplerConfig(sigma_d=0.2 / b, seed=1)
    plain = reconstruct(LinearModel(model.matrix), y / b, GaussianPrior(1.0), sched, cfg_p)
    assert np.allclose(scaled, plain * b, atol=1e-10)


def test_sampler_config_validation():
    for kw in (dict(eta=1.5), dict(eta_b=-0.1), dict(sigma_d=-1.0), dict(chains=0)):
        with pytest.raises(ValueError):
            SamplerConfig(**kw)


def _gaussian_posterior_mean(a, y, sigma, var):
    # least squares on the stacked system [A / sigma; I / sqrt(var)] x = [y / sigma; 0]
    n = a.shape[1]
    k = np.vstack([a / sigma, np.eye(n) / np.sqrt(var)])
    q, r = np.linalg.qr(k)
    return np.linalg.solve(r, q.T @ np.concatenate([y / sigma, np.zeros(n)]))


@pytest.mark.slow
def test_mean_tracks_posterior_better_at_small_measurement_noise():
    # the sampler mean drifts from the Gaussian posterior mean as
    # sigma_d / s grows; this pins that behaviour down
    rng = np.random.default_rng(2)
    a = np.diag(np.geomspace(3.0, 0.5, 8))
    x = rng.standard_normal(8)
    errs = []
    for sigma in (0.01, 1.0):
        y = a @ x + sigma * rng.standard_normal(8)
        cfg = SamplerConfig(sigma_d=sigma, seed=4, chains=4000)
        est = reconstruct(LinearModel(a), y, GaussianPrior(1.0), make_schedule(1000, 50, sigma_max=1.0), cfg)
        ref = _gaussian_posterior_mean(a, y, sigma, 1.0)
        errs.append(np.linalg.norm(est - ref) / np.linalg.norm(ref))
    assert errs[0] < 0.01
    assert errs[1] > 3 * errs[0]


def test_identity_model_fixed_point():
    y = np.random.default_rng(8).standard_normal(9)
    out = reconstruct(LinearModel(np.eye(9)), y, Identity(), make_schedule(1000, 20),
                      SamplerConfig(sigma_d=0.0, eta_b=1.0, chains=3))
    assert np.max(np.abs(out - y)) < 1e-6


def test_limit_cases_of_the_update():
    a, b, c, d, _ = step_coefficients(1.0, 0.4, np.array([np.inf]), 0.0, 1.0)
    assert d[0] == 0.0 and a[0] == pytest.approx(0.4) and c[0] == pytest.approx(0.6)
    a, b, c, d, case = step_coefficients(1.0, 0.4, np.array([0.0]), 0.85, 1.0)
    assert case[0] == CASE_CONSISTENT and b[0] == 1.0 and c[0] == 0.0 and d[0] == pytest.approx(0.4)
