"""Conditional reverse-diffusion sampling in the spectral space of a linear model.

The chain runs in the variance-exploding parameterization: state ``x_t`` has
noise std ``sigma_t``. Every spectral coordinate ``i`` is updated on its own,
using the per-coordinate measurement noise ``rho_i = sigma_d / s_i``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .spectral import (
    LinearModel,
    SpectralDecomposition,
    from_spectral_image,
    spectral_noise_std,
    svd,
    to_spectral_image,
    to_spectral_measurement,
)

log = logging.getLogger(__name__)

CASE_UNOBSERVED, CASE_NOISY, CASE_CONSISTENT = 0, 1, 2


class DenoiserError(RuntimeError):
    pass


@dataclass(frozen=True)
class DiffusionSchedule:
    """Noise ladder ``sigmas[t - 1] = sigma_t`` for ``t = 1..T`` and the sampled subsequence."""

    sigmas: np.ndarray
    timesteps: np.ndarray  # 1-based, strictly decreasing, starts at T

    def __post_init__(self):
        sig = np.asarray(self.sigmas, dtype=np.float64)
        ts = np.asarray(self.timesteps, dtype=np.int64)
        if sig.ndim != 1 or sig.size < 1 or sig[0] <= 0 or np.any(np.diff(sig) <= 0):
            raise ValueError("sigmas must be positive and strictly increasing")
        if ts.size < 1 or ts.size > sig.size or np.any(np.diff(ts) >= 0):
            raise ValueError("timesteps must be strictly decreasing with it <= T")
        if ts[0] != sig.size or ts.min() < 1:
            raise ValueError("timesteps must start at T and stay >= 1")
        object.__setattr__(self, "sigmas", sig)
        object.__setattr__(self, "timesteps", ts)

    @property
    def T(self) -> int:
        return self.sigmas.size

    @property
    def it(self) -> int:
        return self.timesteps.size

    def sigma(self, t: int) -> float:
        return float(self.sigmas[t - 1])

    def path(self) -> np.ndarray:
        """Noise levels visited: ``sigma`` at each selected step, then 0 for the clean output."""
        return np.append(self.sigmas[self.timesteps - 1], 0.0)


def make_schedule(T: int = 1000, it: int = 50, sigma_min: float = 0.01, sigma_max: float = 1.0,
                  rule: str = "geometric") -> DiffusionSchedule:
    """Ladder of ``T`` noise levels and ``it`` steps chosen uniformly in index space.

    The subsequence always holds ``t = T`` and, for ``it >= 2``, ``t = 1``.
    """
    if it < 1 or T < 1:
        raise ValueError("T and it must be >= 1")
    if it > T:
        raise ValueError(f"it={it} exceeds T={T}")
    if not 0 < sigma_min < sigma_max:
        raise ValueError("need 0 < sigma_min < sigma_max")
    if rule == "geometric":
        sig = np.geomspace(sigma_min, sigma_max, T)
    elif rule == "linear":
        sig = np.linspace(sigma_min, sigma_max, T)
    else:
        raise ValueError(f"unknown ladder rule {rule!r}")
    if T == 1:
        sig = np.array([sigma_max])
    ts = np.array([T]) if it == 1 else np.rint(np.linspace(T, 1, it)).astype(np.int64)
    return DiffusionSchedule(sig, ts)


@dataclass(frozen=True)
class SamplerConfig:
    eta: float = 0.85
    eta_b: float = 1.0
    sigma_d: float = 0.0
    seed: int = 0
    chains: int = 1

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("eta must be in [0, 1]")
        if not 0.0 <= self.eta_b <= 1.0:
            raise ValueError("eta_b must be in [0, 1]")
        if self.sigma_d < 0:
            raise ValueError("sigma_d must be >= 0")
        if self.chains < 1:
            raise ValueError("chains must be >= 1")


@dataclass(frozen=True)
class ScaleMap:
    """Affine map from physical reflectivity ``[lo, hi]`` onto the denoiser range ``[-1, 1]``."""

    lo: float = -1.0
    hi: float = 1.0

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ValueError("ScaleMap needs hi > lo")

    @classmethod
    def symmetric(cls, bound: float) -> "ScaleMap":
        return cls(-abs(bound), abs(bound))

    @classmethod
    def fit(cls, x) -> "ScaleMap":
        """Symmetric min-max fit to the samples in ``x``."""
        b = float(np.max(np.abs(x)))
        return cls.symmetric(b if b > 0 else 1.0)

    @property
    def half(self) -> float:
        return 0.5 * (self.hi - self.lo)

    @property
    def mid(self) -> float:
        return 0.5 * (self.hi + self.lo)

    def to_model(self, x):
        return (np.asarray(x, dtype=np.float64) - self.mid) / self.half

    def to_physical(self, x):
        return np.asarray(x, dtype=np.float64) * self.half + self.mid


# -- reference priors ---------------------------------------------------------


class PriorDenoiser:
    """Predicts the clean image from ``x_t`` at noise level ``sigma_t`` (model scale).

    Implementations must be deterministic. ``batched`` denoisers accept a
    trailing chain axis and act on each column independently.
    """

    batched = False

    def predict_x0(self, x_t, sigma_t):  # pragma: no cover - interface
        raise NotImplementedError


class GaussianPrior(PriorDenoiser):
    """MMSE denoiser for ``x ~ N(0, variance * I)``."""

    batched = True

    def __init__(self, variance: float = 1.0):
        if not variance > 0:
            raise ValueError("prior variance must be > 0")
        self.variance = float(variance)

    def predict_x0(self, x_t, sigma_t):
        return np.asarray(x_t) * (self.variance / (self.variance + sigma_t ** 2))

    def __repr__(self):
        return f"GaussianPrior({self.variance:g})"


class SoftThreshold(PriorDenoiser):
    batched = True

    def __init__(self, kappa: float = 1.0):
        if kappa < 0:
            raise ValueError("kappa must be >= 0")
        self.kappa = float(kappa)

    def predict_x0(self, x_t, sigma_t):
        x = np.asarray(x_t)
        return np.sign(x) * np.maximum(np.abs(x) - self.kappa * sigma_t, 0.0)

    def __repr__(self):
        return f"SoftThreshold({self.kappa:g})"


class Identity(PriorDenoiser):
    batched = True

    def predict_x0(self, x_t, sigma_t):
        return np.array(x_t, dtype=np.float64, copy=True)

    def __repr__(self):
        return "Identity()"


def reference_denoisers(variance: float = 1.0, kappa: float = 1.0) -> dict:
    return {
        "gaussian": GaussianPrior(variance),
        "soft": SoftThreshold(kappa),
        "identity": Identity(),
    }


# -- per-coordinate update ----------------------------------------------------


def step_coefficients(sigma_t, sigma_next, rho, eta, eta_b):
    """Coefficients of ``x_next = A x_t + B ybar + C x_theta + D z`` per coordinate.

    ``rho`` is ``sigma_d / s_i`` (``inf`` for unobserved coordinates). Returns
    ``(A, B, C, D, case)``; every case keeps ``A + B + C = 1`` and
    ``(A sigma_t)^2 + (B rho)^2 + D^2 = sigma_next^2``.
    """
    rho = np.asarray(rho, dtype=np.float64)
    sigma_t = np.broadcast_to(np.asarray(sigma_t, dtype=np.float64), rho.shape)
    sigma_next = np.broadcast_to(np.asarray(sigma_next, dtype=np.float64), rho.shape)
    unobs = ~np.isfinite(rho)
    noisy = ~unobs & (sigma_next < rho)
    cons = ~unobs & ~noisy
    keep = np.sqrt(1.0 - eta ** 2)

    a = np.zeros(rho.shape)
    b = np.zeros(rho.shape)
    d = np.zeros(rho.shape)
    a[unobs] = keep * sigma_next[unobs] / sigma_t[unobs]
    d[unobs] = eta * sigma_next[unobs]
    b[noisy] = keep * sigma_next[noisy] / rho[noisy]
    d[noisy] = eta * sigma_next[noisy]
    b[cons] = eta_b
    d[cons] = np.sqrt(np.maximum(sigma_next[cons] ** 2 - (rho[cons] * eta_b) ** 2, 0.0))
    c = 1.0 - a - b
    case = np.where(unobs, CASE_UNOBSERVED, np.where(noisy, CASE_NOISY, CASE_CONSISTENT))
    return a, b, c, d, case


def ddrm_step(x_t, ybar, x_theta, rho, sigma_t, sigma_next, cfg: SamplerConfig, rng):
    """One transition ``x_t -> x_{t-1}`` in spectral coordinates.

    ``ybar`` may hold NaN on unobserved coordinates; those entries are never
    read. Extra trailing axes on the states are treated as independent chains
    that share ``rng``.
    """
    if not sigma_next < sigma_t:
        raise ValueError("noise level must decrease along the chain")
    x_t = np.asarray(x_t, dtype=np.float64)
    x_theta = np.asarray(x_theta, dtype=np.float64)
    a, b, c, d, _ = step_coefficients(sigma_t, sigma_next, rho, cfg.eta, cfg.eta_b)
    yb = np.where(np.isfinite(ybar), ybar, 0.0)
    if x_t.ndim > 1:
        a, b, c, d = (v[:, None] for v in (a, b, c, d))
        if yb.ndim == 1:
            yb = yb[:, None]
    z = rng.standard_normal(x_t.shape)
    return a * x_t + b * yb + c * x_theta + d * z


def init_state(ybar, rho, sigma_T: float, rng, shape=None, diagnostics=None):
    """Draw ``x_T``: ``N(ybar_i, sigma_T^2 - rho_i^2)`` where that variance is
    nonnegative, ``N(0, sigma_T^2)`` elsewhere (unobserved or too noisy)."""
    rho = np.asarray(rho, dtype=np.float64)
    obs = np.isfinite(rho)
    cond = obs & (sigma_T >= rho)
    fallback = obs & ~cond
    if diagnostics is not None:
        diagnostics["init_fallback"] = int(fallback.sum())
    if fallback.any():
        log.debug("init: %d observed coordinates noisier than sigma_T, using N(0, sigma_T^2)",
                  int(fallback.sum()))
    shape = rho.shape if shape is None else shape
    z = rng.standard_normal(shape)
    yb = np.where(cond, np.where(np.isfinite(ybar), ybar, 0.0), 0.0)
    std = np.where(cond, np.sqrt(np.maximum(sigma_T ** 2 - np.where(cond, rho, 0.0) ** 2, 0.0)), sigma_T)
    if len(shape) > 1:
        yb = yb[:, None] if yb.ndim == 1 else yb
        std = std[:, None]
    return yb + std * z


@dataclass
class SamplerState:
    """Diagnostics collected while sampling."""

    init_fallback: int = 0
    case_counts: list = field(default_factory=list)


class _ChainRNG:
    """Independent per-chain generators presented as one ``(N, chains)`` source."""

    def __init__(self, seed, chains):
        self.gens = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(chains)]

    def standard_normal(self, shape):
        n, c = shape
        assert c == len(self.gens)
        return np.stack([g.standard_normal(n) for g in self.gens], axis=1)


def _spectral_problem(model, y_d, d, cfg, scale):
    ybar = to_spectral_measurement(d, y_d)
    rho = spectral_noise_std(d, cfg.sigma_d)
    if scale is not None:
        # x = half * x_m + mid  =>  ybar_m = (ybar - mid * V^T 1) / half
        offset = scale.mid * (d.V.T @ np.ones(d.n)) if scale.mid != 0.0 else 0.0
        ybar = (ybar - offset) / scale.half
        rho = rho / scale.half
    return ybar, rho


def _predict(prior, x_img, sigma, image_shape):
    def call(v):
        v = v.reshape(image_shape) if image_shape is not None else v
        out = np.asarray(prior.predict_x0(v, sigma), dtype=np.float64)
        return out.reshape(-1)

    if x_img.ndim == 1:
        out = call(x_img)
    elif getattr(prior, "batched", False):
        out = np.asarray(prior.predict_x0(x_img, sigma), dtype=np.float64).reshape(x_img.shape)
    else:
        out = np.stack([call(x_img[:, k]) for k in range(x_img.shape[1])], axis=1)
    if out.shape != x_img.shape:
        raise DenoiserError(f"denoiser returned shape {out.shape}, expected {x_img.shape}")
    return out


def sample_chains(model: LinearModel, y_d, prior: PriorDenoiser, sched: DiffusionSchedule,
                  cfg: SamplerConfig, *, decomposition: SpectralDecomposition | None = None,
                  scale: ScaleMap | None = None, state: SamplerState | None = None) -> np.ndarray:
    """Run ``cfg.chains`` independent chains; returns physical images, shape ``(chains, N)``.

    Chain ``k`` uses its own generator spawned from ``cfg.seed``, so a chain's
    draws do not depend on how many chains run beside it.
    """
    d = decomposition if decomposition is not None else svd(model)
    y_d = np.asarray(y_d, dtype=np.float64).ravel()
    if y_d.size != d.m:
        raise ValueError(f"y_d has length {y_d.size}, model has {d.m} rows")
    ybar, rho = _spectral_problem(model, y_d, d, cfg, scale)
    image_shape = model.image_shape if isinstance(model, LinearModel) else None
    rng = _ChainRNG(cfg.seed, cfg.chains)
    st = state if state is not None else SamplerState()
    path = sched.path()
    n, c = d.n, cfg.chains
    diag = {}
    x = init_state(ybar, rho, path[0], rng, shape=(n, c), diagnostics=diag)
    st.init_fallback = diag["init_fallback"]
    for k in range(sched.it):
        s_t, s_next = path[k], path[k + 1]
        x_img = from_spectral_image(d, x)
        x0 = _predict(prior, x_img, s_t, image_shape)
        if not np.all(np.isfinite(x0)):
            raise DenoiserError(
                f"non-finite denoiser output at step {k} (sigma_t={s_t:.4g}); chain aborted"
            )
        x_theta = to_spectral_image(d, x0)
        *_, case = step_coefficients(s_t, s_next, rho, cfg.eta, cfg.eta_b)
        st.case_counts.append(np.bincount(case, minlength=3).tolist())
        x = ddrm_step(x, ybar, x_theta, rho, s_t, s_next, cfg, rng)
    out = from_spectral_image(d, x)
    if scale is not None:
        out = scale.to_physical(out)
    return out.T.copy()


def reconstruct(model: LinearModel, y_d, prior: PriorDenoiser, sched: DiffusionSchedule,
                cfg: SamplerConfig, *, decomposition: SpectralDecomposition | None = None,
                scale: ScaleMap | None = None, state: SamplerState | None = None) -> np.ndarray:
    """Posterior sample (or the mean of ``cfg.chains`` samples), length ``N``."""
    chains = sample_chains(model, y_d, prior, sched, cfg, decomposition=decomposition,
                           scale=scale, state=state)
    return chains.mean(axis=0)
