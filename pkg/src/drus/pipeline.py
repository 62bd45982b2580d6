"""End-to-end steps shared by the command line and the acceptance tests."""

from __future__ import annotations

import hashlib
import logging
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import container
from .beamforming import Beamformer, beamform, compose_model, das_beamformer, matched_filter
from .config import ConfigError, RunConfig
from .ddrm import SamplerConfig, SamplerState, ScaleMap, reconstruct
from .forward import ForwardOperator, build_forward_operator
from .metrics import MetricReport, envelope, evaluate_image, to_db
from .operators import StoredMatrix
from .phantoms import (
    AnechoicDisk,
    BrightScatterer,
    PhantomSpec,
    SpeckleBackground,
    noise_seed,
    render_phantom,
    simulate_channel_data,
)
from .spectral import SpectralDecomposition, svd
from .whitening import (
    TruncationRule,
    build_whitener,
    compose_whitened_model,
    eigendecompose_gram,
)

log = logging.getLogger(__name__)

DATA_SECTIONS = ("setup", "phantom", "noise")
METHODS = ("mf-baseline", "drus", "wdrus")


class DatasetMismatchError(ValueError):
    pass


@dataclass
class Dataset:
    config: RunConfig
    truth: np.ndarray
    gammas: np.ndarray
    channel_data: np.ndarray
    operator: ForwardOperator

    @property
    def hash(self) -> str:
        return self.config.digest(DATA_SECTIONS)


# -- simulate -----------------------------------------------------------------


def simulate(cfg: RunConfig) -> Dataset:
    setup = cfg.acquisition()
    op = build_forward_operator(setup)
    spec = cfg.phantom(setup.grid)
    x = render_phantom(spec)
    gammas = np.asarray(cfg["noise"]["gammas"], dtype=np.float64)
    seed = cfg["noise"]["seed"]
    ys = np.stack([
        simulate_channel_data(x, op, g, noise_seed(seed, i)).reshape(
            setup.geometry.element_count, setup.geometry.sample_count)
        for i, g in enumerate(gammas)
    ])
    return Dataset(cfg, x, gammas, ys, op)


def dataset_sections(ds: Dataset) -> dict:
    indptr, indices, data = ds.operator.matrix.csc
    return {
        "kind": "dataset",
        "config": ds.config.canonical_text(),
        "config_hash": ds.hash,
        "truth": ds.truth,
        "gammas": ds.gammas,
        "channel_data": ds.channel_data,
        "H/shape": np.asarray(ds.operator.shape, dtype=np.int64),
        "H/indptr": indptr,
        "H/indices": indices,
        "H/data": data,
        "H/digest": ds.operator.digest(),
    }


def save_dataset(path, ds: Dataset) -> None:
    container.save(path, dataset_sections(ds))


def _require(sec: dict, names, what: str):
    missing = [n for n in names if n not in sec]
    if missing:
        raise container.ContainerError(f"{what} is missing sections: {', '.join(missing)}")


def load_dataset(path) -> Dataset:
    sec = container.load(path)
    _require(sec, ("kind", "config", "config_hash", "truth", "gammas", "channel_data",
                   "H/shape", "H/indptr", "H/indices", "H/data", "H/digest"), "dataset")
    if sec["kind"] != "dataset":
        raise container.ContainerError(f"{path} holds a {sec['kind']!r}, not a dataset")
    cfg = RunConfig.from_text(sec["config"], source=str(path))
    if cfg.digest(DATA_SECTIONS) != sec["config_hash"]:
        raise container.ContainerError("dataset config does not match its recorded hash")
    setup = cfg.acquisition()
    mat = StoredMatrix(tuple(int(v) for v in sec["H/shape"]),
                       csc=(sec["H/indptr"], sec["H/indices"], sec["H/data"]))
    if mat.digest() != sec["H/digest"]:
        raise container.ContainerError("cached operator does not match its recorded digest")
    return Dataset(cfg, sec["truth"], sec["gammas"], sec["channel_data"],
                   ForwardOperator(mat, setup))


def select_level(ds: Dataset, gamma: float | None = None) -> int:
    """Index of ``gamma`` in the dataset (default: 1.0 if present, else the first level)."""
    if gamma is None:
        hits = np.flatnonzero(np.isclose(ds.gammas, 1.0))
        return int(hits[0]) if hits.size else 0
    hits = np.flatnonzero(np.isclose(ds.gammas, gamma, rtol=1e-12, atol=0))
    if not hits.size:
        raise DatasetMismatchError(
            f"noise level {gamma} not in dataset (have {', '.join(f'{g:g}' for g in ds.gammas)})")
    return int(hits[0])


# -- factorization cache -------------------------------------------------------


def _cache_dir():
    d = os.environ.get("DRUS_CACHE_DIR")
    return Path(d) if d else None


def _matrix_key(tag: str, a: np.ndarray) -> str:
    h = hashlib.sha256(tag.encode())
    h.update(np.asarray(a.shape, dtype="<i8").tobytes())
    h.update(np.ascontiguousarray(a, dtype="<f8").tobytes())
    return h.hexdigest()[:32]


def cached_svd(model) -> SpectralDecomposition:
    d = _cache_dir()
    if d is None:
        return svd(model)
    path = d / f"svd-{_matrix_key('svd', model.matrix)}.usdr"
    if path.exists():
        try:
            sec = container.load(path)
            return SpectralDecomposition(sec["U"], sec["s"], sec["V"])
        except (container.ContainerError, KeyError) as exc:
            log.warning("ignoring unreadable cache file %s: %s", path, exc)
    out = svd(model)
    d.mkdir(parents=True, exist_ok=True)
    container.save(path, {"U": out.U, "s": out.s, "V": out.V})
    return out


def cached_gram_eigen(b: Beamformer):
    d = _cache_dir()
    if d is None:
        return eigendecompose_gram(b)
    path = d / f"gram-{b.matrix.digest()[:32]}.usdr"
    if path.exists():
        try:
            sec = container.load(path)
            return sec["V"], sec["lam"]
        except (container.ContainerError, KeyError) as exc:
            log.warning("ignoring unreadable cache file %s: %s", path, exc)
    v, lam = eigendecompose_gram(b)
    d.mkdir(parents=True, exist_ok=True)
    container.save(path, {"V": v, "lam": lam})
    return v, lam


# -- reconstruct --------------------------------------------------------------


def make_beamformer(cfg: RunConfig, op: ForwardOperator) -> Beamformer:
    if cfg["setup"]["beamformer"] == "das":
        return das_beamformer(op.setup, cfg.beamformer_law())
    return matched_filter(op)


def build_model(cfg: RunConfig, op: ForwardOperator, method: str, gamma: float):
    """``(model, decomposition)`` for ``drus`` or ``wdrus``."""
    b = make_beamformer(cfg, op)
    if method == "drus":
        model = compose_model(b, op, gamma)
    elif method == "wdrus":
        v, lam = cached_gram_eigen(b)
        w = build_whitener(v, lam, TruncationRule(cfg["sampler"]["whitening_eps"]))
        model = compose_whitened_model(w, b, op, gamma)
    else:
        raise ValueError(f"unknown method {method!r}")
    return model, cached_svd(model)


def reconstruct_level(ds: Dataset, cfg: RunConfig, method: str, level: int,
                      state: SamplerState | None = None) -> np.ndarray:
    """Reconstructed RF image ``(height, width)`` at noise level ``level``."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r} (choose from {', '.join(METHODS)})")
    op = ds.operator
    y = ds.channel_data[level].ravel()
    gamma = float(ds.gammas[level])
    if method == "mf-baseline":
        return beamform(matched_filter(op), y).reshape(op.image_shape)
    model, d = build_model(cfg, op, method, gamma)
    sm = cfg["sampler"]
    scfg = SamplerConfig(sm["eta"], sm["eta_b"], cfg.sigma_d(method, gamma), sm["seed"],
                         sm["chains"])
    x = reconstruct(model, model.observe(y), cfg.prior(), cfg.schedule(), scfg,
                    decomposition=d, scale=ScaleMap.symmetric(sm["scale_bound"]), state=state)
    return x.reshape(op.image_shape)


def beamform_level(ds: Dataset, cfg: RunConfig, level: int) -> np.ndarray:
    b = make_beamformer(cfg, ds.operator)
    return beamform(b, ds.channel_data[level].ravel()).reshape(ds.operator.image_shape)


def image_sections(image, ds: Dataset, cfg: RunConfig, method: str, level: int) -> dict:
    return {
        "kind": "image",
        "image": np.asarray(image, dtype=np.float64),
        "method": method,
        "gamma": np.asarray([ds.gammas[level]]),
        "level": np.asarray([level], dtype=np.int64),
        "config": cfg.canonical_text(),
        "config_hash": cfg.digest(),
        "dataset_hash": ds.hash,
    }


def load_image(path) -> dict:
    sec = container.load(path)
    _require(sec, ("kind", "image", "config_hash", "dataset_hash"), "image file")
    if sec["kind"] != "image":
        raise container.ContainerError(f"{path} holds a {sec['kind']!r}, not an image")
    return sec


# -- preview and evaluation ---------------------------------------------------


def preview_pgm(image, dynamic_range: float = 60.0) -> bytes:
    """8-bit binary graymap of the normalized envelope over ``[-range, 0]`` dB."""
    db = to_db(envelope(image), -dynamic_range)
    px = np.rint((db + dynamic_range) / dynamic_range * 255.0).astype(np.uint8)
    h, w = px.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + px.tobytes()


def parse_regions(text: str, source: str = "<regions>"):
    """Region file: ``disk x_mm z_mm r_mm`` and ``scatterer x_mm z_mm`` lines."""
    feats = []
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].split()
        if not line:
            continue
        kind, *vals = line
        try:
            v = [float(a) * 1e-3 for a in vals]
        except ValueError:
            raise ConfigError(f"non-numeric region value in {raw.strip()!r}", n, source) from None
        if kind == "disk" and len(v) == 3:
            feats.append(AnechoicDisk((v[0], v[1]), v[2]))
        elif kind == "scatterer" and len(v) == 2:
            feats.append(BrightScatterer((v[0], v[1])))
        else:
            raise ConfigError(f"malformed region {raw.strip()!r}", n, source)
    if not feats:
        raise ConfigError("no regions defined", None, source)
    return feats


def evaluate(ds: Dataset, image, regions=None) -> MetricReport:
    spec = ds.config.phantom(ds.operator.setup.grid)
    if regions is not None:
        try:
            spec = PhantomSpec(spec.grid, (SpeckleBackground(),) + tuple(regions), spec.seed)
        except ValueError as exc:
            raise ConfigError(f"region file: {exc}", None, "<regions>") from None
    m = ds.config["metrics"]
    return evaluate_image(image, spec, ds.truth, ks_stride=m["ks_stride"],
                          inner=m["disk_inner"], annulus=(m["annulus_inner"], m["annulus_outer"]))
