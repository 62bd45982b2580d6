"""Image-quality metrics on envelope images.

Undefined values are reported as NaN (``UNDEFINED``); an exact match in
PSNR is ``inf``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage, signal, stats

from .geometry import ImageGrid
from .phantoms import PhantomSpec, disk_mask, nearest_pixel

UNDEFINED = float("nan")
GCNR_BINS = 256
SSIM_SIGMA = 1.5
SSIM_RADIUS = 5
SSIM_K1, SSIM_K2 = 0.01, 0.03

# 5% critical value of the modified KS statistic when the scale of an
# exponential-family law is estimated from the sample (Stephens 1974).
# A Rayleigh with fitted scale maps onto this case through r -> r^2.
KS_FITTED_CRIT = 1.094
KS_KNOWN_CRIT = 1.358


def envelope(image, axis: int = 0) -> np.ndarray:
    """Magnitude of the analytic signal along ``axis`` (axial by default)."""
    return np.abs(signal.hilbert(np.asarray(image, dtype=np.float64), axis=axis))


def speckle_gain(a, image_shape) -> np.ndarray:
    """Expected envelope rms of the image ``a @ x`` for white unit reflectivity ``x``.

    The analytic signal is linear in ``x``, so its mean power per pixel is the
    squared row norm of ``a`` plus that of its axial Hilbert transform. Dividing
    an envelope by this map is a gain compensation that depends only on the
    imaging operator, never on the data.
    """
    a = np.asarray(a, dtype=np.float64)
    h, w = image_shape
    if a.shape[0] != h * w:
        raise ValueError(f"operator has {a.shape[0]} rows, image has {h * w} pixels")
    cube = a.reshape(h, w, -1)
    imag = np.imag(signal.hilbert(cube, axis=0))
    power = np.einsum("ijk,ijk->ij", cube, cube) + np.einsum("ijk,ijk->ij", imag, imag)
    return np.sqrt(power)


def to_db(env, floor_db: float = -60.0) -> np.ndarray:
    env = np.asarray(env, dtype=np.float64)
    peak = env.max()
    if not peak > 0:
        return np.full(env.shape, floor_db)
    with np.errstate(divide="ignore"):
        db = 20.0 * np.log10(env / peak)
    return np.maximum(db, floor_db)


def normalize01(image) -> np.ndarray:
    a = np.asarray(image, dtype=np.float64)
    lo, hi = a.min(), a.max()
    if hi == lo:
        return np.zeros_like(a)
    return (a - lo) / (hi - lo)


# -- regions ------------------------------------------------------------------


def annulus_mask(grid: ImageGrid, center, r_in, r_out) -> np.ndarray:
    if not 0 <= r_in < r_out:
        raise ValueError("need 0 <= r_in < r_out")
    pts = grid.positions()
    r = np.hypot(pts[:, 0] - center[0], pts[:, 1] - center[1])
    return ((r >= r_in) & (r <= r_out)).reshape(grid.shape)


def rect_mask(grid: ImageGrid, x0, x1, z0, z1) -> np.ndarray:
    pts = grid.positions()
    m = (pts[:, 0] >= x0) & (pts[:, 0] <= x1) & (pts[:, 1] >= z0) & (pts[:, 1] <= z1)
    return m.reshape(grid.shape)


@dataclass(frozen=True)
class DiskRegion:
    """Inside is the disk shrunk by ``inner``; outside is the annulus ``[r1, r2]`` in radii."""

    center: tuple[float, float]
    radius: float
    inner: float = 0.8
    annulus: tuple[float, float] = (1.3, 2.0)

    def inside(self, grid):
        return disk_mask(grid, self.center, self.inner * self.radius)

    def outside(self, grid):
        return annulus_mask(grid, self.center, *(a * self.radius for a in self.annulus))


# -- resolution ---------------------------------------------------------------


def _crossing(profile, peak, half, step):
    i = peak
    while 0 <= i + step < profile.size:
        j = i + step
        if profile[j] < half:
            # linear interpolation between i (>= half) and j (< half)
            t = (profile[i] - half) / (profile[i] - profile[j])
            return i + step * t
        i = j
    return None


def fwhm(image, pixel, axis: int, pitch: float = 1.0, search: int = 2) -> float:
    """Full width at half maximum through the local peak near ``pixel``.

    ``axis`` 0 is axial, 1 lateral; ``pitch`` converts samples to length.
    Returns NaN when the profile stays above half maximum on either side.
    """
    img = np.abs(np.asarray(image, dtype=np.float64))
    if img.ndim != 2:
        raise ValueError("fwhm expects a 2-D image")
    iz, ix = pixel
    z0, z1 = max(iz - search, 0), min(iz + search + 1, img.shape[0])
    x0, x1 = max(ix - search, 0), min(ix + search + 1, img.shape[1])
    win = img[z0:z1, x0:x1]
    dz, dx = np.unravel_index(int(np.argmax(win)), win.shape)
    pz, px = z0 + dz, x0 + dx
    profile = img[:, px] if axis == 0 else img[pz, :]
    peak = pz if axis == 0 else px
    half = 0.5 * profile[peak]
    if not half > 0:
        return UNDEFINED
    lo = _crossing(profile, peak, half, -1)
    hi = _crossing(profile, peak, half, +1)
    if lo is None or hi is None:
        return UNDEFINED
    return float((hi - lo) * pitch)


# -- contrast -----------------------------------------------------------------


def _values(image, mask):
    v = np.asarray(image, dtype=np.float64)[np.asarray(mask, dtype=bool)]
    if v.size == 0:
        raise ValueError("empty region")
    return v


def cnr(image, inside, outside) -> float:
    """``20 log10(|mu_in - mu_out| / sqrt(var_in + var_out))`` in dB.

    Zero contrast gives ``-inf``; zero pooled variance is undefined (NaN).
    """
    a, b = _values(image, inside), _values(image, outside)
    pooled = a.var() + b.var()
    if pooled == 0:
        return UNDEFINED
    diff = abs(a.mean() - b.mean())
    if diff == 0:
        return -math.inf
    return float(20.0 * math.log10(diff / math.sqrt(pooled)))


def gcnr(image, inside, outside, bins: int = GCNR_BINS) -> float:
    """Generalized CNR ``1 - overlap`` of the two intensity histograms on shared bins."""
    a, b = _values(image, inside), _values(image, outside)
    lo, hi = min(a.min(), b.min()), max(a.max(), b.max())
    if hi == lo:
        return 0.0
    edges = np.linspace(lo, hi, bins + 1)
    pa = np.histogram(a, edges)[0] / a.size
    pb = np.histogram(b, edges)[0] / b.size
    return float(1.0 - np.minimum(pa, pb).sum())


# -- speckle statistics -------------------------------------------------------


def speckle_snr(values) -> float:
    v = np.asarray(values, dtype=np.float64).ravel()
    sd = v.std()
    if sd == 0:
        return UNDEFINED
    return float(v.mean() / sd)


@dataclass(frozen=True)
class KSResult:
    statistic: float
    critical: float
    scale: float
    n: int

    @property
    def passed(self) -> bool:
        return self.statistic < self.critical


def ks_critical(n: int, fitted: bool = True) -> float:
    """5% critical value of the KS distance for ``n`` samples."""
    rn = math.sqrt(n)
    if fitted:
        return KS_FITTED_CRIT / (rn + 0.26 + 0.5 / rn) + 0.2 / n
    return KS_KNOWN_CRIT / rn


def ks_rayleigh(values, scale: float | None = None, min_samples: int = 100) -> KSResult:
    """KS distance to a Rayleigh law.

    With ``scale=None`` the scale is the maximum-likelihood fit
    ``sqrt(mean(v^2) / 2)`` and the critical value accounts for the fit.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size < min_samples:
        raise ValueError(f"KS test needs at least {min_samples} samples, got {v.size}")
    if np.any(v < 0):
        raise ValueError("envelope values must be nonnegative")
    fitted = scale is None
    if fitted:
        scale = math.sqrt(float(np.mean(v * v)) / 2.0)
    if not scale > 0:
        raise ValueError("degenerate region: zero envelope")
    d = stats.kstest(v, "rayleigh", args=(0.0, scale)).statistic
    return KSResult(float(d), ks_critical(v.size, fitted), float(scale), int(v.size))


# -- fidelity -----------------------------------------------------------------


def _gauss_blur(a):
    return ndimage.gaussian_filter(a, SSIM_SIGMA, mode="reflect",
                                   truncate=SSIM_RADIUS / SSIM_SIGMA)


def ssim(a, b, data_range: float = 1.0) -> float:
    """Mean structural similarity with an 11-tap Gaussian window (sigma 1.5).

    Borders use half-sample symmetric reflection so every pixel has a full window.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2:
        raise ValueError("ssim expects two 2-D images of equal shape")
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mu_a, mu_b = _gauss_blur(a), _gauss_blur(b)
    saa = _gauss_blur(a * a) - mu_a * mu_a
    sbb = _gauss_blur(b * b) - mu_b * mu_b
    sab = _gauss_blur(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * sab + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (saa + sbb + c2)
    return float(np.mean(num / den))


def psnr(a, b, data_range: float = 1.0) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("psnr expects images of equal shape")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(data_range ** 2 / mse)


# -- report -------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, float):
        if math.isnan(v):
            return "undefined"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.6g}"
    return str(v)


@dataclass
class MetricReport:
    fwhm_axial: list = field(default_factory=list)
    fwhm_lateral: list = field(default_factory=list)
    cnr: list = field(default_factory=list)
    gcnr: list = field(default_factory=list)
    snr: float = UNDEFINED
    ks: KSResult | None = None
    ssim: float = UNDEFINED
    psnr: float = UNDEFINED
    extra: dict = field(default_factory=dict)

    @staticmethod
    def _mean(v):
        v = [x for x in v if not math.isnan(x)]
        return float(np.mean(v)) if v else UNDEFINED

    def items(self) -> list[tuple[str, object]]:
        out = []
        for i, (a, l) in enumerate(zip(self.fwhm_axial, self.fwhm_lateral)):
            out.append((f"fwhm_axial_mm.{i}", a))
            out.append((f"fwhm_lateral_mm.{i}", l))
        out.append(("fwhm_axial_mm.mean", self._mean(self.fwhm_axial)))
        out.append(("fwhm_lateral_mm.mean", self._mean(self.fwhm_lateral)))
        for i, (c, g) in enumerate(zip(self.cnr, self.gcnr)):
            out.append((f"cnr_db.{i}", c))
            out.append((f"gcnr.{i}", g))
        out.append(("cnr_db.mean", self._mean(self.cnr)))
        out.append(("gcnr.mean", self._mean(self.gcnr)))
        out.append(("speckle_snr", self.snr))
        if self.ks is not None:
            out += [("ks.statistic", self.ks.statistic), ("ks.critical", self.ks.critical),
                    ("ks.rayleigh", "pass" if self.ks.passed else "fail")]
        out.append(("ssim", self.ssim))
        out.append(("psnr_db", self.psnr))
        out += sorted(self.extra.items())
        return out

    def to_keyvalue(self) -> str:
        return "".join(f"{k}={_fmt(v)}\n" for k, v in self.items())

    def to_table(self) -> str:
        rows = [(k, _fmt(v)) for k, v in self.items()]
        w = max(len(k) for k, _ in rows)
        lines = [f"{'metric'.ljust(w)}  value", f"{'-' * w}  {'-' * 12}"]
        lines += [f"{k.ljust(w)}  {v}" for k, v in rows]
        return "\n".join(lines) + "\n"

    def text(self) -> str:
        return self.to_table() + "\n" + self.to_keyvalue()


def speckle_roi(spec: PhantomSpec, margin: int = 4) -> np.ndarray:
    """Pixels at least ``margin`` pixels from the border and clear of every feature."""
    g = spec.grid
    m = np.zeros(g.shape, dtype=bool)
    m[margin:g.height - margin, margin:g.width - margin] = True
    for f in spec.disks:
        m &= ~disk_mask(g, f.center, 2.0 * f.radius)
    for f in spec.scatterers:
        iz, ix = nearest_pixel(g, f.position)
        m[max(iz - 8, 0):iz + 9, max(ix - 4, 0):ix + 5] = False
    return m


def evaluate_image(image, spec: PhantomSpec, truth=None, *, ks_stride: int = 2,
                   inner: float = 0.8, annulus=(1.3, 2.0)) -> MetricReport:
    """Full metric set for a reconstructed RF image of the phantom ``spec``.

    ``ks_stride`` decimates the speckle region before the KS test to reduce
    correlation between neighbouring pixels.
    """
    g = spec.grid
    img = np.asarray(image, dtype=np.float64).reshape(g.shape)
    env = envelope(img)
    rep = MetricReport()
    dx_mm, dz_mm = g.pixel_pitch[0] * 1e3, g.pixel_pitch[1] * 1e3
    for f in spec.scatterers:
        px = nearest_pixel(g, f.position)
        rep.fwhm_axial.append(fwhm(env, px, 0, dz_mm))
        rep.fwhm_lateral.append(fwhm(env, px, 1, dx_mm))
    for f in spec.disks:
        reg = DiskRegion(f.center, f.radius, inner, tuple(annulus))
        rep.cnr.append(cnr(env, reg.inside(g), reg.outside(g)))
        rep.gcnr.append(gcnr(env, reg.inside(g), reg.outside(g)))
    roi = speckle_roi(spec)
    if roi.any():
        rep.snr = speckle_snr(env[roi])
        sub = np.zeros_like(roi)
        sub[::ks_stride, ::ks_stride] = True
        vals = env[roi & sub]
        if vals.size >= 100 and vals.max() > 0:
            rep.ks = ks_rayleigh(vals)
    if truth is not None:
        ref = normalize01(envelope(np.asarray(truth, dtype=np.float64).reshape(g.shape)))
        est = normalize01(env)
        rep.ssim = ssim(est, ref)
        rep.psnr = psnr(est, ref)
    return rep
