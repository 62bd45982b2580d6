"""Run configuration: sectioned ``key = value`` text with a fixed schema.

Unknown sections or keys are errors, every value is type- and range-checked,
and every diagnostic names the offending line. The canonical text (all keys,
defaults resolved, fixed order) is hashed to tag every output file.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

from .ddrm import GaussianPrior, Identity, SoftThreshold, make_schedule
from .geometry import (
    AcquisitionSetup,
    ApodizationLaw,
    ArrayGeometry,
    ImageGrid,
    PulseEchoResponse,
    Transmit,
    Window,
    required_sample_count,
)
from .phantoms import PAPER_GAMMAS, PhantomSpec, speckle_only, synvitro_layout


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str = "<config>"):
        self.line = line
        where = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(where + message)


def _pos(v):
    return v > 0


def _nonneg(v):
    return v >= 0


def _unit(v):
    return 0 <= v <= 1


_WINDOWS = tuple(w.value for w in Window)

# key -> (kind, default, check, hint). kind: int, float, str (choices), floats, auto-float.
SCHEMA: dict[str, dict[str, tuple]] = {
    "setup": {
        "elements": ("int", 32, lambda v: 1 <= v <= 1024, "1..1024"),
        "pitch": ("float", 0.2e-3, _pos, "> 0 m"),
        "c": ("float", 1540.0, lambda v: 300 <= v <= 5000, "300..5000 m/s"),
        "fs": ("float", 20e6, _pos, "> 0 Hz"),
        "f0": ("float", 5e6, _pos, "> 0 Hz, below fs/2"),
        "cycles": ("float", 3.0, _pos, "> 0"),
        "transmit": ("str", "plane_wave", ("plane_wave", "synthetic_aperture"), ""),
        "angle_deg": ("float", 0.0, lambda v: abs(v) < 90, "|angle| < 90"),
        "tx_element": ("int", 0, _nonneg, ">= 0"),
        "width": ("int", 64, lambda v: 1 <= v <= 512, "1..512"),
        "height": ("int", 64, lambda v: 1 <= v <= 512, "1..512"),
        "dx": ("float", 0.1e-3, _pos, "> 0 m"),
        "dz": ("auto", None, _pos, "> 0 m or auto (c / 2 fs)"),
        "z0": ("float", 2.5e-3, _nonneg, ">= 0 m"),
        "h_window": ("str", "hann", _WINDOWS, ""),
        "h_fnumber": ("float", 0.5, _pos, "> 0"),
        "h_taper": ("float", 0.25, _unit, "0..1"),
        "beamformer": ("str", "matched_filter", ("matched_filter", "das"), ""),
        "b_window": ("str", "hann", _WINDOWS, ""),
        "b_fnumber": ("float", 0.5, _pos, "> 0"),
        "b_taper": ("float", 0.25, _unit, "0..1"),
    },
    "phantom": {
        "layout": ("str", "synvitro", ("synvitro", "speckle"), ""),
        "speckle": ("float", 1.0, _nonneg, ">= 0"),
        "scatterer_amplitude": ("float", 10.0, _nonneg, ">= 0"),
        "radius_fraction": ("float", 0.2, lambda v: 0 < v < 0.5, "0..0.5"),
        "seed": ("int", 0, _nonneg, ">= 0"),
    },
    "noise": {
        "gammas": ("floats", PAPER_GAMMAS, lambda v: all(g >= 0 for g in v) and len(v) > 0,
                   "nonempty list of values >= 0"),
        "seed": ("int", 0, _nonneg, ">= 0"),
    },
    "sampler": {
        "method": ("str", "drus", ("mf-baseline", "drus", "wdrus"), ""),
        "it": ("int", 50, lambda v: v >= 1, ">= 1"),
        "T": ("int", 1000, lambda v: v >= 1, ">= 1"),
        "sigma_min": ("float", 0.01, _pos, "> 0"),
        "sigma_max": ("float", 2.0, _pos, "> sigma_min"),
        "eta": ("float", 0.85, _unit, "0..1"),
        "eta_b": ("float", 1.0, _unit, "0..1"),
        "sigma_d": ("auto", None, _nonneg, ">= 0 or auto"),
        "drus_sigma_d_gain": ("float", 6.0, _nonneg, ">= 0"),
        "wdrus_sigma_d_gain": ("float", 1.0, _nonneg, ">= 0"),
        "prior": ("str", "gaussian", ("gaussian", "soft", "identity", "external"), ""),
        "prior_variance": ("float", 0.01, _pos, "> 0 (physical units)"),
        "soft_kappa": ("float", 1.0, _nonneg, ">= 0"),
        "prior_command": ("str*", "", None, "command line of an external denoiser"),
        "scale_bound": ("float", 3.0, _pos, "> 0"),
        "chains": ("int", 16, lambda v: 1 <= v <= 4096, "1..4096"),
        "seed": ("int", 0, _nonneg, ">= 0"),
        "whitening_eps": ("float", 1e-6, lambda v: 0 <= v < 1, "0..1"),
    },
    "metrics": {
        "disk_inner": ("float", 0.8, lambda v: 0 < v <= 1, "0..1"),
        "annulus_inner": ("float", 1.3, lambda v: v >= 1, ">= 1"),
        "annulus_outer": ("float", 2.0, lambda v: v > 1, "> annulus_inner"),
        "ks_stride": ("int", 2, lambda v: v >= 1, ">= 1"),
    },
}

PRESETS = {
    "paper-synthetic": "",
    "picmus-like": """
[setup]
h_window = none
beamformer = das
b_window = tukey
b_fnumber = 1.4
b_taper = 0.25
""",
}


def _parse_value(kind, raw, check, hint, key, line, source):
    def bad(msg=None):
        raise ConfigError(msg or f"invalid value {raw!r} for {key} (expected {hint or kind})",
                          line, source)

    if kind == "str":
        if raw not in check:
            bad(f"invalid value {raw!r} for {key} (choose from {', '.join(check)})")
        return raw
    if kind == "str*":
        return raw
    if kind == "auto" and raw == "auto":
        return None
    try:
        if kind == "int":
            if raw.strip().lstrip("+-").isdigit():
                v = int(raw)
            else:
                bad()
        elif kind == "floats":
            v = tuple(float(p) for p in raw.split(",") if p.strip())
            if not all(math.isfinite(p) for p in v):
                bad()
        else:
            v = float(raw)
            if not math.isfinite(v):
                bad()
    except ValueError:
        bad()
    if not check(v):
        bad(f"{key} = {raw} out of range ({hint})")
    return v


def parse_text(text: str, source: str = "<config>", base: dict | None = None) -> dict:
    """Parse config text into ``{section: {key: value}}`` layered over ``base``."""
    out = {s: dict(base.get(s, {})) if base else {} for s in SCHEMA}
    section = None
    seen = set()
    for n, rawline in enumerate(text.splitlines(), start=1):
        line = rawline.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header {rawline.strip()!r}", n, source)
            section = line[1:-1].strip()
            if section not in SCHEMA:
                raise ConfigError(f"unknown section [{section}]", n, source)
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {rawline.strip()!r}", n, source)
        if section is None:
            raise ConfigError("key outside of any [section]", n, source)
        key, raw = (p.strip() for p in line.split("=", 1))
        if key not in SCHEMA[section]:
            raise ConfigError(f"unknown key {key!r} in [{section}]", n, source)
        if (section, key) in seen:
            raise ConfigError(f"duplicate key {key!r} in [{section}]", n, source)
        seen.add((section, key))
        kind, _, check, hint = SCHEMA[section][key]
        out[section][key] = _parse_value(kind, raw, check, hint, key, n, source)
    return out


def _fmt(v) -> str:
    if v is None:
        return "auto"
    if isinstance(v, tuple):
        return ", ".join(repr(float(x)) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass(frozen=True)
class RunConfig:
    values: dict

    def __getitem__(self, section):
        return self.values[section]

    @classmethod
    def from_text(cls, text: str, *, preset: str | None = None, source: str = "<config>",
                  require_content: bool = False) -> "RunConfig":
        if require_content and not any(
            ln.split("#", 1)[0].strip() for ln in text.splitlines()
        ):
            raise ConfigError("configuration is empty (no sections or keys)", 1, source)
        base = None
        if preset is not None:
            if preset not in PRESETS:
                raise ConfigError(f"unknown preset {preset!r} (choose from {', '.join(PRESETS)})")
            base = parse_text(PRESETS[preset], f"preset:{preset}")
        return cls._resolve(parse_text(text, source, base), source)

    @classmethod
    def preset(cls, name: str = "paper-synthetic") -> "RunConfig":
        return cls.from_text("", preset=name)

    @classmethod
    def _resolve(cls, parsed, source="<config>") -> "RunConfig":
        vals = {}
        for sec, keys in SCHEMA.items():
            vals[sec] = {k: parsed[sec].get(k, spec[1]) for k, spec in keys.items()}
        s = vals["setup"]
        if not s["f0"] < s["fs"] / 2:
            raise ConfigError("f0 must be below fs / 2", None, source)
        if s["transmit"] == "synthetic_aperture" and s["tx_element"] >= s["elements"]:
            raise ConfigError("tx_element out of range", None, source)
        sm = vals["sampler"]
        if not sm["sigma_min"] < sm["sigma_max"]:
            raise ConfigError("sigma_min must be below sigma_max", None, source)
        if sm["it"] > sm["T"]:
            raise ConfigError(f"it={sm['it']} exceeds T={sm['T']}", None, source)
        if sm["prior"] == "external" and not sm["prior_command"]:
            raise ConfigError("prior = external needs prior_command", None, source)
        m = vals["metrics"]
        if not m["annulus_inner"] < m["annulus_outer"]:
            raise ConfigError("annulus_inner must be below annulus_outer", None, source)
        return cls(vals)

    def override(self, section: str, **kv) -> "RunConfig":
        """Copy with values replaced (already typed); range checks still apply."""
        vals = {s: dict(v) for s, v in self.values.items()}
        for k, v in kv.items():
            if v is None:
                continue
            if k not in SCHEMA[section]:
                raise ConfigError(f"unknown key {k!r} in [{section}]")
            kind, _, check, hint = SCHEMA[section][k]
            if kind not in ("str", "str*") and not check(v):
                raise ConfigError(f"{k} = {v} out of range ({hint})")
            if kind == "str" and v not in check:
                raise ConfigError(f"invalid value {v!r} for {k}")
            vals[section][k] = v
        return RunConfig._resolve(vals)

    def canonical_text(self) -> str:
        lines = []
        for sec, keys in SCHEMA.items():
            lines.append(f"[{sec}]")
            lines += [f"{k} = {_fmt(self.values[sec][k])}" for k in keys]
            lines.append("")
        return "\n".join(lines)

    def digest(self, sections=None) -> str:
        """SHA-256 of the canonical text, optionally restricted to some sections."""
        if sections is None:
            text = self.canonical_text()
        else:
            text = "\n".join(
                f"[{s}]\n" + "\n".join(f"{k} = {_fmt(self.values[s][k])}" for k in SCHEMA[s])
                for s in sections
            )
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    # -- builders -------------------------------------------------------------

    def acquisition(self) -> AcquisitionSetup:
        s = self["setup"]
        tx = (Transmit.plane_wave(math.radians(s["angle_deg"])) if s["transmit"] == "plane_wave"
              else Transmit.synthetic_aperture(s["tx_element"]))
        dz = s["dz"] if s["dz"] is not None else s["c"] / (2 * s["fs"])
        w, h = s["width"], s["height"]
        grid = ImageGrid(w, h, (s["dx"], dz), (-(w - 1) / 2 * s["dx"], s["z0"]))
        pulse = PulseEchoResponse.gaussian(s["f0"], s["fs"], s["cycles"])
        law = ApodizationLaw(Window(s["h_window"]), s["h_fnumber"], s["h_taper"])
        geo = ArrayGeometry.linear(s["elements"], s["pitch"], s["c"], s["fs"], 1, tx)
        k = required_sample_count(geo, grid, pulse, law)
        return AcquisitionSetup(geo.with_sample_count(k), grid, pulse, law)

    def beamformer_law(self) -> ApodizationLaw:
        s = self["setup"]
        return ApodizationLaw(Window(s["b_window"]), s["b_fnumber"], s["b_taper"])

    def phantom(self, grid: ImageGrid | None = None) -> PhantomSpec:
        p = self["phantom"]
        grid = grid or self.acquisition().grid
        if p["layout"] == "speckle":
            return speckle_only(grid, p["seed"], p["speckle"])
        return synvitro_layout(grid, radius_fraction=p["radius_fraction"],
                               scatterer_amplitude=p["scatterer_amplitude"],
                               speckle=p["speckle"], seed=p["seed"])

    def schedule(self):
        sm = self["sampler"]
        return make_schedule(sm["T"], sm["it"], sm["sigma_min"], sm["sigma_max"])

    def sigma_d(self, method: str, gamma: float) -> float:
        sm = self["sampler"]
        if sm["sigma_d"] is not None:
            return float(sm["sigma_d"])
        gain = sm["drus_sigma_d_gain"] if method == "drus" else sm["wdrus_sigma_d_gain"]
        return float(gain * gamma)

    def prior(self):
        """Reference denoiser in model units (prior variance divided by ``scale_bound^2``)."""
        sm = self["sampler"]
        if sm["prior"] == "gaussian":
            return GaussianPrior(sm["prior_variance"] / sm["scale_bound"] ** 2)
        if sm["prior"] == "soft":
            return SoftThreshold(sm["soft_kappa"])
        if sm["prior"] == "identity":
            return Identity()
        from .denoiser_protocol import SubprocessDenoiser
        return SubprocessDenoiser(sm["prior_command"])
