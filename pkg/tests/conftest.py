import math

import numpy as np
import pytest

from drus.geometry import (
    AcquisitionSetup,
    ApodizationLaw,
    ArrayGeometry,
    ImageGrid,
    PulseEchoResponse,
    Transmit,
    Window,
    required_sample_count,
)

C, FS, F0 = 1540.0, 20e6, 5e6


def make_setup(nx=16, nz=16, n_elements=8, pitch=0.2e-3, dx=0.1e-3, dz=None,
               z0=2.5e-3, window=Window.HANN, f_number=0.5, transmit=None, pulse=None):
    dz = C / (2 * FS) if dz is None else dz
    grid = ImageGrid(nx, nz, (dx, dz), (-(nx - 1) / 2 * dx, z0))
    pulse = pulse or PulseEchoResponse.gaussian(F0, FS, 3)
    law = ApodizationLaw(window, f_number)
    geo = ArrayGeometry.linear(n_elements, pitch, C, FS, 1, transmit or Transmit())
    k = required_sample_count(geo, grid, pulse, law)
    return AcquisitionSetup(geo.with_sample_count(k), grid, pulse, law)


def brute_force_channel_data(setup, x):
    """Direct summation ``y_j[k] = sum_n w_jn x_n p(k - tau_jn)`` from first principles.

    Delays and weights are recomputed here with plain math; the pulse is
    evaluated by linear interpolation of its samples.
    """
    g, grid, pulse, law = setup.geometry, setup.grid, setup.pulse, setup.apodization
    x = np.asarray(x, dtype=np.float64).reshape(grid.shape)
    n_rx, k = g.element_count, g.sample_count
    pos = g.element_positions
    tx = g.transmit
    p = pulse.samples
    knots = np.arange(-1, p.size + 1) - pulse.center
    vals = np.concatenate([[0.0], p, [0.0]])
    y = np.zeros((n_rx, k))
    t = np.arange(k, dtype=np.float64)
    for iz in range(grid.height):
        for ix in range(grid.width):
            amp = x[iz, ix]
            if amp == 0:
                continue
            px = grid.origin[0] + ix * grid.pixel_pitch[0]
            pz = grid.origin[1] + iz * grid.pixel_pitch[1]
            if tx.kind.value == "plane_wave":
                s, c = math.sin(tx.angle), math.cos(tx.angle)
                t_tx = px * s + pz * c - min(e[0] * s + e[1] * c for e in pos)
            else:
                e = pos[tx.element]
                t_tx = math.hypot(px - e[0], pz - e[1])
            for j in range(n_rx):
                ex, ez = pos[j]
                tau = (t_tx + math.hypot(px - ex, pz - ez)) / g.sound_speed * g.sampling_frequency
                off, depth = abs(px - ex), pz - ez
                if law.window is Window.NONE:
                    w = 1.0
                else:
                    half = depth / (2 * law.f_number)
                    u = off / half if half > 0 else (0.0 if off == 0 else math.inf)
                    if u > 1:
                        continue
                    if law.window is Window.HANN:
                        w = 0.5 * (1 + math.cos(math.pi * u))
                    elif law.window is Window.RECT:
                        w = 1.0
                    else:
                        a = law.taper
                        w = 1.0 if u <= 1 - a else 0.5 * (1 + math.cos(math.pi * (u - 1 + a) / a))
                y[j] += amp * w * np.interp(t - tau, knots, vals, left=0.0, right=0.0)
    return y.ravel()


@pytest.fixture
def small_setup():
    return make_setup()


@pytest.fixture
def rng():
    return np.random.default_rng(20240514)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
