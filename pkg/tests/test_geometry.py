import math

import numpy as np
import pytest

from drus.geometry import (
    DELAY_SNAP,
    ApodizationLaw,
    ArrayGeometry,
    ImageGrid,
    PulseEchoResponse,
    Transmit,
    Window,
    apodization_matrix,
    apodization_weight,
    compute_delay,
    delay_matrix,
    required_sample_count,
)

from conftest import C, FS, make_setup


def test_grid_indexing_is_row_major():
    g = ImageGrid(5, 3, (1e-4, 2e-4), (0.0, 1e-3))
    assert g.size == 15 and g.shape == (3, 5)
    pts = g.positions()
    assert np.allclose(pts[7], [2e-4, 1e-3 + 2e-4])
    assert g.flat(1, 2) == 7


def test_grid_rejects_bad_pitch():
    with pytest.raises(ValueError):
        ImageGrid(4, 4, (0.0, 1e-4), (0.0, 0.0))


def test_zero_angle_plane_wave_delay_is_depth_plus_return():
    s = make_setup(nx=3, nz=3, n_elements=4)
    for j in range(4):
        for px in [(0, 0), (2, 1), (1, 2)]:
            p = s.grid.position(px)
            e = s.geometry.element_positions[j]
            want = (p[1] + math.hypot(p[0] - e[0], p[1] - e[1])) / C * FS
            assert compute_delay(s, px, j) == pytest.approx(want, rel=1e-12)


def test_steered_plane_wave_matches_ray_geometry():
    # the wavefront passes the first-firing element at t = 0
    ang = math.radians(10.0)
    s = make_setup(nx=4, nz=4, n_elements=6, transmit=Transmit.plane_wave(ang))
    pos = s.geometry.element_positions
    first = pos[np.argmin(pos[:, 0])]
    for px in [(0, 0), (3, 3), (1, 2)]:
        p = s.grid.position(px)
        # distance from the plane through `first` with normal (sin, cos)
        d_tx = (p[0] - first[0]) * math.sin(ang) + (p[1] - first[1]) * math.cos(ang)
        for j in (0, 5):
            d_rx = math.hypot(p[0] - pos[j][0], p[1] - pos[j][1])
            assert compute_delay(s, px, j) == pytest.approx((d_tx + d_rx) / C * FS, rel=1e-12)


def test_synthetic_aperture_delay():
    s = make_setup(nx=3, nz=3, n_elements=4, transmit=Transmit.synthetic_aperture(1))
    pos = s.geometry.element_positions
    p = s.grid.position((2, 0))
    want = (math.dist(p, pos[1]) + math.dist(p, pos[3])) / C * FS
    assert compute_delay(s, (2, 0), 3) == pytest.approx(want, rel=1e-12)


def test_delay_matrix_agrees_with_scalar_path():
    s = make_setup(nx=5, nz=4, n_elements=5, transmit=Transmit.plane_wave(0.2))
    tau = delay_matrix(s)
    for n in (0, 7, 19):
        iz, ix = divmod(n, 5)
        for j in range(5):
            assert tau[n, j] == pytest.approx(compute_delay(s, (iz, ix), j), abs=1e-9)


def test_near_integer_delays_snap():
    # a pixel right below an element at exactly 10 samples of two-way path
    geo = ArrayGeometry.linear(1, 1e-4, C, FS, 64)
    z = 10 * C / (2 * FS) * (1 + 1e-12)
    grid = ImageGrid(1, 1, (1e-4, 1e-4), (0.0, z))
    from drus.geometry import AcquisitionSetup

    s = AcquisitionSetup(geo, grid, PulseEchoResponse.delta(), ApodizationLaw(Window.NONE))
    assert delay_matrix(s)[0, 0] == 10.0
    assert DELAY_SNAP > 1e-12


def test_hann_window_values():
    law = ApodizationLaw(Window.HANN, 1.0)
    depth = 2e-3  # half aperture 1 mm
    w = law.weights(np.array([0.0, 0.5e-3, 1e-3, 1.2e-3]), depth)
    assert np.allclose(w, [1.0, 0.5, 0.0, 0.0])


def test_tukey_flat_top_and_taper():
    law = ApodizationLaw(Window.TUKEY, 1.0, taper=0.5)
    w = law.weights(np.array([0.0, 0.4e-3, 0.75e-3, 1e-3]), 2e-3)
    assert np.allclose(w, [1.0, 1.0, 0.5, 0.0])


def test_apodization_at_zero_depth_only_on_axis():
    law = ApodizationLaw(Window.HANN, 0.5)
    assert law.weights(0.0, 0.0) == 1.0
    assert law.weights(1e-6, 0.0) == 0.0


def test_window_none_is_unit_everywhere():
    law = ApodizationLaw(Window.NONE)
    assert np.all(law.weights(np.linspace(-1, 1, 5), 1e-3) == 1.0)
    assert math.isinf(law.half_aperture(1e-3))


def test_apodization_matrix_matches_scalar():
    s = make_setup(nx=4, nz=4, n_elements=8)
    w = apodization_matrix(s.apodization, s)
    assert w[5, 3] == apodization_weight(s.apodization, s, (1, 1), 3)


def test_invalid_apodization_rejected():
    with pytest.raises(ValueError):
        ApodizationLaw(Window.HANN, 0.0)
    with pytest.raises(ValueError):
        ApodizationLaw(Window.TUKEY, 1.0, taper=1.5)


def test_gaussian_pulse_is_centered_and_symmetric():
    p = PulseEchoResponse.gaussian(5e6, 20e6, 3)
    assert p.samples[p.center] == pytest.approx(1.0)
    assert np.allclose(p.samples, p.samples[::-1])


def test_required_sample_count_covers_tail():
    s = make_setup(nx=6, nz=6, n_elements=4)
    tau = delay_matrix(s)[apodization_matrix(s.apodization, s) > 0]
    k = required_sample_count(s.geometry, s.grid, s.pulse, s.apodization)
    assert k > np.max(tau) + len(s.pulse) - s.pulse.center - 1


def test_receiver_out_of_range():
    s = make_setup(nx=2, nz=2, n_elements=2)
    with pytest.raises(IndexError):
        compute_delay(s, (0, 0), 2)
