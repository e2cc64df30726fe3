import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.signal import find_peaks

from fusiontof.photon import (
    SPEED_OF_LIGHT as C, Binning, IrfModel, MeasurementView, PhotonSimParams, TemporalHistogram,
    apply_shot_noise, bin_histogram, convolve_irf, ideal_arrival_times, simulate_photon_histogram,
)
from fusiontof.scene import GenerationParams, SceneSpec, TargetPrimitive, generate_scene, mirror_scene

QUIET = PhotonSimParams(noise_enabled=False)


def plate(x, z_front, w=1.0, h=1.0):
    return TargetPrimitive("box", (x, 0.0, z_front + 0.01), w, h, 0.02)


def test_arrival_time_round_trip():
    t, w = ideal_arrival_times((np.array([[0.0, 0.0, 3.0]]), np.array([1.0])))
    assert t[0] == pytest.approx(20.013845711889e-9, rel=1e-12)
    assert t[0] == 2 * 3.0 / C
    one_way = ideal_arrival_times((np.array([[0.0, 0.0, 3.0]]), np.array([1.0])),
                                  params=PhotonSimParams(trip_factor=1))[0]
    assert one_way[0] == 3.0 / C


def test_arrival_weights_follow_falloff():
    pts = np.array([[0.0, 0.0, 3.0], [0.0, 0.0, 4.0]])
    _, w = ideal_arrival_times((pts, np.ones(2)))
    assert w[0] / w[1] == pytest.approx((4 / 3) ** 4, rel=1e-12)
    assert w[0] / w[1] == pytest.approx(3.1605, abs=1e-4)
    _, w0 = ideal_arrival_times((pts, np.ones(2)), params=PhotonSimParams(falloff_exponent=0))
    assert np.array_equal(w0, [1.0, 1.0])


def test_arrivals_of_mirrored_points_are_identical():
    rng = np.random.default_rng(0)
    pts = rng.uniform(-1, 1, (50, 3)) + [0, 0, 3]
    rho = rng.uniform(0.1, 1, 50)
    a = ideal_arrival_times((pts, rho))
    b = ideal_arrival_times((pts * [-1, 1, 1], rho))
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_coincident_point_rejected():
    with pytest.raises(ValueError):
        ideal_arrival_times((np.zeros((1, 3)), np.ones(1)))


def test_single_arrival_bin():
    h = bin_histogram((np.array([20e-9]), np.array([1.0])), 0.0, 100e-12, 512)
    assert h.counts[200] == 1.0
    assert h.counts.sum() == 1.0


def test_empty_arrivals():
    h = bin_histogram((np.array([]), np.array([])), 0.0, 1e-10, 16)
    assert np.array_equal(h.counts, np.zeros(16))


def test_binning_conserves_in_window_weight_and_reports_drops():
    rng = np.random.default_rng(1)
    t = rng.uniform(-5e-9, 60e-9, 1000)
    w = rng.uniform(0, 2, 1000)
    h = bin_histogram((t, w), 0.0, 100e-12, 512)
    inside = (t >= 0) & (t < 512 * 100e-12)
    assert h.counts.sum() == pytest.approx(w[inside].sum(), rel=1e-12)
    assert h.dropped == int((~inside).sum())


def test_binning_ignores_arrival_order():
    rng = np.random.default_rng(2)
    t = rng.uniform(0, 50e-9, 500)
    w = rng.uniform(0, 1, 500)
    p = rng.permutation(500)
    a = bin_histogram((t, w))
    b = bin_histogram((t[p], w[p]))
    assert np.array_equal(a.counts, b.counts)


def test_histogram_validation():
    with pytest.raises(ValueError):
        TemporalHistogram(0.0, 0.0, [1.0])
    with pytest.raises(ValueError):
        TemporalHistogram(0.0, 1.0, [-1.0])
    with pytest.raises(ValueError):
        bin_histogram(([], []), n_bins=0)


def _delta(n=400, at=200, bw=25e-12):
    c = np.zeros(n)
    c[at] = 1.0
    return TemporalHistogram(0.0, bw, c)


def test_irf_blurs_delta_around_its_bin():
    out = convolve_irf(_delta(), IrfModel(200e-12))
    assert int(np.argmax(out.counts)) == 200
    assert np.allclose(out.counts[190:200], out.counts[201:211][::-1], rtol=1e-12)


def test_irf_preserves_total():
    rng = np.random.default_rng(3)
    c = np.zeros(512)
    c[100:400] = rng.uniform(0, 10, 300)
    h = TemporalHistogram(0.0, 100e-12, c)
    out = convolve_irf(h, IrfModel(2e-9))
    assert out.total() == pytest.approx(h.total(), rel=1e-9)


def _measured_fwhm(y, dx):
    # independent oracle: linear interpolation of the half-maximum crossings
    half = y.max() / 2
    above = np.flatnonzero(y >= half)
    i0, i1 = above[0], above[-1]
    left = i0 - 1 + (half - y[i0 - 1]) / (y[i0] - y[i0 - 1])
    right = i1 + (y[i1] - half) / (y[i1] - y[i1 + 1])
    return (right - left) * dx


def test_irf_width():
    out = convolve_irf(_delta(), IrfModel(200e-12))
    fwhm = _measured_fwhm(out.counts, 25e-12)
    assert 190e-12 <= fwhm <= 210e-12


def test_narrow_irf_is_identity():
    h = _delta(bw=100e-12)
    assert convolve_irf(h, IrfModel(2e-12)) is h


def test_shot_noise_is_seeded():
    h = TemporalHistogram(0.0, 1e-10, np.linspace(1, 5, 32))
    a = apply_shot_noise(h, 1000.0, 42)
    b = apply_shot_noise(h, 1000.0, 42)
    assert np.array_equal(a.counts, b.counts)
    assert not np.array_equal(a.counts, apply_shot_noise(h, 1000.0, 43).counts)


def test_shot_noise_tiny_budget_gives_nonnegative_integers():
    h = TemporalHistogram(0.0, 1e-10, np.linspace(1, 5, 32))
    out = apply_shot_noise(h, 1e-9, 0).counts
    assert np.all(out >= 0) and np.array_equal(out, np.round(out))
    with pytest.raises(ValueError):
        apply_shot_noise(h, 0.0, 0)
    with pytest.raises(ValueError):
        apply_shot_noise(TemporalHistogram(0.0, 1e-10, np.zeros(4)), 10.0, 0)


def test_shot_noise_mean_matches_poisson_mean():
    shape = np.array([0.5, 1.0, 2.0, 4.0, 2.0, 1.0, 0.25, 0.25])
    h = TemporalHistogram(0.0, 1e-10, shape)
    budget = 200.0
    lam = shape / shape.sum() * budget
    draws = np.array([apply_shot_noise(h, budget, s).counts for s in range(10_000)])
    se = np.sqrt(lam / draws.shape[0])
    assert np.all(np.abs(draws.mean(axis=0) - lam) < 3 * se)


# ---------------------------------------------------------------- end to end

def test_on_axis_plate_peak():
    h = simulate_photon_histogram(SceneSpec((plate(0.0, 3.0),)), QUIET)
    expected = 2 * 3.0 / C / h.bin_width
    assert abs(int(np.argmax(h.counts)) - expected) <= 1


def test_mirror_pair_histograms_identical():
    s = generate_scene(21, GenerationParams(labels=("C", "humanoid"), x_bounds=(-1.0, 1.0)))
    a = simulate_photon_histogram(s, QUIET)
    b = simulate_photon_histogram(mirror_scene(s), QUIET)
    assert np.array_equal(a.counts, b.counts)


def test_two_plates_give_two_peaks():
    s = SceneSpec((plate(-0.06, 3.0, 0.1, 0.1), plate(0.06, 3.6, 0.1, 0.1)))
    h = simulate_photon_histogram(s, PhotonSimParams(noise_enabled=False, falloff_exponent=0),
                                  Binning(), IrfModel(200e-12))
    peaks, _ = find_peaks(h.counts, height=0.2 * h.counts.max())
    assert peaks.size == 2
    sep = (peaks[1] - peaks[0]) * h.bin_width
    assert abs(sep - 2 * 0.6 / C) <= h.bin_width
    assert sep == pytest.approx(4.0e-9, abs=0.11e-9)


def test_peak_moves_monotonically_with_range():
    peaks = []
    for z in np.arange(2.0, 5.0, 0.25):
        h = simulate_photon_histogram(SceneSpec((plate(0.0, float(z), 0.2, 0.2),)), QUIET)
        peaks.append(int(np.argmax(h.counts)))
    assert all(b > a for a, b in zip(peaks, peaks[1:]))


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_mirror_invariance_property(seed):
    s = generate_scene(seed, GenerationParams(labels=("C", "T", "humanoid", "box"),
                                              x_bounds=(-1.0, 1.0), background=bool(seed % 2)))
    view = MeasurementView(64, 1.2)
    a = simulate_photon_histogram(s, QUIET, irf=IrfModel(200e-12), view=view)
    b = simulate_photon_histogram(mirror_scene(s), QUIET, irf=IrfModel(200e-12), view=view)
    assert np.array_equal(a.counts, b.counts)


def test_noisy_histogram_is_seeded():
    s = generate_scene(8)
    a = simulate_photon_histogram(s, noise_seed=5)
    b = simulate_photon_histogram(s, noise_seed=5)
    assert np.array_equal(a.counts, b.counts)
    assert a.total() == pytest.approx(10_000, rel=0.05)
    assert math.isclose(a.bin_width, 100e-12)
