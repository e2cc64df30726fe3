"""Pulsed LFM radar forward model: chirp synthesis, echo superposition and
matched filtering (pulse compression) into a 1D range profile.

All signals are complex baseband.  The transmitted pulse starts at t = 0; a
scatterer at range R returns ``a * s(t - t0) * exp(-2j*pi*f_c*t0)`` with
``t0 = 2R/c``.  Fractional delays are applied as linear phase ramps in the
frequency domain (band-limited interpolation).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence, Union

import numpy as np
from scipy import fft as sfft

from .photon import SPEED_OF_LIGHT, MeasurementView, scene_points
from .scene import SceneSpec

_ACF_UPSAMPLE = 16


@dataclass(frozen=True, eq=False)
class LfmWaveform:
    pulse_width: float
    center_freq: float
    chirp_rate: float
    sample_rate: float
    samples: np.ndarray

    @property
    def bandwidth(self) -> float:
        return abs(self.chirp_rate) * self.pulse_width

    @property
    def n_samples(self) -> int:
        return self.samples.size

    def times(self) -> np.ndarray:
        """Sample instants on the pulse-centred axis [-T_p/2, T_p/2)."""
        n = self.n_samples
        return (np.arange(n) - n // 2) / self.sample_rate


@dataclass(frozen=True)
class RadarParams:
    """Radar configuration.  The defaults give exactly 0.5 m range resolution."""

    bandwidth: float = SPEED_OF_LIGHT  # c / (2 * 0.5 m)
    pulse_width: float = 10e-6
    center_freq: float = 60e9
    sample_rate: float = 1e9
    falloff_exponent: float = 4.0
    max_range: float = 7.0
    range_bin_m: float = 7.0 / 64
    noise_floor: float = 0.0
    rng_seed: int = 0
    coherent: bool = True
    c: float = SPEED_OF_LIGHT

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        if not (self.max_range > 0 and self.range_bin_m > 0):
            raise ValueError("max_range and range_bin_m must be positive")
        if self.noise_floor < 0 or self.falloff_exponent < 0:
            raise ValueError("noise_floor and falloff_exponent must be >= 0")

    @property
    def chirp_rate(self) -> float:
        return self.bandwidth / self.pulse_width

    @property
    def n_range_bins(self) -> int:
        return int(round(self.max_range / self.range_bin_m))


@dataclass(frozen=True)
class RangeProfile:
    range_bin_m: float
    magnitudes: np.ndarray
    max_range: float

    def __post_init__(self):
        mags = np.asarray(self.magnitudes, dtype=float)
        if not self.range_bin_m > 0:
            raise ValueError("range_bin_m must be positive")
        if not np.all(np.isfinite(mags)):
            raise ValueError("magnitudes must be finite")
        object.__setattr__(self, "magnitudes", mags)

    def ranges(self) -> np.ndarray:
        """Bin-centre ranges in metres."""
        return (np.arange(self.magnitudes.size) + 0.5) * self.range_bin_m


@dataclass(frozen=True)
class Echo:
    samples: np.ndarray
    sample_rate: float
    dropped: int = 0


def synthesize_lfm(pulse_width: float, center_freq: float, chirp_rate: float,
                   sample_rate: float) -> LfmWaveform:
    """Baseband chirp ``exp(j*pi*K*t**2)`` sampled over one pulse."""
    if not pulse_width > 0:
        raise ValueError("pulse_width must be positive")
    min_rate = 2.5 * abs(chirp_rate) * pulse_width
    if sample_rate < min_rate:
        raise ValueError(
            f"sample rate {sample_rate:.6g} Hz undersamples the sweep; minimum is {min_rate:.6g} Hz"
        )
    n = int(round(pulse_width * sample_rate))
    t = (np.arange(n) - n // 2) / sample_rate
    return LfmWaveform(pulse_width, center_freq, chirp_rate, sample_rate,
                       np.exp(1j * np.pi * chirp_rate * t * t))


def waveform_for(params: RadarParams) -> LfmWaveform:
    return synthesize_lfm(params.pulse_width, params.center_freq, params.chirp_rate,
                          params.sample_rate)


def range_resolution(params: RadarParams) -> float:
    if not params.bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    return params.c / (2.0 * params.bandwidth)


def echo_length(wf: LfmWaveform, max_range: float, c: float = SPEED_OF_LIGHT) -> int:
    return int(math.ceil((2.0 * max_range / c + wf.pulse_width) * wf.sample_rate)) + 1


def _ranges_and_amplitudes(points, radar_pos, params: RadarParams):
    pts, rho = points
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    rho = np.asarray(rho, dtype=float)
    if pts.shape[0] == 0:
        raise ValueError("no points to simulate")
    diff = pts - np.asarray(radar_pos, dtype=float)
    r = np.sqrt(np.sum(diff * diff, axis=1))
    if np.any(r == 0):
        raise ValueError("point coincides with the radar position")
    keep = r <= params.max_range
    r, rho = r[keep], rho[keep]
    amp = rho / r ** params.falloff_exponent
    return r, amp, int(np.count_nonzero(~keep))


def _delay_spectrum(delays, weights, freqs, chunk: int = 256) -> np.ndarray:
    """Sum over scatterers of ``w * exp(-2j*pi*f*t0)`` at each frequency."""
    out = np.zeros(freqs.size, dtype=complex)
    for i in range(0, delays.size, chunk):
        ph = np.exp(-2j * np.pi * np.outer(delays[i:i + chunk], freqs))
        out += weights[i:i + chunk] @ ph
    return out


def _noise(n: int, std: float, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return (rng.standard_normal(n) + 1j * rng.standard_normal(n)) * (std / math.sqrt(2))


def simulate_echo(points, radar_pos: Sequence[float], wf: LfmWaveform,
                  params: RadarParams = RadarParams(), noise_seed: Optional[int] = None) -> Echo:
    """Coherent sum of delayed, attenuated chirp copies plus optional noise.

    Points beyond ``params.max_range`` are dropped and counted in
    ``Echo.dropped``.
    """
    r, amp, dropped = _ranges_and_amplitudes(points, radar_pos, params)
    n_echo = echo_length(wf, params.max_range, params.c)
    samples = np.zeros(n_echo, dtype=complex)
    if r.size:
        n_fft = sfft.next_fast_len(n_echo + wf.n_samples)
        freqs = sfft.fftfreq(n_fft, 1.0 / wf.sample_rate)
        t0 = 2.0 * r / params.c
        weights = amp * np.exp(-2j * np.pi * wf.center_freq * t0)
        spec = sfft.fft(wf.samples, n_fft) * _delay_spectrum(t0, weights, freqs)
        samples = sfft.ifft(spec)[:n_echo]
    if params.noise_floor > 0:
        seed = params.rng_seed if noise_seed is None else noise_seed
        samples = samples + _noise(n_echo, params.noise_floor, seed)
    return Echo(samples, wf.sample_rate, dropped)


def _bin_lags(params: RadarParams) -> np.ndarray:
    centres = (np.arange(params.n_range_bins) + 0.5) * params.range_bin_m
    return 2.0 * centres / params.c


def matched_filter(echo: Union[Echo, np.ndarray], wf: LfmWaveform,
                   params: RadarParams = RadarParams()) -> RangeProfile:
    """Cross-correlate the echo with the transmitted pulse.

    The correlation is evaluated exactly (as a band-limited inverse DFT) at
    the lag of every range-bin centre, ``tau = 2 r / c``, and scaled by
    ``1 / f_s`` so that a unit point target peaks at ``T_p``.
    """
    if isinstance(echo, Echo):
        if echo.sample_rate != wf.sample_rate:
            raise ValueError("echo and waveform sample rates differ")
        x = echo.samples
    else:
        x = np.asarray(echo, dtype=complex)
    if x.ndim != 1 or x.size < wf.n_samples:
        raise ValueError(
            f"echo length {x.size} is shorter than the waveform ({wf.n_samples} samples)"
        )
    n_fft = sfft.next_fast_len(x.size + wf.n_samples)
    corr = sfft.fft(x, n_fft) * np.conj(sfft.fft(wf.samples, n_fft))
    freqs = sfft.fftfreq(n_fft, 1.0 / wf.sample_rate)
    lags = _bin_lags(params)
    out = np.exp(2j * np.pi * np.outer(lags, freqs)) @ corr / n_fft
    return RangeProfile(params.range_bin_m, np.abs(out) / wf.sample_rate, params.max_range)


@lru_cache(maxsize=8)
def _acf_table(pulse_width, center_freq, chirp_rate, sample_rate, max_lag):
    wf = synthesize_lfm(pulse_width, center_freq, chirp_rate, sample_rate)
    n_fft = sfft.next_fast_len(2 * wf.n_samples)
    power = np.abs(sfft.fft(wf.samples, n_fft)) ** 2
    up = n_fft * _ACF_UPSAMPLE
    # zero-padding the spectrum interpolates the autocorrelation in time
    padded = np.zeros(up, dtype=complex)
    half = n_fft // 2
    padded[:half] = power[:half]
    padded[-(n_fft - half):] = power[half:]
    acf = sfft.ifft(padded) * _ACF_UPSAMPLE
    step = 1.0 / (sample_rate * _ACF_UPSAMPLE)
    n_lag = int(math.ceil(max_lag / step)) + 2
    vals = np.concatenate([acf[-n_lag:], acf[:n_lag + 1]])
    lags = np.arange(-n_lag, n_lag + 1) * step
    return lags, (np.abs(vals) / sample_rate) ** 2


def incoherent_profile(points, radar_pos: Sequence[float], wf: LfmWaveform,
                       params: RadarParams = RadarParams(),
                       noise_seed: Optional[int] = None) -> RangeProfile:
    """Root-sum-square of per-scatterer matched-filter magnitudes.

    This is the expected profile magnitude when scatterer phases are
    independent and uniform, i.e. speckle averaged out.
    """
    r, amp, _ = _ranges_and_amplitudes(points, radar_pos, params)
    lags = _bin_lags(params)
    max_lag = 2.0 * params.max_range / params.c + 4.0 / wf.bandwidth
    tab_lag, tab_pow = _acf_table(wf.pulse_width, wf.center_freq, wf.chirp_rate,
                                  wf.sample_rate, max_lag)
    power = np.zeros(lags.size)
    t0 = 2.0 * r / params.c
    for i in range(0, t0.size, 512):
        d = lags[None, :] - t0[i:i + 512, None]
        p = np.interp(d, tab_lag, tab_pow, left=0.0, right=0.0)
        power += (amp[i:i + 512] ** 2) @ p
    if params.noise_floor > 0:
        seed = params.rng_seed if noise_seed is None else noise_seed
        n = _noise(echo_length(wf, params.max_range, params.c), params.noise_floor, seed)
        power += matched_filter(n, wf, params).magnitudes ** 2
    return RangeProfile(params.range_bin_m, np.sqrt(power), params.max_range)


def compressed_pulse_approx(lag, wf: LfmWaveform) -> np.ndarray:
    """Textbook compressed-pulse envelope ``T_p |sinc(B * lag)|``."""
    return wf.pulse_width * np.abs(np.sinc(wf.bandwidth * np.asarray(lag, dtype=float)))


def simulate_range_profile(scene: SceneSpec, wf: Optional[LfmWaveform] = None,
                           params: RadarParams = RadarParams(),
                           view: MeasurementView = MeasurementView(),
                           noise_seed: Optional[int] = None) -> RangeProfile:
    """Radar forward model over the points visible from ``scene.rig.radar_pos``."""
    wf = waveform_for(params) if wf is None else wf
    radar = scene.rig.radar_pos
    cloud = scene_points(scene, radar, view)
    if cloud.points.shape[0] == 0:
        return RangeProfile(params.range_bin_m, np.zeros(params.n_range_bins), params.max_range)
    if params.coherent:
        return matched_filter(simulate_echo(cloud, radar, wf, params, noise_seed), wf, params)
    return incoherent_profile(cloud, radar, wf, params, noise_seed)
