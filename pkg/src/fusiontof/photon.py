"""Single-pixel photon-counting forward model.

scene -> point cloud -> arrival times -> binned histogram -> IRF blur ->
Poisson shot noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import erf

from .scene import PointCloud, SceneSpec, point_cloud, render_depth_map

SPEED_OF_LIGHT = 299_792_458.0
FWHM_PER_SIGMA = 2.3548


@dataclass(frozen=True)
class TemporalHistogram:
    t_start: float
    bin_width: float
    counts: np.ndarray
    dropped: int = 0

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=float)
        if not self.bin_width > 0:
            raise ValueError("bin_width must be positive")
        if counts.ndim != 1 or counts.size < 1:
            raise ValueError("counts must be a non-empty 1D array")
        if not np.all(np.isfinite(counts)) or np.any(counts < 0):
            raise ValueError("counts must be finite and non-negative")
        object.__setattr__(self, "counts", counts)

    @property
    def n_bins(self) -> int:
        return self.counts.size

    def bin_starts(self) -> np.ndarray:
        return self.t_start + self.bin_width * np.arange(self.n_bins)

    def total(self) -> float:
        return float(self.counts.sum())


@dataclass(frozen=True)
class IrfModel:
    fwhm: float = 2e-12
    shape: str = "gaussian"

    def __post_init__(self):
        if not self.fwhm > 0:
            raise ValueError("IRF fwhm must be positive")
        if self.shape != "gaussian":
            raise ValueError(f"unsupported IRF shape {self.shape!r}")


@dataclass(frozen=True)
class PhotonSimParams:
    trip_factor: int = 2
    falloff_exponent: float = 4.0
    total_expected_photons: float = 10_000.0
    noise_enabled: bool = True
    c: float = SPEED_OF_LIGHT

    def __post_init__(self):
        if self.trip_factor not in (1, 2):
            raise ValueError("trip_factor must be 1 (one-way) or 2 (round trip)")
        if self.falloff_exponent < 0:
            raise ValueError("falloff_exponent must be >= 0")
        if not self.total_expected_photons > 0:
            raise ValueError("total_expected_photons must be positive")


@dataclass(frozen=True)
class Binning:
    t_start: float = 0.0
    bin_width: float = 100e-12
    n_bins: int = 512


@dataclass(frozen=True)
class MeasurementView:
    """Sampling of the scene used by the forward models (not the truth camera)."""

    resolution: int = 128
    fov: float = 1.2
    max_range: float = 20.0


def ideal_arrival_times(points, spd_pos: Sequence[float] = (0.0, 0.0, 0.0),
                        params: PhotonSimParams = PhotonSimParams()):
    """Arrival time and return weight of each point, in input order.

    Returns
    -------
    t, weight : ndarray
        ``t = trip_factor * |p - spd| / c`` and
        ``weight = rho / |p - spd| ** falloff_exponent``.
    """
    pts, rho = points
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    rho = np.asarray(rho, dtype=float)
    if pts.shape[0] == 0:
        raise ValueError("no points to simulate")
    diff = pts - np.asarray(spd_pos, dtype=float)
    r = np.sqrt(np.sum(diff * diff, axis=1))
    if np.any(r == 0):
        raise ValueError("point coincides with the detector position")
    t = params.trip_factor * r / params.c
    weight = rho / r ** params.falloff_exponent
    return t, weight


def bin_histogram(arrivals, t_start: float = 0.0, bin_width: float = 100e-12,
                  n_bins: int = 512) -> TemporalHistogram:
    """Accumulate weighted arrivals; out-of-window arrivals are counted in ``dropped``.

    Arrivals are summed in sorted (t, weight) order so the result depends only
    on the multiset of arrivals, not on their order.
    """
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    t, w = (np.asarray(a, dtype=float) for a in arrivals)
    counts = np.zeros(n_bins)
    if t.size == 0:
        return TemporalHistogram(t_start, bin_width, counts, 0)
    order = np.lexsort((w, t))
    t, w = t[order], w[order]
    idx = np.floor((t - t_start) / bin_width)
    keep = (idx >= 0) & (idx < n_bins)
    np.add.at(counts, idx[keep].astype(np.intp), w[keep])
    return TemporalHistogram(t_start, bin_width, counts, int(np.count_nonzero(~keep)))


def irf_kernel(fwhm: float, bin_width: float) -> np.ndarray:
    """Unit-sum Gaussian integrated over bins, truncated at +-4 sigma."""
    sigma = fwhm / FWHM_PER_SIGMA / bin_width
    half = max(1, int(math.ceil(4 * sigma)))
    edges = (np.arange(-half, half + 2) - 0.5) / (math.sqrt(2) * sigma)
    k = 0.5 * np.diff(erf(edges))
    return k / k.sum()


def convolve_irf(h: TemporalHistogram, irf: IrfModel) -> TemporalHistogram:
    if irf.fwhm < h.bin_width / 10:
        return h
    k = irf_kernel(irf.fwhm, h.bin_width)
    half = (k.size - 1) // 2
    full = np.convolve(h.counts, k)
    out = full[half:half + h.n_bins]
    return TemporalHistogram(h.t_start, h.bin_width, out, h.dropped)


def apply_shot_noise(h: TemporalHistogram, total_expected_photons: float,
                     rng_seed: int) -> TemporalHistogram:
    """Rescale to the photon budget and draw independent Poisson counts per bin."""
    total = h.total()
    if not total > 0:
        raise ValueError("cannot apply shot noise to an all-zero histogram")
    if not total_expected_photons > 0:
        raise ValueError("total_expected_photons must be positive")
    lam = h.counts * (total_expected_photons / total)
    rng = np.random.default_rng(rng_seed)
    return TemporalHistogram(h.t_start, h.bin_width, rng.poisson(lam).astype(float), h.dropped)


def scene_points(scene: SceneSpec, origin: Sequence[float], view: MeasurementView) -> PointCloud:
    """Points of ``scene`` visible from ``origin`` along the rig's optical axis."""
    dm = render_depth_map(scene, view.resolution, view.fov, camera_pos=origin,
                          no_return=view.max_range)
    return point_cloud(dm, origin)


def simulate_photon_histogram(scene: SceneSpec, params: PhotonSimParams = PhotonSimParams(),
                              binning: Binning = Binning(), irf: IrfModel = IrfModel(),
                              view: MeasurementView = MeasurementView(),
                              noise_seed: Optional[int] = None) -> TemporalHistogram:
    """Full photon forward model for one frame.

    Noise is seeded by ``noise_seed``, falling back to ``scene.rng_seed``.
    """
    spd = scene.rig.spd_pos
    cloud = scene_points(scene, spd, view)
    if cloud.points.shape[0] == 0:
        raise ValueError("scene has no points visible to the photon detector")
    arrivals = ideal_arrival_times(cloud, spd, params)
    h = bin_histogram(arrivals, binning.t_start, binning.bin_width, binning.n_bins)
    h = convolve_irf(h, irf)
    if params.noise_enabled:
        seed = scene.rng_seed if noise_seed is None else noise_seed
        h = apply_shot_noise(h, params.total_expected_photons, seed)
    return h
