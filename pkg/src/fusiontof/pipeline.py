"""End-to-end simulation: scene -> (fused measurement, ground-truth depth)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .fusion import FusedVector, fuse
from .io import Dataset, RunConfig
from .photon import TemporalHistogram, simulate_photon_histogram
from .radar import RangeProfile, simulate_range_profile, waveform_for
from .scene import DepthMap, SceneSpec, generate_scene, mirror_scene, render_depth_map


def sample_seed(seed: int, index: int) -> int:
    """Scene seed of sample ``index`` in a run seeded with ``seed``."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1, np.uint64)[0] >> 1)


def noise_seeds(scene_seed: int) -> tuple[int, int]:
    a, b = np.random.SeedSequence([scene_seed, 0x5EED]).generate_state(2)
    return int(a), int(b)


@dataclass
class Measurement:
    scene: SceneSpec
    histogram: TemporalHistogram
    profile: RangeProfile
    fused: FusedVector
    truth: DepthMap


def simulate(scene: SceneSpec, config: RunConfig, noise: Optional[bool] = None) -> Measurement:
    """Photon and radar forward models, fusion, and the ground-truth render.

    ``noise`` overrides both the photon shot noise and the radar noise floor.
    """
    photon = config.photon
    radar = config.radar
    if noise is not None:
        from dataclasses import replace
        photon = replace(photon, noise_enabled=noise)
        if not noise:
            radar = replace(radar, noise_floor=0.0)
    s_photon, s_radar = noise_seeds(scene.rng_seed)
    h_s = simulate_photon_histogram(scene, photon, config.binning, config.irf, config.view, s_photon)
    h_m = simulate_range_profile(scene, _waveform(config), radar, config.view, s_radar)
    truth = render_depth_map(scene, config.map_size, config.fov, no_return=config.no_return)
    return Measurement(scene, h_s, h_m, fuse(h_s, h_m, "fusion"), truth)


_WF_CACHE: dict = {}


def _waveform(config: RunConfig):
    key = (config.radar.pulse_width, config.radar.center_freq, config.radar.chirp_rate,
           config.radar.sample_rate)
    if key not in _WF_CACHE:
        _WF_CACHE[key] = waveform_for(config.radar)
    return _WF_CACHE[key]


def generate_dataset(config: RunConfig, count: int, seed: int = 0,
                     noise: Optional[bool] = None,
                     progress: Optional[Callable[[int, int], None]] = None) -> Dataset:
    """Simulate ``count`` random scenes.

    Sample ``i`` depends only on ``(seed, i)``, so results do not depend on
    how the work is split.  With ``config.mirror_pairs`` the odd samples are
    mirror images of the even ones before them.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    fused = np.empty((count, config.photon_len + config.radar_len), dtype=np.float32)
    truth = np.empty((count, config.map_size * config.map_size), dtype=np.float32)
    for i in range(count):
        if config.mirror_pairs:
            scene = generate_scene(sample_seed(seed, i // 2), config.generation)
            if i % 2:
                scene = mirror_scene(scene)
        else:
            scene = generate_scene(sample_seed(seed, i), config.generation)
        m = simulate(scene, config, noise)
        fused[i] = m.fused.values
        truth[i] = m.truth.depth.ravel()
        if progress:
            progress(i + 1, count)
    on = config.photon.noise_enabled if noise is None else noise
    return Dataset(fused, truth, config.photon_len, config.radar_len, config.map_size,
                   config.map_size, noise=on, background=config.generation.background)
