"""The mirror-ambiguity benchmark: one dataset, three ablation models, held-out mirror pairs."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .fusion import MODES, apply_mode
from .io import RunConfig
from .metrics import EvalReport, evaluate_suite, ssim
from .model import MlpModel, forward, predict, split_indices, train
from .pipeline import Measurement, generate_dataset, sample_seed, simulate
from .scene import SceneSpec, generate_scene, mirror_scene

# held-out mirror scenes are drawn from their own seed stream
PAIR_SEED_OFFSET = 7919
MIN_OFF_PLANE = 0.05


@dataclass
class PairResult:
    scene: SceneSpec
    offset_x: float
    photon_identical: bool
    radar_max_diff: float
    photon_pred_mse: float
    # SSIM of each member's fusion prediction vs (own truth, mirrored truth)
    own_ssim: tuple
    other_ssim: tuple

    @property
    def correct(self) -> tuple:
        return tuple(a > b for a, b in zip(self.own_ssim, self.other_ssim))


@dataclass
class BenchmarkResult:
    report: EvalReport
    pairs: list
    models: dict
    timings: dict = field(default_factory=dict)
    train_reports: dict = field(default_factory=dict)

    @property
    def pair_accuracy(self) -> float:
        hits = [c for p in self.pairs for c in p.correct]
        return float(np.mean(hits)) if hits else float("nan")

    @property
    def max_photon_pred_mse(self) -> float:
        return max(p.photon_pred_mse for p in self.pairs)

    def summary(self) -> dict:
        return {
            "eval": self.report.summary(),
            "fusion_leads_by_0.02": self.report.fusion_leads(0.02),
            "mirror_pairs": len(self.pairs),
            "mirror_pair_accuracy": self.pair_accuracy,
            "max_photon_only_pair_mse": self.max_photon_pred_mse if self.pairs else None,
            "photon_histograms_identical": all(p.photon_identical for p in self.pairs),
            "timings_s": self.timings,
        }


def off_plane_scenes(config: RunConfig, count: int, seed: int, min_offset: float = MIN_OFF_PLANE):
    """First ``count`` generated scenes whose first target is ``min_offset`` off the mirror plane."""
    out, i = [], 0
    while len(out) < count:
        s = generate_scene(sample_seed(seed, i), config.generation)
        i += 1
        if abs(s.targets[0].center[0]) >= min_offset:
            out.append(s)
    return out


def compare_pair(scene: SceneSpec, config: RunConfig, photon_model: Optional[MlpModel],
                 fusion_model: Optional[MlpModel], noise: Optional[bool] = False):
    """Simulate a scene and its mirror and score the two models on both.

    Returns the :class:`PairResult` and the two :class:`Measurement` objects.
    """
    a = simulate(scene, config, noise)
    b = simulate(mirror_scene(scene), config, noise)
    pred_mse = float("nan")
    if photon_model is not None:
        xa = apply_mode(a.fused.values, a.fused.photon_len, "photon_only")
        xb = apply_mode(b.fused.values, b.fused.photon_len, "photon_only")
        pred_mse = float(np.mean((forward(photon_model, xa).astype(float)
                                  - forward(photon_model, xb).astype(float)) ** 2))
    own, other = (), ()
    if fusion_model is not None:
        scale = fusion_model.depth_scale
        ta, tb = a.truth.depth.ravel() / scale, b.truth.depth.ravel() / scale
        pa = forward(fusion_model, a.fused.values).astype(float)
        pb = forward(fusion_model, b.fused.values).astype(float)
        own = (ssim(pa, ta, config.ssim), ssim(pb, tb, config.ssim))
        other = (ssim(pa, tb, config.ssim), ssim(pb, ta, config.ssim))
    res = PairResult(
        scene=scene,
        offset_x=float(scene.targets[0].center[0]),
        photon_identical=bool(np.array_equal(a.histogram.counts, b.histogram.counts)),
        radar_max_diff=float(np.max(np.abs(a.fused.radar - b.fused.radar))),
        photon_pred_mse=pred_mse,
        own_ssim=own,
        other_ssim=other,
    )
    return res, a, b


def run_benchmark(config: RunConfig, count: int = 2000, seed: int = 0, n_pairs: int = 50,
                  modes=MODES, dataset=None,
                  log: Optional[Callable[[str], None]] = None) -> BenchmarkResult:
    """Generate (or reuse) a dataset, train one model per mode, evaluate and run mirror pairs.

    Every model uses the same train/test split, so the per-mode scores are
    computed on identical held-out samples.
    """
    say = log or (lambda msg: None)
    timings = {}
    t0 = time.perf_counter()
    if dataset is None:
        say(f"simulating {count} scenes")
        dataset = generate_dataset(config, count, seed)
    timings["generate"] = time.perf_counter() - t0
    models, reports = {}, {}
    for mode in modes:
        t = time.perf_counter()
        say(f"training {mode}")
        m, rep = train(dataset, replace(config.train, mode=mode), log=log)
        m.fov_x = m.fov_y = config.fov
        models[mode], reports[mode] = m, rep
        timings[f"train_{mode}"] = time.perf_counter() - t
    _, test_idx = split_indices(len(dataset), config.train.split_ratio, config.train.seed)
    t = time.perf_counter()
    report = evaluate_suite(models, dataset.fused[test_idx], dataset.truth[test_idx], config.ssim)
    pairs = []
    if n_pairs:
        for s in off_plane_scenes(config, n_pairs, seed + PAIR_SEED_OFFSET):
            pairs.append(compare_pair(s, config, models.get("photon_only"), models.get("fusion"))[0])
    timings["evaluate"] = time.perf_counter() - t
    timings["total"] = time.perf_counter() - t0
    return BenchmarkResult(report, pairs, models, timings, reports)


def predict_pair(model: MlpModel, a: Measurement, b: Measurement):
    """Depth-map predictions of one model for both members of a pair."""
    x = [apply_mode(m.fused.values, m.fused.photon_len, model.mode) for m in (a, b)]
    return predict(model, x[0]), predict(model, x[1])
