"""Structural similarity and error metrics for reconstructed depth maps.

SSIM uses whole-image statistics with population (1/N) variances by
default; ``window`` switches to the usual locally averaged map.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import uniform_filter

# Mean test SSIM reported for the hardware experiment, in display order.
REFERENCE_SSIM = {"fusion": 0.6576, "photon_only": 0.6389, "radar_only": 0.5266}


@dataclass(frozen=True)
class SsimConstants:
    dynamic_range: float = 1.0
    k1: float = 0.01
    k2: float = 0.03
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        if not self.dynamic_range > 0:
            raise ValueError("dynamic_range must be positive")

    @property
    def c1(self) -> float:
        return (self.k1 * self.dynamic_range) ** 2

    @property
    def c2(self) -> float:
        return (self.k2 * self.dynamic_range) ** 2

    @property
    def c3(self) -> float:
        return self.c2 / 2


def _pair(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"image sizes differ: {x.shape} vs {y.shape}")
    if x.size < 4:
        raise ValueError("images need at least 4 pixels")
    return x, y


def _stats(x, y):
    mx, my = x.mean(), y.mean()
    dx, dy = x - mx, y - my
    return mx, my, np.mean(dx * dx), np.mean(dy * dy), np.mean(dx * dy)


def ssim_components(x, y, consts: SsimConstants = SsimConstants()):
    """Luminance, contrast and structure terms ``(l, c, s)``."""
    x, y = _pair(x, y)
    mx, my, vx, vy, cxy = _stats(x, y)
    sx, sy = np.sqrt(vx), np.sqrt(vy)
    lum = (2 * mx * my + consts.c1) / (mx * mx + my * my + consts.c1)
    con = (2 * sx * sy + consts.c2) / (vx + vy + consts.c2)
    struct = (cxy + consts.c3) / (sx * sy + consts.c3)
    return float(lum), float(con), float(struct)


def ssim(x, y, consts: SsimConstants = SsimConstants(), window: int = 0) -> float:
    """Structural similarity of two equally sized images.

    With unit exponents the combined closed form is used, which is exactly
    symmetric in its arguments; otherwise ``l**alpha * c**beta * s**gamma``.
    ``window > 0`` averages a local SSIM map computed over ``window``-sized
    box neighbourhoods (unit exponents only).
    """
    x, y = _pair(x, y)
    if window:
        return _windowed_ssim(x, y, consts, window)
    if (consts.alpha, consts.beta, consts.gamma) != (1.0, 1.0, 1.0):
        lum, con, struct = ssim_components(x, y, consts)
        return float(lum ** consts.alpha * con ** consts.beta * struct ** consts.gamma)
    mx, my, vx, vy, cxy = _stats(x, y)
    num = (2 * mx * my + consts.c1) * (2 * cxy + consts.c2)
    den = (mx * mx + my * my + consts.c1) * (vx + vy + consts.c2)
    return float(num / den)


def _windowed_ssim(x, y, consts, window):
    f = lambda a: uniform_filter(a, size=window, mode="reflect")  # noqa: E731
    mx, my = f(x), f(y)
    vx = f(x * x) - mx * mx
    vy = f(y * y) - my * my
    cxy = f(x * y) - mx * my
    num = (2 * mx * my + consts.c1) * (2 * cxy + consts.c2)
    den = (mx * mx + my * my + consts.c1) * (vx + vy + consts.c2)
    return float(np.mean(num / den))


def ssim_rows(pred, truth, consts: SsimConstants = SsimConstants()) -> np.ndarray:
    """Global SSIM of each row pair of two (n, pixels) arrays."""
    x = np.asarray(pred, dtype=np.float64)
    y = np.asarray(truth, dtype=np.float64)
    mx, my = x.mean(axis=1, keepdims=True), y.mean(axis=1, keepdims=True)
    dx, dy = x - mx, y - my
    vx, vy = np.mean(dx * dx, axis=1), np.mean(dy * dy, axis=1)
    cxy = np.mean(dx * dy, axis=1)
    mx, my = mx[:, 0], my[:, 0]
    num = (2 * mx * my + consts.c1) * (2 * cxy + consts.c2)
    den = (mx * mx + my * my + consts.c1) * (vx + vy + consts.c2)
    return num / den


def mse(x, y) -> float:
    x, y = _pair(x, y)
    return float(np.mean((x - y) ** 2))


@dataclass
class ModeScores:
    ssim: np.ndarray
    mse: np.ndarray

    @property
    def mean_ssim(self) -> float:
        return float(np.mean(self.ssim))

    @property
    def mean_mse(self) -> float:
        return float(np.mean(self.mse))


@dataclass
class EvalReport:
    modes: dict = field(default_factory=dict)  # mode -> ModeScores

    def summary(self) -> list[dict]:
        order = [m for m in REFERENCE_SSIM if m in self.modes]
        return [{"mode": m, "mean_ssim": self.modes[m].mean_ssim,
                 "mean_mse": self.modes[m].mean_mse, "n": int(self.modes[m].ssim.size),
                 "reference_ssim": REFERENCE_SSIM[m]} for m in order]

    def fusion_leads(self, margin: float = 0.0) -> bool:
        """True when fusion beats every other evaluated mode by ``margin``."""
        if "fusion" not in self.modes:
            return False
        f = self.modes["fusion"].mean_ssim
        return all(f >= s.mean_ssim + margin for m, s in self.modes.items() if m != "fusion"
                   ) and len(self.modes) > 1

    def to_dict(self) -> dict:
        return {
            "summary": self.summary(),
            "per_sample": {m: {"ssim": s.ssim.tolist(), "mse": s.mse.tolist()}
                           for m, s in self.modes.items()},
        }


def evaluate_suite(models: dict, fused, truth, consts: SsimConstants = SsimConstants()) -> EvalReport:
    """Score one or more models (keyed by fusion mode) on a common test set.

    ``fused`` holds full fusion-mode vectors; each model sees them masked
    for its own mode.  ``truth`` is in metres and is normalised by the
    model's depth scale.
    """
    from .fusion import apply_mode
    from .model import forward

    fused = np.asarray(fused)
    truth = np.asarray(truth, dtype=np.float64)
    if fused.shape[0] == 0:
        raise ValueError("empty test set")
    report = EvalReport()
    for mode, model in models.items():
        x = apply_mode(fused, model.photon_len, mode)
        pred = forward(model, x).astype(np.float64)
        y = truth / model.depth_scale
        s = np.array([ssim(p, t, consts) for p, t in zip(pred, y)])
        e = np.mean((pred - y) ** 2, axis=1)
        report.modes[mode] = ModeScores(s, e)
    return report
