"""Per-modality normalisation and concatenation of the two 1D measurements."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .photon import TemporalHistogram
from .radar import RangeProfile

MODES = ("fusion", "photon_only", "radar_only")


@dataclass(frozen=True)
class FusedVector:
    photon_len: int
    radar_len: int
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if self.photon_len <= 0 or self.radar_len < 0:
            raise ValueError("photon_len must be > 0 and radar_len >= 0")
        if v.shape != (self.photon_len + self.radar_len,):
            raise ValueError(
                f"values has length {v.size}, expected {self.photon_len + self.radar_len}"
            )
        object.__setattr__(self, "values", v)

    @property
    def photon(self) -> np.ndarray:
        return self.values[:self.photon_len]

    @property
    def radar(self) -> np.ndarray:
        return self.values[self.photon_len:]


def normalize(values) -> np.ndarray:
    """Divide by the maximum.  An all-zero input is returned unchanged."""
    v = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("cannot normalise non-finite values")
    if np.any(v < 0):
        raise ValueError("cannot normalise negative values")
    peak = v.max() if v.size else 0.0
    return v / peak if peak > 0 else v.copy()


def apply_mode(values: np.ndarray, photon_len: int, mode: str) -> np.ndarray:
    """Zero the segment a given ablation mode does not see.

    Works on a single vector or on rows of a 2D array; returns a copy.
    """
    if mode not in MODES:
        raise ValueError(f"unknown fusion mode {mode!r}; expected one of {MODES}")
    out = np.array(values, copy=True)
    if mode == "photon_only":
        out[..., photon_len:] = 0
    elif mode == "radar_only":
        out[..., :photon_len] = 0
    return out


def fuse(h_s: TemporalHistogram, h_m: RangeProfile, mode: str = "fusion") -> FusedVector:
    photon = normalize(h_s.counts)
    radar = normalize(h_m.magnitudes)
    values = apply_mode(np.concatenate([photon, radar]), photon.size, mode)
    return FusedVector(photon.size, radar.size, values)
