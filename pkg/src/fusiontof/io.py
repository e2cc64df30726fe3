"""Persistence: dataset files, depth-map images, CSV exports, scenes and run
configuration.  Model checkpoints live in :mod:`fusiontof.model`.

Dataset file layout (all little-endian)::

    offset  type     field
    0       4 bytes  magic b"FTDS"
    4       u32      format version (1)
    8       u32      sample count n
    12      u32      photon_len
    16      u32      radar_len
    20      u32      map width
    24      u32      map height
    28      u32      flags (bit 0: shot noise on, bit 1: background on)
    32      u32      fusion mode index (0 fusion, 1 photon_only, 2 radar_only)
    36      f32[...] n records: photon_len + radar_len fused values, then
                     width * height ground-truth depths in metres (row-major)
    end-8   u64      first 8 bytes of BLAKE2b(digest_size=8) of the records
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import json
import struct
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .fusion import MODES
from .metrics import SsimConstants
from .model import TrainConfig, load_model, save_model  # noqa: F401  (re-exported)
from .photon import Binning, IrfModel, MeasurementView, PhotonSimParams, TemporalHistogram
from .radar import RadarParams, RangeProfile
from .scene import DepthMap, GenerationParams, Room, SceneSpec, SensorRig

DATASET_MAGIC = b"FTDS"
DATASET_VERSION = 1
_HEADER = struct.Struct("<4s8I")


class DatasetError(ValueError):
    """Base class for unreadable dataset files."""


class BadMagicError(DatasetError):
    pass


class UnsupportedVersionError(DatasetError):
    pass


class TruncatedFileError(DatasetError):
    pass


class ChecksumError(DatasetError):
    pass


class ConfigError(ValueError):
    pass


@dataclass
class Dataset:
    fused: np.ndarray  # (n, photon_len + radar_len) float32
    truth: np.ndarray  # (n, width * height) float32, metres
    photon_len: int
    radar_len: int
    width: int
    height: int
    noise: bool = True
    background: bool = False
    mode: str = "fusion"

    def __post_init__(self):
        self.fused = np.asarray(self.fused, dtype=np.float32).reshape(-1, self.photon_len + self.radar_len)
        self.truth = np.asarray(self.truth, dtype=np.float32).reshape(-1, self.width * self.height)
        if self.fused.shape[0] != self.truth.shape[0]:
            raise ValueError("fused and truth sample counts differ")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")

    def __len__(self) -> int:
        return self.fused.shape[0]

    def subset(self, index) -> "Dataset":
        return replace(self, fused=self.fused[index], truth=self.truth[index])


def payload_checksum(payload: bytes) -> int:
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")


def dataset_to_bytes(ds: Dataset) -> bytes:
    flags = int(ds.noise) | (int(ds.background) << 1)
    header = _HEADER.pack(DATASET_MAGIC, DATASET_VERSION, len(ds), ds.photon_len, ds.radar_len,
                          ds.width, ds.height, flags, MODES.index(ds.mode))
    records = np.concatenate([ds.fused, ds.truth], axis=1).astype("<f4")
    payload = records.tobytes()
    return header + payload + struct.pack("<Q", payload_checksum(payload))


def dataset_from_bytes(data: bytes) -> Dataset:
    if len(data) < 4 or data[:4] != DATASET_MAGIC:
        raise BadMagicError(f"not a dataset file (magic {data[:4]!r}, expected {DATASET_MAGIC!r})")
    if len(data) < _HEADER.size + 8:
        raise TruncatedFileError(f"file is {len(data)} bytes, shorter than the header")
    _, version, n, p_len, r_len, w, h, flags, mode = _HEADER.unpack_from(data)
    if version != DATASET_VERSION:
        raise UnsupportedVersionError(f"dataset version {version} is not supported")
    if mode >= len(MODES):
        raise DatasetError(f"invalid mode index {mode}")
    rec = p_len + r_len + w * h
    expected = _HEADER.size + 4 * n * rec + 8
    if len(data) != expected:
        raise TruncatedFileError(
            f"file is {len(data)} bytes but header declares {n} samples ({expected} bytes)"
        )
    payload = data[_HEADER.size:-8]
    (stored,) = struct.unpack("<Q", data[-8:])
    if payload_checksum(payload) != stored:
        raise ChecksumError("payload checksum mismatch")
    records = np.frombuffer(payload, "<f4").reshape(n, rec).astype(np.float32)
    return Dataset(records[:, :p_len + r_len], records[:, p_len + r_len:], p_len, r_len, w, h,
                   bool(flags & 1), bool(flags & 2), MODES[mode])


def write_dataset(ds: Dataset, path) -> None:
    Path(path).write_bytes(dataset_to_bytes(ds))


def read_dataset(path) -> Dataset:
    return dataset_from_bytes(Path(path).read_bytes())


def dataset_file_size(n: int, photon_len: int, radar_len: int, width: int, height: int) -> int:
    return _HEADER.size + 4 * n * (photon_len + radar_len + width * height) + 8


def export_pgm(dm, path, no_return: Optional[float] = None) -> None:
    """16-bit binary PGM; pixel = round(65535 * depth / no_return)."""
    if isinstance(dm, DepthMap):
        depth, no_return = dm.depth, dm.no_return
    else:
        depth = np.asarray(dm, dtype=float)
        if no_return is None:
            raise ValueError("no_return is required for a raw depth array")
    depth = np.asarray(depth, dtype=float)
    pix = np.clip(np.round(65535.0 * depth / no_return), 0, 65535).astype(">u2")
    h, w = pix.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n65535\n".encode("ascii") + pix.tobytes())


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise ValueError("not a binary PGM")
    w, h, maxval = (int(t) for t in tokens[1:])
    dtype = ">u2" if maxval > 255 else "u1"
    return np.frombuffer(data, dtype, w * h, pos + 1).reshape(h, w)


def write_histogram_csv(h: TemporalHistogram, path) -> None:
    with open(path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["bin_start_s", "count"])
        for t, c in zip(h.bin_starts(), h.counts):
            wr.writerow([repr(float(t)), repr(float(c))])


def write_profile_csv(p: RangeProfile, path) -> None:
    with open(path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["range_m", "magnitude"])
        for r, m in zip(p.ranges(), p.magnitudes):
            wr.writerow([repr(float(r)), repr(float(m))])


def read_series_csv(path):
    """Read one of the two CSV exports; returns (header_names, x, y)."""
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows or len(rows[0]) != 2:
        raise ValueError(f"{path}: expected a two-column CSV with a header")
    body = np.array([[float(a), float(b)] for a, b in rows[1:]]).reshape(-1, 2)
    return tuple(rows[0]), body[:, 0], body[:, 1]


def read_histogram_csv(path) -> TemporalHistogram:
    head, t, c = read_series_csv(path)
    if head != ("bin_start_s", "count"):
        raise ValueError(f"{path}: not a histogram CSV (header {head})")
    bw = float(t[1] - t[0]) if t.size > 1 else 1.0
    return TemporalHistogram(float(t[0]), bw, c)


def read_profile_csv(path) -> RangeProfile:
    head, r, m = read_series_csv(path)
    if head != ("range_m", "magnitude"):
        raise ValueError(f"{path}: not a range-profile CSV (header {head})")
    bw = float(r[1] - r[0]) if r.size > 1 else 2 * float(r[0])
    return RangeProfile(bw, m, bw * m.size)


def save_scene(scene: SceneSpec, path) -> None:
    Path(path).write_text(json.dumps(scene.to_dict(), indent=2), encoding="utf-8")


def load_scene(path) -> SceneSpec:
    return SceneSpec.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# ---------------------------------------------------------------- config

def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _floats(s: str) -> tuple:
    return tuple(float(p) for p in s.split(",") if p.strip())


def _ints(s: str) -> tuple:
    return tuple(int(p) for p in s.split(",") if p.strip())


def _labels(s: str) -> tuple:
    out = tuple(p.strip() for p in s.split(",") if p.strip())
    for lab in out:
        if lab not in ("C", "T", "humanoid", "box"):
            raise ValueError(f"unknown target label {lab!r}")
    return out


# section -> key -> (parser, default)
CONFIG_SCHEMA = {
    "scene": {
        "baseline_m": (float, 0.5),
        "labels": (_labels, ("C", "T", "humanoid")),
        "x_bounds": (_floats, (-0.7, 0.7)),
        "y_bounds": (_floats, (-0.9, 0.9)),
        "z_bounds": (_floats, (3.0, 4.0)),
        "background": (_bool, False),
        "reflectivity": (_floats, (0.5, 1.0)),
        "random_handedness": (_bool, True),
        "map_size": (int, 32),
        "fov": (float, 0.4),
        "no_return": (float, 6.0),
        "sim_resolution": (int, 128),
        "sim_fov": (float, 1.2),
        "mirror_pairs": (_bool, True),
    },
    "photon": {
        "trip_factor": (int, 2),
        "falloff_exponent": (float, 4.0),
        "total_expected_photons": (float, 10_000.0),
        "noise": (_bool, True),
        "t_start": (float, 0.0),
        "bin_width": (float, 100e-12),
        "n_bins": (int, 512),
        "irf_fwhm": (float, 2e-12),
    },
    "radar": {
        "bandwidth": (float, RadarParams.bandwidth),
        "pulse_width": (float, 10e-6),
        "center_freq": (float, 60e9),
        "sample_rate": (float, 1e9),
        "falloff_exponent": (float, 4.0),
        "max_range": (float, 7.0),
        "n_range_bins": (int, 64),
        "noise_floor": (float, 0.0),
        "coherent": (_bool, False),
    },
    "train": {
        "hidden": (_ints, (1024, 1024)),
        "learning_rate": (float, 4e-4),
        "epochs": (int, 300),
        "batch_size": (int, 64),
        "split_ratio": (float, 0.9),
        "seed": (int, 0),
        "optimizer": (str, "adam"),
        "dtype": (str, "float32"),
    },
    "metrics": {
        "dynamic_range": (float, 1.0),
        "window": (int, 0),
    },
}


@dataclass(frozen=True)
class RunConfig:
    """Parameters of every pipeline stage, as read from a config file."""

    rig: SensorRig
    generation: GenerationParams
    map_size: int
    fov: float
    no_return: float
    mirror_pairs: bool
    view: MeasurementView
    photon: PhotonSimParams
    binning: Binning
    irf: IrfModel
    radar: RadarParams
    train: TrainConfig
    ssim: SsimConstants
    ssim_window: int
    raw: dict

    @property
    def photon_len(self) -> int:
        return self.binning.n_bins

    @property
    def radar_len(self) -> int:
        return self.radar.n_range_bins

    def with_values(self, **sections) -> "RunConfig":
        """Copy with overrides, e.g. ``with_values(photon={"noise": False})``."""
        raw = {s: dict(v) for s, v in self.raw.items()}
        for sec, kv in sections.items():
            for k, v in kv.items():
                if sec not in CONFIG_SCHEMA or k not in CONFIG_SCHEMA[sec]:
                    raise ConfigError(f"unknown config key [{sec}] {k}")
                raw[sec][k] = v
        return build_config(raw)


def default_values() -> dict:
    return {sec: {k: d for k, (_, d) in keys.items()} for sec, keys in CONFIG_SCHEMA.items()}


def _check_pair(name, v):
    if len(v) != 2 or v[0] >= v[1]:
        raise ValueError(f"{name} needs two increasing values")
    return (float(v[0]), float(v[1]))


def build_config(values: dict) -> RunConfig:
    sc, ph, ra, tr, me = (values[s] for s in ("scene", "photon", "radar", "train", "metrics"))
    rig = SensorRig.with_baseline(sc["baseline_m"])
    gen = GenerationParams(
        labels=tuple(sc["labels"]),
        x_bounds=_check_pair("x_bounds", sc["x_bounds"]),
        y_bounds=_check_pair("y_bounds", sc["y_bounds"]),
        z_bounds=_check_pair("z_bounds", sc["z_bounds"]),
        background=sc["background"],
        reflectivity=_check_pair("reflectivity", sc["reflectivity"]),
        random_handedness=sc["random_handedness"],
        rig=rig,
        room=Room(),
    )
    radar = RadarParams(
        bandwidth=ra["bandwidth"], pulse_width=ra["pulse_width"], center_freq=ra["center_freq"],
        sample_rate=ra["sample_rate"], falloff_exponent=ra["falloff_exponent"],
        max_range=ra["max_range"], range_bin_m=ra["max_range"] / ra["n_range_bins"],
        noise_floor=ra["noise_floor"], coherent=ra["coherent"],
    )
    return RunConfig(
        rig=rig,
        generation=gen,
        map_size=sc["map_size"],
        fov=sc["fov"],
        no_return=sc["no_return"],
        mirror_pairs=sc["mirror_pairs"],
        view=MeasurementView(sc["sim_resolution"], sc["sim_fov"]),
        photon=PhotonSimParams(trip_factor=ph["trip_factor"], falloff_exponent=ph["falloff_exponent"],
                               total_expected_photons=ph["total_expected_photons"],
                               noise_enabled=ph["noise"]),
        binning=Binning(ph["t_start"], ph["bin_width"], ph["n_bins"]),
        irf=IrfModel(ph["irf_fwhm"]),
        radar=radar,
        train=TrainConfig(learning_rate=tr["learning_rate"], epochs=tr["epochs"],
                          batch_size=tr["batch_size"], split_ratio=tr["split_ratio"],
                          seed=tr["seed"], optimizer=tr["optimizer"], hidden=tuple(tr["hidden"]),
                          dtype=tr["dtype"]),
        ssim=SsimConstants(dynamic_range=me["dynamic_range"]),
        ssim_window=me["window"],
        raw=values,
    )


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    """Parse an INI-style document; absent keys take their defaults.

    Unknown sections or keys are rejected by name; syntax errors carry the
    offending line number.
    """
    cp = configparser.ConfigParser(interpolation=None, default_section="__unused__")
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    values = default_values()
    for sec in cp.sections():
        if sec not in CONFIG_SCHEMA:
            raise ConfigError(f"{source}: unknown section [{sec}]")
        for key, raw in cp.items(sec):
            if key not in CONFIG_SCHEMA[sec]:
                raise ConfigError(f"{source}: unknown key {key!r} in section [{sec}]")
            parser = CONFIG_SCHEMA[sec][key][0]
            try:
                values[sec][key] = parser(raw)
            except ValueError as exc:
                raise ConfigError(f"{source}: invalid value for {key!r} in [{sec}]: {exc}") from None
    try:
        return build_config(values)
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path=None) -> RunConfig:
    if path is None:
        return parse_config("")
    p = Path(path)
    return parse_config(p.read_text(encoding="utf-8"), str(p))
