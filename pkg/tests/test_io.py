import numpy as np
import pytest

from fusiontof.io import (
    BadMagicError, ChecksumError, ConfigError, Dataset, TruncatedFileError,
    UnsupportedVersionError, dataset_file_size, dataset_from_bytes, dataset_to_bytes, export_pgm,
    load_config, load_scene, parse_config, read_dataset, read_histogram_csv, read_pgm,
    read_profile_csv, save_scene, write_dataset, write_histogram_csv, write_profile_csv,
)
from fusiontof.photon import TemporalHistogram
from fusiontof.radar import RangeProfile
from fusiontof.scene import DepthMap, GenerationParams, generate_scene


def random_dataset(n=10, seed=0):
    rng = np.random.default_rng(seed)
    return Dataset(rng.uniform(0, 1, (n, 576)), rng.uniform(0.5, 6.0, (n, 1024)), 512, 64, 32, 32,
                   noise=True, background=False, mode="fusion")


def test_dataset_round_trip(tmp_path):
    ds = random_dataset()
    path = tmp_path / "d.ftds"
    write_dataset(ds, path)
    back = read_dataset(path)
    assert back.fused.tobytes() == ds.fused.tobytes()
    assert back.truth.tobytes() == ds.truth.tobytes()
    assert (back.photon_len, back.radar_len, back.width, back.height) == (512, 64, 32, 32)
    assert back.noise and not back.background and back.mode == "fusion"
    assert dataset_to_bytes(back) == path.read_bytes()


def test_flipped_payload_byte_fails_checksum():
    raw = bytearray(dataset_to_bytes(random_dataset()))
    raw[100] ^= 0x01
    with pytest.raises(ChecksumError):
        dataset_from_bytes(bytes(raw))


def test_distinct_failures():
    raw = dataset_to_bytes(random_dataset(3))
    with pytest.raises(BadMagicError):
        dataset_from_bytes(b"NOPE" + raw[4:])
    with pytest.raises(UnsupportedVersionError):
        dataset_from_bytes(raw[:4] + (2).to_bytes(4, "little") + raw[8:])
    with pytest.raises(TruncatedFileError):
        dataset_from_bytes(raw[:-20])
    with pytest.raises(TruncatedFileError):
        dataset_from_bytes(raw[:12])


def test_file_size_arithmetic():
    assert dataset_file_size(4000, 512, 64, 32, 32) == 36 + 4000 * (576 + 1024) * 4 + 8
    assert len(dataset_to_bytes(random_dataset(7))) == dataset_file_size(7, 512, 64, 32, 32)


def test_subset():
    ds = random_dataset(10)
    sub = ds.subset([1, 3])
    assert len(sub) == 2 and np.array_equal(sub.fused[1], ds.fused[3])


def test_pgm(tmp_path):
    depth = np.full((32, 32), 6.0)
    depth[4, 5] = 3.0
    dm = DepthMap(depth, np.zeros_like(depth), 0.5, 0.5, 6.0)
    path = tmp_path / "d.pgm"
    export_pgm(dm, path)
    pix = read_pgm(path)
    assert pix[4, 5] == 32768
    assert pix[0, 0] == 65535
    header = b"P5\n32 32\n65535\n"
    assert path.read_bytes().startswith(header)
    assert path.stat().st_size == len(header) + 2048
    export_pgm(np.full((4, 4), 6.0), path, no_return=6.0)
    assert np.all(read_pgm(path) == 65535)
    with pytest.raises(ValueError):
        export_pgm(np.ones((2, 2)), path)


def test_csv_round_trips(tmp_path):
    h = TemporalHistogram(0.0, 100e-12, np.random.default_rng(0).uniform(0, 9, 512))
    write_histogram_csv(h, tmp_path / "h.csv")
    hb = read_histogram_csv(tmp_path / "h.csv")
    assert np.array_equal(hb.counts, h.counts) and hb.bin_width == pytest.approx(100e-12, rel=1e-9)
    p = RangeProfile(7 / 64, np.random.default_rng(1).uniform(0, 1, 64), 7.0)
    write_profile_csv(p, tmp_path / "p.csv")
    pb = read_profile_csv(tmp_path / "p.csv")
    assert np.array_equal(pb.magnitudes, p.magnitudes)
    assert pb.range_bin_m == pytest.approx(7 / 64, rel=1e-12)
    with pytest.raises(ValueError, match="not a histogram"):
        read_histogram_csv(tmp_path / "p.csv")


def test_scene_json_round_trip(tmp_path):
    s = generate_scene(5, GenerationParams(background=True, labels=("humanoid", "C"), x_bounds=(-1, 1)))
    save_scene(s, tmp_path / "s.json")
    assert load_scene(tmp_path / "s.json") == s


def test_empty_config_is_default_preset():
    cfg = parse_config("")
    assert cfg.raw == load_config().raw
    assert cfg.photon_len == 512 and cfg.radar_len == 64
    assert cfg.map_size == 32
    assert cfg.train.split_ratio == 0.9


def test_config_baseline():
    cfg = parse_config("[scene]\nbaseline_m = 0.5\n")
    assert cfg.rig.baseline_m == pytest.approx(0.5)
    cfg = parse_config("[scene]\nbaseline_m = 0.25\n")
    assert cfg.rig.radar_pos[0] == pytest.approx(-0.25)


def test_config_rejections():
    with pytest.raises(ConfigError, match="basline_m"):
        parse_config("[scene]\nbasline_m = 0.5\n")
    with pytest.raises(ConfigError, match="camera"):
        parse_config("[camera]\nfov = 1\n")
    with pytest.raises(ConfigError, match=r"line\s+3"):
        parse_config("[scene]\nfov = 0.5\nthis line is broken\n", "run.ini")
    with pytest.raises(ConfigError, match="fov"):
        parse_config("[scene]\nfov = wide\n")
    with pytest.raises(ConfigError):
        parse_config("[scene]\nx_bounds = 1.0, -1.0\n")


def test_config_file(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text("[photon]\nnoise = false\nn_bins = 256\n[train]\nhidden = 64, 32\n")
    cfg = load_config(path)
    assert not cfg.photon.noise_enabled and cfg.photon_len == 256
    assert cfg.train.hidden == (64, 32)
