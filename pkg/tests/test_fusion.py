import numpy as np
import pytest
from hypothesis import given, strategies as st

from fusiontof.fusion import MODES, FusedVector, apply_mode, fuse, normalize
from fusiontof.io import load_config
from fusiontof.photon import TemporalHistogram
from fusiontof.pipeline import simulate
from fusiontof.radar import RangeProfile
from fusiontof.scene import GenerationParams, generate_scene, mirror_scene


def test_normalize_basic():
    assert np.array_equal(normalize([2, 4, 8]), [0.25, 0.5, 1.0])
    z = np.zeros(5)
    out = normalize(z)
    assert np.array_equal(out, z) and out is not z


@pytest.mark.parametrize("bad", [[1.0, -0.1], [1.0, np.nan], [np.inf, 1.0]])
def test_normalize_rejects(bad):
    with pytest.raises(ValueError):
        normalize(bad)


@given(st.lists(st.floats(0, 1e6), min_size=1, max_size=50))
def test_normalize_preserves_argmax_and_range(vals):
    out = normalize(vals)
    assert np.all((out >= 0) & (out <= 1))
    if max(vals) > 0:
        assert np.argmax(out) == np.argmax(vals)
        assert out.max() == 1.0


def _inputs():
    h = TemporalHistogram(0.0, 1e-10, np.arange(512, dtype=float))
    p = RangeProfile(7 / 64, np.linspace(0, 3, 64), 7.0)
    return h, p


def test_fuse_modes():
    h, p = _inputs()
    f = fuse(h, p)
    assert f.values.size == 576 and f.photon_len == 512 and f.radar_len == 64
    assert f.photon.max() == 1.0 and f.radar.max() == 1.0
    po = fuse(h, p, "photon_only")
    assert not np.any(po.values[512:]) and np.array_equal(po.photon, f.photon)
    ro = fuse(h, p, "radar_only")
    assert not np.any(ro.values[:512]) and np.array_equal(ro.radar, f.radar)
    with pytest.raises(ValueError):
        fuse(h, p, "lidar")


def test_segments_are_independent():
    h, p = _inputs()
    p2 = RangeProfile(p.range_bin_m, p.magnitudes[::-1].copy(), p.max_range)
    h2 = TemporalHistogram(0.0, 1e-10, h.counts[::-1].copy())
    assert np.array_equal(fuse(h, p).photon, fuse(h, p2).photon)
    assert np.array_equal(fuse(h, p).radar, fuse(h2, p).radar)
    assert np.array_equal(fuse(h, p).photon, fuse(h, p2, "photon_only").photon)


def test_apply_mode_on_batches():
    x = np.ones((3, 10))
    assert apply_mode(x, 6, "photon_only")[:, 6:].sum() == 0
    assert apply_mode(x, 6, "radar_only")[:, :6].sum() == 0
    assert np.array_equal(apply_mode(x, 6, "fusion"), x)
    assert x.sum() == 30
    assert set(MODES) == {"fusion", "photon_only", "radar_only"}


def test_fused_vector_validation():
    with pytest.raises(ValueError):
        FusedVector(0, 4, np.zeros(4))
    with pytest.raises(ValueError):
        FusedVector(3, 4, np.zeros(6))
    assert FusedVector(3, 0, np.zeros(3)).radar.size == 0


def test_mirror_pair_fused_vectors():
    cfg = load_config().with_values(radar={"coherent": False})
    s = generate_scene(12, GenerationParams(labels=("C",), x_bounds=(0.2, 1.0)))
    a = simulate(s, cfg, noise=False).fused
    b = simulate(mirror_scene(s), cfg, noise=False).fused
    assert np.array_equal(a.photon, b.photon)
    assert np.max(np.abs(a.radar - b.radar)) > 1e-3
