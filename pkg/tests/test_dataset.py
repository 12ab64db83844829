"""Encoding, met tensors, filtering, splitting, and pair sampling."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from firecast import dataset as ds
from firecast.oracle import (
    ArrivalTimeField,
    build_environment,
    sample_scenario,
    simulate_arrival,
)


def make_field(times, cell=62.5, ignition=(1, 1)):
    return ArrivalTimeField(times=np.asarray(times, dtype=np.float64),
                            cell_size_m=cell, ignition=ignition)


# ---------------------------------------------------------------------------
# intensity ramp
# ---------------------------------------------------------------------------


def test_intensity_endpoints_exact():
    assert ds.intensity_of(0.0) == 1.0
    assert ds.intensity_of(720.0) == 30.0 / 255.0


def test_intensity_midpoint():
    assert ds.intensity_of(360.0) == pytest.approx(142.5 / 255.0, rel=1e-12)


def test_intensity_rejects_out_of_range():
    with pytest.raises(ds.DatasetError):
        ds.intensity_of(-1.0)
    with pytest.raises(ds.DatasetError):
        ds.intensity_of(721.0)


@given(st.floats(min_value=0.0, max_value=720.0))
@settings(max_examples=200, deadline=None)
def test_intensity_roundtrip_real_valued(t):
    assert ds.minutes_of(ds.intensity_of(t)) == pytest.approx(t, abs=1e-9)


def test_eight_bit_roundtrip_within_1p6_minutes(tmp_path):
    # half of one 8-bit quantum: 720/225/2 = 1.6 minutes
    times = np.linspace(0.0, 720.0, 1024).reshape(32, 32)
    intensity = ds.intensity_of(times)
    ds.write_pgm(tmp_path / "f.pgm", intensity)
    decoded = ds.minutes_of(ds.read_pgm(tmp_path / "f.pgm"))
    assert np.max(np.abs(decoded - times)) <= 1.6 + 1e-9


# ---------------------------------------------------------------------------
# frame encoding
# ---------------------------------------------------------------------------


def test_frame_interval_membership():
    t = np.full((5, 5), np.inf)
    t[0, 0] = 100.0   # in all three frames
    t[1, 1] = 300.0   # 8 h and 12 h only
    t[2, 2] = 600.0   # 12 h only
    t[3, 3] = 0.0
    frames = ds.encode_arrival_frames(make_field(t, ignition=(3, 3)))
    i100 = ds.intensity_of(100.0)
    assert frames[0][0, 0] == frames[1][0, 0] == frames[2][0, 0] == i100
    assert frames[0][1, 1] == 0.0 and frames[1][1, 1] > 0 and frames[2][1, 1] > 0
    assert frames[0][2, 2] == 0.0 and frames[1][2, 2] == 0.0 and frames[2][2, 2] > 0


def test_all_sentinel_field_gives_zero_frames():
    t = np.full((4, 4), np.inf)
    frames = ds.encode_arrival_frames(make_field(t))
    assert np.all(frames == 0.0)


def test_generated_sequences_nest_and_persist():
    for seed in range(25):
        spec = sample_scenario(seed)
        env = build_environment(spec.terrain_seed, spec.grid_size, spec.cell_size_m)
        field = simulate_arrival(spec, env)
        frames = ds.encode_arrival_frames(field)
        assert ds.check_sequence(frames)


def test_ignition_frame_single_pixel():
    t = np.full((8, 8), np.inf)
    t[3, 4] = 0.0
    s0 = ds.ignition_frame(make_field(t, ignition=(3, 4)))
    assert s0[3, 4] == 1.0
    assert np.count_nonzero(s0) == 1


# ---------------------------------------------------------------------------
# met tensor
# ---------------------------------------------------------------------------


def test_met_tensor_shape_and_order():
    hourly = np.arange(48, dtype=np.float64).reshape(12, 4)
    met = ds.build_met_tensor(hourly)
    assert met.shape == (3, 4, 4)
    # hour 5 lands at step 1, hour index 1
    np.testing.assert_array_equal(met[1, 1], hourly[5])


def test_met_tensor_constant_weather():
    hourly = np.tile([3.0, 90.0, 25.0, 40.0], (12, 1))
    met = ds.build_met_tensor(hourly)
    np.testing.assert_array_equal(met[0], met[1])
    np.testing.assert_array_equal(met[1], met[2])


def test_met_tensor_rejects_bad_shape():
    with pytest.raises(ds.DatasetError):
        ds.build_met_tensor(np.zeros((11, 4)))


def test_condition_vector_wind_encoding():
    stats = ds.MetStats(mean=np.zeros(4), std=np.ones(4))
    met_step = np.tile([2.0, 90.0, 20.0, 50.0], (4, 1))
    v = ds.condition_vector(met_step, 4.0, stats)
    assert v.shape == (ds.COND_DIM,)
    # east wind: sin = 1, cos = 0
    assert v[1] == pytest.approx(1.0)
    assert v[2] == pytest.approx(0.0, abs=1e-12)
    assert v[-1] == 1.0  # dt / 4h


# ---------------------------------------------------------------------------
# boundary filter
# ---------------------------------------------------------------------------


def test_filter_interior_fire_kept():
    t = np.full((9, 9), np.inf)
    t[4, 4] = 0.0
    assert ds.filter_in_bounds(make_field(t, ignition=(4, 4)), margin_cells=2)


def test_filter_edge_fire_dropped():
    t = np.full((9, 9), np.inf)
    t[0, 3] = 12.0
    t[4, 4] = 0.0
    assert not ds.filter_in_bounds(make_field(t, ignition=(4, 4)), margin_cells=1)


def test_filter_retention_fraction_on_batch():
    kept = 0
    total = 60
    for seed in range(total):
        spec = sample_scenario(seed)
        env = build_environment(spec.terrain_seed, spec.grid_size, spec.cell_size_m)
        field = simulate_arrival(spec, env)
        kept += ds.filter_in_bounds(field, margin_cells=3)
    assert 0 < kept < total


# ---------------------------------------------------------------------------
# split
# ---------------------------------------------------------------------------


def test_split_exact_fraction():
    ids = [f"s{i:03d}" for i in range(10)]
    train, test = ds.split_scenarios(ids, 0.8, seed=1)
    assert len(train) == 8 and len(test) == 2


def test_split_deterministic_and_disjoint():
    ids = [f"s{i:03d}" for i in range(37)]
    a = ds.split_scenarios(ids, 0.8, seed=9)
    b = ds.split_scenarios(ids, 0.8, seed=9)
    assert a == b
    assert not (set(a[0]) & set(a[1]))
    assert sorted(a[0] + a[1]) == sorted(ids)


def test_split_empty_rejected():
    with pytest.raises(ds.DatasetError):
        ds.split_scenarios([], 0.8, seed=0)


# ---------------------------------------------------------------------------
# scenario dirs and sampling
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def small_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("scenarios")
    made = 0
    seed = 0
    while made < 8 and seed < 400:
        spec = sample_scenario(seed, grid_size=32)
        env = build_environment(spec.terrain_seed, 32, spec.cell_size_m)
        field = simulate_arrival(spec, env)
        seed += 1
        if not ds.filter_in_bounds(field, 3):
            continue
        ds.write_scenario_dir(root / f"scn_{made:04d}", spec, env, field)
        made += 1
    ds.build_index(root, train_fraction=0.8, seed=3, margin_cells=3)
    return root


def test_scenario_roundtrip(small_root):
    rec = ds.read_scenario_dir(small_root / "scn_0000")
    assert rec.frames.shape == (3, 32, 32)
    assert rec.terrain.shape == (3, 32, 32)
    assert rec.met.shape == (3, 4, 4)
    assert ds.check_sequence(rec.frames)
    assert np.count_nonzero(rec.s0) == 1


def test_index_split_tags(small_root):
    import json
    index = json.loads((small_root / "index.json").read_text())
    splits = [e["split"] for e in index["scenarios"]]
    assert splits.count("train") == 6 and splits.count("test") == 2
    assert index["retained"] == 8


def test_dataset_loading_and_pair_nesting(small_root):
    train = ds.FireDataset.load(small_root, "train")
    rng = np.random.default_rng(0)
    for _ in range(40):
        rec, step = train.sample_pair(rng)
        inp = train.input_frame(rec, step)
        tgt = rec.frames[step]
        assert not np.any((inp > 0) & (tgt == 0))  # support nesting
        if step == 0:
            assert np.count_nonzero(inp) == 1


def test_step_frequencies_uniform(small_root):
    train = ds.FireDataset.load(small_root, "train")
    rng = np.random.default_rng(7)
    counts = np.zeros(3)
    n = 30_000
    for _ in range(n):
        _, step = train.sample_pair(rng)
        counts[step] += 1
    freq = counts / n
    assert np.all(freq >= 0.30) and np.all(freq <= 0.37)


def test_sample_batch_shapes_and_dtype(small_root):
    train = ds.FireDataset.load(small_root, "train")
    fire, terrain, cond, target = train.sample_batch(np.random.default_rng(1), 4)
    assert fire.shape == (4, 1, 32, 32) and fire.dtype == np.float32
    assert terrain.shape == (4, 3, 32, 32)
    assert cond.shape == (4, ds.COND_DIM)
    assert target.shape == (4, 1, 32, 32)


def test_met_stats_fit_on_train_only(small_root):
    import json
    index = json.loads((small_root / "index.json").read_text())
    train_ids = [e["dir"] for e in index["scenarios"] if e["split"] == "train"]
    stats = ds.MetStats.fit([ds.read_met_csv(small_root / sid / "met.csv")
                             for sid in train_ids])
    np.testing.assert_allclose(stats.mean, ds.MetStats.from_json(index["met_stats"]).mean)
