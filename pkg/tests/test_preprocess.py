import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from oranfault.preprocess import (
    FrameRangeError,
    Normalizer,
    TooFewRowsError,
    align,
    apply_normalizer,
    fit_normalizer,
    impute,
    invert_normalizer,
    make_windows,
    window_count,
)
from oranfault.sim import SimConfig, TrafficProfile, generate_baseline, iter_frames
from oranfault.rng import derive
from oranfault.telemetry import DatasetTable, TelemetryFrame, build_default_schema

SCHEMA = build_default_schema(1, 1, 1, 1)
RAN = "du0.active_ues"
PLAT = SCHEMA.feature_order[9]


def frames_for(metric, ts_ms, values):
    return [TelemetryFrame(t, "x", metric, v) for t, v in zip(ts_ms, values)]


def test_align_means_ran_subsamples():
    frames = frames_for(RAN, range(0, 1000, 100), range(1, 11))
    frames += frames_for(RAN, range(1000, 2000, 100), [7.25] * 10)
    table = align(frames, SCHEMA, 2)
    assert table.features[0, 0] == 5.5
    assert table.features[1, 0] == 7.25


def test_align_marks_gaps():
    frames = frames_for(PLAT, [0, 2000], [1.0, 3.0])
    table = align(frames, SCHEMA, 3)
    col = SCHEMA.index(PLAT)
    assert table.features[0, col] == 1.0 and np.isnan(table.features[1, col])
    assert np.isnan(table.features[:, 0]).all()


def test_align_rejects_out_of_range():
    with pytest.raises(FrameRangeError, match="3000 ms"):
        align(frames_for(PLAT, [3000], [1.0]), SCHEMA, 3)
    with pytest.raises(FrameRangeError):
        align(frames_for(PLAT, [-1], [1.0]), SCHEMA, 3)
    with pytest.raises(FrameRangeError, match="unknown"):
        align(frames_for("nope", [0], [1.0]), SCHEMA, 3)


def test_align_blocks_equal_frame_stream():
    cfg = SimConfig(duration_s=5, n=1)
    blocks = generate_baseline(cfg, TrafficProfile(), derive(0, "b"))
    a = align(blocks, cfg.schema, 5)
    b = align(list(iter_frames(blocks)), cfg.schema, 5)
    assert np.allclose(a.features, b.features, rtol=1e-12, atol=0)


def column_table(col):
    col = np.asarray(col, dtype=float)
    return DatasetTable(np.arange(len(col)), col[:, None], np.zeros(len(col), dtype=int))


@pytest.mark.parametrize(
    "raw, filled",
    [
        ([1, np.nan, 3], [1, 1, 3]),
        ([np.nan, 2], [2, 2]),
        ([np.nan, np.nan], [0, 0]),
        ([np.nan, 4, np.nan, np.nan, 5], [4, 4, 4, 4, 5]),
    ],
)
def test_impute_examples(raw, filled):
    assert impute(column_table(raw)).features[:, 0].tolist() == filled


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 30), st.integers(1, 5)),
              elements=st.one_of(st.just(np.nan), st.floats(-1e6, 1e6))))
def test_impute_fills_everything_and_keeps_observed(x):
    table = DatasetTable(np.arange(len(x)), x, np.zeros(len(x), dtype=int))
    out = impute(table).features
    assert np.all(np.isfinite(out))
    seen = ~np.isnan(x)
    assert np.array_equal(out[seen], x[seen])


def test_normalizer_examples():
    x = np.array([[0.0, 7.0], [5.0, 7.0], [10.0, 7.0]])
    norm = fit_normalizer(x)
    z = norm.apply(x)
    assert z[:, 0].tolist() == [0.0, 0.5, 1.0]
    assert z[:, 1].tolist() == [0.0, 0.0, 0.0]
    with pytest.raises(ValueError):
        fit_normalizer(x, rows=[])
    with pytest.raises(ValueError):
        Normalizer(("a",), np.array([1.0]), np.array([0.0]))


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(2, 20), st.integers(1, 4)), elements=st.floats(-1e3, 1e3)))
def test_normalizer_round_trip(x):
    norm = fit_normalizer(x)
    back = norm.invert(norm.apply(x))
    live = norm.span > 0
    scale = np.maximum(1.0, np.abs(x)).max()
    assert np.all(np.abs(back - x)[:, live] <= 1e-12 * scale)
    t = DatasetTable(np.arange(len(x)), x, np.zeros(len(x), dtype=int))
    assert np.array_equal(invert_normalizer(norm, apply_normalizer(norm, t)).features,
                          norm.invert(norm.apply(x)))


def test_normalizer_ignores_test_rows():
    rng = derive(0, "n")
    x = rng.normal(size=(50, 4))
    train = np.arange(30)
    a = fit_normalizer(x, rows=train)
    x2 = x.copy()
    x2[30:] = rng.normal(size=(20, 4)) * 1e6
    b = fit_normalizer(x2, rows=train)
    assert np.array_equal(a.mins, b.mins) and np.array_equal(a.maxs, b.maxs)


def test_normalizer_file_round_trip(tmp_path):
    x = derive(1, "n").normal(size=(10, 3)) / 3
    norm = fit_normalizer(x, feature_ids=("a", "b", "c"))
    norm.save(tmp_path / "normalizer.csv")
    back = Normalizer.load(tmp_path / "normalizer.csv")
    assert back.feature_ids == ("a", "b", "c")
    assert np.array_equal(back.mins, norm.mins) and np.array_equal(back.maxs, norm.maxs)
    assert (tmp_path / "normalizer.csv").read_text().startswith("feature_id,min,max\n")


@pytest.mark.parametrize("rows, count", [(66, 1), (100, 35), (65 + 1000, 1000)])
def test_window_counts(rows, count):
    w = make_windows(np.zeros((rows, 2)))
    assert len(w) == count == window_count(rows)
    assert w.inputs().shape == (count, 61, 2)


def test_too_few_rows_states_minimum():
    with pytest.raises(TooFewRowsError, match="66"):
        make_windows(np.zeros((65, 2)))


def test_stride():
    assert len(make_windows(np.zeros((100, 1)), stride=5)) == 7
    assert window_count(100, stride=5) == 7


@settings(max_examples=30, deadline=None)
@given(st.integers(66, 200), st.integers(0, 10_000))
def test_windows_index_consistent(rows, seed):
    rng = derive(seed, "w")
    x = rng.normal(size=(rows, 3))
    labels = rng.integers(0, 4, rows)
    w = make_windows(DatasetTable(np.arange(rows), x, labels))
    assert len(w) == rows - 65
    i = int(rng.integers(len(w)))
    t = i + 60
    assert np.array_equal(w.inputs([i])[0], x[t - 60 : t + 1])
    assert np.array_equal(w.window(i), x[t - 60 : t + 1])
    assert np.array_equal(w.targets[i], x[t + 5])
    assert np.array_equal(w.target_labels, labels[65:])
