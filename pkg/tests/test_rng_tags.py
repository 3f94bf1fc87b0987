import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spdcsim.rng import STREAMS, CounterRNG, to_open_unit
from spdcsim.tags import OrderingError, TimeTagStream


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2 ** 64 - 1), start=st.integers(0, 10 ** 6), count=st.integers(1, 50),
       cut=st.integers(0, 50))
def test_counter_access_is_partition_independent(seed, start, count, cut):
    rng = CounterRNG(seed, "pairs")
    whole = rng.words(start, count)
    cut = min(cut, count)
    parts = np.concatenate([rng.words(start, cut), rng.words(start + cut, count - cut)])
    assert np.array_equal(whole, parts)


def test_streams_are_distinct():
    a = CounterRNG(1, "pairs").words(0, 8)
    b = CounterRNG(1, "detect").words(0, 8)
    c = CounterRNG(2, "pairs").words(0, 8)
    assert not np.array_equal(a, b) and not np.array_equal(a, c)
    assert len(set(STREAMS.values())) == len(STREAMS)
    with pytest.raises(ValueError):
        CounterRNG(0, "nope")


def test_uniforms_open_interval_and_moments():
    u = CounterRNG(3, "pairs").uniforms(0, 200_000)
    assert u.min() > 0.0 and u.max() < 1.0
    assert abs(u.mean() - 0.5) < 0.002
    assert to_open_unit(np.array([0, 2 ** 64 - 1], dtype=np.uint64)).tolist()[0] > 0


def test_split_and_generator_reproducible():
    g1 = CounterRNG(9, "ce_noise").generator().standard_normal(5)
    g2 = CounterRNG(4, "pairs").split("ce_noise")
    assert not np.array_equal(g1, g2.generator().standard_normal(5))
    assert np.array_equal(g1, CounterRNG(9, 7).generator().standard_normal(5))


def _stream():
    return TimeTagStream(np.array([0, 5, 5, 100], np.int64), np.array([1, 2, 1, 2], np.uint8), 1e-12,
                         seed=3)


def test_tag_io_round_trip(tmp_path):
    s = _stream()
    s.write_binary(tmp_path / "t.bin")
    assert (tmp_path / "t.bin").stat().st_size == 9 * len(s)
    assert TimeTagStream.read(tmp_path / "t.bin").same_tags(s)
    s.write_csv(tmp_path / "t.csv")
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == "channel,time_fs"
    assert TimeTagStream.read(tmp_path / "t.csv").same_tags(s)


def test_binary_layout_is_little_endian_u8_i64(tmp_path):
    s = TimeTagStream(np.array([258], np.int64), np.array([2], np.uint8), 1.0)
    s.write_binary(tmp_path / "x.bin")
    assert (tmp_path / "x.bin").read_bytes() == bytes([2, 2, 1, 0, 0, 0, 0, 0, 0])


def test_validation():
    with pytest.raises(OrderingError):
        TimeTagStream(np.array([5, 1]), np.array([1, 2]), 1.0).validate()
    with pytest.raises(ValueError):
        TimeTagStream(np.array([1, 5]), np.array([1, 3]), 1.0).validate()
    with pytest.raises(ValueError):
        TimeTagStream(np.array([1, 5]), np.array([1]), 1.0)


def test_bad_csv_header(tmp_path):
    (tmp_path / "b.csv").write_text("time,channel\n1,1\n")
    with pytest.raises(ValueError):
        TimeTagStream.read_csv(tmp_path / "b.csv")
