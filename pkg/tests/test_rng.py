import numpy as np
import pytest

from inv2inv.rng import BatchNoise, CounterStream, Purpose, as_seeds, stream_id


def test_stream_id_layout():
    assert stream_id(Purpose.STEP, 2) == (2 << 32) | 2
    assert stream_id(Purpose.INIT) == 1


def test_same_key_same_bytes():
    a = CounterStream(42, 7).raw(64)
    b = CounterStream(42, 7).raw(64)
    np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("other", [(43, 7), (42, 8)])
def test_different_key_different_bytes(other):
    a = CounterStream(42, 7).raw(16)
    b = CounterStream(*other).raw(16)
    assert not np.array_equal(a, b)


def test_draws_continue_the_counter():
    one = CounterStream(9, 1).raw(10)
    s = CounterStream(9, 1)
    two = np.concatenate([s.raw(4), s.raw(6)])
    np.testing.assert_array_equal(one, two)


def test_uniform_recipe():
    raw = CounterStream(5, 3).raw(8)
    u = CounterStream(5, 3).uniform((8,))
    np.testing.assert_array_equal(u, (raw >> np.uint64(11)).astype(np.float64) * 2.0**-53)
    assert np.all((u >= 0) & (u < 1))


def test_normal_box_muller_recipe():
    bits = CounterStream(5, 3).raw(4) >> np.uint64(11)
    u1 = (bits[0::2].astype(np.float64) + 1.0) * 2.0**-53
    u2 = bits[1::2].astype(np.float64) * 2.0**-53
    r = np.sqrt(-2 * np.log(u1))
    expect = np.array([r[0] * np.cos(2 * np.pi * u2[0]), r[0] * np.sin(2 * np.pi * u2[0]),
                       r[1] * np.cos(2 * np.pi * u2[1])])
    np.testing.assert_array_equal(CounterStream(5, 3).normal((3,)), expect)


def test_normal_moments():
    z = CounterStream(1, 80).normal((200_000,))
    assert abs(z.mean()) < 0.01
    assert abs(z.var() - 1.0) < 0.01


def test_integers_range():
    v = CounterStream(2, 2).integers(7, 5000)
    assert v.min() == 0 and v.max() == 6
    assert np.all(np.bincount(v) > 600)


def test_as_seeds():
    assert as_seeds(3) == [3]
    assert as_seeds(np.int64(3)) == [3]
    assert as_seeds([1, 2]) == [1, 2]


def test_batch_noise_is_per_trajectory():
    both = BatchNoise([10, 11], stage=1).normal(Purpose.STEP, (2, 2))
    alone = BatchNoise([11], stage=1).normal(Purpose.STEP, (2, 2))
    np.testing.assert_array_equal(both[1], alone[0])


def test_batch_noise_streams_split_by_stage_and_purpose():
    a = BatchNoise([1], 1).normal(Purpose.STEP, (4,))
    b = BatchNoise([1], 2).normal(Purpose.STEP, (4,))
    c = BatchNoise([1], 1).normal(Purpose.SKETCH, (4,))
    assert not np.array_equal(a, b)
    assert not np.array_equal(a, c)
