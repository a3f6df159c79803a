import numpy as np
import pytest

from puzzlekit.rng import MASK64, Rng, derive_seed, splitmix_next

# First four outputs of the splitmix64 stream seeded with 0, checked against
# an independent reimplementation of the reference constants.
SEED0_STREAM = [
    0xE220A8397B1DCDAF,
    0x6E789E6AA1B965F4,
    0x06C45D188009454F,
    0xF88BB8A8724C81EC,
]


def test_seed0_reference_stream():
    r = Rng(0)
    assert [r.next_u64() for _ in range(4)] == SEED0_STREAM


def test_splitmix_next_matches_rng():
    state = 12345
    r = Rng(12345)
    for _ in range(10):
        state, out = splitmix_next(state)
        assert out == r.next_u64()


def test_derive_seed_is_stream_jump():
    # derive_seed(m, i) must equal the (i+1)-th raw output of the stream
    # seeded with m, computed without stepping through the stream.
    master = 0xDEADBEEF
    r = Rng(master)
    outputs = [r.next_u64() for _ in range(50)]
    for i in (0, 1, 7, 49):
        assert derive_seed(master, i) == outputs[i]


def test_derive_seed_distinct_over_many_indices():
    seen = {derive_seed(99, i) for i in range(100_000)}
    assert len(seen) == 100_000


def test_wraps_at_64_bits():
    r = Rng((1 << 64) - 1)
    v = r.next_u64()
    assert 0 <= v <= MASK64
    # seed is masked, so an overflowing seed aliases its low 64 bits
    assert Rng(1 << 64).next_u64() == Rng(0).next_u64()


def test_next_float_range_and_value():
    r = Rng(0)
    expected = SEED0_STREAM[0] >> 11
    assert Rng(0).next_float() == expected * 2.0**-53
    for _ in range(1000):
        f = r.next_float()
        assert 0.0 <= f < 1.0


def test_next_below_bounds_and_reach():
    r = Rng(7)
    seen = set()
    for _ in range(2000):
        v = r.next_below(5)
        assert 0 <= v < 5
        seen.add(v)
    assert seen == {0, 1, 2, 3, 4}


def test_next_below_rejects_nonpositive():
    with pytest.raises(ValueError):
        Rng(0).next_below(0)


def test_next_int_inclusive_bounds():
    r = Rng(3)
    seen = {r.next_int(2, 4) for _ in range(500)}
    assert seen == {2, 3, 4}
    assert Rng(5).next_int(9, 9) == 9


def test_fill_u64_matches_scalar_loop():
    scalar = Rng(42)
    expected = [scalar.next_u64() for _ in range(257)]
    vec = Rng(42).fill_u64(257)
    assert vec.dtype == np.uint64
    assert [int(v) for v in vec] == expected
    # the vector call must leave the generator in the same state as the loop
    assert Rng(42).fill_u64(257) is not None
    r1, r2 = Rng(42), Rng(42)
    r1.fill_u64(257)
    for _ in range(257):
        r2.next_u64()
    assert r1.next_u64() == r2.next_u64()


def test_fill_floats_matches_scalar_loop():
    scalar = Rng(9)
    expected = np.array([scalar.next_float() for _ in range(12)])
    got = Rng(9).fill_floats((3, 4))
    assert got.shape == (3, 4)
    np.testing.assert_array_equal(got.ravel(), expected)


def test_fill_uniform_range():
    arr = Rng(1).fill_uniform((1000,), -2.5, 1.5)
    assert arr.min() >= -2.5
    assert arr.max() < 1.5


def test_shuffle_is_permutation_and_deterministic():
    items = list(range(30))
    a, b = list(items), list(items)
    Rng(11).shuffle(a)
    Rng(11).shuffle(b)
    assert a == b
    assert sorted(a) == items
    c = list(items)
    Rng(12).shuffle(c)
    assert c != a  # different seed, different order (overwhelmingly likely)
