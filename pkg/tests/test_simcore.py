import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from tschmob.simcore import RngStream, SimClock, seconds_to_slots, uniform_choice


def test_four_hours_is_1_44_million_slots():
    assert SimClock().total_slots == 1_440_000


def test_advance_is_successor():
    c = SimClock()
    assert c.advance_to_next_slot() == 1
    assert c.time_of(1) == pytest.approx(0.010)


def test_last_slot_ends_the_run():
    c = SimClock(asn=1_439_998)
    assert not c.finished
    assert c.advance_to_next_slot() == 1_439_999
    assert c.finished
    with pytest.raises(RuntimeError):
        c.advance_to_next_slot()


def test_jump_cannot_go_backwards():
    c = SimClock(asn=10)
    with pytest.raises(ValueError):
        c.jump_to(10)
    assert c.jump_to(25) == 25


def test_seconds_to_slots():
    assert seconds_to_slots(6.0) == 600
    assert seconds_to_slots(36.0) == 3600


def test_uniform_choice_single_outcome():
    rng = RngStream(7, ("x",))
    assert all(uniform_choice(rng, 1) == 0 for _ in range(100))


def test_uniform_choice_rejects_zero():
    with pytest.raises(ValueError):
        uniform_choice(RngStream(0, "a"), 0)


def test_uniform_choice_frequencies_within_3_sigma():
    rng = RngStream(123, ("freq",))
    n = 1_000_000
    counts = [0] * 4
    for _ in range(n):
        counts[rng.uniform_choice(4)] += 1
    sigma = math.sqrt(n * 0.25 * 0.75)
    for c in counts:
        assert abs(c - n / 4) < 3 * sigma


@given(st.integers(0, 2**63), st.integers(1, 1000))
def test_same_seed_and_stream_same_sequence(seed, n):
    a, b = RngStream(seed, ("mac", 3)), RngStream(seed, ("mac", 3))
    assert [a.uniform_choice(n) for _ in range(20)] == [b.uniform_choice(n) for _ in range(20)]


def test_streams_do_not_depend_on_other_streams():
    # drawing from another stream must not perturb this one
    a = RngStream(5, ("mac", 1))
    ref = [a.random() for _ in range(10)]
    other = RngStream(5, ("mac", 2))
    [other.random() for _ in range(50)]
    b = RngStream(5, ("mac", 1))
    assert [b.random() for _ in range(10)] == ref
    assert [RngStream(5, ("mac", 2)).random() for _ in range(10)] != ref
