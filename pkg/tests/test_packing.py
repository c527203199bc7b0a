import pytest
from hypothesis import given
from hypothesis import strategies as st

from paysplit import packing, ring

lanes = st.lists(
    st.integers(min_value=0, max_value=packing.SLOT_MASK),
    min_size=packing.SLOTS,
    max_size=packing.SLOTS,
)


@given(lanes)
def test_pack_unpack_round_trip(vals):
    assert list(packing.unpack(packing.pack(vals))) == vals


@given(lanes, lanes)
def test_add_slotwise_is_lanewise_mod_add(a_vals, b_vals):
    a, b = packing.pack(a_vals), packing.pack(b_vals)
    got = packing.unpack(packing.add_slotwise(a, b))
    for lane in range(packing.SLOTS):
        assert got[lane] == (a_vals[lane] + b_vals[lane]) % packing.SLOT_MOD


def test_pack_rejects_overflow():
    vals = [0] * packing.SLOTS
    vals[2] = packing.SLOT_MOD
    with pytest.raises(packing.SlotOverflowError):
        packing.pack(vals)


@given(
    st.lists(
        st.integers(
            min_value=-(packing.SIGNED_LANE_BOUND - 1),
            max_value=packing.SIGNED_LANE_BOUND - 1,
        ),
        min_size=packing.SLOTS,
        max_size=packing.SLOTS,
    )
)
def test_unpack_signed_reads_negative_lanes(vals):
    # aggregates are built with ring arithmetic, so borrows cross lanes
    word = sum(v << (packing.SLOT_BITS * k) for k, v in enumerate(vals)) % ring.MOD
    assert list(packing.unpack_signed(word)) == vals


def test_unpack_signed_rejects_out_of_range_lane():
    word = (packing.SIGNED_LANE_BOUND + 3) % ring.MOD
    decoded = packing.unpack_signed(word)
    assert decoded[0] != packing.SIGNED_LANE_BOUND + 3  # ambiguous on purpose
    with pytest.raises(packing.SlotOverflowError):
        packing.unpack_signed(1 << 126)


def test_six_lanes_fill_126_of_128_bits():
    assert packing.SLOTS * packing.SLOT_BITS == 126
    top = packing.pack([packing.SLOT_MASK] * packing.SLOTS)
    assert top < ring.MOD
