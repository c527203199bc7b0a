import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aes_reference import aes128_encrypt
from paysplit import ring
from paysplit.masks import (
    BLOCK_BYTES,
    INDEX_LIMIT,
    ROUND_LIMIT,
    GroupSecret,
    MaskDomain,
    encode_input,
    mask_value,
    prf_block_count,
    tag_value,
    unmask_value,
)

KEY = bytes(range(16))


def test_reference_aes_matches_fips_197():
    key = bytes.fromhex("000102030405060708090a0b0c0d0e0f")
    pt = bytes.fromhex("00112233445566778899aabbccddeeff")
    assert aes128_encrypt(key, pt).hex() == "69c4e0d86a7b0430d8cdb78070b4c55a"
    key = bytes.fromhex("2b7e151628aed2a6abf7158809cf4f3c")
    pt = bytes.fromhex("3243f6a8885a308d313198a2e0370734")
    assert aes128_encrypt(key, pt).hex() == "3925841d02dc09fbdc118597196a0b32"


@settings(max_examples=30)
@given(
    st.sampled_from(list(MaskDomain)),
    st.integers(min_value=0, max_value=ROUND_LIMIT - 1),
    st.integers(min_value=0, max_value=INDEX_LIMIT - 1),
    st.integers(min_value=0, max_value=INDEX_LIMIT - 1),
)
def test_masks_are_aes_of_the_input_block(domain, m, i, j):
    # two independent AES implementations must agree on every mask
    secret = GroupSecret(KEY)
    expected = int.from_bytes(aes128_encrypt(KEY, encode_input(domain, m, i, j)), "big")
    assert secret.derive_mask(domain, m, i, j) == expected


def test_input_block_layout():
    blob = encode_input(MaskDomain.ROUND, 0x0102030405060708, 0x0A0B0C, 0x0D0E0F)
    assert len(blob) == BLOCK_BYTES
    assert blob[0] == MaskDomain.ROUND
    assert blob[1:9] == bytes.fromhex("0102030405060708")
    assert blob[9:12] == bytes.fromhex("0a0b0c")
    assert blob[12:15] == bytes.fromhex("0d0e0f")
    assert blob[15] == 0


def test_input_block_range_checks():
    with pytest.raises(ValueError):
        encode_input(MaskDomain.ROUND, ROUND_LIMIT, 1, 1)
    with pytest.raises(ValueError):
        encode_input(MaskDomain.ROUND, 0, INDEX_LIMIT, 1)
    with pytest.raises(ValueError):
        encode_input(MaskDomain.ROUND, 0, 1, -1)


def test_group_constants_come_from_reserved_inputs():
    secret = GroupSecret(KEY)
    assert secret.s == int.from_bytes(
        aes128_encrypt(KEY, encode_input(MaskDomain.S, 0, 0, 0)), "big"
    )
    assert secret.u == int.from_bytes(
        aes128_encrypt(KEY, encode_input(MaskDomain.UNIT, 0, 0, 0)), "big"
    )


def test_domains_separate_the_mask_streams():
    secret = GroupSecret(KEY)
    seen = {
        secret.derive_mask(d, 7, 1, 2)
        for d in (MaskDomain.ROUND, MaskDomain.SETTLE, MaskDomain.ANNOUNCE)
    }
    assert len(seen) == 3


def test_round_mask_sheet_sums():
    secret = GroupSecret(KEY)
    sheet = secret.round_mask_sheet(5, submitters=[1, 2, 4], columns=[1, 2, 4, 7])
    for i in sheet.submitters:
        assert sheet.row_sums[i] == sum(sheet.rows[i].values()) & ring.MASK
    for j in sheet.columns:
        assert sheet.col_sums[j] == sum(sheet.rows[i][j] for i in sheet.submitters) & ring.MASK
    assert sheet.total == sum(sheet.col_sums.values()) & ring.MASK
    assert sheet.diag(2) == sheet.rows[2][2]


def test_row_helper_matches_sheet():
    secret = GroupSecret(KEY)
    cols = [1, 2, 3]
    sheet = secret.round_mask_sheet(9, submitters=[2], columns=cols)
    assert secret.round_mask_row(9, 2, cols) == sheet.rows[2]


words = st.integers(min_value=0, max_value=ring.MASK)


@given(words, words)
def test_mask_unmask_inverse(v, r):
    assert unmask_value(mask_value(v, r), r) == v


@given(words, words, words)
def test_tagging_is_affine(v, s, r):
    assert tag_value(v, s, r) == ring.add(ring.mul(s, v), r)


def test_prf_counter_counts_blocks():
    secret = GroupSecret(KEY)  # key schedule itself derives s and u
    before = prf_block_count()
    secret.round_mask_sheet(3, submitters=[1, 2], columns=[1, 2, 3])
    assert prf_block_count() - before == 6
    secret.derive_mask(MaskDomain.SETTLE, 3, 1, 0)
    assert prf_block_count() - before == 7
