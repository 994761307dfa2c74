import numpy as np
import pytest

from voxscope.errors import CodeRangeError, ReservedBitError
from voxscope.volume import RESERVED_BIT, code_l1, code_l2, decode_code, encode_code

from oracles import pack_code


def test_background_is_zero():
    assert encode_code(0, 0, 0) == 0
    assert decode_code(0) == (0, 0, 0)


@pytest.mark.parametrize(
    "l1,l2,l3,raw",
    [
        (3, 5, 12, 6796),  # pack_code(3, 5, 12)
        (13, 15, 127, 28671),  # pack_code(13, 15, 127)
        (1, 0, 0, 2048),
        (0, 1, 0, 128),
        (0, 0, 1, 1),
    ],
)
def test_encode_matches_bit_layout(l1, l2, l3, raw):
    assert pack_code(l1, l2, l3) == raw
    assert encode_code(l1, l2, l3) == raw
    assert raw & RESERVED_BIT == 0


def test_decode_examples():
    assert decode_code(6796) == (3, 5, 12)
    assert decode_code(28671) == (13, 15, 127)


def test_reserved_bit_rejected():
    with pytest.raises(ReservedBitError):
        decode_code(32768)
    with pytest.raises(ReservedBitError):
        decode_code(0xFFFF)


@pytest.mark.parametrize(
    "l1,l2,l3,level",
    [(-1, 0, 0, "l1"), (16, 0, 0, "l1"), (0, -1, 0, "l2"), (0, 16, 0, "l2"),
     (0, 0, -1, "l3"), (0, 0, 128, "l3")],
)
def test_out_of_range_component_names_level(l1, l2, l3, level):
    with pytest.raises(CodeRangeError, match=level):
        encode_code(l1, l2, l3)


def test_exhaustive_round_trip():
    for l1 in range(16):
        for l2 in range(16):
            for l3 in range(128):
                raw = encode_code(l1, l2, l3)
                assert raw == pack_code(l1, l2, l3)
                assert raw & RESERVED_BIT == 0
                assert decode_code(raw) == (l1, l2, l3)


def test_vectorized_component_extraction():
    codes = np.array([pack_code(3, 5, 12), pack_code(13, 15, 127), 0], dtype=np.uint16)
    assert code_l1(codes).tolist() == [3, 13, 0]
    assert code_l2(codes).tolist() == [5, 15, 0]
