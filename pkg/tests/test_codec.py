"""Binary primitives and the state codec envelope."""

import pytest

from prestep.codec import Reader, Writer
from prestep.envs import decode_state, encode_state
from prestep.envs.gridnav import GridNavParams
from prestep.envs.registry import get_env
from prestep.errors import CodecError
from prestep.rng import Rng


def test_writer_reader_roundtrip():
    w = Writer()
    w.u8(7)
    w.u16(65535)
    w.u32(123456)
    w.u64(2**63 + 1)
    w.f64(-1.5)
    w.boolean(True)
    w.string("héllo")
    w.blob(b"\x00\x01\x02")
    r = Reader(w.getvalue())
    assert r.u8() == 7
    assert r.u16() == 65535
    assert r.u32() == 123456
    assert r.u64() == 2**63 + 1
    assert r.f64() == -1.5
    assert r.boolean() is True
    assert r.string() == "héllo"
    assert r.blob() == b"\x00\x01\x02"
    r.expect_end()


def test_truncation_reports_offset():
    w = Writer()
    w.u32(99)
    data = w.getvalue()[:2]
    r = Reader(data)
    with pytest.raises(CodecError) as exc:
        r.u32()
    assert exc.value.offset == 0


def test_tag_mismatch_reports_offset():
    w = Writer()
    w.u8(1)
    w.tag(9)
    r = Reader(w.getvalue())
    r.u8()
    with pytest.raises(CodecError) as exc:
        r.expect_tag(2, "kind")
    assert exc.value.offset == 1


def test_trailing_bytes_rejected():
    r = Reader(b"\x01\x02")
    r.u8()
    with pytest.raises(CodecError):
        r.expect_end()


@pytest.fixture
def gridnav_state():
    env = get_env("gridnav")
    params = GridNavParams(
        width=5, height=4, walls=frozenset({(1, 1)}), goal=(0, 4),
        start_kind="fixed", start_cell=(3, 0),
    )
    state, _ = env.reset(params, Rng(3).split(0))
    return env, params, state


def test_state_roundtrip(gridnav_state):
    _, _, state = gridnav_state
    assert decode_state(encode_state(state)) == state


def test_state_encoding_canonical(gridnav_state):
    # encode . decode . encode == encode
    _, _, state = gridnav_state
    data = encode_state(state)
    assert encode_state(decode_state(data)) == data


def test_rng_path_changes_bytes(gridnav_state):
    env, params, state = gridnav_state
    other, _ = env.reset(params, Rng(3).split(1))
    assert other.world == state.world  # fixed start: same world
    assert encode_state(other) != encode_state(state)


def test_decode_corrupt_state_names_offset(gridnav_state):
    _, _, state = gridnav_state
    data = bytearray(encode_state(state))
    data = data[: len(data) - 3]  # chop the tail
    with pytest.raises(CodecError) as exc:
        decode_state(bytes(data))
    assert exc.value.offset >= 0


def test_decode_unknown_kind_fails():
    w = Writer()
    w.u8(1)
    w.tag(1)
    w.string("no-such-env")
    with pytest.raises(CodecError):
        decode_state(w.getvalue())
