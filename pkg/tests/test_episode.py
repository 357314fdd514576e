import struct

import numpy as np
import pytest

from teleosim.episode import (
    EpisodeError,
    MODE_DIGEST,
    MODE_INLINE,
    Recorder,
    parse_episode,
    record_stride,
    serialize_episode,
    tracking_digest,
)
from teleosim.wire import TRACKING_PAYLOAD_SIZE


def make_recorder(n=2, m=0, g=0, mode=MODE_DIGEST, **kw):
    defaults = dict(user_id="u", scene_id="s", model_hash="abc123",
                    n=n, m=m, gripper_count=g, dt=0.005, mode=mode,
                    started_us=1)
    defaults.update(kw)
    return Recorder(**defaults)


def append_tick(rec, tick, payload=None, n=2, m=0, g=0):
    rec.append(tick, tick * 0.005, np.zeros(n), np.zeros(n), np.zeros(g),
               payload, 0, np.zeros((m, 7)))


def test_planar2_digest_record_is_41_bytes():
    # tick(4) + sim_time(8) + q(8) + v(8) + apertures(0) + flag(4)
    # + digest(8) + poses(0) + status(1)
    assert record_stride(2, 0, 0, MODE_DIGEST) == 41
    rec = make_recorder()
    append_tick(rec, 1)
    data = rec.finalize(ended_us=2)
    log = parse_episode(data)
    assert len(data) == 8 + len(data) - 41 - 8 + 41  # tautology guard
    meta_len = struct.unpack_from("<I", data, 4)[0]
    assert len(data) == 8 + meta_len + 41
    assert log.metadata["record_stride"] == "41"


def test_inline_record_stride():
    assert record_stride(2, 0, 0, MODE_INLINE) == 33 + TRACKING_PAYLOAD_SIZE


def test_dualarm_scene_stride():
    # n=16, m=12, g=2 digest mode
    assert record_stride(16, 12, 2, MODE_DIGEST) == \
        4 + 8 + 64 + 64 + 8 + 4 + 8 + 336 + 1


def test_round_trip_is_byte_identical():
    rng = np.random.default_rng(3)
    for mode in (MODE_DIGEST, MODE_INLINE):
        rec = make_recorder(n=3, m=2, g=1, mode=mode)
        for tick in range(1, 20):
            payload = None
            if tick % 3 == 0:
                payload = rng.bytes(TRACKING_PAYLOAD_SIZE)
            rec.append(tick, tick * 0.005, rng.normal(size=3),
                       rng.normal(size=3), rng.uniform(size=1),
                       payload, tick % 4, rng.normal(size=(2, 7)))
        data = rec.finalize(ended_us=9)
        log = parse_episode(data)
        assert serialize_episode(log) == data
        assert len(log.records) == 19
        assert log.records[2].tracking_flag == 1


def test_digest_mode_stores_payload_digest():
    rec = make_recorder(mode=MODE_DIGEST)
    payload = (bytes(range(256)) * 3)[:TRACKING_PAYLOAD_SIZE]
    append_tick(rec, 1, payload=payload)
    log = parse_episode(rec.finalize())
    assert log.records[0].tracking_flag == 1
    assert log.records[0].tracking == tracking_digest(payload)


def test_zero_record_episode_discarded():
    rec = make_recorder()
    assert rec.finalize() is None


def test_tick_gap_rejected_on_append():
    rec = make_recorder()
    append_tick(rec, 1)
    append_tick(rec, 2)
    with pytest.raises(EpisodeError) as exc:
        append_tick(rec, 4)
    assert exc.value.code == "tick-gap"


def test_tick_gap_rejected_on_parse():
    rec = make_recorder()
    append_tick(rec, 1)
    append_tick(rec, 2)
    data = bytearray(rec.finalize())
    # Patch the second record's tick from 2 to 4 to forge a gap.
    meta_len = struct.unpack_from("<I", data, 4)[0]
    off = 8 + meta_len + 41
    assert struct.unpack_from("<I", data, off)[0] == 2
    struct.pack_into("<I", data, off, 4)
    with pytest.raises(EpisodeError) as exc:
        parse_episode(bytes(data))
    assert exc.value.code == "tick-gap"


def test_truncated_file_names_offset():
    rec = make_recorder()
    append_tick(rec, 1)
    data = rec.finalize()
    with pytest.raises(EpisodeError) as exc:
        parse_episode(data[:-5])
    assert exc.value.code == "truncated"
    assert "byte" in str(exc.value)


def test_bad_magic_rejected():
    with pytest.raises(EpisodeError) as exc:
        parse_episode(b"NOPE" + bytes(100))
    assert exc.value.code == "bad-magic"


def test_metadata_fields_present():
    rec = make_recorder(initial_state_hex="00000000", seed=42,
                        object_ids=["a", "b"])
    append_tick(rec, 1)
    log = parse_episode(rec.finalize())
    meta = log.metadata
    assert meta["user_id"] == "u"
    assert meta["scene_id"] == "s"
    assert meta["model_hash"] == "abc123"
    assert meta["seed"] == "42"
    assert meta["object_ids"] == "a,b"
    assert meta["tick_count"] == "1"
    assert meta["format_version"] == "1"
