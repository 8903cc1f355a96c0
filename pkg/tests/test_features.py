import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evafuse.featureio import (
    BadMagicError,
    FeatureFileError,
    TimelineError,
    TruncatedFileError,
    VersionError,
    decode_features,
    encode_features,
    read_features,
    write_features,
)
from evafuse.features import (
    BandedFeatureMap,
    PlantedEvent,
    StrideConfig,
    TemporalSequence,
    TimelineSpec,
    random_signature,
    synth_ced_features,
    synth_whisper_features,
)


def _event(band, dim=8, t=80.0, amp=5.0, seed=0):
    sig = random_signature(np.random.default_rng(seed), dim)
    return PlantedEvent(band, t, 16.0, amp, sig)


def test_ced_short_clip_shape_and_coverage():
    layers, tl = synth_ced_features(0, 1.6, 8)
    assert set(layers) == {4, 8, 12}
    for m in layers.values():
        assert m.data.shape == (10, 4, 8)
    np.testing.assert_array_equal(tl.coverage, np.ones(10))
    np.testing.assert_array_equal(tl.centers, 7.5 + 16 * np.arange(10))


def test_ced_generation_is_deterministic():
    a, _ = synth_ced_features(5, 2.4, 6, [_event(1, 6)])
    b, _ = synth_ced_features(5, 2.4, 6, [_event(1, 6)])
    for lid in a:
        assert a[lid].data.tobytes() == b[lid].data.tobytes()


def test_layers_differ():
    layers, _ = synth_ced_features(1, 1.6, 8)
    assert not np.array_equal(layers[4].data, layers[12].data)


def test_planted_event_confined_to_its_band():
    base, tl = synth_ced_features(3, 3.2, 8)
    ev = _event(2, 8, t=160.0)
    with_ev, _ = synth_ced_features(3, 3.2, 8, [ev])
    t = int(np.argmin(np.abs(tl.centers - ev.center_time)))
    for lid in base:
        b, e = base[lid].data, with_ev[lid].data
        assert np.sum(e[t, 2] ** 2) > np.sum(b[t, 2] ** 2)
        for band in (0, 1, 3):
            np.testing.assert_allclose(e[:, band], b[:, band], atol=1e-12, rtol=0)


def test_ced_rejects_short_or_bad_input():
    with pytest.raises(ValueError):
        synth_ced_features(0, 0.1, 8)
    with pytest.raises(ValueError):
        synth_ced_features(0, 0.0, 8)
    with pytest.raises(ValueError):
        synth_ced_features(0, 1.6, 4, [_event(0, 8)])


def test_whisper_two_seconds():
    e_w, e_tok = synth_whisper_features(0, 2.0, 8, 12)
    assert e_w.T == 25 and e_tok.T == 25 and e_tok.D == 12
    np.testing.assert_array_equal(e_w.timeline.centers, 4 + 8 * np.arange(25))
    assert e_w.timeline.centers[-1] == 196


def test_whisper_vs_ced_ratio_at_1_6_s():
    e_w, _ = synth_whisper_features(0, 1.6, 4)
    layers, _ = synth_ced_features(0, 1.6, 4)
    assert e_w.T == 20 and layers[12].T == 10


def test_whisper_deterministic_and_tokens_independent():
    a = synth_whisper_features(9, 1.2, 6)
    b = synth_whisper_features(9, 1.2, 6)
    assert a[0].data.tobytes() == b[0].data.tobytes()
    assert a[1].data.tobytes() == b[1].data.tobytes()
    assert not np.array_equal(a[0].data, a[1].data)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.16, 120.0))
def test_stride_ratio_and_center_spacing(duration):
    e_w, _ = synth_whisper_features(0, duration, 1)
    layers, _ = synth_ced_features(0, duration, 1)
    assert e_w.T in (2 * layers[12].T, 2 * layers[12].T + 1)
    assert np.all(np.diff(e_w.timeline.centers) == 8)


def test_stride_config_invariants():
    with pytest.raises(ValueError):
        StrideConfig(ced_stride_ms=200)
    with pytest.raises(ValueError):
        StrideConfig(step_mel=4)


def test_event_validation():
    with pytest.raises(ValueError):
        PlantedEvent(4, 0.0, 1.0, 1.0, np.array([1.0]))
    with pytest.raises(ValueError):
        PlantedEvent(0, 0.0, 1.0, -1.0, np.array([1.0]))
    with pytest.raises(ValueError):
        PlantedEvent(0, 0.0, 1.0, 1.0, np.array([1.0, 1.0]))


def test_timeline_validation():
    with pytest.raises(ValueError):
        TimelineSpec([0.0, 2.0, 1.0], [1, 1, 1])
    with pytest.raises(ValueError):
        TimelineSpec([0.0, 1.0], [1.0, 1.5])
    TimelineSpec([0.0, 0.0, 1.0], [1, 1, 1])  # weakly monotone is fine


# file format


def test_round_trip_banded(tmp_path):
    layers, _ = synth_ced_features(2, 1.6, 8, [_event(3)])
    path = tmp_path / "l12.evaf"
    write_features(path, layers[12])
    back = read_features(path)
    assert isinstance(back, BandedFeatureMap) and back.layer_id == 12
    assert back.data.tobytes() == layers[12].data.tobytes()
    np.testing.assert_array_equal(back.timeline.centers, layers[12].timeline.centers)
    np.testing.assert_array_equal(back.timeline.coverage, layers[12].timeline.coverage)


def test_round_trip_temporal_without_timeline(tmp_path):
    x = np.random.default_rng(0).normal(size=(5, 3)).astype(np.float32)
    path = tmp_path / "t.evaf"
    write_features(path, TemporalSequence(x))
    back = read_features(path)
    assert back.timeline is None
    np.testing.assert_array_equal(back.data, x.astype(np.float64))


@settings(max_examples=40)
@given(st.integers(0, 12), st.integers(1, 4), st.integers(1, 6), st.integers(0, 2**31))
def test_round_trip_is_bit_exact_in_f32(T, F, D, seed):
    rng = np.random.default_rng(seed)
    data = rng.normal(size=(T, F, D)) * 1e3
    tl = TimelineSpec(np.cumsum(rng.random(T)), rng.random(T))
    m = BandedFeatureMap(data, 4, tl)
    back = decode_features(encode_features(m))
    assert back.data.astype(np.float32).tobytes() == data.astype(np.float32).tobytes()
    assert back.timeline.centers.tobytes() == tl.centers.tobytes()
    # a second round trip is the identity
    assert encode_features(back) == encode_features(m)


def test_header_layout():
    seq = TemporalSequence(np.ones((2, 3)), TimelineSpec.uniform([4.0, 12.0]))
    buf = encode_features(seq)
    assert buf[:4] == b"EVAF"
    assert struct.unpack_from("<IIIII", buf, 4) == (1, 1, 2, 1, 3)
    assert buf[24:26] == bytes([0, 1])
    assert len(buf) == 26 + 2 * 8 + 2 * 4 + 6 * 4


def test_bad_magic():
    buf = b"XXXX" + encode_features(TemporalSequence(np.ones((1, 1))))[4:]
    with pytest.raises(BadMagicError):
        decode_features(buf)


def test_version_mismatch():
    buf = bytearray(encode_features(TemporalSequence(np.ones((1, 1)))))
    buf[4:8] = struct.pack("<I", 2)
    with pytest.raises(VersionError):
        decode_features(bytes(buf))


def test_truncated_rows():
    buf = encode_features(TemporalSequence(np.ones((5, 2))))
    with pytest.raises(TruncatedFileError):
        decode_features(buf[: -2 * 4])  # header says T=5, only 4 rows present
    with pytest.raises(TruncatedFileError):
        decode_features(buf[:10])


def test_non_monotone_timeline_on_read():
    seq = TemporalSequence(np.ones((3, 1)), TimelineSpec.uniform([0.0, 1.0, 2.0]))
    buf = bytearray(encode_features(seq))
    struct.pack_into("<d", buf, 26 + 8, 5.0)  # centers become [0, 5, 2]
    with pytest.raises(TimelineError):
        decode_features(bytes(buf))


def test_errors_are_distinct():
    kinds = {BadMagicError, VersionError, TruncatedFileError, TimelineError}
    assert len(kinds) == 4
    assert all(issubclass(k, FeatureFileError) for k in kinds)
