import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from saccadeconv.events import (
    MAX_TIMESTAMP,
    OFF,
    ON,
    AddressRangeError,
    Annotation,
    AnnotationParseError,
    Event,
    EventStream,
    MonotonicityError,
    TruncatedRecordError,
    crop_spatial,
    decode_event,
    encode_event,
    load_stream,
    make_events,
    read_annotation,
    read_meta_entries,
    read_stream,
    save_stream,
    time_slice,
    write_annotation,
    write_meta,
    write_meta_entries,
    write_stream,
)

events_st = st.builds(
    Event,
    st.integers(0, 255),
    st.integers(0, 255),
    st.sampled_from([OFF, ON]),
    st.integers(0, MAX_TIMESTAMP),
)


def random_stream(n, seed=0, w=256, h=256):
    rng = np.random.default_rng(seed)
    t = np.sort(rng.integers(0, MAX_TIMESTAMP + 1, n))
    ev = make_events(rng.integers(0, w, n), rng.integers(0, h, n), rng.integers(0, 2, n), t)
    return EventStream(ev, w, h)


class TestEncode:
    def test_all_zero(self):
        assert encode_event(Event(0, 0, OFF, 0)) == bytes(5)

    def test_all_one(self):
        assert encode_event(Event(255, 255, ON, 2**23 - 1)) == b"\xff" * 5

    def test_layout(self):
        assert encode_event(Event(1, 2, ON, 3)) == bytes([0x01, 0x02, 0x80, 0x00, 0x03])

    def test_timestamp_bytes(self):
        assert encode_event(Event(0, 0, OFF, 0x123456)) == bytes([0, 0, 0x12, 0x34, 0x56])

    @pytest.mark.parametrize("bad", [Event(256, 0, ON, 0), Event(0, 0, 2, 0),
                                     Event(0, 0, ON, 2**23), Event(-1, 0, ON, 0)])
    def test_rejects_invalid(self, bad):
        with pytest.raises(ValueError):
            encode_event(bad)


class TestDecode:
    def test_inverse_example(self):
        assert decode_event(bytes([0x01, 0x02, 0x80, 0x00, 0x03])) == (1, 2, ON, 3)

    def test_max_timestamp_off(self):
        assert decode_event(bytes([0, 0, 0x7F, 0xFF, 0xFF])) == (0, 0, OFF, 2**23 - 1)

    def test_short_block(self):
        with pytest.raises(TruncatedRecordError):
            decode_event(bytes(4))

    @given(events_st)
    def test_round_trip(self, e):
        assert decode_event(encode_event(e)) == e

    def test_bit_boundaries(self):
        values = [0, 1, 127, 128, 254, 255]
        times = sorted({0, 1, 255, 256, 65535, 65536, 2**22 - 1, 2**22, 2**23 - 1})
        for x in values:
            for p in (OFF, ON):
                for t in times:
                    e = Event(x, 255 - x, p, t)
                    assert decode_event(encode_event(e)) == e


class TestStreamCodec:
    def test_empty(self):
        s = read_stream(b"", 34, 34)
        assert len(s) == 0
        assert write_stream(EventStream.empty(34, 34)) == b""

    def test_two_events(self):
        data = encode_event(Event(1, 2, ON, 3)) + encode_event(Event(4, 5, OFF, 9))
        s = read_stream(data, 34, 34)
        assert list(s) == [(1, 2, ON, 3), (4, 5, OFF, 9)]

    def test_truncated_offset(self):
        with pytest.raises(TruncatedRecordError) as err:
            read_stream(bytes(7), 34, 34)
        assert err.value.offset == 5

    def test_address_error_index(self):
        data = encode_event(Event(1, 1, ON, 0)) + encode_event(Event(40, 1, ON, 1))
        with pytest.raises(AddressRangeError) as err:
            read_stream(data, 34, 34)
        assert err.value.index == 1

    def test_monotonicity_error_index(self):
        data = b"".join(encode_event(Event(0, 0, ON, t)) for t in (5, 6, 4))
        with pytest.raises(MonotonicityError) as err:
            read_stream(data, 34, 34)
        assert err.value.index == 2

    def test_equal_timestamps_accepted(self):
        data = b"".join(encode_event(Event(0, 0, ON, 7)) for _ in range(3))
        assert len(read_stream(data, 1, 1)) == 3

    def test_single_event(self):
        s = EventStream.from_events([Event(5, 5, ON, 100)], 34, 34)
        data = write_stream(s)
        assert len(data) == 5
        assert read_stream(data, 34, 34) == s

    def test_random_round_trip(self):
        s = random_stream(10_000, seed=3)
        data = write_stream(s)
        assert len(data) == 50_000
        assert read_stream(data, 256, 256, s.duration) == s

    def test_matches_scalar_codec(self):
        s = random_stream(500, seed=4)
        assert write_stream(s) == b"".join(encode_event(e) for e in s)

    @settings(max_examples=50)
    @given(st.lists(events_st, max_size=40))
    def test_round_trip_property(self, evs):
        evs = sorted(evs, key=lambda e: e.timestamp)
        s = EventStream.from_events(evs, 256, 256)
        assert list(read_stream(write_stream(s), 256, 256)) == evs

    @settings(max_examples=100)
    @given(st.binary(max_size=60))
    def test_only_three_error_classes(self, data):
        try:
            read_stream(data, 256, 256)
        except (TruncatedRecordError, MonotonicityError):
            pass

    def test_stream_invariants(self):
        with pytest.raises(ValueError):
            EventStream(make_events([0], [0], [1], [10]), 4, 4, duration=5)
        with pytest.raises(ValueError):
            EventStream(make_events([4], [0], [1], [10]), 4, 4)

    def test_events_read_only(self):
        s = random_stream(3)
        with pytest.raises(ValueError):
            s.events["x"][0] = 1


class TestCrop:
    def test_full_frame_identity(self):
        s = random_stream(200, w=34, h=34)
        assert crop_spatial(s, (0, 0, 34, 34)) == s

    def test_excluding_all(self):
        s = EventStream.from_events([Event(1, 1, ON, 0)], 34, 34)
        assert len(crop_spatial(s, (10, 10, 20, 20))) == 0

    def test_offset(self):
        s = EventStream.from_events([Event(10, 10, ON, 4)], 34, 34)
        assert list(crop_spatial(s, (5, 5, 15, 15))) == [(5, 5, ON, 4)]

    def test_zero_area(self):
        s = random_stream(50, w=34, h=34)
        assert len(crop_spatial(s, (3, 3, 3, 20))) == 0

    def test_outside_frame(self):
        with pytest.raises(ValueError):
            crop_spatial(random_stream(5, w=34, h=34), (0, 0, 35, 34))

    @given(st.integers(0, 20), st.integers(0, 20), st.integers(0, 10), st.integers(0, 10),
           st.integers(0, 10), st.integers(0, 10))
    def test_nested(self, x0, y0, dx, dy, ix, iy):
        s = random_stream(300, seed=1, w=34, h=34)
        outer = (x0, y0, min(34, x0 + 14), min(34, y0 + 14))
        inner_rel = (min(ix, outer[2] - x0), min(iy, outer[3] - y0),
                     min(ix + dx, outer[2] - x0), min(iy + dy, outer[3] - y0))
        inner_abs = (x0 + inner_rel[0], y0 + inner_rel[1], x0 + inner_rel[2], y0 + inner_rel[3])
        twice = crop_spatial(crop_spatial(s, outer), inner_rel)
        assert list(twice) == list(crop_spatial(s, inner_abs))


class TestTimeSlice:
    def test_identity(self):
        s = random_stream(100, w=34, h=34)
        assert time_slice(s, 0, s.duration) == s

    def test_empty(self):
        assert len(time_slice(random_stream(100), 50, 50)) == 0

    def test_window(self):
        s = EventStream.from_events([Event(0, 0, ON, t) for t in (5, 15, 25)], 1, 1)
        assert [e.timestamp for e in time_slice(s, 10, 20)] == [15]

    def test_bad_order(self):
        with pytest.raises(ValueError):
            time_slice(random_stream(3), 5, 4)


class TestAnnotation:
    def test_box_only(self):
        a = Annotation((0, 0, 10, 10))
        text = write_annotation(a)
        assert text.count("\n") == 1
        assert read_annotation(text) == a

    def test_contour(self):
        a = Annotation((1, 2, 30, 40), ((1, 2), (30, 2), (30.5, 40), (1, 40)))
        text = write_annotation(a)
        assert len(text.splitlines()) == 5
        assert read_annotation(text) == a

    def test_bad_vertex_line(self):
        with pytest.raises(AnnotationParseError) as err:
            read_annotation("BBOX 0 0 5 5\nV 1 2\nV 1 2 3\n")
        assert err.value.line_no == 3

    def test_unordered_box(self):
        with pytest.raises(ValueError):
            Annotation((5, 0, 1, 3))

    def test_contour_bounds(self):
        with pytest.raises(ValueError):
            Annotation((0, 0, 5, 5), ((40, 1),)).check_bounds(34, 34)


class TestFiles:
    def test_meta_and_load(self, tmp_path):
        s = random_stream(20, w=34, h=34)
        write_meta(tmp_path, 34, 34, s.duration)
        save_stream(tmp_path / "a.bin", s)
        assert load_stream(tmp_path / "a.bin") == s

    def test_frame_override(self, tmp_path):
        s = random_stream(20, w=40, h=30)
        write_meta_entries(tmp_path, 34, 34, s.duration, {"big.bin": (40, 30)})
        save_stream(tmp_path / "big.bin", s)
        assert read_meta_entries(tmp_path)[1] == {"big.bin": (40, 30)}
        assert load_stream(tmp_path / "big.bin") == s
