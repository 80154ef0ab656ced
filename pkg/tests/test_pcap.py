"""Capture parsing, Radiotap decoding and multi-sniffer merging."""

import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from probederand.pcap import (
    CaptureMeta,
    ChannelResolutionError,
    Error,
    FormatError,
    InformationElement,
    ParseDiagnostics,
    ProbeRequestFrame,
    TruncationError,
    merge_captures,
    parse_ies,
    parse_radiotap,
    read_capture,
)


def pcap_header(order="<", nanos=False, linktype=127, snaplen=65535):
    magic = 0xA1B23C4D if nanos else 0xA1B2C3D4
    return struct.pack(order + "IHHiIII", magic, 2, 4, 0, 0, snaplen, linktype)


def pcap_record(body, ts_sec=0, ts_frac=0, order="<"):
    return struct.pack(order + "IIII", ts_sec, ts_frac, len(body), len(body)) + body


def radiotap_channel(channel, flags=None):
    """Minimal Radiotap header carrying a channel (and optionally flags)."""
    freq = 2407 + 5 * channel
    if flags is None:
        return struct.pack("<BBHIHH", 0, 0, 12, 1 << 3, freq, 0x0080)
    return struct.pack("<BBHIBxHH", 0, 0, 14, (1 << 1) | (1 << 3), flags, freq, 0x0080)


def dot11_probe(mac=b"\x02\x00\x00\x00\x00\x01", seq=7, ies=b"", fc0=0x40):
    return (
        bytes([fc0, 0x00])
        + bytes(2)
        + b"\xff" * 6
        + mac
        + b"\xff" * 6
        + struct.pack("<H", seq << 4)
        + ies
    )


def meta(channel=None):
    return CaptureMeta("test.pcap", declared_channel=channel)


class TestReadCapture:
    def test_probe_request_accepted(self):
        data = pcap_header() + pcap_record(radiotap_channel(6) + dot11_probe())
        frames = read_capture(data, meta())
        assert len(frames) == 1
        assert frames[0].capture_channel == 6
        assert frames[0].source_mac == b"\x02\x00\x00\x00\x00\x01"
        assert frames[0].sequence_number == 7

    def test_beacon_skipped(self):
        diag = ParseDiagnostics()
        data = pcap_header() + pcap_record(radiotap_channel(6) + dot11_probe(fc0=0x80))
        assert read_capture(data, meta(), diag) == []
        assert diag.skipped_other == 1

    def test_empty_capture(self):
        diag = ParseDiagnostics()
        assert read_capture(pcap_header(), meta(), diag) == []
        assert diag.records_total == 0
        assert diag.empty_files == ["test.pcap"]

    def test_bad_magic_is_fatal(self):
        with pytest.raises(FormatError):
            read_capture(b"\x00" * 64, meta())

    def test_unsupported_linktype(self):
        with pytest.raises(FormatError):
            read_capture(pcap_header(linktype=1), meta())

    def test_byte_swapped_pcap(self):
        data = pcap_header(order=">") + pcap_record(
            radiotap_channel(1) + dot11_probe(), ts_sec=3, ts_frac=250, order=">"
        )
        frames = read_capture(data, meta())
        assert len(frames) == 1
        assert frames[0].timestamp == pytest.approx(3.000250, abs=1e-9)

    def test_nanosecond_timestamps(self):
        data = pcap_header(nanos=True) + pcap_record(
            radiotap_channel(1) + dot11_probe(), ts_sec=1, ts_frac=500_001_000
        )
        frames = read_capture(data, meta())
        assert frames[0].timestamp == pytest.approx(1.500001, abs=1e-9)

    def test_record_overrunning_file_stops_with_partial_result(self):
        diag = ParseDiagnostics()
        good = pcap_record(radiotap_channel(6) + dot11_probe())
        bad = struct.pack("<IIII", 0, 0, 10_000, 10_000) + b"\x00" * 4
        frames = read_capture(pcap_header() + good + bad, meta(), diag)
        assert len(frames) == 1
        assert diag.truncated_tail == 1

    def test_truncated_body_skipped_and_counted(self):
        diag = ParseDiagnostics()
        short = dot11_probe()[:20]  # probe FC but body below header size
        data = pcap_header() + pcap_record(radiotap_channel(6) + short)
        assert read_capture(data, meta(), diag) == []
        assert diag.skipped_truncated == 1

    def test_fcs_bad_frame_dropped(self):
        diag = ParseDiagnostics()
        data = pcap_header() + pcap_record(radiotap_channel(6, flags=0x40) + dot11_probe())
        assert read_capture(data, meta(), diag) == []
        assert diag.skipped_fcs_bad == 1

    def test_fcs_present_flag_strips_trailer(self):
        body = radiotap_channel(6, flags=0x10) + dot11_probe(ies=b"\x03\x01\x0b") + b"\xde\xad\xbe\xef"
        frames = read_capture(pcap_header() + pcap_record(body), meta())
        assert [ie.ie_id for ie in frames[0].ies] == [3]

    def test_declared_channel_fallback(self):
        rt = struct.pack("<BBHI", 0, 0, 8, 0)  # no channel field
        data = pcap_header() + pcap_record(rt + dot11_probe())
        frames = read_capture(data, meta(channel=11))
        assert frames[0].capture_channel == 11

    def test_bare_dot11_linktype(self):
        data = pcap_header(linktype=105) + pcap_record(dot11_probe(ies=b"\x00\x00"))
        frames = read_capture(data, meta(channel=1))
        assert frames[0].capture_channel == 1
        assert frames[0].ies[0].ie_id == 0


class TestRadiotap:
    def test_minimal_header(self):
        assert parse_radiotap(bytes.fromhex("00 00 08 00 00 00 00 00".replace(" ", ""))) == (8, None)

    def test_channel_2437_is_6(self):
        header_len, channel = parse_radiotap(radiotap_channel(6))
        assert (header_len, channel) == (12, 6)

    def test_channel_2412_is_1(self):
        assert parse_radiotap(radiotap_channel(1))[1] == 1

    def test_non_2ghz_frequency_yields_no_channel(self):
        buf = struct.pack("<BBHIHH", 0, 0, 12, 1 << 3, 5180, 0x0100)
        assert parse_radiotap(buf) == (12, None)

    def test_extended_presence_bitmap_shifts_fields(self):
        # Extension bit set: channel data starts after the second word.
        buf = struct.pack("<BBHIIHH", 0, 0, 16, (1 << 3) | (1 << 31), 0, 2437, 0x0080)
        assert parse_radiotap(buf) == (16, 6)

    def test_alignment_after_tsft_and_flags(self):
        # TSFT (8 bytes, align 8) + flags + rate, then channel aligned to 2.
        present = (1 << 0) | (1 << 1) | (1 << 2) | (1 << 3)
        buf = struct.pack("<BBHIQBBHH", 0, 0, 22, present, 42, 0, 2, 2462, 0x0080)
        header_len, channel = parse_radiotap(buf)
        assert (header_len, channel) == (22, 11)

    def test_declared_length_beyond_buffer(self):
        with pytest.raises(TruncationError):
            parse_radiotap(struct.pack("<BBHI", 0, 0, 99, 0))

    def test_wrong_version(self):
        with pytest.raises(FormatError):
            parse_radiotap(b"\x01\x00\x08\x00\x00\x00\x00\x00")


class TestParseIes:
    def test_ds_parameter_set(self):
        elements = parse_ies(bytes([0x03, 0x01, 0x0B]))
        assert elements == [InformationElement(3, b"\x0b")]

    def test_wildcard_ssid(self):
        elements = parse_ies(bytes([0x00, 0x00]))
        assert elements == [InformationElement(0, b"")]

    def test_overrunning_element_dropped(self):
        diag = ParseDiagnostics()
        buf = bytes([0x2D, 0x01, 0xFF, 0x7F, 0x05, 0x01, 0x02])
        elements = parse_ies(buf, diag)
        assert elements == [InformationElement(0x2D, b"\xff")]
        assert diag.ie_overruns == 1

    def test_dangling_byte_counted(self):
        diag = ParseDiagnostics()
        assert parse_ies(b"\x03", diag) == []
        assert diag.ie_overruns == 1


def frame(ts, channel=1, mac=b"\x02\x00\x00\x00\x00\x01"):
    return ProbeRequestFrame(ts, mac, channel, 0, ())


class TestMergeCaptures:
    def test_sorted_by_timestamp(self):
        streams = [
            (meta(), [frame(3.0)]),
            (meta(), [frame(1.0)]),
            (meta(), [frame(2.0)]),
        ]
        assert [f.timestamp for f in merge_captures(streams)] == [1.0, 2.0, 3.0]

    def test_tie_broken_by_channel(self):
        streams = [(meta(), [frame(1.0, channel=11)]), (meta(), [frame(1.0, channel=1)])]
        assert [f.capture_channel for f in merge_captures(streams)] == [1, 11]

    def test_empty_stream_is_identity(self):
        frames = [frame(0.1), frame(0.2), frame(0.3)]
        assert merge_captures([(meta(), []), (meta(), frames)]) == frames

    def test_unresolvable_channel_names_file(self):
        bad = ProbeRequestFrame(0.0, b"\x02\x00\x00\x00\x00\x01", None, 0, ())
        with pytest.raises(ChannelResolutionError, match="orphan.pcap"):
            merge_captures([(CaptureMeta("orphan.pcap"), [bad])])

    def test_declared_channel_inherited(self):
        bad = ProbeRequestFrame(0.0, b"\x02\x00\x00\x00\x00\x01", None, 0, ())
        merged = merge_captures([(CaptureMeta("x.pcap", declared_channel=6), [bad])])
        assert merged[0].capture_channel == 6

    def test_permutation_of_union(self):
        streams = [
            (meta(), [frame(0.5), frame(0.7)]),
            (meta(), [frame(0.1), frame(0.6), frame(0.9)]),
        ]
        merged = merge_captures(streams)
        assert len(merged) == 5
        assert sorted(f.timestamp for f in merged) == [f.timestamp for f in merged]


class TestFuzz:
    @given(st.binary(max_size=400))
    @settings(max_examples=300, deadline=None)
    def test_read_capture_never_crashes(self, blob):
        try:
            frames = read_capture(blob, meta(channel=1))
        except Error:
            return
        assert isinstance(frames, list)

    @given(st.binary(max_size=400))
    @settings(max_examples=300, deadline=None)
    def test_read_capture_arbitrary_records(self, blob):
        frames = read_capture(pcap_header() + blob, meta(channel=1))
        assert all(isinstance(f, ProbeRequestFrame) for f in frames)

    @given(st.binary(max_size=300))
    @settings(max_examples=300, deadline=None)
    def test_parse_ies_total(self, blob):
        for ie in parse_ies(blob):
            assert ie.length == len(ie.body)

    @given(st.binary(max_size=64))
    @settings(max_examples=300, deadline=None)
    def test_parse_radiotap_contained(self, blob):
        try:
            header_len, channel = parse_radiotap(blob)
        except Error:
            return
        assert header_len <= len(blob)
        assert channel is None or 1 <= channel <= 13
