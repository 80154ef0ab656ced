"""pcap / Radiotap / 802.11 parsing for Probe Request traffic.

Reads classic pcap files (libpcap format, both byte orders, microsecond
and nanosecond timestamp magic) with link type 127 (Radiotap over
802.11) or 105 (bare 802.11), keeps only Probe Request frames, and
merges per-channel sniffer captures into one time-ordered stream.

Only the fields the burst pipeline consumes are decoded: capture
timestamp, source MAC (Address 2), capture channel, sequence number,
and the tagged Information Elements. No FCS validation is attempted;
frames that Radiotap flags as FCS-bad are dropped.

pcap global header (24 bytes): magic, version major/minor, thiszone,
sigfigs, snaplen, network. Record header (16 bytes): ts_sec, ts_frac,
incl_len, orig_len.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Iterator, Optional

PCAP_MAGIC_US = 0xA1B2C3D4
PCAP_MAGIC_NS = 0xA1B23C4D
LINKTYPE_RADIOTAP = 127
LINKTYPE_DOT11 = 105

# Information Element ids used by the pipeline.
IE_SSID = 0
IE_DS_PARAMETER_SET = 3
IE_HT_CAPABILITIES = 45
IE_EXTENDED_CAPABILITIES = 127
IE_VENDOR_SPECIFIC = 221

# Frame Control byte 0 of a Probe Request: version 0, type 00
# (management), subtype 0100.
FC_PROBE_REQUEST = 0x40

# Radiotap flags field bits.
RT_FLAG_HAS_FCS = 0x10
RT_FLAG_BAD_FCS = 0x40

_MGMT_HEADER_LEN = 24


class Error(Exception):
    """Base class for capture-processing failures."""


class FormatError(Error):
    """Input bytes are not a capture this reader understands."""


class TruncationError(Error):
    """A declared length runs past the available bytes."""


class ChannelResolutionError(Error):
    """A frame's capture channel cannot be determined from any source."""


@dataclass(frozen=True)
class InformationElement:
    """One tagged parameter (TLV) from a management frame body."""

    ie_id: int
    body: bytes

    def __post_init__(self) -> None:
        if not 0 <= self.ie_id <= 255:
            raise ValueError(f"IE id out of range: {self.ie_id}")
        if len(self.body) > 255:
            raise ValueError(f"IE body too long: {len(self.body)} bytes")

    @property
    def length(self) -> int:
        return len(self.body)


@dataclass(frozen=True)
class ProbeRequestFrame:
    """One parsed Probe Request.

    ``capture_channel`` is the sniffer channel the frame was captured
    on (Radiotap channel field when present, else the per-file declared
    channel); it may be None until :func:`merge_captures` resolves it.
    """

    timestamp: float
    source_mac: bytes
    capture_channel: Optional[int]
    sequence_number: int
    ies: tuple[InformationElement, ...]

    def __post_init__(self) -> None:
        if len(self.source_mac) != 6:
            raise ValueError("source_mac must be exactly 6 bytes")
        if self.capture_channel is not None and not 1 <= self.capture_channel <= 13:
            raise ValueError(f"capture_channel out of range: {self.capture_channel}")
        if not 0 <= self.sequence_number <= 4095:
            raise ValueError(f"sequence_number out of range: {self.sequence_number}")


@dataclass
class CaptureMeta:
    """Per-file capture metadata."""

    path: str
    declared_channel: Optional[int] = None
    link_type: Optional[int] = None


@dataclass
class ParseDiagnostics:
    """Tallies of everything a parse skipped or repaired."""

    records_total: int = 0
    probe_requests: int = 0
    skipped_other: int = 0
    skipped_fcs_bad: int = 0
    skipped_truncated: int = 0
    skipped_bad_radiotap: int = 0
    ie_overruns: int = 0
    truncated_tail: int = 0
    empty_files: list[str] = field(default_factory=list)

    def merge(self, other: "ParseDiagnostics") -> None:
        self.records_total += other.records_total
        self.probe_requests += other.probe_requests
        self.skipped_other += other.skipped_other
        self.skipped_fcs_bad += other.skipped_fcs_bad
        self.skipped_truncated += other.skipped_truncated
        self.skipped_bad_radiotap += other.skipped_bad_radiotap
        self.ie_overruns += other.ie_overruns
        self.truncated_tail += other.truncated_tail
        self.empty_files.extend(other.empty_files)


def mac_to_str(mac: bytes) -> str:
    """6 raw bytes to lowercase colon-separated form."""
    return ":".join(f"{b:02x}" for b in mac)


def mac_from_str(text: str) -> bytes:
    parts = text.split(":")
    if len(parts) != 6:
        raise ValueError(f"not a MAC address: {text!r}")
    return bytes(int(p, 16) for p in parts)


def ds_channel(frame: ProbeRequestFrame) -> Optional[int]:
    """Current Channel from the first DS Parameter Set IE, if any."""
    for ie in frame.ies:
        if ie.ie_id == IE_DS_PARAMETER_SET and ie.length >= 1:
            return ie.body[0]
    return None


# Radiotap fields preceding (and including) the channel field, in
# presence-bit order: (bit, alignment, size). Alignment is relative to
# the start of the Radiotap header.
_RT_FIELD_LAYOUT = (
    (0, 8, 8),  # TSFT
    (1, 1, 1),  # Flags
    (2, 1, 1),  # Rate
    (3, 2, 4),  # Channel: u16 frequency MHz + u16 channel flags
)


def parse_radiotap_fields(buf: bytes) -> tuple[int, Optional[int], Optional[int]]:
    """Decode header length, 2.4 GHz channel and capture flags.

    Walks the presence bitmap chain (bit 31 marks an extension word)
    and the aligned field area far enough to reach the channel field.
    Returns (header_length, channel or None, flags byte or None).
    """
    if len(buf) < 8:
        raise FormatError("buffer shorter than the fixed Radiotap header")
    if buf[0] != 0:
        raise FormatError(f"unknown Radiotap version {buf[0]}")
    header_len = struct.unpack_from("<H", buf, 2)[0]
    if header_len > len(buf):
        raise TruncationError(
            f"Radiotap header declares {header_len} bytes, {len(buf)} available"
        )
    if header_len < 8:
        raise FormatError(f"Radiotap header length {header_len} below minimum")

    offset = 4
    present_words = []
    while True:
        if offset + 4 > header_len:
            raise FormatError("Radiotap presence bitmap overruns the header")
        word = struct.unpack_from("<I", buf, offset)[0]
        present_words.append(word)
        offset += 4
        if not word & 0x80000000:
            break

    present = present_words[0]
    pos = offset
    channel: Optional[int] = None
    flags: Optional[int] = None
    for bit, align, size in _RT_FIELD_LAYOUT:
        if not (present >> bit) & 1:
            continue
        pos = (pos + align - 1) & ~(align - 1)
        if pos + size > header_len:
            break  # declared field does not fit; treat the rest as absent
        if bit == 1:
            flags = buf[pos]
        elif bit == 3:
            freq = struct.unpack_from("<H", buf, pos)[0]
            if 2412 <= freq <= 2472 and (freq - 2407) % 5 == 0:
                channel = (freq - 2407) // 5
        pos += size
    return header_len, channel, flags


def parse_radiotap(buf: bytes) -> tuple[int, Optional[int]]:
    """(header_length, capture channel or None) for a Radiotap header."""
    header_len, channel, _ = parse_radiotap_fields(buf)
    return header_len, channel


def parse_ies(
    buf: bytes, diagnostics: Optional[ParseDiagnostics] = None
) -> list[InformationElement]:
    """Sequential TLV walk over a tagged-parameters region.

    An element whose declared length overruns the buffer is dropped and
    the walk stops; the drop is tallied when diagnostics are supplied.
    """
    elements: list[InformationElement] = []
    i = 0
    n = len(buf)
    while i < n:
        if i + 2 > n or i + 2 + buf[i + 1] > n:
            if diagnostics is not None:
                diagnostics.ie_overruns += 1
            break
        length = buf[i + 1]
        elements.append(InformationElement(buf[i], bytes(buf[i + 2 : i + 2 + length])))
        i += 2 + length
    return elements


def _unpack_global_header(data: bytes) -> tuple[str, bool, int]:
    """(byte-order char, nanosecond flag, link type) from a pcap header."""
    if len(data) < 24:
        raise FormatError("truncated pcap global header")
    magic_le = struct.unpack_from("<I", data, 0)[0]
    magic_be = struct.unpack_from(">I", data, 0)[0]
    if magic_le == PCAP_MAGIC_US:
        order, nanos = "<", False
    elif magic_le == PCAP_MAGIC_NS:
        order, nanos = "<", True
    elif magic_be == PCAP_MAGIC_US:
        order, nanos = ">", False
    elif magic_be == PCAP_MAGIC_NS:
        order, nanos = ">", True
    else:
        raise FormatError(f"unrecognized pcap magic 0x{magic_le:08X}")
    network = struct.unpack_from(order + "I", data, 20)[0]
    if network not in (LINKTYPE_RADIOTAP, LINKTYPE_DOT11):
        raise FormatError(
            f"unsupported link type {network} (expected 127 Radiotap or 105 802.11)"
        )
    return order, nanos, network


def read_capture(
    source,
    meta: CaptureMeta,
    diagnostics: Optional[ParseDiagnostics] = None,
) -> list[ProbeRequestFrame]:
    """Parse a pcap byte stream and return its Probe Request frames.

    Non-probe frames are skipped silently; truncated or FCS-bad frames
    are skipped and tallied. A record header promising more bytes than
    remain stops the walk with the partial result.
    """
    diag = diagnostics if diagnostics is not None else ParseDiagnostics()
    data = source.read() if hasattr(source, "read") else bytes(source)
    order, nanos, network = _unpack_global_header(data)
    meta.link_type = network

    frames: list[ProbeRequestFrame] = []
    offset = 24
    total = len(data)
    while offset < total:
        if offset + 16 > total:
            diag.truncated_tail += 1
            break
        ts_sec, ts_frac, incl_len, _orig_len = struct.unpack_from(
            order + "IIII", data, offset
        )
        offset += 16
        if incl_len > total - offset:
            diag.truncated_tail += 1
            break
        record = data[offset : offset + incl_len]
        offset += incl_len
        diag.records_total += 1

        usec = ts_frac // 1000 if nanos else ts_frac
        timestamp = (ts_sec * 1_000_000 + usec) / 1e6

        channel: Optional[int] = None
        body = record
        if network == LINKTYPE_RADIOTAP:
            try:
                header_len, channel, flags = parse_radiotap_fields(record)
            except Error:
                diag.skipped_bad_radiotap += 1
                continue
            if flags is not None and flags & RT_FLAG_BAD_FCS:
                diag.skipped_fcs_bad += 1
                continue
            body = record[header_len:]
            if flags is not None and flags & RT_FLAG_HAS_FCS and len(body) >= 4:
                body = body[:-4]

        if len(body) == 0:
            diag.skipped_truncated += 1
            continue
        if body[0] != FC_PROBE_REQUEST:
            diag.skipped_other += 1
            continue
        if len(body) < _MGMT_HEADER_LEN:
            diag.skipped_truncated += 1
            continue

        source_mac = bytes(body[10:16])
        seq_ctl = struct.unpack_from("<H", body, 22)[0]
        ies = parse_ies(body[_MGMT_HEADER_LEN:], diag)
        if channel is None:
            channel = meta.declared_channel
        frames.append(
            ProbeRequestFrame(
                timestamp=timestamp,
                source_mac=source_mac,
                capture_channel=channel,
                sequence_number=seq_ctl >> 4,
                ies=tuple(ies),
            )
        )
        diag.probe_requests += 1
    if diag.records_total == 0:
        diag.empty_files.append(meta.path)
    return frames


def _merge_tagged(
    streams: Iterable[tuple[CaptureMeta, list[ProbeRequestFrame], object]],
) -> list[tuple[ProbeRequestFrame, object]]:
    """Merge frame streams by (timestamp, channel, input order)."""
    decorated = []
    position = 0
    for meta, frames, tag in streams:
        for frame in frames:
            if frame.capture_channel is None:
                if meta.declared_channel is None:
                    raise ChannelResolutionError(
                        f"frame in {meta.path} has no Radiotap channel and the "
                        "file declares none"
                    )
                frame = replace(frame, capture_channel=meta.declared_channel)
            decorated.append((frame.timestamp, frame.capture_channel, position, frame, tag))
            position += 1
    decorated.sort(key=lambda item: item[:3])
    return [(frame, tag) for _, _, _, frame, tag in decorated]


def merge_captures(
    streams: list[tuple[CaptureMeta, list[ProbeRequestFrame]]],
) -> list[ProbeRequestFrame]:
    """Single time-ordered stream from per-sniffer captures.

    Ties are broken by capture channel ascending, then by input order.
    Frames missing a channel inherit the file's declared channel;
    failing that the merge aborts naming the offending file.
    """
    tagged = _merge_tagged((meta, frames, None) for meta, frames in streams)
    return [frame for frame, _ in tagged]


def _channel_sort_key(path: Path) -> tuple[int, str]:
    stem = path.stem
    return (int(stem), stem) if stem.isdigit() else (1 << 16, stem)


def iter_dataset_files(root: Path) -> Iterator[tuple[str, Path, Optional[int]]]:
    """Yield (device label, pcap path, declared channel) for a dataset tree.

    Layout: ``<root>/<device-id>/<channel>.pcap`` with the directory
    name as ground-truth label and the file stem as sniffer channel.
    """
    device_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    for ddir in device_dirs:
        for path in sorted(ddir.glob("*.pcap"), key=_channel_sort_key):
            declared = None
            if path.stem.isdigit() and 1 <= int(path.stem) <= 13:
                declared = int(path.stem)
            yield ddir.name, path, declared


def read_dataset(
    root, diagnostics: Optional[ParseDiagnostics] = None
) -> list[tuple[ProbeRequestFrame, str]]:
    """Parse and merge every capture under a labeled dataset tree.

    Returns time-ordered (frame, device label) pairs across all devices
    and sniffer channels. Duplicate frames captured by several sniffers
    are kept.
    """
    root = Path(root)
    if not root.is_dir():
        raise FormatError(f"dataset root {root} is not a directory")
    streams = []
    for label, path, declared in iter_dataset_files(root):
        meta = CaptureMeta(str(path), declared_channel=declared)
        frames = read_capture(path.read_bytes(), meta, diagnostics)
        streams.append((meta, frames, label))
    if not streams:
        raise FormatError(
            f"no captures under {root}; expected <root>/<device-id>/<channel>.pcap"
        )
    return [(frame, str(tag)) for frame, tag in _merge_tagged(streams)]
