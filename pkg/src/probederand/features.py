"""Burst construction and feature encoding for probe-request streams.

Frames are grouped into per-MAC bursts; each burst carries a numeric
fingerprint of its Information Elements (HT Capabilities, Extended
Capabilities, Vendor-Specific tags) and the multi-channel arrival-order
vector used by the fine clustering stage.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .pcap import (
    IE_EXTENDED_CAPABILITIES,
    IE_HT_CAPABILITIES,
    IE_VENDOR_SPECIFIC,
    InformationElement,
    ProbeRequestFrame,
    ds_channel,
    mac_from_str,
    mac_to_str,
)

# Canonical fingerprint order. Every kind maps to the byte-sum rule;
# the map is the single place to swap in an alternate encoding.
IE_KINDS = ("ht", "extended", "vendor")
IE_KIND_IDS = {
    "ht": IE_HT_CAPABILITIES,
    "extended": IE_EXTENDED_CAPABILITIES,
    "vendor": IE_VENDOR_SPECIFIC,
}

DEFAULT_BURST_GAP = 2.0


def encode_value(value) -> float:
    """Numeric encoding of one IE payload.

    Absent or empty values encode to 0, numbers keep their value, byte
    arrays become the sum of their bytes, strings the sum of their
    character codes.
    """
    if value is None:
        return 0
    if isinstance(value, bool):
        raise TypeError("booleans have no IE encoding")
    if isinstance(value, (int, float)):
        return value
    if isinstance(value, (bytes, bytearray, memoryview)):
        return sum(bytes(value))
    if isinstance(value, str):
        return sum(ord(ch) for ch in value)
    raise TypeError(f"no encoding rule for {type(value).__name__}")


def encode_ie(ie: Optional[InformationElement], kind: str) -> float:
    """Encode one IE under the rule registered for ``kind``."""
    if kind not in IE_KIND_IDS:
        raise ValueError(f"unknown IE kind {kind!r}")
    if ie is None:
        return 0
    return encode_value(ie.body)


def build_ie_features(frame: ProbeRequestFrame) -> tuple[float, float, float]:
    """Fingerprint vector [ht, extended, vendor] for one frame.

    Multiple vendor-specific elements are each encoded and summed into
    the single vendor entry.
    """
    ht = next((ie for ie in frame.ies if ie.ie_id == IE_HT_CAPABILITIES), None)
    ext = next((ie for ie in frame.ies if ie.ie_id == IE_EXTENDED_CAPABILITIES), None)
    vendor = sum(
        encode_ie(ie, "vendor")
        for ie in frame.ies
        if ie.ie_id == IE_VENDOR_SPECIFIC
    )
    return (encode_ie(ht, "ht"), encode_ie(ext, "extended"), vendor)


@dataclass(frozen=True)
class Burst:
    """A maximal run of frames sharing one source MAC.

    ``channel_vector`` records the DS Channel of each frame in arrival
    order (capture channel when the DS Parameter Set is missing).
    Bursts loaded back from a feature file carry no frames.
    """

    burst_id: int
    source_mac: bytes
    ie_features: tuple[float, float, float]
    channel_vector: tuple[int, ...]
    truth_device: Optional[str] = None
    frames: tuple[ProbeRequestFrame, ...] = ()

    def __post_init__(self) -> None:
        if len(self.channel_vector) < 1:
            raise ValueError("a burst holds at least one frame")
        if self.frames and len(self.frames) != len(self.channel_vector):
            raise ValueError("channel_vector length must match frame count")

    @property
    def length(self) -> int:
        return len(self.channel_vector)


def channel_entries(frames: Sequence[ProbeRequestFrame]) -> tuple[int, ...]:
    """Arrival-order channel per frame: DS Channel, falling back to the
    capture channel, then 0 when neither is known."""
    entries = []
    for frame in frames:
        ch = ds_channel(frame)
        if ch is None:
            ch = frame.capture_channel if frame.capture_channel is not None else 0
        entries.append(ch)
    return tuple(entries)


def build_channel_vector(burst: Burst) -> list[int]:
    """Recompute a burst's arrival-order channel vector from its frames."""
    if not burst.frames:
        return list(burst.channel_vector)
    return list(channel_entries(burst.frames))


def group_bursts(
    frames: Sequence[ProbeRequestFrame],
    gap_seconds: float = DEFAULT_BURST_GAP,
    truths: Optional[Sequence[str]] = None,
) -> list[Burst]:
    """Partition a time-ordered frame stream into bursts.

    Frames are split by source MAC; within one MAC a new burst starts
    whenever the inter-frame gap exceeds ``gap_seconds`` (devices that
    never randomize reuse one MAC across many bursts). Burst IE
    features are taken from the first frame of the burst.
    """
    if gap_seconds <= 0:
        raise ValueError("gap_seconds must be positive")
    if truths is not None and len(truths) != len(frames):
        raise ValueError("truths must parallel frames")

    groups: list[list[int]] = []
    open_group: dict[bytes, int] = {}
    last_seen: dict[bytes, float] = {}
    previous_ts = None
    for idx, frame in enumerate(frames):
        if previous_ts is not None and frame.timestamp < previous_ts:
            raise ValueError("frames must be sorted by timestamp")
        previous_ts = frame.timestamp
        mac = frame.source_mac
        if mac in open_group and frame.timestamp - last_seen[mac] <= gap_seconds:
            groups[open_group[mac]].append(idx)
        else:
            open_group[mac] = len(groups)
            groups.append([idx])
        last_seen[mac] = frame.timestamp

    bursts = []
    for burst_id, indices in enumerate(groups):
        members = tuple(frames[i] for i in indices)
        bursts.append(
            Burst(
                burst_id=burst_id,
                source_mac=members[0].source_mac,
                ie_features=build_ie_features(members[0]),
                channel_vector=channel_entries(members),
                truth_device=truths[indices[0]] if truths is not None else None,
                frames=members,
            )
        )
    return bursts


def ie_stability_violations(bursts: Sequence[Burst]) -> list[int]:
    """Burst ids whose frames disagree with the first frame's IE features.

    The fingerprint is expected to be stable within a burst; violations
    are reported for auditing rather than treated as fatal.
    """
    violations = []
    for burst in bursts:
        if any(build_ie_features(f) != burst.ie_features for f in burst.frames[1:]):
            violations.append(burst.burst_id)
    return violations


def pad_matrix(vectors: Sequence[Sequence[int]]) -> np.ndarray:
    """Zero-pad channel vectors to the maximum observed length."""
    if len(vectors) == 0:
        raise ValueError("no bursts to pad")
    if any(len(v) == 0 for v in vectors):
        raise ValueError("channel vectors must be non-empty")
    width = max(len(v) for v in vectors)
    matrix = np.zeros((len(vectors), width), dtype=float)
    for row, vector in zip(matrix, vectors):
        row[: len(vector)] = vector
    return matrix


def normalize_ie_matrix(vectors: Sequence[Sequence[float]]) -> np.ndarray:
    """Per-dimension min-max scaling into [0, 1]; constant dimensions map to 0."""
    matrix = np.asarray(vectors, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] == 0:
        raise ValueError("expected a non-empty matrix of feature vectors")
    low = matrix.min(axis=0)
    span = matrix.max(axis=0) - low
    scaled = np.zeros_like(matrix)
    varying = span > 0
    scaled[:, varying] = (matrix[:, varying] - low[varying]) / span[varying]
    return scaled


FEATURE_FIELDS = (
    "burst_id",
    "source_mac",
    "truth_device",
    "L",
    "ie_ht",
    "ie_extcap",
    "ie_vendor",
    "channel_vector",
)


def _format_number(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def write_feature_file(bursts: Sequence[Burst], path, header_comment: str | None = None) -> None:
    """Write the per-burst intermediate feature file (CSV, UTF-8)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh)
        writer.writerow(FEATURE_FIELDS)
        for burst in bursts:
            writer.writerow(
                [
                    burst.burst_id,
                    mac_to_str(burst.source_mac),
                    burst.truth_device or "",
                    burst.length,
                    _format_number(burst.ie_features[0]),
                    _format_number(burst.ie_features[1]),
                    _format_number(burst.ie_features[2]),
                    ";".join(str(c) for c in burst.channel_vector),
                ]
            )


def read_feature_file(path) -> list[Burst]:
    """Load bursts back from a feature file, reporting bad rows by line."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        numbered = [
            (lineno, line)
            for lineno, line in enumerate(fh, start=1)
            if line.strip() and not line.startswith("#")
        ]
    if not numbered:
        raise ValueError(f"{path}: no header row found")
    header = next(csv.reader([numbered[0][1]]))
    if tuple(header) != FEATURE_FIELDS:
        raise ValueError(f"{path}:{numbered[0][0]}: unexpected header {header}")
    bursts = []
    for lineno, line in numbered[1:]:
        row = next(csv.reader([line]))
        try:
            if len(row) != len(FEATURE_FIELDS):
                raise ValueError(f"expected {len(FEATURE_FIELDS)} fields, got {len(row)}")
            channel_vector = tuple(int(c) for c in row[7].split(";") if c != "")
            burst = Burst(
                burst_id=int(row[0]),
                source_mac=mac_from_str(row[1]),
                ie_features=(float(row[4]), float(row[5]), float(row[6])),
                channel_vector=channel_vector,
                truth_device=row[2] or None,
            )
            if burst.length != int(row[3]):
                raise ValueError("L column disagrees with channel_vector")
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
        bursts.append(burst)
    return bursts
