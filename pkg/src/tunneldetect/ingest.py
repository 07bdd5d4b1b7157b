"""Capture ingestion: payload extraction, light labeling, connection grouping.

Turns a capture file into dataset rows: one row per processable packet with
the N-byte payload window, the nine sequential features, and the light labels
(analyzer sidecar if present, else well-known port). Packets too short for
the window are counted, never silently dropped.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import pcapio
from .features import SequentialFeatures, featurize_batch
from .ioutil import read_jsonl, write_jsonl
from .types import Bitstream, Connection, ConnectionKey, PacketRecord, ProtocolLabel

DEFAULT_N_BYTES = 52
DEFAULT_STRIP = 12

# Well-known ports for light labeling; dst port takes precedence over src.
PORT_LABELS: Dict[int, ProtocolLabel] = {
    53: ProtocolLabel.DNS,
    67: ProtocolLabel.DHCP,
    68: ProtocolLabel.DHCP,
    80: ProtocolLabel.HTTP,
    88: ProtocolLabel.KRB,
    123: ProtocolLabel.NTP,
    443: ProtocolLabel.SSL,
    445: ProtocolLabel.SMB,
    22: ProtocolLabel.SSH,
}


@dataclass
class CaptureStats:
    """Packet accounting for one capture; total = processable + unprocessable."""

    total: int = 0
    processable: int = 0
    unprocessable: int = 0

    def as_dict(self) -> Dict[str, int]:
        return {
            "total": self.total,
            "processable": self.processable,
            "unprocessable": self.unprocessable,
        }


@dataclass
class DatasetRow:
    """One processable packet, ready for sanitization, training, or detection."""

    index: int
    capture: str
    key: str
    chunk: int
    timestamp: float
    data: bytes
    labels: List[str] = field(default_factory=list)
    features: Optional[np.ndarray] = None  # nine values in SequentialFeatures.FIELDS order

    def to_json(self) -> dict:
        doc = {
            "index": self.index,
            "capture": self.capture,
            "key": self.key,
            "chunk": self.chunk,
            "ts": self.timestamp,
            "bytes": self.data.hex(),
            "labels": list(self.labels),
        }
        if self.features is not None:
            doc["features"] = {
                name: float(value) for name, value in zip(SequentialFeatures.FIELDS, self.features)
            }
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "DatasetRow":
        features = None
        if "features" in doc:
            features = np.array(
                [doc["features"][name] for name in SequentialFeatures.FIELDS], dtype=np.float64
            )
        return cls(
            index=int(doc["index"]),
            capture=doc.get("capture", ""),
            key=doc["key"],
            chunk=int(doc.get("chunk", 0)),
            timestamp=float(doc.get("ts", 0.0)),
            data=bytes.fromhex(doc["bytes"]),
            labels=list(doc.get("labels", [])),
            features=features,
        )

    def bitstream(self) -> Bitstream:
        return Bitstream(
            data=self.data,
            key=ConnectionKey.from_string(self.key),
            light_label=list(self.labels),
            index=self.index,
            timestamp=self.timestamp,
        )


def light_label(record: PacketRecord, port_map: Optional[Dict[int, ProtocolLabel]] = None) -> List[str]:
    """Analyzer labels when present, else the well-known-port label, else []."""
    if record.raw_labels:
        return list(record.raw_labels)
    ports = PORT_LABELS if port_map is None else port_map
    label = ports.get(record.key.dst_port) or ports.get(record.key.src_port)
    return [label.value] if label is not None else []


def load_sidecar(path) -> Dict[int, List[str]]:
    """Sidecar label file: JSON lines with {"index": int, "labels": [str]}."""
    labels: Dict[int, List[str]] = {}
    for doc in read_jsonl(path):
        labels[int(doc["index"])] = [str(item) for item in doc.get("labels", [])]
    return labels


def read_capture(
    path, min_payload: int = 64, sidecar: Optional[Dict[int, List[str]]] = None
) -> Tuple[List[PacketRecord], CaptureStats]:
    """All TCP/UDP packets of a capture, plus counters over every frame."""
    records: List[PacketRecord] = []
    stats = CaptureStats()
    for timestamp, linktype, frame in pcapio.read_frames(path):
        index = stats.total
        stats.total += 1
        parsed = pcapio.parse_frame(linktype, frame)
        if parsed is None:
            stats.unprocessable += 1
            continue
        if len(parsed.payload) >= min_payload:
            stats.processable += 1
        else:
            stats.unprocessable += 1
        key = ConnectionKey(
            parsed.transport, parsed.src_ip, parsed.src_port, parsed.dst_ip, parsed.dst_port
        )
        raw = sidecar.get(index, []) if sidecar else []
        records.append(PacketRecord(index, timestamp, key, parsed.payload, raw))
    return records, stats


def extract_bitstream(
    record: PacketRecord, n: int = DEFAULT_N_BYTES, strip: int = DEFAULT_STRIP
) -> Optional[Bitstream]:
    """Payload window [strip, strip+n); None when the payload is too short."""
    if n <= 0:
        raise ValueError(f"window length must be positive, got {n}")
    if strip < 0:
        raise ValueError(f"strip must be non-negative, got {strip}")
    if len(record.payload) < strip + n:
        return None
    return Bitstream(
        data=bytes(record.payload[strip : strip + n]),
        key=record.key,
        light_label=light_label(record),
        index=record.index,
        timestamp=record.timestamp,
    )


def assign_chunks(keys: Sequence[str], split: int) -> List[int]:
    """Chunk ordinal per packet: position within its connection // split."""
    seen: Dict[str, int] = {}
    chunks: List[int] = []
    for key in keys:
        position = seen.get(key, 0)
        seen[key] = position + 1
        chunks.append(position // split if split > 0 else 0)
    return chunks


def ingest_capture(
    path,
    *,
    capture: Optional[str] = None,
    n_bytes: int = DEFAULT_N_BYTES,
    strip: int = DEFAULT_STRIP,
    min_payload: Optional[int] = None,
    sidecar_path=None,
    split: int = 0,
) -> Tuple[List[DatasetRow], CaptureStats]:
    """Capture file -> featurized dataset rows + packet accounting."""
    if min_payload is None:
        min_payload = strip + n_bytes
    threshold = max(min_payload, strip + n_bytes)
    name = capture if capture is not None else os.path.basename(str(path))
    sidecar = load_sidecar(sidecar_path) if sidecar_path else None
    records, stats = read_capture(path, min_payload=min_payload, sidecar=sidecar)

    streams: List[Bitstream] = []
    for record in records:
        if len(record.payload) < threshold:
            continue
        stream = extract_bitstream(record, n=n_bytes, strip=strip)
        if stream is not None:
            streams.append(stream)

    key_strings = [s.key.as_string() for s in streams]
    chunks = assign_chunks(key_strings, split)
    rows = [
        DatasetRow(
            index=s.index,
            capture=name,
            key=key_str,
            chunk=chunk,
            timestamp=s.timestamp,
            data=s.data,
            labels=s.light_label,
        )
        for s, key_str, chunk in zip(streams, key_strings, chunks)
    ]
    if rows:
        matrix = rows_to_byte_matrix(rows)
        features = featurize_batch(matrix)
        for row, vector in zip(rows, features):
            row.features = vector
    return rows, stats


def rows_to_byte_matrix(rows: Sequence[DatasetRow]) -> np.ndarray:
    widths = {len(row.data) for row in rows}
    if len(widths) > 1:
        raise ValueError(f"mixed payload window lengths in dataset: {sorted(widths)}")
    blob = b"".join(row.data for row in rows)
    return np.frombuffer(blob, dtype=np.uint8).reshape(len(rows), -1)


def rows_to_bit_matrix(rows: Sequence[DatasetRow]) -> np.ndarray:
    return np.unpackbits(rows_to_byte_matrix(rows), axis=1)


def rows_to_feature_matrix(rows: Sequence[DatasetRow]) -> np.ndarray:
    missing = [row.index for row in rows if row.features is None]
    if missing:
        raise ValueError(f"rows without features (first few indices: {missing[:5]})")
    return np.vstack([row.features for row in rows])


def group_rows(rows: Iterable[DatasetRow]) -> List[Connection]:
    """Group rows into connections by (capture, key, chunk), capture order kept."""
    groups: Dict[Tuple[str, str, int], List[DatasetRow]] = {}
    for row in rows:
        groups.setdefault((row.capture, row.key, row.chunk), []).append(row)
    connections = []
    for (capture, key, chunk), members in groups.items():
        streams = [row.bitstream() for row in members]
        connections.append(
            Connection(key=ConnectionKey.from_string(key), chunk=chunk, bitstreams=streams, capture=capture)
        )
    return connections


def write_dataset(path, rows: Iterable[DatasetRow]) -> int:
    return write_jsonl(path, (row.to_json() for row in rows))


def read_dataset(path) -> List[DatasetRow]:
    return [DatasetRow.from_json(doc) for doc in read_jsonl(path)]
