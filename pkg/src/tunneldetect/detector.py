"""Connection-level verdicts: the three alert cases, whitelisting, scoring.

Every packet window is classified by the neural classifier; packets below
the confidence threshold c are consulted against the compression/encryption
detector. A connection then lands in exactly one of three cases:

  (i)   every packet high-confidence: two or more distinct protocols (the
        port label counts as one) mean multiplexing, hence an alert;
  (ii)  every packet low-confidence: all-encrypted content is handed off
        to the external encrypted-traffic analytics, anything else is
        judged by the protocol policy;
  (iii) a mixture: two well-supported protocols alert outright, otherwise
        the dominant protocol is judged by the policy against the content
        kind of the foreign packets.

Support floors keep single spurious windows from deciding connections of
thousands of packets; the policy table says which (protocol, content kind)
pairs are tolerable.
"""
from __future__ import annotations

import collections
import ipaddress
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .config import (
    KIND_CLEARTEXT,
    KIND_COMPRESSED,
    KIND_ENCRYPTED,
    RunConfig,
    expected_kind,
    policy_verdict,
)
from .ingest import DatasetRow, rows_to_bit_matrix, rows_to_feature_matrix
from .models import ModelBundle
from .types import ConnectionKey, parse_label

# Tie order for content kinds: most suspicious first.
KIND_SUSPICION = (KIND_ENCRYPTED, KIND_COMPRESSED, KIND_CLEARTEXT)

CASE_MULTI_HIGH = "MultiProtocolHigh"
CASE_ALL_LOW = "AllLowConfidence"
CASE_MIXED = "MixedConfidence"


class DetectorError(ValueError):
    pass


@dataclass
class PacketVerdict:
    """Per-packet classification; comp_enc is set only when consulted."""

    predicted: str
    confidence: float
    high_confidence: bool
    comp_enc: Optional[str] = None

    def __post_init__(self):
        if self.comp_enc is not None and self.high_confidence:
            raise ValueError("comp_enc is consulted only for low-confidence packets")


@dataclass
class Alert:
    capture: str
    key: ConnectionKey
    chunk: int
    case: str
    protocols: Dict[str, int]  # high-confidence class counts (light label marked too)
    light_label: Optional[str]
    n_packets: int
    low_confidence: int
    comp_enc_breakdown: Dict[str, int]  # kinds among consulted packets
    dominant: Optional[str]
    kind: Optional[str]
    first_timestamp: float
    last_timestamp: float
    encrypted_presence: bool = False  # encrypted messages seen among consulted packets
    suppressed: bool = False

    def to_json(self) -> dict:
        return {
            "capture": self.capture,
            "key": self.key.as_string(),
            "chunk": self.chunk,
            "case": self.case,
            "protocols": dict(self.protocols),
            "light_label": self.light_label,
            "packets": self.n_packets,
            "low_confidence": self.low_confidence,
            "comp_enc_breakdown": dict(self.comp_enc_breakdown),
            "dominant": self.dominant,
            "kind": self.kind,
            "first_ts": self.first_timestamp,
            "last_ts": self.last_timestamp,
            "encrypted_presence": self.encrypted_presence,
            "suppressed": self.suppressed,
        }


@dataclass
class HandoffRecord:
    """Fully encrypted connection queued for the external SSL/TLS analytics."""

    capture: str
    key: ConnectionKey
    chunk: int
    n_packets: int
    first_timestamp: float
    last_timestamp: float
    packets: List[dict] = field(default_factory=list)  # index, ts, confidence

    def to_json(self) -> dict:
        return {
            "capture": self.capture,
            "key": self.key.as_string(),
            "chunk": self.chunk,
            "packets": self.n_packets,
            "first_ts": self.first_timestamp,
            "last_ts": self.last_timestamp,
            "packet_meta": list(self.packets),
        }


@dataclass
class ConnectionResult:
    capture: str
    key: ConnectionKey
    chunk: int
    n_packets: int
    first_timestamp: float
    last_timestamp: float
    verdict: str  # benign | alert | handoff
    alert: Optional[Alert] = None
    handoff: Optional[HandoffRecord] = None

    def connection_id(self) -> str:
        return f"{self.capture}|{self.key.as_string()}"


class WhitelistError(ValueError):
    pass


@dataclass
class Whitelist:
    """CIDR suppression lists; a bare line matches either endpoint, a line
    prefixed with 'src' or 'dst' matches only that side."""

    src: List[ipaddress._BaseNetwork] = field(default_factory=list)
    dst: List[ipaddress._BaseNetwork] = field(default_factory=list)

    @classmethod
    def parse(cls, lines: Iterable[str]) -> "Whitelist":
        wl = cls()
        problems = []
        for lineno, raw in enumerate(lines, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            side = "both"
            parts = line.split()
            if len(parts) == 2 and parts[0] in ("src", "dst"):
                side, line = parts[0], parts[1]
            elif len(parts) != 1:
                problems.append(f"line {lineno}: expected [src|dst] CIDR, got {raw.strip()!r}")
                continue
            try:
                net = ipaddress.ip_network(line, strict=False)
            except ValueError:
                problems.append(f"line {lineno}: malformed CIDR {line!r}")
                continue
            if side in ("src", "both"):
                wl.src.append(net)
            if side in ("dst", "both"):
                wl.dst.append(net)
        if problems:
            raise WhitelistError("invalid whitelist:\n" + "\n".join(f"- {p}" for p in problems))
        return wl

    @classmethod
    def load(cls, path) -> "Whitelist":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.parse(fh)

    def matches(self, src_ip: str, dst_ip: str) -> bool:
        try:
            src = ipaddress.ip_address(src_ip)
            dst = ipaddress.ip_address(dst_ip)
        except ValueError:
            return False
        return any(src in net for net in self.src) or any(dst in net for net in self.dst)


def flag_majority(flags: Sequence[str]) -> str:
    """Majority content kind; ties resolve to the most suspicious kind."""
    if not flags:
        return KIND_CLEARTEXT
    counts = collections.Counter(flags)
    best = max(counts.values())
    for kind in KIND_SUSPICION:
        if counts.get(kind) == best:
            return kind
    return counts.most_common(1)[0][0]


def _top_majority(preds: Sequence[str], kind: str, cfg: RunConfig) -> str:
    """Majority predicted class; ties resolve to the most suspicious policy
    entry for the kind at hand, then alphabetically."""
    counts = collections.Counter(preds)
    best = max(counts.values())
    tied = sorted(cls for cls, cnt in counts.items() if cnt == best)
    if len(tied) == 1:
        return tied[0]
    for cls in tied:
        if policy_verdict(cfg, cls, kind) == "anomalous":
            return cls
    return tied[0]


@dataclass
class JudgeOutcome:
    verdict: str  # benign | alert | handoff
    case: Optional[str] = None
    dominant: Optional[str] = None
    kind: Optional[str] = None


def judge(
    light: Optional[str],
    preds: np.ndarray,
    confs: np.ndarray,
    flags: Sequence[Optional[str]],
    cfg: RunConfig,
) -> JudgeOutcome:
    """The three-case law over one connection's packet classifications.

    flags[i] is the comp/enc kind of packet i; only low-confidence entries
    are read, so high-confidence positions may hold None.
    """
    n = len(preds)
    if n == 0:
        return JudgeOutcome("benign")
    hi = confs >= cfg.c
    n_hi = int(hi.sum())
    low_flags = [flags[i] for i in range(n) if not hi[i]]
    if any(f is None for f in low_flags):
        raise DetectorError("low-confidence packet without a comp/enc flag")

    if n_hi == n:
        # (i) pure high confidence: any second identity means multiplexing.
        distinct = set(preds.tolist())
        if light:
            distinct.add(light)
        if len(distinct) >= 2:
            return JudgeOutcome("alert", CASE_MULTI_HIGH, _top_majority(preds, KIND_CLEARTEXT, cfg))
        return JudgeOutcome("benign", dominant=next(iter(distinct)))

    if n_hi == 0:
        # (ii) nothing recognized: all-encrypted goes to the external
        # analytics, the rest is judged as (dominant identity, content kind).
        if all(f == KIND_ENCRYPTED for f in low_flags):
            return JudgeOutcome("handoff")
        kind = flag_majority(low_flags)
        dominant = light or _top_majority(preds, kind, cfg)
        if policy_verdict(cfg, dominant, kind) == "anomalous":
            return JudgeOutcome("alert", CASE_ALL_LOW, dominant, kind)
        return JudgeOutcome("benign", None, dominant, kind)

    # (iii) mixture. Support floors: a protocol counts as present only with
    # min_support_count packets and min_support_fraction of the connection.
    counts = collections.Counter(preds[hi].tolist())
    significant = {
        cls
        for cls, cnt in counts.items()
        if cnt / n >= cfg.min_support_fraction and cnt >= cfg.min_support_count
    }
    if len(significant) >= 2:
        dominant = _top_majority(list(preds[hi]), KIND_CLEARTEXT, cfg)
        return JudgeOutcome("alert", CASE_MIXED, dominant, flag_majority(low_flags))
    if not significant:
        # High-confidence packets exist but none reach the floor: judge like
        # case (ii), the connection has no recognized protocol backbone.
        kind = flag_majority(low_flags)
        dominant = light or _top_majority(preds, kind, cfg)
        if policy_verdict(cfg, dominant, kind) == "anomalous":
            return JudgeOutcome("alert", CASE_MIXED, dominant, kind)
        return JudgeOutcome("benign", None, dominant, kind)

    dominant = next(iter(significant))
    foreign = [f for f in low_flags if f != expected_kind(dominant)]
    mismatch = light is not None and light != dominant
    if len(foreign) / n < cfg.min_foreign_fraction and not mismatch:
        return JudgeOutcome("benign", None, dominant)
    kind = flag_majority(foreign if foreign else low_flags)
    # On a port mismatch the port names the identity to judge: packet bytes
    # chose the dominant class, so only the port still ties the connection
    # to its claimed protocol.
    judged = light if mismatch else dominant
    if policy_verdict(cfg, judged, kind) == "anomalous":
        return JudgeOutcome("alert", CASE_MIXED, judged, kind)
    return JudgeOutcome("benign", None, judged, kind)


def connection_light_label(rows: Sequence[DatasetRow]) -> Optional[str]:
    """First resolvable light label in the connection, alias-normalized."""
    for row in rows:
        for name in row.labels:
            label = parse_label(name)
            if label is not None:
                return label.value
    return None


def classify_rows(
    rows: Sequence[DatasetRow],
    bundle: ModelBundle,
    c: float,
    batch: int = 16384,
) -> Tuple[np.ndarray, np.ndarray, List[Optional[str]]]:
    """(predictions, confidences, comp/enc flags) for every row.

    Classification runs in batches to bound memory; the comp/enc detector
    is consulted only for rows below the confidence threshold, so flags[i]
    is None wherever confidence >= c.
    """
    if bundle.ann is None:
        raise DetectorError("model bundle has no trained neural classifier")
    if bundle.comp_enc is None:
        raise DetectorError("model bundle has no compression/encryption detector")
    widths = {len(row.data) for row in rows}
    if widths and widths != {bundle.n_bytes}:
        raise DetectorError(
            f"payload window length mismatch: bundle expects {bundle.n_bytes}, data has {sorted(widths)}"
        )
    n = len(rows)
    preds = np.empty(n, dtype=object)
    confs = np.empty(n, dtype=np.float64)
    for start in range(0, n, batch):
        stop = min(start + batch, n)
        bits = rows_to_bit_matrix(rows[start:stop]).astype(np.float64)
        p, cf = bundle.ann.predict(bits)
        preds[start:stop] = p
        confs[start:stop] = cf

    flags: List[Optional[str]] = [None] * n
    low = np.nonzero(confs < c)[0]
    if low.size:
        features = rows_to_feature_matrix([rows[i] for i in low])
        for start in range(0, low.size, batch):
            stop = min(start + batch, low.size)
            kinds = bundle.comp_enc.predict(features[start:stop])
            for i, kind in zip(low[start:stop], kinds):
                flags[i] = str(kind)
    return preds, confs, flags


def detect_connections(
    rows: Sequence[DatasetRow], bundle: ModelBundle, cfg: Optional[RunConfig] = None
) -> List[ConnectionResult]:
    """Judge every connection in the rows; deterministic result order."""
    cfg = cfg or RunConfig()
    if not rows:
        return []
    preds, confs, flags = classify_rows(rows, bundle, cfg.c)
    groups: Dict[Tuple[str, str, int], List[int]] = {}
    for i, row in enumerate(rows):
        groups.setdefault((row.capture, row.key, row.chunk), []).append(i)

    results: List[ConnectionResult] = []
    for (capture, key_str, chunk), indices in groups.items():
        indices = sorted(indices, key=lambda i: (rows[i].timestamp, rows[i].index))
        members = [rows[i] for i in indices]
        p = preds[indices]
        cf = confs[indices]
        hi = cf >= cfg.c
        fl = [flags[i] for i in indices]
        light = connection_light_label(members)
        outcome = judge(light, p, cf, fl, cfg)
        key = ConnectionKey.from_string(key_str)
        first_ts = members[0].timestamp
        last_ts = members[-1].timestamp
        result = ConnectionResult(
            capture=capture,
            key=key,
            chunk=chunk,
            n_packets=len(members),
            first_timestamp=first_ts,
            last_timestamp=last_ts,
            verdict=outcome.verdict,
        )
        if outcome.verdict == "alert":
            consulted = [f for f in fl if f is not None]
            breakdown = dict(collections.Counter(consulted))
            result.alert = Alert(
                capture=capture,
                key=key,
                chunk=chunk,
                case=outcome.case,
                protocols=dict(collections.Counter(p[hi].tolist())),
                light_label=light,
                n_packets=len(members),
                low_confidence=len(consulted),
                comp_enc_breakdown=breakdown,
                dominant=outcome.dominant,
                kind=outcome.kind,
                first_timestamp=first_ts,
                last_timestamp=last_ts,
                encrypted_presence=breakdown.get(KIND_ENCRYPTED, 0) > 0,
            )
        elif outcome.verdict == "handoff":
            result.handoff = HandoffRecord(
                capture=capture,
                key=key,
                chunk=chunk,
                n_packets=len(members),
                first_timestamp=first_ts,
                last_timestamp=last_ts,
                packets=[
                    {"index": m.index, "ts": m.timestamp, "confidence": float(c)}
                    for m, c in zip(members, cf)
                ],
            )
        results.append(result)
    results.sort(key=lambda r: (r.first_timestamp, r.key.as_string(), r.chunk))
    return results


def apply_whitelist(results: Sequence[ConnectionResult], whitelist: Whitelist) -> int:
    """Mark whitelisted alerts suppressed; returns the suppression count."""
    suppressed = 0
    for result in results:
        if result.alert is None:
            continue
        if whitelist.matches(result.key.src_ip, result.key.dst_ip):
            result.alert.suppressed = True
            suppressed += 1
    return suppressed


@dataclass
class EvalReport:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0
    handoffs: int = 0
    per_capture: Dict[str, Dict[str, int]] = field(default_factory=dict)

    @property
    def tpr(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def fpr(self) -> float:
        return self.fp / (self.fp + self.tn) if self.fp + self.tn else 0.0

    @property
    def accuracy(self) -> float:
        total = self.tp + self.fp + self.tn + self.fn
        return (self.tp + self.tn) / total if total else 0.0

    @property
    def f1(self) -> float:
        denom = 2 * self.tp + self.fp + self.fn
        return 2 * self.tp / denom if denom else 0.0

    def to_json(self) -> dict:
        return {
            "tp": self.tp,
            "fp": self.fp,
            "tn": self.tn,
            "fn": self.fn,
            "handoffs": self.handoffs,
            "tpr": self.tpr,
            "fpr": self.fpr,
            "accuracy": self.accuracy,
            "f1": self.f1,
            "per_capture": {k: dict(v) for k, v in sorted(self.per_capture.items())},
        }


def evaluate(results: Sequence[ConnectionResult], ground_truth: Dict[str, str]) -> EvalReport:
    """Score verdicts against per-connection truth ('tunnel' or 'benign').

    A suppressed alert does not count as a detection; a handoff is not an
    alert (the connection goes to the external analytics instead).
    """
    missing = sorted({r.connection_id() for r in results if r.connection_id() not in ground_truth})
    if missing:
        shown = ", ".join(missing[:10]) + (", ..." if len(missing) > 10 else "")
        raise DetectorError(f"connections missing from ground truth: {shown}")
    report = EvalReport()
    for result in results:
        truth = ground_truth[result.connection_id()]
        alerted = result.alert is not None and not result.alert.suppressed
        if result.verdict == "handoff":
            report.handoffs += 1
        per = report.per_capture.setdefault(
            result.capture, {"tp": 0, "fp": 0, "tn": 0, "fn": 0, "connections": 0}
        )
        per["connections"] += 1
        if truth == "tunnel":
            slot = "tp" if alerted else "fn"
        else:
            slot = "fp" if alerted else "tn"
        per[slot] += 1
        setattr(report, slot, getattr(report, slot) + 1)
    return report
