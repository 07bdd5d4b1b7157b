"""Deterministic synthetic corpora: benign protocol traffic and DNS tunnels.

Generates desk-scale captures with per-packet ground truth. Benign builders
emit syntactically plausible payloads on the right well-known ports, sized so
the 64-byte processing window exists; tunnel builders encode inner traffic
(pseudorandom bytes for encrypted sessions, English-ish text for terminal
sessions) into DNS query names and TXT answers that still parse as DNS.

Everything is driven by one numpy Generator in a fixed order, so the same
ScenarioSpec always produces byte-identical files.
"""
from __future__ import annotations

import base64
import math
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .ioutil import write_json, write_jsonl
from .pcapio import build_frame, write_pcap

BASE_TIME = 1704067200.0  # 2024-01-01T00:00:00Z

KIND_CLEARTEXT = "cleartext"
KIND_COMPRESSED = "compressed"
KIND_ENCRYPTED = "encrypted"
KIND_ENCODED = "encoded"  # tunnel windows: text encoding of arbitrary inner bytes

_HOSTS = [
    "www", "mail", "files", "login", "intranet", "wiki", "crm", "vpn",
    "git", "build", "backup", "print", "time", "dc01", "dc02", "proxy",
    "shop", "docs", "api", "auth", "cdn", "status", "news", "assets",
]
_DOMAINS = [
    "example.com", "corp.example.com", "example.net", "branch.example.net",
    "internal.example.org", "lab.example.org", "shop.example.com", "cdn.example.net",
]
_PATHS = [
    "/index.html", "/api/v1/status", "/login", "/static/app.css",
    "/images/logo.png", "/api/v1/orders", "/docs/manual.pdf", "/feed.xml",
    "/search?q=printer", "/account/settings", "/health", "/static/app.js",
]
_AGENTS = [
    "Mozilla/5.0 (Windows NT 10.0; Win64; x64)",
    "Mozilla/5.0 (X11; Linux x86_64) Firefox/115.0",
    "curl/8.5.0",
    "python-requests/2.31",
]
_WORDS = (
    "the quick brown fox jumps over a lazy dog while seventeen printers "
    "report status to the branch office and every nightly backup job logs "
    "its duration in minutes before the morning shift reviews dashboards "
    "for anomalies capacity trends and expired certificates across sites"
).split()
_USERS = ["jsmith", "mrossi", "akumar", "lchen", "pgarcia", "tnguyen"]
_REALM = b"CORP.LAN"


@dataclass
class PacketPlan:
    """One packet to be emitted, with its construction-time ground truth."""

    transport: str
    src_ip: str
    src_port: int
    dst_ip: str
    dst_port: int
    payload: bytes
    protocol: str = ""
    labels: List[str] = field(default_factory=list)
    kind: str = KIND_CLEARTEXT
    tunnel: bool = False
    polluted: bool = False


def _pick(rng: np.random.Generator, items: Sequence):
    return items[int(rng.integers(0, len(items)))]


def _sentence(rng: np.random.Generator, n_words: int) -> str:
    return " ".join(_pick(rng, _WORDS) for _ in range(n_words))


def _rand_bytes(rng: np.random.Generator, n: int) -> bytes:
    return rng.integers(0, 256, size=n, dtype=np.uint8).tobytes()


def _deflate_text(rng: np.random.Generator, min_len: int) -> bytes:
    """A deflate stream at least min_len bytes long, from generated text."""
    words = 40
    while True:
        blob = zlib.compress(_sentence(rng, words).encode(), 6)
        if len(blob) >= min_len:
            return blob
        words *= 2


# ---------------------------------------------------------------------------
# DNS


def _dns_labels(name: str) -> bytes:
    out = b""
    for part in name.split("."):
        raw = part.encode()
        out += bytes([len(raw)]) + raw
    return out + b"\x00"


def _dns_question(name: str, qtype: int) -> bytes:
    return _dns_labels(name) + qtype.to_bytes(2, "big") + b"\x00\x01"


def _dns_header(rng: np.random.Generator, flags: int, qd: int = 1, an: int = 0, ar: int = 0) -> bytes:
    ident = int(rng.integers(0, 65536))
    return (
        ident.to_bytes(2, "big")
        + flags.to_bytes(2, "big")
        + qd.to_bytes(2, "big")
        + an.to_bytes(2, "big")
        + b"\x00\x00"
        + ar.to_bytes(2, "big")
    )


def _dns_opt_padding(n: int) -> bytes:
    # EDNS0 OPT pseudo-RR with zero-filled padding rdata.
    return b"\x00" + (41).to_bytes(2, "big") + (4096).to_bytes(2, "big") + b"\x00" * 4 + n.to_bytes(2, "big") + b"\x00" * n


def _pad_payload(payload: bytes, minimum: int, pad) -> bytes:
    if len(payload) >= minimum:
        return payload
    return payload + pad(minimum - len(payload))


def dns_benign_flow(
    rng: np.random.Generator, client: str, sport: int, server: str, pairs: int
) -> List[PacketPlan]:
    plans: List[PacketPlan] = []
    for _ in range(pairs):
        name = f"{_pick(rng, _HOSTS)}.{_pick(rng, _DOMAINS)}"
        question = _dns_question(name, 1)
        query = _dns_header(rng, 0x0100, ar=1) + question
        query = _pad_payload(query, 72, _dns_opt_padding)
        answer_ip = bytes([10, 1, int(rng.integers(0, 4)), int(rng.integers(1, 250))])
        answer = (
            b"\xc0\x0c" + (1).to_bytes(2, "big") + b"\x00\x01"
            + int(rng.integers(60, 3600)).to_bytes(4, "big")
            + (4).to_bytes(2, "big") + answer_ip
        )
        response = _dns_header(rng, 0x8180, an=1, ar=1) + question + answer
        response = _pad_payload(response, 72, _dns_opt_padding)
        plans.append(PacketPlan("udp", client, sport, server, 53, query, protocol="DNS"))
        plans.append(PacketPlan("udp", server, 53, client, sport, response, protocol="DNS"))
    return plans


def _b64url(chunk: bytes) -> str:
    return base64.urlsafe_b64encode(chunk).decode().rstrip("=")


def encoded_name_for_chunk(chunk: bytes, seq: int, zone: str) -> str:
    """Tool-style upstream name: base64url data labels under a control zone."""
    encoded = f"{seq % 100000:05d}" + _b64url(chunk)
    labels = [encoded[i : i + 57] for i in range(0, len(encoded), 57)]
    return ".".join(labels) + "." + zone


def dns_tunnel_flow(
    rng: np.random.Generator,
    client: str,
    sport: int,
    resolver: str,
    inner: str,
    pairs: int,
    chunk_bytes: int,
    n_bytes: int,
    zone: str = "t1.tun-c2-example.net",
) -> List[PacketPlan]:
    """Query/response pairs carrying inner traffic over DNS on port 53.

    inner: "ssh" | "sftp" (pseudorandom ciphertext) or "telnet" (text).
    """
    if chunk_bytes < 16:
        raise ValueError(f"chunk_bytes must be >= 16, got {chunk_bytes}")
    encoded_len = 5 + math.ceil(chunk_bytes * 4 / 3)
    if encoded_len < n_bytes:
        raise ValueError(
            f"chunk of {chunk_bytes}B encodes to {encoded_len} chars; cannot fill the {n_bytes}B window"
        )
    plans: List[PacketPlan] = []
    text_pool = (_sentence(rng, 600) + " ").encode()
    offset = 0
    for i in range(pairs):
        if inner == "telnet":
            upstream = bytes(text_pool[(offset + j) % len(text_pool)] for j in range(chunk_bytes))
            offset += chunk_bytes
            down = bytes(text_pool[(offset + j) % len(text_pool)] for j in range(96))
            offset += 96
        else:
            upstream = _rand_bytes(rng, chunk_bytes)
            down = _rand_bytes(rng, 96)
        qtype = 16 if i % 2 == 0 else 10  # TXT / NULL data queries, tool-style
        name = encoded_name_for_chunk(upstream, i, zone)
        data_q = _dns_question(name, qtype)
        query = _dns_header(rng, 0x0100) + data_q
        plans.append(
            PacketPlan("udp", client, sport, resolver, 53, query, protocol="DNS", kind=KIND_ENCODED, tunnel=True)
        )
        ack_rdata = _rand_bytes(rng, 8)
        ack = (
            _dns_header(rng, 0x8180, an=1) + data_q
            + b"\xc0\x0c" + qtype.to_bytes(2, "big") + b"\x00\x01" + (1).to_bytes(4, "big")
            + (len(ack_rdata) + 1).to_bytes(2, "big") + bytes([len(ack_rdata)]) + ack_rdata
        )
        plans.append(
            PacketPlan("udp", resolver, 53, client, sport, ack, protocol="DNS", kind=KIND_ENCODED, tunnel=True)
        )
        # the tool polls for downstream data with short throwaway names
        poll_q = _dns_question(f"p{i % 100000:05d}.{zone}", 16)
        poll = _pad_payload(_dns_header(rng, 0x0100, ar=1) + poll_q, 72, _dns_opt_padding)
        plans.append(
            PacketPlan("udp", client, sport, resolver, 53, poll, protocol="DNS", kind=KIND_ENCODED, tunnel=True)
        )
        # data response with no question echo: maximizes rdata per packet
        answer = (
            b"\x00" + (16).to_bytes(2, "big") + b"\x00\x01" + (1).to_bytes(4, "big")
            + (len(down) + 1).to_bytes(2, "big") + bytes([len(down)]) + down
        )
        response = _dns_header(rng, 0x8180, qd=0, an=1) + answer
        plans.append(
            PacketPlan("udp", resolver, 53, client, sport, response, protocol="DNS", kind=KIND_ENCODED, tunnel=True)
        )
    return plans


# ---------------------------------------------------------------------------
# HTTP


def http_flow(
    rng: np.random.Generator,
    client: str,
    sport: int,
    server: str,
    requests: int,
    compressed: bool = False,
) -> List[PacketPlan]:
    plans: List[PacketPlan] = []
    host = f"{_pick(rng, _HOSTS)}.{_pick(rng, _DOMAINS)}"
    agent = _pick(rng, _AGENTS)
    for _ in range(requests):
        request = (
            f"GET {_pick(rng, _PATHS)} HTTP/1.1\r\n"
            f"Host: {host}\r\n"
            f"User-Agent: {agent}\r\n"
            "Accept: text/html,application/json\r\n"
            "Accept-Language: en-US\r\n"
            "Connection: keep-alive\r\n\r\n"
        ).encode()
        plans.append(PacketPlan("tcp", client, sport, server, 80, request, protocol="HTTP"))
        if compressed:
            body = _deflate_text(rng, 180)
            encoding_header = "Content-Encoding: deflate\r\n"
            body_kind = KIND_COMPRESSED
        else:
            body = (" ".join(["<p>" + _sentence(rng, 18) + "</p>" for _ in range(3)])).encode()
            encoding_header = ""
            body_kind = KIND_CLEARTEXT
        head = (
            "HTTP/1.1 200 OK\r\n"
            "Server: httpd/2.4.58\r\n"
            "Content-Type: text/html; charset=utf-8\r\n"
            f"{encoding_header}"
            f"Content-Length: {len(body)}\r\n"
            "Cache-Control: max-age=300\r\n\r\n"
        ).encode()
        plans.append(PacketPlan("tcp", server, 80, client, sport, head, protocol="HTTP"))
        # Body rides in its own segment so its window starts at stream byte 0;
        # for deflate bodies that keeps the Huffman-table region in the window.
        plans.append(
            PacketPlan("tcp", server, 80, client, sport, body, protocol="HTTP", kind=body_kind)
        )
    return plans


# ---------------------------------------------------------------------------
# SMB


_SMB_COMMANDS = [3, 5, 6, 8, 9, 16, 14]  # tree connect, create, close, read, write, ioctl, query


def smb_flow(
    rng: np.random.Generator,
    client: str,
    sport: int,
    server: str,
    messages: int,
    analyzer_labels: bool = False,
) -> List[PacketPlan]:
    plans: List[PacketPlan] = []
    session_id = int(rng.integers(1, 1 << 32))
    tree_id = int(rng.integers(1, 1 << 16))
    for i in range(messages):
        command = _pick(rng, _SMB_COMMANDS)
        for is_response in (False, True):
            header = (
                b"\xfeSMB" + (64).to_bytes(2, "little") + (1).to_bytes(2, "little")
                + (0).to_bytes(4, "little")
                + command.to_bytes(2, "little") + (31).to_bytes(2, "little")
                + (1 if is_response else 0).to_bytes(4, "little")
                + (0).to_bytes(4, "little")
                + i.to_bytes(8, "little")
                + (0).to_bytes(4, "little") + tree_id.to_bytes(4, "little")
                + session_id.to_bytes(8, "little")
                + b"\x00" * 16
            )
            body = (9 if is_response else 57).to_bytes(2, "little") + b"\x00" * 22
            payload = (len(header) + len(body)).to_bytes(4, "big") + header + body
            labels = ["NTLM", "GSSAPI", "SMB", "DCE_RPC"] if analyzer_labels else []
            src, spt, dst, dpt = (server, 445, client, sport) if is_response else (client, sport, server, 445)
            plans.append(
                PacketPlan("tcp", src, spt, dst, dpt, payload, protocol="SMB", labels=labels)
            )
    return plans


# ---------------------------------------------------------------------------
# NTP / DHCP / KRB


def ntp_flow(
    rng: np.random.Generator, client: str, sport: int, server: str, pairs: int
) -> List[PacketPlan]:
    plans: List[PacketPlan] = []
    era = 0xE8000000 + int(rng.integers(0, 1 << 24))
    for i in range(pairs):
        for mode in (3, 4):  # client then server
            stamp = (era + i).to_bytes(4, "big") + (int(rng.integers(0, 256)) << 24).to_bytes(4, "big")
            header = (
                bytes([(0 << 6) | (4 << 3) | mode, 2 if mode == 4 else 3, 6, 0xE9])
                + (int(rng.integers(0, 2048))).to_bytes(4, "big")
                + (int(rng.integers(0, 4096))).to_bytes(4, "big")
                + (b"GPS\x00" if mode == 4 else b"\x00\x00\x00\x00")
                + stamp + stamp + stamp + stamp
            )
            payload = header + b"\x00" * 20  # zero extension field keeps size >= 64B
            src, spt, dst, dpt = (server, 123, client, sport) if mode == 4 else (client, sport, server, 123)
            plans.append(PacketPlan("udp", src, spt, dst, dpt, payload, protocol="NTP"))
    return plans


def dhcp_flow(rng: np.random.Generator, client_mac_seed: int, server: str, pairs: int) -> List[PacketPlan]:
    plans: List[PacketPlan] = []
    mac = b"\x02\x00" + int(client_mac_seed).to_bytes(4, "big")
    offered = f"10.0.{(client_mac_seed >> 8) % 250}.{client_mac_seed % 250 + 2}"
    offered_bytes = bytes(int(x) for x in offered.split("."))
    for i in range(pairs):
        xid = int(rng.integers(0, 1 << 32))
        for op, msg in ((1, 3), (2, 5)):  # request then ack
            head = bytes([op, 1, 6, 0]) + xid.to_bytes(4, "big") + (0).to_bytes(2, "big") + (0).to_bytes(2, "big")
            ciaddr = offered_bytes if (op == 1 and i > 0) else b"\x00" * 4
            yiaddr = offered_bytes if op == 2 else b"\x00" * 4
            siaddr = bytes(int(x) for x in server.split(".")) if op == 2 else b"\x00" * 4
            body = (
                ciaddr + yiaddr + siaddr + b"\x00" * 4
                + mac + b"\x00" * 10 + b"\x00" * 64 + b"\x00" * 128
                + b"\x63\x82\x53\x63"
                + bytes([53, 1, msg, 55, 4, 1, 3, 6, 15, 255])
            )
            payload = head + body
            if op == 1:
                plans.append(PacketPlan("udp", "0.0.0.0" if i == 0 else offered, 68, "255.255.255.255" if i == 0 else server, 67, payload, protocol="DHCP"))
            else:
                plans.append(PacketPlan("udp", server, 67, offered, 68, payload, protocol="DHCP"))
    return plans


def krb_flow(
    rng: np.random.Generator, client: str, sport: int, server: str, pairs: int
) -> List[PacketPlan]:
    # Short structured preamble (tags, pvno, msg-type, realm), then ciphertext.
    # The processing window sees ~20 anchor bytes + ~32 ciphertext bytes.
    plans: List[PacketPlan] = []
    for _ in range(pairs):
        for msg_type, tag in ((10, 0x6A), (11, 0x6B)):  # AS-REQ / AS-REP
            cipher = _rand_bytes(rng, 96)
            prefix = (
                bytes([tag, 0x81, 0x9E, 0x30, 0x81, 0x9B])
                + bytes([0xA1, 0x03, 0x02, 0x01, 0x05])
                + bytes([0xA2, 0x03, 0x02, 0x01, msg_type])
                + bytes([0xA3, 0x0A, 0x1B, len(_REALM)]) + _REALM
                + bytes([0xA5, 0x81, len(cipher) + 2, 0x04])
            )
            payload = prefix + cipher
            src, spt, dst, dpt = (server, 88, client, sport) if msg_type == 11 else (client, sport, server, 88)
            plans.append(PacketPlan("udp", src, spt, dst, dpt, payload, protocol="KRB", kind=KIND_ENCRYPTED))
    return plans


# ---------------------------------------------------------------------------
# Encrypted transports (SSH / SFTP / SSL)


def ssh_like_flow(
    rng: np.random.Generator,
    client: str,
    sport: int,
    server: str,
    packets: int,
    protocol: str = "SSH",
    labels: Optional[List[str]] = None,
) -> List[PacketPlan]:
    plans = [
        PacketPlan("tcp", client, sport, server, 22, b"SSH-2.0-OpenSSH_9.6\r\n", protocol=protocol, labels=list(labels or [])),
        PacketPlan("tcp", server, 22, client, sport, b"SSH-2.0-OpenSSH_9.3\r\n", protocol=protocol, labels=list(labels or [])),
    ]
    for i in range(packets):
        body_len = int(rng.integers(64, 192))
        pad = int(rng.integers(4, 16))
        payload = (body_len + 1).to_bytes(4, "big") + bytes([pad]) + _rand_bytes(rng, body_len)
        outbound = i % 2 == 0
        src, spt, dst, dpt = (client, sport, server, 22) if outbound else (server, 22, client, sport)
        plans.append(
            PacketPlan("tcp", src, spt, dst, dpt, payload, protocol=protocol, labels=list(labels or []), kind=KIND_ENCRYPTED)
        )
    return plans


def ssl_flow(
    rng: np.random.Generator, client: str, sport: int, server: str, packets: int
) -> List[PacketPlan]:
    plans: List[PacketPlan] = []
    for i in range(packets):
        body = _rand_bytes(rng, int(rng.integers(80, 280)))
        payload = b"\x17\x03\x03" + len(body).to_bytes(2, "big") + body
        outbound = i % 2 == 0
        src, spt, dst, dpt = (client, sport, server, 443) if outbound else (server, 443, client, sport)
        plans.append(PacketPlan("tcp", src, spt, dst, dpt, payload, protocol="SSL", kind=KIND_ENCRYPTED))
    return plans


def unlabeled_flow(
    rng: np.random.Generator, client: str, sport: int, server: str, packets: int
) -> List[PacketPlan]:
    plans: List[PacketPlan] = []
    for i in range(packets):
        text = ("MSG " + _sentence(rng, 14)).encode().ljust(72, b" ")
        outbound = i % 2 == 0
        src, spt, dst, dpt = (client, sport, server, 4444) if outbound else (server, 4444, client, sport)
        plans.append(PacketPlan("udp", src, spt, dst, dpt, text, protocol="OTHER"))
    return plans


# ---------------------------------------------------------------------------
# Compression/encryption exemplars for the detector's supervised classes.


def compenc_exemplars(
    n_bytes: int = 52, n_compressed: int = 1800, n_encrypted: int = 600, seed: int = 0
) -> Tuple[np.ndarray, List[str]]:
    """Deterministic (window matrix, kind labels) for compressed/encrypted rows.

    Compressed windows are carved from deflate stream heads the same way a
    packet window is carved (12B stripped), so the Huffman-table region the
    classifier keys on is present, matching what body packets expose. The
    default counts overweight compressed: the deflate-vs-random boundary is
    the tight one, and per-connection kind majorities have to land on it.
    """
    rng = np.random.default_rng(seed)
    windows: List[bytes] = []
    labels: List[str] = []
    for _ in range(n_compressed):
        stream = _deflate_text(rng, 180)
        windows.append(stream[12 : 12 + n_bytes])
        labels.append(KIND_COMPRESSED)
    for _ in range(n_encrypted):
        windows.append(_rand_bytes(rng, n_bytes))
        labels.append(KIND_ENCRYPTED)
    matrix = np.frombuffer(b"".join(windows), dtype=np.uint8).reshape(len(windows), n_bytes)
    return matrix, labels


# ---------------------------------------------------------------------------
# Scenario assembly


@dataclass
class ScenarioSpec:
    seed: int = 0
    out_dir: str = "corpus"
    pollution: float = 0.0
    benign_scale: float = 1.0
    tunnel_kinds: Tuple[str, ...] = ("ssh", "sftp", "telnet")
    tunnel_flows_per_kind: int = 3
    tunnel_pairs_per_flow: int = 12500
    tunnel_chunk_bytes: int = 35
    n_bytes: int = 52

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "out_dir": str(self.out_dir),
            "pollution": self.pollution,
            "benign_scale": self.benign_scale,
            "tunnel_kinds": list(self.tunnel_kinds),
            "tunnel_flows_per_kind": self.tunnel_flows_per_kind,
            "tunnel_pairs_per_flow": self.tunnel_pairs_per_flow,
            "tunnel_chunk_bytes": self.tunnel_chunk_bytes,
            "n_bytes": self.n_bytes,
        }


_SERVERS = {
    "DNS": "10.1.0.53",
    "HTTP": "10.1.0.80",
    "SMB": "10.1.0.45",
    "NTP": "10.1.0.123",
    "DHCP": "10.1.0.67",
    "KRB": "10.1.0.88",
    "SSH": "10.1.0.22",
    "SFTP": "10.1.0.222",
    "SSL": "10.1.0.44",
    "OTHER": "10.1.0.99",
    "TUNNEL": "10.9.0.53",
}

# (builder key, flows, per-flow size) for each corpus profile; sizes are the
# builder's own unit (pairs, requests, messages, or packets).
_TRAIN_PROFILE = [
    ("DNS", 40, 20), ("HTTP", 27, 10), ("HTTP_DEFLATE", 3, 10), ("SMB", 25, 13),
    ("NTP", 15, 30), ("DHCP", 20, 10), ("KRB", 25, 20), ("SSH", 12, 60),
    ("SFTP", 8, 60), ("SSL", 12, 60), ("OTHER", 2, 60), ("SMB_ALIASED", 4, 13),
    ("HTTP_CONFLICT", 1, 4),
]
_EVAL_PROFILE = [
    ("DNS", 30, 25), ("HTTP", 25, 8), ("HTTP_DEFLATE", 3, 8), ("SMB", 15, 20),
    ("NTP", 10, 15), ("DHCP", 8, 8), ("KRB", 8, 10), ("SSH", 6, 25),
    ("SFTP", 4, 25), ("SSL", 6, 50),
]


def _scaled(count: int, scale: float) -> int:
    return max(1, int(round(count * scale)))


def _client_ip(block: int, ordinal: int) -> str:
    return f"10.{block}.{ordinal // 250}.{ordinal % 250 + 2}"


def build_benign(spec: ScenarioSpec, rng: np.random.Generator, profile) -> List[PacketPlan]:
    plans: List[PacketPlan] = []
    ordinal = 0
    for kind, flows, size in profile:
        for _ in range(_scaled(flows, spec.benign_scale)):
            client = _client_ip(0, ordinal)
            sport = 40000 + ordinal
            ordinal += 1
            if kind == "DNS":
                plans += dns_benign_flow(rng, client, sport, _SERVERS["DNS"], size)
            elif kind == "HTTP":
                plans += http_flow(rng, client, sport, _SERVERS["HTTP"], size)
            elif kind == "HTTP_DEFLATE":
                plans += http_flow(rng, client, sport, _SERVERS["HTTP"], size, compressed=True)
            elif kind == "HTTP_CONFLICT":
                flow = http_flow(rng, client, sport, _SERVERS["HTTP"], size)
                for plan in flow:
                    plan.labels = ["DNS", "HTTP"]  # contradictory analyzer output
                plans += flow
            elif kind == "SMB":
                plans += smb_flow(rng, client, sport, _SERVERS["SMB"], size)
            elif kind == "SMB_ALIASED":
                plans += smb_flow(rng, client, sport, _SERVERS["SMB"], size, analyzer_labels=True)
            elif kind == "NTP":
                plans += ntp_flow(rng, client, sport, _SERVERS["NTP"], size)
            elif kind == "DHCP":
                plans += dhcp_flow(rng, ordinal, _SERVERS["DHCP"], size)
            elif kind == "KRB":
                plans += krb_flow(rng, client, sport, _SERVERS["KRB"], size)
            elif kind == "SSH":
                plans += ssh_like_flow(rng, client, sport, _SERVERS["SSH"], size)
            elif kind == "SFTP":
                plans += ssh_like_flow(rng, client, sport, _SERVERS["SFTP"], size, protocol="SFTP", labels=["SFTP"])
            elif kind == "SSL":
                plans += ssl_flow(rng, client, sport, _SERVERS["SSL"], size)
            elif kind == "OTHER":
                plans += unlabeled_flow(rng, client, sport, _SERVERS["OTHER"], size)
            else:
                raise ValueError(f"unknown profile entry {kind!r}")
    return plans


def build_tunnel(spec: ScenarioSpec, rng: np.random.Generator, inner: str) -> List[PacketPlan]:
    plans: List[PacketPlan] = []
    for flow in range(spec.tunnel_flows_per_kind):
        client = _client_ip(8, flow)
        plans += dns_tunnel_flow(
            rng,
            client,
            41000 + flow,
            _SERVERS["TUNNEL"],
            inner,
            spec.tunnel_pairs_per_flow,
            spec.tunnel_chunk_bytes,
            spec.n_bytes,
        )
    return plans


_POLLUTABLE = {"DNS", "HTTP", "SMB", "NTP", "DHCP"}


def apply_pollution(plans: List[PacketPlan], fraction: float, rng: np.random.Generator) -> int:
    """Replace post-strip content of an exact fraction of cleartext packets.

    Half the polluted packets get pseudorandom filler, half deflate filler;
    ports and labels stay untouched, so light labeling is now wrong.
    """
    if fraction <= 0:
        return 0
    polluted = 0
    for protocol in sorted(_POLLUTABLE):
        indices = [
            i for i, plan in enumerate(plans)
            if plan.protocol == protocol and not plan.tunnel and plan.kind == KIND_CLEARTEXT
            and len(plan.payload) >= 64
        ]
        n_hit = int(round(len(indices) * fraction))
        chosen = rng.permutation(len(indices))[:n_hit]
        for j, pick in enumerate(sorted(chosen)):
            plan = plans[indices[int(pick)]]
            need = len(plan.payload) - 12
            if j % 2 == 0:
                filler, kind = _rand_bytes(rng, need), KIND_ENCRYPTED
            else:
                filler, kind = _deflate_text(rng, need)[:need], KIND_COMPRESSED
            plan.payload = plan.payload[:12] + filler
            plan.kind = kind
            plan.polluted = True
            polluted += 1
    return polluted


def write_corpus(plans: List[PacketPlan], out_dir, name: str, start_time: float) -> Dict[str, int]:
    """Emit pcap + sidecar labels + per-packet and per-connection ground truth."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    frames = []
    seq: Dict[Tuple, int] = {}
    for i, plan in enumerate(plans):
        flow = (plan.transport, plan.src_ip, plan.src_port, plan.dst_ip, plan.dst_port)
        frame = build_frame(
            plan.transport, plan.src_ip, plan.src_port, plan.dst_ip, plan.dst_port,
            plan.payload, seq=seq.get(flow, 0), ident=i & 0xFFFF,
        )
        seq[flow] = seq.get(flow, 0) + len(plan.payload)
        frames.append((start_time + i * 0.0021, frame))
    write_pcap(out / f"{name}.pcap", frames)

    write_jsonl(
        out / f"{name}.labels.jsonl",
        ({"index": i, "labels": plan.labels} for i, plan in enumerate(plans) if plan.labels),
    )
    write_jsonl(
        out / f"{name}.gt.jsonl",
        (
            {
                "index": i, "protocol": plan.protocol, "kind": plan.kind,
                "tunnel": plan.tunnel, "polluted": plan.polluted,
            }
            for i, plan in enumerate(plans)
        ),
    )
    conn_truth: Dict[str, bool] = {}
    for plan in plans:
        key = f"{plan.transport}|{plan.src_ip}|{plan.src_port}|{plan.dst_ip}|{plan.dst_port}"
        conn_truth[key] = conn_truth.get(key, False) or plan.tunnel
    write_jsonl(
        out / f"{name}.conns.jsonl",
        ({"key": key, "tunnel": tunnel} for key, tunnel in conn_truth.items()),
    )
    return {
        "packets": len(plans),
        "connections": len(conn_truth),
        "tunnel_connections": sum(1 for v in conn_truth.values() if v),
        "polluted_packets": sum(1 for p in plans if p.polluted),
    }


def generate(spec: ScenarioSpec, mode: str = "both") -> dict:
    """Write the requested corpora under spec.out_dir; returns the manifest."""
    if mode not in ("train", "eval", "both"):
        raise ValueError(f"mode must be train, eval, or both, got {mode!r}")
    rng = np.random.default_rng(spec.seed)
    manifest = {"spec": spec.to_json(), "mode": mode, "captures": {}}
    clock = BASE_TIME
    if mode in ("train", "both"):
        plans = build_benign(spec, rng, _TRAIN_PROFILE)
        apply_pollution(plans, spec.pollution, rng)
        manifest["captures"]["benign_train"] = write_corpus(plans, spec.out_dir, "benign_train", clock)
        clock += 86400.0
    if mode in ("eval", "both"):
        plans = build_benign(spec, rng, _EVAL_PROFILE)
        manifest["captures"]["benign_eval"] = write_corpus(plans, spec.out_dir, "benign_eval", clock)
        clock += 86400.0
        for inner in spec.tunnel_kinds:
            plans = build_tunnel(spec, rng, inner)
            manifest["captures"][f"tunnel_{inner}"] = write_corpus(
                plans, spec.out_dir, f"tunnel_{inner}", clock
            )
            clock += 86400.0
    write_json(Path(spec.out_dir) / "scenario.json", manifest)
    return manifest
