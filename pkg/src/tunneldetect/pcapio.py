"""Packet-capture file I/O and frame parsing.

Reads classic pcap (both byte orders, micro/nanosecond variants) and pcapng
(SHB/IDB/EPB/SPB), and locates the TCP/UDP payload inside Ethernet, raw-IP,
BSD-loopback, and Linux-cooked frames. No IP defragmentation and no TCP
reassembly: each frame is parsed independently, non-first fragments are
unparseable by design.

The writer side emits classic little-endian microsecond pcap and builds
minimal Ethernet/IPv4/{TCP,UDP} frames with valid checksums, which is all the
synthetic corpus generator needs.
"""
from __future__ import annotations

import socket
import struct
from dataclasses import dataclass
from typing import IO, Iterable, Iterator, Optional, Tuple


class PcapError(ValueError):
    """Raised for files this reader cannot interpret as a capture."""


@dataclass
class ParsedFrame:
    transport: str  # "tcp" | "udp"
    src_ip: str
    src_port: int
    dst_ip: str
    dst_port: int
    payload: bytes


# Link types we know how to unwrap.
LINK_NULL = 0
LINK_ETHERNET = 1
LINK_RAW_IP = 101
LINK_LINUX_SLL = 113

_PCAP_MAGIC_USEC = 0xA1B2C3D4
_PCAP_MAGIC_NSEC = 0xA1B23C4D
_PCAPNG_SHB = 0x0A0D0D0A
_PCAPNG_BYTE_ORDER = 0x1A2B3C4D


def read_frames(path) -> Iterator[Tuple[float, int, bytes]]:
    """Yield (timestamp, linktype, frame bytes) for every record in a capture."""
    with open(path, "rb") as fh:
        head = fh.read(4)
        if len(head) < 4:
            raise PcapError(f"{path}: file too short to be a capture")
        fh.seek(0)
        if head == b"\x0a\x0d\x0d\x0a":
            yield from _read_pcapng(fh, path)
        else:
            yield from _read_pcap_classic(fh, path)


def _read_exact(fh: IO[bytes], n: int, path, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise PcapError(f"{path}: truncated {what}")
    return buf


def _read_pcap_classic(fh: IO[bytes], path) -> Iterator[Tuple[float, int, bytes]]:
    raw = _read_exact(fh, 24, path, "pcap header")
    magic_le = struct.unpack("<I", raw[:4])[0]
    magic_be = struct.unpack(">I", raw[:4])[0]
    if magic_le in (_PCAP_MAGIC_USEC, _PCAP_MAGIC_NSEC):
        endian, magic = "<", magic_le
    elif magic_be in (_PCAP_MAGIC_USEC, _PCAP_MAGIC_NSEC):
        endian, magic = ">", magic_be
    else:
        raise PcapError(f"{path}: unrecognized capture magic {raw[:4].hex()}")
    tick = 1e-9 if magic == _PCAP_MAGIC_NSEC else 1e-6
    linktype = struct.unpack(endian + "I", raw[20:24])[0]
    while True:
        header = fh.read(16)
        if not header:
            return
        if len(header) != 16:
            raise PcapError(f"{path}: truncated packet header")
        sec, frac, incl_len, _orig = struct.unpack(endian + "IIII", header)
        data = _read_exact(fh, incl_len, path, "packet data")
        yield sec + frac * tick, linktype, data


def _read_pcapng(fh: IO[bytes], path) -> Iterator[Tuple[float, int, bytes]]:
    endian = "<"
    interfaces: list[Tuple[int, float]] = []  # (linktype, seconds per tick)
    while True:
        head = fh.read(8)
        if not head:
            return
        if len(head) != 8:
            raise PcapError(f"{path}: truncated block header")
        block_type = struct.unpack(endian + "I", head[:4])[0]
        if block_type == _PCAPNG_SHB or struct.unpack(">I", head[:4])[0] == _PCAPNG_SHB:
            # New section: byte order can change; re-detect from the magic.
            magic_raw = _read_exact(fh, 4, path, "section magic")
            if struct.unpack("<I", magic_raw)[0] == _PCAPNG_BYTE_ORDER:
                endian = "<"
            elif struct.unpack(">I", magic_raw)[0] == _PCAPNG_BYTE_ORDER:
                endian = ">"
            else:
                raise PcapError(f"{path}: bad section byte-order magic")
            total_len = struct.unpack(endian + "I", head[4:8])[0]
            if total_len < 28 or total_len % 4:
                raise PcapError(f"{path}: bad section block length {total_len}")
            _read_exact(fh, total_len - 12, path, "section body")
            interfaces = []
            continue
        total_len = struct.unpack(endian + "I", head[4:8])[0]
        if total_len < 12 or total_len % 4:
            raise PcapError(f"{path}: bad block length {total_len}")
        body = _read_exact(fh, total_len - 12, path, "block body")
        trailer = struct.unpack(endian + "I", _read_exact(fh, 4, path, "block trailer"))[0]
        if trailer != total_len:
            raise PcapError(f"{path}: block length mismatch {total_len} != {trailer}")
        if block_type == 1:  # interface description
            if len(body) < 8:
                raise PcapError(f"{path}: short interface block")
            linktype = struct.unpack(endian + "H", body[0:2])[0]
            interfaces.append((linktype, _tsresol(body[8:], endian)))
        elif block_type == 6:  # enhanced packet
            if len(body) < 20:
                raise PcapError(f"{path}: short packet block")
            if_id, ts_high, ts_low, cap_len, _orig = struct.unpack(endian + "IIIII", body[:20])
            if if_id >= len(interfaces):
                raise PcapError(f"{path}: packet references undeclared interface {if_id}")
            if cap_len > len(body) - 20:
                raise PcapError(f"{path}: captured length exceeds block body")
            linktype, tick = interfaces[if_id]
            ts = ((ts_high << 32) | ts_low) * tick
            yield ts, linktype, body[20 : 20 + cap_len]
        elif block_type == 3:  # simple packet: interface 0, no timestamp
            if not interfaces:
                raise PcapError(f"{path}: simple packet before any interface block")
            if len(body) < 4:
                raise PcapError(f"{path}: short simple packet block")
            orig_len = struct.unpack(endian + "I", body[:4])[0]
            yield 0.0, interfaces[0][0], body[4 : 4 + min(orig_len, len(body) - 4)]
        # all other block types are skipped


def _tsresol(options: bytes, endian: str) -> float:
    """Seconds per timestamp tick from an interface block's options."""
    off = 0
    while off + 4 <= len(options):
        code, length = struct.unpack(endian + "HH", options[off : off + 4])
        off += 4
        if code == 0:
            break
        value = options[off : off + length]
        off += length + (-length % 4)
        if code == 9 and length == 1:
            raw = value[0]
            return 2.0 ** -(raw & 0x7F) if raw & 0x80 else 10.0 ** -raw
    return 1e-6


def parse_frame(linktype: int, data: bytes) -> Optional[ParsedFrame]:
    """Locate the transport payload; None when the frame has no usable TCP/UDP."""
    if linktype == LINK_ETHERNET:
        return _parse_ethernet(data)
    if linktype == LINK_RAW_IP:
        return _parse_ip(data)
    if linktype == LINK_NULL:
        if len(data) < 4:
            return None
        return _parse_ip(data[4:])
    if linktype == LINK_LINUX_SLL:
        if len(data) < 16:
            return None
        ethertype = int.from_bytes(data[14:16], "big")
        return _dispatch_ethertype(ethertype, data[16:])
    return None


def _parse_ethernet(data: bytes) -> Optional[ParsedFrame]:
    if len(data) < 14:
        return None
    ethertype = int.from_bytes(data[12:14], "big")
    off = 14
    while ethertype in (0x8100, 0x88A8):  # VLAN tags
        if len(data) < off + 4:
            return None
        ethertype = int.from_bytes(data[off + 2 : off + 4], "big")
        off += 4
    return _dispatch_ethertype(ethertype, data[off:])


def _dispatch_ethertype(ethertype: int, data: bytes) -> Optional[ParsedFrame]:
    if ethertype == 0x0800:
        return _parse_ipv4(data)
    if ethertype == 0x86DD:
        return _parse_ipv6(data)
    return None


def _parse_ip(data: bytes) -> Optional[ParsedFrame]:
    if not data:
        return None
    version = data[0] >> 4
    if version == 4:
        return _parse_ipv4(data)
    if version == 6:
        return _parse_ipv6(data)
    return None


def _parse_ipv4(data: bytes) -> Optional[ParsedFrame]:
    if len(data) < 20 or data[0] >> 4 != 4:
        return None
    ihl = (data[0] & 0x0F) * 4
    total = int.from_bytes(data[2:4], "big")
    if ihl < 20 or len(data) < ihl or total < ihl:
        return None
    if int.from_bytes(data[6:8], "big") & 0x1FFF:  # non-first fragment
        return None
    src = socket.inet_ntop(socket.AF_INET, data[12:16])
    dst = socket.inet_ntop(socket.AF_INET, data[16:20])
    segment = data[ihl : min(total, len(data))]
    return _parse_transport(data[9], segment, src, dst)


def _parse_ipv6(data: bytes) -> Optional[ParsedFrame]:
    if len(data) < 40 or data[0] >> 4 != 6:
        return None
    payload_len = int.from_bytes(data[4:6], "big")
    nxt = data[6]
    src = socket.inet_ntop(socket.AF_INET6, data[8:24])
    dst = socket.inet_ntop(socket.AF_INET6, data[24:40])
    body = data[40 : min(40 + payload_len, len(data))]
    # Walk the extension-header chain just far enough to find the transport.
    while True:
        if nxt in (6, 17):
            return _parse_transport(nxt, body, src, dst)
        if nxt == 44:  # fragment header
            if len(body) < 8:
                return None
            if int.from_bytes(body[2:4], "big") & 0xFFF8:  # non-first fragment
                return None
            nxt, body = body[0], body[8:]
        elif nxt in (0, 43, 60):  # hop-by-hop, routing, destination options
            if len(body) < 8:
                return None
            ext_len = (body[1] + 1) * 8
            if len(body) < ext_len:
                return None
            nxt, body = body[0], body[ext_len:]
        elif nxt == 51:  # authentication header
            if len(body) < 8:
                return None
            ext_len = (body[1] + 2) * 4
            if len(body) < ext_len:
                return None
            nxt, body = body[0], body[ext_len:]
        else:
            return None


def _parse_transport(proto: int, segment: bytes, src: str, dst: str) -> Optional[ParsedFrame]:
    if proto == 6:
        if len(segment) < 20:
            return None
        doff = (segment[12] >> 4) * 4
        if doff < 20 or len(segment) < doff:
            return None
        sport = int.from_bytes(segment[0:2], "big")
        dport = int.from_bytes(segment[2:4], "big")
        return ParsedFrame("tcp", src, sport, dst, dport, bytes(segment[doff:]))
    if proto == 17:
        if len(segment) < 8:
            return None
        sport = int.from_bytes(segment[0:2], "big")
        dport = int.from_bytes(segment[2:4], "big")
        length = int.from_bytes(segment[4:6], "big")
        if length < 8:
            return None
        return ParsedFrame("udp", src, sport, dst, dport, bytes(segment[8 : min(length, len(segment))]))
    return None


# ---------------------------------------------------------------------------
# Writing side: classic pcap plus minimal IPv4 frame construction.


def write_pcap(path, frames: Iterable[Tuple[float, bytes]], linktype: int = LINK_ETHERNET) -> int:
    """Write (timestamp, frame) pairs as classic little-endian pcap; returns count."""
    count = 0
    with open(path, "wb") as fh:
        fh.write(struct.pack("<IHHiIII", _PCAP_MAGIC_USEC, 2, 4, 0, 0, 262144, linktype))
        for ts, frame in frames:
            sec = int(ts)
            usec = int(round((ts - sec) * 1e6))
            if usec >= 1_000_000:
                sec, usec = sec + 1, usec - 1_000_000
            fh.write(struct.pack("<IIII", sec, usec, len(frame), len(frame)))
            fh.write(frame)
            count += 1
    return count


def _ones_complement_sum(data: bytes) -> int:
    if len(data) % 2:
        data += b"\x00"
    total = sum(struct.unpack(f">{len(data) // 2}H", data))
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return (~total) & 0xFFFF


def build_frame(
    transport: str,
    src_ip: str,
    src_port: int,
    dst_ip: str,
    dst_port: int,
    payload: bytes,
    *,
    seq: int = 0,
    ident: int = 0,
    src_mac: bytes = b"\x02\x00\x00\x00\x00\x01",
    dst_mac: bytes = b"\x02\x00\x00\x00\x00\x02",
) -> bytes:
    """Ethernet/IPv4/{TCP,UDP} frame with valid checksums around `payload`."""
    src = socket.inet_pton(socket.AF_INET, src_ip)
    dst = socket.inet_pton(socket.AF_INET, dst_ip)
    if transport == "udp":
        length = 8 + len(payload)
        header = struct.pack(">HHHH", src_port, dst_port, length, 0)
        pseudo = src + dst + struct.pack(">BBH", 0, 17, length)
        csum = _ones_complement_sum(pseudo + header + payload) or 0xFFFF
        segment = struct.pack(">HHHH", src_port, dst_port, length, csum) + payload
        proto = 17
    elif transport == "tcp":
        header = struct.pack(">HHIIBBHHH", src_port, dst_port, seq & 0xFFFFFFFF, 0, 0x50, 0x18, 65535, 0, 0)
        pseudo = src + dst + struct.pack(">BBH", 0, 6, len(header) + len(payload))
        csum = _ones_complement_sum(pseudo + header + payload)
        segment = header[:16] + struct.pack(">H", csum) + header[18:] + payload
        proto = 6
    else:
        raise ValueError(f"unsupported transport {transport!r}")
    total = 20 + len(segment)
    ip_header = struct.pack(">BBHHHBBH", 0x45, 0, total, ident & 0xFFFF, 0x4000, 64, proto, 0) + src + dst
    ip_csum = _ones_complement_sum(ip_header)
    ip_header = ip_header[:10] + struct.pack(">H", ip_csum) + ip_header[12:]
    return dst_mac + src_mac + b"\x08\x00" + ip_header + segment
