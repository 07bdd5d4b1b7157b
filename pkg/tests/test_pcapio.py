"""Capture reader and writer round trips plus malformed-input handling."""

import struct

import pytest

from tunneldetect.pcapio import (
    LINK_ETHERNET,
    LINK_NULL,
    LINK_RAW_IP,
    ParsedFrame,
    PcapError,
    build_frame,
    parse_frame,
    read_frames,
    write_pcap,
)


def roundtrip(tmp_path, frames, linktype=LINK_ETHERNET):
    path = tmp_path / "cap.pcap"
    write_pcap(path, frames, linktype=linktype)
    return list(read_frames(path))


class TestRoundTrip:
    def test_single_udp_frame(self, tmp_path):
        frame = build_frame("udp", "10.0.0.1", 5353, "10.0.0.2", 53, b"payload")
        records = roundtrip(tmp_path, [(1.5, frame)])
        assert len(records) == 1
        ts, linktype, data = records[0]
        assert ts == pytest.approx(1.5, abs=1e-6)
        assert linktype == LINK_ETHERNET
        assert data == frame

    def test_many_frames_preserve_order_and_times(self, tmp_path):
        frames = [
            (float(i) * 0.25, build_frame("udp", "10.0.0.1", 1000 + i, "10.0.0.2", 53, bytes([i]) * 20))
            for i in range(50)
        ]
        records = roundtrip(tmp_path, frames)
        assert len(records) == 50
        for (want_ts, want_data), (ts, _, data) in zip(frames, records):
            assert ts == pytest.approx(want_ts, abs=1e-6)
            assert data == want_data

    def test_tcp_frame_survives(self, tmp_path):
        frame = build_frame("tcp", "192.168.1.9", 40000, "192.168.1.10", 22, b"x" * 64, seq=7)
        (_, _, data), = roundtrip(tmp_path, [(0.0, frame)])
        parsed = parse_frame(LINK_ETHERNET, data)
        assert parsed == ParsedFrame("tcp", "192.168.1.9", 40000, "192.168.1.10", 22, b"x" * 64)


class TestParseFrame:
    @pytest.mark.parametrize("transport,sport,dport", [("udp", 68, 67), ("tcp", 49152, 445)])
    def test_five_tuple_recovered(self, transport, sport, dport):
        frame = build_frame(transport, "172.16.0.5", sport, "172.16.0.6", dport, b"q" * 32)
        parsed = parse_frame(LINK_ETHERNET, frame)
        assert parsed is not None
        assert parsed.transport == transport
        assert (parsed.src_ip, parsed.src_port) == ("172.16.0.5", sport)
        assert (parsed.dst_ip, parsed.dst_port) == ("172.16.0.6", dport)
        assert parsed.payload == b"q" * 32

    def test_raw_ip_linktype(self):
        frame = build_frame("udp", "10.1.1.1", 123, "10.1.1.2", 123, b"ntp data here")
        # strip the ethernet header, leaving bare IPv4
        parsed = parse_frame(LINK_RAW_IP, frame[14:])
        assert parsed is not None
        assert parsed.dst_port == 123
        assert parsed.payload == b"ntp data here"

    def test_null_linktype(self):
        frame = build_frame("udp", "10.1.1.1", 53, "10.1.1.2", 53, b"dns-ish")
        # BSD loopback: 4-byte family word, host order, then raw IP
        wrapped = struct.pack("<I", 2) + frame[14:]
        parsed = parse_frame(LINK_NULL, wrapped)
        assert parsed is not None
        assert parsed.payload == b"dns-ish"

    def test_non_ip_ethertype_skipped(self):
        frame = build_frame("udp", "10.0.0.1", 53, "10.0.0.2", 53, b"abc")
        arp = frame[:12] + b"\x08\x06" + frame[14:]
        assert parse_frame(LINK_ETHERNET, arp) is None

    def test_runt_frame_skipped(self):
        assert parse_frame(LINK_ETHERNET, b"\x00" * 10) is None

    def test_ipv4_fragment_skipped(self):
        frame = build_frame("udp", "10.0.0.1", 53, "10.0.0.2", 53, b"frag")
        # set fragment offset to a non-zero value in the IP header
        ip = bytearray(frame[14:])
        ip[6:8] = struct.pack(">H", 0x2001)
        assert parse_frame(LINK_ETHERNET, frame[:14] + bytes(ip)) is None

    def test_icmp_skipped(self):
        frame = build_frame("udp", "10.0.0.1", 53, "10.0.0.2", 53, b"ping")
        ip = bytearray(frame[14:])
        ip[9] = 1  # protocol = ICMP
        assert parse_frame(LINK_ETHERNET, frame[:14] + bytes(ip)) is None


class TestClassicVariants:
    def classic(self, tmp_path, magic, endian, ts_frac, frame):
        path = tmp_path / "var.pcap"
        header = struct.pack(endian + "IHHiIII", magic, 2, 4, 0, 0, 65535, LINK_ETHERNET)
        record = struct.pack(endian + "IIII", 10, ts_frac, len(frame), len(frame)) + frame
        path.write_bytes(header + record)
        return list(read_frames(path))

    def test_big_endian_microseconds(self, tmp_path):
        frame = build_frame("udp", "10.0.0.1", 53, "10.0.0.2", 53, b"be")
        (ts, linktype, data), = self.classic(tmp_path, 0xA1B2C3D4, ">", 500000, frame)
        assert ts == pytest.approx(10.5, abs=1e-6)
        assert linktype == LINK_ETHERNET
        assert data == frame

    def test_little_endian_nanoseconds(self, tmp_path):
        frame = build_frame("udp", "10.0.0.1", 53, "10.0.0.2", 53, b"ns")
        (ts, _, data), = self.classic(tmp_path, 0xA1B23C4D, "<", 250000000, frame)
        assert ts == pytest.approx(10.25, abs=1e-9)
        assert data == frame

    def test_snaplen_truncated_record_kept(self, tmp_path):
        # caplen < origlen is legal; the reader hands back what was captured
        frame = build_frame("udp", "10.0.0.1", 53, "10.0.0.2", 53, b"z" * 40)
        path = tmp_path / "snap.pcap"
        header = struct.pack("<IHHiIII", 0xA1B2C3D4, 2, 4, 0, 0, 60, LINK_ETHERNET)
        record = struct.pack("<IIII", 0, 0, 60, len(frame)) + frame[:60]
        path.write_bytes(header + record)
        (_, _, data), = list(read_frames(path))
        assert data == frame[:60]


class TestMalformed:
    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.pcap"
        path.write_bytes(b"")
        with pytest.raises(PcapError):
            list(read_frames(path))

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.pcap"
        path.write_bytes(b"\x00" * 64)
        with pytest.raises(PcapError):
            list(read_frames(path))

    def test_truncated_record_body(self, tmp_path):
        frame = build_frame("udp", "10.0.0.1", 53, "10.0.0.2", 53, b"cut")
        path = tmp_path / "cut.pcap"
        write_pcap(path, [(0.0, frame)])
        whole = path.read_bytes()
        path.write_bytes(whole[:-5])
        with pytest.raises(PcapError):
            list(read_frames(path))

    def test_truncated_global_header(self, tmp_path):
        path = tmp_path / "short.pcap"
        path.write_bytes(struct.pack("<I", 0xA1B2C3D4) + b"\x00" * 6)
        with pytest.raises(PcapError):
            list(read_frames(path))
