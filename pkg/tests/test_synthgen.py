"""Synthetic corpus generator: determinism, ground truth, pollution, tunnels."""

import json

import numpy as np
import pytest

from tunneldetect.ingest import ingest_capture
from tunneldetect.synthgen import ScenarioSpec, compenc_exemplars, generate


def read_jsonl(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def small_spec(out_dir, **overrides):
    base = dict(
        seed=5,
        out_dir=str(out_dir),
        benign_scale=0.2,
        tunnel_flows_per_kind=1,
        tunnel_pairs_per_flow=60,
    )
    base.update(overrides)
    return ScenarioSpec(**base)


class TestDeterminism:
    def test_same_seed_same_bytes(self, tmp_path):
        a = generate(small_spec(tmp_path / "a"), mode="both")
        b = generate(small_spec(tmp_path / "b"), mode="both")
        assert set(a["captures"]) == set(b["captures"])
        for name in a["captures"]:
            bytes_a = (tmp_path / "a" / f"{name}.pcap").read_bytes()
            bytes_b = (tmp_path / "b" / f"{name}.pcap").read_bytes()
            assert bytes_a == bytes_b, name

    def test_different_seed_different_bytes(self, tmp_path):
        generate(small_spec(tmp_path / "a"), mode="eval")
        generate(small_spec(tmp_path / "b", seed=6), mode="eval")
        assert (
            (tmp_path / "a" / "benign_eval.pcap").read_bytes()
            != (tmp_path / "b" / "benign_eval.pcap").read_bytes()
        )


class TestGroundTruth:
    def test_every_packet_accounted(self, tmp_path):
        manifest = generate(small_spec(tmp_path), mode="eval")
        for name, entry in manifest["captures"].items():
            truth = read_jsonl(tmp_path / f"{name}.gt.jsonl")
            assert len(truth) == entry["packets"]
            assert [doc["index"] for doc in truth] == list(range(len(truth)))

    def test_tunnel_flags_only_in_tunnel_captures(self, tmp_path):
        manifest = generate(small_spec(tmp_path), mode="eval")
        for name in manifest["captures"]:
            truth = read_jsonl(tmp_path / f"{name}.gt.jsonl")
            flagged = {doc["tunnel"] for doc in truth}
            if name.startswith("tunnel_"):
                assert True in flagged
            else:
                assert flagged == {False}

    def test_connection_truth_agrees_with_packet_truth(self, tmp_path):
        manifest = generate(small_spec(tmp_path), mode="eval")
        for name in manifest["captures"]:
            conns = {doc["key"]: doc["tunnel"] for doc in read_jsonl(tmp_path / f"{name}.conns.jsonl")}
            rows, _ = ingest_capture(tmp_path / f"{name}.pcap", capture=name)
            truth = read_jsonl(tmp_path / f"{name}.gt.jsonl")
            by_index = {doc["index"]: doc for doc in truth}
            for row in rows:
                assert row.key in conns, f"{name}: {row.key} missing from connection truth"
                assert conns[row.key] == by_index[row.index]["tunnel"]

    def test_manifest_counts_match_files(self, tmp_path):
        manifest = generate(small_spec(tmp_path), mode="train")
        for name, entry in manifest["captures"].items():
            labels = read_jsonl(tmp_path / f"{name}.labels.jsonl")
            truth = read_jsonl(tmp_path / f"{name}.gt.jsonl")
            assert len(truth) == entry["packets"]
            # sidecar rows are a subset: only packets an analyzer would label
            assert len(labels) <= entry["packets"]


class TestPollution:
    def test_fraction_is_exact_per_protocol(self, tmp_path):
        spec = small_spec(tmp_path, pollution=0.1, benign_scale=0.5)
        generate(spec, mode="train")
        truth = {doc["index"]: doc for doc in read_jsonl(tmp_path / "benign_train.gt.jsonl")}
        # eligibility requires a payload that clears the window, so count over
        # ingested rows; pollution replaces content but never changes length
        rows, _ = ingest_capture(tmp_path / "benign_train.pcap")
        for proto in ("DHCP", "DNS", "NTP", "HTTP", "SMB"):
            docs = [truth[r.index] for r in rows if truth[r.index]["protocol"] == proto]
            eligible = [d for d in docs if d["kind"] == "cleartext" or d["polluted"]]
            hits = [d for d in eligible if d["polluted"]]
            assert len(hits) == int(round(0.1 * len(eligible))), proto

    def test_zero_pollution_marks_nothing(self, tmp_path):
        generate(small_spec(tmp_path), mode="train")
        truth = read_jsonl(tmp_path / "benign_train.gt.jsonl")
        assert not any(doc["polluted"] for doc in truth)

    def test_polluted_payloads_still_carry_original_labels(self, tmp_path):
        spec = small_spec(tmp_path, pollution=0.2, benign_scale=0.5)
        generate(spec, mode="train")
        rows, _ = ingest_capture(
            tmp_path / "benign_train.pcap",
            capture="benign_train",
            sidecar_path=tmp_path / "benign_train.labels.jsonl",
        )
        truth = {doc["index"]: doc for doc in read_jsonl(tmp_path / "benign_train.gt.jsonl")}
        polluted_rows = [r for r in rows if truth[r.index]["polluted"]]
        assert polluted_rows, "pollution should survive the payload-length floor"
        for row in polluted_rows:
            assert truth[row.index]["protocol"] in {label for label in row.labels} | {"OTHER"}


class TestTunnels:
    def test_tunnel_packets_look_like_dns(self, tmp_path):
        generate(small_spec(tmp_path), mode="eval")
        rows, stats = ingest_capture(tmp_path / "tunnel_ssh.pcap", capture="t")
        assert stats.processable == stats.total  # every tunnel packet clears the window
        assert all(row.labels == ["DNS"] for row in rows)
        assert all(row.key.startswith("udp|") for row in rows)

    def test_pair_count(self, tmp_path):
        manifest = generate(small_spec(tmp_path), mode="eval")
        entry = manifest["captures"]["tunnel_ssh"]
        # one flow, 60 poll+data exchanges of 4 packets each
        assert entry["packets"] == 240
        assert entry["connections"] == 2

    def test_payload_chunks_distinct_across_packets(self, tmp_path):
        # data-bearing packets carry distinct encoded chunks; polls may repeat
        generate(small_spec(tmp_path), mode="eval")
        rows, _ = ingest_capture(tmp_path / "tunnel_sftp.pcap", capture="t")
        assert len({r.data for r in rows}) > 0.5 * len(rows)

    def test_no_tunnel_captures_when_kinds_empty(self, tmp_path):
        manifest = generate(small_spec(tmp_path, tunnel_kinds=()), mode="eval")
        assert set(manifest["captures"]) == {"benign_eval"}


class TestBenignCorpus:
    def test_all_monitored_protocols_present(self, tmp_path):
        generate(small_spec(tmp_path, benign_scale=0.5), mode="train")
        rows, _ = ingest_capture(
            tmp_path / "benign_train.pcap",
            capture="benign_train",
            sidecar_path=tmp_path / "benign_train.labels.jsonl",
        )
        seen = {label for row in rows for label in row.labels}
        for proto in ("DHCP", "DNS", "NTP", "HTTP", "SMB", "KRB", "SFTP", "SSH", "SSL"):
            assert proto in seen, proto

    def test_most_packets_clear_payload_floor(self, tmp_path):
        generate(small_spec(tmp_path, benign_scale=0.5), mode="train")
        rows, stats = ingest_capture(tmp_path / "benign_train.pcap")
        assert stats.processable / stats.total > 0.9
        assert len(rows) == stats.processable


class TestExemplars:
    def test_shapes_and_kinds(self):
        data, kinds = compenc_exemplars(n_compressed=30, n_encrypted=10, seed=1)
        assert data.shape == (40, 52)
        assert data.dtype == np.uint8
        assert kinds.count("compressed") == 30
        assert kinds.count("encrypted") == 10

    def test_deterministic(self):
        a, _ = compenc_exemplars(n_compressed=20, n_encrypted=20, seed=9)
        b, _ = compenc_exemplars(n_compressed=20, n_encrypted=20, seed=9)
        assert np.array_equal(a, b)

    def test_window_length_follows_n_bytes(self):
        data, _ = compenc_exemplars(n_bytes=44, n_compressed=5, n_encrypted=5, seed=2)
        assert data.shape == (10, 44)

    def test_kinds_are_separable_in_entropy(self):
        # compressed windows come from deflate streams, encrypted from a CSPRNG;
        # their mean byte diversity should differ visibly
        data, kinds = compenc_exemplars(n_compressed=200, n_encrypted=200, seed=3)
        kinds = np.array(kinds)
        unique_comp = np.mean([len(set(bytes(r))) for r in data[kinds == "compressed"]])
        unique_enc = np.mean([len(set(bytes(r))) for r in data[kinds == "encrypted"]])
        assert unique_enc > unique_comp
