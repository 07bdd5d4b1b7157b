"""Run configuration: every tunable of the pipeline in one JSON document.

Defaults reproduce the reference operating point (N=52, c=0.999999, the
per-protocol one-class hyperparameters, and the compression/encryption
detector settings), so a bare run needs no config file at all. Validation
collects every problem before reporting, instead of failing one field at
a time.
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional

from .types import ANN_CLASSES, ENCRYPTED_PROTOCOLS, MONITORED_PROTOCOLS

KIND_CLEARTEXT = "cleartext"
KIND_COMPRESSED = "compressed"
KIND_ENCRYPTED = "encrypted"
KINDS = (KIND_CLEARTEXT, KIND_COMPRESSED, KIND_ENCRYPTED)

# Per-protocol one-class hyperparameters: gamma, nu, and the entropy
# threshold t gating outlier removal.
ONE_CLASS_DEFAULTS: Dict[str, Dict[str, float]] = {
    "DHCP": {"gamma": 0.7, "nu": 0.03, "t": 0.77},
    "DNS": {"gamma": 0.7, "nu": 0.03, "t": 0.77},
    "NTP": {"gamma": 0.03, "nu": 0.1, "t": 0.92},
    "HTTP": {"gamma": 0.08, "nu": 0.07, "t": 0.91},
    "SMB": {"gamma": 0.06, "nu": 0.08, "t": 0.77},
    "KRB": {"gamma": 0.04, "nu": 0.05, "t": 0.97},
    "SFTP": {"gamma": 0.7, "nu": 0.05, "t": 0.97},
    "SSH": {"gamma": 0.7, "nu": 0.05, "t": 0.97},
    "SSL": {"gamma": 0.0001, "nu": 0.0028, "t": 0.97},
}

# The protocol the packet bytes natively carry: encrypted protocols are
# expected to look encrypted, everything else cleartext.
def expected_kind(protocol: Optional[str]) -> str:
    if protocol is not None and any(p.value == protocol for p in ENCRYPTED_PROTOCOLS):
        return KIND_ENCRYPTED
    return KIND_CLEARTEXT


# Connection policy: maps (dominant protocol, content kind) to a verdict.
# DNS is anomalous with any foreign content; HTTP and SMB tolerate
# compressed payloads; encrypted protocols tolerate encrypted/compressed
# payloads; every protocol tolerates its own expected kind.
POLICY_DEFAULTS: Dict[str, Dict[str, str]] = {
    "DNS": {"*": "anomalous"},
    "DHCP": {"cleartext": "benign"},
    "NTP": {"cleartext": "benign"},
    "HTTP": {"cleartext": "benign", "compressed": "benign"},
    "SMB": {"cleartext": "benign", "compressed": "benign"},
    "KRB": {"encrypted": "benign", "compressed": "benign"},
    "SSH": {"encrypted": "benign", "compressed": "benign"},
    "SFTP": {"encrypted": "benign", "compressed": "benign"},
    "SSL": {"encrypted": "benign", "compressed": "benign"},
}

ANN_DEFAULTS: Dict[str, object] = {
    "hidden": [256, 128, 64],
    "epochs": 120,
    "batch_size": 128,
    "learning_rate": 0.05,
    "momentum": 0.9,
    "patience": 10,
    "validation_fraction": 0.15,
    "weight_decay": 0.0,
}

# Training-row counts for the compression/encryption detector: sampled
# cleartext rows, sampled encrypted-protocol rows, and the synthetic
# exemplar counts (deflate stream heads, pseudorandom windows).
COMP_ENC_SOURCING_DEFAULTS: Dict[str, int] = {
    "cleartext_rows": 1200,
    "encrypted_rows": 600,
    "compressed_exemplars": 1800,
    "encrypted_exemplars": 600,
}


@dataclass
class RunConfig:
    n_bytes: int = 52
    strip: int = 12
    min_payload: Optional[int] = None  # default: strip + n_bytes
    c: float = 0.999999
    seed: int = 0
    split: int = 5000  # connections longer than this are split into chunks
    ann_classes: List[str] = field(default_factory=lambda: [p.value for p in ANN_CLASSES])
    one_class: Dict[str, Dict[str, float]] = field(
        default_factory=lambda: copy.deepcopy(ONE_CLASS_DEFAULTS)
    )
    comp_enc: Dict[str, float] = field(default_factory=lambda: {"gamma": 0.01, "c": 100.0})
    comp_enc_sourcing: Dict[str, int] = field(
        default_factory=lambda: dict(COMP_ENC_SOURCING_DEFAULTS)
    )
    ann: Dict[str, object] = field(default_factory=lambda: copy.deepcopy(ANN_DEFAULTS))
    policy: Dict[str, Dict[str, str]] = field(
        default_factory=lambda: copy.deepcopy(POLICY_DEFAULTS)
    )
    policy_default: str = "anomalous"
    # Case-law floors: a protocol needs this much high-confidence support to
    # count as present; foreign content below the fraction floor is noise.
    min_support_fraction: float = 0.05
    min_support_count: int = 5
    min_foreign_fraction: float = 0.02
    whitelist_path: Optional[str] = None
    # Default stage paths; command-line flags override these.
    paths: Dict[str, str] = field(default_factory=dict)

    @property
    def effective_min_payload(self) -> int:
        return self.min_payload if self.min_payload is not None else self.strip + self.n_bytes

    def snapshot(self) -> dict:
        """Everything a model bundle needs to refuse mismatched reuse."""
        return {
            "n_bytes": self.n_bytes,
            "strip": self.strip,
            "c": self.c,
            "ann_classes": list(self.ann_classes),
            "one_class": copy.deepcopy(self.one_class),
            "comp_enc": dict(self.comp_enc),
            "ann": copy.deepcopy(self.ann),
            "seed": self.seed,
        }


class ConfigError(ValueError):
    """Raised with every validation problem joined into one message."""

    def __init__(self, problems: List[str]):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n" + "\n".join(f"- {p}" for p in problems))


_KNOWN_KEYS = {
    "n_bytes", "strip", "min_payload", "c", "seed", "split", "ann_classes",
    "one_class", "comp_enc", "comp_enc_sourcing", "ann", "policy",
    "policy_default", "min_support_fraction", "min_support_count",
    "min_foreign_fraction", "whitelist_path", "paths",
}


def validate(cfg: RunConfig) -> List[str]:
    """All problems with the configuration; empty list when valid."""
    problems: List[str] = []
    if not isinstance(cfg.n_bytes, int) or cfg.n_bytes <= 0:
        problems.append(f"n_bytes must be a positive integer, got {cfg.n_bytes!r}")
    if not isinstance(cfg.strip, int) or cfg.strip < 0:
        problems.append(f"strip must be a non-negative integer, got {cfg.strip!r}")
    if cfg.min_payload is not None and (
        not isinstance(cfg.min_payload, int) or cfg.min_payload <= 0
    ):
        problems.append(f"min_payload must be a positive integer or null, got {cfg.min_payload!r}")
    if not (isinstance(cfg.c, float) and 0.0 < cfg.c < 1.0):
        problems.append(f"c must be a float strictly between 0 and 1, got {cfg.c!r}")
    if not isinstance(cfg.seed, int):
        problems.append(f"seed must be an integer, got {cfg.seed!r}")
    if not isinstance(cfg.split, int) or cfg.split < 0:
        problems.append(f"split must be a non-negative integer (0 disables), got {cfg.split!r}")
    if not cfg.ann_classes or len(set(cfg.ann_classes)) != len(cfg.ann_classes):
        problems.append("ann_classes must be a non-empty list without duplicates")
    monitored = {p.value for p in MONITORED_PROTOCOLS}
    for proto, params in sorted(cfg.one_class.items()):
        if proto not in monitored:
            problems.append(f"one_class entry for unknown protocol {proto!r}")
            continue
        gamma = params.get("gamma")
        nu = params.get("nu")
        t = params.get("t")
        if not (isinstance(gamma, (int, float)) and gamma > 0):
            problems.append(f"one_class[{proto}].gamma must be > 0, got {gamma!r}")
        if not (isinstance(nu, (int, float)) and 0 < nu <= 1):
            problems.append(f"one_class[{proto}].nu must be in (0, 1], got {nu!r}")
        if not (isinstance(t, (int, float)) and 0 <= t <= 1):
            problems.append(f"one_class[{proto}].t must be in [0, 1], got {t!r}")
    if not (isinstance(cfg.comp_enc.get("gamma"), (int, float)) and cfg.comp_enc["gamma"] > 0):
        problems.append(f"comp_enc.gamma must be > 0, got {cfg.comp_enc.get('gamma')!r}")
    if not (isinstance(cfg.comp_enc.get("c"), (int, float)) and cfg.comp_enc["c"] > 0):
        problems.append(f"comp_enc.c must be > 0, got {cfg.comp_enc.get('c')!r}")
    for name, value in sorted(cfg.comp_enc_sourcing.items()):
        if name not in COMP_ENC_SOURCING_DEFAULTS:
            problems.append(f"comp_enc_sourcing has unknown field {name!r}")
        elif not isinstance(value, int) or value < 0:
            problems.append(f"comp_enc_sourcing.{name} must be a non-negative integer, got {value!r}")
    for name in ("epochs", "batch_size", "patience"):
        value = cfg.ann.get(name)
        if not isinstance(value, int) or value <= 0:
            problems.append(f"ann.{name} must be a positive integer, got {value!r}")
    for name in ("learning_rate", "momentum", "validation_fraction", "weight_decay"):
        value = cfg.ann.get(name)
        if not isinstance(value, (int, float)) or value < 0:
            problems.append(f"ann.{name} must be a non-negative number, got {value!r}")
    hidden = cfg.ann.get("hidden")
    if not (isinstance(hidden, list) and hidden and all(isinstance(w, int) and w > 0 for w in hidden)):
        problems.append(f"ann.hidden must be a list of positive integers, got {hidden!r}")
    if cfg.policy_default not in ("anomalous", "benign"):
        problems.append(f"policy_default must be 'anomalous' or 'benign', got {cfg.policy_default!r}")
    for proto, rules in sorted(cfg.policy.items()):
        if proto not in monitored:
            problems.append(f"policy entry for unknown protocol {proto!r}")
        if not isinstance(rules, dict):
            problems.append(f"policy[{proto}] must map kind to verdict, got {rules!r}")
            continue
        for kind, verdict in sorted(rules.items()):
            if kind not in KINDS and kind != "*":
                problems.append(f"policy[{proto}] has unknown kind {kind!r}")
            if verdict not in ("anomalous", "benign"):
                problems.append(f"policy[{proto}][{kind}] must be 'anomalous' or 'benign', got {verdict!r}")
    for name in ("min_support_fraction", "min_foreign_fraction"):
        value = getattr(cfg, name)
        if not isinstance(value, (int, float)) or not 0 <= value <= 1:
            problems.append(f"{name} must be in [0, 1], got {value!r}")
    if not isinstance(cfg.min_support_count, int) or cfg.min_support_count < 1:
        problems.append(f"min_support_count must be a positive integer, got {cfg.min_support_count!r}")
    for name, value in sorted(cfg.paths.items()):
        if not isinstance(value, str):
            problems.append(f"paths.{name} must be a string, got {value!r}")
    return problems


def from_dict(doc: dict) -> RunConfig:
    """Build a config from a parsed JSON document, validating everything."""
    problems = [f"unknown configuration key {key!r}" for key in sorted(set(doc) - _KNOWN_KEYS)]
    cfg = RunConfig()
    for key in _KNOWN_KEYS & set(doc):
        value = doc[key]
        if key in ("one_class", "comp_enc", "comp_enc_sourcing", "ann", "policy", "paths"):
            merged = copy.deepcopy(getattr(cfg, key))
            if isinstance(value, dict):
                for subkey, subval in value.items():
                    if isinstance(merged.get(subkey), dict) and isinstance(subval, dict):
                        merged[subkey] = {**merged[subkey], **subval}
                    else:
                        merged[subkey] = subval
            else:
                problems.append(f"{key} must be an object, got {value!r}")
                continue
            setattr(cfg, key, merged)
        else:
            setattr(cfg, key, value)
    problems.extend(validate(cfg))
    if problems:
        raise ConfigError(problems)
    return cfg


def load_config(path: Optional[str]) -> RunConfig:
    """Config from a JSON file; defaults when no path is given."""
    if path is None:
        return RunConfig()
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError([f"cannot read config file {path}: {exc}"]) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError([f"config file is not valid JSON: {exc}"]) from exc
    if not isinstance(doc, dict):
        raise ConfigError(["config file must contain a JSON object"])
    return from_dict(doc)


def policy_verdict(cfg: RunConfig, protocol: Optional[str], kind: str) -> str:
    """Look up the policy table with wildcard and default fallback."""
    rules = cfg.policy.get(protocol or "", {})
    if kind in rules:
        return rules[kind]
    if "*" in rules:
        return rules["*"]
    return cfg.policy_default
