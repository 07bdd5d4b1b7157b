"""Domain types shared across the pipeline."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional

import numpy as np


class ProtocolLabel(str, Enum):
    DHCP = "DHCP"
    DNS = "DNS"
    NTP = "NTP"
    HTTP = "HTTP"
    SMB = "SMB"
    KRB = "KRB"
    SFTP = "SFTP"
    SSH = "SSH"
    SSL = "SSL"
    UNLABELED = "Unlabeled"

    def __str__(self) -> str:  # keep JSON/report output compact
        return self.value


# Cleartext protocols can be purged of compressed/encrypted payloads;
# encrypted protocols legitimately carry high-entropy payloads.
CLEARTEXT_PROTOCOLS = frozenset(
    {ProtocolLabel.DHCP, ProtocolLabel.DNS, ProtocolLabel.NTP, ProtocolLabel.HTTP, ProtocolLabel.SMB}
)
ENCRYPTED_PROTOCOLS = frozenset(
    {ProtocolLabel.KRB, ProtocolLabel.SFTP, ProtocolLabel.SSH, ProtocolLabel.SSL}
)
MONITORED_PROTOCOLS = CLEARTEXT_PROTOCOLS | ENCRYPTED_PROTOCOLS

# Fixed class order for the packet classifier; index = output neuron.
ANN_CLASSES = (
    ProtocolLabel.DHCP,
    ProtocolLabel.DNS,
    ProtocolLabel.NTP,
    ProtocolLabel.HTTP,
    ProtocolLabel.SMB,
    ProtocolLabel.KRB,
)

# Aliases some analyzers emit alongside or instead of the canonical name.
LABEL_ALIASES = {
    "NTLM": ProtocolLabel.SMB,
    "GSSAPI": ProtocolLabel.SMB,
    "DCE_RPC": ProtocolLabel.SMB,
    "SMB2": ProtocolLabel.SMB,
    "TLS": ProtocolLabel.SSL,
}


def parse_label(name: str) -> Optional[ProtocolLabel]:
    """Map an analyzer/port label string to a monitored protocol, or None."""
    if name in LABEL_ALIASES:
        return LABEL_ALIASES[name]
    try:
        label = ProtocolLabel(name)
    except ValueError:
        return None
    return label if label in MONITORED_PROTOCOLS else None


@dataclass(frozen=True, order=True)
class ConnectionKey:
    """Directional flow key: the two directions of a flow are distinct."""

    transport: str  # "tcp" | "udp"
    src_ip: str
    src_port: int
    dst_ip: str
    dst_port: int

    def as_string(self) -> str:
        return f"{self.transport}|{self.src_ip}|{self.src_port}|{self.dst_ip}|{self.dst_port}"

    @classmethod
    def from_string(cls, text: str) -> "ConnectionKey":
        transport, src_ip, src_port, dst_ip, dst_port = text.split("|")
        return cls(transport, src_ip, int(src_port), dst_ip, int(dst_port))


@dataclass
class PacketRecord:
    """One TCP/UDP packet as read from a capture."""

    index: int  # ordinal within the capture file, 0-based over all packets
    timestamp: float
    key: ConnectionKey
    payload: bytes
    raw_labels: List[str] = field(default_factory=list)


@dataclass
class Bitstream:
    """Fixed-length payload extract plus its big-endian bit expansion."""

    data: bytes
    key: ConnectionKey
    light_label: List[str]
    index: int = -1
    timestamp: float = 0.0

    @property
    def bits(self) -> np.ndarray:
        return np.unpackbits(np.frombuffer(self.data, dtype=np.uint8))

    def hex(self) -> str:
        return self.data.hex()


@dataclass
class Connection:
    """Ordered packets sharing a flow key; the unit of alerting."""

    key: ConnectionKey
    chunk: int
    bitstreams: List[Bitstream]
    capture: str = ""

    @property
    def first_timestamp(self) -> float:
        return self.bitstreams[0].timestamp if self.bitstreams else 0.0

    @property
    def last_timestamp(self) -> float:
        return self.bitstreams[-1].timestamp if self.bitstreams else 0.0

    def id_string(self) -> str:
        return f"{self.key.as_string()}#{self.chunk}"
