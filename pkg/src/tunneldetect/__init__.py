"""Protocol-tunneling detector.

Pipeline: capture ingest -> bitstream extraction -> randomness features ->
sanitized model training -> connection-level detection and evaluation.
"""

__version__ = "0.1.0"

from .types import (  # noqa: F401
    ANN_CLASSES,
    CLEARTEXT_PROTOCOLS,
    ENCRYPTED_PROTOCOLS,
    MONITORED_PROTOCOLS,
    Bitstream,
    Connection,
    ConnectionKey,
    PacketRecord,
    ProtocolLabel,
)
from .features import SequentialFeatures, featurize, featurize_batch  # noqa: F401
