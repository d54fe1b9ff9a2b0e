"""Privacy-preserving match reporting over a line-oriented TCP protocol.

Three parties: a coordinator (`Coordinator`) that relays and matches,
provider agents (`ProviderAgent`) that hold OPRF keys and token
indexes, and reporting clients (`client_report`) that submit blinded
hashes.  No party other than the reporting client ever handles a raw
perceptual hash, and the client learns only how many providers were
contacted.
"""

from .client import (
    ConnectionFailedError,
    ProtocolError,
    ReportReceipt,
    client_report,
)
from .coordinator import Coordinator
from .provider import ProviderAgent, ProviderError
from .wire import (
    MalformedMessageError,
    OversizeMessageError,
    WireMessage,
    decode_message,
    encode_message,
    read_message,
)

__all__ = [
    "ConnectionFailedError",
    "Coordinator",
    "MalformedMessageError",
    "OversizeMessageError",
    "ProtocolError",
    "ProviderAgent",
    "ProviderError",
    "ReportReceipt",
    "WireMessage",
    "client_report",
    "decode_message",
    "encode_message",
    "read_message",
]
