"""Private set intersection over OPRF tokens.

Submodules: group (the prime-order group abstraction and the tiny test
group), ristretto (the real ristretto255 instantiation), core (tokens,
indexes, and the protocol steps).
"""

from .core import (
    ClientSet,
    IndexFormatError,
    MixedAlgorithmsError,
    OprfKey,
    Token,
    TokenIndex,
    blind,
    build_index,
    evaluate,
    intersect,
    load_key,
    run_psi_local,
    save_key,
    token_for,
    unblind_finalize,
)
from .group import (
    CountingGroup,
    GroupOps,
    InvalidElementError,
    TestGroup,
    ZeroScalarError,
    default_group,
    get_group,
)

__all__ = [
    "ClientSet",
    "CountingGroup",
    "GroupOps",
    "IndexFormatError",
    "InvalidElementError",
    "MixedAlgorithmsError",
    "OprfKey",
    "TestGroup",
    "Token",
    "TokenIndex",
    "ZeroScalarError",
    "blind",
    "build_index",
    "default_group",
    "evaluate",
    "get_group",
    "intersect",
    "load_key",
    "run_psi_local",
    "save_key",
    "token_for",
    "unblind_finalize",
]
