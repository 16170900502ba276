"""ABI encoding of transaction calldata for IR functions."""

from __future__ import annotations

from eth_abi import decode, encode
from eth_abi.exceptions import DecodingError, EncodingError

from .errors import MalformedCalldataError, UnknownSelectorError
from .ir.model import ContractIR, FunctionDef
from .words import address_word, to_address


def _abi_value(ptype: str, value):
    if ptype == "address":
        return to_address(value)
    if ptype == "bool":
        return bool(value)
    if ptype == "bytes":
        if isinstance(value, str):
            return bytes.fromhex(value[2:] if value.startswith("0x") else value)
        return bytes(value)
    return int(value, 0) if isinstance(value, str) else int(value)


def encode_call(fn: FunctionDef, args) -> bytes:
    if len(args) != len(fn.params):
        raise MalformedCalldataError(f"{fn.name} expects {len(fn.params)} args, got {len(args)}")
    types = [p.type for p in fn.params]
    try:
        body = encode(types, [_abi_value(t, a) for t, a in zip(types, args)])
    except (EncodingError, ValueError, TypeError) as exc:
        raise MalformedCalldataError(f"cannot encode arguments of {fn.name}: {exc}") from None
    return bytes.fromhex(fn.selector[2:]) + body


def word_of(ptype: str, value) -> int:
    """Python value decoded from calldata -> VM word."""
    if ptype == "address":
        return address_word(value)
    if ptype == "bool":
        return int(bool(value))
    if ptype == "bytes":
        # bytes are opaque to the IR: only the first 32 bytes are kept
        return int.from_bytes(bytes(value)[:32].ljust(32, b"\0"), "big")
    return int(value)


def decode_args(fn: FunctionDef, data: bytes) -> tuple:
    try:
        return tuple(decode([p.type for p in fn.params], data[4:])) if fn.params else ()
    except (DecodingError, ValueError, TypeError) as exc:
        raise MalformedCalldataError(f"cannot decode calldata for {fn.name}: {exc}") from None


def decode_call(contract: ContractIR, data: bytes) -> tuple[FunctionDef, tuple]:
    """Resolve the selector and decode the arguments (Python values, not words)."""
    if len(data) < 4:
        fb = contract.fallback
        if fb is not None:
            return fb, ()
        raise MalformedCalldataError(f"calldata shorter than a selector for {contract.name}")
    selector = "0x" + data[:4].hex()
    fn = contract.lookup_selector(selector)
    if fn is None:
        raise UnknownSelectorError(f"{contract.name} has no public function with selector {selector}")
    return fn, decode_args(fn, data)

