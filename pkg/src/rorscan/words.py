"""256-bit words, 20-byte addresses, selectors and storage-slot derivation."""

from __future__ import annotations

from eth_hash.auto import keccak

WORD_BITS = 256
WORD_MOD = 1 << WORD_BITS
WORD_MAX = WORD_MOD - 1
ADDRESS_MASK = (1 << 160) - 1

ZERO_ADDRESS = "0x" + "00" * 20
# Stand-in for an attacker-controlled EOA during input mutation.
ATTACKER_ADDRESS = "0x" + "a77ac4e2" + "00" * 16


def to_word(value: int) -> int:
    return value % WORD_MOD


def parse_word(raw: int | str) -> int:
    """Accept an int or a 0x-hex / decimal string and return a 256-bit word."""
    if isinstance(raw, bool):
        return int(raw)
    if isinstance(raw, int):
        if raw < 0 or raw > WORD_MAX:
            raise ValueError(f"word out of range: {raw}")
        return raw
    if isinstance(raw, str):
        text = raw.strip().lower()
        value = int(text, 16) if text.startswith("0x") else int(text, 10)
        if value < 0 or value > WORD_MAX:
            raise ValueError(f"word out of range: {raw}")
        return value
    raise TypeError(f"cannot interpret {raw!r} as a word")


def word_hex(value: int) -> str:
    return "0x%064x" % value


def is_address(text: object) -> bool:
    if not isinstance(text, str) or len(text) != 42 or not text[:2].lower() == "0x":
        return False
    try:
        int(text[2:], 16)
    except ValueError:
        return False
    return True


def to_address(raw: int | str) -> str:
    """Canonical lowercase 0x-prefixed 20-byte address."""
    if isinstance(raw, int):
        return "0x%040x" % (raw & ADDRESS_MASK)
    if not is_address(raw):
        raise ValueError(f"not a 20-byte address: {raw!r}")
    return raw.lower()


def address_word(address: str) -> int:
    return int(to_address(address)[2:], 16)


def keccak256(data: bytes) -> bytes:
    return keccak(data)


def selector_of(signature: str) -> str:
    """4-byte function selector of a canonical signature, e.g. ``getFunds()``."""
    return "0x" + keccak(signature.encode("ascii"))[:4].hex()


def map_slot(base_slot: int, key: int) -> int:
    """Solidity layout for ``mapping`` entries: keccak(pad(key) ++ pad(slot))."""
    return int.from_bytes(
        keccak(key.to_bytes(32, "big") + base_slot.to_bytes(32, "big")), "big"
    )


def tx_hash_of(*parts: object) -> str:
    """Deterministic 32-byte id for transactions synthesized by the fuzzer."""
    blob = "|".join(str(p) for p in parts).encode()
    return "0x" + keccak(blob).hex()
