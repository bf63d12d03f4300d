"""Replica payload codec.

A sub-piece is padded (PKCS#7, 8-byte blocks, never below 24 bytes),
encrypted with Blowfish-CBC under a per-replica 16-byte key, and
base64-encoded onto a single line. The first and last 16 characters of that
line act as markers that locate the payload inside arbitrary page text.
"""

from __future__ import annotations

import base64
import binascii
import hashlib
import random
import secrets
from dataclasses import dataclass

from cryptography.hazmat.decrepit.ciphers.algorithms import Blowfish
from cryptography.hazmat.primitives.ciphers import Cipher, modes

from .errors import (
    Base64FormatError,
    ChecksumMismatchError,
    DecryptionError,
    EmptyInputError,
    MarkerNotFoundError,
    TruncatedPayloadError,
)
from .fileset import DEFAULT_SUBPIECE_LENGTH, digest

KEY_BYTES = 16
BLOCK_BYTES = 8
MARKER_LEN = 16
# Smallest ciphertext whose base64 form holds two non-overlapping markers.
MIN_CIPHERTEXT = 24


@dataclass(frozen=True)
class ReplicaKey:
    key_bytes: bytes

    def __post_init__(self):
        if len(self.key_bytes) != KEY_BYTES:
            raise ValueError(f"replica keys are {KEY_BYTES} bytes, got {len(self.key_bytes)}")

    def hex(self) -> str:
        return self.key_bytes.hex()

    @classmethod
    def from_hex(cls, text: str) -> "ReplicaKey":
        return cls(bytes.fromhex(text))

    def __str__(self) -> str:
        return self.hex()


@dataclass(frozen=True)
class EncodedPayload:
    text: str
    plaintext_checksum: str

    @property
    def start_marker(self) -> str:
        return self.text[:MARKER_LEN]

    @property
    def end_marker(self) -> str:
        return self.text[-MARKER_LEN:]


def generate_key(rng: random.Random | None = None) -> ReplicaKey:
    """Fresh key from ``rng``, or from the OS CSPRNG when no rng is injected."""
    if rng is None:
        return ReplicaKey(secrets.token_bytes(KEY_BYTES))
    return ReplicaKey(rng.getrandbits(8 * KEY_BYTES).to_bytes(KEY_BYTES, "big"))


def _cipher(key: ReplicaKey) -> Cipher:
    iv = hashlib.sha256(key.key_bytes).digest()[:BLOCK_BYTES]
    return Cipher(Blowfish(key.key_bytes), modes.CBC(iv))


def encoded_length(n: int) -> int:
    """Characters of encoded text for an ``n``-byte sub-piece."""
    padded = max(MIN_CIPHERTEXT, (n // BLOCK_BYTES + 1) * BLOCK_BYTES)
    return 4 * -(-padded // 3)


def _pad(data: bytes) -> bytes:
    # PKCS#7 over 8-byte blocks, widened to MIN_CIPHERTEXT for tiny inputs.
    k = BLOCK_BYTES - len(data) % BLOCK_BYTES
    if len(data) + k < MIN_CIPHERTEXT:
        k = MIN_CIPHERTEXT - len(data)
    return data + bytes([k]) * k


def _unpad(padded: bytes) -> bytes:
    k = padded[-1]
    limit = MIN_CIPHERTEXT if len(padded) == MIN_CIPHERTEXT else BLOCK_BYTES
    if not 1 <= k <= limit or padded[-k:] != bytes([k]) * k:
        raise DecryptionError("bad padding after decryption")
    return padded[:-k]


def encode_payload(data: bytes, key: ReplicaKey, max_length: int | None = DEFAULT_SUBPIECE_LENGTH) -> EncodedPayload:
    if not data:
        raise EmptyInputError("cannot encode an empty sub-piece")
    if max_length is not None and len(data) > max_length:
        raise ValueError(f"sub-piece of {len(data)} bytes exceeds {max_length}")
    enc = _cipher(key).encryptor()
    ct = enc.update(_pad(data)) + enc.finalize()
    return EncodedPayload(base64.b64encode(ct).decode("ascii"), digest(data))


def decode_payload(text: str, key: ReplicaKey, expected_checksum: str) -> bytes:
    try:
        ct = base64.b64decode(text.encode("ascii"), validate=True)
    except (binascii.Error, ValueError, UnicodeEncodeError) as exc:
        raise Base64FormatError(str(exc)) from None
    if len(ct) < MIN_CIPHERTEXT or len(ct) % BLOCK_BYTES:
        raise DecryptionError(f"ciphertext length {len(ct)} is not a valid block count")
    dec = _cipher(key).decryptor()
    data = _unpad(dec.update(ct) + dec.finalize())
    if digest(data) != expected_checksum:
        raise ChecksumMismatchError("decoded sub-piece does not match the expected checksum")
    return data


def wrap_page(payload: EncodedPayload, notice: str, tracking_url: str = "") -> str:
    if not notice:
        raise ValueError("notice must be non-empty")
    parts = [notice]
    if tracking_url:
        parts.append(tracking_url)
    parts.append(payload.text)
    return "\n\n".join(parts) + "\n"


def extract_payload(page: str, start_marker: str, end_marker: str) -> list[str]:
    """Every candidate payload span in ``page``, in order of appearance.

    Each span runs from an occurrence of ``start_marker`` through the end of
    the next ``end_marker`` that does not overlap it. Callers decode the
    candidates in turn and let the checksum pick the real one.
    """
    if len(start_marker) != MARKER_LEN or len(end_marker) != MARKER_LEN:
        raise ValueError(f"markers must be {MARKER_LEN} characters")
    candidates = []
    pos = page.find(start_marker)
    if pos < 0:
        raise MarkerNotFoundError("start marker not present in page")
    while pos >= 0:
        end = page.find(end_marker, pos + MARKER_LEN)
        if end >= 0:
            candidates.append(page[pos:end + MARKER_LEN])
        pos = page.find(start_marker, pos + 1)
    if not candidates:
        raise TruncatedPayloadError("end marker not present after start marker")
    return candidates


def recover(page: str, key: ReplicaKey, checksum: str, start_marker: str, end_marker: str) -> bytes:
    """Extract and decode, trying each candidate span; re-raises the last failure."""
    last: Exception | None = None
    for candidate in extract_payload(page, start_marker, end_marker):
        try:
            return decode_payload(candidate, key, checksum)
        except (Base64FormatError, DecryptionError, ChecksumMismatchError) as exc:
            last = exc
    assert last is not None
    raise last
