"""Seedable deterministic random bit generator.

AES-256 in counter mode over a zero keystream, keyed by the SHA-256 of the
seed.  Production callers seed from the OS entropy pool; tests pass a fixed
integer so every draw is reproducible.
"""

from __future__ import annotations

import hashlib
import os

from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from .errors import EntropyUnavailable


class Drbg:
    """Deterministic byte stream; same seed, same bytes, forever."""

    def __init__(self, seed: int | bytes | None = None):
        if seed is None:
            try:
                seed = os.urandom(32)
            except NotImplementedError as exc:  # pragma: no cover
                raise EntropyUnavailable("no OS entropy source") from exc
        if isinstance(seed, int):
            seed = seed.to_bytes(max(1, (seed.bit_length() + 7) // 8), "big")
        key = hashlib.sha256(seed).digest()
        self._stream = Cipher(algorithms.AES(key), modes.CTR(b"\x00" * 16)).encryptor()

    def generate(self, n: int) -> bytes:
        """Return the next *n* bytes of the keystream."""
        if n < 0:
            raise ValueError("n must be non-negative")
        return self._stream.update(b"\x00" * n)
