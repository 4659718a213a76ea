"""Single-key bit encryption built from a keyed pseudorandom function.

A ciphertext is ``(r, PRF(key, r) xor m)`` for a fresh 64-bit nonce ``r``.
The default PRF is SipHash-2-4 keyed by the base key; the low output bit is
used as the pad.  Key bit-strings shorter than the 128-bit SipHash key are
zero-padded on the right, then split into ``k0 || k1`` as 16 bytes with the
usual little-endian word order.  The nonce is hashed as an 8-byte
little-endian message.

Any object with a ``bits(key_values, key_width, nonces)`` method can stand in
for the PRF; :class:`TablePRF` is a lazily sampled truly random function used
for exhaustive tests at tiny key widths.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .errors import InvalidInput, InvalidParameter

MASK64 = (1 << 64) - 1
NONCE_BITS = 64

_C0 = 0x736F6D6570736575
_C1 = 0x646F72616E646F6D
_C2 = 0x6C7967656E657261
_C3 = 0x7465646279746573


def _rotl(x: int, b: int) -> int:
    return ((x << b) | (x >> (64 - b))) & MASK64


def _sipround(v0, v1, v2, v3):
    v0 = (v0 + v1) & MASK64
    v1 = _rotl(v1, 13) ^ v0
    v0 = _rotl(v0, 32)
    v2 = (v2 + v3) & MASK64
    v3 = _rotl(v3, 16) ^ v2
    v0 = (v0 + v3) & MASK64
    v3 = _rotl(v3, 21) ^ v0
    v2 = (v2 + v1) & MASK64
    v1 = _rotl(v1, 17) ^ v2
    v2 = _rotl(v2, 32)
    return v0, v1, v2, v3


def siphash24(k0: int, k1: int, data: bytes) -> int:
    """SipHash-2-4 of ``data`` under the 128-bit key ``(k0, k1)``; returns a 64-bit int."""
    v0 = k0 ^ _C0
    v1 = k1 ^ _C1
    v2 = k0 ^ _C2
    v3 = k1 ^ _C3
    n = len(data)
    full = n - n % 8
    for off in range(0, full, 8):
        m = int.from_bytes(data[off:off + 8], "little")
        v3 ^= m
        v0, v1, v2, v3 = _sipround(v0, v1, v2, v3)
        v0, v1, v2, v3 = _sipround(v0, v1, v2, v3)
        v0 ^= m
    last = ((n & 0xFF) << 56) | int.from_bytes(data[full:], "little")
    v3 ^= last
    v0, v1, v2, v3 = _sipround(v0, v1, v2, v3)
    v0, v1, v2, v3 = _sipround(v0, v1, v2, v3)
    v0 ^= last
    v2 ^= 0xFF
    for _ in range(4):
        v0, v1, v2, v3 = _sipround(v0, v1, v2, v3)
    return v0 ^ v1 ^ v2 ^ v3


def split_key(value: int, width: int) -> tuple[int, int]:
    """Right-pad a ``width``-bit key to 128 bits and return the SipHash words ``(k0, k1)``."""
    if not 0 <= width <= 128:
        raise InvalidParameter(f"key width {width} exceeds the 128-bit PRF key")
    raw = (value << (128 - width)).to_bytes(16, "big")
    return int.from_bytes(raw[:8], "little"), int.from_bytes(raw[8:], "little")


@numba.njit(cache=True)
def _rotl_u64(x, b):
    return (x << np.uint64(b)) | (x >> np.uint64(64 - b))


@numba.njit(cache=True)
def _siphash24_words(k0, k1, msg, out):
    # One 8-byte message per lane; the length block is 8 << 56.
    c0 = np.uint64(_C0)
    c1 = np.uint64(_C1)
    c2 = np.uint64(_C2)
    c3 = np.uint64(_C3)
    tail = np.uint64(8) << np.uint64(56)
    ff = np.uint64(0xFF)
    for i in range(msg.shape[0]):
        v0 = k0[i] ^ c0
        v1 = k1[i] ^ c1
        v2 = k0[i] ^ c2
        v3 = k1[i] ^ c3
        for m in (msg[i], tail):
            v3 ^= m
            for _ in range(2):
                v0 += v1
                v1 = _rotl_u64(v1, 13) ^ v0
                v0 = _rotl_u64(v0, 32)
                v2 += v3
                v3 = _rotl_u64(v3, 16) ^ v2
                v0 += v3
                v3 = _rotl_u64(v3, 21) ^ v0
                v2 += v1
                v1 = _rotl_u64(v1, 17) ^ v2
                v2 = _rotl_u64(v2, 32)
            v0 ^= m
        v2 ^= ff
        for _ in range(4):
            v0 += v1
            v1 = _rotl_u64(v1, 13) ^ v0
            v0 = _rotl_u64(v0, 32)
            v2 += v3
            v3 = _rotl_u64(v3, 16) ^ v2
            v0 += v3
            v3 = _rotl_u64(v3, 21) ^ v0
            v2 += v1
            v1 = _rotl_u64(v1, 17) ^ v2
            v2 = _rotl_u64(v2, 32)
        out[i] = v0 ^ v1 ^ v2 ^ v3


def siphash24_u64(k0, k1, nonces) -> np.ndarray:
    """Vectorised SipHash-2-4 of 64-bit nonces; arguments broadcast against each other."""
    k0, k1, nonces = np.broadcast_arrays(
        np.asarray(k0, dtype=np.uint64),
        np.asarray(k1, dtype=np.uint64),
        np.asarray(nonces, dtype=np.uint64),
    )
    shape = nonces.shape
    flat = [np.ascontiguousarray(a).reshape(-1) for a in (k0, k1, nonces)]
    out = np.empty(flat[2].shape[0], dtype=np.uint64)
    _siphash24_words(flat[0], flat[1], flat[2], out)
    return out.reshape(shape)


def _key_words(key_values, key_width: int):
    if not 1 <= key_width <= 64:
        raise InvalidParameter(f"vectorised keys must be 1..64 bits wide, got {key_width}")
    v = np.asarray(key_values, dtype=np.uint64)
    hi = v << np.uint64(64 - key_width)
    return hi.byteswap(), np.zeros_like(hi)


class SipPRF:
    """SipHash-2-4 as a one-bit PRF keyed by a short bit-string."""

    name = "siphash24"

    def bits(self, key_values, key_width: int, nonces) -> np.ndarray:
        k0, k1 = _key_words(key_values, key_width)
        return (siphash24_u64(k0, k1, nonces) & np.uint64(1)).astype(np.uint8)


class TablePRF:
    """A truly random function, sampled lazily from a seeded generator.

    Meant for exhaustive tests over tiny key widths; it is slow and keeps
    every queried point in memory.
    """

    name = "table"

    def __init__(self, seed: int = 0):
        self._rng = np.random.default_rng(seed)
        self._table: dict[tuple[int, int, int], int] = {}

    def bits(self, key_values, key_width: int, nonces) -> np.ndarray:
        keys, nonces = np.broadcast_arrays(
            np.asarray(key_values, dtype=np.uint64), np.asarray(nonces, dtype=np.uint64)
        )
        out = np.empty(keys.shape, dtype=np.uint8)
        for idx in np.ndindex(keys.shape):
            point = (key_width, int(keys[idx]), int(nonces[idx]))
            bit = self._table.get(point)
            if bit is None:
                bit = int(self._rng.integers(2))
                self._table[point] = bit
            out[idx] = bit
        return out

    def __len__(self):
        return len(self._table)


DEFAULT_PRF = SipPRF()


@dataclass(frozen=True)
class BaseKey:
    """A base-scheme key: ``value`` holds ``width`` bits (most significant first)."""

    value: int
    width: int

    def __post_init__(self):
        if self.width < 1:
            raise InvalidParameter("base key width must be at least 1")
        if not 0 <= self.value < (1 << self.width):
            raise InvalidInput(f"key value does not fit in {self.width} bits")

    @property
    def bitstring(self) -> str:
        return format(self.value, f"0{self.width}b")


@dataclass(frozen=True)
class BitCiphertext:
    nonce: int
    masked_bit: int

    def hex(self) -> str:
        return f"{self.nonce:016x}{self.masked_bit:x}"


def random_nonces(rng: np.random.Generator, size=None):
    return rng.integers(0, 1 << 64, size=size, dtype=np.uint64, endpoint=False)


def gen_base(lambda_prime: int, rng: np.random.Generator) -> BaseKey:
    """Sample a uniform ``lambda_prime``-bit base key."""
    if lambda_prime < 1:
        raise InvalidParameter("lambda_prime must be >= 1")
    value = 0
    for chunk in rng.integers(0, 2, size=lambda_prime):
        value = (value << 1) | int(chunk)
    return BaseKey(value, lambda_prime)


def enc_base(key: BaseKey, m: int, rng: np.random.Generator, prf=DEFAULT_PRF) -> BitCiphertext:
    if m not in (0, 1):
        raise InvalidInput(f"message must be a bit, got {m!r}")
    nonce = int(random_nonces(rng))
    pad = int(prf.bits(key.value, key.width, nonce))
    return BitCiphertext(nonce, pad ^ m)


def dec_base(key: BaseKey, c: BitCiphertext, prf=DEFAULT_PRF) -> int:
    return int(prf.bits(key.value, key.width, c.nonce)) ^ c.masked_bit


def enc_bits(key_values, key_width: int, messages, rng: np.random.Generator, prf=DEFAULT_PRF):
    """Encrypt an array of bits; ``key_values`` broadcasts against ``messages``.

    Returns ``(nonces, masked)`` arrays with the shape of the broadcast.
    """
    messages = np.asarray(messages, dtype=np.uint8)
    keys, messages = np.broadcast_arrays(np.asarray(key_values, dtype=np.uint64), messages)
    nonces = random_nonces(rng, size=messages.shape)
    masked = prf.bits(keys, key_width, nonces) ^ messages
    return nonces, masked.astype(np.uint8)


def dec_bits(key_values, key_width: int, nonces, masked, prf=DEFAULT_PRF) -> np.ndarray:
    return prf.bits(key_values, key_width, nonces) ^ np.asarray(masked, dtype=np.uint8)
