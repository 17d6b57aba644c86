"""64-bit range coder with 32-bit probability quanta and byte renormalization.

The encoder keeps a 64-bit low/range window and emits bytes with full carry
propagation.  Renormalization keeps range >= 2^56, so the multiplier
range >> 32 always carries at least 24 bits of precision and the truncation
loss is below 2^-24 bits per symbol.  Frequencies are integer quanta summing
to 2^32; a frequency equal to the full 2^32 marks a deterministic symbol and
is a strict no-op on both sides, so deterministic models cost zero payload
bits beyond the flush.
"""
from __future__ import annotations

import math
from typing import List, Sequence

import numpy as np

TOTAL = 1 << 32          # probability quanta per distribution
BOTTOM = 1 << 56         # renormalization bound: range stays >= BOTTOM
MASK64 = (1 << 64) - 1


class ModelMismatch(ValueError):
    """The model assigns probability zero to an observed symbol, or a
    container was produced under a different model."""


class TruncatedStream(ValueError):
    """Fewer payload bytes than the recorded bit count requires."""


class BitString:
    """An exact-length bit payload, packed MSB-first."""

    def __init__(self, nbits: int, payload: bytes):
        if nbits < 0:
            raise ValueError("negative bit count")
        if len(payload) < (nbits + 7) // 8:
            raise TruncatedStream(
                f"{nbits} bits need {(nbits + 7) // 8} bytes, got {len(payload)}")
        self.nbits = int(nbits)
        self.payload = bytes(payload[:(nbits + 7) // 8])
        if self.nbits % 8 and self.payload:
            # trailing pad bits must be zero for bit-exact round-trips
            tail = self.payload[-1] & ((1 << (8 - self.nbits % 8)) - 1)
            if tail:
                raise ValueError("nonzero padding bits")

    @classmethod
    def from_int(cls, nbits: int, value: int) -> "BitString":
        nbytes = (nbits + 7) // 8
        return cls(nbits, (value << (8 * nbytes - nbits)).to_bytes(nbytes, "big"))

    def to_int(self) -> int:
        nbytes = (self.nbits + 7) // 8
        if nbytes == 0:
            return 0
        return int.from_bytes(self.payload, "big") >> (8 * nbytes - self.nbits)

    def byte_stream(self) -> np.ndarray:
        """The bit stream as zero-padded bytes, with headroom for the
        decoder's final pulls."""
        out = np.zeros(len(self.payload) + 40, dtype=np.uint8)
        out[:len(self.payload)] = np.frombuffer(self.payload, dtype=np.uint8)
        return out

    def __eq__(self, other) -> bool:
        return (isinstance(other, BitString) and self.nbits == other.nbits
                and self.payload == other.payload)

    def __repr__(self) -> str:
        return f"BitString(nbits={self.nbits})"


def quantize(probs: Sequence[float]) -> np.ndarray:
    """Integer frequencies summing to 2^32, >= 1 wherever the probability is
    positive (so every admissible symbol stays decodable)."""
    p = np.asarray(probs, dtype=float)
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ValueError("probabilities must be finite and nonnegative")
    total = p.sum()
    if total <= 0:
        raise ValueError("at least one positive probability required")
    p = p / total
    ideal = p * TOTAL
    base = [max(1, int(v)) if pv > 0 else 0 for v, pv in zip(ideal, p)]
    deficit = TOTAL - sum(base)
    if deficit > 0:
        order = np.argsort(-(ideal - np.array(base, dtype=float)))
        for i in order:
            if deficit == 0:
                break
            if p[i] > 0:
                base[i] += 1
                deficit -= 1
    elif deficit < 0:
        order = np.argsort(ideal - np.array(base, dtype=float))
        for i in order:
            if deficit == 0:
                break
            if p[i] > 0 and base[i] > 1:
                take = min(-deficit, base[i] - 1)
                base[i] -= take
                deficit += take
    if sum(base) != TOTAL:
        raise ValueError("quantization could not reach the exact total")
    return np.array(base, dtype=np.uint64)


def cumulative(freqs: np.ndarray) -> np.ndarray:
    """Exclusive prefix sums of a frequency table."""
    out = np.zeros(len(freqs), dtype=np.uint64)
    acc = 0
    for i, f in enumerate(freqs):
        out[i] = acc
        acc += int(f)
    return out


class RangeEncoder:
    """Single-use encoder; feed (cum, freq) pairs then call finish()."""

    def __init__(self):
        self.low = 0
        self.range = MASK64
        self.out: List[int] = []  # emitted bytes
        self._finished = False

    def encode(self, cum: int, freq: int) -> None:
        if self._finished:
            raise RuntimeError("encoder already finished")
        if freq == TOTAL:
            return  # deterministic symbol: zero information
        if freq <= 0:
            raise ModelMismatch("symbol has zero frequency")
        r = self.range >> 32
        self.low += r * int(cum)
        if self.low > MASK64:
            self.low &= MASK64
            i = len(self.out) - 1
            while self.out[i] == 0xFF:
                self.out[i] = 0
                i -= 1
            self.out[i] += 1
        self.range = r * int(freq)
        while self.range < BOTTOM:
            self.out.append(self.low >> 56)
            self.low = (self.low << 8) & MASK64
            self.range <<= 8

    def finish(self) -> BitString:
        """Close the interval with the fewest bits: the shallowest dyadic
        point inside [low, low + range)."""
        if self._finished:
            raise RuntimeError("encoder already finished")
        self._finished = True
        t = self.range.bit_length() - 1
        total_bits = 8 * len(self.out) + 64
        big_low = 0
        for b in self.out:
            big_low = (big_low << 8) | b
        big_low = (big_low << 64) | self.low
        v = ((big_low + (1 << t) - 1) >> t) << t
        nbits = total_bits - t
        return BitString.from_int(nbits, v >> t)

    # -- numba interop -------------------------------------------------------

    def export_state(self, extra_bytes: int):
        """State tuple plus a byte buffer with room for `extra_bytes` more,
        for handing off to a compiled kernel."""
        buf = np.zeros(len(self.out) + extra_bytes + 64, dtype=np.uint8)
        buf[:len(self.out)] = self.out
        return buf, len(self.out), self.low, self.range

    def import_state(self, buf: np.ndarray, nout: int, low: int,
                     range_: int) -> None:
        self.out = [int(b) for b in buf[:nout]]
        self.low = int(low)
        self.range = int(range_)


class RangeDecoder:
    """Single-use decoder over a BitString; two-phase symbol API."""

    def __init__(self, bits: BitString):
        self.stream = bits.byte_stream()
        self.ptr = 8
        off = 0
        for i in range(8):
            off = (off << 8) | int(self.stream[i])
        self.off = off
        self.range = MASK64
        self._r = 0

    def decode_target(self) -> int:
        self._r = self.range >> 32
        target = self.off // self._r
        return min(target, TOTAL - 1)

    def consume(self, cum: int, freq: int) -> None:
        if freq == TOTAL:
            raise RuntimeError("deterministic symbols are not decoded")
        self.off -= self._r * int(cum)
        self.range = self._r * int(freq)
        while self.range < BOTTOM:
            b = int(self.stream[self.ptr]) if self.ptr < len(self.stream) else 0
            self.ptr += 1
            self.off = (self.off << 8) | b
            self.range <<= 8

    # -- numba interop -------------------------------------------------------

    def export_state(self):
        return self.stream, self.ptr, self.off, self.range

    def import_state(self, ptr: int, off: int, range_: int) -> None:
        self.ptr = int(ptr)
        self.off = int(off)
        self.range = int(range_)


def encode_symbol(enc: RangeEncoder, cum: np.ndarray, freqs: np.ndarray,
                  index: int) -> None:
    if int(freqs[index]) == 0:
        raise ModelMismatch(f"symbol {index} has probability zero")
    enc.encode(int(cum[index]), int(freqs[index]))


def decode_symbol(dec: RangeDecoder, cum: np.ndarray,
                  freqs: np.ndarray) -> int:
    full = np.nonzero(freqs == TOTAL)[0]
    if full.size:
        return int(full[0])  # deterministic: nothing on the wire
    target = dec.decode_target()
    idx = int(np.searchsorted(cum.astype(np.int64), target, side="right")) - 1
    dec.consume(int(cum[idx]), int(freqs[idx]))
    return idx


def ideal_bits(log_prob_nats: float) -> float:
    """-log2 of a probability given in nats."""
    return -log_prob_nats / math.log(2.0)
