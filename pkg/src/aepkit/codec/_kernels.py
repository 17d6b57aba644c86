"""Compiled inner loops for long Bernoulli pair streams.

Bit-for-bit identical to the pure-Python coder in rangecoder.py — the tests
compare the two paths on shared instances.  Only binary (edge / non-edge)
symbols pass through here; colours and trees stay in Python.
"""
from __future__ import annotations

import numpy as np
from numba import njit

_TOTAL = np.uint64(1) << np.uint64(32)
_BOTTOM = np.uint64(1) << np.uint64(56)
_SHIFT32 = np.uint64(32)
_SHIFT56 = np.uint64(56)
_SHIFT8 = np.uint64(8)
_FF = np.uint8(0xFF)


@njit(cache=True)
def encode_pairs(cls, bits, freq_one, out, nout, low, range_):
    """Encode bits[i] ~ Bernoulli with per-class frequency freq_one[cls[i]].

    Returns the updated (nout, low, range).  Deterministic classes
    (frequency 0 or 2^32) are skipped exactly like the Python path; the
    caller has already verified admissibility.
    """
    low = np.uint64(low)
    range_ = np.uint64(range_)
    zero = np.uint64(0)
    for i in range(cls.shape[0]):
        f1 = freq_one[cls[i]]
        if f1 == zero or f1 == _TOTAL:
            continue
        r = range_ >> _SHIFT32
        if bits[i]:
            add = r * (_TOTAL - f1)
            fr = f1
        else:
            add = zero
            fr = _TOTAL - f1
        new_low = low + add
        if new_low < low:  # carry out of the 64-bit window
            j = nout - 1
            while out[j] == _FF:
                out[j] = np.uint8(0)
                j -= 1
            out[j] += np.uint8(1)
        low = new_low
        range_ = r * fr
        while range_ < _BOTTOM:
            out[nout] = np.uint8(low >> _SHIFT56)
            nout += 1
            low = low << _SHIFT8
            range_ = range_ << _SHIFT8
    return nout, low, range_


@njit(cache=True)
def decode_pairs(cls, freq_one, stream, ptr, off, range_, out_bits):
    """Inverse of encode_pairs; fills out_bits and returns (ptr, off, range)."""
    off = np.uint64(off)
    range_ = np.uint64(range_)
    zero = np.uint64(0)
    for i in range(cls.shape[0]):
        f1 = freq_one[cls[i]]
        if f1 == zero:
            out_bits[i] = 0
            continue
        if f1 == _TOTAL:
            out_bits[i] = 1
            continue
        r = range_ >> _SHIFT32
        target = off // r
        if target >= _TOTAL:
            target = _TOTAL - np.uint64(1)
        f0 = _TOTAL - f1
        if target < f0:
            out_bits[i] = 0
            fr = f0
        else:
            out_bits[i] = 1
            off -= r * f0
            fr = f1
        range_ = r * fr
        while range_ < _BOTTOM:
            b = np.uint64(stream[ptr]) if ptr < stream.shape[0] else zero
            ptr += 1
            off = (off << _SHIFT8) | b
            range_ = range_ << _SHIFT8
    return ptr, off, range_
