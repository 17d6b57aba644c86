"""Model-driven lossless coding of coloured graphs and typed trees.

The generative model is known to both ends; the coder spends close to
-log2 P(x) bits per realization.  Graphs are coded as n colour symbols
followed by all n(n-1)/2 pair indicators in lexicographic order; trees as
the root type followed by per-vertex child configurations in preorder.
"""
from __future__ import annotations

import struct
from typing import Optional, Tuple

import numpy as np

from ..graphs import ColouredGraph
from ..measures import ProbVector
from ..trees import OffspringKernel, TypedTree, _to_preorder
from . import _kernels
from .rangecoder import (
    TOTAL,
    BitString,
    ModelMismatch,
    RangeDecoder,
    RangeEncoder,
    TruncatedStream,
    cumulative,
    decode_symbol,
    encode_symbol,
    ideal_bits,
    quantize,
)

__all__ = [
    "BitString", "ModelMismatch", "TruncatedStream",
    "encode_graph", "decode_graph", "encode_tree", "decode_tree",
    "write_container", "read_container",
    "graph_model_token", "tree_model_token",
    "quantize", "ideal_bits",
]

# switch to the compiled pair loop above this many pair symbols
KERNEL_THRESHOLD = 32768


# ---------------------------------------------------------------------------
# pair-stream plumbing
# ---------------------------------------------------------------------------

def _pair_offsets(n: int) -> np.ndarray:
    """offsets[u] = linear index of pair (u, u+1); offsets[n-1] = total."""
    u = np.arange(n, dtype=np.int64)
    return u * n - u * (u + 1) // 2


def _pair_classes(colours: np.ndarray, k: int) -> np.ndarray:
    n = colours.shape[0]
    if k * k > 256:
        raise ValueError("alphabet too large for the pair coder")
    offsets = _pair_offsets(n)
    cls = np.empty(n * (n - 1) // 2, dtype=np.uint8)
    for u in range(n - 1):
        cls[offsets[u]:offsets[u + 1]] = colours[u] * k + colours[u + 1:]
    return cls


def _edge_bits(x: ColouredGraph) -> np.ndarray:
    n = x.n
    bits = np.zeros(n * (n - 1) // 2, dtype=np.uint8)
    if x.edge_count:
        offsets = _pair_offsets(n)
        idx = offsets[x.edges[:, 0]] + (x.edges[:, 1] - x.edges[:, 0] - 1)
        bits[idx] = 1
    return bits


def _bits_to_edges(bits: np.ndarray, n: int) -> np.ndarray:
    idx = np.nonzero(bits)[0].astype(np.int64)
    if idx.size == 0:
        return np.empty((0, 2), dtype=np.int64)
    offsets = _pair_offsets(n)
    u = np.searchsorted(offsets, idx, side="right") - 1
    v = idx - offsets[u] + u + 1
    return np.column_stack((u, v))


def _edge_freqs(model, n: int) -> np.ndarray:
    """Per-class quantized frequency of the 'edge present' symbol."""
    p = model.edge_probability(n)
    k = p.shape[0]
    f1 = np.empty(k * k, dtype=np.uint64)
    for a in range(k):
        for b in range(k):
            f1[a * k + b] = quantize([1.0 - p[a, b], p[a, b]])[1]
    return f1


def _pair_byte_bound(cls: np.ndarray, bits: np.ndarray,
                     f1: np.ndarray) -> int:
    """Upper bound on the bytes the pair stream can emit (exact per-symbol
    costs plus the bounded truncation loss)."""
    nclasses = f1.shape[0]
    n_all = np.bincount(cls, minlength=nclasses).astype(float)
    n_one = np.bincount(cls[bits == 1], minlength=nclasses).astype(float)
    n_zero = n_all - n_one
    frac1 = np.maximum(f1.astype(float) / float(TOTAL), 2.0 ** -33)
    frac0 = np.maximum(1.0 - f1.astype(float) / float(TOTAL), 2.0 ** -33)
    bits_bound = float(np.sum(-n_one * np.log2(frac1)
                              - n_zero * np.log2(frac0)))
    bits_bound += cls.shape[0] * 2.0 ** -23 + 128
    return int(bits_bound // 8) + 64


def _encode_pairs_python(enc: RangeEncoder, cls: np.ndarray,
                         bits: np.ndarray, f1: np.ndarray) -> None:
    for i in range(cls.shape[0]):
        fv = int(f1[cls[i]])
        if fv == 0 or fv == TOTAL:
            continue
        if bits[i]:
            enc.encode(TOTAL - fv, fv)
        else:
            enc.encode(0, TOTAL - fv)


def _decode_pairs_python(dec: RangeDecoder, cls: np.ndarray,
                         f1: np.ndarray) -> np.ndarray:
    out = np.zeros(cls.shape[0], dtype=np.uint8)
    for i in range(cls.shape[0]):
        fv = int(f1[cls[i]])
        if fv == 0:
            continue
        if fv == TOTAL:
            out[i] = 1
            continue
        f0 = TOTAL - fv
        target = dec.decode_target()
        if target < f0:
            dec.consume(0, f0)
        else:
            out[i] = 1
            dec.consume(f0, fv)
    return out


# ---------------------------------------------------------------------------
# graphs
# ---------------------------------------------------------------------------

def encode_graph(x: ColouredGraph, model,
                 use_kernel: Optional[bool] = None) -> BitString:
    """Losslessly encode a coloured graph under its generative model."""
    n = x.n
    k = len(x.alphabet)
    mu = model.colour_law(n)
    mu_freqs = quantize(mu)
    mu_cum = cumulative(mu_freqs)
    f1 = _edge_freqs(model, n)
    cls = _pair_classes(x.colours, k)
    bits = _edge_bits(x)

    if np.any((bits == 1) & (f1[cls] == 0)) \
            or np.any((bits == 0) & (f1[cls] == TOTAL)):
        raise ModelMismatch("graph realizes a probability-zero pair event")

    enc = RangeEncoder()
    for c in x.colours:
        encode_symbol(enc, mu_cum, mu_freqs, int(c))

    if use_kernel is None:
        use_kernel = cls.shape[0] >= KERNEL_THRESHOLD
    if use_kernel:
        buf, nout, low, range_ = enc.export_state(
            _pair_byte_bound(cls, bits, f1))
        nout, low, range_ = _kernels.encode_pairs(
            cls, bits, f1, buf, np.int64(nout),
            np.uint64(low), np.uint64(range_))
        enc.import_state(buf, int(nout), int(low), int(range_))
    else:
        _encode_pairs_python(enc, cls, bits, f1)
    return enc.finish()


def decode_graph(bits: BitString, model, n: int,
                 use_kernel: Optional[bool] = None) -> ColouredGraph:
    alphabet = model.alphabet
    k = len(alphabet)
    mu = model.colour_law(n)
    mu_freqs = quantize(mu)
    mu_cum = cumulative(mu_freqs)
    f1 = _edge_freqs(model, n)
    npairs = n * (n - 1) // 2

    dec = RangeDecoder(bits)
    colours = np.empty(n, dtype=np.int64)
    for i in range(n):
        colours[i] = decode_symbol(dec, mu_cum, mu_freqs)
    cls = _pair_classes(colours, k)

    if use_kernel is None:
        use_kernel = npairs >= KERNEL_THRESHOLD
    if use_kernel:
        stream, ptr, off, range_ = dec.export_state()
        out = np.zeros(npairs, dtype=np.uint8)
        ptr, off, range_ = _kernels.decode_pairs(
            cls, f1, stream, np.int64(ptr),
            np.uint64(off), np.uint64(range_), out)
        dec.import_state(int(ptr), int(off), int(range_))
    else:
        out = _decode_pairs_python(dec, cls, f1)
    return ColouredGraph(alphabet, colours, _bits_to_edges(out, n))


# ---------------------------------------------------------------------------
# trees
# ---------------------------------------------------------------------------

def _config_tables(Q: OffspringKernel) -> Tuple[list, list]:
    freqs, cums = [], []
    for law in Q.laws:
        f = quantize([p for _, p in law])
        freqs.append(f)
        cums.append(cumulative(f))
    return freqs, cums


def encode_tree(t: TypedTree, mu: ProbVector, Q: OffspringKernel) -> BitString:
    """Encode root type then per-vertex configurations in preorder."""
    mu_freqs = quantize(mu.weights)
    mu_cum = cumulative(mu_freqs)
    cfg_freqs, cfg_cums = _config_tables(Q)
    cfg_index = [{c: i for i, c in enumerate(Q._configs[a])}
                 for a in range(len(Q.alphabet))]

    enc = RangeEncoder()
    encode_symbol(enc, mu_cum, mu_freqs, int(t.types[0]))
    for v in range(len(t)):
        a = int(t.types[v])
        idx = cfg_index[a].get(t.config(v))
        if idx is None:
            raise ModelMismatch(
                f"configuration {t.config(v)} impossible for type {a}")
        encode_symbol(enc, cfg_cums[a], cfg_freqs[a], idx)
    return enc.finish()


def decode_tree(bits: BitString, mu: ProbVector, Q: OffspringKernel,
                max_vertices: int = 100_000) -> TypedTree:
    """Self-terminating inverse of encode_tree."""
    mu_freqs = quantize(mu.weights)
    mu_cum = cumulative(mu_freqs)
    cfg_freqs, cfg_cums = _config_tables(Q)

    dec = RangeDecoder(bits)
    root_type = decode_symbol(dec, mu_cum, mu_freqs)
    types = [root_type]
    children: list = [[]]
    stack = [0]
    while stack:
        v = stack.pop()  # pop order is exactly preorder
        a = types[v]
        idx = decode_symbol(dec, cfg_cums[a], cfg_freqs[a])
        config = Q._configs[a][idx]
        kids = []
        for ct in config:
            if len(types) >= max_vertices:
                raise TruncatedStream("tree decode exceeded the vertex limit")
            w = len(types)
            types.append(int(ct))
            children.append([])
            kids.append(w)
        children[v] = kids
        stack.extend(reversed(kids))
    return _to_preorder(Q.alphabet, types, children)


# ---------------------------------------------------------------------------
# container format
# ---------------------------------------------------------------------------

MAGIC = b"AEPC1"


def fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for byte in data:
        h ^= byte
        h = (h * 0x100000001B3) & ((1 << 64) - 1)
    return h


def graph_model_token(model, n: int) -> bytes:
    mu = model.colour_law(n)
    p = model.edge_probability(n)
    parts = [f"graph n={n}",
             "mu " + " ".join(repr(float(m)) for m in mu),
             "p " + " ".join(repr(float(v)) for v in p.ravel())]
    return "\n".join(parts).encode()


def tree_model_token(mu: ProbVector, Q: OffspringKernel) -> bytes:
    return ("tree\nmu " + " ".join(repr(float(m)) for m in mu.weights)
            + "\n" + Q.to_text()).encode()


def write_container(bits: BitString, model_token: bytes) -> bytes:
    header = MAGIC + struct.pack(">QQ", fnv1a64(model_token), bits.nbits)
    return header + bits.payload


def read_container(data: bytes, model_token: bytes) -> BitString:
    if len(data) < len(MAGIC) + 16:
        raise TruncatedStream("container shorter than its header")
    if data[:len(MAGIC)] != MAGIC:
        raise ValueError("bad container magic")
    model_hash, nbits = struct.unpack(
        ">QQ", data[len(MAGIC):len(MAGIC) + 16])
    if model_hash != fnv1a64(model_token):
        raise ModelMismatch("container was produced under a different model")
    return BitString(nbits, data[len(MAGIC) + 16:])
