"""Finite alphabets, probability vectors, finite measures and entropy functionals.

Everything here is immutable after construction and every operation is a pure
function, so values can be shared freely between workers.  All entropies are
computed and returned in nats; conversion to bits happens only at reporting
boundaries (see :mod:`aepkit.rates` and the CLI).
"""
from __future__ import annotations

import math
from typing import Iterable, Sequence, Union

import numpy as np

#: absolute tolerance for "sums to one" style normalization checks
NORMALIZATION_TOL = 1e-12


class ShapeMismatchError(ValueError):
    """Raised when two measures do not live on the same alphabet/shape."""


class Alphabet:
    """An ordered finite set of distinct symbol names."""

    __slots__ = ("symbols", "_index")

    def __init__(self, symbols: Iterable[str]):
        syms = tuple(str(s) for s in symbols)
        if len(syms) == 0:
            raise ValueError("alphabet must contain at least one symbol")
        if len(set(syms)) != len(syms):
            raise ValueError("alphabet symbols must be distinct")
        object.__setattr__(self, "symbols", syms)
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(syms)})

    def __setattr__(self, name, value):
        raise AttributeError("Alphabet is immutable")

    def __len__(self) -> int:
        return len(self.symbols)

    def index(self, symbol: str) -> int:
        return self._index[symbol]

    def __iter__(self):
        return iter(self.symbols)

    def __eq__(self, other) -> bool:
        return isinstance(other, Alphabet) and self.symbols == other.symbols

    def __hash__(self) -> int:
        return hash(self.symbols)

    def __repr__(self) -> str:
        return f"Alphabet({list(self.symbols)!r})"

    @classmethod
    def of_size(cls, k: int) -> "Alphabet":
        """Generic alphabet with symbols "0", "1", ..., str(k-1)."""
        return cls(str(i) for i in range(k))


def _as_readonly(arr) -> np.ndarray:
    out = np.array(arr, dtype=float)
    out.setflags(write=False)
    return out


class FiniteMeasure:
    """A nonnegative measure on an alphabet (no normalization imposed)."""

    __slots__ = ("alphabet", "weights")

    def __init__(self, alphabet: Alphabet, weights: Sequence[float]):
        w = _as_readonly(weights)
        if w.shape != (len(alphabet),):
            raise ShapeMismatchError(
                f"expected {len(alphabet)} weights, got shape {w.shape}")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        object.__setattr__(self, "alphabet", alphabet)
        object.__setattr__(self, "weights", w)

    def __setattr__(self, name, value):
        raise AttributeError(f"{type(self).__name__} is immutable")

    @property
    def values(self) -> np.ndarray:
        return self.weights

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.weights.tolist()!r})"


class ProbVector(FiniteMeasure):
    """A probability vector; optionally strictly positive (e.g. colour laws)."""

    __slots__ = ()

    def __init__(self, alphabet: Alphabet, weights: Sequence[float],
                 strict: bool = False):
        super().__init__(alphabet, weights)
        total = math.fsum(self.weights)
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise ValueError(f"weights sum to {total!r}, not 1")
        if strict and np.any(self.weights <= 0):
            raise ValueError("strict probability vector must be positive everywhere")

    @classmethod
    def uniform(cls, alphabet: Alphabet) -> "ProbVector":
        k = len(alphabet)
        return cls(alphabet, np.full(k, 1.0 / k), strict=True)


class PairMeasure:
    """A symmetric nonnegative measure on ordered pairs of symbols.

    The table is stored canonically: entries are taken from the upper triangle
    (a <= b) and mirrored, so w(a, b) == w(b, a) holds exactly.
    """

    __slots__ = ("alphabet", "table")

    def __init__(self, alphabet: Alphabet, table):
        t = np.array(table, dtype=float)
        k = len(alphabet)
        if t.shape != (k, k):
            raise ShapeMismatchError(f"expected {k}x{k} table, got {t.shape}")
        if np.any(t < 0) or not np.all(np.isfinite(t)):
            raise ValueError("table entries must be finite and nonnegative")
        upper = np.triu(t)
        canon = upper + np.triu(t, 1).T
        if not np.array_equal(canon, canon.T):  # pragma: no cover - by construction
            raise ValueError("canonical table not symmetric")
        if np.max(np.abs(canon - t)) > 0:
            # the caller handed us an asymmetric table rather than noise
            if not np.array_equal(t, t.T):
                raise ValueError("pair-measure table must be symmetric")
        canon.setflags(write=False)
        object.__setattr__(self, "alphabet", alphabet)
        object.__setattr__(self, "table", canon)

    def __setattr__(self, name, value):
        raise AttributeError("PairMeasure is immutable")

    @property
    def values(self) -> np.ndarray:
        return self.table

    @classmethod
    def zero(cls, alphabet: Alphabet) -> "PairMeasure":
        k = len(alphabet)
        return cls(alphabet, np.zeros((k, k)))

    def __repr__(self) -> str:
        return f"PairMeasure({self.table.tolist()!r})"


class ConnectionKernel:
    """Symmetric nonnegative table of connection rates between colours."""

    __slots__ = ("alphabet", "table")

    def __init__(self, alphabet: Alphabet, table):
        t = np.array(table, dtype=float)
        k = len(alphabet)
        if t.shape != (k, k):
            raise ShapeMismatchError(f"expected {k}x{k} table, got {t.shape}")
        if not np.array_equal(t, t.T):
            raise ValueError("connection kernel must be symmetric")
        if np.any(t < 0) or not np.all(np.isfinite(t)):
            raise ValueError("rates must be finite and nonnegative")
        t.setflags(write=False)
        object.__setattr__(self, "alphabet", alphabet)
        object.__setattr__(self, "table", t)

    def __setattr__(self, name, value):
        raise AttributeError("ConnectionKernel is immutable")

    @property
    def values(self) -> np.ndarray:
        return self.table

    @classmethod
    def constant(cls, alphabet: Alphabet, rate: float) -> "ConnectionKernel":
        k = len(alphabet)
        return cls(alphabet, np.full((k, k), float(rate)))


MeasureLike = Union[FiniteMeasure, PairMeasure]


def _values_of(m: MeasureLike) -> np.ndarray:
    if isinstance(m, (FiniteMeasure, PairMeasure)):
        return m.values
    raise TypeError(f"not a measure: {m!r}")


def relative_entropy(nu: MeasureLike, rho: MeasureLike) -> float:
    """Sum of nu * log(nu / rho) in nats, with the convention 0 log 0 = 0.

    Returns +inf exactly when nu is not absolutely continuous with respect to
    rho (some entry has nu > 0 but rho == 0).  Pair measures are summed over
    ordered pairs.
    """
    a = _values_of(nu)
    b = _values_of(rho)
    if a.shape != b.shape or nu.alphabet != rho.alphabet:
        raise ShapeMismatchError("measures live on different alphabets")
    support = a > 0
    if np.any(support & (b == 0)):
        return math.inf
    terms = a[support] * np.log(a[support] / b[support])
    return float(math.fsum(terms))


def kernel_product(C: ConnectionKernel, omega: ProbVector) -> PairMeasure:
    """The pair measure (a, b) -> C(a, b) * omega(a) * omega(b)."""
    if C.alphabet != omega.alphabet:
        raise ShapeMismatchError("kernel and vector live on different alphabets")
    w = omega.weights
    return PairMeasure(C.alphabet, C.table * np.outer(w, w))


def total_mass(m: MeasureLike) -> float:
    """Total mass: sum over symbols, or over ordered pairs for pair measures."""
    return float(math.fsum(_values_of(m).ravel()))


def h_c(varpi: PairMeasure, omega: ProbVector, C: ConnectionKernel) -> float:
    """Edge-part rate H(varpi || C w (x) w) + ||C w (x) w|| - ||varpi||.

    Nonnegative; zero exactly when varpi equals the kernel product; +inf when
    varpi charges a pair where the kernel product vanishes.
    """
    target = kernel_product(C, omega)
    ent = relative_entropy(varpi, target)
    if math.isinf(ent):
        return math.inf
    return ent + total_mass(target) - total_mass(varpi)
