"""Randomly coloured random graphs.

Vertices receive i.i.d. colours, and each unordered pair is linked
independently with a probability that depends on the endpoint colours and a
size-dependent scale a_n.  This module covers sampling, the empirical colour
and pair measures, exact log-probabilities, and exponential tilting together
with the closed-form log Radon-Nikodym identity that the tilt satisfies.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .measures import (
    Alphabet,
    ConnectionKernel,
    FiniteMeasure,
    PairMeasure,
    ProbVector,
    ShapeMismatchError,
)


# ---------------------------------------------------------------------------
# scaling families
# ---------------------------------------------------------------------------

class ScalingFamily:
    """A named positive sequence n -> a_n.

    Presets:
      * ``sparse``         a_n = 1/n            (n a_n = 1)
      * ``inv_n_log_n``    a_n = 1/(n ln n)     (n a_n -> 0)
      * ``log_n_over_n``   a_n = (ln n)/n       (n a_n -> infinity)
      * ``power``          a_n = n^{-theta}, theta > 0
      * ``custom``         explicit {n: a_n} table

    Instances are picklable by (name, params) so worker processes can share
    them; no closures are stored.
    """

    PRESETS = ("sparse", "inv_n_log_n", "log_n_over_n", "power", "custom")

    def __init__(self, name: str, theta: Optional[float] = None,
                 table: Optional[dict] = None):
        if name not in self.PRESETS:
            raise ValueError(f"unknown scaling family {name!r}")
        if name == "power":
            if theta is None or not theta > 0:
                raise ValueError("power family needs theta > 0")
        elif name == "custom":
            if not table:
                raise ValueError("custom family needs a nonempty table")
            for n, a in table.items():
                if not (int(n) >= 1 and a > 0):
                    raise ValueError("custom table entries must be positive")
        self.name = name
        self.theta = theta
        self.table = dict(table) if table else None

    def a(self, n: int) -> float:
        if n < 1:
            raise ValueError("n must be >= 1")
        if self.name == "sparse":
            return 1.0 / n
        if self.name == "inv_n_log_n":
            if n < 2:
                raise ValueError("inv_n_log_n needs n >= 2")
            return 1.0 / (n * math.log(n))
        if self.name == "log_n_over_n":
            if n < 2:
                raise ValueError("log_n_over_n needs n >= 2")
            return math.log(n) / n
        if self.name == "power":
            return float(n) ** (-self.theta)
        a = self.table.get(n)
        if a is None:
            raise KeyError(f"custom scaling family has no entry for n={n}")
        return float(a)

    def __repr__(self) -> str:
        if self.name == "power":
            return f"ScalingFamily('power', theta={self.theta})"
        return f"ScalingFamily({self.name!r})"


# ---------------------------------------------------------------------------
# models and realizations
# ---------------------------------------------------------------------------

class GraphModel:
    """The triple (colour law mu, connection kernel C, scaling family)."""

    def __init__(self, mu: ProbVector, C: ConnectionKernel,
                 family: ScalingFamily):
        if mu.alphabet != C.alphabet:
            raise ShapeMismatchError("colour law and kernel alphabets differ")
        if np.any(mu.weights <= 0):
            raise ValueError("colour law must be strictly positive")
        self.mu = mu
        self.C = C
        self.family = family

    @property
    def alphabet(self) -> Alphabet:
        return self.mu.alphabet

    def colour_law(self, n: int) -> np.ndarray:
        return self.mu.weights

    def edge_probability(self, n: int) -> np.ndarray:
        """k x k table p_n(a,b) = min(1, a_n * C(a,b))."""
        return np.minimum(1.0, self.family.a(n) * self.C.table)


class TiltedGraphModel:
    """A graph model with explicit colour law and edge-probability tables.

    Produced by :func:`tilt`; quacks like :class:`GraphModel` for sampling
    and log-probability purposes but is pinned to one value of n.
    """

    def __init__(self, alphabet: Alphabet, colour_weights: np.ndarray,
                 edge_probs: np.ndarray, n: int):
        self.alphabet = alphabet
        self._mu = np.asarray(colour_weights, dtype=float)
        self._p = np.asarray(edge_probs, dtype=float)
        self._n = n
        if np.any(self._p < 0) or np.any(self._p > 1):
            raise ValueError("tilted edge probabilities left [0,1]")

    @property
    def mu(self) -> ProbVector:
        return ProbVector(self.alphabet, self._mu, strict=True)

    def colour_law(self, n: int) -> np.ndarray:
        self._check_n(n)
        return self._mu

    def edge_probability(self, n: int) -> np.ndarray:
        self._check_n(n)
        return self._p

    def _check_n(self, n: int) -> None:
        if n != self._n:
            raise ValueError(f"tilted model is pinned to n={self._n}, got {n}")


class ColouredGraph:
    """n coloured vertices plus a simple undirected edge set (u < v)."""

    def __init__(self, alphabet: Alphabet, colours: np.ndarray,
                 edges: np.ndarray):
        colours = np.asarray(colours, dtype=np.int64)
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        n = colours.shape[0]
        if n < 1:
            raise ValueError("graph needs at least one vertex")
        if np.any(colours < 0) or np.any(colours >= len(alphabet)):
            raise ValueError("colour index out of range")
        if edges.size:
            if np.any(edges[:, 0] >= edges[:, 1]):
                raise ValueError("edges must satisfy u < v")
            if np.any(edges < 0) or np.any(edges >= n):
                raise ValueError("edge endpoint out of range")
            order = np.lexsort((edges[:, 1], edges[:, 0]))
            edges = edges[order]
            if len(np.unique(edges, axis=0)) != len(edges):
                raise ValueError("duplicate edges")
        self.alphabet = alphabet
        self.colours = colours
        self.edges = edges

    @property
    def n(self) -> int:
        return self.colours.shape[0]

    @property
    def edge_count(self) -> int:
        return self.edges.shape[0]

    # -- text serialization --------------------------------------------------

    def to_text(self) -> str:
        lines = [f"{self.n} {len(self.alphabet)}"]
        lines.append(" ".join(str(c) for c in self.colours))
        for u, v in self.edges:
            lines.append(f"{u} {v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, alphabet: Optional[Alphabet] = None
                  ) -> "ColouredGraph":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        n, k = (int(t) for t in lines[0].split())
        if alphabet is None:
            alphabet = Alphabet.of_size(k)
        elif len(alphabet) != k:
            raise ValueError("alphabet size does not match header")
        colours = np.array([int(t) for t in lines[1].split()], dtype=np.int64)
        if colours.shape[0] != n:
            raise ValueError("colour line does not match vertex count")
        edges = np.array([[int(t) for t in ln.split()] for ln in lines[2:]],
                         dtype=np.int64).reshape(-1, 2)
        return cls(alphabet, colours, edges)

    def __eq__(self, other) -> bool:
        return (isinstance(other, ColouredGraph)
                and self.alphabet == other.alphabet
                and np.array_equal(self.colours, other.colours)
                and np.array_equal(self.edges, other.edges))


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def sample_graph(model, n: int, rng: np.random.Generator) -> ColouredGraph:
    """Draw colours i.i.d. and each pair u < v independently.

    Exact sampling either way: row-by-row Bernoulli in general, or — for
    large sparse instances — per colour class a Binomial edge count followed
    by uniform distinct pair positions, which is the same product law.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    mu = model.colour_law(n)
    colours = rng.choice(len(mu), size=n, p=mu)
    p = model.edge_probability(n)
    npairs = n * (n - 1) // 2
    if n >= 2000 and npairs > 0 and float(np.max(p)) < 0.01:
        edges = _sample_edges_sparse(colours, p, rng)
    else:
        rows = []
        for u in range(n - 1):
            pv = p[colours[u], colours[u + 1:]]
            hits = np.nonzero(rng.random(n - 1 - u) < pv)[0]
            if hits.size:
                rows.append(np.column_stack(
                    (np.full(hits.size, u, dtype=np.int64), hits + u + 1)))
        edges = (np.concatenate(rows) if rows
                 else np.empty((0, 2), dtype=np.int64))
    return ColouredGraph(model.alphabet if hasattr(model, "alphabet")
                         else model.mu.alphabet, colours, edges)


def _sample_edges_sparse(colours: np.ndarray, p: np.ndarray,
                         rng: np.random.Generator) -> np.ndarray:
    """Edge set of an inhomogeneous Bernoulli graph, class by class.

    Within one colour class every pair is an i.i.d. Bernoulli(p_ab), so the
    class edge count is Binomial and the occupied positions are a uniform
    subset; rejection sampling of distinct pairs is cheap while the class
    stays far from full.
    """
    k = p.shape[0]
    pos = [np.nonzero(colours == a)[0] for a in range(k)]
    found: List[Tuple[int, int]] = []
    for a in range(k):
        for b in range(a, k):
            if a == b:
                m = pos[a].size * (pos[a].size - 1) // 2
            else:
                m = pos[a].size * pos[b].size
            if m == 0 or p[a, b] == 0.0:
                continue
            cnt = int(rng.binomial(m, p[a, b]))
            if cnt == 0:
                continue
            chosen: set = set()
            while len(chosen) < cnt:
                need = cnt - len(chosen)
                ii = rng.integers(0, pos[a].size, size=2 * need + 8)
                jj = rng.integers(0, pos[b].size, size=2 * need + 8)
                u = pos[a][ii]
                v = pos[b][jj]
                if a == b:
                    keep = u != v
                    u, v = u[keep], v[keep]
                lo = np.minimum(u, v)
                hi = np.maximum(u, v)
                for x, y in zip(lo, hi):
                    chosen.add((int(x), int(y)))
                    if len(chosen) == cnt:
                        break
            found.extend(chosen)
    if not found:
        return np.empty((0, 2), dtype=np.int64)
    return np.array(sorted(found), dtype=np.int64)


# ---------------------------------------------------------------------------
# empirical measures
# ---------------------------------------------------------------------------

def empirical_colour(x: ColouredGraph) -> ProbVector:
    """L1(a) = fraction of vertices coloured a."""
    counts = np.bincount(x.colours, minlength=len(x.alphabet))
    return ProbVector(x.alphabet, counts / x.n)


def _edge_class_counts(x: ColouredGraph) -> np.ndarray:
    """Number of edges whose endpoint colours are (a,b), accumulated on a<=b."""
    k = len(x.alphabet)
    counts = np.zeros((k, k), dtype=np.int64)
    if x.edge_count:
        ca = x.colours[x.edges[:, 0]]
        cb = x.colours[x.edges[:, 1]]
        lo = np.minimum(ca, cb)
        hi = np.maximum(ca, cb)
        np.add.at(counts, (lo, hi), 1)
    return counts


def empirical_pair(x: ColouredGraph, a_n: float) -> PairMeasure:
    """L2(a,b): each edge contributes both colour orders, scaled by 1/(n^2 a_n).

    Total mass equals 2|E| / (n^2 a_n).
    """
    if not a_n > 0:
        raise ValueError("a_n must be positive")
    counts = _edge_class_counts(x)
    table = (counts + counts.T).astype(float) / (x.n ** 2 * a_n)
    return PairMeasure(x.alphabet, table)


@dataclass(frozen=True)
class DiagnosticMeasures:
    """Diagonal companions of L1 and L2 used by the tilting identity.

    ``l1_diag`` carries L1 on the diagonal (sums to 1); ``l2_diag`` carries
    L1/n (sums to 1/n).
    """
    l1_diag: np.ndarray
    l2_diag: np.ndarray


def diagnostics(x: ColouredGraph) -> DiagnosticMeasures:
    l1 = empirical_colour(x).weights
    return DiagnosticMeasures(l1_diag=np.diag(l1), l2_diag=np.diag(l1 / x.n))


# ---------------------------------------------------------------------------
# exact log-probability and normalized information
# ---------------------------------------------------------------------------

def log_prob_graph(x: ColouredGraph, model) -> float:
    """log P(x) in nats under the model; -inf when x is inadmissible.

    Computed with one tally per colour-pair class: the non-edge product is
    count * log1p(-p), never an n^2-term float accumulation.
    """
    n = x.n
    mu = model.colour_law(n)
    p = model.edge_probability(n)
    k = len(x.alphabet)

    colour_counts = np.bincount(x.colours, minlength=k)
    if np.any((colour_counts > 0) & (mu == 0)):
        return -math.inf
    terms = [c * math.log(m) for c, m in zip(colour_counts, mu) if c > 0]

    edge_counts = _edge_class_counts(x)
    m = colour_counts
    pair_counts = np.triu(np.outer(m, m), 1) + np.diag(m * (m - 1) // 2)
    for a in range(k):
        for b in range(a, k):
            e = int(edge_counts[a, b])
            ne = int(pair_counts[a, b]) - e
            pv = p[a, b]
            if e:
                if pv == 0.0:
                    return -math.inf
                terms.append(e * math.log(pv))
            if ne:
                if pv == 1.0:
                    return -math.inf
                terms.append(ne * math.log1p(-pv))
    return float(math.fsum(terms))


def normalized_information(x: ColouredGraph, model, mode: str) -> float:
    """-log P(x) divided by the mode's normalizer.

    ``critical_thm`` divides by n; ``sparse_thm`` by a_n n^2 ln n.
    """
    lp = log_prob_graph(x, model)
    n = x.n
    if mode == "critical_thm":
        return -lp / n
    if mode == "sparse_thm":
        return -lp / (model.family.a(n) * n * n * math.log(n))
    raise ValueError(f"unknown mode {mode!r}")


def expected_information(model: GraphModel, n: int, mode: str) -> float:
    """Exact mean of normalized_information over the model at size n."""
    mu = model.mu.weights
    p = model.edge_probability(n)
    colour_part = n * -math.fsum(m * math.log(m) for m in mu if m > 0)

    def bern_entropy(pv: float) -> float:
        if pv <= 0.0 or pv >= 1.0:
            return 0.0
        return -pv * math.log(pv) - (1.0 - pv) * math.log1p(-pv)

    k = len(mu)
    pair_part = (n * (n - 1) / 2.0) * math.fsum(
        mu[a] * mu[b] * bern_entropy(p[a, b])
        for a in range(k) for b in range(k))
    total = colour_part + pair_part
    if mode == "critical_thm":
        return total / n
    if mode == "sparse_thm":
        return total / (model.family.a(n) * n * n * math.log(n))
    raise ValueError(f"unknown mode {mode!r}")


# ---------------------------------------------------------------------------
# exponential tilting
# ---------------------------------------------------------------------------

class TiltSpec:
    """A colour tilt f and a symmetric pair tilt g, on one of two scales.

    ``per_n`` applies the pair tilt through exponent g/(n a_n); ``per_ann2``
    applies it through exponent g directly.  ``u_f`` is the log-normalizer of
    the colour tilt against the model's colour law.
    """

    SCALES = ("per_n", "per_ann2")

    def __init__(self, alphabet: Alphabet, f, g, scale: str):
        f = np.asarray(f, dtype=float)
        g = np.asarray(g, dtype=float)
        k = len(alphabet)
        if f.shape != (k,):
            raise ShapeMismatchError(f"f must have shape ({k},)")
        if g.shape != (k, k) or not np.allclose(g, g.T, atol=0, rtol=0):
            raise ShapeMismatchError(f"g must be a symmetric {k}x{k} table")
        if scale not in self.SCALES:
            raise ValueError(f"scale must be one of {self.SCALES}")
        self.alphabet = alphabet
        self.f = f
        self.g = g
        self.scale = scale

    def u_f(self, mu: ProbVector) -> float:
        return float(np.log(np.sum(np.exp(self.f) * mu.weights)))

    def exponent(self, n: int, a_n: float) -> np.ndarray:
        """The per-pair exponent actually applied to edge odds."""
        if self.scale == "per_n":
            return self.g / (n * a_n)
        return self.g

    def h_table(self, model: GraphModel, n: int) -> np.ndarray:
        """The correction table of the log Radon-Nikodym identity.

        ``per_n``:    -n  * log(1 - p + p e^{g/(n a_n)})
        ``per_ann2``: -(1/a_n) * log(1 - p + p e^{g})
        """
        a_n = model.family.a(n)
        p = model.edge_probability(n)
        log_d = _log_tilt_denominator(p, self.exponent(n, a_n))
        if self.scale == "per_n":
            return -n * log_d
        return -log_d / a_n


def _log_tilt_denominator(p: np.ndarray, expo: np.ndarray) -> np.ndarray:
    """log(1 - p + p e^{expo}) computed stably for large |expo|."""
    # 1 - p + p e^t = e^t (p + (1-p) e^{-t}); pick the branch that cannot
    # overflow.
    out = np.empty_like(p)
    pos = expo > 0
    with np.errstate(over="ignore"):
        out[~pos] = np.log1p(p[~pos] * np.expm1(expo[~pos]))
        out[pos] = expo[pos] + np.log(
            p[pos] + (1.0 - p[pos]) * np.exp(-expo[pos]))
    return out


def tilt(model: GraphModel, spec: TiltSpec, n: int) -> TiltedGraphModel:
    """The exponentially tilted model at size n.

    Colour law: mu~ = e^{f - U_f} mu.  Edge probabilities: odds multiplied by
    e^{exponent}, i.e. p~ = p e^t / (1 - p + p e^t).
    """
    if spec.alphabet != model.alphabet:
        raise ShapeMismatchError("tilt and model alphabets differ")
    mu = model.mu.weights
    mu_tilde = np.exp(spec.f - spec.u_f(model.mu)) * mu
    mu_tilde = mu_tilde / math.fsum(mu_tilde)  # remove rounding residue

    p = model.edge_probability(n)
    expo = spec.exponent(n, model.family.a(n))
    log_d = _log_tilt_denominator(p, expo)
    with np.errstate(over="ignore", divide="ignore"):
        log_p_tilde = np.where(p > 0, np.log(p) + expo - log_d, -np.inf)
    p_tilde = np.exp(log_p_tilde)
    p_tilde = np.clip(p_tilde, 0.0, 1.0)
    return TiltedGraphModel(model.alphabet, mu_tilde, p_tilde, n)


def rn_log_exponent(x: ColouredGraph, model: GraphModel,
                    spec: TiltSpec) -> float:
    """Closed-form log dP~/dP(x) predicted by the tilt identity."""
    n = x.n
    a_n = model.family.a(n)
    l1 = empirical_colour(x).weights
    l2 = empirical_pair(x, a_n).table
    diag = diagnostics(x)
    h = spec.h_table(model, n)
    f_centred = spec.f - spec.u_f(model.mu)
    if spec.scale == "per_n":
        return float(
            n * np.dot(l1, f_centred)
            + (n / 2.0) * np.sum(l2 * spec.g)
            + (n / 2.0) * np.sum(np.outer(l1, l1) * h)
            - 0.5 * np.sum(diag.l1_diag * h))
    return float(
        n * np.dot(l1, f_centred)
        + (a_n * n * n / 2.0) * np.sum(l2 * spec.g)
        + (a_n * n * n / 2.0) * np.sum(np.outer(l1, l1) * h)
        - (a_n * n * n / 2.0) * np.sum(diag.l2_diag * h))


def rn_log_residual(x: ColouredGraph, model: GraphModel,
                    spec: TiltSpec) -> float:
    """|direct log-likelihood ratio - closed form|; +inf on -inf log-probs."""
    tilted = tilt(model, spec, x.n)
    lp_tilted = log_prob_graph(x, tilted)
    lp_orig = log_prob_graph(x, model)
    if math.isinf(lp_tilted) or math.isinf(lp_orig):
        return math.inf
    return abs((lp_tilted - lp_orig) - rn_log_exponent(x, model, spec))
