"""Multitype Galton-Watson trees with bounded offspring kernels.

Covers free and exact-size-conditioned sampling, the empirical offspring
measure, mean-matrix spectral analysis, total-progeny distributions via a
generating-function fixed point, and exact log-probabilities.
"""
from __future__ import annotations

import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .measures import Alphabet, ProbVector, ShapeMismatchError

Config = Tuple[int, ...]  # ordered child types, as alphabet indices


class ImpossibleSizeError(ValueError):
    """Requested total progeny has probability zero under the kernel."""


class AttemptsExhaustedError(RuntimeError):
    """Rejection sampling gave up; carries the attempt count."""

    def __init__(self, attempts: int):
        super().__init__(f"no accepted tree in {attempts} attempts")
        self.attempts = attempts


class SpectralConvergenceError(RuntimeError):
    """Power iteration failed to converge and no fallback applied."""


class Overflow:
    """Sentinel returned when a sampled tree exceeds the vertex cap."""

    def __repr__(self) -> str:
        return "Overflow()"


def multiplicity(a: int, config: Config) -> int:
    """Number of children of type a in the configuration."""
    return sum(1 for t in config if t == a)


class OffspringKernel:
    """For each parent type, a finite law over ordered child configurations."""

    def __init__(self, alphabet: Alphabet,
                 laws: Sequence[Sequence[Tuple[Config, float]]],
                 bound: Optional[int] = None):
        k = len(alphabet)
        if len(laws) != k:
            raise ShapeMismatchError("need one offspring law per type")
        canon: List[List[Tuple[Config, float]]] = []
        max_len = 0
        for a, law in enumerate(laws):
            seen = set()
            entries: List[Tuple[Config, float]] = []
            total_terms = []
            for config, prob in law:
                config = tuple(int(t) for t in config)
                if any(t < 0 or t >= k for t in config):
                    raise ValueError(f"child type out of range in {config}")
                if config in seen:
                    raise ValueError(f"duplicate configuration {config}")
                if prob < 0:
                    raise ValueError("negative configuration probability")
                seen.add(config)
                entries.append((config, float(prob)))
                total_terms.append(float(prob))
                max_len = max(max_len, len(config))
            if abs(math.fsum(total_terms) - 1.0) > 1e-12:
                raise ValueError(
                    f"offspring law for type {alphabet.symbols[a]} "
                    f"sums to {math.fsum(total_terms)!r}")
            canon.append(entries)
        if bound is not None and max_len > bound:
            raise ValueError("configuration longer than the stated bound")
        self.alphabet = alphabet
        self.laws = [tuple(law) for law in canon]
        self.bound = bound if bound is not None else max_len
        # lookup and sampling caches
        self._prob: List[Dict[Config, float]] = [
            {c: p for c, p in law} for law in self.laws]
        self._configs: List[List[Config]] = [
            [c for c, _ in law] for law in self.laws]
        self._cum: List[np.ndarray] = [
            np.cumsum([p for _, p in law]) for law in self.laws]

    def prob(self, parent: int, config: Config) -> float:
        return self._prob[parent].get(tuple(config), 0.0)

    def sample_config(self, parent: int, rng: np.random.Generator) -> Config:
        i = int(np.searchsorted(self._cum[parent], rng.random(), side="right"))
        i = min(i, len(self._configs[parent]) - 1)
        return self._configs[parent][i]

    # -- text serialization: `parent | children | prob` per line -------------

    def to_text(self) -> str:
        lines = []
        for a, law in enumerate(self.laws):
            for config, prob in law:
                children = " ".join(str(t) for t in config)
                lines.append(f"{a} | {children} | {prob!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, alphabet: Alphabet) -> "OffspringKernel":
        laws: List[List[Tuple[Config, float]]] = [[] for _ in alphabet]
        for line in text.splitlines():
            if not line.strip():
                continue
            parent_s, children_s, prob_s = (t.strip() for t in line.split("|"))
            config = tuple(int(t) for t in children_s.split()) \
                if children_s else ()
            laws[int(parent_s)].append((config, float(prob_s)))
        return cls(alphabet, laws)


def single_type_binary() -> Tuple[ProbVector, OffspringKernel]:
    """Critical one-type kernel: zero or two children, each w.p. 1/2."""
    alpha = Alphabet.of_size(1)
    mu = ProbVector(alpha, [1.0], strict=True)
    kernel = OffspringKernel(alpha, [[((), 0.5), ((0, 0), 0.5)]])
    return mu, kernel


def mtdna_kernel(p: float, q: float, alpha_mix: float) -> OffspringKernel:
    """Two-type cell-duplication kernel for mitochondrial DNA dynamics.

    A type-0 (healthy) cell either dies (prob 1-p) or splits in two, one
    daughter mutating with probability ``alpha_mix``; a type-1 (mutant) cell
    dies (prob 1-q) or splits into two mutants.
    """
    if not (0 <= p <= 1 and 0 <= q <= 1 and 0 <= alpha_mix <= 1):
        raise ValueError("parameters must lie in [0,1]")
    ab = Alphabet(["a", "b"])
    return OffspringKernel(ab, [
        [((), 1.0 - p), ((0, 1), p * alpha_mix), ((0, 0), p * (1 - alpha_mix))],
        [((), 1.0 - q), ((1, 1), q)],
    ])


class TypedTree:
    """A finite rooted planar tree, vertices stored in preorder.

    ``types[v]`` is the alphabet index of vertex v; ``children[v]`` lists the
    vertex ids of its children in planar order; the root is vertex 0.
    """

    def __init__(self, alphabet: Alphabet, types: Sequence[int],
                 children: Sequence[Sequence[int]]):
        types = np.asarray(types, dtype=np.int64)
        if types.shape[0] < 1:
            raise ValueError("tree needs at least the root")
        if len(children) != types.shape[0]:
            raise ValueError("children list length mismatch")
        if np.any(types < 0) or np.any(types >= len(alphabet)):
            raise ValueError("type index out of range")
        self.alphabet = alphabet
        self.types = types
        self.children = [tuple(int(c) for c in ch) for ch in children]
        # every vertex reachable from the root exactly once
        seen = 0
        stack = [0]
        visited = [False] * len(self.children)
        while stack:
            v = stack.pop()
            if visited[v]:
                raise ValueError("vertex appears as a child twice")
            visited[v] = True
            seen += 1
            stack.extend(self.children[v])
        if seen != len(self.children):
            raise ValueError("children lists do not form a single rooted tree")

    def __len__(self) -> int:
        return int(self.types.shape[0])

    def config(self, v: int) -> Config:
        return tuple(int(self.types[c]) for c in self.children[v])

    def __eq__(self, other) -> bool:
        return (isinstance(other, TypedTree)
                and self.alphabet == other.alphabet
                and np.array_equal(self.types, other.types)
                and self.children == other.children)

    # -- text serialization: preorder `type(child child ...)` ----------------

    def to_text(self) -> str:
        # explicit stack to survive deep path-like trees
        text: List[str] = []
        stack: List[Tuple[str, object]] = [("node", 0)]
        while stack:
            kind, item = stack.pop()
            if kind == "lit":
                text.append(item)  # type: ignore[arg-type]
                continue
            v = item
            text.append(str(int(self.types[v])))
            if self.children[v]:
                text.append("(")
                pending: List[Tuple[str, object]] = [("lit", ")")]
                for i, c in enumerate(reversed(self.children[v])):
                    pending.append(("node", c))
                    if i != len(self.children[v]) - 1:
                        pending.append(("lit", " "))
                stack.extend(pending)
        return "".join(text)

    @classmethod
    def from_text(cls, text: str, alphabet: Alphabet) -> "TypedTree":
        text = text.strip()
        types: List[int] = []
        children: List[List[int]] = []
        parent_stack: List[int] = []
        i = 0
        last: Optional[int] = None
        while i < len(text):
            ch = text[i]
            if ch.isdigit():
                j = i
                while j < len(text) and text[j].isdigit():
                    j += 1
                v = len(types)
                types.append(int(text[i:j]))
                children.append([])
                if parent_stack:
                    children[parent_stack[-1]].append(v)
                elif v != 0:
                    raise ValueError("multiple roots in tree text")
                last = v
                i = j
            elif ch == "(":
                if last is None:
                    raise ValueError("dangling '(' in tree text")
                parent_stack.append(last)
                i += 1
            elif ch == ")":
                if not parent_stack:
                    raise ValueError("unbalanced ')' in tree text")
                parent_stack.pop()
                i += 1
            elif ch == " ":
                i += 1
            else:
                raise ValueError(f"unexpected character {ch!r} in tree text")
        if parent_stack:
            raise ValueError("unbalanced '(' in tree text")
        return cls(alphabet, types, children)


# ---------------------------------------------------------------------------
# mean matrix and spectral analysis
# ---------------------------------------------------------------------------

def mean_matrix(Q: OffspringKernel) -> np.ndarray:
    """A(a,b) = expected number of type-a children of a type-b parent."""
    k = len(Q.alphabet)
    A = np.zeros((k, k))
    for b, law in enumerate(Q.laws):
        for config, prob in law:
            for t in config:
                A[t, b] += prob
    return A


def _power_iteration(A: np.ndarray, tol: float = 1e-13,
                     max_iter: int = 100_000) -> Optional[Tuple[float, np.ndarray]]:
    k = A.shape[0]
    starts = [np.full(k, 1.0 / k)]
    rng = np.random.default_rng(0)
    starts += [np.abs(starts[0] + 0.1 * rng.random(k)) for _ in range(3)]
    for v in starts:
        v = v / v.sum()
        rho = 0.0
        for _ in range(max_iter):
            w = A @ v
            s = w.sum()
            if s == 0.0:
                return 0.0, np.full(k, 1.0 / k)
            w = w / s
            if np.max(np.abs(w - v)) < tol:
                rho = s
                v = w
                break
            v = w
        else:
            continue
        if np.max(np.abs(A @ v - rho * v)) < 1e-9:
            return float(rho), v
    return None


def spectral(A: np.ndarray) -> Tuple[float, np.ndarray, np.ndarray]:
    """Spectral radius with right and left Perron vectors, each summing to 1.

    Power iteration on A and on its transpose; for k <= 3 a dense
    eigen-decomposition backs up non-convergent (e.g. periodic or tied)
    cases.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ShapeMismatchError("mean matrix must be square")
    if np.any(A < 0):
        raise ValueError("mean matrix must be nonnegative")

    res_r = _power_iteration(A)
    res_l = _power_iteration(A.T)
    if res_r is None or res_l is None:
        if A.shape[0] > 3:
            raise SpectralConvergenceError(
                "power iteration failed and matrix too large for dense fallback")
        res_r = res_r or _dense_perron(A)
        res_l = res_l or _dense_perron(A.T)
    rho_r, pi_r = res_r
    rho_l, pi_l = res_l
    rho = max(rho_r, rho_l)
    return float(rho), pi_r, pi_l


def _dense_perron(A: np.ndarray) -> Tuple[float, np.ndarray]:
    vals, vecs = np.linalg.eig(A)
    i = int(np.argmax(np.abs(vals)))
    rho = float(np.abs(vals[i]))
    v = np.real(vecs[:, i])
    if v.sum() < 0:
        v = -v
    v = np.clip(v, 0.0, None)
    if v.sum() == 0.0:
        v = np.full(A.shape[0], 1.0)
    return rho, v / v.sum()


def is_irreducible(A: np.ndarray) -> bool:
    """True iff every ordered type pair communicates through positive entries."""
    A = np.asarray(A, dtype=float)
    k = A.shape[0]
    reach = A > 0
    closure = reach.copy()
    power = reach.copy()
    for _ in range(k - 1):
        power = (power.astype(np.int64) @ reach.astype(np.int64)) > 0
        closure |= power
    return bool(np.all(closure))


def is_critical(A: np.ndarray, tol: float = 1e-9) -> bool:
    rho, _, _ = spectral(A)
    return abs(rho - 1.0) < tol


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def sample_tree(mu: ProbVector, Q: OffspringKernel, cap: int,
                rng: np.random.Generator):
    """One tree, generated breadth-first; Overflow once the cap is passed.

    The root's type follows mu; each vertex draws its child configuration
    from the kernel.  The returned tree is re-indexed to preorder.
    """
    if cap < 1:
        raise ValueError("cap must be >= 1")
    if mu.alphabet != Q.alphabet:
        raise ShapeMismatchError("root law and kernel alphabets differ")
    root_type = int(np.searchsorted(np.cumsum(mu.weights), rng.random(),
                                    side="right"))
    root_type = min(root_type, len(mu.alphabet) - 1)
    types: List[int] = [root_type]
    children: List[List[int]] = [[]]
    queue = [0]
    head = 0
    while head < len(queue):
        v = queue[head]
        head += 1
        config = Q.sample_config(types[v], rng)
        for t in config:
            if len(types) >= cap:
                return Overflow()
            w = len(types)
            types.append(int(t))
            children.append([])
            children[v].append(w)
            queue.append(w)
    return _to_preorder(mu.alphabet, types, children)


def _to_preorder(alphabet: Alphabet, types: List[int],
                 children: List[List[int]]) -> TypedTree:
    order: List[int] = []
    stack = [0]
    while stack:
        v = stack.pop()
        order.append(v)
        stack.extend(reversed(children[v]))
    remap = {old: new for new, old in enumerate(order)}
    new_types = [types[v] for v in order]
    new_children = [[remap[c] for c in children[v]] for v in order]
    return TypedTree(alphabet, new_types, new_children)


def sample_tree_conditioned_counted(
        n: int, mu: ProbVector, Q: OffspringKernel, max_attempts: int,
        rng: np.random.Generator, window: int = 0,
        progeny: Optional[np.ndarray] = None) -> Tuple[TypedTree, int]:
    """Rejection-sample a tree with |T| in [n, n+window]; returns attempts too.

    ``progeny`` may carry a precomputed progeny_distribution table (length
    at least n+window+1) to skip the feasibility DP.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if window < 0:
        raise ValueError("window must be >= 0")
    if progeny is None:
        progeny = progeny_distribution(mu, Q, n + window)
    if math.fsum(progeny[n:n + window + 1]) <= 0.0:
        raise ImpossibleSizeError(
            f"total progeny in [{n}, {n + window}] has probability 0")
    cap = n + window + 1
    for attempt in range(1, max_attempts + 1):
        t = sample_tree(mu, Q, cap, rng)
        if isinstance(t, Overflow):
            continue
        if n <= len(t) <= n + window:
            return t, attempt
    raise AttemptsExhaustedError(max_attempts)


def sample_tree_conditioned(n: int, mu: ProbVector, Q: OffspringKernel,
                            max_attempts: int, rng: np.random.Generator,
                            window: int = 0,
                            progeny: Optional[np.ndarray] = None) -> TypedTree:
    t, _ = sample_tree_conditioned_counted(
        n, mu, Q, max_attempts, rng, window=window, progeny=progeny)
    return t


# ---------------------------------------------------------------------------
# total-progeny distribution
# ---------------------------------------------------------------------------

def progeny_distribution(mu: ProbVector, Q: OffspringKernel,
                         n_max: int) -> np.ndarray:
    """P{|T| = k} for k = 0..n_max (entry 0 is always 0).

    The per-type size generating functions satisfy the polynomial fixed
    point f_a = x * sum_c Q{c|a} prod_i f_{c_i}; iterating it n_max times
    pins every coefficient up to degree n_max exactly.
    """
    if mu.alphabet != Q.alphabet:
        raise ShapeMismatchError("root law and kernel alphabets differ")
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    k = len(Q.alphabet)
    f = [np.zeros(n_max + 1) for _ in range(k)]
    for _ in range(n_max):
        new_f = []
        for a in range(k):
            acc = np.zeros(n_max + 1)
            for config, prob in Q.laws[a]:
                if prob == 0.0:
                    continue
                conv = None
                for t in config:
                    conv = f[t][:n_max + 1] if conv is None else \
                        np.convolve(conv, f[t])[:n_max + 1]
                if conv is None:  # leaf configuration
                    term = np.zeros(n_max + 1)
                    term[0] = prob
                else:
                    term = prob * conv
                acc += term
            # multiply by x: the vertex itself
            shifted = np.zeros(n_max + 1)
            shifted[1:] = acc[:-1]
            new_f.append(shifted)
        f = new_f
    out = np.zeros(n_max + 1)
    for a in range(k):
        out += mu.weights[a] * f[a]
    out[0] = 0.0
    return out


# ---------------------------------------------------------------------------
# empirical offspring measure and rate plumbing
# ---------------------------------------------------------------------------

class OffspringMeasure:
    """A weighting of (parent type, child configuration) pairs."""

    def __init__(self, alphabet: Alphabet,
                 weights: Dict[Tuple[int, Config], float]):
        for (a, config), w in weights.items():
            if a < 0 or a >= len(alphabet):
                raise ValueError("type index out of range")
            if w < 0:
                raise ValueError("weights must be nonnegative")
        self.alphabet = alphabet
        self.weights = {(int(a), tuple(c)): float(w)
                        for (a, c), w in weights.items()}

    def total(self) -> float:
        return math.fsum(self.weights.values())

    def type_marginal(self) -> np.ndarray:
        out = np.zeros(len(self.alphabet))
        for (a, _), w in self.weights.items():
            out[a] += w
        return out

    @classmethod
    def from_product(cls, pi: ProbVector, Q: OffspringKernel
                     ) -> "OffspringMeasure":
        """The product measure pi(a) * Q{c|a} — the typical limit point."""
        weights = {}
        for a, law in enumerate(Q.laws):
            for config, prob in law:
                w = pi.weights[a] * prob
                if w > 0:
                    weights[(a, config)] = w
        return cls(pi.alphabet, weights)


def offspring_measure(t: TypedTree) -> OffspringMeasure:
    """M(a,c) = fraction of vertices of type a with child configuration c."""
    counts: Dict[Tuple[int, Config], int] = {}
    for v in range(len(t)):
        key = (int(t.types[v]), t.config(v))
        counts[key] = counts.get(key, 0) + 1
    n = len(t)
    return OffspringMeasure(t.alphabet,
                            {key: c / n for key, c in counts.items()})


def shift_invariance_residual(nu: OffspringMeasure) -> float:
    """max_a |nu_1(a) - sum_{(b,c)} m(a,c) nu(b,c)|.

    Zero characterizes stationarity of the type marginal under the offspring
    multiplicities; the empirical measure of a tree has residual <= 1/|T|
    (root and leaves break the balance by one vertex).
    """
    marginal = nu.type_marginal()
    k = len(nu.alphabet)
    reproduced = np.zeros(k)
    for (_, config), w in nu.weights.items():
        for t in config:
            reproduced[t] += w
    return float(np.max(np.abs(marginal - reproduced)))


def log_prob_tree(t: TypedTree, mu: ProbVector, Q: OffspringKernel) -> float:
    """Unconditioned log-probability of the tree in nats (-inf if impossible)."""
    root_w = mu.weights[int(t.types[0])]
    if root_w == 0.0:
        return -math.inf
    terms = [math.log(root_w)]
    for v in range(len(t)):
        p = Q.prob(int(t.types[v]), t.config(v))
        if p == 0.0:
            return -math.inf
        terms.append(math.log(p))
    return float(math.fsum(terms))


def log_prob_tree_conditioned(t: TypedTree, mu: ProbVector,
                              Q: OffspringKernel, p_size: float) -> float:
    """Log-probability given |T| = |t|; p_size must be P{|T| = |t|} > 0."""
    if not p_size > 0:
        raise ValueError("p_size must be positive")
    lp = log_prob_tree(t, mu, Q)
    if math.isinf(lp):
        return -math.inf
    return lp - math.log(p_size)


def tree_aep_entropy(pi: ProbVector, Q: OffspringKernel) -> float:
    """Per-vertex entropy -sum_a pi(a) sum_c Q{c|a} log Q{c|a}, in nats."""
    if pi.alphabet != Q.alphabet:
        raise ShapeMismatchError("vector and kernel alphabets differ")
    terms = []
    for a, law in enumerate(Q.laws):
        for _, prob in law:
            if prob > 0:
                terms.append(-pi.weights[a] * prob * math.log(prob))
    return float(math.fsum(terms))
