"""Rate functions, entropy formulas and their variational certification.

The closed forms are thin combinations of the entropy functionals in
:mod:`aepkit.measures`; the numeric side maximizes the dual objectives by
gradient ascent and certifies the optimum against the closed form, flagging
divergent (infinite-rate) instances by following unbounded ascent rays.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from .measures import (
    ConnectionKernel,
    PairMeasure,
    ProbVector,
    h_c,
    kernel_product,
    relative_entropy,
)
from .trees import OffspringKernel, OffspringMeasure, shift_invariance_residual

EQUALITY_TOL = 1e-9  # sup-norm tolerance for measure-identity case splits


@dataclass(frozen=True)
class RateResult:
    """An extended-real rate value with a note on which branch produced it."""
    value: float
    witness: Optional[str] = None

    def __post_init__(self):
        if self.value < 0 and self.value > -1e-12:
            object.__setattr__(self, "value", 0.0)
        if self.value < 0:
            raise ValueError("rate values are nonnegative")
        if math.isinf(self.value) and self.witness is None:
            raise ValueError("infinite rates must carry a witness")

    @property
    def finite(self) -> bool:
        return math.isfinite(self.value)


@dataclass(frozen=True)
class VariationalReport:
    """Outcome of one numeric-sup certification run."""
    closed_form: float
    numeric_sup: float
    iterations: int
    converged: bool
    diverged: bool = False
    witness: Optional[str] = None

    @property
    def gap(self) -> float:
        if math.isinf(self.closed_form) and math.isinf(self.numeric_sup):
            return 0.0
        return abs(self.closed_form - self.numeric_sup)


# ---------------------------------------------------------------------------
# closed-form rates
# ---------------------------------------------------------------------------

def rate_J(nu: OffspringMeasure, Q: OffspringKernel) -> RateResult:
    """Tree rate: relative entropy against marginal (x) kernel, on the
    shift-invariant set; +inf elsewhere."""
    total = nu.total()
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"nu must be a probability measure, mass {total!r}")
    residual = shift_invariance_residual(nu)
    if residual >= EQUALITY_TOL:
        return RateResult(math.inf,
                          witness=f"not shift-invariant (residual {residual:.3g})")
    marginal = nu.type_marginal()
    terms = []
    for (a, config), w in nu.weights.items():
        if w == 0.0:
            continue
        ref = marginal[a] * Q.prob(a, config)
        if ref == 0.0:
            return RateResult(math.inf, witness="support outside marginal (x) kernel")
        terms.append(w * math.log(w / ref))
    return RateResult(max(0.0, float(math.fsum(terms))))


def rate_I(omega: ProbVector, varpi: PairMeasure, mu: ProbVector,
           C: ConnectionKernel) -> RateResult:
    """Joint rate: colour part H(omega||mu) plus half the edge part."""
    colour = relative_entropy(omega, mu)
    edge = h_c(varpi, omega, C)
    if math.isinf(colour):
        return RateResult(math.inf, witness="omega not absolutely continuous wrt mu")
    if math.isinf(edge):
        return RateResult(math.inf, witness="varpi charges a null pair")
    return RateResult(colour + 0.5 * edge)


def rate_I1(omega: ProbVector, varpi: PairMeasure, mu: ProbVector,
            C: ConnectionKernel) -> RateResult:
    edge = h_c(varpi, omega, C)
    if math.isinf(edge):
        return RateResult(math.inf, witness="varpi charges a null pair")
    return RateResult(0.5 * edge)


def rate_I2(omega: ProbVector, varpi: PairMeasure, mu: ProbVector,
            C: ConnectionKernel) -> RateResult:
    target = kernel_product(C, omega)
    dev = float(np.max(np.abs(varpi.table - target.table)))
    if dev >= EQUALITY_TOL:
        return RateResult(
            math.inf, witness=f"varpi != C omega (x) omega (dev {dev:.3g})")
    colour = relative_entropy(omega, mu)
    if math.isinf(colour):
        return RateResult(math.inf, witness="omega not absolutely continuous wrt mu")
    return RateResult(colour)


def rate_I3(omega: ProbVector, varpi: PairMeasure, mu: ProbVector,
            C: ConnectionKernel) -> RateResult:
    dev = float(np.max(np.abs(omega.weights - mu.weights)))
    if dev >= EQUALITY_TOL:
        return RateResult(math.inf, witness=f"omega != mu (dev {dev:.3g})")
    return rate_I1(omega, varpi, mu, C)


def rate_I4(omega: ProbVector, varpi: PairMeasure, mu: ProbVector,
            C: ConnectionKernel) -> RateResult:
    colour = relative_entropy(omega, mu)
    if math.isinf(colour):
        return RateResult(math.inf, witness="omega not absolutely continuous wrt mu")
    return RateResult(colour)


def graph_aep_entropy(mu: ProbVector, C: ConnectionKernel, mode: str) -> float:
    """Per-normalizer entropy of the coloured-graph source, in bits.

    ``critical`` returns the per-vertex constant
    (1/log 2)[ (1/2) sum mu C mu  -  sum mu log mu ]; ``sparse`` returns the
    coefficient (1/(2 log 2)) sum mu C mu of the a_n n^2 log n normalizer.
    """
    w = mu.weights
    quad = float(w @ C.table @ w)
    if mode == "sparse":
        return quad / (2.0 * math.log(2.0))
    if mode == "critical":
        colour = -math.fsum(m * math.log(m) for m in w if m > 0)
        return (0.5 * quad + colour) / math.log(2.0)
    raise ValueError(f"unknown mode {mode!r}")


def tree_aep_entropy_bits(pi: ProbVector, Q: OffspringKernel) -> float:
    from .trees import tree_aep_entropy
    return tree_aep_entropy(pi, Q) / math.log(2.0)


# ---------------------------------------------------------------------------
# numeric maximization
# ---------------------------------------------------------------------------

MAX_ITER = 10_000
GRAD_TOL = 1e-10


def _ascend(objective: Callable[[np.ndarray], float],
            gradient: Callable[[np.ndarray], np.ndarray],
            x0: np.ndarray,
            precond: Optional[Callable[[np.ndarray], np.ndarray]] = None
            ) -> Tuple[np.ndarray, float, int, bool]:
    """Backtracking gradient ascent from x0 on a smooth concave objective.

    ``precond`` may supply a positive diagonal curvature estimate; the ascent
    direction is then the gradient scaled by its inverse, which tames the
    exponential flat/steep coordinates of the dual objectives.

    Converged means either the gradient fell below GRAD_TOL, or the
    objective stalled at machine precision while the gradient was already
    below 1e-7 (flat tails near an optimum at infinity in a null direction).
    """
    x = x0.astype(float).copy()
    fx = objective(x)
    it = 0
    stalled = 0
    for it in range(1, MAX_ITER + 1):
        g = gradient(x)
        gnorm = float(np.max(np.abs(g)))
        if gnorm < GRAD_TOL:
            return x, fx, it, True
        if precond is not None:
            d = g / np.maximum(precond(x), 1e-12)
        else:
            d = g
        step = 1.0
        g2 = float(np.sum(g * d))
        for _ in range(80):
            cand = x + step * d
            fc = objective(cand)
            if fc >= fx + 0.25 * step * g2:
                gain = fc - fx
                x, fx = cand, fc
                break
            step *= 0.5
        else:
            # no productive step at machine precision
            return x, fx, it, gnorm < 1e-7
        if gain <= 1e-15 * max(1.0, abs(fx)):
            stalled += 1
            if stalled >= 25 and gnorm < 1e-7:
                return x, fx, it, True
        else:
            stalled = 0
    return x, fx, MAX_ITER, False


def _detect_divergence(objective: Callable[[np.ndarray], float],
                       direction: np.ndarray,
                       eps: float = 1e-12) -> bool:
    """True when the objective keeps a positive slope along a doubling ray."""
    scale = 1.0
    prev = objective(np.zeros_like(direction))
    for _ in range(100):
        cur = objective(scale * direction)
        if cur - prev <= eps * scale:
            return False
        prev = cur
        scale *= 2.0
        if not math.isfinite(scale):  # pragma: no cover
            break
    return True


def _sym(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def numeric_sup_I1(omega: ProbVector, varpi: PairMeasure,
                   C: ConnectionKernel) -> VariationalReport:
    """Maximize (1/2)<g, varpi> + (1/2)<1 - e^g, C omega (x) omega> over
    symmetric g; certified against half the closed-form edge rate."""
    target = kernel_product(C, omega).table
    pw = varpi.table
    closed = 0.5 * h_c(varpi, omega, C)
    k = pw.shape[0]

    bad = (pw > 0) & (target == 0)
    if np.any(bad):
        direction = np.zeros_like(pw)
        direction[bad] = 1.0
        if _detect_divergence(lambda g: _i1_obj(g.reshape(k, k), pw, target),
                              direction.ravel()):
            return VariationalReport(
                closed_form=math.inf, numeric_sup=math.inf, iterations=0,
                converged=False, diverged=True,
                witness="varpi charges a pair with zero target mass")

    def obj(x: np.ndarray) -> float:
        return _i1_obj(_sym(x.reshape(k, k)), pw, target)

    def grad(x: np.ndarray) -> np.ndarray:
        g = _sym(x.reshape(k, k))
        return (0.5 * pw - 0.5 * np.exp(g) * target).ravel()

    def curv(x: np.ndarray) -> np.ndarray:
        g = _sym(x.reshape(k, k))
        return (0.5 * np.exp(g) * target).ravel()

    x, fx, it, ok = _ascend(obj, grad, np.zeros(k * k), precond=curv)
    return VariationalReport(closed_form=closed, numeric_sup=fx,
                             iterations=it, converged=ok)


def _i1_obj(g: np.ndarray, pw: np.ndarray, target: np.ndarray) -> float:
    # far along a divergence ray e^g overflows harmlessly to inf
    with np.errstate(over="ignore", invalid="ignore"):
        penalty = np.where(target > 0, (1.0 - np.exp(g)) * target, 0.0)
        return float(0.5 * np.sum(g * pw) + 0.5 * np.sum(penalty))


def numeric_sup_I2(omega: ProbVector, varpi: PairMeasure, mu: ProbVector,
                   C: ConnectionKernel) -> VariationalReport:
    """Maximize <f - U_f, omega> + (1/2)<g, varpi - C omega (x) omega>.

    The g-part is linear: any mismatch between varpi and the kernel product
    is an unbounded ascent ray; otherwise the f-part is the Donsker-Varadhan
    form with supremum H(omega||mu)."""
    target = kernel_product(C, omega).table
    mismatch = varpi.table - target
    k = len(mu.alphabet)
    muw = mu.weights
    ow = omega.weights

    if np.max(np.abs(mismatch)) >= EQUALITY_TOL:
        direction = np.sign(mismatch)
        if _detect_divergence(
                lambda g: 0.5 * float(np.sum(g.reshape(k, k) * mismatch)),
                direction.ravel()):
            return VariationalReport(
                closed_form=math.inf, numeric_sup=math.inf, iterations=0,
                converged=False, diverged=True,
                witness="varpi != C omega (x) omega")

    closed = relative_entropy(omega, mu)

    def obj(f: np.ndarray) -> float:
        u = _log_mean_exp(f, muw)
        return float(np.dot(f, ow) - u)

    def grad(f: np.ndarray) -> np.ndarray:
        w = np.exp(f - np.max(f)) * muw
        return ow - w / w.sum()

    def curv(f: np.ndarray) -> np.ndarray:
        w = np.exp(f - np.max(f)) * muw
        m = w / w.sum()
        return m * (1.0 - m)

    f, fx, it, ok = _ascend(obj, grad, np.zeros(k), precond=curv)
    return VariationalReport(closed_form=closed, numeric_sup=fx,
                             iterations=it, converged=ok)


def numeric_sup_I3(omega: ProbVector, varpi: PairMeasure, mu: ProbVector,
                   C: ConnectionKernel) -> VariationalReport:
    """Maximize <f - Z(f), omega> + the I1 edge objective, with the
    vanishing-scale normalizer Z(f) = <f, mu>.

    The f-part is then <f, omega - mu>: linear, so omega != mu is an
    unbounded ray; at omega = mu the supremum is the edge closed form."""
    dev = omega.weights - mu.weights
    if np.max(np.abs(dev)) >= EQUALITY_TOL:
        direction = np.sign(dev)
        if _detect_divergence(lambda f: float(np.dot(f, dev)), direction):
            return VariationalReport(
                closed_form=math.inf, numeric_sup=math.inf, iterations=0,
                converged=False, diverged=True, witness="omega != mu")
    return numeric_sup_I1(omega, varpi, C)


def _log_mean_exp(f: np.ndarray, weights: np.ndarray) -> float:
    m = float(np.max(f))
    return m + math.log(float(np.sum(np.exp(f - m) * weights)))


def z_n(f: np.ndarray, mu: ProbVector, n: int, a_n: float) -> float:
    """Finite-n log-normalizer (1/(n a_n)) log sum e^{n a_n f} mu."""
    s = n * a_n
    return _log_mean_exp(s * np.asarray(f, dtype=float), mu.weights) / s


# ---------------------------------------------------------------------------
# product-limit check
# ---------------------------------------------------------------------------

def euler_check(alpha: float, c_val: float, family, n: int) -> float:
    """Relative error of [1 + alpha p_n]^(1/a_n) against e^(alpha c), computed
    in log space so enormous exponents never overflow."""
    a_n = family.a(n)
    p_n = min(1.0, a_n * c_val)
    if a_n * abs(alpha) * c_val >= 1.0:
        raise ValueError("need a_n |alpha| C < 1")
    log_val = math.log1p(alpha * p_n) / a_n
    log_target = alpha * c_val
    return abs(math.expm1(log_val - log_target))
