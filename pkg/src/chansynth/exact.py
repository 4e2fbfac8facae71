"""Exact synthesis from an approximate code plus a lossless fallback.

If a code synthesizes P(y^n | x^n) with P <= e^delta pi^n on the typical
inputs, then pi^n = e^{-delta} P + (1 - e^{-delta}) P_hat for a genuine
conditional P_hat. Flipping a coin U with P(U=1) = e^{-delta} and falling
back to sending y^n verbatim when U = 0 (or when x^n is atypical) produces
pi^n exactly.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .codebook import (
    Codebook,
    CodebookParams,
    _rows_of,
    _tables,
    sample_codebook,
)
from .dist import (
    LOG2,
    Channel,
    DistributionError,
    JointPmf,
    Pmf,
    channel_power,
    check_budget,
    entropy,
    product_power_mass,
    sequence_digits,
    typical_mask,
)
from .regions import Decomposition

EXACT_TOL = 1e-12
DELTA_SLACK = 1e-12


class PreconditionError(ValueError):
    """Some atom has P > e^delta pi; carries the offending atom."""

    def __init__(self, msg, witness):
        super().__init__(msg)
        self.witness = witness


# --------------------------------------------------------------------------
# Huffman coding


def huffman_lengths(p) -> np.ndarray:
    """Codeword lengths of a binary Huffman code; zero-mass symbols get 0.

    Merges the two least likely nodes; ties go to the node holding the
    smallest symbol index, then to the node created first.
    """
    mass = p.mass if isinstance(p, Pmf) else np.asarray(p, dtype=float)
    live = [int(i) for i in np.flatnonzero(mass > 0)]
    if not live:
        raise DistributionError("Huffman coding needs a non-empty support")
    lengths = np.zeros(mass.size, dtype=int)
    if len(live) == 1:
        return lengths
    heap = [(float(mass[i]), i, c, [i]) for c, i in enumerate(live)]
    heapq.heapify(heap)
    created = len(heap)
    while len(heap) > 1:
        p1, s1, _, m1 = heapq.heappop(heap)
        p2, s2, _, m2 = heapq.heappop(heap)
        for i in m1 + m2:
            lengths[i] += 1
        heapq.heappush(heap, (p1 + p2, min(s1, s2), created, m1 + m2))
        created += 1
    return lengths


def expected_length(p, lengths) -> float:
    mass = p.mass if isinstance(p, Pmf) else np.asarray(p, dtype=float)
    return float(mass @ lengths)


@dataclass(frozen=True)
class VariableLengthCode:
    """Per-key Huffman lengths for the message given the key (bits)."""

    lengths: np.ndarray = field(repr=False)  # (num_keys, num_messages)
    p_key: np.ndarray = field(repr=False)
    per_key_length: np.ndarray = field(repr=False)
    per_key_entropy: np.ndarray = field(repr=False)

    @property
    def expected_length(self) -> float:
        return float(self.p_key @ self.per_key_length)

    @property
    def conditional_entropy(self) -> float:
        return float(self.p_key @ self.per_key_entropy)

    @property
    def max_length(self) -> float:
        live = self.p_key > 0
        return float(self.per_key_length[live].max())

    def kraft_sums(self) -> np.ndarray:
        return np.array(
            [np.sum(np.where(row > 0, 2.0 ** -row.astype(float), 0.0)) if row.any() else 1.0
             for row in self.lengths]
        )


def conditional_huffman_code(joint) -> VariableLengthCode:
    """Huffman code for W given K from a joint matrix with W on rows, K on columns."""
    m = np.asarray(joint, dtype=float)
    if m.ndim != 2 or np.any(m < 0) or abs(m.sum() - 1.0) > 1e-9:
        raise DistributionError("joint of (W, K) must be a pmf matrix")
    pk = m.sum(axis=0)
    nw, nk = m.shape
    lengths = np.zeros((nk, nw), dtype=int)
    lk = np.zeros(nk)
    hk = np.zeros(nk)
    for k in range(nk):
        if pk[k] <= 0:
            continue
        cond = m[:, k] / pk[k]
        lengths[k] = huffman_lengths(cond)
        lk[k] = expected_length(cond, lengths[k])
        hk[k] = entropy(cond) / LOG2
    return VariableLengthCode(lengths, pk, lk, hk)


@dataclass(frozen=True)
class HuffmanRate:
    length_bits: float
    entropy_bits: float
    max_key_length_bits: float
    sandwich: bool


def conditional_huffman_rate(joint, tol: float = 1e-12) -> HuffmanRate:
    """Expected conditional Huffman length L and the check H(W|K) <= L < H(W|K) + 1.

    ``tol`` absorbs float rounding on the lower side only (dyadic cases
    have L = H exactly).
    """
    code = conditional_huffman_code(joint)
    length, h = code.expected_length, code.conditional_entropy
    return HuffmanRate(length, h, code.max_length, h - tol <= length < h + 1.0)


# --------------------------------------------------------------------------
# rate accounting


def expected_rate(
    p_typical: float, n: int, delta: float, r: float, y_size: int
) -> dict:
    """Rate (nats/symbol) of the mixed code, with its components.

    p_typical is pi_X^n(T_eps); r is the approximate code's rate; the coin
    costs one bit per block, charged as 1/n.
    """
    if not 0.0 <= p_typical <= 1.0:
        raise ValueError("p_typical must be a probability")
    keep = math.exp(-delta)
    log_y = math.log(y_size)
    flag = 1.0 / n
    typical_part = flag + keep * r + (1.0 - keep) * log_y
    total = p_typical * typical_part + (1.0 - p_typical) * log_y
    return {
        "total": total,
        "flag": flag,
        "code": keep * r,
        "fallback_typical": (1.0 - keep) * log_y,
        "fallback_atypical": (1.0 - p_typical) * log_y,
        "p_typical": p_typical,
        "keep_probability": keep,
    }


# --------------------------------------------------------------------------
# synthesized channels


@dataclass(frozen=True)
class SynthesizedChannel:
    """Rows P(. | x^n) over Y^n for the typical inputs listed in ``x_index``."""

    n: int
    x_size: int
    y_size: int
    x_index: np.ndarray = field(repr=False)
    rows: np.ndarray = field(repr=False)
    eps: float = 0.0

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=float)
        if rows.shape != (len(self.x_index), self.y_size**self.n):
            raise DistributionError("rows do not match the typical inputs and Y^n")
        if rows.size and (rows.min() < -EXACT_TOL or np.abs(rows.sum(axis=1) - 1).max() > 1e-9):
            raise DistributionError("synthesized rows must be conditional pmfs")
        object.__setattr__(self, "rows", rows)


def typical_inputs(pi: JointPmf, n: int, eps: float, budget: int | None = None):
    """Indices of T_eps(pi_X), the truncated pmf pi~_X on them, and pi_X^n(T_eps)."""
    px = pi.px
    mask = typical_mask(px, n, eps, budget)
    idx = np.flatnonzero(mask)
    full = product_power_mass(px.mass, n)
    mass = full[idx]
    return idx, mass / mass.sum(), float(mass.sum())


def _target_rows(pi: JointPmf, n: int, x_index: np.ndarray) -> np.ndarray:
    """pi^n_{Y|X}(. | x^n) for the listed x^n."""
    cond = pi.y_given_x().matrix
    digits = sequence_digits(pi.shape[0], n)[x_index]
    out = np.ones((len(x_index), 1))
    for i in range(n):
        out = np.einsum("ab,ac->abc", out, cond[digits[:, i]]).reshape(len(x_index), -1)
    return out


@dataclass(frozen=True)
class ApproximateCode:
    """Likelihood encoder over a codebook: given (x^n, k) choose m with
    probability proportional to Q~_X(x^n | w(m, k)); decode y^n ~ Q~_Y(. | w(m, k))."""

    channel: SynthesizedChannel | None
    message_key_joint: np.ndarray | None = field(repr=False)
    covered: bool = True
    uncovered: tuple = ()


def synthesize_channel(cb: Codebook, p: CodebookParams, pi: JointPmf, eps: float | None = None):
    """Channel produced by the likelihood encoder on the typical inputs of pi_X."""
    eps = p.eps if eps is None else eps
    n = p.n
    ky = p.qy_given_w.shape[1]
    t = _tables(p)
    rows = _rows_of(cb, p)
    x_index, px_tilde, _ = typical_inputs(pi, n, eps, p.budget)
    check_budget(len(x_index) * ky**n, 1 << 24)
    lik_all = t.tx[:, x_index].toarray()
    m_size, k_size = rows.shape
    out = np.zeros((len(x_index), ky**n))
    mk = np.zeros((m_size, k_size))
    for k in range(k_size):
        lik = lik_all[rows[:, k]]  # (M, T)
        norm = lik.sum(axis=0)
        if np.any(norm <= 0):
            miss = int(x_index[np.flatnonzero(norm <= 0)[0]])
            return ApproximateCode(None, None, False, (k, miss))
        post = lik / norm
        out += (t.ty[rows[:, k]].T @ post).T
        mk[:, k] = post @ px_tilde
    out /= k_size
    mk /= k_size
    ch = SynthesizedChannel(n, pi.shape[0], ky, x_index, out, eps)
    return ApproximateCode(ch, mk)


def channel_deficit(ch: SynthesizedChannel, pi: JointPmf) -> float:
    """D_inf(P || pi^n_{Y|X} | pi~_X): largest log ratio over typical rows."""
    target = _target_rows(pi, ch.n, ch.x_index)
    pos = ch.rows > 0
    if np.any(target[pos] <= 0):
        return math.inf
    return float(np.max(np.log(ch.rows[pos]) - np.log(target[pos])))


def mixture_decompose(ch: SynthesizedChannel, pi: JointPmf, delta: float) -> SynthesizedChannel:
    """Residual P_hat = (e^delta pi - P) / (e^delta - 1) on the typical rows."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    target = _target_rows(pi, ch.n, ch.x_index)
    scale = math.exp(delta)
    excess = ch.rows - scale * target
    if np.any(excess > EXACT_TOL * scale):
        r, c = np.unravel_index(int(np.argmax(excess)), excess.shape)
        witness = (int(ch.x_index[r]), int(c))
        raise PreconditionError(
            f"P exceeds e^delta pi at (x^n, y^n) = {witness}", witness
        )
    resid = (scale * target - ch.rows) / (scale - 1.0)
    resid = np.where(resid < 0, 0.0, resid)
    return SynthesizedChannel(ch.n, ch.x_size, ch.y_size, ch.x_index, resid, ch.eps)


@dataclass(frozen=True)
class ExactCode:
    delta: float
    keep_probability: float
    composite: np.ndarray = field(repr=False)  # |X|^n x |Y|^n
    max_abs_error: float = 0.0
    branches: dict = field(default_factory=dict)


def assemble_exact_code(
    ch: SynthesizedChannel, pi: JointPmf, delta: float
) -> ExactCode:
    """Composite channel of the three-branch scheme and its distance to pi^n."""
    n = ch.n
    check_budget((pi.shape[0] * pi.shape[1]) ** n, 1 << 24)
    resid = mixture_decompose(ch, pi, delta)
    keep = math.exp(-delta)
    full = channel_power(pi.y_given_x(), n, 1 << 24)
    comp = full.copy()
    comp[ch.x_index] = keep * ch.rows + (1.0 - keep) * resid.rows
    err = float(np.abs(comp - full).max())
    branches = {
        "typical_code": "U=1 and x^n typical: run the approximate code",
        "typical_fallback": "U=0 and x^n typical: draw y^n from the residual, send it losslessly",
        "atypical": "x^n atypical: draw y^n from pi^n_{Y|X}, send it losslessly",
        "typical_inputs": int(len(ch.x_index)),
    }
    return ExactCode(delta, keep, comp, err, branches)


def _frac(v: float) -> Fraction:
    return Fraction(repr(float(v)))


def verify_rational(ch: SynthesizedChannel, pi: JointPmf) -> bool:
    """Exact check in rational arithmetic that the three-branch mixture
    reproduces pi^n on every typical row and that the residual is
    non-negative. P enters as the exact binary value of its floats, pi as
    the rationals of its decimal representation, and e^delta as the
    rational max P/pi."""
    if ch.n > 6:
        raise ValueError("rational verification is limited to n <= 6")
    nx, ny = pi.shape
    cond = [[_frac(pi.mass[x, y]) / sum(_frac(pi.mass[x, b]) for b in range(ny))
             for y in range(ny)] for x in range(nx)]
    xd = sequence_digits(nx, ch.n)
    yd = sequence_digits(ny, ch.n)
    prow = [[Fraction(float(v)) for v in row] for row in ch.rows]
    target = []
    for xi in ch.x_index:
        row = []
        for yv in yd:
            t = Fraction(1)
            for a, b in zip(xd[xi], yv):
                t *= cond[a][b]
            row.append(t)
        target.append(row)
    ratio = max(p / t for pr, tr in zip(prow, target) for p, t in zip(pr, tr) if p > 0)
    if ratio == 1:
        return all(p == t for pr, tr in zip(prow, target) for p, t in zip(pr, tr))
    for pr, tr in zip(prow, target):
        for p, t in zip(pr, tr):
            resid = (ratio * t - p) / (ratio - 1)
            if resid < 0:
                return False
            if p / ratio + (1 - 1 / ratio) * resid != t:
                return False
    return True


# --------------------------------------------------------------------------
# end to end


@dataclass(frozen=True)
class DemoReport:
    n: int
    seed: int
    r: float
    r0: float
    eps: float
    num_messages: int
    num_keys: int
    deficit: float
    delta: float | None
    finite: bool
    exactness_max_abs_error: float | None
    rational_exact: bool | None
    measured_rate: float | None
    rate_breakdown: dict | None
    fallback_probability: float | None
    huffman: dict | None
    diagnostics: str = ""

    def to_dict(self) -> dict:
        def num(v):
            if isinstance(v, float) and not math.isfinite(v):
                return "inf" if v > 0 else "-inf"
            return v

        return {k: num(v) for k, v in self.__dict__.items()}


def end_to_end_demo(
    pi: JointPmf,
    n: int,
    r0: float,
    r: float,
    seed: int = 0,
    decomposition: Decomposition | None = None,
    eps: float | None = None,
    rational: bool = False,
) -> DemoReport:
    """Codebook, measured deficit, mixture, exact code, verification, rates.

    Rates are in nats. The default decomposition is W = Y.
    """
    d = decomposition or Decomposition.w_equals_y(pi)
    p = CodebookParams.from_decomposition(d, n, r, r0, eps, seed)
    cb = sample_codebook(p)
    approx = synthesize_channel(cb, p, pi)
    base = dict(n=n, seed=seed, r=r, r0=r0, eps=p.eps,
                num_messages=p.num_messages, num_keys=p.num_keys)
    if not approx.covered:
        k, x = approx.uncovered
        return DemoReport(
            **base, deficit=math.inf, delta=None, finite=False,
            exactness_max_abs_error=None, rational_exact=None, measured_rate=None,
            rate_breakdown=None, fallback_probability=None, huffman=None,
            diagnostics=f"key {k} leaves typical input {x} uncovered; deficit is infinite",
        )
    deficit = channel_deficit(approx.channel, pi)
    if not math.isfinite(deficit):
        return DemoReport(
            **base, deficit=deficit, delta=None, finite=False,
            exactness_max_abs_error=None, rational_exact=None, measured_rate=None,
            rate_breakdown=None, fallback_probability=None, huffman=None,
            diagnostics="synthesized channel puts mass where pi^n is zero",
        )
    delta = deficit + DELTA_SLACK
    code = assemble_exact_code(approx.channel, pi, delta)
    rational_ok = verify_rational(approx.channel, pi) if rational else None
    hr = conditional_huffman_rate(approx.message_key_joint)
    _, _, p_typ = typical_inputs(pi, n, p.eps, p.budget)
    code_rate = hr.length_bits * LOG2 / n
    breakdown = expected_rate(p_typ, n, delta, code_rate, pi.shape[1])
    return DemoReport(
        **base,
        deficit=deficit,
        delta=delta,
        finite=True,
        exactness_max_abs_error=code.max_abs_error,
        rational_exact=rational_ok,
        measured_rate=breakdown["total"],
        rate_breakdown=breakdown,
        fallback_probability=1.0 - code.keep_probability,
        huffman={
            "length_bits": hr.length_bits,
            "conditional_entropy_bits": hr.entropy_bits,
            "max_key_length_bits": hr.max_key_length_bits,
            "sandwich": hr.sandwich,
        },
    )
