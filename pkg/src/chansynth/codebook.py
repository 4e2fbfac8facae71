"""Truncated i.i.d. codebooks and exact Renyi-covering measurements.

A codebook holds one codeword W^n(m, k) per message m and key k, drawn from
Q_W^n conditioned on the 2*eps typical set. Outputs pass through the product
conditionals restricted to the conditional 4*eps shells. Everything is
enumerated, so the reported D_inf values are exact maxima over atoms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.stats import binomtest

from .dist import (
    BudgetExceeded,
    Channel,
    DistributionError,
    EmptyTypicalSet,
    JointPmf,
    Pmf,
    SequenceDist,
    check_budget,
    product_power_mass,
    sequence_digits,
    shell_mask,
    typical_mask,
)

MAX_RESAMPLE = 100
MAX_CODEWORDS = 5_000_000
SEQ_BUDGET = 1 << 16  # |X|^n, |Y|^n and |W|^n each


def default_eps(n: int) -> float:
    return 0.2 if n <= 10 else 0.1


def set_size(n: int, rate: float) -> int:
    """ceil(e^{n R}); the 1e-9 guard keeps exact powers from rounding up."""
    if rate < 0:
        raise ValueError("rates are non-negative")
    return max(1, math.ceil(math.exp(n * rate) - 1e-9))


@dataclass(frozen=True)
class CodebookParams:
    qw: Pmf
    qx_given_w: Channel
    qy_given_w: Channel
    n: int
    r: float
    r0: float
    eps: float | None = None
    seed: int = 0
    budget: int = SEQ_BUDGET

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("blocklength must be >= 1")
        kw = len(self.qw)
        if self.qx_given_w.shape[0] != kw or self.qy_given_w.shape[0] != kw:
            raise DistributionError("conditionals need one row per codeword symbol")
        if self.r < 0 or self.r0 < 0:
            raise ValueError("rates are non-negative")
        eps = default_eps(self.n) if self.eps is None else float(self.eps)
        if eps <= 0:
            raise ValueError("eps must be positive")
        object.__setattr__(self, "eps", eps)
        for k in (kw, self.qx_given_w.shape[1], self.qy_given_w.shape[1]):
            check_budget(k**self.n, self.budget)
        if self.num_messages * self.num_keys > MAX_CODEWORDS:
            raise BudgetExceeded("codebook too large to enumerate")

    @property
    def num_messages(self) -> int:
        return set_size(self.n, self.r)

    @property
    def num_keys(self) -> int:
        return set_size(self.n, self.r0)

    @property
    def qwx(self) -> JointPmf:
        return self.qx_given_w.joint(self.qw)

    @property
    def qwy(self) -> JointPmf:
        return self.qy_given_w.joint(self.qw)

    @property
    def qxy(self) -> JointPmf:
        m = np.einsum("w,wx,wy->xy", self.qw.mass, self.qx_given_w.matrix, self.qy_given_w.matrix)
        return JointPmf(m)

    @classmethod
    def from_decomposition(cls, d, n, r, r0, eps=None, seed=0, budget=SEQ_BUDGET):
        return cls(d.pw, d.px_given_w, d.py_given_w, n, r, r0, eps, seed, budget)

    def with_seed(self, seed: int) -> "CodebookParams":
        return CodebookParams(
            self.qw, self.qx_given_w, self.qy_given_w, self.n, self.r, self.r0,
            self.eps, seed, self.budget,
        )

    def to_dict(self) -> dict:
        return {
            "qw": self.qw.mass.tolist(),
            "qx_given_w": self.qx_given_w.matrix.tolist(),
            "qy_given_w": self.qy_given_w.matrix.tolist(),
            "n": self.n,
            "r": self.r,
            "r0": self.r0,
            "eps": self.eps,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CodebookParams":
        allowed = {"qw", "qx_given_w", "qy_given_w", "n", "r", "r0", "eps", "seed", "budget"}
        extra = set(d) - allowed
        if extra:
            raise ValueError(f"unknown codebook parameters: {sorted(extra)}")
        return cls(
            Pmf(d["qw"]),
            Channel(d["qx_given_w"]),
            Channel(d["qy_given_w"]),
            int(d["n"]),
            float(d["r"]),
            float(d["r0"]),
            d.get("eps"),
            int(d.get("seed", 0)),
            int(d.get("budget", SEQ_BUDGET)),
        )


@dataclass(frozen=True)
class Codebook:
    """Codewords as an (M, K, n) integer array, plus their string indices."""

    words: np.ndarray = field(repr=False)
    alphabet: int = 2

    @property
    def num_messages(self) -> int:
        return self.words.shape[0]

    @property
    def num_keys(self) -> int:
        return self.words.shape[1]

    @property
    def index(self) -> np.ndarray:
        n = self.words.shape[2]
        powers = self.alphabet ** np.arange(n - 1, -1, -1)
        return self.words @ powers


# --------------------------------------------------------------------------
# truncated distributions


def codeword_distribution(p: CodebookParams) -> SequenceDist:
    """Q_W^n restricted to T_{2 eps}(Q_W), renormalized."""
    mass = product_power_mass(p.qw.mass, p.n)
    mask = typical_mask(p.qw, p.n, 2 * p.eps, p.budget)
    kept = np.where(mask, mass, 0.0)
    if kept.sum() <= 0:
        raise EmptyTypicalSet(f"no codeword is 2eps-typical at n={p.n}, eps={p.eps}")
    return SequenceDist(p.n, (len(p.qw),), kept / kept.sum())


def truncated_conditional(
    q: Channel, w_seq, base: JointPmf, eps: float, budget: int | None = None
) -> SequenceDist:
    """q^n(.|w^n) restricted to the conditional eps-shell of ``base`` (W on rows).

    Callers pass 4*eps for the codebook shells.
    """
    w = np.asarray(w_seq, dtype=int)
    n = len(w)
    kx = q.shape[1]
    mask = shell_mask(base, w, eps, budget)
    digits = sequence_digits(kx, n)
    with np.errstate(divide="ignore"):
        logq = np.log(q.matrix)
    logp = logq[w[None, :], digits].sum(axis=1)
    mass = np.where(mask, np.exp(logp), 0.0)
    if mass.sum() <= 0:
        raise EmptyTypicalSet(f"empty conditional shell for w^n = {tuple(w.tolist())}")
    return SequenceDist(n, (kx,), mass / mass.sum())


def _shell_table(q: Channel, base: JointPmf, words: np.ndarray, eps: float, chunk=256):
    """Sparse matrix whose row i is the truncated conditional for words[i]
    (all-zero when the shell is empty)."""
    kw, kx = base.shape
    n = words.shape[1]
    digits = sequence_digits(kx, n)
    onehot_x = [(digits == b).astype(float) for b in range(kx)]
    with np.errstate(divide="ignore"):
        logq = np.log(q.matrix)
    target = n * base.mass
    blocks = []
    for s in range(0, words.shape[0], chunk):
        wb = words[s : s + chunk]
        ok = np.ones((wb.shape[0], digits.shape[0]), dtype=bool)
        logp = np.zeros((wb.shape[0], digits.shape[0]))
        for a in range(kw):
            wa = (wb == a).astype(float)
            for b in range(kx):
                cnt = wa @ onehot_x[b].T
                ok &= np.abs(cnt - target[a, b]) <= eps * target[a, b] + 1e-9
                if np.isfinite(logq[a, b]):
                    logp += cnt * logq[a, b]
                else:
                    ok &= cnt == 0
        vals = np.where(ok, np.exp(logp), 0.0)
        tot = vals.sum(axis=1, keepdims=True)
        vals = np.divide(vals, tot, out=np.zeros_like(vals), where=tot > 0)
        blocks.append(sparse.csr_matrix(vals))
    return sparse.vstack(blocks).tocsr()


@dataclass(frozen=True)
class _Tables:
    codes: np.ndarray  # string index of each 2eps-typical codeword
    cdf: np.ndarray
    valid: np.ndarray  # both shells non-empty
    tx: sparse.csr_matrix
    ty: sparse.csr_matrix


def _key(p: CodebookParams):
    return (
        p.qw.mass.tobytes(),
        p.qx_given_w.matrix.tobytes(),
        p.qx_given_w.shape,
        p.qy_given_w.matrix.tobytes(),
        p.qy_given_w.shape,
        p.n,
        p.eps,
        p.budget,
    )


_TABLES: dict = {}


def _tables(p: CodebookParams) -> _Tables:
    key = _key(p)
    if key in _TABLES:
        return _TABLES[key]
    cw = codeword_distribution(p)
    codes = np.flatnonzero(cw.mass > 0)
    words = sequence_digits(len(p.qw), p.n)[codes]
    tx = _shell_table(p.qx_given_w, p.qwx, words, 4 * p.eps)
    ty = _shell_table(p.qy_given_w, p.qwy, words, 4 * p.eps)
    valid = (np.diff(tx.indptr) > 0) & (np.diff(ty.indptr) > 0)
    cdf = np.cumsum(cw.mass[codes])
    cdf /= cdf[-1]
    if len(_TABLES) > 16:
        _TABLES.clear()
    _TABLES[key] = _Tables(codes, cdf, valid, tx, ty)
    return _TABLES[key]


# --------------------------------------------------------------------------
# sampling


def _generator(seed) -> np.random.Generator:
    """Counter-based stream: Philox keyed by the seed (or seed tuple)."""
    ss = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(key=ss.generate_state(2, dtype=np.uint64)))


def _sample_rows(p: CodebookParams) -> np.ndarray:
    """Table rows of all codewords in (m, k) row-major order.

    Uniforms are consumed from one Philox stream: first one per codeword, then
    extra draws for codewords whose shells came out empty, in index order.
    """
    t = _tables(p)
    if not t.valid.any():
        raise EmptyTypicalSet(
            f"every typical codeword has an empty 4eps shell at n={p.n}, eps={p.eps}"
        )
    total = p.num_messages * p.num_keys
    rng = _generator(p.seed)
    rows = np.searchsorted(t.cdf, rng.random(total), side="right")
    rows = np.minimum(rows, t.codes.size - 1)
    for _ in range(MAX_RESAMPLE):
        bad = np.flatnonzero(~t.valid[rows])
        if bad.size == 0:
            return rows
        fresh = np.searchsorted(t.cdf, rng.random(bad.size), side="right")
        rows[bad] = np.minimum(fresh, t.codes.size - 1)
    raise EmptyTypicalSet(
        f"codewords kept landing on empty shells after {MAX_RESAMPLE} attempts"
    )


def sample_codebook(p: CodebookParams) -> Codebook:
    t = _tables(p)
    rows = _sample_rows(p)
    digits = sequence_digits(len(p.qw), p.n)[t.codes[rows]]
    return Codebook(digits.reshape(p.num_messages, p.num_keys, p.n), len(p.qw))


def _rows_of(cb: Codebook, p: CodebookParams) -> np.ndarray:
    """Table row for every codeword, (M, K) shaped."""
    t = _tables(p)
    pos = np.searchsorted(t.codes, cb.index)
    if np.any(pos >= t.codes.size) or np.any(t.codes[np.minimum(pos, t.codes.size - 1)] != cb.index):
        raise DistributionError("codebook contains a codeword outside the 2eps-typical set")
    if np.any(~t.valid[pos]):
        raise EmptyTypicalSet("codebook contains a codeword with an empty shell")
    return pos


# --------------------------------------------------------------------------
# induced distributions and deficits


def _mixture_xy(cb: Codebook, p: CodebookParams) -> sparse.csr_matrix:
    """Sparse |X|^n x |Y|^n matrix of the induced joint output."""
    t = _tables(p)
    rows = _rows_of(cb, p).ravel()
    weights = np.bincount(rows, minlength=t.codes.size) / rows.size
    used = np.flatnonzero(weights)
    tx = t.tx[used]
    ty = t.ty[used]
    return (tx.T @ sparse.diags(weights[used]) @ ty).tocsr()


def induced_joint_output(cb: Codebook, p: CodebookParams, budget: int = 1 << 22) -> SequenceDist:
    kx, ky = p.qx_given_w.shape[1], p.qy_given_w.shape[1]
    check_budget((kx * ky) ** p.n, budget)
    mass = _mixture_xy(cb, p).toarray()
    return SequenceDist(p.n, (kx, ky), mass)


def _log_product(logm: np.ndarray, xi: np.ndarray, yi: np.ndarray, n: int) -> np.ndarray:
    """log of target^n at the atoms (xi, yi) given log target matrix."""
    kx, ky = logm.shape
    dx = sequence_digits(kx, n)[xi]
    dy = sequence_digits(ky, n)[yi]
    return logm[dx, dy].sum(axis=1)


def covering_deficit(cb: Codebook, p: CodebookParams, target: JointPmf) -> float:
    """D_inf(Q_hat_{X^n Y^n} || target^n) in nats."""
    mix = _mixture_xy(cb, p).tocoo()
    if target.shape != (p.qx_given_w.shape[1], p.qy_given_w.shape[1]):
        raise DistributionError("target alphabet does not match the codebook outputs")
    keep = mix.data > 0
    xi, yi, vals = mix.row[keep], mix.col[keep], mix.data[keep]
    with np.errstate(divide="ignore"):
        logm = np.log(target.mass)
    logt = _log_product(logm, xi, yi, p.n)
    if np.any(np.isneginf(logt)):
        return math.inf
    return float(np.max(np.log(vals) - logt))


def _per_key_x(cb: Codebook, p: CodebookParams) -> sparse.csr_matrix:
    """K x |X|^n matrix; row k is Q_hat_{X^n | K = k}."""
    t = _tables(p)
    rows = _rows_of(cb, p)
    m, k = rows.shape
    assign = sparse.csr_matrix(
        (np.full(m * k, 1.0 / m), (np.tile(np.arange(k), m), rows.ravel())),
        shape=(k, t.codes.size),
    )
    return (assign @ t.tx).tocsr()


def centralized_deficits(
    cb: Codebook, p: CodebookParams, qx: Pmf, eps: float | None = None
) -> tuple[float, float]:
    """(max_k D_inf(Q_hat_{X|k} || qx^n), max_k D_inf(Q_tilde_X || Q_hat_{X|k})),
    Q_tilde_X being qx^n truncated to T_eps(qx)."""
    eps = p.eps if eps is None else eps
    n = p.n
    per_key = _per_key_x(cb, p).tocoo()
    logqx = np.log(np.maximum(product_power_mass(qx.mass, n), 1e-300))
    zero = product_power_mass(qx.mass, n) <= 0
    if np.any(zero[per_key.col[per_key.data > 0]]):
        forward = math.inf
    else:
        keep = per_key.data > 0
        forward = float(np.max(np.log(per_key.data[keep]) - logqx[per_key.col[keep]]))
    typ = np.flatnonzero(typical_mask(qx, n, eps, p.budget))
    if typ.size == 0:
        raise EmptyTypicalSet("T_eps(qx) is empty")
    qt = product_power_mass(qx.mass, n)[typ]
    qt = qt / qt.sum()
    dense = per_key.tocsr()[:, typ].toarray()
    if np.any(dense <= 0):
        return forward, math.inf
    reverse = float(np.max(np.log(qt)[None, :] - np.log(dense)))
    return forward, reverse


# --------------------------------------------------------------------------
# Monte Carlo


def trial_seed(seed: int, trial: int) -> tuple:
    return (int(seed), int(trial))


@dataclass(frozen=True)
class CoveringReport:
    n: int
    r: float
    r0: float
    trials: int
    threshold: float
    kind: str
    deficits: tuple
    fraction_below: float
    ci95: tuple

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "rates": {"r": self.r, "r0": self.r0, "units": "nats"},
            "trials": self.trials,
            "threshold": self.threshold,
            "kind": self.kind,
            "fraction_below": self.fraction_below,
            "ci95": list(self.ci95),
            "per_trial_deficits": [d if math.isfinite(d) else "inf" for d in self.deficits],
        }


def covering_experiment(
    p: CodebookParams,
    trials: int,
    threshold: float,
    kind: str = "distributed",
    target: JointPmf | None = None,
) -> CoveringReport:
    """Fraction of independently seeded codebooks whose deficit is below
    ``threshold``. Trial t uses the seed tuple (p.seed, t).

    ``kind`` is "distributed" (D_inf against target^n, default the induced
    Q_XY) or "centralized" (larger of the two per-key X deficits).
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if kind not in ("distributed", "centralized"):
        raise ValueError("kind must be 'distributed' or 'centralized'")
    target = p.qxy if target is None else target
    qx = p.qwx.py
    deficits = []
    for t in range(trials):
        pt = p.with_seed(trial_seed(p.seed, t))
        cb = sample_codebook(pt)
        if kind == "distributed":
            deficits.append(covering_deficit(cb, pt, target))
        else:
            deficits.append(max(centralized_deficits(cb, pt, qx)))
    hits = sum(d < threshold for d in deficits)
    ci = binomtest(hits, trials).proportion_ci(confidence_level=0.95, method="exact")
    return CoveringReport(
        p.n, p.r, p.r0, trials, float(threshold), kind, tuple(deficits),
        hits / trials, (float(ci.low), float(ci.high)),
    )
