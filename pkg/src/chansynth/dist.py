"""Finite discrete distributions and the entropic quantities built on them.

All logarithms are natural. Entropies and divergences are returned in nats;
divide by ``LOG2`` to get bits.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction
from typing import Sequence

import numpy as np

LOG2 = math.log(2.0)

NORM_TOL = 1e-9
RENORM_TOL = 1e-6
DEFAULT_BUDGET = 200_000


class DistributionError(ValueError):
    """Invalid probability data (negative mass, bad normalization, shape mismatch)."""


class BudgetExceeded(ValueError):
    """Explicit enumeration would exceed the configured atom budget."""


class EmptyTypicalSet(ValueError):
    """A typical set or conditional shell has no elements."""


def _as_mass(values) -> np.ndarray:
    out = []
    for v in np.ravel(np.asarray(values, dtype=object)):
        if isinstance(v, str):
            v = Decimal(v)
        out.append(float(v))
    return np.asarray(out, dtype=float).reshape(np.shape(values))


def _normalized(mass: np.ndarray) -> np.ndarray:
    mass = np.array(mass, dtype=float)
    if not np.all(np.isfinite(mass)):
        raise DistributionError("masses must be finite")
    if np.any(mass < 0):
        if mass.min() < -1e-12:
            raise DistributionError(f"negative mass {mass.min():.3g}")
        mass = np.clip(mass, 0.0, None)
    total = mass.sum()
    if abs(total - 1.0) > RENORM_TOL:
        raise DistributionError(f"masses sum to {total!r}, not 1")
    if abs(total - 1.0) > 0.0:
        mass = mass / total
    mass.setflags(write=False)
    return mass


@dataclass(frozen=True)
class Pmf:
    """Probability mass function over an ordered list of symbols."""

    mass: np.ndarray
    symbols: tuple = None

    def __post_init__(self):
        mass = _normalized(_as_mass(self.mass))
        if mass.ndim != 1 or mass.size == 0:
            raise DistributionError("Pmf mass must be a non-empty vector")
        symbols = tuple(range(mass.size)) if self.symbols is None else tuple(self.symbols)
        if len(symbols) != mass.size:
            raise DistributionError("symbols and mass differ in length")
        if len(set(symbols)) != len(symbols):
            raise DistributionError("duplicate symbols")
        object.__setattr__(self, "mass", mass)
        object.__setattr__(self, "symbols", symbols)

    def __len__(self):
        return self.mass.size

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.mass > 0)

    @classmethod
    def uniform(cls, k: int) -> "Pmf":
        return cls(np.full(k, 1.0 / k))

    @classmethod
    def point(cls, k: int, i: int) -> "Pmf":
        m = np.zeros(k)
        m[i] = 1.0
        return cls(m)

    @classmethod
    def bernoulli(cls, p: float) -> "Pmf":
        """Pmf on {0, 1} with P(1) = p."""
        return cls([1.0 - p, p])

    def to_dict(self) -> dict:
        return {"symbols": list(self.symbols), "mass": self.mass.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Pmf":
        return cls(d["mass"], d.get("symbols"))


@dataclass(frozen=True)
class JointPmf:
    """Joint pmf of (X, Y) stored as a |X| x |Y| matrix."""

    mass: np.ndarray
    x_symbols: tuple = None
    y_symbols: tuple = None

    def __post_init__(self):
        mass = _as_mass(self.mass)
        if mass.ndim != 2:
            raise DistributionError("JointPmf mass must be a matrix")
        mass = _normalized(mass)
        xs = tuple(range(mass.shape[0])) if self.x_symbols is None else tuple(self.x_symbols)
        ys = tuple(range(mass.shape[1])) if self.y_symbols is None else tuple(self.y_symbols)
        if len(xs) != mass.shape[0] or len(ys) != mass.shape[1]:
            raise DistributionError("symbol lists do not match the mass matrix")
        object.__setattr__(self, "mass", mass)
        object.__setattr__(self, "x_symbols", xs)
        object.__setattr__(self, "y_symbols", ys)

    @property
    def shape(self):
        return self.mass.shape

    @property
    def px(self) -> Pmf:
        return Pmf(self.mass.sum(axis=1), self.x_symbols)

    @property
    def py(self) -> Pmf:
        return Pmf(self.mass.sum(axis=0), self.y_symbols)

    def y_given_x(self) -> "Channel":
        return Channel.from_joint(self.mass)

    def x_given_y(self) -> "Channel":
        return Channel.from_joint(self.mass.T)

    def transpose(self) -> "JointPmf":
        return JointPmf(self.mass.T, self.y_symbols, self.x_symbols)

    @classmethod
    def product(cls, px: Pmf, py: Pmf) -> "JointPmf":
        return cls(np.outer(px.mass, py.mass), px.symbols, py.symbols)

    @classmethod
    def dsbs(cls, p: float) -> "JointPmf":
        """Doubly symmetric binary source: uniform X, Y = X xor Bern(p)."""
        if not 0.0 <= p <= 1.0:
            raise DistributionError("p must lie in [0, 1]")
        a0, b0 = (1.0 - p) / 2.0, p / 2.0
        return cls([[a0, b0], [b0, a0]])

    def to_dict(self) -> dict:
        return {
            "symbols": [list(self.x_symbols), list(self.y_symbols)],
            "mass": self.mass.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "JointPmf":
        syms = d.get("symbols") or [None, None]
        return cls(d["mass"], syms[0], syms[1])


@dataclass(frozen=True)
class Channel:
    """Conditional pmf: one output distribution per input symbol (rows)."""

    matrix: np.ndarray
    in_symbols: tuple = None
    out_symbols: tuple = None

    def __post_init__(self):
        m = _as_mass(self.matrix)
        if m.ndim != 2:
            raise DistributionError("channel matrix must be 2-D")
        rows = [_normalized(r) for r in m]
        m = np.vstack(rows)
        m.setflags(write=False)
        ins = tuple(range(m.shape[0])) if self.in_symbols is None else tuple(self.in_symbols)
        outs = tuple(range(m.shape[1])) if self.out_symbols is None else tuple(self.out_symbols)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "in_symbols", ins)
        object.__setattr__(self, "out_symbols", outs)

    @property
    def shape(self):
        return self.matrix.shape

    def row(self, i: int) -> Pmf:
        return Pmf(self.matrix[i], self.out_symbols)

    @classmethod
    def from_joint(cls, mass: np.ndarray) -> "Channel":
        """Rows of ``mass`` normalized; zero rows become uniform (never used)."""
        mass = np.asarray(mass, dtype=float)
        tot = mass.sum(axis=1, keepdims=True)
        rows = np.where(tot > 0, mass / np.where(tot > 0, tot, 1.0), 1.0 / mass.shape[1])
        return cls(rows)

    @classmethod
    def bsc(cls, a: float) -> "Channel":
        return cls([[1.0 - a, a], [a, 1.0 - a]])

    def joint(self, p: Pmf) -> JointPmf:
        return JointPmf(p.mass[:, None] * self.matrix, p.symbols, self.out_symbols)

    def to_dict(self) -> dict:
        return {
            "symbols": [list(self.in_symbols), list(self.out_symbols)],
            "mass": self.matrix.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Channel":
        syms = d.get("symbols") or [None, None]
        return cls(d["mass"], syms[0], syms[1])


def load_json(path, kind=None):
    """Read a Pmf, JointPmf or Channel from ``{"symbols": ..., "mass": ...}``.

    Masses may be numbers or exact decimal strings. ``kind`` is one of
    ``"pmf"``, ``"joint"``, ``"channel"``; when omitted it is inferred from
    the shape of ``mass``.
    """
    with open(path) as fh:
        d = json.load(fh)
    if kind is None:
        kind = "joint" if np.ndim(np.asarray(d["mass"], dtype=object)) == 2 else "pmf"
    return {"pmf": Pmf, "joint": JointPmf, "channel": Channel}[kind].from_dict(d)


# --------------------------------------------------------------------------
# entropic quantities (nats)


def _xlogx(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    out = np.zeros_like(m)
    pos = m > 0
    out[pos] = m[pos] * np.log(m[pos])
    return out


def _mass(p) -> np.ndarray:
    return p.mass if isinstance(p, (Pmf, JointPmf, SequenceDist)) else np.asarray(p, dtype=float)


def entropy(p) -> float:
    """Shannon entropy in nats, with 0 log 0 = 0."""
    return max(0.0, float(-_xlogx(_mass(p)).sum()))


def binary_entropy(x: float) -> float:
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"binary_entropy needs x in [0, 1], got {x}")
    return float(-_xlogx(np.array([x, 1.0 - x])).sum())


def mutual_information(j) -> float:
    m = _mass(j)
    val = entropy(m.sum(axis=1)) + entropy(m.sum(axis=0)) - entropy(m)
    return max(0.0, val)


def conditional_entropy(j) -> float:
    """H(Y | X) for a joint matrix with X on rows."""
    m = _mass(j)
    return max(0.0, entropy(m) - entropy(m.sum(axis=1)))


def _check_same(p, q):
    a, b = _mass(p), _mass(q)
    if a.shape != b.shape:
        raise DistributionError("distributions live on different symbol sets")
    return a.ravel(), b.ravel()


def kl_divergence(p, q) -> float:
    a, b = _check_same(p, q)
    s = a > 0
    if np.any(b[s] <= 0):
        return math.inf
    return max(0.0, float(np.sum(a[s] * (np.log(a[s]) - np.log(b[s])))))


def renyi_inf_divergence(p, q) -> float:
    """log of the largest likelihood ratio p/q over supp(p)."""
    a, b = _check_same(p, q)
    s = a > 0
    if np.any(b[s] <= 0):
        return math.inf
    return float(np.max(np.log(a[s]) - np.log(b[s])))


def conditional_renyi_inf_divergence(p: Channel, q: Channel, px: Pmf) -> float:
    """D_inf(P_{Y|X} || Q_{Y|X} | P_X), evaluated on the joint P_X P_{Y|X}."""
    return renyi_inf_divergence(
        px.mass[:, None] * p.matrix, px.mass[:, None] * q.matrix
    )


def tv_distance(p, q) -> float:
    a, b = _check_same(p, q)
    return float(min(1.0, 0.5 * np.abs(a - b).sum()))


# --------------------------------------------------------------------------
# sequences


def sequence_digits(k: int, n: int) -> np.ndarray:
    """All k**n strings as rows of digits; row index is the mixed-radix code.

    The first symbol of a string is its most significant digit.
    """
    idx = np.arange(k**n)
    powers = k ** np.arange(n - 1, -1, -1)
    return (idx[:, None] // powers[None, :]) % k


def encode(seq: Sequence[int], k: int) -> int:
    out = 0
    for s in seq:
        out = out * k + int(s)
    return out


def decode(index: int, k: int, n: int) -> tuple:
    digits = []
    for _ in range(n):
        index, r = divmod(index, k)
        digits.append(r)
    return tuple(reversed(digits))


@dataclass(frozen=True)
class SequenceDist:
    """Pmf over strings of length ``n`` enumerated by mixed-radix index.

    ``sizes`` holds one alphabet size for a single sequence, or two for a pair
    of sequences (X^n, Y^n); the mass is then a matrix.
    """

    n: int
    sizes: tuple
    mass: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.n < 1:
            raise DistributionError("blocklength must be >= 1")
        sizes = tuple(int(s) for s in self.sizes)
        shape = tuple(s**self.n for s in sizes)
        mass = np.asarray(self.mass, dtype=float).reshape(shape)
        if abs(mass.sum() - 1.0) > RENORM_TOL or mass.min() < -1e-12:
            raise DistributionError("sequence masses must form a pmf")
        mass = np.clip(mass, 0.0, None) / mass.sum()
        mass.setflags(write=False)
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "mass", mass)

    def prob(self, *seqs) -> float:
        idx = tuple(encode(s, k) for s, k in zip(seqs, self.sizes))
        return float(self.mass[idx])

    @property
    def support(self):
        return np.nonzero(self.mass > 0)


def check_budget(atoms: int, budget: int | None):
    budget = DEFAULT_BUDGET if budget is None else budget
    if atoms > budget:
        raise BudgetExceeded(f"{atoms} atoms exceed the enumeration budget {budget}")


def product_power_mass(m: np.ndarray, n: int) -> np.ndarray:
    out = np.ones(1)
    for _ in range(n):
        out = np.kron(out, m)
    return out


def product_power(p: Pmf, n: int, budget: int | None = None) -> SequenceDist:
    check_budget(len(p) ** n, budget)
    return SequenceDist(n, (len(p),), product_power_mass(p.mass, n))


def joint_power(j: JointPmf, n: int, budget: int | None = None) -> JointPmf:
    """pi^n as a joint pmf over (X^n, Y^n), alphabets in mixed-radix order."""
    kx, ky = j.shape
    check_budget((kx * ky) ** n, budget)
    out = np.ones((1, 1))
    for _ in range(n):
        out = np.kron(out, j.mass)
    return JointPmf(out)


def channel_power(c: Channel, n: int, budget: int | None = None) -> np.ndarray:
    """Row-stochastic matrix of the memoryless extension c^n."""
    kx, ky = c.shape
    check_budget((kx * ky) ** n, budget)
    out = np.ones((1, 1))
    for _ in range(n):
        out = np.kron(out, c.matrix)
    return out


# --------------------------------------------------------------------------
# strong typicality


@dataclass(frozen=True)
class TypicalSetSpec:
    """Strongly typical set T_eps^(n)(base): |T(a) - P(a)| <= eps P(a) for all a."""

    base: Pmf | JointPmf
    eps: float
    n: int

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.n < 1:
            raise ValueError("n must be >= 1")


# absolute slack on counts so that boundary types are decided by exact arithmetic
_COUNT_SLACK = 1e-9


def _typical_counts(counts: np.ndarray, probs: np.ndarray, n: int, eps: float) -> np.ndarray:
    """Membership from per-cell counts; counts has the cell axis last."""
    target = n * probs
    return np.all(np.abs(counts - target) <= eps * target + _COUNT_SLACK, axis=-1)


def is_strongly_typical(x_seq, spec: TypicalSetSpec, y_seq=None) -> bool:
    """Exact membership of x^n (or of the pair (x^n, y^n)) in T_eps^(n)."""
    x = np.asarray(x_seq, dtype=int)
    if len(x) != spec.n:
        raise ValueError("sequence length differs from the typical-set blocklength")
    if isinstance(spec.base, JointPmf):
        if y_seq is None:
            raise ValueError("joint typicality needs both sequences")
        y = np.asarray(y_seq, dtype=int)
        kx, ky = spec.base.shape
        counts = np.bincount(x * ky + y, minlength=kx * ky).astype(float)
        return bool(_typical_counts(counts, spec.base.mass.ravel(), spec.n, spec.eps))
    k = len(spec.base)
    counts = np.bincount(x, minlength=k).astype(float)
    return bool(_typical_counts(counts, spec.base.mass, spec.n, spec.eps))


def is_conditionally_typical(x_seq, y_seq, joint: JointPmf, eps: float) -> bool:
    """y^n in T_eps^(n)(P_XY | x^n), i.e. (x^n, y^n) jointly typical."""
    return is_strongly_typical(x_seq, TypicalSetSpec(joint, eps, len(x_seq)), y_seq)


def typical_mask(p: Pmf, n: int, eps: float, budget: int | None = None) -> np.ndarray:
    """Boolean mask over all |X|^n strings marking T_eps^(n)(p)."""
    k = len(p)
    check_budget(k**n, budget)
    digits = sequence_digits(k, n)
    counts = np.stack([(digits == a).sum(axis=1) for a in range(k)], axis=-1).astype(float)
    return _typical_counts(counts, p.mass, n, eps)


def shell_mask(joint: JointPmf, w_seq, eps: float, budget: int | None = None) -> np.ndarray:
    """Mask over all x^n with (w^n, x^n) in T_eps^(n)(joint); W on the rows of joint."""
    w = np.asarray(w_seq, dtype=int)
    n = len(w)
    kw, kx = joint.shape
    check_budget(kx**n, budget)
    digits = sequence_digits(kx, n)
    cols = []
    for a in range(kw):
        sel = digits[:, w == a]
        for b in range(kx):
            cols.append((sel == b).sum(axis=1))
    counts = np.stack(cols, axis=-1).astype(float)
    return _typical_counts(counts, joint.mass.ravel(), n, eps)


def truncate_to_typical(p: Pmf, n: int, eps: float, budget: int | None = None) -> SequenceDist:
    """p^n restricted to T_eps^(n)(p) and renormalized."""
    mass = product_power(p, n, budget).mass
    mask = typical_mask(p, n, eps, budget)
    kept = np.where(mask, mass, 0.0)
    total = kept.sum()
    if total <= 0:
        raise EmptyTypicalSet(f"T_eps^(n) is empty for n={n}, eps={eps}")
    return SequenceDist(n, (len(p),), kept / total)


def as_fraction_matrix(m) -> list:
    """Rational copy of a float array (exact binary value of each float)."""
    return [[Fraction(float(v)) for v in row] for row in np.atleast_2d(m)]
