"""Rate regions for exact and approximate channel synthesis.

Every region here is a union over decompositions P_W P_{X|W} P_{Y|W} of
(R0, R) pairs with ``R >= r_min`` and ``R0 + R >= sum_min``. Values are in
nats unless a curve's ``units`` says otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np
from scipy.optimize import brentq, minimize, minimize_scalar

from .coupling import (
    InfeasibleTransport,
    TransportProblem,
    max_cross_entropy,
    max_transport_duals,
    solve_transport,
)
from .dist import (
    LOG2,
    BudgetExceeded,
    Channel,
    DistributionError,
    JointPmf,
    Pmf,
    binary_entropy,
    entropy,
    joint_power,
)

MATCH_TOL = 1e-8
MARKOV_TOL = 1e-9


@dataclass(frozen=True)
class Decomposition:
    """P_W with conditionals P_{X|W} and P_{Y|W} (rows indexed by w)."""

    pw: Pmf
    px_given_w: Channel
    py_given_w: Channel

    def __post_init__(self):
        k = len(self.pw)
        if self.px_given_w.shape[0] != k or self.py_given_w.shape[0] != k:
            raise DistributionError("conditionals need one row per auxiliary symbol")

    @property
    def size(self) -> int:
        return len(self.pw)

    def pruned(self, tol: float = 0.0) -> "Decomposition":
        """Drop auxiliary symbols with mass <= tol."""
        keep = self.pw.mass > tol
        return Decomposition(
            Pmf(self.pw.mass[keep]),
            Channel(self.px_given_w.matrix[keep]),
            Channel(self.py_given_w.matrix[keep]),
        )

    @classmethod
    def w_equals_y(cls, pi: JointPmf) -> "Decomposition":
        ny = pi.shape[1]
        return cls(pi.py, pi.x_given_y(), Channel(np.eye(ny)))

    @classmethod
    def w_equals_x(cls, pi: JointPmf) -> "Decomposition":
        nx = pi.shape[0]
        return cls(pi.px, Channel(np.eye(nx)), pi.y_given_x())

    @classmethod
    def w_equals_xy(cls, pi: JointPmf) -> "Decomposition":
        nx, ny = pi.shape
        cells = [(x, y) for x in range(nx) for y in range(ny)]
        return cls(
            Pmf(pi.mass.ravel()),
            Channel(np.eye(nx)[[x for x, _ in cells]]),
            Channel(np.eye(ny)[[y for _, y in cells]]),
        )

    @classmethod
    def dsbs(cls, p: float, a: float) -> "Decomposition":
        """X = W xor A, Y = W xor B with W ~ Bern(1/2), A ~ Bern(a) and
        B ~ Bern(b), b = (p - a) / (1 - 2a)."""
        b = _dsbs_b(p, a)
        return cls(Pmf.uniform(2), Channel.bsc(a), Channel.bsc(b))


@dataclass(frozen=True)
class RatePoint:
    r0: float
    r: float

    def __post_init__(self):
        if self.r0 < 0 or self.r < 0:
            raise ValueError("rates are non-negative")


@dataclass(frozen=True)
class RegionCurve:
    """Per-parameter constraints plus lower-boundary points (r0, r).

    For closed forms ``param`` is the family parameter (a or alpha) and
    ``(r0, r)`` is the lower boundary of the union evaluated at each
    parameter's corner R0. For searched curves ``param`` is the R0 grid.
    """

    param: np.ndarray
    r0: np.ndarray
    r: np.ndarray
    r_bound: np.ndarray
    sum_bound: np.ndarray
    units: str = "nats"
    decompositions: tuple = field(default=(), repr=False)

    def points(self) -> list:
        return [RatePoint(float(a), float(b)) for a, b in zip(self.r0, self.r)]

    def to(self, units: str) -> "RegionCurve":
        if units == self.units:
            return self
        if {units, self.units} != {"bits", "nats"}:
            raise ValueError(f"unknown units {units!r}")
        f = 1.0 / LOG2 if units == "bits" else LOG2
        return replace(
            self,
            r0=self.r0 * f,
            r=self.r * f,
            r_bound=self.r_bound * f,
            sum_bound=self.sum_bound * f,
            units=units,
        )

    def boundary(self, r0) -> np.ndarray:
        """Lower boundary of the union of the per-parameter regions."""
        r0 = np.atleast_1d(np.asarray(r0, dtype=float))
        out = np.empty(r0.size)
        step = max(1, (1 << 22) // max(1, self.r_bound.size))  # cap the temporary at ~32 MB
        for i in range(0, r0.size, step):
            part = r0[i : i + step]
            vals = np.maximum(self.r_bound[None, :], self.sum_bound[None, :] - part[:, None])
            out[i : i + step] = vals.min(axis=1)
        return np.maximum(out, 0.0)


# --------------------------------------------------------------------------
# constraints for one decomposition


def induced_joint(d: Decomposition) -> JointPmf:
    pw = d.pw.mass
    return JointPmf(np.einsum("w,wx,wy->xy", pw, d.px_given_w.matrix, d.py_given_w.matrix))


def _require_match(d: Decomposition, pi: JointPmf | None):
    q = induced_joint(d)
    if pi is not None:
        if q.shape != pi.shape:
            raise DistributionError("decomposition and pi live on different alphabets")
        gap = float(np.abs(q.mass - pi.mass).max())
        if gap > MATCH_TOL:
            raise DistributionError(f"decomposition does not induce pi (max gap {gap:.3g})")
    return q


def _h_x_given_w(d: Decomposition) -> float:
    return float(d.pw.mass @ [entropy(r) for r in d.px_given_w.matrix])


def _h_y_given_w(d: Decomposition) -> float:
    return float(d.pw.mass @ [entropy(r) for r in d.py_given_w.matrix])


def cuff_constraints(d: Decomposition, pi: JointPmf | None = None) -> tuple[float, float]:
    """(I(W;X), I(W;XY)) for the total-variation region."""
    q = _require_match(d, pi)
    hx = _h_x_given_w(d)
    hy = _h_y_given_w(d)
    r_min = max(0.0, entropy(q.px) - hx)
    sum_min = max(0.0, entropy(q) - hx - hy)
    return r_min, sum_min


def _atom_cross_entropies(d: Decomposition, pi: JointPmf) -> np.ndarray:
    return np.array(
        [
            max_cross_entropy(d.px_given_w.row(w), d.py_given_w.row(w), pi)[0]
            if d.pw.mass[w] > 0
            else 0.0
            for w in range(d.size)
        ]
    )


def inner_constraints(d: Decomposition, pi: JointPmf) -> tuple[float, float]:
    """(I(W;X), -H(XY|W) + sum_w P(w) H(P_{X|w}, P_{Y|w} || pi))."""
    q = _require_match(d, pi)
    hx, hy = _h_x_given_w(d), _h_y_given_w(d)
    r_min = max(0.0, entropy(q.px) - hx)
    hs = _atom_cross_entropies(d, pi)
    live = d.pw.mass > 0
    if np.any(np.isinf(hs[live])):
        return r_min, math.inf
    return r_min, float(d.pw.mass[live] @ hs[live]) - hx - hy


def outer_constraints(d: Decomposition, pi: JointPmf) -> tuple[float, float]:
    """Like the inner bound, but the atoms may be paired across a coupling
    of P_W with itself, and the cheapest pairing is taken."""
    q = _require_match(d, pi)
    hx, hy = _h_x_given_w(d), _h_y_given_w(d)
    r_min = max(0.0, entropy(q.px) - hx)
    k = d.size
    cost = np.zeros((k, k))
    for w in range(k):
        for v in range(k):
            if d.pw.mass[w] > 0 and d.pw.mass[v] > 0:
                cost[w, v] = max_cross_entropy(d.px_given_w.row(w), d.py_given_w.row(v), pi)[0]
    try:
        gamma = solve_transport(TransportProblem(d.pw, d.pw, cost, "min")).value
    except InfeasibleTransport:
        return r_min, math.inf
    return r_min, gamma - hx - hy


# --------------------------------------------------------------------------
# closed forms


def _dsbs_b(p: float, a: float) -> float:
    if not 0.0 <= a <= p:
        raise ValueError("a must lie in [0, p]")
    return (p - a) / (1.0 - 2.0 * a)


def _h2(x: float) -> float:
    return binary_entropy(min(max(x, 0.0), 1.0)) / LOG2


def dsbs_exact_bounds(p: float, a: float) -> tuple[float, float]:
    """(r_min, sum_min) in bits for the exact region at parameter a."""
    b = _dsbs_b(p, a)
    a0, b0 = (1.0 - p) / 2.0, p / 2.0
    s = math.log2(1.0 / a0) + (a + b) * math.log2(a0 / b0) - _h2(a) - _h2(b)
    return 1.0 - _h2(a), s


def dsbs_tv_bounds(p: float, a: float) -> tuple[float, float]:
    b = _dsbs_b(p, a)
    return 1.0 - _h2(a), 1.0 + _h2(p) - _h2(a) - _h2(b)


def _check_p(p: float):
    if not 0.0 < p < 0.5:
        raise ValueError("closed forms need p in (0, 1/2); p = 1/2 is the independent case")


def _closed_curve(param, rb, sb, units, native="bits") -> RegionCurve:
    param, rb, sb = (np.asarray(v, dtype=float) for v in (param, rb, sb))
    corner = np.maximum(sb - rb, 0.0)
    tmp = RegionCurve(param, corner, rb, rb, sb, native)
    return replace(tmp, r=tmp.boundary(corner)).to(units)


def dsbs_exact_region(p: float, grid=201, units: str = "bits") -> RegionCurve:
    _check_p(p)
    a = np.linspace(0.0, p, grid) if np.isscalar(grid) else np.asarray(grid, dtype=float)
    rb, sb = zip(*(dsbs_exact_bounds(p, x) for x in a))
    return _closed_curve(a, rb, sb, units)


def dsbs_tv_region(p: float, grid=201, units: str = "bits") -> RegionCurve:
    _check_p(p)
    a = np.linspace(0.0, p, grid) if np.isscalar(grid) else np.asarray(grid, dtype=float)
    rb, sb = zip(*(dsbs_tv_bounds(p, x) for x in a))
    return _closed_curve(a, rb, sb, units)


def dsbs_boundary(p: float, r0: float, kind: Literal["exact", "tv"] = "exact") -> float:
    """Lower boundary R*(r0) in bits: min over a of max(r(a), s(a) - r0).

    r(a) decreases in a, so the minimum sits at an endpoint, at a crossing
    r(a) = s(a) - r0, or at a stationary point of s on a stretch where the
    sum constraint is the active one. All candidates are located to machine
    precision (root finding and bounded scalar search on a dense bracket grid).
    """
    _check_p(p)
    bounds = dsbs_exact_bounds if kind == "exact" else dsbs_tv_bounds

    def f(a):
        rb, sb = bounds(p, a)
        return max(rb, sb - r0, 0.0)

    def gap(a):
        rb, sb = bounds(p, a)
        return rb - (sb - r0)

    def tail(a):
        return bounds(p, a)[1]

    grid = np.linspace(0.0, p, 401)
    cands = [0.0, p]
    g = np.array([gap(a) for a in grid])
    for k in np.flatnonzero(np.sign(g[:-1]) * np.sign(g[1:]) < 0):
        cands.append(brentq(gap, grid[k], grid[k + 1], xtol=1e-16, rtol=1e-15))
    sv = np.array([tail(a) for a in grid])
    for k in range(1, grid.size - 1):
        if sv[k] <= sv[k - 1] and sv[k] <= sv[k + 1]:
            res = minimize_scalar(
                tail, bounds=(grid[k - 1], grid[k + 1]), method="bounded", options={"xatol": 1e-14}
            )
            cands.append(float(res.x))
    return float(min(f(a) for a in cands))


def _gaussian_alpha_grid(rho: float, grid):
    if not 0.0 <= rho < 1.0:
        raise ValueError("rho must lie in [0, 1)")
    if np.isscalar(grid):
        return np.linspace(rho + 1e-6, 1.0 - 1e-6, grid)
    return np.asarray(grid, dtype=float)


def gaussian_tv_bounds(rho: float, alpha: float) -> tuple[float, float]:
    """(r_min, sum_min) in nats; alpha in [rho, 1], beta = rho / alpha."""
    if not rho <= alpha <= 1.0 or alpha == 0.0:
        raise ValueError("alpha must lie in [rho, 1] and be positive")
    beta = rho / alpha
    r = 0.5 * math.log(1.0 / (1.0 - alpha**2)) if alpha < 1 else math.inf
    if alpha >= 1.0 or beta >= 1.0:
        return r, math.inf
    s = 0.5 * math.log((1.0 - rho**2) / ((1.0 - alpha**2) * (1.0 - beta**2)))
    return r, s


def gaussian_coupling_term(rho: float, alpha: float) -> float:
    """Extra sum-rate (nats) of the exact inner bound over the TV bound."""
    beta = rho / alpha
    return rho * math.sqrt(max(0.0, (1 - alpha**2) * (1 - beta**2))) / (1 - rho**2)


def gaussian_exact_bounds(rho: float, alpha: float) -> tuple[float, float]:
    r, s = gaussian_tv_bounds(rho, alpha)
    return r, s + gaussian_coupling_term(rho, alpha)


def gaussian_tv_region(rho: float, grid=201, units: str = "nats") -> RegionCurve:
    al = _gaussian_alpha_grid(rho, grid)
    if rho == 0.0:
        al = np.where(al == 0.0, 1e-12, al)
    rb, sb = zip(*(gaussian_tv_bounds(rho, a) for a in al))
    return _closed_curve(al, rb, sb, units, native="nats")


def gaussian_exact_inner_region(rho: float, grid=201, units: str = "nats") -> RegionCurve:
    al = _gaussian_alpha_grid(rho, grid)
    if rho == 0.0:
        al = np.where(al == 0.0, 1e-12, al)
    rb, sb = zip(*(gaussian_exact_bounds(rho, a) for a in al))
    return _closed_curve(al, rb, sb, units, native="nats")


# --------------------------------------------------------------------------
# decomposition search
#
# Variables are A[w, x] = P(w, x) and B[w, y] = P(y | w), so the matching
# constraint sum_w A[w, x] B[w, y] = pi(x, y) is bilinear. The rate is an
# epigraph variable t with t >= I(W;X) and t >= sum_bound - R0.

_FLOOR = 1e-300
_GRAD_FLOOR = 1e-12


class _Objective:
    """Rate pieces and their gradients for one pi, cached per point."""

    def __init__(self, pi: JointPmf, k: int, bound: str):
        self.pi = pi
        self.nx, self.ny = pi.shape
        self.k = k
        self.bound = bound
        self.neglog = -np.log(np.maximum(pi.mass, _FLOOR))
        self.hx = entropy(pi.px)
        self.hxy = entropy(pi)
        self._key = None

    def split(self, z):
        k, nx, ny = self.k, self.nx, self.ny
        a = z[: k * nx].reshape(k, nx)
        b = z[k * nx : k * (nx + ny)].reshape(k, ny)
        return a, b

    def _cross(self, px, py):
        # transport with clipped costs: finite everywhere, exact where pi > 0
        return max_transport_duals(px, py, self.neglog)

    def evaluate(self, z):
        key = z.tobytes()
        if key == self._key:
            return self._val
        a, b = self.split(np.clip(z, 0.0, None))
        k, nx, ny = self.k, self.nx, self.ny
        pw = a.sum(axis=1)
        la = np.log(np.maximum(a, _GRAD_FLOOR))
        lpw = np.log(np.maximum(pw, _GRAD_FLOOR))
        lb = np.log(np.maximum(b, _GRAD_FLOOR))
        xla = np.where(a > 0, a * np.log(np.maximum(a, _FLOOR)), 0.0)
        xlb = np.where(b > 0, b * np.log(np.maximum(b, _FLOOR)), 0.0)
        xlpw = np.where(pw > 0, pw * np.log(np.maximum(pw, _FLOOR)), 0.0)

        hxw = float(xlpw.sum() - xla.sum())
        hyw_atom = -xlb.sum(axis=1)
        hyw = float(pw @ hyw_atom)
        i_wx = self.hx - hxw
        g_iwx_a = -(lpw[:, None] - la)  # minus dH(X|W)/dA

        # d(-H(XY|W)): from H(X|W) and H(Y|W)
        g_h_a = (lpw[:, None] - la) + hyw_atom[:, None]
        g_h_b = -pw[:, None] * (lb + 1.0)
        if self.bound == "inner":
            cross = np.zeros(k)
            g_c_a = np.zeros((k, nx))
            g_c_b = np.zeros((k, ny))
            for w in range(k):
                if pw[w] <= 1e-14:
                    continue
                val, u, v = self._cross(a[w] / pw[w], b[w] / b[w].sum())
                cross[w] = val
                g_c_a[w] = u + v @ b[w]
                g_c_b[w] = pw[w] * v
            s = float(pw @ cross) - hxw - hyw
            g_s_a = g_c_a - g_h_a
            g_s_b = g_c_b - g_h_b
        else:
            s = self.hxy - hxw - hyw
            g_s_a, g_s_b = -g_h_a, -g_h_b
        self._key = key
        self._val = (i_wx, g_iwx_a, s, g_s_a, g_s_b)
        return self._val


def _constraints(obj: _Objective, r0: float):
    k, nx, ny = obj.k, obj.nx, obj.ny
    na, nb = k * nx, k * ny
    target = obj.pi.mass

    def match(z):
        a, b = obj.split(z)
        return (a.T @ b - target).ravel()

    def match_jac(z):
        a, b = obj.split(z)
        jac = np.zeros((nx * ny, na + nb + 1))
        for x in range(nx):
            for y in range(ny):
                row = x * ny + y
                jac[row, x : na : nx] = b[:, y]
                jac[row, na + y : na + nb : ny] = a[:, x]
        return jac

    def rows(z):
        _, b = obj.split(z)
        return b.sum(axis=1) - 1.0

    def rows_jac(z):
        jac = np.zeros((k, na + nb + 1))
        for w in range(k):
            jac[w, na + w * ny : na + (w + 1) * ny] = 1.0
        return jac

    def rate(z):
        i_wx, _, s, _, _ = obj.evaluate(z)
        return np.array([z[-1] - i_wx, z[-1] - (s - r0)])

    def rate_jac(z):
        _, g_i, _, g_sa, g_sb = obj.evaluate(z)
        jac = np.zeros((2, na + nb + 1))
        jac[0, :na] = -g_i.ravel()
        jac[0, -1] = 1.0
        if math.isfinite(r0):
            jac[1, :na] = -g_sa.ravel()
            jac[1, na : na + nb] = -g_sb.ravel()
            jac[1, -1] = 1.0
        return jac

    cons = [
        {"type": "eq", "fun": match, "jac": match_jac},
        {"type": "eq", "fun": rows, "jac": rows_jac},
    ]
    if math.isfinite(r0):
        cons.append({"type": "ineq", "fun": rate, "jac": rate_jac})
    else:
        cons.append(
            {"type": "ineq", "fun": lambda z: rate(z)[:1], "jac": lambda z: rate_jac(z)[:1]}
        )
    return cons


def _pack(d: Decomposition, k: int) -> np.ndarray:
    a = d.pw.mass[:, None] * d.px_given_w.matrix
    b = d.py_given_w.matrix
    if d.size < k:
        pad = k - d.size
        a = np.vstack([a, np.zeros((pad, a.shape[1]))])
        b = np.vstack([b, np.full((pad, b.shape[1]), 1.0 / b.shape[1])])
    elif d.size > k:
        raise ValueError("seed has more auxiliary symbols than the search allows")
    return np.concatenate([a.ravel(), b.ravel(), [0.0]])


def _unpack(z: np.ndarray, obj: _Objective) -> tuple[np.ndarray, np.ndarray]:
    a, b = obj.split(np.clip(z, 0.0, None))
    b = b / np.maximum(b.sum(axis=1, keepdims=True), _FLOOR)
    return a, b


def repair(a: np.ndarray, b: np.ndarray, pi: JointPmf, tol: float = 1e-12) -> Decomposition:
    """Turn an approximate solution into a decomposition inducing pi exactly.

    Atoms below ``tol`` are dropped. The rest is shrunk by the largest
    factor s with s * q <= pi cellwise, and the remainder pi - s * q is
    covered by point-mass atoms w = (x, y).
    """
    nx, ny = pi.shape
    pw = a.sum(axis=1)
    keep = pw > tol
    a, b, pw = a[keep], b[keep], pw[keep]
    if a.shape[0] == 0:
        return Decomposition.w_equals_xy(pi)
    px = a / pw[:, None]
    q = np.einsum("w,wx,wy->xy", pw, px, b)
    q = q / q.sum()
    pos = q > 0
    if np.any(pi.mass[pos] <= 0):
        # an atom touches a cell outside supp(pi): zero those entries first
        bad = pi.mass <= 0
        for w in range(px.shape[0]):
            hit = np.outer(px[w], b[w]) * bad
            if hit.sum() > 0:
                pw[w] = 0.0
        keep = pw > 0
        pw, px, b = pw[keep], px[keep], b[keep]
        if pw.size == 0:
            return Decomposition.w_equals_xy(pi)
        q = np.einsum("w,wx,wy->xy", pw, px, b)
        q = q / q.sum()
        pos = q > 0
    pw = pw / pw.sum()
    shrink = min(1.0, float(np.min(pi.mass[pos] / q[pos])))
    rest = np.clip(pi.mass - shrink * q, 0.0, None)
    cells = [(x, y) for x in range(nx) for y in range(ny) if rest[x, y] > 0]
    weights = [shrink * pw] + [np.array([rest[x, y] for x, y in cells])]
    new_pw = np.concatenate(weights)
    new_px = np.vstack([px, np.eye(nx)[[x for x, _ in cells]].reshape(-1, nx)])
    new_py = np.vstack([b, np.eye(ny)[[y for _, y in cells]].reshape(-1, ny)])
    return Decomposition(Pmf(new_pw / new_pw.sum()), Channel(new_px), Channel(new_py))


def _random_start(rng, pi: JointPmf, k: int) -> np.ndarray:
    nx, ny = pi.shape
    a = rng.dirichlet(np.ones(k * nx)).reshape(k, nx)
    b = rng.dirichlet(np.ones(ny), size=k)
    return np.concatenate([a.ravel(), b.ravel(), [0.0]])


def _polish(obj, z0, r0, maxiter):
    n = z0.size
    bounds = [(0.0, 1.0)] * (n - 1) + [(0.0, None)]
    i_wx, _, s, _, _ = obj.evaluate(z0)
    z0 = z0.copy()
    z0[-1] = max(i_wx, 0.0) if math.isinf(r0) else max(i_wx, s - r0, 0.0)
    res = minimize(
        lambda z: z[-1],
        z0,
        jac=lambda z: np.eye(1, n, n - 1).ravel(),
        method="SLSQP",
        bounds=bounds,
        constraints=_constraints(obj, r0),
        options={"maxiter": maxiter, "ftol": 1e-12},
    )
    return res.x


def search_lower_boundary(
    pi: JointPmf,
    r0_grid,
    bound: Literal["inner", "cuff"] = "inner",
    restarts: int = 32,
    seed: int = 0,
    k: int | None = None,
    seeds: tuple = (),
    maxiter: int = 200,
) -> RegionCurve:
    """Upper bound on the region's lower boundary R*(R0) at each grid point.

    Each start (W=Y, W=X, W=(X,Y), any extra ``seeds`` decompositions and
    ``restarts`` random points) is continued along the grid with SLSQP,
    warm-starting every grid point from the previous one. Every local
    optimum is repaired to induce pi exactly and evaluated exactly, and
    each grid point keeps the best decomposition found anywhere (a
    decomposition that works at one R0 is valid at every R0).
    """
    if bound not in ("inner", "cuff"):
        raise ValueError("bound must be 'inner' or 'cuff'")
    nx, ny = pi.shape
    k = nx * ny + 1 if k is None else k
    grid = np.asarray(r0_grid, dtype=float)
    obj = _Objective(pi, k, bound)
    rng = np.random.default_rng(seed)
    starts = [
        _pack(d, k)
        for d in (Decomposition.w_equals_y(pi), Decomposition.w_equals_x(pi), Decomposition.w_equals_xy(pi))
        + tuple(seeds)
        if d.size <= k
    ]
    starts += [_random_start(rng, pi, k) for _ in range(restarts)]

    found = []
    for z in starts:
        found.append(repair(*_unpack(z, obj), pi))
        order = list(range(grid.size))
        for sweep in (order, order[::-1]):
            for g in sweep:
                try:
                    z = _polish(obj, z, grid[g], maxiter)
                except (ValueError, FloatingPointError):
                    continue
                found.append(repair(*_unpack(z, obj), pi))

    # deterministic reduce: exact rates of every candidate at every R0
    cons = []
    for d in found:
        d = d.pruned()
        rb, sb = inner_constraints(d, pi) if bound == "inner" else cuff_constraints(d, pi)
        cons.append((rb, sb, d))
    rb_all = np.array([c[0] for c in cons])
    sb_all = np.array([c[1] for c in cons])
    best_r, best_rb, best_sb, best_d = [], [], [], []
    for r0 in grid:
        vals = rb_all if math.isinf(r0) else np.maximum(rb_all, sb_all - r0)
        i = int(np.argmin(vals))
        best_r.append(max(vals[i], 0.0))
        best_rb.append(rb_all[i])
        best_sb.append(sb_all[i])
        best_d.append(cons[i][2])
    return RegionCurve(
        grid.copy(),
        grid.copy(),
        np.array(best_r),
        np.array(best_rb),
        np.array(best_sb),
        "nats",
        tuple(best_d),
    )


def tensor_decomposition(d: Decomposition, n: int) -> Decomposition:
    """W^n for the n-fold product of a decomposition (X, Y blocks in
    first-symbol-most-significant order)."""
    pw, px, py = d.pw.mass, d.px_given_w.matrix, d.py_given_w.matrix
    for _ in range(n - 1):
        pw = np.kron(pw, d.pw.mass)
        px = np.vstack([np.kron(r1, r2) for r1 in px for r2 in d.px_given_w.matrix])
        py = np.vstack([np.kron(r1, r2) for r1 in py for r2 in d.py_given_w.matrix])
    return Decomposition(Pmf(pw), Channel(px), Channel(py))


def multi_letter_inner(
    pi: JointPmf,
    n: int,
    r0_grid,
    restarts: int = 4,
    seed: int = 0,
    budget: int = 4096,
    single_letter: RegionCurve | None = None,
    maxiter: int = 100,
) -> RegionCurve:
    """Search on pi^n and report rates per symbol.

    The n = 1 optima are tensorized into seeds, so the n-letter search
    starts from the single-letter curve (the cross-entropy term is additive
    over products) and can only improve on it.
    """
    if not 1 <= n <= 3:
        raise ValueError("multi-letter search supports n in {1, 2, 3}")
    grid = np.asarray(r0_grid, dtype=float)
    if (pi.mass.size) ** n > budget:
        raise BudgetExceeded(f"|XY|^n = {pi.mass.size ** n} exceeds budget {budget}")
    if n == 1:
        return search_lower_boundary(pi, grid, "inner", restarts, seed)
    base = single_letter or search_lower_boundary(pi, grid, "inner", restarts, seed)
    pin = joint_power(pi, n)
    seeds = []
    for d in base.decompositions:
        d = d.pruned(1e-12)
        if d.size**n <= budget:
            seeds.append(tensor_decomposition(d, n))
    seeds = list({id(s): s for s in seeds}.values())
    # the auxiliary alphabet may exceed the cardinality bound so every tensorized seed fits
    k = max([pin.mass.size + 1] + [d.size for d in seeds])
    curve = search_lower_boundary(
        pin, grid * n, "inner", restarts, seed, k=k, seeds=tuple(seeds), maxiter=maxiter
    )
    return replace(
        curve,
        param=grid.copy(),
        r0=grid.copy(),
        r=curve.r / n,
        r_bound=curve.r_bound / n,
        sum_bound=curve.sum_bound / n,
    )


# --------------------------------------------------------------------------
# necessary conditional entropy


def _set_partitions(items, compatible, budget):
    """Restricted-growth enumeration of partitions of ``items`` whose blocks
    only join mutually compatible elements."""
    blocks: list = []
    count = [0]

    def rec(i):
        if i == len(items):
            count[0] += 1
            if count[0] > budget:
                raise BudgetExceeded("too many partitions")
            yield [list(b) for b in blocks]
            return
        y = items[i]
        for blk in blocks:
            if compatible(blk[0], y):
                blk.append(y)
                yield from rec(i + 1)
                blk.pop()
        blocks.append([y])
        yield from rec(i + 1)
        blocks.pop()

    yield from rec(0)


def necessary_conditional_entropy(pi: JointPmf, budget: int = 5_000_000) -> float:
    """min H(f(Y) | X) over partitions f of the Y alphabet with X - f(Y) - Y.

    X - f(Y) - Y holds iff all y in a block share the conditional P_{X|Y=y};
    symbols with P(y) = 0 are placed in the first block (they carry no mass).
    """
    nx, ny = pi.shape
    if ny > 12:
        raise BudgetExceeded("partition enumeration needs |Y| <= 12")
    py = pi.mass.sum(axis=0)
    live = [y for y in range(ny) if py[y] > 0]
    cond = {y: pi.mass[:, y] / py[y] for y in live}

    def compatible(y1, y2):
        return float(np.abs(cond[y1] - cond[y2]).max()) <= MARKOV_TOL

    hx = entropy(pi.px)
    best = math.inf
    for blocks in _set_partitions(live, compatible, budget):
        fm = np.stack([pi.mass[:, b].sum(axis=1) for b in blocks], axis=1)
        best = min(best, entropy(fm) - hx)
    return max(best, 0.0)
