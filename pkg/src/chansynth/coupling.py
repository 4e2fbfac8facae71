"""Linear optimization over the coupling polytope C(P_X, P_Y).

The workhorse is a transportation simplex (MODI duals, Bland's rule). Cells
with infinite cost are never priced with a large numeric constant: every cost
is a pair ``(m, c)`` compared lexicographically, where ``m`` counts the
forbidden mass. A min-sense problem is infeasible exactly when the optimum
still routes mass through forbidden cells.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .dist import DistributionError, JointPmf, Pmf, entropy, tv_distance

MARGIN_TOL = 1e-8
_RC_TOL = 1e-12


class InfeasibleTransport(ValueError):
    """Every coupling puts mass on an infinite-cost cell."""


@dataclass(frozen=True)
class TransportProblem:
    row: Pmf
    col: Pmf
    cost: np.ndarray
    sense: Literal["max", "min"] = "min"

    def __post_init__(self):
        cost = np.asarray(self.cost, dtype=float)
        if cost.shape != (len(self.row), len(self.col)):
            raise DistributionError(
                f"cost shape {cost.shape} does not match marginals "
                f"({len(self.row)}, {len(self.col)})"
            )
        if np.any(np.isnan(cost)):
            raise DistributionError("cost contains NaN")
        if self.sense not in ("max", "min"):
            raise ValueError("sense must be 'max' or 'min'")
        if self.sense == "max" and np.any(cost == -math.inf):
            raise DistributionError("use +inf for forbidden cells in max sense")
        object.__setattr__(self, "cost", cost)


@dataclass(frozen=True)
class Coupling:
    """An optimal coupling with its objective and dual certificate.

    ``u``/``v`` are duals in the problem's own sense: for ``max`` they satisfy
    ``u_i + v_j >= cost_ij`` on the supports, for ``min`` ``u_i + v_j <= cost_ij``,
    and ``value == u @ row + v @ col``. ``reduced_cost_violation`` is the
    largest amount by which a cell breaks that inequality (<= 1e-9 certifies
    optimality). ``basis`` lists the basic cells in original indices.
    """

    joint: np.ndarray
    value: float
    u: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)
    reduced_cost_violation: float = 0.0
    basis: tuple = ()

    def as_joint(self) -> JointPmf:
        return JointPmf(self.joint)


# --------------------------------------------------------------------------
# transportation simplex on the positive-mass sub-problem


def _northwest_basis(r, c):
    m, n = len(r), len(c)
    r, c = list(r), list(c)
    x = {}
    i = j = 0
    while i < m and j < n:
        q = min(r[i], c[j])
        x[(i, j)] = q
        r[i] -= q
        c[j] -= q
        if i == m - 1:
            j += 1
        elif j == n - 1:
            i += 1
        elif r[i] <= c[j]:
            i += 1
        else:
            j += 1
    return x


def _duals(basis, m, n, cost_pairs):
    """Solve u_i + v_j = cost on basic cells (u_0 = 0); returns pair-valued duals."""
    u = [None] * m
    v = [None] * n
    u[0] = (0.0, 0.0)
    by_row = [[] for _ in range(m)]
    by_col = [[] for _ in range(n)]
    for i, j in basis:
        by_row[i].append(j)
        by_col[j].append(i)
    stack = [("r", 0)]
    while stack:
        kind, k = stack.pop()
        if kind == "r":
            for j in by_row[k]:
                if v[j] is None:
                    cm, cc = cost_pairs[k][j]
                    v[j] = (cm - u[k][0], cc - u[k][1])
                    stack.append(("c", j))
        else:
            for i in by_col[k]:
                if u[i] is None:
                    cm, cc = cost_pairs[i][k]
                    u[i] = (cm - v[k][0], cc - v[k][1])
                    stack.append(("r", i))
    return u, v


def _cycle(basis, m, n, start):
    """Path in the basis tree from column start[1] back to row start[0]."""
    i0, j0 = start
    adj = {}
    for i, j in basis:
        adj.setdefault(("r", i), []).append(("c", j))
        adj.setdefault(("c", j), []).append(("r", i))
    src, dst = ("c", j0), ("r", i0)
    prev = {src: None}
    queue = [src]
    for node in queue:
        if node == dst:
            break
        for nb in adj.get(node, ()):
            if nb not in prev:
                prev[nb] = node
                queue.append(nb)
    path = []
    node = dst
    while node is not None:
        path.append(node)
        node = prev[node]
    path.reverse()  # c(j0) -> ... -> r(i0)
    cells = []
    for a, b in zip(path, path[1:]):
        cells.append((b[1], a[1]) if a[0] == "c" else (a[1], b[1]))
    return cells


def _lex_neg(pair, tol):
    m, c = pair
    if m < -0.5:
        return True
    if m > 0.5:
        return False
    return c < -tol


def _transport_min(r, c, cost_pairs, max_iter=10_000):
    """Minimize a pair-valued linear cost; returns (x dict, basis, u, v)."""
    m, n = len(r), len(c)
    x = _northwest_basis(r, c)
    basis = set(x)
    scale = max(1.0, max(abs(cc) for row in cost_pairs for _, cc in row))
    tol = _RC_TOL * scale
    for _ in range(max_iter):
        u, v = _duals(basis, m, n, cost_pairs)
        entering = None
        for i in range(m):
            for j in range(n):
                if (i, j) in basis:
                    continue
                cm, cc = cost_pairs[i][j]
                red = (cm - u[i][0] - v[j][0], cc - u[i][1] - v[j][1])
                if _lex_neg(red, tol):
                    entering = (i, j)
                    break
            if entering is not None:
                break
        if entering is None:
            return x, basis, u, v
        path = _cycle(basis, m, n, entering)
        # path alternates: first cell shares column j0 -> it loses mass
        minus = path[0::2]
        plus = path[1::2]
        theta = min(x[cell] for cell in minus)
        leaving = min(cell for cell in minus if x[cell] <= theta)
        x[entering] = theta
        for cell in minus:
            x[cell] -= theta
        for cell in plus:
            x[cell] += theta
        basis.remove(leaving)
        del x[leaving]
        basis.add(entering)
        for cell in minus:
            if cell in x and x[cell] < 0:
                x[cell] = 0.0
    raise RuntimeError("transportation simplex did not terminate")


def solve_transport(tp: TransportProblem) -> Coupling:
    """Optimal extreme-point coupling of ``tp`` with a dual certificate.

    Raises InfeasibleTransport when a min-sense problem cannot avoid +inf
    cells. In max sense a +inf cell reachable by the product coupling makes
    the objective +inf; a coupling is still returned (the product coupling).
    """
    rmass, cmass = tp.row.mass, tp.col.mass
    rs, cs = np.flatnonzero(rmass > 0), np.flatnonzero(cmass > 0)
    sub = tp.cost[np.ix_(rs, cs)]
    shape = (len(rmass), len(cmass))

    if tp.sense == "max" and np.any(sub == math.inf):
        joint = np.outer(rmass, cmass)
        return Coupling(joint, math.inf, np.full(shape[0], math.inf), np.zeros(shape[1]))

    sign = 1.0 if tp.sense == "min" else -1.0
    cost_pairs = [
        [(1.0, 0.0) if not math.isfinite(val) else (0.0, sign * val) for val in row]
        for row in sub
    ]
    r = [float(v) for v in rmass[rs]]
    c = [float(v) for v in cmass[cs]]
    # absorb normalization drift into the last column so the problem is balanced
    c[-1] += sum(r) - sum(c)
    x, basis, u, v = _transport_min(r, c, cost_pairs)

    joint = np.zeros(shape)
    for (i, j), q in x.items():
        joint[rs[i], cs[j]] = max(q, 0.0)
    if any(sub[i, j] == math.inf and q > 1e-15 for (i, j), q in x.items()):
        raise InfeasibleTransport("every coupling uses an infinite-cost cell")

    # Fold the forbidden-mass duals into the finite ones: u = u_c + M u_m.
    # Since u_m @ r + v_m @ c = 0 at a feasible optimum the value is
    # unchanged, and a big enough M repairs cells whose finite reduced cost
    # is negative but whose forbidden-mass reduced cost is positive.
    u1 = np.array([p[0] for p in u])
    v1 = np.array([p[0] for p in v])
    u2 = np.array([p[1] for p in u])
    v2 = np.array([p[1] for p in v])
    finite = np.isfinite(sub)
    red_m = np.where(finite, -u1[:, None] - v1[None, :], 0.0)
    red_c = np.where(finite, sub * sign - u2[:, None] - v2[None, :], 0.0)
    lift = (red_m > 0.5) & (red_c < 0)
    big = float(np.max(-red_c[lift] / red_m[lift])) if lift.any() else 0.0
    u2, v2 = u2 + big * u1, v2 + big * v1
    red = np.where(finite, sub * sign - u2[:, None] - v2[None, :], 0.0)
    # forbidden cells are not variables, so they constrain nothing
    violation = float(max(0.0, -red.min())) if red.size else 0.0

    value = float(np.sum(joint[np.ix_(rs, cs)][finite] * sub[finite]))
    u_full = np.zeros(shape[0])
    v_full = np.zeros(shape[1])
    u_full[rs] = sign * u2
    v_full[cs] = sign * v2
    # duals for zero-mass lines: tightest value keeping every cell feasible
    fin_cost = np.where(np.isfinite(tp.cost), tp.cost, np.nan)
    for i in set(range(shape[0])) - set(rs.tolist()):
        vals = fin_cost[i, cs] - v_full[cs]
        u_full[i] = _extreme(vals, tp.sense)
    for j in set(range(shape[1])) - set(cs.tolist()):
        vals = fin_cost[rs, j] - u_full[rs]
        v_full[j] = _extreme(vals, tp.sense)
    basis_cells = tuple(sorted((int(rs[i]), int(cs[j])) for i, j in basis))
    return Coupling(joint, value, u_full, v_full, violation, basis_cells)


def max_transport_duals(r, c, cost) -> tuple[float, np.ndarray, np.ndarray]:
    """Lean max-sense solve for finite costs: (value, u, v) on full index sets.

    Skips validation and the certificate; meant for inner loops that only
    need the value and a supergradient with respect to the marginals.
    """
    r = np.asarray(r, dtype=float)
    c = np.asarray(c, dtype=float)
    rs = [i for i in range(r.size) if r[i] > 0]
    cs = [j for j in range(c.size) if c[j] > 0]
    rr = [float(r[i]) for i in rs]
    cc = [float(c[j]) for j in cs]
    cc[-1] += sum(rr) - sum(cc)
    pairs = [[(0.0, -float(cost[i, j])) for j in cs] for i in rs]
    x, _, u, v = _transport_min(rr, cc, pairs)
    value = sum(q * cost[rs[i], cs[j]] for (i, j), q in x.items())
    uf = np.zeros(r.size)
    vf = np.zeros(c.size)
    uf[rs] = [-p[1] for p in u]
    vf[cs] = [-p[1] for p in v]
    if len(rs) < r.size:
        for i in set(range(r.size)) - set(rs):
            uf[i] = np.max(cost[i, cs] - vf[cs])
    if len(cs) < c.size:
        for j in set(range(c.size)) - set(cs):
            vf[j] = np.max(cost[rs, j] - uf[rs])
    return float(value), uf, vf


def _extreme(vals, sense):
    vals = vals[np.isfinite(vals)]
    if vals.size == 0:
        return 0.0
    return float(vals.max() if sense == "max" else vals.min())


def coupling_residual(c: Coupling, row: Pmf, col: Pmf) -> float:
    """Largest marginal-constraint violation of a returned coupling."""
    return float(
        max(
            np.abs(c.joint.sum(axis=1) - row.mass).max(),
            np.abs(c.joint.sum(axis=0) - col.mass).max(),
        )
    )


# --------------------------------------------------------------------------
# brute-force oracle


def _degrees_possible(need, alive, m, left):
    """Can a forest on the alive lines give every line its promised degree?"""
    if left == 0:
        return True
    nrows = sum(alive[:m])
    ncols = left - nrows
    total = 0
    for ell, a in enumerate(alive):
        if a:
            if need[ell] > (ncols if ell < m else nrows):
                return False
            total += max(need[ell], 1)
    return total <= 2 * (left - 1)


def _vertex_supports(r, c, tol=1e-13):
    """Yield the (cells, values) of every vertex for positive marginals r, c.

    A vertex has a forest support. Peeling off the lowest-numbered leaf line
    (rows first, then columns) gives each forest one canonical elimination
    path, so the search only explores canonical paths: a line passed over as
    a leaf must still collect two more edges, and a line may only be dropped
    once it has collected everything it was promised. A forest on k lines has
    at most k - 1 edges, which bounds the promises that can still be kept.
    """
    m, n = len(r), len(c)
    res = list(r) + list(c)
    need = [0] * (m + n)
    alive = [True] * (m + n)
    cells, vals = [], []

    def rec(left):
        if left == 0:
            yield list(cells), list(vals)
            return
        rows = [i for i in range(m) if alive[i]]
        cols = [m + j for j in range(n) if alive[m + j]]
        if not rows or not cols:
            return
        for i in rows:
            for j in cols:
                q = min(res[i], res[j])
                di, dj = res[i] - q <= tol, res[j] - q <= tol
                if not (di or dj):
                    continue
                lead = i if di else j
                saved = need[:]
                for ell in rows + cols:
                    if ell < lead:
                        need[ell] = max(need[ell], 2)
                need[i] -= 1
                need[j] -= 1
                ok = (not di or need[i] <= 0) and (not dj or need[j] <= 0)
                if ok:
                    ri, rj = res[i], res[j]
                    res[i], res[j] = ri - q, rj - q
                    alive[i], alive[j] = not di, not dj
                    cells.append((i, j - m))
                    vals.append(q)
                    if _degrees_possible(need, alive, m, left - di - dj):
                        yield from rec(left - di - dj)
                    cells.pop()
                    vals.pop()
                    res[i], res[j] = ri, rj
                    alive[i] = alive[j] = True
                need[:] = saved

    yield from rec(m + n)


def enumerate_vertex_couplings(px: Pmf, py: Pmf, max_cells: int = 25) -> list:
    """All vertices of C(px, py), as couplings with unset value and duals."""
    rs, cs = px.support, py.support
    if len(rs) * len(cs) > max_cells:
        raise ValueError(f"{len(rs)}x{len(cs)} supports exceed {max_cells} cells")
    sols = {}
    for cells, vals in _vertex_supports(px.mass[rs].tolist(), py.mass[cs].tolist()):
        sol = np.zeros((len(px), len(py)))
        for (a, b), q in zip(cells, vals):
            sol[rs[a], cs[b]] += q
        sols.setdefault(tuple(np.round(sol, 10).ravel()), sol)
    return [
        Coupling(sol, float("nan"), np.zeros(len(px)), np.zeros(len(py)))
        for sol in sols.values()
    ]


def brute_force_transport(tp: TransportProblem) -> float:
    """Optimal objective by exhausting every vertex of the polytope."""
    rs, cs = tp.row.support, tp.col.support
    if len(rs) * len(cs) > 25:
        raise ValueError("brute force limited to 25 support cells")
    cost = tp.cost[np.ix_(rs, cs)]
    best = -math.inf if tp.sense == "max" else math.inf
    for cells, vals in _vertex_supports(tp.row.mass[rs].tolist(), tp.col.mass[cs].tolist()):
        tot = 0.0
        for (a, b), q in zip(cells, vals):
            if q > 0:
                tot += math.inf if cost[a, b] == math.inf else q * cost[a, b]
        best = max(best, tot) if tp.sense == "max" else min(best, tot)
    return best


# --------------------------------------------------------------------------
# maximal cross-entropy


def _neglog(pi: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return -np.log(pi)


def max_cross_entropy(px: Pmf, py: Pmf, pi: JointPmf) -> tuple[float, Coupling]:
    """max over couplings of E[log 1/pi(X, Y)]; +inf iff some cell of
    supp(px) x supp(py) has pi = 0."""
    if (len(px), len(py)) != pi.shape:
        raise DistributionError(
            f"marginals ({len(px)}, {len(py)}) do not match pi alphabet {pi.shape}"
        )
    c = solve_transport(TransportProblem(px, py, _neglog(pi.mass), "max"))
    return c.value, c


def dsbs_max_cross_entropy(alpha: float, beta: float, p: float) -> float:
    """Closed form for the DSBS with P_X = (alpha, 1 - alpha), P_Y = (beta, 1 - beta)."""
    for name, val in (("alpha", alpha), ("beta", beta)):
        if not 0.0 <= val <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1]")
    if not 0.0 <= p <= 0.5:
        raise ValueError("p must lie in [0, 1/2]")
    a0, b0 = (1.0 - p) / 2.0, p / 2.0
    weight = min(alpha + beta, 2.0 - alpha - beta)
    if b0 == 0.0:
        return math.log(1.0 / a0) if weight == 0.0 else math.inf
    return math.log(1.0 / a0) + weight * math.log(a0 / b0)


def gaussian_max_cross_entropy(mu1, mu2, alpha_var, beta_var, rho) -> float:
    """Maximal cross-entropy of N(mu1, alpha_var), N(mu2, beta_var) against
    the standard bivariate Gaussian with correlation rho (comonotone bound)."""
    if alpha_var <= 0 or beta_var <= 0:
        raise ValueError("variances must be positive")
    if not 0.0 <= rho < 1.0:
        raise ValueError("rho must lie in [0, 1)")
    return math.log(2 * math.pi * math.sqrt(1 - rho**2)) + (
        1 + rho * (math.sqrt(alpha_var * beta_var) - mu1 * mu2)
    ) / (1 - rho**2)


@dataclass(frozen=True)
class CrossEntropyReport:
    h_max: float
    joint_entropy: float
    slack_a: float
    is_product: bool
    equality_a: bool
    cross_product: float | None = None
    h_max_b: float | None = None
    slack_b: float | None = None
    equality_b: bool | None = None

    @property
    def consistent(self) -> bool:
        """Equality cases coincide with pi being a product distribution."""
        ok = self.equality_a == self.is_product
        if self.equality_b is not None:
            ok = ok and self.equality_b == self.is_product
        return ok


def check_maximal_cross_entropy_properties(
    pi: JointPmf, px: Pmf | None = None, py: Pmf | None = None, tol: float = 1e-8
) -> CrossEntropyReport:
    """Slacks of H(pi_X, pi_Y || pi) >= H(pi) and, when full-support
    marginals are supplied, of H(P_X, P_Y || pi) >= sum P_X P_Y log 1/pi."""
    h, _ = max_cross_entropy(pi.px, pi.py, pi)
    hj = entropy(pi)
    slack_a = h - hj
    is_product = tv_distance(pi.mass, np.outer(pi.px.mass, pi.py.mass)) < tol
    extra = {}
    if px is not None and py is not None:
        if np.any(pi.mass <= 0):
            raise ValueError("part (b) needs supp(pi) = X x Y")
        if np.any(px.mass <= 0) or np.any(py.mass <= 0):
            raise ValueError("part (b) needs full-support marginals")
        hb, _ = max_cross_entropy(px, py, pi)
        cross = float(np.sum(np.outer(px.mass, py.mass) * -np.log(pi.mass)))
        extra = dict(
            cross_product=cross,
            h_max_b=hb,
            slack_b=hb - cross,
            equality_b=abs(hb - cross) <= tol,
        )
    return CrossEntropyReport(h, hj, slack_a, is_product, abs(slack_a) <= tol, **extra)
