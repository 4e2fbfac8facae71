import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chansynth.coupling import max_cross_entropy
from chansynth.dist import LOG2, Channel, DistributionError, JointPmf, Pmf, binary_entropy, entropy, mutual_information
from chansynth.regions import (
    Decomposition,
    RegionCurve,
    cuff_constraints,
    dsbs_boundary,
    dsbs_exact_bounds,
    dsbs_exact_region,
    dsbs_tv_bounds,
    dsbs_tv_region,
    gaussian_coupling_term,
    gaussian_exact_bounds,
    gaussian_exact_inner_region,
    gaussian_tv_bounds,
    gaussian_tv_region,
    induced_joint,
    inner_constraints,
    multi_letter_inner,
    necessary_conditional_entropy,
    outer_constraints,
    repair,
    search_lower_boundary,
    tensor_decomposition,
)


def h2(x):
    return binary_entropy(x) / LOG2


def _random_decomposition(rng, k, nx, ny):
    return Decomposition(
        Pmf(rng.dirichlet(np.ones(k))),
        Channel(rng.dirichlet(np.ones(nx), size=k)),
        Channel(rng.dirichlet(np.ones(ny), size=k)),
    )


# --- constraints for one decomposition ---------------------------------------


def test_induced_joint_examples():
    px, py = Pmf([0.3, 0.7]), Pmf([0.6, 0.4])
    d = Decomposition(Pmf([1.0]), Channel([px.mass]), Channel([py.mass]))
    assert np.allclose(induced_joint(d).mass, np.outer(px.mass, py.mass), atol=1e-15)
    pi = JointPmf.dsbs(0.2)
    assert np.allclose(induced_joint(Decomposition.w_equals_y(pi)).mass, pi.mass, atol=1e-15)
    d = Decomposition(Pmf([1.0]), Channel([[0, 1]]), Channel([[1, 0, 0]]))
    assert np.array_equal(induced_joint(d).mass, [[0, 0, 0], [1, 0, 0]])


def test_cuff_examples():
    px, py = Pmf([0.3, 0.7]), Pmf([0.6, 0.4])
    d = Decomposition(Pmf([1.0]), Channel([px.mass]), Channel([py.mass]))
    assert cuff_constraints(d) == pytest.approx((0.0, 0.0), abs=1e-15)
    pi = JointPmf.dsbs(0.2)
    r, s = cuff_constraints(Decomposition.w_equals_y(pi), pi)
    assert r == pytest.approx(mutual_information(pi), abs=1e-12)
    assert s == pytest.approx(entropy(pi.py), abs=1e-12)
    assert r / LOG2 == pytest.approx(0.278072, abs=1e-6)
    assert s / LOG2 == pytest.approx(1.0, abs=1e-12)


def test_constraints_reject_mismatch():
    pi = JointPmf.dsbs(0.2)
    with pytest.raises(DistributionError):
        cuff_constraints(Decomposition.w_equals_y(JointPmf.dsbs(0.3)), pi)
    with pytest.raises(DistributionError):
        inner_constraints(Decomposition.w_equals_y(JointPmf.dsbs(0.3)), pi)


def test_inner_examples():
    px, py = Pmf([0.3, 0.7]), Pmf([0.6, 0.4])
    prod = JointPmf.product(px, py)
    d = Decomposition(Pmf([1.0]), Channel([px.mass]), Channel([py.mass]))
    assert inner_constraints(d, prod) == pytest.approx((0.0, 0.0), abs=1e-12)

    p = 0.2
    a = (1 - math.sqrt(1 - 2 * p)) / 2
    assert a == pytest.approx(0.112702, abs=1e-6)
    pi = JointPmf.dsbs(p)
    d = Decomposition.dsbs(p, a)
    a0, b0 = (1 - p) / 2, p / 2
    b = (p - a) / (1 - 2 * a)
    assert b == pytest.approx(a, abs=1e-12)
    expected = math.log(1 / a0) + (a + b) * math.log(a0 / b0) - binary_entropy(a) - binary_entropy(b)
    assert inner_constraints(d, pi)[1] == pytest.approx(expected, abs=1e-12)

    r, s = inner_constraints(Decomposition.w_equals_y(pi), pi)
    assert r / LOG2 == pytest.approx(1 - h2(0.2), abs=1e-12)
    assert s / LOG2 == pytest.approx(1.0, abs=1e-12)


def test_inner_infinite_sum_bound():
    pi = JointPmf([[0.5, 0.0], [0.25, 0.25]])
    d = Decomposition(Pmf([1.0]), Channel([pi.px.mass]), Channel([pi.py.mass]))
    with pytest.raises(DistributionError):
        inner_constraints(d, pi)  # W constant does not induce a dependent pi
    d = Decomposition.w_equals_xy(pi)
    assert math.isfinite(inner_constraints(d, pi)[1])


def test_outer_examples():
    pi = JointPmf.product(Pmf([0.3, 0.7]), Pmf([0.6, 0.4]))
    d = Decomposition(Pmf([1.0]), Channel([pi.px.mass]), Channel([pi.py.mass]))
    h, _ = max_cross_entropy(pi.px, pi.py, pi)
    _, s = outer_constraints(d, pi)
    assert s == pytest.approx(-entropy(pi) + h, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_bound_ordering(seed):
    rng = np.random.default_rng(seed)
    d = _random_decomposition(rng, int(rng.integers(1, 5)), 2, int(rng.integers(2, 4)))
    pi = induced_joint(d)
    _, cuff = cuff_constraints(d, pi)
    _, inner = inner_constraints(d, pi)
    _, outer = outer_constraints(d, pi)
    assert inner >= cuff - 1e-9
    assert outer <= inner + 1e-9
    assert outer >= -1e-9


def test_repair_induces_pi_exactly():
    rng = np.random.default_rng(0)
    pi = JointPmf(rng.dirichlet(np.ones(6)).reshape(2, 3))
    a = rng.dirichlet(np.ones(2), size=4) * 0.25
    b = rng.dirichlet(np.ones(3), size=4)
    d = repair(a, b, pi)
    assert np.abs(induced_joint(d).mass - pi.mass).max() <= 1e-12


# --- DSBS closed forms --------------------------------------------------------


def test_dsbs_exact_at_a_equals_p():
    r, s = dsbs_exact_bounds(0.2, 0.2)
    assert r == pytest.approx(1 - h2(0.2), abs=1e-12)
    assert r == pytest.approx(0.278072, abs=1e-6)
    assert s == pytest.approx(1.0, abs=1e-12)
    assert s - r == pytest.approx(h2(0.2), abs=1e-12)


def test_dsbs_exact_at_a_zero():
    r, s = dsbs_exact_bounds(0.2, 0.0)
    assert r == pytest.approx(1.0, abs=1e-15)
    assert s == pytest.approx(math.log2(1 / 0.4) + 0.2 * 2 - h2(0.2), abs=1e-12)
    assert s == pytest.approx(1.0, abs=1e-12)


def test_dsbs_small_p_limit():
    # X = Y noiseless: one bit must be sent, and no shared randomness is needed
    p = 1e-9
    curve = dsbs_exact_region(p, 11)
    assert np.allclose(curve.boundary([0.0, 0.5, 5.0]), 1.0, atol=1e-6)
    assert dsbs_boundary(p, 0.0) == pytest.approx(1.0, abs=1e-6)
    assert dsbs_boundary(p, 0.0) - dsbs_boundary(p, 10.0) <= 1e-6


def test_dsbs_tv_examples():
    assert dsbs_tv_bounds(0.2, 0.2)[1] == pytest.approx(1.0, abs=1e-12)
    for a in np.linspace(1e-3, 0.2 - 1e-3, 50):
        assert dsbs_exact_bounds(0.2, a)[1] >= dsbs_tv_bounds(0.2, a)[1]
        assert dsbs_exact_bounds(0.2, a)[0] == dsbs_tv_bounds(0.2, a)[0]


def test_dsbs_rejects_half():
    with pytest.raises(ValueError):
        dsbs_exact_region(0.5)


def test_dsbs_curves_are_monotone_and_ordered():
    for p in (0.05, 0.2, 0.35):
        ex, tv = dsbs_exact_region(p), dsbs_tv_region(p)
        r0 = np.linspace(0, 1.5, 200)
        be, bt = ex.boundary(r0), tv.boundary(r0)
        assert np.all(np.diff(be) <= 1e-12) and np.all(np.diff(bt) <= 1e-12)
        assert np.all(be >= bt - 1e-12)
        assert np.any(be > bt + 1e-6)


def test_dsbs_curves_share_endpoint():
    p = 0.2
    for curve in (dsbs_exact_region(p), dsbs_tv_region(p)):
        assert curve.boundary(h2(p))[0] == pytest.approx(1 - h2(p), abs=1e-9)


def test_region_units_round_trip():
    c = dsbs_exact_region(0.2, 11)
    back = c.to("nats").to("bits")
    assert np.allclose(back.r, c.r, atol=1e-15)
    assert c.to("nats").sum_bound[-1] == pytest.approx(LOG2, abs=1e-12)
    with pytest.raises(ValueError):
        c.to("hartleys")


def test_dsbs_boundary_matches_dense_grid():
    # a grid over a is an upper-bound oracle; its error is at most slope * spacing
    p, n = 0.2, 20001
    curve = dsbs_exact_region(p, n)
    slope = math.log2((1 - 1e-6) / 1e-6)
    for r0 in (0.0, 0.3, 0.6, 0.9):
        exact = dsbs_boundary(p, r0)
        grid = curve.boundary(r0)[0]
        assert exact <= grid + 1e-12
        assert grid - exact <= slope * p / (n - 1)


# --- Gaussian closed forms ----------------------------------------------------


def test_gaussian_rho_zero():
    assert gaussian_tv_region(0.0, 21).boundary(0.0)[0] == pytest.approx(0.0, abs=1e-6)
    for a in (0.1, 0.5, 0.9):
        assert gaussian_exact_bounds(0.0, a) == gaussian_tv_bounds(0.0, a)


def test_gaussian_symmetric_point():
    rho = 0.5
    a = math.sqrt(rho)
    r, s = gaussian_tv_bounds(rho, a)
    assert r == pytest.approx(0.5 * math.log(1 / (1 - rho)), abs=1e-12)
    assert s == pytest.approx(0.5 * math.log((1 + rho) / (1 - rho)), abs=1e-12)
    _, se = gaussian_exact_bounds(rho, a)
    assert se / LOG2 == pytest.approx(0.5 * math.log2(0.75 / 0.25) + 0.25 / (0.75 * LOG2), abs=1e-12)


def test_gaussian_endpoints_diverge():
    rho = 0.5
    assert gaussian_tv_bounds(rho, rho)[1] == math.inf
    assert gaussian_exact_bounds(rho, rho)[1] == math.inf
    assert gaussian_tv_bounds(rho, 1.0)[0] == math.inf


def test_gaussian_coupling_term_nonnegative():
    for rho in (0.1, 0.5, 0.9):
        for a in np.linspace(rho, 1, 30):
            assert gaussian_coupling_term(rho, a) >= 0
    curve_e, curve_t = gaussian_exact_inner_region(0.5), gaussian_tv_region(0.5)
    assert np.all(curve_e.sum_bound >= curve_t.sum_bound)
    assert np.all(curve_e.sum_bound[1:-1] > curve_t.sum_bound[1:-1])


# --- search -----------------------------------------------------------------


def test_search_product_is_zero():
    pi = JointPmf.product(Pmf([0.3, 0.7]), Pmf([0.2, 0.5, 0.3]))
    curve = search_lower_boundary(pi, [0.0, 0.5], "inner", restarts=2, seed=0, maxiter=50)
    assert np.all(curve.r <= 1e-9)


def test_search_dsbs_matches_closed_form():
    pi = JointPmf.dsbs(0.2)
    grid = np.array([0.0, 0.3, 0.6]) * LOG2
    curve = search_lower_boundary(pi, grid, "inner", restarts=4, seed=1, maxiter=100).to("bits")
    ref = np.array([dsbs_boundary(0.2, r0) for r0 in curve.r0])
    diff = curve.r - ref
    assert np.all(diff >= -1e-12) and np.all(diff <= 1e-4)


def test_search_large_r0_reaches_mutual_information():
    pi = JointPmf.dsbs(0.2)
    curve = search_lower_boundary(pi, [5.0], "inner", restarts=2, seed=0, maxiter=50)
    assert curve.r[0] == pytest.approx(mutual_information(pi), abs=1e-9)


def test_search_cuff_matches_tv_closed_form():
    pi = JointPmf.dsbs(0.2)
    grid = np.array([0.0, 0.4]) * LOG2
    curve = search_lower_boundary(pi, grid, "cuff", restarts=4, seed=0, maxiter=100).to("bits")
    ref = np.array([dsbs_boundary(0.2, r0, "tv") for r0 in curve.r0])
    assert np.all(curve.r - ref >= -1e-9) and np.all(curve.r - ref <= 1e-3)


def test_search_deterministic():
    pi = JointPmf([[0.3, 0.1], [0.15, 0.45]])
    a = search_lower_boundary(pi, [0.0, 0.2], "inner", restarts=2, seed=4, maxiter=40)
    b = search_lower_boundary(pi, [0.0, 0.2], "inner", restarts=2, seed=4, maxiter=40)
    assert np.array_equal(a.r, b.r)
    assert isinstance(a, RegionCurve)


def test_search_decompositions_induce_pi():
    pi = JointPmf([[0.3, 0.1], [0.15, 0.45]])
    curve = search_lower_boundary(pi, [0.0, 0.3], "inner", restarts=2, seed=0, maxiter=40)
    for d in curve.decompositions:
        assert np.abs(induced_joint(d).mass - pi.mass).max() <= 1e-9
        r, s = inner_constraints(d, pi)
    assert np.all(np.diff(curve.r) <= 1e-12)


# --- multi-letter ----------------------------------------------------------


def test_tensor_decomposition_induces_power():
    pi = JointPmf.dsbs(0.2)
    d2 = tensor_decomposition(Decomposition.w_equals_y(pi), 2)
    from chansynth.dist import joint_power

    assert np.allclose(induced_joint(d2).mass, joint_power(pi, 2).mass, atol=1e-15)


def test_multi_letter_n1_equals_single_letter():
    pi = JointPmf.dsbs(0.2)
    grid = [0.0, 0.3]
    a = multi_letter_inner(pi, 1, grid, restarts=1, seed=0)
    b = search_lower_boundary(pi, grid, "inner", 1, 0)
    assert np.array_equal(a.r, b.r)


def test_multi_letter_product_is_zero():
    pi = JointPmf.product(Pmf([0.5, 0.5]), Pmf([0.3, 0.7]))
    curve = multi_letter_inner(pi, 2, [0.0], restarts=0, seed=0, maxiter=20)
    assert curve.r[0] <= 1e-9


def test_multi_letter_dsbs_n2_close_to_single_letter():
    pi = JointPmf.dsbs(0.2)
    grid = np.array([0.0, 0.5]) * LOG2
    one = search_lower_boundary(pi, grid, "inner", restarts=2, seed=0, maxiter=60)
    two = multi_letter_inner(pi, 2, grid, restarts=0, seed=0, single_letter=one, maxiter=20)
    assert np.all(np.abs(two.r - one.r) / LOG2 <= 5e-3)
    assert np.all(two.r <= one.r + 1e-9)


def test_multi_letter_budget():
    from chansynth.dist import BudgetExceeded

    with pytest.raises(BudgetExceeded):
        multi_letter_inner(JointPmf(np.full((3, 3), 1 / 9)), 3, [0.0], budget=100)


# --- necessary conditional entropy ------------------------------------------------


def test_necessary_conditional_entropy_examples():
    assert necessary_conditional_entropy(JointPmf.product(Pmf([0.3, 0.7]), Pmf([0.2, 0.8]))) == pytest.approx(0, abs=1e-15)
    for p in (0.1, 0.3):
        assert necessary_conditional_entropy(JointPmf.dsbs(p)) == pytest.approx(binary_entropy(p), abs=1e-12)
    det = JointPmf([[0.5, 0, 0], [0, 0.3, 0.0], [0, 0.2, 0]])  # Y = g(X)
    assert necessary_conditional_entropy(det) == pytest.approx(0, abs=1e-15)


def test_necessary_conditional_entropy_merges_blocks():
    # y=1 and y=2 share P_{X|Y}, so merging them is allowed and lowers H(f(Y)|X)
    pi = JointPmf([[0.3, 0.1, 0.1], [0.1, 0.2, 0.2]])
    merged = necessary_conditional_entropy(pi)
    full = entropy(pi) - entropy(pi.px)
    assert merged < full
    coarse = JointPmf([[0.3, 0.2], [0.1, 0.4]])
    assert merged == pytest.approx(entropy(coarse) - entropy(coarse.px), abs=1e-12)


def test_necessary_conditional_entropy_alphabet_limit():
    from chansynth.dist import BudgetExceeded

    with pytest.raises(BudgetExceeded):
        necessary_conditional_entropy(JointPmf(np.full((1, 13), 1 / 13)))
