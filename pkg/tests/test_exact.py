import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chansynth.dist import LOG2, Channel, DistributionError, JointPmf, Pmf, channel_power, entropy
from chansynth.exact import (
    PreconditionError,
    SynthesizedChannel,
    _target_rows,
    assemble_exact_code,
    channel_deficit,
    conditional_huffman_code,
    conditional_huffman_rate,
    end_to_end_demo,
    expected_length,
    expected_rate,
    huffman_lengths,
    mixture_decompose,
    typical_inputs,
    verify_rational,
)
from chansynth.regions import Decomposition


def _exact_channel(pi, n, eps):
    idx, _, _ = typical_inputs(pi, n, eps)
    return SynthesizedChannel(n, pi.shape[0], pi.shape[1], idx, _target_rows(pi, n, idx), eps)


# --- mixture decomposition ----------------------------------------------------


def test_residual_of_exact_channel_is_target():
    pi = JointPmf.dsbs(0.2)
    ch = _exact_channel(pi, 4, 0.5)
    resid = mixture_decompose(ch, pi, 0.3)
    assert np.allclose(resid.rows, ch.rows, atol=1e-15)


def test_residual_boundary_case():
    pi = JointPmf(np.full((2, 2), 0.25))
    ch = SynthesizedChannel(1, 2, 2, np.array([0, 1]), np.array([[0.55, 0.45], [0.5, 0.5]]))
    resid = mixture_decompose(ch, pi, math.log(1.1))
    assert np.allclose(resid.rows[0], [0.0, 1.0], atol=1e-12)
    assert np.allclose(resid.rows[1], [0.5, 0.5], atol=1e-12)


def test_mixture_identity():
    rng = np.random.default_rng(0)
    pi = JointPmf.dsbs(0.3)
    base = _exact_channel(pi, 3, 1.0)
    rows = base.rows * rng.uniform(0.7, 1.3, size=base.rows.shape)
    rows /= rows.sum(axis=1, keepdims=True)
    ch = SynthesizedChannel(3, 2, 2, base.x_index, rows)
    delta = channel_deficit(ch, pi) + 1e-12
    resid = mixture_decompose(ch, pi, delta)
    keep = math.exp(-delta)
    assert np.abs(keep * ch.rows + (1 - keep) * resid.rows - base.rows).max() <= 1e-12
    assert np.abs(resid.rows.sum(axis=1) - 1).max() <= 1e-9
    assert resid.rows.min() >= 0


def test_precondition_witness():
    pi = JointPmf(np.full((2, 2), 0.25))
    ch = SynthesizedChannel(1, 2, 2, np.array([0, 1]), np.array([[0.7, 0.3], [0.5, 0.5]]))
    with pytest.raises(PreconditionError) as err:
        mixture_decompose(ch, pi, math.log(1.1))
    assert err.value.witness == (0, 0)
    with pytest.raises(ValueError):
        mixture_decompose(ch, pi, 0.0)


# --- assembled code -------------------------------------------------------------


def test_assemble_with_exact_approximation():
    pi = JointPmf.dsbs(0.2)
    ch = _exact_channel(pi, 4, 0.5)
    code = assemble_exact_code(ch, pi, 0.1)
    assert code.max_abs_error <= 1e-15
    assert set(code.branches) >= {"typical_code", "typical_fallback", "atypical"}


def test_atypical_rows_are_target():
    pi = JointPmf.dsbs(0.2)
    idx, _, _ = typical_inputs(pi, 4, 0.2)
    rng = np.random.default_rng(1)
    target = _target_rows(pi, 4, idx)
    rows = target * rng.uniform(0.9, 1.1, size=target.shape)
    rows /= rows.sum(axis=1, keepdims=True)
    ch = SynthesizedChannel(4, 2, 2, idx, rows, 0.2)
    code = assemble_exact_code(ch, pi, channel_deficit(ch, pi) + 1e-12)
    full = channel_power(pi.y_given_x(), 4)
    atypical = np.setdiff1d(np.arange(16), idx)
    assert atypical.size > 0
    assert np.array_equal(code.composite[atypical], full[atypical])
    assert code.max_abs_error <= 1e-12


def test_rational_verification():
    pi = JointPmf.dsbs(0.2)
    assert verify_rational(_exact_channel(pi, 3, 0.5), pi)
    rows = np.array([[0.5, 0.5], [0.5, 0.5]])
    ch = SynthesizedChannel(1, 2, 2, np.array([0, 1]), rows)
    assert verify_rational(ch, JointPmf(np.full((2, 2), 0.25)))
    with pytest.raises(ValueError):
        verify_rational(_exact_channel(pi, 7, 0.5), pi)


# --- Huffman -----------------------------------------------------------------


def test_huffman_examples():
    assert list(huffman_lengths([0.5, 0.25, 0.25])) == [1, 2, 2]
    assert expected_length([0.5, 0.25, 0.25], [1, 2, 2]) == 1.5
    l3 = huffman_lengths([1 / 3] * 3)
    assert expected_length([1 / 3] * 3, l3) == pytest.approx(5 / 3, abs=1e-15)
    assert entropy(Pmf.uniform(3)) / LOG2 == pytest.approx(math.log2(3), abs=1e-15)
    assert list(huffman_lengths([1.0])) == [0]
    with pytest.raises(DistributionError):
        huffman_lengths([0.0, 0.0])


def test_huffman_tie_breaking_is_deterministic():
    assert list(huffman_lengths([0.25] * 4)) == [2, 2, 2, 2]
    a = huffman_lengths([0.4, 0.2, 0.2, 0.2])
    assert list(a) == list(huffman_lengths([0.4, 0.2, 0.2, 0.2]))
    assert expected_length([0.4, 0.2, 0.2, 0.2], a) == pytest.approx(2.0, abs=1e-15)


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_huffman_beats_random_kraft_codes(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(2, 9))
    p = rng.dirichlet(np.ones(k))
    lengths = huffman_lengths(p)
    assert np.sum(2.0 ** -lengths) == pytest.approx(1.0, abs=1e-12)
    best = expected_length(p, lengths)
    h = entropy(Pmf(p)) / LOG2
    assert h - 1e-12 <= best < h + 1
    for _ in range(20):
        cand = rng.integers(1, 10, size=k)
        if np.sum(2.0 ** -cand.astype(float)) <= 1:
            assert best <= expected_length(p, cand) + 1e-12


def test_conditional_huffman_examples():
    b = 3
    joint = np.full((2**b, 4), 1 / (2**b * 4))
    hr = conditional_huffman_rate(joint)
    assert hr.length_bits == pytest.approx(b, abs=1e-12) and hr.entropy_bits == pytest.approx(b, abs=1e-12)
    assert hr.sandwich
    hr = conditional_huffman_rate(np.diag([0.1, 0.2, 0.3, 0.4]))
    assert hr.length_bits == 0.0 and hr.sandwich


def test_conditional_huffman_random():
    rng = np.random.default_rng(8)
    for _ in range(50):
        m = rng.dirichlet(np.ones(32)).reshape(8, 4)
        code = conditional_huffman_code(m)
        assert np.all(code.kraft_sums() <= 1 + 1e-12)
        assert conditional_huffman_rate(m).sandwich


# --- rate accounting ------------------------------------------------------------


def test_expected_rate_limits():
    r, n = 0.6, 8
    rate = expected_rate(1.0, n, 1e-15, r, 2)["total"]
    assert rate == pytest.approx(1 / n + r, abs=1e-12)
    rate = expected_rate(0.7, n, 0.4, r, 1)["total"]
    assert rate == pytest.approx(0.7 * (1 / n + math.exp(-0.4) * r), abs=1e-15)
    b = expected_rate(0.9, n, 0.05, r, 2)
    assert b["total"] == pytest.approx(
        0.9 * (1 / n + math.exp(-0.05) * r + (1 - math.exp(-0.05)) * LOG2) + 0.1 * LOG2, abs=1e-15
    )
    with pytest.raises(ValueError):
        expected_rate(1.5, n, 0.1, r, 2)


# --- end to end -----------------------------------------------------------------


def test_end_to_end_dsbs():
    pi = JointPmf.dsbs(0.2)
    rep = end_to_end_demo(pi, 8, 0.0, 1.15 * LOG2, seed=0)
    assert rep.finite
    assert rep.exactness_max_abs_error <= 1e-12
    assert rep.huffman["sandwich"]
    h = rep.huffman["conditional_entropy_bits"] * LOG2 / 8
    fallback = rep.rate_breakdown["fallback_typical"] + rep.rate_breakdown["fallback_atypical"]
    assert rep.measured_rate >= h - 1e-12
    assert rep.measured_rate < h + 1 / 8 + fallback
    assert rep.fallback_probability == pytest.approx(1 - math.exp(-rep.delta), abs=1e-15)


def test_end_to_end_rational():
    rep = end_to_end_demo(JointPmf.dsbs(0.2), 6, 0.0, 1.2 * LOG2, seed=1, rational=True)
    assert rep.finite and rep.rational_exact


def test_end_to_end_product_trivial():
    prod = JointPmf.product(Pmf.uniform(2), Pmf.uniform(2))
    d = Decomposition(Pmf([1.0]), Channel([[0.5, 0.5]]), Channel([[0.5, 0.5]]))
    rep = end_to_end_demo(prod, 6, 0.0, 0.0, seed=0, decomposition=d)
    assert rep.finite and rep.exactness_max_abs_error <= 1e-12
    b = rep.rate_breakdown
    assert rep.measured_rate == pytest.approx(
        b["p_typical"] * (b["flag"] + b["code"]) + b["fallback_typical"] * b["p_typical"] + b["fallback_atypical"],
        abs=1e-15,
    )
    assert b["code"] == 0.0


def test_end_to_end_deterministic():
    pi = JointPmf.dsbs(0.2)
    a = end_to_end_demo(pi, 6, 0.0, 1.2 * LOG2, seed=3).to_dict()
    b = end_to_end_demo(pi, 6, 0.0, 1.2 * LOG2, seed=3).to_dict()
    assert a == b


def test_end_to_end_reports_infinite_deficit():
    pi = JointPmf.dsbs(0.2)
    rep = end_to_end_demo(pi, 8, 0.0, 0.0, seed=0)
    assert not rep.finite and rep.deficit == math.inf and rep.diagnostics
