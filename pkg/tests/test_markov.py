import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ruelle_lab.errors import ModelError, ResourceCapError
from ruelle_lab.markov import (
    Branch,
    ExpansionConstants,
    MarkovMapSystem,
    check_theorem42,
    choose_p1,
    constant_roof,
    cosine_roof,
    cylinder_interval,
    cylinder_tables,
    doubling_map,
    expansion_constants,
    fit_lemma41,
    golden_mean_map,
    iterate_along,
    linear_branch,
    markov_system_from_config,
    perturbed_doubling,
    three_five_map,
    verify_expansion,
)
from ruelle_lab.symbolic import full_shift, is_admissible

PERTURBED = perturbed_doubling(0.5)


def test_doubling_cylinders_are_dyadic():
    sys = doubling_map()
    c = cylinder_interval(sys, (1, 2, 1))
    assert (c.lo, c.hi) == (0.25, 0.375)
    assert c.depth == 2
    for m, t in enumerate(cylinder_tables(sys, 8)):
        np.testing.assert_allclose(t.diam, 2.0 ** -(m + 1), rtol=0, atol=1e-15)


def test_nonlinear_inverse_round_trip():
    y = np.linspace(0, 1, 257)
    for i in (1, 2):
        x = PERTURBED.inverse(i, y)
        lo, hi = PERTURBED.intervals[i - 1]
        assert np.all((x >= lo) & (x <= hi))
        np.testing.assert_allclose(PERTURBED.branches[i - 1].forward(x), y, atol=1e-13)


def test_branch_validation():
    roof = constant_roof()
    with pytest.raises(ModelError, match="expanding"):
        MarkovMapSystem(full_shift(1), [linear_branch(0, 1, 0, 1)], roof)
    with pytest.raises(ModelError, match="Markov"):
        MarkovMapSystem(full_shift(2), [linear_branch(0, 0.5, 0, 0.9), linear_branch(0.5, 1, 0, 1)], roof)
    with pytest.raises(ModelError, match="disjoint"):
        MarkovMapSystem(full_shift(2), [linear_branch(0, 0.6, 0, 1), linear_branch(0.5, 1, 0, 1)], roof)


def test_roof_validation():
    with pytest.raises(ModelError):
        cosine_roof(1.0, 1.5)
    with pytest.raises(ModelError):
        constant_roof(0.0)


def test_partition_at_each_depth():
    for sys in (PERTURBED, golden_mean_map()):
        for t in cylinder_tables(sys, 7):
            order = np.argsort(t.lo)
            lo, hi = t.lo[order], t.hi[order]
            np.testing.assert_allclose(lo[1:], hi[:-1], atol=1e-13)
            assert t.diam.sum() == pytest.approx(sys.intervals[:, 1].max() - sys.intervals[:, 0].min(), abs=1e-12)


def test_three_five_has_gaps():
    t = cylinder_tables(three_five_map(), 3)[-1]
    assert t.diam.sum() < 2.0
    np.testing.assert_allclose(np.sort(t.diam)[[0, -1]], [1 / 5**3, 1 / 3**3], rtol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(1, 2), min_size=1, max_size=12))
def test_cylinder_nesting_and_coding(word):
    w = tuple(word)
    c = cylinder_interval(PERTURBED, w)
    parent = cylinder_interval(PERTURBED, w[:-1]) if len(w) > 1 else None
    if parent is not None:
        assert parent.lo - 1e-15 <= c.lo and c.hi <= parent.hi + 1e-15
    x = 0.5 * (c.lo + c.hi)
    # the midpoint's itinerary reproduces the word
    for step, s in enumerate(w):
        y = float(iterate_along(PERTURBED, w, x, step))
        assert PERTURBED.intervals[s - 1][0] - 1e-12 <= y <= PERTURBED.intervals[s - 1][1] + 1e-12


@settings(max_examples=20, deadline=None)
@given(st.lists(st.sampled_from([1, 2]), min_size=2, max_size=10))
def test_golden_mean_cylinder_exists_iff_admissible(word):
    g = golden_mean_map()
    ok = is_admissible(g.spec, word)
    c = cylinder_interval(g, tuple(word)) if ok else None
    assert (c is not None and c.diameter > 0) or not ok


def test_expansion_constants_perturbed():
    c = expansion_constants(PERTURBED, m_max=5)
    assert c.c0 == 1.0
    assert (c.gamma, c.gamma1) == pytest.approx((1.5, 2.5), rel=1e-6)
    chk = verify_expansion(PERTURBED, ExpansionConstants(1.0, 1.5, 2.5), 6, pairs_per_depth=200)
    assert chk.holds
    bad = verify_expansion(PERTURBED, ExpansionConstants(1.0, 2.2, 2.5), 6, pairs_per_depth=200)
    assert not bad.holds


def test_choose_p1():
    assert choose_p1(golden_mean_map())[0] == 2
    p1, rho0 = choose_p1(three_five_map())
    assert p1 == 1 and rho0 == pytest.approx(1 / 3)


def test_lemma41_perturbed_small_depth():
    fit = fit_lemma41(PERTURBED, 8)
    assert fit.holds and fit.violations == 0
    # cylinder-lengths 0..8, i.e. words of 1..9 symbols
    assert fit.cylinders == 2**10 - 2
    assert fit.rho1 < 1


def test_theorem42_exact_and_gapped():
    rep = check_theorem42(doubling_map(), 8)
    assert rep.rhoA == 0.5 and rep.p0 == 1
    rep35 = check_theorem42(three_five_map(), 6)
    assert rep35.rhoA == pytest.approx(0.2, abs=1e-10)
    assert rep35.rhoB == pytest.approx(1 / 3, abs=1e-10)


def test_cylinder_cap():
    with pytest.raises(ResourceCapError):
        cylinder_tables(doubling_map(), 20, cap=1000)


def test_config_loader():
    s = markov_system_from_config({"builtin": "perturbed-doubling", "eps": 0.3, "roof": {"kind": "cosine"}})
    assert s.gamma == pytest.approx(1.7)
    lin = markov_system_from_config({"kind": "linear", "matrix": [[1, 1], [1, 0]]})
    assert lin.k == 2
    with pytest.raises(ModelError):
        markov_system_from_config({"builtin": "nope"})


def test_newton_inverse_without_closed_form():
    f = lambda x: 3 * x + 0.1 * np.sin(2 * np.pi * x)
    br = Branch(0.0, 1.0, f, lambda x: 3 + 0.2 * np.pi * np.cos(2 * np.pi * x), 3 - 0.2 * np.pi, 3 + 0.2 * np.pi)
    y = np.linspace(0, 3, 101)
    np.testing.assert_allclose(f(br.invert(y)), y, atol=1e-12)
