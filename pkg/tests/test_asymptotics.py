import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gapforge.asymptotics import (NormFunctional, StepProfile, c2_relation, chi_suppression,
                                  composite_norm, contraction_ratio, delta_lambda,
                                  differential_residual, large_norm_ratio, single_step_ratio,
                                  two_step_ratio)
from gapforge.quadrature import radial_grid
from gapforge.quark_state import QuarkState, TailSpec, state_from_tail

G = 0.48
LOG_R = [10.0, 1e3, 1e8, 1e30]


# -- norm ---------------------------------------------------------------------

def test_norm_limit_half():
    assert NormFunctional(G, G / 2).limit == pytest.approx(0.5, rel=1e-14)


def test_norm_rejects_bad_delta():
    for d in (0.0, G, 1.0):
        with pytest.raises(ValueError):
            NormFunctional(G, d)


def test_single_step_norm():
    nf = NormFunctional(G, 0.2)
    u = StepProfile((3.0,), (np.e ** 5,))
    assert composite_norm(nf, u) == pytest.approx(3.0 * (1 + 5 ** 0.28), rel=1e-14)


def test_norm_below_mu_is_sup():
    nf = NormFunctional(G, 0.2)
    assert composite_norm(nf, StepProfile((2.0,), (0.5,))) == 2.0
    p = np.linspace(0.01, 0.9, 50)
    assert composite_norm(nf, np.exp(-p), p) == pytest.approx(np.exp(-0.01))


def test_sampled_step_matches_exact():
    nf = NormFunctional(G, 0.24)
    p = np.exp(np.linspace(-3, 8, 4001))
    u = StepProfile((1.5,), (np.e ** 4,))
    assert composite_norm(nf, u(p), p) == pytest.approx(composite_norm(nf, u), rel=1e-3)


def test_nested_steps_additive():
    # norm additivity for nested decreasing steps (expected to fail: the
    # second term is a sup, so the norm of the sum is strictly smaller)
    nf = NormFunctional(G, 0.24)
    u1, u2 = StepProfile((1.0,), (np.e ** 2,)), StepProfile((1.0,), (np.e ** 6,))
    both = StepProfile((1.0, 1.0), (np.e ** 2, np.e ** 6))
    assert composite_norm(nf, both) == pytest.approx(
        composite_norm(nf, u1) + composite_norm(nf, u2), rel=1e-10)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.05, 0.45), st.floats(0.1, 5.0), st.floats(0.1, 5.0),
       st.floats(0.01, 3.0), st.floats(0.01, 3.0), st.floats(-3, 3))
def test_property_norm_homogeneous_and_subadditive(d, s1, s2, a1, a2, c):
    nf = NormFunctional(G, d)
    p = np.exp(np.linspace(-4, 10, 600))
    u = a1 / (1 + (p / s1) ** 2) ** 0.3
    v = a2 * np.exp(-p / (10 * s2))
    nu, nv = composite_norm(nf, u, p), composite_norm(nf, v, p)
    assert composite_norm(nf, c * u, p) == pytest.approx(abs(c) * nu, rel=1e-9, abs=1e-300)
    assert composite_norm(nf, u + v, p) <= (nu + nv) * (1 + 1e-9)


# -- large-norm ratio -------------------------------------------------------------

@pytest.fixture(scope="module")
def ratio_tables():
    return {q: large_norm_ratio(NormFunctional(G, q * G), LOG_R) for q in (0.25, 0.5, 0.75)}


@pytest.mark.parametrize("q", [0.25, 0.5, 0.75])
def test_large_norm_ratio_within_bounds(ratio_tables, q):
    ratios = [r["ratio"] for r in ratio_tables[q]["rows"]]
    assert all(1 / np.e < r < 1 for r in ratios)


@pytest.mark.parametrize("q", [0.25, 0.5, 0.75])
def test_large_norm_ratio_trends_to_limit(ratio_tables, q):
    t = ratio_tables[q]
    ratios = [r["ratio"] for r in t["rows"]]
    assert np.all(np.diff(ratios) < 0)
    assert ratios[-1] == pytest.approx(t["limit"], rel=0.15)


def test_two_step_additive_norm_never_wins():
    nf = NormFunctional(G, G / 2)
    res = large_norm_ratio(nf, [1e3, 1e8], two_step_trials=60, seed=4)
    for row in res["rows"]:
        assert row["best_two_step_additive"] <= row["ratio"] * (1 + 1e-9)


def test_two_step_never_beats_single_step():
    # two nested steps against the composite norm of their sum (expected to
    # fail: the non-additive norm lets nested steps reach a larger ratio)
    nf = NormFunctional(G, G / 2)
    res = large_norm_ratio(nf, [1e8], two_step_trials=60, seed=4)
    row = res["rows"][0]
    assert row["best_two_step"] <= row["ratio"] * (1 + 1e-9)


def test_two_step_reduces_to_single():
    nf = NormFunctional(G, G / 2)
    r1, xs, _ = single_step_ratio(nf, 1e4, 0.63)
    # all height in the inner step with the same extent
    r2 = two_step_ratio(nf, 1e4, 1.0, xs, 2 * xs)
    assert r2 == pytest.approx(r1, rel=1e-6)


# -- contraction ratios ------------------------------------------------------

@pytest.mark.parametrize("j", [1.0, 2.0])
def test_contraction_massive(j):
    out = contraction_ratio(j=j, branch="massive")
    assert out["expected"] == pytest.approx(G / (G + j))
    assert out["ratio"] == pytest.approx(out["expected"], rel=0.05)


def test_contraction_chiral_repulsive():
    out = contraction_ratio(j=0.5, branch="chiral")
    assert abs(out["ratio"]) > 1


def test_contraction_validation():
    with pytest.raises(ValueError):
        contraction_ratio(j=0.0)
    with pytest.raises(ValueError):
        contraction_ratio(j=G, branch="chiral")
    with pytest.raises(ValueError):
        contraction_ratio(j=2 * G, branch="chiral")


# -- chi suppression -----------------------------------------------------------

@pytest.fixture(scope="module")
def chi_rows():
    return chi_suppression([4.0, 8.0, 100.0])


def test_chi_suppressed_at_four_mu(chi_rows):
    # one-significant-figure bound with 50% slack (expected to fail: the
    # measured correction is about gamma_m / log^2, not 0.02 / log^2)
    row = chi_rows[0]
    assert abs(row["ratio"]) <= 1.5 * 0.02 / row["log2"]


def test_chi_decreases_with_p(chi_rows):
    assert abs(chi_rows[-1]["ratio"]) < abs(chi_rows[0]["ratio"])
    assert chi_rows[-1]["ratio"] > 0


def test_chi_zero_when_min_form_exact():
    rows = chi_suppression([8.0, 50.0], min_form_as_exact=True)
    assert all(r["ratio"] == 0.0 for r in rows)


def test_chi_rejects_small_p():
    with pytest.raises(ValueError):
        chi_suppression([2.0])
    with pytest.raises(ValueError):
        chi_suppression([8.0], profile="other")


# -- c2 relation and differential form --------------------------------------------

def test_c2_relation_toy(toy_chiral):
    kern, grid, cfg, asm, rep = toy_chiral
    out = c2_relation(rep.state, kern.gamma_m, np.e ** 3)
    assert 0.8 <= out["ratio"] <= 1.25


def test_c2_prediction_stable_in_cutoff(toy_chiral):
    kern, grid, cfg, asm, rep = toy_chiral
    a = c2_relation(rep.state, kern.gamma_m, np.e ** 3)["c2_predicted"]
    b = c2_relation(rep.state, kern.gamma_m, 2 * np.e ** 3)["c2_predicted"]
    assert b == pytest.approx(a, rel=0.15)


def test_c2_fit_synthetic():
    grid = radial_grid(1e-4, 1e8, 400)
    spec = TailSpec(0.0, 2.5, 0.6, 3.0, include_c2=True)
    out = c2_relation(state_from_tail(grid, spec), 0.6, np.e ** 3)
    assert out["c2_fit"] == pytest.approx(2.5, rel=0.01)
    assert out["gamma_fit"] == pytest.approx(0.6, rel=0.01)


def test_delta_lambda_quadrature():
    grid = radial_grid(1e-4, 10.0, 300)
    # M = 1, Z = 1: 2 g int_0^L k^3/(k^2+1) dk = g (L^2 - log(1 + L^2))
    st_ = QuarkState(grid, np.ones(grid.size), np.ones(grid.size))
    lam = grid.p_max      # the node weights cover the full domain
    ref = 0.5 * (lam ** 2 - np.log1p(lam ** 2))
    assert delta_lambda(st_, 0.5, lam) == pytest.approx(ref, rel=1e-8)


def test_differential_relation_derived(toy_massive):
    kern, grid, cfg, asm, rep = toy_massive
    out = differential_residual(rep.state, kern.gamma_m)
    assert out["max_rel"] < 0.05


def test_differential_relation_printed(toy_massive):
    # (B' p^3 L (1 + 1/L))' = -4 g p Z^2 B as printed (expected to fail: the
    # factor obtained by differentiating the integral equation is 1/(1 + 1/L))
    kern, grid, cfg, asm, rep = toy_massive
    out = differential_residual(rep.state, kern.gamma_m, form="printed")
    assert out["max_rel"] < 0.05
