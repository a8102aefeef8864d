import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from grushin import ExponentField, Grid, GridFunction, GrushinSpace
from grushin.operators import (horizontal_gradient, horizontal_jet, infinity_laplacian, infinity_x_laplacian,
                               k_energy, log_term, p_x_laplacian, sym_hessian)
from grushin.polynomial import Polynomial

from oracles import random_polynomial, symbolic_gradient, symbolic_sym_hessian


def _sample(grid, text, n=None):
    p = Polynomial.parse(text, n or grid.ndim)
    return GridFunction.from_function(grid, p)


GRID2 = Grid((-1, -1), (1, 1), (9, 9))


def test_gradient_examples(plane):
    u = _sample(GRID2, "x2")
    for node in [(3, 4), (6, 2)]:
        a = GRID2.point(node)[0]
        np.testing.assert_allclose(horizontal_gradient(plane, u, node), [0, a], atol=1e-14)
    np.testing.assert_array_equal(horizontal_gradient(plane, GridFunction.constant(GRID2, 3.0), (4, 4)), [0, 0])
    eu = GrushinSpace.euclidean(2)
    v = _sample(GRID2, "3*x1 + 4*x2")
    for node in GRID2.indices():
        if GRID2.margin(node) >= 1:
            np.testing.assert_allclose(horizontal_gradient(eu, v, node), [3, 4], atol=1e-12)


def test_boundary_node_rejected(plane):
    u = _sample(GRID2, "x2")
    with pytest.raises(ValueError):
        horizontal_gradient(plane, u, (0, 4))
    with pytest.raises(ValueError):
        sym_hessian(plane, u, (1, 4))


def test_hessian_examples(plane):
    H = sym_hessian(plane, _sample(GRID2, "x2"), (4, 4))
    np.testing.assert_allclose(H, [[0, 0.5], [0.5, 0]], atol=1e-12)
    np.testing.assert_allclose(sym_hessian(GrushinSpace.euclidean(2), _sample(GRID2, "2*x1 - x2 + 1"), (4, 4)),
                               np.zeros((2, 2)), atol=1e-12)
    for space in (plane, GrushinSpace.euclidean(2)):
        np.testing.assert_allclose(sym_hessian(space, _sample(GRID2, "x1^2"), (3, 5)), [[2, 0], [0, 0]], atol=1e-12)


def test_hessian_exactly_symmetric(space3, rng):
    g = Grid((-1, -1, -1), (1, 1, 1), (7, 7, 7))
    u = GridFunction(g, rng.normal(size=g.counts))
    for stencil in ("nested", "compact"):
        H = horizontal_jet(space3, u, (3, 3, 3), stencil).hessian
        assert np.array_equal(H, H.T)


def test_infinity_laplacian_examples(plane):
    assert abs(infinity_laplacian(plane, _sample(GRID2, "x2"), (6, 4))) < 1e-12
    assert infinity_laplacian(plane, GridFunction.constant(GRID2, 2.0), (4, 4)) == 0
    g = Grid((0, 0), (1, 1), (33, 33))
    c = np.array([-0.5, -0.5])
    cone = GridFunction.from_function(g, lambda x: np.linalg.norm(x - c, axis=-1))
    vals = [abs(infinity_laplacian(GrushinSpace.euclidean(2), cone, node)) for node in [(8, 8), (16, 24), (24, 4)]]
    assert max(vals) < 1e-3


def test_log_term_examples(plane):
    e = math.e
    g = Grid((e - 1, -1), (e + 1, 1), (5, 5))
    u = _sample(g, "x2")
    pf = ExponentField(2.0, Polynomial.parse("x2", 2), 1.01)
    assert log_term(plane, u, pf, (2, 2)) == pytest.approx(e**4 / 2, rel=1e-12)
    assert infinity_x_laplacian(plane, u, pf, (2, 2)) == pytest.approx(e**4 / 2, rel=1e-9)
    unit = _sample(GRID2, "0.6*x1 + 0.8*x2")
    pf2 = ExponentField(2.0, Polynomial.parse("0.3*x1 + 0.1*x2^2", 2), 1.01)
    assert log_term(GrushinSpace.euclidean(2), unit, pf2, (4, 4)) == pytest.approx(0, abs=1e-14)
    assert abs(infinity_x_laplacian(GrushinSpace.euclidean(2), unit, pf2, (4, 4))) < 1e-12
    assert log_term(plane, GridFunction.constant(GRID2, 1.0), pf2, (4, 4)) == 0


def test_log_term_continuous_at_zero_gradient():
    eu = GrushinSpace.euclidean(2)
    pf = ExponentField(2.0, Polynomial.parse("x1", 2), 1.01)
    prev = np.inf
    for eps in [1e-1, 1e-2, 1e-3, 1e-4]:
        val = abs(log_term(eu, _sample(GRID2, f"{eps}*x1"), pf, (6, 4)))
        assert val < prev and val <= eps**3 * abs(math.log(eps))
        prev = val


def test_constant_exponent_drops_log_term(plane, rng):
    u = GridFunction(GRID2, rng.normal(size=GRID2.counts))
    pf = ExponentField.constant(3.0, 2)
    assert infinity_x_laplacian(plane, u, pf, (4, 4)) == infinity_laplacian(plane, u, (4, 4))


def test_p_x_laplacian_examples(plane, rng):
    eu = GrushinSpace.euclidean(2)
    assert p_x_laplacian(eu, _sample(GRID2, "x1^2"), ExponentField.constant(2, 2), 1, (4, 4)) == pytest.approx(2)
    assert p_x_laplacian(plane, GridFunction.constant(GRID2, 1.0), ExponentField.constant(3, 2), 8, (4, 4)) == 0
    # unit gradient: reduces to tr H + (kp - 2) <Hg, g>
    u = _sample(GRID2, "x1 + 0.1*x2^2")
    node = (4, 4)
    jet = horizontal_jet(eu, u, node)
    assert np.linalg.norm(jet.gradient) == pytest.approx(1)
    pf = ExponentField(2.5, Polynomial.parse("0.2*x1", 2), 1.01)
    kp = 3 * 2.5
    expect = np.trace(jet.hessian) + (kp - 2) * jet.gradient @ jet.hessian @ jet.gradient
    assert p_x_laplacian(eu, u, pf, 3, node) == pytest.approx(expect, rel=1e-12)


def test_p_x_laplacian_large_exponent():
    eu = GrushinSpace.euclidean(2)
    u = _sample(GRID2, "8*x1 + x1^2")
    val = p_x_laplacian(eu, u, ExponentField.constant(4, 2), 64, (4, 4))
    assert np.isfinite(val) and val > 0
    with pytest.raises(OverflowError):
        p_x_laplacian(eu, _sample(GRID2, "1e6*x1 + x1^2"), ExponentField.constant(4, 2), 64, (4, 4))


def test_k_energy_examples():
    g1 = Grid((0,), (1,), (11,))
    eu1 = GrushinSpace.euclidean(1)
    assert k_energy(eu1, _sample(g1, "x1"), ExponentField.constant(2, 1), 1) == pytest.approx(0.5, rel=1e-12)
    assert k_energy(eu1, GridFunction.constant(g1, 4.0), ExponentField.constant(2, 1), 3) == 0


@pytest.mark.parametrize("k", [1, 8, 64])
def test_k_energy_closed_form_for_constant_gradient(k):
    # |grad u| = c everywhere: E = (V c^(kp) / (kp))^(1/k) exactly
    eu = GrushinSpace.euclidean(2)
    g = Grid((-1, -1), (1, 1), (9, 9))
    u = _sample(g, "1.2*x1 - 1.6*x2")
    c, p, V = 2.0, 2.5, 4.0
    expect = math.exp((math.log(V) + k * p * math.log(c) - math.log(k * p)) / k)
    assert k_energy(eu, u, ExponentField.constant(p, 2), k) == pytest.approx(expect, rel=1e-12)


def test_k_energy_log_ratio_tends_to_max_exponent():
    eu = GrushinSpace.euclidean(2)
    g = Grid((-1, -1), (1, 1), (33, 33))
    u = _sample(g, "2*x1")
    pf = ExponentField(2.0, Polynomial.parse("0.25*x1^2", 2), 1.05)
    pmax = float(pf(g.coordinates()).max())
    gaps = [abs(math.log(k_energy(eu, u, pf, k)) / math.log(2) - pmax) for k in (16, 64, 256, 1024)]
    assert all(b < a for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] < 0.02 * pmax


def test_k_energy_invariance_and_monotonicity(plane, rng):
    pf = ExponentField(2.0, Polynomial.parse("0.25*x1^2", 2), 1.05)
    u = GridFunction(GRID2, rng.normal(size=GRID2.counts))
    e = k_energy(plane, u, pf, 4)
    assert k_energy(plane, u + 3.0, pf, 4) == pytest.approx(e, rel=1e-12)
    assert k_energy(plane, u * 1.5, pf, 4) > e


def test_discrete_calculus_is_second_order(plane, rng):
    n = 2
    for _ in range(5):
        f = random_polynomial(rng, n)
        errs = []
        for cnt in (9, 17, 33):
            g = Grid((-1, -1), (1, 1), (cnt, cnt))
            u = GridFunction.from_function(g, f)
            node = g.nearest_index([0.5, -0.25])
            x = g.point(node)
            jet = horizontal_jet(plane, u, node)
            errs.append(max(np.max(np.abs(jet.gradient - symbolic_gradient(plane, f, x))),
                            np.max(np.abs(jet.hessian - symbolic_sym_hessian(plane, f, x)))))
        if errs[0] > 1e-10:
            assert errs[0] / errs[1] >= 3.5 and errs[1] / errs[2] >= 3.5


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 5.0), st.integers(0, 2**31))
def test_cubic_homogeneity(lam, seed):
    space = GrushinSpace.grushin_plane()
    u = GridFunction(GRID2, np.random.default_rng(seed).normal(size=GRID2.counts))
    base = infinity_laplacian(space, u, (4, 3))
    scaled = infinity_laplacian(space, u * lam, (4, 3))
    assert scaled == pytest.approx(lam**3 * base, rel=1e-9, abs=1e-12)
    assert infinity_laplacian(space, u + lam, (4, 3)) == pytest.approx(base, rel=1e-9, abs=1e-12)


def test_exponent_field_validation():
    with pytest.raises(ValueError):
        ExponentField(1.0, Polynomial.zero(1), 1.5)
    with pytest.raises(ValueError):
        ExponentField(2.0, Polynomial.zero(1), 1.0)
    pf = ExponentField(2.0, Polynomial.parse("-3*x1", 1), 1.2)
    assert pf(np.array([1.0])) == 1.2
    assert pf.gradient(np.array([1.0]))[0] == 0
    assert pf.gradient(np.array([0.0]))[0] == -3
