import math

import numpy as np
import pytest

import pkcurv

SPHERE = {"n": 3, "p": 2, "k": 2, "l": 0, "b": -3.0, "q": 0.0, "f": {"type": "constant", "c": 1.0}}


def test_sigma_and_quotient():
    lam = np.array([1.0, 2.0, 3.0])
    assert pkcurv.sigma(2, lam) == pytest.approx(11.0)
    assert pkcurv.quotient_root(2, 1, lam) == pytest.approx(11.0 / 6.0)


def test_unit_sphere_operator_value():
    F, grad, kappa = pkcurv.F_and_gradient(np.eye(3), 2, 2, 0)
    assert F == pytest.approx(12.0)
    assert np.allclose(kappa, 1.0)
    assert np.allclose(grad, grad.T)


def test_lambda_sums():
    lam = pkcurv.lambda_of(np.array([1.0, 2.0, 4.0]), 2)
    assert sorted(lam) == pytest.approx([3.0, 5.0, 6.0])


def test_round_sphere_solve():
    sol = pkcurv.solve(SPHERE, res=16)
    assert sol.converged
    assert np.allclose(sol.rho, 1.0 / 12.0, rtol=1e-8)
    assert all(a["pass"] for a in sol.audits)


def test_homogeneous_gamma():
    sol = pkcurv.homogeneous(dict(SPHERE, b=-2.0), res=16)
    assert sol.converged
    assert sol.gamma == pytest.approx(12.0, rel=1e-4)
    assert sol.rho.min() == pytest.approx(1.0)


def test_bad_order_rejected():
    with pytest.raises(ValueError, match="0 <= l < k"):
        pkcurv.solve(dict(SPHERE, l=2), res=16)


def test_unknown_option_rejected():
    with pytest.raises(ValueError):
        pkcurv.solve(SPHERE, res=16, tolerance=1e-9)


def test_verify_is_reproducible():
    a = pkcurv.verify(trials=50, seed=3)
    b = pkcurv.verify(trials=50, seed=3)
    assert a == b
    assert all(r["pass"] for r in a)


def test_geometry_convergence():
    axis = np.array([1.0, 0.0, 0.0])
    e16 = pkcurv.ellipsoid_curvature_error(2, 16, axis)
    e32 = pkcurv.ellipsoid_curvature_error(2, 32, axis)
    assert math.log2(e16 / e32) > 1.9
