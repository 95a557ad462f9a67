import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reebflow.hamiltonian import (
    HamiltonianStack,
    check_H_conditions,
    default_weights,
    from_polar,
    to_polar,
    torus_distance,
    torus_points,
)
from reebflow.profiles import ProfileConstants, ProfileFamily

from conftest import K, S
from test_profiles import f_oracle


def test_H0_examples(stack):
    H0, du, dz = stack.eval_H0([1.0, 1.0], 0.0)
    assert H0 == pytest.approx(K, abs=1e-15)
    assert du == pytest.approx([0.5, 0.5 * S], abs=1e-15)
    H0, _, _ = stack.eval_H0([1.0, 1.0], 5.0)
    assert H0 == pytest.approx(K, abs=1e-15)
    H0, _, _ = stack.eval_H0([1e4, 1.0], 0.0)
    assert H0 > S * 8.0 / 2.0
    assert H0 == pytest.approx(0.5 * math.exp(f_oracle(0.0, 1e4)) + 0.5 * S, rel=1e-12)


def test_H0_domain(stack):
    with pytest.raises(ValueError):
        stack.eval_H0([-1.0, 1.0], 0.0)


def test_H_on_torus(stack):
    g = stack.eval_H(np.array([1.0, 0.0, 1.0, 0.0, 0.0]))
    assert g.H == pytest.approx(K, abs=1e-15)
    assert g.grad == pytest.approx([1.0, 0.0, S, 0.0, 0.0], abs=1e-14)


def test_H_far_above(stack):
    g = stack.eval_H(np.array([0.0, 0.0, 0.0, 0.0, 10.0]))
    assert g.H == 1.0
    assert np.all(g.grad == 0.0)


def test_H_rotated_torus_point(stack):
    p = np.array([1 / math.sqrt(2), 1 / math.sqrt(2), 0.0, 1.0, 0.0])
    g = stack.eval_H(p)
    assert g.H == pytest.approx(K, abs=1e-15)
    assert g.grad == pytest.approx([p[0], p[1], 0.0, S, 0.0], abs=1e-14)
    assert np.linalg.norm(g.grad) == pytest.approx(np.linalg.norm(stack.gradient(np.array([1.0, 0, 1, 0, 0]))), abs=1e-14)


def test_radial_cartesian_consistency(stack, rng):
    p = rng.uniform(-4, 4, (2000, 5))
    g = stack.eval_H(p)
    assert np.allclose(g.dH_dx, 2 * p[:, 0::2][:, :2] * g.dH_du, atol=0, rtol=0)
    assert np.allclose(g.dH_dy, 2 * p[:, 1::2][:, :2] * g.dH_du, atol=0, rtol=0)


def test_positive_everywhere(stack, rng):
    p = rng.uniform(-20, 20, (10**6, 5))
    assert np.min(stack.value(p)) > 0.0


def test_rotation_symmetry(stack, rng):
    p = rng.uniform(-6, 6, (5000, 5))
    r, th, z = to_polar(p)
    q = from_polar(r, th + rng.uniform(0, 2 * np.pi, th.shape), z)
    assert np.max(np.abs(stack.value(p) - stack.value(q))) < 1e-12


def test_scalar_path_matches(stack, rng):
    u = rng.uniform(0, 80, (300, 2))
    u[::3] = rng.uniform(0, 2, (100, 2))
    z = rng.uniform(-3, 3, 300)
    rg = stack.radial(u, z)
    for k in range(300):
        H, Hu, Hz = stack.radial_one(u[k].tolist(), float(z[k]))
        assert H == pytest.approx(rg.H[k], abs=1e-14)
        assert Hu == pytest.approx(rg.dH_du[k].tolist(), abs=1e-13)
        assert Hz == pytest.approx(rg.dH_dz[k], abs=1e-13)


def test_support_box_exactness(stack, rng):
    p = rng.uniform(-20, 20, (200000, 5))
    out = stack.outside_support(p)
    g = stack.eval_H(p[out])
    assert out.sum() > 10000
    assert np.max(np.abs(g.H - 1.0)) < 1e-12
    assert np.max(np.abs(g.grad)) < 1e-12


def test_dz_margin_examples(stack, rng):
    assert np.max(np.abs(stack.dz_margin(torus_points(2, 500, rng)))) <= 1e-10
    origin = np.zeros(5)
    assert stack.dz_margin(origin) == pytest.approx(stack.value(origin), abs=0)
    assert stack.value(origin) > 0.0


def test_torus_distance_metric():
    p = from_polar(np.array([[1.2, 0.9]]), np.zeros((1, 2)), np.array([0.05]))
    assert torus_distance(p)[0] == pytest.approx(0.2)


def test_check_H_conditions_default():
    rep = check_H_conditions(samples=100_000, seed=0)
    assert rep.passed, rep.to_dict()
    assert rep["H-i"].value <= 1e-9
    assert rep["H-ii"].value <= 1e-10
    assert rep["H-iii"].value <= 1e-12
    minima = rep["H-iv"].detail["tube_minima"]
    assert all(v > 0 for v in minima.values())
    # sampling can only overestimate the optimized minimum (see test_verify)
    assert minima[0.1] >= 0.0039949707 - 1e-9
    assert rep.to_dict()["support_box"] == {"r_max": 8.0, "z_max": 2.0}


def test_check_H_conditions_reports_failure():
    # a stack whose torus level disagrees with its g window breaks (H-i)
    class Shifted(HamiltonianStack):
        def radial(self, u, z):
            rg = super().radial(u, z)
            rg.H = rg.H + 1e-6 * np.exp(-np.sum((np.asarray(u) - 1.0) ** 2, axis=-1))
            return rg

    rep = check_H_conditions(Shifted(), samples=2000)
    assert not rep["H-i"].passed
    assert not rep.passed


def test_default_weights():
    assert default_weights(2, S).tolist() == [1.0, S]
    for n in (3, 4, 6):
        w = default_weights(n, S)
        assert w[0] == 1.0 and w[1] == S
        assert np.all((w[1:] > 0) & (w[1:] < 1))
        assert w.sum() / 2 < 1.0
        assert len(set(w.tolist())) == n


def test_n3_conditions():
    st3 = HamiltonianStack(n=3)
    assert st3.dim == 7
    rep = check_H_conditions(st3, samples=20_000)
    assert rep.passed, rep.to_dict()
    g = st3.eval_H(np.array([1.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0]))
    w = st3.weights
    assert g.grad == pytest.approx([w[0], 0, 0, w[1], -w[2], 0, 0], abs=1e-13)


def test_weights_validation():
    with pytest.raises(ValueError):
        HamiltonianStack(n=2, weights=[0.5, 0.5])
    with pytest.raises(ValueError):
        HamiltonianStack(n=3, weights=[1.0, 0.5])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-9, 9), min_size=5, max_size=5))
def test_gradient_fd_property(p):
    stack = HamiltonianStack()
    p = np.array(p)
    g = stack.gradient(p)
    e = np.eye(5) * 1e-5
    fd = (stack.value(p + e) - stack.value(p - e)) / 2e-5
    assert np.max(np.abs(g - fd)) <= 1e-6 * max(np.max(np.abs(g)), 1e-3)


def test_other_constants_support():
    k = ProfileConstants(s=math.sqrt(2) - 1, c=10.0)
    stk = HamiltonianStack(ProfileFamily(k))
    assert stk.r_star == pytest.approx(10.0)
    p = from_polar(np.array([[stk.r_star + 1e-9, 0.5]]), np.zeros((1, 2)), np.array([0.0]))
    assert abs(stk.value(p)[0] - 1.0) < 1e-12
