import numpy as np
import pytest

from reebflow.contact import ReebField, Y_field, alpha_st, alpha_value, dalpha_st, frame
from reebflow.hamiltonian import HGradient, from_polar, torus_points

from conftest import K, S

DZ = np.array([0.0, 0.0, 0.0, 0.0, 1.0])


def test_alpha_examples(rng):
    p = rng.uniform(-5, 5, 5)
    assert alpha_st(p, DZ) == 1.0
    assert alpha_st(np.array([1.0, 0, 1, 0, 0]), np.array([0, 1.0, 0, S, 0])) == pytest.approx(K, abs=1e-15)
    e1 = frame(np.array([2.0, 0, 0, 0, 0]))[0]
    assert alpha_st(np.array([2.0, 0, 0, 0, 0]), e1) == 0.0


def test_alpha_linear(rng):
    p = rng.uniform(-5, 5, (100, 5))
    v, w = rng.normal(size=(2, 100, 5))
    a = alpha_st(p, 2.0 * v - 3.0 * w)
    assert np.allclose(a, 2.0 * alpha_st(p, v) - 3.0 * alpha_st(p, w), atol=1e-12)


def test_frame_examples(rng):
    F = frame(np.zeros(5))
    assert np.array_equal(F, np.eye(5)[:4])
    F = frame(np.array([1.0, 0, 0, 0, 0]))
    assert F[1, -1] == -0.5
    p = rng.uniform(-5, 5, (1000, 5))
    F = frame(p)
    assert F.shape == (1000, 4, 5)
    assert np.max(np.abs(alpha_st(p[:, None, :], F))) < 1e-15


def test_dalpha_st_symplectic():
    e = np.eye(5)
    assert dalpha_st(e[0], e[1]) == 1.0 and dalpha_st(e[1], e[0]) == -1.0
    assert dalpha_st(e[2], e[3]) == 1.0 and dalpha_st(e[0], e[3]) == 0.0
    assert dalpha_st(e[4], e[0]) == 0.0


def test_Y_examples(stack):
    p = np.array([1.0, 0, 1, 0, 0])
    Y = Y_field(p, stack.eval_H(p))
    assert Y == pytest.approx([0, 1.0, 0, S, -K], abs=1e-14)
    zero = HGradient(H=np.array(1.0), grad=np.zeros(5), dH_du=np.zeros(2))
    assert np.all(Y_field(np.array([0.3, 2.0, -1, 0.4, 1.0]), zero) == 0.0)
    q = np.array([0.0, 0, 0, 0, 10.0])
    assert np.all(Y_field(q, stack.eval_H(q)) == 0.0)


def test_Y_in_contact_planes(stack, rng):
    p = rng.uniform(-10, 10, (20000, 5))
    Y = Y_field(p, stack.eval_H(p))
    assert np.max(np.abs(alpha_st(p, Y))) < 1e-12


def test_X_examples(field):
    s = field.sample(np.array([1.0, 0, 1, 0, 0]))
    assert s.X == pytest.approx([0, 1.0, 0, S, 0], abs=1e-14)
    s = field.sample(np.array([20.0, 3.0, -1.0, 0.0, 0.5]))
    assert np.array_equal(s.X, DZ)
    s = field.sample(np.array([1.0, 0, 1, 0, -0.5]))
    # with y_j = 0 the x_j components are the radial ones
    assert abs(s.X[0]) < 1e-12 and abs(s.X[2]) < 1e-12
    assert s.dzX > 0.0


def test_X_cylinder_fd(stack, field):
    # dr_j/dt = r_j H_z / 2 with H_z from finite differences of H
    p = np.array([1.0, 0, 1, 0, -0.5])
    e = DZ * 1e-5
    Hz = (stack.value(p + e) - stack.value(p - e)) / 2e-5
    assert abs(Hz) < 1e-10
    assert field.velocity(p)[0] == pytest.approx(0.5 * Hz, abs=1e-10)


def test_alpha_X_equals_H(stack, field, rng):
    p = rng.uniform(-10, 10, (100000, 5))
    X = field.velocity(p)
    assert np.max(np.abs(alpha_st(p, X) - stack.value(p))) < 1e-12
    assert np.max(np.abs(alpha_value(p, X, stack) - 1.0)) < 1e-12


def test_dzX_two_formulas(stack, field, rng):
    p = np.vstack([rng.uniform(-10, 10, (50000, 5)), torus_points(2, 1000, rng)])
    assert np.max(np.abs(field.velocity(p)[:, -1] - stack.dz_margin(p))) < 1e-12


def test_outside_support_is_dz(stack, field, rng):
    p = rng.uniform(-20, 20, (100000, 5))
    out = stack.outside_support(p)
    assert np.max(np.abs(field.velocity(p[out]) - DZ)) < 1e-12


def test_reeb_residuals(field, rng):
    p = rng.uniform(-10, 10, (100000, 5))
    ra, rd = field.reeb_residuals(p)
    assert ra.max() < 1e-9 and rd.max() < 1e-9
    ra, rd = field.reeb_residuals(torus_points(2, 1000, rng))
    assert ra.max() < 1e-10 and rd.max() < 1e-10


def test_residuals_detect_wrong_field(stack, rng):
    # the residual test must reject a field that is not the Reeb field
    p = rng.uniform(-2, 2, (100, 5))
    grad = stack.eval_H(p)
    from reebflow.contact import _residuals

    X = Y_field(p, grad)
    X[..., -1] += grad.H
    X_bad = X.copy()
    X_bad[:, 0] += 1e-3
    _, rd = _residuals(p, grad, X_bad)
    assert rd.max() > 1e-5


def test_velocity_one_matches(field, rng):
    p = np.vstack([rng.uniform(-4, 4, (200, 5)), from_polar(np.ones((20, 2)) * 0.999, rng.uniform(0, 6, (20, 2)), np.zeros(20))])
    V = field.velocity(p)
    for k in range(len(p)):
        assert field.velocity_one(p[k].tolist()) == pytest.approx(V[k].tolist(), abs=1e-13)


def test_field_sample_json(field):
    d = field.sample(np.array([1.0, 0, 1, 0, 0])).to_dict()
    assert set(d) == {"point", "H", "X", "dzX", "reeb_residuals"}
    assert d["H"] == pytest.approx(K)


def test_n3_reeb(rng):
    from reebflow.hamiltonian import HamiltonianStack

    f3 = ReebField(HamiltonianStack(n=3))
    p = rng.uniform(-6, 6, (20000, 7))
    ra, rd = f3.reeb_residuals(p)
    assert max(ra.max(), rd.max()) < 1e-9
    X = f3.velocity(np.array([1.0, 0, 1, 0, 1, 0, 0]))
    assert X == pytest.approx([0, 1, 0, f3.stack.weights[1], 0, f3.stack.weights[2], 0], abs=1e-13)
