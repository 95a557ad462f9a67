import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.special import betainc

from reebflow.profiles import (
    GOLDEN_CONJUGATE,
    DomainError,
    ProfileConstants,
    ProfileFamily,
    smoothstep,
    smoothstep_prime,
    verify_profiles,
)

from conftest import K, S


def f_oracle(z, t):
    """Direct quadrature of the defining integral of f."""

    def integrand(u):
        q = (u - 1.0) ** 2 + z * z
        d = 0.5 * q / (1.0 + q)
        return float(smoothstep((u - 0.25) / 0.5)) * (1.0 - d) / u

    pts = [p for p in (0.25, 0.75, 1.0) if min(1.0, t) < p < max(1.0, t)]
    val, _ = quad(integrand, 1.0, t, points=pts or None, epsabs=1e-14, epsrel=1e-13, limit=400)
    return val


# --- smoothstep ---------------------------------------------------------


def test_smoothstep_is_regularized_beta():
    x = np.linspace(-0.5, 1.5, 401)
    ref = betainc(10, 10, np.clip(x, 0.0, 1.0))
    assert np.max(np.abs(smoothstep(x) - ref)) < 1e-14


def test_smoothstep_prime_matches_fd():
    x = np.linspace(0.01, 0.99, 97)
    fd = (smoothstep(x + 1e-6) - smoothstep(x - 1e-6)) / 2e-6
    assert np.max(np.abs(smoothstep_prime(x) - fd)) < 1e-7


def test_smoothstep_flat_ends():
    assert smoothstep(0.0) == 0.0 and smoothstep(1.0) == 1.0
    assert smoothstep_prime(0.0) == 0.0 and smoothstep_prime(1.0) == 0.0


# --- constants ----------------------------------------------------------


def test_constants_defaults():
    k = ProfileConstants()
    assert k.s == GOLDEN_CONJUGATE
    assert k.c == 8.0
    assert k.torus_level == pytest.approx(K, abs=0)
    assert k.t_star == 64.0 and k.r_star == 8.0


@pytest.mark.parametrize(
    "kw",
    [
        {"s": 0.0},
        {"s": 1.0},
        {"c": 2.0},
        {"delta_g": 0.0},
        {"delta_g": 5.0},
        {"z_flat": 0.5},
        {"z_flat": 2.0, "z_full": 2.0},
    ],
)
def test_constants_reject_bad(kw):
    with pytest.raises(ValueError):
        ProfileConstants(**kw)


def test_constants_json_roundtrip():
    k = ProfileConstants(s=0.3819660112501051, c=12.0, delta_g=0.02, z_flat=1.5, z_full=3.0)
    assert ProfileConstants.from_json(k.to_json()) == k
    with pytest.raises(ValueError):
        ProfileConstants.from_dict({"s": 0.5, "bogus": 1})


# --- f ------------------------------------------------------------------


def test_f_examples(family):
    v, ft, fz = family.eval_f(0.0, 1.0)
    assert v == 0.0
    assert 1.0 * ft == pytest.approx(1.0, abs=1e-15)
    v, ft, _ = family.eval_f(0.7, 1.0)
    assert abs(v) <= 1e-15 and ft < 1.0
    v, _, _ = family.eval_f(0.0, 1e4)
    assert v > math.log(8.0)
    assert v == pytest.approx(f_oracle(0.0, 1e4), abs=1e-12)


@pytest.mark.parametrize("z", [0.0, 0.3, -1.7, 4.0])
@pytest.mark.parametrize("t", [0.0, 0.1, 0.3, 0.5, 0.74, 0.9, 1.0, 1.3, 7.5, 64.0, 1e3])
def test_f_matches_quadrature(family, z, t):
    v, _, _ = family.eval_f(z, t)
    assert v == pytest.approx(f_oracle(z, t), abs=1e-12)


def test_f_domain(family):
    with pytest.raises(DomainError):
        family.eval_f(0.0, -1e-3)


def test_f_vanishes_on_t1(family, rng):
    z = rng.uniform(-10, 10, 100)
    v, _, fz = family.eval_f(z, np.ones_like(z))
    assert np.max(np.abs(v)) <= 1e-12
    assert np.max(np.abs(fz)) <= 1e-8


def test_f_scalar_matches_vectorized(family, rng):
    z = rng.uniform(-5, 5, 300)
    t = np.concatenate([rng.uniform(0, 2, 150), rng.uniform(0, 200, 150)])
    vec = np.array(family.eval_f(z, t))
    sca = np.array([family.f.scalar(a, b) for a, b in zip(z, t)]).T
    assert np.max(np.abs(vec - sca)) < 1e-13


def test_f_tail_bound_half_log(family, rng):
    z = rng.uniform(-6, 6, 200)
    t = rng.uniform(1, 1e4, 200)
    v, _, _ = family.eval_f(z, t)
    assert np.all(v >= 0.5 * np.log(t) - 1e-14)


@settings(max_examples=200, deadline=None)
@given(st.floats(-20, 20), st.floats(0, 500))
def test_f_slope_bound(z, t):
    fam = ProfileFamily()
    _, ft, _ = fam.eval_f(z, t)
    assert t * ft <= 1.0 + 1e-12
    if math.hypot(z, t - 1.0) > 1e-3:
        assert t * ft < 1.0


@settings(max_examples=100, deadline=None)
@given(st.floats(-6, 6), st.floats(0.01, 100))
def test_f_partials_fd(z, t):
    f = ProfileFamily().f
    h = 1e-5
    _, ft, fz = f(z, t)
    fd_t = (f(z, t + h)[0] - f(z, t - h)[0]) / (2 * h)
    fd_z = (f(z + h, t)[0] - f(z - h, t)[0]) / (2 * h)
    assert abs(ft - fd_t) <= 1e-6 * max(abs(ft), 1e-3)
    assert abs(fz - fd_z) <= 1e-6 * max(abs(fz), 1e-3)


# --- g ------------------------------------------------------------------


def test_g_examples(family):
    k = family.constants
    v, d = family.eval_g(K)
    assert v == pytest.approx(math.log(K), abs=1e-15) and d == pytest.approx(1.0 / K, abs=1e-15)
    assert family.eval_g(k.s * k.c / 2.0) == (0.0, 0.0)
    assert family.eval_g(2.0 * k.s * k.c) == (0.0, 0.0)


def test_g_knot(family):
    g = family.g
    assert g.t_a < g.t_k < g.cutoff
    v, d = g(g.t_k * (1 - 1e-9))
    assert abs(v) < 1e-12 and abs(d) < 1e-12


def test_g_domain(family):
    with pytest.raises(DomainError):
        family.eval_g(0.0)
    with pytest.raises(DomainError):
        family.g.scalar(-1.0)


def test_g_shape(family):
    t = np.geomspace(1e-4, 10.0, 20001)
    v, d = family.eval_g(t)
    assert np.all(np.diff(v) >= 0.0)
    assert np.all(d <= 1.0 / t + 1e-15)
    ts = t[::50]
    h = 1e-6 * ts
    fd = (family.eval_g(ts + h)[0] - family.eval_g(ts - h)[0]) / (2 * h)
    assert np.max(np.abs(fd - d[::50]) / np.maximum(d[::50], 1e-3)) < 1e-6
    sca = np.array([family.g.scalar(x) for x in t[::37]]).T
    assert np.max(np.abs(sca - np.array([v[::37], d[::37]]))) < 1e-14


def test_g_impossible_budget():
    # with z_flat etc default, c just above 2/s leaves too little room for g
    with pytest.raises(ValueError):
        ProfileFamily(ProfileConstants(s=0.9, c=2.3, delta_g=0.01)).g


# --- h ------------------------------------------------------------------


def test_h_examples(family):
    assert family.eval_h(0.0) == (0.0, 0.0)
    assert family.eval_h(7.0) == (1.0, 0.0)
    assert family.eval_h(-7.0) == (1.0, 0.0)
    assert family.eval_h(-0.999) == (0.0, 0.0)


def test_h_even_and_bounded(family):
    w = np.linspace(0, 5, 501)
    z = np.concatenate([-w[::-1], w[1:]])
    v, d = family.eval_h(z)
    assert np.all((0.0 <= v) & (v <= 1.0))
    assert np.array_equal(v, v[::-1])
    assert np.allclose(d, -d[::-1], atol=0)
    sca = np.array([family.h.scalar(x) for x in z]).T
    assert np.max(np.abs(sca - np.array([v, d]))) < 1e-14


# --- report -------------------------------------------------------------


def test_verify_profiles_default():
    rep = verify_profiles(n_z=200, n_t=200)
    assert rep.passed, rep.failures()
    top = rep["f(ii) t*f_t<=1"]
    assert top.worst == pytest.approx(1.0, abs=1e-12)
    assert top.at == (0.0, 1.0)
    assert rep.to_dict()["grid"]


class _Corrupt(ProfileFamily):
    def eval_f(self, z, t):
        v, ft, fz = super().eval_f(z, t)
        bump = np.where((np.asarray(z) == 0.0) & (np.asarray(t) == 1.0), 0.1, 0.0)
        return v + bump, ft, fz


class _SteepG(ProfileFamily):
    def eval_g(self, t):
        v, d = super().eval_g(t)
        d = np.array(d, copy=True)
        j = int(np.argmin(np.abs(np.asarray(t) - 1.5)))
        d[j] = 2.0 / np.asarray(t)[j]
        return v, d


def test_verify_profiles_injected_f_fault():
    rep = verify_profiles(_Corrupt())
    fail = rep["f(i) f(z,1)=0"]
    assert not fail.passed
    assert fail.worst == pytest.approx(0.1)
    assert fail.at == (0.0, 1.0)
    assert not rep.passed


def test_verify_profiles_injected_g_fault():
    rep = verify_profiles(_SteepG())
    fail = rep["g(iii) g'<=1/t"]
    assert not fail.passed
    assert fail.at[0] == pytest.approx(1.5, abs=0.01)
    assert [c.name for c in rep.failures()] == ["g(iii) g'<=1/t"]


def test_verify_profiles_other_constants():
    fam = ProfileFamily(ProfileConstants(s=math.sqrt(2) - 1, c=10.0))
    assert verify_profiles(fam, n_z=80, n_t=80).passed
