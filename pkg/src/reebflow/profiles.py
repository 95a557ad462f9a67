"""Scalar profile families used to build the Hamiltonian.

Three profiles are defined here:

* ``f(z, t)`` -- a family of functions of the squared radius ``t`` that agree
  with ``log`` at ``t = 1`` and grow no faster than ``log`` elsewhere,
* ``g(t)`` -- equals ``log t`` near the torus level and is cut off to ``0``
  before ``s*c/2``,
* ``h(z)`` -- a smooth switch from ``0`` on ``[-z_flat, z_flat]`` to ``1`` for
  ``|z| >= z_full``.

All evaluators accept scalars or numpy arrays and broadcast.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from functools import cached_property
from typing import Any

import numpy as np
from scipy.optimize import brentq

GOLDEN_CONJUGATE = (math.sqrt(5.0) - 1.0) / 2.0

# The step tau used inside f switches on over [TAU_LO, TAU_HI].
TAU_LO = 0.25
TAU_HI = 0.75

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(40)
_GL_PAIRS = tuple(zip((0.5 * (_GL_NODES + 1.0)).tolist(), (0.5 * _GL_WEIGHTS).tolist()))


class DomainError(ValueError):
    """Raised when a profile is evaluated outside its domain."""


# Steps are C^SMOOTH_ORDER. Eighth-order integrators misjudge their local
# error across kinks of lower-order derivatives, so keep this >= 9.
SMOOTH_ORDER = 9
_DEG = 2 * SMOOTH_ORDER + 1
_BERN = [(j, float(math.comb(_DEG, j))) for j in range(SMOOTH_ORDER + 1, _DEG + 1)]
_DSCALE = _DEG * math.comb(_DEG - 1, SMOOTH_ORDER)


def smoothstep(x):
    """C^9 step: 0 for x <= 0, 1 for x >= 1 (upper half of a Bernstein basis)."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    y = 1.0 - x
    return sum(c * x**j * y ** (_DEG - j) for j, c in _BERN)


def _step1(x):
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    y = 1.0 - x
    return sum(c * x**j * y ** (_DEG - j) for j, c in _BERN)


def _step1_prime(x):
    if x <= 0.0 or x >= 1.0:
        return 0.0
    return _DSCALE * (x * (1.0 - x)) ** SMOOTH_ORDER


def smoothstep_prime(x):
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    return _DSCALE * (x * (1.0 - x)) ** SMOOTH_ORDER


def _gauss_legendre(func, a, b):
    """Integrate ``func`` over ``[a, b]`` elementwise (a, b broadcastable arrays)."""
    a = np.asarray(a, dtype=float)[..., None]
    b = np.asarray(b, dtype=float)[..., None]
    half = 0.5 * (b - a)
    u = a + half * (_GL_NODES + 1.0)
    return np.sum(_GL_WEIGHTS * func(u), axis=-1) * half[..., 0]


@dataclass(frozen=True)
class ProfileConstants:
    """Constants shared by the profile families.

    ``s`` is the irrational rotation weight, ``c`` the growth constant
    (``c > 2/s``), ``delta_g`` the half-width of the window where ``g = log``,
    and ``z_flat < z_full`` the breakpoints of ``h``.
    """

    s: float = GOLDEN_CONJUGATE
    c: float = 8.0
    delta_g: float = 0.05
    z_flat: float = 1.0
    z_full: float = 2.0

    def __post_init__(self):
        s, c = self.s, self.c
        if not 0.0 < s < 1.0:
            raise ValueError(f"s must lie in (0, 1), got {s}")
        if not c > 2.0 / s:
            raise ValueError(f"c must exceed 2/s = {2.0 / s:.6g}, got {c}")
        if not self.delta_g > 0.0:
            raise ValueError("delta_g must be positive")
        if not (1.0 + s) / 2.0 + self.delta_g < s * c / 2.0:
            raise ValueError("(1+s)/2 + delta_g must stay below s*c/2")
        if not 1.0 <= self.z_flat < self.z_full:
            raise ValueError("need 1 <= z_flat < z_full")

    @property
    def torus_level(self) -> float:
        return (1.0 + self.s) / 2.0

    @property
    def t_star(self) -> float:
        """Squared radius beyond which ``f(z, t) > log c`` for every ``z``.

        The reference ``f`` satisfies ``f(z, t) >= log(t)/2`` for ``t >= 1``
        with the bound approached as ``|z| -> inf``, so ``c**2`` is sharp.
        """
        return self.c**2

    @property
    def r_star(self) -> float:
        return math.sqrt(self.t_star)

    def to_dict(self) -> dict[str, float]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ProfileConstants":
        known = {k: float(v) for k, v in data.items() if k in cls.__dataclass_fields__}
        unknown = set(data) - set(known)
        if unknown:
            raise ValueError(f"unknown profile keys: {sorted(unknown)}")
        return cls(**known)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ProfileConstants":
        return cls.from_dict(json.loads(text))


def _tau(u):
    return smoothstep((u - TAU_LO) / (TAU_HI - TAU_LO))


class FProfile:
    """Reference family ``f(z, t) = int_1^t tau(u) (1 - d(z, u)) / u du``.

    Here ``d(z, u) = q / (2 (1 + q))`` with ``q = (u - 1)^2 + z^2`` and
    ``tau`` is a C^9 step from 0 on ``[0, 1/4]`` to 1 on ``[3/4, inf)``.
    Hence ``t df/dt = tau(t) (1 - d) <= 1`` with equality only at
    ``(z, t) = (0, 1)``, and ``f`` is constant on ``[0, 1/4]``.

    On ``t >= 3/4`` the integrand is rational and ``f`` has a closed form;
    the piece over ``[1/4, 3/4]`` is done by 40-point Gauss-Legendre, which
    is exact to rounding because the integrand is analytic on a neighbourhood
    of that interval.
    """

    @staticmethod
    def _tail(z, t):
        # closed form of the tau == 1 part, valid for t > 0
        a = 1.0 + z * z
        A = 1.0 / (1.0 + a)
        w = t - 1.0
        sa = np.sqrt(a)
        at = np.arctan(w / sa)
        logt = np.log(t)
        L = logt - 0.5 * np.log1p(w * w / a) + at / sa
        value = 0.5 * logt + 0.5 * A * L
        dL_da = (
            -0.5 / (w * w + a)
            + 0.5 / a
            - 0.5 * at / (a * sa)
            - 0.5 * w / (a * (a + w * w))
        )
        dB_da = -A * A * L + A * dL_da
        df_dz = z * dB_da
        return value, df_dz

    @staticmethod
    def _integrand(z):
        def func(u):
            q = (u - 1.0) ** 2 + z[..., None] ** 2
            return _tau(u) * (0.5 + 0.5 / (1.0 + q)) / u

        return func

    @staticmethod
    def _z_integrand(z):
        # tau(u) * d_z d(z, u) / u
        def func(u):
            zz = z[..., None]
            q = (u - 1.0) ** 2 + zz**2
            return _tau(u) * zz / (1.0 + q) ** 2 / u

        return func

    @staticmethod
    def _tail1(z, t):
        a = 1.0 + z * z
        A = 1.0 / (1.0 + a)
        w = t - 1.0
        sa = math.sqrt(a)
        at = math.atan(w / sa)
        logt = math.log(t)
        L = logt - 0.5 * math.log1p(w * w / a) + at / sa
        dL_da = -0.5 / (w * w + a) + 0.5 / a - 0.5 * at / (a * sa) - 0.5 * w / (a * (a + w * w))
        return 0.5 * logt + 0.5 * A * L, z * (-A * A * L + A * dL_da)

    def scalar(self, z: float, t: float) -> tuple[float, float, float]:
        """Float-only twin of ``__call__`` for single-point hot loops."""
        if t < 0.0:
            raise DomainError("f is defined for t >= 0 only")
        q = (t - 1.0) ** 2 + z * z
        df_dt = _step1((t - TAU_LO) / (TAU_HI - TAU_LO)) * (0.5 + 0.5 / (1.0 + q)) / t if t > TAU_LO else 0.0
        if t >= TAU_HI:
            value, df_dz = self._tail1(z, t)
            return value, df_dt, df_dz
        value, df_dz = self._tail1(z, TAU_HI)
        a = max(t, TAU_LO)
        span = TAU_HI - a
        zz = z * z
        acc_v = acc_z = 0.0
        for node, weight in _GL_PAIRS:
            u = a + span * node
            tw = _step1((u - TAU_LO) / (TAU_HI - TAU_LO)) * weight / u
            inv = 1.0 / (1.0 + (u - 1.0) ** 2 + zz)
            acc_v += tw * (0.5 + 0.5 * inv)
            acc_z += tw * inv * inv
        return value - span * acc_v, df_dt, df_dz + span * z * acc_z

    def __call__(self, z, t):
        """Return ``(f, df/dt, df/dz)`` at ``(z, t)``."""
        z, t = np.broadcast_arrays(np.asarray(z, dtype=float), np.asarray(t, dtype=float))
        if np.any(t < 0.0):
            raise DomainError("f is defined for t >= 0 only")
        scalar = z.ndim == 0
        z = np.atleast_1d(z)
        t = np.atleast_1d(t)

        q = (t - 1.0) ** 2 + z * z
        with np.errstate(divide="ignore", invalid="ignore"):
            df_dt = np.where(t > 0.0, _tau(t) * (0.5 + 0.5 / (1.0 + q)) / np.where(t > 0, t, 1.0), 0.0)

        hi = t >= TAU_HI
        value = np.empty_like(t)
        df_dz = np.empty_like(t)
        if np.any(hi):
            value[hi], df_dz[hi] = self._tail(z[hi], t[hi])
        lo = ~hi
        if np.any(lo):
            zl = z[lo]
            v0, dz0 = self._tail(zl, np.full_like(zl, TAU_HI))
            a = np.maximum(t[lo], TAU_LO)
            value[lo] = v0 - _gauss_legendre(self._integrand(zl), a, TAU_HI)
            df_dz[lo] = dz0 + _gauss_legendre(self._z_integrand(zl), a, TAU_HI)
        if scalar:
            return float(value[0]), float(df_dt[0]), float(df_dz[0])
        return value, df_dt, df_dz


class GProfile:
    """Monotone cutoff ``g``: ``log t`` up to ``center + delta_g``, then
    ``g' = kappa(t)/t`` with ``kappa`` a decreasing C^9 step from 1 to 0 on
    ``[t_a, t_k]``; the knot ``t_k`` is shot so that ``g(t_k) = 0``.
    """

    def __init__(self, constants: ProfileConstants, center: float | None = None):
        self.constants = constants
        self.center = constants.torus_level if center is None else float(center)
        self.t_a = self.center + constants.delta_g
        self.cutoff = constants.s * constants.c / 2.0
        if not self.t_a < self.cutoff:
            raise ValueError("log window of g reaches s*c/2")
        if self.t_a >= 1.0:
            raise ValueError("g needs center + delta_g < 1 to climb to 0")
        target = -math.log(self.t_a)

        def mismatch(t_k):
            return self._climb(t_k, t_k) - target

        if mismatch(self.cutoff) < 0.0:
            raise ValueError("g cannot reach 0 before s*c/2 under g' <= 1/t")
        self.t_k = brentq(mismatch, self.t_a + 1e-12, self.cutoff, xtol=1e-15, rtol=1e-15)

    def _kappa(self, t, t_k):
        # the step is symmetric; this form avoids cancellation near t_k
        return smoothstep((t_k - t) / (t_k - self.t_a))

    def _climb(self, t, t_k):
        # int_{t_a}^{t} kappa(u)/u du
        return _gauss_legendre(lambda u: self._kappa(u, t_k) / u, self.t_a, t)

    def scalar(self, t: float) -> tuple[float, float]:
        if t <= 0.0:
            raise DomainError("g is defined for t > 0 only")
        if t <= self.t_a:
            return math.log(t), 1.0 / t
        if t >= self.t_k:
            return 0.0, 0.0
        L = self.t_k - self.t_a
        span = t - self.t_a
        # integrate from the nearer end so the value is accurate near both ends
        lo, width = (self.t_a, span) if span <= 0.5 * L else (t, self.t_k - t)
        acc = 0.0
        for node, weight in _GL_PAIRS:
            u = lo + width * node
            acc += weight * _step1((self.t_k - u) / L) / u
        value = math.log(self.t_a) + width * acc if lo == self.t_a else -width * acc
        return value, _step1((self.t_k - t) / L) / t

    def __call__(self, t):
        """Return ``(g, dg/dt)``."""
        t = np.asarray(t, dtype=float)
        if np.any(t <= 0.0):
            raise DomainError("g is defined for t > 0 only")
        scalar = t.ndim == 0
        t = np.atleast_1d(t)
        value = np.zeros_like(t)
        deriv = np.zeros_like(t)

        low = t <= self.t_a
        value[low] = np.log(t[low])
        deriv[low] = 1.0 / t[low]

        mid = (t > self.t_a) & (t < self.t_k)
        if np.any(mid):
            tm = t[mid]
            near_a = tm - self.t_a <= 0.5 * (self.t_k - self.t_a)
            value[mid] = np.where(
                near_a,
                math.log(self.t_a) + self._climb(tm, self.t_k),
                -_gauss_legendre(lambda u: self._kappa(u, self.t_k) / u, tm, self.t_k),
            )
            deriv[mid] = self._kappa(tm, self.t_k) / tm
        if scalar:
            return float(value[0]), float(deriv[0])
        return value, deriv


class HProfile:
    """Even switch ``h(z)``: 0 on ``[-z_flat, z_flat]``, 1 for ``|z| >= z_full``."""

    def __init__(self, constants: ProfileConstants):
        self.z_flat = constants.z_flat
        self.z_full = constants.z_full

    def scalar(self, z: float) -> tuple[float, float]:
        width = self.z_full - self.z_flat
        x = (abs(z) - self.z_flat) / width
        return _step1(x), math.copysign(_step1_prime(x) / width, z)

    def __call__(self, z):
        """Return ``(h, dh/dz)``."""
        z = np.asarray(z, dtype=float)
        width = self.z_full - self.z_flat
        x = (np.abs(z) - self.z_flat) / width
        value = smoothstep(x)
        deriv = np.sign(z) * smoothstep_prime(x) / width
        if z.ndim == 0:
            return float(value), float(deriv)
        return value, deriv


@dataclass
class ProfileFamily:
    """The triple ``(f, g, h)`` built from one set of constants."""

    constants: ProfileConstants = field(default_factory=ProfileConstants)

    @cached_property
    def f(self) -> FProfile:
        return FProfile()

    @cached_property
    def g(self) -> GProfile:
        return GProfile(self.constants)

    @cached_property
    def h(self) -> HProfile:
        return HProfile(self.constants)

    def eval_f(self, z, t):
        return self.f(z, t)

    def eval_g(self, t):
        return self.g(t)

    def eval_h(self, z):
        return self.h(z)


@dataclass
class ConditionResult:
    name: str
    passed: bool
    worst: float
    at: tuple[float, ...]
    detail: str = ""


@dataclass
class ConstraintReport:
    constants: dict[str, float]
    grid: dict[str, int]
    conditions: list[ConditionResult]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions)

    def __getitem__(self, name: str) -> ConditionResult:
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)

    def failures(self) -> list[ConditionResult]:
        return [c for c in self.conditions if not c.passed]

    def to_dict(self) -> dict[str, Any]:
        return {
            "passed": self.passed,
            "constants": self.constants,
            "grid": self.grid,
            "conditions": [asdict(c) for c in self.conditions],
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def verify_profiles(
    family: ProfileFamily | None = None,
    n_z: int = 200,
    n_t: int = 200,
    exclusion: float = 1e-3,
    atol: float = 1e-12,
) -> ConstraintReport:
    """Audit the profile conditions on a ``n_z x n_t`` grid.

    The grid spans ``z in [-z_full-2, z_full+2]`` and ``t in [0, 4 T*]`` and
    always contains ``z = 0`` and ``t = 1`` as nodes. Violations are recorded
    in the report; nothing is raised.
    """
    family = ProfileFamily() if family is None else family
    k = family.constants
    t_star = k.t_star

    zs = np.union1d(np.linspace(-k.z_full - 2.0, k.z_full + 2.0, n_z), [0.0])
    ts = np.union1d(np.linspace(0.0, 4.0 * t_star, n_t), [1.0])
    Z, T = np.meshgrid(zs, ts, indexing="ij")
    fv, ft, _ = family.eval_f(Z, T)
    conds: list[ConditionResult] = []

    # f(z, 1) = 0
    i1 = int(np.searchsorted(ts, 1.0))
    col = np.abs(fv[:, i1])
    j = int(np.argmax(col))
    conds.append(ConditionResult("f(i) f(z,1)=0", bool(col[j] <= atol), float(col[j]), (zs[j], 1.0)))

    # t f_t <= 1, strict away from (0, 1)
    tft = T * ft
    idx = np.unravel_index(int(np.argmax(tft)), tft.shape)
    top = float(tft[idx])
    cz, ct = float(Z[idx]), float(T[idx])
    dz_cell = zs[1] - zs[0] if zs.size > 1 else 0.0
    dt_cell = ts[1] - ts[0] if ts.size > 1 else 0.0
    near = abs(cz) <= dz_cell and abs(ct - 1.0) <= dt_cell
    conds.append(
        ConditionResult(
            "f(ii) t*f_t<=1",
            bool(top <= 1.0 + atol and near),
            top,
            (cz, ct),
            "" if near else "maximum not attained next to (0, 1)",
        )
    )
    outside = np.hypot(Z, T - 1.0) > exclusion
    gap = np.where(outside, 1.0 - tft, np.inf)
    idx = np.unravel_index(int(np.argmin(gap)), gap.shape)
    conds.append(
        ConditionResult(
            "f(ii) strict off (0,1)",
            bool(gap[idx] > 0.0),
            float(gap[idx]),
            (float(Z[idx]), float(T[idx])),
        )
    )

    # f > log c for t >= T*, uniformly in z
    big = T >= t_star
    margin = np.where(big, fv - math.log(k.c), np.inf)
    idx = np.unravel_index(int(np.argmin(margin)), margin.shape)
    conds.append(
        ConditionResult(
            "f(iii) f>log c for t>=T*",
            bool(margin[idx] > 0.0),
            float(margin[idx]),
            (float(Z[idx]), float(T[idx])),
        )
    )
    f0 = fv[:, 0]
    conds.append(
        ConditionResult("f finite at t=0", bool(np.all(np.isfinite(f0))), float(np.max(np.abs(f0))), (0.0, 0.0))
    )

    # g on (0, 2 s c]
    g = family.g
    tg = np.union1d(np.geomspace(1e-3, 2.0 * k.s * k.c, n_t * 4), [k.torus_level, g.cutoff])
    gv, gd = family.eval_g(tg)
    win = np.abs(tg - g.center) <= k.delta_g
    dev = np.where(win, np.abs(gv - np.log(tg)), 0.0)
    j = int(np.argmax(dev))
    conds.append(ConditionResult("g(i) g=log near center", bool(dev[j] <= atol), float(dev[j]), (float(tg[j]),)))
    tail = tg >= g.cutoff
    dev = np.where(tail, np.maximum(np.abs(gv), np.abs(gd)), 0.0)
    j = int(np.argmax(dev))
    conds.append(ConditionResult("g(ii) g=0 for t>=sc/2", bool(dev[j] <= atol), float(dev[j]), (float(tg[j]),)))
    slack = 1.0 / tg - gd
    j = int(np.argmin(slack))
    conds.append(ConditionResult("g(iii) g'<=1/t", bool(slack[j] >= -atol), float(slack[j]), (float(tg[j]),)))
    steps = np.diff(gv)
    j = int(np.argmin(steps))
    conds.append(ConditionResult("g monotone", bool(steps[j] >= -atol), float(steps[j]), (float(tg[j]),)))

    # h
    zh = np.union1d(np.linspace(-k.z_full - 2.0, k.z_full + 2.0, n_z * 4), [-k.z_flat, k.z_flat])
    hv, _ = family.eval_h(zh)
    flat = np.abs(zh) <= k.z_flat
    dev = np.where(flat, np.abs(hv), 0.0)
    j = int(np.argmax(dev))
    conds.append(ConditionResult("h(i) h=0 on flat window", bool(dev[j] <= atol), float(dev[j]), (float(zh[j]),)))
    full = np.abs(zh) >= k.z_full
    dev = np.where(full, np.abs(hv - 1.0), 0.0)
    j = int(np.argmax(dev))
    conds.append(ConditionResult("h(ii) h=1 for |z|>=z_full", bool(dev[j] <= atol), float(dev[j]), (float(zh[j]),)))
    out = np.maximum(-hv, hv - 1.0)
    j = int(np.argmax(out))
    conds.append(ConditionResult("h range [0,1]", bool(out[j] <= 0.0), float(out[j]), (float(zh[j]),)))

    return ConstraintReport(
        constants=k.to_dict(),
        grid={"n_z": int(zs.size), "n_t": int(ts.size)},
        conditions=conds,
    )
