"""The Hamiltonian ``H = (1 - h(z)) exp(g(H0)) + h(z)`` and its audits.

Points of R^(2n+1) are arrays whose last axis is ordered
``(x1, y1, x2, y2, ..., xn, yn, z)``. ``H`` depends on the planar
coordinates only through the squared radii ``u_j = x_j^2 + y_j^2``.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from .profiles import GProfile, ProfileFamily

# square roots of primes other than 5 (the default s already involves sqrt 5)
_EXTRA_ROOTS = (2, 3, 7, 11, 13, 17, 19, 23)


def default_weights(n: int, s: float) -> np.ndarray:
    """Weights ``(1, s, w_3, ...)`` for the planar summands of ``H0``.

    For ``n > 2`` the extra weights are fractional parts of square roots of
    primes, scaled so that the total stays below 2 (the torus level
    ``sum(w)/2`` has to be below 1 for ``g`` to exist).
    """
    if n < 2:
        raise ValueError("need n >= 2")
    if n - 2 > len(_EXTRA_ROOTS):
        raise ValueError(f"default weights only up to n = {len(_EXTRA_ROOTS) + 2}")
    w = [1.0, s]
    for k, p in enumerate(_EXTRA_ROOTS[: n - 2]):
        frac = math.sqrt(p) - math.floor(math.sqrt(p))
        w.append(frac * (1.0 - s) / 2.0 ** (k + 1))
    return np.array(w)


def split(points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(x, y, z)`` with ``x, y`` of shape ``(..., n)``."""
    points = np.asarray(points, dtype=float)
    return points[..., 0:-1:2], points[..., 1:-1:2], points[..., -1]


def join(x: np.ndarray, y: np.ndarray, z: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape[:-1] + (2 * x.shape[-1] + 1,))
    out[..., 0:-1:2] = x
    out[..., 1:-1:2] = y
    out[..., -1] = z
    return out


def from_polar(r, theta, z) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    theta = np.asarray(theta, dtype=float)
    return join(r * np.cos(theta), r * np.sin(theta), z)


def to_polar(points) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    x, y, z = split(points)
    return np.hypot(x, y), np.arctan2(y, x), z


def torus_distance(points) -> np.ndarray:
    """Max-metric distance ``max(|r_j - 1|, |z|)`` to the torus."""
    r, _, z = to_polar(points)
    return np.maximum(np.max(np.abs(r - 1.0), axis=-1), np.abs(z))


@dataclass
class RadialGradient:
    H: np.ndarray
    dH_du: np.ndarray
    dH_dz: np.ndarray


@dataclass
class HGradient:
    """Value and gradient of ``H``; ``grad`` is Cartesian, same layout as points."""

    H: np.ndarray
    grad: np.ndarray
    dH_du: np.ndarray

    @property
    def dH_dz(self) -> np.ndarray:
        return self.grad[..., -1]

    @property
    def dH_dx(self) -> np.ndarray:
        return self.grad[..., 0:-1:2]

    @property
    def dH_dy(self) -> np.ndarray:
        return self.grad[..., 1:-1:2]


class HamiltonianStack:
    """Assembles ``H0 -> H1 -> H`` from a profile family.

    ``H0 = sum_j (w_j / 2) exp(f(z, u_j))``, ``H1 = exp(g(H0))`` and
    ``H = (1 - h(z)) H1 + h(z)``. With ``n = 2`` the weights are ``(1, s)``
    and the torus level is ``(1 + s)/2``.
    """

    def __init__(self, family: ProfileFamily | None = None, n: int = 2, weights=None):
        self.family = ProfileFamily() if family is None else family
        self.constants = self.family.constants
        self.n = int(n)
        self.weights = default_weights(self.n, self.constants.s) if weights is None else np.asarray(weights, float)
        if self.weights.shape != (self.n,):
            raise ValueError("weights must have length n")
        if self.weights[0] != 1.0 or np.any(self.weights <= 0.0) or np.any(self.weights > 1.0):
            raise ValueError("weights need w_1 = 1 and 0 < w_j <= 1")
        self.level = float(np.sum(self.weights) / 2.0)
        if self.n == 2 and self.level == self.constants.torus_level:
            self.g = self.family.g
        else:
            self.g = GProfile(self.constants, center=self.level)
        self.f = self.family.f
        self.h = self.family.h

    @property
    def dim(self) -> int:
        return 2 * self.n + 1

    @property
    def t_star(self) -> float:
        """Squared radius beyond which every summand of ``H0`` exceeds ``s*c/2``."""
        k = self.constants
        return (k.c * k.s / float(np.min(self.weights))) ** 2

    @property
    def r_star(self) -> float:
        return math.sqrt(self.t_star)

    @property
    def z_full(self) -> float:
        return self.constants.z_full

    def support_box(self) -> dict[str, float]:
        return {"r_max": self.r_star, "z_max": self.z_full}

    def outside_support(self, points) -> np.ndarray:
        r, _, z = to_polar(points)
        return (np.max(r, axis=-1) >= self.r_star) | (np.abs(z) >= self.z_full)

    def eval_H0(self, u, z):
        """``(H0, dH0/du_j, dH0/dz)`` at squared radii ``u`` (shape ``(..., n)``)."""
        u = np.asarray(u, dtype=float)
        z = np.asarray(z, dtype=float)
        if np.any(u < 0.0):
            raise ValueError("squared radii must be nonnegative")
        fv, ft, fz = self.f(np.broadcast_to(z[..., None], u.shape), u)
        terms = 0.5 * self.weights * np.exp(fv)
        return terms.sum(axis=-1), terms * ft, (terms * fz).sum(axis=-1)

    def radial(self, u, z) -> RadialGradient:
        """``H`` and its partials in the variables ``(u_1, ..., u_n, z)``."""
        z = np.asarray(z, dtype=float)
        H0, H0_u, H0_z = self.eval_H0(u, z)
        gv, gd = self.g(H0)
        H1 = np.exp(gv)
        k1 = H1 * gd
        hv, hd = self.h(z)
        one_minus = 1.0 - hv
        H = one_minus * H1 + hv
        dH_du = (one_minus * k1)[..., None] * H0_u
        dH_dz = one_minus * k1 * H0_z + hd * (1.0 - H1)
        return RadialGradient(H=H, dH_du=dH_du, dH_dz=dH_dz)

    def radial_one(self, u, z: float) -> tuple[float, list[float], float]:
        """Single-point ``(H, [dH/du_j], dH/dz)`` using plain floats."""
        f1, g1, h1 = self.f.scalar, self.g.scalar, self.h.scalar
        H0 = H0_z = 0.0
        H0_u = []
        for wj, uj in zip(self.weights.tolist(), u):
            fv, ft, fz = f1(z, uj)
            term = 0.5 * wj * math.exp(fv)
            H0 += term
            H0_z += term * fz
            H0_u.append(term * ft)
        gv, gd = g1(H0)
        H1 = math.exp(gv)
        k1 = H1 * gd
        hv, hd = h1(z)
        one_minus = 1.0 - hv
        scale = one_minus * k1
        return one_minus * H1 + hv, [scale * d for d in H0_u], scale * H0_z + hd * (1.0 - H1)

    def eval_H(self, points) -> HGradient:
        x, y, z = split(points)
        rg = self.radial(x * x + y * y, z)
        grad = join(2.0 * x * rg.dH_du, 2.0 * y * rg.dH_du, rg.dH_dz)
        return HGradient(H=rg.H, grad=grad, dH_du=rg.dH_du)

    def value(self, points):
        return self.eval_H(points).H

    def gradient(self, points):
        return self.eval_H(points).grad

    def dz_margin(self, points):
        """``H - (1/2) sum_j (x_j H_xj + y_j H_yj)``, which equals ``dz(X)``."""
        x, y, z = split(points)
        u = x * x + y * y
        rg = self.radial(u, z)
        return rg.H - np.sum(u * rg.dH_du, axis=-1)


def torus_points(n: int, count: int, rng) -> np.ndarray:
    theta = rng.uniform(0.0, 2.0 * np.pi, size=(count, n))
    return from_polar(np.ones((count, n)), theta, np.zeros(count))


def near_torus_points(n: int, count: int, rng, spread: float) -> np.ndarray:
    theta = rng.uniform(0.0, 2.0 * np.pi, size=(count, n))
    r = 1.0 + rng.uniform(-spread, spread, size=(count, n))
    z = rng.uniform(-spread, spread, size=count)
    return from_polar(np.abs(r), theta, z)


@dataclass
class HCondition:
    name: str
    passed: bool
    value: float
    samples: int
    detail: dict[str, Any] = field(default_factory=dict)


@dataclass
class HReport:
    n: int
    constants: dict[str, float]
    support_box: dict[str, float]
    seed: int
    conditions: list[HCondition]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions)

    def __getitem__(self, name: str) -> HCondition:
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["passed"] = self.passed
        return d

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def check_H_conditions(
    stack: HamiltonianStack | None = None,
    samples: int = 10_000,
    seed: int = 0,
    tube_radii=(0.3, 0.1, 0.03, 0.01),
    tol_torus: float = 1e-9,
    tol_cylinder: float = 1e-10,
    tol_outside: float = 1e-12,
) -> HReport:
    """Sample the four conditions on ``H`` and collect margins in a report.

    The (H-iv) margin is reported separately for every tube radius; it passes
    when all minima are positive, shrink with the radius, and the margin on
    the torus itself vanishes.
    """
    stack = HamiltonianStack() if stack is None else stack
    rng = np.random.default_rng(seed)
    n, K = stack.n, stack.level
    conds = []

    # (H-i) on T
    p = torus_points(n, samples, rng)
    g = stack.eval_H(p)
    x, y, _ = split(p)
    devs = {
        "H": np.abs(g.H - K),
        "H_x": np.max(np.abs(g.dH_dx - stack.weights * x), axis=-1),
        "H_y": np.max(np.abs(g.dH_dy - stack.weights * y), axis=-1),
        "H_z": np.abs(g.dH_dz),
    }
    worst = max(float(v.max()) for v in devs.values())
    conds.append(
        HCondition("H-i", worst <= tol_torus, worst, samples, {k: float(v.max()) for k, v in devs.items()})
    )

    # (H-ii) on the cylinder over T, |z| <= z_flat
    zf = stack.constants.z_flat
    p = from_polar(np.ones((samples, n)), rng.uniform(0, 2 * np.pi, (samples, n)), rng.uniform(-zf, zf, samples))
    dev = float(np.max(np.abs(stack.value(p) - K)))
    conds.append(HCondition("H-ii", dev <= tol_cylinder, dev, samples, {"z_range": [-zf, zf]}))

    # (H-iii) outside the support box
    R, Z = stack.r_star, stack.z_full
    pts = []
    while sum(len(q) for q in pts) < samples:
        q = np.empty((samples, stack.dim))
        q[:, :-1] = rng.uniform(-2.0 * R, 2.0 * R, (samples, 2 * n))
        q[:, -1] = rng.uniform(-3.0 * Z, 3.0 * Z, samples)
        pts.append(q[stack.outside_support(q)])
    p = np.concatenate(pts)[:samples]
    dev = float(np.max(np.abs(stack.value(p) - 1.0)))
    conds.append(HCondition("H-iii", dev <= tol_outside, dev, samples, {"support_box": stack.support_box()}))

    # (H-iv) off tubes around T
    p = np.concatenate(
        [
            near_torus_points(n, samples, rng, 0.5),
            near_torus_points(n, samples, rng, 0.05),
            np.column_stack(
                [rng.uniform(-R - 1, R + 1, (samples, 2 * n)), rng.uniform(-Z - 1, Z + 1, samples)]
            ),
        ]
    )
    m = stack.dz_margin(p)
    dist = torus_distance(p)
    minima = {}
    for rad in tube_radii:
        mask = dist >= rad
        minima[float(rad)] = float(m[mask].min()) if mask.any() else math.inf
    on_T = float(np.max(np.abs(stack.dz_margin(torus_points(n, 100, rng)))))
    values = [minima[float(r)] for r in sorted(tube_radii, reverse=True)]
    decreasing = all(b < a for a, b in zip(values, values[1:]))
    ok = all(v > 0.0 for v in values) and decreasing and on_T <= 1e-10 and float(m.min()) > -1e-15
    conds.append(
        HCondition(
            "H-iv",
            ok,
            min(values),
            len(p),
            {"tube_minima": minima, "on_torus_max_abs": on_T, "overall_min": float(m.min())},
        )
    )
    return HReport(n=n, constants=stack.constants.to_dict(), support_box=stack.support_box(), seed=seed, conditions=conds)
