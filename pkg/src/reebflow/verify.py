"""Optimization- and cross-check-based audits of the construction.

* :func:`minimize_dzX` -- multistart search for the smallest ``dz(X)`` off a
  tube around the torus,
* :func:`gradient_fd_audit` -- analytic gradient of ``H`` against central
  differences,
* :func:`reduction_audit` -- the reduced ``(r, z)`` flow against the full flow.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from .contact import ReebField
from .flow import integrate, integrate_reduced, to_reduced
from .hamiltonian import HamiltonianStack, from_polar, to_polar
from .profiles import verify_profiles


def project_off_tube(points, radius: float) -> np.ndarray:
    """Push points inside the max-metric tube of ``radius`` onto its boundary.

    The deviation ``(r_j - 1, z)`` is rescaled radially from the torus;
    angles are kept. Points already outside are returned unchanged.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    r, th, z = to_polar(points)
    dev = np.column_stack([r - 1.0, z])
    dist = np.max(np.abs(dev), axis=1)
    inside = dist < radius
    if not inside.any():
        return points
    d = dev[inside]
    di = dist[inside]
    on_T = di == 0.0
    d[on_T, -1] = radius
    scale = np.where(on_T, 1.0, radius / np.where(on_T, 1.0, di))
    d = d * scale[:, None]
    out = points.copy()
    out[inside] = from_polar(1.0 + d[:, :-1], th[inside], d[:, -1])
    return out


@dataclass
class OptimizationResult:
    min_value: float
    argmin: list[float]
    starts: int
    converged_fraction: float
    tube_radius: float
    seed: int
    box: dict[str, float]
    counterexamples: list[list[float]] = field(default_factory=list)

    @property
    def low_confidence(self) -> bool:
        return self.converged_fraction < 0.9

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["low_confidence"] = self.low_confidence
        return d

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def _sobol_points(stack: HamiltonianStack, count: int, r_max: float, z_max: float, seed: int) -> np.ndarray:
    n = stack.n
    m = max(int(math.ceil(math.log2(count))), 1)
    u = qmc.Sobol(d=2 * n + 1, scramble=True, seed=seed).random_base2(m)
    r = r_max * u[:, :n]
    th = 2.0 * np.pi * u[:, n : 2 * n]
    z = z_max * (2.0 * u[:, -1] - 1.0)
    return from_polar(r, th, z)


def minimize_dzX(
    stack: HamiltonianStack | None = None,
    tube_radius: float = 0.1,
    starts: int = 1000,
    seed: int = 0,
    box: tuple[float, float] | None = None,
    screen: int | None = None,
    fd_step: float = 1e-7,
    extra_starts=None,
) -> OptimizationResult:
    """Smallest ``dz(X) = H - sum_j u_j H_uj`` over ``box`` minus the torus tube.

    ``box = (r_max, z_max)`` bounds every planar radius and ``|z|``; the
    default is one unit larger than the support box in both directions.
    A scrambled Sobol sample of at least ``screen`` points is projected off the tube
    and the ``starts`` lowest points seed L-BFGS-B runs on
    ``dz(X) o project_off_tube`` with central-difference gradients.
    Any feasible point with ``dz(X) <= 0`` is collected as a counterexample.
    """
    if not tube_radius > 0.0:
        raise ValueError("tube_radius must be positive")
    stack = HamiltonianStack() if stack is None else stack
    r_max, z_max = box if box is not None else (stack.r_star + 1.0, stack.z_full + 1.0)
    dim = stack.dim
    screen = max(8 * starts, 4096) if screen is None else screen

    def objective(points):
        return stack.dz_margin(project_off_tube(points, tube_radius))

    cand = project_off_tube(_sobol_points(stack, screen, r_max, z_max, seed), tube_radius)
    vals = stack.dz_margin(cand)
    order = np.argsort(vals, kind="stable")[:starts]
    seeds = cand[order]
    if extra_starts is not None:
        seeds = np.vstack([np.atleast_2d(extra_starts), seeds])

    eye = np.eye(dim) * fd_step
    bounds = [(-r_max, r_max)] * (2 * stack.n) + [(-z_max, z_max)]

    def fun(p):
        probe = np.vstack([p[None, :], p + eye, p - eye])
        v = objective(probe)
        return float(v[0]), (v[1 : dim + 1] - v[dim + 1 :]) / (2.0 * fd_step)

    best_val, best_pt = float(vals[order[0]]), cand[order[0]]
    counter = [c.tolist() for c in cand[vals <= 0.0]]
    converged = 0
    for p0 in seeds:
        res = minimize(fun, p0, jac=True, method="L-BFGS-B", bounds=bounds, options={"maxiter": 200})
        converged += bool(res.success)
        q = project_off_tube(res.x, tube_radius)[0]
        v = float(stack.dz_margin(q))
        if v <= 0.0:
            counter.append(q.tolist())
        if v < best_val:
            best_val, best_pt = v, q
    return OptimizationResult(
        min_value=best_val,
        argmin=best_pt.tolist(),
        starts=len(seeds),
        converged_fraction=converged / len(seeds),
        tube_radius=float(tube_radius),
        seed=seed,
        box={"r_max": r_max, "z_max": z_max},
        counterexamples=counter,
    )


def tube_minima(
    stack: HamiltonianStack | None = None,
    radii: Sequence[float] = (0.3, 0.1, 0.03, 0.01),
    starts: int = 1000,
    seed: int = 0,
    **kwargs,
) -> list[OptimizationResult]:
    """:func:`minimize_dzX` for decreasing radii.

    Each run also starts from the previous argmin, which is feasible for the
    smaller tube, so the reported minima cannot increase.
    """
    stack = HamiltonianStack() if stack is None else stack
    out = []
    carry = None
    for rad in sorted(radii, reverse=True):
        res = minimize_dzX(stack, rad, starts, seed, extra_starts=carry, **kwargs)
        out.append(res)
        carry = np.array(res.argmin)
    return out


def power_law_exponent(results: Sequence[OptimizationResult]) -> float:
    """Slope of ``log(min)`` against ``log(radius)``."""
    x = np.log([r.tube_radius for r in results])
    y = np.log([r.min_value for r in results])
    return float(np.polyfit(x, y, 1)[0])


@dataclass
class FDAudit:
    max_rel_error: float
    worst_point: list[float]
    n_points: int
    step: float
    flagged: bool
    reason: str = ""

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def audit_points(stack: HamiltonianStack, n_points: int, rng) -> np.ndarray:
    """Random points in the support box, with a share on the axes and on the torus."""
    n, dim = stack.n, stack.dim
    k = n_points // 4
    R, Z = stack.r_star, stack.z_full
    box = np.column_stack([rng.uniform(-R, R, (n_points - 3 * k, 2 * n)), rng.uniform(-Z - 1, Z + 1, n_points - 3 * k)])
    near = from_polar(1.0 + rng.uniform(-0.7, 0.7, (k, n)), rng.uniform(0, 2 * np.pi, (k, n)), rng.uniform(-2.5, 2.5, k))
    axes = from_polar(rng.uniform(0, 1.5, (k, n)), rng.uniform(0, 2 * np.pi, (k, n)), rng.uniform(-2.5, 2.5, k))
    which = rng.integers(0, n, k)
    axes[np.arange(k), 2 * which] = 0.0
    axes[np.arange(k), 2 * which + 1] = 0.0
    torus = from_polar(np.ones((k, n)), rng.uniform(0, 2 * np.pi, (k, n)), np.zeros(k))
    pts = np.vstack([box, near, axes, torus])
    assert pts.shape == (n_points, dim)
    return pts


def gradient_fd_audit(
    stack=None,
    n_points: int = 1000,
    step: float = 1e-5,
    seed: int = 0,
    threshold: float = 1e-6,
    floor: float = 1e-3,
) -> FDAudit:
    """Worst relative gap between the analytic gradient of ``H`` and central differences.

    The relative error at a point is ``max|analytic - fd| / max(max|analytic|, floor)``;
    the floor keeps points where the gradient vanishes from dividing rounding
    noise by zero. ``stack`` only needs ``value``, ``gradient`` and ``dim``
    (plus the box attributes when the default sampler is used).
    """
    stack = HamiltonianStack() if stack is None else stack
    rng = np.random.default_rng(seed)
    pts = audit_points(stack, n_points, rng) if hasattr(stack, "r_star") else rng.uniform(-3, 3, (n_points, stack.dim))
    dim = stack.dim
    analytic = np.asarray(stack.gradient(pts))
    fd = np.empty_like(analytic)
    for k in range(dim):
        e = np.zeros(dim)
        e[k] = step
        fd[:, k] = (np.asarray(stack.value(pts + e)) - np.asarray(stack.value(pts - e))) / (2.0 * step)
    scale = np.maximum(np.max(np.abs(analytic), axis=1), floor)
    rel = np.max(np.abs(analytic - fd), axis=1) / scale
    j = int(np.argmax(rel))
    worst = float(rel[j])
    reasons = []
    if not 1e-7 <= step <= 1e-3:
        reasons.append(f"step {step:g} outside [1e-7, 1e-3]")
    if worst >= threshold:
        reasons.append(f"relative error {worst:.3g} >= {threshold:g}")
    return FDAudit(worst, pts[j].tolist(), n_points, step, bool(reasons), "; ".join(reasons))


def reduction_audit(
    field: ReebField | None = None,
    starts=None,
    t_span: float = 50.0,
    tol: float = 1e-9,
    n_random: int = 20,
    seed: int = 0,
    samples: int = 501,
) -> float:
    """Max deviation of ``(r_1, ..., r_n, z)`` between full and reduced flows.

    ``starts`` are Cartesian points; each is paired with its reduced image.
    By default ``n_random`` points are drawn near the support of the
    perturbation. Both orbits are compared on ``samples`` common times.
    """
    field = ReebField() if field is None else field
    n = field.n
    if starts is None:
        rng = np.random.default_rng(seed)
        starts = from_polar(
            rng.uniform(0.0, 2.0, (n_random, n)), rng.uniform(0, 2 * np.pi, (n_random, n)), rng.uniform(-2.5, 1.0, n_random)
        )
    worst = 0.0
    times = np.linspace(0.0, t_span, samples)
    for p in np.atleast_2d(starts):
        full = integrate(field, p, t_span, 1, tol)
        rz, th = to_reduced(p, n)
        red = integrate_reduced(field, rz, t_span, 1, tol, theta0=th)
        a = full.radial(full(times))
        b = red.radial(red(times))
        worst = max(worst, float(np.max(np.abs(a - b))))
    return worst


@dataclass
class AuditItem:
    name: str
    passed: bool
    value: Any
    detail: dict[str, Any] = field(default_factory=dict)


def run_audits(
    stack: HamiltonianStack | None = None,
    seed: int = 0,
    samples: int = 10_000,
    starts: int = 200,
    radii: Sequence[float] = (0.3, 0.1, 0.03, 0.01),
    tol: float = 1e-9,
) -> list[AuditItem]:
    """The audit battery behind the ``verify`` command."""
    from .hamiltonian import check_H_conditions

    stack = HamiltonianStack() if stack is None else stack
    field_ = ReebField(stack)
    items = []

    prof = verify_profiles(stack.family)
    items.append(AuditItem("profiles", prof.passed, len(prof.failures()), prof.to_dict()))

    hrep = check_H_conditions(stack, samples=samples, seed=seed)
    items.append(AuditItem("H-conditions", hrep.passed, None, hrep.to_dict()))

    rng = np.random.default_rng(seed)
    pts = np.vstack(
        [
            rng.uniform(-10, 10, (samples, stack.dim)),
            audit_points(stack, samples, rng),
        ]
    )
    ra, rd = field_.reeb_residuals(pts)
    worst = float(max(ra.max(), rd.max()))
    items.append(AuditItem("reeb-residuals", worst < 1e-9, worst, {"points": len(pts)}))

    fd = gradient_fd_audit(stack, seed=seed)
    items.append(AuditItem("gradient-fd", not fd.flagged, fd.max_rel_error, fd.to_dict()))

    res = tube_minima(stack, radii, starts=starts, seed=seed)
    mins = [r.min_value for r in res]
    ok = all(m > 0 for m in mins) and all(b < a for a, b in zip(mins, mins[1:])) and not any(r.counterexamples for r in res)
    items.append(
        AuditItem(
            "dzX-minimization",
            ok,
            mins,
            {"results": [r.to_dict() for r in res], "power_law_exponent": power_law_exponent(res)},
        )
    )

    dev = reduction_audit(field_, tol=tol, seed=seed, n_random=5)
    items.append(AuditItem("reduction", dev < 10 * tol, dev, {"tol": tol}))

    on_T = float(np.max(np.abs(stack.dz_margin(from_polar(np.ones((16, stack.n)), rng.uniform(0, 6.3, (16, stack.n)), np.zeros(16))))))
    items.append(AuditItem("dzX-on-torus", on_T <= 1e-10, on_T))
    return items


