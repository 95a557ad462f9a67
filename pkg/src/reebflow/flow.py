"""Integration of the Reeb flow, orbit classification and recurrence scans.

Full-space states are Cartesian points ``(x1, y1, ..., xn, yn, z)``.
Reduced states are ``(r1, ..., rn, z, theta1, ..., thetan)``: the radii and
height evolve on their own and the angles ride along as passengers.

Outside the support box ``X = d/dz`` exactly, so once an orbit leaves the
box while moving away from it the rest of the orbit is a translation and is
written down in closed form instead of being integrated.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
from joblib import Parallel, delayed
from scipy.integrate import solve_ivp
from scipy.optimize import brentq, minimize_scalar

from .hamiltonian import from_polar, to_polar, torus_distance

EXIT_MARGIN = 0.01
# The solver runs at tol * TOL_SAFETY: local control at tol alone lets the
# global error grow 100-1000x along orbits that pass near the torus.
TOL_SAFETY = 1e-3
# Inside the support H can be identically 1 on open sets; there the error
# estimate vanishes and unbounded steps may leap over thin features.
DEFAULT_MAX_STEP = 0.5


class FlowError(RuntimeError):
    """The integrator failed; for this smooth field that is always a defect."""


class TorusDriftError(FlowError):
    pass


@dataclass
class Segment:
    t0: float
    t1: float
    fn: Callable[[np.ndarray], np.ndarray]
    analytic: bool = False


@dataclass
class Trajectory:
    t: np.ndarray
    states: np.ndarray
    direction: int
    reduced: bool
    n: int
    segments: list[Segment] = field(default_factory=list)
    events: list[dict[str, Any]] = field(default_factory=list)
    meta: dict[str, Any] = field(default_factory=dict)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    @property
    def t_end(self) -> float:
        return float(self.t[-1])

    def __call__(self, times) -> np.ndarray:
        """Dense evaluation at ``times`` (scalar or 1-d array)."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        out = np.empty((times.size, self.states.shape[1]))
        for k, tk in enumerate(times):
            seg = self._segment(tk)
            out[k] = seg.fn(np.array([tk]))[0]
        return out

    def _segment(self, tk) -> Segment:
        for seg in self.segments:
            lo, hi = sorted((seg.t0, seg.t1))
            if lo - 1e-12 <= tk <= hi + 1e-12:
                return seg
        raise ValueError(f"time {tk} outside trajectory")

    def cartesian(self, states=None) -> np.ndarray:
        states = self.states if states is None else states
        if not self.reduced:
            return states
        n = self.n
        return from_polar(states[:, :n], states[:, n + 1 :], states[:, n])

    def radial(self, states=None) -> np.ndarray:
        """``(r_1, ..., r_n, z)`` for every sample."""
        states = self.states if states is None else states
        if self.reduced:
            return states[:, : self.n + 1]
        r, _, z = to_polar(states)
        return np.column_stack([r, z])

    def torus_distance(self) -> np.ndarray:
        rz = self.radial()
        return np.maximum(np.max(np.abs(rz[:, :-1] - 1.0), axis=1), np.abs(rz[:, -1]))

    @property
    def exited(self) -> bool:
        return any(e["kind"] == "support-exit" for e in self.events)


def _support(field) -> tuple[float, float] | None:
    stack = getattr(field, "stack", None)
    if stack is None:
        return None
    return stack.r_star, stack.z_full


def _translation(p0, t0, dz_index):
    # dz/dt = 1 in either time direction
    p0 = np.array(p0, dtype=float)

    def fn(ts):
        out = np.repeat(p0[None, :], len(ts), axis=0)
        out[:, dz_index] += np.asarray(ts) - t0
        return out

    return fn


def _solve(rhs, y0, t0, t1, tol, method, events, max_step):
    inner = max(tol * TOL_SAFETY, 1e-13)
    sol = solve_ivp(
        rhs,
        (t0, t1),
        y0,
        method=method,
        rtol=inner,
        atol=inner,
        dense_output=True,
        events=events,
        max_step=max_step,
    )
    if sol.status == -1:
        raise FlowError(f"{sol.message} (t = {sol.t[-1]!r}, state = {sol.y[:, -1].tolist()!r})")
    return sol


def _run(
    rhs,
    start,
    t_span: float,
    direction: int,
    tol: float,
    method: str,
    support,
    r_of: Callable[[np.ndarray], float],
    z_index: int,
    reduced: bool,
    n: int,
    extra_events: Sequence = (),
    max_step: float = DEFAULT_MAX_STEP,
) -> Trajectory:
    if direction not in (1, -1):
        raise ValueError("direction must be +1 or -1")
    if not tol > 0.0:
        raise ValueError("tol must be positive")
    y = np.array(start, dtype=float)
    if not np.all(np.isfinite(y)):
        raise ValueError("start must be finite")
    t_stop = direction * float(t_span)
    ts = [np.array([0.0])]
    ys = [y[None, :]]
    segments: list[Segment] = []
    events: list[dict[str, Any]] = []
    meta = {"method": method, "tol": tol, "nfev": 0, "nsteps": 0, "min_step": math.inf, "max_step": 0.0}
    t_now = 0.0

    def analytic_to(t_target, kind):
        nonlocal y, t_now
        fn = _translation(y, t_now, z_index)
        segments.append(Segment(t_now, t_target, fn, analytic=True))
        if kind:
            events.append({"kind": kind, "t": t_now, "state": y.tolist()})
        y = fn(np.array([t_target]))[0]
        t_now = t_target
        ts.append(np.array([t_now]))
        ys.append(y[None, :])

    if support is not None:
        r_star, z_full = support
        z_edge = z_full + EXIT_MARGIN
        if r_of(y) >= r_star or direction * y[z_index] >= z_edge:
            analytic_to(t_stop, "support-exit")
            return Trajectory(np.concatenate(ts), np.concatenate(ys), direction, reduced, n, segments, events, meta)
        if direction * y[z_index] <= -z_edge:
            # approaching the box along a straight line
            t_hit = direction * (-z_edge - direction * y[z_index])
            if abs(t_hit) >= abs(t_stop):
                analytic_to(t_stop, None)
                return Trajectory(np.concatenate(ts), np.concatenate(ys), direction, reduced, n, segments, events, meta)
            analytic_to(t_hit, None)

        def leave(t, yy):
            return yy[z_index] - direction * z_edge

        leave.terminal = True
        leave.direction = 0
        evs = [leave, *extra_events]
    else:
        evs = list(extra_events)

    if t_now != t_stop:
        sol = _solve(rhs, y, t_now, t_stop, tol, method, evs or None, max_step)
        meta["nfev"] += int(sol.nfev)
        steps = np.abs(np.diff(sol.t))
        meta["nsteps"] += int(steps.size)
        if steps.size:
            meta["min_step"] = float(min(meta["min_step"], steps.min()))
            meta["max_step"] = float(max(meta["max_step"], steps.max()))
        meta["step_sizes"] = steps
        segments.append(Segment(t_now, float(sol.t[-1]), lambda tt, s=sol.sol: s(tt).T))
        ts.append(sol.t[1:])
        ys.append(sol.y[:, 1:].T)
        y = sol.y[:, -1].copy()
        t_now = float(sol.t[-1])
        first = 1 if support is not None else 0
        if sol.t_events is not None:
            for k, te in enumerate(sol.t_events[first:], start=first):
                for tk, yk in zip(te, sol.y_events[k]):
                    events.append({"kind": getattr(evs[k], "name", f"event{k}"), "t": float(tk), "state": yk.tolist()})
        if sol.status == 1 and first and sol.t_events[0].size:
            analytic_to(t_stop, "support-exit")
        elif sol.status == 1:
            events.append({"kind": "terminated", "t": t_now, "state": y.tolist()})
    return Trajectory(np.concatenate(ts), np.concatenate(ys), direction, reduced, n, segments, events, meta)


def integrate(
    field,
    start,
    t_span: float,
    direction: int = 1,
    tol: float = 1e-10,
    method: str = "DOP853",
    events: Sequence = (),
    max_step: float = DEFAULT_MAX_STEP,
) -> Trajectory:
    """Integrate ``dp/dt = X(p)`` from ``start`` for ``t_span`` time units.

    ``direction=-1`` integrates backward (times run ``0 -> -t_span``).
    Leaving the support box ends the numerical part; the remainder is the
    exact translation along ``d/dz``, recorded as a ``support-exit`` event.
    """
    n = field.n
    velocity = field.velocity_one

    def rhs(t, y):
        return velocity(y.tolist())

    def r_of(y):
        return max(math.hypot(y[2 * j], y[2 * j + 1]) for j in range(n))

    return _run(rhs, start, t_span, direction, tol, method, _support(field), r_of, 2 * n, False, n, events, max_step)


def integrate_reduced(
    field,
    start,
    t_span: float,
    direction: int = 1,
    tol: float = 1e-10,
    method: str = "DOP853",
    theta0=None,
    events: Sequence = (),
    max_step: float = DEFAULT_MAX_STEP,
) -> Trajectory:
    """Integrate the rotation-reduced system from ``start = (r_1..r_n, z)``.

    ``dr_j/dt = r_j H_z / 2``, ``dz/dt = H - sum_j u_j H_uj`` and
    ``dtheta_j/dt = 2 H_uj``.
    """
    n = field.n
    start = np.asarray(start, dtype=float)
    if start.shape != (n + 1,):
        raise ValueError(f"reduced start needs {n + 1} entries")
    if np.any(start[:n] < 0.0):
        raise ValueError("radii must be nonnegative")
    th = np.zeros(n) if theta0 is None else np.asarray(theta0, dtype=float)
    y0 = np.concatenate([start, th])
    reduced = field.reduced_one

    def rhs(t, y):
        v = y.tolist()
        dr, dz, dth = reduced(v[:n], v[n])
        return dr + [dz] + dth

    def r_of(y):
        return float(np.max(y[:n]))

    return _run(rhs, y0, t_span, direction, tol, method, _support(field), r_of, n, True, n, events, max_step)


def to_reduced(point, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Split a Cartesian point into the reduced start ``(r, z)`` and its angles."""
    r, theta, z = to_polar(np.asarray(point, dtype=float))
    return np.append(r, z), theta


class RigidRotationField:
    """Calibration field ``sum_j omega_j d/dtheta_j`` (no ``d/dz`` part).

    Every orbit is a linear flow on a torus, so it is periodic exactly when the
    frequency ratios are rational. Used to check the detectors, never to
    describe the Reeb flow.
    """

    stack = None

    def __init__(self, omegas):
        self.omegas = [float(w) for w in omegas]
        self.n = len(self.omegas)
        self.dim = 2 * self.n + 1

    def velocity_one(self, p):
        out = []
        for j, w in enumerate(self.omegas):
            out.extend((-w * p[2 * j + 1], w * p[2 * j]))
        out.append(0.0)
        return out

    def velocity(self, points):
        points = np.asarray(points, dtype=float)
        return np.apply_along_axis(lambda p: np.array(self.velocity_one(p.tolist())), -1, points)

    def reduced_one(self, r, z):
        return [0.0] * self.n, 0.0, list(self.omegas)


@dataclass
class OrbitVerdict:
    start: list[float]
    kind: str
    horizon: float
    evidence: dict[str, Any]

    def to_dict(self) -> dict[str, Any]:
        return {"start": self.start, "class": self.kind, "horizon": self.horizon, "evidence": self.evidence}


def _in_box(traj: Trajectory, r_max: float, z_max: float) -> bool:
    rz = traj.radial()
    return bool(np.all(rz[:, :-1] < r_max) and np.all(np.abs(rz[:, -1]) < z_max))


def classify_orbit(
    field,
    start,
    horizon: float = 200.0,
    box: tuple[float, float] | None = None,
    eps_T: float = 1e-6,
    tol: float = 1e-10,
    reduced: bool = False,
) -> OrbitVerdict:
    """Sort an orbit into on-torus / forward-trapped / backward-trapped / bi-escaping.

    ``box = (r_max, z_max)`` defaults to the support box. The rules are
    horizon-bounded: an orbit is trapped in one direction if it stays in the
    box for the whole horizon while the other direction leaves through the
    matching end of the box. If neither rule applies the verdict is
    ``horizon-inconclusive``.
    """
    if not horizon > 0.0:
        raise ValueError("horizon must be positive")
    stack = field.stack
    r_max, z_max = box if box is not None else (stack.r_star, stack.z_full)
    start = np.asarray(start, dtype=float)
    if reduced:
        rz, th = to_reduced(start, field.n)
        fw = integrate_reduced(field, rz, horizon, 1, tol, theta0=th)
        bw = integrate_reduced(field, rz, horizon, -1, tol, theta0=th)
    else:
        fw = integrate(field, start, horizon, 1, tol)
        bw = integrate(field, start, horizon, -1, tol)

    d_fw, d_bw = fw.torus_distance(), bw.torus_distance()
    fw_in, bw_in = _in_box(fw, r_max, z_max), _in_box(bw, r_max, z_max)
    z_fw, z_bw = float(fw.radial()[-1, -1]), float(bw.radial()[-1, -1])
    fw_out_top = not fw_in and z_fw > z_max
    bw_out_bottom = not bw_in and z_bw < -z_max

    def exit_time(traj):
        for e in traj.events:
            if e["kind"] == "support-exit":
                return e["t"]
        return None

    if max(d_fw.max(), d_bw.max()) < eps_T:
        kind = "on-torus"
    elif fw_in and bw_out_bottom:
        kind = "forward-trapped"
    elif bw_in and fw_out_top:
        kind = "backward-trapped"
    elif not fw_in and not bw_in:
        kind = "bi-escaping"
    else:
        kind = "horizon-inconclusive"
    evidence = {
        "final_z": {"forward": z_fw, "backward": z_bw},
        "torus_distance": {
            "start": float(d_fw[0]),
            "forward_end": float(d_fw[-1]),
            "backward_end": float(d_bw[-1]),
            "max": float(max(d_fw.max(), d_bw.max())),
        },
        "escape_time": {"forward": exit_time(fw), "backward": exit_time(bw)},
        "stays_in_box": {"forward": fw_in, "backward": bw_in},
        "box": {"r_max": r_max, "z_max": z_max},
        "eps_T": eps_T,
    }
    return OrbitVerdict(start=start.tolist(), kind=kind, horizon=horizon, evidence=evidence)


def approach_exponent(traj: Trajectory, t_from: float | None = None, samples: int = 20) -> float:
    """Slope of ``log|z|`` against ``log t`` over the tail ``[t_from, t_end]``.

    On the trapping cylinder ``dz(X)`` vanishes quadratically in ``z``, so
    ``z(t) ~ -1/(a t)`` and the slope comes out near ``-1``; it is an
    observation, not an input.
    """
    t_end = abs(traj.t_end)
    t_from = 0.25 * t_end if t_from is None else t_from
    ts = traj.direction * np.geomspace(t_from, t_end, samples)
    z = np.abs(traj.radial(traj(ts))[:, -1])
    return float(np.polyfit(np.log(np.abs(ts)), np.log(z), 1)[0])


@dataclass
class RotationEstimate:
    rho: float
    horizon: int
    error_bound: float
    time: float
    max_torus_distance: float
    ratios: list[float] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "rho": self.rho,
            "revolutions": self.horizon,
            "error_bound": self.error_bound,
            "time": self.time,
            "max_torus_distance": self.max_torus_distance,
        }


def rotation_number(
    field,
    start,
    revolutions: int,
    eps_T: float = 1e-6,
    tol: float = 1e-10,
    reduced: bool = True,
) -> RotationEstimate:
    """Winding ratio ``Delta theta_2 / Delta theta_1`` after ``revolutions`` turns of ``theta_1``.

    With ``reduced=True`` the angles are integrated as passengers of the
    reduced system; otherwise they are unwrapped from the Cartesian orbit.
    Drifting more than ``10 eps_T`` away from the torus raises
    :class:`TorusDriftError`.
    """
    revolutions = int(revolutions)
    if revolutions < 1:
        raise ValueError("need at least one revolution")
    n = field.n
    start = np.asarray(start, dtype=float)
    d0 = float(torus_distance(start))
    if d0 > eps_T:
        raise ValueError(f"start is {d0:.3g} away from the torus (eps_T = {eps_T:g})")
    rz, th = to_reduced(start, n)
    target = 2.0 * math.pi * revolutions
    omega1 = field.reduced_one(rz[:n].tolist(), rz[n])[2][0]
    if not omega1 > 0.0:
        raise FlowError("theta_1 does not advance at the start point")
    t_max = 2.0 * target / omega1

    if reduced:

        def turned(t, y):
            return y[n + 1] - th[0] - target

        turned.terminal = True
        turned.direction = 1
        traj = integrate_reduced(field, rz, t_max, 1, tol, theta0=th, events=[turned], max_step=np.inf)
        t_end = traj.t_end
        angles = traj.states[:, n + 1 :]
        drift = traj.torus_distance()
    else:
        traj = integrate(field, start, t_max, 1, tol, max_step=0.5)
        _, ang, _ = to_polar(traj.states)
        angles = np.unwrap(ang, axis=0)
        adv = angles[:, 0] - angles[0, 0]
        k = int(np.searchsorted(adv, target))
        if k >= adv.size:
            raise FlowError("theta_1 did not complete the requested revolutions")

        def miss(t):
            _, a, _ = to_polar(traj(t)[0])
            a1 = angles[k - 1, 0] + (a[0] - angles[k - 1, 0] + math.pi) % (2 * math.pi) - math.pi
            return a1 - angles[0, 0] - target

        t_end = brentq(miss, traj.t[k - 1], traj.t[k], xtol=1e-14)
        _, a_end, _ = to_polar(traj(t_end)[0])
        a_end = angles[k - 1] + (a_end - angles[k - 1] + math.pi) % (2 * math.pi) - math.pi
        angles = np.vstack([angles[:k], a_end])
        drift = traj.torus_distance()[: k + 1]

    max_drift = float(drift.max())
    if max_drift > 10.0 * eps_T:
        raise TorusDriftError(f"orbit left the torus: distance {max_drift:.3g} > {10 * eps_T:g}")
    adv = angles[-1] - angles[0]
    return RotationEstimate(
        rho=float(adv[1] / adv[0]),
        horizon=revolutions,
        error_bound=2.0 / revolutions,
        time=float(t_end),
        max_torus_distance=max_drift,
        ratios=(adv[1:] / adv[0]).tolist(),
    )


@dataclass
class ScanResult:
    candidates: list[dict[str, Any]]
    min_z_gain: float
    n_starts: int
    n_skipped: int
    config: dict[str, Any]

    @property
    def recurrences(self) -> list[dict[str, Any]]:
        """Candidates not explained by quasi-periodic motion on the torus."""
        return [c for c in self.candidates if c["flag"] == "candidate"]

    def to_dict(self) -> dict[str, Any]:
        return {
            "config": self.config,
            "n_starts": self.n_starts,
            "n_skipped_in_tube": self.n_skipped,
            "min_z_gain": self.min_z_gain,
            "candidates": self.candidates,
        }


def grid_starts(box: float | Sequence[tuple[float, float]], per_axis: int, dim: int) -> np.ndarray:
    """Cell-centred grid with ``per_axis`` points along every axis of the box."""
    if np.isscalar(box):
        box = [(-float(box), float(box))] * dim
    axes = []
    for lo, hi in box:
        width = (hi - lo) / per_axis
        axes.append(lo + width * (np.arange(per_axis) + 0.5))
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def find_returns(traj: Trajectory, return_tol: float, t_min: float, subdivide: int = 8) -> list[tuple[float, float]]:
    """Times ``t >= t_min`` where the orbit comes within ``return_tol`` of its start."""
    p0 = traj.cartesian(traj.states[:1])[0]
    found = []
    for seg in traj.segments:
        lo, hi = sorted((seg.t0, seg.t1))
        lo = max(lo, t_min) if traj.direction > 0 else lo
        if hi <= lo:
            continue
        if seg.analytic:
            a = traj.cartesian(seg.fn(np.array([lo])))[0]
            b = traj.cartesian(seg.fn(np.array([hi])))[0]
            d = b - a
            lam = float(np.clip(np.dot(p0 - a, d) / max(np.dot(d, d), 1e-300), 0.0, 1.0))
            dist = float(np.linalg.norm(a + lam * d - p0))
            if dist < return_tol:
                found.append((lo + lam * (hi - lo), dist))
            continue
        knots = np.asarray(traj.t)
        knots = knots[(knots >= lo) & (knots <= hi)]
        knots = np.union1d(knots, [lo, hi])
        fine = np.concatenate(
            [np.linspace(a, b, subdivide, endpoint=False) for a, b in zip(knots[:-1], knots[1:])] + [knots[-1:]]
        )

        def dist_at(tt):
            return np.linalg.norm(traj.cartesian(seg.fn(np.atleast_1d(tt))) - p0, axis=1)

        d = dist_at(fine)
        speed = np.linalg.norm(np.diff(traj.cartesian(seg.fn(fine)), axis=0), axis=1)
        slack = float(speed.max()) if speed.size else 0.0
        for i in range(1, d.size - 1):
            if d[i] <= d[i - 1] and d[i] <= d[i + 1] and d[i] < return_tol + slack:
                res = minimize_scalar(
                    lambda tt: float(dist_at(tt)[0]),
                    bounds=(fine[i - 1], fine[i + 1]),
                    method="bounded",
                    options={"xatol": 1e-12},
                )
                if res.fun < return_tol:
                    found.append((float(res.x), float(res.fun)))
        if d.size and d[-1] < return_tol and (not found or abs(found[-1][0] - fine[-1]) > 1e-9):
            found.append((float(fine[-1]), float(d[-1])))
    # merge near-duplicates produced at shared knots
    merged: list[tuple[float, float]] = []
    for t, dist in sorted(found):
        if merged and abs(t - merged[-1][0]) < 1e-6:
            if dist < merged[-1][1]:
                merged[-1] = (t, dist)
        else:
            merged.append((t, dist))
    return merged


def _scan_one(field, k, start, horizon, return_tol, t_min, tol, reduced, on_torus):
    if reduced and field.stack is not None:
        rz, th = to_reduced(start, field.n)
        traj = integrate_reduced(field, rz, horizon, 1, tol, theta0=th)
    else:
        traj = integrate(field, start, horizon, 1, tol)
    z0 = float(traj.radial()[0, -1])
    z1 = float(traj.radial()[-1, -1])
    hits = find_returns(traj, return_tol, t_min)
    flag = "on-torus, quasi-periodic" if on_torus else "candidate"
    return z1 - z0, [
        {"start_index": k, "start": np.asarray(start).tolist(), "t": t, "distance": d, "flag": flag}
        for t, d in hits
    ]


def scan_periodic(
    field,
    starts=None,
    box: float = 4.0,
    per_axis: int = 6,
    horizon: float = 200.0,
    return_tol: float = 1e-4,
    t_min: float = 0.5,
    eps_T: float = 1e-6,
    tube: float | None = None,
    include_torus: bool = False,
    tol: float = 1e-9,
    reduced: bool = False,
    jobs: int = 1,
) -> ScanResult:
    """Search for near-returns ``|p(t) - p(0)| < return_tol`` with ``t > t_min``.

    Starts default to a cell-centred grid on ``[-box, box]^(2n+1)``. Starts
    within ``tube`` (default ``eps_T``) of the torus are skipped unless
    ``include_torus``; returns found from such starts are flagged as
    quasi-periodic torus motion. ``min_z_gain`` is the smallest
    ``z(t_end) - z(0)`` over the scanned starts.
    """
    tube = eps_T if tube is None else tube
    grid_box = box if starts is None else None
    if starts is None:
        starts = grid_starts(box, per_axis, field.dim)
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    if field.stack is not None:
        near = torus_distance(starts) < tube
    else:
        near = np.zeros(len(starts), dtype=bool)
    keep = [k for k in range(len(starts)) if include_torus or not near[k]]
    work = (delayed(_scan_one)(field, k, starts[k], horizon, return_tol, t_min, tol, reduced, bool(near[k])) for k in keep)
    results = Parallel(n_jobs=jobs)(work) if jobs != 1 else [w[0](*w[1], **w[2]) for w in work]
    gains = [g for g, _ in results]
    cands = [c for _, cs in results for c in cs]
    config = {
        "horizon": horizon,
        "return_tol": return_tol,
        "t_min": t_min,
        "tube": tube,
        "include_torus": include_torus,
        "tol": tol,
        "reduced": reduced,
        "box": grid_box,
        "per_axis": per_axis if grid_box is not None else None,
    }
    return ScanResult(
        candidates=cands,
        min_z_gain=float(min(gains)) if gains else math.nan,
        n_starts=len(keep),
        n_skipped=len(starts) - len(keep),
        config=config,
    )


@dataclass
class SweepRow:
    rho: float
    crossing_time: float | None
    r_at_flat_entry: float | None

    def to_dict(self) -> dict[str, Any]:
        return {"rho": self.rho, "crossing_time": self.crossing_time, "r_at_flat_entry": self.r_at_flat_entry}


def _crossing(field, rho, z0, horizon, tol):
    n = field.n
    z_flat = field.stack.constants.z_flat

    def top(t, y):
        return y[n]

    top.terminal = True
    top.direction = 1
    top.name = "z=0"

    def entry(t, y):
        return y[n] + z_flat

    entry.direction = 1
    entry.name = "z=-z_flat"
    start = np.append(np.full(n, float(rho)), -float(z0))
    traj = integrate_reduced(field, start, horizon, 1, tol, events=[top, entry])
    hit = next((e for e in traj.events if e["kind"] == "z=0"), None)
    ent = next((e for e in traj.events if e["kind"] == "z=-z_flat"), None)
    return (None if hit is None else hit["t"]), (None if ent is None else ent["state"][0])


def hyperplane_sweep(field, z0: float, rhos, horizon: float = 200.0, tol: float = 1e-10) -> list[SweepRow]:
    """Time for starts on ``{z = -z0}`` with all radii ``rho`` to reach ``z > 0``.

    ``crossing_time`` is ``None`` when ``z = 0`` is not reached within the
    horizon. ``r_at_flat_entry`` is the radius where the orbit enters the
    flat window ``z = -z_flat`` of ``h``; the orbit is trapped exactly when
    that radius is 1.
    """
    if not z0 > field.stack.z_full:
        raise ValueError("z0 must exceed z_full so that the plane starts outside the support")
    rows = []
    for rho in rhos:
        t, r_in = _crossing(field, rho, z0, horizon, tol)
        rows.append(SweepRow(float(rho), t, r_in))
    return rows


def trapped_radius(field, z0: float, bracket=(1.0, 2.0), tol: float = 1e-11, xtol: float = 1e-12) -> float:
    """Radius ``rho*`` on ``{z = -z0}`` whose orbit lands on the cylinder over the torus."""

    def miss(rho):
        _, r_in = _crossing(field, rho, z0, 4.0 * z0 + 10.0, tol)
        return r_in - 1.0

    return float(brentq(miss, *bracket, xtol=xtol))
