"""Standard contact form, its contact frame, and the field ``X = H dz + Y``.

``X`` is the contact vector field of ``H`` for ``alpha_st``, which makes it
the Reeb field of ``alpha_st / H``. Everything here is vectorized over
leading axes; ``ReebField.velocity_one`` is the single-point path used by
the integrators.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any

import numpy as np

from .hamiltonian import HamiltonianStack, HGradient, join, split


def alpha_st(points, vectors) -> np.ndarray:
    """``dz + (1/2) sum_j (x_j dy_j - y_j dx_j)`` applied to ``vectors``."""
    x, y, _ = split(points)
    vx, vy, vz = split(vectors)
    return vz + 0.5 * np.sum(x * vy - y * vx, axis=-1)


def dalpha_st(v, w) -> np.ndarray:
    """``sum_j dx_j ^ dy_j`` evaluated on the pair ``(v, w)``."""
    vx, vy, _ = split(v)
    wx, wy, _ = split(w)
    return np.sum(vx * wy - vy * wx, axis=-1)


def frame(points) -> np.ndarray:
    """Contact frame ``(e_1, f_1, ..., e_n, f_n)`` spanning ``ker alpha_st``.

    Returns shape ``(..., 2n, 2n+1)`` with ``e_j = d/dx_j + (y_j/2) d/dz``
    and ``f_j = d/dy_j - (x_j/2) d/dz``.
    """
    points = np.asarray(points, dtype=float)
    dim = points.shape[-1]
    x, y, _ = split(points)
    out = np.zeros(points.shape[:-1] + (dim - 1, dim))
    for j in range(x.shape[-1]):
        out[..., 2 * j, 2 * j] = 1.0
        out[..., 2 * j, -1] = 0.5 * y[..., j]
        out[..., 2 * j + 1, 2 * j + 1] = 1.0
        out[..., 2 * j + 1, -1] = -0.5 * x[..., j]
    return out


def Y_field(points, grad: HGradient) -> np.ndarray:
    """The part of ``X`` tangent to the contact planes.

    ``Y = sum_j (x_j H_z/2 - H_yj) e_j + (y_j H_z/2 + H_xj) f_j``.
    """
    x, y, _ = split(points)
    Hz = grad.dH_dz[..., None]
    a = 0.5 * x * Hz - grad.dH_dy
    b = 0.5 * y * Hz + grad.dH_dx
    return join(a, b, np.sum(0.5 * y * a - 0.5 * x * b, axis=-1))


@dataclass
class FieldSample:
    point: np.ndarray
    H: np.ndarray
    X: np.ndarray
    dzX: np.ndarray
    res_alpha: np.ndarray
    res_dalpha: np.ndarray

    def to_dict(self) -> dict[str, Any]:
        def conv(v):
            v = np.asarray(v)
            return v.tolist() if v.ndim else float(v)

        return {
            "point": conv(self.point),
            "H": conv(self.H),
            "X": conv(self.X),
            "dzX": conv(self.dzX),
            "reeb_residuals": {"alpha": conv(self.res_alpha), "dalpha": conv(self.res_dalpha)},
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


class ReebField:
    """Reeb field of ``alpha_st / H`` for a :class:`HamiltonianStack`."""

    def __init__(self, stack: HamiltonianStack | None = None):
        self.stack = HamiltonianStack() if stack is None else stack
        self.n = self.stack.n
        self.dim = self.stack.dim

    def velocity(self, points) -> np.ndarray:
        grad = self.stack.eval_H(points)
        X = Y_field(points, grad)
        X[..., -1] += grad.H
        return X

    def velocity_one(self, p) -> list[float]:
        """``X`` at a single point as a list (fast path for integrators)."""
        n = self.n
        xs = [p[2 * j] for j in range(n)]
        ys = [p[2 * j + 1] for j in range(n)]
        H, Hu, Hz = self.stack.radial_one([xs[j] * xs[j] + ys[j] * ys[j] for j in range(n)], p[-1])
        out = []
        zdot = H
        for j in range(n):
            x, y, d = xs[j], ys[j], Hu[j]
            out.append(0.5 * x * Hz - 2.0 * y * d)
            out.append(0.5 * y * Hz + 2.0 * x * d)
            zdot -= (x * x + y * y) * d
        out.append(zdot)
        return out

    def reduced_one(self, r, z: float) -> tuple[list[float], float, list[float]]:
        """``(dr_j/dt, dz/dt, dtheta_j/dt)`` of the rotation-reduced flow."""
        u = [rj * rj for rj in r]
        H, Hu, Hz = self.stack.radial_one(u, z)
        dr = [0.5 * rj * Hz for rj in r]
        dz = H - sum(uj * d for uj, d in zip(u, Hu))
        return dr, dz, [2.0 * d for d in Hu]

    def dz_rate(self, points) -> np.ndarray:
        return self.stack.dz_margin(points)

    def sample(self, points) -> FieldSample:
        points = np.asarray(points, dtype=float)
        grad = self.stack.eval_H(points)
        X = Y_field(points, grad)
        X[..., -1] += grad.H
        ra, rd = _residuals(points, grad, X)
        return FieldSample(point=points, H=grad.H, X=X, dzX=X[..., -1], res_alpha=ra, res_dalpha=rd)

    def reeb_residuals(self, points) -> tuple[np.ndarray, np.ndarray]:
        points = np.asarray(points, dtype=float)
        grad = self.stack.eval_H(points)
        X = Y_field(points, grad)
        X[..., -1] += grad.H
        return _residuals(points, grad, X)


def _residuals(points, grad: HGradient, X) -> tuple[np.ndarray, np.ndarray]:
    """``|alpha(X) - 1|`` and ``max_b |d alpha(X, b)|`` for ``alpha = alpha_st/H``.

    ``d alpha = (H d alpha_st - dH ^ alpha_st) / H^2``; ``b`` runs over the
    contact frame and ``d/dz``.
    """
    H = grad.H
    aX = alpha_st(points, X)
    res_alpha = np.abs(aX / H - 1.0)

    basis = frame(points)
    dz = np.zeros_like(basis[..., :1, :])
    dz[..., 0, -1] = 1.0
    basis = np.concatenate([basis, dz], axis=-2)
    Xb = np.broadcast_to(X[..., None, :], basis.shape)
    pb = np.broadcast_to(np.asarray(points, dtype=float)[..., None, :], basis.shape)
    dH_X = np.sum(grad.grad * X, axis=-1)[..., None]
    dH_b = np.einsum("...k,...bk->...b", grad.grad, basis)
    a_b = alpha_st(pb, basis)
    Hb = H[..., None]
    val = (Hb * dalpha_st(Xb, basis) - (dH_X * a_b - dH_b * aX[..., None])) / Hb**2
    return res_alpha, np.max(np.abs(val), axis=-1)


def alpha_value(points, vectors, stack: HamiltonianStack) -> np.ndarray:
    """``(alpha_st / H)(v)`` -- the contact form whose Reeb field is ``X``."""
    return alpha_st(points, vectors) / stack.value(points)
