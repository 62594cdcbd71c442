"""Levenberg-Marquardt refinement of a rigid transform.

Rotation is updated multiplicatively, R <- exp(w) R, translation additively.
Jacobians are central differences of the stacked residual vector; problems
have at most six unknowns so this stays cheap.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from scipy.spatial.transform import Rotation

from ..cost import FeaturePair
from ..errors import EmptyInlierSet
from ..manifold import RigidTransform
from .stack import PairStack

Array = np.ndarray

GRAD_TOL = 1e-10
STEP_TOL = 1e-12
MAX_ITER = 100
FD_STEP = 1e-7


def exp_so3(w: Array) -> Array:
    return Rotation.from_rotvec(np.asarray(w, dtype=float)).as_matrix()


def levenberg_marquardt(
    residual: Callable[[Array], Array],
    x0: Array,
    max_iter: int = MAX_ITER,
    history: list[float] | None = None,
) -> tuple[Array, float]:
    """Minimize ||residual(x)||^2 over a local increment vector x (x0 usually zero).

    Steps are only accepted when the cost does not increase, so the returned
    cost never exceeds the starting one.
    """
    x = np.asarray(x0, dtype=float).copy()
    r = residual(x)
    cost = float(r @ r)
    if history is not None:
        history.append(cost)
    lam = 1e-4
    dim = x.size
    for _ in range(max_iter):
        jac = np.empty((r.size, dim))
        for k in range(dim):
            e = np.zeros(dim)
            e[k] = FD_STEP
            jac[:, k] = (residual(x + e) - residual(x - e)) / (2 * FD_STEP)
        grad = jac.T @ r
        if np.linalg.norm(grad) < GRAD_TOL:
            break
        jtj = jac.T @ jac
        scale = np.diag(jtj).copy()
        scale[scale < 1e-12] = 1e-12
        accepted = False
        step = np.zeros(dim)
        while lam < 1e12:
            try:
                step = np.linalg.solve(jtj + lam * np.diag(scale), -grad)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            r_new = residual(x + step)
            cost_new = float(r_new @ r_new)
            if cost_new <= cost:
                x, r, cost = x + step, r_new, cost_new
                lam = max(lam / 3, 1e-12)
                accepted = True
                break
            lam *= 4
        if not accepted:
            break
        if history is not None:
            history.append(cost)
        if np.linalg.norm(step) < STEP_TOL:
            break
    return x, cost


def refine_lm(
    pairs: Sequence[FeaturePair],
    inliers: Sequence[int],
    T0: RigidTransform,
    history: list[float] | None = None,
    max_iter: int = MAX_ITER,
) -> RigidTransform:
    """Joint rotation and translation refinement of the total cost over ``inliers``.

    ``history`` (optional) receives the cost after every accepted step.
    """
    inliers = list(inliers)
    if not inliers:
        raise EmptyInlierSet("refinement needs at least one correspondence")
    stack = PairStack([pairs[i] for i in inliers])
    R0, t0 = T0.rotation, T0.translation

    def residual(x: Array) -> Array:
        return stack.residual_vector(exp_so3(x[:3]) @ R0, t0 + x[3:])

    x, _ = levenberg_marquardt(residual, np.zeros(6), max_iter=max_iter, history=history)
    if not np.any(x):
        return T0
    return RigidTransform(exp_so3(x[:3]) @ R0, t0 + x[3:])


def refine_rotation(stack: PairStack, R0: Array, max_iter: int = 30) -> tuple[Array, float]:
    """Rotation-only refinement of the summed f-terms of ``stack``."""

    def residual(x: Array) -> Array:
        return stack.residual_vector(exp_so3(x) @ R0, None)

    x, cost = levenberg_marquardt(residual, np.zeros(3), max_iter=max_iter)
    return exp_so3(x) @ R0, cost


def refine_translation(stack: PairStack, R: Array, t0: Array, max_iter: int = 30) -> tuple[Array, float]:
    """Translation-only refinement of the summed g-terms with R fixed."""

    def residual(x: Array) -> Array:
        return stack.residual_vector(R, t0 + x, rotation=False)

    x, cost = levenberg_marquardt(residual, np.zeros(3), max_iter=max_iter)
    return t0 + x, cost
