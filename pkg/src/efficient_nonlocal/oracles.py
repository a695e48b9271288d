"""Slow, independent reference computations.

Nothing here calls into the ``tensor`` ops. Products are written as plain
Python loops so the checks do not share code paths with what they check.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .nl_reference import ModuleWeights, Normalization, SimilarityKind
from .tensor import FeatureMap

__all__ = ["brute_force_nl", "block_loss", "finite_difference_gradients", "relative_error"]


def _project(xi, w):
    # xi: C-vector, w: C x K
    return [sum(xi[c] * w[c][k] for c in range(len(xi))) for k in range(len(w[0]))]


def brute_force_nl(
    x: FeatureMap,
    w: ModuleWeights,
    kind: SimilarityKind,
    l_dense=None,
    normalization: Normalization = Normalization.NONE,
) -> np.ndarray:
    """Per-pixel double loop ``y_i = 1/Z_i * sum_j F(x_i, x_j) g(x_j)``.

    Embedded Gaussian uses ``F = exp(theta_i . phi_j)`` and
    ``Z_i = sum_j F``. Dot product uses ``F = theta_i . phi_j`` with
    ``Z = 1`` (or ``HW``). ``l_dense``, if given, is added to the normalised
    affinity.
    """
    kind = SimilarityKind(kind)
    xs = x.data.tolist()
    wt, wp, wg = w.w_theta.tolist(), w.w_phi.tolist(), w.w_g.tolist()
    n = x.hw
    theta = [_project(xi, wt) for xi in xs]
    phi = [_project(xi, wp) for xi in xs]
    g = [_project(xi, wg) for xi in xs]
    ldense = None if l_dense is None else np.asarray(l_dense).tolist()
    out = np.zeros((n, w.c_g))
    for i in range(n):
        sims = [sum(a * b for a, b in zip(theta[i], phi[j])) for j in range(n)]
        if kind is SimilarityKind.EMBEDDED_GAUSSIAN:
            top = max(sims)
            f = [math.exp(s - top) for s in sims]
            z = sum(f)
        else:
            f = sims
            z = float(n) if Normalization(normalization) is Normalization.ONE_OVER_HW else 1.0
        for j in range(n):
            fij = f[j] / z
            if ldense is not None:
                fij += ldense[i][j]
            for c in range(w.c_g):
                out[i, c] += fij * g[j][c]
    return out


def block_loss(
    x: np.ndarray,
    w: ModuleWeights,
    e_hat: np.ndarray | None,
    upstream: np.ndarray,
    normalization: Normalization = Normalization.NONE,
) -> float:
    """``<upstream, z>`` for the dot-product block, written in dense form."""
    theta = x @ w.w_theta
    phi = x @ w.w_phi
    g = x @ w.w_g
    f = theta @ phi.T
    if Normalization(normalization) is Normalization.ONE_OVER_HW:
        f = f / x.shape[0]
    if e_hat is not None:
        f = f + e_hat @ e_hat.T
    z = (f @ g) @ w.w_out + x
    return float(np.sum(upstream * z))


def finite_difference_gradients(
    loss: Callable[[np.ndarray, ModuleWeights], float],
    x: np.ndarray,
    w: ModuleWeights,
    step: float = 1e-5,
) -> dict[str, np.ndarray]:
    """Central differences of ``loss(x, w)`` w.r.t. ``x`` and each weight."""
    params = {
        "x": x,
        "w_theta": w.w_theta,
        "w_phi": w.w_phi,
        "w_g": w.w_g,
        "w_out": w.w_out,
    }
    grads = {}
    for name, value in params.items():
        grad = np.zeros_like(value)
        for idx in np.ndindex(value.shape):
            vals = []
            for sign in (1.0, -1.0):
                bumped = value.copy()
                bumped[idx] += sign * step
                if name == "x":
                    vals.append(loss(bumped, w))
                else:
                    vals.append(loss(x, w.replace(**{name: bumped})))
            grad[idx] = (vals[0] - vals[1]) / (2.0 * step)
        grads[name] = grad
    return grads


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1.0) -> float:
    """Largest entrywise ``|a - n| / max(|a|, |n|, floor)``."""
    a = np.asarray(analytic)
    n = np.asarray(numeric)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom, initial=0.0))
