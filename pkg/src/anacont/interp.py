"""Interpolants of the Green's function along the imaginary axis.

Two constructions are provided:

* a pole-basis least-squares fit ``G(z) ~ 1/(2 pi) sum_k X_k / (z - x_k)``
  with real nodes outside ``(-eps, eps)``, valid on the whole segment
  ``[-b i, b i]`` when the spectrum has a gap (molecules);
* the reciprocal ``1 / H(z)`` of a quintic spline ``H`` through
  ``1 / G(z_n)``, valid on ``[a i, b i]`` (condensed matter).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import make_interp_spline

from .errors import (
    DegenerateSystemError,
    DomainError,
    InvalidArgumentError,
    PoleEvaluationError,
)
from .model import TWO_PI, MatsubaraDataset


def chebyshev_pole_nodes(epsilon: float, n_nodes: int) -> np.ndarray:
    """Nodes ``x_k = eps / cos(k pi / (n_nodes - 1))``, ``k = 0..n_nodes-1``.

    These are the images of the Chebyshev extreme points under ``x -> eps / x``,
    so they cluster near ``+-eps`` and spread out to large ``|x|``.
    """
    if not epsilon > 0:
        raise InvalidArgumentError("epsilon must be positive")
    if int(n_nodes) != n_nodes or n_nodes < 2 or n_nodes % 2:
        raise InvalidArgumentError(f"number of nodes must be even and >= 2, got {n_nodes}")
    n = int(n_nodes)
    k = np.arange(n)
    c = np.cos(k * math.pi / (n - 1))
    half = epsilon / c[: n // 2]
    # build the second half by reflection so the set is exactly antisymmetric
    return np.concatenate([half, -half[::-1]])


@dataclass(frozen=True)
class PoleBasisInterpolant:
    nodes: np.ndarray
    weights: np.ndarray
    epsilon: float
    b: float
    residual: float
    singular_values: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.nodes.size

    def __call__(self, z):
        return eval_pole_interpolant(self, z)


def pole_design_matrix(points, nodes) -> np.ndarray:
    """``C[n, k] = 1 / (2 pi (z_n - x_k))``."""
    return 1.0 / (TWO_PI * (np.asarray(points)[:, None] - np.asarray(nodes)[None, :]))


def fit_pole_weights(dataset: MatsubaraDataset, nodes, svd_cutoff: float = 1e-8,
                     epsilon: float | None = None) -> PoleBasisInterpolant:
    """Least-squares pole weights through a truncated pseudo-inverse.

    The weights are real, so the interpolant obeys ``G(conj z) = conj G(z)``
    and its values on the lower half of the segment mirror the data.  Columns
    of the stacked real design matrix are normalised before the SVD; singular
    values below ``svd_cutoff`` times the largest are discarded.
    """
    if not 0 < svd_cutoff < 1:
        raise InvalidArgumentError("svd_cutoff must lie in (0, 1)")
    nodes = np.asarray(nodes, dtype=float)
    if epsilon is None:
        epsilon = float(np.min(np.abs(nodes)))
    C = pole_design_matrix(dataset.points, nodes)
    g = dataset.samples
    A = np.vstack([C.real, C.imag])
    rhs = np.concatenate([g.real, g.imag])
    scale = np.linalg.norm(A, axis=0)
    if not np.all(scale > 0):
        raise DegenerateSystemError("pole-basis design matrix has a zero column")
    U, s, Vh = np.linalg.svd(A / scale, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        raise DegenerateSystemError("pole-basis design matrix is zero")
    keep = s >= svd_cutoff * s[0]
    X = (Vh[keep].T @ ((U[:, keep].T @ rhs) / s[keep])) / scale
    residual = float(np.linalg.norm(C @ X - g))
    return PoleBasisInterpolant(nodes=nodes, weights=X, epsilon=float(epsilon),
                                b=dataset.b, residual=residual, singular_values=s)


def eval_pole_interpolant(interp: PoleBasisInterpolant, z):
    zz = np.asarray(z, dtype=complex)
    if np.any(np.abs(zz) > 2 * interp.b):
        raise DomainError("pole-basis interpolant is not evaluated beyond twice the segment length")
    if np.any(np.abs(zz.imag) > interp.b * (1 + 1e-12)) or np.any(np.abs(zz.real) > 1e-12 * interp.b):
        warnings.warn("evaluating pole-basis interpolant off the segment [-bi, bi]", stacklevel=2)
    diff = zz[..., None] - interp.nodes
    if np.any(diff == 0):
        raise PoleEvaluationError("evaluation point coincides with an interpolation node")
    out = (interp.weights / diff).sum(axis=-1) / TWO_PI
    return out[()] if out.ndim == 0 else out


@dataclass(frozen=True)
class ReciprocalSplineInterpolant:
    knots: np.ndarray
    h_values: np.ndarray
    order: int
    a: float
    b: float
    _re: object
    _im: object

    def h(self, y):
        """Spline approximation of ``1 / G(i y)``."""
        return self._re(y) + 1j * self._im(y)

    def __call__(self, z):
        return eval_reciprocal_interpolant(self, z)


def fit_reciprocal_spline(dataset: MatsubaraDataset, order: int = 5) -> ReciprocalSplineInterpolant:
    """Interpolating spline of degree ``order`` through ``H(z_n) = 1 / G(z_n)``.

    Real and imaginary parts are splined independently as functions of
    ``y = Im z`` with not-a-knot end conditions.
    """
    if int(order) != order or order < 1:
        raise InvalidArgumentError(f"spline order must be a positive integer, got {order}")
    if dataset.N < order + 1:
        raise InvalidArgumentError(f"degree-{order} spline needs at least {order + 1} points, got {dataset.N}")
    g = dataset.samples
    if np.any(g == 0):
        raise PoleEvaluationError("zero sample")
    y = dataset.points.imag.copy()
    h = 1.0 / g
    re = make_interp_spline(y, h.real, k=int(order))
    im = make_interp_spline(y, h.imag, k=int(order))
    return ReciprocalSplineInterpolant(knots=y, h_values=h, order=int(order),
                                       a=dataset.a, b=dataset.b, _re=re, _im=im)


def eval_reciprocal_interpolant(interp: ReciprocalSplineInterpolant, z):
    zz = np.asarray(z, dtype=complex)
    y = zz.imag
    slack = 1e-12 * interp.b
    if np.any(np.abs(zz.real) > slack) or np.any(y < interp.a - slack) or np.any(y > interp.b + slack):
        raise DomainError("reciprocal spline is only defined on the segment [ai, bi]")
    y = np.clip(y, interp.a, interp.b)
    h = interp.h(y)
    if np.any(h == 0):
        raise PoleEvaluationError("spline of 1/G vanishes")
    out = 1.0 / h
    return out[()] if out.ndim == 0 else out
