"""Small dense constrained least-squares solvers.

``nnls`` is the Lawson-Hanson active-set method.  ``lsi_homogeneous``
solves ``min ||M x - g||`` subject to ``C x <= 0`` by the classical
reduction to a least-distance problem whose dual is again an NNLS.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSystemError, InvalidArgumentError, SolverFailure


@dataclass
class NNLSResult:
    x: np.ndarray
    residual_norm: float
    gradient: np.ndarray  # A^T (A x - b)
    iterations: int


def _ls_on(A, b, cols):
    sol, *_ = np.linalg.lstsq(A[:, cols], b, rcond=None)
    return sol


def nnls(A, b, tol=None, max_iter=None) -> NNLSResult:
    """Minimise ``||A x - b||_2`` subject to ``x >= 0``.

    Parameters
    ----------
    A : (m, n) array_like
    b : (m,) array_like
    tol : float, optional
        Dual feasibility tolerance; a variable leaves the active set only if
        its negative gradient exceeds ``tol``.  Defaults to a multiple of
        machine precision scaled by ``||A|| ||b||``.
    max_iter : int, optional
        Cap on outer iterations (default ``3 n``).

    Raises
    ------
    SolverFailure
        When the iteration cap is reached before the KKT conditions hold.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2 or b.shape != (A.shape[0],):
        raise InvalidArgumentError("nnls needs A of shape (m, n) and b of shape (m,)")
    m, n = A.shape
    if max_iter is None:
        max_iter = max(3 * n, 30)
    if tol is None:
        tol = 10 * np.finfo(float).eps * max(m, n) * np.linalg.norm(A, 1) * max(np.linalg.norm(b), 1e-300)

    x = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    w = A.T @ b
    it = 0
    while (~passive).any() and np.max(np.where(passive, -np.inf, w)) > tol:
        it += 1
        if it > max_iter:
            raise SolverFailure("nnls: iteration cap reached",
                                {"iterations": it, "x": x, "max_dual": float(np.max(w[~passive]))})
        j = int(np.argmax(np.where(passive, -np.inf, w)))
        passive[j] = True
        cols = np.flatnonzero(passive)
        s = np.zeros(n)
        s[cols] = _ls_on(A, b, cols)
        # a freshly added variable with a nonpositive trial value means the
        # gradient test was spoiled by rounding; drop it and stop
        if s[j] <= 0:
            passive[j] = False
            w[j] = -np.inf
            break
        while np.any(s[cols] <= 0):
            neg = cols[s[cols] <= 0]
            ratios = x[neg] / (x[neg] - s[neg])
            k = int(np.argmin(ratios))
            x = x + ratios[k] * (s - x)
            x[neg[k]] = 0.0
            passive &= x > 0
            x[~passive] = 0.0
            cols = np.flatnonzero(passive)
            s = np.zeros(n)
            if cols.size:
                s[cols] = _ls_on(A, b, cols)
        x = s
        w = A.T @ (b - A @ x)
    r = A @ x - b
    return NNLSResult(x=x, residual_norm=float(np.linalg.norm(r)), gradient=A.T @ r, iterations=it)


@dataclass
class LSIResult:
    x: np.ndarray
    objective: float  # ||M x - g||^2
    max_violation: float  # max(C x), <= 0 when feasible
    multipliers: np.ndarray
    iterations: int


def lsi_homogeneous(M, g, C, feas_tol=1e-8, max_iter=100_000) -> LSIResult:
    """Minimise ``||M x - g||_2^2`` subject to ``C x <= 0`` (``M`` full column rank).

    With ``M = Q R`` and ``y = R x`` the problem becomes the projection of
    ``c = Q^T g`` onto the cone ``{y : D y <= 0}``, ``D = C R^{-1}``.  By the
    Moreau decomposition that projection is ``c - D^T lam`` where ``lam`` is
    the NNLS solution of ``min ||D^T lam - c||``, ``lam >= 0``.
    """
    M = np.asarray(M, dtype=float)
    g = np.asarray(g, dtype=float)
    C = np.atleast_2d(np.asarray(C, dtype=float))
    if C.shape[1] != M.shape[1]:
        raise InvalidArgumentError("constraint matrix has the wrong number of columns")
    Q, R = np.linalg.qr(M)
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag.min() <= 1e-13 * diag.max():
        raise DegenerateSystemError("least-squares matrix is rank deficient")
    c = Q.T @ g
    # normalised constraint rows keep the NNLS tolerances meaningful
    D = np.linalg.solve(R.T, C.T).T
    scale = np.linalg.norm(D, axis=1)
    scale[scale == 0] = 1.0
    Dn = D / scale[:, None]
    sol = nnls(Dn.T, c, tol=1e-14 * max(float(np.linalg.norm(c)), 1e-300), max_iter=max_iter)
    y = c - Dn.T @ sol.x
    x = np.linalg.solve(R, y)
    viol = C @ x
    max_violation = float(viol.max()) if viol.size else 0.0
    if max_violation > feas_tol:
        raise SolverFailure("constrained least squares: constraint violation above tolerance",
                            {"max_violation": max_violation, "iterations": sol.iterations})
    r = M @ x - g
    return LSIResult(x=x, objective=float(r @ r), max_violation=max_violation,
                     multipliers=sol.x / scale, iterations=sol.iterations)
