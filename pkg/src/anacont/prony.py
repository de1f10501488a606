"""Fourier coefficients on the unit circle and Prony pole extraction.

For a function ``G(t)`` analytic outside the unit disk apart from simple
poles ``t_j`` and vanishing like ``1/t`` at infinity, the Fourier
coefficients ``G_k`` with ``k >= 1`` form the exponential sum
``-sum_j T_j t_j^{-(k+1)}``.  Its Hankel matrix has rank equal to the number
of poles, and any null vector ``p`` of the ``(d+1)``-column Hankel matrix
defines a polynomial whose roots are the ``1/t_j``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import InvalidArgumentError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FourierCoefficients:
    """``G_k`` for ``k = -N_s/2 .. N_s/2 - 1``, stored in that order."""

    values: np.ndarray

    @property
    def n_samples(self) -> int:
        return self.values.size

    def __getitem__(self, k):
        """Coefficient (or array of coefficients) with index ``k``."""
        k = np.asarray(k)
        half = self.n_samples // 2
        if np.any(k < -half) or np.any(k >= half):
            raise IndexError(f"Fourier index out of range [-{half}, {half})")
        return self.values[k + half]

    def positive(self, count: int) -> np.ndarray:
        """``[G_1, ..., G_count]``."""
        return self[np.arange(1, count + 1)]


def coeffs_from_samples(samples) -> FourierCoefficients:
    """Trapezoid-rule coefficients ``(1/N_s) sum_n g_n exp(-i k theta_n)`` by FFT."""
    g = np.asarray(samples, dtype=complex)
    n = g.size
    if n < 2 or n % 2:
        raise InvalidArgumentError(f"number of circle samples must be even and >= 2, got {n}")
    return FourierCoefficients(np.fft.fftshift(np.fft.fft(g)) / n)


def fourier_coeffs(sampler, n_samples: int) -> FourierCoefficients:
    """Sample ``sampler(theta)`` at ``theta_n = 2 pi n / n_samples`` and transform."""
    if int(n_samples) != n_samples or n_samples < 2 or n_samples % 2:
        raise InvalidArgumentError(f"number of circle samples must be even and >= 2, got {n_samples}")
    theta = 2.0 * np.pi * np.arange(int(n_samples)) / n_samples
    return coeffs_from_samples(sampler(theta))


def build_hankel(coeffs, n_cols: int, n_rows: int) -> np.ndarray:
    """``H[i, j] = G_{i+j+1}`` for ``i < n_rows``, ``j < n_cols``.

    ``coeffs`` is a :class:`FourierCoefficients` or a plain sequence
    ``[G_1, G_2, ...]``.
    """
    if n_cols < 1 or n_rows < 1:
        raise InvalidArgumentError("Hankel dimensions must be positive")
    need = n_cols + n_rows - 1
    if isinstance(coeffs, FourierCoefficients):
        if need >= coeffs.n_samples // 2:
            raise InvalidArgumentError(
                f"Hankel needs G_1..G_{need}, only {coeffs.n_samples // 2 - 1} positive coefficients")
        seq = coeffs.positive(need)
    else:
        seq = np.asarray(coeffs, dtype=complex)
        if seq.size < need:
            raise InvalidArgumentError(f"Hankel needs {need} coefficients, got {seq.size}")
    return scipy.linalg.hankel(seq[:n_rows], seq[n_rows - 1: need])


def detect_rank(singular_values, noise_floor: float):
    """Smallest ``d`` with ``s_{d+1} / s_1 < noise_floor``.

    Returns ``(d, saturated)``; ``saturated`` is True when no singular value
    falls below the floor and ``d`` is the full length.
    """
    s = np.asarray(singular_values, dtype=float)
    if s.size == 0:
        raise InvalidArgumentError("no singular values")
    if not 0 < noise_floor < 1:
        raise InvalidArgumentError("noise floor must lie in (0, 1)")
    if s[0] == 0:
        return 0, False
    below = np.flatnonzero(s / s[0] < noise_floor)
    if below.size == 0:
        return s.size, True
    return int(below[0]), False


def largest_gap_floor(singular_values) -> float:
    """Noise floor placed in the largest drop of the log singular-value profile."""
    s = np.asarray(singular_values, dtype=float)
    rel = s / s[0]
    rel = np.maximum(rel, np.finfo(float).tiny)
    logs = np.log10(rel)
    if logs.size < 2:
        return 0.5
    i = int(np.argmax(logs[:-1] - logs[1:]))
    return float(10 ** (0.5 * (logs[i] + logs[i + 1])))


def polynomial_roots(p, trim_tol: float = 1e-14) -> np.ndarray:
    """Roots of ``p[0] + p[1] t + ... + p[d] t^d`` via a balanced companion matrix."""
    p = np.asarray(p, dtype=complex)
    if p.size == 0:
        return np.zeros(0, dtype=complex)
    tol = trim_tol * np.max(np.abs(p))
    nz = np.flatnonzero(np.abs(p) > tol)
    if nz.size == 0:
        return np.zeros(0, dtype=complex)
    # trailing (high-order) zeros lower the degree; leading zeros are roots at 0
    n_zero_roots = int(nz[0])
    p = p[nz[0]: nz[-1] + 1]
    deg = p.size - 1
    roots = [np.zeros(n_zero_roots, dtype=complex)]
    if deg >= 1:
        comp = np.zeros((deg, deg), dtype=complex)
        comp[1:, :-1] = np.eye(deg - 1)
        comp[:, -1] = -p[:-1] / p[-1]
        bal, _ = scipy.linalg.matrix_balance(comp, permute=False)
        roots.append(scipy.linalg.eigvals(bal, overwrite_a=True, check_finite=False))
    return np.concatenate(roots)


def sort_poles(t) -> np.ndarray:
    """Deterministic order: by argument, then by modulus (exact ties by real, imaginary part)."""
    t = np.asarray(t, dtype=complex)
    if t.size == 0:
        return t
    arg = np.round(np.angle(t), 12)
    mod = np.abs(t)
    return t[np.lexsort((t.imag, t.real, mod, arg))]


@dataclass(frozen=True)
class PronyResult:
    d_max: int
    l: int
    noise_floor: float
    singular_values: np.ndarray
    rank: int
    saturated: bool
    poly_coeffs: np.ndarray
    exterior_poles: np.ndarray
    rejected_roots: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=complex))


def prony_poles(coeffs, d_max: int, l: int | None = None, noise_floor: float | None = None,
                tol_interior: float = 1e-3) -> PronyResult:
    """Recover the exterior poles encoded in ``G_1, G_2, ...``.

    Parameters
    ----------
    coeffs : FourierCoefficients or sequence
        Coefficients, either on the full FFT index range or as ``[G_1, ...]``.
    d_max : int
        Upper bound on the number of poles (columns of the Hankel matrix).
    l : int, optional
        Number of Hankel rows, at least ``d_max`` (default ``d_max``).
    noise_floor : float, optional
        Relative singular-value threshold for the rank.  When omitted the
        floor is placed in the largest gap of the singular-value profile.
    tol_interior : float
        Roots are kept only if ``|t| > 1 + tol_interior``.
    """
    if l is None:
        l = d_max
    if d_max < 1:
        raise InvalidArgumentError("d_max must be positive")
    if l < d_max:
        raise InvalidArgumentError(f"need l >= d_max, got l={l}, d_max={d_max}")
    H = build_hankel(coeffs, d_max, l)
    s = np.linalg.svd(H, compute_uv=False)
    if noise_floor is None:
        noise_floor = largest_gap_floor(s)
        log.warning("no noise level given; rank threshold set to %.3g from the singular-value gap",
                    noise_floor)
    d, saturated = detect_rank(s, noise_floor)
    if saturated:
        log.warning("Hankel rank saturated at d_max=%d; poles may be missed", d_max)
    if d == 0:
        empty = np.zeros(0, dtype=complex)
        return PronyResult(d_max, l, noise_floor, s, 0, saturated, np.ones(1, dtype=complex), empty, empty)

    # the (d+1)-column Hankel needs one coefficient more than the rank test
    Hd = build_hankel(coeffs, d + 1, l)
    _, _, Vh = np.linalg.svd(Hd)
    p = Vh[-1].conj()
    roots = polynomial_roots(p)
    with np.errstate(divide="ignore"):
        t = np.where(roots == 0, np.inf, 1.0 / roots)
    keep = np.isfinite(t) & (np.abs(t) > 1.0 + tol_interior)
    return PronyResult(
        d_max=d_max,
        l=l,
        noise_floor=float(noise_floor),
        singular_values=s,
        rank=d,
        saturated=saturated,
        poly_coeffs=p,
        exterior_poles=sort_poles(t[keep]),
        rejected_roots=sort_poles(roots[~keep]),
    )
