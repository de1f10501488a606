"""Conformal maps that unzip an imaginary-axis segment onto the unit circle.

Only the inverse maps ``t -> z`` are needed by the pipelines: sampling the
circle ``t = exp(i theta)`` traces the segment twice, and exterior poles
``|t| > 1`` are pulled back to the ``z`` plane.  The forward maps involve a
square-root branch and are deliberately left to the tests.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InvalidArgumentError


@dataclass(frozen=True)
class MoleculeMap:
    """``z = i b w``, ``w = (t + 1/t) / 2``: unzips ``[-b i, b i]``."""

    b: float

    def __post_init__(self):
        if not self.b > 0:
            raise InvalidArgumentError("b must be positive")

    def z_of_t(self, t):
        return mol_z_of_t(self, t)


@dataclass(frozen=True)
class CdmMap:
    """``z = -q i (w + 1)/(w - 1)``, ``w = r (t + 1/t) / 2``: unzips ``[a i, b i]``."""

    a: float
    b: float

    def __post_init__(self):
        if not 0 < self.a < self.b:
            raise InvalidArgumentError("need 0 < a < b")

    @property
    def q(self) -> float:
        return math.sqrt(self.a * self.b)

    @property
    def r(self) -> float:
        q = self.q
        return (self.b - q) / (self.b + q)

    def z_of_t(self, t):
        return cdm_z_of_t(self, t)


def _check_nonzero(t):
    if np.any(t == 0):
        raise InvalidArgumentError("t = 0 has no image")


def mol_z_of_t(m: MoleculeMap, t):
    t = np.asarray(t, dtype=complex)
    _check_nonzero(t)
    out = 0.5j * m.b * (t + 1.0 / t)
    return out[()] if out.ndim == 0 else out


def cdm_z_of_t(m: CdmMap, t):
    t = np.asarray(t, dtype=complex)
    _check_nonzero(t)
    w = 0.5 * m.r * (t + 1.0 / t)
    if np.any(w == 1):
        raise InvalidArgumentError("w = 1 is mapped to infinity")
    out = -1j * m.q * (w + 1.0) / (w - 1.0)
    return out[()] if out.ndim == 0 else out


def circle_angles(n_samples: int) -> np.ndarray:
    """Uniform angles ``2 pi n / n_samples``, ``n = 0..n_samples-1``."""
    if int(n_samples) != n_samples or n_samples < 2 or n_samples % 2:
        raise InvalidArgumentError(f"number of circle samples must be even and >= 2, got {n_samples}")
    return 2.0 * math.pi * np.arange(int(n_samples)) / n_samples


def circle_points(n_samples: int) -> np.ndarray:
    """``exp(i theta_n)`` with exact values at the four axis crossings."""
    theta = circle_angles(n_samples)
    t = np.exp(1j * theta)
    # exact cos/sin at multiples of pi/2 keep the pulled-back points on the segment
    quarter = n_samples // 4 if n_samples % 4 == 0 else None
    t[0] = 1.0
    t[n_samples // 2] = -1.0
    if quarter:
        t[quarter] = 1j
        t[3 * quarter] = -1j
    return t


def segment_samples(m, n_samples: int) -> np.ndarray:
    """Points ``z(exp(i theta_n))`` on the segment, symmetrised and forced onto the axis.

    ``z(e^{i theta}) = z(e^{-i theta})`` holds exactly for the returned array.
    """
    t = circle_points(n_samples)
    n = int(n_samples)
    # evaluate the upper half circle once and mirror it
    upper = t[: n // 2 + 1]
    if isinstance(m, MoleculeMap):
        zu = 1j * (m.b * upper.real)
    else:
        w = m.r * upper.real
        zu = 1j * (m.q * (1.0 + w) / (1.0 - w))
    z = np.empty(n, dtype=complex)
    z[: n // 2 + 1] = zu
    z[n // 2 + 1:] = zu[1: n // 2][::-1]
    return z


def pullback_pole(m, t_j):
    """Image in the ``z`` plane of an exterior pole ``t_j`` (``|t_j| > 1``)."""
    t = np.asarray(t_j, dtype=complex)
    if np.any(np.abs(t) <= 1):
        raise DomainError("only exterior points |t| > 1 correspond to poles off the segment")
    return m.z_of_t(t)
