"""Ground-truth spectral models, the Matsubara grid and synthetic data.

The Green's function of a nonnegative spectral function ``A`` is

    G(z) = 1/(2 pi) * integral A(x) / (z - x) dx,

and ``A(x) = -2 Im G(x + i0+)``.  Three kinds of spectra are supported:
finite sums of Dirac deltas (molecules), finite sums of lower half-plane
poles (quasi-particles) and Gaussian mixtures.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np
from scipy import special

from .errors import InvalidArgumentError, PoleEvaluationError

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class DeltaModel:
    """Spectral function ``sum_j A_j delta(x - xi_j)`` with real locations."""

    locations: tuple
    weights: tuple

    def __post_init__(self):
        loc = tuple(float(x) for x in self.locations)
        wts = tuple(float(a) for a in self.weights)
        if not loc or len(loc) != len(wts):
            raise InvalidArgumentError("need matching, non-empty locations and weights")
        if any(a <= 0 for a in wts):
            raise InvalidArgumentError("delta weights must be strictly positive")
        if any(x == 0 for x in loc):
            raise InvalidArgumentError("delta locations must be bounded away from zero")
        if len(set(loc)) != len(loc):
            raise InvalidArgumentError("delta locations must be distinct")
        object.__setattr__(self, "locations", loc)
        object.__setattr__(self, "weights", wts)

    @property
    def gap(self) -> float:
        """Half-width of the largest symmetric interval around 0 free of atoms."""
        return min(abs(x) for x in self.locations)

    @property
    def total_mass(self) -> float:
        return sum(self.weights)


@dataclass(frozen=True)
class PoleModel:
    """Quasi-particle model ``G(z) = 1/(2 pi) sum_j A_j / (z - xi_j)``, Im xi_j < 0."""

    locations: tuple
    weights: tuple

    def __post_init__(self):
        loc = tuple(complex(x) for x in self.locations)
        wts = tuple(complex(a) for a in self.weights)
        if not loc or len(loc) != len(wts):
            raise InvalidArgumentError("need matching, non-empty locations and weights")
        if any(x.imag >= 0 for x in loc):
            raise InvalidArgumentError("quasi-particle poles must lie in the open lower half-plane")
        if len(set(loc)) != len(loc):
            raise InvalidArgumentError("pole locations must be distinct")
        object.__setattr__(self, "locations", loc)
        object.__setattr__(self, "weights", wts)

    @property
    def total_mass(self) -> complex:
        return sum(self.weights)


@dataclass(frozen=True)
class GaussianMixture:
    """``A(x) = sum_j m_j * normal_pdf(x; mu_j, v_j)``."""

    centers: tuple
    variances: tuple
    masses: tuple

    def __post_init__(self):
        c = tuple(float(x) for x in self.centers)
        v = tuple(float(x) for x in self.variances)
        m = tuple(float(x) for x in self.masses)
        if not c or not (len(c) == len(v) == len(m)):
            raise InvalidArgumentError("need matching, non-empty centers/variances/masses")
        if any(x <= 0 for x in v):
            raise InvalidArgumentError("variances must be positive")
        if any(x <= 0 for x in m):
            raise InvalidArgumentError("masses must be positive")
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "variances", v)
        object.__setattr__(self, "masses", m)

    @property
    def total_mass(self) -> float:
        return sum(self.masses)

    def density(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for mu, v, m in zip(self.centers, self.variances, self.masses):
            out += m * np.exp(-((x - mu) ** 2) / (2 * v)) / math.sqrt(2 * math.pi * v)
        return out


SpectralModel = Union[DeltaModel, PoleModel, GaussianMixture]


@dataclass(frozen=True)
class MatsubaraDataset:
    beta: float
    points: np.ndarray
    samples: np.ndarray
    noise_sigma: Optional[float] = None
    seed: Optional[int] = None
    model: Optional[dict] = field(default=None, compare=False)

    def __post_init__(self):
        pts = np.array(self.points, dtype=complex)
        smp = np.array(self.samples, dtype=complex)
        if pts.ndim != 1 or pts.shape != smp.shape or pts.size == 0:
            raise InvalidArgumentError("points and samples must be equal-length 1-d arrays")
        if not np.array_equal(pts, matsubara_grid(self.beta, pts.size)):
            raise InvalidArgumentError("points are not the Matsubara grid for this beta")
        pts.setflags(write=False)
        smp.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "samples", smp)

    @property
    def N(self) -> int:
        return self.points.size

    @property
    def a(self) -> float:
        """Imaginary part of the first Matsubara point, ``pi / beta``."""
        return math.pi / self.beta

    @property
    def b(self) -> float:
        """Imaginary part of the last Matsubara point, ``(2N - 1) pi / beta``."""
        return (2 * self.N - 1) * math.pi / self.beta


def matsubara_grid(beta: float, N: int) -> np.ndarray:
    """Return ``z_n = (2n - 1) pi i / beta`` for ``n = 1..N``."""
    if not beta > 0:
        raise InvalidArgumentError(f"beta must be positive, got {beta}")
    if int(N) != N or N < 1:
        raise InvalidArgumentError(f"N must be a positive integer, got {N}")
    n = np.arange(1, int(N) + 1)
    return 1j * ((2 * n - 1) * math.pi / beta)


def eval_green_rational(model, z):
    """Evaluate ``1/(2 pi) sum_j A_j / (z - xi_j)`` for a delta or pole model.

    ``z`` may be a scalar or an array.
    """
    zz = np.asarray(z, dtype=complex)
    loc = np.asarray(model.locations, dtype=complex)
    wts = np.asarray(model.weights, dtype=complex)
    diff = zz[..., None] - loc
    if np.any(diff == 0):
        raise PoleEvaluationError("evaluation point coincides with a pole")
    out = (wts / diff).sum(axis=-1) / TWO_PI
    return out[()] if out.ndim == 0 else out


# 20-point Gauss-Legendre rule on [-1, 1]
_GL_X, _GL_W = np.polynomial.legendre.leggauss(20)


def _panel(f, lo, hi):
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    return half * np.dot(_GL_W, f(mid + half * _GL_X))


def _adaptive_gl(f, lo, hi, rtol, max_panels=20000):
    """Adaptive Gauss-Legendre quadrature of a complex integrand on [lo, hi]."""
    # a coarse pass fixes the absolute scale used by the local error test
    coarse = np.linspace(lo, hi, 17)
    scale = sum(abs(_panel(f, u, v)) for u, v in zip(coarse[:-1], coarse[1:]))
    scale = max(scale, np.finfo(float).tiny)
    total = 0.0
    stack = [(u, v, _panel(f, u, v)) for u, v in zip(coarse[:-1], coarse[1:])]
    panels = 0
    while stack:
        u, v, whole = stack.pop()
        m = 0.5 * (u + v)
        left, right = _panel(f, u, m), _panel(f, m, v)
        panels += 1
        if abs(left + right - whole) <= rtol * scale * (v - u) / (hi - lo) or panels > max_panels:
            total += left + right
        else:
            stack.append((u, m, left))
            stack.append((m, v, right))
    return total


def gaussian_cauchy(mu, var, z, rtol=1e-12):
    """``integral normal_pdf(x; mu, var) / (z - x) dx`` by adaptive quadrature.

    Integrates over ``[mu - 10 sqrt(var), mu + 10 sqrt(var)]``; the neglected
    tails are below ``1e-22`` of the mass.
    """
    s = math.sqrt(var)
    norm = 1.0 / math.sqrt(2 * math.pi * var)

    def integrand(x):
        return norm * np.exp(-((x - mu) ** 2) / (2 * var)) / (z - x)

    return _adaptive_gl(integrand, mu - 10 * s, mu + 10 * s, rtol)


def gaussian_cauchy_faddeeva(mu, var, z):
    """Closed form of :func:`gaussian_cauchy` through the Faddeeva function."""
    z = np.asarray(z, dtype=complex)
    s2 = math.sqrt(2 * var)
    upper = np.where(z.imag >= 0, z, np.conj(z))
    val = -1j * math.sqrt(math.pi) / s2 * special.wofz((upper - mu) / s2)
    out = np.where(z.imag >= 0, val, np.conj(val))
    return out[()] if out.ndim == 0 else out


def eval_green_gaussian(model: GaussianMixture, z, method="quadrature"):
    """Green's function of a Gaussian mixture at ``z`` (``Im z != 0``).

    ``method`` is ``"quadrature"`` (default) or ``"faddeeva"``; the two agree
    to better than 1e-10 relative and are cross-checked in the tests.
    """
    zz = np.asarray(z, dtype=complex)
    if np.any(zz.imag == 0):
        raise InvalidArgumentError("Gaussian Green's function is not evaluated on the real axis")
    out = np.zeros(zz.shape, dtype=complex)
    for mu, v, m in zip(model.centers, model.variances, model.masses):
        if method == "quadrature":
            vals = np.array([gaussian_cauchy(mu, v, zi) for zi in zz.ravel()]).reshape(zz.shape)
        elif method == "faddeeva":
            vals = gaussian_cauchy_faddeeva(mu, v, zz)
        else:
            raise InvalidArgumentError(f"unknown method {method!r}")
        out += m * vals
    out /= TWO_PI
    return out[()] if out.ndim == 0 else out


def eval_green(model: SpectralModel, z):
    if isinstance(model, GaussianMixture):
        return eval_green_gaussian(model, z)
    return eval_green_rational(model, z)


def spectral_curve(model: SpectralModel, x, eta=0.0):
    """Ground-truth spectral function on the real line.

    With ``eta > 0`` this is ``-2 Im G(x + i eta)``, the broadened curve the
    reconstructions are compared against.  With ``eta == 0`` the exact density
    is returned for pole and Gaussian models; delta models need ``eta > 0``.
    """
    x = np.asarray(x, dtype=float)
    if eta > 0:
        return -2.0 * np.imag(eval_green(model, x + 1j * eta))
    if isinstance(model, GaussianMixture):
        return model.density(x)
    if isinstance(model, PoleModel):
        return -2.0 * np.imag(eval_green_rational(model, x.astype(complex)))
    raise InvalidArgumentError("a delta spectrum needs eta > 0 to be drawn as a curve")


def average_magnitude(samples) -> float:
    """Root-mean-square magnitude ``(sum |G_n|^2 / N)^(1/2)``."""
    g = np.asarray(samples, dtype=complex).ravel()
    if g.size == 0:
        raise InvalidArgumentError("average magnitude of an empty sample list")
    return float(np.sqrt(np.mean(np.abs(g) ** 2)))


def complex_normal(rng: np.random.Generator, size) -> np.ndarray:
    """Standard complex normals: independent N(0, 1/2) real and imaginary parts."""
    return (rng.standard_normal(size) + 1j * rng.standard_normal(size)) / math.sqrt(2.0)


def make_rng(seed: int) -> np.random.Generator:
    """The package's reproducible generator: PCG64 seeded with ``seed``."""
    return np.random.Generator(np.random.PCG64(seed))


def add_noise(dataset: MatsubaraDataset, sigma: float, seed: int) -> MatsubaraDataset:
    """Return a copy with ``G_n <- G_n + sigma * M * eta_n`` applied."""
    if not sigma >= 0:
        raise InvalidArgumentError(f"sigma must be nonnegative, got {sigma}")
    g = dataset.samples
    if sigma > 0:
        scale = sigma * average_magnitude(g)
        g = g + scale * complex_normal(make_rng(seed), g.size)
    return replace(dataset, samples=g.copy(), noise_sigma=float(sigma), seed=int(seed))


def synthesize(model: SpectralModel, beta: float, N: int, sigma: float = 0.0, seed: int = 0) -> MatsubaraDataset:
    """Exact Matsubara samples of ``model`` with the multiplicative-RMS noise added."""
    z = matsubara_grid(beta, N)
    clean = MatsubaraDataset(beta=float(beta), points=z, samples=eval_green(model, z),
                             model=model_to_dict(model))
    return add_noise(clean, sigma, seed)


# -- descriptors -------------------------------------------------------------

def model_to_dict(model: SpectralModel) -> dict:
    if isinstance(model, DeltaModel):
        return {"kind": "delta", "locations": list(model.locations), "weights": list(model.weights)}
    if isinstance(model, PoleModel):
        return {
            "kind": "poles",
            "locations": [[x.real, x.imag] for x in model.locations],
            "weights": [[a.real, a.imag] for a in model.weights],
        }
    if isinstance(model, GaussianMixture):
        return {
            "kind": "gaussians",
            "centers": list(model.centers),
            "variances": list(model.variances),
            "masses": list(model.masses),
        }
    raise InvalidArgumentError(f"not a spectral model: {model!r}")


def _as_complex(v):
    if isinstance(v, (list, tuple)):
        return complex(v[0], v[1])
    return complex(v)


def model_from_dict(spec: dict) -> SpectralModel:
    """Inverse of :func:`model_to_dict`; also accepts the named reference models.

    Complex numbers are ``[re, im]`` pairs (plain reals are accepted too).
    Named models: ``{"kind": "reference-molecule", "epsilon": 0.1}``,
    ``{"kind": "reference-quasiparticles"}`` and ``{"kind": "reference-gaussians"}``.
    """
    try:
        kind = spec["kind"]
        if kind == "delta":
            return DeltaModel(spec["locations"], spec["weights"])
        if kind == "poles":
            return PoleModel([_as_complex(v) for v in spec["locations"]],
                             [_as_complex(v) for v in spec["weights"]])
        if kind == "gaussians":
            return GaussianMixture(spec["centers"], spec["variances"], spec["masses"])
        if kind == "reference-molecule":
            return reference_molecule_model(float(spec.get("epsilon", 0.1)))
        if kind == "reference-quasiparticles":
            return reference_quasiparticle_model()
        if kind == "reference-gaussians":
            return reference_gaussian_model()
    except (KeyError, TypeError) as exc:
        raise InvalidArgumentError(f"malformed model descriptor: {exc}") from exc
    raise InvalidArgumentError(f"unknown model kind {kind!r}")


# -- reference models of the experiments --------------------------------------

def reference_molecule_model(epsilon: float = 0.1) -> DeltaModel:
    """Three atoms with gap ``epsilon`` (the innermost atom sits at ``-epsilon``)."""
    if not epsilon > 0:
        raise InvalidArgumentError("epsilon must be positive")
    locations = (-1.0, -epsilon, 0.8)
    weights = np.array([0.4, 0.3, 0.3]) * TWO_PI
    return DeltaModel(locations, tuple(weights))


def reference_quasiparticle_model() -> PoleModel:
    """Five equal quasi-particles at ``k - 0.03i``, ``k = -2..2``, total mass 2 pi."""
    return PoleModel(tuple(k - 0.03j for k in range(-2, 3)), (TWO_PI / 5,) * 5)


def reference_gaussian_model() -> GaussianMixture:
    """Five equal Gaussians centred at ``-2..2`` with variance 1/200, total mass 2 pi."""
    return GaussianMixture(tuple(float(k) for k in range(-2, 3)), (1 / 200,) * 5, (TWO_PI / 5,) * 5)
