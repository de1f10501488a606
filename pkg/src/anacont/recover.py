"""Weight fitting, spectral evaluation and the two end-to-end pipelines."""
from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import interp as _interp
from . import prony as _prony
from . import unzip as _unzip
from .errors import AnacontError, InvalidArgumentError, SolverFailure, StageError
from .model import TWO_PI, MatsubaraDataset
from .solvers import lsi_homogeneous, nnls

log = logging.getLogger(__name__)


@dataclass
class PipelineConfig:
    """Every tunable of the two pipelines.  ``None`` means "use the default rule".

    ==============  =========================================================
    epsilon         spectral gap; required by the molecule pipeline
    n_nodes         pole-basis size N_I (default N rounded up to even, <= 256)
    svd_cutoff      relative singular-value cutoff of the pole-basis fit
                    (default max(1e-8, sigma / 10))
    spline_order    degree of the reciprocal spline
    d_max           Hankel columns (upper bound on the pole count)
    l               Hankel rows (default max(d_max, 120) for molecules,
                    d_max for the condensed case)
    n_samples       circle samples N_s (default: power of two >= 64 b/eps or
                    64 sqrt(b/a), and >= 2 (d_max + l))
    noise_floor     rank threshold; when sigma is known the default is
                    max(sigma, 1e-5) for molecules and max(sigma, 1e-10) for
                    the condensed case, else the largest singular-value gap
    tol_interior    roots kept only if |t| > 1 + tol_interior
    eta             broadening of the spectral curve
    grid_min/max    constraint grid bounds (default from the recovered poles)
    grid_count      uniform constraint grid size (default spacing
                    min|Im xi| / 4, <= 20001)
    prune_rel       molecule atoms below prune_rel * max weight are dropped
    weak_rel        condensed poles with |A_j| < weak_rel * max |A| are
                    dropped and the weights refitted once
    gap_keep        molecule poles with |xi| < gap_keep * epsilon are dropped
    upper_poles     condensed pullbacks above the real axis: "reflect" to the
                    conjugate or "discard"
    feas_tol        allowed constraint violation of the condensed fit
    max_iter        iteration cap of the constrained solvers
    ==============  =========================================================
    """

    epsilon: Optional[float] = None
    n_nodes: Optional[int] = None
    svd_cutoff: Optional[float] = None
    spline_order: int = 5
    d_max: int = 10
    l: Optional[int] = None
    n_samples: Optional[int] = None
    noise_floor: Optional[float] = None
    tol_interior: float = 1e-3
    eta: float = 0.01
    grid_min: Optional[float] = None
    grid_max: Optional[float] = None
    grid_count: Optional[int] = None
    prune_rel: float = 1e-8
    weak_rel: float = 1e-2
    gap_keep: float = 0.5
    upper_poles: str = "reflect"
    feas_tol: float = 1e-8
    max_iter: int = 100_000

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise InvalidArgumentError(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)

    def validate(self):
        if self.d_max < 1:
            raise InvalidArgumentError("d_max must be positive")
        if self.l is not None and self.l < self.d_max:
            raise InvalidArgumentError("l must be >= d_max")
        if self.n_samples is not None and (self.n_samples % 2 or self.n_samples < 4):
            raise InvalidArgumentError("n_samples must be even and >= 4")
        if not self.eta > 0:
            raise InvalidArgumentError("eta must be positive")
        for name in ("tol_interior", "feas_tol"):
            if not getattr(self, name) > 0:
                raise InvalidArgumentError(f"{name} must be positive")
        if self.svd_cutoff is not None and not 0 < self.svd_cutoff < 1:
            raise InvalidArgumentError("svd_cutoff must lie in (0, 1)")
        if self.noise_floor is not None and not 0 < self.noise_floor < 1:
            raise InvalidArgumentError("noise_floor must lie in (0, 1)")
        if self.upper_poles not in ("reflect", "discard"):
            raise InvalidArgumentError("upper_poles must be 'reflect' or 'discard'")
        if self.gap_keep < 0 or self.prune_rel < 0 or not 0 <= self.weak_rel < 1:
            raise InvalidArgumentError("gap_keep and prune_rel must be nonnegative, weak_rel in [0, 1)")

    def rows(self, kind: str = "condensed") -> int:
        """Hankel row count for the given pipeline kind."""
        if self.l is not None:
            return self.l
        return max(self.d_max, 120) if kind == "molecule" else self.d_max


@dataclass
class Reconstruction:
    kind: str  # "molecule" or "condensed"
    poles: np.ndarray
    weights: np.ndarray
    residual: float
    eta: Optional[float] = None
    max_violation: Optional[float] = None
    prony: Optional[_prony.PronyResult] = None
    diagnostics: dict = field(default_factory=dict)

    def spectral(self, x, eta=None):
        return eval_spectral(self, x, self.eta if eta is None else eta)


def _power_of_two_at_least(x: float) -> int:
    return 1 << max(1, math.ceil(math.log2(max(x, 2.0))))


def default_n_samples(kind: str, dataset: MatsubaraDataset, config: PipelineConfig) -> int:
    floor = 2 * (config.d_max + config.rows(kind) + 1)
    if kind == "molecule":
        need = 64 * dataset.b / config.epsilon
    else:
        need = 64 * math.sqrt(dataset.b / dataset.a)
    return _power_of_two_at_least(max(floor, need))


def default_noise_floor(kind: str, dataset: MatsubaraDataset) -> Optional[float]:
    """Rank threshold from the recorded noise level, or None if unknown.

    The molecule threshold never drops below the interpolation error of the
    pole-basis fit near ``z = 0`` (about 1e-5 relative).
    """
    if dataset.noise_sigma is None:
        return None
    low = 1e-5 if kind == "molecule" else 1e-10
    return min(max(dataset.noise_sigma, low), 0.5)


def default_svd_cutoff(dataset: MatsubaraDataset) -> float:
    sigma = dataset.noise_sigma or 0.0
    return min(max(1e-8, sigma / 10), 0.5)


# -- weight fits ---------------------------------------------------------------

def _stacked(C, g):
    return np.vstack([C.real, C.imag]), np.concatenate([g.real, g.imag])


def fit_molecule_weights(dataset: MatsubaraDataset, poles, prune_rel: float = 0.0) -> Reconstruction:
    """Nonnegative weights of real poles fitted to the Matsubara samples.

    With ``prune_rel > 0`` atoms whose weight is below ``prune_rel`` times the
    largest weight are removed and the fit is repeated once.
    """
    poles = np.asarray(poles, dtype=float)
    if poles.size == 0:
        raise InvalidArgumentError("no poles to fit")
    g = dataset.samples
    A, rhs = _stacked(_interp.pole_design_matrix(dataset.points, poles), g)
    sol = nnls(A, rhs)
    w = sol.x
    if prune_rel > 0 and w.max() > 0:
        keep = w >= prune_rel * w.max()
        if not keep.all():
            poles = poles[keep]
            A = A[:, keep]
            sol = nnls(A, rhs)
            w = sol.x
    return Reconstruction(kind="molecule", poles=poles.astype(complex), weights=w,
                          residual=sol.residual_norm ** 2,
                          diagnostics={"kkt_gradient": sol.gradient})


def default_constraint_grid(poles, grid_min=None, grid_max=None, grid_count=None) -> np.ndarray:
    """Constraint abscissae for the positivity condition.

    A uniform grid covers the poles with margin ``5 max|Im xi|`` at a quarter
    of ``min|Im xi|`` spacing (at most 20001 points).  Unless ``grid_min`` or
    ``grid_max`` is given, geometrically spaced points extend it out to
    ``1e6`` times the margin on that side so the tails stay nonnegative too.
    """
    poles = np.asarray(poles, dtype=complex)
    widths = np.abs(poles.imag)
    margin = 5 * float(widths.max())
    lo = float(poles.real.min() - margin) if grid_min is None else float(grid_min)
    hi = float(poles.real.max() + margin) if grid_max is None else float(grid_max)
    if not hi > lo:
        raise InvalidArgumentError("constraint grid needs grid_min < grid_max")
    if grid_count is None:
        step = max(float(widths.min()), 1e-12) / 4
        grid_count = min(20001, max(2, int(math.ceil((hi - lo) / step)) + 1))
    parts = [np.linspace(lo, hi, int(grid_count))]
    tail = margin * np.logspace(-1, 6, 57)
    if grid_min is None:
        parts.insert(0, (lo - tail)[::-1])
    if grid_max is None:
        parts.append(hi + tail)
    return np.concatenate(parts)


def fit_cdm_weights(dataset: MatsubaraDataset, poles, grid=None, feas_tol: float = 1e-8,
                    max_iter: int = 100_000) -> Reconstruction:
    """Complex weights of lower half-plane poles with a positive spectral curve.

    Minimises ``sum_n |G_n - 1/(2 pi) sum_j A_j / (z_n - xi_j)|^2`` subject to
    ``Im sum_j A_j / (x_m - xi_j) <= 0`` on the grid ``x_m``.
    """
    poles = np.asarray(poles, dtype=complex)
    if poles.size == 0:
        raise InvalidArgumentError("no poles to fit")
    if np.any(poles.imag >= 0):
        raise InvalidArgumentError("quasi-particle poles must lie in the lower half-plane")
    grid = default_constraint_grid(poles) if grid is None else np.asarray(grid, dtype=float)
    C = _interp.pole_design_matrix(dataset.points, poles)
    # unknowns are [Re A, Im A]; C A = (Cr + i Ci)(ar + i ai)
    M = np.block([[C.real, -C.imag], [C.imag, C.real]])
    rhs = np.concatenate([dataset.samples.real, dataset.samples.imag])
    K = 1.0 / (grid[:, None] - poles[None, :])
    cons = np.hstack([K.imag, K.real])
    try:
        sol = lsi_homogeneous(M, rhs, cons, feas_tol=feas_tol, max_iter=max_iter)
    except SolverFailure as exc:
        exc.diagnostics.setdefault("n_constraints", grid.size)
        raise
    J = poles.size
    weights = sol.x[:J] + 1j * sol.x[J:]
    return Reconstruction(kind="condensed", poles=poles, weights=weights, residual=sol.objective,
                          max_violation=sol.max_violation,
                          diagnostics={"constraint_grid": (float(grid[0]), float(grid[-1]), grid.size),
                                       "active_constraints": int(np.count_nonzero(sol.multipliers))})


def eval_spectral(recon: Reconstruction, x, eta: float):
    """``-2 Im 1/(2 pi) sum_j A_j / (x + i eta - xi_j)``."""
    if not eta > 0:
        raise InvalidArgumentError(f"eta must be positive, got {eta}")
    x = np.asarray(x, dtype=float)
    if recon.poles.size == 0:
        return np.zeros_like(x)
    terms = recon.weights / (x[..., None] + 1j * eta - recon.poles)
    out = -2.0 * terms.sum(axis=-1).imag / TWO_PI
    return out[()] if out.ndim == 0 else out


# -- pipelines -------------------------------------------------------------------

def _dedupe(xi, tol=1e-9):
    out = []
    for p in xi:
        if all(abs(p - q) > tol * max(1.0, abs(q)) for q in out):
            out.append(p)
    return np.asarray(out, dtype=complex)


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except AnacontError as exc:
        raise StageError(name, exc) from exc
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        raise StageError(name, exc) from exc


def _empty(kind, dataset, eta, pr, diagnostics):
    g = dataset.samples
    return Reconstruction(kind=kind, poles=np.zeros(0, dtype=complex),
                          weights=np.zeros(0, dtype=float if kind == "molecule" else complex),
                          residual=float(np.vdot(g, g).real), eta=eta, prony=pr, diagnostics=diagnostics)


def run_molecule_pipeline(dataset: MatsubaraDataset, config: PipelineConfig | None = None) -> Reconstruction:
    """Pole-basis interpolant -> unzip -> Prony -> nonnegative weights."""
    config = PipelineConfig() if config is None else config
    config.validate()
    if config.epsilon is None or not config.epsilon > 0:
        raise InvalidArgumentError("the molecule pipeline needs the spectral gap epsilon")
    n_nodes = config.n_nodes
    if n_nodes is None:
        n_nodes = min(256, dataset.N + dataset.N % 2)
    nodes = _stage("interp", _interp.chebyshev_pole_nodes, config.epsilon, n_nodes)
    cutoff = config.svd_cutoff if config.svd_cutoff is not None else default_svd_cutoff(dataset)
    gt = _stage("interp", _interp.fit_pole_weights, dataset, nodes, cutoff, config.epsilon)

    cmap = _unzip.MoleculeMap(dataset.b)
    n_s = config.n_samples or default_n_samples("molecule", dataset, config)
    z = _stage("unzip", _unzip.segment_samples, cmap, n_s)
    coeffs = _stage("prony", _prony.coeffs_from_samples, _stage("interp", _interp.eval_pole_interpolant, gt, z))
    floor = config.noise_floor if config.noise_floor is not None else default_noise_floor("molecule", dataset)
    pr = _stage("prony", _prony.prony_poles, coeffs, config.d_max, config.rows("molecule"), floor,
                config.tol_interior)

    diagnostics = {"n_nodes": int(n_nodes), "n_samples": int(n_s), "svd_cutoff": cutoff,
                   "interp_residual": gt.residual, "noise_floor": pr.noise_floor}
    if pr.exterior_poles.size == 0:
        log.warning("no poles detected")
        return _empty("molecule", dataset, config.eta, pr, diagnostics)
    xi = _stage("unzip", _unzip.pullback_pole, cmap, pr.exterior_poles)
    diagnostics["discarded_imag"] = np.asarray(xi).imag.copy()
    real_xi = np.sort(np.asarray(xi).real)
    # the gap prior forbids atoms in (-eps, eps); such roots come from
    # interpolation error near z = 0 where no data is available
    inside = np.abs(real_xi) < config.gap_keep * config.epsilon
    diagnostics["gap_rejected"] = real_xi[inside]
    real_xi = real_xi[~inside]
    if real_xi.size == 0:
        log.warning("all recovered poles fall inside the gap")
        return _empty("molecule", dataset, config.eta, pr, diagnostics)
    rec = _stage("recover", fit_molecule_weights, dataset, real_xi, config.prune_rel)
    rec.eta = config.eta
    rec.prony = pr
    rec.diagnostics.update(diagnostics)
    return rec


def run_cdm_pipeline(dataset: MatsubaraDataset, config: PipelineConfig | None = None) -> Reconstruction:
    """Reciprocal spline -> unzip -> Prony -> positivity-constrained weights."""
    config = PipelineConfig() if config is None else config
    config.validate()
    spline = _stage("reciprocal", _interp.fit_reciprocal_spline, dataset, config.spline_order)

    cmap = _unzip.CdmMap(dataset.a, dataset.b)
    n_s = config.n_samples or default_n_samples("condensed", dataset, config)
    z = _stage("unzip", _unzip.segment_samples, cmap, n_s)
    coeffs = _stage("prony", _prony.coeffs_from_samples,
                    _stage("interp", _interp.eval_reciprocal_interpolant, spline, z))
    floor = config.noise_floor if config.noise_floor is not None else default_noise_floor("condensed", dataset)
    pr = _stage("prony", _prony.prony_poles, coeffs, config.d_max, config.rows("condensed"), floor,
                config.tol_interior)

    diagnostics = {"n_samples": int(n_s), "noise_floor": pr.noise_floor}
    xi = np.asarray(_stage("unzip", _unzip.pullback_pole, cmap, pr.exterior_poles)) if pr.exterior_poles.size \
        else np.zeros(0, dtype=complex)
    # quasi-particles live strictly below the axis; pullbacks on the axis are
    # artifacts, those above it are mirrored back unless asked otherwise
    on_axis = np.abs(xi.imag) <= 1e-6
    above = xi.imag > 1e-6
    drop = on_axis | above if config.upper_poles == "discard" else on_axis
    if drop.any():
        log.warning("discarding %d recovered poles on or above the real axis", int(drop.sum()))
    diagnostics["discarded_poles"] = xi[drop]
    diagnostics["reflected_poles"] = xi[above & ~drop]
    if (above & ~drop).any():
        log.warning("reflecting %d recovered poles from the upper half-plane", int((above & ~drop).sum()))
    xi = np.where(above, xi.conj(), xi)[~drop]
    xi = _dedupe(xi)
    if xi.size == 0:
        log.warning("no quasi-particle poles detected")
        return _empty("condensed", dataset, config.eta, pr, diagnostics)
    grid = default_constraint_grid(xi, config.grid_min, config.grid_max, config.grid_count)
    rec = _stage("recover", fit_cdm_weights, dataset, xi, grid, config.feas_tol, config.max_iter)
    mag = np.abs(rec.weights)
    weak = mag < config.weak_rel * mag.max()
    diagnostics["weak_poles"] = xi[weak]
    if weak.any():
        # residues this small come from interpolation error, not from the data
        xi = xi[~weak]
        grid = default_constraint_grid(xi, config.grid_min, config.grid_max, config.grid_count)
        rec = _stage("recover", fit_cdm_weights, dataset, xi, grid, config.feas_tol, config.max_iter)
    rec.eta = config.eta
    rec.prony = pr
    rec.diagnostics.update(diagnostics)
    return rec
