"""Gaussian mixtures with eigen-decomposed covariance constraints, fitted by EM.

Component covariances are written ``Sigma_k = vol_k * O_k A_k O_k^T`` with
``vol_k`` a scalar volume, ``A_k`` a diagonal shape with unit determinant and
``O_k`` an orthogonal orientation. The three letters of a model name state
whether volume, shape and orientation are Equal across components or Variable
(``I`` means the identity, i.e. spherical shape or axis-aligned orientation).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.special import logsumexp

from .data import DataMatrix
from .mbhac import Partition

LOG_2PI = math.log(2.0 * math.pi)
EIGEN_FLOOR = 1e-10
VEV_MAX_INNER = 20
VEV_INNER_TOL = 1e-8


class FitError(ArithmeticError):
    """Base class for EM failures that leave the likelihood undefined."""


class ComponentCollapse(FitError):
    pass


class Singularity(FitError):
    pass


class ModelName(str, enum.Enum):
    EII = "EII"
    VII = "VII"
    EEI = "EEI"
    VVI = "VVI"
    EEE = "EEE"
    EEV = "EEV"
    VEV = "VEV"
    VVV = "VVV"

    @classmethod
    def parse(cls, value: "str | ModelName") -> "ModelName":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            raise ValueError(
                f"unknown model {value!r}; expected one of {[m.value for m in cls]}"
            ) from None


@dataclass(frozen=True)
class GaussianMixture:
    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    model: ModelName = ModelName.VVV

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=np.float64).ravel()
        mu = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        cov = np.asarray(self.covariances, dtype=np.float64)
        if cov.ndim == 2:
            cov = np.broadcast_to(cov, (w.size,) + cov.shape).copy()
        if mu.shape[0] != w.size or cov.shape != (w.size, mu.shape[1], mu.shape[1]):
            raise ValueError("inconsistent mixture dimensions")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-10:
            raise ValueError("weights must be positive and sum to one")
        for a in (w, mu, cov):
            a.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "covariances", cov)
        object.__setattr__(self, "model", ModelName.parse(self.model))

    @property
    def k(self) -> int:
        return self.weights.size

    @property
    def p(self) -> int:
        return self.means.shape[1]

    def decompose(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Volumes ``(k,)``, unit-determinant shapes ``(k, p)`` (descending) and
        orientations ``(k, p, p)`` of the component covariances."""
        vals, vecs = np.linalg.eigh(self.covariances)
        vals, vecs = vals[:, ::-1], vecs[:, :, ::-1]
        vol = np.exp(np.mean(np.log(vals), axis=1))
        return vol, vals / vol[:, None], vecs


@dataclass
class FitResult:
    mixture: GaussianMixture | None
    loglik: float
    n_iter: int
    converged: bool
    model: ModelName
    k: int
    init_provenance: tuple = ()
    status: str = "ok"
    trace: list[float] = field(default_factory=list)
    responsibilities: np.ndarray | None = None

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def _values(x: DataMatrix | np.ndarray) -> np.ndarray:
    return x.values if isinstance(x, DataMatrix) else np.atleast_2d(np.asarray(x, dtype=np.float64))


def component_log_densities(x: DataMatrix | np.ndarray, g: GaussianMixture) -> np.ndarray:
    """``log pi_k + log N(x_i; mu_k, Sigma_k)`` as an ``n x k`` array."""
    xv = _values(x)
    n, p = xv.shape
    if p != g.p:
        raise ValueError(f"data has {p} columns, mixture has {g.p}")
    out = np.empty((n, g.k))
    for k in range(g.k):
        try:
            chol = linalg.cholesky(g.covariances[k], lower=True)
        except linalg.LinAlgError:
            raise Singularity(f"covariance of component {k + 1} is not positive definite") from None
        diag = np.diagonal(chol)
        if not np.all(diag > 0) or not np.all(np.isfinite(chol)):
            raise Singularity(f"covariance of component {k + 1} is not positive definite")
        sol = linalg.solve_triangular(chol, (xv - g.means[k]).T, lower=True, check_finite=False)
        maha = np.sum(sol * sol, axis=0)
        out[:, k] = math.log(g.weights[k]) - 0.5 * (p * LOG_2PI + maha) - np.sum(np.log(diag))
    return out


def log_density(x: DataMatrix | np.ndarray, g: GaussianMixture) -> np.ndarray:
    """Log mixture density at each row of ``x``."""
    return logsumexp(component_log_densities(x, g), axis=1)


def e_step(x: DataMatrix | np.ndarray, g: GaussianMixture) -> tuple[np.ndarray, float]:
    """Posterior membership probabilities and the observed-data log-likelihood."""
    lc = component_log_densities(x, g)
    ld = logsumexp(lc, axis=1)
    resp = np.exp(lc - ld[:, None])
    resp /= resp.sum(axis=1, keepdims=True)
    return resp, float(np.sum(ld))


def hard_responsibilities(part: Partition) -> np.ndarray:
    r = np.zeros((part.n, part.k))
    r[np.arange(part.n), part.labels - 1] = 1.0
    return r


def _scatter(xv: np.ndarray, r: np.ndarray, means: np.ndarray) -> np.ndarray:
    k = r.shape[1]
    p = xv.shape[1]
    w = np.empty((k, p, p))
    for j in range(k):
        xc = xv - means[j]
        wj = (xc * r[:, j, None]).T @ xc
        w[j] = (wj + wj.T) / 2.0
    return w


def _sorted_eigh(w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    vals, vecs = np.linalg.eigh(w)
    vals = np.clip(vals[..., ::-1], 0.0, None)
    return vals, vecs[..., ::-1]


def _vev_covariances(w: np.ndarray, nk: np.ndarray, shape_start: np.ndarray | None):
    """Volumes, common shape and per-component orientations for VEV.

    Alternates volume and shape updates with orientations fixed at the
    eigenvectors of ``W_k`` (optimal for any descending shape).
    """
    k, p, _ = w.shape
    omega, orient = _sorted_eigh(w)
    if shape_start is None:
        shape = omega.sum(axis=0)
    else:
        shape = np.asarray(shape_start, dtype=np.float64).copy()
    if not np.all(shape > 0):
        raise Singularity("VEV shape has a zero eigenvalue")
    shape = shape / np.exp(np.mean(np.log(shape)))
    prev = math.inf
    for _ in range(VEV_MAX_INNER):
        vol = (omega / shape).sum(axis=1) / (p * nk)
        if not np.all(vol > 0):
            raise Singularity("VEV volume collapsed")
        obj = float(np.sum(p * nk * np.log(vol)) + np.sum((omega / shape).sum(axis=1) / vol))
        scaled = (omega / vol[:, None]).sum(axis=0)
        if not np.all(scaled > 0):
            raise Singularity("VEV shape has a zero eigenvalue")
        shape = scaled / np.exp(np.mean(np.log(scaled)))
        if abs(prev - obj) <= VEV_INNER_TOL * abs(obj):
            break
        prev = obj
    vol = (omega / shape).sum(axis=1) / (p * nk)
    cov = np.einsum("kij,kj,klj->kil", orient, vol[:, None] * shape, orient)
    return cov, shape


def vev_inner_objective(w: np.ndarray, nk: np.ndarray, vol: np.ndarray, shape: np.ndarray) -> float:
    """``sum_k n_k p log vol_k + tr(W_k Sigma_k^-1)`` with orientations at eig(W_k)."""
    omega, _ = _sorted_eigh(w)
    p = w.shape[1]
    return float(np.sum(p * nk * np.log(vol)) + np.sum((omega / shape).sum(axis=1) / vol))


def constrained_covariances(
    w: np.ndarray, nk: np.ndarray, model: ModelName, shape_start: np.ndarray | None = None
) -> np.ndarray:
    """Maximizers of the expected complete-data log-likelihood under ``model``.

    ``w`` holds the weighted scatter matrices ``W_k`` and ``nk`` the component
    totals. ``shape_start`` seeds the VEV inner iteration.
    """
    model = ModelName.parse(model)
    k, p, _ = w.shape
    n = float(nk.sum())
    eye = np.eye(p)
    if model is ModelName.EII:
        lam = np.trace(w.sum(axis=0)) / (n * p)
        cov = np.broadcast_to(lam * eye, (k, p, p)).copy()
    elif model is ModelName.VII:
        lam = np.trace(w, axis1=1, axis2=2) / (nk * p)
        cov = lam[:, None, None] * eye
    elif model is ModelName.EEI:
        d = np.diagonal(w.sum(axis=0)) / n
        cov = np.broadcast_to(np.diag(d), (k, p, p)).copy()
    elif model is ModelName.VVI:
        d = np.diagonal(w, axis1=1, axis2=2) / nk[:, None]
        cov = np.einsum("kj,ij->kij", d, eye)
    elif model is ModelName.EEE:
        cov = np.broadcast_to(w.sum(axis=0) / n, (k, p, p)).copy()
    elif model is ModelName.VVV:
        cov = w / nk[:, None, None]
    elif model is ModelName.EEV:
        omega, orient = _sorted_eigh(w)
        common = omega.sum(axis=0) / n
        cov = np.einsum("kij,j,klj->kil", orient, common, orient)
    else:
        cov, _ = _vev_covariances(w, nk, shape_start)
    return (cov + np.swapaxes(cov, 1, 2)) / 2.0


def _check_floor(cov: np.ndarray) -> None:
    if not np.all(np.isfinite(cov)):
        raise Singularity("non-finite covariance")
    ev = np.linalg.eigvalsh(cov)
    top = ev.max()
    if not top > 0 or ev.min() < EIGEN_FLOOR * top:
        raise Singularity(
            f"covariance eigenvalue {ev.min():.3g} below {EIGEN_FLOOR:g} x largest ({top:.3g})"
        )


def m_step(
    x: DataMatrix | np.ndarray,
    r: np.ndarray,
    model: ModelName | str,
    shape_start: np.ndarray | None = None,
) -> GaussianMixture:
    """Weights, means and constrained covariances from responsibilities ``r``."""
    model = ModelName.parse(model)
    xv = _values(x)
    r = np.asarray(r, dtype=np.float64)
    n = xv.shape[0]
    nk = r.sum(axis=0)
    tiny = 10.0 * np.finfo(np.float64).eps * n
    if np.any(nk <= tiny):
        raise ComponentCollapse(f"component {int(np.argmin(nk)) + 1} has no members")
    means = (r.T @ xv) / nk[:, None]
    w = _scatter(xv, r, means)
    cov = constrained_covariances(w, nk, model, shape_start)
    _check_floor(cov)
    return GaussianMixture(nk / n, means, cov, model)


def _shape_of(g: GaussianMixture) -> np.ndarray:
    _, shapes, _ = g.decompose()
    return shapes.mean(axis=0)


def _converged(new: float, old: float, tol: float) -> bool:
    scale = abs(new) if abs(new) >= 1.0 else 1.0
    return abs(new - old) / scale < tol


def em(
    x: DataMatrix | np.ndarray,
    init: Partition | GaussianMixture,
    model: ModelName | str,
    tol: float = 1e-5,
    max_iter: int = 1000,
    provenance: tuple = (),
) -> FitResult:
    """Run EM to relative log-likelihood convergence.

    A :class:`Partition` start runs the M-step first on hard memberships; a
    :class:`GaussianMixture` start runs the E-step first. Numerical failures
    are reported through ``FitResult.status`` rather than raised.
    """
    model = ModelName.parse(model)
    xv = _values(x)
    trace: list[float] = []
    shape = None
    g: GaussianMixture | None = None
    k = init.k
    try:
        if isinstance(init, Partition):
            if init.n != xv.shape[0]:
                raise ValueError("partition length does not match data")
            r = hard_responsibilities(init)
        else:
            g = init
            if model is ModelName.VEV:
                shape = _shape_of(init)
            r, ll = e_step(xv, init)
            trace.append(ll)
        converged = False
        n_iter = 0
        while n_iter < max_iter:
            g = m_step(xv, r, model, shape)
            if model is ModelName.VEV:
                shape = _shape_of(g)
            n_iter += 1
            r, ll = e_step(xv, g)
            trace.append(ll)
            if len(trace) >= 2 and _converged(trace[-1], trace[-2], tol):
                converged = True
                break
            if k == 1 and isinstance(init, Partition):
                converged = True
                break
    except FitError as exc:
        status = f"{type(exc).__name__}: {exc}"
        return FitResult(None, math.nan, len(trace), False, model, k, provenance, status, trace)
    return FitResult(g, trace[-1], n_iter, converged, model, k, provenance, "ok", trace, r)


def classify(r: np.ndarray) -> Partition:
    """MAP labels; ties go to the lowest component.

    Components that win no observation are dropped and the remaining labels
    renumbered in increasing component order.
    """
    r = np.asarray(r)
    best = np.argmax(r, axis=1)
    used = np.unique(best)
    return Partition(np.searchsorted(used, best) + 1)
