"""Covariance kernels built from compactly supported bump functions.

The full kernel is a product ``C_y = C_core * C_sparse`` where ``C_sparse``
is a sum of a compactly supported Wendland polynomial and outer products of
bump-function sums.  Both factors are exactly zero outside finite regions,
so the assembled covariance matrices are structurally sparse.

Every evaluation routine here is a pure function.  All of them funnel
through the same broadcastable array code so that a scalar call, an
elementwise pairs call, and a full matrix build perform bit-identical
floating point operations for any given pair of points.  That property is
what lets the sparse assembly promise exact agreement with pointwise
evaluation.

Point arrays have shape ``(..., d)`` with the coordinate dimension last.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Union

import numpy as np

from .errors import ConfigError

__all__ = [
    "BumpFunction",
    "SparseKernelParams",
    "ConstantCore",
    "StationaryMatern",
    "ParametricNonstationary",
    "HomoskedasticNoise",
    "HeteroskedasticNoise",
    "KernelHyperparameters",
    "bump_eval",
    "sparse_component_eval",
    "sparse_components",
    "wendland_eval",
    "sparse_kernel_eval",
    "matern_correlation",
    "core_eval",
    "y_kernel_eval",
    "z_kernel_eval",
    "wendland_matrix",
    "sparse_kernel_matrix",
    "core_matrix",
    "y_kernel_matrix",
    "y_kernel_diag",
    "z_kernel_matrix",
    "signal_std",
    "length_scale_sq",
    "SUPPORTED_SMOOTHNESS",
]

SUPPORTED_SMOOTHNESS = (0.5, 1.5, 2.5)

_SQRT3 = math.sqrt(3.0)
_SQRT5 = math.sqrt(5.0)


# ---------------------------------------------------------------------------
# hyperparameter containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BumpFunction:
    """A single smooth, compactly supported bump.

    ``amplitude * exp(shape * (1 - 1/(1 - u)))`` with
    ``u = |x - centroid|^2 / radius^2`` inside the support ``|x - centroid|
    < radius`` and exactly 0 outside.  The support condition uses radius
    (length) semantics throughout this package.
    """

    centroid: np.ndarray
    amplitude: float
    shape: float
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "centroid", np.atleast_1d(np.asarray(self.centroid, dtype=float)))
        if not self.radius > 0:
            raise ConfigError(f"bump radius must be > 0, got {self.radius}")
        if not self.shape > 0:
            raise ConfigError(f"bump shape must be > 0, got {self.shape}")
        if self.amplitude < 0:
            raise ConfigError(f"bump amplitude must be >= 0, got {self.amplitude}")


@dataclass(frozen=True)
class SparseKernelParams:
    """Hyperparameters of the sparsity-discovering kernel factor.

    Holds the Wendland scale ``scale`` (s0) and radius ``wendland_radius``
    (r0, a scalar or a per-coordinate vector for the anisotropic variant)
    plus an ``n1 x n2`` grid of bump functions stored as arrays:
    ``centroids`` is ``(n1, n2, d)``, while ``amplitudes``, ``shapes``,
    ``radii`` and ``inclusion_probs`` are ``(n1, n2)``.

    With free shapes this is ``2 + n1*n2*(d + 3)`` hyperparameters; during
    Bayesian inference the shapes are pinned to 1 and the amplitudes are
    binary indicators with inclusion probabilities ``inclusion_probs``.
    """

    scale: float
    wendland_radius: Union[float, np.ndarray]
    centroids: np.ndarray
    amplitudes: np.ndarray
    shapes: np.ndarray
    radii: np.ndarray
    inclusion_probs: np.ndarray

    def __post_init__(self):
        cent = np.asarray(self.centroids, dtype=float)
        if cent.ndim != 3:
            raise ConfigError("centroids must have shape (n1, n2, d)")
        object.__setattr__(self, "centroids", cent)
        for name in ("amplitudes", "shapes", "radii", "inclusion_probs"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != cent.shape[:2]:
                raise ConfigError(f"{name} must have shape (n1, n2) = {cent.shape[:2]}")
            object.__setattr__(self, name, arr)
        r0 = self.wendland_radius
        if np.ndim(r0) == 0:
            object.__setattr__(self, "wendland_radius", float(r0))
        else:
            object.__setattr__(self, "wendland_radius", np.asarray(r0, dtype=float))

    @property
    def n1(self) -> int:
        return self.centroids.shape[0]

    @property
    def n2(self) -> int:
        return self.centroids.shape[1]

    @property
    def dim(self) -> int:
        return self.centroids.shape[2]

    @property
    def n_hyperparameters(self) -> int:
        """2 + n1*n2*(d+3), counting free shapes."""
        return 2 + self.n1 * self.n2 * (self.dim + 3)

    def bump(self, i: int, j: int) -> BumpFunction:
        """The (i, j) bump as a standalone object (0-based indices)."""
        return BumpFunction(
            centroid=self.centroids[i, j],
            amplitude=float(self.amplitudes[i, j]),
            shape=float(self.shapes[i, j]),
            radius=float(self.radii[i, j]),
        )

    @classmethod
    def from_bumps(cls, scale, wendland_radius, bumps, inclusion_probs=None) -> "SparseKernelParams":
        """Build from a nested list (n1 rows of n2) of BumpFunction."""
        n1 = len(bumps)
        n2 = len(bumps[0]) if n1 else 0
        d = len(bumps[0][0].centroid) if n1 and n2 else 1
        cent = np.zeros((n1, n2, d))
        amp = np.zeros((n1, n2))
        shp = np.ones((n1, n2))
        rad = np.ones((n1, n2))
        for i in range(n1):
            for j in range(n2):
                b = bumps[i][j]
                cent[i, j] = b.centroid
                amp[i, j] = b.amplitude
                shp[i, j] = b.shape
                rad[i, j] = b.radius
        if inclusion_probs is None:
            inclusion_probs = np.full((n1, n2), 0.5)
        return cls(scale, wendland_radius, cent, amp, shp, rad, np.asarray(inclusion_probs, float))

    @classmethod
    def identity(cls, dim: int = 1) -> "SparseKernelParams":
        """A sparse factor that is identically 1 (no bumps, infinite radius).

        Used to run a plain core-kernel GP through the same machinery.
        """
        empty2 = np.zeros((0, 0))
        return cls(
            scale=1.0,
            wendland_radius=math.inf,
            centroids=np.zeros((0, 0, dim)),
            amplitudes=empty2,
            shapes=empty2,
            radii=empty2,
            inclusion_probs=empty2,
        )

    def with_amplitudes(self, amplitudes: np.ndarray) -> "SparseKernelParams":
        return replace(self, amplitudes=np.asarray(amplitudes, dtype=float))


@dataclass(frozen=True)
class ConstantCore:
    """Degenerate core kernel, identically ``value`` (1 by definition)."""

    value: float = 1.0


@dataclass(frozen=True)
class StationaryMatern:
    """Stationary Matern kernel ``variance * M_nu(|x - x'| / length_scale)``."""

    variance: float
    length_scale: float
    smoothness: float = 1.5

    def __post_init__(self):
        _check_smoothness(self.smoothness)


@dataclass(frozen=True)
class ParametricNonstationary:
    """Parametric nonstationary core kernel.

    The signal standard deviation and the squared length scale are
    log-linear in user-supplied basis functions:

        log sigma(x) = log_sigma0 + sum_m s_m(x) * sigma_coeffs[m]
        log Sigma(x) = log_Sigma0 + sum_m s_m(x) * Sigma_coeffs[m]

    and the kernel is

        sigma(x) sigma(x') (Sigma(x) Sigma(x'))^(d/4)
            / ((Sigma(x) + Sigma(x'))/2)^(d/2)
            * M_nu( sqrt( |x-x'|^2 / ((Sigma(x)+Sigma(x'))/2) ) ).

    ``sigma_basis`` and ``Sigma_basis`` are callables mapping an
    ``(..., d)`` point array to ``(..., M)`` basis columns; the library
    never constructs the basis itself (see :mod:`sparsegp.basis` for
    ready-made ones).  ``reg_variance_sigma`` / ``reg_variance_Sigma`` are
    the ridge variances of the Gaussian regularization prior on the
    coefficients; they are inferred alongside the coefficients.
    """

    log_sigma0: float
    log_Sigma0: float
    sigma_coeffs: np.ndarray
    Sigma_coeffs: np.ndarray
    sigma_basis: object = None
    Sigma_basis: object = None
    reg_variance_sigma: float = 1.0
    reg_variance_Sigma: float = 1.0
    smoothness: float = 1.5

    def __post_init__(self):
        _check_smoothness(self.smoothness)
        object.__setattr__(self, "sigma_coeffs", np.atleast_1d(np.asarray(self.sigma_coeffs, float)))
        object.__setattr__(self, "Sigma_coeffs", np.atleast_1d(np.asarray(self.Sigma_coeffs, float)))


CoreKernelParams = Union[ConstantCore, StationaryMatern, ParametricNonstationary]


@dataclass(frozen=True)
class HomoskedasticNoise:
    """Single scalar noise variance tau^2 shared by every observation."""

    tau2: float = 0.0


@dataclass(frozen=True)
class HeteroskedasticNoise:
    """Fixed, known per-observation noise variances (aligned with the data)."""

    tau2: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "tau2", np.asarray(self.tau2, dtype=float))


NoiseParams = Union[HomoskedasticNoise, HeteroskedasticNoise]


@dataclass(frozen=True)
class KernelHyperparameters:
    """The complete hyperparameter vector theta = (theta_core, theta_sparse, theta_z)."""

    core: CoreKernelParams
    sparse: SparseKernelParams
    noise: NoiseParams = field(default_factory=HomoskedasticNoise)

    def noise_variances(self, n: int) -> np.ndarray:
        """Per-observation noise variances as a length-n vector."""
        if isinstance(self.noise, HomoskedasticNoise):
            return np.full(n, float(self.noise.tau2))
        tau2 = self.noise.tau2
        if tau2.shape != (n,):
            raise ConfigError(f"heteroskedastic noise has length {tau2.shape}, expected ({n},)")
        return tau2


def _check_smoothness(nu: float) -> None:
    if nu not in SUPPORTED_SMOOTHNESS:
        raise ConfigError(f"Matern smoothness must be one of {SUPPORTED_SMOOTHNESS}, got {nu}")


# ---------------------------------------------------------------------------
# broadcastable building blocks
# ---------------------------------------------------------------------------


def _points(x) -> np.ndarray:
    """Coerce to a float array with the coordinate axis last."""
    a = np.asarray(x, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1)
    return a


def _sq_dist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Squared Euclidean distance, reducing the trailing coordinate axis."""
    diff = a - b
    return np.sum(diff * diff, axis=-1)


def _bump_grid_values(sp: SparseKernelParams, pts: np.ndarray) -> np.ndarray:
    """Values of every bump at every point, shape ``(n1, n2) + pts.shape[:-1]``."""
    base = pts.shape[:-1]
    out = np.zeros((sp.n1, sp.n2) + base)
    for i in range(sp.n1):
        for j in range(sp.n2):
            out[i, j] = _bump_values(
                sp.centroids[i, j], sp.amplitudes[i, j], sp.shapes[i, j], sp.radii[i, j], pts
            )
    return out


def _bump_values(centroid, amplitude, shape, radius, pts: np.ndarray) -> np.ndarray:
    u = _sq_dist(pts, centroid) / (radius * radius)
    inside = u < 1.0
    # compute only on the support; 1/(1-u) blows up on the complement
    u_safe = np.where(inside, u, 0.0)
    with np.errstate(over="ignore", under="ignore"):
        vals = amplitude * np.exp(shape * (1.0 - 1.0 / (1.0 - u_safe)))
    return np.where(inside, vals, 0.0)


def sparse_components(sp: SparseKernelParams, x) -> np.ndarray:
    """All component sums f_i(x), shape ``(n1,) + x.shape[:-1]``.

    f_i is the sum over j of the (i, j) bump values; amplitude-0 bumps
    contribute nothing.
    """
    pts = _points(x)
    base = pts.shape[:-1]
    out = np.zeros((sp.n1,) + base)
    for i in range(sp.n1):
        acc = np.zeros(base)
        for j in range(sp.n2):
            acc = acc + _bump_values(
                sp.centroids[i, j], sp.amplitudes[i, j], sp.shapes[i, j], sp.radii[i, j], pts
            )
        out[i] = acc
    return out


def _wendland_values(r0, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Compactly supported Wendland polynomial on scaled distance t < 1.

    Scalar ``r0`` uses t = |a-b|/r0; a vector ``r0`` is the anisotropic
    variant with per-coordinate scaling.
    """
    if np.ndim(r0) == 0:
        t = np.sqrt(_sq_dist(a, b)) / r0
    else:
        t = np.sqrt(_sq_dist(a / r0, b / r0))
    inside = t < 1.0
    t_safe = np.where(inside, t, 0.0)
    one_minus = 1.0 - t_safe
    p2 = one_minus * one_minus
    p4 = p2 * p2
    p8 = p4 * p4
    poly = 35.0 * t_safe * t_safe * t_safe + 25.0 * t_safe * t_safe + 8.0 * t_safe + 1.0
    return np.where(inside, p8 * poly, 0.0)


def _sparse_cov(sp: SparseKernelParams, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = sp.scale * _wendland_values(sp.wendland_radius, a, b)
    if sp.n1 and sp.n2:
        fa = sparse_components(sp, a)
        fb = sparse_components(sp, b)
        for i in range(sp.n1):
            out = out + fa[i] * fb[i]
    return out


def matern_correlation(nu: float, t):
    """Matern correlation at scaled distance t >= 0 for nu in {0.5, 1.5, 2.5}."""
    _check_smoothness(nu)
    t = np.asarray(t, dtype=float)
    if nu == 0.5:
        return np.exp(-t)
    if nu == 1.5:
        s = _SQRT3 * t
        return (1.0 + s) * np.exp(-s)
    s = _SQRT5 * t
    return (1.0 + s + s * s / 3.0) * np.exp(-s)


def signal_std(core: CoreKernelParams, x) -> np.ndarray:
    """Pointwise signal standard deviation sigma(x) of a core kernel."""
    pts = _points(x)
    base = pts.shape[:-1]
    if isinstance(core, ConstantCore):
        return np.full(base, math.sqrt(core.value))
    if isinstance(core, StationaryMatern):
        return np.full(base, math.sqrt(core.variance))
    log_sigma = np.full(base, core.log_sigma0)
    if core.sigma_coeffs.size:
        cols = np.asarray(core.sigma_basis(pts), dtype=float)
        # explicit accumulation keeps the reduction order independent of
        # the array shape, so scalar and matrix paths agree bitwise
        for m in range(core.sigma_coeffs.size):
            log_sigma = log_sigma + cols[..., m] * core.sigma_coeffs[m]
    return np.exp(log_sigma)


def length_scale_sq(core: ParametricNonstationary, x) -> np.ndarray:
    """Pointwise squared length scale Sigma(x) of the nonstationary core."""
    pts = _points(x)
    base = pts.shape[:-1]
    log_Sigma = np.full(base, core.log_Sigma0)
    if core.Sigma_coeffs.size:
        cols = np.asarray(core.Sigma_basis(pts), dtype=float)
        for m in range(core.Sigma_coeffs.size):
            log_Sigma = log_Sigma + cols[..., m] * core.Sigma_coeffs[m]
    return np.exp(log_Sigma)


def _core_cov(core: CoreKernelParams, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if isinstance(core, ConstantCore):
        shape = np.broadcast_shapes(a.shape[:-1], b.shape[:-1])
        return np.full(shape, float(core.value))
    if isinstance(core, StationaryMatern):
        t = np.sqrt(_sq_dist(a, b)) / core.length_scale
        return core.variance * matern_correlation(core.smoothness, t)
    d = a.shape[-1]
    sig_a = signal_std(core, a)
    sig_b = signal_std(core, b)
    Sa = length_scale_sq(core, a)
    Sb = length_scale_sq(core, b)
    mean_S = (Sa + Sb) / 2.0
    pref = sig_a * sig_b * (Sa * Sb) ** (d / 4.0) / mean_S ** (d / 2.0)
    q = _sq_dist(a, b) / mean_S
    return pref * matern_correlation(core.smoothness, np.sqrt(q))


def _y_cov(theta: KernelHyperparameters, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return _core_cov(theta.core, a, b) * _sparse_cov(theta.sparse, a, b)


# ---------------------------------------------------------------------------
# public evaluation API
# ---------------------------------------------------------------------------


def bump_eval(bump: BumpFunction, x) -> float:
    """Evaluate one bump function at a single point; 0 outside its support."""
    pts = _points(x)
    return float(_bump_values(bump.centroid, bump.amplitude, bump.shape, bump.radius, pts))


def sparse_component_eval(sp: SparseKernelParams, i: int, x) -> float:
    """f_i(x), the i-th (0-based) sum of bump functions."""
    if not 0 <= i < sp.n1:
        raise IndexError(f"component index {i} out of range [0, {sp.n1})")
    return float(sparse_components(sp, _points(x))[i])


def wendland_eval(r0, x, x2) -> float:
    """Wendland polynomial value in [0, 1]; exactly 0 when scaled distance >= 1."""
    if np.ndim(r0) == 0 and not r0 > 0:
        raise ConfigError(f"wendland radius must be > 0, got {r0}")
    return float(_wendland_values(r0, _points(x), _points(x2)))


def sparse_kernel_eval(sp: SparseKernelParams, x, x2) -> float:
    """C_sparse(x, x') = s0 f0(x, x'; r0) + sum_i f_i(x) f_i(x')."""
    return float(_sparse_cov(sp, _points(x), _points(x2)))


def core_eval(core: CoreKernelParams, x, x2) -> float:
    """Core kernel value; equals sigma^2(x) at x = x'."""
    return float(_core_cov(core, _points(x), _points(x2)))


def y_kernel_eval(theta: KernelHyperparameters, x, x2) -> float:
    """C_y(x, x') = C_core(x, x') * C_sparse(x, x')."""
    return float(_y_cov(theta, _points(x), _points(x2)))


def z_kernel_eval(theta: KernelHyperparameters, i: int, j: int, X) -> float:
    """Marginalized-process kernel between observed points i and j.

    Adds the noise variance on the diagonal of the observed set only:
    C_z(x_i, x_j) = C_y(x_i, x_j) + tau^2(x_i) * 1{i = j}.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = X.shape[0]
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError(f"indices ({i}, {j}) out of range for {n} points")
    val = float(_y_cov(theta, X[i], X[j]))
    if i == j:
        val = val + float(theta.noise_variances(n)[i])
    return val


# ---------------------------------------------------------------------------
# matrix builders (dense blocks; sparse assembly lives in sparse_linalg)
# ---------------------------------------------------------------------------


def wendland_matrix(r0, X, X2=None) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    X2 = X if X2 is None else np.atleast_2d(np.asarray(X2, dtype=float))
    return _wendland_values(r0, X[:, None, :], X2[None, :, :])


def sparse_kernel_matrix(sp: SparseKernelParams, X, X2=None) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    X2 = X if X2 is None else np.atleast_2d(np.asarray(X2, dtype=float))
    return _sparse_cov(sp, X[:, None, :], X2[None, :, :])


def core_matrix(core: CoreKernelParams, X, X2=None) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    X2 = X if X2 is None else np.atleast_2d(np.asarray(X2, dtype=float))
    return _core_cov(core, X[:, None, :], X2[None, :, :])


def y_kernel_matrix(theta: KernelHyperparameters, X, X2=None) -> np.ndarray:
    """Dense cross-covariance matrix of the latent process."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    X2 = X if X2 is None else np.atleast_2d(np.asarray(X2, dtype=float))
    return _y_cov(theta, X[:, None, :], X2[None, :, :])


def y_kernel_diag(theta: KernelHyperparameters, X) -> np.ndarray:
    """Pointwise prior variances C_y(x, x), bit-identical to the matrix diagonal."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return _y_cov(theta, X, X)


def z_kernel_matrix(theta: KernelHyperparameters, X) -> np.ndarray:
    """Dense observed-process covariance: C_y plus noise on the diagonal."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = X.shape[0]
    out = y_kernel_matrix(theta, X)
    idx = np.arange(n)
    out[idx, idx] += theta.noise_variances(n)
    return out
