"""Sparse covariance assembly and the numerical kernels that consume it.

Covariance matrices are assembled in dense row batches, cast to sparse
triples on the worker, and merged into an immutable CSR structure; entries
whose kernel value is exactly 0.0 are never stored.  The log-determinant
is estimated by stochastic Lanczos quadrature with Rademacher probes, the
quadratic-form solves use a hand-rolled MINRES, and a dense Cholesky path
doubles as the small-problem fast path and the testing oracle.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg
import scipy.sparse

from .errors import ConfigError, NumericalError
from .kernels import KernelHyperparameters, y_kernel_matrix

__all__ = [
    "SparseSymmetricMatrix",
    "AssemblyPlan",
    "SolverReport",
    "assemble_covariance",
    "sparsity_fraction",
    "lanczos_logdet",
    "minres_solve",
    "dense_logdet_solve",
    "save_matrix_market",
    "load_matrix_market",
    "DENSE_THRESHOLD_DEFAULT",
]

logger = logging.getLogger(__name__)

DENSE_THRESHOLD_DEFAULT = 5000

# diagonal ratio below which the conditioning guard adds jitter, and the
# jitter magnitude relative to the diagonal maximum
_GUARD_RATIO = 1e-12
_GUARD_JITTER = 1e-8


@dataclass(frozen=True, eq=False)
class SparseSymmetricMatrix:
    """Immutable CSR storage of a structurally symmetric sparse matrix."""

    dim: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray
    _csr: scipy.sparse.csr_matrix = field(init=False, repr=False, compare=False, default=None)

    def __post_init__(self):
        object.__setattr__(self, "row_offsets", np.asarray(self.row_offsets, dtype=np.int64))
        object.__setattr__(self, "col_indices", np.asarray(self.col_indices, dtype=np.int64))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        self._validate()
        csr = scipy.sparse.csr_matrix(
            (self.values, self.col_indices, self.row_offsets), shape=(self.dim, self.dim)
        )
        object.__setattr__(self, "_csr", csr)

    def _validate(self):
        n = self.dim
        off = self.row_offsets
        if off.shape != (n + 1,) or off[0] != 0 or off[-1] != len(self.col_indices):
            raise ConfigError("row_offsets inconsistent with matrix dimension / nnz")
        if np.any(np.diff(off) < 0):
            raise ConfigError("row_offsets must be monotone")
        if len(self.col_indices) != len(self.values):
            raise ConfigError("col_indices and values must have equal length")
        for i in range(n):
            cols = self.col_indices[off[i] : off[i + 1]]
            if cols.size and (np.any(np.diff(cols) <= 0) or cols[0] < 0 or cols[-1] >= n):
                raise ConfigError(f"row {i}: column indices must be sorted, unique, in range")
        # structural symmetry: the transpose must have the same pattern and values
        t = self._build_scipy().T.tocsr()
        t.sort_indices()
        if not (
            np.array_equal(t.indptr, self.row_offsets)
            and np.array_equal(t.indices, self.col_indices)
            and np.array_equal(t.data, self.values)
        ):
            raise ConfigError("matrix is not structurally symmetric")

    def _build_scipy(self) -> scipy.sparse.csr_matrix:
        return scipy.sparse.csr_matrix(
            (self.values, self.col_indices, self.row_offsets), shape=(self.dim, self.dim)
        )

    @property
    def nnz(self) -> int:
        return int(len(self.values))

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self._csr.dot(x)

    def diagonal(self) -> np.ndarray:
        return self._csr.diagonal()

    def to_dense(self) -> np.ndarray:
        return self._csr.toarray()

    @classmethod
    def from_coo(cls, dim: int, rows, cols, vals) -> "SparseSymmetricMatrix":
        """Build CSR from unordered triples (no duplicates allowed)."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=float)
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        offsets = np.zeros(dim + 1, dtype=np.int64)
        np.add.at(offsets, rows + 1, 1)
        offsets = np.cumsum(offsets)
        return cls(dim=dim, row_offsets=offsets, col_indices=cols, values=vals)

    @classmethod
    def from_dense(cls, a: np.ndarray) -> "SparseSymmetricMatrix":
        a = np.asarray(a, dtype=float)
        rows, cols = np.nonzero(a)
        return cls.from_coo(a.shape[0], rows, cols, a[rows, cols])


@dataclass(frozen=True)
class AssemblyPlan:
    """Row-block partition driving batched covariance assembly."""

    batch_size: int
    worker_count: int = 1

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.worker_count < 1:
            raise ConfigError(f"worker_count must be >= 1, got {self.worker_count}")

    def blocks(self, n: int):
        """Disjoint row blocks [start, end) covering 0..n."""
        return [(s, min(s + self.batch_size, n)) for s in range(0, n, self.batch_size)]


@dataclass(frozen=True)
class SolverReport:
    iterations: int
    final_residual_norm: float
    converged: bool


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------


def _lower_block(X, theta, noise, start, end):
    """Nonzero triples of the strict+diagonal lower triangle rows [start, end)."""
    block = y_kernel_matrix(theta, X[start:end], X[:end])
    # keep the lower triangle j <= i (global row index = start + local)
    rows_local, cols = np.nonzero(
        np.arange(start, end)[:, None] >= np.arange(end)[None, :]
    )
    vals = block[rows_local, cols]
    rows = rows_local + start
    if noise is not None:
        diag = rows == cols
        vals = vals.copy()
        vals[diag] = vals[diag] + noise[rows[diag]]
    bad = ~np.isfinite(vals)
    if np.any(bad):
        k = int(np.argmax(bad))
        raise NumericalError(
            f"non-finite kernel value at entry ({int(rows[k])}, {int(cols[k])}); aborting assembly"
        )
    keep = vals != 0.0
    return rows[keep], cols[keep], vals[keep]


def assemble_covariance(
    X,
    theta: KernelHyperparameters,
    plan: Optional[AssemblyPlan] = None,
    include_noise: bool = True,
) -> SparseSymmetricMatrix:
    """Assemble the covariance of the observed (or latent) process as CSR.

    Entry (i, j) equals ``z_kernel_eval(theta, i, j, X)`` exactly (or
    ``y_kernel_eval`` when ``include_noise`` is off); exact zeros are
    structurally absent.  The result is bit-identical for any batch size
    and worker count: batches are row blocks of the lower triangle, each
    entry is computed by the same elementwise kernel code regardless of
    block shape, and the blocks are merged in row order before mirroring.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = X.shape[0]
    if n < 1:
        raise ConfigError("assemble_covariance requires at least one input point")
    if plan is None:
        plan = AssemblyPlan(batch_size=max(1, min(n, 512)))
    noise = theta.noise_variances(n) if include_noise else None

    blocks = plan.blocks(n)
    if plan.worker_count == 1 or len(blocks) == 1:
        parts = [_lower_block(X, theta, noise, s, e) for s, e in blocks]
    else:
        with ThreadPoolExecutor(max_workers=plan.worker_count) as pool:
            futures = [pool.submit(_lower_block, X, theta, noise, s, e) for s, e in blocks]
            parts = [f.result() for f in futures]

    rows = np.concatenate([p[0] for p in parts]) if parts else np.zeros(0, np.int64)
    cols = np.concatenate([p[1] for p in parts]) if parts else np.zeros(0, np.int64)
    vals = np.concatenate([p[2] for p in parts]) if parts else np.zeros(0, float)

    # conditioning guard on the assembled diagonal
    diag = np.zeros(n)
    on_diag = rows == cols
    diag[rows[on_diag]] = vals[on_diag]
    dmax = diag.max() if n else 0.0
    if dmax > 0.0 and diag.min() < _GUARD_RATIO * dmax:
        jitter = _GUARD_JITTER * dmax
        logger.warning(
            "covariance diagonal poorly scaled (min %.3e vs max %.3e); adding jitter %.3e",
            diag.min(), dmax, jitter,
        )
        vals = vals.copy()
        vals[on_diag] = vals[on_diag] + jitter
        missing = np.setdiff1d(np.arange(n), rows[on_diag], assume_unique=False)
        if missing.size:
            rows = np.concatenate([rows, missing])
            cols = np.concatenate([cols, missing])
            vals = np.concatenate([vals, np.full(missing.size, jitter)])

    # mirror the strict lower triangle into the upper one
    strict = rows != cols
    all_rows = np.concatenate([rows, cols[strict]])
    all_cols = np.concatenate([cols, rows[strict]])
    all_vals = np.concatenate([vals, vals[strict]])
    return SparseSymmetricMatrix.from_coo(n, all_rows, all_cols, all_vals)


def sparsity_fraction(a: SparseSymmetricMatrix) -> float:
    """Fraction of structurally nonzero entries, nnz / N^2."""
    return a.nnz / float(a.dim) ** 2


# ---------------------------------------------------------------------------
# stochastic Lanczos quadrature log-determinant
# ---------------------------------------------------------------------------


def _lanczos_tridiagonal(a: SparseSymmetricMatrix, v: np.ndarray, steps: int):
    """Run `steps` Lanczos iterations with full reorthogonalization.

    Returns the tridiagonal coefficients (alphas, betas) of the projected
    matrix; terminates early on Krylov-space breakdown.
    """
    n = a.dim
    steps = min(steps, n)
    q = v / np.linalg.norm(v)
    basis = np.zeros((steps, n))
    basis[0] = q
    alphas = []
    betas = []
    q_prev = np.zeros(n)
    beta_prev = 0.0
    scale = None
    for k in range(steps):
        w = a.matvec(q) - beta_prev * q_prev
        # explicit Rayleigh quotient: exact for eigenvector starts (e.g. c*I)
        alpha = float(q @ w) / float(q @ q)
        alphas.append(alpha)
        w = w - alpha * q
        # full reorthogonalization against the stored basis
        w = w - basis[: k + 1].T @ (basis[: k + 1] @ w)
        beta = float(np.linalg.norm(w))
        if scale is None:
            scale = max(abs(alpha), beta, 1.0)
        if k == steps - 1 or beta <= 1e-13 * scale:
            break
        betas.append(beta)
        q_prev = q
        beta_prev = beta
        q = w / beta
        basis[k + 1] = q
    return np.array(alphas), np.array(betas)


def lanczos_logdet(a: SparseSymmetricMatrix, probes: int = 30, steps: int = 50, seed: int = 0) -> float:
    """Stochastic Lanczos quadrature estimate of log det(A) for SPD A.

    Averages, over `probes` Rademacher vectors, the Gauss-quadrature value
    N * sum_k w_k^2 log(theta_k) where theta_k are the Ritz values of a
    `steps`-step Lanczos tridiagonalization started at the normalized probe
    and w_k are the first components of its eigenvectors.  Deterministic
    given the seed.  The estimator is unbiased with standard error
    sqrt(2/probes) * ||offdiag(log A)||_F, so accuracy is best when the
    matrix is not dominated by long-range correlations.
    """
    if probes < 1 or steps < 1:
        raise ConfigError("probes and steps must be positive")
    rng = np.random.default_rng(seed)
    n = a.dim
    total = 0.0
    for _ in range(probes):
        v = rng.integers(0, 2, n).astype(float) * 2.0 - 1.0
        alphas, betas = _lanczos_tridiagonal(a, v, steps)
        if alphas.size == 1:
            ritz = alphas
            weights_sq = np.ones(1)
        else:
            ritz, vecs = scipy.linalg.eigh_tridiagonal(alphas, betas)
            weights_sq = vecs[0, :] ** 2
        if np.any(ritz <= 0.0):
            raise NumericalError(
                f"non-positive Ritz value {ritz.min():.3e}: matrix is indefinite or "
                "numerically singular; increase the nugget (noise variance)"
            )
        total += n * float(weights_sq @ np.log(ritz))
    return total / probes


# ---------------------------------------------------------------------------
# MINRES
# ---------------------------------------------------------------------------


def minres_solve(
    a: SparseSymmetricMatrix,
    rhs: np.ndarray,
    tol: float = 1e-8,
    max_iters: Optional[int] = None,
):
    """Minimum-residual solve of the symmetric system A x = rhs.

    Returns ``(x, report)``; convergence means the true relative residual
    ||A x - rhs|| / ||rhs|| is at or below `tol` (verified explicitly, not
    just through the recurrence estimate).  On non-convergence the best
    iterate found is returned with ``converged=False`` so the caller can
    decide whether to reject a proposal or escalate.
    """
    n = a.dim
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != (n,):
        raise ConfigError(f"rhs has shape {rhs.shape}, expected ({n},)")
    if max_iters is None:
        max_iters = 10 * n
    rhs_norm = float(np.linalg.norm(rhs))
    if rhs_norm == 0.0:
        return np.zeros(n), SolverReport(iterations=0, final_residual_norm=0.0, converged=True)

    x = np.zeros(n)
    # Lanczos vectors
    v_prev = np.zeros(n)
    v = rhs / rhs_norm
    beta = rhs_norm
    # QR of the tridiagonal via Givens rotations
    c, s = -1.0, 0.0
    dbar, eps_prev = 0.0, 0.0
    phibar = rhs_norm
    w = np.zeros(n)
    w_prev = np.zeros(n)
    iterations = 0

    for k in range(1, max_iters + 1):
        p = a.matvec(v)
        alpha = float(v @ p)
        p = p - alpha * v - beta * v_prev
        beta_next = float(np.linalg.norm(p))

        # previous rotation applied to the new column of T
        delta = c * dbar + s * alpha
        gbar = s * dbar - c * alpha
        eps = s * beta_next
        dbar_next = -c * beta_next

        gamma = math.hypot(gbar, beta_next)
        gamma = max(gamma, np.finfo(float).eps)
        c_new = gbar / gamma
        s_new = beta_next / gamma
        phi = c_new * phibar
        phibar = s_new * phibar

        w_new = (v - eps_prev * w_prev - delta * w) / gamma
        x = x + phi * w_new
        iterations = k

        w_prev, w = w, w_new
        eps_prev = eps
        dbar = dbar_next
        c, s = c_new, s_new

        if phibar <= tol * rhs_norm:
            true_res = float(np.linalg.norm(a.matvec(x) - rhs))
            if true_res <= tol * rhs_norm:
                return x, SolverReport(iterations=k, final_residual_norm=true_res / rhs_norm, converged=True)
        if beta_next <= 1e-15 * max(1.0, abs(alpha)):
            break
        v_prev = v
        v = p / beta_next
        beta = beta_next

    true_res = float(np.linalg.norm(a.matvec(x) - rhs))
    converged = true_res <= tol * rhs_norm
    return x, SolverReport(iterations=iterations, final_residual_norm=true_res / rhs_norm, converged=converged)


# ---------------------------------------------------------------------------
# dense oracle path
# ---------------------------------------------------------------------------


def dense_logdet_solve(
    a: SparseSymmetricMatrix,
    rhs: np.ndarray,
    dense_threshold: int = DENSE_THRESHOLD_DEFAULT,
):
    """Exact log-determinant and solve via dense Cholesky (small-N path)."""
    if a.dim > dense_threshold:
        raise ConfigError(
            f"dense path refused for N={a.dim} > threshold {dense_threshold}; use the iterative path"
        )
    rhs = np.asarray(rhs, dtype=float)
    dense = a.to_dense()
    try:
        chol = scipy.linalg.cho_factor(dense, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise NumericalError(
            "dense Cholesky failed: matrix is not positive definite; increase the nugget"
        ) from exc
    logdet = 2.0 * float(np.sum(np.log(np.diag(chol[0]))))
    solution = scipy.linalg.cho_solve(chol, rhs, check_finite=False)
    return logdet, solution


# ---------------------------------------------------------------------------
# Matrix Market interchange
# ---------------------------------------------------------------------------


def save_matrix_market(path, a: SparseSymmetricMatrix, comments=()) -> None:
    """Write coordinate-format Matrix Market (general symmetry, full pattern).

    Values are written with shortest round-trip float formatting, so a
    load followed by a save reproduces the file byte for byte.
    """
    lines = ["%%MatrixMarket matrix coordinate real general"]
    for comment in comments:
        lines.append(f"% {comment}")
    lines.append(f"{a.dim} {a.dim} {a.nnz}")
    off = a.row_offsets
    for i in range(a.dim):
        for k in range(off[i], off[i + 1]):
            lines.append(f"{i + 1} {a.col_indices[k] + 1} {float(a.values[k])!r}")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def load_matrix_market(path) -> SparseSymmetricMatrix:
    """Read a coordinate-format Matrix Market file written by this package."""
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip().lower().split()
        if header[:4] != ["%%matrixmarket", "matrix", "coordinate", "real"]:
            raise ConfigError(f"unsupported Matrix Market header in {path}")
        symmetry = header[4] if len(header) > 4 else "general"
        size_line = None
        for line in fh:
            stripped = line.strip()
            if stripped and not stripped.startswith("%"):
                size_line = stripped
                break
        if size_line is None:
            raise ConfigError(f"missing size line in {path}")
        nrows, ncols, nnz = (int(tok) for tok in size_line.split())
        if nrows != ncols:
            raise ConfigError(f"matrix in {path} is not square: {nrows} x {ncols}")
        rows = np.empty(nnz, dtype=np.int64)
        cols = np.empty(nnz, dtype=np.int64)
        vals = np.empty(nnz, dtype=float)
        k = 0
        for line in fh:
            stripped = line.strip()
            if not stripped or stripped.startswith("%"):
                continue
            i, j, v = stripped.split()
            rows[k] = int(i) - 1
            cols[k] = int(j) - 1
            vals[k] = float(v)
            k += 1
        if k != nnz:
            raise ConfigError(f"expected {nnz} entries in {path}, found {k}")
    if symmetry == "symmetric":
        strict = rows != cols
        mirror_rows, mirror_cols, mirror_vals = cols[strict], rows[strict], vals[strict]
        rows = np.concatenate([rows, mirror_rows])
        cols = np.concatenate([cols, mirror_cols])
        vals = np.concatenate([vals, mirror_vals])
    return SparseSymmetricMatrix.from_coo(nrows, rows, cols, vals)
