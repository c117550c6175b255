"""Basis-function evaluators for the nonstationary core kernel.

The kernel module treats basis functions as opaque callables mapping an
``(..., d)`` point array to ``(..., M)`` columns.  This module provides two
serializable families, a polynomial basis and a natural cubic spline basis,
both of a single scalar coordinate (the first input coordinate by default).
Columns are standardized against a fixed reference grid over the domain so
the coefficients are O(1) quantities the sampler can move easily.

Callers with richer needs (multivariate splines, covariate-driven columns)
can pass any callable of their own to the kernel; nothing here is required.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

__all__ = ["BasisFunctions", "polynomial_basis", "natural_cubic_basis", "basis_from_spec"]

_REFERENCE_GRID_SIZE = 101


@dataclass(frozen=True)
class BasisFunctions:
    """A standardized column evaluator with a serializable description."""

    spec: dict
    _raw: object = field(repr=False, compare=False)
    center: np.ndarray = field(compare=False)
    scale: np.ndarray = field(compare=False)

    @property
    def n_columns(self) -> int:
        return self.center.shape[0]

    def __call__(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        cols = self._raw(pts)
        return (cols - self.center) / self.scale


def _standardize(raw, lower: float, upper: float, spec: dict) -> BasisFunctions:
    grid = np.linspace(lower, upper, _REFERENCE_GRID_SIZE)[:, None]
    cols = raw(grid)
    center = cols.mean(axis=0)
    scale = cols.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    spec = dict(spec, center=center.tolist(), scale=scale.tolist())
    return BasisFunctions(spec=spec, _raw=raw, center=center, scale=scale)


def polynomial_basis(degree: int, lower: float, upper: float, coordinate: int = 0) -> BasisFunctions:
    """Monomials x^1 .. x^degree of one coordinate, standardized over [lower, upper]."""
    if degree < 1:
        raise ConfigError(f"polynomial degree must be >= 1, got {degree}")

    def raw(pts):
        x = np.asarray(pts, dtype=float)[..., coordinate]
        return np.stack([x**k for k in range(1, degree + 1)], axis=-1)

    spec = {"type": "polynomial", "degree": degree, "lower": lower, "upper": upper, "coordinate": coordinate}
    return _standardize(raw, lower, upper, spec)


def natural_cubic_basis(n_columns: int, lower: float, upper: float, coordinate: int = 0) -> BasisFunctions:
    """Natural cubic spline basis of one coordinate with ``n_columns`` columns.

    Uses the truncated-power construction with ``n_columns + 1`` evenly
    spaced knots: the linear term plus ``n_columns - 1`` natural cubic
    terms, all linear beyond the boundary knots.
    """
    if n_columns < 1:
        raise ConfigError(f"natural cubic basis needs >= 1 column, got {n_columns}")
    n_knots = n_columns + 1
    knots = np.linspace(lower, upper, n_knots)

    def raw(pts):
        x = np.asarray(pts, dtype=float)[..., coordinate]
        cols = [x]
        if n_knots >= 3:
            last, prev = knots[-1], knots[-2]

            def d(k):
                num = np.clip(x - knots[k], 0.0, None) ** 3 - np.clip(x - last, 0.0, None) ** 3
                return num / (last - knots[k])

            d_prev = d(n_knots - 2)
            for k in range(n_knots - 2):
                cols.append(d(k) - d_prev)
        return np.stack(cols, axis=-1)

    spec = {
        "type": "natural_cubic",
        "n_columns": n_columns,
        "lower": lower,
        "upper": upper,
        "coordinate": coordinate,
    }
    return _standardize(raw, lower, upper, spec)


def basis_from_spec(spec: dict) -> BasisFunctions:
    """Rebuild a basis evaluator from its serialized description."""
    kind = spec.get("type")
    kwargs = dict(lower=spec["lower"], upper=spec["upper"], coordinate=spec.get("coordinate", 0))
    if kind == "polynomial":
        return polynomial_basis(spec["degree"], **kwargs)
    if kind == "natural_cubic":
        return natural_cubic_basis(spec["n_columns"], **kwargs)
    raise ConfigError(f"unknown basis type: {kind!r}")
