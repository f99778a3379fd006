"""Isotropic Gaussian mixtures with exact log-densities and samplers.

These play both the data distribution and the (analytic) generator
distribution in every benchmark.  Points are arrays whose last axis is the
dimension ``d``; a single point has shape ``(d,)`` and a batch ``(n, d)``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

__all__ = [
    "GaussianMixture",
    "as_points",
    "mixture_logpdf",
    "mixture_sample",
    "make_grid25",
    "make_univariate4",
    "mixture_from_dict",
    "mixture_to_dict",
    "GRID_VALUES",
    "GRID_SIGMA",
    "UNIVARIATE_MEANS",
    "UNIVARIATE_SIGMA",
]

GRID_VALUES = (-2.0, -1.0, 0.0, 1.0, 2.0)
GRID_SIGMA = 0.05
UNIVARIATE_MEANS = (-3.0, -1.0, 1.0, 3.0)
UNIVARIATE_SIGMA = 0.5

_WEIGHT_TOL = 1e-12


def as_points(x, dim: int) -> tuple[np.ndarray, bool]:
    """Coerce ``x`` to a 2-D ``(n, dim)`` array.

    Returns the array and a flag telling whether the input was a single point
    (so callers can squeeze their result back to a scalar).
    """
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise ValueError(
            f"expected points of dimension {dim}, got array of shape {np.shape(x)}"
        )
    return arr, single


@dataclass(frozen=True)
class GaussianMixture:
    """Mixture of isotropic Gaussians.

    Parameters
    ----------
    means : array-like, shape (k, d)
        Component means.
    sigmas : array-like, shape (k,)
        Per-component isotropic standard deviations, all positive.
    weights : array-like, shape (k,)
        Positive mixing weights summing to one (within 1e-12).
    """

    means: np.ndarray
    sigmas: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        means = np.array(self.means, dtype=float)
        if means.ndim == 1:
            means = means[:, None]
        sigmas = np.broadcast_to(
            np.array(self.sigmas, dtype=float), (means.shape[0],)
        ).copy()
        weights = np.array(self.weights, dtype=float)
        if means.ndim != 2 or means.shape[0] == 0 or means.shape[1] < 1:
            raise ValueError("means must have shape (k, d) with k >= 1, d >= 1")
        if weights.shape != (means.shape[0],):
            raise ValueError("need exactly one weight per component")
        if np.any(weights <= 0):
            raise ValueError("mixture weights must be positive")
        if abs(weights.sum() - 1.0) > _WEIGHT_TOL:
            raise ValueError(f"weights sum to {weights.sum()!r}, not 1")
        if np.any(~np.isfinite(sigmas)) or np.any(sigmas <= 0):
            raise ValueError("all sigmas must be positive")
        for name, arr in (("means", means), ("sigmas", sigmas), ("weights", weights)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_components(cls, means, sigmas, weights=None) -> "GaussianMixture":
        """Build a mixture, normalising ``weights`` (uniform if omitted)."""
        means = np.array(means, dtype=float)
        if means.ndim == 1:
            means = means[:, None]
        k = means.shape[0]
        w = np.ones(k) if weights is None else np.array(weights, dtype=float)
        return cls(means, sigmas, w / w.sum())

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def n_components(self) -> int:
        return self.means.shape[0]

    def component_logpdf(self, x) -> np.ndarray:
        """Weighted per-component log-densities, shape ``(n, k)``."""
        pts, _ = as_points(x, self.dim)
        d = self.dim
        sq = _sq_dists(pts, self.means)
        var = self.sigmas**2
        return (
            np.log(self.weights)
            - 0.5 * d * np.log(2 * np.pi * var)
            - sq / (2 * var)
        )

    def logpdf(self, x):
        pts, single = as_points(x, self.dim)
        out = logsumexp(self.component_logpdf(pts), axis=1)
        return float(out[0]) if single else out

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if n < 0:
            raise ValueError("n must be non-negative")
        comp = rng.choice(self.n_components, size=n, p=self.weights)
        noise = rng.standard_normal((n, self.dim))
        return self.means[comp] + self.sigmas[comp, None] * noise

    def without(self, index: int) -> "GaussianMixture":
        """Drop one component and renormalise the remaining weights."""
        if not 0 <= index < self.n_components:
            raise IndexError(f"component {index} out of range")
        if self.n_components == 1:
            raise ValueError("cannot remove the only component")
        keep = np.arange(self.n_components) != index
        return GaussianMixture.from_components(
            self.means[keep], self.sigmas[keep], self.weights[keep]
        )


def _sq_dists(pts: np.ndarray, means: np.ndarray) -> np.ndarray:
    # explicit differences keep equidistant ties exact
    diff = pts[:, None, :] - means[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def mixture_logpdf(m: GaussianMixture, x):
    """Log-density of ``m`` at ``x`` via log-sum-exp over components."""
    return m.logpdf(x)


def mixture_sample(m: GaussianMixture, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` iid points from ``m``; returns shape ``(n, d)``."""
    return m.sample(n, rng)


def make_grid25() -> GaussianMixture:
    """The 5x5 grid of 2-D Gaussians with sigma 0.05 and equal weights.

    Components are in raster order: top row (y = 2) first, x increasing
    within a row, so indices 20..24 form the bottom row (y = -2).
    """
    means = [(x, y) for y, x in itertools.product(GRID_VALUES[::-1], GRID_VALUES)]
    return GaussianMixture.from_components(means, GRID_SIGMA)


def make_univariate4(missing: int | None = None) -> GaussianMixture:
    """Four-mode 1-D mixture; with ``missing`` set, that mode is removed."""
    m = GaussianMixture.from_components(
        np.array(UNIVARIATE_MEANS)[:, None], UNIVARIATE_SIGMA
    )
    if missing is None:
        return m
    if not 0 <= missing < m.n_components:
        raise IndexError(f"missing must be in 0..{m.n_components - 1}, got {missing}")
    return m.without(missing)


def mixture_to_dict(m: GaussianMixture) -> dict:
    return {
        "means": m.means.tolist(),
        "sigma": m.sigmas.tolist(),
        "weights": m.weights.tolist(),
    }


def mixture_from_dict(spec: dict) -> GaussianMixture:
    """Inverse of :func:`mixture_to_dict`; ``sigma`` may be a scalar and
    ``weights`` may be omitted (uniform) or unnormalised."""
    if "means" not in spec or "sigma" not in spec:
        raise ValueError("mixture spec needs 'means' and 'sigma'")
    return GaussianMixture.from_components(
        spec["means"], spec["sigma"], spec.get("weights")
    )
