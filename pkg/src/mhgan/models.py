"""Generator and discriminator abstractions seen by the samplers.

A generator is anything with ``dim`` and ``sample(n, rng) -> (n, d)``; the
analytic ones also expose ``logpdf``.  A discriminator maps a batch of
points to scores and says whether those scores are probabilities or raw
(unbounded, WGAN-style) values.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import expit, log_ndtr, logit, logsumexp

from .mixtures import GRID_SIGMA, GaussianMixture, as_points, make_grid25

__all__ = [
    "MixtureGenerator",
    "GridGenerator",
    "imperfect_grid_generator",
    "Discriminator",
    "OracleDiscriminator",
    "WarpedDiscriminator",
    "FunctionDiscriminator",
    "oracle_discriminator",
    "warp_discriminator",
    "open_unit",
]

_TINY = np.nextafter(0.0, 1.0)
_ALMOST_ONE = np.nextafter(1.0, 0.0)


def open_unit(p: np.ndarray) -> np.ndarray:
    """Clip probabilities into the open interval (0, 1) at float resolution."""
    return np.clip(p, _TINY, _ALMOST_ONE)


# --------------------------------------------------------------------------
# generators


@dataclass(frozen=True)
class MixtureGenerator:
    """Generator that samples an analytic Gaussian mixture."""

    mixture: GaussianMixture

    @property
    def dim(self) -> int:
        return self.mixture.dim

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.mixture.sample(n, rng)

    def logpdf(self, x):
        return self.mixture.logpdf(x)


_NEGLIGIBLE = 50.0  # nats; exp(-50) is far below double precision


def _log_ndtr_diff(hi: np.ndarray, lo: np.ndarray) -> np.ndarray:
    """log(Phi(hi) - Phi(lo)) for hi > lo without cancellation."""
    flip = lo > 0
    h = np.where(flip, -lo, hi)
    l = np.where(flip, -hi, lo)
    lh = log_ndtr(h)
    with np.errstate(divide="ignore"):
        return lh + np.log1p(-np.exp(log_ndtr(l) - lh))


@dataclass(frozen=True)
class GridGenerator:
    """Grid mixture with missing modes plus spurious "bridge" mass.

    With probability ``1 - bridge_weight`` a draw comes from ``modes``;
    otherwise an adjacent pair of retained modes is picked uniformly and the
    draw is a uniform point on the inner part of the segment joining them
    (``t`` in ``[margin, 1 - margin]``) plus isotropic noise of scale
    ``sigma``.  Keeping a margin means bridge points are low quality, i.e.
    not within 4 sigma of either endpoint.
    """

    modes: GaussianMixture
    pairs: np.ndarray
    bridge_weight: float
    sigma: float = GRID_SIGMA
    margin: float = 0.3

    def __post_init__(self):
        if not 0.0 <= self.bridge_weight < 1.0:
            raise ValueError("bridge_weight must be in [0, 1)")
        pairs = np.asarray(self.pairs, dtype=float).reshape(-1, 2, self.modes.dim)
        if self.bridge_weight > 0 and len(pairs) == 0:
            raise ValueError("bridge_weight > 0 but no adjacent retained modes")
        if not 0.0 <= self.margin < 0.5:
            raise ValueError("margin must be in [0, 0.5)")
        object.__setattr__(self, "pairs", pairs)

    @property
    def dim(self) -> int:
        return self.modes.dim

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if n < 0:
            raise ValueError("n must be non-negative")
        is_bridge = rng.random(n) < self.bridge_weight
        nb = int(is_bridge.sum())
        out = np.empty((n, self.dim))
        out[~is_bridge] = self.modes.sample(n - nb, rng)
        if nb:
            j = rng.integers(len(self.pairs), size=nb)
            t = rng.uniform(self.margin, 1.0 - self.margin, size=nb)
            a, b = self.pairs[j, 0], self.pairs[j, 1]
            noise = self.sigma * rng.standard_normal((nb, self.dim))
            out[is_bridge] = a + t[:, None] * (b - a) + noise
        return out

    def _bridge_logpdf(self, pts: np.ndarray) -> np.ndarray:
        a = self.pairs[:, 0]
        ab = self.pairs[:, 1] - a
        length = np.linalg.norm(ab, axis=1)
        e = ab / length[:, None]
        s = pts @ e.T - np.sum(a * e, axis=1)  # (n, P) position along each line
        if self.dim == 2:
            # signed distance to the line through the 2-d cross product
            perp_sq = (pts @ np.stack([e[:, 1], -e[:, 0]])
                       - (a[:, 0] * e[:, 1] - a[:, 1] * e[:, 0])) ** 2
        else:
            perp = pts[:, None, :] - a[None] - s[..., None] * e[None]
            perp_sq = np.einsum("npd,npd->np", perp, perp)
        var = self.sigma**2
        d = self.dim
        log_perp = -0.5 * (d - 1) * np.log(2 * np.pi * var) - perp_sq / (2 * var)
        lo = self.margin * length
        hi = (1.0 - self.margin) * length
        # the along-segment factor is at most 1/(hi - lo); skip bridges whose
        # bound sits far enough below the largest term to vanish in rounding
        bound = log_perp - np.log(hi - lo)
        terms = np.full_like(bound, -np.inf)

        def fill(mask):
            i, j = np.nonzero(mask)
            along = _log_ndtr_diff((s[i, j] - lo[j]) / self.sigma,
                                   (s[i, j] - hi[j]) / self.sigma)
            terms[i, j] = bound[i, j] + along

        cand = bound >= bound.max(axis=1, keepdims=True) - _NEGLIGIBLE
        fill(cand)
        top = terms.max(axis=1, keepdims=True)
        fill(~cand & (bound >= top - _NEGLIGIBLE))
        return logsumexp(terms, axis=1) - np.log(len(self.pairs))

    def logpdf(self, x):
        pts, single = as_points(x, self.dim)
        out = np.log1p(-self.bridge_weight) + self.modes.logpdf(pts)
        if self.bridge_weight > 0:
            out = np.logaddexp(
                out, np.log(self.bridge_weight) + self._bridge_logpdf(pts)
            )
        return float(out[0]) if single else out


def imperfect_grid_generator(
    drop=(), bridge_weight: float = 0.0, margin: float = 0.3
) -> GridGenerator:
    """The 25-Gaussians benchmark generator with modes removed and bridges.

    ``drop`` holds grid indices (raster order, see ``make_grid25``) that the
    generator never produces.
    """
    grid = make_grid25()
    drop = {int(i) for i in drop}
    if not drop <= set(range(grid.n_components)):
        raise ValueError("drop indices must lie in 0..24")
    keep = [i for i in range(grid.n_components) if i not in drop]
    if not keep:
        raise ValueError("cannot drop all 25 modes")
    means = grid.means[keep]
    modes = GaussianMixture.from_components(means, grid.sigmas[keep])
    pairs = [
        (means[i], means[j])
        for i in range(len(keep))
        for j in range(i + 1, len(keep))
        if np.isclose(np.linalg.norm(means[i] - means[j]), 1.0)
    ]
    return GridGenerator(modes, np.array(pairs), bridge_weight, GRID_SIGMA, margin)


# --------------------------------------------------------------------------
# discriminators


class Discriminator:
    """Deterministic score function over points.

    Subclasses implement :meth:`score`.  Probability-valued discriminators
    should also give exact :meth:`log_odds` when they can, since recovering
    it from a rounded probability loses precision near 0 and 1.
    """

    is_probability: bool = True
    dim: int

    def score(self, x) -> np.ndarray:
        raise NotImplementedError

    def log_odds(self, x) -> np.ndarray:
        if not self.is_probability:
            raise TypeError("raw-score discriminator has no probability odds")
        return logit(self.score(x))

    def __call__(self, x) -> np.ndarray:
        return self.score(x)


class OracleDiscriminator(Discriminator):
    """The optimal discriminator p_data / (p_data + p_g) for known densities."""

    is_probability = True

    def __init__(self, p_data, p_g):
        if p_data.dim != p_g.dim:
            raise ValueError(
                f"dimension mismatch: data is {p_data.dim}-D, generator {p_g.dim}-D"
            )
        self.p_data = p_data
        self.p_g = p_g
        self.dim = p_data.dim

    def log_odds(self, x) -> np.ndarray:
        pts, _ = as_points(x, self.dim)
        return self.p_data.logpdf(pts) - self.p_g.logpdf(pts)

    def score(self, x) -> np.ndarray:
        return open_unit(expit(self.log_odds(x)))


class WarpedDiscriminator(Discriminator):
    """Logit-affine warp ``sigmoid(a * logit(D) + b)`` of a probability D.

    The warp keeps the ranking of scores (so AUC) but breaks calibration.
    """

    is_probability = True

    def __init__(self, base: Discriminator, a: float, b: float):
        if not base.is_probability:
            raise ValueError("can only warp a probability-valued discriminator")
        if a == 0:
            raise ValueError("warp slope a must be non-zero")
        self.base, self.a, self.b = base, float(a), float(b)
        self.dim = base.dim

    def log_odds(self, x) -> np.ndarray:
        return self.a * self.base.log_odds(x) + self.b

    def score(self, x) -> np.ndarray:
        if self.a == 1.0 and self.b == 0.0:
            return self.base.score(x)
        return open_unit(expit(self.log_odds(x)))


@dataclass
class FunctionDiscriminator(Discriminator):
    """Wrap a plain vectorised function ``(n, d) -> (n,)`` as a discriminator."""

    fn: Callable[[np.ndarray], np.ndarray]
    dim: int
    is_probability: bool = True
    name: str = field(default="function")

    def score(self, x) -> np.ndarray:
        pts, _ = as_points(x, self.dim)
        return np.asarray(self.fn(pts), dtype=float).reshape(len(pts))


def oracle_discriminator(p_data, p_g) -> OracleDiscriminator:
    return OracleDiscriminator(p_data, p_g)


def warp_discriminator(d: Discriminator, a: float, b: float) -> WarpedDiscriminator:
    return WarpedDiscriminator(d, a, b)
