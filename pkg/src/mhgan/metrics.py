"""Sample-quality metrics for mixture benchmarks and small statistical tests."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .mixtures import GaussianMixture, as_points

__all__ = [
    "UNASSIGNED",
    "ModeAssignment",
    "MetricsReport",
    "assign_modes",
    "high_quality_rate",
    "jensen_shannon",
    "mode_jsd",
    "within_mode_std",
    "kolmogorov_sf",
    "ks_two_sample",
    "ks_multivariate",
    "roc_auc",
    "binned_kl",
]

UNASSIGNED = -1


@dataclass(frozen=True)
class ModeAssignment:
    """Nearest-mode labels (``UNASSIGNED`` when farther than 4 sigma).

    ``counts`` has one entry per mode followed by the unassigned count.
    """

    labels: np.ndarray
    distances: np.ndarray
    counts: np.ndarray

    @property
    def n_modes(self) -> int:
        return len(self.counts) - 1

    @property
    def n_unassigned(self) -> int:
        return int(self.counts[-1])

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class MetricsReport:
    high_quality_rate: float
    mode_jsd: float
    within_mode_std: float
    acceptance_rate: float = float("nan")
    restart_rate: float = float("nan")
    z_value: float = float("nan")


def assign_modes(samples, m: GaussianMixture, n_sigma: float = 4.0) -> ModeAssignment:
    """Assign each sample to its nearest mixture mean if within
    ``n_sigma`` component standard deviations; ties go to the lowest index."""
    pts, _ = as_points(samples, m.dim)
    diff = pts[:, None, :] - m.means[None, :, :]
    dist = np.sqrt(np.einsum("nkd,nkd->nk", diff, diff))
    nearest = np.argmin(dist, axis=1)
    d_near = dist[np.arange(len(pts)), nearest]
    ok = d_near <= n_sigma * m.sigmas[nearest]
    labels = np.where(ok, nearest, UNASSIGNED)
    counts = np.bincount(np.where(ok, nearest, m.n_components),
                         minlength=m.n_components + 1)
    return ModeAssignment(labels, d_near, counts)


def high_quality_rate(a: ModeAssignment) -> float:
    if a.total == 0:
        raise ValueError("no samples")
    return 1.0 - a.n_unassigned / a.total


def jensen_shannon(p, q) -> float:
    """Jensen-Shannon divergence in nats; inputs are normalised first."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    p, q = p / p.sum(), q / q.sum()
    mid = 0.5 * (p + q)

    def kl(a):
        nz = a > 0
        return float(np.sum(a[nz] * np.log(a[nz] / mid[nz])))

    return 0.5 * kl(p) + 0.5 * kl(q)


def mode_jsd(a: ModeAssignment) -> float:
    """JSD between the mode histogram (unassigned included) and the uniform
    distribution over modes."""
    reference = np.append(np.full(a.n_modes, 1.0 / a.n_modes), 0.0)
    return jensen_shannon(a.counts, reference)


def within_mode_std(samples, a: ModeAssignment, m: GaussianMixture) -> float:
    """Count-weighted mean over modes of the RMS distance to the mode mean,
    divided by sqrt(d) so an isotropic Gaussian gives its sigma.

    Only modes holding at least two samples contribute.
    """
    pts, _ = as_points(samples, m.dim)
    total, weight = 0.0, 0
    for k in range(m.n_components):
        members = pts[a.labels == k]
        if len(members) < 2:
            continue
        rms = np.sqrt(np.mean(np.sum((members - m.means[k]) ** 2, axis=1)))
        total += len(members) * rms / np.sqrt(m.dim)
        weight += len(members)
    if weight == 0:
        raise ValueError("no mode has two or more assigned samples")
    return total / weight


def kolmogorov_sf(lam: float, terms: int = 100) -> float:
    """Survival function of the Kolmogorov distribution,
    2 * sum_j (-1)^(j-1) exp(-2 j^2 lam^2), truncated at ``terms``.

    Returns 1 where the alternating series has not converged, which only
    happens for small ``lam`` where the true value is 1 to double precision.
    """
    if lam <= 0:
        return 1.0
    j = np.arange(1, terms + 1)
    t = np.exp(-2.0 * j**2 * lam**2)
    if t[-1] > 1e-16 * t[0]:
        return 1.0
    return float(min(1.0, max(0.0, 2.0 * np.sum(np.where(j % 2, t, -t)))))


def ks_two_sample(a, b) -> tuple[float, float]:
    """Two-sample KS statistic and its asymptotic p-value."""
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    if len(a) == 0 or len(b) == 0:
        raise ValueError("both samples must be non-empty")
    grid = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, grid, side="right") / len(a)
    cdf_b = np.searchsorted(b, grid, side="right") / len(b)
    stat = float(np.max(np.abs(cdf_a - cdf_b)))
    ne = len(a) * len(b) / (len(a) + len(b))
    return stat, kolmogorov_sf(np.sqrt(ne) * stat)


def ks_multivariate(a, b) -> tuple[float, float]:
    """Per-coordinate KS tests, Bonferroni-combined.

    Returns the largest statistic and ``min(1, d * min p)``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a = a[:, None] if a.ndim == 1 else a
    b = b[:, None] if b.ndim == 1 else b
    if a.shape[1] != b.shape[1]:
        raise ValueError("dimension mismatch")
    results = [ks_two_sample(a[:, j], b[:, j]) for j in range(a.shape[1])]
    stat = max(r[0] for r in results)
    p = min(1.0, a.shape[1] * min(r[1] for r in results))
    return stat, p


def roc_auc(scores, labels) -> float:
    """Area under the ROC curve via the rank-sum statistic (ties averaged)."""
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(labels).ravel().astype(bool)
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes")
    ranks = rankdata(s)
    return float((ranks[y].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def binned_kl(samples, cdf, edges) -> float:
    """KL(empirical histogram || reference) over the bins ``edges``.

    ``cdf`` gives the reference distribution; mass outside the edges is
    folded into the end bins.
    """
    x = np.asarray(samples, dtype=float).ravel()
    counts = np.histogram(np.clip(x, edges[0], edges[-1]), bins=edges)[0]
    p = counts / counts.sum()
    c = cdf(np.asarray(edges, dtype=float))
    c[0], c[-1] = 0.0, 1.0
    q = np.diff(c)
    nz = p > 0
    return float(np.sum(p[nz] * np.log(p[nz] / q[nz])))
