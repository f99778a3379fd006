"""Monotone score-to-probability calibrators and the Z calibration test.

Calibrators are fitted on a held-out, class-balanced set of discriminator
scores and then composed with the discriminator, see
:class:`CalibratedDiscriminator`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, logit

from .models import Discriminator

__all__ = [
    "EPS",
    "KINDS",
    "Calibrator",
    "CalibrationSet",
    "CalibratedDiscriminator",
    "make_calibration_set",
    "fit_calibrator",
    "apply_calibrator",
    "pava",
    "fit_logistic",
    "z_statistic",
]

EPS = 1e-6
KINDS = ("identity", "logistic", "isotonic", "beta")


@dataclass(frozen=True)
class CalibrationSet:
    """Balanced held-out scores; label 1 is real, 0 is generated."""

    scores: np.ndarray
    labels: np.ndarray
    is_probability: bool = True

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=float).ravel()
        labels = np.asarray(self.labels).ravel().astype(int)
        if scores.shape != labels.shape:
            raise ValueError("scores and labels differ in length")
        if not np.isin(labels, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")
        n_pos = int(labels.sum())
        if n_pos == 0 or 2 * n_pos != len(labels):
            raise ValueError("calibration set needs equal, non-zero class counts")
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return len(self.scores)


def make_calibration_set(
    real, fake, d: Discriminator, rng: np.random.Generator | None = None
) -> CalibrationSet:
    """Score an even mix of real and generated points with ``d``.

    Rows are shuffled with ``rng`` when one is given.
    """
    real = np.asarray(real, dtype=float)
    fake = np.asarray(fake, dtype=float)
    if len(real) != len(fake):
        raise ValueError(f"need |real| == |fake|, got {len(real)} and {len(fake)}")
    if len(real) < 2:
        raise ValueError("need at least two real and two generated points")
    scores = np.concatenate([d.score(real), d.score(fake)])
    labels = np.concatenate([np.ones(len(real), int), np.zeros(len(fake), int)])
    if rng is not None:
        order = rng.permutation(len(scores))
        scores, labels = scores[order], labels[order]
    return CalibrationSet(scores, labels, d.is_probability)


# --------------------------------------------------------------------------
# fitting


def pava(y, w=None) -> np.ndarray:
    """Weighted isotonic (non-decreasing) least-squares fit by pool adjacent
    violators."""
    y = np.asarray(y, dtype=float)
    w = np.ones_like(y) if w is None else np.asarray(w, dtype=float)
    # blocks hold weighted sums so integer data pools exactly
    sums, weights, sizes = [], [], []
    for yi, wi in zip(y, w):
        sums.append(yi * wi)
        weights.append(wi)
        sizes.append(1)
        while len(sums) > 1 and sums[-2] / weights[-2] > sums[-1] / weights[-1]:
            s2, w2, n2 = sums.pop(), weights.pop(), sizes.pop()
            sums[-1] += s2
            weights[-1] += w2
            sizes[-1] += n2
    values = np.divide(sums, weights)
    return np.repeat(values, sizes)


def _nll(theta, X, y):
    z = X @ theta
    return float(np.sum(np.logaddexp(0.0, z) - y * z))


def fit_logistic(X, y, tol: float = 1e-10, max_iter: int = 100) -> np.ndarray:
    """Maximum-likelihood logistic regression by damped Newton steps.

    ``X`` already contains any intercept column.  Stops when the Newton step
    is below ``tol`` in every coordinate or after ``max_iter`` iterations.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    theta = np.zeros(X.shape[1])
    f = _nll(theta, X, y)
    for _ in range(max_iter):
        p = expit(X @ theta)
        grad = X.T @ (p - y)
        hess = (X * (p * (1 - p))[:, None]).T @ X
        hess += 1e-12 * np.eye(len(theta))
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(hess, grad, rcond=None)[0]
        t = 1.0
        while True:
            cand = theta - t * step
            fc = _nll(cand, X, y)
            if fc <= f or t < 1e-10:
                break
            t *= 0.5
        theta, f = cand, fc
        if np.max(np.abs(t * step)) < tol:
            break
    return theta


@dataclass(frozen=True)
class Calibrator:
    """A fitted monotone map from raw discriminator scores to probabilities.

    ``params`` by kind: ``logistic`` has slope ``a`` and intercept ``b``;
    ``beta`` has ``a``, ``b``, ``c`` for
    ``sigmoid(a ln s - b ln(1 - s) + c)``; ``isotonic`` has breakpoints ``x``
    and fitted values ``y``.  ``logit_input`` marks probability-valued inputs,
    which the logistic map reads on the logit scale.
    """

    kind: str
    params: dict = field(default_factory=dict)
    logit_input: bool = True
    eps: float = EPS

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown calibrator kind {self.kind!r}")

    def apply(self, scores) -> np.ndarray:
        s = np.asarray(scores, dtype=float)
        if self.kind == "identity":
            p = s if self.logit_input else expit(s)
        elif self.kind == "logistic":
            z = _safe_logit(s) if self.logit_input else s
            p = expit(self.params["a"] * z + self.params["b"])
        elif self.kind == "beta":
            p = expit(_beta_features(s) @ [self.params[k] for k in "abc"])
        else:
            p = np.interp(s, self.params["x"], self.params["y"])
        return np.clip(p, self.eps, 1.0 - self.eps)

    __call__ = apply

    def to_dict(self) -> dict:
        params = {
            k: (np.asarray(v).tolist() if isinstance(v, np.ndarray) else v)
            for k, v in self.params.items()
        }
        return {
            "kind": self.kind,
            "params": params,
            "logit_input": self.logit_input,
            "eps": self.eps,
        }

    @classmethod
    def from_dict(cls, spec: dict) -> "Calibrator":
        params = dict(spec.get("params", {}))
        if spec["kind"] == "isotonic":
            params = {k: np.asarray(params[k], dtype=float) for k in ("x", "y")}
        return cls(spec["kind"], params, spec.get("logit_input", True),
                   spec.get("eps", EPS))


def _safe_logit(s):
    return logit(np.clip(s, 1e-300, np.nextafter(1.0, 0.0)))


def _beta_features(s):
    s = np.clip(s, 1e-300, np.nextafter(1.0, 0.0))
    return np.column_stack([np.log(s), -np.log1p(-s), np.ones_like(s)])


def fit_calibrator(kind: str, cs: CalibrationSet, eps: float = EPS) -> Calibrator:
    """Fit a calibrator of the given ``kind`` on a calibration set."""
    if kind not in KINDS:
        raise ValueError(f"unknown calibrator kind {kind!r}; pick one of {KINDS}")
    s, y = cs.scores, cs.labels.astype(float)
    if kind == "identity":
        return Calibrator("identity", {}, cs.is_probability, eps)
    if kind == "isotonic":
        xs, inverse = np.unique(s, return_inverse=True)
        counts = np.bincount(inverse)
        means = np.bincount(inverse, weights=y) / counts
        return Calibrator(
            "isotonic", {"x": xs, "y": pava(means, counts)}, cs.is_probability, eps
        )
    if np.ptp(s) == 0:
        raise ValueError(f"{kind} calibration needs scores that are not all identical")
    if kind == "logistic":
        z = _safe_logit(s) if cs.is_probability else s
        a, b = fit_logistic(np.column_stack([z, np.ones_like(z)]), y)
        return Calibrator("logistic", {"a": float(a), "b": float(b)},
                          cs.is_probability, eps)
    if not cs.is_probability:
        raise ValueError("beta calibration needs probability-valued scores")
    X = _beta_features(s)
    theta = fit_logistic(X, y)
    # non-negative slopes keep the map monotone: clip a negative slope to 0
    # and refit the remaining coefficients without that feature
    keep = [True, True, True]
    while theta[0] < 0 or theta[1] < 0:
        keep[int(np.argmin(theta[:2]))] = False
        theta = np.zeros(3)
        theta[keep] = fit_logistic(X[:, keep], y)
    a, b, c = (float(v) for v in theta)
    return Calibrator("beta", {"a": a, "b": b, "c": c}, True, eps)


def apply_calibrator(c: Calibrator, score):
    out = c.apply(score)
    return float(out) if np.ndim(out) == 0 else out


class CalibratedDiscriminator(Discriminator):
    """Discriminator whose scores are passed through a fitted calibrator."""

    is_probability = True

    def __init__(self, base: Discriminator, calibrator: Calibrator):
        self.base = base
        self.calibrator = calibrator
        self.dim = base.dim

    def score(self, x) -> np.ndarray:
        return self.calibrator.apply(self.base.score(x))


# --------------------------------------------------------------------------
# diagnostics


def z_statistic(probs, labels) -> float:
    """Dawid's calibration statistic; standard normal under calibration."""
    p = np.asarray(probs, dtype=float).ravel()
    y = np.asarray(labels, dtype=float).ravel()
    if len(p) != len(y) or len(p) == 0:
        raise ValueError("probs and labels must have the same non-zero length")
    var = float(np.sum(p * (1 - p)))
    if var <= 0:
        raise ValueError("Z is undefined: every probability is exactly 0 or 1")
    return float(np.sum(y - p) / np.sqrt(var))
