"""Discriminator-driven sample selectors for a black-box generator.

* Metropolis-Hastings independence sampler: one chain per output sample,
  proposals drawn from the generator, acceptance computed from discriminator
  scores alone, chains started at real data.
* Discriminator rejection sampling (DRS) with a pilot-estimated bound.

Both only call ``g.sample(n, rng)`` and ``d.score(points)``.  Scores are
clamped to ``[EPS, 1 - EPS]`` before use so odds ratios stay finite.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .calibration import EPS

__all__ = [
    "MHConfig",
    "ChainResult",
    "MHSamples",
    "DRSConfig",
    "DRSSamples",
    "RestartBudgetExceeded",
    "DRSBudgetExceeded",
    "substream",
    "mh_accept_prob",
    "mh_chain",
    "mh_sample_iid",
    "drs_estimate_max",
    "drs_accept_prob",
    "drs_sample",
    "drs_sample_many",
]

_BLOCK = 2048
TRACE_FIELDS = ("step", "d_current", "d_proposal", "alpha", "accepted")


class RestartBudgetExceeded(RuntimeError):
    """A chain accepted nothing through every allowed restart."""

    def __init__(self, chain: int, restarts: int, max_alpha: float):
        self.chain, self.restarts, self.max_alpha = chain, restarts, max_alpha
        super().__init__(
            f"chain {chain}: no proposal accepted after {restarts} restarts "
            f"(largest acceptance probability seen {max_alpha:.3g})"
        )


class DRSBudgetExceeded(RuntimeError):
    pass


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent counter-based stream for ``(seed, *key)``.

    Streams depend only on their key, never on how many other streams were
    created or in which order.
    """
    ss = np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def _clamp(s):
    return np.clip(np.asarray(s, dtype=float), EPS, 1.0 - EPS)


def mh_accept_prob(d_current, d_proposal):
    """min(1, (1/D(x) - 1) / (1/D(x') - 1)) for current x and proposal x'."""
    dc = np.asarray(d_current, dtype=float)
    dp = np.asarray(d_proposal, dtype=float)
    out = np.minimum(1.0, (1.0 - dc) * dp / (dc * (1.0 - dp)))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class MHConfig:
    k: int = 640
    restart_on_no_accept: bool = True
    max_restarts: int = 100
    seed: int = 0
    record_trace: bool = False

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("chain length k must be at least 1")
        if self.max_restarts < 0:
            raise ValueError("max_restarts must be non-negative")


@dataclass
class ChainResult:
    output: np.ndarray
    accepted_steps: int
    first_accept_index: int | None
    restarted: bool
    n_restarts: int = 0
    trace: dict | None = None


@dataclass
class MHSamples:
    """Outputs of independent chains plus per-chain bookkeeping.

    ``accepted_steps`` and ``first_accept`` (1-based, -1 for none) refer to
    each chain's final pass.  ``states`` maps a step count to the chain
    states after that many steps of the first pass, rejections counted as
    repeats.
    """

    samples: np.ndarray
    accepted_steps: np.ndarray
    first_accept: np.ndarray
    n_restarts: np.ndarray
    x0_index: np.ndarray
    k: int
    states: dict = field(default_factory=dict)
    trace: dict | None = None

    def __len__(self):
        return len(self.samples)

    @property
    def acceptance_rate(self) -> float:
        if len(self) == 0:
            return float("nan")
        return float(self.accepted_steps.mean() / self.k)

    @property
    def restart_rate(self) -> float:
        return float(np.mean(self.n_restarts > 0)) if len(self) else float("nan")

    @property
    def draws(self) -> np.ndarray:
        """Generator draws per chain; a restart's fresh start counts as one."""
        return self.k * (1 + self.n_restarts) + self.n_restarts


def _pass(g, d, x0, rngs, k, record_steps=(), trace=False):
    """One K-step pass of several chains, each drawing from its own stream."""
    n = len(rngs)
    props = np.stack([g.sample(k, r) for r in rngs])
    u = np.stack([r.random(k) for r in rngs])
    dim = props.shape[-1]
    d_prop = _clamp(d.score(props.reshape(-1, dim))).reshape(n, k)
    cur = np.array(x0, dtype=float).reshape(n, dim)
    d_cur = _clamp(d.score(cur))
    accepted = np.zeros(n, dtype=int)
    first = np.full(n, -1)
    max_alpha = np.zeros(n)
    states = {}
    rec = {f: np.empty((n, k)) for f in TRACE_FIELDS[1:]} if trace else None
    for j in range(k):
        alpha = mh_accept_prob(d_cur, d_prop[:, j])
        acc = u[:, j] <= alpha
        if trace:
            rec["d_current"][:, j] = d_cur
            rec["d_proposal"][:, j] = d_prop[:, j]
            rec["alpha"][:, j] = alpha
            rec["accepted"][:, j] = acc
        np.maximum(max_alpha, alpha, out=max_alpha)
        cur[acc] = props[acc, j]
        d_cur[acc] = d_prop[acc, j]
        first[(first < 0) & acc] = j + 1
        accepted += acc
        if j + 1 in record_steps:
            states[j + 1] = cur.copy()
    return cur, accepted, first, max_alpha, states, rec


def _run_chains(g, d, x0, rngs, cfg: MHConfig, record_steps=(), chain_ids=None):
    """Run chains with Algorithm-1 restarts; per-chain randomness is fully
    determined by each chain's own stream."""
    n = len(rngs)
    chain_ids = np.arange(n) if chain_ids is None else chain_ids
    out, acc, first, max_alpha, states, rec = _pass(
        g, d, x0, rngs, cfg.k, record_steps, cfg.record_trace
    )
    restarts = np.zeros(n, dtype=int)
    traces = [rec] if cfg.record_trace else None
    pending = np.flatnonzero(acc == 0) if cfg.restart_on_no_accept else []
    while len(pending):
        over = pending[restarts[pending] >= cfg.max_restarts]
        if len(over):
            i = over[0]
            raise RestartBudgetExceeded(int(chain_ids[i]), int(restarts[i]),
                                        float(max_alpha[i]))
        restarts[pending] += 1
        sub = [rngs[i] for i in pending]
        fresh = np.concatenate([g.sample(1, r) for r in sub])
        o, a, f, m, _, r = _pass(g, d, fresh, sub, cfg.k, (), cfg.record_trace)
        out[pending], acc[pending], first[pending] = o, a, f
        max_alpha[pending] = np.maximum(max_alpha[pending], m)
        if cfg.record_trace:
            traces.append((pending, restarts[pending].copy(), r))
        pending = pending[a == 0]
    return out, acc, first, restarts, states, _flatten_trace(traces, chain_ids, cfg.k)


def _flatten_trace(traces, chain_ids, k):
    if traces is None:
        return None
    first, rest = traces[0], traces[1:]
    n = len(chain_ids)
    steps = np.tile(np.arange(1, k + 1), (n, 1))
    parts = [{"chain_id": np.repeat(chain_ids, k), "step": steps.ravel(),
              **{f: v.ravel() for f, v in first.items()}}]
    for rows, n_restart, rec in rest:
        steps = n_restart[:, None] * k + np.arange(1, k + 1)[None, :]
        parts.append({"chain_id": np.repeat(chain_ids[rows], k),
                      "step": steps.ravel(),
                      **{f: v.ravel() for f, v in rec.items()}})
    merged = {key: np.concatenate([p[key] for p in parts]) for key in parts[0]}
    order = np.lexsort((merged["step"], merged["chain_id"]))
    merged = {key: v[order] for key, v in merged.items()}
    merged["accepted"] = merged["accepted"].astype(int)
    return merged


def mh_chain(g, d, x0, cfg: MHConfig, rng: np.random.Generator) -> ChainResult:
    """Run one independence-sampler chain started at the real point ``x0``.

    If no proposal is accepted in ``cfg.k`` steps and restarts are enabled,
    the chain is rerun from a fresh generator draw, up to
    ``cfg.max_restarts`` times, so the real start is never returned.
    """
    x0 = np.asarray(x0, dtype=float).reshape(1, -1)
    out, acc, first, restarts, _, trace = _run_chains(g, d, x0, [rng], cfg)
    return ChainResult(
        output=out[0],
        accepted_steps=int(acc[0]),
        first_accept_index=None if first[0] < 0 else int(first[0]),
        restarted=bool(restarts[0]),
        n_restarts=int(restarts[0]),
        trace=trace,
    )


def mh_sample_iid(g, d, real_data, n: int, cfg: MHConfig,
                  record_steps=()) -> MHSamples:
    """``n`` iid samples, one chain each.

    Chain ``i`` uses ``substream(cfg.seed, i)``: it first picks its start
    uniformly from ``real_data``, then draws its proposals and uniforms.
    ``record_steps`` lists step counts whose first-pass states to keep.
    """
    real = np.asarray(real_data, dtype=float)
    if real.ndim == 1:
        real = real[:, None]
    if len(real) == 0:
        raise ValueError("real_data must be non-empty")
    if n < 0:
        raise ValueError("n must be non-negative")
    record_steps = set(int(s) for s in record_steps)
    if any(not 1 <= s <= cfg.k for s in record_steps):
        raise ValueError("record_steps must lie in 1..k")
    dim = real.shape[1]
    samples = np.empty((n, dim))
    acc = np.zeros(n, dtype=int)
    first = np.full(n, -1)
    restarts = np.zeros(n, dtype=int)
    x0_index = np.zeros(n, dtype=int)
    states = {s: np.empty((n, dim)) for s in record_steps}
    traces = []
    for lo in range(0, n, _BLOCK):
        ids = np.arange(lo, min(n, lo + _BLOCK))
        rngs = [substream(cfg.seed, i) for i in ids]
        x0_index[ids] = [r.integers(len(real)) for r in rngs]
        o, a, f, rs, st, tr = _run_chains(
            g, d, real[x0_index[ids]], rngs, cfg, record_steps, ids
        )
        samples[ids], acc[ids], first[ids], restarts[ids] = o, a, f, rs
        for s, v in st.items():
            states[s][ids] = v
        if tr is not None:
            traces.append(tr)
    trace = None
    if cfg.record_trace and traces:
        trace = {key: np.concatenate([t[key] for t in traces]) for key in traces[0]}
    return MHSamples(samples, acc, first, restarts, x0_index, cfg.k, states, trace)


# --------------------------------------------------------------------------
# discriminator rejection sampling


@dataclass(frozen=True)
class DRSConfig:
    """``sigmoid`` selects the logit-shift acceptance even when
    ``gamma == 0``; otherwise gamma 0 means plain capped-ratio rejection."""

    n_pilot: int = 10000
    gamma: float = 0.0
    max_draws: int = 10**6
    seed: int = 0
    sigmoid: bool = False
    batch: int = 8192

    def __post_init__(self):
        if self.n_pilot < 1:
            raise ValueError("n_pilot must be at least 1")
        if self.max_draws < 1:
            raise ValueError("max_draws must be at least 1")


@dataclass
class DRSSamples:
    samples: np.ndarray
    draws_used: np.ndarray
    m_hat: float

    @property
    def acceptance_rate(self) -> float:
        total = self.draws_used.sum()
        return float(len(self.samples) / total) if total else float("nan")


def _odds(s):
    s = _clamp(s)
    return s / (1.0 - s)


def drs_estimate_max(g, d, n_pilot: int, rng: np.random.Generator) -> float:
    """Largest odds ratio D / (1 - D) over ``n_pilot`` generator draws."""
    if n_pilot < 1:
        raise ValueError("n_pilot must be at least 1")
    return float(np.max(_odds(d.score(g.sample(n_pilot, rng)))))


def drs_accept_prob(scores, m_hat: float, gamma: float = 0.0,
                    sigmoid: bool = False) -> np.ndarray:
    """min(1, r / M) for gamma 0, else sigmoid(log r - log M - gamma),
    with r = D / (1 - D)."""
    if not m_hat > 0:
        raise ValueError("m_hat must be positive")
    odds = _odds(scores)
    if gamma == 0 and not sigmoid:
        return np.minimum(1.0, odds / m_hat)
    return expit(np.log(odds) - np.log(m_hat) - gamma)


def drs_sample(g, d, m_hat: float, gamma: float, cfg: DRSConfig,
               rng: np.random.Generator):
    """Draw generator samples until one is accepted.

    Returns the accepted point and how many draws it took.
    """
    used = 0
    while used < cfg.max_draws:
        b = min(cfg.batch, cfg.max_draws - used)
        x = g.sample(b, rng)
        u = rng.random(b)
        hit = np.flatnonzero(u < drs_accept_prob(d.score(x), m_hat, gamma, cfg.sigmoid))
        if len(hit):
            return x[hit[0]], used + int(hit[0]) + 1
        used += b
    raise DRSBudgetExceeded(f"no draw accepted within {cfg.max_draws} draws")


def drs_sample_many(g, d, m_hat: float, n: int, cfg: DRSConfig,
                    rng: np.random.Generator) -> DRSSamples:
    """``n`` DRS samples from one stream.

    ``draws_used[i]`` counts the draws since the previous acceptance,
    including the accepted one.
    """
    dim = g.dim
    out, used = [], []
    since = 0
    while len(out) < n:
        x = g.sample(cfg.batch, rng)
        u = rng.random(cfg.batch)
        hit = np.flatnonzero(
            u < drs_accept_prob(d.score(x), m_hat, cfg.gamma, cfg.sigmoid)
        )
        hit = hit[: n - len(out)]
        if len(hit):
            gaps = np.diff(np.concatenate([[-1], hit]))
            gaps[0] += since
            if gaps.max() > cfg.max_draws:
                raise DRSBudgetExceeded(
                    f"a sample needed more than {cfg.max_draws} draws")
            out.extend(x[hit])
            used.extend(gaps)
            since = cfg.batch - 1 - hit[-1]
        else:
            since += cfg.batch
        if since > cfg.max_draws:
            raise DRSBudgetExceeded(f"no draw accepted within {cfg.max_draws} draws")
    samples = np.array(out).reshape(n, dim)
    return DRSSamples(samples, np.asarray(used, dtype=int), float(m_hat))
