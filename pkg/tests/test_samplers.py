import numpy as np
import pytest
from scipy.stats import norm

from mhgan.calibration import EPS
from mhgan.metrics import binned_kl, ks_two_sample, roc_auc
from mhgan.mixtures import GaussianMixture, make_univariate4
from mhgan.models import FunctionDiscriminator, MixtureGenerator, oracle_discriminator
from mhgan.samplers import (
    DRSBudgetExceeded,
    DRSConfig,
    MHConfig,
    RestartBudgetExceeded,
    drs_accept_prob,
    drs_estimate_max,
    drs_sample,
    drs_sample_many,
    mh_accept_prob,
    mh_chain,
    mh_sample_iid,
    substream,
)

HALF = FunctionDiscriminator(lambda x: np.full(len(x), 0.5), dim=1)


class CountingGenerator:
    """Emits 0, 1, 2, ... so tests can see exactly which draws were used."""

    dim = 1

    def __init__(self):
        self.next = 0

    def sample(self, n, rng):
        out = np.arange(self.next, self.next + n, dtype=float)[:, None]
        self.next += n
        return out


def univariate_setup():
    p_data, p_g = make_univariate4(), make_univariate4(3)
    return p_data, MixtureGenerator(p_g), oracle_discriminator(p_data, p_g)


# -- acceptance probability -----------------------------------------------------

def test_accept_prob_examples():
    assert mh_accept_prob(0.3, 0.3) == 1.0
    assert mh_accept_prob(2 / 3, 1 / 2) == pytest.approx(0.5, rel=1e-15)
    assert mh_accept_prob(1 / 2, 2 / 3) == 1.0
    assert isinstance(mh_accept_prob(0.5, 0.5), float)


def test_accept_prob_matches_density_ratio():
    # odds of the optimal discriminator are the density ratio p_data / p_g
    p_data, g, d = univariate_setup()
    rng = np.random.default_rng(0)
    x, xp = rng.uniform(-4, 4, (2, 1000, 1))
    ratio = lambda z: np.exp(p_data.logpdf(z) - g.logpdf(z))  # noqa: E731
    expected = np.minimum(1.0, ratio(xp) / ratio(x))
    np.testing.assert_allclose(mh_accept_prob(d.score(x), d.score(xp)), expected, rtol=1e-9)


def test_accept_prob_monotone():
    grid = np.linspace(EPS, 1 - EPS, 200)
    for c in (0.1, 0.5, 0.9):
        a = mh_accept_prob(np.full_like(grid, c), grid)
        below = grid < c
        assert np.all(np.diff(a[below]) > 0)
        b = mh_accept_prob(grid, np.full_like(grid, c))
        above = grid > c
        assert np.all(np.diff(b[above]) < 0)


def test_clamped_extremes_are_finite():
    a = mh_accept_prob(np.array([EPS, 1 - EPS]), np.array([1 - EPS, EPS]))
    assert np.all(np.isfinite(a)) and a[0] == 1.0 and 0 < a[1] < 1e-11


# -- single chains --------------------------------------------------------------------

def test_flat_discriminator_accepts_everything():
    g = MixtureGenerator(make_univariate4())
    res = mh_chain(g, HALF, [0.0], MHConfig(k=50), substream(1, 0))
    assert res.accepted_steps == 50 and res.first_accept_index == 1
    # the output is the 50th proposal of the same stream
    proposals = g.sample(50, substream(1, 0))
    assert np.array_equal(res.output, proposals[-1])
    assert not res.restarted


def test_k1_strong_proposal_is_taken():
    d = FunctionDiscriminator(lambda x: np.where(x[:, 0] > 50, 0.01, 1 - EPS), dim=1)
    g = MixtureGenerator(GaussianMixture.from_components([[0.0]], 1.0))
    taken = sum(
        mh_chain(g, d, [100.0], MHConfig(k=1), substream(2, i)).accepted_steps
        for i in range(2000)
    )
    assert taken >= 0.999 * 2000


def test_restart_trace():
    # every generator draw scores EPS, the real start scores 1 - EPS
    d = FunctionDiscriminator(lambda x: np.where(x[:, 0] > 50, 1 - EPS, EPS), dim=1)
    g = CountingGenerator()
    cfg = MHConfig(k=5, record_trace=True)
    res = mh_chain(g, d, [100.0], cfg, substream(3, 0))
    assert res.restarted and res.n_restarts == 1
    assert res.accepted_steps == 5 and res.first_accept_index == 1
    t = res.trace
    assert list(t["step"]) == list(range(1, 11))
    assert list(t["accepted"]) == [0] * 5 + [1] * 5
    assert np.all(t["d_current"][:5] == 1 - EPS)
    assert np.all(t["alpha"][5:] == 1.0)
    # draws 0-4 were the first pass, 5 the new start, 6-10 the second pass
    assert res.output[0] == 10.0
    assert set(t) == {"chain_id", "step", "d_current", "d_proposal", "alpha", "accepted"}


def test_no_restart_keeps_real_start():
    d = FunctionDiscriminator(lambda x: np.where(x[:, 0] > 50, 1 - EPS, EPS), dim=1)
    cfg = MHConfig(k=5, restart_on_no_accept=False)
    res = mh_chain(CountingGenerator(), d, [100.0], cfg, substream(3, 0))
    assert res.output[0] == 100.0 and not res.restarted and res.first_accept_index is None


def test_restart_budget_error():
    d = FunctionDiscriminator(lambda x: np.where(x[:, 0] > 50, 1 - EPS, EPS), dim=1)
    with pytest.raises(RestartBudgetExceeded) as err:
        mh_chain(CountingGenerator(), d, [100.0], MHConfig(k=3, max_restarts=0),
                 substream(0, 0))
    assert err.value.restarts == 0 and err.value.max_alpha < 1e-10


def test_config_validation():
    with pytest.raises(ValueError):
        MHConfig(k=0)
    with pytest.raises(ValueError):
        MHConfig(max_restarts=-1)
    with pytest.raises(ValueError):
        DRSConfig(n_pilot=0)


# -- iid sampling ---------------------------------------------------------------------

def test_iid_empty():
    p_data, g, d = univariate_setup()
    out = mh_sample_iid(g, d, p_data.sample(10, np.random.default_rng(0)), 0, MHConfig())
    assert out.samples.shape == (0, 1)


def test_iid_requires_real_data():
    _, g, d = univariate_setup()
    with pytest.raises(ValueError):
        mh_sample_iid(g, d, np.zeros((0, 1)), 3, MHConfig())


def test_iid_equals_individual_chains():
    p_data, g, d = univariate_setup()
    real = p_data.sample(500, np.random.default_rng(1))
    cfg = MHConfig(k=40, seed=9)
    out = mh_sample_iid(g, d, real, 30, cfg)
    for i in range(30):
        rng = substream(9, i)
        idx = rng.integers(len(real))
        res = mh_chain(g, d, real[idx], cfg, rng)
        assert idx == out.x0_index[i]
        assert np.array_equal(res.output, out.samples[i])
        assert res.accepted_steps == out.accepted_steps[i]
        assert res.n_restarts == out.n_restarts[i]


def test_iid_chain_streams_do_not_depend_on_n():
    p_data, g, d = univariate_setup()
    real = p_data.sample(500, np.random.default_rng(1))
    a = mh_sample_iid(g, d, real, 10, MHConfig(k=30))
    b = mh_sample_iid(g, d, real, 3000, MHConfig(k=30))
    assert np.array_equal(a.samples, b.samples[:10])


def test_iid_determinism():
    p_data, g, d = univariate_setup()
    real = p_data.sample(500, np.random.default_rng(1))
    a = mh_sample_iid(g, d, real, 200, MHConfig(k=64, seed=5))
    b = mh_sample_iid(g, d, real, 200, MHConfig(k=64, seed=5))
    c = mh_sample_iid(g, d, real, 200, MHConfig(k=64, seed=6))
    assert a.samples.tobytes() == b.samples.tobytes()
    assert not np.array_equal(a.samples, c.samples)


def test_flat_discriminator_outputs_generator_draws():
    g = MixtureGenerator(make_univariate4(3))
    real = make_univariate4().sample(1000, np.random.default_rng(2))
    out = mh_sample_iid(g, HALF, real, 1000, MHConfig(k=20, seed=3))
    assert out.acceptance_rate == 1.0
    direct = g.sample(1000, np.random.default_rng(4))
    assert ks_two_sample(out.samples[:, 0], direct[:, 0])[1] > 0.01


def test_aggregates_and_trace_rows():
    p_data, g, d = univariate_setup()
    real = p_data.sample(100, np.random.default_rng(1))
    out = mh_sample_iid(g, d, real, 50, MHConfig(k=10, record_trace=True))
    assert 0 < out.acceptance_rate < 1
    assert 0 <= out.restart_rate <= 1
    n_rows = 10 * (50 + out.n_restarts.sum())
    assert len(out.trace["chain_id"]) == n_rows
    assert np.all(np.diff(out.trace["chain_id"]) >= 0)
    assert np.array_equal(out.draws, 10 * (1 + out.n_restarts) + out.n_restarts)


def test_record_steps_validation():
    p_data, g, d = univariate_setup()
    with pytest.raises(ValueError):
        mh_sample_iid(g, d, p_data.sample(5, np.random.default_rng(0)), 3,
                      MHConfig(k=10), record_steps=[11])


def test_marginals_contract_towards_data():
    # chains started from the generator approach p_data as k grows
    p_data, g, d = univariate_setup()
    starts = g.sample(10_000, np.random.default_rng(5))
    steps = [1, 5, 25, 125, 640]
    out = mh_sample_iid(g, d, starts, 10_000,
                        MHConfig(k=640, restart_on_no_accept=False, seed=6),
                        record_steps=steps)

    def cdf(x):
        return sum(w * norm.cdf(x, mu[0], s) for mu, s, w in
                   zip(p_data.means, p_data.sigmas, p_data.weights))

    edges = np.linspace(-5, 5, 51)
    kls = [binned_kl(out.states[k][:, 0], cdf, edges) for k in steps]
    assert all(b <= a + 0.01 for a, b in zip(kls, kls[1:]))
    assert kls[-1] < kls[0]


def test_acceptance_rate_falls_with_separation():
    p_data = GaussianMixture.from_components([[0.0]], 1.0)
    rates, aucs = [], []
    for shift in (1.466, 2.66):
        p_g = GaussianMixture.from_components([[shift]], 1.0)
        d = oracle_discriminator(p_data, p_g)
        rng = np.random.default_rng(7)
        x, y = p_data.sample(5000, rng), p_g.sample(5000, rng)
        aucs.append(roc_auc(np.r_[d.score(x), d.score(y)], np.r_[np.ones(5000), np.zeros(5000)]))
        out = mh_sample_iid(MixtureGenerator(p_g), d, x, 2000, MHConfig(k=100, seed=8))
        rates.append(out.acceptance_rate)
    assert aucs[0] == pytest.approx(0.85, abs=0.02)
    assert aucs[1] == pytest.approx(0.97, abs=0.01)
    assert rates[0] > rates[1]


# -- DRS ----------------------------------------------------------------------------

def test_drs_max_examples():
    g = MixtureGenerator(make_univariate4())
    assert drs_estimate_max(g, HALF, 100, np.random.default_rng(0)) == 1.0
    d = FunctionDiscriminator(lambda x: np.where(x[:, 0] == 3.0, 0.9, 0.5), dim=1)
    assert drs_estimate_max(CountingGenerator(), d, 10, None) == pytest.approx(9.0)
    with pytest.raises(ValueError):
        drs_estimate_max(g, HALF, 0, np.random.default_rng(0))


def test_drs_max_grows_with_pilot_size():
    _, g, d = univariate_setup()
    means = [np.mean([drs_estimate_max(g, d, n, substream(1, s)) for s in range(30)])
             for n in (100, 1000, 10_000)]
    assert means[0] < means[1] < means[2]


def test_drs_accept_prob_forms():
    assert drs_accept_prob(0.5, 1.0) == 1.0
    assert drs_accept_prob(0.5, 1.0, sigmoid=True) == 0.5
    assert drs_accept_prob(0.9, 9.0) == pytest.approx(1.0)
    assert drs_accept_prob(0.5, 4.0) == pytest.approx(0.25)
    assert drs_accept_prob(0.5, 1.0, gamma=50.0) < 1e-20
    with pytest.raises(ValueError):
        drs_accept_prob(0.5, 0.0)


def test_drs_flat_takes_first_draw():
    g = CountingGenerator()
    x, used = drs_sample(g, HALF, 1.0, 0.0, DRSConfig(batch=4), np.random.default_rng(0))
    assert used == 1 and x[0] == 0.0


def test_drs_budget():
    with pytest.raises(DRSBudgetExceeded):
        drs_sample(CountingGenerator(), HALF, 1.0, 1e3,
                   DRSConfig(max_draws=100, batch=32), np.random.default_rng(0))
    with pytest.raises(DRSBudgetExceeded):
        drs_sample_many(CountingGenerator(), HALF, 1.0, 5,
                        DRSConfig(max_draws=100, batch=32, gamma=1e3),
                        np.random.default_rng(0))


def test_drs_many_draw_accounting():
    g = CountingGenerator()
    d = FunctionDiscriminator(lambda x: np.where(x[:, 0] % 7 == 3, 0.5, EPS), dim=1)
    out = drs_sample_many(g, d, 1.0, 20, DRSConfig(batch=16), np.random.default_rng(0))
    # acceptance is 1 for multiples of 7 plus 3 and ~1e-6 elsewhere
    assert np.array_equal(out.samples[:, 0], 3 + 7 * np.arange(20))
    assert out.draws_used[0] == 4 and np.all(out.draws_used[1:] == 7)
    assert out.acceptance_rate == pytest.approx(20 / out.draws_used.sum())


def test_drs_recovers_target():
    p_data, g, d = univariate_setup()
    rng = np.random.default_rng(3)
    m_hat = drs_estimate_max(g, d, 10_000, rng)
    out = drs_sample_many(g, d, m_hat, 5000, DRSConfig(), rng)
    # rejection sampling cannot create mass beyond the pilot bound, but the
    # kept modes must be balanced
    near = np.argmin(np.abs(out.samples - p_data.means[:, 0]), axis=1)
    frac = np.bincount(near, minlength=4)[:3] / len(near)
    assert np.ptp(frac) < 0.05
