import threading

import numpy as np
import pytest
from scipy import stats

from parascope.ensemble import DomainSpec, ParameterSpace
from parascope.errors import ConfigError, NumericalError
from parascope.hmc import (
    HmcConfig,
    SampleSet,
    leapfrog,
    log_posterior_and_grad,
    mh_step,
    run_chains,
    tune_step_size,
    variance_map,
)


def std_normal(z):
    z = np.atleast_2d(z)
    return -0.5 * (z**2).sum(axis=1), -z


def wide_space(half, d=2):
    return ParameterSpace(np.full(d, -half), np.full(d, half))


# ---------------------------------------------------------------- leapfrog


def test_leapfrog_free_particle():
    rng = np.random.default_rng(0)
    z = rng.normal(size=(4, 3))
    p = rng.normal(size=(4, 3))
    z2, p2 = leapfrog(z, p, eps=0.05, n_steps=7, grad_fn=np.zeros_like)
    np.testing.assert_allclose(z2, z + 7 * 0.05 * p, rtol=0, atol=1e-14)
    np.testing.assert_array_equal(p2, -p)


def test_leapfrog_energy_conservation_harmonic():
    # U = ||z||^2 / 2, H measured exactly before and after
    rng = np.random.default_rng(1)
    z = rng.normal(size=(8, 3))
    p = rng.normal(size=(8, 3))
    h0 = 0.5 * (z**2).sum(axis=1) + 0.5 * (p**2).sum(axis=1)
    z2, p2 = leapfrog(z, p, eps=0.01, n_steps=100, grad_fn=lambda q: q)
    h1 = 0.5 * (z2**2).sum(axis=1) + 0.5 * (p2**2).sum(axis=1)
    assert np.abs(h1 - h0).max() < 1e-3


def test_leapfrog_is_an_involution():
    # momentum negation at the end makes the map its own inverse
    rng = np.random.default_rng(2)
    z = rng.normal(size=(5, 2))
    p = rng.normal(size=(5, 2))
    z2, p2 = leapfrog(z, p, eps=0.1, n_steps=13, grad_fn=lambda q: q)
    z3, p3 = leapfrog(z2, p2, eps=0.1, n_steps=13, grad_fn=lambda q: q)
    np.testing.assert_allclose(z3, z, rtol=0, atol=1e-10)
    np.testing.assert_allclose(p3, p, rtol=0, atol=1e-10)


def test_leapfrog_rejects_bad_config():
    z = np.zeros((1, 2))
    with pytest.raises(ConfigError):
        leapfrog(z, z, eps=0.0, n_steps=5, grad_fn=np.zeros_like)
    with pytest.raises(ConfigError):
        leapfrog(z, z, eps=0.1, n_steps=0, grad_fn=np.zeros_like)


# ---------------------------------------------------------------- mh_step


def test_mh_zero_delta_always_accepts():
    rng = np.random.default_rng(0)
    state = np.zeros((64, 2))
    prop = np.ones((64, 2))
    acc, new = mh_step(state, prop, np.zeros(64), rng)
    assert acc.all()
    np.testing.assert_array_equal(new, prop)


def test_mh_infinite_delta_always_rejects():
    rng = np.random.default_rng(0)
    state = np.zeros((64, 2))
    prop = np.ones((64, 2))
    for dh in (np.inf, np.nan):
        acc, new = mh_step(state, prop, np.full(64, dh), rng)
        assert not acc.any()
        np.testing.assert_array_equal(new, state)


def test_mh_log2_delta_accepts_half_the_time():
    rng = np.random.default_rng(7)
    n = 100_000
    acc, _ = mh_step(np.zeros((n, 1)), np.ones((n, 1)), np.full(n, np.log(2.0)), rng)
    assert abs(acc.mean() - 0.5) < 0.01


# ---------------------------------------------------------------- tuning


def test_tuner_leaves_target_band_alone():
    assert tune_step_size(0.5, 0.02) == 0.02


def test_tuner_grows_and_shrinks_ten_percent():
    assert tune_step_size(0.9, 0.01) == pytest.approx(0.011)
    assert tune_step_size(0.1, 0.01) == pytest.approx(0.009)
    # five consecutive hot windows compound
    eps = 0.01
    for _ in range(5):
        eps = tune_step_size(0.9, eps)
    assert eps == pytest.approx(0.01 * 1.1**5)


# ------------------------------------------------------- posterior assembly


def test_log_posterior_prior_only_matches_prior(toy_prior_model):
    prior, model = toy_prior_model
    rng = np.random.default_rng(0)
    z = np.random.default_rng(5).uniform(-0.5, 0.5, size=(6, model.space.dim))
    from parascope.prior import log_prior_and_grad

    v, g = log_posterior_and_grad(prior, model, None, z, rng, include_likelihood=False)
    pv, pg = log_prior_and_grad(prior, z)
    np.testing.assert_array_equal(v, pv)
    np.testing.assert_array_equal(g, pg)


def test_log_posterior_is_prior_plus_likelihood(toy_prior_model, toy_feature):
    prior, model = toy_prior_model
    rng = np.random.default_rng(0)
    z = np.random.default_rng(6).uniform(-0.5, 0.5, size=(4, model.space.dim))
    from parascope import features
    from parascope.prior import log_prior_and_grad

    pts = features.sample_region(toy_feature, np.random.default_rng(1))
    v, g = log_posterior_and_grad(prior, model, toy_feature, z, rng, points=pts)
    pv, pg = log_prior_and_grad(prior, z)
    lv, lg, _ = features.log_likelihood_and_grad(
        model, z, toy_feature, np.random.default_rng(2), points=pts
    )
    np.testing.assert_allclose(v, pv + lv, rtol=1e-12)
    np.testing.assert_allclose(g, pg + lg, rtol=1e-12)


def test_log_posterior_gradient_matches_finite_differences(toy_prior_model, toy_feature):
    prior, model = toy_prior_model
    rng = np.random.default_rng(0)
    pts = np.random.default_rng(3)
    fixed = None
    z = np.random.default_rng(9).uniform(-0.4, 0.4, size=(5, model.space.dim))
    from parascope import features

    fixed = features.sample_region(toy_feature, pts)
    v, g = log_posterior_and_grad(prior, model, toy_feature, z, rng, points=fixed)
    h = 1e-6
    for j in range(model.space.dim):
        zp = z.copy()
        zp[:, j] += h
        zm = z.copy()
        zm[:, j] -= h
        vp, _ = log_posterior_and_grad(prior, model, toy_feature, zp, rng, points=fixed)
        vm, _ = log_posterior_and_grad(prior, model, toy_feature, zm, rng, points=fixed)
        fd = (vp - vm) / (2 * h)
        np.testing.assert_allclose(g[:, j], fd, rtol=2e-4, atol=1e-7)


def test_log_posterior_flags_nonfinite_chain(toy_prior_model, toy_feature):
    prior, model = toy_prior_model
    import dataclasses

    bad = dataclasses.replace(model, weights=[w * np.nan for w in model.weights])
    z = np.zeros((3, model.space.dim))
    with pytest.raises(NumericalError):
        log_posterior_and_grad(prior, bad, toy_feature, z, np.random.default_rng(0))


# ------------------------------------------------------------- run_chains


def test_injected_target_gradient_is_chain_ruled():
    from parascope.hmc import _InjectedTarget

    space = wide_space(1.0)  # scale 1: normalized == physical
    tgt = _InjectedTarget(std_normal, space)
    z = np.array([[0.3, -0.2], [0.0, 0.5]])
    v, g = tgt.value_and_grad(z, None)
    np.testing.assert_allclose(g, -z, rtol=0, atol=1e-15)
    space = wide_space(4.0)  # scale 4
    tgt = _InjectedTarget(std_normal, space)
    v, g = tgt.value_and_grad(z, None)
    np.testing.assert_allclose(g, -(4.0 * z) * 4.0, rtol=0, atol=1e-14)


def _normal_run(seed=0, n_chains=512, half=8.0, step=0.1, burn=30, post=100):
    space = wide_space(half)
    cfg = HmcConfig(
        n_chains=n_chains,
        burn_in=burn,
        post_steps=post,
        emit_every=10,
        step_size=step,
        seed=seed,
    )
    init = np.random.default_rng(100 + seed).standard_normal((n_chains, 2))
    batches = []
    out = run_chains(
        cfg, None, None, None, sink=batches.append, target=std_normal, space=space, init=init
    )
    return out, batches


def test_standard_normal_moments():
    out, _ = _normal_run()
    assert out.phase == "done"
    mean = out.z.mean(axis=0)
    var = out.z.var(axis=0)
    assert np.abs(mean).max() < 0.05
    assert np.abs(var - 1.0).max() < 0.1
    assert 0.2 < out.accept_rate <= 1.0


def test_detailed_balance_chi_squared():
    # chains start exactly at the target; a biased kernel would drift them.
    # final-step states are independent across chains.
    out, _ = _normal_run(seed=3)
    last = out.z[out.step_index == out.step_index.max()]
    u = stats.norm.cdf(last).ravel()
    counts, _ = np.histogram(u, bins=20, range=(0.0, 1.0))
    p = stats.chisquare(counts).pvalue
    assert p > 0.01


def test_emission_count_and_schema():
    space = wide_space(8.0)
    cfg = HmcConfig(n_chains=16, burn_in=10, post_steps=100, emit_every=5, step_size=0.1, seed=3)
    init = np.random.default_rng(0).standard_normal((16, 2))
    batches = []
    out = run_chains(
        cfg, None, None, None, sink=batches.append, target=std_normal, space=space, init=init
    )
    assert len(batches) == 20
    assert [b["step"] for b in batches] == list(range(15, 111, 5))
    for b in batches:
        assert set(b) == {"phase", "step", "accept_rate", "label", "samples"}
        assert b["phase"] == "sampling"
        assert b["label"] == 0
        assert 0.0 <= b["accept_rate"] <= 1.0
        for row in b["samples"]:
            assert len(row) == 2
            assert all(isinstance(v, float) for v in row)


def test_union_of_batches_equals_final_set():
    out, batches = _normal_run(n_chains=64, post=40)
    streamed = np.concatenate([np.asarray(b["samples"]) for b in batches], axis=0)
    np.testing.assert_array_equal(streamed, out.z)


def test_out_of_domain_excluded_only_at_emission():
    # box much narrower than the target: chains leave and come back
    out, batches = _normal_run(n_chains=64, half=1.0, step=0.3, post=100)
    assert out.count > 0
    assert np.all(np.abs(out.z) <= 1.0)
    sizes = [len(b["samples"]) for b in batches]
    assert min(sizes) < 64  # exclusion actually happened
    # a chain absent from one batch shows up again later: not killed
    seen = [set(out.chain_id[out.step_index == b["step"]].tolist()) for b in batches]
    returned = any(
        bool((seen[k + 1] - seen[k]) & set().union(*seen[:k + 1]))
        for k in range(len(seen) - 1)
    )
    assert returned


def test_keep_outside_returns_full_chain_presence():
    # same narrow box: the returned set keeps excursions, the sink doesn't
    space = wide_space(1.0)
    cfg = HmcConfig(n_chains=64, burn_in=30, post_steps=100, emit_every=10, step_size=0.3, seed=0)
    init = np.random.default_rng(100).standard_normal((64, 2))
    batches = []
    out = run_chains(
        cfg, None, None, None, sink=batches.append, target=std_normal,
        space=space, init=init, keep_outside=True,
    )
    assert out.count == 64 * 10  # every chain at every emission
    assert np.any(np.abs(out.z) > 1.0)  # excursions retained in the set
    sizes = [len(b["samples"]) for b in batches]
    assert min(sizes) < 64  # sink emissions stay box-filtered
    for b in batches:
        assert np.all(np.abs(np.asarray(b["samples"])) <= 1.0)


def test_deterministic_given_seed():
    a, _ = _normal_run(seed=11, n_chains=32, post=20)
    b, _ = _normal_run(seed=11, n_chains=32, post=20)
    c, _ = _normal_run(seed=12, n_chains=32, post=20)
    np.testing.assert_array_equal(a.z, b.z)
    np.testing.assert_array_equal(a.log_posterior, b.log_posterior)
    assert not np.array_equal(a.z, c.z)


def test_burnin_progress_callback():
    space = wide_space(8.0)
    cfg = HmcConfig(n_chains=8, burn_in=12, post_steps=5, emit_every=5, step_size=0.1, seed=0)
    init = np.zeros((8, 2))
    steps = []
    run_chains(
        cfg, None, None, None, target=std_normal, space=space, init=init,
        progress_fn=steps.append,
    )
    assert steps == list(range(1, 13))


def test_single_bad_chain_is_frozen_not_fatal():
    def patchy(z):
        z = np.atleast_2d(z)
        v = -0.5 * (z**2).sum(axis=1)
        g = -z.copy()
        g[z[:, 0] > 2.0] = np.nan  # poison region
        return v, g

    space = wide_space(8.0)
    cfg = HmcConfig(n_chains=10, burn_in=5, post_steps=20, emit_every=5, step_size=0.05, seed=0)
    init = np.zeros((10, 2))
    init[7, 0] = 3.0  # chain 7 starts poisoned
    out = run_chains(cfg, None, None, None, target=patchy, space=space, init=init)
    assert out.count > 0
    assert 7 not in set(out.chain_id.tolist())
    assert set(out.chain_id.tolist()) <= set(range(10)) - {7}


def test_all_chains_dead_aborts():
    def toxic(z):
        z = np.atleast_2d(z)
        return -0.5 * (z**2).sum(axis=1), np.full_like(z, np.nan)

    space = wide_space(8.0)
    cfg = HmcConfig(n_chains=4, burn_in=2, post_steps=2, emit_every=1, step_size=0.05, seed=0)
    with pytest.raises(NumericalError, match="dead"):
        run_chains(cfg, None, None, None, target=toxic, space=space, init=np.zeros((4, 2)))


def test_cancellation_stops_within_one_step():
    space = wide_space(8.0)
    cfg = HmcConfig(n_chains=8, burn_in=5, post_steps=100, emit_every=5, step_size=0.1, seed=0)
    event = threading.Event()
    batches = []

    def sink(b):
        batches.append(b)
        event.set()  # cancel after the first emission

    out = run_chains(
        cfg, None, None, None, sink=sink, target=std_normal, space=space,
        init=np.zeros((8, 2)), cancel_event=event,
    )
    assert out.cancelled
    assert len(batches) == 1
    assert out.count == len(batches[0]["samples"])


def test_chains_start_near_training_configs(toy_prior_model, toy_feature):
    prior, model = toy_prior_model
    cfg = HmcConfig(n_chains=32, burn_in=1, post_steps=1, emit_every=1, step_size=1e-4, seed=0)
    out = run_chains(cfg, prior, model, toy_feature, include_likelihood=False)
    z_n = model.space.normalize(out.z)
    # after 2 tiny steps every chain is still within a few jitter sigmas
    # of some training configuration
    d = np.linalg.norm(z_n[:, None, :] - prior.centers[None, :, :], axis=2).min(axis=1)
    assert d.max() < 0.1


def test_path_length_reported():
    out, _ = _normal_run(n_chains=16, post=20)
    assert out.mean_path_fraction > 0.0


def test_config_validation():
    with pytest.raises(ConfigError):
        HmcConfig(n_chains=0)
    with pytest.raises(ConfigError):
        HmcConfig(emit_every=0)
    with pytest.raises(ConfigError):
        HmcConfig(step_size=-1.0)
    with pytest.raises(ConfigError):
        HmcConfig(target_accept=1.0)


# ----------------------------------------------------------- variance map


class ConstantFieldModel:
    """f(x, z) = A z at every location: variance over z has a closed form."""

    def __init__(self, a):
        self.a = np.asarray(a, dtype=np.float64)
        d = self.a.shape[1]
        self.space = ParameterSpace(np.full(d, -10.0), np.full(d, 10.0))
        self.domain = DomainSpec(
            resolution=(2, 4, 4),
            bounds=((0, 1), (0, 1), (0, 1)),
            output_dim=self.a.shape[0],
        )

    def forward(self, coords, z):
        z = np.asarray(z, dtype=np.float64)
        z_phys = self.space.denormalize(z)
        return np.tile(self.a @ z_phys, (coords.shape[0], 1))


def _sample_set(zs):
    zs = np.asarray(zs, dtype=np.float64)
    s = SampleSet.empty(zs.shape[1])
    s.extend(zs, np.arange(len(zs)), 0, np.zeros(len(zs)))
    return s


def test_variance_map_two_draw_arithmetic():
    a = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    model = ConstantFieldModel(a)
    z1 = np.array([0.5, -1.0])
    z2 = np.array([2.0, 1.5])
    vm = variance_map(model, _sample_set([z1, z2]), resolution=8, time=0.0)
    c = a @ (z1 - z2)
    assert vm.shape == (8, 8)
    np.testing.assert_allclose(vm, np.linalg.norm(c) / 2.0, rtol=1e-12)


def test_variance_map_identical_draws_is_zero():
    model = ConstantFieldModel(np.eye(2))
    vm = variance_map(model, _sample_set([[1.0, 2.0]] * 5), resolution=4, time=0.5)
    np.testing.assert_array_equal(vm, np.zeros((4, 4)))


def test_variance_map_needs_samples():
    model = ConstantFieldModel(np.eye(2))
    with pytest.raises(ConfigError):
        variance_map(model, SampleSet.empty(2), resolution=4, time=0.0)
