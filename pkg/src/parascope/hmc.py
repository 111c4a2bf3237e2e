"""Batched Hamiltonian Monte Carlo over the feature posterior.

All B chains advance in lockstep as one (B, d) state in normalized
coordinates; user-facing samples are denormalized to physical units at
emission time.  The energy is stochastic: the likelihood redraws its K
feature points at every gradient evaluation, and each step's
Metropolis-Hastings comparison evaluates both endpoints on one shared
fresh point set so the accept test is internally consistent.  Chains that
produce non-finite gradients are frozen and excluded from emission; the
run aborts only when every chain is dead.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from . import features, prior as prior_mod, siren
from .errors import ConfigError, NumericalError

log = logging.getLogger(__name__)


@dataclass
class HmcConfig:
    n_chains: int = 1000
    leapfrog_steps: int = 10
    burn_in: int = 50
    post_steps: int = 100
    emit_every: int = 5
    step_size: float = 0.01  # normalized units
    target_accept: float = 0.5
    seed: int = 0

    def __post_init__(self):
        counts = (
            self.n_chains,
            self.leapfrog_steps,
            self.burn_in,
            self.post_steps,
            self.emit_every,
        )
        if any(c < 1 for c in counts):
            raise ConfigError("all chain/step counts must be >= 1")
        if self.step_size <= 0:
            raise ConfigError("step_size must be > 0")
        if not 0.0 < self.target_accept < 1.0:
            raise ConfigError("target_accept must be in (0, 1)")


@dataclass
class SampleSet:
    dim: int
    z: np.ndarray  # (S, d) physical units
    chain_id: np.ndarray  # (S,) int
    step_index: np.ndarray  # (S,) int
    log_posterior: np.ndarray  # (S,)
    accept_rate: float = 0.0
    phase: str = "burn_in"
    cancelled: bool = False
    mean_path_fraction: float = 0.0

    @classmethod
    def empty(cls, dim: int) -> "SampleSet":
        return cls(
            dim=dim,
            z=np.empty((0, dim)),
            chain_id=np.empty(0, dtype=np.int64),
            step_index=np.empty(0, dtype=np.int64),
            log_posterior=np.empty(0),
        )

    @property
    def count(self) -> int:
        return self.z.shape[0]

    def extend(self, z, chain_id, step_index, log_posterior) -> None:
        self.z = np.concatenate([self.z, z], axis=0)
        self.chain_id = np.concatenate([self.chain_id, chain_id])
        self.step_index = np.concatenate(
            [self.step_index, np.full(len(z), step_index, dtype=np.int64)]
        )
        self.log_posterior = np.concatenate([self.log_posterior, log_posterior])


def log_posterior_and_grad(
    prior, model, spec, z_batch, rng, *, include_likelihood=True, points=None
):
    """Unnormalized log p(X|z) + log p(z) and gradient, normalized units.

    Fresh likelihood points are drawn when none are given; pass
    ``include_likelihood=False`` for the prior-only (C -> infinity) limit.
    Raises NumericalError naming the offending chains when a row's
    gradient is non-finite.
    """
    z_batch = np.atleast_2d(np.asarray(z_batch, dtype=np.float64))
    values, grads = prior_mod.log_prior_and_grad(prior, z_batch)
    if include_likelihood:
        lv, lg, _ = features.log_likelihood_and_grad(model, z_batch, spec, rng, points=points)
        values = values + lv
        grads = grads + lg
    bad = ~(np.isfinite(values) & np.all(np.isfinite(grads), axis=1))
    if np.any(bad):
        raise NumericalError(f"non-finite posterior gradient for chains {np.where(bad)[0].tolist()}")
    return values, grads


def leapfrog(z, p, eps, n_steps, grad_fn):
    """Symplectic integration of Hamilton's equations, identity mass.

    ``grad_fn`` returns the potential gradient dU/dz (batched).  The
    returned momentum is negated, making the map a self-inverse:
    applying it twice recovers the inputs exactly up to roundoff.
    """
    if eps <= 0 or n_steps < 1:
        raise ConfigError("need eps > 0 and n_steps >= 1")
    z = np.array(z, dtype=np.float64)
    p = np.array(p, dtype=np.float64)
    p -= 0.5 * eps * grad_fn(z)
    for step in range(n_steps):
        z += eps * p
        if step < n_steps - 1:
            p -= eps * grad_fn(z)
    p -= 0.5 * eps * grad_fn(z)
    return z, -p


def mh_step(state, proposal, delta_h, rng):
    """Accept each row with probability min(1, exp(-dH)); non-finite dH rejects."""
    state = np.atleast_2d(np.asarray(state, dtype=np.float64))
    proposal = np.atleast_2d(np.asarray(proposal, dtype=np.float64))
    delta_h = np.atleast_1d(np.asarray(delta_h, dtype=np.float64))
    with np.errstate(over="ignore", invalid="ignore"):
        prob = np.exp(-delta_h)
    prob = np.where(np.isfinite(delta_h), np.minimum(prob, 1.0), 0.0)
    accepted = rng.random(state.shape[0]) < prob
    new_state = np.where(accepted[:, None], proposal, state)
    return accepted, new_state


def tune_step_size(accept_rate: float, eps: float) -> float:
    """Burn-in only: 10% up when acceptance runs hot, 10% down when cold."""
    if accept_rate > 0.6:
        return eps * 1.1
    if accept_rate < 0.4:
        return eps * 0.9
    return eps


class _PosteriorTarget:
    """prior + feature likelihood over normalized z."""

    def __init__(self, prior, model, spec, include_likelihood=True):
        self.prior = prior
        self.model = model
        self.spec = spec
        self.include_likelihood = include_likelihood

    def fresh_points(self, rng):
        if not self.include_likelihood:
            return None
        return features.sample_region(self.spec, rng)

    def value(self, z_n, points):
        v, _ = prior_mod.log_prior_and_grad(self.prior, z_n)
        if points is not None:
            v = v + features.log_likelihood_value(self.model, z_n, self.spec, points)
        return v

    def value_and_grad(self, z_n, rng):
        v, g = prior_mod.log_prior_and_grad(self.prior, z_n)
        if self.include_likelihood:
            lv, lg, _ = features.log_likelihood_and_grad(self.model, z_n, self.spec, rng)
            v = v + lv
            g = g + lg
        return v, g


class _InjectedTarget:
    """Analytic log density in physical units, chain-ruled to normalized."""

    def __init__(self, fn, space):
        self.fn = fn
        self.scale = (space.upper - space.lower) / 2.0
        self.space = space

    def fresh_points(self, rng):
        return None

    def value(self, z_n, points):
        v, _ = self.fn(self.space.denormalize(z_n))
        return np.asarray(v, dtype=np.float64)

    def value_and_grad(self, z_n, rng):
        v, g = self.fn(self.space.denormalize(z_n))
        return np.asarray(v, dtype=np.float64), np.asarray(g, dtype=np.float64) * self.scale


def run_chains(
    cfg: HmcConfig,
    prior,
    model,
    spec,
    sink=None,
    *,
    target=None,
    space=None,
    init=None,
    include_likelihood=True,
    cancel_event=None,
    progress_fn=None,
    keep_outside=False,
) -> SampleSet:
    """Burn-in with step-size tuning, then sampling with periodic emission.

    ``sink`` receives one dict per emission in the wire schema
    ``{"phase", "step", "accept_rate", "label", "samples"}`` with samples
    in physical units and out-of-box rows excluded.  ``target`` injects an
    analytic log density ``f(z_physical) -> (logp, grad)`` in place of
    prior+likelihood (``space`` required then).  ``init`` overrides the
    default start (training configurations + 1% jitter) with physical
    (B, d) positions.  ``cancel_event`` stops the run between HMC steps.
    ``keep_outside=True`` keeps out-of-box rows in the *returned* set (sink
    emissions stay filtered) so chain-level diagnostics see every chain at
    every emission step.
    """
    if target is not None:
        if space is None:
            raise ConfigError("injected targets need an explicit parameter space")
        tgt = _InjectedTarget(target, space)
    else:
        space = space or model.space
        tgt = _PosteriorTarget(prior, model, spec, include_likelihood)
    d = space.dim
    B = cfg.n_chains
    rng = np.random.default_rng(cfg.seed)
    label = spec.label if spec is not None else 0

    if init is not None:
        z = space.normalize(np.asarray(init, dtype=np.float64))
        if z.shape != (B, d):
            raise ConfigError(f"init must have shape ({B}, {d})")
    else:
        starts = prior.centers[rng.integers(0, prior.centers.shape[0], size=B)]
        z = starts + 0.02 * rng.standard_normal((B, d))  # 1% of each box side

    alive = np.ones(B, dtype=bool)
    eps = cfg.step_size
    result = SampleSet.empty(d)
    chain_ids = np.arange(B)
    window_accepts, window_total = 0, 0
    post_accepts, post_total = 0, 0
    path_len_sum, path_len_n = 0.0, 0
    logpost = np.full(B, -np.inf)

    def grad_eval(z_now):
        """(value, grad) on live rows with fresh points; freezes bad rows."""
        v, g = tgt.value_and_grad(z_now, rng)
        bad = ~(np.isfinite(v) & np.all(np.isfinite(g), axis=1))
        if np.any(bad):
            g = np.where(bad[:, None], 0.0, g)
            newly = bad & alive
            if np.any(newly):
                alive[newly] = False
                log.warning("froze %d chains on non-finite gradients", int(newly.sum()))
        return v, g

    total_steps = cfg.burn_in + cfg.post_steps
    for step in range(1, total_steps + 1):
        if cancel_event is not None and cancel_event.is_set():
            result.cancelled = True
            break
        in_burn = step <= cfg.burn_in
        result.phase = "burn_in" if in_burn else "sampling"

        p0 = rng.standard_normal((B, d))
        zt = z.copy()
        pt = p0.copy()
        _, g = grad_eval(zt)
        pt += 0.5 * eps * g  # dp/dt = +grad log p
        for l in range(cfg.leapfrog_steps):
            zt += eps * pt
            path_len_sum += eps * float(np.linalg.norm(pt[alive], axis=1).sum())
            if l < cfg.leapfrog_steps - 1:
                _, g = grad_eval(zt)
                pt += eps * g
        _, g = grad_eval(zt)
        pt += 0.5 * eps * g
        pt = -pt
        path_len_n += int(alive.sum())

        if not np.any(alive):
            raise NumericalError("all chains dead")

        pts = tgt.fresh_points(rng)
        v_cur = tgt.value(z, pts)
        v_prop = tgt.value(zt, pts)
        with np.errstate(invalid="ignore"):
            delta_h = (-v_prop + 0.5 * (pt**2).sum(axis=1)) - (
                -v_cur + 0.5 * (p0**2).sum(axis=1)
            )
        accepted, _ = mh_step(z, zt, delta_h, rng)
        accepted &= alive  # frozen rows never move
        z = np.where(accepted[:, None], zt, z)
        logpost = np.where(accepted, v_prop, v_cur)

        window_accepts += int(accepted.sum())
        window_total += int(alive.sum())
        if in_burn:
            if progress_fn is not None:
                progress_fn(step)
            if step % 10 == 0 and window_total:
                eps = tune_step_size(window_accepts / window_total, eps)
                window_accepts = window_total = 0
        else:
            post_accepts += int(accepted.sum())
            post_total += int(alive.sum())
            post_step = step - cfg.burn_in
            if post_step % cfg.emit_every == 0:
                z_phys = space.denormalize(z)
                inside = alive & space.contains(z_phys)
                ok = alive if keep_outside else inside
                result.extend(z_phys[ok], chain_ids[ok], step, logpost[ok])
                result.accept_rate = post_accepts / max(post_total, 1)
                if sink is not None:
                    sink(
                        {
                            "phase": "sampling",
                            "step": step,
                            "accept_rate": result.accept_rate,
                            "label": label,
                            "samples": z_phys[inside].tolist(),
                        }
                    )

    result.accept_rate = post_accepts / max(post_total, 1)
    if path_len_n:
        diam = 2.0 * np.sqrt(d)
        result.mean_path_fraction = path_len_sum / path_len_n / diam
        log.info(
            "mean integrated path length = %.3f of box diameter",
            result.mean_path_fraction,
        )
    if not result.cancelled:
        result.phase = "done"
    return result


def variance_map(model, samples: SampleSet, resolution: int, time: float, max_draws: int = 512):
    """Per-point output standard deviation over sampled parameters.

    Returns (resolution, resolution) scalars sqrt(sum_component variance)
    on the regular normalized spatial grid at the given normalized time;
    population variance over an evenly-strided subsample of the draws.
    """
    if samples.count == 0:
        raise ConfigError("no samples to aggregate")
    take = samples.z
    if samples.count > max_draws:
        take = take[:: samples.count // max_draws + 1]
    z_n = model.space.normalize(take)
    axis = np.linspace(-1.0, 1.0, resolution)
    yy, xx = np.meshgrid(axis, axis, indexing="ij")
    coords = np.column_stack(
        [np.full(resolution**2, float(time)), yy.ravel(), xx.ravel()]
    )
    fwd = getattr(model, "forward", None)
    acc = np.zeros((resolution**2, model.domain.output_dim))
    acc2 = np.zeros_like(acc)
    for zi in z_n:
        y = fwd(coords, zi) if callable(fwd) else siren.forward(model, coords, zi)
        acc += y
        acc2 += y**2
    s = len(z_n)
    var = acc2 / s - (acc / s) ** 2
    return np.sqrt(np.maximum(var, 0.0).sum(axis=1)).reshape(resolution, resolution)
