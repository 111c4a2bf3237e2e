import numpy as np
import pytest

from parascope.ensemble import DomainSpec, ParameterSpace
from parascope.features import FeatureSpec
from parascope.prior import PriorModel, compute_fim, select_bandwidths
from parascope.siren import init_model


@pytest.fixture(scope="session")
def toy_prior_model():
    """Small untrained surrogate plus a prior built from it.

    Gradient/energy plumbing does not care whether the net is trained;
    keeping it raw makes this cheap enough for session scope.
    """
    space = ParameterSpace(np.array([-2.0, -2.0]), np.array([2.0, 2.0]))
    domain = DomainSpec(
        resolution=(2, 6, 6), bounds=((0.0, 1.0), (0.0, 1.0), (0.0, 2.0)), output_dim=2
    )
    model = init_model(
        space, domain, widths=(16, 16), seed=0, coord_scale=2.0, param_scale=2.0
    )
    rng = np.random.default_rng(0)
    centers = rng.uniform(-0.8, 0.8, size=(6, 2))
    entries = [
        compute_fim(model, c, m_samples=128, seed=i) for i, c in enumerate(centers)
    ]
    sigma_s, sigma_f = select_bandwidths(entries)
    return PriorModel(entries, sigma_s, sigma_f), model


@pytest.fixture
def toy_feature():
    return FeatureSpec(
        center=(0.2, 0.1), radius=0.3, time=0.0, z_ref=np.zeros(2), K=8
    )


@pytest.fixture(scope="session")
def tiny_pipeline(tmp_path_factory):
    """Small end-to-end pipeline: datasets on disk, untrained surrogate,
    prior.  Structural tests only; accuracy claims need a trained net."""
    from parascope import synth
    from parascope.prior import build_prior

    cfg = synth.default_config("viscosity-decay-toy", seed=0, resolution=(4, 8, 8))
    root = tmp_path_factory.mktemp("tinypipe")
    train, test = synth.generate_ensemble(cfg, 8, 4, root / "train", root / "test")
    model = init_model(
        cfg.space, cfg.domain, widths=(16, 16), seed=1, coord_scale=2.0, param_scale=2.0
    )
    prior = build_prior(model, train, m_samples=64, seed=0)
    return train, test, model, prior
