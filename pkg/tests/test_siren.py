import numpy as np
import pytest

from parascope.ensemble import DomainSpec, ParameterSpace, init_dataset, load_manifest, write_member
from parascope.errors import ConfigError, FormatError, TrainingDiverged
from parascope.siren import (
    SurrogateModel,
    TrainConfig,
    finite_difference_jacobian,
    forward,
    forward_cached,
    grad_z_from_cache,
    init_model,
    jacobian_wrt_params,
    load_model,
    save_model,
    train,
)


def tiny_setup(d=2, m_time=True, n=2):
    space = ParameterSpace(np.zeros(d), np.ones(d), tuple(f"p{i}" for i in range(d)))
    domain = DomainSpec(
        resolution=(3, 4, 4) if m_time else (4, 4),
        bounds=((0.0, 1.0),) * (3 if m_time else 2),
        output_dim=n,
        has_time=m_time,
    )
    return space, domain


class TestInit:
    def test_deterministic(self):
        space, domain = tiny_setup()
        a = init_model(space, domain, widths=(16, 16), seed=42)
        b = init_model(space, domain, widths=(16, 16), seed=42)
        for wa, wb in zip(a.weights, b.weights):
            np.testing.assert_array_equal(wa, wb)

    def test_param_count_4x256(self):
        space, domain = tiny_setup(d=2)  # m=3, n=2
        model = init_model(space, domain, widths=(256,) * 4, seed=0)
        want = (5 * 256 + 256) + 3 * (256 * 256 + 256) + (256 * 2 + 2)
        assert model.n_params == want
        assert model.layer_widths == [5, 256, 256, 256, 256, 2]

    def test_first_layer_bound(self):
        space, domain = tiny_setup()
        model = init_model(space, domain, widths=(64, 64), seed=1)
        fan_in = model.weights[0].shape[0]
        assert np.max(np.abs(model.weights[0])) <= 1.0 / fan_in
        assert np.max(np.abs(model.weights[1])) <= np.sqrt(6.0 / 64)

    def test_fresh_model_output_scale(self):
        space, domain = tiny_setup()
        model = init_model(space, domain, widths=(128,) * 4, seed=3)
        rng = np.random.default_rng(0)
        coords = rng.uniform(-1, 1, size=(1000, 3))
        params = rng.uniform(-1, 1, size=(1000, 2))
        y = forward(model, coords, params)
        assert np.all(np.isfinite(y))
        assert 0.1 < np.std(y) < 2.0

    def test_empty_widths_rejected(self):
        space, domain = tiny_setup()
        with pytest.raises(ConfigError):
            init_model(space, domain, widths=())


class TestForward:
    def test_zero_weight_model_outputs_bias(self):
        space, domain = tiny_setup()
        model = init_model(space, domain, widths=(8, 8), seed=0)
        for w in model.weights:
            w[:] = 0.0
        for b in model.biases[:-1]:
            b[:] = 0.0
        model.biases[-1][:] = [3.5, -1.25]
        y = forward(model, np.zeros((7, 3)), np.full((7, 2), 0.3))
        np.testing.assert_allclose(y, np.tile([3.5, -1.25], (7, 1)), atol=1e-15)

    def test_batch_independence(self):
        space, domain = tiny_setup()
        model = init_model(space, domain, widths=(32, 32), seed=5)
        rng = np.random.default_rng(1)
        coords = rng.uniform(-1, 1, size=(1000, 3))
        params = rng.uniform(-1, 1, size=(1000, 2))
        full = forward(model, coords, params)
        one = forward(model, coords[137:138], params[137:138])
        # blocked BLAS reductions differ across batch shapes at ~1e-16
        np.testing.assert_allclose(one[0], full[137], rtol=0, atol=1e-12)

    def test_broadcast_single_z(self):
        space, domain = tiny_setup()
        model = init_model(space, domain, widths=(16,), seed=2)
        coords = np.random.default_rng(0).uniform(-1, 1, size=(5, 3))
        z = np.array([0.2, -0.4])
        a = forward(model, coords, z)
        b = forward(model, coords, np.tile(z, (5, 1)))
        np.testing.assert_array_equal(a, b)


class TestJacobian:
    def test_zero_weights_zero_jacobian(self):
        space, domain = tiny_setup()
        model = init_model(space, domain, widths=(8,), seed=0)
        model.weights[0][:] = 0.0
        jac = jacobian_wrt_params(model, np.zeros((4, 3)), np.zeros(2))
        np.testing.assert_array_equal(jac, np.zeros((8, 2)))

    def test_matches_finite_differences(self):
        space, domain = tiny_setup()
        model = init_model(space, domain, widths=(32, 32, 32), seed=9)
        rng = np.random.default_rng(4)
        coords = rng.uniform(-1, 1, size=(5, 3))
        z = rng.uniform(-1, 1, size=2)
        jac = jacobian_wrt_params(model, coords, z)
        fd = finite_difference_jacobian(model, coords, z, step=1e-4)
        denom = np.maximum(np.abs(fd), 1e-6)
        assert np.max(np.abs(jac - fd) / denom) < 1e-5

    def test_fd_error_shrinks_quadratically(self):
        space, domain = tiny_setup()
        model = init_model(space, domain, widths=(16, 16), seed=7)
        rng = np.random.default_rng(8)
        coords = rng.uniform(-1, 1, size=(3, 3))
        z = rng.uniform(-1, 1, size=2)
        exact = jacobian_wrt_params(model, coords, z)
        errs = []
        for step in (1e-2, 5e-3, 2.5e-3):
            fd = finite_difference_jacobian(model, coords, z, step)
            errs.append(np.max(np.abs(fd - exact)))
        # halving the step should shrink error ~4x (allow 3x for safety)
        assert errs[1] < errs[0] / 3.0
        assert errs[2] < errs[1] / 3.0

    def test_grad_z_matches_jacobian_contraction(self):
        space, domain = tiny_setup()
        model = init_model(space, domain, widths=(16, 16), seed=11)
        rng = np.random.default_rng(2)
        coords = rng.uniform(-1, 1, size=(6, 3))
        z = rng.uniform(-1, 1, size=2)
        out_grad = rng.standard_normal((6, 2))
        y, cache = forward_cached(model, coords, z)
        g = grad_z_from_cache(model, cache, out_grad)
        jac = jacobian_wrt_params(model, coords, z).reshape(6, 2, 2)
        want = np.einsum("ij,ijk->ik", out_grad, jac)
        np.testing.assert_allclose(g, want, atol=1e-12)

    def test_bad_fd_step_rejected(self):
        space, domain = tiny_setup()
        model = init_model(space, domain, widths=(8,), seed=0)
        with pytest.raises(ConfigError):
            finite_difference_jacobian(model, np.zeros((1, 3)), np.zeros(2), step=0.0)


class TestTrain:
    def _constant_dataset(self, tmp_path, c=(0.75, -0.25), res=(3, 4, 4)):
        space = ParameterSpace(np.zeros(2), np.ones(2), ("a", "b"))
        domain = DomainSpec(resolution=res, bounds=((0.0, 1.0),) * 3, output_dim=2)
        path = str(tmp_path / "const")
        init_dataset(path, space, domain)
        fld = np.tile(np.array(c, dtype=np.float32), domain.resolution + (1,))
        write_member(path, [0.5, 0.5], fld)
        return load_manifest(path), space, domain

    def test_constant_field_fit(self, tmp_path):
        ds, space, domain = self._constant_dataset(tmp_path, res=(4, 8, 8))
        # gentle input scales: the degenerate fit should hold off-grid too
        model = init_model(space, domain, widths=(48, 48), seed=0, coord_scale=2.0, param_scale=2.0)
        model, trace = train(model, ds, TrainConfig(steps=2000, batch_size=512, base_lr=3e-3, seed=0))
        assert trace[-1][1] < 1e-4
        rng = np.random.default_rng(0)
        y = forward(model, rng.uniform(-1, 1, (200, 3)), space.normalize([0.5, 0.5]))
        np.testing.assert_allclose(y, np.tile([0.75, -0.25], (200, 1)), atol=1e-2)

    def test_loss_trace_cadence(self, tmp_path):
        ds, space, domain = self._constant_dataset(tmp_path)
        model = init_model(space, domain, widths=(8,), seed=0)
        _, trace = train(model, ds, TrainConfig(steps=250, batch_size=64, base_lr=1e-3, seed=0))
        steps = [s for s, _ in trace]
        assert steps == [0, 100, 200, 249]

    def test_loss_nonincreasing_moving_average(self, tmp_path):
        ds, space, domain = self._constant_dataset(tmp_path)
        model = init_model(space, domain, widths=(16, 16), seed=1)
        _, trace = train(model, ds, TrainConfig(steps=1500, batch_size=128, base_lr=1e-3, seed=1))
        losses = np.array([l for _, l in trace])
        # 500-step moving average (5 trace points) never increases
        avg = np.convolve(losses, np.ones(5) / 5, mode="valid")
        assert np.all(np.diff(avg) <= 1e-12)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_reported_with_step(self, tmp_path):
        ds, space, domain = self._constant_dataset(tmp_path)
        model = init_model(space, domain, widths=(16,), seed=0)
        model.weights[0][:] = 1e300  # overflow on the first forward pass
        with pytest.raises(TrainingDiverged) as e:
            train(model, ds, TrainConfig(steps=10, batch_size=32, base_lr=1e38, seed=0))
        assert e.value.step == 0

    def test_paper_scale_config_accepted(self):
        cfg = TrainConfig(steps=60000, batch_size=100000, base_lr=2e-4, seed=0)
        assert cfg.steps == 60000
        with pytest.raises(ConfigError):
            TrainConfig(steps=0)
        with pytest.raises(ConfigError):
            TrainConfig(base_lr=0.0)


class TestPersistence:
    def test_roundtrip_bit_exact(self, tmp_path):
        space, domain = tiny_setup()
        model = init_model(space, domain, widths=(16, 16), seed=13)
        path = str(tmp_path / "model.bin")
        save_model(model, path)
        back = load_model(path)
        for wa, wb in zip(model.weights, back.weights):
            np.testing.assert_array_equal(wa, wb)
        rng = np.random.default_rng(3)
        coords = rng.uniform(-1, 1, (100, 3))
        params = rng.uniform(-1, 1, (100, 2))
        np.testing.assert_array_equal(
            forward(model, coords, params), forward(back, coords, params)
        )

    def test_truncated_rejected(self, tmp_path):
        space, domain = tiny_setup()
        model = init_model(space, domain, widths=(16,), seed=0)
        path = str(tmp_path / "model.bin")
        save_model(model, path)
        with open(path, "r+b") as f:
            size = f.seek(0, 2)
            f.truncate(size - 64)
        with pytest.raises(FormatError):
            load_model(path)

    def test_version_mismatch_rejected(self, tmp_path):
        space, domain = tiny_setup()
        model = init_model(space, domain, widths=(8,), seed=0)
        path = str(tmp_path / "model.bin")
        save_model(model, path)
        with open(path, "r+b") as f:
            f.seek(4)
            f.write((99).to_bytes(4, "little"))
        with pytest.raises(FormatError):
            load_model(path)

    def test_garbage_rejected(self, tmp_path):
        path = str(tmp_path / "noise.bin")
        with open(path, "wb") as f:
            f.write(b"not a model at all")
        with pytest.raises(FormatError):
            load_model(path)


class TestModelValidation:
    def test_wrong_output_width(self):
        space, domain = tiny_setup(n=2)
        model = init_model(space, domain, widths=(8,), seed=0)
        bad = SurrogateModel(
            weights=[model.weights[0], np.zeros((8, 3))],
            biases=[model.biases[0], np.zeros(3)],
            coord_scale=30.0,
            param_scale=10.0,
            space=space,
            domain=domain,
        )
        with pytest.raises(ConfigError):
            bad.validate()
