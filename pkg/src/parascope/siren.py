"""Sine-activated coordinate network over (coords, params) inputs.

The network maps [omega_x * x ; omega_z * z] through sine hidden layers to
the n field components.  Differentiation is hand-rolled reverse mode for
this fixed topology: weight gradients drive Adam training (float32 bulk
path), input gradients drive sampling and Fisher information (float64
throughout, since energy drift is sensitive to rounding).
"""

import io
import json
import os
import struct
from dataclasses import dataclass

import numpy as np

from .ensemble import DomainSpec, EnsembleDataset, ParameterSpace
from .errors import ConfigError, FormatError, TrainingDiverged

MODEL_MAGIC = b"PSRG"
MODEL_VERSION = 1

DEFAULT_COORD_SCALE = 30.0
DEFAULT_PARAM_SCALE = 10.0
DEFAULT_HIDDEN = (128, 128, 128, 128)  # paper-scale 4 x 256 available by flag


@dataclass
class SurrogateModel:
    weights: list  # W_i of shape (fan_in, fan_out), float64
    biases: list  # b_i of shape (fan_out,), float64
    coord_scale: float
    param_scale: float
    space: ParameterSpace
    domain: DomainSpec

    @property
    def layer_widths(self) -> list:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def n_params(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def validate(self) -> None:
        m, d, n = self.domain.m, self.space.dim, self.domain.output_dim
        if self.weights[0].shape[0] != m + d:
            raise ConfigError(f"first layer expects width {m + d}")
        if self.weights[-1].shape[1] != n:
            raise ConfigError(f"last layer must output width {n}")
        for w, b in zip(self.weights, self.biases):
            if w.shape[1] != b.shape[0]:
                raise ConfigError("bias width mismatch")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ConfigError("non-finite weights")


@dataclass
class TrainConfig:
    steps: int = 5000
    batch_size: int = 4096
    base_lr: float = 2e-4
    seed: int = 0
    buffer_size: int = 1 << 18

    def __post_init__(self):
        if self.steps < 1 or self.batch_size < 1 or self.base_lr <= 0:
            raise ConfigError("need steps >= 1, batch_size >= 1, base_lr > 0")


def init_model(
    space: ParameterSpace,
    domain: DomainSpec,
    widths=DEFAULT_HIDDEN,
    seed: int = 0,
    coord_scale: float = DEFAULT_COORD_SCALE,
    param_scale: float = DEFAULT_PARAM_SCALE,
) -> SurrogateModel:
    """Standard sine-network initialization; input scaling supplies the
    first-layer frequency, so hidden layers use the unit-frequency bound."""
    widths = list(widths)
    if not widths:
        raise ConfigError("need at least one hidden layer")
    m, d, n = domain.m, space.dim, domain.output_dim
    sizes = [m + d] + widths + [n]
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for i, (fi, fo) in enumerate(zip(sizes[:-1], sizes[1:])):
        if i == 0:
            bound = 1.0 / fi
        else:
            bound = np.sqrt(6.0 / fi)
        weights.append(rng.uniform(-bound, bound, size=(fi, fo)))
        biases.append(rng.uniform(-1.0, 1.0, size=fo) / np.sqrt(fi))
    model = SurrogateModel(
        weights=weights,
        biases=biases,
        coord_scale=float(coord_scale),
        param_scale=float(param_scale),
        space=space,
        domain=domain,
    )
    model.validate()
    return model


def _stack_inputs(model: SurrogateModel, coords, params, dtype=np.float64):
    coords = np.atleast_2d(np.asarray(coords, dtype=dtype))
    params = np.asarray(params, dtype=dtype)
    if params.ndim == 1:
        params = np.broadcast_to(params, (coords.shape[0], params.size))
    h = np.empty((coords.shape[0], coords.shape[1] + params.shape[1]), dtype=dtype)
    h[:, : coords.shape[1]] = model.coord_scale * coords
    h[:, coords.shape[1] :] = model.param_scale * params
    return h


def _forward_cached(weights, biases, h0):
    """Returns output, pre-activations, and post-activations (h0 first)."""
    acts = [h0]
    pres = []
    h = h0
    for w, b in zip(weights[:-1], biases[:-1]):
        pre = h @ w + b
        h = np.sin(pre)
        pres.append(pre)
        acts.append(h)
    y = h @ weights[-1] + biases[-1]
    return y, (acts, pres)


def forward(model: SurrogateModel, coords, params) -> np.ndarray:
    """f_theta at normalized coords (N, m) and params (N, d) or (d,)."""
    h = _stack_inputs(model, coords, params)
    y, _ = _forward_cached(model.weights, model.biases, h)
    return y


def forward_cached(model: SurrogateModel, coords, params):
    h = _stack_inputs(model, coords, params)
    return _forward_cached(model.weights, model.biases, h)


def grad_z_from_cache(model: SurrogateModel, cache, out_grad) -> np.ndarray:
    """Backprop an (N, n) output cotangent to per-row z gradients (N, d)."""
    _, pres = cache
    weights = model.weights
    delta = np.asarray(out_grad, dtype=np.float64)
    for i in range(len(weights) - 1, 0, -1):
        delta = (delta @ weights[i].T) * np.cos(pres[i - 1])
    delta = delta @ weights[0].T
    m = model.domain.m
    return delta[:, m:] * model.param_scale


def value_and_grad_z(model: SurrogateModel, coords, params, out_grad):
    y, cache = forward_cached(model, coords, params)
    return y, grad_z_from_cache(model, cache, out_grad)


def jacobian_wrt_params(model: SurrogateModel, coords, z) -> np.ndarray:
    """Exact d f / d z at M coords for one z, shape (M * n, d)."""
    coords = np.atleast_2d(np.asarray(coords, dtype=np.float64))
    n = model.domain.output_dim
    y, cache = forward_cached(model, coords, np.asarray(z, dtype=np.float64))
    cols = []
    for j in range(n):
        one_hot = np.zeros_like(y)
        one_hot[:, j] = 1.0
        cols.append(grad_z_from_cache(model, cache, one_hot))
    jac = np.stack(cols, axis=1)  # (M, n, d)
    return jac.reshape(-1, model.space.dim)


def finite_difference_jacobian(model: SurrogateModel, coords, z, step: float) -> np.ndarray:
    if step <= 0:
        raise ConfigError("step must be > 0")
    coords = np.atleast_2d(np.asarray(coords, dtype=np.float64))
    z = np.asarray(z, dtype=np.float64)
    cols = []
    for j in range(z.size):
        dz = np.zeros_like(z)
        dz[j] = step
        yp = forward(model, coords, z + dz)
        ym = forward(model, coords, z - dz)
        cols.append((yp - ym).reshape(-1) / (2.0 * step))
    return np.stack(cols, axis=1)


# ---------------------------------------------------------------------------
# training


def _fill_buffer(dataset: EnsembleDataset, size: int, rng) -> tuple:
    """Uniform (member, grid point) pairs as normalized-input/target rows."""
    dom = dataset.domain
    n_points = int(np.prod(dom.resolution))
    members = rng.integers(0, dataset.count, size=size)
    flat = rng.integers(0, n_points, size=size)
    axes = dom.grid_axes_normalized()
    idx = np.unravel_index(flat, dom.resolution)
    coords = np.stack([ax[i] for ax, i in zip(axes, idx)], axis=1).astype(np.float32)
    params = np.empty((size, dataset.space.dim), dtype=np.float32)
    targets = np.empty((size, dom.output_dim), dtype=np.float32)
    for mi in np.unique(members):
        rows = members == mi
        member = dataset.members[mi]
        fld = dataset.load_field(member.id).reshape(n_points, dom.output_dim)
        targets[rows] = fld[flat[rows]]
        params[rows] = dataset.space.normalize(member.z).astype(np.float32)
    return coords, params, targets


def train(model: SurrogateModel, dataset: EnsembleDataset, cfg: TrainConfig):
    """Adam on minibatch MSE; returns (model, trace) with trace entries
    (step, loss) every 100 steps plus the final step."""
    if dataset.count < 1:
        raise ConfigError("dataset is empty")
    rng = np.random.default_rng(cfg.seed)
    ws = [w.astype(np.float32) for w in model.weights]
    bs = [b.astype(np.float32) for b in model.biases]
    m_w = [np.zeros_like(w) for w in ws]
    v_w = [np.zeros_like(w) for w in ws]
    m_b = [np.zeros_like(b) for b in bs]
    v_b = [np.zeros_like(b) for b in bs]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    m_in = model.domain.m

    buf_size = max(min(cfg.buffer_size, cfg.batch_size * 64), cfg.batch_size)
    coords = params = targets = None
    order = np.empty(0, dtype=np.int64)
    cursor = 0

    trace = []
    for step in range(cfg.steps):
        if coords is None or cursor + cfg.batch_size > order.size:
            coords, params, targets = _fill_buffer(dataset, buf_size, rng)
            order = rng.permutation(buf_size)
            cursor = 0
        take = order[cursor : cursor + cfg.batch_size]
        cursor += cfg.batch_size

        h0 = np.empty((take.size, m_in + params.shape[1]), dtype=np.float32)
        h0[:, :m_in] = model.coord_scale * coords[take]
        h0[:, m_in:] = model.param_scale * params[take]
        t = targets[take]

        pres, acts = [], [h0]
        h = h0
        for w, b in zip(ws[:-1], bs[:-1]):
            pre = h @ w + b
            h = np.sin(pre)
            pres.append(pre)
            acts.append(h)
        y = h @ ws[-1] + bs[-1]

        resid = y - t
        loss = float(np.mean(resid.astype(np.float64) ** 2))
        if not np.isfinite(loss):
            raise TrainingDiverged(step)
        if step % 100 == 0 or step == cfg.steps - 1:
            trace.append((step, loss))

        delta = (2.0 / resid.size) * resid
        g_w = [None] * len(ws)
        g_b = [None] * len(bs)
        for i in range(len(ws) - 1, -1, -1):
            g_w[i] = acts[i].T @ delta
            g_b[i] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ ws[i].T) * np.cos(pres[i - 1])

        lr = cfg.base_lr * (1.0 - step / cfg.steps)
        corr1 = 1.0 - beta1 ** (step + 1)
        corr2 = 1.0 - beta2 ** (step + 1)
        for i in range(len(ws)):
            m_w[i] = beta1 * m_w[i] + (1 - beta1) * g_w[i]
            v_w[i] = beta2 * v_w[i] + (1 - beta2) * g_w[i] ** 2
            ws[i] -= lr * (m_w[i] / corr1) / (np.sqrt(v_w[i] / corr2) + eps)
            m_b[i] = beta1 * m_b[i] + (1 - beta1) * g_b[i]
            v_b[i] = beta2 * v_b[i] + (1 - beta2) * g_b[i] ** 2
            bs[i] -= lr * (m_b[i] / corr1) / (np.sqrt(v_b[i] / corr2) + eps)

    model.weights = [w.astype(np.float64) for w in ws]
    model.biases = [b.astype(np.float64) for b in bs]
    model.validate()
    return model, trace


# ---------------------------------------------------------------------------
# persistence


def save_model(model: SurrogateModel, path: str) -> None:
    header = {
        "widths": model.layer_widths,
        "coord_scale": model.coord_scale,
        "param_scale": model.param_scale,
        "space": model.space.to_dict(),
        "domain": model.domain.to_dict(),
    }
    blob = json.dumps(header).encode()
    buf = io.BytesIO()
    buf.write(MODEL_MAGIC)
    buf.write(struct.pack("<II", MODEL_VERSION, len(blob)))
    buf.write(blob)
    for w, b in zip(model.weights, model.biases):
        buf.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
        buf.write(np.ascontiguousarray(b, dtype="<f8").tobytes())
    tmp = path + ".tmp"
    with open(tmp, "wb") as f:
        f.write(buf.getvalue())
    os.replace(tmp, path)


def load_model(path: str) -> SurrogateModel:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != MODEL_MAGIC:
        raise FormatError("not a model file")
    if len(raw) < 12:
        raise FormatError("model file truncated")
    version, hlen = struct.unpack("<II", raw[4:12])
    if version != MODEL_VERSION:
        raise FormatError(f"unsupported model version {version}")
    try:
        header = json.loads(raw[12 : 12 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"bad model header: {e}") from e
    widths = header["widths"]
    space = ParameterSpace.from_dict(header["space"])
    domain = DomainSpec.from_dict(header["domain"])
    off = 12 + hlen
    weights, biases = [], []
    for fi, fo in zip(widths[:-1], widths[1:]):
        need = (fi * fo + fo) * 8
        if off + need > len(raw):
            raise FormatError("model file truncated")
        w = np.frombuffer(raw, dtype="<f8", count=fi * fo, offset=off).reshape(fi, fo)
        off += fi * fo * 8
        b = np.frombuffer(raw, dtype="<f8", count=fo, offset=off)
        off += fo * 8
        weights.append(w.copy())
        biases.append(b.copy())
    model = SurrogateModel(
        weights=weights,
        biases=biases,
        coord_scale=float(header["coord_scale"]),
        param_scale=float(header["param_scale"]),
        space=space,
        domain=domain,
    )
    model.validate()
    return model
