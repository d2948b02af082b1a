"""From-scratch LSTM regressor on numpy.

Gated cell with sigmoid input/forget/output gates and a tanh candidate,
stacked layers with inverted dropout between them, exact
backpropagation-through-time gradients, bias-corrected Adam, L1/L2
penalties on weight matrices, stepwise learning-rate decay and
best-validation early stopping. Everything is seeded and deterministic.

Gate blocks are ordered input, forget, candidate, output along the 4H
axis. Checkpoints store parameters as little-endian float64 in the order
declared by ``LstmModel.parameter_names``.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from .errors import AlignmentError, ConfigError, TrainingDivergedError


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass(frozen=True)
class NetworkConfig:
    layers: int = 3
    hidden: int = 128
    dropout: float = 0.1
    l1: float = 0.01
    l2: float = 0.01
    head_hidden: int = 0  # 0 keeps the output head purely linear
    output_dim: int = 1

    def __post_init__(self):
        if self.layers < 1 or self.hidden < 1:
            raise ConfigError("layers and hidden must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.l1 < 0 or self.l2 < 0:
            raise ConfigError("penalty weights must be >= 0")
        if self.output_dim != 1:
            raise ConfigError("only scalar outputs are supported")


@dataclass(frozen=True)
class TrainConfig:
    batch: int = 256
    max_epochs: int = 5000
    lr0: float = 0.0015
    decay: float = 0.99
    decay_every: int = 50
    lr_floor: float = 1e-4
    seed: int = 0
    patience: int = 100

    def __post_init__(self):
        if self.batch < 1 or self.max_epochs < 1 or self.decay_every < 1:
            raise ConfigError("batch, max_epochs and decay_every must be >= 1")
        if self.lr0 <= 0 or not 0 < self.decay <= 1:
            raise ConfigError("need lr0 > 0 and 0 < decay <= 1")
        if self.patience < 0:
            raise ConfigError("patience must be >= 0")

    def lr_at(self, epoch: int) -> float:
        """Learning rate for a 0-based epoch index."""
        return max(self.lr0 * self.decay ** (epoch // self.decay_every), self.lr_floor)


@dataclass
class LstmLayerParams:
    """One layer's weights; rows are the i, f, g, o gate blocks."""

    w_x: np.ndarray  # (4H, D)
    w_h: np.ndarray  # (4H, H)
    b: np.ndarray  # (4H,)


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def like(cls, model: "LstmModel") -> "AdamState":
        return cls(
            m=[np.zeros_like(p) for p in model.parameters()],
            v=[np.zeros_like(p) for p in model.parameters()],
        )


@dataclass
class LossHistory:
    train_mse: list[float] = field(default_factory=list)
    val_mse: list[float] = field(default_factory=list)


class LstmModel:
    """Stacked LSTM layers plus a (optionally one-hidden-ReLU) linear head."""

    def __init__(self, layers, head, net_config: NetworkConfig, input_dim: int):
        self.layers: list[LstmLayerParams] = layers
        self.head: dict = head  # w1/b1 only when head_hidden > 0; always w/b
        self.net_config = net_config
        self.input_dim = input_dim

    @classmethod
    def init(cls, input_dim: int, net_config: NetworkConfig, rng) -> "LstmModel":
        """Uniform +-1/sqrt(fan_in) weights; forget-gate biases start at 1."""
        h = net_config.hidden
        layers = []
        d = input_dim
        for _ in range(net_config.layers):
            w_x = rng.uniform(-1.0, 1.0, size=(4 * h, d)) / np.sqrt(d)
            w_h = rng.uniform(-1.0, 1.0, size=(4 * h, h)) / np.sqrt(h)
            b = np.zeros(4 * h)
            b[h : 2 * h] = 1.0
            layers.append(LstmLayerParams(w_x, w_h, b))
            d = h
        head: dict = {}
        if net_config.head_hidden > 0:
            hh = net_config.head_hidden
            head["w1"] = rng.uniform(-1.0, 1.0, size=(hh, h)) / np.sqrt(h)
            head["b1"] = np.zeros(hh)
            head["w"] = rng.uniform(-1.0, 1.0, size=hh) / np.sqrt(hh)
        else:
            head["w"] = rng.uniform(-1.0, 1.0, size=h) / np.sqrt(h)
        head["b"] = np.zeros(1)
        return cls(layers, head, net_config, input_dim)

    def parameter_names(self) -> list[str]:
        names = []
        for i in range(len(self.layers)):
            names += [f"layer{i}.w_x", f"layer{i}.w_h", f"layer{i}.b"]
        if "w1" in self.head:
            names += ["head.w1", "head.b1"]
        names += ["head.w", "head.b"]
        return names

    def parameters(self) -> list[np.ndarray]:
        """Live references, ordered as ``parameter_names``."""
        params = []
        for layer in self.layers:
            params += [layer.w_x, layer.w_h, layer.b]
        if "w1" in self.head:
            params += [self.head["w1"], self.head["b1"]]
        params += [self.head["w"], self.head["b"]]
        return params

    def weight_matrix_names(self) -> set[str]:
        """Parameters carrying L1/L2 penalties (weights, never biases)."""
        return {n for n in self.parameter_names() if not n.endswith(".b")
                and not n.endswith(".b1")}

    def copy(self) -> "LstmModel":
        layers = [
            LstmLayerParams(l.w_x.copy(), l.w_h.copy(), l.b.copy())
            for l in self.layers
        ]
        head = {k: v.copy() for k, v in self.head.items()}
        return LstmModel(layers, head, self.net_config, self.input_dim)


def cell_forward(x, h_prev, c_prev, params: LstmLayerParams):
    """One gated update. Accepts vectors or (batch, dim) arrays.

    Returns (h, c, cache); the cache holds the activations backward needs.
    """
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x, h_prev, c_prev = x[None, :], np.asarray(h_prev)[None, :], np.asarray(c_prev)[None, :]
    hidden = params.w_h.shape[1]
    if x.shape[1] != params.w_x.shape[1] or h_prev.shape[1] != hidden:
        raise AlignmentError(
            f"cell expects input dim {params.w_x.shape[1]} and hidden {hidden}, "
            f"got {x.shape[1]} and {h_prev.shape[1]}"
        )
    z = x @ params.w_x.T + h_prev @ params.w_h.T + params.b
    i = _sigmoid(z[:, :hidden])
    f = _sigmoid(z[:, hidden : 2 * hidden])
    g = np.tanh(z[:, 2 * hidden : 3 * hidden])
    o = _sigmoid(z[:, 3 * hidden :])
    c = f * c_prev + i * g
    h = o * np.tanh(c)
    cache = {"x": x, "h_prev": h_prev, "c_prev": c_prev, "i": i, "f": f, "g": g,
             "o": o, "c": c}
    if squeeze:
        return h[0], c[0], cache
    return h, c, cache


def forward(batch_x, model: LstmModel, mode: str = "eval", seed: int | None = None):
    """Run a (batch, lookback, features) block through the network.

    Train mode applies inverted dropout to every layer's output sequence,
    with masks drawn from a generator seeded by ``seed``. Returns
    (predictions, caches); predictions has shape (batch,).
    """
    if mode not in ("train", "eval"):
        raise ConfigError(f"mode must be 'train' or 'eval', got {mode!r}")
    x = np.asarray(batch_x, dtype=np.float64)
    if x.ndim == 2:
        x = x[None, :, :]
    if x.ndim != 3 or x.shape[2] != model.input_dim:
        raise AlignmentError(
            f"expected (batch, lookback, {model.input_dim}), got {x.shape}"
        )
    b, steps, _ = x.shape
    cfg = model.net_config
    rng = np.random.default_rng(seed) if mode == "train" and cfg.dropout > 0 else None

    layer_caches = []
    seq = np.swapaxes(x, 0, 1)  # (T, B, D)
    for layer in model.layers:
        hidden = layer.w_h.shape[1]
        h = np.zeros((b, hidden))
        c = np.zeros((b, hidden))
        stored = {k: np.empty((steps, b, hidden)) for k in
                  ("h_prev", "c_prev", "i", "f", "g", "o", "c")}
        outs = np.empty((steps, b, hidden))
        for t in range(steps):
            h, c, cell = cell_forward(seq[t], h, c, layer)
            for k in ("h_prev", "c_prev", "i", "f", "g", "o", "c"):
                stored[k][t] = cell[k]
            outs[t] = h
        mask = None
        if rng is not None:
            keep = rng.random(size=outs.shape) >= cfg.dropout
            mask = keep / (1.0 - cfg.dropout)
            outs = outs * mask
        layer_caches.append({"xs": seq, **stored, "mask": mask})
        seq = outs

    top = seq[-1]  # (B, H) final output of the last layer
    head = model.head
    if "w1" in head:
        pre = top @ head["w1"].T + head["b1"]
        act = np.maximum(pre, 0.0)
        preds = act @ head["w"] + head["b"][0]
    else:
        pre = act = None
        preds = top @ head["w"] + head["b"][0]
    caches = {"layers": layer_caches, "top": top, "head_pre": pre, "head_act": act,
              "preds": preds, "batch": b}
    return preds, caches


def loss(predictions, targets, model: LstmModel, config: NetworkConfig | None = None) -> float:
    """Mean squared error plus l1*sum|W| + l2*sum W^2 over weight matrices."""
    cfg = config or model.net_config
    preds = np.asarray(predictions, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if preds.shape != t.shape:
        raise AlignmentError(f"predictions {preds.shape} vs targets {t.shape}")
    if preds.size == 0:
        raise AlignmentError("empty batch")
    value = float(np.mean((preds - t) ** 2))
    if cfg.l1 > 0 or cfg.l2 > 0:
        penalized = model.weight_matrix_names()
        for name, p in zip(model.parameter_names(), model.parameters()):
            if name in penalized:
                value += cfg.l1 * float(np.abs(p).sum())
                value += cfg.l2 * float((p**2).sum())
    return value


def backward(caches, targets, model: LstmModel) -> list[np.ndarray]:
    """Exact gradients of :func:`loss` for every parameter, in order.

    L1 uses the sign subgradient with sign(0) = 0.
    """
    t = np.asarray(targets, dtype=np.float64)
    preds = caches["preds"]
    if preds.shape != t.shape:
        raise AlignmentError(f"targets {t.shape} do not match forward batch {preds.shape}")
    b = caches["batch"]
    cfg = model.net_config
    dpred = 2.0 * (preds - t) / b  # (B,)

    head = model.head
    grads: dict[str, np.ndarray] = {}
    if "w1" in head:
        act, pre = caches["head_act"], caches["head_pre"]
        grads["head.w"] = act.T @ dpred
        grads["head.b"] = np.array([dpred.sum()])
        dact = np.outer(dpred, head["w"])
        dpre = dact * (pre > 0)
        grads["head.w1"] = dpre.T @ caches["top"]
        grads["head.b1"] = dpre.sum(axis=0)
        dtop = dpre @ head["w1"]
    else:
        grads["head.w"] = caches["top"].T @ dpred
        grads["head.b"] = np.array([dpred.sum()])
        dtop = np.outer(dpred, head["w"])

    layer_caches = caches["layers"]
    steps = layer_caches[0]["i"].shape[0]
    # Gradient w.r.t. each layer's (post-dropout) output sequence.
    d_out = np.zeros_like(layer_caches[-1]["i"])
    d_out[-1] = dtop

    for idx in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[idx]
        cache = layer_caches[idx]
        d_h_ext = d_out * cache["mask"] if cache["mask"] is not None else d_out
        hidden = layer.w_h.shape[1]
        d_wx = np.zeros_like(layer.w_x)
        d_wh = np.zeros_like(layer.w_h)
        d_b = np.zeros_like(layer.b)
        d_xs = np.empty_like(cache["xs"])
        dh_carry = np.zeros((b, hidden))
        dc_carry = np.zeros((b, hidden))
        for t_idx in range(steps - 1, -1, -1):
            i, f, g, o = (cache[k][t_idx] for k in ("i", "f", "g", "o"))
            c = cache["c"][t_idx]
            tanh_c = np.tanh(c)
            dh = d_h_ext[t_idx] + dh_carry
            do = dh * tanh_c
            dc = dc_carry + dh * o * (1.0 - tanh_c**2)
            di = dc * g
            dg = dc * i
            df = dc * cache["c_prev"][t_idx]
            dc_carry = dc * f
            dz = np.concatenate(
                [di * i * (1.0 - i), df * f * (1.0 - f),
                 dg * (1.0 - g**2), do * o * (1.0 - o)],
                axis=1,
            )
            d_wx += dz.T @ cache["xs"][t_idx]
            d_wh += dz.T @ cache["h_prev"][t_idx]
            d_b += dz.sum(axis=0)
            d_xs[t_idx] = dz @ layer.w_x
            dh_carry = dz @ layer.w_h
        grads[f"layer{idx}.w_x"] = d_wx
        grads[f"layer{idx}.w_h"] = d_wh
        grads[f"layer{idx}.b"] = d_b
        d_out = d_xs

    penalized = model.weight_matrix_names()
    for name, p in zip(model.parameter_names(), model.parameters()):
        if name in penalized:
            grads[name] = grads[name] + cfg.l1 * np.sign(p) + 2.0 * cfg.l2 * p
    return [grads[name] for name in model.parameter_names()]


def adam_step(model: LstmModel, grads: list[np.ndarray], state: AdamState, lr: float) -> AdamState:
    """Standard bias-corrected Adam update, in place on the model."""
    params = model.parameters()
    if len(grads) != len(params):
        raise AlignmentError("gradient list does not match parameter list")
    state.step += 1
    b1c = 1.0 - state.beta1**state.step
    b2c = 1.0 - state.beta2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise AlignmentError(f"gradient shape {g.shape} vs parameter {p.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g**2
        p -= lr * (m / b1c) / (np.sqrt(v / b2c) + state.eps)
    return state


def _as_arrays(dataset):
    """Accept a list of DatasetSample or an (X, y) pair."""
    if dataset is None:
        return None, None
    if isinstance(dataset, tuple):
        x, y = dataset
        return np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    x = np.stack([s.input for s in dataset])
    y = np.array([s.target for s in dataset], dtype=np.float64)
    return x, y


def predict(model: LstmModel, inputs) -> np.ndarray:
    preds, _ = forward(inputs, model, mode="eval")
    return preds


def train(
    train_set,
    val_set,
    net_config: NetworkConfig,
    train_config: TrainConfig,
) -> tuple[LstmModel, LossHistory]:
    """Mini-batch Adam training with seeded shuffling and early stopping.

    Records per-epoch train and validation MSE (data term only). Stops
    after ``patience`` consecutive epochs without a validation
    improvement and returns the best-validation parameters. Without a
    validation set, early stopping is disabled and val MSE is NaN.
    """
    x_train, y_train = _as_arrays(train_set)
    if x_train is None or x_train.shape[0] == 0:
        raise AlignmentError("training set must be non-empty")
    x_val, y_val = _as_arrays(val_set)
    has_val = x_val is not None and x_val.shape[0] > 0

    rng = np.random.default_rng(train_config.seed)
    model = LstmModel.init(x_train.shape[2], net_config, rng)
    state = AdamState.like(model)
    history = LossHistory()

    best_val = np.inf
    best_model = model.copy()
    bad_epochs = 0
    n = x_train.shape[0]

    for epoch in range(train_config.max_epochs):
        lr = train_config.lr_at(epoch)
        order = rng.permutation(n)
        sq_err_sum = 0.0
        for start in range(0, n, train_config.batch):
            idx = order[start : start + train_config.batch]
            drop_seed = int(rng.integers(0, 2**63 - 1))
            preds, caches = forward(x_train[idx], model, mode="train", seed=drop_seed)
            batch_loss = loss(preds, y_train[idx], model)
            if not np.isfinite(batch_loss):
                raise TrainingDivergedError(epoch + 1)
            sq_err_sum += float(np.sum((preds - y_train[idx]) ** 2))
            grads = backward(caches, y_train[idx], model)
            adam_step(model, grads, state, lr)

        train_mse = sq_err_sum / n
        history.train_mse.append(train_mse)
        if has_val:
            val_mse = float(np.mean((predict(model, x_val) - y_val) ** 2))
            if not np.isfinite(val_mse):
                raise TrainingDivergedError(epoch + 1)
        else:
            val_mse = float("nan")
        history.val_mse.append(val_mse)

        if has_val:
            if val_mse < best_val:
                best_val = val_mse
                best_model = model.copy()
                bad_epochs = 0
            else:
                bad_epochs += 1
            if bad_epochs >= train_config.patience:
                break

    return (best_model if has_val else model), history


def save_model(prefix, model: LstmModel, extra: dict | None = None) -> None:
    """Write ``<prefix>.json`` (configs + layout) and ``<prefix>.bin``.

    The binary file is the little-endian float64 concatenation of the
    parameters in ``parameter_names`` order, C-contiguous per array.
    """
    prefix = str(prefix)
    layout = [
        {"name": n, "shape": list(p.shape)}
        for n, p in zip(model.parameter_names(), model.parameters())
    ]
    manifest = {
        "input_dim": model.input_dim,
        "net_config": asdict(model.net_config),
        "dtype": "<f8",
        "layout": layout,
    }
    if extra:
        manifest["extra"] = extra
    with open(prefix + ".json", "w") as handle:
        json.dump(manifest, handle, indent=2, sort_keys=True)
    with open(prefix + ".bin", "wb") as handle:
        for p in model.parameters():
            handle.write(np.ascontiguousarray(p, dtype="<f8").tobytes())


def load_model(prefix) -> LstmModel:
    prefix = str(prefix)
    with open(prefix + ".json") as handle:
        manifest = json.load(handle)
    cfg = NetworkConfig(**manifest["net_config"])
    raw = np.frombuffer(open(prefix + ".bin", "rb").read(), dtype="<f8")
    arrays = []
    offset = 0
    for entry in manifest["layout"]:
        size = int(np.prod(entry["shape"])) if entry["shape"] else 1
        arrays.append(raw[offset : offset + size].reshape(entry["shape"]).copy())
        offset += size
    if offset != raw.size:
        raise AlignmentError("parameter file does not match declared layout")
    layers = []
    for i in range(cfg.layers):
        layers.append(LstmLayerParams(*arrays[3 * i : 3 * i + 3]))
    rest = arrays[3 * cfg.layers :]
    head: dict = {}
    if cfg.head_hidden > 0:
        head["w1"], head["b1"], head["w"], head["b"] = rest
    else:
        head["w"], head["b"] = rest
    return LstmModel(layers, head, cfg, manifest["input_dim"])


def save_history(path, history: LossHistory) -> None:
    with open(path, "w") as handle:
        handle.write("epoch,train_mse,val_mse\n")
        for i, (tr, va) in enumerate(zip(history.train_mse, history.val_mse), start=1):
            handle.write(f"{i},{tr!r},{va!r}\n")


def load_history(path) -> LossHistory:
    history = LossHistory()
    with open(path) as handle:
        next(handle)
        for line in handle:
            _, tr, va = line.strip().split(",")
            history.train_mse.append(float(tr))
            history.val_mse.append(float(va))
    return history


class LstmRegressor(BaseEstimator, RegressorMixin):
    """sklearn-style front to :func:`train` / :func:`predict`.

    ``X`` is (samples, lookback, features); ``fit`` accepts an optional
    validation split via ``X_val``/``y_val`` for early stopping.
    """

    def __init__(
        self,
        layers: int = 3,
        hidden: int = 128,
        dropout: float = 0.1,
        l1: float = 0.01,
        l2: float = 0.01,
        head_hidden: int = 0,
        batch: int = 256,
        max_epochs: int = 5000,
        lr0: float = 0.0015,
        decay: float = 0.99,
        decay_every: int = 50,
        lr_floor: float = 1e-4,
        patience: int = 100,
        seed: int = 0,
    ):
        self.layers = layers
        self.hidden = hidden
        self.dropout = dropout
        self.l1 = l1
        self.l2 = l2
        self.head_hidden = head_hidden
        self.batch = batch
        self.max_epochs = max_epochs
        self.lr0 = lr0
        self.decay = decay
        self.decay_every = decay_every
        self.lr_floor = lr_floor
        self.patience = patience
        self.seed = seed

    def _configs(self) -> tuple[NetworkConfig, TrainConfig]:
        return (
            NetworkConfig(
                layers=self.layers,
                hidden=self.hidden,
                dropout=self.dropout,
                l1=self.l1,
                l2=self.l2,
                head_hidden=self.head_hidden,
            ),
            TrainConfig(
                batch=self.batch,
                max_epochs=self.max_epochs,
                lr0=self.lr0,
                decay=self.decay,
                decay_every=self.decay_every,
                lr_floor=self.lr_floor,
                seed=self.seed,
                patience=self.patience,
            ),
        )

    def fit(self, X, y, X_val=None, y_val=None):
        net_cfg, train_cfg = self._configs()
        val = (X_val, y_val) if X_val is not None else None
        self.model_, self.history_ = train((X, y), val, net_cfg, train_cfg)
        return self

    def predict(self, X):
        if not hasattr(self, "model_"):
            from sklearn.exceptions import NotFittedError

            raise NotFittedError("fit the regressor first")
        return predict(self.model_, X)
