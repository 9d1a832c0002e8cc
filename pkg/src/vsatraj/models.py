"""Trajectory predictors: constant-velocity baseline and LSTM encoder-decoder.

The LSTM model is written directly in numpy with hand-derived
backpropagation through time, trained with Adam and global-norm gradient
clipping. All LSTM variants share the same encoder/decoder topology and
differ only in the input dimension (2 for positions, D for scene vectors).

Shapes: inputs ``X`` are ``(n, T_in, d)``, targets ``y`` are
``(n, horizon, 2)`` positions in metres, target-centric at the anchor.
"""
from __future__ import annotations

import hashlib
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .hrr import rng_for

HORIZON = 20
CHECKPOINT_VERSION = 1
MODEL_VARIANTS = ("linear", "lstm_numerical", "lstm_spa1", "lstm_spa2", "lstm_spa3")
ENCODER_VARIANT = {"lstm_numerical": "numerical", "lstm_spa1": "power", "lstm_spa2": "scalar",
                   "lstm_spa3": "power_ego"}
PARAM_NAMES = ("enc_W", "enc_U", "enc_b", "dec_W", "dec_U", "dec_b", "out_W", "out_b")


class ModelError(ValueError):
    pass


class NumericOverflowError(ArithmeticError):
    def __init__(self, step: int, where: str):
        super().__init__(f"non-finite activations at {where} step {step}")
        self.step = step
        self.where = where


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch: int):
        super().__init__(f"training loss became non-finite in epoch {epoch}")
        self.epoch = epoch


class NoDataError(ValueError):
    pass


# ------------------------------------------------------------- baseline

def linear_features(samples) -> np.ndarray:
    """``(n, 4)`` rows of ``(x0, y0, vx0, vy0)`` at the anchor frame."""
    rows = [np.r_[s.history_positions[-1], s.anchor_velocity] for s in samples]
    return np.array(rows, dtype=float).reshape(-1, 4)


def predict_linear(sample, frame_period: float | None = None, horizon: int = HORIZON) -> np.ndarray:
    """Constant-velocity extrapolation ``p0 + v0 * k * dt`` for one sample."""
    if len(sample.history_positions) < 2 and not np.all(np.isfinite(
            [sample.track.vx[sample.anchor], sample.track.vy[sample.anchor]])):
        raise ModelError("insufficient history for a velocity estimate")
    dt = sample.frame_period if frame_period is None else frame_period
    return ConstantVelocityRegressor(dt, horizon).predict(linear_features([sample]))[0]


class ConstantVelocityRegressor(BaseEstimator):
    """Linear extrapolation of the anchor position with the anchor velocity.

    There is nothing to learn; ``fit`` only checks the input width.
    """

    def __init__(self, frame_period=0.25, horizon=HORIZON):
        self.frame_period = frame_period
        self.horizon = horizon

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != 4:
            raise ModelError("expected (n, 4) features (x0, y0, vx0, vy0)")
        self.n_features_in_ = 4
        return self

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float).reshape(-1, 4)
        k = self.frame_period * np.arange(1, self.horizon + 1)
        return X[:, None, :2] + k[None, :, None] * X[:, None, 2:]

    def score(self, X, y) -> float:
        return -horizon_rmse(y, self.predict(X)).aggregate


# ------------------------------------------------------------ LSTM core

def _sigmoid(a):
    return 0.5 * (1.0 + np.tanh(0.5 * a))


def init_params(d_in: int, hidden: int, seed: int, dtype=np.float64) -> dict:
    """Glorot-uniform input/output matrices, orthogonal recurrent blocks,
    forget-gate bias 1."""
    rng = rng_for(seed, "init")
    H = hidden

    def glorot(fan_in, fan_out):
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-lim, lim, (fan_in, fan_out))

    def orthogonal():
        blocks = []
        for _ in range(4):
            q, r = np.linalg.qr(rng.standard_normal((H, H)))
            blocks.append(q * np.sign(np.diag(r)))
        return np.concatenate(blocks, axis=1)

    def bias():
        b = np.zeros(4 * H)
        b[H:2 * H] = 1.0
        return b

    p = {"enc_W": glorot(d_in, 4 * H), "enc_U": orthogonal(), "enc_b": bias(),
         "dec_W": glorot(2, 4 * H), "dec_U": orthogonal(), "dec_b": bias(),
         "out_W": glorot(H, 2), "out_b": np.zeros(2)}
    return {k: v.astype(dtype) for k, v in p.items()}


def _cell(pre, c_prev, H):
    i = _sigmoid(pre[:, :H])
    f = _sigmoid(pre[:, H:2 * H])
    g = np.tanh(pre[:, 2 * H:3 * H])
    o = _sigmoid(pre[:, 3 * H:])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    return i, f, g, o, c, tc


def forward(params: dict, X: np.ndarray, horizon: int = HORIZON, keep: bool = False):
    """Run encoder and autoregressive decoder.

    Returns normalised predictions ``(n, horizon, 2)``; with ``keep=True``
    also the activation cache needed by :func:`backward`.
    """
    X = np.asarray(X)
    n, T, _ = X.shape
    H = params["enc_U"].shape[0]
    dtype = params["enc_U"].dtype
    h = np.zeros((n, H), dtype)
    c = np.zeros((n, H), dtype)
    enc_pre = (X.reshape(n * T, -1) @ params["enc_W"]).reshape(n, T, 4 * H) + params["enc_b"]
    cache = {"X": X, "enc": [], "dec": []}
    for t in range(T):
        i, f, g, o, c_new, tc = _cell(enc_pre[:, t] + h @ params["enc_U"], c, H)
        if keep:
            cache["enc"].append((h, c, i, f, g, o, tc))
        h = o * tc
        c = c_new
        if not np.all(np.isfinite(h)):
            raise NumericOverflowError(t, "encoder")
    z = np.zeros((n, 2), dtype)
    out = np.empty((n, horizon, 2), dtype)
    for k in range(horizon):
        pre = z @ params["dec_W"] + h @ params["dec_U"] + params["dec_b"]
        i, f, g, o, c_new, tc = _cell(pre, c, H)
        if keep:
            cache["dec"].append((z, h, c, i, f, g, o, tc))
        h = o * tc
        c = c_new
        z = h @ params["out_W"] + params["out_b"]
        if keep:
            cache["dec"][-1] += (h,)
        if not np.all(np.isfinite(z)):
            raise NumericOverflowError(k, "decoder")
        out[:, k] = z
    return (out, cache) if keep else out


def _cell_backward(dh, dc_next, c_prev, i, f, g, o, tc):
    do = dh * tc
    dc = dh * o * (1.0 - tc * tc) + dc_next
    di = dc * g
    dg = dc * i
    df = dc * c_prev
    dpre = np.concatenate([di * i * (1.0 - i), df * f * (1.0 - f), dg * (1.0 - g * g),
                           do * o * (1.0 - o)], axis=1)
    return dpre, dc * f


def backward(params: dict, cache: dict, dout: np.ndarray) -> dict:
    """Gradients of ``sum(dout * out)`` with respect to every parameter.

    The decoder feeds its own prediction back as the next input, so the
    gradient of step ``k``'s input flows into prediction ``k - 1``.
    """
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    H = params["enc_U"].shape[0]
    n = dout.shape[0]
    dtype = params["enc_U"].dtype
    dh_next = np.zeros((n, H), dtype)
    dc_next = np.zeros((n, H), dtype)
    dz_fed = np.zeros((n, 2), dtype)
    for k in range(len(cache["dec"]) - 1, -1, -1):
        z_in, h_prev, c_prev, i, f, g, o, tc, h = cache["dec"][k]
        dz = dout[:, k] + dz_fed
        grads["out_W"] += h.T @ dz
        grads["out_b"] += dz.sum(axis=0)
        dh = dz @ params["out_W"].T + dh_next
        dpre, dc_next = _cell_backward(dh, dc_next, c_prev, i, f, g, o, tc)
        grads["dec_W"] += z_in.T @ dpre
        grads["dec_U"] += h_prev.T @ dpre
        grads["dec_b"] += dpre.sum(axis=0)
        dh_next = dpre @ params["dec_U"].T
        dz_fed = dpre @ params["dec_W"].T
    X = cache["X"]
    T = X.shape[1]
    dpre_all = np.empty((n, T, 4 * H), dtype)
    for t in range(T - 1, -1, -1):
        h_prev, c_prev, i, f, g, o, tc = cache["enc"][t]
        dpre, dc_next = _cell_backward(dh_next, dc_next, c_prev, i, f, g, o, tc)
        dpre_all[:, t] = dpre
        grads["enc_U"] += h_prev.T @ dpre
        dh_next = dpre @ params["enc_U"].T
    grads["enc_W"] = X.reshape(n * T, -1).T @ dpre_all.reshape(n * T, -1)
    grads["enc_b"] = dpre_all.sum(axis=(0, 1))
    return grads


def mse_loss(params: dict, X: np.ndarray, Z: np.ndarray, grad: bool = False):
    """Mean squared error over all steps and both axes (normalised units)."""
    if grad:
        out, cache = forward(params, X, Z.shape[1], keep=True)
    else:
        out = forward(params, X, Z.shape[1])
    diff = out - Z
    loss = float(np.mean(diff * diff))
    if not grad:
        return loss
    return loss, backward(params, cache, 2.0 * diff / diff.size)


# ------------------------------------------------------------ training

@dataclass
class ModelConfig:
    variant: str = "lstm_numerical"
    input_dim: int = 2
    hidden_size: int = 128
    horizon: int = HORIZON
    learning_rate: float = 1e-3
    batch_size: int = 64
    epochs: int = 20
    clip_norm: float = 5.0
    weight_decay: float = 0.0
    seed: int = 0
    dtype: str = "float64"

    def validate(self) -> None:
        if self.variant not in MODEL_VARIANTS:
            raise ModelError(f"unknown variant {self.variant!r}")
        if self.horizon != HORIZON:
            raise ModelError(f"horizon is fixed to {HORIZON}")
        for name in ("input_dim", "hidden_size", "batch_size", "epochs"):
            if getattr(self, name) <= 0:
                raise ModelError(f"{name} must be positive")
        if not self.learning_rate > 0 or not self.clip_norm > 0:
            raise ModelError("learning_rate and clip_norm must be positive")
        if self.weight_decay < 0:
            raise ModelError("weight_decay must be non-negative")

    def hash(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class TrainLog:
    seed: int
    config_hash: str
    data_fingerprint: str
    records: list = field(default_factory=list)
    final_weights: str = "last_epoch"

    def add(self, epoch, train_loss, val_loss, wall_time):
        self.records.append({"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss,
                             "wall_time": wall_time})

    @property
    def train_loss(self) -> list:
        return [r["train_loss"] for r in self.records]

    def write_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for r in self.records:
                fh.write(json.dumps({**r, "seed": self.seed, "config_hash": self.config_hash,
                                     "data_fingerprint": self.data_fingerprint}) + "\n")


def data_fingerprint(*arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        if a is None:
            continue
        a = np.ascontiguousarray(a)
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()[:16]


class Adam:
    """Adam with optional decoupled weight decay on the weight matrices."""

    def __init__(self, params: dict, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.0):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.weight_decay = weight_decay
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for k, g in grads.items():
            self.m[k] *= self.beta1
            self.m[k] += (1.0 - self.beta1) * g
            self.v[k] *= self.beta2
            self.v[k] += (1.0 - self.beta2) * g * g
            if self.weight_decay and params[k].ndim == 2:
                params[k] *= 1.0 - self.lr * self.weight_decay
            params[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def clip_gradients(grads: dict, max_norm: float) -> float:
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for g in grads.values():
            g *= scale
    return norm


class LSTMTrajectoryRegressor(BaseEstimator):
    """Sequence-to-sequence LSTM predicting 20 future positions.

    Inputs are standardised per feature. Targets are centred per horizon
    step and divided by one pooled scale, so the training loss is the
    squared error in metres up to a constant factor. ``predict`` maps
    back to metres.
    """

    def __init__(self, hidden_size=128, learning_rate=1e-3, batch_size=64, epochs=20, clip_norm=5.0,
                 weight_decay=0.0, seed=0, horizon=HORIZON, dtype="float64", variant="lstm_numerical",
                 verbose=False):
        self.hidden_size = hidden_size
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.clip_norm = clip_norm
        self.weight_decay = weight_decay
        self.seed = seed
        self.horizon = horizon
        self.dtype = dtype
        self.variant = variant
        self.verbose = verbose

    def _config(self, d_in: int) -> ModelConfig:
        cfg = ModelConfig(self.variant, d_in, self.hidden_size, self.horizon, self.learning_rate,
                          self.batch_size, self.epochs, self.clip_norm, self.weight_decay, self.seed,
                          self.dtype)
        cfg.validate()
        return cfg

    @staticmethod
    def _check_X(X) -> np.ndarray:
        X = np.asarray(X)
        if X.ndim != 3:
            raise ModelError(f"expected inputs of shape (n, steps, features), got {X.shape}")
        return X

    def _normalise_X(self, X, chunk=1024) -> np.ndarray:
        out = np.empty(X.shape, dtype=self.dtype)
        for a in range(0, len(X), chunk):
            out[a:a + chunk] = (np.asarray(X[a:a + chunk], dtype=np.float64) - self.x_mean_) / self.x_scale_
        return out

    @staticmethod
    def _feature_moments(X, chunk=1024):
        n = 0
        total = np.zeros(X.shape[2])
        total_sq = np.zeros(X.shape[2])
        for a in range(0, len(X), chunk):
            block = np.asarray(X[a:a + chunk], dtype=np.float64).reshape(-1, X.shape[2])
            n += len(block)
            total += block.sum(axis=0)
        mean = total / n
        for a in range(0, len(X), chunk):
            block = np.asarray(X[a:a + chunk], dtype=np.float64).reshape(-1, X.shape[2]) - mean
            total_sq += (block * block).sum(axis=0)
        return mean, np.sqrt(total_sq / n)

    def fit(self, X, y, X_val=None, y_val=None, data_fingerprint_: str | None = None):
        X = self._check_X(X)
        y = np.asarray(y, dtype=np.float64)
        if len(X) == 0:
            raise NoDataError("empty training set")
        if y.shape != (len(X), self.horizon, 2):
            raise ModelError(f"targets must have shape (n, {self.horizon}, 2), got {y.shape}")
        cfg = self._config(X.shape[2])
        self.config_ = cfg
        dtype = np.dtype(self.dtype)

        self.x_mean_, std = self._feature_moments(X)
        self.x_scale_ = np.maximum(std, 1e-8)
        self.y_mean_ = y.mean(axis=0)
        # one scale for both axes keeps the loss proportional to squared metres
        self.y_scale_ = np.full(2, max(float(np.sqrt(np.mean((y - self.y_mean_) ** 2))), 1e-6))

        Xn = self._normalise_X(X)
        Zn = ((y - self.y_mean_) / self.y_scale_).astype(dtype)
        has_val = X_val is not None and len(X_val) > 0
        if has_val:
            Xv = self._normalise_X(self._check_X(X_val))
            Zv = ((np.asarray(y_val, dtype=np.float64) - self.y_mean_) / self.y_scale_).astype(dtype)

        params = init_params(X.shape[2], cfg.hidden_size, cfg.seed, dtype)
        opt = Adam(params, lr=cfg.learning_rate, weight_decay=cfg.weight_decay)
        rng = rng_for(cfg.seed, "shuffle")
        log = TrainLog(cfg.seed, cfg.hash(), data_fingerprint_ or data_fingerprint(X, y))
        n = len(Xn)
        # overflow is detected explicitly and reported as divergence
        with np.errstate(over="ignore", invalid="ignore"):
            for epoch in range(1, cfg.epochs + 1):
                t0 = time.perf_counter()
                order = rng.permutation(n)
                total = 0.0
                for a in range(0, n, cfg.batch_size):
                    idx = np.sort(order[a:a + cfg.batch_size])
                    try:
                        loss, grads = mse_loss(params, Xn[idx], Zn[idx], grad=True)
                    except NumericOverflowError:
                        raise TrainingDivergedError(epoch) from None
                    if not np.isfinite(loss):
                        raise TrainingDivergedError(epoch)
                    clip_gradients(grads, cfg.clip_norm)
                    opt.step(params, grads)
                    total += loss * len(idx)
                train_loss = total / n
                val_loss = self._batched_loss(params, Xv, Zv) if has_val else None
                log.add(epoch, train_loss, val_loss, time.perf_counter() - t0)
                if self.verbose:
                    print(f"epoch {epoch:3d}  train {train_loss:.5f}  val {val_loss if val_loss is None else round(val_loss, 5)}")
        self.params_ = params
        self.log_ = log
        self.n_features_in_ = X.shape[2]
        return self

    def _batched_loss(self, params, X, Z, chunk=1024) -> float:
        total = 0.0
        for a in range(0, len(X), chunk):
            total += mse_loss(params, X[a:a + chunk], Z[a:a + chunk]) * len(X[a:a + chunk])
        return total / len(X)

    def predict(self, X) -> np.ndarray:
        if not hasattr(self, "params_"):
            raise NotFittedError("LSTMTrajectoryRegressor is not fitted yet")
        X = self._check_X(X)
        if X.shape[2] != self.n_features_in_:
            raise ModelError(f"expected {self.n_features_in_} input features, got {X.shape[2]}")
        out = np.empty((len(X), self.horizon, 2))
        for a in range(0, len(X), 1024):
            z = forward(self.params_, self._normalise_X(X[a:a + 1024]), self.horizon)
            out[a:a + 1024] = self.y_mean_ + self.y_scale_ * z.astype(np.float64)
        return out

    def score(self, X, y) -> float:
        return -horizon_rmse(y, self.predict(X)).aggregate

    # ---------------------------------------------------------- checkpoints
    def save(self, path) -> None:
        """Versioned ``.npz`` container: config, scalers, weights, log tail."""
        meta = {"version": CHECKPOINT_VERSION, "estimator": self.get_params(),
                "config": asdict(self.config_),
                "log_tail": self.log_.records[-5:], "seed": self.log_.seed,
                "config_hash": self.log_.config_hash, "data_fingerprint": self.log_.data_fingerprint,
                "encoding": getattr(self, "encoding_", None)}
        arrays = {f"param_{k}": v for k, v in self.params_.items()}
        arrays.update(x_mean=self.x_mean_, x_scale=self.x_scale_, y_mean=self.y_mean_, y_scale=self.y_scale_)
        with open(path, "wb") as fh:
            np.savez(fh, meta=np.array(json.dumps(meta, sort_keys=True)), **arrays)

    @classmethod
    def load(cls, path) -> "LSTMTrajectoryRegressor":
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data["meta"]))
            if meta.get("version", 0) > CHECKPOINT_VERSION:
                raise ModelError(f"checkpoint version {meta['version']} is newer than supported")
            est = cls(**meta["estimator"])
            est.params_ = {k: data[f"param_{k}"].copy() for k in PARAM_NAMES}
            est.x_mean_, est.x_scale_ = data["x_mean"].copy(), data["x_scale"].copy()
            est.y_mean_, est.y_scale_ = data["y_mean"].copy(), data["y_scale"].copy()
        est.config_ = ModelConfig(**meta["config"])
        est.n_features_in_ = est.config_.input_dim
        est.log_ = TrainLog(meta["seed"], meta["config_hash"], meta["data_fingerprint"], meta["log_tail"])
        if meta.get("encoding") is not None:
            est.encoding_ = meta["encoding"]
        return est


# ----------------------------------------------------------- evaluation

@dataclass
class EvalReport:
    """Per-horizon RMSE in x and y; ``n == 0`` marks an empty evaluation."""

    rmse_x: np.ndarray
    rmse_y: np.ndarray
    n: int

    @property
    def empty(self) -> bool:
        return self.n == 0

    @property
    def aggregate(self) -> float:
        """Euclidean RMSE over all samples and steps."""
        return float(np.sqrt(np.mean(self.rmse_x**2 + self.rmse_y**2)))

    def to_json(self) -> dict:
        if self.empty:
            return {"n": 0, "rmse_x": None, "rmse_y": None, "aggregate": None}
        return {"n": self.n, "rmse_x": self.rmse_x.tolist(), "rmse_y": self.rmse_y.tolist(),
                "aggregate": self.aggregate}

    @classmethod
    def from_json(cls, d: dict) -> "EvalReport":
        if not d["n"]:
            return empty_eval()
        return cls(np.array(d["rmse_x"]), np.array(d["rmse_y"]), int(d["n"]))

    def format(self) -> str:
        if self.empty:
            return "n/a"
        return (f"n={self.n} rmse_x@5s={self.rmse_x[-1]:.3f} rmse_y@5s={self.rmse_y[-1]:.3f} "
                f"aggregate={self.aggregate:.3f}")


def empty_eval(horizon: int = HORIZON) -> EvalReport:
    return EvalReport(np.full(horizon, np.nan), np.full(horizon, np.nan), 0)


def horizon_rmse(y_true, y_pred) -> EvalReport:
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if y_true.shape != y_pred.shape:
        raise ModelError(f"shape mismatch {y_true.shape} vs {y_pred.shape}")
    if len(y_true) == 0:
        return empty_eval(y_true.shape[1] if y_true.ndim == 3 else HORIZON)
    err2 = (y_pred - y_true) ** 2
    rm = np.sqrt(err2.mean(axis=0))
    return EvalReport(rm[:, 0], rm[:, 1], len(y_true))


def targets(samples) -> np.ndarray:
    return np.stack([s.future for s in samples]) if len(samples) else np.zeros((0, HORIZON, 2))


def encode_inputs(sample, vocab, variant: str, radius: float = 40.0, scale: float = 1.0) -> np.ndarray:
    """Input sequence for one sample: positions (``lstm_numerical``) or
    scene vectors (``lstm_spa1/2/3``)."""
    from .scene import encode_snapshots

    if variant in ("lstm_numerical", "numerical"):
        return sample.history_positions
    enc = ENCODER_VARIANT.get(variant, variant)
    if enc not in ("power", "scalar", "power_ego"):
        raise ModelError(f"variant {variant!r} has no scene encoding")
    if vocab is None:
        raise ModelError(f"variant {variant!r} needs a vocabulary")
    return encode_snapshots(sample.snapshots(), vocab, enc, radius, scale)


def evaluate(model, samples, X=None) -> EvalReport:
    """RMSE per horizon step of ``model`` on ``samples``.

    ``model`` is a :class:`ConstantVelocityRegressor` (fed anchor
    features) or any estimator whose ``predict`` takes ``X``.
    """
    samples = list(samples)
    if not samples:
        return empty_eval()
    if isinstance(model, ConstantVelocityRegressor):
        pred = model.predict(linear_features(samples))
    else:
        if X is None:
            raise ModelError("encoded inputs required for learned models")
        pred = model.predict(X)
    return horizon_rmse(targets(samples), pred)
