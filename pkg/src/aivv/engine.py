"""MC-dropout LSTM regressor with split-conformal calibration.

Two stacked LSTM layers feed a single dense head. Dropout sits between the
LSTM layers and in front of the head, stays active at inference, and the
spread of ``N`` stochastic passes is the uncertainty estimate. Everything is
plain numpy with hand-written BPTT and Adam.
"""

from __future__ import annotations

import copy
import functools
import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .conformal import conformal_quantile
from .telemetry import WindowPairs

log = logging.getLogger(__name__)

ALPHA_BOUNDS = (0.01, 0.10)
EPOCH_BOUNDS = (50, 200)
LR_BOUNDS = (1e-5, 1e-3)
CHECKPOINT_VERSION = 1


def clamp(value, lo, hi, name="value"):
    out = min(max(value, lo), hi)
    if out != value:
        log.info("clamped %s %r into [%r, %r] -> %r", name, value, lo, hi, out)
    return out


@dataclass
class EngineConfig:
    input_dim: int = 1
    window: int = 10
    hidden_size: int = 32
    lstm_layers: int = 2
    dropout_p: float = 0.2
    mc_passes: int = 30
    alpha: float = 0.05
    cal_ratio: float = 0.2
    lr: float = 3e-3
    epochs: int = 60
    batch_size: int = 32
    grad_clip: float = 5.0
    replay_ratio: float = 1.0  # fit-set pairs mixed into fine-tuning per recent pair

    def __post_init__(self):
        if not 0 <= self.dropout_p < 1:
            raise ValueError("dropout_p must lie in [0, 1)")
        if self.mc_passes < 2:
            raise ValueError("need at least 2 MC passes")
        if not 0 < self.cal_ratio < 1:
            raise ValueError("cal_ratio must lie in (0, 1)")
        if not ALPHA_BOUNDS[0] <= self.alpha <= ALPHA_BOUNDS[1]:
            raise ValueError(f"alpha {self.alpha} outside {ALPHA_BOUNDS}")
        if self.lstm_layers < 1:
            raise ValueError("need at least one LSTM layer")


@dataclass
class Prediction:
    mean: float
    std: float
    samples: np.ndarray


def param_count(input_dim: int, hidden: int, layers: int) -> int:
    total, fan_in = 0, input_dim
    for _ in range(layers):
        total += 4 * hidden * (fan_in + hidden + 1)
        fan_in = hidden
    return total + hidden + 1


# ---------------------------------------------------------------------------
# pure network math


def init_params(config: EngineConfig, rng: np.random.Generator) -> dict:
    h = config.hidden_size
    bound = 1.0 / math.sqrt(h)
    params = {}
    fan_in = config.input_dim
    for layer in range(config.lstm_layers):
        params[f"Wx{layer}"] = rng.uniform(-bound, bound, (fan_in, 4 * h))
        params[f"Wh{layer}"] = rng.uniform(-bound, bound, (h, 4 * h))
        params[f"b{layer}"] = rng.uniform(-bound, bound, 4 * h)
        fan_in = h
    params["w_out"] = rng.uniform(-bound, bound, h)
    params["b_out"] = rng.uniform(-bound, bound, 1)
    return params


def draw_masks(config: EngineConfig, batch: int, steps: int, rng: np.random.Generator) -> list:
    """Inverted-dropout masks: one per inter-layer sequence plus one for the head."""
    p, h = config.dropout_p, config.hidden_size
    keep = 1.0 - p
    masks = []
    for _ in range(config.lstm_layers - 1):
        if p == 0:
            masks.append(None)
        else:
            masks.append((rng.random((batch, steps, h)) < keep) / keep)
    masks.append(None if p == 0 else (rng.random((batch, h)) < keep) / keep)
    return masks


@functools.lru_cache(maxsize=8)
def _gate_consts(h):
    # sigmoid(z) = 0.5 * tanh(z / 2) + 0.5, so all four gates take one tanh
    scale = np.r_[np.full(3 * h, 0.5), np.ones(h)]
    shift = np.r_[np.full(3 * h, 0.5), np.zeros(h)]
    return scale, shift


def _lstm_layer(X, Wx, Wh, b):
    B, T, _ = X.shape
    h = Wh.shape[0]
    scale, shift = _gate_consts(h)
    pre_x = X @ Wx + b
    H = np.empty((B, T, h))
    C = np.empty((B, T, h))
    gates = np.empty((B, T, 4 * h))
    h_prev = np.zeros((B, h))
    c_prev = np.zeros((B, h))
    for t in range(T):
        g = np.tanh((pre_x[:, t] + h_prev @ Wh) * scale) * scale + shift  # input, forget, output, candidate
        c_prev = g[:, h:2 * h] * c_prev + g[:, :h] * g[:, 3 * h:]
        h_prev = g[:, 2 * h:3 * h] * np.tanh(c_prev)
        gates[:, t] = g
        C[:, t] = c_prev
        H[:, t] = h_prev
    return H, (X, Wx, Wh, gates, C, H)


def _lstm_layer_backward(dH, cache):
    X, Wx, Wh, gates, C, H = cache
    B, T, h = H.shape
    i, f, o, cand = (gates[..., k * h:(k + 1) * h] for k in range(4))
    tc = np.tanh(C)
    c_prev = np.concatenate([np.zeros((B, 1, h)), C[:, :-1]], axis=1)
    # local derivatives of every gate pre-activation, for all steps at once
    through_c = o * (1.0 - tc * tc)
    local = np.concatenate([cand * i * (1.0 - i), c_prev * f * (1.0 - f),
                            tc * o * (1.0 - o), i * (1.0 - cand * cand)], axis=2)
    dZ = np.empty((B, T, 4 * h))
    dh_next = np.zeros((B, h))
    dc_next = np.zeros((B, h))
    WhT = Wh.T
    for t in reversed(range(T)):
        dh = dH[:, t] + dh_next
        dc = dc_next + dh * through_c[:, t]
        dz = np.concatenate([dc, dc, dh, dc], axis=1) * local[:, t]
        dZ[:, t] = dz
        dh_next = dz @ WhT
        dc_next = dc * f[:, t]
    flat = dZ.reshape(B * T, 4 * h)
    dWx = X.reshape(B * T, -1).T @ flat
    dWh = H[:, :-1].reshape(B * (T - 1), h).T @ dZ[:, 1:].reshape(B * (T - 1), 4 * h)
    db = flat.sum(axis=0)
    dX = dZ @ Wx.T
    return dX, dWx, dWh, db


def forward(params: dict, X: np.ndarray, masks: list, layers: int, cache: bool = False):
    """Network output for normalized windows ``X`` of shape (B, W, d)."""
    caches = []
    inp = X
    for layer in range(layers):
        H, c = _lstm_layer(inp, params[f"Wx{layer}"], params[f"Wh{layer}"], params[f"b{layer}"])
        caches.append(c)
        if layer < layers - 1:
            inp = H if masks[layer] is None else H * masks[layer]
    last = H[:, -1]
    head_in = last if masks[-1] is None else last * masks[-1]
    out = head_in @ params["w_out"] + params["b_out"][0]
    if cache:
        return out, (caches, head_in)
    return out


def loss_and_grads(params: dict, X: np.ndarray, y: np.ndarray, masks: list, layers: int):
    """Mean squared error and its gradient by backpropagation through time."""
    out, (caches, head_in) = forward(params, X, masks, layers, cache=True)
    B = len(y)
    resid = out - y
    loss = float(np.mean(resid**2))
    dout = 2.0 * resid / B
    grads = {"w_out": head_in.T @ dout, "b_out": np.array([dout.sum()])}
    dlast = np.outer(dout, params["w_out"])
    if masks[-1] is not None:
        dlast = dlast * masks[-1]
    _, T, h = caches[-1][5].shape
    dH = np.zeros((B, T, h))
    dH[:, -1] = dlast
    for layer in reversed(range(layers)):
        dX, dWx, dWh, db = _lstm_layer_backward(dH, caches[layer])
        grads[f"Wx{layer}"], grads[f"Wh{layer}"], grads[f"b{layer}"] = dWx, dWh, db
        if layer > 0:
            mask = masks[layer - 1]
            dH = dX if mask is None else dX * mask
    return loss, grads


# ---------------------------------------------------------------------------


@dataclass
class Engine:
    """Deployable engine state: weights, normalization, and conformal state."""

    config: EngineConfig
    params: dict
    seed: int = 0
    norm_mean: float = 0.0
    norm_std: float = 1.0
    alpha: float | None = None
    conformal_bound: float | None = None
    uncertainty_threshold: float | None = None
    cal_residuals: np.ndarray | None = None
    cal_sigmas: np.ndarray | None = None
    cal_pairs: WindowPairs | None = None
    replay_pairs: WindowPairs | None = None
    loss_history: list = field(default_factory=list)
    rng: np.random.Generator = field(default=None, repr=False)
    _adam: dict | None = field(default=None, repr=False)

    @classmethod
    def init(cls, config: EngineConfig | None = None, seed: int = 0) -> "Engine":
        config = config or EngineConfig()
        rng = np.random.default_rng(seed)
        return cls(config=config, params=init_params(config, rng), seed=seed,
                   alpha=config.alpha, rng=rng)

    # -- bookkeeping -------------------------------------------------------

    @property
    def calibrated(self) -> bool:
        return self.conformal_bound is not None

    def parameter_vector(self) -> np.ndarray:
        return np.concatenate([self.params[k].ravel() for k in sorted(self.params)])

    def parameter_hash(self) -> str:
        h = hashlib.sha256(self.parameter_vector().tobytes())
        h.update(repr((self.conformal_bound, self.alpha, self.norm_mean, self.norm_std)).encode())
        return h.hexdigest()

    def clone(self) -> "Engine":
        return copy.deepcopy(self)

    def _normalize(self, X):
        """Anchor each window on its last value, then z-score with fit-set stats."""
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[-1] != self.config.window:
            raise ValueError(f"window length {X.shape[-1]} != {self.config.window}")
        anchor = X[:, -1:]
        return ((X - anchor - self.norm_mean) / self.norm_std)[..., None], anchor[:, 0]

    # -- inference -----------------------------------------------------------

    def sample_passes(self, windows, rng: np.random.Generator | None = None) -> np.ndarray:
        """Raw MC samples, shape (n_windows, N), in degrees."""
        rng = rng if rng is not None else self.rng
        X, anchor = self._normalize(windows)
        n, N = len(X), self.config.mc_passes
        Xr = np.repeat(X, N, axis=0)
        masks = draw_masks(self.config, len(Xr), Xr.shape[1], rng)
        out = forward(self.params, Xr, masks, self.config.lstm_layers)
        return (out * self.norm_std + self.norm_mean).reshape(n, N) + anchor[:, None]

    def mc_predict(self, window, rng: np.random.Generator | None = None) -> Prediction:
        window = np.asarray(window, dtype=float)
        if window.ndim != 1 or len(window) != self.config.window:
            raise ValueError(f"expected a length-{self.config.window} window, got shape {window.shape}")
        samples = self.sample_passes(window, rng)[0]
        return Prediction(float(samples.mean()), float(samples.std()), samples)

    def mc_predict_batch(self, windows, rng: np.random.Generator | None = None):
        samples = self.sample_passes(windows, rng)
        return samples.mean(axis=1), samples.std(axis=1)

    # -- training ------------------------------------------------------------

    def fit_normalization(self, pairs: WindowPairs) -> None:
        deltas = pairs.targets - pairs.inputs[:, -1]
        self.norm_mean = float(deltas.mean())
        self.norm_std = float(deltas.std()) or 1.0

    def train(self, pairs: WindowPairs, epochs: int | None = None, lr: float | None = None,
              batch_size: int | None = None) -> list:
        """Adam on MSE with dropout active; returns per-epoch mean loss."""
        epochs = self.config.epochs if epochs is None else int(epochs)
        lr = self.config.lr if lr is None else float(lr)
        batch_size = batch_size or self.config.batch_size
        if len(pairs) == 0:
            raise ValueError("no training pairs")
        if epochs < 1:
            raise ValueError("epochs must be >= 1")
        X, anchor = self._normalize(pairs.inputs)
        y = (pairs.targets - anchor - self.norm_mean) / self.norm_std
        if self._adam is None:
            self._adam = {"t": 0, "m": {k: np.zeros_like(v) for k, v in self.params.items()},
                          "v": {k: np.zeros_like(v) for k, v in self.params.items()}}
        state = self._adam
        b1, b2, eps = 0.9, 0.999, 1e-8
        layers = self.config.lstm_layers
        history = []
        for _ in range(epochs):
            order = self.rng.permutation(len(y))
            total = 0.0
            for start in range(0, len(y), batch_size):
                idx = order[start:start + batch_size]
                masks = draw_masks(self.config, len(idx), X.shape[1], self.rng)
                loss, grads = loss_and_grads(self.params, X[idx], y[idx], masks, layers)
                if not math.isfinite(loss):
                    raise FloatingPointError(f"non-finite training loss at epoch {len(history)}")
                gnorm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
                scale = min(1.0, self.config.grad_clip / (gnorm + 1e-12))
                state["t"] += 1
                t = state["t"]
                for k, g in grads.items():
                    g = g * scale
                    m = state["m"][k]
                    v = state["v"][k]
                    m *= b1
                    m += (1 - b1) * g
                    v *= b2
                    v += (1 - b2) * g * g
                    if lr:
                        mhat = m / (1 - b1**t)
                        vhat = v / (1 - b2**t)
                        self.params[k] -= lr * mhat / (np.sqrt(vhat) + eps)
                total += loss * len(idx)
            history.append(total / len(y))
        self.loss_history.extend(history)
        return history

    def mse(self, pairs: WindowPairs) -> float:
        """Deterministic (dropout-off) fit error in degrees squared."""
        X, anchor = self._normalize(pairs.inputs)
        masks = [None] * self.config.lstm_layers
        out = forward(self.params, X, masks, self.config.lstm_layers) * self.norm_std + self.norm_mean + anchor
        return float(np.mean((out - pairs.targets) ** 2))

    # -- conformal -----------------------------------------------------------

    def _cal_rng(self):
        return np.random.default_rng([self.seed, 104729])

    def calibrate(self, cal_pairs: WindowPairs, alpha: float | None = None) -> tuple[float, float]:
        if len(cal_pairs) == 0:
            raise ValueError("empty calibration set")
        alpha = self.alpha if alpha is None else alpha
        mu, sigma = self.mc_predict_batch(cal_pairs.inputs, self._cal_rng())
        self.cal_pairs = cal_pairs
        self.cal_residuals = np.abs(mu - cal_pairs.targets)
        self.cal_sigmas = sigma
        return self._apply_alpha(alpha)

    def _apply_alpha(self, alpha: float) -> tuple[float, float]:
        self.alpha = float(alpha)
        self.conformal_bound = conformal_quantile(self.cal_residuals, alpha)
        self.uncertainty_threshold = conformal_quantile(self.cal_sigmas, alpha)
        return self.conformal_bound, self.uncertainty_threshold

    def bound_at(self, alpha: float) -> float:
        """Conformal bound the cached residuals would give at ``alpha``; no state change."""
        if self.cal_residuals is None:
            raise RuntimeError("engine is not calibrated")
        return conformal_quantile(self.cal_residuals, alpha)

    def recalibrate(self, alpha: float) -> tuple[float, float]:
        """Re-apply the quantile at a new alpha over cached calibration scores."""
        if self.cal_residuals is None:
            raise RuntimeError("engine is not calibrated")
        return self._apply_alpha(clamp(alpha, *ALPHA_BOUNDS, name="alpha"))

    def fine_tune(self, pairs: WindowPairs, epochs: int, lr: float) -> bool:
        """Continue training on recent pairs, then recalibrate on the held set.

        Epochs and learning rate are clamped to the adaptation bounds. A
        replay sample of fit-set pairs is mixed in so nominal behaviour from
        training is not forgotten. On a non-finite loss the parameters are
        restored and False is returned.
        """
        epochs = int(clamp(int(epochs), *EPOCH_BOUNDS, name="epochs"))
        lr = clamp(float(lr), *LR_BOUNDS, name="learning_rate")
        n_replay = int(round(self.config.replay_ratio * len(pairs)))
        if self.replay_pairs is not None and n_replay > 0:
            idx = np.sort(self.rng.choice(len(self.replay_pairs), min(n_replay, len(self.replay_pairs)),
                                          replace=False))
            pairs = WindowPairs.concat(pairs, self.replay_pairs[idx])
        saved = copy.deepcopy((self.params, self._adam))
        try:
            with np.errstate(over="raise", invalid="raise"):
                self.train(pairs, epochs=epochs, lr=lr)
        except FloatingPointError as exc:
            log.warning("fine-tune diverged (%s); reverting", exc)
            self.params, self._adam = saved
            return False
        if self.cal_pairs is not None:
            self.calibrate(self.cal_pairs, self.alpha)
        return True

    # -- persistence ---------------------------------------------------------

    def to_dict(self) -> dict:
        def arr(a):
            return None if a is None else np.asarray(a).tolist()

        return {
            "version": CHECKPOINT_VERSION,
            "config": asdict(self.config),
            "seed": self.seed,
            "params": {k: {"shape": list(v.shape), "data": v.ravel().tolist()} for k, v in self.params.items()},
            "norm": [self.norm_mean, self.norm_std],
            "alpha": self.alpha,
            "conformal_bound": self.conformal_bound,
            "uncertainty_threshold": self.uncertainty_threshold,
            "cal_residuals": arr(self.cal_residuals),
            "cal_sigmas": arr(self.cal_sigmas),
            "cal_pairs": None if self.cal_pairs is None else {
                "inputs": arr(self.cal_pairs.inputs), "targets": arr(self.cal_pairs.targets),
                "raw_index": arr(self.cal_pairs.raw_index)},
            "replay_pairs": None if self.replay_pairs is None else {
                "inputs": arr(self.replay_pairs.inputs), "targets": arr(self.replay_pairs.targets),
                "raw_index": arr(self.replay_pairs.raw_index)},
            "rng_state": self.rng.bit_generator.state,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Engine":
        if d.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {d.get('version')}")
        params = {k: np.array(v["data"], dtype=float).reshape(v["shape"]) for k, v in d["params"].items()}
        rng = np.random.default_rng()
        rng.bit_generator.state = d["rng_state"]
        cp = d.get("cal_pairs")
        eng = cls(config=EngineConfig(**d["config"]), params=params, seed=d["seed"],
                  norm_mean=d["norm"][0], norm_std=d["norm"][1], alpha=d["alpha"],
                  conformal_bound=d["conformal_bound"], uncertainty_threshold=d["uncertainty_threshold"],
                  rng=rng)
        if d.get("cal_residuals") is not None:
            eng.cal_residuals = np.array(d["cal_residuals"])
            eng.cal_sigmas = np.array(d["cal_sigmas"])
        if cp is not None:
            eng.cal_pairs = WindowPairs(np.array(cp["inputs"]), np.array(cp["targets"]),
                                        np.array(cp["raw_index"], dtype=int))
        rp = d.get("replay_pairs")
        if rp is not None:
            eng.replay_pairs = WindowPairs(np.array(rp["inputs"]), np.array(rp["targets"]),
                                           np.array(rp["raw_index"], dtype=int))
        return eng

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Engine":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"engine checkpoint not found: {path}")
        return cls.from_dict(json.loads(path.read_text(encoding="utf-8")))


def split_fit_cal(pairs: WindowPairs, cal_ratio: float) -> tuple[WindowPairs, WindowPairs]:
    """Chronological split: the trailing ``cal_ratio`` fraction is held for calibration."""
    n_cal = int(round(len(pairs) * cal_ratio))
    return pairs[: len(pairs) - n_cal], pairs[len(pairs) - n_cal:]


def build_engine(train_pairs: WindowPairs, config: EngineConfig | None = None, seed: int = 0) -> Engine:
    """Split, normalize on the fit set, train, and calibrate."""
    config = config or EngineConfig()
    fit, cal = split_fit_cal(train_pairs, config.cal_ratio)
    engine = Engine.init(config, seed)
    engine.fit_normalization(fit)
    engine.train(fit)
    engine.replay_pairs = fit
    engine.calibrate(cal, config.alpha)
    return engine
