"""The inversion network: Dense(300) -> Dense(300) -> BiLSTM(300) ->
BiLSTM(300) -> Dense(800, linear), with exact reverse-mode gradients.

Everything is float64 numpy. Sequences are processed one at a time as
(T, D) matrices; there is no padding or masking. LSTM gate blocks are laid
out [input | forget | candidate | output] along the last axis of the fused
(in, 4H) weight matrices. Both BiLSTM directions share one implementation:
the backward direction runs the forward recurrence on the time-reversed
input and its outputs are reversed back before concatenation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .._rng import Xoshiro256pp, derive_seed
from ..errors import ContractError

_INIT_STREAM_TAG = 0x1A17


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int
    dense_units: int = 300
    lstm_units: int = 300
    output_dim: int = 800
    dense_activation: str = "relu"
    seed: int = 0

    def validate(self) -> None:
        for name in ("input_dim", "dense_units", "lstm_units", "output_dim"):
            if getattr(self, name) <= 0:
                raise ContractError(f"{name} must be positive")
        if self.dense_activation != "relu":
            raise ContractError("only relu dense activation is supported")


@dataclass
class DenseParams:
    W: np.ndarray  # (fan_in, fan_out)
    b: np.ndarray  # (fan_out,)


@dataclass
class LstmDirectionParams:
    Wx: np.ndarray  # (fan_in, 4H), gates [i|f|g|o]
    Wh: np.ndarray  # (H, 4H)
    b: np.ndarray   # (4H,)


@dataclass
class BiLstmParams:
    fwd: LstmDirectionParams
    bwd: LstmDirectionParams


@dataclass
class ModelParams:
    dense1: DenseParams
    dense2: DenseParams
    bilstm1: BiLstmParams
    bilstm2: BiLstmParams
    out: DenseParams

    def named_arrays(self) -> list[tuple[str, np.ndarray]]:
        """All parameter arrays in a fixed canonical order."""
        out = []
        for layer in ("dense1", "dense2"):
            p = getattr(self, layer)
            out.append((f"{layer}.W", p.W))
            out.append((f"{layer}.b", p.b))
        for layer in ("bilstm1", "bilstm2"):
            bl = getattr(self, layer)
            for direction in ("fwd", "bwd"):
                d = getattr(bl, direction)
                out.append((f"{layer}.{direction}.Wx", d.Wx))
                out.append((f"{layer}.{direction}.Wh", d.Wh))
                out.append((f"{layer}.{direction}.b", d.b))
        out.append(("out.W", self.out.W))
        out.append(("out.b", self.out.b))
        return out

    def copy(self) -> "ModelParams":
        return _map_params(self, np.copy)

    def zeros_like(self) -> "ModelParams":
        return _map_params(self, np.zeros_like)

    def n_parameters(self) -> int:
        return sum(a.size for _, a in self.named_arrays())


def _map_params(params: ModelParams, fn) -> ModelParams:
    def dense(p):
        return DenseParams(fn(p.W), fn(p.b))

    def direction(p):
        return LstmDirectionParams(fn(p.Wx), fn(p.Wh), fn(p.b))

    return ModelParams(
        dense1=dense(params.dense1),
        dense2=dense(params.dense2),
        bilstm1=BiLstmParams(direction(params.bilstm1.fwd), direction(params.bilstm1.bwd)),
        bilstm2=BiLstmParams(direction(params.bilstm2.fwd), direction(params.bilstm2.bwd)),
        out=dense(params.out),
    )


def _build_params(cfg: ModelConfig, weight_fn) -> ModelParams:
    """Assemble the parameter tree, drawing each weight matrix from
    weight_fn(fan_in, fan_out) in the canonical order of named_arrays."""
    H = cfg.lstm_units

    def dense(fan_in: int, fan_out: int) -> DenseParams:
        return DenseParams(W=weight_fn(fan_in, fan_out), b=np.zeros(fan_out))

    def direction(fan_in: int) -> LstmDirectionParams:
        return LstmDirectionParams(
            Wx=weight_fn(fan_in, 4 * H), Wh=weight_fn(H, 4 * H), b=np.zeros(4 * H)
        )

    return ModelParams(
        dense1=dense(cfg.input_dim, cfg.dense_units),
        dense2=dense(cfg.dense_units, cfg.dense_units),
        bilstm1=BiLstmParams(direction(cfg.dense_units), direction(cfg.dense_units)),
        bilstm2=BiLstmParams(direction(2 * H), direction(2 * H)),
        out=dense(2 * H, cfg.output_dim),
    )


def zeros_params(cfg: ModelConfig) -> ModelParams:
    cfg.validate()
    return _build_params(cfg, lambda fi, fo: np.zeros((fi, fo)))


def init_params(cfg: ModelConfig) -> ModelParams:
    """Glorot-uniform weights from the seeded stream, zero biases except the
    LSTM forget-gate bias slice, which starts at 1.0."""
    cfg.validate()
    rng = Xoshiro256pp(derive_seed(cfg.seed, _INIT_STREAM_TAG))

    def glorot(fan_in: int, fan_out: int) -> np.ndarray:
        a = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform_matrix(-a, a, (fan_in, fan_out))

    params = _build_params(cfg, glorot)
    H = cfg.lstm_units
    for layer in (params.bilstm1, params.bilstm2):
        for direction in (layer.fwd, layer.bwd):
            direction.b[H:2 * H] = 1.0  # forget gate opens at start of training
    return params


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # clipping at |60| is exact in float64: sigmoid saturates to 0.0/1.0 well inside
    return 1.0 / (1.0 + np.exp(-np.clip(z, -60.0, 60.0)))


@dataclass
class LstmCache:
    x: np.ndarray
    gates_i: np.ndarray
    gates_f: np.ndarray
    gates_g: np.ndarray
    gates_o: np.ndarray
    c: np.ndarray
    tanh_c: np.ndarray
    h: np.ndarray


def lstm_forward(x: np.ndarray, p: LstmDirectionParams) -> tuple[np.ndarray, LstmCache]:
    """Standard LSTM recurrence over a (T, D) input with zero initial state."""
    T = x.shape[0]
    H = p.Wh.shape[0]
    pre = x @ p.Wx + p.b  # input contribution for all steps at once
    I = np.empty((T, H))
    F = np.empty((T, H))
    G = np.empty((T, H))
    O = np.empty((T, H))
    C = np.empty((T, H))
    TC = np.empty((T, H))
    Hs = np.empty((T, H))
    h = np.zeros(H)
    c = np.zeros(H)
    Wh = p.Wh
    for t in range(T):
        a = pre[t] + h @ Wh
        i = _sigmoid(a[:H])
        f = _sigmoid(a[H:2 * H])
        g = np.tanh(a[2 * H:3 * H])
        o = _sigmoid(a[3 * H:])
        c = f * c + i * g
        tc = np.tanh(c)
        h = o * tc
        I[t] = i
        F[t] = f
        G[t] = g
        O[t] = o
        C[t] = c
        TC[t] = tc
        Hs[t] = h
    return Hs, LstmCache(x, I, F, G, O, C, TC, Hs)


def lstm_backward(
    dH: np.ndarray, p: LstmDirectionParams, cache: LstmCache
) -> tuple[np.ndarray, LstmDirectionParams]:
    """Reverse-mode pass; returns (dx, gradients)."""
    T, H = cache.h.shape
    dA = np.empty((T, 4 * H))
    Wh_T = p.Wh.T
    dh_next = np.zeros(H)
    dc_next = np.zeros(H)
    I, F, G, O, C, TC = (
        cache.gates_i, cache.gates_f, cache.gates_g,
        cache.gates_o, cache.c, cache.tanh_c,
    )
    for t in range(T - 1, -1, -1):
        dh = dH[t] + dh_next
        do = dh * TC[t]
        dc = dh * O[t] * (1.0 - TC[t] ** 2) + dc_next
        c_prev = C[t - 1] if t > 0 else 0.0
        dA[t, :H] = (dc * G[t]) * I[t] * (1.0 - I[t])
        dA[t, H:2 * H] = (dc * c_prev) * F[t] * (1.0 - F[t])
        dA[t, 2 * H:3 * H] = (dc * I[t]) * (1.0 - G[t] ** 2)
        dA[t, 3 * H:] = do * O[t] * (1.0 - O[t])
        dc_next = dc * F[t]
        dh_next = dA[t] @ Wh_T
    h_prev = np.vstack([np.zeros((1, H)), cache.h[:-1]])
    grads = LstmDirectionParams(
        Wx=cache.x.T @ dA,
        Wh=h_prev.T @ dA,
        b=dA.sum(axis=0),
    )
    return dA @ p.Wx.T, grads


def bilstm_forward(x: np.ndarray, p: BiLstmParams):
    h_f, cache_f = lstm_forward(x, p.fwd)
    h_b_rev, cache_b = lstm_forward(x[::-1], p.bwd)
    return np.hstack([h_f, h_b_rev[::-1]]), (cache_f, cache_b)


def bilstm_backward(dH: np.ndarray, p: BiLstmParams, caches) -> tuple[np.ndarray, BiLstmParams]:
    H = p.fwd.Wh.shape[0]
    dx_f, g_f = lstm_backward(dH[:, :H], p.fwd, caches[0])
    dx_b_rev, g_b = lstm_backward(dH[:, H:][::-1], p.bwd, caches[1])
    return dx_f + dx_b_rev[::-1], BiLstmParams(g_f, g_b)


@dataclass
class ModelCache:
    x: np.ndarray
    z1: np.ndarray
    h1: np.ndarray
    z2: np.ndarray
    h2: np.ndarray
    bl1_caches: tuple
    b3: np.ndarray
    bl2_caches: tuple
    b4: np.ndarray
    y: np.ndarray


def model_forward(
    params: ModelParams, features: np.ndarray, want_cache: bool = False
):
    """Run the network over one sequence; returns (T, output_dim) or, with
    want_cache, the activations needed for model_backward."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise ContractError(f"features must be (T, D), got shape {x.shape}")
    if x.shape[1] != params.dense1.W.shape[0]:
        raise ContractError(
            f"feature dim {x.shape[1]} does not match model input dim "
            f"{params.dense1.W.shape[0]}"
        )
    z1 = x @ params.dense1.W + params.dense1.b
    h1 = np.maximum(z1, 0.0)
    z2 = h1 @ params.dense2.W + params.dense2.b
    h2 = np.maximum(z2, 0.0)
    b3, bl1_caches = bilstm_forward(h2, params.bilstm1)
    b4, bl2_caches = bilstm_forward(b3, params.bilstm2)
    y = b4 @ params.out.W + params.out.b
    if not want_cache:
        return y
    return y, ModelCache(x, z1, h1, z2, h2, bl1_caches, b3, bl2_caches, b4, y)


def mse_loss(pred: np.ndarray, target: np.ndarray) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ContractError(f"shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred - target
    return float(np.mean(diff * diff))


def model_backward_from_dy(
    params: ModelParams, cache: ModelCache, dY: np.ndarray
) -> ModelParams:
    """Backpropagate an arbitrary output gradient through the whole network."""
    if dY.shape != cache.y.shape:
        raise ContractError("output gradient shape does not match cached forward")
    g_out = DenseParams(W=cache.b4.T @ dY, b=dY.sum(axis=0))
    db4 = dY @ params.out.W.T
    db3, g_bl2 = bilstm_backward(db4, params.bilstm2, cache.bl2_caches)
    dh2, g_bl1 = bilstm_backward(db3, params.bilstm1, cache.bl1_caches)
    dz2 = dh2 * (cache.z2 > 0.0)
    g_d2 = DenseParams(W=cache.h1.T @ dz2, b=dz2.sum(axis=0))
    dh1 = dz2 @ params.dense2.W.T
    dz1 = dh1 * (cache.z1 > 0.0)
    g_d1 = DenseParams(W=cache.x.T @ dz1, b=dz1.sum(axis=0))
    return ModelParams(
        dense1=g_d1, dense2=g_d2, bilstm1=g_bl1, bilstm2=g_bl2, out=g_out
    )


def model_backward(
    params: ModelParams, cache: ModelCache, target: np.ndarray
) -> ModelParams:
    """Exact gradients of mse_loss(forward(x), target) w.r.t. every parameter."""
    target = np.asarray(target, dtype=np.float64)
    if target.shape != cache.y.shape:
        raise ContractError(
            f"target shape {target.shape} does not match cached prediction "
            f"{cache.y.shape} (stale cache?)"
        )
    if cache.x.shape[1] != params.dense1.W.shape[0]:
        raise ContractError("cache does not belong to these parameters (stale cache)")
    dY = 2.0 * (cache.y - target) / cache.y.size
    return model_backward_from_dy(params, cache, dY)
