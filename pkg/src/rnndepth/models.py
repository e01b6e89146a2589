"""Forward passes for all model families over batched sequences.

The step at layer l (1-based) and time t is

    s_t = below_t                      (recurrent placement)
    s_t = act(below_t)                 (depth_only placement)
    z_t = bilinear(h_{t-1}, s_t) + w_rec h_{t-1} + w_in s_t + bias
    h_t = act(z_t)                     (recurrent placement)
    h_t = z_t                          (depth_only placement)

where below_t is the raw input x_t at layer 1 and the previous layer's state
above.  The bilinear term is either a full order-3 tensor contraction or its
CP form, evaluated without materializing the tensor.  The model output at
time t is the top layer's state (optionally activated when configured for
depth_only placement).

Traces keep every state, pre-activation and layer input so gradients can be
computed without a second pass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import NonFiniteError, ShapeError
from .params import ModelConfig, ModelParams


def activation_fn(kind: str):
    if kind == "identity":
        return lambda x: x
    if kind == "tanh":
        return np.tanh
    if kind == "relu":
        return lambda x: np.maximum(x, 0.0)
    raise ValueError(f"unknown activation {kind!r}")


def activation_grad(kind: str):
    """Derivative evaluated at the *pre-activation* argument."""
    if kind == "identity":
        return lambda x: np.ones_like(x)
    if kind == "tanh":
        return lambda x: 1.0 - np.tanh(x) ** 2
    if kind == "relu":
        return lambda x: (x > 0.0).astype(np.float64)
    raise ValueError(f"unknown activation {kind!r}")


@dataclass
class HiddenTrace:
    """All states of one forward pass.

    states[l-1] has shape (T+1, B, n) with index 0 holding the initial state;
    preact[l-1] (T, B, n) holds z_t; signals[l-1] (T, B, d_in) holds the layer
    input after placement activation.
    """

    config: ModelConfig
    inputs: np.ndarray           # (B, T, d)
    states: list[np.ndarray]
    preact: list[np.ndarray]
    signals: list[np.ndarray]

    def h(self, t: int, layer: int) -> np.ndarray:
        """State at 1-based time t (0 = initial) and 1-based layer, shape (B, n)."""
        return self.states[layer - 1][t]

    @property
    def seq_len(self) -> int:
        return self.inputs.shape[1]

    @property
    def outputs(self) -> np.ndarray:
        """Model outputs, shape (B, T, n): top-layer states, optionally activated."""
        top = np.swapaxes(self.states[-1][1:], 0, 1)
        if self.config.activate_top:
            top = activation_fn(self.config.activation)(top)
        return top


def _as_batch(inputs: np.ndarray, input_dim: int) -> np.ndarray:
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim == 2:
        x = x[None, :, :]
    if x.ndim != 3 or x.shape[2] != input_dim:
        raise ShapeError(
            f"inputs must be (batch, T, {input_dim}) or (T, {input_dim}), got {x.shape}"
        )
    return x


def _linmap(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    # einsum keeps each row's reduction order independent of the batch size,
    # so batched and per-sequence forwards agree bit for bit
    return np.einsum("bj,kj->bk", x, w)


def bilinear_term(layer, hprev: np.ndarray, sig: np.ndarray) -> np.ndarray | None:
    """Batched bilinear contribution, (B, n), or None when the layer has none."""
    if layer.bilinear is not None:
        return np.einsum("ijk,bi,bj->bk", layer.bilinear, hprev, sig)
    if layer.cp is not None:
        return _linmap(_linmap(hprev, layer.cp.state.T) * _linmap(sig, layer.cp.inp.T), layer.cp.out)
    return None


def forward(params: ModelParams, inputs: np.ndarray) -> HiddenTrace:
    """Run the recurrence for any family; returns the full trace."""
    cfg = params.config
    x = _as_batch(inputs, cfg.input_dim)
    batch, seq_len, _ = x.shape
    act = activation_fn(cfg.activation)
    recurrent = cfg.placement == "recurrent"

    states: list[np.ndarray] = []
    preact: list[np.ndarray] = []
    signals: list[np.ndarray] = []
    below = np.swapaxes(x, 0, 1)  # (T, B, d)

    for idx, layer in enumerate(params.layers, start=1):
        n = cfg.hidden
        h = np.empty((seq_len + 1, batch, n))
        z = np.empty((seq_len, batch, n))
        s = np.empty((seq_len, batch, cfg.layer_input_dim(idx)))
        h[0] = layer.h0
        for t in range(1, seq_len + 1):
            sig = below[t - 1] if recurrent else act(below[t - 1])
            zt = _linmap(sig, layer.w_in) + _linmap(h[t - 1], layer.w_rec) + layer.bias
            bi = bilinear_term(layer, h[t - 1], sig)
            if bi is not None:
                zt = zt + bi
            ht = act(zt) if recurrent else zt
            if not np.isfinite(ht).all():
                raise NonFiniteError(f"non-finite state at time {t}, layer {idx}")
            s[t - 1] = sig
            z[t - 1] = zt
            h[t] = ht
        states.append(h)
        preact.append(z)
        signals.append(s)
        below = h[1:]

    return HiddenTrace(cfg, x, states, preact, signals)


def forward_rnn(params: ModelParams, inputs: np.ndarray) -> HiddenTrace:
    if params.config.family != "rnn":
        raise ValueError(f"forward_rnn expects family 'rnn', got {params.config.family!r}")
    return forward(params, inputs)


def forward_2rnn(params: ModelParams, inputs: np.ndarray) -> HiddenTrace:
    if params.config.family not in ("2rnn", "birnn"):
        raise ValueError(f"forward_2rnn expects a bilinear family, got {params.config.family!r}")
    return forward(params, inputs)


def forward_cprnn(params: ModelParams, inputs: np.ndarray) -> HiddenTrace:
    if params.config.family not in ("cprnn", "cpbirnn"):
        raise ValueError(f"forward_cprnn expects a CP family, got {params.config.family!r}")
    return forward(params, inputs)


def effective_input_matrix(layer, h: np.ndarray) -> np.ndarray:
    """State-dependent matrix mapping a layer's input signal to its update.

    For a state h this is (bilinear x_1 h)^T + w_in, shape (hidden, d_in).
    """
    m = layer.w_in
    if layer.bilinear is not None:
        m = m + np.einsum("ijk,i->kj", layer.bilinear, h)
    elif layer.cp is not None:
        m = m + (layer.cp.out * (layer.cp.state.T @ h)) @ layer.cp.inp.T
    return m


def unroll_closed_form(params: ModelParams, inputs: np.ndarray, t: int, layer: int) -> np.ndarray:
    """Evaluate h_t at the given layer from the one-step unrolled product form.

    Uses the previous step's states of every layer: with
    M_i = effective_input_matrix(layer_i, h_{t-1}^{(i)}) and
    c_j = w_rec^{(j)} h_{t-1}^{(j)} + bias^{(j)},

        h_t^{(l)} = (M_l ... M_1) x_t + sum_{j<=l} (M_l ... M_{j+1}) c_j.

    Only valid for identity activation.  Returns (B, n).
    """
    cfg = params.config
    if cfg.activation != "identity":
        raise ValueError("closed-form unrolling requires identity activation")
    if not (1 <= t) or not (1 <= layer <= cfg.depth):
        raise ValueError(f"invalid (t={t}, layer={layer})")
    x = _as_batch(inputs, cfg.input_dim)
    if t > x.shape[1]:
        raise ValueError(f"t={t} exceeds sequence length {x.shape[1]}")
    batch = x.shape[0]

    if t == 1:
        prev = [np.repeat(lay.h0[None, :], batch, axis=0) for lay in params.layers]
    else:
        trace = forward(params, x[:, : t - 1, :])
        prev = [trace.h(t - 1, l) for l in range(1, cfg.depth + 1)]

    out = np.empty((batch, cfg.hidden))
    for b in range(batch):
        acc = x[b, t - 1]
        for i in range(layer):
            lay = params.layers[i]
            acc = effective_input_matrix(lay, prev[i][b]) @ acc
            acc = acc + lay.w_rec @ prev[i][b] + lay.bias
        out[b] = acc
    return out
