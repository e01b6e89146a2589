"""Reverse-mode backpropagation through time, hand-derived per family.

Gradients flow backwards through the step

    z_t = bilinear(h_{t-1}, s_t) + w_rec h_{t-1} + w_in s_t + bias
    h_t = act(z_t)            (recurrent placement; depth_only: h_t = z_t)
    s_t = below_t or act(below_t) depending on placement

For the full tensor B with term[k] = sum_ij B[i,j,k] h[i] s[j]:

    dB[i,j,k]  += dz[k] h[i] s[j]
    dh[i]      += sum_jk B[i,j,k] s[j] dz[k]
    ds[j]      += sum_ik B[i,j,k] h[i] dz[k]

For CP factors (state F1, inp F2, out F3) with u = F1^T h, w = F2^T s,
term = F3 (u * w):

    g = F3^T dz;  dF3 += dz (u*w)^T;  dF1 += h (g*w)^T;  dF2 += s (g*u)^T
    dh += F1 (g*w);  ds += F2 (g*u)

The finite-difference checker used by the test-suite relies only on the
forward pass and the loss, never on these rules.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import NonFiniteError
from .models import HiddenTrace, activation_fn, activation_grad, forward
from .params import ModelConfig, ModelParams


@dataclass
class Readout:
    """Optional linear head mapping the top state to the target dimension."""

    weight: np.ndarray  # (d_out, hidden)
    bias: np.ndarray    # (d_out,)

    def copy(self) -> "Readout":
        return Readout(self.weight.copy(), self.bias.copy())

    def apply(self, outputs: np.ndarray) -> np.ndarray:
        return outputs @ self.weight.T + self.bias


def init_readout(hidden: int, d_out: int, rng) -> Readout:
    bound = 1.0 / np.sqrt(hidden)
    return Readout(rng.uniform(-bound, bound, (d_out, hidden)), np.zeros(d_out))


@dataclass
class CPGrads:
    state: np.ndarray
    inp: np.ndarray
    out: np.ndarray


@dataclass
class LayerGrads:
    w_in: np.ndarray
    w_rec: np.ndarray
    bias: np.ndarray
    h0: np.ndarray
    bilinear: np.ndarray | None = None
    cp: CPGrads | None = None


@dataclass
class Gradients:
    layers: list[LayerGrads]
    readout: Readout | None = None  # gradient arrays in readout layout


def zero_gradients(params: ModelParams, readout: Readout | None = None) -> Gradients:
    layers = []
    for layer in params.layers:
        layers.append(
            LayerGrads(
                w_in=np.zeros_like(layer.w_in),
                w_rec=np.zeros_like(layer.w_rec),
                bias=np.zeros_like(layer.bias),
                h0=np.zeros_like(layer.h0),
                bilinear=None if layer.bilinear is None else np.zeros_like(layer.bilinear),
                cp=None
                if layer.cp is None
                else CPGrads(
                    np.zeros_like(layer.cp.state),
                    np.zeros_like(layer.cp.inp),
                    np.zeros_like(layer.cp.out),
                ),
            )
        )
    head = None
    if readout is not None:
        head = Readout(np.zeros_like(readout.weight), np.zeros_like(readout.bias))
    return Gradients(layers, head)


def predictions(trace: HiddenTrace, readout: Readout | None) -> np.ndarray:
    out = trace.outputs
    return out if readout is None else readout.apply(out)


def loss_mse(
    trace: HiddenTrace,
    targets: np.ndarray,
    readout: Readout | None = None,
    mask: np.ndarray | None = None,
) -> float:
    """Mean squared error over batch, time and output dims; ``mask`` (T,) bool
    restricts the mean to the flagged time steps."""
    pred = predictions(trace, readout)
    targets = np.asarray(targets, dtype=np.float64)
    if targets.ndim == 2:
        targets = targets[None, :, :]
    if pred.shape != targets.shape:
        raise ValueError(f"predictions {pred.shape} vs targets {targets.shape}")
    err = pred - targets
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (pred.shape[1],):
            raise ValueError(f"mask must have shape ({pred.shape[1]},), got {mask.shape}")
        if not mask.any():
            raise ValueError("mask excludes every time step")
        err = err[:, mask, :]
    with np.errstate(over="ignore"):  # divergence shows up as inf, handled by callers
        return float(np.mean(err**2))


def backward(
    params: ModelParams,
    inputs: np.ndarray,
    targets: np.ndarray,
    readout: Readout | None = None,
    mask: np.ndarray | None = None,
    trace: HiddenTrace | None = None,
) -> tuple[float, Gradients]:
    """MSE loss and its exact gradients w.r.t. every parameter array.

    For families without free first-order terms the returned w_in/w_rec/bias
    gradients are zero so optimizer steps keep the structure intact.
    """
    cfg = params.config
    if trace is None:
        trace = forward(params, inputs)
    x = trace.inputs
    batch, seq_len, _ = x.shape
    act = activation_fn(cfg.activation)
    dact = activation_grad(cfg.activation)
    recurrent = cfg.placement == "recurrent"

    targets = np.asarray(targets, dtype=np.float64)
    if targets.ndim == 2:
        targets = targets[None, :, :]
    pred = predictions(trace, readout)
    if pred.shape != targets.shape:
        raise ValueError(f"predictions {pred.shape} vs targets {targets.shape}")
    err = pred - targets
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        keep = int(mask.sum())
        if keep == 0:
            raise ValueError("mask excludes every time step")
        err = err * mask[None, :, None]
        denom = batch * keep * targets.shape[2]
    else:
        denom = err.size
    with np.errstate(over="ignore"):  # divergence is reported, not a warning
        loss = float(np.sum(err**2) / denom)
    if not np.isfinite(loss):
        raise NonFiniteError("non-finite loss; aborting backward pass")

    grads = zero_gradients(params, readout)
    d_pred = (2.0 / denom) * err  # (B, T, d_out)

    # seed the top layer's state gradients
    d_state = [np.zeros((seq_len + 1, batch, cfg.hidden)) for _ in range(cfg.depth)]
    top = trace.states[-1][1:]  # (T, B, n)
    if readout is not None:
        gw = np.einsum("btd,tbn->dn", d_pred, _apply_top_act(cfg, top, act))
        grads.readout.weight += gw
        grads.readout.bias += d_pred.sum(axis=(0, 1))
        d_top = np.einsum("btd,dn->tbn", d_pred, readout.weight)
    else:
        d_top = np.swapaxes(d_pred, 0, 1)
    if cfg.activate_top:
        d_top = d_top * dact(top)
    d_state[-1][1:] += d_top

    for li in range(cfg.depth - 1, -1, -1):
        layer = params.layers[li]
        glayer = grads.layers[li]
        h = trace.states[li]
        z = trace.preact[li]
        s = trace.signals[li]
        dh_layer = d_state[li]
        for t in range(seq_len, 0, -1):
            dz = dh_layer[t] * dact(z[t - 1]) if recurrent else dh_layer[t]
            hprev = h[t - 1]
            sig = s[t - 1]

            glayer.bias += dz.sum(axis=0)
            glayer.w_in += np.einsum("bk,bj->kj", dz, sig)
            glayer.w_rec += np.einsum("bk,bi->ki", dz, hprev)
            d_hprev = dz @ layer.w_rec
            d_sig = dz @ layer.w_in

            if layer.bilinear is not None:
                glayer.bilinear += np.einsum("bi,bj,bk->ijk", hprev, sig, dz)
                d_hprev = d_hprev + np.einsum("ijk,bj,bk->bi", layer.bilinear, sig, dz)
                d_sig = d_sig + np.einsum("ijk,bi,bk->bj", layer.bilinear, hprev, dz)
            elif layer.cp is not None:
                u = hprev @ layer.cp.state  # (B, R)
                w = sig @ layer.cp.inp      # (B, R)
                g = dz @ layer.cp.out       # (B, R)
                glayer.cp.out += np.einsum("bk,br->kr", dz, u * w)
                glayer.cp.state += np.einsum("bi,br->ir", hprev, g * w)
                glayer.cp.inp += np.einsum("bj,br->jr", sig, g * u)
                d_hprev = d_hprev + (g * w) @ layer.cp.state.T
                d_sig = d_sig + (g * u) @ layer.cp.inp.T

            dh_layer[t - 1] += d_hprev
            if li > 0:
                below = trace.states[li - 1][t]
                d_below = d_sig if recurrent else d_sig * dact(below)
                d_state[li - 1][t] += d_below
        glayer.h0 += dh_layer[0].sum(axis=0)

    if not cfg.first_order_free:
        for glayer in grads.layers:
            glayer.w_in[:] = 0.0
            glayer.w_rec[:] = 0.0
            glayer.bias[:] = 0.0

    _check_finite_grads(grads)
    return loss, grads


def _apply_top_act(cfg: ModelConfig, top: np.ndarray, act) -> np.ndarray:
    # top: (T, B, n); result matches trace.outputs but stays time-major
    return act(top) if cfg.activate_top else top


def _check_finite_grads(grads: Gradients) -> None:
    for path, arr in iter_grad_arrays(grads):
        if not np.isfinite(arr).all():
            raise NonFiniteError(f"non-finite gradient in {path}")


# --- parameter/gradient traversal shared by the optimizer and checkers ---


def iter_param_arrays(params: ModelParams, readout: Readout | None = None, train_h0: bool = True):
    """Yield (path, array) for every trainable array, in a fixed order."""
    cfg = params.config
    for i, layer in enumerate(params.layers):
        if cfg.first_order_free:
            yield f"layer{i}.w_in", layer.w_in
            yield f"layer{i}.w_rec", layer.w_rec
            yield f"layer{i}.bias", layer.bias
        if layer.bilinear is not None:
            yield f"layer{i}.bilinear", layer.bilinear
        if layer.cp is not None:
            yield f"layer{i}.cp.state", layer.cp.state
            yield f"layer{i}.cp.inp", layer.cp.inp
            yield f"layer{i}.cp.out", layer.cp.out
        if train_h0:
            yield f"layer{i}.h0", layer.h0
    if readout is not None:
        yield "readout.weight", readout.weight
        yield "readout.bias", readout.bias


def iter_grad_arrays(grads: Gradients, first_order_free: bool = True, train_h0: bool = True):
    for i, layer in enumerate(grads.layers):
        if first_order_free:
            yield f"layer{i}.w_in", layer.w_in
            yield f"layer{i}.w_rec", layer.w_rec
            yield f"layer{i}.bias", layer.bias
        if layer.bilinear is not None:
            yield f"layer{i}.bilinear", layer.bilinear
        if layer.cp is not None:
            yield f"layer{i}.cp.state", layer.cp.state
            yield f"layer{i}.cp.inp", layer.cp.inp
            yield f"layer{i}.cp.out", layer.cp.out
        if train_h0:
            yield f"layer{i}.h0", layer.h0
    if grads.readout is not None:
        yield "readout.weight", grads.readout.weight
        yield "readout.bias", grads.readout.bias


def matched_arrays(
    params: ModelParams,
    grads: Gradients,
    readout: Readout | None = None,
    train_h0: bool = True,
):
    """Pairs of (parameter array, gradient array) in matching order."""
    free = params.config.first_order_free
    p = list(iter_param_arrays(params, readout, train_h0))
    g = list(iter_grad_arrays(grads, free, train_h0))
    assert [name for name, _ in p] == [name for name, _ in g]
    return [(pa, ga) for (_, pa), (_, ga) in zip(p, g)]


def global_grad_norm(grads: Gradients, first_order_free: bool = True, train_h0: bool = True) -> float:
    total = 0.0
    for _, arr in iter_grad_arrays(grads, first_order_free, train_h0):
        total += float(np.sum(arr**2))
    return float(np.sqrt(total))


def clip_gradients(grads: Gradients, max_norm: float, first_order_free: bool = True, train_h0: bool = True) -> float:
    """Scale all gradients so the global norm is at most max_norm; returns the norm."""
    norm = global_grad_norm(grads, first_order_free, train_h0)
    if norm > max_norm > 0:
        scale = max_norm / norm
        for _, arr in iter_grad_arrays(grads, first_order_free, train_h0):
            arr *= scale
    return norm


# --- Adam ---


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0

    @classmethod
    def for_arrays(cls, arrays) -> "AdamState":
        return cls([np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays])


def adam_step(
    arrays: list[np.ndarray],
    grad_arrays: list[np.ndarray],
    state: AdamState,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One in-place Adam update with bias correction."""
    state.step += 1
    t = state.step
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for arr, g, m, v in zip(arrays, grad_arrays, state.m, state.v):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g**2
        arr -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


# --- independent finite-difference oracle (forward passes only) ---


def fd_gradients(
    params: ModelParams,
    inputs: np.ndarray,
    targets: np.ndarray,
    readout: Readout | None = None,
    mask: np.ndarray | None = None,
    train_h0: bool = True,
    step: float = 1e-6,
) -> list[np.ndarray]:
    """Central-difference loss gradients for every trainable array, matching
    the order of ``iter_param_arrays``."""

    def eval_loss() -> float:
        return loss_mse(forward(params, inputs), targets, readout, mask)

    out = []
    for _, arr in iter_param_arrays(params, readout, train_h0):
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            h = step * max(1.0, abs(orig))
            flat[i] = orig + h
            hi = eval_loss()
            flat[i] = orig - h
            lo = eval_loss()
            flat[i] = orig
            gflat[i] = (hi - lo) / (2.0 * h)
        out.append(g)
    return out


def gradcheck_max_err(
    params: ModelParams,
    inputs: np.ndarray,
    targets: np.ndarray,
    readout: Readout | None = None,
    mask: np.ndarray | None = None,
    train_h0: bool = True,
    step: float = 1e-6,
) -> float:
    """Max discrepancy between BPTT and central differences, scaled by the
    gradient magnitude: max|g - g_fd| / max(1, max|g|)."""
    _, grads = backward(params, inputs, targets, readout, mask)
    analytic = [ga for _, ga in iter_grad_arrays(grads, params.config.first_order_free, train_h0)]
    numeric = fd_gradients(params, inputs, targets, readout, mask, train_h0, step)
    scale = max(1.0, max(float(np.abs(a).max()) for a in analytic) if analytic else 1.0)
    worst = 0.0
    for a, nmr in zip(analytic, numeric):
        worst = max(worst, float(np.abs(a - nmr).max()))
    return worst / scale
