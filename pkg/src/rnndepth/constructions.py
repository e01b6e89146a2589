"""Explicit weight constructions and counting formulas for deep recurrences.

* ``build_copier``     shift-register network computing the lag-p copy of a
                       scalar input stream exactly, with depth
                       ceil(p / (hidden - 1))
* ``memory_bound``     the largest lag a (hidden, depth) linear net can realize
* ``build_flattened``  single wide layer replaying every layer of a deep
                       linear net as one block-structured state
* ``build_diag_power`` bilinear diagonal net whose second output is
                       diag(x_1)^depth x_2 (elementwise powers)
* ``build_parity``     the depth-1 case: running elementwise product of inputs
* ``param_count``      weight count of a scalar-input first-order net
* ``critical_width``   largest width where a shallower net could still match a
                       deep one with fewer parameters
* ``crossover_table``  deep-vs-shallow parameter comparison grid
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .params import ModelConfig, ModelParams, zero_params


@dataclass(frozen=True)
class CopierSpec:
    """Shape of the copier network for a given width and lag."""

    hidden: int
    lag: int

    def __post_init__(self):
        if self.hidden <= 1:
            raise ValueError("copier needs hidden >= 2 (no shift register in width 1)")
        if self.lag < 1:
            raise ValueError("lag must be >= 1")

    @property
    def depth(self) -> int:
        return math.ceil(self.lag / (self.hidden - 1))

    @property
    def readout_index(self) -> int:
        """1-based slot of the top state holding the lag-delayed sample."""
        return 1 + self.depth * (self.hidden - 1) - self.lag


def lagged_copy_reference(inputs: np.ndarray, lag: int) -> np.ndarray:
    """First component of x_{t-lag}, zero while t <= lag.  inputs (T, d) -> (T,)."""
    x = np.asarray(inputs, dtype=np.float64)
    first = x[:, 0] if x.ndim == 2 else x
    out = np.zeros(first.shape[0])
    if lag < first.shape[0]:
        out[lag:] = first[: first.shape[0] - lag]
    return out


def _shift_matrix(n: int) -> np.ndarray:
    """Moves slot i+1 into slot i; slot n is refilled by the input route."""
    v = np.zeros((n, n))
    for i in range(n - 1):
        v[i, i + 1] = 1.0
    return v


def build_copier(hidden: int, lag: int) -> tuple[ModelParams, np.ndarray]:
    """Linear scalar-input net computing the lag-delayed copy exactly.

    Layer 1 loads the current sample into the last slot; every layer shifts
    its slots toward index 1 each step and layers above refill their last
    slot from slot 1 below.  Returns (params, readout vector): the readout
    picks the slot holding x_{t-lag}; all initial states are zero so the
    first ``lag`` outputs are exactly zero.
    """
    spec = CopierSpec(hidden, lag)
    n, depth = spec.hidden, spec.depth
    cfg = ModelConfig(family="rnn", depth=depth, hidden=n, input_dim=1)
    params = zero_params(cfg)
    for layer in params.layers:
        layer.w_rec[:] = _shift_matrix(n)
        # layer 1 loads the scalar input; upper layers read slot 1 below
        layer.w_in[n - 1, 0] = 1.0
    readout = np.zeros(n)
    readout[spec.readout_index - 1] = 1.0
    return params, readout


def memory_bound(hidden: int, depth: int) -> int:
    """Largest lag realizable by a linear net of the given width and depth."""
    if hidden <= 1 or depth < 1:
        raise ValueError("memory bound needs hidden >= 2 and depth >= 1")
    return depth * (hidden - 1)


def build_flattened(deep: ModelParams) -> ModelParams:
    """Width depth*hidden single-layer linear net whose state is the
    concatenation of all the deep net's layer states at every step."""
    cfg = deep.config
    if cfg.family != "rnn" or cfg.activation != "identity":
        raise ValueError("flattening is defined for linear first-order nets")
    n, depth, d = cfg.hidden, cfg.depth, cfg.input_dim
    wide = ModelConfig(family="rnn", depth=1, hidden=n * depth, input_dim=d)
    out = zero_params(wide)
    layer = out.layers[0]

    # cumulative products w_in^(l) ... w_in^(1) feed each block its input
    p_acc = None
    for l in range(depth):
        w_in_l = deep.layers[l].w_in
        p_acc = w_in_l if p_acc is None else w_in_l @ p_acc
        layer.w_in[l * n : (l + 1) * n, :] = p_acc
        layer.h0[l * n : (l + 1) * n] = deep.layers[l].h0

    # recurrent block (l, j): (w_in^(l) ... w_in^(j+1)) w_rec^(j); same chain for biases
    for l in range(depth):
        q = np.eye(n)
        bias_acc = np.zeros(n)
        for j in range(l, -1, -1):
            layer.w_rec[l * n : (l + 1) * n, j * n : (j + 1) * n] = q @ deep.layers[j].w_rec
            bias_acc += q @ deep.layers[j].bias
            if j > 0:
                q = q @ deep.layers[j].w_in
        layer.bias[l * n : (l + 1) * n] = bias_acc
    return out


def build_diag_power(hidden: int, input_dim: int, depth: int) -> ModelParams:
    """Bilinear net with diagonal tensors and all-ones initial states.

    Each layer multiplies its previous state elementwise with the incoming
    signal, so the state at time 2 on the top layer equals the inputs'
    elementwise product x_1^depth * x_2 on the leading min(hidden, input_dim)
    coordinates (zero elsewhere when widths differ).
    """
    cfg = ModelConfig(family="birnn", depth=depth, hidden=hidden, input_dim=input_dim)
    params = zero_params(cfg)
    lead = min(hidden, input_dim)
    for idx, layer in enumerate(params.layers, start=1):
        k = lead if idx == 1 else hidden
        for i in range(k):
            layer.bilinear[i, i, i] = 1.0
        layer.h0[:] = 1.0
    return params


def build_parity(dim: int) -> ModelParams:
    """Depth-1 diagonal bilinear net: state = running elementwise input product."""
    return build_diag_power(dim, dim, 1)


def build_cp_diag_power(hidden: int, input_dim: int, depth: int, rank: int | None = None) -> ModelParams:
    """CP-factor version of the diagonal power net (identity factor blocks)."""
    lead = min(hidden, input_dim)
    r = hidden if rank is None else rank
    if r < lead:
        raise ValueError(f"rank {r} too small to hold {lead} diagonal entries")
    cfg = ModelConfig(family="cpbirnn", depth=depth, hidden=hidden, input_dim=input_dim, rank=r)
    params = zero_params(cfg)
    for idx, layer in enumerate(params.layers, start=1):
        k = lead if idx == 1 else min(hidden, r)
        for i in range(k):
            layer.cp.state[i, i] = 1.0
            layer.cp.inp[i, i] = 1.0
            layer.cp.out[i, i] = 1.0
        layer.h0[:] = 1.0
    return params


def build_cp_rank_witness(
    hidden: int,
    input_dim: int,
    rank: int,
    depth: int,
    rng,
    margin: float = 1e-4,
    max_tries: int = 200,
) -> ModelParams:
    """Pure-bilinear CP net whose first-step input-to-state map has certified
    full rank min(rank, hidden, input_dim).

    Gaussian factors are full rank almost surely, but deep products can be
    numerically near-degenerate; draws are rejected until the closed-form
    layer-product chain clears ``margin`` on its rank-th singular-value ratio.
    """
    from .linalg import cp_matrix

    target = min(rank, hidden, input_dim)
    cfg = ModelConfig(family="cpbirnn", depth=depth, hidden=hidden, input_dim=input_dim, rank=rank)
    for attempt in range(max_tries):
        r = rng.split(attempt)
        params = zero_params(cfg)
        chain = None
        for idx, layer in enumerate(params.layers, start=1):
            din = cfg.layer_input_dim(idx)
            layer.cp.state[:] = r.split(idx, 0).normal((hidden, rank))
            layer.cp.inp[:] = r.split(idx, 1).normal((din, rank))
            layer.cp.out[:] = r.split(idx, 2).normal((hidden, rank))
            layer.h0[:] = r.split(idx, 3).normal(hidden)
            step = cp_matrix(layer.cp.state, layer.cp.inp, layer.cp.out, layer.h0)
            chain = step if chain is None else step @ chain
        svals = np.linalg.svd(chain, compute_uv=False)
        if svals[0] > 0 and target >= 1 and svals[target - 1] / svals[0] > margin:
            return params
    raise RuntimeError(
        f"no well-conditioned rank-{target} witness in {max_tries} draws "
        f"(hidden={hidden}, input_dim={input_dim}, rank={rank}, depth={depth})"
    )


def param_count(hidden: int, depth: int, include_h0: bool = False) -> int:
    """Weight count of a scalar-input first-order net:
    (2*depth - 1) * hidden^2 + (depth + 1) * hidden, plus depth*hidden with h0."""
    if hidden < 1 or depth < 1:
        raise ValueError("hidden and depth must be >= 1")
    count = (2 * depth - 1) * hidden**2 + (depth + 1) * hidden
    if include_h0:
        count += depth * hidden
    return count


def critical_width(depth: int, shallow_depth: int) -> float:
    """Width above which matching a deep copier with the shallower depth always
    costs more parameters; largest root of the parameter-gap parabola."""
    if not (1 <= shallow_depth < depth):
        raise ValueError("need 1 <= shallow_depth < depth")
    a = 2 * depth * shallow_depth - depth - shallow_depth
    return 1.0 + shallow_depth * (1.0 + math.sqrt(12.0 * a + 1.0)) / (2.0 * a)


def max_critical_width(max_depth: int = 64) -> tuple[float, tuple[int, int]]:
    """Maximum of critical_width over all valid (depth, shallow_depth) pairs."""
    best, arg = -math.inf, (2, 1)
    for depth in range(2, max_depth + 1):
        for shallow in range(1, depth):
            val = critical_width(depth, shallow)
            if val > best:
                best, arg = val, (depth, shallow)
    return best, arg


@dataclass(frozen=True)
class CrossoverRow:
    hidden: int
    depth: int
    shallow_depth: int
    lag: int
    shallow_width: int
    params_deep: int
    params_shallow: int

    @property
    def delta(self) -> int:
        return self.params_shallow - self.params_deep


def crossover_table(max_hidden: int, max_depth: int, min_hidden: int = 2) -> list[CrossoverRow]:
    """Deep-vs-shallow parameter comparison at the memory-matched shallow width.

    For each (hidden, depth) with the lag pinned to the memory bound, the
    minimal width a net of smaller depth needs is
    ceil(depth * (hidden - 1) / shallow_depth) + 1; delta > 0 means the deep
    net is strictly cheaper.
    """
    if max_hidden < 4:
        raise ValueError("max_hidden must be >= 4 to cover the crossover region")
    rows = []
    for hidden in range(min_hidden, max_hidden + 1):
        for depth in range(2, max_depth + 1):
            lag = memory_bound(hidden, depth)
            for shallow_depth in range(1, depth):
                shallow_width = math.ceil(lag / shallow_depth) + 1
                rows.append(
                    CrossoverRow(
                        hidden=hidden,
                        depth=depth,
                        shallow_depth=shallow_depth,
                        lag=lag,
                        shallow_width=shallow_width,
                        params_deep=param_count(hidden, depth),
                        params_shallow=param_count(shallow_width, shallow_depth),
                    )
                )
    return rows


def crossover_always_positive(rows: list[CrossoverRow], min_hidden: int = 4) -> bool:
    return all(row.delta > 0 for row in rows if row.hidden >= min_hidden)


def crossover_csv(rows: list[CrossoverRow]) -> str:
    lines = ["n,L,Lt,p,n_tilde,params_deep,params_shallow,delta"]
    for r in rows:
        lines.append(
            f"{r.hidden},{r.depth},{r.shallow_depth},{r.lag},{r.shallow_width},"
            f"{r.params_deep},{r.params_shallow},{r.delta}"
        )
    return "\n".join(lines) + "\n"
