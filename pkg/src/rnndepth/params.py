"""Model families, per-layer parameters, initialization and JSON round-trip.

Four families share one parameter container:

* ``rnn``      first-order only: h_t = act(w_rec h_{t-1} + w_in s_t + bias)
* ``2rnn``     adds a full order-3 bilinear tensor coupling h_{t-1} and s_t
* ``birnn``    bilinear term only (w_in, w_rec, bias pinned to zero)
* ``cprnn``    2rnn with the bilinear tensor held in CP-factor form
* ``cpbirnn``  birnn with CP factors

``s_t`` is the signal arriving from the layer below (the raw input at layer 1).
Activation placement: ``recurrent`` applies the activation around the whole
update; ``depth_only`` applies it to the signal passed up between layers and
leaves the time recurrence (and the top-layer output) linear.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .linalg import Rng, ShapeError

FAMILIES = ("rnn", "2rnn", "birnn", "cprnn", "cpbirnn")
ACTIVATIONS = ("identity", "tanh", "relu")
PLACEMENTS = ("recurrent", "depth_only")

BILINEAR_FAMILIES = ("2rnn", "birnn")
CP_FAMILIES = ("cprnn", "cpbirnn")
PURE_BILINEAR_FAMILIES = ("birnn", "cpbirnn")


@dataclass(frozen=True)
class ModelConfig:
    family: str
    depth: int
    hidden: int
    input_dim: int
    rank: int | None = None
    activation: str = "identity"
    placement: str = "recurrent"
    activate_top: bool = False

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.placement not in PLACEMENTS:
            raise ValueError(f"unknown placement {self.placement!r}")
        if self.depth < 1 or self.hidden < 1 or self.input_dim < 1:
            raise ValueError("depth, hidden and input_dim must be >= 1")
        if self.family in CP_FAMILIES:
            if self.rank is None or self.rank < 0:
                raise ValueError(f"family {self.family!r} needs a rank >= 0")
        elif self.rank is not None:
            raise ValueError(f"family {self.family!r} takes no rank")
        if self.activate_top and self.placement != "depth_only":
            raise ValueError("activate_top only applies to depth_only placement")

    @property
    def has_bilinear(self) -> bool:
        return self.family in BILINEAR_FAMILIES

    @property
    def has_cp(self) -> bool:
        return self.family in CP_FAMILIES

    @property
    def first_order_free(self) -> bool:
        """Whether w_in / w_rec / bias are free parameters (False pins them to 0)."""
        return self.family not in PURE_BILINEAR_FAMILIES

    @property
    def is_linear(self) -> bool:
        return self.activation == "identity"

    def layer_input_dim(self, layer: int) -> int:
        """Width of the signal entering 1-based layer index ``layer``."""
        return self.input_dim if layer == 1 else self.hidden


@dataclass
class CPFactors:
    """CP factors of a layer's bilinear tensor: term = out diag(state^T h) inp^T s."""

    state: np.ndarray  # (hidden, rank) contracts the previous hidden state
    inp: np.ndarray    # (layer input dim, rank) contracts the incoming signal
    out: np.ndarray    # (hidden, rank)

    def copy(self) -> "CPFactors":
        return CPFactors(self.state.copy(), self.inp.copy(), self.out.copy())


@dataclass
class LayerParams:
    w_in: np.ndarray   # (hidden, layer input dim)
    w_rec: np.ndarray  # (hidden, hidden)
    bias: np.ndarray   # (hidden,)
    h0: np.ndarray     # (hidden,)
    bilinear: np.ndarray | None = None  # (hidden, layer input dim, hidden)
    cp: CPFactors | None = None

    def copy(self) -> "LayerParams":
        return LayerParams(
            self.w_in.copy(),
            self.w_rec.copy(),
            self.bias.copy(),
            self.h0.copy(),
            None if self.bilinear is None else self.bilinear.copy(),
            None if self.cp is None else self.cp.copy(),
        )


@dataclass
class ModelParams:
    layers: list[LayerParams]
    config: ModelConfig

    def __post_init__(self):
        validate_params(self)

    def copy(self) -> "ModelParams":
        return ModelParams([layer.copy() for layer in self.layers], self.config)

    def n_weights(self, include_h0: bool = False) -> int:
        """Entry count of all weight arrays (bilinear/CP included, h0 optional)."""
        total = 0
        for layer in self.layers:
            if self.config.first_order_free:
                total += layer.w_in.size + layer.w_rec.size + layer.bias.size
            if layer.bilinear is not None:
                total += layer.bilinear.size
            if layer.cp is not None:
                total += layer.cp.state.size + layer.cp.inp.size + layer.cp.out.size
            if include_h0:
                total += layer.h0.size
        return total


def validate_params(params: ModelParams) -> None:
    cfg = params.config
    if len(params.layers) != cfg.depth:
        raise ShapeError(f"expected {cfg.depth} layers, got {len(params.layers)}")
    n = cfg.hidden
    for idx, layer in enumerate(params.layers, start=1):
        din = cfg.layer_input_dim(idx)
        where = f"layer {idx}"
        _expect(layer.w_in, (n, din), f"{where} w_in")
        _expect(layer.w_rec, (n, n), f"{where} w_rec")
        _expect(layer.bias, (n,), f"{where} bias")
        _expect(layer.h0, (n,), f"{where} h0")
        if layer.bilinear is not None and layer.cp is not None:
            raise ShapeError(f"{where}: at most one of bilinear / cp may be set")
        if cfg.has_bilinear:
            if layer.bilinear is None:
                raise ShapeError(f"{where}: family {cfg.family} needs a bilinear tensor")
            _expect(layer.bilinear, (n, din, n), f"{where} bilinear")
        elif cfg.has_cp:
            if layer.cp is None:
                raise ShapeError(f"{where}: family {cfg.family} needs CP factors")
            _expect(layer.cp.state, (n, cfg.rank), f"{where} cp.state")
            _expect(layer.cp.inp, (din, cfg.rank), f"{where} cp.inp")
            _expect(layer.cp.out, (n, cfg.rank), f"{where} cp.out")
        elif layer.bilinear is not None or layer.cp is not None:
            raise ShapeError(f"{where}: family {cfg.family} is first-order only")
        if not cfg.first_order_free:
            for name, arr in (("w_in", layer.w_in), ("w_rec", layer.w_rec), ("bias", layer.bias)):
                if np.any(arr != 0.0):
                    raise ShapeError(f"{where}: {name} must be zero for family {cfg.family}")


def _expect(arr, shape, what):
    arr = np.asarray(arr)
    if arr.shape != shape:
        raise ShapeError(f"{what}: expected shape {shape}, got {arr.shape}")
    if arr.size and not np.isfinite(arr).all():
        raise ShapeError(f"{what}: non-finite entries")


def zero_params(config: ModelConfig) -> ModelParams:
    layers = []
    n = config.hidden
    for layer in range(1, config.depth + 1):
        din = config.layer_input_dim(layer)
        bilinear = np.zeros((n, din, n)) if config.has_bilinear else None
        cp = None
        if config.has_cp:
            cp = CPFactors(
                np.zeros((n, config.rank)),
                np.zeros((din, config.rank)),
                np.zeros((n, config.rank)),
            )
        layers.append(
            LayerParams(
                w_in=np.zeros((n, din)),
                w_rec=np.zeros((n, n)),
                bias=np.zeros(n),
                h0=np.zeros(n),
                bilinear=bilinear,
                cp=cp,
            )
        )
    return ModelParams(layers, config)


def init_params(config: ModelConfig, rng: Rng, scale: float | None = None) -> ModelParams:
    """Uniform [-1/sqrt(hidden), 1/sqrt(hidden)] weights, zero biases excluded;
    biases and initial states start at zero."""
    bound = scale if scale is not None else 1.0 / np.sqrt(config.hidden)
    params = zero_params(config)
    for layer in params.layers:
        if config.first_order_free:
            layer.w_in[:] = rng.uniform(-bound, bound, layer.w_in.shape)
            layer.w_rec[:] = rng.uniform(-bound, bound, layer.w_rec.shape)
        if layer.bilinear is not None:
            layer.bilinear[:] = rng.uniform(-bound, bound, layer.bilinear.shape)
        if layer.cp is not None:
            layer.cp.state[:] = rng.uniform(-bound, bound, layer.cp.state.shape)
            layer.cp.inp[:] = rng.uniform(-bound, bound, layer.cp.inp.shape)
            layer.cp.out[:] = rng.uniform(-bound, bound, layer.cp.out.shape)
    return params


# --- JSON round-trip (bit-exact for float64: repr-based float encoding) ---


def config_to_dict(config: ModelConfig) -> dict:
    return {
        "family": config.family,
        "depth": config.depth,
        "hidden": config.hidden,
        "input_dim": config.input_dim,
        "rank": config.rank,
        "activation": config.activation,
        "placement": config.placement,
        "activate_top": config.activate_top,
    }


def config_from_dict(d: dict) -> ModelConfig:
    return ModelConfig(**d)


def _array_to_json(arr: np.ndarray) -> dict:
    return {"shape": list(arr.shape), "data": arr.reshape(-1).tolist()}


def _array_from_json(d: dict) -> np.ndarray:
    return np.array(d["data"], dtype=np.float64).reshape(d["shape"])


def params_to_dict(params: ModelParams) -> dict:
    layers = []
    for layer in params.layers:
        entry = {
            "w_in": _array_to_json(layer.w_in),
            "w_rec": _array_to_json(layer.w_rec),
            "bias": _array_to_json(layer.bias),
            "h0": _array_to_json(layer.h0),
            "bilinear": None if layer.bilinear is None else _array_to_json(layer.bilinear),
            "cp": None
            if layer.cp is None
            else {
                "state": _array_to_json(layer.cp.state),
                "inp": _array_to_json(layer.cp.inp),
                "out": _array_to_json(layer.cp.out),
            },
        }
        layers.append(entry)
    return {"format": "rnndepth-model-v1", "config": config_to_dict(params.config), "layers": layers}


def params_from_dict(d: dict) -> ModelParams:
    if d.get("format") != "rnndepth-model-v1":
        raise ValueError(f"unrecognized model format {d.get('format')!r}")
    config = config_from_dict(d["config"])
    layers = []
    for entry in d["layers"]:
        cp = None
        if entry["cp"] is not None:
            cp = CPFactors(
                _array_from_json(entry["cp"]["state"]),
                _array_from_json(entry["cp"]["inp"]),
                _array_from_json(entry["cp"]["out"]),
            )
        layers.append(
            LayerParams(
                w_in=_array_from_json(entry["w_in"]),
                w_rec=_array_from_json(entry["w_rec"]),
                bias=_array_from_json(entry["bias"]),
                h0=_array_from_json(entry["h0"]),
                bilinear=None if entry["bilinear"] is None else _array_from_json(entry["bilinear"]),
                cp=cp,
            )
        )
    return ModelParams(layers, config)


def save_params(params: ModelParams, path) -> None:
    with open(path, "w") as fh:
        json.dump(params_to_dict(params), fh)


def load_params(path) -> ModelParams:
    with open(path) as fh:
        return params_from_dict(json.load(fh))
