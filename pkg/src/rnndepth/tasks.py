"""Seeded synthetic sequence tasks: lagged copy, sinusoidal transforms of a
lagged copy, and elementwise-sign parity.

Every generator is a pure function of (spec, seed): the three splits draw
from disjoint child streams of one seed, so datasets are reproducible
byte-for-byte and splits never overlap streams.  Targets satisfy their
defining formula exactly and the time steps before the lag has elapsed are
stored as zeros and flagged off in the mask.

Datasets serialize to a self-describing container: one JSON header line
followed by the raw little-endian float64 bytes of each array in header
order (C layout), convenient for diffing across independent implementations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .linalg import Rng

KINDS = ("copy", "sinus", "copy_sinus", "parity")

_SPLIT_STREAM = {"train": 0, "val": 1, "test": 2}

_KIND_DEFAULTS = {
    "copy": dict(d=5, T=16, p=8, omega=0.0),
    "sinus": dict(d=5, T=16, p=0, omega=3.0),
    "copy_sinus": dict(d=5, T=16, p=4, omega=3.0),
    "parity": dict(d=5, T=20, p=0, omega=0.0),
}


@dataclass(frozen=True)
class TaskSpec:
    kind: str
    d: int = 5
    T: int = 16
    p: int = 8
    omega: float = 3.0
    sizes: tuple[int, int, int] = (10000, 2000, 2000)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown task kind {self.kind!r}")
        if not (0 <= self.p < self.T):
            raise ValueError(f"lag p={self.p} must satisfy 0 <= p < T={self.T}")
        if self.d < 1 or self.T < 1:
            raise ValueError("d and T must be >= 1")
        if len(self.sizes) != 3 or any(s < 1 for s in self.sizes):
            raise ValueError("sizes must be three positive split counts")

    @classmethod
    def for_kind(cls, kind: str, **overrides) -> "TaskSpec":
        base = dict(_KIND_DEFAULTS[kind])
        base.update(overrides)
        return cls(kind=kind, **base)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "d": self.d,
            "T": self.T,
            "p": self.p,
            "omega": self.omega,
            "sizes": list(self.sizes),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TaskSpec":
        d = dict(d)
        d["sizes"] = tuple(d["sizes"])
        return cls(**d)


@dataclass
class SequenceBatch:
    inputs: np.ndarray   # (batch, T, d)
    targets: np.ndarray  # (batch, T, d_out)
    mask: np.ndarray     # (T,) bool, False on the zero-padded prefix

    @property
    def batch(self) -> int:
        return self.inputs.shape[0]

    @property
    def seq_len(self) -> int:
        return self.inputs.shape[1]


@dataclass
class Dataset:
    spec: TaskSpec
    train: SequenceBatch
    val: SequenceBatch
    test: SequenceBatch

    def split(self, name: str) -> SequenceBatch:
        return {"train": self.train, "val": self.val, "test": self.test}[name]


def _lag_shift(x: np.ndarray, p: int) -> np.ndarray:
    """x_{t-p} with a zero prefix, along axis 1."""
    out = np.zeros_like(x)
    if p == 0:
        out[:] = x
    else:
        out[:, p:, :] = x[:, : x.shape[1] - p, :]
    return out


def copy_targets(inputs: np.ndarray, p: int) -> np.ndarray:
    return _lag_shift(inputs, p)


def sinus_targets(inputs: np.ndarray, p: int, omega: float) -> np.ndarray:
    shifted = _lag_shift(inputs, p)
    out = np.sin(omega * shifted)
    out[:, :p, :] = 0.0
    return out


def parity_targets(inputs: np.ndarray) -> np.ndarray:
    return np.cumprod(inputs, axis=1)


def target_reference(spec: TaskSpec, inputs: np.ndarray) -> np.ndarray:
    """Recompute targets from inputs by the task's defining formula."""
    if spec.kind == "copy":
        return copy_targets(inputs, spec.p)
    if spec.kind in ("sinus", "copy_sinus"):
        return sinus_targets(inputs, spec.p, spec.omega)
    if spec.kind == "parity":
        return parity_targets(inputs)
    raise ValueError(spec.kind)


def _gaussian_inputs(rng: Rng, batch: int, T: int, d: int) -> np.ndarray:
    return rng.normal((batch, T, d))


def _sign_inputs(rng: Rng, batch: int, T: int, d: int) -> np.ndarray:
    x = rng.normal((batch, T, d))
    while True:  # exact zeros have measure zero but are resampled, not signed
        zero = x == 0.0
        if not zero.any():
            break
        x[zero] = rng.normal(int(zero.sum()))
    return np.where(x > 0.0, 1.0, -1.0)


def _make_split(spec: TaskSpec, rng: Rng, size: int) -> SequenceBatch:
    if spec.kind == "parity":
        inputs = _sign_inputs(rng, size, spec.T, spec.d)
    else:
        inputs = _gaussian_inputs(rng, size, spec.T, spec.d)
    targets = target_reference(spec, inputs)
    mask = np.arange(spec.T) >= spec.p
    return SequenceBatch(inputs, targets, mask)


def generate(spec: TaskSpec) -> Dataset:
    """Build all three splits from disjoint child streams of spec.seed."""
    root = Rng(spec.seed)
    splits = {}
    for name, size in zip(("train", "val", "test"), spec.sizes):
        splits[name] = _make_split(spec, root.split(_SPLIT_STREAM[name]), size)
    return Dataset(spec, splits["train"], splits["val"], splits["test"])


def gen_copy(spec: TaskSpec) -> Dataset:
    if spec.kind != "copy":
        raise ValueError(f"expected kind 'copy', got {spec.kind!r}")
    return generate(spec)


def gen_sinus(spec: TaskSpec) -> Dataset:
    if spec.kind != "sinus":
        raise ValueError(f"expected kind 'sinus', got {spec.kind!r}")
    return generate(spec)


def gen_copy_sinus(spec: TaskSpec) -> Dataset:
    if spec.kind != "copy_sinus":
        raise ValueError(f"expected kind 'copy_sinus', got {spec.kind!r}")
    return generate(spec)


def gen_parity(spec: TaskSpec) -> Dataset:
    if spec.kind != "parity":
        raise ValueError(f"expected kind 'parity', got {spec.kind!r}")
    return generate(spec)


# --- on-disk container ---


def save_split(path, spec: TaskSpec, name: str, batch: SequenceBatch) -> None:
    arrays = [
        ("inputs", batch.inputs),
        ("targets", batch.targets),
        ("mask", batch.mask.astype(np.float64)),
    ]
    header = {
        "format": "rnndepth-seqs-v1",
        "spec": spec.to_dict(),
        "split": name,
        "arrays": [{"name": n, "shape": list(a.shape)} for n, a in arrays],
        "dtype": "<f8",
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8"))
        fh.write(b"\n")
        for _, a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_split(path) -> tuple[TaskSpec, str, SequenceBatch]:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        if header.get("format") != "rnndepth-seqs-v1":
            raise ValueError(f"unrecognized dataset format {header.get('format')!r}")
        arrays = {}
        for entry in header["arrays"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape))
            buf = fh.read(count * 8)
            arrays[entry["name"]] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
    spec = TaskSpec.from_dict(header["spec"])
    batch = SequenceBatch(arrays["inputs"], arrays["targets"], arrays["mask"].astype(bool))
    return spec, header["split"], batch


def save_dataset(directory, dataset: Dataset) -> list[str]:
    import os

    os.makedirs(directory, exist_ok=True)
    paths = []
    for name in ("train", "val", "test"):
        path = os.path.join(directory, f"{name}.seqs")
        save_split(path, dataset.spec, name, dataset.split(name))
        paths.append(path)
    return paths


def load_dataset(directory) -> Dataset:
    import os

    parts = {}
    spec = None
    for name in ("train", "val", "test"):
        spec, split_name, batch = load_split(os.path.join(directory, f"{name}.seqs"))
        assert split_name == name
        parts[name] = batch
    return Dataset(spec, parts["train"], parts["val"], parts["test"])
