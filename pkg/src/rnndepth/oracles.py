"""Independent numerical verifiers for the structural claims of each model
family: affinity of linear nets, polynomial degree probes, Jacobian rank of
CP bilinear nets, and deep-vs-flattened trace equivalence.

Every check here works from the forward pass alone (sampling, interpolation,
finite differences); none reuses the construction it verifies.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import chebyshev

from .linalg import Rng
from .models import forward
from .params import ModelParams


def model_output_fn(params: ModelParams, t: int | None = None, layer: int | None = None):
    """Black-box view of a model: inputs (T, d) -> state vector at (t, layer).

    Defaults to the last time step of the top layer.
    """
    depth = params.config.depth

    def f(inputs: np.ndarray) -> np.ndarray:
        trace = forward(params, inputs)
        tt = trace.seq_len if t is None else t
        ll = depth if layer is None else layer
        return trace.h(tt, ll)[0]

    return f


# --- affinity ---


def affine_deviation(params: ModelParams, T: int, trials: int, rng: Rng) -> float:
    """Largest violation of superposition for the bias-corrected sequence map.

    g(x) = vec(outputs(x)) - vec(outputs(0)) must satisfy
    g(a x + b y) = a g(x) + b g(y) when the net is linear.
    """
    cfg = params.config
    d = cfg.input_dim

    def g(x):
        return forward(params, x[None]).outputs.ravel()

    base = g(np.zeros((T, d)))
    worst = 0.0
    for _ in range(trials):
        x = rng.normal((T, d))
        y = rng.normal((T, d))
        a, b = rng.uniform(-2.0, 2.0, 2)
        lhs = g(a * x + b * y) - base
        rhs = a * (g(x) - base) + b * (g(y) - base)
        worst = max(worst, float(np.abs(lhs - rhs).max()))
    return worst


def check_affine(params: ModelParams, T: int, trials: int, tol: float, rng: Rng) -> bool:
    if params.config.activation != "identity":
        raise ValueError("affinity check applies to identity-activation nets")
    return affine_deviation(params, T, trials, rng) < tol


# --- polynomial degree estimation ---


@dataclass
class DegreeReport:
    degree: int
    exceeded: bool
    residual: float
    direction: np.ndarray
    probe_point: np.ndarray
    coeff_profile: np.ndarray = field(repr=False)

    def __str__(self):
        return f">{self.degree - 1}" if self.exceeded else str(self.degree)


def estimate_degree(
    f,
    which_input: int,
    T: int,
    input_dim: int,
    max_deg: int,
    tol: float = 1e-6,
    rng: Rng | None = None,
    x0: np.ndarray | None = None,
    direction: np.ndarray | None = None,
) -> DegreeReport:
    """Polynomial degree of ``f`` along a random line through one input step.

    Restricts input ``which_input`` (1-based) to x0 + s * v, samples s at
    max_deg + 2 Chebyshev nodes, interpolates exactly in the Chebyshev basis
    and reports the largest coefficient index above tol relative to the
    largest coefficient.  ``exceeded`` flags energy at the top index, meaning
    the true degree may be larger than max_deg.
    """
    rng = rng or Rng(0)
    if x0 is None:
        x0 = rng.normal((T, input_dim))
    x0 = np.asarray(x0, dtype=np.float64)
    if direction is None:
        direction = rng.normal(input_dim)
    v = np.asarray(direction, dtype=np.float64)
    if not (1 <= which_input <= T):
        raise ValueError(f"which_input must be in [1, {T}]")

    npts = max_deg + 2
    nodes = np.cos(np.pi * (2 * np.arange(npts) + 1) / (2 * npts))  # Chebyshev points
    samples = []
    for s in nodes:
        x = x0.copy()
        x[which_input - 1] = x0[which_input - 1] + s * v
        samples.append(np.atleast_1d(f(x)))
    values = np.stack(samples)  # (npts, out_dim)

    coeffs = chebyshev.chebfit(nodes, values, deg=npts - 1)  # (npts, out_dim)
    profile = np.abs(coeffs).max(axis=1)
    cmax = profile.max()
    if cmax == 0.0:
        return DegreeReport(0, False, 0.0, v, x0, profile)
    above = np.nonzero(profile > tol * cmax)[0]
    degree = int(above[-1]) if above.size else 0
    exceeded = degree > max_deg
    tail = profile[degree + 1 :]
    residual = float(tail.max() / cmax) if tail.size else 0.0
    return DegreeReport(degree, exceeded, residual, v, x0, profile)


def estimate_joint_degree(
    f,
    T: int,
    input_dim: int,
    max_deg: int,
    tol: float = 1e-6,
    rng: Rng | None = None,
) -> DegreeReport:
    """Degree along a random line moving the entire input sequence at once."""
    rng = rng or Rng(0)
    x0 = rng.normal((T, input_dim))
    v = rng.normal((T, input_dim))

    def restricted(s: float) -> np.ndarray:
        return np.atleast_1d(f(x0 + s * v))

    npts = max_deg + 2
    nodes = np.cos(np.pi * (2 * np.arange(npts) + 1) / (2 * npts))
    values = np.stack([restricted(s) for s in nodes])
    coeffs = chebyshev.chebfit(nodes, values, deg=npts - 1)
    profile = np.abs(coeffs).max(axis=1)
    cmax = profile.max()
    if cmax == 0.0:
        return DegreeReport(0, False, 0.0, v.ravel(), x0, profile)
    above = np.nonzero(profile > tol * cmax)[0]
    degree = int(above[-1]) if above.size else 0
    tail = profile[degree + 1 :]
    residual = float(tail.max() / cmax) if tail.size else 0.0
    return DegreeReport(degree, degree > max_deg, residual, v.ravel(), x0, profile)


def check_degree_bound_TL(params: ModelParams, T: int, tol: float = 1e-6, rng: Rng | None = None) -> bool:
    """Joint-line degree of the last output is at most T**depth for bilinear
    identity-activation nets."""
    cfg = params.config
    if cfg.activation != "identity":
        raise ValueError("degree bound check applies to identity-activation nets")
    bound = T**cfg.depth
    report = estimate_joint_degree(
        model_output_fn(params), T, cfg.input_dim, max_deg=bound + 2, rng=rng
    )
    return not report.exceeded and report.degree <= bound


# --- Jacobian rank of the first-step CP map ---


def fd_jacobian(f, x: np.ndarray, step: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of f at x; f maps (d,) -> (n,)."""
    x = np.asarray(x, dtype=np.float64)
    cols = []
    for j in range(x.shape[0]):
        h = step * max(1.0, abs(x[j]))
        hi = x.copy()
        hi[j] += h
        lo = x.copy()
        lo[j] -= h
        cols.append((np.asarray(f(hi)) - np.asarray(f(lo))) / (2.0 * h))
    return np.stack(cols, axis=1)


def jacobian_rank_h1(params: ModelParams, x1: np.ndarray, tol: float = 1e-6) -> int:
    """Rank of d h_1(top) / d x_1 for a pure-bilinear CP net, measured by
    central differences and singular values above tol * sigma_max."""
    cfg = params.config
    if cfg.family != "cpbirnn" or cfg.activation != "identity":
        raise ValueError("Jacobian rank probe applies to linear cpbirnn nets")
    x1 = np.asarray(x1, dtype=np.float64)

    def h1(x):
        return forward(params, x[None, None, :]).h(1, cfg.depth)[0]

    jac = fd_jacobian(h1, x1)
    s = np.linalg.svd(jac, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > tol * s[0]))


# --- deep vs flattened equivalence ---


def concat_deviation(deep: ModelParams, shallow: ModelParams, T: int, trials: int, rng: Rng) -> float:
    """Largest gap between the shallow state and the stacked deep states."""
    nd, dd = deep.config.hidden, deep.config.depth
    if shallow.config.hidden != nd * dd or shallow.config.depth != 1:
        raise ValueError(
            f"shallow net must have one layer of width {nd * dd}, "
            f"got depth {shallow.config.depth} width {shallow.config.hidden}"
        )
    worst = 0.0
    for _ in range(trials):
        x = rng.normal((T, deep.config.input_dim))
        td = forward(deep, x)
        ts = forward(shallow, x)
        for t in range(1, T + 1):
            stacked = np.concatenate([td.h(t, l)[0] for l in range(1, dd + 1)])
            gap = np.abs(stacked - ts.h(t, 1)[0]).max()
            scale = max(1.0, np.abs(stacked).max())
            worst = max(worst, float(gap / scale))
    return worst


def check_concat_equiv(deep: ModelParams, shallow: ModelParams, T: int, trials: int, tol: float, rng: Rng) -> bool:
    return concat_deviation(deep, shallow, T, trials, rng) < tol
