"""Grid sweeps, the construction-vs-oracle verification campaign, and tidy
result emission (CSV + plot-data files).

``sweep`` trains a grid of model shapes on one task and reports per-cell
records.  ``verify_campaign`` exercises every constructed network against the
independent oracle asserting its defining property and returns machine-
readable verdicts; a single red verdict makes the bundle fail.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from . import constructions as con
from . import oracles as orc
from .linalg import Rng
from .models import forward
from .params import ModelConfig, ModelParams, init_params, params_to_dict, zero_params
from .tasks import TaskSpec
from .training import RunConfig, RunRecord, TrainSettings, run


# --- sweeps ---


@dataclass(frozen=True)
class SweepGrid:
    depths: tuple[int, ...]
    widths: tuple[int, ...]
    families: tuple[str, ...] = ("rnn",)
    placements: tuple[str, ...] = ("recurrent",)
    activation: str = "identity"
    rank: int | None = None

    def cells(self):
        for family in self.families:
            for placement in self.placements:
                for depth in self.depths:
                    for width in self.widths:
                        yield family, placement, depth, width


def sweep(
    task: TaskSpec,
    grid: SweepGrid,
    train: TrainSettings,
    readout: bool = True,
    progress=None,
) -> list[RunRecord]:
    """One record per grid cell; failed cells are kept (their seeds carry the
    divergence flags) rather than aborting the sweep."""
    records = []
    for family, placement, depth, width in grid.cells():
        model = ModelConfig(
            family=family,
            depth=depth,
            hidden=width,
            input_dim=task.d,
            rank=grid.rank if family in ("cprnn", "cpbirnn") else None,
            activation=grid.activation,
            placement=placement,
        )
        config = RunConfig(task=task, model=model, train=train, readout=readout)
        record = run(config)
        records.append(record)
        if progress is not None:
            progress(record)
    return records


def sweep_rows(records: list[RunRecord]) -> list[dict]:
    rows = []
    for rec in records:
        m = rec.config.model
        rows.append(
            {
                "task": rec.config.task.kind,
                "family": m.family,
                "placement": m.placement,
                "n": m.hidden,
                "L": m.depth,
                "units": m.hidden * m.depth,
                "params": rec.param_count,
                "mean_test": rec.mean_test,
                "std_test": rec.std_test,
                "best_test": rec.best_test,
                "failed_seeds": sum(r.diverged for r in rec.seed_results),
            }
        )
    return rows


def sweep_csv(records: list[RunRecord]) -> str:
    rows = sweep_rows(records)
    cols = [
        "task", "family", "placement", "n", "L", "units", "params",
        "mean_test", "std_test", "best_test", "failed_seeds",
    ]
    lines = [",".join(cols)]
    for row in rows:
        lines.append(",".join(_csv_cell(row[c]) for c in cols))
    return "\n".join(lines) + "\n"


def _csv_cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def plot_data(records: list[RunRecord], x_axis: str = "n") -> dict[str, str]:
    """Per-(family, placement, depth) plot files with columns x, y, y_err."""
    rows = sweep_rows(records)
    groups: dict[str, list[dict]] = {}
    for row in rows:
        key = f"{row['task']}_{row['family']}_{row['placement']}_L{row['L']}"
        groups.setdefault(key, []).append(row)
    out = {}
    for key, grp in groups.items():
        grp = sorted(grp, key=lambda r: r[x_axis])
        lines = [f"{x_axis},mean_test,std_test"]
        for row in grp:
            lines.append(f"{row[x_axis]},{_csv_cell(row['mean_test'])},{_csv_cell(row['std_test'])}")
        out[key] = "\n".join(lines) + "\n"
    return out


def minimal_width_reaching(records: list[RunRecord], depth: int, threshold: float) -> int | None:
    """Smallest swept width whose best seed got under the loss threshold."""
    widths = sorted(
        rec.config.model.hidden
        for rec in records
        if rec.config.model.depth == depth and rec.best_test < threshold
    )
    return widths[0] if widths else None


# --- verification campaign ---


@dataclass
class Verdict:
    claim: str
    params_hash: str
    passed: bool
    residual: float
    detail: str = ""

    def to_dict(self) -> dict:
        return {
            "claim": self.claim,
            "params_hash": self.params_hash,
            "passed": bool(self.passed),
            "residual": float(self.residual),
            "detail": self.detail,
        }


def _hash_params(params: ModelParams) -> str:
    import hashlib

    blob = json.dumps(params_to_dict(params), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def _verdict(claim, params, passed, residual, detail="") -> Verdict:
    return Verdict(claim, _hash_params(params) if params is not None else "-", passed, residual, detail)


def campaign_copier_exact(rng: Rng, widths=(2, 3, 4, 5), T: int = 32) -> list[Verdict]:
    """Copier output equals the lag reference exactly on integer and Gaussian inputs."""
    verdicts = []
    worst = 0.0
    worst_case = ""
    last_params = None
    ok = True
    for n in widths:
        for p in range(1, 3 * (n - 1) + 1):
            model, readout = con.build_copier(n, p)
            last_params = model
            x_int = np.round(rng.uniform(-5, 5, (T, 1)))
            x_gauss = rng.normal((T, 1))
            for tag, x in (("int", x_int), ("gauss", x_gauss)):
                got = forward(model, x).outputs[0] @ readout
                want = con.lagged_copy_reference(x, p)
                err = float(np.max((got - want) ** 2))
                if err > worst:
                    worst, worst_case = err, f"n={n} p={p} {tag}"
                if tag == "int" and err != 0.0:
                    ok = False
                if tag == "gauss" and err >= 1e-24:
                    ok = False
    verdicts.append(_verdict("copier-exact", last_params, ok, worst, worst_case))
    return verdicts


def campaign_copier_depth(widths=(2, 3, 4, 5), max_extra: int = 3) -> list[Verdict]:
    """Constructor depth matches ceil(p/(n-1)) and exceeds the capacity bound's
    depth whenever the lag steps past it."""
    ok = True
    for n in widths:
        for depth in range(1, max_extra + 1):
            bound = con.memory_bound(n, depth)
            spec_at = con.CopierSpec(n, bound)
            spec_past = con.CopierSpec(n, bound + 1)
            if spec_at.depth != depth or spec_past.depth != depth + 1:
                ok = False
    return [_verdict("copier-depth-consistency", None, ok, 0.0)]


def campaign_flatten(rng: Rng, trials: int = 100) -> list[Verdict]:
    worst = 0.0
    last = None
    for k in range(trials):
        r = rng.split(k)
        n = int(r.integers(2, 5))
        depth = int(r.integers(1, 5))
        d = int(r.integers(1, 4))
        T = int(r.integers(2, 9))
        cfg = ModelConfig("rnn", depth=depth, hidden=n, input_dim=d)
        deep = init_params(cfg, r.split(0))
        for lay in deep.layers:
            lay.bias[:] = r.split(1).normal(n) * 0.3
            lay.h0[:] = r.split(2).normal(n) * 0.3
        flat = con.build_flattened(deep)
        last = flat
        dev = orc.concat_deviation(deep, flat, T, trials=3, rng=r.split(3))
        worst = max(worst, dev)
    return [_verdict("flatten-concat-equiv", last, worst < 1e-12, worst)]


def campaign_affine(rng: Rng, trials: int = 100) -> list[Verdict]:
    worst = 0.0
    last = None
    for k in range(trials):
        r = rng.split(k)
        n = int(r.integers(2, 5))
        depth = int(r.integers(1, 5))
        cfg = ModelConfig("rnn", depth=depth, hidden=n, input_dim=int(r.integers(1, 4)))
        model = init_params(cfg, r.split(0))
        for lay in model.layers:
            lay.bias[:] = r.split(1).normal(n) * 0.3
            lay.h0[:] = r.split(2).normal(n) * 0.3
        last = model
        worst = max(worst, orc.affine_deviation(model, 4, trials=5, rng=r.split(3)))
    verdicts = [_verdict("linear-rnn-affine", last, worst < 1e-10, worst)]

    # negative control: a tanh net must break superposition
    cfg = ModelConfig("rnn", depth=2, hidden=3, input_dim=2, activation="tanh")
    control = init_params(cfg, rng.split(9999))
    dev = orc.affine_deviation(control, 4, trials=5, rng=rng.split(10000))
    verdicts.append(_verdict("nonlinear-control-breaks-affinity", control, dev > 1e-6, dev))
    return verdicts


def campaign_degree(rng: Rng) -> list[Verdict]:
    verdicts = []
    ok = True
    worst_resid = 0.0
    last = None
    for depth in (1, 2, 3, 4):
        model = con.build_diag_power(3, 3, depth)
        last = model
        rep = orc.estimate_degree(
            orc.model_output_fn(model, t=2), which_input=1, T=2, input_dim=3,
            max_deg=depth + 2, rng=rng.split(depth),
        )
        worst_resid = max(worst_resid, rep.residual)
        if rep.degree != depth or rep.exceeded:
            ok = False
    verdicts.append(_verdict("depth-degree-growth", last, ok, worst_resid))

    ok = True
    for k in range(20):
        r = rng.split(100 + k)
        depth = int(r.integers(1, 4))
        cfg = ModelConfig("birnn", depth=depth, hidden=3, input_dim=3)
        model = init_params(cfg, r.split(0))
        for lay in model.layers:
            lay.h0[:] = r.split(1).normal(3)
        rep = orc.estimate_degree(
            orc.model_output_fn(model, t=2), which_input=1, T=2, input_dim=3,
            max_deg=depth + 2, rng=r.split(2),
        )
        if rep.degree > depth:
            ok = False
    verdicts.append(_verdict("random-bilinear-degree-bound", None, ok, 0.0))

    ok = True
    for T, depth in ((2, 1), (3, 1), (2, 2), (3, 2)):
        r = rng.split(200 + 10 * T + depth)
        cfg = ModelConfig("birnn", depth=depth, hidden=2, input_dim=2)
        model = init_params(cfg, r.split(0))
        for lay in model.layers:
            lay.h0[:] = r.split(1).normal(2)
        if not orc.check_degree_bound_TL(model, T, rng=r.split(2)):
            ok = False
    verdicts.append(_verdict("degree-bound-joint-line", None, ok, 0.0))
    return verdicts


def campaign_parity_net(rng: Rng) -> list[Verdict]:
    model = con.build_parity(5)
    x = np.where(rng.normal((20, 5)) > 0, 1.0, -1.0)
    got = forward(model, x).outputs[0]
    want = np.cumprod(x, axis=0)
    err = float(np.abs(got - want).max())
    return [_verdict("parity-cumulative-product", model, err == 0.0, err)]


def campaign_cp_rank(rng: Rng, trials: int = 100) -> list[Verdict]:
    verdicts = []
    ok = True
    last = None
    for k in range(trials):
        r = rng.split(k)
        n = int(r.integers(2, 6))
        d = int(r.integers(2, 6))
        rank_r = int(r.integers(1, 5))
        depth = int(r.integers(1, 4))
        cfg = ModelConfig("cpbirnn", depth=depth, hidden=n, input_dim=d, rank=rank_r)
        model = init_params(cfg, r.split(0))
        for lay in model.layers:
            lay.h0[:] = r.split(1).normal(n)
        last = model
        got = orc.jacobian_rank_h1(model, r.split(2).normal(d))
        if got > rank_r:
            ok = False
    verdicts.append(_verdict("cp-rank-at-most-R", last, ok, 0.0))

    ok = True
    for k in range(20):
        r = rng.split(1000 + k)
        n = int(r.integers(2, 6))
        d = int(r.integers(2, 6))
        rank_r = int(r.integers(1, min(n, d) + 1))
        depth = int(r.integers(1, 4))
        model = con.build_cp_rank_witness(n, d, rank_r, depth, rng=r.split(0))
        got = orc.jacobian_rank_h1(model, r.split(2).normal(d))
        if got != rank_r:
            ok = False
    verdicts.append(_verdict("cp-rank-reaches-R-on-witnesses", None, ok, 0.0))
    return verdicts


def campaign_unroll(rng: Rng, trials: int = 20) -> list[Verdict]:
    from .models import unroll_closed_form

    worst = 0.0
    for k in range(trials):
        r = rng.split(k)
        family = ["rnn", "2rnn", "birnn", "cprnn", "cpbirnn"][k % 5]
        rank_r = 2 if family in ("cprnn", "cpbirnn") else None
        depth = int(r.integers(1, 5))
        cfg = ModelConfig(family, depth=depth, hidden=3, input_dim=2, rank=rank_r)
        model = init_params(cfg, r.split(0))
        for lay in model.layers:
            lay.h0[:] = r.split(1).normal(3) * 0.5
            if cfg.first_order_free:
                lay.bias[:] = r.split(2).normal(3) * 0.3
        x = r.split(3).normal((6, 2))
        trace = forward(model, x)
        for t in (1, 3, 6):
            for layer in range(1, depth + 1):
                u = unroll_closed_form(model, x, t, layer)[0]
                h = trace.h(t, layer)[0]
                scale = max(1.0, float(np.abs(h).max()))
                worst = max(worst, float(np.abs(u - h).max() / scale))
    return [_verdict("unrolled-product-form", None, worst < 1e-12, worst)]


def campaign_param_count() -> list[Verdict]:
    ok = True
    for n in range(1, 9):
        for depth in range(1, 5):
            cfg = ModelConfig("rnn", depth=depth, hidden=n, input_dim=1)
            model = zero_params(cfg)
            if con.param_count(n, depth) != model.n_weights(include_h0=False):
                ok = False
            if con.param_count(n, depth, include_h0=True) != model.n_weights(include_h0=True):
                ok = False
    verdicts = [_verdict("param-count-matches-entries", None, ok, 0.0)]

    rows = con.crossover_table(12, 5)
    pos = con.crossover_always_positive(rows, min_hidden=4)
    neg_row = next(
        (r for r in rows if (r.hidden, r.depth, r.shallow_depth) == (3, 2, 1)), None
    )
    has_neg = neg_row is not None and neg_row.delta == -1
    verdicts.append(
        _verdict(
            "param-crossover-sign-pattern", None, pos and has_neg,
            0.0 if pos and has_neg else 1.0,
            f"negative row delta at (3,2,1): {None if neg_row is None else neg_row.delta}",
        )
    )
    return verdicts


def campaign_gradients(rng: Rng) -> list[Verdict]:
    worst = 0.0
    for k, (family, rank_r) in enumerate(
        [("rnn", None), ("2rnn", None), ("birnn", None), ("cprnn", 2), ("cpbirnn", 2)]
    ):
        for placement in ("recurrent", "depth_only"):
            r = rng.split(k, 0 if placement == "recurrent" else 1)
            cfg = ModelConfig(
                family, depth=2, hidden=3, input_dim=2, rank=rank_r,
                activation="tanh", placement=placement,
            )
            model = init_params(cfg, r.split(0))
            for lay in model.layers:
                lay.h0[:] = r.split(1).normal(3) * 0.3
            x = r.split(2).normal((2, 3, 2))
            y = r.split(3).normal((2, 3, 3))
            worst = max(worst, ag.gradcheck_max_err(model, x, y))
    return [_verdict("bptt-matches-finite-differences", None, worst < 1e-5, worst)]


def verify_campaign(seed: int = 0) -> list[Verdict]:
    """Every construction paired with the oracle asserting its property."""
    rng = Rng(seed)
    verdicts = []
    verdicts += campaign_copier_exact(rng.split(1))
    verdicts += campaign_copier_depth()
    verdicts += campaign_flatten(rng.split(2))
    verdicts += campaign_affine(rng.split(3))
    verdicts += campaign_degree(rng.split(4))
    verdicts += campaign_parity_net(rng.split(5))
    verdicts += campaign_cp_rank(rng.split(6))
    verdicts += campaign_unroll(rng.split(7))
    verdicts += campaign_param_count()
    verdicts += campaign_gradients(rng.split(8))
    return verdicts


def campaign_report(verdicts: list[Verdict]) -> str:
    lines = []
    for v in verdicts:
        status = "PASS" if v.passed else "FAIL"
        lines.append(f"[{status}] {v.claim} (residual {v.residual:.3e}) {v.detail}".rstrip())
    return "\n".join(lines) + "\n"
