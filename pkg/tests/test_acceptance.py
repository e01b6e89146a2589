"""End-to-end acceptance battery.

One test per shipped guarantee, each printing a PASS line with its measured
margin (run with ``pytest tests/test_acceptance.py -v -s`` to see them live).
The heavy training-based checks sit at the bottom of the file; everything is
seeded, so every run measures identical numbers.
"""

import math

import numpy as np

from rnndepth import autograd as ag
from rnndepth import constructions as con
from rnndepth import oracles as orc
from rnndepth import training as tr
from rnndepth.linalg import Rng
from rnndepth.models import forward
from rnndepth.params import ModelConfig, init_params
from rnndepth.tasks import TaskSpec, generate


def _report(line: str) -> None:
    print(f"\n{line}")


def random_net(family, depth, hidden, input_dim, rank=None, activation="identity",
               placement="recurrent", seed=0, spread=0.3):
    cfg = ModelConfig(family, depth=depth, hidden=hidden, input_dim=input_dim,
                      rank=rank, activation=activation, placement=placement)
    rng = Rng(seed)
    p = init_params(cfg, rng.split(0))
    for i, lay in enumerate(p.layers):
        lay.h0[:] = rng.split(1, i).normal(hidden) * spread
        if cfg.first_order_free:
            lay.bias[:] = rng.split(2, i).normal(hidden) * spread
    return p


# ---------------------------------------------------------------- criterion 1
def test_criterion_01_copier_exactness():
    """Copy construction is exact for every width/lag pair at T=32."""
    rng = Rng(1001)
    worst_int = worst_gauss = 0.0
    for n in range(2, 6):
        for p in range(1, 3 * (n - 1) + 1):
            model, readout = con.build_copier(n, p)
            x_int = np.round(rng.split(n, p, 0).uniform(-9, 9, (32, 1)))
            x_gau = rng.split(n, p, 1).normal((32, 1))
            got_i = forward(model, x_int).outputs[0] @ readout
            got_g = forward(model, x_gau).outputs[0] @ readout
            worst_int = max(worst_int, float(np.mean((got_i - con.lagged_copy_reference(x_int, p)) ** 2)))
            worst_gauss = max(worst_gauss, float(np.mean((got_g - con.lagged_copy_reference(x_gau, p)) ** 2)))
    assert worst_int == 0.0
    assert worst_gauss < 1e-24
    _report(f"[PASS] criterion 1 copier exactness: integer MSE {worst_int}, gaussian MSE {worst_gauss}")


# ---------------------------------------------------------------- criterion 3
def test_criterion_03_parameter_crossover():
    """Deep nets are strictly cheaper at width >= 4; width 3 shows the reversal."""
    rows = con.crossover_table(12, 5)
    wide = [r for r in rows if r.hidden >= 4]
    assert all(r.delta > 0 for r in wide)
    neg = next(r for r in rows if (r.hidden, r.depth, r.shallow_depth) == (3, 2, 1))
    assert neg.params_shallow == 35 and neg.params_deep == 36 and neg.delta == -1
    want = (3.0 + math.sqrt(13.0)) / 2.0
    got = con.critical_width(2, 1)
    assert abs(got - want) < 1e-12
    _report(
        f"[PASS] criterion 3 crossover: {len(wide)} rows positive for n in [4,12], "
        f"delta(3,2,1) = {neg.delta}, critical width {got:.12f}"
    )


# ---------------------------------------------------------------- criterion 4
def test_criterion_04_flattening_equivalence():
    """Stacked states of 100 random deep linear nets match their wide single layer."""
    rng = Rng(1004)
    worst = 0.0
    for k in range(100):
        r = rng.split(k)
        n = int(r.integers(2, 5))
        depth = int(r.integers(1, 5))
        d = int(r.integers(1, 4))
        T = int(r.integers(2, 9))
        deep = random_net("rnn", depth, n, d, seed=140000 + k)
        flat = con.build_flattened(deep)
        worst = max(worst, orc.concat_deviation(deep, flat, T, trials=2, rng=r.split(1)))
    assert worst < 1e-12
    _report(f"[PASS] criterion 4 flattening: 100 nets, worst relative gap {worst:.3e}")


# ---------------------------------------------------------------- criterion 5
def test_criterion_05_degree_growth():
    """Polynomial degree in the first input is exactly the depth on the diagonal
    construction, at most the depth on random bilinear nets, and the joint-line
    degree respects the T**L ceiling."""
    for depth in (1, 2, 3, 4):
        model = con.build_diag_power(3, 3, depth)
        rep = orc.estimate_degree(
            orc.model_output_fn(model, t=2), 1, T=2, input_dim=3,
            max_deg=depth + 2, rng=Rng(1505).split(depth),
        )
        assert rep.degree == depth and not rep.exceeded, (depth, rep.degree)

    over = []
    for k in range(50):
        r = Rng(1506).split(k)
        depth = int(r.integers(1, 4))
        model = random_net("birnn", depth, 3, 3, seed=150000 + k, spread=1.0)
        rep = orc.estimate_degree(
            orc.model_output_fn(model, t=2), 1, T=2, input_dim=3,
            max_deg=depth + 2, rng=r.split(1),
        )
        if rep.degree > depth:
            over.append((k, rep.degree, depth))
    assert not over, over

    for T in (2, 3):
        for depth in (1, 2):
            model = random_net("birnn", depth, 2, 2, seed=151000 + 10 * T + depth, spread=1.0)
            assert orc.check_degree_bound_TL(model, T, rng=Rng(1507).split(T, depth))
    _report("[PASS] criterion 5 degree growth: diag powers exact, 50 random nets bounded, T^L ceiling holds")


# ---------------------------------------------------------------- criterion 6
def test_criterion_06_linearity():
    """100 random deep linear nets satisfy superposition at 1e-10; nonlinear
    controls break it."""
    rng = Rng(1006)
    worst = 0.0
    for k in range(100):
        r = rng.split(k)
        depth = int(r.integers(1, 5))
        n = int(r.integers(2, 5))
        model = random_net("rnn", depth, n, int(r.integers(1, 4)), seed=160000 + k)
        worst = max(worst, orc.affine_deviation(model, T=4, trials=3, rng=r.split(1)))
    assert worst < 1e-10

    controls = []
    for act in ("tanh", "relu"):
        model = random_net("rnn", 2, 3, 2, activation=act, seed=1606, spread=0.5)
        controls.append(orc.affine_deviation(model, T=4, trials=10, rng=Rng(1607)))
    assert min(controls) > 1e-6
    _report(
        f"[PASS] criterion 6 linearity: worst deviation {worst:.3e} over 100 nets; "
        f"nonlinear controls deviate by {min(controls):.3e}+"
    )


# ---------------------------------------------------------------- criterion 7
def test_criterion_07_cp_rank():
    """First-step Jacobian rank never exceeds the CP rank (100 nets) and hits it
    exactly on full-rank witnesses."""
    rng = Rng(1007)
    for k in range(100):
        r = rng.split(k)
        n = int(r.integers(2, 6))
        d = int(r.integers(2, 6))
        rr = int(r.integers(1, 5))
        depth = int(r.integers(1, 4))
        model = random_net("cpbirnn", depth, n, d, rank=rr, seed=170000 + k, spread=1.0)
        got = orc.jacobian_rank_h1(model, r.split(1).normal(d))
        assert got <= rr, (k, got, rr)

    exact = 0
    for k in range(20):
        r = rng.split(10_000 + k)
        n = int(r.integers(2, 6))
        d = int(r.integers(2, 6))
        rr = int(r.integers(1, min(n, d) + 1))
        depth = int(r.integers(1, 4))
        model = con.build_cp_rank_witness(n, d, rr, depth, rng=Rng(175000 + k))
        exact += orc.jacobian_rank_h1(model, r.split(1).normal(d)) == rr
    assert exact == 20
    _report("[PASS] criterion 7 CP rank: <= R on 100 nets, == R on 20 full-rank witnesses")


# ---------------------------------------------------------------- criterion 8
def test_criterion_08_gradient_correctness():
    """BPTT matches central differences on 25 random configs for every family
    and placement."""
    worst = 0.0
    for fi, (family, rank) in enumerate([("rnn", None), ("2rnn", None), ("birnn", None),
                                         ("cprnn", 3), ("cpbirnn", 3)]):
        for pi, placement in enumerate(("recurrent", "depth_only")):
            for k in range(25):
                r = Rng(1008).split(10 * fi + pi, k)
                depth = int(r.integers(1, 4))
                hidden = int(r.integers(2, 5))
                d = int(r.integers(1, 4))
                T = int(r.integers(2, 5))
                rr = min(rank, hidden) if rank is not None else None
                activation = ("identity", "tanh")[k % 2]
                model = random_net(family, depth, hidden, d, rank=rr,
                                   activation=activation, placement=placement,
                                   seed=180000 + k)
                x = r.split(1).normal((2, T, d))
                use_head = k % 3 == 0
                head = ag.init_readout(hidden, 2, r.split(2)) if use_head else None
                y = r.split(3).normal((2, T, 2 if use_head else hidden))
                err = ag.gradcheck_max_err(model, x, y, readout=head)
                worst = max(worst, err)
                assert err < 1e-5, (family, placement, k, err)
    _report(f"[PASS] criterion 8 gradients: 250 configs, worst scaled error {worst:.3e}")


# --------------------------------------------------------------- criterion 10
def test_criterion_10_determinism():
    """Repeating a training invocation reproduces the record bit for bit."""
    task = TaskSpec.for_kind("copy", d=1, T=8, p=1, sizes=(256, 64, 64), seed=3)
    model = ModelConfig("rnn", depth=1, hidden=3, input_dim=1)
    train = tr.TrainSettings(lr=5e-3, batch_size=64, max_epochs=40, patience=40, seeds=(0, 1))
    config = tr.RunConfig(task=task, model=model, train=train)
    a = tr.run(config)
    b = tr.run(config)
    assert a.canonical() == b.canonical()
    assert all(
        ra.train_curve == rb.train_curve and ra.val_curve == rb.val_curve
        for ra, rb in zip(a.seed_results, b.seed_results)
    )
    _report(f"[PASS] criterion 10 determinism: records identical (hash {a.config_hash})")


# ---------------------------------------------------------------- criterion 2
def test_criterion_02_memory_bound_in_training():
    """Width 2, depth 1: the one-step lag trains to zero; the two-step lag can
    never beat half the target variance, at any epoch of a full run."""
    seeds = (0, 1, 2)

    task1 = TaskSpec.for_kind("copy", d=1, T=16, p=1, sizes=(2000, 500, 500), seed=20)
    model = ModelConfig("rnn", depth=1, hidden=2, input_dim=1)
    cfg1 = tr.RunConfig(task=task1, model=model,
                        train=tr.TrainSettings(lr=2e-3, max_epochs=2000, patience=150, seeds=seeds))
    rec1 = tr.run(cfg1)
    assert rec1.best_test < 1e-3, rec1.test_losses

    task2 = TaskSpec.for_kind("copy", d=1, T=16, p=2, sizes=(2000, 500, 500), seed=20)
    threshold = 0.5 * float(np.var(generate(task2).test.targets))
    cfg2 = tr.RunConfig(task=task2, model=model,
                        train=tr.TrainSettings(lr=2e-3, max_epochs=2000, patience=2000, seeds=seeds))
    rec2 = tr.run(cfg2)
    for r in rec2.seed_results:
        assert not r.diverged
        assert r.epochs_run == 2000
        assert min(r.val_curve) > threshold, (r.seed, min(r.val_curve), threshold)
        assert r.test_at_best > threshold
    _report(
        f"[PASS] criterion 2 memory bound: lag 1 best test {rec1.best_test:.2e}; "
        f"lag 2 floor {min(min(r.val_curve) for r in rec2.seed_results):.3f} "
        f"vs threshold {threshold:.3f} over 3 seeds x 2000 epochs"
    )


# ---------------------------------------------------------------- criterion 9
def _train_cell(task, model, seeds=(0, 1, 2), lr=2e-3, max_epochs=2000, patience=150):
    cfg = tr.RunConfig(
        task=task, model=model,
        train=tr.TrainSettings(lr=lr, max_epochs=max_epochs, patience=patience, seeds=seeds),
    )
    return tr.run(cfg)


def test_criterion_09a_depth_lowers_required_width():
    """Scanning width upward on the lag-8 scalar copy, the first width that
    trains below 1e-3 never increases with depth."""
    task = TaskSpec.for_kind("copy", d=1, T=16, p=8, sizes=(2000, 500, 500), seed=21)
    minimal: dict[int, int | None] = {}
    details = {}
    for depth in (1, 2, 4):
        minimal[depth] = None
        for width in range(2, 11):
            rec = _train_cell(task, ModelConfig("rnn", depth=depth, hidden=width, input_dim=1))
            details[(depth, width)] = rec.best_test
            if rec.best_test < 1e-3:
                minimal[depth] = width
                break
    assert minimal[2] is not None and minimal[4] is not None, details
    reached = {d: (m if m is not None else 11) for d, m in minimal.items()}
    assert reached[4] <= reached[2] <= reached[1], (minimal, details)
    _report(
        "[PASS] criterion 9a minimal widths at MSE<1e-3: "
        f"L=1 -> {minimal[1]}, L=2 -> {minimal[2]}, L=4 -> {minimal[4]}"
    )


def test_criterion_09b_shallow_wins_at_fixed_units():
    """With twelve units however arranged, the single layer is no worse than
    the deeper arrangements (within 1e-3 MSE)."""
    task = TaskSpec.for_kind("copy", d=1, T=16, p=8, sizes=(2000, 500, 500), seed=22)
    table = {}
    for depth, width in ((1, 12), (2, 6), (4, 3)):
        rec = _train_cell(task, ModelConfig("rnn", depth=depth, hidden=width, input_dim=1))
        table[depth] = rec.mean_test
    assert table[1] <= table[2] + 1e-3, table
    assert table[1] <= table[4] + 1e-3, table
    _report(
        "[PASS] criterion 9b fixed 12-unit budget, mean test MSE: "
        f"L=1 {table[1]:.2e}, L=2 {table[2]:.2e}, L=4 {table[4]:.2e}"
    )


def test_criterion_09c_parity_needs_recurrent_nonlinearity():
    """Recurrent tanh learns sign-parity; the same net with the activation
    moved between layers stays at chance."""
    task = TaskSpec.for_kind("parity", d=1, T=20, sizes=(2000, 500, 500), seed=23)

    rec_model = ModelConfig("rnn", depth=1, hidden=16, input_dim=1,
                            activation="tanh", placement="recurrent")
    rec = _train_cell(task, rec_model, patience=300)
    assert rec.best_test < 1e-2, rec.test_losses

    dep_model = ModelConfig("rnn", depth=1, hidden=16, input_dim=1,
                            activation="tanh", placement="depth_only")
    dep = _train_cell(task, dep_model, patience=300)
    for r in dep.seed_results:
        assert not r.diverged
        assert r.test_at_best > 0.5, (r.seed, r.test_at_best)
        assert min(r.val_curve) > 0.5
    _report(
        "[PASS] criterion 9c parity: recurrent tanh best test "
        f"{rec.best_test:.2e}; depth-only tanh stays at "
        f"{min(r.test_at_best for r in dep.seed_results):.3f}+"
    )
