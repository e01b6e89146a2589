import math

import numpy as np
import pytest

from rnndepth import constructions as con
from rnndepth.linalg import Rng
from rnndepth.models import forward
from rnndepth.params import ModelConfig, init_params, zero_params


class TestCopierSpec:
    def test_derived_shape_values(self):
        spec = con.CopierSpec(hidden=3, lag=4)
        assert spec.depth == 2
        assert spec.readout_index == 1  # 1 + 2*2 - 4

    def test_one_step_delay(self):
        spec = con.CopierSpec(hidden=2, lag=1)
        assert spec.depth == 1 and spec.readout_index == 1

    def test_invalid_width(self):
        with pytest.raises(ValueError):
            con.CopierSpec(hidden=1, lag=1)
        with pytest.raises(ValueError):
            con.CopierSpec(hidden=3, lag=0)

    def test_depth_steps_past_capacity(self):
        # one lag past the realizable bound forces one extra layer
        for n in (2, 3, 4, 5):
            for depth in (1, 2, 3):
                bound = con.memory_bound(n, depth)
                assert con.CopierSpec(n, bound).depth == depth
                assert con.CopierSpec(n, bound + 1).depth == depth + 1


class TestBuildCopier:
    def test_hand_case_n2_p2(self):
        params, readout = con.build_copier(2, 2)
        outs = forward(params, np.array([[1.0], [2.0], [3.0], [4.0]])).outputs[0] @ readout
        assert np.array_equal(outs, [0.0, 0.0, 1.0, 2.0])

    def test_n3_p4_matches_reference_exactly(self):
        params, readout = con.build_copier(3, 4)
        assert params.config.depth == 2
        x = Rng(31).normal((12, 1))
        outs = forward(params, x).outputs[0] @ readout
        want = con.lagged_copy_reference(x, 4)
        assert np.array_equal(outs, want)

    def test_one_step_delay_line(self):
        params, readout = con.build_copier(2, 1)
        x = Rng(32).normal((6, 1))
        outs = forward(params, x).outputs[0] @ readout
        assert np.array_equal(outs, con.lagged_copy_reference(x, 1))

    def test_exact_on_integer_and_gaussian_grid(self):
        rng = Rng(33)
        for n in (2, 3, 4, 5):
            for p in range(1, 3 * (n - 1) + 1):
                params, readout = con.build_copier(n, p)
                x_int = np.round(rng.split(n, p, 0).uniform(-9, 9, (16, 1)))
                x_gau = rng.split(n, p, 1).normal((16, 1))
                for x in (x_int, x_gau):
                    outs = forward(params, x).outputs[0] @ readout
                    assert np.array_equal(outs, con.lagged_copy_reference(x, p))

    def test_rejects_width_one(self):
        with pytest.raises(ValueError):
            con.build_copier(1, 1)


class TestMemoryBound:
    def test_values(self):
        assert con.memory_bound(2, 1) == 1
        assert con.memory_bound(4, 3) == 9

    def test_linear_in_depth(self):
        for n in (2, 3, 5):
            for depth in (1, 2, 4):
                assert con.memory_bound(n, depth + 1) - con.memory_bound(n, depth) == n - 1


class TestBuildFlattened:
    def _random_deep(self, n, depth, d, seed):
        cfg = ModelConfig("rnn", depth=depth, hidden=n, input_dim=d)
        p = init_params(cfg, Rng(seed))
        for i, lay in enumerate(p.layers):
            lay.bias[:] = Rng(seed + 1).split(i).normal(n) * 0.3
            lay.h0[:] = Rng(seed + 2).split(i).normal(n) * 0.3
        return p

    def test_single_layer_is_unchanged_map(self):
        deep = self._random_deep(3, 1, 2, 40)
        flat = con.build_flattened(deep)
        assert np.array_equal(flat.layers[0].w_in, deep.layers[0].w_in)
        assert np.array_equal(flat.layers[0].w_rec, deep.layers[0].w_rec)
        assert np.array_equal(flat.layers[0].bias, deep.layers[0].bias)

    def test_state_concatenation_equivalence(self):
        deep = self._random_deep(2, 3, 2, 41)
        flat = con.build_flattened(deep)
        x = Rng(43).normal((5, 2))
        td, tf = forward(deep, x), forward(flat, x)
        for t in range(1, 6):
            stacked = np.concatenate([td.h(t, l)[0] for l in (1, 2, 3)])
            scale = max(1.0, np.abs(stacked).max())
            assert np.abs(stacked - tf.h(t, 1)[0]).max() / scale < 1e-12

    def test_flattened_copier_still_copies(self):
        deep, readout = con.build_copier(2, 3)
        flat = con.build_flattened(deep)
        x = Rng(44).normal((10, 1))
        top_block = forward(flat, x).outputs[0][:, -2:]
        outs = top_block @ readout
        assert np.array_equal(outs, con.lagged_copy_reference(x, 3))

    def test_rejects_nonlinear(self):
        cfg = ModelConfig("rnn", depth=2, hidden=2, input_dim=1, activation="tanh")
        with pytest.raises(ValueError):
            con.build_flattened(init_params(cfg, Rng(45)))


class TestDiagPower:
    def test_square_case_hand_values(self):
        p = con.build_diag_power(2, 2, 2)
        got = forward(p, np.array([[2.0, 3.0], [1.0, 1.0]])).h(2, 2)[0]
        assert np.array_equal(got, [4.0, 9.0])

    def test_depth_one_with_unit_first_input(self):
        p = con.build_diag_power(3, 3, 1)
        x = np.vstack([np.ones(3), Rng(46).normal(3)])
        got = forward(p, x).h(2, 1)[0]
        assert np.array_equal(got, x[1])

    def test_narrow_hidden_keeps_leading_coords(self):
        p = con.build_diag_power(3, 5, 2)
        x = Rng(47).normal((2, 5))
        got = forward(p, x).h(2, 2)[0]
        want = x[0, :3] ** 2 * x[1, :3]
        assert np.abs(got - want).max() < 1e-14

    def test_wide_hidden_zero_pads(self):
        p = con.build_diag_power(5, 3, 2)
        x = Rng(48).normal((2, 3))
        got = forward(p, x).h(2, 2)[0]
        assert np.abs(got[:3] - x[0] ** 2 * x[1]).max() < 1e-14
        assert np.array_equal(got[3:], [0.0, 0.0])


class TestParityNet:
    def test_scalar_signs(self):
        p = con.build_parity(1)
        outs = forward(p, np.array([[-1.0], [1.0], [-1.0]])).outputs[0][:, 0]
        assert np.array_equal(outs, [-1.0, -1.0, 1.0])

    def test_all_ones(self):
        p = con.build_parity(3)
        outs = forward(p, np.ones((5, 3))).outputs[0]
        assert np.array_equal(outs, np.ones((5, 3)))

    def test_cumulative_product_20_steps(self):
        p = con.build_parity(5)
        x = np.where(Rng(49).normal((20, 5)) > 0, 1.0, -1.0)
        outs = forward(p, x).outputs[0]
        assert np.array_equal(outs, np.cumprod(x, axis=0))
        assert set(np.unique(outs)) <= {-1.0, 1.0}


class TestCPDiagPower:
    def test_matches_full_tensor_version(self):
        pc = con.build_cp_diag_power(3, 3, 2)
        pb = con.build_diag_power(3, 3, 2)
        x = Rng(50).normal((4, 3))
        assert np.abs(forward(pc, x).outputs - forward(pb, x).outputs).max() < 1e-14


class TestCPRankWitness:
    def test_chain_is_certified_full_rank(self):
        from rnndepth.linalg import cp_matrix

        for k, (n, d, r, depth) in enumerate([(4, 5, 4, 3), (3, 3, 2, 2), (5, 2, 2, 3)]):
            w = con.build_cp_rank_witness(n, d, r, depth, rng=Rng(500 + k))
            chain = None
            for lay in w.layers:
                step = cp_matrix(lay.cp.state, lay.cp.inp, lay.cp.out, lay.h0)
                chain = step if chain is None else step @ chain
            s = np.linalg.svd(chain, compute_uv=False)
            target = min(n, d, r)
            assert s[target - 1] / s[0] > 1e-4
            if target < min(chain.shape):
                assert s[target] / s[0] < 1e-12  # nothing beyond the CP rank


class TestParamCount:
    def test_frozen_values(self):
        assert con.param_count(4, 2) == 60
        assert con.param_count(7, 1) == 63
        assert con.param_count(5, 1) == 35
        assert con.param_count(3, 2) == 36

    def test_matches_instantiated_entries(self):
        for n in range(1, 9):
            for depth in range(1, 5):
                p = zero_params(ModelConfig("rnn", depth=depth, hidden=n, input_dim=1))
                assert con.param_count(n, depth) == p.n_weights()
                assert con.param_count(n, depth, include_h0=True) == p.n_weights(include_h0=True)


class TestCriticalWidth:
    def test_depth2_shallow1_value(self):
        want = (3.0 + math.sqrt(13.0)) / 2.0
        assert abs(con.critical_width(2, 1) - want) < 1e-12

    def test_decreases_in_depth(self):
        assert con.critical_width(3, 2) < con.critical_width(2, 1)
        assert con.critical_width(4, 1) < con.critical_width(2, 1)

    def test_global_max_below_four(self):
        best, arg = con.max_critical_width(40)
        assert arg == (2, 1)
        assert best < 4.0

    def test_rejects_bad_pair(self):
        with pytest.raises(ValueError):
            con.critical_width(2, 2)


class TestCrossoverTable:
    def test_frozen_rows(self):
        rows = {(r.hidden, r.depth, r.shallow_depth): r for r in con.crossover_table(12, 5)}
        r = rows[(4, 2, 1)]
        assert (r.shallow_width, r.params_shallow, r.params_deep, r.delta) == (7, 63, 60, 3)
        r = rows[(3, 2, 1)]
        assert (r.shallow_width, r.params_shallow, r.params_deep, r.delta) == (5, 35, 36, -1)

    def test_positive_for_wide_enough(self):
        rows = con.crossover_table(12, 5)
        assert con.crossover_always_positive(rows, min_hidden=4)
        assert any(r.delta < 0 for r in rows if r.hidden == 3)

    def test_csv_layout(self):
        rows = con.crossover_table(5, 3)
        csv = con.crossover_csv(rows)
        lines = csv.strip().split("\n")
        assert lines[0] == "n,L,Lt,p,n_tilde,params_deep,params_shallow,delta"
        assert len(lines) == len(rows) + 1
