"""Parameter and compute accounting against hand-derived sums."""

from fractions import Fraction

import numpy as np
import pytest

import rinslab as rl


def hand_params(dims: rl.ModelDims, n_blocks: int, lpb: int) -> int:
    d, m, v, s = dims.d_model, dims.mlp_dim, dims.vocab, dims.seq_len
    per_layer = 4 * (d * d + d) + (d * m + m) + (m * d + d) + 4 * d
    return v * d + s * d + (d * v + v) + 2 * d + n_blocks * lpb * per_layer


class TestParamCount:
    def test_hand_sum_tiny(self, tiny_dims):
        plan = rl.expand(rl.parse("AB"))
        want = hand_params(tiny_dims, 2, 2)
        assert rl.param_count(plan, tiny_dims) == want == 2643

    def test_tying_does_not_add_params(self, tiny_dims):
        ab = rl.param_count(rl.expand(rl.parse("AB")), tiny_dims)
        aab = rl.param_count(rl.expand(rl.parse("AAB")), tiny_dims)
        aaab = rl.param_count(rl.expand(rl.parse("A^3B")), tiny_dims)
        assert ab == aab == aaab

    def test_matches_allocated_arrays(self, tiny_dims):
        plan = rl.expand(rl.parse("AAB"))
        model = rl.RecursiveModel(tiny_dims, plan, rl.RecursionPolicy(r_max=2))
        params = model.init_params(0)
        assert sum(p.size for p in params.values()) == rl.param_count(plan, tiny_dims)

    def test_adapters_counted_separately(self, tiny_dims):
        plan = rl.expand(rl.parse("A^3B"))
        base = rl.param_count(plan, tiny_dims)
        assert rl.adapter_param_count(tiny_dims, 3) == 3 * 8 * 8
        model = rl.RecursiveModel(
            tiny_dims, plan, rl.RecursionPolicy(r_max=3, adapters=True)
        )
        params = model.init_params(0)
        assert sum(p.size for p in params.values()) == base + 3 * 64

    def test_degree_two_blocks(self):
        dims = rl.ModelDims(
            d_model=8, n_heads=2, mlp_dim=16, vocab=11, seq_len=5, total_layers=8
        )
        plan = rl.expand(rl.parse("ABB", degree=2))  # 4 unique blocks, lpb 2
        assert rl.param_count(plan, dims) == hand_params(dims, 4, 2)


class TestStepCost:
    def test_layer_pass_unit(self, tiny_dims):
        ab = rl.expand(rl.parse("AB"))
        assert rl.step_cost(ab, tiny_dims) == 2 * 2 * 5  # calls * lpb * seq
        aab = rl.expand(rl.parse("AAB"))
        assert rl.step_cost(aab, tiny_dims) == 3 * 2 * 5

    def test_exact_flops_scales_with_width(self):
        dims1 = rl.ModelDims(
            d_model=8, n_heads=2, mlp_dim=16, vocab=11, seq_len=5, total_layers=4
        )
        dims2 = rl.ModelDims(
            d_model=16, n_heads=2, mlp_dim=32, vocab=11, seq_len=5, total_layers=4
        )
        plan = rl.expand(rl.parse("AB"))
        c1 = rl.step_cost(plan, dims1, mode="exact-flops")
        c2 = rl.step_cost(plan, dims2, mode="exact-flops")
        per_tok_layer_1 = 12 * 8 * 8 + 4 * 8 * 5 / 2 + 4 * 8 * 16
        assert c1 == 4 * 5 * per_tok_layer_1
        assert c2 > 2 * c1  # superlinear in width at fixed depth

    def test_bad_mode_rejected(self, tiny_dims):
        with pytest.raises(ValueError):
            rl.step_cost(rl.expand(rl.parse("AB")), tiny_dims, mode="guess")


class TestMatchedSteps:
    def test_reference_integers(self, tiny_dims):
        ab = rl.expand(rl.parse("AB"))
        aab = rl.expand(rl.parse("AAB"))
        abab = rl.expand(rl.parse("ABAB"))
        d = tiny_dims
        assert rl.matched_steps(ab, aab, d, d, 200_000) == 133_333
        assert rl.matched_steps(ab, abab, d, d, 200_000) == 100_000
        assert rl.matched_steps(ab, ab, d, d, 200_000) == 200_000

    def test_flooring_is_exact_not_float(self, tiny_dims):
        # 200000 * 2/3 = 133333.33..; float rounding must not creep to 133334
        ab = rl.expand(rl.parse("AB"))
        aab = rl.expand(rl.parse("AAB"))
        got = rl.matched_steps(ab, aab, tiny_dims, tiny_dims, 200_000)
        want = int(Fraction(200_000) * Fraction(2, 3))
        assert got == want

    def test_four_thirds_cost_ratio(self, tiny_dims):
        dims = rl.ModelDims(
            d_model=8, n_heads=2, mlp_dim=16, vocab=11, seq_len=5, total_layers=12
        )
        abbc = rl.step_cost(rl.expand(rl.parse("ABBC")), dims)
        abc = rl.step_cost(rl.expand(rl.parse("ABC")), dims)
        assert Fraction(int(abbc), int(abc)) == Fraction(4, 3)

    def test_cross_dims_matching(self):
        small = rl.ModelDims(
            d_model=8, n_heads=2, mlp_dim=16, vocab=11, seq_len=5, total_layers=4
        )
        long = rl.ModelDims(
            d_model=8, n_heads=2, mlp_dim=16, vocab=11, seq_len=10, total_layers=4
        )
        ab = rl.expand(rl.parse("AB"))
        assert rl.matched_steps(ab, ab, small, long, 1000) == 500


class TestExpectedCost:
    def test_p_zero_equals_full_cost(self, tiny_dims):
        plan = rl.expand(rl.parse("A^3B"))
        assert rl.expected_stochastic_cost(plan, tiny_dims, 0.0) == rl.step_cost(
            plan, tiny_dims
        )

    def test_affine_in_p(self, tiny_dims):
        plan = rl.expand(rl.parse("A^3B"))
        c25 = rl.expected_stochastic_cost(plan, tiny_dims, 0.25)
        c50 = rl.expected_stochastic_cost(plan, tiny_dims, 0.5)
        c75 = rl.expected_stochastic_cost(plan, tiny_dims, 0.75)
        assert c50 == pytest.approx((c25 + c75) / 2)
        # two always-on calls (first A, final B) set the p -> 1 floor
        assert rl.expected_stochastic_cost(plan, tiny_dims, 0.999) == pytest.approx(
            (2 + 2 * 0.001) * 2 * 5
        )
        with pytest.raises(ValueError):
            rl.expected_stochastic_cost(plan, tiny_dims, 1.0)

    def test_hand_value(self, tiny_dims):
        # A^3B: 2 always + 2 eligible; p=0.5 -> 2 + 1 expected calls
        plan = rl.expand(rl.parse("A^3B"))
        assert rl.expected_stochastic_cost(plan, tiny_dims, 0.5) == 3 * 2 * 5


class TestSweep:
    def test_enumeration_size_and_feasibility(self):
        cands = rl.enumerate_sweep(8)
        assert len(cands) == 31
        feas = {(s.symbols, s.degree): f for s, f in cands}
        assert feas[("AB", 1)] if ("AB", 1) in feas else True
        assert feas[("AAB", 3)] is True  # 8 unique leaves at 8 layers
        assert feas[("ABBC", 2)] is False  # 9 unique leaves
        # identity family present
        assert ("A", 1) in feas and ("AAAA", 1) in feas

    def test_infeasible_at_tiny_depth(self):
        cands = rl.enumerate_sweep(2)
        feas = {(s.symbols, s.degree): f for s, f in cands}
        assert feas[("AAB", 1)] is True  # 2 blocks, 1 layer each
        assert feas[("ABBC", 1)] is False  # 3 blocks cannot fit in 2 layers

    def test_manifest_round_trip(self, tmp_path, tiny_dims):
        path = tmp_path / "sweep.jsonl"
        rl.write_sweep_manifest(path, tiny_dims, rl.parse("AB"), baseline_steps=1000)
        rows = rl.read_sweep_manifest(path)
        assert len(rows) == 31
        by_key = {(r["signature"], r["degree"]): r for r in rows}
        # single-block A applies the whole stack once: same cost as AB baseline
        a = by_key[("A", 1)]
        assert a["feasible"] and a["steps_matched"] == 1000
        aa = by_key[("AA", 1)]
        assert aa["steps_matched"] == 500
        infeasible = [r for r in rows if not r["feasible"]]
        assert infeasible and all(r["steps_matched"] is None for r in infeasible)
