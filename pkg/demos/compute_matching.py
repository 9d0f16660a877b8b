"""Compute accounting: why recursive variants train for fewer steps.

Weight sharing keeps parameter count fixed while multiplying forward cost,
so a fair comparison gives every variant the same total compute, not the
same step count. matched_steps does that division exactly.
"""

from fractions import Fraction

import rinslab as rl

dims = rl.ModelDims(
    d_model=64, n_heads=4, mlp_dim=256, vocab=65, seq_len=64, total_layers=4
)

print("Parameter count is fixed by the number of DISTINCT blocks, while")
print("per-step cost grows with the number of executed calls:")
for s in ("AB", "AAB", "AAAB", "ABAB"):
    plan = rl.expand(rl.parse(s))
    print(f"  {s:>6}: params={rl.param_count(plan, dims):>9,}  "
          f"layer-pass cost/step={rl.step_cost(plan, dims):>8,.0f}")

print()
base = rl.expand(rl.parse("AB"))
budget = 200_000
print(f"Matching a {budget:,}-step AB budget:")
for s in ("AB", "AAB", "ABAB", "AAAB"):
    plan = rl.expand(rl.parse(s))
    steps = rl.matched_steps(base, plan, dims, dims, budget)
    print(f"  {s:>6}: {steps:>8,} steps")
print("  (integer arithmetic: AAB gets exactly 133,333, never 133,333.33)")

print()
dims6 = rl.ModelDims(
    d_model=64, n_heads=4, mlp_dim=256, vocab=65, seq_len=64, total_layers=6
)
r = Fraction(
    int(rl.step_cost(rl.expand(rl.parse("ABBC")), dims6)),
    int(rl.step_cost(rl.expand(rl.parse("ABC")), dims6)),
)
print(f"Repeating one block of three (ABC vs ABBC) costs exactly {r} as much")
print("per step, i.e. 33% more.")

print()
print("Two cost models agree on ratios within a family at fixed dims but")
print("diverge across dims; exact-flops weights attention by seq_len:")
for mode in ("layer-pass", "exact-flops"):
    c_ab = rl.step_cost(rl.expand(rl.parse("AB")), dims, mode=mode)
    c_aab = rl.step_cost(rl.expand(rl.parse("AAB")), dims, mode=mode)
    print(f"  {mode:>11}: AB={c_ab:,.0f}  AAB={c_aab:,.0f}  ratio={c_aab / c_ab:.3f}")

print()
print("Stochastic depth cuts EXPECTED cost: with skip probability p each")
print("interior call of A^3B runs with probability 1-p:")
plan3 = rl.expand(rl.parse("AAAB"))
full = rl.step_cost(plan3, dims)
for p in (0.0, 0.25, 0.5, 0.8):
    e = rl.expected_stochastic_cost(plan3, dims, p)
    print(f"  p_skip={p:<5}: expected {e:>8,.0f} ({e / full:.0%} of full depth)")

print()
print("KV-cache memory for generation. Sharing reuses the first call's keys")
print("and values, so cache size stops growing with depth:")
plan = rl.expand(rl.parse("AAAAB"))
shared = rl.RecursiveModel(dims, plan, rl.RecursionPolicy(r_max=4, kv_share=True))
plain = rl.RecursiveModel(dims, plan, rl.RecursionPolicy(r_max=4))
for k in (1, 2, 3, 4):
    print(f"  rounds={k}: shared={shared.kv_cache_bytes(rounds=k):>9,} B   "
          f"unshared={plain.kv_cache_bytes(rounds=k):>9,} B")
