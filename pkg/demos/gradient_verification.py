"""Gradient checks for the weight-shared executor.

Everything here runs in float64 on a deliberately tiny model so central
finite differences are a trustworthy oracle. Three structural identities
follow: tied gradients are per-call sums, rounds=1 collapses to a plain
two-block model bitwise, and identity adapters are an exact no-op at init.
"""

import dataclasses

import numpy as np

import rinslab as rl

dims = rl.ModelDims(
    d_model=8, n_heads=2, mlp_dim=16, vocab=11, seq_len=5, total_layers=4
)
rng = np.random.default_rng(0)
tokens = rng.integers(0, dims.vocab, size=dims.seq_len)
targets = rng.integers(0, dims.vocab, size=dims.seq_len)

print("1. Spot-check analytic gradients against central differences")
print("   (300 random coordinates, A^3B with adapters and KV sharing on):")
policy = rl.RecursionPolicy(r_max=3, adapters=True, kv_share=True)
model = rl.RecursiveModel(dims, rl.expand(rl.parse("AAAB")), policy, dtype=np.float64)
params = model.init_params(1)
for k in params:
    params[k] = params[k] + 0.01 * rng.standard_normal(params[k].shape)

_, grads, _ = model.loss_and_grads(params, tokens, targets, rounds=2)
names = sorted(params)
h = 1e-6
worst = 0.0
for _ in range(300):
    name = names[rng.integers(0, len(names))]
    w = params[name]
    idx = tuple(rng.integers(0, s) for s in w.shape)
    orig = w[idx]
    w[idx] = orig + h
    lp = model.loss(params, tokens, targets, rounds=2)
    w[idx] = orig - h
    lm = model.loss(params, tokens, targets, rounds=2)
    w[idx] = orig
    fd = (lp - lm) / (2 * h)
    diff = abs(grads[name][idx] - fd)
    if diff >= 1e-9:
        worst = max(worst, diff / max(abs(grads[name][idx]), abs(fd)))
print(f"   worst relative error: {worst:.3g} (exhaustive version: acceptance test 4)")

print()
print("2. Tied gradient identity. Train AAB with shared block A, then build")
print("   an untied clone ABC where A and B are copies of the shared block.")
print("   The shared gradient must equal the sum of the clone's per-call")
print("   gradients, to float64 accumulation error:")
tied_model = rl.RecursiveModel(
    dims, rl.expand(rl.parse("AAB")), rl.RecursionPolicy(r_max=2), dtype=np.float64
)
tied = tied_model.init_params(3)
clone_model = rl.RecursiveModel(
    dataclasses.replace(dims, total_layers=6),
    rl.expand(rl.parse("ABC")),
    rl.RecursionPolicy(),
    dtype=np.float64,
)
clone = {}
for name, arr in tied.items():
    if name.startswith("block.A."):
        clone[name] = arr.copy()
        clone[name.replace("block.A.", "block.B.")] = arr.copy()
    elif name.startswith("block.B."):
        clone[name.replace("block.B.", "block.C.")] = arr.copy()
    else:
        clone[name] = arr.copy()
_, g_tied, _ = tied_model.loss_and_grads(tied, tokens, targets)
_, g_clone, _ = clone_model.loss_and_grads(clone, tokens, targets)
worst = max(
    float(np.max(np.abs(
        g_tied[n] - g_clone[n] - g_clone[n.replace("block.A.", "block.B.")]
    )))
    for n in g_tied if n.startswith("block.A.")
)
print(f"   max |tied - sum of per-call|: {worst:.3g}")

print()
print("3. rounds=1 equals a plain AB model bitwise (same parameter dict):")
sdims = rl.ModelDims(
    d_model=32, n_heads=2, mlp_dim=64, vocab=65, seq_len=32, total_layers=4
)
rec = rl.RecursiveModel(sdims, rl.expand(rl.parse("AAAB")), rl.RecursionPolicy(r_max=3))
plain = rl.RecursiveModel(sdims, rl.expand(rl.parse("AB")), rl.RecursionPolicy())
p = rec.init_params(0)
toks = rng.integers(0, sdims.vocab, size=sdims.seq_len)
same = np.array_equal(rec.forward(p, toks, rounds=1), plain.forward(p, toks))
print(f"   logits identical: {same}")

print()
print("4. Identity adapters change nothing at initialization:")
with_a = rl.RecursiveModel(
    sdims, rl.expand(rl.parse("AAAB")), rl.RecursionPolicy(r_max=3, adapters=True)
)
pa = with_a.init_params(0)
pb = {k: v for k, v in pa.items() if not k.startswith("adapter.")}
without = rl.RecursiveModel(sdims, rl.expand(rl.parse("AAAB")), rl.RecursionPolicy(r_max=3))
ok = all(
    np.array_equal(
        with_a.forward(pa, toks, rounds=r), without.forward(pb, toks, rounds=r)
    )
    for r in (1, 2, 3)
)
print(f"   bitwise no-op across rounds 1-3: {ok}")
frac = rl.adapter_fraction(pa)
print(f"   adapter share: {frac['with_embeddings']:.4%} of all parameters, "
      f"{frac['without_embeddings']:.4%} excluding embeddings")
