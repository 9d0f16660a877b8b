"""Zero-shot multiple-choice evaluation against byte-level models.

Options are ranked by mean cross entropy per option token; conditioning
text contributes context but never loss. That makes scores comparable
across options of different lengths and invariant to option order.
"""

import string
import tempfile
from pathlib import Path

import numpy as np

import rinslab as rl

tok = rl.ByteTokenizer()

print("1. Templates. Each task style renders (conditioning, option) parts")
print("   that concatenate to a byte-exact string:")
item = rl.MCQItem("The sky is", "", ("blue", "green"), 0)
cond, opt = rl.render_parts("plain", item, 0)
print(f"   plain: {cond!r} + {opt!r}")
bq = rl.MCQItem(
    "Stars fuse hydrogen.", "Do stars shine because of fusion?",
    ("no", "yes"), 1, style="boolq",
)
print(f"   boolq: {rl.render_template('boolq', bq, 1)!r}")
pq = rl.MCQItem(
    "remove a stripped screw", "",
    ("grip it with a rubber band", "heat it with a torch"), 0, style="piqa",
)
print(f"   piqa:  {rl.render_template('piqa', pq, 0)!r}")

print()
print("2. Scoring. Zeroing the output head makes the model exactly uniform")
print("   over the 257 byte vocabulary, so every option scores ln(257)")
print("   nats per token:")
dims = rl.ModelDims(d_model=16, n_heads=2, mlp_dim=32, vocab=257,
                    seq_len=64, total_layers=2)
model = rl.RecursiveModel(dims, rl.expand(rl.parse("AB")), rl.RecursionPolicy())
params = model.init_params(0)
flat = dict(params)
flat["head.w"] = np.zeros_like(flat["head.w"])
flat["head.b"] = np.zeros_like(flat["head.b"])
s = rl.score_option(model, flat, tok, item, 0)
print(f"   score = {s:.6f}, ln(257) = {np.log(257):.6f}")

print()
print("3. Chance level. Random 4-option items against an untrained model")
print("   should sit near 25%:")
rng = np.random.default_rng(11)
letters = string.ascii_lowercase


def word(n):
    return "".join(rng.choice(list(letters), size=n))


items = [
    rl.MCQItem(word(12), "", tuple(word(6) for _ in range(4)),
               int(rng.integers(0, 4)))
    for _ in range(200)
]
res = rl.eval_mcq(model, params, tok, items)
ci = 3 * np.sqrt(0.25 * 0.75 / len(items))
print(f"   accuracy {res.accuracy:.3f} on {res.n_items} items "
      f"(3-sigma band: 0.25 +/- {ci:.3f})")

print()
print("4. A model that has memorized its corpus aces the matching task.")
print("   Train on 'word word' documents padded to exactly one window, so")
print("   the rendered item reproduces the training layout:")
cdims = rl.ModelDims(d_model=32, n_heads=2, mlp_dim=64, vocab=257,
                     seq_len=48, total_layers=2)
cmodel = rl.RecursiveModel(cdims, rl.expand(rl.parse("AB")), rl.RecursionPolicy())
cparams = cmodel.init_params(0)
words = ["bramble", "cathode", "drizzle", "harpoon", "lantern", "mineral"]
docs = [tok.encode(f"{w} {w}".ljust(48)) for w in words] * 6
batches = list(rl.pack_sequences(docs, 48, 6, eos_id=256))
cfg = rl.TrainConfig(peak_lr=1e-2, warmup_steps=10, total_steps=300, seed=0)
trace, _ = rl.train(cmodel, cparams, batches, cfg)
copy_items = [
    rl.MCQItem(w, "", tuple(words[(i + k) % len(words)] for k in range(4)), 0)
    for i, w in enumerate(words)
]
cres = rl.eval_mcq(cmodel, cparams, tok, copy_items)
print(f"   final train loss {trace.records[-1].train_loss:.4f}, "
      f"copy accuracy {cres.accuracy:.0%}")

print()
print("5. Shuffling the options permutes the scores but cannot change the")
print("   winner:")
base = rl.MCQItem("some context here", "", ("alpha", "beta", "gamma"), 0)
perm = rl.MCQItem("some context here", "", ("gamma", "alpha", "beta"), 1)
sb = [rl.score_option(cmodel, cparams, tok, base, i) for i in range(3)]
sp = [rl.score_option(cmodel, cparams, tok, perm, i) for i in range(3)]
print(f"   original order: {[f'{v:.4f}' for v in sb]}")
print(f"   permuted order: {[f'{v:.4f}' for v in sp]}")
print(f"   scores identical under the permutation: "
      f"{sb == [sp[1], sp[2], sp[0]]}")

print()
print("6. Tasks ship as JSONL; items round-trip exactly:")
with tempfile.TemporaryDirectory() as td:
    path = Path(td) / "task.jsonl"
    rl.write_task_jsonl(path, copy_items)
    back = rl.read_task_jsonl(path)
    print(f"   {len(back)} items, equal after reload: {back == copy_items}")
