"""Recursive transformer executor with hand-composed backward pass.

The executor runs an ExecutionPlan over a bank of leaf blocks that share
parameters whenever the plan repeats a leaf id. For A^r B shapes it exposes a
rounds knob: r calls of block A, then one call of block B, with three
optional mechanisms layered on top:

  * stochastic depth over rounds: rounds = 1 + Binomial(r_max-1, 1-p_skip),
    sampled once per step (the first and last calls always execute);
  * round adapters: bias-free d x d maps, identity at init, one per possible
    round count; when k rounds ran, adapter k is applied at the A-to-B
    boundary;
  * KV sharing: recursive calls of A reuse the keys and values the first call
    produced at the same layer, recomputing only queries, so the cache
    footprint does not grow with rounds.

Gradients for a shared block are the sum of the per-call gradients; the
backward pass realizes this by plain accumulation into one dict keyed by
parameter name.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict, field
from typing import Optional

import numpy as np

from .layers import (
    attention_bwd,
    attention_fwd,
    embed_bwd,
    embed_fwd,
    layernorm_bwd,
    layernorm_fwd,
    mlp_bwd,
    mlp_fwd,
    softmax_xent_bwd,
    softmax_xent_fwd,
)
from .ledger import InfeasiblePlanError, ModelDims
from .signatures import ExecutionPlan, leaf_label, rins_rounds, to_tagged

__all__ = [
    "RecursionPolicy",
    "KVCacheSet",
    "RecursiveModel",
    "sample_rounds",
    "kv_cache_bytes",
    "adapter_fraction",
    "segments_to_mask",
]


@dataclass(frozen=True)
class RecursionPolicy:
    """Recursion behavior knobs.

    r_max must equal the plan's recursion count for A^r B shapes and 1 for
    every other plan. inference_rounds, when set, fixes the round count used
    by forward() when no explicit rounds argument is given.
    """

    r_max: int = 1
    p_skip: float = 0.0
    kv_share: bool = False
    adapters: bool = False
    inference_rounds: Optional[int] = None

    def __post_init__(self):
        if self.r_max < 1:
            raise ValueError(f"r_max must be >= 1, got {self.r_max}")
        if not (0.0 <= self.p_skip < 1.0):
            raise ValueError(f"p_skip must be in [0, 1), got {self.p_skip}")
        if self.p_skip > 0.0 and self.r_max < 2:
            raise ValueError(
                f"p_skip {self.p_skip} needs r_max >= 2; there is nothing to skip"
            )
        if self.inference_rounds is not None and not (
            1 <= self.inference_rounds <= self.r_max
        ):
            raise ValueError(
                f"inference_rounds must be in [1, {self.r_max}], "
                f"got {self.inference_rounds}"
            )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RecursionPolicy":
        ir = d.get("inference_rounds")
        return cls(
            r_max=int(d["r_max"]),
            p_skip=float(d["p_skip"]),
            kv_share=bool(d["kv_share"]),
            adapters=bool(d["adapters"]),
            inference_rounds=None if ir is None else int(ir),
        )


def sample_rounds(policy: RecursionPolicy, rng: np.random.Generator, size=None):
    """Draw the number of rounds to execute this step.

    1 + Binomial(r_max - 1, 1 - p_skip): each of the r_max - 1 optional calls
    runs independently with probability 1 - p_skip; the mandatory first call
    makes the minimum 1. p_skip = 0 always yields r_max; r_max = 1 always
    yields 1 whatever p_skip says.
    """
    draw = rng.binomial(policy.r_max - 1, 1.0 - policy.p_skip, size=size)
    return 1 + draw


def kv_cache_bytes(
    dims: ModelDims,
    policy: RecursionPolicy,
    rounds: Optional[int] = None,
    itemsize: int = 4,
) -> int:
    """Bytes of K/V state block A holds during generation-style decoding.

    With kv_share every recursive call reads the first call's tensors, so the
    figure is layers_of_A * 2 * seq_len * d_model * itemsize regardless of
    rounds. Without sharing each round keeps its own pair and the figure is
    exactly linear in rounds. Block A owns total_layers // 2 layers in the
    two-block shapes this accounting applies to.
    """
    layers_a = dims.total_layers // 2
    per_round = layers_a * 2 * dims.seq_len * dims.d_model * itemsize
    if policy.kv_share:
        return per_round
    if rounds is None:
        rounds = policy.inference_rounds or policy.r_max
    if rounds < 1:
        raise ValueError(f"rounds must be >= 1, got {rounds}")
    return rounds * per_round


@dataclass
class KVCacheSet:
    """Per-layer (k, v) tensors captured from the first call of a leaf block.

    Keys are (leaf_id, layer_index); tensors are (B, T, d_model). Byte
    accounting is reported per sequence so it lines up with kv_cache_bytes.
    """

    entries: dict = field(default_factory=dict)

    def put(self, leaf: int, layer: int, k: np.ndarray, v: np.ndarray):
        self.entries[(leaf, layer)] = (k, v)

    def get(self, leaf: int, layer: int):
        return self.entries[(leaf, layer)]

    def has(self, leaf: int, layer: int) -> bool:
        return (leaf, layer) in self.entries

    def bytes_per_sequence(self) -> int:
        total = 0
        for k, v in self.entries.values():
            batch = k.shape[0]
            total += k.nbytes // batch + v.nbytes // batch
        return total


def segments_to_mask(segments: np.ndarray) -> np.ndarray:
    """(B, T) segment ids -> (B, 1, T, T) boolean same-segment mask."""
    seg = np.asarray(segments)
    return (seg[:, None, :, None] == seg[:, None, None, :])


def adapter_fraction(params: dict) -> dict:
    """Adapter share of the parameter count, reported two ways.

    The embedding-free denominator drops token/position tables, which at
    small vocab sizes would otherwise flatter the fraction.
    """
    adapter = sum(v.size for k, v in params.items() if k.startswith("adapter."))
    total = sum(v.size for v in params.values())
    non_embed = total - sum(
        v.size for k, v in params.items() if k.startswith("embed.")
    )
    return {
        "adapter_params": adapter,
        "total_params": total,
        "with_embeddings": adapter / total if total else 0.0,
        "without_embeddings": adapter / non_embed if non_embed else 0.0,
    }


class RecursiveModel:
    """Pre-norm decoder executing an ExecutionPlan with shared leaf blocks."""

    def __init__(
        self,
        dims: ModelDims,
        plan: ExecutionPlan,
        policy: RecursionPolicy = RecursionPolicy(),
        dtype=np.float32,
    ):
        self.dims = dims
        self.plan = plan
        self.policy = policy
        self.dtype = np.dtype(dtype)
        self.layers_per_block = dims.total_layers // plan.unique_leaf_count
        if self.layers_per_block < 1:
            raise InfeasiblePlanError(
                f"signature {to_tagged(plan.source)} is infeasible at "
                f"{dims.total_layers} layers (layers_per_block=0)"
            )
        r = rins_rounds(plan.source)
        self._rounds_capable = r is not None
        if r is not None:
            if policy.r_max != r:
                raise ValueError(
                    f"policy r_max {policy.r_max} does not match signature "
                    f"{to_tagged(plan.source)} (r={r})"
                )
        else:
            if policy.r_max != 1:
                raise ValueError(
                    f"r_max {policy.r_max} requires an A^r B signature, got "
                    f"{to_tagged(plan.source)}"
                )
            if policy.p_skip != 0.0 or policy.kv_share or policy.adapters:
                raise ValueError(
                    "stochastic skipping, KV sharing, and adapters require an "
                    f"A^r B signature, got {to_tagged(plan.source)}"
                )
        self._labels = [leaf_label(i) for i in range(plan.unique_leaf_count)]

    # ---------------------------------------------------------------- params

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        d, mlp, V, S = (
            self.dims.d_model,
            self.dims.mlp_dim,
            self.dims.vocab,
            self.dims.seq_len,
        )
        shapes: dict[str, tuple[int, ...]] = {
            "embed.token": (V, d),
            "embed.pos": (S, d),
            "final_norm.gamma": (d,),
            "final_norm.beta": (d,),
            "head.w": (d, V),
            "head.b": (V,),
        }
        for label in self._labels:
            for l in range(self.layers_per_block):
                pre = f"block.{label}.layer.{l}."
                shapes[pre + "ln1.gamma"] = (d,)
                shapes[pre + "ln1.beta"] = (d,)
                shapes[pre + "attn.q"] = (d, d)
                shapes[pre + "attn.q_bias"] = (d,)
                shapes[pre + "attn.k"] = (d, d)
                shapes[pre + "attn.k_bias"] = (d,)
                shapes[pre + "attn.v"] = (d, d)
                shapes[pre + "attn.v_bias"] = (d,)
                shapes[pre + "attn.out"] = (d, d)
                shapes[pre + "attn.out_bias"] = (d,)
                shapes[pre + "ln2.gamma"] = (d,)
                shapes[pre + "ln2.beta"] = (d,)
                shapes[pre + "mlp.w_in"] = (d, mlp)
                shapes[pre + "mlp.b_in"] = (mlp,)
                shapes[pre + "mlp.w_out"] = (mlp, d)
                shapes[pre + "mlp.b_out"] = (d,)
        if self.policy.adapters:
            for k in range(1, self.policy.r_max + 1):
                shapes[f"adapter.{k}"] = (d, d)
        return shapes

    def init_params(self, seed=0) -> dict[str, np.ndarray]:
        """Deterministic init: N(0, 0.02) weights with scaled-down residual
        output projections, zero biases, unit norms, identity adapters."""
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        std = 0.02
        out_std = std / math.sqrt(2.0 * self.dims.total_layers)
        params: dict[str, np.ndarray] = {}
        for name, shape in self.param_shapes().items():
            if name.startswith("adapter."):
                arr = np.eye(shape[0])
            elif name.endswith((".gamma",)):
                arr = np.ones(shape)
            elif name.endswith(("_bias", ".beta", ".b_in", ".b_out")) or name == "head.b":
                arr = np.zeros(shape)
            elif name.endswith(("attn.out", "mlp.w_out")):
                arr = rng.normal(0.0, out_std, size=shape)
            else:
                arr = rng.normal(0.0, std, size=shape)
            params[name] = arr.astype(self.dtype)
        return params

    # ------------------------------------------------------------- execution

    def resolve_rounds(self, rounds: Optional[int]) -> Optional[int]:
        if not self._rounds_capable:
            if rounds is not None:
                raise ValueError(
                    f"signature {to_tagged(self.plan.source)} has no rounds knob"
                )
            return None
        if rounds is None:
            rounds = self.policy.inference_rounds or self.policy.r_max
        if not (1 <= rounds <= self.policy.r_max):
            raise ValueError(
                f"rounds must be in [1, {self.policy.r_max}], got {rounds}"
            )
        return rounds

    def leaf_exec(self, rounds: Optional[int] = None) -> list[int]:
        """Leaf call sequence actually executed for this round count."""
        rounds = self.resolve_rounds(rounds)
        if rounds is None:
            return list(self.plan.leaf_sequence)
        return [0] * rounds + [1]

    def _adapter_after(self, exec_seq: list[int], rounds: Optional[int]) -> dict[int, str]:
        # Map call index -> adapter name applied after that call finishes.
        if not (self.policy.adapters and rounds is not None):
            return {}
        return {rounds - 1: f"adapter.{rounds}"}

    def forward(self, params, tokens, rounds=None, segments=None):
        logits, _, _ = self._run(params, tokens, rounds, segments, need_tape=False)
        return logits

    def forward_with_info(self, params, tokens, rounds=None, segments=None):
        logits, _, info = self._run(params, tokens, rounds, segments, need_tape=False)
        return logits, info

    def loss(self, params, tokens, targets, rounds=None, segments=None) -> float:
        tokens, targets, squeeze = _as_batched(tokens, targets)
        logits, _, _ = self._run(params, tokens, rounds, segments, need_tape=False)
        loss, _ = softmax_xent_fwd(logits, targets)
        return loss

    def loss_and_grads(self, params, tokens, targets, rounds=None, segments=None):
        """Mean cross entropy (nats) and gradients for every parameter.

        Parameters a given execution never touches (other rounds' adapters,
        position rows beyond T) come back with zero gradients so the
        optimizer can treat the dict as total.
        """
        tokens, targets, _ = _as_batched(tokens, targets)
        logits, tape, info = self._run(params, tokens, rounds, segments, need_tape=True)
        loss, xc = softmax_xent_fwd(logits, targets)
        grads = self._backward(params, tape, softmax_xent_bwd(xc))
        for name, p in params.items():
            if name not in grads:
                grads[name] = np.zeros_like(p)
        return loss, grads, info

    def kv_cache_bytes(self, rounds=None, itemsize: Optional[int] = None) -> int:
        if itemsize is None:
            itemsize = self.dtype.itemsize
        return kv_cache_bytes(self.dims, self.policy, rounds, itemsize)

    # -------------------------------------------------------------- internals

    def _run(self, params, tokens, rounds, segments, need_tape):
        tokens = np.asarray(tokens)
        squeeze = tokens.ndim == 1
        if squeeze:
            tokens = tokens[None, :]
        B, T = tokens.shape
        if T > self.dims.seq_len:
            raise ValueError(f"sequence length {T} exceeds seq_len {self.dims.seq_len}")
        rounds = self.resolve_rounds(rounds)
        exec_seq = self.leaf_exec(rounds)
        adapters_at = self._adapter_after(exec_seq, rounds)
        mask = segments_to_mask(segments) if segments is not None else None

        h, emb_cache = embed_fwd(tokens, params["embed.token"], params["embed.pos"])
        share = self.policy.kv_share
        cache_set = KVCacheSet()
        recursive_leaf = exec_seq[0] if rounds is not None else None
        tape = {"emb": emb_cache, "calls": [], "T": T} if need_tape else None
        seen: set[int] = set()

        for ci, leaf in enumerate(exec_seq):
            label = self._labels[leaf]
            consume = share and leaf in seen
            produce = share and not consume
            seen.add(leaf)
            layer_records = []
            for l in range(self.layers_per_block):
                prefix = f"block.{label}.layer.{l}."
                xn1, c_ln1 = layernorm_fwd(
                    h, params[prefix + "ln1.gamma"], params[prefix + "ln1.beta"]
                )
                kv_in = cache_set.get(leaf, l) if consume else None
                attn_out, kv, c_attn = attention_fwd(
                    xn1, params, prefix + "attn.", self.dims.n_heads, kv_in, mask
                )
                if produce and (leaf == recursive_leaf or recursive_leaf is None):
                    cache_set.put(leaf, l, *kv)
                h = h + attn_out
                xn2, c_ln2 = layernorm_fwd(
                    h, params[prefix + "ln2.gamma"], params[prefix + "ln2.beta"]
                )
                mlp_out, c_mlp = mlp_fwd(xn2, params, prefix + "mlp.")
                h = h + mlp_out
                if need_tape:
                    layer_records.append((prefix, c_ln1, c_attn, c_ln2, c_mlp))
            adapter_name = adapters_at.get(ci)
            if adapter_name is not None:
                a_in = h
                h = h @ params[adapter_name]
                if need_tape:
                    tape["calls"].append(
                        {"leaf": leaf, "produced": produce, "layers": layer_records,
                         "adapter": (adapter_name, a_in)}
                    )
            elif need_tape:
                tape["calls"].append(
                    {"leaf": leaf, "produced": produce, "layers": layer_records,
                     "adapter": None}
                )

        xnf, c_final = layernorm_fwd(
            h, params["final_norm.gamma"], params["final_norm.beta"]
        )
        logits = xnf @ params["head.w"] + params["head.b"]
        if need_tape:
            tape["final"] = (c_final, xnf)

        # Cache accounting covers the recursive leaf only: without sharing,
        # every one of its calls would hold a fresh per-layer (k, v) pair.
        if share:
            realized = cache_set.bytes_per_sequence()
        elif rounds is not None:
            realized = (
                rounds * self.layers_per_block * 2 * T * self.dims.d_model
                * self.dtype.itemsize
            )
        else:
            realized = (
                len(exec_seq) * self.layers_per_block * 2 * T * self.dims.d_model
                * self.dtype.itemsize
            )
        info = {
            "exec": exec_seq,
            "rounds": rounds,
            "adapter": adapters_at.get((rounds - 1) if rounds is not None else -1),
            "kv_cache_bytes": realized,
        }
        if squeeze:
            logits = logits[0]
        return logits, tape, info

    def _backward(self, params, tape, dlogits):
        grads: dict[str, np.ndarray] = {}
        c_final, xnf = tape["final"]

        d2 = dlogits.reshape(-1, dlogits.shape[-1])
        x2 = xnf.reshape(-1, xnf.shape[-1])
        _acc(grads, "head.w", x2.T @ d2)
        _acc(grads, "head.b", d2.sum(axis=0))
        dxnf = dlogits @ params["head.w"].T
        dh, dgam, dbet = layernorm_bwd(dxnf, c_final)
        _acc(grads, "final_norm.gamma", dgam)
        _acc(grads, "final_norm.beta", dbet)

        pending_kv: dict[tuple[int, int], list] = {}
        for call in reversed(tape["calls"]):
            if call["adapter"] is not None:
                a_name, a_in = call["adapter"]
                a2 = a_in.reshape(-1, a_in.shape[-1])
                dh2 = dh.reshape(-1, dh.shape[-1])
                _acc(grads, a_name, a2.T @ dh2)
                dh = dh @ params[a_name].T
            leaf = call["leaf"]
            for l in range(len(call["layers"]) - 1, -1, -1):
                prefix, c_ln1, c_attn, c_ln2, c_mlp = call["layers"][l]
                dxn2, g = mlp_bwd(dh, c_mlp, params, prefix + "mlp.")
                _acc_many(grads, g)
                dres, dgam, dbet = layernorm_bwd(dxn2, c_ln2)
                _acc(grads, prefix + "ln2.gamma", dgam)
                _acc(grads, prefix + "ln2.beta", dbet)
                dh = dh + dres

                consumed = c_attn[6]
                if consumed:
                    dxn1, g, dk, dv = attention_bwd(dh, c_attn, params, prefix + "attn.")
                    slot = pending_kv.setdefault((leaf, l), [None, None])
                    slot[0] = dk if slot[0] is None else slot[0] + dk
                    slot[1] = dv if slot[1] is None else slot[1] + dv
                else:
                    dk_x, dv_x = (None, None)
                    if call["produced"] and (leaf, l) in pending_kv:
                        dk_x, dv_x = pending_kv.pop((leaf, l))
                    dxn1, g, _, _ = attention_bwd(
                        dh, c_attn, params, prefix + "attn.", dk_x, dv_x
                    )
                _acc_many(grads, g)
                dres, dgam, dbet = layernorm_bwd(dxn1, c_ln1)
                _acc(grads, prefix + "ln1.gamma", dgam)
                _acc(grads, prefix + "ln1.beta", dbet)
                dh = dh + dres

        dtok, dpos_rows, T = embed_bwd(dh, tape["emb"])
        _acc(grads, "embed.token", dtok)
        dpos = np.zeros_like(params["embed.pos"])
        dpos[:T] = dpos_rows
        _acc(grads, "embed.pos", dpos)
        return grads


def _as_batched(tokens, targets):
    tokens = np.asarray(tokens)
    targets = np.asarray(targets)
    squeeze = tokens.ndim == 1
    if squeeze:
        tokens = tokens[None, :]
        targets = targets[None, :]
    return tokens, targets, squeeze


def _acc(grads: dict, name: str, g: np.ndarray):
    if name in grads:
        grads[name] += g
    else:
        grads[name] = g


def _acc_many(grads: dict, new: dict):
    for name, g in new.items():
        _acc(grads, name, g)
