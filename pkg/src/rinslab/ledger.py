"""Compute and parameter accounting for execution plans.

Costs here are forward-pass costs per sequence (batch size cancels out of
every matched-budget ratio, so it is deliberately absent). Two accounting
modes exist: "layer-pass" counts executed layer passes times sequence length,
"exact-flops" uses a per-token-per-layer FLOP formula. The modes can rank
variants differently when sequence length or width varies, which is why both
are exposed; budget matching defaults to layer-pass.

Parameter count depends only on distinct leaf blocks, never on how often they
are executed: recursion buys compute, not parameters.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from fractions import Fraction
from typing import Iterable, Literal, Optional

from .signatures import (
    ExecutionPlan,
    Signature,
    expand,
    layers_per_block,
    parse,
    to_tagged,
)

__all__ = [
    "InfeasiblePlanError",
    "ModelDims",
    "CostMode",
    "param_count",
    "adapter_param_count",
    "step_cost",
    "matched_steps",
    "expected_stochastic_cost",
    "enumerate_sweep",
    "SWEEP_SIGNATURES",
    "SWEEP_DEGREES",
    "write_sweep_manifest",
    "read_sweep_manifest",
]

CostMode = Literal["layer-pass", "exact-flops"]


class InfeasiblePlanError(ValueError):
    """Signature needs more distinct leaf blocks than there are layers."""


@dataclass(frozen=True)
class ModelDims:
    """Architecture dimensions shared by the ledger and the executor."""

    d_model: int
    n_heads: int
    mlp_dim: int
    vocab: int
    seq_len: int
    total_layers: int

    def __post_init__(self):
        for name in ("d_model", "n_heads", "mlp_dim", "vocab", "seq_len", "total_layers"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        if self.d_model % self.n_heads != 0:
            raise ValueError(
                f"d_model {self.d_model} not divisible by n_heads {self.n_heads}"
            )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelDims":
        return cls(**{k: int(d[k]) for k in (
            "d_model", "n_heads", "mlp_dim", "vocab", "seq_len", "total_layers")})


def _lpb_or_raise(plan: ExecutionPlan, dims: ModelDims) -> int:
    lpb = layers_per_block(plan.source, dims.total_layers)
    if lpb < 1:
        raise InfeasiblePlanError(
            f"signature {to_tagged(plan.source)} needs {plan.unique_leaf_count} "
            f"distinct blocks but only {dims.total_layers} layers exist "
            f"(layers_per_block=0)"
        )
    return lpb


def _per_layer_params(dims: ModelDims) -> int:
    d, mlp = dims.d_model, dims.mlp_dim
    attn = 4 * (d * d + d)            # q, k, v, out projections with biases
    ff = (d * mlp + mlp) + (mlp * d + d)
    norms = 4 * d                     # two layer norms, gamma and beta each
    return attn + ff + norms


def param_count(plan: ExecutionPlan, dims: ModelDims) -> int:
    """Total trainable parameters for the base architecture.

    Counts token and position embeddings, one stack of layers_per_block layers
    per distinct leaf block, the final norm, and the untied output head.
    Invariant to repetition in the plan. Adapter banks are optional equipment
    counted separately by adapter_param_count.
    """
    lpb = _lpb_or_raise(plan, dims)
    d = dims.d_model
    embed = dims.vocab * d + dims.seq_len * d
    head = d * dims.vocab + dims.vocab
    final_norm = 2 * d
    blocks = plan.unique_leaf_count * lpb * _per_layer_params(dims)
    return embed + head + final_norm + blocks


def adapter_param_count(dims: ModelDims, r_max: int) -> int:
    """Parameters in an adapter bank: one bias-free d x d map per round."""
    if r_max < 1:
        raise ValueError(f"r_max must be >= 1, got {r_max}")
    return r_max * dims.d_model * dims.d_model


def _flops_per_token_layer(dims: ModelDims) -> float:
    d = dims.d_model
    return 12.0 * d * d + 4.0 * d * dims.seq_len / 2.0 + 4.0 * d * dims.mlp_dim


def step_cost(plan: ExecutionPlan, dims: ModelDims, mode: CostMode = "layer-pass") -> float:
    """Forward cost of one training sequence under the plan.

    layer-pass: executed leaf calls x layers_per_block x seq_len (an integer).
    exact-flops: the same layer count times a per-token FLOP estimate; MACs
    count as 2 FLOPs and causal attention scores average seq_len/2 keys.
    """
    lpb = _lpb_or_raise(plan, dims)
    layer_passes = len(plan.leaf_sequence) * lpb
    if mode == "layer-pass":
        return float(layer_passes * dims.seq_len)
    if mode == "exact-flops":
        return layer_passes * dims.seq_len * _flops_per_token_layer(dims)
    raise ValueError(f"unknown cost mode {mode!r}")


def matched_steps(
    baseline_plan: ExecutionPlan,
    variant_plan: ExecutionPlan,
    dims_baseline: ModelDims,
    dims_variant: ModelDims,
    baseline_steps: int,
    mode: CostMode = "layer-pass",
) -> int:
    """Largest variant step count whose total cost fits the baseline budget.

    floor(baseline_steps * cost_baseline / cost_variant), computed with exact
    rational arithmetic so equal-cost plans match exactly. The result never
    exceeds the budget: matched * cost_variant <= baseline_steps * cost_base.
    """
    if baseline_steps < 0:
        raise ValueError(f"baseline_steps must be >= 0, got {baseline_steps}")
    cost_b = step_cost(baseline_plan, dims_baseline, mode)
    cost_v = step_cost(variant_plan, dims_variant, mode)
    # Fraction(float) is exact, so the floor below is exact too.
    ratio = Fraction(cost_b) / Fraction(cost_v)
    return int(baseline_steps * ratio)


def expected_stochastic_cost(
    plan: ExecutionPlan,
    dims: ModelDims,
    p_skip: float,
    mode: CostMode = "layer-pass",
) -> float:
    """Expected per-step cost when skip-eligible calls drop with prob p_skip.

    Affine and decreasing in p_skip; equals step_cost at p_skip = 0. Positions
    outside the eligible mask always execute.
    """
    if not (0.0 <= p_skip < 1.0):
        raise ValueError(f"p_skip must be in [0, 1), got {p_skip}")
    lpb = _lpb_or_raise(plan, dims)
    n_eligible = sum(plan.skip_eligible)
    n_always = len(plan.leaf_sequence) - n_eligible
    expected_calls = n_always + n_eligible * (1.0 - p_skip)
    if mode == "layer-pass":
        return expected_calls * lpb * dims.seq_len
    if mode == "exact-flops":
        return expected_calls * lpb * dims.seq_len * _flops_per_token_layer(dims)
    raise ValueError(f"unknown cost mode {mode!r}")


# Sweep ordering: the all-layers baseline, repeat-all-over at increasing
# repetition, then the fixed multi-block family crossed with degrees 1..3.
_SWEEP_MULTI = ["ABB", "ABA", "AAB", "ABBC", "AABC", "ABCC", "ABBB", "AAAB", "AABB"]
SWEEP_DEGREES = (1, 2, 3)
SWEEP_SIGNATURES: tuple[Signature, ...] = tuple(
    [parse("A", 1), parse("AA", 1), parse("AAA", 1), parse("AAAA", 1)]
    + [parse(s, d) for s in _SWEEP_MULTI for d in SWEEP_DEGREES]
)


def enumerate_sweep(total_layers: int) -> list[tuple[Signature, bool]]:
    """Fixed candidate list with per-candidate feasibility at this depth."""
    out = []
    for sig in SWEEP_SIGNATURES:
        out.append((sig, layers_per_block(sig, total_layers) >= 1))
    return out


def write_sweep_manifest(
    path,
    dims: ModelDims,
    baseline_sig: Signature,
    baseline_steps: int,
    mode: CostMode = "layer-pass",
) -> list[dict]:
    """Emit one JSONL row per sweep candidate; infeasible rows carry nulls."""
    baseline_plan = expand(baseline_sig)
    rows = []
    for sig, feasible in enumerate_sweep(dims.total_layers):
        row: dict = {
            "signature": sig.symbols,
            "degree": sig.degree,
            "feasible": feasible,
            "layers_per_block": layers_per_block(sig, dims.total_layers),
        }
        if feasible:
            plan = expand(sig)
            row["params"] = param_count(plan, dims)
            row["steps_matched"] = matched_steps(
                baseline_plan, plan, dims, dims, baseline_steps, mode
            )
        else:
            row["params"] = None
            row["steps_matched"] = None
        rows.append(row)
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row) + "\n")
    return rows


def read_sweep_manifest(path) -> list[dict]:
    rows = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows
