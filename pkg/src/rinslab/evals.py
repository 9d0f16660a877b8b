"""Zero-shot multiple-choice scoring by per-token log-perplexity.

Each option is scored as the mean cross entropy of the option's own tokens,
conditioned on the rendered context (which is never scored); the option with
the lowest score wins, ties to the lowest index. Scoring is deterministic:
no sampling anywhere. Three render styles exist: "plain" joins non-empty
fields with single spaces; "boolq" and "piqa" are fixed templates whose
byte-level output is part of this module's contract.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .corpus import ByteTokenizer
from .model import RecursiveModel

__all__ = [
    "TemplateError",
    "ContextOverflowError",
    "MCQItem",
    "render_parts",
    "render_template",
    "score_option",
    "EvalResult",
    "eval_mcq",
    "held_out_log_perplexity",
    "read_task_jsonl",
    "write_task_jsonl",
    "write_results_jsonl",
]

STYLES = ("plain", "boolq", "piqa")


class TemplateError(ValueError):
    pass


class ContextOverflowError(ValueError):
    def __init__(self, item_desc: str, length: int, seq_len: int):
        super().__init__(
            f"rendered item {item_desc} needs {length} tokens but seq_len is {seq_len}"
        )


@dataclass(frozen=True)
class MCQItem:
    """context/prefix are conditioning text; exactly one option is gold.

    For boolq, context is the passage and prefix the question. For piqa,
    context is the goal and prefix stays empty.
    """

    context: str
    prefix: str
    options: tuple[str, ...]
    gold_index: int
    style: str = "plain"

    def __post_init__(self):
        if len(self.options) < 2:
            raise ValueError(f"need >= 2 options, got {len(self.options)}")
        if not (0 <= self.gold_index < len(self.options)):
            raise ValueError(
                f"gold_index {self.gold_index} out of range for "
                f"{len(self.options)} options"
            )
        if self.style not in STYLES:
            raise ValueError(f"unknown style {self.style!r}; expected {STYLES}")

    def describe(self) -> str:
        head = (self.context or self.prefix or self.options[0])[:40]
        return f"{self.style}:{head!r}"


def render_parts(style: str, item: MCQItem, option_index: int) -> tuple[str, str]:
    """(conditioning text, scored option text) for one option.

    Concatenating the two gives the full rendered sequence; the split point
    is where scoring starts.
    """
    if not (0 <= option_index < len(item.options)):
        raise ValueError(f"option index {option_index} out of range")
    option = item.options[option_index]
    if option == "":
        raise TemplateError(
            f"empty option {option_index} in item {item.describe()}"
        )
    if style == "plain":
        parts = [p for p in (item.context, item.prefix) if p]
        cond = " ".join(parts)
        return (cond, (" " + option) if cond else option)
    if style == "boolq":
        if not item.context or not item.prefix:
            raise TemplateError("boolq needs context (passage) and prefix (question)")
        cond = (
            f"{item.context} Based on this, the answer to the question: "
            f"{item.prefix}, is:"
        )
        return cond, f" {option}"
    if style == "piqa":
        if not item.context:
            raise TemplateError("piqa needs context (the goal)")
        if item.prefix:
            raise TemplateError("piqa does not use prefix; put the goal in context")
        cond = f"The goal is: {item.context} The solution is:"
        return cond, f" {option}."
    raise TemplateError(f"unknown style {style!r}; expected {STYLES}")


def render_template(style: str, item: MCQItem, option_index: int = 0) -> str:
    """Full rendered text for one option; byte-exact per style."""
    cond, opt = render_parts(style, item, option_index)
    return cond + opt


def score_option(
    model: RecursiveModel,
    params: dict,
    tokenizer: ByteTokenizer,
    item: MCQItem,
    option_index: int,
    rounds: Optional[int] = None,
    score_full: bool = False,
) -> float:
    """Mean cross entropy (nats/token) of the option tokens.

    Conditioning tokens contribute context but never loss. score_full=True
    scores the whole rendered sequence instead (from position 1). A rendered
    sequence longer than seq_len raises, naming the item.
    """
    cond, opt = render_parts(item.style, item, option_index)
    cond_ids = tokenizer.encode(cond)
    opt_ids = tokenizer.encode(opt)
    ids = cond_ids + opt_ids
    if len(ids) > model.dims.seq_len:
        raise ContextOverflowError(item.describe(), len(ids), model.dims.seq_len)
    if len(opt_ids) == 0:
        raise TemplateError(f"empty option {option_index} in item {item.describe()}")
    tokens = np.asarray(ids, dtype=np.int64)
    logits = model.forward(params, tokens, rounds=rounds)
    # logits[t] predicts ids[t+1]; position 0 is never predicted.
    start = 1 if score_full else max(len(cond_ids), 1)
    if start >= len(ids):
        raise TemplateError(
            f"nothing to score for option {option_index} in item {item.describe()}"
        )
    m = logits.max(axis=-1, keepdims=True)
    z = logits - m
    logp = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    picked = logp[np.arange(start - 1, len(ids) - 1), tokens[start:]]
    return float(-picked.mean())


@dataclass
class EvalResult:
    accuracy: float
    n_items: int
    predictions: list[int] = field(default_factory=list)
    scores: list[list[float]] = field(default_factory=list)


def eval_mcq(
    model: RecursiveModel,
    params: dict,
    tokenizer: ByteTokenizer,
    items: Sequence[MCQItem],
    rounds: Optional[int] = None,
    score_full: bool = False,
) -> EvalResult:
    """Score every option of every item; lowest score wins, ties to the
    lowest option index."""
    if not items:
        raise ValueError("no items to evaluate")
    preds = []
    all_scores = []
    correct = 0
    for item in items:
        scores = [
            score_option(model, params, tokenizer, item, i, rounds, score_full)
            for i in range(len(item.options))
        ]
        pred = int(np.argmin(scores))
        preds.append(pred)
        all_scores.append(scores)
        if pred == item.gold_index:
            correct += 1
    return EvalResult(
        accuracy=correct / len(items),
        n_items=len(items),
        predictions=preds,
        scores=all_scores,
    )


def held_out_log_perplexity(
    model: RecursiveModel,
    params: dict,
    batches: Sequence,
    rounds: Optional[int] = None,
    mask_reset: bool = False,
) -> float:
    """Token-weighted mean cross entropy over packed batches.

    mask_reset evaluates with document-isolated attention, matching a
    training run that used the same flag.
    """
    from .corpus import segments_from_boundaries

    total_loss = 0.0
    total_tokens = 0
    for batch in batches:
        segments = segments_from_boundaries(batch.boundaries) if mask_reset else None
        n = batch.targets.size
        total_loss += (
            model.loss(params, batch.tokens, batch.targets, rounds=rounds,
                       segments=segments) * n
        )
        total_tokens += n
    if total_tokens == 0:
        raise ValueError("no tokens in evaluation batches")
    return total_loss / total_tokens


def read_task_jsonl(path) -> list[MCQItem]:
    items = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            items.append(
                MCQItem(
                    context=obj.get("context", ""),
                    prefix=obj.get("prefix", ""),
                    options=tuple(obj["options"]),
                    gold_index=int(obj["gold_index"]),
                    style=obj.get("style", "plain"),
                )
            )
    return items


def write_task_jsonl(path, items: Sequence[MCQItem]):
    with open(path, "w", encoding="utf-8") as f:
        for item in items:
            f.write(
                json.dumps(
                    {
                        "context": item.context,
                        "prefix": item.prefix,
                        "options": list(item.options),
                        "gold_index": item.gold_index,
                        "style": item.style,
                    }
                )
                + "\n"
            )


def write_results_jsonl(path, rows: Sequence[dict]):
    """Rows of {task, rounds, accuracy, n_items}."""
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(
                json.dumps(
                    {
                        "task": row["task"],
                        "rounds": row["rounds"],
                        "accuracy": row["accuracy"],
                        "n_items": row["n_items"],
                    }
                )
                + "\n"
            )
