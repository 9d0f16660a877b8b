"""Run orchestration: INI run specs, content hashing, artifact layout.

A run spec is a flat key-value INI file with sections. Parsing produces a
typed RunSpec; the config hash is the SHA-256 of the canonical JSON of the
parsed values, so reordering keys or sections never changes identity.

Run directory layout (under the output root, env RINSLAB_OUT_ROOT or
--out-root, default ./runs):

    <out_dir>/config.ini       copy of the spec as given
    <out_dir>/manifest.json    identity, derived values, status (atomic write)
    <out_dir>/trace.csv        loss trace, one row per step
    <out_dir>/trace.jsonl      same trace with a header record
    <out_dir>/checkpoint.rlab  params + optimizer state + RNG for resume

Corpus references are either a path to a .tokens file or "grammar:N[:seed]"
for N tokens of the house grammar. Train references default to seed 0 and
eval references to seed 1, so compute-matched runs share training data while
evals stay held out; give explicit seeds to override. The model vocabulary
reserves its top id for EOS, so a grammar corpus with terminal vocab 64
needs vocab >= 65 and byte-tokenized text needs vocab >= 257.

When a [baseline] section is present, total_steps is always derived with
matched_steps from the baseline's signature and step count; a total_steps
key in [train] is recorded but overridden.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import corpus as corpus_mod
from .checkpoint import load_checkpoint
from .ledger import (
    InfeasiblePlanError,
    ModelDims,
    enumerate_sweep,
    expected_stochastic_cost,
    matched_steps,
    param_count,
    step_cost,
)
from .model import RecursionPolicy, RecursiveModel, adapter_fraction
from .optim import TrainConfig
from .scaling import (
    FitResult,
    OptimalRResult,
    RCurveFamily,
    fit_power_law,
    fit_to_json,
    optimal_r,
    write_breakpoints_csv,
    write_fits_json,
)
from .signatures import (
    Signature,
    SignatureParseError,
    expand,
    layers_per_block,
    parse_tagged,
    rins_rounds,
    to_tagged,
)
from .training import LossTrace, train

__all__ = [
    "ConfigError",
    "RunSpec",
    "parse_run_config",
    "config_hash",
    "output_root",
    "cmd_run",
    "cmd_sweep",
    "cmd_fit",
    "cmd_report",
    "cmd_eval",
]

OUT_ROOT_ENV = "RINSLAB_OUT_ROOT"


class ConfigError(ValueError):
    """Invalid run spec; the message names the offending section.key."""


# ---------------------------------------------------------------- INI parsing

_KNOWN_KEYS = {
    "run": {"name", "out_dir", "seed"},
    "signature": {"value"},
    "model": {"d_model", "n_heads", "mlp_dim", "vocab", "seq_len", "total_layers", "dtype"},
    "policy": {"p_skip", "kv_share", "adapters", "inference_rounds"},
    "train": {
        "peak_lr", "weight_decay", "warmup_steps", "cooldown_steps", "total_steps",
        "batch_size", "grad_clip_norm", "eval_interval", "mask_reset",
    },
    "corpus": {"train", "eval"},
    "baseline": {"signature", "steps"},
}
_REQUIRED_SECTIONS = ("run", "signature", "model", "train", "corpus")


def _parse_ini(text: str) -> dict[str, dict[str, str]]:
    import configparser

    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ConfigError(f"config parse failure: {e}") from e
    return {s: dict(cp.items(s)) for s in cp.sections()}


def _want(raw: dict, section: str) -> dict[str, str]:
    if section not in raw:
        raise ConfigError(f"missing required section [{section}]")
    return raw[section]


def _check_unknown(raw: dict):
    for section, keys in raw.items():
        if section not in _KNOWN_KEYS:
            raise ConfigError(f"unknown section [{section}]")
        extra = set(keys) - _KNOWN_KEYS[section]
        if extra:
            raise ConfigError(
                f"unknown key {section}.{sorted(extra)[0]}"
            )


def _get(sec: dict, section: str, key: str, default=None, required=False) -> Optional[str]:
    if key in sec:
        return sec[key]
    if required:
        raise ConfigError(f"missing required key {section}.{key}")
    return default


def _as_int(value: str, section: str, key: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{section}.{key}: expected integer, got {value!r}")


def _as_float(value: str, section: str, key: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"{section}.{key}: expected number, got {value!r}")


_TRUE = {"true", "1", "yes", "on"}
_FALSE = {"false", "0", "no", "off"}


def _as_bool(value: str, section: str, key: str) -> bool:
    v = value.strip().lower()
    if v in _TRUE:
        return True
    if v in _FALSE:
        return False
    raise ConfigError(f"{section}.{key}: expected boolean, got {value!r}")


@dataclass(frozen=True)
class RunSpec:
    name: str
    out_dir: str
    seed: int
    signature: Signature
    dims: ModelDims
    policy: RecursionPolicy
    train_cfg: TrainConfig
    corpus_train: str
    corpus_evals: tuple[tuple[str, str], ...]
    baseline: Optional[tuple[Signature, int]]
    dtype: str
    declared_total_steps: int

    def canonical_dict(self) -> dict:
        return {
            "name": self.name,
            "out_dir": self.out_dir,
            "seed": self.seed,
            "signature": to_tagged(self.signature),
            "dims": self.dims.to_dict(),
            "policy": self.policy.to_dict(),
            "train": self.train_cfg.to_dict(),
            "corpus_train": self.corpus_train,
            "corpus_evals": [list(e) for e in self.corpus_evals],
            "baseline": None
            if self.baseline is None
            else [to_tagged(self.baseline[0]), self.baseline[1]],
            "dtype": self.dtype,
        }


def config_hash(spec: RunSpec) -> str:
    blob = json.dumps(spec.canonical_dict(), sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def parse_run_config(text: str) -> RunSpec:
    raw = _parse_ini(text)
    _check_unknown(raw)
    for section in _REQUIRED_SECTIONS:
        _want(raw, section)

    run = raw["run"]
    name = _get(run, "run", "name", required=True)
    out_dir = _get(run, "run", "out_dir", default=name)
    seed = _as_int(_get(run, "run", "seed", default="0"), "run", "seed")

    sig_text = _get(raw["signature"], "signature", "value", required=True)
    try:
        signature = parse_tagged(sig_text)
    except SignatureParseError as e:
        raise ConfigError(f"signature.value: {e}")

    m = raw["model"]
    dtype = _get(m, "model", "dtype", default="float32")
    if dtype not in ("float32", "float64"):
        raise ConfigError(f"model.dtype: expected float32 or float64, got {dtype!r}")
    try:
        dims = ModelDims(
            d_model=_as_int(_get(m, "model", "d_model", required=True), "model", "d_model"),
            n_heads=_as_int(_get(m, "model", "n_heads", required=True), "model", "n_heads"),
            mlp_dim=_as_int(_get(m, "model", "mlp_dim", required=True), "model", "mlp_dim"),
            vocab=_as_int(_get(m, "model", "vocab", required=True), "model", "vocab"),
            seq_len=_as_int(_get(m, "model", "seq_len", required=True), "model", "seq_len"),
            total_layers=_as_int(
                _get(m, "model", "total_layers", required=True), "model", "total_layers"
            ),
        )
    except ValueError as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"model: {e}")

    lpb = layers_per_block(signature, dims.total_layers)
    if lpb < 1:
        raise ConfigError(
            f"signature.value: {to_tagged(signature)} is infeasible at "
            f"model.total_layers={dims.total_layers} (layers_per_block=0, "
            f"needs {signature.unique_leaf_count} blocks)"
        )

    p = raw.get("policy", {})
    r_max = rins_rounds(signature) or 1
    ir_text = _get(p, "policy", "inference_rounds")
    try:
        policy = RecursionPolicy(
            r_max=r_max,
            p_skip=_as_float(_get(p, "policy", "p_skip", default="0"), "policy", "p_skip"),
            kv_share=_as_bool(
                _get(p, "policy", "kv_share", default="false"), "policy", "kv_share"
            ),
            adapters=_as_bool(
                _get(p, "policy", "adapters", default="false"), "policy", "adapters"
            ),
            inference_rounds=None
            if ir_text is None
            else _as_int(ir_text, "policy", "inference_rounds"),
        )
    except ValueError as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"policy: {e}")

    t = raw["train"]
    declared_total = _as_int(
        _get(t, "train", "total_steps", required=True), "train", "total_steps"
    )

    baseline = None
    if "baseline" in raw:
        b = raw["baseline"]
        try:
            bsig = parse_tagged(_get(b, "baseline", "signature", required=True))
        except SignatureParseError as e:
            raise ConfigError(f"baseline.signature: {e}")
        bsteps = _as_int(_get(b, "baseline", "steps", required=True), "baseline", "steps")
        if bsteps < 1:
            raise ConfigError(f"baseline.steps: must be >= 1, got {bsteps}")
        if layers_per_block(bsig, dims.total_layers) < 1:
            raise ConfigError(
                f"baseline.signature: {to_tagged(bsig)} infeasible at "
                f"{dims.total_layers} layers (layers_per_block=0)"
            )
        baseline = (bsig, bsteps)

    if baseline is not None:
        total_steps = matched_steps(
            expand(baseline[0]), expand(signature), dims, dims, baseline[1]
        )
        if total_steps < 1:
            raise ConfigError(
                "baseline.steps: matched step count is 0; budget too small"
            )
    else:
        total_steps = declared_total

    try:
        train_cfg = TrainConfig(
            peak_lr=_as_float(_get(t, "train", "peak_lr", default="5e-4"), "train", "peak_lr"),
            weight_decay=_as_float(
                _get(t, "train", "weight_decay", default="5e-5"), "train", "weight_decay"
            ),
            warmup_steps=_as_int(
                _get(t, "train", "warmup_steps", default="0"), "train", "warmup_steps"
            ),
            cooldown_steps=_as_int(
                _get(t, "train", "cooldown_steps", default="0"), "train", "cooldown_steps"
            ),
            total_steps=total_steps,
            batch_size=_as_int(
                _get(t, "train", "batch_size", default="8"), "train", "batch_size"
            ),
            grad_clip_norm=_as_float(
                _get(t, "train", "grad_clip_norm", default="1.0"), "train", "grad_clip_norm"
            ),
            seed=seed,
            eval_interval=_as_int(
                _get(t, "train", "eval_interval", default="200"), "train", "eval_interval"
            ),
            mask_reset=_as_bool(
                _get(t, "train", "mask_reset", default="false"), "train", "mask_reset"
            ),
        )
    except ValueError as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"train: {e}")

    c = raw["corpus"]
    corpus_train = _get(c, "corpus", "train", required=True)
    evals = []
    eval_text = _get(c, "corpus", "eval")
    if eval_text:
        for part in eval_text.split(","):
            part = part.strip()
            if not part:
                continue
            if "=" not in part:
                raise ConfigError(
                    f"corpus.eval: expected name=ref entries, got {part!r}"
                )
            ename, _, ref = part.partition("=")
            evals.append((ename.strip(), ref.strip()))

    return RunSpec(
        name=name,
        out_dir=out_dir,
        seed=seed,
        signature=signature,
        dims=dims,
        policy=policy,
        train_cfg=train_cfg,
        corpus_train=corpus_train,
        corpus_evals=tuple(evals),
        baseline=baseline,
        dtype=dtype,
        declared_total_steps=declared_total,
    )


# ------------------------------------------------------------------- corpora


def _resolve_corpus(ref: str, dims: ModelDims, default_seed: int, base_dir: Path):
    """ref -> list of documents. "grammar:N[:seed]" or a .tokens path."""
    if ref.startswith("grammar:"):
        parts = ref.split(":")
        if len(parts) not in (2, 3):
            raise ConfigError(f"corpus ref {ref!r}: expected grammar:N[:seed]")
        try:
            n_tokens = int(parts[1])
        except ValueError:
            raise ConfigError(f"corpus ref {ref!r}: token count must be an integer")
        seed = default_seed
        if len(parts) == 3:
            try:
                seed = int(parts[2])
            except ValueError:
                raise ConfigError(f"corpus ref {ref!r}: seed must be an integer")
        eos = dims.vocab - 1
        if eos < 64:
            raise ConfigError(
                f"model.vocab: grammar corpora need vocab >= 65, got {dims.vocab}"
            )
        spec = corpus_mod.default_grammar(seed=seed, terminal_vocab=64)
        return corpus_mod.generate_corpus(spec, n_tokens)
    path = Path(ref)
    if not path.is_absolute():
        path = base_dir / path
    if not path.exists():
        raise ConfigError(f"corpus ref {ref!r}: file not found at {path}")
    docs, _ = corpus_mod.load_tokens(path)
    max_id = max((max(d) for d in docs if d), default=0)
    if max_id >= dims.vocab - 1:
        raise ConfigError(
            f"corpus ref {ref!r}: token id {max_id} collides with EOS/vocab "
            f"{dims.vocab} (EOS is vocab-1)"
        )
    return docs


def _batches_for(docs, dims: ModelDims, batch_size: int):
    eos = dims.vocab - 1
    return list(
        corpus_mod.pack_sequences(docs, dims.seq_len, batch_size, eos_id=eos)
    )


# ---------------------------------------------------------------------- runs


def output_root(cli_value: Optional[str] = None) -> Path:
    if cli_value:
        return Path(cli_value)
    env = os.environ.get(OUT_ROOT_ENV)
    return Path(env) if env else Path("runs")


def _write_json_atomic(path: Path, obj: dict):
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(obj, indent=2, sort_keys=True), encoding="utf-8")
    os.replace(tmp, path)


def cmd_run(config_path, out_root: Optional[str] = None, force: bool = False) -> dict:
    """Execute one run spec. Idempotent: a completed run with the same hash
    is skipped unless force. An existing checkpoint with matching hash is
    resumed."""
    config_path = Path(config_path)
    if not config_path.exists():
        raise ConfigError(f"config file not found: {config_path}")
    text = config_path.read_text(encoding="utf-8")
    spec = parse_run_config(text)
    chash = config_hash(spec)

    root = output_root(out_root)
    run_dir = root / spec.out_dir
    run_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = run_dir / "manifest.json"
    ckpt_path = run_dir / "checkpoint.rlab"

    if manifest_path.exists() and not force:
        old = json.loads(manifest_path.read_text(encoding="utf-8"))
        if old.get("config_hash") == chash and old.get("status") == "done":
            return old

    (run_dir / "config.ini").write_text(text, encoding="utf-8")

    plan = expand(spec.signature)
    model = RecursiveModel(spec.dims, plan, spec.policy, dtype=np.dtype(spec.dtype))
    params = model.init_params(spec.seed)

    base_dir = config_path.parent
    train_docs = _resolve_corpus(spec.corpus_train, spec.dims, 0, base_dir)
    train_batches = _batches_for(train_docs, spec.dims, spec.train_cfg.batch_size)
    if not train_batches:
        raise ConfigError(
            f"corpus.train: {spec.corpus_train!r} yields no batches at "
            f"seq_len {spec.dims.seq_len}"
        )
    eval_batches = {}
    for ename, ref in spec.corpus_evals:
        docs = _resolve_corpus(ref, spec.dims, 1, base_dir)
        got = _batches_for(docs, spec.dims, spec.train_cfg.batch_size)
        if not got:
            raise ConfigError(f"corpus.eval: {ref!r} yields no batches")
        eval_batches[ename] = got

    resume_from = None
    if ckpt_path.exists() and manifest_path.exists() and not force:
        old = json.loads(manifest_path.read_text(encoding="utf-8"))
        if old.get("config_hash") == chash:
            resume_from = str(ckpt_path)

    manifest = {
        "name": spec.name,
        "config_hash": chash,
        "seed": spec.seed,
        "signature": spec.signature.symbols,
        "degree": spec.signature.degree,
        "signature_tagged": to_tagged(spec.signature),
        "dims": spec.dims.to_dict(),
        "policy": spec.policy.to_dict(),
        "total_steps": spec.train_cfg.total_steps,
        "declared_total_steps": spec.declared_total_steps,
        "baseline": None
        if spec.baseline is None
        else {"signature": to_tagged(spec.baseline[0]), "steps": spec.baseline[1]},
        "params_count": param_count(plan, spec.dims),
        "adapter_fraction": adapter_fraction(params),
        "expected_cost_per_step": expected_stochastic_cost(
            plan, spec.dims, spec.policy.p_skip
        ),
        "step_cost_full": step_cost(plan, spec.dims),
        "status": "running",
        "started_at": time.time(),
    }
    _write_json_atomic(manifest_path, manifest)

    trace, _ = train(
        model,
        params,
        train_batches,
        spec.train_cfg,
        eval_batches=eval_batches,
        checkpoint_path=str(ckpt_path),
        # checkpoint at the eval cadence so a killed run resumes from the
        # last eval stamp instead of restarting
        checkpoint_interval=spec.train_cfg.eval_interval,
        resume_from=resume_from,
    )
    trace.to_csv(run_dir / "trace.csv")
    trace.to_jsonl(run_dir / "trace.jsonl")

    manifest["status"] = "aborted" if trace.aborted else "done"
    manifest["abort_reason"] = trace.abort_reason
    manifest["finished_at"] = time.time()
    if trace.records:
        last = trace.records[-1]
        manifest["final_step"] = last.step
        manifest["final_train_loss"] = last.train_loss
        manifest["realized_compute_total"] = last.compute
        final_evals = {}
        for r in reversed(trace.records):
            if r.eval_losses:
                final_evals = r.eval_losses
                break
        manifest["final_eval_losses"] = final_evals
    _write_json_atomic(manifest_path, manifest)
    return manifest


# --------------------------------------------------------------------- sweep

_SWEEP_KEYS = {
    "sweep": {"name", "baseline_signature", "baseline_steps"},
    "model": _KNOWN_KEYS["model"],
    "train": _KNOWN_KEYS["train"],
    "corpus": _KNOWN_KEYS["corpus"],
    "run": {"seed"},
}


def _sweep_candidate_config(raw: dict, sig: Signature, sweep_name: str) -> str:
    lines = ["[run]"]
    tag = to_tagged(sig).replace("^", "").lower()
    lines.append(f"name = {sweep_name}-{tag}")
    lines.append(f"out_dir = {sweep_name}/{tag.replace('@', '-')}")
    lines.append(f"seed = {raw.get('run', {}).get('seed', '0')}")
    lines.append("")
    lines.append("[signature]")
    lines.append(f"value = {to_tagged(sig)}")
    lines.append("")
    for section in ("model", "train", "corpus"):
        lines.append(f"[{section}]")
        for k, v in raw[section].items():
            lines.append(f"{k} = {v}")
        lines.append("")
    lines.append("[baseline]")
    lines.append(f"signature = {raw['sweep']['baseline_signature']}")
    lines.append(f"steps = {raw['sweep']['baseline_steps']}")
    return "\n".join(lines) + "\n"


def _run_sweep_candidate(args) -> dict:
    cfg_path, out_root = args
    try:
        return cmd_run(cfg_path, out_root)
    except Exception as e:  # recorded, not fatal to the sweep
        return {"status": "failed", "error": f"{type(e).__name__}: {e}"}


def cmd_sweep(config_path, out_root: Optional[str] = None, jobs: int = 1) -> list[dict]:
    """Run every feasible sweep candidate compute-matched to the baseline.

    Candidates run sequentially (or jobs-wide); completed runs are skipped on
    re-invocation, so an interrupted sweep resumes where it stopped. Policies
    are deterministic full-depth here; stochastic knobs belong to single
    runs. Emits comparison.csv with one row per candidate, infeasible ones
    included."""
    config_path = Path(config_path)
    if not config_path.exists():
        raise ConfigError(f"config file not found: {config_path}")
    raw = _parse_ini(config_path.read_text(encoding="utf-8"))
    for section, keys in raw.items():
        if section not in _SWEEP_KEYS:
            raise ConfigError(f"unknown section [{section}] in sweep config")
        extra = set(keys) - _SWEEP_KEYS[section]
        if extra:
            raise ConfigError(f"unknown key {section}.{sorted(extra)[0]} in sweep config")
    for section in ("sweep", "model", "train", "corpus"):
        _want(raw, section)
    sweep = raw["sweep"]
    sweep_name = _get(sweep, "sweep", "name", default="sweep")
    _get(sweep, "sweep", "baseline_signature", required=True)
    _get(sweep, "sweep", "baseline_steps", required=True)
    total_layers = _as_int(
        _get(raw["model"], "model", "total_layers", required=True),
        "model", "total_layers",
    )

    root = output_root(out_root)
    sweep_dir = root / sweep_name
    sweep_dir.mkdir(parents=True, exist_ok=True)

    candidates = enumerate_sweep(total_layers)
    jobs_args = []
    rows: list[dict] = []
    for sig, feasible in candidates:
        row = {
            "signature": sig.symbols,
            "degree": sig.degree,
            "feasible": feasible,
            "layers_per_block": layers_per_block(sig, total_layers),
        }
        if not feasible:
            row["status"] = "skipped-infeasible"
            rows.append(row)
            continue
        cfg_text = _sweep_candidate_config(raw, sig, sweep_name)
        tag = to_tagged(sig).replace("@", "-").lower()
        cfg_path = sweep_dir / f"candidate-{tag}.ini"
        cfg_path.write_text(cfg_text, encoding="utf-8")
        jobs_args.append((str(cfg_path), str(root)))
        rows.append(row)

    feasible_rows = [r for r in rows if r["feasible"]]
    if jobs > 1:
        import multiprocessing as mp

        with mp.get_context("spawn").Pool(jobs) as pool:
            results = pool.map(_run_sweep_candidate, jobs_args)
    else:
        results = [_run_sweep_candidate(a) for a in jobs_args]

    for row, manifest in zip(feasible_rows, results):
        row["status"] = manifest.get("status", "failed")
        row["params"] = manifest.get("params_count")
        row["steps"] = manifest.get("total_steps")
        row["final_train_loss"] = manifest.get("final_train_loss")
        row["realized_compute_total"] = manifest.get("realized_compute_total")
        evals = manifest.get("final_eval_losses") or {}
        for k, v in evals.items():
            row[f"final_eval_{k}"] = v
        if "error" in manifest:
            row["error"] = manifest["error"]

    columns = ["signature", "degree", "feasible", "layers_per_block", "status",
               "params", "steps", "final_train_loss", "realized_compute_total"]
    extra_cols = sorted({k for r in rows for k in r} - set(columns))
    columns += extra_cols
    with open(sweep_dir / "comparison.csv", "w", encoding="utf-8", newline="") as f:
        w = csv.DictWriter(f, fieldnames=columns)
        w.writeheader()
        for r in rows:
            w.writerow(r)
    return rows


# ----------------------------------------------------------------- fit/report


def _trace_fit_points(run_dir: Path, use: str, last_frac: float):
    trace = LossTrace.from_jsonl(run_dir / "trace.jsonl")
    if use == "train":
        pts = [(r.compute, r.train_loss) for r in trace.records]
    elif use.startswith("eval:"):
        name = use[len("eval:"):]
        pts = trace.eval_points(name)
        if not pts:
            raise ConfigError(
                f"{run_dir}: no eval points named {name!r} in trace "
                f"(have {trace.eval_names})"
            )
    else:
        raise ConfigError(f"--use must be 'train' or 'eval:<name>', got {use!r}")
    if not (0.0 < last_frac <= 1.0):
        raise ConfigError(f"--last-frac must be in (0, 1], got {last_frac}")
    k = max(4, int(round(len(pts) * last_frac)))
    return pts[-k:]


def cmd_fit(
    run_dirs,
    out_path=None,
    use: str = "train",
    last_frac: float = 1.0,
    n_grid: int = 256,
) -> dict[str, FitResult]:
    """Fit each run's loss-vs-compute trace; write fits JSON when asked."""
    fits: dict[str, FitResult] = {}
    for rd in run_dirs:
        rd = Path(rd)
        manifest = json.loads((rd / "manifest.json").read_text(encoding="utf-8"))
        pts = _trace_fit_points(rd, use, last_frac)
        fits[manifest["name"]] = fit_power_law(pts, n_grid=n_grid)
    if out_path is not None:
        write_fits_json(out_path, fits)
    return fits


def _family_from_manifests(run_dirs) -> Optional[dict[int, str]]:
    """Map rounds r -> run name when the dirs form an A^r B family."""
    mapping: dict[int, str] = {}
    for rd in run_dirs:
        manifest = json.loads(
            (Path(rd) / "manifest.json").read_text(encoding="utf-8")
        )
        sig = parse_tagged(manifest["signature_tagged"])
        r = rins_rounds(sig)
        if r is None or r in mapping:
            return None
        mapping[r] = manifest["name"]
    return mapping if len(mapping) >= 2 else None


def cmd_report(
    run_dirs,
    out_dir,
    use: str = "train",
    last_frac: float = 1.0,
) -> dict:
    """Fits + plot-data CSVs + (for A^r B families) optimal-r breakpoints.

    summary.json records the fitted constants per run and, for families,
    whether the qualitative pattern held: exponents rising with r, late-run
    loss falling with r. Flags are reported, never asserted.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    fits = cmd_fit(run_dirs, out_dir / "fits.json", use=use, last_frac=last_frac)

    all_points: dict[str, list[tuple[float, float]]] = {}
    for rd in run_dirs:
        rd = Path(rd)
        manifest = json.loads((rd / "manifest.json").read_text(encoding="utf-8"))
        pts = _trace_fit_points(rd, use, 1.0)
        all_points[manifest["name"]] = pts
        with open(out_dir / f"curve-{manifest['name']}.csv", "w",
                  encoding="utf-8", newline="") as f:
            w = csv.writer(f)
            w.writerow(["compute", "loss"])
            for x, y in pts:
                w.writerow([repr(x), repr(y)])

    summary: dict = {
        "fits": {name: fit_to_json(f) for name, f in fits.items()},
        "use": use,
        "last_frac": last_frac,
    }

    family_map = _family_from_manifests(run_dirs)
    if family_map:
        family = RCurveFamily(
            {r: fits[name] for r, name in family_map.items()}
        )
        rs = sorted(family_map)
        cs = [fits[family_map[r]].c for r in rs]
        betas = [fits[family_map[r]].beta for r in rs]
        final_losses = [all_points[family_map[r]][-1][1] for r in rs]
        summary["family"] = {str(r): family_map[r] for r in rs}
        summary["pattern"] = {
            "c_increases_with_r": all(b > a for a, b in zip(cs, cs[1:])),
            "beta_increases_with_r": all(b > a for a, b in zip(betas, betas[1:])),
            "final_loss_decreases_with_r": all(
                b < a for a, b in zip(final_losses, final_losses[1:])
            ),
        }
        x_lo = min(f.fit_x_min for f in family.fits.values())
        x_hi = max(f.fit_x_max for f in family.fits.values())
        grid = np.geomspace(max(x_lo, 1e-12), x_hi, 512)
        result = optimal_r(family, grid)
        write_breakpoints_csv(out_dir / "breakpoints.csv", result)
        summary["breakpoints"] = [[x, r] for x, r in result.breakpoints]
        summary["optimal_r_extrapolated"] = bool(result.any_extrapolation)

    _write_json_atomic(out_dir / "summary.json", summary)
    return summary


# ---------------------------------------------------------------------- eval


def cmd_eval(
    checkpoint_path,
    tasks_path,
    rounds_list: Optional[list[int]] = None,
    out_path=None,
    score_full: bool = False,
) -> list[dict]:
    """Zero-shot MCQ accuracy of a checkpoint, per requested round count."""
    from .corpus import ByteTokenizer
    from .evals import eval_mcq, read_task_jsonl, write_results_jsonl

    ckpt_path = Path(checkpoint_path)
    if not ckpt_path.exists():
        raise ConfigError(f"checkpoint not found: {ckpt_path}")
    tasks_path = Path(tasks_path)
    if not tasks_path.exists():
        raise ConfigError(f"task file not found: {tasks_path}")

    ckpt = load_checkpoint(ckpt_path)
    sig = parse_tagged(ckpt.signature)
    model = RecursiveModel(
        ckpt.dims, expand(sig), ckpt.policy, dtype=np.dtype(ckpt.dtype)
    )
    tok = ByteTokenizer()
    if ckpt.dims.vocab < tok.vocab_size:
        raise ConfigError(
            f"checkpoint vocab {ckpt.dims.vocab} cannot score byte-tokenized "
            f"text (needs >= {tok.vocab_size})"
        )
    items = read_task_jsonl(tasks_path)
    if rounds_list is None:
        rounds_list = [None]  # model default
    rows = []
    for r in rounds_list:
        result = eval_mcq(model, ckpt.params, tok, items, rounds=r, score_full=score_full)
        rows.append(
            {
                "task": tasks_path.stem,
                "rounds": r if r is not None else (ckpt.policy.inference_rounds or ckpt.policy.r_max),
                "accuracy": result.accuracy,
                "n_items": result.n_items,
            }
        )
    if out_path is not None:
        write_results_jsonl(out_path, rows)
    return rows
