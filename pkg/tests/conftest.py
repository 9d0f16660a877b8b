import numpy as np
import pytest

import rinslab as rl

# Filled by test_acceptance.py; printed after the run so each criterion's
# verdict survives output capture.
ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[n]
        verdict = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"[criterion {n:02d}] {verdict}: {detail}")


@pytest.fixture
def tiny_dims():
    # Small enough for finite differences, big enough to exercise heads.
    return rl.ModelDims(
        d_model=8, n_heads=2, mlp_dim=16, vocab=11, seq_len=5, total_layers=4
    )


@pytest.fixture
def small_dims():
    return rl.ModelDims(
        d_model=32, n_heads=2, mlp_dim=64, vocab=65, seq_len=32, total_layers=4
    )


@pytest.fixture
def grammar_docs():
    spec = rl.default_grammar(seed=0)
    return rl.generate_corpus(spec, 20_000)


@pytest.fixture
def small_batches(grammar_docs, small_dims):
    return list(
        rl.pack_sequences(
            grammar_docs, small_dims.seq_len, 8, eos_id=small_dims.vocab - 1
        )
    )
