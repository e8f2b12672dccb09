"""Iterative correction sessions over a scripted generator."""

import json

import pytest

from folkit.collect import ScriptedGenerator
from folkit.forge import NO_CHANGES
from folkit.session import (
    RepairFailed,
    SessionConfig,
    SessionState,
    pre_repair,
    run_batch,
    run_session,
    step,
)

DONE = f"### Corrections:\n{NO_CHANGES}\n### FOL:\nP(A)"


def _correction(step_text, fol):
    return f"### Corrections:\n{step_text}\n### FOL:\n{fol}"


# ---------------------------------------------------------------------------
# pre-repair


def test_pre_repair_passes_valid_prediction_through():
    gen = ScriptedGenerator([])
    assert pre_repair("nl", "P(A)", gen) == "P(A)"
    assert gen.calls == []


def test_pre_repair_fixes_via_generator():
    gen = ScriptedGenerator(["### FOL:\nP(A)"])
    assert pre_repair("nl", "P(A", gen) == "P(A)"


def test_pre_repair_accepts_bare_fol_response():
    gen = ScriptedGenerator(["P(A)"])
    assert pre_repair("nl", "broken =", gen) == "P(A)"


def test_pre_repair_failure():
    gen = ScriptedGenerator(["still broken ="])
    with pytest.raises(RepairFailed):
        pre_repair("nl", "broken =", gen)


# ---------------------------------------------------------------------------
# single steps


def test_step_no_changes_stops():
    state = SessionState(nl="nl", fol_initial="P(A)", current_fol="P(A)")
    gen = ScriptedGenerator([DONE])
    t = step(state, gen, gold="P(A)")
    assert state.status == "done_no_changes"
    assert state.generation_index == 1
    assert t.reward == pytest.approx(1.0)
    assert t.prev_steps == []


def test_step_applies_correction_and_accumulates_steps():
    state = SessionState(nl="nl", fol_initial="Q(A)", current_fol="Q(A)")
    gen = ScriptedGenerator([_correction("Change the predicate 'Q' to 'P' in 'Q(A)'", "P(A)")])
    t = step(state, gen, gold="P(A)")
    assert state.current_fol == "P(A)"
    assert state.prev_steps == ["Change the predicate 'Q' to 'P' in 'Q(A)'"]
    assert t.corrected_fol == "P(A)"
    assert t.reward == pytest.approx(1.0)


def test_step_invalid_fol_keeps_previous_but_rewards_candidate():
    state = SessionState(nl="nl", fol_initial="Q(A)", current_fol="Q(A)")
    gen = ScriptedGenerator([_correction("some step", "broken =")])
    t = step(state, gen, gold="P(A)")
    assert state.current_fol == "Q(A)"
    assert state.violations == 1
    assert t.corrected_fol == "broken ="
    assert t.reward == 0.0


def test_step_over_length_output_stops():
    state = SessionState(nl="nl", fol_initial="Q(A)", current_fol="Q(A)")
    long_tail = " ".join(["word"] * 300)
    gen = ScriptedGenerator([_correction("a step", "Q(A)") + "\n" + long_tail])
    step(state, gen, config=SessionConfig(max_output_tokens=256))
    assert state.status == "done_limit"


def test_step_refuses_finished_session():
    state = SessionState(nl="nl", fol_initial="P(A)", status="done_no_changes")
    with pytest.raises(RuntimeError):
        step(state, ScriptedGenerator([DONE]))


# ---------------------------------------------------------------------------
# full sessions


def test_run_session_terminates_on_generation_cap():
    forever = _correction("another tweak", "Q(A)")
    gen = ScriptedGenerator([forever], cycle_last=True)
    final, tuples, state = run_session("nl", "Q(A)", gen, gold="P(A)")
    assert state.status == "done_limit"
    assert state.generation_index == 10
    assert len(tuples) == 10


def test_run_session_no_changes_first_generation():
    gen = ScriptedGenerator([DONE])
    final, tuples, state = run_session("nl", "P(A)", gen, gold="P(A)")
    assert state.status == "done_no_changes"
    assert len(tuples) == 1
    assert final == "P(A)"


def test_run_session_repair_failure_yields_no_tuples():
    gen = ScriptedGenerator(["nope ="])
    final, tuples, state = run_session("nl", "broken =", gen)
    assert final is None and tuples == [] and state.status == "failed"


def test_run_session_prev_steps_snapshot_precedes_extension():
    responses = [
        _correction("first fix", "Q(A)"),
        DONE,
    ]
    gen = ScriptedGenerator(responses)
    _, tuples, _ = run_session("nl", "Q(A)", gen, gold="P(A)")
    assert tuples[0].prev_steps == []
    assert tuples[1].prev_steps == ["first fix"]


def test_session_prompt_carries_previous_steps():
    responses = [
        _correction("first fix", "Q(A)"),
        DONE,
    ]
    gen = ScriptedGenerator(responses)
    run_session("nl", "Q(A)", gen)
    assert "### Previous steps:\nNone" in gen.calls[0][1]
    assert "### Previous steps:\nfirst fix" in gen.calls[1][1]


# ---------------------------------------------------------------------------
# batch


def test_run_batch_streams_experience(tmp_path):
    out = tmp_path / "experience.jsonl"
    gen = ScriptedGenerator([DONE, DONE])
    rows = [
        {"nl": "a", "pred": "P(A)", "gold": "P(A)"},
        {"nl": "b", "pred": "P(A)"},
    ]
    summary = run_batch(rows, gen, out)
    assert summary == {"sessions": 2, "failed": 0, "experiences": 2}
    lines = [json.loads(l) for l in out.read_text().splitlines()]
    assert lines[0]["reward"] == pytest.approx(1.0)
    assert lines[1]["reward"] is None
