"""Iterative CoT-correction sessions: the environment + reward harness.

A session repeatedly asks a generator for correction steps over an initial
FOL prediction, accumulating steps across generations, stopping on
"No changes needed" or on the generation/output-length limits, and emitting
a reward-scored experience tuple per generation.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .collect import Generator
from .forge import (
    CORR_MARKER,
    FOL_MARKER,
    NL_MARKER,
    CorrectionRecord,
    MalformedOutput,
    format_prompt,
    parse_correction_output,
)
from .metrics import RewardConfig, reward
from .parser import validate

log = logging.getLogger(__name__)

SESSION_SYSTEM_PROMPT = (
    "You correct first-order logic translations of natural language statements. "
    f"Respond with a '{CORR_MARKER}' section listing at most a few correction "
    f"steps (or 'No changes needed') followed by a '{FOL_MARKER}' section with "
    "the corrected rule."
)


class RepairFailed(Exception):
    """The initial prediction could not be repaired into parseable FOL."""


@dataclass(frozen=True)
class SessionConfig:
    max_generations: int = 10
    max_output_tokens: int = 256  # whitespace tokens per generation
    reward: RewardConfig = RewardConfig()


@dataclass
class SessionState:
    nl: str
    fol_initial: str
    prev_steps: list[str] = field(default_factory=list)
    current_fol: str = ""
    generation_index: int = 0
    status: str = "running"  # running | done_no_changes | done_limit | failed
    violations: int = 0


@dataclass
class ExperienceTuple:
    corrected_fol: str
    nl: str
    prev_steps: list[str]
    fol_initial: str
    reward: float | None = None

    def to_dict(self) -> dict:
        return {
            "corrected_fol": self.corrected_fol,
            "nl": self.nl,
            "prev_steps": self.prev_steps,
            "fol_initial": self.fol_initial,
            "reward": self.reward,
        }


def _t3_input(state: SessionState) -> str:
    record = CorrectionRecord(
        nl=state.nl,
        fol_gold="",
        fol_input=state.fol_initial,
        prev_steps=[{"text": t} for t in state.prev_steps],
    )
    input_text, _ = format_prompt(record, "t3")
    return input_text


def pre_repair(nl: str, fol_pred: str, generator: Generator) -> str:
    """Return a parseable FOL for the prediction, asking the generator for a
    one-shot naive repair when the raw prediction does not parse."""
    if validate(fol_pred):
        return fol_pred
    prompt = f"{NL_MARKER}\n{nl}\n{FOL_MARKER}\n{fol_pred}"
    response = generator.generate(SESSION_SYSTEM_PROMPT, prompt)
    try:
        parsed = parse_correction_output(response)
        candidate = parsed.fol
    except MalformedOutput:
        candidate = response.strip()
    if candidate and validate(candidate):
        return candidate
    raise RepairFailed(f"prediction not repairable: {fol_pred!r}")


def step(
    state: SessionState,
    generator: Generator,
    gold: str | None = None,
    config: SessionConfig = SessionConfig(),
) -> ExperienceTuple:
    """Run one generation; mutates the state and returns the experience tuple."""
    if state.status != "running":
        raise RuntimeError(f"session is {state.status}")
    prev_snapshot = list(state.prev_steps)
    output = generator.generate(SESSION_SYSTEM_PROMPT, _t3_input(state))
    state.generation_index += 1
    over_limit = len(output.split()) > config.max_output_tokens

    candidate = state.current_fol
    try:
        parsed = parse_correction_output(output)
        if parsed.no_changes:
            state.status = "done_no_changes"
        else:
            if parsed.steps:
                state.prev_steps.extend(parsed.steps)
            if parsed.fol is not None:
                candidate = parsed.fol
                if validate(parsed.fol):
                    state.current_fol = parsed.fol
                else:
                    state.violations += 1
                    log.warning("generation %d produced unparseable FOL", state.generation_index)
    except MalformedOutput:
        state.violations += 1
        log.warning("generation %d output malformed", state.generation_index)

    if state.status == "running" and (over_limit or state.generation_index >= config.max_generations):
        state.status = "done_limit"

    r = reward(gold, candidate, config.reward) if gold is not None else None
    return ExperienceTuple(candidate, state.nl, prev_snapshot, state.fol_initial, r)


def run_session(
    nl: str,
    fol_pred: str,
    generator: Generator,
    gold: str | None = None,
    config: SessionConfig = SessionConfig(),
) -> tuple[str | None, list[ExperienceTuple], SessionState]:
    """Pre-repair then iterate generations until the session stops.

    Returns the final corrected FOL (None when repair failed), the
    per-generation experience tuples, and the final state.
    """
    try:
        fol0 = pre_repair(nl, fol_pred, generator)
    except RepairFailed:
        state = SessionState(nl=nl, fol_initial=fol_pred, status="failed")
        return None, [], state

    state = SessionState(nl=nl, fol_initial=fol0, current_fol=fol0)
    tuples: list[ExperienceTuple] = []
    while state.status == "running":
        tuples.append(step(state, generator, gold, config))
    return state.current_fol, tuples, state


def run_batch(
    rows: Iterable[dict],
    generator: Generator,
    out_path: str | Path,
    config: SessionConfig = SessionConfig(),
) -> dict:
    """Run sessions over rows {nl, pred, gold?} and stream experience JSONL."""
    sessions = 0
    failed = 0
    experiences = 0
    with open(out_path, "w", encoding="utf-8") as fh:
        for row in rows:
            sessions += 1
            final, tuples, state = run_session(
                row["nl"], row["pred"], generator, row.get("gold"), config
            )
            if state.status == "failed":
                failed += 1
            for t in tuples:
                fh.write(json.dumps(t.to_dict(), ensure_ascii=False) + "\n")
                experiences += 1
    return {"sessions": sessions, "failed": failed, "experiences": experiences}