"""Logical-equivalence scoring, FOL BLEU, and the mixed reward.

LE treats the distinct atoms of each rule as boolean inputs to a circuit,
aligns the two input lists with a greedy edit-distance binding (padded with
dummies when the counts differ), and scores the fraction of truth-table
rows on which the two circuits agree, maximized over the bindings explored.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field

from .fol import (
    AND,
    IFF,
    IMPLIES,
    OR,
    XOR,
    Atom,
    BinaryOp,
    FolRule,
    FormulaNode,
    Group,
    Literal,
    Negation,
    atoms,
    tokens,
)
from .parser import FolSyntaxError, parse

log = logging.getLogger(__name__)


class TooManyAtoms(Exception):
    """Combined atom count exceeds the truth-table cap."""


class GoldUnparseable(Exception):
    """The reference side of a reward computation failed to parse."""


@dataclass(frozen=True)
class RewardConfig:
    omega: float = 0.7  # LE weight in the mixed reward
    max_atoms: int = 16  # truth-table cap: 2^16 rows
    search_cap: int = 1000  # max candidate bindings explored

    def __post_init__(self):
        if not 0.0 <= self.omega <= 1.0:
            raise ValueError("omega must be in [0, 1]")
        if self.max_atoms < 1:
            raise ValueError("max_atoms must be >= 1")


@dataclass(frozen=True)
class Binding:
    """One-to-one pairing of atom indices; None marks a dummy partner."""

    pairs: tuple[tuple[int | None, int | None], ...]
    arity: int
    cost: int = 0  # summed edit distance of the real pairings, for tie-breaks

    def describe(self, p: list[Atom], q: list[Atom]) -> list[str]:
        out = []
        for pi, qi in self.pairs:
            left = p[pi].canonical_text if pi is not None else "DUMMY"
            right = q[qi].canonical_text if qi is not None else "DUMMY"
            out.append(f"{left} ↔ {right}")
        return out


@dataclass(frozen=True)
class LeResult:
    score: float
    binding: Binding
    rows_total: int
    rows_matched: int


# ---------------------------------------------------------------------------
# edit distance and greedy binding search

_VAR_PLACEHOLDER = "·"


def _masked_text(atom: Atom) -> str:
    # variable names carry no meaning across rules; mask them before comparing
    from .fol import is_variable

    args = [_VAR_PLACEHOLDER if is_variable(a) else a for a in atom.args]
    return f"{atom.predicate}({', '.join(args)})"


def levenshtein(a: str, b: str) -> int:
    if a == b:
        return 0
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def bind_atoms(p: list[Atom], q: list[Atom], search_cap: int = 1000) -> list[Binding]:
    """Candidate bindings, greedy-preferred first.

    Iterates the first list in order, pairing each atom with its unclaimed
    minimum-edit-distance partner; alternatives (including dummy pairing when
    the lists differ in length) are explored depth-first until search_cap
    bindings have been produced.
    """
    n_p, n_q = len(p), len(q)
    arity = max(n_p, n_q)
    dummies = max(0, n_p - n_q)
    dist = [[levenshtein(_masked_text(pa), _masked_text(qa)) for qa in q] for pa in p]

    results: list[Binding] = []

    def search(i: int, claimed: set[int], dummies_left: int, acc: list[tuple[int | None, int | None]]):
        if len(results) >= search_cap:
            return
        if i == n_p:
            leftover = [(None, j) for j in range(n_q) if j not in claimed]
            cost = sum(dist[pi][qi] for pi, qi in acc if pi is not None and qi is not None)
            results.append(Binding(tuple(acc + leftover), arity, cost))
            return
        choices: list[int | None] = sorted(
            (j for j in range(n_q) if j not in claimed), key=lambda j: dist[i][j]
        )
        if dummies_left > 0:
            choices.append(None)  # dummy pairing, tried after all real partners
        for j in choices:
            if len(results) >= search_cap:
                return
            if j is None:
                search(i + 1, claimed, dummies_left - 1, acc + [(i, None)])
            else:
                claimed.add(j)
                search(i + 1, claimed, dummies_left, acc + [(i, j)])
                claimed.discard(j)

    search(0, set(), dummies, [])
    return results


# ---------------------------------------------------------------------------
# truth-table evaluation


def _compile(node: FormulaNode, index: dict[str, int]):
    """Compile a body into a closure over a tuple of atom truth values."""
    if isinstance(node, Literal):
        k = index[Atom(node.predicate, node.args).canonical_text]
        if node.negated:
            return lambda v: not v[k]
        return lambda v: v[k]
    if isinstance(node, (Negation, Group)):
        child = _compile(node.child, index)
        if isinstance(node, Negation):
            return lambda v: not child(v)
        return child
    left = _compile(node.left, index)
    right = _compile(node.right, index)
    op = node.op
    if op == AND:
        return lambda v: left(v) and right(v)
    if op == OR:
        return lambda v: left(v) or right(v)
    if op == XOR:
        return lambda v: left(v) != right(v)
    if op == IMPLIES:
        return lambda v: (not left(v)) or right(v)
    if op == IFF:
        return lambda v: left(v) == right(v)
    raise ValueError(f"unknown operator {op!r}")


def _evaluator(rule: FolRule, atom_list: list[Atom]):
    index = {a.canonical_text: i for i, a in enumerate(atom_list)}
    return _compile(rule.body, index)


def le_score(
    gold: FolRule | str, pred: FolRule | str, config: RewardConfig = RewardConfig()
) -> LeResult:
    """Best truth-table overlap ratio over the explored bindings.

    Quantifier prefixes do not enter the computation: the score is a
    propositional comparison of the two bodies over their bound atoms.
    """
    if isinstance(gold, str):
        gold = parse(gold)
    if isinstance(pred, str):
        pred = parse(pred)
    p = atoms(gold)
    q = atoms(pred)
    arity = max(len(p), len(q))
    if arity > config.max_atoms:
        raise TooManyAtoms(f"{arity} atoms exceeds cap of {config.max_atoms}")

    eval_p = _evaluator(gold, p)
    eval_q = _evaluator(pred, q)
    rows_total = 1 << arity

    best: LeResult | None = None
    for binding in bind_atoms(p, q, config.search_cap):
        matched = 0
        for row in range(rows_total):
            bits = [(row >> k) & 1 == 1 for k in range(arity)]
            p_vals = [False] * len(p)
            q_vals = [False] * len(q)
            for k, (pi, qi) in enumerate(binding.pairs):
                if pi is not None:
                    p_vals[pi] = bits[k]
                if qi is not None:
                    q_vals[qi] = bits[k]
            if eval_p(p_vals) == eval_q(q_vals):
                matched += 1
        if (
            best is None
            or matched > best.rows_matched
            or (matched == best.rows_matched and binding.cost < best.binding.cost)
        ):
            best = LeResult(matched / rows_total, binding, rows_total, matched)
            if matched == rows_total:
                break
    assert best is not None
    return best


# ---------------------------------------------------------------------------
# FOL BLEU


def fol_tokenize(text: str) -> list[str]:
    """Parse-tree leaves in pre-order; raises FolSyntaxError on bad input."""
    return tokens(parse(text))


def _bleu_from_tokens(ref: list[str], hyp: list[str], max_n: int = 4) -> float:
    if not hyp:
        return 0.0
    log_sum = 0.0
    used = 0
    for n in range(1, min(max_n, len(hyp)) + 1):
        hyp_counts = Counter(tuple(hyp[i : i + n]) for i in range(len(hyp) - n + 1))
        ref_counts = Counter(tuple(ref[i : i + n]) for i in range(len(ref) - n + 1))
        clipped = sum(min(c, ref_counts[g]) for g, c in hyp_counts.items())
        total = len(hyp) - n + 1
        if clipped == 0:
            # add-one smoothing on zero n-gram counts
            clipped, total = 1, total + 1
        log_sum += math.log(clipped / total)
        used += 1
    precision = math.exp(log_sum / used)
    brevity = 1.0 if len(hyp) >= len(ref) else math.exp(1.0 - len(ref) / len(hyp))
    return brevity * precision


def fol_bleu(gold: str, pred: str) -> float:
    """BLEU over FOL tokens; an unparseable prediction scores 0."""
    ref = fol_tokenize(gold)
    try:
        hyp = fol_tokenize(pred)
    except FolSyntaxError:
        return 0.0
    return _bleu_from_tokens(ref, hyp)


# ---------------------------------------------------------------------------
# mixed reward


def mix(le: float, bleu: float, omega: float = 0.7) -> float:
    return omega * le + (1.0 - omega) * bleu


@dataclass
class RewardBreakdown:
    reward: float
    le: float
    bleu: float
    binding: Binding | None = None
    notes: list[str] = field(default_factory=list)


def reward_detail(gold: str, pred: str, config: RewardConfig = RewardConfig()) -> RewardBreakdown:
    try:
        gold_rule = parse(gold)
    except FolSyntaxError as exc:
        raise GoldUnparseable(str(exc)) from exc
    try:
        pred_rule = parse(pred)
    except FolSyntaxError:
        return RewardBreakdown(0.0, 0.0, 0.0, notes=["prediction unparseable"])

    binding = None
    try:
        le_res = le_score(gold_rule, pred_rule, config)
        le = le_res.score
        binding = le_res.binding
        notes = []
    except TooManyAtoms as exc:
        log.warning("LE skipped: %s", exc)
        le, notes = 0.0, [f"LE skipped: {exc}"]
    bleu = fol_bleu(gold, pred)
    return RewardBreakdown(mix(le, bleu, config.omega), le, bleu, binding, notes)


def reward(gold: str, pred: str, config: RewardConfig = RewardConfig()) -> float:
    """omega * LE + (1 - omega) * BLEU; 0 when the prediction does not parse."""
    return reward_detail(gold, pred, config).reward
