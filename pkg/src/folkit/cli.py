"""Single command-line entry point for all pipelines.

Exit codes: 0 success, 2 usage error, 3 input data error, 4 endpoint error.
Every run logs its resolved configuration so outputs are reproducible.
"""

from __future__ import annotations

import json
import logging
import random
import sys
from multiprocessing import Pool
from pathlib import Path

import click

from . import __version__
from .collect import (
    EndpointUnavailable,
    HttpGenerator,
    InsufficientCorpus,
    NgramGate,
    ReplayGenerator,
    run_collection,
)
from .fol import print_canonical
from .forge import (
    GoldUnparseableRow,
    bin_scores,
    corpus_stats,
    forge_records,
    load_pairs,
)
from .metrics import GoldUnparseable, RewardConfig, reward_detail
from .parser import FolSyntaxError, validate
from .parser import parse as parse_fol
from .perturb import (
    PerturbConfig,
    render_fix_steps,
    sample_perturbation,
    step_to_dict,
)
from .session import SessionConfig, run_batch

log = logging.getLogger("folkit")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_ENDPOINT = 4


class DataError(click.ClickException):
    exit_code = EXIT_DATA


class EndpointError(click.ClickException):
    exit_code = EXIT_ENDPOINT


def _setup_logging(verbose: bool) -> None:
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )


def _log_config(command: str, **options) -> None:
    log.info("run config: %s", json.dumps({"command": command, **options}, default=str, sort_keys=True))


def _read_lines(path: str) -> list[str]:
    """One FOL per line; JSONL rows may carry the rule under 'fol' or 'FOL'."""
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("{"):
            row = {k.lower(): v for k, v in json.loads(line).items()}
            out.append(row["fol"])
        else:
            out.append(line)
    return out


@click.group()
@click.version_option(__version__)
@click.option("--verbose", is_flag=True, help="Debug logging.")
@click.pass_context
def main(ctx, verbose):
    """FOL toolkit: parse, score, perturb, forge, collect, correct."""
    ctx.ensure_object(dict)
    _setup_logging(verbose)


# ---------------------------------------------------------------------------


@main.command("validate")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", type=click.Path(), default=None, help="Optional JSONL verdict report.")
@click.option("--dry-run", is_flag=True)
def validate_cmd(in_path, out_path, dry_run):
    """Check every rule in a file against the grammar."""
    _log_config("validate", in_path=in_path, out_path=out_path, dry_run=dry_run)
    rules = _read_lines(in_path)
    if dry_run:
        click.echo(f"dry-run: {len(rules)} rules to check")
        return
    verdicts = [(text, validate(text)) for text in rules]
    n_valid = sum(1 for _, v in verdicts if v)
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            for text, v in verdicts:
                fh.write(json.dumps({"fol": text, "valid": v.valid, "reason": v.reason}, ensure_ascii=False) + "\n")
    click.echo(f"checked {len(rules)} rules: {n_valid} valid, {len(rules) - n_valid} invalid")


# ---------------------------------------------------------------------------


def _score_one(args: tuple[str, str, float, int]) -> dict:
    gold, pred, omega, max_atoms = args
    detail = reward_detail(gold, pred, RewardConfig(omega=omega, max_atoms=max_atoms))
    row = {
        "gold": gold,
        "pred": pred,
        "le": detail.le,
        "bleu": detail.bleu,
        "reward": detail.reward,
    }
    if detail.binding is not None:
        row["binding"] = [list(p) for p in detail.binding.pairs]
    return row


def _load_pairs_for_scoring(gold, pred, pairs):
    if pairs:
        rows = []
        for line in Path(pairs).read_text(encoding="utf-8").splitlines():
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if line.lstrip().startswith("{"):
                row = {k.lower(): v for k, v in json.loads(line).items()}
                rows.append((row["gold"], row["pred"]))
            else:
                g, p = line.split("\t", 1)
                rows.append((g, p))
        return rows
    golds = _read_lines(gold)
    preds = _read_lines(pred)
    if len(golds) != len(preds):
        raise DataError(f"gold has {len(golds)} rules, pred has {len(preds)}")
    return list(zip(golds, preds))


@main.command("score")
@click.option("--gold", type=click.Path(exists=True), help="Gold rules, one per line.")
@click.option("--pred", type=click.Path(exists=True), help="Predicted rules, line-aligned with --gold.")
@click.option("--pairs", type=click.Path(exists=True), help="Alternatively: TSV or JSONL (gold, pred) pairs.")
@click.option("--omega", default=0.7, show_default=True)
@click.option("--max-atoms", default=16, show_default=True)
@click.option("--workers", default=1, show_default=True)
@click.option("--out", "out_path", type=click.Path(), default=None)
@click.option("--dry-run", is_flag=True)
def score_cmd(gold, pred, pairs, omega, max_atoms, workers, out_path, dry_run):
    """Score (gold, pred) pairs: LE, BLEU, mixed reward, and the binding used."""
    if not pairs and not (gold and pred):
        raise click.UsageError("provide --pairs or both --gold and --pred")
    _log_config("score", gold=gold, pred=pred, pairs=pairs, omega=omega,
                max_atoms=max_atoms, workers=workers, out_path=out_path, dry_run=dry_run)
    rows = _load_pairs_for_scoring(gold, pred, pairs)
    if dry_run:
        click.echo(f"dry-run: {len(rows)} pairs to score")
        return
    work = [(g, p, omega, max_atoms) for g, p in rows]
    try:
        if workers > 1:
            with Pool(workers) as pool:
                results = pool.map(_score_one, work)
        else:
            results = [_score_one(w) for w in work]
    except GoldUnparseable as exc:
        raise DataError(f"gold rule does not parse: {exc}")
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            for row in results:
                fh.write(json.dumps(row, ensure_ascii=False) + "\n")
    if results:
        mean = lambda key: sum(r[key] for r in results) / len(results)  # noqa: E731
        for row in results:
            click.echo(f"LE {row['le']:.4f}  BLEU {row['bleu']:.4f}  reward {row['reward']:.4f}")
        click.echo(
            f"corpus means over {len(results)} pairs: "
            f"LE {mean('le'):.4f}  BLEU {mean('bleu'):.4f}  reward {mean('reward'):.4f}"
        )


# ---------------------------------------------------------------------------


@main.command("perturb")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", type=click.Path(), default=None)
@click.option("--n-perturb", default="0,1,2,3,4,5,6,7,8,9,10", show_default=True)
@click.option("--n-correct", default="0,1,2,3", show_default=True)
@click.option("--negative-prob", default=0.2, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--dry-run", is_flag=True)
def perturb_cmd(in_path, out_path, n_perturb, n_correct, negative_prob, seed, dry_run):
    """Emit one perturbation record per input rule."""
    config = PerturbConfig(
        n_perturb_choices=tuple(int(x) for x in n_perturb.split(",")),
        n_correct_choices=tuple(int(x) for x in n_correct.split(",")),
        negative_prob=negative_prob,
        seed=seed,
    )
    _log_config("perturb", in_path=in_path, out_path=out_path, config=config, dry_run=dry_run)
    texts = _read_lines(in_path)
    rules = []
    for i, text in enumerate(texts):
        try:
            rules.append(parse_fol(text))
        except FolSyntaxError as exc:
            raise DataError(f"rule {i} does not parse: {exc}")
    if dry_run:
        click.echo(f"dry-run: {len(rules)} rules to perturb")
        return
    out_fh = open(out_path, "w", encoding="utf-8") if out_path else sys.stdout
    try:
        for i, rule in enumerate(rules):
            rng = random.Random(f"{seed}:{i}")
            perturbed, steps = sample_perturbation(rule, config, rng)
            texts_rendered = render_fix_steps(perturbed, steps)
            record = {
                "original": print_canonical(rule),
                "perturbed": print_canonical(perturbed),
                "steps_to_fix": [step_to_dict(s, t) for s, t in zip(steps, texts_rendered)],
            }
            out_fh.write(json.dumps(record, ensure_ascii=False) + "\n")
    finally:
        if out_path:
            out_fh.close()
    if out_path:
        click.echo(f"wrote {len(rules)} perturbation records to {out_path}")


# ---------------------------------------------------------------------------


@main.command("forge")
@click.option("--task", type=click.Choice(["t1", "t2", "t3"]), required=True)
@click.option("--count", required=True, type=int)
@click.option("--seed", default=0, show_default=True)
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--predictions", type=click.Path(exists=True), default=None,
              help="T2: model predictions, one per line, aligned with the input pairs.")
@click.option("--negative-prob", default=0.2, show_default=True)
@click.option("--dry-run", is_flag=True)
def forge_cmd(task, count, seed, in_path, out_path, predictions, negative_prob, dry_run):
    """Forge training records from (NL, FOL) pairs."""
    config = PerturbConfig(negative_prob=negative_prob, seed=seed)
    _log_config("forge", task=task, count=count, seed=seed, in_path=in_path,
                out_path=out_path, predictions=predictions, dry_run=dry_run)
    pairs = load_pairs(in_path)
    if not pairs:
        raise DataError(f"no pairs in {in_path}")
    preds = None
    if predictions:
        preds = [l.strip() for l in Path(predictions).read_text(encoding="utf-8").splitlines()]
    if dry_run:
        click.echo(f"dry-run: would forge {count} {task} records from {len(pairs)} pairs")
        return
    try:
        stream = forge_records(pairs, task, count, config, preds)
        n = 0
        with open(out_path, "w", encoding="utf-8") as fh:
            for rec in stream:
                fh.write(json.dumps(rec.to_dict(), ensure_ascii=False) + "\n")
                n += 1
    except GoldUnparseableRow as exc:
        raise DataError(str(exc))
    click.echo(f"forged {n} {task} records to {out_path}")


# ---------------------------------------------------------------------------


@main.command("stats")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", type=click.Path(), default=None)
@click.option("--top-terms", default=40, show_default=True)
@click.option("--top-pairs", default=200, show_default=True)
@click.option("--dry-run", is_flag=True)
def stats_cmd(in_path, out_path, top_terms, top_pairs, dry_run):
    """Corpus statistics over an (NL, FOL) pairs file."""
    _log_config("stats", in_path=in_path, out_path=out_path, dry_run=dry_run)
    pairs = load_pairs(in_path)
    if dry_run:
        click.echo(f"dry-run: {len(pairs)} pairs to analyze")
        return
    stats = corpus_stats(pairs, top_terms, top_pairs)
    payload = json.dumps(stats.to_dict(), ensure_ascii=False, indent=2)
    if out_path:
        Path(out_path).write_text(payload + "\n", encoding="utf-8")
    click.echo(
        f"pairs {stats.pair_count} (unparsed {stats.unparsed_count})  "
        f"NL vocab {stats.nl_vocab_size}  avg words {stats.nl_avg_words:.1f}  "
        f"avg literals {stats.fol_avg_literals:.2f}"
    )
    click.echo("operators: " + "  ".join(f"{op} {c}" for op, c in stats.operator_counts.items()))


# ---------------------------------------------------------------------------


@main.command("bins")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True),
              help="JSONL rows of score columns.")
@click.option("--edges", required=True, help="Comma-separated, strictly decreasing from 1.0.")
@click.option("--group-key", default="gpt_le", show_default=True)
@click.option("--out", "out_path", type=click.Path(), default=None)
@click.option("--dry-run", is_flag=True)
def bins_cmd(in_path, edges, group_key, out_path, dry_run):
    """Per-bin score means grouped by one score column."""
    _log_config("bins", in_path=in_path, edges=edges, group_key=group_key, dry_run=dry_run)
    edge_list = [float(x) for x in edges.split(",")]
    rows = [json.loads(l) for l in Path(in_path).read_text(encoding="utf-8").splitlines() if l.strip()]
    if dry_run:
        click.echo(f"dry-run: {len(rows)} rows, {len(edge_list) - 1} bins")
        return
    try:
        result = bin_scores(rows, edge_list, group_key)
    except (ValueError, KeyError) as exc:
        raise DataError(str(exc))
    payload = json.dumps(result, indent=2)
    if out_path:
        Path(out_path).write_text(payload + "\n", encoding="utf-8")
    click.echo(payload)


# ---------------------------------------------------------------------------


@main.command("collect")
@click.option("--target", required=True, type=int)
@click.option("--endpoint", default=None, help="Chat-completions base URL.")
@click.option("--model", default="gpt-4", show_default=True)
@click.option("--replay", type=click.Path(exists=True), default=None,
              help="Canned responses JSONL; replaces the endpoint.")
@click.option("--bootstrap", required=True, type=click.Path(exists=True),
              help="Initial (NL, FOL) pairs for few-shot sampling.")
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--align-threshold", default=0.5, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--max-calls", default=None, type=int)
@click.option("--dry-run", is_flag=True)
def collect_cmd(target, endpoint, model, replay, bootstrap, out_dir, align_threshold, seed, max_calls, dry_run):
    """Collect NL-FOL pairs from a generator endpoint or a replay file."""
    if not replay and not endpoint:
        raise click.UsageError("provide --endpoint or --replay")
    _log_config("collect", target=target, endpoint=endpoint, replay=replay, bootstrap=bootstrap,
                out_dir=out_dir, align_threshold=align_threshold, seed=seed,
                max_calls=max_calls, dry_run=dry_run)
    pairs = load_pairs(bootstrap)
    if dry_run:
        click.echo(f"dry-run: target {target}, bootstrap corpus of {len(pairs)}")
        return
    generator = ReplayGenerator(replay) if replay else HttpGenerator(endpoint, model)
    try:
        result = run_collection(
            generator, target, out_dir, pairs, random.Random(seed),
            align_threshold=align_threshold, max_calls=max_calls,
        )
    except InsufficientCorpus as exc:
        raise DataError(str(exc))
    except EndpointUnavailable as exc:
        raise EndpointError(str(exc))
    click.echo(
        f"accepted {result.accepted}  rejected {result.rejected}  "
        f"calls {result.calls}  stopped: {result.stopped}"
    )


# ---------------------------------------------------------------------------


@main.command("correct")
@click.option("--nl-fol-pred", "in_path", required=True, type=click.Path(exists=True),
              help="JSONL rows {nl, pred, gold?}.")
@click.option("--gold", "gold_path", type=click.Path(exists=True), default=None,
              help="Optional gold rules, one per line, aligned with the rows.")
@click.option("--endpoint", default=None)
@click.option("--model", default="gpt-4", show_default=True)
@click.option("--replay", type=click.Path(exists=True), default=None)
@click.option("--max-generations", default=10, show_default=True)
@click.option("--omega", default=0.7, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--dry-run", is_flag=True)
def correct_cmd(in_path, gold_path, endpoint, model, replay, max_generations, omega, out_path, dry_run):
    """Run iterative correction sessions and stream experience tuples."""
    if not replay and not endpoint:
        raise click.UsageError("provide --endpoint or --replay")
    _log_config("correct", in_path=in_path, gold_path=gold_path, endpoint=endpoint,
                replay=replay, max_generations=max_generations, out_path=out_path, dry_run=dry_run)
    rows = [json.loads(l) for l in Path(in_path).read_text(encoding="utf-8").splitlines() if l.strip()]
    if gold_path:
        golds = _read_lines(gold_path)
        if len(golds) != len(rows):
            raise DataError(f"{len(golds)} gold rules for {len(rows)} rows")
        for row, g in zip(rows, golds):
            row["gold"] = g
    if dry_run:
        click.echo(f"dry-run: {len(rows)} sessions to run")
        return
    generator = ReplayGenerator(replay) if replay else HttpGenerator(endpoint, model)
    config = SessionConfig(max_generations=max_generations, reward=RewardConfig(omega=omega))
    try:
        summary = run_batch(rows, generator, out_path, config)
    except EndpointUnavailable as exc:
        raise EndpointError(str(exc))
    click.echo(
        f"sessions {summary['sessions']}  failed {summary['failed']}  "
        f"experiences {summary['experiences']} -> {out_path}"
    )


if __name__ == "__main__":
    main()
