"""Command-line entry point: rule validation, training sweeps, statistics,
pair detection, counting calculators, transcript replay and the HTTP server.

Exit codes: 0 success, 1 runtime failure, 2 usage/validation error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import engine, harness, stats
from .agents import AgentKind
from .rules import RuleParseError, canonical_form, parse_rule, rule_size, validate

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


def _load_rule(path: str):
    text = Path(path).read_text(encoding="utf-8")
    return parse_rule(text)


def cmd_validate(args) -> int:
    try:
        rule = _load_rule(args.rule_file)
    except RuleParseError as err:
        print(f"parse error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as err:
        print(f"cannot read rule file: {err}", file=sys.stderr)
        return EXIT_USAGE
    params = engine.EpisodeParams(L=args.length, Kmin=args.kmin, Kmax=args.kmax, C=args.colors)
    report = validate(rule, params)
    size = rule_size(rule)
    print(f"canonical: {canonical_form(rule)}")
    print(f"history class: {report.history_class.value}")
    print(
        f"size: terms={size.term_count} codebook={size.codebook_count}"
        f" bytes={size.canonical_bytes}"
    )
    if report.failure_blind:
        print("failure-blind: certified (the language cannot reference rejected attempts)")
    for warning in report.warnings:
        print(f"warning: {warning}")
    for error in report.errors:
        print(f"error: {error}")
    print("ok" if report.ok else "invalid")
    return EXIT_OK if report.ok else EXIT_USAGE


def cmd_train(args) -> int:
    try:
        config = harness.load_config(args.config) if args.config else harness.ExperimentConfig()
    except (OSError, ValueError) as err:
        print(f"bad config: {err}", file=sys.stderr)
        return EXIT_USAGE
    try:
        rule = _load_rule(args.rule)
    except (OSError, RuleParseError) as err:
        print(f"bad rule: {err}", file=sys.stderr)
        return EXIT_USAGE
    if args.agent:
        config = harness.with_agent_kind(config, AgentKind(args.agent))
    episodes = args.episodes or config.episodes
    seeds = list(range(1, (args.seeds or config.seed_count) + 1))
    store = None
    if args.record:
        from .transcripts import TranscriptStore

        store = TranscriptStore(args.record)
    curves = harness.run_training(
        rule,
        config.agent,
        config.params,
        episodes,
        seeds,
        rule_id=args.rule_id or Path(args.rule).stem,
        store=store,
    )
    Path(args.out).write_text(harness.curves_to_csv(curves), encoding="utf-8")
    print(f"wrote {sum(len(c.records) for c in curves)} episode rows to {args.out}")
    if store is not None:
        for curve in curves:
            print(f"recorded session {curve.session_id} (seed {curve.seed})")
    return EXIT_OK


def _read_single_learner_table(path: str) -> tuple[str, stats.DifficultyTable]:
    table = harness.difficulty_from_csv(Path(path).read_text(encoding="utf-8"))
    learners = table.learners()
    if len(learners) != 1:
        raise ValueError(f"{path}: expected one learner per file, found {learners}")
    return learners[0], table


def cmd_pairs(args) -> int:
    try:
        learner_x, table_x = _read_single_learner_table(args.x)
        learner_y, table_y = _read_single_learner_table(args.y)
    except (OSError, ValueError) as err:
        print(f"bad difficulty input: {err}", file=sys.stderr)
        return EXIT_USAGE
    if learner_x == learner_y:
        learner_x, learner_y = f"{learner_x}:x", f"{learner_y}:y"
        table_x.samples = {(r, learner_x): v for (r, _), v in table_x.samples.items()}
        table_y.samples = {(r, learner_y): v for (r, _), v in table_y.samples.items()}
    shared = sorted(set(table_x.rules()) & set(table_y.rules()))
    if not shared:
        print("no rules shared between the two inputs", file=sys.stderr)
        return EXIT_USAGE
    merged = stats.DifficultyTable()
    for rule_id in shared:
        for value in table_x.sample(rule_id, learner_x):
            merged.add(rule_id, learner_x, value)
        for value in table_y.sample(rule_id, learner_y):
            merged.add(rule_id, learner_y, value)
    pairs = stats.detect_interesting_pairs(merged, learner_x, learner_y, alpha=args.alpha)
    Path(args.out).write_text(harness.pairs_to_csv(pairs), encoding="utf-8")
    print(f"found {len(pairs)} interesting pair(s); wrote {args.out}")
    return EXIT_OK


def cmd_transfer(args) -> int:
    try:
        config = harness.load_config(args.config) if args.config else harness.ExperimentConfig()
        rule_from = _load_rule(args.rule_from)
        rule_to = _load_rule(args.to)
    except (OSError, ValueError) as err:
        print(f"bad input: {err}", file=sys.stderr)
        return EXIT_USAGE
    seeds = list(range(1, (args.seeds or config.seed_count) + 1))
    index = harness.transfer_index(
        rule_from,
        rule_to,
        config.agent,
        config.params,
        args.phase1,
        seeds,
        episodes_phase2=args.phase2,
        window=config.criterion_window,
        max_errors=config.criterion_max_errors,
    )
    print(f"transfer index (median episodes saved): {index}")
    return EXIT_OK


def cmd_count(args) -> int:
    try:
        value = engine.count_initial_configs(args.L, args.K, args.C)
    except ValueError as err:
        print(str(err), file=sys.stderr)
        return EXIT_USAGE
    print(value)
    print(f"≈{engine.scientific(value)}")
    return EXIT_OK


def cmd_rulespace(args) -> int:
    try:
        value = engine.rule_space_upper_bound(args.L, args.C)
    except ValueError as err:
        print(str(err), file=sys.stderr)
        return EXIT_USAGE
    print(value)
    print(f"≈{engine.scientific(value)}")
    return EXIT_OK


def cmd_replay(args) -> int:
    from .transcripts import TranscriptStore

    failures = 0
    for file_path in args.session_files:
        path = Path(file_path)
        if not path.is_file():
            print(f"no such session file: {path}", file=sys.stderr)
            return EXIT_USAGE
        store = TranscriptStore(path.parent)
        report = store.replay(path.stem)
        print(
            f"{path.stem}: {len(report.divergences)} divergence(s)"
            f" over {report.attempts_checked} attempts"
        )
        for div in report.divergences:
            print(
                f"  episode {div.episode} attempt {div.attempt}:"
                f" recorded accepted={div.recorded_accepted},"
                f" recomputed accepted={div.recomputed_accepted}"
            )
        failures += len(report.divergences)
    return EXIT_OK if failures == 0 else EXIT_RUNTIME


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(
        data_dir=args.data_dir,
        rules_dir=args.rules_dir,
        app_dir=args.app_dir,
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rulegame", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="parse and validate a rule file")
    p.add_argument("rule_file")
    p.add_argument("--length", type=int, default=20, help="board length L")
    p.add_argument("--kmin", type=int, default=5)
    p.add_argument("--kmax", type=int, default=10)
    p.add_argument("--colors", type=int, default=4)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("train", help="train an agent and write a learning-curve CSV")
    p.add_argument("--config", help="experiment config file")
    p.add_argument("--rule", required=True, help="rule file")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--agent", choices=[k.value for k in AgentKind], help="override agent kind")
    p.add_argument("--episodes", type=int, help="override episode count")
    p.add_argument("--seeds", type=int, help="override seed count")
    p.add_argument("--rule-id", help="rule label in the CSV (default: file stem)")
    p.add_argument("--record", help="directory to record machine-session transcripts")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("pairs", help="detect interesting (crossing) rule pairs")
    p.add_argument("--x", required=True, help="difficulty or curve CSV for learner X")
    p.add_argument("--y", required=True, help="difficulty or curve CSV for learner Y")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--out", required=True, help="output pair-report CSV")
    p.set_defaults(func=cmd_pairs)

    p = sub.add_parser("transfer", help="measure transfer between two rules")
    p.add_argument("--config")
    p.add_argument("--from", dest="rule_from", required=True, help="pretraining rule file")
    p.add_argument("--to", required=True, help="target rule file")
    p.add_argument("--phase1", type=int, required=True, help="pretraining episodes")
    p.add_argument("--phase2", type=int, help="measurement episodes (default: phase1)")
    p.add_argument("--seeds", type=int)
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("count", help="count initial configurations C^K * binomial(L,K)")
    p.add_argument("L", type=int)
    p.add_argument("K", type=int)
    p.add_argument("C", type=int)
    p.set_defaults(func=cmd_count)

    p = sub.add_parser("rulespace", help="rule-space upper bound L! * 2^(C*L)")
    p.add_argument("L", type=int)
    p.add_argument("C", type=int)
    p.set_defaults(func=cmd_rulespace)

    p = sub.add_parser("replay", help="verify session transcripts against the engine")
    p.add_argument("session_files", nargs="+")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("serve", help="run the HTTP session service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8787)
    p.add_argument("--rules-dir", help="directory of .rule files exposed by id")
    p.add_argument("--data-dir", required=True, help="transcript storage directory")
    p.add_argument("--app-dir", help="static assets served at /app")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as err:  # noqa: BLE001 - CLI boundary
        print(f"error: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
