"""Command-line entry point.

Subcommands: validate, build, chat, serve, test regression/conversation,
ingest extract/split. The bundled legal-firm fixture is used when
--manifest/--responses are not given, so `firmbot chat` works out of the box.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import fixture_path
from .dialog import Engine
from .errors import FirmbotError
from .fulfillment import Fulfillment, SinkConfig
from .harness import (
    http_factory,
    in_process_factory,
    load_regression_cases,
    load_scripts,
    render_report,
    run_conversation,
    run_regression,
)
from .ingest import extract_enquiries, load_curation, split_by_baseline, write_split_outputs
from .model import compile_hierarchy, load_manifest
from .nlu import bot_content_hash, build_all_models
from .responses import load_responses, validate_coverage


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="firmbot", description=__doc__)
    parser.add_argument("--manifest", type=Path, default=None, help="bot manifest JSON (default: bundled fixture)")
    parser.add_argument("--responses", type=Path, default=None, help="response table CSV (default: bundled fixture)")
    parser.add_argument("--format", choices=["text_table", "csv", "json"], default="text_table")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("validate", help="load and validate the manifest and response table")

    p_build = sub.add_parser("build", help="compile the hierarchy and build classifier models")
    p_build.add_argument("--out", type=Path, default=None, help="write the model cache JSON here")

    sub.add_parser("chat", help="interactive terminal session")

    p_serve = sub.add_parser("serve", help="run the HTTP service")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8080)
    p_serve.add_argument("--ttl", type=float, default=1800.0, help="idle session TTL in seconds")
    p_serve.add_argument("--lead-file", type=Path, default=None, help="append leads to this JSON-lines file")
    p_serve.add_argument("--transcript-file", type=Path, default=None, help="append transcripts to this JSON-lines file")
    p_serve.add_argument("--admin-token", default=None, help="require this X-Admin-Token for admin endpoints")

    p_test = sub.add_parser("test", help="run the automated test harness")
    test_sub = p_test.add_subparsers(dest="test_command", required=True)
    p_reg = test_sub.add_parser("regression", help="classify labeled utterances and report accuracy")
    p_reg.add_argument("cases", type=Path, help="regression CSV (index,utterance,expected_bot,expected_intent)")
    p_conv = test_sub.add_parser("conversation", help="replay scripted conversations")
    p_conv.add_argument("scripts", type=Path, help="directory of script JSON files")
    p_conv.add_argument("--base-url", default=None, help="run over HTTP against this service instead of in-process")
    p_conv.add_argument("--admin-token", default=None)

    p_ingest = sub.add_parser("ingest", help="data curation pipeline")
    ingest_sub = p_ingest.add_subparsers(dest="ingest_command", required=True)
    p_ext = ingest_sub.add_parser("extract", help="extract enquiry message bodies grouped by service")
    p_ext.add_argument("input_dir", type=Path)
    p_ext.add_argument("--out", type=Path, default=Path("extracted"))
    p_split = ingest_sub.add_parser("split", help="split kept curation rows into training and regression sets")
    p_split.add_argument("curation", type=Path, help="curation CSV (utterance,label,verdict,destination)")
    p_split.add_argument("--out", type=Path, default=Path("split"))

    return parser


def _load(args) -> tuple:
    manifest = load_manifest(args.manifest or fixture_path("legal_firm.json"))
    compile_hierarchy(manifest)
    responses = load_responses(args.responses or fixture_path("responses.csv"))
    validate_coverage(responses, manifest)
    return manifest, responses


def cmd_validate(args) -> int:
    manifest, responses = _load(args)
    bots = len(manifest.bots)
    intents = sum(len(b.intents) for b in manifest.bots)
    utterances = sum(len(b.training_utterances()) for b in manifest.bots)
    print(f"OK: {bots} bots, {intents} intents, {utterances} training utterances (compiled), "
          f"{len(responses.rows)} response rows")
    return 0


def cmd_build(args) -> int:
    manifest, _ = _load(args)
    models = build_all_models(manifest)
    for bot in manifest.bots:
        model = models[bot.name]
        print(f"{bot.name}: {len(model.exemplars)} exemplars, vocabulary {len(model.vocabulary)}, "
              f"hash {bot_content_hash(bot)[:12]}")
    if args.out:
        import json

        args.out.write_text(
            json.dumps({name: m.to_dict() for name, m in models.items()}, ensure_ascii=False),
            encoding="utf-8",
        )
        print(f"model cache written to {args.out}")
    return 0


def cmd_chat(args) -> int:
    manifest, responses = _load(args)
    engine = Engine(manifest, responses, fulfillment=Fulfillment(SinkConfig(lead_sink="stdout")))
    state = engine.start_session()
    print("firmbot ready; Ctrl-D to leave.")
    while True:
        try:
            text = input("you> ")
        except EOFError:
            print()
            return 0
        if not text.strip():
            continue
        state, response = engine.handle_turn(state, text)
        for message in response.messages:
            print(f"bot> {message}")
        if response.buttons:
            print("     [" + " | ".join(value for _, value in response.buttons) + "]")


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    manifest, responses = _load(args)
    sink = SinkConfig(
        lead_sink="file" if args.lead_file else "stdout",
        lead_path=args.lead_file,
        transcript_path=args.transcript_file,
    )
    engine = Engine(manifest, responses, fulfillment=Fulfillment(sink))
    app = create_app(engine, ttl_seconds=args.ttl, admin_token=args.admin_token)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_test_regression(args) -> int:
    manifest, _ = _load(args)
    models = build_all_models(manifest)
    report = run_regression(manifest, models, load_regression_cases(args.cases))
    print(render_report(report, args.format))
    return 0 if report.all_passed else 1


def cmd_test_conversation(args) -> int:
    scripts = load_scripts(args.scripts)
    if args.base_url:
        factory = http_factory(args.base_url, args.admin_token)
    else:
        manifest, responses = _load(args)
        factory = in_process_factory(Engine(manifest, responses))
    report = run_conversation(factory, scripts)
    print(render_report(report, args.format))
    return 0 if report.all_passed else 1


def cmd_ingest_extract(args) -> int:
    records, errors = extract_enquiries(args.input_dir, args.out)
    services = sorted({r.service for r in records})
    print(f"extracted {len(records)} enquiries into {len(services)} service files under {args.out}")
    for error in errors:
        print(f"skipped: {error}", file=sys.stderr)
    return 0 if not errors else 1


def cmd_ingest_split(args) -> int:
    manifest, _ = _load(args)
    models = build_all_models(manifest)
    items = load_curation(args.curation)
    kept = [i for i in items if i.verdict == "kept"]
    training, regression = split_by_baseline(kept, manifest, models)
    training_path, regression_path = write_split_outputs(training, regression, manifest, args.out)
    discarded = sum(1 for i in items if i.verdict.startswith("discarded"))
    print(f"collected={len(items)} discarded={discarded} "
          f"regression={len(regression)} training={len(training)}")
    print(f"wrote {training_path} and {regression_path}")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            return cmd_validate(args)
        if args.command == "build":
            return cmd_build(args)
        if args.command == "chat":
            return cmd_chat(args)
        if args.command == "serve":
            return cmd_serve(args)
        if args.command == "test":
            if args.test_command == "regression":
                return cmd_test_regression(args)
            return cmd_test_conversation(args)
        if args.command == "ingest":
            if args.ingest_command == "extract":
                return cmd_ingest_extract(args)
            return cmd_ingest_split(args)
    except FirmbotError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
