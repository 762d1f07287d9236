"""Command line surface: validate, compile, simulate, explore, serve.

Exit codes: 0 success, 1 validation or model failure, 2 usage errors
(argparse's own convention). Diagnostics go to stderr; results go to the
requested output file or stdout.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .compiler import compile_tree
from .content import parse_manifest, validate_tree
from .errors import PolicyError, SeqchartError
from .service import CourseLibrary, SessionStore, make_server
from .simulate import explore, parse_policy, run_session, serialize_trace
from .statechart import FAILED, PASSED, chart_to_doc
from .strategy import apply as apply_strategy
from .strategy import compose, parse_pipeline


def _write_out(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _load_tree(path: str):
    return parse_manifest(Path(path).read_text(encoding="utf-8"))


def _load_pipeline(path: str | None):
    if path is None:
        return []
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return parse_pipeline(doc)


def _compiled(manifest_path: str, strategy_path: str | None):
    tree = _load_tree(manifest_path)
    chart, cmap = compile_tree(tree)
    pipeline = _load_pipeline(strategy_path)
    if pipeline:
        chart = apply_strategy(compose(pipeline), chart, cmap)
    return tree, chart, cmap


def cmd_validate(args) -> int:
    tree = _load_tree(args.manifest)
    problems = validate_tree(tree)
    for problem in problems:
        print(problem, file=sys.stderr)
    return 1 if problems else 0


def cmd_compile(args) -> int:
    _tree, chart, cmap = _compiled(args.manifest, args.strategy)
    doc = {
        "chart": chart_to_doc(chart),
        "map": {
            "node_state": cmap.node_state,
            "unit_state": cmap.unit_state,
            "entry_of": cmap.entry_of,
            "exit_of": cmap.exit_of,
            "final_of": cmap.final_of,
            "global_final": cmap.global_final,
        },
    }
    _write_out(json.dumps(doc, indent=2) + "\n", args.output)
    return 0


def cmd_simulate(args) -> int:
    _tree, chart, _cmap = _compiled(args.manifest, args.strategy)
    policy = parse_policy(args.policy, seed=args.seed)
    trace = run_session(chart, policy, max_steps=args.max_steps)
    _write_out(serialize_trace(trace), args.output)
    print(f"{trace.status} after {trace.steps} steps", file=sys.stderr)
    return 0


def cmd_explore(args) -> int:
    _tree, chart, cmap = _compiled(args.manifest, args.strategy)
    alphabet = {PASSED, FAILED}
    if args.outcomes:
        alphabet = set(args.outcomes.split(","))
    report = explore(chart, alphabet, cmap=cmap, node_budget=args.node_budget)
    _write_out(json.dumps(report.to_doc(), indent=2) + "\n", args.output)
    return 0


def cmd_serve(args) -> int:
    port = args.port if args.port is not None else int(os.environ.get("SEQCHART_PORT", "8400"))
    content_dir = args.content_dir or os.environ.get("SEQCHART_CONTENT_DIR")
    snapshot_dir = args.snapshot_dir or os.environ.get("SEQCHART_SNAPSHOT_DIR")
    if not content_dir:
        print("serve needs --content-dir or SEQCHART_CONTENT_DIR", file=sys.stderr)
        return 2
    store = SessionStore(CourseLibrary(content_dir), snapshot_dir)
    report = store.recover()
    if report.recovered:
        print(f"recovered {len(report.recovered)} session(s)", file=sys.stderr)
    for sid, (line_no, msg) in report.quarantined.items():
        print(f"quarantined {sid}: line {line_no}: {msg}", file=sys.stderr)
    server = make_server(store, port, host=args.host)
    print(f"serving on {args.host}:{server.server_address[1]}", file=sys.stderr)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seqchart", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a manifest against the content model")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("compile", help="compile a manifest to a chart document")
    p.add_argument("manifest")
    p.add_argument("--strategy", help="strategy pipeline JSON file")
    p.add_argument("-o", "--output", help="output file (default stdout)")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("simulate", help="run one scripted learner session")
    p.add_argument("manifest")
    p.add_argument("--policy", required=True, help='e.g. "always-pass" or "bernoulli:p=0.5"')
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-steps", type=int, default=10_000)
    p.add_argument("--strategy", help="strategy pipeline JSON file")
    p.add_argument("-o", "--output", help="trace file (default stdout)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("explore", help="exhaustive reachability analysis")
    p.add_argument("manifest")
    p.add_argument("--strategy", help="strategy pipeline JSON file")
    p.add_argument("--outcomes", help="comma-separated outcome alphabet (default passed,failed)")
    p.add_argument("--node-budget", type=int, default=100_000)
    p.add_argument("-o", "--output", help="report file (default stdout)")
    p.set_defaults(func=cmd_explore)

    p = sub.add_parser("serve", help="host the session service")
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--content-dir")
    p.add_argument("--snapshot-dir")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except PolicyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SeqchartError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
