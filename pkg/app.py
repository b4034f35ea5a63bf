"""
app.py - ReentryScope command-line front end

    python app.py analyze --hex-file attacker.hex --fixtures fixtures/case/ --out report.json
    python app.py analyze --address 0x... --rpc https://node.example --record fixtures/case/
    python app.py batch inputs.txt --fixtures fixtures/corpus/ --jobs 4 --out results/

Exit status: 0 benign, 2 attacker finding(s), 1 operational error.
"""
import argparse
import json
import logging
import sys
from pathlib import Path

from pydantic import ValidationError

from core.analysis_config import DEPTH_LIMIT, FANOUT_CAP, RPC_URL_ENV
from core.errors import ReentryScopeError
from engine.detector import format_report_text
from services.analysis_pipeline import AnalysisInput, AnalysisPipeline, RunConfig
from services.batch_service import (
    EXIT_ATTACKER,
    EXIT_BENIGN,
    EXIT_ERROR,
    BatchService,
    exit_code_for,
    read_batch_list,
)

logger = logging.getLogger("reentryscope")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="reentryscope",
        description="Identify reentrancy attacker contracts from EVM bytecode.",
    )
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    commands = parser.add_subparsers(dest="command", required=True)

    def add_shared(sub):
        sub.add_argument("--fixtures", metavar="DIR", help="offline chain state directory")
        sub.add_argument("--rpc", metavar="URL", help=f"JSON-RPC endpoint (default: ${RPC_URL_ENV})")
        sub.add_argument("--record", metavar="DIR", help="write every RPC fetch as fixtures")
        sub.add_argument("--depth", type=int, default=DEPTH_LIMIT, help="call-chain depth limit")
        sub.add_argument("--fanout", type=int, default=FANOUT_CAP, help="callee candidates per call site")
        sub.add_argument("--hooks", metavar="PATH", help="extra hook registry file")
        sub.add_argument("--emit-xgraph", action="store_true", help="include the call graph in reports")
        sub.add_argument("--creation", action="store_true", help="hex inputs are creation bytecode")
        sub.add_argument("--verbose", action="store_true", default=argparse.SUPPRESS, help="debug logging")

    analyze = commands.add_parser("analyze", help="analyze one contract")
    source = analyze.add_mutually_exclusive_group(required=True)
    source.add_argument("--hex", help="runtime bytecode as hex text")
    source.add_argument("--hex-file", metavar="PATH", help="file holding bytecode")
    source.add_argument("--address", help="contract address, fetched from the backend")
    analyze.add_argument("--out", metavar="PATH", help="report JSON path (default: <entry>.json in the working directory)")
    add_shared(analyze)

    batch = commands.add_parser("batch", help="analyze every input of a list file")
    batch.add_argument("list_file", metavar="LIST_FILE")
    batch.add_argument("--jobs", type=int, default=1, help="parallel workers")
    batch.add_argument("--out", metavar="DIR", default="reentryscope_results", help="output folder")
    add_shared(batch)

    return parser


def configure_logging(verbose):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def report_error(kind, message):
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    return EXIT_ERROR


def run_config(args, **extra):
    return RunConfig.with_environment(
        fixtures=args.fixtures,
        rpc_url=args.rpc,
        record=args.record,
        depth_limit=args.depth,
        fanout_cap=args.fanout,
        hooks=args.hooks,
        emit_xgraph=args.emit_xgraph,
        **extra,
    )


def input_from_args(args):
    if args.hex is not None:
        return AnalysisInput(kind="hex", value=args.hex, creation=args.creation)
    if args.hex_file is not None:
        return AnalysisInput(kind="hex-file", value=args.hex_file, creation=args.creation)
    return AnalysisInput(kind="address", value=args.address)


def run_analyze(args, session=None):
    config = run_config(args, input=input_from_args(args), output=args.out)
    pipeline = AnalysisPipeline(config, session=session)
    report, model = pipeline.run(config.input, output=config.output)
    if config.output is None:
        pipeline.storage.save_report(Path(f"{report.entry.hex}.json"), model)

    print(format_report_text(report))
    return EXIT_ATTACKER if report.is_attacker else EXIT_BENIGN


def run_batch(args, session=None):
    config = run_config(args, jobs=args.jobs, output=args.out)
    items = read_batch_list(args.list_file, creation=args.creation)
    pipeline = AnalysisPipeline(config, session=session)
    results = BatchService(pipeline, config.output, config.jobs).run(items)

    summary = BatchService.summarize(results)
    verdicts = summary["verdicts"]
    print(
        f"ITEMS: {summary['items']}  ATTACKER: {verdicts['attacker']}  "
        f"BENIGN: {verdicts['benign']}  ERROR: {verdicts['error']}"
    )
    return exit_code_for(results)


def main(argv=None, session=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(getattr(args, "verbose", False))

    try:
        if args.command == "analyze":
            return run_analyze(args, session)
        return run_batch(args, session)
    except ValidationError as e:
        messages = "; ".join(err["msg"] for err in e.errors())
        return report_error("input-error", messages)
    except ReentryScopeError as e:
        return report_error(e.kind, str(e))
    except OSError as e:
        return report_error("io-error", str(e))
    except Exception as e:
        logger.exception("✗ Unexpected failure")
        return report_error("internal-error", str(e))


if __name__ == "__main__":
    sys.exit(main())
