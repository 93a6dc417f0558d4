"""Command-line front end.

Exit codes: 0 ok, 1 verification mismatch, 2 parse error, 3 plan or digest
error, 4 storage error, 5 unknown job.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import orchestrator as orch
from .circuit import CircuitError, load_circuit, worst_case_drain
from .codec import DEFAULT_NODES, BitOrder, NodeDescriptor
from .planner import Mode, PlanError, dump_plan, load_plan, plan_checkpoints, verify_plan
from .simulator import parse_input_vec

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_PARSE = 2
EXIT_PLAN = 3
EXIT_STORAGE = 4
EXIT_UNKNOWN_JOB = 5


class _Fail(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _load_circuit(path: str):
    try:
        return load_circuit(path)
    except CircuitError as exc:
        raise _Fail(EXIT_PARSE, f"{path}:{exc}") from None
    except OSError as exc:
        raise _Fail(EXIT_PARSE, f"{path}: {exc.strerror}") from None


def _fmt_drain(v) -> str:
    return "unbounded" if v == float("inf") else str(int(v))


def cmd_compile(args) -> int:
    c = _load_circuit(args.circuit)
    try:
        plan = plan_checkpoints(c, args.latency, Mode(args.mode))
    except PlanError as exc:
        raise _Fail(EXIT_PLAN, str(exc)) from None
    problems = verify_plan(c, plan)
    if problems:
        raise _Fail(EXIT_PLAN, "; ".join(map(str, problems)))
    out = Path(args.output) if args.output else Path(args.circuit).with_suffix(".plan.json")
    out.write_text(dump_plan(plan), encoding="utf-8")
    drain = worst_case_drain(c, plan.checkpoints)
    if args.json:
        report = {
            "plan_file": str(out),
            "checkpoints": list(plan.checkpoints),
            **plan.overhead.as_dict(),
            "drain": {s: _fmt_drain(v) for s, v in drain.items()},
        }
        print(json.dumps(report, indent=2))
    else:
        o = plan.overhead
        print(f"circuit {c.name}  L={plan.latency_bound}  mode={args.mode}")
        print(f"checkpoints: {', '.join(plan.checkpoints) or '(none)'}")
        print(f"union_bits={o.union_bits} state_bits={o.state_bits} "
              f"max_context_bits={o.max_context_bits} checkpoint_count={o.checkpoint_count}")
        for s in c.states:
            live = ",".join(plan.live[s.id]) if s.id in plan.live else ""
            mark = "*" if s.id in plan.live else " "
            print(f"  {mark} {s.id:<12} drain={_fmt_drain(drain[s.id]):<9} {live}")
        print(f"plan written to {out}")
    return EXIT_OK


def cmd_submit(args) -> int:
    c = _load_circuit(args.circuit)
    try:
        plan = load_plan(args.plan)
    except (PlanError, OSError) as exc:
        raise _Fail(EXIT_PLAN, f"{args.plan}: {exc}") from None
    try:
        inputs = parse_input_vec(Path(args.inputs).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise _Fail(EXIT_PARSE, f"{args.inputs}: {exc}") from None
    archs = args.accept or orch.ANY
    job_id = orch.submit_job(args.root, c, plan, inputs, job_id=args.job_id,
                             accepted_archs=archs, deterministic_interrupt=args.interrupt_at)
    print(job_id)
    return EXIT_OK


def _descriptor(args) -> NodeDescriptor:
    base = DEFAULT_NODES.get(args.arch, NodeDescriptor(args.arch))
    bits = args.word_bits or base.scan_word_bits
    order = BitOrder(args.bit_order) if args.bit_order else base.bit_order
    return NodeDescriptor(args.arch, bits, order, str(args.root))


def cmd_node(args) -> int:
    node = _descriptor(args)
    if args.daemon:
        try:
            orch.node_daemon(args.root, node, poll_period=args.poll_ms / 1000.0, max_polls=args.max_polls)
        except KeyboardInterrupt:
            pass
        return EXIT_OK
    print(orch.node_once(args.root, node))
    return EXIT_OK


def cmd_interrupt(args) -> int:
    orch.request_interrupt(args.root, args.job)
    print(f"interrupt requested for {args.job}")
    return EXIT_OK


def cmd_status(args) -> int:
    print(orch.job_status(args.root, args.job))
    return EXIT_OK


def cmd_verify(args) -> int:
    inputs = None
    if args.inputs:
        inputs = parse_input_vec(Path(args.inputs).read_text(encoding="utf-8"))
    if orch.verify_job(args.root, args.job, inputs):
        print("ok: result.out matches the uninterrupted run")
        return EXIT_OK
    print("MISMATCH: result.out differs from the uninterrupted run (or is missing)")
    return EXIT_MISMATCH


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ctxswitch", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compile", help="select checkpoints and write a plan file")
    p.add_argument("circuit")
    p.add_argument("--latency", type=int, required=True)
    p.add_argument("--mode", choices=[m.value for m in Mode], default="exact")
    p.add_argument("-o", "--output")
    p.add_argument("--json", action="store_true", help="machine-readable report")
    p.set_defaults(func=cmd_compile)

    def add_root(p):
        p.add_argument("--root", required=True, type=Path)

    p = sub.add_parser("submit", help="place a job in shared storage")
    add_root(p)
    p.add_argument("circuit")
    p.add_argument("plan")
    p.add_argument("inputs")
    p.add_argument("--job-id")
    p.add_argument("--interrupt-at", type=int)
    p.add_argument("--accept", action="append", metavar="ARCH")
    p.set_defaults(func=cmd_submit)

    p = sub.add_parser("node", help="run a node daemon")
    add_root(p)
    p.add_argument("--arch", required=True)
    p.add_argument("--word-bits", type=int, choices=(8, 16, 32, 64))
    order = p.add_mutually_exclusive_group()
    order.add_argument("--lsb-first", dest="bit_order", action="store_const", const="lsb-first")
    order.add_argument("--msb-first", dest="bit_order", action="store_const", const="msb-first")
    loop = p.add_mutually_exclusive_group()
    loop.add_argument("--once", action="store_true", default=True)
    loop.add_argument("--daemon", action="store_true")
    p.add_argument("--poll-ms", type=int, default=50)
    p.add_argument("--max-polls", type=int, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_node)

    for name, func, text in (
        ("interrupt", cmd_interrupt, "ask the running node to checkpoint"),
        ("status", cmd_status, "show a job's lifecycle state"),
        ("verify", cmd_verify, "compare result.out with an uninterrupted run"),
    ):
        p = sub.add_parser(name, help=text)
        add_root(p)
        p.add_argument("job")
        if name == "verify":
            p.add_argument("--inputs", help="reference input.vec (defaults to the job's)")
        p.set_defaults(func=func)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except _Fail as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except orch.UnknownJob as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNKNOWN_JOB
    except orch.InvalidPlan as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PLAN
    except (orch.OrchestratorError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STORAGE


if __name__ == "__main__":
    sys.exit(main())
