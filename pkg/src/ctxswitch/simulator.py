"""Cycle-level execution with interrupt-driven drain to checkpoints."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Sequence

from .circuit import Circuit
from .codec import MachineState, decode_context, encode_context
from .expr import compile_expr
from .planner import CheckpointPlan, PlanError, verify_plan

DEFAULT_BUDGET = 1_000_000

Output = tuple[str, int]


class SimulationError(RuntimeError):
    pass


class InputUnderrun(SimulationError):
    pass


class HaltedError(SimulationError):
    pass


class Outcome(str, Enum):
    COMPLETED = "completed"
    CHECKPOINTED = "checkpointed"
    BUDGET_EXHAUSTED = "budget_exhausted"


class InterruptPolicy:
    """Never asserts. Subclasses answer whether the interrupt line is high."""

    def asserted(self, cycle: int) -> bool:
        return False


NO_INTERRUPT = InterruptPolicy()


@dataclass(frozen=True)
class AtCycle(InterruptPolicy):
    """Assert at the top of ``cycle`` (0-indexed, relative to the run)."""

    cycle: int

    def asserted(self, cycle: int) -> bool:
        return cycle >= self.cycle


@dataclass(frozen=True)
class ExternalFlag(InterruptPolicy):
    """Sample a caller-supplied query once per cycle."""

    poll: Callable[[], bool]

    def asserted(self, cycle: int) -> bool:
        return bool(self.poll())


@dataclass
class RunOutcome:
    kind: Outcome
    outputs: list[Output]
    cycles_executed: int
    state: MachineState
    context: Optional[bytes] = None
    drain_cycles: Optional[int] = None


@dataclass
class _CompiledState:
    reads: list[tuple[str, int]]
    assigns: list[tuple[str, Callable, int]]
    emits: list[tuple[str, Callable, int]]
    guards: list[tuple[Optional[Callable], str]]
    halt: bool


def _mask(width: int) -> int:
    return (1 << width) - 1


def _compile(c: Circuit) -> dict[str, _CompiledState]:
    hit = c.__dict__.get("_compiled")
    if hit is not None:
        return hit
    regs = {r.id: _mask(r.width) for r in c.registers}
    ins = {p.id: _mask(p.width) for p in c.input_ports}
    outs = {p.id: _mask(p.width) for p in c.output_ports}
    table = {}
    for s in c.states:
        table[s.id] = _CompiledState(
            reads=[(port, ins[port]) for port in s.input_reads],
            assigns=[(a.target, compile_expr(a.expr), regs[a.target]) for a in s.assignments],
            emits=[(e.port, compile_expr(e.expr), outs[e.port]) for e in s.emissions],
            guards=[(None if t.guard is None else compile_expr(t.guard), t.target) for t in s.transitions],
            halt=s.halt,
        )
    c.__dict__["_compiled"] = table
    return table


def init_state(c: Circuit) -> MachineState:
    return MachineState(c.initial, {r.id: 0 for r in c.registers}, 0, 0)


def _exec(cs: _CompiledState, regs: dict[str, int], inputs: Sequence[int], cursor: int,
          out: list[Output]) -> tuple[str, int]:
    """Execute one state body in place; returns (next state, new cursor)."""
    if cs.reads:
        if cursor + len(cs.reads) > len(inputs):
            raise InputUnderrun(f"input stream exhausted at position {len(inputs)}")
        env = dict(regs)
        for port, mask in cs.reads:
            env[port] = inputs[cursor] & mask
            cursor += 1
    else:
        env = regs
    for port, fn, mask in cs.emits:
        out.append((port, fn(env) & mask))
    nxt = None
    for guard, target in cs.guards:
        if guard is None or guard(env):
            nxt = target
            break
    if cs.assigns:
        new = [(reg, fn(env) & mask) for reg, fn, mask in cs.assigns]
        for reg, value in new:
            regs[reg] = value
    return nxt, cursor


def step(c: Circuit, m: MachineState, inputs: Sequence[int]) -> tuple[MachineState, list[Output]]:
    """One clock cycle: the body of ``m.current_state`` and its transition."""
    cs = _compile(c)[m.current_state]
    if cs.halt:
        raise HaltedError(f"state {m.current_state!r} is a halt state")
    regs = dict(m.registers)
    out: list[Output] = []
    nxt, cursor = _exec(cs, regs, inputs, m.input_cursor, out)
    return MachineState(nxt, regs, cursor, m.output_count + len(out)), out


def run(
    c: Circuit,
    p: CheckpointPlan,
    m: MachineState,
    inputs: Sequence[int],
    budget: int = DEFAULT_BUDGET,
    policy: InterruptPolicy = NO_INTERRUPT,
) -> RunOutcome:
    """Execute until halt, checkpoint capture after an interrupt, or ``budget`` cycles.

    The interrupt is sampled at the top of every cycle. Once asserted, the
    machine keeps running until it sits at the top of a checkpoint state,
    where the context is captured before that state's body executes.
    """
    problems = verify_plan(c, p)
    if problems:
        raise PlanError("; ".join(str(d) for d in problems))
    table = _compile(c)
    checkpoints = set(p.checkpoints)
    regs = dict(m.registers)
    state, cursor = m.current_state, m.input_cursor
    out: list[Output] = []
    asserted_at: Optional[int] = None
    cycle = 0

    def snapshot() -> MachineState:
        return MachineState(state, dict(regs), cursor, m.output_count + len(out))

    while True:
        cs = table[state]
        if cs.halt:
            return RunOutcome(Outcome.COMPLETED, out, cycle, snapshot())
        if asserted_at is None and policy.asserted(cycle):
            asserted_at = cycle
        if asserted_at is not None and state in checkpoints:
            ms = snapshot()
            return RunOutcome(Outcome.CHECKPOINTED, out, cycle, ms,
                              context=encode_context(c, p, ms), drain_cycles=cycle - asserted_at)
        if cycle >= budget:
            return RunOutcome(Outcome.BUDGET_EXHAUSTED, out, cycle, snapshot())
        state, cursor = _exec(cs, regs, inputs, cursor, out)
        cycle += 1


def resume(
    c: Circuit,
    p: CheckpointPlan,
    image: bytes,
    inputs: Sequence[int],
    budget: int = DEFAULT_BUDGET,
    policy: InterruptPolicy = NO_INTERRUPT,
) -> RunOutcome:
    """Continue from a context image; ``inputs`` is the full original stream."""
    m = decode_context(image, c, p)
    if m.input_cursor > len(inputs):
        raise InputUnderrun(f"context cursor {m.input_cursor} lies beyond a stream of {len(inputs)} values")
    return run(c, p, m, inputs, budget, policy)


# -- stream files -------------------------------------------------------------------


def parse_input_vec(text: str) -> list[int]:
    values = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if not line.isdigit():
            raise ValueError(f"input.vec line {lineno}: expected an unsigned decimal, got {line!r}")
        values.append(int(line))
    return values


def format_input_vec(values: Sequence[int]) -> str:
    return "".join(f"{v}\n" for v in values)


def format_outputs(outputs: Sequence[Output]) -> str:
    return "".join(f"{port} {value}\n" for port, value in outputs)


def parse_outputs(text: str) -> list[Output]:
    result = []
    for line in text.splitlines():
        if line.strip():
            port, value = line.split()
            result.append((port, int(value)))
    return result
