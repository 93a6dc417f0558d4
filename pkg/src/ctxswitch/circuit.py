"""Circuit model: FSM structure, parsing, validation and static analysis.

A circuit is a finite state machine with a datapath. Each visit to a state
reads its input ports, evaluates guards, assignments and emissions against
the register values held at the top of the cycle, applies the assignments
simultaneously and moves to the target of the first true guard.
"""
from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping, Optional

from .expr import Expr, ExprSyntaxError, names, parse_expr, render

MAX_WIDTH = 64
ELSE = "ELSE"
UNBOUNDED = math.inf

FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3


def fnv1a64(data: bytes) -> int:
    h = FNV64_OFFSET
    for b in data:
        h = ((h ^ b) * FNV64_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


@dataclass(frozen=True)
class Register:
    id: str
    width: int


@dataclass(frozen=True)
class Port:
    id: str
    width: int


@dataclass(frozen=True)
class Assignment:
    target: str
    expr: Expr


@dataclass(frozen=True)
class Emission:
    port: str
    expr: Expr


@dataclass(frozen=True)
class Transition:
    guard: Optional[Expr]  # None is the ELSE guard
    target: str

    @property
    def is_else(self) -> bool:
        return self.guard is None


@dataclass(frozen=True)
class StateDef:
    id: str
    input_reads: tuple[str, ...] = ()
    assignments: tuple[Assignment, ...] = ()
    emissions: tuple[Emission, ...] = ()
    transitions: tuple[Transition, ...] = ()
    halt: bool = False

    def uses(self) -> set[str]:
        """Every identifier read by guards, assignment sources and emissions."""
        used: set[str] = set()
        for t in self.transitions:
            if t.guard is not None:
                used |= names(t.guard)
        for a in self.assignments:
            used |= names(a.expr)
        for e in self.emissions:
            used |= names(e.expr)
        return used

    def defs(self) -> set[str]:
        return {a.target for a in self.assignments}

    @property
    def targets(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(t.target for t in self.transitions))


@dataclass(frozen=True)
class Circuit:
    name: str
    registers: tuple[Register, ...]
    input_ports: tuple[Port, ...]
    output_ports: tuple[Port, ...]
    states: tuple[StateDef, ...]
    initial: str

    @cached_property
    def state_map(self) -> dict[str, StateDef]:
        return {s.id: s for s in self.states}

    @cached_property
    def state_index(self) -> dict[str, int]:
        return {s.id: i for i, s in enumerate(self.states)}

    @cached_property
    def register_map(self) -> dict[str, Register]:
        return {r.id: r for r in self.registers}

    @cached_property
    def reachable(self) -> frozenset[str]:
        """States reachable from the initial state along any transition."""
        if self.initial not in self.state_map:
            return frozenset()
        seen = {self.initial}
        queue = deque([self.initial])
        while queue:
            for t in self.state_map[queue.popleft()].targets:
                if t in self.state_map and t not in seen:
                    seen.add(t)
                    queue.append(t)
        return frozenset(seen)

    @cached_property
    def liveness(self) -> dict[str, frozenset[str]]:
        return live_registers(self)

    @cached_property
    def digest(self) -> int:
        return circuit_hash(self)


LivenessMap = Mapping[str, frozenset]


class CircuitError(ValueError):
    """Raised by :func:`parse_circuit`; ``position`` locates the problem."""

    def __init__(self, message: str, position: str = ""):
        super().__init__(f"{position}: {message}" if position else message)
        self.message = message
        self.position = position


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    code: str
    message: str
    where: str = ""

    def __str__(self) -> str:
        loc = f" [{self.where}]" if self.where else ""
        return f"{self.severity}: {self.message}{loc}"


# -- parsing -----------------------------------------------------------------


def _require(obj: Mapping, key: str, kind, where: str):
    if key not in obj:
        raise CircuitError(f"missing field {key!r}", where)
    value = obj[key]
    if not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
        raise CircuitError(f"field {key!r} has wrong type", where)
    return value


def _expr(text, where: str) -> Expr:
    if not isinstance(text, str):
        raise CircuitError("expression must be a string", where)
    try:
        return parse_expr(text)
    except ExprSyntaxError as exc:
        raise CircuitError(f"syntax error: {exc}", where) from None


def _decl_list(doc: Mapping, key: str, cls):
    items = doc.get(key, [])
    if not isinstance(items, list):
        raise CircuitError(f"field {key!r} must be a list", key)
    out = []
    for i, item in enumerate(items):
        where = f"{key}[{i}]"
        if not isinstance(item, dict):
            raise CircuitError("expected an object", where)
        out.append(cls(_require(item, "id", str, where), _require(item, "width", int, where)))
    return tuple(out)


def _state(item, where: str) -> StateDef:
    if not isinstance(item, dict):
        raise CircuitError("expected an object", where)
    reads = item.get("input_reads", [])
    if not isinstance(reads, list) or not all(isinstance(r, str) for r in reads):
        raise CircuitError("input_reads must be a list of port ids", where)
    assignments = []
    for j, a in enumerate(item.get("assignments", [])):
        w = f"{where}.assignments[{j}]"
        if not isinstance(a, dict):
            raise CircuitError("expected an object", w)
        assignments.append(Assignment(_require(a, "target", str, w), _expr(a.get("expr"), w)))
    emissions = []
    for j, e in enumerate(item.get("emissions", [])):
        w = f"{where}.emissions[{j}]"
        if not isinstance(e, dict):
            raise CircuitError("expected an object", w)
        emissions.append(Emission(_require(e, "port", str, w), _expr(e.get("expr"), w)))
    transitions = []
    for j, t in enumerate(item.get("transitions", [])):
        w = f"{where}.transitions[{j}]"
        if not isinstance(t, dict):
            raise CircuitError("expected an object", w)
        guard = t.get("guard")
        target = _require(t, "target", str, w)
        transitions.append(Transition(None if guard == ELSE else _expr(guard, w), target))
    halt = item.get("halt", False)
    if not isinstance(halt, bool):
        raise CircuitError("halt must be a boolean", where)
    return StateDef(
        id=_require(item, "id", str, where),
        input_reads=tuple(reads),
        assignments=tuple(assignments),
        emissions=tuple(emissions),
        transitions=tuple(transitions),
        halt=halt,
    )


def circuit_from_dict(doc: Mapping) -> Circuit:
    """Build a circuit from its JSON document without semantic checks."""
    if not isinstance(doc, dict):
        raise CircuitError("circuit document must be an object")
    states = doc.get("states", [])
    if not isinstance(states, list):
        raise CircuitError("field 'states' must be a list", "states")
    return Circuit(
        name=_require(doc, "name", str, ""),
        registers=_decl_list(doc, "registers", Register),
        input_ports=_decl_list(doc, "inputs", Port),
        output_ports=_decl_list(doc, "outputs", Port),
        states=tuple(_state(s, f"states[{i}]") for i, s in enumerate(states)),
        initial=_require(doc, "initial", str, ""),
    )


def parse_circuit(text: str) -> Circuit:
    """Parse and check a JSON circuit description.

    Syntax errors carry a ``line:column`` position; semantic errors carry a
    path such as ``states[2].transitions[0]``. Unreachable states are only
    warnings and do not prevent parsing.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CircuitError(f"syntax error: {exc.msg}", f"{exc.lineno}:{exc.colno}") from None
    c = circuit_from_dict(doc)
    for d in validate_circuit(c):
        if d.severity == "error":
            raise CircuitError(d.message, d.where)
    return c


def load_circuit(path) -> Circuit:
    with open(path, encoding="utf-8") as fh:
        return parse_circuit(fh.read())


# -- canonical form ------------------------------------------------------------


def circuit_to_dict(c: Circuit) -> dict:
    return {
        "name": c.name,
        "registers": [{"id": r.id, "width": r.width} for r in c.registers],
        "inputs": [{"id": p.id, "width": p.width} for p in c.input_ports],
        "outputs": [{"id": p.id, "width": p.width} for p in c.output_ports],
        "states": [
            {
                "id": s.id,
                "input_reads": list(s.input_reads),
                "assignments": [{"target": a.target, "expr": render(a.expr)} for a in s.assignments],
                "emissions": [{"port": e.port, "expr": render(e.expr)} for e in s.emissions],
                "transitions": [
                    {"guard": ELSE if t.guard is None else render(t.guard), "target": t.target}
                    for t in s.transitions
                ],
                "halt": s.halt,
            }
            for s in c.states
        ],
        "initial": c.initial,
    }


def canonical_bytes(c: Circuit) -> bytes:
    return json.dumps(circuit_to_dict(c), sort_keys=True, separators=(",", ":")).encode("ascii")


def dump_circuit(c: Circuit) -> str:
    """Human-friendly JSON; re-parses to the same canonical bytes."""
    return json.dumps(circuit_to_dict(c), indent=2) + "\n"


def circuit_hash(c: Circuit) -> int:
    return fnv1a64(canonical_bytes(c))


# -- validation -----------------------------------------------------------------


def validate_circuit(c: Circuit) -> list[Diagnostic]:
    diags: list[Diagnostic] = []

    def error(code, message, where=""):
        diags.append(Diagnostic("error", code, message, where))

    if not c.states:
        error("no-states", "no states")
        return diags

    seen: set[str] = set()
    for group, decls in (("registers", c.registers), ("inputs", c.input_ports), ("outputs", c.output_ports)):
        for i, d in enumerate(decls):
            where = f"{group}[{i}]"
            if d.id in seen:
                error("duplicate-id", f"duplicate id {d.id!r}", where)
            seen.add(d.id)
            if not 1 <= d.width <= MAX_WIDTH:
                error("width-range", f"width {d.width} of {d.id!r} out of range 1..{MAX_WIDTH}", where)

    state_ids: set[str] = set()
    for i, s in enumerate(c.states):
        if s.id in state_ids:
            error("duplicate-id", f"duplicate state id {s.id!r}", f"states[{i}]")
        state_ids.add(s.id)

    if c.initial not in state_ids:
        error("unknown-initial", f"initial state {c.initial!r} is not declared", "initial")

    reg_ids = {r.id for r in c.registers}
    in_ids = {p.id for p in c.input_ports}
    out_ids = {p.id for p in c.output_ports}
    for i, s in enumerate(c.states):
        where = f"states[{i}]"
        for port in s.input_reads:
            if port not in in_ids:
                error("unknown-reference", f"state {s.id!r} reads unknown input {port!r}", where)
        if len(set(s.input_reads)) != len(s.input_reads):
            error("duplicate-read", f"state {s.id!r} reads a port twice", where)
        visible = reg_ids | set(s.input_reads)
        for ref in sorted(s.uses() - visible):
            error("unknown-reference", f"state {s.id!r} references unknown name {ref!r}", where)
        targets = [a.target for a in s.assignments]
        for t in targets:
            if t not in reg_ids:
                error("unknown-reference", f"state {s.id!r} assigns unknown register {t!r}", where)
        if len(set(targets)) != len(targets):
            error("duplicate-assignment", f"state {s.id!r} assigns a register twice", where)
        for e in s.emissions:
            if e.port not in out_ids:
                error("unknown-reference", f"state {s.id!r} emits on unknown output {e.port!r}", where)
        if s.halt:
            if s.transitions:
                error("halt-transitions", f"halt state {s.id!r} has transitions", where)
            continue
        if not s.transitions or not s.transitions[-1].is_else:
            error("missing-else", f"state {s.id!r}: missing ELSE as last transition", where)
        if any(t.is_else for t in s.transitions[:-1]):
            error("else-not-last", f"state {s.id!r}: ELSE must be the only and last default", where)
        for j, t in enumerate(s.transitions):
            if t.target not in state_ids:
                error("dangling-target", f"state {s.id!r} transitions to undeclared {t.target!r}",
                      f"{where}.transitions[{j}]")

    if not any(d.severity == "error" for d in diags):
        for s in c.states:
            if s.id not in c.reachable:
                diags.append(Diagnostic("warning", "unreachable", f"state {s.id!r} is unreachable", s.id))
    return diags


# -- static analysis ---------------------------------------------------------------


def _liveness_fixpoint(c: Circuit) -> tuple[dict[str, frozenset[str]], int]:
    regs = set(c.register_map)
    use = {s.id: frozenset(s.uses() & regs) for s in c.states}
    kill = {s.id: frozenset(s.defs()) for s in c.states}
    succ = {s.id: [t for t in s.targets if t in c.state_map] for s in c.states}
    live = {s.id: use[s.id] for s in c.states}
    changing_passes = 0
    order = list(reversed(c.states))  # backward problem: visit sinks first
    while True:
        changed = False
        for s in order:
            out: set[str] = set()
            for t in succ[s.id]:
                out |= live[t]
            new = use[s.id] | (out - kill[s.id])
            if new != live[s.id]:
                live[s.id] = frozenset(new)
                changed = True
        if not changed:
            return live, changing_passes
        changing_passes += 1


def live_registers(c: Circuit) -> dict[str, frozenset[str]]:
    """Live-in register set of every state (least fixpoint)."""
    return _liveness_fixpoint(c)[0]


def ordered_live(c: Circuit, state_id: str) -> list[str]:
    """Live registers of a state in register-declaration order."""
    live = c.liveness[state_id]
    return [r.id for r in c.registers if r.id in live]


def worst_case_drain(c: Circuit, checkpoints: Iterable[str]) -> dict[str, float]:
    """Worst-case transitions from each state until a checkpoint or halt.

    All outgoing transitions count, whatever their guards. A state that can
    reach a cycle of non-checkpoint states maps to ``UNBOUNDED``.
    """
    cps = set(checkpoints)
    free = {s.id for s in c.states if s.id not in cps and not s.halt}
    pending: dict[str, int] = {}
    preds: dict[str, list[str]] = {v: [] for v in free}
    for v in free:
        inner = [t for t in c.state_map[v].targets if t in free]
        pending[v] = len(inner)
        for t in inner:
            preds[t].append(v)
    drain: dict[str, float] = {s.id: 0 for s in c.states if s.id not in free}
    best = {v: 1 for v in free}
    ready = deque(v for v in free if pending[v] == 0)
    while ready:
        v = ready.popleft()
        drain[v] = best[v]
        for u in preds[v]:
            best[u] = max(best[u], best[v] + 1)
            pending[u] -= 1
            if pending[u] == 0:
                ready.append(u)
    for v in free:
        drain.setdefault(v, UNBOUNDED)
    return {s.id: drain[s.id] for s in c.states}
