"""Random circuits and streams for property tests and demos."""
from __future__ import annotations

import random
from typing import Optional

from .circuit import Assignment, Circuit, Emission, Port, Register, StateDef, Transition
from .expr import BinOp, Const, Expr, Name

_ARITH = ("+", "-", "*", "&", "|", "^", "<<", ">>")
_CMP = ("==", "!=", "<", "<=", ">", ">=")


def random_expr(rng: random.Random, operands: list[str], depth: int = 2) -> Expr:
    if depth == 0 or rng.random() < 0.3:
        if operands and rng.random() < 0.75:
            return Name(rng.choice(operands))
        return Const(rng.randrange(16))
    op = rng.choice(_ARITH)
    right = Const(rng.randrange(4)) if op in ("<<", ">>") else random_expr(rng, operands, depth - 1)
    return BinOp(op, random_expr(rng, operands, depth - 1), right)


def random_guard(rng: random.Random, operands: list[str]) -> Expr:
    return BinOp(rng.choice(_CMP), random_expr(rng, operands, 1), Const(rng.randrange(8)))


def random_circuit(
    rng: random.Random,
    n_states: Optional[int] = None,
    n_registers: Optional[int] = None,
    *,
    max_states: int = 12,
    max_registers: int = 6,
    halt_probability: float = 0.7,
) -> Circuit:
    """A valid circuit whose graph favours loops, branches and dead registers."""
    n_states = n_states if n_states is not None else rng.randint(1, max_states)
    n_registers = n_registers if n_registers is not None else rng.randint(0, max_registers)
    registers = tuple(Register(f"r{i}", rng.choice((1, 3, 4, 8, 12, 16))) for i in range(n_registers))
    inputs = (Port("a", 8), Port("b", 4))
    outputs = (Port("o", 8), Port("p", 16))
    reg_ids = [r.id for r in registers]
    ids = [f"S{i}" for i in range(n_states)]

    has_halt = n_states > 1 and rng.random() < halt_probability
    halt_ids = {ids[-1]} if has_halt else set()
    live_ids = [s for s in ids if s not in halt_ids]
    states = []
    for i, sid in enumerate(ids):
        if sid in halt_ids:
            states.append(StateDef(sid, halt=True))
            continue
        reads = tuple(p.id for p in inputs if rng.random() < 0.35)
        operands = reg_ids + list(reads)
        targets = rng.sample(reg_ids, k=min(len(reg_ids), rng.randint(0, 2)))
        assigns = tuple(Assignment(t, random_expr(rng, operands)) for t in targets)
        emits = tuple(
            Emission(p.id, random_expr(rng, operands)) for p in outputs if rng.random() < 0.3
        )
        # a forward edge keeps most states reachable
        forward = ids[i + 1] if i + 1 < n_states else rng.choice(ids)
        transitions = []
        for _ in range(rng.randint(0, 2)):
            transitions.append(Transition(random_guard(rng, operands), rng.choice(ids)))
        if transitions and rng.random() < 0.5:
            transitions.append(Transition(None, rng.choice(live_ids)))
            transitions.insert(0, Transition(random_guard(rng, operands), forward))
        else:
            transitions.append(Transition(None, forward))
        states.append(StateDef(sid, reads, assigns, emits, tuple(transitions)))
    return Circuit("rand", registers, inputs, outputs, tuple(states), ids[0])


def random_inputs(rng: random.Random, n: int) -> list[int]:
    return [rng.randrange(256) for _ in range(n)]
