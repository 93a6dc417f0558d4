"""Checkpoint selection under a context-switch latency bound.

A plan is feasible when every reachable, non-halt state reaches a
checkpoint (or halts) within ``L`` transitions on every path. Among feasible
plans the planner minimises, in order: the total width of registers that
must be saved at any checkpoint, the number of checkpoints, and finally the
sorted tuple of checkpoint ids.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations
from typing import Iterable, Optional

from .circuit import Circuit, Diagnostic, fnv1a64, live_registers, ordered_live, worst_case_drain

MAX_ORACLE_STATES = 20
DEFAULT_NODE_BUDGET = 2_000_000


class Mode(str, Enum):
    EXACT = "exact"
    GREEDY = "greedy"


class PlanError(ValueError):
    pass


class PlanBudgetExceeded(RuntimeError):
    """The exact search visited more nodes than the caller allowed."""


@dataclass(frozen=True)
class OverheadReport:
    union_bits: int
    state_bits: int
    max_context_bits: int
    checkpoint_count: int

    def as_dict(self) -> dict:
        return {
            "union_bits": self.union_bits,
            "state_bits": self.state_bits,
            "max_context_bits": self.max_context_bits,
            "checkpoint_count": self.checkpoint_count,
        }


@dataclass(frozen=True)
class CheckpointPlan:
    circuit_digest: int
    latency_bound: int
    checkpoints: tuple[str, ...]
    live: dict[str, tuple[str, ...]] = field(hash=False)
    overhead: OverheadReport
    plan_digest: int

    @property
    def objective(self) -> tuple:
        return objective(self.overhead, self.checkpoints)

    def to_dict(self) -> dict:
        doc = _body(self.circuit_digest, self.latency_bound, self.checkpoints, self.live, self.overhead)
        doc["plan_digest"] = f"0x{self.plan_digest:016x}"
        return doc


def objective(overhead: OverheadReport, checkpoints: Iterable[str]) -> tuple:
    return (overhead.union_bits, overhead.checkpoint_count, tuple(sorted(checkpoints)))


def _body(circuit_digest, latency_bound, checkpoints, live, overhead) -> dict:
    return {
        "circuit_digest": f"0x{circuit_digest:016x}",
        "latency_bound": latency_bound,
        "checkpoints": list(checkpoints),
        "live_registers": {s: list(live[s]) for s in checkpoints},
        "overhead": overhead.as_dict(),
    }


def _canonical(doc: dict) -> bytes:
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("ascii")


def canonical_plan_bytes(p: CheckpointPlan) -> bytes:
    return _canonical(p.to_dict())


def state_bits(c: Circuit) -> int:
    return max(1, (len(c.states) - 1).bit_length())


def plan_overhead(c: Circuit, checkpoints: Iterable[str]) -> OverheadReport:
    cps = list(dict.fromkeys(checkpoints))
    widths = {r.id: r.width for r in c.registers}
    union: set[str] = set()
    per_cp = [0]
    for s in cps:
        live = c.liveness[s]
        union |= live
        per_cp.append(sum(widths[r] for r in live))
    sb = state_bits(c)
    return OverheadReport(
        union_bits=sum(widths[r] for r in union),
        state_bits=sb,
        max_context_bits=max(per_cp) + sb,
        checkpoint_count=len(cps),
    )


def make_plan(c: Circuit, latency_bound: int, checkpoints: Iterable[str]) -> CheckpointPlan:
    """Assemble a plan for an explicit checkpoint set (no feasibility check)."""
    chosen = set(checkpoints)
    unknown = chosen - set(c.state_map)
    if unknown:
        raise PlanError(f"unknown checkpoint states: {sorted(unknown)}")
    cps = tuple(s.id for s in c.states if s.id in chosen)
    live = {s: tuple(ordered_live(c, s)) for s in cps}
    overhead = plan_overhead(c, cps)
    digest = fnv1a64(_canonical(_body(c.digest, latency_bound, cps, live, overhead)))
    return CheckpointPlan(c.digest, latency_bound, cps, live, overhead, digest)


def candidates(c: Circuit) -> list[str]:
    """States eligible as checkpoints: reachable and not halting."""
    return [s.id for s in c.states if s.id in c.reachable and not s.halt]


def violations(c: Circuit, checkpoints: Iterable[str], latency_bound: int) -> list[str]:
    drain = worst_case_drain(c, checkpoints)
    return [s for s in candidates(c) if drain[s] > latency_bound]


def _check_bound(latency_bound: int) -> None:
    if not isinstance(latency_bound, int) or isinstance(latency_bound, bool) or latency_bound < 0:
        raise PlanError(f"latency bound must be a non-negative integer, got {latency_bound!r}")


# -- exact search ----------------------------------------------------------------


class _Search:
    def __init__(self, c: Circuit, latency_bound: int, budget: int):
        self.c = c
        self.L = latency_bound
        self.budget = budget
        self.nodes = 0
        self.ids = candidates(c)
        index = {s: i for i, s in enumerate(self.ids)}
        self.succ = [
            [index[t] for t in c.state_map[s].targets if t in index] for s in self.ids
        ]
        reg_bit = {r.id: i for i, r in enumerate(c.registers)}
        self.widths = [r.width for r in c.registers]
        self.live_mask = [
            sum(1 << reg_bit[r] for r in c.liveness[s]) for s in self.ids
        ]
        self.best_key: Optional[tuple] = None
        self.best_set: Optional[frozenset[int]] = None

    def bits(self, mask: int) -> int:
        total, i = 0, 0
        while mask:
            if mask & 1:
                total += self.widths[i]
            mask >>= 1
            i += 1
        return total

    def excluded_ok(self, excluded: set[int]) -> bool:
        """Excluded states induce an acyclic graph whose paths hold at most L states."""
        depth: dict[int, int] = {}
        on_stack: set[int] = set()
        for root in excluded:
            if root in depth:
                continue
            stack = [(root, iter(self.succ[root]))]
            on_stack.add(root)
            while stack:
                v, it = stack[-1]
                advanced = False
                for w in it:
                    if w not in excluded:
                        continue
                    if w in on_stack:
                        return False
                    if w not in depth:
                        stack.append((w, iter(self.succ[w])))
                        on_stack.add(w)
                        advanced = True
                        break
                if advanced:
                    continue
                stack.pop()
                on_stack.discard(v)
                d = 1 + max((depth[w] for w in self.succ[v] if w in excluded), default=0)
                if d > self.L:
                    return False
                depth[v] = d
        return True

    def offer(self, included: frozenset[int], union_mask: int) -> None:
        key = (self.bits(union_mask), len(included), tuple(sorted(self.ids[i] for i in included)))
        if self.best_key is None or key < self.best_key:
            self.best_key = key
            self.best_set = included

    def run(self) -> frozenset[int]:
        self._visit(0, [], set(), 0)
        assert self.best_set is not None
        return self.best_set

    def _visit(self, i: int, included: list[int], excluded: set[int], union_mask: int) -> None:
        self.nodes += 1
        if self.nodes > self.budget:
            raise PlanBudgetExceeded(f"exact search exceeded {self.budget} nodes")
        if self.best_key is not None:
            if (self.bits(union_mask), len(included)) > self.best_key[:2]:
                return
        if i == len(self.ids):
            self.offer(frozenset(included), union_mask)
            return
        excluded.add(i)
        if self.excluded_ok(excluded):
            self._visit(i + 1, included, excluded, union_mask)
        excluded.discard(i)
        included.append(i)
        self._visit(i + 1, included, excluded, union_mask | self.live_mask[i])
        included.pop()


def _exact(c: Circuit, latency_bound: int, budget: int) -> list[str]:
    search = _Search(c, latency_bound, budget)
    if not search.ids:
        return []
    seed = _greedy(c, latency_bound)
    index = {s: i for i, s in enumerate(search.ids)}
    seed_set = frozenset(index[s] for s in seed)
    seed_mask = 0
    for i in seed_set:
        seed_mask |= search.live_mask[i]
    search.offer(seed_set, seed_mask)
    return [search.ids[i] for i in search.run()]


# -- greedy ------------------------------------------------------------------------


def _greedy(c: Circuit, latency_bound: int) -> list[str]:
    widths = {r.id: r.width for r in c.registers}
    chosen: list[str] = []
    union: set[str] = set()
    bad = violations(c, chosen, latency_bound)
    while bad:
        best = None
        for s in candidates(c):
            if s in chosen:
                continue
            fixed = len(bad) - len(violations(c, chosen + [s], latency_bound))
            added = sum(widths[r] for r in c.liveness[s] - union)
            # zero added bits ranks above any finite ratio
            score = (fixed / added if added else float("inf"), fixed)
            if best is None or score > best[0]:
                best = (score, s)
        chosen.append(best[1])
        union |= c.liveness[best[1]]
        bad = violations(c, chosen, latency_bound)
    # drop checkpoints that turned out redundant, most expensive first
    cost = {s: sum(widths[r] for r in c.liveness[s]) for s in chosen}
    for s in sorted(chosen, key=lambda s: (-cost[s], c.state_index[s])):
        trial = [t for t in chosen if t != s]
        if not violations(c, trial, latency_bound):
            chosen = trial
    return chosen


def plan_checkpoints(
    c: Circuit,
    latency_bound: int,
    mode: Mode | str = Mode.EXACT,
    *,
    budget: int = DEFAULT_NODE_BUDGET,
) -> CheckpointPlan:
    """Choose checkpoint states so that drain never exceeds ``latency_bound``.

    ``budget`` caps the number of search nodes in EXACT mode; exceeding it
    raises :class:`PlanBudgetExceeded`.
    """
    _check_bound(latency_bound)
    mode = Mode(mode)
    if mode is Mode.EXACT:
        chosen = _exact(c, latency_bound, budget)
    else:
        chosen = _greedy(c, latency_bound)
    return make_plan(c, latency_bound, chosen)


def brute_force_plan(c: Circuit, latency_bound: int) -> CheckpointPlan:
    """Exhaustive reference planner over every subset of candidate states."""
    _check_bound(latency_bound)
    if len(c.states) > MAX_ORACLE_STATES:
        raise PlanError(f"brute force limited to {MAX_ORACLE_STATES} states, circuit has {len(c.states)}")
    pool = candidates(c)
    best = None
    for k in range(len(pool) + 1):
        for subset in combinations(pool, k):
            drain = worst_case_drain(c, subset)
            if any(drain[s] > latency_bound for s in pool):
                continue
            key = objective(plan_overhead(c, subset), subset)
            if best is None or key < best[0]:
                best = (key, subset)
    return make_plan(c, latency_bound, best[1])


# -- verification & files ---------------------------------------------------------------


def verify_plan(c: Circuit, p: CheckpointPlan) -> list[Diagnostic]:
    diags: list[Diagnostic] = []

    def error(code, message, where=""):
        diags.append(Diagnostic("error", code, message, where))

    if p.circuit_digest != c.digest:
        error("digest-mismatch",
              f"digest mismatch: plan is bound to 0x{p.circuit_digest:016x}, circuit is 0x{c.digest:016x}")
    if not isinstance(p.latency_bound, int) or p.latency_bound < 0:
        error("latency-bound", f"invalid latency bound {p.latency_bound!r}")
        return diags
    unknown = [s for s in p.checkpoints if s not in c.state_map]
    if unknown:
        error("unknown-state", f"checkpoints not in circuit: {unknown}")
        return diags
    drain = worst_case_drain(c, p.checkpoints)
    for s in candidates(c):
        if drain[s] > p.latency_bound:
            error("latency", f"drain from {s} is {drain[s]} > L={p.latency_bound}", s)
    if set(p.live) != set(p.checkpoints):
        error("live-lists", "live register lists do not match the checkpoint set")
    truth = live_registers(c)
    for s in p.checkpoints:
        expected = tuple(r.id for r in c.registers if r.id in truth[s])
        if tuple(p.live.get(s, ())) != expected:
            error("live-lists", f"live registers at {s} are {list(p.live.get(s, ()))}, expected {list(expected)}", s)
    if p.overhead != plan_overhead(c, p.checkpoints):
        error("overhead", "overhead report does not match the checkpoint set")
    body = _body(p.circuit_digest, p.latency_bound, p.checkpoints, p.live, p.overhead)
    if fnv1a64(_canonical(body)) != p.plan_digest:
        error("plan-digest", "plan digest does not match plan contents")
    return diags


def plan_from_dict(doc: dict) -> CheckpointPlan:
    try:
        overhead = OverheadReport(**doc["overhead"])
        cps = tuple(doc["checkpoints"])
        return CheckpointPlan(
            circuit_digest=int(doc["circuit_digest"], 16),
            latency_bound=doc["latency_bound"],
            checkpoints=cps,
            live={s: tuple(v) for s, v in doc["live_registers"].items()},
            overhead=overhead,
            plan_digest=int(doc["plan_digest"], 16),
        )
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise PlanError(f"malformed plan document: {exc}") from None


def dump_plan(p: CheckpointPlan) -> str:
    return json.dumps(p.to_dict(), indent=2, sort_keys=True) + "\n"


def parse_plan(text: str) -> CheckpointPlan:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PlanError(f"plan syntax error at {exc.lineno}:{exc.colno}: {exc.msg}") from None
    return plan_from_dict(doc)


def load_plan(path) -> CheckpointPlan:
    with open(path, encoding="utf-8") as fh:
        return parse_plan(fh.read())
