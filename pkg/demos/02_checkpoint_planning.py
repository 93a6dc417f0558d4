"""Checkpoint selection as the latency bound varies, with the brute-force check.

Run with ``python demos/02_checkpoint_planning.py``.
"""
import random

from ctxswitch import Mode, brute_force_plan, plan_checkpoints, reference_circuit
from ctxswitch.randgen import random_circuit

ring3 = reference_circuit()
for L in range(4):
    p = plan_checkpoints(ring3, L)
    print(f"ring3 L={L}: checkpoints={p.checkpoints} overhead={p.overhead}")

# A larger random circuit: exact search against the greedy heuristic.
c = random_circuit(random.Random(12), n_states=12, n_registers=6)
print(f"\nrandom circuit, {len(c.states)} states, registers", [(r.id, r.width) for r in c.registers])
for L in (0, 1, 2, 4):
    exact = plan_checkpoints(c, L, Mode.EXACT)
    greedy = plan_checkpoints(c, L, Mode.GREEDY)
    oracle = brute_force_plan(c, L)
    print(f"L={L}: exact {exact.objective[:2]} {exact.checkpoints}")
    print(f"     greedy {greedy.objective[:2]} {greedy.checkpoints}")
    assert exact.objective == oracle.objective
