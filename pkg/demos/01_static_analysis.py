"""Static analysis of the reference circuit: liveness and drain distances.

Run with ``python demos/01_static_analysis.py``.
"""
from ctxswitch import live_registers, reference_circuit, validate_circuit, worst_case_drain
from ctxswitch.circuit import canonical_bytes

ring3 = reference_circuit("ring3")
print("states:", [s.id for s in ring3.states], "initial:", ring3.initial)
print("diagnostics:", validate_circuit(ring3) or "none")

# Registers that must survive a context switch at the top of each state.
# tmp is written in S1 but never read again, so it is never live.
for state, regs in live_registers(ring3).items():
    print(f"  live({state}) = {sorted(regs)}")

# Worst-case number of transitions before reaching a checkpoint.
for checkpoints in ({"S0"}, {"S1"}, set()):
    print(f"drain with checkpoints {sorted(checkpoints)}:", worst_case_drain(ring3, checkpoints))

print("canonical form:", canonical_bytes(ring3)[:80], "...")
print(f"digest: 0x{ring3.digest:016x}")
