"""Interrupt, capture, move between vendor-like nodes, and resume.

Run with ``python demos/03_context_images.py``.
"""
from ctxswitch import (
    ALTERA_LIKE,
    XILINX_LIKE,
    AtCycle,
    decode_context,
    from_native_scan,
    init_state,
    plan_checkpoints,
    reference_circuit,
    resume,
    run,
    to_native_scan,
)

ring3 = reference_circuit()
plan = plan_checkpoints(ring3, 2)
inputs = [1, 2, 0]

full = run(ring3, plan, init_state(ring3), inputs)
print("uninterrupted:", full.kind.value, full.outputs, f"{full.cycles_executed} cycles")

first = run(ring3, plan, init_state(ring3), inputs, policy=AtCycle(1))
print(f"interrupted at cycle 1, drained {first.drain_cycles} transitions, outputs so far {first.outputs}")
print("context image:", first.context.hex(" "))
print("decoded:", decode_context(first.context, ring3, plan))

# The 32-bit LSB-first node reads the image out, the 64-bit MSB-first node loads it.
words_a = to_native_scan(first.context, XILINX_LIKE)
print("xilinx-like scan words:", [f"{w:08x}" for w in words_a])
canonical = from_native_scan(words_a, XILINX_LIKE)
words_b = to_native_scan(canonical, ALTERA_LIKE)
print("altera-like scan words:", [f"{w:016x}" for w in words_b])
image = from_native_scan(words_b, ALTERA_LIKE)

rest = resume(ring3, plan, image, inputs)
print("resumed:", rest.kind.value, rest.outputs)
assert first.outputs + rest.outputs == full.outputs
