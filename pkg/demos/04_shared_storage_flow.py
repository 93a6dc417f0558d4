"""The two-board flow through a shared directory, driven from Python.

Run with ``python demos/04_shared_storage_flow.py``. The same steps are
available on the command line (see README).
"""
import tempfile
from pathlib import Path

from ctxswitch import ALTERA_LIKE, XILINX_LIKE, plan_checkpoints, reference_circuit
from ctxswitch import orchestrator as orch

root = Path(tempfile.mkdtemp(prefix="ctxswitch-"))
ring3 = reference_circuit()
plan = plan_checkpoints(ring3, 2)

job = orch.submit_job(root, ring3, plan, [1, 2, 0], deterministic_interrupt=1)
print("submitted", job, "->", orch.job_status(root, job))

print("xilinx-like:", orch.node_once(root, XILINX_LIKE), "->", orch.job_status(root, job))
print("altera-like:", orch.node_once(root, ALTERA_LIKE), "->", orch.job_status(root, job))

for path in sorted((root / "jobs" / job).rglob("*")):
    print("  ", path.relative_to(root))
print("result.out:", (root / "jobs" / job / "result.out").read_text().splitlines())
print("matches uninterrupted run:", orch.verify_job(root, job))
