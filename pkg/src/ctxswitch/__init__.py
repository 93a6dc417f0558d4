"""Checkpoint-based context switching for FSM circuits on heterogeneous nodes."""
from importlib import resources

from .circuit import (
    UNBOUNDED,
    Circuit,
    CircuitError,
    circuit_hash,
    live_registers,
    load_circuit,
    parse_circuit,
    validate_circuit,
    worst_case_drain,
)
from .codec import (
    ALTERA_LIKE,
    XILINX_LIKE,
    BitOrder,
    MachineState,
    NodeDescriptor,
    decode_context,
    encode_context,
    from_native_scan,
    to_native_scan,
)
from .planner import (
    CheckpointPlan,
    Mode,
    OverheadReport,
    brute_force_plan,
    plan_checkpoints,
    plan_overhead,
    verify_plan,
)
from .simulator import AtCycle, ExternalFlag, Outcome, RunOutcome, init_state, resume, run, step

__version__ = "0.1.0"


def reference_circuit(name: str = "ring3") -> Circuit:
    """Load one of the circuits shipped with the package."""
    return parse_circuit(resources.files(__package__).joinpath("data", f"{name}.json").read_text())
