"""Shared-storage job flow between a server and heterogeneous nodes.

Storage layout under the root::

    jobs/<job_id>/manifest.json        written last; its presence means "ready"
    jobs/<job_id>/circuit.json
    jobs/<job_id>/plan.json
    jobs/<job_id>/input.vec
    jobs/<job_id>/running.lock         exclusive-create claim
    jobs/<job_id>/control/interrupt.req
    jobs/<job_id>/contexts/ctx.<seq>.ctxs
    jobs/<job_id>/contexts/ctx.<seq>.out   outputs emitted before ctx.<seq>
    jobs/<job_id>/result.out
    jobs/<job_id>/failed.reason

Daemons keep no state of their own: everything they need is derived from
the files above. Files other than the lock appear through a same-directory
rename of ``<name>.tmp``, so readers never see partial content.
"""
from __future__ import annotations

import json
import logging
import os
import re
import secrets
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence, Union

from .circuit import Circuit, dump_circuit, load_circuit
from .codec import NodeDescriptor, from_native_scan, to_native_scan
from .planner import CheckpointPlan, dump_plan, load_plan, verify_plan
from .simulator import (
    AtCycle,
    DEFAULT_BUDGET,
    ExternalFlag,
    InterruptPolicy,
    Outcome,
    Output,
    format_input_vec,
    format_outputs,
    init_state,
    parse_input_vec,
    parse_outputs,
    resume,
    run,
)

log = logging.getLogger(__name__)

ANY = "ANY"
_CTX = re.compile(r"^ctx\.(\d+)\.ctxs$")
_JOB_ID = re.compile(r"^[A-Za-z0-9][A-Za-z0-9_.-]*$")

PathLike = Union[str, os.PathLike]


class OrchestratorError(RuntimeError):
    pass


class JobExists(OrchestratorError):
    pass


class UnknownJob(OrchestratorError):
    pass


class InvalidPlan(OrchestratorError):
    pass


class AlreadyClaimed(OrchestratorError):
    """Another node holds the claim; losing this race is harmless."""


class JobFinished(OrchestratorError):
    pass


class NotClaimHolder(OrchestratorError):
    pass


class StaleSequence(OrchestratorError):
    pass


class StorageError(OrchestratorError):
    pass


@dataclass(frozen=True)
class JobManifest:
    job_id: str
    latency_bound: int
    circuit: str = "circuit.json"
    plan: str = "plan.json"
    inputs: str = "input.vec"
    accepted_archs: Union[str, tuple[str, ...]] = ANY
    deterministic_interrupt: Optional[int] = None

    def accepts(self, arch_id: str) -> bool:
        return self.accepted_archs == ANY or arch_id in self.accepted_archs

    def to_dict(self) -> dict:
        archs = self.accepted_archs if self.accepted_archs == ANY else list(self.accepted_archs)
        return {
            "job_id": self.job_id,
            "circuit": self.circuit,
            "plan": self.plan,
            "inputs": self.inputs,
            "latency_bound": self.latency_bound,
            "accepted_archs": archs,
            "deterministic_interrupt": self.deterministic_interrupt,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "JobManifest":
        archs = doc.get("accepted_archs", ANY)
        for key in ("circuit", "plan", "inputs"):
            ref = doc.get(key, "")
            if not isinstance(ref, str) or Path(ref).name != ref:
                raise OrchestratorError(f"manifest {key} reference must be a file inside the job directory")
        return cls(
            job_id=doc["job_id"],
            latency_bound=int(doc["latency_bound"]),
            circuit=doc["circuit"],
            plan=doc["plan"],
            inputs=doc["inputs"],
            accepted_archs=archs if archs == ANY else tuple(archs),
            deterministic_interrupt=doc.get("deterministic_interrupt"),
        )


class Status(str, Enum):
    SUBMITTED = "SUBMITTED"
    RUNNING = "RUNNING"
    CHECKPOINTED = "CHECKPOINTED"
    DONE = "DONE"
    FAILED = "FAILED"


@dataclass(frozen=True)
class JobView:
    status: Status
    context_seq: Optional[int] = None
    has_result: bool = False
    node: Optional[str] = None
    reason: Optional[str] = None

    def __str__(self) -> str:
        if self.status is Status.RUNNING:
            return f"RUNNING node={self.node}"
        if self.status is Status.CHECKPOINTED:
            return f"CHECKPOINTED seq={self.context_seq}"
        if self.status is Status.FAILED:
            return f"FAILED reason={self.reason}"
        return self.status.value


class ActionKind(str, Enum):
    CLAIM_FRESH = "CLAIM_FRESH"
    CLAIM_RESUME = "CLAIM_RESUME"
    IDLE = "IDLE"


@dataclass(frozen=True)
class Action:
    kind: ActionKind
    job_id: Optional[str] = None
    seq: Optional[int] = None


IDLE = Action(ActionKind.IDLE)


@dataclass(frozen=True)
class ClaimToken:
    root: Path
    job_id: str
    arch_id: str
    epoch: int
    nonce: str

    @property
    def job_dir(self) -> Path:
        return _job_dir(self.root, self.job_id)


# -- file primitives ------------------------------------------------------------------


def _job_dir(root: PathLike, job_id: str) -> Path:
    return Path(root) / "jobs" / job_id


def _publish(path: Path, data: Union[str, bytes]) -> None:
    """Write ``path`` atomically through ``<name>.tmp`` and rename."""
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    mode = "wb" if isinstance(data, bytes) else "w"
    with open(tmp, mode) as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def _context_seqs(job: Path) -> list[int]:
    try:
        names = os.listdir(job / "contexts")
    except FileNotFoundError:
        return []
    return sorted(int(m.group(1)) for m in map(_CTX.match, names) if m)


def _read_lock(job: Path) -> Optional[dict]:
    try:
        with open(job / "running.lock", encoding="utf-8") as fh:
            return json.loads(fh.read() or "{}")
    except FileNotFoundError:
        return None
    except json.JSONDecodeError:
        # holder is between create and write
        return {}


def read_manifest(root: PathLike, job_id: str) -> JobManifest:
    path = _job_dir(root, job_id) / "manifest.json"
    try:
        with open(path, encoding="utf-8") as fh:
            return JobManifest.from_dict(json.load(fh))
    except FileNotFoundError:
        raise UnknownJob(f"unknown job {job_id!r}") from None


# -- operations --------------------------------------------------------------------------


def submit_job(
    root: PathLike,
    circuit: Circuit,
    plan: CheckpointPlan,
    inputs: Sequence[int],
    *,
    job_id: Optional[str] = None,
    accepted_archs: Union[str, Sequence[str]] = ANY,
    deterministic_interrupt: Optional[int] = None,
) -> str:
    """Place a job in storage; the manifest is published last."""
    problems = verify_plan(circuit, plan)
    if problems:
        raise InvalidPlan("; ".join(str(d) for d in problems))
    root = Path(root)
    if not root.is_dir():
        raise StorageError(f"storage root {root} does not exist")
    jobs = root / "jobs"
    jobs.mkdir(exist_ok=True)
    if job_id is None:
        n = 0
        while True:
            job_id = f"{circuit.name}-{n:04d}"
            try:
                (jobs / job_id).mkdir()
                break
            except FileExistsError:
                n += 1
    else:
        if not _JOB_ID.match(job_id):
            raise OrchestratorError(f"invalid job id {job_id!r}")
        try:
            (jobs / job_id).mkdir()
        except FileExistsError:
            raise JobExists(f"job {job_id!r} already exists") from None
    job = jobs / job_id
    manifest = JobManifest(
        job_id=job_id,
        latency_bound=plan.latency_bound,
        accepted_archs=accepted_archs if accepted_archs == ANY else tuple(accepted_archs),
        deterministic_interrupt=deterministic_interrupt,
    )
    _publish(job / manifest.circuit, dump_circuit(circuit))
    _publish(job / manifest.plan, dump_plan(plan))
    _publish(job / manifest.inputs, format_input_vec(inputs))
    _publish(job / "manifest.json", json.dumps(manifest.to_dict(), indent=2) + "\n")
    log.info("submitted job %s", job_id)
    return job_id


def list_jobs(root: PathLike) -> list[str]:
    try:
        return sorted(os.listdir(Path(root) / "jobs"))
    except FileNotFoundError:
        return []


def node_poll(root: PathLike, node: NodeDescriptor) -> Action:
    """Pick the first (lexicographic) job this node may start or resume."""
    for job_id in list_jobs(root):
        job = _job_dir(root, job_id)
        try:
            manifest = read_manifest(root, job_id)
        except UnknownJob:
            continue
        except (OSError, ValueError, KeyError, TypeError, OrchestratorError) as exc:
            log.warning("skipping unreadable job %s: %s", job_id, exc)
            continue
        if (job / "result.out").exists() or (job / "failed.reason").exists():
            continue
        if (job / "running.lock").exists() or not manifest.accepts(node.arch_id):
            continue
        seqs = _context_seqs(job)
        if seqs:
            return Action(ActionKind.CLAIM_RESUME, job_id, seqs[-1])
        return Action(ActionKind.CLAIM_FRESH, job_id)
    return IDLE


def claim(root: PathLike, job_id: str, node: NodeDescriptor) -> ClaimToken:
    """Take the job's lock by exclusive creation; exactly one caller wins."""
    job = _job_dir(root, job_id)
    if not (job / "manifest.json").exists():
        raise UnknownJob(f"unknown job {job_id!r}")
    if (job / "result.out").exists() or (job / "failed.reason").exists():
        raise JobFinished(f"job {job_id!r} is finished")
    epoch = len(_context_seqs(job))
    nonce = secrets.token_hex(8)
    try:
        fd = os.open(job / "running.lock", os.O_CREAT | os.O_EXCL | os.O_WRONLY, 0o644)
    except FileExistsError:
        raise AlreadyClaimed(f"job {job_id!r} is already claimed") from None
    with os.fdopen(fd, "w") as fh:
        json.dump({"arch_id": node.arch_id, "epoch": epoch, "nonce": nonce, "pid": os.getpid()}, fh)
    token = ClaimToken(Path(root), job_id, node.arch_id, epoch, nonce)
    if (job / "result.out").exists():
        release(token)
        raise JobFinished(f"job {job_id!r} is finished")
    return token


def _check_holder(token: ClaimToken) -> None:
    lock = _read_lock(token.job_dir)
    if not lock or lock.get("nonce") != token.nonce:
        raise NotClaimHolder(f"claim on {token.job_id!r} is not held by this token")


def release(token: ClaimToken) -> None:
    _check_holder(token)
    os.remove(token.job_dir / "running.lock")


def publish_context(token: ClaimToken, image: bytes, seq: int, outputs: Sequence[Output] = ()) -> None:
    """Store a context (and the outputs emitted before it), then release the claim."""
    _check_holder(token)
    seqs = _context_seqs(token.job_dir)
    expected = seqs[-1] + 1 if seqs else 0
    if seq != expected:
        raise StaleSequence(f"context sequence {seq} is stale, expected {expected}")
    ctx_dir = token.job_dir / "contexts"
    _publish(ctx_dir / f"ctx.{seq}.out", format_outputs(outputs))
    _publish(ctx_dir / f"ctx.{seq}.ctxs", bytes(image))
    release(token)


def publish_result(token: ClaimToken, outputs: Sequence[Output]) -> None:
    """Store the complete output sequence of the job, then release the claim."""
    _check_holder(token)
    _publish(token.job_dir / "result.out", format_outputs(outputs))
    release(token)


def publish_failure(token: ClaimToken, reason: str) -> None:
    _check_holder(token)
    _publish(token.job_dir / "failed.reason", reason.strip() + "\n")
    release(token)


def request_interrupt(root: PathLike, job_id: str) -> None:
    job = _job_dir(root, job_id)
    if not job.is_dir():
        raise UnknownJob(f"unknown job {job_id!r}")
    flag = job / "control" / "interrupt.req"
    if not flag.exists():
        _publish(flag, "")


def job_status(root: PathLike, job_id: str) -> JobView:
    job = _job_dir(root, job_id)
    if not (job / "manifest.json").exists():
        raise UnknownJob(f"unknown job {job_id!r}")
    seqs = _context_seqs(job)
    seq = seqs[-1] if seqs else None
    if (job / "result.out").exists():
        return JobView(Status.DONE, seq, True)
    if (job / "failed.reason").exists():
        reason = (job / "failed.reason").read_text(encoding="utf-8").strip()
        return JobView(Status.FAILED, seq, False, reason=reason)
    lock = _read_lock(job)
    if lock is not None:
        return JobView(Status.RUNNING, seq, False, node=lock.get("arch_id", "?"))
    if seq is not None:
        return JobView(Status.CHECKPOINTED, seq, False)
    return JobView(Status.SUBMITTED)


# -- node execution -------------------------------------------------------------------------


@dataclass
class JobFiles:
    manifest: JobManifest
    circuit: Circuit
    plan: CheckpointPlan
    inputs: list[int]


def load_job(root: PathLike, job_id: str) -> JobFiles:
    manifest = read_manifest(root, job_id)
    job = _job_dir(root, job_id)
    circuit = load_circuit(job / manifest.circuit)
    plan = load_plan(job / manifest.plan)
    inputs = parse_input_vec((job / manifest.inputs).read_text(encoding="utf-8"))
    return JobFiles(manifest, circuit, plan, inputs)


def prior_outputs(root: PathLike, job_id: str) -> list[Output]:
    """Outputs of every segment that ended in a published context, in order."""
    job = _job_dir(root, job_id)
    outputs: list[Output] = []
    for seq in _context_seqs(job):
        outputs += parse_outputs((job / "contexts" / f"ctx.{seq}.out").read_text(encoding="utf-8"))
    return outputs


class _JobInterrupt(InterruptPolicy):
    def __init__(self, flag: Path, at_cycle: Optional[int]):
        self.flag = ExternalFlag(flag.exists)
        self.at = AtCycle(at_cycle) if at_cycle is not None else None

    def asserted(self, cycle: int) -> bool:
        return (self.at is not None and self.at.asserted(cycle)) or self.flag.asserted(cycle)


@dataclass
class NodeReport:
    action: Action
    outcome: Optional[Outcome] = None
    seq: Optional[int] = None
    drain_cycles: Optional[int] = None
    error: Optional[str] = None

    def __str__(self) -> str:
        if self.action.kind is ActionKind.IDLE:
            return "idle"
        head = f"{self.action.kind.value} {self.action.job_id}"
        if self.error:
            return f"{head}: failed ({self.error})"
        if self.outcome is Outcome.CHECKPOINTED:
            return f"{head}: checkpointed ctx.{self.seq} (drain {self.drain_cycles})"
        if self.outcome is Outcome.COMPLETED:
            return f"{head}: completed, result published"
        return f"{head}: {self.outcome.value if self.outcome else 'lost claim race'}"


def _through_fabric(image: bytes, node: NodeDescriptor) -> bytes:
    """Load an image into the node's scan chain and read it back out."""
    return from_native_scan(to_native_scan(image, node), node)


def execute_claim(token: ClaimToken, node: NodeDescriptor, action: Action, *,
                  budget: int = DEFAULT_BUDGET) -> NodeReport:
    """Run a claimed job segment and publish its context, result or failure."""
    root, job_id = token.root, token.job_id
    report = NodeReport(action)
    try:
        files = load_job(root, job_id)
        flag = token.job_dir / "control" / "interrupt.req"
        if action.kind is ActionKind.CLAIM_FRESH:
            policy = _JobInterrupt(flag, files.manifest.deterministic_interrupt)
            outcome = run(files.circuit, files.plan, init_state(files.circuit), files.inputs, budget, policy)
        else:
            image = (token.job_dir / "contexts" / f"ctx.{action.seq}.ctxs").read_bytes()
            outcome = resume(files.circuit, files.plan, _through_fabric(image, node), files.inputs,
                             budget, _JobInterrupt(flag, None))
    except Exception as exc:  # the job, not the daemon, fails
        log.exception("job %s failed", job_id)
        publish_failure(token, f"{type(exc).__name__}: {exc}")
        report.error = str(exc)
        return report
    report.outcome = outcome.kind
    if outcome.kind is Outcome.CHECKPOINTED:
        seq = len(_context_seqs(token.job_dir))
        try:
            os.remove(flag)
        except FileNotFoundError:
            pass
        publish_context(token, _through_fabric(outcome.context, node), seq, outcome.outputs)
        report.seq, report.drain_cycles = seq, outcome.drain_cycles
    elif outcome.kind is Outcome.COMPLETED:
        publish_result(token, prior_outputs(root, job_id) + outcome.outputs)
    else:
        publish_failure(token, f"cycle budget of {budget} exhausted")
        report.error = "budget exhausted"
    return report


def node_once(root: PathLike, node: NodeDescriptor, *, budget: int = DEFAULT_BUDGET) -> NodeReport:
    """At most one poll, claim, execute, publish cycle."""
    if not Path(root).is_dir():
        raise StorageError(f"storage root {root} is not reachable")
    action = node_poll(root, node)
    if action.kind is ActionKind.IDLE:
        return NodeReport(action)
    try:
        token = claim(root, action.job_id, node)
    except (AlreadyClaimed, JobFinished):
        return NodeReport(action)
    return execute_claim(token, node, action, budget=budget)


def node_daemon(root: PathLike, node: NodeDescriptor, *, poll_period: float = 0.05,
                max_polls: Optional[int] = None, budget: int = DEFAULT_BUDGET) -> None:
    polls = 0
    while max_polls is None or polls < max_polls:
        report = node_once(root, node, budget=budget)
        polls += 1
        if report.action.kind is ActionKind.IDLE:
            time.sleep(poll_period)
        else:
            log.info("%s: %s", node.arch_id, report)


def reference_outputs(root: PathLike, job_id: str, inputs: Optional[Sequence[int]] = None,
                      *, budget: int = DEFAULT_BUDGET) -> list[Output]:
    """Outputs of the job run uninterrupted from the start."""
    files = load_job(root, job_id)
    stream = files.inputs if inputs is None else list(inputs)
    outcome = run(files.circuit, files.plan, init_state(files.circuit), stream, budget)
    if outcome.kind is not Outcome.COMPLETED:
        raise OrchestratorError(f"reference run did not complete: {outcome.kind.value}")
    return outcome.outputs


def verify_job(root: PathLike, job_id: str, inputs: Optional[Sequence[int]] = None) -> bool:
    """True iff the stored result.out is byte-identical to an uninterrupted run."""
    path = _job_dir(root, job_id) / "result.out"
    if not (_job_dir(root, job_id) / "manifest.json").exists():
        raise UnknownJob(f"unknown job {job_id!r}")
    if not path.exists():
        return False
    return path.read_bytes() == format_outputs(reference_outputs(root, job_id, inputs)).encode("ascii")
