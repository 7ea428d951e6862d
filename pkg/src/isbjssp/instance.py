"""Job shop problem instances: parsing, random generation, serialization.

An instance of size m x n has n jobs, each visiting all m machines exactly
once (machine order is a permutation per job).  The file format is the
classic OR-Library job shop layout:

    line 1:      <n> <m>
    lines 2..n+1: for job j, m pairs "<machine> <proc_time>" in operation order

Machine indices are 0-based.  Blank lines and lines starting with '#' are
ignored.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


class InstanceFormatError(ValueError):
    """Instance text violates the file format or an instance invariant."""

    def __init__(self, msg: str, line: int | None = None, job: int | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if job is not None:
            where.append(f"job {job}")
        super().__init__(msg + (f" ({', '.join(where)})" if where else ""))
        self.line = line
        self.job = job


class MalformedHeader(InstanceFormatError):
    pass


class WrongOperationCount(InstanceFormatError):
    pass


class MachineIndexOutOfRange(InstanceFormatError):
    pass


class DuplicateMachineInJob(InstanceFormatError):
    pass


class NonPositiveProcTime(InstanceFormatError):
    pass


@dataclass(frozen=True)
class Operation:
    machine: int
    proc_time: int


@dataclass(frozen=True)
class Instance:
    """Immutable problem definition.

    jobs[j][i] is the i-th operation of job j.  Every job has exactly
    num_machines operations whose machine indices form a permutation of
    0..num_machines-1, and all processing times are >= 1.
    """

    num_jobs: int
    num_machines: int
    jobs: tuple[tuple[Operation, ...], ...]
    name: str = "unnamed"

    def __post_init__(self):
        n, m = self.num_jobs, self.num_machines
        if n < 1 or m < 1 or len(self.jobs) != n:
            raise InstanceFormatError(f"expected {n} jobs with {m} machines, got {len(self.jobs)} jobs")
        for j, ops in enumerate(self.jobs):
            if len(ops) != m:
                raise WrongOperationCount(f"job has {len(ops)} operations, expected {m}", job=j)
            seen = set()
            for op in ops:
                if not 0 <= op.machine < m:
                    raise MachineIndexOutOfRange(f"machine {op.machine} not in 0..{m - 1}", job=j)
                if op.machine in seen:
                    raise DuplicateMachineInJob(f"machine {op.machine} repeated", job=j)
                seen.add(op.machine)
                if op.proc_time < 1:
                    raise NonPositiveProcTime(f"proc_time {op.proc_time} < 1", job=j)

    def machine(self, job: int, rank: int) -> int:
        return self.jobs[job][rank].machine

    def proc_time(self, job: int, rank: int) -> int:
        return self.jobs[job][rank].proc_time

    @cached_property
    def max_proc_time(self) -> int:
        """Largest operation duration; the time scale for node features."""
        return max(op.proc_time for ops in self.jobs for op in ops)

    @cached_property
    def job_totals(self) -> tuple[int, ...]:
        return tuple(sum(op.proc_time for op in ops) for ops in self.jobs)


def parse_instance(text: str, name: str = "unnamed") -> Instance:
    """Parse OR-Library formatted text into an Instance.

    Raises a subclass of InstanceFormatError identifying the offending
    line (1-based) and job.
    """
    rows: list[tuple[int, list[str]]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        rows.append((lineno, stripped.split()))

    if not rows:
        raise MalformedHeader("empty instance text", line=1)

    header_line, header = rows[0]
    if len(header) != 2:
        raise MalformedHeader(f"expected '<n> <m>', got {len(header)} fields", line=header_line)
    try:
        n, m = int(header[0]), int(header[1])
    except ValueError:
        raise MalformedHeader(f"non-integer header fields {header}", line=header_line) from None
    if n < 1 or m < 1:
        raise MalformedHeader(f"need n >= 1 and m >= 1, got n={n} m={m}", line=header_line)

    body = rows[1:]
    if len(body) != n:
        raise WrongOperationCount(f"expected {n} job lines, found {len(body)}", line=header_line)

    jobs = []
    for j, (lineno, fields) in enumerate(body):
        if len(fields) != 2 * m:
            raise WrongOperationCount(
                f"expected {2 * m} fields for {m} operations, got {len(fields)}", line=lineno, job=j
            )
        try:
            values = [int(f) for f in fields]
        except ValueError:
            raise WrongOperationCount(f"non-integer field in job line {fields}", line=lineno, job=j) from None
        ops = []
        seen = set()
        for i in range(m):
            machine, proc = values[2 * i], values[2 * i + 1]
            if not 0 <= machine < m:
                raise MachineIndexOutOfRange(f"machine {machine} not in 0..{m - 1}", line=lineno, job=j)
            if machine in seen:
                raise DuplicateMachineInJob(f"machine {machine} repeated", line=lineno, job=j)
            seen.add(machine)
            if proc < 1:
                raise NonPositiveProcTime(f"proc_time {proc} < 1", line=lineno, job=j)
            ops.append(Operation(machine, proc))
        jobs.append(tuple(ops))

    return Instance(num_jobs=n, num_machines=m, jobs=tuple(jobs), name=name)


def serialize_instance(inst: Instance) -> str:
    """Emit the OR-Library layout; parse(serialize(x)) round-trips exactly."""
    lines = [f"{inst.num_jobs} {inst.num_machines}"]
    for ops in inst.jobs:
        lines.append(" ".join(f"{op.machine} {op.proc_time}" for op in ops))
    return "\n".join(lines) + "\n"


def generate_instance(m: int, n: int, rng: np.random.Generator, name: str | None = None) -> Instance:
    """Random instance: machine order a uniform permutation per job,
    durations uniform on the integers 1..99."""
    if m < 1 or n < 1:
        raise ValueError(f"need m >= 1 and n >= 1, got m={m} n={n}")
    jobs = []
    for _ in range(n):
        machines = rng.permutation(m)
        durations = rng.integers(1, 100, size=m)
        jobs.append(tuple(Operation(int(mc), int(d)) for mc, d in zip(machines, durations)))
    return Instance(num_jobs=n, num_machines=m, jobs=tuple(jobs), name=name or f"rand_{m}x{n}")


def sample_training_size(rng: np.random.Generator) -> tuple[int, int]:
    """Draw (m, n) with m uniform on 5..9 and n uniform on m..9."""
    m = int(rng.integers(5, 10))
    n = int(rng.integers(m, 10))
    return m, n


def total_processing_time(inst: Instance, job: int) -> int:
    """Sum of a job's operation durations (the STPT/LTPT key)."""
    return inst.job_totals[job]
