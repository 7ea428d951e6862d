"""Discrete-time simulator for the interrupting swap-allowed blocking job shop.

Machines have four states: idle, busy, holding (finished operation whose job
still occupies the machine, i.e. blocking) and failed.  Each time step runs a
fixed phase order: recover failed machines whose downtime elapsed, sample new
failures among idle machines, resolve swap cycles, assign ready operations
until none remain, then advance time and collect the reward -n_w (number of
waiting jobs).
"""
from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .graph import (
    DONE,
    NOT_STARTED,
    PROCESSING,
    DisjunctiveGraph,
    GraphObservation,
    NodeId,
    build_graph,
)
from .instance import Instance

# Machine state codes.
M_IDLE = 0
M_BUSY = 1
M_HOLDING = 2
M_FAILED = 3


class Availability(enum.Enum):
    FAILED = "failed"
    BUSY_OR_SWAP_RESERVED = "busy_or_swap_reserved"
    AVAILABLE = "available"
    BLOCKED = "blocked"


class SimError(RuntimeError):
    pass


class NotReady(SimError):
    pass


class SchedulableActionsPending(SimError):
    pass


class StepCapExceeded(SimError):
    pass


class TooLarge(SimError):
    pass


class _TimeAdvance:
    """Marker action for steps in which no operation could be assigned."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "TimeAdvance"


TIME_ADVANCE = _TimeAdvance()


@dataclass
class TransitionSample:
    observation: GraphObservation
    action: NodeId | _TimeAdvance
    reward: float
    old_log_prob: float | None
    value_estimate: float | None
    done: bool


class Decision(NamedTuple):
    """Scheduler callback result carrying policy bookkeeping."""

    action: NodeId
    log_prob: float | None = None
    value: float | None = None


# Called at each decision point with the state, the assignable operations in
# ascending (job, rank) order, and a feature snapshot.  The snapshot is None
# for plain rule schedulers during non-collecting runs; schedulers that need
# it set a truthy `wants_features` attribute.
Scheduler = Callable[["SimState", list[NodeId], GraphObservation | None], "NodeId | Decision"]


@dataclass
class SimState:
    inst: Instance
    graph: DisjunctiveGraph
    now: int
    status: np.ndarray          # (n, m) int8 node status
    ready_time: np.ndarray      # (n, m) int64, -1 until the predecessor completes
    remaining: np.ndarray       # (n, m) int64, meaningful while processing
    start_time: np.ndarray      # (n, m) int64, -1 until started
    complete_time: np.ndarray   # (n, m) int64, -1 until completed
    proc: np.ndarray            # (n, m) int64 durations (static)
    job_totals: np.ndarray      # (n,) int64 (static)
    machine_state: list[int]
    machine_op: list[NodeId | None]
    job_done: list[int]
    queue_nodes: deque          # FIFO of (frozenset[NodeId], machine)
    queue_counters: deque       # FIFO of downtime counters, parallel to queue_nodes
    p_interrupt: float
    t_interrupt: int
    rng: np.random.Generator
    event_log: list = field(default_factory=list)

    @property
    def num_jobs(self) -> int:
        return self.inst.num_jobs

    @property
    def num_machines(self) -> int:
        return self.inst.num_machines

    def all_done(self) -> bool:
        return sum(self.job_done) == self.inst.num_jobs * self.inst.num_machines

    def clone(self) -> "SimState":
        """Cheap copy for search; the PRNG object is shared (callers must
        not sample interruptions on clones, i.e. p_interrupt == 0)."""
        g = self.graph
        graph = DisjunctiveGraph(
            inst=g.inst,
            present=g.present.copy(),
            machine_of=g.machine_of,
            machine_nodes=g.machine_nodes,
            removed_machines=set(g.removed_machines),
        )
        return SimState(
            inst=self.inst,
            graph=graph,
            now=self.now,
            status=self.status.copy(),
            ready_time=self.ready_time.copy(),
            remaining=self.remaining.copy(),
            start_time=self.start_time.copy(),
            complete_time=self.complete_time.copy(),
            proc=self.proc,
            job_totals=self.job_totals,
            machine_state=list(self.machine_state),
            machine_op=list(self.machine_op),
            job_done=list(self.job_done),
            queue_nodes=deque(self.queue_nodes),
            queue_counters=deque(self.queue_counters),
            p_interrupt=self.p_interrupt,
            t_interrupt=self.t_interrupt,
            rng=self.rng,
            event_log=list(self.event_log),
        )


def new_state(
    inst: Instance,
    p_interrupt: float = 0.0,
    t_interrupt: int = 50,
    rng: np.random.Generator | int | None = None,
) -> SimState:
    n, m = inst.num_jobs, inst.num_machines
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    proc = np.array([[op.proc_time for op in ops] for ops in inst.jobs], dtype=np.int64)
    ready = np.full((n, m), -1, dtype=np.int64)
    ready[:, 0] = 0  # first operations are ready at t=0
    return SimState(
        inst=inst,
        graph=build_graph(inst),
        now=0,
        status=np.zeros((n, m), dtype=np.int8),
        ready_time=ready,
        remaining=np.zeros((n, m), dtype=np.int64),
        start_time=np.full((n, m), -1, dtype=np.int64),
        complete_time=np.full((n, m), -1, dtype=np.int64),
        proc=proc,
        job_totals=np.array(inst.job_totals, dtype=np.int64),
        machine_state=[M_IDLE] * m,
        machine_op=[None] * m,
        job_done=[0] * n,
        queue_nodes=deque(),
        queue_counters=deque(),
        p_interrupt=p_interrupt,
        t_interrupt=t_interrupt,
        rng=rng,
    )


def detect_swap_cycles(state: SimState) -> list[list[int]]:
    """Disjoint cycles in the waits-for graph over holding machines.

    Edge a -> b when the successor of the operation held by a must run on b.
    Out-degree is at most one, so cycles are found by pointer chasing.
    """
    succ_machine = {}
    for mach, ms in enumerate(state.machine_state):
        if ms != M_HOLDING:
            continue
        held = state.machine_op[mach]
        succ_machine[mach] = int(state.graph.machine_of[held.job, held.rank + 1])

    color = {}  # 0 in current path index, 1 finished
    cycles = []
    for start in succ_machine:
        if start in color:
            continue
        path = []
        pos = {}
        cur = start
        while cur in succ_machine and cur not in color and cur not in pos:
            pos[cur] = len(path)
            path.append(cur)
            cur = succ_machine[cur]
        if cur in pos:  # closed a new cycle
            cycles.append(path[pos[cur]:])
        for mach in path:
            color[mach] = 1
    return cycles


def machine_availability(state: SimState, machine: int, _cycles: list[list[int]] | None = None) -> Availability:
    """Availability case of one machine (failed / busy-or-swap / available / blocked)."""
    ms = state.machine_state[machine]
    if ms == M_FAILED:
        return Availability.FAILED
    if ms == M_BUSY:
        return Availability.BUSY_OR_SWAP_RESERVED
    if ms == M_HOLDING:
        cycles = detect_swap_cycles(state) if _cycles is None else _cycles
        for cyc in cycles:
            if machine in cyc:
                return Availability.BUSY_OR_SWAP_RESERVED
        return Availability.BLOCKED
    return Availability.AVAILABLE


def ready_operations(state: SimState) -> list[NodeId]:
    """Assignable operations A_Gt in ascending (job, rank) order.

    An operation qualifies when its node is present, it has not started, its
    predecessor is done, and its machine is available.  Machine state idle is
    equivalent to the available case: busy, holding and failed machines are
    exactly the unavailable ones.
    """
    out = []
    m = state.num_machines
    for j in range(state.num_jobs):
        r = state.job_done[j]
        if r >= m or state.status[j, r] != NOT_STARTED:
            continue
        if not state.graph.present[j, r]:
            continue
        if state.machine_state[int(state.graph.machine_of[j, r])] == M_IDLE:
            out.append(NodeId(j, r))
    return out


def execute_swaps(state: SimState) -> int:
    """Resolve every current swap cycle; returns the number of started operations.

    All operations of a cycle start simultaneously: each held job departs its
    machine and its successor begins processing on the next machine in the
    cycle, which is freed by the same rotation.
    """
    cycles = detect_swap_cycles(state)
    started = 0
    for cyc in cycles:
        moves = []
        for mach in cyc:
            held = state.machine_op[mach]
            succ = NodeId(held.job, held.rank + 1)
            target = int(state.graph.machine_of[succ.job, succ.rank])
            moves.append((succ, target))
        for succ, target in moves:
            j, r = succ
            state.status[j, r] = PROCESSING
            state.remaining[j, r] = state.proc[j, r]
            state.start_time[j, r] = state.now
            state.machine_state[target] = M_BUSY
            state.machine_op[target] = succ
            state.event_log.append((state.now, "swap_start", j, r, target))
            started += 1
    return started


def sample_interruptions(state: SimState) -> set[int]:
    """Fail each idle machine independently with probability p_interrupt."""
    if state.p_interrupt <= 0.0:
        return set()
    failed = set()
    for mach in range(state.num_machines):
        if state.machine_state[mach] == M_IDLE and state.rng.random() < state.p_interrupt:
            state.machine_state[mach] = M_FAILED
            removed = state.graph.remove_machine_nodes(mach)
            state.queue_nodes.append((frozenset(removed), mach))
            state.queue_counters.append(0)
            state.event_log.append((state.now, "fail", -1, -1, mach))
            failed.add(mach)
    return failed


def tick_interruptions(state: SimState) -> set[int]:
    """Advance downtime counters; recover machines reaching t_interrupt."""
    if not state.queue_counters:
        return set()
    state.queue_counters = deque(c + 1 for c in state.queue_counters)
    recovered = set()
    while state.queue_counters and state.queue_counters[0] >= state.t_interrupt:
        state.queue_counters.popleft()
        nodes, mach = state.queue_nodes.popleft()
        state.graph.reinstate_nodes(set(nodes))
        state.machine_state[mach] = M_IDLE
        state.event_log.append((state.now, "recover", -1, -1, mach))
        recovered.add(mach)
    return recovered


def apply_action(state: SimState, v: NodeId) -> None:
    """Start operation v on its machine; releases the predecessor's machine."""
    j, r = v
    mach = int(state.graph.machine_of[j, r])
    if (
        state.job_done[j] != r
        or state.status[j, r] != NOT_STARTED
        or not state.graph.present[j, r]
        or state.machine_state[mach] != M_IDLE
    ):
        raise NotReady(f"operation {v} is not assignable now")
    state.status[j, r] = PROCESSING
    state.remaining[j, r] = state.proc[j, r]
    state.start_time[j, r] = state.now
    state.machine_state[mach] = M_BUSY
    state.machine_op[mach] = v
    if r > 0:
        pmach = int(state.graph.machine_of[j, r - 1])
        if state.machine_state[pmach] == M_HOLDING and state.machine_op[pmach] == NodeId(j, r - 1):
            state.machine_state[pmach] = M_IDLE
            state.machine_op[pmach] = None
    state.event_log.append((state.now, "start", j, r, mach))


def count_waiting_jobs(state: SimState) -> int:
    """Jobs whose next operation is unstarted with its predecessor done."""
    m = state.num_machines
    waiting = 0
    for j in range(state.num_jobs):
        r = state.job_done[j]
        if r < m and state.status[j, r] == NOT_STARTED:
            waiting += 1
    return waiting


def advance_time(state: SimState) -> int:
    """Advance one time step; completes operations; returns reward -n_w."""
    if ready_operations(state):
        raise SchedulableActionsPending("assignable operations remain in this step")
    state.now += 1
    m = state.num_machines
    for mach in range(m):
        if state.machine_state[mach] != M_BUSY:
            continue
        j, r = state.machine_op[mach]
        state.remaining[j, r] -= 1
        if state.remaining[j, r] > 0:
            continue
        state.status[j, r] = DONE
        state.complete_time[j, r] = state.now
        state.job_done[j] += 1
        state.event_log.append((state.now, "complete", j, r, mach))
        if r + 1 < state.inst.num_machines:
            state.machine_state[mach] = M_HOLDING  # job blocks until the successor starts
            state.ready_time[j, r + 1] = state.now
        else:
            state.machine_state[mach] = M_IDLE
            state.machine_op[mach] = None
    return -count_waiting_jobs(state)


def observe(state: SimState, actions: list[NodeId] | None = None) -> GraphObservation:
    """Frozen snapshot of features, neighborhood indices and action set."""
    if actions is None:
        actions = ready_operations(state)
    n, m = state.num_jobs, state.num_machines
    t_scale = float(state.inst.max_proc_time)
    status = state.status
    proc = state.proc

    flat_present = state.graph.present.ravel()
    rows_flat = np.flatnonzero(flat_present)
    row_of_flat = np.full(n * m, -1, dtype=np.int64)
    row_of_flat[rows_flat] = np.arange(len(rows_flat))

    not_started = status == NOT_STARTED
    processing = status == PROCESSING
    done = status == DONE

    done_time = (proc * done).sum(axis=1) + ((proc - state.remaining) * processing).sum(axis=1)
    feats = np.empty((n, m, 8), dtype=np.float64)
    feats[:, :, 0] = not_started
    feats[:, :, 1] = processing
    feats[:, :, 2] = done
    feats[:, :, 3] = proc / t_scale
    feats[:, :, 4] = (done_time / state.job_totals)[:, None]
    feats[:, :, 5] = (m - np.arange(m, dtype=np.float64)) / m
    ready_mask = not_started & (state.ready_time >= 0)
    feats[:, :, 6] = ready_mask * np.clip(state.now - state.ready_time, 0, None) / t_scale
    feats[:, :, 7] = processing * state.remaining / t_scale

    features = feats.reshape(n * m, 8)[rows_flat]
    ranks = rows_flat % m
    pred_idx = np.where(ranks > 0, row_of_flat[rows_flat - 1], -1)
    succ_idx = np.where(ranks < m - 1, row_of_flat[np.minimum(rows_flat + 1, n * m - 1)], -1)
    machine_idx = state.graph.machine_of.ravel()[rows_flat]

    node_ids = tuple(NodeId(int(f) // m, int(f) % m) for f in rows_flat)
    action_idx = np.array([row_of_flat[v.job * m + v.rank] for v in actions], dtype=np.int64)
    return GraphObservation(
        node_ids=node_ids,
        features=features,
        pred_idx=pred_idx.astype(np.int64),
        succ_idx=succ_idx.astype(np.int64),
        machine_idx=machine_idx.astype(np.int64),
        num_machines=m,
        action_idx=action_idx,
        action_ids=tuple(actions),
    )


@dataclass
class EpisodeResult:
    transitions: list[TransitionSample]
    makespan: int
    event_log: list
    state: SimState


def run_episode(
    inst: Instance,
    scheduler: Scheduler,
    p_interrupt: float = 0.0,
    t_interrupt: int = 50,
    seed: np.random.Generator | int | None = 0,
    step_cap: int = 1_000_000,
    collect: bool = True,
) -> EpisodeResult:
    """Simulate one full episode under a scheduler callback.

    Per step: recover, fail, swap, assign until no action remains, advance.
    Every assignment produces a transition sample with reward 0; the step
    reward -n_w is attached to the step's last sample, or to a dedicated
    time-advance sample when nothing could be assigned.
    """
    state = new_state(inst, p_interrupt, t_interrupt, rng=seed)
    transitions: list[TransitionSample] = []
    want_obs = collect or bool(getattr(scheduler, "wants_features", False))
    steps = 0
    while True:
        steps += 1
        if steps > step_cap:
            raise StepCapExceeded(f"no termination within {step_cap} steps")
        tick_interruptions(state)
        sample_interruptions(state)
        while execute_swaps(state):
            pass
        acted = 0
        while True:
            actions = ready_operations(state)
            if not actions:
                break
            obs = observe(state, actions) if want_obs else None
            result = scheduler(state, actions, obs)
            if isinstance(result, Decision):
                action, log_prob, value = result
            else:
                action, log_prob, value = result, None, None
            apply_action(state, action)
            if collect:
                transitions.append(TransitionSample(obs, action, 0.0, log_prob, value, done=False))
            acted += 1
        if collect and acted == 0:
            pre_obs = observe(state, [])
        reward = advance_time(state)
        if collect:
            if acted:
                transitions[-1].reward += reward
            else:
                transitions.append(TransitionSample(pre_obs, TIME_ADVANCE, float(reward), None, None, done=False))
        if state.all_done():
            if collect and transitions:
                transitions[-1].done = True
            return EpisodeResult(transitions, state.now, state.event_log, state)


EVENT_CSV_HEADER = "time,event,job,rank,machine"


def event_log_to_csv(event_log: list) -> str:
    lines = [EVENT_CSV_HEADER]
    for t, event, j, r, mach in event_log:
        lines.append(f"{t},{event},{j},{r},{mach}")
    return "\n".join(lines) + "\n"


def parse_event_log_csv(text: str) -> list:
    lines = [ln for ln in text.strip().splitlines() if ln]
    if not lines or lines[0] != EVENT_CSV_HEADER:
        raise ValueError(f"bad event log header: {lines[:1]}")
    out = []
    for ln in lines[1:]:
        t, event, j, r, mach = ln.split(",")
        out.append((int(t), event, int(j), int(r), int(mach)))
    return out


def validate_schedule(inst: Instance, event_log: list) -> list[str]:
    """Audit a completed episode log; returns violation descriptions (empty = ok).

    Checks job precedence, per-machine exclusivity including blocking
    occupancy (a machine is held from an operation's start until its
    successor starts or the job ends), and that no operation starts on a
    machine inside one of its failure windows.
    """
    n, m = inst.num_jobs, inst.num_machines
    starts: dict[NodeId, tuple[int, int]] = {}
    completes: dict[NodeId, int] = {}
    fail_windows: dict[int, list[list[int]]] = {}
    violations = []

    for t, event, j, r, mach in event_log:
        if event in ("start", "swap_start"):
            v = NodeId(j, r)
            if v in starts:
                violations.append(f"duplicate start of {v}")
            starts[v] = (t, mach)
        elif event == "complete":
            v = NodeId(j, r)
            if v in completes:
                violations.append(f"duplicate completion of {v}")
            completes[v] = t
        elif event == "fail":
            fail_windows.setdefault(mach, []).append([t, -1])
        elif event == "recover":
            open_windows = [w for w in fail_windows.get(mach, []) if w[1] == -1]
            if not open_windows:
                violations.append(f"recover without fail on machine {mach} at t={t}")
            else:
                open_windows[0][1] = t

    for j in range(n):
        for r in range(m):
            v = NodeId(j, r)
            if v not in starts or v not in completes:
                violations.append(f"operation {v} missing start or completion")
                continue
            t0, mach = starts[v]
            if mach != inst.machine(j, r):
                violations.append(f"{v} ran on machine {mach}, expected {inst.machine(j, r)}")
            if completes[v] - t0 != inst.proc_time(j, r):
                violations.append(f"{v} duration {completes[v] - t0} != {inst.proc_time(j, r)}")
            if r > 0 and NodeId(j, r - 1) in completes and t0 < completes[NodeId(j, r - 1)]:
                violations.append(f"{v} started at {t0} before predecessor completed")

    if violations:
        return violations

    # blocking occupancy: machine is held from start until the successor starts
    occupancy: dict[int, list[tuple[int, int, NodeId]]] = {mach: [] for mach in range(m)}
    for j in range(n):
        for r in range(m):
            v = NodeId(j, r)
            t0, mach = starts[v]
            release = starts[NodeId(j, r + 1)][0] if r + 1 < m else completes[v]
            if release < completes[v]:
                violations.append(f"{v} released machine {mach} at {release} before completing")
            occupancy[mach].append((t0, release, v))
    for mach, spans in occupancy.items():
        spans.sort()
        for (a0, a1, va), (b0, b1, vb) in zip(spans, spans[1:]):
            if b0 < a1:
                violations.append(f"machine {mach}: {va} [{a0},{a1}) overlaps {vb} [{b0},{b1})")

    for v, (t0, mach) in starts.items():
        for w0, w1 in fail_windows.get(mach, []):
            end = w1 if w1 >= 0 else float("inf")
            if w0 <= t0 < end:
                violations.append(f"{v} started on failed machine {mach} at t={t0} (window [{w0},{end}))")

    return violations


def _settle(state: SimState) -> bool:
    """Advance a seedless deterministic state to the next decision point.

    Returns True when the episode finished.  Assumes p_interrupt == 0.
    """
    while True:
        if ready_operations(state):
            return False
        if state.all_done():
            return True
        advance_time(state)
        while execute_swaps(state):
            pass


def brute_force_optimal(inst: Instance, step_cap: int = 1_000_000) -> tuple[int, list[NodeId]]:
    """Exhaustive search over all assignment choices of the deterministic
    (p_interrupt = 0) simulator; returns (minimal makespan, action sequence).

    Only for tiny instances (num_jobs * num_machines <= 12).
    """
    if inst.num_jobs * inst.num_machines > 12:
        raise TooLarge(f"{inst.num_jobs}x{inst.num_machines} exceeds the brute-force limit")

    best_makespan = [float("inf")]
    best_actions: list[list[NodeId]] = [[]]
    proc = np.array([[op.proc_time for op in ops] for ops in inst.jobs], dtype=np.int64)

    def lower_bound(state: SimState) -> int:
        worst = 0
        for j in range(state.num_jobs):
            rem = 0
            for r in range(state.num_machines):
                st = state.status[j, r]
                if st == NOT_STARTED:
                    rem += int(proc[j, r])
                elif st == PROCESSING:
                    rem += int(state.remaining[j, r])
            worst = max(worst, rem)
        return state.now + worst

    def rec(state: SimState, actions: list[NodeId]) -> None:
        if lower_bound(state) >= best_makespan[0]:
            return
        for v in ready_operations(state):
            child = state.clone()
            apply_action(child, v)
            actions.append(v)
            if _settle(child):
                if child.now < best_makespan[0]:
                    best_makespan[0] = child.now
                    best_actions[0] = list(actions)
            else:
                rec(child, actions)
            actions.pop()

    root = new_state(inst, p_interrupt=0.0, t_interrupt=1, rng=0)
    if _settle(root):  # degenerate: nothing to schedule
        return 0, []
    rec(root, [])
    return int(best_makespan[0]), best_actions[0]


def replay_scheduler(actions: list[NodeId]) -> Scheduler:
    """Scheduler that replays a recorded action sequence in order."""
    queue = deque(actions)

    def schedule(state, actions_now, obs):
        if not queue:
            raise NotReady("replay sequence exhausted")
        v = queue.popleft()
        if v not in actions_now:
            raise NotReady(f"replayed action {v} not assignable")
        return v

    return schedule
