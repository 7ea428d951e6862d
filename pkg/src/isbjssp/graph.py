"""Dynamic disjunctive graph: topology, node presence, neighborhoods, features.

Nodes are operations, addressed as (job, rank).  Conjunctive edges run along
each job's operation sequence; disjunctive cliques connect all operations
sharing a machine and are stored implicitly through the machine assignment
plus per-node presence flags, so removing and reinstating a machine's nodes
is a flag flip that restores the exact original topology.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .instance import Instance

# Node status codes (feature one-hot order).
NOT_STARTED = 0
PROCESSING = 1
DONE = 2


class NodeId(NamedTuple):
    job: int
    rank: int


class GraphError(RuntimeError):
    pass


class AlreadyRemoved(GraphError):
    pass


class NotRemoved(GraphError):
    pass


class AbsentNode(GraphError):
    pass


@dataclass
class DisjunctiveGraph:
    inst: Instance
    present: np.ndarray                    # (n, m) bool
    machine_of: np.ndarray                 # (n, m) int
    machine_nodes: tuple[tuple[NodeId, ...], ...]  # static clique membership per machine
    removed_machines: set[int] = field(default_factory=set)

    @property
    def num_jobs(self) -> int:
        return self.inst.num_jobs

    @property
    def num_machines(self) -> int:
        return self.inst.num_machines

    def is_present(self, v: NodeId) -> bool:
        return bool(self.present[v.job, v.rank])

    def conj_pred(self, v: NodeId) -> NodeId | None:
        if v.rank == 0:
            return None
        p = NodeId(v.job, v.rank - 1)
        return p if self.is_present(p) else None

    def conj_succ(self, v: NodeId) -> NodeId | None:
        if v.rank == self.num_machines - 1:
            return None
        s = NodeId(v.job, v.rank + 1)
        return s if self.is_present(s) else None

    def neighborhoods(self, v: NodeId) -> tuple[set[NodeId], set[NodeId], set[NodeId]]:
        """(N_p, N_s, N_d) of a present node, restricted to present nodes."""
        if not self.is_present(v):
            raise AbsentNode(f"node {v} is absent")
        p = self.conj_pred(v)
        s = self.conj_succ(v)
        mach = int(self.machine_of[v.job, v.rank])
        n_d = {w for w in self.machine_nodes[mach] if w != v and self.is_present(w)}
        return (set() if p is None else {p}, set() if s is None else {s}, n_d)

    def remove_machine_nodes(self, machine: int) -> set[NodeId]:
        """Mark all of a machine's nodes absent; returns the removed set."""
        if machine in self.removed_machines:
            raise AlreadyRemoved(f"machine {machine} already removed")
        removed = set(self.machine_nodes[machine])
        for v in removed:
            self.present[v.job, v.rank] = False
        self.removed_machines.add(machine)
        return removed

    def reinstate_nodes(self, nodes: set[NodeId]) -> None:
        """Add back the nodes of one previously removed machine."""
        machines = {int(self.machine_of[v.job, v.rank]) for v in nodes}
        if len(machines) != 1:
            raise NotRemoved(f"nodes span machines {sorted(machines)}, expected exactly one")
        machine = machines.pop()
        if machine not in self.removed_machines:
            raise NotRemoved(f"machine {machine} is not removed")
        if nodes != set(self.machine_nodes[machine]):
            raise NotRemoved(f"node set does not match machine {machine}'s clique")
        for v in nodes:
            if self.present[v.job, v.rank]:
                raise NotRemoved(f"node {v} is already present")
            self.present[v.job, v.rank] = True
        self.removed_machines.discard(machine)

    def present_nodes(self) -> list[NodeId]:
        """All present nodes in (job, rank) ascending order."""
        out = []
        n, m = self.present.shape
        for j in range(n):
            for r in range(m):
                if self.present[j, r]:
                    out.append(NodeId(j, r))
        return out

    def edges(self) -> list[tuple[NodeId, NodeId, str]]:
        """Edge list over present nodes; disjunctive pairs emitted once (v < w)."""
        out = []
        for v in self.present_nodes():
            s = self.conj_succ(v)
            if s is not None:
                out.append((v, s, "conj"))
            _, _, n_d = self.neighborhoods(v)
            for w in n_d:
                if v < w:
                    out.append((v, w, "disj"))
        out.sort()
        return out

    def dump_edges(self) -> str:
        """Plain-text edge list for golden-file comparisons."""
        return "\n".join(f"{v.job}:{v.rank} -> {w.job}:{w.rank} [{kind}]" for v, w, kind in self.edges())


def build_graph(inst: Instance) -> DisjunctiveGraph:
    """Static disjunctive graph of an instance with every node present."""
    n, m = inst.num_jobs, inst.num_machines
    machine_of = np.empty((n, m), dtype=np.int64)
    cliques: list[list[NodeId]] = [[] for _ in range(m)]
    for j in range(n):
        for r in range(m):
            mach = inst.machine(j, r)
            machine_of[j, r] = mach
            cliques[mach].append(NodeId(j, r))
    return DisjunctiveGraph(
        inst=inst,
        present=np.ones((n, m), dtype=bool),
        machine_of=machine_of,
        machine_nodes=tuple(tuple(c) for c in cliques),
    )


def node_features(state, v: NodeId) -> np.ndarray:
    """8-component feature vector of a present node.

    Layout: status one-hot (3), scaled duration, job degree of completion,
    scaled count of remaining operations in the job, scaled waiting time,
    scaled remaining processing time.  Time-valued entries are scaled by the
    instance's maximum operation duration.
    """
    if not state.graph.is_present(v):
        raise AbsentNode(f"node {v} is absent")
    inst = state.inst
    j, r = v.job, v.rank
    m = inst.num_machines
    t_scale = float(inst.max_proc_time)
    status = int(state.status[j, r])

    x = np.zeros(8, dtype=np.float64)
    x[status] = 1.0
    x[3] = inst.proc_time(j, r) / t_scale

    done_time = 0
    for i in range(m):
        st = int(state.status[j, i])
        if st == DONE:
            done_time += inst.proc_time(j, i)
        elif st == PROCESSING:
            done_time += inst.proc_time(j, i) - int(state.remaining[j, i])
    x[4] = done_time / inst.job_totals[j]

    x[5] = (m - r) / m

    if status == NOT_STARTED and state.ready_time[j, r] >= 0:
        x[6] = max(0, state.now - int(state.ready_time[j, r])) / t_scale
    if status == PROCESSING:
        x[7] = int(state.remaining[j, r]) / t_scale
    return x


@dataclass(frozen=True)
class GraphObservation:
    """Frozen decision-point snapshot consumed by the policy.

    Rows follow (job, rank) ascending order over present nodes.  pred_idx and
    succ_idx hold row indices (-1 when the neighbor is absent or nonexistent);
    disjunctive neighborhoods are implied by machine_idx.  action_idx marks
    the rows that may be scheduled now.
    """

    node_ids: tuple[NodeId, ...]
    features: np.ndarray        # (N, 8) float64
    pred_idx: np.ndarray        # (N,) int64
    succ_idx: np.ndarray        # (N,) int64
    machine_idx: np.ndarray     # (N,) int64
    num_machines: int
    action_idx: np.ndarray      # (A,) int64 rows into node_ids
    action_ids: tuple[NodeId, ...]

    @property
    def num_nodes(self) -> int:
        return len(self.node_ids)

    def neighborhoods(self, row: int) -> tuple[list[int], list[int], list[int]]:
        """(N_p, N_s, N_d) as row index lists; mirrors the live graph."""
        n_p = [int(self.pred_idx[row])] if self.pred_idx[row] >= 0 else []
        n_s = [int(self.succ_idx[row])] if self.succ_idx[row] >= 0 else []
        mach = self.machine_idx[row]
        n_d = [k for k in range(self.num_nodes) if k != row and self.machine_idx[k] == mach]
        return n_p, n_s, n_d
