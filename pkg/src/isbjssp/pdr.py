"""The eleven priority dispatching rules.

Each rule scores assignable operations; the highest score wins and exact ties
break toward the smallest (job, rank) so that runs are reproducible.  Work
remaining (MTWR/LTWR) is counted in operations, queue sizes (SQNO/LQNO) count
ready-but-unstarted operations targeting the machine of the candidate's
following operation, and FIFO/LIFO arrival is the time the candidate became
ready.
"""
from __future__ import annotations

import enum

import numpy as np

from .graph import NOT_STARTED, NodeId
from .sim import Decision, SimState


class EmptyActionSet(RuntimeError):
    pass


class Rule(enum.Enum):
    MTWR = "MTWR"
    LTWR = "LTWR"
    SPT = "SPT"
    LPT = "LPT"
    FIFO = "FIFO"
    LIFO = "LIFO"
    SQNO = "SQNO"
    LQNO = "LQNO"
    STPT = "STPT"
    LTPT = "LTPT"
    RANDOM = "RANDOM"

    @classmethod
    def from_name(cls, name: str) -> "Rule":
        try:
            return cls[name.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown dispatching rule {name!r}; expected one of "
                             f"{', '.join(r.value for r in cls)}") from None


def _next_queue_size(state: SimState, v: NodeId) -> int:
    """Ready-but-unstarted operations that need the machine of v's successor."""
    if v.rank + 1 >= state.num_machines:
        return 0
    target = int(state.graph.machine_of[v.job, v.rank + 1])
    count = 0
    for j in range(state.num_jobs):
        r = state.job_done[j]
        if r < state.num_machines and state.status[j, r] == NOT_STARTED \
                and int(state.graph.machine_of[j, r]) == target:
            count += 1
    return count


def priority(rule: Rule, state: SimState, v: NodeId) -> float:
    """Score of a candidate operation under a deterministic rule (higher wins)."""
    if rule is Rule.RANDOM:
        raise ValueError("RANDOM has no priority score; use select()")
    j, r = v
    if rule is Rule.MTWR:
        return float(state.num_machines - r)
    if rule is Rule.LTWR:
        return float(-(state.num_machines - r))
    if rule is Rule.SPT:
        return float(-state.proc[j, r])
    if rule is Rule.LPT:
        return float(state.proc[j, r])
    if rule is Rule.FIFO:
        return float(-state.ready_time[j, r])
    if rule is Rule.LIFO:
        return float(state.ready_time[j, r])
    if rule is Rule.SQNO:
        return float(-_next_queue_size(state, v))
    if rule is Rule.LQNO:
        return float(_next_queue_size(state, v))
    if rule is Rule.STPT:
        return float(-state.job_totals[j])
    if rule is Rule.LTPT:
        return float(state.job_totals[j])
    raise ValueError(f"unhandled rule {rule}")


def select(rule: Rule, state: SimState, actions: list[NodeId], rng: np.random.Generator | None = None) -> NodeId:
    """Pick from a nonempty action set; ties break to the smallest (job, rank)."""
    if not actions:
        raise EmptyActionSet("no assignable operations")
    if rule is Rule.RANDOM:
        if rng is None:
            raise ValueError("RANDOM requires an rng")
        return actions[int(rng.integers(len(actions)))]
    best = actions[0]
    best_score = priority(rule, state, best)
    for v in actions[1:]:
        score = priority(rule, state, v)
        if score > best_score:  # ties keep the earlier (smaller) candidate
            best, best_score = v, score
    return best


def make_scheduler(rule: Rule, rng: np.random.Generator | None = None):
    """Wrap a rule as a simulator scheduler callback."""

    def schedule(state, actions, obs):
        return select(rule, state, actions, rng)

    schedule.__name__ = f"pdr_{rule.value.lower()}"
    return schedule
