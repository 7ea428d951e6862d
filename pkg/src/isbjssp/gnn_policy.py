"""Node embeddings over the disjunctive graph plus the actor and critic heads.

One embedding layer recomputes, for every present node, a combiner MLP over
the concatenation of six blocks: rectified encodings of the summed
predecessor, successor and same-machine neighbor embeddings, the rectified
whole-graph sum, the node's previous embedding, and its initial features.
The same six networks are shared across all layers.  The actor is a softmax
over the assignable nodes' scalar scores; the critic scores the summed final
embeddings.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import GraphObservation, NodeId
from .nn import Mlp, MlpCache, ParamStore, accumulate_grads, backward, mlp_forward, zero_grads


class EmptyActionSet(RuntimeError):
    pass


class EmptyGraph(RuntimeError):
    pass


EMBED_DIM = 8


@dataclass
class _LayerCache:
    h_in: np.ndarray
    cache_p: MlpCache
    cache_s: MlpCache
    cache_d: MlpCache
    cache_n: MlpCache
    mask_p: np.ndarray
    mask_s: np.ndarray
    mask_d: np.ndarray
    mask_total: np.ndarray


@dataclass
class EmbedCache:
    obs: GraphObservation
    layers: list[_LayerCache]
    h_out: np.ndarray


def _aggregate(obs: GraphObservation, h: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Neighborhood sums: predecessor, successor, same-machine, whole graph."""
    n = h.shape[0]
    p_sum = np.zeros_like(h)
    has_pred = obs.pred_idx >= 0
    p_sum[has_pred] = h[obs.pred_idx[has_pred]]
    s_sum = np.zeros_like(h)
    has_succ = obs.succ_idx >= 0
    s_sum[has_succ] = h[obs.succ_idx[has_succ]]
    machine_sum = np.zeros((obs.num_machines, h.shape[1]))
    np.add.at(machine_sum, obs.machine_idx, h)
    d_sum = machine_sum[obs.machine_idx] - h
    total = h.sum(axis=0)
    return p_sum, s_sum, d_sum, total


def embed(obs: GraphObservation, params: ParamStore, layers: int = 3) -> tuple[np.ndarray, EmbedCache]:
    """K stacked layers; returns final per-node embeddings and the tape."""
    if layers < 1:
        raise ValueError("need at least one layer")
    h0 = obs.features
    h = h0
    tape: list[_LayerCache] = []
    for _ in range(layers):
        p_sum, s_sum, d_sum, total = _aggregate(obs, h)
        zp_raw, cache_p = mlp_forward(params["p"], p_sum)
        zs_raw, cache_s = mlp_forward(params["s"], s_sum)
        zd_raw, cache_d = mlp_forward(params["d"], d_sum)
        mask_p, mask_s, mask_d = zp_raw > 0, zs_raw > 0, zd_raw > 0
        mask_total = total > 0
        g_row = total * mask_total
        x = np.concatenate(
            [zp_raw * mask_p, zs_raw * mask_s, zd_raw * mask_d,
             np.broadcast_to(g_row, h.shape), h, h0],
            axis=1,
        )
        h_next, cache_n = mlp_forward(params["n"], x)
        tape.append(_LayerCache(h, cache_p, cache_s, cache_d, cache_n,
                                mask_p, mask_s, mask_d, mask_total))
        h = h_next
    return h, EmbedCache(obs, tape, h)


def embed_backward(cache: EmbedCache, d_h: np.ndarray, params: ParamStore, grad_total) -> None:
    """Accumulate parameter gradients of the embedding stack into grad_total.

    d_h is the loss gradient with respect to the final embeddings; gradients
    flowing into the initial features are discarded (they are data).
    """
    obs = cache.obs
    for layer in reversed(cache.layers):
        grads_n, dx = backward(params["n"], layer.cache_n, d_h)
        accumulate_grads(grad_total, "n", grads_n)
        d_zp = dx[:, 0:8] * layer.mask_p
        d_zs = dx[:, 8:16] * layer.mask_s
        d_zd = dx[:, 16:24] * layer.mask_d
        d_g = dx[:, 24:32]
        d_h_prev = dx[:, 32:40].copy()
        # block 40:48 reaches the initial features only

        grads_p, d_psum = backward(params["p"], layer.cache_p, d_zp)
        accumulate_grads(grad_total, "p", grads_p)
        has_pred = obs.pred_idx >= 0
        np.add.at(d_h_prev, obs.pred_idx[has_pred], d_psum[has_pred])

        grads_s, d_ssum = backward(params["s"], layer.cache_s, d_zs)
        accumulate_grads(grad_total, "s", grads_s)
        has_succ = obs.succ_idx >= 0
        np.add.at(d_h_prev, obs.succ_idx[has_succ], d_ssum[has_succ])

        grads_d, d_dsum = backward(params["d"], layer.cache_d, d_zd)
        accumulate_grads(grad_total, "d", grads_d)
        d_machine = np.zeros((obs.num_machines, EMBED_DIM))
        np.add.at(d_machine, obs.machine_idx, d_dsum)
        d_h_prev += d_machine[obs.machine_idx] - d_dsum

        d_total = (d_g * layer.mask_total).sum(axis=0)
        d_h_prev += d_total  # the graph sum takes every node

        d_h = d_h_prev


def actor_logits(h: np.ndarray, action_idx: np.ndarray, params: ParamStore) -> tuple[np.ndarray, MlpCache]:
    out, cache = mlp_forward(params["l"], h[action_idx])
    return out[:, 0], cache


def actor_probs(h: np.ndarray, action_idx: np.ndarray, params: ParamStore) -> np.ndarray:
    """Softmax over the assignable nodes' scores, max-subtracted for stability."""
    if len(action_idx) == 0:
        raise EmptyActionSet("no assignable operations")
    logits, _ = actor_logits(h, action_idx, params)
    return _softmax(logits)


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    e = np.exp(shifted)
    return e / e.sum()


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    return shifted - np.log(np.exp(shifted).sum())


def critic_value(h: np.ndarray, params: ParamStore) -> float:
    """Score of the summed node embeddings."""
    if h.shape[0] == 0:
        raise EmptyGraph("no present nodes")
    out, _ = mlp_forward(params["v"], h.sum(axis=0))
    return float(out[0])


@dataclass
class PolicyOutput:
    probs: np.ndarray
    log_probs: np.ndarray
    value: float
    embeddings: np.ndarray
    # tapes for the backward pass
    embed_cache: EmbedCache
    actor_cache: MlpCache
    critic_cache: MlpCache


def policy_forward(obs: GraphObservation, params: ParamStore, layers: int = 3) -> PolicyOutput:
    """Embeddings, action distribution and value with all tapes retained."""
    if len(obs.action_idx) == 0:
        raise EmptyActionSet("no assignable operations")
    h, ecache = embed(obs, params, layers)
    logits_out, acache = mlp_forward(params["l"], h[obs.action_idx])
    logits = logits_out[:, 0]
    log_probs = _log_softmax(logits)
    probs = np.exp(log_probs)
    vsum_out, vcache = mlp_forward(params["v"], h.sum(axis=0))
    return PolicyOutput(probs, log_probs, float(vsum_out[0]), h, ecache, acache, vcache)


def policy_backward(
    out: PolicyOutput,
    d_logits: np.ndarray | None,
    d_value: float,
    params: ParamStore,
    grad_total,
) -> None:
    """Route loss gradients through the actor head, critic head and embeddings."""
    obs = out.embed_cache.obs
    d_h = np.zeros_like(out.embeddings)
    if d_logits is not None:
        grads_l, d_rows = backward(params["l"], out.actor_cache, d_logits[:, None])
        accumulate_grads(grad_total, "l", grads_l)
        np.add.at(d_h, obs.action_idx, d_rows)
    if d_value != 0.0:
        grads_v, d_sum = backward(params["v"], out.critic_cache, np.array([d_value]))
        accumulate_grads(grad_total, "v", grads_v)
        d_h += d_sum  # the critic sum takes every node
    embed_backward(out.embed_cache, d_h, params, grad_total)


def act(
    obs: GraphObservation,
    params: ParamStore,
    layers: int = 3,
    mode: str = "sample",
    rng: np.random.Generator | None = None,
) -> tuple[NodeId, float, float]:
    """Pick an action; returns (action, log probability, value estimate)."""
    out = policy_forward(obs, params, layers)
    if mode == "sample":
        if rng is None:
            raise ValueError("sample mode requires an rng")
        idx = int(rng.choice(len(out.probs), p=out.probs))
    elif mode == "greedy":
        idx = int(np.argmax(out.probs))  # first max = smallest (job, rank)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return obs.action_ids[idx], float(out.log_probs[idx]), out.value


def make_policy_scheduler(
    params: ParamStore,
    layers: int = 3,
    mode: str = "greedy",
    rng: np.random.Generator | None = None,
):
    """Simulator scheduler callback driven by the policy."""
    from .sim import Decision

    def schedule(state, actions, obs):
        action, log_prob, value = act(obs, params, layers, mode, rng)
        return Decision(action, log_prob, value)

    schedule.wants_features = True
    schedule.__name__ = f"gnn_{mode}"
    return schedule
