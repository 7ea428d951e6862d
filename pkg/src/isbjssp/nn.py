"""Minimal neural core: MLPs with hand-written reverse-mode gradients,
a six-network parameter store, and an adaptive-moment (Adam) optimizer.

Everything runs in float64; the networks are small and double precision makes
finite-difference gradient checks decisive.  Forward calls accept a single
vector or a stack of row vectors.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


class DimensionMismatch(ValueError):
    pass


class NoCache(RuntimeError):
    pass


class ShapeMismatch(ValueError):
    pass


@dataclass
class Mlp:
    """Affine layers with rectifier activations on the hidden layers."""

    weights: list[np.ndarray]  # each (out, in)
    biases: list[np.ndarray]   # each (out,)

    @classmethod
    def create(cls, dims: list[int], rng: np.random.Generator) -> "Mlp":
        """Fan-in-scaled uniform weights (variance 2/fan_in), zero biases."""
        weights, biases = [], []
        for fan_in, fan_out in zip(dims, dims[1:]):
            bound = np.sqrt(6.0 / fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases)

    @property
    def dims(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    def copy(self) -> "Mlp":
        return Mlp([w.copy() for w in self.weights], [b.copy() for b in self.biases])


@dataclass
class MlpCache:
    inputs: list[np.ndarray]      # input rows of each affine layer
    masks: list[np.ndarray]       # rectifier masks of hidden layers
    squeezed: bool                # original input was a single vector


def mlp_forward(mlp: Mlp, x: np.ndarray) -> tuple[np.ndarray, MlpCache]:
    """Forward pass; keeps the activations needed for backward()."""
    x = np.asarray(x, dtype=np.float64)
    squeezed = x.ndim == 1
    a = x[None, :] if squeezed else x
    if a.shape[1] != mlp.weights[0].shape[1]:
        raise DimensionMismatch(f"input dim {a.shape[1]} != {mlp.weights[0].shape[1]}")
    inputs, masks = [], []
    last = len(mlp.weights) - 1
    for i, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        inputs.append(a)
        z = a @ w.T + b
        if i < last:
            mask = z > 0.0
            masks.append(mask)
            a = z * mask
        else:
            a = z
    out = a[0] if squeezed else a
    return out, MlpCache(inputs, masks, squeezed)


def backward(mlp: Mlp, cache: MlpCache, upstream: np.ndarray) -> tuple[list[tuple[np.ndarray, np.ndarray]], np.ndarray]:
    """Exact reverse-mode gradients from the cached forward pass.

    Returns per-layer (dW, db) plus the gradient with respect to the input.
    The rectifier subgradient at zero is taken as zero.
    """
    if cache is None or not cache.inputs:
        raise NoCache("forward cache required")
    dz = np.asarray(upstream, dtype=np.float64)
    if cache.squeezed:
        dz = dz[None, :]
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(mlp.weights)
    for i in range(len(mlp.weights) - 1, -1, -1):
        a_in = cache.inputs[i]
        grads[i] = (dz.T @ a_in, dz.sum(axis=0))
        dx = dz @ mlp.weights[i]
        if i > 0:
            dz = dx * cache.masks[i - 1]
    return grads, (dx[0] if cache.squeezed else dx)


# The six networks of the scheduler: three 8->8 neighborhood encoders, the
# 48->8 combiner, and the scalar actor and critic heads.
PARAM_DIMS: dict[str, list[int]] = {
    "p": [8, 256, 256, 8],
    "s": [8, 256, 256, 8],
    "d": [8, 256, 256, 8],
    "n": [48, 256, 256, 8],
    "l": [8, 256, 256, 1],
    "v": [8, 256, 256, 1],
}
PARAM_KEYS = tuple(PARAM_DIMS)


@dataclass
class ParamStore:
    nets: dict[str, Mlp]

    def __post_init__(self):
        for key, dims in PARAM_DIMS.items():
            if key not in self.nets:
                raise ShapeMismatch(f"missing network {key!r}")
            if self.nets[key].dims != dims:
                raise ShapeMismatch(f"network {key!r} dims {self.nets[key].dims} != {dims}")

    def __getitem__(self, key: str) -> Mlp:
        return self.nets[key]

    def copy(self) -> "ParamStore":
        return ParamStore({k: net.copy() for k, net in self.nets.items()})

    def flat(self) -> list[tuple[str, int, str, np.ndarray]]:
        """All parameter arrays as (net key, layer, 'W'|'b', array)."""
        out = []
        for key in PARAM_KEYS:
            net = self.nets[key]
            for i in range(len(net.weights)):
                out.append((key, i, "W", net.weights[i]))
                out.append((key, i, "b", net.biases[i]))
        return out


def init_params(rng: np.random.Generator) -> ParamStore:
    """Fresh parameter store; deterministic for a given generator state."""
    return ParamStore({key: Mlp.create(dims, rng) for key, dims in PARAM_DIMS.items()})


def zero_grads(params: ParamStore) -> dict[str, list[tuple[np.ndarray, np.ndarray]]]:
    return {
        key: [(np.zeros_like(w), np.zeros_like(b)) for w, b in zip(net.weights, net.biases)]
        for key, net in params.nets.items()
    }


def accumulate_grads(total, key: str, grads, scale: float = 1.0) -> None:
    """total[key] += scale * grads, layer by layer."""
    for i, (dw, db) in enumerate(grads):
        tw, tb = total[key][i]
        tw += scale * dw
        tb += scale * db


@dataclass
class AdamState:
    """Bias-corrected adaptive-moment optimizer over a ParamStore."""

    lr: float = 2.5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    moments: dict = field(default_factory=dict)  # (key, layer, which) -> (m, v)

    def _get(self, key, i, which, shape):
        slot = self.moments.get((key, i, which))
        if slot is None:
            slot = (np.zeros(shape), np.zeros(shape))
            self.moments[(key, i, which)] = slot
        return slot


def adam_step(adam: AdamState, params: ParamStore, grads, maximize: bool = False) -> None:
    """One in-place update; gradient ascent when maximize is set."""
    adam.step_count += 1
    t = adam.step_count
    c1 = 1.0 - adam.beta1 ** t
    c2 = 1.0 - adam.beta2 ** t
    for key in PARAM_KEYS:
        net = params.nets[key]
        for i in range(len(net.weights)):
            for which, arr, g in (("W", net.weights[i], grads[key][i][0]),
                                  ("b", net.biases[i], grads[key][i][1])):
                if g.shape != arr.shape:
                    raise ShapeMismatch(f"grad shape {g.shape} != param shape {arr.shape} for {key}.{i}.{which}")
                g = -g if maximize else g
                m, v = adam._get(key, i, which, arr.shape)
                m *= adam.beta1
                m += (1.0 - adam.beta1) * g
                v *= adam.beta2
                v += (1.0 - adam.beta2) * np.square(g)
                arr -= adam.lr * (m / c1) / (np.sqrt(v / c2) + adam.eps)


CHECKPOINT_VERSION = 1


def save_checkpoint(path, params: ParamStore, meta: dict | None = None) -> None:
    """Write parameters and metadata to an .npz checkpoint."""
    arrays = {"version": np.array(CHECKPOINT_VERSION)}
    arrays["meta"] = np.array(json.dumps(meta or {}))
    for key, i, which, arr in params.flat():
        arrays[f"{key}.{i}.{which}"] = arr
    np.savez(path, **arrays)


def load_checkpoint(path) -> tuple[ParamStore, dict]:
    """Load a checkpoint; rejects unknown versions and shape mismatches."""
    with np.load(path, allow_pickle=False) as data:
        version = int(data["version"])
        if version != CHECKPOINT_VERSION:
            raise ShapeMismatch(f"unsupported checkpoint version {version}")
        meta = json.loads(str(data["meta"][()]))
        nets = {}
        for key, dims in PARAM_DIMS.items():
            weights, biases = [], []
            for i, (fan_in, fan_out) in enumerate(zip(dims, dims[1:])):
                w = data[f"{key}.{i}.W"]
                b = data[f"{key}.{i}.b"]
                if w.shape != (fan_out, fan_in) or b.shape != (fan_out,):
                    raise ShapeMismatch(f"{key}.{i} has shape {w.shape}/{b.shape}, expected "
                                        f"{(fan_out, fan_in)}/{(fan_out,)}")
                weights.append(w.astype(np.float64))
                biases.append(b.astype(np.float64))
            nets[key] = Mlp(weights, biases)
    return ParamStore(nets), meta
