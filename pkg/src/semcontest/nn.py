"""Small multilayer perceptron with hand-written backprop and Adam.

Checkpoint layout (UTF-8 text, one item per line)::

    MLPCKPT 1
    activation <name>
    sizes <n0> <n1> ... <nL>
    <W_1 row-major, one float per line, repr precision>
    <b_1>
    ...
    <W_L>
    <b_L>

``W_k`` has shape ``(n_{k-1}, n_k)`` so a layer computes ``x @ W + b``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ParameterError, TrainingError

CHECKPOINT_MAGIC = "MLPCKPT"
CHECKPOINT_VERSION = 1


def _silu(x):
    s = 1.0 / (1.0 + np.exp(-x))
    return x * s


def _silu_grad(x):
    s = 1.0 / (1.0 + np.exp(-x))
    return s * (1.0 + x * (1.0 - s))


def _tanh_grad(x):
    return 1.0 - np.tanh(x) ** 2


ACTIVATIONS = {
    "silu": (_silu, _silu_grad),
    "tanh": (np.tanh, _tanh_grad),
}


@dataclass
class Mlp:
    weights: list
    biases: list
    activation: str = "silu"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ParameterError(f"unknown activation {self.activation!r}")
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ParameterError("need one bias per weight matrix and at least one layer")
        self.weights = [np.array(w, dtype=float) for w in self.weights]
        self.biases = [np.array(b, dtype=float) for b in self.biases]
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ParameterError(f"layer {k}: weight {w.shape} and bias {b.shape} disagree")
            if k and w.shape[0] != self.weights[k - 1].shape[1]:
                raise ParameterError(f"layer {k} input size does not match layer {k - 1}")

    @classmethod
    def init(cls, sizes: Sequence[int], rng: np.random.Generator,
             activation: str = "silu", out_scale: float = 1.0) -> "Mlp":
        """Fan-in scaled uniform init; ``out_scale`` shrinks the last layer."""
        if len(sizes) < 2 or any(int(n) < 1 for n in sizes):
            raise ParameterError("sizes must list at least input and output widths >= 1")
        weights, biases = [], []
        for k, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            bound = 1.0 / math.sqrt(n_in)
            if k == len(sizes) - 2:
                bound *= out_scale
            weights.append(rng.uniform(-bound, bound, size=(n_in, n_out)))
            biases.append(rng.uniform(-bound, bound, size=n_out))
        return cls(weights, biases, activation)

    @property
    def sizes(self) -> list:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def params(self) -> list:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "Mlp":
        return Mlp([w.copy() for w in self.weights], [b.copy() for b in self.biases],
                   self.activation)

    def _check_input(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.sizes[0]:
            raise ParameterError(f"input width {x.shape[-1]} != network input {self.sizes[0]}")
        return x

    def forward(self, x, cache: bool = False):
        """Output for ``x`` of shape ``(..., n0)``; with ``cache`` also the tape for backward."""
        act, _ = ACTIVATIONS[self.activation]
        h = self._check_input(x)
        tape = [h]
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            pre = h @ w + b
            if k < last:
                tape.append(pre)
                h = act(pre)
                tape.append(h)
            else:
                h = pre
        return (h, tape) if cache else h

    __call__ = forward

    def backward(self, x, upstream, tape: list | None = None) -> tuple:
        """Gradients of ``sum(output * upstream)`` for parameters and input.

        Leading batch axes are summed over in the parameter gradients.
        """
        _, grad = ACTIVATIONS[self.activation]
        x = self._check_input(x)
        if tape is None:
            out, tape = self.forward(x, cache=True)
        else:
            out = None
        upstream = np.asarray(upstream, dtype=float)
        expected = x.shape[:-1] + (self.sizes[-1],)
        if upstream.shape != expected:
            raise ParameterError(f"upstream shape {upstream.shape} != output shape {expected}")
        gw = [None] * len(self.weights)
        gb = [None] * len(self.biases)
        delta = upstream
        for k in range(len(self.weights) - 1, -1, -1):
            h_in = tape[2 * k]
            gw[k] = _outer_sum(h_in, delta)
            gb[k] = delta.reshape(-1, delta.shape[-1]).sum(axis=0)
            delta = delta @ self.weights[k].T
            if k > 0:
                delta = delta * grad(tape[2 * k - 1])
        return GradientSet(gw, gb), delta


def _outer_sum(h, delta):
    return h.reshape(-1, h.shape[-1]).T @ delta.reshape(-1, delta.shape[-1])


@dataclass
class GradientSet:
    weights: list
    biases: list

    def params(self) -> list:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def __add__(self, other: "GradientSet") -> "GradientSet":
        return GradientSet([a + b for a, b in zip(self.weights, other.weights)],
                           [a + b for a, b in zip(self.biases, other.biases)])

    def scaled(self, c: float) -> "GradientSet":
        return GradientSet([c * w for w in self.weights], [c * b for b in self.biases])

    @classmethod
    def zeros_like(cls, net: Mlp) -> "GradientSet":
        return cls([np.zeros_like(w) for w in net.weights], [np.zeros_like(b) for b in net.biases])


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def apply_update(net: Mlp, grads: GradientSet, state: AdamState, learning_rate: float) -> Mlp:
    """One bias-corrected Adam descent step, in place; returns ``net``."""
    params = net.params()
    g_list = grads.params()
    if len(g_list) != len(params) or any(g.shape != p.shape for g, p in zip(g_list, params)):
        raise ParameterError("gradient shapes do not match the network")
    for k, g in enumerate(g_list):
        if not np.all(np.isfinite(g)):
            bad = int(np.sum(~np.isfinite(g)))
            raise TrainingError(f"non-finite gradient: {bad} entries in parameter tensor {k}")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.step += 1
    c1 = 1.0 - state.beta1 ** state.step
    c2 = 1.0 - state.beta2 ** state.step
    for p, g, m, v in zip(params, g_list, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= learning_rate * (m / c1) / (np.sqrt(v / c2) + state.eps)
    if not all(np.all(np.isfinite(p)) for p in params):
        raise TrainingError("parameters became non-finite after the update")
    return net


def soft_update(target: Mlp, online: Mlp, eta: float) -> Mlp:
    """``target <- eta * online + (1 - eta) * target`` in place."""
    if target.sizes != online.sizes:
        raise ParameterError(f"target sizes {target.sizes} != online sizes {online.sizes}")
    if not 0.0 <= eta <= 1.0:
        raise ParameterError("eta must lie in [0, 1]")
    for t, o in zip(target.params(), online.params()):
        t *= 1.0 - eta
        t += eta * o
    return target


def save_checkpoint(net: Mlp, path) -> None:
    lines = [f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}", f"activation {net.activation}",
             "sizes " + " ".join(str(n) for n in net.sizes)]
    for p in net.params():
        lines += [repr(float(v)) for v in p.ravel()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_checkpoint(path) -> Mlp:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if len(lines) < 3:
        raise ParameterError("checkpoint is truncated")
    magic = lines[0].split()
    if len(magic) != 2 or magic[0] != CHECKPOINT_MAGIC:
        raise ParameterError("not an MLP checkpoint")
    if int(magic[1]) != CHECKPOINT_VERSION:
        raise ParameterError(f"unsupported checkpoint version {magic[1]}")
    activation = lines[1].split(maxsplit=1)[1]
    sizes = [int(n) for n in lines[2].split()[1:]]
    values = np.array([float(v) for v in lines[3:]], dtype=float)
    expected = sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))
    if values.size != expected:
        raise ParameterError(f"checkpoint holds {values.size} values, sizes need {expected}")
    weights, biases, pos = [], [], 0
    for a, b in zip(sizes[:-1], sizes[1:]):
        weights.append(values[pos:pos + a * b].reshape(a, b))
        pos += a * b
        biases.append(values[pos:pos + b])
        pos += b
    return Mlp(weights, biases, activation)
