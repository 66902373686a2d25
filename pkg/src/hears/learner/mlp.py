"""Tiny fully connected networks over a flat parameter vector.

Hidden layers use tanh, the output layer is linear. Parameters for layer
``i`` are stored as ``W_i`` (fan_in x fan_out, row-major) followed by
``b_i``, so a whole network is one contiguous float64 vector that target
updates, gradient clipping and checkpoints can treat uniformly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MlpShape:
    sizes: tuple[int, ...]

    def __post_init__(self):
        if len(self.sizes) < 2 or any(int(s) < 1 for s in self.sizes):
            raise ValueError(f"invalid layer sizes {self.sizes}")

    @property
    def n_params(self) -> int:
        return sum((i + 1) * o for i, o in zip(self.sizes[:-1], self.sizes[1:]))

    def unpack(self, params: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
        """Views (W, b) into ``params``; writes through the views update ``params``."""
        if params.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got shape {params.shape}")
        layers, k = [], 0
        for i, o in zip(self.sizes[:-1], self.sizes[1:]):
            W = params[k:k + i * o].reshape(i, o)
            k += i * o
            b = params[k:k + o]
            k += o
            layers.append((W, b))
        return layers


def init_params(shape: MlpShape, rng: np.random.Generator, out_scale: float = 0.1) -> np.ndarray:
    """Glorot-uniform hidden layers, a shrunken output layer, zero biases."""
    params = np.zeros(shape.n_params)
    layers = shape.unpack(params)
    for idx, (W, _) in enumerate(layers):
        fan_in, fan_out = W.shape
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        W[...] = rng.uniform(-limit, limit, size=W.shape)
        if idx == len(layers) - 1:
            W *= out_scale
    return params


def mlp_forward(params: np.ndarray, shape: MlpShape, x) -> tuple[np.ndarray, list[np.ndarray]]:
    """Returns the (batch, out) output and the per-layer activations for backprop."""
    h = np.atleast_2d(np.asarray(x, dtype=float))
    if h.shape[1] != shape.sizes[0]:
        raise ValueError(f"input width {h.shape[1]} does not match network input {shape.sizes[0]}")
    layers = shape.unpack(params)
    acts = [h]
    for idx, (W, b) in enumerate(layers):
        h = h @ W + b
        if idx < len(layers) - 1:
            h = np.tanh(h)
        acts.append(h)
    return h, acts


def mlp_backward(params: np.ndarray, shape: MlpShape, acts: list[np.ndarray],
                 grad_out) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of sum(grad_out * output) w.r.t. the parameters and the input."""
    layers = shape.unpack(params)
    grad = np.zeros_like(params)
    g_layers = shape.unpack(grad)
    delta = np.atleast_2d(np.asarray(grad_out, dtype=float))
    if delta.shape != acts[-1].shape:
        raise ValueError(f"grad_out shape {delta.shape} does not match output {acts[-1].shape}")
    for idx in range(len(layers) - 1, -1, -1):
        W, _ = layers[idx]
        gW, gb = g_layers[idx]
        h_in = acts[idx]
        gW[...] = h_in.T @ delta
        gb[...] = delta.sum(axis=0)
        delta = delta @ W.T
        if idx > 0:
            delta = delta * (1.0 - h_in**2)
    return grad, delta


def clip_by_norm(grad: np.ndarray, max_norm: float) -> np.ndarray:
    norm = float(np.linalg.norm(grad))
    if norm > max_norm > 0:
        return grad * (max_norm / norm)
    return grad


def polyak_update(target: np.ndarray, source: np.ndarray, tau: float) -> None:
    """In place: target <- tau * source + (1 - tau) * target."""
    target *= 1.0 - tau
    target += tau * source


class Adam:
    """Adam on a flat parameter vector; ``step`` updates ``params`` in place."""

    def __init__(self, n: int, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> None:
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad**2
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        params -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class Sgd:
    """Plain gradient descent with the same interface as :class:`Adam`."""

    def __init__(self, n: int, lr: float):
        self.lr = lr

    def step(self, params: np.ndarray, grad: np.ndarray) -> None:
        params -= self.lr * grad


def make_optimizer(kind: str, n: int, lr: float):
    if kind == "adam":
        return Adam(n, lr)
    if kind == "sgd":
        return Sgd(n, lr)
    raise ValueError(f"unknown optimizer {kind!r}")
