"""Dense layers with hand-derived backward passes.

Training arithmetic is float64 throughout; float32 appears only at file
format boundaries. There is no autodiff graph: the handful of fixed
feed-forward topologies used here cache their activations on an explicit
stack during the forward pass and drain it in reverse during backward.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ShapeError, StateError

FLOAT = np.float64


class ForwardCache:
    """Activation stack filled by one forward pass and drained by one backward.

    Layers push in execution order and pop in reverse, so a single stack
    serves a whole network. Popping an empty stack means backward was called
    without a matching forward (or called twice), which is a state error.
    """

    __slots__ = ("_stack",)

    def __init__(self) -> None:
        self._stack: list[np.ndarray] = []

    def push(self, item: np.ndarray) -> None:
        self._stack.append(item)

    def pop(self) -> np.ndarray:
        if not self._stack:
            raise StateError("backward called without cached forward activations")
        return self._stack.pop()

    def __len__(self) -> int:
        return len(self._stack)


def he_normal(shape: tuple[int, ...], rng) -> np.ndarray:
    """Draw weights from N(0, 2 / fan_in), fan_in being the last dimension.

    ``rng`` is a numpy Generator or an integer seed; the same seed yields
    the same tensor.
    """
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    std = math.sqrt(2.0 / shape[-1])
    return rng.normal(0.0, std, size=shape).astype(FLOAT)


def relu(x: np.ndarray) -> np.ndarray:
    """Elementwise max(0, x)."""
    return np.maximum(x, 0.0)


class Linear:
    """Affine map y = x @ W.T + b with accumulated parameter gradients.

    ``weight`` has shape (out_dim, in_dim). Construction with an rng draws
    He-normal weights and zero biases; without one, everything starts at
    zero (useful for probes and for loading checkpoints).
    """

    def __init__(self, in_dim: int, out_dim: int, rng=None, name: str = "linear") -> None:
        self.name = name
        if rng is None:
            self.weight = np.zeros((out_dim, in_dim), dtype=FLOAT)
        else:
            self.weight = he_normal((out_dim, in_dim), rng)
        self.bias = np.zeros(out_dim, dtype=FLOAT)
        self.grad_weight = np.zeros_like(self.weight)
        self.grad_bias = np.zeros_like(self.bias)

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    def forward(self, x: np.ndarray, cache: ForwardCache | None = None) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ShapeError(
                f"{self.name}: expected input shape (*, {self.in_dim}), got {x.shape}"
            )
        if cache is not None:
            cache.push(x)
        return x @ self.weight.T + self.bias

    def backward(self, grad_out: np.ndarray, cache: ForwardCache) -> np.ndarray:
        """Accumulate parameter gradients and return the input gradient."""
        x = cache.pop()
        if grad_out.shape != (x.shape[0], self.out_dim):
            raise ShapeError(
                f"{self.name}: upstream gradient shape {grad_out.shape} does not "
                f"match output shape ({x.shape[0]}, {self.out_dim})"
            )
        self.grad_weight += grad_out.T @ x
        self.grad_bias += grad_out.sum(axis=0)
        return grad_out @ self.weight

    def zero_grad(self) -> None:
        self.grad_weight[...] = 0.0
        self.grad_bias[...] = 0.0


class Relu:
    """ReLU layer; the subgradient at exactly 0 is taken as 0."""

    def forward(self, x: np.ndarray, cache: ForwardCache | None = None) -> np.ndarray:
        if cache is not None:
            cache.push(x > 0.0)
        return np.maximum(x, 0.0)

    def backward(self, grad_out: np.ndarray, cache: ForwardCache) -> np.ndarray:
        return grad_out * cache.pop()


def stack_forward(layers, x: np.ndarray, cache: ForwardCache | None = None) -> np.ndarray:
    """Run ``x`` through ``layers`` in order."""
    for layer in layers:
        x = layer.forward(x, cache)
    return x


def stack_backward(layers, grad_out: np.ndarray, cache: ForwardCache) -> np.ndarray:
    """Backpropagate through ``layers`` in reverse, returning the input grad."""
    for layer in reversed(layers):
        grad_out = layer.backward(grad_out, cache)
    return grad_out
