"""Optimizers over named parameter dicts, plus the two schedules used here.

Both optimizers update parameters in place and validate that incoming
gradients are finite and congruent with the parameters, so a diverging run
fails loudly instead of poisoning the weights.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ConfigError, NumericsError, ShapeError


def exponential_lr(base_lr: float, decay: float, epoch: int) -> float:
    """Per-epoch multiplicative decay: base_lr * decay ** epoch."""
    return base_lr * decay**epoch


def cosine_lr(base_lr: float, epoch: int, total_epochs: int) -> float:
    """Half-cosine ramp from base_lr at epoch 0 towards 0 at total_epochs."""
    return 0.5 * base_lr * (1.0 + math.cos(math.pi * epoch / total_epochs))


def _check_grads(params: dict, grads: dict) -> None:
    if set(grads) != set(params):
        missing = sorted(set(params) ^ set(grads))
        raise ShapeError(f"gradient dict does not match parameters: {missing}")
    for name, g in grads.items():
        if g.shape != params[name].shape:
            raise ShapeError(
                f"gradient shape {g.shape} does not match parameter "
                f"'{name}' shape {params[name].shape}"
            )
        if not np.isfinite(g).all():
            raise NumericsError(f"non-finite gradient for tensor '{name}'")


class Adam:
    """Adam with bias-corrected first and second moments.

    The update is p -= lr * m_hat / (sqrt(v_hat) + eps). ``set_epoch``
    applies the exponential schedule lr = base_lr * lr_decay ** epoch.
    """

    def __init__(
        self,
        params: dict[str, np.ndarray],
        lr: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        lr_decay: float = 1.0,
    ) -> None:
        if lr <= 0.0:
            raise ConfigError(f"learning rate must be positive, got {lr}")
        if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
            raise ConfigError(f"betas must lie in [0, 1), got {beta1}, {beta2}")
        if not (0.0 < lr_decay <= 1.0):
            raise ConfigError(f"lr_decay must lie in (0, 1], got {lr_decay}")
        self.params = dict(params)
        self.base_lr = float(lr)
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.lr_decay = float(lr_decay)
        self.step_count = 0
        self._m = {k: np.zeros_like(v) for k, v in self.params.items()}
        self._v = {k: np.zeros_like(v) for k, v in self.params.items()}

    def set_epoch(self, epoch: int) -> None:
        self.lr = exponential_lr(self.base_lr, self.lr_decay, epoch)

    def step(self, grads: dict[str, np.ndarray]) -> None:
        _check_grads(self.params, grads)
        self.step_count += 1
        b1c = 1.0 - self.beta1**self.step_count
        b2c = 1.0 - self.beta2**self.step_count
        for name, p in self.params.items():
            g = grads[name]
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


class MomentumSgd:
    """Classic momentum: v <- momentum * v + g, then p -= lr * v."""

    def __init__(self, params: dict[str, np.ndarray], lr: float, momentum: float = 0.9) -> None:
        if lr <= 0.0:
            raise ConfigError(f"learning rate must be positive, got {lr}")
        if not (0.0 <= momentum < 1.0):
            raise ConfigError(f"momentum must lie in [0, 1), got {momentum}")
        self.params = dict(params)
        self.lr = float(lr)
        self.momentum = float(momentum)
        self.step_count = 0
        self._vel = {k: np.zeros_like(v) for k, v in self.params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        _check_grads(self.params, grads)
        self.step_count += 1
        for name, p in self.params.items():
            vel = self._vel[name]
            vel *= self.momentum
            vel += grads[name]
            p -= self.lr * vel
