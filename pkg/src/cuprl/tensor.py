"""Flat-parameter MLPs with hand-derived gradients.

All learnable state lives in :class:`ParamVector` (a flat float64 array plus
layer shape metadata). Forward and backward passes are written out explicitly
so they can be cross-checked against central finite differences; there is no
autodiff graph. Double precision throughout.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError, NumericError

__all__ = [
    "ParamVector",
    "AdamState",
    "mlp_init",
    "mlp_forward",
    "mlp_backward",
    "adam_step",
    "adam_step_array",
    "finite_difference_gradient",
    "grad_check",
]

_ACTIVATIONS = ("relu", "tanh", "identity")


@dataclass
class ParamVector:
    """Flat parameter storage for an MLP.

    ``shapes`` holds one ``(out_dim, in_dim)`` pair per layer; the flat
    ``values`` array packs ``W1, b1, W2, b2, ...`` in order, so its length is
    ``sum(out * in + out)``.
    """

    values: np.ndarray
    shapes: tuple[tuple[int, int], ...]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.shapes = tuple((int(o), int(i)) for o, i in self.shapes)
        expected = sum(o * i + o for o, i in self.shapes)
        if self.values.ndim != 1 or self.values.size != expected:
            raise DimensionError(
                f"ParamVector needs {expected} values for shapes {self.shapes}, "
                f"got array of shape {self.values.shape}"
            )

    @property
    def in_dim(self) -> int:
        return self.shapes[0][1]

    @property
    def out_dim(self) -> int:
        return self.shapes[-1][0]

    def layer(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Views of (W, b) for layer k; W has shape (out, in)."""
        off = 0
        for j, (o, i) in enumerate(self.shapes):
            if j == k:
                w = self.values[off : off + o * i].reshape(o, i)
                b = self.values[off + o * i : off + o * i + o]
                return w, b
            off += o * i + o
        raise IndexError(k)

    def zeros_like(self) -> "ParamVector":
        return ParamVector(np.zeros_like(self.values), self.shapes)

    def copy(self) -> "ParamVector":
        return ParamVector(self.values.copy(), self.shapes)

    def all_finite(self) -> bool:
        return bool(np.isfinite(self.values).all())


@dataclass
class AdamState:
    """First/second moment accumulators and step counter for one ParamVector."""

    m: np.ndarray
    v: np.ndarray
    t: int
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def fresh(cls, n_params: int, lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> "AdamState":
        return cls(np.zeros(n_params), np.zeros(n_params), 0, lr, beta1, beta2, eps)


def mlp_init(sizes: Sequence[int], rng: np.random.Generator) -> ParamVector:
    """Uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for weights and biases."""
    shapes = tuple((sizes[k + 1], sizes[k]) for k in range(len(sizes) - 1))
    chunks = []
    for out, inp in shapes:
        bound = 1.0 / np.sqrt(inp)
        chunks.append(rng.uniform(-bound, bound, size=out * inp))
        chunks.append(rng.uniform(-bound, bound, size=out))
    return ParamVector(np.concatenate(chunks), shapes)


def _apply(act: str, z: np.ndarray) -> np.ndarray:
    if act == "relu":
        return np.maximum(z, 0.0)
    if act == "tanh":
        return np.tanh(z)
    if act == "identity":
        return z
    raise ValueError(f"unknown activation {act!r}; expected one of {_ACTIVATIONS}")


def _check_input(params: ParamVector, x: np.ndarray, activations: Sequence[str]):
    if len(activations) != len(params.shapes):
        raise DimensionError(
            f"got {len(activations)} activations for {len(params.shapes)} layers"
        )
    if x.shape[-1] != params.in_dim:
        raise DimensionError(
            f"layer 0 expects input of width {params.in_dim}, got {x.shape[-1]}"
        )


def mlp_forward(params: ParamVector, x, activations: Sequence[str]) -> np.ndarray:
    """Forward pass. ``x`` may be a single vector (d,) or a batch (B, d).

    ``activations`` names one of relu/tanh/identity per layer.
    """
    x = np.asarray(x, dtype=np.float64)
    _check_input(params, x, activations)
    h = x
    for k, act in enumerate(activations):
        w, b = params.layer(k)
        if h.shape[-1] != w.shape[1]:
            raise DimensionError(
                f"layer {k} expects input of width {w.shape[1]}, got {h.shape[-1]}"
            )
        h = _apply(act, h @ w.T + b)
    return h


def mlp_backward(
    params: ParamVector, x, upstream_grad, activations: Sequence[str]
) -> tuple[ParamVector, np.ndarray]:
    """Reverse-mode gradients of the forward map.

    Returns ``(param_grad, input_grad)``. For batched input the parameter
    gradient is summed over the batch, so an upstream of dL/dy rows yields
    dL/dparams directly.
    """
    x = np.asarray(x, dtype=np.float64)
    g = np.asarray(upstream_grad, dtype=np.float64)
    _check_input(params, x, activations)
    if g.shape[-1] != params.out_dim:
        raise DimensionError(
            f"upstream grad has width {g.shape[-1]}, output layer has {params.out_dim}"
        )
    if g.ndim != x.ndim:
        raise DimensionError("upstream grad and input must have matching rank")

    # forward, caching post-activations per layer
    hs = [x]
    zs = []
    h = x
    for k, act in enumerate(activations):
        w, b = params.layer(k)
        z = h @ w.T + b
        zs.append(z)
        h = _apply(act, z)
        hs.append(h)

    batched = x.ndim == 2
    grad = params.zeros_like()
    delta = g
    for k in reversed(range(len(params.shapes))):
        act = activations[k]
        if act == "relu":
            delta = delta * (zs[k] > 0.0)
        elif act == "tanh":
            delta = delta * (1.0 - hs[k + 1] ** 2)
        w, _ = params.layer(k)
        gw, gb = grad.layer(k)
        if batched:
            gw += delta.T @ hs[k]
            gb += delta.sum(axis=0)
        else:
            gw += np.outer(delta, hs[k])
            gb += delta
        delta = delta @ w
    return grad, delta


def adam_step_array(state: AdamState, values: np.ndarray, grads: np.ndarray) -> None:
    """Bias-corrected Adam update, in place on a flat array and its state."""
    if grads.shape != values.shape:
        raise DimensionError(
            f"gradient length {grads.size} does not match parameter length {values.size}"
        )
    if not np.isfinite(grads).all():
        bad = int(np.count_nonzero(~np.isfinite(grads)))
        raise NumericError(f"adam_step: {bad} non-finite gradient entries")
    if state.lr <= 0.0:
        raise ValueError("adam_step: lr must be positive")
    state.t += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = state.m / (1.0 - state.beta1 ** state.t)
    v_hat = state.v / (1.0 - state.beta2 ** state.t)
    values -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    if not np.isfinite(values).all():
        raise NumericError("adam_step produced non-finite parameters")


def adam_step(state: AdamState, params: ParamVector, grads: ParamVector) -> None:
    """Bias-corrected Adam update, in place on ``params`` and ``state``."""
    adam_step_array(state, params.values, grads.values)


def finite_difference_gradient(
    loss_fn: Callable[[ParamVector], float], params: ParamVector, step: float
) -> ParamVector:
    """Central-difference gradient of a scalar loss over every coordinate."""
    base = params.values.copy()
    grad = np.zeros_like(base)
    work = ParamVector(base.copy(), params.shapes)
    for j in range(base.size):
        work.values[j] = base[j] + step
        up = loss_fn(work)
        work.values[j] = base[j] - step
        down = loss_fn(work)
        work.values[j] = base[j]
        grad[j] = (up - down) / (2.0 * step)
    return ParamVector(grad, params.shapes)


def grad_check(
    loss_fn: Callable[[ParamVector], float],
    params: ParamVector,
    analytic_grad: ParamVector,
    step: float,
) -> float:
    """Max relative disagreement between analytic and central-difference grads.

    Per coordinate: |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
    Reports, never raises.
    """
    if step <= 0.0:
        raise ValueError("grad_check: step must be positive")
    numeric = finite_difference_gradient(loss_fn, params, step)
    a = analytic_grad.values
    n = numeric.values
    denom = np.maximum(1e-8, np.abs(a) + np.abs(n))
    return float(np.max(np.abs(a - n) / denom))
