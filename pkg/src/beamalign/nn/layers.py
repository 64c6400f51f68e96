"""Dense stacks, batch normalization, and the LSTM cell."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numerics import Rng
from .autodiff import (
    Tensor,
    add,
    constant,
    div,
    matmul,
    mean_,
    mul,
    relu,
    sigmoid,
    sqrt_,
    square,
    sub,
    tanh_,
)
from .cplx import unit_modulus, unit_norm
from .optim import ParameterStore

__all__ = ["LstmParams", "LstmState", "lstm_step", "BatchNorm", "DenseStack", "glorot"]


def glorot(rng: Rng, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, (fan_in, fan_out))


@dataclass
class LstmParams:
    """The 12 LSTM tensors: input weights W_*, recurrent weights U_*, biases b_*."""

    w_f: Tensor
    w_i: Tensor
    w_o: Tensor
    w_c: Tensor
    u_f: Tensor
    u_i: Tensor
    u_o: Tensor
    u_c: Tensor
    b_f: Tensor
    b_i: Tensor
    b_o: Tensor
    b_c: Tensor

    @property
    def hidden_dim(self) -> int:
        return self.w_f.value.shape[1]

    @classmethod
    def build(
        cls, store: ParameterStore, prefix: str, input_dim: int, hidden_dim: int, rng: Rng
    ) -> "LstmParams":
        def gate_w(name):
            return store.create(f"{prefix}.w_{name}", glorot(rng, input_dim, hidden_dim))

        def gate_u(name):
            return store.create(f"{prefix}.u_{name}", glorot(rng, hidden_dim, hidden_dim))

        def gate_b(name, offset=0.0):
            return store.create(f"{prefix}.b_{name}", np.full(hidden_dim, offset))

        # Forget-gate bias offset +1 keeps early gradients alive.
        return cls(
            w_f=gate_w("f"),
            w_i=gate_w("i"),
            w_o=gate_w("o"),
            w_c=gate_w("c"),
            u_f=gate_u("f"),
            u_i=gate_u("i"),
            u_o=gate_u("o"),
            u_c=gate_u("c"),
            b_f=gate_b("f", 1.0),
            b_i=gate_b("i"),
            b_o=gate_b("o"),
            b_c=gate_b("c"),
        )


@dataclass
class LstmState:
    """Cell vector c and hidden vector s, both (batch, hidden)."""

    c: Tensor
    s: Tensor

    @classmethod
    def zeros(cls, batch: int, hidden_dim: int) -> "LstmState":
        return cls(c=constant(np.zeros((batch, hidden_dim))), s=constant(np.zeros((batch, hidden_dim))))


def lstm_step(params: LstmParams, state: LstmState, x: Tensor) -> LstmState:
    """One LSTM update.

    f = sig(W_f x + U_f s + b_f), i and o analogous;
    c' = f*c + i*tanh(W_c x + U_c s + b_c);  s' = o*tanh(c').
    """
    if x.value.shape[-1] != params.w_f.value.shape[0]:
        raise ValueError(
            f"lstm input dim {x.value.shape[-1]} != weight input dim {params.w_f.value.shape[0]}"
        )

    def gate(w, u, b):
        return add(add(matmul(x, w), matmul(state.s, u)), b)

    f = sigmoid(gate(params.w_f, params.u_f, params.b_f))
    i = sigmoid(gate(params.w_i, params.u_i, params.b_i))
    o = sigmoid(gate(params.w_o, params.u_o, params.b_o))
    c_new = add(mul(f, state.c), mul(i, tanh_(gate(params.w_c, params.u_c, params.b_c))))
    s_new = mul(o, tanh_(c_new))
    return LstmState(c=c_new, s=s_new)


class BatchNorm:
    """Per-feature batch normalization with running statistics.

    Training mode normalizes by batch statistics (biased variance) and
    updates the running estimates; eval mode uses the frozen estimates.
    """

    def __init__(self, store: ParameterStore, prefix: str, dim: int, momentum: float = 0.99, eps: float = 1e-5):
        self.gamma = store.create(f"{prefix}.gamma", np.ones(dim))
        self.beta = store.create(f"{prefix}.beta", np.zeros(dim))
        self.running_mean = store.create_buffer(f"{prefix}.running_mean", np.zeros(dim))
        self.running_var = store.create_buffer(f"{prefix}.running_var", np.ones(dim))
        self.momentum = momentum
        self.eps = eps

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        if training:
            mu = mean_(x, axis=0, keepdims=True)
            centered = sub(x, mu)
            var = mean_(square(centered), axis=0, keepdims=True)
            self.running_mean *= self.momentum
            self.running_mean += (1.0 - self.momentum) * mu.value[0]
            self.running_var *= self.momentum
            self.running_var += (1.0 - self.momentum) * var.value[0]
            xhat = div(centered, sqrt_(add(var, constant(self.eps))))
        else:
            centered = sub(x, constant(self.running_mean))
            xhat = div(centered, constant(np.sqrt(self.running_var + self.eps)))
        return add(mul(xhat, self.gamma), self.beta)


class DenseStack:
    """Affine -> (batchnorm) -> ReLU hidden chain with a constrained output head.

    ``sizes`` lists hidden widths followed by the output width; the output
    activation is "identity", "unit_norm" (whole-vector l2, matching the
    complex norm of the [Re | Im] packing) or "unit_modulus" (per complex
    entry).
    """

    ACTIVATIONS = ("identity", "unit_norm", "unit_modulus")

    def __init__(
        self,
        store: ParameterStore,
        prefix: str,
        input_dim: int,
        sizes: tuple[int, ...],
        out_activation: str = "unit_norm",
        batchnorm: bool = True,
        rng: Rng | None = None,
    ):
        if out_activation not in self.ACTIVATIONS:
            raise ValueError(f"unknown output activation {out_activation!r}")
        self.out_activation = out_activation
        self.weights: list[Tensor] = []
        self.biases: list[Tensor] = []
        self.norms: list[BatchNorm | None] = []
        dims = [input_dim, *sizes]
        for i in range(len(sizes)):
            w = store.create(f"{prefix}.layer{i}.w", glorot(rng, dims[i], dims[i + 1]))
            hidden = i < len(sizes) - 1
            # A small random bias on the constrained output layer keeps the
            # normalizer away from the exact-zero vector when every ReLU in
            # the last hidden layer happens to be off for a sample.
            if hidden or out_activation == "identity":
                b_init = np.zeros(dims[i + 1])
            else:
                b_init = rng.uniform(-0.1, 0.1, dims[i + 1])
            b = store.create(f"{prefix}.layer{i}.b", b_init)
            self.weights.append(w)
            self.biases.append(b)
            self.norms.append(
                BatchNorm(store, f"{prefix}.bn{i}", dims[i + 1]) if (batchnorm and hidden) else None
            )

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = add(matmul(h, w), b)
            if i < last:
                if self.norms[i] is not None:
                    h = self.norms[i](h, training)
                h = relu(h)
        if self.out_activation == "unit_norm":
            return unit_norm(h)
        if self.out_activation == "unit_modulus":
            return unit_modulus(h)
        return h
