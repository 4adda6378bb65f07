"""Small feedforward networks with hand-written reverse-mode gradients and Adam."""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionMismatchError, DivergenceError, NoForwardPassError
from .models import FloatArray, MlpPayload

logger = logging.getLogger(__name__)

MLP_FORMAT = "hybridrl.mlp"
MLP_VERSION = 1


@dataclass(slots=True)
class ForwardTrace:
    """Activations recorded by a forward pass, consumed by :meth:`Mlp.backward`."""

    inputs: list[FloatArray]  # Input of each layer
    hidden: list[FloatArray]  # tanh outputs of the hidden layers
    batched: bool


class Mlp:
    """Multilayer perceptron with tanh hidden layers and a linear output layer.

    Weights have shape ``(fan_in, fan_out)`` and are initialized uniformly in
    ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]``; biases start at zero. The output layer can be
    scaled down with ``output_scale`` (small initial policy means).
    """

    def __init__(
        self,
        layer_dims: Sequence[int],
        *,
        rng: np.random.Generator | None = None,
        seed: int | None = None,
        output_scale: float = 1.0,
    ) -> None:
        if len(layer_dims) < 2:
            raise ValueError("An MLP needs at least an input and an output width")
        self.layer_dims = [int(d) for d in layer_dims]
        generator = rng if rng is not None else np.random.default_rng(seed)
        self.weights: list[FloatArray] = []
        self.biases: list[FloatArray] = []
        for index, (fan_in, fan_out) in enumerate(zip(self.layer_dims, self.layer_dims[1:])):
            bound = 1.0 / np.sqrt(fan_in)
            weight = generator.uniform(-bound, bound, size=(fan_in, fan_out))
            if index == len(self.layer_dims) - 2:
                weight *= output_scale
            self.weights.append(weight)
            self.biases.append(np.zeros(fan_out))
        self._trace: ForwardTrace | None = None

    @classmethod
    def zeros(cls, layer_dims: Sequence[int]) -> Mlp:
        """Network with all parameters zero."""

        net = cls(layer_dims, seed=0)
        for weight, bias in zip(net.weights, net.biases):
            weight.fill(0.0)
            bias.fill(0.0)
        return net

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def output_dim(self) -> int:
        return self.layer_dims[-1]

    @property
    def params(self) -> list[FloatArray]:
        """Parameters in the order ``[W0, b0, W1, b1, ...]`` (views, not copies)."""

        ordered: list[FloatArray] = []
        for weight, bias in zip(self.weights, self.biases):
            ordered.extend((weight, bias))
        return ordered

    def copy(self) -> Mlp:
        clone = Mlp.__new__(Mlp)
        clone.layer_dims = list(self.layer_dims)
        clone.weights = [w.copy() for w in self.weights]
        clone.biases = [b.copy() for b in self.biases]
        clone._trace = None
        return clone

    def load_from(self, other: Mlp) -> None:
        """Copy parameters of a network with the same topology in place."""

        if other.layer_dims != self.layer_dims:
            raise ValueError(f"Cannot load {other.layer_dims} into {self.layer_dims}")
        for mine, theirs in zip(self.params, other.params):
            mine[...] = theirs

    def forward_trace(self, x: FloatArray) -> tuple[FloatArray, ForwardTrace]:
        """Forward pass returning the output and the recorded activations."""

        array = np.asarray(x, dtype=np.float64)
        if array.shape[-1] != self.input_dim:
            raise DimensionMismatchError(
                "Network input has wrong dimension", self.input_dim, array.shape[-1]
            )
        batched = array.ndim == 2
        activation = array if batched else array[None, :]
        inputs: list[FloatArray] = []
        hidden: list[FloatArray] = []
        last = len(self.weights) - 1
        for index, (weight, bias) in enumerate(zip(self.weights, self.biases)):
            inputs.append(activation)
            activation = activation @ weight + bias
            if index < last:
                activation = np.tanh(activation)
                hidden.append(activation)
        output = activation if batched else activation[0]
        return output, ForwardTrace(inputs, hidden, batched)

    def forward(self, x: FloatArray, *, record: bool = False) -> FloatArray:
        """Evaluate the network on one input ``(d,)`` or a batch ``(N, d)``.

        Args:
            x: Input vector or batch
            record: Keep the activations for a following :meth:`backward`

        Returns:
            Output vector or batch

        Raises:
            DimensionMismatchError: If the input width is wrong
        """
        output, trace = self.forward_trace(x)
        if record:
            self._trace = trace
        return output

    def backward(
        self, grad_output: FloatArray, trace: ForwardTrace | None = None
    ) -> list[FloatArray]:
        """Reverse-mode gradients of a scalar loss given ``dL/d(output)``.

        Batched upstream gradients are summed over the batch.

        Args:
            grad_output: Gradient of the loss with respect to the recorded output
            trace: Trace from :meth:`forward_trace`; defaults to the last recorded pass

        Returns:
            Gradients aligned with :attr:`params`

        Raises:
            NoForwardPassError: If no forward pass was recorded
        """
        active = trace if trace is not None else self._trace
        if active is None:
            raise NoForwardPassError("backward called without a recorded forward pass")
        delta = np.asarray(grad_output, dtype=np.float64)
        if not active.batched:
            delta = delta[None, :]
        if delta.shape != (active.inputs[0].shape[0], self.output_dim):
            raise DimensionMismatchError(
                "Upstream gradient does not match the recorded output",
                self.output_dim,
                delta.shape[-1],
            )
        grads: list[FloatArray] = [np.empty(0)] * (2 * len(self.weights))
        for index in range(len(self.weights) - 1, -1, -1):
            grads[2 * index] = active.inputs[index].T @ delta
            grads[2 * index + 1] = delta.sum(axis=0)
            if index > 0:
                upstream = delta @ self.weights[index].T
                delta = upstream * (1.0 - active.hidden[index - 1] ** 2)
        return grads

    def to_payload(self) -> MlpPayload:
        return {
            "format": MLP_FORMAT,
            "version": MLP_VERSION,
            "layer_dims": list(self.layer_dims),
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_payload(cls, payload: MlpPayload) -> Mlp:
        """Rebuild a network from :meth:`to_payload` output (already validated)."""

        net = cls.zeros(payload["layer_dims"])
        for index, (weight, bias) in enumerate(zip(payload["weights"], payload["biases"])):
            net.weights[index][...] = np.asarray(weight, dtype=np.float64)
            net.biases[index][...] = np.asarray(bias, dtype=np.float64)
        return net


def global_norm(grads: Sequence[FloatArray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))


def clip_by_global_norm(grads: Sequence[FloatArray], max_norm: float) -> list[FloatArray]:
    """Scale gradients so their joint L2 norm is at most ``max_norm``."""

    norm = global_norm(grads)
    if norm <= max_norm or norm == 0.0:
        return list(grads)
    scale = max_norm / norm
    return [g * scale for g in grads]


class Adam:
    """Adam optimizer over a fixed list of parameter arrays, updated in place."""

    def __init__(
        self,
        params: Sequence[FloatArray],
        learning_rate: float = 3e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ) -> None:
        if learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        self.params = list(params)
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]
        self.t = 0

    def step(self, grads: Sequence[FloatArray]) -> None:
        """Apply one update.

        Raises:
            DimensionMismatchError: If the gradients do not match the parameters
            DivergenceError: If any gradient is non-finite; parameters are left untouched
        """
        if len(grads) != len(self.params):
            raise DimensionMismatchError("Gradient count mismatch", len(self.params), len(grads))
        for param, grad in zip(self.params, grads):
            if param.shape != np.shape(grad):
                raise DimensionMismatchError("Gradient shape mismatch", param.size, np.size(grad))
        if not all(bool(np.all(np.isfinite(g))) for g in grads):
            logger.warning("Rejecting update with non-finite gradients at step %d", self.t)
            raise DivergenceError("Non-finite gradient", step=self.t)
        self.t += 1
        correction1 = 1.0 - self.beta1**self.t
        correction2 = 1.0 - self.beta2**self.t
        for param, grad, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad * grad
            param -= self.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + self.eps)


def apply_update(optimizer: Adam, net: Mlp, grads: Sequence[FloatArray]) -> Mlp:
    """Update ``net`` in place with one optimizer step and return it.

    The optimizer must have been created over ``net.params``.
    """
    if len(grads) != len(net.params):
        raise DimensionMismatchError("Gradient count mismatch", len(net.params), len(grads))
    optimizer.step(grads)
    return net
