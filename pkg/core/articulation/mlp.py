"""
MLP Decoders
Linear + ReLU chains with cached forward passes and exact reverse-mode gradients
"""

from dataclasses import dataclass

import numpy as np

from core.errors import ShapeMismatchError


@dataclass
class MlpCache:
    inputs: list[np.ndarray]  # input of every layer
    pre_activations: list[np.ndarray]


@dataclass
class MlpDecoder:
    """
    Fully connected decoder; ReLU between layers, linear output

    Attributes:
        weights: per-layer (out, in) matrices
        biases: per-layer (out,) vectors
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        self.weights = [np.asarray(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.asarray(b, dtype=np.float64).reshape(-1) for b in self.biases]
        if not self.weights or len(self.weights) != len(self.biases):
            raise ShapeMismatchError("Decoder needs one bias per weight matrix")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or w.shape[0] != b.shape[0]:
                raise ShapeMismatchError(f"Layer {i}: weight {w.shape} and bias {b.shape} disagree")
            if i and w.shape[1] != self.weights[i - 1].shape[0]:
                raise ShapeMismatchError(
                    f"Layer {i} expects {w.shape[1]} inputs, previous layer gives {self.weights[i - 1].shape[0]}"
                )

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def parameter_count(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    @classmethod
    def create(cls, in_dim: int, hidden: list[int], out_dim: int, seed: int = 0) -> "MlpDecoder":
        """He-uniform hidden layers, zero-initialised output layer"""
        rng = np.random.default_rng(seed)
        dims = [in_dim, *hidden, out_dim]
        weights, biases = [], []
        for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
            if i == len(dims) - 2:
                weights.append(np.zeros((fan_out, fan_in)))
            else:
                limit = np.sqrt(6.0 / fan_in)
                weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases)

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, MlpCache]:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.in_dim:
            raise ShapeMismatchError(f"Decoder expects {self.in_dim} inputs, got {x.shape[-1]}")
        inputs, pre = [], []
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            inputs.append(h)
            z = h @ w.T + b
            pre.append(z)
            h = z if i == last else np.maximum(z, 0.0)
        return h, MlpCache(inputs, pre)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, cache: MlpCache, grad_out: np.ndarray) -> tuple["MlpGrads", np.ndarray]:
        grad_w: list[np.ndarray] = [None] * len(self.weights)
        grad_b: list[np.ndarray] = [None] * len(self.weights)
        g = np.asarray(grad_out, dtype=np.float64)
        last = len(self.weights) - 1
        for i in range(last, -1, -1):
            if i != last:
                g = g * (cache.pre_activations[i] > 0)
            grad_w[i] = g.reshape(-1, g.shape[-1]).T @ cache.inputs[i].reshape(-1, cache.inputs[i].shape[-1])
            grad_b[i] = g.reshape(-1, g.shape[-1]).sum(axis=0)
            g = g @ self.weights[i]
        return MlpGrads(grad_w, grad_b), g

    def parameters(self, prefix: str) -> dict[str, np.ndarray]:
        params = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            params[f"{prefix}.w{i}"] = w
            params[f"{prefix}.b{i}"] = b
        return params

    def with_parameters(self, params: dict[str, np.ndarray], prefix: str) -> "MlpDecoder":
        return MlpDecoder(
            [params.get(f"{prefix}.w{i}", w) for i, w in enumerate(self.weights)],
            [params.get(f"{prefix}.b{i}", b) for i, b in enumerate(self.biases)],
        )

    def zero_head(self) -> "MlpDecoder":
        weights = [w.copy() for w in self.weights]
        biases = [b.copy() for b in self.biases]
        weights[-1][:] = 0.0
        biases[-1][:] = 0.0
        return MlpDecoder(weights, biases)

    def copy(self) -> "MlpDecoder":
        return MlpDecoder([w.copy() for w in self.weights], [b.copy() for b in self.biases])


@dataclass
class MlpGrads:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def as_dict(self, prefix: str) -> dict[str, np.ndarray]:
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"{prefix}.w{i}"] = w
            out[f"{prefix}.b{i}"] = b
        return out


def mlp_backward(dec: MlpDecoder, f: np.ndarray, upstream: np.ndarray) -> tuple[MlpGrads, np.ndarray]:
    """Re-run forward on f and back-propagate upstream gradients"""
    _, cache = dec.forward(f)
    return dec.backward(cache, upstream)


def nonrigid_decode(dec: MlpDecoder, f: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Position, log-scale and rotation offsets (Δx, Δs, Δq)"""
    if dec.out_dim != 9:
        raise ShapeMismatchError(f"Non-rigid decoder must output 9 values, has {dec.out_dim}")
    out = dec(f)
    return out[..., 0:3], out[..., 3:6], out[..., 6:9]


def color_decode(dec: MlpDecoder, f: np.ndarray, sh_degree: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Opacity logit and SH coefficients (..., K, 3)"""
    k = (sh_degree + 1) ** 2
    if dec.out_dim != 1 + 3 * k:
        raise ShapeMismatchError(f"Color decoder must output {1 + 3 * k} values, has {dec.out_dim}")
    out = dec(f)
    return out[..., 0], out[..., 1:].reshape(*out.shape[:-1], k, 3)
