"""Minimal reverse-mode differentiation for small dense networks.

Everything is float64 numpy. Networks are explicit layer stacks with cached
forward activations, so the backward pass is a plain loop rather than a taped
graph. A forward-mode directional derivative (`Mlp.jvp`) is also provided;
together with `Mlp.backward` it yields exact Fisher-vector products for the
trust-region policy update without a second-order tape.

Conventions: gradients accumulate into ``ParamTensor.grad`` until
``zero_grads`` is called; batched inputs are row-major ``(n, dim)``.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, InputError, StateError

CHECKPOINT_MAGIC = "QNAVCKPT1"

ACTIVATIONS = ("tanh", "relu", "identity", "softplus")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form is stable for large |x|
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def apply_activation(name: str, pre: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return np.tanh(pre)
    if name == "relu":
        return np.maximum(pre, 0.0)
    if name == "identity":
        return pre
    if name == "softplus":
        return np.logaddexp(0.0, pre)
    raise ConfigError(f"unknown activation {name!r}; expected one of {ACTIVATIONS}")


def activation_derivative(name: str, pre: np.ndarray) -> np.ndarray:
    """Elementwise derivative w.r.t. the pre-activation.

    relu uses the zero subgradient at the kink.
    """
    if name == "tanh":
        t = np.tanh(pre)
        return 1.0 - t * t
    if name == "relu":
        return (pre > 0.0).astype(np.float64)
    if name == "identity":
        return np.ones_like(pre)
    if name == "softplus":
        return _sigmoid(pre)
    raise ConfigError(f"unknown activation {name!r}; expected one of {ACTIVATIONS}")


@dataclass
class ParamTensor:
    """A trainable array plus its accumulated gradient (always same shape)."""

    values: np.ndarray
    grad: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.grad is None:
            self.grad = np.zeros_like(self.values)
        else:
            self.grad = np.asarray(self.grad, dtype=np.float64)
        if self.grad.shape != self.values.shape:
            raise InputError(
                f"grad shape {self.grad.shape} does not match values shape {self.values.shape}"
            )

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def size(self) -> int:
        return self.values.size

    def zero_grad(self) -> None:
        self.grad.fill(0.0)


class Mlp:
    """Dense feedforward stack: pre_k = h_{k-1} @ W_k + b_k, h_k = act_k(pre_k)."""

    def __init__(self, weights: list[ParamTensor], biases: list[ParamTensor], activations: list[str]):
        if not (len(weights) == len(biases) == len(activations)):
            raise InputError("weights, biases and activations must have equal length")
        for name in activations:
            if name not in ACTIVATIONS:
                raise ConfigError(f"unknown activation {name!r}; expected one of {ACTIVATIONS}")
        self.weights = weights
        self.biases = biases
        self.activations = list(activations)
        self._cache: list[tuple[np.ndarray, np.ndarray]] | None = None

    @classmethod
    def create(
        cls,
        sizes: Sequence[int],
        activations: Sequence[str],
        rng: np.random.Generator,
        final_zero: bool = False,
    ) -> "Mlp":
        """Build with fan-in scaled normal weights; optionally zero the last layer."""
        if len(sizes) < 2:
            raise ConfigError("need at least input and output sizes")
        if len(activations) != len(sizes) - 1:
            raise ConfigError("need one activation per layer")
        weights, biases = [], []
        for k in range(len(sizes) - 1):
            fan_in, fan_out = sizes[k], sizes[k + 1]
            w = rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_in, fan_out))
            if final_zero and k == len(sizes) - 2:
                w = np.zeros((fan_in, fan_out))
            weights.append(ParamTensor(w))
            biases.append(ParamTensor(np.zeros(fan_out)))
        return cls(weights, biases, list(activations))

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]

    def params(self) -> list[ParamTensor]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params())

    def zero_grads(self) -> None:
        for p in self.params():
            p.zero_grad()

    def flat_params(self) -> np.ndarray:
        return np.concatenate([p.values.ravel() for p in self.params()])

    def set_flat_params(self, vec: np.ndarray) -> None:
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.n_params,):
            raise InputError(f"expected flat vector of length {self.n_params}, got {vec.shape}")
        i = 0
        for p in self.params():
            p.values[...] = vec[i : i + p.size].reshape(p.shape)
            i += p.size

    def flat_grads(self) -> np.ndarray:
        return np.concatenate([p.grad.ravel() for p in self.params()])

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Run the stack, caching layer inputs and pre-activations for backward/jvp."""
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 1
        h = x.reshape(1, -1) if squeeze else x
        if h.shape[1] != self.in_dim:
            raise InputError(f"input dim {h.shape[1]} does not match network input {self.in_dim}")
        cache = []
        for w, b, act in zip(self.weights, self.biases, self.activations):
            pre = h @ w.values + b.values
            cache.append((h, pre))
            h = apply_activation(act, pre)
        self._cache = cache
        return h[0] if squeeze else h

    def backward(self, grad_out: np.ndarray, accumulate: bool = True) -> np.ndarray:
        """Backpropagate an output gradient through the cached forward pass.

        Accumulates into each ParamTensor.grad (unless accumulate=False) and
        returns the gradient w.r.t. the forward input.
        """
        if self._cache is None:
            raise StateError("backward called before forward")
        g = np.asarray(grad_out, dtype=np.float64)
        squeeze = g.ndim == 1
        if squeeze:
            g = g.reshape(1, -1)
        if g.shape != (self._cache[-1][1].shape[0], self.out_dim):
            raise InputError(
                f"grad_out shape {g.shape} does not match forward output "
                f"({self._cache[-1][1].shape[0]}, {self.out_dim})"
            )
        for k in range(len(self.weights) - 1, -1, -1):
            h_in, pre = self._cache[k]
            gpre = g * activation_derivative(self.activations[k], pre)
            if accumulate:
                self.weights[k].grad += h_in.T @ gpre
                self.biases[k].grad += gpre.sum(axis=0)
            g = gpre @ self.weights[k].values.T
        return g[0] if squeeze else g

    def grad_wrt_params(self, grad_out: np.ndarray) -> np.ndarray:
        """Like backward but returns a fresh flat parameter gradient, leaving .grad alone."""
        if self._cache is None:
            raise StateError("grad_wrt_params called before forward")
        g = np.asarray(grad_out, dtype=np.float64)
        if g.ndim == 1:
            g = g.reshape(1, -1)
        pieces: list[np.ndarray] = [None] * (2 * len(self.weights))  # type: ignore[list-item]
        for k in range(len(self.weights) - 1, -1, -1):
            h_in, pre = self._cache[k]
            gpre = g * activation_derivative(self.activations[k], pre)
            pieces[2 * k] = (h_in.T @ gpre).ravel()
            pieces[2 * k + 1] = gpre.sum(axis=0)
            g = gpre @ self.weights[k].values.T
        return np.concatenate(pieces)

    def jvp(self, direction: np.ndarray) -> np.ndarray:
        """Directional derivative of the last forward output w.r.t. parameters.

        `direction` is a flat vector over params(); the input is held fixed.
        """
        if self._cache is None:
            raise StateError("jvp called before forward")
        direction = np.asarray(direction, dtype=np.float64)
        if direction.shape != (self.n_params,):
            raise InputError(f"expected direction of length {self.n_params}, got {direction.shape}")
        offs, dirs = 0, []
        for p in self.params():
            dirs.append(direction[offs : offs + p.size].reshape(p.shape))
            offs += p.size
        dh = np.zeros_like(self._cache[0][0])
        for k in range(len(self.weights)):
            h_in, pre = self._cache[k]
            dw, db = dirs[2 * k], dirs[2 * k + 1]
            dpre = dh @ self.weights[k].values + h_in @ dw + db
            dh = dpre * activation_derivative(self.activations[k], pre)
        return dh


def finite_diff_check(
    f: Callable[[np.ndarray], tuple[float, np.ndarray]],
    x: np.ndarray,
    step: float = 1e-5,
) -> float:
    """Compare analytic against central-difference gradients of a scalar function.

    `f(x)` must return ``(value, grad)``. Returns
    ``max_i |g_analytic_i - g_numeric_i| / max(1, |g_numeric_i|)``.
    """
    if step <= 0.0:
        raise ConfigError("finite difference step must be positive")
    x = np.asarray(x, dtype=np.float64)
    _, analytic = f(x)
    analytic = np.asarray(analytic, dtype=np.float64)
    if analytic.shape != x.shape:
        raise InputError(f"gradient shape {analytic.shape} does not match input {x.shape}")
    numeric = np.zeros_like(x)
    flat = x.ravel()
    num_flat = numeric.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi, _ = f(x)
        flat[i] = orig - step
        lo, _ = f(x)
        flat[i] = orig
        num_flat[i] = (hi - lo) / (2.0 * step)
    err = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric))
    return float(err.max()) if err.size else 0.0


@dataclass
class AdamState:
    """First/second moment accumulators for a fixed parameter list."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: Sequence[ParamTensor]) -> "AdamState":
        n = sum(p.size for p in params)
        return cls(m=np.zeros(n), v=np.zeros(n))


def adam_step(params: Sequence[ParamTensor], state: AdamState, lr: float = 1e-4) -> None:
    """One bias-corrected Adam update from the gradients currently in .grad."""
    if lr <= 0.0:
        raise ConfigError("learning rate must be positive")
    g = np.concatenate([p.grad.ravel() for p in params])
    if g.shape != state.m.shape:
        raise InputError("AdamState was created for a different parameter list")
    state.t += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * g
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * g * g
    m_hat = state.m / (1.0 - state.beta1**state.t)
    v_hat = state.v / (1.0 - state.beta2**state.t)
    delta = -lr * m_hat / (np.sqrt(v_hat) + state.eps)
    i = 0
    for p in params:
        p.values += delta[i : i + p.size].reshape(p.shape)
        i += p.size


def save_checkpoint(path: str, arrays: dict[str, np.ndarray], meta: dict) -> None:
    """Write named float64 arrays plus a JSON meta block in a single binary file."""
    header = {
        "version": 1,
        "arrays": [{"name": k, "shape": list(np.asarray(v).shape)} for k, v in arrays.items()],
        "meta": meta,
    }
    with open(path, "wb") as fh:
        fh.write((CHECKPOINT_MAGIC + "\n").encode("ascii"))
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode("utf-8"))
        for v in arrays.values():
            fh.write(np.ascontiguousarray(v, dtype=np.float64).tobytes())


def load_checkpoint(path: str) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        buf = io.BufferedReader(fh)  # type: ignore[arg-type]
        magic = buf.readline().decode("ascii", errors="replace").strip()
        if magic != CHECKPOINT_MAGIC:
            raise InputError(f"not a checkpoint file (magic {magic!r})")
        try:
            header = json.loads(buf.readline().decode("utf-8"))
        except json.JSONDecodeError as exc:
            raise InputError(f"corrupt checkpoint header: {exc}") from exc
        arrays: dict[str, np.ndarray] = {}
        for spec in header["arrays"]:
            shape = tuple(spec["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = buf.read(count * 8)
            if len(raw) != count * 8:
                raise InputError("checkpoint truncated")
            arrays[spec["name"]] = np.frombuffer(raw, dtype=np.float64).reshape(shape).copy()
    return arrays, header.get("meta", {})


def mlp_to_arrays(mlp: Mlp, prefix: str) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    for k, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        out[f"{prefix}.w{k}"] = w.values
        out[f"{prefix}.b{k}"] = b.values
    return out


def mlp_from_arrays(arrays: dict[str, np.ndarray], prefix: str, activations: Sequence[str]) -> Mlp:
    weights, biases = [], []
    k = 0
    while f"{prefix}.w{k}" in arrays:
        weights.append(ParamTensor(arrays[f"{prefix}.w{k}"].copy()))
        biases.append(ParamTensor(arrays[f"{prefix}.b{k}"].copy()))
        k += 1
    if not weights:
        raise InputError(f"no layers found under prefix {prefix!r}")
    if len(activations) != len(weights):
        raise InputError("activation list does not match stored layer count")
    return Mlp(weights, biases, list(activations))
