"""Minimal dense feed-forward networks with analytic backprop.

Everything downstream (DDPG agents, the task-model mixture, the robust
prior) runs on these networks. Parameters live in one flat float64 vector
per network, laid out layer by layer as weights-then-biases, which keeps
optimizer steps and checkpointing trivial.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .errors import CheckpointError, NumericError

ACTIVATIONS = ("identity", "relu", "tanh")
_ACT_CODE = {name: i for i, name in enumerate(ACTIVATIONS)}

CHECKPOINT_MAGIC = b"DPRLNET1"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class LayerSpec:
    """One dense layer: y = act(x @ W + b), W of shape (input_dim, output_dim)."""

    input_dim: int
    output_dim: int
    activation: str = "identity"

    def __post_init__(self):
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError(f"layer dims must be >= 1, got {self.input_dim}x{self.output_dim}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}, expected one of {ACTIVATIONS}")

    @property
    def num_params(self) -> int:
        return self.input_dim * self.output_dim + self.output_dim


def mlp_layers(input_dim, hidden, output_dim, hidden_activation="relu", output_activation="identity"):
    """Layer specs for a plain MLP with the given hidden widths."""
    dims = [input_dim, *hidden, output_dim]
    layers = []
    for i in range(len(dims) - 1):
        act = hidden_activation if i < len(dims) - 2 else output_activation
        layers.append(LayerSpec(dims[i], dims[i + 1], act))
    return layers


def _apply_activation(name, z):
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    return z


def _activation_grad(name, z, h):
    # h is the already-computed activation output, reused where it helps
    if name == "relu":
        return (z > 0.0).astype(np.float64)
    if name == "tanh":
        return 1.0 - h * h
    return np.ones_like(z)


class Network:
    """Fixed-topology MLP over a flat parameter vector.

    forward/backward are pure in the parameters: repeated calls with the
    same inputs give the same outputs, and backward never mutates state.
    """

    def __init__(self, layers, params=None):
        self.layers = list(layers)
        if not self.layers:
            raise ValueError("network needs at least one layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.output_dim != nxt.input_dim:
                raise ValueError(f"layer dim mismatch: {prev.output_dim} -> {nxt.input_dim}")
        self._offsets = []
        off = 0
        for spec in self.layers:
            w_n = spec.input_dim * spec.output_dim
            self._offsets.append((off, off + w_n, off + w_n + spec.output_dim))
            off += spec.num_params
        self.num_params = off
        if params is None:
            params = np.zeros(self.num_params, dtype=np.float64)
        else:
            params = np.asarray(params, dtype=np.float64)
            if params.shape != (self.num_params,):
                raise ValueError(f"expected {self.num_params} parameters, got shape {params.shape}")
        self.params = params

    @property
    def input_dim(self) -> int:
        return self.layers[0].input_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].output_dim

    @classmethod
    def random_init(cls, layers, rng):
        """Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)] per layer, weights and biases."""
        net = cls(layers)
        for spec, (w0, b0, end) in zip(net.layers, net._offsets):
            bound = 1.0 / np.sqrt(spec.input_dim)
            net.params[w0:end] = rng.uniform(-bound, bound, size=end - w0)
        return net

    def layer_views(self, params=None):
        """(W, b) views into the flat vector, one pair per layer."""
        p = self.params if params is None else params
        out = []
        for spec, (w0, b0, end) in zip(self.layers, self._offsets):
            out.append((p[w0:b0].reshape(spec.input_dim, spec.output_dim), p[b0:end]))
        return out

    def _trace(self, x):
        """Forward pass keeping per-layer inputs, pre-activations and outputs."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        h = x.reshape(1, -1) if single else x
        if h.shape[1] != self.input_dim:
            raise ValueError(f"input dim {h.shape[1]} != expected {self.input_dim}")
        inputs, zs, acts = [], [], []
        for spec, (w, b) in zip(self.layers, self.layer_views()):
            inputs.append(h)
            z = h @ w + b
            h = _apply_activation(spec.activation, z)
            zs.append(z)
            acts.append(h)
        return single, inputs, zs, acts

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Evaluate the network; x is a single vector or a (batch, input_dim) matrix."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        h = x.reshape(1, -1) if single else x
        if h.shape[1] != self.input_dim:
            raise ValueError(f"input dim {h.shape[1]} != expected {self.input_dim}")
        for spec, (w, b) in zip(self.layers, self.layer_views()):
            h = _apply_activation(spec.activation, h @ w + b)
        return h[0] if single else h

    def forward_full(self, x):
        """Forward pass returning (output, cache); the cache feeds backward()."""
        cache = self._trace(x)
        single, _, _, acts = cache
        return (acts[-1][0] if single else acts[-1]), cache

    def backward(self, x, upstream, cache=None):
        """Gradients of sum_i upstream_i . y_i w.r.t. parameters and inputs.

        Returns (param_grad, input_grad). param_grad is summed over the
        batch; input_grad has the same leading shape as x. Pass the cache
        from forward_full(x) to skip recomputing the forward pass.
        """
        if cache is None:
            cache = self._trace(x)
        single, inputs, zs, acts = cache
        upstream = np.asarray(upstream, dtype=np.float64)
        g = upstream.reshape(1, -1) if single else upstream
        if g.shape != (inputs[0].shape[0], self.output_dim):
            raise ValueError(f"upstream shape {g.shape} != expected {(inputs[0].shape[0], self.output_dim)}")

        views = self.layer_views()
        grad = np.empty(self.num_params, dtype=np.float64)
        for i in range(len(self.layers) - 1, -1, -1):
            spec = self.layers[i]
            w, _ = views[i]
            w0, b0, end = self._offsets[i]
            g = g * _activation_grad(spec.activation, zs[i], acts[i])
            grad[w0:b0] = (inputs[i].T @ g).ravel()
            grad[b0:end] = g.sum(axis=0)
            g = g @ w.T
        return grad, (g[0] if single else g)

    def clone(self) -> "Network":
        return Network(self.layers, self.params.copy())

    def save(self, path):
        with open(path, "wb") as f:
            f.write(serialize_network(self))

    @classmethod
    def load(cls, path) -> "Network":
        with open(path, "rb") as f:
            return deserialize_network(f.read())


def serialize_network(net: Network) -> bytes:
    chunks = [CHECKPOINT_MAGIC, struct.pack("<I", CHECKPOINT_VERSION), struct.pack("<I", len(net.layers))]
    for spec in net.layers:
        chunks.append(struct.pack("<IIB", spec.input_dim, spec.output_dim, _ACT_CODE[spec.activation]))
    chunks.append(struct.pack("<Q", net.num_params))
    chunks.append(np.ascontiguousarray(net.params, dtype="<f8").tobytes())
    return b"".join(chunks)


def deserialize_network(data: bytes) -> Network:
    def need(n, what, pos):
        if len(data) < pos + n:
            raise CheckpointError(
                f"truncated checkpoint: need {pos + n} bytes for {what}, have {len(data)}"
            )

    need(8, "magic", 0)
    if data[:8] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"bad magic at byte 0: {data[:8]!r} != {CHECKPOINT_MAGIC!r}")
    pos = 8
    need(4, "format version", pos)
    (version,) = struct.unpack_from("<I", data, pos)
    pos += 4
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} at byte 8")
    need(4, "layer count", pos)
    (n_layers,) = struct.unpack_from("<I", data, pos)
    pos += 4
    if n_layers == 0:
        raise CheckpointError("checkpoint declares zero layers")
    layers = []
    for i in range(n_layers):
        need(9, f"layer {i} header", pos)
        in_dim, out_dim, act_code = struct.unpack_from("<IIB", data, pos)
        pos += 9
        if act_code >= len(ACTIVATIONS):
            raise CheckpointError(f"unknown activation code {act_code} at byte {pos - 1}")
        layers.append(LayerSpec(in_dim, out_dim, ACTIVATIONS[act_code]))
    need(8, "parameter count", pos)
    (n_params,) = struct.unpack_from("<Q", data, pos)
    pos += 8
    expected = sum(s.num_params for s in layers)
    if n_params != expected:
        raise CheckpointError(
            f"parameter count {n_params} at byte {pos - 8} does not match layers (expected {expected})"
        )
    need(8 * n_params, "parameter payload", pos)
    if len(data) != pos + 8 * n_params:
        raise CheckpointError(
            f"trailing bytes: expected total length {pos + 8 * n_params}, got {len(data)}"
        )
    params = np.frombuffer(data, dtype="<f8", count=n_params, offset=pos).astype(np.float64)
    bad = np.flatnonzero(~np.isfinite(params))
    if bad.size:
        raise CheckpointError(f"non-finite parameter at index {bad[0]} (byte {pos + 8 * int(bad[0])})")
    return Network(layers, params)


class Optimizer:
    """SGD or Adam over a flat parameter vector.

    step() scales the gradient before it enters the optimizer, so the
    scale can carry a posterior responsibility. A zero scale or an
    all-zero gradient leaves the parameters (and Adam moments) untouched.
    """

    def __init__(self, size, kind="adam", lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        if kind not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer kind {kind!r}")
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        self.kind = kind
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.step_count = 0
        if kind == "adam":
            self.m = np.zeros(size, dtype=np.float64)
            self.v = np.zeros(size, dtype=np.float64)
        else:
            self.m = self.v = None

    def step(self, params, gradient, scale=1.0):
        """One descent step on scale * gradient; returns the new parameter vector."""
        gradient = np.asarray(gradient, dtype=np.float64)
        if gradient.shape != params.shape:
            raise ValueError(f"gradient shape {gradient.shape} != params {params.shape}")
        if not np.all(np.isfinite(gradient)):
            bad = int(np.flatnonzero(~np.isfinite(gradient))[0])
            raise NumericError(f"non-finite gradient entry at index {bad}")
        if scale == 0.0 or not np.any(gradient):
            return params
        g = gradient if scale == 1.0 else scale * gradient
        if self.kind == "sgd":
            return params - self.lr * g
        self.step_count += 1
        self.m *= self.beta1
        self.m += (1.0 - self.beta1) * g
        self.v *= self.beta2
        self.v += (1.0 - self.beta2) * (g * g)
        m_hat = self.m / (1.0 - self.beta1**self.step_count)
        v_hat = self.v / (1.0 - self.beta2**self.step_count)
        np.sqrt(v_hat, out=v_hat)
        v_hat += self.eps
        m_hat /= v_hat
        m_hat *= self.lr
        return params - m_hat


def soft_update(target: np.ndarray, online: np.ndarray, tau: float) -> np.ndarray:
    """Exponential tracking: tau * online + (1 - tau) * target, elementwise."""
    if target.shape != online.shape:
        raise ValueError(f"shape mismatch {target.shape} vs {online.shape}")
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must be in [0, 1], got {tau}")
    return tau * online + (1.0 - tau) * target
