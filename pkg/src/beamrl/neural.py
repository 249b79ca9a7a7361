"""Small dense networks with hand-written backpropagation and Adam.

Everything works on batches: inputs are (B, n_in) arrays.  A forward pass
returns the output together with a cache that ``backward`` consumes; the
cache is bound to the parameter version it was computed with, so a gradient
is never taken against parameters that have since been updated.
"""

import base64
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

__all__ = [
    "NonFiniteError",
    "DenseNetwork",
    "Adam",
    "copy_into_target",
    "save_checkpoint",
    "load_checkpoint",
    "actor_network",
    "critic_network",
]

ACTIVATIONS = ("linear", "relu", "tanh", "pi_tanh")


class NonFiniteError(FloatingPointError):
    """A gradient, loss or parameter became NaN or infinite."""


def _activate(kind, z):
    if kind == "linear":
        return z
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "tanh":
        return np.tanh(z)
    if kind == "pi_tanh":
        return np.pi * np.tanh(z)
    raise ValueError(f"unknown activation {kind!r}")


def _activation_grad(kind, z, a):
    # derivative w.r.t. the pre-activation, given pre-activation z and output a
    if kind == "linear":
        return np.ones_like(z)
    if kind == "relu":
        return (z > 0).astype(z.dtype)
    if kind == "tanh":
        return 1.0 - a * a
    if kind == "pi_tanh":
        t = a / np.pi
        return np.pi * (1.0 - t * t)
    raise ValueError(f"unknown activation {kind!r}")


@dataclass
class ForwardCache:
    inputs: List[np.ndarray]
    pre: List[np.ndarray]
    post: List[np.ndarray]
    version: int
    owner: int


class DenseNetwork:
    """Fully connected feed-forward network.

    Args:
        sizes: layer widths including input and output, e.g. ``[64, 128, 1]``.
        activations: one activation tag per affine layer.
        rng: numpy Generator used for initialization.
        final_init_scale: if given, the last layer is drawn from
            U(-scale, scale) instead of the fan-in rule.
    """

    def __init__(self, sizes: Sequence[int], activations: Sequence[str], rng=None,
                 final_init_scale: Optional[float] = None):
        sizes = [int(s) for s in sizes]
        if len(sizes) < 2 or any(s < 1 for s in sizes):
            raise ValueError(f"invalid layer sizes {sizes}")
        if len(activations) != len(sizes) - 1:
            raise ValueError("need one activation per layer")
        for a in activations:
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")
        self.sizes = sizes
        self.activations = list(activations)
        self.final_init_scale = final_init_scale
        rng = np.random.default_rng(rng)
        shapes = []
        for n_in, n_out in zip(sizes[:-1], sizes[1:]):
            shapes += [(n_in, n_out), (n_out,)]
        # one contiguous buffer; weights and biases are views into it
        self._flat = np.empty(sum(int(np.prod(s)) for s in shapes))
        views, pos = [], 0
        for shape in shapes:
            n = int(np.prod(shape))
            views.append(self._flat[pos:pos + n].reshape(shape))
            pos += n
        self.weights = views[0::2]
        self.biases = views[1::2]
        for i, n_in in enumerate(sizes[:-1]):
            bound = 1.0 / np.sqrt(n_in)
            if final_init_scale is not None and i == len(sizes) - 2:
                bound = final_init_scale
            self.weights[i][...] = rng.uniform(-bound, bound, size=self.weights[i].shape)
            self.biases[i][...] = rng.uniform(-bound, bound, size=self.biases[i].shape)
        self.version = 0

    @property
    def params(self) -> List[np.ndarray]:
        """Parameters in a fixed order: W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    @property
    def num_params(self) -> int:
        return sum(p.size for p in self.params)

    def architecture(self) -> dict:
        return {"sizes": self.sizes, "activations": self.activations}

    def same_architecture(self, other: "DenseNetwork") -> bool:
        return self.architecture() == other.architecture()

    def forward(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[None, :]
        if x.shape[-1] != self.sizes[0]:
            raise ValueError(f"expected input width {self.sizes[0]}, got {x.shape[-1]}")
        inputs, pre, post = [], [], []
        a = x
        for w, b, kind in zip(self.weights, self.biases, self.activations):
            inputs.append(a)
            z = a @ w + b
            a = _activate(kind, z)
            pre.append(z)
            post.append(a)
        return a, ForwardCache(inputs, pre, post, self.version, id(self))

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, cache: ForwardCache, grad_out, param_grads: bool = True):
        """Backpropagate ``grad_out`` = dLoss/dOutput.

        Returns ``(grads, grad_input)``; ``grads`` follows the order of
        :attr:`params` and is ``None`` when ``param_grads`` is false.
        """
        if cache.owner != id(self) or cache.version != self.version:
            raise ValueError("stale forward cache: parameters changed since the forward pass")
        g = np.asarray(grad_out, dtype=float)
        if g.shape != cache.post[-1].shape:
            raise ValueError(f"upstream gradient shape {g.shape} != output shape {cache.post[-1].shape}")
        grads = [None] * (2 * len(self.weights)) if param_grads else None
        for i in reversed(range(len(self.weights))):
            g = g * _activation_grad(self.activations[i], cache.pre[i], cache.post[i])
            if param_grads:
                grads[2 * i] = cache.inputs[i].T @ g
                grads[2 * i + 1] = g.sum(axis=0)
            g = g @ self.weights[i].T
        return grads, g

    def set_params(self, values: Sequence[np.ndarray]):
        values = list(values)
        if len(values) != 2 * len(self.weights):
            raise ValueError("wrong number of parameter arrays")
        for i in range(len(self.weights)):
            if np.shape(values[2 * i]) != self.weights[i].shape or np.shape(values[2 * i + 1]) != self.biases[i].shape:
                raise ValueError("parameter shape mismatch")
        for i in range(len(self.weights)):
            self.weights[i][...] = values[2 * i]
            self.biases[i][...] = values[2 * i + 1]
        self.version += 1

    def flat_params(self) -> np.ndarray:
        """Copy of all parameters as one vector (same order as :attr:`params`)."""
        return self._flat.copy()

    def set_flat_params(self, flat):
        flat = np.asarray(flat, dtype=float)
        if flat.shape != self._flat.shape:
            raise ValueError("flat parameter vector has the wrong length")
        self._flat[...] = flat
        self.version += 1

    def all_finite(self) -> bool:
        return bool(np.isfinite(self._flat).all())


@dataclass
class Adam:
    """Adam optimizer state for one network."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: Optional[np.ndarray] = field(default=None, repr=False)
    v: Optional[np.ndarray] = field(default=None, repr=False)

    def apply(self, net: DenseNetwork, grads: Sequence[np.ndarray]):
        """One bias-corrected Adam step, in place.

        Non-finite gradients are rejected before anything is modified.
        """
        params = net.params
        if len(grads) != len(params) or any(g.shape != p.shape for g, p in zip(grads, params)):
            raise ValueError("gradient shapes do not match network parameters")
        g = np.concatenate([np.ravel(x) for x in grads])
        if not np.isfinite(g).all():
            raise NonFiniteError("non-finite gradient; update rejected")
        if self.m is None:
            self.m = np.zeros_like(g)
            self.v = np.zeros_like(g)
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1**t
        c2 = 1.0 - self.beta2**t
        # in place: m, v and the scratch buffer g are reused to avoid temporaries
        self.m *= self.beta1
        self.m += (1.0 - self.beta1) * g
        g *= g
        g *= 1.0 - self.beta2
        self.v *= self.beta2
        self.v += g
        # lr * m_hat / (sqrt(v_hat) + eps)
        np.sqrt(self.v, out=g)
        g *= 1.0 / np.sqrt(c2)
        g += self.eps
        np.divide(self.m, g, out=g)
        g *= self.lr / c1
        np.subtract(net._flat, g, out=g)
        if not np.isfinite(g).all():
            raise NonFiniteError("update produced non-finite parameters")
        net._flat[...] = g
        net.version += 1

    def state_dict(self) -> dict:
        return {"lr": self.lr, "beta1": self.beta1, "beta2": self.beta2,
                "eps": self.eps, "step_count": self.step_count}


def copy_into_target(source: DenseNetwork, target: DenseNetwork) -> DenseNetwork:
    """Hard copy of all parameters (theta' <- theta)."""
    if not source.same_architecture(target):
        raise ValueError("source and target architectures differ")
    target.set_flat_params(source._flat)
    return target


def actor_network(num_antennas: int, rng=None, hidden_factor: int = 4,
                  final_init_scale: float = 1e-3) -> DenseNetwork:
    """(cos, sin)-encoded phases (2M) -> 4M -> 4M -> M phases in (-pi, pi)."""
    m = num_antennas
    h = hidden_factor * m
    return DenseNetwork([2 * m, h, h, m], ["relu", "relu", "pi_tanh"], rng,
                        final_init_scale=final_init_scale)


def critic_network(num_antennas: int, rng=None, hidden_factor: int = 4) -> DenseNetwork:
    """Encoded state and action concatenated (4M) -> 4M -> 4M -> scalar Q."""
    m = num_antennas
    h = hidden_factor * m
    return DenseNetwork([4 * m, h, h, 1], ["relu", "relu", "linear"], rng)


def save_checkpoint(path, nets: dict, extra: Optional[dict] = None):
    """Write a JSON manifest with base64-encoded float64 parameter blobs."""
    doc = {"format": "beamrl-checkpoint", "version": 1, "networks": {}}
    for name, (net, opt) in nets.items():
        entry = {
            "architecture": net.architecture(),
            "params_b64": base64.b64encode(net.flat_params().astype("<f8").tobytes()).decode("ascii"),
        }
        if opt is not None:
            entry["optimizer"] = opt.state_dict()
        doc["networks"][name] = entry
    if extra:
        doc["extra"] = extra
    Path(path).write_text(json.dumps(doc, indent=1))


def load_checkpoint(path, nets: dict) -> dict:
    """Restore parameters into ``nets`` (name -> DenseNetwork), in place.

    Raises ``ValueError`` when a stored architecture differs from the
    receiving network.  Returns the manifest for access to extra fields.
    """
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != "beamrl-checkpoint":
        raise ValueError(f"{path} is not a beamrl checkpoint")
    for name, net in nets.items():
        entry = doc["networks"][name]
        if entry["architecture"] != net.architecture():
            raise ValueError(f"architecture mismatch for network {name!r}")
        flat = np.frombuffer(base64.b64decode(entry["params_b64"]), dtype="<f8")
        net.set_flat_params(flat)
    return doc
