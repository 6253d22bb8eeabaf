"""Coordinate MLP with exact spatial and parameter gradients.

The network maps a 3D point to two occupancy logits, ordered (z0, z1)
with z0 for the outside class and z1 for inside.  Parameters live in a single flat float vector
(`ParamVector`) with a fixed canonical layout so they can be optimized,
checkpointed and diffed as one array:

    for each hidden layer l = 0..L-1:   W_l (row-major, shape out x in), b_l
    then the output layer:              W_out (2 x width), b_out (2)

The hidden layer at ``skip_layer_index`` additionally receives the raw
input concatenated to its activations, so its weight matrix is
``width x (width + 3)``; the three input columns sit last.

Differentiation is delegated to torch on CPU tensors that share memory
with (or are cast from) the flat vector.  Objectives built on top may
contain spatial gradients of the network; parameter gradients of such
objectives are exact (double backward), which is what the boundary
sampling loss requires.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np
import torch
import torch.nn.functional as F

from .errors import ConfigError, NumericError

Array = np.ndarray

IN_DIM = 3
ACTIVATIONS = ("softplus", "relu")


@dataclass(frozen=True)
class NetworkConfig:
    """Architecture of the occupancy MLP. ``output_dim`` is fixed at 2."""

    num_hidden_layers: int = 8
    hidden_width: int = 256
    skip_layer_index: Optional[int] = 4
    activation: str = "softplus"
    softplus_beta: float = 100.0
    output_dim: int = 2

    def __post_init__(self):
        if self.output_dim != 2:
            raise ConfigError("output_dim is fixed at 2 (two occupancy logits)")
        if self.num_hidden_layers < 1:
            raise ConfigError("need at least one hidden layer")
        if self.hidden_width < 4:
            raise ConfigError("hidden_width must be >= 4")
        if self.skip_layer_index is not None:
            if not (1 <= self.skip_layer_index < self.num_hidden_layers):
                raise ConfigError(
                    "skip_layer_index must satisfy 1 <= index < num_hidden_layers"
                )
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"activation must be one of {ACTIVATIONS}")
        if self.activation == "softplus" and self.softplus_beta <= 0:
            raise ConfigError("softplus_beta must be positive")

    def layer_shapes(self) -> list[tuple[int, int]]:
        """(out, in) shapes of every linear layer, hidden layers first."""
        shapes = []
        for i in range(self.num_hidden_layers):
            d_in = IN_DIM if i == 0 else self.hidden_width
            if self.skip_layer_index is not None and i == self.skip_layer_index:
                d_in += IN_DIM
            shapes.append((self.hidden_width, d_in))
        shapes.append((self.output_dim, self.hidden_width))
        return shapes

    def param_count(self) -> int:
        return sum(o * i + o for o, i in self.layer_shapes())


@dataclass
class EvalRecord:
    """One network evaluation: logits (z0, z1) and, when requested, the
    2x3 Jacobian of the logits with respect to the input point."""

    logits: Array
    spatial_jacobian: Optional[Array] = None


def check_params(params: Array, cfg: NetworkConfig) -> Array:
    params = np.asarray(params)
    if params.ndim != 1 or params.shape[0] != cfg.param_count():
        raise ConfigError(
            f"parameter vector has length {params.shape}, "
            f"config requires {cfg.param_count()}"
        )
    return params


def pack_layers(layers: Sequence[tuple[Array, Array]], cfg: NetworkConfig) -> Array:
    """Flatten per-layer (W, b) arrays into the canonical ParamVector."""
    parts = []
    for (o, i), (w, b) in zip(cfg.layer_shapes(), layers, strict=True):
        w = np.asarray(w, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        if w.shape != (o, i) or b.shape != (o,):
            raise ConfigError(f"layer shape mismatch: got {w.shape}/{b.shape}, "
                              f"expected {(o, i)}/{(o,)}")
        parts.append(w.reshape(-1))
        parts.append(b)
    return np.concatenate(parts)


def unpack_layers(params: Array, cfg: NetworkConfig) -> list[tuple[Array, Array]]:
    """Inverse of :func:`pack_layers`; returns views into ``params``."""
    params = check_params(params, cfg)
    layers = []
    off = 0
    for o, i in cfg.layer_shapes():
        w = params[off:off + o * i].reshape(o, i)
        off += o * i
        b = params[off:off + o]
        off += o
        layers.append((w, b))
    return layers


_TORCH_DTYPES = {"float32": torch.float32, "float64": torch.float64}


def _torch_dtype(dtype) -> torch.dtype:
    if isinstance(dtype, torch.dtype):
        return dtype
    if dtype in _TORCH_DTYPES:
        return _TORCH_DTYPES[dtype]
    return {np.dtype(np.float32): torch.float32,
            np.dtype(np.float64): torch.float64}[np.dtype(dtype)]


class TorchNet:
    """Autograd-ready view of a flat parameter vector.

    Per-layer tensors are leaves, so ``torch.autograd.grad`` against
    ``self.leaves`` yields gradients that :meth:`flatten_grads` packs
    back into ParamVector layout.
    """

    def __init__(self, params: Array, cfg: NetworkConfig,
                 dtype=None, requires_grad: bool = False):
        params = check_params(params, cfg)
        self.cfg = cfg
        self.dtype = _torch_dtype(dtype if dtype is not None else params.dtype)
        flat = np.ascontiguousarray(params)
        self.layers: list[tuple[torch.Tensor, torch.Tensor]] = []
        off = 0
        for o, i in cfg.layer_shapes():
            w = torch.from_numpy(flat[off:off + o * i]).to(self.dtype).view(o, i)
            off += o * i
            b = torch.from_numpy(flat[off:off + o]).to(self.dtype)
            off += o
            if requires_grad:
                w.requires_grad_(True)
                b.requires_grad_(True)
            self.layers.append((w, b))

    @property
    def leaves(self) -> list[torch.Tensor]:
        return [t for pair in self.layers for t in pair]

    def flatten_grads(self, grads: Sequence[torch.Tensor]) -> Array:
        out = np.empty(self.cfg.param_count(), dtype=np.float64)
        off = 0
        for g in grads:
            n = g.numel()
            out[off:off + n] = g.detach().reshape(-1).numpy().astype(np.float64)
            off += n
        return out

    def to_tensor(self, x: Array) -> torch.Tensor:
        return torch.as_tensor(np.asarray(x), dtype=self.dtype)

    def __call__(self, x: torch.Tensor) -> torch.Tensor:
        """Batched forward: (n, 3) -> (n, 2) logits.

        The skip layer is evaluated as split products
        h @ W_h.T + x @ W_x.T + b (input columns last), so zeroed skip
        weights contribute exactly 0.0 and the output is bit-identical
        to the network without the skip.
        """
        cfg = self.cfg
        h = x
        for i in range(cfg.num_hidden_layers):
            w, b = self.layers[i]
            if cfg.skip_layer_index is not None and i == cfg.skip_layer_index:
                h = h @ w[:, :-IN_DIM].T + x @ w[:, -IN_DIM:].T + b
            else:
                h = h @ w.T + b
            if cfg.activation == "softplus":
                h = F.softplus(h, beta=cfg.softplus_beta)
            else:
                h = torch.relu(h)
        w, b = self.layers[-1]
        return h @ w.T + b


def forward(params: Array, cfg: NetworkConfig, x: Array) -> EvalRecord:
    """Evaluate the logits at a single 3D point."""
    net = TorchNet(params, cfg)
    x_t = net.to_tensor(np.asarray(x, dtype=np.float64).reshape(1, IN_DIM))
    with torch.no_grad():
        logits = net(x_t)[0].numpy()
    if not np.all(np.isfinite(logits)):
        raise NumericError("non-finite logits in forward evaluation")
    return EvalRecord(logits=np.asarray(logits, dtype=np.float64))


def forward_batch(params: Array, cfg: NetworkConfig, xs: Array,
                  dtype=None, chunk: int = 65536) -> Array:
    """Evaluate logits for an (n, 3) array of points, chunked to bound
    peak memory during dense grid sweeps."""
    xs = np.asarray(xs)
    net = TorchNet(params, cfg, dtype=dtype)
    out = np.empty((xs.shape[0], cfg.output_dim), dtype=np.float64)
    with torch.no_grad():
        for lo in range(0, xs.shape[0], chunk):
            hi = min(lo + chunk, xs.shape[0])
            out[lo:hi] = net(net.to_tensor(xs[lo:hi])).numpy()
    return out


def spatial_gradient(params: Array, cfg: NetworkConfig, x: Array) -> Array:
    """Jacobian d(logits)/dx at a single point, shape (2, 3)."""
    net = TorchNet(params, cfg)
    x_t = net.to_tensor(np.asarray(x, dtype=np.float64).reshape(1, IN_DIM))
    x_t.requires_grad_(True)
    logits = net(x_t)
    rows = []
    for j in range(cfg.output_dim):
        (g,) = torch.autograd.grad(logits[0, j], x_t, retain_graph=(j == 0))
        rows.append(g[0].detach().numpy())
    jac = np.asarray(rows, dtype=np.float64)
    if not np.all(np.isfinite(jac)):
        raise NumericError("non-finite spatial Jacobian")
    return jac


Objective = Union[str, Callable]


def _resolve_objective(objective: Objective) -> Callable:
    if callable(objective):
        return objective
    from . import objective as objective_module

    try:
        return objective_module.OBJECTIVES[objective]
    except KeyError:
        raise ConfigError(
            f"unknown objective {objective!r}; "
            f"known: {sorted(objective_module.OBJECTIVES)}"
        ) from None


def parameter_gradient(params: Array, cfg: NetworkConfig,
                       objective: Objective, batch: dict,
                       dtype=None) -> Array:
    """Exact gradient of a scalar objective with respect to every
    parameter, including differentiation through any spatial gradients
    the objective takes of the network.

    ``objective`` is either a callable ``fn(net, batch) -> scalar tensor``
    or the registry name of a loss in :mod:`occfit.objective`.  ``batch``
    maps names to arrays; they are handed to the objective as torch
    tensors of the network dtype.
    """
    fn = _resolve_objective(objective)
    net = TorchNet(params, cfg, dtype=dtype, requires_grad=True)
    batch_t = {k: net.to_tensor(v) if isinstance(v, (np.ndarray, list, tuple))
               else v for k, v in batch.items()}
    value = fn(net, batch_t)
    grads = torch.autograd.grad(value, net.leaves, allow_unused=True)
    grads = [torch.zeros_like(leaf) if g is None else g
             for leaf, g in zip(net.leaves, grads)]
    flat = net.flatten_grads(grads)
    if not np.all(np.isfinite(flat)):
        raise NumericError("non-finite parameter gradient")
    return flat
