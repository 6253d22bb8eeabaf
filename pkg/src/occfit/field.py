"""Occupancy semantics on top of the raw network logits.

Sign convention (single source of truth for the whole pipeline): class
y=1 means *inside*.  The margin

    U(x) = P(y=1|x) - P(y=0|x) = tanh((z1 - z0) / 2)

is positive inside, negative outside, and zero exactly on the decision
boundary, which is the surface being reconstructed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffnet
from .diffnet import IN_DIM, NetworkConfig
from .errors import ConfigError, DegenerateGradientError

Array = np.ndarray

INSIDE_LABEL = 1
EPS_GRAD = 1e-12


@dataclass
class OccupancyField:
    params: Array
    cfg: NetworkConfig

    def __post_init__(self):
        self.params = diffnet.check_params(self.params, self.cfg)


@dataclass(frozen=True)
class InitConfig:
    """Start the field as a soft occupancy ball around the origin."""

    sphere_radius: float = 0.5
    logit_sharpness: float = 10.0

    def __post_init__(self):
        if self.sphere_radius <= 0:
            raise ConfigError("sphere_radius must be positive")
        if self.logit_sharpness <= 0:
            raise ConfigError("logit_sharpness must be positive")


def logits_to_probs(logits: Array) -> Array:
    """Stabilized softmax over the last axis; no overflow for any finite logits."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def logits_to_margin(logits: Array) -> Array:
    """Inside-minus-outside probability, computed in the tanh form (exact
    algebraic identity with softmax, but immune to exp overflow)."""
    z = np.asarray(logits, dtype=np.float64)
    return np.tanh((z[..., 1] - z[..., 0]) / 2.0)


def occupancy_prob(field: OccupancyField, x: Array) -> Array:
    return logits_to_probs(diffnet.forward(field.params, field.cfg, x).logits)


def margin(field: OccupancyField, x: Array) -> float:
    return float(logits_to_margin(diffnet.forward(field.params, field.cfg, x).logits))


def margin_batch(field: OccupancyField, xs: Array, dtype=None,
                 chunk: int = 65536) -> Array:
    logits = diffnet.forward_batch(field.params, field.cfg, xs,
                                   dtype=dtype, chunk=chunk)
    return logits_to_margin(logits)


def margin_gradient(field: OccupancyField, x: Array) -> Array:
    """Spatial gradient of the margin via the tanh chain rule:
    dU = (1 - U^2)/2 * d(z1 - z0)."""
    rec = diffnet.forward(field.params, field.cfg, x)
    jac = diffnet.spatial_gradient(field.params, field.cfg, x)
    u = logits_to_margin(rec.logits)
    return 0.5 * (1.0 - u * u) * (jac[1] - jac[0])


def newton_root_step(q: Array, u: float, grad: Array,
                     eps_grad: float = EPS_GRAD) -> Array:
    """Arithmetic core of the boundary projection:
    q' = q - u * grad / ||grad||^2 (the rank-1 pseudoinverse update for a
    scalar field over 3D).  Exact on affine fields; invariant to scaling
    (u, grad) jointly by any nonzero constant."""
    q = np.asarray(q, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    g2 = float(grad @ grad)
    if g2 < eps_grad:
        raise DegenerateGradientError(
            f"margin gradient squared norm {g2:.3e} below {eps_grad:.3e}")
    return q - (float(u) / g2) * grad


def newton_step(field: OccupancyField, q: Array,
                eps_grad: float = EPS_GRAD) -> Array:
    """One root-finding update of a query toward the decision boundary.

    A gradient with squared norm below ``eps_grad`` is unusable (the step
    would explode); callers batch-skip and count such queries.
    """
    q = np.asarray(q, dtype=np.float64)
    return newton_root_step(q, margin(field, q), margin_gradient(field, q),
                            eps_grad=eps_grad)


def geometric_init(cfg: NetworkConfig, init_cfg: InitConfig,
                   rng: np.random.Generator) -> Array:
    """Parameters whose margin starts as a soft sphere of the configured
    radius centered at the origin.

    Hidden layers get variance-scaled Gaussians (std sqrt(2)/sqrt(out))
    with zero bias and the raw-input columns of the skip layer zeroed, so
    the last hidden activations support a scalar g(x) ~ ||x|| - r through
    a head row drawn tightly around sqrt(pi)/sqrt(width) with bias -r.
    The two logits are the opposed scalings (z0, z1) = (+s*g, -s*g),
    giving U = tanh(-s*g): positive (inside) within the sphere, negative
    outside.
    """
    r = init_cfg.sphere_radius
    s = init_cfg.logit_sharpness
    layers = []
    shapes = cfg.layer_shapes()
    for i, (out_dim, in_dim) in enumerate(shapes[:-1]):
        w = rng.normal(0.0, np.sqrt(2.0) / np.sqrt(out_dim), size=(out_dim, in_dim))
        if cfg.skip_layer_index is not None and i == cfg.skip_layer_index:
            w[:, -IN_DIM:] = 0.0
        layers.append((w, np.zeros(out_dim)))
    width = shapes[-1][1]
    w_g = rng.normal(np.sqrt(np.pi) / np.sqrt(width), 1e-5, size=width)
    b_g = -r
    w_head = np.stack([s * w_g, -s * w_g])
    b_head = np.array([s * b_g, -s * b_g])
    layers.append((w_head, b_head))
    return diffnet.pack_layers(layers, cfg)


def make_affine_probe(coeffs: Array, offset: float = 0.0,
                      scale: float = 1.0) -> OccupancyField:
    """Tiny real network whose margin is tanh(scale * (coeffs . x + offset)).

    The zero set is the plane {coeffs . x + offset = 0} for every nonzero
    scale.  The hidden layer computes the exact pair (relu(v), relu(-v))
    so v passes through with no rounding beyond the affine evaluation
    itself -- the lattice of margin values vanishes bit-exactly wherever
    v does.
    """
    coeffs = np.asarray(coeffs, dtype=np.float64)
    cfg = NetworkConfig(num_hidden_layers=1, hidden_width=4,
                        skip_layer_index=None, activation="relu")
    w0 = np.zeros((4, 3))
    b0 = np.zeros(4)
    w0[0, :] = coeffs
    b0[0] = offset
    w0[1, :] = -coeffs
    b0[1] = -offset
    w_out = np.array([[-scale, scale, 0.0, 0.0],
                      [scale, -scale, 0.0, 0.0]])
    params = diffnet.pack_layers([(w0, b0), (w_out, np.zeros(2))], cfg)
    return OccupancyField(params=params, cfg=cfg)


def make_matched_affine_probe(coeffs: Array, offset: float, at: Array,
                              scale: float = 1.0) -> OccupancyField:
    """Real network whose margin value and gradient AT the point ``at``
    equal those of the affine field scale * (coeffs . x + offset).

    The probe pre-composes the tanh saturation with its inverse so the
    root step computed from it reproduces the affine step to rounding:
    starting at ``at`` it lands on the plane {coeffs . x + offset = 0}.
    Requires |scale * (coeffs . at + offset)| < 1.
    """
    coeffs = np.asarray(coeffs, dtype=np.float64)
    at = np.asarray(at, dtype=np.float64)
    u_target = scale * (float(coeffs @ at) + offset)
    if not abs(u_target) < 1.0:
        raise ConfigError("target margin at the probe point must be in (-1, 1)")
    a = (scale / (1.0 - u_target * u_target)) * coeffs
    b = float(np.arctanh(u_target)) - float(a @ at)
    return make_affine_probe(a, b, scale=1.0)
