"""Training objectives: boundary-projection sampling loss, entropy
polarization, and the decaying mixing weight that combines them.

Both losses are written directly against the torch view of the network
so their parameter gradients are exact.  The sampling loss contains the
spatial gradient of the margin inside the projection step; by default
that dependence is differentiated through as well (full second-order
path), with a switch to freeze the step direction for ablations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .diffnet import NetworkConfig, TorchNet
from .errors import ConfigError, TrainingStallError
from .field import EPS_GRAD, OccupancyField

Array = np.ndarray

PROB_EPS = 1e-12
LOG_PROB_FLOOR = float(np.log(PROB_EPS))


@dataclass(frozen=True)
class ScheduleConfig:
    """Exponential decay of the polarization weight: one schedule tick is
    ``time_unit`` iterations, so the weight at iteration i is
    lambda0 * exp(-kappa * i / time_unit)."""

    kappa: float = 1.84e-2
    time_unit: int = 100
    lambda0: float = 1.0

    def __post_init__(self):
        if self.kappa <= 0:
            raise ConfigError("kappa must be positive")
        if self.time_unit < 1:
            raise ConfigError("time_unit must be >= 1")


@dataclass
class LossBreakdown:
    l_samp: float
    l_entr: float
    lam: float
    total: float
    skipped_degenerate: int

    CSV_HEADER = "iteration,l_samp,l_entr,lambda,total,skipped_degenerate"

    def csv_row(self, iteration: int) -> str:
        return (f"{iteration},{self.l_samp!r},{self.l_entr!r},{self.lam!r},"
                f"{self.total!r},{self.skipped_degenerate}")


def lambda_at(schedule: ScheduleConfig, iteration: int) -> float:
    if iteration < 0:
        raise ConfigError("iteration must be >= 0")
    return schedule.lambda0 * float(np.exp(-schedule.kappa * iteration
                                           / schedule.time_unit))


def entropy(prob_pair: Array) -> float:
    """Shannon entropy in nats with the 0*ln(0)=0 convention; probabilities
    are floored at 1e-12 only inside the logarithm."""
    p = np.asarray(prob_pair, dtype=np.float64)
    return float(-(p * np.log(np.maximum(p, PROB_EPS))).sum())


def _entropy_rows(logits: torch.Tensor) -> torch.Tensor:
    """Per-row Shannon entropy of softmax(logits), log-floored for
    gradient safety on saturated rows."""
    logp = torch.clamp(torch.log_softmax(logits, dim=-1), min=LOG_PROB_FLOOR)
    p = torch.softmax(logits, dim=-1)
    return -(p * logp).sum(dim=-1)


def sampling_core(net: TorchNet, queries: torch.Tensor, anchors: torch.Tensor,
                  eps_grad: float = EPS_GRAD,
                  freeze_newton_direction: bool = False
                  ) -> tuple[torch.Tensor, int]:
    """Mean squared distance between projected queries and their anchors.

    Each query takes one root step q' = q - U grad/||grad||^2; queries
    whose margin gradient is degenerate (squared norm below eps_grad) are
    excluded from the mean and counted, never imputed as zero.
    """
    if queries.shape[0] == 0:
        raise ConfigError("sampling batch is empty")
    q = queries.detach().clone().requires_grad_(True)
    logits = net(q)
    u = torch.tanh((logits[:, 1] - logits[:, 0]) / 2.0)
    (grad_u,) = torch.autograd.grad(u.sum(), q, create_graph=True)
    g2 = (grad_u * grad_u).sum(dim=-1)
    keep = g2 >= eps_grad
    n_skipped = int((~keep).sum())
    if not bool(keep.any()):
        raise TrainingStallError(
            f"all {queries.shape[0]} queries in the batch have degenerate "
            f"margin gradients (squared norm < {eps_grad:.1e})")
    u_k, g2_k, grad_k = u[keep], g2[keep], grad_u[keep]
    if freeze_newton_direction:
        g2_k = g2_k.detach()
        grad_k = grad_k.detach()
    projected = q[keep] - (u_k / g2_k).unsqueeze(-1) * grad_k
    diff = projected - anchors[keep]
    return (diff * diff).sum(dim=-1).mean(), n_skipped


def entropy_core(net: TorchNet, omega: torch.Tensor,
                 cloud: torch.Tensor) -> torch.Tensor:
    """Mean occupancy entropy over free-space samples minus mean entropy
    over surface samples (negative values mean the surface is already the
    more uncertain region, the intended direction)."""
    if omega.shape[0] == 0 or cloud.shape[0] == 0:
        raise ConfigError("entropy batches must be non-empty")
    return (_entropy_rows(net(omega)).mean()
            - _entropy_rows(net(cloud)).mean())


# Registry consumed by diffnet.parameter_gradient: fn(net, batch) -> scalar.
OBJECTIVES = {
    "sampling": lambda net, b: sampling_core(
        net, b["queries"], b["anchors"],
        eps_grad=b.get("eps_grad", EPS_GRAD),
        freeze_newton_direction=b.get("freeze_newton_direction", False))[0],
    "entropy": lambda net, b: entropy_core(net, b["omega"], b["cloud"]),
    "total": lambda net, b: (
        sampling_core(net, b["queries"], b["anchors"],
                      eps_grad=b.get("eps_grad", EPS_GRAD),
                      freeze_newton_direction=b.get("freeze_newton_direction",
                                                    False))[0]
        + b["lam"] * entropy_core(net, b["omega"], b["cloud"])),
}


def sampling_loss(field: OccupancyField, queries: Array, anchors: Array,
                  eps_grad: float = EPS_GRAD,
                  freeze_newton_direction: bool = False,
                  dtype=None) -> tuple[float, int]:
    net = TorchNet(field.params, field.cfg, dtype=dtype)
    value, n_skipped = sampling_core(
        net, net.to_tensor(queries), net.to_tensor(anchors),
        eps_grad=eps_grad, freeze_newton_direction=freeze_newton_direction)
    return float(value.item()), n_skipped


def entropy_loss(field: OccupancyField, omega: Array, cloud: Array,
                 dtype=None) -> float:
    net = TorchNet(field.params, field.cfg, dtype=dtype)
    with torch.no_grad():
        value = entropy_core(net, net.to_tensor(omega), net.to_tensor(cloud))
    return float(value.item())


def total_loss(field: OccupancyField, queries: Array, anchors: Array,
               omega: Array, cloud: Array, schedule: ScheduleConfig,
               iteration: int, eps_grad: float = EPS_GRAD,
               freeze_newton_direction: bool = False,
               dtype=None) -> LossBreakdown:
    lam = lambda_at(schedule, iteration)
    l_samp, n_skipped = sampling_loss(
        field, queries, anchors, eps_grad=eps_grad,
        freeze_newton_direction=freeze_newton_direction, dtype=dtype)
    l_entr = entropy_loss(field, omega, cloud, dtype=dtype)
    return LossBreakdown(l_samp=l_samp, l_entr=l_entr, lam=lam,
                         total=l_samp + lam * l_entr,
                         skipped_degenerate=n_skipped)


def total_loss_and_gradient(params: Array, cfg: NetworkConfig,
                            queries: Array, anchors: Array,
                            omega: Array, cloud: Array, lam: float,
                            eps_grad: float = EPS_GRAD,
                            freeze_newton_direction: bool = False,
                            dtype=None) -> tuple[LossBreakdown, Array]:
    """One training evaluation: loss breakdown plus the exact flat
    parameter gradient of l_samp + lam * l_entr."""
    net = TorchNet(params, cfg, dtype=dtype, requires_grad=True)
    l_samp_t, n_skipped = sampling_core(
        net, net.to_tensor(queries), net.to_tensor(anchors),
        eps_grad=eps_grad, freeze_newton_direction=freeze_newton_direction)
    l_entr_t = entropy_core(net, net.to_tensor(omega), net.to_tensor(cloud))
    total_t = l_samp_t + lam * l_entr_t
    grads = torch.autograd.grad(total_t, net.leaves, allow_unused=True)
    grads = [torch.zeros_like(leaf) if g is None else g
             for leaf, g in zip(net.leaves, grads)]
    flat = net.flatten_grads(grads)
    l_samp = float(l_samp_t.item())
    l_entr = float(l_entr_t.item())
    breakdown = LossBreakdown(l_samp=l_samp, l_entr=l_entr, lam=lam,
                              total=l_samp + lam * l_entr,
                              skipped_degenerate=n_skipped)
    return breakdown, flat
