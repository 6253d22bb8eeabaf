"""The optimization loop: pools once, then N_it iterations of
batch -> loss -> exact gradient -> Adam, with CSV logging and
resumable checkpoints.

Determinism contract: (seed, config, input cloud) fully determine the
result bitwise.  Two independent RNG streams make that hold across
resume: stream [seed, 0] builds the pools and the initialization (both
reproducible from scratch), stream [seed, 1] draws the per-iteration
batches and is serialized into checkpoints so a resumed run continues
the exact sample sequence.

Parameters and Adam moments are kept in float64 ("master" copies); the
loss/gradient evaluation casts to ``compute_dtype`` (float32 default --
roughly twice the iteration throughput of float64 on CPU, while the
float64 master state keeps the update accumulation stable).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field as dataclass_field
from typing import Optional

import numpy as np

from . import cloud as cloud_mod
from . import field as field_mod
from . import objective as objective_mod
from .cloud import Normalization, PointCloud, TrainingPairSet
from .diffnet import NetworkConfig
from .errors import (CheckpointFormatError, ConfigError, NumericError,
                     TrainingStallError)
from .field import InitConfig, OccupancyField
from .objective import LossBreakdown, ScheduleConfig

Array = np.ndarray

CHECKPOINT_MAGIC = "OCCFIT1"


@dataclass(frozen=True)
class AdamConfig:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass(frozen=True)
class TrainerConfig:
    n_iterations: int = 40_000
    learning_rate: float = 1e-3
    batch_pairs: int = 5_000
    batch_omega: int = 1_000
    batch_cloud: int = 1_000
    pool_pairs: int = 1_000_000
    pool_omega: int = 10_000
    k_neighbors: int = 51
    padding_fraction: float = 0.1
    seed: int = 0
    checkpoint_every: int = 0
    log_every: int = 10
    eps_grad: float = 1e-12
    freeze_newton_direction: bool = False
    compute_dtype: str = "float32"
    adam: AdamConfig = dataclass_field(default_factory=AdamConfig)

    def __post_init__(self):
        if self.n_iterations < 0:
            raise ConfigError("n_iterations must be >= 0")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.batch_pairs > self.pool_pairs:
            raise ConfigError("batch_pairs exceeds pool_pairs")
        if self.batch_omega > self.pool_omega:
            raise ConfigError("batch_omega exceeds pool_omega")
        if min(self.batch_pairs, self.batch_omega, self.batch_cloud) < 1:
            raise ConfigError("batch sizes must be >= 1")
        if self.compute_dtype not in ("float32", "float64"):
            raise ConfigError("compute_dtype must be float32 or float64")
        if self.log_every < 1:
            raise ConfigError("log_every must be >= 1")

    def fingerprint(self, schedule: ScheduleConfig) -> str:
        """Canonical one-line digest of every knob that must match for a
        resumed run to be bit-identical to an uninterrupted one."""
        a = self.adam
        parts = [
            f"seed={self.seed}", f"lr={self.learning_rate!r}",
            f"bq={self.batch_pairs}", f"bo={self.batch_omega}",
            f"bp={self.batch_cloud}", f"pq={self.pool_pairs}",
            f"po={self.pool_omega}", f"k={self.k_neighbors}",
            f"pad={self.padding_fraction!r}", f"epsg={self.eps_grad!r}",
            f"freeze={int(self.freeze_newton_direction)}",
            f"dtype={self.compute_dtype}",
            f"b1={a.beta1!r}", f"b2={a.beta2!r}", f"aeps={a.eps!r}",
            f"kappa={schedule.kappa!r}", f"tu={schedule.time_unit}",
            f"l0={schedule.lambda0!r}",
        ]
        return " ".join(parts)


@dataclass
class TrainState:
    params: Array
    first_moment: Array
    second_moment: Array
    iteration: int
    rng_state: Optional[dict] = None


@dataclass
class Checkpoint:
    net_cfg: NetworkConfig
    params: Array
    normalization: Normalization
    box: Array
    iteration: int
    schedule: ScheduleConfig
    seed: int
    fingerprint: str = ""
    first_moment: Optional[Array] = None
    second_moment: Optional[Array] = None
    rng_state: Optional[dict] = None

    def to_field(self) -> OccupancyField:
        return OccupancyField(params=self.params, cfg=self.net_cfg)


@dataclass
class FitResult:
    field: OccupancyField
    state: TrainState
    box: Array
    pair_set: TrainingPairSet
    log: list
    wall_seconds: float


def adam_step(params: Array, m: Array, v: Array, grad: Array, t: int,
              learning_rate: float, adam: AdamConfig
              ) -> tuple[Array, Array, Array]:
    """Standard bias-corrected update; t is 1-based."""
    m = adam.beta1 * m + (1.0 - adam.beta1) * grad
    v = adam.beta2 * v + (1.0 - adam.beta2) * grad * grad
    m_hat = m / (1.0 - adam.beta1 ** t)
    v_hat = v / (1.0 - adam.beta2 ** t)
    params = params - learning_rate * m_hat / (np.sqrt(v_hat) + adam.eps)
    return params, m, v


def _rng_state_to_fields(state: dict) -> str:
    s = state["state"]
    return f"{s['state']} {s['inc']} {state['has_uint32']} {state['uinteger']}"


def _rng_state_from_fields(text: str) -> dict:
    a, b, c, d = text.split()
    return {"bit_generator": "PCG64",
            "state": {"state": int(a), "inc": int(b)},
            "has_uint32": int(c), "uinteger": int(d)}


def save_checkpoint(path, net_cfg: NetworkConfig, params: Array,
                    normalization: Normalization, box: Array, iteration: int,
                    schedule: ScheduleConfig, seed: int, fingerprint: str = "",
                    first_moment: Optional[Array] = None,
                    second_moment: Optional[Array] = None,
                    rng_state: Optional[dict] = None) -> None:
    """ASCII key=value header + little-endian float64 parameter block,
    optionally followed by the two Adam moment blocks (same layout)."""
    has_state = first_moment is not None
    if has_state and (second_moment is None or rng_state is None):
        raise ConfigError("a training-state checkpoint needs both moments "
                          "and the rng state")
    def fmt3(v):
        return f"{float(v[0])!r} {float(v[1])!r} {float(v[2])!r}"

    lines = [
        CHECKPOINT_MAGIC,
        f"num_hidden_layers={net_cfg.num_hidden_layers}",
        f"hidden_width={net_cfg.hidden_width}",
        f"skip_layer_index="
        f"{'none' if net_cfg.skip_layer_index is None else net_cfg.skip_layer_index}",
        f"activation={net_cfg.activation}",
        f"softplus_beta={net_cfg.softplus_beta!r}",
        f"output_dim={net_cfg.output_dim}",
        f"param_count={net_cfg.param_count()}",
        f"centroid={fmt3(normalization.centroid)}",
        f"scale={float(normalization.scale)!r}",
        f"box_lo={fmt3(box[0])}",
        f"box_hi={fmt3(box[1])}",
        f"iteration={iteration}",
        f"kappa={schedule.kappa!r}",
        f"time_unit={schedule.time_unit}",
        f"lambda0={schedule.lambda0!r}",
        f"seed={seed}",
        f"fingerprint={fingerprint}",
        f"has_state={int(has_state)}",
    ]
    if has_state:
        lines.append(f"rng_state={_rng_state_to_fields(rng_state)}")
    lines.append("end_header")
    blob = ("\n".join(lines) + "\n").encode("ascii")
    blob += np.ascontiguousarray(params, dtype="<f8").tobytes()
    if has_state:
        blob += np.ascontiguousarray(first_moment, dtype="<f8").tobytes()
        blob += np.ascontiguousarray(second_moment, dtype="<f8").tobytes()
    with open(path, "wb") as f:
        f.write(blob)


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as f:
        blob = f.read()
    marker = b"end_header\n"
    cut = blob.find(marker)
    if cut < 0:
        raise CheckpointFormatError(f"{path}: missing end_header marker")
    try:
        header_lines = blob[:cut].decode("ascii").splitlines()
    except UnicodeDecodeError:
        raise CheckpointFormatError(f"{path}: non-ASCII header") from None
    if not header_lines or header_lines[0] != CHECKPOINT_MAGIC:
        raise CheckpointFormatError(
            f"{path}: bad magic {header_lines[0] if header_lines else ''!r}, "
            f"expected {CHECKPOINT_MAGIC!r}")
    kv = {}
    for line in header_lines[1:]:
        if "=" not in line:
            raise CheckpointFormatError(f"{path}: malformed header line {line!r}")
        key, _, value = line.partition("=")
        kv[key] = value
    try:
        skip_raw = kv["skip_layer_index"]
        net_cfg = NetworkConfig(
            num_hidden_layers=int(kv["num_hidden_layers"]),
            hidden_width=int(kv["hidden_width"]),
            skip_layer_index=None if skip_raw == "none" else int(skip_raw),
            activation=kv["activation"],
            softplus_beta=float(kv["softplus_beta"]),
            output_dim=int(kv["output_dim"]))
        param_count = int(kv["param_count"])
        normalization = Normalization(
            centroid=np.array([float(t) for t in kv["centroid"].split()]),
            scale=float(kv["scale"]))
        box = np.array([[float(t) for t in kv["box_lo"].split()],
                        [float(t) for t in kv["box_hi"].split()]])
        iteration = int(kv["iteration"])
        schedule = ScheduleConfig(kappa=float(kv["kappa"]),
                                  time_unit=int(kv["time_unit"]),
                                  lambda0=float(kv["lambda0"]))
        seed = int(kv["seed"])
        has_state = bool(int(kv["has_state"]))
    except (KeyError, ValueError) as e:
        raise CheckpointFormatError(f"{path}: bad header field: {e}") from None
    if param_count != net_cfg.param_count():
        raise CheckpointFormatError(
            f"{path}: param_count {param_count} inconsistent with "
            f"architecture ({net_cfg.param_count()})")

    body = blob[cut + len(marker):]
    n_blocks = 3 if has_state else 1
    expected = n_blocks * param_count * 8
    if len(body) != expected:
        raise CheckpointFormatError(
            f"{path}: parameter payload is {len(body)} bytes, expected "
            f"{expected} (truncated or trailing garbage)")
    flat = np.frombuffer(body, dtype="<f8").astype(np.float64)
    params = flat[:param_count]
    ck = Checkpoint(net_cfg=net_cfg, params=params, normalization=normalization,
                    box=box, iteration=iteration, schedule=schedule, seed=seed,
                    fingerprint=kv.get("fingerprint", ""))
    if has_state:
        ck.first_moment = flat[param_count:2 * param_count]
        ck.second_moment = flat[2 * param_count:]
        try:
            ck.rng_state = _rng_state_from_fields(kv["rng_state"])
        except (KeyError, ValueError) as e:
            raise CheckpointFormatError(f"{path}: bad rng_state: {e}") from None
    return ck


def fit(cloud: PointCloud,
        net_cfg: Optional[NetworkConfig] = None,
        init_cfg: Optional[InitConfig] = None,
        schedule: Optional[ScheduleConfig] = None,
        trainer: Optional[TrainerConfig] = None,
        log_path=None,
        checkpoint_path=None,
        resume_from=None) -> FitResult:
    """Run the full loop on a normalized cloud.

    The sequence is fixed: sigma table -> pair pool + uniform pool ->
    geometric init -> iterations of {draw batches, loss+gradient, Adam},
    with the polarization weight recomputed from the iteration index at
    the start of every iteration.  Pools are never regenerated.
    """
    net_cfg = net_cfg or NetworkConfig()
    init_cfg = init_cfg or InitConfig()
    schedule = schedule or ScheduleConfig()
    tcfg = trainer or TrainerConfig()
    if cloud.normalization is None:
        raise ConfigError("fit requires a normalized cloud "
                          "(call cloud.normalize first)")
    n_points = len(cloud)
    batch_cloud = min(tcfg.batch_cloud, n_points)
    fingerprint = tcfg.fingerprint(schedule)

    rng_pool = np.random.default_rng([tcfg.seed, 0])
    rng_batch = np.random.default_rng([tcfg.seed, 1])
    t_start = time.perf_counter()
    pair_set = cloud_mod.build_training_set(
        cloud, tcfg.k_neighbors, tcfg.pool_pairs, tcfg.pool_omega,
        tcfg.padding_fraction, rng_pool)
    params = field_mod.geometric_init(net_cfg, init_cfg, rng_pool)
    m = np.zeros_like(params)
    v = np.zeros_like(params)
    start_iteration = 0

    if resume_from is not None:
        ck = load_checkpoint(resume_from)
        if ck.first_moment is None:
            raise CheckpointFormatError(
                f"{resume_from}: field-only checkpoint cannot resume training")
        if ck.net_cfg != net_cfg:
            raise ConfigError("checkpoint architecture differs from the "
                              "requested network config")
        if ck.fingerprint != fingerprint:
            raise ConfigError(
                "checkpoint was produced under different training settings; "
                f"resume would not be reproducible\n  checkpoint: {ck.fingerprint}"
                f"\n  requested:  {fingerprint}")
        params = ck.params.copy()
        m = ck.first_moment.copy()
        v = ck.second_moment.copy()
        start_iteration = ck.iteration
        rng_batch.bit_generator.state = ck.rng_state

    def write_state(path, iteration):
        save_checkpoint(path, net_cfg, params, cloud.normalization,
                        pair_set.box, iteration, schedule, tcfg.seed,
                        fingerprint=fingerprint,
                        first_moment=m, second_moment=v,
                        rng_state=rng_batch.bit_generator.state)

    compute_dtype = np.float32 if tcfg.compute_dtype == "float32" else np.float64
    log_rows: list[tuple[int, LossBreakdown]] = []
    log_file = None
    if log_path is not None:
        log_file = open(log_path, "a" if start_iteration > 0 else "w")
        if start_iteration == 0:
            log_file.write(LossBreakdown.CSV_HEADER + "\n")

    try:
        for i in range(start_iteration, tcfg.n_iterations):
            lam = objective_mod.lambda_at(schedule, i)
            idx_q = rng_batch.integers(0, tcfg.pool_pairs, size=tcfg.batch_pairs)
            idx_o = rng_batch.integers(0, tcfg.pool_omega, size=tcfg.batch_omega)
            idx_p = rng_batch.integers(0, n_points, size=batch_cloud)
            try:
                breakdown, grad = objective_mod.total_loss_and_gradient(
                    params, net_cfg,
                    pair_set.queries[idx_q], pair_set.anchors[idx_q],
                    pair_set.uniform_pool[idx_o], cloud.points[idx_p],
                    lam, eps_grad=tcfg.eps_grad,
                    freeze_newton_direction=tcfg.freeze_newton_direction,
                    dtype=compute_dtype)
            except TrainingStallError as e:
                raise TrainingStallError(f"iteration {i}: {e}") from e
            if not np.isfinite(breakdown.total):
                raise NumericError("non-finite training loss "
                                   "(last saved checkpoint is still valid)",
                                   iteration=i)
            params, m, v = adam_step(params, m, v, grad, i + 1,
                                     tcfg.learning_rate, tcfg.adam)
            if i % tcfg.log_every == 0 or i == tcfg.n_iterations - 1:
                log_rows.append((i, breakdown))
                if log_file is not None:
                    log_file.write(breakdown.csv_row(i) + "\n")
            if (tcfg.checkpoint_every and checkpoint_path is not None
                    and (i + 1) % tcfg.checkpoint_every == 0):
                write_state(checkpoint_path, i + 1)
    finally:
        if log_file is not None:
            log_file.close()

    if checkpoint_path is not None:
        write_state(checkpoint_path, tcfg.n_iterations)
    wall = time.perf_counter() - t_start
    state = TrainState(params=params, first_moment=m, second_moment=v,
                       iteration=tcfg.n_iterations,
                       rng_state=rng_batch.bit_generator.state)
    return FitResult(field=OccupancyField(params=params, cfg=net_cfg),
                     state=state, box=pair_set.box, pair_set=pair_set,
                     log=log_rows, wall_seconds=wall)
