"""Plain key=value run configuration.

One `section.name=value` pair per line, '#' comments allowed.  Every
numeric default of the pipeline maps to exactly one key; unknown keys
are rejected by name.  ``canonical`` emits a normalized listing whose
re-parse compares equal, so configs can be hashed, diffed, and stored
alongside results.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field, replace

from .diffnet import NetworkConfig
from .errors import ConfigError, ParseError
from .field import InitConfig
from .objective import ScheduleConfig
from .trainer import AdamConfig, TrainerConfig


@dataclass(frozen=True)
class MetricConfig:
    samples: int = 100_000
    tau: float = 0.01
    seed: int = 0
    with_normals: bool = True

    def __post_init__(self):
        if self.samples < 1:
            raise ConfigError("metrics.samples must be >= 1")
        if self.tau <= 0:
            raise ConfigError("metrics.tau must be positive")


@dataclass(frozen=True)
class RunConfig:
    network: NetworkConfig = dataclass_field(default_factory=NetworkConfig)
    init: InitConfig = dataclass_field(default_factory=InitConfig)
    schedule: ScheduleConfig = dataclass_field(default_factory=ScheduleConfig)
    trainer: TrainerConfig = dataclass_field(default_factory=TrainerConfig)
    metrics: MetricConfig = dataclass_field(default_factory=MetricConfig)
    grid_resolution: int = 128

    def __post_init__(self):
        if self.grid_resolution < 8:
            raise ConfigError("grid.resolution must be >= 8")


def _parse_bool(text: str) -> bool:
    t = text.lower()
    if t in ("true", "1", "yes", "on"):
        return True
    if t in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_skip(text: str):
    return None if text.lower() == "none" else int(text)


# key -> (section attribute on RunConfig, field name, parser, serializer)
def _fmt_bool(v):
    return "true" if v else "false"


def _fmt_skip(v):
    return "none" if v is None else str(v)


def _fmt_plain(v):
    return repr(v) if isinstance(v, float) else str(v)


KEYS = {
    "network.num_hidden_layers": ("network", "num_hidden_layers", int, _fmt_plain),
    "network.hidden_width": ("network", "hidden_width", int, _fmt_plain),
    "network.skip_layer_index": ("network", "skip_layer_index", _parse_skip, _fmt_skip),
    "network.activation": ("network", "activation", str, _fmt_plain),
    "network.softplus_beta": ("network", "softplus_beta", float, _fmt_plain),
    "init.sphere_radius": ("init", "sphere_radius", float, _fmt_plain),
    "init.logit_sharpness": ("init", "logit_sharpness", float, _fmt_plain),
    "schedule.kappa": ("schedule", "kappa", float, _fmt_plain),
    "schedule.time_unit": ("schedule", "time_unit", int, _fmt_plain),
    "schedule.lambda0": ("schedule", "lambda0", float, _fmt_plain),
    "trainer.n_iterations": ("trainer", "n_iterations", int, _fmt_plain),
    "trainer.learning_rate": ("trainer", "learning_rate", float, _fmt_plain),
    "trainer.batch_pairs": ("trainer", "batch_pairs", int, _fmt_plain),
    "trainer.batch_omega": ("trainer", "batch_omega", int, _fmt_plain),
    "trainer.batch_cloud": ("trainer", "batch_cloud", int, _fmt_plain),
    "trainer.pool_pairs": ("trainer", "pool_pairs", int, _fmt_plain),
    "trainer.pool_omega": ("trainer", "pool_omega", int, _fmt_plain),
    "trainer.k_neighbors": ("trainer", "k_neighbors", int, _fmt_plain),
    "trainer.padding_fraction": ("trainer", "padding_fraction", float, _fmt_plain),
    "trainer.seed": ("trainer", "seed", int, _fmt_plain),
    "trainer.checkpoint_every": ("trainer", "checkpoint_every", int, _fmt_plain),
    "trainer.log_every": ("trainer", "log_every", int, _fmt_plain),
    "trainer.eps_grad": ("trainer", "eps_grad", float, _fmt_plain),
    "trainer.freeze_newton_direction": ("trainer", "freeze_newton_direction",
                                        _parse_bool, _fmt_bool),
    "trainer.compute_dtype": ("trainer", "compute_dtype", str, _fmt_plain),
    "trainer.adam_beta1": ("adam", "beta1", float, _fmt_plain),
    "trainer.adam_beta2": ("adam", "beta2", float, _fmt_plain),
    "trainer.adam_eps": ("adam", "eps", float, _fmt_plain),
    "grid.resolution": ("", "grid_resolution", int, _fmt_plain),
    "metrics.samples": ("metrics", "samples", int, _fmt_plain),
    "metrics.tau": ("metrics", "tau", float, _fmt_plain),
    "metrics.seed": ("metrics", "seed", int, _fmt_plain),
    "metrics.with_normals": ("metrics", "with_normals", _parse_bool, _fmt_bool),
}


def parse_items(items, base: RunConfig = None) -> RunConfig:
    """Build a RunConfig from (key, value-string) pairs over a base."""
    base = base or RunConfig()
    overrides: dict[str, dict] = {}
    top: dict = {}
    for key, raw in items:
        if key not in KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        section, fname, parse, _ = KEYS[key]
        try:
            value = parse(raw)
        except ValueError as e:
            raise ConfigError(f"bad value for {key!r}: {e}") from None
        if section:
            overrides.setdefault(section, {})[fname] = value
        else:
            top[fname] = value
    adam = replace(base.trainer.adam, **overrides.pop("adam", {}))
    trainer_kw = overrides.pop("trainer", {})
    trainer = replace(base.trainer, adam=adam, **trainer_kw)
    return replace(
        base,
        network=replace(base.network, **overrides.pop("network", {})),
        init=replace(base.init, **overrides.pop("init", {})),
        schedule=replace(base.schedule, **overrides.pop("schedule", {})),
        metrics=replace(base.metrics, **overrides.pop("metrics", {})),
        trainer=trainer,
        **top,
    )


def parse_config(text: str, base: RunConfig = None, path=None) -> RunConfig:
    items = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ParseError(f"expected key=value, got {body!r}",
                             path=path, line=lineno)
        key, _, raw = body.partition("=")
        items.append((key.strip(), raw.strip()))
    return parse_items(items, base=base)


def load_config(path, base: RunConfig = None) -> RunConfig:
    try:
        with open(path) as f:
            text = f.read()
    except OSError as e:
        raise ParseError(f"cannot read config: {e}", path=str(path)) from e
    return parse_config(text, base=base, path=str(path))


def _get(cfg: RunConfig, section: str, fname: str):
    if not section:
        return getattr(cfg, fname)
    if section == "adam":
        return getattr(cfg.trainer.adam, fname)
    return getattr(getattr(cfg, section), fname)


def canonical(cfg: RunConfig) -> str:
    """Every key, sorted, one per line; parses back to an equal config."""
    lines = []
    for key in sorted(KEYS):
        section, fname, _, fmt = KEYS[key]
        lines.append(f"{key}={fmt(_get(cfg, section, fname))}")
    return "\n".join(lines) + "\n"
