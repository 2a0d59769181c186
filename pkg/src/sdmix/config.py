"""INI-style experiment configuration: parsing, validation, defaults and echo."""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace

from .data import SplitSpec, SyntheticSpec
from .margin import GAMMA_GRID, TOP_C_GRID, MarginConfig
from .training import ALGORITHMS, ALPHA_GRID, ModelConfig, TrainConfig


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(text)


def _list(conv):
    def parse(text: str):
        return tuple(conv(p.strip()) for p in text.split(",") if p.strip())
    parse.__name__ = f"list of {conv.__name__}"
    return parse


def _optional(conv):
    def parse(text: str):
        return None if text.strip().lower() in ("", "none") else conv(text)
    parse.__name__ = f"{conv.__name__} or none"
    return parse


def _targets(text: str):
    return "all" if text.strip().lower() == "all" else _list(int)(text)


_bool.__name__ = "bool"
_targets.__name__ = "'all' or list of int"

SCHEMA: dict[str, dict[str, object]] = {
    "data": {
        "csv": _list(str), "window_len": int, "overlap": float, "train_fraction": float,
        "stratified": _bool, "split_seed": int,
    },
    "model": {"kernel_width": int, "channels": _list(int), "num_classes": _optional(int)},
    "train": {
        "algorithm": str, "alpha": float, "mix_space": str, "range_variant": str, "range_metric": str,
        "refresh_every": int, "constant_range": _optional(float), "learning_rate": float,
        "weight_decay": float, "batch_per_domain": int, "max_epochs": int, "seed": int,
    },
    "margin": {"gamma": float, "top_c": int, "p": float, "denom_floor": float, "epsilon_noisy": float},
    "synthetic": {
        "num_domains": int, "num_classes": int, "channels": int, "window_len": int,
        "windows_per_class": int, "separation": float, "noise": float, "sigma_multipliers": _list(float),
        "amplitude_jitter": float, "domain_offset": float, "domain_noise_jitter": float,
        "phase_jitter": float, "seed": int,
    },
    "experiment": {"algorithms": _list(str), "seeds": _list(int), "targets": _targets, "figures": _bool},
    "sweep": {"alpha": _list(float), "top_c": _list(int), "gamma": _list(float)},
    "toy": {
        "num_classes": int, "points_per_class": int, "spread_ratio": float, "base_spread": float,
        "separation": float, "epochs": int, "hidden": int, "alpha": float, "learning_rate": float,
        "grid": int, "seeds": _list(int), "range_variant": str, "batch_size": int,
    },
}


@dataclass(frozen=True)
class DataConfig:
    csv: tuple[str, ...] = ()
    window_len: int = 50
    overlap: float = 0.5


@dataclass(frozen=True)
class ToyConfig:
    num_classes: int = 2
    points_per_class: int = 200
    spread_ratio: float = 4.0
    base_spread: float = 0.3
    separation: float = 2.0
    epochs: int = 60
    hidden: int = 16
    alpha: float = 1.0
    learning_rate: float = 1e-2
    grid: int = 60
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    range_variant: str = "mean"
    batch_size: int = 32


@dataclass(frozen=True)
class ExperimentConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    data: DataConfig = field(default_factory=DataConfig)
    synthetic: SyntheticSpec | None = None
    synthetic_seed: int = 0
    algorithms: tuple[str, ...] = ()
    seeds: tuple[int, ...] = ()
    targets: object = "all"
    figures: bool = True
    sweep: dict = field(default_factory=lambda: {
        "alpha": ALPHA_GRID, "top_c": TOP_C_GRID, "gamma": GAMMA_GRID})
    toy: ToyConfig = field(default_factory=ToyConfig)

    @property
    def run_algorithms(self) -> tuple[str, ...]:
        return self.algorithms or (self.train.algorithm,)

    @property
    def run_seeds(self) -> tuple[int, ...]:
        return self.seeds or (self.train.seed,)


def _read(text: str) -> dict[str, dict[str, object]]:
    parser = configparser.ConfigParser(comment_prefixes=("#", ";"), inline_comment_prefixes=("#",),
                                       interpolation=None, default_section="__none__")
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    unknown_sections = [s for s in parser.sections() if s not in SCHEMA]
    if unknown_sections:
        raise ConfigError(f"unknown sections: {', '.join(unknown_sections)}")
    parsed: dict[str, dict[str, object]] = {}
    for section in parser.sections():
        schema = SCHEMA[section]
        unknown = [k for k in parser[section] if k not in schema]
        if unknown:
            raise ConfigError(f"unknown keys in [{section}]: {', '.join(unknown)}")
        values = {}
        for key, raw in parser[section].items():
            conv = schema[key]
            try:
                values[key] = conv(raw)
            except (ValueError, TypeError):
                raise ConfigError(
                    f"[{section}] {key} = {raw!r}: expected {getattr(conv, '__name__', conv)}"
                ) from None
        parsed[section] = values
    return parsed


def parse_config_text(text: str, require_data: bool = True) -> ExperimentConfig:
    sections = _read(text)
    data = sections.get("data", {})
    model = sections.get("model", {})
    train = sections.get("train", {})
    margin = sections.get("margin", {})
    exp = sections.get("experiment", {})

    if require_data and "synthetic" not in sections and not data.get("csv"):
        raise ConfigError("missing required data source: give a [synthetic] section or [data] csv = ...")
    if "synthetic" in sections and data.get("csv"):
        raise ConfigError("give either a [synthetic] section or [data] csv, not both")

    split = SplitSpec(
        train_fraction=data.get("train_fraction", SplitSpec.train_fraction),
        seed=data.get("split_seed", SplitSpec.seed),
        stratified=data.get("stratified", SplitSpec.stratified),
    )
    margin_cfg = MarginConfig(**margin)
    train_kw = dict(train)
    train_cfg = TrainConfig(margin=margin_cfg, split=split, **train_kw)
    channels = model.get("channels", ModelConfig.channels_per_block)
    if len(channels) != 2:
        raise ConfigError(f"[model] channels: expected two integers, got {len(channels)}")
    model_cfg = ModelConfig(model.get("kernel_width", ModelConfig.kernel_width), tuple(channels),
                            model.get("num_classes"))

    synthetic, synthetic_seed = None, 0
    if "synthetic" in sections:
        syn = dict(sections["synthetic"])
        synthetic_seed = syn.pop("seed", 0)
        if "sigma_multipliers" not in syn:
            syn["sigma_multipliers"] = (1.0,) * syn.get("num_classes", SyntheticSpec.num_classes)
        synthetic = SyntheticSpec(**syn)

    cfg = ExperimentConfig(
        train=train_cfg, model=model_cfg,
        data=DataConfig(data.get("csv", ()), data.get("window_len", DataConfig.window_len),
                        data.get("overlap", DataConfig.overlap)),
        synthetic=synthetic, synthetic_seed=synthetic_seed,
        algorithms=exp.get("algorithms", ()), seeds=exp.get("seeds", ()),
        targets=exp.get("targets", "all"), figures=exp.get("figures", True),
        toy=ToyConfig(**sections.get("toy", {})),
    )
    if "sweep" in sections:
        cfg = replace(cfg, sweep={**cfg.sweep, **sections["sweep"]})
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    try:
        for alg in cfg.run_algorithms:
            if alg not in ALGORITHMS:
                raise ValueError(f"unknown algorithm {alg!r}; expected one of {ALGORITHMS}")
        cfg.train.validate()
        if cfg.synthetic is not None:
            cfg.synthetic.validate()
        if not 0 <= cfg.data.overlap < 1:
            raise ValueError(f"[data] overlap must lie in [0, 1), got {cfg.data.overlap}")
        if not 0 < cfg.train.split.train_fraction < 1:
            raise ValueError("[data] train_fraction must lie in (0, 1)")
        if cfg.train.range_variant not in ("max", "mean") or cfg.train.range_metric not in ("l1", "l2", "cosine"):
            raise ValueError("range_variant must be max|mean and range_metric l1|l2|cosine")
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def parse_config(path, require_data: bool = True) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config_text(fh.read(), require_data)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (tuple, list)):
        return ", ".join(_fmt(v) for v in value)
    if value is None:
        return "none"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def echo_config(cfg: ExperimentConfig) -> str:
    """Fully resolved config text; parsing it back yields an equivalent config
    (run lists are spelled out) whose echo is byte-identical."""
    t = cfg.train
    sections: dict[str, dict[str, object]] = {
        "data": {
            "train_fraction": t.split.train_fraction, "stratified": t.split.stratified,
            "split_seed": t.split.seed, "window_len": cfg.data.window_len, "overlap": cfg.data.overlap,
        },
        "model": {"kernel_width": cfg.model.kernel_width, "channels": cfg.model.channels_per_block,
                  "num_classes": cfg.model.num_classes},
        "train": {f.name: getattr(t, f.name) for f in fields(t) if f.name not in ("margin", "split")},
        "margin": {f.name: getattr(t.margin, f.name) for f in fields(t.margin)},
    }
    if cfg.data.csv:
        sections["data"]["csv"] = cfg.data.csv
    if cfg.synthetic is not None:
        sections["synthetic"] = {f.name: getattr(cfg.synthetic, f.name) for f in fields(cfg.synthetic)}
        sections["synthetic"]["seed"] = cfg.synthetic_seed
    sections["experiment"] = {
        "algorithms": cfg.run_algorithms, "seeds": cfg.run_seeds,
        "targets": cfg.targets, "figures": cfg.figures,
    }
    sections["sweep"] = dict(cfg.sweep)
    sections["toy"] = {f.name: getattr(cfg.toy, f.name) for f in fields(cfg.toy)}
    lines = ["# resolved configuration (all defaults applied)"]
    for name, values in sections.items():
        lines.append(f"\n[{name}]")
        lines.extend(f"{k} = {_fmt(v)}" for k, v in values.items())
    return "\n".join(lines) + "\n"
