"""Experiment configuration: sectioned key=value files, validation, digests.

The file format is plain INI (configparser dialect, `#`/`;` comments, lists
comma-separated). Every knob has a default except the dataset columns, so a
minimal config is just a [dataset] section. Unknown sections or keys are
hard errors — typos should not silently train the wrong thing.

`config_digest` hashes the semantic content (everything except output
location and worker count), so artifacts stamped with equal digests came
from interchangeable configs.
"""

from __future__ import annotations

import configparser
import hashlib
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .data import DatasetSchema
from .dp import DpConfig
from .errors import ConfigError
from .federation import FederationConfig
from .model import SplitMask


@dataclass(frozen=True)
class DatasetConfig:
    csv_path: str
    categorical: tuple[str, ...]
    numeric: tuple[str, ...]
    department: str
    mode: str = "iid"  # iid | noniid
    seed: int = 0  # drives injection + partitioning, separate from run seeds

    def __post_init__(self):
        object.__setattr__(self, "categorical", tuple(self.categorical))
        object.__setattr__(self, "numeric", tuple(self.numeric))
        if not self.csv_path:
            raise ConfigError("dataset.csv_path is required")
        names = list(self.categorical) + list(self.numeric)
        if len(set(names)) != len(names):
            raise ConfigError(f"dataset columns must be unique, got {names}")
        if self.mode not in ("iid", "noniid"):
            raise ConfigError(f"dataset.mode must be iid or noniid, got {self.mode!r}")
        if self.seed < 0:
            raise ConfigError(f"dataset.seed must be >= 0, got {self.seed}")

    def schema(self) -> DatasetSchema:
        return DatasetSchema(
            categorical=self.categorical,
            numeric=self.numeric,
            department=self.department,
        )


@dataclass(frozen=True)
class AnomalyConfig:
    n_global: int = 0
    n_local: int = 0

    def __post_init__(self):
        if self.n_global < 0 or self.n_local < 0:
            raise ConfigError("anomaly counts must be >= 0")


@dataclass(frozen=True)
class TrainSettings:
    """The [federation] section; per-run seeds live in RunConfig."""

    clients: int = 1
    partitions: int = 1
    rounds: int = 1
    iterations: int = 1
    batch_size: int = 32
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_epsilon: float = 1e-8
    optimizer: str = "adam"
    early_stop_patience: int = 10
    early_stop_rel_tol: float = 1e-4


@dataclass(frozen=True)
class LossConfig:
    categorical_weight: float = 2.0 / 3.0
    clamp_epsilon: float = 1e-6

    def __post_init__(self):
        if not 0.0 <= self.categorical_weight <= 1.0:
            raise ConfigError(
                f"loss.categorical_weight must lie in [0, 1], "
                f"got {self.categorical_weight}"
            )
        if not 0.0 < self.clamp_epsilon < 0.5:
            raise ConfigError(
                f"loss.clamp_epsilon must lie in (0, 0.5), got {self.clamp_epsilon}"
            )


@dataclass(frozen=True)
class RunConfig:
    seeds: tuple[int, ...] = (0,)
    output_dir: str = "runs/fedanomaly"
    eval_scope: str = "client0"  # client0 | all
    other_class: str = "exclude"  # exclude | negative
    checkpoint_every: int = 0  # 0 = checkpoint only at termination
    jobs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not self.seeds:
            raise ConfigError("run.seeds must list at least one seed")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError(f"run.seeds must be unique, got {list(self.seeds)}")
        if any(s < 0 for s in self.seeds):
            raise ConfigError("run.seeds must be >= 0")
        if self.eval_scope not in ("client0", "all"):
            raise ConfigError(
                f"run.eval_scope must be client0 or all, got {self.eval_scope!r}"
            )
        if self.other_class not in ("exclude", "negative"):
            raise ConfigError(
                f"run.other_class must be exclude or negative, got {self.other_class!r}"
            )
        if self.checkpoint_every < 0:
            raise ConfigError("run.checkpoint_every must be >= 0")
        if self.jobs < 1:
            raise ConfigError("run.jobs must be >= 1")


@dataclass(frozen=True)
class SweepGrid:
    """Value lists for cmd_sweep; any non-empty subset forms a product grid.
    Listing clip norms or noise multipliers implies DP enabled in those cells."""

    clip_norms: tuple[float, ...] = ()
    noise_multipliers: tuple[float, ...] = ()
    cuts: tuple[int, ...] = ()
    clients: tuple[int, ...] = ()

    def is_empty(self) -> bool:
        return not (
            self.clip_norms or self.noise_multipliers or self.cuts or self.clients
        )


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetConfig
    anomalies: AnomalyConfig = field(default_factory=AnomalyConfig)
    federation: TrainSettings = field(default_factory=TrainSettings)
    dp: DpConfig = field(default_factory=DpConfig)
    split: SplitMask = field(default_factory=SplitMask)
    loss: LossConfig = field(default_factory=LossConfig)
    run: RunConfig = field(default_factory=RunConfig)
    sweep: SweepGrid = field(default_factory=SweepGrid)

    def __post_init__(self):
        self.federation_config(seed=self.run.seeds[0])  # validate eagerly

    def federation_config(self, seed: int) -> FederationConfig:
        f = self.federation
        return FederationConfig(
            clients=f.clients,
            partitions=f.partitions,
            rounds=f.rounds,
            iterations=f.iterations,
            batch_size=f.batch_size,
            learning_rate=f.learning_rate,
            beta1=f.beta1,
            beta2=f.beta2,
            adam_epsilon=f.adam_epsilon,
            optimizer=f.optimizer,
            dp=self.dp,
            split=self.split,
            early_stop_patience=f.early_stop_patience,
            early_stop_rel_tol=f.early_stop_rel_tol,
            seed=seed,
        )


# --------------------------------------------------------------------------
# parsing

_LIST_KEYS = {
    ("dataset", "categorical"),
    ("dataset", "numeric"),
    ("run", "seeds"),
    ("sweep", "clip_norms"),
    ("sweep", "noise_multipliers"),
    ("sweep", "cuts"),
    ("sweep", "clients"),
}

_KNOWN_KEYS: dict[str, tuple[str, ...]] = {
    "dataset": ("csv_path", "categorical", "numeric", "department", "mode", "seed"),
    "anomalies": ("n_global", "n_local"),
    "federation": (
        "clients",
        "partitions",
        "rounds",
        "iterations",
        "batch_size",
        "learning_rate",
        "beta1",
        "beta2",
        "adam_epsilon",
        "optimizer",
        "early_stop_patience",
        "early_stop_rel_tol",
    ),
    "dp": ("enabled", "clip_norm", "noise_multiplier"),
    "split": ("cut",),
    "loss": ("categorical_weight", "clamp_epsilon"),
    "run": (
        "seeds",
        "output_dir",
        "eval_scope",
        "other_class",
        "checkpoint_every",
        "jobs",
    ),
    "sweep": ("clip_norms", "noise_multipliers", "cuts", "clients"),
}


class _Section:
    """Typed accessors over one INI section with error messages that name
    the offending key."""

    def __init__(self, name: str, values: dict[str, str]):
        self.name = name
        self.values = values

    def _get(self, key: str, default):
        if key not in self.values:
            if default is _REQUIRED:
                raise ConfigError(f"{self.name}.{key} is required")
            return None
        return self.values[key]

    def string(self, key: str, default=None) -> str | None:
        raw = self._get(key, default)
        return default if raw is None else raw

    def integer(self, key: str, default=None):
        raw = self._get(key, default)
        if raw is None:
            return default
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{self.name}.{key}: {raw!r} is not an integer") from None

    def floating(self, key: str, default=None):
        raw = self._get(key, default)
        if raw is None:
            return default
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{self.name}.{key}: {raw!r} is not a number") from None

    def boolean(self, key: str, default=None):
        raw = self._get(key, default)
        if raw is None:
            return default
        lowered = str(raw).strip().lower()
        if lowered in ("true", "yes", "on", "1"):
            return True
        if lowered in ("false", "no", "off", "0"):
            return False
        raise ConfigError(f"{self.name}.{key}: {raw!r} is not a boolean")

    def _items(self, key: str, default):
        raw = self._get(key, default)
        if raw is None or isinstance(raw, tuple):
            return default if raw is None else raw
        return tuple(part.strip() for part in str(raw).split(",") if part.strip())

    def string_list(self, key: str, default=()) -> tuple[str, ...]:
        return tuple(self._items(key, default))

    def int_list(self, key: str, default=()) -> tuple[int, ...]:
        items = self._items(key, default)
        try:
            return tuple(int(v) for v in items)
        except ValueError:
            raise ConfigError(
                f"{self.name}.{key}: expected a comma-separated integer list"
            ) from None

    def float_list(self, key: str, default=()) -> tuple[float, ...]:
        items = self._items(key, default)
        try:
            return tuple(float(v) for v in items)
        except ValueError:
            raise ConfigError(
                f"{self.name}.{key}: expected a comma-separated number list"
            ) from None


_REQUIRED = object()


def parse_config(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(
        interpolation=None, inline_comment_prefixes=("#", ";")
    )
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config file is not valid INI: {exc}") from None

    for section in parser.sections():
        if section not in _KNOWN_KEYS:
            raise ConfigError(f"unknown config section [{section}]")
        for key in parser.options(section):
            if key not in _KNOWN_KEYS[section]:
                raise ConfigError(f"unknown key {section}.{key}")

    def sec(name: str) -> _Section:
        values = dict(parser.items(name)) if parser.has_section(name) else {}
        return _Section(name, values)

    d = sec("dataset")
    dataset = DatasetConfig(
        csv_path=d.string("csv_path", _REQUIRED),
        categorical=d.string_list("categorical", _REQUIRED),
        numeric=d.string_list("numeric", _REQUIRED),
        department=d.string("department", _REQUIRED),
        mode=d.string("mode", "iid"),
        seed=d.integer("seed", 0),
    )
    a = sec("anomalies")
    anomalies = AnomalyConfig(
        n_global=a.integer("n_global", 0), n_local=a.integer("n_local", 0)
    )
    f = sec("federation")
    federation = TrainSettings(
        clients=f.integer("clients", 1),
        partitions=f.integer("partitions", 1),
        rounds=f.integer("rounds", 1),
        iterations=f.integer("iterations", 1),
        batch_size=f.integer("batch_size", 32),
        learning_rate=f.floating("learning_rate", 1e-3),
        beta1=f.floating("beta1", 0.9),
        beta2=f.floating("beta2", 0.999),
        adam_epsilon=f.floating("adam_epsilon", 1e-8),
        optimizer=f.string("optimizer", "adam"),
        early_stop_patience=f.integer("early_stop_patience", 10),
        early_stop_rel_tol=f.floating("early_stop_rel_tol", 1e-4),
    )
    p = sec("dp")
    dp = DpConfig(
        clip_norm=p.floating("clip_norm", 1.0),
        noise_multiplier=p.floating("noise_multiplier", 0.0),
        enabled=p.boolean("enabled", False),
    )
    s = sec("split")
    cut = s.integer("cut", 0)
    if not 0 <= cut <= 8:
        raise ConfigError(f"split.cut must lie in [0, 8], got {cut}")
    split = SplitMask(cut_encoder=cut, cut_decoder=cut)
    lo = sec("loss")
    loss = LossConfig(
        categorical_weight=lo.floating("categorical_weight", 2.0 / 3.0),
        clamp_epsilon=lo.floating("clamp_epsilon", 1e-6),
    )
    r = sec("run")
    run = RunConfig(
        seeds=r.int_list("seeds", (0,)),
        output_dir=r.string("output_dir", "runs/fedanomaly"),
        eval_scope=r.string("eval_scope", "client0"),
        other_class=r.string("other_class", "exclude"),
        checkpoint_every=r.integer("checkpoint_every", 0),
        jobs=r.integer("jobs", 1),
    )
    w = sec("sweep")
    sweep = SweepGrid(
        clip_norms=w.float_list("clip_norms", ()),
        noise_multipliers=w.float_list("noise_multipliers", ()),
        cuts=w.int_list("cuts", ()),
        clients=w.int_list("clients", ()),
    )
    return ExperimentConfig(
        dataset=dataset,
        anomalies=anomalies,
        federation=federation,
        dp=dp,
        split=split,
        loss=loss,
        run=run,
        sweep=sweep,
    )


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    return parse_config(text)


# --------------------------------------------------------------------------
# serialization + digests


def serialize_config(cfg: ExperimentConfig) -> str:
    """INI text that parses back to an equal ExperimentConfig."""

    def join(values):
        return ", ".join(str(v) for v in values)

    parser = configparser.ConfigParser(interpolation=None)
    parser["dataset"] = {
        "csv_path": cfg.dataset.csv_path,
        "categorical": join(cfg.dataset.categorical),
        "numeric": join(cfg.dataset.numeric),
        "department": cfg.dataset.department,
        "mode": cfg.dataset.mode,
        "seed": str(cfg.dataset.seed),
    }
    parser["anomalies"] = {
        "n_global": str(cfg.anomalies.n_global),
        "n_local": str(cfg.anomalies.n_local),
    }
    f = cfg.federation
    parser["federation"] = {
        "clients": str(f.clients),
        "partitions": str(f.partitions),
        "rounds": str(f.rounds),
        "iterations": str(f.iterations),
        "batch_size": str(f.batch_size),
        "learning_rate": repr(f.learning_rate),
        "beta1": repr(f.beta1),
        "beta2": repr(f.beta2),
        "adam_epsilon": repr(f.adam_epsilon),
        "optimizer": f.optimizer,
        "early_stop_patience": str(f.early_stop_patience),
        "early_stop_rel_tol": repr(f.early_stop_rel_tol),
    }
    parser["dp"] = {
        "enabled": "true" if cfg.dp.enabled else "false",
        "clip_norm": repr(cfg.dp.clip_norm),
        "noise_multiplier": repr(cfg.dp.noise_multiplier),
    }
    parser["split"] = {"cut": str(cfg.split.cut_encoder)}
    parser["loss"] = {
        "categorical_weight": repr(cfg.loss.categorical_weight),
        "clamp_epsilon": repr(cfg.loss.clamp_epsilon),
    }
    parser["run"] = {
        "seeds": join(cfg.run.seeds),
        "output_dir": cfg.run.output_dir,
        "eval_scope": cfg.run.eval_scope,
        "other_class": cfg.run.other_class,
        "checkpoint_every": str(cfg.run.checkpoint_every),
        "jobs": str(cfg.run.jobs),
    }
    sweep = {}
    if cfg.sweep.clip_norms:
        sweep["clip_norms"] = join(cfg.sweep.clip_norms)
    if cfg.sweep.noise_multipliers:
        sweep["noise_multipliers"] = join(cfg.sweep.noise_multipliers)
    if cfg.sweep.cuts:
        sweep["cuts"] = join(cfg.sweep.cuts)
    if cfg.sweep.clients:
        sweep["clients"] = join(cfg.sweep.clients)
    if sweep:
        parser["sweep"] = sweep
    out = io.StringIO()
    parser.write(out)
    return out.getvalue()


def canonical_dict(cfg: ExperimentConfig) -> dict:
    """Semantic content only: output_dir and jobs do not affect results."""
    d = asdict(cfg)
    d["run"].pop("output_dir")
    d["run"].pop("jobs")
    return d


def config_digest(cfg: ExperimentConfig) -> str:
    payload = json.dumps(canonical_dict(cfg), sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def prep_digest(cfg: ExperimentConfig) -> str:
    """Digest of just the fields a prepared dataset artifact depends on."""
    payload = json.dumps(
        {
            "dataset": asdict(cfg.dataset),
            "anomalies": asdict(cfg.anomalies),
            "partitions": cfg.federation.partitions,
        },
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()
