"""Run configuration: typed fields, strict dict round-trip, and a stable
content hash used to name run directories."""

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields

CONDITIONS = ("base", "randomout", "batchnorm")
MODEL_NAMES = ("cratercnn", "mini_inception")
OPTIMIZERS = ("sgd", "adam")
HASH_CHARS = 12


def _check_fields(kind, d, cls):
    allowed = {f.name for f in fields(cls)}
    unknown = sorted(set(d) - allowed)
    if unknown:
        raise ValueError(f"unknown {kind} field(s): {', '.join(unknown)}")


@dataclass(frozen=True)
class ModelCfg:
    name: str = "cratercnn"
    width: int = 4

    def __post_init__(self):
        if self.name not in MODEL_NAMES:
            raise ValueError(f"unknown model {self.name!r}, expected one of {MODEL_NAMES}")
        if self.width < 1:
            raise ValueError(f"width must be >= 1, got {self.width}")

    @classmethod
    def from_dict(cls, d):
        _check_fields("model", d, cls)
        return cls(**d)


@dataclass(frozen=True)
class DatasetCfg:
    """Data source. kind 'synth' generates crater-like images on the fly
    (n_pos ring + n_neg blob examples, then a stratified 50/50 split);
    'idx' and 'cifar10' read the files named in `paths` and split the same
    way. max_per_class caps cifar10 loading for desk-scale subsets."""

    kind: str = "synth"
    n_pos: int = 128
    n_neg: int = 128
    paths: tuple = ()
    max_per_class: int | None = None

    def __post_init__(self):
        if self.kind not in ("synth", "idx", "cifar10"):
            raise ValueError(f"unknown dataset kind {self.kind!r}")
        if self.kind == "synth" and (self.n_pos < 2 or self.n_neg < 2):
            raise ValueError(f"synth needs n_pos and n_neg >= 2, got {self.n_pos}, {self.n_neg}")
        if self.kind == "idx" and len(self.paths) != 2:
            raise ValueError("idx dataset needs paths=(images, labels)")
        if self.kind == "cifar10" and len(self.paths) != 1:
            raise ValueError("cifar10 dataset needs paths=(batch_file,)")
        if self.max_per_class is not None and self.max_per_class < 1:
            raise ValueError(f"max_per_class must be >= 1, got {self.max_per_class}")
        object.__setattr__(self, "paths", tuple(self.paths))

    @classmethod
    def from_dict(cls, d):
        _check_fields("dataset", d, cls)
        return cls(**d)


@dataclass(frozen=True)
class RandomOutCfg:
    tau: float = 1e-8
    p_active: float = 1.0
    check_every: int = 1

    def __post_init__(self):
        if self.tau < 0:
            raise ValueError(f"tau must be >= 0, got {self.tau}")
        if not 0.0 <= self.p_active <= 1.0:
            raise ValueError(f"p_active must be in [0, 1], got {self.p_active}")
        if self.check_every < 1:
            raise ValueError(f"check_every must be >= 1, got {self.check_every}")

    @classmethod
    def from_dict(cls, d):
        _check_fields("randomout", d, cls)
        return cls(**d)


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    epochs: int = 30
    batch_size: int = 16
    lr: float = 0.05
    optimizer: str = "sgd"
    condition: str = "base"
    model: ModelCfg = field(default_factory=ModelCfg)
    dataset: DatasetCfg = field(default_factory=DatasetCfg)
    randomout: RandomOutCfg | None = None
    telemetry_tau: float = 1e-8
    dead_first_layer: bool = False

    def __post_init__(self):
        if isinstance(self.model, dict):
            object.__setattr__(self, "model", ModelCfg.from_dict(self.model))
        if isinstance(self.dataset, dict):
            object.__setattr__(self, "dataset", DatasetCfg.from_dict(self.dataset))
        if isinstance(self.randomout, dict):
            object.__setattr__(self, "randomout", RandomOutCfg.from_dict(self.randomout))
        if self.seed < 0:
            raise ValueError(f"seed must be >= 0, got {self.seed}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError(f"epochs and batch_size must be >= 1, got {self.epochs}, {self.batch_size}")
        if self.lr <= 0:
            raise ValueError(f"lr must be > 0, got {self.lr}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.optimizer!r}, expected one of {OPTIMIZERS}")
        if self.condition not in CONDITIONS:
            raise ValueError(f"unknown condition {self.condition!r}, expected one of {CONDITIONS}")
        if self.telemetry_tau < 0:
            raise ValueError(f"telemetry_tau must be >= 0, got {self.telemetry_tau}")
        if self.condition == "randomout" and self.randomout is None:
            object.__setattr__(self, "randomout", RandomOutCfg())
        if self.condition != "randomout" and self.randomout is not None:
            raise ValueError("randomout settings are only valid with condition='randomout'")

    @classmethod
    def from_dict(cls, d):
        _check_fields("train", d, cls)
        d = dict(d)
        if "model" in d and isinstance(d["model"], dict):
            d["model"] = ModelCfg.from_dict(d["model"])
        if "dataset" in d and isinstance(d["dataset"], dict):
            d["dataset"] = DatasetCfg.from_dict(d["dataset"])
        if d.get("randomout") is not None and isinstance(d["randomout"], dict):
            d["randomout"] = RandomOutCfg.from_dict(d["randomout"])
        return cls(**d)

    def to_dict(self):
        d = asdict(self)
        d["dataset"]["paths"] = list(d["dataset"]["paths"])
        return d

    def canonical_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def config_hash(self):
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:HASH_CHARS]

    def replace(self, **kw):
        d = self.to_dict()
        # replacing the condition away from randomout drops stale settings
        d.update({k: v for k, v in kw.items()})
        if d.get("condition") != "randomout":
            d["randomout"] = None
        return TrainConfig.from_dict(d)


def load_config(path):
    with open(path) as f:
        try:
            raw = json.load(f)
        except json.JSONDecodeError as e:
            raise ValueError(f"{path}: invalid JSON at line {e.lineno} column {e.colno}: {e.msg}") from None
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: top-level JSON value must be an object")
    try:
        return TrainConfig.from_dict(raw)
    except (TypeError, ValueError) as e:
        raise ValueError(f"{path}: {e}") from None
