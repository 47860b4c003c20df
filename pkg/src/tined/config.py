"""Dataclass configurations for teachers, students and optimization."""

import warnings
from dataclasses import asdict, dataclass, field, fields

# Hyperparameter search spaces used by the sweep command.
LR_GRID = [0.0001, 0.0005, 0.001, 0.005, 0.01]
WEIGHT_DECAY_GRID = [0.0, 0.0001, 0.0005, 0.001, 0.005, 0.01]
LAMBDA_GRID = [0.1, 0.4, 0.5, 0.6, 1.0]
DROPOUT_GRID = [0.0, 0.1, 0.3, 0.5, 0.8]
BETA_GRID = [1e-6, 5e-5, 1e-5, 0.05, 0.1, 0.5, 1.0, 5.0, 10.0]
ETA_GRID = [0.01, 0.1, 0.5, 1.0, 3.0, 10.0]
ZETA_GRID = [0.001, 0.005, 0.1, 0.4, 1.0]
MU_CHOICES = ["sqrt", "log", "identity"]
TEACHER_KINDS = ["graphsage", "gcn", "gat", "appnp"]

# Values of the published eta / beta sensitivity tables, exposed as sweep presets.
ETA_TABLE_PRESET = [1e-9, 1e-6, 0.001, 0.01, 0.1, 0.5, 1.0, 10.0]
BETA_TABLE_PRESET = [1e-9, 1e-6, 0.001, 0.1, 1.0, 10.0]


@dataclass
class LossWeights:
    lam: float = 0.5
    beta: float = 0.1
    eta: float = 0.5
    zeta: float | None = 1.0  # None disables edge sampling altogether
    mu: str = "identity"
    temperature: float = 1.0

    def __post_init__(self):
        for name in ("lam", "beta", "eta"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.zeta is not None and not (0.0 < self.zeta <= 1.0):
            raise ValueError(f"zeta must lie in (0, 1], got {self.zeta}")
        if self.mu not in MU_CHOICES:
            raise ValueError(f"mu must be one of {MU_CHOICES}, got {self.mu!r}")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")


@dataclass
class TeacherConfig:
    kind: str = "graphsage"
    hidden: int = 64
    num_layers: int = 2
    dropout: float = 0.0
    norm: str = "none"
    slope: float = 0.2
    alpha: float = 0.1
    prop_steps: int = 10
    aggregator: str = "gcn"  # closed-neighborhood mean; "mean_concat" keeps self and neighbor mean side by side

    def __post_init__(self):
        if self.kind not in TEACHER_KINDS:
            raise ValueError(f"teacher kind must be one of {TEACHER_KINDS}, got {self.kind!r}")
        if self.aggregator not in ("mean_concat", "gcn"):
            raise ValueError(f"aggregator must be 'mean_concat' or 'gcn', got {self.aggregator!r}")
        if self.norm not in ("none", "layer"):
            raise ValueError(f"norm must be 'none' or 'layer', got {self.norm!r}")
        if self.num_layers < 1:
            raise ValueError("num_layers must be at least 1")


@dataclass
class TrainConfig:
    lr: float = 0.01
    weight_decay: float = 5e-4
    max_epochs: int = 500
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    gp_activation: str = "relu"

    def __post_init__(self):
        self.betas = tuple(self.betas)
        if self.gp_activation not in ("relu", "identity"):
            raise ValueError("gp_activation must be 'relu' or 'identity'")


@dataclass
class SplitConfig:
    labels_per_class: int = 20
    val_per_class: int = 30


@dataclass
class RunConfig:
    mode: str = "transductive"
    dataset: str = ""
    teacher: TeacherConfig = field(default_factory=TeacherConfig)
    teacher_train: TrainConfig = field(default_factory=TrainConfig)
    student: LossWeights = field(default_factory=LossWeights)
    student_train: TrainConfig = field(default_factory=TrainConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    seeds: list = field(default_factory=lambda: [0])
    out: str = "runs"

    def __post_init__(self):
        if self.mode not in ("transductive", "production"):
            raise ValueError(f"mode must be 'transductive' or 'production', got {self.mode!r}")
        check_ranges(self)

    def to_dict(self):
        return asdict(self)


_SECTIONS = {
    "teacher": TeacherConfig,
    "teacher_train": TrainConfig,
    "student": LossWeights,
    "student_train": TrainConfig,
    "split": SplitConfig,
}


def run_config_from_dict(d):
    """Build a RunConfig from a parsed TOML mapping; unknown keys raise ValueError."""
    d = dict(d)
    known = {f.name for f in fields(RunConfig)}
    unknown = set(d) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    kwargs = {}
    for key, value in d.items():
        cls = _SECTIONS.get(key)
        if cls is None:
            kwargs[key] = value
            continue
        if not isinstance(value, dict):
            raise ValueError(f"[{key}] must be a table")
        allowed = {f.name for f in fields(cls)}
        bad = set(value) - allowed
        if bad:
            raise ValueError(f"unknown keys in [{key}]: {sorted(bad)}")
        kwargs[key] = cls(**value)
    return RunConfig(**kwargs)


def check_ranges(cfg):
    """Warn (not fail) when a value falls outside the documented search space."""
    checks = [
        ("student_train.lr", cfg.student_train.lr, min(LR_GRID), max(LR_GRID)),
        ("teacher_train.lr", cfg.teacher_train.lr, min(LR_GRID), max(LR_GRID)),
        ("student_train.weight_decay", cfg.student_train.weight_decay, 0.0, max(WEIGHT_DECAY_GRID)),
        ("student.lam", cfg.student.lam, 0.0, max(LAMBDA_GRID)),
        ("student.beta", cfg.student.beta, 0.0, max(BETA_GRID)),
        ("student.eta", cfg.student.eta, 0.0, max(ETA_GRID)),
        ("teacher.dropout", cfg.teacher.dropout, 0.0, max(DROPOUT_GRID)),
    ]
    for name, value, lo, hi in checks:
        if not (lo <= value <= hi):
            warnings.warn(f"{name}={value} is outside the documented range [{lo}, {hi}]", stacklevel=3)
