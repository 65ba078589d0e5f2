"""Experiment configuration: flat INI-style sections of key=value pairs.

Unknown sections or keys are rejected so a typo cannot silently fall back to
a default. Flags (--seed, --out) override the corresponding keys after
parsing. See README for the full grammar and defaults.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, asdict

from .errors import ConfigError

_SCHEMA = {
    "data": {"text", "image", "pairs", "labels", "reports", "wordvec",
             "models", "n_test"},
    "features": {"kind", "section", "ngram", "min_df"},
    "reduction": {"pca_dim", "targets"},
    "method": {"name", "lambda", "beta", "ortho", "lr", "lr_d", "lr_decay",
               "epochs", "batch_size", "d_steps", "smoothing",
               "refine_rounds", "dict_size", "fraction"},
    "evaluation": {"k", "directions", "seeds", "metrics"},
    "sweep": {"kind", "fractions", "sections", "base_seed", "repeats"},
    "synth": {"n_train", "n_test", "latent_dim", "text_dim", "image_dim",
              "noise_sigma", "ground_truth", "n_code_clusters",
              "codes_per_cluster", "seed"},
    "baseline": {"metric", "n_candidates", "n_queries", "k"},
    "output": {"dir"},
}

METHOD_NAMES = ("ea-closed", "ea-grad", "adv", "adv-proc", "semi")
FEATURE_KINDS = ("tfidf", "wordvec", "precomputed")
SECTIONS = ("impression", "findings", "indication", "comparison", "history", "other")


@dataclass
class DataConfig:
    text: str | None = None
    image: str | None = None
    pairs: str | None = None
    labels: str | None = None
    reports: str | None = None
    wordvec: str | None = None
    models: str | None = None
    n_test: int = 0


@dataclass
class FeaturesConfig:
    kind: str = "tfidf"
    section: str = "findings"
    ngram: int = 2
    min_df: int = 2


@dataclass
class ReductionConfig:
    pca_dim: int = 64
    targets: tuple = ("image",)


@dataclass
class MethodConfig:
    name: str = "ea-closed"
    lam: float = 0.1
    beta: float = 0.01
    ortho: bool | None = None      # None = per-method default (on for adv/semi)
    lr: float = 0.1
    lr_d: float = 0.1
    lr_decay: float = 0.98
    epochs: int = 40
    batch_size: int = 250
    d_steps: int = 1
    smoothing: float = 0.0
    refine_rounds: int = 5
    dict_size: int = 500
    fraction: float = 1.0


@dataclass
class EvalConfig:
    k: tuple = (1, 10, 100)
    directions: tuple = ("T->I", "I->T")
    seeds: tuple = (1, 2, 3, 4, 5)
    metrics: tuple = ("similarity", "mrr", "ndcg")


@dataclass
class SweepConfig:
    kind: str = "fraction"
    fractions: tuple = (0.0, 0.001, 0.01, 0.1, 1.0)
    sections: tuple = ("impression", "findings")
    base_seed: int = 0
    repeats: int = 5


@dataclass
class SynthSection:
    n_train: int = 2000
    n_test: int = 500
    latent_dim: int = 64
    text_dim: int = 64
    image_dim: int = 64
    noise_sigma: float = 0.0
    ground_truth: str = "orthogonal"
    n_code_clusters: int = 16
    codes_per_cluster: int = 3
    seed: int = 0


@dataclass
class BaselineConfig:
    metric: str = "mrr"
    n_candidates: int = 19825
    n_queries: int = 2_000_000
    k: int = 10


@dataclass
class ExperimentConfig:
    data: DataConfig = field(default_factory=DataConfig)
    features: FeaturesConfig = field(default_factory=FeaturesConfig)
    reduction: ReductionConfig = field(default_factory=ReductionConfig)
    method: MethodConfig = field(default_factory=MethodConfig)
    evaluation: EvalConfig = field(default_factory=EvalConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    synth: SynthSection = field(default_factory=SynthSection)
    baseline: BaselineConfig = field(default_factory=BaselineConfig)
    out_dir: str = "runs/out"

    def snapshot(self) -> dict:
        return {
            "data": asdict(self.data), "features": asdict(self.features),
            "reduction": asdict(self.reduction), "method": asdict(self.method),
            "evaluation": asdict(self.evaluation), "sweep": asdict(self.sweep),
            "synth": asdict(self.synth), "baseline": asdict(self.baseline),
            "output": {"dir": self.out_dir},
        }


def _to_int(section, key, value):
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"[{section}] {key} must be an integer, got {value!r}") from None


def _to_float(section, key, value):
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"[{section}] {key} must be a number, got {value!r}") from None


def _to_bool(section, key, value):
    v = value.strip().lower()
    if v in ("true", "yes", "on", "1"):
        return True
    if v in ("false", "no", "off", "0"):
        return False
    raise ConfigError(f"[{section}] {key} must be a boolean, got {value!r}")


def _split_list(value):
    return tuple(v.strip() for v in value.split(",") if v.strip())


def parse_config(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None,
                                       inline_comment_prefixes=("#",))
    try:
        parser.read_file(io.StringIO(text))
    except configparser.Error as exc:
        raise ConfigError(f"config syntax error: {exc}") from exc

    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key in parser[section]:
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")

    cfg = ExperimentConfig()

    def get(section, key, default=None):
        if parser.has_section(section) and key in parser[section]:
            return parser[section][key].strip()
        return default

    # data
    for key in ("text", "image", "pairs", "labels", "reports", "wordvec", "models"):
        v = get("data", key)
        if v is not None:
            setattr(cfg.data, key, v)
    v = get("data", "n_test")
    if v is not None:
        cfg.data.n_test = _to_int("data", "n_test", v)
        if cfg.data.n_test < 0:
            raise ConfigError(f"[data] n_test must be >= 0, got {cfg.data.n_test}")

    # features
    v = get("features", "kind")
    if v is not None:
        if v not in FEATURE_KINDS:
            raise ConfigError(f"[features] kind must be one of {FEATURE_KINDS}, got {v!r}")
        cfg.features.kind = v
    v = get("features", "section")
    if v is not None:
        if v not in SECTIONS:
            raise ConfigError(f"[features] section must be one of {SECTIONS}, got {v!r}")
        cfg.features.section = v
    v = get("features", "ngram")
    if v is not None:
        cfg.features.ngram = _to_int("features", "ngram", v)
        if not 1 <= cfg.features.ngram <= 3:
            raise ConfigError(f"[features] ngram must be 1..3, got {cfg.features.ngram}")
    v = get("features", "min_df")
    if v is not None:
        cfg.features.min_df = _to_int("features", "min_df", v)
        if cfg.features.min_df < 1:
            raise ConfigError(f"[features] min_df must be >= 1, got {cfg.features.min_df}")

    # reduction
    v = get("reduction", "pca_dim")
    if v is not None:
        cfg.reduction.pca_dim = _to_int("reduction", "pca_dim", v)
        if cfg.reduction.pca_dim < 1:
            raise ConfigError(f"[reduction] pca_dim must be >= 1, got {cfg.reduction.pca_dim}")
    v = get("reduction", "targets")
    if v is not None:
        targets = _split_list(v)
        for t in targets:
            if t not in ("text", "image"):
                raise ConfigError(f"[reduction] targets entries must be text or image, got {t!r}")
        cfg.reduction.targets = targets

    # method
    v = get("method", "name")
    if v is not None:
        if v not in METHOD_NAMES:
            raise ConfigError(f"[method] name must be one of {METHOD_NAMES}, got {v!r}")
        cfg.method.name = v
    for key, attr, conv, check in (
        ("lambda", "lam", _to_float, lambda x: x >= 0),
        ("beta", "beta", _to_float, lambda x: x >= 0),
        ("lr", "lr", _to_float, lambda x: x > 0),
        ("lr_d", "lr_d", _to_float, lambda x: x > 0),
        ("lr_decay", "lr_decay", _to_float, lambda x: 0 < x <= 1),
        ("epochs", "epochs", _to_int, lambda x: x >= 0),
        ("batch_size", "batch_size", _to_int, lambda x: x >= 1),
        ("d_steps", "d_steps", _to_int, lambda x: x >= 1),
        ("smoothing", "smoothing", _to_float, lambda x: x >= 0),
        ("refine_rounds", "refine_rounds", _to_int, lambda x: x >= 0),
        ("dict_size", "dict_size", _to_int, lambda x: x >= 1),
        ("fraction", "fraction", _to_float, lambda x: 0 <= x <= 1),
    ):
        v = get("method", key)
        if v is not None:
            value = conv("method", key, v)
            if not check(value):
                raise ConfigError(f"[method] {key} value {value} out of range")
            setattr(cfg.method, attr, value)
    v = get("method", "ortho")
    if v is not None:
        cfg.method.ortho = _to_bool("method", "ortho", v)

    # evaluation
    v = get("evaluation", "k")
    if v is not None:
        ks = tuple(_to_int("evaluation", "k", s) for s in _split_list(v))
        if not ks or any(k < 1 for k in ks):
            raise ConfigError(f"[evaluation] k must be positive integers, got {v!r}")
        cfg.evaluation.k = ks
    v = get("evaluation", "directions")
    if v is not None:
        dirs = _split_list(v)
        for d in dirs:
            if d not in ("T->I", "I->T"):
                raise ConfigError(f"[evaluation] directions must be T->I or I->T, got {d!r}")
        cfg.evaluation.directions = dirs
    v = get("evaluation", "seeds")
    if v is not None:
        seeds = tuple(_to_int("evaluation", "seeds", s) for s in _split_list(v))
        if not seeds or len(set(seeds)) != len(seeds):
            raise ConfigError(f"[evaluation] seeds must be distinct, got {v!r}")
        cfg.evaluation.seeds = seeds
    v = get("evaluation", "metrics")
    if v is not None:
        metrics = _split_list(v)
        for m in metrics:
            if m not in ("similarity", "mrr", "ndcg"):
                raise ConfigError(f"[evaluation] unknown metric {m!r}")
        cfg.evaluation.metrics = metrics

    # sweep
    v = get("sweep", "kind")
    if v is not None:
        if v not in ("fraction", "section"):
            raise ConfigError(f"[sweep] kind must be fraction or section, got {v!r}")
        cfg.sweep.kind = v
    v = get("sweep", "fractions")
    if v is not None:
        fr = tuple(_to_float("sweep", "fractions", s) for s in _split_list(v))
        if not fr or any(not 0 <= f <= 1 for f in fr):
            raise ConfigError(f"[sweep] fractions must lie in [0, 1], got {v!r}")
        cfg.sweep.fractions = fr
    v = get("sweep", "sections")
    if v is not None:
        secs = _split_list(v)
        for s in secs:
            if s not in SECTIONS:
                raise ConfigError(f"[sweep] unknown section {s!r}")
        cfg.sweep.sections = secs
    v = get("sweep", "base_seed")
    if v is not None:
        cfg.sweep.base_seed = _to_int("sweep", "base_seed", v)
    v = get("sweep", "repeats")
    if v is not None:
        cfg.sweep.repeats = _to_int("sweep", "repeats", v)
        if cfg.sweep.repeats < 1:
            raise ConfigError(f"[sweep] repeats must be >= 1, got {cfg.sweep.repeats}")

    # synth
    for key, conv in (("n_train", _to_int), ("n_test", _to_int), ("latent_dim", _to_int),
                      ("text_dim", _to_int), ("image_dim", _to_int),
                      ("noise_sigma", _to_float), ("n_code_clusters", _to_int),
                      ("codes_per_cluster", _to_int), ("seed", _to_int)):
        v = get("synth", key)
        if v is not None:
            setattr(cfg.synth, key, conv("synth", key, v))
    v = get("synth", "ground_truth")
    if v is not None:
        if v not in ("linear-random", "orthogonal", "permuted-identity"):
            raise ConfigError(f"[synth] invalid ground_truth value {v!r}")
        cfg.synth.ground_truth = v

    # baseline
    v = get("baseline", "metric")
    if v is not None:
        if v not in ("mrr", "ndcg"):
            raise ConfigError(f"[baseline] metric must be mrr or ndcg, got {v!r}")
        cfg.baseline.metric = v
    for key in ("n_candidates", "n_queries", "k"):
        v = get("baseline", key)
        if v is not None:
            value = _to_int("baseline", key, v)
            if value < 1:
                raise ConfigError(f"[baseline] {key} must be >= 1, got {value}")
            setattr(cfg.baseline, key, value)

    # output
    v = get("output", "dir")
    if v is not None:
        cfg.out_dir = v

    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_config(text)


def apply_overrides(cfg: ExperimentConfig, seed: int | None = None,
                    out_dir: str | None = None) -> ExperimentConfig:
    """Apply --seed / --out flag overrides onto a parsed config."""
    if seed is not None:
        cfg.synth.seed = int(seed)
        cfg.sweep.base_seed = int(seed)
        cfg.evaluation.seeds = (int(seed),)
    if out_dir is not None:
        cfg.out_dir = str(out_dir)
    return cfg
