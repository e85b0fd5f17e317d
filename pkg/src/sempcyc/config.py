"""Flat ``dotted.key=value`` configuration files with typed defaults."""
from __future__ import annotations

import hashlib
import json
from dataclasses import fields

from .data import SynthConfig
from .errors import ConfigError
from .objective import TERMS
from .trainer import TrainConfig

TEXT_SOURCES = ("word2vec", "glove")
HIER_SOURCES = ("path", "lin", "jcn")

# every accepted key with its default; the default's type decides parsing
DEFAULTS: dict[str, object] = {
    "run.dir": "run",
    "data.source": "synth",  # synth | files
    "data.sketch_features": "",
    "data.image_features": "",
    "data.side_info": "",
    "data.split": "",
    "data.feature_dim": 512,
    "data.min_images_per_class": 0,
    "sideinfo.sources": "word2vec+jcn",
    "sideinfo.word2vec": "",
    "sideinfo.glove": "",
    "sideinfo.taxonomy": "",
    "sideinfo.aliases": "",
    "sideinfo.classes": "",
    "sideinfo.seen": "",
    "sideinfo.ic_counts": "",
    "sideinfo.output": "",
    "cls.pretrain": False,
    "aenc.pretrain_epochs": 0,
    "itq.iters": 50,
    "itq.seed": 0,
    "itq.init": "random",
    "eval.mode": "unseen_only",
    "eval.metric": "euclidean",
    "eval.k": 100,
    "eval.topk": 10,
    "ablate.seeds": "0,1,2",
    "sweep.ratios": "0,0.05,0.1,0.2,0.3,0.4",
}
for _f in fields(SynthConfig):
    DEFAULTS[f"synth.{_f.name}"] = _f.default
for _f in fields(TrainConfig):
    if _f.name in ("weights", "cls_pretrain", "aenc_pretrain_epochs"):
        continue
    DEFAULTS[f"train.{_f.name}"] = _f.default
for _t in TERMS:
    DEFAULTS[f"train.weights.{_t}"] = 1.0


def _parse(key: str, raw: str):
    default = DEFAULTS[key]
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {type(default).__name__}") from None
    return raw


class Config:
    """Typed view over the dotted keys; unknown keys are rejected."""

    def __init__(self, values: dict | None = None):
        self.values = dict(DEFAULTS)
        for k, v in (values or {}).items():
            self.set(k, v)

    def set(self, key: str, value) -> None:
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        self.values[key] = _parse(key, value) if isinstance(value, str) else value

    def __getitem__(self, key: str):
        return self.values[key]

    def section(self, prefix: str) -> dict:
        p = prefix + "."
        return {k[len(p):]: v for k, v in self.values.items() if k.startswith(p)}

    def synth_config(self) -> SynthConfig:
        try:
            return SynthConfig(**self.section("synth"))
        except ValueError as e:
            raise ConfigError(f"synth: {e}") from None

    def train_config(self, **overrides) -> TrainConfig:
        kw = {k: v for k, v in self.section("train").items() if not k.startswith("weights.")}
        kw["weights"] = {t: self.values[f"train.weights.{t}"] for t in TERMS}
        kw["cls_pretrain"] = self.values["cls.pretrain"]
        kw["aenc_pretrain_epochs"] = self.values["aenc.pretrain_epochs"]
        kw.update(overrides)
        return TrainConfig(**kw)

    def sources(self) -> tuple[str | None, str | None]:
        """``(text_source, hierarchy_measure)`` from ``sideinfo.sources``, e.g. ``word2vec+jcn``."""
        parts = [p.strip() for p in self.values["sideinfo.sources"].split("+") if p.strip()]
        text = [p for p in parts if p in TEXT_SOURCES]
        hier = [p for p in parts if p in HIER_SOURCES]
        unknown = set(parts) - set(TEXT_SOURCES) - set(HIER_SOURCES)
        if unknown:
            raise ConfigError(f"unknown side-information source(s) {sorted(unknown)}")
        if len(text) > 1 or len(hier) > 1 or not parts:
            raise ConfigError("sideinfo.sources takes at most one text model and one "
                              "hierarchy measure, joined by '+'")
        return (text[0] if text else None), (hier[0] if hier else None)

    def int_list(self, key: str) -> list[int]:
        return [int(v) for v in _split_list(key, self.values[key])]

    def float_list(self, key: str) -> list[float]:
        return [float(v) for v in _split_list(key, self.values[key])]

    def to_dict(self) -> dict:
        return dict(sorted(self.values.items()))

    def hash(self) -> str:
        # the output directory does not change any result
        d = {k: v for k, v in self.to_dict().items() if k != "run.dir"}
        blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def dump(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for k, v in self.to_dict().items():
                fh.write(f"{k}={str(v).lower() if isinstance(v, bool) else v}\n")


def _split_list(key: str, raw: str) -> list[str]:
    items = [v.strip() for v in str(raw).split(",") if v.strip()]
    if not items:
        raise ConfigError(f"{key} is empty")
    try:
        [float(v) for v in items]
    except ValueError:
        raise ConfigError(f"{key}: expected a comma-separated list of numbers") from None
    return items


def parse_lines(lines, origin: str = "<config>") -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{lineno}: expected 'key=value'")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def load_config(path=None, overrides=()) -> Config:
    """Read a config file (optional) and apply ``key=value`` override strings on top."""
    values: dict[str, str] = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                values.update(parse_lines(fh, str(path)))
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found") from None
    values.update(parse_lines(overrides, "--set"))
    return Config(values)


# Training recipe for the synthetic benchmark: small semantic space, faster
# rates, a frozen classifier on encoded side vectors and a light cycle weight
# (the L1 cycle term sums over 512 feature coordinates and would otherwise
# dominate the other terms).
BENCHMARK: dict[str, object] = {
    "train.M": 16,
    "train.epochs": 30,
    "train.lr_generator": 1e-3,
    "train.lr_discriminator": 1e-3,
    "train.d_hidden": 128,
    "train.lam": 0.05,
    "train.weights.cyc_sk": 0.03,
    "train.weights.cyc_im": 0.03,
    "cls.pretrain": True,
    "aenc.pretrain_epochs": 500,
}


def benchmark_config(**values) -> Config:
    """The benchmark recipe with extra ``dotted.key=value`` pairs applied on top."""
    return Config({**BENCHMARK, **values})
