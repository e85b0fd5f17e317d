"""Alternating adversarial training, ablation modes and checkpoints."""
from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .autoencoder import AutoEncoderParams, fit_autoencoder, l21_norm, prox_l21
from .data import Dataset
from .errors import CheckpointError, ConfigError, NumericError
from .network import DISCRIMINATORS, ModelState, init_model
from .objective import CSV_HEADER, TERMS, Batch, LossReport, encoded_side, term_grad, total_loss_grad
from .optim import Adam

ABLATIONS = ("full", "adv_only", "adv+cyc", "adv+cls", "no_sideinfo_selection", "no_l21")
FORMAT_VERSION = 1
MAGIC = b"SEMPCYC\x00"


@dataclass
class TrainConfig:
    M: int = 64
    epochs: int = 50
    batch_size: int = 32
    lr_generator: float = 1e-4
    lr_discriminator: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.999
    weights: dict = field(default_factory=lambda: {t: 1.0 for t in TERMS})
    lam: float = 0.5
    seed: int = 0
    ablation: str = "full"
    disc_steps_per_gen_step: int = 1
    d_hidden: int = 512
    shared_classifier: bool = False
    gan_form: str = "nonsaturating"
    l21_mode: str = "prox"
    aenc_pretrain_epochs: int = 0
    cls_pretrain: bool = False
    log_tail: int = 20

    def __post_init__(self):
        if self.ablation not in ABLATIONS:
            raise ConfigError(f"unknown ablation {self.ablation!r}; choose from {ABLATIONS}")
        if self.M < 1 or self.batch_size < 1 or self.epochs < 0:
            raise ConfigError("M and batch_size must be positive, epochs non-negative")
        if self.lr_generator < 0 or self.lr_discriminator < 0 or self.lam < 0:
            raise ConfigError("learning rates and lambda must be non-negative")
        if self.disc_steps_per_gen_step < 0:
            raise ConfigError("disc_steps_per_gen_step must be non-negative")
        if self.gan_form not in ("minimax", "nonsaturating"):
            raise ConfigError(f"unknown gan_form {self.gan_form!r}")
        if self.l21_mode not in ("prox", "subgradient"):
            raise ConfigError(f"unknown l21_mode {self.l21_mode!r}")
        unknown = set(self.weights) - set(TERMS)
        if unknown:
            raise ConfigError(f"unknown loss weights {sorted(unknown)}")
        self.weights = {t: float(self.weights.get(t, 1.0)) for t in TERMS}

    @property
    def select_side_info(self) -> bool:
        return self.ablation != "no_sideinfo_selection"

    def effective_weights(self) -> dict[str, float]:
        w = dict(self.weights)
        if self.ablation in ("adv_only", "adv+cls"):
            w["cyc_sk"] = w["cyc_im"] = 0.0
        if self.ablation in ("adv_only", "adv+cyc"):
            w["cls_sk"] = w["cls_im"] = 0.0
        if not self.select_side_info:
            w["aenc"] = 0.0
        return w

    @property
    def effective_lam(self) -> float:
        return 0.0 if self.ablation == "no_l21" else self.lam

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown training options {sorted(unknown)}")
        return cls(**d)


class Optimizers:
    """Separate Adam states for the discriminators and for everything else."""

    def __init__(self, config: TrainConfig):
        self.disc = Adam(config.lr_discriminator, config.beta1, config.beta2)
        self.gen = Adam(config.lr_generator, config.beta1, config.beta2)


def is_discriminator(name: str) -> bool:
    return name.split(".")[0] in DISCRIMINATORS


def discriminator_grads(state: ModelState, batch: Batch, weights) -> dict[str, np.ndarray]:
    grads: dict[str, np.ndarray] = {}
    for term in ("adv_se", "adv_sk", "adv_im"):
        if weights[term] == 0:
            continue
        _, g = term_grad(state, batch, term, "minimax")
        for k, v in g.items():
            if is_discriminator(k):
                grads[k] = grads.get(k, 0) + weights[term] * v
    return grads


def train_step(state: ModelState, batch: Batch, config: TrainConfig,
               optim: Optimizers | None = None, inplace: bool = False,
               frozen: tuple[str, ...] = ()) -> tuple[ModelState, LossReport]:
    """Discriminator ascent step(s), then one descent step for all other parameters.

    ``frozen`` lists module prefixes (e.g. ``"cls_sk"``) that receive no update.
    """
    if not inplace:
        state = state.copy()
    optim = optim or Optimizers(config)
    batch = batch.astype(state.dtype)
    weights = config.effective_weights()

    for _ in range(config.disc_steps_per_gen_step):
        gd = discriminator_grads(state, batch, weights)
        optim.disc.step(state, {k: -v for k, v in gd.items()})

    prox = config.l21_mode == "prox"
    report, grads = total_loss_grad(state, batch, weights, form=config.gan_form,
                                    include_l21=not prox)
    lam = state.aenc.lam if state.aenc is not None else 0.0
    if prox and state.aenc is not None and weights["aenc"] != 0:
        reg = lam * l21_norm(state.aenc.W1)
        report.aenc += reg
        report.total += weights["aenc"] * reg
    if not report.is_finite():
        raise NumericError(f"non-finite loss at step {state.step}: {report.as_dict()}")

    grads = {k: v for k, v in grads.items()
             if not is_discriminator(k) and k.split(".")[0] not in frozen}
    optim.gen.step(state, grads)
    if prox and state.aenc is not None and "aenc" not in frozen:
        state.aenc.W1 = prox_l21(state.aenc.W1, optim.gen.lr * lam * weights["aenc"])
    state.step += 1
    return state, report


@dataclass
class Checkpoint:
    state: ModelState
    config: TrainConfig
    epoch: int = 0
    log_tail: list[str] = field(default_factory=list)
    format_version: int = FORMAT_VERSION
    extra: dict = field(default_factory=dict)

    def equals(self, other: "Checkpoint") -> bool:
        return (self.state.equals(other.state) and self.config == other.config
                and self.epoch == other.epoch and self.log_tail == other.log_tail
                and self.format_version == other.format_version and self.extra == other.extra)


class _Sampler:
    """Reproducible mini-batches over seen sketches with class-matched random images."""

    def __init__(self, dataset: Dataset, batch_size: int, seed: int):
        seen_idx = dataset.class_indices(dataset.seen)
        remap = {c: i for i, c in enumerate(seen_idx)}
        self.X, xl = dataset.split("seen", "sketch")
        self.Y, yl = dataset.split("seen", "image")
        self.x_labels = np.array([remap[c] for c in xl], dtype=np.int64)
        y_labels = np.array([remap[c] for c in yl], dtype=np.int64)
        self.side = dataset.side[seen_idx]
        n_cls = len(seen_idx)
        for c, name in enumerate(dataset.seen):
            if not (self.x_labels == c).any() or not (y_labels == c).any():
                raise ValueError(f"seen class {name!r} has no sketches or no images")
        if batch_size > len(self.X):
            raise ValueError(f"batch_size {batch_size} exceeds the {len(self.X)} seen sketches")
        order = np.argsort(y_labels, kind="stable")
        self.img_sorted = order
        self.img_count = np.bincount(y_labels, minlength=n_cls)
        self.img_start = np.concatenate([[0], np.cumsum(self.img_count)[:-1]])
        self.batch_size = batch_size
        self.rng = np.random.default_rng([seed, 7919])

    def epoch(self):
        perm = self.rng.permutation(len(self.X))
        for start in range(0, len(perm), self.batch_size):
            idx = perm[start:start + self.batch_size]
            labels = self.x_labels[idx]
            offs = self.rng.integers(0, self.img_count[labels])
            img = self.img_sorted[self.img_start[labels] + offs]
            yield Batch(self.X[idx], self.Y[img], labels, self.side[labels])


def pretrain_classifier(state: ModelState, side_raw: np.ndarray, epochs: int = 500,
                        lr: float = 0.5) -> None:
    """Softmax regression of the shared classifier on encoded class side vectors, in place."""
    S = np.asarray(encoded_side(state, side_raw.astype(state.dtype)), dtype=np.float64)
    n_cls = len(S)
    W = np.zeros((S.shape[1], n_cls))
    b = np.zeros(n_cls)
    onehot = np.eye(n_cls)
    for _ in range(epochs):
        logits = S @ W + b
        P = np.exp(logits - logits.max(axis=1, keepdims=True))
        P /= P.sum(axis=1, keepdims=True)
        d = (P - onehot) / n_cls
        W -= lr * S.T @ d
        b -= lr * d.sum(axis=0)
    for cls in (state.cls_sk, state.cls_im):
        if cls is not None:
            cls.W = W.astype(state.dtype)
            cls.b = b.astype(state.dtype)


def initial_state(dataset: Dataset, config: TrainConfig) -> ModelState:
    k = dataset.side_dim
    M = config.M if config.select_side_info else k
    return init_model(M, k, len(dataset.seen), config.seed, d_feat=dataset.feature_dim,
                      d_hidden=config.d_hidden, select_side_info=config.select_side_info,
                      shared_classifier=config.shared_classifier, lam=config.effective_lam)


def fit(dataset: Dataset, config: TrainConfig, log_path=None, callback=None) -> Checkpoint:
    """Train on the seen classes of ``dataset``.

    ``log_path`` receives one CSV row per step. ``callback(epoch, state)`` is
    called after each epoch and may return ``True`` to stop early.
    """
    if len(dataset.seen) < 2:
        raise ValueError("need at least two seen classes")
    sampler = _Sampler(dataset, config.batch_size, config.seed)
    state = initial_state(dataset, config)
    frozen: tuple[str, ...] = ()
    if config.aenc_pretrain_epochs and state.aenc is not None:
        pre = fit_autoencoder(sampler.side, state.M, state.aenc.lam,
                              epochs=config.aenc_pretrain_epochs, seed=config.seed,
                              params=AutoEncoderParams(*(a.astype(np.float64) for a in (
                                  state.aenc.W1, state.aenc.b1, state.aenc.W2, state.aenc.b2)),
                                  lam=state.aenc.lam))
        for attr in AutoEncoderParams.ARRAYS:
            setattr(state.aenc, attr, getattr(pre, attr).astype(state.dtype))
    if config.cls_pretrain:
        pretrain_classifier(state, sampler.side)
        frozen = ("cls_sk", "cls_im")

    optim = Optimizers(config)
    tail: list[str] = []
    log = open(log_path, "w", encoding="utf-8") if log_path else None
    epoch = 0
    try:
        if log:
            log.write(CSV_HEADER + "\n")
        for epoch in range(1, config.epochs + 1):
            for batch in sampler.epoch():
                state, report = train_step(state, batch, config, optim, inplace=True,
                                           frozen=frozen)
                row = report.csv_row(state.step)
                if log:
                    log.write(row + "\n")
                tail.append(row)
                del tail[:-config.log_tail]
            if callback is not None and callback(epoch, state):
                break
    finally:
        if log:
            log.close()
    return Checkpoint(state, config, epoch if config.epochs else 0, tail)


# checkpoint container: magic | u32 version | u32 header length | JSON header |
# little-endian float32 arrays | sha256 of everything before it

def _state_meta(state: ModelState) -> dict:
    return {
        "M": state.M, "k": state.k, "n_seen": state.n_seen, "d_feat": state.d_feat,
        "d_hidden": state.d_se.W1.shape[1], "select_side_info": state.aenc is not None,
        "shared_classifier": state.cls_im is None,
        "lam": state.aenc.lam if state.aenc is not None else 0.0,
        "rng_seed": state.rng_seed, "step": state.step,
    }


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    path = Path(path)
    arrays = list(ckpt.state.named_arrays())
    header = {
        "format_version": ckpt.format_version,
        "package_version": __version__,
        "state": _state_meta(ckpt.state),
        "arrays": [[name, list(a.shape)] for name, a in arrays],
        "config": ckpt.config.to_dict(),
        "config_hash": ckpt.extra.get("config_hash", config_hash(ckpt.config.to_dict())),
        "epoch": ckpt.epoch,
        "log_tail": ckpt.log_tail,
        "extra": ckpt.extra,
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    body = bytearray(MAGIC)
    body += struct.pack("<II", ckpt.format_version, len(hbytes))
    body += hbytes
    for _, a in arrays:
        body += np.ascontiguousarray(a, dtype="<f4").tobytes()
    body += hashlib.sha256(body).digest()
    path.write_bytes(bytes(body))
    meta = {"format_version": ckpt.format_version, "config": header["config"],
            "config_hash": header["config_hash"], "epoch": ckpt.epoch,
            "state": header["state"]}
    Path(str(path) + ".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_checkpoint(path) -> Checkpoint:
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + 8 + 32 or raw[:len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic or truncated)")
    body, digest = raw[:-32], raw[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError(f"{path}: checksum mismatch, file is corrupt or truncated")
    version, hlen = struct.unpack_from("<II", body, len(MAGIC))
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    off = len(MAGIC) + 8
    header = json.loads(body[off:off + hlen].decode("utf-8"))
    off += hlen
    meta = header["state"]
    state = init_model(meta["M"], meta["k"], meta["n_seen"], meta["rng_seed"],
                       d_feat=meta["d_feat"], d_hidden=meta["d_hidden"],
                       select_side_info=meta["select_side_info"],
                       shared_classifier=meta["shared_classifier"], lam=meta["lam"])
    state.step = meta["step"]
    for name, shape in header["arrays"]:
        count = int(np.prod(shape))
        a = np.frombuffer(body, dtype="<f4", count=count, offset=off).reshape(shape)
        state.set(name, a.astype(np.float32))
        off += 4 * count
    if off != len(body):
        raise CheckpointError(f"{path}: trailing bytes after array data")
    return Checkpoint(state, TrainConfig.from_dict(header["config"]), header["epoch"],
                      header["log_tail"], version, header.get("extra", {}))
