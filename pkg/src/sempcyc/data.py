"""Datasets of precomputed sketch/image features, file ingestion and a synthetic generator."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

from .errors import FormatError
from .sideinfo import load_embeddings, save_embeddings


@dataclass
class FeatureSet:
    """Features of one modality with a string class label per row."""

    features: np.ndarray
    labels: list[str]

    def __len__(self):
        return len(self.labels)


def save_features(fs: FeatureSet, path) -> None:
    """Header ``N d`` then ``label v1 ... vd`` per line."""
    n, d = fs.features.shape
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{n} {d}\n")
        for label, row in zip(fs.labels, fs.features):
            fh.write(label + " " + " ".join(repr(float(v)) for v in row) + "\n")


def load_features(path, feature_dim: int | None = None) -> FeatureSet:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        try:
            n, d = int(header[0]), int(header[1])
        except (IndexError, ValueError):
            raise FormatError(f"{path}:1: expected header 'N d'") from None
        if feature_dim is not None and d != feature_dim:
            raise FormatError(f"{path}: feature dimension {d} != configured {feature_dim}")
        labels, rows = [], []
        for lineno, line in enumerate(fh, 2):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != d + 1:
                raise FormatError(f"{path}:{lineno}: expected label plus {d} values, "
                                  f"got {len(parts) - 1} values")
            try:
                rows.append([float(v) for v in parts[1:]])
            except ValueError:
                raise FormatError(f"{path}:{lineno}: non-numeric entry") from None
            labels.append(parts[0])
    if len(rows) != n:
        raise FormatError(f"{path}: header announces {n} rows, found {len(rows)}")
    return FeatureSet(np.array(rows, dtype=np.float64).reshape(n, d), labels)


@dataclass
class Dataset:
    """Sketch and image features with a seen/unseen class split.

    Labels are indices into ``classes``; ``side`` has one row of raw side
    information per class in the same order.
    """

    classes: list[str]
    seen: list[str]
    unseen: list[str]
    X: np.ndarray
    x_labels: np.ndarray
    Y: np.ndarray
    y_labels: np.ndarray
    side: np.ndarray

    def __post_init__(self):
        if set(self.seen) & set(self.unseen):
            raise FormatError(f"seen and unseen classes overlap: {sorted(set(self.seen) & set(self.unseen))}")
        if sorted(self.seen + self.unseen) != sorted(self.classes):
            raise FormatError("every class must be in exactly one split")
        if self.X.shape[1] != self.Y.shape[1]:
            raise FormatError("sketch and image features differ in dimension")
        if len(self.side) != len(self.classes):
            raise FormatError("need one side-information row per class")
        self.x_labels = np.asarray(self.x_labels, dtype=np.int64)
        self.y_labels = np.asarray(self.y_labels, dtype=np.int64)

    @property
    def feature_dim(self) -> int:
        return self.X.shape[1]

    @property
    def side_dim(self) -> int:
        return self.side.shape[1]

    def class_indices(self, names) -> np.ndarray:
        pos = {c: i for i, c in enumerate(self.classes)}
        return np.array([pos[c] for c in names], dtype=np.int64)

    def split(self, which: str, modality: str) -> tuple[np.ndarray, np.ndarray]:
        """Features and class indices of one modality restricted to a split.

        ``which`` is ``seen``, ``unseen`` or ``all``.
        """
        feats, labels = (self.X, self.x_labels) if modality == "sketch" else (self.Y, self.y_labels)
        if which == "all":
            return feats, labels
        keep = np.isin(labels, self.class_indices(getattr(self, which)))
        return feats[keep], labels[keep]

    def with_side(self, side: np.ndarray) -> "Dataset":
        return Dataset(self.classes, self.seen, self.unseen, self.X, self.x_labels,
                       self.Y, self.y_labels, side)

    def save(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        save_features(FeatureSet(self.X, [self.classes[i] for i in self.x_labels]),
                      d / "sketch_features.txt")
        save_features(FeatureSet(self.Y, [self.classes[i] for i in self.y_labels]),
                      d / "image_features.txt")
        save_embeddings(dict(zip(self.classes, self.side)), d / "side_info.txt")
        save_split(self.seen, self.unseen, d / "split.txt")

    @classmethod
    def from_files(cls, sketch_path, image_path, side_path, split_path,
                   feature_dim: int | None = None,
                   min_images_per_class: int = 0) -> "Dataset":
        sk = load_features(sketch_path, feature_dim)
        im = load_features(image_path, feature_dim)
        side = load_embeddings(side_path)
        seen, unseen = load_split(split_path)
        if min_images_per_class:
            counts = {c: im.labels.count(c) for c in unseen}
            unseen = [c for c in unseen if counts[c] >= min_images_per_class]
        classes = sorted(seen + unseen)
        missing = [c for c in classes if c not in side]
        if missing:
            raise FormatError(f"no side information for classes {missing}")
        pos = {c: i for i, c in enumerate(classes)}

        def keep(fs):
            rows = [i for i, lab in enumerate(fs.labels) if lab in pos]
            return fs.features[rows], np.array([pos[fs.labels[i]] for i in rows], dtype=np.int64)

        X, xl = keep(sk)
        Y, yl = keep(im)
        return cls(classes, sorted(seen), sorted(unseen), X, xl, Y, yl,
                   np.stack([side[c] for c in classes]))


def save_split(seen, unseen, path) -> None:
    """``class<TAB>seen|unseen`` per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for c in sorted(seen):
            fh.write(f"{c}\tseen\n")
        for c in sorted(unseen):
            fh.write(f"{c}\tunseen\n")


def load_split(path) -> tuple[list[str], list[str]]:
    seen, unseen = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 2 or parts[1] not in ("seen", "unseen"):
                raise FormatError(f"{path}:{lineno}: expected 'class<TAB>seen|unseen'")
            (seen if parts[1] == "seen" else unseen).append(parts[0])
    return seen, unseen


@dataclass
class SynthConfig:
    """Desk-scale stand-in for a real seen/unseen benchmark split.

    Every class has a latent prototype. Each modality sees it through its own
    fixed random linear map, with within-class latent scatter and isotropic
    feature noise, followed by a ReLU (features mimic post-ReLU CNN
    activations). The side information is a squashed noisy linear view of the
    same prototype plus ``side_noise_dims`` near-constant filler coordinates.
    """

    n_seen: int = 10
    n_unseen: int = 5
    samples_per_class_per_modality: int = 100
    feature_dim: int = 512
    side_dim: int = 32
    side_noise_dims: int = 8
    latent_dim: int = 8
    cluster_spread: float = 0.5
    modality_distortion: float = 0.5
    side_noise: float = 0.1
    feature_noise: float = 0.1
    feature_scale: float = 0.25
    nonnegative: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_seen < 2:
            raise ValueError("need at least two seen classes")
        if self.cluster_spread < 0:
            raise ValueError("cluster_spread must be non-negative")
        if not 0 <= self.side_noise_dims <= self.side_dim:
            raise ValueError("side_noise_dims must lie in [0, side_dim]")


def synthesize_dataset(cfg: SynthConfig) -> Dataset:
    rng = np.random.default_rng(cfg.seed)
    n_cls = cfg.n_seen + cfg.n_unseen
    width = len(str(n_cls - 1))
    classes = [f"class{i:0{width}d}" for i in range(n_cls)]
    # class order is shuffled before the split so seen/unseen are not index blocks
    order = rng.permutation(n_cls)
    seen = sorted(classes[i] for i in order[:cfg.n_seen])
    unseen = sorted(classes[i] for i in order[cfg.n_seen:])

    protos = rng.standard_normal((n_cls, cfg.latent_dim))
    A_sk = rng.standard_normal((cfg.latent_dim, cfg.feature_dim)) / np.sqrt(cfg.latent_dim)
    A_rand = rng.standard_normal((cfg.latent_dim, cfg.feature_dim)) / np.sqrt(cfg.latent_dim)
    t = cfg.modality_distortion
    A_im = (1.0 - t) * A_sk + t * A_rand
    A_im /= np.sqrt((1.0 - t) ** 2 + t ** 2)

    n_info = cfg.side_dim - cfg.side_noise_dims
    B = rng.standard_normal((cfg.latent_dim, n_info)) / np.sqrt(cfg.latent_dim)
    side_info = expit(2.0 * (protos @ B) + cfg.side_noise * rng.standard_normal((n_cls, n_info)))
    # near-constant filler coordinates: little information, cheap to reconstruct
    side_junk = 0.5 + cfg.side_noise * 0.1 * rng.standard_normal((n_cls, cfg.side_noise_dims))
    side = np.concatenate([side_info, side_junk], axis=1)

    labels = np.repeat(np.arange(n_cls), cfg.samples_per_class_per_modality)

    def view(A):
        latent = protos[labels] + cfg.cluster_spread * rng.standard_normal((len(labels), cfg.latent_dim))
        feats = latent @ A + cfg.feature_noise * rng.standard_normal((len(labels), cfg.feature_dim))
        if cfg.nonnegative:
            feats = np.maximum(feats, 0.0)
        return cfg.feature_scale * feats

    X = view(A_sk)
    Y = view(A_im)
    return Dataset(classes, seen, unseen, X, labels.copy(), Y, labels.copy(), side)


def nearest_prototype_accuracy(features: np.ndarray, labels: np.ndarray) -> float:
    """Leave-nothing-out accuracy of the nearest class-mean classifier."""
    classes = np.unique(labels)
    means = np.stack([features[labels == c].mean(axis=0) for c in classes])
    d = ((features[:, None, :] - means[None]) ** 2).sum(axis=-1)
    return float((classes[d.argmin(axis=1)] == labels).mean())
