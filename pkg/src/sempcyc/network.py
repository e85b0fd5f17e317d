"""Generators, discriminators and classifier heads.

Every layer works on row-vector batches (``n x d_in``) as well as single
vectors. The ``*_backward`` helpers return the input gradient plus a dict of
parameter gradients keyed by attribute name.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass
from typing import Iterator

import numpy as np
from scipy.special import expit, softmax

from .autoencoder import AutoEncoderParams

LEAKY_SLOPE = 0.2
DISCRIMINATORS = ("d_se", "d_sk", "d_im")


@dataclass
class GeneratorParams:
    """One fully connected layer followed by ReLU."""

    W: np.ndarray
    b: np.ndarray
    direction: str = "to_semantic"

    ARRAYS = ("W", "b")


@dataclass
class DiscriminatorParams:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray  # h x 1
    b2: np.ndarray  # 1

    ARRAYS = ("W1", "b1", "W2", "b2")


@dataclass
class ClassifierParams:
    W: np.ndarray  # M x n_classes
    b: np.ndarray

    ARRAYS = ("W", "b")

    @property
    def theta(self):
        return self.W, self.b


def _check_dim(v, expected, what):
    if v.shape[-1] != expected:
        raise ValueError(f"{what}: expected input dimension {expected}, got {v.shape[-1]}")


def generator_forward(p: GeneratorParams, v: np.ndarray) -> np.ndarray:
    _check_dim(v, p.W.shape[0], "generator")
    return np.maximum(v @ p.W + p.b, 0)


def generator_backward(p: GeneratorParams, v, out, dout):
    dpre = dout * (out > 0)
    return dpre @ p.W.T, {"W": np.atleast_2d(v).T @ np.atleast_2d(dpre),
                          "b": np.atleast_2d(dpre).sum(axis=0)}


def discriminator_logit(p: DiscriminatorParams, v: np.ndarray):
    """Return the logit and the hidden pre-activation (needed for backward)."""
    _check_dim(v, p.W1.shape[0], "discriminator")
    pre = v @ p.W1 + p.b1
    h = np.where(pre > 0, pre, LEAKY_SLOPE * pre)
    return (h @ p.W2 + p.b2)[..., 0], pre


def discriminator_forward(p: DiscriminatorParams, v: np.ndarray) -> np.ndarray:
    """Probability that ``v`` is a real sample."""
    return expit(discriminator_logit(p, v)[0])


def discriminator_backward(p: DiscriminatorParams, v, pre, dlogit):
    """Backprop ``dlogit`` (shape n) through the discriminator."""
    v = np.atleast_2d(v)
    pre = np.atleast_2d(pre)
    dlogit = np.atleast_1d(dlogit)[:, None]
    slope = np.where(pre > 0, 1.0, LEAKY_SLOPE).astype(pre.dtype)
    h = pre * slope
    dh = dlogit @ p.W2.T
    dpre = dh * slope
    grads = {"W1": v.T @ dpre, "b1": dpre.sum(axis=0),
             "W2": h.T @ dlogit, "b2": dlogit.sum(axis=0)}
    return dpre @ p.W1.T, grads


def classifier_logits(p: ClassifierParams, z: np.ndarray) -> np.ndarray:
    _check_dim(z, p.W.shape[0], "classifier")
    return z @ p.W + p.b


def classifier_forward(p: ClassifierParams, z: np.ndarray) -> np.ndarray:
    """Class posterior, softmax over the seen classes."""
    return softmax(classifier_logits(p, z), axis=-1)


@dataclass
class ModelState:
    """All trainable parameters of the model.

    ``cls_im`` is ``None`` when both modalities share one classifier and
    ``aenc`` is ``None`` when raw side information is used as the semantic
    space.
    """

    g_sk: GeneratorParams
    g_im: GeneratorParams
    f_sk: GeneratorParams
    f_im: GeneratorParams
    d_se: DiscriminatorParams
    d_sk: DiscriminatorParams
    d_im: DiscriminatorParams
    cls_sk: ClassifierParams
    cls_im: ClassifierParams | None
    aenc: AutoEncoderParams | None
    rng_seed: int = 0
    step: int = 0

    MODULES = ("g_sk", "g_im", "f_sk", "f_im", "d_se", "d_sk", "d_im",
               "cls_sk", "cls_im", "aenc")

    @property
    def M(self) -> int:
        return self.g_sk.W.shape[1]

    @property
    def d_feat(self) -> int:
        return self.g_sk.W.shape[0]

    @property
    def k(self) -> int:
        return self.aenc.k if self.aenc is not None else self.M

    @property
    def n_seen(self) -> int:
        return self.cls_sk.W.shape[1]

    @property
    def dtype(self):
        return self.g_sk.W.dtype

    def classifier(self, modality: str) -> ClassifierParams:
        if modality == "image" and self.cls_im is not None:
            return self.cls_im
        return self.cls_sk

    def classifier_key(self, modality: str) -> str:
        return "cls_im" if modality == "image" and self.cls_im is not None else "cls_sk"

    def named_arrays(self) -> Iterator[tuple[str, np.ndarray]]:
        """Yield ``("module.attr", array)`` in a fixed order."""
        for mod in self.MODULES:
            obj = getattr(self, mod)
            if obj is None:
                continue
            for attr in obj.ARRAYS:
                yield f"{mod}.{attr}", getattr(obj, attr)

    def get(self, name: str) -> np.ndarray:
        mod, attr = name.split(".")
        return getattr(getattr(self, mod), attr)

    def set(self, name: str, value: np.ndarray) -> None:
        mod, attr = name.split(".")
        setattr(getattr(self, mod), attr, value)

    def copy(self) -> "ModelState":
        return copy.deepcopy(self)

    def equals(self, other: "ModelState") -> bool:
        """Bitwise equality of every array plus the scalar fields."""
        mine, theirs = dict(self.named_arrays()), dict(other.named_arrays())
        if mine.keys() != theirs.keys():
            return False
        if any(a.dtype != theirs[n].dtype or a.shape != theirs[n].shape
               or a.tobytes() != theirs[n].tobytes() for n, a in mine.items()):
            return False
        lam_a = self.aenc.lam if self.aenc is not None else None
        lam_b = other.aenc.lam if other.aenc is not None else None
        return (self.rng_seed, self.step, lam_a) == (other.rng_seed, other.step, lam_b)


def _uniform(rng, fan_in, fan_out, dtype):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype)


def _generator(rng, d_in, d_out, direction, dtype):
    return GeneratorParams(_uniform(rng, d_in, d_out, dtype), np.zeros(d_out, dtype), direction)


def _discriminator(rng, d_in, hidden, dtype):
    return DiscriminatorParams(_uniform(rng, d_in, hidden, dtype), np.zeros(hidden, dtype),
                               _uniform(rng, hidden, 1, dtype), np.zeros(1, dtype))


def _classifier(rng, M, n_classes, dtype):
    return ClassifierParams(_uniform(rng, M, n_classes, dtype), np.zeros(n_classes, dtype))


def init_model(M: int, k: int, n_seen: int, seed: int = 0, *, d_feat: int = 512,
               d_hidden: int = 512, select_side_info: bool = True,
               shared_classifier: bool = False, lam: float = 0.5,
               dtype=np.float32) -> ModelState:
    """Fresh parameters: fan-in scaled uniform weights, zero biases.

    With ``select_side_info=False`` there is no auto-encoder and the semantic
    space is the raw side information, so ``M`` must equal ``k``.
    """
    if M < 1:
        raise ValueError("M must be at least 1")
    if not select_side_info and M != k:
        raise ValueError(f"without side-information selection M must equal k ({k}), got {M}")
    rng = np.random.default_rng(seed)
    return ModelState(
        g_sk=_generator(rng, d_feat, M, "to_semantic", dtype),
        g_im=_generator(rng, d_feat, M, "to_semantic", dtype),
        f_sk=_generator(rng, M, d_feat, "to_feature", dtype),
        f_im=_generator(rng, M, d_feat, "to_feature", dtype),
        d_se=_discriminator(rng, M, d_hidden, dtype),
        d_sk=_discriminator(rng, d_feat, d_hidden, dtype),
        d_im=_discriminator(rng, d_feat, d_hidden, dtype),
        cls_sk=_classifier(rng, M, n_seen, dtype),
        cls_im=None if shared_classifier else _classifier(rng, M, n_seen, dtype),
        aenc=AutoEncoderParams.init(k, M, rng, lam=lam, dtype=dtype) if select_side_info else None,
        rng_seed=seed,
    )

