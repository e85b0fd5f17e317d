"""Feature-selection auto-encoder that compresses side information.

Row-vector convention: a batch ``S`` is ``n x k`` and ``f(S) = sigmoid(S @ W1 + b1)``
with ``W1`` of shape ``k x m``. Row ``j`` of ``W1`` carries side-information
coordinate ``j``, so the l2,1 penalty on ``W1`` switches whole input
coordinates off.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import NumericError

ZERO_ROW_TOL = 1e-8


@dataclass
class AutoEncoderParams:
    W1: np.ndarray  # k x m
    b1: np.ndarray  # m
    W2: np.ndarray  # m x k
    b2: np.ndarray  # k
    lam: float = 0.5

    ARRAYS = ("W1", "b1", "W2", "b2")

    @property
    def k(self) -> int:
        return self.W1.shape[0]

    @property
    def m(self) -> int:
        return self.W1.shape[1]

    @classmethod
    def init(cls, k: int, m: int, rng: np.random.Generator, lam: float = 0.5,
             dtype=np.float32) -> "AutoEncoderParams":
        return cls(
            W1=_fan_in_uniform(rng, k, m, dtype),
            b1=np.zeros(m, dtype=dtype),
            W2=_fan_in_uniform(rng, m, k, dtype),
            b2=np.zeros(k, dtype=dtype),
            lam=lam,
        )

    def copy(self) -> "AutoEncoderParams":
        return AutoEncoderParams(self.W1.copy(), self.b1.copy(), self.W2.copy(),
                                 self.b2.copy(), self.lam)


def _fan_in_uniform(rng, fan_in, fan_out, dtype):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype)


def _check_finite(a):
    if not np.all(np.isfinite(a)):
        raise NumericError("non-finite values in auto-encoder input")


def encode(p: AutoEncoderParams, s: np.ndarray) -> np.ndarray:
    _check_finite(s)
    return expit(s @ p.W1 + p.b1)


def decode(p: AutoEncoderParams, z: np.ndarray) -> np.ndarray:
    _check_finite(z)
    return expit(z @ p.W2 + p.b2)


def encode_backward(p: AutoEncoderParams, s: np.ndarray, z: np.ndarray,
                    dz: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of W1, b1 given ``z = encode(p, s)`` and upstream ``dz``."""
    dpre = dz * z * (1.0 - z)
    return {"W1": s.T @ dpre, "b1": dpre.sum(axis=0)}


def l21_norm(W: np.ndarray) -> float:
    """Sum of the Euclidean norms of the rows of ``W``."""
    return float(np.sqrt((np.asarray(W, dtype=np.float64) ** 2).sum(axis=1)).sum())


def l21_subgradient(W: np.ndarray) -> np.ndarray:
    """Row-normalised ``W``; rows with norm below 1e-8 get subgradient 0."""
    norms = np.sqrt((W ** 2).sum(axis=1, keepdims=True))
    out = np.zeros_like(W)
    live = norms[:, 0] >= ZERO_ROW_TOL
    out[live] = W[live] / norms[live]
    return out


def row_norms(W: np.ndarray) -> np.ndarray:
    return np.sqrt((np.asarray(W, dtype=np.float64) ** 2).sum(axis=1))


def aenc_loss(p: AutoEncoderParams, S: np.ndarray) -> float:
    """Squared Frobenius reconstruction error of the batch plus ``lam * ||W1||_2,1``."""
    S = np.atleast_2d(S)
    recon = decode(p, encode(p, S))
    return float(((S - recon) ** 2).sum()) + p.lam * l21_norm(p.W1)


def aenc_loss_grad(p: AutoEncoderParams, S: np.ndarray,
                   include_l21: bool = True) -> tuple[float, dict[str, np.ndarray]]:
    S = np.atleast_2d(S)
    Z = encode(p, S)
    R = decode(p, Z)
    diff = R - S
    value = float((diff ** 2).sum())
    dpre2 = 2.0 * diff * R * (1.0 - R)
    grads = {"W2": Z.T @ dpre2, "b2": dpre2.sum(axis=0)}
    grads.update(encode_backward(p, S, Z, dpre2 @ p.W2.T))
    if include_l21:
        value += p.lam * l21_norm(p.W1)
        grads["W1"] = grads["W1"] + p.lam * l21_subgradient(p.W1)
    return value, grads


def prox_l21(W: np.ndarray, threshold: float) -> np.ndarray:
    """Group soft-thresholding of the rows of ``W`` (proximal map of the l2,1 norm)."""
    if threshold <= 0:
        return W
    norms = np.sqrt((W ** 2).sum(axis=1, keepdims=True))
    scale = np.maximum(0.0, 1.0 - threshold / np.maximum(norms, 1e-30))
    return (W * scale).astype(W.dtype, copy=False)


def fit_autoencoder(S: np.ndarray, m: int, lam: float = 0.5, *, epochs: int = 500,
                    lr: float = 0.05, seed: int = 0,
                    params: AutoEncoderParams | None = None) -> AutoEncoderParams:
    """Full-batch proximal gradient descent on the auto-encoder loss.

    The smooth reconstruction part takes a gradient step and the l2,1 part is
    handled by its proximal map, so unneeded rows of ``W1`` reach exact zeros.
    """
    S = np.atleast_2d(np.asarray(S, dtype=np.float64))
    if params is None:
        params = AutoEncoderParams.init(S.shape[1], m, np.random.default_rng(seed),
                                        lam=lam, dtype=np.float64)
    else:
        params = params.copy()
        params.lam = lam
    step = lr / S.shape[0]
    for _ in range(epochs):
        _, g = aenc_loss_grad(params, S, include_l21=False)
        params.W1 = prox_l21(params.W1 - step * g["W1"], step * lam)
        params.b1 = params.b1 - step * g["b1"]
        params.W2 = params.W2 - step * g["W2"]
        params.b2 = params.b2 - step * g["b2"]
    return params


def count_zero_rows(W: np.ndarray, tol: float = 1e-3) -> int:
    return int((row_norms(W) < tol).sum())


def selection_sweep(p: AutoEncoderParams, ratios) -> dict[float, np.ndarray]:
    """Side-information coordinates kept at each removal ratio.

    Rows of ``W1`` are ranked by norm (descending, ties by index) and each
    ratio keeps the top ``ceil((1 - ratio) * k)`` of them, returned in
    ascending index order.
    """
    norms = row_norms(p.W1)
    order = np.lexsort((np.arange(len(norms)), -norms))
    out = {}
    for r in ratios:
        if not 0.0 <= r < 1.0:
            raise ValueError(f"removal ratio must lie in [0, 1), got {r}")
        keep = int(np.ceil(round((1.0 - r) * len(norms), 9)))
        out[r] = np.sort(order[:keep])
    return out
