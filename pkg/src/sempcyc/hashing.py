"""Iterative quantization (ITQ) of real embeddings into binary codes."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np


@dataclass
class ItqModel:
    mean: np.ndarray  # M
    rotation: np.ndarray  # M x M, orthogonal
    iters: int = 0
    loss_history: list[float] = field(default_factory=list)

    @property
    def bits(self) -> int:
        return self.rotation.shape[1]

    def save(self, path) -> None:
        np.savez(path, mean=self.mean, rotation=self.rotation, iters=self.iters,
                 loss_history=np.asarray(self.loss_history))

    @classmethod
    def load(cls, path) -> "ItqModel":
        with np.load(path) as z:
            return cls(z["mean"], z["rotation"], int(z["iters"]), z["loss_history"].tolist())


def _sign(a: np.ndarray) -> np.ndarray:
    """Sign with ``sign(0) = +1``."""
    return np.where(a >= 0, 1.0, -1.0)


def quantization_loss(B: np.ndarray, V: np.ndarray, R: np.ndarray) -> float:
    return float(((B - V @ R) ** 2).sum())


def procrustes_rotation(B: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Orthogonal ``R`` minimising ``||B - V R||_F``."""
    U, _, Wt = np.linalg.svd(B.T @ V)
    return Wt.T @ U.T


def fit_itq(train_embeddings: np.ndarray, iters: int = 50, seed: int = 0,
            init: str = "random") -> ItqModel:
    """Learn a mean and an orthogonal rotation by alternating sign and Procrustes steps.

    ``loss_history[t]`` is ``||B_t - V R_{t+1}||_F^2`` after iteration ``t``;
    it never increases.
    """
    V = np.asarray(train_embeddings, dtype=np.float64)
    n, M = V.shape
    if iters < 1:
        raise ValueError("iters must be at least 1")
    if n < M:
        raise ValueError(f"need at least as many samples as bits ({n} < {M})")
    mean = V.mean(axis=0)
    V = V - mean
    if np.linalg.matrix_rank(V) < M:
        warnings.warn("ITQ input is rank deficient; the rotation is not unique", stacklevel=2)

    if init == "identity":
        R = np.eye(M)
    elif init == "random":
        R, _ = np.linalg.qr(np.random.default_rng(seed).standard_normal((M, M)))
    else:
        raise ValueError(f"unknown init {init!r}")

    history = []
    for _ in range(iters):
        B = _sign(V @ R)
        R = procrustes_rotation(B, V)
        history.append(quantization_loss(B, V, R))
    return ItqModel(mean=mean, rotation=R, iters=iters, loss_history=history)


def binarize(model: ItqModel, v: np.ndarray) -> np.ndarray:
    """Bits (uint8 0/1) of ``sign((v - mean) R)``; one row per input row."""
    proj = (np.asarray(v, dtype=np.float64) - model.mean) @ model.rotation
    return (proj >= 0).astype(np.uint8)


def pack_bits(bits: np.ndarray) -> np.ndarray:
    """Pack 0/1 rows MSB-first into ``uint64`` words (zero padded)."""
    bits = np.atleast_2d(bits).astype(np.uint8)
    n, m = bits.shape
    n_words = max(1, -(-m // 64))
    padded = np.zeros((n, n_words * 64), dtype=np.uint8)
    padded[:, :m] = bits
    return np.packbits(padded, axis=1).view(">u8").astype(np.uint64)


def hamming_distances(query_words: np.ndarray, gallery_words: np.ndarray) -> np.ndarray:
    """Popcount distance between one packed query and every packed gallery row."""
    return np.bitwise_count(np.bitwise_xor(gallery_words, query_words)).sum(axis=-1)


def codes_to_hex(bits: np.ndarray) -> list[str]:
    bits = np.atleast_2d(bits).astype(np.uint8)
    return [np.packbits(row).tobytes().hex() for row in bits]


def hex_to_codes(hexes, n_bits: int) -> np.ndarray:
    rows = [np.unpackbits(np.frombuffer(bytes.fromhex(h), dtype=np.uint8))[:n_bits]
            for h in hexes]
    return np.array(rows, dtype=np.uint8)


def save_codes(ids, bits: np.ndarray, path) -> None:
    """One ``id hexstring`` line per item, bits packed MSB-first."""
    with open(path, "w", encoding="utf-8") as fh:
        for i, h in zip(ids, codes_to_hex(bits)):
            fh.write(f"{i} {h}\n")


def load_codes(path, n_bits: int) -> tuple[list[str], np.ndarray]:
    ids, hexes = [], []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                i, h = line.split()
                ids.append(i)
                hexes.append(h)
    return ids, hex_to_codes(hexes, n_bits)
