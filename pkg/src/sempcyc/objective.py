"""Loss terms of the training objective and their analytic gradients.

Each ``*_grad`` function returns ``(value, grads)`` where ``grads`` maps
``"module.attr"`` names (see :meth:`ModelState.named_arrays`) to arrays.
``value`` is always the saturating min-max quantity; ``form`` only changes
which gradient is returned for the adversarial terms:

``"minimax"``
    exact gradient of ``value`` with respect to every parameter.
``"nonsaturating"``
    gradient of the generator surrogate ``-E[log D(fake)]``, restricted to
    generator-side parameters. Discriminators never receive it.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np
from scipy.special import expit, softmax

from .autoencoder import aenc_loss_grad, encode, encode_backward
from .network import (ModelState, classifier_logits, discriminator_backward,
                      discriminator_logit, generator_backward, generator_forward)

EPS = 1e-12
TERMS = ("adv_se", "adv_sk", "adv_im", "cyc_sk", "cyc_im", "cls_sk", "cls_im", "aenc")
CSV_HEADER = "step," + ",".join(TERMS) + ",total"


@dataclass
class Batch:
    """Mini-batch of unaligned sketch/image rows that share a class label per row.

    ``labels`` are indices into the seen classes; ``S_raw`` holds each row's
    class side information.
    """

    X: np.ndarray
    Y: np.ndarray
    labels: np.ndarray
    S_raw: np.ndarray

    def __post_init__(self):
        n = len(self.labels)
        if not (len(self.X) == len(self.Y) == len(self.S_raw) == n) or n == 0:
            raise ValueError("batch arrays must be non-empty with matching row counts")

    def S_enc(self, state: ModelState) -> np.ndarray:
        return encoded_side(state, self.S_raw)

    def astype(self, dtype) -> "Batch":
        return Batch(self.X.astype(dtype, copy=False), self.Y.astype(dtype, copy=False),
                     self.labels, self.S_raw.astype(dtype, copy=False))


@dataclass
class LossReport:
    adv_se: float = 0.0
    adv_sk: float = 0.0
    adv_im: float = 0.0
    cyc_sk: float = 0.0
    cyc_im: float = 0.0
    cls_sk: float = 0.0
    cls_im: float = 0.0
    aenc: float = 0.0
    total: float = 0.0

    def terms(self) -> dict[str, float]:
        return {t: getattr(self, t) for t in TERMS}

    def as_dict(self) -> dict[str, float]:
        return asdict(self)

    def csv_row(self, step: int) -> str:
        return f"{step}," + ",".join(repr(float(getattr(self, f.name))) for f in fields(self))

    def is_finite(self) -> bool:
        return all(np.isfinite(v) for v in self.as_dict().values())


def default_weights() -> dict[str, float]:
    return {t: 1.0 for t in TERMS}


def encoded_side(state: ModelState, S_raw: np.ndarray) -> np.ndarray:
    """Side information in the semantic space: ``f(s)``, or ``s`` itself without selection."""
    if state.aenc is None:
        return S_raw
    return encode(state.aenc, S_raw)


def _side_backward(state, S_raw, S_enc, dS, grads):
    if state.aenc is None or dS is None:
        return
    for k, v in encode_backward(state.aenc, S_raw, S_enc, dS).items():
        _acc(grads, f"aenc.{k}", v)


def _acc(grads, name, value):
    if name in grads:
        grads[name] = grads[name] + value
    else:
        grads[name] = value


def _acc_module(grads, prefix, d):
    for k, v in d.items():
        _acc(grads, f"{prefix}.{k}", v)


def _log_p(logit):
    """``log(clip(sigmoid(l)))`` and its derivative with respect to ``l``."""
    p = expit(np.asarray(logit, dtype=np.float64))
    pc = np.clip(p, EPS, 1.0 - EPS)
    inside = (p >= EPS) & (p <= 1.0 - EPS)
    return np.log(pc), inside * p * (1.0 - p) / pc


def _log_1mp(logit):
    """``log(1 - clip(sigmoid(l)))`` and its derivative with respect to ``l``."""
    p = expit(np.asarray(logit, dtype=np.float64))
    pc = np.clip(p, EPS, 1.0 - EPS)
    inside = (p >= EPS) & (p <= 1.0 - EPS)
    return np.log(1.0 - pc), -(inside * p * (1.0 - p)) / (1.0 - pc)


def _finalize(grads, state):
    dtype = state.dtype
    return {k: np.asarray(v, dtype=dtype) for k, v in grads.items()}


def _modality(state, batch, modality):
    if modality == "sketch":
        return state.g_sk, state.f_sk, state.d_sk, batch.X, "g_sk", "f_sk", "d_sk"
    if modality == "image":
        return state.g_im, state.f_im, state.d_im, batch.Y, "g_im", "f_im", "d_im"
    raise ValueError(f"unknown modality {modality!r}")


def adv_semantic_loss_grad(state: ModelState, batch: Batch, form: str = "minimax"):
    """``2 E[log D_se(s)] + E[log(1 - D_se(G_sk(x)))] + E[log(1 - D_se(G_im(y)))]``."""
    n = len(batch.labels)
    S = encoded_side(state, batch.S_raw)
    zs = generator_forward(state.g_sk, batch.X)
    zi = generator_forward(state.g_im, batch.Y)
    l_real, pre_real = discriminator_logit(state.d_se, S)
    l_sk, pre_sk = discriminator_logit(state.d_se, zs)
    l_im, pre_im = discriminator_logit(state.d_se, zi)
    lp_real, dlp_real = _log_p(l_real)
    l1_sk, dl1_sk = _log_1mp(l_sk)
    l1_im, dl1_im = _log_1mp(l_im)
    value = 2.0 * lp_real.mean() + l1_sk.mean() + l1_im.mean()

    grads: dict[str, np.ndarray] = {}
    if form == "minimax":
        dS, g = discriminator_backward(state.d_se, S, pre_real, 2.0 * dlp_real / n)
        _acc_module(grads, "d_se", g)
        _side_backward(state, batch.S_raw, S, dS, grads)
        dz_sk, g = discriminator_backward(state.d_se, zs, pre_sk, dl1_sk / n)
        _acc_module(grads, "d_se", g)
        dz_im, g = discriminator_backward(state.d_se, zi, pre_im, dl1_im / n)
        _acc_module(grads, "d_se", g)
    elif form == "nonsaturating":
        _, d_sk = _log_p(l_sk)
        _, d_im = _log_p(l_im)
        dz_sk, _ = discriminator_backward(state.d_se, zs, pre_sk, -d_sk / n)
        dz_im, _ = discriminator_backward(state.d_se, zi, pre_im, -d_im / n)
    else:
        raise ValueError(f"unknown adversarial form {form!r}")
    _acc_module(grads, "g_sk", generator_backward(state.g_sk, batch.X, zs, dz_sk)[1])
    _acc_module(grads, "g_im", generator_backward(state.g_im, batch.Y, zi, dz_im)[1])
    return float(value), _finalize(grads, state)


def adv_modality_loss_grad(state: ModelState, batch: Batch, modality: str,
                           form: str = "minimax"):
    """``E[log D(real feature)] + E[log(1 - D(F(s)))]`` for one modality."""
    _, F, D, real, _, f_key, d_key = _modality(state, batch, modality)
    n = len(batch.labels)
    S = encoded_side(state, batch.S_raw)
    fake = generator_forward(F, S)
    l_real, pre_real = discriminator_logit(D, real)
    l_fake, pre_fake = discriminator_logit(D, fake)
    lp_real, dlp_real = _log_p(l_real)
    l1_fake, dl1_fake = _log_1mp(l_fake)
    value = lp_real.mean() + l1_fake.mean()

    grads: dict[str, np.ndarray] = {}
    if form == "minimax":
        _, g = discriminator_backward(D, real, pre_real, dlp_real / n)
        _acc_module(grads, d_key, g)
        dfake, g = discriminator_backward(D, fake, pre_fake, dl1_fake / n)
        _acc_module(grads, d_key, g)
    elif form == "nonsaturating":
        _, d_fake = _log_p(l_fake)
        dfake, _ = discriminator_backward(D, fake, pre_fake, -d_fake / n)
    else:
        raise ValueError(f"unknown adversarial form {form!r}")
    dS, g = generator_backward(F, S, fake, dfake)
    _acc_module(grads, f_key, g)
    _side_backward(state, batch.S_raw, S, dS, grads)
    return float(value), _finalize(grads, state)


def cycle_loss_grad(state: ModelState, batch: Batch, modality: str):
    """``E||F(G(x)) - x||_1 + E||G(F(s)) - s||_1``, mean over rows, sum over coordinates."""
    G, F, _, x, g_key, f_key, _ = _modality(state, batch, modality)
    n = len(batch.labels)
    S = encoded_side(state, batch.S_raw)
    z = generator_forward(G, x)
    x_rec = generator_forward(F, z)
    u = generator_forward(F, S)
    s_rec = generator_forward(G, u)
    r1 = x_rec - x
    r2 = s_rec - S
    value = np.abs(r1).sum(axis=-1).mean() + np.abs(r2).sum(axis=-1).mean()

    grads: dict[str, np.ndarray] = {}
    dz, g = generator_backward(F, z, x_rec, np.sign(r1) / n)
    _acc_module(grads, f_key, g)
    _acc_module(grads, g_key, generator_backward(G, x, z, dz)[1])
    du, g = generator_backward(G, u, s_rec, np.sign(r2) / n)
    _acc_module(grads, g_key, g)
    dS, g = generator_backward(F, S, u, du)
    _acc_module(grads, f_key, g)
    _side_backward(state, batch.S_raw, S, dS - np.sign(r2) / n, grads)
    return float(value), _finalize(grads, state)


def cls_loss_grad(state: ModelState, batch: Batch, modality: str):
    """Mean cross-entropy of the classifier on the generator output."""
    G, _, _, x, g_key, _, _ = _modality(state, batch, modality)
    cls = state.classifier(modality)
    cls_key = state.classifier_key(modality)
    n = len(batch.labels)
    z = generator_forward(G, x)
    logits = classifier_logits(cls, z)
    P = softmax(np.asarray(logits, dtype=np.float64), axis=-1)
    rows = np.arange(n)
    p_true = P[rows, batch.labels]
    value = -np.log(np.clip(p_true, EPS, 1.0)).mean()

    dlogits = P.copy()
    dlogits[rows, batch.labels] -= 1.0
    dlogits *= (p_true >= EPS)[:, None] / n
    grads = {f"{cls_key}.W": z.T @ dlogits, f"{cls_key}.b": dlogits.sum(axis=0)}
    _acc_module(grads, g_key, generator_backward(G, x, z, dlogits @ cls.W.T)[1])
    return float(value), _finalize(grads, state)


def aenc_term_grad(state: ModelState, batch: Batch, include_l21: bool = True):
    if state.aenc is None:
        return 0.0, {}
    value, g = aenc_loss_grad(state.aenc, batch.S_raw, include_l21=include_l21)
    return value, _finalize({f"aenc.{k}": v for k, v in g.items()}, state)


def term_grad(state: ModelState, batch: Batch, term: str, form: str = "minimax",
              include_l21: bool = True):
    if term == "adv_se":
        return adv_semantic_loss_grad(state, batch, form)
    if term in ("adv_sk", "adv_im"):
        return adv_modality_loss_grad(state, batch, _MOD[term[-2:]], form)
    if term in ("cyc_sk", "cyc_im"):
        return cycle_loss_grad(state, batch, _MOD[term[-2:]])
    if term in ("cls_sk", "cls_im"):
        return cls_loss_grad(state, batch, _MOD[term[-2:]])
    if term == "aenc":
        return aenc_term_grad(state, batch, include_l21)
    raise ValueError(f"unknown loss term {term!r}")


_MOD = {"sk": "sketch", "im": "image"}


def total_loss_grad(state: ModelState, batch: Batch, weights: dict | None = None,
                    form: str = "minimax", include_l21: bool = True):
    """Weighted sum of all terms. Terms with weight 0 are skipped and reported as 0."""
    w = default_weights() if weights is None else {**default_weights(), **weights}
    report = LossReport()
    grads: dict[str, np.ndarray] = {}
    total = 0.0
    for term in TERMS:
        if w[term] == 0:
            continue
        value, g = term_grad(state, batch, term, form, include_l21)
        setattr(report, term, value)
        total += w[term] * value
        for k, v in g.items():
            _acc(grads, k, w[term] * v)
    report.total = total
    return report, grads


# value-only conveniences

def adv_semantic_loss(state, batch):
    return adv_semantic_loss_grad(state, batch)[0]


def adv_modality_loss(state, batch, modality):
    return adv_modality_loss_grad(state, batch, modality)[0]


def cycle_loss(state, batch, modality):
    return cycle_loss_grad(state, batch, modality)[0]


def cls_loss(state, batch, modality):
    return cls_loss_grad(state, batch, modality)[0]


def total_loss(state, batch, weights=None) -> LossReport:
    return total_loss_grad(state, batch, weights)[0]
