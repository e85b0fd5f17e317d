import math

import numpy as np
import pytest
from scipy.special import expit

from sempcyc.autoencoder import aenc_loss
from sempcyc.objective import (CSV_HEADER, TERMS, Batch, LossReport, adv_modality_loss,
                               adv_semantic_loss, cls_loss, cycle_loss, encoded_side, term_grad,
                               total_loss, total_loss_grad)

from conftest import numeric_grad, perturb_biases, rel_error, tiny_batch, tiny_state


def zero_disc(state, name):
    d = getattr(state, name)
    for a in ("W1", "b1", "W2", "b2"):
        setattr(d, a, np.zeros_like(getattr(d, a)))


# --- examples

def test_adv_semantic_at_half():
    state = tiny_state()
    zero_disc(state, "d_se")
    assert adv_semantic_loss(state, tiny_batch(state)) == pytest.approx(4 * math.log(0.5))


def test_adv_semantic_perfect_discriminator_clamped():
    state = tiny_state()
    zero_disc(state, "d_se")
    state.d_se.b2[:] = 1e6  # everything looks real: log(1 - D) is clamped
    v = adv_semantic_loss(state, tiny_batch(state))
    assert v == pytest.approx(2 * math.log(1 - 1e-12) + 2 * math.log(1e-12))
    state.d_se.b2[:] = -1e6
    assert adv_semantic_loss(state, tiny_batch(state)) == pytest.approx(2 * math.log(1e-12) + 2 * math.log(1 - 1e-12))


def test_adv_semantic_perfect_separation_near_zero():
    # a discriminator that says "real" on f(s) in (0,1) and "fake" on generator outputs
    state = tiny_state(M=2)
    batch = tiny_batch(state)
    for g in (state.g_sk, state.g_im):
        g.W[:] = 0
        g.b[:] = 5.0  # fakes sit at (5, 5), real samples inside the unit square
    d = state.d_se
    d.W1[:] = 0
    d.W1[0, 0] = 1.0
    d.b1[:] = 0
    d.W2[:] = 0
    d.W2[0, 0] = -1e4
    d.b2[:] = 2e4
    assert adv_semantic_loss(state, batch) == pytest.approx(0.0, abs=1e-6)
    assert adv_semantic_loss(state, batch) <= 0


def test_adv_modality_at_half():
    state = tiny_state()
    zero_disc(state, "d_sk")
    zero_disc(state, "d_im")
    b = tiny_batch(state)
    assert adv_modality_loss(state, b, "sketch") == pytest.approx(2 * math.log(0.5))
    assert adv_modality_loss(state, b, "image") == pytest.approx(2 * math.log(0.5))


def test_adv_modality_symmetry():
    state = tiny_state()
    state.f_im = state.f_sk
    state.d_im = state.d_sk
    b = tiny_batch(state)
    b = Batch(b.X, b.X.copy(), b.labels, b.S_raw)
    assert adv_modality_loss(state, b, "sketch") == adv_modality_loss(state, b, "image")


def test_scalar_loop_oracles():
    state = perturb_biases(tiny_state(seed=4), seed=4)
    b = tiny_batch(state, seed=4)
    n = len(b.labels)
    S = encoded_side(state, b.S_raw)

    def gen(p, v):
        return np.array([max(0.0, sum(v[i] * p.W[i, j] for i in range(len(v))) + p.b[j])
                         for j in range(p.W.shape[1])])

    def disc(p, v):
        h = [sum(v[i] * p.W1[i, j] for i in range(len(v))) + p.b1[j] for j in range(p.W1.shape[1])]
        h = [x if x > 0 else 0.2 * x for x in h]
        return expit(sum(h[j] * p.W2[j, 0] for j in range(len(h))) + p.b2[0])

    adv_se = sum(2 * math.log(disc(state.d_se, S[r])) + math.log(1 - disc(state.d_se, gen(state.g_sk, b.X[r])))
                 + math.log(1 - disc(state.d_se, gen(state.g_im, b.Y[r]))) for r in range(n)) / n
    assert adv_semantic_loss(state, b) == pytest.approx(adv_se, rel=1e-10)

    adv_sk = sum(math.log(disc(state.d_sk, b.X[r])) + math.log(1 - disc(state.d_sk, gen(state.f_sk, S[r])))
                 for r in range(n)) / n
    assert adv_modality_loss(state, b, "sketch") == pytest.approx(adv_sk, rel=1e-10)

    cyc = sum(np.abs(gen(state.f_im, gen(state.g_im, b.Y[r])) - b.Y[r]).sum()
              + np.abs(gen(state.g_im, gen(state.f_im, S[r])) - S[r]).sum() for r in range(n)) / n
    assert cycle_loss(state, b, "image") == pytest.approx(cyc, rel=1e-10)

    ce = 0.0
    for r in range(n):
        z = gen(state.g_sk, b.X[r])
        logits = [sum(z[i] * state.cls_sk.W[i, c] for i in range(len(z))) + state.cls_sk.b[c]
                  for c in range(state.n_seen)]
        m = max(logits)
        ce -= logits[b.labels[r]] - m - math.log(sum(math.exp(x - m) for x in logits))
    assert cls_loss(state, b, "sketch") == pytest.approx(ce / n, rel=1e-10)


def test_cycle_identity_is_zero():
    state = tiny_state(M=5, d_feat=5)
    for g in (state.g_sk, state.f_sk):
        g.W = np.eye(5)
        g.b = np.zeros(5)
    b = tiny_batch(state)  # non-negative features survive the ReLU
    assert cycle_loss(state, b, "sketch") == 0.0


def test_cycle_zero_maps():
    state = tiny_state()
    for g in (state.g_sk, state.f_sk):
        g.W[:] = 0
        g.b[:] = 0
    b = tiny_batch(state)
    S = encoded_side(state, b.S_raw)
    expected = np.abs(b.X).sum(axis=1).mean() + np.abs(S).sum(axis=1).mean()
    assert cycle_loss(state, b, "sketch") == pytest.approx(expected)


def test_cycle_non_negative(rng):
    for seed in range(10):
        state = perturb_biases(tiny_state(seed=seed), seed)
        assert cycle_loss(state, tiny_batch(state, seed), "sketch") >= 0


def test_cls_uniform_and_confident():
    state = tiny_state(n_seen=4)
    state.cls_sk.W[:] = 0
    state.cls_sk.b[:] = 0
    b = tiny_batch(state)
    assert cls_loss(state, b, "sketch") == pytest.approx(math.log(4))
    state.cls_sk.b[:] = -1e6
    state.g_sk.W[:] = 0
    state.g_sk.b[:] = 0
    b = Batch(b.X, b.Y, np.zeros(len(b.labels), dtype=int), b.S_raw)
    state.cls_sk.b[0] = 1e6
    assert cls_loss(state, b, "sketch") == pytest.approx(0.0, abs=1e-9)


def test_total_is_weighted_sum():
    state = perturb_biases(tiny_state(seed=2), 2)
    b = tiny_batch(state, 2)
    rep = total_loss(state, b)
    assert rep.total == pytest.approx(sum(rep.terms().values()), abs=1e-9)
    w = {t: float(i + 1) / 3 for i, t in enumerate(TERMS)}
    rep_w = total_loss(state, b, w)
    assert rep_w.total == pytest.approx(sum(w[t] * v for t, v in rep_w.terms().items()), abs=1e-9)
    assert rep.aenc == pytest.approx(aenc_loss(state.aenc, b.S_raw))


def test_all_zero_weights_give_zero_total():
    state = tiny_state()
    rep = total_loss(state, tiny_batch(state), {t: 0.0 for t in TERMS})
    assert rep.total == 0 and all(v == 0 for v in rep.terms().values())


def test_adversarial_only_weights_skip_cycle_and_cls():
    state = tiny_state()
    w = {t: 1.0 for t in TERMS}
    w.update(cyc_sk=0.0, cyc_im=0.0, cls_sk=0.0, cls_im=0.0)
    rep, grads = total_loss_grad(state, tiny_batch(state), w)
    assert rep.cyc_sk == rep.cyc_im == rep.cls_sk == rep.cls_im == 0
    assert not any(k.startswith("cls_") and np.any(v) for k, v in grads.items())


def test_csv_row_format():
    rep = LossReport(*range(9))
    assert CSV_HEADER == "step,adv_se,adv_sk,adv_im,cyc_sk,cyc_im,cls_sk,cls_im,aenc,total"
    assert rep.csv_row(7).split(",")[0] == "7"
    assert len(rep.csv_row(7).split(",")) == len(CSV_HEADER.split(","))


# --- gradients

def _check_term(state, batch, term):
    value, grads = term_grad(state, batch, term, "minimax")

    def f(st):
        return term_grad(st, batch, term, "minimax")[0]

    assert f(state) == pytest.approx(value)
    worst = 0.0
    for name, _ in list(state.named_arrays()):
        num = numeric_grad(f, state, name)
        ana = grads.get(name, np.zeros_like(num))
        worst = max(worst, rel_error(ana, num))
        assert rel_error(ana, num) <= 1e-4, (term, name, rel_error(ana, num))
    return worst


@pytest.mark.parametrize("term", TERMS)
def test_term_gradients(term):
    for trial in range(3):
        rng = np.random.default_rng(trial)
        M, k, d, C = (int(v) for v in rng.integers(2, 9, 4))
        state = perturb_biases(tiny_state(trial, M=M, k=k, d_feat=d, n_seen=C,
                                          d_hidden=int(rng.integers(2, 9))), trial)
        _check_term(state, tiny_batch(state, trial, n=int(rng.integers(1, 5))), term)


def test_total_gradient_with_and_without_selection():
    for select in (True, False):
        state = perturb_biases(tiny_state(7, select=select), 7)
        batch = tiny_batch(state, 7)
        weights = {t: 0.5 + i / 10 for i, t in enumerate(TERMS)}
        _, grads = total_loss_grad(state, batch, weights)

        def f(st):
            return total_loss_grad(st, batch, weights)[0].total

        for name, _ in list(state.named_arrays()):
            num = numeric_grad(f, state, name)
            assert rel_error(grads.get(name, np.zeros_like(num)), num) <= 1e-4, name


def test_nonsaturating_grads_only_touch_generator_side():
    state = perturb_biases(tiny_state(3), 3)
    batch = tiny_batch(state, 3)
    for term in ("adv_se", "adv_sk", "adv_im"):
        _, g = term_grad(state, batch, term, "nonsaturating")
        assert g and not any(k.startswith("d_") for k in g)


def test_nonsaturating_semantic_gradient_matches_surrogate():
    from sempcyc.network import discriminator_forward, generator_forward
    state = perturb_biases(tiny_state(5), 5)
    batch = tiny_batch(state, 5)
    _, grads = term_grad(state, batch, "adv_se", "nonsaturating")

    def surrogate(st):
        ps = discriminator_forward(st.d_se, generator_forward(st.g_sk, batch.X))
        pi = discriminator_forward(st.d_se, generator_forward(st.g_im, batch.Y))
        return -(np.log(ps).mean() + np.log(pi).mean())

    for name in ("g_sk.W", "g_sk.b", "g_im.W", "g_im.b"):
        assert rel_error(grads[name], numeric_grad(surrogate, state, name)) <= 1e-4


def test_antisymmetry_of_adversarial_roles():
    """A small discriminator ascent step raises each adversarial value; a generator descent step lowers it."""
    for seed in range(5):
        state = perturb_biases(tiny_state(seed), seed)
        batch = tiny_batch(state, seed)
        for term in ("adv_se", "adv_sk", "adv_im"):
            v0, g = term_grad(state, batch, term, "minimax")
            d_names = [k for k in g if k.startswith("d_")]
            g_names = [k for k in g if not k.startswith("d_")]
            assert d_names and g_names
            dir_d = sum(float((g[k] ** 2).sum()) for k in d_names)
            dir_g = sum(float((g[k] ** 2).sum()) for k in g_names)
            assert dir_d > 0 and dir_g > 0
            eps = 1e-5
            up = state.copy()
            for k in d_names:
                up.set(k, up.get(k) + eps * g[k])
            down = state.copy()
            for k in g_names:
                down.set(k, down.get(k) - eps * g[k])
            assert term_grad(up, batch, term)[0] > v0
            assert term_grad(down, batch, term)[0] < v0
