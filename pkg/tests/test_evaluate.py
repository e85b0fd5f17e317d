import json
import warnings

import numpy as np
import pytest

from sempcyc.evaluate import (Gallery, average_precision, evaluate_embeddings, interpolated_precision,
                              pr_curve, precision_at_k, rank_gallery)
from sempcyc.hashing import fit_itq, pack_bits


def ap_oracle(rel):
    hits, total = 0, 0.0
    for i, r in enumerate(rel):
        if r:
            hits += 1
            total += hits / (i + 1)
    return total / hits if hits else 0.0


def p_at_k_oracle(rel, k):
    top = list(rel)[:k]
    return sum(top) / len(top) if top else 0.0


def interp_oracle(rel):
    n_rel = sum(rel)
    points = []
    hits = 0
    for i, r in enumerate(rel):
        hits += r
        points.append((hits / n_rel, hits / (i + 1)))
    out = []
    for level in [i / 10 for i in range(11)]:
        out.append(max(p for rc, p in points if rc >= level - 1e-12))
    return out


def random_relevance(rng):
    n = int(rng.integers(1, 21))
    rel = rng.random(n) < rng.uniform(0.1, 0.9)
    if not rel.any():
        rel[rng.integers(0, n)] = True
    return rel


def test_ap_examples():
    assert average_precision([1, 0, 1]) == pytest.approx((1 + 2 / 3) / 2)
    assert average_precision([0, 0, 1]) == pytest.approx(1 / 3)
    assert average_precision([1, 1, 0, 0]) == 1.0


def test_ap_no_relevant_warns_and_zero():
    with pytest.warns(UserWarning):
        assert average_precision([0, 0]) == 0.0


def test_metrics_match_oracles_on_random_instances():
    rng = np.random.default_rng(0)
    for _ in range(100):
        rel = random_relevance(rng)
        assert abs(average_precision(rel) - ap_oracle(rel)) <= 1e-9
        k = int(rng.integers(1, 25))
        assert abs(precision_at_k(rel, k) - p_at_k_oracle(rel, k)) <= 1e-9
        np.testing.assert_allclose(interpolated_precision(rel), interp_oracle(rel), atol=1e-9)
    rels = [random_relevance(rng) for _ in range(10)]
    curve = pr_curve(rels)
    expected = np.mean([interp_oracle(r) for r in rels], axis=0)
    np.testing.assert_allclose([p for _, p in curve], expected, atol=1e-9)
    assert [r for r, _ in curve] == pytest.approx([i / 10 for i in range(11)])


def test_precision_at_k_short_gallery():
    assert precision_at_k([1, 0, 1], 100) == pytest.approx(2 / 3)
    assert precision_at_k([], 5) == 0.0


def test_pr_curve_skips_queries_without_relevant_items():
    curve = pr_curve([[1, 0], [0, 0]])
    assert curve[0][1] == 1.0
    with pytest.raises(ValueError):
        pr_curve([[0, 0]])


def test_ties_rank_lower_index_first():
    g = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [5.0, 5.0]])
    np.testing.assert_array_equal(rank_gallery(np.zeros(2), g), [0, 1, 2, 3])
    codes = pack_bits(np.array([[1, 0], [0, 1], [1, 1], [0, 0]], dtype=np.uint8))
    np.testing.assert_array_equal(rank_gallery(pack_bits(np.array([[0, 0]], dtype=np.uint8))[0],
                                               codes, "hamming"), [3, 0, 1, 2])


def test_metric_type_checks():
    with pytest.raises(TypeError):
        rank_gallery(np.zeros(1, dtype=np.uint64), np.zeros((2, 1), dtype=np.uint64))
    with pytest.raises(TypeError):
        rank_gallery(np.zeros(2), np.zeros((3, 2)), "hamming")
    with pytest.raises(ValueError):
        rank_gallery(np.zeros(2), np.zeros((3, 2)), "cosine")


def test_map_invariant_to_gallery_permutation(rng):
    q = rng.normal(size=(6, 3))
    g = rng.normal(size=(30, 3))
    ql = rng.integers(0, 3, 6)
    gl = rng.integers(0, 3, 30)
    a = evaluate_embeddings(q, ql, Gallery(g, gl))
    perm = rng.permutation(30)
    b = evaluate_embeddings(q, ql, Gallery(g[perm], gl[perm]))
    assert a.mAP == pytest.approx(b.mAP, abs=1e-12)


def test_random_embeddings_give_chance_level_map():
    # Monte-Carlo: mAP of random rankings approaches the relevant fraction 1/C
    rng = np.random.default_rng(1)
    C, per = 5, 40
    labels = np.repeat(np.arange(C), per)
    maps = []
    for _ in range(20):
        res = evaluate_embeddings(rng.normal(size=(C * 4, 8)), np.repeat(np.arange(C), 4),
                                  Gallery(rng.normal(size=(C * per, 8)), labels))
        maps.append(res.mAP)
    assert np.mean(maps) == pytest.approx(1 / C, abs=0.03)


def test_separable_embeddings_give_perfect_map():
    centers = np.eye(4) * 10
    rng = np.random.default_rng(2)
    gl = np.repeat(np.arange(4), 10)
    g = centers[gl] + rng.normal(scale=0.1, size=(40, 4))
    q = centers + rng.normal(scale=0.1, size=(4, 4))
    res = evaluate_embeddings(q, np.arange(4), Gallery(g, gl), k=5)
    assert res.mAP == 1.0 and res.precision_at_k == 1.0
    itq = fit_itq(g, iters=20)
    assert evaluate_embeddings(q, np.arange(4), Gallery(g, gl), "hamming", itq=itq).mAP > 0.5


def test_generalized_gallery_is_not_easier(rng):
    centers = rng.normal(size=(6, 4)) * 2
    unseen, seen = np.arange(3), np.arange(3, 6)
    gl_u = np.repeat(unseen, 10)
    gl_s = np.repeat(seen, 10)
    g_u = centers[gl_u] + rng.normal(size=(30, 4))
    g_s = centers[gl_s] + rng.normal(size=(30, 4))
    q = centers[np.repeat(unseen, 3)] + rng.normal(size=(9, 4))
    ql = np.repeat(unseen, 3)
    only = evaluate_embeddings(q, ql, Gallery(g_u, gl_u))
    mixed = evaluate_embeddings(q, ql, Gallery(np.vstack([g_u, g_s]), np.concatenate([gl_u, gl_s]),
                                               mode="seen_plus_unseen"))
    assert mixed.mAP <= only.mAP + 1e-12


def test_hamming_needs_itq_and_empty_gallery_fails():
    with pytest.raises(ValueError):
        evaluate_embeddings(np.zeros((1, 2)), [0], Gallery(np.zeros((2, 2)), [0, 1]), "hamming")
    with pytest.raises(ValueError):
        evaluate_embeddings(np.zeros((1, 2)), [0], Gallery(np.zeros((0, 2)), np.zeros(0)))
    with pytest.raises(ValueError):
        Gallery(np.zeros((2, 2)), [0, 1], mode="weird")


def test_metrics_json_and_pr_csv(tmp_path, rng):
    res = evaluate_embeddings(rng.normal(size=(4, 3)), [0, 1, 0, 1],
                              Gallery(rng.normal(size=(10, 3)), np.arange(10) % 2), k=5)
    res.write_metrics(tmp_path / "m.json", {"config_hash": "abc"})
    m = json.loads((tmp_path / "m.json").read_text())
    assert set(m) == {"mode", "metric", "M", "mAP_all", "precision_at_5", "per_class_mAP",
                      "wall_time_per_query_s", "config_hash"}
    assert m["mAP_all"] == pytest.approx(np.mean(list(m["per_class_mAP"].values())))
    res.write_pr(tmp_path / "pr.csv")
    lines = (tmp_path / "pr.csv").read_text().splitlines()
    assert lines[0] == "recall,precision" and len(lines) == 12
    res.write_topk(tmp_path / "top.tsv", k=3, gallery_ids=[f"g{i}" for i in range(10)])
    first = (tmp_path / "top.tsv").read_text().splitlines()[0].split("\t")
    assert first[0] == "0" and len(first[2].split()) == 3


def test_query_without_relevant_item_warns(rng):
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        res = evaluate_embeddings(rng.normal(size=(2, 2)), [0, 5], Gallery(rng.normal(size=(4, 2)), [0, 0, 1, 1]))
    assert res.ap[1] == 0.0
    assert any("no relevant" in str(x.message) for x in w)
