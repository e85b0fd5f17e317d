# coding: utf-8

# # 16-bit codes with iterative quantization
#
# Real-valued embeddings are compact already, but binary codes make the
# gallery tiny and distances a single popcount. ITQ learns a rotation so that
# taking signs loses as little as possible.

import numpy as np

from sempcyc.config import benchmark_config
from sempcyc.data import synthesize_dataset
from sempcyc.evaluate import Gallery, embed, evaluate_embeddings
from sempcyc.hashing import binarize, codes_to_hex, fit_itq, hamming_distances, pack_bits
from sempcyc.trainer import fit

cfg = benchmark_config()
ds = synthesize_dataset(cfg.synth_config())
state = fit(ds, cfg.train_config()).state


# Fit the rotation on seen-class embeddings of both modalities. Unseen classes
# never touch it.

Xs, _ = ds.split("seen", "sketch")
Ys, _ = ds.split("seen", "image")
itq = fit_itq(np.vstack([embed(state, Xs, "sketch"), embed(state, Ys, "image")]), iters=50)
print("quantization loss, first and last iteration: %.1f -> %.1f"
      % (itq.loss_history[0], itq.loss_history[-1]))


# A few codes, as they would be written by `sempcyc fit-itq`.

names = np.array(ds.classes)
Xq, yq = ds.split("unseen", "sketch")
Yg, yg = ds.split("unseen", "image")
q, g = embed(state, Xq, "sketch"), embed(state, Yg, "image")
bits = binarize(itq, q[:3])
print(bits)
print(codes_to_hex(bits))


# Hamming ranking versus Euclidean ranking on the same embeddings.

real = evaluate_embeddings(q, names[yq], Gallery(g, names[yg]))
binary = evaluate_embeddings(q, names[yq], Gallery(g, names[yg]), "hamming", itq=itq)
print("euclidean mAP %.3f   hamming mAP %.3f" % (real.mAP, binary.mAP))


# Distances are small integers, so ties are common. Ranking is stable: equal
# distances keep gallery order.

d = hamming_distances(pack_bits(binarize(itq, q[:1])), pack_bits(binarize(itq, g)))
print("distance histogram for one query:", np.bincount(d, minlength=17))
