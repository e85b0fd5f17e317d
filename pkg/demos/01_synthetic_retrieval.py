# coding: utf-8

# # Zero-shot retrieval on a synthetic split
#
# We build a small stand-in for a sketch/image benchmark: 15 classes, 10 seen
# during training and 5 held out. Every class has a hidden prototype; sketches
# and images are two different noisy views of it, and the side information is
# a third view. Nothing about the 5 unseen classes is shown to the model except
# their side-information vectors, and at test time not even those.

import time

import numpy as np

from sempcyc.config import benchmark_config
from sempcyc.data import nearest_prototype_accuracy, synthesize_dataset
from sempcyc.evaluate import Gallery, embed, evaluate_embeddings
from sempcyc.trainer import fit

cfg = benchmark_config()
ds = synthesize_dataset(cfg.synth_config())
print("seen:  ", ds.seen)
print("unseen:", ds.unseen)
print("features", ds.X.shape, "side information", ds.side.shape)


# The raw features are easy to classify within one modality, which is what
# real CNN features look like too. The hard part is that sketch and image
# features live in different spaces.

print("nearest class mean, sketches: %.3f" % nearest_prototype_accuracy(ds.X, ds.x_labels))
print("nearest class mean, images:   %.3f" % nearest_prototype_accuracy(ds.Y, ds.y_labels))


# Train on the seen classes only. The recipe lives in `benchmark_config()`
# (and in `demos/synthetic.cfg` for the command line).

t0 = time.perf_counter()
ckpt = fit(ds, cfg.train_config())
print("trained %d steps in %.1fs" % (ckpt.state.step, time.perf_counter() - t0))
print("last log row:", ckpt.log_tail[-1])


# Map unseen sketches and unseen images into the shared 16-D space and rank.

names = np.array(ds.classes)
Xq, yq = ds.split("unseen", "sketch")
Yg, yg = ds.split("unseen", "image")
q = embed(ckpt.state, Xq, "sketch")
g = embed(ckpt.state, Yg, "image")
res = evaluate_embeddings(q, names[yq], Gallery(g, names[yg]))
print("mAP@all %.3f   P@100 %.3f" % (res.mAP, res.precision_at_k))
for c, v in res.per_class_mAP().items():
    print("  %-8s %.3f" % (c, v))


# For scale: random embeddings give roughly one over the number of unseen
# classes.

rng = np.random.default_rng(0)
rand = evaluate_embeddings(rng.normal(size=q.shape), names[yq], Gallery(rng.normal(size=g.shape), names[yg]))
print("random baseline mAP %.3f" % rand.mAP)


# The generalized setting adds every seen-class image to the gallery as a
# distractor.

Yall, yall = ds.split("all", "image")
gen = evaluate_embeddings(q, names[yq], Gallery(embed(ckpt.state, Yall, "image"), names[yall],
                                                mode="seen_plus_unseen"))
print("generalized mAP@all %.3f" % gen.mAP)
