# coding: utf-8

# # Side information from word vectors and a taxonomy
#
# Each class gets a text part (the mean word vector of its name) and a
# hierarchy part (similarity of the class to every node on the ancestor paths
# of the training classes). This demo builds both from tiny hand-written
# inputs; with real word2vec/GloVe files and a WordNet edge list the calls
# are the same.

import numpy as np

from sempcyc.sideinfo import (MEASURES, Taxonomy, WordVectorTable, build_class_embeddings,
                              build_node_set, intrinsic_ic, node_similarity)

tax = Taxonomy.from_edges([
    ("animal", "entity"), ("object", "entity"),
    ("bird", "animal"), ("mammal", "animal"),
    ("owl", "bird"), ("duck", "bird"), ("cat", "mammal"), ("dog", "mammal"),
    ("lantern", "object"), ("chair", "object"),
])
print("root:", tax.root, " nodes:", len(tax.nodes))


# Information content is computed from the tree alone: leaves are maximally
# specific, the root carries none.

for node in ("entity", "animal", "bird", "owl"):
    print("IC(%s) = %.3f" % (node, intrinsic_ic(tax, node)))


# The three hierarchy measures on a few pairs.

for a, b in [("owl", "duck"), ("owl", "cat"), ("owl", "chair")]:
    print(a, b, "  ".join("%s %.3f" % (m, node_similarity(tax, a, b, m)) for m in MEASURES))


# The node set only uses ancestors of the training classes, so an unseen class
# is described by its similarity to things the model was trained around.

seen = ["owl", "cat", "dog", "chair"]
print("node set:", build_node_set(tax, seen))


# Word vectors. "jack-o-lantern" is not in the table, so an alias maps it to a
# taxonomy node and a word that are.

rng = np.random.default_rng(0)
words = ["owl", "duck", "cat", "dog", "chair", "lantern"]
table = WordVectorTable({w: rng.normal(size=8) for w in words})
classes = ["owl", "duck", "cat", "dog", "chair", "jack-o-lantern"]
embs = build_class_embeddings(classes, seen, table=table, tax=tax, measure="jcn",
                              aliases={"jack-o-lantern": "lantern"})
for e in embs:
    print("%-15s text %d + hier %d = %d" % (e.class_id, len(e.text), len(e.hier), len(e.combined)))
