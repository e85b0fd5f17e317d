"""Per-class side information: word vectors, taxonomy similarities and their concatenation.

A class is described by a text part (a word vector, or the mean of the word
vectors of its tokens) and a hierarchy part (its similarity to every node of
the node set built from the seen classes' ancestor paths).
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from .errors import FormatError, MissingTokenError

MEASURES = ("path", "lin", "jcn")
_TOKEN_SPLIT = re.compile(r"[\s_\-]+")


@dataclass(frozen=True)
class Taxonomy:
    """Rooted tree of concept nodes. Immutable once built."""

    nodes: tuple[str, ...]
    parent: Mapping[str, str]
    root: str

    @classmethod
    def from_edges(cls, edges: Sequence[tuple[str, str]]) -> "Taxonomy":
        parent: dict[str, str] = {}
        nodes: set[str] = set()
        for child, par in edges:
            if not child or not par:
                raise FormatError(f"empty node name in edge ({child!r}, {par!r})")
            if child == par:
                raise FormatError(f"cycle detected: {child!r} is its own parent")
            if child in parent and parent[child] != par:
                raise FormatError(
                    f"node {child!r} has two parents ({parent[child]!r}, {par!r})"
                )
            parent[child] = par
            nodes.update((child, par))
        if not nodes:
            raise FormatError("taxonomy has no edges")

        # cycle check before root check: a pure cycle has no root at all
        settled: set[str] = set()
        for start in sorted(nodes):
            seen_on_walk = []
            n = start
            while n in parent and n not in settled:
                if n in seen_on_walk:
                    raise FormatError(f"cycle detected through node {n!r}")
                seen_on_walk.append(n)
                n = parent[n]
            settled.update(seen_on_walk)

        roots = sorted(n for n in nodes if n not in parent)
        if len(roots) != 1:
            raise FormatError(f"taxonomy must have exactly one root, found {roots}")
        return cls(nodes=tuple(sorted(nodes)), parent=dict(parent), root=roots[0])

    def __contains__(self, node) -> bool:
        return node in self._index

    @cached_property
    def _index(self) -> dict[str, int]:
        return {n: i for i, n in enumerate(self.nodes)}

    @cached_property
    def children(self) -> dict[str, tuple[str, ...]]:
        out: dict[str, list[str]] = {n: [] for n in self.nodes}
        for c, p in self.parent.items():
            out[p].append(c)
        return {n: tuple(sorted(cs)) for n, cs in out.items()}

    @cached_property
    def depth(self) -> dict[str, int]:
        depth = {self.root: 0}
        stack = [self.root]
        while stack:
            n = stack.pop()
            for c in self.children[n]:
                depth[c] = depth[n] + 1
                stack.append(c)
        return depth

    @cached_property
    def n_descendants(self) -> dict[str, int]:
        """Number of strict descendants of every node."""
        counts = {n: 0 for n in self.nodes}
        for n in sorted(self.nodes, key=self.depth.__getitem__, reverse=True):
            if n != self.root:
                counts[self.parent[n]] += counts[n] + 1
        return counts

    def check(self, node: str) -> None:
        if node not in self._index:
            raise KeyError(f"node {node!r} is not in the taxonomy")

    def ancestors(self, node: str) -> list[str]:
        """Path from ``node`` up to the root, both inclusive."""
        self.check(node)
        path = [node]
        while path[-1] != self.root:
            path.append(self.parent[path[-1]])
        return path

    def lcs(self, a: str, b: str) -> str:
        """Lowest common subsumer of two nodes."""
        up_a = set(self.ancestors(a))
        for n in self.ancestors(b):
            if n in up_a:
                return n
        raise AssertionError("unreachable: all nodes share the root")

    def path_length(self, a: str, b: str) -> int:
        c = self.lcs(a, b)
        return self.depth[a] + self.depth[b] - 2 * self.depth[c]


def load_taxonomy(path) -> Taxonomy:
    """Read a ``child<TAB>parent`` edge list."""
    edges = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n\r")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise FormatError(f"{path}:{lineno}: expected 'child<TAB>parent'")
            edges.append((parts[0].strip(), parts[1].strip()))
    return Taxonomy.from_edges(edges)


def save_taxonomy(tax: Taxonomy, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for child in tax.nodes:
            if child != tax.root:
                fh.write(f"{child}\t{tax.parent[child]}\n")


def build_node_set(tax: Taxonomy, classes: Sequence[str]) -> list[str]:
    """Union of the root paths of ``classes``, in lexicographic order."""
    nodes: set[str] = set()
    for c in classes:
        nodes.update(tax.ancestors(c))
    return sorted(nodes)


def intrinsic_ic(tax: Taxonomy, node: str) -> float:
    """Structure-only information content: 1 - log(hypo + 1) / log(N).

    ``hypo`` counts strict descendants, so the root scores 0 and leaves score 1.
    """
    tax.check(node)
    n = len(tax.nodes)
    if n < 2:
        return 0.0
    return 1.0 - math.log(tax.n_descendants[node] + 1) / math.log(n)


def corpus_ic(tax: Taxonomy, counts: Mapping[str, float]) -> dict[str, float]:
    """Information content -log p(node) from raw frequency counts.

    A node's probability mass includes the counts of all its descendants.
    """
    mass = {n: float(counts.get(n, 0.0)) for n in tax.nodes}
    for n in sorted(tax.nodes, key=tax.depth.__getitem__, reverse=True):
        if n != tax.root:
            mass[tax.parent[n]] += mass[n]
    total = mass[tax.root]
    if total <= 0:
        raise ValueError("frequency counts sum to zero")
    # unseen nodes get the mass of one pseudo-observation to stay finite
    return {n: -math.log(max(m, 1.0) / total) for n, m in mass.items()}


def load_ic_counts(path) -> dict[str, float]:
    """Read a ``node<TAB>count`` frequency file."""
    counts = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            try:
                counts[parts[0]] = float(parts[1])
            except (IndexError, ValueError):
                raise FormatError(f"{path}:{lineno}: expected 'node<TAB>count'") from None
    return counts


def node_similarity(tax: Taxonomy, a: str, b: str, measure: str = "path",
                    ic: Mapping[str, float] | None = None) -> float:
    """Similarity of two nodes under ``path``, ``lin`` or ``jcn``.

    ``ic`` overrides the intrinsic information content used by lin and jcn.
    Jiang-Conrath distance d is reported as the similarity 1 / (1 + d).
    """
    tax.check(a)
    tax.check(b)
    if measure == "path":
        return 1.0 / (1.0 + tax.path_length(a, b))
    if measure not in MEASURES:
        raise ValueError(f"unknown similarity measure {measure!r}")

    def info(n):
        return ic[n] if ic is not None else intrinsic_ic(tax, n)

    ic_a, ic_b, ic_c = info(a), info(b), info(tax.lcs(a, b))
    if measure == "lin":
        denom = ic_a + ic_b
        return 1.0 if denom == 0 else 2.0 * ic_c / denom
    dist = max(ic_a + ic_b - 2.0 * ic_c, 0.0)
    return 1.0 / (1.0 + dist)


def hierarchical_embedding(tax: Taxonomy, cls: str, node_set: Sequence[str],
                           measure: str = "path",
                           ic: Mapping[str, float] | None = None) -> np.ndarray:
    tax.check(cls)
    if ic is None and measure != "path":
        ic = {n: intrinsic_ic(tax, n) for n in tax.nodes}
    return np.array([node_similarity(tax, cls, n, measure, ic) for n in node_set])


@dataclass
class WordVectorTable:
    """Token to vector lookup; every vector has the same dimension."""

    entries: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        dims = {v.shape for v in self.entries.values()}
        if len(dims) > 1:
            raise FormatError(f"word vectors of mixed dimension: {sorted(dims)}")

    @property
    def dim(self) -> int:
        return next(iter(self.entries.values())).shape[0] if self.entries else 0

    def __contains__(self, token) -> bool:
        return token in self.entries

    def __getitem__(self, token) -> np.ndarray:
        return self.entries[token]


def load_word_vectors(path, vocab: set[str] | None = None) -> WordVectorTable:
    """Read GloVe/word2vec text files: ``token v1 ... vk`` per line.

    A leading ``count dim`` line (word2vec convention) is skipped. Tokens are
    lowercased; the first occurrence wins. ``vocab`` restricts what is kept,
    which matters for multi-gigabyte files.
    """
    entries: dict[str, np.ndarray] = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip().split(" ")
            if not parts or parts == [""]:
                continue
            if lineno == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
                continue
            token = parts[0].lower()
            if dim is None:
                dim = len(parts) - 1
            if len(parts) - 1 != dim:
                raise FormatError(f"{path}:{lineno}: expected {dim} values, got {len(parts) - 1}")
            if token in entries or (vocab is not None and token not in vocab):
                continue
            try:
                entries[token] = np.array(parts[1:], dtype=np.float64)
            except ValueError:
                raise FormatError(f"{path}:{lineno}: non-numeric entry") from None
    return WordVectorTable(entries)


def tokenize(class_name: str) -> list[str]:
    return [t for t in _TOKEN_SPLIT.split(class_name.lower()) if t]


def text_embedding(table: WordVectorTable, class_name: str) -> np.ndarray:
    """Word vector of a class name; multi-word names average their tokens."""
    tokens = tokenize(class_name)
    if not tokens:
        raise ValueError(f"class name {class_name!r} has no tokens")
    missing = [t for t in tokens if t not in table]
    if missing:
        raise MissingTokenError(class_name, missing)
    return np.mean([table[t] for t in tokens], axis=0)


def combine_side_info(text: np.ndarray, hier: np.ndarray) -> np.ndarray:
    text = np.asarray(text, dtype=float)
    hier = np.asarray(hier, dtype=float)
    if not (np.all(np.isfinite(text)) and np.all(np.isfinite(hier))):
        raise ValueError("side information must be finite")
    return np.concatenate([text, hier])


@dataclass
class ClassEmbedding:
    class_id: str
    text: np.ndarray
    hier: np.ndarray

    @property
    def combined(self) -> np.ndarray:
        return combine_side_info(self.text, self.hier)


def load_aliases(path) -> dict[str, str]:
    """Read a ``class<TAB>replacement`` remap file."""
    aliases = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 2:
                raise FormatError(f"{path}:{lineno}: expected 'class<TAB>taxonomy_node'")
            aliases[parts[0]] = parts[1]
    return aliases


def build_class_embeddings(classes: Sequence[str], seen: Sequence[str], *,
                           table: WordVectorTable | None = None,
                           tax: Taxonomy | None = None,
                           measure: str | None = "path",
                           aliases: Mapping[str, str] | None = None,
                           ic: Mapping[str, float] | None = None) -> list[ClassEmbedding]:
    """Side information for every class.

    The node set comes from the ``seen`` classes only; unseen classes are
    embedded against it. Either part may be disabled by passing ``None``.
    """
    aliases = aliases or {}
    node_set: list[str] = []
    if tax is not None and measure is not None:
        node_set = build_node_set(tax, [aliases.get(c, c) for c in seen])
        if ic is None and measure != "path":
            ic = {n: intrinsic_ic(tax, n) for n in tax.nodes}
    out = []
    for c in classes:
        name = aliases.get(c, c)
        text = text_embedding(table, name) if table is not None else np.zeros(0)
        hier = (hierarchical_embedding(tax, name, node_set, measure, ic)
                if node_set else np.zeros(0))
        out.append(ClassEmbedding(c, text, hier))
    return out


def save_embeddings(embeddings: Mapping[str, np.ndarray] | Sequence[ClassEmbedding], path) -> None:
    """Write ``C k`` then ``class_id v1 ... vk`` per line."""
    if not isinstance(embeddings, Mapping):
        embeddings = {e.class_id: e.combined for e in embeddings}
    k = len(next(iter(embeddings.values()))) if embeddings else 0
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(embeddings)} {k}\n")
        for cid, vec in embeddings.items():
            fh.write(cid + " " + " ".join(repr(float(v)) for v in vec) + "\n")


def load_embeddings(path) -> dict[str, np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        try:
            n, k = int(header[0]), int(header[1])
        except (IndexError, ValueError):
            raise FormatError(f"{path}:1: expected header 'C k'") from None
        out = {}
        for lineno, line in enumerate(fh, 2):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != k + 1:
                raise FormatError(f"{path}:{lineno}: expected {k} values")
            try:
                out[parts[0]] = np.array(parts[1:], dtype=np.float64)
            except ValueError:
                raise FormatError(f"{path}:{lineno}: non-numeric entry") from None
    if len(out) != n:
        raise FormatError(f"{path}: header announces {n} classes, found {len(out)}")
    return out
