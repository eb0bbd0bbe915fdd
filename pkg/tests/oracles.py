"""Brute-force reference implementations used only by the test-suite.

Nothing here shares code with the package's algorithms beyond the tree type.
"""

from __future__ import annotations

import itertools
import math
import random
from functools import lru_cache

from lemmaloop.theorem_ir.tree import ExprTree


def _preorder_table(tree: ExprTree):
    labels, parents, ancestors, child_pos = [], [], [], []

    def walk(t, parent, anc, pos):
        idx = len(labels)
        labels.append(t.label)
        parents.append(parent)
        ancestors.append(anc)
        child_pos.append(pos)
        for k, c in enumerate(t.children):
            walk(c, idx, anc | {idx}, k)

    walk(tree, None, frozenset(), 0)
    return labels, parents, ancestors, child_pos


def brute_force_ted(a: ExprTree, b: ExprTree) -> int:
    """Edit distance as the cheapest valid (Tai) mapping, by exhaustive enumeration.

    A mapping is a set of node pairs that is one-to-one and preserves both the
    ancestor relation and left-to-right order. Its cost is
    deletions + insertions + relabelings = |a| + |b| - 2|M| + #mismatched pairs.
    Order preservation makes the mapped b-nodes increase in preorder, which is
    what bounds the search.
    """
    la, _, anc_a, _ = _preorder_table(a)
    lb, _, anc_b, _ = _preorder_table(b)
    n, m = len(la), len(lb)
    best = n + m

    def search(i, last_j, pairs, relabels):
        nonlocal best
        if i == n:
            best = min(best, n + m - 2 * len(pairs) + relabels)
            return
        search(i + 1, last_j, pairs, relabels)
        for j in range(last_j + 1, m):
            if all((k in anc_a[i]) == (l in anc_b[j]) for k, l in pairs):
                pairs.append((i, j))
                search(i + 1, j, pairs, relabels + (la[i] != lb[j]))
                pairs.pop()

    search(0, -1, [], 0)
    return best


def brute_force_alignment(source: ExprTree, target: ExprTree) -> int:
    """Largest top-down, order-preserving, label-preserving alignment, enumerated."""
    ls, ps, _, pos_s = _preorder_table(source)
    lt, pt, _, pos_t = _preorder_table(target)
    n, m = len(ls), len(lt)
    best = 0

    def search(i, mapping):
        nonlocal best
        if i == n:
            best = max(best, sum(1 for v in mapping if v is not None))
            return
        mapping.append(None)
        search(i + 1, mapping)
        mapping.pop()
        parent = ps[i]
        if parent is not None and mapping[parent] is None:
            return
        for t in range(m):
            if lt[t] != ls[i] or t in mapping:
                continue
            if parent is not None:
                if pt[t] != mapping[parent]:
                    continue
                earlier = [mapping[s] for s in range(i) if ps[s] == parent and mapping[s] is not None]
                if any(pos_t[e] >= pos_t[t] for e in earlier):
                    continue
            mapping.append(t)
            search(i + 1, mapping)
            mapping.pop()

    search(0, [])
    return best


@lru_cache(maxsize=None)
def shapes(n: int) -> tuple:
    """All ordered unlabeled tree shapes with n nodes, as nested tuples of children."""
    if n == 1:
        return ((),)
    return tuple(forest for forest in forests(n - 1))


@lru_cache(maxsize=None)
def forests(n: int) -> tuple:
    if n == 0:
        return ((),)
    out = []
    for first in range(1, n + 1):
        for head in shapes(first):
            for tail in forests(n - first):
                out.append((head,) + tail)
    return tuple(out)


def shape_size(shape) -> int:
    return 1 + sum(shape_size(c) for c in shape)


def label_shape(shape, labels) -> ExprTree:
    it = iter(labels)

    def build(s):
        label = next(it)
        return ExprTree(label, tuple(build(c) for c in s))

    return build(shape)


def all_labelled_trees(n: int, alphabet: str) -> list[ExprTree]:
    return [label_shape(s, labels) for s in shapes(n) for labels in itertools.product(alphabet, repeat=n)]


def random_tree(rng: random.Random, max_nodes: int, alphabet: str) -> ExprTree:
    n = rng.randint(1, max_nodes)
    shape = rng.choice(shapes(n))
    return label_shape(shape, [rng.choice(alphabet) for _ in range(n)])


def cosine(u, v) -> float:
    dot = sum(a * b for a, b in zip(u, v))
    return dot / (math.sqrt(sum(a * a for a in u)) * math.sqrt(sum(b * b for b in v)))
