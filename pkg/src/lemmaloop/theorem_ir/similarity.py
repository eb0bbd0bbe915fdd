"""Asymmetric structural similarity between expression trees.

A top-down alignment maps source nodes onto target nodes such that labels
agree, a mapped non-root node's parent is mapped to its image's parent, and
sibling order is preserved. The source root may land on any target node.
The score is the size of the largest alignment divided by the source size,
so a lemma whose statement shape appears inside a theorem scores 1.0 even if
the theorem is much larger.
"""

from __future__ import annotations


from lemmaloop.theorem_ir.tree import ExprTree


def _best_match(source: ExprTree, target: ExprTree, memo: dict[tuple[int, int], int]) -> int:
    key = (id(source), id(target))
    if key in memo:
        return memo[key]
    if source.label != target.label:
        memo[key] = 0
        return 0
    sc, tc = source.children, target.children
    # weighted LCS over the two child sequences
    table = [[0] * (len(tc) + 1) for _ in range(len(sc) + 1)]
    for x in range(1, len(sc) + 1):
        for y in range(1, len(tc) + 1):
            table[x][y] = max(
                table[x - 1][y],
                table[x][y - 1],
                table[x - 1][y - 1] + _best_match(sc[x - 1], tc[y - 1], memo),
            )
    memo[key] = 1 + table[-1][-1]
    return memo[key]


def aligned_node_count(source: ExprTree, target: ExprTree) -> int:
    memo: dict[tuple[int, int], int] = {}
    return max(_best_match(source, t, memo) for t in target.preorder())


def structural_similarity(source: ExprTree, target: ExprTree) -> float:
    """Fraction of source nodes covered by the best top-down alignment into target."""
    return aligned_node_count(source, target) / source.size
