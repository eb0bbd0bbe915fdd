"""Ordered tree edit distance (Zhang & Shasha, unit costs)."""

from __future__ import annotations

from lemmaloop.theorem_ir.tree import ExprTree


class _Annotated:
    """Postorder labels, leftmost-leaf indices and keyroots of one tree."""

    def __init__(self, root: ExprTree):
        self.labels: list[str] = []
        self.lmd: list[int] = []
        index: dict[int, int] = {}
        # iterative postorder so deep expression trees don't hit the recursion limit
        visit: list[tuple[ExprTree, bool]] = [(root, False)]
        while visit:
            tree, expanded = visit.pop()
            if not expanded:
                visit.append((tree, True))
                visit.extend((child, False) for child in reversed(tree.children))
                continue
            idx = len(self.labels)
            self.labels.append(tree.label)
            self.lmd.append(self.lmd[index[id(tree.children[0])]] if tree.children else idx)
            index[id(tree)] = idx
        seen: set[int] = set()
        keyroots = []
        for i in range(len(self.labels) - 1, -1, -1):
            if self.lmd[i] not in seen:
                keyroots.append(i)
                seen.add(self.lmd[i])
        self.keyroots = sorted(keyroots)


def tree_edit_distance(a: ExprTree, b: ExprTree) -> int:
    """Fewest unit-cost node edits turning a into b."""
    if a == b:
        return 0
    A, B = _Annotated(a), _Annotated(b)
    n, m = len(A.labels), len(B.labels)
    treedist = [[0] * m for _ in range(n)]

    for i in A.keyroots:
        for j in B.keyroots:
            li, lj = A.lmd[i], B.lmd[j]
            rows, cols = i - li + 2, j - lj + 2
            fd = [[0] * cols for _ in range(rows)]
            for x in range(1, rows):
                fd[x][0] = fd[x - 1][0] + 1
            for y in range(1, cols):
                fd[0][y] = fd[0][y - 1] + 1
            for x in range(1, rows):
                i1 = li + x - 1
                for y in range(1, cols):
                    j1 = lj + y - 1
                    if A.lmd[i1] == li and B.lmd[j1] == lj:
                        relabel = 0 if A.labels[i1] == B.labels[j1] else 1
                        fd[x][y] = min(fd[x - 1][y] + 1, fd[x][y - 1] + 1, fd[x - 1][y - 1] + relabel)
                        treedist[i1][j1] = fd[x][y]
                    else:
                        p = A.lmd[i1] - li
                        q = B.lmd[j1] - lj
                        fd[x][y] = min(fd[x - 1][y] + 1, fd[x][y - 1] + 1, fd[p][q] + treedist[i1][j1])
    return treedist[n - 1][m - 1]


def normalized_distance(a: ExprTree, b: ExprTree) -> float:
    """Edit distance over the larger size. Can exceed 1 when ancestry blocks a full mapping."""
    return tree_edit_distance(a, b) / max(a.size, b.size)


def is_duplicate(a: ExprTree, b: ExprTree, threshold: float) -> bool:
    """True iff the size-normalized edit distance is at most `threshold`."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {threshold}")
    return normalized_distance(a, b) <= threshold
