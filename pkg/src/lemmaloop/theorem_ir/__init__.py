"""Theorem statements, simplified expression trees, and structural metrics."""

from lemmaloop.theorem_ir.statement import ParseError, TheoremStatement
from lemmaloop.theorem_ir.tree import ExprTree, from_sexpr, leaf, node
from lemmaloop.theorem_ir.parser import parse_expression, parse_to_expr_tree, tokenize

__all__ = [
    "ExprTree",
    "ParseError",
    "TheoremStatement",
    "from_sexpr",
    "leaf",
    "node",
    "parse_expression",
    "parse_to_expr_tree",
    "tokenize",
]

from lemmaloop.theorem_ir.edit_distance import is_duplicate, normalized_distance, tree_edit_distance
from lemmaloop.theorem_ir.similarity import structural_similarity

__all__ += ["is_duplicate", "normalized_distance", "structural_similarity", "tree_edit_distance"]
