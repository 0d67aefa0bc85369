"""Index-notation expressions over named tensors.

The grammar is ``Out(i,j,...) = term (('+'|'*') term)*`` where a term is
``Name(i,j,...)`` and ``*`` binds tighter than ``+``, so every right-hand
side is a sum of products. Index variables appearing on the right but not
in the output are summed implicitly; each additive term sums over its own
non-output indices, so e.g. ``D(i,j) = A(i,k)*B(k,j) + C(i,j)`` adds C
exactly once per output element.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .tensor import ShapeError, Tensor


class ParseError(ValueError):
    """The source text does not conform to the expression grammar."""


@dataclass(frozen=True)
class IndexVar:
    name: str

    def __repr__(self):
        return f"IndexVar({self.name!r})"


@dataclass(frozen=True)
class Access:
    """One tensor access, e.g. ``A(i,j)``."""

    tensor: Tensor
    indices: tuple[IndexVar, ...]

    def __post_init__(self):
        if len(self.indices) != self.tensor.order:
            raise ParseError(
                f"{self.tensor.name} has order {self.tensor.order}, "
                f"accessed with {len(self.indices)} indices"
            )
        names = [v.name for v in self.indices]
        if len(set(names)) != len(names):
            raise ParseError(f"repeated index in access {self.tensor.name}({', '.join(names)})")

    @property
    def name(self) -> str:
        return self.tensor.name

    def extent_of(self, var: IndexVar) -> int:
        return self.tensor.shape[self.indices.index(var)]


@dataclass(frozen=True)
class Mul:
    lhs: "Node"
    rhs: "Node"


@dataclass(frozen=True)
class Add:
    lhs: "Node"
    rhs: "Node"


Node = Access | Mul | Add


def _walk_accesses(node: Node):
    if isinstance(node, Access):
        yield node
    else:
        yield from _walk_accesses(node.lhs)
        yield from _walk_accesses(node.rhs)


@dataclass(frozen=True)
class TensorExpr:
    """An assignment ``output(indices) = rhs`` with einsum reduction semantics."""

    output_name: str
    output_indices: tuple[IndexVar, ...]
    rhs: Node

    def __post_init__(self):
        rhs_vars = {v for a in _walk_accesses(self.rhs) for v in a.indices}
        missing = [v.name for v in self.output_indices if v not in rhs_vars]
        if missing:
            raise ParseError(f"output indices {missing} do not appear on the right-hand side")
        if len({v.name for v in self.output_indices}) != len(self.output_indices):
            raise ParseError("repeated index in output access")
        extents: dict[IndexVar, int] = {}
        for a in _walk_accesses(self.rhs):
            for var, ext in zip(a.indices, a.tensor.shape):
                if extents.setdefault(var, ext) != ext:
                    raise ShapeError(
                        f"index {var.name} has extent {extents[var]} and {ext} "
                        f"in different accesses"
                    )

    @property
    def accesses(self) -> tuple[Access, ...]:
        return tuple(_walk_accesses(self.rhs))

    @property
    def output_shape(self) -> tuple[int, ...]:
        ext = index_extents(self)
        return tuple(ext[v] for v in self.output_indices)

    def terms(self) -> tuple[tuple[Access, ...], ...]:
        """The additive terms of the rhs, each a product of accesses."""

        def split_add(node: Node):
            if isinstance(node, Add):
                yield from split_add(node.lhs)
                yield from split_add(node.rhs)
            else:
                yield node

        def split_mul(node: Node):
            if isinstance(node, Mul):
                yield from split_mul(node.lhs)
                yield from split_mul(node.rhs)
            elif isinstance(node, Access):
                yield node
            else:
                raise ParseError("expression is not a sum of products")

        return tuple(tuple(split_mul(t)) for t in split_add(self.rhs))


def get_index_variables(e: TensorExpr) -> tuple[IndexVar, ...]:
    """All index variables in first-appearance order (output first, then rhs)."""
    seen: dict[IndexVar, None] = {}
    for v in e.output_indices:
        seen.setdefault(v)
    for a in e.accesses:
        for v in a.indices:
            seen.setdefault(v)
    return tuple(seen)


def get_reduction_variables(e: TensorExpr) -> frozenset[IndexVar]:
    """Index variables summed over: on the rhs but not in the output."""
    out = set(e.output_indices)
    return frozenset(v for a in e.accesses for v in a.indices if v not in out)


def index_extents(e: TensorExpr) -> dict[IndexVar, int]:
    ext: dict[IndexVar, int] = {}
    for a in e.accesses:
        for var, n in zip(a.indices, a.tensor.shape):
            ext[var] = n
    return ext


_ACCESS_RE = re.compile(r"\s*([A-Za-z_]\w*)\s*\(\s*([^()]*?)\s*\)\s*")


def _parse_access_text(text: str) -> tuple[str, tuple[str, ...], str]:
    m = _ACCESS_RE.match(text)
    if not m:
        raise ParseError(f"expected an access like Name(i,j) at {text.strip()!r}")
    name, idx_text = m.group(1), m.group(2)
    idx = tuple(s.strip() for s in idx_text.split(",")) if idx_text.strip() else ()
    if not idx or any(not re.fullmatch(r"[A-Za-z_]\w*", s) for s in idx):
        raise ParseError(f"bad index list in {text.strip()!r}")
    return name, idx, text[m.end() :]


def parse(src: str, bindings: dict[str, Tensor]) -> TensorExpr:
    """Parse assignment source text against a set of named input tensors."""
    if "=" not in src:
        raise ParseError("expected an assignment containing '='")
    lhs_text, rhs_text = src.split("=", 1)
    out_name, out_idx, rest = _parse_access_text(lhs_text)
    if rest.strip():
        raise ParseError(f"unexpected text after output access: {rest.strip()!r}")

    def make_access(name: str, idx: tuple[str, ...]) -> Access:
        if name not in bindings:
            raise ParseError(f"unbound tensor name {name!r}")
        return Access(bindings[name], tuple(IndexVar(s) for s in idx))

    # Tokenize the rhs into accesses and +/* operators.
    tokens: list = []
    rest = rhs_text
    while rest.strip():
        stripped = rest.lstrip()
        if stripped[0] in "+*":
            tokens.append(stripped[0])
            rest = stripped[1:]
        else:
            name, idx, rest = _parse_access_text(rest)
            tokens.append(make_access(name, idx))
    if not tokens:
        raise ParseError("empty right-hand side")

    def expect_access(tok) -> Access:
        if not isinstance(tok, Access):
            raise ParseError(f"expected a tensor access, got {tok!r}")
        return tok

    # Fold with precedence: products bind tighter than sums, left-associative.
    pos = 0

    def parse_product():
        nonlocal pos
        node: Node = expect_access(tokens[pos])
        pos += 1
        while pos < len(tokens) and tokens[pos] == "*":
            pos += 1
            if pos >= len(tokens):
                raise ParseError("dangling '*'")
            node = Mul(node, expect_access(tokens[pos]))
            pos += 1
        return node

    node = parse_product()
    while pos < len(tokens):
        if tokens[pos] != "+":
            raise ParseError(f"expected '+' between terms, got {tokens[pos]!r}")
        pos += 1
        if pos >= len(tokens):
            raise ParseError("dangling '+'")
        node = Add(node, parse_product())

    return TensorExpr(out_name, tuple(IndexVar(s) for s in out_idx), node)


def parse_einsum(subscripts: str, operands: list[Tensor], out_name: str = "Out") -> TensorExpr:
    """Desugar an einsum string like ``"ij,jk->ik"`` into an expression.

    Operands multiply; the output subscript must be explicit. Each subscript
    letter becomes an index variable.
    """
    if "->" not in subscripts:
        raise ParseError("einsum form requires an explicit '->' output")
    in_text, out_text = subscripts.split("->", 1)
    groups = [g.strip() for g in in_text.split(",")]
    if len(groups) != len(operands):
        raise ParseError(f"{len(groups)} subscript groups for {len(operands)} tensors")
    node: Node | None = None
    for group, tensor in zip(groups, operands):
        access = Access(tensor, tuple(IndexVar(c) for c in group))
        node = access if node is None else Mul(node, access)
    if node is None:
        raise ParseError("einsum requires at least one operand")
    return TensorExpr(out_name, tuple(IndexVar(c) for c in out_text.strip()), node)


def render(e: TensorExpr) -> str:
    """Canonical source text; ``parse(render(e))`` reproduces the expression."""

    def fmt_access(a: Access) -> str:
        return f"{a.name}({','.join(v.name for v in a.indices)})"

    def fmt(node: Node) -> str:
        if isinstance(node, Access):
            return fmt_access(node)
        op = " * " if isinstance(node, Mul) else " + "
        return fmt(node.lhs) + op + fmt(node.rhs)

    out = f"{e.output_name}({','.join(v.name for v in e.output_indices)})"
    return f"{out} = {fmt(e.rhs)}"
