"""Brute-force dense evaluator used for differential testing.

Materializes every operand densely and evaluates the expression by nested
loops over the full iteration space. Reduction is performed in ascending
index order so float results are reproducible. Cost is the product of the
index extents; keep extents small.
"""

from __future__ import annotations

import itertools

import numpy as np

from .expr import TensorExpr, index_extents
from .tensor import ShapeError, Tensor, to_dense


def eval_dense(e: TensorExpr, bindings: dict[str, Tensor] | None = None) -> np.ndarray:
    """Evaluate an expression densely; returns the output as a dense array."""
    dense: dict[int, np.ndarray] = {}
    for a in e.accesses:
        t = a.tensor if bindings is None else bindings.get(a.tensor.name, a.tensor)
        if t.shape != a.tensor.shape:
            raise ShapeError(
                f"binding for {a.tensor.name} has shape {t.shape}, expected {a.tensor.shape}"
            )
        dense[id(a)] = to_dense(t)

    extents = index_extents(e)
    out = np.zeros(e.output_shape, dtype=np.float64)
    out_vars = e.output_indices
    for term in e.terms():
        term_vars = {v for a in term for v in a.indices}
        red_vars = sorted((v for v in term_vars if v not in out_vars), key=lambda v: v.name)
        for out_coord in itertools.product(*(range(extents[v]) for v in out_vars)):
            env = dict(zip(out_vars, out_coord))
            total = 0.0
            for red_coord in itertools.product(*(range(extents[v]) for v in red_vars)):
                env.update(zip(red_vars, red_coord))
                prod = 1.0
                for a in term:
                    prod = prod * dense[id(a)][tuple(env[v] for v in a.indices)]
                total += prod
            out[out_coord] += total
    return out
