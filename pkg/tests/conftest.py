"""Shared builders for randomized differential tests."""

from __future__ import annotations

import functools

import numpy as np
import pytest

import sparsetc as st
from sparsetc.expr import Add, Mul

MATRIX_FORMATS = ("dense", "csr", "csc", "dcsr", "coo")
VECTOR_LEVELS = ("dense", "compressed", "coordinate")


def vector_format(kind: str, n: int) -> st.TensorFormat:
    level = {
        "dense": st.LevelFormat.DENSE,
        "compressed": st.LevelFormat.COMPRESSED,
        "coordinate": st.LevelFormat.COORDINATE,
    }[kind]
    return st.TensorFormat((n,), (0,), (level,))


def random_values(rng, count, integer=False):
    if integer:
        return rng.integers(-3, 4, size=count).astype(np.float64)
    return rng.uniform(-1.0, 1.0, size=count)


def random_tensor(rng, shape, fmt_name, density, name, integer=False) -> st.Tensor:
    """A tensor with round(size*density) distinct stored entries."""
    size = int(np.prod(shape))
    count = max(0, min(size, round(size * density)))
    flat = rng.choice(size, size=count, replace=False)
    coords = np.stack(np.unravel_index(flat, shape), axis=1)
    vals = random_values(rng, count, integer)
    entries = [(tuple(int(c) for c in coord), float(v)) for coord, v in zip(coords, vals)]
    if len(shape) == 1:
        fmt = vector_format(fmt_name, shape[0])
    else:
        fmt = st.format_by_name(fmt_name, shape)
    return st.build_from_entries(shape, fmt, entries, name=name)


def random_expression(rng, extent_cap=8, densities=(0.1, 0.5, 1.0), integer=False):
    """A random sum-of-products expression over at most three index variables.

    Every tensor gets its own format drawn from the full per-order format
    set, so all level compositions appear across a large sample.
    """
    var_pool = [st.IndexVar(n) for n in ("i", "j", "k")[: rng.integers(1, 4)]]
    extents = {v: int(rng.integers(1, extent_cap + 1)) for v in var_pool}
    n_terms = int(rng.integers(1, 4))
    terms = []
    used_vars: set[st.IndexVar] = set()
    counter = 0
    for _ in range(n_terms):
        n_acc = int(rng.integers(1, 4))
        accesses = []
        for _ in range(n_acc):
            order = int(rng.integers(1, min(2, len(var_pool)) + 1))
            vs = list(rng.choice(len(var_pool), size=order, replace=False))
            vs = [var_pool[i] for i in vs]
            shape = tuple(extents[v] for v in vs)
            fmt_name = (
                str(rng.choice(MATRIX_FORMATS)) if order == 2 else str(rng.choice(VECTOR_LEVELS))
            )
            density = float(rng.choice(densities))
            t = random_tensor(rng, shape, fmt_name, density, f"T{counter}", integer)
            counter += 1
            accesses.append(st.Access(t, tuple(vs)))
            used_vars.update(vs)
        terms.append(accesses)

    usable = [v for v in var_pool if v in used_vars]
    n_out = int(rng.integers(1, len(usable) + 1))
    out_idx = [usable[i] for i in rng.choice(len(usable), size=n_out, replace=False)]

    rhs = functools.reduce(
        Add, (functools.reduce(Mul, term) for term in terms)
    )
    return st.TensorExpr("Out", tuple(out_idx), rhs)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
