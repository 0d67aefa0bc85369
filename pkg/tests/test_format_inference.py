import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as hs

import sparsetc as st
from sparsetc.expr import IndexVar
from sparsetc.format_inference import LevelClass, explain_format, infer_level

from conftest import random_expression, random_tensor


def _abc(rng=None):
    r = rng or np.random.default_rng(0)
    A = random_tensor(r, (4, 3), "csr", 0.4, "A")
    B = random_tensor(r, (3, 5), "csr", 0.4, "B")
    C = random_tensor(r, (4, 5), "dcsr", 0.4, "C")
    return {"A": A, "B": B, "C": C}


def test_addmul_instance_infers_csr():
    e = st.parse("D(i,j) = A(i,k) * B(k,j) + C(i,j)", _abc())
    fmt = st.infer_format(e)
    assert fmt.name() == "csr"
    # the multiplication subexpression alone: dense rows, compressed columns
    mul = e.rhs.lhs
    assert infer_level(mul, IndexVar("i")) is LevelClass.DENSE
    assert infer_level(mul, IndexVar("j")) is LevelClass.SPARSE


def test_all_dense_stays_dense():
    b = {n: st.from_dense(np.ones((3, 3)), name=n) for n in "AB"}
    e = st.parse("C(i,k) = A(i,j) * B(j,k)", b)
    assert st.infer_format(e).name() == "dense"
    e = st.parse("C(i,j) = A(i,j) + B(i,j)", b)
    assert st.infer_format(e).name() == "dense"


def test_mul_with_sparse_side_is_sparse():
    r = np.random.default_rng(1)
    A = st.from_dense(np.ones((3, 4)), name="A")
    B = random_tensor(r, (3, 4), "dcsr", 0.5, "B")
    e = st.parse("C(i,j) = A(i,j) * B(i,j)", {"A": A, "B": B})
    fmt = st.infer_format(e)
    assert fmt.name() == "dcsr"


def test_spgemm_spmm_spmv_outputs():
    r = np.random.default_rng(2)
    A = random_tensor(r, (4, 3), "csr", 0.5, "A")
    B = random_tensor(r, (3, 5), "csr", 0.5, "B")
    e = st.parse("C(i,k) = A(i,j) * B(j,k)", {"A": A, "B": B})
    assert st.infer_format(e).name() == "csr"

    Bd = st.from_dense(np.ones((3, 5)), name="Bd")
    e = st.parse("C(i,k) = A(i,j) * Bd(j,k)", {"A": A, "Bd": Bd})
    assert st.infer_format(e).name() == "dense"

    x = st.from_dense(np.ones(3), name="x")
    e = st.parse("y(i) = A(i,j) * x(j)", {"A": A, "x": x})
    fmt = st.infer_format(e)
    assert fmt.levels == (st.LevelFormat.DENSE,)


def test_absent_operand_is_neutral():
    r = np.random.default_rng(3)
    A = random_tensor(r, (4,), "compressed", 0.5, "A")
    B = st.from_dense(np.ones((4, 3)), name="B")
    e = st.parse("C(i,j) = A(i) * B(i,j)", {"A": A, "B": B})
    assert infer_level(e.rhs, IndexVar("j")) is LevelClass.DENSE
    assert infer_level(e.rhs, IndexVar("i")) is LevelClass.SPARSE
    assert infer_level(e.rhs, IndexVar("z")) is LevelClass.ABSENT


def test_add_of_two_sparse_stays_sparse():
    r = np.random.default_rng(4)
    A = random_tensor(r, (4, 4), "dcsr", 0.3, "A")
    B = random_tensor(r, (4, 4), "coo", 0.3, "B")
    e = st.parse("C(i,j) = A(i,j) + B(i,j)", {"A": A, "B": B})
    fmt = st.infer_format(e)
    assert all(lv is st.LevelFormat.COMPRESSED for lv in fmt.levels)


@given(seed=hs.integers(0, 2**31))
@settings(max_examples=80, deadline=None)
def test_conservative_rules(seed):
    """Sparse through multiplication never densifies; dense through addition
    never sparsifies."""
    e = random_expression(np.random.default_rng(seed), extent_cap=5)

    def walk(node):
        if isinstance(node, st.Access):
            return
        walk(node.lhs)
        walk(node.rhs)
        for v in st.get_index_variables(e):
            a, b = infer_level(node.lhs, v), infer_level(node.rhs, v)
            r = infer_level(node, v)
            if isinstance(node, st.Mul) and LevelClass.SPARSE in (a, b):
                assert r is LevelClass.SPARSE
            if isinstance(node, st.Add) and LevelClass.DENSE in (a, b):
                assert r is LevelClass.DENSE

    walk(e.rhs)


@given(seed=hs.integers(0, 2**31))
@settings(max_examples=60, deadline=None)
def test_inference_never_loses_values(seed):
    """Positions left structurally absent under the inferred format are exact
    zeros in the dense oracle result."""
    rng = np.random.default_rng(seed)
    e = random_expression(rng, extent_cap=5)
    dense = st.eval_dense(e)
    result = st.run(e, tiling=False)
    assert np.allclose(st.to_dense(result), dense, atol=1e-10)
    from sparsetc.tensor import stored_entries

    coords, _ = stored_entries(result)
    mask = np.zeros(dense.shape, dtype=bool)
    if len(coords):
        mask[tuple(coords[:, d] for d in range(coords.shape[1]))] = True
    assert np.all(dense[~mask] == 0.0)


def test_determinism_depends_only_on_formats():
    b1 = _abc(np.random.default_rng(7))
    b2 = _abc(np.random.default_rng(8))  # same formats, different values
    e1 = st.parse("D(i,j) = A(i,k) * B(k,j) + C(i,j)", b1)
    e2 = st.parse("D(i,j) = A(i,k) * B(k,j) + C(i,j)", b2)
    assert st.infer_format(e1) == st.infer_format(e2)


def test_explain_format_shape():
    e = st.parse("D(i,j) = A(i,k) * B(k,j) + C(i,j)", _abc())
    tree = explain_format(e)
    assert tree["format"] == "csr"
    assert [lv["index"] for lv in tree["levels"]] == ["i", "j"]
    assert tree["levels"][0]["derivation"]["op"] == "add"
