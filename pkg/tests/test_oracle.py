import numpy as np

import sparsetc as st

from conftest import random_tensor


def test_one_by_one_matmul():
    A = st.from_dense([[2.0]], name="A")
    B = st.from_dense([[3.0]], name="B")
    e = st.parse("C(i,k) = A(i,j) * B(j,k)", {"A": A, "B": B})
    assert st.eval_dense(e).tolist() == [[6.0]]


def test_addmul_fixed_instance():
    A = st.from_dense([[1.0, 2.0], [0.0, 3.0]], name="A")
    B = st.from_dense([[4.0, 0.0], [5.0, 6.0]], name="B")
    C = st.from_dense([[1.0, 1.0], [0.0, -1.0]], name="C")
    e = st.parse("D(i,j) = A(i,k) * B(k,j) + C(i,j)", {"A": A, "B": B, "C": C})
    expected = np.array([[1 * 4 + 2 * 5 + 1, 2 * 6 + 1], [3 * 5, 3 * 6 - 1]], dtype=float)
    assert np.array_equal(st.eval_dense(e), expected)


def test_permutation_matrix_permutes_rows():
    P = st.from_dense([[0.0, 1.0], [1.0, 0.0]], name="P")
    M = st.from_dense([[1.0, 2.0], [3.0, 4.0]], name="M")
    e = st.parse("C(i,k) = P(i,j) * M(j,k)", {"P": P, "M": M})
    assert np.array_equal(st.eval_dense(e), np.array([[3.0, 4.0], [1.0, 2.0]]))


def test_oracle_is_format_blind(rng):
    A = random_tensor(rng, (4, 5), "csr", 0.4, "A")
    B = random_tensor(rng, (5, 3), "dcsr", 0.4, "B")
    e1 = st.parse("C(i,k) = A(i,j) * B(j,k)", {"A": A, "B": B})
    e2 = st.parse(
        "C(i,k) = A(i,j) * B(j,k)",
        {"A": st.convert(A, st.coo(4, 5)), "B": st.convert(B, st.csc(5, 3))},
    )
    assert np.array_equal(st.eval_dense(e1), st.eval_dense(e2))


def test_per_term_reduction_scope():
    # The addend without the reduction index is added once, not once per step.
    A = st.from_dense(np.ones((2, 3)), name="A")
    B = st.from_dense(np.ones((3, 2)), name="B")
    C = st.from_dense(np.full((2, 2), 10.0), name="C")
    e = st.parse("D(i,j) = A(i,k) * B(k,j) + C(i,j)", {"A": A, "B": B, "C": C})
    assert np.array_equal(st.eval_dense(e), np.full((2, 2), 13.0))
