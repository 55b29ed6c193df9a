import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from instances import SHAPES, random_y0
from panelcf.core import (
    Blocks,
    PanelData,
    energy_rank,
    hat_matrices,
    load_panel,
    panel_from_matrix,
    panel_to_rows,
    pseudoinverse,
    rank_k_truncate,
    split_blocks,
    svd_decompose,
    trace_inv_sq,
    twice_center,
)
from panelcf.errors import (
    DimensionMismatch,
    DuplicateCell,
    KOutOfRange,
    MissingCell,
    NonFiniteInput,
    PeriodBeforeTreatment,
    T0OutOfRange,
    UnknownTreatedUnit,
)

TOY = "unit,time,value\nA,1,1.0\nA,2,2.0\nB,1,3.0\nB,2,4.0\n"

finite = st.one_of(st.just(0.0), st.floats(1e-3, 10), st.floats(-10, -1e-3))
matrices = st.tuples(st.integers(1, 7), st.integers(1, 7)).flatmap(
    lambda s: arrays(np.float64, s, elements=finite)
)


# loading ---------------------------------------------------------------------


def test_load_toy_puts_treated_last():
    p = load_panel(io.StringIO(TOY), "A", 1)
    assert p.outcomes.shape == (2, 2)
    assert p.unit_labels == ("B", "A")
    assert p.treated_unit == 1
    np.testing.assert_array_equal(p.outcomes, [[3, 4], [1, 2]])


def test_load_sorts_times_numerically():
    text = "unit,time,value\nA,10,1\nA,9,2\nB,10,3\nB,9,4\n"
    p = load_panel(io.StringIO(text), "B", 1)
    assert p.time_labels == ("9", "10")
    np.testing.assert_array_equal(p.outcomes[-1], [4, 3])


def test_load_custom_columns_and_delimiter():
    text = "s;y;v\nA;1;1\nA;2;2\nB;1;3\nB;2;4\n"
    p = load_panel(io.StringIO(text), "B", 1, "s", "y", "v", ";")
    assert p.treated_label == "B"


@pytest.mark.parametrize(
    "text,err",
    [
        ("unit,time,value\nA,1,1\nA,2,2\nB,1,3\n", MissingCell),
        (TOY + "A,1,5.0\n", DuplicateCell),
    ],
)
def test_load_malformed(text, err):
    with pytest.raises(err):
        load_panel(io.StringIO(text), "A", 1)


def test_unknown_treated_and_t0_range():
    with pytest.raises(UnknownTreatedUnit):
        load_panel(io.StringIO(TOY), "Z", 1)
    for t0 in (0, 2):
        with pytest.raises(T0OutOfRange):
            load_panel(io.StringIO(TOY), "A", t0)


def test_missing_control_value_rejected():
    text = "unit,time,value\nA,1,1\nA,2,2\nB,1,\nB,2,4\n"
    with pytest.raises(NonFiniteInput):
        load_panel(io.StringIO(text), "A", 1)


def test_treated_post_value_may_be_missing():
    text = "unit,time,value\nA,1,1\nA,2,\nB,1,3\nB,2,4\n"
    p = load_panel(io.StringIO(text), "A", 1)
    assert np.isnan(p.outcomes[-1, 1])


def test_california_shape(california):
    assert (california.n_units, california.n_times) == (39, 31)
    assert california.treated_label == "California"
    assert california.time_labels[california.t0] == "1988"


def test_rows_roundtrip():
    p = load_panel(io.StringIO(TOY), "A", 1)
    text = "unit,time,value\n" + "".join(f"{u},{t},{v}\n" for u, t, v in panel_to_rows(p))
    q = load_panel(io.StringIO(text), "A", 1)
    np.testing.assert_array_equal(p.outcomes, q.outcomes)


def test_panel_invariants():
    with pytest.raises(DimensionMismatch):
        PanelData(np.ones((1, 3)), ("a",), ("1", "2", "3"), 0, 1)
    with pytest.raises(DimensionMismatch):
        PanelData(np.ones((2, 3)), ("a", "b"), ("1", "2"), 0, 1)


# blocks ----------------------------------------------------------------------


def test_split_blocks_shapes(california):
    b = split_blocks(california, california.t0)
    assert b.y_n.shape == (18,)
    assert b.y0.shape == (38, 18)
    assert b.y_t.shape == (38,)
    np.testing.assert_array_equal(b.y0[:, 0], california.outcomes[:-1, 0])


def test_split_blocks_before_treatment(california):
    with pytest.raises(PeriodBeforeTreatment):
        split_blocks(california, california.t0 - 1)


def test_blocks_dimension_check():
    with pytest.raises(DimensionMismatch):
        Blocks(np.ones(3), np.ones((2, 2)), np.ones(2))


def test_blocks_are_read_only():
    b = Blocks(np.ones(2), np.eye(2), np.ones(2))
    with pytest.raises(ValueError):
        b.y0[0, 0] = 5.0


# spectral primitives -----------------------------------------------------------


def test_svd_identity():
    c = svd_decompose(np.eye(3))
    assert c.rank == 3
    np.testing.assert_allclose(c.s, 1.0)


def test_svd_rank_one():
    u = np.array([3.0, 4.0]) / 5
    v = np.array([1.0, 2.0, 2.0]) / 3
    c = svd_decompose(np.outer(u, v))
    assert c.rank == 1
    assert c.s[0] == pytest.approx(1.0)


def test_svd_zero_matrix():
    c = svd_decompose(np.zeros((3, 2)))
    assert c.rank == 0
    np.testing.assert_array_equal(pseudoinverse(c), np.zeros((2, 3)))


def test_svd_rejects_nonfinite():
    with pytest.raises(NonFiniteInput):
        svd_decompose(np.array([[1.0, np.inf]]))


def test_california_rank_matches_gram_eigenvalues(california):
    y0 = split_blocks(california, california.t0).y0
    ev = np.linalg.eigvalsh(y0.T @ y0)
    # squared cutoff of the singular-value rule
    gram_rank = int(np.sum(ev > (1e-10) ** 2 * ev.max()))
    assert svd_decompose(y0).rank == gram_rank == 18


@settings(max_examples=60, deadline=None)
@given(matrices)
def test_cache_invariants(y0):
    c = svd_decompose(y0)
    r = c.rank
    np.testing.assert_allclose(c.u.T @ c.u, np.eye(r), atol=1e-10)
    np.testing.assert_allclose(c.v.T @ c.v, np.eye(r), atol=1e-10)
    assert np.all(c.s > 0) and np.all(np.diff(c.s) <= 0)
    err = np.linalg.norm(c.reconstruct() - y0)
    assert err <= 1e-8 * max(1.0, np.linalg.norm(y0))


@settings(max_examples=60, deadline=None)
@given(matrices)
def test_moore_penrose_identities(a):
    p = pseudoinverse(svd_decompose(a))
    scale = max(1.0, np.linalg.norm(a) * np.linalg.norm(p)) ** 2
    tol = 1e-8 * scale
    assert np.abs(a @ p @ a - a).max() <= tol * max(1.0, np.abs(a).max())
    assert np.abs(p @ a @ p - p).max() <= tol * max(1.0, np.abs(p).max())
    assert np.abs((a @ p).T - a @ p).max() <= tol
    assert np.abs((p @ a).T - p @ a).max() <= tol


def test_pinv_normal_equations(rng):
    a = rng.standard_normal((4, 3))
    np.testing.assert_allclose(pseudoinverse(svd_decompose(a)), np.linalg.solve(a.T @ a, a.T), atol=1e-9)


def test_pinv_transpose_consistency(rng):
    a = rng.standard_normal((5, 3))
    c = svd_decompose(a)
    np.testing.assert_allclose(pseudoinverse(c).T, (c.u / c.s) @ c.v.T, atol=1e-14)
    np.testing.assert_allclose(pseudoinverse(svd_decompose(a.T)), pseudoinverse(c).T, atol=1e-12)


def test_truncate_full_is_identity(rng):
    c = svd_decompose(rng.standard_normal((4, 3)))
    t = rank_k_truncate(c, c.rank)
    np.testing.assert_array_equal(t.s, c.s)


def test_truncate_diagonal():
    c = rank_k_truncate(svd_decompose(np.diag([3.0, 2.0, 1.0])), 1)
    np.testing.assert_allclose(c.s, [3.0])
    expected = np.zeros((3, 3))
    expected[0, 0] = 3.0
    np.testing.assert_allclose(c.reconstruct(), expected, atol=1e-12)


@pytest.mark.parametrize("k", [0, 4])
def test_truncate_range(k):
    with pytest.raises(KOutOfRange):
        rank_k_truncate(svd_decompose(np.eye(3)), k)


def test_eckart_young(california):
    y0 = split_blocks(california, california.t0).y0
    c = svd_decompose(y0)
    err = np.linalg.norm(y0 - rank_k_truncate(c, 3).reconstruct())
    assert err == pytest.approx(np.sqrt(np.sum(c.s[3:] ** 2)), rel=1e-9)


@pytest.mark.parametrize("shape", SHAPES)
def test_projector_laws(rng, shape):
    y0 = random_y0(rng, shape)
    c = svd_decompose(y0)
    for h in hat_matrices(c):
        np.testing.assert_allclose(h @ h, h, atol=1e-10)
        np.testing.assert_allclose(h, h.T, atol=1e-10)
        assert np.trace(h) == pytest.approx(c.rank, abs=1e-8)
        d = np.diag(h)
        off = (h**2).sum(axis=1) - d**2
        np.testing.assert_allclose(off, d * (1 - d), atol=1e-10)


def test_hats_identity_and_rank_one():
    hu, hv = hat_matrices(svd_decompose(np.eye(3)))
    np.testing.assert_allclose(hu, np.eye(3))
    np.testing.assert_allclose(hv, np.eye(3))
    u = np.array([1.0, 0.0, 0.0])
    hu, _ = hat_matrices(svd_decompose(np.outer(u, [1.0, 1.0])))
    np.testing.assert_allclose(hu, np.outer(u, u), atol=1e-12)


@pytest.mark.parametrize("shape", SHAPES)
def test_trace_identity(rng, shape):
    y0 = random_y0(rng, shape)
    c = svd_decompose(y0)
    p = np.linalg.pinv(y0, rcond=1e-10)
    assert trace_inv_sq(c) == pytest.approx(np.trace(p @ p.T), rel=1e-8)


# energy rule -------------------------------------------------------------------


@pytest.mark.parametrize(
    "s,threshold,r",
    [
        ([3.0, 1.0], 0.9, 1),
        ([3.0, 1.0], 0.95, 2),
        ([1.0, 1.0, 1.0, 1.0], 0.5, 2),
        ([1.0, 1.0, 1.0], 1.0, 3),
        ([], 0.9, 0),
    ],
)
def test_energy_rank(s, threshold, r):
    assert energy_rank(np.array(s), threshold) == r


def test_energy_full_threshold_is_numerical_rank(california):
    c = svd_decompose(split_blocks(california, california.t0).y0)
    assert energy_rank(c.s, 1.0) == c.rank
    assert energy_rank(c.s, 0.999) == 3


# centering ---------------------------------------------------------------------


def test_center_constant():
    b = Blocks(np.full(3, 2.0), np.full((4, 3), 5.0), np.full(4, 7.0))
    c = twice_center(b)
    np.testing.assert_allclose(c.y0_centered, 0.0, atol=1e-12)
    np.testing.assert_allclose(c.row_means, 5.0)
    np.testing.assert_allclose(c.col_means, 5.0)
    assert c.time_intercept == 7.0 and c.unit_intercept == 2.0


def test_center_fixed_point_and_idempotent(california):
    b = split_blocks(california, california.t0)
    c = twice_center(b)
    np.testing.assert_allclose(c.y0_centered.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(c.y0_centered.mean(axis=1), 0.0, atol=1e-12)
    again = twice_center(Blocks(b.y_n, c.y0_centered, b.y_t))
    np.testing.assert_allclose(again.y0_centered, c.y0_centered, atol=1e-12)


def test_panel_from_matrix_defaults():
    p = panel_from_matrix(np.arange(6.0).reshape(2, 3), 2)
    assert p.treated_unit == 1 and p.unit_labels == ("u0", "u1")
