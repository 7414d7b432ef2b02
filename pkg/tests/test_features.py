"""PCA and univariate ranking, checked against independent oracles.

The PCA oracle is a cyclic Jacobi eigensolver written here from the rotation
formulas; it shares no code path with the library's eigh-based fit.
"""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from rulforge.errors import (
    ColumnMismatchError,
    KOutOfRangeError,
    NComponentsTooLargeError,
    TooFewRowsError,
)
from rulforge.frame import FeatureFrame
from rulforge.features import (
    F_SENTINEL,
    PC1_COLUMN,
    append_pc1,
    correlation_matrix,
    default_k,
    f_scores,
    pca_fit,
    pca_reconstruct,
    pca_transform,
    select_k_best,
)


def _frame(values, columns=None):
    values = np.asarray(values, dtype=np.float64)
    n = values.shape[0]
    return FeatureFrame(
        columns=columns or tuple(f"c{i}" for i in range(values.shape[1])),
        values=values,
        units=np.ones(n, dtype=np.int64),
        cycles=np.arange(1, n + 1),
    )


def jacobi_eigh(a: np.ndarray, sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi diagonalization of a symmetric matrix."""
    a = a.copy()
    n = a.shape[0]
    v = np.eye(n)
    for _ in range(sweeps):
        off = np.sum(a * a) - np.sum(np.diag(a) ** 2)
        if off < 1e-24:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if a[p, q] == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * a[p, q])
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rot = np.eye(n)
                rot[p, p] = rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
                v = v @ rot
    return np.diag(a).copy(), v


# --------------------------------------------------------------------- pca

def test_pca_eigenvalues_match_jacobi():
    rng = np.random.default_rng(11)
    x = rng.normal(size=(60, 5)) @ rng.normal(size=(5, 5))
    frame = _frame(x)
    model = pca_fit(frame)

    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / x.shape[0]
    jac_vals, _ = jacobi_eigh(cov)
    assert_allclose(model.eigenvalues, np.sort(jac_vals)[::-1], rtol=0, atol=1e-8)


def test_pca_components_match_jacobi_vectors():
    rng = np.random.default_rng(12)
    x = rng.normal(size=(80, 4)) * [3.0, 1.0, 0.5, 0.1]
    frame = _frame(x)
    model = pca_fit(frame)
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / x.shape[0]
    jac_vals, jac_vecs = jacobi_eigh(cov)
    order = np.argsort(jac_vals)[::-1]
    for j, col in enumerate(order):
        vec = jac_vecs[:, col]
        anchor = np.argmax(np.abs(vec))
        if vec[anchor] < 0:
            vec = -vec
        assert_allclose(model.components[:, j], vec, atol=1e-8)


def test_pca_known_2d_diagonal():
    # variance 4 along x, 1 along y, no correlation: axes are the components
    rng = np.random.default_rng(13)
    x = np.column_stack([rng.normal(0, 2.0, 4000), rng.normal(0, 1.0, 4000)])
    model = pca_fit(_frame(x))
    assert abs(model.components[0, 0]) > 0.99  # first component ~ x axis
    assert model.eigenvalues[0] > model.eigenvalues[1]
    assert 0.75 < model.explained_variance_ratio[0] < 0.85  # 4/5 in the limit


def test_pca_orthonormal_columns():
    rng = np.random.default_rng(14)
    model = pca_fit(_frame(rng.normal(size=(30, 6))))
    gram = model.components.T @ model.components
    assert_allclose(gram, np.eye(6), atol=1e-12)


def test_pca_sign_convention():
    rng = np.random.default_rng(15)
    model = pca_fit(_frame(rng.normal(size=(30, 5))))
    for j in range(model.components.shape[1]):
        anchor = np.argmax(np.abs(model.components[:, j]))
        assert model.components[anchor, j] > 0


def test_pca_ratios_sum_to_one_full_rank():
    rng = np.random.default_rng(16)
    model = pca_fit(_frame(rng.normal(size=(40, 5))))
    assert_allclose(model.explained_variance_ratio.sum(), 1.0, rtol=1e-12)
    assert np.all(np.diff(model.eigenvalues) <= 1e-12)  # descending


def test_pca_truncated_ratios_below_one():
    rng = np.random.default_rng(17)
    model = pca_fit(_frame(rng.normal(size=(40, 5))), n_components=2)
    assert model.components.shape == (5, 2)
    assert model.explained_variance_ratio.sum() < 1.0


def test_pca_transform_decorrelates():
    rng = np.random.default_rng(18)
    x = rng.normal(size=(500, 3)) @ np.array([[1.0, 0.5, 0.0], [0.0, 1.0, 0.3], [0.0, 0.0, 1.0]])
    frame = _frame(x)
    model = pca_fit(frame)
    proj = pca_transform(model, frame)
    assert proj.columns == ("pc_1", "pc_2", "pc_3")
    cov = np.cov(proj.values.T, bias=True)
    off = cov - np.diag(np.diag(cov))
    assert np.abs(off).max() < 1e-10
    assert_allclose(np.diag(cov), model.eigenvalues, rtol=1e-10)


def test_pca_reconstruction_full_rank_exact():
    rng = np.random.default_rng(19)
    x = rng.normal(size=(25, 4))
    frame = _frame(x)
    model = pca_fit(frame)
    proj = pca_transform(model, frame)
    assert_allclose(pca_reconstruct(model, proj.values), x, atol=1e-10)


def test_pca_reconstruction_error_shrinks_with_k():
    rng = np.random.default_rng(20)
    x = rng.normal(size=(100, 6)) @ rng.normal(size=(6, 6))
    frame = _frame(x)
    errors = []
    for k in (1, 3, 6):
        model = pca_fit(frame, n_components=k)
        proj = pca_transform(model, frame)
        recon = pca_reconstruct(model, proj.values)
        errors.append(float(np.sum((recon - x) ** 2)))
    assert errors[0] > errors[1] > errors[2]
    assert errors[2] < 1e-18


def test_pca_component_count_validation():
    frame = _frame(np.random.default_rng(21).normal(size=(10, 3)))
    with pytest.raises(NComponentsTooLargeError):
        pca_fit(frame, n_components=4)
    with pytest.raises(NComponentsTooLargeError):
        pca_fit(frame, n_components=0)
    with pytest.raises(TooFewRowsError):
        pca_fit(_frame(np.ones((1, 3))))


def test_pca_column_mismatch():
    rng = np.random.default_rng(22)
    model = pca_fit(_frame(rng.normal(size=(10, 2))))
    other = _frame(rng.normal(size=(5, 2)), columns=("x", "y"))
    with pytest.raises(ColumnMismatchError):
        pca_transform(model, other)


def test_append_pc1():
    rng = np.random.default_rng(23)
    x = rng.normal(size=(30, 3))
    frame = _frame(x)
    model = pca_fit(frame)
    out = append_pc1(frame, model)
    assert out.columns == frame.columns + (PC1_COLUMN,)
    expected = (x - model.mean) @ model.components[:, 0]
    assert_allclose(out.values[:, -1], expected, rtol=0, atol=0)


# ----------------------------------------------------------------- f scores

def test_f_score_textbook_value():
    # r known analytically for y = x plus one bent point
    x = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
    y = np.array([1.0, 2.0, 3.0, 4.0, 6.0])
    frame = _frame(x[:, None], columns=("x",))
    ranking = f_scores(frame, y)
    xc = x - x.mean()
    yc = y - y.mean()
    r2 = (xc @ yc) ** 2 / ((xc @ xc) * (yc @ yc))
    expected = r2 * 3 / (1 - r2)
    assert_allclose(ranking.scores[0], expected, rtol=1e-12)


def test_f_score_perfect_line_hits_sentinel():
    x = np.linspace(0, 1, 20)
    frame = _frame(np.column_stack([x, x * -3.0 + 7.0]), columns=("up", "down"))
    ranking = f_scores(frame, x.copy())
    assert ranking.scores[0] == F_SENTINEL
    assert ranking.scores[1] == F_SENTINEL  # negative slope is still r^2 == 1


def test_f_score_zero_variance_column():
    rng = np.random.default_rng(24)
    y = rng.normal(size=30)
    frame = _frame(np.column_stack([np.full(30, 5.0), y]), columns=("flat", "signal"))
    ranking = f_scores(frame, y)
    assert ranking.scores[0] == 0.0
    assert ranking.scores[1] == F_SENTINEL
    assert ranking.ranked_names() == ("signal", "flat")


def test_f_score_constant_target():
    frame = _frame(np.random.default_rng(25).normal(size=(10, 2)))
    ranking = f_scores(frame, np.full(10, 3.0))
    assert_array_equal(ranking.scores, 0.0)


def test_f_score_independent_noise_small():
    rng = np.random.default_rng(26)
    frame = _frame(rng.normal(size=(5000, 1)))
    ranking = f_scores(frame, rng.normal(size=5000))
    assert ranking.scores[0] < 10.0  # F ~ chi2-ish, tiny for independent noise


def test_f_score_monotone_in_correlation():
    rng = np.random.default_rng(27)
    n = 2000
    y = rng.normal(size=n)
    cols, names = [], []
    for i, rho in enumerate((0.2, 0.5, 0.8)):
        noise = rng.normal(size=n)
        cols.append(rho * y + np.sqrt(1 - rho * rho) * noise)
        names.append(f"rho{i}")
    ranking = f_scores(_frame(np.column_stack(cols), columns=tuple(names)), y)
    assert ranking.scores[0] < ranking.scores[1] < ranking.scores[2]
    assert ranking.ranked_names() == ("rho2", "rho1", "rho0")


def test_f_score_tie_breaks_to_lower_index():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    frame = _frame(np.column_stack([x, x]), columns=("first", "second"))
    ranking = f_scores(frame, np.array([1.0, 1.0, 2.0, 2.0]))
    assert ranking.scores[0] == ranking.scores[1]
    assert tuple(ranking.order) == (0, 1)


def test_f_score_row_minimum():
    with pytest.raises(TooFewRowsError):
        f_scores(_frame(np.ones((2, 1))), np.array([1.0, 2.0]))


def test_default_k_and_selection():
    assert default_k(17) == 15
    assert default_k(2) == 1
    assert default_k(1) == 1
    rng = np.random.default_rng(28)
    y = rng.normal(size=100)
    cols = np.column_stack([y + rng.normal(size=100) * s for s in (0.1, 1.0, 10.0)])
    ranking = f_scores(_frame(cols, columns=("a", "b", "c")), y)
    assert select_k_best(ranking, 2) == ("a", "b")
    with pytest.raises(KOutOfRangeError):
        select_k_best(ranking, 0)
    with pytest.raises(KOutOfRangeError):
        select_k_best(ranking, 4)


# -------------------------------------------------------------- correlation

def test_correlation_matrix_properties():
    rng = np.random.default_rng(29)
    x = rng.normal(size=(200, 4))
    x[:, 1] = x[:, 0] * 2.0 + rng.normal(size=200) * 0.01
    corr = correlation_matrix(_frame(x))
    assert corr.shape == (4, 4)
    assert_array_equal(np.diag(corr), 1.0)
    assert_allclose(corr, corr.T, rtol=0, atol=0)
    assert np.abs(corr).max() <= 1.0
    assert corr[0, 1] > 0.99


def test_correlation_matrix_constant_column_zero():
    x = np.column_stack([np.arange(10.0), np.full(10, 2.0)])
    corr = correlation_matrix(_frame(x))
    assert corr[0, 1] == 0.0 and corr[1, 0] == 0.0
    assert corr[1, 1] == 1.0  # diagonal pinned even for flat columns
