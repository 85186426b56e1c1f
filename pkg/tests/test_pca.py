import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import jacobi_eigen, sample_covariance
from oranfault.pca import PcaError, PcaModel, fit_pca
from oranfault.rng import derive


def random_data(seed, n=50, d=8):
    rng = derive(seed, "pca")
    return rng.normal(size=(n, d)) @ rng.normal(size=(d, d))


def test_matches_jacobi_oracle():
    x = random_data(0)
    model = fit_pca(x, r=3)
    evals, evecs = jacobi_eigen(sample_covariance(x))
    assert np.max(np.abs(model.explained_variance - evals[:3])) < 1e-8
    for i in range(3):
        axis = evecs[:, i]
        sign = np.sign(axis @ model.components[i])
        assert np.max(np.abs(model.components[i] - sign * axis)) < 1e-8
    assert model.total_variance == pytest.approx(evals.sum(), rel=1e-10)


def test_rank_one_data():
    t = derive(1, "t").normal(size=40)
    x = np.outer(t, [1.0, -2.0, 0.5]) + [3.0, 1.0, -1.0]
    model = fit_pca(x, r=1)
    assert abs(model.explained_variance_ratio[0] - 1.0) < 1e-10


def test_full_rank_reconstruction():
    x = random_data(2, n=30, d=6)
    model = fit_pca(x, r=6)
    assert np.max(np.abs(model.inverse_transform(model.transform(x)) - x)) < 1e-8


def test_transform_examples():
    model = fit_pca(random_data(3), r=4)
    assert np.allclose(model.transform(model.mean), 0, atol=1e-12)
    e1 = model.transform(model.mean + model.components[0])
    assert np.allclose(e1, [1, 0, 0, 0], atol=1e-10)
    assert np.array_equal(model.inverse_transform(np.zeros(4)), model.mean)


def test_sign_convention():
    model = fit_pca(random_data(4), r=5)
    for row in model.components:
        assert row[np.argmax(np.abs(row))] > 0


def test_discarded_energy_matches_residual():
    x = random_data(5)
    model = fit_pca(x, r=3)
    evals, _ = jacobi_eigen(sample_covariance(x))
    resid = x - model.inverse_transform(model.transform(x))
    per_row = np.sum(resid**2) / (x.shape[0] - 1)
    assert per_row == pytest.approx(evals[3:].sum(), rel=1e-8)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 7))
def test_projection_properties(seed, r):
    x = random_data(seed)
    model = fit_pca(x, r=r)
    gram = model.components @ model.components.T
    assert np.max(np.abs(gram - np.eye(r))) < 1e-8
    assert np.all(np.diff(model.explained_variance) <= 0)
    z = derive(seed, "z").normal(size=(5, r))
    assert np.max(np.abs(model.transform(model.inverse_transform(z)) - z)) < 1e-10
    once = model.inverse_transform(model.transform(x))
    twice = model.inverse_transform(model.transform(once))
    assert np.max(np.abs(twice - once)) < 1e-8
    proj_var = np.var(model.transform(x), axis=0, ddof=1).sum()
    assert proj_var <= model.total_variance * (1 + 1e-12)


def test_persistence(tmp_path):
    model = fit_pca(random_data(6), r=3)
    model.save(tmp_path / "pca.csv")
    back = PcaModel.load(tmp_path / "pca.csv")
    assert np.array_equal(back.mean, model.mean)
    assert np.array_equal(back.components, model.components)
    assert np.array_equal(back.explained_variance, model.explained_variance)
    lines = (tmp_path / "pca.csv").read_text().splitlines()
    assert [line.split(",")[0] for line in lines] == [
        "pca", "mean", "component0", "component1", "component2", "explained_variance"]


def test_load_rejects_non_orthonormal(tmp_path):
    model = fit_pca(random_data(7), r=2)
    model.save(tmp_path / "pca.csv")
    lines = (tmp_path / "pca.csv").read_text().splitlines()
    lines[2] = "component0," + ",".join(["1.0"] * model.n_features)
    (tmp_path / "bad.csv").write_text("\n".join(lines) + "\n")
    with pytest.raises(PcaError, match="orthonormal"):
        PcaModel.load(tmp_path / "bad.csv")


def test_errors():
    x = random_data(8, n=5, d=3)
    with pytest.raises(PcaError):
        fit_pca(x[:1], r=1)
    with pytest.raises(PcaError):
        fit_pca(x, r=0)
    with pytest.raises(PcaError):
        fit_pca(x, r=4)
    with pytest.raises(PcaError):
        fit_pca(random_data(8, n=3, d=5), r=3)
    model = fit_pca(x, r=2)
    with pytest.raises(PcaError):
        model.transform(np.zeros(4))
    with pytest.raises(PcaError):
        model.inverse_transform(np.zeros(3))


def test_deterministic():
    x = random_data(9)
    a, b = fit_pca(x, r=4), fit_pca(x.copy(), r=4)
    assert np.array_equal(a.components, b.components)
