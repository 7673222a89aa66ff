import json

import numpy as np
import pytest

import gkeb

HEAT = {
    "problem": {"name": "heat", "n": 64},
    "k": 12,
    "theta0": [1e-5, 1.0, 0.1],
    "monitor": {"k_max": 15, "n_mc": 5},
    "seed": 5,
}


def dense_objective(A, d, theta, h):
    # Exponential kernel (nu = 1/2) on cell centres, flat hyperprior.
    x = (np.arange(A.shape[1]) + 0.5) * h
    Q = theta[1] ** 2 * np.exp(-np.abs(x[:, None] - x[None, :]) / theta[2])
    Z = A @ Q @ A.T + theta[0] * np.eye(A.shape[0])
    _, logdet = np.linalg.slogdet(Z)
    return 0.5 * logdet + 0.5 * d @ np.linalg.solve(Z, d)


@pytest.fixture
def dense_model():
    rng = np.random.default_rng(3)
    A = rng.standard_normal((20, 16))
    d = rng.standard_normal(20)
    return A, d, gkeb.Model(A, d, shape=(16, 1), spacing=(1 / 16, 1.0), nu=0.5, backend="dense")


def test_exact_objective_matches_numpy(dense_model):
    A, d, model = dense_model
    theta = np.array([0.3, 1.2, 0.25])
    value, grad = model.objective_exact(theta)
    assert value == pytest.approx(dense_objective(A, d, theta, 1 / 16), rel=1e-10)
    assert grad.shape == (3,)


def test_gengk_exact_at_full_rank(dense_model):
    _, _, model = dense_model
    theta = np.array([0.3, 1.2, 0.25])
    value, grad = model.objective_gengk(theta, 16)
    ref_value, ref_grad = model.objective_exact(theta)
    assert value == pytest.approx(ref_value, rel=1e-8)
    np.testing.assert_allclose(grad, ref_grad, rtol=1e-8)


def test_bidiagonalization_relations(dense_model):
    A, d, model = dense_model
    theta = np.array([0.3, 1.2, 0.25])
    f = model.bidiagonalize(theta, 6)
    k = f["k"]
    assert k == 6
    np.testing.assert_allclose(A @ f["QV"][:, :k], f["U"] @ f["B"], atol=1e-10)
    np.testing.assert_allclose(f["U"].T @ f["U"] / theta[0], np.eye(k + 1), atol=1e-10)
    np.testing.assert_allclose(f["U"][:, 0] * f["betas"][0], d, atol=1e-10)


def test_heat_estimate_and_map():
    model = gkeb.Model.from_config(json.dumps(HEAT))
    assert (model.m, model.n) == (64, 64)
    result = model.estimate(np.array(HEAT["theta0"]), k=12)
    assert result["converged"]
    theta = result["theta"]
    assert np.all(theta > 0)
    re = gkeb.relative_error(model.s_true, model.map(theta, 12))
    assert 0.0 < re < 0.5


def test_monitor_shapes():
    model = gkeb.Model.from_config(json.dumps(HEAT))
    out = model.monitor(np.array([1e-6, 0.25, 0.06]), k_max=10, n_mc=5, seed=1)
    assert out["xi_hat"].shape == (10,)
    assert np.all(out["err_mc"] >= 0)


def test_run_command_is_deterministic():
    a = gkeb.run_command("estimate", json.dumps(HEAT))
    b = gkeb.run_command("estimate", json.dumps(HEAT))
    assert set(a) == {"iterates.csv", "reconstruction.csv", "theta_star.json"}
    assert a == b
    assert json.loads(a["theta_star.json"])["command"] == "estimate"


def test_invalid_input_raises():
    with pytest.raises(ValueError):
        gkeb.run_command("estimate", json.dumps({**HEAT, "bogus": 1}))
    with pytest.raises(ValueError):
        gkeb.Model(np.ones((3, 4)), np.ones(3), shape=(5, 1), spacing=(0.2, 1.0))
