import json
import math

import numpy as np
import pytest
from scipy.optimize import linprog

import ensot


def double_integrator():
    return ensot.LinearSystem(np.array([[0.0, 1.0], [0.0, 0.0]]), np.array([[0.0], [1.0]]),
                              np.array([[1.0, 0.0]]))


def test_gramian_closed_form():
    sys = double_integrator()
    w = ensot.controllability_gramian(sys, 1.0, 0.0)
    np.testing.assert_allclose(w, [[1 / 3, 1 / 2], [1 / 2, 1.0]], atol=1e-9)


def test_min_energy_cost_scalar():
    a = -0.7
    sys = ensot.LinearSystem(np.array([[a]]), np.array([[1.0]]))
    x0, x1 = np.array([0.3]), np.array([1.1])
    w = (math.exp(2 * a) - 1) / (2 * a)
    expected = (x1[0] - math.exp(a) * x0[0]) ** 2 / w
    assert ensot.min_energy_cost(sys, x0, x1) == pytest.approx(expected, rel=1e-8)


def test_kantorovich_matches_highs():
    rng = np.random.default_rng(3)
    for _ in range(20):
        n, m = rng.integers(2, 7, size=2)
        xs, ys = rng.normal(size=(1, n)), rng.normal(size=(1, m))
        a, b = rng.uniform(0.1, 1, n), rng.uniform(0.1, 1, m)
        a, b = a / a.sum(), b / b.sum()
        cost = (xs.T - ys) ** 2
        res = ensot.solve_kantorovich(xs, a, ys, b, cost)
        a_eq = np.vstack([np.kron(np.eye(n), np.ones(m)), np.kron(np.ones(n), np.eye(m))])
        ref = linprog(cost.ravel(), A_eq=a_eq, b_eq=np.concatenate([a, b]), method="highs")
        assert res["value"] == pytest.approx(ref.fun, abs=1e-10)
        np.testing.assert_allclose(res["plan"].sum(axis=1), a, atol=1e-12)


def test_transformed_w2_is_twice_lqr_value():
    sys = ensot.LinearSystem(np.array([[-0.4]]), np.array([[1.0]]))
    xs, ys = np.array([[-1.0, 0.5, 2.0]]), np.array([[0.0, 1.0]])
    a, b = np.array([0.2, 0.3, 0.5]), np.array([0.4, 0.6])
    cost = ensot.lqr_cost_matrix(sys, 0.0, 1.0, xs, ys)
    lqr = ensot.solve_kantorovich(xs, a, ys, b, cost)["value"]
    assert ensot.transformed_w2(sys, xs, a, ys, b) == pytest.approx(2 * lqr, rel=1e-10)


def bins(nodes, atoms):
    # Voronoi cell index with ties to the lowest atom.
    d = np.abs(nodes[:, None] - atoms[None, :])
    return np.argmin(d, axis=1)


def tracking_lp(axis, outputs, cost, fixed):
    n = len(axis)
    t_count = len(outputs) - 1
    nplan = n * n
    nvar = t_count * nplan + (t_count + 1) * n
    c = np.zeros(nvar)
    for k in range(t_count):
        c[k * nplan:(k + 1) * nplan] = cost.ravel()
    mhat = lambda k: t_count * nplan + k * n
    rows, rhs = [], []

    def add(coeffs, value):
        row = np.zeros(nvar)
        for j, v in coeffs:
            row[j] += v
        rows.append(row)
        rhs.append(value)

    for k in range(t_count):
        for i in range(n):
            add([(k * nplan + i * n + j, 1.0) for j in range(n)] + [(mhat(k) + i, -1.0)], 0.0)
            add([(k * nplan + j * n + i, 1.0) for j in range(n)] + [(mhat(k + 1) + i, -1.0)],
                0.0)
    for k, (atoms, weights) in enumerate(outputs):
        cell = bins(axis, atoms)
        for q, w in enumerate(weights):
            members = np.flatnonzero(cell == q)
            if fixed:
                for i in members:
                    add([(mhat(k) + i, 1.0)], w / len(members))
            else:
                add([(mhat(k) + i, 1.0) for i in members], w)
    ref = linprog(c, A_eq=np.array(rows), b_eq=np.array(rhs), method="highs")
    assert ref.status == 0
    return ref.fun


def test_five_node_tracking_matches_highs():
    rng = np.random.default_rng(11)
    a = -0.4
    sys = ensot.LinearSystem(np.array([[a]]), np.array([[1.0]]))
    axis = np.array([-2.0, -0.5, 0.4, 1.3, 2.5])
    w = (math.exp(2 * a) - 1) / (2 * a)
    cost = 0.5 * (axis[None, :] - math.exp(a) * axis[:, None]) ** 2 / w
    for trial in range(10):
        outputs = []
        for k in range(3):
            atoms = np.array([-1.0, 1.0]) if (trial + k) % 2 == 0 else np.array([-1.5, 0.2, 1.9])
            weights = rng.uniform(0.05, 1.0, len(atoms))
            outputs.append((atoms, weights / weights.sum()))
        pairs = [(at[None, :], wt) for at, wt in outputs]
        for mode, fixed in (("coupled", False), ("fixed_marginal", True)):
            sol = ensot.solve_tracking(sys, [axis], pairs, mode)
            assert sol["objective"] == pytest.approx(tracking_lp(axis, outputs, cost, fixed),
                                                     abs=1e-8)


def test_track_gaussian_endpoints():
    sys = double_integrator()
    means = [np.array([0.0]), np.array([1.0])]
    covs = [np.array([[1.0]]), np.array([[0.5]])]
    track = ensot.track_gaussian(sys, means, covs)
    c = np.array([[1.0, 0.0]])
    np.testing.assert_allclose(c @ track["means"][0], means[0], atol=1e-9)
    np.testing.assert_allclose(c @ track["means"][-1], means[1], atol=1e-9)
    np.testing.assert_allclose(c @ track["covariances"][-1] @ c.T, covs[1], atol=1e-8)
    assert len(track["state_means"]) == 2


def test_observability():
    a = np.array([[0.0, 1.0], [0.0, 0.0]])
    assert ensot.ensemble_observable_lti(a, np.array([[1.0, 0.0]]))["observable"]
    report = ensot.ensemble_observable_lti(a, np.array([[0.0, 1.0]]))
    assert not report["observable"]
    assert np.abs(np.array([[0.0, 1.0]]) @ report["witness"]).max() < 1e-12


def test_errors_are_translated():
    with pytest.raises(ensot.Error, match="DimensionMismatch|InvalidArgument"):
        ensot.LinearSystem(np.eye(2), np.ones((3, 1)))


def test_run_cli(tmp_path):
    cfg = {"command": "wasserstein",
           "source": {"atoms": [[0], [1], [3]], "weights": [0.2, 0.5, 0.3]},
           "target": {"atoms": [[1], [2]], "weights": [0.6, 0.4]}, "p": 2}
    code, out, err = ensot.run_cli(json.dumps(cfg), str(tmp_path))
    assert code == 0, err
    assert (tmp_path / "summary.json").exists()
    code, _, err = ensot.run_cli('{"command": "nope"}', str(tmp_path))
    assert code == 2
    assert json.loads(err)["error"]["kind"] == "ConfigError"
