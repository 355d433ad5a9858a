import warnings

import numpy as np
import pytest

from glimark import glm, solver
from glimark.data import DataSet
from glimark.errors import ColumnsExhausted, DataError, DivergenceError
from glimark.glm import BoundaryMeanWarning, Family
from glimark.kernels import (ColumnId, ViewSpec, PartitionManifest, build_blocks, enumerate_views, eval_kernel,
                             linear, polynomial, rbf)
from glimark.solver import AdamConfig, FitConfig, ModelState, Penalty


def make_data(n=10, d=4, family=Family.GAUSSIAN, seed=0, groups=None, kernels=None):
    rng = np.random.default_rng(seed)
    cols = [f"x{i}" for i in range(d)]
    X = rng.normal(size=(n, d))
    eta = X @ rng.normal(size=d) * 0.7
    if family is Family.BINOMIAL:
        y = (rng.random(n) < 1 / (1 + np.exp(-eta))).astype(float)
        y[0], y[1] = 0.0, 1.0
    elif family is Family.POISSON:
        y = rng.poisson(np.exp(0.3 * eta)).astype(float)
    else:
        y = eta + 0.3 * rng.normal(size=n)
    if groups is None:
        groups = {"A": cols[: d // 2], "B": cols[d // 2:]}
    man = PartitionManifest(["top"], groups, {g: 0 for g in groups})
    data = DataSet(X, cols, y=y, family=family, manifest=man)
    views = enumerate_views(man, kernels or [linear()])
    return data, views


def empty_state(prep, cfg, b=0.0):
    return ModelState(family=cfg.family, views=list(prep.blocks.views), view_features=prep.view_features,
                      scaler=prep.scaler, b=b, n_train=prep.blocks.n)


def with_columns(state, prep, order, alpha):
    return solver.replace(state, order=list(order), alpha=np.asarray(alpha, dtype=float),
                          anchors=[prep.blocks.view_features(c.view)[c.anchor] for c in order])


# -- penalty ---------------------------------------------------------------


def test_penalty_examples():
    data, views = make_data(kernels=[linear(), rbf(1.0)])
    cfg = FitConfig(family="gaussian", lam=0.3)
    prep = solver.prepare(data, views, cfg)
    st = empty_state(prep, cfg)
    assert solver.penalty_value(st, prep.blocks, Penalty.RKHS, 0.3) == 0.0
    c1 = ColumnId(view=0, anchor=2)
    st1 = with_columns(st, prep, [c1], [0.7])
    kjj = prep.blocks.block(0)[2, 2]
    assert solver.penalty_value(st1, prep.blocks, Penalty.RKHS, 0.3) == pytest.approx(0.3 * 0.49 * kjj)
    c2 = ColumnId(view=3, anchor=5)
    st2 = with_columns(st, prep, [c1, c2], [0.7, -1.1])
    single2 = 0.3 * 1.21 * prep.blocks.block(3)[5, 5]
    assert solver.penalty_value(st2, prep.blocks, Penalty.RKHS, 0.3) == pytest.approx(0.3 * 0.49 * kjj + single2)
    assert solver.penalty_value(st2, prep.blocks, Penalty.RIDGE, 0.3) == pytest.approx(0.3 * (0.49 + 1.21))


# -- gradients ---------------------------------------------------------------


def central_gradient(fun, x, h=1e-5):
    g = np.empty_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        g[k] = (fun(x + e) - fun(x - e)) / (2 * h)
    return g


@pytest.mark.parametrize("family", list(Family))
@pytest.mark.parametrize("penalty", list(Penalty))
def test_gradient_matches_finite_differences(family, penalty):
    data, views = make_data(family=family, seed=11, kernels=[linear()])
    kb = build_blocks(data, views)
    rng = np.random.default_rng(2)
    alpha = 0.05 * rng.normal(size=kb.n_columns)
    b = 0.2
    lam = 0.05
    ga, gb = solver.gradient(kb, data.y, family, alpha, b, penalty, lam)
    H = lambda th: solver.objective(kb, data.y, family, th[:-1], th[-1], penalty, lam)
    num = central_gradient(H, np.append(alpha, b))
    ana = np.append(ga, gb)
    assert np.max(np.abs(ana - num) / np.maximum(np.abs(num), 1e-4)) < 1e-5


def test_screen_at_null_model_zero_for_constant_column():
    n = 12
    cols = ["one", "x"]
    rng = np.random.default_rng(0)
    X = np.column_stack([np.ones(n), rng.normal(size=n)])
    y = (rng.random(n) < 0.4).astype(float)
    y[:2] = [0, 1]
    man = PartitionManifest(["l"], {"c": ["one"], "x": ["x"]}, {"c": 0, "x": 0})
    data = DataSet(X, cols, y=y, family="binomial", manifest=man)
    views = enumerate_views(man, [linear()])
    cfg = FitConfig(family="binomial", standardize=False)
    prep = solver.prepare(data, views, cfg)
    st = empty_state(prep, cfg, b=glm.link("binomial", y.mean()))
    A = np.zeros(prep.blocks.n_columns)
    ga, _ = solver.gradient(prep.blocks, y, "binomial", A, st.b, Penalty.RKHS, cfg.lam)
    assert np.allclose(ga[:n], 0.0, atol=1e-15)
    cid, g = solver.screen(st, prep.blocks, y, cfg)
    assert cid.view == 1


def test_screen_matches_brute_force():
    data, views = make_data(n=3, d=2, groups={"A": ["x0"], "B": ["x1"]}, kernels=[polynomial(2)])
    y = np.array([1.0, -1.0, 0.0])
    cfg = FitConfig(family="gaussian", lam=0.0)
    prep = solver.prepare(DataSet(data.X, data.columns, y=y, family="gaussian", manifest=data.manifest),
                          views, cfg)
    st = empty_state(prep, cfg, b=0.0)
    K = prep.blocks.dense()
    r = y - 0.0
    brute = [-(1 / 3) * sum(r[i] * K[i, j] for i in range(3)) for j in range(K.shape[1])]
    cid, g = solver.screen(st, prep.blocks, y, cfg)
    j = int(np.argmax(np.abs(brute)))
    assert cid.flat(3) == j
    assert g == pytest.approx(brute[j], rel=1e-12)


def test_screen_tie_goes_to_lowest_index():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(8, 1))
    man = PartitionManifest(["l"], {"A": ["x"], "B": ["x"]}, {"A": 0, "B": 0})
    data = DataSet(X, ["x"], y=X[:, 0] + 0.1, family="gaussian", manifest=man)
    views = enumerate_views(man, [linear()])
    cfg = FitConfig(family="gaussian")
    prep = solver.prepare(data, views, cfg)
    cid, _ = solver.screen(empty_state(prep, cfg), prep.blocks, data.y, cfg)
    assert cid.view == 0


def test_screen_exhaustion():
    data, views = make_data(n=3, d=2, groups={"A": ["x0", "x1"]})
    cfg = FitConfig(family="gaussian")
    prep = solver.prepare(data, views, cfg)
    order = [ColumnId(0, j) for j in range(3)]
    st = with_columns(empty_state(prep, cfg), prep, order, [0.0] * 3)
    with pytest.raises(ColumnsExhausted):
        solver.screen(st, prep.blocks, data.y, cfg)


# -- inner solve ---------------------------------------------------------------


def ridge_closed_form(K, y, lam):
    """Kernel ridge with intercept for (1/2N)||y - Ka - b||^2 + lam a'Ka."""
    n = K.shape[0]
    A = np.zeros((n + 1, n + 1))
    A[:n, :n] = K + 2 * n * lam * np.eye(n)
    A[:n, n] = 1.0
    A[n, :n] = 1.0
    sol = np.linalg.solve(A, np.append(y, 0.0))
    return K @ sol[:n] + sol[n]


@pytest.mark.parametrize("seed", range(3))
def test_inner_solve_matches_kernel_ridge(seed):
    n = 20
    data, views = make_data(n=n, d=3, seed=seed, groups={"all": ["x0", "x1", "x2"]})
    cfg = FitConfig(family="gaussian", lam=0.02, inner=AdamConfig(max_inner_iters=20000, inner_tol=0.0))
    prep = solver.prepare(data, views, cfg)
    st = with_columns(empty_state(prep, cfg, b=float(data.y.mean())), prep,
                      [ColumnId(0, j) for j in range(n)], np.zeros(n))
    out = solver.inner_solve(st, prep.blocks, data.y, cfg)
    f = solver.linear_predictor(prep.blocks, out.order, out.alpha, out.b)
    ref = ridge_closed_form(prep.blocks.block(0), data.y, cfg.lam)
    assert np.sqrt(np.mean((f - ref) ** 2)) < 1e-3


def test_preconditioned_adam_reaches_same_optimum():
    n = 16
    data, views = make_data(n=n, d=3, seed=5, groups={"all": ["x0", "x1", "x2"]}, kernels=[polynomial(2)])
    ref = None
    for pre in (False, True):
        cfg = FitConfig(family="gaussian", lam=0.05,
                        inner=AdamConfig(max_inner_iters=20000, inner_tol=0.0, precondition=pre))
        prep = solver.prepare(data, views, cfg)
        st = with_columns(empty_state(prep, cfg, b=float(data.y.mean())), prep,
                          [ColumnId(0, j) for j in range(n)], np.zeros(n))
        out = solver.inner_solve(st, prep.blocks, data.y, cfg)
        f = solver.linear_predictor(prep.blocks, out.order, out.alpha, out.b)
        ref = ridge_closed_form(prep.blocks.block(0), data.y, cfg.lam) if ref is None else ref
        assert np.sqrt(np.mean((f - ref) ** 2)) < 1e-3


def test_inner_solve_constant_column_is_intercept_only():
    n = 15
    rng = np.random.default_rng(9)
    y = (rng.random(n) < 0.3).astype(float)
    y[:2] = [0, 1]
    man = PartitionManifest(["l"], {"c": ["one"]}, {"c": 0})
    data = DataSet(np.ones((n, 1)), ["one"], y=y, family="binomial", manifest=man)
    views = enumerate_views(man, [linear()])
    cfg = FitConfig(family="binomial", lam=1e-3, standardize=False,
                    inner=AdamConfig(max_inner_iters=5000))
    prep = solver.prepare(data, views, cfg)
    st = with_columns(empty_state(prep, cfg, b=0.0), prep, [ColumnId(0, 3)], [0.0])
    out = solver.inner_solve(st, prep.blocks, y, cfg)
    f = solver.linear_predictor(prep.blocks, out.order, out.alpha, out.b)
    assert np.ptp(f) == 0.0
    assert glm.mean("binomial", f[0]) == pytest.approx(y.mean(), abs=1e-4)


def test_inner_solve_warm_start_is_fixed_point():
    data, views = make_data(n=12, seed=3, family=Family.BINOMIAL)
    cfg = FitConfig(family="binomial", lam=1e-2, inner=AdamConfig(max_inner_iters=50000, inner_tol=0.0))
    prep = solver.prepare(data, views, cfg)
    order = [ColumnId(0, 1), ColumnId(1, 4), ColumnId(0, 7)]
    st = with_columns(empty_state(prep, cfg), prep, order, np.zeros(3))
    once = solver.inner_solve(st, prep.blocks, data.y, cfg)
    H1 = solver.state_objective(once, prep.blocks, data.y, cfg)
    twice = solver.inner_solve(once, prep.blocks, data.y, replace_inner(cfg, inner_tol=1e-8))
    H2 = solver.state_objective(twice, prep.blocks, data.y, cfg)
    assert H2 <= H1
    assert abs(H1 - H2) <= 1e-8 * abs(H1)


def replace_inner(cfg, **kw):
    return solver.replace(cfg, inner=solver.replace(cfg.inner, **kw))


def test_divergence_is_reported():
    data, views = make_data(n=10, family=Family.POISSON, seed=1)
    y = data.y + 50
    data = DataSet(data.X, data.columns, y=y, family="poisson", manifest=data.manifest)
    cfg = FitConfig(family="poisson", lam=0.0, t_max=3, inner=AdamConfig(step_size=1e3))
    with pytest.raises(DivergenceError) as e:
        solver.fit(data, views, cfg)
    assert e.value.iteration is not None


# -- full fit ---------------------------------------------------------------


def test_degenerate_outcome_warns_and_returns():
    data, views = make_data(n=10, family=Family.BINOMIAL)
    data = DataSet(data.X, data.columns, y=np.ones(10), family="binomial", manifest=data.manifest)
    cfg = FitConfig(family="binomial", t_max=50)
    with pytest.warns(BoundaryMeanWarning):
        model, trace = solver.fit(data, views, cfg)
    assert trace.stop_reason == "tol"
    assert model.n_selected <= 2
    assert np.all(solver.predict_mean(model, data) > 0.99)


def test_separable_one_dimensional_problem():
    x = np.concatenate([np.linspace(-3, -0.5, 20), np.linspace(0.5, 3, 20)])
    y = (x > 0).astype(float)
    man = PartitionManifest(["l"], {"x": ["x"]}, {"x": 0})
    data = DataSet(x[:, None], ["x"], y=y, family="binomial", manifest=man)
    views = enumerate_views(man, [linear()])
    model, trace = solver.fit(data, views, FitConfig(family="binomial", lam=1e-3, t_max=400))
    assert np.mean((solver.predict_mean(model, data) > 0.5) == (y == 1)) == 1.0
    assert model.n_selected <= 40


@pytest.fixture(scope="module")
def scenario_a_fit():
    from glimark import simulate as sim
    spec = sim.ScenarioSpec("A", n=150, seed=0)
    ds = sim.generate(spec)
    man, ks, asg = sim.scenario_manifest(spec)
    data = ds.to_dataset(man)
    views = enumerate_views(man, ks, asg)
    cfg = FitConfig(family="binomial", lam=1e-3, t_max=60)
    model, trace = solver.fit(data, views, cfg)
    return data, views, cfg, model, trace


def test_trace_objective_improves_early(scenario_a_fit):
    *_, trace = scenario_a_fit
    obj = trace.objectives
    assert np.all(np.diff(obj[:11]) < 0)


def test_descent_and_sparsity(scenario_a_fit):
    data, views, cfg, model, trace = scenario_a_fit
    obj = trace.objectives
    assert np.all(obj[1:] <= obj[:-1] + 1e-8)
    assert model.n_selected <= cfg.t_max
    assert len(set(model.order)) == model.n_selected
    assert np.count_nonzero(model.alpha) <= cfg.t_max


def test_in_sample_prediction_matches_training_f(scenario_a_fit):
    data, views, cfg, model, trace = scenario_a_fit
    prep = solver.prepare(data, views, cfg)
    f_in = solver.linear_predictor(prep.blocks, model.order, model.alpha, model.b)
    np.testing.assert_allclose(solver.predict(model, data), f_in, rtol=0, atol=1e-10)
    p = solver.predict_mean(model, data)
    assert np.all((p > 0) & (p < 1))


def test_prefix_model_equals_fresh_capped_fit(scenario_a_fit):
    data, views, cfg, model, trace = scenario_a_fit
    for t in (1, 7, 25):
        fresh, _ = solver.fit(data, views, solver.replace(cfg, t_max=t))
        pre = solver.prefix_model(model, trace, t)
        assert pre.order == fresh.order
        assert np.array_equal(pre.alpha, fresh.alpha)
        assert pre.b == fresh.b


def test_empty_model_predicts_intercept():
    data, views = make_data(n=10, family=Family.BINOMIAL)
    model, trace = solver.fit(data, views, FitConfig(family="binomial", tol=1e3))
    assert model.n_selected == 0
    assert np.all(solver.predict_mean(model, data) == pytest.approx(data.y.mean()))


def test_model_file_round_trip(tmp_path, scenario_a_fit):
    data, views, cfg, model, trace = scenario_a_fit
    model.save(tmp_path / "m.json")
    loaded = ModelState.load(tmp_path / "m.json")
    assert np.array_equal(solver.predict(loaded, data), solver.predict(model, data))
    loaded.save(tmp_path / "m2.json")
    assert (tmp_path / "m.json").read_bytes() == (tmp_path / "m2.json").read_bytes()


def test_fit_is_deterministic(tmp_path):
    data, views = make_data(n=30, family=Family.BINOMIAL, seed=8, kernels=[linear(), rbf(2.0)])
    cfg = FitConfig(family="binomial", t_max=15)
    solver.fit(data, views, cfg)[0].save(tmp_path / "a.json")
    solver.fit(data, views, cfg)[0].save(tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_permutation_equivariance():
    data, views = make_data(n=25, d=4, family=Family.BINOMIAL, seed=6, kernels=[linear(), polynomial(2)])
    cfg = FitConfig(family="binomial", lam=1e-2, t_max=8)
    m1, _ = solver.fit(data, views, cfg)
    perm = np.random.default_rng(0).permutation(data.n)
    m2, _ = solver.fit(data.subset(perm), views, cfg)
    assert [(c.view, data.row_ids[c.anchor]) for c in m1.order] == \
        [(c.view, data.subset(perm).row_ids[c.anchor]) for c in m2.order]
    Z = np.random.default_rng(1).normal(size=(7, 4))
    np.testing.assert_allclose(solver.predict(m1, Z), solver.predict(m2, Z), rtol=0, atol=1e-8)


def test_fit_on_a_subset_of_manifest_views():
    data, _ = make_data(n=12, d=4, groups={"A": ["x0", "x1"], "B": ["x2"], "C": ["x3"]})
    views = [ViewSpec(0, "B", linear()), ViewSpec(1, "C", rbf(1.0))]
    model, _ = solver.fit(data, views, FitConfig(family="gaussian", t_max=4))
    assert set(model.scaler.columns) == {"x2", "x3"}
    assert solver.predict(model, data).shape == (12,)


def test_predict_missing_column():
    data, views = make_data(n=10)
    model, _ = solver.fit(data, views, FitConfig(family="gaussian", t_max=3))
    with pytest.raises(DataError):
        solver.predict(model, data.X[:, :3], columns=data.columns[:3])
    np.testing.assert_array_equal(solver.predict(model, data.X[:, ::-1], columns=data.columns[::-1]),
                                  solver.predict(model, data))
