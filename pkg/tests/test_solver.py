import numpy as np
import pytest

from conftest import (
    cvx_analysis,
    cvx_balanced,
    cvx_general,
    operator_matrix,
    subgradient_general,
    transform_matrix,
)
from wfrestore.framelet import ConfigurationError, NumericalError
from wfrestore.imageio import add_gaussian_noise, psnr, read_csv, synth_image
from wfrestore.operators import blur, gaussian_kernel, identity, mask
from wfrestore.solver import (
    Diagnostics,
    FrameOperator,
    ModelSpec,
    Problem,
    admm_step,
    coefficient_objective,
    lipschitz_estimate,
    objective_value,
    preset,
    soft_threshold,
    solve,
    with_params,
)


def _instance(kind, seed, N=8):
    rng = np.random.default_rng(seed)
    truth = rng.uniform(0, 255, (N, N))
    A = {
        "identity": identity((N, N)),
        "blur": blur(gaussian_kernel(3, 0.8), (N, N)),
        "mask": mask(rng.uniform(size=(N, N)) < 0.7),
    }[kind]
    return A.apply(truth) + rng.normal(0, 5, (N, N)), A


# -- shrinkage ------------------------------------------------------------------


def test_soft_threshold_examples():
    assert float(soft_threshold(1.2, 0.5)) == pytest.approx(0.7)
    assert float(soft_threshold(-0.3, 0.5)) == 0.0
    np.testing.assert_array_equal(soft_threshold(np.array([3.0, 4.0]), 5.0, "isotropic"), [0.0, 0.0])
    np.testing.assert_allclose(soft_threshold(np.array([3.0, 4.0]), 2.5, "isotropic"), [1.5, 2.0])
    np.testing.assert_array_equal(soft_threshold(np.zeros(2), 1.0, "isotropic"), [0.0, 0.0])


def test_soft_threshold_errors():
    with pytest.raises(ValueError):
        soft_threshold(1.0, -0.1)
    with pytest.raises(ConfigurationError):
        soft_threshold(1.0, 0.1, "hard")
    with pytest.raises(ValueError):
        soft_threshold(np.ones((2, 2)), np.ones(2), "isotropic")


def test_soft_threshold_is_prox():
    # [DERIVED] minimizer of lam |y| + 1/2 (y - x)^2 on a fine grid
    y = np.linspace(-3, 3, 600001)
    for x in (-2.2, -0.1, 0.0, 0.4, 1.7):
        best = y[np.argmin(0.7 * np.abs(y) + 0.5 * (y - x) ** 2)]
        assert abs(float(soft_threshold(x, 0.7)) - best) <= 1e-5


# -- frame operator ---------------------------------------------------------------


@pytest.mark.parametrize("name", ["haar", "linear"])
def test_frame_operator_matches_dense(banks, name):
    b = banks[name]
    W = FrameOperator(b, (8, 8))
    M = transform_matrix(b, 8)
    x = np.random.default_rng(0).standard_normal((8, 8))
    np.testing.assert_allclose(W.analyze(x).ravel(), M @ x.ravel(), atol=1e-12)
    c = np.random.default_rng(1).standard_normal((b.J + 1, 8, 8))
    np.testing.assert_allclose(W.synthesize(c).ravel(), M.T @ c.ravel(), atol=1e-12)
    np.testing.assert_allclose(M.T @ M, np.eye(64), atol=1e-12)


def test_frame_operator_batched(banks):
    W = FrameOperator(banks["haar"], (8, 8))
    v = np.random.default_rng(2).standard_normal((4, 8, 8))
    out = W.analyze(v)
    assert out.shape == (4, 4, 8, 8)
    np.testing.assert_allclose(out[:, 2], W.analyze(v[2]), atol=1e-13)
    np.testing.assert_allclose(W.synthesize(out), v, atol=1e-12)


# -- objective ------------------------------------------------------------------


def test_objective_zero_cases(banks):
    f = np.random.default_rng(3).uniform(0, 255, (8, 8))
    spec = ModelSpec(nu1=0.3, nu2=0.0)
    prob = Problem(f, identity(f.shape), spec, banks["haar"])
    assert objective_value(f, prob.W1.analyze(f), prob) == pytest.approx(0.0, abs=1e-9)
    z = np.zeros((8, 8))
    prob0 = Problem(z, identity(z.shape), ModelSpec(), banks["linear"])
    assert objective_value(z, np.zeros((9, 8, 8)), prob0) == 0.0


@pytest.mark.parametrize("q", [1, 2])
@pytest.mark.parametrize("mode", ["anisotropic", "isotropic"])
def test_objective_brute_force(banks, q, mode):
    # [DERIVED] straight-line evaluation with loop-built dense matrices
    b = banks["haar"]
    N = 4
    rng = np.random.default_rng(4)
    f, u = rng.standard_normal((2, N, N))
    v = rng.standard_normal((b.J + 1, N, N))
    A = blur(rng.uniform(size=(2, 2)), (N, N))
    spec = ModelSpec(nu1=0.7, nu2=0.3, q=q, shrink_mode=mode)
    got = objective_value(u, v, Problem(f, A, spec, b))

    M = transform_matrix(b, N)
    AM = operator_matrix(A, N)
    P = N * N
    c = (M @ u.ravel() - v.ravel()).reshape(b.J + 1, P)[1:]
    e = np.stack([(M @ v[j].ravel()).reshape(b.J + 1, P) for j in range(b.J + 1)], axis=1)[1:, 1:]
    if mode == "anisotropic":
        t1 = np.abs(c).sum()
        t2 = np.abs(e).sum() if q == 1 else (e**2).sum()
    else:
        t1 = np.sqrt((c**2).sum(axis=0)).sum()
        t2 = np.sqrt((e**2).sum(axis=(0, 1))).sum() if q == 1 else (e**2).sum()
    expected = 0.7 * t1 + 0.3 * t2 + 0.5 * np.sum((AM @ u.ravel() - f.ravel()) ** 2)
    assert got == pytest.approx(expected, rel=1e-12)


def test_objective_shape_errors(banks):
    prob = Problem(np.zeros((8, 8)), identity((8, 8)), ModelSpec(), banks["haar"])
    with pytest.raises(ValueError):
        objective_value(np.zeros((4, 4)), None, prob)
    with pytest.raises(ValueError):
        objective_value(np.zeros((8, 8)), np.zeros((3, 8, 8)), prob)
    sprob = Problem(np.zeros((8, 8)), identity((8, 8)), preset("synthesis"), banks["haar"])
    with pytest.raises(ValueError):
        objective_value(np.zeros((8, 8)), None, sprob)


# -- specs and problems --------------------------------------------------------------


def test_spec_validation():
    for bad in (
        dict(mu=0.0),
        dict(delta=1.0),
        dict(delta=-0.1),
        dict(q=3),
        dict(nu1=-1.0),
        dict(nu2=float("nan")),
        dict(max_iter=0),
        dict(tol=0.0),
        dict(shrink_mode="hard"),
        dict(variant="tgv"),
        dict(scheme="fast"),
        dict(method="proxgrad"),
    ):
        with pytest.raises(ConfigurationError):
            ModelSpec(**bad)


def test_presets():
    assert preset("analysis").nu2 == 0.0
    assert preset("case_d").q == 2
    assert preset("balanced", balance=5.0).balance == 5.0
    assert preset("synthesis").penalize_lowpass
    with pytest.raises(ConfigurationError):
        preset("tgv")
    with pytest.raises(ConfigurationError):
        preset("synthesis", balance=1.0)
    assert with_params(ModelSpec(), nu1=0.5).nu1 == 0.5


def test_problem_errors(banks):
    with pytest.raises(ValueError):
        Problem(np.zeros((8, 8)), identity((4, 4)), ModelSpec())
    with pytest.raises(ValueError):
        Problem(np.full((4, 4), np.nan), identity((4, 4)), ModelSpec())
    with pytest.raises(ConfigurationError):
        Problem(np.zeros((8, 8)), identity((8, 8)), preset("packet"), "haar", "linear")


# -- admm_step ------------------------------------------------------------------


def _penalty(x, w, lam):
    w = np.broadcast_to(w.reshape(w.shape + (1, 1)), x.shape)
    return lam * np.sum(np.abs(x) * w)


def _perturb_check(fun, x0, rng, trials=20, eps=1e-3):
    base = fun(x0)
    for _ in range(trials):
        d = rng.standard_normal(x0.shape)
        d *= eps / np.linalg.norm(d)
        for s in (1, -1):
            assert fun(x0 + s * d) >= base - 1e-9 * max(1.0, abs(base))


@pytest.mark.parametrize("q", [1, 2])
def test_joint_subproblems_locally_optimal(banks, q):
    f, A = _instance("blur", 0)
    spec = ModelSpec(nu1=3.0, nu2=2.0, q=q)
    prob = Problem(f, A, spec, banks["haar"])
    W1, W2, mu = prob.W1, prob.W2, spec.mu
    st = prob.zero_state()
    for _ in range(5):
        st = admm_step(st, prob)
    new = admm_step(st, prob)
    rng = np.random.default_rng(5)
    shape_u = f.shape

    def uv_obj(x):
        u = x[: f.size].reshape(shape_u)
        v = x[f.size :].reshape(st.v.shape)
        return (
            0.5 * np.sum((A.apply(u) - f) ** 2)
            + mu / 2 * np.sum((W1.analyze(u) - v - st.d + st.mult_p) ** 2)
            + mu / 2 * np.sum((W2.analyze(v) - st.e + st.mult_q) ** 2)
        )

    _perturb_check(uv_obj, np.concatenate([new.u.ravel(), new.v.ravel()]), rng)

    target_d = W1.analyze(new.u) - new.v + st.mult_p
    _perturb_check(lambda d: _penalty(d, prob.w1, spec.nu1) + mu / 2 * np.sum((d - target_d) ** 2), new.d, rng)

    target_e = W2.analyze(new.v) + st.mult_q
    if q == 1:
        e_obj = lambda e: _penalty(e, prob.w2, spec.nu2) + mu / 2 * np.sum((e - target_e) ** 2)  # noqa: E731
    else:
        w2 = prob.w2.reshape(prob.w2.shape + (1, 1))
        e_obj = lambda e: spec.nu2 * np.sum(w2 * e**2) + mu / 2 * np.sum((e - target_e) ** 2)  # noqa: E731
    _perturb_check(e_obj, new.e, rng)


def test_sequential_subproblems_locally_optimal(banks):
    f, A = _instance("mask", 1)
    spec = ModelSpec(nu1=3.0, nu2=2.0, scheme="sequential")
    prob = Problem(f, A, spec, banks["haar"])
    W1, W2, mu = prob.W1, prob.W2, spec.mu
    st = prob.zero_state()
    for _ in range(5):
        st = admm_step(st, prob)
    new = admm_step(st, prob)
    rng = np.random.default_rng(6)
    _perturb_check(
        lambda u: 0.5 * np.sum((A.apply(u) - f) ** 2) + mu / 2 * np.sum((W1.analyze(u) - st.d + st.mult_p) ** 2),
        new.u,
        rng,
    )
    _perturb_check(
        lambda v: _penalty(st.d - v, prob.w1, spec.nu1) + mu / 2 * np.sum((W2.analyze(v) - st.e + st.mult_q) ** 2),
        new.v,
        rng,
    )
    Wu = W1.analyze(new.u)
    _perturb_check(
        lambda d: _penalty(d - new.v, prob.w1, spec.nu1) + mu / 2 * np.sum((Wu + st.mult_p - d) ** 2),
        new.d,
        rng,
    )
    target_e = W2.analyze(new.v) + st.mult_q
    _perturb_check(lambda e: _penalty(e, prob.w2, spec.nu2) + mu / 2 * np.sum((e - target_e) ** 2), new.e, rng)


def test_zero_data_fixed_point(banks):
    prob = Problem(np.zeros((8, 8)), identity((8, 8)), ModelSpec(), banks["linear"])
    st = admm_step(prob.zero_state(), prob)
    assert np.all(st.u == 0) and np.all(st.v == 0) and st.objective == 0.0


def test_zero_penalty_recovers_data(banks):
    f = np.random.default_rng(7).uniform(0, 255, (8, 8))
    u, diag, _ = solve(f, identity(f.shape), ModelSpec(nu1=0.0, nu2=0.0, delta=0.0, max_iter=200, tol=1e-14), "haar")
    np.testing.assert_allclose(u, f, atol=1e-8)


# -- full solves ------------------------------------------------------------------


@pytest.mark.parametrize("q", [1, 2])
def test_residuals_small_on_32x32_denoise(q):
    # invariant: mu = 1, nu = 0.2, primal residuals below 1e-6 within 500 iterations
    f = add_gaussian_noise(synth_image("shapes", 32, 0), 5, 1)
    _, diag, st = solve(f, identity(f.shape), ModelSpec(nu1=0.2, nu2=0.2, q=q, max_iter=500, tol=1e-15), "haar")
    assert max(st.primal_residuals) < 1e-6


def test_analysis_residuals_on_32x32_denoise():
    f = add_gaussian_noise(synth_image("shapes", 32, 0), 5, 1)
    _, diag, st = solve(f, identity(f.shape), preset("analysis", nu1=0.2, max_iter=500, tol=1e-15), "haar")
    assert st.primal_residuals[0] < 1e-6


def test_analysis_tiny_weight_reproduces_clean_input():
    f = synth_image("shapes", 32, 2)
    u, _, _ = solve(f, identity(f.shape), preset("analysis", nu1=1e-6), "linear")
    assert psnr(u, f) >= 60.0


@pytest.mark.parametrize("kind", ["identity", "blur", "mask"])
@pytest.mark.parametrize("q", [1, 2])
def test_general_matches_cvx_oracle(banks, kind, q):
    f, A = _instance(kind, 10 + q)
    ref, _ = cvx_general(f, A, banks["haar"], 4.0, 4.0, q=q)
    _, _, st = solve(f, A, ModelSpec(nu1=4.0, nu2=4.0, q=q, max_iter=5000, tol=1e-10), "haar")
    assert abs(st.objective - ref) <= 1e-4 * ref


def test_general_two_banks_matches_cvx_oracle(banks):
    f, A = _instance("identity", 20)
    ref, _ = cvx_general(f, A, banks["linear"], 4.0, 4.0, bank2=banks["haar"])
    _, _, st = solve(f, A, ModelSpec(nu1=4.0, nu2=4.0, max_iter=5000, tol=1e-10), "linear", "haar")
    assert abs(st.objective - ref) <= 1e-4 * ref


def test_general_below_subgradient_bound(banks):
    # the subgradient value is an upper bound on the optimum
    f, A = _instance("identity", 21)
    bound = subgradient_general(f, A, banks["haar"], 4.0, 4.0, iters=20000)
    _, _, st = solve(f, A, ModelSpec(nu1=4.0, nu2=4.0, max_iter=5000, tol=1e-10), "haar")
    assert st.objective <= bound * (1 + 1e-4)
    assert st.objective >= bound * (1 - 5e-3)


def test_sequential_scheme_stalls_above_optimum(banks):
    f, A = _instance("blur", 22)
    ref, _ = cvx_general(f, A, banks["haar"], 4.0, 4.0)
    _, _, seq = solve(f, A, ModelSpec(nu1=4.0, nu2=4.0, scheme="sequential", max_iter=5000, tol=1e-12), "haar")
    _, _, joint = solve(f, A, ModelSpec(nu1=4.0, nu2=4.0, max_iter=5000, tol=1e-10), "haar")
    assert seq.objective >= ref * (1 - 1e-6)
    assert joint.objective <= seq.objective
    assert seq.objective - ref > 1e-3 * ref


@pytest.mark.parametrize("kind", ["identity", "mask"])
def test_analysis_matches_cvx_oracle(banks, kind):
    f, A = _instance(kind, 30)
    ref = cvx_analysis(f, A, banks["linear"], 5.0)
    _, _, st = solve(f, A, preset("analysis", nu1=5.0, max_iter=5000, tol=1e-11), "linear")
    assert abs(st.objective - ref) <= 1e-6 * ref


@pytest.mark.parametrize("method", ["admm", "proxgrad"])
@pytest.mark.parametrize("balance", [0.0, 1.0])
def test_coefficient_models_match_cvx(banks, method, balance):
    f, A = _instance("blur", 31)
    ref = cvx_balanced(f, A, banks["haar"], 2.0, balance)
    variant = "synthesis" if balance == 0 else "balanced"
    spec = preset(variant, nu1=2.0, balance=balance, method=method, max_iter=20000, tol=1e-12)
    _, _, st = solve(f, A, spec, "haar")
    assert abs(st.objective - ref) <= 1e-5 * ref


def test_synthesis_large_weight_kills_image():
    f = synth_image("shapes", 16, 3)
    u, _, _ = solve(f, identity(f.shape), preset("synthesis", nu1=1e4), "haar")
    assert np.max(np.abs(u)) <= 1e-10


def test_balanced_large_weight_approaches_analysis():
    f = add_gaussian_noise(synth_image("shapes", 16, 4), 5, 2)
    A = identity(f.shape)
    spec = dict(nu1=2.0, max_iter=3000, tol=1e-12)
    _, _, bal = solve(f, A, preset("balanced", balance=1e6, **spec), "haar")
    _, _, ana = solve(f, A, preset("analysis", penalize_lowpass=True, **spec), "haar")
    assert abs(bal.objective - ana.objective) <= 0.01 * ana.objective


def test_lipschitz_estimate(banks):
    f, A = _instance("blur", 32)
    prob = Problem(f, A, preset("balanced", balance=0.5), banks["haar"])
    M = transform_matrix(banks["haar"], 8)
    AM = operator_matrix(A, 8)
    H = 2 * 0.5 * (np.eye(M.shape[0]) - M @ M.T) + M @ AM.T @ AM @ M.T
    assert lipschitz_estimate(prob, iters=300) == pytest.approx(np.linalg.eigvalsh(H)[-1], rel=1e-6)
    v = np.random.default_rng(8).standard_normal((4, 8, 8))
    ref = 0.5 * np.sum(((np.eye(256) - M @ M.T) @ v.ravel()) ** 2) + 0.5 * np.sum(np.abs(v)) * 0.2
    ref += 0.5 * np.sum((AM @ M.T @ v.ravel() - f.ravel()) ** 2)
    assert coefficient_objective(v, Problem(f, A, preset("balanced", balance=0.5, nu1=0.1), banks["haar"])) == pytest.approx(ref)


def test_isotropic_solve_decreases_objective():
    f, A = _instance("identity", 33)
    _, diag, _ = solve(f, A, ModelSpec(nu1=4.0, nu2=4.0, shrink_mode="isotropic", max_iter=300), "haar")
    obj = diag.objectives
    assert obj[-1] < obj[0]
    assert np.all(np.isfinite(obj))


def test_divergence_raises():
    f = np.full((8, 8), 1e7)
    with pytest.raises(NumericalError, match="iteration 1"):
        solve(f, mask(np.zeros((8, 8))), ModelSpec(), "haar")


def test_determinism(tmp_path):
    f, A = _instance("blur", 34)
    spec = ModelSpec(nu1=4.0, nu2=4.0, max_iter=50)
    _, d1, _ = solve(f, A, spec, "linear", truth=f)
    _, d2, _ = solve(f, A, spec, "linear", truth=f)
    d1.write_csv(tmp_path / "a.csv")
    d2.write_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    header, rows = read_csv(tmp_path / "a.csv")
    assert header == list(Diagnostics.HEADER) and len(rows) == 50


def test_warm_start_continues():
    f, A = _instance("identity", 35)
    spec = ModelSpec(nu1=4.0, nu2=4.0, max_iter=40, tol=1e-15)
    _, _, s1 = solve(f, A, spec, "haar")
    _, _, s2 = solve(f, A, spec, "haar", state=s1)
    _, _, full = solve(f, A, with_params(spec, max_iter=80), "haar")
    assert s2.iter == 80
    np.testing.assert_allclose(s2.u, full.u, atol=1e-12)


def test_solve_truth_shape():
    f, A = _instance("identity", 36)
    with pytest.raises(ValueError):
        solve(f, A, ModelSpec(), "haar", truth=np.zeros((4, 4)))
