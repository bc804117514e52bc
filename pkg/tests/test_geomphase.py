import numpy as np
import pytest
from conftest import BENCHMARK_STEPS, random_density, random_hermitian, random_matrix, random_unitary

from purelind.geomphase import (
    SectionTrajectory,
    adiabatic_sections,
    decompose_phases,
    dynamical_generator,
    first_order_eigenvectors,
    left_generator_A,
    ordered_exponential,
    ordered_exponential_path,
    parallel_transport_residual,
    phase_profile_changes,
    right_generators,
    sjoqvist_left_generator,
    sjoqvist_right_generator,
    sqrt_sigma_section,
    uhlmann_generator,
    uhlmann_right_generator,
    uhlmann_right_phase,
)
from purelind.lindblad import LindbladModel, TimeGrid
from purelind.matqm import dagger, matrix_exp, max_abs, pseudo_inverse
from purelind.purified import propagate_nlse, purify_initial
from purelind.spinmodel import SIGMA_MINUS, SIGMA_X, SIGMA_Y, SIGMA_Z, initial_state, benchmark_model


# -- dynamical generator -------------------------------------------------------


def test_dynamical_generator_closed_system(rng):
    h = random_hermitian(rng, 2)
    model = LindbladModel.constant(h, [random_matrix(rng, 2)], [0.0])
    np.testing.assert_allclose(dynamical_generator(model, random_density(rng, 2), 0.0), h, atol=1e-14)


def test_dynamical_generator_pure_state(rng):
    h, g, gamma = random_hermitian(rng, 2), random_matrix(rng, 2), 0.3
    model = LindbladModel.constant(h, [g], [gamma])
    psi = random_matrix(rng, 2, 1)[:, 0]
    psi /= np.linalg.norm(psi)
    # G |psi><psi| G^dag |psi><psi| = <psi|G^dag|psi> G |psi><psi|
    expected = h - 0.5j * gamma * dagger(g) @ g + 0.5j * gamma * np.vdot(psi, dagger(g) @ psi) * np.outer(g @ psi, psi.conj())
    np.testing.assert_allclose(dynamical_generator(model, np.outer(psi, psi.conj()), 0.0), expected, atol=1e-12)


def test_dynamical_generator_microcanonical(rng):
    n = 3
    h, gs, rates = random_hermitian(rng, n), [random_matrix(rng, n), random_matrix(rng, n)], [0.2, 0.5]
    model = LindbladModel.constant(h, gs, rates)
    expected = h + sum(-0.5j * r * dagger(g) @ g + 0.5j * r * g @ dagger(g) for g, r in zip(gs, rates))
    np.testing.assert_allclose(dynamical_generator(model, np.eye(n) / n, 0.0), expected, atol=1e-12)


# -- left generator ------------------------------------------------------------


def test_left_generator_of_left_invariant_flow(rng):
    x, w0 = random_matrix(rng, 3), random_matrix(rng, 3)
    t = 0.7
    w = matrix_exp(t * x) @ w0
    np.testing.assert_allclose(left_generator_A(w, x @ w), x, atol=1e-10)


def test_left_generator_reproduces_density_derivative(rng):
    a, b, c = (random_matrix(rng, 3) for _ in range(3))

    def path(t):
        return a + t * b + np.sin(t) * c

    t, h = 0.4, 1e-6
    wd = (path(t + h) - path(t - h)) / (2 * h)
    rho_dot = (path(t + h) @ dagger(path(t + h)) - path(t - h) @ dagger(path(t - h))) / (2 * h)
    w = path(t)
    gen = left_generator_A(w, wd)
    np.testing.assert_allclose(gen @ w @ dagger(w) + w @ dagger(w) @ dagger(gen), rho_dot, atol=1e-7)


def test_left_generator_rank_one(rng):
    zeta, zeta_dot = random_matrix(rng, 2, 1)[:, 0], random_matrix(rng, 2, 1)[:, 0]
    xi = np.array([1.0, 0.0])
    w, wd = np.outer(zeta, xi), np.outer(zeta_dot, xi)
    dual = zeta / np.vdot(zeta, zeta)
    np.testing.assert_allclose(left_generator_A(w, wd), np.outer(zeta_dot, dual.conj()), atol=1e-13)


# -- Uhlmann connection ------------------------------------------------------------


def test_uhlmann_generator_examples(rng):
    rho = random_density(rng, 2)
    np.testing.assert_array_equal(uhlmann_generator(rho, np.zeros((2, 2))), np.zeros((2, 2)))
    p, pd = 0.3, 0.05
    g = uhlmann_generator(np.diag([p, 1 - p]), pd * SIGMA_Z)
    expected = np.diag([pd / (2 * p), -pd / (2 * (1 - p))])
    np.testing.assert_allclose(g, expected, atol=1e-14)
    np.testing.assert_allclose(g @ np.diag([p, 1 - p]) + np.diag([p, 1 - p]) @ g, pd * SIGMA_Z, atol=1e-14)
    with pytest.raises(ValueError):
        uhlmann_generator(np.zeros((2, 2)), SIGMA_Z)


def test_uhlmann_generator_random_residual(rng):
    for _ in range(20):
        rho = random_density(rng, 3)
        rho_dot = random_hermitian(rng, 3)
        g = uhlmann_generator(rho, rho_dot)
        assert max_abs(g @ rho + rho @ g - rho_dot) <= 1e-10
        assert max_abs(g - dagger(g)) <= 1e-10


def test_uhlmann_generator_singular_state_restricts_to_range():
    rho = np.diag([0.0, 1.0]).astype(complex)
    rho_dot = np.array([[0.0, 0.2], [0.2, 0.0]], dtype=complex)
    g = uhlmann_generator(rho, rho_dot)
    np.testing.assert_allclose(g, [[0, 0.2], [0.2, 0]], atol=1e-14)


def test_uhlmann_right_generator_is_antihermitian(rng):
    w, wd = random_matrix(rng, 3), random_matrix(rng, 3)
    a = uhlmann_right_generator(w, wd)
    np.testing.assert_allclose(a, -dagger(a), atol=1e-12)


def test_constant_section_has_trivial_right_phase(rng):
    times = np.linspace(0.0, 2.0, 21)
    sec = SectionTrajectory(times, np.repeat(random_matrix(rng, 2)[None], 21, axis=0))
    np.testing.assert_allclose(uhlmann_right_phase(sec), np.broadcast_to(np.eye(2), (21, 2, 2)), atol=1e-13)


def _smooth_path(rng, n=2):
    a, b, c = (random_matrix(rng, n) for _ in range(3))
    return lambda t: a + np.sin(t) * b + np.cos(2 * t) * c


def test_uhlmann_transport_is_parallel_and_converges(rng):
    path = _smooth_path(rng)
    res = []
    for steps in (200, 400):
        times = np.linspace(0.0, 2.0, steps + 1)
        sec = SectionTrajectory(times, np.array([path(t) for t in times]))
        k = uhlmann_right_phase(sec)
        np.testing.assert_allclose(k @ dagger(k), np.broadcast_to(np.eye(2), k.shape), atol=1e-8)
        res.append(np.max(parallel_transport_residual(times, sec.w_tilde @ k)))
    assert res[1] < 1e-3
    assert res[0] / res[1] > 3.0


def test_isospectral_holonomy_self_convergence(rng):
    rho0 = np.diag([0.3, 0.7]).astype(complex)
    x = 1j * random_hermitian(rng, 2)
    w0 = np.sqrt(rho0)

    def section(steps):
        times = np.linspace(0.0, 2 * np.pi, steps + 1)
        w = np.array([matrix_exp(t * x) @ w0 @ dagger(matrix_exp(t * x)) for t in times])
        return SectionTrajectory(times, w)

    coarse = uhlmann_right_phase(section(2000))[-1]
    fine = uhlmann_right_phase(section(20000))[-1]
    assert max_abs(coarse - fine) <= 1e-6
    assert max_abs(fine - np.eye(2)) > 1e-3


# -- Sjoqvist generators -------------------------------------------------------------


def _isospectral(rng, t):
    x, y = 1j * random_hermitian(rng, 2), 1j * random_hermitian(rng, 2)
    w0 = random_matrix(rng, 2)
    w0 /= np.linalg.norm(w0)
    w = matrix_exp(t * x) @ w0 @ matrix_exp(t * y)
    return w, x @ w + w @ y


def test_sjoqvist_right_generator_forms_agree(rng):
    for _ in range(10):
        w, wd = random_matrix(rng, 2), random_matrix(rng, 2)
        w /= np.linalg.norm(w)
        np.testing.assert_allclose(
            sjoqvist_right_generator(w, wd), sjoqvist_right_generator(w, wd, restricted=True), atol=1e-10
        )


def test_sjoqvist_on_isospectral_path_is_interferometric(rng):
    w, wd = _isospectral(rng, 0.8)
    sigma = dagger(w) @ w
    p, v = np.linalg.eigh(sigma)
    projs = [np.outer(v[:, j], v[:, j].conj()) for j in range(2)]
    direct = sum(q @ dagger(w) @ wd @ q for q in projs) @ np.linalg.inv(sigma)
    np.testing.assert_allclose(sjoqvist_right_generator(w, wd), direct, atol=1e-10)


def test_sjoqvist_constant_path(rng):
    w = random_matrix(rng, 2)
    np.testing.assert_allclose(sjoqvist_right_generator(w, np.zeros((2, 2))), np.zeros((2, 2)), atol=1e-15)
    np.testing.assert_allclose(sjoqvist_left_generator(w, np.zeros((2, 2))), np.zeros((2, 2)), atol=1e-15)


def test_sjoqvist_left_right_consistency(rng):
    for _ in range(20):
        w, wd = _isospectral(rng, rng.uniform(0, 3))
        a = left_generator_A(w, wd)
        res = a @ w - ((a - sjoqvist_left_generator(w, wd)) @ w + w @ sjoqvist_right_generator(w, wd))
        assert max_abs(res) <= 1e-9


def test_sjoqvist_near_crossing_warning():
    w = np.diag([np.sqrt(0.5 + 1e-7), np.sqrt(0.5 - 1e-7)]).astype(complex)
    with pytest.warns(RuntimeWarning, match="nearly degenerate"):
        sjoqvist_right_generator(w, SIGMA_X * 0.1)


def test_gauge_shift(rng):
    for rank in (2, 1):
        w = random_matrix(rng, 2, rank) @ random_matrix(rng, rank, 2)
        wd = random_matrix(rng, 2)
        y = 1j * random_hermitian(rng, 2)
        k, kd = matrix_exp(0.6 * y), y @ matrix_exp(0.6 * y)
        shift = left_generator_A(w @ k, wd @ k + w @ kd) - left_generator_A(w, wd)
        np.testing.assert_allclose(shift, w @ kd @ np.linalg.inv(k) @ pseudo_inverse(w), atol=1e-10)


# -- ordered exponentials ----------------------------------------------------------------


def test_ordered_exponential_constant_and_commuting(rng):
    a = random_matrix(rng, 2)
    gens = np.repeat(a[None], 51, axis=0)
    for direction in ("left", "right"):
        np.testing.assert_allclose(ordered_exponential(gens, 0.02, direction), matrix_exp(-a), atol=1e-12)
    times = np.linspace(0.0, 1.0, 1001)
    f = np.cos(times)
    gens = f[:, None, None] * a
    integral = np.sum(0.5 * (f[1:] + f[:-1])) * 1e-3
    for direction in ("left", "right"):
        np.testing.assert_allclose(
            ordered_exponential(gens, 1e-3, direction, "trapezoid"), matrix_exp(-integral * a), atol=1e-11
        )


def _noncommuting(steps):
    times = np.linspace(0.0, 1.0, steps + 1)
    gens = np.array([1j * (np.cos(3 * t) * SIGMA_X + np.sin(2 * t) * SIGMA_Y) + 0.3 * t * SIGMA_Z for t in times])
    return gens, 1.0 / steps


def test_ordered_exponential_refinement():
    ref = ordered_exponential(*_noncommuting(16000), "left", "trapezoid")
    errs = [max_abs(ordered_exponential(*_noncommuting(s), "left") - ref) for s in (100, 200, 400)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 0.9)
    errs2 = [max_abs(ordered_exponential(*_noncommuting(s), "left", "trapezoid") - ref) for s in (100, 200)]
    assert errs2[0] / errs2[1] > 3.5


def test_left_and_right_products_are_reversed_inverses():
    gens, dt = _noncommuting(300)
    left = ordered_exponential(gens, dt, "left", "trapezoid")
    # the right product along the reversed path multiplies the same factors
    np.testing.assert_allclose(ordered_exponential(gens[::-1], dt, "right", "trapezoid"), left, atol=1e-12)
    np.testing.assert_allclose(left @ ordered_exponential(-gens, dt, "right", "trapezoid"), np.eye(2), atol=1e-12)
    path = ordered_exponential_path(gens, dt, "right", initial=2 * np.eye(2))
    np.testing.assert_allclose(path[0], 2 * np.eye(2))


def test_ordered_exponential_rejects_bad_options():
    gens, dt = _noncommuting(10)
    with pytest.raises(ValueError):
        ordered_exponential(gens, dt, "up")
    with pytest.raises(ValueError):
        ordered_exponential(gens, dt, "left", "simpson")


# -- decomposition ---------------------------------------------------------------------


def test_decomposition_closed_system():
    model = benchmark_model(0.0, 0.0)
    grid = TimeGrid(0.0, 90.0, 400)
    traj = propagate_nlse(model, purify_initial(initial_state()), grid)
    section = SectionTrajectory(traj.times, np.repeat(traj.w[:1], len(traj.times), axis=0))
    dec = decompose_phases(model, traj, section, "uhlmann")
    eye = np.broadcast_to(np.eye(2), dec.k.shape)
    np.testing.assert_allclose(dec.k, eye, atol=1e-14)
    np.testing.assert_allclose(dec.g_A, eye, atol=1e-14)
    u = np.empty_like(dec.g_E)
    u[0] = np.eye(2)
    for i, t in enumerate(grid.times[:-1]):
        u[i + 1] = matrix_exp(-1j * grid.dt * model.operators(t)[0]) @ u[i]
    np.testing.assert_allclose(dec.g_E, u, atol=1e-11)
    assert not dec.failed
    assert dec.reconstruction_residual.max() <= 1e-10


def test_sqrt_sigma_section_on_benchmark(benchmark_runs):
    model, _, _, traj = benchmark_runs(BENCHMARK_STEPS)
    section = sqrt_sigma_section(traj.times, traj.rho)
    # rho moves between the poles, so its spectrum (and the diagonal section) returns
    assert section.is_cyclic(degeneracy_tol=1e-3)
    np.testing.assert_allclose(section.rho, np.sort(np.linalg.eigvalsh(traj.rho))[:, None, :] * np.eye(2), atol=1e-15)
    dec = decompose_phases(model, traj, section, "sjoqvist")
    assert not dec.failed, dec.diagnostic
    np.testing.assert_allclose(dec.reconstruct(), traj.w, atol=dec.reconstruction_tol)


def test_weak_adiabatic_section_decomposition(benchmark_runs):
    model, grid, _, traj = benchmark_runs(BENCHMARK_STEPS)
    secs = adiabatic_sections(model, traj, grid)
    assert not secs.weak.ranks().min() < 2
    dec = decompose_phases(model, traj, secs.weak, "uhlmann")
    assert not dec.failed, dec.diagnostic
    scale = np.max(np.abs(dec.eta), axis=(1, 2))
    assert np.all(dec.eta_residual <= 1e-8 * np.maximum(scale, 1e-300))
    assert np.max(scale) > 0
    transport = parallel_transport_residual(traj.times, secs.weak.w_tilde @ dec.k)
    assert np.median(transport) < 1e-3


def test_custom_right_phase(rng):
    model = benchmark_model()
    grid = TimeGrid(0.0, 20.0, 800)
    traj = propagate_nlse(model, purify_initial(initial_state(0.2)), grid)
    section = sqrt_sigma_section(traj.times, traj.rho)
    y = 1j * random_hermitian(rng, 2)
    k = np.array([matrix_exp(0.05 * t * y) for t in traj.times])
    dec = decompose_phases(model, traj, section, k=k)
    assert dec.connection_kind == "custom"
    assert not dec.failed, dec.diagnostic
    np.testing.assert_allclose(dec.k, k)


def test_decomposition_rejects_mismatched_sections(rng):
    model = benchmark_model()
    grid = TimeGrid(0.0, 10.0, 50)
    traj = propagate_nlse(model, purify_initial(initial_state()), grid)
    rank_one = np.repeat(np.diag([1.0, 0.0])[None].astype(complex), 51, axis=0)
    with pytest.raises(ValueError, match="stratum mismatch"):
        decompose_phases(model, traj, SectionTrajectory(traj.times, rank_one))
    with pytest.raises(ValueError, match="time grid"):
        decompose_phases(model, traj, SectionTrajectory(traj.times[:-1], traj.w[:-1]))
    with pytest.raises(ValueError):
        right_generators(SectionTrajectory(traj.times, traj.w), "berry")


def test_decomposition_reports_failure_for_tiny_tolerance(benchmark_runs):
    model, _, _, traj = benchmark_runs(BENCHMARK_STEPS)
    dec = decompose_phases(model, traj, sqrt_sigma_section(traj.times, traj.rho), reconstruction_tol=1e-14)
    assert dec.failed
    assert "reconstruction residual" in dec.diagnostic


# -- adiabatic sections -----------------------------------------------------------------


def test_first_order_vectors_without_dissipation(rng):
    h = random_hermitian(rng, 3)
    psi0 = np.ones(3) / np.sqrt(3)
    z1, z0, mu0 = first_order_eigenvectors(h, [random_matrix(rng, 3)], [0.0], psi0)
    np.testing.assert_allclose(z1, z0, atol=1e-15)
    np.testing.assert_allclose(h @ z0, z0 * mu0, atol=1e-12)


def test_adiabatic_sections_closed_system():
    model = benchmark_model(0.0, 0.0)
    grid = TimeGrid(0.0, 630.0, 700)
    rho = np.repeat(initial_state()[None], 701, axis=0)
    secs = adiabatic_sections(model, rho, grid)
    for i in (0, 350, 700):
        _, z0 = np.linalg.eigh(model.operators(grid.times[i])[0])
        phi = secs.phi[i]
        overlaps = np.abs(dagger(z0) @ phi)
        np.testing.assert_allclose(np.sort(overlaps, axis=0)[-1], 1.0, atol=1e-12)
    assert secs.strong_is_pure and secs.stratum_mismatch
    assert any("pure state" in d for d in secs.diagnostics)


def test_adiabatic_gap_diagnostic():
    model = LindbladModel(2, lambda t: (1 - t) * SIGMA_Z, (lambda t: SIGMA_MINUS,), np.array([1e-3]))
    grid = TimeGrid(0.0, 2.0, 20)
    rho = np.repeat(np.diag([0.1, 0.9]).astype(complex)[None], 21, axis=0)
    secs = adiabatic_sections(model, rho, grid)
    assert any("gap" in d for d in secs.diagnostics)


def test_phase_profile_changes():
    rho = np.array([np.diag([0.3, 0.7]), np.diag([0.5, 0.5]), np.diag([0.4, 0.6])]).astype(complex)
    assert phase_profile_changes(rho) == [1, 2]


def test_sections_validate_shapes(rng):
    with pytest.raises(ValueError):
        SectionTrajectory(np.linspace(0, 1, 3), np.zeros((2, 2, 2)))
    times = np.linspace(0, 1, 5)
    u = random_unitary(rng, 2)
    sec = SectionTrajectory(times, np.repeat((u @ np.diag([0.6, 0.8]))[None], 5, axis=0))
    assert sec.is_cyclic()
