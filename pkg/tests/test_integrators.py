from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import bisect

from rrk_lab.errors import (
    BracketFailure,
    ConfigError,
    DegenerateDirection,
    DomainViolation,
    NewtonDivergence,
    NonFiniteState,
    NotExplicit,
    NotPartitioned,
    PreconditionViolated,
)
from rrk_lab.integrators import (
    GammaMode,
    Invariant,
    OdeProblem,
    Partition,
    Scheme,
    dirk_step,
    finite_difference_gradient,
    gamma_quadratic_closed_form,
    gamma_root_solve,
    integrate,
    projection_step,
    rk_step,
    rk_step_explicit,
    rrk_step,
    symplectic_euler_step,
)
from rrk_lab.problems import (
    duffing,
    euclidean_hamiltonian,
    harmonic_oscillator,
    henon_heiles,
    kdv_semidiscretization,
    kepler,
    lotka_volterra,
    nonlinear_oscillator,
)
from rrk_lab.tableaux import ButcherTableau, registry_get, stability_monomial_coefficients

EXPLICIT = ["ssprk22", "ssprk33", "heun3", "rk44", "fehlberg4", "dp75", "bs85"]
DIRK = ["norsett23", "sdirk34", "sdirk54"]


def zero_problem(dim=3):
    return OdeProblem("zero", dim, lambda t, u: np.zeros_like(u), np.arange(1.0, dim + 1),
                      invariants={"energy": Invariant("energy", lambda u: 0.5 * float(u @ u),
                                                      lambda u: u, metric=1.0)})


def scalar_linear(lam):
    return OdeProblem("linear", 1, lambda t, u: lam * u, np.array([1.0]),
                      jacobian=lambda t, u: np.array([[lam]]))


def R_det(t: ButcherTableau, z: float) -> float:
    s = t.s
    I = np.eye(s)
    return (np.linalg.det(I - z * t.A + z * np.outer(np.ones(s), t.b))
            / np.linalg.det(I - z * t.A))


# ---------------------------------------------------------------------------
# explicit steps


@pytest.mark.parametrize("name", EXPLICIT)
def test_explicit_zero_rhs(name):
    p = zero_problem()
    u_plus, d = rk_step_explicit(p, registry_get(name), 0.0, p.u0, 0.3)
    np.testing.assert_array_equal(u_plus, p.u0)
    np.testing.assert_array_equal(d, 0.0)


def test_rk44_harmonic_matches_truncated_exponential():
    p = harmonic_oscillator()
    dt = 0.25
    u = np.array([1.0, 0.0])
    M = dt * np.array([[0.0, -1.0], [1.0, 0.0]])
    expected = sum(np.linalg.matrix_power(M, k) @ u / math.factorial(k) for k in range(5))
    u_plus, _ = rk_step_explicit(p, registry_get("rk44"), 0.0, u, dt)
    np.testing.assert_allclose(u_plus, expected, rtol=0, atol=1e-15)


@pytest.mark.parametrize("name", EXPLICIT)
def test_constant_rhs(name):
    p = OdeProblem("one", 1, lambda t, u: np.ones(1), np.array([2.0]))
    u_plus, _ = rk_step_explicit(p, registry_get(name), 0.0, p.u0, 0.5)
    assert u_plus[0] == pytest.approx(2.5, abs=1e-15)


def test_explicit_rejects_dirk_and_bad_dt():
    p = harmonic_oscillator()
    with pytest.raises(NotExplicit):
        rk_step_explicit(p, registry_get("norsett23"), 0.0, p.u0, 0.1)
    with pytest.raises(PreconditionViolated):
        rk_step_explicit(p, registry_get("rk44"), 0.0, p.u0, 0.0)


def test_non_finite_stage():
    p = OdeProblem("nan", 1, lambda t, u: np.array([math.nan]), np.array([1.0]))
    with pytest.raises(NonFiniteState):
        rk_step_explicit(p, registry_get("rk44"), 0.0, p.u0, 0.1)


def test_explicit_stability_polynomial(rng):
    # On u' = lam u one step multiplies by sum_k alpha_k z^k.
    for name in EXPLICIT:
        t = registry_get(name)
        alpha = stability_monomial_coefficients(t)
        for z in rng.uniform(-2, 0.5, 5):
            u_plus, _ = rk_step_explicit(scalar_linear(z), t, 0.0, np.array([1.0]), 1.0)
            expected = 1 + sum(alpha[k] * z ** (k + 1) for k in range(t.s))
            assert u_plus[0] == pytest.approx(expected, rel=1e-13, abs=1e-15)


# ---------------------------------------------------------------------------
# DIRK steps


@pytest.mark.parametrize("name", DIRK)
def test_dirk_zero_rhs_one_iteration_per_stage(name):
    t = registry_get(name)
    p = zero_problem()
    u_plus, d, iters = dirk_step(p, t, 0.0, p.u0, 0.5)
    np.testing.assert_array_equal(u_plus, p.u0)
    assert iters == int(np.count_nonzero(np.diag(t.A)))


@pytest.mark.parametrize("name", DIRK)
def test_dirk_linear_matches_stability_function(name, rng):
    t = registry_get(name)
    for z in rng.uniform(-2.0, 0.5, 20):
        u_plus, _, _ = dirk_step(scalar_linear(z), t, 0.0, np.array([1.0]), 1.0)
        assert u_plus[0] == pytest.approx(R_det(t, z), rel=1e-12, abs=1e-14)


def test_dirk_rejects_explicit():
    with pytest.raises(PreconditionViolated):
        dirk_step(harmonic_oscillator(), registry_get("rk44"), 0.0, np.array([1.0, 0.0]), 0.1)


def test_dirk_fd_jacobian_matches_analytic():
    p = harmonic_oscillator()
    assert p.jacobian is not None
    q = OdeProblem("harmonic-nojac", 2, p.rhs, p.u0)
    t = registry_get("sdirk34")
    a, _, _ = dirk_step(p, t, 0.0, p.u0, 0.3)
    b, _, _ = dirk_step(q, t, 0.0, p.u0, 0.3)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)
    kd = kdv_semidiscretization(N=32)
    kd_fd = OdeProblem("kdv-fd", kd.dim, kd.rhs, kd.u0)
    a, _, _ = dirk_step(kd, registry_get("norsett23"), 0.0, kd.u0, 0.5)
    b, _, _ = dirk_step(kd_fd, registry_get("norsett23"), 0.0, kd.u0, 0.5)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-10)


def test_dirk_newton_divergence():
    p = OdeProblem("cubic", 1, lambda t, u: -(u**3), np.array([3.0]))
    with pytest.raises(NewtonDivergence):
        dirk_step(p, registry_get("norsett23"), 0.0, p.u0, 1.0, tol=1e-14, max_iter=1)


def test_dirk_kdv_newton_counts_and_accuracy():
    p = kdv_semidiscretization(N=64)
    t = registry_get("norsett23")
    F, d, iters = rk_step(p, t, 0.0, p.u0, 0.5)
    # Stage equations satisfied to the Newton tolerance.
    g = (3 + math.sqrt(3)) / 6
    y1 = p.u0 + 0.5 * g * F[0]
    assert np.max(np.abs(p.rhs(0.0, y1) - F[0])) <= 1e-9
    assert iters <= 2 * 10
    # Cross-check against a fine explicit reference over the same step.
    u = p.u0.copy()
    for _ in range(2000):
        u, _ = rk_step_explicit(p, registry_get("rk44"), 0.0, u, 0.5 / 2000)
    assert p.error_norm(p.u0 + 0.5 * d - u) <= 2e-3


# ---------------------------------------------------------------------------
# relaxation parameter


def test_closed_form_gamma_is_one_for_midpoint_on_skew():
    mid = ButcherTableau.from_coefficients("midpoint", [[0.5]], [1.0], 2)
    p = harmonic_oscillator()
    F, _, _ = rk_step(p, mid, 0.0, p.u0, 0.3)
    assert gamma_quadratic_closed_form(F, mid.b, mid.A, 0.3) == pytest.approx(1.0, abs=1e-14)


def test_closed_form_degenerate():
    with pytest.raises(DegenerateDirection):
        gamma_quadratic_closed_form(np.zeros((4, 2)), registry_get("rk44").b,
                                    registry_get("rk44").A, 0.1)


def _gamma_ho(name, dt):
    p = harmonic_oscillator()
    t = registry_get(name)
    F, _, _ = rk_step(p, t, 0.0, p.u0, dt)
    return gamma_quadratic_closed_form(F, t.b, t.A, dt)


def test_gamma_rk44_fourth_power():
    g1, g2 = _gamma_ho("rk44", 0.25) - 1, _gamma_ho("rk44", 0.125) - 1
    assert abs(g1) <= 0.25**4
    assert g1 / g2 == pytest.approx(16, rel=0.05)


def test_gamma_heun3_expansion():
    # gamma - 1 ~ -2 (alpha_4 - 1/24) dt^2 |L^2 u0|^2 / |L u0|^2 = dt^2 / 12 with alpha_4 = 0.
    g1, g2 = _gamma_ho("heun3", 0.2) - 1, _gamma_ho("heun3", 0.1) - 1
    assert g1 / g2 == pytest.approx(4, rel=0.02)
    assert g2 == pytest.approx(0.1**2 / 12, rel=0.01)


def test_root_matches_bisection_lotka_volterra():
    p = lotka_volterra()
    H = p.invariants["energy"]
    t = registry_get("rk44")
    u = p.u0
    for _ in range(20):
        _, d = rk_step_explicit(p, t, 0.0, u, 0.85)
        g, nfev = gamma_root_solve(H, u, d, 0.85)
        oracle = bisect(lambda x: H(u + x * 0.85 * d) - H(u), 0.5, 1.5, xtol=1e-15)
        assert 0.9 < g < 1.1
        assert g == pytest.approx(oracle, abs=1e-12)
        u_new = u + g * 0.85 * d
        assert abs(H(u_new) - H(u)) <= 1e-12
        u = u_new


def test_root_flat_returns_one():
    H = lambda u: float(u[0])  # noqa: E731
    g, _ = gamma_root_solve(H, np.array([1.0, 2.0]), np.array([0.0, 1.0]), 0.1)
    assert g == 1.0


def test_root_bracket_failure():
    H = lambda u: float(u @ u)  # noqa: E731
    with pytest.raises(BracketFailure):
        gamma_root_solve(H, np.array([1.0, 0.0]), np.array([1.0, 0.0]), 0.1)


def test_root_picks_nearest_to_one():
    # r(g) = g (g - 0.92) (g - 1.05): sign changes on both sides of 1, nearest root 1.05.
    H = lambda u: float(u[0] * (u[0] - 0.92) * (u[0] - 1.05))  # noqa: E731
    g, _ = gamma_root_solve(H, np.zeros(1), np.ones(1), 1.0)
    assert g == pytest.approx(1.05, abs=1e-14)
    H = lambda u: float(u[0] * (u[0] - 0.97) * (u[0] - 1.2))  # noqa: E731
    g, _ = gamma_root_solve(H, np.zeros(1), np.ones(1), 1.0)
    assert g == pytest.approx(0.97, abs=1e-14)


def test_root_exact_zero_at_bracket_end():
    H = lambda u: float(u[0] * (u[0] - 0.9) * (u[0] - 1.05))  # noqa: E731
    g, _ = gamma_root_solve(H, np.zeros(1), np.ones(1), 1.0)
    assert g == pytest.approx(1.05, abs=1e-14)


def _quadratic_cases():
    ho = harmonic_oscillator()
    nl = nonlinear_oscillator()
    kp = kepler()
    kd = kdv_semidiscretization(N=32)
    eu = euclidean_hamiltonian(g=lambda x: 1 + x, half_dim=2)
    return [(ho, "energy"), (nl, "energy"), (kp, "angular_momentum"), (kd, "energy"),
            (eu, "energy")]


def test_closed_form_vs_root_100_random_steps(rng):
    cases = _quadratic_cases()
    methods = ["ssprk33", "heun3", "rk44", "bs85", "norsett23"]
    worst = 0.0
    for k in range(100):
        p, inv = cases[k % len(cases)]
        t = registry_get(methods[k % len(methods)])
        u = p.u0 + 0.1 * rng.standard_normal(p.dim) * (np.abs(p.u0).max() + 0.1)
        dt = float(rng.uniform(0.01, 0.3))
        # The closed form assumes exact stage equations, so DIRK stages are solved tightly.
        F, d, _ = rk_step(p, t, 0.0, u, dt, tol=1e-14)
        gc = gamma_quadratic_closed_form(F, t.b, t.A, dt, p.invariants[inv].metric)
        gr, _ = gamma_root_solve(p.invariants[inv], u, d, dt)
        worst = max(worst, abs(gc - gr))
    assert worst <= 1e-11


# ---------------------------------------------------------------------------
# relaxation, projection and symplectic Euler steps


def test_rrk_duffing_conserves():
    p = duffing()
    H = p.invariants["energy"]
    u = p.u0
    for _ in range(50):
        out = rrk_step(p, registry_get("rk44"), "energy", 0.0, u, 0.5)
        assert abs(H(out.u_next) - H(u)) <= 5e-13 * max(1, abs(H(u)))
        assert 0 < out.gamma < 2 and out.dt_effective == pytest.approx(out.gamma * 0.5)
        u = out.u_next


def test_rrk_kepler_angular_momentum():
    p = kepler()
    L = p.invariants["angular_momentum"]
    u = p.u0
    for mode in (GammaMode.ROOT_FIND, GammaMode.QUADRATIC_CLOSED_FORM):
        for _ in range(30):
            out = rrk_step(p, registry_get("ssprk33"), "angular_momentum", 0.0, u, 0.05, mode)
            assert abs(L(out.u_next) - L(u)) <= 5e-13
            u = out.u_next


def test_rrk_constant_rhs_gamma_one():
    c = np.array([1.0, 0.0])
    p = OdeProblem("advect", 2, lambda t, u: c, np.array([0.0, 1.0]),
                   invariants={"y": Invariant("y", lambda u: float(u[1]), lambda u: np.array([0.0, 1.0]))})
    out = rrk_step(p, registry_get("rk44"), "y", 0.0, p.u0, 0.3)
    assert out.gamma == 1.0
    np.testing.assert_array_equal(out.u_next, p.u0 + 0.3 * c)


def test_rrk_requires_registered_invariant():
    with pytest.raises(ConfigError):
        rrk_step(harmonic_oscillator(), registry_get("rk44"), "mass", 0.0, np.ones(2), 0.1)


def test_quadratic_mode_rejects_nonquadratic():
    p = lotka_volterra()
    with pytest.raises(ConfigError):
        rrk_step(p, registry_get("rk44"), "energy", 0.0, p.u0, 0.1, GammaMode.QUADRATIC_CLOSED_FORM)


def test_projection_on_manifold_is_identity():
    c = np.array([1.0, 0.0])
    p = OdeProblem("advect", 2, lambda t, u: c, np.array([0.0, 1.0]),
                   invariants={"y": Invariant("y", lambda u: float(u[1]), lambda u: np.array([0.0, 1.0]))})
    out = projection_step(p, registry_get("rk44"), "y", 0.0, p.u0, 0.3)
    np.testing.assert_array_equal(out.u_next, p.u0 + 0.3 * c)
    assert math.isnan(out.gamma) and out.dt_effective == 0.3


def test_projection_kdv_is_radial_rescale():
    p = kdv_semidiscretization(N=64)
    t = registry_get("norsett23")
    u = p.u0
    for _ in range(3):
        _, d, _ = rk_step(p, t, 0.0, u, 0.5)
        u_plus = u + 0.5 * d
        out = projection_step(p, t, "energy", 0.0, u, 0.5)
        rescaled = u_plus * (np.linalg.norm(u) / np.linalg.norm(u_plus))
        assert np.max(np.abs(out.u_next - rescaled)) <= 1e-12
        u = out.u_next


def test_symplectic_euler_harmonic_matrix():
    p = harmonic_oscillator()
    dt = 0.25
    q0, p0 = 0.3, -0.7
    u = np.zeros(2)
    u[p.partition.q_index], u[p.partition.p_index] = q0, p0
    out = symplectic_euler_step(p, 0.0, u, dt)
    # p first (explicit for separable H), then q with the new p.
    M = np.array([[1 - dt**2, dt], [-dt, 1.0]])
    q1, p1 = M @ [q0, p0]
    assert out[p.partition.q_index][0] == pytest.approx(q1, abs=1e-15)
    assert out[p.partition.p_index][0] == pytest.approx(p1, abs=1e-15)
    assert np.linalg.det(M) == pytest.approx(1.0)


def test_symplectic_euler_free_particle():
    part = Partition(np.array([0]), np.array([1]), lambda q, p: 0 * q, lambda q, p: p)
    prob = OdeProblem("free", 2, lambda t, u: np.array([u[1], 0.0]), np.array([0.0, 2.0]),
                      partition=part)
    out = symplectic_euler_step(prob, 0.0, prob.u0, 0.5)
    np.testing.assert_array_equal(out, [1.0, 2.0])


def test_symplectic_euler_nonseparable_solves_implicit_p():
    p = euclidean_hamiltonian(g=lambda x: 1 + x)
    u = np.array([0.6, 0.3])
    dt = 0.1
    out = symplectic_euler_step(p, 0.0, u, dt)
    q0, p0 = u
    q1, p1 = out
    g = lambda q, pp: 1 + 0.5 * (q * q + pp * pp)  # noqa: E731
    assert p1 == pytest.approx(p0 - dt * g(q0, p1) * q0, abs=1e-13)
    assert q1 == pytest.approx(q0 + dt * g(q0, p1) * p1, abs=1e-13)


def test_symplectic_euler_needs_partition():
    with pytest.raises(NotPartitioned):
        symplectic_euler_step(lotka_volterra(), 0.0, np.ones(2), 0.1)
    with pytest.raises(NotPartitioned):
        integrate(lotka_volterra(), None, "symplectic-euler", t_end=1, dt=0.1)


# ---------------------------------------------------------------------------
# integrate


def test_integrate_zero_rhs():
    p = zero_problem()
    tr = integrate(p, registry_get("rk44"), "relaxation", t_end=1.0, dt=0.25, invariant="energy")
    assert np.all(tr.states == p.u0)
    np.testing.assert_array_equal(tr.gammas, 1.0)
    np.testing.assert_allclose(tr.times, [0, 0.25, 0.5, 0.75, 1.0])


@pytest.mark.parametrize("name", ["ssprk22", "heun3", "rk44", "bs85", "sdirk34"])
def test_integrate_nonlinear_oscillator_norm(name):
    p = nonlinear_oscillator()
    tr = integrate(p, registry_get(name), "relaxation", t_end=20.0, dt=0.2, invariant="energy")
    assert np.max(np.abs(np.linalg.norm(tr.states, axis=1) - 1.0)) <= 1e-12


def test_henon_heiles_baseline_dissipates():
    p = henon_heiles()
    tr = integrate(p, registry_get("ssprk33"), "baseline", t_end=1000.0, dt=0.1)
    H = tr.invariant_series["energy"]
    assert np.all(np.diff(H) < 0)


def test_trajectory_grid_invariants():
    p = kepler()
    for scheme in ("baseline", "relaxation", "projection"):
        tr = integrate(p, registry_get("rk44"), scheme, t_end=3.05, dt=0.1, invariant="energy")
        assert len(tr.states) == len(tr.times) == len(tr.gammas) + 1
        assert np.all(np.diff(tr.times) > 0)
        if scheme == "relaxation":
            np.testing.assert_allclose(np.diff(tr.times), tr.gammas * tr.steps, rtol=1e-14)
            assert abs(tr.final_time - 3.05) < 0.1
        else:
            np.testing.assert_allclose(np.diff(tr.times), tr.steps, rtol=1e-14)
            assert tr.final_time == pytest.approx(3.05, abs=1e-12)
            assert tr.steps[-1] == pytest.approx(0.05)


def test_integrate_attaches_step_index():
    p = lotka_volterra()
    with pytest.raises(DomainViolation) as exc:
        integrate(p, registry_get("rk44"), "baseline", t_end=100.0, dt=3.0)
    assert exc.value.step_index == 0


def test_integrate_preconditions():
    p = harmonic_oscillator()
    with pytest.raises(PreconditionViolated):
        integrate(p, registry_get("rk44"), "baseline", t_end=0.0, dt=0.1)
    with pytest.raises(PreconditionViolated):
        integrate(p, registry_get("rk44"), "baseline", t_end=1.0, dt=-0.1)
    with pytest.raises(ConfigError):
        integrate(p, registry_get("rk44"), "relaxation", t_end=1.0, dt=0.1)
    with pytest.raises(ConfigError):
        integrate(p, None, "baseline", t_end=1.0, dt=0.1)
    with pytest.raises(ValueError):
        integrate(p, registry_get("rk44"), "leapfrog", t_end=1.0, dt=0.1)


def test_kdv_relaxation_preserves_mass():
    p = kdv_semidiscretization(N=64)
    tr = integrate(p, registry_get("norsett23"), Scheme.RELAXATION, t_end=20.0, dt=0.5,
                   invariant="energy")
    mass = tr.states.sum(axis=1)
    assert np.max(np.abs(mass - mass[0])) <= 1e-10 * p.dim
    E = tr.invariant_series["energy"]
    assert np.max(np.abs(E - E[0])) <= 1e-11 * max(1, abs(E[0]))


def test_fd_gradient():
    f = lambda u: float(np.sin(u[0]) * u[1] ** 2)  # noqa: E731
    u = np.array([0.3, -1.2])
    g = finite_difference_gradient(f, u)
    np.testing.assert_allclose(g, [np.cos(0.3) * 1.44, 2 * np.sin(0.3) * -1.2], rtol=1e-9)
    inv = Invariant("f", f)
    np.testing.assert_allclose(inv.gradient(u), g)
    assert not inv.is_quadratic


@given(q1=st.floats(-0.3, 0.3), q2=st.floats(-0.3, 0.3), p1=st.floats(-0.3, 0.3),
       p2=st.floats(-0.3, 0.3), dt=st.floats(0.01, 0.2),
       method=st.sampled_from(["ssprk33", "rk44", "bs85", "sdirk34"]))
def test_relaxation_step_conserves_property(q1, q2, p1, p2, dt, method):
    p = henon_heiles()
    u = np.array([q1, q2, p1, p2])
    H = p.invariants["energy"]
    try:
        out = rrk_step(p, registry_get(method), "energy", 0.0, u, dt)
    except DegenerateDirection:
        return
    assert abs(H(out.u_next) - H(u)) <= 5e-13 * max(1, abs(H(u)))
    assert 0 < out.gamma < 2


@given(x=st.lists(st.floats(-2, 2), min_size=2, max_size=2), dt=st.floats(0.01, 0.5),
       method=st.sampled_from(["ssprk22", "heun3", "rk44", "dp75"]))
def test_closed_form_equals_root_property(x, dt, method):
    u = np.array(x)
    if np.linalg.norm(u) < 1e-3:
        return
    p = harmonic_oscillator()
    t = registry_get(method)
    F, d, _ = rk_step(p, t, 0.0, u, dt)
    gc = gamma_quadratic_closed_form(F, t.b, t.A, dt)
    gr, _ = gamma_root_solve(p.invariants["energy"], u, d, dt)
    assert abs(gc - gr) <= 1e-11
