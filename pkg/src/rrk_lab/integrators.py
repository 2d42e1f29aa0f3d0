"""Baseline, relaxation and projection Runge-Kutta stepping.

A relaxation step computes the usual RK direction ``d = sum_i b_i f_i`` and then
takes ``u + gamma*dt*d`` with ``gamma`` chosen so that a selected invariant is
unchanged. The relaxed state is interpreted as an approximation at time
``t + gamma*dt``, so relaxation runs produce non-uniform time grids.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np
from scipy import optimize

from .errors import (
    BracketFailure,
    ConfigError,
    DegenerateDirection,
    NewtonDivergence,
    NonFiniteState,
    NotExplicit,
    NotPartitioned,
    NumericalError,
    PreconditionViolated,
    ToleranceNotMet,
)
from .tableaux import ButcherTableau

__all__ = [
    "Invariant",
    "Partition",
    "OdeProblem",
    "StepOutcome",
    "Trajectory",
    "Scheme",
    "GammaMode",
    "rk_step_explicit",
    "dirk_step",
    "rk_step",
    "gamma_quadratic_closed_form",
    "gamma_root_solve",
    "rrk_step",
    "projection_step",
    "symplectic_euler_step",
    "integrate",
]

EPS = np.finfo(float).eps

GAMMA_TOL = 1e-13
NEWTON_TOL = 1e-11
NEWTON_MAX_ITER = 50
PROJECTION_TOL = 1e-13
PROJECTION_MAX_ITER = 50


@dataclass(frozen=True)
class Invariant:
    """A scalar functional ``H(u)`` that the exact flow conserves.

    ``metric`` marks quadratic invariants ``H(u) = 1/2 u^T M u``: a scalar,
    a vector (diagonal ``M``) or a full matrix. Only those admit the
    closed-form relaxation parameter.
    """

    name: str
    fn: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray] | None = None
    metric: float | np.ndarray | None = None

    def __call__(self, u: np.ndarray) -> float:
        return self.fn(u)

    @property
    def is_quadratic(self) -> bool:
        return self.metric is not None

    def gradient(self, u: np.ndarray) -> np.ndarray:
        if self.grad is not None:
            return np.asarray(self.grad(u), dtype=float)
        return finite_difference_gradient(self.fn, u)


def finite_difference_gradient(fn: Callable[[np.ndarray], float], u: np.ndarray) -> np.ndarray:
    """Central differences with ``h = cbrt(eps) * max(1, |u_i|)``."""
    u = np.asarray(u, dtype=float)
    g = np.empty_like(u)
    e = np.zeros_like(u)
    for i in range(u.size):
        h = np.cbrt(EPS) * max(1.0, abs(u[i]))
        e[i] = h
        g[i] = (fn(u + e) - fn(u - e)) / (2.0 * h)
        e[i] = 0.0
    return g


@dataclass(frozen=True)
class Partition:
    """Canonical ``(q, p)`` split of the state used by symplectic Euler.

    ``dH_dq`` and ``dH_dp`` take ``(q, p)`` and return the partial gradients.
    """

    q_index: np.ndarray
    p_index: np.ndarray
    dH_dq: Callable[[np.ndarray, np.ndarray], np.ndarray]
    dH_dp: Callable[[np.ndarray, np.ndarray], np.ndarray]
    separable: bool = True


@dataclass(frozen=True)
class OdeProblem:
    name: str
    dim: int
    rhs: Callable[[float, np.ndarray], np.ndarray]
    u0: np.ndarray
    invariants: Mapping[str, Invariant] = field(default_factory=dict)
    analytic_solution: Callable[[float], np.ndarray] | None = None
    jacobian: Callable[[float, np.ndarray], np.ndarray] | None = None
    partition: Partition | None = None
    t0: float = 0.0
    # Error norm is sqrt(error_weight) * Euclidean norm (grid spacing for PDEs).
    error_weight: float = 1.0
    metadata: Mapping[str, Any] = field(default_factory=dict)

    def invariant(self, name: str) -> Invariant:
        try:
            return self.invariants[name]
        except KeyError:
            known = ", ".join(self.invariants) or "none"
            raise ConfigError(
                f"problem {self.name!r} has no invariant {name!r} (registered: {known})",
                key="invariant",
            ) from None

    def error_norm(self, e: np.ndarray) -> float:
        return math.sqrt(self.error_weight) * float(np.linalg.norm(e))


@dataclass
class StepOutcome:
    u_next: np.ndarray
    gamma: float
    dt_effective: float
    newton_iterations: int = 0
    gamma_solver_iterations: int = 0


@dataclass
class Trajectory:
    """States on a (possibly non-uniform) time grid.

    ``gammas[k]`` is the relaxation parameter of step ``k`` (1 for baseline
    runs, NaN where it does not apply) and ``steps[k]`` the nominal step size
    used, so ``times[k+1] - times[k] == gammas[k] * steps[k]`` for relaxation.
    """

    times: np.ndarray
    states: np.ndarray
    gammas: np.ndarray
    steps: np.ndarray
    invariant_series: dict[str, np.ndarray]
    scheme: "Scheme"
    method: str | None = None
    newton_iterations: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.times)

    @property
    def final_time(self) -> float:
        return float(self.times[-1])

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]


class Scheme(enum.Enum):
    BASELINE = "baseline"
    RELAXATION = "relaxation"
    PROJECTION = "projection"
    SYMPLECTIC_EULER = "symplectic-euler"


class GammaMode(enum.Enum):
    ROOT_FIND = "root"
    QUADRATIC_CLOSED_FORM = "quadratic"


def _check_finite(x: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(x)):
        raise NonFiniteState(f"non-finite values in {what}")


# ---------------------------------------------------------------------------
# Baseline stages


def _explicit_stages(problem: OdeProblem, t: ButcherTableau, tn: float, u: np.ndarray, dt: float):
    s = t.s
    F = np.zeros((s, u.size))
    A, c = t.A, t.c
    for i in range(s):
        y = u + dt * (A[i, :i] @ F[:i]) if i else u
        F[i] = problem.rhs(tn + c[i] * dt, y)
        _check_finite(F[i], f"stage {i + 1} of {t.name}")
    return F


def rk_step_explicit(problem: OdeProblem, t: ButcherTableau, tn: float, u: np.ndarray, dt: float):
    """One explicit RK step. Returns ``(u_plus, d)`` with ``u_plus = u + dt*d``."""
    if not t.is_explicit:
        raise NotExplicit(f"{t.name} is diagonally implicit; use dirk_step")
    if dt <= 0:
        raise PreconditionViolated("dt must be positive")
    u = np.asarray(u, dtype=float)
    F = _explicit_stages(problem, t, tn, u, dt)
    d = t.b @ F
    return u + dt * d, d


def _jacobian(problem: OdeProblem, t: float, y: np.ndarray, fy: np.ndarray) -> np.ndarray:
    if problem.jacobian is not None:
        return np.asarray(problem.jacobian(t, y), dtype=float)
    n = y.size
    J = np.empty((n, n))
    yp = y.copy()
    sq = math.sqrt(EPS)
    for k in range(n):
        h = sq * max(1.0, abs(y[k]))
        yp[k] = y[k] + h
        J[:, k] = (problem.rhs(t, yp) - fy) / h
        yp[k] = y[k]
    return J


def _dirk_stages(problem, t: ButcherTableau, tn, u, dt, tol, max_iter):
    s = t.s
    n = u.size
    F = np.zeros((s, n))
    A, c = t.A, t.c
    eye = np.eye(n)
    total = 0
    for i in range(s):
        ti = tn + c[i] * dt
        known = u + dt * (A[i, :i] @ F[:i]) if i else u.copy()
        aii = A[i, i]
        y = known.copy()
        if aii == 0.0:
            F[i] = problem.rhs(ti, y)
            _check_finite(F[i], f"stage {i + 1} of {t.name}")
            continue
        for it in range(1, max_iter + 1):
            fy = problem.rhs(ti, y)
            g = y - known - dt * aii * fy
            _check_finite(g, f"Newton residual, stage {i + 1} of {t.name}")
            if np.max(np.abs(g)) <= tol:
                break
            J = eye - dt * aii * _jacobian(problem, ti, y, fy)
            y = y - np.linalg.solve(J, g)
        else:
            raise NewtonDivergence(
                f"stage {i + 1} of {t.name}: residual {np.max(np.abs(g)):.3e} > {tol:.1e} "
                f"after {max_iter} Newton iterations"
            )
        total += it
        F[i] = fy
    return F, total


def dirk_step(problem: OdeProblem, t: ButcherTableau, tn: float, u: np.ndarray, dt: float,
              tol: float = NEWTON_TOL, max_iter: int = NEWTON_MAX_ITER):
    """One DIRK step with each stage solved sequentially by Newton's method.

    Returns ``(u_plus, d, iters)`` where ``iters`` counts residual evaluations
    summed over the implicit stages.
    """
    if t.is_explicit:
        raise PreconditionViolated(f"{t.name} is explicit; use rk_step_explicit")
    if dt <= 0:
        raise PreconditionViolated("dt must be positive")
    u = np.asarray(u, dtype=float)
    F, iters = _dirk_stages(problem, t, tn, u, dt, tol, max_iter)
    d = t.b @ F
    return u + dt * d, d, iters


def rk_step(problem, t: ButcherTableau, tn, u, dt, tol=NEWTON_TOL, max_iter=NEWTON_MAX_ITER):
    """Stage derivatives, direction and Newton count for either tableau kind."""
    u = np.asarray(u, dtype=float)
    if t.is_explicit:
        F = _explicit_stages(problem, t, tn, u, dt)
        iters = 0
    else:
        F, iters = _dirk_stages(problem, t, tn, u, dt, tol, max_iter)
    return F, t.b @ F, iters


# ---------------------------------------------------------------------------
# Relaxation parameter


def _gram(F: np.ndarray, metric) -> np.ndarray:
    if metric is None or np.isscalar(metric):
        G = F @ F.T
        return G if metric is None else metric * G
    metric = np.asarray(metric)
    if metric.ndim == 1:
        return (F * metric) @ F.T
    return F @ metric @ F.T


def gamma_quadratic_closed_form(stage_derivatives, b, A, dt: float, metric=None) -> float:
    """Relaxation parameter for ``H(u) = 1/2 <u, M u>`` from the stage derivatives.

    ``gamma = 2 sum_ij b_i a_ij <f_i, f_j> / sum_ij b_i b_j <f_i, f_j>``, valid
    when the vector field is tangent to the level sets (``<y, M f(y)> = 0``).
    ``dt`` cancels; it is accepted for symmetry with the root solver.
    """
    F = np.atleast_2d(np.asarray(stage_derivatives, dtype=float))
    b = np.asarray(b, dtype=float)
    A = np.asarray(A, dtype=float)
    G = _gram(F, metric)
    den = b @ G @ b
    scale = np.abs(b) @ np.abs(G) @ np.abs(b)
    if not den > EPS * scale or den <= 0.0:
        raise DegenerateDirection("sum_ij b_i b_j <f_i, f_j> vanishes: stationary step")
    num = 2.0 * np.sum(b[:, None] * A * G)
    return float(num / den)


def gamma_root_solve(H: Callable[[np.ndarray], float], u: np.ndarray, d: np.ndarray, dt: float,
                     tol: float = GAMMA_TOL, delta: float = 0.1, expansions: int = 8):
    """Root of ``r(gamma) = H(u + gamma*dt*d) - H(u)`` closest to 1.

    The trivial root ``gamma = 0`` is excluded by keeping brackets inside
    ``(0, 2)``. Returns ``(gamma, function_evaluations)``.
    """
    if dt <= 0:
        raise PreconditionViolated("dt must be positive")
    H0 = H(u)
    scale = max(1.0, abs(H0))
    step = dt * np.asarray(d, dtype=float)
    if not np.any(step):
        raise DegenerateDirection("relaxation direction is zero")

    def r(g):
        return H(u + g * step) - H0

    r1 = r(1.0)
    nfev = 1
    if r1 == 0.0:
        return 1.0, nfev

    lo_min, hi_max = 1e-8, 2.0 - 1e-8
    brackets: list[tuple[float, float]] = []
    for k in range(expansions + 1):
        dk = delta * 2.0**k
        lo, hi = max(1.0 - dk, lo_min), min(1.0 + dk, hi_max)
        r_lo, r_hi = r(lo), r(hi)
        nfev += 2
        if np.sign(r_lo) != np.sign(r1):
            brackets.append((lo, 1.0))
        if np.sign(r_hi) != np.sign(r1):
            brackets.append((1.0, hi))
        if brackets or (lo == lo_min and hi == hi_max):
            break

    if not brackets:
        if abs(r1) <= tol * scale:
            # r is flat to within tolerance: the baseline step already conserves H.
            return 1.0, nfev
        raise BracketFailure(
            f"no sign change of H(u + gamma dt d) - H(u) for gamma in (0, 2); r(1) = {r1:.3e}"
        )

    roots = []
    for bracket in brackets:
        try:
            root, info = optimize.brentq(r, *bracket, xtol=1e-300, rtol=4 * EPS,
                                         maxiter=200, full_output=True)
        except RuntimeError as exc:
            raise ToleranceNotMet(str(exc)) from exc
        nfev += info.function_calls
        roots.append(root)
    # Both sides may change sign at the same bracket width; keep the root nearest 1.
    gamma = min(roots, key=lambda g: abs(g - 1.0))
    res = r(gamma)
    nfev += 1
    if abs(res) > tol * scale:
        raise ToleranceNotMet(f"|r(gamma)| = {abs(res):.3e} exceeds {tol * scale:.3e}")
    return float(gamma), nfev


def rrk_step(problem: OdeProblem, t: ButcherTableau, invariant_name: str, tn: float,
             u: np.ndarray, dt: float, mode: GammaMode = GammaMode.ROOT_FIND,
             gamma_tol: float = GAMMA_TOL, newton_tol: float = NEWTON_TOL,
             newton_max_iter: int = NEWTON_MAX_ITER) -> StepOutcome:
    """Relaxation RK step conserving ``problem.invariants[invariant_name]``."""
    inv = problem.invariant(invariant_name)
    u = np.asarray(u, dtype=float)
    F, d, iters = rk_step(problem, t, tn, u, dt, newton_tol, newton_max_iter)
    nfev = 0
    try:
        if mode is GammaMode.QUADRATIC_CLOSED_FORM:
            if not inv.is_quadratic:
                raise ConfigError(f"invariant {invariant_name!r} is not quadratic", key="gamma_mode")
            gamma = gamma_quadratic_closed_form(F, t.b, t.A, dt, inv.metric)
        else:
            gamma, nfev = gamma_root_solve(inv.fn, u, d, dt, gamma_tol)
    except DegenerateDirection:
        gamma = 1.0
    if not 0.0 < gamma < 2.0:
        raise BracketFailure(f"relaxation parameter {gamma!r} outside (0, 2)")
    u_next = u + gamma * dt * d
    _check_finite(u_next, "relaxed state")
    return StepOutcome(u_next, gamma, gamma * dt, iters, nfev)


def projection_step(problem: OdeProblem, t: ButcherTableau, invariant_name: str, tn: float,
                    u: np.ndarray, dt: float, tol: float = PROJECTION_TOL,
                    max_iter: int = PROJECTION_MAX_ITER, newton_tol: float = NEWTON_TOL,
                    newton_max_iter: int = NEWTON_MAX_ITER) -> StepOutcome:
    """Baseline step followed by orthogonal projection onto ``{H = H(u)}``.

    The correction is ``u_plus + lam * grad H(u_plus)``, with ``lam`` found
    by scalar Newton iteration starting from zero.
    """
    inv = problem.invariant(invariant_name)
    u = np.asarray(u, dtype=float)
    _, d, iters = rk_step(problem, t, tn, u, dt, newton_tol, newton_max_iter)
    u_plus = u + dt * d
    H0 = inv(u)
    scale = max(1.0, abs(H0))
    g = inv.gradient(u_plus)
    lam = 0.0
    for k in range(1, max_iter + 1):
        v = u_plus + lam * g
        phi = inv(v) - H0
        if abs(phi) <= tol * scale:
            break
        slope = inv.gradient(v) @ g
        if slope == 0.0 or not np.isfinite(slope):
            raise NewtonDivergence("projection Newton: vanishing derivative")
        dlam = phi / slope
        lam -= dlam
        if abs(dlam) <= 2 * EPS * abs(lam):
            v = u_plus + lam * g
            break
    else:
        raise NewtonDivergence(f"projection did not converge in {max_iter} iterations")
    _check_finite(v, "projected state")
    return StepOutcome(v, math.nan, dt, iters, k)


def symplectic_euler_step(problem: OdeProblem, tn: float, u: np.ndarray, dt: float,
                          tol: float = 1e-14, max_iter: int = 50) -> np.ndarray:
    """Symplectic Euler: implicit in ``p``, explicit in ``q``.

    ``p1 = p0 - dt dH/dq(q0, p1)``, then ``q1 = q0 + dt dH/dp(q0, p1)``. For
    separable Hamiltonians the first update is explicit; otherwise it is
    solved by fixed-point iteration.
    """
    part = problem.partition
    if part is None:
        raise NotPartitioned(f"problem {problem.name!r} declares no (q, p) partition")
    u = np.asarray(u, dtype=float)
    q0, p0 = u[part.q_index], u[part.p_index]
    p1 = p0 - dt * part.dH_dq(q0, p0)
    if not part.separable:
        for _ in range(max_iter):
            p_new = p0 - dt * part.dH_dq(q0, p1)
            done = np.max(np.abs(p_new - p1)) <= tol * max(1.0, np.max(np.abs(p_new)))
            p1 = p_new
            if done:
                break
        else:
            raise NewtonDivergence("symplectic Euler fixed-point iteration did not converge")
    q1 = q0 + dt * part.dH_dp(q0, p1)
    out = np.empty_like(u)
    out[part.q_index] = q1
    out[part.p_index] = p1
    _check_finite(out, "symplectic Euler state")
    return out


# ---------------------------------------------------------------------------
# Time loop


def integrate(problem: OdeProblem, tableau: ButcherTableau | None, scheme: Scheme | str,
              u0: np.ndarray | None = None, t0: float | None = None, t_end: float = 1.0,
              dt: float = 0.1, invariant: str | None = None,
              gamma_mode: GammaMode | str = GammaMode.ROOT_FIND,
              record: list[str] | None = None, gamma_tol: float = GAMMA_TOL,
              newton_tol: float = NEWTON_TOL, newton_max_iter: int = NEWTON_MAX_ITER,
              projection_tol: float = PROJECTION_TOL) -> Trajectory:
    """Integrate ``problem`` from ``t0`` to (about) ``t_end`` with fixed nominal step ``dt``.

    The last step is shortened to ``t_end - t``. Relaxation advances time by
    ``gamma*dt`` per step, so it ends within one step of ``t_end`` rather than
    exactly on it. Errors escaping a step carry the step index in
    ``exc.step_index``.
    """
    scheme = Scheme(scheme)
    gamma_mode = GammaMode(gamma_mode)
    u = np.array(problem.u0 if u0 is None else u0, dtype=float)
    t = problem.t0 if t0 is None else float(t0)
    if not t_end > t:
        raise PreconditionViolated("t_end must exceed t0")
    if not dt > 0:
        raise PreconditionViolated("dt must be positive")
    if scheme is Scheme.SYMPLECTIC_EULER:
        if problem.partition is None:
            raise NotPartitioned(f"problem {problem.name!r} declares no (q, p) partition")
    elif tableau is None:
        raise ConfigError(f"scheme {scheme.value} needs a Runge-Kutta method", key="method")
    if scheme in (Scheme.RELAXATION, Scheme.PROJECTION):
        if invariant is None:
            raise ConfigError(f"scheme {scheme.value} needs an invariant", key="invariant")
        problem.invariant(invariant)

    times = [t]
    states = [u]
    gammas: list[float] = []
    steps: list[float] = []
    newton: list[int] = []
    stop_tol = 1e-12 * max(1.0, abs(t_end))
    k = 0
    while t_end - t > stop_tol:
        h = min(dt, t_end - t)
        try:
            if scheme is Scheme.BASELINE:
                F, d, iters = rk_step(problem, tableau, t, u, h, newton_tol, newton_max_iter)
                u_new = u + h * d
                _check_finite(u_new, "state")
                gamma, advance = 1.0, h
            elif scheme is Scheme.RELAXATION:
                out = rrk_step(problem, tableau, invariant, t, u, h, gamma_mode,
                               gamma_tol, newton_tol, newton_max_iter)
                u_new, gamma, advance, iters = out.u_next, out.gamma, out.dt_effective, out.newton_iterations
            elif scheme is Scheme.PROJECTION:
                out = projection_step(problem, tableau, invariant, t, u, h, projection_tol,
                                      newton_tol=newton_tol, newton_max_iter=newton_max_iter)
                u_new, gamma, advance, iters = out.u_next, out.gamma, out.dt_effective, out.newton_iterations
            else:
                u_new = symplectic_euler_step(problem, t, u, h)
                gamma, advance, iters = 1.0, h, 0
        except NumericalError as exc:
            exc.step_index = k
            raise
        t = t + advance
        u = u_new
        times.append(t)
        states.append(u)
        gammas.append(gamma)
        steps.append(h)
        newton.append(iters)
        k += 1
        if h < dt:
            break

    states_arr = np.array(states)
    names = list(problem.invariants) if record is None else list(record)
    series = {
        name: np.array([problem.invariants[name](x) for x in states_arr]) for name in names
    }
    return Trajectory(
        times=np.array(times),
        states=states_arr,
        gammas=np.array(gammas),
        steps=np.array(steps),
        invariant_series=series,
        scheme=scheme,
        method=None if tableau is None else tableau.name,
        newton_iterations=np.array(newton, dtype=int),
    )
