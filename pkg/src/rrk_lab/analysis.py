"""Post-processing of trajectories: observed orders, error growth, sections,
phase volumes, temperatures, and checks of the asymptotic relaxation theory.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from scipy import optimize, stats

from .errors import (
    DegenerateCloud,
    NotApplicable,
    NotExplicit,
    NumericalError,
    PreconditionViolated,
    ReferenceUnavailable,
    SaturatedWindow,
)
from .integrators import (
    GammaMode,
    OdeProblem,
    Scheme,
    Trajectory,
    gamma_quadratic_closed_form,
    integrate,
    projection_step,
    rk_step,
    rrk_step,
    symplectic_euler_step,
)
from .tableaux import ButcherTableau, stability_monomial_coefficients

__all__ = [
    "LinearFit",
    "OrderFit",
    "GrowthFit",
    "Direction",
    "convergence_order",
    "error_growth_fit",
    "poincare_section",
    "make_stepper",
    "convex_hull_area_2d",
    "disk_cloud",
    "VolumeSeries",
    "volume_series",
    "TemperatureSeries",
    "kinetic_temperature",
    "temperature_series",
    "verify_lemma_a2",
    "GammaAsymptotics",
    "gamma_asymptotic_check",
]

EPS = np.finfo(float).eps
ORDER_WINDOW = (100.0 * EPS, 1e-1)
MIN_R_SQUARED = 0.98
SATURATION = 0.5
DEFAULT_SEED = 0x5EED


@dataclass(frozen=True)
class LinearFit:
    """Least-squares line ``y = slope * x + intercept`` with its fit quality."""

    slope: float
    intercept: float
    r_squared: float
    n: int

    @classmethod
    def of(cls, x, y) -> "LinearFit":
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if len(x) < 2:
            return cls(math.nan, math.nan, math.nan, len(x))
        if np.ptp(y) == 0.0:
            return cls(0.0, float(y[0]), 1.0, len(x))
        if len(x) == 2:
            slope, intercept = np.polyfit(x, y, 1)
            return cls(float(slope), float(intercept), 1.0, len(x))
        res = stats.linregress(x, y)
        return cls(float(res.slope), float(res.intercept), float(res.rvalue**2), len(x))


# ---------------------------------------------------------------------------
# Convergence order


@dataclass(frozen=True)
class OrderFit:
    """Observed order of convergence from final-time errors.

    ``window`` flags the step sizes whose errors lie in the asymptotic range
    and were used for the fit.
    """

    dts: np.ndarray
    errors: np.ndarray
    slope: float
    r_squared: float
    window: np.ndarray
    final_times: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def observed_order(self) -> float | None:
        """The slope if the fit is good enough to call it an order, else ``None``."""
        if np.isfinite(self.r_squared) and self.r_squared >= MIN_R_SQUARED:
            return self.slope
        return None


def _fit_order(dts, errors) -> tuple[float, float, np.ndarray]:
    dts = np.asarray(dts, dtype=float)
    errors = np.asarray(errors, dtype=float)
    lo, hi = ORDER_WINDOW
    window = (errors > lo) & (errors < hi)
    fit = LinearFit.of(np.log(dts[window]), np.log(errors[window]))
    return fit.slope, fit.r_squared, window


def convergence_order(problem: OdeProblem, tableau: ButcherTableau | None,
                      scheme: Scheme | str, dts: Sequence[float], t_end: float,
                      invariant: str | None = None,
                      gamma_mode: GammaMode | str = GammaMode.ROOT_FIND,
                      reference: Callable[[float], np.ndarray] | None = None) -> OrderFit:
    """Fit the observed order of ``scheme`` on ``problem`` over step sizes ``dts``.

    Each error is taken at the trajectory's actual final time (which differs
    from ``t_end`` for relaxation runs) against the reference evaluated there.
    """
    ref = reference or problem.analytic_solution
    if ref is None:
        raise ReferenceUnavailable(f"problem {problem.name!r} has no reference solution")
    dts = np.asarray(sorted(dts, reverse=True), dtype=float)
    if len(dts) < 4 or dts[0] / dts[-1] < 8.0 * (1 - 1e-12):
        raise PreconditionViolated("need at least 4 step sizes spanning a factor of 8")
    errors = np.empty(len(dts))
    finals = np.empty(len(dts))
    for i, dt in enumerate(dts):
        traj = integrate(problem, tableau, scheme, t_end=t_end, dt=float(dt),
                         invariant=invariant, gamma_mode=gamma_mode, record=[])
        finals[i] = traj.final_time
        errors[i] = problem.error_norm(traj.final_state - ref(traj.final_time))
    slope, r2, window = _fit_order(dts, errors)
    return OrderFit(dts, errors, slope, r2, window, finals)


# ---------------------------------------------------------------------------
# Error growth


@dataclass(frozen=True)
class GrowthFit:
    """Power-law fit ``error ~ t**exponent`` over a late time window."""

    window: tuple[float, float]
    exponent: float
    r_squared: float
    sample_times: np.ndarray
    trajectory_times: np.ndarray
    errors: np.ndarray
    used: np.ndarray


def error_growth_fit(problem: OdeProblem, tableau: ButcherTableau | None,
                     scheme: Scheme | str, dt: float, t_end: float,
                     sample_times: Sequence[float] | None = None,
                     invariant: str | None = None,
                     reference: Callable[[float], np.ndarray] | None = None,
                     window_start: float = 0.2, trajectory: Trajectory | None = None,
                     ) -> GrowthFit:
    """Fit the error growth exponent over ``[window_start * t_end, t_end]``.

    The error at each sample time compares the stored state nearest in time
    with the reference at that state's own time. Samples with error >= 0.5
    are treated as saturated and dropped from the fit.
    """
    ref = reference or problem.analytic_solution
    if ref is None:
        raise ReferenceUnavailable(f"problem {problem.name!r} has no reference solution")
    traj = trajectory
    if traj is None:
        traj = integrate(problem, tableau, scheme, t_end=t_end, dt=dt,
                         invariant=invariant, record=[])
    if sample_times is None:
        sample_times = traj.times[1:]
    sample_times = np.asarray(sample_times, dtype=float)

    idx = np.searchsorted(traj.times, sample_times)
    idx = np.clip(idx, 1, len(traj.times) - 1)
    left_closer = (sample_times - traj.times[idx - 1]) <= (traj.times[idx] - sample_times)
    idx = np.where(left_closer, idx - 1, idx)
    ttimes = traj.times[idx]
    errors = np.array([
        problem.error_norm(traj.states[i] - ref(traj.times[i])) for i in idx
    ])

    t_lo, t_hi = window_start * t_end, max(t_end, traj.final_time)
    late = (ttimes >= t_lo) & (ttimes > 0)
    if not np.any(late):
        raise PreconditionViolated("no sample times inside the fit window")
    used = late & (errors < SATURATION) & (errors > 0)
    if not np.any(used):
        raise SaturatedWindow(
            f"all errors in window [{t_lo:g}, {t_hi:g}] are saturated (>= {SATURATION})")
    fit = LinearFit.of(np.log(ttimes[used]), np.log(errors[used]))
    return GrowthFit((t_lo, t_hi), fit.slope, fit.r_squared, sample_times, ttimes, errors, used)


# ---------------------------------------------------------------------------
# Poincare sections


class Direction(enum.Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    BOTH = "both"


def make_stepper(problem: OdeProblem, tableau: ButcherTableau | None, scheme: Scheme | str,
                 invariant: str | None = None,
                 gamma_mode: GammaMode | str = GammaMode.ROOT_FIND,
                 ) -> Callable[[float, np.ndarray, float], tuple[float, np.ndarray]]:
    """Single-step function ``(t, u, dt) -> (t_new, u_new)`` for one scheme."""
    scheme = Scheme(scheme)
    gamma_mode = GammaMode(gamma_mode)

    def step(t, u, dt):
        if scheme is Scheme.BASELINE:
            _, d, _ = rk_step(problem, tableau, t, u, dt)
            return t + dt, u + dt * d
        if scheme is Scheme.RELAXATION:
            out = rrk_step(problem, tableau, invariant, t, u, dt, gamma_mode)
            return t + out.dt_effective, out.u_next
        if scheme is Scheme.PROJECTION:
            out = projection_step(problem, tableau, invariant, t, u, dt)
            return t + dt, out.u_next
        return t + dt, symplectic_euler_step(problem, t, u, dt)

    return step


def _hermite(u0, u1, f0, f1, h, s):
    h00 = 2 * s**3 - 3 * s**2 + 1
    h10 = s**3 - 2 * s**2 + s
    h01 = -2 * s**3 + 3 * s**2
    h11 = s**3 - s**2
    return h00 * u0 + h10 * h * f0 + h01 * u1 + h11 * h * f1


def _hermite_ds(u0, u1, f0, f1, h, s):
    return ((6 * s**2 - 6 * s) * u0 + (3 * s**2 - 4 * s + 1) * h * f0
            + (-6 * s**2 + 6 * s) * u1 + (3 * s**2 - 2 * s) * h * f1)


def poincare_section(traj: Trajectory, problem: OdeProblem, plane_coord: int,
                     plane_value: float = 0.0, record_coords: tuple[int, int] = (1, 3),
                     direction: Direction | str = Direction.POSITIVE,
                     stepper: Callable | None = None, newton_steps: int = 4,
                     return_states: bool = False):
    """Crossings of the hyperplane ``u[plane_coord] = plane_value``.

    Crossings are located on the cubic Hermite interpolant built from the two
    bracketing states and their right-hand sides, starting from the linear
    estimate and polished by Newton's method. If ``stepper`` (see
    :func:`make_stepper`) is given, the crossing point is instead produced by
    re-stepping the integrator from the left state with a step size chosen so
    the new state lies on the plane; this keeps invariants preserved by the
    scheme (e.g. relaxation) exactly on the section.

    Returns an array of shape ``(n, 2)`` with the ``record_coords`` pairs,
    and with ``return_states`` also the full crossing states ``(n, dim)``.
    """
    direction = Direction(direction)
    i, j = record_coords
    dim = traj.states.shape[1]
    if not all(0 <= c < dim for c in (plane_coord, i, j)):
        raise PreconditionViolated(f"coordinates must lie in [0, {dim})")
    x = traj.states[:, plane_coord] - plane_value
    points: list[np.ndarray] = []
    for k in range(len(traj.times) - 1):
        a, b = x[k], x[k + 1]
        # Half-open convention: a state exactly on the plane ends a crossing.
        increasing = a < 0.0 <= b
        decreasing = a > 0.0 >= b
        if not (increasing or decreasing):
            continue
        if direction is Direction.POSITIVE and not increasing:
            continue
        if direction is Direction.NEGATIVE and not decreasing:
            continue
        if b == 0.0:
            points.append(traj.states[k + 1].copy())
            continue
        if stepper is not None and k < len(traj.steps):
            points.append(_restep_crossing(traj, k, stepper, plane_coord, plane_value))
            continue
        t0, t1 = traj.times[k], traj.times[k + 1]
        u0, u1 = traj.states[k], traj.states[k + 1]
        f0, f1 = problem.rhs(t0, u0), problem.rhs(t1, u1)
        h = t1 - t0
        s = a / (a - b)
        for _ in range(newton_steps):
            r = _hermite(u0, u1, f0, f1, h, s)[plane_coord] - plane_value
            dr = _hermite_ds(u0, u1, f0, f1, h, s)[plane_coord]
            if dr == 0.0:
                break
            s_new = min(1.0, max(0.0, s - r / dr))
            if abs(s_new - s) <= 4 * EPS:
                s = s_new
                break
            s = s_new
        points.append(_hermite(u0, u1, f0, f1, h, s))
    states = np.array(points).reshape(-1, traj.states.shape[1])
    pairs = states[:, [i, j]]
    return (pairs, states) if return_states else pairs


def _restep_crossing(traj: Trajectory, k: int, stepper, plane_coord: int,
                     plane_value: float) -> np.ndarray:
    t, u, h_full = traj.times[k], traj.states[k], traj.steps[k]
    cache: dict[float, np.ndarray] = {}

    def phi(h):
        if h == 0.0:
            return u[plane_coord] - plane_value
        cache[h] = stepper(t, u, h)[1]
        return cache[h][plane_coord] - plane_value

    lo, hi = 0.0, h_full
    f_hi = phi(hi)
    f_lo = phi(lo)
    if f_lo * f_hi > 0.0:
        # Re-stepping does not bracket (non-deterministic stepper); fall back to the full step.
        return traj.states[k + 1]
    h = optimize.brentq(phi, lo, hi, xtol=1e-15 * h_full, rtol=4 * EPS, maxiter=100)
    return cache[h] if h in cache else stepper(t, u, h)[1]


# ---------------------------------------------------------------------------
# Phase volume


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull_area_2d(points) -> float:
    """Area of the convex hull of 2D points (monotone chain + shoelace)."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise PreconditionViolated("expected an array of 2D points")
    if len(pts) < 3:
        raise PreconditionViolated("need at least 3 points for a hull area")
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    P = [tuple(p) for p in pts[order]]

    lower: list[tuple[float, float]] = []
    for p in P:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[tuple[float, float]] = []
    for p in reversed(P):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = np.array(lower[:-1] + upper[:-1])
    if len(hull) < 3:
        raise DegenerateCloud("all points are collinear; hull area is 0")
    # Shoelace relative to the first vertex to limit cancellation for tiny clouds.
    d = hull - hull[0]
    area = 0.5 * abs(float(np.sum(d[:-1, 0] * d[1:, 1] - d[1:, 0] * d[:-1, 1])))
    if area == 0.0:
        raise DegenerateCloud("all points are collinear; hull area is 0")
    return area


def disk_cloud(center, radius: float, n: int = 200, seed: int = DEFAULT_SEED,
               coords: tuple[int, int] = (0, 1)) -> np.ndarray:
    """``n`` states uniformly distributed in a disk around ``center``.

    The disk lies in the plane of ``coords``; other coordinates equal
    ``center``. Sampling is by rejection from the enclosing square.
    """
    rng = np.random.default_rng(seed)
    center = np.asarray(center, dtype=float)
    out = np.empty((n, len(center)))
    k = 0
    while k < n:
        xy = rng.uniform(-1.0, 1.0, size=2)
        if xy @ xy <= 1.0:
            out[k] = center
            out[k, list(coords)] += radius * xy
            k += 1
    return out


@dataclass(frozen=True)
class VolumeSeries:
    """Relative hull-area change of a cloud, sampled by step index.

    ``times`` is the mean over the cloud of the states' times (relaxation
    grids can differ between points).
    """

    times: np.ndarray
    relative_change: np.ndarray
    areas: np.ndarray
    fit: LinearFit

    @property
    def slope(self) -> float:
        return self.fit.slope


def volume_series(problem: OdeProblem, tableau: ButcherTableau | None, scheme: Scheme | str,
                  cloud, dt: float, t_end: float, sample_stride: int = 1,
                  invariant: str | None = None, coords: tuple[int, int] = (0, 1),
                  gamma_mode: GammaMode | str = GammaMode.ROOT_FIND) -> VolumeSeries:
    """Integrate every cloud point and track the hull area in the ``coords`` plane.

    Integration errors are re-raised with ``point_index`` set to the index of
    the failing cloud point.
    """
    cloud = np.asarray(cloud, dtype=float)
    if sample_stride < 1:
        raise PreconditionViolated("sample_stride must be >= 1")
    times, states = [], []
    for n, x in enumerate(cloud):
        try:
            tr = integrate(problem, tableau, scheme, u0=x, t_end=t_end, dt=dt,
                           invariant=invariant, gamma_mode=gamma_mode, record=[])
        except NumericalError as exc:
            exc.point_index = n
            raise
        times.append(tr.times)
        states.append(tr.states[:, list(coords)])
    length = min(len(t) for t in times)
    T = np.array([t[:length] for t in times])
    S = np.array([s[:length] for s in states])
    idx = np.arange(0, length, sample_stride)
    if idx[-1] != length - 1:
        idx = np.append(idx, length - 1)
    areas = np.array([convex_hull_area_2d(S[:, k]) for k in idx])
    rel = (areas - areas[0]) / areas[0]
    tm = T[:, idx].mean(axis=0)
    return VolumeSeries(tm, rel, areas, LinearFit.of(tm, rel))


# ---------------------------------------------------------------------------
# Temperature


def kinetic_temperature(p: np.ndarray, masses, k_B: float, space_dim: int) -> np.ndarray:
    """``T = sum_i |p_i|^2 / m_i / (space_dim * N * k_B)`` for momenta ``p``.

    ``p`` has shape ``(..., N * space_dim)`` with atoms stored consecutively.
    """
    masses = np.asarray(masses, dtype=float)
    N = len(masses)
    P = np.asarray(p, dtype=float).reshape(*np.shape(p)[:-1], N, space_dim)
    twice_kinetic = np.sum(np.sum(P**2, axis=-1) / masses, axis=-1)
    return twice_kinetic / (space_dim * N * k_B)


@dataclass(frozen=True)
class TemperatureSeries:
    times: np.ndarray
    values: np.ndarray
    fit: LinearFit

    @property
    def slope(self) -> float:
        return self.fit.slope


def temperature_series(traj: Trajectory, masses, k_B: float, space_dim: int,
                       p_index: np.ndarray | None = None) -> TemperatureSeries:
    """Kinetic temperature along ``traj`` and a linear drift fit.

    Momenta are read from ``p_index``; by default the second half of the
    state, matching the stacked ``(q, p)`` layout of the N-body problems.
    """
    states = traj.states
    if p_index is None:
        p_index = np.arange(states.shape[1] // 2, states.shape[1])
    values = kinetic_temperature(states[:, p_index], masses, k_B, space_dim)
    return TemperatureSeries(traj.times, values, LinearFit.of(traj.times, values))


# ---------------------------------------------------------------------------
# Asymptotic theory of the relaxation parameter


def verify_lemma_a2(s: int, m: int) -> tuple[Fraction, Fraction, Fraction]:
    """Both sides of ``sum_n (-1)^n / ((m-n)! (m+n)!) = -2 (-1)^m / (2m)!``.

    The sum runs over ``max(1-m, m-s) <= n <= min(m-1, s-m)``. Everything is
    exact rational arithmetic, so the residual must be exactly zero.
    """
    if s < 1 or m < 1 or 2 * m > s + 1:
        raise PreconditionViolated(f"need s, m >= 1 and 2m <= s+1, got s={s}, m={m}")
    lo, hi = max(1 - m, m - s), min(m - 1, s - m)
    fact = math.factorial
    lhs = sum((Fraction((-1) ** abs(n), fact(m - n) * fact(m + n)) for n in range(lo, hi + 1)),
              Fraction(0))
    rhs = Fraction(-2 * (-1) ** m, fact(2 * m))
    return lhs, rhs, lhs - rhs


@dataclass(frozen=True)
class GammaAsymptotics:
    """Fit of ``gamma - 1 ~ C dt**exponent`` on a linear skew system.

    ``constant`` and ``predicted_constant`` are ``None`` for even orders,
    where only the exponent is reported.
    """

    dts: np.ndarray
    gammas: np.ndarray
    exponent: float
    constant: float | None
    predicted_constant: float | None

    @property
    def relative_constant_error(self) -> float | None:
        if self.constant is None or not self.predicted_constant:
            return None
        return abs(self.constant - self.predicted_constant) / abs(self.predicted_constant)


L_HARMONIC = np.array([[0.0, -1.0], [1.0, 0.0]])


def gamma_asymptotic_check(tableau: ButcherTableau, u0=(1.0, 0.0), dts=None,
                           L: np.ndarray | None = None) -> GammaAsymptotics:
    """Compare the relaxation parameter on ``u' = L u`` with its leading-order expansion.

    For odd order ``p`` the expansion is
    ``gamma - 1 ~ -2 (-1)^((p+1)/2) (alpha_{p+1} - 1/(p+1)!) dt^(p-1) |L^((p+1)/2) u0|^2 / |L u0|^2``
    with ``alpha_k = b^T A^(k-1) 1`` (zero beyond the stage count). For even
    ``p`` the leading term is ``O(dt^p)`` and only the exponent is fitted.
    The constant is read off at the smallest step size.
    """
    if not tableau.is_explicit:
        raise NotExplicit(f"{tableau.name} is not explicit")
    L = L_HARMONIC if L is None else np.asarray(L, dtype=float)
    if not np.allclose(L, -L.T):
        raise NotApplicable("expansion holds for skew-symmetric linear systems only")
    u0 = np.asarray(u0, dtype=float)
    if dts is None:
        dts = [0.2, 0.1, 0.05, 0.025, 0.0125]
    dts = np.asarray(dts, dtype=float)
    p = tableau.declared_order

    gammas = np.empty(len(dts))
    for i, dt in enumerate(dts):
        F = np.empty((tableau.s, len(u0)))
        for k in range(tableau.s):
            F[k] = L @ (u0 + dt * (tableau.A[k, :k] @ F[:k]))
        gammas[i] = gamma_quadratic_closed_form(F, tableau.b, tableau.A, float(dt))
    dev = np.abs(gammas - 1.0)
    fit = LinearFit.of(np.log(dts), np.log(dev))

    if p % 2 == 0:
        return GammaAsymptotics(dts, gammas, fit.slope, None, None)
    alpha = stability_monomial_coefficients(tableau)
    a_next = alpha[p] if p < len(alpha) else 0.0
    half = (p + 1) // 2
    Lu = L @ u0
    Lh = np.linalg.matrix_power(L, half) @ u0
    predicted = (-2.0 * (-1) ** half * (a_next - 1.0 / math.factorial(p + 1))
                 * float(Lh @ Lh) / float(Lu @ Lu))
    i_min = int(np.argmin(dts))
    constant = (gammas[i_min] - 1.0) / dts[i_min] ** (p - 1)
    return GammaAsymptotics(dts, gammas, fit.slope, float(constant), float(predicted))
