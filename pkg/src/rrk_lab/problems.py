"""Test problems: right-hand sides, invariants, initial data and references."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.linalg import expm

from .errors import ConfigError, DomainViolation, MissingDataFile
from .integrators import Invariant, OdeProblem, Partition

__all__ = [
    "FourierOperators",
    "fourier_operators",
    "lotka_volterra",
    "henon_heiles",
    "duffing",
    "harmonic_oscillator",
    "nonlinear_oscillator",
    "euclidean_hamiltonian",
    "skew_linear_4d",
    "linear_qp_hamiltonian",
    "kepler",
    "kepler_reference",
    "kdv_semidiscretization",
    "outer_solar_system",
    "argon_crystal",
    "lennard_jones",
    "data_dir",
    "PROBLEMS",
    "get_problem",
]

# Rotation generator of the harmonic oscillator: L (1, 0) = (0, 1).
L_HARMONIC = np.array([[0.0, -1.0], [1.0, 0.0]])


def _rotation(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def _norm2(metric=1.0):
    return Invariant(
        "energy",
        lambda u: 0.5 * float(u @ u) * metric,
        lambda u: metric * np.asarray(u, dtype=float),
        metric=metric,
    )


# ---------------------------------------------------------------------------
# Low-dimensional systems


def lotka_volterra() -> OdeProblem:
    def check(u):
        if u[0] <= 0.0 or u[1] <= 0.0:
            raise DomainViolation(f"Lotka-Volterra needs positive states, got {u}")

    def rhs(t, u):
        check(u)
        return np.array([u[0] * (1.0 - u[1]), u[1] * (u[0] - 1.0)])

    def H(u):
        check(u)
        return float(u[0] - math.log(u[0]) + u[1] - math.log(u[1]))

    def grad(u):
        check(u)
        return np.array([1.0 - 1.0 / u[0], 1.0 - 1.0 / u[1]])

    return OdeProblem(
        name="lotka-volterra",
        dim=2,
        rhs=rhs,
        u0=np.array([1.0, 2.0]),
        invariants={"energy": Invariant("energy", H, grad)},
    )


HENON_HEILES_ICS = {
    "quasiperiodic": (0.12, 0.12, 0.12, 0.12),
    "chaotic": (0.12, 0.12, math.sqrt(2.0) * math.sqrt(0.15925), 0.12),
}


def henon_heiles(ic: str = "quasiperiodic") -> OdeProblem:
    """Henon-Heiles system with state ``(q1, q2, p1, p2)``."""
    if ic not in HENON_HEILES_ICS:
        raise ConfigError(f"unknown Henon-Heiles initial condition {ic!r}", key="ic")

    def dH_dq(q, p):
        return np.array([q[0] + 2.0 * q[0] * q[1], q[1] + q[0] ** 2 - q[1] ** 2])

    def dH_dp(q, p):
        return p

    def rhs(t, u):
        q, p = u[:2], u[2:]
        return np.concatenate([p, -dH_dq(q, p)])

    def H(u):
        q1, q2, p1, p2 = u
        return float(0.5 * (p1**2 + p2**2) + 0.5 * (q1**2 + q2**2) + q1**2 * q2 - q2**3 / 3.0)

    def grad(u):
        q, p = u[:2], u[2:]
        return np.concatenate([dH_dq(q, p), p])

    return OdeProblem(
        name="henon-heiles" if ic == "quasiperiodic" else "henon-heiles-chaotic",
        dim=4,
        rhs=rhs,
        u0=np.array(HENON_HEILES_ICS[ic]),
        invariants={"energy": Invariant("energy", H, grad)},
        partition=Partition(np.array([0, 1]), np.array([2, 3]), dH_dq, dH_dp),
        metadata={"initial_condition": ic},
    )


def duffing(u0=(1.4142, 0.0)) -> OdeProblem:
    """Undamped Duffing oscillator ``q'' = q - q^3`` with state ``(q, p)``."""

    def dH_dq(q, p):
        return q**3 - q

    def dH_dp(q, p):
        return p

    def rhs(t, u):
        q, p = u
        return np.array([p, q - q**3])

    def H(u):
        q, p = u
        return float(0.5 * p * p - 0.5 * q * q + 0.25 * q**4)

    def grad(u):
        q, p = u
        return np.array([q**3 - q, p])

    return OdeProblem(
        name="duffing",
        dim=2,
        rhs=rhs,
        u0=np.array(u0, dtype=float),
        invariants={"energy": Invariant("energy", H, grad)},
        partition=Partition(np.array([0]), np.array([1]), dH_dq, dH_dp),
    )


def harmonic_oscillator(count: int = 1) -> OdeProblem:
    """``count`` uncoupled copies of ``u' = L u`` with ``L = [[0, -1], [1, 0]]``.

    Each pair ``(u1, u2)`` is canonical with ``q = u2`` and ``p = u1``.
    """
    if count not in (1, 2):
        raise ConfigError("harmonic oscillator count must be 1 or 2", key="count")
    Lfull = np.kron(np.eye(count), L_HARMONIC)
    u0 = np.array([1.0, 0.0] if count == 1 else [1.0, 0.0, 0.5, 0.5])

    def rhs(t, u):
        return Lfull @ u

    def solution_from(u_start, t):
        R = _rotation(t)
        return (np.kron(np.eye(count), R) @ u_start)

    invariants = {"energy": _norm2()}
    if count == 2:
        for k in range(2):
            sl = slice(2 * k, 2 * k + 2)
            invariants[f"energy_{k + 1}"] = Invariant(
                f"energy_{k + 1}",
                lambda u, sl=sl: 0.5 * float(u[sl] @ u[sl]),
            )

    q_idx = np.arange(1, 2 * count, 2)
    p_idx = np.arange(0, 2 * count, 2)
    return OdeProblem(
        name="harmonic" if count == 1 else "harmonic2",
        dim=2 * count,
        rhs=rhs,
        u0=u0,
        invariants=invariants,
        analytic_solution=lambda t: solution_from(u0, t),
        jacobian=lambda t, u: Lfull,
        partition=Partition(q_idx, p_idx, lambda q, p: q, lambda q, p: p),
        metadata={"solution_from": solution_from},
    )


def nonlinear_oscillator(u0=(1.0, 0.0)) -> OdeProblem:
    """``u' = |u|^-2 (-u2, u1)``; the angular speed is ``1/|u|^2``."""
    u0 = np.array(u0, dtype=float)
    r2_0 = float(u0 @ u0)

    def rhs(t, u):
        r2 = u[0] * u[0] + u[1] * u[1]
        if r2 == 0.0:
            raise DomainViolation("nonlinear oscillator is undefined at u = 0")
        return np.array([-u[1], u[0]]) / r2

    def solution_from(u_start, t):
        return _rotation(t / float(u_start @ u_start)) @ u_start

    return OdeProblem(
        name="nonlinear-oscillator",
        dim=2,
        rhs=rhs,
        u0=u0,
        invariants={"energy": _norm2()},
        analytic_solution=lambda t: _rotation(t / r2_0) @ u0,
        metadata={"solution_from": solution_from},
    )


def euclidean_hamiltonian(g: Callable[[float], float] | None = None,
                          G: Callable[[float], float] | None = None,
                          half_dim: int = 1, u0=None, variant: str | None = None) -> OdeProblem:
    """Euclidean Hamiltonian system ``f(q, p) = g(|u|^2 / 2) (p, -q)``, ``u = (q, p)``.

    ``H = G(|u|^2/2)`` with ``G' = g``; ``G`` is optional because the quadratic
    invariant ``|u|^2/2`` (registered as ``"energy"``) has the same level sets.
    ``variant`` selects the two non-Euclidean counterexamples, ``"skew4"``
    and ``"linear-qp"``.
    """
    if variant is not None:
        if variant == "skew4":
            return skew_linear_4d()
        if variant == "linear-qp":
            return linear_qp_hamiltonian()
        raise ConfigError(f"unknown Euclidean Hamiltonian variant {variant!r}", key="variant")
    if g is None:
        g = lambda x: 1.0  # noqa: E731
    n = half_dim
    u0 = np.array(u0 if u0 is not None else [1.0] + [0.0] * (2 * n - 1), dtype=float)
    if u0.size != 2 * n:
        raise ConfigError("u0 must have length 2*half_dim", key="u0")

    def rhs(t, u):
        q, p = u[:n], u[n:]
        return g(0.5 * float(u @ u)) * np.concatenate([p, -q])

    def solution_from(u_start, t):
        w = g(0.5 * float(u_start @ u_start))
        c, s = math.cos(w * t), math.sin(w * t)
        q0, p0 = u_start[:n], u_start[n:]
        return np.concatenate([c * q0 + s * p0, c * p0 - s * q0])

    invariants = {"energy": _norm2()}
    if G is not None:
        invariants["hamiltonian"] = Invariant(
            "hamiltonian",
            lambda u: float(G(0.5 * float(u @ u))),
            lambda u: g(0.5 * float(u @ u)) * np.asarray(u, dtype=float),
        )
    return OdeProblem(
        name="euclidean",
        dim=2 * n,
        rhs=rhs,
        u0=u0,
        invariants=invariants,
        analytic_solution=lambda t: solution_from(u0, t),
        partition=Partition(
            np.arange(n), np.arange(n, 2 * n),
            lambda q, p: g(0.5 * float(q @ q + p @ p)) * q,
            lambda q, p: g(0.5 * float(q @ q + p @ p)) * p,
            separable=False,
        ),
        metadata={"solution_from": solution_from},
    )


L_SKEW4 = np.array([
    [0.0, 0.0, -1.0, -1.0],
    [0.0, 0.0, 0.0, -1.0],
    [1.0, 0.0, 0.0, -1.0],
    [1.0, 1.0, 1.0, 0.0],
])


def _linear_problem(name, L, u0, invariants, partition=None):
    L = np.asarray(L, dtype=float)
    u0 = np.asarray(u0, dtype=float)

    def solution_from(u_start, t):
        return expm(t * L) @ u_start

    return OdeProblem(
        name=name,
        dim=len(u0),
        rhs=lambda t, u: L @ u,
        u0=u0,
        invariants=invariants,
        analytic_solution=lambda t: solution_from(u0, t),
        jacobian=lambda t, u: L,
        partition=partition,
        metadata={"solution_from": solution_from, "matrix": L},
    )


def skew_linear_4d() -> OdeProblem:
    """Skew-symmetric 4x4 linear system that is not Euclidean Hamiltonian."""
    return _linear_problem("skew4", L_SKEW4, [1.0, 0.0, 0.0, 0.0], {"energy": _norm2()})


Q_QP = np.array([[1.0, 1.0], [1.0, 2.0]])
P_QP = np.array([[3.0, 2.0], [2.0, 4.0]])


def linear_qp_hamiltonian() -> OdeProblem:
    """Linear Hamiltonian ``H = q^T Q q / 2 + p^T P p / 2``; state ``(q1, q2, p1, p2)``."""
    M = np.zeros((4, 4))
    M[:2, :2] = Q_QP
    M[2:, 2:] = P_QP
    L = np.zeros((4, 4))
    L[:2, 2:] = P_QP
    L[2:, :2] = -Q_QP
    inv = Invariant(
        "energy",
        lambda u: 0.5 * float(u @ M @ u),
        lambda u: M @ u,
        metric=M,
    )
    part = Partition(np.array([0, 1]), np.array([2, 3]),
                     lambda q, p: Q_QP @ q, lambda q, p: P_QP @ p)
    return _linear_problem("linear-qp", L, [1.0, 0.0, 0.0, 0.0], {"energy": inv}, part)


# ---------------------------------------------------------------------------
# Kepler problem


def kepler_reference(u0: np.ndarray, t, tol: float = 1e-14) -> np.ndarray:
    """Exact two-body solution (``mu = 1``) through ``u0 = (q1, q2, p1, p2)``.

    Works from the orbital elements of ``u0`` and solves Kepler's equation
    by Newton iteration. ``t`` may be a scalar or an array.
    """
    q0, v0 = np.asarray(u0[:2], dtype=float), np.asarray(u0[2:], dtype=float)
    r0 = math.hypot(*q0)
    energy = 0.5 * float(v0 @ v0) - 1.0 / r0
    if energy >= 0.0:
        raise DomainViolation("reference solution requires a bound (elliptic) orbit")
    a = -0.5 / energy
    ang = q0[0] * v0[1] - q0[1] * v0[0]
    sense = 1.0 if ang >= 0.0 else -1.0
    rv = float(q0 @ v0)
    evec = (float(v0 @ v0) - 1.0 / r0) * q0 - rv * v0
    ecc = math.hypot(*evec)
    n = a ** -1.5
    if ecc < 1e-13:
        omega = math.atan2(q0[1], q0[0])
        E0 = 0.0
    else:
        omega = math.atan2(evec[1], evec[0])
        E0 = math.atan2(rv / math.sqrt(a), 1.0 - r0 / a)
    M0 = E0 - ecc * math.sin(E0)

    ts = np.atleast_1d(np.asarray(t, dtype=float))
    M = M0 + n * ts
    E = M + ecc * np.sin(M) if ecc < 0.8 else np.full_like(M, math.pi) + 0.0 * M
    for _ in range(100):
        dE = (E - ecc * np.sin(E) - M) / (1.0 - ecc * np.cos(E))
        E = E - dE
        if np.max(np.abs(dE)) <= tol:
            break
    cE, sE = np.cos(E), np.sin(E)
    b = a * math.sqrt(1.0 - ecc * ecc)
    denom = 1.0 - ecc * cE
    x, y = a * (cE - ecc), sense * b * sE
    vx, vy = -a * n * sE / denom, sense * b * n * cE / denom
    co, so = math.cos(omega), math.sin(omega)
    out = np.stack([co * x - so * y, so * x + co * y, co * vx - so * vy, so * vx + co * vy], axis=-1)
    return out[0] if np.ndim(t) == 0 else out


def kepler(e: float = 0.5, printed_ic: bool = False) -> OdeProblem:
    """Kepler problem with state ``(q1, q2, p1, p2)`` starting at ``q = (1 - e, 0)``.

    By default ``p2(0) = sqrt((1 + e)/(1 - e))``, the perihelion velocity of
    the orbit with semi-major axis 1 and period ``2 pi``. ``printed_ic=True``
    uses ``p2(0) = sqrt((1 - e)/(1 + e))`` instead, which starts at the
    aphelion of a smaller, more eccentric orbit.
    """
    if not 0.0 <= e < 1.0:
        raise ConfigError("eccentricity must lie in [0, 1)", key="e")
    ratio = (1.0 - e) / (1.0 + e) if printed_ic else (1.0 + e) / (1.0 - e)
    u0 = np.array([1.0 - e, 0.0, 0.0, math.sqrt(ratio)])

    def radius(q):
        r = math.hypot(q[0], q[1])
        if r == 0.0:
            raise DomainViolation("Kepler problem is singular at q = 0")
        return r

    def rhs(t, u):
        r = radius(u[:2])
        return np.array([u[2], u[3], -u[0] / r**3, -u[1] / r**3])

    def H(u):
        return float(0.5 * (u[2] ** 2 + u[3] ** 2) - 1.0 / radius(u[:2]))

    def gH(u):
        r = radius(u[:2])
        return np.array([u[0] / r**3, u[1] / r**3, u[2], u[3]])

    Lmetric = np.zeros((4, 4))
    Lmetric[0, 3] = Lmetric[3, 0] = 1.0
    Lmetric[1, 2] = Lmetric[2, 1] = -1.0
    invariants = {
        "energy": Invariant("energy", H, gH),
        "angular_momentum": Invariant(
            "angular_momentum",
            lambda u: float(u[0] * u[3] - u[1] * u[2]),
            lambda u: np.array([u[3], -u[2], -u[1], u[0]]),
            metric=Lmetric,
        ),
    }
    return OdeProblem(
        name="kepler",
        dim=4,
        rhs=rhs,
        u0=u0,
        invariants=invariants,
        analytic_solution=lambda t: kepler_reference(u0, t),
        partition=Partition(np.array([0, 1]), np.array([2, 3]),
                            lambda q, p: q / radius(q) ** 3, lambda q, p: p),
        metadata={"eccentricity": e, "solution_from": kepler_reference,
                  "period": 2.0 * math.pi * (-2.0 * invariants["energy"](u0)) ** -1.5},
    )


# ---------------------------------------------------------------------------
# KdV


@dataclass(frozen=True)
class FourierOperators:
    N: int
    domain: tuple[float, float]
    nodes: np.ndarray
    D1: np.ndarray
    D3: np.ndarray

    @property
    def width(self) -> float:
        return self.domain[1] - self.domain[0]

    @property
    def dx(self) -> float:
        return self.width / self.N


def spectral_derivative_matrix(N: int, width: float, order: int) -> np.ndarray:
    """Dense real matrix of the periodic Fourier derivative of the given order.

    Odd orders drop the Nyquist mode, which keeps the matrix antisymmetric.
    """
    m = np.fft.fftfreq(N, d=1.0 / N)
    symbol = (2j * math.pi * m / width) ** order
    if order % 2 == 1 and N % 2 == 0:
        symbol[N // 2] = 0.0
    D = np.fft.ifft(symbol[:, None] * np.fft.fft(np.eye(N), axis=0), axis=0)
    return np.ascontiguousarray(D.real)


def fourier_operators(N: int, domain=(-20.0, 60.0)) -> FourierOperators:
    if N % 2:
        raise ConfigError("Fourier collocation grid size N must be even", key="N")
    left, right = map(float, domain)
    width = right - left
    nodes = left + width * np.arange(N) / N
    return FourierOperators(
        N=N,
        domain=(left, right),
        nodes=nodes,
        D1=spectral_derivative_matrix(N, width, 1),
        D3=spectral_derivative_matrix(N, width, 3),
    )


def kdv_soliton(x, t, amplitude=2.0, offset=40.0, domain=(-20.0, 60.0)):
    """Soliton ``A sech^2(sqrt(3A)(x - ct - mu)/6)``, ``c = A/3``, wrapped periodically."""
    width = domain[1] - domain[0]
    xi = np.asarray(x) - amplitude / 3.0 * t - offset
    xi = np.mod(xi + 0.5 * width, width) - 0.5 * width
    return amplitude / np.cosh(math.sqrt(3.0 * amplitude) * xi / 6.0) ** 2


def kdv_semidiscretization(N: int = 256, domain=(-20.0, 60.0), amplitude: float = 2.0,
                           offset: float = 40.0) -> OdeProblem:
    """Split-form Fourier collocation of ``u_t + (u^2/2)_x + u_xxx = 0``.

    ``u' = -(D1(u*u) + u*D1 u)/3 - D3 u``. Mass ``dx*sum(u)`` and energy
    ``dx*|u|^2/2`` are both invariants of the semidiscretization; the
    relaxation parameter for the energy does not depend on the ``dx`` weight.
    """
    ops = fourier_operators(N, domain)
    D1, D3, x, dx = ops.D1, ops.D3, ops.nodes, ops.dx

    def rhs(t, u):
        return -(D1 @ (u * u) + u * (D1 @ u)) / 3.0 - D3 @ u

    def jac(t, u):
        return -(2.0 * D1 * u[None, :] + np.diag(D1 @ u) + u[:, None] * D1) / 3.0 - D3

    def ref(t):
        return kdv_soliton(x, t, amplitude, offset, ops.domain)

    ones = np.full(N, dx)
    return OdeProblem(
        name="kdv",
        dim=N,
        rhs=rhs,
        u0=ref(0.0),
        invariants={
            "energy": Invariant("energy", lambda u: 0.5 * dx * float(u @ u),
                                lambda u: dx * np.asarray(u, dtype=float), metric=dx),
            "mass": Invariant("mass", lambda u: dx * float(np.sum(u)), lambda u: ones),
        },
        analytic_solution=ref,
        jacobian=jac,
        error_weight=dx,
        metadata={"operators": ops},
    )


# ---------------------------------------------------------------------------
# N-body problems


def data_dir() -> Path:
    env = os.environ.get("RRK_LAB_DATA_DIR")
    if env:
        return Path(env)
    return Path(str(resources.files("rrk_lab") / "data"))


def _read_data_file(name: str) -> list[list[str]]:
    path = data_dir() / name
    if not path.is_file():
        raise MissingDataFile(f"constants file not found: {path}")
    rows = []
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            rows.append(line.split())
    return rows


def _pairwise(Q: np.ndarray):
    diff = Q[:, None, :] - Q[None, :, :]
    r = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    return diff, r


def _nbody_problem(name, masses, q0, p0, pair_energy, pair_dvdr, min_distance, metadata):
    """Hamiltonian ``sum |p_i|^2 / (2 m_i) + sum_{i<j} V_ij(|q_i - q_j|)``.

    ``pair_energy(r, i, j)`` and ``pair_dvdr(r, i, j)`` act on arrays of
    pair distances together with their index arrays. State is ``(q, p)``
    with bodies stacked row-wise.
    """
    masses = np.asarray(masses, dtype=float)
    nb, sd = q0.shape
    nq = nb * sd
    iu, ju = np.triu_indices(nb, 1)
    minv = np.repeat(1.0 / masses, sd)

    def split(u):
        return u[:nq].reshape(nb, sd), u[nq:]

    def check(r):
        if np.any(r < min_distance) or not np.all(np.isfinite(r)):
            raise DomainViolation(f"{name}: bodies collided (distance {np.min(r):.3e})")

    def potential(Q):
        diff, r = _pairwise(Q)
        rr = r[iu, ju]
        check(rr)
        return float(np.sum(pair_energy(rr, iu, ju)))

    def forces(Q):
        diff, r = _pairwise(Q)
        rr = r[iu, ju]
        check(rr)
        coef = pair_dvdr(rr, iu, ju) / rr
        Fpair = coef[:, None] * diff[iu, ju]  # dV/dq_i for the pair (i, j)
        grad = np.zeros_like(Q)
        np.add.at(grad, iu, Fpair)
        np.add.at(grad, ju, -Fpair)
        return grad

    def rhs(t, u):
        Q, p = split(u)
        return np.concatenate([minv * p, -forces(Q).ravel()])

    def H(u):
        Q, p = split(u)
        return 0.5 * float(p @ (minv * p)) + potential(Q)

    def gH(u):
        Q, p = split(u)
        return np.concatenate([forces(Q).ravel(), minv * p])

    invariants = {"energy": Invariant("energy", H, gH)}
    for k, axis in enumerate("xyz"[:sd]):
        invariants[f"momentum_{axis}"] = Invariant(
            f"momentum_{axis}",
            lambda u, k=k: float(np.sum(u[nq + k::sd])),
        )

    return OdeProblem(
        name=name,
        dim=2 * nq,
        rhs=rhs,
        u0=np.concatenate([q0.ravel(), np.asarray(p0, dtype=float).ravel()]),
        invariants=invariants,
        partition=Partition(
            np.arange(nq), np.arange(nq, 2 * nq),
            lambda q, p: forces(q.reshape(nb, sd)).ravel(),
            lambda q, p: minv * p,
        ),
        metadata={"masses": masses, "space_dim": sd, "bodies": nb,
                  "potential": lambda u: potential(split(u)[0]), **metadata},
    )


def outer_solar_system() -> OdeProblem:
    """Sun and the five outer bodies in AU / days / solar masses."""
    rows = _read_data_file("outer_solar_system.txt")
    G = None
    names, masses, q, v = [], [], [], []
    for row in rows:
        if row[0] == "G":
            G = float(row[1])
        elif row[0] == "body":
            names.append(row[1])
            masses.append(float(row[2]))
            q.append([float(x) for x in row[3:6]])
            v.append([float(x) for x in row[6:9]])
    if G is None or not names:
        raise MissingDataFile("outer_solar_system.txt lacks G or body records")
    m = np.array(masses)
    q0, p0 = np.array(q), m[:, None] * np.array(v)
    mm = m[:, None] * m[None, :]

    return _nbody_problem(
        "solar", m, q0, p0,
        pair_energy=lambda r, i, j: -G * mm[i, j] / r,
        pair_dvdr=lambda r, i, j: G * mm[i, j] / r**2,
        min_distance=0.0 + 1e-12,
        metadata={"G": G, "names": names},
    )


def lennard_jones(r, epsilon, sigma):
    sr6 = (sigma / np.asarray(r, dtype=float)) ** 6
    return 4.0 * epsilon * (sr6 * sr6 - sr6)


def argon_crystal() -> OdeProblem:
    """Seven argon atoms in 2D with Lennard-Jones interactions.

    Units: nm, ns and energies in ``k_B * 1 K`` (so ``k_B = 1``).
    """
    rows = _read_data_file("argon_crystal.txt")
    consts, atoms = {}, []
    for row in rows:
        if row[0] == "atom":
            atoms.append([float(x) for x in row[1:5]])
        else:
            consts[row[0]] = float(row[1])
    try:
        eps, sigma, mass_kg, kB = (consts[k] for k in ("epsilon_over_kB", "sigma", "mass", "kB"))
    except KeyError as exc:
        raise MissingDataFile(f"argon_crystal.txt lacks constant {exc.args[0]!r}") from None
    # Mass unit kB*K*ns^2/nm^2 equals kB [J/K] kilograms.
    m = mass_kg / kB
    atoms = np.array(atoms)
    n = len(atoms)
    masses = np.full(n, m)

    def pair_dvdr(r, i, j):
        sr6 = (sigma / r) ** 6
        return 4.0 * eps * (-12.0 * sr6 * sr6 + 6.0 * sr6) / r

    return _nbody_problem(
        "argon", masses, atoms[:, :2], m * atoms[:, 2:],
        pair_energy=lambda r, i, j: lennard_jones(r, eps, sigma),
        pair_dvdr=pair_dvdr,
        min_distance=1e-8 * sigma,
        metadata={"epsilon": eps, "sigma": sigma, "k_B": 1.0},
    )


# ---------------------------------------------------------------------------
# Registry used by the CLI

PROBLEMS: dict[str, Callable[[], OdeProblem]] = {
    "lotka-volterra": lotka_volterra,
    "henon-heiles": henon_heiles,
    "henon-heiles-chaotic": lambda: henon_heiles("chaotic"),
    "duffing": duffing,
    "harmonic": harmonic_oscillator,
    "harmonic2": lambda: harmonic_oscillator(2),
    "nonlinear-oscillator": nonlinear_oscillator,
    "euclidean": euclidean_hamiltonian,
    "skew4": skew_linear_4d,
    "linear-qp": linear_qp_hamiltonian,
    "kepler": kepler,
    "kdv": kdv_semidiscretization,
    "solar": outer_solar_system,
    "argon": argon_crystal,
}


def get_problem(name: str, **kwargs) -> OdeProblem:
    try:
        factory = PROBLEMS[name]
    except KeyError:
        raise ConfigError(
            f"unknown problem {name!r}; choose from {', '.join(PROBLEMS)}", key="problem"
        ) from None
    return factory(**kwargs)
