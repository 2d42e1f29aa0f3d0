"""Butcher tableaux for every Runge-Kutta method used by the experiments.

Coefficients are entered as exact rationals wherever the published method is
rational; the float arrays used for stepping are rounded from those. The two
SDIRK methods with irrational diagonals are built from their closed-form
expressions in double precision.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from types import MappingProxyType
from typing import Mapping, Sequence

import numpy as np

from .errors import NotExplicit, PreconditionViolated, UnknownMethod

__all__ = [
    "Kind",
    "ButcherTableau",
    "REGISTRY",
    "registry_get",
    "method_names",
    "check_order_conditions",
    "stability_monomial_coefficients",
]


class Kind(enum.Enum):
    EXPLICIT = "explicit"
    DIAGONALLY_IMPLICIT = "dirk"


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ButcherTableau:
    """Coefficients ``(A, b, c)`` of an ``s``-stage Runge-Kutta method.

    ``exact_A``/``exact_b`` hold the rational coefficients when the method is
    rational, and are ``None`` otherwise.
    """

    name: str
    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    declared_order: int
    kind: Kind
    description: str = ""
    exact_A: tuple[tuple[Fraction, ...], ...] | None = field(default=None, repr=False)
    exact_b: tuple[Fraction, ...] | None = field(default=None, repr=False)

    @property
    def s(self) -> int:
        return len(self.b)

    @property
    def is_explicit(self) -> bool:
        return self.kind is Kind.EXPLICIT

    @classmethod
    def from_coefficients(cls, name, A, b, order, description="", c=None):
        """Build a tableau, classifying it and deriving ``c`` from row sums.

        ``A`` and ``b`` may contain :class:`fractions.Fraction` entries; if all
        entries are rational the exact values are kept alongside the floats.
        """
        s = len(b)
        A_rows = [list(row) + [0] * (s - len(row)) for row in A]
        if len(A_rows) != s:
            raise ValueError(f"{name}: A has {len(A_rows)} rows, expected {s}")
        rational = all(
            isinstance(x, (int, Fraction)) for row in A_rows for x in row
        ) and all(isinstance(x, (int, Fraction)) for x in b)

        A_f = np.array([[float(x) for x in row] for row in A_rows])
        b_f = np.array([float(x) for x in b])
        if c is None:
            if rational:
                c_f = np.array([float(sum(Fraction(x) for x in row)) for row in A_rows])
            else:
                c_f = A_f.sum(axis=1)
        else:
            c_f = np.array([float(x) for x in c])

        if np.any(np.triu(A_f, 1) != 0.0):
            raise ValueError(f"{name}: only explicit and diagonally implicit methods are supported")
        kind = Kind.EXPLICIT if np.all(np.diag(A_f) == 0.0) else Kind.DIAGONALLY_IMPLICIT

        exact_A = exact_b = None
        if rational:
            exact_A = tuple(tuple(Fraction(x) for x in row) for row in A_rows)
            exact_b = tuple(Fraction(x) for x in b)
        return cls(
            name=name,
            A=_frozen(A_f),
            b=_frozen(b_f),
            c=_frozen(c_f),
            declared_order=order,
            kind=kind,
            description=description,
            exact_A=exact_A,
            exact_b=exact_b,
        )


F = Fraction


def _build_registry() -> dict[str, ButcherTableau]:
    reg: dict[str, ButcherTableau] = {}

    def add(name, A, b, order, description):
        reg[name] = ButcherTableau.from_coefficients(name, A, b, order, description)

    add("ssprk22", [[0, 0], [1, 0]], [F(1, 2), F(1, 2)], 2,
        "SSPRK(2,2): optimal two-stage SSP method (Heun's second order method)")

    add("ssprk33", [[0, 0, 0], [1, 0, 0], [F(1, 4), F(1, 4), 0]],
        [F(1, 6), F(1, 6), F(2, 3)], 3,
        "SSPRK(3,3) of Shu and Osher")

    add("heun3", [[0, 0, 0], [F(1, 3), 0, 0], [0, F(2, 3), 0]],
        [F(1, 4), 0, F(3, 4)], 3,
        "Heun's third order method")

    add("rk44",
        [[0, 0, 0, 0], [F(1, 2), 0, 0, 0], [0, F(1, 2), 0, 0], [0, 0, 1, 0]],
        [F(1, 6), F(1, 3), F(1, 3), F(1, 6)], 4,
        "classical fourth order method RK(4,4) of Kutta")

    # Fehlberg RK4(3)5, fourth order weights.
    add("fehlberg4",
        [[0, 0, 0, 0, 0],
         [F(1, 4), 0, 0, 0, 0],
         [F(4, 81), F(32, 81), 0, 0, 0],
         [F(57, 98), F(-432, 343), F(1053, 686), 0, 0],
         [F(1, 6), 0, F(27, 52), F(49, 156), 0]],
        [F(43, 288), 0, F(243, 416), F(343, 1872), F(1, 12)], 4,
        "five-stage fourth order method of Fehlberg, RK4(3)5 pair")

    dp_A = [
        [0] * 7,
        [F(1, 5)],
        [F(3, 40), F(9, 40)],
        [F(44, 45), F(-56, 15), F(32, 9)],
        [F(19372, 6561), F(-25360, 2187), F(64448, 6561), F(-212, 729)],
        [F(9017, 3168), F(-355, 33), F(46732, 5247), F(49, 176), F(-5103, 18656)],
        [F(35, 384), 0, F(500, 1113), F(125, 192), F(-2187, 6784), F(11, 84)],
    ]
    add("dp75", dp_A, [F(35, 384), 0, F(500, 1113), F(125, 192), F(-2187, 6784), F(11, 84), 0], 5,
        "DP(7,5): fifth order method of Prince and Dormand")

    bs_A = [
        [0] * 8,
        [F(1, 6)],
        [F(2, 27), F(4, 27)],
        [F(183, 1372), F(-162, 343), F(1053, 1372)],
        [F(68, 297), F(-4, 11), F(42, 143), F(1960, 3861)],
        [F(597, 22528), F(81, 352), F(63099, 585728), F(58653, 366080), F(4617, 20480)],
        [F(174197, 959244), F(-30942, 79937), F(8152137, 19744439), F(666106, 1039181),
         F(-29421, 29068), F(482048, 414219)],
        [F(587, 8064), 0, F(4440339, 15491840), F(24353, 124800), F(387, 44800),
         F(2152, 5985), F(7267, 94080)],
    ]
    add("bs85", bs_A, list(bs_A[7][:7]) + [0], 5,
        "BS(8,5): fifth order method of Bogacki and Shampine")

    # Norsett's two-stage SDIRK; the A-stable root (3 + sqrt 3)/6 of the order-3 condition.
    g = (3.0 + math.sqrt(3.0)) / 6.0
    add("norsett23", [[g, 0.0], [1.0 - 2.0 * g, g]], [0.5, 0.5], 3,
        "two-stage, third order SDIRK method of Norsett")

    # Three-stage SDIRK of order four (Norsett; Crouzeix).
    g = 0.5 + math.cos(math.pi / 18.0) / math.sqrt(3.0)
    w = 1.0 / (6.0 * (2.0 * g - 1.0) ** 2)
    add("sdirk34",
        [[g, 0.0, 0.0], [0.5 - g, g, 0.0], [2.0 * g, 1.0 - 4.0 * g, g]],
        [w, 1.0 - 2.0 * w, w], 4,
        "SDIRK(3,4): three-stage, fourth order SDIRK method")

    sd_A = [
        [F(1, 4)],
        [F(1, 2), F(1, 4)],
        [F(17, 50), F(-1, 25), F(1, 4)],
        [F(371, 1360), F(-137, 2720), F(15, 544), F(1, 4)],
        [F(25, 24), F(-49, 48), F(125, 16), F(-85, 12), F(1, 4)],
    ]
    add("sdirk54", sd_A, list(sd_A[4]), 4,
        "SDIRK(5,4): five-stage, fourth order L-stable SDIRK method of Hairer and Wanner")

    return reg


REGISTRY: Mapping[str, ButcherTableau] = MappingProxyType(_build_registry())


def method_names() -> list[str]:
    return list(REGISTRY)


def registry_get(name: str) -> ButcherTableau:
    """Look up a registered tableau by its CLI name (e.g. ``"rk44"``)."""
    try:
        return REGISTRY[name]
    except KeyError:
        raise UnknownMethod(name, method_names()) from None


# Rooted trees through order 4 as (id, order, elementary weight, 1/gamma(t)).
def _conditions(A: np.ndarray, b: np.ndarray, c: np.ndarray):
    Ac = A @ c
    return [
        ("1:b", 1, b.sum(), 1.0),
        ("2:bc", 2, b @ c, 1 / 2),
        ("3:bc^2", 3, b @ c**2, 1 / 3),
        ("3:bAc", 3, b @ Ac, 1 / 6),
        ("4:bc^3", 4, b @ c**3, 1 / 4),
        ("4:bcAc", 4, b @ (c * Ac), 1 / 8),
        ("4:bAc^2", 4, b @ (A @ c**2), 1 / 12),
        ("4:bAAc", 4, b @ (A @ Ac), 1 / 24),
    ]


def check_order_conditions(t: ButcherTableau, up_to: int) -> list[tuple[str, float]]:
    """Residuals ``Phi(tree) - 1/gamma(tree)`` for all trees of order <= ``up_to``.

    Also reports the row-sum condition ``c_i = sum_j a_ij`` as ``"0:c"``.
    """
    if not 1 <= up_to <= 4:
        raise PreconditionViolated(f"up_to must be in 1..4, got {up_to}")
    res = [("0:c", float(np.max(np.abs(t.A.sum(axis=1) - t.c))))]
    for cid, order, phi, target in _conditions(t.A, t.b, t.c):
        if order <= up_to:
            res.append((cid, float(phi - target)))
    return res


def stability_monomial_coefficients(t: ButcherTableau) -> np.ndarray:
    """Coefficients ``alpha_k = b^T A^(k-1) 1``, k = 1..s, of the stability polynomial."""
    if not t.is_explicit:
        raise NotExplicit(f"{t.name} is not explicit")
    alpha = np.empty(t.s)
    v = np.ones(t.s)
    for k in range(t.s):
        alpha[k] = t.b @ v
        v = t.A @ v
    return alpha


def stability_function(t: ButcherTableau, z: complex | Sequence[complex]) -> np.ndarray:
    """Evaluate ``R(z) = 1 + z b^T (I - zA)^{-1} 1`` for explicit or implicit tableaux."""
    zs = np.atleast_1d(np.asarray(z, dtype=complex))
    out = np.empty(zs.shape, dtype=complex)
    one = np.ones(t.s)
    eye = np.eye(t.s)
    for i, zi in enumerate(zs.flat):
        out.flat[i] = 1.0 + zi * (t.b @ np.linalg.solve(eye - zi * t.A, one))
    return out
