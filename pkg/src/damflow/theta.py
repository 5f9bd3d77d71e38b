"""Genus-2 Riemann theta functions with half-integer characteristics.

Characteristics are handled at the interface as the binary 2x2 display
matrix whose first column is 2*eps and second column is 2*eps', so that a
point ``u = (Pi @ eps_col + eps_prime_col) / 2`` of the Jacobian has display
matrix ``[[e1, e1'], [e2, e2']]``.  Internally the halved vectors are used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

DEFAULT_TOL = 1e-12

# AJ images of the branch points p1..p6 as display matrices (rows shown).
BRANCH_CHARACTERISTICS: dict[int, tuple[tuple[int, int], tuple[int, int]]] = {
    1: ((0, 0), (0, 0)),
    2: ((1, 0), (0, 0)),
    3: ((1, 1), (0, 0)),
    4: ((0, 1), (1, 0)),
    5: ((0, 1), (1, 1)),
    6: ((0, 1), (0, 1)),
}


class ThetaError(ValueError):
    """Invalid Riemann matrix or unmet truncation tolerance."""


@dataclass(frozen=True)
class SeriesControl:
    target_tol: float = DEFAULT_TOL
    max_radius: int = 40

    def __post_init__(self):
        if not self.target_tol > 0:
            raise ValueError("target_tol must be positive")
        if self.max_radius < 1:
            raise ValueError("max_radius must be >= 1")


DEFAULT_CONTROL = SeriesControl()


@dataclass(frozen=True)
class ThetaCharacteristic:
    """Half-integer characteristic [eps, eps'] (entries of eps, eps' real)."""

    eps: tuple[float, float]
    eps_prime: tuple[float, float]

    @classmethod
    def from_display(cls, rows: Sequence[Sequence[int]]) -> "ThetaCharacteristic":
        """Build from the 2x2 display matrix (columns 2*eps and 2*eps')."""
        m = np.asarray(rows, dtype=float)
        if m.shape != (2, 2):
            raise ValueError("display matrix must be 2x2")
        return cls((m[0, 0] / 2, m[1, 0] / 2), (m[0, 1] / 2, m[1, 1] / 2))

    @classmethod
    def from_point(cls, u, omega) -> "ThetaCharacteristic":
        """Characteristic of u = (i*Omega @ eps2 + eps2')/2 for purely imaginary Pi."""
        u = np.asarray(u, dtype=complex)
        eps2 = np.linalg.solve(np.asarray(omega, float), 2 * u.imag)
        eps2p = 2 * u.real
        return cls((eps2[0] / 2, eps2[1] / 2), (eps2p[0] / 2, eps2p[1] / 2))

    def display(self) -> tuple[tuple[float, float], tuple[float, float]]:
        e, ep = self.eps, self.eps_prime
        return ((2 * e[0], 2 * ep[0]), (2 * e[1], 2 * ep[1]))

    def is_integer(self, tol: float = 1e-12) -> bool:
        return all(abs(2 * v - round(2 * v)) < tol for v in (*self.eps, *self.eps_prime))

    def binary(self) -> tuple[tuple[int, int], tuple[int, int]]:
        if not self.is_integer():
            raise ValueError("characteristic is not half-integer")
        d = self.display()
        return tuple(tuple(int(round(v)) % 2 for v in row) for row in d)  # type: ignore[return-value]

    def __add__(self, other: "ThetaCharacteristic") -> "ThetaCharacteristic":
        return ThetaCharacteristic.from_display(
            (np.asarray(self.binary()) + np.asarray(other.binary())) % 2
        )

    def shift(self, pi_matrix) -> np.ndarray:
        """The half-period (Pi eps + eps') this characteristic stands for."""
        return (np.asarray(pi_matrix) @ np.asarray(self.eps)
                + np.asarray(self.eps_prime)).astype(complex)


ZERO_CHAR = ThetaCharacteristic((0.0, 0.0), (0.0, 0.0))


def char_from_points(indices: Iterable[int]) -> ThetaCharacteristic:
    """Mod-2 sum of the branch point characteristics, e.g. [3, 5] -> [35]."""
    acc = np.zeros((2, 2), dtype=int)
    for k in indices:
        if k not in BRANCH_CHARACTERISTICS:
            raise ValueError(f"branch index {k} outside 1..6")
        acc = (acc + np.asarray(BRANCH_CHARACTERISTICS[k])) % 2
    return ThetaCharacteristic.from_display(acc)


def char_parity(c: ThetaCharacteristic) -> str:
    """'even' or 'odd' according to 4 eps.eps' mod 2."""
    b = np.asarray(c.binary())
    return "odd" if int(b[:, 0] @ b[:, 1]) % 2 else "even"


def all_integer_characteristics() -> list[ThetaCharacteristic]:
    out = []
    for bits in range(16):
        m = [[(bits >> 3) & 1, (bits >> 2) & 1], [(bits >> 1) & 1, bits & 1]]
        out.append(ThetaCharacteristic.from_display(m))
    return out


CHAR_35 = char_from_points([3, 5])


def check_riemann_matrix(pi_matrix) -> np.ndarray:
    pi_matrix = np.asarray(pi_matrix, dtype=complex)
    if pi_matrix.shape != (2, 2):
        raise ThetaError("Riemann matrix must be 2x2")
    scale = max(1.0, float(np.abs(pi_matrix).max()))
    if np.abs(pi_matrix - pi_matrix.T).max() > 1e-12 * scale:
        raise ThetaError("Riemann matrix is not symmetric")
    im = 0.5 * (pi_matrix.imag + pi_matrix.imag.T)
    if np.linalg.eigvalsh(im).min() <= 0:
        raise ThetaError("imaginary part of Riemann matrix is not positive definite")
    return pi_matrix


def truncation_radius(pi_matrix, ctl: SeriesControl = DEFAULT_CONTROL) -> int:
    """Lattice radius R with Gaussian tail exp(-pi lam_min r^2) below target_tol."""
    im = np.asarray(pi_matrix).imag
    lam_min = float(np.linalg.eigvalsh(0.5 * (im + im.T)).min())
    r = math.ceil(math.sqrt(-math.log(ctl.target_tol) / (math.pi * lam_min))) + 2
    if r > ctl.max_radius:
        raise ThetaError(
            f"tolerance {ctl.target_tol:g} needs radius {r} > max_radius {ctl.max_radius}"
        )
    return r


def _lattice(radius: int) -> np.ndarray:
    k = np.arange(-radius, radius + 1)
    m1, m2 = np.meshgrid(k, k, indexing="ij")
    return np.stack([m1.ravel(), m2.ravel()], axis=1).astype(float)


def _series(c: ThetaCharacteristic, u, pi_matrix, ctl: SeriesControl, order: int):
    """Direct series for theta[c] and optionally its gradient, batched over u.

    The lattice is centred at the dominant term for each u so that the
    truncation error bound is relative to the largest term.
    """
    pi_matrix = check_riemann_matrix(pi_matrix)
    u = np.asarray(u, dtype=complex)
    single = u.ndim == 1
    u = np.atleast_2d(u)
    radius = truncation_radius(pi_matrix, ctl)
    eps = np.asarray(c.eps, dtype=float)
    epsp = np.asarray(c.eps_prime, dtype=float)
    im = pi_matrix.imag
    centre = -np.linalg.solve(0.5 * (im + im.T), u.imag.T).T - eps
    base = np.round(centre)
    n = base[:, None, :] + _lattice(radius)[None, :, :] + eps  # (N, M, 2)
    arg = (2j * np.pi * np.einsum("nmk,nk->nm", n, u + epsp)
           + 1j * np.pi * np.einsum("nmk,kl,nml->nm", n, pi_matrix, n))
    terms = np.exp(arg)
    val = terms.sum(axis=1)
    if order == 0:
        return val[0] if single else val
    k = 2j * np.pi * n  # d/du of each exponent
    out = [val, np.einsum("nmi,nm->ni", k, terms)]
    if order >= 2:
        out.append(np.einsum("nmi,nmj,nm->nij", k, k, terms))
    if order >= 3:
        out.append(np.einsum("nmi,nmj,nml,nm->nijl", k, k, k, terms))
    if single:
        return tuple(o[0] for o in out)
    return tuple(out)


def theta(u, pi_matrix, ctl: SeriesControl = DEFAULT_CONTROL):
    """Riemann theta function theta(u, Pi); u may be (2,) or (N, 2)."""
    return _series(ZERO_CHAR, u, pi_matrix, ctl, 0)


def theta_char(c: ThetaCharacteristic, u, pi_matrix, ctl: SeriesControl = DEFAULT_CONTROL):
    return _series(c, u, pi_matrix, ctl, 0)


def theta_char_shifted(c: ThetaCharacteristic, u, pi_matrix, ctl: SeriesControl = DEFAULT_CONTROL):
    """theta[c] via the prefactor identity exp(...) * theta(u + Pi eps + eps')."""
    pi_matrix = np.asarray(pi_matrix, dtype=complex)
    u = np.asarray(u, dtype=complex)
    eps = np.asarray(c.eps, dtype=float)
    epsp = np.asarray(c.eps_prime, dtype=float)
    pref = np.exp(1j * np.pi * eps @ pi_matrix @ eps
                  + 2j * np.pi * (u + epsp) @ eps)
    return pref * theta(u + pi_matrix @ eps + epsp, pi_matrix, ctl)


def theta_grad(c: ThetaCharacteristic, u, pi_matrix, ctl: SeriesControl = DEFAULT_CONTROL):
    """Gradient (d/du1, d/du2) of theta[c] at u."""
    return _series(c, u, pi_matrix, ctl, 1)[1]


def theta_value_grad(c: ThetaCharacteristic, u, pi_matrix, ctl: SeriesControl = DEFAULT_CONTROL):
    return _series(c, u, pi_matrix, ctl, 1)


def theta_derivatives(c: ThetaCharacteristic, u, pi_matrix, order: int = 2,
                      ctl: SeriesControl = DEFAULT_CONTROL):
    """(value, gradient, Hessian[, third derivative tensor]) of theta[c] at u."""
    if order not in (1, 2, 3):
        raise ValueError("order must be 1, 2 or 3")
    return _series(c, u, pi_matrix, ctl, order)


# d theta / d Omega_jk = HEAT[j, k] * d^2 theta / du_j du_k for Pi = i Omega
HEAT = np.array([[1.0, 2.0], [2.0, 1.0]]) / (4 * np.pi)
OMEGA_INDEX = ((0, 0), (0, 1), (1, 1))
