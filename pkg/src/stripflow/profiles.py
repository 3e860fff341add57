"""Per-edge coefficient profiles.

A profile is a strictly positive function of the edge coordinate.  It is
evaluated in the edge's *global* coordinate sigma (which coincides with the
local arclength s when the edge carries no global chart).  Three kinds are
supported:

* ``constant`` -- the value ``c``;
* ``power``    -- ``c * sigma**gamma``;
* ``tabulated``-- log-linear interpolation of positive samples.

Power profiles are closed under products and real powers, and admit closed
forms for integrals, which keeps completeness indicators and metric weights
exact.  Log-linear tables are also closed under products/powers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError

CONSTANT = "constant"
POWER = "power"
TABULATED = "tabulated"


@dataclass(frozen=True)
class Profile:
    kind: str
    c: float = 1.0
    gamma: float = 0.0
    knots: tuple = field(default_factory=tuple)  # ((sigma, value), ...) for tabulated

    # -- constructors ------------------------------------------------------

    @staticmethod
    def constant(c: float) -> "Profile":
        if c <= 0:
            raise ParameterError(f"profile must be strictly positive, got constant {c}")
        return Profile(CONSTANT, c=float(c))

    @staticmethod
    def power(c: float, gamma: float) -> "Profile":
        if c <= 0:
            raise ParameterError(f"profile must be strictly positive, got prefactor {c}")
        if gamma == 0.0:
            return Profile(CONSTANT, c=float(c))
        return Profile(POWER, c=float(c), gamma=float(gamma))

    @staticmethod
    def tabulated(sigmas, values) -> "Profile":
        sigmas = np.asarray(sigmas, dtype=float)
        values = np.asarray(values, dtype=float)
        if sigmas.ndim != 1 or sigmas.size < 2 or sigmas.size != values.size:
            raise ParameterError("tabulated profile needs >= 2 matching samples")
        if np.any(np.diff(sigmas) <= 0):
            raise ParameterError("tabulated sample coordinates must be increasing")
        if np.any(values <= 0):
            raise ParameterError("tabulated profile values must be strictly positive")
        return Profile(TABULATED, knots=tuple(zip(sigmas.tolist(), values.tolist())))

    @property
    def symbolic(self) -> bool:
        return self.kind in (CONSTANT, POWER)

    # -- evaluation --------------------------------------------------------

    def __call__(self, sigma):
        sigma = np.asarray(sigma, dtype=float)
        if self.kind == CONSTANT:
            return np.full_like(sigma, self.c)
        if self.kind == POWER:
            return self.c * sigma**self.gamma
        xs, vs = self._table()
        return np.exp(np.interp(sigma, xs, np.log(vs)))

    def derivative(self, sigma):
        sigma = np.asarray(sigma, dtype=float)
        if self.kind == CONSTANT:
            return np.zeros_like(sigma)
        if self.kind == POWER:
            return self.c * self.gamma * sigma ** (self.gamma - 1.0)
        # log-linear: d/ds exp(L(s)) = L'(s) exp(L(s)), L piecewise linear
        xs, vs = self._table()
        ls = np.log(vs)
        slopes = np.diff(ls) / np.diff(xs)
        idx = np.clip(np.searchsorted(xs, sigma, side="right") - 1, 0, len(slopes) - 1)
        return slopes[idx] * self(sigma)

    def _table(self):
        arr = np.asarray(self.knots, dtype=float)
        return arr[:, 0], arr[:, 1]

    # -- integrals ---------------------------------------------------------

    def integral(self, sigma0: float, sigma1: float) -> float:
        """Exact integral of the profile over [sigma0, sigma1]."""
        return self._power_integral(sigma0, sigma1, 1.0)

    def sqrt_integral(self, sigma0: float, sigma1: float) -> float:
        """Exact integral of the square root of the profile (metric length)."""
        return self._power_integral(sigma0, sigma1, 0.5)

    def _power_integral(self, sigma0: float, sigma1: float, r: float) -> float:
        if sigma1 < sigma0:
            raise ParameterError("integration bounds must be ordered")
        if self.kind == CONSTANT:
            return self.c**r * (sigma1 - sigma0)
        if self.kind == POWER:
            g = self.gamma * r
            cr = self.c**r
            if abs(g + 1.0) < 1e-14:
                return cr * np.log(sigma1 / sigma0)
            return cr * (sigma1 ** (g + 1.0) - sigma0 ** (g + 1.0)) / (g + 1.0)
        # tabulated: exact on each log-linear piece
        xs, vs = self._table()
        ls = r * np.log(vs)
        cuts = np.concatenate(([sigma0], xs[(xs > sigma0) & (xs < sigma1)], [sigma1]))
        total = 0.0
        for a, b in zip(cuts[:-1], cuts[1:]):
            la = np.interp(a, xs, ls)
            lb = np.interp(b, xs, ls)
            if abs(lb - la) < 1e-12:
                total += np.exp(0.5 * (la + lb)) * (b - a)
            else:
                total += (np.exp(lb) - np.exp(la)) * (b - a) / (lb - la)
        return float(total)

    # -- algebra (closed within the supported kinds) ------------------------

    def __mul__(self, other: "Profile") -> "Profile":
        if self.symbolic and other.symbolic:
            return Profile.power(self.c * other.c, self.gamma + other.gamma)
        if self.kind == TABULATED and other.kind == TABULATED:
            xs = np.union1d(self._table()[0], other._table()[0])
        else:
            xs = (self if self.kind == TABULATED else other)._table()[0]
        return Profile.tabulated(xs, self(xs) * other(xs))

    def __pow__(self, r: float) -> "Profile":
        if self.symbolic:
            return Profile.power(self.c**r, self.gamma * r)
        xs, vs = self._table()
        return Profile.tabulated(xs, vs**r)

    def scaled(self, factor: float) -> "Profile":
        if self.symbolic:
            return Profile.power(self.c * factor, self.gamma)
        xs, vs = self._table()
        return Profile.tabulated(xs, vs * factor)


@dataclass(frozen=True)
class EdgeCoefficients:
    """Reduced coefficient data of one strip.

    ``phi`` scales the metric and ``psi`` the measure; the energy density
    ``a = psi * phi**((n-1)/2)`` and mass density ``m = psi * phi**((n+1)/2)``
    are what the discretization consumes.  ``a * phi == m`` by construction.
    """

    phi: Profile
    psi: Profile
    n: int  # fiber dimension, 0 or 1

    def __post_init__(self):
        if self.n not in (0, 1):
            raise ParameterError(f"fiber dimension must be 0 or 1, got {self.n}")

    @property
    def a(self) -> Profile:
        return self.psi * self.phi ** ((self.n - 1) / 2.0)

    @property
    def m(self) -> Profile:
        return self.psi * self.phi ** ((self.n + 1) / 2.0)

    def validate_positive(self, sigma0: float, sigma1: float, samples: int = 8) -> None:
        pts = np.linspace(sigma0, sigma1, samples)
        for name, prof in (("phi", self.phi), ("psi", self.psi)):
            if np.any(prof(pts) <= 0):
                raise ParameterError(f"{name} is not strictly positive on [{sigma0}, {sigma1}]")


def treebolic_coefficients(level: int, q: float, alpha: float, beta: float, n: int = 1) -> EdgeCoefficients:
    """Coefficients of a level-k treebolic strip in the global coordinate.

    On a level-k edge, sigma runs over [q**(k-1), q**k]; the metric factor is
    sigma**-2 and the measure weight beta**k * sigma**alpha, so that the mass
    density is beta**k * sigma**(alpha - 2) for a one-dimensional fiber.
    """
    phi = Profile.power(1.0, -2.0)
    if n == 1:
        psi = Profile.power(beta**level, alpha)
    else:
        # 1D reduction: same (a, m) pair as the fiber case per unit fiber length
        psi = Profile.power(beta**level, alpha - 1.0)
    return EdgeCoefficients(phi=phi, psi=psi, n=n)
