"""Fiber heat kernels, the subordinated resolvent of (Id + sqrt(-Laplacian))^-1,
and the Poisson extension operator on the circle.

The resolvent kernel is the double integral

    G(x, y) = (1/sqrt(pi)) int_0^inf e^-t int_0^inf e^-u / sqrt(u)
              h(t^2 / 4u, x, y) du dt,

evaluated after the substitution u = w^2 with tensor Gauss-Laguerre x
Gauss-Hermite rules; the integrand is then smooth and exponentially decaying.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .complexes import CIRCLE, Fiber
from .errors import DomainError, NumericalError, ParameterError

LINE = "line"

_TRUNC = 1e-16
_LOG_TRUNC = math.log(_TRUNC)


def _check_fiber(fiber) -> str:
    if fiber == LINE or (isinstance(fiber, str) and fiber == LINE):
        return LINE
    if isinstance(fiber, Fiber) and fiber.kind == CIRCLE:
        return CIRCLE
    raise ParameterError("supported fibers: the line ('line') or Fiber(circle, L)")


def heat_kernel_fiber(fiber, t, x, y):
    """Heat kernel of the fiber at time t.

    Line: the Gaussian (4 pi t)^-1/2 exp(-(x-y)^2 / 4t).  Circle of
    circumference L: the Fourier series (1/L) sum_k exp(-(2 pi k / L)^2 t)
    cos(2 pi k (x-y) / L), summed in whichever of its two theta
    representations needs the fewest terms; terms below 1e-16 are dropped.
    """
    kind = _check_fiber(fiber)
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ParameterError("the fiber heat kernel needs t > 0")
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    if kind == LINE:
        return np.exp(-(d**2) / (4.0 * t)) / np.sqrt(4.0 * np.pi * t)
    L = fiber.length
    return _circle_kernel(L, t, d)


def _circle_kernel(L: float, t, d):
    t, d = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(d, dtype=float))
    out = np.empty_like(t)
    spectral = t >= L * L / 40.0
    if np.any(spectral):
        ts, ds = t[spectral], d[spectral]
        acc = np.ones_like(ts)
        k = 1
        while True:
            lam = (2.0 * np.pi * k / L) ** 2
            if float(lam * ts.min()) > -_LOG_TRUNC:
                break
            acc = acc + 2.0 * np.exp(-lam * ts) * np.cos(2.0 * np.pi * k * ds / L)
            k += 1
        out[spectral] = acc / L
    if np.any(~spectral):
        tw, dw = t[~spectral], d[~spectral]
        dw = dw - L * np.round(dw / L)  # principal representative, |dw| <= L/2
        acc = np.exp(-(dw**2) / (4.0 * tw))
        t_max = float(tw.max())
        j = 1
        while (j * L - L / 2.0) ** 2 / (4.0 * t_max) < -_LOG_TRUNC:
            acc = acc + np.exp(-((dw + j * L) ** 2) / (4.0 * tw))
            acc = acc + np.exp(-((dw - j * L) ** 2) / (4.0 * tw))
            j += 1
        out[~spectral] = acc / np.sqrt(4.0 * np.pi * tw)
    return out if out.shape else float(out)


@dataclass(frozen=True)
class QuadratureSpec:
    """Composite tensor Gauss-Legendre rule for the subordination double integral.

    After u = w^2 the integrand is smooth but varies over many scales near the
    origin, so both semiaxes are truncated where the exponential weights fall
    below 1e-17 and covered by geometrically graded panels.
    """

    points: int = 20
    t_panels: int = 12
    w_panels: int = 10
    t_max: float = 40.0
    w_max: float = 6.2
    target: float = 1e-6

    def refined(self) -> "QuadratureSpec":
        return QuadratureSpec(self.points + 8, self.t_panels, self.w_panels,
                              self.t_max, self.w_max, self.target)

    def _axis(self, total: float, n_panels: int):
        edges = total * 2.0 ** -np.arange(n_panels, -1, -1.0)
        edges[0] = 0.0
        xs, ws = np.polynomial.legendre.leggauss(self.points)
        nodes = np.concatenate([0.5 * (b - a) * xs + 0.5 * (a + b)
                                for a, b in zip(edges[:-1], edges[1:])])
        weights = np.concatenate([0.5 * (b - a) * ws
                                  for a, b in zip(edges[:-1], edges[1:])])
        return nodes, weights

    def grids(self):
        t_nodes, t_weights = self._axis(self.t_max, self.t_panels)
        w_nodes, w_weights = self._axis(self.w_max, self.w_panels)
        return t_nodes, t_weights, w_nodes, w_weights


def _g_quadrature(fiber, x: float, y: float, spec: QuadratureSpec) -> float:
    t_nodes, t_weights, w_nodes, w_weights = spec.grids()
    T, W = np.meshgrid(t_nodes, w_nodes, indexing="ij")
    tau = T**2 / (4.0 * W**2)
    vals = heat_kernel_fiber(fiber, tau, x, y) * np.exp(-T) * np.exp(-(W**2))
    return float(2.0 / np.sqrt(np.pi) * (t_weights @ vals @ w_weights))


def resolvent_kernel_G(fiber, x: float, y: float,
                       quad: QuadratureSpec | None = None) -> float:
    """Kernel of (Id + sqrt(-Laplacian))^-1 on the fiber by tensor quadrature.

    Refines once and demands agreement within the target; on-diagonal line
    values diverge and are rejected.
    """
    kind = _check_fiber(fiber)
    if x == y:
        raise DomainError("G(x, x) diverges (logarithmically); evaluate off the diagonal")
    if kind == CIRCLE:
        d = abs(x - y)
        d = d - fiber.length * round(d / fiber.length)
        if d == 0.0:
            raise DomainError("G(x, x) diverges (logarithmically); evaluate off the diagonal")
    quad = quad or QuadratureSpec()
    coarse = _g_quadrature(fiber, x, y, quad)
    fine = _g_quadrature(fiber, x, y, quad.refined())
    scale = max(abs(fine), 1e-300)
    if abs(fine - coarse) > quad.target * scale:
        raise NumericalError(
            f"G quadrature refinement disagreement {abs(fine - coarse):.3e} "
            f"exceeds target {quad.target:.1e} * {scale:.3e}")
    return fine


def apply_resolvent_to_mode(fiber, k: int, quad: QuadratureSpec | None = None) -> float:
    """G-quadrature applied to the circle mode cos(2 pi k x / L).

    The fiber integral of the heat kernel against one mode is its exact
    spectral action e^{-lambda_k tau}, so this isolates the subordination
    double quadrature; the exact answer is 1 / (1 + sqrt(lambda_k)).
    """
    if _check_fiber(fiber) != CIRCLE:
        raise ParameterError("mode application needs a circle fiber")
    quad = quad or QuadratureSpec()
    lam = (2.0 * np.pi * k / fiber.length) ** 2

    def quadrature(spec: QuadratureSpec) -> float:
        t_nodes, t_weights, w_nodes, w_weights = spec.grids()
        T, W = np.meshgrid(t_nodes, w_nodes, indexing="ij")
        tau = T**2 / (4.0 * W**2)
        vals = np.exp(-lam * tau) * np.exp(-T) * np.exp(-(W**2))
        return float(2.0 / np.sqrt(np.pi) * (t_weights @ vals @ w_weights))

    coarse = quadrature(quad)
    fine = quadrature(quad.refined())
    if abs(fine - coarse) > quad.target * max(abs(fine), 1e-300):
        raise NumericalError("mode quadrature did not converge")
    return fine


def resolvent_fourier_coefficient(fiber, k: int,
                                  quad: QuadratureSpec | None = None) -> float:
    """Fourier multiplier of G on the circle: exact value is 1 / (1 + 2 pi |k| / L)."""
    return apply_resolvent_to_mode(fiber, abs(int(k)), quad)


def resolvent_mass(fiber, quad: QuadratureSpec | None = None) -> float:
    """int G(x, y) dy over a circle fiber: the k = 0 multiplier (1 in exact arithmetic)."""
    return apply_resolvent_to_mode(fiber, 0, quad)


def poisson_extension(fiber: Fiber, samples: np.ndarray, s: float) -> np.ndarray:
    """e^{-s sqrt(-Laplacian)} f on a uniform circle grid (exact discrete multiplier)."""
    if _check_fiber(fiber) != CIRCLE:
        raise ParameterError("poisson_extension is implemented for circle fibers")
    if s < 0:
        raise ParameterError("extension height s must be nonnegative")
    samples = np.asarray(samples, dtype=float)
    freqs = np.fft.rfftfreq(samples.size, d=1.0 / samples.size)  # integer wave numbers
    mult = np.exp(-s * 2.0 * np.pi * freqs / fiber.length)
    return np.fft.irfft(np.fft.rfft(samples) * mult, n=samples.size)
