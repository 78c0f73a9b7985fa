"""Species constants, relativistic thermal equilibria, and neutrality.

All defaults use m = e = k_B*T = 1.  Every routine accepts general
constants; the test suite pins the defaults.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .grids import adaptive_quad_1d


@dataclass(frozen=True)
class SpeciesParams:
    """One species: mass, charge magnitude, charge sign, temperature."""

    mass: float = 1.0
    charge: float = 1.0
    sign: int = +1
    k_bT: float = 1.0

    def __post_init__(self):
        if not (self.mass > 0 and self.charge > 0 and self.k_bT > 0):
            raise ConfigurationError(
                f"mass, charge and k_bT must be positive: {self}")
        if self.sign not in (+1, -1):
            raise ConfigurationError(f"sign must be +1 or -1, got {self.sign}")

    def p0(self, p):
        """Energy sqrt(m^2 + |p|^2); p is (..., 3)."""
        p = np.asarray(p, dtype=float)
        return np.sqrt(self.mass ** 2 + np.sum(p * p, axis=-1))

    def p0_radial(self, r):
        return np.sqrt(self.mass ** 2 + np.asarray(r, dtype=float) ** 2)


@dataclass(frozen=True)
class PlasmaPair:
    """The two-species structure: positive and negative charge carriers."""

    plus: SpeciesParams = SpeciesParams(sign=+1)
    minus: SpeciesParams = SpeciesParams(sign=-1)

    def __post_init__(self):
        if self.plus.sign != +1 or self.minus.sign != -1:
            raise ConfigurationError("pair must hold a +1 and a -1 species")
        if self.plus.k_bT != self.minus.k_bT:
            raise ConfigurationError("both species must share k_bT")

    @property
    def species(self):
        return (self.plus, self.minus)


def bessel_k2(s, tol=1e-12):
    """Modified Bessel function K2 via its integral representation.

    K2(s) = (s^2/3) * int_1^inf exp(-s t) (t^2 - 1)^(3/2) dt, s > 0.

    Evaluated by adaptive quadrature; this is the formula under test, the
    independent series/asymptotic oracle lives in the test suite.
    """
    if not s > 0:
        raise ConfigurationError(f"bessel_k2 requires s > 0, got {s!r}")

    def integrand(t):
        return np.exp(-s * t) * (t * t - 1.0) ** 1.5

    # Envelope: for t >= 2, (t^2-1)^{3/2} <= t^3 and t^3 e^{-st} decays
    # monotonically once s t >= 3.
    def envelope(t):
        return np.exp(-s * t) * t ** 3

    val = adaptive_quad_1d(integrand, 1.0, np.inf, tol=tol * 3.0 / s ** 2,
                           envelope=envelope)
    return s * s / 3.0 * val


def juttner_norm(sp: SpeciesParams, tol=1e-12):
    """Normalization constant (4 pi e m^2 k_bT K2(m/k_bT))^{-1}."""
    m, e, kT = sp.mass, sp.charge, sp.k_bT
    return 1.0 / (4.0 * np.pi * e * m * m * kT * bessel_k2(m / kT, tol=tol))


def juttner(p, sp: SpeciesParams):
    """Relativistic equilibrium density at momentum p (shape (..., 3))."""
    return juttner_norm(sp) * np.exp(-sp.p0(p) / sp.k_bT)


def juttner_radial(r, sp: SpeciesParams, norm=None):
    """Same density as a function of |p| (vectorized in r)."""
    if norm is None:
        norm = juttner_norm(sp)
    return norm * np.exp(-sp.p0_radial(r) / sp.k_bT)


def radial_moment(sp: SpeciesParams, power=2, energy_power=0, tol=1e-10,
                  norm=None):
    """int |p|^power * p0^energy_power * J dp  by radial adaptive quadrature.

    ``power`` >= 2 includes the r^2 volume factor implicitly: the integral
    computed is 4 pi int_0^inf r^power p0(r)^energy_power J(r) dr with
    power counting |p|^(power-2) * r^2.
    """
    if norm is None:
        norm = juttner_norm(sp)
    kT = sp.k_bT

    def f(r):
        return (r ** power) * sp.p0_radial(r) ** energy_power \
            * np.exp(-sp.p0_radial(r) / kT)

    def env(r):
        return (r ** power) * (2.0 * r) ** max(energy_power, 0) \
            * np.exp(-r / kT)

    return 4.0 * np.pi * norm * adaptive_quad_1d(f, 0.0, np.inf, tol=tol / norm,
                                                 envelope=env)


def mass_constant(sp: SpeciesParams, tol=1e-10):
    """M = int J dp by radial quadrature; equals 1/e under the normalization."""
    return radial_moment(sp, power=2, energy_power=0, tol=tol)


def check_neutrality(pair: PlasmaPair, tol=1e-10):
    """Residual |e+ M+ - e- M-| of the global neutrality condition."""
    mp = mass_constant(pair.plus, tol=tol)
    mm = mass_constant(pair.minus, tol=tol)
    return abs(pair.plus.charge * mp - pair.minus.charge * mm)


def energy_mean(sp: SpeciesParams, tol=1e-10):
    """kappa2 for one species: int J p0 dp / int J dp."""
    num = radial_moment(sp, power=2, energy_power=1, tol=tol)
    den = radial_moment(sp, power=2, energy_power=0, tol=tol)
    return num / den
