"""Momentum-space discretization.

Uniform truncated tensor grids with midpoint (cell-center) quadrature.
The midpoint rule has positive weights, sums exactly to the cube volume,
and staggers trivially: the half-cell companion grid never shares a node
with the base grid, which is what keeps the singular collision kernel
off its diagonal in every double-grid quadrature downstream.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import ConfigurationError, NumericalFailure

DEFAULT_N_PER_AXIS = 16
DEFAULT_P_MAX = 6.0


@dataclass(frozen=True)
class VelocityGrid:
    """Truncated momentum lattice with tensor midpoint quadrature.

    Attributes
    ----------
    n_per_axis : int
        Nodes per axis; the grid has ``n_per_axis**3`` nodes.
    p_max : float
        Half-width of the momentum cube (units of m*c with constants = 1).
    stagger_offset : tuple of float
        Per-axis offset in units of the spacing ``h``; 0 or 1/2.
    nodes : ndarray, shape (N, 3)
        Cell-center coordinates, ordered lexicographically by (ix, iy, iz).
    weights : ndarray, shape (N,)
        Quadrature weights; uniform ``h**3`` for the midpoint rule.
    """

    n_per_axis: int
    p_max: float
    stagger_offset: tuple = (0.0, 0.0, 0.0)
    nodes: np.ndarray = field(repr=False, default=None)
    weights: np.ndarray = field(repr=False, default=None)

    @property
    def spacing(self):
        return 2.0 * self.p_max / self.n_per_axis

    @property
    def axes(self):
        """The three 1D coordinate arrays whose tensor product is `nodes`."""
        h = self.spacing
        return tuple(
            -self.p_max + (np.arange(self.n_per_axis) + 0.5 + off) * h
            for off in self.stagger_offset
        )

    @property
    def shape(self):
        n = self.n_per_axis
        return (n, n, n)

    @property
    def n_nodes(self):
        return self.n_per_axis ** 3

    def staggered_companion(self):
        """The half-cell shifted grid used for singular-kernel quadrature."""
        return build_grid(self.n_per_axis, self.p_max, stagger=(0.5, 0.5, 0.5))

    def cell_centers(self):
        """Interior staggered points having all 8 base-grid corners.

        Returns the (n-1)^3 points ``base_nodes + h/2`` that sit at centers
        of cells of the base lattice, as an (M, 3) array ordered
        lexicographically.  These carry the same uniform weight ``h**3``.
        """
        h = self.spacing
        ax = [a[:-1] + 0.5 * h for a in self.axes]
        X, Y, Z = np.meshgrid(*ax, indexing="ij")
        return np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])


def build_grid(n_per_axis, p_max, stagger=(0.0, 0.0, 0.0)):
    """Build a uniform midpoint-rule momentum grid.

    Parameters
    ----------
    n_per_axis : int, >= 2
    p_max : float, > 0
    stagger : 3-sequence with entries in {0, 1/2}
        Offset per axis in units of the spacing.
    """
    if not isinstance(n_per_axis, (int, np.integer)) or n_per_axis < 2:
        raise ConfigurationError(
            f"n_per_axis must be an integer >= 2, got {n_per_axis!r}")
    if not p_max > 0:
        raise ConfigurationError(f"p_max must be positive, got {p_max!r}")
    stagger = tuple(float(s) for s in stagger)
    if any(s not in (0.0, 0.5) for s in stagger):
        raise ConfigurationError(
            f"stagger entries must be 0 or 1/2, got {stagger!r}")

    h = 2.0 * p_max / n_per_axis
    axes = [-p_max + (np.arange(n_per_axis) + 0.5 + s) * h for s in stagger]
    X, Y, Z = np.meshgrid(*axes, indexing="ij")
    nodes = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])
    weights = np.full(nodes.shape[0], h ** 3)
    return VelocityGrid(int(n_per_axis), float(p_max), stagger, nodes, weights)


def quad(grid, values):
    """Quadrature sum over the grid: sum_k w_k * values_k.

    ``values`` must be node-indexed with one entry per node; a length
    mismatch is a caller contract violation.
    """
    values = np.asarray(values)
    if values.shape[0] != grid.n_nodes:
        raise ValueError(
            f"values has {values.shape[0]} entries, grid has {grid.n_nodes} nodes")
    # Uniform weights: a single well-ordered reduction keeps runs bit-stable.
    return float(grid.weights[0] * np.sum(values, axis=0)) if values.ndim == 1 \
        else grid.weights[0] * np.sum(values, axis=0)


def quad_inner(grid, u, v):
    """Discrete L2 inner product <u, v> = sum_k w_k u_k v_k."""
    return quad(grid, np.asarray(u) * np.asarray(v))


_TAIL_FACTOR = 100.0  # envelope threshold: integrand tail cut where env < tol/100


def adaptive_quad_1d(integrand, a, b=np.inf, tol=1e-10, envelope=None,
                     subdivision_budget=200):
    """Adaptive quadrature of ``integrand`` on [a, b) or [a, inf).

    Infinite upper limits are truncated at the first point R (found by
    doubling from max(a + 1, 1)) where the caller-supplied decreasing
    ``envelope`` falls below tol/100; without an envelope the integrand's
    own magnitude is probed.  The truncated interval is then handled by
    a Gauss-Kronrod adaptive rule.

    Returns
    -------
    float
        The estimate, with estimated absolute error <= tol.

    Raises
    ------
    NumericalFailure
        If the error estimate exceeds ``tol`` after the subdivision budget;
        the exception carries the best estimate and its error bound.
    """
    if not tol > 0:
        raise ConfigurationError(f"tol must be positive, got {tol!r}")
    if np.isinf(b):
        probe = envelope if envelope is not None else (lambda r: abs(integrand(r)))
        r = max(abs(a) + 1.0, 1.0)
        cutoff = tol / _TAIL_FACTOR
        for _ in range(80):
            if probe(r) < cutoff:
                break
            r *= 2.0
        else:
            raise NumericalFailure(
                "integrand envelope does not decay below tol/100")
        b = r

    import warnings
    with warnings.catch_warnings():
        # accuracy is policed below via abserr; the warning adds noise only
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        value, abserr = integrate.quad(integrand, a, b, epsabs=tol,
                                       epsrel=0.0, limit=subdivision_budget)
    if abserr > max(tol, abs(value) * 1e-13):
        raise NumericalFailure(
            f"quadrature error estimate {abserr:.3e} exceeds tol {tol:.3e}",
            best_estimate=value, error_bound=abserr)
    return value
