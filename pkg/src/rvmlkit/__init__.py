"""Desk-scale numerics for a two-species relativistic collisional plasma.

The package provides, as independently testable layers:

* ``grids``      -- truncated momentum lattices, tensor midpoint quadrature,
                    staggered companion grids, adaptive 1D quadrature.
* ``equilibria`` -- relativistic thermal equilibria (Juttner), Bessel K2,
                    species mass constants and the global neutrality check.
* ``kernel``     -- the relativistic Landau (Belyaev-Budker) collision kernel
                    and its algebraic identities.
* ``landau``     -- the discrete linearized collision operator L = A - K,
                    the six-dimensional collision-invariant basis, spectral
                    diagnostics and the bilinear collision form.
* ``momentfn``   -- exact-integer Gaussian/momentum moment tables and the
                    moment-constructed test functions B_ij and C_i.
* ``maxwell``    -- staggered-grid (Yee) cavity electrodynamics with
                    perfect-conductor walls and conservation diagnostics.
* ``billiards``  -- exact specular-reflection transport in disk/ball domains.
* ``scenarios``  -- relaxation runs, Lyapunov functionals, time-series reports.
* ``cli``        -- the ``rvmlkit`` command-line harness.

Reproducibility: BLAS thread pools are pinned to one thread at import time
(before numpy is loaded) so that repeated runs are bitwise identical
regardless of the machine's core count.  Coarse-grained parallelism is
provided by the assembly routines' ``threads`` argument, which partitions
work into fixed chunks accumulated in a fixed order.
"""

import os as _os

# Must happen before the first numpy import anywhere in this process for the
# pin to take effect; harmless if numpy is already loaded.
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS",
             "NUMEXPR_NUM_THREADS", "VECLIB_MAXIMUM_THREADS"):
    _os.environ.setdefault(_var, "1")

__version__ = "0.1.0"

from .errors import ConfigurationError, NumericalFailure, SingularKernelError

__all__ = [
    "ConfigurationError",
    "NumericalFailure",
    "SingularKernelError",
    "__version__",
]
