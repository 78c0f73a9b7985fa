"""Discrete linearized collision operator, invariant basis, and diagnostics.

Discretization summary
----------------------
Everything is built from one weighted difference operator.  With
``M(p) = exp(-p0 / (2 k_bT))`` (the square-root equilibrium profile up to
its normalization constant), define on grid faces

    (D_a g)(face) = M(p_face) * (g/M at right node - g/M at left node) / h,

and at nodes the average of the (up to two) adjacent face values; missing
boundary faces contribute zero, which is the zero-flux closure.  D kills
any multiple of M exactly, so the species-mass modes are discrete null
vectors to rounding.

The diffusion part acts through the quadratic form

    <A g, h> = sum_nodes w (D h)^T sigma(p) (D g),
    sigma^s(p) = sum_t int Phi_st(p, q) J_t(q) dq,

with the q-integral over the half-cell staggered companion points (cell
centers), which never meet the kernel diagonal.  The coupling part is

    <K g, h> = sum_s,t  (D h_s, w sqrtJ_s)^T  Phi_st  (w sqrtJ_t D g_t)

with the q-side D realized on cell centers from the 8 surrounding nodes.
Both parts are second-order consistent in the interior; K's two different
difference stencils leave an O(h) skew component, removed by the final
symmetrization L <- (L + L^T)/2 (the continuum operator is symmetric).

The same machinery gives the bilinear collision form ``apply_gamma`` in
adjoint (divergence-moved-onto-test-function) shape, which makes the
species-mass moments of the bilinear form vanish exactly.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import ConfigurationError, NumericalFailure
from .grids import VelocityGrid, build_grid, quad
from .equilibria import (SpeciesParams, PlasmaPair, juttner_norm,
                         mass_constant, energy_mean, radial_moment)
from .kernel import (CoulombLog, phi_blocks, identity_local_coefficient,
                     identity_smooth_coefficient, _smooth_identity_kernel,
                     KERNEL_CONSTANT)

#: Null-space / basis / bilinear-form tolerances, calibrated at grid
#: (12, 6.0); consistency is O(h^2) in the interior so they halve (at
#: least) under n -> 2n at fixed p_max.
TOL_NULL = 5e-2
TOL_BASIS = 1e-3
TOL_GAMMA = 5e-2

#: Assembly refuses to build operators whose dense storage would exceed this.
MEMORY_BUDGET_BYTES = 4 * 1024 ** 3


# ---------------------------------------------------------------------------
# distribution vectors
# ---------------------------------------------------------------------------

@dataclass
class DistributionVector:
    """Two-species perturbation sampled on a shared VelocityGrid."""

    grid: VelocityGrid
    values_plus: np.ndarray
    values_minus: np.ndarray

    def __post_init__(self):
        n = self.grid.n_nodes
        self.values_plus = np.asarray(self.values_plus, dtype=float)
        self.values_minus = np.asarray(self.values_minus, dtype=float)
        if self.values_plus.shape != (n,) or self.values_minus.shape != (n,):
            raise ValueError("component length does not match grid")
        if not (np.all(np.isfinite(self.values_plus))
                and np.all(np.isfinite(self.values_minus))):
            raise ValueError("non-finite entries in DistributionVector")

    def stack(self):
        return np.concatenate([self.values_plus, self.values_minus])

    @classmethod
    def from_stack(cls, grid, vec):
        n = grid.n_nodes
        return cls(grid, vec[:n], vec[n:])

    @classmethod
    def zero(cls, grid):
        n = grid.n_nodes
        return cls(grid, np.zeros(n), np.zeros(n))

    def inner(self, other):
        """Discrete two-species L2 inner product."""
        return quad(self.grid, self.values_plus * other.values_plus) \
            + quad(self.grid, self.values_minus * other.values_minus)

    def norm(self):
        return np.sqrt(max(self.inner(self), 0.0))


# ---------------------------------------------------------------------------
# difference operators
# ---------------------------------------------------------------------------

def _lex_index(n):
    """Index helper: (i, j, k) -> flat lexicographic index."""
    def idx(i, j, k):
        return (i * n + j) * n + k
    return idx


def node_gradient_ops(grid: VelocityGrid, sp_s: SpeciesParams = None):
    """Node-collocated face-averaged derivative matrices (Dx, Dy, Dz).

    With ``sp_s`` given, the M-weighted operator annihilating M(p) =
    exp(-p0/(2 kT)) exactly; with ``sp_s = None`` the plain derivative.
    """
    n = grid.n_per_axis
    h = grid.spacing
    axes = grid.axes
    idx = _lex_index(n)
    if sp_s is not None:
        log_m = -0.5 * sp_s.p0(grid.nodes) / sp_s.k_bT
    ops = []
    for a in range(3):
        rows, cols, vals = [], [], []
        for i in range(n):
            for j in range(n):
                for k in range(n):
                    me = [i, j, k]
                    node = idx(i, j, k)
                    for sgn in (+1, -1):
                        nb = list(me)
                        nb[a] += sgn
                        if not 0 <= nb[a] < n:
                            continue
                        other = idx(*nb)
                        lo, hi = (node, other) if sgn > 0 else (other, node)
                        if sp_s is not None:
                            face = [axes[0][me[0]], axes[1][me[1]], axes[2][me[2]]]
                            face[a] = 0.5 * (axes[a][me[a]] + axes[a][nb[a]])
                            m_face = np.exp(-0.5 * sp_s.p0(np.array(face))
                                            / sp_s.k_bT)
                            w_hi = m_face * np.exp(-log_m[hi])
                            w_lo = m_face * np.exp(-log_m[lo])
                        else:
                            w_hi = w_lo = 1.0
                        coeff = sgn * 0.5 / h
                        rows += [node, node]
                        cols += [hi, lo]
                        vals += [coeff * w_hi, -coeff * w_lo]
        ops.append(sp.csr_matrix((vals, (rows, cols)),
                                 shape=(grid.n_nodes, grid.n_nodes)))
    return ops


def cell_ops(grid: VelocityGrid, sp_s: SpeciesParams = None):
    """Cell-center operators from the 8 cell corners.

    Returns (Cx, Cy, Cz, Cavg): derivative along each axis (M-weighted if
    ``sp_s`` given, else plain) and the plain 8-point average, all mapping
    node vectors to the (n-1)^3 cell centers.
    """
    n = grid.n_per_axis
    h = grid.spacing
    idx = _lex_index(n)
    m = n - 1
    centers = grid.cell_centers()
    if sp_s is not None:
        log_m_node = -0.5 * sp_s.p0(grid.nodes) / sp_s.k_bT
        m_center = np.exp(-0.5 * sp_s.p0(centers) / sp_s.k_bT)

    corner_offsets = [(di, dj, dk) for di in (0, 1) for dj in (0, 1)
                      for dk in (0, 1)]
    rows_d = [[] for _ in range(3)]
    cols_d = [[] for _ in range(3)]
    vals_d = [[] for _ in range(3)]
    rows_v, cols_v, vals_v = [], [], []
    cidx = _lex_index(m)
    for i in range(m):
        for j in range(m):
            for k in range(m):
                c = cidx(i, j, k)
                for (di, dj, dk) in corner_offsets:
                    nd = idx(i + di, j + dj, k + dk)
                    rows_v.append(c)
                    cols_v.append(nd)
                    vals_v.append(0.125)
                    signs = (di, dj, dk)
                    for a in range(3):
                        s = 1.0 if signs[a] == 1 else -1.0
                        wgt = s * 0.25 / h
                        if sp_s is not None:
                            wgt *= m_center[c] * np.exp(-log_m_node[nd])
                        rows_d[a].append(c)
                        cols_d[a].append(nd)
                        vals_d[a].append(wgt)
    shape = (m ** 3, grid.n_nodes)
    ds = [sp.csr_matrix((vals_d[a], (rows_d[a], cols_d[a])), shape=shape)
          for a in range(3)]
    cavg = sp.csr_matrix((vals_v, (rows_v, cols_v)), shape=shape)
    return ds[0], ds[1], ds[2], cavg


# ---------------------------------------------------------------------------
# invariant basis and projection
# ---------------------------------------------------------------------------

@dataclass
class ProjectionBasis:
    """Discrete orthonormal basis of the six collision invariants.

    The normalization constants are computed with the *grid* quadrature so
    the discrete Gram matrix is the identity to rounding; the radial
    (untruncated) reference values are kept alongside for reporting, and
    their relative deviation measures the momentum-cube truncation.
    """

    grid: VelocityGrid
    pair: PlasmaPair
    kappa1: float
    kappa2_plus: float
    kappa2_minus: float
    kappa3: float
    M_plus: float
    M_minus: float
    chi: list                      # six DistributionVectors
    radial_reference: dict = field(default_factory=dict)

    def stack_matrix(self):
        """(2N, 6) array of the basis columns."""
        return np.column_stack([c.stack() for c in self.chi])

    def gram(self):
        X = self.stack_matrix()
        w = self.grid.weights[0]
        return w * (X.T @ X)


def build_basis(grid: VelocityGrid, pair: PlasmaPair = PlasmaPair(),
                tol_radial=1e-10):
    """Tabulate chi_1..chi_6 with grid-consistent normalization constants."""
    if any(s != 0.0 for s in grid.stagger_offset):
        raise ConfigurationError("basis requires the unstaggered grid")
    sp_p, sp_m = pair.plus, pair.minus
    Jp = juttner_norm(sp_p) * np.exp(-sp_p.p0(grid.nodes) / sp_p.k_bT)
    Jm = juttner_norm(sp_m) * np.exp(-sp_m.p0(grid.nodes) / sp_m.k_bT)
    sqrtJp, sqrtJm = np.sqrt(Jp), np.sqrt(Jm)
    p0p = sp_p.p0(grid.nodes)
    p0m = sp_m.p0(grid.nodes)

    M_plus = quad(grid, Jp)
    M_minus = quad(grid, Jm)
    kappa2_plus = quad(grid, Jp * p0p) / M_plus
    kappa2_minus = quad(grid, Jm * p0m) / M_minus
    k1_den = quad(grid, grid.nodes[:, 0] ** 2 * (Jp + Jm))
    if k1_den <= 0 or M_plus <= 0 or M_minus <= 0:
        raise ConfigurationError("degenerate basis normalizers")
    kappa1 = k1_den ** -0.5
    k3_den = quad(grid, (p0p - kappa2_plus) ** 2 * Jp) \
        + quad(grid, (p0m - kappa2_minus) ** 2 * Jm)
    kappa3 = k3_den ** -0.5

    zeros = np.zeros(grid.n_nodes)
    chi = [
        DistributionVector(grid, sqrtJp / np.sqrt(M_plus), zeros),
        DistributionVector(grid, zeros, sqrtJm / np.sqrt(M_minus)),
    ]
    for i in range(3):
        chi.append(DistributionVector(
            grid, kappa1 * grid.nodes[:, i] * sqrtJp,
            kappa1 * grid.nodes[:, i] * sqrtJm))
    chi.append(DistributionVector(
        grid, kappa3 * (p0p - kappa2_plus) * sqrtJp,
        kappa3 * (p0m - kappa2_minus) * sqrtJm))

    radial = {
        "M_plus": mass_constant(sp_p, tol=tol_radial),
        "M_minus": mass_constant(sp_m, tol=tol_radial),
        "kappa2_plus": energy_mean(sp_p, tol=tol_radial),
        "kappa2_minus": energy_mean(sp_m, tol=tol_radial),
    }
    k1_den_radial = (radial_moment(sp_p, power=4, tol=tol_radial)
                     + radial_moment(sp_m, power=4, tol=tol_radial)) / 3.0
    radial["kappa1"] = k1_den_radial ** -0.5
    k3_terms = 0.0
    for s, k2 in ((sp_p, radial["kappa2_plus"]), (sp_m, radial["kappa2_minus"])):
        k3_terms += (radial_moment(s, power=2, energy_power=2, tol=tol_radial)
                     - 2.0 * k2 * radial_moment(s, power=2, energy_power=1,
                                                tol=tol_radial)
                     + k2 * k2 * radial_moment(s, power=2, tol=tol_radial))
    radial["kappa3"] = k3_terms ** -0.5

    return ProjectionBasis(grid=grid, pair=pair, kappa1=kappa1,
                           kappa2_plus=kappa2_plus, kappa2_minus=kappa2_minus,
                           kappa3=kappa3, M_plus=M_plus, M_minus=M_minus,
                           chi=chi, radial_reference=radial)


def project(f: DistributionVector, basis: ProjectionBasis):
    """Macroscopic projection: returns (Pf, (a_plus, a_minus, b, c))."""
    coeffs = [f.inner(c) for c in basis.chi]
    pf_plus = np.zeros_like(f.values_plus)
    pf_minus = np.zeros_like(f.values_minus)
    for m, c in zip(coeffs, basis.chi):
        pf_plus += m * c.values_plus
        pf_minus += m * c.values_minus
    moments = (coeffs[0], coeffs[1], np.array(coeffs[2:5]), coeffs[5])
    return DistributionVector(f.grid, pf_plus, pf_minus), moments


def microscopic_part(f: DistributionVector, basis: ProjectionBasis):
    pf, _ = project(f, basis)
    return DistributionVector(f.grid, f.values_plus - pf.values_plus,
                              f.values_minus - pf.values_minus)


# ---------------------------------------------------------------------------
# operator assembly
# ---------------------------------------------------------------------------

@dataclass
class BilinearContext:
    """Grid + species + kernel caches, enough to apply the bilinear form."""

    grid: VelocityGrid
    pair: PlasmaPair = None
    clog: CoulombLog = None
    _ops_cache: dict = field(default_factory=dict, repr=False)

    #: kernel-block tensors above this size are recomputed chunkwise
    PHI_CACHE_BUDGET = 400 * 1024 ** 2

    def __post_init__(self):
        if self.pair is None:
            self.pair = PlasmaPair()
        if self.clog is None:
            self.clog = CoulombLog()

    def cached_ops(self, key, builder):
        if key not in self._ops_cache:
            self._ops_cache[key] = builder()
        return self._ops_cache[key]

    def phi_tensor(self):
        """(N, M, 3, 3) kernel blocks p-nodes x cell-centers, or None.

        Cached for repeated bilinear-form applications when it fits the
        budget; equal-species constants only (the default pair).
        """
        n = self.grid.n_nodes
        m = (self.grid.n_per_axis - 1) ** 3
        if n * m * 9 * 8 > self.PHI_CACHE_BUDGET:
            return None
        if (self.pair.plus.mass != self.pair.minus.mass
                or self.pair.plus.charge != self.pair.minus.charge):
            return None

        def build():
            return phi_blocks(self.grid.nodes, self.grid.cell_centers(),
                              self.pair.plus, self.pair.plus, self.clog)
        return self.cached_ops("phi_tensor", build)


@dataclass
class LinearizedOperator(BilinearContext):
    """Assembled discrete L = A - K with its basis and building blocks.

    ``matrix`` is the symmetrized, null-space-enforced dense (2N, 2N)
    operator; ``A_part`` the sparse per-species diffusion blocks;
    ``K_part`` the dense coupling matrix before symmetrization entered
    ``matrix``.
    """

    staggered_grid: VelocityGrid = None
    basis: ProjectionBasis = None
    A_part: list = None            # [A_plus, A_minus] sparse (N, N)
    K_part: np.ndarray = None      # dense (2N, 2N)
    matrix: np.ndarray = None      # dense symmetric (2N, 2N)
    meta: dict = field(default_factory=dict)
    _eig: tuple = field(default=None, repr=False)

    @property
    def n(self):
        return self.matrix.shape[0]

    def apply(self, f: DistributionVector) -> DistributionVector:
        return DistributionVector.from_stack(self.grid, self.matrix @ f.stack())

    def quadratic_form(self, f: DistributionVector):
        """<L f, f> with the grid weight."""
        v = f.stack()
        return float(self.grid.weights[0] * (v @ (self.matrix @ v)))

    def symmetry_defect(self):
        return float(np.linalg.norm(self.matrix - self.matrix.T, "fro")
                     / np.linalg.norm(self.matrix, "fro"))

    def eigendecomposition(self):
        """Full (cached) eigendecomposition; intended for n_per_axis <= 12."""
        if self._eig is None:
            try:
                vals, vecs = np.linalg.eigh(self.matrix)
            except np.linalg.LinAlgError as exc:
                raise NumericalFailure(f"eigendecomposition failed: {exc}")
            self._eig = (vals, vecs)
        return self._eig


def _chunks(total, size):
    for lo in range(0, total, size):
        yield lo, min(lo + size, total)


def _parallel_chunks(total, size, work, threads):
    """Run ``work(lo, hi)`` over fixed chunks, yielding results in chunk
    order regardless of the thread budget (deterministic accumulation)."""
    ranges = list(_chunks(total, size))
    if threads <= 1:
        for lo, hi in ranges:
            yield (lo, hi), work(lo, hi)
        return
    from concurrent.futures import ThreadPoolExecutor
    with ThreadPoolExecutor(max_workers=threads) as pool:
        results = pool.map(lambda r: work(*r), ranges)
        for rng, res in zip(ranges, results):
            yield rng, res


def _species_list(pair):
    return [pair.plus, pair.minus]


def sigma_field(p_nodes, q_points, q_weight, pair: PlasmaPair, sp_s,
                clog=CoulombLog(), extra_q=None, chunk=512, threads=1):
    """sigma^s(p) = sum_t int Phi_st (J_t + optional extra_t) dq at p_nodes.

    Returns (len(p_nodes), 3, 3).  ``extra_q`` optionally adds per-species
    q-profiles (e.g. sqrtJ_t f_t) to the equilibrium weight.
    """
    out = np.zeros((len(p_nodes), 3, 3))
    for t_i, sp_t in enumerate(_species_list(pair)):
        Jt = juttner_norm(sp_t) * np.exp(-sp_t.p0(q_points) / sp_t.k_bT)
        wq = q_weight * Jt
        if extra_q is not None:
            wq = wq + q_weight * extra_q[t_i]

        def work(lo, hi, wq=wq, sp_t=sp_t):
            blocks = phi_blocks(p_nodes[lo:hi], q_points, sp_s, sp_t, clog)
            return np.einsum("kcij,c->kij", blocks, wq)

        for (lo, hi), res in _parallel_chunks(len(p_nodes), chunk, work,
                                              threads):
            out[lo:hi] += res
    return out


def assemble_L(grid_p: VelocityGrid, grid_q: VelocityGrid,
               pair: PlasmaPair = PlasmaPair(), clog: CoulombLog = CoulombLog(),
               chunk=256, memory_budget=MEMORY_BUDGET_BYTES, threads=1):
    """Assemble the discrete linearized operator on the two-grid pair.

    ``grid_q`` must be the half-staggered companion of ``grid_p``; the
    kernel q-quadratures run over its interior points (the cell centers
    of ``grid_p``), so the kernel diagonal is never sampled.

    After symmetrization the six discrete invariants are projected out to
    be an exact null space (see the module docstring); the pre-projection
    invariant residuals are kept in ``meta['raw_null_residuals']`` as the
    consistency diagnostic.
    """
    if grid_q.n_per_axis != grid_p.n_per_axis or grid_q.p_max != grid_p.p_max:
        raise ConfigurationError("grid_q must match grid_p in size and cutoff")
    if tuple(grid_q.stagger_offset) != (0.5, 0.5, 0.5):
        raise ConfigurationError("grid_q must be the half-staggered companion")
    n = grid_p.n_nodes
    need = (2 * n) ** 2 * 8 * 2.5 + chunk * (grid_p.n_per_axis - 1) ** 3 * 9 * 8
    if need > memory_budget:
        raise ConfigurationError(
            f"assembly would need ~{need/1e9:.2f} GB dense storage "
            f"(budget {memory_budget/1e9:.2f} GB); 2N = {2*n}")

    basis = build_basis(grid_p, pair)
    cells = grid_p.cell_centers()
    w = grid_p.weights[0]
    species = _species_list(pair)

    node_D = [node_gradient_ops(grid_p, s) for s in species]
    cell_D = []
    for s in species:
        cx, cy, cz, cavg = cell_ops(grid_p, s)
        cell_D.append((cx, cy, cz))

    # --- diffusion part -----------------------------------------------------
    A_parts = []
    sigma0 = []
    for s_i, sp_s in enumerate(species):
        sig = sigma_field(grid_p.nodes, cells, w, pair, sp_s, clog,
                          chunk=max(chunk, 512), threads=threads)
        sigma0.append(sig)
        A = sp.csr_matrix((n, n))
        for a in range(3):
            for b in range(3):
                A = A + node_D[s_i][a].T @ sp.diags(w * sig[:, a, b]) \
                    @ node_D[s_i][b]
        A_parts.append(A.tocsr())

    # --- coupling part -------------------------------------------------------
    sqrtJ_node = [np.sqrt(juttner_norm(s)) * np.exp(-0.5 * s.p0(grid_p.nodes)
                                                    / s.k_bT) for s in species]
    sqrtJ_cell = [np.sqrt(juttner_norm(s)) * np.exp(-0.5 * s.p0(cells)
                                                    / s.k_bT) for s in species]

    same_species = (pair.plus.mass == pair.minus.mass
                    and pair.plus.charge == pair.minus.charge)

    def k_block(sp_s, s_i, sp_t, t_i):
        """D_s^T diag(w sqrtJ_s) Phi_st diag(w sqrtJ_t) Dcell_t, dense."""
        K = np.zeros((n, n))
        right = [sp.diags(w * sqrtJ_cell[t_i]) @ cell_D[t_i][b]
                 for b in range(3)]
        left = [(sp.diags(w * sqrtJ_node[s_i]) @ node_D[s_i][a]).T.tocsr()
                for a in range(3)]

        def work(lo, hi):
            blocks = phi_blocks(grid_p.nodes[lo:hi], cells, sp_s, sp_t, clog)
            parts = []
            for a in range(3):
                t_chunk = np.zeros((hi - lo, n))
                for b in range(3):
                    t_chunk += blocks[:, :, a, b] @ right[b]
                parts.append(t_chunk)
            return parts

        for (lo, hi), parts in _parallel_chunks(n, chunk, work, threads):
            for a in range(3):
                K += left[a][:, lo:hi] @ parts[a]
        return K

    if same_species:
        K0 = k_block(pair.plus, 0, pair.plus, 0)
        K_blocks = [[K0, K0], [K0, K0]]
    else:
        K_blocks = [[k_block(species[s], s, species[t], t)
                     for t in range(2)] for s in range(2)]

    # The D^T (.) D products above are quadratic-form matrices; dividing by
    # the uniform weight turns them into operator matrices (node values of
    # L f), which is what apply/eigenvalues should see.
    A_parts = [(a / w).tocsr() for a in A_parts]
    K_part = np.block(K_blocks) / w
    L = np.zeros((2 * n, 2 * n))
    L[:n, :n] = A_parts[0].toarray()
    L[n:, n:] = A_parts[1].toarray()
    L -= K_part
    L = 0.5 * (L + L.T)

    # Consistency diagnostic before null-space enforcement: residuals of the
    # six invariants under the raw symmetrized operator, relative to a cheap
    # operator-norm estimate.
    X = basis.stack_matrix()
    LX = L @ X
    norm_est = float(np.max(np.sum(np.abs(L), axis=1)))
    raw_residuals = [float(np.sqrt(w * np.sum(LX[:, i] ** 2))
                           / (norm_est * np.sqrt(w * np.sum(X[:, i] ** 2))))
                     for i in range(6)]

    # Enforce the invariant span as an exact null space: L <- (1-P) L (1-P)
    # with P the discrete orthogonal projector onto span{chi}.  This is the
    # structure-preserving completion of the assembly: the continuum
    # operator satisfies (1-P) L (1-P) = L identically, and the projected
    # operator keeps symmetry, consistency order, and the deflated spectrum
    # while making the conservation laws of the relaxation dynamics exact.
    Xo = np.sqrt(w) * X                       # l2-orthonormal columns
    LXo = L @ Xo
    core = Xo.T @ LXo
    L -= Xo @ LXo.T
    L -= LXo @ Xo.T
    L += Xo @ core @ Xo.T
    L = 0.5 * (L + L.T)

    meta = {
        "n_per_axis": grid_p.n_per_axis,
        "p_max": grid_p.p_max,
        "n_unknowns": 2 * n,
        "kernel_constant": KERNEL_CONSTANT * clog.value,
        "raw_null_residuals": raw_residuals,
        "null_space_enforced": True,
        "operator_norm_estimate": norm_est,
    }
    return LinearizedOperator(grid=grid_p, staggered_grid=grid_q, pair=pair,
                              clog=clog, basis=basis, A_part=A_parts,
                              K_part=K_part, matrix=L, meta=meta)


# ---------------------------------------------------------------------------
# spectral diagnostics
# ---------------------------------------------------------------------------

def coercivity_gap(op: LinearizedOperator, n_head=12, dense_limit=4200):
    """Smallest eigenvalues and the deflated spectral gap.

    Returns ``(delta_hat, spectrum_head)`` where ``spectrum_head`` holds
    the ``n_head`` smallest eigenvalues of the symmetrized operator and
    ``delta_hat`` is the smallest eigenvalue after shifting the discrete
    invariant span far up (deflation), i.e. the gap on the orthogonal
    complement of span{chi_1..chi_6}.
    """
    L = op.matrix
    dim = L.shape[0]
    w = op.grid.weights[0]
    X = np.sqrt(w) * op.basis.stack_matrix()          # l2-orthonormal columns
    shift = 10.0 * float(np.max(np.abs(np.diag(L)))) + 1.0

    try:
        if dim <= dense_limit:
            vals = op.eigendecomposition()[0]
            head = vals[:n_head]
            Ldefl = L + shift * (X @ X.T)
            dvals = np.linalg.eigvalsh(Ldefl)
            delta_hat = float(dvals[0])
        else:
            head = sla.eigh(L, subset_by_index=(0, n_head - 1),
                            eigvals_only=True, driver="evr")
            Ldefl = L + shift * (X @ X.T)
            delta_hat = float(sla.eigh(Ldefl, subset_by_index=(0, 0),
                                       eigvals_only=True, driver="evr",
                                       overwrite_a=True)[0])
            del Ldefl
    except (np.linalg.LinAlgError, sla.LinAlgError) as exc:
        raise NumericalFailure(f"eigensolver did not converge: {exc}")
    return delta_hat, [float(v) for v in head]


def null_space_residuals(op: LinearizedOperator):
    """||L chi_i|| / (||L|| ||chi_i||) for the six invariants (||.|| spectral-ish).

    The operator norm is estimated by the largest row sum, cheap and
    within a dimension factor; the ratio is used against TOL_NULL.
    """
    norm_L = float(np.max(np.sum(np.abs(op.matrix), axis=1)))
    out = []
    for c in op.basis.chi:
        r = op.apply(c)
        out.append(r.norm() / (norm_L * c.norm()))
    return out, norm_L


# ---------------------------------------------------------------------------
# bilinear collision form
# ---------------------------------------------------------------------------

def apply_gamma(g: DistributionVector, h: DistributionVector,
                op: LinearizedOperator, chunk=512) -> DistributionVector:
    """The discrete bilinear collision form Gamma(g, h).

    Assembled in the same adjoint divergence shape as L; q-derivatives of
    h are realized by the staggered cell-center differences of the
    M-weighted profile (not by the kernel-derivative identity).  Bilinear
    in (g, h) exactly.
    """
    if g.grid.n_nodes != op.grid.n_nodes:
        raise ConfigurationError("g lives on a different grid")
    grid = op.grid
    cells = grid.cell_centers()
    w = grid.weights[0]
    species = _species_list(op.pair)
    n = grid.n_nodes

    cavg = op.cached_ops("cell_avg", lambda: cell_ops(grid)[3])
    plain_cd = op.cached_ops("cell_plain", lambda: cell_ops(grid, None)[:3])
    plain_nd = op.cached_ops("node_plain", lambda: node_gradient_ops(grid, None))

    # q-side profile zbar = sum_t sqrt(c_t) M_t h_t at cells, and its
    # cell-center gradient.
    z_nodes = np.zeros(n)
    for t_i, sp_t in enumerate(species):
        c_t = juttner_norm(sp_t)
        m_t = np.exp(-0.5 * sp_t.p0(grid.nodes) / sp_t.k_bT)
        h_t = (h.values_plus, h.values_minus)[t_i]
        z_nodes += np.sqrt(c_t) * m_t * h_t
    z_cell = cavg @ z_nodes
    dz_cell = [plain_cd[b] @ z_nodes for b in range(3)]

    phi_all = op.phi_tensor()
    out = []
    for s_i, sp_s in enumerate(species):
        m_s = np.exp(-0.5 * sp_s.p0(grid.nodes) / sp_s.k_bT)
        g_s = (g.values_plus, g.values_minus)[s_i]
        u = m_s * g_s
        du = np.column_stack([plain_nd[a] @ u for a in range(3)])
        # X_a(p) = sum_b du_b(p) V_ab(p) - u(p) W_a(p)
        if phi_all is not None:
            V = np.einsum("kcab,c->kab", phi_all, w * z_cell)
            W = np.einsum("kcab,cb->ka", phi_all,
                          w * np.column_stack(dz_cell))
        else:
            V = np.zeros((n, 3, 3))
            W = np.zeros((n, 3))
            for lo, hi in _chunks(n, chunk):
                blocks = phi_blocks(grid.nodes[lo:hi], cells, sp_s, sp_s,
                                    op.clog)
                V[lo:hi] = np.einsum("kcab,c->kab", blocks, w * z_cell)
                W[lo:hi] = np.einsum("kcab,cb->ka", blocks,
                                     w * np.column_stack(dz_cell))
        X = np.einsum("kab,kb->ka", V, du) - u[:, None] * W
        # adjoint divergence with the M-weighted derivative of species s
        d_ops = op.cached_ops(("node_D", s_i),
                              lambda s=sp_s: node_gradient_ops(grid, s))
        gamma_s = np.zeros(n)
        inv_m = 1.0 / m_s
        for a in range(3):
            gamma_s -= d_ops[a].T @ (inv_m * X[:, a])
        out.append(np.sqrt(juttner_norm(sp_s)) * gamma_s)
    return DistributionVector(grid, out[0], out[1])


# ---------------------------------------------------------------------------
# coefficient fields
# ---------------------------------------------------------------------------

@dataclass
class CoefficientFields:
    sigma_f: np.ndarray     # (N, 3, 3) per-node matrices (species +)
    a_f: np.ndarray         # (N, 3)
    C_f: np.ndarray         # (N,)
    sigma_min_eig: float


def coeff_fields(f: DistributionVector, grid: VelocityGrid,
                 pair: PlasmaPair = PlasmaPair(), clog=CoulombLog(),
                 chunk=512):
    """Per-node sigma_f, a_f, C_f for the positive species.

    sigma_f(p) = sum_t int Phi (J_t + sqrtJ_t f_t) dq;
    a_f^i(p)   = -sum_t int Phi^{ij} sqrtJ_t ((p_j / 2 p0) f_t + d_qj f_t) dq;
    C_f(p)     = -(1/2) sigma^{ij} (p_i p_j / p0^2) + d_pi(sigma^{ij} p_j/p0)
                 - sum_t int (d_pi - p_i/(2 p0)) Phi^{ij} sqrtJ_t d_qj f_t dq,
    with the outer p-derivatives realized by node differencing.
    """
    cells = grid.cell_centers()
    w = grid.weights[0]
    species = _species_list(pair)
    sp_s = pair.plus
    n = grid.n_nodes
    _, _, _, cavg = cell_ops(grid)
    plain_cd = cell_ops(grid, None)[:3]
    plain_nd = node_gradient_ops(grid, None)

    extra = []
    f_by_species = (f.values_plus, f.values_minus)
    for t_i, sp_t in enumerate(species):
        sqrtJ_t = np.sqrt(juttner_norm(sp_t)) \
            * np.exp(-0.5 * sp_t.p0(cells) / sp_t.k_bT)
        extra.append(sqrtJ_t * (cavg @ f_by_species[t_i]))
    sig = sigma_field(grid.nodes, cells, w, pair, sp_s, clog,
                      extra_q=extra, chunk=chunk)

    p0 = sp_s.p0(grid.nodes)
    phat = grid.nodes / p0[:, None]

    a_f = np.zeros((n, 3))
    T = np.zeros((n, 3))     # int Phi^{ij} sqrtJ_t d_qj f_t dq, indexed by i
    for t_i, sp_t in enumerate(species):
        sqrtJ_t = np.sqrt(juttner_norm(sp_t)) \
            * np.exp(-0.5 * sp_t.p0(cells) / sp_t.k_bT)
        f_cell = cavg @ f_by_species[t_i]
        df_cell = [plain_cd[b] @ f_by_species[t_i] for b in range(3)]
        for lo, hi in _chunks(n, chunk):
            blocks = phi_blocks(grid.nodes[lo:hi], cells, sp_s, sp_t, clog)
            Vt = np.einsum("kcij,c->kij", blocks, w * sqrtJ_t * f_cell)
            a_f[lo:hi] -= 0.5 * np.einsum("kij,kj->ki", Vt, phat[lo:hi])
            for b in range(3):
                contrib = np.einsum("kci,c->ki", blocks[:, :, :, b],
                                    w * sqrtJ_t * df_cell[b])
                a_f[lo:hi] -= contrib
                T[lo:hi] += contrib

    # C_f: local sigma terms plus the derivative of the T-field.
    sig_phat = np.einsum("kij,kj->ki", sig, phat)
    c_f = -0.5 * np.einsum("ki,ki->k", sig_phat, phat)
    div_term = np.zeros(n)
    for i in range(3):
        div_term += plain_nd[i] @ sig_phat[:, i]
    c_f += div_term
    dT = np.zeros(n)
    for i in range(3):
        dT += plain_nd[i] @ T[:, i]
    c_f -= dT - 0.5 * np.einsum("ki,ki->k", phat, T)

    eigs = np.linalg.eigvalsh(sig)
    return CoefficientFields(sigma_f=sig, a_f=a_f, C_f=c_f,
                             sigma_min_eig=float(eigs.min()))


# ---------------------------------------------------------------------------
# moments of the collision dynamics
# ---------------------------------------------------------------------------

def charge_density(f: DistributionVector, pair: PlasmaPair = PlasmaPair()):
    """rho = int (e+ f+ sqrtJ+ - e- f- sqrtJ-) dp."""
    grid = f.grid
    out = 0.0
    for sgn, sp_s, vals in ((+1, pair.plus, f.values_plus),
                            (-1, pair.minus, f.values_minus)):
        sqrtJ = np.sqrt(juttner_norm(sp_s)) \
            * np.exp(-0.5 * sp_s.p0(grid.nodes) / sp_s.k_bT)
        out += sgn * sp_s.charge * quad(grid, vals * sqrtJ)
    return out


def current_density(f: DistributionVector, pair: PlasmaPair = PlasmaPair()):
    """j = int (p/p0) (e+ f+ sqrtJ+ - e- f- sqrtJ-) dp."""
    grid = f.grid
    out = np.zeros(3)
    for sgn, sp_s, vals in ((+1, pair.plus, f.values_plus),
                            (-1, pair.minus, f.values_minus)):
        sqrtJ = np.sqrt(juttner_norm(sp_s)) \
            * np.exp(-0.5 * sp_s.p0(grid.nodes) / sp_s.k_bT)
        phat = grid.nodes / sp_s.p0(grid.nodes)[:, None]
        for i in range(3):
            out[i] += sgn * sp_s.charge * quad(grid, vals * sqrtJ * phat[:, i])
    return out


# ---------------------------------------------------------------------------
# kernel derivative identity on the grid
# ---------------------------------------------------------------------------

def derivative_identity_check(n_per_axis=16, p_max=6.0, chunk=512):
    """Grid check of the kernel derivative identity (unit constants).

    For a smooth rapidly decaying g, compares

      LHS  = d_pi int Phi^{ij} sqrtJ(q) d_qj g(q) dq
      RHS  = d_pi int Phi^{ij} sqrtJ(q) (q_j / 2 q0) g(q) dq
             - c_s int (P.Q/(p0 q0)) ((P.Q)^2-1)^{-1/2} sqrtJ g dq
             - c_l(p) sqrtJ(p) g(p)

    with the derived coefficients c_s = identity_smooth_coefficient() and
    c_l = identity_local_coefficient() consistent with this kernel
    normalization.  Outer p-derivatives use the node-averaged face
    differences; q-integrals run over the staggered cell centers.
    Returns a dict with the J^{1/4}-weighted relative error.
    """
    sp_s = SpeciesParams()
    grid = build_grid(n_per_axis, p_max)
    cells = grid.cell_centers()
    w = grid.weights[0]
    n = grid.n_nodes

    g_cell = np.exp(-np.sum(cells * cells, axis=1))
    dg_cell = -2.0 * cells * g_cell[:, None]
    sqrtJ_cell = np.sqrt(juttner_norm(sp_s)) \
        * np.exp(-0.5 * sp_s.p0(cells) / sp_s.k_bT)
    q0 = sp_s.p0(cells)

    U = np.zeros((n, 3))     # int Phi^{ij} sqrtJ d_qj g dq
    V = np.zeros((n, 3))     # int Phi^{ij} sqrtJ (q_j/2q0) g dq
    S = np.zeros(n)          # smooth-term integral
    for lo, hi in _chunks(n, chunk):
        blocks = phi_blocks(grid.nodes[lo:hi], cells, sp_s, sp_s)
        for b in range(3):
            U[lo:hi] += np.einsum("kci,c->ki", blocks[:, :, :, b],
                                  w * sqrtJ_cell * dg_cell[:, b])
            V[lo:hi] += np.einsum("kci,c->ki", blocks[:, :, :, b],
                                  w * sqrtJ_cell * cells[:, b]
                                  / (2.0 * q0) * g_cell)
        S[lo:hi] = _smooth_identity_kernel(grid.nodes[lo:hi], cells) \
            @ (w * sqrtJ_cell * g_cell)

    plain_nd = node_gradient_ops(grid, None)
    lhs = np.zeros(n)
    rhs = np.zeros(n)
    for i in range(3):
        lhs += plain_nd[i] @ U[:, i]
        rhs += plain_nd[i] @ V[:, i]
    g_node = np.exp(-np.sum(grid.nodes ** 2, axis=1))
    sqrtJ_node = np.sqrt(juttner_norm(sp_s)) \
        * np.exp(-0.5 * sp_s.p0(grid.nodes) / sp_s.k_bT)
    c_local = np.array([identity_local_coefficient(p) for p in grid.nodes])
    rhs -= identity_smooth_coefficient() * S
    rhs -= c_local * sqrtJ_node * g_node

    weight = sqrtJ_node ** 0.5
    num = np.sqrt(quad(grid, weight * (lhs - rhs) ** 2))
    den = np.sqrt(quad(grid, weight * rhs ** 2))
    return {"rel_error": float(num / den),
            "lhs_norm": float(np.sqrt(quad(grid, weight * lhs ** 2))),
            "rhs_norm": float(den)}


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

def export_operator(op: LinearizedOperator, prefix, n_head=12):
    """Dump node list (CSV), operator matrix (npy), eigenvalue head (CSV),
    and a JSON sidecar describing the layout.  Returns the file paths."""
    import json
    from pathlib import Path

    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    nodes_path = prefix.with_suffix(".nodes.csv")
    np.savetxt(nodes_path, op.grid.nodes, delimiter=",",
               header="px,py,pz", comments="")
    mat_path = prefix.with_suffix(".operator.npy")
    np.save(mat_path, op.matrix)
    delta_hat, head = coercivity_gap(op, n_head=n_head)
    eig_path = prefix.with_suffix(".spectrum.csv")
    with open(eig_path, "w") as fh:
        fh.write("index,eigenvalue\n")
        for i, v in enumerate(head):
            fh.write(f"{i},{v!r}\n")
    sidecar = {
        "format": "rvmlkit-operator-v1",
        "n_per_axis": op.grid.n_per_axis,
        "p_max": op.grid.p_max,
        "n_unknowns": op.n,
        "ordering": "species-major (plus block then minus block), nodes "
                    "lexicographic in (px, py, pz)",
        "delta_hat": delta_hat,
        "files": {"nodes": nodes_path.name, "operator": mat_path.name,
                  "spectrum": eig_path.name},
    }
    sidecar_path = prefix.with_suffix(".json")
    with open(sidecar_path, "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
    return {"nodes": str(nodes_path), "operator": str(mat_path),
            "spectrum": str(eig_path), "sidecar": str(sidecar_path)}
