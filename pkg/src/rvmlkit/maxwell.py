"""Staggered-grid cavity electrodynamics with perfect-conductor walls.

Field layout (edge/face staggering on an nx x ny x nz cell box):

    Ex[i+1/2, j, k]   Ey[i, j+1/2, k]   Ez[i, j, k+1/2]
    Bx[i, j+1/2, k+1/2]   By[i+1/2, j, k+1/2]   Bz[i+1/2, j+1/2, k]

so Ex has shape (nx, ny+1, nz+1), Bx has shape (nx+1, ny, nz), etc.
Charge lives at nodes (nx+1, ny+1, nz+1); current sits at the E locations.
Units: speed of light 1, Gaussian-like 4*pi source convention:

    dE/dt = curl B - 4 pi j,   dB/dt = -curl E,
    div E = 4 pi rho,          div B = 0.

One step is the symmetric half-B / full-E / half-B splitting, so stored E
and B are synchronized at integer times; the pair (E^n, B^{n +/- 1/2})
seen by the underlying leapfrog conserves the quadratic invariant
returned by ``leapfrog_energy`` to rounding when sources vanish.

Perfect-conductor walls: tangential E and normal B on the boundary are
written to zero after every substep (bit-exact, not just preserved).
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

FOUR_PI = 4.0 * np.pi


def _zeros_e(n):
    nx, ny, nz = n
    return [np.zeros((nx, ny + 1, nz + 1)),
            np.zeros((nx + 1, ny, nz + 1)),
            np.zeros((nx + 1, ny + 1, nz))]


def _zeros_b(n):
    nx, ny, nz = n
    return [np.zeros((nx + 1, ny, nz)),
            np.zeros((nx, ny + 1, nz)),
            np.zeros((nx, ny, nz + 1))]


@dataclass
class EMFieldState:
    """Staggered E/B arrays plus sources on a rectangular PEC cavity."""

    shape: tuple                 # cells per axis (nx, ny, nz)
    lengths: tuple               # box side lengths (Lx, Ly, Lz)
    dt: float
    t: float = 0.0
    cfl_factor: float = 0.9
    E: list = None               # [Ex, Ey, Ez]
    B: list = None               # [Bx, By, Bz]
    rho: np.ndarray = None       # nodes (nx+1, ny+1, nz+1)
    j: list = None               # current at E locations

    def __post_init__(self):
        nx, ny, nz = self.shape
        if min(self.shape) < 2:
            raise ConfigurationError("need at least 2 cells per axis")
        if self.cfl_factor > 1.0:
            raise ConfigurationError("cfl_factor must be <= 1")
        if self.E is None:
            self.E = _zeros_e(self.shape)
        if self.B is None:
            self.B = _zeros_b(self.shape)
        if self.rho is None:
            self.rho = np.zeros((nx + 1, ny + 1, nz + 1))
        if self.j is None:
            self.j = _zeros_e(self.shape)
        self.check_cfl()

    @property
    def spacing(self):
        return tuple(L / n for L, n in zip(self.lengths, self.shape))

    def check_cfl(self):
        limit = self.cfl_factor * min(self.spacing) / np.sqrt(3.0)
        if self.dt > limit + 1e-15:
            raise ConfigurationError(
                f"dt = {self.dt} violates the CFL bound {limit:.6g}")

    def cell_volume(self):
        dx, dy, dz = self.spacing
        return dx * dy * dz

    def copy(self):
        return EMFieldState(shape=self.shape, lengths=self.lengths,
                            dt=self.dt, t=self.t, cfl_factor=self.cfl_factor,
                            E=[e.copy() for e in self.E],
                            B=[b.copy() for b in self.B],
                            rho=self.rho.copy(),
                            j=[c.copy() for c in self.j])


def enforce_pec(state: EMFieldState):
    """Zero tangential E and normal B on all six walls, in place."""
    Ex, Ey, Ez = state.E
    Bx, By, Bz = state.B
    # x = 0, Lx walls: tangential E are Ey, Ez; normal B is Bx.
    Ey[0, :, :] = 0.0
    Ey[-1, :, :] = 0.0
    Ez[0, :, :] = 0.0
    Ez[-1, :, :] = 0.0
    Bx[0, :, :] = 0.0
    Bx[-1, :, :] = 0.0
    # y walls
    Ex[:, 0, :] = 0.0
    Ex[:, -1, :] = 0.0
    Ez[:, 0, :] = 0.0
    Ez[:, -1, :] = 0.0
    By[:, 0, :] = 0.0
    By[:, -1, :] = 0.0
    # z walls
    Ex[:, :, 0] = 0.0
    Ex[:, :, -1] = 0.0
    Ey[:, :, 0] = 0.0
    Ey[:, :, -1] = 0.0
    Bz[:, :, 0] = 0.0
    Bz[:, :, -1] = 0.0


def curl_e(state):
    """curl E sampled at the B locations."""
    Ex, Ey, Ez = state.E
    dx, dy, dz = state.spacing
    cx = (Ez[:, 1:, :] - Ez[:, :-1, :]) / dy - (Ey[:, :, 1:] - Ey[:, :, :-1]) / dz
    cy = (Ex[:, :, 1:] - Ex[:, :, :-1]) / dz - (Ez[1:, :, :] - Ez[:-1, :, :]) / dx
    cz = (Ey[1:, :, :] - Ey[:-1, :, :]) / dx - (Ex[:, 1:, :] - Ex[:, :-1, :]) / dy
    return [cx, cy, cz]


def curl_b(state):
    """curl B sampled at the interior E locations (zero-padded boundary)."""
    Bx, By, Bz = state.B
    dx, dy, dz = state.spacing
    out = _zeros_e(state.shape)
    out[0][:, 1:-1, 1:-1] = (Bz[:, 1:, 1:-1] - Bz[:, :-1, 1:-1]) / dy \
        - (By[:, 1:-1, 1:] - By[:, 1:-1, :-1]) / dz
    out[1][1:-1, :, 1:-1] = (Bx[1:-1, :, 1:] - Bx[1:-1, :, :-1]) / dz \
        - (Bz[1:, :, 1:-1] - Bz[:-1, :, 1:-1]) / dx
    out[2][1:-1, 1:-1, :] = (By[1:, 1:-1, :] - By[:-1, 1:-1, :]) / dx \
        - (Bx[1:-1, 1:, :] - Bx[1:-1, :-1, :]) / dy
    return out


def step(state: EMFieldState, j_source=None):
    """Advance one dt with the half-B / full-E / half-B splitting.

    ``j_source``: optional callable t -> current arrays at E locations,
    evaluated at the half step (t + dt/2); defaults to ``state.j``.
    Returns a new EMFieldState at t + dt with the PEC invariant enforced.
    """
    state.check_cfl()
    new = state.copy()
    dt = new.dt

    ce = curl_e(new)
    for a in range(3):
        new.B[a] -= 0.5 * dt * ce[a]
    enforce_pec(new)

    if j_source is not None:
        new.j = [np.array(c, dtype=float) for c in j_source(new.t + 0.5 * dt)]
    cb = curl_b(new)
    for a in range(3):
        new.E[a] += dt * (cb[a] - FOUR_PI * new.j[a])
    enforce_pec(new)

    ce = curl_e(new)
    for a in range(3):
        new.B[a] -= 0.5 * dt * ce[a]
    enforce_pec(new)

    new.t = state.t + dt
    return new


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

def _e_sq_sum(E):
    return sum(float(np.sum(c * c)) for c in E)


def field_energy(state):
    """(1/8 pi) int (|E|^2 + |B|^2) dx with the staggered sample points."""
    dv = state.cell_volume()
    return (_e_sq_sum(state.E) + _e_sq_sum(state.B)) * dv / (8.0 * np.pi)


def leapfrog_energy(state):
    """The step-invariant quadratic form of the source-free update.

    Equals (1/8 pi) int |E|^2 + B(-dt/2).B(+dt/2) dx where the two
    half-step B fields are reconstructed from the synchronized state;
    conserved to rounding by ``step`` when j = 0.
    """
    dv = state.cell_volume()
    ce = curl_e(state)
    total = _e_sq_sum(state.E)
    for a in range(3):
        bm = state.B[a] - 0.5 * state.dt * ce[a]
        bp = state.B[a] + 0.5 * state.dt * ce[a]
        total += float(np.sum(bm * bp))
    return total * dv / (8.0 * np.pi)


def _avg_e_to_centers(E):
    Ex, Ey, Ez = E
    cx = 0.25 * (Ex[:, 1:, 1:] + Ex[:, :-1, 1:] + Ex[:, 1:, :-1] + Ex[:, :-1, :-1])
    cy = 0.25 * (Ey[1:, :, 1:] + Ey[:-1, :, 1:] + Ey[1:, :, :-1] + Ey[:-1, :, :-1])
    cz = 0.25 * (Ez[1:, 1:, :] + Ez[:-1, 1:, :] + Ez[1:, :-1, :] + Ez[:-1, :-1, :])
    return cx, cy, cz


def _avg_b_to_centers(B):
    Bx, By, Bz = B
    cx = 0.5 * (Bx[1:, :, :] + Bx[:-1, :, :])
    cy = 0.5 * (By[:, 1:, :] + By[:, :-1, :])
    cz = 0.5 * (Bz[:, :, 1:] + Bz[:, :, :-1])
    return cx, cy, cz


def field_momentum(state):
    """(1/4 pi) int E x B dx, fields averaged to cell centers."""
    ex, ey, ez = _avg_e_to_centers(state.E)
    bx, by, bz = _avg_b_to_centers(state.B)
    dv = state.cell_volume()
    px = float(np.sum(ey * bz - ez * by)) * dv / FOUR_PI
    py = float(np.sum(ez * bx - ex * bz)) * dv / FOUR_PI
    pz = float(np.sum(ex * by - ey * bx)) * dv / FOUR_PI
    return np.array([px, py, pz])


def field_angular_momentum(state, axis=2, origin=None):
    """(1/4 pi) int (x - x0) x (E x B) . e_axis dx at cell centers."""
    if origin is None:
        origin = tuple(L / 2 for L in state.lengths)
    ex, ey, ez = _avg_e_to_centers(state.E)
    bx, by, bz = _avg_b_to_centers(state.B)
    gx = ey * bz - ez * by
    gy = ez * bx - ex * bz
    gz = ex * by - ey * bx
    dx, dy, dz = state.spacing
    nx, ny, nz = state.shape
    xc = (np.arange(nx) + 0.5) * dx - origin[0]
    yc = (np.arange(ny) + 0.5) * dy - origin[1]
    zc = (np.arange(nz) + 0.5) * dz - origin[2]
    X, Y, Z = np.meshgrid(xc, yc, zc, indexing="ij")
    comps = [Y * gz - Z * gy, Z * gx - X * gz, X * gy - Y * gx]
    return float(np.sum(comps[axis])) * state.cell_volume() / FOUR_PI


def div_e(state):
    """Discrete div E at nodes (interior nodes carry the 7-point stencil)."""
    Ex, Ey, Ez = state.E
    dx, dy, dz = state.spacing
    nx, ny, nz = state.shape
    out = np.zeros((nx + 1, ny + 1, nz + 1))
    out[1:-1, :, :] += (Ex[1:, :, :] - Ex[:-1, :, :]) / dx
    out[:, 1:-1, :] += (Ey[:, 1:, :] - Ey[:, :-1, :]) / dy
    out[:, :, 1:-1] += (Ez[:, :, 1:] - Ez[:, :, :-1]) / dz
    return out


def gauss_residual(state):
    """max |div E - 4 pi rho| over interior nodes."""
    res = div_e(state) - FOUR_PI * state.rho
    return float(np.max(np.abs(res[1:-1, 1:-1, 1:-1])))


def div_b(state):
    Bx, By, Bz = state.B
    dx, dy, dz = state.spacing
    return (Bx[1:, :, :] - Bx[:-1, :, :]) / dx \
        + (By[:, 1:, :] - By[:, :-1, :]) / dy \
        + (Bz[:, :, 1:] - Bz[:, :, :-1]) / dz


def divb_residual(state):
    return float(np.max(np.abs(div_b(state))))


def advance_charge(state, new_j):
    """Discrete continuity update rho <- rho - dt * div j.

    Applying this alongside ``step`` with the same current keeps
    ``gauss_residual`` constant to rounding (the staggered curl update
    changes div E by exactly -4 pi dt div j).
    """
    dx, dy, dz = state.spacing
    jx, jy, jz = new_j
    div = np.zeros_like(state.rho)
    div[1:-1, :, :] += (jx[1:, :, :] - jx[:-1, :, :]) / dx
    div[:, 1:-1, :] += (jy[:, 1:, :] - jy[:, :-1, :]) / dy
    div[:, :, 1:-1] += (jz[:, :, 1:] - jz[:, :, :-1]) / dz
    state.rho = state.rho - state.dt * div


def diagnostics_row(state, axis=2):
    """One row of the standard diagnostics time series."""
    p = field_momentum(state)
    return {
        "t": state.t,
        "energy": field_energy(state),
        "px": p[0], "py": p[1], "pz": p[2],
        "Lz": field_angular_momentum(state, axis=axis),
        "gauss_res": gauss_residual(state),
        "divB_res": divb_residual(state),
    }


# ---------------------------------------------------------------------------
# initializers
# ---------------------------------------------------------------------------

def make_cavity(shape, lengths, dt=None, cfl_factor=0.5):
    if dt is None:
        spacing = [L / n for L, n in zip(lengths, shape)]
        dt = cfl_factor * min(spacing) / np.sqrt(3.0)
    return EMFieldState(shape=tuple(shape), lengths=tuple(lengths), dt=dt,
                        cfl_factor=max(cfl_factor, 0.999999))


def _axes_for(component, shape, lengths, kind):
    """Coordinate arrays of the sample points of one field component."""
    nx, ny, nz = shape
    dx, dy, dz = (L / n for L, n in zip(lengths, shape))
    node = [np.arange(nx + 1) * dx, np.arange(ny + 1) * dy,
            np.arange(nz + 1) * dz]
    center = [(np.arange(nx) + 0.5) * dx, (np.arange(ny) + 0.5) * dy,
              (np.arange(nz) + 0.5) * dz]
    axes = []
    for a in range(3):
        stag = (a == component) if kind == "E" else (a != component)
        axes.append(center[a] if stag else node[a])
    return np.meshgrid(*axes, indexing="ij")


def sample_fields(state, e_funcs=None, b_funcs=None, t=None):
    """Fill E/B by sampling callables f(x, y, z, t) at their staggered points."""
    if t is None:
        t = state.t
    if e_funcs is not None:
        for a in range(3):
            X, Y, Z = _axes_for(a, state.shape, state.lengths, "E")
            state.E[a] = e_funcs[a](X, Y, Z, t)
    if b_funcs is not None:
        for a in range(3):
            X, Y, Z = _axes_for(a, state.shape, state.lengths, "B")
            state.B[a] = b_funcs[a](X, Y, Z, t)
    enforce_pec(state)


def standing_mode(state, amplitude=1.0):
    """Load the lowest TM (E_z) cavity eigenmode, returning its frequency.

    E_z = A sin(pi x/Lx) sin(pi y/Ly) cos(w t),
    B_x/B_y from Faraday's law; w = pi sqrt(1/Lx^2 + 1/Ly^2).
    The fields are sampled at t = state.t (B is exact at the same instant;
    the stepper's internal half-shift is part of its O(dt^2) error).
    """
    Lx, Ly, _ = state.lengths
    kx, ky = np.pi / Lx, np.pi / Ly
    w = np.sqrt(kx * kx + ky * ky)

    def ez(X, Y, Z, t):
        return amplitude * np.sin(kx * X) * np.sin(ky * Y) * np.cos(w * t)

    def bx(X, Y, Z, t):
        return -amplitude * ky / w * np.sin(kx * X) * np.cos(ky * Y) \
            * np.sin(w * t)

    def by(X, Y, Z, t):
        return amplitude * kx / w * np.cos(kx * X) * np.sin(ky * Y) \
            * np.sin(w * t)

    zero = lambda X, Y, Z, t: np.zeros_like(X)
    sample_fields(state, e_funcs=[zero, zero, ez], b_funcs=[bx, by, zero])
    return w


def potential_initial_data(state, seed=0):
    """Sources-from-a-potential initial state: E = -grad phi, rho = -lap phi/4pi.

    Both derivatives are the grid's own finite differences, so the Gauss
    residual of the result is at rounding level by construction.
    """
    rng = np.random.default_rng(seed)
    nx, ny, nz = state.shape
    dx, dy, dz = state.spacing
    # random smooth potential, zero on the boundary
    kx = np.pi / state.lengths[0]
    ky = np.pi / state.lengths[1]
    kz = np.pi / state.lengths[2]
    xs = np.arange(nx + 1) * dx
    ys = np.arange(ny + 1) * dy
    zs = np.arange(nz + 1) * dz
    X, Y, Z = np.meshgrid(xs, ys, zs, indexing="ij")
    phi = np.zeros((nx + 1, ny + 1, nz + 1))
    for (mx, my, mz) in [(1, 1, 1), (2, 1, 1), (1, 2, 2)]:
        amp = rng.normal()
        phi += amp * np.sin(mx * kx * X) * np.sin(my * ky * Y) \
            * np.sin(mz * kz * Z)
    state.E[0] = -(phi[1:, :, :] - phi[:-1, :, :]) / dx
    state.E[1] = -(phi[:, 1:, :] - phi[:, :-1, :]) / dy
    state.E[2] = -(phi[:, :, 1:] - phi[:, :, :-1]) / dz
    for a in range(3):
        state.B[a][:] = 0.0
    enforce_pec(state)
    state.rho = div_e(state) / FOUR_PI
    return state


# ---------------------------------------------------------------------------
# momentum identity (method of manufactured solutions, collocated)
# ---------------------------------------------------------------------------

class ManufacturedField:
    """Smooth potential-generated fields A = cos(w t) V(x) on a periodic box.

    E = -dA/dt, B = curl A; sources are defined by the field equations,
    so the momentum balance holds analytically.  ``V`` is a fixed trig
    vector field with hand-coded curl and curl-curl.
    """

    def __init__(self, lengths=(1.0, 1.0, 1.0), omega=2.0, amplitude=1.0):
        self.L = lengths
        self.w = omega
        self.a = amplitude
        self.k = tuple(2.0 * np.pi / L for L in lengths)

    # V and its exact derivatives -----------------------------------------
    def _v(self, X, Y, Z):
        kx, ky, kz = self.k
        a = self.a
        return [a * np.sin(ky * Y) * np.cos(kz * Z),
                a * np.sin(kz * Z) * np.cos(kx * X),
                a * np.sin(kx * X) * np.cos(ky * Y)]

    def _curl_v(self, X, Y, Z):
        kx, ky, kz = self.k
        a = self.a
        # curl of the Beltrami-like field above
        dvz_dy = -a * ky * np.sin(kx * X) * np.sin(ky * Y)
        dvy_dz = a * kz * np.cos(kz * Z) * np.cos(kx * X)
        dvx_dz = -a * kz * np.sin(ky * Y) * np.sin(kz * Z)
        dvz_dx = a * kx * np.cos(kx * X) * np.cos(ky * Y)
        dvy_dx = -a * kx * np.sin(kz * Z) * np.sin(kx * X)
        dvx_dy = a * ky * np.cos(ky * Y) * np.cos(kz * Z)
        return [dvz_dy - dvy_dz, dvx_dz - dvz_dx, dvy_dx - dvx_dy]

    def _curl_curl_v(self, X, Y, Z):
        # curl(curl V) = grad(div V) - lap V; div V = 0 for this V.
        kx, ky, kz = self.k
        a = self.a
        return [a * (ky * ky + kz * kz) * np.sin(ky * Y) * np.cos(kz * Z),
                a * (kz * kz + kx * kx) * np.sin(kz * Z) * np.cos(kx * X),
                a * (kx * kx + ky * ky) * np.sin(kx * X) * np.cos(ky * Y)]

    # fields ----------------------------------------------------------------
    def fields(self, X, Y, Z, t):
        c = np.cos(self.w * t)
        s = np.sin(self.w * t)
        V = self._v(X, Y, Z)
        E = [self.w * s * v for v in V]                 # -d/dt (c V)
        B = [c * cv for cv in self._curl_v(X, Y, Z)]
        dE = [self.w * self.w * c * v for v in V]
        rho = np.zeros_like(X)                          # div V = 0
        cc = self._curl_curl_v(X, Y, Z)
        j = [(c * ccv - dEv) / FOUR_PI for ccv, dEv in zip(cc, dE)]
        dB = [-self.w * s * cv for cv in self._curl_v(X, Y, Z)]
        return {"E": E, "B": B, "dE": dE, "dB": dB, "rho": rho, "j": j}


def momentum_identity_residual(manufactured, n, t=0.3):
    """Max-norm residual of the field momentum balance on an n^3 sample.

    residual = d/dt (E x B)/4pi - div T + (rho E + j x B), with the
    time derivative analytic and div T by centered differences on the
    periodic collocated sample; second-order small for smooth fields.
    """
    L = manufactured.L
    hx, hy, hz = (Li / n for Li in L)
    xs = (np.arange(n) + 0.5) * hx
    ys = (np.arange(n) + 0.5) * hy
    zs = (np.arange(n) + 0.5) * hz
    X, Y, Z = np.meshgrid(xs, ys, zs, indexing="ij")
    f = manufactured.fields(X, Y, Z, t)
    E, B, dE, dB, rho, j = f["E"], f["B"], f["dE"], f["dB"], f["rho"], f["j"]

    # d/dt (E x B) / 4 pi, analytic
    def cross(u, v):
        return [u[1] * v[2] - u[2] * v[1],
                u[2] * v[0] - u[0] * v[2],
                u[0] * v[1] - u[1] * v[0]]

    dpdt = [(a + b) / FOUR_PI for a, b in
            zip(cross(dE, B), cross(E, dB))]

    # Maxwell stress tensor and its centered-difference divergence
    e2 = sum(c * c for c in E)
    b2 = sum(c * c for c in B)
    T = [[(E[i] * E[j] + B[i] * B[j]
           - (0.5 * (e2 + b2) if i == j else 0.0)) / FOUR_PI
          for j in range(3)] for i in range(3)]

    def ddx(arr, axis, h):
        return (np.roll(arr, -1, axis=axis) - np.roll(arr, 1, axis=axis)) \
            / (2.0 * h)

    h = (hx, hy, hz)
    divT = [sum(ddx(T[i][j], j, h[j]) for j in range(3)) for i in range(3)]
    lorentz = [rho * E[i] + cross(j, B)[i] for i in range(3)]

    res = 0.0
    for i in range(3):
        res = max(res, float(np.max(np.abs(dpdt[i] - divT[i] + lorentz[i]))))
    return res


# ---------------------------------------------------------------------------
# angular momentum rate check on a periodic patch
# ---------------------------------------------------------------------------

def angular_momentum_rate_check(series, lengths, axis_origin=(0.0, 0.0),
                                omega_axis=2):
    """Compare d/dt of int R.(E x B)/4pi against -int R.(rho E + j x B).

    ``series``: list of dicts with keys t, E, B, rho, j, each field a
    collocated (n, n, n, ...) sample on the periodic box; R(x) =
    e_axis x (x - x0) with x0 determined by ``axis_origin`` in the plane
    normal to the axis.  Returns per-interior-time mismatch records.
    """
    if len(series) < 3:
        raise ConfigurationError("need at least 3 snapshots")
    n = series[0]["E"][0].shape[0]
    hx, hy, hz = (L / n for L in lengths)
    xs = (np.arange(n) + 0.5) * hx
    ys = (np.arange(n) + 0.5) * hy
    zs = (np.arange(n) + 0.5) * hz
    X, Y, Z = np.meshgrid(xs, ys, zs, indexing="ij")
    dv = hx * hy * hz
    if omega_axis != 2:
        raise ConfigurationError("only the z axis is wired up")
    x0, y0 = axis_origin
    RX, RY = -(Y - y0), (X - x0)

    def cross(u, v):
        return [u[1] * v[2] - u[2] * v[1],
                u[2] * v[0] - u[0] * v[2],
                u[0] * v[1] - u[1] * v[0]]

    def lz_field(snap):
        g = cross(snap["E"], snap["B"])
        return float(np.sum(RX * g[0] + RY * g[1])) * dv / FOUR_PI

    def torque(snap):
        f = cross(snap["j"], snap["B"])
        fx = snap["rho"] * snap["E"][0] + f[0]
        fy = snap["rho"] * snap["E"][1] + f[1]
        return float(np.sum(RX * fx + RY * fy)) * dv

    records = []
    for m in range(1, len(series) - 1):
        dt2 = series[m + 1]["t"] - series[m - 1]["t"]
        lhs = (lz_field(series[m + 1]) - lz_field(series[m - 1])) / dt2
        rhs = -torque(series[m])
        scale = max(abs(lhs), abs(rhs), 1e-30)
        records.append({"t": series[m]["t"], "lhs": lhs, "rhs": rhs,
                        "mismatch": abs(lhs - rhs), "scale": scale})
    return records


def planar_wave_series(lengths, n, dt, n_steps, amplitudes=(1.0, 0.7),
                       omegas=(3.0, 4.5), free=False, t_start=0.5):
    """Manufactured 1D-in-y periodic fields with vanishing xy stress.

    E = (0, 0, Ez(t, y)), B = (Bx(t, y), 0, 0) with dBx/dt = -dEz/dy, so
    Faraday holds exactly; rho = 0 and jz = (-dBx/dy - dEz/dt)/4pi by
    definition.  T_xy and T_yx vanish identically, so the z angular
    momentum balance on the periodic patch carries no boundary
    correction.  Two modes with distinct frequencies keep the weighted
    field momentum genuinely time dependent.  With ``free=True`` both
    frequencies equal the wavenumber, making j = 0 (and, incidentally,
    the angular momentum identically zero).
    """
    Lx, Ly, Lz = lengths
    ky = 2.0 * np.pi / Ly
    a1, a2 = amplitudes
    w1, w2 = (ky, ky) if free else omegas

    def ez(Y, t):
        return a1 * np.cos(w1 * t) * np.sin(ky * Y) \
            + a2 * np.cos(w2 * t) * np.cos(ky * Y)

    def bx(Y, t):
        # time integral of -dEz/dy
        return -(ky / w1) * a1 * np.sin(w1 * t) * np.cos(ky * Y) \
            + (ky / w2) * a2 * np.sin(w2 * t) * np.sin(ky * Y)

    def jz(Y, t):
        dbx_dy = (ky * ky / w1) * a1 * np.sin(w1 * t) * np.sin(ky * Y) \
            + (ky * ky / w2) * a2 * np.sin(w2 * t) * np.cos(ky * Y)
        dez_dt = -a1 * w1 * np.sin(w1 * t) * np.sin(ky * Y) \
            - a2 * w2 * np.sin(w2 * t) * np.cos(ky * Y)
        return (-dbx_dy - dez_dt) / FOUR_PI

    hx, hy, hz = Lx / n, Ly / n, Lz / n
    ys = (np.arange(n) + 0.5) * hy
    Y = np.meshgrid(np.zeros(n), ys, np.zeros(n), indexing="ij")[1]
    zeros = np.zeros((n, n, n))
    series = []
    for m in range(n_steps):
        t = t_start + m * dt
        series.append({
            "t": t,
            "E": [zeros, zeros, ez(Y, t)],
            "B": [bx(Y, t), zeros, zeros],
            "rho": zeros,
            "j": [zeros, zeros, zeros if free else jz(Y, t)],
        })
    return series


# ---------------------------------------------------------------------------
# Helmholtz split diagnostic
# ---------------------------------------------------------------------------

def helmholtz_split(state):
    """Split E = E1 + grad xi with div E1 = 0 and xi = 0 on the walls.

    xi solves the 7-point discrete Poisson problem lap xi = div E with
    homogeneous Dirichlet data (type-I sine transform), and grad xi is
    the grid's own difference, so div E1 vanishes at rounding level on
    interior nodes.  Returns (E1, grad_xi, xi).
    """
    from scipy.fft import dstn, idstn

    rhs = div_e(state)[1:-1, 1:-1, 1:-1]
    nx, ny, nz = state.shape
    dx, dy, dz = state.spacing
    coeffs = dstn(rhs, type=1)
    ix = np.arange(1, nx)
    iy = np.arange(1, ny)
    iz = np.arange(1, nz)
    lx = (2.0 * np.cos(np.pi * ix / nx) - 2.0) / dx ** 2
    ly = (2.0 * np.cos(np.pi * iy / ny) - 2.0) / dy ** 2
    lz = (2.0 * np.cos(np.pi * iz / nz) - 2.0) / dz ** 2
    denom = lx[:, None, None] + ly[None, :, None] + lz[None, None, :]
    xi = np.zeros((nx + 1, ny + 1, nz + 1))
    xi[1:-1, 1:-1, 1:-1] = idstn(coeffs / denom, type=1)
    grad = [
        (xi[1:, :, :] - xi[:-1, :, :]) / dx,
        (xi[:, 1:, :] - xi[:, :-1, :]) / dy,
        (xi[:, :, 1:] - xi[:, :, :-1]) / dz,
    ]
    e1 = [state.E[a] - grad[a] for a in range(3)]
    return e1, grad, xi


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

def export_snapshot(state, prefix):
    """Raw little-endian float64 dump of each component + JSON sidecar."""
    import json
    from pathlib import Path

    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    files = {}
    for name, arrs in (("E", state.E), ("B", state.B)):
        for a, comp in zip("xyz", arrs):
            path = prefix.with_suffix(f".{name}{a}.bin")
            comp.astype("<f8").tofile(path)
            files[f"{name}{a}"] = {"file": path.name, "shape": list(comp.shape)}
    sidecar = {
        "format": "rvmlkit-em-snapshot-v1",
        "t": state.t,
        "dt": state.dt,
        "shape": list(state.shape),
        "lengths": list(state.lengths),
        "spacing": list(state.spacing),
        "dtype": "<f8",
        "order": "C",
        "components": files,
    }
    path = prefix.with_suffix(".json")
    with open(path, "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
    return str(path)
