"""Independent numerical checks of the closed forms in :mod:`cslwalk.analytic`.

Three routes, none of which uses the closed-form density or spreads:

* ``pde_residual`` plugs the propagator into the coordinate-space master
  equation with finite differences;
* ``quadrature_propagate`` integrates propagator x initial state over the four
  initial coordinates with tensor Gauss-Hermite quadrature;
* ``moment_ode_evolve`` integrates the second-moment equations with RK4.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg

from ._accel import PARALLEL_JIT_OPTIONS, USE_NUMBA, njit, prange
from .analytic import HBAR, PropagatorPoint, evaluate_propagator, kernel_damping, kernel_phase
from .errors import IntegratorToleranceError, OracleDivergenceError, ParameterDomainError
from .params import CslParams, ExperimentSetup

__all__ = [
    "GridSpec",
    "MomentState",
    "OracleReport",
    "collapse_bracket",
    "collapse_momentum_diffusion",
    "pde_residual",
    "residual_convergence",
    "sample_points",
    "gauss_hermite",
    "quadrature_propagate",
    "quadrature_total_probability",
    "moment_ode_evolve",
    "MAX_NODES",
]

MAX_NODES = 80


@dataclass
class OracleReport:
    check_name: str
    parameters: dict
    error: float
    converged: bool
    details: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


# ---------------------------------------------------------------------------
# PDE residual
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    half_width: float  # m, extent of sampled coordinates about the primed point
    points_per_axis: int
    fd_step: float  # m
    dt: float  # s

    def __post_init__(self):
        if self.points_per_axis < 1 or self.points_per_axis % 2 == 0:
            raise ParameterDomainError("points_per_axis", self.points_per_axis, "must be odd and positive")
        if not 0.0 < self.fd_step < self.half_width / 10.0:
            raise ParameterDomainError("fd_step", self.fd_step, "must lie in (0, half_width/10)")
        if self.dt <= 0.0:
            raise ParameterDomainError("dt", self.dt, "must be > 0")

    def halved(self) -> "GridSpec":
        return GridSpec(self.half_width, self.points_per_axis, self.fd_step / 2.0, self.dt / 2.0)

    def axis(self) -> np.ndarray:
        return np.linspace(-self.half_width, self.half_width, self.points_per_axis)

    @classmethod
    def for_kernel(cls, p: CslParams, t: float, rel_step: float = 1e-3, points_per_axis: int = 5):
        """Grid scaled to the free-particle length sqrt(hbar t / m) at time t."""
        ell = math.sqrt(HBAR * t / p.mass)
        return cls(half_width=ell, points_per_axis=points_per_axis,
                   fd_step=rel_step * ell, dt=rel_step * t)


def collapse_bracket(x1, y1, x2, y2):
    """Quadratic form multiplying -(D/hbar^2) rho in the two-particle master equation."""
    return ((x1 - y1) ** 2 + (x1 - y2) ** 2 + (x2 - y1) ** 2 + (x2 - y2) ** 2
            - (x1 - x2) ** 2 - (y1 - y2) ** 2)


def _rhs_minus_lhs(p: CslParams, pt: PropagatorPoint, h: float, dt: float):
    names = ("x1", "y1", "x2", "y2", "x1p", "y1p", "x2p", "y2p", "t")
    base = {k: np.asarray(getattr(pt, k), dtype=float) for k in names}

    def J(name=None, value=None):
        vals = dict(base)
        if name is not None:
            vals[name] = value
        return evaluate_propagator(PropagatorPoint(**vals), p)

    def stencil(name, step):
        # The stored neighbours are not exactly c +- step; use the steps that
        # were actually represented so rounding does not set a residual floor.
        c = base[name]
        up, down = c + step, c - step
        hp, hm = up - c, c - down
        return J(name, up), J(name, down), hp, hm

    J0 = J()
    fp, fm, hp, hm = stencil("t", dt)
    dJdt = (hm * hm * fp - hp * hp * fm + (hp * hp - hm * hm) * J0) / (hp * hm * (hp + hm))

    def d2(name):
        fp, fm, hp, hm = stencil(name, h)
        return 2.0 * (hm * fp - (hp + hm) * J0 + hp * fm) / (hp * hm * (hp + hm))

    kinetic = (1j * HBAR / (2.0 * p.mass)) * (d2("x1") - d2("y1") + d2("x2") - d2("y2"))
    collapse = -(p.D / HBAR**2) * collapse_bracket(base["x1"], base["y1"], base["x2"], base["y2"]) * J0
    return dJdt - (kinetic + collapse), dJdt, J0


def pde_residual(p: CslParams, pt: PropagatorPoint, g: GridSpec, setup: ExperimentSetup | None = None):
    """Relative residual of the propagator in the master equation at ``pt``.

    Kinetic terms by central second differences (step ``g.fd_step``), time
    derivative by a central difference (step ``g.dt``), collapse term exact.
    Returns |dJ/dt - RHS| / max(|dJ/dt|, eps) with eps = 1e-12 median|J|/t.
    ``setup`` is accepted for symmetry with the other oracles and is unused.
    """
    if np.any(np.asarray(pt.t) < 10.0 * g.dt):
        raise ParameterDomainError("t", pt.t, f"must be >= 10*dt = {10.0 * g.dt:.3g} s")
    res, dJdt, J0 = _rhs_minus_lhs(p, pt, g.fd_step, g.dt)
    eps = 1e-12 * np.median(np.abs(J0)) / np.min(np.asarray(pt.t))
    out = np.abs(res) / np.maximum(np.abs(dJdt), eps)
    return out[()] if np.ndim(out) == 0 else out


def residual_convergence(p: CslParams, pt: PropagatorPoint, g: GridSpec, levels: int = 4):
    """Residuals under repeated step halving and the observed convergence order.

    Raises OracleDivergenceError when a halving does not reduce the residual.
    """
    grids = [g]
    for _ in range(levels - 1):
        grids.append(grids[-1].halved())
    res = np.array([np.max(pde_residual(p, pt, gi)) for gi in grids])
    ratios = res[1:] / res[:-1]
    if np.any(ratios >= 1.0):
        raise OracleDivergenceError(f"step halving did not reduce the PDE residual: {res.tolist()}")
    orders = -np.log2(ratios)
    return OracleReport(
        check_name="pde_residual",
        parameters={"lambda_alpha": p.lambda_alpha, "mass_kg": p.mass, "fd_step": g.fd_step, "dt": g.dt,
                    "levels": levels},
        error=float(res[-1]),
        converged=True,
        details={"residuals": res.tolist(), "ratios": ratios.tolist(), "orders": orders.tolist()},
    )


def sample_points(p: CslParams, t: float, g: GridSpec, n: int, rng: np.random.Generator) -> PropagatorPoint:
    """Random propagator points whose final coordinates lie on the grid about random primed ones."""
    ax = g.axis()
    prime = rng.uniform(-g.half_width, g.half_width, size=(4, n))
    final = prime + rng.choice(ax, size=(4, n)) + rng.uniform(-0.5, 0.5, size=(4, n)) * (ax[1] - ax[0] if ax.size > 1 else 0.0)
    return PropagatorPoint(final[0], final[1], final[2], final[3], prime[0], prime[1], prime[2], prime[3],
                           np.full(n, t))


# ---------------------------------------------------------------------------
# Quadrature propagation of the double-trap state
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def gauss_hermite(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for weight exp(-w^2); cached per order."""
    w, W = np.polynomial.hermite.hermgauss(n)
    w.setflags(write=False)
    W.setflags(write=False)
    return w, W


def _log_psi(a, b, ca, cb, sigma):
    # log of one product-Gaussian branch of the initial wavefunction
    return -0.5 * math.log(4.0 * math.pi * sigma * sigma) - ((a - ca) ** 2 + (b - cb) ** 2) / (4.0 * sigma * sigma)


def _log_integrand(x1p, y1p, x2p, y2p, x1, x2, t, mass, D, sigma, c1, c2, d1, d2):
    """log of J(x1,x1,x2,x2 | primed) * psi_c(x1p,x2p) * psi_d(y1p,y2p), any dtype."""
    pref = 2.0 * math.log(mass / (2.0 * math.pi * HBAR * t))
    phase = kernel_phase(x1, x1, x2, x2, x1p, y1p, x2p, y2p, t, mass)
    damp = kernel_damping(x1, x1, x2, x2, x1p, y1p, x2p, y2p, t, D)
    return pref + 1j * phase + damp + _log_psi(x1p, x2p, c1, c2, sigma) + _log_psi(y1p, y2p, d1, d2, sigma)


_kernel_phase_jit = njit(cache=True)(kernel_phase)
_kernel_damping_jit = njit(cache=True)(kernel_damping)
_log_psi_jit = njit(cache=True)(_log_psi)


@njit(**PARALLEL_JIT_OPTIONS)
def _gh_sum_numba(z0, L, vref, scale, w, W, x1, x2, t, mass, D, sigma, c1, c2, d1, d2):
    n = w.shape[0]
    pref = 2.0 * math.log(mass / (2.0 * math.pi * HBAR * t))
    partial = np.zeros(n, dtype=np.complex128)
    for i in prange(n):
        acc = 0j
        for j in range(n):
            for k in range(n):
                for m in range(n):
                    wi, wj, wk, wm = w[i], w[j], w[k], w[m]
                    v0 = vref[0] + scale * (z0[0] + L[0, 0] * wi + L[0, 1] * wj + L[0, 2] * wk + L[0, 3] * wm)
                    v1 = vref[1] + scale * (z0[1] + L[1, 0] * wi + L[1, 1] * wj + L[1, 2] * wk + L[1, 3] * wm)
                    v2 = vref[2] + scale * (z0[2] + L[2, 0] * wi + L[2, 1] * wj + L[2, 2] * wk + L[2, 3] * wm)
                    v3 = vref[3] + scale * (z0[3] + L[3, 0] * wi + L[3, 1] * wj + L[3, 2] * wk + L[3, 3] * wm)
                    lg = (pref
                          + 1j * _kernel_phase_jit(x1, x1, x2, x2, v0, v1, v2, v3, t, mass)
                          + _kernel_damping_jit(x1, x1, x2, x2, v0, v1, v2, v3, t, D)
                          + _log_psi_jit(v0, v2, c1, c2, sigma)
                          + _log_psi_jit(v1, v3, d1, d2, sigma)
                          + wi * wi + wj * wj + wk * wk + wm * wm)
                    acc += W[i] * W[j] * W[k] * W[m] * np.exp(lg)
        partial[i] = acc
    total = 0j
    for i in range(n):
        total += partial[i]
    return total


def _gh_sum_numpy(z0, L, vref, scale, w, W, x1, x2, t, mass, D, sigma, c1, c2, d1, d2):
    n = w.size
    wj, wk, wm = np.meshgrid(w, w, w, indexing="ij")
    Wjkm = W[:, None, None] * W[None, :, None] * W[None, None, :]
    sq = wj * wj + wk * wk + wm * wm
    total = 0j
    for i in range(n):
        wi = w[i]
        v = [vref[r] + scale * (z0[r] + L[r, 0] * wi + L[r, 1] * wj + L[r, 2] * wk + L[r, 3] * wm)
             for r in range(4)]
        lg = _log_integrand(v[0], v[1], v[2], v[3], x1, x2, t, mass, D, sigma, c1, c2, d1, d2) + wi * wi + sq
        total += W[i] * np.sum(Wjkm * np.exp(lg))
    return total


def _saddle(x1, x2, t, mass, D, sigma, centers):
    """Stationary point and whitening map of the (exactly Gaussian) log-integrand.

    Works in z = (v - vref)/sigma.  Gradient and Hessian come from a central
    finite-difference stencil of unit step, which is exact for a quadratic.
    """
    c1, c2, d1, d2 = centers
    vref = np.array([c1, d1, c2, d2], dtype=float)

    def g(z):
        v = vref + sigma * np.asarray(z)
        return _log_integrand(v[0], v[1], v[2], v[3], x1, x2, t, mass, D, sigma, c1, c2, d1, d2)

    e = np.eye(4)
    g0 = g(np.zeros(4))
    grad = np.array([(g(e[i]) - g(-e[i])) / 2.0 for i in range(4)])
    H = np.empty((4, 4), dtype=complex)
    for i in range(4):
        H[i, i] = g(e[i]) - 2.0 * g0 + g(-e[i])
        for j in range(i):
            H[i, j] = H[j, i] = (g(e[i] + e[j]) - g(e[i] - e[j]) - g(-e[i] + e[j]) + g(-e[i] - e[j])) / 4.0
    A = -0.5 * H  # g(z) = g(z0) - (z - z0)^T A (z - z0)
    if np.any(np.linalg.eigvals(A.real) <= 0.0):
        raise OracleDivergenceError("integrand is not decaying along the real contour")
    z0 = np.linalg.solve(A, grad) / 2.0
    L = np.linalg.inv(scipy.linalg.sqrtm(A))
    return vref, z0, L


def _branch_centers(mu: float):
    ket = ((mu, -mu), (-mu, mu))
    return [(c[0], c[1], d[0], d[1]) for c in ket for d in ket]


def _propagate_point(setup: ExperimentSetup, p: CslParams, x1: float, x2: float, nodes: int) -> complex:
    w, W = gauss_hermite(nodes)
    t, m, D, s = setup.t_flight, p.mass, p.D, setup.sigma
    gh = _gh_sum_numba if USE_NUMBA else _gh_sum_numpy
    total = 0j
    for centers in _branch_centers(setup.mu):
        vref, z0, L = _saddle(x1, x2, t, m, D, s, centers)
        jac = s**4 * np.linalg.det(L)
        total += jac * gh(z0.astype(np.complex128), np.ascontiguousarray(L, dtype=np.complex128), vref, s,
                          w, W, x1, x2, t, m, D, s, *centers)
    return total


def quadrature_propagate(setup: ExperimentSetup, p: CslParams, X, xi, nodes: int = 40,
                         check_convergence: bool = False, rtol: float = 1e-4):
    """Diagonal density at (X, xi) by 4-D Gauss-Hermite quadrature of propagator x rho_0.

    The initial density matrix is expanded into its four ket/bra branches
    (including the interference branches).  For each branch the real contour
    of every primed coordinate is shifted onto the complex saddle of the
    Gaussian integrand and whitened, then integrated with ``nodes`` points
    per axis.  A real-axis rule centred on the traps would need hundreds of
    nodes per axis because of the free phase.

    With ``check_convergence`` the result is recomputed with twice the nodes
    and an OracleDivergenceError is raised if they differ by more than ``rtol``.
    """
    if nodes > MAX_NODES or (check_convergence and 2 * nodes > MAX_NODES):
        raise OracleDivergenceError(f"quadrature needs more than {MAX_NODES} nodes per axis")
    X = np.atleast_1d(np.asarray(X, dtype=float))
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    X, xi = np.broadcast_arrays(X, xi)
    out = np.empty(X.shape)
    for idx in np.ndindex(X.shape):
        x1, x2 = X[idx] + 0.5 * xi[idx], X[idx] - 0.5 * xi[idx]
        val = _propagate_point(setup, p, x1, x2, nodes)
        if check_convergence:
            val2 = _propagate_point(setup, p, x1, x2, 2 * nodes)
            if abs(val2 - val) > rtol * abs(val2):
                raise OracleDivergenceError(
                    f"quadrature changed by {abs(val2 - val) / abs(val2):.2e} on doubling nodes at X={X[idx]}, xi={xi[idx]}")
        out[idx] = val.real
    return out if out.size > 1 else float(out.reshape(()))


def quadrature_total_probability(setup: ExperimentSetup, p: CslParams, width_X: float, width_rel: float,
                                 nodes: int = 8, points: int = 33, half_range: float = 8.0) -> float:
    """Integrate the quadrature density over (X, xi) with the trapezoid rule.

    Each peak is covered by a ``points`` x ``points`` box of +-``half_range``
    widths; the widths only size the box.
    """
    X = np.linspace(-half_range * width_X, half_range * width_X, points)
    r = np.linspace(-half_range * width_rel, half_range * width_rel, points)
    total = 0.0
    for c in (setup.mu, -setup.mu):
        XX, RR = np.meshgrid(X, c + r, indexing="ij")
        dens = quadrature_propagate(setup, p, XX, 2.0 * RR, nodes=nodes)
        # d(xi) = 2 d(xi/2)
        total += 2.0 * np.trapezoid(np.trapezoid(dens, r, axis=1), X)
    return float(total)


# ---------------------------------------------------------------------------
# Second-moment equations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MomentState:
    """Per-peak second moments in centre-of-mass / half-separation coordinates.

    Momenta are the conjugates P_X = p1 + p2 and P_rel = p1 - p2 of X and
    xi/2; both coordinates carry the effective mass 2m.
    """

    var_X: float
    var_rel: float
    cov_Xp: float
    cov_relp: float
    var_pX: float
    var_prel: float

    def is_physical(self) -> bool:
        dets = (self.var_X * self.var_pX - self.cov_Xp**2, self.var_rel * self.var_prel - self.cov_relp**2)
        scale = max(abs(self.var_X * self.var_pX), abs(self.var_rel * self.var_prel))
        return min(self.var_X, self.var_rel, self.var_pX, self.var_prel) >= 0.0 and min(dets) >= -1e-12 * scale


def collapse_momentum_diffusion(D: float) -> tuple[float, float]:
    """Momentum diffusion coefficients (P_X, P_rel) injected by the collapse term.

    The collapse term depends only on the ket-bra differences u_i = x_i - y_i.
    For a term -(1/hbar^2) u^T K u rho, d<p_i p_j>/dt = 2 K_ij.  K is read off
    the bracket by polarisation and rotated to (P_X, P_rel); the returned
    coefficients d satisfy dVar(P)/dt = 2 d.
    """
    def Q(u):
        # x_i = u_i/2, y_i = -u_i/2 so that x_i - y_i = u_i
        return D * collapse_bracket(u[0] / 2.0, -u[0] / 2.0, u[1] / 2.0, -u[1] / 2.0)

    e = np.eye(2)
    K = np.empty((2, 2))
    for i in range(2):
        for j in range(2):
            K[i, j] = (Q(e[i] + e[j]) - Q(e[i] - e[j])) / 4.0
    T = np.array([[1.0, 1.0], [1.0, -1.0]])
    rate = T @ (2.0 * K) @ T.T
    return 0.5 * rate[0, 0], 0.5 * rate[1, 1]


def _rk4(y, rhs, dt, steps):
    for _ in range(steps):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * dt * k1)
        k3 = rhs(y + 0.5 * dt * k2)
        k4 = rhs(y + dt * k3)
        y = y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return y


def _initial_moments(setup):
    # each particle: position variance sigma^2, momentum variance hbar^2/(4 sigma^2)
    return np.array([0.5 * setup.sigma**2, 0.0, HBAR**2 / (2.0 * setup.sigma**2)] * 2)


def _evolve(setup, p, t_final, dt):
    M = 2.0 * p.mass
    dX, dR = collapse_momentum_diffusion(p.D)
    # (var, cov, var_p) for X then for xi/2
    y0 = _initial_moments(setup)
    drive = np.array([0.0, 0.0, 2.0 * dX, 0.0, 0.0, 2.0 * dR])

    def rhs(y):
        return np.array([2.0 * y[1] / M, y[2] / M, 0.0, 2.0 * y[4] / M, y[5] / M, 0.0]) + drive

    steps = max(1, int(math.ceil(t_final / dt - 1e-9)))
    return _rk4(y0, rhs, t_final / steps, steps)


def moment_ode_evolve(setup: ExperimentSetup, p: CslParams, t_final: float, dt: float) -> MomentState:
    """Integrate the closed second-moment system with classical RK4.

    The result is recomputed with dt/2; a relative change above 1e-8 in
    either position variance raises IntegratorToleranceError.
    """
    if t_final < 0.0:
        raise ParameterDomainError("t_final", t_final, "must be >= 0")
    if t_final == 0.0:
        y = _initial_moments(setup)
    else:
        if not 0.0 < dt <= t_final / 1000.0:
            raise ParameterDomainError("dt", dt, "must satisfy 0 < dt <= t_final/1000")
        y = _evolve(setup, p, t_final, dt)
        y2 = _evolve(setup, p, t_final, dt / 2.0)
        for a, b in ((y[0], y2[0]), (y[3], y2[3])):
            if abs(a - b) > 1e-8 * abs(b):
                raise IntegratorToleranceError(f"step halving changed a variance by {abs(a - b) / abs(b):.2e}")
    return MomentState(var_X=y[0], cov_Xp=y[1], var_pX=y[2], var_rel=y[3], cov_relp=y[4], var_prel=y[5])
