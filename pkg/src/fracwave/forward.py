"""Wave solvers: modal Duhamel, exterior lifting, Picard with a potential,
explicit time stepping, and the weak-form residual checks.

Modal route.  Expanding in the interior eigenbasis, each coefficient obeys
c_k'' + lambda_k c_k = F_k, solved in closed form plus a Duhamel convolution:

    c_k(t) = u0_k cos(w t) + u1_k sin(w t)/w
             + 1/w * int_0^t F_k(tau) sin(w (t - tau)) dtau,   w = sqrt(lambda_k)

The convolution is evaluated by splitting sin(w(t - tau)) into sin/cos parts
and accumulating the two cumulative trapezoid integrals, which is identical
to node-wise trapezoid quadrature of the original integrand and costs
O(n_t) per mode.  Initial velocity and forcing act through their L^2
pairings with the modes, so rough (dual-space) data is admissible.

The same trapezoid weights appear in every space-time pairing in this
package; that choice makes the discrete solution operator exactly
self-adjoint under time reversal, which the transposition-style residual
identities below inherit.

Time stepping route.  An explicit central-difference (Stormer-Verlet) march
on the full grid doubles as an independent oracle for the modal solver and
as the workhorse for semilinear models, under the usual CFL restriction
dt <= 2 / sqrt(lambda_max (1 + margin)).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .fields import CauchyData, ExteriorControl, SpaceTimeField, time_reverse
from .fracop import FracOperator
from .grid import Grid
from .nonlinearity import PolyNonlinearity, Potential
from .spectral import SpectralBasis, project_l2, reconstruct

__all__ = [
    "WaveSolution",
    "PicardReport",
    "PicardError",
    "SolverBlowupError",
    "duhamel_coefficient",
    "solve_linear_modal",
    "lift_exterior",
    "LiftedProblem",
    "solve_with_potential_picard",
    "solve_newmark",
    "newmark_dt_bound",
    "very_weak_residual",
    "distributional_residual",
    "trapezoid_weights",
    "sup_energy",
    "data_energy",
]


@dataclass(frozen=True)
class WaveSolution:
    """Displacement and velocity trajectories on interior nodes."""

    u: SpaceTimeField
    udot: SpaceTimeField


class PicardError(RuntimeError):
    """Fixed-point iteration failed; carries the diagnostic report."""

    def __init__(self, message: str, report: "PicardReport"):
        super().__init__(message)
        self.report = report


class SolverBlowupError(RuntimeError):
    """Time march produced non-finite values."""


def trapezoid_weights(n_t: int, dt: float) -> np.ndarray:
    w = np.full(n_t + 1, dt)
    w[0] = 0.5 * dt
    w[-1] = 0.5 * dt
    return w


def _modal_coefficients(
    lambdas: np.ndarray,
    u0k: np.ndarray,
    u1k: np.ndarray,
    fk: np.ndarray | None,
    tgrid: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Coefficient trajectories (K, n_t+1) for all modes at once."""
    om = np.sqrt(lambdas)[:, None]
    phase = om * tgrid[None, :]
    cos_t = np.cos(phase)
    sin_t = np.sin(phase)
    c = u0k[:, None] * cos_t + (u1k[:, None] / om) * sin_t
    cdot = -om * u0k[:, None] * sin_t + u1k[:, None] * cos_t
    if fk is not None:
        dt = tgrid[1] - tgrid[0]
        fmode = fk  # (K, n_t + 1)
        icos = cumulative_trapezoid(fmode * cos_t, dx=dt, axis=1, initial=0.0)
        isin = cumulative_trapezoid(fmode * sin_t, dx=dt, axis=1, initial=0.0)
        c = c + (sin_t * icos - cos_t * isin) / om
        cdot = cdot + cos_t * icos + sin_t * isin
    return c, cdot


def duhamel_coefficient(
    lam: float,
    u0k: float,
    u1k: float,
    fk: np.ndarray | None,
    tgrid: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Single-mode solution (c, c') on a uniform time grid.

    fk, when given, holds the forcing coefficient sampled on tgrid.  The
    Duhamel term uses composite trapezoid quadrature on the same grid.
    """
    if not lam > 0:
        raise ValueError(f"modal frequency needs lambda > 0, got {lam}")
    tgrid = np.asarray(tgrid, dtype=float)
    if tgrid.ndim != 1 or tgrid.shape[0] < 2:
        raise ValueError("tgrid must hold at least two nodes")
    steps = np.diff(tgrid)
    if not np.allclose(steps, steps[0], rtol=1e-12, atol=0.0):
        raise ValueError("tgrid must be uniform")
    f = None if fk is None else np.asarray(fk, dtype=float)[None, :]
    if f is not None and f.shape[1] != tgrid.shape[0]:
        raise ValueError(f"fk has {f.shape[1]} samples, tgrid has {tgrid.shape[0]}")
    c, cdot = _modal_coefficients(
        np.array([lam]), np.array([float(u0k)]), np.array([float(u1k)]), f, tgrid
    )
    return c[0], cdot[0]


def solve_linear_modal(
    basis: SpectralBasis,
    data: CauchyData,
    source: np.ndarray | None,
    grid: Grid,
) -> WaveSolution:
    """Very-weak solution of u'' + A u = F with Cauchy data, zero exterior.

    source is an interior trajectory (n_t+1, n_int) or None.  Velocity data
    and forcing enter through modal pairings h phi_k^T (.), their natural
    dual-space reading.
    """
    if data.u0.shape[0] != grid.n_int:
        raise ValueError(
            f"data has {data.u0.shape[0]} nodes, grid interior is {grid.n_int}"
        )
    tgrid = grid.times()
    u0k = project_l2(data.u0, basis)
    u1k = project_l2(data.u1, basis)
    fk = None
    if source is not None:
        source = np.asarray(source, dtype=float)
        if source.shape != (grid.n_t + 1, grid.n_int):
            raise ValueError(
                f"source shape {source.shape} != {(grid.n_t + 1, grid.n_int)}"
            )
        fk = project_l2(source, basis).T  # (K, n_t + 1)
    c, cdot = _modal_coefficients(basis.lambdas, u0k, u1k, fk, tgrid)
    u = reconstruct(c.T, basis)
    udot = reconstruct(cdot.T, basis)
    return WaveSolution(
        u=SpaceTimeField(u, "interior", grid.dt, grid.T),
        udot=SpaceTimeField(udot, "interior", grid.dt, grid.T),
    )


@dataclass(frozen=True)
class LiftedProblem:
    """Zero-exterior reformulation of an exterior-data problem.

    v := u - phi solves v'' + A v = source with zero Cauchy data and zero
    exterior values; u is recovered by pasting the control back onto the
    exterior nodes.
    """

    source: np.ndarray  # (n_t + 1, n_int)
    control: ExteriorControl

    def reassemble(self, interior: np.ndarray, grid: Grid) -> SpaceTimeField:
        full = np.zeros((grid.n_t + 1, grid.n_nodes))
        full[:, grid.interior_slice] = interior
        full[:, grid.exterior_indices] = self.control.values
        return SpaceTimeField(full, "full", grid.dt, grid.T)


def lift_exterior(control: ExteriorControl, op: FracOperator, grid: Grid) -> LiftedProblem:
    """Interior source -chi_Omega A (extension of the control)."""
    if control.n_t != grid.n_t:
        raise ValueError(f"control has n_t={control.n_t}, grid has {grid.n_t}")
    a_ie = op.a_full[grid.interior_slice, :][:, grid.exterior_indices]
    source = -(control.values @ a_ie.T)
    return LiftedProblem(source=source, control=control)


@dataclass(frozen=True)
class PicardReport:
    theta: float
    contraction: float  # max observed successive-update ratio
    iterations: int
    final_update: float
    thetas_tried: tuple[float, ...]


def _theta_norm(values: np.ndarray, theta: float, tgrid: np.ndarray, h: float) -> float:
    slice_norms = np.sqrt(h) * np.linalg.norm(values, axis=1)
    return float(np.max(np.exp(-theta * tgrid) * slice_norms))


def solve_with_potential_picard(
    basis: SpectralBasis,
    q: np.ndarray | Potential | None,
    data: CauchyData,
    source: np.ndarray | None,
    grid: Grid,
    *,
    tol: float = 1e-12,
    max_iter: int = 256,
    theta0: float = 1.0,
    theta_cap: float = 2.0**20,
    ratio_bound: float = 0.9,
) -> tuple[WaveSolution, PicardReport]:
    """Fixed point of u -> S(F - q u) in the weighted norm
    sup_t e^(-theta t) ||u(t)||_L2.

    theta starts at theta0 and doubles whenever the observed update ratio
    exceeds ratio_bound (restarting the iteration), up to theta_cap; beyond
    the cap a PicardError carries the diagnostic report.  tol is relative to
    the size of the first iterate.
    """
    if isinstance(q, Potential):
        q = q.values
    if q is not None:
        q = np.asarray(q, dtype=float)
        if q.shape != (grid.n_int,):
            raise ValueError(f"potential shape {q.shape} != ({grid.n_int},)")
    tgrid = grid.times()
    base = solve_linear_modal(basis, data, source, grid)
    if q is None or not np.any(q):
        report = PicardReport(theta0, 0.0, 1, 0.0, (theta0,))
        return base, report

    thetas: list[float] = []
    theta = float(theta0)
    last_report = None
    while True:
        thetas.append(theta)
        scale = max(_theta_norm(base.u.values, theta, tgrid, grid.h), 1e-300)
        current = base
        contraction = 0.0
        prev_update = None
        converged = False
        needs_larger_theta = False
        iterations = 0
        update = np.inf
        for iterations in range(1, max_iter + 1):
            src = -q[None, :] * current.u.values
            if source is not None:
                src = src + source
            nxt = solve_linear_modal(basis, data, src, grid)
            update = _theta_norm(nxt.u.values - current.u.values, theta, tgrid, grid.h)
            if prev_update is not None and prev_update > 1e3 * np.finfo(float).eps * scale:
                ratio = update / prev_update
                contraction = max(contraction, ratio)
                if ratio > ratio_bound and update > 10 * tol * scale:
                    needs_larger_theta = True
            current = nxt
            if update <= tol * scale:
                converged = True
                break
            if needs_larger_theta:
                break
            prev_update = update
        last_report = PicardReport(
            theta=theta,
            contraction=contraction,
            iterations=iterations,
            final_update=update,
            thetas_tried=tuple(thetas),
        )
        if converged and not needs_larger_theta:
            return current, last_report
        if theta >= theta_cap:
            raise PicardError(
                f"no contraction below ratio {ratio_bound} up to theta = {theta:g}",
                last_report,
            )
        theta *= 2.0


def newmark_dt_bound(op: FracOperator, *, cfl_margin: float = 0.25) -> float:
    """Stable step bound 2 / sqrt(lambda_max (1 + margin)); lambda_max is the
    Gershgorin row-sum bound of the interior block (safe overestimate)."""
    lam_max = float(np.abs(op.a_int).sum(axis=1).max())
    return 2.0 / np.sqrt(lam_max * (1.0 + cfl_margin))


def solve_newmark(
    op: FracOperator,
    grid: Grid,
    model: Potential | PolyNonlinearity | np.ndarray | None = None,
    control: ExteriorControl | None = None,
    data: CauchyData | None = None,
    source: np.ndarray | None = None,
    *,
    cfl_margin: float = 0.25,
) -> SpaceTimeField:
    """Explicit central-difference march of
    u'' + A u + q u + f(x, u) = F on the full grid.

    Exterior nodes follow the control (zero when absent); interior nodes
    start from the Cauchy data with a second-order startup step.  Returns
    the full-grid trajectory.  Raises on CFL violation and aborts with the
    step index when the march produces non-finite values.
    """
    dt = grid.dt
    bound = newmark_dt_bound(op, cfl_margin=cfl_margin)
    if dt > bound:
        raise ValueError(
            f"CFL violation: dt = {dt:.6e} exceeds stable bound {bound:.6e} "
            f"(Gershgorin lambda_max {(2.0 / bound) ** 2 / (1 + cfl_margin):.6e}, "
            f"margin {cfl_margin})"
        )

    q = None
    nonlin = None
    if isinstance(model, Potential):
        q = model.values
    elif isinstance(model, PolyNonlinearity):
        nonlin = model
    elif model is not None:
        q = np.asarray(model, dtype=float)
        if q.shape != (grid.n_int,):
            raise ValueError(f"potential shape {q.shape} != ({grid.n_int},)")

    if data is None:
        data = CauchyData.zero(grid.n_int)
    if source is not None:
        source = np.asarray(source, dtype=float)
        if source.shape != (grid.n_t + 1, grid.n_int):
            raise ValueError(
                f"source shape {source.shape} != {(grid.n_t + 1, grid.n_int)}"
            )
    if control is not None and control.n_t != grid.n_t:
        raise ValueError(f"control has n_t={control.n_t}, grid has {grid.n_t}")

    n_t = grid.n_t
    full = np.zeros((n_t + 1, grid.n_nodes))
    if control is not None:
        full[:, grid.exterior_indices] = control.values
    interior = grid.interior_slice

    def accel(n: int) -> np.ndarray:
        a = -(op.a_full @ full[n])[interior]
        u_int = full[n, interior]
        if q is not None:
            a = a - q * u_int
        if nonlin is not None:
            a = a - nonlin.evaluate(u_int)
        if source is not None:
            a = a + source[n]
        return a

    full[0, interior] = data.u0
    full[1, interior] = data.u0 + dt * data.u1 + 0.5 * dt * dt * accel(0)
    for n in range(1, n_t):
        u_new = 2.0 * full[n, interior] - full[n - 1, interior] + dt * dt * accel(n)
        if not np.isfinite(u_new).all():
            raise SolverBlowupError(
                f"non-finite values at step {n + 1} (t = {(n + 1) * dt:.6g})"
            )
        full[n + 1, interior] = u_new
    return SpaceTimeField(full, "full", dt, grid.T)


def _pair_trajectories(a: np.ndarray, b: np.ndarray, grid: Grid) -> float:
    """Discrete space-time L^2 pairing h * int_0^T a . b dt (trapezoid)."""
    w = trapezoid_weights(grid.n_t, grid.dt)
    return float(grid.h * np.sum(w * np.einsum("ti,ti->t", a, b)))


def very_weak_residual(
    u: SpaceTimeField,
    data: CauchyData,
    source: np.ndarray | None,
    q: np.ndarray | Potential | None,
    g: np.ndarray,
    basis: SpectralBasis,
    grid: Grid,
) -> float:
    """Transposition-identity defect of a trajectory against a test source.

    Solves the backward problem v'' + A v + q v = G, v(T) = v'(T) = 0 by
    time reversal and compares int <u, G> with
    int <F, v> + <u1, v(0)> - <u0, v'(0)>, normalized by the two sides.
    A trajectory produced by the solvers in this module satisfies the
    identity to roundoff; independently produced fields are checked at face
    value.
    """
    uv = u.values if u.node_set == "interior" else grid.restrict(u.values)
    g = np.asarray(g, dtype=float)
    if g.shape != (grid.n_t + 1, grid.n_int):
        raise ValueError(f"test source shape {g.shape} != {(grid.n_t + 1, grid.n_int)}")

    g_rev = g[::-1].copy()
    zero = CauchyData.zero(grid.n_int)
    if q is None or (not isinstance(q, Potential) and not np.any(q)):
        back = solve_linear_modal(basis, zero, g_rev, grid)
    else:
        back, _ = solve_with_potential_picard(basis, q, zero, g_rev, grid)
    v = time_reverse(back.u)
    v0 = back.u.values[-1]
    vdot0 = -back.udot.values[-1]  # chain rule under t -> T - t

    lhs = _pair_trajectories(uv, g, grid)
    rhs = grid.h * float(data.u1 @ v0) - grid.h * float(data.u0 @ vdot0)
    if source is not None:
        rhs += _pair_trajectories(np.asarray(source, dtype=float), v.values, grid)
    return abs(lhs - rhs) / (abs(lhs) + abs(rhs) + 1e-300)


def distributional_residual(
    u: SpaceTimeField,
    data: CauchyData,
    source: np.ndarray | None,
    q: np.ndarray | Potential | None,
    phi: np.ndarray,
    op: FracOperator,
    grid: Grid,
) -> float:
    """Defect of int u (phi'' + A phi + q phi) against
    int <F, phi> + <u0, phi'(0)> - <u1, phi(0)> for a smooth interior test
    function phi vanishing near t = T.  Second-order differencing in time,
    so the residual of a true solution is O(dt^2)."""
    uv = u.values if u.node_set == "interior" else grid.restrict(u.values)
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (grid.n_t + 1, grid.n_int):
        raise ValueError(f"phi shape {phi.shape} != {(grid.n_t + 1, grid.n_int)}")
    if np.any(phi[-2:] != 0.0):
        raise ValueError("phi must vanish on the last two time slices")
    if isinstance(q, Potential):
        q = q.values

    dt = grid.dt
    d2 = np.empty_like(phi)
    d2[1:-1] = (phi[2:] - 2.0 * phi[1:-1] + phi[:-2]) / dt**2
    d2[0] = (phi[0] - 2.0 * phi[1] + phi[2]) / dt**2
    d2[-1] = (phi[-1] - 2.0 * phi[-2] + phi[-3]) / dt**2

    waveop = d2 + phi @ op.a_int
    if q is not None:
        waveop = waveop + q[None, :] * phi
    lhs = _pair_trajectories(uv, waveop, grid)

    dphi0 = (-3.0 * phi[0] + 4.0 * phi[1] - phi[2]) / (2.0 * dt)
    rhs = grid.h * float(data.u0 @ dphi0) - grid.h * float(data.u1 @ phi[0])
    if source is not None:
        rhs += _pair_trajectories(np.asarray(source, dtype=float), phi, grid)
    return abs(lhs - rhs) / (abs(lhs) + abs(rhs) + 1e-300)


def sup_energy(sol: WaveSolution, basis: SpectralBasis, grid: Grid) -> float:
    """sup_t ( ||u(t)||_L2 + ||u'(t)||_H^-s )."""
    l2 = np.sqrt(grid.h) * np.linalg.norm(sol.u.values, axis=1)
    coeffs = project_l2(sol.udot.values, basis)
    dual = np.sqrt(np.sum(coeffs * coeffs / basis.lambdas[None, :], axis=1))
    return float(np.max(l2 + dual))


def data_energy(
    data: CauchyData,
    source: np.ndarray | None,
    basis: SpectralBasis,
    grid: Grid,
) -> float:
    """||u0||_L2 + ||u1||_H^-s + ||F||_L2(0,T;H^-s)."""
    l2_u0 = np.sqrt(grid.h) * np.linalg.norm(data.u0)
    c1 = project_l2(data.u1, basis)
    dual_u1 = np.sqrt(np.sum(c1 * c1 / basis.lambdas))
    f_term = 0.0
    if source is not None:
        cf = project_l2(np.asarray(source, dtype=float), basis)
        dual_sq = np.sum(cf * cf / basis.lambdas[None, :], axis=1)
        w = trapezoid_weights(grid.n_t, grid.dt)
        f_term = np.sqrt(np.sum(w * dual_sq))
    return float(l2_u0 + dual_u1 + f_term)
