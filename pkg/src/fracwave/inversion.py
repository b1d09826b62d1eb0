"""Coefficient recovery from exterior measurements.

Potential recovery rests on the exact discrete integral identity

    <(L_1 - L_2) phi, psi*>  =  sum_t w_t h sum_x (q_1 - q_2)(x)
                                  u_2^phi(t, x) v_1^psi(T - t, x),

where L_i are the measurement maps of the two potentials, psi* is the
time-reversed test function, u_2^phi is the state driven by phi under the
known q_2 and v_1^psi the state driven by psi under the unknown q_1.  The
identity is bilinear in (phi, psi), so pairing matrices taken once over a
control/test basis extend to every fitted superposition for free.  Replacing
v_1 by v_2 linearizes in dq = q_1 - q_2 (a Born step), turning each pairing
into a moment of dq against a product of computable fields.  The moment
system is severely ill-posed (its singular values decay by many orders over
a few dozen modes), so the update is the equilibrated truncated-SVD least
squares solution.  Passes beyond the first repeat the construction around
the updated background while reusing the measured data, a Newton iteration
on the measurement map; the spectral cutoff tightens along a continuation
schedule as the linearization error shrinks.

Expansion recovery peels a polyhomogeneous nonlinearity
f(x, z) = sum_k b_k(x) |z|^(r_k) z from small-amplitude responses.  The
explicit march makes the reaction samples f(x, u^n) recoverable exactly by
residual differencing, so the scaled reaction

    S_k(eps) = [f(x, u_eps) - sum_(j<k) bhat_j |u_eps|^(r_j) u_eps] / eps^(1 + r_k)

converges to b_k |v|^(r_k) v with known contamination powers: eps^(r_j - r_k)
from earlier-stage estimation error and eps^(r_1), eps^(r_(k+1) - r_k) from
nonlinear feedback and the next term.  A small least-squares extrapolation
in exactly those powers removes them; the surviving profile is fitted
nodewise against |v|^(r_k) v on sufficiently excited nodes.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .dnmap import DNMeasurement, dn_trace, solve_exterior
from .fields import ExteriorControl, SpaceTimeField, combine_controls
from .forward import trapezoid_weights
from .fracop import FracOperator
from .grid import Grid
from .nonlinearity import Potential
from .runge import st_norm
from .spectral import SpectralBasis

__all__ = [
    "potential_targets",
    "PotentialRecovery",
    "ConditioningWarning",
    "recover_potential",
    "linear_response",
    "LinearizedSolution",
    "linearized_solution",
    "reaction_from_march",
    "remainder_field",
    "extract_leading_term",
    "fit_homogeneous_coefficient",
    "extrapolate_powers",
    "fit_profile",
    "ExpansionEstimate",
    "recover_expansion",
]


class ConditioningWarning(UserWarning):
    """The moment system was rank-deficient at the requested cutoff; the
    update is the minimum-norm solution on the retained subspace."""


# ---------------------------------------------------------------- potentials


def potential_targets(
    grid: Grid,
    n_space: int,
    n_time: int = 1,
    *,
    overlap: float = 1.5,
) -> np.ndarray:
    """Time-symmetric separable target family, shape
    (n_space * n_time, n_t + 1, n_int).

    Spatial factors are raised-cosine bumps at n_space evenly spaced
    centers (width = overlap * spacing); time factors are sin^2 envelopes
    modulated by cosines of integer frequency about T/2, so every target
    satisfies psi(T - t) = psi(t) exactly on the grid.
    """
    if n_space < 1 or n_time < 1:
        raise ValueError("need at least one spatial and one temporal factor")
    x = grid.interior_coords
    length = grid.x_max - grid.x_min
    centers = grid.x_min + (np.arange(n_space) + 0.5) * length / n_space
    width = overlap * length / n_space
    spatial = []
    for c in centers:
        rho = (x - c) / width
        chi = np.where(np.abs(rho) < 0.5, np.cos(np.pi * rho) ** 2, 0.0)
        spatial.append(chi)

    t = grid.times()
    envelope = np.sin(np.pi * t / grid.T) ** 2
    temporal = []
    for i in range(n_time):
        temporal.append(envelope * np.cos(2.0 * np.pi * i * (t - grid.T / 2) / grid.T))

    out = np.empty((n_space * n_time, grid.n_t + 1, grid.n_int))
    k = 0
    for tau in temporal:
        for chi in spatial:
            out[k] = tau[:, None] * chi[None, :]
            k += 1
    return out


def _tsvd_solve(
    rows: np.ndarray, rhs: np.ndarray, cutoff: float
) -> tuple[np.ndarray, float, int]:
    """Equilibrated truncated-SVD least squares.

    Rows are scaled to unit norm (right-hand entries alongside), singular
    values below cutoff * s_max are discarded, and the minimum-norm solution
    on the retained subspace is returned with the relative residual of the
    equilibrated system and the retained rank.
    """
    norms = np.linalg.norm(rows, axis=1)
    live = norms > 0.0
    if not live.any():
        raise ValueError("moment system has no nonzero rows")
    r = rows[live] / norms[live, None]
    m = rhs[live] / norms[live]
    u, sv, vt = np.linalg.svd(r, full_matrices=False)
    rank = int(np.sum(sv >= cutoff * sv[0])) if sv[0] > 0.0 else 0
    if rank == 0:
        raise ValueError("moment system vanished below the spectral cutoff")
    sol = vt[:rank].T @ ((u[:, :rank].T @ m) / sv[:rank])
    resid = float(np.linalg.norm(r @ sol - m) / (np.linalg.norm(m) + 1e-300))
    return sol, resid, rank


def _cutoff_schedule(
    cutoff: float | tuple[float, ...] | list[float], passes: int | None
) -> tuple[float, ...]:
    if np.isscalar(cutoff):
        return (float(cutoff),) * (passes if passes is not None else 1)
    sched = tuple(float(c) for c in cutoff)
    if not sched:
        raise ValueError("cutoff schedule is empty")
    if passes is None or passes == len(sched):
        return sched
    if passes < len(sched):
        return sched[:passes]
    return sched + (sched[-1],) * (passes - len(sched))


@dataclass(frozen=True)
class PotentialRecovery:
    """Recovered potential and per-pass diagnostics.

    All per-pass tuples cover accepted passes only; a trial update that
    fails to shrink the data mismatch is discarded and stops the iteration.
    data_misfits holds the relative measurement mismatch before pass 1 and
    after every accepted pass (length = passes + 1, strictly decreasing).
    control_misfits / test_misfits are the worst relative Runge residuals of
    the target fits; in pairs mode no fit happens and they hold nan.
    """

    q_est: np.ndarray
    increments: tuple[np.ndarray, ...]
    moment_residuals: tuple[float, ...]  # ||m - M dq|| / ||m|| per pass
    ranks: tuple[int, ...]  # retained spectral rank per pass
    cutoffs: tuple[float, ...]
    data_misfits: tuple[float, ...]
    control_misfits: tuple[float, ...]
    test_misfits: tuple[float, ...]
    mode: str


def recover_potential(
    measured: DNMeasurement | np.ndarray,
    controls: list[ExteriorControl],
    tests: list[ExteriorControl],
    op: FracOperator,
    basis: SpectralBasis,
    grid: Grid,
    q_start: np.ndarray | Potential | None = None,
    *,
    targets: np.ndarray | None = None,
    alpha: float = 1e-8,
    cutoff: float | tuple[float, ...] = (1e-2, 1e-3, 1e-4, 1e-5),
    mode: str = "pairs",
    passes: int | None = None,
    dictionary: np.ndarray | None = None,
) -> PotentialRecovery:
    """Reconstruct a potential from one measured pairing matrix.

    measured holds <L_1 phi_a, psi_b*> over the control/test basis (a
    DNMeasurement with reversed tests, or the raw matrix).  Mode 'pairs'
    (the default) uses the raw basis pairings directly: moments are the
    entries of the data mismatch and rows the products of computed basis
    states, which carries the entire measurement with no fitting stage.
    The fitted modes recombine the same information through time-symmetric
    targets: 'achieved' builds rows from the fields the fits actually reach
    (exact up to the Born step), 'ideal' from the targets themselves
    (additionally charged with the Runge misfit).  cutoff is the relative
    spectral cutoff of the truncated-SVD update, one value per pass
    (a scalar is repeated; a schedule shorter than passes is extended with
    its last value).  dictionary, when given, restricts the update to its
    span (rows = nodal profiles).
    """
    if isinstance(measured, DNMeasurement):
        if not measured.reversed_tests:
            raise ValueError("measurement must pair against time-reversed tests")
        d_meas = measured.matrix
    else:
        d_meas = np.asarray(measured, dtype=float)
    if d_meas.shape != (len(controls), len(tests)):
        raise ValueError(
            f"measured matrix is {d_meas.shape}, basis is "
            f"{(len(controls), len(tests))}"
        )
    if mode not in ("pairs", "achieved", "ideal"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode != "pairs":
        if targets is None:
            raise ValueError(f"mode {mode!r} needs a target family")
        targets = np.asarray(targets, dtype=float)
        if targets.ndim != 3 or targets.shape[1:] != (grid.n_t + 1, grid.n_int):
            raise ValueError("targets must be (n_targets, n_t + 1, n_int)")
        sym_gap = float(np.max(np.abs(targets - targets[:, ::-1, :])))
        if sym_gap > 1e-12 * max(float(np.max(np.abs(targets))), 1e-300):
            raise ValueError("targets must be symmetric about T/2")
    schedule = _cutoff_schedule(cutoff, passes)
    if any(c <= 0.0 or c >= 1.0 for c in schedule):
        raise ValueError(f"cutoffs must lie in (0, 1), got {schedule}")

    if isinstance(q_start, Potential):
        q_start = q_start.values
    q2 = np.zeros(grid.n_int) if q_start is None else np.array(q_start, dtype=float)

    dic = None
    if dictionary is not None:
        dic = np.asarray(dictionary, dtype=float)
        if dic.ndim != 2 or dic.shape[1] != grid.n_int:
            raise ValueError("dictionary must be (n_atoms, n_int)")

    w = trapezoid_weights(grid.n_t, grid.dt)
    rev_block = np.stack([t.values[::-1] for t in tests])  # (n_te, n_t+1, n_ext)

    def _bundle(q_model) -> tuple[np.ndarray, np.ndarray]:
        """Control states and their pairing matrix at one background, from
        the same solves."""
        states = np.empty((len(controls), grid.n_t + 1, grid.n_int))
        d_mat = np.empty((len(controls), len(tests)))
        for a, phi in enumerate(controls):
            full, sol = solve_exterior(phi, op, basis, grid, q_model)
            states[a] = sol.u.values
            trace = dn_trace(full, op, grid)
            d_mat[a] = grid.h * np.einsum("t,btj,tj->b", w, rev_block, trace)
        return states, d_mat

    increments: list[np.ndarray] = []
    moment_residuals: list[float] = []
    ranks: list[int] = []
    accepted_cutoffs: list[float] = []
    control_misfits: list[float] = []
    test_misfits: list[float] = []

    denom = np.linalg.norm(d_meas) + 1e-300
    states_u, d_model = _bundle(q2 if np.any(q2) else None)
    delta = d_meas - d_model
    data_misfits = [float(np.linalg.norm(delta) / denom)]

    for cut in schedule:
        q_model = q2 if np.any(q2) else None
        states_v = np.empty((len(tests), grid.n_t + 1, grid.n_int))
        for b, psi in enumerate(tests):
            _, sol = solve_exterior(psi, op, basis, grid, q_model)
            states_v[b] = sol.u.values[::-1]

        if mode == "pairs":
            moments = delta.reshape(-1)
            rows = grid.h * np.einsum(
                "atx,btx,t->abx", states_u, states_v, w
            ).reshape(len(controls) * len(tests), grid.n_int)
            c_mis = d_mis = float("nan")
        else:
            c_fit, c_ach, c_mis = _fit_targets(states_u, targets, alpha, grid, w)
            d_fit, d_ach, d_mis = _fit_targets(states_v, targets, alpha, grid, w)
            moments = np.einsum("Aa,ab,Bb->AB", c_fit, delta, d_fit).reshape(-1)
            left, right = (c_ach, d_ach) if mode == "achieved" else (targets, targets)
            n_tar = targets.shape[0]
            rows = grid.h * np.einsum("Atx,Btx,t->ABx", left, right, w).reshape(
                n_tar * n_tar, grid.n_int
            )

        if dic is not None:
            gamma, resid, rank = _tsvd_solve(rows @ dic.T, moments, cut)
            dq = dic.T @ gamma
        else:
            dq, resid, rank = _tsvd_solve(rows, moments, cut)

        q_trial = q2 + dq
        states_trial, d_trial = _bundle(q_trial if np.any(q_trial) else None)
        misfit_trial = float(np.linalg.norm(d_meas - d_trial) / denom)
        if misfit_trial >= data_misfits[-1]:
            break  # update would not improve the data fit: discard and stop

        q2 = q_trial
        states_u, d_model = states_trial, d_trial
        delta = d_meas - d_model
        data_misfits.append(misfit_trial)
        increments.append(dq)
        moment_residuals.append(resid)
        ranks.append(rank)
        accepted_cutoffs.append(cut)
        control_misfits.append(c_mis)
        test_misfits.append(d_mis)

    n_unknowns = dic.shape[0] if dic is not None else grid.n_int
    if ranks and max(ranks) < n_unknowns:
        warnings.warn(
            f"moment system rank-deficient (retained {max(ranks)} of "
            f"{n_unknowns} directions); the update is the minimum-norm "
            "solution on the retained subspace",
            ConditioningWarning,
            stacklevel=2,
        )

    return PotentialRecovery(
        q_est=q2,
        increments=tuple(increments),
        moment_residuals=tuple(moment_residuals),
        ranks=tuple(ranks),
        cutoffs=tuple(accepted_cutoffs),
        data_misfits=tuple(data_misfits),
        control_misfits=tuple(control_misfits),
        test_misfits=tuple(test_misfits),
        mode=mode,
    )


def _fit_targets(
    states: np.ndarray,
    targets: np.ndarray,
    alpha: float,
    grid: Grid,
    w: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Tikhonov-fit every target over the given states.

    Returns coefficients (n_targets, n_states), achieved fields, and the
    worst relative misfit."""
    gram = grid.h * np.einsum("atx,btx,t->ab", states, states, w)
    rhs = grid.h * np.einsum("atx,Btx,t->aB", states, targets, w)
    system = cho_factor(gram + alpha * np.eye(gram.shape[0]))
    coeffs = cho_solve(system, rhs).T  # (n_targets, n_states)
    achieved = np.einsum("Ba,atx->Btx", coeffs, states)
    worst = 0.0
    for k in range(targets.shape[0]):
        num = st_norm(achieved[k] - targets[k], grid)
        den = st_norm(targets[k], grid) + 1e-300
        worst = max(worst, num / den)
    return coeffs, achieved, worst


# ------------------------------------------------------------- nonlinearity


def linear_response(
    control: ExteriorControl,
    op: FracOperator,
    basis: SpectralBasis,
    grid: Grid,
    *,
    route: str = "march",
) -> np.ndarray:
    """Interior trajectory of the linear (f = 0) problem driven by the
    control: the first-order term of the small-amplitude expansion.

    route 'march' uses the explicit stepper, matching the discretization of
    marched measurements exactly, so remainders and peeling stages see no
    integrator mismatch (for dyadic amplitudes the linear march scales
    bitwise).  route 'modal' uses the spectral solver.
    """
    if route == "march":
        from .forward import solve_newmark

        full = solve_newmark(op, grid, control=control)
        return grid.restrict(full.values)
    if route == "modal":
        _, sol = solve_exterior(control, op, basis, grid, None)
        return sol.u.values
    raise ValueError(f"unknown route {route!r} (march | modal)")


@dataclass(frozen=True)
class LinearizedSolution:
    """Small-amplitude expansion of one semilinear solve: interior
    trajectories of the measured state and the linear response, their
    mismatch u_eps - eps v, and its sup-in-time discrete Sobolev norm."""

    u_eps: np.ndarray
    v: np.ndarray
    remainder: np.ndarray
    remainder_norm: float


def linearized_solution(
    model,
    control: ExteriorControl,
    eps: float,
    op: FracOperator,
    basis: SpectralBasis,
    grid: Grid,
) -> LinearizedSolution:
    """Expand the response to eps * control about the linear problem.

    Both the semilinear state and the linear response come from the
    explicit march, so the remainder carries no integrator mismatch; for a
    model without nonlinear terms it is zero to roundoff (exactly zero for
    dyadic eps).  The reported norm is sup over time of the discrete
    Sobolev norm sqrt(h r (A_int + I) r).
    """
    from .forward import solve_newmark

    if eps < 0.0:
        raise ValueError(f"amplitude must be nonnegative, got {eps}")
    v = linear_response(control, op, basis, grid)
    scaled = combine_controls([control], [float(eps)])
    full = solve_newmark(op, grid, model=model, control=scaled)
    u_eps = grid.restrict(full.values)
    remainder = u_eps - eps * v
    quad = np.einsum("tx,xy,ty->t", remainder, op.a_int, remainder)
    mass = np.einsum("tx,tx->t", remainder, remainder)
    norm = float(np.sqrt(grid.h * np.max(quad + mass)))
    return LinearizedSolution(u_eps=u_eps, v=v, remainder=remainder, remainder_norm=norm)


def reaction_from_march(
    u_full: SpaceTimeField,
    op: FracOperator,
    grid: Grid,
    source: np.ndarray | None = None,
) -> np.ndarray:
    """Bulk reaction samples implied by a central-difference trajectory.

    For a trajectory produced by the explicit march the returned rows equal
    q u + f(x, u) at steps n = 1 .. n_t - 1 exactly, because the march
    defined u^(n+1) through the same relation.  Endpoint rows are not
    recoverable and are omitted.
    """
    if u_full.node_set != "full":
        raise ValueError("reaction differencing needs the full-grid trajectory")
    v = u_full.values
    dt = grid.dt
    interior = grid.interior_slice
    d2 = (v[2:, interior] - 2.0 * v[1:-1, interior] + v[:-2, interior]) / dt**2
    stiff = (v[1:-1] @ op.a_full)[:, interior]
    out = -d2 - stiff
    if source is not None:
        out = out + np.asarray(source, dtype=float)[1:-1]
    return out


def remainder_field(
    measure: Callable[[ExteriorControl], SpaceTimeField],
    control: ExteriorControl,
    eps: float,
    op: FracOperator,
    basis: SpectralBasis,
    grid: Grid,
    *,
    linear: np.ndarray | None = None,
) -> np.ndarray:
    """Interior remainder u_eps - eps v of the measured response against the
    scaled linear response; its space-time norm scales like eps^(1 + r_1)."""
    if linear is None:
        linear = linear_response(control, op, basis, grid)
    u_full = measure(combine_controls([control], [eps]))
    return grid.restrict(u_full.values) - eps * linear


def extract_leading_term(
    measure: Callable[[ExteriorControl], SpaceTimeField],
    control: ExteriorControl,
    eps_ladder: tuple[float, ...],
    r1: float,
    op: FracOperator,
    basis: SpectralBasis,
    grid: Grid,
    *,
    r2: float | None = None,
) -> np.ndarray:
    """Leading nonlinearity profile f_1(x, v(x, t)) from an amplitude ladder.

    Scales the marched reaction of each measured response by eps^-(1 + r1);
    Richardson-extrapolates in eps^(r2 - r1) when the next exponent is
    declared, otherwise returns the smallest-amplitude sample.  Rows cover
    time steps 1 .. n_t - 1 (reaction differencing cannot see the
    endpoints).  Scaled samples that diverge as the amplitude shrinks mean
    the ladder has fallen below the solver noise floor and raise.
    """
    eps = np.asarray(eps_ladder, dtype=float)
    if eps.ndim != 1 or eps.size < 2:
        raise ValueError("ladder needs at least two amplitudes")
    if np.any(eps <= 0.0) or np.any(np.diff(eps) >= 0.0):
        raise ValueError("ladder must be positive and strictly decreasing")
    scaled = np.empty((eps.size, grid.n_t - 1, grid.n_int))
    norms = np.empty(eps.size)
    for i, e in enumerate(eps):
        u_full = measure(combine_controls([control], [float(e)]))
        scaled[i] = reaction_from_march(u_full, op, grid) / e ** (1.0 + r1)
        norms[i] = np.linalg.norm(scaled[i])
    if np.all(np.diff(norms) > 0.0) and norms[-1] > 10.0 * max(norms[0], 1e-300):
        pretty = ", ".join(f"{n:.3e}" for n in norms)
        raise ValueError(
            f"scaled reactions diverge as the amplitude shrinks (noise floor "
            f"exceeded): norms [{pretty}] over ladder {tuple(float(e) for e in eps)}"
        )
    if r2 is None:
        return scaled[-1]
    if r2 <= r1:
        raise ValueError(f"next exponent {r2} must exceed the leading one {r1}")
    limit, _, _ = extrapolate_powers(eps, scaled, (0.0, float(r2) - float(r1)))
    return limit


def fit_homogeneous_coefficient(
    samples: np.ndarray,
    v_rows: np.ndarray,
    r: float,
    *,
    v_min: float | None = None,
    floor_rel: float = 1e-3,
) -> tuple[np.ndarray, np.ndarray]:
    """Coefficient profile b(x) from samples of b(x) |v|^r v.

    Accepts any number of leading axes (solution families, time rows);
    v_min is an absolute excitation threshold and overrides floor_rel,
    which is relative to the largest excitation.  Nodes never excited
    above the threshold inherit the nearest informative estimate and are
    flagged False in the returned mask.
    """
    samples = np.asarray(samples, dtype=float)
    v_rows = np.asarray(v_rows, dtype=float)
    if samples.shape != v_rows.shape:
        raise ValueError("sample and response shapes differ")
    flat_s = samples.reshape(-1, samples.shape[-1])
    flat_v = v_rows.reshape(-1, v_rows.shape[-1])
    if v_min is not None:
        vmax = float(np.max(np.abs(flat_v)))
        if vmax == 0.0:
            raise ValueError("response family is identically zero")
        floor_rel = float(v_min) / vmax
    return fit_profile(flat_s, flat_v, r, floor_rel=floor_rel)


def extrapolate_powers(
    eps_values: np.ndarray,
    samples: np.ndarray,
    powers: tuple[float, ...],
) -> tuple[np.ndarray, np.ndarray, float]:
    """Least-squares fit samples(eps) ~ sum_p c_p eps^p, elementwise over
    the trailing axes; returns (c_0, rms residual, condition of the design).

    powers must contain 0; that coefficient is the extrapolated limit.
    """
    eps_values = np.asarray(eps_values, dtype=float)
    if 0.0 not in powers:
        raise ValueError("powers must include 0 (the limit term)")
    if len(set(powers)) != len(powers):
        raise ValueError(f"duplicate powers in {powers}")
    if eps_values.ndim != 1 or eps_values.size < len(powers):
        raise ValueError(
            f"need at least {len(powers)} ladder points for powers {powers}"
        )
    if samples.shape[0] != eps_values.size:
        raise ValueError("samples leading axis must match the ladder")
    design = np.stack([eps_values**p for p in powers], axis=1)
    flat = samples.reshape(eps_values.size, -1)
    coef, _, _, sing = np.linalg.lstsq(design, flat, rcond=None)
    resid = design @ coef - flat
    rms = np.sqrt(np.mean(resid**2, axis=0)).reshape(samples.shape[1:])
    limit = coef[powers.index(0.0)].reshape(samples.shape[1:])
    cond = float(sing[0] / sing[-1]) if sing[-1] > 0 else np.inf
    return limit, rms, cond


def fit_profile(
    s_limit: np.ndarray,
    v_rows: np.ndarray,
    r: float,
    *,
    floor_rel: float = 1e-3,
) -> tuple[np.ndarray, np.ndarray]:
    """Nodewise least squares for b(x) in s_limit ~ b(x) |v|^r v.

    Rows where |v| falls below floor_rel * max|v| carry no information and
    are masked out; nodes with no informative rows inherit the estimate of
    the nearest informative node and are flagged False in the mask.
    """
    if s_limit.shape != v_rows.shape:
        raise ValueError("sample and response shapes differ")
    g = np.abs(v_rows) ** r * v_rows
    active = np.abs(v_rows) >= floor_rel * np.max(np.abs(v_rows))
    gsq = np.where(active, g * g, 0.0).sum(axis=0)
    sg = np.where(active, s_limit * g, 0.0).sum(axis=0)
    informative = gsq > 0.0
    b = np.zeros(v_rows.shape[1])
    b[informative] = sg[informative] / gsq[informative]
    if not informative.all():
        if not informative.any():
            raise ValueError("control never excites the domain above the floor")
        idx = np.where(informative)[0]
        for j in np.where(~informative)[0]:
            b[j] = b[idx[np.argmin(np.abs(idx - j))]]
    return b, informative


@dataclass(frozen=True)
class ExpansionEstimate:
    """Per-term coefficient profiles with self-reported accuracy.

    errors holds, for each term, the max-norm discrepancy between fits on
    the even- and odd-indexed sub-ladders; resolved marks terms whose
    extrapolation had enough ladder points.
    """

    exponents: tuple[float, ...]
    coeffs: np.ndarray  # (n_terms, n_int)
    errors: tuple[float, ...]
    masks: np.ndarray  # (n_terms, n_int) bool
    resolved: tuple[bool, ...]
    extrap_conds: tuple[float, ...]
    eps_ladder: tuple[float, ...]


def recover_expansion(
    measure: Callable[[ExteriorControl], SpaceTimeField],
    control: ExteriorControl,
    exponents: tuple[float, ...],
    op: FracOperator,
    basis: SpectralBasis,
    grid: Grid,
    *,
    eps_ladder: tuple[float, ...],
    floor_rel: float = 1e-3,
) -> ExpansionEstimate:
    """Peel the coefficient profiles of a polyhomogeneous nonlinearity from
    measured small-amplitude responses.

    measure maps an exterior control to the full-grid trajectory of the
    unknown model (for synthetic studies, wrap the explicit march).  The
    stage-k extrapolation basis is {0} + {r_j - r_k : j < k} + {r_1} +
    {r_(k+1) - r_k}; a stage whose basis outgrows the ladder is reported
    unresolved (zero profile, error inf) rather than extrapolated badly.
    """
    exps = tuple(float(r) for r in exponents)
    if any(b <= a for a, b in zip(exps, exps[1:])) or not exps:
        raise ValueError(f"exponents must be strictly increasing, got {exps}")
    eps_arr = np.asarray(sorted(eps_ladder, reverse=True), dtype=float)
    if eps_arr.size < 2 or np.any(eps_arr <= 0):
        raise ValueError("eps_ladder needs at least two positive values")

    v = linear_response(control, op, basis, grid)
    v_rows = v[1:-1]

    reactions = np.empty((eps_arr.size, grid.n_t - 1, grid.n_int))
    states = np.empty_like(reactions)
    for i, eps in enumerate(eps_arr):
        u_full = measure(combine_controls([control], [float(eps)]))
        reactions[i] = reaction_from_march(u_full, op, grid)
        states[i] = grid.restrict(u_full.values)[1:-1]

    n_terms = len(exps)
    coeffs = np.zeros((n_terms, grid.n_int))
    masks = np.zeros((n_terms, grid.n_int), dtype=bool)
    errors: list[float] = []
    resolved: list[bool] = []
    conds: list[float] = []

    peeled = reactions.copy()
    for k, r_k in enumerate(exps):
        powers = {0.0, exps[0]}
        powers.update(r_j - r_k for r_j in exps[:k])
        if k + 1 < n_terms:
            powers.add(exps[k + 1] - r_k)
        powers = tuple(sorted(powers))
        if eps_arr.size < len(powers):
            errors.append(np.inf)
            resolved.append(False)
            conds.append(np.inf)
            continue

        scaled = peeled / (eps_arr ** (1.0 + r_k))[:, None, None]
        limit, _, cond = extrapolate_powers(eps_arr, scaled, powers)
        b_k, mask = fit_profile(limit, v_rows, r_k, floor_rel=floor_rel)

        err = np.inf
        even, odd = np.arange(0, eps_arr.size, 2), np.arange(1, eps_arr.size, 2)
        if min(even.size, odd.size) >= len(powers):
            b_parts = []
            for sel in (even, odd):
                lim_s, _, _ = extrapolate_powers(eps_arr[sel], scaled[sel], powers)
                b_s, _ = fit_profile(lim_s, v_rows, r_k, floor_rel=floor_rel)
                b_parts.append(b_s)
            err = float(np.max(np.abs(b_parts[0] - b_parts[1])))

        coeffs[k] = b_k
        masks[k] = mask
        errors.append(err)
        resolved.append(True)
        conds.append(cond)

        term = b_k[None, None, :] * np.abs(states) ** r_k * states
        peeled = peeled - term

    return ExpansionEstimate(
        exponents=exps,
        coeffs=coeffs,
        errors=tuple(errors),
        masks=masks,
        resolved=tuple(resolved),
        extrap_conds=tuple(conds),
        eps_ladder=tuple(float(e) for e in eps_arr),
    )
