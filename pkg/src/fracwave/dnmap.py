"""Exterior measurement maps.

For an exterior control phi the state u solves the wave equation with
u = phi on the exterior collar; the measurement is the exterior trace of
A u, observed wherever the paired test function is supported.  Pairings are
space-time sums with the package-wide trapezoid weights,

    <L phi, psi> = sum_t w_t h sum_(j exterior) (A u)(t, x_j) psi(t, x_j),

so the control-to-measurement operator is exactly reciprocal under time
reversal at the discrete level: pairing a solution driven by phi against
the reversal of psi equals pairing the solution driven by psi against the
reversal of phi.  The integral identity used for potential recovery pairs
controls with time-reversed tests, which is the default orientation of
`dn_matrix`.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .fields import CauchyData, ExteriorControl, SpaceTimeField, reverse_control
from .forward import (
    WaveSolution,
    lift_exterior,
    solve_linear_modal,
    solve_newmark,
    solve_with_potential_picard,
    trapezoid_weights,
)
from .fracop import FracOperator
from .grid import Grid
from .nonlinearity import PolyNonlinearity, Potential
from .spectral import SpectralBasis

__all__ = [
    "dn_trace",
    "dn_pairing",
    "solve_exterior",
    "dn_matrix",
    "DNMeasurement",
    "grid_signature",
]

FORMAT_TAG = "fracwave-dn/1"


def grid_signature(grid: Grid, s: float) -> str:
    """Hash tying a measurement to its discretization."""
    text = "|".join(
        [
            "fracwave-grid",
            repr(float(grid.x_min)),
            repr(float(grid.x_max)),
            str(grid.n_int),
            str(grid.m_collar),
            str(tuple(grid.w1)),
            str(tuple(grid.w2)),
            repr(float(grid.T)),
            str(grid.n_t),
            f"s={float(s)!r}",
        ]
    )
    return hashlib.sha256(text.encode()).hexdigest()


def dn_trace(u_full: SpaceTimeField, op: FracOperator, grid: Grid) -> np.ndarray:
    """Exterior trace of A u, shape (n_t + 1, n_ext)."""
    if u_full.node_set != "full":
        raise ValueError("dn_trace needs a full-grid trajectory")
    return (u_full.values @ op.a_full)[:, grid.exterior_indices]


def dn_pairing(
    u_full: SpaceTimeField,
    test: ExteriorControl,
    op: FracOperator,
    grid: Grid,
) -> float:
    """Space-time pairing of the measurement trace with an exterior test
    function.  The test's own support does the windowing; no reversal is
    applied here."""
    trace = dn_trace(u_full, op, grid)
    w = trapezoid_weights(grid.n_t, grid.dt)
    return float(grid.h * np.sum(w * np.einsum("tj,tj->t", trace, test.values)))


def solve_exterior(
    control: ExteriorControl,
    op: FracOperator,
    basis: SpectralBasis,
    grid: Grid,
    model: Potential | PolyNonlinearity | np.ndarray | None = None,
) -> tuple[SpaceTimeField, WaveSolution]:
    """State driven by an exterior control with zero Cauchy data.

    Linear models (none, or a potential) run through the lifted modal
    solver; power-type nonlinearities run through the explicit march.
    Returns the full-grid trajectory and the interior displacement/velocity
    pair (velocity of the lifted part only for the explicit route, where it
    is reconstructed by central differences).
    """
    if isinstance(model, PolyNonlinearity):
        full = solve_newmark(op, grid, model=model, control=control)
        interior = grid.restrict(full.values)
        dt = grid.dt
        vel = np.empty_like(interior)
        vel[1:-1] = (interior[2:] - interior[:-2]) / (2.0 * dt)
        vel[0] = (-3.0 * interior[0] + 4.0 * interior[1] - interior[2]) / (2.0 * dt)
        vel[-1] = (3.0 * interior[-1] - 4.0 * interior[-2] + interior[-3]) / (2.0 * dt)
        sol = WaveSolution(
            u=SpaceTimeField(interior, "interior", dt, grid.T),
            udot=SpaceTimeField(vel, "interior", dt, grid.T),
        )
        return full, sol

    lifted = lift_exterior(control, op, grid)
    zero = CauchyData.zero(grid.n_int)
    if model is None:
        sol = solve_linear_modal(basis, zero, lifted.source, grid)
    else:
        sol, _ = solve_with_potential_picard(basis, model, zero, lifted.source, grid)
    full = lifted.reassemble(sol.u.values, grid)
    return full, sol


def dn_matrix(
    op: FracOperator,
    basis: SpectralBasis,
    grid: Grid,
    controls: list[ExteriorControl],
    tests: list[ExteriorControl],
    model: Potential | PolyNonlinearity | np.ndarray | None = None,
    *,
    reverse_tests: bool = True,
) -> np.ndarray:
    """Pairing matrix M[a, b] = <L phi_a, psi_b> (psi time-reversed by
    default, the orientation the recovery identity uses).  One forward
    solve per control, reused across all tests."""
    if reverse_tests:
        tests = [reverse_control(t) for t in tests]
    w = trapezoid_weights(grid.n_t, grid.dt)
    test_block = np.stack([t.values for t in tests])  # (n_te, n_t+1, n_ext)
    out = np.empty((len(controls), len(tests)))
    for a, phi in enumerate(controls):
        full, _ = solve_exterior(phi, op, basis, grid, model)
        trace = dn_trace(full, op, grid)
        out[a] = grid.h * np.einsum("t,btj,tj->b", w, test_block, trace)
    return out


@dataclass(frozen=True)
class DNMeasurement:
    """Serializable pairing matrix with enough context to refuse mismatched
    reuse: operator order, grid signature, control/test descriptors."""

    s: float
    grid_sig: str
    matrix: np.ndarray
    controls_meta: tuple[dict, ...]
    tests_meta: tuple[dict, ...]
    reversed_tests: bool
    version: str = FORMAT_TAG

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2:
            raise ValueError(f"matrix must be 2-d, got shape {m.shape}")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "controls_meta", tuple(dict(d) for d in self.controls_meta))
        object.__setattr__(self, "tests_meta", tuple(dict(d) for d in self.tests_meta))

    def save_json(self, path: str | Path) -> None:
        payload = {
            "format": self.version,
            "s": self.s,
            "grid_sig": self.grid_sig,
            "reversed_tests": self.reversed_tests,
            "controls": list(self.controls_meta),
            "tests": list(self.tests_meta),
            "matrix": [[float(v) for v in row] for row in self.matrix],
        }
        Path(path).write_text(json.dumps(payload, indent=1, sort_keys=True))

    @classmethod
    def load_json(cls, path: str | Path, *, expect_sig: str | None = None) -> "DNMeasurement":
        payload = json.loads(Path(path).read_text())
        version = payload.get("format")
        if version != FORMAT_TAG:
            raise ValueError(f"unsupported measurement format {version!r}")
        if expect_sig is not None and payload["grid_sig"] != expect_sig:
            raise ValueError(
                "measurement was taken on a different discretization: "
                f"{payload['grid_sig'][:12]} != {expect_sig[:12]}"
            )
        return cls(
            s=float(payload["s"]),
            grid_sig=payload["grid_sig"],
            matrix=np.array(payload["matrix"], dtype=float),
            controls_meta=tuple(payload["controls"]),
            tests_meta=tuple(payload["tests"]),
            reversed_tests=bool(payload["reversed_tests"]),
            version=version,
        )
