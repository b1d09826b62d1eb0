"""Dense discretization of the integral fractional Laplacian on the grid.

The operator acts on functions extended by zero outside the grid.  On a
uniform mesh the fractional centered-difference weights

    g_j = (-1)^j Gamma(2s+1) / (Gamma(s-j+1) Gamma(s+j+1))

give the second-order approximation (-Delta)^s u(x_i) ~ h^(-2s) sum_j
g_|i-j| u(x_j).  The generating symbol is (2 - 2 cos theta)^s, so weights of
order s1 and s2 convolve to weights of order s1+s2; orders above one are
assembled by composing the integer 3-point Laplacian stencil with the
fractional part, which on zero-extended data equals the direct order-s
stencil.

For j >= 1 and s in (0, 1) the reflection formula removes the Gamma poles:

    g_j = -sin(pi s)/pi * exp(lgamma(2s+1) + lgamma(j-s) - lgamma(j+s+1))

so every Gamma evaluation happens through log-Gamma on positive arguments
(no overflow for any j).  g_0 = exp(lgamma(2s+1) - 2 lgamma(s+1)).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .grid import Grid

__all__ = [
    "FracOperator",
    "centered_weights",
    "assemble_operator",
    "apply_operator",
    "dump_operator_csv",
    "load_operator_csv",
]

# assembly fails if the symmetrization correction exceeds this (relative)
ASYMMETRY_TOL = 1e-10


def centered_weights(s: float, j_max: int) -> np.ndarray:
    """One-sided fractional centered-difference weights g_0 .. g_j_max.

    Requires 0 < s <= 1; s = 1 returns the exact 3-point stencil [2, -1, 0,
    ...] and is intended as a calibration path against the classical
    Laplacian.  The weights satisfy g_0 > 0 > g_j (j >= 1) and decay like
    j^(-1-2s).
    """
    if not 0.0 < s <= 1.0:
        raise ValueError(f"centered weights need s in (0, 1], got {s}")
    if j_max < 1:
        raise ValueError(f"j_max must be >= 1, got {j_max}")
    w = np.zeros(j_max + 1)
    if s == 1.0:
        w[0] = 2.0
        w[1] = -1.0
        return w
    w[0] = math.exp(gammaln(2 * s + 1) - 2 * gammaln(s + 1))
    j = np.arange(1, j_max + 1)
    log_mag = gammaln(2 * s + 1) + gammaln(j - s) - gammaln(j + s + 1)
    w[1:] = -math.sin(math.pi * s) / math.pi * np.exp(log_mag)
    return w


def _composed_weights(s: float, j_max: int) -> np.ndarray:
    """Weights for arbitrary order s > 0 via stencil composition.

    For s <= 1 this is centered_weights directly.  For s > 1 the fractional
    part alpha = s - floor(s) is convolved with floor(s) copies of the
    3-point integer Laplacian stencil; on zero-extended grid data the
    composition is exact and symmetric by construction.
    """
    k = int(math.floor(s))
    if s <= 1.0:
        return centered_weights(s, j_max)
    alpha = s - k
    if alpha == 0.0:
        raise ValueError(f"integer order s = {s} is not supported")
    # extra reach so the convolution is exact up to offset j_max
    reach = j_max + k
    galpha = centered_weights(alpha, reach)
    two_sided = np.concatenate([galpha[:0:-1], galpha])
    lap = np.array([-1.0, 2.0, -1.0])
    for _ in range(k):
        two_sided = np.convolve(two_sided, lap)
    center = reach + k
    return two_sided[center : center + j_max + 1]


@dataclass(frozen=True)
class FracOperator:
    """Assembled dense operator of order s on a specific grid.

    a_full acts on full-grid vectors (zero exterior extension built in);
    a_int is the interior principal submatrix.  weights holds the composed
    one-sided stencil, asymmetry the recorded symmetrization diagnostic.
    """

    s: float
    h: float
    weights: np.ndarray
    a_full: np.ndarray
    a_int: np.ndarray
    asymmetry: float


def assemble_operator(grid: Grid, s: float) -> FracOperator:
    """Assemble the dense order-s operator for a grid.

    s must be positive and non-integer, except s = 1 which is permitted as
    the classical-Laplacian calibration path.  The assembled interior block
    is symmetric positive definite (checked by Cholesky).
    """
    s = float(s)
    if not s > 0:
        raise ValueError(f"order s must be positive, got {s}")
    if s > 1 and s == math.floor(s):
        raise ValueError(f"integer order s = {s} is rejected; use s = 1 or s not in N")

    offsets = grid.integer_offsets
    j_max = int(offsets[-1] - offsets[0])
    w = _composed_weights(s, j_max)

    scale = grid.h ** (-2.0 * s)
    offs = np.abs(offsets[:, None] - offsets[None, :])
    m = scale * w[offs]
    sym = 0.5 * (m + m.T)
    denom = np.abs(sym).max()
    asym = float(np.abs(m - m.T).max() / denom) if denom > 0 else 0.0
    if asym > ASYMMETRY_TOL:
        raise ValueError(f"operator asymmetry {asym:.3e} exceeds {ASYMMETRY_TOL:.1e}")

    a_int = sym[grid.interior_slice, grid.interior_slice]
    try:
        np.linalg.cholesky(a_int)
    except np.linalg.LinAlgError as exc:
        raise ValueError("interior operator block is not positive definite") from exc

    for arr in (w, sym, a_int):
        arr.setflags(write=False)
    return FracOperator(
        s=s, h=grid.h, weights=w, a_full=sym, a_int=a_int, asymmetry=asym
    )


def apply_operator(op: FracOperator, field: np.ndarray) -> np.ndarray:
    """Apply the full-grid operator to node values (single slice or stacked)."""
    field = np.asarray(field)
    if field.shape[-1] != op.a_full.shape[0]:
        raise ValueError(
            f"field has trailing dimension {field.shape[-1]}, "
            f"operator expects {op.a_full.shape[0]}"
        )
    return field @ op.a_full  # symmetric, so right-multiplication is A @ v


def dump_operator_csv(op: FracOperator, path) -> None:
    """Row-major CSV export with a header carrying s, h and the size."""
    n = op.a_full.shape[0]
    with open(path, "w", encoding="ascii") as f:
        f.write(f"# fracwave operator v1 s={float(op.s)!r} h={float(op.h)!r} n={n}\n")
        for row in op.a_full:
            f.write(",".join(repr(float(v)) for v in row) + "\n")


def load_operator_csv(path) -> tuple[float, float, np.ndarray]:
    """Read back (s, h, matrix) from dump_operator_csv output."""
    with open(path, encoding="ascii") as f:
        header = f.readline()
        if not header.startswith("# fracwave operator v1 "):
            raise ValueError(f"unrecognized operator file header: {header!r}")
        fields = dict(
            kv.split("=", 1) for kv in header.split() if "=" in kv
        )
        s = float(fields["s"])
        h = float(fields["h"])
        n = int(fields["n"])
        rows = [
            np.array([float(v) for v in line.split(",")])
            for line in f
            if line.strip()
        ]
    mat = np.vstack(rows)
    if mat.shape != (n, n):
        raise ValueError(f"operator file body {mat.shape} does not match n={n}")
    return s, h, mat
