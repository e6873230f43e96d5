"""Finite-volume discretization and direct solve of the stationary Fokker-Planck
equation  d2_ij(a^{ij} u) - d_i(V^i u) = 0  with no-flux (reflecting) boundaries.

The operator is assembled in divergence form with exponentially-fitted
(Scharfetter-Gummel) face fluxes for the diagonal diffusion, which makes the
scheme exact for 1D constant-coefficient drift-diffusion and keeps all
nearest-neighbor transition rates non-negative. Mixed-derivative terms enter
through centered 4-point corner stencils on the faces. The assembled matrix M
acts on cell masses w (so M is generator-like: column sums vanish) and the
stationary measure is the unit-mass null vector of M.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    NoConvergenceError,
    SingularOperatorError,
    StencilOverflowError,
)
from .fields import DiffusionField, DiscreteMeasure, NullFamilySchedule, VectorField, normalized_measure
from .grid import Grid1D, Grid2D

__all__ = [
    "bernoulli",
    "DiscreteOperator",
    "SolveReport",
    "assemble",
    "assemble_1d",
    "solve_stationary",
    "solve_family",
]

Z_MAX = 700.0
RESIDUAL_RTOL = 1e-10
UNIQUENESS_TOL = 1e-6


def bernoulli(z):
    """B(z) = z / (e^z - 1), the exponential-fitting weight; B(0) = 1.

    Satisfies B(-z) = B(z) + z and B(z) > 0 for all finite z.
    """
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    small = np.abs(z) < 1e-12
    out[small] = 1.0 - 0.5 * z[small]
    pos = ~small & (z > 0)
    neg = ~small & (z < 0)
    zp, zn = z[pos], z[neg]
    out[pos] = zp * np.exp(-zp) / (-np.expm1(-zp))
    out[neg] = zn / np.expm1(zn)
    return out


@dataclass(frozen=True)
class DiscreteOperator:
    """Sparse generator-like matrix M with (M w)_cell ~ cell-integrated L_A u."""

    grid: Grid1D | Grid2D
    matrix: sp.csr_matrix
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def column_sum_defect(self) -> float:
        return float(np.abs(np.asarray(self.matrix.sum(axis=0)).ravel()).max())

    def norm_inf(self) -> float:
        return float(np.abs(self.matrix).sum(axis=1).max())


@dataclass
class SolveReport:
    residual: float
    mass_defect: float
    min_weight: float
    clipped_mass: float
    method: str
    iterations: int
    wall_time: float
    meta: dict = field(default_factory=dict)


def _check_overflow(z, what):
    amax = float(np.abs(z).max()) if z.size else 0.0
    if amax > Z_MAX:
        idx = np.unravel_index(int(np.abs(z).argmax()), z.shape)
        raise StencilOverflowError((what, idx), amax)


def _sg_rates(a_f, v_f, h):
    """Transition rates (into-left, into-right) across a face, per unit mass.

    Face flux F = a du/dx - v u discretized as (a/h)[B(z) u_R - B(-z) u_L]
    with z = v h / a; in mass variables the pair of exchange rates is
    rate(R->L) = a B(z)/h^2 and rate(L->R) = a B(-z)/h^2, both >= 0.
    """
    z = v_f * h / a_f
    rate_rl = a_f * bernoulli(z) / h**2
    rate_lr = a_f * bernoulli(-z) / h**2
    return z, rate_rl, rate_lr


def assemble_1d(v: np.ndarray, a: np.ndarray, grid: Grid1D) -> DiscreteOperator:
    """1D stationary operator for drift samples v(x) and scalar diffusion a(x)."""
    v = np.asarray(v, dtype=float)
    a = np.asarray(a, dtype=float)
    if v.shape != (grid.nx,) or a.shape != (grid.nx,):
        raise ValueError("v and a must be sampled per cell")
    if np.any(a <= 0):
        raise ValueError("diffusion must be positive")
    h = grid.hx
    a_f = 0.5 * (a[:-1] + a[1:])
    v_f = 0.5 * (v[:-1] + v[1:]) - (a[1:] - a[:-1]) / h
    z, rate_rl, rate_lr = _sg_rates(a_f, v_f, h)
    _check_overflow(z, "x-face")

    n = grid.nx
    left = np.arange(n - 1)
    right = left + 1
    rows = np.concatenate([left, left, right, right])
    cols = np.concatenate([right, left, left, right])
    vals = np.concatenate([rate_rl, -rate_lr, rate_lr, -rate_rl])
    m = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    return DiscreteOperator(grid, m, {"max_abs_z": float(np.abs(z).max())})


def assemble(v: VectorField, a: DiffusionField, grid: Grid2D) -> DiscreteOperator:
    """2D stationary operator; no-flux truncation boundary."""
    if v.grid != grid or a.grid != grid:
        raise ValueError("field grids must match the assembly grid")
    nx, ny = grid.nx, grid.ny
    hx, hy = grid.hx, grid.hy
    idx = np.arange(nx * ny).reshape(nx, ny)
    rows, cols, vals = [], [], []

    def add(r, c, val):
        rows.append(np.asarray(r).ravel())
        cols.append(np.asarray(c).ravel())
        vals.append(np.asarray(val).ravel())

    def add_pair(c_lo, c_hi, rate_hilo, rate_lohi):
        # exchange across a shared face: mass conservation pairs the entries
        add(c_lo, c_hi, rate_hilo)
        add(c_lo, c_lo, -rate_lohi)
        add(c_hi, c_lo, rate_lohi)
        add(c_hi, c_hi, -rate_hilo)

    # --- x-faces: SG flux for d_x(a11 u) - Vx u
    aL, aR = a.a11[:-1, :], a.a11[1:, :]
    a_f = 0.5 * (aL + aR)
    v_f = 0.5 * (v.vx[:-1, :] + v.vx[1:, :]) - (aR - aL) / hx
    zx, rate_rl, rate_lr = _sg_rates(a_f, v_f, hx)
    _check_overflow(zx, "x-face")
    add_pair(idx[:-1, :], idx[1:, :], rate_rl, rate_lr)

    # --- y-faces: SG flux for d_y(a22 u) - Vy u
    aB, aT = a.a22[:, :-1], a.a22[:, 1:]
    a_f = 0.5 * (aB + aT)
    v_f = 0.5 * (v.vy[:, :-1] + v.vy[:, 1:]) - (aT - aB) / hy
    zy, rate_tb, rate_bt = _sg_rates(a_f, v_f, hy)
    _check_overflow(zy, "y-face")
    add_pair(idx[:, :-1], idx[:, 1:], rate_tb, rate_bt)

    # --- mixed term d_y(a12 u) on x-faces and d_x(a12 u) on y-faces
    if np.any(a.a12 != 0.0):
        s = a.a12
        c = 1.0 / (4.0 * hx * hy)
        cf = 1.0 / (2.0 * hx * hy)  # one-sided variant at boundary rows/cols

        def add_mixed(face_lo, face_hi, stencil):
            # stencil: list of (cell_index_array, coefficient_array); the face
            # value enters cell_lo with + and cell_hi with - so column sums
            # cancel exactly.
            for cells, coeff in stencil:
                add(face_lo, cells, coeff)
                add(face_hi, cells, -coeff)

        # x-faces between (i,j) and (i+1,j): d_y(s u) at the face
        # centered rows 1..ny-2
        fl, fh = idx[:-1, 1:-1], idx[1:, 1:-1]
        add_mixed(fl, fh, [
            (idx[:-1, 2:], c * s[:-1, 2:]),
            (idx[1:, 2:], c * s[1:, 2:]),
            (idx[:-1, :-2], -c * s[:-1, :-2]),
            (idx[1:, :-2], -c * s[1:, :-2]),
        ])
        # one-sided at j = 0 (forward) and j = ny-1 (backward)
        fl, fh = idx[:-1, 0], idx[1:, 0]
        add_mixed(fl, fh, [
            (idx[:-1, 1], cf * s[:-1, 1]),
            (idx[1:, 1], cf * s[1:, 1]),
            (idx[:-1, 0], -cf * s[:-1, 0]),
            (idx[1:, 0], -cf * s[1:, 0]),
        ])
        fl, fh = idx[:-1, -1], idx[1:, -1]
        add_mixed(fl, fh, [
            (idx[:-1, -1], cf * s[:-1, -1]),
            (idx[1:, -1], cf * s[1:, -1]),
            (idx[:-1, -2], -cf * s[:-1, -2]),
            (idx[1:, -2], -cf * s[1:, -2]),
        ])

        # y-faces between (i,j) and (i,j+1): d_x(s u) at the face
        fl, fh = idx[1:-1, :-1], idx[1:-1, 1:]
        add_mixed(fl, fh, [
            (idx[2:, :-1], c * s[2:, :-1]),
            (idx[2:, 1:], c * s[2:, 1:]),
            (idx[:-2, :-1], -c * s[:-2, :-1]),
            (idx[:-2, 1:], -c * s[:-2, 1:]),
        ])
        fl, fh = idx[0, :-1], idx[0, 1:]
        add_mixed(fl, fh, [
            (idx[1, :-1], cf * s[1, :-1]),
            (idx[1, 1:], cf * s[1, 1:]),
            (idx[0, :-1], -cf * s[0, :-1]),
            (idx[0, 1:], -cf * s[0, 1:]),
        ])
        fl, fh = idx[-1, :-1], idx[-1, 1:]
        add_mixed(fl, fh, [
            (idx[-1, :-1], cf * s[-1, :-1]),
            (idx[-1, 1:], cf * s[-1, 1:]),
            (idx[-2, :-1], -cf * s[-2, :-1]),
            (idx[-2, 1:], -cf * s[-2, 1:]),
        ])

    m = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(nx * ny, nx * ny),
    ).tocsr()
    meta = {
        "max_abs_z": float(max(np.abs(zx).max(), np.abs(zy).max())),
        "anisotropy_cap": 0.25,
        "min_lambda_over_frob": float((a.lam / a.frob).min()),
    }
    return DiscreteOperator(grid, m, meta)


def _bordered_solve(m: sp.csr_matrix, row: int) -> np.ndarray:
    """Replace one balance row with the mass constraint and solve directly."""
    n = m.shape[0]
    m2 = m.tolil(copy=True)
    m2[row, :] = 1.0
    b = np.zeros(n)
    b[row] = 1.0
    return spla.spsolve(m2.tocsc(), b)


def _inverse_power(m: sp.csr_matrix, tol: float, maxit: int = 60):
    """Shifted inverse power iteration fallback for the null vector."""
    n = m.shape[0]
    scale = float(np.abs(m).sum(axis=1).max())
    shift = 1e-13 * scale
    lu = spla.splu((m - shift * sp.identity(n, format="csr")).tocsc())
    w = np.full(n, 1.0 / n)
    history = []
    for k in range(maxit):
        w = lu.solve(w)
        w = w / np.abs(w).sum()
        res = float(np.abs(m @ w).max())
        history.append(res)
        if res <= tol:
            return w / w.sum(), k + 1, history
    raise NoConvergenceError(history)


def solve_stationary(
    op: DiscreteOperator,
    check_unique: bool = True,
    uniqueness_tol: float = UNIQUENESS_TOL,
) -> tuple[DiscreteMeasure, SolveReport]:
    """Unit-mass non-negative null vector of the assembled operator.

    Primary method: bordered direct factorization (one balance row replaced by
    the mass constraint). Falls back to shifted inverse power iteration when
    the factorization leaves a large residual. A second bordered solve with a
    different replaced row guards against null spaces of dimension > 1.
    """
    t0 = time.perf_counter()
    m = op.matrix
    n = m.shape[0]
    norm_m = op.norm_inf()
    tol = RESIDUAL_RTOL * norm_m

    method = "bordered-lu"
    iterations = 1
    with np.errstate(all="ignore"):
        w = _bordered_solve(m, n // 2)
    residual = float(np.abs(m @ w).max()) if np.all(np.isfinite(w)) else np.inf

    if not np.isfinite(residual) or residual > tol:
        method = "inverse-power"
        w, iterations, history = _inverse_power(m, tol)
        residual = history[-1]

    if check_unique:
        # for an irreducible generator the bordered system is nonsingular for
        # ANY replaced row (rows sum to zero, Perron vector has positive mass),
        # so a non-finite alternate solve already implies null dimension > 1
        with np.errstate(all="ignore"):
            w_alt = _bordered_solve(m, max(0, n // 4))
        if not np.all(np.isfinite(w_alt)):
            raise SingularOperatorError(
                "bordered system singular for an alternate constraint row; "
                "null space dimension > 1"
            )
        diff = float(np.abs(w / w.sum() - w_alt / w_alt.sum()).sum())
        if diff > uniqueness_tol:
            raise SingularOperatorError(
                f"two bordered solves disagree by L1 distance {diff:.3e}; "
                "null space dimension > 1 suspected"
            )

    mass_defect = abs(float(w.sum()) - 1.0)
    min_weight = float(w.min() / max(w.sum(), 1e-300))
    shape = (op.grid.nx,) if isinstance(op.grid, Grid1D) else (op.grid.nx, op.grid.ny)
    mu, clipped = normalized_measure(op.grid, w.reshape(shape))
    report = SolveReport(
        residual=residual,
        mass_defect=mass_defect,
        min_weight=min_weight,
        clipped_mass=clipped,
        method=method,
        iterations=iterations,
        wall_time=time.perf_counter() - t0,
        meta=dict(op.meta),
    )
    return mu, report


def solve_family(
    v: VectorField, family: NullFamilySchedule, grid: Grid2D, check_unique: bool = True
) -> list[tuple[float, DiscreteMeasure | None, SolveReport | Exception]]:
    """Solve each family member in schedule order; failures are collected, not raised."""
    out = []
    for eps, a in family:
        try:
            op = assemble(v, a, grid)
            mu, report = solve_stationary(op, check_unique=check_unique)
            out.append((eps, mu, report))
        except Exception as exc:  # noqa: BLE001 - sweep must outlive per-member failures
            out.append((eps, None, exc))
    return out
