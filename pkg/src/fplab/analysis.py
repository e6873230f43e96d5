"""Weak*-convergence diagnostics, invariance residuals, sublevel-set bounds,
tightness profiles, and support checks for solved measure families.

Weak* convergence is metrized by a bounded-Lipschitz dictionary (fixed,
versioned) plus exact 1D Wasserstein-1 distances on radial and angular
marginals. The exponential sublevel-set bounds follow the level-set estimates:
mass outside {U < rho} is bounded by exp(-gamma * int_{rho_m}^{rho} dt/H(t))
with H an upper envelope of a^{ij} d_i U d_j U on level bands.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import LyapunovCertificate, grad_central
from .errors import GridMismatchError
from .fields import DiffusionField, DiscreteMeasure, VectorField
from .grid import Grid2D

__all__ = [
    "TestFunctionDictionary",
    "make_dictionary",
    "bump_profile",
    "bl_distance",
    "BLResult",
    "marginal_w1",
    "angular_w1_to_uniform",
    "invariance_residual",
    "ResidualReport",
    "lyapunov_upper_bound",
    "anti_lyapunov_lower_bound",
    "LyapunovBound",
    "tightness_profile",
    "support_in_zero_set",
    "ConvergenceReport",
]


# ---------------------------------------------------------------------------
# smooth compactly supported bumps

def bump_profile(t):
    """psi(t) = exp(1 - 1/(1-t^2)) on |t| < 1, zero outside; psi(0) = 1."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1.0
    ti = t[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - ti**2))
    return out


def bump_d1(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1.0 - 1e-14
    ti = t[inside]
    s = -2.0 * ti / (1.0 - ti**2) ** 2
    out[inside] = bump_profile(ti) * s
    return out


def bump_d2(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1.0 - 1e-14
    ti = t[inside]
    s = -2.0 * ti / (1.0 - ti**2) ** 2
    sp = -2.0 * (1.0 + 3.0 * ti**2) / (1.0 - ti**2) ** 3
    out[inside] = bump_profile(ti) * (s**2 + sp)
    return out


@dataclass(frozen=True)
class TestFunctionDictionary:
    """Finite dictionary of tensor-product smooth bumps with analytic derivatives.

    Each member is h(x,y) = psi((x-cx)/wx) psi((y-cy)/wy); supports must stay
    strictly inside the truncation box so every h vanishes on boundary-adjacent
    cells. Sampled values, gradients, and Laplacians live on the grid; sup
    norms of the gradient/Laplacian are evaluated on a fine local lattice.
    """

    grid: Grid2D
    name: str
    bumps: tuple  # of (cx, cy, wx, wy)
    h: np.ndarray = field(repr=False)        # (k, nx, ny)
    dxh: np.ndarray = field(repr=False)
    dyh: np.ndarray = field(repr=False)
    lap: np.ndarray = field(repr=False)
    grad_inf: np.ndarray = field(repr=False)  # (k,)
    lap_inf: np.ndarray = field(repr=False)   # (k,)

    def __len__(self):
        return len(self.bumps)

    def max_lap_inf(self) -> float:
        return float(self.lap_inf.max())


def make_dictionary(grid: Grid2D, bumps, name: str) -> TestFunctionDictionary:
    xx, yy = grid.centers()
    hs, dxs, dys, laps, ginf, linf = [], [], [], [], [], []
    fine = np.linspace(-1.0, 1.0, 2001)
    psi_f, d1_f, d2_f = bump_profile(fine), bump_d1(fine), bump_d2(fine)
    for cx, cy, wx, wy in bumps:
        if not (
            grid.x_min + grid.hx < cx - wx
            and cx + wx < grid.x_max - grid.hx
            and grid.y_min + grid.hy < cy - wy
            and cy + wy < grid.y_max - grid.hy
        ):
            raise ValueError(
                f"bump ({cx},{cy},{wx},{wy}) support reaches boundary-adjacent cells"
            )
        ux, uy = (xx - cx) / wx, (yy - cy) / wy
        px, py = bump_profile(ux), bump_profile(uy)
        hs.append(px * py)
        dxs.append(bump_d1(ux) * py / wx)
        dys.append(px * bump_d1(uy) / wy)
        laps.append(bump_d2(ux) * py / wx**2 + px * bump_d2(uy) / wy**2)
        gx = np.abs(np.outer(d1_f, psi_f)) / wx
        gy = np.abs(np.outer(psi_f, d1_f)) / wy
        ginf.append(float(np.sqrt(gx**2 + gy**2).max()))
        lf = np.outer(d2_f, psi_f) / wx**2 + np.outer(psi_f, d2_f) / wy**2
        linf.append(float(np.abs(lf).max()))
    return TestFunctionDictionary(
        grid=grid,
        name=name,
        bumps=tuple(tuple(map(float, b)) for b in bumps),
        h=np.asarray(hs),
        dxh=np.asarray(dxs),
        dyh=np.asarray(dys),
        lap=np.asarray(laps),
        grad_inf=np.asarray(ginf),
        lap_inf=np.asarray(linf),
    )


def grid_dictionary(grid: Grid2D, n: int = 3, margin: float = 0.15,
                    name: str | None = None) -> TestFunctionDictionary:
    """n x n bumps tiling the interior; the generic default dictionary."""
    lx = grid.x_max - grid.x_min
    ly = grid.y_max - grid.y_min
    cx = grid.x_min + lx * (margin + (1 - 2 * margin) * (np.arange(n) + 0.5) / n)
    cy = grid.y_min + ly * (margin + (1 - 2 * margin) * (np.arange(n) + 0.5) / n)
    wx0 = 0.98 * (1 - 2 * margin) * lx / n
    wy0 = 0.98 * (1 - 2 * margin) * ly / n
    bumps = []
    for x in cx:
        wx = min(wx0, 0.98 * (x - grid.x_min - 1.5 * grid.hx),
                 0.98 * (grid.x_max - 1.5 * grid.hx - x))
        for y in cy:
            wy = min(wy0, 0.98 * (y - grid.y_min - 1.5 * grid.hy),
                     0.98 * (grid.y_max - 1.5 * grid.hy - y))
            bumps.append((x, y, wx, wy))
    return make_dictionary(grid, bumps, name or f"grid{n}x{n}-v1")


# ---------------------------------------------------------------------------
# bounded-Lipschitz distance and marginals

def _bl_functions(grid: Grid2D):
    xx, yy = grid.centers()
    r = np.hypot(xx, yy)
    clip = lambda a: np.clip(a, -1.0, 1.0)
    fs = [clip(xx), clip(yy), clip((xx + yy) / np.sqrt(2)), clip((xx - yy) / np.sqrt(2))]
    fs += [clip(r - c) for c in (0.0, 0.5, 1.0, 1.5, 2.0)]
    safe_r = np.maximum(r, 1.0)
    fs += [xx / safe_r, yy / safe_r]  # angular probes, 1-Lipschitz, |f|<=1
    return fs


@dataclass(frozen=True)
class BLResult:
    value: float
    radial_w1: float
    angular_w1: float
    per_function: tuple


def bl_distance(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    dictionary: TestFunctionDictionary | None = None,
) -> BLResult:
    """Bounded-Lipschitz distance over the fixed function dictionary.

    The value is sup_f |int f dmu - int f dnu| over 1-Lipschitz, <=1-bounded
    probes (coordinate projections, radial clips, angular probes, and the
    rescaled test dictionary when given); exact W1 on the radial and angular
    marginals is reported alongside.
    """
    if mu.grid != nu.grid:
        raise GridMismatchError("measures live on different grids")
    grid = mu.grid
    fs = _bl_functions(grid)
    if dictionary is not None:
        if dictionary.grid != grid:
            raise GridMismatchError("dictionary grid mismatch")
        for k in range(len(dictionary)):
            scale = max(1.0, dictionary.grad_inf[k])
            fs.append(dictionary.h[k] / scale)
    dmu = mu.weights - nu.weights
    vals = tuple(float(abs((f * dmu).sum())) for f in fs)
    xx, yy = grid.centers()
    rw1 = marginal_w1(np.hypot(xx, yy).ravel(), mu.weights.ravel(), nu.weights.ravel())
    th = np.arctan2(yy, xx).ravel() % (2 * np.pi)
    aw1 = marginal_w1(th, mu.weights.ravel(), nu.weights.ravel())
    return BLResult(value=max(vals), radial_w1=rw1, angular_w1=aw1, per_function=vals)


def marginal_w1(coords: np.ndarray, w1: np.ndarray, w2: np.ndarray) -> float:
    """Exact Wasserstein-1 between two weighted samples of a 1D coordinate
    (L1 distance between CDFs)."""
    order = np.argsort(coords, kind="stable")
    c = coords[order]
    d = (w1 - w2)[order]
    cdf_diff = np.cumsum(d)[:-1]
    return float(np.abs(cdf_diff * np.diff(c)).sum())


def angular_w1_to_uniform(mu: DiscreteMeasure, nbins: int = 256) -> float:
    """W1 between the angular marginal CDF and the uniform CDF on [0, 2pi)."""
    grid = mu.grid
    xx, yy = grid.centers()
    th = np.arctan2(yy, xx).ravel() % (2 * np.pi)
    bins = np.clip((th / (2 * np.pi) * nbins).astype(int), 0, nbins - 1)
    hist = np.bincount(bins, weights=mu.weights.ravel(), minlength=nbins)
    cdf = np.cumsum(hist)
    uniform = np.arange(1, nbins + 1) / nbins
    return float(np.abs(cdf - uniform).sum() * (2 * np.pi / nbins))


# ---------------------------------------------------------------------------
# invariance residuals

@dataclass(frozen=True)
class ResidualReport:
    per_function: np.ndarray  # |int V.grad(h_k) dmu|
    max: float
    weighted_mean: float      # residuals normalized by ||grad h_k||_inf

    def __iter__(self):
        return iter(self.per_function)


def invariance_residual(
    mu: DiscreteMeasure, v: VectorField, dictionary: TestFunctionDictionary
) -> ResidualReport:
    """r_k = |sum_cells V . grad(h_k) w|; zero for invariant limit measures."""
    if mu.grid != v.grid or dictionary.grid != v.grid:
        raise GridMismatchError("measure, field, and dictionary must share a grid")
    vg = dictionary.dxh * v.vx[None] + dictionary.dyh * v.vy[None]
    r = np.abs((vg * mu.weights[None]).sum(axis=(1, 2)))
    return ResidualReport(
        per_function=r,
        max=float(r.max()),
        weighted_mean=float((r / np.maximum(dictionary.grad_inf, 1e-300)).mean()),
    )


# ---------------------------------------------------------------------------
# sublevel-set bounds (level-set method)

@dataclass(frozen=True)
class LyapunovBound:
    value: float
    form: str  # "integral" | "constant"
    hypothesis_ok: bool
    gamma: float
    rho_m: float
    rho: float
    integral: float
    h_nodes: tuple = ()
    h_values: tuple = ()


def _h_envelope(u_flat, g_flat, nodes):
    """Upper envelope of the per-cell values g over U-level bands.

    Returns interpolation points (u*, g*) where g* is the band max and u* the
    U value where it is attained; linear interpolation through these points
    approximates sup_{U=t} g conservatively for slowly varying envelopes.
    """
    pts_u, pts_g = [], []
    for lo, hi in zip(nodes[:-1], nodes[1:]):
        mask = (u_flat > lo) & (u_flat <= hi)
        if not mask.any():
            continue
        k = np.argmax(g_flat[mask])
        pts_u.append(u_flat[mask][k])
        pts_g.append(g_flat[mask][k])
    return np.asarray(pts_u), np.asarray(pts_g)


def _grad_hypothesis_tol(u, grid, band):
    """Grid-aware threshold below which a band gradient counts as vanishing:
    near a critical point |grad U| ~ |D2 U| h."""
    from .dynamics import hessian_central

    uxx, uxy, uyy = hessian_central(u, grid)
    c = np.abs(uxx) + 2 * np.abs(uxy) + np.abs(uyy)
    cmax = float(c[band].max()) if band.any() else float(c.max())
    return 0.5 * cmax * (grid.hx + grid.hy)


def lyapunov_upper_bound(
    cert: LyapunovCertificate,
    a: DiffusionField,
    rho: float,
    rho_mesh: int = 64,
    grad_tol: float | None = None,
) -> LyapunovBound:
    """Exponential bound on the mass outside the rho-sublevel set:
    exp(-gamma int_{rho_m}^{rho} dt / H(t)) with
    H(t) >= max over the t-level set of a^{ij} d_i U d_j U.

    Falls back to the constant-form bound
    gamma^{-1} C |A|_band |grad U|_band^2 (C = 1/(rho - rho_m), band mass <= 1)
    when the gradient hypothesis fails on some level band.
    """
    grid = cert.grid
    if not (cert.rho_m < rho < cert.rho_M):
        raise ValueError("rho must lie in (rho_m, rho_M)")
    gx, gy = grad_central(cert.u, grid)
    g = a.a11 * gx**2 + 2.0 * a.a12 * gx * gy + a.a22 * gy**2
    gnorm = np.hypot(gx, gy)
    band = (cert.u >= cert.rho_m) & (cert.u <= rho)
    nodes = np.linspace(cert.rho_m, rho, rho_mesh)

    if grad_tol is None:
        grad_tol = _grad_hypothesis_tol(cert.u, grid, band)
    hypothesis_ok = bool(band.any()) and float(gnorm[band].min()) > grad_tol
    if hypothesis_ok:
        pu, pg = _h_envelope(cert.u[band].ravel(), g[band].ravel(), nodes)
        hypothesis_ok = len(pu) >= 2
    if not hypothesis_ok:
        amax = float(a.frob[band].max()) if band.any() else float(a.frob.max())
        gmax = float(gnorm[band].max()) if band.any() else float(gnorm.max())
        c = 1.0 / (rho - cert.rho_m)
        value = min(1.0, c * amax * gmax**2 / max(cert.gamma, 1e-300))
        return LyapunovBound(
            value=value, form="constant", hypothesis_ok=False, gamma=cert.gamma,
            rho_m=cert.rho_m, rho=rho, integral=np.nan,
        )

    order = np.argsort(pu)
    pu, pg = pu[order], pg[order]
    h_nodes = np.interp(nodes, pu, pg)
    integral = float(np.trapezoid(1.0 / h_nodes, nodes))
    value = float(min(1.0, np.exp(-cert.gamma * integral)))
    return LyapunovBound(
        value=value, form="integral", hypothesis_ok=True, gamma=cert.gamma,
        rho_m=cert.rho_m, rho=rho, integral=integral,
        h_nodes=tuple(nodes.tolist()), h_values=tuple(h_nodes.tolist()),
    )


def anti_lyapunov_lower_bound(
    cert: LyapunovCertificate,
    a: DiffusionField,
    rho0: float,
    rho: float,
    rho_mesh: int = 64,
    grad_tol: float | None = None,
) -> LyapunovBound:
    """Multiplicative growth factor exp(gamma int_{rho0}^{rho} dt / H(t)) in the
    anti-Lyapunov mass estimate
    mu(Omega_rho \\ Omega*_rho_m) >= mu(Omega_rho0 \\ Omega*_rho_m) * factor.

    H is over-estimated by the same band envelope, which keeps the factor
    conservative (never larger than the continuum one).
    """
    grid = cert.grid
    if not (cert.rho_m <= rho0 <= rho < cert.rho_M):
        raise ValueError("need rho_m <= rho0 <= rho < rho_M")
    if rho == rho0 or cert.gamma == 0.0:
        return LyapunovBound(
            value=1.0, form="integral", hypothesis_ok=True, gamma=cert.gamma,
            rho_m=cert.rho_m, rho=rho, integral=0.0,
        )
    gx, gy = grad_central(cert.u, grid)
    g = a.a11 * gx**2 + 2.0 * a.a12 * gx * gy + a.a22 * gy**2
    gnorm = np.hypot(gx, gy)
    band = (cert.u >= rho0) & (cert.u <= rho)
    nodes = np.linspace(rho0, rho, rho_mesh)
    if grad_tol is None:
        grad_tol = _grad_hypothesis_tol(cert.u, grid, band)
    hypothesis_ok = bool(band.any()) and float(gnorm[band].min()) > grad_tol
    if hypothesis_ok:
        pu, pg = _h_envelope(cert.u[band].ravel(), g[band].ravel(), nodes)
        hypothesis_ok = len(pu) >= 2
    if not hypothesis_ok:
        return LyapunovBound(
            value=1.0, form="constant", hypothesis_ok=False, gamma=cert.gamma,
            rho_m=cert.rho_m, rho=rho, integral=np.nan,
        )
    order = np.argsort(pu)
    h_nodes = np.interp(nodes, pu[order], pg[order])
    integral = float(np.trapezoid(1.0 / h_nodes, nodes))
    return LyapunovBound(
        value=float(np.exp(cert.gamma * integral)), form="integral",
        hypothesis_ok=True, gamma=cert.gamma, rho_m=cert.rho_m, rho=rho,
        integral=integral, h_nodes=tuple(nodes.tolist()), h_values=tuple(h_nodes.tolist()),
    )


# ---------------------------------------------------------------------------
# tightness and support checks

def tightness_profile(measures, cert: LyapunovCertificate, rhos):
    """Matrix profile[k][j] = mass of measure k outside {U < rho_j}, plus the
    tightness verdict: for every delta there is a rho column entirely below it."""
    rhos = np.asarray(rhos, dtype=float)
    prof = np.empty((len(measures), len(rhos)))
    for k, mu in enumerate(measures):
        for j, rho in enumerate(rhos):
            prof[k, j] = 1.0 - float(mu.weights[cert.u < rho].sum())

    def is_tight(delta: float) -> bool:
        return bool((prof.max(axis=0) < delta).any())

    return prof, is_tight


@dataclass(frozen=True)
class SupportCheck:
    offending_mass: float
    tol: float
    passed: bool
    zero_set_mask: np.ndarray


def support_in_zero_set(
    mu: DiscreteMeasure,
    v: VectorField,
    cert: LyapunovCertificate,
    threshold: float = 0.02,
) -> SupportCheck:
    """Mass of mu off the set S = {V . grad U = 0}, up to grid tolerance
    tol = ||grad(V.grad U)||_inf (hx + hy)."""
    grid = v.grid
    gx, gy = grad_central(cert.u, grid)
    g = v.vx * gx + v.vy * gy
    ggx, ggy = grad_central(g, grid)
    tol = float(np.hypot(ggx, ggy).max()) * (grid.hx + grid.hy)
    on_s = np.abs(g) <= tol
    off_mass = float(mu.weights[~on_s].sum())
    return SupportCheck(
        offending_mass=off_mass, tol=tol, passed=off_mass < threshold, zero_set_mask=on_s
    )


# ---------------------------------------------------------------------------
# per-family report

@dataclass
class ConvergenceReport:
    """Per-eps convergence metrics for a solved family."""

    eps: list = field(default_factory=list)
    rows: list = field(default_factory=list)  # dicts of metric name -> value

    def add(self, eps: float, **metrics):
        self.eps.append(float(eps))
        self.rows.append({k: float(v) for k, v in metrics.items()})

    def series(self, key: str) -> np.ndarray:
        return np.asarray([row[key] for row in self.rows])

    def to_csv(self) -> str:
        if not self.rows:
            return "eps\n"
        keys = list(self.rows[0].keys())
        lines = [",".join(["eps"] + keys)]
        for e, row in zip(self.eps, self.rows):
            lines.append(",".join([repr(e)] + [repr(row[k]) for k in keys]))
        return "\n".join(lines) + "\n"
