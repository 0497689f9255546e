"""Hessian approximations from a handful of operator applications.

* PSF: apply the operator to sums of well-separated deltas, cut out the
  point spread functions and read them as symbol rows ``s(x_k, .)``.
* PDO: apply the operator to a sum of plane waves, separate the response
  spectrum around each sampled frequency and read off symbol columns
  ``s(., xi_k)``.
* PSF+: take an orthonormal frequency basis from the rows and refit the
  spatial factors against the columns.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import BandTooNarrow, RankTooLarge, SeparationViolated
from .grid import TWO_PI_SQ, Grid2D, delta_field, forward_transform, inverse_transform
from .psido import LinearOperator2D, LowRankSymbol, multiplier_operator

log = logging.getLogger(__name__)


# --------------------------------------------------------------------------
# PSF probing


@dataclass(frozen=True, eq=False)
class PsfProbePlan:
    """Sample points on a regular lattice, grouped into non-overlapping batches.

    ``points`` is ``(K, 2)`` of ``(iz, ix)``; point ``k = i * len(lattice_x) + j``
    sits at ``(lattice_z[i], lattice_x[j])``.
    """

    grid: Grid2D
    points: np.ndarray
    batches: list
    extraction_radius: int
    lattice_z: np.ndarray
    lattice_x: np.ndarray

    @property
    def n_points(self) -> int:
        return self.points.shape[0]


def _periodic_gap(a: np.ndarray, b: np.ndarray, n: int) -> np.ndarray:
    d = np.abs(a - b) % n
    return np.minimum(d, n - d)


def validate_psf_plan(plan: PsfProbePlan) -> None:
    """Raise ``SeparationViolated`` if windows in a batch overlap or touch the edge."""
    g = plan.grid
    r = plan.extraction_radius
    need = 2 * r + 1
    pts = plan.points
    seen = np.concatenate([np.asarray(b, dtype=int) for b in plan.batches]) if plan.batches else []
    if sorted(seen) != list(range(plan.n_points)):
        raise SeparationViolated("batches must partition the points")
    if np.any(pts[:, 0] < r) or np.any(pts[:, 0] > g.nz - 1 - r) or \
            np.any(pts[:, 1] < r) or np.any(pts[:, 1] > g.nx - 1 - r):
        raise SeparationViolated("points must keep a boundary margin of at least the radius")
    for batch in plan.batches:
        b = np.asarray(batch, dtype=int)
        for i in range(len(b)):
            for j in range(i + 1, len(b)):
                dz = _periodic_gap(pts[b[i], 0], pts[b[j], 0], g.nz)
                dx = _periodic_gap(pts[b[i], 1], pts[b[j], 1], g.nx)
                if max(dz, dx) < need:
                    raise SeparationViolated(
                        f"points {b[i]} and {b[j]} are {max(dz, dx)} cells apart, need {need}")


def _lattice(n: int, count: int, margin: int) -> np.ndarray:
    return np.unique(np.rint(np.linspace(margin, n - 1 - margin, count)).astype(int))


def make_psf_plan(grid: Grid2D, points_x: int = 6, points_z: int = 6,
                  radius: int | None = None) -> PsfProbePlan:
    """Regular ``points_z x points_x`` lattice split into 4 interleaved batches.

    Batches follow the parity of the lattice indices, so points in one batch
    are two lattice steps apart. With ``radius=None`` the largest radius whose
    windows still fit is used, and the lattice keeps a margin of that radius.
    """
    if points_x < 1 or points_z < 1:
        raise ValueError("need at least one point per axis")

    def build(r):
        lz = _lattice(grid.nz, points_z, r)
        lx = _lattice(grid.nx, points_x, r)
        if len(lz) < points_z or len(lx) < points_x:
            raise SeparationViolated(f"lattice collapses with radius {r}")
        iz, ix = np.meshgrid(lz, lx, indexing="ij")
        pts = np.stack([iz.ravel(), ix.ravel()], axis=1)
        ii, jj = np.meshgrid(np.arange(len(lz)), np.arange(len(lx)), indexing="ij")
        parity = (ii % 2) * 2 + (jj % 2)
        batches = [np.flatnonzero(parity.ravel() == p) for p in range(4)]
        batches = [b for b in batches if b.size]
        return PsfProbePlan(grid, pts, batches, int(r), lz, lx)

    if radius is not None:
        plan = build(radius)
        validate_psf_plan(plan)
        return plan
    for r in range(min(grid.nx, grid.nz) // 2, -1, -1):
        try:
            plan = build(r)
            validate_psf_plan(plan)
        except SeparationViolated:
            continue
        return plan
    raise SeparationViolated("no radius separates the lattice")


def build_delta_probes(plan: PsfProbePlan, grid: Grid2D | None = None) -> list[np.ndarray]:
    """One probe field per batch: a sum of unit-integral deltas at its points."""
    grid = plan.grid if grid is None else grid
    if grid != plan.grid:
        raise ValueError("plan was made for a different grid")
    validate_psf_plan(plan)
    probes = []
    for batch in plan.batches:
        f = np.zeros(grid.shape)
        for k in batch:
            f += delta_field(grid, *plan.points[k])
        probes.append(f)
    return probes


@dataclass(frozen=True, eq=False)
class PsfSet:
    plan: PsfProbePlan
    psfs: np.ndarray          # (K, nz, nx), centred at the origin
    symbol_rows: np.ndarray   # (K, N) complex


def psfs_to_rows(psfs: np.ndarray, grid: Grid2D) -> np.ndarray:
    """``s(x_k, xi) = (2 pi)^2 conj(p_hat_k(xi))`` flattened to ``(K, N)``."""
    return (TWO_PI_SQ * np.conj(forward_transform(psfs, grid))).reshape(psfs.shape[0], -1)


def rows_to_psfs(rows: np.ndarray, grid: Grid2D) -> np.ndarray:
    """Inverse of :func:`psfs_to_rows` for Hermitian rows."""
    spec = np.conj(np.asarray(rows).reshape(-1, *grid.shape)) / TWO_PI_SQ
    return inverse_transform(spec, grid, real=False).real


def extract_psfs(plan: PsfProbePlan, responses: list[np.ndarray]) -> PsfSet:
    """Cut each point's window out of its batch response and recentre it."""
    g = plan.grid
    if len(responses) != len(plan.batches):
        raise ValueError(f"expected {len(plan.batches)} responses, got {len(responses)}")
    psfs = np.zeros((plan.n_points,) + g.shape)
    for batch, resp in zip(plan.batches, responses):
        g.check(resp, "response")
        b = np.asarray(batch, dtype=int)
        psfs[b] = kernels.recentered_windows(resp, plan.points[b, 0], plan.points[b, 1],
                                             plan.extraction_radius)
    return PsfSet(plan, psfs, psfs_to_rows(psfs, g))


def probe_psfs(op, plan: PsfProbePlan) -> PsfSet:
    return extract_psfs(plan, [op(p) for p in build_delta_probes(plan)])


def _axis_weights(nodes: np.ndarray, n: int, edge: str) -> np.ndarray:
    coords = np.arange(n, dtype=float)
    if edge == "clamp":
        return kernels.hat_weights(nodes.astype(float), coords)
    # virtual zero-valued nodes on the outermost grid lines
    lo = [0.0] if nodes[0] > 0 else []
    hi = [float(n - 1)] if nodes[-1] < n - 1 else []
    ext = np.concatenate([lo, nodes.astype(float), hi])
    w = kernels.hat_weights(ext, coords)
    return w[len(lo):len(lo) + len(nodes)]


def build_psf_weights(plan: PsfProbePlan, grid: Grid2D | None = None,
                      edge: str = "clamp") -> np.ndarray:
    """Bilinear hat weights on the sample lattice, ``(K, nz, nx)``.

    Inside the lattice hull the weights form a partition of unity. Outside
    it, ``edge="clamp"`` holds them constant along the outward direction
    while ``edge="taper"`` ramps them linearly to zero at the grid boundary,
    which suits operators that vanish on the boundary ring.
    """
    if edge not in ("clamp", "taper"):
        raise ValueError(f"unknown edge mode {edge!r}")
    g = plan.grid if grid is None else grid
    wz = _axis_weights(plan.lattice_z, g.nz, edge)
    wx = _axis_weights(plan.lattice_x, g.nx, edge)
    return np.einsum("iz,jx->ijzx", wz, wx).reshape(-1, g.nz, g.nx)


def assemble_psf_operator(psfset: PsfSet, weights: np.ndarray) -> LowRankSymbol:
    """Symbol ``sum_k w_k(x) s(x_k, xi)``.

    Its adjoint apply is the product-convolution ``sum_k p_k * (w_k v)``.
    """
    g = psfset.plan.grid
    if weights.shape[0] != psfset.symbol_rows.shape[0]:
        raise ValueError("one weight per PSF required")
    return LowRankSymbol(g, weights, psfset.symbol_rows.reshape(-1, *g.shape))


# --------------------------------------------------------------------------
# PDO probing


@dataclass(frozen=True, eq=False)
class PdoProbePlan:
    """Frequencies on a circle of radius ``rho0``, snapped to the DFT grid.

    ``freq_index`` is ``(K, 2)`` of DFT indices ``(iz, ix)``; entry
    ``k + K/2`` is the antipode of entry ``k``. ``mask_radius`` is in
    frequency-index cells.
    """

    grid: Grid2D
    rho0: float
    angles: np.ndarray
    freq_index: np.ndarray
    mask_radius: float
    rolloff: float = 2.0

    @property
    def n_angles(self) -> int:
        return len(self.angles)

    @property
    def xi(self) -> np.ndarray:
        """Snapped frequency vectors ``(K, 2)`` as ``(xi_x, xi_z)``."""
        fg = self.grid.freqs
        return np.stack([fg.xi_x[self.freq_index[:, 1]], fg.xi_z[self.freq_index[:, 0]]], axis=1)

    @property
    def flat_freq_index(self) -> np.ndarray:
        return self.freq_index[:, 0] * self.grid.nx + self.freq_index[:, 1]


def _signed_index(i: np.ndarray, n: int) -> np.ndarray:
    i = np.asarray(i) % n
    return np.where(i > n // 2, i - n, i)


def choose_probe_frequencies(grid: Grid2D, rho0: float | None = None, n_angles: int = 8,
                             band: dict | None = None, rolloff: float = 2.0) -> PdoProbePlan:
    """Equally spaced angles ``theta_k = 2 pi k / n`` on a circle of radius ``rho0``.

    ``band`` (keys ``f_min, f_max, c_min, c_max``) sets ``rho0 = f_max / c_max``
    in the units of the caller. Without either, ``rho0`` defaults to 0.6 times
    the Nyquist frequency, near the top of the band the test problems carry.
    """
    if n_angles < 2 or n_angles % 2:
        raise ValueError("n_angles must be a positive even number")
    fg = grid.freqs
    if band is not None:
        f_min, f_max = float(band["f_min"]), float(band["f_max"])
        c_min, c_max = float(band["c_min"]), float(band["c_max"])
        if not f_max / f_min > c_max / c_min:
            raise BandTooNarrow(f"f_max/f_min={f_max / f_min:.3g} must exceed c_max/c_min={c_max / c_min:.3g}")
        if rho0 is None:
            rho0 = f_max / c_max
        elif not (f_min / c_min <= rho0 <= f_max / c_max):
            raise BandTooNarrow(f"rho0={rho0:g} outside [{f_min / c_min:g}, {f_max / c_max:g}]")
    if rho0 is None:
        rho0 = 0.6 * fg.nyquist
    if not rho0 > 0:
        raise ValueError("rho0 must be positive")
    angles = 2.0 * np.pi * np.arange(n_angles) / n_angles
    half = n_angles // 2
    idx = np.zeros((n_angles, 2), dtype=int)
    for k in range(half):
        iz, ix = fg.nearest_index(rho0 * np.cos(angles[k]), rho0 * np.sin(angles[k]))
        idx[k] = (iz, ix)
        idx[k + half] = fg.negate_index(iz, ix)
    sz = _signed_index(idx[:, 0], grid.nz).astype(float)
    sx = _signed_index(idx[:, 1], grid.nx).astype(float)
    if len({(a, b) for a, b in zip(sz, sx)}) < n_angles or np.any((sz == 0) & (sx == 0)):
        raise BandTooNarrow("grid too coarse to separate the sampled frequencies")
    dmin = np.inf
    for i in range(n_angles):
        for j in range(i + 1, n_angles):
            dz = _periodic_gap(idx[i, 0], idx[j, 0], grid.nz)
            dx = _periodic_gap(idx[i, 1], idx[j, 1], grid.nx)
            dmin = min(dmin, float(np.hypot(dz, dx)))
    return PdoProbePlan(grid, float(rho0), angles, idx, 0.5 * dmin, rolloff)


def build_sinusoid_probe(plan: PdoProbePlan) -> np.ndarray:
    """``v_p(x) = sum_k exp(i x . xi_k)`` (real because frequencies come in antipodes)."""
    g = plan.grid
    X, Z = g.coords
    xi = plan.xi
    half = plan.n_angles // 2
    # antipodal terms combine to 2 cos
    out = np.zeros(g.shape)
    for k in range(half):
        out += 2.0 * np.cos(X * xi[k, 0] + Z * xi[k, 1])
    return out


def spectral_mask(plan: PdoProbePlan, k: int) -> np.ndarray:
    """Disc of radius ``mask_radius`` around sample ``k`` with a raised-cosine edge.

    The edge spans ``rolloff`` cells centred on the disc boundary, so the
    masks of two neighbours at the minimum spacing add up to one between them.
    """
    g = plan.grid
    iz = np.arange(g.nz)[:, None]
    ix = np.arange(g.nx)[None, :]
    d = np.hypot(_periodic_gap(iz, plan.freq_index[k, 0], g.nz),
                 _periodic_gap(ix, plan.freq_index[k, 1], g.nx))
    R = plan.mask_radius
    half = min(0.5 * plan.rolloff, R)
    lo, hi = R - half, R + half
    m = np.where(d <= lo, 1.0, 0.0)
    if hi > lo:
        edge = (d > lo) & (d < hi)
        m[edge] = 0.5 * (1.0 + np.cos(np.pi * (d[edge] - lo) / (hi - lo)))
    return m


@dataclass(frozen=True, eq=False)
class SymbolColumns:
    plan: PdoProbePlan
    cols: np.ndarray    # (N, K) complex


def extract_symbol_columns(plan: PdoProbePlan, response: np.ndarray) -> SymbolColumns:
    """Columns ``s(x, xi_k)`` from the response to :func:`build_sinusoid_probe`."""
    g = plan.grid
    g.check(response, "response")
    spec = forward_transform(response, g)
    X, Z = g.coords
    xi = plan.xi
    masks = np.stack([spectral_mask(plan, k) for k in range(plan.n_angles)])
    parts = inverse_transform(masks * spec[None], g, real=False)
    phase = np.exp(-1j * (X[None] * xi[:, 0, None, None] + Z[None] * xi[:, 1, None, None]))
    cols = (parts * phase).reshape(plan.n_angles, -1).T
    return SymbolColumns(plan, cols)


def probe_columns(op, plan: PdoProbePlan) -> SymbolColumns:
    return extract_symbol_columns(plan, op(build_sinusoid_probe(plan)))


def angular_kernel(theta: np.ndarray, n: int) -> np.ndarray:
    """Trigonometric interpolation kernel for ``n`` (even) equally spaced angles."""
    theta = np.asarray(theta, dtype=float)
    acc = np.ones_like(theta)
    for j in range(1, n // 2):
        acc += 2.0 * np.cos(j * theta)
    acc += np.cos(0.5 * n * theta)
    return acc / n


def angular_lagrange(theta: np.ndarray, nodes: np.ndarray, k: int) -> np.ndarray:
    """Periodic Lagrange basis function ``k`` for an even number of distinct angles.

    ``cos((t - t_k)/2) prod_{j != k} sin((t - t_j)/2) / sin((t_k - t_j)/2)``;
    equals 1 at ``nodes[k]`` and 0 at the other nodes. For equally spaced
    nodes it coincides with :func:`angular_kernel`.
    """
    theta = np.asarray(theta, dtype=float)
    nodes = np.asarray(nodes, dtype=float)
    tk = nodes[k]
    out = np.cos(0.5 * (theta - tk))
    for j, tj in enumerate(nodes):
        if j != k:
            out = out * (np.sin(0.5 * (theta - tj)) / np.sin(0.5 * (tk - tj)))
    return out


def pdo_weight_values(plan: PdoProbePlan, rho, theta, radial_order: float = 1.0) -> np.ndarray:
    """``w_k(rho, theta) = (rho / rho_k)^order * l_k(theta)``, stacked over ``k``.

    ``(rho_k, theta_k)`` are the polar coordinates of the snapped sample
    frequencies and ``l_k`` the angular Lagrange basis through them, so
    ``w_k(xi_j) = delta_jk`` exactly.
    """
    rho = np.asarray(rho, dtype=float)
    theta = np.asarray(theta, dtype=float)
    xi = plan.xi
    rk = np.hypot(xi[:, 0], xi[:, 1])
    tk = np.arctan2(xi[:, 1], xi[:, 0])
    return np.stack([(rho / rk[k]) ** radial_order * angular_lagrange(theta, tk, k)
                     for k in range(plan.n_angles)])


def build_pdo_weights(plan: PdoProbePlan, radial_order: float = 1.0) -> np.ndarray:
    """Frequency factors ``w_k(xi)`` on the DFT layout, ``(K, nz, nx)``."""
    fg = plan.grid.freqs
    return pdo_weight_values(plan, fg.magnitude, fg.angle, radial_order)


def assemble_pdo_operator(cols: SymbolColumns, weights: np.ndarray) -> LowRankSymbol:
    """Symbol ``sum_k Re s(x, xi_k) w_k(xi)``."""
    g = cols.plan.grid
    if weights.shape[0] != cols.cols.shape[1]:
        raise ValueError("one weight per column required")
    imag = float(np.max(np.abs(cols.cols.imag))) if cols.cols.size else 0.0
    if imag > 0:
        log.debug("dropping imaginary part of symbol columns (max %.3e)", imag)
    a = cols.cols.real.T.reshape(-1, *g.shape)
    return LowRankSymbol(g, a, weights)


# --------------------------------------------------------------------------
# PSF+


def row_basis(rows: np.ndarray, grid: Grid2D, basis_rank: int | None = None,
              sv_threshold: float = 1e-2) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal Hermitian frequency basis ``B`` (``r x N``) for the row space.

    The SVD is taken of the real kernels behind the rows, so each basis row
    is the spectrum of a real field and the fitted symbol stays real-valued.
    Returns ``(B, singular_values)``.
    """
    K = rows.shape[0]
    if basis_rank is not None and basis_rank > K:
        raise RankTooLarge(f"basis_rank={basis_rank} exceeds number of rows {K}")
    kern = rows_to_psfs(rows, grid).reshape(K, -1)
    _, s, vt = np.linalg.svd(kern, full_matrices=False)
    if basis_rank is None:
        basis_rank = max(1, int(np.sum(s >= sv_threshold * s[0]))) if s[0] > 0 else 1
    V = vt[:basis_rank].reshape(basis_rank, *grid.shape)
    B = np.conj(np.fft.fft2(V)).reshape(basis_rank, -1) / np.sqrt(grid.size)
    return B, s


def build_psf_plus(rows: np.ndarray, row_weights: np.ndarray, cols: SymbolColumns,
                   basis_rank: int | None = 3, sv_threshold: float = 1e-2,
                   alpha: float | None = None) -> LowRankSymbol:
    """Low-rank symbol from PSF rows refined against PDO columns.

    ``A0 = W (rows B^H)`` is the PSF symbol in the basis ``B``; the refit
    solves ``min ||A B_c - S_c||^2 + alpha ||A - A0||^2`` in closed form with
    ``alpha = ||B_c||^2 / ||B||^2`` unless given.
    """
    g = cols.plan.grid
    K = rows.shape[0]
    W = np.asarray(row_weights).reshape(K, -1).T           # (N, K)
    B, _ = row_basis(rows, g, basis_rank, sv_threshold)     # (r, N)
    r = B.shape[0]
    A0 = W @ (rows @ B.conj().T)                            # (N, r)
    Ic = cols.plan.flat_freq_index
    Bc = B[:, Ic]
    if alpha is None:
        alpha = float(np.linalg.norm(Bc) ** 2 / np.linalg.norm(B) ** 2)
    lhs = Bc @ Bc.conj().T + alpha * np.eye(r)
    rhs = cols.cols @ Bc.conj().T + alpha * A0
    A = np.linalg.solve(lhs.T, rhs.T).T
    imag = float(np.max(np.abs(A.imag)))
    if imag > 1e-8 * max(float(np.max(np.abs(A.real))), 1e-300):
        log.debug("PSF+ spatial factors carry imaginary part %.3e; dropped", imag)
    return LowRankSymbol(g, A.real.T.reshape(r, *g.shape), B.reshape(r, *g.shape))


# --------------------------------------------------------------------------
# high-pass filter and sample transforms


@dataclass(frozen=True)
class HighPassSpec:
    cutoff: float
    transition_width: float

    def __post_init__(self):
        if not self.cutoff > 0:
            raise ValueError("cutoff must be positive")
        if self.transition_width < 0 or self.transition_width >= 2 * self.cutoff:
            raise ValueError("transition width must lie in [0, 2*cutoff)")

    @classmethod
    def relative(cls, rho0: float, cutoff_frac: float = 0.5, width_frac: float = 0.2) -> "HighPassSpec":
        return cls(cutoff_frac * rho0, width_frac * rho0)


def highpass_symbol(grid: Grid2D, hp: HighPassSpec) -> np.ndarray:
    rho = grid.freqs.magnitude
    lo = hp.cutoff - 0.5 * hp.transition_width
    hi = hp.cutoff + 0.5 * hp.transition_width
    q = np.where(rho >= hi, 1.0, 0.0)
    if hi > lo:
        mid = (rho > lo) & (rho < hi)
        q[mid] = 0.5 * (1.0 - np.cos(np.pi * (rho[mid] - lo) / (hi - lo)))
    return q


def highpass_operator(grid: Grid2D, hp: HighPassSpec) -> LinearOperator2D:
    return multiplier_operator(grid, highpass_symbol(grid, hp), name="Q")


def wrap_highpass(op, hp: HighPassSpec, grid: Grid2D | None = None) -> LinearOperator2D:
    """``v -> Q H Q v`` with ``Q`` the raised-cosine high-pass multiplier."""
    grid = op.grid if grid is None else grid
    Q = highpass_operator(grid, hp)
    sym = bool(getattr(op, "symmetric", False))
    adj = None
    if hasattr(op, "apply_adjoint") and getattr(op, "_rmatvec", None) is not None:
        adj = lambda v: Q(op.apply_adjoint(Q(v)))  # noqa: E731
    return LinearOperator2D(grid, lambda v: Q(op(Q(v))), adj, symmetric=sym, name="QHQ")


def pointwise_sqrt_samples(samples: np.ndarray) -> np.ndarray:
    """``sqrt(max(Re s, 0))`` entrywise; imaginary parts are dropped."""
    samples = np.asarray(samples)
    if np.iscomplexobj(samples):
        imag = float(np.max(np.abs(samples.imag))) if samples.size else 0.0
        if imag > 0:
            log.debug("pointwise sqrt drops imaginary part (max %.3e)", imag)
        samples = samples.real
    return np.sqrt(np.maximum(samples, 0.0))


def band_limited_probes(grid: Grid2D, n: int, rng=None, band_frac: float = 0.7,
                        highpass: HighPassSpec | None = None) -> list[np.ndarray]:
    """White noise passed through ``exp(-(rho / (band_frac * nyquist))^4)`` and ``Q``."""
    rng = np.random.default_rng(rng)
    rho = grid.freqs.magnitude
    filt = np.exp(-(rho / (band_frac * grid.freqs.nyquist)) ** 4)
    if highpass is not None:
        filt = filt * highpass_symbol(grid, highpass)
    out = []
    for _ in range(n):
        w = rng.standard_normal(grid.shape)
        out.append(inverse_transform(forward_transform(w, grid) * filt, grid))
    return out


def relative_errors(exact, approx, probes) -> np.ndarray:
    """``||approx(v) - exact(v)|| / ||exact(v)||`` for each probe."""
    errs = []
    for v in probes:
        ref = exact(v)
        errs.append(np.linalg.norm(approx(v) - ref) / np.linalg.norm(ref))
    return np.array(errs)


# --------------------------------------------------------------------------
# one-stop driver


@dataclass(eq=False)
class ProbeResult:
    """Rows, columns and weights from probing one operator."""

    psfset: PsfSet
    psf_weights: np.ndarray
    columns: SymbolColumns
    transform: str = "none"
    highpass: HighPassSpec | None = None

    @property
    def grid(self) -> Grid2D:
        return self.psfset.plan.grid

    def rows(self) -> np.ndarray:
        r = self.psfset.symbol_rows
        return pointwise_sqrt_samples(r).astype(complex) if self.transform == "sqrt" else r

    def cols(self) -> SymbolColumns:
        if self.transform == "sqrt":
            return SymbolColumns(self.columns.plan, pointwise_sqrt_samples(self.columns.cols).astype(complex))
        return self.columns

    def psf_symbol(self) -> LowRankSymbol:
        g = self.grid
        return LowRankSymbol(g, self.psf_weights, self.rows().reshape(-1, *g.shape))

    def pdo_symbol(self, radial_order: float | None = None) -> LowRankSymbol:
        """PDO symbol; the frequency weights carry the high-pass filter if one was used.

        The default radial order is 1, or 1/2 for square-root samples.
        """
        cols = self.cols()
        if radial_order is None:
            radial_order = 0.5 if self.transform == "sqrt" else 1.0
        w = build_pdo_weights(cols.plan, radial_order)
        if self.highpass is not None:
            q = highpass_symbol(self.grid, self.highpass)
            w = w * (q if self.transform == "sqrt" else q * q)
        return assemble_pdo_operator(cols, w)

    def psf_plus_symbol(self, basis_rank: int | None = 3, sv_threshold: float = 1e-2,
                        alpha: float | None = None) -> LowRankSymbol:
        return build_psf_plus(self.rows(), self.psf_weights, self.cols(), basis_rank,
                              sv_threshold, alpha)

    def symbol(self, method: str, **kw) -> LowRankSymbol:
        if method == "psf":
            return self.psf_symbol()
        if method == "pdo":
            return self.pdo_symbol(**kw)
        if method == "psfplus":
            return self.psf_plus_symbol(**kw)
        raise ValueError(f"unknown approximation method {method!r}")


def probe_operator(op, psf_plan: PsfProbePlan, pdo_plan: PdoProbePlan,
                   transform: str = "none", edge: str = "clamp",
                   highpass: HighPassSpec | None = None) -> ProbeResult:
    """Run both probing schemes (``len(batches) + 1`` applications).

    With ``highpass`` set, ``op`` is wrapped as ``Q op Q`` before probing.
    """
    if transform not in ("none", "sqrt"):
        raise ValueError(f"unknown sample transform {transform!r}")
    if highpass is not None:
        op = wrap_highpass(op, highpass, psf_plan.grid)
    psfset = probe_psfs(op, psf_plan)
    cols = probe_columns(op, pdo_plan)
    return ProbeResult(psfset, build_psf_weights(psf_plan, edge=edge), cols, transform, highpass)
