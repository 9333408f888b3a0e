"""Geometric multipath channel synthesis and spatially consistent scenes.

A scene is a rectangular grid of cells, each holding a small set of
effective propagation paths (delay, elevation, azimuth, power).  Channels
are sums of rank-1 outer products of delay and array steering vectors with
circularly symmetric complex gains, so everything downstream (correlation
matrices, tensor factors) inherits the same parameterisation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .config import SystemConfig


class SceneGenerationError(ValueError):
    """Raised when the requested path layout cannot satisfy the configured
    minimum parameter separations."""


@dataclass(frozen=True)
class PathParams:
    """One propagation path: delay in seconds, angles in radians, linear power."""

    delay_s: float
    elevation_rad: float
    azimuth_rad: float
    power: float

    def __post_init__(self):
        if self.power < 0:
            raise ValueError("path power must be >= 0")
        if self.delay_s < 0:
            raise ValueError("path delay must be >= 0")
        if not (0.0 < self.elevation_rad < math.pi):
            raise ValueError("elevation must lie strictly inside (0, pi)")
        if not (0.0 < self.azimuth_rad < math.pi):
            raise ValueError("azimuth must lie strictly inside (0, pi)")


@dataclass
class PathSet:
    """Ordered collection of paths, optionally with one complex gain each."""

    paths: list[PathParams]
    gains: np.ndarray | None = None

    def __post_init__(self):
        if self.gains is not None:
            self.gains = np.asarray(self.gains, dtype=complex)
            if self.gains.shape != (len(self.paths),):
                raise ValueError("need exactly one gain per path")

    def __len__(self) -> int:
        return len(self.paths)

    @property
    def delays(self) -> np.ndarray:
        return np.array([p.delay_s for p in self.paths])

    @property
    def elevations(self) -> np.ndarray:
        return np.array([p.elevation_rad for p in self.paths])

    @property
    def azimuths(self) -> np.ndarray:
        return np.array([p.azimuth_rad for p in self.paths])

    @property
    def powers(self) -> np.ndarray:
        return np.array([p.power for p in self.paths])

    def with_gains(self, gains: np.ndarray) -> "PathSet":
        return PathSet(list(self.paths), np.asarray(gains, dtype=complex))


def steering_delay(tau: float, n: int, delta_f: float) -> np.ndarray:
    """Delay steering vector, entry k = exp(-j 2 pi k delta_f tau), k = 0..n-1."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return np.exp(-2j * np.pi * np.arange(n) * delta_f * tau)


def steering_vertical(theta: float, m_v: int) -> np.ndarray:
    """Vertical ULA steering, entry k = exp(-j pi k cos(theta))."""
    return np.exp(-1j * np.pi * np.arange(m_v) * math.cos(theta))


def steering_horizontal(phi: float, theta: float, m_h: int) -> np.ndarray:
    """Horizontal ULA steering, entry k = exp(-j pi k sin(theta) cos(phi))."""
    return np.exp(-1j * np.pi * np.arange(m_h) * math.sin(theta) * math.cos(phi))


def steering_antenna(theta: float, phi: float, m_v: int, m_h: int) -> np.ndarray:
    """UPA steering a(phi, theta) = a_v(theta) kron a_h(phi; theta).

    The flattened antenna index is vertical-major: m = m_v_idx * m_h + m_h_idx.
    """
    if m_v < 1 or m_h < 1:
        raise ValueError("antenna counts must be >= 1")
    return np.kron(steering_vertical(theta, m_v), steering_horizontal(phi, theta, m_h))


def synth_channel(paths: PathSet, n_sc: int, cfg: SystemConfig) -> np.ndarray:
    """Frequency-space channel H = sum_l alpha_l b(tau_l) a(phi_l, theta_l)^T.

    Returns an (n_sc, M) complex matrix.  Gains must be attached to `paths`.
    """
    if paths.gains is None:
        raise ValueError("PathSet must carry gains; call draw_gains first")
    m = cfg.m_antennas
    h = np.zeros((n_sc, m), dtype=complex)
    for p, alpha in zip(paths.paths, paths.gains):
        b = steering_delay(p.delay_s, n_sc, cfg.delta_f)
        a = steering_antenna(p.elevation_rad, p.azimuth_rad, cfg.m_v, cfg.m_h)
        h += alpha * np.outer(b, a)
    return h


def draw_gains(
    paths: PathSet, rng: np.random.Generator | int, size: int | None = None
) -> np.ndarray:
    """Draw CN(0, rho_l) gains, independent across paths (and draws).

    Returns shape (L,) or, with `size`, (size, L) i.i.d. draws.
    """
    rng = np.random.default_rng(rng)
    rho = paths.powers
    shape = (len(rho),) if size is None else (size, len(rho))
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return np.sqrt(rho / 2.0) * (re + 1j * im)


@dataclass
class GridScene:
    """Per-grid ground-truth path sets over a rectangular coverage area."""

    origin: tuple[float, float]
    d: float
    n_cols: int
    n_rows: int
    records: list[PathSet] = field(default_factory=list)

    def __post_init__(self):
        if self.d <= 0:
            raise ValueError("grid size d must be > 0")

    @property
    def u_grids(self) -> int:
        return self.n_cols * self.n_rows

    def paths_for_grid(self, grid_id: int) -> PathSet:
        if not 0 <= grid_id < self.u_grids:
            raise KeyError(f"grid id {grid_id} outside [0, {self.u_grids})")
        return self.records[grid_id]

    def grid_center(self, grid_id: int) -> tuple[float, float]:
        row, col = divmod(grid_id, self.n_cols)
        return (
            self.origin[0] + (col + 0.5) * self.d,
            self.origin[1] + (row + 0.5) * self.d,
        )


@dataclass(frozen=True)
class SceneParams:
    """Hyper-parameters for the synthetic spatially consistent scene generator.

    Separations between paths are enforced on the generator coordinates
    (delta_f*tau, cos(theta), sin(theta)cos(phi)) at sep_scale/(2*dim) with
    dims (n_delay_dim, m_v, m_h); this keeps the tensor decomposition
    well-conditioned because distinct Vandermonde generators are required.
    """

    d: float = 2.0
    n_cols: int = 4
    n_rows: int = 4
    lbar: int = 4
    delay_spread_s: float = 300e-9
    correlation_length_m: float = 20.0
    n_delay_dim: int = 32
    m_v: int = 4
    m_h: int = 8
    sep_scale: float = 1.0
    theta_range: tuple[float, float] = (0.2 * math.pi, 0.8 * math.pi)
    xh_range: tuple[float, float] = (-0.55, 0.55)
    power_decay: float = 1.0
    origin: tuple[float, float] = (0.0, 0.0)

    @property
    def u_grids(self) -> int:
        return self.n_cols * self.n_rows

    def min_separations(self, delta_f: float) -> tuple[float, float, float]:
        """(delay_s, cos(theta), sin(theta)cos(phi)) separation floors."""
        return (
            self.sep_scale / (2.0 * self.n_delay_dim * delta_f),
            self.sep_scale / (2.0 * self.m_v),
            self.sep_scale / (2.0 * self.m_h),
        )


def _smooth_field(rng: np.random.Generator, params: SceneParams) -> np.ndarray:
    """One unit-variance random field on grid centers, smooth over the
    correlation length (bilinear interpolation of a coarse lattice)."""
    extent_x = params.n_cols * params.d
    extent_y = params.n_rows * params.d
    ell = params.correlation_length_m
    nx = max(2, int(math.ceil(extent_x / ell)) + 1)
    ny = max(2, int(math.ceil(extent_y / ell)) + 1)
    coarse = rng.standard_normal((ny, nx))
    # grid-center coordinates in units of the coarse lattice spacing
    xs = (np.arange(params.n_cols) + 0.5) * params.d / ell
    ys = (np.arange(params.n_rows) + 0.5) * params.d / ell
    xs = np.clip(xs, 0.0, nx - 1.0)
    ys = np.clip(ys, 0.0, ny - 1.0)
    x0 = np.minimum(xs.astype(int), nx - 2)
    y0 = np.minimum(ys.astype(int), ny - 2)
    fx = xs - x0
    fy = ys - y0
    f00 = coarse[np.ix_(y0, x0)]
    f01 = coarse[np.ix_(y0, x0 + 1)]
    f10 = coarse[np.ix_(y0 + 1, x0)]
    f11 = coarse[np.ix_(y0 + 1, x0 + 1)]
    vals = (
        f00 * np.outer(1 - fy, 1 - fx)
        + f01 * np.outer(1 - fy, fx)
        + f10 * np.outer(fy, 1 - fx)
        + f11 * np.outer(fy, fx)
    )
    return vals.reshape(-1)  # row-major: grid_id = row * n_cols + col


def _centered_layout(lo: float, hi: float, count: int) -> tuple[np.ndarray, float]:
    """Evenly spaced centers inside [lo, hi] and their spacing."""
    span = hi - lo
    centers = lo + span * (np.arange(count) + 0.5) / count
    return centers, span / count


def generate_scene(
    params: SceneParams,
    cfg: SystemConfig,
    rng: np.random.Generator | int,
) -> GridScene:
    """Build a spatially consistent scene: per-grid paths whose parameters
    vary smoothly across grids and satisfy the configured separations.

    Per path the delay / angle / power fields share one coarse random field
    each, so grids much closer than the correlation length receive nearly
    identical parameters.  Total path power is normalised to 1 per grid.
    """
    if params.lbar < 1:
        raise ValueError("lbar must be >= 1")
    rng = np.random.default_rng(rng)
    lbar = params.lbar

    sep_tau, sep_cos_v, sep_xh = params.min_separations(cfg.delta_f)

    tau_centers, tau_spacing = _centered_layout(0.0, params.delay_spread_s, lbar)
    cos_lo = math.cos(params.theta_range[1])
    cos_hi = math.cos(params.theta_range[0])
    cos_centers, cos_spacing = _centered_layout(cos_lo, cos_hi, lbar)
    xh_centers, xh_spacing = _centered_layout(*params.xh_range, lbar)

    # jitter at 30% of the center spacing leaves at least 40% spacing between
    # neighbours; reject configurations whose floors cannot fit even then
    checks = [
        ("delay", sep_tau, 0.4 * tau_spacing if lbar > 1 else math.inf),
        ("cos(theta)", sep_cos_v, 0.4 * cos_spacing if lbar > 1 else math.inf),
        ("sin(theta)cos(phi)", sep_xh, 0.4 * xh_spacing if lbar > 1 else math.inf),
    ]
    for name, need, have in checks:
        if need > have:
            raise SceneGenerationError(
                f"{lbar} paths cannot keep the configured {name} separation "
                f"({need:.3g} needed, {have:.3g} achievable); reduce lbar, "
                f"widen the parameter range, or lower sep_scale"
            )

    u = params.u_grids
    taus = np.empty((u, lbar))
    cos_vs = np.empty((u, lbar))
    xhs = np.empty((u, lbar))
    pow_fields = np.empty((u, lbar))
    # order paths consistently across grids so each path index has its own
    # smooth field and neighbouring grids stay correlated per path
    rng_perm = rng.permutation(lbar)
    for j, l in enumerate(rng_perm):
        taus[:, j] = tau_centers[l] + 0.3 * tau_spacing * _smooth_field(rng, params)
        cos_vs[:, j] = cos_centers[l] + 0.3 * cos_spacing * _smooth_field(rng, params)
        xhs[:, j] = xh_centers[l] + 0.3 * xh_spacing * _smooth_field(rng, params)
        pow_fields[:, j] = _smooth_field(rng, params)

    taus = np.clip(taus, 0.0, None)
    cos_vs = np.clip(cos_vs, -0.999, 0.999)

    records: list[PathSet] = []
    for g in range(u):
        theta = np.arccos(cos_vs[g])
        sin_theta = np.sin(theta)
        ratio = np.clip(xhs[g] / sin_theta, -0.999, 0.999)
        phi = np.arccos(ratio)
        rho = np.exp(-params.power_decay * taus[g] / max(params.delay_spread_s, 1e-30))
        rho = rho * np.exp(0.5 * pow_fields[g])
        rho = rho / rho.sum()
        _check_separations(
            taus[g], cos_vs[g], sin_theta * np.cos(phi), (sep_tau, sep_cos_v, sep_xh), g
        )
        paths = [
            PathParams(float(taus[g, l]), float(theta[l]), float(phi[l]), float(rho[l]))
            for l in range(lbar)
        ]
        records.append(PathSet(paths))

    return GridScene(params.origin, params.d, params.n_cols, params.n_rows, records)


def _check_separations(taus, cos_vs, xhs, floors, grid_id):
    sep_tau, sep_cos_v, sep_xh = floors
    L = len(taus)
    for i in range(L):
        for j in range(i + 1, L):
            if abs(taus[i] - taus[j]) < sep_tau:
                raise SceneGenerationError(
                    f"grid {grid_id}: delays {i},{j} collide within {sep_tau:.3g} s"
                )
            if abs(cos_vs[i] - cos_vs[j]) < sep_cos_v:
                raise SceneGenerationError(
                    f"grid {grid_id}: elevations {i},{j} collide within {sep_cos_v:.3g}"
                )
            if abs(xhs[i] - xhs[j]) < sep_xh:
                raise SceneGenerationError(
                    f"grid {grid_id}: azimuth generators {i},{j} collide "
                    f"within {sep_xh:.3g}"
                )


# ---------------------------------------------------------------------------
# scene file format: versioned CSV, one row per (grid, path)
# ---------------------------------------------------------------------------


def save_scene(scene: GridScene, path) -> None:
    """Write `#scene v1` CSV: rows grid_id,l,tau_s,theta_rad,phi_rad,rho."""
    lbar = len(scene.records[0]) if scene.records else 0
    with open(path, "w") as f:
        f.write(f"#scene v1, d={scene.d!r}, U={scene.u_grids}, Lbar={lbar}\n")
        f.write(
            f"#geom origin_x={scene.origin[0]!r}, origin_y={scene.origin[1]!r}, "
            f"cols={scene.n_cols}, rows={scene.n_rows}\n"
        )
        f.write("grid_id,l,tau_s,theta_rad,phi_rad,rho\n")
        for g, rec in enumerate(scene.records):
            for l, p in enumerate(rec.paths):
                f.write(
                    f"{g},{l},{p.delay_s!r},{p.elevation_rad!r},"
                    f"{p.azimuth_rad!r},{p.power!r}\n"
                )


def load_scene(path) -> GridScene:
    """Read a `#scene v1` CSV written by save_scene."""
    with open(path) as f:
        header = f.readline().strip()
        if not header.startswith("#scene v1"):
            raise ValueError(f"not a scene v1 file: {header!r}")
        meta = dict(
            item.strip().split("=") for item in header.split(",")[1:] if "=" in item
        )
        d = float(meta["d"])
        u = int(meta["U"])
        geom = f.readline().strip()
        if not geom.startswith("#geom"):
            raise ValueError("missing #geom line")
        gmeta = dict(
            item.strip().split("=") for item in geom[len("#geom") :].split(",")
        )
        origin = (float(gmeta["origin_x"]), float(gmeta["origin_y"]))
        n_cols = int(gmeta["cols"])
        n_rows = int(gmeta["rows"])
        f.readline()  # column header
        rows: dict[int, list[tuple[int, PathParams]]] = {}
        for line in f:
            line = line.strip()
            if not line:
                continue
            g_s, l_s, tau_s, th_s, ph_s, rho_s = line.split(",")
            rows.setdefault(int(g_s), []).append(
                (int(l_s), PathParams(float(tau_s), float(th_s), float(ph_s), float(rho_s)))
            )
    if n_cols * n_rows != u:
        raise ValueError("geometry does not match U")
    records = []
    for g in range(u):
        if g not in rows:
            raise ValueError(f"grid {g} missing from scene file")
        entries = sorted(rows[g])
        records.append(PathSet([p for _, p in entries]))
    return GridScene(origin, d, n_cols, n_rows, records)
