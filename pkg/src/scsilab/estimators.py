"""Statistics-assisted Bayesian channel estimators.

Two flavours share one signal path (LS de-piloting and time-cover
decoupling, both in dmrs.py):

* the antenna-frequency estimator applies a per-OCC-set MMSE decomposition
  of the frequency covers followed by an antenna-domain MMSE smoother;
* the windowed variant runs the same algebra in the beam-delay domain,
  where windowing concentrates the correlation energy near the diagonal so
  the Gram systems can be truncated to band matrices and solved at
  O(N B^2) instead of O(N^3).

With full bands and any invertible window the two are algebraically
identical; the band truncation is the only approximation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.linalg import cho_factor, cho_solve, dft

from .banded import BandedHermitianSolver, band_truncate
from .config import SystemConfig
from .dmrs import DmrsAllocation, PilotGrid, freq_occ_diag, ls_depilot, time_occ_decouple
from .scene import PathSet, steering_antenna, steering_delay

LOADING_REL = 1e-10


class IllConditionedGramError(np.linalg.LinAlgError):
    """Gram matrix could not be factored even after diagonal loading."""


@dataclass
class ScsiCorrelations:
    """Frequency (n_c x n_c) and antenna (M x M) channel correlations."""

    r_f: np.ndarray
    r_s: np.ndarray
    paths: PathSet


@dataclass
class WindowPair:
    """Frequency and antenna windows with their DFT-domain noise shapes."""

    eta_f: np.ndarray
    eta_v: np.ndarray
    eta_h: np.ndarray

    def __post_init__(self):
        for eta in (self.eta_f, self.eta_v, self.eta_h):
            if np.any(eta <= 0):
                raise ValueError("window entries must be > 0 (invertible diagonal)")

    @property
    def eta_s(self) -> np.ndarray:
        return np.kron(self.eta_v, self.eta_h)

    def xi_f(self) -> np.ndarray:
        f = dft_matrix(len(self.eta_f))
        return f.conj().T @ (self.eta_f[:, None] ** 2 * f)

    def xi_s(self) -> np.ndarray:
        fa = dft_antenna(len(self.eta_v), len(self.eta_h))
        return fa.conj().T @ (self.eta_s[:, None] ** 2 * fa)


@dataclass(frozen=True)
class BandSpec:
    """Half bandwidths for the delay- and beam-domain Gram systems."""

    b_tau: int
    b_a: int

    def __post_init__(self):
        if self.b_tau < 0 or self.b_a < 0:
            raise ValueError("band sizes must be >= 0")

    @staticmethod
    def full(cfg: SystemConfig) -> "BandSpec":
        return BandSpec(cfg.n_pilot - 1, cfg.m_antennas - 1)


@dataclass(frozen=True)
class EstimatorOptions:
    """Noise bookkeeping knobs left open by the estimator equations.

    noise_convention: "post_averaging" treats the Gram noise term as the
    variance after time-cover averaging (noise_var / T_p); "paper" keeps
    the raw per-entry variance.
    antenna_noise: "paper" reuses the frequency-stage value in the antenna
    smoother; "residual" rescales it by the frequency-stage residual error
    tr(R_e)/N.
    """

    noise_convention: str = "post_averaging"
    antenna_noise: str = "paper"

    def freq_noise(self, noise_var: float, t_p: int) -> float:
        if self.noise_convention == "post_averaging":
            return noise_var / t_p
        if self.noise_convention == "paper":
            return noise_var
        raise ValueError(f"unknown noise convention {self.noise_convention!r}")


@dataclass
class RunStats:
    """Counters accumulated by the banded estimator."""

    banded_solves: int = 0
    dense_fallbacks: int = 0


def dft_matrix(n: int) -> np.ndarray:
    """Unitary DFT, entry (i, j) = exp(-j 2 pi i j / n) / sqrt(n)."""
    return dft(n, scale="sqrtn")


def dft_antenna(m_v: int, m_h: int) -> np.ndarray:
    """Array-domain DFT F_{m_v} kron F_{m_h} (vertical-major flattening)."""
    return np.kron(dft_matrix(m_v), dft_matrix(m_h))


def _loaded(mat: np.ndarray) -> np.ndarray:
    """Diagonal loading at LOADING_REL * trace / dim, for rank-deficient R."""
    n = mat.shape[0]
    return mat + (LOADING_REL * np.trace(mat).real / n) * np.eye(n)


def _hermitize(mat: np.ndarray) -> np.ndarray:
    return 0.5 * (mat + mat.conj().T)


def _cho(mat: np.ndarray):
    try:
        return cho_factor(_loaded(mat))
    except np.linalg.LinAlgError as exc:
        raise IllConditionedGramError(
            "Gram matrix not positive definite after diagonal loading"
        ) from exc


def build_correlations(paths: PathSet, cfg: SystemConfig) -> ScsiCorrelations:
    """Rank-1 sums over paths: R_f = sum rho b b^H, R_s = sum rho a a^H."""
    b = np.stack(
        [steering_delay(p.delay_s, cfg.n_c, cfg.delta_f) for p in paths.paths], axis=1
    )
    a = np.stack(
        [steering_antenna(p.elevation_rad, p.azimuth_rad, cfg.m_v, cfg.m_h) for p in paths.paths],
        axis=1,
    )
    rho = paths.powers
    r_f = _hermitize((b * rho) @ b.conj().T)
    r_s = _hermitize((a * rho) @ a.conj().T)
    return ScsiCorrelations(r_f=r_f, r_s=r_s, paths=paths)


def comb_steering(paths: PathSet, comb: np.ndarray, delta_f: float) -> np.ndarray:
    """Delay steering vectors sampled on the comb, one column per path."""
    taus = paths.delays
    return np.exp(-2j * np.pi * np.asarray(comb)[:, None] * delta_f * taus[None, :])


def comb_correlation(paths: PathSet, comb: np.ndarray, delta_f: float) -> np.ndarray:
    """Frequency correlation restricted to the comb: P_i R_f P_i^T."""
    b = comb_steering(paths, comb, delta_f)
    return _hermitize((b * paths.powers) @ b.conj().T)


def antenna_correlation(paths: PathSet, m_v: int, m_h: int) -> np.ndarray:
    a = np.stack(
        [steering_antenna(p.elevation_rad, p.azimuth_rad, m_v, m_h) for p in paths.paths],
        axis=1,
    )
    return _hermitize((a * paths.powers) @ a.conj().T)


def _set_gram(
    set_allocs: list[DmrsAllocation],
    comb_corrs: Mapping[int, np.ndarray],
    noise_var_eff: float,
    n: int,
) -> np.ndarray:
    gram = noise_var_eff * np.eye(n, dtype=complex)
    for alloc in set_allocs:
        c = freq_occ_diag(alloc.cyclic_shift, n)
        r = comb_corrs[alloc.user]
        gram = gram + (c[:, None] * r) * np.conj(c)[None, :]
    return gram


def freq_mmse_decompose(
    y_dec: np.ndarray,
    user_alloc: DmrsAllocation,
    set_allocs: list[DmrsAllocation],
    scsi: Mapping[int, PathSet],
    noise_var_eff: float,
    cfg: SystemConfig,
    comb: np.ndarray,
) -> np.ndarray:
    """MMSE separation of the frequency covers for one user.

    y_dec is the decoupled (N, M) pilot-segment signal of the user's OCC
    set; noise_var_eff is the per-entry noise variance of y_dec.
    """
    n = cfg.n_pilot
    comb_corrs = {a.user: comb_correlation(scsi[a.user], comb, cfg.delta_f) for a in set_allocs}
    gram = _set_gram(set_allocs, comb_corrs, noise_var_eff, n)
    x = cho_solve(_cho(gram), y_dec)
    c_u = freq_occ_diag(user_alloc.cyclic_shift, n)
    return comb_corrs[user_alloc.user] @ (np.conj(c_u)[:, None] * x)


def antenna_mmse(h_ps: np.ndarray, r_s: np.ndarray, noise_var_eff: float) -> np.ndarray:
    """Antenna-domain smoother: H^T <- R_s (R_s + sigma^2 I)^{-1} H^T."""
    m = r_s.shape[0]
    gram = r_s + noise_var_eff * np.eye(m)
    x = cho_solve(_cho(gram), h_ps.T)
    return (r_s @ x).T


def interpolate_to_full(h_ps: np.ndarray, comb: np.ndarray, n_c: int) -> np.ndarray:
    """Linear interpolation from comb positions to the full band, constant
    beyond the first/last pilot subcarrier."""
    sc = np.arange(n_c, dtype=float)
    out = np.empty((n_c, h_ps.shape[1]), dtype=complex)
    pos = np.asarray(comb, dtype=float)
    for ant in range(h_ps.shape[1]):
        out[:, ant] = np.interp(sc, pos, h_ps[:, ant])
    return out


def _residual_noise(
    user_alloc: DmrsAllocation,
    set_allocs: list[DmrsAllocation],
    comb_corrs: Mapping[int, np.ndarray],
    noise_var_eff: float,
    n: int,
) -> float:
    """Frequency-stage residual error power tr(R_e)/N for one user."""
    gram = _set_gram(set_allocs, comb_corrs, noise_var_eff, n)
    r_u = comb_corrs[user_alloc.user]
    c_u = freq_occ_diag(user_alloc.cyclic_shift, n)
    cross = (c_u[:, None] * r_u).conj().T  # (P R P^T C^H)^H with R Hermitian
    x = cho_solve(_cho(gram), cross)
    r_e = r_u - cross.conj().T @ x
    return float(np.trace(r_e).real) / n


def _antenna_noise_for_user(
    options: EstimatorOptions,
    sigma_f: float,
    user_alloc: DmrsAllocation,
    set_allocs: list[DmrsAllocation],
    comb_corrs: Mapping[int, np.ndarray],
    n: int,
) -> float:
    if options.antenna_noise == "paper":
        return sigma_f
    if options.antenna_noise == "residual":
        return sigma_f * _residual_noise(user_alloc, set_allocs, comb_corrs, sigma_f, n)
    raise ValueError(f"unknown antenna noise mode {options.antenna_noise!r}")


def _group_sets(allocations: list[DmrsAllocation], cfg: SystemConfig):
    for i in range(cfg.g_groups):
        for s in (0, 1):
            members = [a for a in allocations if a.cdm_group == i and a.occ_set == s]
            if members:
                yield i, s, members


def sa_bce(
    grid: PilotGrid,
    allocations: list[DmrsAllocation],
    scsi: Mapping[int, PathSet],
    noise_var: float,
    cfg: SystemConfig,
    options: EstimatorOptions | None = None,
) -> dict[int, np.ndarray]:
    """Antenna-frequency statistics-assisted estimator for every user.

    scsi maps each user to the path set assumed by the estimator (ground
    truth or a database record).  Returns full-band (n_c, M) estimates.
    """
    options = options or EstimatorOptions()
    n = cfg.n_pilot
    sigma_f = options.freq_noise(noise_var, cfg.t_p)
    estimates: dict[int, np.ndarray] = {}
    for i, _s, members in _group_sets(allocations, cfg):
        comb = grid.pilot_sets[i]
        y_ls = ls_depilot(grid.y[i], grid.sequences[i])
        y_dec = time_occ_decouple(y_ls, members[0].time_occ)
        comb_corrs = {
            a.user: comb_correlation(scsi[a.user], comb, cfg.delta_f) for a in members
        }
        gram = _set_gram(members, comb_corrs, sigma_f, n)
        x = cho_solve(_cho(gram), y_dec)
        for alloc in members:
            c_u = freq_occ_diag(alloc.cyclic_shift, n)
            h_ps = comb_corrs[alloc.user] @ (np.conj(c_u)[:, None] * x)
            sigma_a = _antenna_noise_for_user(
                options, sigma_f, alloc, members, comb_corrs, n
            )
            r_s = antenna_correlation(scsi[alloc.user], cfg.m_v, cfg.m_h)
            h_ps = antenna_mmse(h_ps, r_s, sigma_a)
            estimates[alloc.user] = interpolate_to_full(h_ps, comb, cfg.n_c)
    return estimates


# ---------------------------------------------------------------------------
# beam-delay domain (windowed) estimator
# ---------------------------------------------------------------------------


def make_window(
    kind: str,
    n: int,
    m_v: int,
    m_h: int,
    shape: float | None = None,
) -> WindowPair:
    """1-D windows on the comb and both array axes, unit-maximum entries.

    kind is one of "rectangular", "hann", "kaiser" (the latter takes the
    shape parameter; shape 0 degenerates to rectangular).  The Hann window
    is evaluated on interior points only so every entry stays positive.
    """

    def one(length: int) -> np.ndarray:
        if kind == "rectangular":
            return np.ones(length)
        if kind == "hann":
            k = np.arange(1, length + 1)
            w = 0.5 - 0.5 * np.cos(2 * np.pi * k / (length + 1))
            return w / w.max()
        if kind == "kaiser":
            beta = 0.0 if shape is None else float(shape)
            if beta < 0:
                raise ValueError("kaiser shape must be >= 0")
            if length == 1:
                return np.ones(1)
            w = np.kaiser(length, beta)
            return w / w.max()
        raise ValueError(f"unknown window kind {kind!r}")

    return WindowPair(eta_f=one(n), eta_v=one(m_v), eta_h=one(m_h))


def beam_delay_correlations(
    paths: PathSet,
    alloc: DmrsAllocation,
    window: WindowPair | None,
    cfg: SystemConfig,
    comb: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Windowed delay- and beam-domain correlations of one user.

    R_tau = sum_l rho_l bt bt^H with bt = F_N^H Lambda_f C_u P_i b(tau_l);
    R_a likewise from at = (F^A)^H Lambda_s a.  window=None means the
    identity window (plain beam-delay correlations).
    """
    n = cfg.n_pilot
    f_n = dft_matrix(n)
    f_a = dft_antenna(cfg.m_v, cfg.m_h)
    eta_f = window.eta_f if window is not None else np.ones(n)
    eta_s = window.eta_s if window is not None else np.ones(cfg.m_antennas)
    c_u = freq_occ_diag(alloc.cyclic_shift, n)
    b = comb_steering(paths, comb, cfg.delta_f)
    bt = f_n.conj().T @ (eta_f[:, None] * (c_u[:, None] * b))
    a = np.stack(
        [steering_antenna(p.elevation_rad, p.azimuth_rad, cfg.m_v, cfg.m_h) for p in paths.paths],
        axis=1,
    )
    at = f_a.conj().T @ (eta_s[:, None] * a)
    rho = paths.powers
    r_tau = _hermitize((bt * rho) @ bt.conj().T)
    r_a = _hermitize((at * rho) @ at.conj().T)
    return r_tau, r_a


def sa_wbce(
    grid: PilotGrid,
    allocations: list[DmrsAllocation],
    scsi: Mapping[int, PathSet],
    noise_var: float,
    cfg: SystemConfig,
    window: WindowPair | None = None,
    bands: BandSpec | None = None,
    options: EstimatorOptions | None = None,
    stats: RunStats | None = None,
) -> dict[int, np.ndarray]:
    """Windowed beam-delay estimator with band-truncated Gram systems.

    With bands=None (full) and any invertible window the output matches
    sa_bce up to diagonal-loading roundoff; smaller bands trade accuracy
    for O(N B_tau^2 + M B_a^2) solves.  Banded factorizations that lose
    positive definiteness fall back to dense solves, counted in stats.
    """
    options = options or EstimatorOptions()
    if window is None:
        window = make_window("rectangular", cfg.n_pilot, cfg.m_v, cfg.m_h)
    if bands is None:
        bands = BandSpec.full(cfg)
    n = cfg.n_pilot
    m = cfg.m_antennas
    b_tau = min(bands.b_tau, n - 1)
    b_a = min(bands.b_a, m - 1)
    sigma_f = options.freq_noise(noise_var, cfg.t_p)
    f_n = dft_matrix(n)
    f_a = dft_antenna(cfg.m_v, cfg.m_h)
    eta_f = window.eta_f
    eta_s = window.eta_s
    xi_f = band_truncate(window.xi_f(), b_tau)
    xi_s = band_truncate(window.xi_s(), b_a)

    estimates: dict[int, np.ndarray] = {}
    for i, _s, members in _group_sets(allocations, cfg):
        comb = grid.pilot_sets[i]
        y_ls = ls_depilot(grid.y[i], grid.sequences[i])
        y_dec = time_occ_decouple(y_ls, members[0].time_occ)

        r_tau_hat: dict[int, np.ndarray] = {}
        r_a_hat: dict[int, np.ndarray] = {}
        for alloc in members:
            r_tau, r_a = beam_delay_correlations(
                scsi[alloc.user], alloc, window, cfg, comb
            )
            r_tau_hat[alloc.user] = band_truncate(r_tau, b_tau)
            r_a_hat[alloc.user] = band_truncate(r_a, b_a)

        gram_f = sigma_f * xi_f.astype(complex)
        for alloc in members:
            gram_f = gram_f + r_tau_hat[alloc.user]
        solver_f = BandedHermitianSolver(_loaded(gram_f), b_tau)
        if stats is not None:
            stats.banded_solves += 1
            stats.dense_fallbacks += int(solver_f.used_fallback)

        t_f = f_n.conj().T @ (eta_f[:, None] * y_dec)
        x = solver_f.solve(t_f)

        comb_corrs = None
        for alloc in members:
            h_ps = (1.0 / eta_f)[:, None] * (
                np.conj(freq_occ_diag(alloc.cyclic_shift, n))[:, None]
                * (f_n @ (r_tau_hat[alloc.user] @ x))
            )
            if options.antenna_noise == "residual" and comb_corrs is None:
                comb_corrs = {
                    a.user: comb_correlation(scsi[a.user], comb, cfg.delta_f)
                    for a in members
                }
            sigma_a = (
                sigma_f
                if options.antenna_noise == "paper"
                else sigma_f
                * _residual_noise(alloc, members, comb_corrs, sigma_f, n)
            )
            gram_a = r_a_hat[alloc.user] + sigma_a * xi_s.astype(complex)
            solver_a = BandedHermitianSolver(_loaded(gram_a), b_a)
            if stats is not None:
                stats.banded_solves += 1
                stats.dense_fallbacks += int(solver_a.used_fallback)
            t_a = f_a.conj().T @ (eta_s[:, None] * h_ps.T)
            x_a = solver_a.solve(t_a)
            h_ps = ((1.0 / eta_s)[:, None] * (f_a @ (r_a_hat[alloc.user] @ x_a))).T
            estimates[alloc.user] = interpolate_to_full(h_ps, comb, cfg.n_c)
    return estimates
