"""Type II DMRS resource mapping, cover codes, and received-signal synthesis.

Three CDM groups split the band into interleaved 2-subcarrier combs.  Users
inside a group are separated by a frequency-domain cyclic-shift cover and a
+-1 time-domain cover over the pilot symbols.  All index math is 0-based.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import SystemConfig
from .scene import PathSet

N_GROUPS = 3


@dataclass(frozen=True)
class DmrsAllocation:
    """Pilot-port assignment of one user."""

    user: int
    cdm_group: int
    cyclic_shift: int
    occ_set: int  # 0 for the (+,+) set, 1 for the (+,-) set
    time_occ: tuple[int, ...]


@dataclass
class PilotGrid:
    """Received pilot blocks and the sequences that produced them.

    y has shape (G, T_p, N, M); pilot_sets has shape (G, N) and holds the
    absolute subcarrier index of every comb position; sequences has shape
    (G, N) with unit-modulus entries.
    """

    pilot_sets: np.ndarray
    sequences: np.ndarray
    y: np.ndarray

    @property
    def n_groups(self) -> int:
        return self.y.shape[0]

    @property
    def t_p(self) -> int:
        return self.y.shape[1]


def pilot_subcarrier_set(group: int, n_c: int) -> np.ndarray:
    """Comb subcarrier indices of one CDM group: {6m+2i, 6m+2i+1}.

    The three groups partition [0, n_c) into disjoint 2-subcarrier combs,
    matching the Type II resource-grid picture.
    """
    if not 0 <= group < N_GROUPS:
        raise ValueError(f"group must be in [0, {N_GROUPS}), got {group}")
    if n_c % 6 != 0:
        raise ValueError("n_c must be divisible by 6")
    base = 6 * np.arange(n_c // 6)
    return np.sort(np.concatenate([base + 2 * group, base + 2 * group + 1]))


_SHIFT_SLOTS = (0, 1, 2, 3)  # numerators of {0, N/4, N/2, 3N/4}


def allowed_cyclic_shifts(n: int) -> tuple[int, ...]:
    return tuple(s * n // 4 for s in _SHIFT_SLOTS)


def freq_occ_diag(cyclic_shift: int, n: int) -> np.ndarray:
    """Diagonal of C_k: entry m = exp(j 2 pi m shift / N)."""
    if cyclic_shift not in allowed_cyclic_shifts(n):
        raise ValueError(
            f"cyclic shift {cyclic_shift} not in {allowed_cyclic_shifts(n)}"
        )
    return np.exp(2j * np.pi * np.arange(n) * cyclic_shift / n)


def assign_allocations(cfg: SystemConfig) -> list[DmrsAllocation]:
    """Assign every user a CDM group, OCC set, time cover, and cyclic shift.

    Users [i*K/G, (i+1)*K/G) land in group i; the first half of each group
    uses time cover (+,+), the second (+,-).  Within each set the cyclic
    shifts walk round-robin through {0, N/4, N/2, 3N/4}.
    """
    k = cfg.k_users
    g = cfg.g_groups
    n = cfg.n_pilot
    per_group = k // g
    per_set = per_group // 2
    if per_set > 4:
        raise ValueError("more than 4 users per OCC set: no free cyclic shifts")
    shifts = allowed_cyclic_shifts(n)
    signs = ((1,) * cfg.t_p, tuple((-1) ** t for t in range(cfg.t_p)))
    allocations = []
    for user in range(k):
        group, within = divmod(user, per_group)
        occ_set, rank = divmod(within, per_set)
        allocations.append(
            DmrsAllocation(
                user=user,
                cdm_group=group,
                cyclic_shift=shifts[rank % 4],
                occ_set=occ_set,
                time_occ=signs[occ_set],
            )
        )
    return allocations


def check_time_occ(allocations: list[DmrsAllocation], t_p: int) -> bool:
    """Orthogonality of the time covers: (1/T_p) sum_t w_p w_q is 1 within a
    set and 0 across sets (inside the same CDM group)."""
    for a in allocations:
        for b in allocations:
            if a.cdm_group != b.cdm_group:
                continue
            acc = sum(wa * wb for wa, wb in zip(a.time_occ, b.time_occ)) / t_p
            want = 1.0 if a.occ_set == b.occ_set else 0.0
            if abs(acc - want) > 1e-15:
                return False
    return True


def make_pilot_sequences(cfg: SystemConfig, rng: np.random.Generator | int) -> np.ndarray:
    """Unit-modulus pseudo-random QPSK pilot sequence per group, shape (G, N)."""
    rng = np.random.default_rng(rng)
    symbols = rng.integers(0, 4, size=(cfg.g_groups, cfg.n_pilot))
    return np.exp(1j * (np.pi / 4 + np.pi / 2 * symbols))


def synth_received(
    channels: np.ndarray,
    allocations: list[DmrsAllocation],
    sequences: np.ndarray,
    noise_var: float,
    cfg: SystemConfig,
    rng: np.random.Generator | int,
) -> PilotGrid:
    """Superimpose every user's covered pilot onto its group's comb.

    channels: (K, n_c, M) frequency-space channels, assumed constant over
    the T_p pilot symbols, or (K, T_p, n_c, M) for per-symbol channels.
    Noise is i.i.d. circular Gaussian with variance noise_var per entry.
    """
    rng = np.random.default_rng(rng)
    channels = np.asarray(channels, dtype=complex)
    if channels.ndim == 3:
        channels = np.broadcast_to(
            channels[:, None, :, :], (channels.shape[0], cfg.t_p) + channels.shape[1:]
        )
    k, t_p, n_c, m = channels.shape
    if k != len(allocations) or t_p != cfg.t_p or n_c != cfg.n_c:
        raise ValueError("channel array shape does not match the configuration")
    n = cfg.n_pilot
    pilot_sets = np.stack(
        [pilot_subcarrier_set(i, cfg.n_c) for i in range(cfg.g_groups)]
    )
    y = np.zeros((cfg.g_groups, t_p, n, m), dtype=complex)
    for alloc in allocations:
        i = alloc.cdm_group
        comb = pilot_sets[i]
        c_k = freq_occ_diag(alloc.cyclic_shift, n)
        phase = sequences[i] * c_k  # diag(S_i) * diag(C_k)
        for t in range(t_p):
            h_ps = channels[alloc.user, t][comb]  # P_i H_k(t)
            y[i, t] += alloc.time_occ[t] * phase[:, None] * h_ps
    if noise_var > 0:
        noise = rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape)
        y += np.sqrt(noise_var / 2.0) * noise
    return PilotGrid(pilot_sets=pilot_sets, sequences=sequences, y=y)


def ls_depilot(y_group: np.ndarray, sequence: np.ndarray) -> np.ndarray:
    """Undo the pilot sequence: S_i^H Y_i(t) for every pilot symbol.

    y_group: (T_p, N, M) or (N, M); unit-modulus sequence of length N.
    """
    conj = np.conj(sequence)
    if y_group.ndim == 2:
        return conj[:, None] * y_group
    return conj[None, :, None] * y_group


def time_occ_decouple(y_ls: np.ndarray, time_occ: tuple[int, ...]) -> np.ndarray:
    """Average the de-piloted symbols with the target user's time cover.

    Removes the other OCC set exactly when the channel is constant over the
    pilot symbols; noise variance drops to noise_var / T_p.
    """
    t_p = y_ls.shape[0]
    if len(time_occ) != t_p:
        raise ValueError("time cover length must match the symbol count")
    w = np.asarray(time_occ, dtype=float)
    return np.tensordot(w, y_ls, axes=(0, 0)) / t_p


def trivial_estimate(
    grid: PilotGrid,
    allocations: list[DmrsAllocation],
    cfg: SystemConfig,
) -> dict[int, np.ndarray]:
    """Cover-orthogonality baseline: LS, time decoupling, despreading under a
    locally flat channel, then linear interpolation to the full band.

    The cyclic-shift phases repeat with period 4 along the comb, so the
    despread signal is averaged over blocks of 4 comb positions; that
    cancels every other shift exactly when the channel is flat across the
    block and leaves a residual that grows with delay spread otherwise.
    """
    n = cfg.n_pilot
    n_blocks = n // 4
    estimates: dict[int, np.ndarray] = {}
    for alloc in allocations:
        i = alloc.cdm_group
        y_ls = ls_depilot(grid.y[i], grid.sequences[i])
        y_set = time_occ_decouple(y_ls, alloc.time_occ)
        despread = np.conj(freq_occ_diag(alloc.cyclic_shift, n))[:, None] * y_set
        blocks = despread[: 4 * n_blocks].reshape(n_blocks, 4, -1).mean(axis=1)
        comb = grid.pilot_sets[i]
        block_pos = comb[: 4 * n_blocks].reshape(n_blocks, 4).mean(axis=1)
        full = np.empty((cfg.n_c, cfg.m_antennas), dtype=complex)
        sc = np.arange(cfg.n_c, dtype=float)
        for ant in range(cfg.m_antennas):
            full[:, ant] = np.interp(sc, block_pos, blocks[:, ant])
        estimates[alloc.user] = full
    return estimates


def synth_user_channels(
    path_sets: dict[int, PathSet],
    cfg: SystemConfig,
    rng: np.random.Generator | int,
) -> np.ndarray:
    """Draw gains and synthesise one (K, n_c, M) channel array for all users."""
    from .scene import draw_gains, synth_channel

    rng = np.random.default_rng(rng)
    out = np.zeros((cfg.k_users, cfg.n_c, cfg.m_antennas), dtype=complex)
    for user in range(cfg.k_users):
        paths = path_sets[user]
        gains = draw_gains(paths, rng)
        out[user] = synth_channel(paths.with_gains(gains), cfg.n_c, cfg)
    return out
