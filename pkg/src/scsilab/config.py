"""System-level configuration shared by all stages of the pipeline."""

from __future__ import annotations

from dataclasses import dataclass, replace


@dataclass(frozen=True)
class SystemConfig:
    """OFDM / array / pilot dimensioning for one simulation setup.

    Attributes
    ----------
    n_fft : int
        FFT size of the OFDM modulator.
    n_c : int
        Number of data subcarriers actually transmitted.
    delta_f : float
        Subcarrier spacing in Hz.
    g_groups : int
        Number of CDM groups sharing the band (the Type II pattern uses 3).
    t_p : int
        Number of OFDM symbols carrying pilots.
    m_v, m_h : int
        Vertical / horizontal antenna counts of the uniform planar array.
    k_users : int
        Number of simultaneously scheduled uplink users.
    noise_var : float
        Noise variance per complex received entry (linear power).
    kaiser_shape : float
        Shape parameter for the Kaiser window used by the windowed estimator.
    """

    n_fft: int = 4096
    n_c: int = 96
    delta_f: float = 30e3
    g_groups: int = 3
    t_p: int = 2
    m_v: int = 2
    m_h: int = 8
    k_users: int = 12
    noise_var: float = 0.1
    kaiser_shape: float = 3.95

    def __post_init__(self):
        if self.g_groups != 3:
            raise ValueError("the comb pattern is defined for exactly 3 CDM groups")
        if self.n_c % 6 != 0 or self.n_c % self.g_groups != 0:
            raise ValueError("n_c must be divisible by 6 and by the group count")
        n = self.n_c // self.g_groups
        # shifts {0, N/4, N/2, 3N/4} must be integers and sum to zero over
        # the comb, which needs N divisible by 4 (implies the spec's N even)
        if n % 4 != 0:
            raise ValueError("pilot comb length N = n_c/G must be divisible by 4")
        if self.k_users % (2 * self.g_groups) != 0:
            raise ValueError("k_users must be divisible by 2*G")
        if self.k_users // (2 * self.g_groups) > 4:
            raise ValueError("more than 4 users per OCC set: no free cyclic shifts")
        if self.m_v < 1 or self.m_h < 1:
            raise ValueError("antenna counts must be >= 1")
        if self.t_p < 1:
            raise ValueError("t_p must be >= 1")
        if self.noise_var < 0:
            raise ValueError("noise_var must be >= 0")

    @property
    def n_pilot(self) -> int:
        """Pilot subcarriers per CDM group (N)."""
        return self.n_c // self.g_groups

    @property
    def m_antennas(self) -> int:
        """Total antenna count M = m_v * m_h."""
        return self.m_v * self.m_h

    def with_noise_var(self, noise_var: float) -> "SystemConfig":
        return replace(self, noise_var=noise_var)


def desk_config(**overrides) -> SystemConfig:
    """Scaled-down defaults that keep every experiment tractable on a desk."""
    return SystemConfig(**overrides)


def paper_scale_config(**overrides) -> SystemConfig:
    """Full-size parameter set (816 subcarriers, 64 antennas, 24 users)."""
    params = dict(
        n_fft=4096,
        n_c=816,
        delta_f=30e3,
        g_groups=3,
        t_p=2,
        m_v=4,
        m_h=16,
        k_users=24,
        noise_var=0.1,
        kaiser_shape=3.95,
    )
    params.update(overrides)
    return SystemConfig(**params)


def snr_db_to_noise_var(snr_db: float, signal_power: float = 1.0) -> float:
    """Noise variance for a target SNR given total per-user channel power."""
    return signal_power * 10.0 ** (-snr_db / 10.0)
