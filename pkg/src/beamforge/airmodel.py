"""Physical-layer model: ULA steering vectors, Saleh-Valenzuela channels,
the beam-steering codebook, partial-beam measurements and beam labels.

Beam indices are 1-based throughout, as in the codebook definition
``w(n) = alpha(N_A, -1 + (2n - 1) / N_A)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import complex_normal


class ConfigError(ValueError):
    """Invalid scenario or training configuration."""


@dataclass(frozen=True)
class ScenarioConfig:
    n_antennas: int = 256
    n_rf: int = 8
    n_slots: int = 16
    n_users: int = 3
    n_paths: int = 3
    los_gain_var: float = 1.0
    nlos_gain_var: float = 0.01

    def __post_init__(self):
        for name in ("n_antennas", "n_rf", "n_slots", "n_users", "n_paths"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.n_rf > self.n_antennas:
            raise ConfigError("n_rf must not exceed n_antennas")
        if self.n_measurements > self.n_antennas:
            raise ConfigError(
                f"n_slots * n_rf = {self.n_measurements} exceeds n_antennas = {self.n_antennas}")
        if (2 * self.n_measurements) % 8:
            raise ConfigError(
                f"network input length 2*M = {2 * self.n_measurements} must be divisible by 8")
        if self.n_users > self.n_antennas:
            raise ConfigError("n_users must not exceed n_antennas")
        if self.los_gain_var < 0 or self.nlos_gain_var < 0:
            raise ConfigError("path gain variances must be non-negative")

    @property
    def n_measurements(self) -> int:
        """M = J * N_R, the number of measured beams."""
        return self.n_slots * self.n_rf


@dataclass
class UserChannel:
    gains: np.ndarray   # complex, length L; index 0 is the LOS path
    aoas: np.ndarray    # radians in [-pi, pi)
    h: np.ndarray       # complex, length N_A

    @property
    def thetas(self) -> np.ndarray:
        return np.sin(self.aoas)

    @property
    def los_theta(self) -> float:
        return float(np.sin(self.aoas[0]))


@dataclass
class ChannelRealization:
    n_antennas: int
    users: list[UserChannel] = field(default_factory=list)

    @property
    def n_users(self) -> int:
        return len(self.users)

    def total(self) -> np.ndarray:
        """Sum of all user channels (every user sends s_u = 1)."""
        return np.sum([u.h for u in self.users], axis=0)

    def los_thetas(self) -> np.ndarray:
        return np.array([u.los_theta for u in self.users])


def steering_vector(n, theta):
    """ULA response ``(1/sqrt(n)) [1, e^{j pi theta}, ..., e^{j pi theta (n-1)}]``."""
    if n < 1:
        raise ValueError("steering vector length must be >= 1")
    k = np.arange(n)
    return np.exp(1j * np.pi * theta * k) / np.sqrt(n)


def channel_vector(n_antennas, gains, aoas):
    """Saleh-Valenzuela channel ``sqrt(N_A/L) sum_i g_i alpha(N_A, sin(aoa_i))``."""
    gains = np.atleast_1d(np.asarray(gains, dtype=np.complex128))
    aoas = np.atleast_1d(np.asarray(aoas, dtype=np.float64))
    if gains.shape != aoas.shape:
        raise ValueError("gains and aoas must have equal length")
    k = np.arange(n_antennas)
    A = np.exp(1j * np.pi * np.outer(k, np.sin(aoas))) / np.sqrt(n_antennas)
    return np.sqrt(n_antennas / len(gains)) * (A @ gains)


def build_channel(n_antennas, gains, aoas):
    """Channel realization from explicit per-user path gains and AoAs.

    ``gains`` and ``aoas`` are (U, L) arrays; path 0 of each user is LOS.
    Used by tests to force deterministic channels.
    """
    gains = np.atleast_2d(np.asarray(gains, dtype=np.complex128))
    aoas = np.atleast_2d(np.asarray(aoas, dtype=np.float64))
    users = [UserChannel(g.copy(), a.copy(), channel_vector(n_antennas, g, a))
             for g, a in zip(gains, aoas)]
    return ChannelRealization(n_antennas, users)


def sample_channel(cfg: ScenarioConfig, rng) -> ChannelRealization:
    """Draw one multi-user channel.

    Draw order (fixed, part of the reproducibility contract): all AoAs as a
    (U, L) uniform block, then all gains as a (U, L) complex-normal block.
    """
    U, L = cfg.n_users, cfg.n_paths
    aoas = rng.uniform(-np.pi, np.pi, size=(U, L))
    g = complex_normal(rng, 1.0, size=(U, L))
    var = np.full(L, cfg.nlos_gain_var)
    var[0] = cfg.los_gain_var
    gains = g * np.sqrt(var)
    return build_channel(cfg.n_antennas, gains, aoas)


def los_beam_index(theta, n_antennas):
    """Codebook beam aligned with direction ``theta``: floor(N_A (theta + 1) / 2) + 1.

    Vectorised over ``theta``. theta == 1 is clamped to beam N_A.
    """
    t = np.asarray(theta, dtype=np.float64)
    if np.any(t < -1.0) or np.any(t > 1.0) or np.any(np.isnan(t)):
        raise ValueError("theta must lie in [-1, 1]")
    b = np.minimum(np.floor(n_antennas * (t + 1.0) / 2.0).astype(np.int64) + 1, n_antennas)
    return int(b) if b.ndim == 0 else b


def _beam_theta(n, n_antennas):
    return -1.0 + (2.0 * n - 1.0) / n_antennas


def codeword(n, n_antennas):
    if not 1 <= n <= n_antennas:
        raise ValueError(f"beam index {n} outside 1..{n_antennas}")
    return steering_vector(n_antennas, _beam_theta(n, n_antennas))


def codebook(n_antennas):
    """Full N_A x N_A codebook C; column n-1 is ``codeword(n)``."""
    k = np.arange(n_antennas)[:, None]
    th = _beam_theta(np.arange(1, n_antennas + 1), n_antennas)[None, :]
    return np.exp(1j * np.pi * k * th) / np.sqrt(n_antennas)


def measured_beams(cfg: ScenarioConfig) -> np.ndarray:
    """1-based codebook indices of the M measured beams: 1, 1 + floor(N_A/M), ..."""
    M = cfg.n_measurements
    if M > cfg.n_antennas:
        raise ConfigError("M exceeds N_A")
    return 1 + np.arange(M) * (cfg.n_antennas // M)


def measurement_matrix(cfg: ScenarioConfig) -> np.ndarray:
    """The N_A x M partial-beam combiner W (columns are codewords)."""
    return codebook(cfg.n_antennas)[:, measured_beams(cfg) - 1]


def beam_gain_profile(theta, n_antennas):
    """``C^H alpha(N_A, theta)``, the response of every codeword to direction theta."""
    return codebook(n_antennas).conj().T @ steering_vector(n_antennas, theta)


def synthesize_measurement(ch: ChannelRealization, W, noise_var, rng):
    """Stacked received vector ``r = W^H sum_u h_u + W^H n`` with n ~ CN(0, noise_var I).

    Noise is drawn per antenna (length N_A) and projected through W^H.
    """
    if noise_var < 0:
        raise ValueError("noise variance must be non-negative")
    W = np.asarray(W)
    if W.shape[0] != ch.n_antennas:
        raise ValueError(f"W has {W.shape[0]} rows, channel has {ch.n_antennas} antennas")
    n = complex_normal(rng, noise_var, size=ch.n_antennas)
    return W.conj().T @ (ch.total() + n)


def label_vector(ch: ChannelRealization, n_antennas):
    """Binary beam distribution vector with ones at every user's LOS beam."""
    return label_from_beams(los_beam_index(ch.los_thetas(), n_antennas), n_antennas)


def label_from_beams(beams, n_antennas):
    q = np.zeros(n_antennas)
    q[np.asarray(beams, dtype=np.int64) - 1] = 1.0
    return q
