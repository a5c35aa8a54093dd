"""Geometric near-field channel model for a BS / RIS / single-antenna users link.

Uplink observations after per-user pilot decorrelation:

    Y = sqrt(p) * G @ E + noise,   G = H @ diag(h)

with H the BS<->RIS multipath channel, h the RIS<->user channel, and E the
unit-modulus RIS phase schedule (one column per pilot slot). Array responses
use the Fresnel (second-order) expansion of the exact spherical wavefront;
distance +inf marks the far-field response where the quadratic term vanishes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rng import complex_normal

__all__ = [
    "C_LIGHT", "SystemConfig", "PathParams", "SceneRealization", "PilotBlock",
    "steering_vector", "build_channels", "draw_scene", "make_phase_matrix",
    "simulate_pilots", "noise_var_for_snr", "ris_side_rows",
]

C_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class SystemConfig:
    """Static geometry and scene priors."""

    n_bs: int = 32
    n_ris: int = 64
    n_users: int = 1
    tau: int = 30
    carrier_hz: float = 30e9
    spacing_m: float | None = None      # element pitch; None = half wavelength
    paths_bs: int = 3                   # BS<->RIS paths
    paths_ris: int = 3                  # RIS<->user paths
    power: float = 1.0
    angle_bound: float = math.pi / 3    # scene angles uniform in (-bound, bound)
    bs_dist: tuple[float, float] = (5.0, 30.0)
    ris_dist: tuple[float, float] = (1.0, 20.0)
    dist_floor: float = 0.5             # Fresnel-validity clamp, meters

    def __post_init__(self):
        if self.n_bs < 1 or self.n_ris < 1 or self.tau < 1:
            raise ValueError("array sizes and pilot length must be positive")
        if not 0 < self.angle_bound < math.pi / 2:
            raise ValueError("angle bound must be in (0, pi/2)")

    @property
    def wavelength(self) -> float:
        return C_LIGHT / self.carrier_hz

    @property
    def spacing(self) -> float:
        return self.wavelength / 2.0 if self.spacing_m is None else self.spacing_m

    def aperture(self, size: int) -> float:
        return size * self.spacing

    def rayleigh_distance(self, size: int) -> float:
        a = self.aperture(size)
        return 2.0 * a * a / self.wavelength


@dataclass(frozen=True)
class PathParams:
    """One propagation path: angle (rad), distance (m, +inf = far field), gain."""

    angle: float
    distance: float
    gain: complex = 1.0 + 0.0j

    def __post_init__(self):
        if not abs(self.angle) < math.pi / 2:
            raise ValueError("path angle must lie in (-pi/2, pi/2)")
        if not (self.distance == math.inf or self.distance > 0):
            raise ValueError("path distance must be positive or +inf")


@dataclass
class SceneRealization:
    """One drawn propagation environment plus its assembled channels.

    Bridge path gains live on the BS-side entries; the RIS-side entries carry
    the departure geometry of the same paths (gain field unused).
    """

    bridge_bs: tuple[PathParams, ...]
    bridge_ris: tuple[PathParams, ...]
    users: tuple[tuple[PathParams, ...], ...]
    H: np.ndarray                      # [N, M]
    h: np.ndarray                      # [K, M]
    G: np.ndarray                      # [K, N, M]


@dataclass
class PilotBlock:
    """Decorrelated pilot observation for one user."""

    Y: np.ndarray                      # [N, tau]
    E: np.ndarray                      # [M, tau]
    noise_var: float
    user: int = 0


def element_offsets(size: int) -> np.ndarray:
    """Symmetric element indices; center element at 0 for odd sizes."""
    lo = -int(math.ceil((size - 1) / 2))
    return np.arange(lo, lo + size)


def steering_vector(size: int, angle: float, distance: float,
                    wavelength: float, spacing: float) -> np.ndarray:
    """Unit-norm Fresnel array response; distance=inf gives the planar response."""
    if size < 1:
        raise ValueError("array size must be positive")
    if not abs(angle) < math.pi / 2:
        raise ValueError("angle must lie in (-pi/2, pi/2)")
    if not (distance == math.inf or distance > 0):
        raise ValueError("distance must be positive or +inf")
    m = element_offsets(size)
    u = math.sin(angle)
    path_delta = -m * spacing * u
    if np.isfinite(distance):
        path_delta = path_delta + (m * spacing) ** 2 * (1.0 - u * u) / (2.0 * distance)
    k = 2.0 * math.pi / wavelength
    return np.exp(-1j * k * path_delta) / math.sqrt(size)


def build_channels(config: SystemConfig,
                   bridge_bs: tuple[PathParams, ...],
                   bridge_ris: tuple[PathParams, ...],
                   users: tuple[tuple[PathParams, ...], ...]):
    """Assemble (H, h, G) from explicit path parameters."""
    if len(bridge_bs) != len(bridge_ris):
        raise ValueError("bridge path lists must align")
    lam, delta = config.wavelength, config.spacing
    H = np.zeros((config.n_bs, config.n_ris), dtype=np.complex128)
    for pb, pr in zip(bridge_bs, bridge_ris):
        a_bs = steering_vector(config.n_bs, pb.angle, pb.distance, lam, delta)
        a_ris = steering_vector(config.n_ris, pr.angle, pr.distance, lam, delta)
        H += pb.gain * np.outer(a_bs, a_ris.conj())
    h = np.zeros((len(users), config.n_ris), dtype=np.complex128)
    for k, paths in enumerate(users):
        for p in paths:
            h[k] += p.gain * steering_vector(config.n_ris, p.angle, p.distance, lam, delta)
    G = H[None, :, :] * h[:, None, :]      # H @ diag(h_k), batched over users
    return H, h, G


def draw_scene(config: SystemConfig, rng: np.random.Generator) -> SceneRealization:
    """Sample path parameters from the configured priors and assemble channels."""
    def gains(n):
        return complex_normal(rng, n)

    def dists(lohi, n):
        lo, hi = lohi
        return np.maximum(rng.uniform(lo, hi, n), config.dist_floor)

    b = config.angle_bound
    th = rng.uniform(-b, b, config.paths_bs)
    r = dists(config.bs_dist, config.paths_bs)
    rho = gains(config.paths_bs)
    phi = rng.uniform(-b, b, config.paths_bs)
    s = dists(config.bs_dist, config.paths_bs)
    bridge_bs = tuple(PathParams(a, d, g) for a, d, g in zip(th, r, rho))
    bridge_ris = tuple(PathParams(a, d) for a, d in zip(phi, s))
    users = []
    for _ in range(config.n_users):
        va = rng.uniform(-b, b, config.paths_ris)
        vd = dists(config.ris_dist, config.paths_ris)
        vb = gains(config.paths_ris)
        users.append(tuple(PathParams(a, d, g) for a, d, g in zip(va, vd, vb)))
    users = tuple(users)
    H, h, G = build_channels(config, bridge_bs, bridge_ris, users)
    return SceneRealization(bridge_bs, bridge_ris, users, H, h, G)


def make_phase_matrix(n_ris: int, tau: int, rng: np.random.Generator | None = None,
                      kind: str = "random") -> np.ndarray:
    """Unit-modulus RIS schedule, one column per pilot slot."""
    if kind == "random":
        if rng is None:
            raise ValueError("random phase matrix needs an rng")
        return np.exp(2j * np.pi * rng.uniform(size=(n_ris, tau)))
    if kind == "dft":
        m = np.arange(n_ris)[:, None]
        t = np.arange(tau)[None, :]
        return np.exp(-2j * np.pi * m * t / n_ris)
    raise ValueError(f"unknown phase matrix kind {kind!r}")


def simulate_pilots(scene: SceneRealization, config: SystemConfig, E: np.ndarray,
                    noise_var: float, rng: np.random.Generator, user: int = 0) -> PilotBlock:
    """Y = sqrt(p) G_k E + noise with i.i.d. circular complex Gaussian noise."""
    if E.shape != (config.n_ris, config.tau):
        raise ValueError("phase matrix shape mismatch")
    if noise_var < 0:
        raise ValueError("noise variance must be nonnegative")
    Y = math.sqrt(config.power) * (scene.G[user] @ E)
    if noise_var > 0:
        Y = Y + complex_normal(rng, Y.shape, noise_var)
    return PilotBlock(Y=Y, E=E, noise_var=noise_var, user=user)


def noise_var_for_snr(scene: SceneRealization, config: SystemConfig, E: np.ndarray,
                      snr_db: float, user: int = 0, convention: str = "receive") -> float:
    """Noise variance hitting the target SNR for this scene.

    receive: snr = p ||G E||_F^2 / (N tau sigma^2); transmit: snr = p / sigma^2.
    """
    snr = 10.0 ** (snr_db / 10.0)
    if convention == "transmit":
        return config.power / snr
    if convention != "receive":
        raise ValueError(f"unknown SNR convention {convention!r}")
    sig = config.power * np.linalg.norm(scene.G[user] @ E) ** 2
    return float(sig / (config.n_bs * config.tau * snr))


def ris_side_rows(scene: SceneRealization, config: SystemConfig, user: int = 0) -> np.ndarray:
    """Conjugated rows of the RIS-side composite channel, one column per bridge path.

    Column l is diag(h_k^*) a(phi_l, s_l) rho_l^*, i.e. the vector the stage-2
    solver recovers from the l-th projected observation.
    """
    lam, delta = config.wavelength, config.spacing
    cols = np.zeros((config.n_ris, len(scene.bridge_ris)), dtype=np.complex128)
    for l, (pb, pr) in enumerate(zip(scene.bridge_bs, scene.bridge_ris)):
        a = steering_vector(config.n_ris, pr.angle, pr.distance, lam, delta)
        cols[:, l] = np.conj(scene.h[user]) * a * np.conj(pb.gain)
    return cols
