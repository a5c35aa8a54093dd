"""Polar-domain dictionaries: angle x curvature grids and their cascaded products.

The single-hop grid samples angles uniformly in the sin domain and distances on
curvature rings r_s = Z * (1 - sin^2) / s, s = 0 (far field), 1, 2, ... with
Z = aperture^2 / (2 lambda beta^2). On that law the ring curvature
(1 - sin^2)/(2 r) equals s/(2 Z) exactly, independent of angle, so every grid
column is indexed by the pair (sin, curvature) on a separable lattice.

A cascaded column is the elementwise product of a departure column and a
conjugated arrival column; its phase profile depends only on the parameter
differences (d_sin, d_curv). Deduplicating those canonical tuples yields the
reduced product dictionary without materializing all pairs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import SceneRealization, SystemConfig, steering_vector

__all__ = [
    "GridConfig", "PolarGrid", "PolarDictionary", "CascadedDictionary",
    "CoherenceProfile", "SparseTruth", "sample_polar_grid", "build_dictionary",
    "build_cascaded_dictionary", "coherence_profile", "nearest_grid_index",
    "encode_sparse_truth", "synthesize_cascaded",
]

SIN60 = math.sqrt(3.0) / 2.0


@dataclass(frozen=True)
class GridConfig:
    """Sampling knobs for one array side."""

    angle_count: int
    sin_lo: float = -SIN60
    sin_hi: float = SIN60
    beta: float = 1.2                 # ring coherence budget
    distance_min: float = 0.5         # Fresnel clamp; no rings sampled below
    ring_limit: int | None = None     # cap on the ring index, None = until clamp
    include_far: bool = True

    def __post_init__(self):
        if self.angle_count < 1:
            raise ValueError("need at least one angle")
        if not (-1.0 <= self.sin_lo < self.sin_hi <= 1.0):
            raise ValueError("sin range must be ordered inside [-1, 1]")
        if self.beta <= 0 or self.distance_min <= 0:
            raise ValueError("beta and distance_min must be positive")


@dataclass
class PolarGrid:
    """Flattened (angle, ring) sample set, angle-major with the far ring first."""

    sin_angles: np.ndarray            # [G]
    distances: np.ndarray             # [G], +inf on the far ring
    rings: np.ndarray                 # [G] int ring index, 0 = far
    z_delta: float
    config: GridConfig

    def __len__(self):
        return self.sin_angles.size

    @property
    def curvatures(self) -> np.ndarray:
        """(1 - sin^2)/(2 r); exactly rings/(2 z_delta) on this grid."""
        with np.errstate(divide="ignore"):
            c = (1.0 - self.sin_angles ** 2) / (2.0 * self.distances)
        return np.where(np.isinf(self.distances), 0.0, c)


@dataclass
class PolarDictionary:
    """Unit-norm steering columns over a polar grid."""

    F: np.ndarray                     # [size, G]
    grid: PolarGrid
    size: int
    wavelength: float
    spacing: float


@dataclass
class CascadedDictionary:
    """Deduplicated elementwise products of departure x conjugate(arrival) columns.

    Columns are unit norm; col_scale restores the raw product
    (F_dep[:, l] * conj(F_arr[:, p]) == col_scale[j] * F[:, j]). pair_to_col
    maps every (l, p) grid pair to its canonical column.
    """

    F: np.ndarray                     # [size, Gc]
    col_scale: np.ndarray             # [Gc]
    delta_sin: np.ndarray             # [Gc] canonical tuple, wrapped
    delta_curv: np.ndarray            # [Gc]
    pair_to_col: np.ndarray           # [G, G] int
    source: PolarDictionary


@dataclass
class CoherenceProfile:
    max_off: float
    mean_off: float
    hist: np.ndarray
    edges: np.ndarray
    was_normalized: bool


@dataclass
class SparseTruth:
    """Grid coding of one scene against a BS dictionary and a cascaded dictionary."""

    bs_idx: np.ndarray                # [L_BR] nearest BS grid entries, path order
    dep_idx: np.ndarray               # [L_BR] nearest RIS grid entries (departure)
    arr_idx: np.ndarray               # [L_RU] nearest RIS grid entries (arrival)
    X: np.ndarray                     # [N_G, L_BR], one unit nonzero per column
    Lam: np.ndarray                   # [N_G, Gc] cascaded gains (raw-column scale)
    B: np.ndarray                     # [Gc, L_BR] per-path coefficients, h_l = raw(F) @ B[:, l]
    an_residual: float                # ||A_bs - F_bs X||_F / ||A_bs||_F
    coding_residual: float            # ||G - synth(Lam)||_F / ||G||_F
    projection_floor: float           # least-squares residual on the selected atoms


def sample_polar_grid(size: int, wavelength: float, spacing: float,
                      config: GridConfig) -> PolarGrid:
    """Lay out the (angle, ring) samples for one array side."""
    aperture = size * spacing
    z_delta = aperture * aperture / (2.0 * wavelength * config.beta ** 2)
    g = np.arange(config.angle_count)
    sins = config.sin_lo + (g + 0.5) * (config.sin_hi - config.sin_lo) / config.angle_count
    sin_list, dist_list, ring_list = [], [], []
    for u in sins:
        if config.include_far:
            sin_list.append(u)
            dist_list.append(math.inf)
            ring_list.append(0)
        s = 1
        while config.ring_limit is None or s <= config.ring_limit:
            r = z_delta * (1.0 - u * u) / s
            if r < config.distance_min:
                break
            sin_list.append(u)
            dist_list.append(r)
            ring_list.append(s)
            s += 1
    if not sin_list:
        raise ValueError("grid is empty; relax ring_limit/include_far")
    return PolarGrid(np.array(sin_list), np.array(dist_list),
                     np.array(ring_list, dtype=np.int64), z_delta, config)


def build_dictionary(size: int, wavelength: float, spacing: float,
                     config: GridConfig) -> PolarDictionary:
    grid = sample_polar_grid(size, wavelength, spacing, config)
    F = np.empty((size, len(grid)), dtype=np.complex128)
    for j in range(len(grid)):
        F[:, j] = steering_vector(size, math.asin(grid.sin_angles[j]),
                                  grid.distances[j], wavelength, spacing)
    return PolarDictionary(F=F, grid=grid, size=size,
                           wavelength=wavelength, spacing=spacing)


def _wrap_delta_sin(ds: np.ndarray, wavelength: float, spacing: float) -> np.ndarray:
    """Reduce sin differences modulo the element phase period lambda/spacing."""
    period = wavelength / spacing
    return (ds + period / 2.0) % period - period / 2.0


def build_cascaded_dictionary(single: PolarDictionary, tol: float = 1e-6) -> CascadedDictionary:
    grid = single.grid
    u = grid.sin_angles
    c = grid.curvatures
    ds = _wrap_delta_sin(u[:, None] - u[None, :], single.wavelength, single.spacing)
    dc = c[:, None] - c[None, :]
    keys = np.stack([np.round(ds / tol), np.round(dc / tol)], axis=-1).reshape(-1, 2)
    _, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    # representative pair per canonical tuple = lowest flat (l, p) index
    l_idx, p_idx = np.unravel_index(first, ds.shape)
    cols = single.F[:, l_idx] * np.conj(single.F[:, p_idx])
    norms = np.linalg.norm(cols, axis=0)
    return CascadedDictionary(
        F=cols / norms,
        col_scale=norms,
        delta_sin=ds.reshape(-1)[first],
        delta_curv=dc.reshape(-1)[first],
        pair_to_col=inverse.reshape(ds.shape).astype(np.int64),
        source=single,
    )


def coherence_profile(F: np.ndarray, bins: int = 50, block: int = 512) -> CoherenceProfile:
    """Off-diagonal |gram| statistics of a column dictionary."""
    norms = np.linalg.norm(F, axis=0)
    was_normalized = not np.allclose(norms, 1.0, atol=1e-9)
    Fn = F / norms
    n = Fn.shape[1]
    hist = np.zeros(bins, dtype=np.int64)
    edges = np.linspace(0.0, 1.0, bins + 1)
    max_off, total, count = 0.0, 0.0, 0
    for lo in range(0, n, block):
        hi = min(lo + block, n)
        g = np.abs(Fn[:, lo:hi].conj().T @ Fn)
        for row, col in enumerate(range(lo, hi)):
            g[row, col] = np.nan
        vals = g[~np.isnan(g)]
        vals = np.minimum(vals, 1.0)            # clip fp overshoot at duplicates
        hist += np.histogram(vals, bins=edges)[0]
        if vals.size:
            max_off = max(max_off, float(vals.max()))
            total += float(vals.sum())
            count += vals.size
    mean_off = total / count if count else 0.0
    return CoherenceProfile(max_off=max_off, mean_off=mean_off, hist=hist,
                            edges=edges, was_normalized=was_normalized)


def nearest_grid_index(grid: PolarGrid, angle: float, distance: float) -> int:
    """Nearest grid entry in the (sin, 1/distance) Euclidean metric."""
    u = math.sin(angle)
    inv_d = 0.0 if distance == math.inf else 1.0 / distance
    with np.errstate(divide="ignore"):
        grid_inv = np.where(np.isinf(grid.distances), 0.0, 1.0 / grid.distances)
    d2 = (grid.sin_angles - u) ** 2 + (grid_inv - inv_d) ** 2
    return int(np.argmin(d2))


def synthesize_cascaded(bs: PolarDictionary, cas: CascadedDictionary,
                        Lam: np.ndarray) -> np.ndarray:
    """G = F_bs @ Lam @ raw(F_cas)^H with Lam in the raw-column scale."""
    raw = cas.F * cas.col_scale
    return bs.F @ Lam @ raw.conj().T


def encode_sparse_truth(scene: SceneRealization, config: SystemConfig,
                        bs: PolarDictionary, cas: CascadedDictionary,
                        user: int = 0) -> SparseTruth:
    """Code a scene on the grids; gains are the true cascaded products.

    The reported projection floor re-fits the selected atoms by least squares,
    which is the best any estimator confined to those atoms can do.
    """
    ris_grid = cas.source.grid
    bs_idx = np.array([nearest_grid_index(bs.grid, p.angle, p.distance)
                       for p in scene.bridge_bs], dtype=np.int64)
    dep_idx = np.array([nearest_grid_index(ris_grid, p.angle, p.distance)
                        for p in scene.bridge_ris], dtype=np.int64)
    arr_idx = np.array([nearest_grid_index(ris_grid, p.angle, p.distance)
                        for p in scene.users[user]], dtype=np.int64)

    L = len(scene.bridge_bs)
    X = np.zeros((bs.F.shape[1], L), dtype=np.complex128)
    for l, gi in enumerate(bs_idx):
        X[gi, l] = 1.0

    Lam = np.zeros((bs.F.shape[1], cas.F.shape[1]), dtype=np.complex128)
    B = np.zeros((cas.F.shape[1], L), dtype=np.complex128)
    atoms = []                                   # (bs grid idx, cascaded col) pairs
    for l, (pb, gi) in enumerate(zip(scene.bridge_bs, bs_idx)):
        for p, pu in enumerate(scene.users[user]):
            col = cas.pair_to_col[dep_idx[l], arr_idx[p]]
            Lam[gi, col] += pb.gain * pu.gain
            B[col, l] += np.conj(pu.gain) * np.conj(pb.gain)
            atoms.append((gi, col))

    A_true = np.stack([steering_vector(config.n_bs, p.angle, p.distance,
                                       config.wavelength, config.spacing)
                       for p in scene.bridge_bs], axis=1)
    an_residual = float(np.linalg.norm(A_true - bs.F @ X) / np.linalg.norm(A_true))

    G = scene.G[user]
    coding = float(np.linalg.norm(G - synthesize_cascaded(bs, cas, Lam)) / np.linalg.norm(G))

    atoms = sorted(set(atoms))
    raw = cas.F * cas.col_scale
    design = np.stack([np.outer(bs.F[:, gi], raw[:, col].conj()).reshape(-1)
                       for gi, col in atoms], axis=1)
    coeff, *_ = np.linalg.lstsq(design, G.reshape(-1), rcond=None)
    floor = float(np.linalg.norm(G.reshape(-1) - design @ coeff) / np.linalg.norm(G))

    return SparseTruth(bs_idx=bs_idx, dep_idx=dep_idx, arr_idx=arr_idx, X=X,
                       Lam=Lam, B=B, an_residual=an_residual,
                       coding_residual=coding, projection_floor=floor)
