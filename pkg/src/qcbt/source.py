"""Ground-truth photon generation.

SPDC pairs follow the double-Gaussian biphoton model: in the position
(near-field) plane the pair difference ``r_s - r_i`` is narrow (width
``delta_r``) and in the momentum (far-field) plane the sum ``k_s + k_i``
is narrow (width ``delta_k``).  Each photon lands in the position or the
momentum plane by an independent fair coin flip.  Classical laser photons
are single photons on the signal arm.

Units: positions in um, transverse wavenumbers in 1/um (hbar = 1),
times in ns.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .optics import InvalidParameter, Ray, trajectory_change


class Plane(IntEnum):
    POSITION = 0
    MOMENTUM = 1


class Arm(IntEnum):
    SIGNAL = 0
    IDLER = 1
    UNKNOWN = 2


@dataclass(frozen=True)
class CrystalParams:
    L: float = 1.0  # mm
    lambda_p: float = 405.0  # nm
    sigma_p: float = 0.12  # mm
    alpha: float = 0.455
    magnification: float = 5.0

    def __post_init__(self):
        for name in ("L", "lambda_p", "sigma_p", "alpha", "magnification"):
            if not getattr(self, name) > 0:
                raise InvalidParameter(f"{name} must be positive")
        if self.alpha > 1:
            raise InvalidParameter("alpha must lie in (0, 1]")


def correlation_widths_from_crystal(c: CrystalParams) -> tuple[float, float]:
    """Expected (delta_r [um], delta_k [1/um]) at the camera."""
    L_um = c.L * 1e3
    lam_um = c.lambda_p * 1e-3
    sigma_p_um = c.sigma_p * 1e3
    delta_r = math.sqrt(2 * c.alpha * L_um * lam_um / math.pi)
    delta_k = 1.0 / (2 * sigma_p_um)
    return delta_r * c.magnification, delta_k / c.magnification


@dataclass(frozen=True)
class Displacement:
    """Beam shift applied to the signal arm."""
    dx: float = 0.0  # um
    dy: float = 0.0
    du: float = 0.0  # 1/um
    dv: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.dx, self.dy, self.du, self.dv)):
            raise InvalidParameter("displacement must be finite")

    @property
    def r(self) -> np.ndarray:
        return np.array([self.dx, self.dy])

    @property
    def k(self) -> np.ndarray:
        return np.array([self.du, self.dv])


def mirror_to_displacement(t: float, gains: tuple[float, float]) -> Displacement:
    """Horizontal beam shift produced by a stage translation ``t`` (um).

    ``gains = (gx, gu)`` with ``gx`` in um/um and ``gu`` in (1/um)/um.
    """
    gx, gu = gains
    if not all(math.isfinite(v) for v in (t, gx, gu)):
        raise InvalidParameter("mirror translation and gains must be finite")
    return Displacement(dx=gx * t, du=gu * t)


def mirror_gains_from_optics(channel_of_t, f: float, d: float, ray: Ray, k0: float,
                             h: float = 1e-3) -> tuple[float, float]:
    """Gains ``(gx, gu)`` of :func:`mirror_to_displacement` from ray optics.

    ``channel_of_t(t)`` gives the channel ABCD matrix for a stage
    translation ``t`` (um); the trajectory change through the 4f relay is
    differentiated at ``t = 0`` (central difference with step ``h``).
    Angles are converted to transverse wavenumber with ``u = k0 * theta``.
    """
    if not (k0 > 0 and h > 0):
        raise InvalidParameter("k0 and h must be positive")
    rp, tp = trajectory_change(channel_of_t(h), f, d, ray)
    rm, tm = trajectory_change(channel_of_t(-h), f, d, ray)
    return (rp - rm) / (2 * h), k0 * (tp - tm) / (2 * h)


@dataclass(frozen=True)
class SpdcSourceParams:
    delta_r: float = 42.0
    delta_k: float = 1.06e-3
    sigma_r: float = 170.0
    sigma_k: float = 1.7e-2
    pair_rate: float = 1e5  # pairs/s
    center_r: tuple[float, float] = (0.0, 0.0)
    center_k: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        for name in ("delta_r", "delta_k", "sigma_r", "sigma_k"):
            if not getattr(self, name) >= 0:
                raise InvalidParameter(f"{name} must be non-negative")
        if self.pair_rate < 0:
            raise InvalidParameter("pair_rate must be non-negative")
        if not self.delta_r < 2 * self.sigma_r:
            raise InvalidParameter("delta_r must be smaller than 2*sigma_r")
        if not self.delta_k < 2 * self.sigma_k:
            raise InvalidParameter("delta_k must be smaller than 2*sigma_k")

    @property
    def sum_width_r(self) -> float:
        """Width of r_s + r_i in the position plane."""
        return math.sqrt(4 * self.sigma_r ** 2 - self.delta_r ** 2)

    @property
    def diff_width_k(self) -> float:
        """Width of k_s - k_i in the momentum plane."""
        return math.sqrt(4 * self.sigma_k ** 2 - self.delta_k ** 2)

    @property
    def beats_hul(self) -> bool:
        return self.delta_r * self.delta_k < 0.5


@dataclass(frozen=True)
class LaserSourceParams:
    sigma_r: float = 52.7
    sigma_k: float = 1.41e-2
    photon_rate: float = 1e5  # photons/s
    center_r: tuple[float, float] = (0.0, 0.0)
    center_k: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.sigma_r < 0 or self.sigma_k < 0 or self.photon_rate < 0:
            raise InvalidParameter("laser widths and rate must be non-negative")
        # sigma = 0 is allowed as a degenerate test beam
        if self.sigma_r > 0 and self.sigma_k > 0 and self.sigma_r * self.sigma_k < 0.5 * (1 - 1e-12):
            raise InvalidParameter(
                f"sigma_r*sigma_k = {self.sigma_r * self.sigma_k:.4g} is below the uncertainty limit 1/2")


@dataclass
class BiphotonBatch:
    """Arrays describing ``n`` pairs; row ``j`` is one :class:`BiphotonPair`."""
    t: np.ndarray  # ns, float64
    signal_plane: np.ndarray  # uint8
    idler_plane: np.ndarray
    signal_coord: np.ndarray  # (n, 2)
    idler_coord: np.ndarray
    pair_id: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.pair_id is None:
            self.pair_id = np.arange(len(self.t), dtype=np.int64)

    def __len__(self):
        return len(self.t)

    def __getitem__(self, j) -> "BiphotonPair":
        return BiphotonPair(float(self.t[j]), Plane(int(self.signal_plane[j])), Plane(int(self.idler_plane[j])),
                            self.signal_coord[j].copy(), self.idler_coord[j].copy())


@dataclass(frozen=True)
class BiphotonPair:
    t: float
    signal_plane: Plane
    idler_plane: Plane
    signal_coord: np.ndarray
    idler_coord: np.ndarray


@dataclass
class PhotonBatch:
    """Single photons before detection (laser light or one arm of SPDC)."""
    t: np.ndarray
    plane: np.ndarray
    arm: np.ndarray
    coord: np.ndarray
    tag: np.ndarray

    def __len__(self):
        return len(self.t)

    @classmethod
    def concat(cls, batches) -> "PhotonBatch":
        batches = list(batches)
        return cls(*(np.concatenate([getattr(b, f) for b in batches])
                     for f in ("t", "plane", "arm", "coord", "tag")))


def poisson_arrivals(rate: float, duration_ns: float, rng: np.random.Generator, t0: float = 0.0) -> np.ndarray:
    """Sorted arrival times (ns) of a homogeneous Poisson process of ``rate`` per second."""
    n = rng.poisson(rate * duration_ns * 1e-9)
    return np.sort(rng.uniform(t0, t0 + duration_ns, size=n))


def sample_biphotons(p: SpdcSourceParams, disp: Displacement, t: np.ndarray,
                     rng: np.random.Generator, first_id: int = 0) -> BiphotonBatch:
    """Draw one pair for each emission time in ``t``."""
    n = len(t)
    sp = rng.integers(0, 2, size=n).astype(np.uint8)
    ip = rng.integers(0, 2, size=n).astype(np.uint8)
    z = rng.standard_normal((4, n, 2))
    cr = np.asarray(p.center_r, dtype=float)
    ck = np.asarray(p.center_k, dtype=float)

    # position/position: narrow difference, broad sum
    d_r = p.delta_r * z[0]
    s_r = 2 * cr + p.sum_width_r * z[1]
    # momentum/momentum: narrow sum, broad difference
    s_k = 2 * ck + p.delta_k * z[0]
    d_k = p.diff_width_k * z[1]

    sig_pos = (sp == Plane.POSITION)[:, None]
    idl_pos = (ip == Plane.POSITION)[:, None]
    same = (sp == ip)[:, None]
    corr_sum = np.where(sig_pos, s_r, s_k)
    corr_diff = np.where(sig_pos, d_r, d_k)
    # mixed-plane pairs never coincide in one plane: independent marginals
    marg_s = np.where(sig_pos, cr + p.sigma_r * z[2], ck + p.sigma_k * z[2])
    marg_i = np.where(idl_pos, cr + p.sigma_r * z[3], ck + p.sigma_k * z[3])
    sig = np.where(same, 0.5 * (corr_sum + corr_diff), marg_s)
    idl = np.where(same, 0.5 * (corr_sum - corr_diff), marg_i)

    sig += np.where(sig_pos, disp.r, disp.k)
    return BiphotonBatch(np.asarray(t, dtype=float), sp, ip, sig, idl,
                         np.arange(first_id, first_id + n, dtype=np.int64))


def sample_biphoton(p: SpdcSourceParams, disp: Displacement, rng: np.random.Generator,
                    t_prev: float = 0.0) -> BiphotonPair:
    """One pair, emitted an exponential waiting time after ``t_prev``."""
    if not p.pair_rate > 0:
        raise InvalidParameter("pair_rate must be positive to draw an emission time")
    t = t_prev + rng.exponential(1e9 / p.pair_rate)
    return sample_biphotons(p, disp, np.array([t]), rng)[0]


def biphotons_to_photons(batch: BiphotonBatch) -> PhotonBatch:
    """Split pairs into signal and idler photons; both carry the pair id as tag."""
    n = len(batch)
    return PhotonBatch(
        t=np.concatenate([batch.t, batch.t]),
        plane=np.concatenate([batch.signal_plane, batch.idler_plane]),
        arm=np.concatenate([np.full(n, Arm.SIGNAL, np.uint8), np.full(n, Arm.IDLER, np.uint8)]),
        coord=np.concatenate([batch.signal_coord, batch.idler_coord]),
        tag=np.concatenate([batch.pair_id, batch.pair_id]),
    )


def sample_laser_photons(p: LaserSourceParams, disp: Displacement, t: np.ndarray,
                         rng: np.random.Generator, first_id: int = 0) -> PhotonBatch:
    """Signal-arm laser photons, one per arrival time in ``t``."""
    n = len(t)
    plane = rng.integers(0, 2, size=n).astype(np.uint8)
    z = rng.standard_normal((n, 2))
    pos = (plane == Plane.POSITION)[:, None]
    center = np.where(pos, np.asarray(p.center_r, float) + disp.r, np.asarray(p.center_k, float) + disp.k)
    coord = center + np.where(pos, p.sigma_r, p.sigma_k) * z
    return PhotonBatch(np.asarray(t, dtype=float), plane, np.full(n, Arm.SIGNAL, np.uint8), coord,
                       np.arange(first_id, first_id + n, dtype=np.int64))


def sample_laser_photon(p: LaserSourceParams, disp: Displacement, rng: np.random.Generator,
                        t_prev: float = 0.0) -> tuple[float, Plane, np.ndarray]:
    if not p.photon_rate > 0:
        raise InvalidParameter("photon_rate must be positive to draw an arrival time")
    t = t_prev + rng.exponential(1e9 / p.photon_rate)
    b = sample_laser_photons(p, disp, np.array([t]), rng)
    return float(b.t[0]), Plane(int(b.plane[0])), b.coord[0].copy()
