"""Time-tagging camera model.

One sensor is split into rectangular regions, one per (plane, arm).  A
physical coordinate of 0 maps to the centre of its region; position-plane
coordinates are converted with the pixel pitch (um/pixel) and
momentum-plane coordinates with ``k_per_pixel`` (1/um per pixel).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .events import TAG_BACKGROUND, empty_events, make_events, sort_events
from .optics import InvalidParameter
from .source import Arm, PhotonBatch, Plane

Region = tuple[int, int, int, int]  # x0, y0, width, height (pixels)


def quadrant_regions(nx: int, ny: int) -> dict[tuple[Plane, Arm], Region]:
    hx, hy = nx // 2, ny // 2
    return {
        (Plane.POSITION, Arm.SIGNAL): (0, 0, hx, hy),
        (Plane.POSITION, Arm.IDLER): (hx, 0, nx - hx, hy),
        (Plane.MOMENTUM, Arm.SIGNAL): (0, hy, hx, ny - hy),
        (Plane.MOMENTUM, Arm.IDLER): (hx, hy, nx - hx, ny - hy),
    }


@dataclass
class CameraParams:
    nx: int = 256
    ny: int = 256
    pitch: float = 55.0  # um / pixel
    k_per_pixel: float = 1.43e-3  # (1/um) / pixel
    jitter_sigma: float = 7.0  # ns
    efficiency_signal: float = 1.0
    efficiency_idler: float = 1.0
    regions: dict = field(default=None)
    camera_id: int = 0

    def __post_init__(self):
        if self.regions is None:
            self.regions = quadrant_regions(self.nx, self.ny)
        self.regions = {(Plane(p), Arm(a)): tuple(int(v) for v in r) for (p, a), r in self.regions.items()}
        self.validate()

    def validate(self):
        if not (self.pitch > 0 and self.k_per_pixel > 0):
            raise InvalidParameter("pitch and k_per_pixel must be positive")
        if self.jitter_sigma < 0:
            raise InvalidParameter("jitter_sigma must be non-negative")
        for e in (self.efficiency_signal, self.efficiency_idler):
            if not 0 <= e <= 1:
                raise InvalidParameter(f"efficiency {e} outside [0, 1]")
        if not (0 < self.nx <= 65536 and 0 < self.ny <= 65536):
            raise InvalidParameter("sensor size must fit 16-bit pixel indices")
        rs = list(self.regions.items())
        for i, (key, (x0, y0, w, h)) in enumerate(rs):
            if w <= 0 or h <= 0 or x0 < 0 or y0 < 0 or x0 + w > self.nx or y0 + h > self.ny:
                raise InvalidParameter(f"region {key} does not fit on the sensor")
            for key2, (x1, y1, w1, h1) in rs[i + 1:]:
                if x0 < x1 + w1 and x1 < x0 + w and y0 < y1 + h1 and y1 < y0 + h:
                    raise InvalidParameter(f"regions {key} and {key2} overlap")

    @classmethod
    def tpx3(cls, **kw) -> "CameraParams":
        """256x256 pixels of 55 um, ~7 ns timing."""
        return cls(**kw)

    @classmethod
    def ideal(cls, **kw) -> "CameraParams":
        """Fine-pixel sensor whose quantization is negligible against the
        beam and correlation widths; large enough not to clip SPDC singles."""
        kw.setdefault("nx", 32768)
        kw.setdefault("ny", 32768)
        kw.setdefault("pitch", 1.0)
        kw.setdefault("k_per_pixel", 1e-5)
        return cls(**kw)

    def unit(self, plane) -> float:
        return self.pitch if plane == Plane.POSITION else self.k_per_pixel

    def efficiency(self, arm) -> float:
        return self.efficiency_signal if arm == Arm.SIGNAL else self.efficiency_idler

    def region_pixels(self, plane, arm) -> int:
        _, _, w, h = self.regions[(Plane(plane), Arm(arm))]
        return w * h


@dataclass
class DetectStats:
    generated: int = 0
    lost: int = 0
    clipped: int = 0

    def __iadd__(self, other):
        self.generated += other.generated
        self.lost += other.lost
        self.clipped += other.clipped
        return self


def coords_to_pixels(coord: np.ndarray, plane: np.ndarray, arm: np.ndarray, cam: CameraParams):
    """Pixel indices for physical coordinates; ``inside`` flags in-region hits."""
    n = len(coord)
    px = np.zeros(n, dtype=np.int64)
    py = np.zeros(n, dtype=np.int64)
    inside = np.zeros(n, dtype=bool)
    for (pl, ar), (x0, y0, w, h) in cam.regions.items():
        sel = (plane == pl) & (arm == ar)
        if not sel.any():
            continue
        c = np.floor(coord[sel] / cam.unit(pl))
        ix = c[:, 0] + w // 2
        iy = c[:, 1] + h // 2
        ok = (ix >= 0) & (ix < w) & (iy >= 0) & (iy < h)
        px[sel] = np.where(ok, ix + x0, 0)
        py[sel] = np.where(ok, iy + y0, 0)
        inside[sel] = ok
    return px, py, inside


def pixel_coords(events: np.ndarray, cam: CameraParams) -> np.ndarray:
    """Physical coordinates of the pixel centres, shape (n, 2)."""
    out = np.full((len(events), 2), np.nan)
    for (pl, ar), (x0, y0, w, h) in cam.regions.items():
        sel = (events["plane"] == pl) & (events["arm"] == ar)
        if not sel.any():
            continue
        u = cam.unit(pl)
        out[sel, 0] = (events["px"][sel].astype(np.int64) - x0 - w // 2 + 0.5) * u
        out[sel, 1] = (events["py"][sel].astype(np.int64) - y0 - h // 2 + 0.5) * u
    return out


def detect(photons: PhotonBatch, cam: CameraParams, rng: np.random.Generator):
    """Thin, pixelate and time-tag a batch of photons.

    Returns ``(events, stats)``; events are sorted by timestamp.  Photons
    landing outside their region are dropped and counted in
    ``stats.clipped``.
    """
    n = len(photons)
    eff = np.where(photons.arm == Arm.SIGNAL, cam.efficiency_signal, cam.efficiency_idler)
    keep = rng.random(n) < eff
    px, py, inside = coords_to_pixels(photons.coord[keep], photons.plane[keep], photons.arm[keep], cam)
    t = photons.t[keep]
    if cam.jitter_sigma > 0:
        t = t + cam.jitter_sigma * rng.standard_normal(len(t))
    t = np.maximum(np.rint(t), 0).astype(np.int64)
    ev = make_events(t[inside], px[inside], py[inside], photons.plane[keep][inside],
                     photons.arm[keep][inside], photons.tag[keep][inside])
    stats = DetectStats(generated=n, lost=int(n - keep.sum()), clipped=int((~inside).sum()))
    return sort_events(ev), stats


def detect_photon(t: float, plane, arm, coord, cam: CameraParams, rng: np.random.Generator):
    """Single-photon form of :func:`detect`; returns an event record or None."""
    batch = PhotonBatch(np.array([t], float), np.array([plane], np.uint8), np.array([arm], np.uint8),
                        np.asarray(coord, float).reshape(1, 2), np.array([0], np.int64))
    ev, _ = detect(batch, cam, rng)
    return ev[0] if len(ev) else None


class BackgroundKind(str, Enum):
    FLAT_DARK = "flat"
    DISRUPTIVE_BEAM = "disruptive"


@dataclass
class BackgroundSpec:
    """Uncorrelated light on the sensor.

    ``rate`` is per pixel per second for a flat background and the total
    photons per second (shared equally between the listed regions) for a
    disruptive beam.  The disruptive beam profile is Gaussian with centre
    and RMS width given in each plane's physical units.
    """
    kind: BackgroundKind = BackgroundKind.FLAT_DARK
    rate: float = 0.0
    regions: tuple = None  # (plane, arm) keys; None means every region
    center_r: tuple[float, float] = (0.0, 0.0)
    width_r: float = 500.0
    center_k: tuple[float, float] = (0.0, 0.0)
    width_k: float = 0.03

    def __post_init__(self):
        self.kind = BackgroundKind(self.kind)
        if self.rate < 0:
            raise InvalidParameter("background rate must be non-negative")


def inject_background(spec: BackgroundSpec, cam: CameraParams, duration: float,
                      rng: np.random.Generator, t0_ns: float = 0.0):
    """Background events over ``duration`` seconds starting at ``t0_ns``.

    Returns ``(events, clipped)``.
    """
    if not duration > 0:
        raise InvalidParameter("duration must be positive")
    keys = list(cam.regions) if spec.regions is None else [(Plane(p), Arm(a)) for p, a in spec.regions]
    parts = []
    clipped = 0
    dur_ns = duration * 1e9
    for pl, ar in keys:
        x0, y0, w, h = cam.regions[(pl, ar)]
        if spec.kind is BackgroundKind.FLAT_DARK:
            n = rng.poisson(spec.rate * w * h * duration)
            px = x0 + rng.integers(0, w, n)
            py = y0 + rng.integers(0, h, n)
        else:
            n = rng.poisson(spec.rate * duration / len(keys))
            if pl == Plane.POSITION:
                center, width = spec.center_r, spec.width_r
            else:
                center, width = spec.center_k, spec.width_k
            coord = np.asarray(center, float) + width * rng.standard_normal((n, 2))
            px, py, inside = coords_to_pixels(coord, np.full(n, pl), np.full(n, ar), cam)
            clipped += int((~inside).sum())
            px, py, n = px[inside], py[inside], int(inside.sum())
        t = np.floor(rng.uniform(t0_ns, t0_ns + dur_ns, n)).astype(np.int64)
        parts.append(make_events(t, px, py, int(pl), int(ar), TAG_BACKGROUND))
    if not parts:
        return empty_events(), clipped
    return sort_events(np.concatenate(parts)), clipped
