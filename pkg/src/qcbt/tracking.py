"""Beam-trajectory estimators, their predicted spreads, and bounds.

All spreads are standard deviations; variances are only formed where
two independent contributions are added.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.optimize import OptimizeWarning, curve_fit

from .camera import CameraParams, pixel_coords
from .coincidence import CoincidencePairs, correlation_coords
from .events import TAG_BACKGROUND
from .optics import InvalidParameter
from .source import Plane


class EstimationError(ValueError):
    pass


class FitError(RuntimeError):
    def __init__(self, msg: str, residual_norm: float = math.nan):
        super().__init__(f"{msg} (residual norm {residual_norm:.4g})")
        self.residual_norm = residual_norm


class Mode(str, Enum):
    CLASSICAL_CENTROID = "classical"
    CORRELATION_DIFFERENCE = "difference"
    CORRELATION_SUM = "sum"


@dataclass
class TrackingEstimate:
    mode: Mode
    value: np.ndarray
    n: int
    plane: Plane


@dataclass
class TrialStatistics:
    values: np.ndarray  # (M,) or (M, 2)
    n: int
    mean: np.ndarray = field(init=False)
    std: np.ndarray = field(init=False)
    se_std: np.ndarray = field(init=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        m = len(self.values)
        if m < 2:
            raise EstimationError("trial statistics need at least two trials")
        self.mean = self.values.mean(axis=0)
        self.std = self.values.std(axis=0, ddof=1)
        self.se_std = self.std / math.sqrt(2 * (m - 1))

    @property
    def trials(self) -> int:
        return len(self.values)

    @property
    def se_mean(self):
        return self.std / math.sqrt(self.trials)


@dataclass
class UncertaintyProduct:
    sigma_dr: float
    sigma_dk: float
    product: float
    n: int
    hul: float

    @property
    def scaled(self) -> float:
        """Product in units of 1/n."""
        return self.product * self.n


def centroid(coords) -> np.ndarray:
    """Centre of mass of detected coordinates, shape (n, 2) -> (2,)."""
    coords = np.asarray(coords, dtype=float)
    if coords.size == 0:
        raise EstimationError("centroid of an empty event set")
    return coords.reshape(len(coords), -1).mean(axis=0)


def event_centroid(events: np.ndarray, cam: CameraParams) -> np.ndarray:
    if len(events) and len(np.unique(events["plane"])) > 1:
        raise EstimationError("centroid events must come from one plane")
    return centroid(pixel_coords(events, cam))


def centroid_variance_prediction(sigma: float, n: int) -> float:
    _check_sigma_n(sigma, n)
    return sigma ** 2 / n


def displacement_variance_prediction(sigma: float, n: int) -> float:
    _check_sigma_n(sigma, n)
    return 2 * sigma ** 2 / n


def _check_sigma_n(sigma, n):
    if not sigma > 0:
        raise InvalidParameter("sigma must be positive")
    if n < 1:
        raise InvalidParameter("n must be >= 1")


def correlation_centroid(pairs: CoincidencePairs, cam: CameraParams, mode: Mode) -> np.ndarray:
    """Mean of ``r_s - r_i`` (difference mode) or ``k_s + k_i`` (sum mode)."""
    mode = Mode(mode)
    want = {Mode.CORRELATION_DIFFERENCE: Plane.POSITION, Mode.CORRELATION_SUM: Plane.MOMENTUM}.get(mode)
    if want is None:
        raise EstimationError(f"{mode} is not a correlation mode")
    if pairs.plane != want:
        raise EstimationError(f"{mode.value} mode needs {want.name} pairs, got {pairs.plane.name}")
    if len(pairs) == 0:
        raise EstimationError("correlation centroid of an empty pair set")
    return correlation_coords(pairs, cam).mean(axis=0)


def _block_estimate(block, mode: Mode, cam: CameraParams):
    if mode is Mode.CLASSICAL_CENTROID:
        if isinstance(block, CoincidencePairs):
            raise EstimationError("classical mode takes single events, not pairs")
        return event_centroid(block, cam), len(block), Plane(int(block["plane"][0])) if len(block) else None
    return correlation_centroid(block, cam, mode), len(block), block.plane


def displacement_estimate(block_a, block_b, mode, cam: CameraParams) -> TrackingEstimate:
    """Shift of the estimator between two acquisitions (b minus a)."""
    mode = Mode(mode)
    va, na, pa = _block_estimate(block_a, mode, cam)
    vb, nb, pb = _block_estimate(block_b, mode, cam)
    if pa != pb:
        raise EstimationError("blocks come from different planes")
    return TrackingEstimate(mode, vb - va, min(na, nb), pa)


def uncertainty_product(trials_r: TrialStatistics, trials_k: TrialStatistics, n: int | None = None,
                        axes: str = "x") -> UncertaintyProduct:
    """``std(dr) * std(dk)`` together with the 1/n limit.

    ``axes="x"`` uses the horizontal components; ``axes="xy"`` uses the
    root-sum-square over both axes.
    """
    if trials_r.n != trials_k.n or (n is not None and n != trials_r.n):
        raise EstimationError(f"trial sets use different n ({trials_r.n}, {trials_k.n}, {n})")
    n = trials_r.n
    sr, sk = np.atleast_1d(trials_r.std), np.atleast_1d(trials_k.std)
    if axes == "x":
        sr, sk = float(sr[0]), float(sk[0])
    elif axes == "xy":
        sr, sk = float(np.sqrt(np.sum(sr ** 2))), float(np.sqrt(np.sum(sk ** 2)))
    else:
        raise ValueError(f"unknown axes {axes!r}")
    return UncertaintyProduct(sr, sk, sr * sk, n, 1.0 / n)


def expected_product(width_r: float, width_k: float, n: int) -> float:
    """Predicted displacement uncertainty product ``2 w_r w_k / n``."""
    return 2 * width_r * width_k / n


def fisher_crb(sigma: float, n: int) -> tuple[float, float]:
    """Fisher information of one Gaussian-distributed photon about the
    beam centre, and the resulting bound on the centroid variance."""
    _check_sigma_n(sigma, n)
    info = 1.0 / sigma ** 2
    return info, 1.0 / (n * info)


@dataclass
class GaussFit:
    center: float
    width: float
    amplitude: float
    baseline: float
    center_err: float
    width_err: float
    residual_norm: float


def _gauss(x, amp, mu, s, base):
    return amp * np.exp(-0.5 * ((x - mu) / s) ** 2) + base


def fit_gaussian_width(centers, counts, baseline: bool = True, maxfev: int = 2000) -> GaussFit:
    """Least-squares Gaussian (+ constant) fit to a histogram."""
    x = np.asarray(centers, dtype=float)
    y = np.asarray(counts, dtype=float)
    if np.count_nonzero(y) < 5:
        raise FitError(f"need at least 5 non-empty bins, got {np.count_nonzero(y)}")
    w = y.sum()
    mu0 = float((x * y).sum() / w)
    s0 = float(np.sqrt(max((y * (x - mu0) ** 2).sum() / w, 1e-300)))
    span = x.max() - x.min()
    sigma = np.sqrt(np.maximum(y, 1.0))
    if baseline:
        f = _gauss
        p0 = [y.max() - y.min(), x[np.argmax(y)], s0, y.min()]
    else:
        def f(x, amp, mu, s):
            return _gauss(x, amp, mu, s, 0.0)
        p0 = [y.max(), x[np.argmax(y)], s0]
    try:
        with warnings.catch_warnings():
            # an undetermined covariance is reported below as a FitError
            warnings.simplefilter("ignore", OptimizeWarning)
            popt, pcov = curve_fit(f, x, y, p0=p0, sigma=sigma, absolute_sigma=True, maxfev=maxfev)
    except RuntimeError as exc:
        res = float(np.linalg.norm((y - f(x, *p0)) / sigma))
        raise FitError(f"Gaussian fit did not converge: {exc}", res) from None
    res = float(np.linalg.norm((y - f(x, *popt)) / sigma))
    amp, mu, s = popt[:3]
    s = abs(s)
    perr = np.sqrt(np.abs(np.diag(pcov))) if np.all(np.isfinite(pcov)) else np.full(len(popt), np.inf)
    if not np.isfinite(s) or s > 2 * span or amp <= 0 or not np.isfinite(perr[2]):
        raise FitError(f"fit has no usable peak (width {s:.4g} over span {span:.4g})", res)
    return GaussFit(float(mu), float(s), float(amp), float(popt[3]) if baseline else 0.0,
                    float(perr[1]), float(perr[2]), res)


def histogram_fit(values, bin_width: float, center: float = 0.0, half_range: float | None = None) -> GaussFit:
    """Bin ``values`` on a grid of ``bin_width`` aligned with ``center`` and fit."""
    values = np.asarray(values, float)
    if half_range is None:
        half_range = 6 * np.std(values) + 2 * bin_width
    nb = int(math.ceil(half_range / bin_width))
    edges = center + (np.arange(-nb, nb + 1) - 0.5) * bin_width
    h, e = np.histogram(values, bins=edges)
    return fit_gaussian_width(0.5 * (e[1:] + e[:-1]), h)


@dataclass
class ApertureResult:
    mask: np.ndarray
    sbr: float
    n_in: int
    background_in: float


def digital_aperture(coords, center, radius: float, tags: np.ndarray | None = None,
                     annulus: tuple[float, float] | None = None) -> ApertureResult:
    """Select events within ``radius`` of ``center``.

    The signal-to-background ratio uses truth tags when given.  Otherwise
    the background density is taken from the annulus ``(r_in, r_out)``
    (default 1.5 to 2.5 aperture radii) and scaled to the aperture area.
    """
    if not radius > 0:
        raise InvalidParameter("aperture radius must be positive")
    coords = np.asarray(coords, float)
    rr = np.hypot(*(coords - np.asarray(center, float)).T) if len(coords) else np.zeros(0)
    mask = rr <= radius
    n_in = int(mask.sum())
    if tags is not None:
        bg = float(np.count_nonzero(tags[mask] == TAG_BACKGROUND))
        sig = n_in - bg
    else:
        if math.isinf(radius):
            return ApertureResult(mask, math.nan, n_in, math.nan)
        r_in, r_out = annulus if annulus is not None else (1.5 * radius, 2.5 * radius)
        n_ann = np.count_nonzero((rr > r_in) & (rr <= r_out))
        bg = n_ann * radius ** 2 / (r_out ** 2 - r_in ** 2)
        sig = n_in - bg
    sbr = sig / bg if bg > 0 else math.inf
    return ApertureResult(mask, sbr, n_in, bg)


def aperture_center(coords, radius: float, iters: int = 3) -> np.ndarray:
    """Median of ``coords`` refined by the mean inside ``radius``.

    Pixel coordinates are discrete, so a bare median jumps between pixel
    centres; the refinement makes the aperture follow the beam smoothly.
    """
    coords = np.asarray(coords, float)
    if len(coords) == 0:
        raise EstimationError("aperture centre of an empty event set")
    center = np.median(coords, axis=0)
    if math.isinf(radius):
        return coords.mean(axis=0)
    for _ in range(iters):
        inside = np.hypot(*(coords - center).T) <= radius
        if not inside.any():
            break
        center = coords[inside].mean(axis=0)
    return center


@dataclass
class EfficiencyBound:
    value: float
    break_even: float


def efficiency_bound(delta_r: float, delta_k: float, epsilon_i: float, n_s: int) -> EfficiencyBound:
    """Correlation-tracking product per detected signal photon,
    ``2 dr dk / (eps_i n_s)``, and the efficiency ``2 dr dk`` above which
    it beats the 1/n_s limit."""
    if not 0 < epsilon_i <= 1:
        raise InvalidParameter("epsilon_i must lie in (0, 1]")
    if n_s < 1:
        raise InvalidParameter("n_s must be >= 1")
    be = 2 * delta_r * delta_k
    return EfficiencyBound(be / (epsilon_i * n_s), be)
