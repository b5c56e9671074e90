"""Ray-transfer (ABCD) algebra for one transverse axis.

Also holds the closed-form uncertainty product for tracking with two
overlapped classical beams, one narrow in position and one narrow in
momentum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence


class InvalidParameter(ValueError):
    """Raised when an optical or source parameter is outside its domain."""


@dataclass(frozen=True)
class Ray:
    r: float  # um
    theta: float  # rad

    def __post_init__(self):
        if not (math.isfinite(self.r) and math.isfinite(self.theta)):
            raise InvalidParameter(f"ray must be finite, got ({self.r}, {self.theta})")


@dataclass(frozen=True)
class AbcdMatrix:
    a: float
    b: float
    c: float
    d: float

    @classmethod
    def identity(cls) -> "AbcdMatrix":
        return cls(1.0, 0.0, 0.0, 1.0)

    @property
    def det(self) -> float:
        return self.a * self.d - self.b * self.c

    def __matmul__(self, other):
        if isinstance(other, AbcdMatrix):
            return AbcdMatrix(
                self.a * other.a + self.b * other.c,
                self.a * other.b + self.b * other.d,
                self.c * other.a + self.d * other.c,
                self.c * other.b + self.d * other.d,
            )
        if isinstance(other, Ray):
            return Ray(self.a * other.r + self.b * other.theta,
                       self.c * other.r + self.d * other.theta)
        return NotImplemented

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.a, self.b, self.c, self.d)


def mat_propagation(d: float) -> AbcdMatrix:
    """Free-space propagation over a length ``d`` (um)."""
    if not math.isfinite(d):
        raise InvalidParameter(f"propagation length must be finite, got {d}")
    return AbcdMatrix(1.0, float(d), 0.0, 1.0)


def mat_thin_lens(f: float) -> AbcdMatrix:
    """Thin lens of focal length ``f`` (um). ``f = inf`` means no lens."""
    if f == 0:
        raise InvalidParameter("focal length must be non-zero")
    return AbcdMatrix(1.0, 0.0, -1.0 / f, 1.0)


def compose(ms: Sequence[AbcdMatrix]) -> AbcdMatrix:
    """Product ``ms[0] @ ms[1] @ ... @ ms[-1]``.

    Matrices are written in the usual optical order, so the last element
    is the first one the ray meets.
    """
    if len(ms) == 0:
        raise InvalidParameter("compose needs at least one matrix")
    out = ms[-1]
    for m in reversed(ms[:-1]):
        out = m @ out
    return out


def four_f_system(channel: AbcdMatrix, f: float) -> AbcdMatrix:
    """The channel sandwiched between two lenses, each a focal length away."""
    prop = mat_propagation(f)
    lens = mat_thin_lens(f)
    return compose([prop, lens, channel, lens, prop])


def trajectory_change(channel: AbcdMatrix, f: float, d: float, ray: Ray) -> tuple[float, float]:
    """Change of the output ray when the reference channel prop(d) is
    replaced by ``channel`` inside the 4f relay.

    Returns ``(delta_r, delta_theta)``.
    """
    if f == 0:
        raise InvalidParameter("focal length must be non-zero")
    ref = four_f_system(mat_propagation(d), f) @ ray
    out = four_f_system(channel, f) @ ray
    return out.r - ref.r, out.theta - ref.theta


def trajectory_change_closed_form_r(channel: AbcdMatrix, f: float, ray: Ray) -> float:
    """Closed-form position change ``(Cf - D + 1) r + C f^2 theta``."""
    c, d = channel.c, channel.d
    return (c * f - d + 1.0) * ray.r + c * f * f * ray.theta


def trajectory_change_closed_form_theta(channel: AbcdMatrix, f: float, d: float, ray: Ray) -> float:
    """Angle change obtained by expanding the 4f products symbolically.

    The theta coefficient is ``-[(A - 1) f^2 - C f^3] / f^2 = 1 - A + C f``;
    it vanishes for the unchanged channel (A = 1, C = 0) as it must.
    """
    a, b, c, dd = channel.as_tuple()
    r_coef = (b - d - (a + dd - 2.0) * f + c * f * f) / (f * f)
    t_coef = 1.0 - a + c * f
    return r_coef * ray.r + t_coef * ray.theta


@dataclass(frozen=True)
class OverlapConfig:
    sigma_x1: float  # um
    sigma_x2: float
    sigma_k1: float  # 1/um
    sigma_k2: float
    n: int

    def validate(self):
        widths = (self.sigma_x1, self.sigma_x2, self.sigma_k1, self.sigma_k2)
        if any(not (w > 0) for w in widths):
            raise InvalidParameter(f"all widths must be positive, got {widths}")
        if self.n < 1:
            raise InvalidParameter(f"n must be >= 1, got {self.n}")
        # small slack so exact minimum-uncertainty beams pass after float rounding
        for sx, sk in ((self.sigma_x1, self.sigma_k1), (self.sigma_x2, self.sigma_k2)):
            if sx * sk < 0.5 * (1 - 1e-12):
                raise InvalidParameter(
                    f"beam with sigma_x*sigma_k = {sx * sk:.6g} violates the uncertainty limit 1/2")

    @classmethod
    def minimum_uncertainty(cls, sigma_x: float, alpha: float, n: int) -> "OverlapConfig":
        """Two minimum-uncertainty beams with width ratio ``alpha = sx1/sx2 = sk2/sk1``."""
        sx1 = sigma_x * alpha
        sx2 = sigma_x
        return cls(sx1, sx2, 0.5 / sx1, 0.5 / sx2, n)


def overlap_uncertainty_product(cfg: OverlapConfig) -> float:
    """Uncertainty product of the displacement measured with two overlapped beams."""
    cfg.validate()
    sx1, sx2, sk1, sk2 = cfg.sigma_x1 ** 2, cfg.sigma_x2 ** 2, cfg.sigma_k1 ** 2, cfg.sigma_k2 ** 2
    return 2.0 / cfg.n * math.sqrt(sx1 * sk1 + sx2 * sk2 + sx1 * sk2 + sx2 * sk1)


def overlap_product_min_uncertainty(alpha: float, n: int) -> float:
    """Same product for minimum-uncertainty beams: ``sqrt(2 + a^2 + 1/a^2) / n``."""
    if not alpha > 0:
        raise InvalidParameter("alpha must be positive")
    return math.sqrt(2.0 + alpha ** 2 + alpha ** -2) / n
