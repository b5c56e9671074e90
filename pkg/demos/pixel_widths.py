"""What a pixelated camera does to a measured correlation width.

Run:  python demos/pixel_widths.py

Both photons of a pair are recorded on 55 um pixels, so r_s - r_i carries
two independent quantization errors: the measured width is close to
sqrt(delta^2 + p^2/6), not sqrt(delta^2 + p^2/12) as for a single binning.
"""

import math

import numpy as np

from qcbt.camera import CameraParams
from qcbt.coincidence import CoincidenceConfig, correlation_coords
from qcbt.sim import acquire_spdc
from qcbt.source import Displacement, Plane, SpdcSourceParams
from qcbt.tracking import histogram_fit

src, cam = SpdcSourceParams(), CameraParams.tpx3()
blk = acquire_spdc(src, cam, CoincidenceConfig(20), Displacement(), 50_000, np.random.default_rng(3))
d = correlation_coords(blk.pairs[Plane.POSITION], cam)[:, 0]
fit = histogram_fit(d, cam.pitch, half_range=8 * src.delta_r + 4 * cam.pitch)
p = cam.pitch
print(f"fitted width        {fit.width:6.2f} um")
print(f"one binning         {math.sqrt(src.delta_r ** 2 + p ** 2 / 12):6.2f} um")
print(f"both photons binned {math.sqrt(src.delta_r ** 2 + p ** 2 / 6):6.2f} um")
