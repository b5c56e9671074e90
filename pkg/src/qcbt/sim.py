"""Acquisition pipeline: source -> camera -> (background) -> coincidence.

Each ``acquire_*`` call emulates one data-taking block at a fixed beam
displacement and returns the events or pairs a tracking estimator
consumes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .camera import BackgroundSpec, CameraParams, DetectStats, detect, inject_background, pixel_coords
from .coincidence import (CoincidenceConfig, CoincidencePairs, gate_center as peak_center, match_coincidences,
                          spatial_gate, split_plane)
from .events import TAG_BACKGROUND, merge_streams
from .source import (Arm, Displacement, LaserSourceParams, Plane, SpdcSourceParams, biphotons_to_photons,
                     poisson_arrivals, sample_biphotons, sample_laser_photons)
from .tracking import aperture_center, digital_aperture

PLANES = (Plane.POSITION, Plane.MOMENTUM)


class AcquisitionError(RuntimeError):
    pass


@dataclass
class SpdcBlock:
    pairs: dict  # Plane -> CoincidencePairs
    duration_ns: float = 0.0
    generated: int = 0
    signal_singles: dict = field(default_factory=lambda: {p: 0 for p in PLANES})
    idler_singles: dict = field(default_factory=lambda: {p: 0 for p in PLANES})
    signal_detections: dict = field(default_factory=lambda: {p: 0 for p in PLANES})
    matched: dict = field(default_factory=lambda: {p: 0 for p in PLANES})
    gated_out: dict = field(default_factory=lambda: {p: 0 for p in PLANES})
    accidental: dict = field(default_factory=lambda: {p: 0 for p in PLANES})
    detect: DetectStats = field(default_factory=DetectStats)
    streams: list = field(default_factory=list)


def _expected_pairs_per_ns(src: SpdcSourceParams, cam: CameraParams) -> float:
    return src.pair_rate * 1e-9 * 0.25 * cam.efficiency_signal * cam.efficiency_idler


def spdc_segment(src: SpdcSourceParams, cam: CameraParams, coinc: CoincidenceConfig, disp: Displacement,
                 t: np.ndarray, rng: np.random.Generator, backgrounds=(), first_id: int = 0,
                 gate_center: str | dict = "peak", block: SpdcBlock | None = None,
                 keep_stream: bool = False, span: tuple[float, float] | None = None) -> SpdcBlock:
    """Detect and match the pairs emitted at times ``t`` (ns).

    Backgrounds cover ``span`` (ns), by default the emission interval.
    """
    block = SpdcBlock({p: [] for p in PLANES}) if block is None else block
    if len(t) == 0:
        return block
    t0, t1 = span if span is not None else (float(t[0]), float(t[-1]))
    pairs = sample_biphotons(src, disp, t, rng, first_id=first_id)
    events, st = detect(biphotons_to_photons(pairs), cam, rng)
    block.detect += st
    block.generated += len(t)
    streams = [events]
    for bg in backgrounds:
        if bg.rate > 0:
            ev, _ = inject_background(bg, cam, max(t1 - t0, 1.0) * 1e-9, rng, t0_ns=t0)
            streams.append(ev)
    stream = merge_streams(streams)
    if keep_stream:
        block.streams.append(stream)
    for plane in PLANES:
        sig, idl = split_plane(stream, plane)
        res = match_coincidences(sig, idl, coinc)
        block.signal_singles[plane] += res.signal_singles
        block.idler_singles[plane] += res.idler_singles
        block.signal_detections[plane] += len(sig)
        block.matched[plane] += len(res.pairs)
        matched = res.pairs
        if len(matched) and (coinc.rho_r if plane == Plane.POSITION else coinc.rho_k) is not None:
            if isinstance(gate_center, dict):
                center = gate_center[plane]
            else:
                center = peak_center(matched, coinc, cam)
            kept = spatial_gate(matched, coinc, cam, center)
        else:
            kept = matched
        block.gated_out[plane] += len(matched) - len(kept)
        block.accidental[plane] += int(np.count_nonzero(
            (kept.signal["tag"] != kept.idler["tag"]) | (kept.signal["tag"] == TAG_BACKGROUND)))
        block.pairs[plane].append(kept)
    block.duration_ns += max(t1 - t0, 0.0)
    return block


def _finish(block: SpdcBlock, n: int | None) -> SpdcBlock:
    for plane in PLANES:
        allp = CoincidencePairs.concat(block.pairs[plane], plane)
        block.pairs[plane] = allp if n is None else allp[:n]
    return block


def acquire_spdc(src: SpdcSourceParams, cam: CameraParams, coinc: CoincidenceConfig, disp: Displacement,
                 n_pairs: int, rng: np.random.Generator, backgrounds=(), planes=PLANES,
                 gate_center="peak", keep_stream: bool = False, max_segments: int = 100) -> SpdcBlock:
    """Acquire until every plane in ``planes`` holds ``n_pairs`` gated
    coincidences; the first ``n_pairs`` in time order are kept."""
    rate = _expected_pairs_per_ns(src, cam)
    if rate <= 0:
        raise AcquisitionError("source rate or efficiencies are zero; no coincidences possible")
    block = SpdcBlock({p: [] for p in PLANES})
    t0 = 0.0
    next_id = 0
    for _ in range(max_segments):
        have = min(sum(len(p) for p in block.pairs[pl]) for pl in planes)
        need = n_pairs - have
        if need <= 0:
            return _finish(block, n_pairs)
        dur = (need * 1.1 + 5 * np.sqrt(need) + 10) / rate
        t = poisson_arrivals(src.pair_rate, dur, rng, t0=t0)
        spdc_segment(src, cam, coinc, disp, t, rng, backgrounds, next_id, gate_center, block, keep_stream,
                     span=(t0, t0 + dur))
        next_id += len(t)
        # gap larger than any window so segments never share a coincidence
        t0 += dur + 10 * (coinc.window + 10 * cam.jitter_sigma + 1)
    raise AcquisitionError(f"could not collect {n_pairs} pairs in {max_segments} segments")


def acquire_spdc_budget(src: SpdcSourceParams, cam: CameraParams, coinc: CoincidenceConfig, disp: Displacement,
                        n_generated: int, rng: np.random.Generator, backgrounds=(),
                        gate_center="peak") -> SpdcBlock:
    """Acquire exactly ``n_generated`` emitted pairs and keep every coincidence."""
    dur = n_generated / (src.pair_rate * 1e-9)
    t = np.sort(rng.uniform(0.0, dur, n_generated))
    block = spdc_segment(src, cam, coinc, disp, t, rng, backgrounds, 0, gate_center, span=(0.0, dur))
    return _finish(block, None)


@dataclass
class LaserBlock:
    events: dict  # Plane -> events
    duration_ns: float = 0.0
    background: dict = field(default_factory=lambda: {p: 0 for p in PLANES})
    sbr: dict = field(default_factory=dict)
    streams: list = field(default_factory=list)


def acquire_laser(src: LaserSourceParams, cam: CameraParams, disp: Displacement, n: int,
                  rng: np.random.Generator, backgrounds=(), aperture: dict | None = None,
                  planes=PLANES, keep_stream: bool = False, max_segments: int = 100) -> LaserBlock:
    """First ``n`` signal-arm events per plane (after the optional digital
    aperture, given as ``{plane: radius}`` and centred on the median of
    the block's events, see :func:`aperture_center`)."""
    rate = src.photon_rate * 1e-9 * 0.5 * cam.efficiency_signal
    if rate <= 0:
        raise AcquisitionError("laser rate or signal efficiency is zero")
    collected = {p: [] for p in PLANES}
    block = LaserBlock({})
    t0 = 0.0
    next_id = 0
    aperture = aperture or {}
    for _ in range(max_segments):
        have = min(sum(len(e) for e in collected[pl]) for pl in planes)
        need = n - have
        if need <= 0:
            break
        dur = (need * 1.1 + 5 * np.sqrt(need) + 10) / rate
        t = poisson_arrivals(src.photon_rate, dur, rng, t0=t0)
        ev, _ = detect(sample_laser_photons(src, disp, t, rng, first_id=next_id), cam, rng)
        next_id += len(t)
        streams = [ev]
        for bg in backgrounds:
            if bg.rate > 0:
                bev, _ = inject_background(bg, cam, dur * 1e-9, rng, t0_ns=t0)
                streams.append(bev)
        stream = merge_streams(streams)
        if keep_stream:
            block.streams.append(stream)
        for plane in PLANES:
            sel = stream[(stream["plane"] == plane) & (stream["arm"] == Arm.SIGNAL)]
            if plane in aperture and len(sel):
                xy = pixel_coords(sel, cam)
                res = digital_aperture(xy, aperture_center(xy, aperture[plane]), aperture[plane], tags=sel["tag"])
                block.sbr.setdefault(plane, []).append(res.sbr)
                sel = sel[res.mask]
            collected[plane].append(sel)
        block.duration_ns += dur
        t0 += dur
    else:
        raise AcquisitionError(f"could not collect {n} laser events in {max_segments} segments")
    for plane in PLANES:
        ev = np.concatenate(collected[plane])[:n]
        block.events[plane] = ev
        block.background[plane] = int(np.count_nonzero(ev["tag"] == TAG_BACKGROUND))
    return block
