"""Named experiments wiring source -> camera -> coincidence -> tracking.

Each runner returns a :class:`ScenarioReport` whose tables are written
as CSV (raw per-trial data plus summaries) next to a ``report.json``.
Trial ``i`` of an experiment labelled ``label`` draws from
``default_rng([seed, crc32(label), i])`` so any row can be replayed.
"""

from __future__ import annotations

import json
import math
import os
import platform
import time
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .camera import BackgroundKind, BackgroundSpec, CameraParams, detect, inject_background, pixel_coords
from .coincidence import CoincidenceConfig, correlation_coords, throughput_bench, write_pairs_csv
from .config import ScenarioConfig
from .events import TAG_BACKGROUND, merge_streams, write_events
from .optics import OverlapConfig, overlap_product_min_uncertainty, overlap_uncertainty_product
from .sim import PLANES, acquire_laser, acquire_spdc, acquire_spdc_budget
from .source import Arm, Displacement, Plane, mirror_to_displacement, poisson_arrivals, sample_laser_photons
from .tracking import (Mode, TrialStatistics, aperture_center, centroid, correlation_centroid, digital_aperture,
                       displacement_estimate, efficiency_bound, expected_product, fisher_crb, histogram_fit,
                       uncertainty_product)


class ScenarioError(RuntimeError):
    def __init__(self, stage: str, seed: int, cause: BaseException):
        super().__init__(f"stage {stage!r} failed (seed {seed}): {cause}")
        self.stage = stage
        self.seed = seed


@dataclass
class Table:
    columns: tuple
    rows: list = field(default_factory=list)

    def add(self, *row):
        if len(row) != len(self.columns):
            raise ValueError(f"row has {len(row)} fields, table has {len(self.columns)}")
        self.rows.append(row)

    def column(self, name) -> np.ndarray:
        j = self.columns.index(name)
        return np.array([r[j] for r in self.rows])

    def where(self, **eq) -> list:
        idx = {k: self.columns.index(k) for k in eq}
        return [r for r in self.rows if all(r[idx[k]] == v for k, v in eq.items())]


@dataclass
class ScenarioReport:
    scenario: str
    config: dict
    tables: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    wall_clock: float = 0.0
    version: str = __version__
    warnings: list = field(default_factory=list)
    event_files: list = field(default_factory=list)


def trial_rng(seed: int, label: str, i: int) -> np.random.Generator:
    return np.random.default_rng([seed, zlib.crc32(label.encode()), i])


def _map_trials(fn, n: int, workers: int) -> list:
    if workers <= 1:
        return [fn(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, range(n)))


class _EventKeeper:
    def __init__(self, enabled: bool, limit: int = 8):
        self.enabled = enabled
        self.limit = limit
        self.streams = []

    def offer(self, label, streams):
        if self.enabled and len(self.streams) < self.limit and streams:
            self.streams.append((label, merge_streams(streams) if len(streams) > 1 else streams[0]))


# --- trial kernels -----------------------------------------------------------

def laser_displacement_trial(cfg: ScenarioConfig, disp: Displacement, n: int, rng, cam=None,
                             backgrounds=(), aperture=None, keeper=None, planes=PLANES):
    cam = cam or cfg.camera
    keep = keeper is not None and keeper.enabled
    a = acquire_laser(cfg.laser, cam, Displacement(), n, rng, backgrounds, aperture, planes, keep)
    b = acquire_laser(cfg.laser, cam, disp, n, rng, backgrounds, aperture, planes, keep)
    if keep:
        keeper.offer("laser_ref", a.streams)
        keeper.offer("laser", b.streams)
    out = {}
    for plane in planes:
        out[plane] = displacement_estimate(a.events[plane], b.events[plane], Mode.CLASSICAL_CENTROID, cam).value
    return out, a, b


def spdc_displacement_trial(cfg: ScenarioConfig, disp: Displacement, n: int, rng, cam=None,
                            backgrounds=(), keeper=None, coinc=None):
    cam = cam or cfg.camera
    coinc = coinc or cfg.coincidence
    keep = keeper is not None and keeper.enabled
    a = acquire_spdc(cfg.spdc, cam, coinc, Displacement(), n, rng, backgrounds, keep_stream=keep)
    b = acquire_spdc(cfg.spdc, cam, coinc, disp, n, rng, backgrounds, keep_stream=keep)
    if keep:
        keeper.offer("spdc_ref", a.streams)
        keeper.offer("spdc", b.streams)
    out = {
        Plane.POSITION: displacement_estimate(a.pairs[Plane.POSITION], b.pairs[Plane.POSITION],
                                              Mode.CORRELATION_DIFFERENCE, cam).value,
        Plane.MOMENTUM: displacement_estimate(a.pairs[Plane.MOMENTUM], b.pairs[Plane.MOMENTUM],
                                              Mode.CORRELATION_SUM, cam).value,
    }
    return out, a, b


def _run_trials(cfg, source, disp, n, label, m, keeper=None, **kw):
    def one(i):
        rng = trial_rng(cfg.seed, label, i)
        k = keeper if i == 0 else None
        if source == "laser":
            est, _, _ = laser_displacement_trial(cfg, disp, n, rng, keeper=k, **kw)
        else:
            est, _, _ = spdc_displacement_trial(cfg, disp, n, rng, keeper=k, **kw)
        return est
    res = _map_trials(one, m, cfg.workers)
    dr = np.array([r[Plane.POSITION] for r in res])
    dk = np.array([r[Plane.MOMENTUM] for r in res])
    return dr, dk


def _pixel_widths(cfg: ScenarioConfig, cam: CameraParams):
    """(position, momentum) widths including quantization: one pixel for a
    single photon, two independent pixels for a correlation coordinate."""
    q_r, q_k = cam.pitch ** 2 / 12, cam.k_per_pixel ** 2 / 12
    laser = (math.sqrt(cfg.laser.sigma_r ** 2 + q_r), math.sqrt(cfg.laser.sigma_k ** 2 + q_k))
    spdc = (math.sqrt(cfg.spdc.delta_r ** 2 + 2 * q_r), math.sqrt(cfg.spdc.delta_k ** 2 + 2 * q_k))
    return {"laser": laser, "spdc": spdc}


def _widths(cfg: ScenarioConfig, source: str):
    if source == "laser":
        return cfg.laser.sigma_r, cfg.laser.sigma_k
    return cfg.spdc.delta_r, cfg.spdc.delta_k


# --- scenarios ---------------------------------------------------------------

def run_correlations(cfg: ScenarioConfig, keeper) -> ScenarioReport:
    rep = ScenarioReport(cfg.scenario, cfg.echo())
    p = cfg["correlations"]
    cam = cfg.camera
    coinc = cfg.coincidence if p["gate"] else CoincidenceConfig(cfg.coincidence.window)
    rng = trial_rng(cfg.seed, "correlations", 0)
    block = acquire_spdc(cfg.spdc, cam, coinc, Displacement(), p["n_pairs"], rng, keep_stream=keeper.enabled)
    keeper.offer("spdc", block.streams)

    fits = Table(("plane", "axis", "center", "width", "center_err", "width_err", "n_pairs",
                  "configured_width", "expected_binned_once", "expected_two_pixel"))
    marg = Table(("plane", "axis", "bin_center", "count"))
    h2d = Table(("plane", "bin_x", "bin_y", "count"))
    pairs_out = []
    for plane in PLANES:
        pairs = block.pairs[plane]
        pairs_out.append(pairs)
        c = correlation_coords(pairs, cam)
        unit = cam.unit(plane)
        width = cfg.spdc.delta_r if plane == Plane.POSITION else cfg.spdc.delta_k
        # a sum or difference of two pixel centres lies on the integer pixel grid;
        # bins are centred on it
        offset = 0.0
        for axis, name in ((0, "x"), (1, "y")):
            f = histogram_fit(c[:, axis], unit, center=offset, half_range=8 * width + 4 * unit)
            fits.add(plane.name.lower(), name, f.center, f.width, f.center_err, f.width_err, len(pairs),
                     width, math.sqrt(width ** 2 + unit ** 2 / 12), math.sqrt(width ** 2 + unit ** 2 / 6))
            nb = int(math.ceil((8 * width + 4 * unit) / unit))
            edges = offset + (np.arange(-nb, nb + 1) - 0.5) * unit
            hist, e = np.histogram(c[:, axis], edges)
            for x, cnt in zip(0.5 * (e[1:] + e[:-1]), hist):
                marg.add(plane.name.lower(), name, float(x), int(cnt))
        ix = np.rint((c[:, 0] - offset) / unit).astype(np.int64)
        iy = np.rint((c[:, 1] - offset) / unit).astype(np.int64)
        keys, counts = np.unique(np.stack([ix, iy], axis=1), axis=0, return_counts=True)
        for (kx, ky), cnt in zip(keys.tolist(), counts.tolist()):
            h2d.add(plane.name.lower(), kx, ky, cnt)
    rep.tables.update(fits=fits, marginals=marg, hist2d=h2d)
    rep.summary = {
        "pairs_per_plane": p["n_pairs"],
        "accidentals": {pl.name.lower(): block.accidental[pl] for pl in PLANES},
        "fits": [dict(zip(fits.columns, r)) for r in fits.rows],
    }
    rep._pairs = pairs_out
    return rep


def run_uncertainty_sweep(cfg: ScenarioConfig, keeper) -> ScenarioReport:
    rep = ScenarioReport(cfg.scenario, cfg.echo())
    p = cfg["sweep"]
    d = cfg["displacement"]
    disp = Displacement(dx=d["dx"], du=d["du"])
    raw = Table(("source", "n", "repeat", "trial", "d_x", "d_y", "d_u", "d_v"))
    prod = Table(("source", "n", "repeat", "sigma_dx", "sigma_du", "product", "product_n", "hul_n",
                  "expected_n", "expected_pixel_n", "beats_hul"))
    pix = _pixel_widths(cfg, cfg.camera)
    for source in p["sources"]:
        wr, wk = _widths(cfg, source)
        for n in p["n_values"]:
            for r in range(p["repeats"]):
                label = f"sweep/{source}/{n}/{r}"
                dr, dk = _run_trials(cfg, source, disp, n, label, p["trials"], keeper if r == 0 else None)
                for i in range(p["trials"]):
                    raw.add(source, n, r, i, *dr[i].tolist(), *dk[i].tolist())
                up = uncertainty_product(TrialStatistics(dr, n), TrialStatistics(dk, n), axes=p["axes"])
                prod.add(source, n, r, up.sigma_dr, up.sigma_dk, up.product, up.scaled, 1.0,
                         expected_product(wr, wk, 1), expected_product(*pix[source], 1), int(up.scaled < 1.0))
    rep.tables.update(trials=raw, products=prod)
    summary = {}
    for source in p["sources"]:
        vals = np.array([r[6] for r in prod.where(source=source)])
        summary[source] = {"mean_product_n": float(vals.mean()), "min_product_n": float(vals.min()),
                           "max_product_n": float(vals.max()),
                           "expected_n": expected_product(*_widths(cfg, source), 1),
                           "expected_pixel_n": expected_product(*pix[source], 1)}
    rep.summary["products"] = summary

    eff = cfg["efficiency"]
    if eff["idler_efficiencies"]:
        t_eff, t_raw = run_efficiency_study(cfg, eff)
        rep.tables.update(efficiency=t_eff, efficiency_trials=t_raw)
        rep.summary["efficiency"] = [dict(zip(t_eff.columns, r)) for r in t_eff.rows]
    return rep


def run_efficiency_study(cfg: ScenarioConfig, eff: dict):
    """Fixed emitted-pair budget per block, varying idler detection efficiency."""
    d = cfg["displacement"]
    disp = Displacement(dx=d["dx"], du=d["du"])
    table = Table(("idler_efficiency", "epsilon_i", "n_s", "n_c", "sigma_dx", "sigma_du", "product",
                   "product_eps_ns", "predicted", "break_even"))
    raw = Table(("idler_efficiency", "trial", "d_x", "d_y", "d_u", "d_v", "n_c_position", "n_c_momentum",
                 "n_s_position", "n_s_momentum"))
    for e in eff["idler_efficiencies"]:
        cam = replace(cfg.camera, efficiency_idler=e, regions=dict(cfg.camera.regions))
        label = f"efficiency/{e}"

        def one(i):
            rng = trial_rng(cfg.seed, label, i)
            a = acquire_spdc_budget(cfg.spdc, cam, cfg.coincidence, Displacement(), eff["pair_budget"], rng)
            b = acquire_spdc_budget(cfg.spdc, cam, cfg.coincidence, disp, eff["pair_budget"], rng)
            dx = displacement_estimate(a.pairs[Plane.POSITION], b.pairs[Plane.POSITION],
                                       Mode.CORRELATION_DIFFERENCE, cam).value
            du = displacement_estimate(a.pairs[Plane.MOMENTUM], b.pairs[Plane.MOMENTUM],
                                       Mode.CORRELATION_SUM, cam).value
            nc = [min(len(a.pairs[pl]), len(b.pairs[pl])) for pl in PLANES]
            ns = [(a.signal_detections[pl] + b.signal_detections[pl]) / 2 for pl in PLANES]
            return dx, du, nc, ns
        res = _map_trials(one, eff["trials"], cfg.workers)
        dx = np.array([r[0] for r in res])
        du = np.array([r[1] for r in res])
        nc = np.array([r[2] for r in res], float)
        ns = np.array([r[3] for r in res], float)
        for i, r in enumerate(res):
            raw.add(e, i, *r[0].tolist(), *r[1].tolist(), *r[2], *r[3])
        n_s = float(ns.mean())
        n_c = float(nc.mean())
        eps_i = n_c / n_s
        # x and y are independent draws of the same spread: pool them
        sx = float(np.sqrt(dx.var(axis=0, ddof=1).mean()))
        su = float(np.sqrt(du.var(axis=0, ddof=1).mean()))
        b = efficiency_bound(cfg.spdc.delta_r, cfg.spdc.delta_k, eps_i, max(1, round(n_s)))
        table.add(e, eps_i, n_s, n_c, sx, su, sx * su, sx * su * eps_i * n_s, b.value, b.break_even)
    return table, raw


def _schedule(cfg: ScenarioConfig):
    d = cfg["displacement"]
    return [(t, mirror_to_displacement(t, d["gains"])) for t in d["mirror_positions"]]


def run_track(cfg: ScenarioConfig, keeper) -> ScenarioReport:
    rep = ScenarioReport(cfg.scenario, cfg.echo())
    p = cfg["track"]
    raw = Table(("source", "mirror_t", "trial", "d_x", "d_y", "d_u", "d_v"))
    tab = Table(("source", "mirror_t", "true_dx", "true_du", "mean_dx", "std_dx", "se_dx",
                 "mean_du", "std_du", "se_du", "n", "trials"))
    for source in p["sources"]:
        for t, disp in _schedule(cfg):
            dr, dk = _run_trials(cfg, source, disp, p["n"], f"track/{source}/{t}", p["trials"], keeper)
            for i in range(len(dr)):
                raw.add(source, t, i, *dr[i].tolist(), *dk[i].tolist())
            sr, sk = TrialStatistics(dr, p["n"]), TrialStatistics(dk, p["n"])
            tab.add(source, t, disp.dx, disp.du, sr.mean[0], sr.std[0], sr.se_mean[0],
                    sk.mean[0], sk.std[0], sk.se_mean[0], p["n"], p["trials"])
    rep.tables.update(trials=raw, track=tab)
    rep.summary["track"] = [dict(zip(tab.columns, r)) for r in tab.rows]
    if p["stream_batch"] > 0:
        stream = _streaming_track(cfg, p["stream_batch"], p["stream_batches"])
        rep.tables["stream"] = stream
        err = stream.column("est_dx") - stream.column("true_dx")
        rep.summary["stream"] = {"batch_pairs": p["stream_batch"], "rms_error_dx": float(np.sqrt(np.mean(err ** 2))),
                                 "expected_rms_dx": cfg.spdc.delta_r / math.sqrt(p["stream_batch"])}
    return rep


def _streaming_track(cfg: ScenarioConfig, batch: int, batches: int) -> Table:
    """Per-batch estimates against a long reference acquisition."""
    cam = cfg.camera
    tab = Table(("mirror_t", "batch", "true_dx", "true_du", "est_dx", "est_du"))
    rng = trial_rng(cfg.seed, "stream/reference", 0)
    ref = acquire_spdc(cfg.spdc, cam, cfg.coincidence, Displacement(), 50 * batch, rng)
    c0 = {pl: correlation_coords(ref.pairs[pl], cam).mean(axis=0) for pl in PLANES}
    for t, disp in _schedule(cfg):
        rng = trial_rng(cfg.seed, f"stream/{t}", 0)
        blk = acquire_spdc(cfg.spdc, cam, cfg.coincidence, disp, batch * batches, rng)
        for j in range(batches):
            sl = slice(j * batch, (j + 1) * batch)
            ex = correlation_centroid(blk.pairs[Plane.POSITION][sl], cam, Mode.CORRELATION_DIFFERENCE) - c0[Plane.POSITION]
            eu = correlation_centroid(blk.pairs[Plane.MOMENTUM][sl], cam, Mode.CORRELATION_SUM) - c0[Plane.MOMENTUM]
            tab.add(t, j, disp.dx, disp.du, float(ex[0]), float(eu[0]))
    return tab


def disruptive_beam(cfg: ScenarioConfig, cam: CameraParams) -> BackgroundSpec:
    b = cfg["background"]
    singles = cfg.spdc.pair_rate * (cam.efficiency_signal + cam.efficiency_idler)
    kind = BackgroundKind.DISRUPTIVE_BEAM if b["kind"] == "disruptive" else BackgroundKind.FLAT_DARK
    rate = b["brightness"] * singles
    if kind is BackgroundKind.FLAT_DARK:
        rate /= sum(cam.region_pixels(*k) for k in cam.regions)
    return BackgroundSpec(kind, rate, None, width_r=b["width_r"], width_k=b["width_k"])


def run_background(cfg: ScenarioConfig, keeper) -> ScenarioReport:
    rep = ScenarioReport(cfg.scenario, cfg.echo())
    b = cfg["background"]
    cam = cfg.camera
    bg = disruptive_beam(cfg, cam)
    raw = Table(("mirror_t", "disruption", "trial", "d_x", "d_u"))
    tab = Table(("mirror_t", "true_dx", "mean_off", "std_off", "mean_on", "std_on", "diff", "ratio"))
    for t, disp in _schedule(cfg):
        stats = {}
        for on in (False, True):
            dr, dk = _run_trials(cfg, "spdc", disp, b["n"], f"background/{int(on)}/{t}", b["trials"],
                                 keeper if on else None, backgrounds=(bg,) if on else ())
            for i in range(len(dr)):
                raw.add(t, int(on), i, float(dr[i, 0]), float(dk[i, 0]))
            stats[on] = TrialStatistics(dr[:, 0], b["n"])
        off, onn = stats[False], stats[True]
        tab.add(t, disp.dx, float(off.mean), float(off.std), float(onn.mean), float(onn.std),
                float(onn.mean - off.mean), float(onn.std / off.std))
    rep.tables.update(disruption_trials=raw, disruption=tab)

    # singles images and post-selected pairs, with and without the disruption (one block each)
    img = Table(("disruption", "kind", "px", "py", "count"))
    acc = {}
    for on in (False, True):
        rng = trial_rng(cfg.seed, f"background/image/{int(on)}", 0)
        blk = acquire_spdc(cfg.spdc, cam, cfg.coincidence, Displacement(), b["n"], rng,
                           backgrounds=(bg,) if on else (), keep_stream=True)
        stream = np.concatenate(blk.streams)
        for kind, ev in (("singles", stream[stream["plane"] == Plane.POSITION]),
                         ("pairs", np.concatenate([blk.pairs[Plane.POSITION].signal, blk.pairs[Plane.POSITION].idler]))):
            keys, counts = np.unique(np.stack([ev["px"], ev["py"]], axis=1), axis=0, return_counts=True)
            for (x, y), c in zip(keys.tolist(), counts.tolist()):
                img.add(int(on), kind, x, y, c)
        acc[int(on)] = {"accidental_pairs": blk.accidental[Plane.POSITION], "pairs": len(blk.pairs[Plane.POSITION]),
                        "matched_before_gate": blk.matched[Plane.POSITION],
                        "gated_out": blk.gated_out[Plane.POSITION]}
    rep.tables["images"] = img
    rep.summary["disruption"] = {
        "brightness": b["brightness"],
        "mean_abs_diff": float(np.mean(np.abs(tab.column("diff")))),
        "mean_ratio": float(np.mean(tab.column("ratio"))),
        "blocks": acc,
    }
    if cfg["aperture"]["enabled"]:
        ap_tab, ap_raw, ap_sum = run_aperture_study(cfg)
        rep.tables.update(aperture=ap_tab, aperture_trials=ap_raw)
        rep.summary["aperture"] = ap_sum
    return rep


def aperture_setup(cfg: ScenarioConfig):
    """Aperture radii and the laser rate giving the target SBR in the large one."""
    a = cfg["aperture"]
    cam = cfg.camera
    sigma = cfg.laser.sigma_r
    fwhm = 2 * math.sqrt(2 * math.log(2)) * sigma
    r_small = a["small_fwhm"] * fwhm / 2
    r_large = a["large_fwhm"] * fwhm / 2
    area_px = math.pi * r_large ** 2 / cam.pitch ** 2
    capture = 1 - math.exp(-r_large ** 2 / (2 * sigma ** 2))
    plane_rate = a["target_sbr"] * a["dark_rate"] * area_px / capture
    photon_rate = 2 * plane_rate / cam.efficiency_signal
    return r_small, r_large, photon_rate


def _aperture_block(cfg, laser, disp, radii, n, rng, dark):
    """One acquisition, analysed through each aperture: first ``n`` in-aperture events."""
    cam = cfg.camera
    plane_rate = laser.photon_rate * 0.5 * cam.efficiency_signal * 1e-9
    dur = (n * 1.3 + 10 * math.sqrt(n) + 20) / plane_rate
    t = poisson_arrivals(laser.photon_rate, dur, rng)
    ev, _ = detect(sample_laser_photons(laser, disp, t, rng), cam, rng)
    bev, _ = inject_background(dark, cam, dur * 1e-9, rng)
    stream = merge_streams([ev, bev])
    sel = stream[(stream["plane"] == Plane.POSITION) & (stream["arm"] == Arm.SIGNAL)]
    xy = pixel_coords(sel, cam)
    out = []
    for r in radii:
        res = digital_aperture(xy, aperture_center(xy, r), r, tags=sel["tag"])
        keep = np.flatnonzero(res.mask)[:n]
        if len(keep) < n:
            raise RuntimeError("aperture acquisition too short")
        tags = sel["tag"][keep]
        bgn = int(np.count_nonzero(tags == TAG_BACKGROUND))
        out.append((centroid(xy[keep]), bgn))
    return out


def run_aperture_study(cfg: ScenarioConfig):
    a = cfg["aperture"]
    r_small, r_large, photon_rate = aperture_setup(cfg)
    laser = replace(cfg.laser, photon_rate=photon_rate)
    dark = BackgroundSpec(BackgroundKind.FLAT_DARK, a["dark_rate"])
    disp = Displacement(dx=cfg["displacement"]["dx"])
    raw = Table(("trial", "aperture", "d_x", "background_ref", "background"))

    def one(i):
        rng = trial_rng(cfg.seed, "aperture", i)
        ra = _aperture_block(cfg, laser, Displacement(), (r_small, r_large), a["n"], rng, dark)
        rb = _aperture_block(cfg, laser, disp, (r_small, r_large), a["n"], rng, dark)
        return ra, rb
    res = _map_trials(one, a["trials"], cfg.workers)
    tab = Table(("aperture", "diameter_fwhm", "radius_um", "sbr", "mean_dx", "std_dx", "se_dx"))
    stds = {}
    for j, (name, diam, rad) in enumerate((("small", a["small_fwhm"], r_small), ("large", a["large_fwhm"], r_large))):
        dx = np.array([rb[j][0][0] - ra[j][0][0] for ra, rb in res])
        for i, (ra, rb) in enumerate(res):
            raw.add(i, name, float(dx[i]), ra[j][1], rb[j][1])
        # pooled over all blocks: a single block often holds no background event
        bg = sum(ra[j][1] + rb[j][1] for ra, rb in res)
        total = 2 * a["n"] * len(res)
        st = TrialStatistics(dx, a["n"])
        stds[name] = float(st.std)
        tab.add(name, diam, rad, (total - bg) / bg if bg else math.inf, float(st.mean), float(st.std),
                float(st.se_mean))
    summary = {"uncertainty_ratio": stds["large"] / stds["small"], "laser_photon_rate": photon_rate,
               "rows": [dict(zip(tab.columns, r)) for r in tab.rows]}
    return tab, raw, summary


def run_overlap_bound(cfg: ScenarioConfig, keeper) -> ScenarioReport:
    rep = ScenarioReport(cfg.scenario, cfg.echo())
    p = cfg["overlap"]
    n = p["n"]
    tab = Table(("alpha", "product_n", "alpha_form_n", "bound_n"))
    for a in p["alphas"]:
        val = overlap_uncertainty_product(OverlapConfig.minimum_uncertainty(100.0, a, n))
        tab.add(a, val * n, overlap_product_min_uncertainty(a, n) * n, 2.0)
    rng = trial_rng(cfg.seed, "overlap", 0)
    ratios = []
    for _ in range(p["random_configs"]):
        sx = rng.uniform(1.0, 500.0, 2)
        sk = 0.5 / sx * rng.uniform(1.0, 5.0, 2)
        c = OverlapConfig(sx[0], sx[1], sk[0], sk[1], n)
        ratios.append(overlap_uncertainty_product(c) / (2.0 / n))
    rep.tables["overlap"] = tab
    rep.summary = {"random_configs": p["random_configs"], "min_ratio_to_bound": float(min(ratios)) if ratios else None}
    return rep


def run_crb_check(cfg: ScenarioConfig, keeper) -> ScenarioReport:
    rep = ScenarioReport(cfg.scenario, cfg.echo())
    p = cfg["crb"]
    laser = replace(cfg.laser, sigma_r=p["sigma"])
    cam = cfg.camera

    def one(i):
        rng = trial_rng(cfg.seed, "crb", i)
        blk = acquire_laser(laser, cam, Displacement(), p["n"], rng, planes=(Plane.POSITION,))
        return centroid(pixel_coords(blk.events[Plane.POSITION], cam))
    res = np.array(_map_trials(one, p["trials"], cfg.workers))
    raw = Table(("trial", "x_bar", "y_bar"))
    for i, (x, y) in enumerate(res.tolist()):
        raw.add(i, x, y)
    info, crb = fisher_crb(p["sigma"], p["n"])
    var = res.var(axis=0, ddof=1)
    crb_pix = (p["sigma"] ** 2 + cam.pitch ** 2 / 12) / p["n"]
    summ = Table(("axis", "variance", "crb", "ratio", "crb_pixel", "ratio_pixel", "fisher_information"))
    for j, ax in enumerate("xy"):
        summ.add(ax, float(var[j]), crb, float(var[j] / crb), crb_pix, float(var[j] / crb_pix), info)
    rep.tables.update(trials=raw, crb=summ)
    rep.summary = {"ratio_x": float(var[0] / crb), "ratio_y": float(var[1] / crb), "crb": crb,
                   "mean_x": float(res[:, 0].mean()), "se_mean_x": float(res[:, 0].std(ddof=1) / math.sqrt(len(res)))}
    return rep


def run_bench(cfg: ScenarioConfig, keeper) -> ScenarioReport:
    rep = ScenarioReport(cfg.scenario, cfg.echo())
    n = cfg["bench"]["n_events"]
    tab = Table(("n_events", "pairs"))
    timing = []
    for k, m in enumerate((n, 2 * n)):
        r = throughput_bench(m, cfg.coincidence, trial_rng(cfg.seed, "bench", k))
        tab.add(r.n_events, r.pairs)
        timing.append({"n_events": r.n_events, "seconds": r.seconds, "events_per_second": r.events_per_second})
    rep.tables["bench"] = tab
    rep.summary = {"timing": timing, "time_ratio_2n_over_n": timing[1]["seconds"] / timing[0]["seconds"],
                   "hardware": {"machine": platform.machine(), "processor": platform.processor(),
                                "cpus": os.cpu_count(), "python": platform.python_version()}}
    return rep


RUNNERS = {
    "correlations": run_correlations,
    "uncertainty-sweep": run_uncertainty_sweep,
    "track": run_track,
    "background": run_background,
    "overlap-bound": run_overlap_bound,
    "crb-check": run_crb_check,
    "bench": run_bench,
}


def run_scenario(cfg: ScenarioConfig, keep_events: bool = False) -> ScenarioReport:
    keeper = _EventKeeper(keep_events)
    t0 = time.perf_counter()
    try:
        rep = RUNNERS[cfg.scenario](cfg, keeper)
    except Exception as exc:
        raise ScenarioError(cfg.scenario, cfg.seed, exc) from exc
    rep.wall_clock = time.perf_counter() - t0
    rep.warnings = list(cfg.warnings)
    rep._events = keeper.streams
    return rep


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_table(table: Table, path):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(table.columns) + "\n")
        for row in table.rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k.name.lower() if isinstance(k, Plane) else k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, float)):
        f = float(o)
        return f if math.isfinite(f) else str(f)
    if isinstance(o, np.integer):
        return int(o)
    return o


def write_report(rep: ScenarioReport, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, table in rep.tables.items():
        write_table(table, out / f"{name}.csv")
    pairs = getattr(rep, "_pairs", None)
    if pairs:
        write_pairs_csv(pairs, out / "pairs.csv")
    files = []
    for k, (label, stream) in enumerate(getattr(rep, "_events", []) or []):
        fn = f"events_{k:02d}_{label}.bin"
        write_events(stream, out / fn)
        files.append(fn)
    rep.event_files = files
    doc = {
        "scenario": rep.scenario,
        "version": rep.version,
        "config": rep.config,
        "summary": rep.summary,
        "tables": {name: f"{name}.csv" for name in rep.tables},
        "event_files": files,
        "warnings": rep.warnings,
        "wall_clock_s": rep.wall_clock,
    }
    (out / "report.json").write_text(json.dumps(_jsonable(doc), indent=2) + "\n")
    return out / "report.json"
