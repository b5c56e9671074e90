"""End-to-end acceptance criteria, one test each, run from configs/*.ini.

Every test prints one ``ACCEPTANCE #k PASS/FAIL: ...`` line.  Scenario
reports are computed once per module and shared.
"""

import math
from pathlib import Path

import numpy as np
import pytest

from qcbt.coincidence import CoincidenceConfig, match_coincidences
from qcbt.config import parse_config
from qcbt.events import make_events
from qcbt.optics import (AbcdMatrix, OverlapConfig, Ray, mat_propagation, overlap_uncertainty_product,
                         trajectory_change, trajectory_change_closed_form_r)
from qcbt.scenarios import run_scenario, write_report
from qcbt.source import Arm, Plane

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
SEED = 12345


class Reports:
    def __init__(self):
        self.cache = {}

    def __call__(self, name):
        if name not in self.cache:
            self.cache[name] = run_scenario(parse_config(CONFIGS / f"{name}.ini", seed=SEED))
        return self.cache[name]


@pytest.fixture(scope="module")
def reports():
    return Reports()


def verdict(capsys, k, ok, detail):
    with capsys.disabled():
        print(f"\nACCEPTANCE #{k} {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, detail


def test_01_crb_saturation(reports, capsys):
    s = reports("crb-check").summary
    ok = all(0.90 <= s[k] <= 1.10 for k in ("ratio_x", "ratio_y"))
    verdict(capsys, 1, ok, f"Var(xbar)*n/sigma^2 = {s['ratio_x']:.3f} (x), {s['ratio_y']:.3f} (y); need [0.90, 1.10]")


def test_02_laser_product(reports, capsys):
    rep = reports("laser-product")
    s = rep.summary["products"]["laser"]
    per_batch = rep.tables["products"].column("product_n")
    ok = abs(s["mean_product_n"] / 1.49 - 1) <= 0.15 and per_batch.min() >= 1.0 and len(per_batch) == 20
    verdict(capsys, 2, ok, f"mean product*n = {s['mean_product_n']:.3f} (1.49 +/- 15%), "
                           f"min over {len(per_batch)} batches = {per_batch.min():.3f} (>= 1)")


def test_03_spdc_beats_hul(reports, capsys):
    rep = reports("spdc-product")
    t = rep.tables["products"]
    pn = t.column("product_n")
    ns = t.column("n")
    mean = pn.mean()
    by_n = {int(n): float(pn[ns == n].mean()) for n in np.unique(ns)}
    scaling = all(abs(v / mean - 1) <= 0.15 for v in by_n.values())
    ok = abs(mean / 0.089 - 1) <= 0.15 and pn.max() < 1.0 and scaling and set(by_n) == {500, 5000, 50000}
    verdict(capsys, 3, ok, f"mean product*n = {mean:.4f} (0.089 +/- 15%), max batch {pn.max():.4f} (< 1), "
                           f"per-n means {', '.join(f'{n}: {v:.4f}' for n, v in by_n.items())} (within 15% of mean)")


def test_04_width_recovery(reports, capsys):
    fits = reports("correlations").summary["fits"]
    parts, ok = [], True
    for f in fits:
        want = f["expected_binned_once"]
        rel = f["width"] / want - 1
        ok &= abs(rel) <= 0.02
        parts.append(f"{f['plane']}/{f['axis']} {f['width']:.5g} vs {want:.5g} ({rel:+.1%})")
    verdict(capsys, 4, ok, "; ".join(parts) + " (need +/- 2%)")


def test_05_displacement_accuracy(reports, capsys):
    rows = {r["source"]: r for r in reports("track").summary["track"] if r["mirror_t"] == 50}
    acc = {s: abs(r["mean_dx"] - 25.0) <= 3 * r["se_dx"] for s, r in rows.items()}
    ratio = rows["laser"]["std_du"] / rows["spdc"]["std_du"]
    ok = all(acc.values()) and set(acc) == {"laser", "spdc"} and ratio >= 5
    detail = "; ".join(f"{s} dx = {r['mean_dx']:.3f} +/- {r['se_dx']:.3f}" for s, r in rows.items())
    verdict(capsys, 5, ok, f"{detail} (within 3 SE of 25); laser/SPDC du spread = {ratio:.1f} (>= 5)")


def test_06_background_resilience(reports, capsys):
    s = reports("background").summary["disruption"]
    ok = s["mean_abs_diff"] <= 1.0 and s["mean_ratio"] <= 1.2
    verdict(capsys, 6, ok, f"mean |on - off| = {s['mean_abs_diff']:.3f} um (<= 1), "
                           f"mean std ratio = {s['mean_ratio']:.3f} (<= 1.2), brightness x{s['brightness']:g}")


def test_07_classical_background(reports, capsys):
    s = reports("background").summary["aperture"]
    sbr = {r["aperture"]: r["sbr"] for r in s["rows"]}
    ratio = s["uncertainty_ratio"]
    tuned = 80 <= sbr["large"] <= 120 and 2000 <= sbr["small"] <= 3000
    ok = abs(ratio - 2.5) <= 0.5 and tuned
    verdict(capsys, 7, ok, f"SBR small {sbr['small']:.0f} / large {sbr['large']:.1f}; "
                           f"uncertainty ratio large/small = {ratio:.3f} (need 2.5 +/- 0.5)")


def test_08_overlap_bound(reports, capsys):
    rep = reports("overlap-bound")
    t = rep.tables["overlap"]
    at1 = float(t.where(alpha=1.0)[0][1])
    rng = np.random.default_rng(SEED)
    worst = math.inf
    for _ in range(1000):
        sx = rng.uniform(0.1, 1e3, 2)
        sk = 0.5 / sx * rng.uniform(1.0, 10.0, 2)
        n = int(rng.integers(1, 10 ** 6))
        worst = min(worst, overlap_uncertainty_product(OverlapConfig(sx[0], sx[1], sk[0], sk[1], n)) * n / 2)
    ok = worst >= 1.0 and rep.summary["min_ratio_to_bound"] >= 1.0 and abs(at1 - 2.0) <= 1e-9
    verdict(capsys, 8, ok, f"min product/(2/n) = {min(worst, rep.summary['min_ratio_to_bound']):.4f} (>= 1); "
                           f"alpha = 1 gives {at1:.12f}*(1/n) (2 within 1e-9)")


def test_09_ray_matrix_oracle(capsys):
    rng = np.random.default_rng(SEED)
    worst_dr = worst_dth = worst_cf = 0.0
    for _ in range(10000):
        a, b, c = rng.uniform(-2, 2, 3)
        while abs(a) < 0.1:
            a = rng.uniform(-2, 2)
        ch = AbcdMatrix(a, b, c, (1 + b * c) / a)
        f, d = rng.uniform(0.5, 5.0), rng.uniform(0.0, 5.0)
        ray = Ray(*rng.uniform(-2, 2, 2))
        P = lambda L: np.array([[1.0, L], [0.0, 1.0]])
        Lm = np.array([[1.0, 0.0], [-1 / f, 1.0]])
        M = np.array([[ch.a, ch.b], [ch.c, ch.d]])
        v = np.array([ray.r, ray.theta])
        want = P(f) @ Lm @ M @ Lm @ P(f) @ v - P(f) @ Lm @ P(d) @ Lm @ P(f) @ v
        dr, dth = trajectory_change(ch, f, d, ray)
        worst_dr = max(worst_dr, abs(dr - want[0]))
        worst_dth = max(worst_dth, abs(dth - want[1]))
        worst_cf = max(worst_cf, abs(trajectory_change_closed_form_r(ch, f, ray) - want[0]))
    ident = trajectory_change(mat_propagation(2.5), 1.5, 2.5, Ray(0.7, -0.3))
    ok = max(worst_dr, worst_dth, worst_cf) <= 1e-9 and ident == (0.0, 0.0)
    verdict(capsys, 9, ok, f"max |error| dr {worst_dr:.2e}, dtheta {worst_dth:.2e}, closed-form dr {worst_cf:.2e} "
                           f"(<= 1e-9); unchanged channel -> {ident}")


def test_10_efficiency_bound(reports, capsys):
    rows = reports("efficiency").summary["efficiency"]
    vals = np.array([r["product_eps_ns"] for r in rows])
    mean = vals.mean()
    be = rows[0]["break_even"]
    cfg = reports("efficiency").config["spdc"]
    ok = (np.all(np.abs(vals / mean - 1) <= 0.20) and len(vals) == 4
          and abs(be - 2 * cfg["delta_r"] * cfg["delta_k"]) <= 1e-12)
    detail = ", ".join(f"eps {r['idler_efficiency']:g}: {r['product_eps_ns']:.4f}" for r in rows)
    verdict(capsys, 10, ok, f"product*eps_i*n_s = {detail} (within 20% of {mean:.4f}); break-even {be:.5f}")


def brute_force(ts, ti, tau):
    used = [False] * len(ti)
    out = []
    for a, t in enumerate(ts):
        cands = [(abs(t - u), j) for j, u in enumerate(ti) if not used[j] and abs(t - u) <= tau]
        if cands:
            _, j = min(cands)
            used[j] = True
            out.append((a, j))
    return out


def test_11_coincidence_engine(reports, capsys):
    rng = np.random.default_rng(SEED)
    exact = True
    for _ in range(10):
        ts = np.sort(rng.integers(0, 30000, 1000))
        ti = np.sort(np.concatenate([ts[:500] + rng.integers(-25, 26, 500), rng.integers(0, 30000, 500)]).clip(0))
        s = make_events(ts, 0, 0, Plane.POSITION, Arm.SIGNAL)
        i = make_events(ti, 0, 0, Plane.POSITION, Arm.IDLER)
        r = match_coincidences(s, i, CoincidenceConfig(20))
        exact &= list(zip(r.signal_index.tolist(), r.idler_index.tolist())) == brute_force(ts.tolist(), ti.tolist(), 20)

    rate, seconds, tau = 1e4, 10.0, 20
    streams = []
    for arm in (Arm.SIGNAL, Arm.IDLER):
        t = np.sort(np.floor(rng.uniform(0, seconds * 1e9, rng.poisson(rate * seconds))))
        streams.append(make_events(t, 0, 0, Plane.POSITION, arm))
    acc = len(match_coincidences(*streams, CoincidenceConfig(tau)).pairs)
    expect = 2 * tau * 1e-9 * rate * rate * seconds
    acc_ok = abs(acc - expect) <= 3 * math.sqrt(expect)

    bench = reports("bench").summary
    eps = bench["timing"][0]["events_per_second"]
    hw = bench["hardware"]
    ok = exact and acc_ok and eps >= 1e5
    verdict(capsys, 11, ok, f"brute-force equivalence {'exact' if exact else 'MISMATCH'} on 10 x 1e3 events; "
                            f"accidentals {acc} vs {expect:.0f} +/- {3 * math.sqrt(expect):.0f}; "
                            f"throughput {eps:.3g} events/s (>= 1e5) on {hw['machine']} x{hw['cpus']}, "
                            f"2n/n time {bench['time_ratio_2n_over_n']:.2f}")


def test_12_determinism(reports, tmp_path, capsys):
    names = ["crb-check", "correlations", "track", "overlap-bound", "bench", "efficiency"]
    differ = []
    for name in names:
        a, b = tmp_path / name / "a", tmp_path / name / "b"
        write_report(reports(name), a)
        write_report(run_scenario(parse_config(CONFIGS / f"{name}.ini", seed=SEED)), b)
        fa = {p.name: p.read_bytes() for p in a.glob("*.csv")}
        fb = {p.name: p.read_bytes() for p in b.glob("*.csv")}
        if not fa or fa != fb:
            differ.append(name)
    ok = not differ
    verdict(capsys, 12, ok, f"re-ran {', '.join(names)} with seed {SEED}: "
                            + ("all CSVs byte-identical" if ok else f"differences in {differ}"))
