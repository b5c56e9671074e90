"""INI-style scenario configuration.

Every physics parameter lives in the config file; the command line only
supplies the scenario, seed and output paths.  Unknown sections or keys,
unparsable values and invalid parameter combinations raise
:class:`ConfigError` naming the offending line.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from pathlib import Path

from .camera import CameraParams
from .coincidence import CoincidenceConfig
from .optics import InvalidParameter
from .source import CrystalParams, LaserSourceParams, SpdcSourceParams, correlation_widths_from_crystal

SCENARIOS = ("correlations", "uncertainty-sweep", "track", "background", "overlap-bound", "crb-check", "bench")


class ConfigError(ValueError):
    def __init__(self, msg: str, line: int | None = None, path: str | None = None):
        where = f"{path or '<config>'}:{line}: " if line else (f"{path}: " if path else "")
        super().__init__(where + msg)
        self.line = line


def _floats(s):
    return tuple(float(v) for v in s.replace(",", " ").split())


def _ints(s):
    return tuple(int(float(v)) for v in s.replace(",", " ").split())


def _strs(s):
    return tuple(v for v in s.replace(",", " ").split())


def _pair(s):
    v = _floats(s)
    if len(v) != 2:
        raise ValueError("expected two numbers")
    return v


def _bool(s):
    low = s.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _opt_float(s):
    return None if s.strip().lower() in ("none", "off", "") else float(s)


def _int(s):
    try:
        return int(s.strip().replace("_", ""), 0)  # exact for 64-bit seeds
    except ValueError:
        pass
    v = float(s)  # allows "1e6"
    if v != int(v):
        raise ValueError(f"not an integer: {s!r}")
    return int(v)


# section -> key -> (parser, default); default None means "derived" or "absent"
SCHEMA = {
    "run": {"scenario": (str, None), "seed": (_int, None), "workers": (_int, 1)},
    "crystal": {"L": (float, 1.0), "lambda_p": (float, 405.0), "sigma_p": (float, 0.12),
                "alpha": (float, 0.455), "magnification": (float, 5.0)},
    "spdc": {"delta_r": (float, 42.0), "delta_k": (float, 1.06e-3), "sigma_r": (float, 170.0),
             "sigma_k": (float, 1.7e-2), "pair_rate": (float, 1e5), "center_r": (_pair, (0.0, 0.0)),
             "center_k": (_pair, (0.0, 0.0)), "from_crystal": (_bool, False)},
    "laser": {"sigma_r": (float, 52.7), "sigma_k": (float, 1.41e-2), "photon_rate": (float, 1e5),
              "center_r": (_pair, (0.0, 0.0)), "center_k": (_pair, (0.0, 0.0))},
    "camera": {"preset": (str, "tpx3"), "nx": (_int, None), "ny": (_int, None), "pitch": (float, None),
               "k_per_pixel": (float, None), "jitter_sigma": (float, 7.0), "efficiency_signal": (float, 1.0),
               "efficiency_idler": (float, 1.0), "camera_id": (_int, 0)},
    "coincidence": {"window": (float, 20.0), "rho_r": (_opt_float, None), "rho_k": (_opt_float, None),
                    "gate_sigmas": (float, 4.0)},
    "displacement": {"mirror_positions": (_floats, (-100.0, -50.0, 0.0, 50.0, 100.0)),
                     "gains": (_pair, (0.5, 2e-5)), "dx": (float, 25.0), "du": (float, 1e-3)},
    "sweep": {"n_values": (_ints, (500, 1000, 5000)), "trials": (_int, 50), "repeats": (_int, 1),
              "sources": (_strs, ("laser", "spdc")), "axes": (str, "x")},
    "efficiency": {"idler_efficiencies": (_floats, ()), "pair_budget": (_int, 40000), "trials": (_int, 100)},
    "track": {"n": (_int, 5000), "trials": (_int, 50), "sources": (_strs, ("laser", "spdc")),
              "stream_batch": (_int, 0), "stream_batches": (_int, 20)},
    "background": {"kind": (str, "disruptive"), "brightness": (float, 10.0), "width_r": (float, 500.0),
                   "width_k": (float, 0.03), "n": (_int, 1000), "trials": (_int, 50)},
    "aperture": {"enabled": (_bool, True), "dark_rate": (float, 1.7), "small_fwhm": (float, 2.5),
                 "large_fwhm": (float, 12.5), "target_sbr": (float, 100.0), "n": (_int, 1000),
                 "trials": (_int, 250)},
    "correlations": {"n_pairs": (_int, 100000), "gate": (_bool, False)},
    "overlap": {"alphas": (_floats, (0.25, 0.5, 1.0, 2.0, 4.0)), "n": (_int, 1), "random_configs": (_int, 1000)},
    "crb": {"sigma": (float, 52.7), "n": (_int, 5000), "trials": (_int, 1000)},
    "bench": {"n_events": (_int, 1000000)},
}


@dataclass
class ScenarioConfig:
    scenario: str
    seed: int
    spdc: SpdcSourceParams
    laser: LaserSourceParams
    camera: CameraParams
    coincidence: CoincidenceConfig
    params: dict  # section -> {key: value}, defaults filled
    workers: int = 1
    warnings: list = field(default_factory=list)
    path: str | None = None

    def __getitem__(self, section):
        return self.params[section]

    def echo(self) -> dict:
        out = {}
        for sec, vals in self.params.items():
            out[sec] = {k: (list(v) if isinstance(v, tuple) else v) for k, v in vals.items()}
        out["run"]["scenario"] = self.scenario
        out["run"]["seed"] = self.seed
        return out


_SECTION_RE = re.compile(r"^\s*\[([^\]]+)\]")
_KEY_RE = re.compile(r"^\s*([^=:#;\s\[][^=:]*?)\s*[=:]")


def _line_map(text: str):
    sections, keys = {}, {}
    current = None
    for no, line in enumerate(text.splitlines(), start=1):
        m = _SECTION_RE.match(line)
        if m:
            current = m.group(1).strip()
            sections.setdefault(current, no)
            continue
        m = _KEY_RE.match(line)
        if m and current is not None:
            keys.setdefault((current, m.group(1).strip()), no)
    return sections, keys


def parse_config_text(text: str, path: str | None = None, scenario: str | None = None,
                      seed: int | None = None) -> ScenarioConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"),
                                   default_section="__defaults__")
    cp.optionxform = str
    try:
        cp.read_string(text, source=path or "<config>")
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("content before the first [section] header", exc.lineno, path) from None
    except (configparser.DuplicateSectionError, configparser.DuplicateOptionError) as exc:
        raise ConfigError(exc.message.split(": ", 1)[-1], exc.lineno, path) from None
    except configparser.ParsingError as exc:
        lineno, line = exc.errors[0]
        raise ConfigError(f"cannot parse {line.strip()!r}", lineno, path) from None
    sec_lines, key_lines = _line_map(text)

    params = {}
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section [{sec}]", sec_lines.get(sec), path)
        for key, raw in cp.items(sec):
            if key not in SCHEMA[sec]:
                raise ConfigError(f"unknown key {key!r} in [{sec}]", key_lines.get((sec, key)), path)
            conv = SCHEMA[sec][key][0]
            try:
                params.setdefault(sec, {})[key] = conv(raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for {sec}.{key}: {exc}", key_lines.get((sec, key)), path) from None
    given = {sec: set(v) for sec, v in params.items()}
    for sec, keys in SCHEMA.items():
        vals = params.setdefault(sec, {})
        for key, (_, default) in keys.items():
            vals.setdefault(key, default)

    def line_of(sec, key=None):
        return key_lines.get((sec, key)) or sec_lines.get(sec)

    scenario = scenario or params["run"]["scenario"]
    if scenario is None:
        raise ConfigError("missing required field run.scenario", None, path)
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}; choose from {', '.join(SCENARIOS)}",
                          line_of("run", "scenario"), path)
    seed = seed if seed is not None else params["run"]["seed"]
    if seed is None:
        raise ConfigError("missing required field run.seed (or pass --seed)", None, path)
    if seed < 0:
        raise ConfigError("seed must be non-negative", line_of("run", "seed"), path)
    params["run"]["scenario"], params["run"]["seed"] = scenario, seed

    def build(sec, fn):
        try:
            return fn()
        except (InvalidParameter, TypeError) as exc:
            raise ConfigError(f"[{sec}] {exc}", line_of(sec), path) from None

    sp = params["spdc"]
    if sp["from_crystal"]:
        crystal = build("crystal", lambda: CrystalParams(**params["crystal"]))
        dr, dk = correlation_widths_from_crystal(crystal)
        if "delta_r" not in given.get("spdc", set()):
            sp["delta_r"] = dr
        if "delta_k" not in given.get("spdc", set()):
            sp["delta_k"] = dk
    else:
        build("crystal", lambda: CrystalParams(**params["crystal"]))
    spdc = build("spdc", lambda: SpdcSourceParams(
        sp["delta_r"], sp["delta_k"], sp["sigma_r"], sp["sigma_k"], sp["pair_rate"],
        tuple(sp["center_r"]), tuple(sp["center_k"])))
    lp = params["laser"]
    laser = build("laser", lambda: LaserSourceParams(lp["sigma_r"], lp["sigma_k"], lp["photon_rate"],
                                                     tuple(lp["center_r"]), tuple(lp["center_k"])))
    cam = build("camera", lambda: camera_from_params(params["camera"]))
    cc = params["coincidence"]
    g = cc["gate_sigmas"]
    coinc = build("coincidence", lambda: CoincidenceConfig(
        cc["window"],
        cc["rho_r"] if "rho_r" in given.get("coincidence", set()) else g * spdc.delta_r,
        cc["rho_k"] if "rho_k" in given.get("coincidence", set()) else g * spdc.delta_k))
    params["coincidence"]["rho_r"], params["coincidence"]["rho_k"] = coinc.rho_r, coinc.rho_k

    warnings = []
    if not spdc.beats_hul:
        warnings.append(f"not HUL-beating: delta_r*delta_k = {spdc.delta_r * spdc.delta_k:.4g} >= 1/2")
    if params["run"]["workers"] < 1:
        raise ConfigError("workers must be >= 1", line_of("run", "workers"), path)
    for sec in ("sweep", "track", "background", "aperture", "crb", "efficiency"):
        if params[sec]["trials"] < 2:
            raise ConfigError(f"{sec}.trials must be >= 2", line_of(sec, "trials"), path)
    if any(n < 1 for n in params["sweep"]["n_values"]):
        raise ConfigError("sweep.n_values must be >= 1", line_of("sweep", "n_values"), path)
    for src in params["sweep"]["sources"] + params["track"]["sources"]:
        if src not in ("laser", "spdc"):
            raise ConfigError(f"unknown source {src!r}", line_of("sweep", "sources"), path)
    if params["background"]["kind"] not in ("disruptive", "flat"):
        raise ConfigError("background.kind must be 'disruptive' or 'flat'", line_of("background", "kind"), path)
    if params["sweep"]["axes"] not in ("x", "xy"):
        raise ConfigError("sweep.axes must be 'x' or 'xy'", line_of("sweep", "axes"), path)

    return ScenarioConfig(scenario, seed, spdc, laser, cam, coinc, params, params["run"]["workers"],
                          warnings, path)


def camera_from_params(cp: dict) -> CameraParams:
    preset = cp["preset"]
    if preset not in ("tpx3", "ideal"):
        raise InvalidParameter(f"unknown camera preset {preset!r}")
    kw = {k: cp[k] for k in ("nx", "ny", "pitch", "k_per_pixel") if cp[k] is not None}
    kw.update(jitter_sigma=cp["jitter_sigma"], efficiency_signal=cp["efficiency_signal"],
              efficiency_idler=cp["efficiency_idler"], camera_id=cp["camera_id"])
    return CameraParams.ideal(**kw) if preset == "ideal" else CameraParams.tpx3(**kw)


def parse_config(path, scenario: str | None = None, seed: int | None = None) -> ScenarioConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", None, str(path)) from None
    return parse_config_text(text, str(path), scenario, seed)


def default_config(scenario: str, seed: int = 0, **sections) -> ScenarioConfig:
    """Build a config programmatically; ``sections`` map to INI sections."""
    lines = []
    for sec, vals in sections.items():
        lines.append(f"[{sec}]")
        for k, v in vals.items():
            if isinstance(v, (tuple, list)):
                v = ", ".join(str(x) for x in v)
            lines.append(f"{k} = {v}")
    return parse_config_text("\n".join(lines) + "\n", None, scenario, seed)
