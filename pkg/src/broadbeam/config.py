"""Run configuration: a YAML file with one section per concern.

Angles are given in degrees, frequencies in Hz and thresholds in dB.  They are
converted once, in :func:`build`, into the radian / rad-per-sample / linear
quantities the designers use.  :func:`parse` checks every field and reports
all problems together, each named by its dotted path (``bands.passband_deg``).

Example::

    array:
      elements: 7
      spacing_m: 0.04
      sample_rate_hz: 8000
      sound_speed_mps: 340
    filters:
      taps: 20
    bands:
      frequency_hz: [1500, 3500]
      passband_deg: [80, 100]
      stopband_deg: [[0, 60], [120, 180]]
      steer_deg: 90
    thresholds:
      stopband_attenuation_db: 6
      wng_db: 0
    design:
      kind: v1
      tau_d: zero
"""
from __future__ import annotations

import copy
from dataclasses import dataclass
import numbers
import os

import numpy as np
import yaml

from .convex import ConvexDesignSpec
from .errors import ConfigError
from .iterative import IterativeDesignSpec, TrustSchedule
from .response import ArrayGeometry
from .sampling import BandSpec, GridConfig

KINDS = ("v1", "v1-sym", "v1-lp", "v2", "c-a", "c-a-sym", "c-b")
TAU_KEYWORDS = ("zero", "half", "quarter")

DEFAULTS = {
    "array": {"sound_speed_mps": 340.0},
    "thresholds": {"wng_db": 0.0, "eps_f": 0.0, "passband_ripple_db": None},
    "design": {"tau_d": "zero", "reg_weight": None, "b_path": True, "max_iters": 50, "W": 1000.0,
               "L_o": 5, "trust": {"first": 0.5, "last": 0.001, "T": 20, "small": 0.001}},
    "grid": {"M": 200, "K": 200, "virtual": [200, 500], "blocks": [22, 52], "edge": 3,
             "mode": "nonuniform", "verify_factor": 5},
    "solver": {"tol": 1e-8},
    "output": {"dir": "out"},
    "seed": 0,
}


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _num(v):
    return isinstance(v, numbers.Real) and not isinstance(v, bool) and np.isfinite(v)


def _int(v):
    return isinstance(v, numbers.Integral) and not isinstance(v, bool)


def _pair(v):
    return isinstance(v, (list, tuple)) and len(v) == 2 and all(_num(u) for u in v)


@dataclass
class RunConfig:
    """A validated configuration (``data``) plus the objects built from it."""

    data: dict
    geometry: ArrayGeometry
    band: BandSpec
    n_taps: int
    kind: str
    tau_d: float
    stopband_ceiling: float
    wng_floor: float

    @property
    def family(self) -> str:
        return "iterative" if self.kind == "v2" else "convex"

    def echo(self) -> dict:
        """The parsed configuration with defaults filled in, as written to report headers."""
        return copy.deepcopy(self.data)

    def dump(self) -> str:
        return yaml.safe_dump(self.data, sort_keys=False)

    def design_spec(self, b_path: bool | None = None, max_iters: int | None = None):
        d, g = self.data["design"], self.data["grid"]
        tol = float(self.data["solver"]["tol"])
        if self.kind == "v2":
            tr = d["trust"]
            grid = GridConfig(P=g["virtual"][0], Q=g["virtual"][1], M=g["blocks"][0], K=g["blocks"][1],
                              edge=g["edge"], mode=g["mode"])
            reg = 0.01 if d["reg_weight"] is None else d["reg_weight"]
            return IterativeDesignSpec(
                self.geometry, self.band, self.n_taps, self.stopband_ceiling, self.wng_floor, self.tau_d,
                grid=grid, schedule=TrustSchedule(tr["first"], tr["last"], tr["T"], tr["small"]),
                W=float(d["W"]), eps_f=float(self.data["thresholds"]["eps_f"]),
                max_iters=int(d["max_iters"] if max_iters is None else max_iters), L_o=int(d["L_o"]),
                b_path=bool(d["b_path"] if b_path is None else b_path), reg_weight=float(reg),
                M=g["M"], K=g["K"], verify_factor=g["verify_factor"], tol=tol)
        reg = 0.0 if d["reg_weight"] is None else d["reg_weight"]
        return ConvexDesignSpec(self.geometry, self.band, self.n_taps, self.stopband_ceiling, self.wng_floor,
                                self.tau_d, float(reg), symmetry=self.kind in ("v1-sym", "c-a-sym"),
                                linear_phase=self.kind in ("v1-lp", "c-b"), M=g["M"], K=g["K"], tol=tol)


def _check(cfg: dict) -> list:
    p = []

    def need(path, ok, msg):
        if not ok:
            p.append(f"{path}: {msg}")
        return ok

    for sec in ("array", "filters", "bands", "thresholds", "design"):
        need(sec, isinstance(cfg.get(sec), dict), "section is required")
    if p:
        return p
    a = cfg["array"]
    need("array.elements", _int(a.get("elements")) and a.get("elements", 0) >= 2, "integer >= 2 required")
    has_sp, has_pos = "spacing_m" in a, "positions_m" in a
    if need("array", has_sp != has_pos, "give exactly one of spacing_m and positions_m"):
        if has_sp:
            need("array.spacing_m", _num(a["spacing_m"]) and a["spacing_m"] > 0, "positive number required")
        else:
            pos = a["positions_m"]
            if need("array.positions_m", isinstance(pos, list) and all(_num(u) for u in pos),
                    "list of numbers required"):
                need("array.positions_m", len(pos) == a.get("elements"), "length must equal array.elements")
                need("array.positions_m", bool(np.all(np.diff(pos) > 0)), "must be strictly increasing")
    need("array.sample_rate_hz", _num(a.get("sample_rate_hz")) and a.get("sample_rate_hz", 0) > 0,
         "positive number required")
    need("array.sound_speed_mps", _num(a.get("sound_speed_mps")) and a.get("sound_speed_mps", 0) > 0,
         "positive number required")
    need("filters.taps", _int(cfg["filters"].get("taps")) and cfg["filters"].get("taps", 0) >= 1,
         "integer >= 1 required")

    b = cfg["bands"]
    fs = a.get("sample_rate_hz") if _num(a.get("sample_rate_hz")) else None
    f = b.get("frequency_hz")
    if need("bands.frequency_hz", _pair(f), "[low, high] in Hz required"):
        need("bands.frequency_hz", 0 < f[0] < f[1], "need 0 < low < high")
        if fs:
            need("bands.frequency_hz", f[1] < fs / 2, "high edge must be below the Nyquist frequency")
    pb = b.get("passband_deg")
    if need("bands.passband_deg", _pair(pb), "[low, high] in degrees required"):
        need("bands.passband_deg", 0 <= pb[0] <= pb[1] <= 180, "need 0 <= low <= high <= 180")
    sb = b.get("stopband_deg")
    if need("bands.stopband_deg", isinstance(sb, list) and len(sb) > 0 and all(_pair(iv) for iv in sb),
            "list of [low, high] intervals in degrees required"):
        for i, (lo, hi) in enumerate(sb):
            need(f"bands.stopband_deg[{i}]", 0 <= lo <= hi <= 180, "need 0 <= low <= high <= 180")
            if _pair(pb):
                need(f"bands.stopband_deg[{i}]", not (lo <= pb[1] and pb[0] <= hi), "overlaps the passband")
    st = b.get("steer_deg")
    if need("bands.steer_deg", _num(st), "number in degrees required") and _pair(pb):
        need("bands.steer_deg", pb[0] <= st <= pb[1], "must lie in the passband")

    t = cfg["thresholds"]
    need("thresholds.stopband_attenuation_db", _num(t.get("stopband_attenuation_db")), "number in dB required")
    need("thresholds.wng_db", _num(t.get("wng_db")), "number in dB required")
    need("thresholds.eps_f", _num(t.get("eps_f")), "number required (signed)")
    r = t.get("passband_ripple_db")
    need("thresholds.passband_ripple_db", r is None or (_num(r) and r >= 0), "nonnegative number or null")

    d = cfg["design"]
    kind = d.get("kind")
    need("design.kind", kind in KINDS, f"one of {', '.join(KINDS)}")
    tau = d.get("tau_d")
    need("design.tau_d", tau in TAU_KEYWORDS or _num(tau), f"number or one of {', '.join(TAU_KEYWORDS)}")
    if kind in ("v1-lp", "c-b") and _int(cfg["filters"].get("taps")):
        L = cfg["filters"]["taps"]
        need("design.tau_d", tau == "half" or (_num(tau) and abs(tau - (L - 1) / 2) < 1e-12),
             "linear-phase designs need tau_d = half")
    rw = d.get("reg_weight")
    need("design.reg_weight", rw is None or (_num(rw) and rw >= 0), "nonnegative number or null")
    need("design.b_path", isinstance(d.get("b_path"), bool), "true or false")
    need("design.max_iters", _int(d.get("max_iters")) and d.get("max_iters", 0) >= 1, "integer >= 1")
    need("design.L_o", _int(d.get("L_o")) and d.get("L_o", 0) >= 1, "integer >= 1")
    need("design.W", _num(d.get("W")) and d.get("W", 0) > 0, "positive number required")
    tr = d.get("trust")
    if need("design.trust", isinstance(tr, dict), "mapping required"):
        for k in ("first", "last", "small"):
            need(f"design.trust.{k}", _num(tr.get(k)) and tr.get(k, -1) >= 0, "nonnegative number required")
        need("design.trust.T", _int(tr.get("T")) and tr.get("T", 0) >= 2, "integer >= 2")
    if kind in ("v1-sym", "c-a-sym", "v1-lp", "c-b") and not p:
        geom = _geometry(cfg)
        need("array", geom.is_symmetric(), f"design.kind {kind} needs a symmetric array")

    g = cfg.get("grid", {})
    for k in ("M", "K", "edge", "verify_factor"):
        need(f"grid.{k}", _int(g.get(k)) and g.get(k, -1) >= (0 if k == "edge" else 1), "integer required")
    for k in ("virtual", "blocks"):
        need(f"grid.{k}", isinstance(g.get(k), list) and len(g[k]) == 2 and all(_int(u) for u in g[k]),
             "[frequencies, angles] integers required")
    need("grid.mode", g.get("mode") in ("uniform", "nonuniform"), "uniform or nonuniform")
    tol = cfg.get("solver", {}).get("tol")
    need("solver.tol", _num(tol) and 0 < tol < 1, "number in (0, 1) required")
    need("output.dir", isinstance(cfg.get("output", {}).get("dir"), str), "string required")
    need("seed", _int(cfg.get("seed")), "integer required")
    return p


def _geometry(cfg) -> ArrayGeometry:
    a = cfg["array"]
    if "positions_m" in a:
        return ArrayGeometry(tuple(a["positions_m"]), float(a["sample_rate_hz"]), float(a["sound_speed_mps"]))
    return ArrayGeometry.uniform(int(a["elements"]), float(a["spacing_m"]), float(a["sample_rate_hz"]),
                                 float(a["sound_speed_mps"]))


def tau_value(tau, n_taps: int) -> float:
    if tau == "zero":
        return 0.0
    if tau == "half":
        return (n_taps - 1) / 2.0
    if tau == "quarter":
        return (n_taps - 1) / 4.0
    return float(tau)


def build(raw: dict) -> RunConfig:
    """Validate ``raw`` (a parsed YAML mapping) and build the run objects."""
    if not isinstance(raw, dict):
        raise ConfigError(["<root>: a mapping of sections is required"])
    unknown = sorted(set(raw) - set(DEFAULTS) - {"filters", "bands", "array", "thresholds", "design"})
    cfg = _merge(DEFAULTS, raw)
    problems = [f"{k}: unknown section" for k in unknown] + _check(cfg)
    if problems:
        raise ConfigError(problems)
    L = int(cfg["filters"]["taps"])
    b = cfg["bands"]
    band = BandSpec.from_hz_deg(cfg["array"]["sample_rate_hz"], b["frequency_hz"], b["passband_deg"],
                                b["stopband_deg"], b["steer_deg"])
    t = cfg["thresholds"]
    return RunConfig(cfg, _geometry(cfg), band, L, cfg["design"]["kind"], tau_value(cfg["design"]["tau_d"], L),
                     float(10 ** (-t["stopband_attenuation_db"] / 20)), float(10 ** (t["wng_db"] / 10)))


def parse(text: str) -> RunConfig:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError([f"<yaml>: {e}"]) from None
    return build(raw)


BUNDLED = os.path.join(os.path.dirname(__file__), "configs")


def bundled() -> list:
    """Names of the configs shipped with the package."""
    return sorted(f[:-5] for f in os.listdir(BUNDLED) if f.endswith(".yaml"))


def resolve(path) -> str:
    """``path`` itself if it exists, otherwise the bundled config of that name."""
    if os.path.exists(path):
        return str(path)
    cand = os.path.join(BUNDLED, f"{path}.yaml")
    if os.path.exists(cand):
        return cand
    raise ConfigError([f"<file>: {path} not found (bundled configs: {', '.join(bundled())})"])


def load(path) -> RunConfig:
    with open(resolve(path)) as fh:
        return parse(fh.read())
