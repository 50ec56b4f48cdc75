"""Figures of merit for a designed beamformer and their CSV/key-value output.

All metrics are taken on one uniform evaluation grid (200 frequencies and
200 angles per angular band by default):

* passband ripple ``A_p = 20 log10(max|B| / min|B|)`` over the passband,
* stopband attenuation ``A_a = -20 log10(max|B|)`` over the stopband,
* ``tau_avg = (tau_max + tau_min) / 2`` and ``sigma_tau = tau_max - tau_min``,
* the per-angle deviation ``sigma_tau(theta) = tau_max(theta) - tau_min`` where
  ``tau_min`` is the global minimum,
* ``J_sol``, the passband error at the solution (complex error for the convex
  designs, squared-magnitude error for the iterative ones).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
import os
import warnings

import numpy as np

from .response import ArrayGeometry, as_coeffs, group_delay_grid, response_grid, wng_curve
from .sampling import BandSpec, uniform_grid

CONVEX = "convex"
ITERATIVE = "iterative"


def db20(v):
    return 20.0 * np.log10(v)


def from_db20(v):
    return 10.0 ** (np.asarray(v, float) / 20.0)


def db10(v):
    return 10.0 * np.log10(v)


def from_db10(v):
    return 10.0 ** (np.asarray(v, float) / 10.0)


@dataclass
class DesignReport:
    """Metrics of one design plus the curves they were read from."""

    A_p: float
    A_a: float
    tau_avg: float
    sigma_tau: float
    j_sol: float
    min_wng_db: float
    tau_min: float
    tau_max: float
    sigma_theta: np.ndarray = field(repr=False)
    pass_thetas: np.ndarray = field(repr=False)
    wng_omegas: np.ndarray = field(repr=False)
    wng_db: np.ndarray = field(repr=False)
    gd_excluded: int = 0
    family: str = CONVEX
    provenance: dict = field(default_factory=dict)

    def metrics(self) -> dict:
        return {"A_p_db": self.A_p, "A_a_db": self.A_a, "tau_avg": self.tau_avg,
                "sigma_tau": self.sigma_tau, "J_sol": self.j_sol, "min_wng_db": self.min_wng_db,
                "tau_min": self.tau_min, "tau_max": self.tau_max, "gd_excluded": self.gd_excluded}

    def write(self, path, header=None):
        """Key-value report: optional header, metrics, provenance.

        A string ``header`` (e.g. the YAML text of the parsed config) is
        written verbatim in the ``[config]`` section, a dict is flattened.
        """
        with open(path, "w") as fh:
            fh.write("[config]\n")
            if isinstance(header, str):
                fh.write(header if header.endswith("\n") else header + "\n")
            else:
                for k, v in _flatten(header or {}):
                    fh.write(f"{k} = {_fmt(v)}\n")
            fh.write("\n")
            for section, items in (("metrics", self.metrics()), ("provenance", self.provenance)):
                fh.write(f"[{section}]\n")
                for k, v in _flatten(items):
                    fh.write(f"{k} = {_fmt(v)}\n")
                fh.write("\n")


def read_sections(path) -> dict:
    """Split a report file into ``{section: text}``."""
    out, name = {}, None
    with open(path) as fh:
        for line in fh:
            s = line.rstrip("\n")
            if s.startswith("[") and s.endswith("]") and " " not in s:
                name = s[1:-1]
                out[name] = []
            elif name is not None:
                out[name].append(line)
    return {k: "".join(v).rstrip("\n") + "\n" for k, v in out.items()}


def _flatten(d, prefix=""):
    for k, v in d.items():
        if isinstance(v, dict):
            yield from _flatten(v, f"{prefix}{k}.")
        else:
            yield f"{prefix}{k}", v


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_fmt(u) for u in v) + "]"
    return str(v)


def evaluate(geom: ArrayGeometry, x, band: BandSpec, tau_d: float = 0.0, M: int = 200, K: int = 200,
             family: str = CONVEX, provenance: dict | None = None) -> DesignReport:
    """Evaluate ``x`` on the uniform ``M x K`` grid of ``band``.

    Points where the response is too small for a group delay are left out of
    the delay extrema and counted in ``gd_excluded``.
    """
    if family not in (CONVEX, ITERATIVE):
        raise ValueError(f"family must be {CONVEX!r} or {ITERATIVE!r}")
    c = as_coeffs(x, geom)
    grid = uniform_grid(band, M, K)
    om, pth, sth = grid.omegas, grid.pass_thetas, grid.stop_thetas
    Bp = response_grid(geom, c, om, pth)
    mp = np.abs(Bp)
    ms = np.abs(response_grid(geom, c, om, sth))
    A_p = float(db20(mp.max() / mp.min()))
    A_a = float(-db20(ms.max()))
    tau, ok = group_delay_grid(geom, c, om, pth)
    tmin, tmax = float(np.nanmin(tau)), float(np.nanmax(tau))
    with warnings.catch_warnings():
        # an angle with no usable point at all keeps NaN in sigma_tau(theta)
        warnings.simplefilter("ignore", RuntimeWarning)
        sig_theta = np.nanmax(tau, axis=0) - tmin
    if family == CONVEX:
        j = float(np.max(np.abs(Bp - np.exp(-1j * om * tau_d)[:, None])))
    else:
        j = float(np.max(np.abs(mp ** 2 - 1.0)))
    wng = db10(wng_curve(geom, c, om, band.steer_angle))
    return DesignReport(A_p, A_a, 0.5 * (tmin + tmax), tmax - tmin, j, float(wng.min()), tmin, tmax,
                        sig_theta, pth, om, wng, int(np.sum(~ok)), family, dict(provenance or {}))


def beampattern_table(geom: ArrayGeometry, x, omegas, thetas):
    """Rows ``(omega, theta, mag_db, phase, group_delay)`` over a frequency-major grid."""
    c = as_coeffs(x, geom)
    B = response_grid(geom, c, omegas, thetas)
    tau, _ = group_delay_grid(geom, c, omegas, thetas)
    W, T = np.meshgrid(omegas, thetas, indexing="ij")
    with np.errstate(divide="ignore"):
        mag = db20(np.abs(B))
    return np.c_[W.ravel(), T.ravel(), mag.ravel(), np.angle(B).ravel(), tau.ravel()]


def write_beampattern_csv(path, geom: ArrayGeometry, x, band: BandSpec, n_freq: int = 200,
                          n_theta: int = 181):
    """Beampattern over the design band and all angles 0..180 degrees."""
    omegas = np.linspace(*band.freq_band, n_freq)
    thetas = np.linspace(0.0, np.pi, n_theta)
    tab = beampattern_table(geom, x, omegas, thetas)
    fs = geom.sample_rate
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["freq_hz", "theta_deg", "mag_db", "phase_rad", "group_delay_samples"])
        for om, th, mag, ph, gd in tab:
            w.writerow([repr(float(om * fs / (2 * np.pi))), repr(float(np.rad2deg(th))), repr(float(mag)),
                        repr(float(ph)), "" if np.isnan(gd) else repr(float(gd))])


def write_wng_csv(path, report: DesignReport, sample_rate: float):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["freq_hz", "wng_db"])
        for om, g in zip(report.wng_omegas, report.wng_db):
            w.writerow([repr(float(om * sample_rate / (2 * np.pi))), repr(float(g))])


def write_group_delay_csv(path, report: DesignReport):
    """Per-angle deviation curve ``sigma_tau(theta)``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["theta_deg", "sigma_tau_samples"])
        for th, s in zip(report.pass_thetas, report.sigma_theta):
            w.writerow([repr(float(np.rad2deg(th))), repr(float(s))])


def write_all(outdir, geom: ArrayGeometry, x, report: DesignReport, band: BandSpec, header=None):
    os.makedirs(outdir, exist_ok=True)
    report.write(os.path.join(outdir, "report.txt"), header)
    write_beampattern_csv(os.path.join(outdir, "beampattern.csv"), geom, x, band)
    write_wng_csv(os.path.join(outdir, "wng.csv"), report, geom.sample_rate)
    write_group_delay_csv(os.path.join(outdir, "group_delay.csv"), report)
