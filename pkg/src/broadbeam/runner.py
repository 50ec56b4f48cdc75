"""Run one configured design and write its output directory."""
from __future__ import annotations

from dataclasses import dataclass, field
import logging
import os
import time

import numpy as np

from . import socp
from .config import RunConfig
from .convex import design_c, design_v1, program_for
from .errors import Infeasible, SolverFailure
from .iterative import full_grid_row_count, run_two_step
from .metrics import CONVEX, ITERATIVE, DesignReport, evaluate, write_all
from .response import FilterBank

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INFEASIBLE = 2
EXIT_NUMERICAL = 3


@dataclass
class RunResult:
    code: int
    status: str
    bank: FilterBank | None = None
    report: DesignReport | None = None
    message: str = ""
    provenance: dict = field(default_factory=dict)


def write_coefficients(path, coeffs):
    """``N`` rows of ``L`` comma-separated taps at 17 significant digits (lossless for doubles)."""
    np.savetxt(path, np.asarray(coeffs, float), delimiter=",", fmt="%.17g")


def read_coefficients(path, n_mics: int | None = None, n_taps: int | None = None) -> np.ndarray:
    c = np.atleast_2d(np.loadtxt(path, delimiter=",", dtype=float))
    if n_mics is not None and c.shape != (n_mics, n_taps):
        raise ValueError(f"{path}: expected {n_mics} x {n_taps} coefficients, found {c.shape[0]} x {c.shape[1]}")
    return c


def _status_file(path, rc: RunConfig, status: str, message: str, provenance: dict):
    with open(path, "w") as fh:
        fh.write("[config]\n" + rc.dump() + "\n")
        fh.write(f"[status]\nstatus = {status}\nmessage = {message}\n\n")
        fh.write("[provenance]\n")
        for k, v in provenance.items():
            fh.write(f"{k} = {v}\n")


def _ripple_check(rc: RunConfig, report: DesignReport, prov: dict):
    spec = rc.data["thresholds"].get("passband_ripple_db")
    if spec is not None:
        prov["ripple_spec_db"] = spec
        prov["ripple_spec_met"] = bool(report.A_p <= spec)


def run_design(rc: RunConfig, outdir: str | None = None, b_path: bool | None = None,
               max_iters: int | None = None, seed: int | None = None) -> RunResult:
    """Design, evaluate and (with ``outdir``) write coefficients, reports and curves.

    Exit codes: 0 optimal, 2 infeasible, 3 numerical failure.
    """
    seed = rc.data["seed"] if seed is None else seed
    prov = {"kind": rc.kind, "seed": seed}
    spec = rc.design_spec(b_path=b_path, max_iters=max_iters)
    if outdir:
        os.makedirs(outdir, exist_ok=True)
    t0 = time.perf_counter()
    trace = None
    try:
        if rc.kind == "v2":
            trace = open(os.path.join(outdir, "trace.jsonl"), "w") if outdir else None
            try:
                res = run_two_step(spec, trace)
            finally:
                if trace is not None:
                    trace.close()
            bank, report = res.bank, res.report
            prov.update(report.provenance)
            prov["full_grid_rows"] = full_grid_row_count(spec)
        else:
            run = design_c if rc.kind.startswith("c-") else design_v1
            r = run(spec)
            bank = r.bank
            info = r.outcome.info
            prov.update(status=r.outcome.status, solver_iterations=r.outcome.iterations,
                        exchange_rounds=info.get("rounds"), rows=info.get("rows"),
                        j_sol_solver=r.j_sol)
            if "center_residual" in info:
                prov["center_residual"] = info["center_residual"]
            report = evaluate(rc.geometry, bank.coeffs, rc.band, rc.tau_d, spec.M, spec.K, CONVEX)
    except Infeasible as e:
        prov.update(family=e.family, seconds=round(time.perf_counter() - t0, 3))
        if outdir:
            _status_file(os.path.join(outdir, "report.txt"), rc, "infeasible", str(e), prov)
        return RunResult(EXIT_INFEASIBLE, "infeasible", message=str(e), provenance=prov)
    except SolverFailure as e:
        prov["seconds"] = round(time.perf_counter() - t0, 3)
        if outdir:
            _status_file(os.path.join(outdir, "report.txt"), rc, "numerical-failure", str(e), prov)
        return RunResult(EXIT_NUMERICAL, "numerical-failure", message=str(e), provenance=prov)
    prov["seconds"] = round(time.perf_counter() - t0, 3)
    _ripple_check(rc, report, prov)
    report.provenance = prov
    if outdir:
        write_coefficients(os.path.join(outdir, "coefficients.csv"), bank.coeffs)
        write_all(outdir, rc.geometry, bank.coeffs, report, rc.band, rc.dump())
    return RunResult(EXIT_OK, socp.OPTIMAL, bank, report, provenance=prov)


def evaluate_file(rc: RunConfig, coeff_path, outdir: str | None = None) -> DesignReport:
    c = read_coefficients(coeff_path, rc.geometry.n_mics, rc.n_taps)
    g = rc.data["grid"]
    report = evaluate(rc.geometry, c, rc.band, rc.tau_d, g["M"], g["K"],
                      ITERATIVE if rc.kind == "v2" else CONVEX, {"coefficients": str(coeff_path)})
    if outdir:
        write_all(outdir, rc.geometry, c, report, rc.band, rc.dump())
    return report


def first_program(rc: RunConfig) -> socp.ConeProgram:
    """The program the design starts from (for v2, the regularized convex start)."""
    spec = rc.design_spec()
    if rc.kind == "v2":
        return program_for(spec.convex_spec(spec.reg_weight), "v1")
    return program_for(spec, "c" if rc.kind.startswith("c-") else "v1")
