"""One-shot convex designs: minimax passband error under stopband and WNG constraints.

``design_v1`` solves

    minimize    ||U_pb x - d_pb||_inf  (+ lam ||x||_2)
    subject to  ||U_sb x||_inf <= Gamma_sb
                sqrt(Gamma_wng) ||A(w_m) x||_2 <= Re[exp(j w_m tau_d) g(theta_d, w_m)^T x]

and ``design_c`` the competing formulation with hard unit-response rows at the
steering angle and caps on ``||A(w_m) x||_2``.  Both optionally impose the
mirror symmetry ``x[n, l] = x[N-1-n, l]`` or the linear-phase pairing
``x[n, l] = x[N-1-n, L-1-l]``.

The uniform grid has tens of thousands of complex rows, nearly all of them
inactive at the optimum.  The programs are therefore solved by constraint
exchange: solve on a working subset, evaluate the whole grid, add the worst
violators and repeat.  When a round adds nothing, the subset optimum is
feasible for the full grid and its objective is a lower bound, so it is the
full-grid optimum.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
import logging
from typing import Callable, NamedTuple, Union

import numpy as np

from . import socp
from .errors import AsymmetricGeometry, Infeasible, SolverFailure
from .response import (ArrayGeometry, FilterBank, linear_phase_expansion, response_grid,
                       steering_matrix, symmetric_expansion, wng_curve, wng_matrix)
from .sampling import BandSpec, uniform_grid

log = logging.getLogger(__name__)

DEFAULT_TIEBREAK = 1e-4


@dataclass
class ConvexDesignSpec:
    geometry: ArrayGeometry
    band: BandSpec
    n_taps: int
    stopband_ceiling: float
    wng_floor: Union[float, Callable] = 1.0
    tau_d: float = 0.0
    reg_weight: float = 0.0
    symmetry: bool = False
    linear_phase: bool = False
    M: int = 200
    K: int = 200
    parameterization: str = "reduced"
    tiebreak: float = DEFAULT_TIEBREAK
    tol: float = socp.DEFAULT_TOL
    max_rounds: int = 60

    def __post_init__(self):
        if not self.stopband_ceiling > 0:
            raise ValueError("stopband_ceiling must be positive")
        if np.any(np.asarray(self.floor_at(np.linspace(*self.band.freq_band, 3))) <= 0):
            raise ValueError("wng_floor must be positive")
        if self.reg_weight < 0 or self.tiebreak < 0:
            raise ValueError("regularization weights must be nonnegative")
        if self.parameterization not in ("reduced", "equality"):
            raise ValueError("parameterization must be 'reduced' or 'equality'")
        if (self.symmetry or self.linear_phase) and not self.geometry.is_symmetric():
            raise AsymmetricGeometry("symmetry/linear-phase constraints need a symmetric array")
        if self.linear_phase and abs(self.tau_d - (self.n_taps - 1) / 2) > 1e-12:
            raise ValueError("linear-phase designs require tau_d = (L-1)/2")

    def floor_at(self, omegas):
        omegas = np.asarray(omegas, float)
        if callable(self.wng_floor):
            return np.broadcast_to(np.asarray(self.wng_floor(omegas), float), omegas.shape)
        return np.broadcast_to(np.asarray(self.wng_floor, float), omegas.shape)

    def expansion(self) -> np.ndarray:
        """Maps the optimization variable to the full ``N*L`` coefficient vector."""
        N, L = self.geometry.n_mics, self.n_taps
        if self.parameterization == "reduced":
            if self.linear_phase:
                return linear_phase_expansion(N, L)
            if self.symmetry:
                return symmetric_expansion(N, L)
        return np.eye(N * L)


class ConvexResult(NamedTuple):
    bank: FilterBank
    j_sol: float
    outcome: socp.SolveOutcome


def build_desired_passband(omegas, tau_d: float) -> np.ndarray:
    """``B_d = exp(-j w tau_d)`` at each sample frequency (the stopband target is 0)."""
    return np.exp(-1j * np.asarray(omegas, float) * tau_d)


def _pairing_equalities(spec: ConvexDesignSpec):
    """Explicit pairing rows when the full parameterization is used."""
    N, L = spec.geometry.n_mics, spec.n_taps
    rows = []
    for n in range(N):
        for l in range(L):
            if spec.linear_phase:
                n2, l2 = N - 1 - n, L - 1 - l
            elif spec.symmetry:
                n2, l2 = N - 1 - n, l
            else:
                continue
            i, j = n * L + l, n2 * L + l2
            if i < j:
                r = np.zeros(N * L)
                r[i], r[j] = 1.0, -1.0
                rows.append(r)
    return np.array(rows).reshape(-1, N * L)


class _Exchange:
    """Working-set bookkeeping shared by the V1 and C programs."""

    def __init__(self, spec: ConvexDesignSpec, family: str):
        self.spec = spec
        self.family = family
        self.geom = spec.geometry
        self.grid = uniform_grid(spec.band, spec.M, spec.K)
        self.E = spec.expansion()
        self.nv = self.E.shape[1]
        M, Kp, Ks = self.grid.M, len(self.grid.pass_thetas), len(self.grid.stop_thetas)
        self.d_full = build_desired_passband(self.grid.omegas, spec.tau_d)
        fi = np.unique(np.linspace(0, M - 1, min(M, 21)).round().astype(int))
        pj = np.unique(np.linspace(0, Kp - 1, min(Kp, 21)).round().astype(int))
        sj = np.unique(np.linspace(0, Ks - 1, min(Ks, 41)).round().astype(int))
        # include both ends of every stopband interval
        sj = np.union1d(sj, self._interval_ends())
        self.pass_set = set((int(i), int(j)) for i in fi for j in pj)
        self.stop_set = set((int(i), int(j)) for i in fi for j in sj)

    def _interval_ends(self):
        th = self.grid.stop_thetas
        ends = [0, len(th) - 1]
        brk = np.flatnonzero(np.diff(th) <= 0)
        jumps = np.flatnonzero(np.diff(th) > 1.5 * np.median(np.diff(th))) if len(th) > 2 else []
        for b in list(brk) + list(jumps):
            ends += [int(b), int(b) + 1]
        return np.array(sorted(set(ends)))

    def rows(self, pts, thetas):
        pts = sorted(pts)
        i = np.array([p[0] for p in pts])
        j = np.array([p[1] for p in pts])
        U = steering_matrix(self.geom, self.spec.n_taps, self.grid.omegas[i], thetas[j])
        return U @ self.E, i

    def program(self):
        spec, nv = self.spec, self.nv
        prog = socp.ConeProgram(nv)
        t = int(prog.add_variables(1)[0])
        prog.set_objective(t, 1.0)
        cols = np.arange(nv)
        Up, ip = self.rows(self.pass_set, self.grid.pass_thetas)
        socp.add_complex_linf_epigraph(prog, Up, self.d_full[ip], t, cols, tag="passband")
        Us, _ = self.rows(self.stop_set, self.grid.stop_thetas)
        socp.add_complex_linf_epigraph(prog, Us, 0.0, spec.stopband_ceiling, cols, tag="stopband")
        self.add_family_constraints(prog, cols)
        if spec.parameterization == "equality" and (spec.symmetry or spec.linear_phase):
            Eq = _pairing_equalities(spec)
            prog.add_equality(Eq, np.zeros(len(Eq)), cols, tag="pairing")
        weight = spec.reg_weight if spec.reg_weight > 0 else spec.tiebreak
        if weight > 0:
            r = int(prog.add_variables(1)[0])
            prog.set_objective(r, weight)
            F = np.zeros((self.E.shape[0] + 1, prog.n))
            F[0, r] = 1.0
            F[1:, :nv] = self.E
            prog.add_soc(F, np.zeros(F.shape[0]), F.shape[0], tag="norm")
        return prog, t

    def add_family_constraints(self, prog, cols):
        spec, g = self.spec, self.geom
        N, L = g.n_mics, spec.n_taps
        floors = spec.floor_at(self.grid.omegas)
        G = steering_matrix(g, L, self.grid.omegas, spec.band.steer_angle) @ self.E
        if self.family == "v1":
            for m, w in enumerate(self.grid.omegas):
                socp.add_wng_cone(prog, wng_matrix(N, L, w) @ self.E, G[m], spec.tau_d, w, floors[m],
                                  cols, tag="wng")
            return
        # design C: unit response at the steering angle and norm caps 1/floor
        A_eq, b_eq = self.center_rows()
        prog.add_equality(A_eq, b_eq, cols, tag="center")
        self._caps(prog, cols)

    def relaxed_program(self):
        """Design C feasibility on the working set: min rho with stopband <= ceiling + rho,
        unit-response rows within rho and the norm caps kept hard."""
        spec, nv = self.spec, self.nv
        prog = socp.ConeProgram(nv)
        rho = int(prog.add_variables(1)[0])
        prog.set_objective(rho, 1.0)
        cols = np.arange(nv)
        Us, _ = self.rows(self.stop_set, self.grid.stop_thetas)
        socp.add_complex_linf_epigraph(prog, Us, 0.0, (rho, spec.stopband_ceiling), cols, tag="stopband")
        A_eq, b_eq = self.center_rows()
        socp.add_real_linf(prog, A_eq, -b_eq, rho, cols, tag="center")
        self._caps(prog, cols)
        return prog, rho

    def _caps(self, prog, cols):
        spec, g = self.spec, self.geom
        floors = spec.floor_at(self.grid.omegas)
        for m, w in enumerate(self.grid.omegas):
            Am = wng_matrix(g.n_mics, spec.n_taps, w) @ self.E
            F = np.vstack([np.zeros((1, self.nv)), Am.real, Am.imag])
            gconst = np.zeros(F.shape[0])
            gconst[0] = np.sqrt(1.0 / floors[m])
            prog.add_soc(prog._columns(F, cols), gconst, F.shape[0], tag="wng")

    def center_rows(self):
        """Real/imaginary parts of the rotated unit-response rows, reduced to a numerically independent set."""
        G = steering_matrix(self.geom, self.spec.n_taps, self.grid.omegas, self.spec.band.steer_angle) @ self.E
        rot = G * np.exp(1j * self.grid.omegas * self.spec.tau_d)[:, None]
        A_eq = np.vstack([rot.real, rot.imag])
        b_eq = np.concatenate([np.ones(len(rot)), np.zeros(len(rot))])
        return _independent_rows(A_eq, b_eq)

    def violations(self, x, t, rel=1e-7):
        """Full-grid errors and the worst violator per frequency (and per angle) of each family."""
        spec = self.spec
        Bp = response_grid(self.geom, x, self.grid.omegas, self.grid.pass_thetas)
        ep = np.abs(Bp - self.d_full[:, None])
        es = np.abs(response_grid(self.geom, x, self.grid.omegas, self.grid.stop_thetas))
        new_p = _worst(ep, t * (1 + rel) + 1e-12, self.pass_set)
        new_s = _worst(es, spec.stopband_ceiling * (1 + rel), self.stop_set)
        return ep, es, new_p, new_s


def _independent_rows(A, b, rtol=1e-10):
    """Drop linearly dependent equality rows (keeps consistency information in ``b``)."""
    keep = np.any(np.abs(A) > 0, axis=1)
    A, b = A[keep], b[keep]
    if len(A) == 0:
        return A, b
    Q, R, piv = _qr_pivot(A.T)
    d = np.abs(np.diag(R))
    rank = int(np.sum(d > rtol * d.max())) if len(d) else 0
    idx = np.sort(piv[:rank])
    return A[idx], b[idx]


def _qr_pivot(M):
    import scipy.linalg

    return scipy.linalg.qr(M, mode="economic", pivoting=True)


def _worst(err, limit, have):
    out = set()
    bad = err > limit
    if not bad.any():
        return out
    masked = np.where(bad, err, -np.inf)
    for i in np.flatnonzero(bad.any(axis=1)):
        out.add((int(i), int(np.argmax(masked[i]))))
    for j in np.flatnonzero(bad.any(axis=0)):
        out.add((int(np.argmax(masked[:, j])), int(j)))
    return out - have


def center_feasibility(spec: ConvexDesignSpec) -> socp.SolveOutcome:
    """Smallest achievable worst-case residual of the design C response rows under the norm caps.

    The caps and the unit-response rows do not involve the angular grid, so
    this small program settles feasibility of that part exactly; a clearly
    positive optimum means design C is infeasible.
    """
    ex = _Exchange(spec, "c")
    prog = socp.ConeProgram(ex.nv)
    s = int(prog.add_variables(1)[0])
    prog.set_objective(s, 1.0)
    cols = np.arange(ex.nv)
    A_eq, b_eq = ex.center_rows()
    socp.add_real_linf(prog, A_eq, -b_eq, s, cols, tag="center")
    ex._caps(prog, cols)
    return socp.solve(prog, spec.tol)


CENTER_RESIDUAL_TOL = 1e-6


def _run(spec: ConvexDesignSpec, family: str) -> ConvexResult:
    ex = _Exchange(spec, family)
    if family == "c":
        pre = center_feasibility(spec)
        if pre.status == socp.OPTIMAL and pre.objective > CENTER_RESIDUAL_TOL:
            raise Infeasible(f"c design is infeasible: unit response rows miss by {pre.objective:.3g} "
                             "under the WNG caps", pre, "wng")
    total_rows = None
    outcome = None
    for rnd in range(1, spec.max_rounds + 1):
        prog, t_idx = ex.program()
        outcome = socp.solve(prog, spec.tol)
        outcome.info.update(rounds=rnd, pass_points=len(ex.pass_set), stop_points=len(ex.stop_set),
                            rows=prog.row_count())
        if outcome.status == socp.INFEASIBLE:
            blocks = outcome.info.get("blocks", {})
            fam = max(blocks, key=blocks.get) if blocks else None
            raise Infeasible(f"{family} design is infeasible (dominant certificate block: {fam})",
                             outcome, fam)
        if outcome.status != socp.OPTIMAL and family == "c":
            rprog, rho_idx = ex.relaxed_program()
            relax = socp.solve(rprog, spec.tol)
            # the constraints cannot be met to solver precision even on the working set
            if relax.status == socp.OPTIMAL and relax.objective > spec.tol:
                blocks = relax.info.get("blocks", {})
                raise Infeasible(f"c design is infeasible: stopband and unit-response rows cannot both hold "
                                 f"(relaxation {relax.objective:.3g} on {len(ex.stop_set)} stopband points)",
                                 relax, "stopband")
        if outcome.status != socp.OPTIMAL:
            raise SolverFailure(f"{family} design: solver status {outcome.status} "
                                f"({outcome.solver_status})", outcome)
        x = ex.E @ outcome.x[:ex.nv]
        bank = FilterBank.from_flat(x, spec.geometry.n_mics, spec.n_taps)
        t = outcome.x[t_idx]
        ep, es, new_p, new_s = ex.violations(bank.coeffs, t)
        log.debug("round %d: t=%.6g full=%.6g sb=%.6g adds %d/%d", rnd, t, ep.max(), es.max(),
                  len(new_p), len(new_s))
        if not new_p and not new_s:
            outcome.info["full_grid_rows"] = 3 * (ep.size + es.size)
            outcome.info["stopband_max"] = float(es.max())
            if family == "c":
                G = steering_matrix(spec.geometry, spec.n_taps, ex.grid.omegas, spec.band.steer_angle)
                outcome.info["center_residual"] = float(np.max(np.abs(G @ x - ex.d_full)))
            return ConvexResult(bank, float(ep.max()), outcome)
        ex.pass_set |= new_p
        ex.stop_set |= new_s
    raise SolverFailure(f"{family} design: constraint exchange did not settle in {spec.max_rounds} rounds",
                        outcome)


def design_v1(spec: ConvexDesignSpec) -> ConvexResult:
    """Minimax passband design with convex WNG cones; ``j_sol`` excludes any regularization term."""
    return _run(spec, "v1")


def design_c(spec: ConvexDesignSpec) -> ConvexResult:
    """Competing design: unit response at the steering angle for every grid frequency
    and ``||A(w) x||_2 <= sqrt(1/Gamma_wng(w))``."""
    return _run(spec, "c")


def program_for(spec: ConvexDesignSpec, family: str = "v1", full: bool = False) -> socp.ConeProgram:
    """The conic program of a design (the initial working set, or the whole grid with ``full``)."""
    ex = _Exchange(spec, family)
    if full:
        Kp, Ks = len(ex.grid.pass_thetas), len(ex.grid.stop_thetas)
        ex.pass_set = {(i, j) for i in range(ex.grid.M) for j in range(Kp)}
        ex.stop_set = {(i, j) for i in range(ex.grid.M) for j in range(Ks)}
    return ex.program()[0]
