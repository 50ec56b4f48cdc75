"""Iterative group-delay design: linearize, solve a trust-region SOCP, repeat.

Each iteration minimizes the worst passband group-delay error
``e_g = tau - tau_d`` of ``x_k + delta`` using first-order models of ``e_g``,
of the squared-magnitude error ``e_r = |B|^2 - 1`` and of the WNG margin
``e_w = G_w - Gamma_wng``:

    minimize    ||C delta + d||_inf + W rho
    subject to  Q delta + h >= -rho
                ||D delta + f||_inf <= Gamma_pb + rho
                ||U_sb (x_k + delta)||_inf <= Gamma_sb + rho
                ||delta||_2 <= Gamma_delta(k) + rho,   rho >= 0

The sample points are re-selected at every iteration by block maxima of
the current error surfaces on a dense virtual grid.  ``run_two_step`` starts
the iteration from a regularized convex design (path A) and optionally from
the plain convex design (path B) and keeps the one with the smaller group
delay deviation.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
import json
import logging
from typing import Callable, NamedTuple, Union

import numpy as np
import scipy.sparse as sp

from . import socp
from .convex import ConvexDesignSpec, design_v1
from .errors import Infeasible, NearZeroResponse, SolverFailure
from .metrics import ITERATIVE, DesignReport, evaluate
from .response import (GD_GUARD, ArrayGeometry, FilterBank, as_coeffs, group_delay_grid, group_delay_rows,
                       magsq_rows, response_grid, response_points, steering_matrix, symmetric_expansion, wng_curve,
                       wng_rows)
from .sampling import (GROUP_DELAY, PASSBAND, STOPBAND, WNG, BandSpec, GridConfig, SampleSet,
                       axis_edges, block_argmax, select_nonuniform, split_config, uniform_grid)

log = logging.getLogger(__name__)

RHO_ACTIVE = 1e-8
TIE_TOL = 1e-6


@dataclass(frozen=True)
class TrustSchedule:
    """``Gamma_delta(k)``: linear from ``gamma_first`` at ``k=1`` down the slope that reaches
    ``gamma_last`` at ``k=T``; ``gamma_small`` from ``k=T`` on."""

    gamma_first: float = 0.5
    gamma_last: float = 0.001
    T: int = 20
    gamma_small: float = 0.001

    def __post_init__(self):
        if not self.gamma_first > self.gamma_small > 0:
            raise ValueError("need gamma_first > gamma_small > 0")
        if self.gamma_last > self.gamma_first or self.gamma_last < 0:
            raise ValueError("need 0 <= gamma_last <= gamma_first")
        if self.T < 2:
            raise ValueError("T must be >= 2")

    def __call__(self, k: int) -> float:
        if k < 1:
            raise ValueError("iterations are numbered from 1")
        if k < self.T:
            g = self.gamma_first - (self.gamma_first - self.gamma_last) * (k - 1) / (self.T - 1)
            return max(g, self.gamma_small)
        return self.gamma_small


class Linearization(NamedTuple):
    C: np.ndarray
    d: np.ndarray
    D: np.ndarray
    f: np.ndarray
    Q: np.ndarray
    h: np.ndarray


@dataclass
class IterationState:
    x: FilterBank
    k: int
    samples: dict = field(default_factory=dict)
    lin: Linearization = None
    rho: float = 0.0
    history: list = field(default_factory=list)

    def __post_init__(self):
        if self.lin is not None:
            nl = self.x.coeffs.size
            for name in ("C", "D", "Q"):
                if getattr(self.lin, name).shape[1] != nl:
                    raise ValueError(f"{name} block must have {nl} columns")


@dataclass
class IterativeDesignSpec:
    geometry: ArrayGeometry
    band: BandSpec
    n_taps: int
    stopband_ceiling: float
    wng_floor: Union[float, Callable] = 1.0
    tau_d: float = 0.0
    grid: GridConfig = field(default_factory=GridConfig)
    schedule: TrustSchedule = field(default_factory=TrustSchedule)
    W: float = 1000.0
    eps_f: float = 0.0
    max_iters: int = 50
    L_o: int = 5
    b_path: bool = True
    reg_weight: float = 0.01
    symmetry: bool = False
    M: int = 200
    K: int = 200
    verify_factor: int = 5
    exchange_rounds: int = 3
    tol: float = socp.DEFAULT_TOL

    def __post_init__(self):
        if self.W <= 0:
            raise ValueError("W must be positive")
        if self.max_iters < 1 or self.L_o < 1:
            raise ValueError("max_iters and L_o must be >= 1")

    def floor_at(self, omegas):
        omegas = np.asarray(omegas, float)
        f = self.wng_floor(omegas) if callable(self.wng_floor) else self.wng_floor
        return np.broadcast_to(np.asarray(f, float), omegas.shape)

    def convex_spec(self, reg_weight: float) -> ConvexDesignSpec:
        return ConvexDesignSpec(self.geometry, self.band, self.n_taps, self.stopband_ceiling, self.wng_floor,
                                self.tau_d, reg_weight, symmetry=self.symmetry, M=self.M, K=self.K,
                                tol=self.tol)

    def expansion(self) -> np.ndarray:
        N, L = self.geometry.n_mics, self.n_taps
        return symmetric_expansion(N, L) if self.symmetry else np.eye(N * L)


# --------------------------------------------------------------------------
# sample selection

class VirtualGrid:
    """Dense axes used for block-maximum selection."""

    def __init__(self, band: BandSpec, cfg: GridConfig):
        self.cfg = cfg
        self.omegas = np.linspace(*band.freq_band, cfg.P)
        self.pass_thetas = np.linspace(*band.passband, cfg.Q)
        widths = [b - a for a, b in band.stopband]
        self.stop_cfgs = split_config(cfg, widths)
        self.stop_thetas = [np.linspace(a, b, c.Q) for (a, b), c in zip(band.stopband, self.stop_cfgs)]


def select_samples(geom: ArrayGeometry, x, band: BandSpec, vg: VirtualGrid, tau_d: float = 0.0,
                   floor_fn=None):
    """Per-iteration sample sets and the virtual-grid error summary.

    Group-delay rows come from the block maxima of ``|e_g|``, passband
    magnitude rows from those of ``|e_r|`` and stopband rows from ``|B|``.
    WNG rows are the frequencies of smallest WNG-to-floor ratio in each of
    the ``M`` frequency blocks.  Points whose response is too
    small for a group delay are skipped in favour of the next-best point of
    their block.
    """
    c = as_coeffs(x, geom)
    cfg = vg.cfg
    if floor_fn is None:
        floor_fn = lambda om: np.ones_like(om)
    tau, ok = group_delay_grid(geom, c, vg.omegas, vg.pass_thetas)
    eg = np.abs(tau - tau_d)
    if not ok.all():
        log.info("%d virtual points skipped (response too small for a group delay)", int(np.sum(~ok)))
    Bp = response_grid(geom, c, vg.omegas, vg.pass_thetas)
    er = np.abs(np.abs(Bp) ** 2 - 1.0)
    gd = select_nonuniform(eg, cfg, vg.omegas, vg.pass_thetas, GROUP_DELAY)
    gd = gd.select(GROUP_DELAY) if ok.all() else _drop_nan(gd, ok)
    pb = select_nonuniform(er, cfg, vg.omegas, vg.pass_thetas, PASSBAND)
    sbs, smax = [], 0.0
    for th, scfg in zip(vg.stop_thetas, vg.stop_cfgs):
        Bs = np.abs(response_grid(geom, c, vg.omegas, th))
        smax = max(smax, float(Bs.max()))
        sbs.append(select_nonuniform(Bs, scfg, vg.omegas, th, STOPBAND))
    margin = wng_curve(geom, c, vg.omegas, band.steer_angle) / floor_fn(vg.omegas)
    # block_argmax maximizes |.|, so feed it the shortfall below the best margin
    rows, _ = block_argmax((margin.max() - margin)[:, None], axis_edges(cfg.P, cfg.M, cfg.edge), np.array([0, 1]))
    samples = {GROUP_DELAY: gd, PASSBAND: pb, STOPBAND: SampleSet.concat(sbs),
               WNG: SampleSet(vg.omegas[rows], band.steer_angle, WNG, 1.0, rows[:, None])}
    summary = {"gd_max": float(np.nanmax(eg)), "sigma_tau": float(np.nanmax(tau) - np.nanmin(tau)),
               "er_max": float(er.max()), "sb_max": smax, "wng_ratio_min": float(margin.min())}
    return samples, summary


def violators(geom: ArrayGeometry, x, samples: dict, gamma_pb: float, gamma_sb: float, floor_fn,
              rel: float = 1e-7) -> dict:
    """Points of ``samples`` where ``x`` breaks the passband, stopband or WNG bound."""
    c = as_coeffs(x, geom)
    out = {}
    p = samples[PASSBAND]
    er = np.abs(np.abs(response_points(geom, c, p.omega, p.theta)) ** 2 - 1.0)
    s = samples[STOPBAND]
    sb = np.abs(response_points(geom, c, s.omega, s.theta))
    w = samples[WNG]
    wr = wng_curve(geom, c, w.omega, float(w.theta[0])) / floor_fn(w.omega)
    for role, ss, bad in ((PASSBAND, p, er > gamma_pb * (1 + rel)), (STOPBAND, s, sb > gamma_sb * (1 + rel)),
                          (WNG, w, wr < 1 - rel)):
        if bad.any():
            out[role] = SampleSet(ss.omega[bad], ss.theta[bad], role, ss.weight[bad],
                                  None if ss.index is None else ss.index[bad])
    return out


def _drop_nan(s: SampleSet, ok):
    keep = ok[s.index[:, 0], s.index[:, 1]]
    return SampleSet(s.omega[keep], s.theta[keep], s.role[keep], s.weight[keep], s.index[keep])


# --------------------------------------------------------------------------
# one iteration

def linearize(geom: ArrayGeometry, x, samples: dict, tau_d: float = 0.0, floor=1.0) -> Linearization:
    """Values and gradients of ``e_g``, ``e_r`` and ``e_w`` at the sample points.

    ``samples`` maps roles to :class:`SampleSet`; ``floor`` is the linear
    WNG floor at the WNG frequencies (scalar, array or callable).
    """
    c = as_coeffs(x, geom)
    g = samples[GROUP_DELAY]
    tau, C = group_delay_rows(geom, c, g.omega, g.theta)
    p = samples[PASSBAND]
    f, D = magsq_rows(geom, c, p.omega, p.theta)
    w = samples[WNG]
    fl = floor(w.omega) if callable(floor) else floor
    h, Q = wng_rows(geom, c, w.omega, float(w.theta[0]), fl)
    return Linearization(C, tau - tau_d, D, f, Q, h)


def compute_gamma_pb(x_sol1, U_pb, d_pb, eps_f: float = 0.0) -> float:
    """``|| |U_pb x|^2 - |d_pb|^2 ||_inf + eps_f`` (``eps_f`` is signed)."""
    B = np.asarray(U_pb) @ np.asarray(x_sol1).reshape(-1)
    return float(np.max(np.abs(np.abs(B) ** 2 - np.abs(np.asarray(d_pb)) ** 2)) + eps_f)


def step_program_dense(lin: Linearization, U_sb, x, E, gamma_delta, gamma_pb, gamma_sb, W):
    """The per-iteration SOCP written directly in the reduced update ``y`` (``delta = E y``).

    Every row is dense in all coefficients.  :func:`step_program` builds the
    same program in lifted form; this version is kept as its reference.
    Returns ``(prog, t_index, rho_index)``.
    """
    x = np.asarray(x).reshape(-1)
    nv = E.shape[1]
    prog = socp.ConeProgram(nv)
    t, rho = (int(i) for i in prog.add_variables(2))
    prog.set_objective(t, 1.0)
    prog.set_objective(rho, W)
    cols = np.arange(nv)
    socp.add_real_linf(prog, lin.C @ E, lin.d, t, cols, tag="group-delay")
    F = np.zeros((len(lin.h), prog.n))
    F[:, :nv] = lin.Q @ E
    F[:, rho] = 1.0
    prog.add_nonneg(F, lin.h, tag="wng")
    socp.add_real_linf(prog, lin.D @ E, lin.f, (rho, gamma_pb), cols, tag="passband")
    Us = np.asarray(U_sb)
    socp.add_complex_linf_epigraph(prog, Us @ E, -(Us @ x), (rho, gamma_sb), cols, tag="stopband")
    _trust_and_slack(prog, sp.csr_matrix(E), rho, gamma_delta)
    return prog, t, rho


def _trust_and_slack(prog, E, rho, gamma_delta):
    nv = E.shape[1]
    top = sp.csr_matrix(([1.0], ([0], [rho])), shape=(1, prog.n))
    body = sp.hstack([E, sp.csr_matrix((E.shape[0], prog.n - nv))])
    g = np.zeros(E.shape[0] + 1)
    g[0] = gamma_delta
    prog.add_soc(sp.vstack([top, body]).tocsr(), g, E.shape[0] + 1, tag="trust")
    prog.add_nonneg(top, np.zeros(1), tag="slack")


class LiftedRows(NamedTuple):
    """Linearized rows in the coordinates ``a = [Re X, Im X, Re X', Im X']`` per frequency.

    ``X_n(w) = sum_l delta_{n,l} exp(-j w l)`` and ``X'_n = dX_n/dw``; ``T`` maps
    the update to the stacked ``a`` of all ``freqs``.  Each row touches the
    ``4N`` entries of a single frequency, which keeps the conic program sparse.
    ``sb_re``/``sb_im`` are the real and imaginary parts of the stopband response
    update, ``sb_value`` the current stopband response.
    """

    freqs: np.ndarray
    T: sp.csr_matrix
    gd: sp.csr_matrix
    d: np.ndarray
    pb: sp.csr_matrix
    f: np.ndarray
    wng: sp.csr_matrix
    h: np.ndarray
    sb_re: sp.csr_matrix
    sb_im: sp.csr_matrix
    sb_value: np.ndarray

    def dense(self, name: str) -> np.ndarray:
        """Rows of one block mapped back to the full coefficient vector."""
        return (getattr(self, name) @ self.T).toarray()


def _lift_map(freqs, n_mics: int, n_taps: int) -> sp.csr_matrix:
    nf, N, L = len(freqs), n_mics, n_taps
    l = np.arange(L)
    e = np.exp(-1j * np.outer(freqs, l))
    de = -1j * l * e
    V = np.stack([e.real, e.imag, de.real, de.imag], axis=1)               # (nf, 4, L)
    vals = np.broadcast_to(V[:, :, None, :], (nf, 4, N, L))
    rows = (np.arange(nf)[:, None, None, None] * 4 * N + np.arange(4)[None, :, None, None] * N
            + np.arange(N)[None, None, :, None])
    cols = np.arange(N)[None, None, :, None] * L + l
    rows, cols = np.broadcast_to(rows, vals.shape), np.broadcast_to(cols, vals.shape)
    return sp.csr_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=(nf * 4 * N, N * L))


def _aux_rows(fi, cX, cdX, n_mics: int, nf: int) -> sp.csr_matrix:
    """Real rows ``Re(sum_n cX_n dX_n + cdX_n dX'_n)`` over the stacked ``a`` coordinates."""
    N = n_mics
    P = len(fi)
    if cdX is None:
        cdX = np.zeros_like(cX)
    vals = np.concatenate([cX.real, -cX.imag, cdX.real, -cdX.imag], axis=1)   # (P, 4N)
    cols = fi[:, None] * 4 * N + np.arange(4 * N)
    rows = np.repeat(np.arange(P), 4 * N)
    return sp.csr_matrix((vals.ravel(), (rows, cols.ravel())), shape=(P, nf * 4 * N))


def lifted_rows(geom: ArrayGeometry, x, samples: dict, tau_d: float = 0.0, floor=1.0) -> LiftedRows:
    """The linearization of :func:`linearize` (plus the stopband rows) in lifted coordinates."""
    c = as_coeffs(x, geom)
    N, L = c.shape
    freqs = np.unique(np.concatenate([samples[r].omega for r in (GROUP_DELAY, PASSBAND, STOPBAND, WNG)]))
    nf = len(freqs)
    l = np.arange(L)
    e = np.exp(-1j * np.outer(freqs, l))
    Xf, dXf = e @ c.T, (-1j * l * e) @ c.T                                  # (nf, N)

    def at(ss):
        fi = np.searchsorted(freqs, ss.omega)
        D = geom.delays(ss.theta)
        p = np.exp(-1j * ss.omega[:, None] * D)
        return fi, D, p, Xf[fi], dXf[fi]

    fi, D, p, X, dX = at(samples[GROUP_DELAY])
    B = np.sum(p * X, axis=1)
    Bp = np.sum(p * (-1j * D * X + dX), axis=1)
    m2 = np.abs(B) ** 2
    if np.any(m2 < GD_GUARD * np.sum(c * c)):
        raise NearZeroResponse("response too small for a group delay at a sample point")
    q = np.imag(np.conj(B) * Bp)
    k1 = -1j * np.conj(Bp) / m2 + 2 * q * np.conj(B) / m2 ** 2
    k2 = 1j * np.conj(B) / m2
    gd = _aux_rows(fi, k1[:, None] * p + (k2[:, None] * p) * (-1j * D), k2[:, None] * p, N, nf)
    d = -q / m2 - tau_d

    fi, D, p, X, _ = at(samples[PASSBAND])
    B = np.sum(p * X, axis=1)
    pb = _aux_rows(fi, 2 * np.conj(B)[:, None] * p, None, N, nf)
    f = np.abs(B) ** 2 - 1.0

    ws = samples[WNG]
    fi, D, p, X, _ = at(ws)
    B = np.sum(p * X, axis=1)
    S = np.sum(np.abs(X) ** 2, axis=1)
    cw = 2 * np.conj(B)[:, None] * p / S[:, None] - (np.abs(B) ** 2 / S ** 2)[:, None] * 2 * np.conj(X)
    wng = _aux_rows(fi, cw, None, N, nf)
    fl = floor(ws.omega) if callable(floor) else np.broadcast_to(np.asarray(floor, float), ws.omega.shape)
    h = np.abs(B) ** 2 / S - fl

    fi, D, p, X, _ = at(samples[STOPBAND])
    sb_re = _aux_rows(fi, p, None, N, nf)
    sb_im = _aux_rows(fi, -1j * p, None, N, nf)
    return LiftedRows(freqs, _lift_map(freqs, N, L), gd, d, pb, f, wng, h, sb_re, sb_im,
                      np.sum(p * X, axis=1))


def step_program(rows: LiftedRows, E, gamma_delta, gamma_pb, gamma_sb, W):
    """The per-iteration SOCP in lifted form.

    Variables are the reduced update ``y`` (``delta = E y``), the epigraph
    bound ``t``, the slack ``rho`` and the lifted coordinates ``a = T E y``.
    Returns ``(prog, t_index, rho_index)``.
    """
    E = sp.csr_matrix(E)
    nv = E.shape[1]
    prog = socp.ConeProgram(nv)
    t, rho = (int(i) for i in prog.add_variables(2))
    na = rows.T.shape[0]
    a0 = int(prog.add_variables(na)[0])
    prog.set_objective(t, 1.0)
    prog.set_objective(rho, W)
    n = prog.n

    def wide(R):
        # place aux-coordinate rows at the aux columns
        R = sp.coo_matrix(R)
        return sp.csr_matrix((R.data, (R.row, R.col + a0)), shape=(R.shape[0], n))

    def unit(col, m):
        return sp.csr_matrix((np.ones(m), (np.arange(m), np.full(m, col))), shape=(m, n))

    TE = sp.coo_matrix(rows.T @ E)
    eq = sp.csr_matrix((np.concatenate([-TE.data, np.ones(na)]),
                        (np.concatenate([TE.row, np.arange(na)]), np.concatenate([TE.col, a0 + np.arange(na)]))),
                       shape=(na, n))
    prog.add_equality(eq, np.zeros(na), tag="lift")
    m = len(rows.d)
    G = wide(rows.gd)
    prog.add_nonneg(sp.vstack([unit(t, m) - G, unit(t, m) + G]).tocsr(), np.concatenate([-rows.d, rows.d]),
                    tag="group-delay")
    m = len(rows.h)
    prog.add_nonneg((wide(rows.wng) + unit(rho, m)).tocsr(), rows.h, tag="wng")
    m = len(rows.f)
    G = wide(rows.pb)
    prog.add_nonneg(sp.vstack([unit(rho, m) - G, unit(rho, m) + G]).tocsr(),
                    np.concatenate([gamma_pb - rows.f, gamma_pb + rows.f]), tag="passband")
    m = len(rows.sb_value)
    F = sp.vstack([unit(rho, m), wide(rows.sb_re), wide(rows.sb_im)]).tocsr()
    perm = np.arange(3 * m).reshape(3, m).T.ravel()
    g = np.stack([np.full(m, gamma_sb), rows.sb_value.real, rows.sb_value.imag], axis=1).ravel()
    prog.add_soc(F[perm], g, 3, tag="stopband")
    _trust_and_slack(prog, E, rho, gamma_delta)
    return prog, t, rho


def iterate_step(state: IterationState, schedule: TrustSchedule, gamma_pb: float, gamma_sb: float,
                 W: float, geom: ArrayGeometry, E=None, tau_d: float = 0.0, floor=1.0,
                 tol: float = socp.DEFAULT_TOL, lifted: bool = True):
    """Solve one linearized SOCP from ``state`` and return ``(next_state, info)``.

    ``state.samples`` and ``state.lin`` must be current.  A numerical
    failure is retried once with half the trust radius.  ``info["objective"]``
    is the predicted group-delay L-inf value once the slack is inactive and
    the full objective before; the caller extends ``history``.
    """
    x = state.x.flatten()
    if E is None:
        E = np.eye(len(x))
    gamma = schedule(state.k)
    if lifted:
        rows = lifted_rows(geom, state.x.coeffs, state.samples, tau_d, floor)
    else:
        sb = state.samples[STOPBAND]
        U_sb = steering_matrix(geom, state.x.n_taps, sb.omega, sb.theta)
    for attempt in range(2):
        if lifted:
            prog, ti, ri = step_program(rows, E, gamma, gamma_pb, gamma_sb, W)
        else:
            prog, ti, ri = step_program_dense(state.lin, U_sb, x, E, gamma, gamma_pb, gamma_sb, W)
        out = socp.solve(prog, tol)
        if out.status == socp.OPTIMAL:
            break
        if out.status == socp.INFEASIBLE:
            raise Infeasible(f"iteration {state.k}: step program infeasible", out)
        log.warning("iteration %d: %s, retrying with trust radius %.3g", state.k, out.status, gamma / 2)
        gamma /= 2
    else:
        raise SolverFailure(f"iteration {state.k}: step program failed twice ({out.solver_status})",
                            out, state)
    delta = E @ out.x[:E.shape[1]]
    rho = max(float(out.x[ri]), 0.0)
    gd = float(np.max(np.abs(state.lin.C @ delta + state.lin.d)))
    monitored = gd if rho < RHO_ACTIVE else gd + W * rho
    nxt = IterationState(FilterBank.from_flat(x + delta, state.x.n_mics, state.x.n_taps), state.k + 1,
                         history=list(state.history), rho=rho)
    info = {"k": state.k, "objective": monitored, "gd_pred": gd, "rho": rho,
            "step_norm": float(np.linalg.norm(delta)), "gamma_delta": gamma, "rows": prog.row_count(),
            "solver_iterations": out.iterations}
    return nxt, info


def merit(summary: dict, gamma_pb: float, gamma_sb: float, W: float) -> float:
    """Measured worst group-delay error plus ``W`` times the worst measured constraint violation.

    ``summary`` is the virtual-grid summary of :func:`select_samples`.  The
    violation terms mirror the slack of the step program: passband
    ``|e_r| - Gamma_pb``, stopband ``|B| - Gamma_sb`` and the WNG shortfall
    ``1 - G_w / Gamma_wng``.
    """
    viol = max(0.0, summary["er_max"] - gamma_pb, summary["sb_max"] - gamma_sb, 1.0 - summary["wng_ratio_min"])
    return summary["gd_max"] + W * viol


def should_stop(history, L_o: int) -> bool:
    """True when none of the last ``L_o`` values beats the minimum before them."""
    if len(history) <= L_o:
        return False
    return min(history[-L_o:]) >= min(history[:-L_o])


# --------------------------------------------------------------------------
# full pipeline

@dataclass
class PathResult:
    name: str
    bank: FilterBank
    start: FilterBank
    report: DesignReport
    trace: list
    gamma_pb: float
    iterations: int
    verified: dict


@dataclass
class IterativeResult:
    bank: FilterBank
    report: DesignReport
    chosen: str
    paths: dict

    @property
    def trace(self):
        return self.paths[self.chosen].trace


def verify_dense(spec: IterativeDesignSpec, x, gamma_pb: float, rel: float = 1e-4) -> dict:
    """Constraint check on a uniform grid ``verify_factor`` times denser than the design grid."""
    g, band = spec.geometry, spec.band
    M, K = spec.verify_factor * spec.M, spec.verify_factor * spec.K
    grid = uniform_grid(band, M, K)
    c = as_coeffs(x, g)
    er = float(np.max(np.abs(np.abs(response_grid(g, c, grid.omegas, grid.pass_thetas)) ** 2 - 1.0)))
    sb = float(np.max(np.abs(response_grid(g, c, grid.omegas, grid.stop_thetas))))
    wng = wng_curve(g, c, grid.omegas, band.steer_angle)
    wratio = float(np.min(wng / spec.floor_at(grid.omegas)))
    return {"er_max": er, "sb_max": sb, "wng_ratio_min": wratio,
            "ok": bool(er <= gamma_pb * (1 + rel) and sb <= spec.stopband_ceiling * (1 + rel)
                       and wratio >= 1 - rel)}


def run_path(spec: IterativeDesignSpec, x0: FilterBank, name: str = "A", trace_stream=None) -> PathResult:
    """Step 2 from ``x0``: iterate until the no-improvement rule or ``max_iters``."""
    g, band = spec.geometry, spec.band
    vg = VirtualGrid(band, spec.grid)
    grid = uniform_grid(band, spec.M, spec.K)
    U_pb = steering_matrix(g, spec.n_taps, *_mesh(grid.omegas, grid.pass_thetas))
    gamma_pb = compute_gamma_pb(x0.flatten(), U_pb, np.ones(U_pb.shape[0]), spec.eps_f)
    gamma_sb = spec.stopband_ceiling
    E = spec.expansion()
    state = IterationState(x0, 1)
    candidates = []          # (monitored objective, k, bank)
    trace = []
    samples, summ = select_samples(g, x0.coeffs, band, vg, spec.tau_d, spec.floor_at)
    for k in range(1, spec.max_iters + 1):
        x_k = state.x.coeffs
        work = dict(samples)
        for rnd in range(spec.exchange_rounds + 1):
            state.samples = work
            state.lin = linearize(g, x_k, work, spec.tau_d, spec.floor_at)
            nxt, info = iterate_step(state, spec.schedule, gamma_pb, gamma_sb, spec.W, g, E, spec.tau_d,
                                     spec.floor_at, spec.tol)
            samples_next, summ_next = select_samples(g, nxt.x.coeffs, band, vg, spec.tau_d, spec.floor_at)
            if info["rho"] >= RHO_ACTIVE or rnd == spec.exchange_rounds:
                break
            extra = violators(g, nxt.x.coeffs, samples_next, gamma_pb, gamma_sb, spec.floor_at)
            if not extra:
                break
            for role, pts in extra.items():
                work[role] = SampleSet.concat([work[role], pts])
        m = merit(summ_next, gamma_pb, gamma_sb, spec.W)
        nxt.history.append(m)
        info.update(path=name, exchange_rounds=rnd, merit=m, sigma_tau_est=summ["sigma_tau"],
                    gd_max_est=summ["gd_max"], er_max=summ["er_max"], sb_max=summ["sb_max"],
                    wng_ratio_min=summ["wng_ratio_min"])
        trace.append(info)
        if trace_stream is not None:
            trace_stream.write(json.dumps(info) + "\n")
        log.debug("%s k=%d obj=%.6g merit=%.6g rho=%.3g |d|=%.3g x%d sigma~%.4g er=%.6g sb=%.6g wng=%.6g", name,
                  k, info["objective"], m, info["rho"], info["step_norm"], rnd, summ_next["sigma_tau"],
                  summ_next["er_max"], summ_next["sb_max"], summ_next["wng_ratio_min"])
        state, samples, summ = nxt, samples_next, summ_next
        candidates.append((m, k, state.x))
        # no stopping while the trust radius is still ramping down: large steps
        # move the true constraints far from their linear models
        if k >= spec.schedule.T and should_stop(state.history, spec.L_o):
            break
    iterations = len(trace)
    # best monitored iterate that also passes the dense check; fall back to the best overall
    candidates.sort(key=lambda c: (c[0], c[1]))
    chosen, verified = None, None
    for obj, k, bank in candidates:
        v = verify_dense(spec, bank.coeffs, gamma_pb)
        if v["ok"]:
            chosen, verified = bank, dict(v, iteration=k)
            break
    if chosen is None:
        chosen = candidates[0][2] if candidates else state.x
        verified = dict(verify_dense(spec, chosen.coeffs, gamma_pb), iteration=candidates[0][1] if candidates else k)
    report = evaluate(g, chosen.coeffs, band, spec.tau_d, spec.M, spec.K, ITERATIVE,
                      {"path": name, "iterations": iterations, "gamma_pb": gamma_pb,
                       "selected_iteration": verified["iteration"], "dense_ok": verified["ok"],
                       "rows_per_iteration": trace[-1]["rows"] if trace else 0})
    return PathResult(name, chosen, x0, report, trace, gamma_pb, iterations, verified)


def _mesh(omegas, thetas):
    W, T = np.meshgrid(omegas, thetas, indexing="ij")
    return W.ravel(), T.ravel()


def run_two_step(spec: IterativeDesignSpec, trace_stream=None) -> IterativeResult:
    """Steps A-1/A-2 (regularized start), optionally B-1/B-2 (plain start), then pick by ``sigma_tau``."""
    starts = [("A", spec.reg_weight)]
    if spec.b_path:
        starts.append(("B", 0.0))
    paths, failures = {}, []
    for name, lam in starts:
        try:
            x0 = design_v1(spec.convex_spec(lam)).bank
        except Infeasible as e:
            failures.append(e)
            continue
        paths[name] = run_path(spec, x0, name, trace_stream)
    if not paths:
        raise Infeasible("step 1 is infeasible on every path", failures[0].outcome if failures else None)
    chosen = "A" if "A" in paths else "B"
    if "A" in paths and "B" in paths:
        sa, sb = paths["A"].report.sigma_tau, paths["B"].report.sigma_tau
        if sb < sa - TIE_TOL:
            chosen = "B"
    res = paths[chosen]
    res.report.provenance["chosen_path"] = chosen
    return IterativeResult(res.bank, res.report, chosen, paths)


def full_grid_row_count(spec: IterativeDesignSpec) -> int:
    """Rows of the lifted step program if every virtual point were a sample point."""
    P, Q = spec.grid.P, spec.grid.Q
    Qs = sum(c.Q for c in split_config(spec.grid, [b - a for a, b in spec.band.stopband]))
    nl = spec.geometry.n_mics * spec.n_taps
    lift = 4 * spec.geometry.n_mics * P
    return lift + 2 * P * Q + P + 2 * P * Q + 3 * P * Qs + (nl + 1) + 1
