"""Solver-agnostic second-order cone programs and their solution.

A :class:`ConeProgram` minimizes ``c^T z`` over a real vector ``z`` subject to

* equalities ``A z = b``,
* nonnegative rows ``F z + g >= 0``,
* second-order cones ``u = F z + g`` with ``||u[1:]||_2 <= u[0]`` (one block may
  hold many cones of the same dimension, stacked row-wise).

Complex constraint data is split into real and imaginary parts when the
constraint is added; the variable is always real.  Solving is delegated to
Clarabel; the returned :class:`SolveOutcome` carries residuals recomputed
here, independently of the solver's own report.

Plain-text dump format (``dump_program``)::

    # broadbeam cone program v1
    n <variables>
    block <id> <kind> <rows> <cone dim>     kind: obj | eq | nonneg | soc
    <id> <row> <col> <value>                one line per nonzero
    ...

For ``eq`` blocks the row reads ``A z = b``; for ``nonneg``/``soc`` blocks it
reads ``u = F z + g``.  The constant (``b`` or ``g``) is written in column
``-1``.  Block ``0`` is the objective ``c`` (a single row).
"""
from __future__ import annotations

from dataclasses import dataclass, field
import io
import time

import numpy as np
import scipy.sparse as sp

from .errors import DimensionMismatch, NonpositiveFloor

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
MAX_ITERATIONS = "max-iterations"
NUMERICAL_FAILURE = "numerical-failure"

DEFAULT_TOL = 1e-8


@dataclass
class ConeBlock:
    kind: str           # "eq" | "nonneg" | "soc"
    F: np.ndarray
    g: np.ndarray
    dim: int = 1
    tag: str = ""

    @property
    def rows(self) -> int:
        return self.F.shape[0]


class ConeProgram:
    """Linear objective plus equality, orthant and second-order cone blocks."""

    def __init__(self, n: int = 0):
        self.n = int(n)
        self.c = np.zeros(self.n)
        self.blocks: list = []

    def add_variables(self, k: int = 1) -> np.ndarray:
        """Append ``k`` variables (zero objective); returns their indices."""
        idx = np.arange(self.n, self.n + k)
        self.n += k
        self.c = np.concatenate([self.c, np.zeros(k)])
        return idx

    def _columns(self, F, cols):
        if sp.issparse(F):
            return self._sparse_columns(F, cols)
        F = np.atleast_2d(np.asarray(F, float))
        if cols is None:
            if F.shape[1] > self.n:
                raise DimensionMismatch(f"{F.shape[1]} columns for {self.n} variables")
            out = np.zeros((F.shape[0], self.n))
            out[:, :F.shape[1]] = F
            return out
        cols = np.asarray(cols, int).reshape(-1)
        if F.shape[1] != len(cols):
            raise DimensionMismatch(f"{F.shape[1]} columns but {len(cols)} column indices")
        out = np.zeros((F.shape[0], self.n))
        out[:, cols] = F
        return out

    def _sparse_columns(self, F, cols):
        F = sp.coo_matrix(F)
        if cols is None:
            if F.shape[1] > self.n:
                raise DimensionMismatch(f"{F.shape[1]} columns for {self.n} variables")
            return sp.csr_matrix((F.data, (F.row, F.col)), shape=(F.shape[0], self.n))
        cols = np.asarray(cols, int).reshape(-1)
        if F.shape[1] != len(cols):
            raise DimensionMismatch(f"{F.shape[1]} columns but {len(cols)} column indices")
        return sp.csr_matrix((F.data, (F.row, cols[F.col])), shape=(F.shape[0], self.n))

    def add_equality(self, A, b, cols=None, tag="eq"):
        A = self._columns(A, cols)
        b = np.asarray(b, float).reshape(-1)
        if len(b) != A.shape[0]:
            raise DimensionMismatch("equality rhs length differs from row count")
        self.blocks.append(ConeBlock("eq", A, b, 1, tag))

    def add_nonneg(self, F, g, cols=None, tag="nonneg"):
        F = self._columns(F, cols)
        g = np.asarray(g, float).reshape(-1)
        if len(g) != F.shape[0]:
            raise DimensionMismatch("constant length differs from row count")
        self.blocks.append(ConeBlock("nonneg", F, g, 1, tag))

    def add_soc(self, F, g, dim: int, cols=None, tag="soc"):
        F = self._columns(F, cols)
        g = np.asarray(g, float).reshape(-1)
        if dim < 1 or F.shape[0] % dim or len(g) != F.shape[0]:
            raise DimensionMismatch(f"{F.shape[0]} rows do not form cones of dimension {dim}")
        self.blocks.append(ConeBlock("soc", F, g, int(dim), tag))

    def set_objective(self, idx, coef=1.0):
        self.c[np.asarray(idx)] = coef

    def row_count(self, kinds=("eq", "nonneg", "soc")) -> int:
        return sum(b.rows for b in self.blocks if b.kind in kinds)

    def cone_count(self) -> int:
        return sum(b.rows // b.dim for b in self.blocks if b.kind != "eq")

    # assembled form --------------------------------------------------
    def padded(self, blk: ConeBlock):
        """Block matrix widened to the current variable count (sparse blocks stay sparse)."""
        if blk.F.shape[1] == self.n:
            return blk.F
        if sp.issparse(blk.F):
            F = sp.coo_matrix(blk.F)
            return sp.csr_matrix((F.data, (F.row, F.col)), shape=(F.shape[0], self.n))
        F = np.zeros((blk.F.shape[0], self.n))
        F[:, :blk.F.shape[1]] = blk.F
        return F

    def residuals(self, z) -> dict:
        """Scaled primal violations of a candidate point (0 when feasible)."""
        z = np.asarray(z, float)
        eq = lin = soc = 0.0
        for blk in self.blocks:
            u = self.padded(blk) @ z + blk.g
            if blk.kind == "eq":
                r = self.padded(blk) @ z - blk.g
                eq = max(eq, float(np.max(np.abs(r) / (1 + np.abs(blk.g)))))
            elif blk.kind == "nonneg":
                lin = max(lin, float(np.max(-u / (1 + np.abs(blk.g)), initial=0.0)))
            else:
                U = u.reshape(-1, blk.dim)
                G = blk.g.reshape(-1, blk.dim)
                v = np.linalg.norm(U[:, 1:], axis=1) - U[:, 0]
                soc = max(soc, float(np.max(v / (1 + np.linalg.norm(G, axis=1)), initial=0.0)))
        return {"equality": eq, "linear": lin, "cone": soc}


@dataclass
class SolveOutcome:
    status: str
    x: np.ndarray = None
    objective: float = float("nan")
    iterations: int = 0
    residuals: dict = field(default_factory=dict)
    solver_status: str = ""
    solve_time: float = 0.0
    dual: np.ndarray = None
    info: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


# --------------------------------------------------------------------------
# constraint builders

def _bound_column(prog, bound):
    """Coefficient row and constant for a bound given as variable index or constant."""
    col = np.zeros(prog.n)
    if isinstance(bound, (int, np.integer)):
        col[int(bound)] = 1.0
        return col, 0.0
    if isinstance(bound, tuple):           # (variable index, constant offset)
        col[int(bound[0])] = 1.0
        return col, float(bound[1])
    return col, float(bound)


def add_complex_linf_epigraph(prog: ConeProgram, rows, rhs, bound, cols=None, tag="linf"):
    """``|rows_i^T z - rhs_i| <= bound`` for every row.

    ``bound`` is a variable index, a constant, or ``(index, constant)`` meaning
    ``z[index] + constant``.  Complex rows become 3-dimensional cones; rows
    with no imaginary part become pairs of linear inequalities.
    """
    rows = np.atleast_2d(np.asarray(rows))
    rhs = np.broadcast_to(np.asarray(rhs), (rows.shape[0],)) if np.ndim(rhs) == 0 else np.asarray(rhs).reshape(-1)
    if rows.shape[0] < 1:
        raise DimensionMismatch("need at least one row")
    if len(rhs) != rows.shape[0]:
        raise DimensionMismatch(f"{rows.shape[0]} rows but {len(rhs)} right-hand sides")
    R = prog._columns(np.real(rows), cols)
    bcol, bconst = _bound_column(prog, bound)
    m = rows.shape[0]
    if not (np.iscomplexobj(rows) and np.any(np.imag(rows))) and not np.any(np.imag(rhs)):
        d = np.real(rhs)
        F = np.vstack([bcol - R, bcol + R])
        g = np.concatenate([bconst + d, bconst - d])
        prog.add_nonneg(F, g, tag=tag)
        return
    I = prog._columns(np.imag(rows), cols)
    F = np.empty((3 * m, prog.n))
    g = np.empty(3 * m)
    F[0::3] = bcol
    g[0::3] = bconst
    F[1::3], g[1::3] = R, -np.real(rhs)
    F[2::3], g[2::3] = I, -np.imag(rhs)
    prog.add_soc(F, g, 3, tag=tag)


def add_real_linf(prog: ConeProgram, rows, rhs_const, bound, cols=None, tag="linf"):
    """``|rows z + rhs_const| <= bound`` as linear inequality pairs (note the ``+``)."""
    add_complex_linf_epigraph(prog, np.real(rows), -np.real(np.asarray(rhs_const)), bound, cols, tag)


def add_wng_cone(prog: ConeProgram, A_omega, steer_row, tau_d: float, omega: float, floor: float,
                 cols=None, tag="wng"):
    """``sqrt(floor) ||A(w) z||_2 <= Re[exp(j w tau_d) g^T z]`` as one ``(2N+1)``-dim cone."""
    if not floor > 0:
        raise NonpositiveFloor(f"WNG floor must be positive, got {floor}")
    A_omega = np.atleast_2d(np.asarray(A_omega))
    steer_row = np.asarray(steer_row).reshape(-1)
    if A_omega.shape[1] != len(steer_row):
        raise DimensionMismatch("A(omega) and steering row disagree in length")
    s = np.sqrt(floor)
    head = np.real(np.exp(1j * omega * tau_d) * steer_row)[None, :]
    F = np.vstack([head, s * np.real(A_omega), s * np.imag(A_omega)])
    prog.add_soc(prog._columns(F, cols), np.zeros(F.shape[0]), F.shape[0], tag=tag)


# --------------------------------------------------------------------------
# solving

_STATUS = {
    "Solved": OPTIMAL,
    "PrimalInfeasible": INFEASIBLE,
    "AlmostPrimalInfeasible": INFEASIBLE,
    "MaxIterations": MAX_ITERATIONS,
    "MaxTime": MAX_ITERATIONS,
}


def _assemble(prog: ConeProgram):
    import clarabel

    order = [b for b in prog.blocks if b.kind == "eq"] + \
            [b for b in prog.blocks if b.kind == "nonneg"] + \
            [b for b in prog.blocks if b.kind == "soc"]
    As, bs, cones = [], [], []
    for blk in order:
        F = prog.padded(blk)
        if blk.kind == "eq":
            As.append(F)
            bs.append(blk.g)
            cones.append(clarabel.ZeroConeT(blk.rows))
        elif blk.kind == "nonneg":
            As.append(-F)
            bs.append(blk.g)
            cones.append(clarabel.NonnegativeConeT(blk.rows))
        else:
            As.append(-F)
            bs.append(blk.g)
            cones.extend([clarabel.SecondOrderConeT(blk.dim)] * (blk.rows // blk.dim))
    A = sp.vstack([sp.csr_matrix(a) for a in As]).tocsc() if As else sp.csc_matrix((0, prog.n))
    b = np.concatenate(bs) if bs else np.zeros(0)
    return A, b, cones, order


# Settings tried in turn when a solve ends in a numerical failure.  The
# minimax programs here are dense and nearly degenerate (many almost identical
# active rows), which occasionally defeats one factorization path but not another.
PROFILES = (
    {},
    {"direct_solve_method": "qdldl"},
    {"max_step_fraction": 0.95},
    {"static_regularization_constant": 1e-7},
    {"equilibrate_enable": False, "direct_solve_method": "qdldl"},
)


def solve(prog: ConeProgram, tol: float = DEFAULT_TOL, max_iter: int = 200, verbose: bool = False) -> SolveOutcome:
    """Solve with Clarabel and report a status from :data:`OPTIMAL`, :data:`INFEASIBLE`, ...

    A result is only ``optimal`` when the recomputed primal violations are at
    most ``max(10*tol, 1e-7)``; Clarabel's reduced-accuracy statuses are
    accepted under the same check plus a relative duality gap of ``1e-6``.
    Anything else is a ``numerical-failure`` rather than a silent answer.
    Numerical failures are retried with the alternative settings in
    :data:`PROFILES` before giving up.
    """
    A, b, cones, order = _assemble(prog)
    out = None
    for k, profile in enumerate(PROFILES):
        out = _solve_once(prog, A, b, cones, order, profile, tol, max_iter, verbose)
        out.info["profile"] = k
        if out.status != NUMERICAL_FAILURE:
            break
    return out


def _solve_once(prog, A, b, cones, order, profile, tol, max_iter, verbose):
    import clarabel

    settings = clarabel.DefaultSettings()
    settings.verbose = verbose
    settings.max_iter = max_iter
    settings.tol_gap_abs = tol
    settings.tol_gap_rel = tol
    settings.tol_feas = tol
    settings.tol_infeas_abs = tol
    settings.tol_infeas_rel = tol
    settings.presolve_enable = False
    for key, val in profile.items():
        setattr(settings, key, val)
    P = sp.csc_matrix((prog.n, prog.n))
    t0 = time.perf_counter()
    sol = clarabel.DefaultSolver(P, prog.c.copy(), A, b, cones, settings).solve()
    elapsed = time.perf_counter() - t0
    raw = str(sol.status)
    status = _STATUS.get(raw, NUMERICAL_FAILURE)
    x = np.asarray(sol.x, float)
    z = np.asarray(sol.z, float)
    out = SolveOutcome(status, x, float(prog.c @ x), int(sol.iterations), {}, raw, elapsed, z)
    if status == INFEASIBLE:
        # Farkas certificate: A^T z = 0, b^T z < 0 with z in the dual cone
        scale = max(abs(b @ z), 1e-300)
        out.residuals = {"certificate": float(np.linalg.norm(A.T @ z, np.inf) / scale),
                         "certificate_bz": float(b @ z)}
        out.info["blocks"] = _certificate_weights(order, z)
        out.x = None
        return out
    res = prog.residuals(x)
    gap = abs(prog.c @ x + b @ z) / (1 + abs(prog.c @ x))
    res["gap"] = float(gap)
    res["dual"] = float(np.linalg.norm(A.T @ z + prog.c, np.inf) / (1 + np.linalg.norm(prog.c, np.inf)))
    out.residuals = res
    primal_ok = max(res["equality"], res["linear"], res["cone"]) <= max(10 * tol, 1e-7)
    if status == OPTIMAL and not primal_ok:
        out.status = NUMERICAL_FAILURE
    elif raw.startswith("Almost") and status != INFEASIBLE:
        out.status = OPTIMAL if (primal_ok and gap <= 1e-6) else NUMERICAL_FAILURE
        out.info["reduced_accuracy"] = True
    return out


def _certificate_weights(order, z) -> dict:
    """Share of the infeasibility certificate carried by each tagged block."""
    w, off = {}, 0
    for blk in order:
        seg = z[off:off + blk.rows]
        off += blk.rows
        w[blk.tag] = w.get(blk.tag, 0.0) + float(np.sum(np.abs(seg)))
    tot = sum(w.values()) or 1.0
    return {k: v / tot for k, v in w.items()}


# --------------------------------------------------------------------------
# debug dump

def dump_program(prog: ConeProgram, stream=None) -> str:
    """Write ``prog`` in the documented sparse text format; returns the text when no stream is given."""
    own = stream is None
    out = io.StringIO() if own else stream
    out.write("# broadbeam cone program v1\n")
    out.write(f"n {prog.n}\n")
    out.write(f"block 0 obj 1 1\n")
    for j in np.flatnonzero(prog.c):
        out.write(f"0 0 {j} {float(prog.c[j])!r}\n")
    for i, blk in enumerate(prog.blocks, start=1):
        out.write(f"block {i} {blk.kind} {blk.rows} {blk.dim}\n")
        F = sp.coo_matrix(prog.padded(blk))
        F.sum_duplicates()
        for a, bb, v in sorted(zip(F.row, F.col, F.data)):
            if v != 0:
                out.write(f"{i} {a} {bb} {float(v)!r}\n")
        for a in np.flatnonzero(blk.g):
            out.write(f"{i} {a} -1 {float(blk.g[a])!r}\n")
    return out.getvalue() if own else ""


def load_program(text: str) -> ConeProgram:
    """Inverse of :func:`dump_program`."""
    prog = None
    meta = {}
    data = {}
    for line in text.splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] == "n":
            prog = ConeProgram(int(parts[1]))
        elif parts[0] == "block":
            i = int(parts[1])
            meta[i] = (parts[2], int(parts[3]), int(parts[4]))
            data[i] = []
        else:
            data[int(parts[0])].append((int(parts[1]), int(parts[2]), float(parts[3])))
    for i in sorted(meta):
        kind, rows, dim = meta[i]
        if kind == "obj":
            for _, col, v in data[i]:
                prog.c[col] = v
            continue
        F = np.zeros((rows, prog.n))
        g = np.zeros(rows)
        for r, col, v in data[i]:
            if col < 0:
                g[r] = v
            else:
                F[r, col] = v
        prog.blocks.append(ConeBlock(kind, F, g, dim))
    return prog
