"""Dense linear programming: a two-phase revised simplex solver.

The solver targets the small, dense programs produced by the DEA encoder.
Pricing uses Dantzig's rule and switches permanently to Bland's rule once a
run of degenerate pivots exceeds ``stall_limit``, which guarantees
termination on cycling-prone instances.
"""

from __future__ import annotations

import enum
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor, lu_solve

__all__ = [
    "DimensionMismatch",
    "LinearProgram",
    "LpSolution",
    "LpStatus",
    "NumericalBreakdown",
    "dump_lp",
    "load_lp",
    "solve",
]


class DimensionMismatch(ValueError):
    pass


class NumericalBreakdown(ArithmeticError):
    pass


class LpStatus(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"


_RELATIONS = ("<=", ">=", "=")


@dataclass(frozen=True, eq=False)
class LinearProgram:
    """Linear program ``sense c'x + offset`` s.t. ``A x (rel) b``, ``lb <= x <= ub``.

    Parameters
    ----------
    c : array_like, shape (n,)
        Objective coefficients.
    A : array_like, shape (m, n)
        Dense constraint matrix.
    b : array_like, shape (m,)
        Right-hand side.
    relations : sequence of {"<=", ">=", "="}, optional
        Row relations; all equalities when omitted.
    lb, ub : array_like, optional
        Variable bounds. Defaults are ``0`` and ``+inf``. Infinite values are
        allowed on either side.
    sense : {"min", "max"}
    offset : float
        Constant added to the objective.
    """

    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    relations: tuple[str, ...] = ()
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None
    sense: str = "min"
    offset: float = 0.0
    names: tuple[str, ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).ravel()
        n = c.size
        A = np.asarray(self.A, dtype=float)
        if A.size == 0:
            A = A.reshape(0, n)
        b = np.asarray(self.b, dtype=float).ravel()
        if A.ndim != 2 or A.shape[1] != n:
            raise DimensionMismatch(f"A has shape {A.shape}, expected (m, {n})")
        if b.size != A.shape[0]:
            raise DimensionMismatch(f"b has length {b.size}, A has {A.shape[0]} rows")
        rel = tuple(self.relations) if self.relations else ("=",) * A.shape[0]
        if len(rel) != A.shape[0]:
            raise DimensionMismatch("one relation per constraint row is required")
        bad = [r for r in rel if r not in _RELATIONS]
        if bad:
            raise ValueError(f"unknown relation(s) {bad}")
        lb = np.zeros(n) if self.lb is None else np.asarray(self.lb, dtype=float).ravel()
        ub = np.full(n, np.inf) if self.ub is None else np.asarray(self.ub, dtype=float).ravel()
        if lb.size != n or ub.size != n:
            raise DimensionMismatch("bounds must have one entry per variable")
        if self.sense not in ("min", "max"):
            raise ValueError("sense must be 'min' or 'max'")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise ValueError("objective, matrix and rhs must be finite")
        if np.any(np.isnan(lb)) or np.any(np.isnan(ub)) or np.any(lb > ub):
            raise ValueError("each lower bound must not exceed its upper bound")
        for name, value in (("c", c), ("A", A), ("b", b), ("lb", lb), ("ub", ub)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        object.__setattr__(self, "relations", rel)

    @property
    def shape(self) -> tuple[int, int]:
        return self.A.shape

    def evaluate(self, x) -> float:
        return float(self.c @ np.asarray(x, dtype=float) + self.offset)

    def residuals(self, x) -> np.ndarray:
        """Constraint violation per row (zero when satisfied)."""
        ax = self.A @ np.asarray(x, dtype=float) - self.b
        out = np.empty_like(ax)
        for i, rel in enumerate(self.relations):
            if rel == "=":
                out[i] = abs(ax[i])
            elif rel == "<=":
                out[i] = max(ax[i], 0.0)
            else:
                out[i] = max(-ax[i], 0.0)
        return out


@dataclass(frozen=True, eq=False)
class LpSolution:
    """Result of :func:`solve`.

    ``duals`` are the multipliers of the original rows and ``reduced_costs``
    equal ``c - A'duals``; for a minimisation, ``<=`` rows carry nonpositive
    and ``>=`` rows nonnegative multipliers. For maximisation the signs flip.
    ``ray`` is a direction of unbounded improvement when the status is
    :attr:`LpStatus.UNBOUNDED`.
    """

    status: LpStatus
    x: np.ndarray | None
    objective: float
    duals: np.ndarray | None
    reduced_costs: np.ndarray | None
    dual_objective: float
    iterations: int
    ray: np.ndarray | None = None
    bland: bool = False

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL

    @property
    def duality_gap(self) -> float:
        return abs(self.objective - self.dual_objective)


class _Unbounded(Exception):
    def __init__(self, column, direction):
        self.column = column
        self.direction = direction


@dataclass
class _Standard:
    """``min c'z`` s.t. ``A z = b``, ``z >= 0`` plus the map back to the user's x."""

    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    # x = x0 + T z[:n_struct]
    x0: np.ndarray
    T: np.ndarray
    const: float
    row_sign: np.ndarray
    n_orig_rows: int
    n_struct: int


def _standardize(lp: LinearProgram) -> _Standard:
    n = lp.c.size
    sign = 1.0 if lp.sense == "min" else -1.0
    c = sign * lp.c

    # z-columns for every x_j: shifted, mirrored or split
    x0 = np.zeros(n)
    cols: list[tuple[int, float]] = []
    ub_rows: list[tuple[int, float]] = []
    for j in range(n):
        lo, hi = lp.lb[j], lp.ub[j]
        if np.isfinite(lo):
            x0[j] = lo
            cols.append((j, 1.0))
            if np.isfinite(hi):
                ub_rows.append((len(cols) - 1, hi - lo))
        elif np.isfinite(hi):
            x0[j] = hi
            cols.append((j, -1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    nz = len(cols)
    T = np.zeros((n, nz))
    for k, (j, s) in enumerate(cols):
        T[j, k] = s

    m = lp.A.shape[0]
    A_struct = lp.A @ T
    b = lp.b - lp.A @ x0
    c_z = c @ T
    const = float(c @ x0)

    rels = list(lp.relations)
    if ub_rows:
        extra = np.zeros((len(ub_rows), nz))
        for r, (k, cap) in enumerate(ub_rows):
            extra[r, k] = 1.0
        A_struct = np.vstack([A_struct, extra])
        b = np.concatenate([b, [cap for _, cap in ub_rows]])
        rels += ["<="] * len(ub_rows)

    n_slack = sum(r != "=" for r in rels)
    rows = A_struct.shape[0]
    A_std = np.zeros((rows, nz + n_slack))
    A_std[:, :nz] = A_struct
    k = nz
    for i, rel in enumerate(rels):
        if rel == "<=":
            A_std[i, k] = 1.0
            k += 1
        elif rel == ">=":
            A_std[i, k] = -1.0
            k += 1
    row_sign = np.where(b < 0, -1.0, 1.0)
    A_std *= row_sign[:, None]
    b = b * row_sign
    c_std = np.concatenate([c_z, np.zeros(n_slack)])
    return _Standard(A_std, b, c_std, x0, T, const, row_sign, m, nz)


class _Simplex:
    """Revised simplex on ``min c'z, A z = b, z >= 0`` with a given feasible basis."""

    def __init__(self, A, b, c, basis, tol, stall_limit, max_iter, iterations=0, bland=False):
        self.A = A
        self.b = b
        self.c = c
        self.basis = list(basis)
        self.tol = tol
        self.stall_limit = stall_limit
        self.max_iter = max_iter
        self.iterations = iterations
        self.bland = bland
        self._scale = max(1.0, float(np.max(np.abs(c)))) if c.size else 1.0

    def factor(self):
        B = self.A[:, self.basis]
        lu = lu_factor(B, check_finite=False)
        diag = np.abs(np.diag(lu[0]))
        if diag.size and diag.min() <= 1e-13 * max(1.0, diag.max()):
            raise NumericalBreakdown("basis matrix became singular")
        return lu

    def primal(self, lu):
        return lu_solve(lu, self.b, check_finite=False)

    def run(self, allowed=None):
        m, n = self.A.shape
        stall = 0
        piv_tol = 1e-11
        while True:
            lu = self.factor()
            xB = self.primal(lu)
            y = lu_solve(lu, self.c[self.basis], trans=1, check_finite=False)
            d = self.c - self.A.T @ y
            is_basic = np.zeros(n, dtype=bool)
            is_basic[self.basis] = True
            mask = ~is_basic
            if allowed is not None:
                mask &= allowed
            candidates = np.flatnonzero(mask & (d < -self.tol * self._scale))
            if candidates.size == 0:
                return xB, y
            if self.iterations >= self.max_iter:
                raise NumericalBreakdown(f"iteration limit {self.max_iter} reached")
            q = candidates[0] if self.bland else candidates[np.argmin(d[candidates])]
            u = lu_solve(lu, self.A[:, q], check_finite=False)
            pos = np.flatnonzero(u > piv_tol)
            if pos.size == 0:
                direction = np.zeros(n)
                direction[q] = 1.0
                direction[self.basis] = -u
                raise _Unbounded(q, direction)
            ratios = np.maximum(xB[pos], 0.0) / u[pos]
            best = ratios.min()
            ties = pos[ratios <= best + 1e-12 * max(1.0, best)]
            if self.bland:
                r = min(ties, key=lambda i: self.basis[i])
            else:
                r = ties[np.argmax(u[ties])]
            if u[r] < 1e-9 and self.bland:
                raise NumericalBreakdown(f"pivot {u[r]:.3e} below threshold")
            stall = stall + 1 if best <= self.tol else 0
            if stall > self.stall_limit:
                self.bland = True
            self.basis[r] = q
            self.iterations += 1


def solve(lp: LinearProgram, tol: float = 1e-9, *, stall_limit: int = 50,
          max_iter: int | None = None) -> LpSolution:
    """Solve ``lp`` with the two-phase revised simplex method.

    Parameters
    ----------
    lp : LinearProgram
    tol : float
        Absolute tolerance on residuals, reduced costs and the phase-one
        infeasibility measure.
    stall_limit : int
        Consecutive degenerate pivots tolerated before switching to Bland's
        rule for the rest of the solve.
    max_iter : int, optional
        Defaults to ``50 * (m + n)`` of the standard form.

    Returns
    -------
    LpSolution
    """
    std = _standardize(lp)
    A, b, c = std.A, std.b, std.c
    # zero rows: either redundant or a certificate of infeasibility
    nonempty = np.any(np.abs(A) > 0, axis=1)
    if np.any(~nonempty & (np.abs(b) > tol)):
        return _infeasible(lp, 0)
    keep = np.flatnonzero(nonempty)
    A, b = A[keep], b[keep]
    m, n = A.shape
    if max_iter is None:
        max_iter = 50 * (m + n) + 100

    # phase one: artificial identity basis
    A1 = np.hstack([A, np.eye(m)])
    c1 = np.concatenate([np.zeros(n), np.ones(m)])
    phase1 = _Simplex(A1, b, c1, range(n, n + m), tol, stall_limit, max_iter)
    phase1._scale = 1.0
    try:
        xB, _ = phase1.run()
    except _Unbounded as exc:  # pragma: no cover - phase one is bounded below
        raise NumericalBreakdown("phase one reported unbounded") from exc
    infeas = float(np.sum(xB[np.array(phase1.basis) >= n]))
    if infeas > tol * max(1.0, float(np.max(np.abs(b), initial=0.0))):
        return _infeasible(lp, phase1.iterations)

    # drive artificial columns out of the basis; drop redundant rows
    basis = list(phase1.basis)
    rows = list(range(m))
    i = 0
    while i < len(basis):
        if basis[i] < n:
            i += 1
            continue
        e = np.zeros(len(basis))
        e[i] = 1.0
        Bsub = A1[np.ix_(rows, basis)]
        row_inv = np.linalg.solve(Bsub.T, e)
        alpha = row_inv @ A1[rows, :n]
        alpha[basis[:i] + [j for j in basis[i + 1:] if j < n]] = 0.0
        j = int(np.argmax(np.abs(alpha)))
        if abs(alpha[j]) > 1e-9:
            basis[i] = j
            i += 1
        else:
            rows.remove(basis[i] - n)
            del basis[i]
    A2 = A[rows]
    b2 = b[rows]
    phase2 = _Simplex(A2, b2, c, basis, tol, stall_limit, max_iter,
                      iterations=phase1.iterations, bland=phase1.bland)
    try:
        xB, y = phase2.run()
    except _Unbounded as exc:
        ray = std.T @ exc.direction[: std.n_struct]
        return LpSolution(LpStatus.UNBOUNDED, None,
                          np.inf if lp.sense == "max" else -np.inf,
                          None, None, np.nan, phase2.iterations, ray=ray, bland=phase2.bland)

    z = np.zeros(n)
    z[phase2.basis] = np.maximum(xB, 0.0)
    x = std.x0 + std.T @ z[: std.n_struct]
    # clip roundoff against finite bounds
    x = np.minimum(np.maximum(x, lp.lb), lp.ub)

    y_full = np.zeros(std.A.shape[0])
    y_full[keep[rows]] = y
    y_full *= std.row_sign
    sgn = 1.0 if lp.sense == "min" else -1.0
    duals = sgn * y_full[: std.n_orig_rows]
    dual_std = float(b2 @ y) + std.const
    reduced = lp.c - lp.A.T @ duals
    return LpSolution(
        LpStatus.OPTIMAL,
        x,
        lp.evaluate(x),
        duals,
        reduced,
        sgn * dual_std + lp.offset,
        phase2.iterations,
        bland=phase2.bland,
    )


def _infeasible(lp: LinearProgram, iterations: int) -> LpSolution:
    return LpSolution(LpStatus.INFEASIBLE, None, np.nan, None, None, np.nan, iterations)


def dump_lp(lp: LinearProgram) -> str:
    """Render ``lp`` in a fixed plain-text layout for cross-checking.

    Layout, one item per line::

        SENSE min|max
        OFFSET <float>
        DIM <m> <n>
        C <c_1> ... <c_n>
        ROW <a_i1> ... <a_in> <rel> <b_i>      (m lines)
        LB <lb_1> ... <lb_n>
        UB <ub_1> ... <ub_n>

    Floats are written with ``repr`` so the dump round-trips exactly.
    """
    buf = io.StringIO()
    fmt = lambda v: " ".join(repr(float(t)) for t in v)  # noqa: E731
    m, n = lp.shape
    buf.write(f"SENSE {lp.sense}\nOFFSET {float(lp.offset)!r}\nDIM {m} {n}\n")
    buf.write(f"C {fmt(lp.c)}\n")
    for i in range(m):
        buf.write(f"ROW {fmt(lp.A[i])} {lp.relations[i]} {float(lp.b[i])!r}\n")
    buf.write(f"LB {fmt(lp.lb)}\nUB {fmt(lp.ub)}\n")
    return buf.getvalue()


def load_lp(text: str) -> LinearProgram:
    """Parse the layout written by :func:`dump_lp`."""
    lines = [ln.split() for ln in text.strip().splitlines() if ln.strip()]
    head = {ln[0]: ln[1:] for ln in lines if ln[0] != "ROW"}
    m, n = (int(v) for v in head["DIM"])
    rows = [ln[1:] for ln in lines if ln[0] == "ROW"]
    if len(rows) != m:
        raise DimensionMismatch(f"expected {m} ROW lines, found {len(rows)}")
    A = np.array([[float(v) for v in r[:n]] for r in rows]).reshape(m, n)
    rel = tuple(r[n] for r in rows)
    b = np.array([float(r[n + 1]) for r in rows])
    return LinearProgram(
        c=np.array([float(v) for v in head["C"]]),
        A=A, b=b, relations=rel,
        lb=np.array([float(v) for v in head["LB"]]),
        ub=np.array([float(v) for v in head["UB"]]),
        sense=head["SENSE"][0],
        offset=float(head["OFFSET"][0]),
    )
