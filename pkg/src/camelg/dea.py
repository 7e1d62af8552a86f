"""Slack-based DEA with desirable and undesirable inputs and outputs.

Each bank-year is a decision-making unit (DMU) compared against the banks of
the same year. With ``X`` the peers' data and ``x0`` the evaluated DMU, the
benchmark constraints are::

    desirable inputs      x0 * l = X Λ + s_g-
    undesirable inputs    x0 * l = X Λ - s_b-
    desirable outputs     y0 * l = Y Λ - s_g+
    undesirable outputs   y0 * l = Y Λ + s_b+

The output-oriented score is ``1 / (1 + mean(s+ / y0))`` over all output
slacks (``l = 1``). The input-oriented score is ``1 - mean(s- / x0)``. The
non-oriented score is the ratio of the two, linearised by the Charnes-Cooper
substitution ``Λ = l λ``, with the scaled denominator fixed to one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .lpcore import LinearProgram, LpStatus, NumericalBreakdown, solve
from .panelstore import PanelDataset, parse_keyvalue

__all__ = [
    "DeaError",
    "DeaSpec",
    "EfficiencyPanel",
    "MissingCell",
    "UnsolvedCell",
    "ZeroDenominator",
    "build_dmu_lp",
    "efficiency",
    "projection",
]

ORIENTATIONS = ("output", "input", "non-oriented")
ROLES = ("desirable_inputs", "undesirable_inputs", "desirable_outputs", "undesirable_outputs")
# sign of the slack in "x0 * l = X Λ + sign * s"
_SLACK_SIGN = {
    "desirable_inputs": 1.0,
    "undesirable_inputs": -1.0,
    "desirable_outputs": -1.0,
    "undesirable_outputs": 1.0,
}


class DeaError(RuntimeError):
    pass


class MissingCell(DeaError):
    pass


class ZeroDenominator(DeaError):
    pass


class UnsolvedCell(DeaError):
    pass


def _names(value) -> tuple[str, ...]:
    if value is None:
        return ()
    if isinstance(value, str):
        return tuple(v.strip() for v in value.split(",") if v.strip())
    return tuple(value)


@dataclass(frozen=True)
class DeaSpec:
    """Variable roles and model options.

    The defaults are the CAMELG assignment: capital (total assets) and asset
    quality (equity) as desirable inputs; management (operating profit),
    earnings (comprehensive income) and growth as desirable outputs; bad loans
    as the undesirable output.
    """

    desirable_inputs: tuple[str, ...] = ("total_assets", "shareholders_equity")
    undesirable_inputs: tuple[str, ...] = ()
    desirable_outputs: tuple[str, ...] = (
        "net_operating_profit", "total_comprehensive_income", "growth")
    undesirable_outputs: tuple[str, ...] = ("uncollectible_loans",)
    orientation: str = "output"
    dynamic: bool = False
    clamp_tol: float = 1e-12
    lp_tol: float = 1e-9
    shift_nonpositive: bool = True
    shift_buffer: float = 0.01
    l_min: float = 1e-9

    def __post_init__(self):
        for role in ROLES:
            object.__setattr__(self, role, _names(getattr(self, role)))
        if len(self.desirable_inputs) < 1:
            raise ValueError("at least one desirable input is required")
        if len(self.desirable_outputs) < 1:
            raise ValueError("at least one desirable output is required")
        seen: dict[str, str] = {}
        for role in ROLES:
            for var in getattr(self, role):
                if var in seen:
                    raise ValueError(f"{var!r} assigned to both {seen[var]} and {role}")
                seen[var] = role
        if self.orientation not in ORIENTATIONS:
            raise ValueError(f"orientation must be one of {ORIENTATIONS}")
        if self.dynamic and self.orientation == "non-oriented":
            raise ValueError("dynamic mode supports the output and input orientations")

    @property
    def variables(self) -> tuple[str, ...]:
        return tuple(v for role in ROLES for v in getattr(self, role))

    @property
    def m(self) -> int:
        return len(self.desirable_inputs) + len(self.undesirable_inputs)

    @property
    def p(self) -> int:
        return len(self.desirable_outputs) + len(self.undesirable_outputs)

    def role_of(self, var: str) -> str:
        for role in ROLES:
            if var in getattr(self, role):
                return role
        raise KeyError(var)

    @classmethod
    def from_text(cls, text: str) -> "DeaSpec":
        """Build a spec from ``key=value`` lines (role lists comma-separated)."""
        kv = parse_keyvalue(text)
        kwargs: dict = {}
        for key, value in kv.items():
            if key in ROLES:
                kwargs[key] = _names(value)
            elif key == "orientation":
                kwargs[key] = value
            elif key in ("dynamic", "shift_nonpositive"):
                kwargs[key] = value.lower() in ("1", "true", "yes", "on")
            elif key in ("clamp_tol", "lp_tol", "shift_buffer", "l_min"):
                kwargs[key] = float(value)
            else:
                raise ValueError(f"unknown DEA spec key {key!r}")
        return cls(**kwargs)

    def to_text(self) -> str:
        lines = [f"{role} = {', '.join(getattr(self, role))}" for role in ROLES]
        lines += [
            f"orientation = {self.orientation}",
            f"dynamic = {str(self.dynamic).lower()}",
            f"clamp_tol = {self.clamp_tol!r}",
            f"lp_tol = {self.lp_tol!r}",
            f"shift_nonpositive = {str(self.shift_nonpositive).lower()}",
            f"shift_buffer = {self.shift_buffer!r}",
        ]
        return "\n".join(lines) + "\n"


@dataclass
class _Layout:
    """Column positions inside an encoded program."""

    n: int
    blocks: dict[str, slice]
    lam: slice
    l_index: int | None
    offset: int = 0

    @property
    def size(self) -> int:
        return max([self.lam.stop] + [s.stop for s in self.blocks.values()]) - self.offset


def _role_arrays(spec: DeaSpec, frame: pd.DataFrame) -> dict[str, np.ndarray]:
    return {role: frame[list(getattr(spec, role))].to_numpy(dtype=float)
            .reshape(len(frame), len(getattr(spec, role))) for role in ROLES}


def _check_denominators(spec: DeaSpec, data: dict[str, np.ndarray], k: int):
    needed = []
    if spec.orientation in ("output", "non-oriented"):
        needed += ["desirable_outputs", "undesirable_outputs"]
    if spec.orientation in ("input", "non-oriented"):
        needed += ["desirable_inputs", "undesirable_inputs"]
    for role in needed:
        vals = data[role][k]
        bad = np.flatnonzero(~(vals > 0))
        if bad.size:
            var = getattr(spec, role)[bad[0]]
            raise ZeroDenominator(f"{var} of the evaluated DMU is {vals[bad[0]]!r}; must be positive")


def _encode(spec: DeaSpec, data: dict[str, np.ndarray], k: int, normalize: bool,
            n_cols: int | None = None, col0: int = 0):
    """Rows, objective and bounds for DMU ``k`` of one term.

    Returns ``(A_rows, b_rows, obj, constant, lb, ub, layout)``; columns start at
    ``col0`` within a program of ``n_cols`` columns.
    """
    n = next(iter(data.values())).shape[0]
    sizes = {role: data[role].shape[1] for role in ROLES}
    fractional = spec.orientation == "non-oriented"
    pos = col0
    l_index = None
    if fractional:
        l_index = pos
        pos += 1
    lam = slice(pos, pos + n)
    pos += n
    blocks = {}
    for role in ROLES:
        blocks[role] = slice(pos, pos + sizes[role])
        pos += sizes[role]
    total = n_cols if n_cols is not None else pos
    layout = _Layout(n, blocks, lam, l_index, col0)

    rows, rhs = [], []
    scales = {}
    for role in ROLES:
        own = data[role][k]
        scale = np.where(normalize & (own > 0), own, 1.0) if own.size else own
        scales[role] = scale
        for i in range(sizes[role]):
            row = np.zeros(total)
            row[lam] = data[role][:, i] / scale[i]
            row[blocks[role].start + i] = _SLACK_SIGN[role]
            if fractional:
                row[l_index] = -own[i] / scale[i]
                rhs.append(0.0)
            else:
                rhs.append(own[i] / scale[i])
            rows.append(row)

    obj = np.zeros(total)
    lb = np.zeros(total)
    ub = np.full(total, np.inf)
    # slack s (original units) = scale * column value
    def weight(role, which):
        own = data[role][k]
        return scales[role] / own / which

    if spec.orientation == "output":
        for role in ("desirable_outputs", "undesirable_outputs"):
            obj[blocks[role]] = weight(role, spec.p)
        constant = 1.0
    elif spec.orientation == "input":
        for role in ("desirable_inputs", "undesirable_inputs"):
            obj[blocks[role]] = -weight(role, spec.m)
        constant = 1.0
    else:
        for role in ("desirable_inputs", "undesirable_inputs"):
            obj[blocks[role]] = -weight(role, spec.m)
        obj[l_index] = 1.0
        constant = 0.0
        norm = np.zeros(total)
        norm[l_index] = 1.0
        for role in ("desirable_outputs", "undesirable_outputs"):
            norm[blocks[role]] = weight(role, spec.p)
        rows.append(norm)
        rhs.append(1.0)
        lb[l_index] = spec.l_min
    return rows, rhs, obj, constant, lb, ub, layout, scales


def _term_frame(spec: DeaSpec, dataset: PanelDataset, year: int) -> pd.DataFrame:
    obs = dataset.observations
    frame = obs.loc[obs["year"] == year, ["bank_id", "year", *spec.variables]]
    return frame.dropna(subset=list(spec.variables)).reset_index(drop=True)


def build_dmu_lp(spec: DeaSpec, dataset: PanelDataset, bank, year: int,
                 normalize: bool = False) -> LinearProgram:
    """The linear program scoring ``bank`` in ``year`` against that year's peers.

    With ``normalize=False`` the program is literal: slacks are in data units
    and the objective divides them by the DMU's own values. ``normalize=True``
    divides every row by the DMU's own value, which leaves the optimum
    unchanged and keeps the program well scaled.

    Raises
    ------
    MissingCell
        The bank has no complete row for ``year``.
    ZeroDenominator
        A value that appears in the objective's denominators is not positive.
    """
    for var in spec.variables:
        if var not in dataset.observations:
            raise KeyError(f"variable {var!r} not in dataset")
    frame = _term_frame(spec, dataset, year)
    hit = np.flatnonzero(frame["bank_id"].to_numpy() == bank)
    if hit.size == 0:
        raise MissingCell(f"no complete observation for bank {bank!r} in {year}")
    k = int(hit[0])
    data = _role_arrays(spec, frame)
    _check_denominators(spec, data, k)
    rows, rhs, obj, const, lb, ub, layout, _ = _encode(spec, data, k, normalize)
    sense = "max" if spec.orientation == "output" else "min"
    names = _column_names(spec, frame["bank_id"].tolist(), layout)
    return LinearProgram(c=obj, A=np.array(rows), b=np.array(rhs), lb=lb, ub=ub,
                         sense=sense, offset=const, names=names)


def _column_names(spec, peers, layout) -> tuple[str, ...]:
    names = [""] * layout.size
    if layout.l_index is not None:
        names[layout.l_index - layout.offset] = "l"
    for j, peer in enumerate(peers):
        names[layout.lam.start - layout.offset + j] = f"lambda[{peer}]"
    tags = {"desirable_inputs": "s_g-", "undesirable_inputs": "s_b-",
            "desirable_outputs": "s_g+", "undesirable_outputs": "s_b+"}
    for role in ROLES:
        for i, var in enumerate(getattr(spec, role)):
            names[layout.blocks[role].start - layout.offset + i] = f"{tags[role]}[{var}]"
    return tuple(names)


@dataclass(eq=False)
class EfficiencyPanel:
    """Scores, slacks and peer weights per (bank, year).

    ``cells`` has one row per bank-year with columns ``bank_id``, ``year``,
    ``score``, ``status`` and ``objective`` followed by one ``slack:<var>``
    column per variable (data units, after any translation in ``shifts``).
    ``data`` holds the role variables actually used for each cell.
    """

    spec: DeaSpec
    cells: pd.DataFrame
    data: pd.DataFrame
    weights: dict = field(default_factory=dict)
    shifts: dict = field(default_factory=dict)

    def scores(self) -> pd.DataFrame:
        return self.cells[["bank_id", "year", "score", "status"]]

    def solved(self) -> pd.DataFrame:
        return self.cells[self.cells["status"] == LpStatus.OPTIMAL.value]

    def to_csv(self, path=None) -> str:
        text = _csv(self.scores())
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text


def _csv(frame: pd.DataFrame) -> str:
    return frame.to_csv(index=False, lineterminator="\n",
                        float_format=lambda v: repr(float(v)))


def _shift_columns(spec: DeaSpec, obs: pd.DataFrame) -> tuple[pd.DataFrame, dict]:
    shifts = {}
    if not spec.shift_nonpositive:
        return obs, shifts
    obs = obs.copy()
    for var in spec.variables:
        col = obs[var].dropna()
        if col.empty:
            continue
        lo, hi = float(col.min()), float(col.max())
        if lo > 0:
            continue
        spread = hi - lo
        buffer = spec.shift_buffer * (spread if spread > 0 else max(abs(lo), 1.0))
        shifts[var] = -lo + buffer
        obs[var] = obs[var] + shifts[var]
    return obs, shifts


def _unscaled(sol_x, layout: _Layout, scales: dict, spec: DeaSpec, k_offset: int = 0):
    """Slacks in data units and peer weights from a solved term block."""
    x = sol_x
    l = x[layout.l_index] if layout.l_index is not None else 1.0
    slacks = {}
    for role in ROLES:
        vals = x[layout.blocks[role]] * scales[role] / l
        for var, v in zip(getattr(spec, role), vals):
            slacks[var] = float(v)
    lam = x[layout.lam] / l
    return slacks, lam, l


def _term_score(spec: DeaSpec, objective: float) -> float:
    if spec.orientation == "output":
        return 1.0 / objective
    return objective


def _clamp(spec: DeaSpec, score: float) -> tuple[float, bool]:
    if score > 1.0:
        return 1.0, False
    if score <= 0.0:
        return spec.clamp_tol, True
    return score, False


def efficiency(spec: DeaSpec, dataset: PanelDataset) -> EfficiencyPanel:
    """Score every bank-year of ``dataset``.

    Cells lacking data or whose program fails carry a non-``Optimal`` status
    and a NaN score; the call raises :class:`DeaError` only when no cell can be
    solved. Nonpositive columns are translated first when
    ``spec.shift_nonpositive`` is set (see :attr:`EfficiencyPanel.shifts`).
    """
    missing = [v for v in spec.variables if v not in dataset.observations]
    if missing:
        raise KeyError(f"variables {missing} not in dataset")
    obs, shifts = _shift_columns(spec, dataset.observations)
    shifted = dataset.with_observations(obs)
    records: dict[tuple, dict] = {}
    weights: dict[tuple, dict] = {}
    if spec.dynamic:
        _dynamic(spec, shifted, records, weights)
    else:
        for year in shifted.years:
            frame = _term_frame(spec, shifted, year)
            data = _role_arrays(spec, frame)
            peers = frame["bank_id"].tolist()
            for k, bank in enumerate(peers):
                records[(bank, year)], weights[(bank, year)] = _solve_cell(spec, data, k, peers)

    base = shifted.observations[["bank_id", "year", *spec.variables]]
    slack_cols = [f"slack:{v}" for v in spec.variables]
    blank = {"score": math.nan, "status": "MissingCell", "objective": math.nan,
             "clamped": False, **{c: math.nan for c in slack_cols}}
    rows = []
    for bank, year in zip(base["bank_id"], base["year"]):
        key = (bank, int(year))
        rows.append({"bank_id": key[0], "year": key[1], **blank, **records.get(key, {})})
    cells = pd.DataFrame(rows, columns=["bank_id", "year", *blank])
    if not (cells["status"] == LpStatus.OPTIMAL.value).any():
        raise DeaError("no bank-year could be scored")
    return EfficiencyPanel(spec, cells.reset_index(drop=True), base.reset_index(drop=True),
                           {k: v for k, v in weights.items() if v}, shifts)


def _solve_cell(spec, data, k, peers):
    try:
        _check_denominators(spec, data, k)
    except ZeroDenominator:
        return {"status": "ZeroDenominator", "score": math.nan, "objective": math.nan}, {}
    rows, rhs, obj, const, lb, ub, layout, scales = _encode(spec, data, k, normalize=True)
    lp = LinearProgram(c=obj, A=np.array(rows), b=np.array(rhs), lb=lb, ub=ub,
                       sense="max" if spec.orientation == "output" else "min", offset=const)
    try:
        sol = solve(lp, spec.lp_tol)
    except NumericalBreakdown:
        return {"status": "NumericalBreakdown", "score": math.nan, "objective": math.nan}, {}
    if not sol.optimal:
        return {"status": sol.status.value, "score": math.nan, "objective": math.nan}, {}
    slacks, lam, _ = _unscaled(sol.x, layout, scales, spec)
    score, clamped = _clamp(spec, _term_score(spec, sol.objective))
    rec = {"status": LpStatus.OPTIMAL.value, "score": score, "objective": sol.objective,
           "clamped": clamped}
    rec.update({f"slack:{v}": s for v, s in slacks.items()})
    weight = {peer: float(w) for peer, w in zip(peers, lam) if w > spec.lp_tol}
    return rec, weight


def _dynamic(spec, dataset, records, weights):
    """Joint multi-term programs with equal intensity totals between adjacent terms."""
    frames = {year: _term_frame(spec, dataset, year) for year in dataset.years}
    term_data = {year: _role_arrays(spec, f) for year, f in frames.items()}
    for bank in dataset.banks:
        terms = []
        for year in dataset.years:
            ids = frames[year]["bank_id"].to_numpy()
            hit = np.flatnonzero(ids == bank)
            if hit.size == 0:
                continue
            k = int(hit[0])
            try:
                _check_denominators(spec, term_data[year], k)
            except ZeroDenominator:
                records[(bank, year)] = {"status": "ZeroDenominator", "score": math.nan,
                                         "objective": math.nan}
                continue
            terms.append((year, k))
        if not terms:
            continue
        # first pass: block sizes
        encoded = []
        col = 0
        for year, k in terms:
            probe = _encode(spec, term_data[year], k, True)
            width = probe[6].size
            encoded.append((year, k, col, width))
            col += width
        total = col
        A_rows, b_rows, c = [], [], np.zeros(total)
        lb = np.zeros(total)
        ub = np.full(total, np.inf)
        layouts = []
        constant = 0.0
        for year, k, start, width in encoded:
            rows, rhs, obj, const, l_b, u_b, layout, scales = _encode(
                spec, term_data[year], k, True, n_cols=total, col0=start)
            A_rows += rows
            b_rows += rhs
            c += obj / len(encoded)
            lb[start:start + width] = l_b[start:start + width]
            constant += const / len(encoded)
            layouts.append((year, k, layout, scales, obj))
        for (_, _, la, _, _), (_, _, lb_, _, _) in zip(layouts, layouts[1:]):
            link = np.zeros(total)
            link[la.lam] = 1.0
            link[lb_.lam] = -1.0
            A_rows.append(link)
            b_rows.append(0.0)
        lp = LinearProgram(c=c, A=np.array(A_rows), b=np.array(b_rows), lb=lb, ub=ub,
                           sense="max" if spec.orientation == "output" else "min",
                           offset=constant)
        try:
            sol = solve(lp, spec.lp_tol)
        except NumericalBreakdown:
            sol = None
        for year, k, layout, scales, obj in layouts:
            if sol is None or not sol.optimal:
                status = "NumericalBreakdown" if sol is None else sol.status.value
                records[(bank, year)] = {"status": status, "score": math.nan, "objective": math.nan}
                continue
            term_obj = 1.0 + float(obj @ sol.x)
            slacks, lam, _ = _unscaled(sol.x, layout, scales, spec)
            score, clamped = _clamp(spec, _term_score(spec, term_obj))
            rec = {"status": LpStatus.OPTIMAL.value, "score": score, "objective": term_obj,
                   "clamped": clamped}
            rec.update({f"slack:{v}": s for v, s in slacks.items()})
            records[(bank, year)] = rec
            peers = frames[year]["bank_id"].tolist()
            weights[(bank, year)] = {p: float(w) for p, w in zip(peers, lam) if w > spec.lp_tol}


def projection(panel: EfficiencyPanel, bank, year: int) -> dict[str, float]:
    """Frontier target of a solved cell, in the original (unshifted) units.

    Desirable inputs shrink by their slack, undesirable inputs grow, desirable
    outputs grow and undesirable outputs shrink.
    """
    cells = panel.cells
    hit = cells[(cells["bank_id"] == bank) & (cells["year"] == year)]
    if hit.empty or hit.iloc[0]["status"] != LpStatus.OPTIMAL.value:
        status = "absent" if hit.empty else hit.iloc[0]["status"]
        raise UnsolvedCell(f"cell ({bank!r}, {year}) is not solved: {status}")
    cell = hit.iloc[0]
    own = panel.data[(panel.data["bank_id"] == bank) & (panel.data["year"] == year)].iloc[0]
    target = {}
    for var in panel.spec.variables:
        sign = -_SLACK_SIGN[panel.spec.role_of(var)]
        value = own[var] + sign * cell[f"slack:{var}"]
        target[var] = float(value - panel.shifts.get(var, 0.0))
    return target


def benchmark(panel: EfficiencyPanel, bank, year: int) -> dict[str, float]:
    """Peer combination ``X λ`` for a solved cell, in original units."""
    weights = panel.weights.get((bank, year))
    if weights is None:
        raise UnsolvedCell(f"cell ({bank!r}, {year}) has no peer weights")
    peers = panel.data[panel.data["year"] == year].set_index("bank_id")
    out = {}
    for var in panel.spec.variables:
        out[var] = float(sum(w * peers.at[p, var] for p, w in weights.items())
                         - panel.shifts.get(var, 0.0))
    return out
