"""End-to-end two-stage run: ingest, DEA scores, descriptive tables, diagnostics, regressions.

A run is driven by an INI file (see :data:`DEFAULT_CONFIG`). Each stage runs
inside its own guard; a failed stage is recorded in the manifest and the
stages that depend on it are skipped. Only configuration and ingest
failures abort the run, and they do so before anything is written.
"""

from __future__ import annotations

import configparser
import hashlib
import io
import json
import math
import os
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import pandas as pd

from . import __version__
from .dea import DeaSpec, efficiency
from .descstats import (
    anova_two_way,
    describe_frame,
    lagged_correlation,
    mi_label,
    mutual_information,
    sturges_bins,
    yearly_summary,
)
from .diagkit import adf, breusch_pagan, kpss, vif
from .dyngmm import GmmSpec, ab_autocorrelation, sargan, system_gmm, wald_joint
from .panelreg import (
    RegressionSpec,
    fixed_effects,
    hausman,
    ols,
    random_effects,
    second_stage_frame,
)
from .panelstore import ColumnSchema, MACRO_COLUMNS, compute_growth, load_panel, validate_panel
from .synthetic import bundled_paths

__all__ = [
    "ConfigError",
    "DEFAULT_CONFIG",
    "IngestError",
    "IoFailure",
    "OUTPUT_DIR_ENV",
    "ReportBundle",
    "RunConfig",
    "TABLE_FILES",
    "emit_table",
    "load_config",
    "run_dea_only",
    "run_pipeline",
    "stage_rng",
]

OUTPUT_DIR_ENV = "CAMELG_OUTPUT_DIR"
BUNDLED = "@bundled"

CAMELG_VARIABLES = ("total_assets", "shareholders_equity", "net_operating_profit",
                    "total_comprehensive_income", "uncollectible_loans", "growth")

# stage name -> emitted table stem
TABLE_FILES = {
    "camelg_descriptive": "table4_camelg_descriptive",
    "efficiency_by_year": "table5_efficiency_by_year",
    "anova": "table6_anova_type_size",
    "panel_static": "table7_fe_re",
    "hausman": "table8_hausman",
    "system_gmm": "table9_system_gmm",
    "macro_descriptive": "tableA1_macro_descriptive",
    "lagged_correlation": "tableA2_lagged_correlation",
    "stationarity": "tableA3_A5_stationarity",
    "vif": "tableA4_vif",
    "breusch_pagan": "tableA6_breusch_pagan",
    "mutual_information": "tableA7_mutual_information",
    "ols": "tableA8_ols",
}
EXTRA_FILES = {"efficiency_panel": "efficiency_panel", "figure2": "figure2_mean_efficiency"}

DEFAULT_CONFIG = """\
# camelg run configuration; relative paths resolve against this file
[input]
bank_csv = @bundled
macro_csv = @bundled
# optional key=value column mapping file
schema =

[output]
directory = camelg-output
format = csv
record_timings = false

[dea]
orientation = output
dynamic = false
desirable_inputs = total_assets, shareholders_equity
undesirable_inputs =
desirable_outputs = net_operating_profit, total_comprehensive_income, growth
undesirable_outputs = uncollectible_loans

[regression]
dependent = score
regressors = trade_openness, financial_openness, poverty_rate, innovation
cov_type = classical

[gmm]
lags = 1
min_lag = 2
max_lag = 4
collapse = true
two_step = false
intercept = false

[diagnostics]
stationarity = true
vif = true
breusch_pagan = true
mutual_information = true
lagged_correlation = true
correlation_lag = 2
mi_bins =

[run]
seed = 2024
"""


class ConfigError(ValueError):
    pass


class IngestError(RuntimeError):
    pass


class IoFailure(OSError):
    pass


def _flag(value: str) -> bool:
    v = value.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off", ""):
        return False
    raise ConfigError(f"not a boolean: {value!r}")


def _names(value: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in value.split(",") if v.strip())


@dataclass(frozen=True)
class RunConfig:
    bank_csv: str = BUNDLED
    macro_csv: str = BUNDLED
    schema: str = ""
    output_dir: Path = Path("camelg-output")
    fmt: str = "csv"
    record_timings: bool = False
    dea: DeaSpec = field(default_factory=DeaSpec)
    regression: RegressionSpec = field(default_factory=RegressionSpec)
    cov_type: str = "classical"
    gmm: GmmSpec = field(default_factory=GmmSpec)
    diagnostics: dict = field(default_factory=lambda: {
        "stationarity": True, "vif": True, "breusch_pagan": True,
        "mutual_information": True, "lagged_correlation": True})
    correlation_lag: int = 2
    mi_bins: int | None = None
    seed: int = 2024
    canonical: str = ""

    def __post_init__(self):
        if self.fmt not in ("csv", "json"):
            raise ConfigError(f"format must be csv or json, got {self.fmt!r}")

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical.encode("utf-8")).hexdigest()

    def input_paths(self) -> tuple[Path, Path]:
        bank, macro = bundled_paths()
        return (bank if self.bank_csv == BUNDLED else Path(self.bank_csv),
                macro if self.macro_csv == BUNDLED else Path(self.macro_csv))


def _canonical(parser: configparser.ConfigParser) -> str:
    # output location does not affect results, so it stays out of the hash
    lines = []
    for section in sorted(parser.sections()):
        for key, value in sorted(parser.items(section)):
            if (section, key) == ("output", "directory"):
                continue
            if section == "input" and key in ("bank_csv", "macro_csv", "schema"):
                continue
            lines.append(f"{section}.{key}={value.strip()}")
    return "\n".join(lines)


def load_config(source=None, *, env: dict | None = None) -> RunConfig:
    """Parse an INI config; ``source`` may be a path, INI text, or ``None`` for defaults."""
    env = os.environ if env is None else env
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.read_string(DEFAULT_CONFIG)
    base = Path.cwd()
    if source is not None:
        path = Path(source) if not str(source).lstrip().startswith(("[", "#")) else None
        if path is not None:
            if not path.is_file():
                raise ConfigError(f"config file not found: {path}")
            base = path.resolve().parent
            text = path.read_text(encoding="utf-8")
        else:
            text = str(source)
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from exc
    known = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    known.read_string(DEFAULT_CONFIG)
    for section in parser.sections():
        if not known.has_section(section):
            raise ConfigError(f"unknown section [{section}]")
        for key in parser[section]:
            if key not in known[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")

    def resolve(value: str) -> str:
        value = value.strip()
        if not value or value == BUNDLED:
            return value
        p = Path(value)
        return str(p if p.is_absolute() else (base / p))

    inp, out, dea, reg, gmm, diag = (parser[s] for s in
                                     ("input", "output", "dea", "regression", "gmm", "diagnostics"))
    try:
        dea_text = "\n".join(f"{k}={v}" for k, v in dea.items())
        dea_spec = DeaSpec.from_text(dea_text)
        reg_spec = RegressionSpec(dependent=reg["dependent"].strip(),
                                  regressors=_names(reg["regressors"]))
        if reg["cov_type"].strip() not in ("classical", "cluster"):
            raise ConfigError("cov_type must be classical or cluster")
        max_lag = gmm["max_lag"].strip()
        gmm_spec = GmmSpec(dependent=reg_spec.dependent, exogenous=reg_spec.regressors,
                           lags=int(gmm["lags"]), min_lag=int(gmm["min_lag"]),
                           max_lag=None if max_lag.lower() in ("", "all") else int(max_lag),
                           collapse=_flag(gmm["collapse"]), two_step=_flag(gmm["two_step"]),
                           intercept=_flag(gmm["intercept"]))
        toggles = {k: _flag(diag[k]) for k in ("stationarity", "vif", "breusch_pagan",
                                                "mutual_information", "lagged_correlation")}
        bins = diag["mi_bins"].strip()
        out_dir = env.get(OUTPUT_DIR_ENV) or resolve(out["directory"])
        return RunConfig(
            bank_csv=resolve(inp["bank_csv"]), macro_csv=resolve(inp["macro_csv"]),
            schema=resolve(inp["schema"]), output_dir=Path(out_dir),
            fmt=out["format"].strip().lower(), record_timings=_flag(out["record_timings"]),
            dea=dea_spec, regression=reg_spec, cov_type=reg["cov_type"].strip(),
            gmm=gmm_spec, diagnostics=toggles,
            correlation_lag=int(diag["correlation_lag"]),
            mi_bins=int(bins) if bins else None, seed=int(parser["run"]["seed"]),
            canonical=_canonical(parser),
        )
    except ConfigError:
        raise
    except (ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc


def stage_rng(seed: int, stage: int) -> np.random.Generator:
    """Counter-based generator for stage ``stage``: independent of execution order."""
    return np.random.Generator(np.random.Philox(key=int(seed), counter=[0, 0, 0, int(stage)]))


# -- table emission ---------------------------------------------------------

def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return None if math.isnan(v) else float(v)
    return v


def render_table(frame: pd.DataFrame, fmt: str = "csv") -> bytes:
    """Bytes of ``frame`` at full float precision; NaN becomes an empty cell or null."""
    if fmt == "csv":
        buf = io.StringIO()
        frame.to_csv(buf, index=False, lineterminator="\n", na_rep="",
                     float_format=lambda v: repr(float(v)))
        return buf.getvalue().encode("utf-8")
    if fmt == "json":
        rows = [{str(k): _cell(v) for k, v in zip(frame.columns, row)}
                for row in frame.itertuples(index=False, name=None)]
        return (json.dumps(rows, indent=1, allow_nan=False) + "\n").encode("utf-8")
    raise ValueError(f"unknown format {fmt!r}")


def emit_table(frame: pd.DataFrame, directory, stem: str, fmt: str = "csv") -> Path:
    """Write ``frame`` as ``<directory>/<stem>.<fmt>`` and return the path."""
    path = Path(directory) / f"{stem}.{fmt}"
    try:
        path.write_bytes(render_table(frame, fmt))
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    return path


# -- stage bodies -------------------------------------------------------------

def _coef_with_fit(coef: pd.DataFrame, fit: dict, estimator: str | None = None) -> pd.DataFrame:
    coef = coef.rename(columns={"t": "statistic", "z": "statistic"})
    fit = {k: v for k, v in fit.items() if not isinstance(v, str)}
    fit_rows = pd.DataFrame({"variable": list(fit), "coef": [float(v) for v in fit.values()]})
    out = pd.concat([coef.assign(section="coefficients"), fit_rows.assign(section="fit")],
                    ignore_index=True)
    cols = ["section", "variable", "coef", "std_err", "statistic", "p_value", "ci_lower",
            "ci_upper"]
    out = out.reindex(columns=cols)
    if estimator is not None:
        out.insert(0, "estimator", estimator)
    return out


def _stationarity(dataset, panel) -> pd.DataFrame:
    # series-level tests on each variable stacked bank by bank
    frames = [dataset.observations.set_index(["bank_id", "year"])[list(CAMELG_VARIABLES)]]
    if panel is not None:
        frames.append(panel.solved().set_index(["bank_id", "year"])[["score"]])
    stacked = pd.concat(frames, axis=1).sort_index()
    rows = []
    for col in stacked.columns:
        series = stacked[col].dropna().to_numpy()
        for result in (adf(series), kpss(series)):
            rows.append({"variable": col, **result.row()})
    return pd.DataFrame(rows)


def _gmm_table(result) -> pd.DataFrame:
    rows = [{"section": "residuals", "name": k, "estimate": v}
            for k, v in result.residual_summary().items()]
    for r in result.coef_table().itertuples(index=False):
        rows.append({"section": "coefficients", "name": r.variable, "estimate": r.coef,
                     "std_err": r.std_err, "statistic": r.z, "p_value": r.p_value})
    tests = [sargan(result), ab_autocorrelation(result, 1)]
    try:
        tests.append(ab_autocorrelation(result, 2))
    except ValueError:
        pass
    tests.append(wald_joint(result))
    for t in tests:
        rows.append({"section": "tests", "name": t.name, "statistic": t.value,
                     "df": t.df if t.distribution == "chi_square" else np.nan,
                     "p_value": t.p_value})
    rows.append({"section": "instruments", "name": "count", "estimate": result.n_instruments})
    rows.append({"section": "instruments", "name": "entities", "estimate": result.n_entities})
    rows.append({"section": "instruments", "name": "observations", "estimate": result.nobs})
    return pd.DataFrame(rows).reindex(columns=["section", "name", "estimate", "std_err",
                                               "statistic", "df", "p_value"])


@dataclass
class ReportBundle:
    """Paths and manifest of one run."""

    directory: Path
    files: dict = field(default_factory=dict)
    stages: dict = field(default_factory=dict)
    manifest: dict = field(default_factory=dict)
    summary: list = field(default_factory=list)

    @property
    def failed(self) -> list[str]:
        return [k for k, v in self.stages.items() if v["status"] == "failed"]

    @property
    def exit_code(self) -> int:
        return 1 if self.failed else 0


def _ingest(config: RunConfig):
    bank, macro = config.input_paths()
    try:
        schema = ColumnSchema.from_file(config.schema) if config.schema else None
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            dataset = compute_growth(load_panel(bank, macro, schema))
    except (OSError, ValueError) as exc:
        raise IngestError(f"{type(exc).__name__}: {exc}") from exc
    return dataset, (bank, macro)


def _sha(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


class _Runner:
    def __init__(self, config: RunConfig):
        self.config = config
        self.outputs: dict[str, bytes] = {}
        self.stages: dict[str, dict] = {}
        self.results: dict[str, object] = {}

    def stage(self, name: str, needs: tuple[str, ...], body: Callable[[], object]):
        missing = [n for n in needs if self.stages.get(n, {}).get("status") != "ok"]
        if missing:
            self.stages[name] = {"status": "skipped", "reason": f"needs {', '.join(missing)}"}
            return None
        start = time.perf_counter()
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                result = body()
        except Exception as exc:  # noqa: BLE001  recorded in the manifest
            self.stages[name] = {"status": "failed", "reason": f"{type(exc).__name__}: {exc}"}
            return None
        entry = {"status": "ok"}
        if self.config.record_timings:
            entry["seconds"] = round(time.perf_counter() - start, 6)
        self.stages[name] = entry
        self.results[name] = result
        return result

    def table(self, name: str, frame: pd.DataFrame):
        stem = TABLE_FILES.get(name) or EXTRA_FILES[name]
        self.outputs[f"{stem}.{self.config.fmt}"] = render_table(frame, self.config.fmt)


def _run_stages(config: RunConfig, dataset, dea_only: bool = False) -> _Runner:
    run = _Runner(config)
    run.stages["ingest"] = {"status": "ok"}
    diag = config.diagnostics

    def dea_stage():
        panel = efficiency(config.dea, dataset)
        run.table("efficiency_panel", panel.scores())
        means = (panel.solved().groupby("bank_id", sort=True)["score"].mean()
                 .rename("mean_efficiency").reset_index())
        run.table("figure2", means)
        return panel

    panel = run.stage("dea", ("ingest",), dea_stage)
    run.stage("efficiency_by_year", ("dea",),
              lambda: run.table("efficiency_by_year", yearly_summary(panel)))
    if dea_only:
        return run

    obs = dataset.observations
    run.stage("camelg_descriptive", ("ingest",),
              lambda: run.table("camelg_descriptive", describe_frame(obs, CAMELG_VARIABLES)))
    run.stage("macro_descriptive", ("ingest",),
              lambda: run.table("macro_descriptive",
                                describe_frame(dataset.macro, MACRO_COLUMNS)))

    def anova_stage():
        cells = panel.solved().merge(obs[["bank_id", "year", "bank_type", "bank_size"]],
                                     on=["bank_id", "year"])
        table = anova_two_way(cells["score"], cells["bank_type"], cells["bank_size"],
                              names=("bank_type", "bank_size")).table
        run.table("anova", table)

    run.stage("anova", ("dea",), anova_stage)

    if diag["lagged_correlation"]:
        def corr_stage():
            c = lagged_correlation(obs, CAMELG_VARIABLES, config.correlation_lag)
            run.table("lagged_correlation", c.rename_axis("variable").reset_index())
        run.stage("lagged_correlation", ("ingest",), corr_stage)

    if diag["stationarity"]:
        run.stage("stationarity", ("ingest",),
                  lambda: run.table("stationarity", _stationarity(dataset, panel)))

    spec = config.regression
    frame = run.stage("second_stage_frame", ("dea",), lambda: second_stage_frame(dataset, panel))

    if diag["vif"]:
        def vif_stage():
            table = vif(frame[list(spec.regressors)])
            mean = pd.DataFrame({"variable": ["mean"], "vif": [table.attrs["mean_vif"]],
                                 "perfect_collinearity": [False]})
            run.table("vif", pd.concat([table, mean], ignore_index=True))
        run.stage("vif", ("second_stage_frame",), vif_stage)

    def ols_stage():
        result = ols(spec, frame, cov_type=config.cov_type)
        run.table("ols", _coef_with_fit(result.coef_table(), result.fit_block()))
        return result

    ols_result = run.stage("ols", ("second_stage_frame",), ols_stage)

    if diag["breusch_pagan"]:
        def bp_stage():
            used = frame[list(spec.columns)].dropna().sort_values([spec.entity, spec.time])
            r = breusch_pagan(ols_result.resid, used[list(spec.regressors)].to_numpy(dtype=float))
            run.table("breusch_pagan", pd.DataFrame([{**r.row(), "df": r.df, "nobs": r.nobs}]))
        run.stage("breusch_pagan", ("ols",), bp_stage)

    if diag["mutual_information"]:
        def mi_stage():
            used = frame[[spec.dependent, *spec.regressors]].dropna()
            bins = config.mi_bins or sturges_bins(len(used))
            rows = []
            for reg in spec.regressors:
                mi = mutual_information(used[spec.dependent], used[reg], bins)
                rows.append({"variable": reg, "mutual_information": mi, "bins": bins,
                             "label": mi_label(mi)})
            run.table("mutual_information", pd.DataFrame(rows))
        run.stage("mutual_information", ("second_stage_frame",), mi_stage)

    def static_stage():
        fe = fixed_effects(spec, frame, cov_type=config.cov_type)
        re = random_effects(spec, frame, cov_type=config.cov_type)
        table = pd.concat([_coef_with_fit(fe.coef_table(), fe.fit_block(), "FE"),
                           _coef_with_fit(re.coef_table(), re.fit_block(), "RE")],
                          ignore_index=True)
        run.table("panel_static", table)
        return fe, re

    static = run.stage("panel_static", ("second_stage_frame",), static_stage)

    def hausman_stage():
        h = hausman(*static)
        run.table("hausman", pd.DataFrame([{"statistic": h.statistic, "df": h.df,
                                            "p_value": h.p_value, "chosen": h.chosen}]))

    run.stage("hausman", ("panel_static",), hausman_stage)
    run.stage("system_gmm", ("second_stage_frame",),
              lambda: run.table("system_gmm", _gmm_table(system_gmm(config.gmm, frame))))
    return run


def _finish(config: RunConfig, run: _Runner, inputs) -> ReportBundle:
    out = Path(config.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        for name, data in run.outputs.items():
            (out / name).write_bytes(data)
    except OSError as exc:
        raise IoFailure(f"cannot write to {out}: {exc}") from exc
    manifest = {
        "package": "camelg",
        "version": __version__,
        "versions": _versions(),
        "config_sha256": config.config_hash,
        "inputs": {kind: _sha(Path(p).read_bytes()) for kind, p in zip(("bank_csv", "macro_csv"),
                                                                        inputs)},
        "format": config.fmt,
        "seed": config.seed,
        "files": {name: _sha(data) for name, data in sorted(run.outputs.items())},
        "tables": sorted(name for name in run.outputs
                         if name.rsplit(".", 1)[0] in TABLE_FILES.values()),
        "stages": run.stages,
    }
    text = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    try:
        (out / "manifest.json").write_text(text, encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write manifest: {exc}") from exc
    files = {name: out / name for name in sorted(run.outputs)}
    files["manifest.json"] = out / "manifest.json"
    return ReportBundle(out, files, run.stages, manifest, _summary(run))


def _versions() -> dict[str, str]:
    import platform

    import scipy

    return {"python": platform.python_version(), "numpy": np.__version__,
            "pandas": pd.__version__, "scipy": scipy.__version__}


def _summary(run: _Runner) -> list[str]:
    lines = []
    for name, entry in run.stages.items():
        reason = f" ({entry['reason']})" if "reason" in entry else ""
        lines.append(f"{name:<20} {entry['status']}{reason}")
    return lines


def run_pipeline(config: RunConfig) -> ReportBundle:
    """Execute every stage and write the tables plus ``manifest.json``.

    Raises :class:`IngestError` (nothing written) when the inputs cannot be
    loaded; stage failures are recorded and reflected in
    :attr:`ReportBundle.exit_code`.
    """
    dataset, inputs = _ingest(config)
    return _finish(config, _run_stages(config, dataset), inputs)


def run_dea_only(config: RunConfig) -> ReportBundle:
    """Ingest and efficiency scores only (scores, yearly summary, per-bank means)."""
    dataset, inputs = _ingest(config)
    return _finish(config, _run_stages(config, dataset, dea_only=True), inputs)


def validate(config: RunConfig):
    """Ingest and return the panel validation report."""
    dataset, _ = _ingest(config)
    return validate_panel(dataset)
