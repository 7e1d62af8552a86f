import json
from pathlib import Path

import pandas as pd
import pytest

from camelg.cli import main
from camelg.descstats import describe
from camelg.pipeline import (
    OUTPUT_DIR_ENV,
    TABLE_FILES,
    ConfigError,
    IngestError,
    emit_table,
    load_config,
    render_table,
    run_dea_only,
    run_pipeline,
    stage_rng,
)

GOLDEN = Path(__file__).parent / "golden"


def config_for(directory, extra=""):
    return load_config(f"[output]\ndirectory = {directory}\n{extra}", env={})


def bundle_bytes(directory):
    return {p.name: p.read_bytes() for p in sorted(Path(directory).iterdir())}


@pytest.fixture(scope="module")
def first_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run1")
    return run_pipeline(config_for(out))


def test_all_stages_ok(first_run):
    assert first_run.exit_code == 0
    assert all(v["status"] == "ok" for v in first_run.stages.values())


def test_thirteen_tables_in_manifest(first_run):
    tables = first_run.manifest["tables"]
    assert len(tables) == 13
    assert sorted(t.rsplit(".", 1)[0] for t in tables) == sorted(TABLE_FILES.values())


def test_manifest_hashes_every_file(first_run):
    import hashlib

    files = first_run.manifest["files"]
    on_disk = {p.name for p in first_run.directory.iterdir()} - {"manifest.json"}
    assert set(files) == on_disk
    for name, digest in files.items():
        assert hashlib.sha256((first_run.directory / name).read_bytes()).hexdigest() == digest


def test_determinism(first_run, tmp_path):
    run_pipeline(config_for(tmp_path))
    assert bundle_bytes(tmp_path) == bundle_bytes(first_run.directory)


def test_golden_files(first_run):
    produced = bundle_bytes(first_run.directory)
    expected = bundle_bytes(GOLDEN)
    assert set(produced) == set(expected)
    for name in expected:
        if name == "manifest.json":
            a, b = json.loads(produced[name]), json.loads(expected[name])
            a.pop("versions"), b.pop("versions")
            assert a == b
        else:
            assert produced[name] == expected[name], name


def test_missing_macro_writes_nothing(tmp_path):
    out = tmp_path / "never"
    config = config_for(out, "[input]\nmacro_csv = /definitely/not/here.csv\n")
    with pytest.raises(IngestError):
        run_pipeline(config)
    assert not out.exists()


def test_toggle_changes_only_its_table(first_run, tmp_path):
    run_pipeline(config_for(tmp_path, "[diagnostics]\nvif = false\n"))
    off = bundle_bytes(tmp_path)
    on = bundle_bytes(first_run.directory)
    assert set(on) - set(off) == {"tableA4_vif.csv"}
    for name in off:
        if name != "manifest.json":
            assert off[name] == on[name]


def test_stage_failure_is_partial(tmp_path):
    bundle = run_pipeline(config_for(
        tmp_path, "[regression]\nregressors = trade_openness, not_a_column\n"))
    assert bundle.exit_code == 1
    assert bundle.stages["ols"]["status"] == "failed"
    assert bundle.stages["hausman"]["status"] == "skipped"
    assert bundle.stages["dea"]["status"] == "ok"
    assert (tmp_path / "table5_efficiency_by_year.csv").exists()


def test_dea_only(tmp_path):
    bundle = run_dea_only(config_for(tmp_path))
    names = {p.name for p in tmp_path.iterdir()}
    assert {"efficiency_panel.csv", "figure2_mean_efficiency.csv", "manifest.json"} <= names
    assert "tableA8_ols.csv" not in names
    assert bundle.exit_code == 0


def test_json_format(tmp_path):
    run_pipeline(config_for(tmp_path, "format = json\n"))
    rows = json.loads((tmp_path / "tableA4_vif.json").read_text())
    assert rows[0].keys() == {"variable", "vif", "perfect_collinearity"}


def test_timings_only_on_request(tmp_path):
    bundle = run_dea_only(config_for(tmp_path, "record_timings = true\n"))
    assert "seconds" in bundle.stages["dea"]


def test_env_overrides_output_dir(tmp_path):
    config = load_config("[output]\ndirectory = elsewhere\n", env={OUTPUT_DIR_ENV: str(tmp_path)})
    assert config.output_dir == tmp_path


def test_config_hash_ignores_output_dir(tmp_path):
    assert config_for(tmp_path / "a").config_hash == config_for(tmp_path / "b").config_hash
    assert config_for(tmp_path, "[gmm]\nmax_lag = 5\n").config_hash != config_for(tmp_path).config_hash


@pytest.mark.parametrize("text", ["[nonsense]\na = 1\n", "[dea]\norientation = sideways\n",
                                  "[output]\nformat = xml\n", "[gmm]\nmin_lag = 1\n"])
def test_bad_config(text):
    with pytest.raises(ConfigError):
        load_config(text, env={})


def test_emit_describe_row_order(tmp_path):
    row = describe([1.0, 2.0, 4.0, 8.0, 9.0]).row()
    path = emit_table(pd.DataFrame([row]), tmp_path, "one")
    header = path.read_text().splitlines()[0].split(",")
    assert header == ["mean", "median", "std", "variance", "kurtosis", "skewness", "minimum",
                      "maximum"]


def test_emit_empty_is_header_only(tmp_path):
    path = emit_table(pd.DataFrame(columns=["bank_id", "year", "score"]), tmp_path, "empty")
    assert path.read_text() == "bank_id,year,score\n"
    assert render_table(pd.DataFrame(columns=["a"]), "json") == b"[]\n"


def test_full_precision():
    text = render_table(pd.DataFrame({"x": [0.1 + 0.2]})).decode()
    assert float(text.splitlines()[1]) == 0.1 + 0.2


def test_stage_rng_counter_based():
    a = stage_rng(7, 3).random(4)
    stage_rng(7, 1).random(100)
    assert (stage_rng(7, 3).random(4) == a).all()
    assert not (stage_rng(7, 4).random(4) == a).all()


def test_cli_exit_codes(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(OUTPUT_DIR_ENV, str(tmp_path / "cli"))
    assert main(["version"]) == 0
    assert main(["validate"]) == 0
    assert main(["dea-only"]) == 0
    bad = tmp_path / "bad.ini"
    bad.write_text("[input]\nbank_csv = missing.csv\n")
    assert main(["run", str(bad)]) == 2
    partial = tmp_path / "partial.ini"
    partial.write_text("[regression]\nregressors = nope\n")
    assert main(["run", str(partial)]) == 1
    assert main(["run", str(tmp_path / "absent.ini")]) == 2
    assert "camelg" in capsys.readouterr().out
