import hashlib
import json
import logging
import re

import numpy as np
import pandas as pd
import pytest

from cg_analytics import acf_full
from cg_errors import ConfigError
from cg_io import (
    config_hash,
    emit_manifest,
    ensure_output_dir,
    key_line,
    library_versions,
    load_json,
    log_success,
    setup_logging,
    write_csv,
    write_curve_csv,
    write_ensemble_summary,
)


def test_write_csv_full_precision_and_unix_newlines(tmp_path):
    frame = pd.DataFrame({"tau": [0.0, 0.1], "value": [1.0 / 3.0, 2.0]})
    path = write_csv(frame, tmp_path / "x.csv")
    raw = open(path, "rb").read()
    assert b"\r\n" not in raw
    lines = raw.decode().splitlines()
    assert lines[0] == "tau,value"
    assert lines[2].split(",")[0] == "0.10000000000000001"
    assert float(lines[1].split(",")[1]) == 1.0 / 3.0


def test_write_curve_csv_columns(tmp_path, system_2d):
    sys, cg = system_2d
    path = write_curve_csv(acf_full(sys, cg, [0.0, 0.5]), tmp_path / "curve.csv")
    frame = pd.read_csv(path)
    assert list(frame.columns) == ["tau", "value_1_1"]
    assert frame["value_1_1"][0] == pytest.approx(0.75, rel=1e-15)


def test_write_ensemble_summary(tmp_path, system_2d):
    sys, cg = system_2d
    curve = acf_full(sys, cg, [0.0, 0.1, 0.2])
    path = write_ensemble_summary(curve, [0.01, 0.02, 0.03], tmp_path / "mc.csv")
    frame = pd.read_csv(path)
    assert list(frame.columns) == ["tau", "acf_hat", "stderr"]
    np.testing.assert_allclose(frame["stderr"], [0.01, 0.02, 0.03])


def test_key_line():
    text = '{\n    "experiment": "acf-2d",\n    "lambda": 2.0\n}\n'
    assert key_line(text, "experiment") == 2
    assert key_line(text, "lambda") == 3
    assert key_line(text, "beta") is None


def test_load_json_returns_document_and_text(tmp_path):
    path = tmp_path / "ok.json"
    path.write_text('{"experiment": "acf-2d"}')
    doc, text = load_json(path)
    assert doc == {"experiment": "acf-2d"}
    assert text == '{"experiment": "acf-2d"}'


def test_load_json_syntax_error_carries_line(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n    "experiment": "acf-2d",\n    "lambda": 2.0,\n}\n')
    with pytest.raises(ConfigError) as info:
        load_json(path)
    assert info.value.line == 4
    assert str(info.value).startswith("line 4:")


def test_load_json_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_json(tmp_path / "missing.json")


def test_config_hash_ignores_key_order():
    assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})


def test_ensure_output_dir(tmp_path):
    target = tmp_path / "nested" / "out"
    assert ensure_output_dir(str(target)) is True
    assert ensure_output_dir(str(target)) is False


def test_emit_manifest_checksums(tmp_path):
    data = tmp_path / "table.csv"
    data.write_bytes(b"tau,value\n0,1\n")
    path = emit_manifest(
        str(tmp_path), {"experiment": "acf-2d", "config": {"experiment": "acf-2d"}}, [str(data)]
    )
    manifest = json.loads(open(path).read())
    assert manifest["files"] == {"table.csv": hashlib.sha256(b"tau,value\n0,1\n").hexdigest()}
    assert manifest["config_hash"] == config_hash({"experiment": "acf-2d"})
    assert manifest["experiment"] == "acf-2d"
    assert "python" in manifest["versions"]


def test_library_versions_reports_core_stack():
    versions = library_versions()
    for name in ("python", "numpy", "scipy", "pandas", "markov-coarse-graining"):
        assert name in versions


def test_console_format_and_success_level(capsys):
    root = logging.getLogger()
    previous = root.level
    handler = setup_logging(logging.INFO)
    try:
        log_success("finished %d runs", 3)
        logging.getLogger("cg_test").debug("hidden")
    finally:
        root.removeHandler(handler)
        root.setLevel(previous)
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1
    assert re.fullmatch(r"\[\d\d:\d\d:\d\d\] \[SUCCESS\] finished 3 runs", err[0])
