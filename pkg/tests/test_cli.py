import json
import os
import shutil
import subprocess
import sys

import pytest

from cybertwin.cli import EXIT_CONFIG, EXIT_OK, EXIT_USAGE, main, write_atomically
from cybertwin.config import load_config
from cybertwin.errors import ParseError, SchemaError
from cybertwin.harness import Scenario, walkthrough

CONFIGS = os.path.join(os.path.dirname(__file__), "..", "configs")


@pytest.fixture
def walkthrough_cfg(tmp_path):
    """Walkthrough config and topology copied into a scratch dir; returns (config path, loaded json)."""
    for name in ("walkthrough.json", "walkthrough_topology.json"):
        shutil.copy(os.path.join(CONFIGS, name), tmp_path / name)
    path = tmp_path / "walkthrough.json"
    return path, json.loads(path.read_text())


def write(path, data):
    path.write_text(json.dumps(data, indent=2))
    return str(path)


def test_shipped_configs_validate(capsys):
    for name in ("example.json", "walkthrough.json"):
        assert main(["validate", os.path.join(CONFIGS, name)]) == EXIT_OK
        assert capsys.readouterr().out.strip() == "OK"


def test_config_matches_code_built_walkthrough(walkthrough_cfg):
    rc = load_config(str(walkthrough_cfg[0]))
    from_file = Scenario(rc.scenario).run().report.determinism_hash
    assert from_file == Scenario(walkthrough.config()).run().report.determinism_hash


def test_unknown_key_is_line_anchored(walkthrough_cfg, capsys):
    path, data = walkthrough_cfg
    data["sede"] = 1
    write(path, data)
    assert main(["validate", str(path)]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "unknown key 'sede'" in err
    line = next(i for i, l in enumerate(path.read_text().splitlines(), 1) if '"sede"' in l)
    assert f"walkthrough.json:{line}:" in err


def test_negative_latency_names_the_field(walkthrough_cfg, capsys):
    path, _ = walkthrough_cfg
    topo_path = path.parent / "walkthrough_topology.json"
    topo = json.loads(topo_path.read_text())
    topo["links"][0]["latency_ms"] = -5
    write(topo_path, topo)
    with pytest.raises(SchemaError) as info:
        load_config(str(path))
    assert any("links/0/latency_ms" in d for d in info.value.diagnostics)
    assert main(["validate", str(path)]) == EXIT_CONFIG


def test_parse_error_has_line_and_column(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{\n  "seed": 1,\n  oops\n}\n')
    with pytest.raises(ParseError) as info:
        load_config(str(bad))
    assert f"{bad}:3:3:" in str(info.value)


def test_unknown_service_replica(walkthrough_cfg):
    path, data = walkthrough_cfg
    data["services"][0]["replicas"] = ["nowhere"]
    write(path, data)
    with pytest.raises(SchemaError):
        load_config(str(path))


def test_run_both_writes_side_by_side_metrics(walkthrough_cfg, tmp_path, capsys):
    path, _ = walkthrough_cfg
    out = tmp_path / "run"
    assert main(["run", str(path), "--mode", "both", "--out", str(out)]) == EXIT_OK
    printed = capsys.readouterr().out
    assert "cybertwin: determinism hash" in printed and "baseline: determinism hash" in printed
    for name in ("report.json", "trace.ndjson", "ledger.csv", "compare.json"):
        assert (out / name).is_file()
    compare = json.loads((out / "compare.json").read_text())
    assert set(compare) == {"cybertwin", "baseline"}
    assert compare["cybertwin"]["mean_first_byte_ms"] < compare["baseline"]["mean_first_byte_ms"]
    assert not [p for p in os.listdir(tmp_path) if p.startswith(".cybertwin-")]

    assert main(["report", str(out)]) == EXIT_OK
    table = capsys.readouterr().out
    assert table.splitlines()[0].split()[-1] == "delta"
    for row in ("first-byte latency", "interruption", "availability"):
        assert row in table


def test_rerun_gives_identical_hash(walkthrough_cfg, tmp_path):
    path, _ = walkthrough_cfg
    hashes = []
    for k in range(2):
        out = tmp_path / f"r{k}"
        assert main(["run", str(path), "--out", str(out)]) == EXIT_OK
        hashes.append(json.loads((out / "report.json").read_text())["determinism_hash"])
    assert hashes[0] == hashes[1]


def test_seed_override_and_stale_artifacts(tmp_path):
    cfg = json.loads(open(os.path.join(CONFIGS, "example.json")).read())
    cfg["workload"].update(n_ends=2, horizon_s=20)
    cfg["output_dir"] = "out"
    path = write(tmp_path / "small.json", cfg)
    assert main(["run", path, "--mode", "both"]) == EXIT_OK
    assert (tmp_path / "out" / "compare.json").is_file()
    assert main(["run", path, "--seed", "99"]) == EXIT_OK
    # a single-mode rerun removes the compare file of the earlier run
    assert not (tmp_path / "out" / "compare.json").exists()
    assert json.loads((tmp_path / "out" / "report.json").read_text())["seed"] == 99


def test_missing_topology_leaves_no_output(walkthrough_cfg, tmp_path, capsys):
    path, data = walkthrough_cfg
    data["topology"] = "gone.json"
    write(path, data)
    out = tmp_path / "never"
    assert main(["run", str(path), "--out", str(out)]) == EXIT_CONFIG
    assert "gone.json" in capsys.readouterr().err
    assert not out.exists()


def test_atomic_write_leaves_old_files_on_failure(tmp_path):
    out = tmp_path / "dir"
    write_atomically(str(out), {"report.json": "old"})
    # the second file cannot be written, so nothing may be moved into place
    with pytest.raises(TypeError):
        write_atomically(str(out), {"report.json": "new", "ledger.csv": 42})
    assert (out / "report.json").read_text() == "old"
    assert not (out / "ledger.csv").exists()


def test_report_on_empty_dir(tmp_path, capsys):
    assert main(["report", str(tmp_path)]) == EXIT_USAGE
    assert "no report.json" in capsys.readouterr().err


def test_single_report_has_no_delta(walkthrough_cfg, tmp_path, capsys):
    path, _ = walkthrough_cfg
    out = tmp_path / "one"
    main(["run", str(path), "--mode", "baseline", "--out", str(out)])
    capsys.readouterr()
    assert main(["report", str(out)]) == EXIT_OK
    assert "delta" not in capsys.readouterr().out


def test_usage_errors(capsys):
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as info:
        main(["run", "x.json", "--mode", "sideways"])
    assert info.value.code == EXIT_USAGE


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "cybertwin.cli", "validate",
                           os.path.join(CONFIGS, "walkthrough.json")], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.strip() == "OK"
