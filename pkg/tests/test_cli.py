import json
import subprocess
import sys

import pytest

from arraypool.cli import build_parser, main


def test_parser_accepts_documented_flags():
    args = build_parser().parse_args([
        "bench", "graphbfs", "--translation", "open", "--threads", "2", "--frames", "64",
        "--page-size", "4096", "--scale", "100", "--prefetch", "off", "--optimistic", "on",
        "--seed", "3", "--store", "synthetic:9", "--out", "r.json",
    ])
    assert args.translation == "open" and args.threads == 2 and args.frames == 64
    assert args.prefetch is False and args.optimistic is True
    assert args.store == "synthetic:9" and args.seed == 3 and args.out == "r.json"


@pytest.mark.parametrize("bad", [
    ["bench", "tpcc"],
    ["bench", "seqscan", "--prefetch", "maybe"],
    ["bench", "seqscan", "--store", "s3:bucket"],
    ["bench", "seqscan", "--translation", "btree"],
])
def test_parser_rejects(bad):
    with pytest.raises(SystemExit):
        build_parser().parse_args(bad)


def test_config_error_exit_code(capsys):
    assert main(["bench", "seqscan", "--threads", "0"]) == 2
    assert "threads" in capsys.readouterr().err


def test_stdout_report(capsys):
    assert main(["bench", "seqscan", "--scale", "8", "--iterations", "1"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["workload"] == "seqscan" and data["ops"] == 1


def test_out_file(tmp_path, capsys):
    out = tmp_path / "report.json"
    assert main(["bench", "randscan", "--scale", "16", "--iterations", "1", "--translation", "chained",
                 "--out", str(out)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["out"] == str(out)
    assert json.loads(out.read_text())["config"]["translation"] == "chained"


def test_module_entry_point(tmp_path):
    out = tmp_path / "r.json"
    proc = subprocess.run(
        [sys.executable, "-m", "arraypool", "bench", "pointlookup", "--scale", "1000",
         "--iterations", "100", "--store", "synthetic:1", "--out", str(out)],
        capture_output=True, text=True, timeout=120,
    )
    assert proc.returncode == 0, proc.stderr
    assert json.loads(out.read_text())["result"]["misses"] == 0
