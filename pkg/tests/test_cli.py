import csv
import io
import json
import shutil
import subprocess
import sys
from collections import Counter

import pytest

from p4mr.cli import main
from p4mr.datasets import generate_corpus, write_lines

from conftest import data_path


@pytest.fixture
def workdir(tmp_path):
    for name in ("sum3.p4mr", "ring6.json", "path_A", "path_B", "path_C",
                 "wordcount.p4mr", "words_1", "words_2", "sum3.manifest.json"):
        shutil.copy(data_path(name), tmp_path / name)
    return tmp_path


def test_compile_writes_five_artifacts(workdir, capsys):
    out = workdir / "build"
    rc = main(["compile", "--program", str(workdir / "sum3.p4mr"),
               "--topology", str(workdir / "ring6.json"), "--out", str(out)])
    assert rc == 0
    assert sorted(p.name for p in out.iterdir()) == [
        "ast.json", "dag.json", "placement.json", "routing.json", "switch_configs.json"]
    assert len(json.loads((out / "ast.json").read_text())) == 5
    assert "D" in capsys.readouterr().out


def test_malformed_program_exits_1(workdir, capsys):
    bad = workdir / "bad.p4mr"
    bad.write_text('A := store<uint_64>("ip_h1:x");\nB := SUM(A A);\n')
    rc = main(["compile", "--program", str(bad), "--topology", str(workdir / "ring6.json"),
               "--out", str(workdir / "o")])
    assert rc == 1
    assert "line 2" in capsys.readouterr().err


def test_unknown_host_exits_1(workdir, capsys):
    bad = workdir / "bad.p4mr"
    bad.write_text('A := store<uint_64>("ip_h9:x");\n')
    rc = main(["compile", "--program", str(bad), "--topology", str(workdir / "ring6.json"),
               "--out", str(workdir / "o")])
    assert rc == 1
    assert "UnknownHost" in capsys.readouterr().err


def test_missing_file_exits_2(workdir):
    assert main(["compile", "--program", str(workdir / "nope"),
                 "--topology", str(workdir / "ring6.json")]) == 2


def test_usage_error_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["run", "--scenario", "7"])
    assert exc.value.code == 2


def run_sum3(workdir, out, *extra):
    return main(["run", "--manifest", str(workdir / "sum3.manifest.json"),
                 "--out", str(out), *extra])


@pytest.mark.parametrize("scenario", ["1", "2", "3"])
def test_run_sum3_program(workdir, capsys, scenario):
    out = workdir / f"run{scenario}"
    assert run_sum3(workdir, out, "--scenario", scenario) == 0
    text = capsys.readouterr().out
    total = sum(int(x) for name in ("path_A", "path_B", "path_C")
                for x in (workdir / name).read_text().split())
    assert f"E = {total}" in text
    assert "PASS" in text
    assert {p.name for p in out.iterdir()} == {"report.json", "report.csv", "report.meta.json"}


def test_run_is_byte_identical(workdir):
    run_sum3(workdir, workdir / "a", "--seed", "3", "--scenario", "3")
    run_sum3(workdir, workdir / "b", "--seed", "3", "--scenario", "3")
    for name in ("report.json", "report.csv"):
        assert (workdir / "a" / name).read_bytes() == (workdir / "b" / name).read_bytes()
    assert "wall_seconds" in json.loads((workdir / "a" / "report.meta.json").read_text())


def test_run_without_manifest_and_data_override(workdir, capsys):
    write_lines(workdir / "ones", [1] * 10)
    rc = main(["run", "--program", str(workdir / "sum3.p4mr"),
               "--topology", str(workdir / "ring6.json"), "--out", str(workdir / "o"),
               "--data", f"A={workdir / 'ones'}", "--data", f"B={workdir / 'ones'}",
               "--data", f"ip_h3:path_C={workdir / 'ones'}"])
    assert rc == 0
    assert "E = 30" in capsys.readouterr().out


def test_wordcount_mode(workdir, capsys):
    words = generate_corpus(100, 5, vocab_size=30)
    write_lines(workdir / "words_1", words[:50])
    write_lines(workdir / "words_2", words[50:])
    rc = main(["run", "--program", str(workdir / "wordcount.p4mr"),
               "--topology", str(workdir / "ring6.json"), "--out", str(workdir / "o")])
    text = capsys.readouterr().out
    assert rc == 0, text
    assert "collisions 0" in text and "PASS" in text
    report = json.loads((workdir / "o" / "report.json").read_text())
    assert report["results"]["WC"] == dict(Counter(words))


def test_wordcount_with_collisions_still_passes(workdir, capsys):
    rc = main(["run", "--program", str(workdir / "wordcount.p4mr"),
               "--topology", str(workdir / "ring6.json"), "--out", str(workdir / "o"),
               "--wc-slots", "4"])
    text = capsys.readouterr().out
    assert rc == 0
    assert "collisions 0" not in text


def test_empty_datasets(workdir, capsys):
    for name in ("path_A", "path_B", "path_C"):
        (workdir / name).write_text("")
    assert run_sum3(workdir, workdir / "o") == 0
    assert "E = 0" in capsys.readouterr().out


def test_bad_dataset_exits_1(workdir):
    (workdir / "path_A").write_text("12\nnot-a-number\n")
    assert run_sum3(workdir, workdir / "o") == 1


def sweep(capsys, *args):
    assert main(["sweep", *args]) == 0
    return list(csv.DictReader(io.StringIO(capsys.readouterr().out)))


def test_single_point_sweep(capsys):
    rows = sweep(capsys, "--vary", "n", "--values", "3", "--K", "3000")
    assert len(rows) == 1
    assert list(rows[0]) == ["scenario", "n", "K", "C", "jct", "speedup_vs_S1",
                             "jct_sim", "speedup_sim_vs_S1"]


def test_sweep_over_n_has_non_increasing_speedup(capsys, tmp_path):
    out = tmp_path / "sweep.csv"
    rows = sweep(capsys, "--vary", "n", "--values", "3,6,12", "--K", "12000",
                 "--setup", "1e-3", "--jobs", "2", "--out", str(out))
    assert [int(r["n"]) for r in rows] == [3, 6, 12]
    for col in ("speedup_vs_S1", "speedup_sim_vs_S1"):
        s = [float(r[col]) for r in rows]
        assert all(a >= b for a, b in zip(s, s[1:])) and s[-1] > 1
    assert out.read_text().splitlines()[0].startswith("scenario,")


def test_sweep_over_scenarios(capsys):
    rows = sweep(capsys, "--vary", "scenario", "--K", "6000")
    by = {int(r["scenario"]): r for r in rows}
    assert float(by[3]["speedup_sim_vs_S1"]) > float(by[2]["speedup_sim_vs_S1"]) > 1
    assert float(by[3]["speedup_vs_S1"]) > float(by[2]["speedup_vs_S1"])


def test_model_subcommand(capsys):
    assert main(["model", "--capacity", "1e9"]) == 0
    text = capsys.readouterr().out
    assert "367879441.2" in text and "632120558.8" in text


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "p4mr", "model"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "equilibrium rate" in proc.stdout
