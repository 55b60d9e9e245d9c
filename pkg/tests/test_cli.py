import subprocess
import sys

from pcground.cli import main


def test_no_arguments_prints_usage(capsys):
    assert main([]) == 2
    assert "usage: pcground" in capsys.readouterr().err


def test_unknown_command_and_flag(capsys):
    assert main(["fly"]) == 2
    assert main(["bench", "--turbo"]) == 2
    assert "usage" in capsys.readouterr().err


def test_every_flag_documents_its_default(capsys):
    for cmd in ("gen-data", "oracle-check", "gradcheck", "bench", "train", "eval"):
        assert main([cmd, "--help"]) == 0
    text = capsys.readouterr().out
    assert text.count("default") > 20


def test_bench_reports_ratio(tmp_path, capsys):
    assert main(["bench", "--stage", "3", "--agent", "8", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "stage 3: MHCA/BACA MAC ratio" in out
    assert "10.70G" in out
    rows = (tmp_path / "bench.csv").read_text().splitlines()
    assert rows[0].startswith("method,") and len(rows) == 4


def test_oracle_check_passes(tmp_path, capsys):
    assert main(["oracle-check", "--seed", "7", "--out", str(tmp_path)]) == 0
    assert capsys.readouterr().out.count("PASS") == 4
    assert (tmp_path / "oracles.csv").read_text().startswith("check,passed,detail")


def test_gradcheck_passes(capsys):
    assert main(["gradcheck", "--seed", "1"]) == 0
    assert capsys.readouterr().out.count("PASS") == 4


def test_failed_check_gives_nonzero_exit(capsys):
    assert main(["gradcheck", "--tol", "0"]) == 1


def test_generation_is_byte_identical(tmp_path):
    for d in ("a", "b"):
        assert main(["gen-data", "--n", "3", "--seed", "4", "--out", str(tmp_path / d)]) == 0
    assert (tmp_path / "a" / "scenes.jsonl").read_bytes() == (tmp_path / "b" / "scenes.jsonl").read_bytes()


def test_train_then_eval(tmp_path, capsys):
    data = tmp_path / "data"
    assert main(["gen-data", "--n", "2", "--seed", "1", "--out", str(data)]) == 0
    runs = []
    for d in ("m1", "m2"):
        out = tmp_path / d
        assert main(["train", "--data", str(data / "scenes.jsonl"), "--steps", "3", "--minibatch", "2",
                     "--eval-every", "3", "--out", str(out)]) == 0
        runs.append(out)
    for name in ("loss.csv", "accuracy.csv", "run.json", "params.npz"):
        assert (runs[0] / name).read_bytes() == (runs[1] / name).read_bytes()
    assert main(["eval", "--model", str(runs[0]), "--data", str(data / "scenes.jsonl"),
                 "--out", str(tmp_path / "ev")]) == 0
    assert "grounding accuracy @ IoU 0.5" in capsys.readouterr().out
    csv = (tmp_path / "ev" / "metrics.csv").read_text().splitlines()
    assert csv[0] == "class,bucket,metric,AP,AOS"


def test_eval_rejects_mismatched_model(tmp_path, capsys):
    data = tmp_path / "data"
    main(["gen-data", "--n", "1", "--out", str(data)])
    out = tmp_path / "m"
    assert main(["train", "--data", str(data / "scenes.jsonl"), "--steps", "1", "--out", str(out)]) == 0
    run = (out / "run.json").read_text()
    (out / "run.json").write_text(run.replace('"scale": "reduced"', '"scale": "full"'))
    assert main(["eval", "--model", str(out), "--data", str(data / "scenes.jsonl")]) == 1
    assert "parameter" in capsys.readouterr().err
    assert main(["eval", "--model", str(tmp_path / "missing")]) == 1


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "pcground"], capture_output=True, text=True)
    assert proc.returncode == 2 and "usage" in proc.stderr
