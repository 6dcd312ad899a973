import subprocess
import sys
from pathlib import Path

import pytest

from twinparse.cli import run
from twinparse.representations import write_contextual_store
from twinparse.toy import synthetic_contextual, toy_treebank
from twinparse.treebank import read_conllu_file, write_conllu_file

PROFILE = Path(__file__).parent / "fixtures" / "profile"


@pytest.fixture(scope="module")
def toy_files(tmp_path_factory):
    d = tmp_path_factory.mktemp("toy")
    sets = {"train": toy_treebank(10, 21), "dev": toy_treebank(4, 22)}
    for name, sents in sets.items():
        write_conllu_file(d / f"{name}.conllu", sents)
        write_contextual_store(d / f"{name}.ctxv", synthetic_contextual(sents, dim=8, seed=len(name)))
    return d


def test_eval(capsys):
    assert run(["eval", "--gold", str(PROFILE / "gold.conllu"), "--pred", str(PROFILE / "sys.conllu")]) == 0
    assert capsys.readouterr().out.strip() == "LAS 78.95 UAS 84.21"


def test_profile_matches_golden(tmp_path):
    out = tmp_path / "p.csv"
    assert run(["profile", "--gold", str(PROFILE / "gold.conllu"),
                "--pred", str(PROFILE / "sys.conllu"), "--out", str(out)]) == 0
    assert out.read_text(encoding="utf-8") == (PROFILE / "expected.csv").read_text(encoding="utf-8")
    assert run(["profile", "--gold", str(PROFILE / "gold.conllu"), "--pred", str(PROFILE / "sys.conllu"),
                "--pred", str(PROFILE / "gold.conllu"), "--per-language", "--out", str(out)]) == 0
    text = out.read_text(encoding="utf-8")
    assert "\nsys,aa,las,*,0.7143,5,7\n" in text and "\ngold,bb,las,*,1.0000,12,12\n" in text


@pytest.mark.parametrize("argv", [
    [],
    ["bogus"],
    ["eval", "--gold", "x.conllu"],
    ["train", "--mode", "beam", "--train", "a", "--dev", "b", "--out", "o"],
])
def test_usage_errors_exit_1(argv):
    assert run(argv) == 1


def test_data_errors_exit_2(tmp_path):
    assert run(["eval", "--gold", str(tmp_path / "missing.conllu"), "--pred", "x"]) == 2
    bad = tmp_path / "bad.conllu"
    bad.write_text("1\tword\t_\tX\t_\t_\tnope\troot\t_\t_\n\n", encoding="utf-8")
    assert run(["eval", "--gold", str(bad), "--pred", str(bad)]) == 2
    short = tmp_path / "short.conllu"
    write_conllu_file(short, read_conllu_file(PROFILE / "sys.conllu")[:2])
    assert run(["eval", "--gold", str(PROFILE / "gold.conllu"), "--pred", str(short)]) == 2
    cyc = tmp_path / "cyc.conllu"
    cyc.write_text("1\ta\t_\tX\t_\t_\t2\tdep\t_\t_\n2\tb\t_\tX\t_\t_\t1\tdep\t_\t_\n\n", encoding="utf-8")
    assert run(["eval", "--gold", str(cyc), "--pred", str(cyc)]) == 2


def test_sample_dev(tmp_path, capsys):
    paths = []
    for k, n in enumerate((4, 6)):
        p = tmp_path / f"tb{k}.conllu"
        write_conllu_file(p, toy_treebank(n, k))
        paths.append(str(p))
    out = tmp_path / "sample.conllu"
    assert run(["sample-dev", "--inputs", *paths, "--seed", "3", "--out", str(out)]) == 0
    sample = read_conllu_file(out)
    assert [s.treebank_id for s in sample] == ["tb0"] * 4 + ["tb1"] * 4
    assert "8 sentences (4 per set)" in capsys.readouterr().out


def test_inspect_vectors(toy_files, capsys):
    store = str(toy_files / "dev.ctxv")
    assert run(["inspect-vectors", "--ctx-vectors", store, "--conllu", str(toy_files / "dev.conllu")]) == 0
    out = capsys.readouterr().out
    assert "layers 3" in out and "dim 8" in out and "sentences 4" in out and "checksums ok" in out
    assert run(["inspect-vectors", "--ctx-vectors", store, "--conllu", str(toy_files / "train.conllu")]) == 2
    assert run(["inspect-vectors", "--ctx-vectors", str(toy_files / "dev.conllu")]) == 2


def _train(toy_files, out, *extra):
    return run(["train", "--mode", "graph", "--train", str(toy_files / "train.conllu"),
                "--dev", str(toy_files / "dev.conllu"), "--out", str(out), "--epochs", "1", *extra])


def test_train_parse_eval_round_trip(toy_files, tmp_path, capsys):
    model = tmp_path / "m"
    assert _train(toy_files, model, "--test", str(toy_files / "dev.conllu")) == 0
    manifest = (model / "manifest.txt").read_text(encoding="utf-8")
    assert "data.train = train.conllu sha256:" in manifest and "test_las = " in manifest
    pred = tmp_path / "pred.conllu"
    assert run(["parse", "--model", str(model), "--input", str(toy_files / "dev.conllu"),
                "--output", str(pred)]) == 0
    parsed = read_conllu_file(pred)
    gold = read_conllu_file(toy_files / "dev.conllu")
    assert [s.forms for s in parsed] == [s.forms for s in gold]
    assert [s.comments for s in parsed] == [s.comments for s in gold]
    capsys.readouterr()
    assert run(["eval", "--gold", str(toy_files / "dev.conllu"), "--pred", str(pred)]) == 0
    assert capsys.readouterr().out.startswith("LAS ")


def test_train_with_vectors_and_flag_checks(toy_files, tmp_path):
    ctx = ["--ctx-vectors", str(toy_files / "train.ctxv"), "--dev-ctx-vectors", str(toy_files / "dev.ctxv")]
    model = tmp_path / "m"
    assert _train(toy_files, model, *ctx, "--ctx-layers", "1-2") == 0
    pred = tmp_path / "p.conllu"
    dev = str(toy_files / "dev.conllu")
    assert run(["parse", "--model", str(model), "--input", dev, "--output", str(pred)]) == 1
    assert run(["parse", "--model", str(model), "--input", dev, "--output", str(pred),
                "--ctx-vectors", str(toy_files / "dev.ctxv")]) == 0
    # vectors built for another file fail their checksums
    assert run(["parse", "--model", str(model), "--input", dev, "--output", str(pred),
                "--ctx-vectors", str(toy_files / "train.ctxv")]) == 2
    assert _train(toy_files, tmp_path / "x", ctx[0], ctx[1]) == 1
    assert _train(toy_files, tmp_path / "x", "--ctx-layers", "0-1") == 1
    assert _train(toy_files, tmp_path / "x", ctx[0], ctx[3], ctx[2], ctx[1]) == 2


def test_console_script_help():
    out = subprocess.run([sys.executable, "-m", "twinparse.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "sample-dev" in out.stdout
