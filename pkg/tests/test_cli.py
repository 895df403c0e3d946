import csv
import json
import subprocess
import sys

import pytest

from semcom.cli import DEFAULTS, UsageError, apply_override, load_config, main

TINY = ["--set", "link.n_f=16", "--set", "train.n_images=32", "--set", "train.epochs=1",
        "--set", "eval.n_images=8", "--set", 'eval.snr_db=[-3, 5]', "--set", 'eval.scenarios=["UMi"]']


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_overrides_parse_json_then_string():
    cfg = load_config(None, ["train.lr=0.01", "variant=rzf", 'eval.scenarios=["RMa"]', "sscc.r=2/3"])
    assert cfg["train"]["lr"] == 0.01 and cfg["variant"] == "rzf"
    assert cfg["eval"]["scenarios"] == ["RMa"] and cfg["sscc"]["r"] == "2/3"
    assert DEFAULTS["train"]["lr"] == 1e-3                  # defaults untouched


def test_config_file_merge(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"train": {"epochs": 3}, "link": {"n_f": 64}}))
    cfg = load_config(path, ["train.epochs=4"])
    assert cfg["train"]["epochs"] == 4 and cfg["link"]["n_f"] == 64


@pytest.mark.parametrize("bad", ["train.nope=1", "nosuch.key=1", "train=3", "noequals"])
def test_bad_overrides(bad):
    with pytest.raises(UsageError):
        load_config(None, [bad])


def test_exit_codes(tmp_path, capsys):
    assert main(["bler", "-o", str(tmp_path), "--set", "train.bogus=1"]) == 2
    assert main(["bler", "-c", str(tmp_path / "missing.json"), "-o", str(tmp_path)]) == 2
    (tmp_path / "bad.json").write_text("{not json")
    assert main(["bler", "-c", str(tmp_path / "bad.json"), "-o", str(tmp_path)]) == 2
    assert main(["train", "-o", str(tmp_path), "--set", "train.batch=6"]) == 2
    assert main(["eval", "-o", str(tmp_path)]) == 1
    assert "checkpoint not found" in capsys.readouterr().err
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_train_then_eval(tmp_path):
    assert main(["train", "-o", str(tmp_path), *TINY]) == 0
    assert (tmp_path / "checkpoint.semcom").read_bytes().startswith(b"SEMCOMCKPT v1")
    loss = rows(tmp_path / "loss.csv")
    assert [r["epoch"] for r in loss] == ["1"]
    assert main(["eval", "-o", str(tmp_path), *TINY]) == 0
    recs = rows(tmp_path / "eval.csv")
    assert list(recs[0]) == ["variant", "scenario", "snr_db", "psnr_db", "accuracy", "bler", "seed", "n_images"]
    assert [(r["variant"], r["snr_db"]) for r in recs] == [("full", "-3.0"), ("full", "5.0")]
    first = (tmp_path / "eval.csv").read_bytes()
    assert main(["eval", "-o", str(tmp_path), *TINY]) == 0
    assert (tmp_path / "eval.csv").read_bytes() == first


def test_training_abort_exit_code(tmp_path, capsys):
    args = ["train", "-o", str(tmp_path), "--set", "variant=zf_in_loop", "--set", "train.channel_model=two_ray",
            *TINY]
    assert main(args) == 1
    assert "training aborted" in capsys.readouterr().err
    assert not (tmp_path / "checkpoint.semcom").exists()


def test_bler_and_sscc_reproducible(tmp_path):
    sets = ["--set", "bler.n_blocks=20", "--set", "bler.ebn0_db=[0, 9]", "--set", 'bler.scenarios=["UMa"]',
            "--set", "sscc_eval.n_images=8", "--set", "sscc_eval.ebn0_db=[-7, 15]",
            "--set", 'sscc_eval.scenarios=["UMi"]']
    for sub in ("bler", "sscc"):
        a, b = tmp_path / f"{sub}_a", tmp_path / f"{sub}_b"
        assert main([sub, "-o", str(a), *sets]) == 0
        assert main([sub, "-o", str(b), *sets]) == 0
        assert (a / f"{sub}.csv").read_bytes() == (b / f"{sub}.csv").read_bytes()
    recs = rows(tmp_path / "sscc_a" / "sscc.csv")
    assert len(recs) == 2 and all(r["variant"].startswith("sscc-4qam-r1/2") for r in recs)
    assert float(recs[0]["psnr_db"]) < float(recs[1]["psnr_db"])


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "semcom.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for sub in ("train", "eval", "bler", "sscc", "gradcheck", "instability"):
        assert sub in out.stdout


def test_apply_override_nested_type():
    cfg = load_config(None, [])
    apply_override(cfg, "bler.seed=5")
    assert cfg["bler"]["seed"] == 5
