import json

import pytest
import yaml

from fpcontrol.cli import EXIT_CONFIG, EXIT_IO, EXIT_OK, main
from fpcontrol.config import DEFAULTS, ConfigError, SuiteConfig, parse_override


def test_defaults_validate():
    cfg = SuiteConfig()
    assert cfg["lqr"]["relinearize_every"] == 1
    assert cfg.platform_params().mass == pytest.approx(DEFAULTS["platform"]["mass"])


def test_parse_override():
    assert parse_override("ppo.epochs=10") == {"ppo": {"epochs": 10}}
    assert parse_override("lqr.q=[1, 2]") == {"lqr": {"q": [1, 2]}}
    with pytest.raises(ConfigError):
        parse_override("ppo.epochs")


def test_override_applies_and_coerces():
    cfg = SuiteConfig().with_overrides(["ppo.epochs=7", "disturbance.vn=1", {"seed": 4}])
    assert cfg["ppo"]["epochs"] == 7
    assert cfg["disturbance"]["vn"] == 1.0 and isinstance(cfg["disturbance"]["vn"], float)
    assert cfg["seed"] == 4


@pytest.mark.parametrize(
    "override, match",
    [("ppo.epoch=3", "valid keys"), ("nosuch.key=1", "unknown key"), ("ppo.epochs=abc", "integer"),
     ("task.kind=fly", "task.kind"), ("ppo=3", "mapping"), ("threads=0", "threads")],
)
def test_bad_overrides(override, match):
    with pytest.raises(ConfigError, match=match):
        SuiteConfig().with_overrides([override])


def test_load_yaml_and_json(tmp_path):
    (tmp_path / "a.yaml").write_text("seed: 9\nbench:\n  n_traj: 3\n")
    (tmp_path / "a.json").write_text(json.dumps({"seed": 9, "bench": {"n_traj": 3}}))
    a, b = SuiteConfig.load(tmp_path / "a.yaml"), SuiteConfig.load(tmp_path / "a.json")
    assert a.to_dict() == b.to_dict()
    (tmp_path / "bad.yaml").write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        SuiteConfig.load(tmp_path / "bad.yaml")


def test_dump_round_trip(tmp_path):
    cfg = SuiteConfig().with_overrides(["tracker.shape=square"])
    cfg.dump(tmp_path / "c.yaml")
    assert SuiteConfig.load(tmp_path / "c.yaml").to_dict() == cfg.to_dict()


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["track", "--shape", "hexagon", "--out", str(tmp_path / "x")]) == EXIT_CONFIG
    assert "valid shapes" in capsys.readouterr().err
    assert not (tmp_path / "x").exists()
    assert main(["bench", "--config", str(tmp_path / "missing.yaml"), "--out", str(tmp_path / "y")]) == EXIT_IO
    assert not (tmp_path / "y").exists()
    assert main(["bench", "--set", "bench.nope=1", "--out", str(tmp_path / "z")]) == EXIT_CONFIG
    assert main(["bench", "--controller", "rl:" + str(tmp_path / "none.bin"), "--out", str(tmp_path / "w")]) == EXIT_IO
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"garbage")
    assert main(["eval", "--controller", f"rl:{bad}", "--out", str(tmp_path / "v")]) == EXIT_IO
    assert main(["bench", "--conditions", "foo", "--out", str(tmp_path / "u")]) == EXIT_CONFIG


def test_cli_eval_outputs(tmp_path, capsys):
    out = tmp_path / "e"
    rc = main(["eval", "--n-traj", "4", "--length", "20", "--set", "disturbance.vn=0.02", "--out", str(out)])
    assert rc == EXIT_OK
    for name in ("eval.csv", "eval.json", "eval.txt", "eval_config.yaml"):
        assert (out / name).exists()
    assert yaml.safe_load((out / "eval_config.yaml").read_text())["disturbance"]["vn"] == 0.02
    assert "Eval" in capsys.readouterr().out


def test_cli_track_report(tmp_path, capsys):
    rc = main(["track", "--controller", "perfect", "--shape", "square", "--speed", "0.2", "--out", str(tmp_path)])
    assert rc == EXIT_OK
    assert (tmp_path / "velocity_report.txt").read_text() == "square: 0.00 ± 0.00\n"
    assert (tmp_path / "track_square.csv").exists()


def test_cli_bench_is_byte_identical(tmp_path):
    args = ["bench", "--conditions", "Ideal,RTF 1", "--n-traj", "4", "--length", "30", "--seed", "5"]
    assert main(args + ["--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(args + ["--out", str(tmp_path / "b")]) == EXIT_OK
    assert (tmp_path / "a" / "bench.csv").read_bytes() == (tmp_path / "b" / "bench.csv").read_bytes()
