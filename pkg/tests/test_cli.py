"""CLI tests: flag parsing, precedence, files, exit codes, live server."""

import json
import threading
import time

import pytest

from mcdimpute import cli, dataio

HOLES = ((2, 1), (5, 4), (9, 0), (14, 7))


def milk_csv(n=60, seed=20):
    return dataio.dataset_to_csv(dataio.synth_milk(n, seed=seed))


def punch(text, cells=HOLES):
    rows = [line.split(",") for line in text.splitlines()]
    for r, c in cells:
        rows[r + 1][c] = "?"
    return "\n".join(",".join(row) for row in rows) + "\n"


@pytest.fixture()
def milk_file(tmp_path):
    path = tmp_path / "milk.csv"
    path.write_text(milk_csv())
    return path


@pytest.fixture()
def holes_file(tmp_path):
    path = tmp_path / "holes.csv"
    path.write_text(punch(milk_csv()))
    return path


def parse(argv):
    ns = cli.build_parser().parse_args(argv)
    return cli.parse_config(ns)


def test_flags_override_defaults():
    cfg = parse(["train", "--epochs", "7", "--model", "ae",
                 "--missing-rate", "0.2", "--seed", "9"])
    assert cfg.epochs == 7
    assert cfg.model_kinds == ("ae",)
    assert cfg.missing_rates == (0.2,)
    assert cfg.seed == 9
    assert cfg.lr == 1e-3
    assert cfg.dataset == ()


def test_repeatable_flags_accumulate():
    cfg = parse(["reproduce", "--dataset", "wisc", "--dataset", "pima",
                 "--model", "ae", "--model", "mcd-vae",
                 "--missing-rate", "0.1", "--missing-rate", "0.5"])
    assert cfg.dataset == ("wisc", "pima")
    assert cfg.model_kinds == ("ae", "mcd-vae")
    assert cfg.missing_rates == (0.1, 0.5)


def test_data_paths_join_builtin_ids(tmp_path, milk_file):
    cfg = parse(["reproduce", "--dataset", "synth-milk", "--data", str(milk_file)])
    assert cfg.dataset == ("synth-milk", str(milk_file))


def test_config_file_sits_between_flags_and_defaults(tmp_path):
    f = tmp_path / "cfg.json"
    f.write_text(json.dumps({"epochs": 50, "seed": 9, "dropout_p": 0.4}))
    cfg = parse(["train", "--config", str(f), "--epochs", "7"])
    assert cfg.epochs == 7  # flag beats file
    assert cfg.seed == 9  # file beats default
    assert cfg.dropout_p == 0.4
    assert cfg.batch_size == 32  # untouched default


def test_config_file_accepts_kv_lines(tmp_path):
    f = tmp_path / "cfg.kv"
    f.write_text("config.epochs=12\nconfig.model_kinds=('vae',)\nconfig.seed=4\n")
    cfg = parse(["train", "--config", str(f)])
    assert (cfg.epochs, cfg.model_kinds, cfg.seed) == (12, ("vae",), 4)


def test_invalid_rate_exits_1_naming_the_key(capsys):
    rc = cli.main(["reproduce", "--dataset", "synth-milk", "--missing-rate", "1.5"])
    assert rc == 1
    assert "missing_rates" in capsys.readouterr().err


def test_unknown_flag_exits_1(capsys):
    rc = cli.main(["train", "--bogus"])
    assert rc == 1
    assert "--bogus" in capsys.readouterr().err


def test_reproduce_without_dataset_exits_1(capsys):
    rc = cli.main(["reproduce"])
    assert rc == 1
    assert "dataset missing" in capsys.readouterr().err


def test_unreadable_input_exits_2(tmp_path, capsys):
    rc = cli.main(["impute", str(tmp_path / "nope.csv"), "--class-column", "class"])
    assert rc == 2
    assert "cannot read" in capsys.readouterr().err


def test_train_requires_out_exits_1(milk_file, capsys):
    rc = cli.main(["train", "--data", str(milk_file), "--class-column", "class",
                   "--model", "ae", "--missing-rate", "0.1", "--epochs", "2"])
    assert rc == 1
    assert "--out" in capsys.readouterr().err


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_exits_3(tmp_path, milk_file, capsys):
    rc = cli.main(["train", "--data", str(milk_file), "--class-column", "class",
                   "--model", "vae", "--missing-rate", "0.1", "--epochs", "30",
                   "--lr", "1e9", "--out", str(tmp_path / "m.json")])
    assert rc == 3
    assert "diverged" in capsys.readouterr().err


def test_train_then_impute_with_model_file(tmp_path, milk_file, holes_file, capsys):
    model_path = tmp_path / "model.json"
    rc = cli.main(["train", "--data", str(milk_file), "--class-column", "class",
                   "--model", "mcd-vae", "--missing-rate", "0.1", "--epochs", "4",
                   "--seed", "3", "--out", str(model_path)])
    assert rc == 0
    assert json.loads(model_path.read_text())["kind"] == "vae"

    done = tmp_path / "done.csv"
    unc = tmp_path / "unc.csv"
    rc = cli.main(["impute", str(holes_file), "--class-column", "class",
                   "--model-file", str(model_path), "--model", "mcd-vae",
                   "--mc-samples", "6", "--out", str(done),
                   "--uncertainty", str(unc)])
    assert rc == 0
    assert "?" not in done.read_text()
    lines = unc.read_text().splitlines()
    assert lines[0] == "row,column,std"
    assert len(lines) == 1 + len(HOLES)
    out = capsys.readouterr().out
    assert f"{len(HOLES)} cells imputed" in out


def test_impute_writes_to_stdout_without_out(holes_file, capsys):
    rc = cli.main(["impute", str(holes_file), "--class-column", "class",
                   "--model", "ae", "--epochs", "3"])
    assert rc == 0
    out = capsys.readouterr().out
    assert out.startswith("milk_quantity,")
    assert "?" not in out


def test_impute_zero_missing_passthrough_bytes(tmp_path, milk_file):
    out_path = tmp_path / "echo.csv"
    rc = cli.main(["impute", str(milk_file), "--class-column", "class",
                   "--out", str(out_path)])
    assert rc == 0
    assert out_path.read_bytes() == milk_file.read_bytes()


def test_uncertainty_with_deterministic_kind_exits_1(tmp_path, holes_file, capsys):
    out_path = tmp_path / "done.csv"
    rc = cli.main(["impute", str(holes_file), "--class-column", "class",
                   "--model", "ae", "--epochs", "3", "--out", str(out_path),
                   "--uncertainty", str(tmp_path / "unc.csv")])
    assert rc == 1
    assert "MCD" in capsys.readouterr().err
    assert not out_path.exists()


def test_bad_model_file_exits_2(tmp_path, holes_file, capsys):
    bad = tmp_path / "model.json"
    bad.write_text("{not json")
    rc = cli.main(["impute", str(holes_file), "--class-column", "class",
                   "--model-file", str(bad)])
    assert rc == 2
    assert "not valid JSON" in capsys.readouterr().err


REPRO_ARGS = ["reproduce", "--dataset", "synth-milk", "--model", "ae",
              "--model", "mcd-vae", "--missing-rate", "0.25", "--epochs", "4",
              "--folds", "2", "--mc-samples", "5", "--seed", "6"]


def test_reproduce_writes_both_files_and_prints_table(tmp_path, capsys):
    rc = cli.main(REPRO_ARGS + ["--out", str(tmp_path / "rep")])
    assert rc == 0
    table = (tmp_path / "rep.txt").read_text()
    kv = (tmp_path / "rep.kv").read_text()
    assert "RMSE, missing rate 0.25" in table
    assert "config.seed=6" in kv
    out = capsys.readouterr().out
    assert "RMSE, missing rate 0.25" in out
    assert "wrote" in out


def test_reproduce_same_argv_is_byte_identical(tmp_path, capsys):
    argv = REPRO_ARGS + ["--out", str(tmp_path / "rep")]
    assert cli.main(argv) == 0
    first = ((tmp_path / "rep.txt").read_bytes(), (tmp_path / "rep.kv").read_bytes())
    assert cli.main(argv) == 0
    second = ((tmp_path / "rep.txt").read_bytes(), (tmp_path / "rep.kv").read_bytes())
    assert first == second
    capsys.readouterr()


def test_reproduce_reruns_from_embedded_config(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    assert cli.main(REPRO_ARGS + ["--out", "rep"]) == 0
    snap = ((tmp_path / "rep.txt").read_bytes(), (tmp_path / "rep.kv").read_bytes())
    (tmp_path / "saved.kv").write_bytes(snap[1])
    assert cli.main(["reproduce", "--config", "saved.kv"]) == 0
    assert ((tmp_path / "rep.txt").read_bytes(), (tmp_path / "rep.kv").read_bytes()) == snap
    capsys.readouterr()


def test_reproduce_jobs2_matches_sequential_numbers(tmp_path, capsys):
    assert cli.main(REPRO_ARGS + ["--out", str(tmp_path / "seq")]) == 0
    assert cli.main(REPRO_ARGS + ["--jobs", "2", "--out", str(tmp_path / "par")]) == 0

    def numbers(path):
        return [l for l in path.read_text().splitlines() if not l.startswith("config.")]

    assert numbers(tmp_path / "par.kv") == numbers(tmp_path / "seq.kv")
    capsys.readouterr()


def test_serve_subcommand_parses():
    ns = cli.build_parser().parse_args(["serve", "--port", "9001"])
    assert ns.func is cli.cmd_serve
    assert ns.port == 9001


def test_help_exits_zero():
    with pytest.raises(SystemExit) as e:
        cli.main(["--help"])
    assert e.value.code == 0


@pytest.fixture()
def live_server():
    import uvicorn

    from mcdimpute.service.app import app

    server = uvicorn.Server(uvicorn.Config(app, host="127.0.0.1", port=0,
                                           log_level="error"))
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.time() + 15
    while not server.started:
        if time.time() > deadline or not thread.is_alive():
            raise RuntimeError("server did not start")
        time.sleep(0.02)
    port = server.servers[0].sockets[0].getsockname()[1]
    yield f"http://127.0.0.1:{port}"
    server.should_exit = True
    thread.join(timeout=10)


def test_server_flag_round_trip(tmp_path, holes_file, live_server, capsys):
    out_path = tmp_path / "done.csv"
    rc = cli.main(["impute", str(holes_file), "--class-column", "class",
                   "--model", "mcd-ae", "--epochs", "3", "--mc-samples", "4",
                   "--server", live_server, "--out", str(out_path)])
    assert rc == 0
    assert "?" not in out_path.read_text()
    capsys.readouterr()
