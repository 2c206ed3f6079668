import json
import signal
import subprocess
import sys

import pytest

from spotsearch.bench import suite_paths
from spotsearch.cli import EXPLORE_COLUMNS, build_parser, main
from spotsearch.geometry import Region
from spotsearch.scorers import Hotspot, SyntheticScene, save_scene


@pytest.fixture
def scene_file(tmp_path, room):
    path = tmp_path / "room.json"
    save_scene(room, path)
    return str(path)


def _files(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir())}


@pytest.mark.parametrize("command", ["explore", "bench", "serve", "oracle"])
def test_help_documents_every_flag(command, capsys):
    with pytest.raises(SystemExit) as exc:
        main([command, "--help"])
    assert exc.value.code == 0
    text = capsys.readouterr().out
    sub = build_parser()._subparsers._group_actions[0].choices[command]
    for action in sub._actions:
        for flag in action.option_strings:
            assert flag in text


def test_top_level_help(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
    assert "explore" in capsys.readouterr().out


def test_explore_defaults_are_the_reference_settings(scene_file, tmp_path, capsys):
    assert main(["explore", "--scene", scene_file, "--iters", "40", "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "explore_best.json").read_text())
    assert report["params"] == {
        "c": 0.2,
        "nu1": 0.5,
        "rho": 0.5,
        "horizon": 40,
        "n_dir": 15,
        "depth_limit": "inf",
        "division_policy": "softmax",
        "variant": "truncated",
        "seed": 0,
    }
    args = build_parser().parse_args(["explore", "--scene", scene_file])
    assert (args.iters, args.c, args.rho, args.v1, args.ndir) == (500, 0.2, 0.5, 0.5, 15)
    out = capsys.readouterr().out
    assert "best score" in out and "best position" in out and "best direction index" in out


def test_explore_csv_schema(scene_file, tmp_path):
    main(["explore", "--scene", scene_file, "--iters", "30", "--out", str(tmp_path)])
    lines = (tmp_path / "explore_log.csv").read_text().splitlines()
    assert lines[0] == ",".join(EXPLORE_COLUMNS)
    assert len(lines) == 31


def test_explore_json_format(scene_file, tmp_path):
    main(["explore", "--scene", scene_file, "--iters", "30", "--format", "json", "--out", str(tmp_path)])
    doc = json.loads((tmp_path / "explore_log.json").read_text())
    assert doc["complete"] and len(doc["records"]) == 30
    assert set(doc["records"][0]) == set(EXPLORE_COLUMNS)


@pytest.mark.parametrize(
    "flags,name",
    [
        (["--iters", "0"], "--iters"),
        (["--ndir", "0"], "--ndir"),
        (["--c", "-1"], "--c"),
        (["--v1", "0"], "--v1"),
        (["--rho", "1.5"], "--rho"),
        (["--rho", "1", "--depth-limit", "formula"], "--depth-limit"),
        (["--remote", "nonsense"], "--remote"),
    ],
)
def test_explore_bad_flags_exit_2(scene_file, tmp_path, capsys, flags, name):
    assert main(["explore", "--scene", scene_file, "--out", str(tmp_path), *flags]) == 2
    assert name in capsys.readouterr().err


def test_argparse_errors_exit_2(scene_file):
    with pytest.raises(SystemExit) as exc:
        main(["explore", "--scene", scene_file, "--policy", "greedy"])
    assert exc.value.code == 2


def test_missing_scene_exit_2(tmp_path, capsys):
    assert main(["explore", "--scene", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 2
    assert "--scene" in capsys.readouterr().err


def test_unreachable_remote_exits_1(scene_file, tmp_path):
    import socket

    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    code = main(["explore", "--scene", scene_file, "--iters", "5", "--remote", f"127.0.0.1:{port}", "--out", str(tmp_path)])
    assert code == 1


@pytest.mark.parametrize("fmt", ["csv", "json"])
def test_explore_is_byte_identical_across_runs(scene_file, tmp_path, fmt):
    flags = ["explore", "--scene", scene_file, "--iters", "150", "--seed", "7", "--format", fmt]
    assert main([*flags, "--out", str(tmp_path / "a")]) == 0
    assert main([*flags, "--out", str(tmp_path / "b")]) == 0
    assert _files(tmp_path / "a") == _files(tmp_path / "b")


def test_outputs_stay_under_out(scene_file, tmp_path, monkeypatch):
    work = tmp_path / "cwd"
    work.mkdir()
    monkeypatch.chdir(work)
    main(["explore", "--scene", scene_file, "--iters", "10", "--out", str(tmp_path / "o")])
    main(["oracle", "--scene", scene_file, "--resolution", "4", "--out", str(tmp_path / "o")])
    assert list(work.iterdir()) == []
    assert sorted(p.name for p in (tmp_path / "o").iterdir()) == ["explore_best.json", "explore_log.csv", "oracle.json"]


def test_oracle_on_symmetric_scene(tmp_path, capsys):
    scene = SyntheticScene(Region((0, 0, 0), (8, 4, 8)), (Hotspot((4.0, 2.0, 4.0), 1.5, 0.9),))
    path = tmp_path / "sym.json"
    save_scene(scene, path)
    assert main(["oracle", "--scene", str(path), "--resolution", "16", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "oracle.json").read_text())
    cell = (0.5, 0.25, 0.5)
    assert all(abs(p - c) <= h for p, c, h in zip(doc["best_position"], (4.0, 2.0, 4.0), cell))
    assert "best score" in capsys.readouterr().out


def test_oracle_default_resolution():
    args = build_parser().parse_args(["oracle", "--scene", "x.json"])
    assert args.resolution == 64


def test_oracle_bad_resolution(scene_file):
    assert main(["oracle", "--scene", scene_file, "--resolution", "1"]) == 2


def test_bench_bad_config(tmp_path):
    path = tmp_path / "b.json"
    path.write_text('{"scenes": []}')
    assert main(["bench", "--config", str(path), "--out", str(tmp_path)]) == 2


def test_bench_small_config(scene_file, tmp_path):
    cfg = {
        "scenes": [scene_file],
        "seeds": [0, 1],
        "variants": [{"name": "hoo", "horizon": 20}, {"name": "random", "explorer": "random", "horizon": 20}],
    }
    path = tmp_path / "b.json"
    path.write_text(json.dumps(cfg))
    assert main(["bench", "--config", str(path), "--out", str(tmp_path / "o")]) == 0
    assert len((tmp_path / "o" / "bench_long.csv").read_text().splitlines()) == 1 + 2 * 2 * 20


@pytest.mark.slow
def test_bench_shipped_default_config(tmp_path):
    assert main(["bench", "--out", str(tmp_path)]) == 0
    assert sorted(p.name for p in tmp_path.iterdir()) == ["bench_long.csv", "bench_summary.csv"]
    long_lines = (tmp_path / "bench_long.csv").read_text().splitlines()
    assert len(long_lines) == 1 + len(suite_paths()) * 2 * 5 * 500


def _start_server(scene_file):
    proc = subprocess.Popen(
        [sys.executable, "-m", "spotsearch", "serve", "--scene", scene_file, "--port", "0"],
        stdout=subprocess.PIPE,
        text=True,
    )
    line = proc.stdout.readline()
    assert line.startswith("listening on "), line
    return proc, line.split()[-1]


def test_serve_then_remote_explore_matches_local(scene_file, tmp_path):
    proc, endpoint = _start_server(scene_file)
    try:
        flags = ["explore", "--scene", scene_file, "--iters", "200", "--seed", "4"]
        assert main([*flags, "--out", str(tmp_path / "local")]) == 0
        assert main([*flags, "--remote", endpoint, "--out", str(tmp_path / "remote")]) == 0
    finally:
        proc.send_signal(signal.SIGINT)
        assert proc.wait(timeout=10) == 0
    local = json.loads((tmp_path / "local" / "explore_best.json").read_text())
    remote = json.loads((tmp_path / "remote" / "explore_best.json").read_text())
    assert abs(local["best_score"] - remote["best_score"]) <= 1e-6
    assert local["best_position"] == remote["best_position"]


def test_serve_bad_port(scene_file):
    assert main(["serve", "--scene", scene_file, "--port", "70000"]) == 2
