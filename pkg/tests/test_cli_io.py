import json
import struct

import numpy as np
import pytest

from ymgit.cli_io import (
    EXIT_CONFIG,
    EXIT_NONCONVERGENCE,
    EXIT_OK,
    LABEL_EXIT,
    ConfigError,
    SnapshotError,
    apply_overrides,
    build_initial,
    load_snapshot,
    main,
    parse_config,
    run_verify,
    save_snapshot,
)
from ymgit.lattice_field import TwistData, random_connection
from ymgit.lie_core import MatrixGroupSpec


def write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def test_minimal_config_gets_defaults(tmp_path):
    cfg = parse_config(write(tmp_path / "c.json", {"N": 32, "group": {"kind": "SU", "n": 2}}))
    assert cfg.N == 32 and cfg.group.kind == "SU" and cfg.group.n == 2
    assert cfg.degrees == (0, 0)
    assert cfg.seed == 0
    assert cfg.flow.grad_tol == 1e-6
    echo = cfg.to_json()
    assert echo["twist"] == [0, 0]
    assert set(echo) >= {"N", "group", "twist", "seed", "flow", "weight", "output", "version"}


@pytest.mark.parametrize(
    "data, field",
    [
        ({"N": 32, "bogus": 1}, "bogus"),
        ({"N": 32, "flow": {"grad_tolerance": 1e-3}}, "flow.grad_tolerance"),
        ({"N": 32, "group": {"kind": "SU", "n": 2, "rank": 2}}, "group.rank"),
    ],
)
def test_unknown_field_is_named(data, field):
    with pytest.raises(ConfigError, match=field.replace(".", r"\.")):
        parse_config(data)


def test_twist_must_match_total_degree():
    with pytest.raises(ConfigError, match="total_degree"):
        parse_config({"group": {"kind": "U", "n": 2}, "twist": [1, 1], "total_degree": 1})
    cfg = parse_config({"group": {"kind": "U", "n": 2}, "twist": [1, 0], "total_degree": 1})
    assert cfg.degrees == (1, 0)


@pytest.mark.parametrize(
    "data",
    [
        {"group": {"kind": "SU", "n": 2}, "twist": [1, 0]},
        {"N": 2},
        {"N": "32"},
        {"seed": -1},
        {"group": {"kind": "SO", "n": 2}},
        {"flow": {"cfl_factor": 2.0}},
        {"version": 99},
        {"initial": {"kind": "snapshot"}},
    ],
)
def test_invalid_configs(data):
    with pytest.raises(ConfigError):
        parse_config(data)


def test_env_and_flag_overrides():
    cfg = parse_config({})
    env = {"YMGIT_SEED": "7", "YMGIT_THREADS": "1", "YMGIT_OUT": "/tmp/x", "YMGIT_FORMAT": "csv"}
    out = apply_overrides(cfg, env=env)
    assert (out.seed, out.threads, out.output.dir, out.output.format) == (7, 1, "/tmp/x", "csv")
    assert apply_overrides(cfg, seed=3, env=env).seed == 3


def test_snapshot_roundtrip_is_bitwise(tmp_path):
    A = random_connection(np.random.default_rng(0), 8, MatrixGroupSpec(2, "U"), TwistData((1, -1)))
    save_snapshot(A, tmp_path / "a.snap")
    B = load_snapshot(tmp_path / "a.snap")
    assert B.a.tobytes() == A.a.tobytes()
    assert B.twist.degrees == A.twist.degrees and B.group == A.group


def test_truncated_snapshot_is_refused(tmp_path):
    A = random_connection(np.random.default_rng(1), 8, MatrixGroupSpec(2, "SU"))
    save_snapshot(A, tmp_path / "a.snap")
    raw = (tmp_path / "a.snap").read_bytes()
    for cut in (4, 20, len(raw) - 16):
        (tmp_path / "t.snap").write_bytes(raw[:cut])
        with pytest.raises(SnapshotError, match="truncated|bad magic"):
            load_snapshot(tmp_path / "t.snap")


def test_snapshot_version_mismatch_is_refused(tmp_path):
    A = random_connection(np.random.default_rng(2), 8, MatrixGroupSpec(2, "SU"))
    save_snapshot(A, tmp_path / "a.snap")
    raw = (tmp_path / "a.snap").read_bytes()
    (hlen,) = struct.unpack("<I", raw[8:12])
    header = json.loads(raw[12 : 12 + hlen])
    header["version"] = 2
    hb = json.dumps(header).encode()
    (tmp_path / "v.snap").write_bytes(raw[:8] + struct.pack("<I", len(hb)) + hb + raw[12 + hlen :])
    with pytest.raises(SnapshotError, match="version"):
        load_snapshot(tmp_path / "v.snap")


def test_corrupt_payload_is_refused(tmp_path):
    A = random_connection(np.random.default_rng(3), 8, MatrixGroupSpec(2, "SU"))
    save_snapshot(A, tmp_path / "a.snap")
    raw = bytearray((tmp_path / "a.snap").read_bytes())
    raw[-1] ^= 0xFF
    (tmp_path / "c.snap").write_bytes(bytes(raw))
    with pytest.raises(SnapshotError, match="checksum"):
        load_snapshot(tmp_path / "c.snap")


def test_build_initial_is_deterministic():
    cfg = parse_config({"N": 8, "group": {"kind": "SU", "n": 2}, "initial": {"kind": "random", "gauge": "general"}})
    assert build_initial(cfg).a.tobytes() == build_initial(cfg).a.tobytes()
    with pytest.raises(ConfigError):
        build_initial(parse_config({"N": 8, "initial": {"kind": "stable_example"}}))


def test_verify_default_config_passes():
    rec = run_verify(parse_config({}))
    assert rec.passed
    for a in rec.to_json()["assertions"]:
        assert {"name", "passed", "tolerance", "measured"} <= set(a)


def test_verify_with_tiny_grad_tol_reports_undetermined():
    rec = run_verify(parse_config({"flow": {"grad_tol": 1e-300, "max_steps": 50}}))
    assert rec.metrics["short_flow_status"] == "undetermined"


def test_cli_hn_and_roots(capsys):
    assert main(["hn", "--degrees", "3,1,1,-2"]) == EXIT_OK
    out = json.loads(capsys.readouterr().out)
    assert out["hn_blocks"] == [[1, 3], [2, 2], [1, -2]]
    assert out["polygon_vertices"] == [[0, 0], [1, 3], [3, 5], [4, 3]]
    assert out["classification"] == "unstable"
    assert main(["roots", "--n", "3"]) == EXIT_OK
    out = json.loads(capsys.readouterr().out)
    assert len(out["roots"]) == 6


def test_cli_hn_from_signatures(tmp_path, capsys):
    path = write(tmp_path / "s.json", {"rank": 2, "degree": 0, "signatures": [[1, 1]]})
    assert main(["hn", "--input", path]) == EXIT_OK
    out = json.loads(capsys.readouterr().out)
    assert out["hn_blocks"] == [[1, 1], [1, -1]]
    assert out["dominant_norm"] == pytest.approx(2 * np.pi * np.sqrt(2))


def test_cli_config_error_exit_code(tmp_path, capsys):
    path = write(tmp_path / "c.json", {"N": 8, "mystery": True})
    assert main(["flow", "--config", path]) == EXIT_CONFIG
    assert "mystery" in capsys.readouterr().err


def test_cli_flow_outputs_and_determinism(tmp_path, capsys):
    cfg = {"N": 8, "group": {"kind": "SU", "n": 2}, "initial": {"kind": "random", "gauge": "general"},
           "flow": {"max_steps": 60, "record_every": 10}}
    path = write(tmp_path / "c.json", cfg)
    codes = [main(["flow", "--config", path, "--seed", "11", "--threads", "1", "--out", str(tmp_path / d)])
             for d in ("a", "b")]
    assert codes == [EXIT_NONCONVERGENCE] * 2
    a, b = (tmp_path / "a" / "trace.csv").read_bytes(), (tmp_path / "b" / "trace.csv").read_bytes()
    assert a == b
    assert a.splitlines()[0] == b"step,time,energy,grad_norm,mu_norm"
    assert (tmp_path / "a" / "final.snap").read_bytes() == (tmp_path / "b" / "final.snap").read_bytes()
    report = json.loads((tmp_path / "a" / "flow.json").read_text())
    assert report["converged"] is False and report["steps"] == 60


def test_cli_flow_converged_split(tmp_path):
    path = write(tmp_path / "c.json", {"N": 8, "group": {"kind": "SU", "n": 2}, "twist": [1, -1]})
    assert main(["flow", "--config", path, "--out", str(tmp_path)]) == EXIT_OK
    snap = load_snapshot(tmp_path / "final.snap")
    assert snap.twist.degrees == (1, -1)


def test_cli_weight_kn_classify(tmp_path, capsys):
    path = write(tmp_path / "c.json", {"N": 8, "group": {"kind": "SU", "n": 2}, "twist": [1, -1]})
    assert main(["weight", "--config", path, "--xi", "1,-1"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["value"] == pytest.approx(-4 * np.pi)
    assert main(["kn", "--config", path, "--xi", "0.2,-0.2"]) == EXIT_OK
    out = json.loads(capsys.readouterr().out)
    assert out["min_second_difference"] >= -1e-8
    assert main(["classify", "--config", path]) == LABEL_EXIT["unstable"]
    assert json.loads(capsys.readouterr().out)["label"] == "unstable"


def test_cli_classify_undetermined(tmp_path, capsys):
    path = write(tmp_path / "c.json", {"N": 8, "group": {"kind": "U", "n": 2}, "twist": [1, 0],
                                       "initial": {"kind": "stable_example"},
                                       "flow": {"grad_tol": 1e-300, "max_steps": 10}})
    assert main(["classify", "--config", path]) == EXIT_NONCONVERGENCE
    assert json.loads(capsys.readouterr().out)["label"] == "undetermined"


def test_cli_weight_needs_direction(tmp_path, capsys):
    assert main(["weight"]) == EXIT_CONFIG
