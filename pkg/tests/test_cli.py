"""Command-line behaviors: exit codes, reports, and --json stdout purity."""

import json
import signal
import socket
import subprocess
import sys
import threading
import time
import urllib.request
from http.server import BaseHTTPRequestHandler, HTTPServer
from pathlib import Path

import pytest

from conftest import desk_scenarios
from netstate.cli import main, read_labeled_csv
from netstate.features import FEATURES_V1
from netstate.store import ModelStore, decode_artifact
from netstate.synth import generate_trace, trace_rates


def write_labeled_csv(path: Path, duration=60, interval=5) -> list[str]:
    """Raw-rate training CSV from the desk scenarios; returns the label column."""
    header = ",".join(FEATURES_V1 + ("label",))
    lines, labels = [header], []
    for scenario, label in desk_scenarios(duration, interval):
        for rv in trace_rates(generate_trace(scenario, interval)):
            lines.append(",".join(repr(rv.values[n]) for n in FEATURES_V1) + f",{label.name}")
            labels.append(label.name)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return labels


def train_model(tmp_path: Path, csv_name="samples.csv", model_name="model.nsm"):
    csv_path = tmp_path / csv_name
    labels = write_labeled_csv(csv_path)
    model_path = tmp_path / model_name
    rc = main(["train", "--samples", str(csv_path), "--out", str(model_path)])
    assert rc == 0
    return csv_path, model_path, labels


def stdout_lines(capsys) -> list[str]:
    return [ln for ln in capsys.readouterr().out.splitlines() if ln.strip()]


# -- train --


def test_train_writes_decodable_model(tmp_path, capsys):
    _, model_path, labels = train_model(tmp_path)
    out = capsys.readouterr().out
    assert "training accuracy" in out
    assert str(model_path) in out
    artifact = decode_artifact(model_path.read_bytes())
    assert artifact.feature_order == FEATURES_V1
    assert [c.name for c in artifact.model.classes] == [
        "BroadcastStorm", "Congestion", "ErrorBurst", "Normal",
    ]
    assert artifact.norm is not None  # CSV carries raw rates; train fits the normalizer
    assert artifact.model.training_size == len(labels)


def test_train_json_report(tmp_path, capsys):
    csv_path = tmp_path / "samples.csv"
    labels = write_labeled_csv(csv_path)
    rc = main(["train", "--json", "--samples", str(csv_path), "--out", str(tmp_path / "m.nsm")])
    assert rc == 0
    lines = stdout_lines(capsys)
    assert len(lines) == 1  # --json stdout is machine-readable only
    report = json.loads(lines[0])
    assert report["sample_count"] == len(labels)
    assert report["converged"] is True
    assert report["training_accuracy"] == 1.0
    assert report["class_counts"] == {name: labels.count(name) for name in set(labels)}
    assert report["params"]["variant"] == "a"
    assert report["model_file"].endswith("m.nsm")


def test_train_reproducible_under_source_date_epoch(tmp_path, monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")
    csv_path = tmp_path / "samples.csv"
    write_labeled_csv(csv_path)
    for name in ("a.nsm", "b.nsm"):
        assert main(["train", "--samples", str(csv_path), "--out", str(tmp_path / name)]) == 0
    a = (tmp_path / "a.nsm").read_bytes()
    assert a == (tmp_path / "b.nsm").read_bytes()
    assert decode_artifact(a).created_at == "2023-11-14T22:13:20Z"


def test_train_single_class_is_runtime_error(tmp_path, capsys):
    csv_path = tmp_path / "one.csv"
    csv_path.write_text(
        ",".join(FEATURES_V1 + ("label",)) + "\n" + "1,2,3,0,0,0,Normal\n" * 5,
        encoding="utf-8",
    )
    rc = main(["train", "--samples", str(csv_path), "--out", str(tmp_path / "m.nsm")])
    assert rc == 1
    assert "error:" in capsys.readouterr().err


@pytest.mark.parametrize(
    "content,message",
    [
        ("a,b,c\n1,2,3\n", "header must be"),
        (",".join(FEATURES_V1 + ("label",)) + "\n", "no samples"),
        (",".join(FEATURES_V1 + ("label",)) + "\n1,2,3,Normal\n", "columns"),
        (",".join(FEATURES_V1 + ("label",)) + "\n1,2,x,0,0,0,Normal\n", "could not convert"),
    ],
)
def test_train_bad_csv_exit_2(tmp_path, capsys, content, message):
    csv_path = tmp_path / "bad.csv"
    csv_path.write_text(content, encoding="utf-8")
    rc = main(["train", "--samples", str(csv_path), "--out", str(tmp_path / "m.nsm")])
    assert rc == 2
    assert message in capsys.readouterr().err


def test_train_invalid_params_exit_2(tmp_path, capsys):
    csv_path = tmp_path / "samples.csv"
    write_labeled_csv(csv_path)
    rc = main(
        ["train", "--samples", str(csv_path), "--out", str(tmp_path / "m.nsm"), "--alpha", "-1"]
    )
    assert rc == 2
    assert "alpha" in capsys.readouterr().err


def test_read_labeled_csv_assigns_ids_by_sorted_name(tmp_path):
    csv_path = tmp_path / "samples.csv"
    write_labeled_csv(csv_path, duration=20)
    _, samples = read_labeled_csv(str(csv_path))
    ids = {s.label.name: s.label.id for s in samples}
    # row order must not influence the id assignment
    assert ids == {"BroadcastStorm": 0, "Congestion": 1, "ErrorBurst": 2, "Normal": 3}


# -- classify --


def test_classify_training_rows_round_trip(tmp_path, capsys):
    csv_path, model_path, labels = train_model(tmp_path)
    capsys.readouterr()
    rc = main(["classify", "--json", "--model", str(model_path), "--input", str(csv_path)])
    assert rc == 0
    rows = [json.loads(ln) for ln in stdout_lines(capsys)]
    assert [r["label"] for r in rows] == labels  # label column in the input is ignored
    assert all(r["margin"] > 0 for r in rows)
    assert set(rows[0]["potentials"]) == {"Normal", "Congestion", "ErrorBurst", "BroadcastStorm"}


def test_classify_text_output(tmp_path, capsys):
    csv_path, model_path, labels = train_model(tmp_path)
    capsys.readouterr()
    assert main(["classify", "--model", str(model_path), "--input", str(csv_path)]) == 0
    lines = stdout_lines(capsys)
    assert len(lines) == len(labels)
    assert lines[0].startswith("1: Normal margin=")
    assert "Congestion=" in lines[0]


def test_classify_matches_columns_by_name(tmp_path, capsys):
    csv_path, model_path, labels = train_model(tmp_path)
    # same rows with the feature columns reversed: name matching must reorder
    rows = csv_path.read_text(encoding="utf-8").splitlines()
    shuffled = tmp_path / "shuffled.csv"
    reorder = lambda ln: ",".join(ln.split(",")[-2::-1] + ln.split(",")[-1:])
    shuffled.write_text("\n".join(reorder(ln) for ln in rows) + "\n", encoding="utf-8")
    capsys.readouterr()
    rc = main(["classify", "--json", "--model", str(model_path), "--input", str(shuffled)])
    assert rc == 0
    assert [json.loads(ln)["label"] for ln in stdout_lines(capsys)] == labels


def test_classify_dimension_mismatch_exit_2(tmp_path, capsys):
    _, model_path, _ = train_model(tmp_path)
    bad = tmp_path / "narrow.csv"
    bad.write_text("a,b,c\n1,2,3\n", encoding="utf-8")
    capsys.readouterr()
    rc = main(["classify", "--model", str(model_path), "--input", str(bad)])
    assert rc == 2
    assert "expected 6 features" in capsys.readouterr().err


def test_classify_corrupt_model_exit_1(tmp_path, capsys):
    _, model_path, _ = train_model(tmp_path)
    data = bytearray(model_path.read_bytes())
    data[10] ^= 0x01
    model_path.write_bytes(bytes(data))
    csv_path = tmp_path / "samples.csv"
    capsys.readouterr()
    rc = main(["classify", "--model", str(model_path), "--input", str(csv_path)])
    assert rc == 1
    assert "checksum" in capsys.readouterr().err


# -- synth / replay --


def test_synth_stdout_trace(capsys):
    rc = main(["synth", "--kind", "congestion", "--duration", "60", "--interval", "5"])
    assert rc == 0
    lines = stdout_lines(capsys)
    assert len(lines) == 13  # base + 60/5 polls
    first = json.loads(lines[0])
    assert first["target"] == "sim"
    assert set(first["counters"])  # MIB-II counter names
    assert json.loads(lines[-1])["ts_ms"] == first["ts_ms"] + 60_000


def test_synth_file_deterministic(tmp_path, capsys):
    args = ["synth", "--kind", "error-burst", "--duration", "30", "--seed", "7"]
    for name in ("t1.jsonl", "t2.jsonl"):
        assert main(args + ["--out", str(tmp_path / name)]) == 0
    assert (tmp_path / "t1.jsonl").read_bytes() == (tmp_path / "t2.jsonl").read_bytes()
    assert "wrote 7 snapshots" in capsys.readouterr().out


def test_synth_unknown_param_exit_2(tmp_path, capsys):
    rc = main(["synth", "--param", "nonsense"])
    assert rc == 2
    assert "key=value" in capsys.readouterr().err


def test_replay_stdout_echoes_trace(tmp_path, capsys):
    trace = tmp_path / "trace.jsonl"
    assert main(["synth", "--duration", "55", "--out", str(trace)]) == 0
    capsys.readouterr()
    assert main(["replay", "--trace", str(trace)]) == 0
    assert stdout_lines(capsys) == trace.read_text(encoding="utf-8").splitlines()


def test_replay_posts_each_snapshot(tmp_path, capsys):
    received = []

    class Sink(BaseHTTPRequestHandler):
        def do_POST(self):
            body = self.rfile.read(int(self.headers["Content-Length"]))
            received.append((self.headers["Content-Type"], json.loads(body)))
            self.send_response(204)
            self.send_header("Content-Length", "0")
            self.end_headers()

        def log_message(self, *a):
            pass

    server = HTTPServer(("127.0.0.1", 0), Sink)
    threading.Thread(target=server.serve_forever, daemon=True).start()
    try:
        trace = tmp_path / "trace.jsonl"
        assert main(["synth", "--duration", "40", "--out", str(trace)]) == 0
        capsys.readouterr()
        url = f"http://127.0.0.1:{server.server_address[1]}/ingest"
        rc = main(["replay", "--json", "--trace", str(trace), "--sink", url])
        assert rc == 0
        assert json.loads(stdout_lines(capsys)[-1]) == {"delivered": 9, "sink": url}
        assert len(received) == 9
        assert all(ctype == "application/json" for ctype, _ in received)
        assert received[0][1]["counters"]
    finally:
        server.shutdown()
        server.server_close()


def test_replay_missing_trace_exit_2(tmp_path, capsys):
    rc = main(["replay", "--trace", str(tmp_path / "absent.jsonl")])
    assert rc == 2
    assert "cannot replay" in capsys.readouterr().err


# -- model portability --


def test_export_import_round_trip(tmp_path, capsys):
    _, model_path, _ = train_model(tmp_path)
    data_dir = tmp_path / "data"
    capsys.readouterr()
    rc = main(["import-model", str(model_path), "--data-dir", str(data_dir), "--activate", "--json"])
    assert rc == 0
    doc = json.loads(stdout_lines(capsys)[0])
    assert doc["activated"] is True
    model_id = doc["model_id"]
    assert ModelStore(data_dir / "models").get_active() == model_id

    out = tmp_path / "exported.nsm"
    assert main(["export-model", model_id, "--data-dir", str(data_dir), "--out", str(out)]) == 0
    assert out.read_bytes() == model_path.read_bytes()


def test_import_corrupt_model_exit_1(tmp_path, capsys):
    bad = tmp_path / "bad.nsm"
    bad.write_bytes(b'{"not": "a model"}\nsha256:' + b"0" * 64 + b"\n")
    rc = main(["import-model", str(bad), "--data-dir", str(tmp_path / "data")])
    assert rc == 1
    assert "checksum" in capsys.readouterr().err


def test_export_unknown_model_exit_1(tmp_path, capsys):
    rc = main(["export-model", "deadbeef0000", "--data-dir", str(tmp_path), "--out", str(tmp_path / "x")])
    assert rc == 1
    assert "error:" in capsys.readouterr().err


# -- agent --


def test_agent_smoke_run_for(capsys):
    rc = main(
        ["agent", "--json", "--kind", "normal", "--bind", "127.0.0.1:0", "--run-for", "0.05"]
    )
    assert rc == 0
    doc = json.loads(stdout_lines(capsys)[0])
    assert doc["host"] == "127.0.0.1"
    assert doc["port"] > 0


def test_agent_requires_one_source(capsys):
    assert main(["agent", "--run-for", "0.01"]) == 2
    assert main(["agent", "--kind", "normal", "--trace", "t.jsonl", "--run-for", "0.01"]) == 2
    assert capsys.readouterr().err.count("exactly one of --trace or --kind") == 2


def test_agent_serves_a_recorded_trace(tmp_path, capsys):
    trace = tmp_path / "trace.jsonl"
    assert main(["synth", "--duration", "30", "--out", str(trace)]) == 0
    capsys.readouterr()
    rc = main(
        ["agent", "--json", "--trace", str(trace), "--bind", "127.0.0.1:0", "--run-for", "0.05"]
    )
    assert rc == 0
    assert json.loads(stdout_lines(capsys)[0])["port"] > 0


def test_agent_short_trace_exit_2(tmp_path, capsys):
    trace = tmp_path / "one.jsonl"
    trace.write_text(
        '{"target":"t","if_index":1,"ts_ms":0,"uptime_ticks":0,"counters":{"a":1}}\n',
        encoding="utf-8",
    )
    rc = main(["agent", "--trace", str(trace), "--run-for", "0.01"])
    assert rc == 2
    assert "at least 2 snapshots" in capsys.readouterr().err


# -- serve / misc --


def test_serve_missing_config_exit_1(tmp_path, capsys):
    rc = main(["serve", "--config", str(tmp_path / "absent.ini")])
    assert rc == 1
    assert "error:" in capsys.readouterr().err


def test_unknown_subcommand_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["defragment"])
    assert exc.value.code == 2


def test_module_entrypoint_subprocess(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "netstate.cli", "synth", "--duration", "10", "--interval", "5"],
        capture_output=True,
        text=True,
        timeout=60,
    )
    assert proc.returncode == 0
    assert len(proc.stdout.splitlines()) == 3


def test_serve_subprocess_answers_http(tmp_path):
    with socket.socket() as s:  # grab a free port; tiny race is acceptable in tests
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    config = tmp_path / "service.ini"
    config.write_text(
        f"""
[service]
listen = 127.0.0.1:{port}
data_dir = {tmp_path / "data"}

[class:Normal]
id = 0
strategy = steady-state monitoring

[class:Congestion]
id = 1
strategy = shape or reroute bulk traffic
""",
        encoding="utf-8",
    )
    proc = subprocess.Popen(
        [sys.executable, "-m", "netstate.cli", "serve", "--config", str(config)],
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
        text=True,
    )
    try:
        deadline = time.monotonic() + 10
        state = None
        while time.monotonic() < deadline:
            try:
                with urllib.request.urlopen(
                    f"http://127.0.0.1:{port}/api/v1/state", timeout=1
                ) as resp:
                    state = json.loads(resp.read())
                break
            except OSError:
                assert proc.poll() is None, proc.communicate()[1]
                time.sleep(0.1)
        assert state is not None, "daemon never answered /api/v1/state"
        assert state["streams"] == []
        assert state["model"] is None
    finally:
        proc.send_signal(signal.SIGINT)
        try:
            proc.wait(timeout=10)
        except subprocess.TimeoutExpired:
            proc.kill()
            raise
    assert proc.returncode == 0
