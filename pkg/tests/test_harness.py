import json
import subprocess
import sys

import numpy as np
import pytest

from conftest import ASSETS
from securenet.aramis.channel import ProtocolAbort
from securenet.fixedpoint import fixed_interpret, predictions, quantize_input
from securenet.harness import bench, cli
from securenet.harness.bundle import (
    BUNDLE_FILE,
    WEIGHTS_FILE,
    BundleError,
    compile_bundle,
    load_bundle,
    load_float_inputs,
    load_inputs,
    save_bundle,
)
from securenet.harness.metrics import MetricsReport
from securenet.harness.session import run_three
from securenet.harness.transport import PeerClosed
from securenet.ir.analysis import liveness
from securenet.porthos.context import P0, P1
from securenet.porthos.executor import run_inference

GRAPH, WEIGHTS = ASSETS / "lenet_small.json", ASSETS / "lenet_small.weights"


@pytest.fixture(scope="module")
def bundle_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("bundle")
    save_bundle(compile_bundle(GRAPH, WEIGHTS, scale=16), d)
    return d


@pytest.fixture(scope="module")
def small_inputs(tmp_path_factory, mnist_test):
    path = tmp_path_factory.mktemp("inputs") / "four.npz"
    np.savez(path, images=mnist_test[0][:4], labels=mnist_test[1][:4])
    return path


# -- bundles ---------------------------------------------------------------------


def test_bundle_roundtrip(bundle_dir, lenet_fixed):
    b = load_bundle(bundle_dir)
    assert b.scale == 16 and b.switched
    assert b.program.calls == load_bundle(bundle_dir).program.calls
    for n in b.program.params:
        assert np.array_equal(b.model.weights[n], lenet_fixed.weights[n])
    assert b.model.trace is not None and len(b.model.trace) == len(b.program.calls)
    assert (bundle_dir / BUNDLE_FILE).exists() and (bundle_dir / WEIGHTS_FILE).exists()


def test_bundle_switch_flag_changes_relu_volume():
    on = compile_bundle(GRAPH, WEIGHTS, scale=12)
    off = compile_bundle(GRAPH, WEIGHTS, scale=12, switch=False)
    assert on.program.elements_through("ReLU") < off.program.elements_through("ReLU")


def test_bundle_sweep_picks_best(mnist_val):
    val = (mnist_val[0][:100], mnist_val[1][:100])
    b = compile_bundle(GRAPH, WEIGHTS, sweep=True, validation=val, scales=range(4, 20, 3))
    assert set(b.accuracy) == set(range(4, 20, 3))
    assert b.accuracy[b.scale] == max(b.accuracy.values())
    fixed = compile_bundle(GRAPH, WEIGHTS, scale=10, validation=val)
    assert list(fixed.accuracy) == [10]


def test_bundle_errors(tmp_path, bundle_dir):
    with pytest.raises(BundleError):
        compile_bundle(GRAPH, WEIGHTS)
    with pytest.raises(BundleError):
        compile_bundle(GRAPH, WEIGHTS, scale=3, sweep=True)
    with pytest.raises(BundleError):
        compile_bundle(GRAPH, WEIGHTS, sweep=True)
    with pytest.raises(BundleError):
        load_bundle(tmp_path)
    (tmp_path / BUNDLE_FILE).write_text("{")
    with pytest.raises(BundleError):
        load_bundle(tmp_path)
    meta = json.loads((bundle_dir / BUNDLE_FILE).read_text())
    meta["version"] = 99
    (tmp_path / BUNDLE_FILE).write_text(json.dumps(meta))
    with pytest.raises(BundleError):
        load_bundle(tmp_path)


def test_input_loading(bundle_dir, small_inputs, mnist_test):
    b = load_bundle(bundle_dir)
    imgs, labels = load_inputs(small_inputs, b)
    assert imgs.dtype == np.uint64 and labels.tolist() == mnist_test[1][:4].tolist()
    assert np.array_equal(imgs, quantize_input(mnist_test[0][:4], 16))
    raw, none = load_float_inputs(ASSETS / "mnist_test_images.f32", b.program.dims(b.program.input))
    assert none is None and raw.shape[1:] == tuple(b.program.dims(b.program.input)[1:])
    assert np.array_equal(raw[:4], mnist_test[0][:4].reshape(raw[:4].shape))


def test_raw_input_size_must_divide(tmp_path, bundle_dir):
    p = tmp_path / "bad.f32"
    np.zeros(5, "<f4").tofile(p)
    with pytest.raises(ValueError):
        load_inputs(p, load_bundle(bundle_dir))


# -- metrics -----------------------------------------------------------------------


def test_metrics_conservation(lenet_fixed, mnist_test):
    images = quantize_input(mnist_test[0][:2], 16)
    prog = lenet_fixed.program

    def fn(ctx, _):
        return run_inference(ctx, prog, lenet_fixed.weights if ctx.role == P0 else None,
                             images if ctx.role == P1 else None, batch=2)

    res = run_three(fn)
    res.raise_first()
    rep = MetricsReport.from_contexts(res.contexts, prog, {"total": 1.0})
    assert rep.conserved() and rep.channel_total() == res.total_bytes()
    assert set(rep.by_top_scope()) >= {"Conv", "ReLU", "MaxPool", "MatMul", "ArgMax"}
    assert rep.ops["relu"] == 2 * prog.elements_through("ReLU")
    assert rep.ops["scaledown_elems"] == 2 * sum(
        int(np.prod(prog.dims(c.output))) for c in prog.calls if c.op == "ScaleDown")
    assert rep.peak_working_set == liveness(prog).peak_bytes
    d = json.loads(rep.to_json())
    assert set(d) >= {"phase_ms", "bytes", "protocols", "ops", "residuals", "peak_working_set"}
    assert all(set(v) == {"payload", "frames"} for v in d["bytes"].values())


def test_metrics_write_and_extras(tmp_path):
    rep = MetricsReport(outputs=[1, 2], labels=[1, 3])
    rep.extra["note"] = np.arange(2)
    rep.write(tmp_path / "m.json")
    d = json.loads((tmp_path / "m.json").read_text())
    assert d["outputs"] == [1, 2] and d["note"] == [0, 1] and d["peak_working_set"] is None
    rep.extra["bad"] = object()
    with pytest.raises(TypeError):
        rep.to_json()


# -- micro-benchmarks -------------------------------------------------------------------


def test_bench_against_budgets():
    c = bench.bench_conv(5, 3, 2, 3)
    assert c["residual"] == 0
    r = bench.bench_relu(200)
    assert r["per_relu"] == 528 and r["formula"] == 536 and r["secure_nn"] == 704
    assert all(abs(a - b) <= 1 for a, b in r["fresh_share_calls"])
    m = bench.bench_maxpool(5)
    assert m["rounds"] == 4 and m["residual"] == 0
    allr = bench.run_all(relu_n=50)
    assert set(allr) == {"conv_m5_f2", "relu", "maxpool_n4"}


# -- command line ------------------------------------------------------------------------


def test_cli_compile_and_plaintext(tmp_path, small_inputs, capsys, mnist_val):
    val = tmp_path / "val.npz"
    np.savez(val, images=mnist_val[0][:50], labels=mnist_val[1][:50])
    out = tmp_path / "b"
    assert cli.main(["compile", "--model", str(GRAPH), "--weights", str(WEIGHTS), "--scale", "14",
                     "--validation", str(val), "--out", str(out)]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["scale"] == 14 and 0 <= info["accuracy"]["14"] <= 1
    preds = tmp_path / "p.json"
    metrics = tmp_path / "m.json"
    assert cli.main(["run", "--bundle", str(out), "--inputs", str(small_inputs), "--out", str(preds),
                     "--metrics", str(metrics)]) == 0
    b = load_bundle(out)
    imgs, labels = load_inputs(small_inputs, b)
    got = json.loads(preds.read_text())
    assert got["predictions"] == predictions(fixed_interpret(b.model, imgs)).tolist()
    assert json.loads(metrics.read_text())["labels"] == labels.tolist()


@pytest.mark.parametrize("mode", ["3pc", "malicious"])
def test_cli_secure_modes(mode, bundle_dir, small_inputs, tmp_path):
    preds = tmp_path / "p.json"
    metrics = tmp_path / "m.json"
    assert cli.main(["run", "--bundle", str(bundle_dir), "--inputs", str(small_inputs), "--mode", mode,
                     "--chunk", "2", "--out", str(preds), "--metrics", str(metrics)]) == 0
    b = load_bundle(bundle_dir)
    imgs, _ = load_inputs(small_inputs, b)
    assert json.loads(preds.read_text())["predictions"] == predictions(fixed_interpret(b.model, imgs)).tolist()
    m = json.loads(metrics.read_text())
    assert m["ops"]["relu"] > 0 and sum(v["payload"] for v in m["bytes"].values()) > 0


def test_cli_bench(tmp_path, capsys):
    assert cli.main(["bench", "--trials", "100", "--metrics", str(tmp_path / "b.json")]) == 0
    d = json.loads((tmp_path / "b.json").read_text())
    assert d["residuals"]["conv_m5_f2"] == 0 and d["residuals"]["maxpool_n4"] == 0
    assert json.loads(capsys.readouterr().out)["relu"]["per_relu"] == 528


def test_cli_usage_errors(bundle_dir, tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["run", "--bundle", str(bundle_dir), "--mode", "quantum"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        cli.main([])
    assert exc.value.code == 1
    assert cli.main(["run", "--bundle", str(tmp_path)]) == 1
    assert cli.main(["run", "--bundle", str(bundle_dir)]) == 1  # no inputs, no batch
    assert cli.main(["run", "--bundle", str(bundle_dir), "--batch", "2"]) == 1  # plaintext needs inputs
    assert cli.main(["run", "--bundle", str(bundle_dir), "--batch", "2", "--mode", "3pc", "--role", "0"]) == 1
    assert cli.main(["run", "--bundle", str(bundle_dir), "--batch", "2", "--mode", "3pc", "--role", "1",
                     "--peers", "a:1,b:2,c:3"]) == 1
    capsys.readouterr()


@pytest.mark.parametrize("exc,code", [
    (ProtocolAbort({"check": "signature"}), 2),
    (ProtocolAbort({"check": "timeout"}), 3),
    (PeerClosed("gone"), 3),
])
def test_cli_failure_exit_codes(monkeypatch, bundle_dir, small_inputs, exc, code, capsys):
    def boom(*a, **k):
        raise exc

    monkeypatch.setattr(cli, "run_three", boom)
    argv = ["run", "--bundle", str(bundle_dir), "--inputs", str(small_inputs), "--mode", "malicious"]
    assert cli.main(argv) == code
    assert capsys.readouterr().err


def test_cli_three_processes_over_tcp(bundle_dir, small_inputs, tmp_path):
    from test_transport import free_ports

    peers = ",".join(f"{h}:{p}" for h, p in free_ports())
    procs = []
    for role in range(3):
        argv = [sys.executable, "-m", "securenet.harness.cli", "run", "--bundle", str(bundle_dir),
                "--mode", "malicious", "--role", str(role), "--peers", peers, "--timeout", "30",
                "--out", str(tmp_path / f"out{role}.json")]
        argv += ["--inputs", str(small_inputs)] if role == 1 else ["--batch", "4"]
        procs.append(subprocess.Popen(argv, stdout=subprocess.PIPE, stderr=subprocess.PIPE))
    codes = [p.wait(timeout=120) for p in procs]
    assert codes == [0, 0, 0], [p.stderr.read() for p in procs]
    p0 = json.loads((tmp_path / "out0.json").read_text())
    p1 = json.loads((tmp_path / "out1.json").read_text())
    assert p0["predictions"] == p1["predictions"] and "accuracy" in p1
    assert "predictions" not in json.loads((tmp_path / "out2.json").read_text())


def test_cli_lonely_party_times_out(bundle_dir):
    from test_transport import free_ports

    peers = ",".join(f"{h}:{p}" for h, p in free_ports())
    argv = [sys.executable, "-m", "securenet.harness.cli", "run", "--bundle", str(bundle_dir), "--mode", "3pc",
            "--role", "2", "--peers", peers, "--batch", "1", "--timeout", "1", "--connect-window", "1"]
    r = subprocess.run(argv, capture_output=True, timeout=120)
    assert r.returncode == 3
