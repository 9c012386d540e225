"""Command line: ``securenet compile | run | bench``.

Exit codes: 0 success, 1 usage or input error, 2 protocol abort,
3 transport timeout or lost peer.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from ..aramis.channel import ProtocolAbort
from ..aramis.malicious import MaliciousSession
from ..aramis.malicious import party_fn as malicious_party_fn
from ..fixedpoint import fixed_interpret, predictions
from ..ir.hlil import IRError
from ..porthos.context import P0, P1, ProtocolError
from ..porthos.executor import run_inference
from . import bench as benchmarks
from .bundle import BundleError, compile_bundle, load_bundle, load_inputs, save_bundle
from .metrics import MetricsReport
from .session import DEFAULT_SEED, run_party, run_three
from .transport import PeerClosed, TransportTimeout, parse_address

EXIT_OK, EXIT_USAGE, EXIT_ABORT, EXIT_TIMEOUT = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage, which we reserve for aborts
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="securenet", description="Three-party secure inference.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("compile", help="lower a float model to a fixed-point bundle")
    c.add_argument("--model", required=True, help="graph JSON")
    c.add_argument("--weights", required=True, help="float32 weights file")
    g = c.add_mutually_exclusive_group(required=True)
    g.add_argument("--scale", type=int)
    g.add_argument("--sweep", action="store_true", help="pick the scale with the best validation accuracy")
    c.add_argument("--validation", help=".npz with images and labels")
    c.add_argument("--no-switch", action="store_true", help="keep ReLU before MaxPool")
    c.add_argument("--out", required=True, help="bundle directory")

    r = sub.add_parser("run", help="run inference")
    r.add_argument("--bundle", required=True)
    r.add_argument("--inputs", help=".npz (images, labels) or raw float32 images")
    r.add_argument("--batch", type=int, help="batch size for parties without the inputs")
    r.add_argument("--mode", choices=("plaintext", "3pc", "malicious"), default="plaintext")
    r.add_argument("--role", type=int, choices=(0, 1, 2), help="run one party over TCP")
    r.add_argument("--peers", help="comma-separated host:port for P0,P1,P2")
    r.add_argument("--seed", default=DEFAULT_SEED.decode(), help="test-mode key seed")
    r.add_argument("--timeout", type=float, help="seconds to wait for any one message")
    r.add_argument("--connect-window", type=float, default=30.0, help="seconds to wait for peers to come up")
    r.add_argument("--chunk", type=int, help="images per evaluation pass")
    r.add_argument("--metrics", help="write a metrics JSON report here")
    r.add_argument("--out", help="write predictions (JSON) here")

    b = sub.add_parser("bench", help="protocol traffic against the closed-form budgets")
    b.add_argument("--trials", type=int, default=1000, help="parallel ReLUs")
    b.add_argument("--seed", default=DEFAULT_SEED.decode())
    b.add_argument("--metrics")
    return ap


def _compile(args) -> int:
    validation = None
    if args.validation:
        with np.load(args.validation) as d:
            validation = (np.asarray(d["images"], np.float32), np.asarray(d["labels"]))
    bundle = compile_bundle(args.model, args.weights, scale=args.scale, sweep=args.sweep,
                            validation=validation, switch=not args.no_switch)
    save_bundle(bundle, args.out)
    print(json.dumps({"scale": bundle.scale, "accuracy": bundle.accuracy, "out": args.out}))
    return EXIT_OK


def _party_fn(mode, program, weights, images, batch, chunk):
    if mode == "malicious":
        return malicious_party_fn(program, weights, images, batch, chunk)

    def fn(ctx, _):
        return run_inference(ctx, program, weights=weights if ctx.role == P0 else None,
                             images=images if ctx.role == P1 else None, batch=batch, chunk=chunk)

    return fn


def _run(args) -> int:
    bundle = load_bundle(args.bundle)
    prog = bundle.program
    images = labels = None
    if args.inputs:
        images, labels = load_inputs(args.inputs, bundle)
    batch = len(images) if images is not None else args.batch
    if batch is None:
        raise BundleError("need --inputs or --batch")
    timeout = args.timeout if args.timeout is not None else (10.0 if args.mode == "malicious" else 60.0)
    seed = args.seed.encode()
    phases = {}
    t0 = time.perf_counter()

    if args.mode == "plaintext":
        if images is None:
            raise BundleError("plaintext mode needs --inputs")
        out = fixed_interpret(bundle.model, images)
        contexts = []
    else:
        make_context = MaliciousSession(seed, timeout).make_context if args.mode == "malicious" else None
        weights = bundle.model.weights
        fn = _party_fn(args.mode, prog, weights, images, batch, args.chunk)
        if args.role is None:
            res = run_three(fn, seed=seed, timeout=timeout, make_context=make_context)
            res.raise_first()
            out, contexts = res.results[P0], res.contexts
        else:
            if not args.peers:
                raise BundleError("--role needs --peers")
            addresses = [parse_address(a) for a in args.peers.split(",")]
            if args.role == P1 and images is None:
                raise BundleError("P1 holds the images and needs --inputs")
            out, ctx = run_party(fn, args.role, addresses, seed=seed, timeout=timeout,
                                 make_context=make_context, connect_window=args.connect_window)
            contexts = [ctx]
    phases["total"] = 1000 * (time.perf_counter() - t0)

    report = MetricsReport.from_contexts(contexts, prog, phases)
    result = {"mode": args.mode}
    if out is not None:
        preds = predictions(out)
        report.outputs = preds.tolist()
        result["predictions"] = preds.tolist()
        if labels is not None:
            report.labels = np.asarray(labels).tolist()
            result["accuracy"] = float(np.mean(preds == labels))
    if args.metrics:
        report.write(args.metrics)
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(result, fh)
    print(json.dumps({k: v for k, v in result.items() if k != "predictions"}))
    return EXIT_OK


def _bench(args) -> int:
    t0 = time.perf_counter()
    results = benchmarks.run_all(args.seed.encode(), args.trials)
    report = MetricsReport(phase_ms={"total": 1000 * (time.perf_counter() - t0)})
    report.residuals = {k: v["residual"] for k, v in results.items()}
    report.extra["bench"] = results
    if args.metrics:
        report.write(args.metrics)
    print(json.dumps(results, indent=2))
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return {"compile": _compile, "run": _run, "bench": _bench}[args.command](args)
    except ProtocolAbort as exc:
        print(json.dumps(exc.report), file=sys.stderr)
        return EXIT_TIMEOUT if exc.report.get("check") == "timeout" else EXIT_ABORT
    except ProtocolError as exc:
        print(json.dumps({"check": "protocol", "detail": str(exc)}), file=sys.stderr)
        return EXIT_ABORT
    except (TransportTimeout, PeerClosed) as exc:
        print(json.dumps({"check": "transport", "detail": str(exc)}), file=sys.stderr)
        return EXIT_TIMEOUT
    except (BundleError, IRError, OSError, KeyError, ValueError) as exc:
        print(f"securenet: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
