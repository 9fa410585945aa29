"""Operator command line.

Subcommands: serve, train, classify, synth, agent, replay, export-model,
import-model. Exit codes: 0 success, 1 runtime failure, 2 usage error.
With --json, stdout carries only JSON; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import signal
import sys
import time
from pathlib import Path

from netstate.classifier import (
    ClassifierError,
    ClassLabel,
    FeatureVector,
    KernelParams,
    TrainingSample,
    TrainParams,
    classify,
)
from netstate.config import ConfigError, load_config, parse_listen
from netstate.features import PipelineError, RateVector, normalize, read_trace, snapshot_to_json
from netstate.service import run_training
from netstate.store import ModelStore, StoreError, decode_artifact, encode_artifact
from netstate.synth import KINDS, Scenario, SynthError, generate_trace


class UsageError(Exception):
    """Bad flags or malformed input files: exit code 2."""


def _say(args, message: str) -> None:
    """Human diagnostics: stderr under --json, stdout otherwise."""
    print(message, file=sys.stderr if args.json else sys.stdout)


def _emit_json(doc) -> None:
    print(json.dumps(doc))


# -- train / classify --


def read_labeled_csv(path: str) -> tuple[tuple[str, ...], list[TrainingSample]]:
    """Labeled sample file: header ``f1,...,fn,label``, one sample per row.
    Class ids are assigned by sorted label name, so identical files always
    produce identical models."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if not header or len(header) < 2 or header[-1].strip() != "label":
                raise UsageError(f"{path}: header must be f1,...,fn,label")
            names = tuple(h.strip() for h in header[:-1])
            rows = []
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != len(header):
                    raise UsageError(f"{path}:{lineno}: expected {len(header)} columns, got {len(row)}")
                try:
                    values = tuple(float(c) for c in row[:-1])
                except ValueError as exc:
                    raise UsageError(f"{path}:{lineno}: {exc}") from None
                rows.append((values, row[-1].strip()))
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise UsageError(f"{path}: no samples")
    labels = {name: ClassLabel(id=i, name=name) for i, name in enumerate(sorted({r[1] for r in rows}))}
    samples = [
        TrainingSample(vector=FeatureVector(values), label=labels[name], source_id=f"{path}:{i}")
        for i, (values, name) in enumerate(rows)
    ]
    return names, samples


def cmd_train(args) -> int:
    names, samples = read_labeled_csv(args.samples)
    try:
        params = TrainParams(
            delta=args.delta, max_passes=args.max_passes, update_variant=args.variant, epsilon=args.epsilon
        )
        kernel = KernelParams(alpha=args.alpha)
    except ClassifierError as exc:
        raise UsageError(str(exc)) from exc
    result = run_training(
        samples,
        params,
        kernel,
        memory_limit=args.memory_limit,
        fit_norm=not args.no_normalize,
        feature_order=names,
    )
    Path(args.out).write_bytes(encode_artifact(result.artifact))
    report = dict(result.report)
    report["model_file"] = args.out
    if args.json:
        _emit_json(report)
    else:
        print(f"trained on {report['sample_count']} samples: " + ", ".join(f"{k}={v}" for k, v in sorted(report["class_counts"].items())))
        print(
            f"stage1 converged={report['stage1_converged']} passes={report['stage1_passes']}; "
            f"stage2 converged={report['stage2_converged']} passes={report['stage2_passes']}"
        )
        print(f"training accuracy {report['training_accuracy']:.4f}")
        print(f"model written to {args.out}")
    return 0


def _load_artifact_file(path: str):
    try:
        return decode_artifact(Path(path).read_bytes())
    except OSError as exc:
        raise UsageError(f"cannot read model {path}: {exc}") from exc


def cmd_classify(args) -> int:
    artifact = _load_artifact_file(args.model)
    model = artifact.model
    expected = artifact.feature_order
    try:
        with open(args.input, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                raise UsageError(f"{args.input}: empty input")
            names = [h.strip() for h in header]
            has_label = names and names[-1] == "label"
            if has_label:
                names = names[:-1]
            by_name = set(expected) <= set(names)
            if not by_name and len(names) != len(expected):
                raise UsageError(
                    f"{args.input}: expected {len(expected)} features {list(expected)}, got {len(names)}"
                )
            rows = list(reader)
    except OSError as exc:
        raise UsageError(f"cannot read {args.input}: {exc}") from exc

    for lineno, row in enumerate(rows, start=2):
        if not row:
            continue
        if has_label:
            row = row[:-1]
        try:
            raw = [float(c) for c in row]
        except ValueError as exc:
            raise UsageError(f"{args.input}:{lineno}: {exc}") from None
        if len(raw) != len(names):
            raise UsageError(f"{args.input}:{lineno}: expected {len(names)} values, got {len(raw)}")
        if by_name:
            values = dict(zip(names, raw))
            ordered = tuple(values[n] for n in expected)
        else:
            ordered = tuple(raw)
        if artifact.norm is not None:
            vector = normalize(RateVector(interval_s=1.0, values=dict(zip(expected, ordered))), artifact.norm)
        else:
            vector = FeatureVector(ordered)
        decision = classify(model, vector)
        label = decision.label.name if decision.label else "Unidentified"
        if args.json:
            _emit_json(
                {
                    "row": lineno - 1,
                    "label": label,
                    "label_id": decision.label.id if decision.label else None,
                    "margin": decision.margin,
                    "potentials": {c.name: p for c, p in zip(model.classes, decision.potentials)},
                }
            )
        else:
            pots = " ".join(f"{c.name}={p:.6f}" for c, p in zip(model.classes, decision.potentials))
            print(f"{lineno - 1}: {label} margin={decision.margin:.6f} {pots}")
    return 0


# -- synth / agent / replay --


def cmd_synth(args) -> int:
    params = {}
    for item in args.param:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--param needs key=value, got {item!r}")
        try:
            params[key] = float(value)
        except ValueError:
            raise UsageError(f"--param {key}: {value!r} is not a number") from None
    if args.jitter is not None:
        params["jitter"] = args.jitter
    try:
        scenario = Scenario(kind=args.kind, duration_s=args.duration, seed=args.seed, params=params)
        trace = generate_trace(scenario, args.interval, target_id=args.target, if_index=args.if_index)
    except SynthError as exc:
        raise UsageError(str(exc)) from exc
    lines = [snapshot_to_json(s) for s in (trace.base,) + trace.snapshots]
    if args.out == "-":
        for line in lines:
            print(line)
    else:
        Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
        _say(args, f"wrote {len(lines)} snapshots ({scenario.kind}, seed {scenario.seed}) to {args.out}")
        if args.json:
            _emit_json({"snapshots": len(lines), "kind": scenario.kind, "seed": scenario.seed, "out": args.out})
    return 0


def cmd_agent(args) -> int:
    from netstate.agent import SyntheticAgent

    if (args.trace is None) == (args.kind is None):
        raise UsageError("agent needs exactly one of --trace or --kind")
    if args.trace is not None:
        from netstate.synth import Trace

        snapshots = read_trace(args.trace)
        if len(snapshots) < 2:
            raise UsageError(f"{args.trace}: a trace needs at least 2 snapshots")
        source = Trace(base=snapshots[0], snapshots=tuple(snapshots[1:]), metadata={"kind": "custom"})
        agent = SyntheticAgent(
            bind=parse_listen(args.bind),
            trace=source,
            community=args.community,
            if_indexes=tuple(args.if_index or [1]),
            clock_multiplier=args.clock_multiplier,
        )
    else:
        scenario = Scenario(kind=args.kind, duration_s=args.duration, seed=args.seed)
        agent = SyntheticAgent(
            bind=parse_listen(args.bind),
            scenario=scenario,
            community=args.community,
            if_indexes=tuple(args.if_index or [1]),
            clock_multiplier=args.clock_multiplier,
        )
    with agent:
        if args.json:
            _emit_json({"host": agent.host, "port": agent.port})
            sys.stdout.flush()
        else:
            print(f"synthetic agent listening on {agent.host}:{agent.port} (udp)")
            sys.stdout.flush()
        try:
            if args.run_for > 0:
                time.sleep(args.run_for)
            else:
                signal.pause()
        except KeyboardInterrupt:
            pass
    return 0


def cmd_replay(args) -> int:
    try:
        snapshots = read_trace(args.trace)
    except (OSError, PipelineError) as exc:
        raise UsageError(f"cannot replay {args.trace}: {exc}") from exc
    if args.sink == "stdout":
        for s in snapshots:
            print(snapshot_to_json(s))
    else:
        import urllib.request

        for s in snapshots:
            req = urllib.request.Request(
                args.sink,
                data=snapshot_to_json(s).encode(),
                headers={"Content-Type": "application/json"},
                method="POST",
            )
            with urllib.request.urlopen(req, timeout=10) as resp:
                resp.read()
        _say(args, f"delivered {len(snapshots)} snapshots to {args.sink}")
        if args.json:
            _emit_json({"delivered": len(snapshots), "sink": args.sink})
    return 0


# -- model portability --


def cmd_export_model(args) -> int:
    store = ModelStore(Path(args.data_dir) / "models")
    store.export(args.model_id, args.out)
    if args.json:
        _emit_json({"model_id": args.model_id, "out": args.out})
    else:
        print(f"exported {args.model_id} to {args.out}")
    return 0


def cmd_import_model(args) -> int:
    store = ModelStore(Path(args.data_dir) / "models")
    model_id = store.import_file(args.file)
    if args.activate:
        store.set_active(model_id)
    if args.json:
        _emit_json({"model_id": model_id, "activated": bool(args.activate)})
    else:
        print(f"imported {model_id}" + (" (active)" if args.activate else ""))
    return 0


def cmd_serve(args) -> int:
    import logging

    from netstate import httpapi

    logging.basicConfig(
        level=logging.INFO, format="%(asctime)s %(name)s %(levelname)s %(message)s"
    )
    config = load_config(args.config)
    try:
        httpapi.serve(config)
    except KeyboardInterrupt:
        pass
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="netstate", description="network state identification service tools"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help):  # noqa: A002 - argparse idiom
        p = sub.add_parser(name, help=help)
        p.set_defaults(func=fn)
        p.add_argument("--json", action="store_true", help="machine-readable stdout")
        return p

    p = add("serve", cmd_serve, "run the management daemon")
    p.add_argument("--config", required=True, help="INI config path")

    p = add("train", cmd_train, "train a model from a labeled CSV")
    p.add_argument("--samples", required=True, help="CSV with header f1,...,fn,label")
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--delta", type=float, default=1.0)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--epsilon", type=float, default=0.0)
    p.add_argument("--max-passes", type=int, default=20)
    p.add_argument("--variant", choices=("a", "b"), default="a")
    p.add_argument("--memory-limit", type=int, default=10_000)
    p.add_argument(
        "--no-normalize", action="store_true", help="samples are already normalized; embed no normalizer"
    )

    p = add("classify", cmd_classify, "classify feature CSV rows against a model")
    p.add_argument("--model", required=True, help="model file from train/export-model")
    p.add_argument("--input", required=True, help="CSV of feature rows (label column ignored)")

    p = add("synth", cmd_synth, "generate a synthetic counter trace")
    p.add_argument("--kind", choices=KINDS, default="normal")
    p.add_argument("--duration", type=int, default=300, help="scenario seconds")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--interval", type=float, default=5.0, help="poll interval seconds")
    p.add_argument("--target", default="sim")
    p.add_argument("--if-index", type=int, default=1)
    p.add_argument("--jitter", type=float, default=None)
    p.add_argument("--param", action="append", default=[], help="custom scenario key=value")
    p.add_argument("--out", default="-", help="trace file ('-' = stdout)")

    p = add("agent", cmd_agent, "serve a synthetic SNMP agent over UDP")
    p.add_argument("--bind", default="127.0.0.1:1161")
    p.add_argument("--kind", choices=KINDS, default=None)
    p.add_argument("--duration", type=int, default=300)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trace", default=None, help="serve a recorded trace instead of a scenario")
    p.add_argument("--community", default="public")
    p.add_argument("--if-index", type=int, action="append", default=None)
    p.add_argument("--clock-multiplier", type=float, default=1.0)
    p.add_argument("--run-for", type=float, default=0, help="exit after N seconds (0 = forever)")

    p = add("replay", cmd_replay, "replay a trace file to stdout or an HTTP sink")
    p.add_argument("--trace", required=True)
    p.add_argument("--sink", default="stdout", help="'stdout' or a URL to POST snapshots to")

    p = add("export-model", cmd_export_model, "copy a stored model to a portable file")
    p.add_argument("model_id")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--out", required=True)

    p = add("import-model", cmd_import_model, "add a portable model file to a store")
    p.add_argument("file")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--activate", action="store_true")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (StoreError, ConfigError, ClassifierError, PipelineError, SynthError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
