"""Command-line surface.

Verbs: ingest, split, train, eval, predict, audit, bench, report, probe,
synth. Machine-readable output goes to stdout, diagnostics to stderr.
Exit codes: 0 success, 1 usage, 2 data error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from . import checkpoint, protocols, reporting, stream, synth, training
from .domains import normalize_domain
from .errors import DataError, DgaDetectError
from .ingest import (
    audit_leakage,
    parse_feed,
    read_canonical,
    stratified_split,
    write_canonical,
    Splits,
)
from .probe import STUB_POLICIES, ProbeConfig, probe_zeroshot
from .tokenizer import encode_batch


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dgadetect",
                     description="DGA / DNS-exfiltration domain classifier toolkit")
    parser.add_argument("--seed", type=int, default=0, help="global seed")
    parser.add_argument("--config", help="experiment spec file (train verb)")
    parser.add_argument("--scale", type=float, default=None,
                        help="uniform size scale for experiment specs")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("ingest", help="parse a feed into canonical CSV")
    p.add_argument("--format", required=True,
                   choices=["alexa_csv", "family_csv", "mixed_csv", "exfil_csv"])
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--report", help="write the rejection report JSON here")

    p = sub.add_parser("split", help="stratified train/val/test split")
    p.add_argument("--input", required=True)
    p.add_argument("--ratios", default="0.3/0.2/0.5")
    p.add_argument("--out-prefix", required=True)

    p = sub.add_parser("train", help="run an experiment spec end to end")
    p.add_argument("--out", required=True, help="result JSON path")
    p.add_argument("--checkpoint", help="also save the trained model here")

    p = sub.add_parser("eval", help="evaluate a checkpoint on a canonical CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--json", action="store_true", help="emit JSON instead of markdown")

    p = sub.add_parser("predict", help="stream domains from stdin or a file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", help="default: stdin")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--rejects", help="write rejected lines here")

    p = sub.add_parser("audit", help="leakage audit over three split CSVs")
    p.add_argument("--train", required=True)
    p.add_argument("--validation", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--threshold", type=float, default=0.99)

    p = sub.add_parser("bench", help="throughput of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--runs", type=int, default=3)

    p = sub.add_parser("report", help="render result JSONs to markdown/CSV")
    p.add_argument("results", nargs="+")
    p.add_argument("--csv", help="write per-class CSV of the first report here")

    p = sub.add_parser("probe", help="zero-shot yes/no probe of a chat endpoint")
    p.add_argument("--input", required=True, help="canonical CSV of labeled domains")
    p.add_argument("--endpoint", default="")
    p.add_argument("--model", default="stub")
    p.add_argument("--stub", choices=sorted(STUB_POLICIES),
                   help="use an in-tree stub instead of the endpoint")
    p.add_argument("--max-domains", type=int, default=None)
    p.add_argument("--timeout", type=float, default=30.0)
    p.add_argument("--auth-env", default=None,
                   help="environment variable holding the bearer token")

    p = sub.add_parser("synth", help="generate a synthetic labeled corpus")
    p.add_argument("--output", required=True)
    p.add_argument("--benign", type=int, default=1000)
    p.add_argument("--families", default="famA:500,famB:500",
                   help="name:count comma list")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except DgaDetectError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


def _dispatch(args) -> int:
    return {
        "ingest": _cmd_ingest, "split": _cmd_split, "train": _cmd_train,
        "eval": _cmd_eval, "predict": _cmd_predict, "audit": _cmd_audit,
        "bench": _cmd_bench, "report": _cmd_report, "probe": _cmd_probe,
        "synth": _cmd_synth,
    }[args.verb](args)


def _cmd_ingest(args) -> int:
    with open(args.input, "r", encoding="utf-8") as fh:
        records, report = parse_feed(fh, args.format)
    write_canonical(records, args.output)
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
    print(json.dumps({"accepted": report.accepted,
                      "rejected": len(report.rejected),
                      "output": args.output}))
    return 0


def _cmd_split(args) -> int:
    records, _ = read_canonical(args.input)
    ratios = tuple(float(x) for x in args.ratios.split("/"))
    splits = stratified_split(records, ratios, args.seed)
    paths = {}
    for name, part in splits.partitions():
        path = f"{args.out_prefix}.{name}.csv"
        write_canonical(part, path)
        paths[name] = {"path": path, "count": len(part)}
    print(json.dumps({"seed": args.seed, "ratios": list(ratios),
                      "partitions": paths}))
    return 0


def _cmd_train(args) -> int:
    if not args.config:
        raise DataError("train requires --config <experiment spec>")
    spec = protocols.load_spec(args.config)
    if args.seed:
        spec.seed = args.seed
    if args.scale is not None:
        spec.scale = args.scale
    result = protocols.run_experiment(spec)
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(result.to_dict(), fh, indent=2, sort_keys=True)
    if args.checkpoint:
        est = result.estimator
        if not hasattr(est, "model_"):
            raise DataError("--checkpoint requires a transformer model spec")
        checkpoint.save_checkpoint(args.checkpoint, est.model_, est.vocab_,
                                   extra={"spec": result.spec})
    print(json.dumps({"out": args.out,
                      "checkpoint_hash": result.metadata["checkpoint_hash"]}))
    return 0


def _load_labeled(path):
    records, _ = read_canonical(path)
    domains = [r.domain for r in records]
    labels = np.array([1 if r.label.malicious else 0 for r in records],
                      dtype=np.int64)
    return records, domains, labels


def _cmd_eval(args) -> int:
    model, vocab, _ = checkpoint.load_checkpoint(args.checkpoint)
    _, domains, labels = _load_labeled(args.input)
    seqs = encode_batch(domains, model.config.max_len, vocab)
    report = training.evaluate(model, (seqs, labels),
                               class_names=["benign", "malicious"])
    if args.json:
        print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    else:
        print(reporting.report_markdown(report.to_dict(), title=args.input))
    return 0


def _cmd_predict(args) -> int:
    model, vocab, _ = checkpoint.load_checkpoint(args.checkpoint)
    lines = open(args.input, "r", encoding="utf-8") if args.input else sys.stdin
    rejects_fh = open(args.rejects, "w", encoding="utf-8") if args.rejects else None

    def on_reject(line, reason):
        target = rejects_fh or sys.stderr
        print(f"{line}\t{reason}", file=target)

    try:
        for out_line in stream.predict_stream(model, vocab, lines,
                                              threshold=args.threshold,
                                              on_reject=on_reject):
            print(out_line)
    finally:
        if args.input:
            lines.close()
        if rejects_fh:
            rejects_fh.close()
    return 0


def _cmd_audit(args) -> int:
    train, _ = read_canonical(args.train)
    val, _ = read_canonical(args.validation)
    test, _ = read_canonical(args.test)
    splits = Splits(train=train, validation=val, test=test,
                    ratios=(0.0, 0.0, 1.0), seed=args.seed)
    report = audit_leakage(splits, concentration_threshold=args.threshold)
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    return 0 if report.verdict == "clean" else 3


def _cmd_bench(args) -> int:
    model, vocab, _ = checkpoint.load_checkpoint(args.checkpoint)
    _, domains, labels = _load_labeled(args.input)
    seqs = encode_batch(domains, model.config.max_len, vocab)
    n = len(seqs)

    from . import neural
    cfg = training.TrainConfig(epochs=1, batch_size=args.batch_size)
    optimizer = training.Adam(model, cfg)

    def train_step():
        for start in range(0, n, args.batch_size):
            batch = seqs[start:start + args.batch_size]
            y = labels[start:start + args.batch_size]
            _, grads = neural.backward(model, batch, y)
            optimizer.step(model, grads)

    def val_step():
        for start in range(0, n, args.batch_size):
            batch = seqs[start:start + args.batch_size]
            y = labels[start:start + args.batch_size]
            neural.loss_class(model, batch, y)
            neural.forward(model, batch)

    def infer_step():
        for start in range(0, n, args.batch_size):
            neural.forward(model, seqs[start:start + args.batch_size])

    rates = {
        "train": training.benchmark(train_step, n, runs=args.runs),
        "validation": training.benchmark(val_step, n, runs=args.runs),
        "inference": training.benchmark(infer_step, n, runs=args.runs),
    }
    print(json.dumps({phase: f"{rate:.1f}" for phase, rate in rates.items()}))
    return 0


def _cmd_report(args) -> int:
    results = []
    for path in args.results:
        with open(path, "r", encoding="utf-8") as fh:
            results.append(json.load(fh))
    print(reporting.render_results(results))
    if args.csv:
        first = results[0]
        key = "test" if "test" in first["reports"] else next(iter(first["reports"]))
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write(reporting.report_csv(first["reports"][key]))
    return 0


def _cmd_probe(args) -> int:
    records, _, _ = _load_labeled(args.input)
    cfg = ProbeConfig(endpoint=args.endpoint, model=args.model,
                      timeout=args.timeout, max_domains=args.max_domains,
                      auth_env=args.auth_env)
    transport = None
    if args.stub:
        truth = {r.domain.text: r.label.malicious for r in records}
        transport = STUB_POLICIES[args.stub](truth)
    elif not args.endpoint:
        raise DataError("probe needs --endpoint or --stub")
    outcome = probe_zeroshot(cfg, records, transport=transport)
    print(json.dumps({
        "accuracy": outcome.report.accuracy,
        "parsed": outcome.parsed,
        "unparseable": outcome.unparseable,
        "report": outcome.report.to_dict(),
    }, indent=2, sort_keys=True))
    return 0


def _cmd_synth(args) -> int:
    family_counts = {}
    for part in args.families.split(","):
        name, _, count = part.partition(":")
        family_counts[name.strip()] = int(count)
    records = synth.make_corpus(args.benign, family_counts, args.seed)
    write_canonical(records, args.output)
    print(json.dumps({"output": args.output, "benign": args.benign,
                      "families": family_counts,
                      "total": len(records)}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
