"""Command-line entry point: ``cserkit <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data or validation error,
3 numeric failure (non-finite values or a failed gradient check).

Every run writes a JSON manifest (subcommand, effective config, seed, input
and output digests, wall-clock, version) next to its primary output, or to
``--manifest``. Run ``cserkit <subcommand> --help`` for the file formats.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from . import dataops, evalkit, gradcheck, trainer
from . import encoder as enc
from .deptree import ConllParseError, TreeValidationError, iter_conllu, read_conllu
from .examplegen import (DEFAULT_K, TASKS, Vocab, build_vocab, generate_examples, make_header,
                         read_examples, write_examples)

log = logging.getLogger("cserkit")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

CONFIG_SECTIONS = ("encoder", "pretrain", "finetune", "gradcheck")
# fine-tuning defaults differ from pre-training: few epochs, decoupled decay on
FINETUNE_DEFAULTS = {"epochs": 4, "weight_decay": 0.01, "warmup": 0, "batch_size": 32}
GRADCHECK_KEYS = ("hidden", "heads", "layers", "vocab_size", "max_len", "coords", "jitter")

FORMATS_HELP = """\
file formats:
  CoNLL-U        10 tab-separated columns; ID, FORM, HEAD, DEPREL are read.
  labeled data   one JSON object per line: {"id", "text", "label": 0|1, "error_type"?}
  examples       JSON lines; first line is the header {format_version, vocab_hash, max_len}
  vocabulary     JSON {"format_version", "tokens": [...]}, ids 0-4 reserved
  checkpoint     b"CSERCKP1", uint32 LE header length, JSON header, float32 LE arrays
  config         JSON with optional sections "encoder", "pretrain", "finetune", "gradcheck"
"""


class UsageError(Exception):
    pass


class ConfigError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# ---------------------------------------------------------------------------
# manifest

def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    subcommand: str
    config: dict
    seed: Optional[int]
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)
    argv: list[str] = field(default_factory=list)
    started_at: str = ""
    wall_clock_s: float = 0.0
    exit_code: int = 0
    version: str = __version__

    def write(self, path) -> None:
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(json.dumps(asdict(self), ensure_ascii=False, indent=2, sort_keys=True) + "\n",
                       encoding="utf-8")
        tmp.replace(path)

    @classmethod
    def read(cls, path) -> "RunManifest":
        return cls(**json.loads(Path(path).read_text(encoding="utf-8")))

    def stale_inputs(self) -> list[str]:
        """Inputs whose current digest differs from the recorded one (or that vanished)."""
        return [p for p, d in self.inputs.items() if not Path(p).exists() or sha256_file(p) != d]


class _Run:
    """Collects what a subcommand read and wrote for its manifest."""

    def __init__(self, sub: str, args: argparse.Namespace, argv: Sequence[str]):
        self.manifest = RunManifest(sub, {}, getattr(args, "seed", None), argv=list(argv))
        self.args = args
        self.primary: Optional[Path] = None
        self.t0 = time.perf_counter()
        self.manifest.started_at = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")

    def read(self, path) -> Path:
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"no such file: {path}")
        self.manifest.inputs[str(path)] = sha256_file(path)
        return path

    def wrote(self, path, primary: bool = False) -> None:
        path = Path(path)
        if primary or self.primary is None:
            self.primary = path
        self.manifest.outputs[str(path)] = sha256_file(path)

    def finish(self, code: int) -> Path:
        self.manifest.exit_code = code
        self.manifest.wall_clock_s = round(time.perf_counter() - self.t0, 3)
        if self.args.manifest:
            path = Path(self.args.manifest)
        elif self.primary is not None:
            path = self.primary.with_name(self.primary.name + ".manifest.json")
        else:
            path = Path(f"cserkit-{self.manifest.subcommand}.manifest.json")
        self.manifest.write(path)
        return path


# ---------------------------------------------------------------------------
# config

def load_config(path: Optional[str], run: Optional[_Run] = None) -> dict:
    if path is None:
        return {}
    p = run.read(path) if run else Path(path)
    try:
        cfg = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be an object")
    unknown = set(cfg) - set(CONFIG_SECTIONS)
    if unknown:
        raise ConfigError(f"{path}: unknown sections {sorted(unknown)}; allowed {list(CONFIG_SECTIONS)}")
    for sec, body in cfg.items():
        if not isinstance(body, dict):
            raise ConfigError(f"{path}: section {sec!r} must be an object")
    enc_keys = set(enc.EncoderConfig.__dataclass_fields__) - {"vocab_size", "num_classes"}
    bad = set(cfg.get("encoder", {})) - enc_keys
    if bad:
        raise ConfigError(f"{path}: unknown encoder keys {sorted(bad)}")
    for sec in ("pretrain", "finetune"):
        bad = set(cfg.get(sec, {})) - set(trainer.TrainConfig.__dataclass_fields__)
        if bad:
            raise ConfigError(f"{path}: unknown {sec} keys {sorted(bad)}")
    bad = set(cfg.get("gradcheck", {})) - set(GRADCHECK_KEYS)
    if bad:
        raise ConfigError(f"{path}: unknown gradcheck keys {sorted(bad)}")
    return cfg


def _train_config(section: dict, defaults: dict, overrides: dict) -> trainer.TrainConfig:
    merged = {**defaults, **section, **{k: v for k, v in overrides.items() if v is not None}}
    try:
        return trainer.TrainConfig.from_dict(merged)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _read_text(path: Path) -> str:
    return path.read_text(encoding="utf-8")


def _parse_tasks(s: str) -> tuple[str, ...]:
    tasks = tuple(t.strip() for t in s.split(",") if t.strip())
    bad = [t for t in tasks if t not in TASKS]
    if bad or not tasks:
        raise UsageError(f"--tasks: unknown task(s) {bad}; choose from {','.join(TASKS)}")
    return tasks


# ---------------------------------------------------------------------------
# subcommands

def cmd_parse_validate(args, run: _Run) -> int:
    text = _read_text(run.read(args.conllu))
    n_ok, errors, lengths = 0, [], []
    for item in iter_conllu(text):
        if isinstance(item, (ConllParseError, TreeValidationError)):
            errors.append(str(item))
            print(f"INVALID {item}")
        else:
            n_ok += 1
            lengths.append(len(item))
    summary = {"sentences": n_ok + len(errors), "valid": n_ok, "invalid": len(errors),
               "words": sum(lengths), "max_words": max(lengths, default=0), "errors": errors}
    run.manifest.config = {"conllu": args.conllu}
    print(f"{summary['sentences']} sentences: {n_ok} valid, {len(errors)} invalid, "
          f"{summary['words']} words")
    if args.output:
        Path(args.output).write_text(json.dumps(summary, ensure_ascii=False, sort_keys=True) + "\n",
                                     encoding="utf-8")
        run.wrote(args.output, primary=True)
    return EXIT_DATA if errors else EXIT_OK


def cmd_build_vocab(args, run: _Run) -> int:
    path = run.read(args.corpus)
    fmt = args.format
    if fmt == "auto":
        suffix = path.suffix.lower()
        fmt = "conllu" if suffix in (".conllu", ".conll") else "labeled" if suffix == ".jsonl" else "text"
    if fmt == "conllu":
        corpus = ["".join(t.forms) for t in read_conllu(_read_text(path))]
    elif fmt == "labeled":
        corpus = [s.text for s in dataops.read_labeled(path)]
    else:
        corpus = _read_text(path).splitlines()
    try:
        vocab = build_vocab(corpus, args.min_freq)
    except ValueError as exc:
        raise dataops.DataError(str(exc)) from None
    vocab.save(args.output)
    run.wrote(args.output, primary=True)
    run.manifest.config = {"format": fmt, "min_freq": args.min_freq}
    print(f"{len(vocab)} tokens ({len(vocab) - 5} characters), hash {vocab.hash()}")
    return EXIT_OK


def cmd_gen_examples(args, run: _Run) -> int:
    tasks = _parse_tasks(args.tasks)
    trees = read_conllu(_read_text(run.read(args.conllu)))
    if args.vocab:
        vocab = Vocab.load(run.read(args.vocab))
    else:
        vocab = build_vocab("".join(t.forms) for t in trees)
        vpath = Path(args.output).with_name(Path(args.output).name + ".vocab.json")
        vocab.save(vpath)
        run.wrote(vpath)
    exs = list(generate_examples(trees, vocab, tasks, k=args.k, seed=args.seed, max_len=args.max_len,
                                 mlm_rate=args.mlm_rate, cooccur=args.cooccur))
    write_examples(args.output, make_header(vocab, args.max_len), exs)
    run.wrote(args.output, primary=True)
    counts = trainer.split_by_task(exs)
    run.manifest.config = {"tasks": list(tasks), "k": args.k, "max_len": args.max_len,
                           "mlm_rate": args.mlm_rate, "cooccur": args.cooccur,
                           "vocab_hash": vocab.hash()}
    print(f"{len(trees)} trees -> {len(exs)} examples: "
          + ", ".join(f"{t}={len(v)}" for t, v in sorted(counts.items())))
    return EXIT_OK


def _load_examples(path: Path, vocab: Vocab):
    header, exs = read_examples(path)
    if header.get("vocab_hash") != vocab.hash():
        raise dataops.DataError(f"{path}: vocab hash {header.get('vocab_hash')} does not match "
                                f"vocabulary {vocab.hash()}")
    return header, exs


def cmd_pretrain(args, run: _Run) -> int:
    cfg = load_config(args.config, run)
    vocab = Vocab.load(run.read(args.vocab))
    header, exs = _load_examples(run.read(args.examples), vocab)
    dev = _load_examples(run.read(args.dev_examples), vocab)[1] if args.dev_examples else None
    enc_d = {"max_len": header["max_len"], **cfg.get("encoder", {}), "vocab_size": len(vocab)}
    try:
        enc_cfg = enc.EncoderConfig.from_dict(enc_d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    longest = max((len(e.input_ids) for e in exs), default=0)
    if longest > enc_cfg.max_len:
        raise ConfigError(f"examples reach length {longest} but encoder max_len is {enc_cfg.max_len}")
    tcfg = _train_config(cfg.get("pretrain", {}), {},
                         {"tasks": args.tasks, "seed": args.seed, "steps": args.steps})
    run.manifest.seed = tcfg.seed
    run.manifest.config = {"encoder": enc_cfg.to_dict(), "pretrain": tcfg.to_dict()}
    out = Path(args.output)
    log_path = out.with_name(out.name + ".log.jsonl")
    with open(log_path, "w", encoding="utf-8") as fh:
        def on_record(rec):
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
            fh.flush()
            if rec["step"] % tcfg.eval_every == 0:
                log.info("step %d %s loss %.4f", rec["step"], rec["task"], rec["loss"])
        res = trainer.pretrain(exs, enc_cfg, tcfg, dev_examples=dev, on_record=on_record)
    extra = trainer.checkpoint_extra(vocab, stage="pretrain", train_config=tcfg.to_dict())
    enc.save_checkpoint(out, res.params, vocab.hash(), {**extra, "step": res.total_steps})
    run.wrote(out, primary=True)
    run.wrote(log_path)
    if res.best_params is not None:
        best = out.with_name(out.name + ".best")
        enc.save_checkpoint(best, res.best_params, vocab.hash(), {**extra, "step": res.best_step})
        run.wrote(best)
    last = [r for r in res.log if "dev_metrics" in r]
    msg = f"{res.total_steps} steps over {sorted(set(r['task'] for r in res.log))}"
    if last:
        msg += "; dev " + ", ".join(f"{t} acc {m['accuracy']:.4f}"
                                    for t, m in sorted(last[-1]["dev_metrics"].items()))
        msg += f"; best step {res.best_step}"
    print(msg)
    return EXIT_OK


def _load_ckpt(run: _Run, path) -> tuple[enc.EncoderParams, dict, Vocab]:
    p, header = enc.load_checkpoint(run.read(path))
    vocab = trainer.vocab_from_header(header)
    if vocab.hash() != header["manifest"]["vocab_hash"]:
        raise dataops.DataError(f"{path}: embedded vocabulary does not match its recorded hash")
    return p, header, vocab


def cmd_finetune(args, run: _Run) -> int:
    cfg = load_config(args.config, run)
    p0, _, vocab = _load_ckpt(run, args.ckpt)
    if "encoder" in cfg and "dropout" in cfg["encoder"]:
        p0.cfg.dropout = float(cfg["encoder"]["dropout"])
    train = dataops.read_labeled(run.read(args.data))
    dev = dataops.read_labeled(run.read(args.dev)) if args.dev else None
    tcfg = _train_config(cfg.get("finetune", {}), FINETUNE_DEFAULTS,
                         {"seed": args.seed, "epochs": args.epochs,
                          "frozen_encoder": True if args.frozen_encoder else None})
    run.manifest.seed = tcfg.seed
    run.manifest.config = {"finetune": tcfg.to_dict(), "dropout": p0.cfg.dropout}
    res = trainer.finetune(p0, vocab, train, dev, tcfg)
    out = Path(args.output)
    extra = trainer.checkpoint_extra(vocab, stage="finetune", train_config=tcfg.to_dict(),
                                     best_epoch=res.best_epoch)
    enc.save_checkpoint(out, res.params, vocab.hash(), extra)
    log_path = out.with_name(out.name + ".log.jsonl")
    trainer.write_log(log_path, res.log)
    run.wrote(out, primary=True)
    run.wrote(log_path)
    for epoch, rep in enumerate(res.reports, start=1):
        mark = " *" if epoch == res.best_epoch else ""
        print(f"epoch {epoch}: P {rep.precision:.1f} R {rep.recall:.1f} F1 {rep.f1:.1f} "
              f"ACC {rep.accuracy:.1f}{mark}")
    print(f"kept epoch {res.best_epoch}")
    return EXIT_OK


def cmd_eval(args, run: _Run) -> int:
    if args.runs:
        reports = []
        for path in args.runs:
            try:
                reports.append(evalkit.EvalReport.from_dict(json.loads(_read_text(run.read(path)))))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise dataops.DataError(f"{path}: not an evaluation report ({exc})") from None
        agg = evalkit.aggregate_runs(reports)
        run.manifest.config = {"runs": list(args.runs), "name": args.name}
        print(evalkit.RunAggregate.table_header())
        print(agg.table_row(args.name))
        if agg.flags:
            print("flags: " + ", ".join(agg.flags))
        if args.output:
            Path(args.output).write_text(json.dumps(agg.to_dict(), sort_keys=True) + "\n", encoding="utf-8")
            run.wrote(args.output, primary=True)
        return EXIT_OK
    if not (args.ckpt and args.data):
        raise UsageError("eval needs --ckpt and --data, or --runs")
    p, _, vocab = _load_ckpt(run, args.ckpt)
    data = dataops.read_labeled(run.read(args.data))
    if not data:
        raise dataops.DataError(f"{args.data}: no records to score")
    rep = trainer.score(p, vocab, data, per_type=args.per_type)
    run.manifest.config = {"per_type": args.per_type}
    print(f"n {rep.n}: P {rep.precision:.1f} R {rep.recall:.1f} F1 {rep.f1:.1f} ACC {rep.accuracy:.1f}")
    for t, r in rep.per_type_recall.items():
        print(f"  recall[{t}] {r:.1f}")
    if rep.flags:
        print("flags: " + ", ".join(rep.flags))
    if args.output:
        Path(args.output).write_text(rep.to_json() + "\n", encoding="utf-8")
        run.wrote(args.output, primary=True)
    return EXIT_OK


def cmd_dedup(args, run: _Run) -> int:
    cfg = dataops.DedupConfig(args.gamma)
    train = dataops.read_labeled(run.read(args.train))
    held = dataops.read_labeled(run.read(args.heldout))
    kept, rep = dataops.clean_train(train, held, cfg)
    report = {"clean": rep.to_dict()}
    if args.top_k:
        report["top_k"] = [{"train_id": a, "heldout_id": b, "ratio": r}
                           for a, b, r in dataops.top_k_similar(train, held, args.top_k)]
    run.manifest.config = {"gamma": args.gamma, "top_k": args.top_k}
    print(rep.table())
    for row in report.get("top_k", []):
        print(f"top {row['train_id']} ~ {row['heldout_id']}: {row['ratio']:.4f}")
    if args.output:
        dataops.write_labeled(args.output, kept)
        run.wrote(args.output, primary=True)
    rpath = args.report or (args.output + ".report.json" if args.output else None)
    if rpath:
        Path(rpath).write_text(json.dumps(report, ensure_ascii=False, sort_keys=True) + "\n",
                               encoding="utf-8")
        run.wrote(rpath)
    return EXIT_OK


def cmd_split(args, run: _Run) -> int:
    data = dataops.read_labeled(run.read(args.data))
    parts = dataops.split_dataset(data, args.dev, args.test, args.seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    run.manifest.config = {"dev": args.dev, "test": args.test, "prefix": args.prefix}
    for name, part in zip(("train", "dev", "test"), parts):
        path = out_dir / f"{args.prefix}{name}.jsonl"
        dataops.write_labeled(path, part)
        run.wrote(path, primary=name == "train")
        st = dataops.dataset_stats(part)
        print(f"{name}: {st['lines']} lines, error ratio {st['error_ratio']:.1f}%")
    return EXIT_OK


def cmd_stats(args, run: _Run) -> int:
    data = dataops.read_labeled(run.read(args.data))
    st = dataops.dataset_stats(data)
    run.manifest.config = {}
    print(f"lines {st['lines']}  avg_length {st['avg_length']:.1f}  error_ratio {st['error_ratio']:.1f}%"
          + ("  (empty)" if st["empty"] else ""))
    if args.output:
        Path(args.output).write_text(json.dumps(st, sort_keys=True) + "\n", encoding="utf-8")
        run.wrote(args.output, primary=True)
    return EXIT_OK


def cmd_grad_check(args, run: _Run) -> int:
    sec = load_config(args.config, run).get("gradcheck", {})
    shape = {k: sec[k] for k in ("hidden", "heads", "layers", "vocab_size", "max_len") if k in sec}
    try:
        ecfg = gradcheck.check_config(**shape)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    coords = int(sec.get("coords", 25))
    jitter = float(sec.get("jitter", 0.1))
    run.manifest.config = {"encoder": ecfg.to_dict(), "coords": coords, "jitter": jitter,
                           "step": gradcheck.STEP, "tolerance": gradcheck.TOLERANCE}
    results = gradcheck.run(args.seed, ecfg, coords=coords, jitter=jitter)
    worst = {}
    for r in results:
        if args.verbose or not r.ok:
            print(f"{'ok  ' if r.ok else 'FAIL'} {r.head:<9}{r.name:<24}{r.max_rel_err:.2e}")
        worst[r.head] = max(worst.get(r.head, 0.0), r.max_rel_err)
    for head, w in worst.items():
        print(f"{head:<9} max rel err {w:.2e} {'PASS' if w <= gradcheck.TOLERANCE else 'FAIL'}")
    if args.output:
        Path(args.output).write_text(json.dumps([asdict(r) for r in results], sort_keys=True) + "\n",
                                     encoding="utf-8")
        run.wrote(args.output, primary=True)
    return EXIT_OK if all(r.ok for r in results) else EXIT_NUMERIC


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--manifest", help="where to write the run manifest")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = _Parser(prog="cserkit", description="Syntax-aware pre-training and evaluation toolkit "
                 "for sentence-level semantic error recognition.",
                 epilog=FORMATS_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--version", action="version", version=f"cserkit {__version__}")
    sub = ap.add_subparsers(dest="command", metavar="<subcommand>", parser_class=_Parser)
    sub.required = True

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_, description=help_, parents=[common],
                           epilog=FORMATS_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
        p.set_defaults(func=fn)
        return p

    p = add("parse-validate", cmd_parse_validate, "check every tree in a CoNLL-U file")
    p.add_argument("conllu")
    p.add_argument("-o", "--output", help="write a JSON summary here")

    p = add("build-vocab", cmd_build_vocab, "build a character vocabulary")
    p.add_argument("corpus")
    p.add_argument("--format", choices=("auto", "text", "conllu", "labeled"), default="auto")
    p.add_argument("--min-freq", type=int, default=1)
    p.add_argument("-o", "--output", required=True)

    p = add("gen-examples", cmd_gen_examples, "generate MLM / DSP / DSP3 / DRP training examples")
    p.add_argument("conllu")
    p.add_argument("--tasks", default=",".join(TASKS), help="comma list from mlm,dsp,dsp3,drp")
    p.add_argument("--vocab", help="vocabulary file (default: build one and save beside the output)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=int, default=DEFAULT_K, help="pairs per sentence per task")
    p.add_argument("--max-len", type=int, default=128)
    p.add_argument("--mlm-rate", type=float, default=0.15)
    p.add_argument("--cooccur", action="store_true", help="attach MLM corruption to pair examples")
    p.add_argument("-o", "--output", required=True)

    p = add("pretrain", cmd_pretrain, "multi-task pre-training")
    p.add_argument("--examples", required=True)
    p.add_argument("--dev-examples")
    p.add_argument("--vocab", required=True)
    p.add_argument("--config")
    p.add_argument("--tasks", choices=sorted(trainer.TASK_SETS))
    p.add_argument("--seed", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("-o", "--output", required=True)

    p = add("finetune", cmd_finetune, "fine-tune the sentence classifier")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--dev")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--frozen-encoder", action="store_true")
    p.add_argument("-o", "--output", required=True)

    p = add("eval", cmd_eval, "score a checkpoint, or aggregate several report files")
    p.add_argument("--ckpt")
    p.add_argument("--data")
    p.add_argument("--per-type", action="store_true")
    p.add_argument("--runs", nargs="+", help="EvalReport JSON files to aggregate (mean±std)")
    p.add_argument("--name", default="model", help="row label for --runs")
    p.add_argument("-o", "--output")

    p = add("dedup", cmd_dedup, "remove training sentences too similar to held-out ones")
    p.add_argument("--train", required=True)
    p.add_argument("--heldout", required=True)
    p.add_argument("--gamma", type=float, default=0.70)
    p.add_argument("--top-k", type=int, default=0)
    p.add_argument("--report", help="JSON report path (default: <output>.report.json)")
    p.add_argument("-o", "--output", help="cleaned training file")

    p = add("split", cmd_split, "label-balanced dev/test split")
    p.add_argument("--data", required=True)
    p.add_argument("--dev", type=int, required=True)
    p.add_argument("--test", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--prefix", default="")

    p = add("stats", cmd_stats, "line count, mean length, error ratio")
    p.add_argument("--data", required=True)
    p.add_argument("-o", "--output")

    p = add("grad-check", cmd_grad_check, "finite-difference check of every head's gradients")
    p.add_argument("--config")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    run = _Run(args.command, args, argv)
    try:
        code = args.func(args, run)
    except UsageError as exc:
        print(f"cserkit {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except enc.NumericError as exc:
        print(f"cserkit {args.command}: numeric failure: {exc}", file=sys.stderr)
        code = EXIT_NUMERIC
    except (ValueError, OSError, KeyError) as exc:
        # DataError, ConfigError, parse and format errors are all ValueErrors
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"cserkit {args.command}: error: {msg}", file=sys.stderr)
        code = EXIT_DATA
    path = run.finish(code)
    log.info("manifest written to %s", path)
    return code


if __name__ == "__main__":
    sys.exit(main())
