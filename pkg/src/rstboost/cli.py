"""Command-line harness: synth / train / parse / eval / curve / compare.

Every command writes a ``<artifact>.manifest.json`` next to its primary
output recording the resolved configuration, seeds, input digests, and
per-phase wall-clock timings.  With a fixed seed and fixed inputs the
primary artifacts are byte-identical across runs (manifests are not, as
they contain timings).

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
import time
from pathlib import Path

from . import __version__
from . import boosting, metrics, treebank
from .encoder import CENTER, NUCLEUS, EncoderConfig
from .errors import (
    DocumentMismatch,
    EmptyTreebank,
    InvalidConfig,
    InvalidInput,
    InvalidPrefix,
    InvalidTree,
    MalformedSyntax,
    RelationInventoryMismatch,
    RstBoostError,
)
from .treebank import Document, SynthConfig, Treebank, tokenize_text
from .weak_learner import LearnerConfig, N_STRUCTURE, param_count

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3

_USAGE_ERRORS = (InvalidConfig, InvalidInput, InvalidPrefix)
_DATA_ERRORS = (
    MalformedSyntax,
    InvalidTree,
    EmptyTreebank,
    DocumentMismatch,
    RelationInventoryMismatch,
)

DEFAULT_SHARED_RELATIONS = (
    "attribution", "background", "cause", "contrast", "elaboration", "joint",
)
DEFAULT_DOMAIN_A = "news"
DEFAULT_DOMAIN_B = "chat"
DEFAULT_DOMAIN_RELATIONS = {
    DEFAULT_DOMAIN_A: ("condition", "evidence"),
    DEFAULT_DOMAIN_B: ("restatement", "temporal"),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); remap to exit 1
        raise UsageError(message)


def _sha256(path: Path) -> str:
    return "sha256:" + hashlib.sha256(path.read_bytes()).hexdigest()


def _log(args, msg: str) -> None:
    if not args.quiet:
        print(msg, file=sys.stderr)


def _write_manifest(
    primary: Path,
    command: str,
    args,
    config: dict,
    inputs: list[Path],
    outputs: list[Path],
    timings: dict[str, float],
    extra: dict | None = None,
) -> None:
    manifest = {
        "command": command,
        "toolkit_version": __version__,
        "seed": args.seed,
        "config": config,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": [str(p) for p in outputs],
        "timings_seconds": {k: round(v, 6) for k, v in timings.items()},
    }
    if extra:
        manifest.update(extra)
    path = Path(str(primary) + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=1) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

def _default_synth_config() -> dict:
    return {
        "n_train": 200,
        "n_test": 100,
        "edu_range": [2, 10],
        "shared_vocab": 120,
        "domain_vocab": 40,
        "p_domain": 0.5,
        "domain_a": DEFAULT_DOMAIN_A,
        "domain_b": DEFAULT_DOMAIN_B,
        "shared_relations": list(DEFAULT_SHARED_RELATIONS),
        "domain_relations_a": list(DEFAULT_DOMAIN_RELATIONS[DEFAULT_DOMAIN_A]),
        "domain_relations_b": list(DEFAULT_DOMAIN_RELATIONS[DEFAULT_DOMAIN_B]),
    }


def cmd_synth(args) -> int:
    t0 = time.perf_counter()
    cfg = _default_synth_config()
    inputs = []
    if args.config:
        cfg_path = Path(args.config)
        user = json.loads(cfg_path.read_text(encoding="utf-8"))
        unknown = set(user) - set(cfg)
        if unknown:
            raise InvalidConfig(f"unknown synth config keys: {sorted(unknown)}")
        cfg.update(user)
        inputs.append(cfg_path)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    shared = tuple(cfg["shared_relations"])
    dom_a, dom_b = cfg["domain_a"], cfg["domain_b"]
    rel_a = tuple(cfg["domain_relations_a"])
    rel_b = tuple(cfg["domain_relations_b"])
    full_inventory = tuple(sorted(set(shared) | set(rel_a) | set(rel_b)))

    def build(name: str, n: int, tag: str, rels: tuple, seed: int) -> Treebank:
        sc = SynthConfig(
            n_docs=n,
            edu_range=tuple(cfg["edu_range"]),
            shared_vocab=cfg["shared_vocab"],
            domain_vocab=cfg["domain_vocab"],
            domain_tag=tag,
            shared_relations=shared,
            domain_relations=rels,
            p_domain=cfg["p_domain"],
            name=name,
        )
        tb = treebank.synthesize_treebank(sc, seed)
        # Declare the full cross-domain inventory so that models trained on
        # one domain can be evaluated on the other.
        return dataclasses.replace(tb, relation_inventory=full_inventory)

    t_synth = time.perf_counter()
    files = []
    for name, n, tag, rels, seed in (
        (f"train_{dom_a}", cfg["n_train"], dom_a, rel_a, args.seed),
        (f"test_{dom_a}", cfg["n_test"], dom_a, rel_a, args.seed + 1),
        (f"test_{dom_b}", cfg["n_test"], dom_b, rel_b, args.seed + 2),
    ):
        tb = build(name, n, tag, rels, seed)
        path = out_dir / f"{name}.tb"
        treebank.save_treebank(tb, path)
        files.append(path)
        _log(args, f"wrote {path} ({len(tb)} docs, domain {tag})")
    t_end = time.perf_counter()

    _write_manifest(
        out_dir / "synth", "synth", args, cfg, inputs, files,
        {"total": t_end - t0, "generate_and_write": t_end - t_synth},
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def _encoder_config(args) -> EncoderConfig:
    return EncoderConfig(
        max_span_tokens=args.span_tokens,
        hash_dim=args.hash_dim,
        truncation_strategy=args.strategy,
        hash_seed=args.hash_seed,
    )


def cmd_train(args) -> int:
    t0 = time.perf_counter()
    tb_path = Path(args.treebank)
    tb = treebank.load_treebank(tb_path)
    if len(tb) == 0:
        raise EmptyTreebank(f"treebank {tb_path} has no documents")
    t_load = time.perf_counter()
    enc_cfg = _encoder_config(args)
    learner_cfg = LearnerConfig(
        input_dim=enc_cfg.width,
        n_relations=len(tb.relation_inventory),
        hidden_dim=args.hidden_dim,
        init_scale=args.init_scale,
        learning_rate=args.lr,
        l2_penalty=args.l2,
    )
    boost_cfg = boosting.BoostConfig(
        learner=learner_cfg,
        n_steps=args.steps,
        epochs_max=args.epochs_max,
        patience=args.patience,
        dev_fraction=args.dev_fraction,
        seed=args.seed,
    )
    ensemble, report = boosting.train(tb, boost_cfg, enc_cfg)
    t_train = time.perf_counter()

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    boosting.save_model(ensemble, out)
    report_path = Path(str(out) + ".report.json")
    report_path.write_text(json.dumps(report.to_dict(), indent=1) + "\n",
                           encoding="utf-8")
    t_end = time.perf_counter()
    for s in report.steps:
        _log(args, f"step {s.step}: epochs={s.epochs_run} "
                   f"train_loss={s.final_train_loss:.4f} params={s.param_count} "
                   f"({s.seconds:.1f}s, kept={s.selection})")
    _write_manifest(
        out, "train", args,
        {"boost_config": dataclasses.asdict(boost_cfg),
         "encoder_config": dataclasses.asdict(enc_cfg)},
        [tb_path], [out, report_path],
        {"total": t_end - t0, "load": t_load - t0, "train": t_train - t_load},
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# parse
# ---------------------------------------------------------------------------

def _load_raw_documents(path: Path) -> list[Document]:
    """Raw-EDU format: one EDU per line, blank line between documents."""
    docs = []
    block: list[str] = []

    def flush() -> None:
        if not block:
            return
        edus = []
        for i, line in enumerate(block, start=1):
            tokens = tokenize_text(line)
            if not tokens:
                raise MalformedSyntax(f"document {len(docs) + 1}: empty EDU line")
            edus.append(treebank.EDU(i, tokens))
        docs.append(Document(f"raw-{len(docs):04d}", tuple(edus)))
        block.clear()

    for line in path.read_text(encoding="utf-8").splitlines():
        if line.strip():
            block.append(line)
        else:
            flush()
    flush()
    return docs


def _sniff_treebank(path: Path) -> bool:
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.strip():
            return line.startswith("#doc") or line.startswith("#relations")
    return False


def cmd_parse(args) -> int:
    t0 = time.perf_counter()
    if args.prefix is not None and args.prefix < 1:
        raise UsageError(f"--prefix must be >= 1, got {args.prefix}")
    model_path = Path(args.model)
    ensemble = boosting.load_model(model_path)
    m = args.prefix if args.prefix is not None else len(ensemble.steps)

    in_path = Path(args.input)
    if _sniff_treebank(in_path):
        tb = treebank.load_treebank(in_path)
        docs = [doc for doc, _ in tb.entries]
        domain_tag = tb.domain_tag
    else:
        docs = _load_raw_documents(in_path)
        domain_tag = "raw"
    if not docs:
        raise EmptyTreebank(f"no documents found in {in_path}")
    t_load = time.perf_counter()

    entries = []
    traces = []
    for doc in docs:
        tree, actions = boosting.decode(ensemble, m, doc)
        entries.append((doc, tree))
        traces.append((doc.doc_id, actions))
    t_parse = time.perf_counter()

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    pred = Treebank(out.stem, domain_tag, ensemble.relation_inventory, tuple(entries))
    treebank.save_treebank(pred, out)
    outputs = [out]
    if args.trace:
        trace_path = Path(str(out) + ".trace")
        blocks = []
        for doc_id, actions in traces:
            blocks.append("\n".join([f"#doc {doc_id}"] + [str(a) for a in actions]))
        trace_path.write_text("\n\n".join(blocks) + "\n", encoding="utf-8")
        outputs.append(trace_path)
    t_end = time.perf_counter()
    _log(args, f"parsed {len(docs)} document(s) with prefix {m} -> {out}")
    _write_manifest(
        out, "parse", args,
        {"prefix": m, "model": str(model_path)},
        [model_path, in_path], outputs,
        {"total": t_end - t0, "load": t_load - t0, "parse": t_parse - t_load},
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def _eval_csv(scores: metrics.ParsevalScores, domain: str, docs: int, m: int = 0) -> str:
    sp, sr, sf = scores.span_prf
    np_, nr, nf = scores.nuc_prf
    rp, rr, rf = scores.rel_prf
    row = [str(m), domain, str(docs)] + [
        f"{v:.4f}" for v in (sp, sr, sf, np_, nr, nf, rp, rr, rf)
    ]
    return metrics.CSV_HEADER + "\n" + ",".join(row) + "\n"


def cmd_eval(args) -> int:
    t0 = time.perf_counter()
    gold_path, pred_path = Path(args.gold), Path(args.pred)
    gold = treebank.load_treebank(gold_path)
    pred = treebank.load_treebank(pred_path)
    if len(gold) != len(pred):
        raise DocumentMismatch(
            f"gold has {len(gold)} documents but predictions have {len(pred)}"
        )
    if len(gold) == 0:
        raise EmptyTreebank("nothing to evaluate: both files are empty")
    total = metrics.ZERO_SCORES
    for (gdoc, gtree), (pdoc, ptree) in zip(gold.entries, pred.entries):
        if gdoc.n_edus != pdoc.n_edus:
            raise DocumentMismatch(
                f"document {gdoc.doc_id}: gold has {gdoc.n_edus} EDUs, "
                f"prediction {pdoc.doc_id} has {pdoc.n_edus}"
            )
        total = total + metrics.score(gtree, ptree)
    t_end = time.perf_counter()

    sp, sr, sf = total.span_prf
    np_, nr, nf = total.nuc_prf
    rp, rr, rf = total.rel_prf
    print(f"documents:  {len(gold)}")
    print(f"span        P={sp:.4f} R={sr:.4f} F1={sf:.4f}")
    print(f"nuclearity  P={np_:.4f} R={nr:.4f} F1={nf:.4f}")
    print(f"relation    P={rp:.4f} R={rr:.4f} F1={rf:.4f}")
    if args.csv:
        csv_path = Path(args.csv)
        csv_path.parent.mkdir(parents=True, exist_ok=True)
        csv_path.write_text(_eval_csv(total, gold.domain_tag, len(gold)),
                            encoding="utf-8")
        _write_manifest(
            csv_path, "eval", args, {}, [gold_path, pred_path], [csv_path],
            {"total": t_end - t0},
        )
    return EXIT_OK


# ---------------------------------------------------------------------------
# curve
# ---------------------------------------------------------------------------

def cmd_curve(args) -> int:
    t0 = time.perf_counter()
    model_path = Path(args.model)
    ensemble = boosting.load_model(model_path)
    tb_paths = [Path(p) for p in args.treebanks]
    tbs = [treebank.load_treebank(p) for p in tb_paths]
    t_load = time.perf_counter()
    table = metrics.boost_curve(ensemble, tbs)
    t_eval = time.perf_counter()
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(table.to_csv(), encoding="utf-8")
    t_end = time.perf_counter()
    _log(args, f"wrote {len(table.rows)}-row curve table -> {out}")
    extra = {}
    if table.gaps is not None:
        extra["span_f1_gaps"] = {str(m): round(g, 6) for m, g in table.gaps.items()}
        n = len(ensemble.steps)
        extra["gap_increased_with_steps"] = table.gaps[n] >= table.gaps[1]
    _write_manifest(
        out, "curve", args,
        {"model": str(model_path), "train_domain_tag": ensemble.train_domain_tag},
        [model_path] + tb_paths, [out],
        {"total": t_end - t0, "load": t_load - t0, "evaluate": t_eval - t_load},
        extra=extra,
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# compare
# ---------------------------------------------------------------------------

def matched_hidden_dim(target_params: int, input_dim: int, n_relations: int) -> int:
    """Closed-form hidden width whose parameter count is closest to target."""
    per_unit = input_dim + 1 + N_STRUCTURE + n_relations
    base = N_STRUCTURE + n_relations
    return max(1, round((target_params - base) / per_unit))


def cmd_compare(args) -> int:
    t0 = time.perf_counter()
    tb_path = Path(args.treebank)
    tb = treebank.load_treebank(tb_path)
    if len(tb) < 2:
        raise EmptyTreebank("compare needs at least two documents to hold out")
    enc_cfg = _encoder_config(args)
    n_rel = len(tb.relation_inventory)

    # Seeded held-out split for the final comparison.
    train_entries, eval_entries = boosting.split_dev(tb, args.eval_fraction, args.seed)
    train_tb = dataclasses.replace(tb, entries=train_entries)
    eval_tb = dataclasses.replace(tb, entries=eval_entries, name=tb.name + "-heldout")
    eval_tbs = [eval_tb] + [treebank.load_treebank(Path(p)) for p in args.eval or []]

    def contender(name: str, hidden_dim: int, n_steps: int) -> dict:
        lc = LearnerConfig(
            input_dim=enc_cfg.width, n_relations=n_rel, hidden_dim=hidden_dim,
            init_scale=args.init_scale, learning_rate=args.lr, l2_penalty=args.l2,
        )
        bc = boosting.BoostConfig(
            learner=lc, n_steps=n_steps, epochs_max=args.epochs_max,
            patience=args.patience, dev_fraction=args.dev_fraction, seed=args.seed,
        )
        t_start = time.perf_counter()
        ensemble, report = boosting.train(train_tb, bc, enc_cfg)
        seconds = time.perf_counter() - t_start
        scores = {
            etb.name: metrics.evaluate_treebank(ensemble, len(ensemble.steps), etb).to_dict()
            for etb in eval_tbs
        }
        return {
            "name": name,
            "n_steps": n_steps,
            "hidden_dim": hidden_dim,
            "total_params": sum(param_count(s) for s in ensemble.steps),
            "training_seconds": seconds,
            "epochs_per_step": [s.epochs_run for s in report.steps],
            "scores": scores,
        }

    weak = contender("boosted-weak", args.hidden_dim, args.steps)
    strong_hidden = args.hidden_dim
    matched = None
    if args.match_params:
        strong_hidden = matched_hidden_dim(weak["total_params"], enc_cfg.width, n_rel)
    strong = contender("single-strong", strong_hidden, 1)
    if args.match_params:
        delta = abs(strong["total_params"] - weak["total_params"]) / weak["total_params"]
        matched = {
            "target_params": weak["total_params"],
            "matched_hidden_dim": strong_hidden,
            "relative_param_gap": delta,
            "within_5_percent": delta <= 0.05,
        }
        if delta > 0.05:
            _log(args, f"warning: NoMatchingWidth - closest hidden_dim {strong_hidden} "
                       f"leaves a {delta:.1%} parameter gap")

    report = {
        "contenders": [weak, strong],
        "param_ratio": strong["total_params"] / weak["total_params"],
        "match_params": matched,
        "eval_documents": {etb.name: len(etb) for etb in eval_tbs},
    }
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(report, indent=1) + "\n", encoding="utf-8")
    t_end = time.perf_counter()
    _log(args, f"params weak={weak['total_params']} strong={strong['total_params']} "
               f"({weak['training_seconds']:.1f}s vs {strong['training_seconds']:.1f}s)")
    _write_manifest(
        out, "compare", args,
        {"steps": args.steps, "hidden_dim": args.hidden_dim,
         "match_params": bool(args.match_params),
         "encoder_config": dataclasses.asdict(enc_cfg)},
        [tb_path] + [Path(p) for p in args.eval or []], [out],
        {"total": t_end - t0},
        extra={"no_matching_width_warning":
               bool(matched and not matched["within_5_percent"])},
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _add_encoder_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--hash-dim", type=int, default=1024,
                   help="hashed bag-of-words buckets per block")
    p.add_argument("--span-tokens", type=int, default=8,
                   help="maximum tokens kept per span representation")
    p.add_argument("--strategy", choices=[CENTER, NUCLEUS], default=NUCLEUS,
                   help="span truncation strategy")
    p.add_argument("--hash-seed", type=int, default=0)


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--hidden-dim", type=int, default=16)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--l2", type=float, default=0.0)
    p.add_argument("--init-scale", type=float, default=1.0)
    p.add_argument("--epochs-max", type=int, default=30)
    p.add_argument("--patience", type=int, default=3)
    p.add_argument("--dev-fraction", type=float, default=0.1)
    _add_encoder_flags(p)


def build_parser() -> _Parser:
    parser = _Parser(prog="rstboost",
                     description="Gradient-boosted weak shift-reduce discourse parsing")
    parser.add_argument("--seed", type=int, default=0, help="master random seed")
    parser.add_argument("--quiet", action="store_true", help="suppress progress output")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic treebank files")
    p.add_argument("--config", help="JSON file overriding the default synth settings")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a boosted ensemble")
    p.add_argument("treebank", help="training treebank file")
    p.add_argument("--out", required=True, help="output model JSON path")
    p.add_argument("--steps", type=int, default=5, help="number of boosting steps")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("parse", help="parse documents with a trained model")
    p.add_argument("model", help="model JSON path")
    p.add_argument("input", help="treebank file or raw-EDU file")
    p.add_argument("--out", required=True, help="output treebank path")
    p.add_argument("--prefix", type=int, default=None,
                   help="use only the first m boosting steps (default: all)")
    p.add_argument("--trace", action="store_true",
                   help="also write a shift-reduce action trace")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("eval", help="score predicted trees against gold trees")
    p.add_argument("gold", help="gold treebank file")
    p.add_argument("pred", help="predicted treebank file")
    p.add_argument("--csv", help="optional CSV output path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("curve", help="prefix-by-domain evaluation table")
    p.add_argument("model", help="model JSON path")
    p.add_argument("treebanks", nargs="+", help="one or more evaluation treebanks")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("compare",
                       help="boosted weak ensemble vs single strong classifier")
    p.add_argument("treebank", help="treebank to train and evaluate on")
    p.add_argument("--steps", type=int, default=5)
    p.add_argument("--match-params", action="store_true",
                   help="width-match the single classifier to the ensemble total")
    p.add_argument("--eval", nargs="*", help="additional evaluation treebanks")
    p.add_argument("--eval-fraction", type=float, default=0.2,
                   help="held-out fraction of the input treebank")
    p.add_argument("--out", required=True, help="output report JSON path")
    _add_train_flags(p)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except RstBoostError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
