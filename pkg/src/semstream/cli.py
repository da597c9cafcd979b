"""Command-line interface.

Subcommands: synth-data, train, decode-offline, decode-stream, eval,
build-pairs, grad-check, oracle-check. Every subcommand takes --seed and is
bit-reproducible for a fixed seed. On failure the process exits nonzero with
one machine-parseable stderr line: ``error: <category>: <message>``.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import data as dataio
from . import pairs as pairmod
from . import report as reportmod
from .chunkmask import ChunkSpec, ms_to_frames
from .config import load_config
from .encoder import downsampled_length
from .errors import DataError, ParameterError, SemstreamError
from .evaluate import align, bootstrap_ci, corpus_wer, tokenize
from .gradcheck import check_gradients, standard_op_checks
from .model import TransducerModel, finite_difference_model_check, toy_gradcheck_case
from .oracles import mask_by_rule, rnnt_loss_by_enumeration
from .rng import CounterRng
from .streaming import open_stream
from .synth import SynthSpec, generate, write_dataset
from .tensor import Tensor
from .train import train_model
from .transducer import rnnt_loss

PROG = "semstream"


def _maybe_unlimited(raw: Optional[str]) -> Optional[int]:
    if raw is None or raw.lower() in ("unlimited", "none"):
        return None
    return int(raw)


def _add_seed(parser):
    parser.add_argument("--seed", type=int, default=0, help="deterministic seed")


# ---------------------------------------------------------------------------
# synth-data
# ---------------------------------------------------------------------------


def cmd_synth_data(args) -> int:
    spec = SynthSpec(
        num_utterances=args.utterances,
        num_speakers=args.speakers,
        feat_dim=args.feat_dim,
        frames_per_word=args.frames_per_word,
        noise=args.noise,
    )
    ds = generate(spec, seed=args.seed)
    paths = write_dataset(ds, args.out)
    for name, path in sorted(paths.items()):
        print(f"{name}\t{path}")
    return 0


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def _overrides(pairs: List[str]) -> Dict[str, str]:
    out = {}
    for item in pairs:
        if "=" not in item:
            raise ParameterError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def cmd_train(args) -> int:
    overrides = _overrides(args.set)
    if args.seed is not None:
        overrides.setdefault("seed", str(args.seed))
    if args.steps is not None:
        overrides.setdefault("steps", str(args.steps))
    cfg = load_config(args.config, overrides)
    log_fh = open(args.log, "w", encoding="utf-8") if args.log else None
    try:
        model, logs = train_model(
            cfg, args.manifest, args.vocab, checkpoint_path=args.out,
            log_stream=log_fh,
        )
    finally:
        if log_fh:
            log_fh.close()
    for entry in logs if args.verbose else logs[-1:]:
        print(entry.line())
    if args.figure and logs:
        reportmod.render_loss_curves(args.figure, logs)
    return 0


# ---------------------------------------------------------------------------
# decoding
# ---------------------------------------------------------------------------


def _load_decode_inputs(args):
    model = TransducerModel.load(args.ckpt)
    vocab = dataio.read_vocab(args.vocab)
    if vocab.size != model.cfg.vocab_size:
        raise DataError(
            f"vocabulary has {vocab.size} symbols, checkpoint expects "
            f"{model.cfg.vocab_size}"
        )
    dataset = dataio.load_manifest_features(args.manifest)
    return model, vocab, dataset


def cmd_decode_offline(args) -> int:
    model, vocab, dataset = _load_decode_inputs(args)
    left = _maybe_unlimited(args.left_chunks)
    window = _maybe_unlimited(args.ctx_window)
    rows = []
    for rec, feats in dataset:
        total = downsampled_length(feats.shape[0])
        spec = None
        if args.chunk_ms is not None:
            frames = min(ms_to_frames(args.chunk_ms, model.cfg.frame_ms), total)
            spec = ChunkSpec(chunk_frames=frames, left_chunks=left, total_frames=total)
        emissions = model.decode_offline(feats, spec, ctx_window=window)
        rows.append((rec.utterance_id, vocab.decode([e.token_id for e in emissions])))
    dataio.write_transcripts(args.out, rows)
    print(f"decoded {len(rows)} utterances -> {args.out}")
    return 0


def cmd_decode_stream(args) -> int:
    model, vocab, dataset = _load_decode_inputs(args)
    left = _maybe_unlimited(args.left_chunks)
    window = _maybe_unlimited(args.ctx_window)
    chunk_frames = ms_to_frames(args.chunk_ms, model.cfg.frame_ms)
    rows = []
    trace_lines = []
    for rec, feats in dataset:
        frames = min(chunk_frames, downsampled_length(feats.shape[0]))
        stream = open_stream(model, frames, left_chunks=left, ctx_window=window)
        raw_per_push = frames * 4
        for start in range(0, feats.shape[0], raw_per_push):
            stream.push_chunk(feats[start : start + raw_per_push])
        stream.close_stream()
        emissions = stream.emissions
        rows.append((rec.utterance_id, vocab.decode([e.token_id for e in emissions])))
        if args.trace:
            for e in emissions:
                symbol = vocab.symbols[e.token_id]
                trace_lines.append(f"{rec.utterance_id}\t{symbol}\t{e.frame_index}")
    dataio.write_transcripts(args.out, rows)
    if args.trace:
        Path(args.trace).write_text(
            "\n".join(trace_lines) + ("\n" if trace_lines else ""), encoding="utf-8"
        )
    print(f"decoded {len(rows)} utterances -> {args.out}")
    return 0


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------


def _parse_named(values: List[str], flag: str) -> Dict[str, str]:
    out: Dict[str, str] = {}
    for item in values:
        if "=" not in item:
            raise ParameterError(f"{flag} expects NAME=PATH, got {item!r}")
        name, path = item.split("=", 1)
        if name in out:
            raise ParameterError(f"duplicate condition {name!r} for {flag}")
        out[name] = path
    return out


def _eval_cell(refs: Dict[str, str], hyp_path: str, lowercase: bool,
               resamples: int, seed: int) -> reportmod.EvalCell:
    hyps = dataio.read_transcripts(hyp_path)
    missing = sorted(set(refs) - set(hyps))
    if missing:
        raise DataError(f"{hyp_path}: missing hypotheses for {missing[:3]}")
    pairs = []
    per_utt = []
    for utt_id in sorted(refs):
        ref_words = tokenize(refs[utt_id], lowercase)
        hyp_words = tokenize(hyps[utt_id], lowercase)
        pairs.append((ref_words, hyp_words))
        counts = align(ref_words, hyp_words)
        per_utt.append((counts.errors, counts.reference_words))
    wer, totals = corpus_wer(pairs)
    ci = bootstrap_ci(per_utt, resamples=resamples, seed=seed)
    return reportmod.EvalCell(wer=wer, ci=ci, counts=totals)


def cmd_eval(args) -> int:
    refs = dataio.read_transcripts(args.ref)
    hyp_map = _parse_named(args.hyp, "--hyp")
    base_map = _parse_named(args.baseline, "--baseline") if args.baseline else {}
    conditions = list(hyp_map)
    if base_map and sorted(base_map) != sorted(hyp_map):
        raise ParameterError(
            "--baseline conditions must match --hyp conditions "
            f"({sorted(base_map)} vs {sorted(hyp_map)})"
        )
    systems = []
    if base_map:
        cells = {
            cond: _eval_cell(refs, path, args.lowercase, args.resamples, args.seed)
            for cond, path in base_map.items()
        }
        systems.append(reportmod.SystemEval(args.baseline_name, cells))
    cells = {
        cond: _eval_cell(refs, path, args.lowercase, args.resamples, args.seed)
        for cond, path in hyp_map.items()
    }
    systems.append(reportmod.SystemEval(args.system_name, cells))
    text = reportmod.format_results_table(systems, conditions)
    for cond in conditions:
        text += "\n\n" + reportmod.format_edit_breakdown(systems, cond)
    print(text)
    if args.report_dir:
        paths = reportmod.write_report(args.report_dir, systems, conditions)
        for name, path in sorted(paths.items()):
            print(f"{name}\t{path}")
    return 0


# ---------------------------------------------------------------------------
# build-pairs
# ---------------------------------------------------------------------------


def cmd_build_pairs(args) -> int:
    corpus = pairmod.read_corpus(args.corpus)
    candidates = pairmod.read_candidates(args.candidates)
    scorer = pairmod.TokenOverlapScorer()
    rng = CounterRng(args.seed)
    paraphrases = {}
    for utt in corpus:
        cands = candidates.get(utt.id, [])
        if not cands:
            continue
        kept = pairmod.filter_candidates(utt, cands, scorer)
        chosen = pairmod.select_paraphrase(kept, rng.derive(f"select:{utt.id}"))
        if chosen is not None:
            paraphrases[utt.id] = chosen.text
    triplets = pairmod.build_triplets(corpus, paraphrases, rng.derive("labels"))
    pairmod.write_triplets(args.out, triplets)
    positives = sum(1 for t in triplets if t.label >= 0.8)
    print(
        f"wrote {len(triplets)} triplets ({positives} positive, "
        f"{len(triplets) - positives} negative) -> {args.out}"
    )
    return 0


# ---------------------------------------------------------------------------
# grad-check / oracle-check
# ---------------------------------------------------------------------------


def cmd_grad_check(args) -> int:
    dtype = np.float32 if args.dtype == 32 else np.float64
    tol = 1e-3 if args.dtype == 32 else 1e-6
    step = 1e-3 if args.dtype == 32 else 1e-5
    failures = 0
    worst: Dict[str, float] = {}
    for instance in range(args.instances):
        rng = CounterRng(args.seed).derive(f"ops{instance}")
        for name, fn, inputs in standard_op_checks(rng):
            res = check_gradients(fn, inputs, step=step, dtype=dtype, name=name)
            worst[name] = max(worst.get(name, 0.0), res.max_rel_err)
    for name in sorted(worst):
        status = "PASS" if worst[name] < tol else "FAIL"
        if status == "FAIL":
            failures += 1
        print(f"{name}\t{worst[name]:.3e}\t{status}")
    # composite loss at production precision
    comp_worst = 0.0
    for instance in range(args.instances):
        case = toy_gradcheck_case(args.seed + instance)
        model = case["model"]
        names = sorted(model.params)
        crng = CounterRng(args.seed).derive(f"coords{instance}")
        coords = []
        for _ in range(args.coords):
            nm = names[crng.randint(0, len(names))]
            coords.append((nm, crng.randint(0, model.params[nm].data.size)))
        err = finite_difference_model_check(
            model, case["features"], case["targets"], case["teacher"],
            case["spec"], load_config().loss_weights(), coords,
        )
        comp_worst = max(comp_worst, err)
    status = "PASS" if comp_worst < 1e-3 else "FAIL"
    if status == "FAIL":
        failures += 1
    print(f"composite_loss\t{comp_worst:.3e}\t{status}")
    return 1 if failures else 0


def cmd_oracle_check(args) -> int:
    rng = CounterRng(args.seed)
    failures = 0

    worst = 0.0
    cases = 0
    for trial in range(args.cases):
        t_len = rng.randint(1, 5)
        u_len = rng.randint(0, 4)
        vocab = rng.randint(2, 6)
        raw = rng.normal((t_len, u_len + 1, vocab))
        lp = raw - np.log(np.exp(raw).sum(-1, keepdims=True))
        targets = [rng.randint(1, vocab) for _ in range(u_len)]
        for lam in (0.0, 0.006):
            mine = rnnt_loss(Tensor(lp, dtype=np.float64), targets, fastemit_lambda=lam).item()
            oracle = rnnt_loss_by_enumeration(lp, targets, fastemit_lambda=lam)
            worst = max(worst, abs(mine - oracle))
            cases += 1
    status = "PASS" if worst < 1e-6 else "FAIL"
    failures += status == "FAIL"
    print(f"transducer_loss_vs_enumeration\t{cases} cases\tmax|diff|={worst:.3e}\t{status}")

    from .chunkmask import build_mask

    bad = 0
    checked = 0
    for total in range(1, 13):
        for size in range(1, total + 1):
            chunks = -(-total // size)
            for left in list(range(0, chunks + 1)) + [None]:
                spec = ChunkSpec(chunk_frames=size, left_chunks=left, total_frames=total)
                if not np.array_equal(build_mask(spec), mask_by_rule(total, size, left)):
                    bad += 1
                checked += 1
    status = "PASS" if bad == 0 else "FAIL"
    failures += status == "FAIL"
    print(f"mask_vs_entrywise_rule\t{checked} specs\tmismatches={bad}\t{status}")
    return 1 if failures else 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=PROG,
        description="Chunk-streaming transducer ASR with semantic context embeddings",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", help="generate a synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--utterances", type=int, default=200)
    p.add_argument("--speakers", type=int, default=5)
    p.add_argument("--feat-dim", type=int, default=8)
    p.add_argument("--frames-per-word", type=int, default=8)
    p.add_argument("--noise", type=float, default=0.05)
    _add_seed(p)
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser("train", help="train a model on a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--config", default=None, help="key = value config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--log", default=None, help="write per-step loss TSV here")
    p.add_argument("--figure", default=None, help="write a loss-curve figure here")
    p.add_argument("--verbose", action="store_true", help="print every step line")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_train)

    for name, streaming in (("decode-offline", False), ("decode-stream", True)):
        p = sub.add_parser(name, help=f"{name.replace('-', ' ')} a manifest")
        p.add_argument("--ckpt", required=True)
        p.add_argument("--manifest", required=True)
        p.add_argument("--vocab", required=True)
        p.add_argument("--out", required=True, help="transcript TSV path")
        p.add_argument(
            "--chunk-ms", type=float, default=None, required=streaming,
            help="chunk size in milliseconds" + ("" if streaming else " (default: full context)"),
        )
        p.add_argument("--left-chunks", default="unlimited",
                       help="attention left context in chunks, or 'unlimited'")
        p.add_argument("--ctx-window", default="unlimited",
                       help="context-module window in chunks, or 'unlimited'")
        if streaming:
            p.add_argument("--trace", default=None,
                           help="write per-token (symbol, frame) trace lines here")
        _add_seed(p)
        p.set_defaults(func=cmd_decode_stream if streaming else cmd_decode_offline)

    p = sub.add_parser("eval", help="WER report with bootstrap confidence intervals")
    p.add_argument("--ref", required=True, help="reference transcripts TSV")
    p.add_argument("--hyp", action="append", required=True, metavar="NAME=PATH",
                   help="hypothesis transcripts per condition (repeatable)")
    p.add_argument("--baseline", action="append", default=[], metavar="NAME=PATH",
                   help="baseline hypothesis transcripts per condition")
    p.add_argument("--system-name", default="system")
    p.add_argument("--baseline-name", default="baseline")
    p.add_argument("--resamples", type=int, default=1000)
    p.add_argument("--lowercase", action="store_true")
    p.add_argument("--report-dir", default=None,
                   help="write report.txt, report.tsv, and wer.png here")
    _add_seed(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("build-pairs", help="build teacher fine-tuning triplets")
    p.add_argument("--corpus", required=True, help="id<TAB>speaker<TAB>text lines")
    p.add_argument("--candidates", required=True, help="id<TAB>candidate lines")
    p.add_argument("--out", required=True)
    _add_seed(p)
    p.set_defaults(func=cmd_build_pairs)

    p = sub.add_parser("grad-check", help="finite-difference gradient suite")
    p.add_argument("--instances", type=int, default=20)
    p.add_argument("--coords", type=int, default=40,
                   help="sampled parameter coordinates per composite instance")
    p.add_argument("--dtype", type=int, choices=(32, 64), default=32)
    _add_seed(p)
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("oracle-check", help="brute-force loss and mask oracles")
    p.add_argument("--cases", type=int, default=100)
    _add_seed(p)
    p.set_defaults(func=cmd_oracle_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SemstreamError as exc:
        print(f"error: {exc.category}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
