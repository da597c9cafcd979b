import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from semstream import data as dataio
from semstream.cli import main
from semstream.pairs import read_triplets
from semstream.synth import LEXICON, SynthSpec, generate, word_template


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    rc = main(
        [
            "synth-data",
            "--out", str(out),
            "--utterances", "30",
            "--speakers", "5",
            "--seed", "7",
        ]
    )
    assert rc == 0
    return out


@pytest.fixture(scope="module")
def trained(corpus_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("train")
    ckpt = out / "model.ckpt"
    log = out / "log.tsv"
    fig = out / "loss.png"
    rc = main(
        [
            "train",
            "--manifest", str(corpus_dir / "manifest.tsv"),
            "--vocab", str(corpus_dir / "vocab.txt"),
            "--out", str(ckpt),
            "--steps", "40",
            "--seed", "3",
            "--log", str(log),
            "--figure", str(fig),
            "--set", "batch_size=4",
        ]
    )
    assert rc == 0
    return {"ckpt": ckpt, "log": log, "figure": fig, "corpus": corpus_dir}


# -- synth-data -------------------------------------------------------------------


def test_synth_round_robin_speakers():
    ds = generate(SynthSpec(num_utterances=100, num_speakers=5), seed=1)
    per_speaker = {}
    for utt in ds.utterances:
        per_speaker[utt.speaker_id] = per_speaker.get(utt.speaker_id, 0) + 1
    assert per_speaker == {f"spk{i}": 20 for i in range(5)}


def test_synth_zero_noise_exact_templates():
    spec = SynthSpec(num_utterances=5, num_speakers=2, noise=0.0)
    ds = generate(spec, seed=2)
    for utt in ds.utterances:
        expect = np.concatenate(
            [word_template(w, spec.feat_dim, spec.frames_per_word) for w in utt.words]
        )
        assert np.array_equal(utt.features, expect)


def test_synth_same_seed_identical_bytes(tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    for out in (a, b):
        rc = main(["synth-data", "--out", str(out), "--utterances", "12",
                   "--speakers", "3", "--seed", "5"])
        assert rc == 0
    for rel in ("manifest.tsv", "vocab.txt", "refs.tsv", "candidates.tsv",
                "feats/utt0003.feat"):
        assert (a / rel).read_bytes() == (b / rel).read_bytes()


def test_synth_vocab_within_budget(corpus_dir):
    vocab = dataio.read_vocab(corpus_dir / "vocab.txt")
    assert vocab.size <= 12
    assert vocab.symbols[0] == "<blank>"
    assert set(vocab.symbols[1:]) == set(LEXICON)


# -- train ----------------------------------------------------------------------


def test_train_outputs(trained):
    assert trained["ckpt"].exists()
    assert trained["figure"].read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    lines = trained["log"].read_text(encoding="utf-8").splitlines()
    assert len(lines) == 40
    first = lines[0].split("\t")
    assert first[0] == "1" and len(first) == 4
    float(first[1]), float(first[2]), float(first[3])


def test_train_seed_reproducible(corpus_dir, tmp_path):
    logs = []
    for run in range(2):
        log = tmp_path / f"log{run}.tsv"
        rc = main(
            [
                "train",
                "--manifest", str(corpus_dir / "manifest.tsv"),
                "--vocab", str(corpus_dir / "vocab.txt"),
                "--out", str(tmp_path / f"m{run}.ckpt"),
                "--steps", "25",
                "--seed", "11",
                "--log", str(log),
                "--set", "batch_size=4",
            ]
        )
        assert rc == 0
        logs.append(log.read_text(encoding="utf-8"))
    assert logs[0] == logs[1]
    assert (tmp_path / "m0.ckpt").read_bytes() == (tmp_path / "m1.ckpt").read_bytes()


# -- decode ----------------------------------------------------------------------


def test_decode_offline_and_stream_agree(trained, tmp_path):
    common = [
        "--ckpt", str(trained["ckpt"]),
        "--manifest", str(trained["corpus"] / "manifest.tsv"),
        "--vocab", str(trained["corpus"] / "vocab.txt"),
        "--chunk-ms", "160",
        "--left-chunks", "1",
        "--ctx-window", "2",
    ]
    off = tmp_path / "off.tsv"
    stm = tmp_path / "stm.tsv"
    trace = tmp_path / "trace.tsv"
    assert main(["decode-offline", "--out", str(off)] + common) == 0
    assert main(["decode-stream", "--out", str(stm), "--trace", str(trace)] + common) == 0
    assert dataio.read_transcripts(off) == dataio.read_transcripts(stm)
    for line in trace.read_text(encoding="utf-8").splitlines():
        utt_id, symbol, frame = line.split("\t")
        assert utt_id.startswith("utt") and int(frame) >= 0


def test_decode_full_context_default(trained, tmp_path):
    out = tmp_path / "full.tsv"
    rc = main(
        [
            "decode-offline",
            "--ckpt", str(trained["ckpt"]),
            "--manifest", str(trained["corpus"] / "manifest.tsv"),
            "--vocab", str(trained["corpus"] / "vocab.txt"),
            "--out", str(out),
        ]
    )
    assert rc == 0
    hyp = dataio.read_transcripts(out)
    assert len(hyp) == 30


# -- eval ------------------------------------------------------------------------


def test_eval_report(trained, tmp_path, capsys):
    hyp = tmp_path / "hyp.tsv"
    rc = main(
        [
            "decode-offline",
            "--ckpt", str(trained["ckpt"]),
            "--manifest", str(trained["corpus"] / "manifest.tsv"),
            "--vocab", str(trained["corpus"] / "vocab.txt"),
            "--out", str(hyp),
        ]
    )
    assert rc == 0
    report_dir = tmp_path / "report"
    rc = main(
        [
            "eval",
            "--ref", str(trained["corpus"] / "refs.tsv"),
            "--hyp", f"full={hyp}",
            "--baseline", f"full={hyp}",
            "--report-dir", str(report_dir),
            "--resamples", "200",
            "--seed", "3",
        ]
    )
    assert rc == 0
    captured = capsys.readouterr().out
    assert "(+0.00)" in captured  # self-comparison delta
    assert (report_dir / "report.txt").exists()
    assert (report_dir / "report.tsv").exists()
    assert (report_dir / "wer.png").read_bytes()[:4] == b"\x89PNG"


def test_eval_mismatched_baseline_conditions(trained, tmp_path):
    hyp = tmp_path / "hyp.tsv"
    dataio.write_transcripts(hyp, [("utt0000", "ada sees rocks")])
    rc = main(
        [
            "eval",
            "--ref", str(trained["corpus"] / "refs.tsv"),
            "--hyp", f"a={hyp}",
            "--baseline", f"b={hyp}",
        ]
    )
    assert rc == 1


# -- build-pairs -------------------------------------------------------------------


def test_build_pairs_cli(corpus_dir, tmp_path):
    out = tmp_path / "triplets.tsv"
    rc = main(
        [
            "build-pairs",
            "--corpus", str(corpus_dir / "corpus.tsv"),
            "--candidates", str(corpus_dir / "candidates.tsv"),
            "--out", str(out),
            "--seed", "13",
        ]
    )
    assert rc == 0
    triplets = read_triplets(out)
    positives = [t for t in triplets if t.label >= 0.8]
    negatives = [t for t in triplets if t.label <= 0.2]
    assert len(positives) + len(negatives) == len(triplets)
    assert len(negatives) == len(positives) // 2
    # rejected candidates never appear as positives
    texts = {t.sentence_b for t in positives}
    for text in texts:
        assert "padding" not in text
        assert "unrelated" not in text


def test_build_pairs_deterministic(corpus_dir, tmp_path):
    outs = []
    for run in range(2):
        out = tmp_path / f"t{run}.tsv"
        assert main(
            [
                "build-pairs",
                "--corpus", str(corpus_dir / "corpus.tsv"),
                "--candidates", str(corpus_dir / "candidates.tsv"),
                "--out", str(out),
                "--seed", "13",
            ]
        ) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


# -- check commands -----------------------------------------------------------------


def test_grad_check_cli_small():
    assert main(["grad-check", "--instances", "2", "--coords", "10", "--seed", "5"]) == 0


def test_oracle_check_cli():
    assert main(["oracle-check", "--cases", "30", "--seed", "5"]) == 0


# -- error surface ------------------------------------------------------------------


def test_error_line_is_machine_parseable(tmp_path, capsys):
    bad = tmp_path / "nope.ckpt"
    bad.write_bytes(b"XXXX not a checkpoint")
    rc = main(
        [
            "decode-offline",
            "--ckpt", str(bad),
            "--manifest", "irrelevant",
            "--vocab", "irrelevant",
            "--out", str(tmp_path / "o.tsv"),
        ]
    )
    assert rc == 1
    err = capsys.readouterr().err.strip().splitlines()[-1]
    assert err.startswith("error: format: ")


def test_missing_file_is_io_error(tmp_path, capsys):
    rc = main(
        [
            "decode-offline",
            "--ckpt", str(tmp_path / "missing.ckpt"),
            "--manifest", "x",
            "--vocab", "y",
            "--out", str(tmp_path / "o.tsv"),
        ]
    )
    assert rc == 1
    assert capsys.readouterr().err.startswith("error: io: ")


def test_console_entry_point_runs():
    proc = subprocess.run(
        [sys.executable, "-m", "semstream.cli", "oracle-check", "--cases", "5"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert "PASS" in proc.stdout
