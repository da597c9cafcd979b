import numpy as np
import pytest

from semstream import data as dataio
from semstream.errors import DataError, FormatError
from semstream.model import TransducerModel
from semstream.rng import CounterRng
from semstream.transducer import Vocabulary

from conftest import tiny_config


# -- checkpoints -----------------------------------------------------------------


def test_checkpoint_roundtrip_bytes_identical(tmp_path):
    rng = CounterRng(1)
    tensors = {
        "a.w": rng.normal((3, 4)).astype(np.float32),
        "b": rng.normal((7,)).astype(np.float32),
        "scalar": np.asarray([2.5], dtype=np.float32),
    }
    first = tmp_path / "one.ckpt"
    second = tmp_path / "two.ckpt"
    dataio.write_checkpoint(first, tensors)
    loaded = dataio.read_checkpoint(first)
    assert set(loaded) == set(tensors)
    for name in tensors:
        assert np.array_equal(loaded[name], tensors[name])
    dataio.write_checkpoint(second, loaded)
    assert first.read_bytes() == second.read_bytes()


def test_checkpoint_magic_bytes(tmp_path):
    path = tmp_path / "model.ckpt"
    dataio.write_checkpoint(path, {"x": np.zeros(2, dtype=np.float32)})
    assert path.read_bytes()[:4] == b"SENS"


def test_checkpoint_corrupted_magic_rejected(tmp_path):
    path = tmp_path / "model.ckpt"
    dataio.write_checkpoint(path, {"x": np.zeros(2, dtype=np.float32)})
    raw = bytearray(path.read_bytes())
    raw[:4] = b"XXXX"
    path.write_bytes(bytes(raw))
    with pytest.raises(FormatError):
        dataio.read_checkpoint(path)


def test_checkpoint_truncation_rejected(tmp_path):
    path = tmp_path / "model.ckpt"
    dataio.write_checkpoint(path, {"x": np.zeros(8, dtype=np.float32)})
    raw = path.read_bytes()
    path.write_bytes(raw[: len(raw) - 5])
    with pytest.raises(FormatError):
        dataio.read_checkpoint(path)


def test_model_save_load_roundtrip(tmp_path):
    model = TransducerModel(tiny_config(), seed=5)
    one = tmp_path / "one.ckpt"
    two = tmp_path / "two.ckpt"
    model.save(one)
    loaded = TransducerModel.load(one)
    assert loaded.cfg == model.cfg
    for name, p in model.params.items():
        assert np.array_equal(loaded.params[name].data, p.data)
    loaded.save(two)
    assert one.read_bytes() == two.read_bytes()


def test_model_load_rejects_missing_tensor(tmp_path):
    model = TransducerModel(tiny_config(), seed=5)
    path = tmp_path / "model.ckpt"
    model.save(path)
    arrays = dataio.read_checkpoint(path)
    victim = next(k for k in arrays if k.startswith("encoder."))
    del arrays[victim]
    dataio.write_checkpoint(path, arrays)
    with pytest.raises(FormatError):
        TransducerModel.load(path)


# -- features ---------------------------------------------------------------------


def test_feature_roundtrip(tmp_path):
    rng = CounterRng(2)
    frames = rng.normal((13, 6)).astype(np.float32)
    one = tmp_path / "a.feat"
    two = tmp_path / "b.feat"
    dataio.write_features(one, frames)
    back = dataio.read_features(one)
    assert np.array_equal(back, frames)
    dataio.write_features(two, back)
    assert one.read_bytes() == two.read_bytes()


def test_feature_magic_and_truncation(tmp_path):
    path = tmp_path / "a.feat"
    dataio.write_features(path, np.zeros((2, 3), dtype=np.float32))
    raw = bytearray(path.read_bytes())
    assert bytes(raw[:4]) == b"FEAT"
    raw[0] = ord("X")
    path.write_bytes(bytes(raw))
    with pytest.raises(FormatError):
        dataio.read_features(path)
    dataio.write_features(path, np.zeros((2, 3), dtype=np.float32))
    path.write_bytes(path.read_bytes()[:-4])
    with pytest.raises(FormatError):
        dataio.read_features(path)


# -- vocab / manifests --------------------------------------------------------------


def test_vocab_roundtrip(tmp_path):
    vocab = Vocabulary(("<blank>", "alpha", "beta"))
    path = tmp_path / "vocab.txt"
    dataio.write_vocab(path, vocab)
    back = dataio.read_vocab(path)
    assert back.symbols == vocab.symbols
    assert path.read_text(encoding="utf-8").splitlines()[1] == "alpha"


def test_manifest_roundtrip_and_validation(tmp_path):
    recs = [
        dataio.ManifestRecord("u0", "s0", "feats/u0.feat", "hello there"),
        dataio.ManifestRecord("u1", "s1", "feats/u1.feat", "bye"),
    ]
    path = tmp_path / "manifest.tsv"
    dataio.write_manifest(path, recs)
    back = dataio.read_manifest(path)
    assert back == recs
    path.write_text("u0\ts0\tf\ta\nu0\ts0\tf\tb\n", encoding="utf-8")
    with pytest.raises(DataError):
        dataio.read_manifest(path)
    path.write_text("only\ttwo\n", encoding="utf-8")
    with pytest.raises(FormatError):
        dataio.read_manifest(path)


def test_load_manifest_features_checks_dims(tmp_path):
    (tmp_path / "feats").mkdir()
    dataio.write_features(tmp_path / "feats/u0.feat", np.zeros((4, 3), dtype=np.float32))
    dataio.write_features(tmp_path / "feats/u1.feat", np.zeros((4, 5), dtype=np.float32))
    dataio.write_manifest(
        tmp_path / "m.tsv",
        [
            dataio.ManifestRecord("u0", "s0", "feats/u0.feat", "a"),
            dataio.ManifestRecord("u1", "s0", "feats/u1.feat", "b"),
        ],
    )
    with pytest.raises(DataError):
        dataio.load_manifest_features(tmp_path / "m.tsv")


def test_transcripts_roundtrip(tmp_path):
    path = tmp_path / "refs.tsv"
    dataio.write_transcripts(path, [("u0", "a b"), ("u1", "")])
    back = dataio.read_transcripts(path)
    assert back == {"u0": "a b", "u1": ""}
