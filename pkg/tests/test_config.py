import pytest

from semstream.config import RunConfig, apply_overrides, load_config, parse_config_text
from semstream.errors import ConfigError


def test_defaults_expose_published_scale_fields():
    cfg = RunConfig()
    assert cfg.distill_weight == 0.2
    assert cfg.fastemit_lambda == 0.006
    assert cfg.learning_rate == 0.0008
    assert cfg.weight_decay == 0.01
    assert cfg.chunk_ms_min == 160.0 and cfg.chunk_ms_max == 1280.0
    assert cfg.chunked_batch_fraction == 0.6
    # published-scale dimensions are representable
    big = apply_overrides(
        cfg,
        {
            "encoder_layers": "12",
            "d_model": "512",
            "num_heads": "8",
            "ffn_dim": "2048",
            "conv_kernel": "31",
            "teacher_dim": "768",
            "pred_dim": "512",
            "joint_dim": "640",
        },
    )
    assert big.model_config(1000).d_model == 512
    assert big.model_config(1000).joint_dim == 640


def test_parse_config_text():
    text = """
    # a comment
    seed = 42
    d_model = 16   # trailing comment
    ctx_window_chunks = unlimited
    optimizer = sgd
    """
    pairs = parse_config_text(text)
    cfg = apply_overrides(RunConfig(), pairs)
    assert cfg.seed == 42
    assert cfg.d_model == 16
    assert cfg.ctx_window_chunks is None
    assert cfg.optimizer == "sgd"


def test_unknown_key_rejected():
    with pytest.raises(ConfigError):
        apply_overrides(RunConfig(), {"not_a_key": "1"})


def test_bad_value_rejected():
    with pytest.raises(ConfigError):
        apply_overrides(RunConfig(), {"seed": "abc"})
    with pytest.raises(ConfigError):
        parse_config_text("just a line without equals")


def test_load_config_file_and_overrides(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("steps = 77\nbatch_size = 3\n", encoding="utf-8")
    cfg = load_config(path, {"steps": "99"})
    assert cfg.steps == 99
    assert cfg.batch_size == 3


def test_ctx_window_accepts_int():
    cfg = apply_overrides(RunConfig(), {"ctx_window_chunks": "3"})
    assert cfg.ctx_window_chunks == 3
