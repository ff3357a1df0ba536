import pytest

from vlmseg.classes.enums import BaselineFilter, NormalizationMode, OracleSource
from vlmseg.config import (
    TrainerConfig,
    apply_overrides,
    describe_keys,
    dump_config,
    flatten,
    load_config,
    parse_config,
)
from vlmseg.errors import ConfigurationError


def test_defaults():
    cfg = load_config()
    assert cfg.seed == 0
    assert cfg.purify.tau_conf == 0.7
    assert cfg.purify.purify_config().filter_tau == 0.7
    assert cfg.train.labeled_ratio == 0.05
    assert cfg.train.vlmpp is True
    assert cfg.vlm.mode == OracleSource.MOCK
    assert cfg.vlm.vlm_config().gamma == 0.95
    assert cfg.data.class_set().count == 4


def test_config_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(
        "# small run\n"
        "seed = 7\n"
        "\n"
        "data.height = 32   # rows\n"
        "train.vlmpp = false\n"
        "purify.final_filter_tau = 0.8\n"
        "vlm.normalization = raw\n"
        "train.baseline_filter = threshold\n",
        encoding="utf-8",
    )
    cfg = load_config(path)
    assert cfg.seed == 7
    assert cfg.data.height == 32
    assert cfg.train.vlmpp is False
    assert cfg.purify.final_filter_tau == 0.8
    assert cfg.vlm.normalization == NormalizationMode.RAW
    assert cfg.train.baseline_filter == BaselineFilter.THRESHOLD


def test_unknown_key_is_named():
    with pytest.raises(ConfigurationError, match="train.learning_rate"):
        apply_overrides(TrainerConfig(), ["train.learning_rate=0.1"])
    with pytest.raises(ConfigurationError, match="not key=value"):
        apply_overrides(TrainerConfig(), ["train.lr"])
    with pytest.raises(ConfigurationError, match="line|expected"):
        parse_config("seed 3\n")


def test_tau_outside_range():
    with pytest.raises(ConfigurationError) as info:
        apply_overrides(TrainerConfig(), {"purify.tau_conf": 1.5})
    assert "(1/K, 1]" in str(info.value)
    with pytest.raises(ConfigurationError):
        apply_overrides(TrainerConfig(), {"purify.tau_conf": 0.25})
    # 1/K shrinks with more classes
    cfg = apply_overrides(TrainerConfig(), {"data.num_classes": 8, "purify.tau_conf": 0.2})
    assert cfg.purify.tau_conf == 0.2


@pytest.mark.parametrize(
    "override",
    [
        "train.lr=0",
        "train.ema_decay=1.0",
        "train.labeled_ratio=0",
        "data.total=5",
        "data.classes=mars",
        "vlm.gamma=0",
        "vlm.miss_rate=2",
        "augment.cutmix_min_frac=0.9",
        "train.lr_schedule=cosine",
        "augment.scale_min=0.1",
    ],
)
def test_invalid_values(override):
    with pytest.raises(ConfigurationError):
        apply_overrides(TrainerConfig(), [override])


def test_preset_must_match_class_count():
    with pytest.raises(ConfigurationError, match="num_classes"):
        apply_overrides(TrainerConfig(), {"data.classes": "potsdam"})
    cfg = apply_overrides(TrainerConfig(), {"data.classes": "potsdam", "data.num_classes": 6})
    assert cfg.data.class_set().excluded == [5]


def test_none_values():
    cfg = apply_overrides(TrainerConfig(), ["purify.final_filter_tau=0.9"])
    assert cfg.purify.final_filter_tau == 0.9
    cfg = apply_overrides(cfg, ["purify.final_filter_tau=none"])
    assert cfg.purify.final_filter_tau is None


def test_dump_reproduces_config():
    cfg = apply_overrides(
        TrainerConfig(),
        {"seed": 3, "train.lr": 0.05, "vlm.mode": "remote", "vlm.endpoint": "http://localhost:9000",
         "train.confidence_weighted": True, "purify.final_filter_tau": 0.75},
    )
    text = dump_config(cfg)
    assert "vlm.mode = remote\n" in text
    assert "train.confidence_weighted = true\n" in text
    assert "vlm.cache_dir = none\n" in text
    assert flatten(parse_config(text)) == flatten(cfg)


def test_hash_inside_a_value_is_kept(tmp_path):
    cfg = apply_overrides(
        TrainerConfig(),
        {"vlm.mode": "remote", "vlm.endpoint": "http://vlm.local/api#v2", "vlm.cache_dir": str(tmp_path / "cache#1")},
    )
    text = dump_config(cfg)
    assert "vlm.endpoint = http://vlm.local/api#v2\n" in text
    back = parse_config(text)
    assert back.vlm.endpoint == "http://vlm.local/api#v2"
    assert back.vlm.cache_dir == str(tmp_path / "cache#1")
    assert flatten(back) == flatten(cfg)

    commented = parse_config("vlm.endpoint = http://vlm.local/api#v2  # staging\n# seed = 9\n")
    assert commented.vlm.endpoint == "http://vlm.local/api#v2"
    assert commented.seed == 0


def test_every_key_is_described():
    keys = [key for key, _ in describe_keys()]
    assert keys == list(flatten(TrainerConfig()))
    assert ("purify.tau_conf", "0.7") in describe_keys()
