"""Run configuration: flat `key = value` files, namespaced by section

    seed = 0
    data.height = 64
    train.lr = 0.1          # comments start at a '#' that opens the line or follows a blank
    purify.tau_conf = 0.7
    vlm.mode = mock

Every key can be overridden with `--set key=value`; `dump_config` writes all of
them, so a dumped file reproduces the run.
"""
import re
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Tuple, Union

from pydantic import ValidationError, root_validator, validator

from vlmseg.classes.entity import Entity
from vlmseg.classes.enums import BaselineFilter, EvalModel, NormalizationMode, OracleSource
from vlmseg.classes.grid import ClassSet
from vlmseg.classes.prediction import MockOracleConfig, VlmConfig
from vlmseg.classes.purify import PurifyConfig
from vlmseg.classes.scene import SceneGenConfig
from vlmseg.classes.transform import StrongRecipe, WeakRecipe
from vlmseg.errors import ConfigurationError
from vlmseg.grid import check_tau

_COMMENT = re.compile(r"(?:^|\s)#.*$")

SECTIONS = ("data", "train", "purify", "vlm", "augment")


class DataSection(Entity):
    height: int = 64
    width: int = 64
    num_classes: int = 4
    num_features: int = 3
    total: int = 200
    """Scenes generated, split 6:2:2 into train / val / test"""
    blob_min: int = 3
    blob_max: int = 8
    boundary_complexity: float = 1.0
    noise_sigma: float = 1.0
    class_separation: float = 1.0
    classes: str = "synthetic"
    """Class preset: synthetic, loveda, loveda-ignore or potsdam"""
    dir: Optional[str] = None
    """Read scenes written by `gen-data` instead of generating them"""
    workers: int = 1

    @validator("total")
    def check_total(cls, value):
        assert value >= 10, f"must be >= 10, got {value}"
        return value

    @validator("workers")
    def check_workers(cls, value):
        assert value >= 1, f"must be >= 1, got {value}"
        return value

    @validator("classes")
    def check_preset(cls, value):
        assert value == "synthetic" or value in ClassSet.PRESETS, (
            f"unknown preset {value!r}, expected synthetic or one of {sorted(ClassSet.PRESETS)}"
        )
        return value

    def class_set(self) -> ClassSet:
        return ClassSet.preset(self.classes, self.num_classes)

    def scene_config(self, seed: int) -> SceneGenConfig:
        return SceneGenConfig(
            height=self.height,
            width=self.width,
            num_classes=self.num_classes,
            num_features=self.num_features,
            blob_min=self.blob_min,
            blob_max=self.blob_max,
            boundary_complexity=self.boundary_complexity,
            noise_sigma=self.noise_sigma,
            class_separation=self.class_separation,
            seed=seed,
        )


class TrainSection(Entity):
    epochs: int = 30
    labeled_batch: int = 2
    unlabeled_batch: int = 4
    lr: float = 0.1
    lr_schedule: str = "constant"
    ema_decay: float = 0.99
    labeled_ratio: float = 0.05
    vlmpp: bool = True
    baseline_filter: BaselineFilter = BaselineFilter.NONE
    """Pseudo-label policy when vlmpp is off"""
    confidence_weighted: bool = False
    """Weight the unsupervised loss by purified confidence"""
    eval_model: EvalModel = EvalModel.STUDENT
    init_scale: float = 0.0
    """Std of the initial weights; 0 starts from zeros"""

    @validator("epochs", "labeled_batch", "unlabeled_batch")
    def check_positive(cls, value):
        assert value >= 1, f"must be >= 1, got {value}"
        return value

    @validator("lr")
    def check_lr(cls, value):
        assert value > 0.0, f"must be > 0, got {value}"
        return value

    @validator("lr_schedule")
    def check_schedule(cls, value):
        assert value == "constant", f"only 'constant' is supported, got {value!r}"
        return value

    @validator("ema_decay")
    def check_decay(cls, value):
        assert 0.0 <= value < 1.0, f"must be in [0, 1), got {value}"
        return value

    @validator("labeled_ratio")
    def check_ratio(cls, value):
        assert 0.0 < value <= 1.0, f"must be in (0, 1], got {value}"
        return value

    @validator("init_scale")
    def check_init(cls, value):
        assert value >= 0.0, f"must be >= 0, got {value}"
        return value


class PurifySection(Entity):
    tau_conf: float = 0.7
    final_filter_tau: Optional[float] = None

    def purify_config(self) -> PurifyConfig:
        return PurifyConfig(tau_conf=self.tau_conf, final_filter_tau=self.final_filter_tau)


class VlmSection(Entity):
    mode: OracleSource = OracleSource.MOCK
    endpoint: Optional[str] = None
    timeout: float = 30.0
    max_inflight: int = 4
    cache_dir: Optional[str] = None
    constrained_prompt: bool = False
    gamma: float = 0.95
    epsilon: float = 1e-8
    normalization: NormalizationMode = NormalizationMode.SUM
    miss_rate: float = 0.0
    hallucination_rate: float = 0.0
    region_jitter: int = 0

    @validator("gamma")
    def check_gamma(cls, value):
        assert 0.0 < value <= 1.0, f"must be in (0, 1], got {value}"
        return value

    @validator("epsilon", "timeout")
    def check_positive(cls, value):
        assert value > 0.0, f"must be > 0, got {value}"
        return value

    @validator("max_inflight")
    def check_inflight(cls, value):
        assert value >= 1, f"must be >= 1, got {value}"
        return value

    @validator("miss_rate", "hallucination_rate")
    def check_rate(cls, value):
        assert 0.0 <= value <= 1.0, f"must be in [0, 1], got {value}"
        return value

    @validator("region_jitter")
    def check_jitter(cls, value):
        assert value >= 0, f"must be >= 0, got {value}"
        return value

    def vlm_config(self) -> VlmConfig:
        return VlmConfig(gamma=self.gamma, epsilon=self.epsilon, normalization=self.normalization)

    def mock_config(self, seed: int) -> MockOracleConfig:
        return MockOracleConfig(
            miss_rate=self.miss_rate,
            hallucination_rate=self.hallucination_rate,
            region_jitter=self.region_jitter,
            seed=seed,
        )


class AugmentSection(Entity):
    hflip_prob: float = 0.5
    vflip_prob: float = 0.5
    scale_prob: float = 0.5
    scale_min: float = 0.5
    scale_max: float = 2.0
    brightness: float = 0.2
    contrast: float = 0.2
    blur_prob: float = 0.5
    blur_sigma_min: float = 0.1
    blur_sigma_max: float = 1.0
    cutmix_prob: float = 0.5
    cutmix_min_frac: float = 0.1
    cutmix_max_frac: float = 0.5

    @validator("cutmix_prob")
    def check_prob(cls, value):
        assert 0.0 <= value <= 1.0, f"must be in [0, 1], got {value}"
        return value

    @root_validator(skip_on_failure=True)
    def check_cutmix(cls, values):
        low, high = values["cutmix_min_frac"], values["cutmix_max_frac"]
        assert 0.0 < low <= high <= 1.0, f"cutmix fractions must satisfy 0 < min <= max <= 1, got {low}, {high}"
        return values

    def weak_recipe(self) -> WeakRecipe:
        return WeakRecipe(
            hflip_prob=self.hflip_prob,
            vflip_prob=self.vflip_prob,
            scale_prob=self.scale_prob,
            scale_min=self.scale_min,
            scale_max=self.scale_max,
        )

    def strong_recipe(self) -> StrongRecipe:
        return StrongRecipe(
            brightness=self.brightness,
            contrast=self.contrast,
            blur_prob=self.blur_prob,
            blur_sigma_min=self.blur_sigma_min,
            blur_sigma_max=self.blur_sigma_max,
        )


class TrainerConfig(Entity):
    seed: int = 0
    data: DataSection = DataSection()
    train: TrainSection = TrainSection()
    purify: PurifySection = PurifySection()
    vlm: VlmSection = VlmSection()
    augment: AugmentSection = AugmentSection()

    @validator("seed")
    def check_seed(cls, value):
        assert value >= 0, f"must be >= 0, got {value}"
        return value

    @root_validator(skip_on_failure=True)
    def check_cross(cls, values):
        data, purify = values["data"], values["purify"]
        check_tau(purify.tau_conf, data.num_classes, "purify.tau_conf")
        if purify.final_filter_tau is not None:
            check_tau(purify.final_filter_tau, data.num_classes, "purify.final_filter_tau")
        classes = data.class_set()
        assert classes.count == data.num_classes, (
            f"data.classes = {data.classes} has {classes.count} classes but data.num_classes = {data.num_classes}"
        )
        # Instantiating the recipes runs their own range checks
        values["augment"].weak_recipe()
        values["augment"].strong_recipe()
        return values


def flatten(cfg: TrainerConfig) -> Dict[str, object]:
    flat = {"seed": cfg.seed}
    for section in SECTIONS:
        for key, value in getattr(cfg, section).dict().items():
            flat[f"{section}.{key}"] = value
    return flat


def _unflatten(flat: Mapping[str, object]) -> dict:
    nested: dict = {section: {} for section in SECTIONS}
    for key, value in flat.items():
        if key == "seed":
            nested["seed"] = value
        else:
            section, _, field = key.partition(".")
            nested[section][field] = value
    return nested


def _parse_value(text: str):
    text = text.strip()
    return None if text.lower() in ("", "none", "null") else text


def _build(flat: Mapping[str, object]) -> TrainerConfig:
    try:
        return TrainerConfig.parse_obj(_unflatten(flat))
    except ValidationError as err:
        messages = []
        for item in err.errors():
            key = ".".join(str(part) for part in item["loc"] if part != "__root__")
            messages.append(f"{key}: {item['msg']}" if key else item["msg"])
        raise ConfigurationError("; ".join(messages)) from None
    except ValueError as err:
        raise ConfigurationError(str(err)) from None


def apply_overrides(
    cfg: TrainerConfig, overrides: Union[Mapping[str, object], Iterable[str]]
) -> TrainerConfig:
    """Overrides are a mapping or `key=value` strings; unknown keys are rejected by name"""
    if not isinstance(overrides, Mapping):
        pairs = {}
        for item in overrides:
            key, sep, value = item.partition("=")
            if not sep:
                raise ConfigurationError(f"override {item!r} is not key=value")
            pairs[key.strip()] = value
        overrides = pairs
    flat = flatten(cfg)
    for key, value in overrides.items():
        if key not in flat:
            raise ConfigurationError(f"unknown config key {key!r}")
        flat[key] = _parse_value(value) if isinstance(value, str) else value
    return _build(flat)


def parse_config(text: str, source: str = "<config>") -> TrainerConfig:
    overrides = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = _COMMENT.sub("", line).strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigurationError(f"{source}:{lineno}: expected 'key = value'")
        overrides[key.strip()] = value
    return apply_overrides(TrainerConfig(), overrides)


def load_config(path: Optional[Union[str, Path]] = None) -> TrainerConfig:
    if path is None:
        return TrainerConfig()
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), str(path))


def _format_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if hasattr(value, "value"):
        return str(value.value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_config(cfg: TrainerConfig) -> str:
    return "".join(f"{key} = {_format_value(value)}\n" for key, value in flatten(cfg).items())


def describe_keys() -> List[Tuple[str, str]]:
    """(key, default) for every key"""
    return [(key, _format_value(value)) for key, value in flatten(TrainerConfig()).items()]
