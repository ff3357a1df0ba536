"""Vision-language oracle: prompt, confidences, region rasterization and the
mock / remote implementations

Oracles look at the untransformed scene. Their layer is mapped into a weak
view with `transform_layer`, using the same geometric record as the image.
"""
import base64
import hashlib
import json
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from logging import getLogger
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Union

import numpy as np
import requests
from scipy.ndimage import binary_dilation, binary_erosion

from vlmseg.augment import apply_geo
from vlmseg.classes.enums import NormalizationMode, OracleSource
from vlmseg.classes.grid import ClassSet, PixelMask
from vlmseg.classes.prediction import (
    MockOracleConfig,
    Mention,
    Prompt,
    VlmConfig,
    VlmLayer,
    VlmPrediction,
)
from vlmseg.classes.scene import Scene
from vlmseg.classes.transform import GeoTransform
from vlmseg.env import NO_OPINION, PROMPT_TEXT
from vlmseg.errors import (
    ConfigurationError,
    GridShapeError,
    OracleCoordinateError,
    OracleError,
    OracleResponseError,
    OracleTransportError,
)
from vlmseg.grid_io import encode_grid

logger = getLogger("vlmseg")

CLASSIFY_ROUTE = "/v1/classify-regions"


def build_prompt(classes: ClassSet, constrained: bool = False) -> Prompt:
    """The fixed instruction, optionally followed by the allowed vocabulary"""
    if not constrained:
        return Prompt(text=PROMPT_TEXT)
    return Prompt(text=f"{PROMPT_TEXT} Answer only with: {', '.join(classes.names)}.")


def prompt_hash(prompt: Prompt) -> str:
    return hashlib.sha256(prompt.text.encode("utf-8")).hexdigest()[:16]


def raw_confidence(pred: VlmPrediction, classes: ClassSet, cfg: VlmConfig) -> np.ndarray:
    """gamma for every mentioned class, 0 for the rest"""
    raw = np.zeros(classes.count)
    for idx in pred.mentioned():
        if idx >= classes.count:
            raise GridShapeError(f"mention of class {idx} outside a {classes.count}-class set")
        raw[idx] = cfg.gamma
    return raw


def normalize_confidence(raw: np.ndarray, cfg: VlmConfig) -> np.ndarray:
    raw = np.asarray(raw, dtype=np.float64)
    assert np.all(raw >= 0.0), "raw confidences must be non-negative"
    if cfg.normalization == NormalizationMode.RAW:
        return raw.copy()
    return raw / (raw.sum() + cfg.epsilon)


class RegionRefiner(ABC):
    """Sharpens a coarse oracle region into a pixel mask"""

    @abstractmethod
    def refine(self, region: PixelMask, image: Optional[np.ndarray] = None) -> PixelMask:
        pass


class IdentityRefiner(RegionRefiner):
    def refine(self, region: PixelMask, image: Optional[np.ndarray] = None) -> PixelMask:
        return region


def rasterize(
    pred: VlmPrediction,
    refiner: RegionRefiner,
    classes: ClassSet,
    cfg: VlmConfig,
    image: Optional[np.ndarray] = None,
) -> VlmLayer:
    """Paint every region with its class and normalized confidence.

    Where regions overlap, the higher normalized confidence wins, then the lower
    class index.
    """
    height, width = pred.hw
    norm = normalize_confidence(raw_confidence(pred, classes, cfg), cfg)
    class_map = np.full((height, width), NO_OPINION, dtype=np.int16)
    conf_map = np.zeros((height, width))
    for mention in sorted(pred.mentions, key=lambda m: (-norm[m.class_index], m.class_index)):
        region = refiner.refine(mention.region, image)
        if region.hw != (height, width):
            raise GridShapeError(f"refined region {region.hw} does not match {height}x{width}")
        paint = region.data & (class_map == NO_OPINION)
        class_map[paint] = mention.class_index
        conf_map[paint] = norm[mention.class_index]
    return VlmLayer(classes=class_map, conf=conf_map)


def transform_layer(layer: VlmLayer, geo: GeoTransform) -> VlmLayer:
    """Map a scene-frame layer into the frame of a weak view"""
    if geo.is_identity:
        return layer
    return VlmLayer(
        classes=apply_geo(layer.classes, geo, nearest=True),
        conf=apply_geo(layer.conf, geo, nearest=True),
    )


def _scene_rng(seed: int, scene_id: str) -> np.random.Generator:
    digest = hashlib.sha256(f"{seed}:{scene_id}".encode("utf-8")).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


def _disc(height: int, width: int, cy: float, cx: float, radius: float) -> np.ndarray:
    yy, xx = np.mgrid[0:height, 0:width]
    return (yy - cy) ** 2 + (xx - cx) ** 2 <= radius**2


def mock_predict(scene: Scene, cfg: MockOracleConfig, classes: ClassSet) -> VlmPrediction:
    """Corruptible oracle reading the scene's ground truth.

    Present classes are dropped with `miss_rate`, absent classes are invented as
    a random disc with `hallucination_rate`, and regions are dilated or eroded
    by `region_jitter` pixels. Five draws are taken per class whatever happens,
    so outcomes for one class never depend on another's.
    """
    height, width = scene.hw
    truth = scene.truth.data
    rng = _scene_rng(cfg.seed, scene.id)
    mentions = []
    for idx in range(classes.count):
        miss, invent, grow, cy, cx = rng.random(5)
        present = truth == idx
        if present.any():
            if miss < cfg.miss_rate:
                continue
            region = present
        else:
            if not invent < cfg.hallucination_rate:
                continue
            radius = (0.1 + 0.2 * grow) * min(height, width)
            region = _disc(height, width, cy * (height - 1), cx * (width - 1), radius)
        if cfg.region_jitter > 0:
            if grow < 0.5:
                region = binary_dilation(region, iterations=cfg.region_jitter)
            else:
                eroded = binary_erosion(region, iterations=cfg.region_jitter)
                # Thin regions survive as they are
                region = eroded if eroded.any() else region
        mentions.append(Mention(class_index=idx, region=PixelMask(data=region)))
    return VlmPrediction(height=height, width=width, mentions=mentions, source=OracleSource.MOCK)


def _box_number(value) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not np.isfinite(value):
        raise OracleCoordinateError(f"box coordinate {value!r} is not a number")
    return int(round(value))


def parse_response(payload, classes: ClassSet, height: int, width: int) -> VlmPrediction:
    """Turn a classify-regions answer into a prediction on a height x width image.

    Class names match case-insensitively; unknown names are skipped with a
    warning. Boxes are [top, left, height, width], clipped to the image. A class
    named several times gets the union of its boxes.
    """
    if not isinstance(payload, dict) or not isinstance(payload.get("mentions"), list):
        raise OracleResponseError("response must be an object with a 'mentions' list")
    regions: Dict[int, np.ndarray] = {}
    scores: Dict[int, Optional[float]] = {}
    for item in payload["mentions"]:
        if not isinstance(item, dict) or not isinstance(item.get("class"), str):
            raise OracleResponseError(f"mention {item!r} lacks a 'class' string")
        idx = classes.index_of(item["class"])
        if idx is None:
            logger.warning(f"Oracle named unknown class {item['class']!r}, ignored")
            continue
        box = item.get("box")
        if not isinstance(box, list) or len(box) != 4:
            raise OracleCoordinateError(f"box {box!r} of {item['class']!r} is not [top, left, height, width]")
        top, left, box_h, box_w = (_box_number(value) for value in box)
        if top < 0 or left < 0 or box_h <= 0 or box_w <= 0:
            raise OracleCoordinateError(f"box {box!r} of {item['class']!r} is negative or empty")
        score = item.get("score")
        if score is not None and (isinstance(score, bool) or not isinstance(score, (int, float))):
            raise OracleResponseError(f"score {score!r} of {item['class']!r} is not a number")
        if top >= height or left >= width:
            logger.warning(f"Box {box} of {item['class']!r} lies outside {height}x{width}, ignored")
            continue
        region = regions.setdefault(idx, np.zeros((height, width), dtype=np.bool_))
        region[top : top + box_h, left : left + box_w] = True
        if score is not None:
            previous = scores.get(idx)
            scores[idx] = float(score) if previous is None else max(previous, float(score))
        else:
            scores.setdefault(idx, None)
    mentions = [
        Mention(class_index=idx, region=PixelMask(data=regions[idx]), raw_score=scores[idx])
        for idx in sorted(regions)
    ]
    return VlmPrediction(height=height, width=width, mentions=mentions, source=OracleSource.REMOTE)


def request_regions(
    image: np.ndarray, prompt: Prompt, classes: ClassSet, endpoint: str, timeout: float = 30.0
) -> dict:
    """POST one classify-regions request and return the decoded JSON answer"""
    body = {
        "prompt": prompt.text,
        "classes": list(classes.names),
        "image_b64": base64.b64encode(encode_grid(np.asarray(image, dtype=np.float32))).decode("ascii"),
        "image_format": "grd1",
    }
    url = endpoint.rstrip("/") + CLASSIFY_ROUTE
    try:
        response = requests.post(url, json=body, timeout=timeout)
    except requests.RequestException as err:
        raise OracleTransportError(f"POST {url} failed: {err}") from err
    if response.status_code != 200:
        raise OracleTransportError(
            f"POST {url} answered HTTP {response.status_code}", status_code=response.status_code
        )
    try:
        return response.json()
    except ValueError as err:
        raise OracleResponseError(f"POST {url} answered with non-JSON content") from err


def remote_predict(
    image: np.ndarray, prompt: Prompt, classes: ClassSet, endpoint: str, timeout: float = 30.0
) -> VlmPrediction:
    height, width = image.shape[:2]
    payload = request_regions(image, prompt, classes, endpoint, timeout)
    return parse_response(payload, classes, height, width)


class Oracle(ABC):
    source: OracleSource

    def __init__(self, classes: ClassSet):
        self.classes = classes

    @abstractmethod
    def predict(self, scene: Scene) -> Optional[VlmPrediction]:
        """None means no opinion on the whole scene"""
        pass

    def predict_many(self, scenes: Iterable[Scene]) -> Dict[str, Optional[VlmPrediction]]:
        return {scene.id: self.predict(scene) for scene in scenes}


class MockOracle(Oracle):
    source = OracleSource.MOCK

    def __init__(self, classes: ClassSet, cfg: Optional[MockOracleConfig] = None):
        super().__init__(classes)
        self.cfg = cfg or MockOracleConfig()

    def predict(self, scene: Scene) -> Optional[VlmPrediction]:
        return mock_predict(scene, self.cfg, self.classes)


class RemoteOracle(Oracle):
    """HTTP oracle with an on-disk answer cache.

    Failures are logged and turn into "no opinion" for the scene, so training
    goes on with teacher labels only.
    """

    source = OracleSource.REMOTE

    def __init__(
        self,
        classes: ClassSet,
        endpoint: str,
        timeout: float = 30.0,
        max_inflight: int = 4,
        cache_dir: Optional[Union[str, Path]] = None,
        constrained_prompt: bool = False,
    ):
        super().__init__(classes)
        self.endpoint = endpoint
        self.timeout = timeout
        self.max_inflight = max(1, max_inflight)
        self.cache_dir = Path(cache_dir) if cache_dir else None
        self.prompt = build_prompt(classes, constrained_prompt)
        self._memory: Dict[str, dict] = {}

    def _cache_path(self, scene_id: str) -> Optional[Path]:
        if self.cache_dir is None:
            return None
        return self.cache_dir / f"{scene_id}.{prompt_hash(self.prompt)}.json"

    def _read_cache(self, path: Path) -> Optional[dict]:
        """Cached answer, or None when the file is unreadable (it is then fetched again)"""
        try:
            document = json.loads(path.read_text(encoding="utf-8"))
            payload = document["response"]
        except (ValueError, KeyError, TypeError) as err:
            logger.warning(f"Ignoring unreadable cache entry {path}: {err}")
            return None
        return payload if isinstance(payload, dict) else None

    def _payload(self, scene: Scene) -> dict:
        if scene.id in self._memory:
            return self._memory[scene.id]
        path = self._cache_path(scene.id)
        payload = self._read_cache(path) if path is not None and path.exists() else None
        if payload is None:
            payload = request_regions(scene.image, self.prompt, self.classes, self.endpoint, self.timeout)
            if path is not None:
                path.parent.mkdir(parents=True, exist_ok=True)
                document = {"scene_id": scene.id, "prompt": self.prompt.text, "response": payload}
                path.write_text(json.dumps(document, indent=2), encoding="utf-8")
        self._memory[scene.id] = payload
        return payload

    def predict(self, scene: Scene) -> Optional[VlmPrediction]:
        try:
            payload = self._payload(scene)
            return parse_response(payload, self.classes, *scene.hw)
        except OracleError as err:
            logger.warning(f"No VLM opinion for {scene.id}: {err}")
            return None

    def predict_many(self, scenes: Iterable[Scene]) -> Dict[str, Optional[VlmPrediction]]:
        scenes = list(scenes)
        with ThreadPoolExecutor(max_workers=self.max_inflight) as pool:
            results = list(pool.map(self.predict, scenes))
        return {scene.id: result for scene, result in zip(scenes, results)}


def build_oracle(
    source: OracleSource,
    classes: ClassSet,
    mock: Optional[MockOracleConfig] = None,
    endpoint: Optional[str] = None,
    timeout: float = 30.0,
    max_inflight: int = 4,
    cache_dir: Optional[Union[str, Path]] = None,
    constrained_prompt: bool = False,
) -> Oracle:
    if source == OracleSource.MOCK:
        return MockOracle(classes, mock)
    if not endpoint:
        raise ConfigurationError("vlm.endpoint is required when vlm.mode = remote")
    return RemoteOracle(classes, endpoint, timeout, max_inflight, cache_dir, constrained_prompt)


def prediction_layers(
    oracle: Oracle,
    scenes: List[Scene],
    vlm_cfg: VlmConfig,
    refiner: Optional[RegionRefiner] = None,
) -> Dict[str, Optional[VlmLayer]]:
    """Scene-frame layers for every scene; the oracle is frozen so this runs once per training run"""
    refiner = refiner or IdentityRefiner()
    predictions = oracle.predict_many(scenes)
    layers = {}
    for scene in scenes:
        pred = predictions.get(scene.id)
        layers[scene.id] = None if pred is None else rasterize(pred, refiner, oracle.classes, vlm_cfg, scene.image)
    return layers
