"""Synthetic remote-sensing-like scenes and labeled/unlabeled splits

Truth maps are noisy Voronoi partitions: a handful of seeds, each painted with a
class, whose distance fields are warped by smooth noise so that class borders
become ragged. Images are class-mean feature vectors plus Gaussian noise, so a
per-pixel classifier is confident inside blobs and unsure along borders.
"""
from concurrent.futures import ThreadPoolExecutor
from logging import getLogger
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Union

import numpy as np
from scipy.ndimage import gaussian_filter

from vlmseg.classes.enums import GridKind, SplitRole
from vlmseg.classes.grid import ClassSet, LabelMap
from vlmseg.classes.scene import DatasetSplit, Scene, SceneGenConfig
from vlmseg.errors import ConfigurationError
from vlmseg.grid_io import read_grid, write_grid

logger = getLogger("vlmseg")

SPLIT_MANIFEST = "split.tsv"
CLASSES_FILE = "classes.txt"


def scene_id(index: int) -> str:
    return f"scene_{index:05d}"


def class_means(cfg: SceneGenConfig) -> np.ndarray:
    """K x F class-mean vectors, shared by every scene of a dataset"""
    rng = np.random.default_rng([cfg.seed, 0x5EED])
    return rng.normal(0.0, 1.0, size=(cfg.num_classes, cfg.num_features)) * cfg.class_separation


def _truth_map(cfg: SceneGenConfig, rng: np.random.Generator) -> np.ndarray:
    height, width = cfg.height, cfg.width
    num_blobs = int(rng.integers(cfg.blob_min, cfg.blob_max + 1))
    seeds = rng.choice(height * width, size=num_blobs, replace=False)
    seed_y, seed_x = np.divmod(seeds, width)
    classes = rng.integers(0, cfg.num_classes, size=num_blobs)
    if np.all(classes == classes[0]):
        classes[1] = (classes[0] + 1) % cfg.num_classes

    yy, xx = np.mgrid[0:height, 0:width]
    dist = np.sqrt((yy[..., None] - seed_y) ** 2 + (xx[..., None] - seed_x) ** 2)
    warp = rng.normal(size=(height, width, num_blobs))
    if cfg.boundary_complexity > 0:
        smooth = gaussian_filter(warp, sigma=(3.0, 3.0, 0.0), mode="wrap")
        smooth /= smooth.std() + 1e-12
        warped = dist + cfg.boundary_complexity * 0.1 * min(height, width) * smooth
    else:
        warped = dist
    truth = classes[np.argmin(warped, axis=2)]
    if len(np.unique(truth)) < 2:
        # Each seed owns at least its own pixel in the unwarped partition
        truth = classes[np.argmin(dist, axis=2)]
    return truth


def generate_scene(cfg: SceneGenConfig, index: int, means: Optional[np.ndarray] = None) -> Scene:
    """Deterministic in (cfg.seed, index)"""
    if means is None:
        means = class_means(cfg)
    rng = np.random.default_rng([cfg.seed, index])
    truth = _truth_map(cfg, rng)
    image = means[truth]
    if cfg.noise_sigma > 0:
        image = image + rng.normal(0.0, cfg.noise_sigma, size=image.shape)
    return Scene(
        id=scene_id(index),
        image=image,
        truth=LabelMap(data=truth, num_classes=cfg.num_classes),
    )


def generate_scenes(
    cfg: SceneGenConfig, indices: Iterable[int], workers: int = 1
) -> List[Scene]:
    means = class_means(cfg)
    indices = list(indices)
    if workers <= 1:
        return [generate_scene(cfg, idx, means) for idx in indices]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda idx: generate_scene(cfg, idx, means), indices))


def _round_half_up(value: float) -> int:
    return int(np.floor(value + 0.5))


def make_split(
    total: int, ratio: float, seed: int, ids: Optional[List[str]] = None
) -> DatasetSplit:
    """6:2:2 train/val/test split, then `ratio` of the train pool is labeled"""
    if total < 10:
        raise ConfigurationError(f"data.total must be >= 10, got {total}")
    if not 0.0 < ratio <= 1.0:
        raise ConfigurationError(f"train.labeled_ratio must be in (0, 1], got {ratio}")
    if ids is None:
        ids = [scene_id(idx) for idx in range(total)]
    assert len(ids) == total, "ids must match total"

    num_val = _round_half_up(0.2 * total)
    num_test = _round_half_up(0.2 * total)
    num_train = total - num_val - num_test
    num_labeled = _round_half_up(ratio * num_train)
    if num_labeled < 1:
        raise ConfigurationError(
            f"labeled ratio {ratio} of a {num_train}-scene training pool yields no labeled scene"
        )

    order = np.random.default_rng([seed, 0x5917]).permutation(total)
    shuffled = [ids[idx] for idx in order]
    train = shuffled[:num_train]
    return DatasetSplit(
        labeled=train[:num_labeled],
        unlabeled=train[num_labeled:],
        val=shuffled[num_train : num_train + num_val],
        test=shuffled[num_train + num_val :],
        ratio=ratio,
        seed=seed,
    )


class SceneDataset:
    """Scenes by id, their class vocabulary and the split in use"""

    def __init__(self, scenes: Dict[str, Scene], classes: ClassSet, split: DatasetSplit):
        self.scenes = scenes
        self.classes = classes
        self.split = split
        missing = [sid for sid in split.roles() if sid not in scenes]
        if missing:
            raise ConfigurationError(f"split names {len(missing)} unknown scenes, e.g. {missing[0]}")

    def __getitem__(self, scene_id: str) -> Scene:
        return self.scenes[scene_id]

    def __len__(self):
        return len(self.scenes)

    def pool(self, role: SplitRole) -> List[Scene]:
        ids = {
            SplitRole.LABELED: self.split.labeled,
            SplitRole.UNLABELED: self.split.unlabeled,
            SplitRole.VAL: self.split.val,
            SplitRole.TEST: self.split.test,
        }[role]
        return [self.scenes[sid] for sid in ids]

    def with_split(self, split: DatasetSplit) -> "SceneDataset":
        return SceneDataset(self.scenes, self.classes, split)


def build_dataset(
    cfg: SceneGenConfig,
    total: int,
    ratio: float,
    classes: Optional[ClassSet] = None,
    split_seed: Optional[int] = None,
    workers: int = 1,
) -> SceneDataset:
    if classes is None:
        classes = ClassSet.synthetic(cfg.num_classes)
    if classes.count != cfg.num_classes:
        raise ConfigurationError(
            f"class set has {classes.count} names but data.num_classes = {cfg.num_classes}"
        )
    scenes = generate_scenes(cfg, range(total), workers=workers)
    split = make_split(total, ratio, cfg.seed if split_seed is None else split_seed)
    logger.info(
        f"Generated {total} scenes {cfg.height}x{cfg.width}, K={cfg.num_classes}: "
        f"{len(split.labeled)} labeled, {len(split.unlabeled)} unlabeled, "
        f"{len(split.val)} val, {len(split.test)} test"
    )
    return SceneDataset({scene.id: scene for scene in scenes}, classes, split)


def write_dataset(dataset: SceneDataset, directory: Union[str, Path]) -> None:
    """`<id>.img.grd` / `<id>.lbl.grd` pairs plus the `split.tsv` manifest"""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for scene in dataset.scenes.values():
        write_grid(scene.image, directory / f"{scene.id}.img.grd")
        write_grid(scene.truth, directory / f"{scene.id}.lbl.grd")
    lines = [f"{sid}\t{role}" for sid, role in dataset.split.roles().items()]
    (directory / SPLIT_MANIFEST).write_text("\n".join(lines) + "\n", encoding="utf-8")
    (directory / CLASSES_FILE).write_text("\n".join(dataset.classes.names) + "\n", encoding="utf-8")


def read_manifest(path: Union[str, Path]) -> Dict[str, SplitRole]:
    roles = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ConfigurationError(f"{path}:{lineno}: expected '<id>\\t<role>'")
        try:
            roles[parts[0]] = SplitRole(parts[1].strip())
        except ValueError:
            raise ConfigurationError(f"{path}:{lineno}: unknown role {parts[1]!r}") from None
    return roles


def load_dataset(
    directory: Union[str, Path], ratio: float, seed: int, classes: Optional[ClassSet] = None
) -> SceneDataset:
    """Reads a `gen-data` directory (or converted real data in the same layout)"""
    directory = Path(directory)
    roles = read_manifest(directory / SPLIT_MANIFEST)
    scenes = {}
    for sid in roles:
        image = read_grid(directory / f"{sid}.img.grd", GridKind.ARRAY)
        truth = read_grid(directory / f"{sid}.lbl.grd", GridKind.LABEL)
        scenes[sid] = Scene(id=sid, image=image, truth=truth)
    if classes is None:
        classes_path = directory / CLASSES_FILE
        if classes_path.exists():
            names = [n for n in classes_path.read_text(encoding="utf-8").splitlines() if n.strip()]
            classes = ClassSet(names=names)
        else:
            classes = ClassSet.synthetic(int(max(s.truth.data.max() for s in scenes.values())) + 1)
    by_role = {role: [sid for sid, r in roles.items() if r == role] for role in SplitRole}
    split = DatasetSplit(
        labeled=by_role[SplitRole.LABELED],
        unlabeled=by_role[SplitRole.UNLABELED],
        val=by_role[SplitRole.VAL],
        test=by_role[SplitRole.TEST],
        ratio=ratio,
        seed=seed,
    )
    return SceneDataset(scenes, classes, split)
