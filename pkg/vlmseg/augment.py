"""Weak and strong augmentations

One GeoTransform is drawn per unlabeled sample and shared by both views: the
strong view is derived from the weak view by CutMix, photometric jitter and
blur only. Teacher pseudo-labels computed on the weak view therefore line up
with the student's strong view pixel for pixel, except inside the CutMix box.
"""
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy.ndimage import gaussian_filter, zoom

from vlmseg.classes.grid import ConfidenceMap, LabelMap, PixelMask
from vlmseg.classes.scene import Scene
from vlmseg.classes.transform import CutMixBox, GeoTransform, StrongRecipe, WeakRecipe
from vlmseg.errors import AugmentError
from vlmseg.grid import check_same_hw

Seed = Union[int, Sequence[int]]


def _rng(seed: Seed, stream: int) -> np.random.Generator:
    if isinstance(seed, (int, np.integer)):
        return np.random.default_rng([int(seed), stream])
    return np.random.default_rng([*seed, stream])


def _fit(array: np.ndarray, height: int, width: int) -> np.ndarray:
    """Centre-crop or symmetric-pad the two leading axes back to height x width"""
    for axis, target in ((0, height), (1, width)):
        size = array.shape[axis]
        if size > target:
            start = (size - target) // 2
            array = np.take(array, np.arange(start, start + target), axis=axis)
        elif size < target:
            before = (target - size) // 2
            pad = [(0, 0)] * array.ndim
            pad[axis] = (before, target - size - before)
            array = np.pad(array, pad, mode="symmetric")
    return array


def apply_geo(array: np.ndarray, geo: GeoTransform, nearest: bool = False) -> np.ndarray:
    """Apply `geo` to an H x W or H x W x C array; `nearest` for labels and layers"""
    height, width = array.shape[:2]
    out = array
    if geo.scale != 1.0:
        factors = (geo.scale, geo.scale) + (1.0,) * (array.ndim - 2)
        out = zoom(out, factors, order=0 if nearest else 1, mode="nearest")
        out = _fit(out, height, width)
    if geo.hflip:
        out = out[:, ::-1]
    if geo.vflip:
        out = out[::-1, :]
    return np.ascontiguousarray(out)


def apply_geo_labels(labels: LabelMap, geo: GeoTransform) -> LabelMap:
    return LabelMap(data=apply_geo(labels.data, geo, nearest=True), num_classes=labels.num_classes)


def draw_geo(recipe: WeakRecipe, rng: np.random.Generator) -> GeoTransform:
    hflip, vflip, rescale, scale = rng.random(4)
    return GeoTransform(
        hflip=bool(hflip < recipe.hflip_prob),
        vflip=bool(vflip < recipe.vflip_prob),
        scale=float(recipe.scale_min + scale * (recipe.scale_max - recipe.scale_min))
        if rescale < recipe.scale_prob
        else 1.0,
    )


def weak_augment(
    scene: Scene, seed: Seed, recipe: Optional[WeakRecipe] = None
) -> Tuple[np.ndarray, GeoTransform]:
    """Geometric view of the scene image plus the transform record used"""
    recipe = recipe or WeakRecipe()
    geo = draw_geo(recipe, _rng(seed, 1))
    return apply_geo(scene.image, geo), geo


def draw_cutmix_box(
    height: int,
    width: int,
    donor_id: str,
    seed: Seed,
    min_frac: float = 0.1,
    max_frac: float = 0.5,
) -> CutMixBox:
    """Box covering between min_frac and max_frac of the image"""
    assert 0.0 < min_frac <= max_frac <= 1.0, "cutmix fraction range must be within (0, 1]"
    rng = _rng(seed, 3)
    total = height * width
    frac, aspect, top_draw, left_draw = rng.random(4)
    area = (min_frac + frac * (max_frac - min_frac)) * total
    ratio = np.exp((aspect - 0.5) * np.log(2.0))
    box_h = int(np.clip(round(np.sqrt(area * ratio)), 1, height))
    box_w = int(np.clip(round(area / box_h), 1, width))
    while box_h * box_w < min_frac * total:
        if box_w < width:
            box_w += 1
        else:
            box_h += 1
    while box_h * box_w > max_frac * total:
        if box_w > 1 and (box_w >= box_h or box_h == 1):
            box_w -= 1
        else:
            box_h -= 1
    top = int(top_draw * (height - box_h + 1))
    left = int(left_draw * (width - box_w + 1))
    return CutMixBox(donor_id=donor_id, top=top, left=left, height=box_h, width=box_w)


def strong_augment(
    view: np.ndarray,
    recipe: StrongRecipe,
    seed: Seed,
    donor_view: Optional[np.ndarray] = None,
) -> np.ndarray:
    """CutMix paste, then brightness/contrast jitter and Gaussian blur on features"""
    rng = _rng(seed, 2)
    brightness, contrast, blur_coin, blur_sigma = rng.random(4)
    out = np.array(view, dtype=np.float64, copy=True)
    height, width = out.shape[:2]

    box = recipe.cutmix
    if box is not None:
        if donor_view is None:
            raise AugmentError(f"CutMix box from {box.donor_id} needs the donor view")
        if donor_view.shape != view.shape:
            raise AugmentError(f"donor view {donor_view.shape} does not match {view.shape}")
        if not box.fits(height, width):
            raise AugmentError(f"CutMix box {box} exceeds {height}x{width}")
        out[box.slices] = donor_view[box.slices]

    if recipe.brightness > 0:
        out += (2.0 * brightness - 1.0) * recipe.brightness
    if recipe.contrast > 0:
        factor = 1.0 + (2.0 * contrast - 1.0) * recipe.contrast
        mean = out.mean(axis=(0, 1), keepdims=True)
        out = (out - mean) * factor + mean
    if recipe.blur_sigma_max > 0 and blur_coin < recipe.blur_prob:
        sigma = recipe.blur_sigma_min + blur_sigma * (recipe.blur_sigma_max - recipe.blur_sigma_min)
        if sigma > 0:
            sigmas = (sigma, sigma) + (0.0,) * (out.ndim - 2)
            out = gaussian_filter(out, sigma=sigmas, mode="reflect")
    return out


def align_pseudo_labels(
    labels: LabelMap,
    conf: ConfidenceMap,
    geo: GeoTransform,
    cutmix: Optional[CutMixBox] = None,
    donor_labels: Optional[LabelMap] = None,
    donor_conf: Optional[ConfidenceMap] = None,
) -> Tuple[LabelMap, ConfidenceMap]:
    """Map weak-view pseudo-labels onto the strong view.

    `labels`/`conf` are already in the frame of `geo` (the weak view), which the
    strong view shares, so only the CutMix paste has to be mirrored.
    """
    check_same_hw(labels, conf)
    if cutmix is None:
        return labels, conf
    if donor_labels is None or donor_conf is None:
        raise AugmentError(f"CutMix from {cutmix.donor_id} needs donor labels and confidences")
    check_same_hw(labels, conf, donor_labels, donor_conf)
    if not cutmix.fits(labels.height, labels.width):
        raise AugmentError(f"CutMix box {cutmix} exceeds {labels.height}x{labels.width}")
    mixed_labels = np.array(labels.data, copy=True)
    mixed_conf = np.array(conf.data, copy=True)
    mixed_labels[cutmix.slices] = donor_labels.data[cutmix.slices]
    mixed_conf[cutmix.slices] = donor_conf.data[cutmix.slices]
    return (
        LabelMap(data=mixed_labels, num_classes=labels.num_classes),
        ConfidenceMap(data=mixed_conf),
    )


def mix_mask(
    mask: PixelMask, cutmix: Optional[CutMixBox], donor_mask: Optional[PixelMask]
) -> PixelMask:
    """CutMix counterpart of `align_pseudo_labels` for validity masks"""
    if cutmix is None:
        return mask
    if donor_mask is None:
        raise AugmentError(f"CutMix from {cutmix.donor_id} needs the donor mask")
    check_same_hw(mask, donor_mask)
    mixed = np.array(mask.data, copy=True)
    mixed[cutmix.slices] = donor_mask.data[cutmix.slices]
    return PixelMask(data=mixed)
