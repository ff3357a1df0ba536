"""Teacher-student training with VLM pseudo-label purification

One iteration:

1. supervised CE on a weakly augmented labeled batch
2. teacher pseudo-labels on weak views of an unlabeled batch
3. purification against the oracle (or the baseline policy when train.vlmpp is off)
4. CutMix + photometric strong views, CE of the student against the purified
   labels on valid pixels
5. SGD on the summed loss, then EMA into the teacher

An epoch is one pass over the unlabeled pool; labeled scenes are cycled with
their own shuffle.
"""
import json
import math
from logging import getLogger
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Tuple, Union

import numpy as np
from devtools import pformat

from vlmseg.augment import (
    align_pseudo_labels,
    apply_geo_labels,
    draw_cutmix_box,
    mix_mask,
    strong_augment,
    weak_augment,
)
from vlmseg.classes.enums import EvalModel, SplitRole
from vlmseg.classes.grid import ClassSet, LabelMap, PixelMask
from vlmseg.classes.metric import ConfusionMatrix, MetricReport
from vlmseg.classes.params import Checkpoint, ModelParams, TrainState
from vlmseg.classes.prediction import VlmLayer
from vlmseg.classes.purify import PurifyStats
from vlmseg.classes.scene import Scene
from vlmseg.classes.training import EpochLog
from vlmseg.config import TrainerConfig
from vlmseg.errors import TrainingError
from vlmseg.grid import argmax_labels, confidence
from vlmseg.metrics import confusion, miou, try_miou
from vlmseg.oracle import Oracle, build_oracle, prediction_layers, transform_layer
from vlmseg.pixelmodel import (
    add_grads,
    ce_loss_and_grad_batch,
    ema_update,
    featurize,
    forward,
    init_params,
    num_model_features,
    predict_labels,
    sgd_step,
)
from vlmseg.scenegen import SceneDataset, build_dataset, load_dataset
from vlmseg.vlmpp import baseline_targets, purify

logger = getLogger("vlmseg")

TRAIN_LOG = "train_log.jsonl"


def loss_total(loss_s: float, loss_u: float) -> float:
    """Unweighted sum of the supervised and unsupervised losses"""
    return loss_s + loss_u


def prepare_dataset(cfg: TrainerConfig) -> SceneDataset:
    data = cfg.data
    if data.dir:
        return load_dataset(data.dir, cfg.train.labeled_ratio, cfg.seed, data.class_set())
    return build_dataset(
        data.scene_config(cfg.seed),
        data.total,
        cfg.train.labeled_ratio,
        classes=data.class_set(),
        workers=data.workers,
    )


def make_oracle(cfg: TrainerConfig, classes: ClassSet) -> Oracle:
    vlm = cfg.vlm
    return build_oracle(
        vlm.mode,
        classes,
        mock=vlm.mock_config(cfg.seed),
        endpoint=vlm.endpoint,
        timeout=vlm.timeout,
        max_inflight=vlm.max_inflight,
        cache_dir=vlm.cache_dir,
        constrained_prompt=vlm.constrained_prompt,
    )


def evaluate_params(
    params: ModelParams,
    scenes: List[Scene],
    classes: ClassSet,
    features: Optional[Dict[str, np.ndarray]] = None,
) -> MetricReport:
    """Score a parameter set on whole scenes"""
    cm = ConfusionMatrix.zeros(classes.count)
    for scene in scenes:
        feats = features[scene.id] if features is not None else featurize(scene.image)
        pred = LabelMap(data=predict_labels(params, feats), num_classes=classes.count)
        cm = cm + confusion(pred, scene.truth, num_classes=classes.count)
    return miou(cm, classes)


class _Unlabeled:
    """Weak-view pseudo-label bundle of one unlabeled sample"""

    def __init__(self, scene, view, features, geo, truth, teacher_labels, targets):
        self.scene = scene
        self.view = view
        self.features = features
        self.geo = geo
        self.truth = truth
        self.teacher_labels = teacher_labels
        self.targets = targets


class Trainer:
    def __init__(
        self,
        dataset: SceneDataset,
        cfg: TrainerConfig,
        oracle: Optional[Oracle] = None,
        log_path: Optional[Union[str, Path]] = None,
    ):
        self.dataset = dataset
        self.cfg = cfg
        self.classes = dataset.classes
        self.num_classes = dataset.classes.count
        self.labeled = dataset.pool(SplitRole.LABELED)
        self.unlabeled = dataset.pool(SplitRole.UNLABELED)
        self.val = dataset.pool(SplitRole.VAL)
        if not self.labeled:
            raise TrainingError("training needs at least one labeled scene")
        if not self.val:
            logger.warning("No validation scenes, scoring checkpoints on the labeled pool")
            self.val = self.labeled

        channels = self.labeled[0].num_features
        init = init_params(num_model_features(channels), self.num_classes, cfg.seed, cfg.train.init_scale)
        self.state = TrainState(
            student=init,
            teacher=init,
            ema_decay=cfg.train.ema_decay,
            learning_rate=cfg.train.lr,
        )
        self.purify_cfg = cfg.purify.purify_config()
        self.weak_recipe = cfg.augment.weak_recipe()
        self.strong_recipe = cfg.augment.strong_recipe()
        self.val_features = {scene.id: featurize(scene.image) for scene in self.val}
        self.log_path = Path(log_path) if log_path is not None else None
        self._labeled = self._labeled_stream()

        self.layers: Dict[str, Optional[VlmLayer]] = {}
        if cfg.train.vlmpp and self.unlabeled:
            if oracle is None:
                oracle = make_oracle(cfg, self.classes)
            self.layers = prediction_layers(oracle, self.unlabeled, cfg.vlm.vlm_config())
            missing = sum(layer is None for layer in self.layers.values())
            if missing:
                logger.warning(f"{missing} of {len(self.layers)} unlabeled scenes have no VLM opinion")

    def _labeled_stream(self) -> Iterator[Scene]:
        rounds = 0
        while True:
            order = np.random.default_rng([self.cfg.seed, 0x1AB, rounds]).permutation(len(self.labeled))
            for idx in order:
                yield self.labeled[idx]
            rounds += 1

    def _supervised_sample(self, scene: Scene, position: int):
        seed = [self.cfg.seed, 0x1A, self.state.step, position]
        view, geo = weak_augment(scene, seed, self.weak_recipe)
        labels = apply_geo_labels(scene.truth, geo)
        return featurize(view), labels, PixelMask.full(*labels.hw), None

    def _pseudo_label(self, scene: Scene, position: int) -> _Unlabeled:
        seed = [self.cfg.seed, 0x0B, self.state.step, position]
        view, geo = weak_augment(scene, seed, self.weak_recipe)
        features = featurize(view)
        probs = forward(self.state.teacher, features)
        teacher_labels = argmax_labels(probs)
        teacher_conf = confidence(probs)
        if self.cfg.train.vlmpp:
            layer = self.layers.get(scene.id)
            if layer is not None:
                layer = transform_layer(layer, geo)
            targets = purify(teacher_labels, teacher_conf, layer, self.purify_cfg, self.num_classes)
        else:
            targets = baseline_targets(
                teacher_labels, teacher_conf, self.cfg.train.baseline_filter, self.purify_cfg, self.num_classes
            )
        truth = apply_geo_labels(scene.truth, geo)
        return _Unlabeled(scene, view, features, geo, truth, teacher_labels, targets)

    def _student_sample(self, item: _Unlabeled, donor: Optional[_Unlabeled], position: int):
        seed = [self.cfg.seed, 0x57, self.state.step, position]
        targets = item.targets
        recipe = self.strong_recipe
        if donor is None:
            strong = strong_augment(item.view, recipe, seed)
            labels, conf, valid = targets.labels, targets.conf, targets.valid
        else:
            height, width = item.view.shape[:2]
            box = draw_cutmix_box(
                height,
                width,
                donor.scene.id,
                seed,
                self.cfg.augment.cutmix_min_frac,
                self.cfg.augment.cutmix_max_frac,
            )
            recipe = recipe.copy(update={"cutmix": box})
            strong = strong_augment(item.view, recipe, seed, donor.view)
            labels, conf = align_pseudo_labels(
                targets.labels, targets.conf, item.geo, box, donor.targets.labels, donor.targets.conf
            )
            valid = mix_mask(targets.valid, box, donor.targets.valid)
        weights = conf if self.cfg.train.confidence_weighted else None
        return featurize(strong), labels, valid, weights

    def _pick_donor(self, batch: List[_Unlabeled], position: int) -> Optional[_Unlabeled]:
        if len(batch) < 2:
            return None
        coin = np.random.default_rng([self.cfg.seed, 0xC0, self.state.step, position]).random()
        if coin >= self.cfg.augment.cutmix_prob:
            return None
        return batch[(position + 1) % len(batch)]

    def step(self, labeled: List[Scene], unlabeled: List[Scene]):
        """One optimisation step; returns losses, purify stats and the weak-view bundles"""
        state = self.state
        sup_samples = [self._supervised_sample(scene, pos) for pos, scene in enumerate(labeled)]
        loss_s, grad_s, _ = ce_loss_and_grad_batch(state.student, sup_samples)

        batch = [self._pseudo_label(scene, pos) for pos, scene in enumerate(unlabeled)]
        stats = PurifyStats()
        for item in batch:
            stats = stats.merge(item.targets.stats)
        unsup_samples = [
            self._student_sample(item, self._pick_donor(batch, pos), pos) for pos, item in enumerate(batch)
        ]
        loss_u, grad_u, _ = ce_loss_and_grad_batch(state.student, unsup_samples)

        loss = loss_total(loss_s, loss_u)
        if not math.isfinite(loss):
            raise TrainingError(
                f"non-finite loss at step {state.step}: L_S = {loss_s}, L_U = {loss_u}, "
                f"student weights |w|max = {np.abs(state.student.weights).max():.3g}"
            )
        new_state = sgd_step(state, add_grads(grad_s, grad_u))
        self.state = ema_update(new_state)
        logger.debug(f"step {state.step} purify stats:\n{pformat(stats.dict())}")
        return loss_s, loss_u, loss, stats, batch

    def _iterations(self) -> int:
        if self.unlabeled:
            return math.ceil(len(self.unlabeled) / self.cfg.train.unlabeled_batch)
        return math.ceil(len(self.labeled) / self.cfg.train.labeled_batch)

    def run_epoch(self, epoch: int) -> EpochLog:
        cfg = self.cfg.train
        order = np.random.default_rng([self.cfg.seed, 0xE9, epoch]).permutation(len(self.unlabeled))
        fed_cm = ConfusionMatrix.zeros(self.num_classes)
        raw_cm = ConfusionMatrix.zeros(self.num_classes)
        student_cm = ConfusionMatrix.zeros(self.num_classes)
        stats = PurifyStats()
        losses = []
        for iteration in range(self._iterations()):
            labeled = [next(self._labeled) for _ in range(cfg.labeled_batch)]
            chosen = order[iteration * cfg.unlabeled_batch : (iteration + 1) * cfg.unlabeled_batch]
            unlabeled = [self.unlabeled[idx] for idx in chosen]
            student_before = self.state.student
            loss_s, loss_u, loss, step_stats, batch = self.step(labeled, unlabeled)
            losses.append((loss_s, loss_u, loss))
            stats = stats.merge(step_stats)
            for item in batch:
                fed_cm = fed_cm + confusion(
                    item.targets.labels, item.truth, item.targets.valid, self.num_classes
                )
                raw_cm = raw_cm + confusion(item.teacher_labels, item.truth, None, self.num_classes)
                student_labels = LabelMap(
                    data=predict_labels(student_before, item.features), num_classes=self.num_classes
                )
                student_cm = student_cm + confusion(student_labels, item.truth, None, self.num_classes)

        student_report = evaluate_params(self.state.student, self.val, self.classes, self.val_features)
        teacher_report = evaluate_params(self.state.teacher, self.val, self.classes, self.val_features)
        report = teacher_report if cfg.eval_model == EvalModel.TEACHER else student_report
        mean_losses = np.mean(np.asarray(losses), axis=0) if losses else np.zeros(3)
        return EpochLog(
            epoch=epoch,
            step=self.state.step,
            loss_s=float(mean_losses[0]),
            loss_u=float(mean_losses[1]),
            loss=float(mean_losses[2]),
            pseudo_label_miou=try_miou(fed_cm, self.classes) if self.unlabeled else None,
            teacher_raw_miou=try_miou(raw_cm, self.classes) if self.unlabeled else None,
            student_pseudo_miou=try_miou(student_cm, self.classes) if self.unlabeled else None,
            val_miou=report.miou,
            student_val_miou=student_report.miou,
            teacher_val_miou=teacher_report.miou,
            val_class_iou=report.class_iou,
            purify=stats,
        )

    def run(self) -> Tuple[Checkpoint, List[EpochLog]]:
        logs: List[EpochLog] = []
        best: Optional[Checkpoint] = None
        if self.log_path is not None:
            self.log_path.parent.mkdir(parents=True, exist_ok=True)
            self.log_path.write_text("", encoding="utf-8")
        for epoch in range(self.cfg.train.epochs):
            log = self.run_epoch(epoch)
            logs.append(log)
            if self.log_path is not None:
                with self.log_path.open("a", encoding="utf-8") as stream:
                    stream.write(json.dumps(json.loads(log.json()), sort_keys=True) + "\n")
            logger.info(
                f"epoch {epoch + 1}/{self.cfg.train.epochs} step {log.step}: "
                f"L = {log.loss:.4f} (L_S {log.loss_s:.4f}, L_U {log.loss_u:.4f}), "
                f"val mIoU {log.val_miou:.4f}, pseudo-label mIoU {log.pseudo_label_miou}"
            )
            if best is None or log.val_miou > best.val_miou:
                best = Checkpoint(state=self.state, epoch=epoch, val_miou=log.val_miou)
        assert best is not None
        return best, logs


def train(
    dataset: SceneDataset,
    cfg: TrainerConfig,
    oracle: Optional[Oracle] = None,
    log_path: Optional[Union[str, Path]] = None,
) -> Tuple[Checkpoint, List[EpochLog]]:
    """Run a full training; returns the best checkpoint by validation mIoU and the epoch logs"""
    return Trainer(dataset, cfg, oracle, log_path).run()
