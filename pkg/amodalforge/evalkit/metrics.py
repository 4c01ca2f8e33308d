"""
COCO style evaluation: IoU, greedy matching and average precision over a range of IoU thresholds, grouped by category or by layer.
"""
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd

from amodalforge.datastore import rle_decode
from amodalforge.errors import EvaluationError
from amodalforge.evalkit.detections import ground_truth_from_record
from amodalforge.utils import ordered_map

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLDS = tuple(float(t) for t in np.round(np.linspace(0.5, 0.95, 10), 2))
GROUPINGS = ('category', 'layer')
TARGETS = ('box', 'mask')


@dataclass(frozen=True)
class APConfig:
    """
    Evaluation settings.

    Attributes
    ----------
    iouThresholds : tuple
        Strictly increasing thresholds in (0, 1]. The default is 0.50, 0.55, ..., 0.95.
    recallPoints : int
        Number of evenly spaced recall values in [0, 1] at which precision is sampled. The default is 101.
    grouping : str
        'category' groups by category id, 'layer' by layer whatever the category.
    target : str
        'box' or 'mask' IoU.
    maxDets : int or None
        Keep only the highest scoring detections of each image. None (the default) keeps all.
    """
    iouThresholds: tuple = DEFAULT_THRESHOLDS
    recallPoints: int = 101
    grouping: str = 'category'
    target: str = 'box'
    maxDets: Optional[int] = None

    def __post_init__(self):
        t = np.asarray(self.iouThresholds, dtype=float)
        if t.size == 0 or np.any(np.diff(t) <= 0) or t[0] <= 0 or t[-1] > 1:
            raise EvaluationError(f'IoU thresholds must be strictly increasing within (0, 1], got {self.iouThresholds}')
        if self.recallPoints < 2:
            raise EvaluationError(f'recallPoints must be at least 2, got {self.recallPoints}')
        if self.grouping not in GROUPINGS:
            raise EvaluationError(f"grouping must be one of {GROUPINGS}, got '{self.grouping}'")
        if self.target not in TARGETS:
            raise EvaluationError(f"target must be one of {TARGETS}, got '{self.target}'")
        if self.maxDets is not None and self.maxDets < 1:
            raise EvaluationError(f'maxDets must be positive, got {self.maxDets}')


@dataclass
class MatchResult:
    """
    Result of matching one image at one threshold. tp holds (detection index, ground truth index) pairs, fp unmatched detection indices and fn unmatched ground truth indices.
    """
    tp: list = field(default_factory=list)
    fp: list = field(default_factory=list)
    fn: list = field(default_factory=list)


@dataclass
class APReport:
    """
    Evaluation results. All AP values are percentages.

    Attributes
    ----------
    meanAP : float
        AP averaged over thresholds and groups with ground truth.
    ap50, ap75 : float or None
        AP at IoU 0.50 and 0.75, None if the threshold was not evaluated.
    perGroup : dict
        Group (category id or layer) -> AP averaged over thresholds.
    perThreshold : dict
        Threshold -> AP averaged over groups.
    diagnostics : dict
        Threshold -> {'tp', 'fp', 'fn'} counts.
    grouping, target : str
        The settings used.
    """
    meanAP: float
    ap50: Optional[float]
    ap75: Optional[float]
    perGroup: dict
    perThreshold: dict
    diagnostics: dict
    grouping: str = 'category'
    target: str = 'box'

    def to_dict(self):
        return {'AP': self.meanAP, 'AP50': self.ap50, 'AP75': self.ap75, 'grouping': self.grouping, 'target': self.target,
                'per_group': {str(g): ap for g, ap in self.perGroup.items()},
                'per_threshold': {f'{t:.2f}': ap for t, ap in self.perThreshold.items()},
                'diagnostics': {f'{t:.2f}': d for t, d in self.diagnostics.items()}}

    def to_table(self, categoryNames=None):
        """
        One row table with AP, AP50, AP75 and a column per group. Layer grouping always has columns L0 to L4 (and more if deeper layers exist), NaN where a layer has no ground truth.
        """
        row = {'AP': self.meanAP, 'AP50': self.ap50, 'AP75': self.ap75}
        if self.grouping == 'layer':
            deepest = max([4] + [int(g) for g in self.perGroup])
            for k in range(deepest + 1):
                row[f'L{k}'] = self.perGroup.get(k, np.nan)
        else:
            for g in sorted(self.perGroup):
                name = categoryNames[g] if categoryNames is not None and g < len(categoryNames) else str(g)
                row[name] = self.perGroup[g]
        return pd.DataFrame([row], index=[self.target.capitalize()]).round(3)


def box_iou(a, b):
    """
    IoU of two (x, y, w, h) boxes.
    """
    return float(box_iou_matrix(np.asarray([a], dtype=float), np.asarray([b], dtype=float))[0, 0])


def box_iou_matrix(boxesA, boxesB):
    """
    Pairwise IoU of two arrays of (x, y, w, h) boxes.

    Parameters
    ----------
    boxesA : numpy array
        (n, 4) boxes.
    boxesB : numpy array
        (m, 4) boxes.

    Returns
    -------
    iou : numpy array
        (n, m) IoU values, 0 where the union is empty.
    """
    a = np.asarray(boxesA, dtype=float).reshape(-1, 4)
    b = np.asarray(boxesB, dtype=float).reshape(-1, 4)
    iw = np.minimum(a[:, None, 0] + a[:, None, 2], b[None, :, 0] + b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    ih = np.minimum(a[:, None, 1] + a[:, None, 3], b[None, :, 1] + b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.clip(iw, 0, None) * np.clip(ih, 0, None)
    union = (a[:, 2] * a[:, 3])[:, None] + (b[:, 2] * b[:, 3])[None, :] - inter
    return np.divide(inter, union, out=np.zeros_like(inter), where=union > 0)


def _decoded(records):
    masks = []
    for r in records:
        if r.mask is None:
            raise EvaluationError('Mask evaluation needs a mask on every detection and ground truth')
        masks.append(rle_decode(r.mask))
    return masks


def mask_iou_matrix(masksA, masksB):
    """
    Pairwise IoU of two lists of boolean masks of the same size.
    """
    shapes = {m.shape for m in list(masksA) + list(masksB)}
    if len(shapes) > 1:
        raise EvaluationError(f'Mask sizes do not match: {sorted(shapes)}')
    if len(masksA) == 0 or len(masksB) == 0:
        return np.zeros((len(masksA), len(masksB)))
    a = np.asarray(masksA, dtype=np.float32).reshape(len(masksA), -1)
    b = np.asarray(masksB, dtype=np.float32).reshape(len(masksB), -1)
    inter = (a @ b.T).astype(np.float64)
    union = a.sum(axis=1, dtype=np.float64)[:, None] + b.sum(axis=1, dtype=np.float64)[None, :] - inter
    return np.divide(inter, union, out=np.zeros_like(inter), where=union > 0)


def iou(a, b, target='box'):
    """
    IoU of two detections or ground truths, on boxes or on decoded masks.
    """
    if target == 'box':
        return box_iou(a.bbox, b.bbox)
    if target == 'mask':
        return float(mask_iou_matrix(_decoded([a]), _decoded([b]))[0, 0])
    raise EvaluationError(f"target must be one of {TARGETS}, got '{target}'")


def iou_matrix(dets, gts, target='box'):
    """
    (len(dets), len(gts)) IoU matrix.
    """
    if target == 'box':
        return box_iou_matrix([d.bbox for d in dets], [g.bbox for g in gts])
    return mask_iou_matrix(_decoded(dets), _decoded(gts))


def group_of(record, grouping):
    """
    Group key of a detection or ground truth.
    """
    if grouping == 'category':
        return record.category
    if record.layer is None:
        raise EvaluationError('Layer grouping needs a layer on every detection and ground truth')
    return record.layer


def greedy_match(gts, dets, threshold, grouping='category', target='box', ious=None):
    """
    Match detections to ground truth of one image, COCO style.

    Detections are taken by descending score (ties keep their input order). Each one matches the unmatched ground truth of its group with the highest IoU, if that IoU is at least threshold. Ties between ground truths go to the lower index.

    Parameters
    ----------
    gts : list
        Ground truth of the image.
    dets : list
        Detections of the image.
    threshold : float
        IoU threshold.
    grouping : str, optional
        'category' or 'layer'. The default is 'category'.
    target : str, optional
        'box' or 'mask'. The default is 'box'.
    ious : numpy array, optional
        Precomputed (len(dets), len(gts)) IoU matrix.

    Returns
    -------
    result : MatchResult
    """
    if ious is None:
        ious = iou_matrix(dets, gts, target)
    gtGroups = np.array([group_of(g, grouping) for g in gts])
    matched = np.zeros(len(gts), dtype=bool)
    result = MatchResult()
    order = np.argsort([-d.score for d in dets], kind='stable')
    for d in order:
        if len(gts) == 0:
            result.fp.append(int(d))
            continue
        candidates = np.where(~matched & (gtGroups == group_of(dets[d], grouping)), ious[d], -1.0)
        g = int(np.argmax(candidates))
        if candidates[g] >= threshold:
            matched[g] = True
            result.tp.append((int(d), g))
        else:
            result.fp.append(int(d))
    result.fn = [int(g) for g in np.flatnonzero(~matched)]
    return result


def average_precision(scores, flags, nGt, recallPoints=101):
    """
    Interpolated AP of one group at one threshold, as a percentage.

    Precision is made non-increasing from the right and sampled at recallPoints evenly spaced recall values, taking for each recall value the first rank whose recall reaches it (0 if none does).

    Parameters
    ----------
    scores : list
        Scores of the group's detections.
    flags : list
        True for true positives.
    nGt : int
        Number of ground truths in the group (> 0).
    recallPoints : int, optional
        The default is 101.

    Returns
    -------
    ap : float
    """
    recallThresholds = np.linspace(0, 1, recallPoints)
    if len(scores) == 0:
        return 0.0
    order = np.argsort(-np.asarray(scores, dtype=float), kind='stable')
    tp = np.asarray(flags, dtype=bool)[order]
    tpc = np.cumsum(tp)
    fpc = np.cumsum(~tp)
    recall = tpc / nGt
    precision = tpc / (tpc + fpc)
    precision = np.maximum.accumulate(precision[::-1])[::-1]
    inds = np.searchsorted(recall, recallThresholds, side='left')
    q = np.zeros(recallPoints)
    valid = inds < len(precision)
    q[valid] = precision[inds[valid]]
    return 100 * q.mean()


def _top(dets, maxDets):
    if maxDets is None or len(dets) <= maxDets:
        return dets
    order = np.argsort([-d.score for d in dets], kind='stable')[:maxDets]
    return [dets[k] for k in sorted(order)]


def evaluate_ap(gts, dets, config=None, workers=1):
    """
    COCO style average precision.

    For every threshold and group, detections from all images are ranked by score (ties by image id, then input order) and AP is computed by average_precision(). Groups without ground truth are left out of the means. With layer grouping a false positive is counted in the group of its predicted layer.

    Parameters
    ----------
    gts : list or DatasetRecord
        Ground truth, as GroundTruth objects or a dataset record.
    dets : list
        Detections.
    config : APConfig, optional
        Evaluation settings. The default is APConfig().
    workers : int, optional
        Threads used for per-image matching. The default is 1.

    Returns
    -------
    report : APReport
    """
    config = config or APConfig()
    if hasattr(gts, 'annotations'):
        gts = ground_truth_from_record(gts)
    gts, dets = list(gts), list(dets)
    if len(gts) == 0:
        raise EvaluationError('nothing to evaluate: the ground truth is empty')
    gtsByImage, detsByImage = {}, {}
    for g in gts:
        gtsByImage.setdefault(g.imageId, []).append(g)
    for d in dets:
        detsByImage.setdefault(d.imageId, []).append(d)
    unknown = sorted(set(detsByImage) - set(gtsByImage))
    if unknown:
        raise EvaluationError(f'Detections refer to unknown image id(s) {unknown[:10]}')
    thresholds = [float(t) for t in config.iouThresholds]
    images = sorted(gtsByImage)

    def match_image(imageId):
        G = gtsByImage[imageId]
        D = _top(detsByImage.get(imageId, []), config.maxDets)
        ious = iou_matrix(D, G, config.target) if D else np.zeros((0, len(G)))
        return G, D, [greedy_match(G, D, t, config.grouping, config.target, ious) for t in thresholds]

    nGt = {}
    scores, flags = {}, {}
    diagnostics = {t: {'tp': 0, 'fp': 0, 'fn': 0} for t in thresholds}
    for G, D, results in ordered_map(match_image, images, workers=workers):
        for g in G:
            key = group_of(g, config.grouping)
            nGt[key] = nGt.get(key, 0) + 1
        detGroups = [group_of(d, config.grouping) for d in D]
        for t, result in zip(thresholds, results):
            isTp = np.zeros(len(D), dtype=bool)
            for d, _ in result.tp:
                isTp[d] = True
            for d, key in enumerate(detGroups):
                scores.setdefault((t, key), []).append(D[d].score)
                flags.setdefault((t, key), []).append(isTp[d])
            diagnostics[t]['tp'] += len(result.tp)
            diagnostics[t]['fp'] += len(result.fp)
            diagnostics[t]['fn'] += len(result.fn)

    groups = sorted(nGt)
    ap = np.array([[average_precision(scores.get((t, g), []), flags.get((t, g), []), nGt[g], config.recallPoints)
                    for g in groups] for t in thresholds])

    def at(threshold):
        k = [i for i, t in enumerate(thresholds) if np.isclose(t, threshold)]
        return float(ap[k[0]].mean()) if k else None

    report = APReport(meanAP=float(ap.mean()), ap50=at(0.5), ap75=at(0.75),
                      perGroup={g: float(ap[:, k].mean()) for k, g in enumerate(groups)},
                      perThreshold={t: float(ap[i].mean()) for i, t in enumerate(thresholds)},
                      diagnostics=diagnostics, grouping=config.grouping, target=config.target)
    logger.info('AP %.3f over %d image(s), %d group(s)', report.meanAP, len(images), len(groups))
    return report
