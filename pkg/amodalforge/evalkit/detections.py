"""
Detection and ground truth records, their JSON files, and a perturbation oracle that turns ground truth into synthetic detections.
"""
import json
import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from amodalforge.datastore import RleMask, rle_encode, rle_decode
from amodalforge.errors import EvaluationError
from amodalforge.utils import make_rng

logger = logging.getLogger(__name__)

SCORE_MODELS = ('iou', 'uniform', 'constant')


def _check_box(bbox, what):
    if len(bbox) != 4 or not (bbox[2] > 0 and bbox[3] > 0):
        raise EvaluationError(f'{what} needs a box (x, y, w, h) with positive width and height, got {tuple(bbox)}')


@dataclass(frozen=True)
class Detection:
    """
    A predicted instance. layer is set by models that predict (category, layer) pairs and None otherwise. mask, when present, is an RleMask of the image size.
    """
    imageId: int
    category: int
    score: float
    bbox: tuple
    layer: Optional[int] = None
    mask: Optional[RleMask] = None

    def __post_init__(self):
        object.__setattr__(self, 'bbox', tuple(float(b) for b in self.bbox))
        if not 0 <= self.score <= 1:
            raise EvaluationError(f'Detection score must be in [0, 1], got {self.score}')
        _check_box(self.bbox, 'Detection')

    def to_dict(self):
        d = {'image_id': self.imageId, 'category_id': self.category, 'score': self.score, 'bbox': list(self.bbox)}
        if self.layer is not None:
            d['layer'] = self.layer
        if self.mask is not None:
            d['segmentation'] = self.mask.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(imageId=int(d['image_id']), category=int(d['category_id']), score=float(d['score']), bbox=tuple(d['bbox']),
                   layer=int(d['layer']) if d.get('layer') is not None else None,
                   mask=RleMask.from_dict(d['segmentation']) if d.get('segmentation') is not None else None)


@dataclass(frozen=True)
class GroundTruth:
    """
    A ground truth instance: amodal box and amodal mask, with its layer.
    """
    imageId: int
    category: int
    bbox: tuple
    layer: Optional[int] = None
    mask: Optional[RleMask] = None
    id: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, 'bbox', tuple(float(b) for b in self.bbox))
        _check_box(self.bbox, 'Ground truth')


def ground_truth_from_record(record):
    """
    Ground truth of a DatasetRecord: one GroundTruth per annotation with the amodal box, amodal mask and layer.
    """
    return [GroundTruth(imageId=a['image_id'], category=a['category_id'], bbox=tuple(a['bbox']), layer=a['layer'],
                        mask=RleMask.from_dict(a['segmentation']), id=a['id'])
            for a in record.annotations]


def load_detections(path):
    """
    Read detections from a JSON array of records with image_id, category_id, score, bbox and optional layer and segmentation.
    """
    with open(path) as f:
        try:
            records = json.load(f)
        except json.JSONDecodeError as e:
            raise EvaluationError(f'Detections file {path} is not valid JSON: {e}') from e
    if not isinstance(records, list):
        raise EvaluationError(f'Detections file {path} must contain a JSON array')
    detections = []
    for k, d in enumerate(records):
        try:
            detections.append(Detection.from_dict(d))
        except (KeyError, TypeError, ValueError) as e:
            raise EvaluationError(f'Detection {k} in {path} is invalid: {e}') from e
    logger.info('Loaded %d detections from %s', len(detections), path)
    return detections


def save_detections(detections, path):
    """
    Write detections as a JSON array.
    """
    with open(path, 'w') as f:
        json.dump([d.to_dict() for d in detections], f, sort_keys=True)


def _shift_mask(mask, dx, dy):
    """
    Translate a boolean mask by whole pixels, filling with False.
    """
    h, w = mask.shape
    out = np.zeros_like(mask)
    if abs(dx) >= w or abs(dy) >= h:
        return out
    out[max(dy, 0):h + min(dy, 0), max(dx, 0):w + min(dx, 0)] = mask[max(-dy, 0):h + min(-dy, 0), max(-dx, 0):w + min(-dx, 0)]
    return out


def _box_iou(a, b):
    iw = max(0.0, min(a[0] + a[2], b[0] + b[2]) - max(a[0], b[0]))
    ih = max(0.0, min(a[1] + a[3], b[1] + b[3]) - max(a[1], b[1]))
    inter = iw * ih
    union = a[2] * a[3] + b[2] * b[3] - inter
    return inter / union if union > 0 else 0.0


def perturb_gt_to_detections(gts, jitter=0.0, scoreModel='iou', dropRate=0.0, duplicateRate=0.0, seed=0, withLayers=True):
    """
    Turn ground truth into synthetic detections, for testing the evaluation harness.

    Every ground truth consumes the same random draws in the same order whatever the noise settings, so runs with one seed and different jitter differ only in the jitter. With all noise parameters at zero the detections are copies of the ground truth with score 1.

    Parameters
    ----------
    gts : list
        GroundTruth objects.
    jitter : float, optional
        Box noise. Position moves by jitter * (w, h) * N(0, 1), width and height are scaled by exp(jitter * N(0, 1)). Masks are moved by the rounded position change. The default is 0.
    scoreModel : string, optional
        'iou' scores each detection by its box IoU with its ground truth, 'uniform' draws scores from U(0, 1) and 'constant' gives every detection score 1. The default is 'iou'.
    dropRate : float, optional
        Probability a ground truth has no detection. The default is 0.
    duplicateRate : float, optional
        Probability a second, independently jittered detection with half the score is added. The default is 0.
    seed : int, optional
        Seed of the random stream. The default is 0.
    withLayers : bool, optional
        Copy the ground truth layer onto the detections. The default is True.

    Returns
    -------
    detections : list
    """
    if min(jitter, dropRate, duplicateRate) < 0:
        raise EvaluationError('Noise parameters must be non-negative')
    if scoreModel not in SCORE_MODELS:
        raise EvaluationError(f"Unknown score model '{scoreModel}', expected one of {SCORE_MODELS}")
    rng = make_rng(seed)
    detections = []

    def make(gt, noise, scoreDraw, scale):
        x, y, w, h = gt.bbox
        dx, dy = jitter * w * noise[0], jitter * h * noise[1]
        box = (x + dx, y + dy, w * math.exp(jitter * noise[2]), h * math.exp(jitter * noise[3]))
        if scoreModel == 'iou':
            score = _box_iou(box, gt.bbox)
        elif scoreModel == 'uniform':
            score = scoreDraw
        else:
            score = 1.0
        mask = None
        if gt.mask is not None:
            mask = gt.mask if dx == 0 and dy == 0 else rle_encode(_shift_mask(rle_decode(gt.mask), int(round(dx)), int(round(dy))))
        return Detection(imageId=gt.imageId, category=gt.category, score=float(score * scale), bbox=box,
                         layer=gt.layer if withLayers else None, mask=mask)

    for gt in gts:
        uDrop = rng.random()
        noise = rng.standard_normal(4)
        uDuplicate = rng.random()
        duplicateNoise = rng.standard_normal(4)
        uScore = rng.random()
        if uDrop < dropRate:
            continue
        detections.append(make(gt, noise, uScore, 1.0))
        if uDuplicate < duplicateRate:
            detections.append(make(gt, duplicateNoise, uScore, 0.5))
    return detections
