"""
Greedy non-maximum suppression, per category or per (category, layer) pair, and the layer collapse applied after it.
"""
import dataclasses
import logging

import numpy as np

from amodalforge.errors import EvaluationError
from amodalforge.evalkit.metrics import box_iou_matrix

logger = logging.getLogger(__name__)

NMS_MODES = ('class', 'class-layer')


def _greedy_keep(boxes, scores, threshold):
    """
    Indices kept by greedy suppression: take the highest score left, drop everything overlapping it by more than threshold, repeat.
    """
    order = np.argsort(-scores, kind='stable')
    keep = []
    while order.size > 0:
        i = order[0]
        keep.append(int(i))
        overlap = box_iou_matrix(boxes[i:i + 1], boxes[order[1:]])[0]
        order = order[1:][overlap <= threshold]
    return keep


def nms(dets, iouThreshold=0.5, mode='class'):
    """
    Non-maximum suppression of the detections of one image.

    Parameters
    ----------
    dets : list
        Detections.
    iouThreshold : float, optional
        Detections overlapping a kept detection of their group with box IoU above this are removed. The default is 0.5.
    mode : string, optional
        'class' groups detections by category, 'class-layer' by (category, layer) pair. The default is 'class'.

    Returns
    -------
    kept : list
        The surviving detections, in input order.
    """
    dets = list(dets)
    return [dets[k] for k in _kept_indices(dets, iouThreshold, mode)]


def _kept_indices(dets, iouThreshold, mode):
    if mode not in NMS_MODES:
        raise EvaluationError(f"NMS mode must be one of {NMS_MODES}, got '{mode}'")
    if mode == 'class-layer' and any(d.layer is None for d in dets):
        raise EvaluationError('class-layer NMS needs a layer on every detection')
    groups = {}
    for k, d in enumerate(dets):
        groups.setdefault(d.category if mode == 'class' else (d.category, d.layer), []).append(k)
    keep = []
    for members in groups.values():
        boxes = np.array([dets[k].bbox for k in members], dtype=float)
        scores = np.array([dets[k].score for k in members], dtype=float)
        keep.extend(members[i] for i in _greedy_keep(boxes, scores, iouThreshold))
    return sorted(keep)


def nms_per_image(dets, iouThreshold=0.5, mode='class'):
    """
    Apply nms() to the detections of every image separately. The result keeps the input order.
    """
    dets = list(dets)
    byImage = {}
    for k, d in enumerate(dets):
        byImage.setdefault(d.imageId, []).append(k)
    keep = set()
    for members in byImage.values():
        keep.update(members[i] for i in _kept_indices([dets[k] for k in members], iouThreshold, mode))
    logger.info('%s NMS at %.2f kept %d of %d detections', mode, iouThreshold, len(keep), len(dets))
    return [dets[k] for k in sorted(keep)]


def collapse_layers(dets):
    """
    Drop the predicted layer of every detection. Nothing else changes and no suppression is redone.
    """
    return [dataclasses.replace(d, layer=None) for d in dets]
