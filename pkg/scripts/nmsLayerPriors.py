"""
Compare class-wise NMS with NMS on (category, layer) pairs on scenes of two heavily overlapping instances of one category. The detections are the ground truth itself, so every box NMS removes is a true positive lost.
"""
import os

import numpy as np
import pandas as pd
import matplotlib.pyplot as plt

import amodalforge
from amodalforge.compositor import derive_masks, bbox_of
from amodalforge.evalkit import GroundTruth, box_iou, evaluate_ap, nms_per_image, collapse_layers, perturb_gt_to_detections
from amodalforge.orders import scene_orders
from amodalforge.utils import make_rng

nScenes = 100
canvas = (128, 128)
rng = make_rng(0)

gts = []
for scene in range(nScenes):
    # Two equal boxes shifted by 1 pixel up to 8% of their size each way, giving IoU above 0.7
    w, h = (int(v) for v in rng.integers(30, 61, size=2))
    dx, dy = int(rng.integers(1, int(0.08 * w) + 1)), int(rng.integers(1, int(0.08 * h) + 1))
    x, y = int(rng.integers(0, canvas[0] - w - dx + 1)), int(rng.integers(0, canvas[1] - h - dy + 1))
    masks = []
    for x0, y0 in ((x, y), (x + dx, y + dy)):
        m = np.zeros((canvas[1], canvas[0]), dtype=bool)
        m[y0:y0 + h, x0:x0 + w] = True
        masks.append(m)
    _, layers = scene_orders(masks)
    for k, m in enumerate(derive_masks(masks)):
        gts.append(GroundTruth(imageId=scene, category=0, bbox=bbox_of(m.amodal), layer=layers[k]))

pairIou = [box_iou(gts[2 * s].bbox, gts[2 * s + 1].bbox) for s in range(nScenes)]
print(f'Pairwise IoU: min {min(pairIou):.3f}, mean {np.mean(pairIou):.3f}')

dets = perturb_gt_to_detections(gts, scoreModel='uniform', seed=1)
results = {}
for name, mode in (('Class NMS', 'class'), ('Class-layer NMS + collapse', 'class-layer')):
    kept = nms_per_image(dets, 0.5, mode)
    report = evaluate_ap(gts, collapse_layers(kept))
    results[name] = {'Kept': len(kept), 'Removed %': 100 * (1 - len(kept) / len(dets)), 'AP': report.meanAP, 'AP50': report.ap50}
table = pd.DataFrame(results).T.round(3)
print(table.to_string())

plt.figure(figsize=(5, 3.5))
plt.bar(table.index, table['AP'], color=['C1', 'C0'])
plt.ylabel('AP')
plt.title('Intra-class pairs: NMS with and without layers')
plt.tight_layout()
figures = os.path.join(amodalforge.ROOT_DIR, '..', 'scripts', 'figures')
os.makedirs(figures, exist_ok=True)
plt.savefig(os.path.join(figures, 'nmsLayerPriors.png'), dpi=150)
plt.show()
