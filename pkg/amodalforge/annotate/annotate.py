"""
Point annotations and dataset statistics.
"""
import logging
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from amodalforge.errors import AnnotationError
from amodalforge.orders import scene_orders, layer_histogram
from amodalforge.utils import make_rng, mix_seed

logger = logging.getLogger(__name__)

OBJECT = 1
BACKGROUND = 0

# Point coordinates are floored to this many decimals before labelling, so stored points relabel identically
POINT_DECIMALS = 4


@dataclass(frozen=True)
class PointAnnotation:
    """
    Labelled points of one instance. points is a tuple of (x, y, label) with label OBJECT (1) inside the amodal mask and BACKGROUND (0) outside it.
    """
    instance: int
    points: tuple
    seed: int

    def __len__(self):
        return len(self.points)

    def coordinates(self):
        """
        Returns an (n, 2) array of (x, y).
        """
        return np.array([(x, y) for x, y, _ in self.points], dtype=float).reshape(-1, 2)

    def labels(self):
        return np.array([l for _, _, l in self.points], dtype=int)

    def to_list(self):
        return [[x, y, l] for x, y, l in self.points]


def _floor_decimals(v):
    scale = 10 ** POINT_DECIMALS
    return np.floor(v * scale) / scale


def label_points(amodal, xs, ys):
    """
    Label points by the amodal mask pixel that contains them.
    """
    return np.where(amodal[np.floor(ys).astype(int), np.floor(xs).astype(int)], OBJECT, BACKGROUND)


def sample_points(maskSet, n=10, seed=0, instance=0):
    """
    Sample labelled points in the amodal box of an instance.

    Points are uniform over the box [x, x + w) x [y, y + h). A point is labelled as object when the pixel containing it is in the amodal mask, so occluded pixels count as object too.

    Parameters
    ----------
    maskSet : MaskSet
        Masks of the instance.
    n : int, optional
        Number of points. The default is 10.
    seed : int, optional
        Seed of the draw. The default is 0.
    instance : int, optional
        Stack index of the instance, stored in the annotation.

    Returns
    -------
    ann : PointAnnotation
    """
    if n < 1:
        raise AnnotationError(f'Number of points must be at least 1, got {n}')
    x, y, w, h = maskSet.amodalBbox
    rng = make_rng(seed)
    xs = _floor_decimals(x + w * rng.random(n))
    ys = _floor_decimals(y + h * rng.random(n))
    labels = label_points(maskSet.amodal, xs, ys)
    return PointAnnotation(instance=int(instance), points=tuple((float(a), float(b), int(l)) for a, b, l in zip(xs, ys, labels)), seed=int(seed))


def subsample_points(ann, k=5, seed=0):
    """
    Uniform subset of k points without replacement, kept in their original order.

    Parameters
    ----------
    ann : PointAnnotation
        The annotation to sub-sample.
    k : int, optional
        Number of points to keep. The default is 5.
    seed : int, optional
        Seed of the draw. The default is 0.

    Returns
    -------
    sub : PointAnnotation
    """
    if not 0 <= k <= len(ann.points):
        raise AnnotationError(f'Cannot sub-sample {k} points from an annotation with {len(ann.points)}')
    chosen = np.sort(make_rng(seed).choice(len(ann.points), size=k, replace=False))
    return PointAnnotation(instance=ann.instance, points=tuple(ann.points[i] for i in chosen), seed=ann.seed)


@dataclass(frozen=True)
class SceneAnnotation:
    """
    Orders and point annotations of a composed scene.
    """
    graph: object
    layers: object
    points: tuple


def annotate_scene(scene, nPoints=10, seed=None):
    """
    Compute the occlusion graph, layers and point annotations of a scene. Instance k uses point seed mix_seed(seed, k), with seed defaulting to the scene seed.
    """
    seed = scene.spec.seed if seed is None else seed
    graph, layers = scene_orders([m.amodal for m in scene.masks])
    points = tuple(sample_points(m, nPoints, mix_seed(seed, k), instance=k) for k, m in enumerate(scene.masks))
    return SceneAnnotation(graph=graph, layers=layers, points=points)


@dataclass
class DatasetStats:
    """
    Dataset statistics.

    Attributes
    ----------
    imageCount, instanceCount, occludedCount : int
        Number of images, of instances and of instances with at least one invisible pixel.
    categoryCounts : dict
        Category id -> number of instances.
    categoryRatios : dict
        Category id -> fraction of all instances.
    occlusionRate : float
        Mean of invisible/amodal area over all instances, as a percentage.
    occludedOcclusionRate : float
        The same mean over occluded instances only.
    layerHistogram : tuple
        Number of instances at each layer.
    categoryNames : tuple
        Category names, by id.
    """
    imageCount: int
    instanceCount: int
    occludedCount: int
    categoryCounts: dict
    categoryRatios: dict
    occlusionRate: float
    occludedOcclusionRate: float
    layerHistogram: tuple
    categoryNames: tuple = ()

    def occludedFraction(self):
        return self.occludedCount / self.instanceCount if self.instanceCount else 0.0

    def to_dict(self):
        return {'images': self.imageCount, 'instances': self.instanceCount, 'occluded_instances': self.occludedCount,
                'occluded_fraction': self.occludedFraction(), 'avg_occlusion_rate': self.occlusionRate,
                'avg_occlusion_rate_occluded': self.occludedOcclusionRate,
                'layer_histogram': list(self.layerHistogram),
                'categories': [{'id': c, 'name': self._name(c), 'count': self.categoryCounts[c], 'ratio': self.categoryRatios[c]}
                               for c in sorted(self.categoryCounts)]}

    def _name(self, c):
        return self.categoryNames[c] if c < len(self.categoryNames) else str(c)

    def to_table(self):
        """
        Summary table with one row: images, instances, occluded instances and both average occlusion rates.
        """
        return pd.DataFrame({'Images': [self.imageCount], 'Instances': [self.instanceCount],
                             'Occluded Inst.': [self.occludedCount],
                             'Occluded %': [round(100 * self.occludedFraction(), 1)],
                             'Avg. Occ. Rate %': [round(self.occlusionRate, 1)],
                             'Avg. Occ. Rate (occluded) %': [round(self.occludedOcclusionRate, 1)]})

    def layer_table(self):
        """
        Instances per layer, with columns L0, L1, ...
        """
        return pd.DataFrame([list(self.layerHistogram)], columns=[f'L{k}' for k in range(len(self.layerHistogram))], index=['Instances'])


@dataclass
class StatsAccumulator:
    """
    Fold of dataset statistics. Instances can be added one scene at a time and accumulators merged, and finalize() gives the same result whatever the order instances were added in.
    """
    imageCount: int = 0
    occludedCount: int = 0
    rates: list = field(default_factory=list)
    categoryCounts: Counter = field(default_factory=Counter)
    layerCounts: Counter = field(default_factory=Counter)

    def add_instance(self, category, area, invisibleArea, layer):
        self.rates.append(invisibleArea / area if area > 0 else 0.0)
        if invisibleArea > 0:
            self.occludedCount += 1
        self.categoryCounts[int(category)] += 1
        self.layerCounts[int(layer)] += 1

    def add_scene(self, scene, annotation=None):
        """
        Add a ComposedScene. The layers come from annotation when given, otherwise they are computed.
        """
        layers = annotation.layers if annotation is not None else scene_orders([m.amodal for m in scene.masks])[1]
        self.imageCount += 1
        for m, c, l in zip(scene.masks, scene.categories(), layers.layer):
            self.add_instance(c, m.area, m.invisibleArea, l)

    def add_record_image(self, annotations):
        """
        Add one image from a list of stored annotation dictionaries.
        """
        self.imageCount += 1
        for a in annotations:
            self.add_instance(a['category_id'], a['area'], a['invisible_area'], a['layer'])

    def merge(self, other):
        """
        Returns a new accumulator holding both folds.
        """
        return StatsAccumulator(imageCount=self.imageCount + other.imageCount, occludedCount=self.occludedCount + other.occludedCount,
                                rates=self.rates + other.rates, categoryCounts=self.categoryCounts + other.categoryCounts,
                                layerCounts=self.layerCounts + other.layerCounts)

    def finalize(self, categoryNames=()):
        """
        Returns the DatasetStats of everything added so far.
        """
        n = len(self.rates)
        occludedRates = [r for r in self.rates if r > 0]
        # fsum is exactly rounded, so the result does not depend on the order of the rates
        rate = 100 * math.fsum(self.rates) / n if n else 0.0
        occludedRate = 100 * math.fsum(occludedRates) / len(occludedRates) if occludedRates else 0.0
        categories = sorted(set(self.categoryCounts) | set(range(len(categoryNames))))
        counts = {c: self.categoryCounts.get(c, 0) for c in categories}
        ratios = {c: counts[c] / n if n else 0.0 for c in categories}
        hist = layer_histogram([[l] * k for l, k in sorted(self.layerCounts.items())])
        return DatasetStats(imageCount=self.imageCount, instanceCount=n, occludedCount=self.occludedCount,
                            categoryCounts=counts, categoryRatios=ratios, occlusionRate=rate, occludedOcclusionRate=occludedRate,
                            layerHistogram=tuple(int(h) for h in hist), categoryNames=tuple(categoryNames))


def compute_stats(record):
    """
    Statistics of a stored dataset.

    Parameters
    ----------
    record : DatasetRecord
        A dataset read by read_dataset() or read_annotations().

    Returns
    -------
    stats : DatasetStats
    """
    acc = StatsAccumulator()
    byImage = record.annotations_by_image()
    for image in record.images:
        acc.add_record_image(byImage.get(image['id'], []))
    return acc.finalize(record.category_names())


def compute_stats_from_scenes(scenes, categoryNames=()):
    """
    Statistics of a stream of scenes, or of (scene, SceneAnnotation) pairs.
    """
    acc = StatsAccumulator()
    for item in scenes:
        scene, annotation = item if isinstance(item, tuple) else (item, None)
        acc.add_scene(scene, annotation)
    return acc.finalize(categoryNames)


def category_table(statsBySplit, categoryNames=None):
    """
    Per-category instance counts of each split and the ratio of each category over all splits.

    Parameters
    ----------
    statsBySplit : dict
        Split name -> DatasetStats.
    categoryNames : list, optional
        Category names. The default takes them from the first DatasetStats.

    Returns
    -------
    table : pandas DataFrame
        One row per category with a 'Num. in <Split>' column per split and a 'Ratio' column. Ratios sum to 1.
    """
    if len(statsBySplit) == 0:
        raise ValueError('category_table needs at least one split')
    first = next(iter(statsBySplit.values()))
    names = list(categoryNames if categoryNames is not None else first.categoryNames)
    categories = sorted(set().union(*(s.categoryCounts for s in statsBySplit.values())) | set(range(len(names))))
    columns = {f'Num. in {split.capitalize()}': [s.categoryCounts.get(c, 0) for c in categories] for split, s in statsBySplit.items()}
    table = pd.DataFrame(columns, index=[names[c] if c < len(names) else str(c) for c in categories])
    total = table.sum(axis=1)
    table['Ratio'] = total / total.sum() if total.sum() > 0 else 0.0
    table.index.name = 'Category'
    return table
