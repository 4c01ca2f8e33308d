import itertools

import numpy as np
import pytest

from amodalforge.datastore import rle_encode, read_annotations, golden_path
from amodalforge.errors import EvaluationError
from amodalforge.evalkit import (Detection, GroundTruth, APConfig, box_iou, mask_iou_matrix, iou, greedy_match, evaluate_ap, nms,
                                 nms_per_image, collapse_layers, perturb_gt_to_detections, ground_truth_from_record, load_detections,
                                 save_detections, DEFAULT_THRESHOLDS)

from helpers import rect_mask


def gt(box, category=0, layer=0, imageId=0, canvas=None):
    mask = rle_encode(rect_mask(canvas, *[int(b) for b in box])) if canvas else None
    return GroundTruth(imageId=imageId, category=category, bbox=box, layer=layer, mask=mask)


def det(box, score, category=0, layer=None, imageId=0, canvas=None):
    mask = rle_encode(rect_mask(canvas, *[int(b) for b in box])) if canvas else None
    return Detection(imageId=imageId, category=category, score=score, bbox=box, layer=layer, mask=mask)


def reference_iou(a, b):
    ix = max(0.0, min(a[0] + a[2], b[0] + b[2]) - max(a[0], b[0]))
    iy = max(0.0, min(a[1] + a[3], b[1] + b[3]) - max(a[1], b[1]))
    return ix * iy / (a[2] * a[3] + b[2] * b[3] - ix * iy)


def reference_match(gts, dets, threshold):
    """
    Greedy matching written out with plain loops: best remaining same-category ground truth for each detection by score.
    """
    order = sorted(range(len(dets)), key=lambda d: (-dets[d].score, d))
    taken = set()
    tp, fp = [], []
    for d in order:
        best, bestIou = None, -1.0
        for g in range(len(gts)):
            if g in taken or gts[g].category != dets[d].category:
                continue
            v = reference_iou(dets[d].bbox, gts[g].bbox)
            if v > bestIou:
                best, bestIou = g, v
        if best is not None and bestIou >= threshold:
            taken.add(best)
            tp.append((d, best))
        else:
            fp.append(d)
    return tp, fp, [g for g in range(len(gts)) if g not in taken]


def reference_ap(gts, dets, thresholds=DEFAULT_THRESHOLDS):
    """
    AP from its definition: per category and threshold, rank, take precision envelopes and average them at 101 recall levels.
    """
    categories = sorted({g.category for g in gts})
    images = sorted({g.imageId for g in gts})
    values = []
    for t in thresholds:
        for c in categories:
            ranked = []
            nGt = 0
            for im in images:
                G = [g for g in gts if g.imageId == im]
                D = [d for d in dets if d.imageId == im]
                nGt += sum(g.category == c for g in G)
                tp, _, _ = reference_match(G, D, t)
                hits = {d for d, _ in tp}
                ranked.extend((D[d].score, im, d, d in hits) for d in range(len(D)) if D[d].category == c)
            ranked.sort(key=lambda r: (-r[0], r[1], r[2]))
            total = 0.0
            for level in np.linspace(0, 1, 101):
                best = 0.0
                hits = 0
                for k, r in enumerate(ranked):
                    hits += r[3]
                    if hits / nGt >= level:
                        best = max(best, max(sum(q[3] for q in ranked[:m + 1]) / (m + 1) for m in range(k, len(ranked))))
                        break
                total += best
            values.append(100 * total / 101)
    return float(np.mean(values))


class TestIou:
    @pytest.mark.cheap
    def test_box_iou(self):
        assert box_iou((0, 0, 10, 10), (0, 0, 10, 10)) == 1
        assert box_iou((0, 0, 10, 10), (20, 20, 5, 5)) == 0
        assert box_iou((0, 0, 10, 10), (5, 0, 10, 10)) == pytest.approx(1 / 3)

    @pytest.mark.cheap
    def test_mask_iou(self):
        a = rect_mask((20, 10), 0, 0, 10, 10)
        b = rect_mask((20, 10), 5, 0, 10, 10)
        assert mask_iou_matrix([a], [b])[0, 0] == pytest.approx(1 / 3)
        with pytest.raises(EvaluationError):
            mask_iou_matrix([a], [np.zeros((5, 5), dtype=bool)])
        with pytest.raises(EvaluationError):
            iou(det((0, 0, 2, 2), 1.0), gt((0, 0, 2, 2)), target='mask')

    @pytest.mark.cheap
    def test_records(self):
        with pytest.raises(EvaluationError):
            det((0, 0, 0, 5), 0.5)
        with pytest.raises(EvaluationError):
            det((0, 0, 5, 5), 1.5)


class TestMatching:
    @pytest.mark.cheap
    def test_identical(self):
        gts = [gt((0, 0, 10, 10)), gt((20, 20, 10, 10))]
        dets = [det((0, 0, 10, 10), 0.9), det((20, 20, 10, 10), 0.8)]
        result = greedy_match(gts, dets, 0.5)
        assert sorted(result.tp) == [(0, 0), (1, 1)]
        assert result.fp == [] and result.fn == []

    @pytest.mark.cheap
    def test_duplicate(self):
        gts = [gt((0, 0, 10, 10))]
        dets = [det((0, 0, 10, 10), 0.6), det((0, 0, 10, 9), 0.9)]
        result = greedy_match(gts, dets, 0.5)
        assert result.tp == [(1, 0)]
        assert result.fp == [0]

    @pytest.mark.cheap
    def test_category_and_threshold(self):
        gts = [gt((0, 0, 10, 10), category=1)]
        assert greedy_match(gts, [det((0, 0, 10, 10), 0.9, category=0)], 0.5).fn == [0]
        assert greedy_match(gts, [det((0, 0, 10, 6), 0.9, category=1)], 0.6).tp == [(0, 0)]
        assert greedy_match(gts, [det((0, 0, 10, 6), 0.9, category=1)], 0.65).fp == [0]

    @pytest.mark.cheap
    def test_against_reference(self):
        rng = np.random.default_rng(0)
        for _ in range(300):
            gts = [gt(tuple(rng.integers(0, 20, 2)) + tuple(rng.integers(2, 12, 2)), category=int(rng.integers(2))) for _ in range(rng.integers(0, 7))]
            dets = [det(tuple(rng.integers(0, 20, 2)) + tuple(rng.integers(2, 12, 2)), float(rng.integers(1, 5)) / 4, category=int(rng.integers(2)))
                    for _ in range(rng.integers(0, 7))]
            for t in (0.3, 0.5, 0.7):
                result = greedy_match(gts, dets, t)
                tp, fp, fn = reference_match(gts, dets, t)
                assert sorted(result.tp) == sorted(tp)
                assert sorted(result.fp) == sorted(fp)
                assert result.fn == fn


class TestAP:
    @pytest.mark.cheap
    def test_perfect(self):
        gts = [gt((10 * k, 5, 8, 8), category=k % 3, imageId=k // 4) for k in range(12)]
        dets = [det(g.bbox, 1.0, category=g.category, imageId=g.imageId) for g in gts]
        report = evaluate_ap(gts, dets)
        assert report.meanAP == pytest.approx(100, abs=1e-6)
        assert report.ap50 == pytest.approx(100)
        assert report.diagnostics[0.5] == {'tp': 12, 'fp': 0, 'fn': 0}

    @pytest.mark.cheap
    def test_no_detections(self):
        assert evaluate_ap([gt((0, 0, 10, 10))], []).meanAP == 0

    @pytest.mark.cheap
    def test_single_gt(self):
        report = evaluate_ap([gt((0, 0, 10, 10))], [det((0, 0, 10, 6), 0.9)])
        assert report.meanAP == 30.0
        assert report.ap50 == 100.0
        assert report.ap75 == 0.0
        assert [report.perThreshold[t] for t in DEFAULT_THRESHOLDS[:4]] == [100.0, 100.0, 100.0, 0.0]

    @pytest.mark.cheap
    def test_errors(self):
        with pytest.raises(EvaluationError, match='nothing to evaluate'):
            evaluate_ap([], [det((0, 0, 1, 1), 0.5)])
        with pytest.raises(EvaluationError):
            evaluate_ap([gt((0, 0, 10, 10))], [det((0, 0, 10, 10), 0.5, imageId=9)])
        with pytest.raises(EvaluationError):
            APConfig(iouThresholds=(0.5, 0.5))
        with pytest.raises(EvaluationError):
            APConfig(grouping='size')

    @pytest.mark.cheap
    def test_against_reference(self):
        rng = np.random.default_rng(1)
        for _ in range(500):
            gts = [gt(tuple(rng.integers(0, 12, 2)) + tuple(rng.integers(3, 10, 2)), category=int(rng.integers(2)), imageId=int(rng.integers(2)))
                   for _ in range(rng.integers(1, 6))]
            images = sorted({g.imageId for g in gts})
            dets = [det(tuple(rng.integers(0, 12, 2)) + tuple(rng.integers(3, 10, 2)), float(rng.integers(1, 9)) / 8,
                        category=int(rng.integers(2)), imageId=int(rng.choice(images))) for _ in range(rng.integers(0, 6))]
            assert evaluate_ap(gts, dets).meanAP == pytest.approx(reference_ap(gts, dets), abs=1e-9)

    @pytest.mark.cheap
    def test_monotone_score_transform(self):
        gts = [gt((12 * k, 0, 10, 10), imageId=k % 3) for k in range(9)]
        dets = perturb_gt_to_detections(gts, jitter=0.15, scoreModel='uniform', duplicateRate=0.3, seed=4)
        squashed = [Detection(d.imageId, d.category, d.score ** 3, d.bbox) for d in dets]
        assert evaluate_ap(gts, dets).meanAP == pytest.approx(evaluate_ap(gts, squashed).meanAP, abs=1e-12)

    @pytest.mark.cheap
    def test_threshold_monotone(self):
        gts = [gt((20 * k, 0, 10, 10)) for k in range(8)]
        dets = perturb_gt_to_detections(gts, jitter=0.2, seed=2)
        report = evaluate_ap(gts, dets)
        values = [report.perThreshold[t] for t in DEFAULT_THRESHOLDS]
        assert all(a >= b for a, b in zip(values, values[1:]))

    @pytest.mark.cheap
    def test_mask_equals_box(self):
        canvas = (60, 40)
        gts = [gt((2, 2, 10, 12), canvas=canvas), gt((8, 6, 14, 10), canvas=canvas), gt((30, 20, 20, 15), category=1, canvas=canvas)]
        dets = [det((2, 3, 10, 12), 0.9, canvas=canvas), det((9, 6, 12, 10), 0.7, canvas=canvas),
                det((31, 20, 20, 15), 0.8, category=1, canvas=canvas), det((0, 0, 5, 5), 0.95, canvas=canvas)]
        box = evaluate_ap(gts, dets, APConfig(target='box'))
        mask = evaluate_ap(gts, dets, APConfig(target='mask'))
        assert mask.meanAP == pytest.approx(box.meanAP, abs=1e-9)

    @pytest.mark.cheap
    def test_layer_grouping(self):
        gts = [gt((0, 0, 10, 10), layer=0), gt((5, 5, 10, 10), layer=1), gt((40, 0, 10, 10), layer=0)]
        dets = [det((0, 0, 10, 10), 0.9, layer=0), det((5, 5, 10, 10), 0.8, layer=0), det((40, 0, 10, 10), 0.7, layer=0)]
        report = evaluate_ap(gts, dets, APConfig(grouping='layer'))
        # The detection with the wrong layer is a false positive in layer 0 and layer 1 gets nothing
        assert report.perGroup[1] == 0
        assert 0 < report.perGroup[0] < 100
        table = report.to_table()
        assert list(table.columns) == ['AP', 'AP50', 'AP75', 'L0', 'L1', 'L2', 'L3', 'L4']
        assert np.isnan(table['L3'].iloc[0])
        with pytest.raises(EvaluationError):
            evaluate_ap(gts, [det((0, 0, 10, 10), 0.9)], APConfig(grouping='layer'))

    @pytest.mark.cheap
    def test_max_dets(self):
        gts = [gt((0, 0, 10, 10)), gt((20, 0, 10, 10))]
        dets = [det((0, 0, 10, 10), 0.9), det((20, 0, 10, 10), 0.8)]
        # Recall stops at one half: 51 of the 101 recall levels are reached
        assert evaluate_ap(gts, dets, APConfig(maxDets=1)).meanAP == pytest.approx(100 * 51 / 101)

    @pytest.mark.cheap
    def test_threads(self):
        gts = [gt((12 * (k % 5), 0, 10, 10), imageId=k // 5) for k in range(20)]
        dets = perturb_gt_to_detections(gts, jitter=0.1, duplicateRate=0.2, dropRate=0.1, seed=0)
        assert evaluate_ap(gts, dets, workers=1).to_dict() == evaluate_ap(gts, dets, workers=4).to_dict()

    @pytest.mark.cheap
    def test_record(self):
        record = read_annotations(golden_path())
        gts = ground_truth_from_record(record)
        assert [g.bbox for g in gts] == [(0, 0, 4, 3), (2, 1, 4, 3)]
        assert [g.layer for g in gts] == [1, 0]
        dets = perturb_gt_to_detections(gts)
        assert evaluate_ap(record, dets, APConfig(target='mask')).meanAP == pytest.approx(100)


def reference_nms(dets, threshold):
    """
    Textbook greedy suppression on one group.
    """
    remaining = sorted(range(len(dets)), key=lambda k: (-dets[k].score, k))
    keep = []
    while remaining:
        best = remaining.pop(0)
        keep.append(best)
        remaining = [k for k in remaining if reference_iou(dets[best].bbox, dets[k].bbox) <= threshold]
    return sorted(keep)


class TestNms:
    @pytest.mark.cheap
    def test_pair(self):
        # IoU 0.9, same category, different layers
        dets = [det((0, 0, 10, 10), 0.9, layer=0), det((0, 0, 10, 9), 0.8, layer=1)]
        assert nms(dets, 0.5, 'class') == [dets[0]]
        assert nms(dets, 0.5, 'class-layer') == dets
        assert nms([dets[0], det((0, 0, 10, 9), 0.8, category=1, layer=1)], 0.5, 'class') == [dets[0], det((0, 0, 10, 9), 0.8, category=1, layer=1)]

    @pytest.mark.cheap
    def test_errors(self):
        with pytest.raises(EvaluationError):
            nms([det((0, 0, 1, 1), 0.5)], mode='class-layer')
        with pytest.raises(EvaluationError):
            nms([det((0, 0, 1, 1), 0.5)], mode='layer')

    @pytest.mark.cheap
    def test_against_reference(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            dets = [det(tuple(rng.integers(0, 15, 2)) + tuple(rng.integers(3, 10, 2)), float(rng.integers(1, 9)) / 8) for _ in range(rng.integers(1, 12))]
            for t in (0.3, 0.5, 0.7):
                assert nms(dets, t) == [dets[k] for k in reference_nms(dets, t)]

    @pytest.mark.cheap
    def test_class_layer_keeps_more_on_pairs(self):
        # Crafted same-category pairs: class-layer keeps a superset of class
        pairs = [(det((0, 0, 10, 10), 0.9, layer=0), det((1, 0, 10, 10), 0.8, layer=1)),
                 (det((0, 0, 10, 10), 0.6, layer=2), det((0, 1, 10, 10), 0.7, layer=0)),
                 (det((0, 0, 10, 10), 0.5, layer=1), det((30, 0, 10, 10), 0.4, layer=1))]
        for pair in pairs:
            assert set(nms(pair, 0.5, 'class')) <= set(nms(pair, 0.5, 'class-layer'))

    @pytest.mark.cheap
    def test_per_image(self):
        dets = [det((0, 0, 10, 10), 0.9, imageId=1), det((0, 0, 10, 10), 0.8, imageId=0), det((0, 0, 10, 10), 0.7, imageId=1)]
        assert nms_per_image(dets, 0.5) == dets[:2]

    @pytest.mark.cheap
    def test_collapse(self):
        dets = [det((0, 0, 10, 10), 0.9, layer=2), det((5, 5, 10, 10), 0.3, layer=0)]
        collapsed = collapse_layers(dets)
        assert [d.layer for d in collapsed] == [None, None]
        assert [d.bbox for d in collapsed] == [d.bbox for d in dets]
        assert collapse_layers(collapsed) == collapsed

    def test_layer_priors(self):
        # Heavily overlapping same-category pairs on different layers, as in intra-class occlusion
        gts, dets = [], []
        for image in range(100):
            for layer, x in ((0, 10), (1, 14)):
                gts.append(gt((x, 10, 40, 40), layer=layer, imageId=image))
                dets.append(det((x, 10, 40, 40), 0.9 - 0.1 * layer, layer=layer, imageId=image))
        classNms = nms_per_image(dets, 0.5, 'class')
        layerNms = nms_per_image(dets, 0.5, 'class-layer')
        assert len(dets) - len(classNms) >= 0.3 * len(dets)
        assert len(layerNms) == len(dets)
        assert evaluate_ap(gts, collapse_layers(layerNms)).meanAP > evaluate_ap(gts, classNms).meanAP


class TestPerturb:
    @pytest.fixture
    def gts(self):
        return [gt((30 * (k % 6), 30 * (k // 6), 12, 12), category=k % 2, layer=k % 3, imageId=k // 12) for k in range(36)]

    @pytest.mark.cheap
    def test_identity(self, gts):
        dets = perturb_gt_to_detections(gts)
        assert [(d.bbox, d.score, d.layer, d.category) for d in dets] == [(g.bbox, 1.0, g.layer, g.category) for g in gts]
        assert evaluate_ap(gts, dets).meanAP == pytest.approx(100, abs=1e-6)
        assert all(d.layer is None for d in perturb_gt_to_detections(gts, withLayers=False))

    @pytest.mark.cheap
    def test_deterministic(self, gts):
        a = perturb_gt_to_detections(gts, jitter=0.1, dropRate=0.2, duplicateRate=0.2, seed=9)
        b = perturb_gt_to_detections(gts, jitter=0.1, dropRate=0.2, duplicateRate=0.2, seed=9)
        assert a == b

    @pytest.mark.cheap
    def test_drop(self):
        gts = [gt((20 * (k % 10), 20 * (k // 10), 10, 10)) for k in range(200)]
        dets = perturb_gt_to_detections(gts, dropRate=0.5, seed=0)
        assert 60 < len(dets) < 140
        assert evaluate_ap(gts, dets).meanAP < 60

    @pytest.mark.cheap
    def test_jitter_monotone(self, gts):
        small = evaluate_ap(gts, perturb_gt_to_detections(gts, jitter=0.02, scoreModel='constant', seed=1)).meanAP
        large = evaluate_ap(gts, perturb_gt_to_detections(gts, jitter=0.3, scoreModel='constant', seed=1)).meanAP
        assert small >= large

    @pytest.mark.cheap
    def test_duplicates(self, gts):
        dets = perturb_gt_to_detections(gts, duplicateRate=1.0, scoreModel='constant', seed=0)
        assert len(dets) == 2 * len(gts)
        assert [d.score for d in dets[:2]] == [1.0, 0.5]

    @pytest.mark.cheap
    def test_masks_follow_boxes(self):
        canvas = (40, 40)
        g = gt((10, 10, 8, 8), canvas=canvas)
        (d,) = perturb_gt_to_detections([g], jitter=0.3, seed=5)
        shift = (int(round(d.bbox[0] - 10)), int(round(d.bbox[1] - 10)))
        moved = np.roll(np.roll(rect_mask(canvas, 10, 10, 8, 8), shift[1], axis=0), shift[0], axis=1)
        assert np.array_equal(d.mask.decode(), moved)

    @pytest.mark.cheap
    def test_bad_arguments(self, gts):
        with pytest.raises(EvaluationError):
            perturb_gt_to_detections(gts, jitter=-1)
        with pytest.raises(EvaluationError):
            perturb_gt_to_detections(gts, scoreModel='oracle')

    @pytest.mark.cheap
    def test_files(self, tmp_path, gts):
        dets = perturb_gt_to_detections(gts, jitter=0.1, seed=3)
        save_detections(dets, tmp_path / 'dets.json')
        assert load_detections(tmp_path / 'dets.json') == dets
        (tmp_path / 'bad.json').write_text('{"image_id": 0}')
        with pytest.raises(EvaluationError):
            load_detections(tmp_path / 'bad.json')
        (tmp_path / 'bad.json').write_text('[{"image_id": 0, "score": 0.5}]')
        with pytest.raises(EvaluationError):
            load_detections(tmp_path / 'bad.json')
