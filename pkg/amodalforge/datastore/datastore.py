"""
Reading and writing datasets. A dataset directory holds, for each split, the scene images under images/<split>/, appearance rasters under appearances/<split>/ and one COCO style annotations_<split>.json. manifest.json lists the sha256 of every file.
"""
import hashlib
import io
import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

import amodalforge
from amodalforge.compositor import MaskSet, bbox_of
from amodalforge.errors import CorruptRLEError, DatasetValidationError, SchemaVersionError, DatastoreError
from amodalforge.orders import OcclusionGraph, assign_layers
from amodalforge.annotate import PointAnnotation, annotate_scene, label_points
from amodalforge.datastore.rle import RleMask, rle_encode, rle_decode
from amodalforge.utils import ordered_map

logger = logging.getLogger(__name__)

MANIFEST_FILE = 'manifest.json'


def annotations_file(split):
    return f'annotations_{split}.json'


def layer_class_id(category, layer, nCategories):
    """
    Class id of a (category, layer) pair, for models that treat each pair as its own class.
    """
    return nCategories * layer + category


@dataclass
class DatasetRecord:
    """
    The contents of one split's annotations file.

    Attributes
    ----------
    header : dict
        Schema version, split, generation config, seed and the layer class id rule.
    categories : list
        {'id', 'name'} dictionaries.
    images : list
        One dictionary per image: id, file name, size, scene seed, background and placements.
    annotations : list
        One dictionary per instance: ids, category, stack index, layer, amodal box, the three RLE masks, areas, points and appearance file.
    relations : list
        One {'image_id', 'edges'} dictionary per image, edges as [occluder, occludee, kind] stack indices.
    """
    header: dict
    categories: list
    images: list
    annotations: list
    relations: list

    @property
    def split(self):
        return self.header.get('split')

    def to_json(self):
        return {'info': self.header, 'categories': self.categories, 'images': self.images,
                'annotations': self.annotations, 'relations': self.relations}

    @classmethod
    def from_json(cls, d):
        missing = [k for k in ('info', 'categories', 'images', 'annotations', 'relations') if k not in d]
        if missing:
            raise DatasetValidationError([('file', f'missing top level key(s) {", ".join(missing)}')])
        return cls(header=d['info'], categories=d['categories'], images=d['images'], annotations=d['annotations'], relations=d['relations'])

    def category_names(self):
        return tuple(c['name'] for c in sorted(self.categories, key=lambda c: c['id']))

    def image_ids(self):
        return [im['id'] for im in self.images]

    def image(self, imageId):
        """
        Returns the image dictionary with the given id. Raises KeyError listing the valid ids if it does not exist.
        """
        for im in self.images:
            if im['id'] == imageId:
                return im
        ids = self.image_ids()
        valid = f'{min(ids)}..{max(ids)}' if ids else 'none'
        raise KeyError(f'Unknown image id {imageId}, valid ids are {valid}')

    def annotations_by_image(self):
        """
        Returns a dictionary image id -> annotations of the image in stack order.
        """
        byImage = {}
        for a in self.annotations:
            byImage.setdefault(a['image_id'], []).append(a)
        for anns in byImage.values():
            anns.sort(key=lambda a: a['stack_index'])
        return byImage

    def mask_sets(self, imageId):
        """
        Decoded MaskSets of an image, in stack order.
        """
        return [_mask_set(a) for a in self.annotations_by_image().get(imageId, [])]

    def graph(self, imageId):
        n = len(self.annotations_by_image().get(imageId, []))
        for r in self.relations:
            if r['image_id'] == imageId:
                return OcclusionGraph.from_triples(n, r['edges'])
        return OcclusionGraph(n, ())

    def point_annotations(self, imageId):
        return [PointAnnotation(instance=a['stack_index'], points=tuple((float(x), float(y), int(l)) for x, y, l in a['points']), seed=a['point_seed'])
                for a in self.annotations_by_image().get(imageId, [])]

    def sprite_ids(self):
        return {a['sprite_id'] for a in self.annotations}


def _mask_set(annotation):
    return MaskSet(amodal=rle_decode(annotation['segmentation']), visible=rle_decode(annotation['visible_segmentation']),
                   invisible=rle_decode(annotation['invisible_segmentation']), amodalBbox=tuple(annotation['bbox']))


def _png_bytes(pixels):
    """
    Lossless PNG encoding of a float raster in [0, 1], RGB or RGBA.
    """
    array = np.round(np.clip(pixels, 0, 1) * 255).astype(np.uint8)
    buffer = io.BytesIO()
    Image.fromarray(array).save(buffer, format='PNG')
    return buffer.getvalue()


def _sha256(data):
    return hashlib.sha256(data).hexdigest()


def _write_bytes(path, data):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'wb') as f:
        f.write(data)


def _write_json_atomic(path, obj, **kwargs):
    """
    Write JSON to a temporary file and move it in place, so a failed write never leaves a truncated file. Returns the bytes written.
    """
    data = json.dumps(obj, sort_keys=True, **kwargs).encode('utf-8')
    tmp = path.with_name(path.name + '.tmp')
    _write_bytes(tmp, data)
    os.replace(tmp, path)
    return data


def scene_entries(scene, annotation, split, nCategories, writeAppearances=True):
    """
    Image, annotation and relation dictionaries of a scene. Annotation ids are left as None for the caller to assign.
    """
    sceneId = int(scene.sceneId)
    height, width = scene.image.shape[:2]
    image = {'id': sceneId, 'file_name': f'images/{split}/{sceneId:06d}.png', 'width': int(width), 'height': int(height),
             'scene_seed': int(scene.spec.seed), 'background_id': scene.spec.backgroundId,
             'background_file': f'appearances/{split}/{sceneId:06d}_bg.png' if writeAppearances else None,
             'placements': [p.to_dict() for p in scene.spec.placements]}
    anns = []
    for k, (m, p, pts) in enumerate(zip(scene.masks, scene.spec.placements, annotation.points)):
        layer = int(annotation.layers[k])
        anns.append({'id': None, 'image_id': sceneId, 'category_id': int(p.category), 'sprite_id': p.spriteId,
                     'stack_index': k, 'layer': layer, 'layer_class_id': layer_class_id(int(p.category), layer, nCategories),
                     'bbox': [int(b) for b in m.amodalBbox], 'area': m.area, 'visible_area': m.visibleArea,
                     'invisible_area': m.invisibleArea, 'iscrowd': 0,
                     'segmentation': rle_encode(m.amodal).to_dict(), 'visible_segmentation': rle_encode(m.visible).to_dict(),
                     'invisible_segmentation': rle_encode(m.invisible).to_dict(),
                     'points': pts.to_list(), 'point_seed': int(pts.seed),
                     'appearance': f'appearances/{split}/{sceneId:06d}_{k:02d}.png' if writeAppearances else None})
    relation = {'image_id': sceneId, 'edges': annotation.graph.to_triples()}
    return image, anns, relation


def write_dataset(scenes, outputDir, split='train', categories=(), config=None, annotations=None, nPoints=10, workers=1,
                  writeAppearances=True, progress=False):
    """
    Write a stream of scenes as one split of a dataset.

    Images are written first, then the annotations file, so the JSON never refers to an image that was not written. Writing the same scenes twice gives byte-identical files.

    Parameters
    ----------
    scenes : iterable
        ComposedScene objects, with unique scene ids.
    outputDir : string or Path
        Dataset directory. Created if needed. Other splits already in it are kept.
    split : string, optional
        Name of the split. The default is 'train'.
    categories : list, optional
        Category names, by id.
    config : GenerationConfig, optional
        Configuration recorded in the header.
    annotations : iterable, optional
        SceneAnnotation objects matching scenes. The default computes them with annotate_scene().
    nPoints : int, optional
        Points per instance when annotations are computed. The default is 10.
    workers : int, optional
        Threads used to encode and write images. The default is 1.
    writeAppearances : bool, optional
        Also write the clean background and the full appearance of every instance. The default is True.
    progress : bool, optional
        Show a progress bar. The default is False.

    Returns
    -------
    manifest : dict
        The updated manifest.
    """
    out = Path(outputDir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise DatastoreError(f'Cannot create dataset directory {out}: {e}') from e
    nCategories = len(categories)
    pairs = zip(scenes, annotations) if annotations is not None else ((s, None) for s in scenes)

    def save(pair):
        scene, annotation = pair
        if annotation is None:
            annotation = annotate_scene(scene, nPoints)
        image, anns, relation = scene_entries(scene, annotation, split, nCategories, writeAppearances)
        files = {image['file_name']: _png_bytes(scene.image)}
        if writeAppearances:
            files[image['background_file']] = _png_bytes(scene.background)
            for a, appearance in zip(anns, scene.appearances):
                files[a['appearance']] = _png_bytes(appearance)
        hashes = {}
        try:
            for name, data in files.items():
                _write_bytes(out / name, data)
                hashes[name] = _sha256(data)
        except OSError as e:
            raise DatastoreError(f'Failed to write scene {scene.sceneId}: {e}') from e
        return image, anns, relation, hashes

    images, allAnns, relations, hashes = [], [], [], {}
    seen = set()
    for image, anns, relation, fileHashes in ordered_map(save, pairs, workers=workers, progress=progress, desc=f'Writing {split}'):
        if image['id'] in seen:
            raise DatastoreError(f'Duplicate scene id {image["id"]} in split {split}')
        seen.add(image['id'])
        for a in anns:
            a['id'] = len(allAnns) + 1
            allAnns.append(a)
        images.append(image)
        relations.append(relation)
        hashes.update(fileHashes)

    pointCounts = {len(a['points']) for a in allAnns}
    if len(pointCounts) > 1:
        raise DatastoreError(f'Instances of split {split} have different numbers of points {sorted(pointCounts)}')
    header = {'version': amodalforge.SCHEMA_VERSION, 'split': split,
              'config': config.to_dict() if config is not None else {},
              'seed': config.seed if config is not None else None,
              'points_per_instance': pointCounts.pop() if pointCounts else nPoints,
              'layer_class': {'rule': 'n_categories * layer + category_id', 'n_categories': nCategories}}
    record = DatasetRecord(header=header, categories=[{'id': i, 'name': n} for i, n in enumerate(categories)],
                           images=images, annotations=allAnns, relations=relations)
    name = annotations_file(split)
    try:
        data = _write_json_atomic(out / name, record.to_json(), separators=(',', ':'))
        hashes[name] = _sha256(data)
        manifest = _load_manifest(out) if (out / MANIFEST_FILE).exists() else {'version': amodalforge.SCHEMA_VERSION, 'files': {}, 'splits': {}}
        manifest['files'] = {f: h for f, h in manifest['files'].items() if not _belongs_to_split(f, split)}
        manifest['files'].update(hashes)
        manifest['splits'][split] = {'annotations': name, 'images': len(images), 'instances': len(allAnns)}
        _write_json_atomic(out / MANIFEST_FILE, manifest, indent=2)
    except OSError as e:
        raise DatastoreError(f'Failed to write annotations of split {split}: {e}') from e
    logger.info('Wrote %d images and %d instances to %s (split %s)', len(images), len(allAnns), out, split)
    return manifest


def _belongs_to_split(filename, split):
    return filename == annotations_file(split) or filename.startswith((f'images/{split}/', f'appearances/{split}/'))


def _load_json(path):
    """
    Read a JSON object from a dataset file. Truncated or non-JSON files raise DatasetValidationError.
    """
    with open(path) as f:
        try:
            d = json.load(f)
        except (json.JSONDecodeError, UnicodeDecodeError) as e:
            raise DatasetValidationError([('file', f'{path} is not valid JSON: {e}')]) from e
    if not isinstance(d, dict):
        raise DatasetValidationError([('file', f'{path} must contain a JSON object')])
    return d


def _load_manifest(directory):
    path = Path(directory) / MANIFEST_FILE
    if not path.exists():
        raise DatastoreError(f'{directory} is not a dataset directory (no {MANIFEST_FILE})')
    manifest = _load_json(path)
    if manifest.get('version') != amodalforge.SCHEMA_VERSION:
        raise SchemaVersionError(manifest.get('version'), amodalforge.SCHEMA_VERSION)
    if not isinstance(manifest.get('files'), dict) or not isinstance(manifest.get('splits'), dict):
        raise DatasetValidationError([('file', f'{path} has no files or splits table')])
    return manifest


def dataset_splits(directory):
    """
    Names of the splits listed in the manifest of a dataset directory, sorted.
    """
    return sorted(_load_manifest(directory)['splits'])


def verify_manifest(directory):
    """
    Check every file listed in the manifest against its hash.

    Returns
    -------
    bad : list
        Sorted relative paths of files that are missing or whose sha256 differs.
    """
    directory = Path(directory)
    manifest = _load_manifest(directory)
    bad = []
    for name, digest in sorted(manifest['files'].items()):
        path = directory / name
        if not path.is_file() or _sha256(path.read_bytes()) != digest:
            bad.append(name)
    if bad:
        logger.warning('%d file(s) in %s do not match the manifest', len(bad), directory)
    return bad


def _check_masks(a, image, problems, nPoints=None):
    """
    Validate the masks, areas, box and points of one annotation. The point count is only checked when nPoints is given.
    """
    aid = a['id']
    try:
        masks = _mask_set(a)
    except CorruptRLEError as e:
        problems.append((aid, str(e)))
        return
    size = (image['height'], image['width'])
    if any(m.shape != size for m in (masks.amodal, masks.visible, masks.invisible)):
        problems.append((aid, f'mask size does not match image size {size}'))
        return
    if np.any(masks.visible & ~masks.amodal):
        problems.append((aid, 'visible mask not contained in amodal mask'))
    if np.any(masks.invisible & ~masks.amodal):
        problems.append((aid, 'invisible mask not contained in amodal mask'))
    if np.any(masks.visible & masks.invisible):
        problems.append((aid, 'visible and invisible masks overlap'))
    if not np.array_equal(masks.visible | masks.invisible, masks.amodal):
        problems.append((aid, 'visible and invisible masks do not cover the amodal mask'))
    if (a['area'], a['visible_area'], a['invisible_area']) != (masks.area, masks.visibleArea, masks.invisibleArea):
        problems.append((aid, 'area fields do not match the masks'))
    if masks.visibleArea == 0:
        problems.append((aid, 'instance has no visible pixels'))
    if tuple(a['bbox']) != bbox_of(masks.amodal):
        problems.append((aid, f'bbox {a["bbox"]} is not the tight box {list(bbox_of(masks.amodal))}'))
    if nPoints is not None and len(a['points']) != nPoints:
        problems.append((aid, f'{len(a["points"])} points, the header gives {nPoints} per instance'))
    if a['points']:
        x, y, w, h = a['bbox']
        pts = np.asarray(a['points'], dtype=float)
        if np.any((pts[:, 0] < x) | (pts[:, 0] >= x + w) | (pts[:, 1] < y) | (pts[:, 1] >= y + h)):
            problems.append((aid, 'point outside the amodal box'))
        elif not np.array_equal(label_points(masks.amodal, pts[:, 0], pts[:, 1]), pts[:, 2].astype(int)):
            problems.append((aid, 'point label disagrees with the amodal mask'))


def validate_record(record):
    """
    Check ids resolve, RLE counts, the mask partition, areas, boxes, points and orders.

    Returns
    -------
    problems : list
        (annotation id, message) tuples. Problems not tied to an annotation use 'image <id>'.
    """
    problems = []
    images = {}
    for im in record.images:
        if im['id'] in images:
            problems.append((f'image {im["id"]}', 'duplicate image id'))
        images[im['id']] = im
    categoryIds = {c['id'] for c in record.categories}
    nCategories = record.header.get('layer_class', {}).get('n_categories', len(record.categories))
    nPoints = record.header.get('points_per_instance')
    byImage = {}
    for a in record.annotations:
        if a['image_id'] not in images:
            problems.append((a['id'], f'unknown image id {a["image_id"]}'))
            continue
        if a['category_id'] not in categoryIds:
            problems.append((a['id'], f'unknown category id {a["category_id"]}'))
        if a['layer_class_id'] != layer_class_id(a['category_id'], a['layer'], nCategories):
            problems.append((a['id'], 'layer_class_id does not match category and layer'))
        _check_masks(a, images[a['image_id']], problems, nPoints)
        byImage.setdefault(a['image_id'], []).append(a)
    for r in record.relations:
        if r['image_id'] not in images:
            problems.append((f'image {r["image_id"]}', 'relations refer to an unknown image'))
            continue
        anns = sorted(byImage.get(r['image_id'], []), key=lambda a: a['stack_index'])
        try:
            layers = assign_layers(OcclusionGraph.from_triples(len(anns), r['edges'])).layer
        except ValueError as e:
            problems.append((f'image {r["image_id"]}', f'invalid relations: {e}'))
            continue
        for a, l in zip(anns, layers):
            if a['layer'] != l:
                problems.append((a['id'], f'layer {a["layer"]} disagrees with the occlusion graph ({l})'))
    return problems


def read_annotations(path):
    """
    Read and validate one annotations file. The image files are not needed.

    Parameters
    ----------
    path : string or Path
        Path to an annotations_<split>.json file.

    Returns
    -------
    record : DatasetRecord
    """
    d = _load_json(path)
    info = d.get('info')
    version = info.get('version') if isinstance(info, dict) else None
    if version != amodalforge.SCHEMA_VERSION:
        raise SchemaVersionError(version, amodalforge.SCHEMA_VERSION)
    record = DatasetRecord.from_json(d)
    try:
        problems = validate_record(record)
    except (KeyError, TypeError, IndexError, ValueError) as e:
        # Missing or mistyped fields, reported as one problem for the whole file
        raise DatasetValidationError([('file', f'{path} has a malformed record: {type(e).__name__} {e}')]) from e
    if problems:
        raise DatasetValidationError(problems)
    logger.info('Read %d images and %d instances from %s', len(record.images), len(record.annotations), path)
    return record


def read_dataset(directory, split='train'):
    """
    Read and validate one split of a dataset directory.

    Parameters
    ----------
    directory : string or Path
        Dataset directory with a manifest.json.
    split : string, optional
        The split to read. The default is 'train'.

    Returns
    -------
    record : DatasetRecord
    """
    directory = Path(directory)
    manifest = _load_manifest(directory)
    if split not in manifest['splits']:
        raise DatastoreError(f"Split '{split}' not in {directory}, available splits are {sorted(manifest['splits'])}")
    record = read_annotations(directory / manifest['splits'][split]['annotations'])
    missing = [(f'image {im["id"]}', f'{im["file_name"]} not in manifest') for im in record.images if im['file_name'] not in manifest['files']]
    if missing:
        raise DatasetValidationError(missing)
    return record


def check_disjoint_sprites(recordA, recordB):
    """
    Returns the set of sprite ids used in both records. Empty when the splits use disjoint sprite pools.
    """
    return recordA.sprite_ids() & recordB.sprite_ids()


def golden_path():
    """
    Path of the checked-in golden annotations file.
    """
    return os.path.join(amodalforge.DATA_DIR, 'golden', 'annotations_golden.json')
