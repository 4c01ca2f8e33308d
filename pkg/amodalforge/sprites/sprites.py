"""
Contains the Sprite, Background and SpriteLibrary types and the functions that ingest them from directories of images.
"""
import json
import logging
import os
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

import amodalforge
from amodalforge.errors import IngestError, EmptyMaskError
from amodalforge.utils import ordered_map, make_rng, mix_seed

logger = logging.getLogger(__name__)

IMAGE_EXTENSIONS = ('.png', '.jpg', '.jpeg', '.bmp', '.gif', '.tif', '.tiff', '.webp')


@dataclass(frozen=True, eq=False)
class Sprite:
    """
    An alpha matted foreground cutout. pixels is an HxWx3 float32 array in [0, 1], alpha an HxW float32 array in [0, 1] and baseMask the HxW boolean mask where alpha >= ALPHA_THRESHOLD.

    Use Sprite.from_rgba() to build one, it derives baseMask and checks the invariants.
    """
    id: str
    category: int
    pixels: np.ndarray
    alpha: np.ndarray
    baseMask: np.ndarray

    @classmethod
    def from_rgba(cls, id, category, pixels, alpha):
        """
        Build a sprite from colour and alpha rasters.

        Parameters
        ----------
        id : string
            Identifier of the sprite, unique within a library.
        category : int
            Category id (>= 0).
        pixels : numpy array
            HxWx3 colour raster, either uint8 or float in [0, 1].
        alpha : numpy array
            HxW coverage raster, either uint8 or float in [0, 1].

        Returns
        -------
        sprite : Sprite
            The sprite, with read-only arrays.
        """
        pixels = _to_unit(pixels)
        alpha = _to_unit(alpha)
        if category < 0:
            raise IngestError(f'Sprite {id} has negative category {category}')
        if pixels.ndim != 3 or pixels.shape[2] != 3 or alpha.shape != pixels.shape[:2]:
            raise IngestError(f'Sprite {id} has mismatched colour {pixels.shape} and alpha {alpha.shape} dimensions')
        baseMask = alpha >= amodalforge.ALPHA_THRESHOLD
        if not baseMask.any():
            raise EmptyMaskError(f'Sprite {id} has an empty mask (no alpha value reaches {amodalforge.ALPHA_THRESHOLD})')
        for a in (pixels, alpha, baseMask):
            a.flags['WRITEABLE'] = False
        return cls(id=id, category=int(category), pixels=pixels, alpha=alpha, baseMask=baseMask)

    @property
    def shape(self):
        return self.baseMask.shape

    @property
    def area(self):
        return int(self.baseMask.sum())


@dataclass(frozen=True, eq=False)
class Background:
    """
    A background texture at canvas size. pixels is an HxWx3 float32 array in [0, 1].
    """
    id: str
    pixels: np.ndarray

    @property
    def canvas(self):
        """
        (width, height) of the background.
        """
        return self.pixels.shape[1], self.pixels.shape[0]


@dataclass(frozen=True)
class SpriteLibrary:
    """
    Sprites grouped by category. categories holds the category names, the category id of a name is its index. Built with SpriteLibrary.from_sprites(), which sorts everything canonically so the library does not depend on the order sprites were found in.
    """
    categories: tuple
    sprites: dict
    skipped: tuple = field(default=(), compare=False)

    @classmethod
    def from_sprites(cls, categories, sprites, skipped=()):
        """
        Build a library from category names and a flat collection of sprites.

        Parameters
        ----------
        categories : list
            Category names, in id order.
        sprites : iterable of Sprite
            The sprites. Every category must have at least one and ids must be unique.
        skipped : iterable, optional
            (path, reason) pairs for files that could not be used. Kept for reporting.

        Returns
        -------
        library : SpriteLibrary
        """
        grouped = {c: [] for c in range(len(categories))}
        seen = set()
        for s in sprites:
            if s.id in seen:
                raise IngestError(f'Duplicate sprite id {s.id}')
            if s.category not in grouped:
                raise IngestError(f'Sprite {s.id} has category {s.category} but only {len(categories)} categories exist')
            seen.add(s.id)
            grouped[s.category].append(s)
        if len(categories) == 0:
            raise IngestError('no categories')
        for c, group in grouped.items():
            if len(group) == 0:
                raise IngestError(f"Category '{categories[c]}' has no usable sprites")
        frozen = {c: tuple(sorted(group, key=lambda s: s.id)) for c, group in grouped.items()}
        lib = cls(categories=tuple(categories), sprites=frozen, skipped=tuple(sorted(skipped)))
        return lib

    def __post_init__(self):
        # Id lookup table, built once as the library never changes
        object.__setattr__(self, '_byId', {s.id: s for group in self.sprites.values() for s in group})

    def n_categories(self):
        return len(self.categories)

    def counts(self):
        """
        Returns a dictionary of category id -> number of sprites.
        """
        return {c: len(group) for c, group in self.sprites.items()}

    def __len__(self):
        return len(self._byId)

    def __contains__(self, spriteId):
        return spriteId in self._byId

    def get(self, spriteId):
        """
        Returns the sprite with the given id. Raises KeyError if it is not in the library.
        """
        return self._byId[spriteId]

    def ids(self):
        """
        Returns all sprite ids, sorted.
        """
        return sorted(self._byId)

    def partition(self, fractions, seed=0):
        """
        Split every category's sprites into disjoint pools, so for example test scenes only use sprites never seen in training scenes.

        Parameters
        ----------
        fractions : dict
            Pool name -> fraction of each category's sprites. Fractions are normalised to sum to 1.
        seed : int, optional
            Seed for the shuffle of each category. The default is 0.

        Returns
        -------
        pools : dict
            Pool name -> SpriteLibrary. Every pool has the same categories.
        """
        names = list(fractions)
        weights = np.array([fractions[n] for n in names], dtype=float)
        if len(names) == 0 or np.any(weights <= 0):
            raise IngestError('Sprite partition needs at least one pool with a positive fraction')
        weights = weights / weights.sum()
        pools = {n: [] for n in names}
        for c in sorted(self.sprites):
            group = self.sprites[c]
            if len(group) < len(names):
                raise IngestError(f"Category '{self.categories[c]}' has {len(group)} sprite(s), too few to split into {len(names)} pools")
            rng = make_rng(mix_seed(seed, c))
            order = rng.permutation(len(group))
            # Every pool gets at least one sprite, the rest follows the fractions
            bounds = [int(b) for b in np.round(np.cumsum(weights) * len(group))]
            for k in range(len(bounds)):
                bounds[k] = max(bounds[k], (bounds[k - 1] if k > 0 else 0) + 1)
            bounds[-1] = len(group)
            for k in range(len(bounds) - 2, -1, -1):
                bounds[k] = min(bounds[k], bounds[k + 1] - 1)
            start = 0
            for n, end in zip(names, bounds):
                pools[n].extend(group[i] for i in order[start:end])
                start = end
        return {n: SpriteLibrary.from_sprites(self.categories, pools[n]) for n in names}

    def manifest(self):
        """
        Returns a JSON-ready description of the library: categories and, for each sprite, its id, category and dimensions.
        """
        return {'categories': [{'id': i, 'name': n} for i, n in enumerate(self.categories)],
                'sprites': [{'id': s.id, 'category': s.category, 'height': s.shape[0], 'width': s.shape[1]} for s in (self._byId[i] for i in self.ids())],
                'skipped': [{'path': p, 'reason': r} for p, r in self.skipped]}

    def dump_manifest(self, filename):
        """
        Write the library manifest to a JSON file.
        """
        with open(filename, 'w') as f:
            json.dump(self.manifest(), f, indent=2)


def _to_unit(a):
    """
    Convert a uint8 or float raster to float32 in [0, 1].
    """
    a = np.asarray(a)
    if a.dtype == np.uint8:
        return a.astype(np.float32) / 255
    return np.clip(a.astype(np.float32), 0, 1)


def _image_files(directory, recursive=False):
    """
    Sorted list of image files in a directory.
    """
    pattern = '**/*' if recursive else '*'
    return sorted(p for p in Path(directory).glob(pattern) if p.is_file() and p.suffix.lower() in IMAGE_EXTENSIONS)


def chroma_key_alpha(rgb, key=(255, 255, 255), tolerance=0.05):
    """
    Alpha for an image without an alpha channel: 0 where every channel is within tolerance of the key colour, 1 elsewhere.

    Parameters
    ----------
    rgb : numpy array
        HxWx3 uint8 image.
    key : tuple, optional
        Key colour. The default is pure white.
    tolerance : float, optional
        Allowed per-channel difference as a fraction of 255. The default is 0.05.

    Returns
    -------
    alpha : numpy array
        HxW float32 array of 0s and 1s.
    """
    diff = np.abs(rgb.astype(np.int16) - np.array(key, dtype=np.int16))
    background = np.all(diff <= tolerance * 255, axis=2)
    return (~background).astype(np.float32)


def load_sprite(path, spriteId, category, chromaKey=(255, 255, 255), keyTolerance=0.05):
    """
    Read one sprite from an image file. The alpha channel is used when the image has one, otherwise alpha comes from chroma keying chromaKey.
    """
    with Image.open(path) as im:
        im.load()
        hasAlpha = im.mode in ('RGBA', 'LA', 'PA') or (im.mode == 'P' and 'transparency' in im.info)
        if hasAlpha:
            rgba = np.asarray(im.convert('RGBA'))
            rgb, alpha = rgba[..., :3], rgba[..., 3]
        else:
            rgb = np.asarray(im.convert('RGB'))
            alpha = chroma_key_alpha(rgb, chromaKey, keyTolerance)
    return Sprite.from_rgba(spriteId, category, rgb, alpha)


def ingest_sprites(root, chromaKey=(255, 255, 255), keyTolerance=0.05, workers=1):
    """
    Build a SpriteLibrary from a directory with one subdirectory per category.

    Category ids follow the lexicographic order of the subdirectory names. Sprite ids are '<category name>/<file name>'. Files that cannot be read, or whose mask is empty, are skipped with a warning and listed in library.skipped.

    Parameters
    ----------
    root : string or Path
        Root directory.
    chromaKey : tuple, optional
        Colour keyed out of images without alpha. The default is white.
    keyTolerance : float, optional
        Chroma key tolerance. The default is 0.05.
    workers : int, optional
        Number of threads used to read files. The default is 1.

    Returns
    -------
    library : SpriteLibrary
    """
    root = Path(root)
    if not root.is_dir():
        raise IngestError(f'Sprite root {root} is not a directory')
    categories = sorted(d.name for d in root.iterdir() if d.is_dir())
    if len(categories) == 0:
        raise IngestError('no categories')
    jobs = [(path, f'{name}/{path.name}', c) for c, name in enumerate(categories) for path in _image_files(root / name)]

    def read(job):
        path, spriteId, c = job
        try:
            return load_sprite(path, spriteId, c, chromaKey, keyTolerance), None
        except EmptyMaskError:
            return None, (str(path.relative_to(root)), 'empty mask')
        except (OSError, UnidentifiedImageError, ValueError) as e:
            return None, (str(path.relative_to(root)), f'unreadable: {e}')

    sprites, skipped = [], []
    for sprite, problem in ordered_map(read, jobs, workers=workers):
        if sprite is None:
            warnings.warn(f'Skipping sprite {problem[0]} ({problem[1]})')
            logger.warning('Skipping sprite %s (%s)', *problem)
            skipped.append(problem)
        else:
            sprites.append(sprite)
    counts = {c: 0 for c in range(len(categories))}
    for s in sprites:
        counts[s.category] += 1
    for c, n in counts.items():
        if n == 0:
            raise IngestError(f"Category '{categories[c]}' has no readable images")
    logger.info('Ingested %d sprites in %d categories from %s', len(sprites), len(categories), root)
    return SpriteLibrary.from_sprites(categories, sprites, skipped)


def resize_to_canvas(rgb, canvas):
    """
    Bilinear resize of a uint8 RGB array to canvas (width, height), returned as float32 in [0, 1]. Arrays already at canvas size are only converted.
    """
    if (rgb.shape[1], rgb.shape[0]) != tuple(canvas):
        rgb = np.asarray(Image.fromarray(rgb).resize(tuple(canvas), Image.Resampling.BILINEAR))
    return rgb.astype(np.float32) / 255


def ingest_backgrounds(root, canvas=amodalforge.DEFAULT_CANVAS, workers=1):
    """
    Read every image below root (recursively) and rescale it to canvas size.

    Parameters
    ----------
    root : string or Path
        Directory of background textures. Subdirectories are searched too.
    canvas : tuple, optional
        (width, height) of the backgrounds. The default is (256, 256).
    workers : int, optional
        Number of threads used to read files. The default is 1.

    Returns
    -------
    backgrounds : list
        List of Background, sorted by id (the path relative to root).
    """
    root = Path(root)
    if not root.is_dir():
        raise IngestError(f'Background root {root} is not a directory')
    files = _image_files(root, recursive=True)

    def read(path):
        try:
            with Image.open(path) as im:
                rgb = np.asarray(im.convert('RGB'))
            pixels = resize_to_canvas(rgb, canvas)
        except (OSError, UnidentifiedImageError, ValueError) as e:
            return None, f'{path.relative_to(root)}: {e}'
        pixels.flags['WRITEABLE'] = False
        return Background(id=path.relative_to(root).as_posix(), pixels=pixels), None

    backgrounds = []
    for bg, problem in ordered_map(read, files, workers=workers):
        if bg is None:
            warnings.warn(f'Skipping unreadable background {problem}')
            logger.warning('Skipping unreadable background %s', problem)
        else:
            backgrounds.append(bg)
    if len(backgrounds) == 0:
        raise IngestError(f'No readable background images in {root}')
    logger.info('Ingested %d backgrounds from %s', len(backgrounds), root)
    return backgrounds


def save_sprite(sprite, filename):
    """
    Write a sprite as an RGBA PNG. Used to build test corpora.
    """
    rgba = np.dstack([sprite.pixels, sprite.alpha])
    Image.fromarray(np.round(rgba * 255).astype(np.uint8)).save(filename)
    return os.fspath(filename)
