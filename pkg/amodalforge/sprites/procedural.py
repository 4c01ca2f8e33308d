"""
Procedurally generated sprites and backgrounds, so the whole pipeline can run without any external image corpus.
"""
import math
from dataclasses import dataclass

import numpy as np
from matplotlib.colors import hsv_to_rgb
from matplotlib.path import Path as PolygonPath
from scipy.ndimage import gaussian_filter

import amodalforge
from amodalforge.errors import DegenerateShapeError
from amodalforge.sprites.sprites import Sprite, Background, SpriteLibrary
from amodalforge.utils import make_rng, mix_seed

FAMILIES = ('circle', 'square', 'superellipse', 'polygon')


@dataclass(frozen=True)
class ProceduralParams:
    """
    Shape and texture parameters of a procedural sprite.

    Attributes
    ----------
    family : str
        One of 'circle', 'square', 'superellipse', 'polygon'.
    size : float
        Radius for 'circle', 'superellipse' and 'polygon', side length for 'square'.
    category : int
        Category id given to the sprite.
    aspect : float
        Height/width ratio for 'superellipse'.
    exponent : float
        Superellipse exponent (2 is an ellipse, larger values are boxier).
    vertices : int
        Number of vertices for 'polygon'.
    irregularity : float
        Fraction of the radius by which polygon vertices are randomly pulled in.
    hue : float or None
        Base hue in [0, 1). None draws it from the generator.
    textureSeed : int
        Seed of the interior texture.
    """
    family: str = 'circle'
    size: float = 16
    category: int = 0
    aspect: float = 1.0
    exponent: float = 4.0
    vertices: int = 6
    irregularity: float = 0.3
    hue: float = None
    textureSeed: int = 0


def _shape_mask(params, rng):
    """
    Rasterise the shape. Pixel (row, col) is inside when its centre (col + 0.5, row + 0.5) is inside the continuous shape.
    """
    if params.size <= 0:
        raise DegenerateShapeError(f'Shape size must be positive, got {params.size}')
    if params.family == 'square':
        side = int(round(params.size))
        if side < 4:
            raise DegenerateShapeError(f'Square side {side} is below the 4 pixel minimum')
        return np.ones((side, side), dtype=bool)
    if params.family == 'circle':
        rx = ry = params.size
    elif params.family == 'superellipse':
        if params.aspect <= 0 or params.exponent <= 0:
            raise DegenerateShapeError(f'Superellipse needs positive aspect and exponent, got {params.aspect} and {params.exponent}')
        rx, ry = params.size, params.size * params.aspect
    elif params.family == 'polygon':
        if params.vertices < 3:
            raise DegenerateShapeError(f'Polygon needs at least 3 vertices, got {params.vertices}')
        rx = ry = params.size
    else:
        raise DegenerateShapeError(f"Unknown shape family '{params.family}', expected one of {FAMILIES}")
    w, h = int(math.ceil(2 * rx)), int(math.ceil(2 * ry))
    if w < 4 or h < 4:
        raise DegenerateShapeError(f'Shape raster {w}x{h} is below the 4x4 minimum')
    cx, cy = w / 2, h / 2
    y, x = np.mgrid[0:h, 0:w]
    dx, dy = x + 0.5 - cx, y + 0.5 - cy
    if params.family == 'circle':
        mask = dx ** 2 + dy ** 2 <= rx ** 2
    elif params.family == 'superellipse':
        mask = np.abs(dx / rx) ** params.exponent + np.abs(dy / ry) ** params.exponent <= 1
    else:
        n = params.vertices
        angles = 2 * np.pi * (np.arange(n) + rng.uniform(-0.25, 0.25, n)) / n
        radii = rx * (1 - params.irregularity * rng.random(n))
        polygon = PolygonPath(np.column_stack([cx + radii * np.cos(angles), cy + radii * np.sin(angles)]))
        mask = polygon.contains_points(np.column_stack([(x + 0.5).ravel(), (y + 0.5).ravel()])).reshape(h, w)
    if not mask.any():
        raise DegenerateShapeError(f'Shape {params} has zero area')
    return mask


def _texture(mask, hue, textureSeed):
    """
    Shaded, noisy colour fill for a shape mask.
    """
    h, w = mask.shape
    rng = make_rng(textureSeed)
    base = hsv_to_rgb([hue, 0.75, 0.85])
    noise = gaussian_filter(rng.standard_normal((h, w)), sigma=max(1.0, min(h, w) / 12))
    noise /= max(np.abs(noise).max(), 1e-12)
    # Darken towards the rim for a rounded look
    y, x = np.mgrid[0:h, 0:w]
    r = np.hypot((x + 0.5 - w / 2) / (w / 2), (y + 0.5 - h / 2) / (h / 2))
    shade = 1 - 0.35 * np.clip(r, 0, 1) ** 2
    pixels = base[None, None, :] * shade[..., None] + 0.12 * noise[..., None]
    return np.clip(pixels, 0, 1).astype(np.float32)


def generate_procedural_sprite(params, rng, spriteId=None):
    """
    Generate a sprite from shape parameters.

    Alpha is 1 inside the shape and 0 outside. The result is a pure function of params and the state of rng.

    Parameters
    ----------
    params : ProceduralParams
        Shape family, size and texture settings.
    rng : numpy.random.Generator
        Generator for polygon jitter and, when params.hue is None, the hue.
    spriteId : string, optional
        Id of the sprite. The default derives one from the parameters.

    Returns
    -------
    sprite : Sprite
    """
    mask = _shape_mask(params, rng)
    hue = params.hue if params.hue is not None else float(rng.random())
    pixels = _texture(mask, hue, params.textureSeed)
    if spriteId is None:
        spriteId = f'{params.family}-{params.size:g}-{params.textureSeed}'
    return Sprite.from_rgba(spriteId, params.category, pixels, mask.astype(np.float32))


def procedural_library(nCategories=10, spritesPerCategory=8, seed=0, size=64):
    """
    Build a SpriteLibrary of procedural sprites.

    Each category has a fixed shape family and hue, its sprites differ in size (+-20%), aspect, polygon jitter and texture.

    Parameters
    ----------
    nCategories : int, optional
        Number of categories. The default is 10.
    spritesPerCategory : int, optional
        Sprites in each category. The default is 8.
    seed : int, optional
        Seed of the library. The default is 0.
    size : float, optional
        Typical sprite radius in pixels. The default is 64.

    Returns
    -------
    library : SpriteLibrary
    """
    families = ('circle', 'superellipse', 'polygon')
    categories = [f'shape{c:02d}' for c in range(nCategories)]
    sprites = []
    for c in range(nCategories):
        family = families[c % len(families)]
        hue = (c / nCategories + 0.05) % 1
        for k in range(spritesPerCategory):
            rng = make_rng(mix_seed(seed, c, k))
            params = ProceduralParams(family=family, size=size * rng.uniform(0.8, 1.2), category=c,
                                      aspect=rng.uniform(0.75, 1.25), exponent=2.0 + 2 * (c // len(families)),
                                      vertices=5 + c % 4, hue=hue, textureSeed=mix_seed(seed, c, k, 1))
            sprites.append(generate_procedural_sprite(params, rng, spriteId=f'{categories[c]}/{k:03d}'))
    return SpriteLibrary.from_sprites(categories, sprites)


def procedural_backgrounds(n=8, canvas=amodalforge.DEFAULT_CANVAS, seed=0):
    """
    Generate smooth random colour textures at canvas size.

    Parameters
    ----------
    n : int, optional
        Number of backgrounds. The default is 8.
    canvas : tuple, optional
        (width, height). The default is (256, 256).
    seed : int, optional
        Seed. The default is 0.

    Returns
    -------
    backgrounds : list
        List of Background with ids 'procedural/000', 'procedural/001', ...
    """
    width, height = canvas
    backgrounds = []
    for i in range(n):
        rng = make_rng(mix_seed(seed, i))
        field_ = gaussian_filter(rng.standard_normal((height, width, 3)), sigma=(max(width, height) / 16, max(width, height) / 16, 0))
        field_ = (field_ - field_.min()) / max(np.ptp(field_), 1e-12)
        # Fine stripes so backgrounds are not flat
        y, x = np.mgrid[0:height, 0:width]
        angle = rng.uniform(0, np.pi)
        stripes = 0.5 + 0.5 * np.sin((x * np.cos(angle) + y * np.sin(angle)) * rng.uniform(0.2, 0.6))
        pixels = np.clip(0.2 + 0.55 * field_ + 0.1 * stripes[..., None], 0, 1).astype(np.float32)
        pixels.flags['WRITEABLE'] = False
        backgrounds.append(Background(id=f'procedural/{i:03d}', pixels=pixels))
    return backgrounds
