"""
Scene sampling and compositing. A scene is a background plus a stack of placed sprites, painted bottom to top. Amodal masks come from rendering each placement on its own, visible and invisible masks from the stack order.
"""
import logging
import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import affine_transform

from amodalforge.errors import DegeneratePlacementError, SceneError, RetryExhaustedError
from amodalforge.utils import make_rng, scene_seed, ordered_map

logger = logging.getLogger(__name__)

# Number of translation draws before falling back to the canvas centre
_TRANSLATION_TRIES = 50


@dataclass(frozen=True)
class Placement:
    """
    Where and how a sprite is drawn. rotation is in degrees (counterclockwise on screen), scale a positive factor and translation the (x, y) canvas position of the sprite centre, in pixel index coordinates.
    """
    spriteId: str
    category: int
    rotation: float
    scale: float
    translation: tuple

    def to_dict(self):
        return {'sprite_id': self.spriteId, 'category': self.category, 'rotation': self.rotation,
                'scale': self.scale, 'translation': list(self.translation)}

    @classmethod
    def from_dict(cls, d):
        return cls(d['sprite_id'], int(d['category']), float(d['rotation']), float(d['scale']), tuple(d['translation']))


@dataclass(frozen=True)
class SceneSpec:
    """
    Everything needed to render a scene. placements are in stack order: index 0 is painted first (furthest from the camera), the last placement is on top.
    """
    sceneId: int
    backgroundId: str
    placements: tuple
    canvas: tuple
    seed: int

    def to_dict(self):
        return {'scene_id': self.sceneId, 'background_id': self.backgroundId, 'canvas': list(self.canvas),
                'seed': self.seed, 'placements': [p.to_dict() for p in self.placements]}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d['scene_id']), d['background_id'], tuple(Placement.from_dict(p) for p in d['placements']),
                   tuple(d['canvas']), int(d['seed']))


@dataclass(eq=False)
class MaskSet:
    """
    Amodal, visible and invisible boolean masks of one instance, with the tight (x, y, w, h) box around the amodal mask.
    """
    amodal: np.ndarray
    visible: np.ndarray
    invisible: np.ndarray
    amodalBbox: tuple

    @property
    def area(self):
        return int(self.amodal.sum())

    @property
    def visibleArea(self):
        return int(self.visible.sum())

    @property
    def invisibleArea(self):
        return int(self.invisible.sum())

    def occlusion_rate(self):
        """
        Fraction of the amodal mask that is hidden.
        """
        area = self.area
        return self.invisibleArea / area if area > 0 else 0.0

    def equals(self, other):
        """
        True if both mask sets hold identical masks and boxes.
        """
        return (tuple(self.amodalBbox) == tuple(other.amodalBbox) and np.array_equal(self.amodal, other.amodal)
                and np.array_equal(self.visible, other.visible) and np.array_equal(self.invisible, other.invisible))


@dataclass(eq=False)
class ComposedScene:
    """
    A rendered scene.

    Attributes
    ----------
    spec : SceneSpec
        The specification the scene was rendered from.
    image : numpy array
        HxWx3 float32 composited image.
    masks : list
        One MaskSet per placement, in stack order.
    appearances : list
        One HxWx4 float32 RGBA raster per placement: the whole transformed sprite at its placement, on a transparent canvas.
    background : numpy array
        The clean HxWx3 background.
    """
    spec: SceneSpec
    image: np.ndarray
    masks: list
    appearances: list = field(default_factory=list)
    background: np.ndarray = None

    @property
    def sceneId(self):
        return self.spec.sceneId

    def n_instances(self):
        return len(self.masks)

    def categories(self):
        return [p.category for p in self.spec.placements]


@dataclass(frozen=True)
class Rejected:
    """
    A scene that was discarded. hidden lists the indices of the instances without visible pixels.
    """
    spec: SceneSpec
    hidden: tuple
    reason: str = 'instance fully hidden'


def _rotation(rotation):
    """
    Forward rotation matrix in (row, col) coordinates for a counterclockwise on-screen rotation in degrees. Entries within 1e-12 of zero are snapped, so right angles map pixel centres exactly.
    """
    t = math.radians(rotation)
    c, s = math.cos(t), math.sin(t)
    m = np.array([[c, -s], [s, c]])
    m[np.abs(m) < 1e-12] = 0.0
    return m


def _footprint(shape, rotation, scale, translation):
    """
    Integer (row0, col0, row1, col1) canvas box, half open, that holds the transformed sprite.
    """
    h, w = shape
    centre = np.array([(h - 1) / 2, (w - 1) / 2])
    corners = np.array([[-0.5, -0.5], [-0.5, w - 0.5], [h - 0.5, -0.5], [h - 0.5, w - 0.5]]) - centre
    out = corners @ (scale * _rotation(rotation)).T + np.array([translation[1], translation[0]])
    lo = np.floor(out.min(axis=0)).astype(int)
    hi = np.ceil(out.max(axis=0)).astype(int) + 1
    return lo[0], lo[1], hi[0], hi[1]


def _render_window(sprite, rotation, scale, translation, window, withColour=True):
    """
    Render the transformed sprite over a canvas window (row0, col0, row1, col1). Colour is bilinear, the mask nearest neighbour on the binarised alpha.
    """
    r0, c0, r1, c1 = window
    h, w = sprite.shape
    centre = np.array([(h - 1) / 2, (w - 1) / 2])
    # affine_transform maps output coordinates to input coordinates, so use the inverse transform.
    # grid-constant pads before rounding, so samples within half a pixel of the sprite edge still hit it
    inverse = _rotation(rotation).T / scale
    offset = inverse @ (np.array([r0, c0]) - np.array([translation[1], translation[0]])) + centre
    shape = (r1 - r0, c1 - c0)
    mask = affine_transform(sprite.baseMask.astype(np.float32), inverse, offset=offset, output_shape=shape,
                            order=0, mode='grid-constant', cval=0.0) > 0.5
    if not withColour:
        return None, mask
    matrix3 = np.eye(3)
    matrix3[:2, :2] = inverse
    colour = affine_transform(sprite.pixels, matrix3, offset=np.append(offset, 0), output_shape=shape + (3,),
                              order=1, mode='nearest')
    return colour.astype(np.float32), mask


def rasterize_placement(sprite, placement, canvas):
    """
    Render one placed sprite onto an empty canvas.

    Rotation and scale are applied about the sprite centre, which is then moved to placement.translation. Pixels that fall off the canvas are clipped.

    Parameters
    ----------
    sprite : Sprite
        The sprite to draw.
    placement : Placement
        Rotation, scale and translation.
    canvas : tuple
        (width, height) of the canvas.

    Returns
    -------
    colour : numpy array
        HxWx3 float32 colour layer (zero outside the sprite's footprint).
    mask : numpy array
        HxW boolean amodal mask.
    """
    width, height = canvas
    r0, c0, r1, c1 = _footprint(sprite.shape, placement.rotation, placement.scale, placement.translation)
    window = (max(r0, 0), max(c0, 0), min(r1, height), min(c1, width))
    colour = np.zeros((height, width, 3), dtype=np.float32)
    mask = np.zeros((height, width), dtype=bool)
    if window[0] < window[2] and window[1] < window[3]:
        localColour, localMask = _render_window(sprite, placement.rotation, placement.scale, placement.translation, window)
        colour[window[0]:window[2], window[1]:window[3]] = localColour
        mask[window[0]:window[2], window[1]:window[3]] = localMask
    if not mask.any():
        raise DegeneratePlacementError(f'degenerate placement: sprite {placement.spriteId} at {placement.translation} has no pixels on the canvas')
    return colour, mask


def bbox_of(mask):
    """
    Tight (x, y, w, h) box around the set pixels of a mask, (0, 0, 0, 0) for an empty mask.
    """
    rows = np.flatnonzero(mask.any(axis=1))
    if rows.size == 0:
        return 0, 0, 0, 0
    cols = np.flatnonzero(mask.any(axis=0))
    return int(cols[0]), int(rows[0]), int(cols[-1] - cols[0] + 1), int(rows[-1] - rows[0] + 1)


def derive_masks(amodalMasks):
    """
    Split amodal masks into visible and invisible parts using the stack order.

    Instance i is hidden by every instance j > i, so visible(i) = amodal(i) minus the union of the amodal masks above it, and invisible(i) is the rest of amodal(i). Empty visible masks are returned as they are, the caller decides what to do with them.

    Parameters
    ----------
    amodalMasks : list
        Boolean HxW masks in stack order (index 0 at the bottom).

    Returns
    -------
    maskSets : list
        One MaskSet per input mask, same order.
    """
    if len(amodalMasks) == 0:
        return []
    above = np.zeros_like(amodalMasks[0], dtype=bool)
    maskSets = [None] * len(amodalMasks)
    for i in range(len(amodalMasks) - 1, -1, -1):
        amodal = np.asarray(amodalMasks[i], dtype=bool)
        maskSets[i] = MaskSet(amodal=amodal, visible=amodal & ~above, invisible=amodal & above, amodalBbox=bbox_of(amodal))
        above = above | amodal
    return maskSets


def _on_canvas_fraction(localMask, origin, shift, canvas):
    """
    Fraction of a mask rendered with its window at origin that stays on the canvas after an integer (row, col) shift.
    """
    width, height = canvas
    r0, c0 = origin[0] + shift[0], origin[1] + shift[1]
    h, w = localMask.shape
    rs, re = max(0, -r0), min(h, height - r0)
    cs, ce = max(0, -c0), min(w, width - c0)
    if rs >= re or cs >= ce:
        return 0.0
    return localMask[rs:re, cs:ce].sum() / localMask.sum()


def _sample_translation(sprite, rotation, scale, canvas, minOnCanvas, rng):
    """
    Draw a translation uniformly over the canvas, redrawing until at least minOnCanvas of the mask is on the canvas.
    """
    width, height = canvas
    window = _footprint(sprite.shape, rotation, scale, (0.0, 0.0))
    _, localMask = _render_window(sprite, rotation, scale, (0.0, 0.0), window, withColour=False)
    if not localMask.any():
        # Scaled below a pixel, nothing better than the centre
        return (width - 1) / 2, (height - 1) / 2
    for _ in range(_TRANSLATION_TRIES):
        tx, ty = rng.uniform(0, width), rng.uniform(0, height)
        if _on_canvas_fraction(localMask, window[:2], (int(round(ty)), int(round(tx))), canvas) >= minOnCanvas:
            return float(tx), float(ty)
    logger.debug('No translation with %.0f%% on canvas found for %s, using the centre', 100 * minOnCanvas, sprite.id)
    return (width - 1) / 2, (height - 1) / 2


def sample_scene_spec(library, backgrounds, config, sceneSeed, sceneId=0):
    """
    Draw a random scene specification.

    In 'intra' mode every sprite comes from one uniformly chosen category, in 'inter' mode each sprite's category is drawn independently. The number of instances, rotation and scale are uniform over the configured ranges.

    Parameters
    ----------
    library : SpriteLibrary
        Sprites to draw from.
    backgrounds : list
        Backgrounds to draw from.
    config : GenerationConfig
        Instance count, scale and rotation ranges, mode and canvas.
    sceneSeed : int
        Seed of this scene. The result is a pure function of the inputs and this seed.
    sceneId : int, optional
        Id stored in the spec. The default is 0.

    Returns
    -------
    spec : SceneSpec
    """
    if library is None or len(library) == 0:
        raise SceneError('Cannot sample a scene from an empty sprite library')
    if len(backgrounds) == 0:
        raise SceneError('Cannot sample a scene without backgrounds')
    rng = make_rng(sceneSeed)
    n = int(rng.integers(config.minInstances, config.maxInstances + 1))
    background = backgrounds[int(rng.integers(len(backgrounds)))]
    categories = sorted(library.sprites)
    if config.mode == 'intra':
        chosen = [categories[int(rng.integers(len(categories)))]] * n
    else:
        chosen = [categories[int(i)] for i in rng.integers(len(categories), size=n)]
    placements = []
    for c in chosen:
        group = library.sprites[c]
        sprite = group[int(rng.integers(len(group)))]
        rotation = float(rng.uniform(*config.rotationRange))
        scale = float(rng.uniform(*config.scaleRange))
        translation = _sample_translation(sprite, rotation, scale, config.canvas, config.minOnCanvas, rng)
        placements.append(Placement(sprite.id, c, rotation, scale, translation))
    return SceneSpec(sceneId=int(sceneId), backgroundId=background.id, placements=tuple(placements),
                     canvas=tuple(config.canvas), seed=int(sceneSeed))


def compose_scene(spec, library, backgrounds):
    """
    Render a scene specification.

    The background is painted first, then each placement in stack order with its binarised alpha as coverage, so every pixel shows the topmost instance whose amodal mask covers it. Scenes where some instance has no visible pixel are rejected.

    Parameters
    ----------
    spec : SceneSpec
        The scene to render.
    library : SpriteLibrary
        Sprites referenced by the spec.
    backgrounds : list or dict
        Backgrounds referenced by the spec (a list of Background or a dict id -> Background).

    Returns
    -------
    scene : ComposedScene or Rejected
    """
    byId = backgrounds if isinstance(backgrounds, dict) else {b.id: b for b in backgrounds}
    if spec.backgroundId not in byId:
        raise SceneError(f"Scene {spec.sceneId} refers to unknown background '{spec.backgroundId}'")
    background = byId[spec.backgroundId]
    if background.canvas != tuple(spec.canvas):
        raise SceneError(f'Background {background.id} is {background.canvas}, scene canvas is {tuple(spec.canvas)}')
    image = np.array(background.pixels, dtype=np.float32, copy=True)
    colours, amodalMasks = [], []
    for p in spec.placements:
        if p.spriteId not in library:
            raise SceneError(f"Scene {spec.sceneId} refers to unknown sprite '{p.spriteId}'")
        colour, mask = rasterize_placement(library.get(p.spriteId), p, spec.canvas)
        image[mask] = colour[mask]
        colours.append(colour)
        amodalMasks.append(mask)
    masks = derive_masks(amodalMasks)
    hidden = tuple(i for i, m in enumerate(masks) if m.visibleArea == 0)
    if hidden:
        return Rejected(spec, hidden)
    appearances = [np.dstack([np.where(m[..., None], c, 0), m.astype(np.float32)]).astype(np.float32)
                   for c, m in zip(colours, amodalMasks)]
    return ComposedScene(spec=spec, image=image, masks=masks, appearances=appearances,
                         background=np.array(background.pixels, copy=True))


def generate_scene(library, backgrounds, config, globalSeed, index):
    """
    Generate scene number index of a batch, resampling rejected scenes with fresh seeds.

    Returns
    -------
    scene : ComposedScene or None
        None if every attempt was rejected.
    attempts : int
        Number of specs rendered.
    """
    for attempt in range(config.maxRetries + 1):
        spec = sample_scene_spec(library, backgrounds, config, scene_seed(globalSeed, index, attempt), sceneId=index)
        result = compose_scene(spec, library, backgrounds)
        if isinstance(result, ComposedScene):
            return result, attempt + 1
        logger.debug('Scene %d attempt %d rejected: instances %s hidden', index, attempt, result.hidden)
    return None, config.maxRetries + 1


def generate_batch(library, backgrounds, config, globalSeed=None, count=None, workers=1, tracker=None, progress=False):
    """
    Generate a stream of scenes.

    Scene i starts from seed scene_seed(globalSeed, i, 0) and retries with attempts 1..config.maxRetries. A scene that exhausts its retries is skipped with a warning. Scenes are yielded in index order whatever the number of workers, so the output is a pure function of (library, backgrounds, config, globalSeed, count).

    Parameters
    ----------
    library : SpriteLibrary
        Sprites to draw from.
    backgrounds : list
        Backgrounds at the configured canvas size.
    config : GenerationConfig
        Generation settings.
    globalSeed : int, optional
        Seed of the batch. The default is config.seed.
    count : int, optional
        Number of scene indices. The default is config.count.
    workers : int, optional
        Number of threads. The default is 1.
    tracker : GenerationTracker, optional
        Receives per-scene attempts and timings.
    progress : bool, optional
        Show a progress bar. The default is False.

    Yields
    ------
    scene : ComposedScene
    """
    globalSeed = config.seed if globalSeed is None else globalSeed
    count = config.count if count is None else count
    if count < 1:
        raise ValueError(f'count must be at least 1, got {count}')
    backgrounds = list(backgrounds)
    if len(backgrounds) == 0:
        raise SceneError('Cannot generate scenes without backgrounds')

    def work(index):
        start = time.monotonic()
        scene, attempts = generate_scene(library, backgrounds, config, globalSeed, index)
        return index, scene, attempts, time.monotonic() - start

    skipped = 0
    for index, scene, attempts, elapsed in ordered_map(work, range(count), workers=workers, progress=progress, desc='Generating scenes', total=count):
        if tracker is not None:
            tracker.update(index, attempts, scene is not None, elapsed)
        if scene is None:
            skipped += 1
            warnings.warn(f'Skipping scene {index}: every one of {attempts} attempts had a fully hidden instance')
            logger.warning('Skipping scene %d after %d attempts', index, attempts)
            if skipped > config.maxSkipFraction * count:
                raise RetryExhaustedError(f'{skipped} of {count} scenes exhausted {config.maxRetries} retries (limit {config.maxSkipFraction:.1%}). '
                                          'The configuration is probably too crowded: reduce maxInstances or scaleRange, or enlarge the canvas.')
            continue
        yield scene
