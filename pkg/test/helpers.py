"""
Builders for hand-made sprites, masks and scenes shared by the tests.
"""
import numpy as np

from amodalforge.compositor import Placement, SceneSpec, ComposedScene, derive_masks
from amodalforge.sprites import Sprite, SpriteLibrary


def rect_sprite(id, height, width, category=0, colour=(0.8, 0.2, 0.1)):
    """
    Fully opaque rectangular sprite with a flat colour.
    """
    pixels = np.ones((height, width, 3), dtype=np.float32) * np.asarray(colour, dtype=np.float32)
    return Sprite.from_rgba(id, category, pixels, np.ones((height, width), dtype=np.float32))


def rect_mask(canvas, x, y, w, h):
    """
    Boolean (height, width) mask with the box [x, x + w) x [y, y + h) set.
    """
    mask = np.zeros((canvas[1], canvas[0]), dtype=bool)
    mask[y:y + h, x:x + w] = True
    return mask


def library_of(*sprites, categories=('a', 'b')):
    return SpriteLibrary.from_sprites(list(categories), sprites)


def scene_from_masks(amodalMasks, categories=None, seed=0, sceneId=0):
    """
    ComposedScene built directly from amodal masks in stack order, for annotation and statistics tests.
    """
    categories = categories or [0] * len(amodalMasks)
    height, width = amodalMasks[0].shape
    placements = tuple(Placement(f'm{k}', c, 0.0, 1.0, (0.0, 0.0)) for k, c in enumerate(categories))
    spec = SceneSpec(sceneId=sceneId, backgroundId='flat', placements=placements, canvas=(width, height), seed=seed)
    return ComposedScene(spec=spec, image=np.zeros((height, width, 3), dtype=np.float32), masks=derive_masks(amodalMasks))
