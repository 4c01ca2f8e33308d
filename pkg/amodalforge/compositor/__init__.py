from amodalforge.compositor.compositor import Placement, SceneSpec, MaskSet, ComposedScene, Rejected, sample_scene_spec, rasterize_placement, derive_masks, compose_scene, generate_scene, generate_batch, bbox_of
