from amodalforge.sprites.sprites import Sprite, Background, SpriteLibrary, ingest_sprites, ingest_backgrounds, load_sprite, chroma_key_alpha, save_sprite, resize_to_canvas
from amodalforge.sprites.procedural import ProceduralParams, generate_procedural_sprite, procedural_library, procedural_backgrounds, FAMILIES
