from amodalforge.utils.seeds import mix_seed, scene_seed, make_rng
from amodalforge.utils.parallel import ordered_map
