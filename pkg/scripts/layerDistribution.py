"""
Generate scenes with the default configuration and procedural sprites, check the mask partition of every instance, plot the layer histogram and check the dataset statistics fall in the expected bands.
Usage: python layerDistribution.py [count]
"""
import os
import sys

import numpy as np
import matplotlib.pyplot as plt

import amodalforge
from amodalforge.annotate import StatsAccumulator
from amodalforge.compositor import generate_batch
from amodalforge.config import IntraClass, default_workers
from amodalforge.sprites import procedural_library, procedural_backgrounds

count = int(sys.argv[1]) if len(sys.argv) > 1 else 10000
config = IntraClass(count=count)
library = procedural_library(seed=0, size=min(config.canvas) // 4)
backgrounds = procedural_backgrounds(canvas=config.canvas, seed=0)

acc = StatsAccumulator()
badInstances = 0
for scene in generate_batch(library, backgrounds, config, workers=default_workers(), progress=True):
    for m in scene.masks:
        if np.any(m.visible & m.invisible) or not np.array_equal(m.visible | m.invisible, m.amodal) or m.visibleArea == 0:
            badInstances += 1
    acc.add_scene(scene)
stats = acc.finalize(library.categories)

print(stats.to_table().to_string(index=False))
print(stats.layer_table().to_string())
print(f'Instances breaking the mask partition: {badInstances}')

# Instance counts should fall from layer 0 to layer 4
histogram = np.array(stats.layerHistogram)
print(f'Layers observed: {len(histogram)} (at most {config.maxInstances})')
print(f'Layer counts decrease from L0 to L4: {bool(np.all(np.diff(histogram[:5]) < 0))}')
print(f'Average occlusion rate {stats.occlusionRate:.1f}% in [15%, 45%]: {15 <= stats.occlusionRate <= 45}')
print(f'Occluded fraction {100 * stats.occludedFraction():.1f}% in [40%, 80%]: {0.4 <= stats.occludedFraction() <= 0.8}')

plt.figure(figsize=(5, 3.5))
plt.bar([f'L{k}' for k in range(len(histogram))], histogram, color='C0')
for k, n in enumerate(histogram):
    plt.text(k, n, f'{n}', ha='center', va='bottom', fontsize=8)
plt.ylabel('Instances')
plt.title(f'Layer distribution, {count} scenes')
plt.tight_layout()
figures = os.path.join(amodalforge.ROOT_DIR, '..', 'scripts', 'figures')
os.makedirs(figures, exist_ok=True)
plt.savefig(os.path.join(figures, 'layerDistribution.png'), dpi=150)
plt.show()
