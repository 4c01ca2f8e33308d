"""
Contains the GenerationConfig dataclass which holds every setting of a dataset generation run, and the preset subclasses IntraClass and InterClass.
"""
import dataclasses
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Optional

import amodalforge
from amodalforge.errors import AmodalForgeError

logger = logging.getLogger(__name__)

MODES = ('intra', 'inter')


class ConfigError(AmodalForgeError, ValueError):
    """
    Invalid generation configuration.
    """


@dataclass
class GenerationConfig:
    """
    Settings for a generation run. All fields have defaults, so GenerationConfig() is a complete configuration. The resolved configuration is recorded in the header of every dataset it produces.

    Attributes
    ----------
    canvas : tuple
        (width, height) of the generated images.
    minInstances, maxInstances : int
        Inclusive range of the number of instances per scene.
    scaleRange : tuple
        Uniform range of the sprite scale factor.
    rotationRange : tuple
        Uniform range of the rotation angle in degrees, half open.
    mode : str
        'intra' draws every sprite of a scene from one category, 'inter' draws each sprite's category independently.
    seed : int
        Global seed of the run.
    count : int
        Number of scenes to generate.
    split : str
        Name of the split being written.
    maxRetries : int
        Number of resamples for a rejected scene before it is skipped.
    minOnCanvas : float
        Minimum fraction of a sprite's mask that must land on the canvas.
    maxSkipFraction : float
        Maximum fraction of scenes that may be skipped before the run is aborted.
    pointsPerInstance : int
        Number of point annotations per instance.
    chromaKey : tuple
        RGB colour keyed out of sprites without an alpha channel.
    keyTolerance : float
        Per-channel tolerance (fraction of 255) of the chroma key.
    spritePartition : dict or None
        Optional split name -> fraction of sprites. When given, the sprites of each category are divided into disjoint pools and the pool named by split is used.
    writeAppearances : bool
        Whether full-appearance crops and clean backgrounds are written.
    """
    canvas: tuple = amodalforge.DEFAULT_CANVAS
    minInstances: int = 2
    maxInstances: int = 5
    scaleRange: tuple = (0.5, 1.5)
    rotationRange: tuple = (0.0, 360.0)
    mode: str = 'intra'
    seed: int = 0
    count: int = 100
    split: str = 'train'
    maxRetries: int = 100
    minOnCanvas: float = 0.25
    maxSkipFraction: float = 0.01
    pointsPerInstance: int = 10
    chromaKey: tuple = (255, 255, 255)
    keyTolerance: float = 0.05
    spritePartition: Optional[dict] = None
    writeAppearances: bool = True
    NAME: str = field(default='', repr=False, compare=False)

    def __post_init__(self):
        # JSON gives lists, keep tuples so configs compare equal after a round trip
        self.canvas = tuple(int(c) for c in self.canvas)
        self.scaleRange = tuple(float(s) for s in self.scaleRange)
        self.rotationRange = tuple(float(r) for r in self.rotationRange)
        self.chromaKey = tuple(int(c) for c in self.chromaKey)
        self.validate()

    def validate(self):
        """
        Check the configuration is usable. Raises a ConfigError describing the first problem found.
        """
        if len(self.canvas) != 2 or min(self.canvas) < 1:
            raise ConfigError(f'canvas must be (width, height) with positive entries, got {self.canvas}')
        if not 1 <= self.minInstances <= self.maxInstances:
            raise ConfigError(f'instance range must satisfy 1 <= min <= max, got [{self.minInstances}, {self.maxInstances}]')
        if not 0 < self.scaleRange[0] <= self.scaleRange[1]:
            raise ConfigError(f'scaleRange must be positive and increasing, got {self.scaleRange}')
        if not self.rotationRange[0] <= self.rotationRange[1]:
            raise ConfigError(f'rotationRange must be increasing, got {self.rotationRange}')
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got '{self.mode}'")
        if self.count < 1:
            raise ConfigError(f'count must be at least 1, got {self.count}')
        if self.maxRetries < 0:
            raise ConfigError(f'maxRetries must be non-negative, got {self.maxRetries}')
        if not 0 < self.minOnCanvas <= 1:
            raise ConfigError(f'minOnCanvas must be in (0, 1], got {self.minOnCanvas}')
        if self.pointsPerInstance < 1:
            raise ConfigError(f'pointsPerInstance must be at least 1, got {self.pointsPerInstance}')
        if self.spritePartition is not None:
            if self.split not in self.spritePartition:
                raise ConfigError(f"split '{self.split}' is not one of the sprite partition names {sorted(self.spritePartition)}")
            if any(f <= 0 for f in self.spritePartition.values()):
                raise ConfigError('sprite partition fractions must be positive')

    def to_dict(self):
        """
        Returns the configuration as a JSON-ready dictionary.
        """
        d = dataclasses.asdict(self)
        del d['NAME']
        for key in ('canvas', 'scaleRange', 'rotationRange', 'chromaKey'):
            d[key] = list(d[key])
        return d

    @classmethod
    def from_dict(cls, d):
        """
        Build a GenerationConfig from a dictionary. Unknown keys are an error so typos in config files do not pass silently.
        """
        known = {f.name for f in dataclasses.fields(cls)} - {'NAME'}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f'Unknown configuration key(s): {", ".join(unknown)}')
        return cls(**d)

    def with_overrides(self, **overrides):
        """
        Returns a copy with the given fields replaced. Overrides set to None are ignored, so unset command line flags keep the file values.
        """
        overrides = {k: v for k, v in overrides.items() if v is not None}
        if overrides:
            logger.debug('Applying configuration overrides %s', overrides)
        d = self.to_dict()
        d.update(overrides)
        return GenerationConfig.from_dict(d)

    def save(self, filename):
        """
        Write the configuration to a JSON file.
        """
        with open(filename, 'w') as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)


def load_config(filename):
    """
    Load a GenerationConfig from a JSON file.

    Parameters
    ----------
    filename : string
        Path to the JSON configuration file.

    Returns
    -------
    config : GenerationConfig
        The loaded configuration, with defaults for any fields not present in the file.
    """
    with open(filename) as f:
        try:
            d = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f'Configuration file {filename} is not valid JSON: {e}') from e
    if not isinstance(d, dict):
        raise ConfigError(f'Configuration file {filename} must contain a JSON object')
    return GenerationConfig.from_dict(d)


def default_workers():
    """
    Default number of worker threads. Read from the AMODALFORGE_THREADS environment variable, falling back to the CPU count minus two (at least one).
    """
    env = os.environ.get(amodalforge.THREADS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f'{amodalforge.THREADS_ENV} must be an integer, got {env!r}')
        return max(1, n)
    return max(1, (os.cpu_count() or 1) - 2)


class IntraClass(GenerationConfig):
    """
    Preset: every scene holds instances of a single category occluding each other.
    """

    def __init__(self, **kwargs):
        super().__init__(mode='intra', NAME='IntraClass', **kwargs)


class InterClass(GenerationConfig):
    """
    Preset: each instance's category is drawn independently, giving mutual occlusion between categories.
    """

    def __init__(self, **kwargs):
        super().__init__(mode='inter', NAME='InterClass', **kwargs)
