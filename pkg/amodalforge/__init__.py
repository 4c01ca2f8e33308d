import os

ROOT_DIR = os.path.dirname(os.path.abspath(__file__))

DATA_DIR = os.path.join(ROOT_DIR, "data")

SCHEMA_VERSION = 'amodal-forge/1'

# Coverage at or above this value counts as part of a sprite's mask
ALPHA_THRESHOLD = 0.5

DEFAULT_CANVAS = (256, 256)

# Environment variable holding the default worker count
THREADS_ENV = 'AMODALFORGE_THREADS'

from amodalforge import errors
from amodalforge import utils
from amodalforge import config
from amodalforge import tracker
from amodalforge import sprites
from amodalforge import compositor
from amodalforge import orders
from amodalforge import annotate
from amodalforge import datastore
from amodalforge import evalkit
from amodalforge import cli
