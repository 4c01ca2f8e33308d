import sys

from amodalforge.cli import main

sys.exit(main())
