"""2D wave with a non-GCC control box: resolvent slopes and power-law decay."""

import sys

from _runner import main

if __name__ == "__main__":
    sys.exit(main("wave2d", __doc__))
