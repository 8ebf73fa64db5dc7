"""1D wave: transfer convergence, observer decay and the well-posedness constant."""

import sys

from _runner import main

if __name__ == "__main__":
    sys.exit(main("wave1d", __doc__))
