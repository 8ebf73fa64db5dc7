"""Closed-loop abscissa against the two diagonal blocks on random stable pairs."""

import sys

from _runner import main

if __name__ == "__main__":
    sys.exit(main("thm-3.1-triangular", __doc__))
