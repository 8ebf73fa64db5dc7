"""Cascade block-resolvent formula and the resolvent estimate constant on random pairs."""

import sys

from _runner import main

if __name__ == "__main__":
    sys.exit(main("prop-2.11-cascade", __doc__))
