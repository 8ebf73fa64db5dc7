"""Resolvent, cascade, similarity and two-path identities on 50 random nodes."""

import sys

from _runner import main

if __name__ == "__main__":
    sys.exit(main("prop-2.9-identity", __doc__))
