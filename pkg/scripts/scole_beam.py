"""SCOLE beam: passivity, spectrum asymptotics, series transfer, resolvent slope and the collocated bound."""

import sys

from _runner import main

if __name__ == "__main__":
    sys.exit(main("scole", __doc__))
