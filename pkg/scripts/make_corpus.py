#!/usr/bin/env python3
"""Write the standard synthetic corpus to disk for configs/corpus.json."""

import sys

from mr2track.cli import main

if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else "data/corpus"
    sys.exit(main(["synth", "corpus", out, *sys.argv[2:]]))
