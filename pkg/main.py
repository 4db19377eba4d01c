#!/usr/bin/env python3
"""
cutlocus: cut loci, split loci and conjugate descending curves
Main entry point for the application
"""

import logging
import sys

from src.cli import main

if __name__ == "__main__":
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        print("\n\nComputation cancelled by user", file=sys.stderr)
        sys.exit(130)
    except Exception:
        # CutLocusError is handled inside main(); anything reaching here is a bug
        logging.getLogger('cutlocus').exception("unexpected failure")
        sys.exit(1)
