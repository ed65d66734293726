#!/usr/bin/env python3
"""
isoatlas - Main Entry Point
Charts, QR dynamics and Toda flows on isospectral tridiagonal matrices.

Usage:
    python3 src/isoatlas_main.py eigen --input matrix.json
    python3 src/isoatlas_main.py mesh --spectrum 4,5,7 --output bitorus.obj
"""

import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))
from isoatlas.cli import main

# ============================================================================
# Entry Point
# ============================================================================

if __name__ == "__main__":
    sys.exit(main())
