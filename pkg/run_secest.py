#!/usr/bin/env python3
"""
secest command-line entry point.

Usage Examples:
    # Design report for a system
    python run_secest.py check --system sys.json --window 8

    # Quadrotor man-in-the-middle scenario with five measurements
    python run_secest.py uav --scenario mitm --ny 5

    # Success-rate sweep with invariant checks
    python run_secest.py --self-check montecarlo --trials 100
"""

import sys
from pathlib import Path

# Add project root to Python path
project_root = Path(__file__).parent
sys.path.insert(0, str(project_root))

from secest.cli import main


if __name__ == "__main__":
    sys.exit(main())
