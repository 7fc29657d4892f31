"""
Entry point for running the command-line interface from a checkout.

Usage:
    python scripts/rgsc_lab.py train --method rgsc --seed 0
    python scripts/rgsc_lab.py --help
"""

import sys
from pathlib import Path

# Add project root to Python path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from src.cli import main


if __name__ == "__main__":
    main()
