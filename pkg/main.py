"""
smctrl - Main Entry Point

Runs the smctrl command line from a source checkout without installing the package.

Usage:
    python main.py verify-example --alpha 2.0 --T 1.0 --dt 0.001 --paths 100000 --seed 1
    python main.py simulate --model src/smctrl/data/example_model.json --start x1:0.0 \
        --horizon 1.0 --paths 1000 --seed 42 --out runs/paths.csv
"""

import sys
from pathlib import Path

# =============================================================================
# Configuration
# =============================================================================

SRC_DIR = Path(__file__).parent / "src"
if str(SRC_DIR) not in sys.path:
    sys.path.insert(0, str(SRC_DIR))

from smctrl.cli import main  # noqa: E402

if __name__ == "__main__":
    main()
