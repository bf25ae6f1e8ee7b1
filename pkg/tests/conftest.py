"""Configuration file for the dfo-tr tests."""

import sys
from pathlib import Path

module_path = Path(__file__).parent.parent / "src"
sys.path.insert(0, str(module_path))
