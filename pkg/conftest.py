# conftest.py (project root): keeps the flat packages importable under pytest
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent))
