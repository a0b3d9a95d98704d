import sys
from pathlib import Path

# make the shared fixture builder importable from any test module
sys.path.insert(0, str(Path(__file__).parent))
