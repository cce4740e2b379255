import os
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()

# Environment
ENV = os.getenv("ENV", "prod")

# Project root directory
BASE_DIR = Path(__file__).parent.parent
FIXTURES_DIR = BASE_DIR / "data" / "fixtures"

# Output locations
OUTPUT_DIR = Path(os.getenv("MARKOV_APPROX_OUTPUT_DIR", str(BASE_DIR / "output")))
LOG_DIR = Path(os.getenv("MARKOV_APPROX_LOG_DIR", str(BASE_DIR / "logs")))
LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO").upper()

# Experiment defaults
DEFAULT_SEED = int(os.getenv("MARKOV_APPROX_SEED", 0))
WORKERS = int(os.getenv("MARKOV_APPROX_WORKERS", 1))
