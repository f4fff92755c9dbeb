# config.py

import logging
import os
from typing import Optional

from dotenv import load_dotenv
from sqlalchemy import create_engine
from sqlalchemy.ext.declarative import declarative_base
from sqlalchemy.orm import sessionmaker

# Load environment variables
load_dotenv()

# --- Logging Configuration ---
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(levelname)s - %(filename)s:%(lineno)d - %(funcName)s - %(message)s'
)
logger = logging.getLogger(__name__)

# --- Run ledger (SQLite through SQLAlchemy) ---
LEDGER_FILE = os.getenv("POTFLOW_LEDGER_FILE", "potflow_runs.db")
LEDGER_ENABLED = os.getenv("POTFLOW_LEDGER", "1") != "0"
DATABASE_URL = f"sqlite:///{LEDGER_FILE}"

engine = create_engine(DATABASE_URL, connect_args={"check_same_thread": False})
SessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=engine)
Base = declarative_base()


def create_sqlite_tables_sync():
    """Creates the ledger tables if they do not exist yet."""
    if not LEDGER_ENABLED:
        return
    Base.metadata.create_all(bind=engine)
    logger.info("Run ledger tables ready.")


# --- Numerics ---
DEFAULT_VOLUME_TOLERANCE = 0.01
DEFAULT_MAX_NEWTON = 100


def resolve_threads(cli_value: Optional[int] = None) -> int:
    """--threads wins, then POTFLOW_THREADS, then a single thread."""
    if cli_value is not None:
        return max(int(cli_value), 1)
    raw = os.getenv("POTFLOW_THREADS")
    if not raw:
        return 1
    try:
        return max(int(raw), 1)
    except ValueError:
        logger.warning(f"Ignoring invalid POTFLOW_THREADS value: {raw!r}")
        return 1
