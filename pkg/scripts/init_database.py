"""
Run Ledger Setup Script
Creates the ledger schema at the configured (or given) database URL
"""

import argparse
import sys
from pathlib import Path

# Add project root to path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from loguru import logger  # noqa: E402
from sqlalchemy.exc import SQLAlchemyError  # noqa: E402

from core.data.database import Run, get_session, init_database  # noqa: E402


def setup_database(database_url: str | None = None) -> bool:
    """Create tables and report how many runs are already recorded"""
    try:
        init_database(database_url)
    except SQLAlchemyError as e:
        logger.error(f"ledger_init_failed error={e}")
        return False

    session = get_session()
    try:
        logger.info(f"ledger_runs count={session.query(Run).count()}")
    finally:
        session.close()
    return True


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--url", help="SQLAlchemy database URL (defaults to storage.database_url)")
    args = parser.parse_args()
    return 0 if setup_database(args.url) else 1


if __name__ == "__main__":
    sys.exit(main())
