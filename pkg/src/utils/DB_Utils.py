from typing import List, Optional

from config import SessionLocal
from src.models.RunLog import RunLog


def recent_runs(limit: int = 20, command: Optional[str] = None) -> List[RunLog]:
    db = SessionLocal()
    try:
        query = db.query(RunLog)
        if command:
            query = query.filter(RunLog.command == command)
        return query.order_by(RunLog.timestamp.desc()).limit(limit).all()
    finally:
        db.close()


def describe_exit_code(exit_code: int) -> str:
    return {
        0: "Success",
        2: "Config Error",
        3: "Non-Convergence",
        4: "Validation Failure",
    }.get(exit_code, "Error")
