# middleware/log_middleware.py

import json
import time
import traceback as tb_module
from datetime import datetime
from typing import Any, Callable, Dict, Optional

from config import LEDGER_ENABLED, SessionLocal
from src.models.RunLog import RunLog
from src.utils import Helper
from src.utils.DB_Utils import describe_exit_code
from src.utils.Errors import PotflowError
from src.utils.Logger import logger

CommandHandler = Callable[[], int]


class LogRunsMiddleware:
    """Records every command invocation in the run ledger."""

    def __init__(self, enabled: Optional[bool] = None):
        self.enabled = LEDGER_ENABLED if enabled is None else enabled

    def _start(self, command: str, arguments: Dict[str, Any]) -> Optional[str]:
        db = SessionLocal()
        try:
            log_record = RunLog(
                id=Helper.generate_id(),
                timestamp=datetime.utcnow(),
                command=command,
                arguments=json.dumps(arguments, sort_keys=True, default=str),
                exit_code=1,  # until the command returns
                status_description="Pending",
                duration="0.0",
                error_message=None,
                traceback=None,
            )
            db.add(log_record)
            db.commit()
            return log_record.id
        except Exception as e:
            logger.error(f"Failed to create run ledger record: {e}")
            db.rollback()
            return None
        finally:
            db.close()

    def _finish(self, record_id: Optional[str], exit_code: int, duration: float,
                error_message: Optional[str] = None, traceback: Optional[str] = None) -> None:
        if record_id is None:
            return
        db = SessionLocal()
        try:
            log_record = db.get(RunLog, record_id)
            if log_record is None:
                return
            log_record.exit_code = exit_code
            log_record.duration = f"{duration:.4f}s"
            log_record.status_description = describe_exit_code(exit_code)
            log_record.error_message = error_message[:500] if error_message else None
            log_record.traceback = traceback
            db.commit()
        except Exception as update_e:
            logger.error(f"Failed to update run ledger record: {update_e}")
            db.rollback()
        finally:
            db.close()

    def dispatch(self, command: str, arguments: Dict[str, Any], call_next: CommandHandler) -> int:
        if not self.enabled:
            return call_next()
        record_id = self._start(command, arguments)
        start_time = time.time()
        try:
            exit_code = call_next()
        except PotflowError as e:
            self._finish(record_id, e.exit_code, time.time() - start_time, error_message=e.detail)
            raise
        except Exception as e:
            self._finish(record_id, 1, time.time() - start_time, error_message=str(e),
                         traceback=tb_module.format_exc())
            raise
        self._finish(record_id, exit_code, time.time() - start_time)
        return exit_code
