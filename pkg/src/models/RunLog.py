from datetime import datetime
from sqlalchemy import Column, Integer, DateTime, String, Text
from config import Base


class RunLog(Base):
    __tablename__ = "run_logs"
    id = Column(String, primary_key=True, index=True)
    timestamp = Column(DateTime, default=datetime.utcnow)
    command = Column(String)
    arguments = Column(Text, nullable=True)
    exit_code = Column(Integer)
    status_description = Column(String)
    duration = Column(String)
    error_message = Column(Text, nullable=True)
    traceback = Column(Text, nullable=True)
