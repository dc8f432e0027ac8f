# core/database/db_manager.py
import json
import sqlite3
from pathlib import Path
from typing import Any, Dict, List, Optional

from config.settings import Config
from core.database.models import AuditRun
from utils.logger import get_logger

logger = get_logger(__name__)


class DBManager:
    """sqlite history of CLI audit runs (command, parameters, inputs, output, exit code)."""

    def __init__(self, db_path: Optional[str] = None):
        self.db_path = db_path or Config.DATA.runs_db
        if not self.db_path:
            raise ValueError("no audit-run database configured (set FEENORM_RUNS_DB or --runs-db)")
        Path(self.db_path).parent.mkdir(parents=True, exist_ok=True)
        self.init_db()

    def init_db(self):
        conn = sqlite3.connect(self.db_path)
        c = conn.cursor()
        c.execute("""
            CREATE TABLE IF NOT EXISTS audit_runs (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                command TEXT NOT NULL,
                inputs TEXT,
                parameters_json TEXT NOT NULL,
                output TEXT,
                exit_code INTEGER NOT NULL,
                created_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP
            )
        """)
        conn.commit()
        conn.close()
        logger.debug(f"Audit-run history ready at {self.db_path}")

    def _get_connection(self):
        try:
            return sqlite3.connect(self.db_path)
        except Exception as e:
            logger.error(f"❌ Failed to connect to DB: {e}")
            raise

    def save_run(self, run: AuditRun) -> int:
        conn = self._get_connection()
        c = conn.cursor()
        try:
            c.execute("""
                INSERT INTO audit_runs (command, inputs, parameters_json, output, exit_code)
                VALUES (?, ?, ?, ?, ?)
            """, (
                run.command,
                run.inputs,
                json.dumps(run.parameters, sort_keys=True, default=str),
                run.output,
                run.exit_code,
            ))
            conn.commit()
            run.run_id = c.lastrowid
            logger.debug(f"Run saved: #{run.run_id} {run.command} -> {run.exit_code}")
            return run.run_id
        except Exception as e:
            logger.error(f"❌ Save run failed: {e}")
            raise
        finally:
            conn.close()

    def get_recent_runs(self, limit: int = 10) -> List[Dict[str, Any]]:
        conn = self._get_connection()
        conn.row_factory = sqlite3.Row
        c = conn.cursor()
        try:
            c.execute("""
                SELECT id, command, inputs, parameters_json, output, exit_code, created_at
                FROM audit_runs
                ORDER BY id DESC
                LIMIT ?
            """, (limit,))
            return [dict(row) for row in c.fetchall()]
        except Exception as e:
            logger.error(f"❌ get_recent_runs failed: {e}")
            return []
        finally:
            conn.close()
