# core/errors.py
from typing import Optional


class AuditError(Exception):
    """Base class for audit failures the CLI knows how to report."""


class DatasetFormatError(AuditError):
    def __init__(self, message: str, file: Optional[str] = None, line: Optional[int] = None):
        self.file = file
        self.line = line
        where = f"{file}:{line}: " if file and line else (f"{file}: " if file else "")
        super().__init__(f"{where}{message}")


class DegenerateParameterError(AuditError, ValueError):
    pass


class IndexOutOfRangeError(AuditError, ValueError):
    pass


class EmptyBlockError(AuditError):
    """Block has no eligible (non-CPFP) transactions."""


class EmptyCohortError(AuditError):
    pass


class EmptyWindowError(AuditError):
    pass


class PendingTransactionError(AuditError):
    def __init__(self, txid: str, blocks_elapsed: int):
        self.txid = txid
        self.blocks_elapsed = blocks_elapsed
        super().__init__(f"{txid} is still pending after {blocks_elapsed} blocks")
