import csv
import io
import logging
from logging.handlers import RotatingFileHandler

from config.settings import LOG_DIR, LOG_LEVEL


class CsvFormatter(logging.Formatter):
    """
    One quoted CSV row per record, tagged with the subcommand being run.

    Does NOT append a trailing newline (handler.terminator supplies that).
    """

    COLUMNS = ["timestamp", "level", "subcommand", "logger", "location", "message"]

    def __init__(self, subcommand: str = ""):
        super().__init__()
        self.subcommand = subcommand

    def format(self, record):
        row = [
            self.formatTime(record),
            record.levelname,
            self.subcommand,
            record.name,
            f"{record.module}:{record.lineno}",
            record.getMessage(),
        ]
        sio = io.StringIO()
        csv.writer(sio).writerow(row)
        return sio.getvalue().rstrip("\r\n")


def setup_logger(name: str, level: str | None = None, subcommand: str = "") -> logging.Logger:
    LOG_DIR.mkdir(parents=True, exist_ok=True)

    logger = logging.getLogger(name)
    logger.setLevel(level or LOG_LEVEL)

    # Avoid adding handlers multiple times (useful in REPL/tests)
    if logger.handlers:
        for handler in logger.handlers:
            if isinstance(handler.formatter, CsvFormatter):
                handler.formatter.subcommand = subcommand
        return logger

    log_file = LOG_DIR / "markov_approx.log"

    # Write header if file is new/empty
    if not log_file.exists() or log_file.stat().st_size == 0:
        with log_file.open("a", encoding="utf-8", newline="") as f:
            csv.writer(f).writerow(CsvFormatter.COLUMNS)

    file_handler = RotatingFileHandler(
        filename=str(log_file),
        maxBytes=10 * 1024 * 1024,
        backupCount=5,
        encoding="utf-8",
    )
    file_handler.terminator = "\n"

    # Console goes to stderr; stdout carries the CLI summary line
    console_handler = logging.StreamHandler()

    file_handler.setFormatter(CsvFormatter(subcommand))
    console_handler.setFormatter(
        logging.Formatter("%(asctime)s - %(name)s - %(levelname)s - %(message)s")
    )

    logger.addHandler(file_handler)
    logger.addHandler(console_handler)

    # Prevent double logging if root logger also handles records
    logger.propagate = False

    return logger


def get_logger(logger: logging.Logger | None, name: str) -> logging.Logger:
    """Return the injected logger, or a quiet module logger when none was given."""
    return logger if logger is not None else logging.getLogger(f"markov_approx.{name}")
