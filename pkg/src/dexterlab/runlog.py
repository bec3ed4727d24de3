"""Run-directory outputs: JSONL training log, results CSV, and the writer lock."""

from __future__ import annotations

import csv
import json
import os
from pathlib import Path
from typing import Any, Iterator, Optional, Union

from .errors import RunLockedError

LOCK_NAME = ".dexterlab.lock"

# ablation columns, then bookkeeping
RESULT_COLUMNS = (
    "network_size",
    "max_timesteps",
    "action_masking",
    "curriculum",
    "dynamic_reward",
    "early_reward",
    "button_radius_mm",
    "success_rate",
    "avg_errors",
    "avg_time",
    "n_episodes",
    "status",
    "seed",
    "run_dir",
)


class JsonlLog:
    """Append-only JSON-lines file, flushed after every record."""

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)

    def write(self, record: dict[str, Any]) -> None:
        with open(self.path, "a", encoding="utf-8") as f:
            f.write(json.dumps(record, sort_keys=True) + "\n")
            f.flush()

    def read(self) -> list[dict[str, Any]]:
        if not self.path.exists():
            return []
        with open(self.path, encoding="utf-8") as f:
            return [json.loads(line) for line in f if line.strip()]

    def __iter__(self) -> Iterator[dict[str, Any]]:
        return iter(self.read())


def _cell(value: Any) -> Any:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "yes" if value else "no"
    return value


def append_result(path: Union[str, Path], row: dict[str, Any]) -> None:
    """Append one row to the results CSV, writing the header if the file is new."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    unknown = set(row) - set(RESULT_COLUMNS)
    if unknown:
        raise KeyError(f"unknown result columns: {sorted(unknown)}")
    new_file = not path.exists() or path.stat().st_size == 0
    with open(path, "a", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=RESULT_COLUMNS)
        if new_file:
            writer.writeheader()
        writer.writerow({k: _cell(row.get(k)) for k in RESULT_COLUMNS})


def read_results(path: Union[str, Path]) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


class RunLock:
    """
    Exclusive ownership of a run directory through an O_EXCL lock file.

    Raises:
        RunLockedError: If the lock file already exists.
    """

    def __init__(self, run_dir: Union[str, Path]):
        self.path = Path(run_dir) / LOCK_NAME
        self._fd: Optional[int] = None

    def acquire(self) -> "RunLock":
        self.path.parent.mkdir(parents=True, exist_ok=True)
        try:
            self._fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise RunLockedError(
                f"run directory {self.path.parent} is in use (remove {self.path.name} if no run is active)"
            ) from None
        os.write(self._fd, str(os.getpid()).encode("ascii"))
        return self

    def release(self) -> None:
        if self._fd is None:
            return
        os.close(self._fd)
        self._fd = None
        self.path.unlink(missing_ok=True)

    def __enter__(self) -> "RunLock":
        return self.acquire()

    def __exit__(self, *exc) -> None:
        self.release()
