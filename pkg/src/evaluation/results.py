"""Results and per-query rank CSV files."""

import csv
import logging
from pathlib import Path

from pydantic import BaseModel, Field

from src.evaluation.ranking import RankResult

logger = logging.getLogger(__name__)

RESULT_COLUMNS = ("method", "task", "mode", "mr", "hits1", "hits3", "hits10", "queries", "skipped")
RANK_COLUMNS = ("method", "task", "mode", "query", "rank")


class ResultRow(BaseModel):
    method: str
    task: str
    mode: str
    mr: float = Field(ge=1.0)
    hits1: float = Field(ge=0.0, le=1.0)
    hits3: float = Field(ge=0.0, le=1.0)
    hits10: float = Field(ge=0.0, le=1.0)
    queries: int = Field(ge=0)
    skipped: int = Field(ge=0)

    @classmethod
    def from_result(cls, method: str, result: RankResult) -> "ResultRow":
        m = result.metrics
        return cls(
            method=method,
            task=result.task.value,
            mode=result.mode,
            mr=m.mr,
            hits1=m.hits1,
            hits3=m.hits3,
            hits10=m.hits10,
            queries=result.queries,
            skipped=result.skipped,
        )

    def csv_row(self) -> dict[str, str]:
        # repr keeps the shortest round-trip form of every float
        return {
            key: repr(value) if isinstance(value, float) else str(value)
            for key, value in self.model_dump().items()
        }


def result_rows(method: str, results: list[RankResult]) -> list[ResultRow]:
    return [ResultRow.from_result(method, result) for result in results]


def write_results(path: str | Path, rows: list[ResultRow]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=RESULT_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(row.csv_row())
    logger.info(f"[EVAL] ✓ wrote {len(rows)} result rows to {path}")
    return path


def read_results(path: str | Path) -> list[ResultRow]:
    with open(path, encoding="utf-8", newline="") as f:
        return [ResultRow.model_validate(row) for row in csv.DictReader(f)]


def write_rank_dump(path: str | Path, method: str, results: list[RankResult]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(RANK_COLUMNS)
        for result in results:
            for label, rank in zip(result.labels, result.ranks.tolist()):
                writer.writerow([method, result.task.value, result.mode, label, rank])
    logger.info(f"[EVAL] ✓ wrote per-query ranks to {path}")
    return path
