"""Thread-sweep benchmarking, speedup computation, and scaling reports.

Benchmark programs self-report elapsed wall time by printing
``ELAPSED_SECONDS=<float>`` on their final line; the runner aggregates
repetitions by minimum. Runs are strictly serialized through a lock file
so no other benchmark shares the machine.
"""

from __future__ import annotations

import csv
import logging
import os
import re
import subprocess
from dataclasses import dataclass
from pathlib import Path

from .errors import BenchError, InvalidInputError, LockHeldError, ParseError
from .validation import OMP_THREADS_VAR

log = logging.getLogger(__name__)

DEFAULT_THREAD_SWEEP = (1, 2, 4, 8)
DEFAULT_REPETITIONS = 3
DEFAULT_BENCH_TIMEOUT = 600.0

_ELAPSED_RE = re.compile(r"^ELAPSED_SECONDS=([0-9.eE+-]+)\s*$", re.MULTILINE)

MEASURED = "Measured"
IMPORTED = "Imported"


@dataclass
class BenchRecord:
    case_id: str
    threads: int
    wall_seconds: float
    repetitions: int
    source: str = MEASURED
    oversubscribed: bool = False

    def validate(self) -> None:
        if self.threads < 1:
            raise InvalidInputError(f"{self.case_id}: threads must be positive")
        if not self.wall_seconds > 0:
            raise InvalidInputError(f"{self.case_id}: wall_seconds must be > 0")
        if self.repetitions < 1:
            raise InvalidInputError(f"{self.case_id}: repetitions must be positive")


@dataclass
class SpeedupRow:
    case_id: str
    threads: int
    speedup: float


class BenchLock:
    """Exclusive-run lock; refuses to start while another runner is alive."""

    def __init__(self, path: Path | str):
        self.path = Path(path)
        self._fd: int | None = None

    def __enter__(self) -> "BenchLock":
        self.path.parent.mkdir(parents=True, exist_ok=True)
        for _ in range(2):
            try:
                self._fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
                os.write(self._fd, str(os.getpid()).encode())
                return self
            except FileExistsError:
                if self._holder_alive():
                    raise LockHeldError(
                        f"benchmark lock {self.path} is held by a live process"
                    ) from None
                log.warning("removing stale benchmark lock %s", self.path)
                self.path.unlink(missing_ok=True)
        raise LockHeldError(f"could not acquire benchmark lock {self.path}")

    def _holder_alive(self) -> bool:
        try:
            pid = int(self.path.read_text().strip())
            os.kill(pid, 0)
            return True
        except (OSError, ValueError):
            return False

    def __exit__(self, *exc_info) -> None:
        if self._fd is not None:
            os.close(self._fd)
            self._fd = None
        self.path.unlink(missing_ok=True)


def parse_elapsed_seconds(output: str) -> float:
    matches = _ELAPSED_RE.findall(output)
    if not matches:
        raise ParseError("benchmark output has no ELAPSED_SECONDS=<float> line")
    try:
        return float(matches[-1])
    except ValueError as exc:
        raise ParseError(f"bad ELAPSED_SECONDS value {matches[-1]!r}") from exc


def run_sweep(
    case_id: str,
    binary: Path | str,
    thread_counts=DEFAULT_THREAD_SWEEP,
    repetitions: int = DEFAULT_REPETITIONS,
    *,
    input_args: list[str] | None = None,
    timeout: float = DEFAULT_BENCH_TIMEOUT,
) -> list[BenchRecord]:
    """Time the binary at each thread count; record the minimum of the reps."""
    if repetitions < 1:
        raise InvalidInputError("repetitions must be >= 1")
    if not thread_counts:
        raise InvalidInputError("thread_counts must be non-empty")
    input_args = list(input_args or [])
    cores = os.cpu_count() or 1
    oversubscribed = max(thread_counts) > cores
    if oversubscribed:
        log.warning(
            "host has %d logical cores but the sweep requests up to %d threads; "
            "records are tagged oversubscribed", cores, max(thread_counts),
        )
    records: list[BenchRecord] = []
    for threads in thread_counts:
        times: list[float] = []
        for _ in range(repetitions):
            env = dict(os.environ)
            env[OMP_THREADS_VAR] = str(threads)
            try:
                proc = subprocess.run(
                    [str(binary), *input_args],
                    capture_output=True,
                    text=True,
                    timeout=timeout,
                    env=env,
                )
            except subprocess.TimeoutExpired as exc:
                raise BenchError(f"{case_id}: benchmark timed out at {threads} threads") from exc
            if proc.returncode != 0:
                raise BenchError(
                    f"{case_id}: benchmark exited {proc.returncode} at {threads} threads: "
                    f"{proc.stderr.strip()[:200]}"
                )
            elapsed = parse_elapsed_seconds(proc.stdout)
            if not elapsed > 0:
                raise BenchError(f"{case_id}: non-positive elapsed time {elapsed}")
            times.append(elapsed)
        record = BenchRecord(
            case_id=case_id,
            threads=threads,
            wall_seconds=min(times),
            repetitions=repetitions,
            source=MEASURED,
            oversubscribed=oversubscribed,
        )
        record.validate()
        records.append(record)
    return records


def compute_speedups(records: list[BenchRecord]) -> list[SpeedupRow]:
    """speedup(t) = wall(1) / wall(t), per case; never clamped."""
    by_case: dict[str, dict[int, float]] = {}
    case_order: list[str] = []
    for record in records:
        record.validate()
        per_case = by_case.setdefault(record.case_id, {})
        if record.threads in per_case:
            raise InvalidInputError(
                f"{record.case_id}: duplicate record for {record.threads} threads"
            )
        if record.case_id not in case_order:
            case_order.append(record.case_id)
        per_case[record.threads] = record.wall_seconds
    rows: list[SpeedupRow] = []
    for case_id in case_order:
        per_case = by_case[case_id]
        if 1 not in per_case:
            raise InvalidInputError(f"{case_id}: no 1-thread baseline record")
        baseline = per_case[1]
        for threads in sorted(per_case):
            rows.append(SpeedupRow(case_id, threads, baseline / per_case[threads]))
    return rows


def import_records(csv_path: Path | str) -> list[BenchRecord]:
    """Load (case_id, threads, wall_seconds) rows as Imported records."""
    path = Path(csv_path)
    records: list[BenchRecord] = []
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return []
        required = {"case_id", "threads", "wall_seconds"}
        missing = required - set(reader.fieldnames)
        if missing:
            raise ParseError(f"{path}: missing CSV columns: {sorted(missing)}")
        for row in reader:
            lineno = reader.line_num
            try:
                record = BenchRecord(
                    case_id=row["case_id"].strip(),
                    threads=int(row["threads"]),
                    wall_seconds=float(row["wall_seconds"]),
                    repetitions=int(row.get("repetitions") or 1),
                    source=IMPORTED,
                )
                record.validate()
            except (TypeError, ValueError, InvalidInputError) as exc:
                raise ParseError(f"{path} line {lineno}: {exc}") from exc
            records.append(record)
    return records


# --------------------------------------------------------------------------
# Report rendering
# --------------------------------------------------------------------------

def write_records_csv(records: list[BenchRecord], path: Path | str) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["case_id", "threads", "wall_seconds", "repetitions", "source"])
        for r in records:
            writer.writerow([r.case_id, r.threads, f"{r.wall_seconds:.6f}", r.repetitions, r.source])


def write_speedups_csv(rows: list[SpeedupRow], path: Path | str) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["case_id", "threads", "speedup"])
        for row in rows:
            writer.writerow([row.case_id, row.threads, f"{row.speedup:.3f}"])


def write_speedup_series(rows: list[SpeedupRow], path: Path | str) -> None:
    """Plot-ready wide layout: one row per thread count, one column per case."""
    cases: list[str] = []
    threads: list[int] = []
    values: dict[tuple[str, int], float] = {}
    for row in rows:
        if row.case_id not in cases:
            cases.append(row.case_id)
        if row.threads not in threads:
            threads.append(row.threads)
        values[(row.case_id, row.threads)] = row.speedup
    threads.sort()
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threads"] + cases)
        for t in threads:
            writer.writerow(
                [t] + [f"{values[(c, t)]:.3f}" if (c, t) in values else "" for c in cases]
            )


def render_runtime_table(records: list[BenchRecord]) -> str:
    """Plain-text runtimes table: one case per row, one column per thread count."""
    cases: list[str] = []
    threads: list[int] = []
    walls: dict[tuple[str, int], float] = {}
    for r in records:
        if r.case_id not in cases:
            cases.append(r.case_id)
        if r.threads not in threads:
            threads.append(r.threads)
        walls[(r.case_id, r.threads)] = r.wall_seconds
    threads.sort()
    header = ["Case"] + [f"{t} thread{'s' if t != 1 else ''} (s)" for t in threads]
    rows = [header]
    for case_id in cases:
        rows.append(
            [case_id]
            + [
                f"{walls[(case_id, t)]:.3f}" if (case_id, t) in walls else "-"
                for t in threads
            ]
        )
    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
    lines = []
    for idx, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip())
        if idx == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"
