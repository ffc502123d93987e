"""Incremental first-order oracle accounting and solver trace recording.

An IFO query fetches one sample's loss value and gradient; the counter is
the unit of computational cost shared by every solver in the package.
Loss-gradient touches and curvature-row (Hessian-vector) touches are kept
in separate tallies so both accountings are reportable; ``total`` is their
sum, with a curvature-row touch priced the same as a loss touch.

Instrumentation is free: objective values and gradient norms written to a
trace never pass through a counter.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field

import numpy as np

CSV_HEADER = "iter,ifo,wall_ms,objective,subopt,grad_norm"


class IfoCounter:
    """Monotone tally of oracle touches, safely incrementable across threads."""

    def __init__(self):
        self._lock = threading.Lock()
        self.loss_touches = 0
        self.hvp_touches = 0

    def add_loss(self, k: int) -> None:
        with self._lock:
            self.loss_touches += int(k)

    def add_hvp(self, k: int) -> None:
        with self._lock:
            self.hvp_touches += int(k)

    def add(self, kind: str, k: int) -> None:
        if kind == "loss":
            self.add_loss(k)
        elif kind == "hvp":
            self.add_hvp(k)
        else:
            raise ValueError(f"unknown touch kind {kind!r}")

    @property
    def total(self) -> int:
        return self.loss_touches + self.hvp_touches

    def snapshot(self) -> tuple[int, int]:
        with self._lock:
            return self.loss_touches, self.hvp_touches


@dataclass(frozen=True)
class TraceRecord:
    outer_iter: int
    ifo_total: int
    wall_ms: float
    objective: float
    suboptimality: float | None
    grad_norm: float


@dataclass
class SolverTrace:
    """Time-stamped (iteration, IFO, objective, gradient norm) sequence.

    ``reference`` is the optimal objective value F(theta*) when one is
    attached; records then carry ``objective - reference`` as suboptimality.
    A trace is owned by exactly one solver run.
    """

    solver: str
    config: dict = field(default_factory=dict)
    seed: int | None = None
    reference: float | None = None
    records: list[TraceRecord] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    _started: float = field(default_factory=time.perf_counter, repr=False)

    def record(self, problem, theta, counter, outer_iter=None):
        """Append one record; objective/gradient evaluation is uncounted."""
        objective = problem.objective(theta)
        grad_norm = float(np.linalg.norm(problem.gradient_uncounted(theta)))
        subopt = None if self.reference is None else objective - self.reference
        rec = TraceRecord(
            outer_iter=len(self.records) if outer_iter is None else outer_iter,
            ifo_total=counter.total,
            wall_ms=(time.perf_counter() - self._started) * 1000.0,
            objective=objective,
            suboptimality=subopt,
            grad_norm=grad_norm,
        )
        if self.records and rec.ifo_total < self.records[-1].ifo_total:
            raise RuntimeError("IFO totals must be nondecreasing across records")
        self.records.append(rec)
        return rec

    @property
    def final(self) -> TraceRecord:
        return self.records[-1]

    def ifo_to_suboptimality(self, eps: float) -> int | None:
        """IFO count at the first record whose suboptimality is <= eps."""
        for rec in self.records:
            if rec.suboptimality is not None and rec.suboptimality <= eps:
                return rec.ifo_total
        return None

    def to_csv(self, path) -> None:
        with open(path, "wt") as handle:
            handle.write(CSV_HEADER + "\n")
            for rec in self.records:
                subopt = "" if rec.suboptimality is None else f"{rec.suboptimality:.17g}"
                handle.write(
                    f"{rec.outer_iter},{rec.ifo_total},{rec.wall_ms:.17g},"
                    f"{rec.objective:.17g},{subopt},{rec.grad_norm:.17g}\n"
                )


def read_trace_csv(path) -> list[TraceRecord]:
    records = []
    with open(path, "rt") as handle:
        header = handle.readline().strip()
        if header != CSV_HEADER:
            raise ValueError(f"{path}: unexpected trace header {header!r}")
        for line in handle:
            it, ifo, wall, obj, subopt, gnorm = line.rstrip("\n").split(",")
            records.append(
                TraceRecord(
                    outer_iter=int(it),
                    ifo_total=int(ifo),
                    wall_ms=float(wall),
                    objective=float(obj),
                    suboptimality=float(subopt) if subopt else None,
                    grad_norm=float(gnorm),
                )
            )
    return records


def traces_equal(path_a, path_b, ignore_wall=True) -> bool:
    """Field-wise equality of two trace CSVs.

    Wall-clock columns are informative only and excluded by default; all
    other fields must match exactly (textual comparison of the 17-digit
    decimal serialization).
    """
    with open(path_a) as fa, open(path_b) as fb:
        lines_a, lines_b = fa.readlines(), fb.readlines()
    if len(lines_a) != len(lines_b):
        return False
    for la, lb in zip(lines_a, lines_b):
        fa_fields, fb_fields = la.rstrip("\n").split(","), lb.rstrip("\n").split(",")
        if len(fa_fields) != len(fb_fields):
            return False
        for col, (x, y) in enumerate(zip(fa_fields, fb_fields)):
            if ignore_wall and col == 2 and x != CSV_HEADER.split(",")[2]:
                continue
            if x != y:
                return False
    return True
