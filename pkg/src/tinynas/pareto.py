"""Pareto front over (accuracy up, MACs down, params down).

Single-writer front owned by the search loop; readers take snapshots.
"""
from __future__ import annotations

from dataclasses import dataclass


class EmptyFrontError(ValueError):
    pass


@dataclass(frozen=True)
class CandidateRecord:
    candidate_id: str
    arch_hash: str
    accuracy: float  # percent on the test split, stored at 2 decimals
    macs: int
    params: int
    peak_sram_bytes: int
    phase: str = "mini"  # mini | full | kd
    iteration: int = 0
    status: str = "evaluated"  # evaluated | rejected_gate | duplicate

    def __post_init__(self):
        if not (0.0 <= self.accuracy <= 100.0):
            raise ValueError(f"accuracy out of range: {self.accuracy}")
        if self.status == "evaluated" and (self.macs <= 0 or self.params <= 0):
            raise ValueError("evaluated records need positive macs and params")

    @property
    def metrics(self) -> tuple[float, int, int]:
        return (self.accuracy, self.macs, self.params)

    def to_document(self) -> dict:
        return {
            "candidate_id": self.candidate_id,
            "arch_hash": self.arch_hash,
            "accuracy": self.accuracy,
            "macs": self.macs,
            "params": self.params,
            "peak_sram_bytes": self.peak_sram_bytes,
            "phase": self.phase,
            "iteration": self.iteration,
            "status": self.status,
        }

    @classmethod
    def from_document(cls, doc: dict) -> "CandidateRecord":
        return cls(**doc)


def dominates(a: CandidateRecord, b: CandidateRecord) -> bool:
    """True iff a is no worse than b everywhere and strictly better somewhere."""
    no_worse = a.accuracy >= b.accuracy and a.macs <= b.macs and a.params <= b.params
    strictly = a.accuracy > b.accuracy or a.macs < b.macs or a.params < b.params
    return no_worse and strictly


@dataclass(frozen=True)
class FrontStatistics:
    count: int
    accuracy_min: float
    accuracy_max: float
    accuracy_mean: float
    macs_min: int
    macs_max: int
    macs_mean: float
    params_min: int
    params_max: int
    params_mean: float

    def to_document(self) -> dict:
        return {
            "count": self.count,
            "accuracy": {"min": self.accuracy_min, "max": self.accuracy_max, "mean": self.accuracy_mean},
            "macs": {"min": self.macs_min, "max": self.macs_max, "mean": self.macs_mean},
            "params": {"min": self.params_min, "max": self.params_max, "mean": self.params_mean},
        }


def format_stat_triple(lo: float, hi: float, mean: float) -> str:
    """Render a metric summary as ``[Min, Max] Avg``, e.g. ``[38.68, 68.58] 60.50``."""
    return f"[{lo:.2f}, {hi:.2f}] {mean:.2f}"


@dataclass(frozen=True)
class FrontDelta:
    added: bool
    removed: tuple[CandidateRecord, ...] = ()


class ParetoFront:
    """Mutable non-dominated set plus the best-accuracy tracker."""

    def __init__(self):
        self.members: list[CandidateRecord] = []
        self.best_accuracy: CandidateRecord | None = None

    def update(self, rec: CandidateRecord) -> FrontDelta:
        """Offer a record to the front.

        The best-accuracy tracker sees every offered record, even ones that
        never enter the front. A record whose metric triple and arch hash both
        match an existing member is ignored. Dominated newcomers are rejected;
        members dominated by the newcomer are removed.
        """
        if rec.status != "evaluated":
            raise ValueError("only evaluated records enter the front")
        if self.best_accuracy is None or rec.accuracy > self.best_accuracy.accuracy:
            self.best_accuracy = rec
        for m in self.members:
            if m.arch_hash == rec.arch_hash and m.metrics == rec.metrics:
                return FrontDelta(added=False)
        if any(dominates(m, rec) for m in self.members):
            return FrontDelta(added=False)
        removed = tuple(m for m in self.members if dominates(rec, m))
        if removed:
            self.members = [m for m in self.members if not dominates(rec, m)]
        self.members.append(rec)
        return FrontDelta(added=True, removed=removed)

    def statistics(self) -> FrontStatistics:
        if not self.members:
            raise EmptyFrontError("front has no members")
        accs = [m.accuracy for m in self.members]
        macs = [m.macs for m in self.members]
        params = [m.params for m in self.members]
        n = len(self.members)
        return FrontStatistics(
            count=n,
            accuracy_min=min(accs),
            accuracy_max=max(accs),
            accuracy_mean=sum(accs) / n,
            macs_min=min(macs),
            macs_max=max(macs),
            macs_mean=sum(macs) / n,
            params_min=min(params),
            params_max=max(params),
            params_mean=sum(params) / n,
        )

    def to_document(self) -> dict:
        members = sorted(self.members, key=lambda m: m.candidate_id)
        doc = {
            "members": [m.to_document() for m in members],
            "best_accuracy": self.best_accuracy.to_document() if self.best_accuracy else None,
        }
        doc["statistics"] = self.statistics().to_document() if self.members else None
        return doc

    @classmethod
    def from_document(cls, doc: dict) -> "ParetoFront":
        front = cls()
        front.members = [CandidateRecord.from_document(m) for m in doc["members"]]
        if doc.get("best_accuracy"):
            front.best_accuracy = CandidateRecord.from_document(doc["best_accuracy"])
        return front


def non_dominated_subset(records: list[CandidateRecord]) -> list[CandidateRecord]:
    """O(n^2) pairwise filter; keeps one copy per (hash, metrics) pair."""
    unique: list[CandidateRecord] = []
    seen: set[tuple] = set()
    for r in records:
        key = (r.arch_hash, r.metrics)
        if key not in seen:
            seen.add(key)
            unique.append(r)
    return [r for r in unique if not any(dominates(o, r) for o in unique if o is not r)]
