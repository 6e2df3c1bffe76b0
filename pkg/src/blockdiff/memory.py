"""Element-count accounting for tensor allocations.

The meter counts live float64 elements held by tracked arrays (tensor
values, gradient buffers, optimizer moments).  Counts are elements rather
than bytes so they are allocator- and platform-independent.  Freeing is
observed through weak references, which under CPython's reference counting
fires deterministically when the last reference to an array drops.

Measurement happens through labelled scopes::

    with METER.scope("step") as scope:
        ...
    scope.peak            # high-water of elements allocated above entry
    scope.peak_live       # absolute high-water of live elements

Scopes nest; an inner scope's peak folds into every enclosing scope, and
completed child scopes appear in the parent's ``breakdown``.  Disabling the
meter only stops counting; it never changes a numeric result.
"""

from __future__ import annotations

import weakref
from contextlib import contextmanager


class ScopeReport:
    """Peak statistics observed inside one labelled scope."""

    def __init__(self, label: str, entry_live: int):
        self.label = label
        self.entry_live = entry_live
        self.peak_live = entry_live
        self.breakdown: dict[str, int] = {}

    @property
    def peak(self) -> int:
        """Peak element count above the live baseline at scope entry."""
        return self.peak_live - self.entry_live

    def _note(self, current: int) -> None:
        if current > self.peak_live:
            self.peak_live = current

    def __repr__(self):
        return f"ScopeReport({self.label!r}, peak={self.peak}, peak_live={self.peak_live})"


class MemoryMeter:
    """Tracks current and peak live element counts across tracked arrays."""

    def __init__(self, enabled: bool = True):
        self.enabled = enabled
        self.current = 0
        self.peak = 0
        self._stack: list[ScopeReport] = []

    def track(self, array) -> None:
        """Register an array's elements as live until it is garbage collected."""
        if not self.enabled:
            return
        n = int(array.size)
        if n == 0:
            return
        self._alloc(n)
        weakref.finalize(array, self._free, n)

    def _alloc(self, n: int) -> None:
        self.current += n
        if self.current > self.peak:
            self.peak = self.current
        for scope in self._stack:
            scope._note(self.current)

    def _free(self, n: int) -> None:
        self.current -= n

    @contextmanager
    def scope(self, label: str):
        report = ScopeReport(label, self.current)
        self._stack.append(report)
        try:
            yield report
        finally:
            self._stack.pop()
            if self._stack:
                parent = self._stack[-1]
                parent.breakdown[label] = report.peak
                parent._note(report.peak_live)

    @contextmanager
    def paused(self):
        """Temporarily stop counting (counting never affects numeric results)."""
        prev = self.enabled
        self.enabled = False
        try:
            yield
        finally:
            self.enabled = prev


METER = MemoryMeter()


@contextmanager
def memory_scope(label: str):
    """Measure peak live elements inside the scope on the global meter."""
    with METER.scope(label) as report:
        yield report
