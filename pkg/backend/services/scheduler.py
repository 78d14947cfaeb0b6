"""
backend/services/scheduler.py
Forward-scheduled Drum-Buffer-Rope planning of the bottleneck (W4).

Lifecycle per trigger (customer arrival or bottleneck completion):
  1. scheduling_window()         unreleased orders with d_i - (S + C) <= t, EDD order
  2. append_order()              a_i = t + C, s_i = max(e_prev, a_i), e_i = s_i + p_i
  3. on_bottleneck_completion()  pop head, deviation = actual end - plan end,
                                 forward (early) or backward (late) rescheduling

Released orders never come back into the window (frozen zone).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable

from backend.errors import ContractError, ScheduleStateError
from backend.model import PlanningParameters, ProductionOrder, TimeUnit

log = logging.getLogger(__name__)


# ─────────────────────────────────────────────────────────────────────────────
#  Schedule types
# ─────────────────────────────────────────────────────────────────────────────

@dataclass
class ScheduleEntry:
    order_id: int
    a:        TimeUnit     # earliest plan start
    s:        TimeUnit     # plan start
    e:        TimeUnit     # plan end, always s + p
    p:        TimeUnit     # plan process time
    due_date: TimeUnit


@dataclass(frozen=True)
class Deviation:
    delta_e: float         # actual end - plan end of the completed order

    @property
    def is_early(self) -> bool:
        return self.delta_e < 0

    @property
    def is_late(self) -> bool:
        return self.delta_e > 0


@dataclass
class BottleneckSchedule:
    entries:                 list[ScheduleEntry] = field(default_factory=list)
    last_completed_plan_end: TimeUnit | None     = None      # e_0
    released_set:            set[int]            = field(default_factory=set)
    last_deviation:          Deviation | None    = None
    trace_rows:              list[dict] | None   = None      # set to [] to record revisions
    _orders: dict[int, ProductionOrder] = field(default_factory=dict, repr=False)

    def __len__(self) -> int:
        return len(self.entries)

    def head(self) -> ScheduleEntry | None:
        return self.entries[0] if self.entries else None

    def entry_for(self, order_id: int) -> ScheduleEntry | None:
        return next((x for x in self.entries if x.order_id == order_id), None)

    def _refresh_constraint_dates(self) -> None:
        for entry in self.entries:
            order = self._orders.get(entry.order_id)
            if order is not None:
                order.constraint_date = entry.s

    def _record(self, t: TimeUnit, event_type: str, entry: ScheduleEntry) -> None:
        if self.trace_rows is None:
            return
        self.trace_rows.append({
            "event_time": t,
            "event_type": event_type,
            "order_id":   entry.order_id,
            "a":          entry.a,
            "s":          entry.s,
            "e":          entry.e,
        })


# ─────────────────────────────────────────────────────────────────────────────
#  Window and plan construction
# ─────────────────────────────────────────────────────────────────────────────

def scheduling_window(orders: Iterable[ProductionOrder], t: TimeUnit,
                      params: PlanningParameters,
                      released: set[int]) -> list[ProductionOrder]:
    """O(t): unreleased orders whose due date minus (S + C) has been reached."""
    window = params.window
    due_now = [o for o in orders
               if o.due_date - window <= t and o.id not in released]
    return sorted(due_now, key=lambda o: (o.due_date, o.id))


def append_order(sched: BottleneckSchedule, order: ProductionOrder,
                 t: TimeUnit, ccr_buffer: TimeUnit) -> ScheduleEntry:
    """Release *order* at *t* and place it at the end of the bottleneck plan."""
    if order.id in sched.released_set:
        raise ScheduleStateError(f"order {order.id} is already scheduled")

    a = t + ccr_buffer
    e_prev = sched.entries[-1].e if sched.entries else sched.last_completed_plan_end
    s = a if e_prev is None else max(e_prev, a)
    entry = ScheduleEntry(order_id=order.id, a=a, s=s, e=s + order.plan_process_time,
                          p=order.plan_process_time, due_date=order.due_date)

    sched.entries.append(entry)
    sched.released_set.add(order.id)
    sched._orders[order.id] = order
    order.mark_released(t)
    order.constraint_date = s
    sched._record(t, "append", entry)
    return entry


def cumulative_gaps(sched: BottleneckSchedule) -> list[float]:
    """G_i = sum of idle gaps s_k - e_(k-1) up to entry i, measured from e_0."""
    gaps: list[float] = []
    e_prev = sched.last_completed_plan_end
    total = 0.0
    for entry in sched.entries:
        if e_prev is not None:
            total += entry.s - e_prev
        gaps.append(total)
        e_prev = entry.e
    return gaps


# ─────────────────────────────────────────────────────────────────────────────
#  Rescheduling
# ─────────────────────────────────────────────────────────────────────────────

def reschedule_forward(sched: BottleneckSchedule, delta_e: float) -> BottleneckSchedule:
    """Pull every entry earlier by |delta_e|, floored at a_i and at the adjusted predecessor."""
    if not delta_e < 0:
        raise ContractError(f"forward rescheduling needs delta_e < 0, got {delta_e}")
    prev_end: TimeUnit | None = None
    for entry in sched.entries:
        s_new = max(entry.s + delta_e, entry.a)
        if prev_end is not None and s_new < prev_end:
            s_new = prev_end
        entry.s = s_new
        entry.e = s_new + entry.p
        prev_end = entry.e
    sched._refresh_constraint_dates()
    return sched


def reschedule_backward(sched: BottleneckSchedule, delta_e: float) -> BottleneckSchedule:
    """Push entries later by delta_e minus the idle gaps already in front of them."""
    if not delta_e > 0:
        raise ContractError(f"backward rescheduling needs delta_e > 0, got {delta_e}")
    gaps = cumulative_gaps(sched)
    prev_end: TimeUnit | None = None
    for entry, g_cum in zip(sched.entries, gaps):
        shift = max(delta_e - g_cum, 0.0)
        s_new = entry.s + shift if shift > 0 else entry.s
        # float guard only: non-overlap already holds in exact arithmetic
        if prev_end is not None and s_new < prev_end:
            s_new = prev_end
        if s_new != entry.s:
            entry.s = s_new
            entry.e = s_new + entry.p
        prev_end = entry.e
    sched._refresh_constraint_dates()
    return sched


def on_bottleneck_completion(sched: BottleneckSchedule,
                             actual_end: TimeUnit) -> BottleneckSchedule:
    """
    The schedule head finished at *actual_end*: pop it and absorb the deviation.

    Gaps for backward rescheduling are measured from the completed order's plan
    end; afterwards e_0 becomes the actual end so later appends start from
    realised bottleneck availability.
    """
    if not sched.entries:
        raise ScheduleStateError("bottleneck completion on an empty schedule")

    head = sched.entries.pop(0)
    sched._orders.pop(head.order_id, None)
    sched._record(actual_end, "complete", head)

    sched.last_completed_plan_end = head.e
    delta_e = actual_end - head.e
    before = [(x.s, x.e) for x in sched.entries] if sched.trace_rows is not None else None

    if delta_e < 0:
        reschedule_forward(sched, delta_e)
    elif delta_e > 0:
        reschedule_backward(sched, delta_e)

    sched.last_completed_plan_end = actual_end
    sched.last_deviation = Deviation(delta_e)

    if before is not None:
        kind = "reschedule_forward" if delta_e < 0 else "reschedule_backward"
        for (s_old, e_old), entry in zip(before, sched.entries):
            if (s_old, e_old) != (entry.s, entry.e):
                sched._record(actual_end, kind, entry)

    log.debug("[dbr] order %s done at %.4f (plan %.4f, delta %+.4f), %d left",
              head.order_id, actual_end, head.e, delta_e, len(sched.entries))
    return sched
