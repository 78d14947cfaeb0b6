"""
backend/services/flowshop.py
Event-driven simulation of the five-station make-to-order flow shop.

  customer arrival -> order pool -> DBR release (rope) -> W1 -> W2 -> W3
  -> W4 (bottleneck, drum) -> W5 -> FGI until due date -> delivery

W1..W4 dispatch by Earliest-Constraint-Date, W5 by Earliest-Due-Date.
One replication is one FlowShopSimulation instance; nothing is shared.

Public entry-points:
  run_replication(env, params, seed, horizon, warmup)  ->  SimulationResult
  FlowShopSimulation(...).run()                          ->  SimulationResult (+ traces)
"""
from __future__ import annotations

import heapq
import itertools
import logging
import time
from dataclasses import dataclass, field
from enum import Enum, IntEnum

from backend.errors import ParameterError
from backend.model import (
    DEFAULT_MODEL,
    Environment,
    ModelConstants,
    PlanningParameters,
    ProductionOrder,
    RngStreams,
    TimeUnit,
    draw_interarrival,
    generate_customer_order,
    lognormal_draw,
)
from backend.services.costing import DEFAULT_RATES, CostRates, LevelIntegrator, overall_cost
from backend.services.scheduler import (
    BottleneckSchedule,
    append_order,
    on_bottleneck_completion,
    scheduling_window,
)

log = logging.getLogger(__name__)

STATION_IDS: tuple[str, ...] = ("W1", "W2", "W3", "W4", "W5")
BOTTLENECK = "W4"


# ─────────────────────────────────────────────────────────────────────────────
#  Shop floor types
# ─────────────────────────────────────────────────────────────────────────────

class Discipline(str, Enum):
    ECD = "ECD"     # earliest constraint date (planned bottleneck start)
    EDD = "EDD"     # earliest due date


class EventKind(IntEnum):
    # value doubles as the tie-break priority at equal event times
    PROCESSING_COMPLETE = 0
    DRUM_READY          = 1     # schedule head may start at W4 (a_i reached)
    CUSTOMER_ARRIVAL    = 2
    DELIVERY_DUE        = 3


@dataclass(order=True, frozen=True)
class SimulationClockEvent:
    time:            TimeUnit
    kind:            EventKind
    sequence_number: int
    station:         str | None = field(default=None, compare=False)
    order_id:        int | None = field(default=None, compare=False)


@dataclass
class Workstation:
    id:            str
    is_bottleneck: bool
    discipline:    Discipline
    queue:         list[ProductionOrder] = field(default_factory=list)
    busy_until:    TimeUnit | None       = None
    current:       ProductionOrder | None = None
    busy_since:    TimeUnit              = 0.0
    busy_time:     TimeUnit              = 0.0

    @property
    def idle(self) -> bool:
        return self.current is None


def build_stations() -> dict[str, Workstation]:
    return {
        sid: Workstation(
            id            = sid,
            is_bottleneck = sid == BOTTLENECK,
            discipline    = Discipline.EDD if sid == "W5" else Discipline.ECD,
        )
        for sid in STATION_IDS
    }


@dataclass(frozen=True)
class SimulationResult:
    avg_wip:             float
    avg_fgi:             float
    avg_backorder:       float
    overall_cost_per_tu: float
    orders_completed:    int       # finished at W5
    seed:                int
    orders_arrived:      int
    orders_delivered:    int
    orders_in_system:    int
    service_level:       float     # on-time share of deliveries in the measured span
    utilization:         dict[str, float]
    events_processed:    int
    runtime_seconds:     float = field(default=0.0, compare=False)

    def cost_breakdown(self, rates: CostRates = DEFAULT_RATES) -> dict[str, float]:
        return {
            "wip_cost":       rates.wip_rate * self.avg_wip,
            "fgi_cost":       rates.fgi_rate * self.avg_fgi,
            "tardiness_cost": rates.tardiness_rate * self.avg_backorder,
            "overall_cost":   self.overall_cost_per_tu,
        }


# ─────────────────────────────────────────────────────────────────────────────
#  Dispatching / processing
# ─────────────────────────────────────────────────────────────────────────────

def dispatch(station: Workstation, t: TimeUnit) -> ProductionOrder | None:
    """Queued order with the best priority for *station*; the queue is not modified."""
    if not station.queue:
        return None
    if station.discipline is Discipline.EDD:
        return min(station.queue, key=lambda o: (o.due_date, o.id))
    inf = float("inf")
    return min(station.queue,
               key=lambda o: (o.constraint_date if o.constraint_date is not None else inf, o.id))


def unit_plan_time(station_id: str, order: ProductionOrder,
                   model: ModelConstants = DEFAULT_MODEL) -> TimeUnit:
    if station_id == "W4":
        return order.product.w4_mean
    if station_id == "W5":
        return order.product.w5_mean
    return model.upstream_mean


def service_time(station: Workstation, order: ProductionOrder, streams: RngStreams,
                 env: Environment, model: ModelConstants = DEFAULT_MODEL) -> TimeUnit:
    cv = env.cv_ppt if station.is_bottleneck else model.station_cv
    unit = lognormal_draw(unit_plan_time(station.id, order, model), cv, streams.station(station.id))
    return order.lot_size * unit


def process(station: Workstation, order: ProductionOrder, t: TimeUnit,
            streams: RngStreams, env: Environment, sequence_number: int,
            model: ModelConstants = DEFAULT_MODEL) -> SimulationClockEvent:
    """Put *order* into service at *t*; returns its processing_complete event."""
    duration = service_time(station, order, streams, env, model)
    station.current    = order
    station.busy_since = t
    station.busy_until = t + duration
    return SimulationClockEvent(time=t + duration, kind=EventKind.PROCESSING_COMPLETE,
                                sequence_number=sequence_number,
                                station=station.id, order_id=order.id)


# ─────────────────────────────────────────────────────────────────────────────
#  Simulation
# ─────────────────────────────────────────────────────────────────────────────

class FlowShopSimulation:
    """
    One seeded replication.

    Usage:
        sim = FlowShopSimulation(env, PlanningParameters(6, 7), seed=1,
                                 horizon=8760, warmup=760)
        result = sim.run()
        sim.event_trace, sim.schedule.trace_rows   # only with trace=True
    """

    def __init__(self, env: Environment, params: PlanningParameters, seed: int,
                 horizon: TimeUnit, warmup: TimeUnit,
                 model: ModelConstants = DEFAULT_MODEL,
                 rates: CostRates = DEFAULT_RATES,
                 trace: bool = False):
        if not horizon > 0:
            raise ParameterError(f"horizon must be > 0, got {horizon}")
        if not (0 <= warmup <= horizon):
            raise ParameterError(f"warmup must lie in [0, horizon], got {warmup}")

        self.env     = env
        self.params  = params
        self.seed    = seed
        self.horizon = horizon
        self.warmup  = warmup
        self.model   = model
        self.rates   = rates

        self.streams  = RngStreams(seed)
        self.stations = build_stations()
        self.schedule = BottleneckSchedule(trace_rows=[] if trace else None)
        self.event_trace: list[dict] | None = [] if trace else None

        self.pool:   dict[int, ProductionOrder] = {}   # arrived, not yet released
        self.orders: dict[int, ProductionOrder] = {}   # arrived, not yet delivered

        self.wip       = LevelIntegrator(warmup, "wip")
        self.fgi       = LevelIntegrator(warmup, "fgi")
        self.backorder = LevelIntegrator(warmup, "backorder")

        self.now               = 0.0
        self.orders_arrived    = 0
        self.orders_completed  = 0
        self.orders_delivered  = 0
        self.events_processed  = 0
        self._measured_deliveries = 0
        self._on_time_deliveries  = 0

        self._events: list[SimulationClockEvent] = []
        self._seq          = itertools.count()
        self._next_id      = itertools.count(1)
        self._drum_wakeup: TimeUnit | None = None

    # ── event calendar ────────────────────────────────────────────────────────

    def _push(self, t: TimeUnit, kind: EventKind, station: str | None = None,
              order_id: int | None = None) -> None:
        heapq.heappush(self._events, SimulationClockEvent(t, kind, next(self._seq), station, order_id))

    def _trace(self, event: str, station: str | None, order_id: int | None) -> None:
        if self.event_trace is not None:
            self.event_trace.append({"time": self.now, "event": event,
                                     "station": station or "", "order": order_id})

    # ── main loop ─────────────────────────────────────────────────────────────

    def run(self) -> SimulationResult:
        started = time.perf_counter()
        self._push(draw_interarrival(self.streams, self.env, self.model), EventKind.CUSTOMER_ARRIVAL)

        while self._events and self._events[0].time <= self.horizon:
            ev = heapq.heappop(self._events)
            self.now = ev.time
            self.events_processed += 1
            if ev.kind is EventKind.PROCESSING_COMPLETE:
                self._on_processing_complete(self.stations[ev.station])
            elif ev.kind is EventKind.DRUM_READY:
                self._drum_wakeup = None
                self._try_start(self.stations[BOTTLENECK])
            elif ev.kind is EventKind.CUSTOMER_ARRIVAL:
                self._on_customer_arrival()
            else:
                self._on_delivery_due(ev.order_id)

        result = self._finish(time.perf_counter() - started)
        log.debug("[flowshop] env=%s C=%s S=%s seed=%s cost=%.4f events=%d",
                  self.env.label, self.params.ccr_buffer, self.params.shipping_buffer,
                  self.seed, result.overall_cost_per_tu, result.events_processed)
        return result

    def _finish(self, runtime: float) -> SimulationResult:
        end = self.horizon
        for integ in (self.wip, self.fgi, self.backorder):
            integ.close(end)
        avg_wip       = self.wip.average(end)
        avg_fgi       = self.fgi.average(end)
        avg_backorder = self.backorder.average(end)

        utilization = {}
        for sid, st in self.stations.items():
            busy = st.busy_time + (end - st.busy_since if st.current is not None else 0.0)
            utilization[sid] = busy / end

        measured = self._measured_deliveries
        return SimulationResult(
            avg_wip             = avg_wip,
            avg_fgi             = avg_fgi,
            avg_backorder       = avg_backorder,
            overall_cost_per_tu = overall_cost(avg_wip, avg_fgi, avg_backorder, self.rates),
            orders_completed    = self.orders_completed,
            seed                = self.seed,
            orders_arrived      = self.orders_arrived,
            orders_delivered    = self.orders_delivered,
            orders_in_system    = len(self.orders),
            service_level       = self._on_time_deliveries / measured if measured else 1.0,
            utilization         = utilization,
            events_processed    = self.events_processed,
            runtime_seconds     = runtime,
        )

    # ── event handlers ────────────────────────────────────────────────────────

    def _on_customer_arrival(self) -> None:
        order = generate_customer_order(self.now, self.streams, next(self._next_id), self.model)
        self.pool[order.id]   = order
        self.orders[order.id] = order
        self.orders_arrived  += 1
        self._trace("arrival", None, order.id)
        self._push(order.due_date, EventKind.DELIVERY_DUE, order_id=order.id)
        self._push(self.now + draw_interarrival(self.streams, self.env, self.model),
                   EventKind.CUSTOMER_ARRIVAL)
        self._plan()

    def _on_processing_complete(self, station: Workstation) -> None:
        order = station.current
        station.busy_time += self.now - station.busy_since
        station.current    = None
        station.busy_until = None
        self._trace("complete", station.id, order.id)

        if station.id == "W5":
            self.deliver_or_hold(order, self.now)
        else:
            if station.is_bottleneck:
                on_bottleneck_completion(self.schedule, self.now)
                self._plan()
            nxt = self.stations[STATION_IDS[STATION_IDS.index(station.id) + 1]]
            nxt.queue.append(order)
            self._try_start(nxt)
        self._try_start(station)

    def _on_delivery_due(self, order_id: int) -> None:
        order = self.orders.get(order_id)
        if order is None:
            return                              # delivered on completion
        if order.completion_time is not None:
            self.fgi.record_level_change(self.now, -order.lot_size)
            self._deliver(order)
        else:
            order.backordered = True
            self.backorder.record_level_change(self.now, order.lot_size)
            self._trace("backorder", None, order.id)

    # ── DBR release (rope) ────────────────────────────────────────────────────

    def _plan(self) -> None:
        window = scheduling_window(self.pool.values(), self.now, self.params,
                                   self.schedule.released_set)
        if not window:
            return
        w1 = self.stations["W1"]
        for order in window:
            append_order(self.schedule, order, self.now, self.params.ccr_buffer)
            del self.pool[order.id]
            self.wip.record_level_change(self.now, order.lot_size)
            w1.queue.append(order)
            self._trace("release", "W1", order.id)
        self._try_start(w1)

    # ── station control ───────────────────────────────────────────────────────

    def _drum_pick(self, station: Workstation) -> ProductionOrder | None:
        """
        W4 only ever starts the schedule head: ECD would pick it anyway since
        the head holds the smallest plan start. Early starts are allowed, but
        never before a_i.
        """
        head = self.schedule.head()
        if head is None:
            return None
        order = next((o for o in station.queue if o.id == head.order_id), None)
        if order is None:
            return None
        if self.now < head.a:
            if self._drum_wakeup != head.a:
                self._drum_wakeup = head.a
                self._push(head.a, EventKind.DRUM_READY, station=station.id)
            return None
        return order

    def _try_start(self, station: Workstation) -> None:
        if not station.idle:
            return
        order = self._drum_pick(station) if station.is_bottleneck else dispatch(station, self.now)
        if order is None:
            return
        station.queue.remove(order)
        ev = process(station, order, self.now, self.streams, self.env,
                     next(self._seq), self.model)
        heapq.heappush(self._events, ev)
        self._trace("start", station.id, order.id)

    # ── finished goods ────────────────────────────────────────────────────────

    def deliver_or_hold(self, order: ProductionOrder, completion_time: TimeUnit) -> None:
        """W5 finished *order*: hold it in FGI until its due date, or ship it now."""
        order.completion_time = completion_time
        self.orders_completed += 1
        self.wip.record_level_change(completion_time, -order.lot_size)
        if completion_time < order.due_date:
            self.fgi.record_level_change(completion_time, order.lot_size)
            return
        if order.backordered:
            self.backorder.record_level_change(completion_time, -order.lot_size)
        self._deliver(order)

    def _deliver(self, order: ProductionOrder) -> None:
        order.delivery_time = self.now
        del self.orders[order.id]
        self.orders_delivered += 1
        if self.now > self.warmup:
            self._measured_deliveries += 1
            if not order.backordered:
                self._on_time_deliveries += 1
        self._trace("deliver", None, order.id)


def run_replication(env: Environment, params: PlanningParameters, seed: int,
                    horizon: TimeUnit, warmup: TimeUnit,
                    model: ModelConstants = DEFAULT_MODEL,
                    rates: CostRates = DEFAULT_RATES) -> SimulationResult:
    """Simulate one replication; identical arguments give bit-identical results."""
    return FlowShopSimulation(env, params, seed, horizon, warmup, model, rates).run()
