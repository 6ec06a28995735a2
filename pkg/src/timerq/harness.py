"""Flow-timeout simulation harness.

Drives a timer queue backend against a packet trace: each packet pushes
(or refreshes) its flow's expiration entry, and the engine pops entries
as they expire, modelling the one-op-per-three-cycles interface of the
array hardware.  Backends share a small adapter protocol so the sorted
reference model, the cycle-accurate array, and the unbounded-arithmetic
oracle can all be driven by the same loop and compared stream-for-stream.

Time bases: one cycle is `cycle_time_ns` nanoseconds, one timer tick is
`precision` cycles.  The engine tracks an ever-growing wide tick; the
modular backends only ever see its low data-width bits.
"""

from __future__ import annotations

import csv
import ipaddress
import logging
import random
from collections import deque
from dataclasses import dataclass, replace

from .core import BehavioralQueue, QueueConfig, expiry_tick, is_expired
from .systolic import CYCLES_PER_OP, SystolicQueue, pop_op, push_op

log = logging.getLogger(__name__)

TRACE_HEADER = ("arrival_ns", "src", "dst", "sport", "dport", "proto")


class CapacityAbort(RuntimeError):
    """The flow table outgrew the queue; the run cannot continue."""


@dataclass(frozen=True)
class Packet:
    arrival_ns: int
    flow: tuple


# -- trace files -------------------------------------------------------------


def load_trace(path) -> tuple[list[Packet], int]:
    """Read a trace CSV.  Returns (packets sorted by arrival, skipped).

    Malformed rows are skipped with a warning rather than aborting the
    run; trace captures routinely carry a few mangled lines.
    """
    packets = []
    skipped = 0
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if lineno == 1 and row and row[0].strip() == TRACE_HEADER[0]:
                continue
            if len(row) != 6:
                log.warning("%s:%d: expected 6 fields, got %d",
                            path, lineno, len(row))
                skipped += 1
                continue
            try:
                arrival = int(row[0])
                sport, dport, proto = int(row[3]), int(row[4]), int(row[5])
            except ValueError:
                log.warning("%s:%d: non-numeric field", path, lineno)
                skipped += 1
                continue
            if arrival < 0:
                log.warning("%s:%d: negative arrival", path, lineno)
                skipped += 1
                continue
            flow = (row[1].strip(), row[2].strip(), sport, dport, proto)
            packets.append(Packet(arrival, flow))
    packets.sort(key=lambda p: p.arrival_ns)
    return packets, skipped


def write_trace(path, packets: list[Packet]):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_HEADER)
        for p in packets:
            writer.writerow((p.arrival_ns, *p.flow))


def gen_trace(flows: int, packets: int, seed: int, duration_ns: int,
              skew: float = 1.3) -> list[Packet]:
    """Synthesize a trace: `flows` distinct 5-tuples sharing `packets`
    arrivals over `duration_ns`, packet counts Pareto-skewed across
    flows (every flow gets at least one packet), arrival instants
    scattered uniformly.  Fully determined by `seed`.
    """
    if flows < 1 or packets < flows:
        raise ValueError("need at least one packet per flow")
    rng = random.Random(seed)

    tuples: list[tuple] = []
    seen = set()
    while len(tuples) < flows:
        flow = (
            str(ipaddress.IPv4Address(rng.getrandbits(32))),
            str(ipaddress.IPv4Address(rng.getrandbits(32))),
            rng.randint(1024, 65535),
            rng.randint(1, 65535),
            rng.choice((6, 17)),
        )
        if flow not in seen:
            seen.add(flow)
            tuples.append(flow)

    weights = [rng.paretovariate(skew) for _ in range(flows)]
    counts = [1] * flows
    for idx in rng.choices(range(flows), weights=weights, k=packets - flows):
        counts[idx] += 1

    out = []
    for flow, count in zip(tuples, counts):
        for _ in range(count):
            out.append(Packet(int(rng.uniform(0, duration_ns)), flow))
    out.sort(key=lambda p: p.arrival_ns)
    return out


# -- parameters --------------------------------------------------------------


@dataclass(frozen=True)
class SimParams:
    timeout: int                 # idle timeout, in timer ticks
    precision: int = 1           # cycles per timer tick
    data_width: int = 12
    timeout_width: int = 9
    id_width: int = 13
    capacity: int = 4096
    cycle_time_ns: float = 2.0
    backend: str = "behavioral"  # behavioral | systolic | wide
    n_units: int = 0             # systolic geometry; 0 picks a square-ish one
    m_blocks: int = 0

    def queue_config(self) -> QueueConfig:
        return QueueConfig(
            id_width=self.id_width,
            data_width=self.data_width,
            timeout_width=self.timeout_width,
            capacity=self.capacity,
            precision=self.precision,
            cycle_time_ns=self.cycle_time_ns,
        )

    def geometry(self) -> tuple[int, int]:
        if self.n_units and self.m_blocks:
            return self.n_units, self.m_blocks
        m = 2
        while (m + 1) * (m + 1) <= self.capacity:
            m += 1
        while self.capacity % m:
            m -= 1
        return self.capacity // m, m


_PARAM_FIELDS = {f.name: f.type for f in SimParams.__dataclass_fields__.values()}


def load_params(path, **overrides) -> tuple[SimParams, dict]:
    """Read a `key = value` params file.  Keys that match SimParams
    fields configure the run; the rest (trace generator knobs like
    flows/packets/seed/duration_ns) are returned as a dict.
    """
    sim_kwargs = {}
    extra = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if key in _PARAM_FIELDS:
                if key == "backend":
                    sim_kwargs[key] = value
                elif key == "cycle_time_ns":
                    sim_kwargs[key] = float(value)
                else:
                    sim_kwargs[key] = int(value)
            else:
                try:
                    extra[key] = int(value)
                except ValueError:
                    try:
                        extra[key] = float(value)
                    except ValueError:
                        extra[key] = value
    params = SimParams(**sim_kwargs)
    if overrides:
        params = replace(params, **overrides)
    return params, extra


def bundled_params(name: str = "univ_scale"):
    from importlib.resources import files

    if not name.endswith(".params"):
        name += ".params"
    return files("timerq.data").joinpath(name)


# -- flow table --------------------------------------------------------------


class FlowTable:
    """5-tuple to queue-id binding with id recycling."""

    def __init__(self, max_ident: int):
        self._by_flow: dict = {}
        self._by_ident: dict = {}
        self._free = list(range(max_ident, 0, -1))

    def __len__(self):
        return len(self._by_flow)

    def lookup(self, flow):
        return self._by_flow.get(flow)

    def allocate(self, flow):
        if not self._free:
            return None
        ident = self._free.pop()
        self._by_flow[flow] = ident
        self._by_ident[ident] = flow
        return ident

    def release(self, ident):
        flow = self._by_ident.pop(ident)
        del self._by_flow[flow]
        self._free.append(ident)
        return flow


# -- backend adapters --------------------------------------------------------


class BehavioralAdapter:
    """Sorted reference model behind the engine's op interface."""

    def __init__(self, config: QueueConfig):
        self.config = config
        self.queue = BehavioralQueue(config)

    def ready(self) -> bool:
        return True

    def step(self):
        pass

    def has_expired_head(self, wide_tick: int) -> bool:
        head = self.queue.peek()
        if head is None:
            return False
        return is_expired(head.data, wide_tick & self.config.data_mask,
                          self.config.data_width)

    def pop_head(self, wide_tick: int):
        el = self.queue.pop()
        return expiry_tick(el.data, wide_tick, self.config.data_width), el.ident

    def push(self, ident: int, wide_tick: int, timeout: int) -> bool:
        from .core import make_expiration

        data = make_expiration(wide_tick & self.config.data_mask, timeout,
                               self.config.data_width,
                               self.config.timeout_width)
        self.queue.push(ident, data)
        return True

    def remove(self, ident: int) -> bool:
        return self.queue.remove(ident) is not None

    def quiescent(self) -> bool:
        return True

    def settle(self):
        pass

    def occupancy(self) -> int:
        return len(self.queue)


class SystolicAdapter:
    """Cycle-accurate array behind the engine's op interface."""

    def __init__(self, config: QueueConfig, n_units: int, m_blocks: int,
                 event_sink=None):
        self.config = config
        self.queue = SystolicQueue(config, n_units, m_blocks,
                                   event_sink=event_sink)

    def ready(self) -> bool:
        return self.queue.issue_gate == 0

    def step(self):
        self.queue.step()

    def has_expired_head(self, wide_tick: int) -> bool:
        head = self.queue.peek()
        if head is None:
            return False
        return is_expired(head.data, wide_tick & self.config.data_mask,
                          self.config.data_width)

    def pop_head(self, wide_tick: int):
        head = self.queue.peek()
        accepted = self.queue.issue(pop_op())
        assert accepted and head is not None
        return (expiry_tick(head.data, wide_tick, self.config.data_width),
                head.ident)

    def push(self, ident: int, wide_tick: int, timeout: int) -> bool:
        from .core import make_expiration

        data = make_expiration(wide_tick & self.config.data_mask, timeout,
                               self.config.data_width,
                               self.config.timeout_width)
        return self.queue.issue(push_op(ident, data))

    def remove(self, ident: int) -> bool:
        from .systolic import remove_op

        return self.queue.issue(remove_op(ident))

    def quiescent(self) -> bool:
        return self.queue.is_quiescent()

    def settle(self):
        self.queue.drain()

    def occupancy(self) -> int:
        return self.queue.occupancy()


def make_adapter(params: SimParams):
    config = params.queue_config()
    if params.backend == "behavioral":
        return BehavioralAdapter(config)
    if params.backend == "systolic":
        n, m = params.geometry()
        return SystolicAdapter(config, n, m)
    if params.backend == "wide":
        from .oracle import WideAdapter

        return WideAdapter(config)
    raise ValueError(f"unknown backend {params.backend!r}")


# -- statistics --------------------------------------------------------------


@dataclass(frozen=True)
class SimStats:
    packets: int
    pushes: int
    inserts: int
    updates: int
    pops: int
    max_occupancy: int
    final_occupancy: int
    cycles: int
    ticks: int
    ops_accepted: int
    idle_cycles: int
    duration_ns: float
    modeled_mpps: float

    def to_text(self) -> str:
        lines = []
        for name in self.__dataclass_fields__:
            value = getattr(self, name)
            if isinstance(value, float):
                lines.append(f"{name}={value:.6f}")
            else:
                lines.append(f"{name}={value}")
        return "\n".join(lines) + "\n"


# -- engine ------------------------------------------------------------------


@dataclass
class _EngineState:
    cycle: int = 0
    gate: int = 0
    last_kind: str = "pop"
    pushes: int = 0
    inserts: int = 0
    updates: int = 0
    pops: int = 0
    max_occ: int = 0
    idle_cycles: int = 0


def drive(packets: list[Packet], adapter, params: SimParams, *,
          dequeue_log: list | None = None,
          occupancy_series: list | None = None,
          sample_ticks: int = 1024,
          max_cycles: int = 500_000_000) -> SimStats:
    """Run the trace to completion: every flow pushed, refreshed on
    each packet, and popped once expired.  Returns the aggregate stats.

    At most one operation is issued per CYCLES_PER_OP cycles, matching
    the array's acceptance rate, so all backends see identical op
    streams.  When both a push and an expired head are waiting, the
    arbiter alternates kinds to starve neither side.
    """
    cfg = params.queue_config()
    table = FlowTable(cfg.max_ident)
    st = _EngineState()
    pending: deque[Packet] = deque()
    next_pkt = 0
    total = len(packets)
    cycle_ns = params.cycle_time_ns
    p = params.precision

    while True:
        wide_tick = st.cycle // p
        while next_pkt < total and (
                packets[next_pkt].arrival_ns <= st.cycle * cycle_ns):
            pending.append(packets[next_pkt])
            next_pkt += 1

        if st.gate == 0 and adapter.ready():
            want_pop = adapter.has_expired_head(wide_tick)
            want_push = bool(pending)
            if want_pop and want_push:
                kind = "push" if st.last_kind == "pop" else "pop"
            elif want_pop:
                kind = "pop"
            elif want_push:
                kind = "push"
            else:
                kind = None

            if kind is None:
                # a free issue slot with nothing to do: the only cycles
                # that count against saturation
                st.idle_cycles += 1

            if kind == "push":
                pkt = pending.popleft()
                ident = table.lookup(pkt.flow)
                fresh = ident is None
                if fresh:
                    if len(table) >= cfg.capacity:
                        raise CapacityAbort(
                            f"{len(table)} live flows at capacity "
                            f"{cfg.capacity} (cycle {st.cycle})")
                    ident = table.allocate(pkt.flow)
                    if ident is None:
                        raise CapacityAbort("id space exhausted")
                if adapter.push(ident, wide_tick, params.timeout):
                    st.pushes += 1
                    if fresh:
                        st.inserts += 1
                    else:
                        st.updates += 1
                    st.last_kind = "push"
                    st.gate = CYCLES_PER_OP
                else:
                    # back-pressured: requeue and retry next window
                    pending.appendleft(pkt)
                    if fresh:
                        table.release(ident)
            elif kind == "pop":
                expiry, ident = adapter.pop_head(wide_tick)
                table.release(ident)
                st.pops += 1
                if dequeue_log is not None:
                    dequeue_log.append((expiry, ident))
                st.last_kind = "pop"
                st.gate = CYCLES_PER_OP

        adapter.step()
        st.cycle += 1
        if st.gate:
            st.gate -= 1

        occ = len(table)
        if occ > st.max_occ:
            st.max_occ = occ
        if occupancy_series is not None and st.cycle % (sample_ticks * p) == 0:
            occupancy_series.append((st.cycle // p, occ))

        if next_pkt >= total and not pending and not table:
            break
        if st.cycle >= max_cycles:
            raise RuntimeError(f"run did not converge in {max_cycles} cycles")

    # settle any in-flight pipeline work outside the counted horizon so
    # cycle accounting is identical for every backend
    adapter.settle()
    if adapter.occupancy() != 0:
        raise RuntimeError(
            f"backend still holds {adapter.occupancy()} elements after "
            "the flow table drained")

    cycles = st.cycle
    ops = st.pushes + st.pops
    duration_ns = cycles * cycle_ns
    mpps = ops / (duration_ns * 1e-3) if duration_ns else 0.0
    return SimStats(
        packets=total,
        pushes=st.pushes,
        inserts=st.inserts,
        updates=st.updates,
        pops=st.pops,
        max_occupancy=st.max_occ,
        final_occupancy=len(table),
        cycles=cycles,
        ticks=cycles // p,
        ops_accepted=ops,
        idle_cycles=st.idle_cycles,
        duration_ns=duration_ns,
        modeled_mpps=mpps,
    )


def run(params: SimParams, packets: list[Packet], **kwargs) -> SimStats:
    return drive(packets, make_adapter(params), params, **kwargs)
