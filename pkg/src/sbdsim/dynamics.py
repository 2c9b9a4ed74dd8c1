"""Exact event-driven simulation of spatial birth-death population models.

Two model variants share one engine:

* ``bolker_pacala``: each point gives birth at rate mass(a_plus); the
  offspring lands at the parent's position plus a displacement drawn from
  the dispersal kernel, wrapped onto the torus.
* ``migration``: births arrive as a Poisson stream with spatial intensity b
  and total rate integral(b), independent of the current population.

Every point dies at rate m + sum over the others of a_minus(distance), with
kernels wrapped onto the torus and truncated at their cutoff radius.  The
per-point competition loads are cached and updated incrementally on each
event; the optional audit recomputes them from scratch and fails loudly on
drift.  Waiting times are exponential in the total rate and the event type is
chosen proportionally, so trajectories follow the exact jump chain.

All randomness flows through one ``numpy.random.Generator``, which makes a
trace a deterministic function of (model, initial configuration, seed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Torus, TorusConfiguration
from .kernels import ImmigrationField, RadialKernel

VARIANTS = ("bolker_pacala", "migration")

# Hard cap on the living population before a run aborts.
DEFAULT_MAX_POPULATION = 1_000_000


class DynamicsError(RuntimeError):
    pass


class AuditError(DynamicsError):
    """Incremental rate caches drifted from a from-scratch recomputation."""


@dataclass(frozen=True)
class ModelSpec:
    """Model variant plus its kernels and rates.

    a_plus is meaningful for bolker_pacala only (None disables births there);
    b is the immigration intensity and is required for migration.  a_minus
    may be None in either variant, leaving m as the only death rate.
    """

    variant: str
    a_plus: RadialKernel | None = None
    a_minus: RadialKernel | None = None
    m: float = 0.0
    b: ImmigrationField | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise DynamicsError(
                f"unknown variant {self.variant!r}, expected one of {VARIANTS}"
            )
        if not (self.m >= 0.0 and math.isfinite(self.m)):
            raise DynamicsError(f"m must be finite and >= 0, got {self.m}")
        if self.variant == "migration":
            if self.b is None:
                raise DynamicsError("migration requires an immigration field b")
            if self.a_plus is not None:
                raise DynamicsError("migration takes no dispersal kernel")
        elif self.b is not None:
            raise DynamicsError("bolker_pacala takes no immigration field")
        if (
            self.a_plus is not None
            and self.a_minus is not None
            and self.a_plus.dim != self.a_minus.dim
        ):
            raise DynamicsError(
                f"kernel dimensions differ: a_plus {self.a_plus.dim}, "
                f"a_minus {self.a_minus.dim}"
            )

    @property
    def dim(self) -> int | None:
        for k in (self.a_plus, self.a_minus):
            if k is not None:
                return k.dim
        return None


@dataclass(frozen=True)
class Event:
    time: float
    kind: str  # "birth" or "death"
    position: np.ndarray
    point: int
    parent: int | None = None


@dataclass(frozen=True)
class Snapshot:
    time: float
    ids: np.ndarray
    positions: np.ndarray

    @property
    def size(self) -> int:
        return int(self.ids.size)


class SimulationState:
    """Mutable simulator state: configuration, clock, and rate caches.

    ``_load[i]`` caches the competition part of point i's death rate (the sum
    of a_minus over its neighbors); the full death rate is m + load.  Points
    live in parallel arrays with swap-remove deletion, keyed by stable ids.
    """

    def __init__(self, spec: ModelSpec, cfg: TorusConfiguration):
        self.spec = spec
        self.cfg = cfg
        self.torus = cfg.torus
        self.t = 0.0
        dim = spec.dim
        if dim is not None and dim != self.torus.dim:
            raise DynamicsError(
                f"model dimension {dim} != torus dimension {self.torus.dim}"
            )
        for kernel in (spec.a_plus, spec.a_minus):
            if kernel is not None and kernel.cutoff_radius() > self.torus.side / 2.0:
                raise DynamicsError(
                    f"kernel too wide for torus: cutoff "
                    f"{kernel.cutoff_radius():g} > side/2 {self.torus.side / 2.0:g}"
                )
        if spec.b is not None:
            self._b_total = spec.b.integral(self.torus.side, self.torus.dim)
        else:
            self._b_total = 0.0
        self._birth_mass = 0.0 if spec.a_plus is None else spec.a_plus.mass()

        self._ids: list[int] = []
        self._slot: dict[int, int] = {}
        self._load = np.zeros(max(len(cfg), 16))
        self._n = 0
        for pid in cfg.ids():
            self._register(pid)
        self._recompute_loads()

    # -- bookkeeping -------------------------------------------------------

    def _register(self, pid: int) -> None:
        if self._n == self._load.size:
            self._load = np.resize(self._load, 2 * self._load.size)
        self._slot[pid] = self._n
        if self._n < len(self._ids):
            self._ids[self._n] = pid
        else:
            self._ids.append(pid)
        self._load[self._n] = 0.0
        self._n += 1

    def _unregister(self, pid: int) -> None:
        slot = self._slot.pop(pid)
        last = self._n - 1
        if slot != last:
            moved = self._ids[last]
            self._ids[slot] = moved
            self._load[slot] = self._load[last]
            self._slot[moved] = slot
        self._n = last
        del self._ids[last]

    def _recompute_loads(self) -> None:
        a_minus = self.spec.a_minus
        for pid, slot in self._slot.items():
            if a_minus is None:
                self._load[slot] = 0.0
            else:
                self._load[slot] = self.cfg.kernel_sum_at(
                    a_minus, self.cfg.position(pid), exclude=pid
                )

    @property
    def population(self) -> int:
        return self._n

    def death_rates(self) -> np.ndarray:
        """Per-point death rates, aligned with the internal slot order."""
        return self.spec.m + self._load[: self._n]

    def death_rate_of(self, pid: int) -> float:
        return float(self.spec.m + self._load[self._slot[pid]])

    def total_rates(self) -> tuple[float, float]:
        """(total birth rate B, total death rate D) for the current state."""
        if self.spec.variant == "migration":
            b = self._b_total
        else:
            b = self._n * self._birth_mass
        d = self.spec.m * self._n + float(self._load[: self._n].sum())
        return b, d

    def audit(self, rel_tol: float = 1e-9) -> None:
        """Recompute every cached load from scratch; raise AuditError on drift."""
        a_minus = self.spec.a_minus
        for pid, slot in self._slot.items():
            if a_minus is None:
                fresh = 0.0
            else:
                fresh = self.cfg.kernel_sum_at(
                    a_minus, self.cfg.position(pid), exclude=pid
                )
            cached = float(self._load[slot])
            if abs(cached - fresh) > rel_tol * (1.0 + abs(fresh)):
                raise AuditError(
                    f"death-rate cache for point {pid} drifted: "
                    f"cached {cached!r}, recomputed {fresh!r}"
                )
        if self.cfg.cell_index() != self.cfg.rebuilt_cell_index():
            raise AuditError("cell index differs from a from-scratch rebuild")

    # -- event application ---------------------------------------------------

    def _add_point(self, position: np.ndarray) -> int:
        a_minus = self.spec.a_minus
        pid = self.cfg.insert(position)
        self._register(pid)
        if a_minus is not None:
            x = self.cfg.position(pid)
            ids, dists = self.cfg.neighbors_within(
                x, a_minus.cutoff_radius(), exclude=pid
            )
            if ids:
                contrib = a_minus.profile(dists)
                for other, c in zip(ids, contrib):
                    self._load[self._slot[other]] += c
                self._load[self._slot[pid]] = float(contrib.sum())
        return pid

    def _remove_point(self, pid: int) -> np.ndarray:
        a_minus = self.spec.a_minus
        x = self.cfg.position(pid)
        if a_minus is not None:
            ids, dists = self.cfg.neighbors_within(
                x, a_minus.cutoff_radius(), exclude=pid
            )
            if ids:
                contrib = a_minus.profile(dists)
                for other, c in zip(ids, contrib):
                    slot = self._slot[other]
                    self._load[slot] = max(0.0, self._load[slot] - c)
        self.cfg.remove(pid)
        self._unregister(pid)
        return x

    def _apply_event(self, b: float, d: float, rng: np.random.Generator) -> Event:
        """Choose birth vs death in proportion to the rates and apply it.

        The clock must already sit at the event time.
        """
        if rng.random() * (b + d) < b:
            if self.spec.variant == "migration":
                pos = self.spec.b.sample_position(self.torus.side, self.torus.dim, rng)
                parent = None
            else:
                parent = self._ids[int(rng.integers(self._n))]
                disp = self.spec.a_plus.sample_displacement(rng)
                pos = self.torus.wrap(self.cfg.position(parent) + disp)
            pid = self._add_point(pos)
            return Event(self.t, "birth", self.cfg.position(pid), pid, parent)
        rates = self.death_rates()
        cum = np.cumsum(rates)
        slot = int(np.searchsorted(cum, rng.random() * cum[-1]))
        slot = min(slot, self._n - 1)
        pid = self._ids[slot]
        pos = self._remove_point(pid)
        return Event(self.t, "death", pos, pid, None)

    def step(self, rng: np.random.Generator) -> Event | None:
        """Advance one event; None when no event can occur (absorbed)."""
        b, d = self.total_rates()
        total = b + d
        if total <= 0.0:
            return None
        self.t += rng.exponential(1.0 / total)
        return self._apply_event(b, d, rng)

    def snapshot(self, at_time: float) -> Snapshot:
        ids = np.array(self.cfg.ids(), dtype=int)
        return Snapshot(float(at_time), ids, self.cfg.positions_array())


def initial_state(spec: ModelSpec, cfg: TorusConfiguration) -> SimulationState:
    return SimulationState(spec, cfg)


@dataclass
class SimulationTrace:
    events: list[Event] = field(default_factory=list)
    snapshots: list[Snapshot] = field(default_factory=list)
    final_time: float = 0.0
    final_population: int = 0
    absorbed: bool = False
    guard_tripped: bool = False

    @property
    def n_events(self) -> int:
        return len(self.events)


def run(
    spec: ModelSpec,
    cfg: TorusConfiguration,
    t_end: float,
    rng: np.random.Generator,
    snapshot_times: tuple[float, ...] = (),
    max_population: int = DEFAULT_MAX_POPULATION,
    audit_every: int = 0,
    record_events: bool = True,
) -> SimulationTrace:
    """Simulate to ``t_end``, collecting events and scheduled snapshots.

    The configuration is mutated in place.  A snapshot at time s records the
    state after every event with time <= s.  If the population ever exceeds
    ``max_population`` the run stops early with ``guard_tripped`` set and the
    remaining snapshots unfilled; callers decide how loudly to fail.
    """
    if t_end < 0.0 or not math.isfinite(t_end):
        raise DynamicsError(f"t_end must be finite and >= 0, got {t_end}")
    pending = sorted(float(s) for s in snapshot_times)
    if pending and pending[0] < 0.0:
        raise DynamicsError("snapshot times must be >= 0")
    if any(s > t_end for s in pending):
        raise DynamicsError("snapshot times must not exceed t_end")

    state = SimulationState(spec, cfg)
    trace = SimulationTrace()
    events_done = 0

    while True:
        if state.population > max_population:
            trace.guard_tripped = True
            break
        b, d = state.total_rates()
        total = b + d
        if total <= 0.0:
            trace.absorbed = True
            break
        t_next = state.t + rng.exponential(1.0 / total)
        # snapshots strictly before the next event see the current state
        while pending and pending[0] < t_next:
            trace.snapshots.append(state.snapshot(pending.pop(0)))
        if t_next > t_end:
            state.t = t_end
            break
        state.t = t_next
        event = state._apply_event(b, d, rng)
        if record_events:
            trace.events.append(event)
        events_done += 1
        if audit_every and events_done % audit_every == 0:
            state.audit()

    if not trace.guard_tripped:
        for s in pending:
            trace.snapshots.append(state.snapshot(s))
    trace.final_time = state.t
    trace.final_population = state.population
    return trace
