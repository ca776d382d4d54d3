"""Shared data layer for the conflict mitigation pipeline.

Holds the state the RIC components exchange: control records written by
xApps, their parameter-group projections, KPI degradation records from the
performance monitor, and the counters used by implicit conflict detection.
Everything is kept in insertion order so that iteration is reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple


class StoreError(Exception):
    """Base class for store failures."""


class ValidationError(StoreError):
    """A record or argument violates an invariant."""


class DuplicateRecordError(StoreError):
    """A record with the same identity is already stored."""


class Scope(Enum):
    """Granularity of a control target."""

    CELL = "cell"
    UE = "ue"
    BEARER = "bearer"


@dataclass(frozen=True)
class ControlTarget:
    """A network entity addressed by a control message."""

    scope: Scope
    id: str

    def __post_init__(self) -> None:
        if not isinstance(self.scope, Scope):
            raise ValidationError(f"target scope must be a Scope, got {self.scope!r}")
        if not self.id or not isinstance(self.id, str):
            raise ValidationError("target id must be a non-empty string")

    def sort_key(self) -> Tuple[str, str]:
        return (self.scope.value, self.id)


def _check_changes(changes: Mapping[str, float]) -> Dict[str, float]:
    if not changes:
        raise ValidationError("changes must contain at least one parameter")
    out: Dict[str, float] = {}
    for name, value in changes.items():
        if not name or not isinstance(name, str):
            raise ValidationError("parameter names must be non-empty strings")
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValidationError(f"parameter {name!r} has non-numeric value {value!r}")
        if not math.isfinite(value):
            raise ValidationError(f"parameter {name!r} has non-finite value {value!r}")
        out[name] = float(value)
    return out


@dataclass(frozen=True)
class ControlRecord:
    """One applied (or candidate) parameter change from an xApp.

    The record is active over the half-open window [ts, ts + span).
    """

    msg_id: int
    ts: int
    xapp_id: str
    target: ControlTarget
    changes: Mapping[str, float]
    span: int

    def __post_init__(self) -> None:
        if not isinstance(self.msg_id, int) or isinstance(self.msg_id, bool):
            raise ValidationError("msg_id must be an integer")
        if not isinstance(self.ts, int) or isinstance(self.ts, bool):
            raise ValidationError("ts must be an integer (milliseconds)")
        if not self.xapp_id or not isinstance(self.xapp_id, str):
            raise ValidationError("xapp_id must be a non-empty string")
        if not isinstance(self.target, ControlTarget):
            raise ValidationError("target must be a ControlTarget")
        if not isinstance(self.span, int) or isinstance(self.span, bool) or self.span <= 0:
            raise ValidationError("span must be a positive integer (milliseconds)")
        object.__setattr__(self, "changes", _check_changes(self.changes))

    def active_at(self, t: int) -> bool:
        return self.ts <= t < self.ts + self.span

    def parameters(self) -> frozenset:
        return frozenset(self.changes)


@dataclass(frozen=True)
class ParameterGroupDef:
    """Named set of parameters that jointly steer one network behaviour."""

    group_id: str
    members: frozenset
    scope: Scope

    def __post_init__(self) -> None:
        if not self.group_id or not isinstance(self.group_id, str):
            raise ValidationError("group_id must be a non-empty string")
        members = frozenset(self.members)
        if len(members) < 2:
            raise ValidationError(f"group {self.group_id!r} needs at least two members")
        for m in members:
            if not m or not isinstance(m, str):
                raise ValidationError("group members must be non-empty strings")
        if not isinstance(self.scope, Scope):
            raise ValidationError("group scope must be a Scope")
        object.__setattr__(self, "members", members)


@dataclass(frozen=True)
class GroupChangeRecord:
    """Projection of a control record onto one parameter group."""

    msg_id: int
    group_id: str
    ts: int
    xapp_id: str
    target: ControlTarget
    span: int

    @classmethod
    def from_control(cls, rec: ControlRecord, group_id: str) -> "GroupChangeRecord":
        return cls(
            msg_id=rec.msg_id,
            group_id=group_id,
            ts=rec.ts,
            xapp_id=rec.xapp_id,
            target=rec.target,
            span=rec.span,
        )

    def active_at(self, t: int) -> bool:
        return self.ts <= t < self.ts + self.span


@dataclass(frozen=True)
class DegradationRecord:
    """One adverse KPI deviation flagged by the performance monitor."""

    event_id: int
    ts: int
    kpi_name: str
    cell_id: str
    magnitude: float

    def __post_init__(self) -> None:
        if not self.kpi_name or not self.cell_id:
            raise ValidationError("kpi_name and cell_id must be non-empty")
        if not (isinstance(self.magnitude, (int, float)) and self.magnitude > 0):
            raise ValidationError("magnitude must be positive")


# (sorted xapp ids, parameter or group name, target)
CounterKey = Tuple[Tuple[str, ...], str, ControlTarget]


def counter_sort_key(key: CounterKey):
    xapps, name, target = key
    return (xapps, name, target.sort_key())


@dataclass
class ImplicitCounter:
    """Running evidence that a set of xApps keeps degrading the same target."""

    key: CounterKey
    count: int = 0
    last_update_ts: int = 0
    msg_ids: Tuple[int, ...] = ()


class SdlStore:
    """In-memory shared store with insertion-order iteration.

    Records are validated on construction; the store only enforces identity
    uniqueness and performs lifecycle management (supersession, expiry).
    """

    def __init__(self, degradation_horizon_ms: int = 60_000) -> None:
        if degradation_horizon_ms <= 0:
            raise ValidationError("degradation horizon must be positive")
        self.degradation_horizon_ms = degradation_horizon_ms
        self._controls: List[ControlRecord] = []
        self._controls_by_id: Dict[int, ControlRecord] = {}
        self._group_changes: List[GroupChangeRecord] = []
        self._group_change_ids: set = set()
        self._group_defs: Dict[str, ParameterGroupDef] = {}
        self._degradations: List[DegradationRecord] = []
        self._degradation_ids: set = set()
        self._counters: Dict[CounterKey, ImplicitCounter] = {}

    # -- control records ----------------------------------------------------

    def record_control(self, rec: ControlRecord) -> None:
        if not isinstance(rec, ControlRecord):
            raise ValidationError("record_control takes a ControlRecord")
        if rec.msg_id in self._controls_by_id:
            raise DuplicateRecordError(f"msg_id {rec.msg_id} already recorded")
        self._controls.append(rec)
        self._controls_by_id[rec.msg_id] = rec

    def get_control(self, msg_id: int) -> Optional[ControlRecord]:
        return self._controls_by_id.get(msg_id)

    def active_controls(self, target: ControlTarget, now: int) -> List[ControlRecord]:
        """Records active at `now` for `target`, in insertion order."""
        return [r for r in self._controls if r.target == target and r.active_at(now)]

    def all_controls(self) -> Tuple[ControlRecord, ...]:
        return tuple(self._controls)

    def supersede(self, rec: ControlRecord, now: Optional[int] = None) -> List[int]:
        """Drop older active records this one replaces.

        A record is replaced when it is still active, comes from the same
        xApp, addresses the same target, and shares at least one parameter
        with `rec`. Group-change entries of replaced records go with them.
        Returns the msg_ids removed.
        """
        t = rec.ts if now is None else now
        removed: List[int] = []
        for old in list(self._controls):
            if old.msg_id == rec.msg_id:
                continue
            if (
                old.target == rec.target
                and old.xapp_id == rec.xapp_id
                and old.active_at(t)
                and old.parameters() & rec.parameters()
            ):
                self._remove_control(old)
                removed.append(old.msg_id)
        return removed

    def _remove_control(self, rec: ControlRecord) -> None:
        self._controls.remove(rec)
        del self._controls_by_id[rec.msg_id]
        for gc in [g for g in self._group_changes if g.msg_id == rec.msg_id]:
            self._group_changes.remove(gc)
            self._group_change_ids.discard((gc.msg_id, gc.group_id))

    # -- group definitions and change records --------------------------------

    def add_parameter_group(self, group: ParameterGroupDef) -> None:
        if group.group_id in self._group_defs:
            raise DuplicateRecordError(f"group {group.group_id!r} already defined")
        self._group_defs[group.group_id] = group

    def parameter_groups(self) -> Tuple[ParameterGroupDef, ...]:
        return tuple(self._group_defs.values())

    def record_group_change(self, gc: GroupChangeRecord) -> None:
        key = (gc.msg_id, gc.group_id)
        if key in self._group_change_ids:
            raise DuplicateRecordError(f"group change {key} already recorded")
        self._group_changes.append(gc)
        self._group_change_ids.add(key)

    def active_group_changes(
        self, target: ControlTarget, group_id: str, now: int
    ) -> List[GroupChangeRecord]:
        return [
            g
            for g in self._group_changes
            if g.target == target and g.group_id == group_id and g.active_at(now)
        ]

    def all_group_changes(self) -> Tuple[GroupChangeRecord, ...]:
        return tuple(self._group_changes)

    # -- degradation records --------------------------------------------------

    def record_degradation(self, rec: DegradationRecord) -> None:
        if rec.event_id in self._degradation_ids:
            raise DuplicateRecordError(f"event_id {rec.event_id} already recorded")
        self._degradations.append(rec)
        self._degradation_ids.add(rec.event_id)

    def degradations(self) -> Tuple[DegradationRecord, ...]:
        return tuple(self._degradations)

    def purge_degradations(self, before_ts: int) -> int:
        """Remove degradation records strictly older than `before_ts`."""
        keep = [r for r in self._degradations if r.ts >= before_ts]
        purged = len(self._degradations) - len(keep)
        for r in self._degradations:
            if r.ts < before_ts:
                self._degradation_ids.discard(r.event_id)
        self._degradations = keep
        return purged

    # -- implicit conflict counters -------------------------------------------

    def bump_counter(self, key: CounterKey, now: int, msg_ids: Iterable[int] = ()) -> int:
        ctr = self._counters.get(key)
        if ctr is None:
            ctr = ImplicitCounter(key=key)
            self._counters[key] = ctr
        ctr.count += 1
        ctr.last_update_ts = now
        merged = set(ctr.msg_ids) | set(msg_ids)
        ctr.msg_ids = tuple(sorted(merged))
        return ctr.count

    def get_counter(self, key: CounterKey) -> Optional[ImplicitCounter]:
        return self._counters.get(key)

    def reset_counter(self, key: CounterKey) -> None:
        ctr = self._counters.get(key)
        if ctr is not None:
            ctr.count = 0
            ctr.msg_ids = ()

    def counters_over(self, threshold: int) -> List[ImplicitCounter]:
        """Counters with count >= threshold, sorted by key."""
        hits = [c for c in self._counters.values() if c.count >= threshold]
        hits.sort(key=lambda c: counter_sort_key(c.key))
        return hits

    # -- lifecycle --------------------------------------------------------------

    def expire(self, now: int) -> int:
        """Purge entries that can no longer matter at time `now`.

        Control and group-change records whose activity window has closed
        (ts + span <= now) are dropped, as are degradation records older
        than the retention horizon. Returns the number of entries purged.
        Queries at times >= now are unaffected by expiry.
        """
        purged = 0
        for rec in [r for r in self._controls if r.ts + r.span <= now]:
            # _remove_control also drops the record's group changes
            before = len(self._group_changes)
            self._remove_control(rec)
            purged += 1 + (before - len(self._group_changes))
        for gc in [g for g in self._group_changes if g.ts + g.span <= now]:
            self._group_changes.remove(gc)
            self._group_change_ids.discard((gc.msg_id, gc.group_id))
            purged += 1
        purged += self.purge_degradations(now - self.degradation_horizon_ms)
        return purged

    def dump(self) -> Tuple:
        """Immutable snapshot of store content, for tests and debugging."""
        return (
            tuple(self._controls),
            tuple(self._group_changes),
            tuple(self._degradations),
            tuple((k, c.count, c.last_update_ts, c.msg_ids) for k, c in self._counters.items()),
        )
