"""Tabular Q-learning core for rack selection.

A rack's state is the pair (accumulated processing of its picker,
accumulated processing of the rack), bucketized. Action 1 requests the rack
this tick, action 0 leaves it. Rewards are non-positive waiting costs.
"""

from __future__ import annotations

import json
import random
from collections.abc import Iterable, Mapping
from dataclasses import asdict, dataclass, field
from typing import Any, Protocol

from .errors import ConfigError, SchemaError
from .warehouse_model import GridMap, Location, Picker, Rack, manhattan


@dataclass(frozen=True)
class RackState:
    ap: int
    ar: int

    def __post_init__(self) -> None:
        if not 0 <= self.ar <= self.ap:
            raise ValueError(f"need 0 <= ar <= ap, got ap={self.ap} ar={self.ar}")


@dataclass(frozen=True)
class HyperParams:
    delta: float = 0.2
    beta: float = 0.1
    gamma: float = 0.9
    epsilon: float = 0.1
    K: int = 8
    L: int = 50
    bucket_width: int = 60

    def __post_init__(self) -> None:
        if not 0.0 <= self.delta <= 1.0:
            raise ConfigError("delta must be in [0, 1]")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ConfigError("epsilon must be in [0, 1]")
        if not 0.0 < self.beta <= 1.0:
            raise ConfigError("beta must be in (0, 1]")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError("gamma must be in [0, 1]")
        if self.K < 1:
            raise ConfigError("K must be >= 1")
        if self.L < 1:
            raise ConfigError("L must be >= 1")
        if self.bucket_width < 1:
            raise ConfigError("bucket_width must be >= 1")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


StateKey = tuple[int, int]


@dataclass
class QTable:
    """Action values keyed by bucketized state; unseen keys read as 0."""

    bucket_width: int = 60
    values: dict[tuple[int, int, int], float] = field(default_factory=dict)
    visits: dict[tuple[int, int, int], int] = field(default_factory=dict)

    def key(self, s: RackState) -> StateKey:
        return (s.ap // self.bucket_width, s.ar // self.bucket_width)

    def get(self, s: RackState, a: int) -> float:
        return self.values.get((*self.key(s), a), 0.0)

    def best_value(self, s: RackState) -> float:
        return max(self.get(s, 0), self.get(s, 1))

    def argmax(self, s: RackState) -> int:
        # ties go to requesting so a cold table still moves racks
        return 1 if self.get(s, 1) >= self.get(s, 0) else 0

    def __len__(self) -> int:
        return len(self.values)

    def to_dict(self) -> dict[str, Any]:
        keys = sorted(set(self.values) | set(self.visits))
        return {
            "bucket_width": self.bucket_width,
            "entries": [
                {
                    "ap_bucket": k[0],
                    "ar_bucket": k[1],
                    "action": k[2],
                    "value": self.values.get(k, 0.0),
                    "visits": self.visits.get(k, 0),
                }
                for k in keys
            ],
        }

    def to_json(self) -> bytes:
        return json.dumps(self.to_dict(), indent=1).encode("utf-8")

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> QTable:
        from .schemas import validate

        validate(doc, "qtable")
        q = cls(bucket_width=doc["bucket_width"])
        for e in doc["entries"]:
            k = (e["ap_bucket"], e["ar_bucket"], e["action"])
            q.values[k] = float(e["value"])
            q.visits[k] = int(e["visits"])
        return q

    @classmethod
    def from_json(cls, data: bytes | str) -> QTable:
        try:
            doc = json.loads(data)
        except json.JSONDecodeError as e:
            raise SchemaError(f"Q-table snapshot is not valid JSON: {e}") from None
        return cls.from_dict(doc)


# --- formulas -----------------------------------------------------------------


def finish_picker(p: Picker) -> int:
    """Remaining work at a picker: the current item plus everything queued."""
    return p.remaining_current + sum(r.queued_work for r in p.queue)


def reward_value(f_p: int, d_deliver: int, tau_sum: int) -> int:
    return -(max(f_p, d_deliver) + tau_sum)


def reward(rack: Rack, picker: Picker, d_deliver: int) -> int:
    return reward_value(finish_picker(picker), d_deliver, rack.pending_sum)


def finish_rack_value(t_k: int, d_ar: int, d_rp: int, f_p: int, tau_sum: int, d_pr: int) -> int:
    # queuing term kept exactly in the published form, see notes
    return t_k + d_ar + d_rp + max(d_ar + d_rp - f_p, 0) + tau_sum + d_pr


def finish_rack_estimate(t_k: int, robot_loc: Location, rack: Rack, picker: Picker) -> int:
    d_ar = manhattan(robot_loc, rack.home)
    d_rp = manhattan(rack.home, picker.location)
    return finish_rack_value(t_k, d_ar, d_rp, finish_picker(picker), rack.pending_sum, d_rp)


def q_update(q: QTable, s: RackState, a: int, c: float, s2: RackState, hp: HyperParams) -> float:
    k = (*q.key(s), a)
    old = q.values.get(k, 0.0)
    new = old + hp.beta * (c + hp.gamma * q.best_value(s2) - old)
    q.values[k] = new
    q.visits[k] = q.visits.get(k, 0) + 1
    return new


def epsilon_greedy(q: QTable, s: RackState, hp: HyperParams, rng: random.Random) -> int:
    if rng.random() < hp.epsilon:
        return rng.randrange(2)
    return q.argmax(s)


def transition(s: RackState, a: int, rack: Rack) -> RackState:
    if a == 0:
        return s
    tau = rack.pending_sum
    return RackState(s.ap + tau, s.ar + tau)


# --- selection helpers over world state ---------------------------------------


class SelectionWorld(Protocol):
    grid: GridMap
    racks: dict[int, Rack]
    pickers: dict[int, Picker]


def rack_state(world: SelectionWorld, rack: Rack) -> RackState:
    return RackState(world.pickers[rack.picker_id].accumulated, rack.accumulated)


def delivery_estimate(world: SelectionWorld, rack: Rack) -> int:
    return manhattan(rack.home, world.pickers[rack.picker_id].location)


def learn_selected(world: SelectionWorld, rack: Rack, q: QTable, hp: HyperParams) -> None:
    """Q update for requesting ``rack`` now."""
    s = rack_state(world, rack)
    c = reward(rack, world.pickers[rack.picker_id], delivery_estimate(world, rack))
    q_update(q, s, 1, c, transition(s, 1, rack), hp)


def greedy_bootstrap_select(
    world: SelectionWorld,
    robots_avail: int | Iterable[Any],
    q: QTable | None = None,
    hp: HyperParams | None = None,
) -> list[int]:
    """Most-slack-picker-first selection; returns rack ids in selection order.

    When a Q-table is supplied every selection also drives a Q update.
    """
    n = robots_avail if isinstance(robots_avail, int) else len(list(robots_avail))
    cands = [r for r in world.racks.values() if r.selectable]
    f = {pid: finish_picker(p) for pid, p in world.pickers.items()}
    cands.sort(key=lambda r: (f[r.picker_id], r.id))
    chosen = cands[:n]
    if q is not None:
        hp = hp or HyperParams()
        for r in chosen:
            learn_selected(world, r, q, hp)
    return [r.id for r in chosen]
