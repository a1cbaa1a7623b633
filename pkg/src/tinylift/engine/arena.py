"""Shared activation arena: lifetime-based planning and exclusive tenancy.

Activation tensor i (tensor 0 = graph input, tensor i+1 = output of layer i)
is live over execution steps [i-1, i]; the final output stays live to the
end. Offsets come from a greedy first-fit over tensors in decreasing size
order; peak is the largest sum of simultaneously live tensor sizes, which
is what the capacity check enforces (packing quality only affects extent,
which is checked too).
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from ..errors import ArenaOverflow, TenantBusy
from .model import ARENA_CAPACITY_BYTES, ModelGraph


@dataclass(frozen=True)
class ArenaPlan:
    """Byte offsets for every activation tensor of one graph."""

    sizes: tuple[int, ...]
    offsets: tuple[int, ...]
    lifetimes: tuple[tuple[int, int], ...]   # inclusive [first_step, last_step]
    peak_bytes: int
    extent_bytes: int


def _lifetimes(n_tensors: int) -> list[tuple[int, int]]:
    last_step = n_tensors - 2  # steps 0..n_layers-1
    spans = []
    for i in range(n_tensors):
        start = max(0, i - 1)
        end = min(i, last_step)
        if i == n_tensors - 1:
            end = last_step
        spans.append((start, end))
    return spans


def plan_arena(graph: ModelGraph, capacity: int = ARENA_CAPACITY_BYTES) -> ArenaPlan:
    """Assign non-overlapping extents to simultaneously live activations."""
    sizes = [int(np.prod(s)) for s in graph.tensor_shapes]  # int8: 1 byte/elem
    spans = _lifetimes(len(sizes))

    # peak = max over steps of the live-set byte total
    n_steps = len(graph.layers)
    peak = 0
    for step in range(n_steps):
        live = sum(sz for sz, (a, b) in zip(sizes, spans) if a <= step <= b)
        peak = max(peak, live)
    if peak > capacity:
        raise ArenaOverflow(f"peak activation bytes {peak} exceed capacity {capacity}")

    offsets = [0] * len(sizes)
    placed: list[int] = []
    for idx in sorted(range(len(sizes)), key=lambda i: (-sizes[i], i)):
        a, b = spans[idx]
        blockers = sorted(
            (offsets[j], offsets[j] + sizes[j])
            for j in placed
            if not (spans[j][1] < a or b < spans[j][0])
        )
        cursor = 0
        for lo, hi in blockers:
            if cursor + sizes[idx] <= lo:
                break
            cursor = max(cursor, hi)
        offsets[idx] = cursor
        placed.append(idx)

    extent = max(off + sz for off, sz in zip(offsets, sizes))
    if extent > capacity:
        raise ArenaOverflow(f"packed extent {extent} exceeds capacity {capacity}")
    return ArenaPlan(tuple(sizes), tuple(offsets), tuple(spans), peak, extent)


@dataclass
class Arena:
    """One preallocated activation region shared by multiple models.

    At most one tenant is active, and activation is refused while a
    different tenant has an inference in flight. All calls on one arena
    must come from a single event loop (see the controller's model).
    """

    capacity: int = ARENA_CAPACITY_BYTES
    active_tenant: ModelGraph | None = None
    plan: ArenaPlan | None = None
    buffer: np.ndarray | None = None
    in_flight: bool = False
    peak_usage: int = 0
    invocations: int = 0
    last_invoke_wall_ms: float = 0.0

    def activate(self, graph: ModelGraph) -> ArenaPlan:
        """Install graph as the sole tenant; idempotent for the active one."""
        if self.active_tenant is graph:
            return self.plan
        if self.in_flight:
            raise TenantBusy(
                f"cannot activate {graph.name!r}: "
                f"{self.active_tenant.name!r} has an inference in flight")
        plan = plan_arena(graph, self.capacity)
        self.active_tenant = graph
        self.plan = plan
        self.buffer = np.zeros(plan.extent_bytes, dtype=np.int8)
        self.peak_usage = max(self.peak_usage, plan.peak_bytes)
        return plan

    def begin_inference(self, graph: ModelGraph) -> None:
        if self.active_tenant is not graph:
            name = self.active_tenant.name if self.active_tenant else None
            raise TenantBusy(f"{graph.name!r} is not the active tenant (active: {name!r})")
        if self.in_flight:
            raise TenantBusy(f"{graph.name!r} already has an inference in flight")
        self.in_flight = True
        self.invocations += 1

    def end_inference(self) -> None:
        self.in_flight = False

    @contextmanager
    def inference(self, graph: ModelGraph):
        self.begin_inference(graph)
        try:
            yield self
        finally:
            self.end_inference()
