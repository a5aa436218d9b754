"""Queue-based sequential construction of the weighted bipartite graph.

Black vertices carry exponential arrival clocks of rate x_i/z, white
vertices clocks of rate y_j/z.  A single-server last-in-first-out queue of
white vertices drives the construction: the black vertex arriving next
either roots a new tree (empty queue) or interrupts the white currently in
service and becomes its child.  Each appointed black vertex V_k claims the
interval with white-dial width x_{V_k}; the whites whose clocks fall inside
become its children, queued head-first in arrival order with service
requests equal to their weights.

The output spanning forest plus independently sampled surplus edges is
distributed exactly as the directly sampled graph, which is what the
equivalence tests in this package verify.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .graph_core import BipartiteGraph


@dataclass(frozen=True)
class ClockSet:
    black: np.ndarray
    white: np.ndarray


def sample_clocks(x, y, z: float, seed) -> ClockSet:
    """Exponential clocks of rates x_i/z and y_j/z.

    Exact ties between any two clocks are a null event of the model; the
    colliding draw is redrawn so downstream code can assume distinctness.
    """
    rng = np.random.default_rng(seed)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    eb = rng.exponential(z / x)
    ew = rng.exponential(z / y)
    both = np.concatenate([eb, ew])
    while len(np.unique(both)) < len(both):
        # redraw every clock involved in a collision
        vals, counts = np.unique(both, return_counts=True)
        for v in vals[counts > 1]:
            for k in np.nonzero(both == v)[0][1:]:
                if k < len(eb):
                    eb[k] = rng.exponential(z / x[k])
                else:
                    ew[k - len(eb)] = rng.exponential(z / y[k - len(eb)])
        both = np.concatenate([eb, ew])
    return ClockSet(eb, ew)


@dataclass
class QueueState:
    """Queue snapshot after a step: (white label, remaining service) pairs
    listed from the head, plus the two dials."""

    entries: list[tuple[int, float]]
    tau_b: float
    tau_w: float
    step: int


@dataclass
class ServingPiece:
    """Maximal interval on which one black client of the aggregated queue is
    served.  ``load0`` is the total remaining service at ``t0``; the load
    decreases with unit slope on the piece.  ``starts_with_arrival`` marks
    pieces opened by a black arrival (the load jumped at t0)."""

    t0: float
    t1: float
    black: int
    load0: float
    starts_with_arrival: bool


@dataclass
class ExplorationRecord:
    x: np.ndarray
    y: np.ndarray
    z: float
    clocks: ClockSet
    order: np.ndarray                 # blacks in exploration (clock) order
    intervals: np.ndarray             # (n, 2): white-dial interval per black
    offspring: list[np.ndarray]       # whites found by each black, arrival order
    delta: np.ndarray                 # total child service per black
    parent_white: np.ndarray          # parent of each black in the forest, -1 for roots
    parent_black: np.ndarray          # parent of each white, -1 if isolated
    roots: list[int]
    steps: int
    candidates: list[tuple[int, int, list[tuple[int, float]]]]
    serving: list[ServingPiece]
    point_services: list[tuple[float, int, float]]   # (t, black, load) for zero-service arrivals
    queue_history: list[QueueState] | None = None

    @property
    def n(self) -> int:
        return len(self.x)

    @property
    def m(self) -> int:
        return len(self.y)

    def forest_edges(self) -> list[tuple[int, int]]:
        edges = [(int(self.parent_black[j]), j) for j in range(self.m)
                 if self.parent_black[j] >= 0]
        edges += [(i, int(self.parent_white[i])) for i in range(self.n)
                  if self.parent_white[i] >= 0]
        return sorted(set(edges))

    def to_json(self) -> str:
        payload = {
            "x": self.x.tolist(),
            "y": self.y.tolist(),
            "z": self.z,
            "black_clocks": self.clocks.black.tolist(),
            "white_clocks": self.clocks.white.tolist(),
            "order": self.order.tolist(),
            "intervals": self.intervals.tolist(),
            "offspring": [o.tolist() for o in self.offspring],
            "delta": self.delta.tolist(),
            "parent_white": self.parent_white.tolist(),
            "parent_black": self.parent_black.tolist(),
            "roots": self.roots,
            "steps": self.steps,
            "candidates": [
                [k, v, [[j, r] for j, r in cand]]
                for k, v, cand in self.candidates
            ],
        }
        if self.queue_history is not None:
            payload["queue_history"] = [
                {"entries": [[j, r] for j, r in q.entries],
                 "tau_b": q.tau_b, "tau_w": q.tau_w, "step": q.step}
                for q in self.queue_history
            ]
        return json.dumps(payload, sort_keys=True)


def explore(x, y, z: float, clocks: ClockSet,
            record_queue: bool = False) -> ExplorationRecord:
    """Run the queue construction to completion.

    Deterministic given its inputs.  Implements both branches of the step
    rule: an empty queue starts a new component at the next black clock; a
    nonempty queue serves its head until either the service completes or
    the next black clock interrupts it, whichever comes first (exact ties
    count as completion).  Stops once the queue is empty and no black clock
    remains beyond the black dial.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n, m = len(x), len(y)
    eb, ew = clocks.black, clocks.white

    order = np.argsort(eb, kind="stable")
    worder = np.argsort(ew, kind="stable")
    ew_sorted = ew[worder]
    cuts = np.concatenate([[0.0], np.cumsum(x[order])])
    lo = np.searchsorted(ew_sorted, cuts[:-1], side="right")
    hi = np.searchsorted(ew_sorted, cuts[1:], side="right")

    intervals = np.zeros((n, 2))
    offspring: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    delta = np.zeros(n)
    for k in range(n):
        v = order[k]
        intervals[v] = (cuts[k], cuts[k + 1])
        kids = worder[lo[k]:hi[k]]
        offspring[v] = kids
        delta[v] = y[kids].sum()

    parent_white = np.full(n, -1, dtype=int)
    parent_black = np.full(m, -1, dtype=int)
    roots: list[int] = []
    candidates: list[tuple[int, int, list[tuple[int, float]]]] = []
    serving: list[ServingPiece] = []
    point_services: list[tuple[float, int, float]] = []
    history: list[QueueState] | None = [] if record_queue else None

    # queue kept as a stack: python-list end = queue head (served first)
    queue: list[list] = []          # [white_id, remaining]
    tau_b = 0.0
    tau_w = 0.0
    load = 0.0
    steps = 0
    kptr = 0                        # next unexplored black, in clock order
    arrival_opened = False          # pending piece opened by an arrival

    def push_offspring(v: int):
        kids = offspring[v]
        for j in kids:
            parent_black[j] = v
        for j in kids[::-1]:        # earliest arrival ends on top (head)
            queue.append([int(j), y[j]])

    def snapshot():
        if history is not None:
            history.append(QueueState(
                entries=[(int(j), float(r)) for j, r in reversed(queue)],
                tau_b=tau_b, tau_w=tau_w, step=steps))

    while True:
        if not queue:
            if kptr >= n:
                break               # stop rule: idle and no clock beyond the dial
            steps += 1
            v = int(order[kptr])
            kptr += 1
            tau_b = eb[v]
            tau_w += x[v]
            roots.append(v)
            push_offspring(v)
            load += delta[v]
            if delta[v] == 0.0:
                point_services.append((tau_b, v, load))
            arrival_opened = True
            snapshot()
            continue

        head = queue[-1]
        t_next = eb[order[kptr]] if kptr < n else math.inf
        finish = tau_b + head[1]
        if t_next < finish:
            # interruption: the next black becomes a child of the serving white
            steps += 1
            v = int(order[kptr])
            kptr += 1
            serving.append(ServingPiece(tau_b, t_next, int(parent_black[head[0]]),
                                        load, arrival_opened))
            elapsed = t_next - tau_b
            head[1] -= elapsed
            load -= elapsed
            parent_white[v] = head[0]
            candidates.append((steps, v,
                               [(int(j), float(r)) for j, r in reversed(queue)]))
            tau_b = t_next
            tau_w += x[v]
            push_offspring(v)
            load += delta[v]
            if delta[v] == 0.0:
                point_services.append((tau_b, v, load))
            arrival_opened = True
            snapshot()
        else:
            # the head white is served out in full
            steps += 1
            serving.append(ServingPiece(tau_b, finish, int(parent_black[head[0]]),
                                        load, arrival_opened))
            load -= head[1]
            tau_b = finish
            queue.pop()
            arrival_opened = False
            snapshot()

    return ExplorationRecord(
        x=x, y=y, z=z, clocks=clocks, order=order, intervals=intervals,
        offspring=offspring, delta=delta, parent_white=parent_white,
        parent_black=parent_black, roots=roots, steps=steps,
        candidates=candidates, serving=serving, point_services=point_services,
        queue_history=history)


def lifo_genealogy(arrivals, services) -> tuple[np.ndarray, list[int]]:
    """Genealogy of a generic single-server LIFO queue.

    Client i is a child of client j iff the arrival of i interrupts the
    service of j; arrival order equals depth-first order of the forest.
    Returns (parents, roots) with parents[i] = -1 for roots.  A client whose
    service completes exactly at another's arrival is not interrupted.
    """
    arrivals = np.asarray(arrivals, dtype=float)
    services = np.asarray(services, dtype=float)
    nc = len(arrivals)
    if nc and np.any(np.diff(arrivals) <= 0):
        raise ValueError("arrivals must be strictly increasing")
    parents = np.full(nc, -1, dtype=int)
    roots: list[int] = []
    stack: list[list] = []          # [client, remaining]
    tau = 0.0
    for i in range(nc):
        t = arrivals[i]
        while stack and tau + stack[-1][1] <= t:
            tau += stack[-1][1]
            stack.pop()
        if stack:
            stack[-1][1] -= t - tau
            parents[i] = stack[-1][0]
        else:
            roots.append(i)
        tau = t
        stack.append([i, float(services[i])])
    return parents, roots


def black_forest(record: ExplorationRecord) -> tuple[np.ndarray, list[int]]:
    """Forest on the black vertices: b is the parent of b' iff b is the
    grandparent of b' in the bipartite forest."""
    parents = np.full(record.n, -1, dtype=int)
    for i in range(record.n):
        pw = record.parent_white[i]
        if pw >= 0:
            parents[i] = record.parent_black[pw]
    return parents, list(record.roots)


def forest_heights(record: ExplorationRecord) -> np.ndarray:
    """Height of every black vertex in the bipartite forest (roots at 1)."""
    heights = np.zeros(record.n, dtype=int)
    for v in record.order:            # parents always explored first
        pw = record.parent_white[v]
        if pw < 0:
            heights[v] = 1
        else:
            heights[v] = heights[record.parent_black[pw]] + 2
    return heights


def sample_surplus_direct(record: ExplorationRecord, z: float,
                          seed) -> list[tuple[int, int]]:
    """Bernoulli surplus edges over the recorded candidates.

    A candidate (V_k, w_j) with remaining service r is kept with probability
    1 - exp(-r * x_{V_k} / z), independently.  The pair joining V_k to the
    white it interrupted may be drawn; it collapses onto an existing forest
    edge once the simple graph is assembled.
    """
    rng = np.random.default_rng(seed)
    edges: list[tuple[int, int]] = []
    for _step, v, cand in record.candidates:
        for j, remaining in cand:
            p = -math.expm1(-remaining * record.x[v] / z)
            if rng.random() < p:
                edges.append((v, j))
    return edges


def assemble_graph(record: ExplorationRecord,
                   surplus: list[tuple[int, int]]) -> BipartiteGraph:
    """Forest plus surplus edges, deduplicated, roots and orders forgotten."""
    edges = set(record.forest_edges())
    edges.update((int(i), int(j)) for i, j in surplus)
    return BipartiteGraph(record.x, record.y, sorted(edges), record.z)


def project_surplus(record: ExplorationRecord,
                    surplus: list[tuple[int, int]]) -> set[tuple[int, int]]:
    """Replace the white endpoint of each surplus edge by its parent black,
    yielding black-to-black shortcut pairs (the distance-modified graph)."""
    out = set()
    for i, j in surplus:
        pb = int(record.parent_black[j])
        if pb < 0:
            raise ValueError("surplus edge endpoint never joined the queue")
        out.add((i, pb))
    return out


def component_masses(x, y, z: float, clocks: ClockSet):
    """Vectorised per-component weight totals, without simulating the queue.

    Components correspond to excursions of the load path above its running
    minimum; a new component starts exactly at the jumps that touch the
    running minimum.  Returns (y_masses, x_masses, root_blacks) over the
    nontrivial components in exploration order.  Cross-checked against the
    full queue construction in the test suite.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    eb, ew = clocks.black, clocks.white
    order = np.argsort(eb, kind="stable")
    tb = eb[order]
    worder = np.argsort(ew, kind="stable")
    ew_sorted = ew[worder]
    ysort = y[worder]
    cuts = np.concatenate([[0.0], np.cumsum(x[order])])
    cum_y = np.concatenate([[0.0], np.cumsum(ysort)])
    idx = np.searchsorted(ew_sorted, cuts, side="right")
    delta = cum_y[idx[1:]] - cum_y[idx[:-1]]

    post = np.cumsum(delta) - tb            # path value right after each jump
    pre = post - delta                      # and just before
    prior_min = np.minimum.accumulate(np.concatenate([[np.inf], pre]))[:-1]
    is_root = pre <= prior_min + 1e-12
    comp = np.cumsum(is_root) - 1
    ncomp = int(comp[-1]) + 1 if len(comp) else 0
    y_mass = np.bincount(comp, weights=delta, minlength=ncomp)
    x_mass = np.bincount(comp, weights=x[order], minlength=ncomp)
    root_blacks = order[is_root]
    keep = y_mass > 0.0                     # nontrivial components only
    return y_mass[keep], x_mass[keep], root_blacks[keep]
