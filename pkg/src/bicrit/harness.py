"""Experiment orchestration: replicated discrete runs, the Poissonised
surplus sampler, limit ensembles, and statistical comparisons.

The desk-scale surrogate for the heavy limit statements is scalar: the
k-th largest rescaled white component weight against the k-th longest
excursion of the simulated tilted limit path.  Full metric-measure
convergence is not checked here; the exact identity suite carries the
per-run guarantees instead.
"""

from __future__ import annotations

import hashlib
import json
import math
import multiprocessing
import os
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy import stats

from . import encoding, lifo
from .limit_sim import LimitParams, MarkSet, simulate_z
from .poisson_model import sample_conditioned
from .weights import (CriticalPair, WeightSpec, spec_from_dict, spec_to_dict,
                      validate_critical_pair)

REPORT_SCHEMA = "bicrit-run-report-1"


@dataclass
class LimitConfig:
    horizon: float = 10.0
    step: float = 1e-3
    paths: int = 2000
    epsilon: float | None = None


@dataclass
class ExperimentConfig:
    spec_b: WeightSpec
    spec_w: WeightSpec
    theta: float
    n: int
    replicates: int = 100
    seed: int = 0
    top_k: int = 2
    features: str = "full"           # "masses" skips surplus and diameters
    workers: int = 1
    limit: LimitConfig = field(default_factory=LimitConfig)
    out_dir: str | None = None

    def pair(self) -> CriticalPair:
        return CriticalPair(self.spec_b, self.spec_w, self.theta, self.n)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["spec_b"] = spec_to_dict(self.spec_b)
        d["spec_w"] = spec_to_dict(self.spec_w)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        d["spec_b"] = spec_from_dict(d["spec_b"])
        d["spec_w"] = spec_from_dict(d["spec_w"])
        if "limit" in d and isinstance(d["limit"], dict):
            d["limit"] = LimitConfig(**d["limit"])
        return cls(**d)


@dataclass
class ComponentSummary:
    x_mass: float
    y_mass: float
    root_black: int
    surplus_count: int = 0
    diameter_bound: int = 0
    y_rank: int = 0                  # 1-based rank of this component by y mass


@dataclass
class ReplicateSummary:
    index: int
    seed: int
    kappa: int
    top_by_x: list[ComponentSummary]
    y_ranked_masses: list[float]     # k largest y masses, descending


@dataclass
class RunReport:
    config: dict
    replicates: list[ReplicateSummary]
    kappa_zero_count: int
    partial: bool = False            # resource cap hit before all replicates
    schema: str = REPORT_SCHEMA

    def to_dict(self) -> dict:
        return {
            "schema": self.schema,
            "config": self.config,
            "kappa_zero_count": self.kappa_zero_count,
            "partial": self.partial,
            "replicates": [
                {
                    "index": r.index, "seed": r.seed, "kappa": r.kappa,
                    "top_by_x": [asdict(c) for c in r.top_by_x],
                    "y_ranked_masses": r.y_ranked_masses,
                }
                for r in self.replicates
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        reps = [ReplicateSummary(
            index=r["index"], seed=r["seed"], kappa=r["kappa"],
            top_by_x=[ComponentSummary(**c) for c in r["top_by_x"]],
            y_ranked_masses=list(r["y_ranked_masses"]))
            for r in d["replicates"]]
        return cls(config=d["config"], replicates=reps,
                   kappa_zero_count=d["kappa_zero_count"],
                   partial=d.get("partial", False), schema=d["schema"])

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def content_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


# ---------------------------------------------------------------------------
# Poissonised surplus edges


@dataclass
class _TimelinePiece:
    t0: float
    t1: float
    r0: float                        # reflected load at t0
    slope: float                     # -1 while serving, 0 while idle
    black: int | None
    jumped: bool                     # load jumped upward at t0

    def r_end(self) -> float:
        return self.r0 + self.slope * (self.t1 - self.t0)


def _build_timeline(record: lifo.ExplorationRecord) -> list[_TimelinePiece]:
    pieces = sorted(record.serving, key=lambda p: p.t0)
    out: list[_TimelinePiece] = []
    cursor = 0.0
    prev_end = 0.0
    for p in pieces:
        if p.t0 > cursor:
            out.append(_TimelinePiece(cursor, p.t0, 0.0, 0.0, None, False))
            prev_end = 0.0
        jumped = p.load0 > prev_end + 1e-12
        out.append(_TimelinePiece(p.t0, p.t1, p.load0, -1.0, p.black, jumped))
        cursor = p.t1
        prev_end = p.load0 - (p.t1 - p.t0)
    return out


def _locate_previous(timeline: list[_TimelinePiece], j_atom: int,
                     y: float) -> tuple[float, int | None]:
    """Largest time before the atom's piece at which the load was <= y,
    together with the client arriving there (the landing is always a piece
    boundary where the load jumps above y)."""
    for j in range(j_atom - 1, -1, -1):
        piece = timeline[j]
        if piece.r_end() <= y + 1e-12:
            nxt = timeline[j + 1]
            return piece.t1, nxt.black
    return 0.0, None


def poissonized_surplus(record: lifo.ExplorationRecord,
                        sigma: encoding.SigmaTransfer, seed
                        ) -> tuple[MarkSet, list[tuple[int, int]]]:
    """Surplus edges from a Poisson rain under the reflected load path.

    Atoms fall with rate 1/z on the region whose first coordinate runs
    through the transferred (black-weight) scale and whose fibre at time t
    is [0, load(t)].  Each atom maps to the serving client and the client
    served at the last time the load sat at or below the atom's level;
    self-pairs are dropped from the edge list but kept in the marks.
    """
    rng = np.random.default_rng(seed)
    z = record.z
    timeline = _build_timeline(record)
    x, delta = record.x, record.delta

    areas = []
    kinds = []                       # ("piece", timeline index) or ("point", k)
    for j, piece in enumerate(timeline):
        if piece.black is None:
            continue
        length = piece.t1 - piece.t0
        rate = x[piece.black] / delta[piece.black]
        areas.append(rate * (piece.r0 * length - 0.5 * length ** 2))
        kinds.append(("piece", j))
    point_lookup = {}
    for t, k, load in record.point_services:
        if load > 0.0:
            areas.append(x[k] * load)
            kinds.append(("point", len(point_lookup)))
            point_lookup[len(point_lookup)] = (t, k, load)
    areas = np.asarray(areas, dtype=float)
    total_area = float(areas.sum())
    count = int(rng.poisson(total_area / z)) if total_area > 0 else 0
    if count == 0:
        return MarkSet(np.empty((0, 2)), np.empty((0, 2))), []

    boundary = {p.t0: j for j, p in enumerate(timeline)}
    pairs = np.empty((count, 2))
    atoms = np.empty((count, 2))
    edges: list[tuple[int, int]] = []
    chosen = rng.choice(len(areas), size=count, p=areas / total_area)
    for idx, which in enumerate(chosen):
        kind, ref = kinds[which]
        if kind == "piece":
            piece = timeline[ref]
            length = piece.t1 - piece.t0
            u = rng.random()
            # inverse CDF of the linear density r0 - tau on [0, length]
            area_t = piece.r0 * length - 0.5 * length ** 2
            tau = piece.r0 - math.sqrt(max(piece.r0 ** 2 - 2.0 * u * area_t, 0.0))
            tau = min(tau, length)
            t = piece.t0 + tau
            refl_t = piece.r0 - tau
            y = rng.uniform(0.0, refl_t)
            s = float(sigma.value(piece.t0)) + (x[piece.black] / delta[piece.black]) * tau
            b = piece.black
            j_atom = ref
        else:
            t, k, load = point_lookup[ref]
            y = rng.uniform(0.0, load)
            s = rng.uniform(sigma.left_value(t), float(sigma.value(t)))
            b = k
            j_atom = boundary.get(t)
            if j_atom is None:
                # the zero-service arrival splits a serving piece; find the
                # piece starting at t
                j_atom = next(j for j, p in enumerate(timeline) if p.t0 == t)
        t_prev, b_prev = _locate_previous(timeline, j_atom, y)
        pairs[idx] = (t, t_prev)
        atoms[idx] = (s, y)
        if b_prev is not None and b_prev != b:
            edges.append((int(b), int(b_prev)))
    return MarkSet(pairs, atoms), edges


# ---------------------------------------------------------------------------
# discrete replicated runs


def _masses_only_replicate(pair: CriticalPair, top_k: int,
                           seed: int) -> ReplicateSummary:
    coupling = sample_conditioned(pair, seed)
    clocks = lifo.ClockSet(coupling.black_clocks, coupling.white_clocks)
    y_mass, x_mass, roots = lifo.component_masses(
        coupling.black_weights, coupling.white_weights, pair.z, clocks)
    kappa = len(y_mass)
    by_x = np.argsort(-x_mass, kind="stable")
    by_y = np.argsort(-y_mass, kind="stable")
    y_rank_of = np.empty(kappa, dtype=int)
    y_rank_of[by_y] = np.arange(1, kappa + 1)
    tops = [ComponentSummary(float(x_mass[c]), float(y_mass[c]),
                             int(roots[c]), y_rank=int(y_rank_of[c]))
            for c in by_x[:top_k]]
    y_ranked = sorted((float(v) for v in y_mass), reverse=True)[:top_k]
    return ReplicateSummary(0, seed, kappa, tops, y_ranked)


def _full_replicate(pair: CriticalPair, top_k: int, seed: int) -> ReplicateSummary:
    coupling = sample_conditioned(pair, seed)
    clocks = lifo.ClockSet(coupling.black_clocks, coupling.white_clocks)
    x, y = coupling.black_weights, coupling.white_weights
    record = lifo.explore(x, y, pair.z, clocks)
    zpaths = encoding.z_process(record)
    sigma = encoding.sigma_transfer(record)
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
    _marks, surplus_pairs = poissonized_surplus(record, sigma, rng)

    exc = encoding.excursions(zpaths.queue_load,
                              x_by_jump=x[record.order])
    kappa = len(exc)
    if kappa == 0:
        return ReplicateSummary(0, seed, 0, [], [])
    x_mass = np.array([e.x_mass for e in exc])
    y_mass = np.array([e.y_mass for e in exc])
    comp_of_black = np.full(record.n, -1, dtype=int)
    for e in exc:
        for j in e.member_jumps:
            comp_of_black[record.order[j]] = e.component_id
    surplus_per_comp = np.zeros(kappa, dtype=int)
    surplus_by_comp: dict[int, set] = {}
    for b, b2 in set(surplus_pairs):
        c = comp_of_black[b]
        surplus_per_comp[c] += 1
        surplus_by_comp.setdefault(c, set()).add((b, b2))

    by_x = np.argsort(-x_mass, kind="stable")
    by_y = np.argsort(-y_mass, kind="stable")
    y_rank_of = np.empty(kappa, dtype=int)
    y_rank_of[by_y] = np.arange(1, kappa + 1)

    tops = []
    for c in by_x[:top_k]:
        e = exc[int(c)]
        blacks = [int(record.order[j]) for j in e.member_jumps]
        diam = _component_diameter(record, blacks,
                                   surplus_by_comp.get(int(c), set()))
        tops.append(ComponentSummary(
            float(x_mass[c]), float(y_mass[c]), int(record.order[e.root_jump]),
            surplus_count=int(surplus_per_comp[c]), diameter_bound=diam,
            y_rank=int(y_rank_of[c])))
    y_ranked = sorted((float(v) for v in y_mass), reverse=True)[:top_k]
    return ReplicateSummary(0, seed, kappa, tops, y_ranked)


def _component_diameter(record: lifo.ExplorationRecord, blacks: list[int],
                        surplus: set[tuple[int, int]]) -> int:
    """Double BFS sweep on the component of the distance-modified graph
    (forest plus black-to-black shortcuts)."""
    whites = sorted({int(j) for b in blacks for j in record.offspring[b]})
    bid = {b: i for i, b in enumerate(blacks)}
    wid = {w: len(blacks) + i for i, w in enumerate(whites)}
    adj: list[list[int]] = [[] for _ in range(len(blacks) + len(whites))]

    def add(u, v):
        adj[u].append(v)
        adj[v].append(u)

    for w in whites:
        add(bid[int(record.parent_black[w])], wid[w])
    for b in blacks:
        pw = record.parent_white[b]
        if pw >= 0:
            add(bid[b], wid[int(pw)])
    for b, b2 in surplus:
        add(bid[b], bid[b2])

    def bfs(src):
        dist = [-1] * len(adj)
        dist[src] = 0
        frontier = [src]
        while frontier:
            nxt = []
            for v in frontier:
                for w in adj[v]:
                    if dist[w] == -1:
                        dist[w] = dist[v] + 1
                        nxt.append(w)
            frontier = nxt
        return dist

    d0 = bfs(0)
    far = max(range(len(adj)), key=lambda v: d0[v])
    return max(bfs(far))


def _one_replicate(job) -> ReplicateSummary:
    pair, top_k, features, seed = job
    if features == "masses":
        return _masses_only_replicate(pair, top_k, seed)
    return _full_replicate(pair, top_k, seed)


def run_discrete(config: ExperimentConfig) -> RunReport:
    """Replicated pipeline: conditioned sampling, exploration, encodings,
    component extraction and the Poissonised surplus, with rescaled
    observables recorded per replicate.

    Deterministic given the seed: replicate seeds are spawned up front and
    results are merged in index order, so the report does not depend on the
    worker count."""
    pair = config.pair()
    validate_critical_pair(pair)
    seed_seq = np.random.SeedSequence(config.seed)
    child_seeds = [int(s.generate_state(1)[0]) for s in
                   seed_seq.spawn(config.replicates)]
    jobs = [(pair, config.top_k, config.features, s) for s in child_seeds]
    partial = False
    if config.workers > 1 and len(jobs) > 1:
        with multiprocessing.Pool(config.workers) as pool:
            reps = pool.map(_one_replicate, jobs, chunksize=16)
    else:
        reps = []
        try:
            for j in jobs:
                reps.append(_one_replicate(j))
        except MemoryError:
            partial = True
    kappa_zero = 0
    for i, rep in enumerate(reps):
        rep.index = i
        if rep.kappa == 0:
            kappa_zero += 1
    return RunReport(config=config.to_dict(), replicates=reps,
                     kappa_zero_count=kappa_zero, partial=partial)


# ---------------------------------------------------------------------------
# limit ensembles and comparison


@dataclass
class LimitEnsemble:
    params: LimitParams
    lengths: np.ndarray              # (paths, top_k) longest-excursion lengths
    horizon: float
    step: float


def top_excursion_lengths(values: np.ndarray, step: float, k: int) -> np.ndarray:
    refl = values - np.minimum.accumulate(values)
    pos = refl > 0
    flips = np.diff(pos.astype(np.int8))
    starts = np.flatnonzero(flips == 1) + 1
    ends = np.flatnonzero(flips == -1)
    if pos[-1]:
        ends = np.append(ends, len(pos) - 1)
    lengths = (ends - starts + 1) * step
    top = np.sort(lengths)[::-1]
    out = np.zeros(k)
    out[:min(k, len(top))] = top[:k]
    return out


def simulate_limit_ensemble(params: LimitParams, paths: int, horizon: float,
                            step: float, top_k: int, seed) -> LimitEnsemble:
    seq = (seed if isinstance(seed, np.random.SeedSequence)
           else np.random.SeedSequence(seed))
    lengths = np.empty((paths, top_k))
    for i, child in enumerate(seq.spawn(paths)):
        path = simulate_z(params, horizon, step, child)
        lengths[i] = top_excursion_lengths(path.values, step, top_k)
    return LimitEnsemble(params, lengths, horizon, step)


@dataclass
class ComparisonResult:
    ks_y: list[float]                # per rank k, y-mass scale vs lengths
    ks_x: list[float]                # x-mass scale vs rho * lengths
    mass_exponent: float
    threshold: float
    passed: bool


def compare_with_limit(report: RunReport, ensemble: LimitEnsemble,
                       threshold: float = 0.1,
                       mass_exponent: float | None = None) -> ComparisonResult:
    """Two-sample KS distances between rescaled component weights and the
    ranked excursion lengths of the limit ensemble."""
    cfg = report.config
    n = cfg["n"]
    pair_regime = validate_critical_pair(ExperimentConfig.from_dict(cfg).pair())
    if mass_exponent is None:
        alpha = 2.0 if pair_regime.alpha is None else pair_regime.alpha
        mass_exponent = alpha / (alpha + 1.0)
    top_k = ensemble.lengths.shape[1]
    if top_k > cfg["top_k"]:
        raise ValueError("ensemble ranks exceed the ranks recorded in the run")
    rho = ensemble.params.rho
    ks_y = []
    ks_x = []
    for k in range(top_k):
        disc_y = np.array([r.y_ranked_masses[k] for r in report.replicates
                           if len(r.y_ranked_masses) > k]) / n ** mass_exponent
        limit_k = ensemble.lengths[:, k]
        ks_y.append(float(stats.ks_2samp(disc_y, limit_k).statistic))
        disc_x = np.array([r.top_by_x[k].x_mass for r in report.replicates
                           if len(r.top_by_x) > k]) / n ** mass_exponent
        ks_x.append(float(stats.ks_2samp(disc_x, rho * limit_k).statistic))
    passed = all(v <= threshold for v in ks_y)
    return ComparisonResult(ks_y, ks_x, mass_exponent, threshold, passed)


@dataclass
class RankingReport:
    agreement_frequency: float
    ratio_mean: float
    ratio_ci_low: float
    ratio_ci_high: float
    replicates_used: int


def ranking_consistency(report: RunReport, k_max: int = 1) -> RankingReport:
    """Frequency with which the top components by black weight are exactly
    the top components by white weight, plus the mass-ratio statistics."""
    agree = 0
    used = 0
    ratios = []
    for rep in report.replicates:
        if len(rep.top_by_x) < k_max:
            continue
        used += 1
        if all(rep.top_by_x[k].y_rank == k + 1 for k in range(k_max)):
            agree += 1
        top = rep.top_by_x[0]
        if top.y_mass > 0:
            ratios.append(top.x_mass / top.y_mass)
    ratios = np.asarray(ratios)
    mean = float(ratios.mean()) if len(ratios) else math.nan
    se = float(ratios.std(ddof=1) / math.sqrt(len(ratios))) if len(ratios) > 1 else math.nan
    return RankingReport(
        agreement_frequency=agree / used if used else math.nan,
        ratio_mean=mean, ratio_ci_low=mean - 1.96 * se,
        ratio_ci_high=mean + 1.96 * se, replicates_used=used)


# ---------------------------------------------------------------------------
# report emission


def emit(report: RunReport, out_dir: str, formats=("csv", "json")) -> dict:
    """Write the report as CSV tables plus a JSON summary; returns paths."""
    os.makedirs(out_dir, exist_ok=True)
    written = {}
    if "json" in formats:
        path = os.path.join(out_dir, "report.json")
        with open(path, "w") as fh:
            fh.write(report.canonical_json())
        written["json"] = path
    if "csv" in formats:
        path = os.path.join(out_dir, "components.csv")
        with open(path, "w") as fh:
            fh.write("replicate,seed,kappa,rank_x,x_mass,y_mass,"
                     "surplus_count,diameter_bound,y_rank\n")
            for rep in report.replicates:
                for k, comp in enumerate(rep.top_by_x):
                    fh.write(f"{rep.index},{rep.seed},{rep.kappa},{k + 1},"
                             f"{comp.x_mass!r},{comp.y_mass!r},"
                             f"{comp.surplus_count},{comp.diameter_bound},"
                             f"{comp.y_rank}\n")
        written["csv"] = path
    meta = os.path.join(out_dir, "summary.json")
    with open(meta, "w") as fh:
        json.dump({"schema": report.schema, "hash": report.content_hash(),
                   "replicates": len(report.replicates),
                   "kappa_zero_count": report.kappa_zero_count},
                  fh, sort_keys=True, indent=2)
    written["summary"] = meta
    return written
