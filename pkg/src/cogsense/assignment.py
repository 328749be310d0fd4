"""Sensing assignment problem: pick the fewest (weighted) sensors per band so
that every band's OR-fused miss probability stays below its target.

Variables are laid out as ``vec(X)`` (column-major over the N_S x L matrix),
so position ``b * n_su + s`` holds ``x[s, b]``.  Among equal-cost optima every
solver returns the lexicographically smallest ``vec(X)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

PD_CLIP = 1e-6
_FEAS_TOL = 1e-9
_COST_TOL = 1e-9


class InfeasibleError(Exception):
    """No assignment meets every band's miss target within capacity."""


@dataclass
class SapInstance:
    weights: np.ndarray
    pd_hat: np.ndarray
    miss_targets: np.ndarray
    capacities: np.ndarray
    safety_margin: float = 1.0

    def __post_init__(self):
        self.pd_hat = np.atleast_2d(np.asarray(self.pd_hat, dtype=float))
        n_su, n_b = self.pd_hat.shape
        self.weights = np.broadcast_to(np.asarray(self.weights, dtype=float), (n_su,)).copy()
        self.capacities = np.broadcast_to(np.asarray(self.capacities, dtype=int), (n_su,)).copy()
        self.miss_targets = np.broadcast_to(np.asarray(self.miss_targets, dtype=float), (n_b,)).copy()
        if np.any(self.weights <= 0):
            raise ValueError("weights must be positive")
        if np.any(self.capacities < 1):
            raise ValueError("capacities must be >= 1")
        if np.any(self.miss_targets <= 0) or np.any(self.miss_targets > 1):
            raise ValueError("miss targets must lie in (0, 1]")
        if not 0 < self.safety_margin <= 1:
            raise ValueError("safety_margin must lie in (0, 1]")

    @property
    def n_su(self) -> int:
        return self.pd_hat.shape[0]

    @property
    def n_bands(self) -> int:
        return self.pd_hat.shape[1]

    def log_miss(self) -> np.ndarray:
        """ln(1 - P_hat) with P_hat clipped away from 0 and 1."""
        return np.log1p(-np.clip(self.pd_hat, PD_CLIP, 1.0 - PD_CLIP))

    def log_targets(self) -> np.ndarray:
        return np.log(self.miss_targets * self.safety_margin)


@dataclass
class AssignmentMatrix:
    x: np.ndarray
    nodes: int = 0
    stats: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.int8)

    def cost(self, inst: SapInstance) -> float:
        return float(self.x.sum(axis=1) @ inst.weights)

    def vec(self) -> np.ndarray:
        return self.x.T.reshape(-1)

    def is_feasible(self, inst: SapInstance) -> bool:
        return is_feasible(inst, self.x)


@dataclass
class LinearizedSap:
    a: np.ndarray
    c: np.ndarray
    w: np.ndarray


def build_constraints(inst: SapInstance) -> LinearizedSap:
    n_su, n_b = inst.n_su, inst.n_bands
    lm = inst.log_miss()
    a = np.zeros((n_b + n_su, n_b * n_su))
    for b in range(n_b):
        a[b, b * n_su:(b + 1) * n_su] = lm[:, b]
    a[n_b:, :] = np.tile(np.eye(n_su), n_b)
    c = np.concatenate([inst.log_targets(), inst.capacities.astype(float)])
    w = np.tile(inst.weights, n_b)
    return LinearizedSap(a, c, w)


def is_feasible(inst: SapInstance, x) -> bool:
    x = np.asarray(x)
    if np.any(x.sum(axis=1) > inst.capacities):
        return False
    got = (inst.log_miss() * x).sum(axis=0)
    return bool(np.all(got <= inst.log_targets() + _FEAS_TOL))


def _check_full_coverage(gains, need, caps):
    # every band must be reachable even with all SUs on it
    for b, nb in enumerate(need):
        if nb > _FEAS_TOL and sum(row[b] for row in gains) < nb - _FEAS_TOL:
            raise InfeasibleError(f"band {b}: all sensors together miss the target")
    if sum(caps) <= 0 and any(nb > _FEAS_TOL for nb in need):
        raise InfeasibleError("no sensing capacity")


def solve_bb(inst: SapInstance) -> AssignmentMatrix:
    """Exact depth-first branch-and-bound.

    Within each band the SUs are branched on strongest-first (largest
    |ln(1 - P_hat)|), taking the 1-branch first. The bound adds to the current
    cost, for every band still short of its target, the fewest extra sensors
    that could close the gap using the strongest sensors not yet decided for
    it. Nodes whose bound exceeds the incumbent are cut; ties are explored so
    the lexicographically smallest ``vec(X)`` wins among equal-cost optima.
    """
    n_su, n_b = inst.n_su, inst.n_bands
    gains = (-inst.log_miss()).tolist()              # gains[s][b] > 0
    need = (-inst.log_targets()).tolist()            # need[b]
    w = inst.weights.tolist()
    caps = inst.capacities.tolist()
    _check_full_coverage(gains, need, caps)
    w_min = min(w)

    order = [sorted(range(n_su), key=lambda s, b=b: -gains[s][b]) for b in range(n_b)]
    n_var = n_su * n_b
    # decision sequence: band-major, strongest SU first within a band
    seq = [(b, s) for b in range(n_b) for s in order[b]]

    best_cost = math.inf
    best_vec: list[int] | None = None
    x = [[0] * n_b for _ in range(n_su)]
    decided = [[False] * n_b for _ in range(n_su)]
    resid = list(need)
    capl = list(caps)
    nodes = 0

    def bound(b0: int, cost: float) -> float:
        total = 0
        for b in range(b0, n_b):
            r = resid[b]
            if r <= _FEAS_TOL:
                continue
            acc = 0.0
            k = 0
            for s in order[b]:
                if decided[s][b] or capl[s] <= 0:
                    continue
                acc += gains[s][b]
                k += 1
                if acc >= r - _FEAS_TOL:
                    break
            else:
                return math.inf
            total += k
        return cost + total * w_min

    def leaf(cost: float) -> None:
        nonlocal best_cost, best_vec
        vec = [x[s][b] for b in range(n_b) for s in range(n_su)]
        if cost < best_cost - _COST_TOL or (cost <= best_cost + _COST_TOL and vec < best_vec):
            best_cost = cost
            best_vec = vec

    def dfs(i: int, cost: float) -> None:
        nonlocal nodes
        nodes += 1
        if i == n_var:
            leaf(cost)
            return
        b, s = seq[i]
        decided[s][b] = True
        if capl[s] > 0 and resid[b] > _FEAS_TOL:
            capl[s] -= 1
            resid[b] -= gains[s][b]
            x[s][b] = 1
            c1 = cost + w[s]
            lb = bound(b, c1)
            if lb < math.inf and lb <= best_cost + _COST_TOL:
                dfs(i + 1, c1)
            x[s][b] = 0
            resid[b] += gains[s][b]
            capl[s] += 1
        lb = bound(b, cost)
        if lb < math.inf and lb <= best_cost + _COST_TOL:
            dfs(i + 1, cost)
        decided[s][b] = False

    dfs(0, 0.0)
    if best_vec is None:
        raise InfeasibleError("no feasible sensing assignment")
    xm = np.array(best_vec, dtype=np.int8).reshape(n_b, n_su).T
    return AssignmentMatrix(xm, nodes=nodes)


def hungarian(cost) -> tuple[np.ndarray, float]:
    """Minimum-cost assignment of every row to a distinct column.

    Returns ``cols`` with ``cols[i]`` the column of row ``i`` and the total
    cost. Tall matrices are solved through their transpose; rows left
    without a column get -1.
    """
    c = np.asarray(cost, dtype=float)
    if c.ndim != 2:
        raise ValueError("cost must be a 2-D matrix")
    if not np.all(np.isfinite(c)):
        raise ValueError("costs must be finite")
    cols = _hungarian(c.tolist())
    total = float(sum(c[i, j] for i, j in enumerate(cols) if j >= 0))
    return np.array(cols, dtype=int), total


def _hungarian(a: list[list[float]]) -> list[int]:
    # shortest augmenting path with potentials, O(n^2 m) for n <= m
    n = len(a)
    if n == 0:
        return []
    m = len(a[0])
    if n > m:
        cols_t = _hungarian([list(col) for col in zip(*a)])
        rows = [-1] * n
        for j, i in enumerate(cols_t):
            rows[i] = j
        return rows
    inf = math.inf
    u = [0.0] * (n + 1)
    v = [0.0] * (m + 1)
    p = [0] * (m + 1)       # p[j]: row (1-based) matched to column j
    way = [0] * (m + 1)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = [inf] * (m + 1)
        used = [False] * (m + 1)
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = inf
            j1 = 0
            row = a[i0 - 1]
            ui0 = u[i0]
            for j in range(1, m + 1):
                if not used[j]:
                    cur = row[j - 1] - ui0 - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(m + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    cols = [-1] * n
    for j in range(1, m + 1):
        if p[j]:
            cols[p[j] - 1] = j - 1
    return cols


def solve_iterative_hungarian(inst: SapInstance) -> AssignmentMatrix:
    """Rounds of Hungarian matching between still-unsatisfied bands and SUs
    with spare capacity, stopping as soon as every band meets its target.

    A pair's cost is its miss reduction capped at the band's remaining gap
    (negated), so one round closes every band whenever a one-sensor-per-band
    cover exists. If the rounds strand a band while some feasible assignment
    exists, the exact search takes over so a feasible instance is never
    reported infeasible (``stats["fallback"]`` is then set).
    """
    n_su, n_b = inst.n_su, inst.n_bands
    gains = (-inst.log_miss()).tolist()
    resid = [-math.log(t * inst.safety_margin) for t in inst.miss_targets.tolist()]
    capl = inst.capacities.tolist()
    x = [[0] * n_b for _ in range(n_su)]
    rounds = 0
    while True:
        open_bands = [b for b in range(n_b) if resid[b] > _FEAS_TOL]
        if not open_bands:
            return AssignmentMatrix(np.array(x, dtype=np.int8), stats={"rounds": rounds})
        free = [s for s in range(n_su) if capl[s] > 0]
        cost = []
        for b in open_bands:
            r = resid[b]
            row = []
            for s in free:
                g = 0.0 if x[s][b] else gains[s][b]
                # tiny preference for the raw gain among equally capped pairs
                row.append(-((g if g < r else r) + 1e-9 * g))
            cost.append(row)
        cols = _row_minima_if_distinct(cost) if free else []
        if cols is None:
            cols = _hungarian(cost)
        rounds += 1
        progress = False
        for r_i, j in enumerate(cols):
            if j < 0:
                continue
            b, s = open_bands[r_i], free[j]
            if x[s][b]:
                continue
            x[s][b] = 1
            capl[s] -= 1
            resid[b] -= gains[s][b]
            progress = True
        if not progress:
            exact = solve_bb(inst)
            exact.stats["fallback"] = True
            exact.stats["rounds"] = rounds
            return exact


def _row_minima_if_distinct(cost: list[list[float]]) -> list[int] | None:
    # every row's cheapest column distinct => that is a min-cost assignment
    if len(cost) > len(cost[0]):
        return None
    picks = []
    for row in cost:
        j = row.index(min(row))
        if j in picks:
            return None
        picks.append(j)
    return picks


def brute_force_sap(inst: SapInstance) -> AssignmentMatrix:
    """Enumerate every binary matrix; reference oracle for small instances."""
    n_su, n_b = inst.n_su, inst.n_bands
    n = n_su * n_b
    if n > 20:
        raise ValueError("brute force limited to n_su * n_bands <= 20")
    # row k of `bits` is the k-th vector in lexicographic order
    k = np.arange(2 ** n, dtype=np.int64)
    bits = ((k[:, None] >> np.arange(n - 1, -1, -1)) & 1).astype(np.int8)
    lin = build_constraints(inst)
    lhs = bits @ lin.a.T
    feasible = np.all(lhs[:, :n_b] <= lin.c[:n_b] + _FEAS_TOL, axis=1) & \
        np.all(lhs[:, n_b:] <= lin.c[n_b:] + 0.5, axis=1)
    if not feasible.any():
        raise InfeasibleError("no feasible sensing assignment")
    costs = bits @ lin.w
    costs = np.where(feasible, costs, np.inf)
    best = costs.min()
    idx = int(np.flatnonzero(costs <= best + _COST_TOL)[0])
    x = bits[idx].reshape(n_b, n_su).T
    return AssignmentMatrix(x, nodes=2 ** n)


SOLVERS = {
    "bb": solve_bb,
    "ih": solve_iterative_hungarian,
    "brute": brute_force_sap,
}


# plain-text instance records: `key = value`, rows of pd_hat separated by ';'
_FIELD_ORDER = ("n_su", "n_bands", "weights", "capacities", "miss_targets",
                "safety_margin", "pd_hat")


def format_instance(inst: SapInstance) -> str:
    def csv(v):
        return ",".join(repr(float(a)) if isinstance(a, (float, np.floating)) else str(a)
                        for a in np.asarray(v).tolist())
    lines = [
        "# sensing assignment instance",
        f"n_su = {inst.n_su}",
        f"n_bands = {inst.n_bands}",
        f"weights = {csv(inst.weights)}",
        f"capacities = {csv(inst.capacities)}",
        f"miss_targets = {csv(inst.miss_targets)}",
        f"safety_margin = {inst.safety_margin!r}",
        "pd_hat = " + "; ".join(csv(row) for row in inst.pd_hat),
    ]
    return "\n".join(lines) + "\n"


def parse_instance(text: str) -> SapInstance:
    rec = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        key, val = (t.strip() for t in line.split("=", 1))
        if key not in _FIELD_ORDER:
            raise ValueError(f"line {lineno}: unknown field '{key}'")
        rec[key] = val
    missing = [k for k in ("pd_hat", "miss_targets") if k not in rec]
    if missing:
        raise ValueError(f"missing fields: {', '.join(missing)}")
    pd_hat = np.array([[float(a) for a in row.split(",")] for row in rec["pd_hat"].split(";")])
    n_su, n_b = pd_hat.shape
    if int(rec.get("n_su", n_su)) != n_su or int(rec.get("n_bands", n_b)) != n_b:
        raise ValueError("pd_hat shape disagrees with n_su / n_bands")

    def vec(key, default):
        if key not in rec:
            return default
        return [float(a) for a in rec[key].split(",")]

    return SapInstance(
        weights=vec("weights", 1.0),
        pd_hat=pd_hat,
        miss_targets=vec("miss_targets", 0.1),
        capacities=[int(round(c)) for c in vec("capacities", [1.0] * n_su)],
        safety_margin=float(rec.get("safety_margin", 1.0)),
    )


def load_instance(path) -> SapInstance:
    with open(path) as fh:
        return parse_instance(fh.read())
