"""Scenario configuration: flat ``key = value`` records.

Arrays are comma separated. A per-band or per-SU field given a single value
applies to every band or SU. ``#`` starts a comment.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from functools import lru_cache
from pathlib import Path

import numpy as np

POLICIES = ("proposed", "fixed_hopping", "ducb", "myopic", "genie")
SOLVER_NAMES = ("bb", "ih")


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


def _default_mu() -> list[float]:
    # three of the ten bands carry ten times the throughput
    return [1.0, 1.0, 10.0, 1.0, 1.0, 10.0, 1.0, 1.0, 10.0, 1.0]


@dataclass
class ScenarioConfig:
    n_s: int = 6
    n_b: int = 10
    l: int = 3
    d: int = 2
    epsilon: float = 0.1
    alpha1: float = 0.01
    alpha2: float = 0.1
    k_s: list = field(default_factory=lambda: [1])
    weights: list = field(default_factory=lambda: [1.0])
    p_miss_target: list = field(default_factory=lambda: [0.1])
    p_f_fc: float = 0.01
    num_samples: int = 50
    horizon: int = 10_000
    runs: int = 100
    seed: int = 12345
    solver: str = "bb"
    policy: str = "proposed"
    p00: list = field(default_factory=lambda: [0.9])
    p11: list = field(default_factory=lambda: [0.9])
    mu: list = field(default_factory=_default_mu)
    # "auto": mean SNR at which the fixed D-diversity policy meets the miss target
    network_snr_db: object = "auto"
    shadow_std_db: float = 9.0
    fading: bool = True
    stochastic_throughput: bool = False
    fixed_network: bool = False
    permutations: int = 0
    safety_margin: float = 1.0
    su_q_init: float = 0.5
    ducb_gamma: float = 0.99
    ducb_xi: float = 0.6
    time_solvers: bool = False
    miss_window: int = 500
    sample_points: int = 200
    jobs: int = 1

    # ---- derived views -------------------------------------------------
    def per_band(self, name: str) -> np.ndarray:
        return np.broadcast_to(np.asarray(getattr(self, name), dtype=float), (self.n_b,)).copy()

    def per_su(self, name: str, dtype=float) -> np.ndarray:
        return np.broadcast_to(np.asarray(getattr(self, name), dtype=dtype), (self.n_s,)).copy()

    def resolved_snr_db(self) -> float:
        if isinstance(self.network_snr_db, str):
            return calibrated_network_snr(self.d, self.p_f_fc, self.num_samples,
                                          self.shadow_std_db, float(self.per_band("p_miss_target").mean()),
                                          self.fading)
        return float(self.network_snr_db)

    def replace(self, **changes) -> "ScenarioConfig":
        cfg = dataclasses.replace(self, **changes)
        cfg.validate()
        return cfg

    # ---- validation ----------------------------------------------------
    def validate(self) -> "ScenarioConfig":
        def need(cond, name, msg):
            if not cond:
                raise ConfigError(name, msg)

        need(self.n_s >= 1, "n_s", "must be >= 1")
        need(self.n_b >= 1, "n_b", "must be >= 1")
        need(1 <= self.l <= self.n_b, "l", "must lie in 1..n_b")
        need(1 <= self.d <= self.n_s, "d", "must lie in 1..n_s")
        need(self.n_s // self.d <= self.n_b, "d", "more SU groups than subbands")
        need(0.0 <= self.epsilon <= 1.0, "epsilon", "must lie in [0, 1]")
        need(0.0 < self.alpha1 <= 1.0, "alpha1", "must lie in (0, 1]")
        need(0.0 < self.alpha2 <= 1.0, "alpha2", "must lie in (0, 1]")
        need(0.0 < self.p_f_fc < 1.0, "p_f_fc", "must lie in (0, 1)")
        need(self.num_samples >= 1, "num_samples", "must be >= 1")
        need(self.horizon >= 1, "horizon", "must be >= 1")
        need(self.runs >= 1, "runs", "must be >= 1")
        need(self.solver in SOLVER_NAMES, "solver", f"must be one of {', '.join(SOLVER_NAMES)}")
        need(self.policy in POLICIES, "policy", f"must be one of {', '.join(POLICIES)}")
        need(self.shadow_std_db >= 0, "shadow_std_db", "must be >= 0")
        need(0.0 < self.safety_margin <= 1.0, "safety_margin", "must lie in (0, 1]")
        need(0.0 <= self.su_q_init <= 1.0, "su_q_init", "must lie in [0, 1]")
        need(0.0 < self.ducb_gamma < 1.0, "ducb_gamma", "must lie in (0, 1)")
        need(self.ducb_xi > 0, "ducb_xi", "must be positive")
        need(self.permutations >= 0, "permutations", "must be >= 0")
        need(self.miss_window >= 1, "miss_window", "must be >= 1")
        need(self.sample_points >= 2, "sample_points", "must be >= 2")
        need(self.jobs >= 1, "jobs", "must be >= 1")
        if isinstance(self.network_snr_db, str):
            need(self.network_snr_db == "auto", "network_snr_db", "must be a number or 'auto'")
        for name in ("p00", "p11", "mu", "p_miss_target"):
            arr = np.asarray(getattr(self, name), dtype=float)
            need(arr.size in (1, self.n_b), name, f"needs 1 or n_b={self.n_b} values, got {arr.size}")
        for name in ("k_s", "weights"):
            arr = np.asarray(getattr(self, name), dtype=float)
            need(arr.size in (1, self.n_s), name, f"needs 1 or n_s={self.n_s} values, got {arr.size}")
        p00, p11 = self.per_band("p00"), self.per_band("p11")
        need(np.all((p00 >= 0) & (p00 <= 1)), "p00", "probabilities must lie in [0, 1]")
        need(np.all((p11 >= 0) & (p11 <= 1)), "p11", "probabilities must lie in [0, 1]")
        need(np.all(self.per_band("mu") >= 0), "mu", "must be non-negative")
        tgt = self.per_band("p_miss_target")
        need(np.all((tgt > 0) & (tgt < 1)), "p_miss_target", "must lie in (0, 1)")
        need(np.all(self.per_su("k_s") >= 1), "k_s", "must be >= 1")
        need(np.all(self.per_su("weights") > 0), "weights", "must be positive")
        return self

    # ---- text form -----------------------------------------------------
    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, (list, tuple, np.ndarray)):
                v = ",".join(_fmt(a) for a in v)
            else:
                v = _fmt(v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


_FIELD_TYPES = {f.name: f for f in fields(ScenarioConfig)}
_LIST_FIELDS = {"k_s", "weights", "p_miss_target", "p00", "p11", "mu"}


def _coerce(name: str, raw: str):
    default = getattr(ScenarioConfig(), name)
    try:
        if name in _LIST_FIELDS:
            conv = int if name == "k_s" else float
            vals = [conv(t) for t in raw.split(",") if t.strip()]
            if not vals:
                raise ValueError("empty list")
            return vals
        if name == "network_snr_db":
            return "auto" if raw.strip().lower() == "auto" else float(raw)
        if isinstance(default, bool):
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if isinstance(default, int):
            f = float(raw)
            if f != int(f):
                raise ValueError(f"not an integer: {raw!r}")
            return int(f)
        if isinstance(default, float):
            return float(raw)
        return raw.strip()
    except ValueError as exc:
        raise ConfigError(name, str(exc)) from None


def parse_config(text: str, base: ScenarioConfig | None = None) -> ScenarioConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", "expected 'key = value'")
        key, val = (t.strip() for t in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ConfigError(key, f"unknown key (line {lineno})")
        values[key] = _coerce(key, val)
    cfg = dataclasses.replace(base or ScenarioConfig(), **values)
    return cfg.validate()


def load_config(path, **overrides) -> ScenarioConfig:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    cfg = parse_config(path.read_text())
    if overrides:
        cfg = cfg.replace(**{k: v for k, v in overrides.items() if v is not None})
    return cfg


@lru_cache(maxsize=64)
def calibrated_network_snr(d: int, global_pfa: float, num_samples: int,
                           shadow_std_db: float, target_miss: float,
                           fading: bool = True) -> float:
    """Network-mean SNR (dB) at which ``d`` OR-fused sensors with independent
    log-normal shadowing miss an occupied band with probability
    ``target_miss`` on average."""
    from scipy import optimize

    from .detection import (average_detection_probability, local_pfa_for_global,
                            threshold_for_pfa)

    thr = threshold_for_pfa(local_pfa_for_global(global_pfa, d), num_samples)
    z, wz = np.polynomial.hermite_e.hermegauss(80)
    wz = wz / wz.sum()

    def avg_miss(m):
        pd = average_detection_probability(m + shadow_std_db * z, num_samples, thr, fading)
        return float(wz @ (1.0 - pd)) ** d - target_miss

    return float(optimize.brentq(avg_miss, -60.0, 60.0, xtol=1e-6))
