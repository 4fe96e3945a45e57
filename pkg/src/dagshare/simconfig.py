"""Scenario configuration: schema, validation and deterministic digests."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path


class ConfigError(ValueError):
    """Invalid configuration; carries the offending field name."""

    def __init__(self, field_name: str, message: str):
        self.field_name = field_name
        super().__init__(f"config field '{field_name}': {message}")


STYLE_TYPES = ("m1", "m2", "m3")

DEFAULT_STYLE_RANGES = {
    "m1": (0.45, 0.47),
    "m2": (0.43, 0.65),
    "m3": (0.095, 0.23),
}

DEFAULT_ARRIVAL_PRESETS = {
    "uniform": {"low": 40, "high": 50},
    "poisson": {"rate": 50.0},
    "gamma": {"shape": 200.0, "scale": 0.25},
}


@dataclass
class SimConfig:
    """Deterministic-seeded scenario description.

    The arrival presets are desk-scale versions of the reference setups
    (uniform within (400, 500), Poisson rate 700, gamma shape 200 and unit
    scale); the heavy preset file keeps the original magnitudes.
    """

    seed: int = 42
    n_vehicles: int = 35
    dataset_size: int = 3000
    eval_size: int = 100
    rsu_testset_size: int = 500
    feature_dim: int = 8
    noise_sigma: float = 0.25
    task_shared_norm: float = 2.0
    task_style_norm: float = 0.5
    task_bias: float = 0.3
    style_counts: dict = field(default_factory=lambda: {"m1": 10, "m2": 10, "m3": 15})
    style_ranges: dict = field(default_factory=lambda: {k: list(v) for k, v in DEFAULT_STYLE_RANGES.items()})
    arrival_presets: dict = field(default_factory=lambda: json.loads(json.dumps(DEFAULT_ARRIVAL_PRESETS)))
    genesis_sizes: list = field(default_factory=lambda: [10, 1000])
    convergence_rounds: int = 1000
    dc_rounds: int = 50
    dc_arrivals: int = 10
    verification_runs: int = 20
    verification_testset_size: int = 500
    alpha: float = 0.0
    beta: float = 5.0
    epsilon: float = 2.0
    reference_gap_levels: list = field(default_factory=lambda: [0.0156, 0.0160, 0.0168])
    reference_gap_anchor: float = 1.0
    attacker_fractions: list = field(default_factory=lambda: [0.2, 0.4])
    attacker_mode: str = "sign-flip"
    rounds: int = 60
    warmup_rounds: int = 10
    pow_difficulty: int = 0
    genesis_sites: int = 10
    local_epochs: int = 1
    batch_size: int = 256
    learning_rate: float = 0.03
    alpha_rule: str = "linear"
    model_size_mb: float = 120.9
    participation_levels: list = field(default_factory=lambda: [15, 12, 7, 0])
    regions: dict = field(default_factory=lambda: {"ids": ["A"], "adjacency": []})

    def validate(self) -> "SimConfig":
        def positive(name, value, kind=(int, float)):
            if not isinstance(value, kind) or isinstance(value, bool) or value <= 0:
                raise ConfigError(name, f"must be a positive number, got {value!r}")

        def nonneg(name, value):
            if not isinstance(value, (int, float)) or isinstance(value, bool) or value < 0:
                raise ConfigError(name, f"must be >= 0, got {value!r}")

        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            raise ConfigError("seed", f"must be a non-negative integer, got {self.seed!r}")
        positive("n_vehicles", self.n_vehicles, int)
        positive("dataset_size", self.dataset_size, int)
        positive("eval_size", self.eval_size, int)
        positive("rsu_testset_size", self.rsu_testset_size, int)
        positive("feature_dim", self.feature_dim, int)
        nonneg("noise_sigma", self.noise_sigma)
        positive("task_shared_norm", self.task_shared_norm)
        nonneg("task_style_norm", self.task_style_norm)
        if not isinstance(self.style_counts, dict) or set(self.style_counts) != set(STYLE_TYPES):
            raise ConfigError("style_counts", f"must map exactly {STYLE_TYPES}")
        for k, v in self.style_counts.items():
            if not isinstance(v, int) or v < 0:
                raise ConfigError("style_counts", f"count for {k!r} must be an integer >= 0")
        if sum(self.style_counts.values()) != self.n_vehicles:
            raise ConfigError(
                "style_counts",
                f"counts sum to {sum(self.style_counts.values())}, expected n_vehicles={self.n_vehicles}",
            )
        if not isinstance(self.style_ranges, dict) or set(self.style_ranges) != set(STYLE_TYPES):
            raise ConfigError("style_ranges", f"must map exactly {STYLE_TYPES}")
        for k, rng in self.style_ranges.items():
            if (
                not isinstance(rng, (list, tuple))
                or len(rng) != 2
                or not 0.0 <= rng[0] <= rng[1] <= 1.0
            ):
                raise ConfigError("style_ranges", f"range for {k!r} must be [lo, hi] within [0, 1]")
        if set(self.arrival_presets) != set(DEFAULT_ARRIVAL_PRESETS):
            raise ConfigError("arrival_presets", "must define uniform, poisson and gamma presets")
        uni = self.arrival_presets["uniform"]
        if not (isinstance(uni.get("low"), int) and isinstance(uni.get("high"), int) and 0 < uni["low"] <= uni["high"]):
            raise ConfigError("arrival_presets", "uniform preset needs integers 0 < low <= high")
        if not self.arrival_presets["poisson"].get("rate", 0) > 0:
            raise ConfigError("arrival_presets", "poisson preset needs rate > 0")
        gam = self.arrival_presets["gamma"]
        if not (gam.get("shape", 0) > 0 and gam.get("scale", 0) > 0):
            raise ConfigError("arrival_presets", "gamma preset needs shape > 0 and scale > 0")
        if not self.genesis_sizes or any(not isinstance(g, int) or g < 1 for g in self.genesis_sizes):
            raise ConfigError("genesis_sizes", "must be a non-empty list of integers >= 1")
        positive("convergence_rounds", self.convergence_rounds, int)
        positive("dc_rounds", self.dc_rounds, int)
        positive("dc_arrivals", self.dc_arrivals, int)
        positive("verification_runs", self.verification_runs, int)
        positive("verification_testset_size", self.verification_testset_size, int)
        nonneg("alpha", self.alpha)
        nonneg("beta", self.beta)
        positive("epsilon", self.epsilon)
        if not self.reference_gap_levels or any(v <= 0 for v in self.reference_gap_levels):
            raise ConfigError("reference_gap_levels", "must be a non-empty list of positive gaps")
        if sorted(self.reference_gap_levels) != list(self.reference_gap_levels):
            raise ConfigError("reference_gap_levels", "must be sorted tightest first")
        positive("reference_gap_anchor", self.reference_gap_anchor)
        for frac in self.attacker_fractions:
            if not 0.0 <= frac <= 1.0:
                raise ConfigError("attacker_fractions", f"fraction {frac!r} outside [0, 1]")
        if self.attacker_mode not in ("sign-flip", "random", "biased-style"):
            raise ConfigError("attacker_mode", f"unknown mode {self.attacker_mode!r}")
        positive("rounds", self.rounds, int)
        nonneg("warmup_rounds", self.warmup_rounds)
        if self.warmup_rounds >= self.rounds:
            raise ConfigError("warmup_rounds", "must be smaller than rounds")
        if not isinstance(self.pow_difficulty, int) or not 0 <= self.pow_difficulty <= 32:
            raise ConfigError("pow_difficulty", "must be an integer in [0, 32]")
        positive("genesis_sites", self.genesis_sites, int)
        positive("local_epochs", self.local_epochs, int)
        positive("batch_size", self.batch_size, int)
        positive("learning_rate", self.learning_rate)
        if self.alpha_rule not in ("linear", "exponential"):
            raise ConfigError("alpha_rule", f"must be 'linear' or 'exponential', got {self.alpha_rule!r}")
        positive("model_size_mb", self.model_size_mb)
        m3 = self.style_counts["m3"]
        for level in self.participation_levels:
            if not isinstance(level, int) or not 0 <= level <= m3:
                raise ConfigError("participation_levels", f"level {level!r} outside [0, {m3}]")
        if not isinstance(self.regions, dict) or not self.regions.get("ids"):
            raise ConfigError("regions", "must define a non-empty 'ids' list")
        ids = self.regions["ids"]
        if len(set(ids)) != len(ids):
            raise ConfigError("regions", "region ids must be unique")
        for entry in self.regions.get("adjacency", []):
            if (
                not isinstance(entry, (list, tuple))
                or len(entry) != 3
                or entry[0] not in ids
                or entry[1] not in ids
                or not isinstance(entry[2], int)
                or entry[2] < 0
            ):
                raise ConfigError(
                    "regions", f"adjacency entry {entry!r} must be [id_a, id_b, scope_threshold]"
                )
        return self

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def digest(self) -> str:
        return hashlib.sha256(
            json.dumps(self.to_dict(), sort_keys=True).encode()
        ).hexdigest()

    @classmethod
    def from_dict(cls, data: dict) -> "SimConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown field")
        cfg = cls(**data)
        return cfg.validate()

    @classmethod
    def from_json(cls, path) -> "SimConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError("<file>", f"not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("<file>", "top-level JSON value must be an object")
        return cls.from_dict(data)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
