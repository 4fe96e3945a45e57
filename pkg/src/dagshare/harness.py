"""Deterministic seeded scenarios, metric logging and CSV emission.

One approval round is a fixed unit-length time slice; all sites arriving
within a round select their parents from the round-start tip snapshot
(approval happens with a one-round visibility delay, which is what keeps
the tip count stationary). Learning rounds follow the same clock: every
vehicle pulls the global model at the round start, trains locally, and its
upload lands at a per-vehicle completion time inside the round.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import TipTheory
from .learning import (
    Dataset,
    GlobalModel,
    LearningTask,
    ModelParams,
    adaptive_gate,
    async_update,
    fedave_baseline,
    gen_dataset,
    gen_eval_set,
    least_squares_fit,
    local_sgd,
    mse_loss,
    rsu_accept,
    test_gap,
)
from .ledger import AppendStatus, Ledger, TipSelection, verify_and_append
from .sites import KeyedDigestScheme, StyleIndicator, build_site
from .simconfig import STYLE_TYPES, SimConfig


DELAY_LOW, DELAY_HIGH = 0.05, 0.95

FAMILY_COLUMNS = {
    "tips": [
        "series", "round", "tips_total", "tips_m1", "tips_m2", "tips_m3",
        "arrivals", "approved_tips", "sites_total",
    ],
    "ledger": ["series", "round", "sites_total", "edges", "assortativity"],
    "learning": [
        "series", "round", "time", "global_loss", "global_gap", "pop_loss",
        "uploads", "uploads_cum", "bandwidth_mb_cum", "accepted", "rejected",
        "reference_gap", "version", "style_mean",
    ],
    "verification": ["series", "run", "style", "gap", "loss"],
    "attack": [
        "series", "round", "attacker_uploads", "attacker_accepted",
        "attacker_rejected", "honest_uploads", "honest_accepted",
        "honest_rejected",
    ],
}

SCENARIO_NAMES = (
    "ledger-convergence",
    "dc-ledger",
    "verification-loss",
    "adaptive-adl",
    "freshness",
    "style-participation",
    "attack",
)


class ScenarioError(ValueError):
    pass


@dataclass
class EventLog:
    """Per-round metric stream of one scenario run, split by metric family."""

    scenario: str
    seed: int
    config: dict
    config_digest: str
    tables: dict = field(default_factory=dict)

    def add(self, family: str, **row) -> None:
        if family not in FAMILY_COLUMNS:
            raise ScenarioError(f"unknown metric family {family!r}")
        missing = [c for c in FAMILY_COLUMNS[family] if c not in row]
        if missing:
            raise ScenarioError(f"family {family!r} row missing columns {missing}")
        self.tables.setdefault(family, []).append(row)

    def rows(self, family: str) -> list[dict]:
        return self.tables.get(family, [])

    def series(self, family: str, name: str) -> list[dict]:
        return [r for r in self.rows(family) if r["series"] == name]


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_csv(log: EventLog, outdir) -> dict:
    """Write one CSV per metric family plus a run manifest; returns the paths.

    Output is byte-deterministic for a fixed log: stable column order,
    shortest round-trip float formatting, sorted manifest keys.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    if not log.tables:
        raise ScenarioError("event log is empty")
    paths = {}
    manifest_families = {}
    for family in sorted(log.tables):
        columns = FAMILY_COLUMNS[family]
        path = outdir / f"{family}.csv"
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(columns)
            for row in log.tables[family]:
                writer.writerow([_fmt(row[c]) for c in columns])
        paths[family] = path
        manifest_families[family] = {
            "file": path.name,
            "columns": columns,
            "rows": len(log.tables[family]),
        }
    manifest = {
        "scenario": log.scenario,
        "seed": log.seed,
        "config_digest": log.config_digest,
        "code_version": __version__,
        "families": manifest_families,
    }
    manifest_path = outdir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    paths["manifest"] = manifest_path
    return paths


def _rng(seed: int, *tags: int) -> np.random.Generator:
    return np.random.default_rng([seed, *tags])


def _delay(rng: np.random.Generator) -> float:
    return float(rng.uniform(DELAY_LOW, DELAY_HIGH))


# ---------------------------------------------------------------------------
# tangle dynamics


def _arrival_sampler(kind: str, cfg: SimConfig):
    preset = cfg.arrival_presets[kind]
    if kind == "uniform":
        low, high = preset["low"], preset["high"]
        return lambda rng: int(rng.integers(low, high + 1))
    if kind == "poisson":
        rate = preset["rate"]
        return lambda rng: int(rng.poisson(rate))
    if kind == "gamma":
        shape, scale = preset["shape"], preset["scale"]
        return lambda rng: int(round(rng.gamma(shape, scale)))
    raise ScenarioError(f"unknown arrival model {kind!r}")


def _style_type_sampler(cfg: SimConfig):
    labels = list(STYLE_TYPES)
    counts = np.array([cfg.style_counts[t] for t in labels], dtype=float)
    probs = counts / counts.sum()
    ranges = {t: cfg.style_ranges[t] for t in labels}

    def sample(rng: np.random.Generator, n: int):
        idx = rng.choice(len(labels), size=n, p=probs)
        styles = np.empty(n)
        names = []
        for i, k in enumerate(idx):
            lo, hi = ranges[labels[k]]
            styles[i] = rng.uniform(lo, hi)
            names.append(labels[k])
        return styles, names

    return sample


def _batch_select_pairs(
    rng: np.random.Generator,
    new_styles: np.ndarray,
    tip_styles: np.ndarray,
    beta: float,
    alpha: float,
    parent_cw: np.ndarray | None,
) -> np.ndarray:
    """Two distinct parents per arrival from one tip snapshot.

    Sampling without replacement from the renormalized selection law is
    done with the Gumbel top-2 trick on the per-arrival logits.
    """
    n, n_tips = new_styles.size, tip_styles.size
    if n_tips == 1:
        return np.zeros((n, 2), dtype=int)
    logits = -beta * (new_styles[:, None] - tip_styles[None, :]) ** 2
    if alpha > 0:
        logits = logits - alpha * parent_cw[None, :]
    keys = logits + rng.gumbel(size=(n, n_tips))
    top2 = np.argpartition(-keys, 1, axis=1)[:, :2]
    first_is_first = keys[np.arange(n), top2[:, 0]] >= keys[np.arange(n), top2[:, 1]]
    ordered = np.where(first_is_first[:, None], top2, top2[:, ::-1])
    return ordered


def _run_tangle_series(
    cfg: SimConfig,
    log: EventLog,
    series: str,
    rng: np.random.Generator,
    genesis_size: int,
    rounds: int,
    arrival,
    type_sampler,
) -> Ledger:
    scheme = KeyedDigestScheme()
    key = scheme.new_key(rng)
    ledger = Ledger()
    site_type: dict[bytes, str] = {}
    tip_counts = {t: 0 for t in STYLE_TYPES}

    styles, names = type_sampler(rng, genesis_size)
    for style, name in zip(styles, names):
        site = build_site(
            None, StyleIndicator(float(style)), (), key, scheme,
            difficulty_bits=cfg.pow_difficulty,
        )
        ledger.append(site)
        site_type[site.digest] = name
        tip_counts[name] += 1

    for rnd in range(rounds):
        n = arrival(rng)
        removed: set[bytes] = set()
        if n > 0:
            new_styles, new_names = type_sampler(rng, n)
            snap = ledger.snapshot(with_parent_cw=cfg.alpha > 0)
            pairs = _batch_select_pairs(
                rng, new_styles, snap.styles, cfg.beta, cfg.alpha, snap.parent_cw
            )
            for i in range(n):
                parents = (snap.digests[pairs[i, 0]], snap.digests[pairs[i, 1]])
                site = build_site(
                    None, StyleIndicator(float(new_styles[i])), parents, key,
                    scheme, difficulty_bits=cfg.pow_difficulty,
                )
                ledger.append(site)
                site_type[site.digest] = new_names[i]
                tip_counts[new_names[i]] += 1
                removed.update(dict.fromkeys(parents))
            for digest in sorted(removed):
                tip_counts[site_type[digest]] -= 1
        ledger.round += 1
        log.add(
            "tips",
            series=series,
            round=rnd,
            tips_total=ledger.tip_count,
            tips_m1=tip_counts["m1"],
            tips_m2=tip_counts["m2"],
            tips_m3=tip_counts["m3"],
            arrivals=int(n),
            approved_tips=len(removed),
            sites_total=len(ledger),
        )
    return ledger


def _scenario_ledger_convergence(cfg: SimConfig, log: EventLog) -> None:
    type_sampler = _style_type_sampler(cfg)
    stream = 0
    for kind in ("uniform", "poisson", "gamma"):
        for genesis in cfg.genesis_sizes:
            series = f"{kind}-g{genesis}"
            rng = _rng(log.seed, 100, stream)
            stream += 1
            _run_tangle_series(
                cfg, log, series, rng, genesis, cfg.convergence_rounds,
                _arrival_sampler(kind, cfg), type_sampler,
            )


def _scenario_dc_ledger(cfg: SimConfig, log: EventLog) -> None:
    """Two well-separated style groups; style-biased selection against a
    uniform control. A batch of sites arrives each transaction round and
    selects from the round-start tip snapshot, so both style clusters keep
    live tips."""
    centers = (0.1, 0.9)
    for idx, (series, beta) in enumerate(
        (("style-biased", cfg.beta), ("unbiased", 0.0))
    ):
        rng = _rng(log.seed, 110, idx)
        scheme = KeyedDigestScheme()
        key = scheme.new_key(rng)
        ledger = Ledger()
        for g in range(10):
            style = float(np.clip(centers[g % 2] + rng.normal(0.0, 0.02), 0.0, 1.0))
            ledger.append(
                build_site(None, StyleIndicator(style), (), key, scheme,
                           scope=g, difficulty_bits=cfg.pow_difficulty)
            )
        for rnd in range(cfg.dc_rounds):
            snap = ledger.snapshot()
            group = np.where(rng.uniform(size=cfg.dc_arrivals) < 0.5, 0, 1)
            styles = np.clip(
                np.asarray(centers)[group] + rng.normal(0.0, 0.02, cfg.dc_arrivals),
                0.0, 1.0,
            )
            pairs = _batch_select_pairs(rng, styles, snap.styles, beta, 0.0, None)
            for i in range(cfg.dc_arrivals):
                parents = (snap.digests[pairs[i, 0]], snap.digests[pairs[i, 1]])
                ledger.append(
                    build_site(None, StyleIndicator(float(styles[i])), parents,
                               key, scheme, difficulty_bits=cfg.pow_difficulty)
                )
            ledger.round += 1
            log.add(
                "ledger",
                series=series,
                round=rnd,
                sites_total=len(ledger),
                edges=ledger.edge_count,
                assortativity=ledger.style_assortativity(),
            )


def _scenario_verification_loss(cfg: SimConfig, log: EventLog) -> None:
    """Train a model on mid-range-style data, test it with verifiers of all
    three style types on their own test sets."""
    for run in range(cfg.verification_runs):
        rng = _rng(log.seed, 120, run)
        task = LearningTask.from_seed(
            [log.seed, 121, run], cfg.feature_dim,
            cfg.task_shared_norm, cfg.task_style_norm, cfg.task_bias,
        )
        lo, hi = cfg.style_ranges["m2"]
        trainer_style = float(rng.uniform(lo, hi))
        train = gen_dataset(rng, cfg.dataset_size, task, trainer_style, cfg.noise_sigma)
        model, _ = local_sgd(
            ModelParams.zeros(train.model_dim), train, epochs=10,
            batch_size=cfg.batch_size, rate=cfg.learning_rate, rng=rng,
        )
        for style_type in STYLE_TYPES:
            lo, hi = cfg.style_ranges[style_type]
            verifier_style = float(rng.uniform(lo, hi))
            testset = gen_dataset(
                rng, cfg.verification_testset_size, task, verifier_style, cfg.noise_sigma
            )
            log.add(
                "verification",
                series=style_type,
                run=run,
                style=verifier_style,
                gap=float(test_gap(model, testset)),
                loss=mse_loss(model, testset),
            )


# ---------------------------------------------------------------------------
# learning scenarios


@dataclass
class VehicleState:
    idx: int
    style_type: str
    style: float
    train: Dataset
    holdout: Dataset


@dataclass
class Population:
    task: LearningTask
    vehicles: list
    rsu_set: Dataset
    pop_eval: Dataset
    oracle_model: ModelParams
    oracle_gap: float
    oracle_loss: float
    oracle_pop_loss: float


def _concat(datasets: list[Dataset]) -> Dataset:
    return Dataset(
        np.vstack([d.x for d in datasets]),
        np.concatenate([d.m for d in datasets]),
        np.concatenate([d.y for d in datasets]),
    )


def build_population(cfg: SimConfig, seed: int) -> Population:
    task = LearningTask.from_seed(
        [seed, 0], cfg.feature_dim, cfg.task_shared_norm, cfg.task_style_norm,
        cfg.task_bias,
    )
    vehicles = []
    idx = 0
    for style_type in STYLE_TYPES:
        lo, hi = cfg.style_ranges[style_type]
        for _ in range(cfg.style_counts[style_type]):
            style = float(_rng(seed, 10, idx).uniform(lo, hi))
            data_rng = _rng(seed, 11, idx)
            train = gen_dataset(data_rng, cfg.dataset_size, task, style, cfg.noise_sigma)
            holdout = gen_dataset(data_rng, cfg.eval_size, task, style, cfg.noise_sigma)
            vehicles.append(VehicleState(idx, style_type, style, train, holdout))
            idx += 1
    rsu_set = gen_eval_set(_rng(seed, 12), cfg.rsu_testset_size, task, cfg.noise_sigma)
    pop_eval = _concat([v.holdout for v in vehicles])
    oracle = least_squares_fit([v.train for v in vehicles])
    return Population(
        task=task,
        vehicles=vehicles,
        rsu_set=rsu_set,
        pop_eval=pop_eval,
        oracle_model=oracle,
        oracle_gap=float(test_gap(oracle, rsu_set)),
        oracle_loss=mse_loss(oracle, rsu_set),
        oracle_pop_loss=mse_loss(oracle, pop_eval),
    )


def reference_gap_levels(cfg: SimConfig, pop: Population) -> list[float]:
    """Gate thresholds scaled onto the synthetic task's gap range.

    The configured levels keep their relative spacing; the tightest level
    is anchored at ``reference_gap_anchor`` times the centralized oracle's
    gap on the aggregator test set.
    """
    base = cfg.reference_gap_levels[0]
    anchor = cfg.reference_gap_anchor * pop.oracle_gap
    return [anchor * (level / base) for level in cfg.reference_gap_levels]


@dataclass
class AdlVariant:
    label: str
    adaptive: bool = False
    reference_gap: float | None = None
    aggregator: str = "async"  # "async" or "fedave"
    participants: frozenset | None = None
    attackers: frozenset = frozenset()
    epsilon: float | None = None  # None -> cfg.epsilon


def _corrupt(model: ModelParams, mode: str, rng: np.random.Generator) -> ModelParams:
    if mode == "sign-flip":
        return ModelParams(-model.theta)
    if mode == "random":
        return ModelParams(rng.normal(0.0, 2.0, model.dim))
    if mode == "biased-style":
        return model
    raise ScenarioError(f"unknown attacker mode {mode!r}")


def run_adl_variant(
    cfg: SimConfig, pop: Population, variant: AdlVariant, seed: int, log: EventLog
) -> None:
    """One asynchronous (or synchronous-baseline) learning run.

    Per-vehicle randomness is seeded independently of the variant, so runs
    with different gating/participation are directly comparable.
    """
    scheme = KeyedDigestScheme()
    keys = [scheme.new_key(_rng(seed, 20, v.idx)) for v in pop.vehicles]
    vehicle_rngs = [_rng(seed, 30, v.idx) for v in pop.vehicles]
    ledger_rng = _rng(seed, 21)
    epsilon = cfg.epsilon if variant.epsilon is None else variant.epsilon

    ledger = Ledger()
    genesis_styles, _ = _style_type_sampler(cfg)(ledger_rng, cfg.genesis_sites)
    genesis_key = scheme.new_key(ledger_rng)
    for style in genesis_styles:
        ledger.append(
            build_site(
                None, StyleIndicator(float(style)), (), genesis_key, scheme,
                difficulty_bits=cfg.pow_difficulty,
            )
        )

    dim = pop.vehicles[0].train.model_dim
    global_model = GlobalModel.initial(dim, pop.rsu_set)
    style_sum, style_count = 0.0, 0
    uploads_cum = 0
    horizon = float(cfg.rounds)

    for rnd in range(cfg.rounds):
        pulled = global_model.params
        events = []
        for v in pop.vehicles:
            model, delay = local_sgd(
                pulled, v.train, cfg.local_epochs, cfg.batch_size,
                cfg.learning_rate, vehicle_rngs[v.idx], delay_dist=_delay,
            )
            events.append((delay, v.idx, model))
        events.sort(key=lambda e: (e[0], e[1]))

        stats = {k: 0 for k in (
            "uploads", "accepted", "rejected", "att_up", "att_acc", "att_rej",
            "hon_up", "hon_acc", "hon_rej",
        )}
        snap = ledger.snapshot(with_parent_cw=cfg.alpha > 0)
        synchronous_pool = []
        for delay, idx, model in events:
            v = pop.vehicles[idx]
            is_attacker = idx in variant.attackers
            if is_attacker:
                payload = _corrupt(model, cfg.attacker_mode, vehicle_rngs[idx])
                reported_style = 0.5  # flattering, near the population average
            else:
                payload, reported_style = model, v.style

            if variant.aggregator == "fedave":
                synchronous_pool.append(payload)
                stats["uploads"] += 1
                continue

            if variant.participants is not None and idx not in variant.participants:
                continue
            if variant.adaptive and rnd >= cfg.warmup_rounds:
                gap_v = test_gap(payload, pop.rsu_set)
                if not adaptive_gate(gap_v, variant.reference_gap):
                    continue
            stats["uploads"] += 1
            stats["att_up" if is_attacker else "hon_up"] += 1
            if rsu_accept(payload, pop.rsu_set, epsilon):
                pair = _batch_select_pairs(
                    ledger_rng, np.array([reported_style]), snap.styles,
                    cfg.beta, cfg.alpha, snap.parent_cw,
                )[0]
                selection = TipSelection(snap.digests[pair[0]], snap.digests[pair[1]])
                site = build_site(
                    payload, StyleIndicator(reported_style), selection.digests(),
                    keys[idx], scheme, difficulty_bits=cfg.pow_difficulty,
                )
                result = verify_and_append(
                    ledger, site, selection, v.holdout, epsilon, scheme,
                    cfg.pow_difficulty,
                )
                if result.status is not AppendStatus.APPENDED:
                    stats["rejected"] += 1
                    stats["att_rej" if is_attacker else "hon_rej"] += 1
                    continue
                style_sum += reported_style
                style_count += 1
                style_mean = style_sum / style_count
                global_model = async_update(
                    global_model, payload, rnd + delay, horizon, reported_style,
                    style_mean, cfg.alpha_rule, pop.rsu_set,
                )
                stats["accepted"] += 1
                stats["att_acc" if is_attacker else "hon_acc"] += 1
            else:
                stats["rejected"] += 1
                stats["att_rej" if is_attacker else "hon_rej"] += 1

        if variant.aggregator == "fedave":
            mixed = fedave_baseline(synchronous_pool)
            global_model = GlobalModel(
                params=mixed,
                version=global_model.version + 1,
                reference_gap=float(test_gap(mixed, pop.rsu_set)),
                last_update=float(rnd + 1),
            )
            stats["accepted"] = stats["uploads"]

        ledger.round += 1
        uploads_cum += stats["uploads"]
        log.add(
            "ledger",
            series=variant.label,
            round=rnd,
            sites_total=len(ledger),
            edges=ledger.edge_count,
            assortativity=ledger.style_assortativity(),
        )
        reference = (
            variant.reference_gap
            if variant.adaptive and variant.reference_gap is not None
            else global_model.reference_gap
        )
        log.add(
            "learning",
            series=variant.label,
            round=rnd,
            time=float(rnd + 1),
            global_loss=mse_loss(global_model.params, pop.rsu_set),
            global_gap=float(test_gap(global_model.params, pop.rsu_set)),
            pop_loss=mse_loss(global_model.params, pop.pop_eval),
            uploads=stats["uploads"],
            uploads_cum=uploads_cum,
            bandwidth_mb_cum=uploads_cum * cfg.model_size_mb,
            accepted=stats["accepted"],
            rejected=stats["rejected"],
            reference_gap=reference,
            version=global_model.version,
            style_mean=style_sum / style_count if style_count else 0.5,
        )
        if variant.attackers:
            log.add(
                "attack",
                series=variant.label,
                round=rnd,
                attacker_uploads=stats["att_up"],
                attacker_accepted=stats["att_acc"],
                attacker_rejected=stats["att_rej"],
                honest_uploads=stats["hon_up"],
                honest_accepted=stats["hon_acc"],
                honest_rejected=stats["hon_rej"],
            )


def _oracle_series(cfg: SimConfig, pop: Population, log: EventLog, label: str) -> None:
    for rnd in range(cfg.rounds):
        log.add(
            "learning",
            series=label,
            round=rnd,
            time=float(rnd + 1),
            global_loss=pop.oracle_loss,
            global_gap=pop.oracle_gap,
            pop_loss=pop.oracle_pop_loss,
            uploads=0,
            uploads_cum=0,
            bandwidth_mb_cum=0.0,
            accepted=0,
            rejected=0,
            reference_gap=pop.oracle_gap,
            version=1,
            style_mean=0.5,
        )


def _scenario_adaptive_adl(cfg: SimConfig, log: EventLog) -> None:
    pop = build_population(cfg, log.seed)
    levels = reference_gap_levels(cfg, pop)
    run_adl_variant(cfg, pop, AdlVariant(label="non-adaptive"), log.seed, log)
    for paper_level, level in zip(cfg.reference_gap_levels, levels):
        run_adl_variant(
            cfg, pop,
            AdlVariant(label=f"eg-{paper_level}", adaptive=True, reference_gap=level),
            log.seed, log,
        )


def _scenario_freshness(cfg: SimConfig, log: EventLog) -> None:
    pop = build_population(cfg, log.seed)
    levels = reference_gap_levels(cfg, pop)
    mid = levels[len(levels) // 2]
    run_adl_variant(
        cfg, pop, AdlVariant(label="adl", adaptive=True, reference_gap=mid),
        log.seed, log,
    )
    run_adl_variant(cfg, pop, AdlVariant(label="fedave", aggregator="fedave"), log.seed, log)
    _oracle_series(cfg, pop, log, "centralized")


def _scenario_style_participation(cfg: SimConfig, log: EventLog) -> None:
    pop = build_population(cfg, log.seed)
    base = [v.idx for v in pop.vehicles if v.style_type in ("m1", "m2")]
    m3 = [v.idx for v in pop.vehicles if v.style_type == "m3"]
    for level in cfg.participation_levels:
        participants = frozenset(base + m3[:level])
        run_adl_variant(
            cfg, pop,
            AdlVariant(label=f"m3-{level}", participants=participants),
            log.seed, log,
        )


def _scenario_attack(cfg: SimConfig, log: EventLog) -> None:
    pop = build_population(cfg, log.seed)
    n = len(pop.vehicles)
    for frac in cfg.attacker_fractions:
        k = int(round(frac * n))
        attackers = frozenset(
            int(i) for i in _rng(log.seed, 50).choice(n, size=k, replace=False)
        )
        for gated in (True, False):
            label = f"frac-{frac}-{'gated' if gated else 'ungated'}"
            run_adl_variant(
                cfg, pop,
                AdlVariant(
                    label=label,
                    attackers=attackers,
                    epsilon=cfg.epsilon if gated else float("inf"),
                ),
                log.seed, log,
            )


SCENARIOS = {
    "ledger-convergence": _scenario_ledger_convergence,
    "dc-ledger": _scenario_dc_ledger,
    "verification-loss": _scenario_verification_loss,
    "adaptive-adl": _scenario_adaptive_adl,
    "freshness": _scenario_freshness,
    "style-participation": _scenario_style_participation,
    "attack": _scenario_attack,
}


def run_scenario(cfg: SimConfig, scenario: str, seed: int | None = None) -> EventLog:
    """Run one named scenario deterministically and return its metric log."""
    if scenario not in SCENARIOS:
        raise ScenarioError(
            f"unknown scenario {scenario!r}; available: {', '.join(SCENARIO_NAMES)}"
        )
    cfg.validate()
    log = EventLog(
        scenario=scenario,
        seed=cfg.seed if seed is None else seed,
        config=cfg.to_dict(),
        config_digest=cfg.digest(),
    )
    SCENARIOS[scenario](cfg, log)
    return log


def simulate_interval_approvals(
    theory: TipTheory, rounds: int, rng: np.random.Generator
) -> np.ndarray:
    """Empirical per-round approval counts per style interval.

    Arrivals are Poisson per round; each approval event lands at a uniform
    time in the window and picks an interval by the style-distance softmax
    at that instant. Returns a (rounds, K) count matrix.
    """
    centers = np.asarray(theory.centers)
    counts = np.zeros((rounds, centers.size), dtype=int)
    for rnd in range(rounds):
        n = int(rng.poisson(theory.arrival_rate * theory.interval))
        if n == 0:
            continue
        times = rng.uniform(0.0, theory.interval, n)
        styles = np.array([theory.style_path(t) for t in times])
        logits = -theory.beta * (centers[None, :] - styles[:, None]) ** 2
        picks = np.argmax(logits + rng.gumbel(size=logits.shape), axis=1)
        counts[rnd] = np.bincount(picks, minlength=centers.size)
    return counts


def final_window_mean(rows: list[dict], column: str, fraction: float = 0.25) -> float:
    """Mean of a metric over the trailing window of a series (its 'final' value)."""
    if not rows:
        raise ScenarioError("no rows to summarize")
    window = max(1, int(len(rows) * fraction))
    return float(np.mean([r[column] for r in rows[-window:]]))
