"""Append-only DAG ledger with style-aware tip selection.

Tips are sites not yet approved by any child. New sites approve two tips
chosen either by the direct style/weight-biased rule or by a
cumulative-weight-biased random walk (the classical baseline). Appends are
serialized through a single writer; selections are pure given a snapshot.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import learning
from .sites import (
    Site,
    SiteError,
    KeyedDigestScheme,
    canonical_serialize,
    digest_matches,
    parse_site,
    pow_verify,
    verify_site,
)


class LedgerError(ValueError):
    """Structural ledger violation (unknown parents, duplicate sites...)."""


@dataclass(frozen=True)
class TipSelection:
    """Pair of approved tips; both entries coincide only on a one-tip ledger."""

    first: bytes
    second: bytes

    def digests(self) -> tuple[bytes, ...]:
        return (self.first, self.second)

    def distinct(self) -> tuple[bytes, ...]:
        return (self.first,) if self.first == self.second else (self.first, self.second)


class AppendStatus(enum.Enum):
    APPENDED = "appended"
    REJECTED_POW = "rejected-pow"
    REJECTED_SIGNATURE = "rejected-signature"
    REJECTED_PARENT_GAP = "gap-exceeded"
    REJECTED_STRUCTURE = "rejected-structure"


@dataclass(frozen=True)
class AppendResult:
    status: AppendStatus
    detail: str = ""
    parent_gaps: tuple[float, ...] = ()

    @property
    def ok(self) -> bool:
        return self.status is AppendStatus.APPENDED


@dataclass
class TipSnapshot:
    """Frozen view of the tip set used for one approval round of selections."""

    digests: list[bytes]
    styles: np.ndarray
    parent_cw: np.ndarray | None = None


class Ledger:
    """Site store, tip bookkeeping and cumulative-weight queries."""

    def __init__(self):
        self.sites: dict[bytes, Site] = {}
        self.children: dict[bytes, list[bytes]] = {}
        self._tips: dict[bytes, None] = {}
        self._insert_index: dict[bytes, int] = {}
        self.round = 0
        # running sums for the (child style, parent style) edge correlation
        self._edges = 0
        self._sum_c = 0.0
        self._sum_p = 0.0
        self._sum_cc = 0.0
        self._sum_pp = 0.0
        self._sum_cp = 0.0

    def __len__(self) -> int:
        return len(self.sites)

    @property
    def tips(self) -> list[bytes]:
        return list(self._tips)

    @property
    def tip_count(self) -> int:
        return len(self._tips)

    @property
    def edge_count(self) -> int:
        return self._edges

    def __contains__(self, digest: bytes) -> bool:
        return digest in self.sites

    def site(self, digest: bytes) -> Site:
        try:
            return self.sites[digest]
        except KeyError:
            raise LedgerError("unknown site digest") from None

    def append(self, site: Site) -> None:
        """Structural append: parents must exist, digest must be consistent.

        Content checks (proof-of-work, signature, payload gaps) belong to
        :func:`verify_and_append`; parentless sites (genesis and zero-weight
        marker sites) are accepted here directly.
        """
        if site.digest in self.sites:
            raise LedgerError("site already present")
        if not digest_matches(site):
            raise LedgerError("site digest does not match its serialization")
        for parent in dict.fromkeys(site.parents):
            if parent not in self.sites:
                raise LedgerError("parent not present in ledger")
        self._insert_index[site.digest] = len(self.sites)
        self.sites[site.digest] = site
        self.children[site.digest] = []
        child_style = float(site.feature)
        for parent in dict.fromkeys(site.parents):
            self.children[parent].append(site.digest)
            self._tips.pop(parent, None)
            parent_style = float(self.sites[parent].feature)
            self._edges += 1
            self._sum_c += child_style
            self._sum_p += parent_style
            self._sum_cc += child_style * child_style
            self._sum_pp += parent_style * parent_style
            self._sum_cp += child_style * parent_style
        self._tips[site.digest] = None

    def recompute_tips(self) -> list[bytes]:
        """Tips recomputed from scratch (oracle for the incremental set)."""
        return [d for d in self.sites if not self.children[d]]

    def cumulative_weight(self, digest: bytes) -> float:
        """Own weight plus own weights of every site approving this one."""
        start = self.site(digest)
        total = start.weights[0]
        seen = {digest}
        stack = list(self.children[digest])
        while stack:
            d = stack.pop()
            if d in seen:
                continue
            seen.add(d)
            total += self.sites[d].weights[0]
            stack.extend(self.children[d])
        return total

    def parent_cw_sum(self, digest: bytes) -> float:
        """Sum of the cumulative weights of the two sites this tip approves.

        Parentless tips (genesis, marker sites) contribute 0, which makes
        them maximally attractive under the weight-penalty term.
        """
        site = self.site(digest)
        return float(sum(self.cumulative_weight(p) for p in site.parents))

    def snapshot(self, with_parent_cw: bool = False) -> TipSnapshot:
        digests = list(self._tips)
        styles = np.array([float(self.sites[d].feature) for d in digests])
        parent_cw = None
        if with_parent_cw:
            parent_cw = np.array([self.parent_cw_sum(d) for d in digests])
        return TipSnapshot(digests=digests, styles=styles, parent_cw=parent_cw)

    def style_assortativity(self) -> float:
        """Pearson correlation of (child style, parent style) over all edges.

        Degenerate variance (fewer than two edges, or constant styles) is
        defined as 0.
        """
        n = self._edges
        if n < 2:
            return 0.0
        var_c = n * self._sum_cc - self._sum_c**2
        var_p = n * self._sum_pp - self._sum_p**2
        if var_c <= 0 or var_p <= 0:
            return 0.0
        cov = n * self._sum_cp - self._sum_c * self._sum_p
        return float(cov / math.sqrt(var_c * var_p))


def tip_weights(
    styles: np.ndarray,
    style: float,
    alpha: float,
    beta: float,
    parent_cw: np.ndarray | None = None,
) -> np.ndarray:
    """Selection probabilities over a tip snapshot for an incoming style.

    Softmax of -alpha * (approved cumulative weights) - beta * (style gap)^2;
    invariant to a common shift of the weight sums.
    """
    if styles.size == 0:
        raise LedgerError("tip set is empty")
    if alpha < 0 or beta < 0:
        raise LedgerError("selection weights must be non-negative")
    logits = -beta * (style - styles) ** 2
    if alpha > 0:
        if parent_cw is None:
            raise LedgerError("parent cumulative weights required when alpha > 0")
        logits = logits - alpha * parent_cw
    logits = logits - logits.max()
    probs = np.exp(logits)
    return probs / probs.sum()


def selection_probability(
    ledger: Ledger, style: float, tip: bytes, alpha: float, beta: float
) -> float:
    """Probability that a new site with the given style approves ``tip``."""
    snap = ledger.snapshot(with_parent_cw=alpha > 0)
    if tip not in snap.digests:
        raise LedgerError("candidate is not a current tip")
    probs = tip_weights(snap.styles, style, alpha, beta, snap.parent_cw)
    return float(probs[snap.digests.index(tip)])


def select_tips(
    ledger_or_snapshot: Ledger | TipSnapshot,
    style: float,
    rng: np.random.Generator,
    alpha: float = 0.0,
    beta: float = 0.0,
) -> TipSelection:
    """Draw two distinct tips by the style/weight-biased law.

    The second draw renormalizes over the remaining tips. A one-tip ledger
    yields the same tip twice (genesis bootstrap).
    """
    if isinstance(ledger_or_snapshot, Ledger):
        snap = ledger_or_snapshot.snapshot(with_parent_cw=alpha > 0)
    else:
        snap = ledger_or_snapshot
    probs = tip_weights(snap.styles, style, alpha, beta, snap.parent_cw)
    if len(snap.digests) == 1:
        only = snap.digests[0]
        return TipSelection(only, only)
    first = int(rng.choice(len(snap.digests), p=probs))
    rest = probs.copy()
    rest[first] = 0.0
    rest /= rest.sum()
    second = int(rng.choice(len(snap.digests), p=rest))
    return TipSelection(snap.digests[first], snap.digests[second])


def select_tips_walk(
    ledger: Ledger, depth: int, rng: np.random.Generator
) -> TipSelection:
    """Baseline: two independent cumulative-weight-biased random walks.

    Each walk backtracks ``depth`` parent steps from a uniformly chosen tip
    (stopping at a genesis site on shallower ledgers), then walks child-ward
    with transition probabilities proportional to the children's cumulative
    weights until it reaches a tip.
    """
    if len(ledger) == 0:
        raise LedgerError("ledger is empty")
    tips = ledger.tips

    def one_walk() -> bytes:
        start = tips[int(rng.integers(len(tips)))]
        for _ in range(depth):
            parents = ledger.sites[start].parents
            if not parents:
                break
            start = parents[int(rng.integers(len(parents)))]
        current = start
        while ledger.children[current]:
            kids = ledger.children[current]
            weights = np.array([ledger.cumulative_weight(k) for k in kids])
            total = weights.sum()
            if total <= 0:
                probs = np.full(len(kids), 1.0 / len(kids))
            else:
                probs = weights / total
            current = kids[int(rng.choice(len(kids), p=probs))]
        return current

    return TipSelection(one_walk(), one_walk())


def verify_and_append(
    ledger: Ledger,
    site: Site,
    selection: TipSelection,
    verifier_testset: learning.Dataset | None,
    epsilon: float,
    scheme: KeyedDigestScheme,
    difficulty_bits: int,
) -> AppendResult:
    """Full verification pipeline before an append.

    Order: proof-of-work, signature, then the test gap of each selected
    tip's payload against the verifier's test set. Marker sites (no
    payload, zero weight) pass the gap check by their signature alone.
    On any rejection the ledger is unchanged.
    """
    if tuple(site.parents) != selection.digests():
        return AppendResult(AppendStatus.REJECTED_STRUCTURE, "parents do not match selection")
    if not pow_verify(site, difficulty_bits):
        return AppendResult(AppendStatus.REJECTED_POW, "proof-of-work below difficulty")
    if not verify_site(site, scheme):
        return AppendResult(AppendStatus.REJECTED_SIGNATURE, "signature verification failed")
    gaps = []
    if verifier_testset is not None:
        for parent in selection.distinct():
            payload = ledger.site(parent).payload
            if payload is None:
                continue
            gap = float(learning.test_gap(payload, verifier_testset))
            gaps.append(gap)
            if gap > epsilon:
                return AppendResult(
                    AppendStatus.REJECTED_PARENT_GAP,
                    f"parent gap {gap:.6g} exceeds {epsilon:.6g}",
                    tuple(gaps),
                )
    ledger.append(site)
    return AppendResult(AppendStatus.APPENDED, parent_gaps=tuple(gaps))


def save_ledger(ledger: Ledger, path) -> None:
    """One canonical-serialized site per line, hex-encoded, in insertion order."""
    lines = [canonical_serialize(s).hex() for s in ledger.sites.values()]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def load_ledger(path) -> Ledger:
    """Rebuild a ledger from an export; digests are recomputed and re-checked."""
    ledger = Ledger()
    text = Path(path).read_text()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        try:
            site = parse_site(bytes.fromhex(line))
        except (ValueError, SiteError) as exc:
            raise LedgerError(f"line {lineno}: {exc}") from exc
        ledger.append(site)
    return ledger
