import math

import numpy as np
import pytest
from scipy import stats

from dagshare.ledger import (
    AppendStatus,
    Ledger,
    LedgerError,
    TipSelection,
    load_ledger,
    save_ledger,
    select_tips,
    select_tips_walk,
    selection_probability,
    tip_weights,
    verify_and_append,
)
from dagshare.learning import LearningTask, gen_dataset, least_squares_fit
from dagshare.sites import (
    KeyedDigestScheme,
    ModelParams,
    Site,
    StyleIndicator,
    build_site,
)


def make_site(scheme, key, style, parents=(), payload=None, own=1.0, difficulty=0,
              scope=0):
    return build_site(
        payload=payload,
        feature=StyleIndicator(style),
        parents=parents,
        key=key,
        scheme=scheme,
        own_weight=own,
        difficulty_bits=difficulty,
        scope=scope,
    )


def bootstrap(scheme, rng, genesis_styles=(0.5,)):
    # distinct scopes keep content-addressed genesis sites distinguishable
    key = scheme.new_key(rng)
    ledger = Ledger()
    for i, s in enumerate(genesis_styles):
        ledger.append(make_site(scheme, key, s, scope=i))
    return ledger, key


def grow_random(ledger, scheme, key, rng, n, beta=0.0, styles=None):
    for i in range(n):
        style = float(rng.uniform()) if styles is None else styles[i]
        sel = select_tips(ledger, style, rng, beta=beta)
        ledger.append(make_site(scheme, key, style, sel.digests()))
    return ledger


def brute_force_cw(ledger):
    """Reachability oracle: own weight plus own weights of all sites whose
    ancestor closure (over parent edges) contains the site."""
    ancestors = {}
    for digest, site in ledger.sites.items():
        anc = set()
        for p in dict.fromkeys(site.parents):
            anc.add(p)
            anc |= ancestors[p]
        ancestors[digest] = anc
    cw = {d: s.weights[0] for d, s in ledger.sites.items()}
    for digest, anc in ancestors.items():
        w = ledger.sites[digest].weights[0]
        for a in anc:
            cw[a] += w
    return cw


class TestTipWeights:
    def test_uniform_when_unweighted(self):
        probs = tip_weights(np.array([0.1, 0.4, 0.6, 0.9]), 0.5, 0.0, 0.0)
        assert np.allclose(probs, 0.25)

    def test_two_tip_closed_form(self, rng, scheme):
        # softmax over {exp(0), exp(-0.16)} for the style-matched tip
        ledger, key = bootstrap(scheme, rng, (0.5, 0.1))
        tips = ledger.tips
        styles = {d: ledger.sites[d].feature.m for d in tips}
        matched = next(d for d in tips if styles[d] == 0.5)
        p = selection_probability(ledger, 0.5, matched, alpha=0.0, beta=1.0)
        assert p == pytest.approx(1.0 / (1.0 + math.exp(-0.16)), rel=1e-12)

    def test_large_beta_concentrates_on_nearest_style(self):
        styles = np.array([0.1, 0.45, 0.8])
        probs = tip_weights(styles, 0.5, 0.0, 500.0)
        assert np.argmax(probs) == 1
        assert probs[1] > 0.999

    def test_probabilities_sum_to_one(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            styles = rng.uniform(0, 1, int(rng.integers(1, 30)))
            cw = rng.uniform(0, 10, styles.size)
            probs = tip_weights(styles, float(rng.uniform()), 0.7, 3.0, cw)
            assert probs.sum() == pytest.approx(1.0)

    def test_shift_invariance_of_weight_sums(self):
        styles = np.array([0.2, 0.5, 0.7, 0.9])
        cw = np.array([3.0, 1.0, 7.0, 2.0])
        base = tip_weights(styles, 0.4, 0.6, 2.0, cw)
        shifted = tip_weights(styles, 0.4, 0.6, 2.0, cw + 123.0)
        assert np.allclose(base, shifted)

    def test_heaviest_parents_least_likely_among_equal_styles(self):
        styles = np.full(4, 0.5)
        cw = np.array([2.0, 9.0, 4.0, 1.0])
        probs = tip_weights(styles, 0.5, 1.0, 5.0, cw)
        assert np.argmin(probs) == 1

    def test_empty_tip_set_rejected(self):
        with pytest.raises(LedgerError):
            tip_weights(np.array([]), 0.5, 0.0, 0.0)


class TestSelectTips:
    def test_single_tip_self_pair(self, rng, scheme):
        ledger, _ = bootstrap(scheme, rng)
        sel = select_tips(ledger, 0.5, rng)
        assert sel.first == sel.second == ledger.tips[0]

    def test_seeded_selection_reproducible(self, scheme):
        rng = np.random.default_rng(3)
        ledger, key = bootstrap(scheme, rng, (0.2, 0.5, 0.8))
        grow_random(ledger, scheme, key, rng, 20, beta=2.0)
        a = select_tips(ledger, 0.4, np.random.default_rng(77), beta=2.0)
        b = select_tips(ledger, 0.4, np.random.default_rng(77), beta=2.0)
        assert a == b

    def test_two_draws_distinct_on_multitip_ledger(self, scheme):
        rng = np.random.default_rng(4)
        ledger, key = bootstrap(scheme, rng, (0.2, 0.5, 0.8, 0.9))
        for _ in range(50):
            sel = select_tips(ledger, 0.5, rng, beta=1.0)
            assert sel.first != sel.second

    def test_empirical_frequencies_match_selection_law(self, scheme):
        # Monte-Carlo vs the closed-form law, chi-squared at the 1% level
        rng = np.random.default_rng(11)
        ledger, key = bootstrap(scheme, rng, (0.1, 0.3, 0.5, 0.7, 0.9))
        tips = ledger.tips
        style_x, beta = 0.45, 3.0
        expected = np.array(
            [selection_probability(ledger, style_x, t, 0.0, beta) for t in tips]
        )
        draws = 10_000
        counts = {t: 0 for t in tips}
        sample_rng = np.random.default_rng(999)
        for _ in range(draws):
            counts[select_tips(ledger, style_x, sample_rng, beta=beta).first] += 1
        observed = np.array([counts[t] for t in tips])
        stat = float(((observed - draws * expected) ** 2 / (draws * expected)).sum())
        assert stat < stats.chi2.ppf(0.99, len(tips) - 1)


class TestRandomWalkSelection:
    def test_two_site_chain_returns_tip(self, scheme):
        rng = np.random.default_rng(0)
        ledger, key = bootstrap(scheme, rng)
        genesis = ledger.tips[0]
        child = make_site(scheme, key, 0.5, (genesis, genesis))
        ledger.append(child)
        sel = select_tips_walk(ledger, depth=5, rng=rng)
        assert sel.first == sel.second == child.digest

    def test_deterministic_given_seed(self, scheme):
        rng = np.random.default_rng(8)
        ledger, key = bootstrap(scheme, rng, (0.2, 0.8))
        grow_random(ledger, scheme, key, rng, 40)
        a = select_tips_walk(ledger, 10, np.random.default_rng(5))
        b = select_tips_walk(ledger, 10, np.random.default_rng(5))
        assert a == b

    def test_walk_always_lands_on_tips(self, scheme):
        rng = np.random.default_rng(9)
        ledger, key = bootstrap(scheme, rng, (0.3, 0.6))
        grow_random(ledger, scheme, key, rng, 200)
        tip_set = set(ledger.tips)
        for _ in range(30):
            sel = select_tips_walk(ledger, 8, rng)
            assert sel.first in tip_set and sel.second in tip_set


class TestWalkEdgeCases:
    def test_walk_on_empty_ledger_rejected(self):
        with pytest.raises(LedgerError):
            select_tips_walk(Ledger(), 5, np.random.default_rng(0))

    def test_selection_requires_known_candidate(self, scheme):
        rng = np.random.default_rng(30)
        ledger, _ = bootstrap(scheme, rng, (0.4, 0.6))
        with pytest.raises(LedgerError):
            selection_probability(ledger, 0.5, b"\x00" * 32, 0.0, 1.0)


class TestVerifyAndAppend:
    def _training_setup(self, seed=0):
        task = LearningTask.from_seed(seed, 3)
        rng = np.random.default_rng(seed)
        data = gen_dataset(rng, 200, task, 0.5, 0.0)
        model = least_squares_fit(data)
        return task, data, model

    def test_append_success_with_valid_parents(self, scheme):
        rng = np.random.default_rng(1)
        task, data, model = self._training_setup()
        key = scheme.new_key(rng)
        ledger = Ledger()
        g1 = make_site(scheme, key, 0.4, payload=model)
        g2 = make_site(scheme, key, 0.6, payload=model)
        ledger.append(g1)
        ledger.append(g2)
        tips_before = ledger.tip_count
        sel = TipSelection(g1.digest, g2.digest)
        site = make_site(scheme, key, 0.5, sel.digests(), payload=model)
        result = verify_and_append(ledger, site, sel, data, 0.1, scheme, 0)
        assert result.ok
        assert ledger.tip_count == tips_before + 1 - 2

    def test_corrupted_parent_rejected(self, scheme):
        rng = np.random.default_rng(2)
        task, data, model = self._training_setup()
        corrupt = ModelParams(-model.theta)
        key = scheme.new_key(rng)
        ledger = Ledger()
        good = make_site(scheme, key, 0.4, payload=model)
        bad = make_site(scheme, key, 0.6, payload=corrupt)
        ledger.append(good)
        ledger.append(bad)
        sel = TipSelection(good.digest, bad.digest)
        site = make_site(scheme, key, 0.5, sel.digests(), payload=model)
        result = verify_and_append(ledger, site, sel, data, 0.05, scheme, 0)
        assert result.status is AppendStatus.REJECTED_PARENT_GAP
        assert site.digest not in ledger.sites

    def test_bad_pow_and_bad_signature_get_distinct_codes(self, scheme):
        rng = np.random.default_rng(3)
        key = scheme.new_key(rng)
        ledger, _ = bootstrap(scheme, rng)
        genesis = ledger.tips[0]
        sel = TipSelection(genesis, genesis)
        site = make_site(scheme, key, 0.5, sel.digests(), difficulty=0)
        # demand more work than the site was built with
        result = verify_and_append(ledger, site, sel, None, 1.0, scheme, 20)
        assert result.status is AppendStatus.REJECTED_POW
        forged = Site(
            digest=site.digest, payload=site.payload, scope=site.scope,
            feature=site.feature, pow_nonce=site.pow_nonce, weights=site.weights,
            issuer=site.issuer, signature=b"\x00" * 32, parents=site.parents,
        )
        result = verify_and_append(ledger, forged, sel, None, 1.0, scheme, 0)
        assert result.status is AppendStatus.REJECTED_SIGNATURE

    def test_marker_parents_pass_by_signature_alone(self, scheme):
        rng = np.random.default_rng(4)
        _, data, model = self._training_setup()
        key = scheme.new_key(rng)
        ledger = Ledger()
        marker = make_site(scheme, key, 0.5, own=0.0)
        ledger.append(marker)
        sel = TipSelection(marker.digest, marker.digest)
        site = make_site(scheme, key, 0.5, sel.digests(), payload=model)
        result = verify_and_append(ledger, site, sel, data, 1e-9, scheme, 0)
        assert result.ok


class TestLedgerStructure:
    def test_acyclic_and_cw_matches_brute_force(self, scheme):
        rng = np.random.default_rng(10)
        ledger, key = bootstrap(scheme, rng, (0.2, 0.5, 0.8))
        grow_random(ledger, scheme, key, rng, 200, beta=1.5)
        order = {d: i for i, d in enumerate(ledger.sites)}
        for digest, site in ledger.sites.items():
            for p in site.parents:
                assert order[p] < order[digest]
        oracle = brute_force_cw(ledger)
        for digest in ledger.sites:
            assert ledger.cumulative_weight(digest) == pytest.approx(oracle[digest])

    def test_incremental_tips_match_recompute(self, scheme):
        rng = np.random.default_rng(12)
        ledger, key = bootstrap(scheme, rng, (0.3, 0.7))
        for _ in range(60):
            grow_random(ledger, scheme, key, rng, 5, beta=1.0)
            assert sorted(ledger.tips) == sorted(ledger.recompute_tips())

    def test_genesis_cw_counts_all_descendants(self, scheme):
        rng = np.random.default_rng(13)
        ledger, key = bootstrap(scheme, rng)
        genesis = ledger.tips[0]
        grow_random(ledger, scheme, key, rng, 50)
        total_own = sum(s.weights[0] for s in ledger.sites.values())
        assert ledger.cumulative_weight(genesis) == pytest.approx(total_own)

    def test_duplicate_append_rejected(self, scheme):
        rng = np.random.default_rng(14)
        ledger, key = bootstrap(scheme, rng)
        with pytest.raises(LedgerError):
            ledger.append(ledger.sites[ledger.tips[0]])

    def test_unknown_parent_rejected(self, scheme):
        rng = np.random.default_rng(15)
        ledger, key = bootstrap(scheme, rng)
        orphan = make_site(scheme, key, 0.5, (bytes(32), bytes(32)))
        with pytest.raises(LedgerError):
            ledger.append(orphan)


class TestAssortativity:
    def test_constant_styles_degenerate_to_zero(self, scheme):
        rng = np.random.default_rng(16)
        ledger, key = bootstrap(scheme, rng, (0.5, 0.5))
        grow_random(ledger, scheme, key, rng, 30, styles=[0.5] * 30)
        assert ledger.style_assortativity() == 0.0

    def _grow_two_groups(self, scheme, seed, beta, rounds=50, per_round=10):
        # batch rounds select from the round-start snapshot, keeping a tip
        # pool alive in both style clusters
        rng = np.random.default_rng(seed)
        key = scheme.new_key(rng)
        ledger = Ledger()
        for g in range(10):
            center = 0.1 if g % 2 == 0 else 0.9
            ledger.append(make_site(scheme, key, center, scope=g))
        for _ in range(rounds):
            snap = ledger.snapshot()
            for style in np.clip(
                np.where(rng.uniform(size=per_round) < 0.5, 0.1, 0.9)
                + rng.normal(0, 0.02, per_round), 0, 1,
            ):
                sel = select_tips(snap, float(style), rng, beta=beta)
                ledger.append(make_site(scheme, key, float(style), sel.digests()))
        return ledger

    def test_two_style_groups_cluster_under_style_bias(self, scheme):
        ledger = self._grow_two_groups(scheme, seed=17, beta=5.0)
        assert len(ledger) == 510
        assert ledger.style_assortativity() > 0.8
        assert ledger.edge_count > 900

    def test_unbiased_selection_has_no_style_correlation(self, scheme):
        ledger = self._grow_two_groups(scheme, seed=18, beta=0.0)
        assert abs(ledger.style_assortativity()) < 0.1


class TestLedgerIO:
    def test_round_trip(self, tmp_path, scheme):
        rng = np.random.default_rng(19)
        ledger, key = bootstrap(scheme, rng, (0.2, 0.8))
        grow_random(ledger, scheme, key, rng, 40, beta=2.0)
        path = tmp_path / "ledger.hex"
        save_ledger(ledger, path)
        loaded = load_ledger(path)
        assert list(loaded.sites) == list(ledger.sites)
        assert sorted(loaded.tips) == sorted(ledger.tips)
        # re-export must be byte-identical
        path2 = tmp_path / "ledger2.hex"
        save_ledger(loaded, path2)
        assert path.read_bytes() == path2.read_bytes()

    def test_golden_export_stable(self):
        from pathlib import Path
        from dagshare.cli import demo_ledger

        ledger = demo_ledger(sites=12, seed=7)
        lines = [l for l in (Path(__file__).parent / "golden" / "ledger.hex").read_text().splitlines() if l]
        from dagshare.sites import canonical_serialize

        assert [canonical_serialize(s).hex() for s in ledger.sites.values()] == lines

    def test_corrupt_line_rejected(self, tmp_path, scheme):
        rng = np.random.default_rng(20)
        ledger, _ = bootstrap(scheme, rng)
        path = tmp_path / "ledger.hex"
        save_ledger(ledger, path)
        path.write_text(path.read_text().replace("0", "1", 1))
        with pytest.raises(LedgerError):
            load_ledger(path)
