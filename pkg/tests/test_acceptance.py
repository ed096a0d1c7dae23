"""Acceptance suite: every release criterion at its stated tolerance.

Each test prints one CRITERION line (pass/fail plus elapsed seconds against
the runtime budget) so the whole gate is readable from the pytest -s log.
"""
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from facexplain import (
    CachingEmbedder,
    borda_aggregate,
    contribution_table,
    dominance_report,
    eaoc_attribution,
    eaoc_score,
    random_baseline,
    render_prompt,
    representation_curve,
    similarity_curve,
    single_removal_s0,
    top_k_select,
)
from facexplain.concepts import RankQuery, output_space
from facexplain.llm_report import DEFAULT_TEMPLATE
from facexplain.semantics import FillStrategy, build_masks
from facexplain.surrogates import lime_attribution, shapley_exact_values
from facexplain.synthetic import (
    NoisyEmbedder,
    SyntheticRegionEmbedder,
    descending_weights,
    make_strip_set,
    paint_regions,
    region_intensities,
    strip_landmarks,
    uniform_intensities,
)

from .oracles import (
    brute_borda_order,
    brute_borda_points,
    brute_rank_after_replacement,
    permutation_shapley,
)
from .worked_example import make_reference_explanation

GRAY = FillStrategy.gray()
GOLDEN = Path(__file__).parent / "golden"


@contextmanager
def criterion(number: int, label: str, budget_s: float | None):
    start = time.perf_counter()
    try:
        yield
    except BaseException:
        elapsed = time.perf_counter() - start
        print(f"CRITERION {number} FAIL {label} ({elapsed:.2f}s)", flush=True)
        raise
    elapsed = time.perf_counter() - start
    budget = f" < {budget_s:.0f}s budget" if budget_s else ""
    print(f"CRITERION {number} PASS {label} ({elapsed:.2f}s{budget})", flush=True)
    if budget_s is not None:
        assert elapsed < budget_s, f"runtime {elapsed:.2f}s exceeded the {budget_s}s budget"


def _strip_world(s: int, width: int, height: int, n_images: int, *, seed: int,
                 dim: int | None = None, uniform: bool = True):
    sset = make_strip_set(s)
    masks = build_masks(strip_landmarks(s, width, height, f"strips{s}"), sset)
    weights = descending_weights(s)
    embedder = CachingEmbedder(SyntheticRegionEmbedder(masks, weights, dim=dim or max(8, s), seed=seed))
    maker = uniform_intensities if uniform else region_intensities
    images = [paint_regions(masks, maker(s, i, seed=seed + 1)) for i in range(n_images)]
    return sset, masks, weights, embedder, images


def _spearman_vs_identity(ranking: np.ndarray) -> float:
    s = ranking.size
    positions = np.empty(s)
    positions[ranking] = np.arange(s)
    d2 = ((positions - np.arange(s)) ** 2).sum()
    return float(1 - 6 * d2 / (s * (s * s - 1)))


def test_criterion_1_exact_shapley_oracle():
    with criterion(1, "exact Shapley equals permutation enumeration (100 cases, 1e-9)", 10):
        rng = np.random.default_rng(20260810)
        for case in range(100):
            if case % 2 == 0:  # additive value function
                s = int(rng.integers(3, 8))
                c = rng.normal(size=s)
                base = float(rng.normal())

                def v(members, c=c, base=base):
                    return base + sum(c[i] for i in members)

            else:  # arbitrary 3-region value function
                s = 3
                table = {m: float(rng.normal()) for m in range(8)}

                def v(members, table=table):
                    return table[sum(1 << i for i in members)]

            def batched(presence, v=v):
                return np.array([v(frozenset(np.nonzero(row)[0].tolist())) for row in presence])

            phi, v_empty, v_full = shapley_exact_values(batched, s)
            oracle = permutation_shapley(v, s)
            assert np.abs(phi - oracle).max() < 1e-9
            assert abs(phi.sum() - (v_full - v_empty)) < 1e-9


def test_criterion_2_lime_linear_recovery():
    with criterion(2, "LIME recovers linear targets (1e-6) and noisy rankings (rho >= 0.95)", 30):
        s = 8
        _, masks, weights, embedder, images = _strip_world(s, 32, 32, 1, seed=40, uniform=False)
        att = lime_attribution(embedder, images[0], masks, GRAY, samples=96, ridge=1e-8, seed=3)
        means = embedder.inner.region_means(images[0])
        expected = weights * (means - 127.5)
        assert np.abs(att.scores - expected).max() < 1e-6

        _, masks_u, _, clean, imgs_u = _strip_world(s, 32, 32, 1, seed=41, uniform=True)
        rhos = []
        for seed in range(20):
            noisy = NoisyEmbedder(clean.inner, sigma=0.01, seed=seed)
            att = lime_attribution(noisy, imgs_u[0], masks_u, GRAY, samples=2000, seed=500 + seed)
            rhos.append(_spearman_vs_identity(att.ranking()))
        assert float(np.mean(rhos)) >= 0.95


def test_criterion_3_eaoc_rank_query_vs_brute_force():
    with criterion(3, "EaOC rank query matches brute re-sort (1000 cases) and planted zeros", 20):
        rng = np.random.default_rng(77)
        for _ in range(1000):
            n = int(rng.integers(2, 60))
            values = np.round(rng.uniform(0, 8, size=n), 1)  # quantized: plenty of ties
            j = int(rng.integers(n))
            if rng.uniform() < 0.3:
                new_value = float(values[rng.integers(n)])  # exact collision
            else:
                new_value = float(rng.uniform(0, 8))
            query = RankQuery(values)
            got = abs(query.original_rank(j) - query.rank_with_value(j, new_value))
            old = abs(
                brute_rank_after_replacement(values, j, float(values[j]))
                - brute_rank_after_replacement(values, j, new_value)
            )
            assert got == old

        _, masks, _, _, _ = _strip_world(5, 32, 32, 0, seed=50)
        zero_weights = np.array([1.5, 0.0, 1.0, 0.0, 0.3])
        embedder = SyntheticRegionEmbedder(masks, zero_weights, seed=9)
        images = [paint_regions(masks, region_intensities(5, i, seed=51)) for i in range(12)]
        distances = output_space(embedder, images)
        for j in range(12):
            for region in (1, 3):
                assert eaoc_score(embedder, images, j, masks.masks[region], GRAY,
                                  distances=distances) == 0


def test_criterion_4_planted_ranking_recovery():
    with criterion(4, "all three methods recover planted order, Borda preserves it (s=5,13)", 120):
        for s in (5, 13):
            sset, masks, weights, embedder, images = _strip_world(
                s, 39, 32, 48, seed=60 + s, uniform=True
            )
            distances = output_space(embedder, images)
            per_method = {"eaoc": [], "lime": [], "kernelshap": []}
            for j in range(48):
                per_method["eaoc"].append(
                    eaoc_attribution(embedder, images, j, masks, GRAY, distances=distances).ranking()
                )
                per_method["lime"].append(
                    lime_attribution(embedder, images[j], masks, GRAY,
                                     samples=256, ridge=1e-4, seed=700 + j).ranking()
                )
                from facexplain.surrogates import kernelshap_attribution

                per_method["kernelshap"].append(
                    kernelshap_attribution(embedder, images[j], masks, GRAY,
                                           mode="exact", seed=800 + j).ranking()
                )
            for method, rankings in per_method.items():
                merged = borda_aggregate(rankings, set_id=sset.set_id, method=method)
                assert _spearman_vs_identity(merged.sequence()) == 1.0, (s, method)
                np.testing.assert_array_equal(merged.sequence(), np.arange(s))


def test_criterion_5_curve_dominance():
    with criterion(5, "oracle curves dominate the 20-trial random mean at >= 95% of k", 120):
        s = 13
        _, masks, weights, embedder, images = _strip_world(s, 39, 32, 48, seed=90, uniform=True)
        mask_list = [masks] * len(images)
        oracle = np.arange(s)

        rep = representation_curve(embedder, images, oracle, mask_list, GRAY, method="oracle")
        rep_base = random_baseline(embedder, images, GRAY, target="representation",
                                   trials=20, seed=17, masks=mask_list)
        rep_dom = dominance_report({"oracle": rep}, rep_base)
        assert rep_dom.fractions["oracle"] >= 0.95
        for trial in rep_base.trials:
            assert trial.mean[-1] == rep.mean[-1]  # full occlusion is order-invariant

        # pairs agree everywhere except the least important region, so the
        # planted order keeps the shared signal longest and every removal
        # prefix displaces the score maximally
        black = FillStrategy.black()
        pair_embedder = CachingEmbedder(
            SyntheticRegionEmbedder(masks, weights, dim=16, seed=90, offset_scale=15.0)
        )
        rng = np.random.default_rng(5)
        pairs = []
        for _ in range(24):
            shared = rng.uniform(150, 250, size=s)
            altered = shared.copy()
            altered[-1] -= 120.0
            pairs.append((paint_regions(masks, shared), paint_regions(masks, altered),
                          masks, masks))
        sim = similarity_curve(pair_embedder, pairs, oracle, black, method="oracle")
        sim_base = random_baseline(pair_embedder, pairs, black, target="similarity",
                                   trials=20, seed=18)
        sim_dom = dominance_report({"oracle": sim}, sim_base)
        assert sim_dom.fractions["oracle"] >= 0.95
        for trial in sim_base.trials:
            assert trial.mean[-1] == sim.mean[-1]


def test_criterion_6_single_removal_invariants():
    with criterion(6, "single-removal invariants over 200 random pairs (1e-9)", 60):
        s = 7
        _, masks, weights, embedder, _ = _strip_world(s, 35, 28, 0, seed=120)
        ranking = borda_aggregate([np.arange(s)], set_id=masks.set_id, method="oracle")
        rng = np.random.default_rng(2026)
        for case in range(200):
            img_a = paint_regions(masks, rng.uniform(40, 250, size=s))
            img_b = paint_regions(masks, rng.uniform(40, 250, size=s))
            expl = single_removal_s0(embedder, img_a, img_b, masks, masks, ranking, GRAY)
            pos = expl.contributions >= 0
            if pos.any():
                assert abs(expl.normalized[pos].sum() - 1.0) < 1e-9
            if (~pos).any():
                assert abs(expl.normalized[~pos].sum() + 1.0) < 1e-9
            for n in range(s):
                assert (expl.map_a[masks.masks[n]] == expl.normalized[n]).all()
                assert (expl.map_b[masks.masks[n]] == expl.normalized[n]).all()
            if case < 10:
                same = single_removal_s0(embedder, img_a, img_a, masks, masks, ranking, GRAY)
                assert (same.contributions == 0).all()


def test_criterion_7_reference_table_round_trip():
    with criterion(7, "reference worked example: table layout, top-3, prompt goldens", None):
        expl = make_reference_explanation()
        table = contribution_table(expl)
        assert len(table.negative) == 6 and len(table.positive) == 4
        neg_magnitudes = [abs(v) for _, v in table.negative]
        pos_magnitudes = [abs(v) for _, v in table.positive]
        assert neg_magnitudes == sorted(neg_magnitudes, reverse=True)
        assert pos_magnitudes == sorted(pos_magnitudes)
        top3 = {expl.region_names[i] for i in top_k_select(expl, 3)}
        assert top3 == {"Lower area around the right eye", "Right eye", "Left eye"}
        prompt = render_prompt(DEFAULT_TEMPLATE, expl)
        assert "64%" in prompt
        assert "[cosine_similarity_percentage]" not in prompt
        assert "[contributions_table]" not in prompt
        assert table.to_markdown() == (GOLDEN / "reference_table.md").read_text()
        assert table.to_csv() == (GOLDEN / "reference_table.csv").read_text()
        assert prompt + "\n" == (GOLDEN / "reference_prompt.txt").read_text()


def test_criterion_8_borda_properties():
    with criterion(8, "Borda anonymity, unanimity, points-sum on 1000 profiles", 10):
        rng = np.random.default_rng(8)
        for _ in range(1000):
            s = int(rng.integers(2, 11))
            count = int(rng.integers(1, 9))
            profile = [rng.permutation(s) for _ in range(count)]
            out = borda_aggregate(profile)
            brute = brute_borda_points(profile, s)
            assert [brute[n] for n in range(s)] == out.borda_points.tolist()
            assert brute_borda_order(profile, s) == out.sequence().tolist()
            assert out.borda_points.sum() == count * s * (s - 1) / 2
            shuffled = [profile[i] for i in rng.permutation(count)]
            np.testing.assert_array_equal(borda_aggregate(shuffled).order, out.order)
            positions = [{int(r): p for p, r in enumerate(ranking)} for ranking in profile]
            for a in range(s):
                for b in range(a + 1, s):
                    if all(p[a] < p[b] for p in positions):
                        assert out.order[a] < out.order[b]
                    elif all(p[b] < p[a] for p in positions):
                        assert out.order[b] < out.order[a]


def test_criterion_9_replay_determinism(tmp_path):
    with criterion(9, "run.json replay reproduces artifacts bit-identically, jobs-independent", None):
        from facexplain.cli import main

        config_path = tmp_path / "run.toml"
        config_path.write_text(
            '[model]\nkind = "synthetic"\ndim = 12\nseed = 11\n'
            "[data.generate]\ncount = 10\npairs = 5\nseed = 7\nwidth = 32\nheight = 32\n"
            "grid_rows = 1\ngrid_cols = 5\n"
            '[methods]\nnames = ["eaoc", "lime"]\n[methods.lime]\nsamples = 64\nseed = 5\n'
            '[output]\ndir = "out"\n[evaluation]\ntrials = 3\nseed = 13\n[explain]\ntop_k = 3\n'
        )
        config = str(config_path)
        assert main(["extract-concepts", "--config", config]) == 0
        assert main(["explain-pair", "--config", config, "--image-a", "synth000",
                     "--image-b", "synth004", "--ranking", "out/ranking_eaoc.json",
                     "--offline"]) == 0
        assert main(["evaluate", "--config", config]) == 0
        out = tmp_path / "out"
        snapshot = {str(p.relative_to(out)): p.read_bytes()
                    for p in sorted(out.rglob("*")) if p.is_file()}
        run_records = [out / "run.json", out / "synth000__synth004" / "run.json"]
        for jobs in ("1", "4"):
            for record in run_records:
                assert main(["replay", str(record), "--jobs", jobs]) == 0
            after = {str(p.relative_to(out)): p.read_bytes()
                     for p in sorted(out.rglob("*")) if p.is_file()}
            assert after == snapshot
