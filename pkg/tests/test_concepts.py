import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from facexplain import (
    ActivationsUnsupportedError,
    ConceptGroups,
    FillStrategy,
    ValidationError,
    eaoc_attribution,
    eaoc_score,
    mage_concept_groups,
    order_sequence,
    output_space,
    rank_by_scores,
    rank_displacement,
)
from facexplain.concepts import RankQuery, group_output_space
from facexplain.embedder import Embedder
from facexplain.synthetic import SyntheticRegionEmbedder, paint_regions

from .oracles import brute_original_rank, brute_rank_after_replacement


class VectorEmbedder(Embedder):
    """Embedding = the image itself flattened; gives exact norm control."""

    model_id = "vector"

    def embed_vector(self, image):
        return np.asarray(image, dtype=np.float64).reshape(-1)


# --- output space and ordering ----------------------------------------------


def test_output_space_zero_embedding_gives_zero_distance():
    dist = output_space(VectorEmbedder(), [np.zeros((1, 2))])
    assert dist.values[0] == 0.0


def test_output_space_matches_explicit_summation(planted5):
    embedder, _, images, _ = planted5
    dist = output_space(embedder, images[:5])
    for i in range(5):
        vec = embedder.embed_vector(images[i])
        by_hand = sum(float(x) * float(x) for x in vec) ** 0.5
        assert dist.values[i] == pytest.approx(by_hand, rel=1e-12)


def test_output_space_empty_dataset_rejected(planted5):
    embedder = planted5[0]
    with pytest.raises(ValidationError, match="nonempty"):
        output_space(embedder, [])


def test_order_sequence_simple_and_ties():
    np.testing.assert_array_equal(order_sequence(np.array([3.0, 1.0, 2.0])), [0, 2, 1])
    np.testing.assert_array_equal(order_sequence(np.array([5.0, 5.0, 5.0])), [0, 1, 2])


def test_order_sequence_large_dataset_length():
    values = np.random.default_rng(0).uniform(size=750)
    seq = order_sequence(values)
    assert seq.shape == (750,)
    np.testing.assert_array_equal(np.sort(seq), np.arange(750))


# --- rank queries vs brute force --------------------------------------------


def test_rank_query_agrees_with_brute_force_on_random_cases():
    rng = np.random.default_rng(42)
    for _ in range(300):
        n = int(rng.integers(2, 40))
        # quantized values force plenty of exact ties
        values = np.round(rng.uniform(0, 5, size=n), 1)
        query = RankQuery(values)
        j = int(rng.integers(n))
        new_value = float(np.round(rng.uniform(0, 5), 1))
        assert query.original_rank(j) == brute_original_rank(values, j)
        assert query.rank_with_value(j, new_value) == brute_rank_after_replacement(values, j, new_value)


def test_rank_displacement_examples():
    # norms (10, 5, 1): dropping image 0 to 3 moves it from rank 0 to rank 1
    assert rank_displacement(np.array([10.0, 5.0, 1.0]), 0, 3.0) == 1
    # a perturbation that stays between the same neighbors moves nothing
    assert rank_displacement(np.array([10.0, 5.0, 1.0]), 1, 6.0) == 0
    assert rank_displacement(np.array([10.0, 5.0, 1.0]), 0, 0.5) == 2


def test_rank_displacement_scale_invariant():
    rng = np.random.default_rng(7)
    values = rng.uniform(1, 10, size=25)
    for lam in (0.25, 3.0, 117.0):
        for j in (0, 12, 24):
            new = float(values[j] * 0.5)
            assert rank_displacement(values, j, new) == rank_displacement(lam * values, j, lam * new)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(min_value=0, max_value=9), min_size=2, max_size=25), st.data())
def test_rank_query_bounded_by_dataset_size(values, data):
    values = np.asarray(values, dtype=np.float64)
    j = data.draw(st.integers(min_value=0, max_value=len(values) - 1))
    new_value = data.draw(st.floats(min_value=-1, max_value=10, allow_nan=False))
    assert RankQuery(values).displacement(j, float(new_value)) <= len(values) - 1


# --- eaoc -------------------------------------------------------------------


def test_eaoc_score_through_full_path(gray):
    # 1x1 images double as their own embeddings: norms (10, 5, 1)
    images = [np.array([[10.0]]), np.array([[5.0]]), np.array([[1.0]])]
    mask = np.ones((1, 1), dtype=bool)
    score = eaoc_score(VectorEmbedder(), images, 0, mask, FillStrategy.constant(3.0))
    assert score == 1


def test_eaoc_score_zero_weight_region_scores_zero(planted5, strip5, gray):
    _, _, masks = strip5
    embedder = SyntheticRegionEmbedder(masks, [1.0, 0.0, 2.0, 0.5, 0.1], seed=1)
    images = [paint_regions(masks, [60 + 10 * i] * 5) for i in range(8)]
    assert eaoc_score(embedder, images, 3, masks.masks[1], gray) == 0


def test_eaoc_attribution_recovers_planted_order(strip5, gray):
    _, _, masks = strip5
    embedder = SyntheticRegionEmbedder(masks, [5.0, 1.0, 0.0, 0.0, 0.0], seed=2)
    images = [paint_regions(masks, [200 * (1 + 0.02 * i)] * 5) for i in range(10)]
    att = eaoc_attribution(embedder, images, 4, masks, gray)
    np.testing.assert_array_equal(att.ranking()[:2], [0, 1])
    assert att.scores[2] == att.scores[3] == att.scores[4] == 0


def test_eaoc_attribution_all_zero_weights(strip5, gray):
    _, _, masks = strip5
    embedder = SyntheticRegionEmbedder(masks, np.zeros(5), seed=2)
    images = [paint_regions(masks, [100 + i] * 5) for i in range(6)]
    att = eaoc_attribution(embedder, images, 0, masks, gray)
    np.testing.assert_array_equal(att.scores, np.zeros(5))
    np.testing.assert_array_equal(att.ranking(), np.arange(5))


def test_eaoc_grouped_degenerate_partition_matches_ungrouped(planted5, gray):
    embedder, _, images, masks = planted5
    groups = ConceptGroups(channel_groups=(tuple(range(8)),))
    plain = eaoc_attribution(embedder, images, 2, masks, gray)
    grouped = eaoc_attribution(embedder, images, 2, masks, gray, groups=groups)
    np.testing.assert_array_equal(grouped.ranking(), plain.ranking())


def test_eaoc_groups_unknown_channels_rejected(planted5, gray):
    embedder, _, images, masks = planted5
    groups = ConceptGroups(channel_groups=((0, 1, 2, 3, 4, 5, 6, 99),))
    with pytest.raises(ValidationError, match="unknown channels"):
        eaoc_attribution(embedder, images, 0, masks, gray, groups=groups)


def test_eaoc_score_bounded(planted5, gray):
    embedder, _, images, masks = planted5
    for j in (0, 7, 15):
        att = eaoc_attribution(embedder, images, j, masks, gray)
        assert att.scores.max() <= len(images) - 1


# --- concept groups ---------------------------------------------------------


class TwoFamilyEmbedder(Embedder):
    """8 channels: the first family tracks mean brightness, the second its
    complement; k-means on dataset signatures must split them exactly."""

    model_id = "two-family"

    def __init__(self):
        self.gains = np.array([1.0, 1.1, 0.9, 1.05, 1.0, 1.1, 0.9, 1.05])

    def embed_vector(self, image):
        m = float(np.mean(image))
        return np.array([m, 255.0 - m])

    @property
    def has_activations(self):
        return True

    @property
    def activation_channels(self):
        return 8

    def activations(self, image):
        m = float(np.mean(image))
        values = np.where(np.arange(8) < 4, m, 255.0 - m) * self.gains
        return values[:, None, None] * np.ones((8, 2, 2))


def test_mage_groups_trivial_partitions(planted5):
    embedder, _, images, _ = planted5
    single = mage_concept_groups(embedder, images[:4], k=1)
    assert single.channel_groups == (tuple(range(8)),)
    singletons = mage_concept_groups(embedder, images[:4], k=8)
    assert singletons.channel_groups == tuple((c,) for c in range(8))


def test_mage_groups_out_of_range_k(planted5):
    embedder, _, images, _ = planted5
    with pytest.raises(ValidationError):
        mage_concept_groups(embedder, images[:4], k=0)
    with pytest.raises(ValidationError):
        mage_concept_groups(embedder, images[:4], k=9)


def test_mage_groups_recover_planted_families():
    embedder = TwoFamilyEmbedder()
    rng = np.random.default_rng(5)
    images = [np.full((4, 4), v) for v in rng.uniform(10, 240, size=12)]
    groups = mage_concept_groups(embedder, images, k=2, seed=11)
    assert sorted(map(sorted, groups.channel_groups)) == [[0, 1, 2, 3], [4, 5, 6, 7]]
    # nearest-centroid verification on the signature vectors
    signatures = np.stack([embedder.activations(img).mean(axis=(1, 2)) for img in images], axis=1)
    for group in groups.channel_groups:
        centroid = signatures[list(group)].mean(axis=0)
        other = [c for c in range(8) if c not in group]
        other_centroid = signatures[other].mean(axis=0)
        for c in group:
            own = np.linalg.norm(signatures[c] - centroid)
            away = np.linalg.norm(signatures[c] - other_centroid)
            assert own < away


def test_mage_groups_need_activation_capability():
    class NoActs(Embedder):
        model_id = "plain"

        def embed_vector(self, image):
            return np.ones(3)

    with pytest.raises(ActivationsUnsupportedError):
        mage_concept_groups(NoActs(), [np.zeros((2, 2))], k=1)


def test_concept_groups_must_be_disjoint_and_complete(planted5):
    with pytest.raises(ValidationError, match="disjoint"):
        ConceptGroups(channel_groups=((0, 1), (1, 2)))
    embedder = planted5[0]
    incomplete = ConceptGroups(channel_groups=((0, 1),))
    with pytest.raises(ValidationError, match="cover every"):
        incomplete.check_against(embedder)


def test_group_output_space_shape(planted5):
    embedder, _, images, _ = planted5
    groups = ConceptGroups(channel_groups=(tuple(range(4)), tuple(range(4, 8))))
    signals = group_output_space(embedder, images[:6], groups)
    assert signals.shape == (2, 6)
    assert (signals >= 0).all()


def test_rank_by_scores_tie_break():
    np.testing.assert_array_equal(rank_by_scores(np.array([1.0, 3.0, 3.0, 0.5])), [1, 2, 0, 3])


def test_eaoc_multi_group_mechanics(planted5, gray):
    # two channel groups: scores become s - aggregated rank position and the
    # grouped metadata records the partition
    embedder, _, images, masks = planted5
    groups = ConceptGroups(channel_groups=(tuple(range(4)), tuple(range(4, 8))))
    att = eaoc_attribution(embedder, images, 1, masks, gray, groups=groups)
    assert sorted(att.scores.tolist()) == [1.0, 2.0, 3.0, 4.0, 5.0]
    assert att.metadata["concept_groups"] == [[0, 1, 2, 3], [4, 5, 6, 7]]
