import numpy as np
import pytest

from oracles import accuracy_permutations, ap_ranking, ari_pairs, auc_pairs, nmi_entropy, random_scored
from warga.evaluation import (
    ScoredEdges,
    UndefinedMetricError,
    aggregate,
    ari,
    auc,
    average_precision,
    clustering_accuracy,
    format_table,
    kmeans,
    nmi,
    score_edges,
)
from warga.linalg import make_rng, sigmoid
from warga.models import decode_logits


def scored(scores, labels):
    return ScoredEdges(np.zeros((len(scores), 2), np.int64), np.asarray(scores, float), labels)


# scoring

def test_score_edges_zero_embedding():
    s = score_edges(np.zeros((4, 3)), [[0, 1]], [[2, 3], [0, 3]])
    assert s.scores.tolist() == [0.5, 0.5, 0.5]
    assert s.labels.tolist() == [1, 0, 0]


def test_score_edges_orthogonal_vs_identical():
    z = np.array([[1.0, 0], [1.0, 0], [0, 1.0]])
    s = score_edges(z, [[0, 1]], [[0, 2]])
    assert s.scores[0] > s.scores[1]


def test_score_edges_agree_with_decoder():
    rng = make_rng(0)
    z = rng.standard_normal((8, 3))
    pos, neg = rng.integers(0, 8, (5, 2)), rng.integers(0, 8, (5, 2))
    s = score_edges(z, pos, neg)
    full = sigmoid(decode_logits(z))
    pairs = np.concatenate([pos, neg])
    assert np.array_equal(s.scores, full[pairs[:, 0], pairs[:, 1]])


# AUC / AP

def test_auc_small_cases():
    assert auc(scored([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0])) == 1.0
    assert auc(scored([0.3] * 5, [1, 0, 1, 0, 0])) == 0.5
    with pytest.raises(UndefinedMetricError):
        auc(scored([0.1, 0.2], [1, 1]))


@pytest.mark.parametrize("levels", [None, 4])
@pytest.mark.parametrize("seed", range(5))
def test_auc_matches_pairwise_oracle(seed, levels):
    rng = make_rng(seed)
    s = random_scored(rng, 10, 10, levels)
    oracle = auc_pairs(s.scores[s.labels == 1], s.scores[s.labels == 0])
    assert abs(auc(s) - oracle) <= 1e-12


def test_auc_invariant_under_monotone_maps():
    s = random_scored(make_rng(1), 12, 9)
    base = auc(s)
    for f in (sigmoid, lambda v: 3.0 * v - 7.0, np.exp):
        assert auc(scored(f(s.scores), s.labels)) == base


def test_ap_small_cases():
    assert average_precision(scored([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0])) == 1.0
    for n in (2, 5, 9):
        labels = [0] * (n - 1) + [1]
        assert average_precision(scored(np.linspace(1, 0, n), labels)) == pytest.approx(1 / n)
    with pytest.raises(UndefinedMetricError):
        average_precision(scored([0.1], [0]))


@pytest.mark.parametrize("levels", [None, 3])
@pytest.mark.parametrize("seed", range(5))
def test_ap_matches_ranking_oracle(seed, levels):
    s = random_scored(make_rng(seed), 8, 12, levels)
    assert abs(average_precision(s) - ap_ranking(s.scores.tolist(), s.labels.tolist())) <= 1e-12


def test_ap_ties_follow_input_order():
    assert average_precision(scored([0.5, 0.5], [1, 0])) == 1.0
    assert average_precision(scored([0.5, 0.5], [0, 1])) == 0.5


def _ap_all_positives_last(n_pos, n_neg):
    return sum(i / (n_neg + i) for i in range(1, n_pos + 1)) / n_pos


@pytest.mark.parametrize("seed", range(20))
def test_ap_lower_bound(seed):
    rng = make_rng(seed)
    n_pos, n_neg = int(rng.integers(1, 10)), int(rng.integers(1, 10))
    s = random_scored(rng, n_pos, n_neg)
    assert average_precision(s) >= _ap_all_positives_last(n_pos, n_neg) - 1e-12
    # with a single positive the worst case equals the prevalence
    assert _ap_all_positives_last(1, n_neg) == pytest.approx(1 / (1 + n_neg))


def test_ap_can_fall_below_prevalence():
    # two positives ranked below one negative: (1/2 + 2/3) / 2 < 2/3
    assert average_precision(scored([0.9, 0.5, 0.4], [0, 1, 1])) == pytest.approx(7 / 12)


def test_scored_edges_validation():
    with pytest.raises(ValueError):
        scored([np.nan], [1])
    with pytest.raises(ValueError):
        scored([0.1], [2])


# clustering metrics

def test_clustering_small_cases():
    truth = [0, 0, 1, 1, 2, 2]
    relabeled = [2, 2, 0, 0, 1, 1]
    assert clustering_accuracy(relabeled, truth) == 1.0
    assert nmi(relabeled, truth) == pytest.approx(1.0)
    assert ari(relabeled, truth) == pytest.approx(1.0)
    single = [0] * 6
    assert clustering_accuracy([0, 0, 0, 0], [0, 0, 1, 1]) == 0.5
    assert nmi(single, truth) == 0.0
    assert ari(single, truth) == 0.0
    with pytest.raises(ValueError):
        nmi([0, 1], [0, 1, 1])


def _random_partition(rng, n, k):
    return rng.integers(0, k, n)


@pytest.mark.parametrize("seed", range(10))
def test_clustering_metrics_match_oracles(seed):
    rng = make_rng(seed)
    n, k = int(rng.integers(2, 21)), int(rng.integers(1, 6))
    pred, truth = _random_partition(rng, n, k), _random_partition(rng, n, k)
    p, t = pred.tolist(), truth.tolist()
    assert abs(clustering_accuracy(pred, truth) - accuracy_permutations(p, t, k)) <= 1e-12
    assert abs(nmi(pred, truth) - nmi_entropy(p, t)) <= 1e-12
    assert abs(ari(pred, truth) - ari_pairs(p, t)) <= 1e-12


@pytest.mark.parametrize("seed", range(5))
def test_clustering_metrics_relabeling_invariant(seed):
    rng = make_rng(seed)
    pred, truth = _random_partition(rng, 20, 4), _random_partition(rng, 20, 4)
    pp, tp = rng.permutation(4), rng.permutation(4)
    for f in (clustering_accuracy, nmi, ari):
        assert f(pp[pred], tp[truth]) == pytest.approx(f(pred, truth), abs=1e-12)


# K-means

def test_kmeans_separated_clouds():
    rng = make_rng(0)
    x = np.concatenate([rng.normal(0, 0.1, (20, 2)), rng.normal(10, 0.1, (20, 2))])
    a = kmeans(x, 2, make_rng(1))
    truth = np.repeat([0, 1], 20)
    assert clustering_accuracy(a.labels, truth) == 1.0
    assert a.centroids.shape == (2, 2)


def test_kmeans_k_equals_n_zero_inertia():
    x = make_rng(2).standard_normal((7, 3))
    assert kmeans(x, 7, make_rng(3), restarts=2).inertia == 0.0


@pytest.mark.parametrize("seed", range(20))
def test_kmeans_inertia_non_increasing(seed):
    rng = make_rng(seed)
    x = rng.standard_normal((40, 3))
    a = kmeans(x, int(rng.integers(2, 6)), rng, restarts=1)
    assert all(b <= h + 1e-9 for h, b in zip(a.history, a.history[1:]))
    assert np.all((a.labels >= 0) & (a.labels < a.centroids.shape[0]))


def test_kmeans_handles_duplicate_points():
    x = np.zeros((6, 2))
    x[3:] = 1.0
    a = kmeans(x, 3, make_rng(0), restarts=3)
    assert a.inertia == 0.0


def test_kmeans_deterministic_and_validates_k():
    x = make_rng(4).standard_normal((15, 2))
    a, b = kmeans(x, 3, make_rng(9)), kmeans(x, 3, make_rng(9))
    assert np.array_equal(a.labels, b.labels)
    with pytest.raises(ValueError):
        kmeans(x, 16, make_rng(0))


# aggregation

def test_aggregate_cases():
    one = aggregate([{"auc": 0.93}])
    assert one.std["auc"] == 0.0 and one.mean["auc"] == 0.93
    two = aggregate([{"auc": 0.9}, {"auc": 1.1}])
    assert two.mean["auc"] == pytest.approx(1.0) and two.std["auc"] == pytest.approx(0.1)
    with pytest.raises(ValueError):
        aggregate([])


def test_aggregate_matches_streaming_pass():
    rng = make_rng(5)
    rows = [{"a": float(v), "b": float(w)} for v, w in rng.random((10, 2))]
    rep = aggregate(rows)
    for k in ("a", "b"):
        # Welford update as an independent second pass
        n, mean, m2 = 0, 0.0, 0.0
        for r in rows:
            n += 1
            d = r[k] - mean
            mean += d / n
            m2 += d * (r[k] - mean)
        assert rep.mean[k] == pytest.approx(mean, abs=1e-15)
        assert rep.std[k] == pytest.approx(np.sqrt(m2 / n), abs=1e-15)
    assert rep.to_dict()["per_seed"] == rows


def test_format_table():
    text = format_table({"WARGA": aggregate([{"auc": 0.926}, {"auc": 0.932}])}, ["auc"])
    assert "92.9 ± 0.003" in text
    assert text.splitlines()[0].startswith("Method")
