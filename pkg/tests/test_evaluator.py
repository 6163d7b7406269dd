import numpy as np
import pytest

from pmlam.data import FoldSplit
from pmlam.distance import DistanceKind, w2_squared
from pmlam.embeddings import GaussianEmbeddingTable
from pmlam.evaluator import (evaluate, format_table, mean_report, ndcg_at_k,
                             pairwise_distances, rank, recall_at_k,
                             write_report_csv)

from helpers import random_table

W2 = DistanceKind.W2_SQUARED


def brute_force_metrics(users, items, fold, k, kind):
    """Independent per-user scorer built on the scalar distance kernel."""
    recalls, ndcgs = [], []
    for u in range(users.n):
        test = fold.test_rows[u]
        if len(test) == 0:
            continue
        scored = []
        for i in range(items.n):
            if i in fold.train_rows[u]:
                continue
            if kind is W2:
                d = w2_squared(users.mu[u], users.sigma[u], items.mu[i], items.sigma[i])
            else:
                d = float(np.sum((users.mu[u] - items.mu[i]) ** 2))
            scored.append((d, i))
        scored.sort()
        top = [i for _, i in scored[:k]]
        hits = [i for i in top if i in test]
        recalls.append(len(hits) / len(test))
        dcg = sum(1.0 / np.log2(pos + 2) for pos, i in enumerate(top) if i in test)
        idcg = sum(1.0 / np.log2(p + 2) for p in range(min(k, len(test))))
        ndcgs.append(dcg / idcg)
    return float(np.mean(recalls)), float(np.mean(ndcgs))


def fold_from(train_rows, test_rows):
    return FoldSplit(fold_index=0, rng_seed=0, train_rows=train_rows,
                     test_rows=test_rows)


def test_rank_identical_item_comes_first():
    rng = np.random.default_rng(0)
    users = random_table(1, 3, rng)
    items = random_table(4, 3, rng)
    items.mu[2] = users.mu[0]
    items.sigma[2] = users.sigma[0]
    order = rank(0, users, items, train_set=np.array([], dtype=int), kind=W2)
    assert order[0] == 2


def test_rank_excludes_training_items():
    rng = np.random.default_rng(1)
    users, items = random_table(1, 2, rng), random_table(6, 2, rng)
    order = rank(0, users, items, train_set=np.array([1, 4]), kind=W2)
    assert len(order) == 4
    assert not set(order) & {1, 4}


def test_rank_hand_computed_order():
    users = GaussianEmbeddingTable(np.array([[1.0, 0.0]]), np.array([[0.25, 0.25]]))
    items = GaussianEmbeddingTable(
        np.array([[1.0, 1.0], [0.0, 1.0], [-1.0, -1.0]]),
        np.array([[2.25, 2.25], [1.0, 1.0], [4.0, 0.25]]))
    d = [w2_squared(users.mu[0], users.sigma[0], items.mu[i], items.sigma[i])
         for i in range(3)]
    # mean term + sqrt-variance term per item: 1+2, 2+0.5, 5+2.25
    assert d[0] == pytest.approx(3.0, abs=1e-15)
    assert d[1] == pytest.approx(2.5, abs=1e-15)
    assert d[2] == pytest.approx(7.25, abs=1e-15)
    order = rank(0, users, items, np.array([], dtype=int), W2)
    np.testing.assert_array_equal(order, [1, 0, 2])


def test_rank_ties_break_by_item_index():
    users = GaussianEmbeddingTable(np.zeros((1, 2)), np.full((1, 2), 0.5))
    items = GaussianEmbeddingTable(np.zeros((3, 2)), np.full((3, 2), 0.5))
    order = rank(0, users, items, np.array([], dtype=int), W2)
    np.testing.assert_array_equal(order, [0, 1, 2])


def test_recall_cases():
    assert recall_at_k(np.array([1, 2, 3]), np.array([1, 9])) == 0.5
    assert recall_at_k(np.array([1, 9, 3]), np.array([1, 9])) == 1.0
    assert recall_at_k(np.array([4, 5]), np.array([1, 9])) == 0.0
    with pytest.raises(ValueError):
        recall_at_k(np.array([1]), np.array([]))


def test_ndcg_cases():
    assert ndcg_at_k(np.array([7, 3]), np.array([7])) == 1.0
    assert ndcg_at_k(np.array([3, 7]), np.array([7])) == pytest.approx(1 / np.log2(3))
    assert ndcg_at_k(np.array([3, 4]), np.array([7])) == 0.0


def test_evaluate_matches_brute_force_scorer():
    rng = np.random.default_rng(7)
    users = random_table(10, 4, rng)
    items = random_table(30, 4, rng)
    train_rows, test_rows = [], []
    for u in range(10):
        d = np.sort(rng.choice(30, size=10, replace=False))
        train_rows.append(d[:7])
        test_rows.append(d[7:])
    fold = fold_from(train_rows, test_rows)
    for kind in (W2, DistanceKind.EUCLIDEAN_SQUARED):
        report = evaluate(users, items, fold, ks=(5, 10), kind=kind)
        for k in (5, 10):
            r, n = brute_force_metrics(users, items, fold, k, kind)
            assert report.recall[k] == pytest.approx(r, abs=1e-12)
            assert report.ndcg[k] == pytest.approx(n, abs=1e-12)


def test_evaluate_skips_users_without_test_items():
    rng = np.random.default_rng(8)
    users, items = random_table(3, 2, rng), random_table(8, 2, rng)
    fold = fold_from([np.array([0]), np.array([1]), np.array([2])],
                     [np.array([3]), np.array([], dtype=int), np.array([4])])
    report = evaluate(users, items, fold, ks=(5,), kind=W2)
    assert report.n_users == 2


def test_recall_monotone_and_ndcg_bounded():
    rng = np.random.default_rng(9)
    users, items = random_table(12, 3, rng), random_table(40, 3, rng)
    train_rows = [np.sort(rng.choice(40, 5, replace=False)) for _ in range(12)]
    test_rows = [np.sort(np.setdiff1d(rng.choice(40, 9, replace=False),
                                      train_rows[u])) for u in range(12)]
    fold = fold_from(train_rows, test_rows)
    report = evaluate(users, items, fold, ks=(5, 10, 15, 20), kind=W2)
    rs = [report.recall[k] for k in (5, 10, 15, 20)]
    assert all(b >= a for a, b in zip(rs, rs[1:]))
    assert all(0.0 <= report.ndcg[k] <= 1.0 for k in report.ks)


def test_squared_and_unsquared_distances_rank_identically():
    rng = np.random.default_rng(10)
    users, items = random_table(1, 5, rng), random_table(50, 5, rng)
    d2 = pairwise_distances(users, items, W2)[0]
    np.testing.assert_array_equal(np.argsort(d2, kind="stable"),
                                  np.argsort(np.sqrt(d2), kind="stable"))


def test_evaluate_is_reproducible():
    rng = np.random.default_rng(11)
    users, items = random_table(6, 3, rng), random_table(20, 3, rng)
    fold = fold_from([np.array([0, 1])] * 6, [np.array([2, 3])] * 6)
    a = evaluate(users, items, fold, ks=(5,), kind=W2)
    b = evaluate(users, items, fold, ks=(5,), kind=W2)
    assert a.recall == b.recall and a.ndcg == b.ndcg


def test_perfect_model_on_planted_blocks():
    # items of the user's block sit exactly on the user: distance 0
    h = 4
    mu = np.zeros((4, h))
    mu[:2, 0] = 0.5
    mu[2:, 1] = 0.5
    users = GaussianEmbeddingTable(mu[:2].repeat(2, 0)[:2], np.full((2, h), 0.1))
    users.mu[:] = [[0.5] + [0.0] * (h - 1), [0.0, 0.5] + [0.0] * (h - 2)]
    items = GaussianEmbeddingTable(
        np.array([[0.5] + [0.0] * (h - 1)] * 2 + [[0.0, 0.5] + [0.0] * (h - 2)] * 2),
        np.full((4, h), 0.1))
    fold = fold_from([np.array([0]), np.array([2])],
                     [np.array([1]), np.array([3])])
    report = evaluate(users, items, fold, ks=(1, 5), kind=W2)
    assert report.recall[1] == 1.0 and report.recall[5] == 1.0


def test_paired_t_test():
    from pmlam.evaluator import paired_t_test
    a = [0.52, 0.55, 0.50, 0.58, 0.53]
    b = [0.41, 0.44, 0.42, 0.45, 0.40]
    t, p = paired_t_test(a, b)
    assert t > 0 and p < 0.01
    _, p_same = paired_t_test(a, a[::-1])
    assert p_same > 0.5
    with pytest.raises(ValueError):
        paired_t_test([0.5], [0.4])


def test_report_csv_and_table(tmp_path):
    rng = np.random.default_rng(12)
    users, items = random_table(4, 2, rng), random_table(10, 2, rng)
    fold = fold_from([np.array([0])] * 4, [np.array([1])] * 4)
    r = evaluate(users, items, fold, ks=(5, 10), kind=W2)
    out = tmp_path / "report.csv"
    write_report_csv(out, [r], header_lines=["seed = 0"])
    text = out.read_text()
    assert text.startswith("# seed = 0\nfold,K,recall,ndcg,n_users\n")
    assert len(text.strip().split("\n")) == 4
    table = format_table(r, title="check")
    assert "Recall@K" in table and "check" in table
    merged = mean_report([r, r])
    assert merged.recall[5] == r.recall[5]
    assert merged.n_users == 2 * r.n_users
