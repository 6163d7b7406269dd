"""Top-K ranking evaluation: Recall@K and NDCG@K.

For every user, all items outside the training set are ordered by ascending
distance to the user (ties broken by ascending item index, so results are
bit-reproducible), and the held-out test items are scored against the top of
that ranking. Recall uses |T_i| as the denominator; NDCG uses binary gains
1/log2(rank+1).
"""

from dataclasses import dataclass, field

import numpy as np

from .distance import DistanceKind

DEFAULT_KS = (5, 10, 15, 20)


@dataclass
class EvalReport:
    ks: tuple
    recall: dict          # K -> mean over evaluated users
    ndcg: dict
    n_users: int          # users with a nonempty test set
    fold_index: int | None = None

    def row_lines(self):
        return [f"{self.fold_index if self.fold_index is not None else -1},"
                f"{k},{self.recall[k]!r},{self.ndcg[k]!r},{self.n_users}"
                for k in self.ks]


def pairwise_distances(users, items, kind, user_idx=None):
    """Distance matrix between (a subset of) users and all items."""
    mu_u = users.mu if user_idx is None else users.mu[user_idx]
    d2 = (
        np.sum(mu_u ** 2, axis=1)[:, None]
        + np.sum(items.mu ** 2, axis=1)[None, :]
        - 2.0 * mu_u @ items.mu.T
    )
    if kind is DistanceKind.W2_SQUARED:
        ru = np.sqrt(users.sigma if user_idx is None else users.sigma[user_idx])
        ri = np.sqrt(items.sigma)
        d2 += (
            np.sum(ru ** 2, axis=1)[:, None]
            + np.sum(ri ** 2, axis=1)[None, :]
            - 2.0 * ru @ ri.T
        )
    return np.maximum(d2, 0.0)  # clip the tiny negatives of the expanded form


def rank(user, users, items, train_set, kind, k=None):
    """Item indices outside ``train_set`` ordered by ascending distance.

    Ties break by ascending item index. Truncated to ``k`` when given.
    """
    d2 = pairwise_distances(users, items, kind, user_idx=np.array([user]))[0]
    d2[np.asarray(train_set, dtype=np.int64)] = np.inf
    order = np.argsort(d2, kind="stable")
    order = order[: items.n - len(train_set)]
    return order if k is None else order[:k]


def recall_at_k(topk, test_set):
    """|topk & T| / |T| for a nonempty test set."""
    test_set = np.asarray(test_set)
    if len(test_set) == 0:
        raise ValueError("recall needs a nonempty test set")
    hits = np.isin(topk, test_set).sum()
    return hits / len(test_set)


def ndcg_at_k(topk, test_set):
    """Binary-gain NDCG of the top-K list against a nonempty test set."""
    test_set = np.asarray(test_set)
    if len(test_set) == 0:
        raise ValueError("ndcg needs a nonempty test set")
    rel = np.isin(topk, test_set)
    positions = np.arange(1, len(topk) + 1)
    dcg = np.sum(rel / np.log2(positions + 1))
    ideal = min(len(topk), len(test_set))
    idcg = np.sum(1.0 / np.log2(np.arange(1, ideal + 1) + 1))
    return float(dcg / idcg)


def evaluate(users, items, fold, ks=DEFAULT_KS, kind=DistanceKind.W2_SQUARED,
             chunk=256):
    """Mean Recall@K / NDCG@K over users with a nonempty test set."""
    ks = tuple(ks)
    kmax = max(ks)
    recall_sums = {k: 0.0 for k in ks}
    ndcg_sums = {k: 0.0 for k in ks}
    n_eval = 0
    for start in range(0, users.n, chunk):
        idx = np.arange(start, min(start + chunk, users.n))
        d2 = pairwise_distances(users, items, kind, user_idx=idx)
        for local, u in enumerate(idx):
            test = fold.test_rows[u]
            if len(test) == 0:
                continue
            row = d2[local].copy()
            row[fold.train_rows[u]] = np.inf
            top = np.argsort(row, kind="stable")[:kmax]
            n_eval += 1
            rel = np.isin(top, test)
            for k in ks:
                rk = rel[:k]  # may be shorter than k on tiny catalogs
                recall_sums[k] += rk.sum() / len(test)
                positions = np.arange(1, len(rk) + 1)
                dcg = np.sum(rk / np.log2(positions + 1))
                ideal = min(k, len(test))
                idcg = np.sum(1.0 / np.log2(np.arange(1, ideal + 1) + 1))
                ndcg_sums[k] += dcg / idcg
    if n_eval == 0:
        raise ValueError("no user has test interactions")
    return EvalReport(
        ks=ks,
        recall={k: recall_sums[k] / n_eval for k in ks},
        ndcg={k: ndcg_sums[k] / n_eval for k in ks},
        n_users=n_eval,
        fold_index=fold.fold_index,
    )


def mean_report(reports):
    """Cross-fold mean of per-fold reports (all sharing one K grid)."""
    ks = reports[0].ks
    return EvalReport(
        ks=ks,
        recall={k: float(np.mean([r.recall[k] for r in reports])) for k in ks},
        ndcg={k: float(np.mean([r.ndcg[k] for r in reports])) for k in ks},
        n_users=int(np.sum([r.n_users for r in reports])),
        fold_index=None,
    )


def format_table(report, title=""):
    lines = []
    if title:
        lines.append(title)
    lines.append(f"{'K':>4}  {'Recall@K':>10}  {'NDCG@K':>10}   (users={report.n_users})")
    for k in report.ks:
        lines.append(f"{k:>4}  {report.recall[k]:>10.4f}  {report.ndcg[k]:>10.4f}")
    return "\n".join(lines)


def paired_t_test(scores_a, scores_b):
    """Paired t-test over per-seed (or per-fold) metric pairs.

    Returns (t statistic, two-sided p-value); used when comparing two model
    configurations run under matched seeds.
    """
    from scipy import stats
    scores_a, scores_b = np.asarray(scores_a), np.asarray(scores_b)
    if scores_a.shape != scores_b.shape or scores_a.size < 2:
        raise ValueError("need two equal-length score arrays with >= 2 entries")
    t, p = stats.ttest_rel(scores_a, scores_b)
    return float(t), float(p)


def write_report_csv(path, reports, header_lines=()):
    with open(path, "w") as f:
        for line in header_lines:
            f.write(f"# {line}\n")
        f.write("fold,K,recall,ndcg,n_users\n")
        for r in reports:
            for line in r.row_lines():
                f.write(line + "\n")
