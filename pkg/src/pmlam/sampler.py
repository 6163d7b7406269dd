"""Triplet construction with two-phase negative sampling.

Negatives are drawn from per-anchor candidate pools rather than the full
catalog: every ``refresh_period`` epochs a pool of ``pool_size`` candidates is
resampled uniformly (without replacement) from the complement of the anchor's
positive/neighbor set, and within the period negatives come from the pool
(with replacement across batch rows).
"""

from dataclasses import dataclass, field

import numpy as np

from .losses import TripletBatch


@dataclass
class CandidatePool:
    """Per-anchor negative candidates in a flat CSR-style layout."""

    flat: np.ndarray      # concatenated candidate ids
    offsets: np.ndarray   # (n_anchors + 1,)
    epoch_of_build: int
    exclusions: list = field(repr=False, default=None)  # kept for debug validation

    @property
    def n_anchors(self):
        return len(self.offsets) - 1

    def candidates(self, anchor):
        return self.flat[self.offsets[anchor]:self.offsets[anchor + 1]]


def refresh_pool(exclusions, n_universe, pool_size, rng, epoch=0):
    """Sample a fresh candidate pool for every anchor.

    ``exclusions`` is a list of sorted index arrays (the anchor's positive or
    neighbor set, self included for same-entity relations). Each pool draws
    min(pool_size, complement size) ids uniformly without replacement; an
    anchor whose exclusion covers the whole universe gets an empty pool.
    """
    universe = np.arange(n_universe)
    chunks = []
    offsets = np.zeros(len(exclusions) + 1, dtype=np.int64)
    for a, excl in enumerate(exclusions):
        complement = np.setdiff1d(universe, excl, assume_unique=False)
        if len(complement) > pool_size:
            complement = rng.choice(complement, size=pool_size, replace=False)
        chunks.append(complement)
        offsets[a + 1] = offsets[a] + len(complement)
    flat = np.concatenate(chunks) if chunks else np.empty(0, dtype=np.int64)
    return CandidatePool(flat=flat.astype(np.int64), offsets=offsets,
                         epoch_of_build=epoch, exclusions=exclusions)


def sample_triplets(relation, anchors, positives, pool, neg_samples, rng,
                    validate=False):
    """Expand (anchor, positive) pairs into a TripletBatch.

    Each pair contributes ``neg_samples`` rows, negatives drawn uniformly
    from the anchor's pool (with replacement at the batch level). Pairs whose
    anchor has an empty pool are dropped.
    """
    anchors = np.asarray(anchors, dtype=np.int64)
    positives = np.asarray(positives, dtype=np.int64)
    lens = pool.offsets[anchors + 1] - pool.offsets[anchors]
    keep = lens > 0
    if not np.all(keep):
        anchors, positives, lens = anchors[keep], positives[keep], lens[keep]
    rep_a = np.repeat(anchors, neg_samples)
    rep_p = np.repeat(positives, neg_samples)
    rep_len = np.repeat(lens, neg_samples)
    draw = np.floor(rng.random(len(rep_a)) * rep_len).astype(np.int64)
    negs = pool.flat[pool.offsets[rep_a] + draw]
    batch = TripletBatch(relation=relation, anchors=rep_a, positives=rep_p,
                         negatives=negs)
    if validate:
        _validate_membership(batch, pool)
    return batch


def _validate_membership(batch, pool):
    for a, p, n in zip(batch.anchors, batch.positives, batch.negatives):
        excl = pool.exclusions[a]  # sorted: the anchor's positive/neighbor set
        j = np.searchsorted(excl, n)
        if j < len(excl) and excl[j] == n:
            raise AssertionError(f"negative {n} inside exclusion set of anchor {a}")
        i = np.searchsorted(excl, p)
        if i >= len(excl) or excl[i] != p:
            raise AssertionError(f"positive {p} outside positive set of anchor {a}")


def pairs_from_rows(rows):
    """Flatten per-anchor positive lists into (anchors, positives) arrays."""
    anchors = np.concatenate([np.full(len(r), a, dtype=np.int64)
                              for a, r in enumerate(rows)]) if rows else np.empty(0, np.int64)
    positives = np.concatenate(rows) if rows else np.empty(0, np.int64)
    return anchors, positives.astype(np.int64)
