"""Synthetic implicit-feedback data with planted block structure.

Users and items are split into clusters; a user interacts with items of the
own cluster with probability ``p_in`` and with foreign items with
probability ``p_out``. With the default (1.0, 0.0) the blocks are exact, so
an ideal model retrieves held-out items perfectly, which makes these sets
usable as ground-truth oracles for end-to-end checks.
"""

import os

import numpy as np

from .data import InteractionDataset


def planted_clusters(n_users=20, n_items=20, n_clusters=2, seed=0,
                     p_in=1.0, p_out=0.0, n_noise_items=0, p_noise=0.05,
                     activity=(1.0, 1.0)):
    """Build a clustered dataset; returns (dataset, user_labels, item_labels).

    ``n_noise_items`` appends a popularity tail of items outside every
    cluster (label ``n_clusters``), each liked with probability ``p_noise``
    regardless of the user's cluster. ``activity`` scales each user's
    interaction probabilities by a uniform draw from the given range, which
    produces heterogeneous profile sizes.
    """
    if n_users % n_clusters or n_items % n_clusters:
        raise ValueError("cluster count must divide both entity counts")
    rng = np.random.default_rng(seed)
    user_labels = np.arange(n_users) * n_clusters // n_users
    item_labels = np.concatenate([np.arange(n_items) * n_clusters // n_items,
                                  np.full(n_noise_items, n_clusters)])
    n_total = n_items + n_noise_items
    act = rng.uniform(activity[0], activity[1], size=n_users)
    indptr = np.zeros(n_users + 1, dtype=np.int64)
    chunks = []
    for u in range(n_users):
        same = user_labels[u] == item_labels
        prob = np.where(same, p_in, p_out)
        prob[n_items:] = p_noise
        row = np.flatnonzero(rng.random(n_total) < prob * act[u])
        if len(row) == 0:  # keep every user trainable
            own = np.flatnonzero(same)
            row = own[rng.integers(0, len(own), size=1)]
        chunks.append(row.astype(np.int64))
        indptr[u + 1] = indptr[u] + len(row)
    ds = InteractionDataset(
        n_users=n_users, n_items=n_total, indptr=indptr,
        indices=np.concatenate(chunks),
        user_ids=[f"u{u}" for u in range(n_users)],
        item_ids=[f"i{i}" for i in range(n_total)],
    )
    return ds, user_labels, item_labels


def write_item_labels(dir_path, ds, item_labels):
    """Two-column label sidecar consumed by the margin case study."""
    os.makedirs(dir_path, exist_ok=True)
    with open(os.path.join(dir_path, "item_labels.txt"), "w") as f:
        for i, ext in enumerate(ds.item_ids):
            f.write(f"{ext}\t{item_labels[i]}\n")


def load_item_labels(dir_path, ds):
    path = os.path.join(dir_path, "item_labels.txt")
    by_ext = {}
    with open(path) as f:
        for line in f:
            if line.strip():
                ext, label = line.rstrip("\n").split("\t", 1)
                by_ext[ext] = label
    try:
        return [by_ext[ext] for ext in ds.item_ids]
    except KeyError as missing:
        raise ValueError(f"{path}: no label for item {missing}") from None
