"""Score combination, ranking, detection metrics, and report emission.

The three channels produce reconstruction errors on incomparable scales
(attribute dimensions vs adjacency rows vs curvature range), so each channel
is min-max normalized to [0, 1] before the weighted combination. A channel
that is constant across all nodes carries no ranking information and
normalizes to zeros.
"""

from __future__ import annotations

import json

import numpy as np
from scipy import stats


def minmax_normalize(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    lo, hi = v.min(), v.max()
    if hi == lo:
        return np.zeros_like(v)
    return (v - lo) / (hi - lo)


def combine_scores(attr: np.ndarray, struct: np.ndarray, mix: np.ndarray,
                   lambdas) -> np.ndarray:
    """Weighted sum of the min-max normalized channel scores."""
    lam = np.asarray(lambdas, dtype=np.float64)
    if lam.shape != (3,):
        raise ValueError(f"lambdas must be three weights, got shape {lam.shape}")
    if (lam < 0.0).any():
        raise ValueError(f"lambdas must be nonnegative, got {lam.tolist()}")
    if lam.sum() == 0.0:
        raise ValueError("at least one lambda must be positive")
    channels = [np.asarray(c, dtype=np.float64) for c in (attr, struct, mix)]
    n = channels[0].shape[0]
    for c in channels:
        if c.shape != (n,):
            raise ValueError("channel score vectors must share one length")
    return sum(w * minmax_normalize(c) for w, c in zip(lam, channels))


def rank_nodes(combined: np.ndarray) -> np.ndarray:
    """Dense ranking 1..n, rank 1 = highest score; ties broken by node id."""
    order = np.argsort(-np.asarray(combined, dtype=np.float64), kind="stable")
    ranks = np.empty(order.size, dtype=np.int64)
    ranks[order] = np.arange(1, order.size + 1)
    return ranks


def _binary_labels(labels) -> np.ndarray:
    arr = np.asarray(labels)
    return (arr != 0).astype(np.int64)


def auc_roc(scores: np.ndarray, labels) -> float:
    """Mann-Whitney AUC: probability a random anomaly outscores a random
    normal node, ties counted half."""
    y = _binary_labels(labels)
    s = np.asarray(scores, dtype=np.float64)
    if s.shape != y.shape:
        raise ValueError(f"shape mismatch: {s.shape} vs {y.shape}")
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("auc_roc needs both classes present")
    ranks = stats.rankdata(s)  # average midranks for ties
    pos_rank_sum = ranks[y == 1].sum()
    return float((pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def auc_pr(scores: np.ndarray, labels) -> float:
    """Average precision over descending scores, with tied scores processed
    as one block (every positive in a block gets the block-end precision)."""
    y = _binary_labels(labels)
    s = np.asarray(scores, dtype=np.float64)
    if s.shape != y.shape:
        raise ValueError(f"shape mismatch: {s.shape} vs {y.shape}")
    n_pos = int(y.sum())
    if n_pos == 0:
        raise ValueError("auc_pr needs at least one positive")
    order = np.argsort(-s, kind="stable")
    s_sorted, y_sorted = s[order], y[order]
    total = 0.0
    seen = 0       # nodes consumed so far
    tp = 0         # positives among them
    i = 0
    n = s.size
    while i < n:
        j = i
        while j < n and s_sorted[j] == s_sorted[i]:
            j += 1
        block_pos = int(y_sorted[i:j].sum())
        seen = j
        tp += block_pos
        total += block_pos * (tp / seen)
        i = j
    return float(total / n_pos)


def macro_f1(scores: np.ndarray, labels, k: int) -> float:
    """Macro F1 over {anomaly, normal} with the top-k scores predicted
    anomalous (k = known contamination); score ties broken by node id."""
    y = _binary_labels(labels)
    s = np.asarray(scores, dtype=np.float64)
    if s.shape != y.shape:
        raise ValueError(f"shape mismatch: {s.shape} vs {y.shape}")
    n = s.size
    if k <= 0 or k >= n:
        raise ValueError(f"k must satisfy 0 < k < n, got k={k}, n={n}")
    pred = np.zeros(n, dtype=np.int64)
    pred[np.argsort(-s, kind="stable")[:k]] = 1

    def f1(cls: int) -> float:
        tp = int(((pred == cls) & (y == cls)).sum())
        fp = int(((pred == cls) & (y != cls)).sum())
        fn = int(((pred != cls) & (y == cls)).sum())
        denom = 2 * tp + fp + fn
        return 2.0 * tp / denom if denom else 0.0

    return (f1(1) + f1(0)) / 2.0


# ---------------------------------------------------------------------------
# reports and file emission
# ---------------------------------------------------------------------------

def anomaly_report(channel_scores: np.ndarray, lambdas, labels=None,
                   k: int | None = None, seed: int = 0,
                   config_digest: str = "") -> dict:
    """Full per-node report plus metrics (metrics only when labels given).

    channel_scores is the (n, 3) matrix (attribute, structure, mixture);
    k defaults to the true anomaly count.
    """
    channel_scores = np.asarray(channel_scores, dtype=np.float64)
    if channel_scores.ndim != 2 or channel_scores.shape[1] != 3:
        raise ValueError(
            f"channel_scores must be (n, 3), got {channel_scores.shape}")
    combined = combine_scores(channel_scores[:, 0], channel_scores[:, 1],
                              channel_scores[:, 2], lambdas)
    ranks = rank_nodes(combined)
    n = combined.size
    label_arr = None if labels is None else np.asarray(labels, dtype=np.int64)

    metrics = None
    if label_arr is not None:
        binary = _binary_labels(label_arr)
        if k is None:
            k = int(binary.sum())
        metrics = {
            "auc_roc": auc_roc(combined, binary),
            "auc_pr": auc_pr(combined, binary),
            "macro_f1": macro_f1(combined, binary, k),
        }
    nodes = []
    for i in range(n):
        nodes.append({
            "id": i,
            "as_attr": float(channel_scores[i, 0]),
            "as_str": float(channel_scores[i, 1]),
            "as_mix": float(channel_scores[i, 2]),
            "as_combined": float(combined[i]),
            "rank": int(ranks[i]),
            "label": int(label_arr[i]) if label_arr is not None else -1,
        })
    return {
        "metadata": {
            "n": n,
            "seed": int(seed),
            "config_hash": config_digest,
            "lambdas": [float(x) for x in np.asarray(lambdas)],
        },
        "metrics": metrics,
        "nodes": nodes,
    }


def write_report(path, report: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, sort_keys=True, indent=2)
        fh.write("\n")


SCORES_HEADER = "id,as_attr,as_str,as_mix,as_combined,rank,label"


def write_scores_csv(path, channel_scores: np.ndarray, combined: np.ndarray,
                     ranks: np.ndarray, labels=None) -> None:
    """One row per node; label column is -1 when no labels are available."""
    channel_scores = np.asarray(channel_scores, dtype=np.float64)
    n = channel_scores.shape[0]
    label_arr = np.full(n, -1, dtype=np.int64) if labels is None \
        else np.asarray(labels, dtype=np.int64)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(SCORES_HEADER + "\n")
        for i in range(n):
            cells = [repr(float(channel_scores[i, col])) for col in range(3)]
            fh.write(f"{i},{cells[0]},{cells[1]},{cells[2]},"
                     f"{float(combined[i])!r},"
                     f"{int(ranks[i])},{int(label_arr[i])}\n")


def read_scores_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray,
                                   np.ndarray | None]:
    """Inverse of write_scores_csv: (channel_scores, combined, ranks, labels);
    labels is None when the column is all -1."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != SCORES_HEADER:
            raise ValueError(f"{path}: unexpected header {header!r}")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    n = len(rows)
    channel_scores = np.empty((n, 3))
    combined = np.empty(n)
    ranks = np.empty(n, dtype=np.int64)
    labels = np.empty(n, dtype=np.int64)
    for row in rows:
        if len(row) != 7:
            raise ValueError(f"{path}: malformed row {row!r}")
        i = int(row[0])
        channel_scores[i] = [float(row[1]), float(row[2]), float(row[3])]
        combined[i] = float(row[4])
        ranks[i] = int(row[5])
        labels[i] = int(row[6])
    return channel_scores, combined, ranks, \
        (None if (labels == -1).all() else labels)


HISTOGRAM_HEADER = "bin_lo,bin_hi,count_nn,count_na"


def write_histogram_csv(path, hist: dict) -> None:
    """Curvature histogram rows (the aa counts stay in the JSON companion;
    normal-normal vs normal-abnormal is the comparison of interest)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(HISTOGRAM_HEADER + "\n")
        for lo, hi, nn, na in zip(hist["bin_lo"], hist["bin_hi"],
                                  hist["count_nn"], hist["count_na"]):
            fh.write(f"{float(lo)!r},{float(hi)!r},{int(nn)},{int(na)}\n")
