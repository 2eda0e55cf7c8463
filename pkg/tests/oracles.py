"""Slow, obviously-correct reference implementations of the ranking metrics."""
import math


def auc_pairwise(scores, labels):
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            total += 1.0 if p > n else 0.5 if p == n else 0.0
    return total / (len(pos) * len(neg))


def aupr_step(scores, labels):
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    n_pos = sum(labels)
    tp = 0
    prev_recall = 0.0
    area = 0.0
    for rank, i in enumerate(order, start=1):
        tp += labels[i]
        recall = tp / n_pos
        area += (recall - prev_recall) * (tp / rank)
        prev_recall = recall
    return area


def f1_enumerate(scores, labels):
    distinct = sorted(set(scores))
    thresholds = [-math.inf] + [(a + b) / 2 for a, b in zip(distinct, distinct[1:])] + [math.inf]
    best, best_t = -1.0, None
    for t in thresholds:
        tp = sum(1 for s, l in zip(scores, labels) if s > t and l == 1)
        fp = sum(1 for s, l in zip(scores, labels) if s > t and l == 0)
        fn = sum(1 for s, l in zip(scores, labels) if s <= t and l == 1)
        f1 = 2 * tp / (2 * tp + fp + fn) if tp else 0.0
        if f1 > best:
            best, best_t = f1, t
    return best, best_t


def random_instance(rng, max_len=50):
    n = int(rng.integers(2, max_len + 1))
    labels = [0] * n
    labels[0], labels[1] = 1, 0
    for i in range(2, n):
        labels[i] = int(rng.random() < 0.4)
    rng.shuffle(labels)
    # coarse grid so ties are common
    if rng.random() < 0.5:
        scores = [float(x) for x in rng.integers(0, 5, size=n) / 4]
    else:
        scores = [float(x) for x in rng.normal(size=n)]
    return scores, labels
