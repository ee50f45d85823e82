"""Downstream evaluation: PCA, linear regression with R-squared, repeated
split evaluation, k-means, cosine similarity ranking, and the category
tf-idf baseline.

Everything here is a pure function of its inputs and a seed; repeated splits
derive their generator from seed + repeat index.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

log = logging.getLogger(__name__)

RIDGE_LAMBDA = 1e-8  # Tikhonov term keeping the normal equations conditioned


@dataclass
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # (n_components, d), orthonormal rows
    explained_variance_ratio: np.ndarray

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) @ self.components.T

    def inverse_transform(self, P: np.ndarray) -> np.ndarray:
        return P @ self.components + self.mean


def pca_fit(matrix: np.ndarray, n_components: int) -> PcaModel:
    """Principal components of the mean-centered matrix, ordered by descending
    explained variance; the largest-magnitude entry of each component is made
    positive so fits are reproducible."""
    X = np.asarray(matrix, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValidationError(f"PCA needs an (N>=2, d) matrix, got {X.shape}")
    n, d = X.shape
    if not 1 <= n_components <= min(n, d):
        raise ValidationError(f"n_components {n_components} outside [1, {min(n, d)}]")
    mean = X.mean(axis=0)
    centered = X - mean
    if not centered.any():
        raise ValidationError("degenerate input: all rows identical")
    _, svals, vt = np.linalg.svd(centered, full_matrices=False)
    var = svals ** 2
    ratios = var / var.sum()
    comps = vt[:n_components].copy()
    for row in comps:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    return PcaModel(mean=mean, components=comps,
                    explained_variance_ratio=ratios[:n_components].copy())


def linreg_fit(features: np.ndarray, targets: np.ndarray) -> tuple[np.ndarray, float]:
    """Least squares via normal equations with a tiny Tikhonov term; the
    intercept is handled by centering. Returns (weights, intercept)."""
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise ValidationError("non-finite regression inputs")
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise ValidationError(f"incompatible regression shapes {X.shape} vs {y.shape}")
    x_mean = X.mean(axis=0)
    y_mean = y.mean()
    Xc = X - x_mean
    yc = y - y_mean
    gram = Xc.T @ Xc + RIDGE_LAMBDA * np.eye(X.shape[1])
    weights = np.linalg.solve(gram, Xc.T @ yc)
    intercept = y_mean - float(x_mean @ weights)
    return weights, intercept


def linreg_predict(weights: np.ndarray, intercept: float, features: np.ndarray) -> np.ndarray:
    return np.asarray(features, dtype=np.float64) @ weights + intercept


def r_squared(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    y_true = np.asarray(y_true, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    if y_true.shape != y_pred.shape or y_true.ndim != 1 or y_true.shape[0] < 2:
        raise ValidationError(f"r_squared needs two equal-length vectors of >= 2, got {y_true.shape}, {y_pred.shape}")
    ss_tot = float(((y_true - y_true.mean()) ** 2).sum())
    if ss_tot == 0.0:
        raise ValidationError("R^2 undefined: y_true is constant")
    ss_res = float(((y_true - y_pred) ** 2).sum())
    return 1.0 - ss_res / ss_tot


@dataclass
class SplitProtocol:
    train_fraction: float = 0.70
    val_fraction: float = 0.15
    repeats: int = 20
    pca_candidates: list[int] = field(default_factory=list)  # empty -> auto
    seed: int = 0


@dataclass
class RegressionReport:
    target_names: list[str]
    mean_r2: np.ndarray  # per target
    std_r2: np.ndarray
    per_repeat_r2: np.ndarray  # (repeats, targets)
    chosen_components: np.ndarray  # (repeats, targets)
    protocol: SplitProtocol

    @property
    def overall_mean(self) -> float:
        return float(self.mean_r2.mean())

    def to_csv_rows(self) -> list[list]:
        rows = [["target", "mean_r2", "std_r2", "repeats"]]
        for i, name in enumerate(self.target_names):
            rows.append([name, repr(float(self.mean_r2[i])), repr(float(self.std_r2[i])),
                         self.protocol.repeats])
        rows.append(["__overall__", repr(self.overall_mean),
                     repr(float(self.mean_r2.std())), self.protocol.repeats])
        return rows

    def format_text(self) -> str:
        lines = [f"test R^2 over {self.protocol.repeats} splits "
                 f"(train {self.protocol.train_fraction:.2f} / val {self.protocol.val_fraction:.2f})"]
        for i, name in enumerate(self.target_names):
            lines.append(f"  {name}: mean {self.mean_r2[i]:.4f}  std {self.std_r2[i]:.4f}")
        lines.append(f"  overall mean: {self.overall_mean:.4f}")
        return "\n".join(lines)


def default_pca_candidates(dim: int, n_train: int) -> list[int]:
    cap = min(dim, n_train - 1) if n_train > 1 else 1
    cands = []
    c = 2
    while c < cap:
        cands.append(c)
        c *= 2
    cands.append(max(1, cap))
    return sorted(set(cands))


def regression_split_eval(Z: np.ndarray, y: np.ndarray, train_idx: np.ndarray,
                          val_idx: np.ndarray, test_idx: np.ndarray,
                          candidates: list[int]) -> tuple[float, int, PcaModel]:
    """PCA is fit on the training rows only; the candidate component count is
    chosen by validation R^2 (ties to the smaller count), and the resulting
    model is scored on the test rows."""
    max_c = max(candidates)
    pca = pca_fit(Z[train_idx], max_c)
    p_train = pca.transform(Z[train_idx])
    p_val = pca.transform(Z[val_idx])
    best = None
    for c in sorted(candidates):
        w, b = linreg_fit(p_train[:, :c], y[train_idx])
        try:
            score = r_squared(y[val_idx], linreg_predict(w, b, p_val[:, :c]))
        except ValidationError:
            score = -np.inf  # constant validation target: no signal to rank by
        if best is None or score > best[0]:
            best = (score, c, w, b)
    _, c, w, b = best
    p_test = pca.transform(Z[test_idx])
    test_r2 = r_squared(y[test_idx], linreg_predict(w, b, p_test[:, :c]))
    return test_r2, c, pca


def evaluate_regression(Z: np.ndarray, targets: np.ndarray, target_names: list[str],
                        protocol: SplitProtocol) -> RegressionReport:
    """Repeated seeded 70/15/15 splits; per repeat and target, fit PCA+LR on
    the training split, pick the component count on validation R^2, and
    report test R^2 aggregated over repeats."""
    Z = np.asarray(Z, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if targets.ndim == 1:
        targets = targets[:, None]
    if Z.shape[0] != targets.shape[0]:
        raise ValidationError(f"{Z.shape[0]} embedding rows but {targets.shape[0]} target rows")
    if targets.shape[1] != len(target_names):
        raise ValidationError(f"{targets.shape[1]} target columns but {len(target_names)} names")
    n = Z.shape[0]
    n_train = int(math.floor(protocol.train_fraction * n))
    n_val = int(math.floor(protocol.val_fraction * n))
    n_test = n - n_train - n_val
    if n_train < 2 or n_val < 1 or n_test < 2:
        raise ValidationError(f"too few rows ({n}) for a {protocol.train_fraction}/{protocol.val_fraction} split")
    candidates = protocol.pca_candidates or default_pca_candidates(Z.shape[1], n_train)
    candidates = sorted({c for c in candidates if 1 <= c <= min(n_train, Z.shape[1])})
    if not candidates:
        raise ValidationError("no usable PCA component candidates")

    per_repeat = np.empty((protocol.repeats, targets.shape[1]))
    chosen = np.empty((protocol.repeats, targets.shape[1]), dtype=np.int64)
    for rep in range(protocol.repeats):
        rng = np.random.default_rng(protocol.seed + rep)
        perm = rng.permutation(n)
        train_idx = perm[:n_train]
        val_idx = perm[n_train:n_train + n_val]
        test_idx = perm[n_train + n_val:]
        for t in range(targets.shape[1]):
            r2, c, _ = regression_split_eval(Z, targets[:, t], train_idx, val_idx, test_idx, candidates)
            per_repeat[rep, t] = r2
            chosen[rep, t] = c
    return RegressionReport(
        target_names=list(target_names),
        mean_r2=per_repeat.mean(axis=0),
        std_r2=per_repeat.std(axis=0),
        per_repeat_r2=per_repeat,
        chosen_components=chosen,
        protocol=protocol,
    )


def kmeans(Z: np.ndarray, k: int, seed: int, max_iter: int = 300,
           inertia_out: list | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd's algorithm with k-means++ seeding. Deterministic per seed; an
    empty cluster is re-seeded with the point farthest from its centroid.
    Pass ``inertia_out`` to collect the per-iteration inertia trace."""
    Z = np.asarray(Z, dtype=np.float64)
    n = Z.shape[0]
    if not 1 <= k <= n:
        raise ValidationError(f"k={k} outside [1, {n}]")
    rng = np.random.default_rng(seed)

    centroids = np.empty((k, Z.shape[1]))
    centroids[0] = Z[rng.integers(n)]
    d2 = ((Z - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total > 0.0:
            pick = rng.choice(n, p=d2 / total)
        else:
            pick = rng.integers(n)
        centroids[j] = Z[pick]
        d2 = np.minimum(d2, ((Z - centroids[j]) ** 2).sum(axis=1))

    labels = np.full(n, -1, dtype=np.int64)
    for _ in range(max_iter):
        dist2 = ((Z[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_labels = dist2.argmin(axis=1)
        point_cost = dist2[np.arange(n), new_labels]
        for j in range(k):
            if not (new_labels == j).any():
                # Re-seed with the farthest point whose cluster keeps >= 1 member.
                sizes = np.bincount(new_labels, minlength=k)
                eligible = np.flatnonzero(sizes[new_labels] > 1)
                far = int(eligible[point_cost[eligible].argmax()])
                new_labels[far] = j
                centroids[j] = Z[far]
                point_cost[far] = 0.0
        if inertia_out is not None:
            inertia_out.append(float(point_cost.sum()))
        if (new_labels == labels).all():
            break
        labels = new_labels
        for j in range(k):
            centroids[j] = Z[labels == j].mean(axis=0)
    return labels, centroids


def cosine_rank(query: np.ndarray, candidate_ids: list, candidates: np.ndarray,
                top_n: int | None = None, ascending: bool = False) -> list[tuple]:
    """(id, cosine) pairs ranked by similarity to the query, ties broken by
    ascending id; ``ascending`` flips to least-similar-first. Zero-norm
    candidates are skipped with a warning."""
    query = np.asarray(query, dtype=np.float64)
    candidates = np.asarray(candidates, dtype=np.float64)
    if candidates.shape[0] != len(candidate_ids):
        raise ValidationError(f"{candidates.shape[0]} candidate rows but {len(candidate_ids)} ids")
    qnorm = float(np.linalg.norm(query))
    if qnorm == 0.0:
        raise ValidationError("zero-norm query vector")
    norms = np.linalg.norm(candidates, axis=1)
    keep = norms > 0.0
    if not keep.all():
        skipped = [candidate_ids[i] for i in np.flatnonzero(~keep)]
        log.warning("skipping zero-norm candidates: %s", skipped)
    sims = (candidates[keep] @ query) / (norms[keep] * qnorm)
    kept_ids = [cid for cid, ok in zip(candidate_ids, keep) if ok]
    order = sorted(range(len(kept_ids)),
                   key=lambda i: ((sims[i] if ascending else -sims[i]), kept_ids[i]))
    if top_n is not None:
        order = order[:top_n]
    return [(kept_ids[i], float(sims[i])) for i in order]


def poistats_tfidf(bags: dict) -> tuple[list, list[str], np.ndarray]:
    """tf-idf matrix over "cat_" tokens only: tf is the within-neighborhood
    category share, idf is ln(N / (1 + document frequency)). Returns
    (neighborhood ids, category tokens, N x |categories| matrix)."""
    nbhd_ids = sorted(bags)
    if not nbhd_ids:
        raise ValidationError("no neighborhood bags")
    doc_freq: Counter = Counter()
    cat_bags = {}
    for nid in nbhd_ids:
        cats = Counter({t: c for t, c in bags[nid].items() if t.startswith("cat_")})
        cat_bags[nid] = cats
        doc_freq.update(cats.keys())
    categories = sorted(doc_freq)
    if not categories:
        raise ValidationError("no category tokens in any bag")
    n = len(nbhd_ids)
    idf = np.array([math.log(n / (1 + doc_freq[c])) for c in categories])
    matrix = np.zeros((n, len(categories)))
    col = {c: i for i, c in enumerate(categories)}
    for row, nid in enumerate(nbhd_ids):
        total = sum(cat_bags[nid].values())
        if total == 0:
            log.warning("neighborhood %s has no category tokens; zero tf-idf row", nid)
            continue
        for token, count in cat_bags[nid].items():
            matrix[row, col[token]] = (count / total) * idf[col[token]]
    return nbhd_ids, categories, matrix


def adjusted_rand_index(labels_a, labels_b) -> float:
    """Chance-corrected agreement between two labelings of the same points."""
    a = np.asarray(labels_a)
    b = np.asarray(labels_b)
    if a.shape != b.shape or a.ndim != 1:
        raise ValidationError(f"label arrays must be equal-length 1-D, got {a.shape}, {b.shape}")
    n = a.shape[0]
    _, a_idx = np.unique(a, return_inverse=True)
    _, b_idx = np.unique(b, return_inverse=True)
    table = np.zeros((a_idx.max() + 1, b_idx.max() + 1), dtype=np.int64)
    np.add.at(table, (a_idx, b_idx), 1)

    def comb2(x):
        return x * (x - 1) / 2.0

    sum_cells = comb2(table).sum()
    sum_rows = comb2(table.sum(axis=1)).sum()
    sum_cols = comb2(table.sum(axis=0)).sum()
    expected = sum_rows * sum_cols / comb2(n)
    max_index = (sum_rows + sum_cols) / 2.0
    if max_index == expected:
        return 1.0
    return float((sum_cells - expected) / (max_index - expected))
