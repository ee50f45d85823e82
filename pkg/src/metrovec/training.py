"""Triplet construction, triplet loss/gradients, and the staged training loops.

Stage 1 pulls each street-view embedding toward its K geographically nearest
images and away from a uniformly drawn non-context image, training the feature
encoder by mini-batch SGD on the hinge triplet loss. Stage 2 sets every
neighborhood embedding to the mean of its street-view embeddings (the closed
form minimizer of the summed squared distance). Stage 3 jointly trains
neighborhood and POI-word embeddings on word triplets, with context words
drawn from the neighborhood bag (respecting multiplicity) and negatives drawn
frequency**exponent-weighted from outside the bag.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, fields
from typing import NamedTuple

import numpy as np

from .corpus import NegativeWordSampler, Vocabulary, WordBag
from .encoder import EncoderParams, _backward_batch, _forward_batch
from .errors import ValidationError
from .geo import SpatialIndex

log = logging.getLogger(__name__)

DISTANCE_FLOOR = 1e-8  # floor for distances in gradient denominators


@dataclass
class TrainingConfig:
    d: int = 200
    k_context: int = 5
    margin_sv: float = 0.2
    margin_poi: float = 0.2
    neg_exponent: float = 0.5
    lr_sv: float = 0.01
    lr_poi: float = 0.01
    epochs_sv: int = 10
    epochs_poi: int = 10
    triplets_per_anchor: int = 5
    batch_size: int = 64
    hidden: int = 0
    anchor_weight: float = 0.0
    empty_policy: str = "error"
    seed: int = 0

    def validate(self) -> "TrainingConfig":
        if self.d < 1:
            raise ValidationError(f"d must be >= 1, got {self.d}")
        if self.k_context < 1:
            raise ValidationError(f"k_context must be >= 1, got {self.k_context}")
        if self.margin_sv < 0 or self.margin_poi < 0:
            raise ValidationError("margins must be >= 0")
        if self.lr_sv <= 0 or self.lr_poi <= 0:
            raise ValidationError("learning rates must be > 0")
        if self.epochs_sv < 0 or self.epochs_poi < 0:
            raise ValidationError("epoch counts must be >= 0")
        if self.triplets_per_anchor < 1:
            raise ValidationError("triplets_per_anchor must be >= 1")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if self.hidden < 0:
            raise ValidationError("hidden must be >= 0")
        if self.neg_exponent < 0:
            raise ValidationError("neg_exponent must be >= 0")
        if self.anchor_weight < 0:
            raise ValidationError("anchor_weight must be >= 0")
        if self.empty_policy not in ("error", "zero"):
            raise ValidationError(f"empty_policy must be 'error' or 'zero', got {self.empty_policy!r}")
        return self

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


class Triplet(NamedTuple):
    anchor: object
    context: object
    negative: object


@dataclass
class EmbeddingStore:
    """Bundle of the three learned matrices, all sharing one dimension d."""

    sv_ids: list = field(default_factory=list)
    X: np.ndarray | None = None  # street views
    tokens: list = field(default_factory=list)
    Y: np.ndarray | None = None  # POI words
    neighborhood_ids: list = field(default_factory=list)
    Z: np.ndarray | None = None  # neighborhoods

    def validate(self) -> "EmbeddingStore":
        dims = set()
        for ids, mat, name in ((self.sv_ids, self.X, "X"), (self.tokens, self.Y, "Y"),
                               (self.neighborhood_ids, self.Z, "Z")):
            if mat is None:
                continue
            if mat.shape[0] != len(ids):
                raise ValidationError(f"{name}: {mat.shape[0]} rows but {len(ids)} ids")
            if not np.isfinite(mat).all():
                raise ValidationError(f"{name}: non-finite entries")
            dims.add(mat.shape[1])
        if len(dims) > 1:
            raise ValidationError(f"embedding dimensions differ: {sorted(dims)}")
        return self


def _check_triplet_inputs(xa, xc, xn, margin):
    xa = np.asarray(xa, dtype=np.float64)
    xc = np.asarray(xc, dtype=np.float64)
    xn = np.asarray(xn, dtype=np.float64)
    if not (xa.shape == xc.shape == xn.shape) or xa.ndim != 1:
        raise ValidationError(f"triplet vectors must share one shape, got {xa.shape}, {xc.shape}, {xn.shape}")
    if margin < 0:
        raise ValidationError(f"margin must be >= 0, got {margin}")
    if not (np.isfinite(xa).all() and np.isfinite(xc).all() and np.isfinite(xn).all()):
        raise ValidationError("non-finite triplet input")
    return xa, xc, xn


def triplet_loss(xa, xc, xn, margin: float) -> float:
    """Hinge loss max(0, margin + ||xa-xc|| - ||xa-xn||), plain Euclidean."""
    xa, xc, xn = _check_triplet_inputs(xa, xc, xn, margin)
    return max(0.0, margin + float(np.linalg.norm(xa - xc)) - float(np.linalg.norm(xa - xn)))


def triplet_grads(xa, xc, xn, margin: float):
    """Exact gradients of the hinge triplet loss w.r.t. (xa, xc, xn).

    Inactive triplets (loss 0) return zero vectors; distances are floored at
    DISTANCE_FLOOR in denominators to remove the singularity at coincident
    embeddings.
    """
    xa, xc, xn = _check_triplet_inputs(xa, xc, xn, margin)
    diff_ac = xa - xc
    diff_an = xa - xn
    d_ac = float(np.linalg.norm(diff_ac))
    d_an = float(np.linalg.norm(diff_an))
    if margin + d_ac - d_an <= 0.0:
        zero = np.zeros_like(xa)
        return zero, zero.copy(), zero.copy()
    u_ac = diff_ac / max(d_ac, DISTANCE_FLOOR)
    u_an = diff_an / max(d_an, DISTANCE_FLOOR)
    return u_ac - u_an, -u_ac, u_an


def _triplet_grads_batch(A: np.ndarray, C: np.ndarray, N: np.ndarray, margin: float):
    """Vectorized gradients/losses for row-aligned triplet matrices."""
    diff_ac = A - C
    diff_an = A - N
    d_ac = np.linalg.norm(diff_ac, axis=1)
    d_an = np.linalg.norm(diff_an, axis=1)
    losses = np.maximum(0.0, margin + d_ac - d_an)
    active = (losses > 0.0).astype(np.float64)[:, None]
    u_ac = diff_ac / np.maximum(d_ac, DISTANCE_FLOOR)[:, None]
    u_an = diff_an / np.maximum(d_an, DISTANCE_FLOOR)[:, None]
    ga = (u_ac - u_an) * active
    gc = -u_ac * active
    gn = u_an * active
    return ga, gc, gn, losses


def mean_triplet_loss(A: np.ndarray, C: np.ndarray, N: np.ndarray, margin: float) -> float:
    """Mean hinge loss over row-aligned (anchor, context, negative) matrices."""
    d_ac = np.linalg.norm(A - C, axis=1)
    d_an = np.linalg.norm(A - N, axis=1)
    return float(np.mean(np.maximum(0.0, margin + d_ac - d_an)))


def _sample_negative_rows(rng: np.random.Generator, n: int, count: int,
                          forbidden: set[int]) -> np.ndarray:
    """Uniform draws from range(n) excluding ``forbidden``; n must exceed
    len(forbidden). Rejection sampling keeps the draw exact and cheap."""
    out = rng.integers(0, n, size=count)
    bad = np.array([row in forbidden for row in out])
    while bad.any():
        out[bad] = rng.integers(0, n, size=int(bad.sum()))
        bad = np.array([row in forbidden for row in out])
    return out


def _sample_triplet_rows(context_rows: np.ndarray, per_anchor: int,
                         rng: np.random.Generator) -> np.ndarray:
    """(n*per_anchor, 3) row-index triplets, anchor-major. context_rows is
    (n, K): the K nearest rows of each anchor."""
    n, k = context_rows.shape
    out = np.empty((n * per_anchor, 3), dtype=np.int64)
    for a in range(n):
        picks = context_rows[a, rng.integers(0, k, size=per_anchor)]
        forbidden = {a, *context_rows[a].tolist()}
        negs = _sample_negative_rows(rng, n, per_anchor, forbidden)
        base = a * per_anchor
        out[base:base + per_anchor, 0] = a
        out[base:base + per_anchor, 1] = picks
        out[base:base + per_anchor, 2] = negs
    return out


def context_rows_from_index(index: SpatialIndex, ids: list, k: int) -> np.ndarray:
    """(n, K) matrix of row indices of each id's K nearest ids."""
    if len(ids) < k + 2:
        raise ValidationError(f"need at least K+2={k + 2} street views, got {len(ids)}")
    row_of = {pid: i for i, pid in enumerate(ids)}
    out = np.empty((len(ids), k), dtype=np.int64)
    for i, pid in enumerate(ids):
        nbrs = index.k_nearest(pid, k)
        try:
            out[i] = [row_of[b] for b in nbrs]
        except KeyError as exc:
            raise ValidationError(f"index returned id {exc} that is not among the given ids") from None
    return out


def sample_sv_triplets(index: SpatialIndex, all_ids: list, k: int, per_anchor: int,
                       rng: np.random.Generator) -> list[Triplet]:
    """Per anchor: ``per_anchor`` triplets with the context drawn uniformly
    from the K nearest images and the negative uniformly from everything
    outside anchor + context."""
    ctx = context_rows_from_index(index, all_ids, k)
    rows = _sample_triplet_rows(ctx, per_anchor, rng)
    return [Triplet(all_ids[a], all_ids[c], all_ids[n]) for a, c, n in rows]


def train_street_view(params: EncoderParams, sv_ids: list, features: np.ndarray,
                      index: SpatialIndex, config: TrainingConfig):
    """Stage 1: mini-batch SGD on the street-view triplet loss through the
    encoder. Returns (trained params, X) with X[j] = encode(params, features[j]);
    deterministic per config.seed."""
    config.validate()
    features = np.asarray(features, dtype=np.float64)
    if features.shape[0] != len(sv_ids):
        raise ValidationError(f"{features.shape[0]} feature rows but {len(sv_ids)} ids")
    if params.d_out != config.d:
        raise ValidationError(f"encoder output dim {params.d_out} != config d {config.d}")
    params = params.copy()
    rng = np.random.default_rng(config.seed)
    ctx = context_rows_from_index(index, sv_ids, config.k_context)

    for _ in range(config.epochs_sv):
        rows = _sample_triplet_rows(ctx, config.triplets_per_anchor, rng)
        rows = rows[rng.permutation(rows.shape[0])]
        for start in range(0, rows.shape[0], config.batch_size):
            batch = rows[start:start + config.batch_size]
            grads_w = [np.zeros_like(w) for w in params.weights]
            grads_b = [np.zeros_like(b) for b in params.biases]
            outs, caches = [], []
            for col in range(3):
                out, cache = _forward_batch(params, features[batch[:, col]])
                outs.append(out)
                caches.append(cache)
            ga, gc, gn, _ = _triplet_grads_batch(outs[0], outs[1], outs[2], config.margin_sv)
            for cache, grad in zip(caches, (ga, gc, gn)):
                gws, gbs, _ = _backward_batch(params, cache, grad)
                for acc, g in zip(grads_w, gws):
                    acc += g
                for acc, g in zip(grads_b, gbs):
                    acc += g
            scale = config.lr_sv / batch.shape[0]
            for w, g in zip(params.weights, grads_w):
                w -= scale * g
            for b, g in zip(params.biases, grads_b):
                b -= scale * g

    X, _ = _forward_batch(params, features)
    return params, X


def aggregate_neighborhoods(X: np.ndarray, sv_neighborhoods: list,
                            neighborhood_ids: list, policy: str = "error") -> np.ndarray:
    """Stage 2: each neighborhood embedding is the mean of its street-view
    embeddings. ``policy`` decides what a neighborhood with no street views
    gets: 'error' raises, 'zero' yields a zero row with a warning."""
    if policy not in ("error", "zero"):
        raise ValidationError(f"unknown empty policy {policy!r}")
    if X.shape[0] != len(sv_neighborhoods):
        raise ValidationError(f"{X.shape[0]} embedding rows but {len(sv_neighborhoods)} assignments")
    row_of = {nid: i for i, nid in enumerate(neighborhood_ids)}
    unknown = sorted({str(n) for n in sv_neighborhoods if n not in row_of})
    if unknown:
        raise ValidationError(f"street views assigned to unknown neighborhoods: {unknown}")
    Z = np.zeros((len(neighborhood_ids), X.shape[1]))
    counts = np.zeros(len(neighborhood_ids), dtype=np.int64)
    for j, nid in enumerate(sv_neighborhoods):
        i = row_of[nid]
        Z[i] += X[j]
        counts[i] += 1
    empty = counts == 0
    if empty.any():
        missing = [neighborhood_ids[i] for i in np.flatnonzero(empty)]
        if policy == "error":
            raise ValidationError(f"neighborhoods with zero street views: {missing}")
        log.warning("neighborhoods with zero street views get zero embeddings: %s", missing)
        counts[empty] = 1
    return Z / counts[:, None]


def init_word_vectors(vocab: Vocabulary, d: int, seed: int,
                      pretrained: dict[int, np.ndarray] | None = None) -> np.ndarray:
    """|C| x d matrix, uniform(-0.5/d, 0.5/d) per row, rows overwritten by
    pretrained vectors where provided. Deterministic per seed regardless of
    pretrained coverage."""
    rng = np.random.default_rng(seed)
    Y = rng.uniform(-0.5 / d, 0.5 / d, size=(vocab.size, d))
    if pretrained:
        for token_id, vec in pretrained.items():
            if vec.shape != (d,):
                raise ValidationError(f"pretrained vector for token id {token_id} has shape {vec.shape}, want ({d},)")
            Y[token_id] = vec
    return Y


def train_poi_stage(z_init: np.ndarray, neighborhood_ids: list, vocab: Vocabulary,
                    bags: dict, config: TrainingConfig,
                    pretrained: dict[int, np.ndarray] | None = None):
    """Stage 3: joint SGD over neighborhood and word embeddings on POI-word
    triplets. Word vectors start from init_word_vectors(vocab, d, config.seed,
    pretrained); the SGD stream uses config.seed + 1. Returns (Z, Y)."""
    config.validate()
    z_init = np.asarray(z_init, dtype=np.float64)
    if z_init.shape[0] != len(neighborhood_ids):
        raise ValidationError(f"{z_init.shape[0]} Z rows but {len(neighborhood_ids)} neighborhood ids")
    d = z_init.shape[1]
    Y = init_word_vectors(vocab, d, config.seed, pretrained)
    Z = z_init.copy()
    Z0 = z_init if config.anchor_weight > 0.0 else None
    rng = np.random.default_rng(config.seed + 1)

    token_rows, token_probs, samplers = [], [], []
    for nid in neighborhood_ids:
        bag: WordBag = bags.get(nid) or WordBag()
        if not bag:
            log.info("neighborhood %s has an empty bag; contributes no triplets", nid)
            token_rows.append(None)
            token_probs.append(None)
            samplers.append(None)
            continue
        ids, counts = vocab.bag_to_ids(bag)
        if ids.size == vocab.size:
            # No negatives exist outside this bag; skip like an empty bag.
            log.warning("neighborhood %s bag covers the whole vocabulary; skipped", nid)
            token_rows.append(None)
            token_probs.append(None)
            samplers.append(None)
            continue
        token_rows.append(ids)
        token_probs.append(counts / counts.sum())
        samplers.append(NegativeWordSampler(vocab, set(ids.tolist()), config.neg_exponent))

    per = config.triplets_per_anchor
    for _ in range(config.epochs_poi):
        for i in rng.permutation(len(neighborhood_ids)):
            if samplers[i] is None:
                continue
            ctx_ids = rng.choice(token_rows[i], size=per, p=token_probs[i])
            neg_ids = samplers[i].draw(rng, size=per)
            for c, n in zip(ctx_ids, neg_ids):
                ga, gc, gn = triplet_grads(Z[i], Y[c], Y[n], config.margin_poi)
                if Z0 is not None:
                    ga = ga + config.anchor_weight * (Z[i] - Z0[i])
                Z[i] -= config.lr_poi * ga
                Y[c] -= config.lr_poi * gc
                Y[n] -= config.lr_poi * gn
    return Z, Y
