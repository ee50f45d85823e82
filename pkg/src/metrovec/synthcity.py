"""Deterministic synthetic city with recoverable structure.

Neighborhoods sit on a lat/lon grid and carry latent vectors that are
spatially smoothed so adjacent neighborhoods correlate. Street-view feature
vectors are a linear mix of the local latent plus noise; POI tokens are drawn
from latent-mixed topic distributions, so both modalities carry signal about
the latent attributes the pipeline is asked to recover.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import PoiRecord, write_poi_jsonl
from .errors import ValidationError
from .fileio import (StreetViewRecord, write_centroids_csv, write_feature_bin,
                     write_features_csv, write_sv_metadata, write_targets_csv)
from .geo import GeoPoint

GRID_SPACING_DEG = 0.01  # roughly 1.1 km between adjacent centroids
BASE_LAT = 37.0
BASE_LON = -122.0


@dataclass
class SynthConfig:
    n_neighborhoods: int = 100
    views_per_neighborhood: int = 10
    pois_per_neighborhood: int = 10
    latent_dim: int = 3
    feature_dim: int = 16
    vocab_size: int = 200
    spatial_noise: float = 0.002
    feature_noise: float = 0.3
    n_clusters: int = 0  # 0 disables clustered latents
    cluster_separation: float = 4.0
    identity_mixing: bool = False
    categories_per_poi: int = 2
    review_words_per_poi: int = 8
    topic_sharpness: float = 2.0
    city_tag: str = ""
    seed: int = 0

    def validate(self) -> "SynthConfig":
        for name in ("n_neighborhoods", "views_per_neighborhood", "pois_per_neighborhood",
                     "latent_dim", "feature_dim", "vocab_size"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.spatial_noise < 0 or self.feature_noise < 0:
            raise ValidationError("noise levels must be >= 0")
        if self.n_clusters < 0:
            raise ValidationError(f"n_clusters must be >= 0, got {self.n_clusters}")
        if self.identity_mixing and self.feature_dim < self.latent_dim:
            raise ValidationError("identity mixing needs feature_dim >= latent_dim")
        if self.vocab_size < 8:
            raise ValidationError("vocab_size must be >= 8 to split category/review pools")
        return self


@dataclass
class SynthCity:
    config: SynthConfig
    neighborhood_ids: list[str]
    centroids: list[GeoPoint]
    latents: np.ndarray  # (N, L), post-smoothing: the generating factors
    cluster_labels: np.ndarray | None
    street_views: list[StreetViewRecord]
    pois: list[PoiRecord]

    @property
    def latent_names(self) -> list[str]:
        return [f"u{i + 1}" for i in range(self.latents.shape[1])]

    def feature_matrix(self) -> tuple[list[str], np.ndarray]:
        order = sorted(range(len(self.street_views)), key=lambda i: self.street_views[i].id)
        ids = [self.street_views[i].id for i in order]
        feats = np.stack([self.street_views[i].features for i in order])
        return ids, feats


def _grid_shape(n: int) -> tuple[int, int]:
    cols = int(np.ceil(np.sqrt(n)))
    rows = int(np.ceil(n / cols))
    return rows, cols


def _smooth_latents(u: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """0.5 * own latent + 0.5 * mean of the 4-neighborhood on the grid."""
    n = u.shape[0]
    out = np.empty_like(u)
    for i in range(n):
        r, c = divmod(i, cols)
        nbrs = []
        for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            rr, cc = r + dr, c + dc
            j = rr * cols + cc
            if 0 <= rr < rows and 0 <= cc < cols and j < n:
                nbrs.append(j)
        if nbrs:
            out[i] = 0.5 * u[i] + 0.5 * u[nbrs].mean(axis=0)
        else:
            out[i] = u[i]
    return out


def grid_neighbors(config: SynthConfig) -> list[tuple[int, int]]:
    """All adjacent (i, j) neighborhood index pairs on the generation grid."""
    rows, cols = _grid_shape(config.n_neighborhoods)
    pairs = []
    for i in range(config.n_neighborhoods):
        r, c = divmod(i, cols)
        for rr, cc in ((r + 1, c), (r, c + 1)):
            j = rr * cols + cc
            if rr < rows and cc < cols and j < config.n_neighborhoods:
                pairs.append((i, j))
    return pairs


def _softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def _half_star(value: float) -> float:
    return float(min(5.0, max(1.0, np.floor(value * 2.0 + 0.5) / 2.0)))


def generate_city(config: SynthConfig) -> SynthCity:
    """Pure function of the config; identical configs give identical cities."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    n, L = config.n_neighborhoods, config.latent_dim
    rows, cols = _grid_shape(n)
    tag = config.city_tag

    nbhd_ids = [f"{tag}n{i:04d}" for i in range(n)]
    centroids = [GeoPoint(BASE_LAT + (i // cols) * GRID_SPACING_DEG,
                          BASE_LON + (i % cols) * GRID_SPACING_DEG) for i in range(n)]

    if config.n_clusters > 0:
        centers = rng.normal(size=(config.n_clusters, L)) * config.cluster_separation
        # Contiguous column strips keep clusters spatially coherent under smoothing.
        labels = np.array([min(config.n_clusters - 1, (i % cols) * config.n_clusters // cols)
                           for i in range(n)], dtype=np.int64)
        raw = centers[labels] + rng.normal(size=(n, L))
    else:
        labels = None
        raw = rng.normal(size=(n, L))
    latents = _smooth_latents(raw, rows, cols)

    if config.identity_mixing:
        mixing = np.eye(L, config.feature_dim)
    else:
        mixing = rng.normal(size=(L, config.feature_dim)) / np.sqrt(L)

    street_views: list[StreetViewRecord] = []
    for i in range(n):
        base = latents[i] @ mixing
        for v in range(config.views_per_neighborhood):
            jitter = rng.normal(size=2) * config.spatial_noise
            lat = float(np.clip(centroids[i].lat + jitter[0], -90.0, 90.0))
            lon = float(np.clip(centroids[i].lon + jitter[1], -180.0, 180.0))
            feats = base + rng.normal(size=config.feature_dim) * config.feature_noise
            street_views.append(StreetViewRecord(
                id=f"{tag}sv{i:04d}_{v:03d}",
                geo=GeoPoint(lat, lon),
                neighborhood_id=nbhd_ids[i],
                features=feats.astype(np.float32),
            ))

    n_cat = max(4, config.vocab_size // 4)
    n_rev = config.vocab_size - n_cat
    cat_pool = [f"trade {t:03d}" for t in range(n_cat)]
    rev_pool = [f"term{t:03d}" for t in range(n_rev)]
    cat_topics = _softmax(rng.normal(size=(L, n_cat)) * config.topic_sharpness, axis=1)
    rev_topics = _softmax(rng.normal(size=(L, n_rev)) * config.topic_sharpness, axis=1)

    pois: list[PoiRecord] = []
    for i in range(n):
        mix = _softmax(latents[i])
        cat_p = mix @ cat_topics
        rev_p = mix @ rev_topics
        for o in range(config.pois_per_neighborhood):
            jitter = rng.normal(size=2) * config.spatial_noise
            lat = float(np.clip(centroids[i].lat + jitter[0], -90.0, 90.0))
            lon = float(np.clip(centroids[i].lon + jitter[1], -180.0, 180.0))
            n_cats = min(config.categories_per_poi, n_cat)
            cats = [cat_pool[t] for t in rng.choice(n_cat, size=n_cats, replace=False, p=cat_p)]
            words = [rev_pool[t] for t in rng.choice(n_rev, size=config.review_words_per_poi, p=rev_p)]
            rating = _half_star(3.0 + 0.7 * latents[i, 0] + 0.3 * rng.normal())
            price = int(np.clip(round(2.5 + 0.7 * latents[i, 1 % L] + 0.3 * rng.normal()), 1, 4))
            pois.append(PoiRecord(
                id=f"{tag}p{i:04d}_{o:03d}",
                geo=GeoPoint(lat, lon),
                neighborhood_id=nbhd_ids[i],
                categories=cats,
                rating=float(rating),
                price=price,
                reviews=[" ".join(words)],
            ))

    return SynthCity(config=config, neighborhood_ids=nbhd_ids, centroids=centroids,
                     latents=latents, cluster_labels=labels,
                     street_views=street_views, pois=pois)


def export_city(city: SynthCity, directory, features_format: str = "bin") -> dict[str, Path]:
    """Write the ingestion files: poi.jsonl, features.(bin|csv),
    street_views.csv, centroids.csv, attributes.csv, and clusters.csv when
    the city was generated with clustered latents."""
    if features_format not in ("bin", "csv"):
        raise ValidationError(f"features_format must be 'bin' or 'csv', got {features_format!r}")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {
        "poi": directory / "poi.jsonl",
        "features": directory / ("features.bin" if features_format == "bin" else "features.csv"),
        "street_views": directory / "street_views.csv",
        "centroids": directory / "centroids.csv",
        "attributes": directory / "attributes.csv",
    }
    write_poi_jsonl(paths["poi"], city.pois)
    ids, feats = city.feature_matrix()
    if features_format == "bin":
        write_feature_bin(paths["features"], ids, feats)
    else:
        write_features_csv(paths["features"], ids, feats)
    by_id = {sv.id: sv for sv in city.street_views}
    write_sv_metadata(paths["street_views"], [by_id[i] for i in ids])
    city_tag = city.config.city_tag or None
    write_centroids_csv(paths["centroids"],
                        [(nid, pt, city_tag) for nid, pt in zip(city.neighborhood_ids, city.centroids)])
    write_targets_csv(paths["attributes"], city.neighborhood_ids, city.latent_names, city.latents)
    if city.cluster_labels is not None:
        paths["clusters"] = directory / "clusters.csv"
        with open(paths["clusters"], "w", encoding="utf-8") as fh:
            fh.write("id,cluster\n")
            for nid, lab in zip(city.neighborhood_ids, city.cluster_labels):
                fh.write(f"{nid},{lab}\n")
    return paths
