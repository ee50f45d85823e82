"""Synthetic-city generator tests: determinism, structure, export round-trip."""

import hashlib
from pathlib import Path

import numpy as np
import pytest

from metrovec.analytics import linreg_fit, linreg_predict, r_squared
from metrovec.corpus import read_poi_jsonl
from metrovec.errors import ValidationError
from metrovec.fileio import read_centroids_csv, read_feature_bin, read_sv_metadata, read_targets_csv
from metrovec.synthcity import SynthConfig, export_city, generate_city, grid_neighbors


def dir_digest(directory: Path) -> dict[str, str]:
    out = {}
    for path in sorted(directory.rglob("*")):
        if path.is_file():
            out[str(path.relative_to(directory))] = hashlib.sha256(path.read_bytes()).hexdigest()
    return out


class TestGenerate:
    def test_same_config_identical(self):
        cfg = SynthConfig(n_neighborhoods=12, views_per_neighborhood=4,
                          pois_per_neighborhood=3, seed=42)
        a, b = generate_city(cfg), generate_city(cfg)
        assert np.array_equal(a.latents, b.latents)
        assert a.neighborhood_ids == b.neighborhood_ids
        for sa, sb in zip(a.street_views, b.street_views):
            assert sa.id == sb.id and sa.geo == sb.geo
            assert np.array_equal(sa.features, sb.features)
        for pa, pb in zip(a.pois, b.pois):
            assert pa == pb

    def test_counts(self):
        cfg = SynthConfig(n_neighborhoods=9, views_per_neighborhood=5,
                          pois_per_neighborhood=7, seed=1)
        city = generate_city(cfg)
        assert len(city.street_views) == 45
        assert len(city.pois) == 63
        assert len(city.neighborhood_ids) == 9
        for sv in city.street_views:
            assert sv.neighborhood_id in set(city.neighborhood_ids)

    def test_degenerate_noise_identical_features(self):
        cfg = SynthConfig(n_neighborhoods=4, views_per_neighborhood=5, latent_dim=3,
                          feature_dim=6, feature_noise=0.0, identity_mixing=True, seed=2)
        city = generate_city(cfg)
        by_nbhd = {}
        for sv in city.street_views:
            by_nbhd.setdefault(sv.neighborhood_id, []).append(sv.features)
        for feats in by_nbhd.values():
            for f in feats[1:]:
                assert np.array_equal(f, feats[0])

    def test_spatial_coherence(self):
        cfg = SynthConfig(n_neighborhoods=121, views_per_neighborhood=1,
                          pois_per_neighborhood=1, latent_dim=4, seed=3)
        city = generate_city(cfg)
        u = city.latents
        pairs = grid_neighbors(cfg)
        adjacent = np.mean([float(u[i] @ u[j] / (np.linalg.norm(u[i]) * np.linalg.norm(u[j])))
                            for i, j in pairs])
        rng = np.random.default_rng(0)
        rand_pairs = rng.integers(0, len(u), size=(500, 2))
        rand_pairs = rand_pairs[rand_pairs[:, 0] != rand_pairs[:, 1]]
        random_sim = np.mean([float(u[i] @ u[j] / (np.linalg.norm(u[i]) * np.linalg.norm(u[j])))
                              for i, j in rand_pairs])
        assert adjacent > random_sim

    def test_feature_signal_floor(self):
        cfg = SynthConfig(n_neighborhoods=80, views_per_neighborhood=8,
                          pois_per_neighborhood=1, latent_dim=3, feature_dim=12, seed=4)
        city = generate_city(cfg)
        means = {}
        for sv in city.street_views:
            means.setdefault(sv.neighborhood_id, []).append(sv.features.astype(np.float64))
        X = np.stack([np.mean(means[nid], axis=0) for nid in city.neighborhood_ids])
        n_train = 60
        for t in range(3):
            y = city.latents[:, t]
            w, b = linreg_fit(X[:n_train], y[:n_train])
            assert r_squared(y[n_train:], linreg_predict(w, b, X[n_train:])) > 0.0

    def test_cluster_mode(self):
        cfg = SynthConfig(n_neighborhoods=64, views_per_neighborhood=1,
                          pois_per_neighborhood=1, n_clusters=4, seed=5)
        city = generate_city(cfg)
        assert city.cluster_labels is not None
        assert set(city.cluster_labels.tolist()) == {0, 1, 2, 3}

    def test_invalid_configs(self):
        with pytest.raises(ValidationError):
            SynthConfig(n_neighborhoods=0).validate()
        with pytest.raises(ValidationError):
            SynthConfig(feature_noise=-1.0).validate()
        with pytest.raises(ValidationError):
            SynthConfig(identity_mixing=True, feature_dim=2, latent_dim=3).validate()

    def test_city_tag_prefixes_ids(self):
        cfg = SynthConfig(n_neighborhoods=4, views_per_neighborhood=2,
                          pois_per_neighborhood=2, city_tag="ny_", seed=6)
        city = generate_city(cfg)
        assert all(nid.startswith("ny_") for nid in city.neighborhood_ids)
        assert all(sv.id.startswith("ny_") for sv in city.street_views)
        assert all(p.id.startswith("ny_") for p in city.pois)


class TestExport:
    def test_files_and_counts(self, tmp_path):
        cfg = SynthConfig(n_neighborhoods=6, views_per_neighborhood=3,
                          pois_per_neighborhood=4, seed=7)
        city = generate_city(cfg)
        paths = export_city(city, tmp_path / "out")
        for key in ("poi", "features", "street_views", "centroids", "attributes"):
            assert paths[key].exists()
        assert len(read_sv_metadata(paths["street_views"])) == 18
        assert len(read_poi_jsonl(paths["poi"])) == 24
        assert read_feature_bin(paths["features"]).shape == (18, cfg.feature_dim)
        ids, names, values = read_targets_csv(paths["attributes"])
        assert ids == city.neighborhood_ids
        assert values.shape == (6, cfg.latent_dim)

    def test_round_trip_bin_and_csv(self, tmp_path):
        cfg = SynthConfig(n_neighborhoods=5, views_per_neighborhood=3,
                          pois_per_neighborhood=3, seed=8)
        city = generate_city(cfg)
        exp_ids, exp_feats = city.feature_matrix()

        paths_bin = export_city(city, tmp_path / "bin", features_format="bin")
        feats = read_feature_bin(paths_bin["features"])
        assert np.array_equal(feats, exp_feats)

        from metrovec.fileio import read_features_csv
        paths_csv = export_city(city, tmp_path / "csv", features_format="csv")
        ids, feats_csv = read_features_csv(paths_csv["features"])
        assert ids == exp_ids
        assert np.array_equal(feats_csv, exp_feats)

        meta = read_sv_metadata(paths_bin["street_views"])
        by_id = {sv.id: sv for sv in city.street_views}
        for rec in meta:
            assert rec.geo == by_id[rec.id].geo
            assert rec.neighborhood_id == by_id[rec.id].neighborhood_id

        pois = read_poi_jsonl(paths_bin["poi"])
        assert pois == city.pois

        cents = read_centroids_csv(paths_bin["centroids"])
        assert [c[0] for c in cents] == city.neighborhood_ids
        assert [c[1] for c in cents] == city.centroids

        _, _, latents = read_targets_csv(paths_bin["attributes"])
        assert np.array_equal(latents, city.latents)

    def test_checksums_stable_across_regeneration(self, tmp_path):
        cfg = SynthConfig(n_neighborhoods=5, views_per_neighborhood=2,
                          pois_per_neighborhood=2, n_clusters=2, seed=9)
        export_city(generate_city(cfg), tmp_path / "a")
        export_city(generate_city(cfg), tmp_path / "b")
        assert dir_digest(tmp_path / "a") == dir_digest(tmp_path / "b")

    def test_cluster_file_emitted(self, tmp_path):
        cfg = SynthConfig(n_neighborhoods=8, views_per_neighborhood=1,
                          pois_per_neighborhood=1, n_clusters=2, seed=10)
        paths = export_city(generate_city(cfg), tmp_path / "c")
        assert "clusters" in paths
        lines = paths["clusters"].read_text().strip().splitlines()
        assert lines[0] == "id,cluster"
        assert len(lines) == 9
