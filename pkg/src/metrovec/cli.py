"""Pipeline orchestration: synth, ingest, staged training, and evaluation.

A workspace directory holds a JSON manifest plus normalized inputs,
checkpoints, and reports. Every artifact is content-hashed into the manifest
when written and verified before the next stage reads it, so stages can only
run in order on untampered files. All randomness derives from the root seed
recorded in the manifest.

Exit codes: 0 success, 2 usage error, 3 data validation error,
4 stage-order or integrity error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from collections import defaultdict
from pathlib import Path

import numpy as np

from . import analytics, corpus, fileio, synthcity, training
from .encoder import init_encoder
from .errors import (IntegrityError, NotFoundError, PipelineError, StageOrderError,
                     UsageError, ValidationError)
from .geo import assign_neighborhood, build_index
from .training import TrainingConfig

log = logging.getLogger(__name__)

STAGES = ["ingest", "train_sv", "aggregate", "train_poi"]
MANIFEST_NAME = "manifest.json"

INGESTED = {
    "street_views": "ingested/street_views.csv",
    "features": "ingested/features.bin",
    "poi": "ingested/poi.jsonl",
    "centroids": "ingested/centroids.csv",
}
CHECKPOINTS = {
    "sv": "checkpoints/sv.emb",
    "sve": "checkpoints/sve.emb",
    "u2v": "checkpoints/u2v.emb",
    "words": "checkpoints/words.emb",
}

# Seed offsets off the root seed; stage-3 word init and SGD offsets live in
# training.train_poi_stage (seed, seed + 1).
POI_ONLY_Z_SEED_OFFSET = 2


def _new_manifest() -> dict:
    return {"version": 1, "inputs": {}, "root_seed": None, "config": None,
            "files": {}, "stages": {s: False for s in STAGES}}


def _manifest_path(workspace: Path) -> Path:
    return workspace / MANIFEST_NAME


def load_manifest(workspace: Path) -> dict:
    path = _manifest_path(workspace)
    if not path.exists():
        raise StageOrderError(f"no manifest at {path}; run 'ingest' first")
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def save_manifest(workspace: Path, manifest: dict) -> None:
    with open(_manifest_path(workspace), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _record_file(workspace: Path, manifest: dict, relpath: str) -> None:
    manifest["files"][relpath] = fileio.sha256_file(workspace / relpath)


def _verify_file(workspace: Path, manifest: dict, relpath: str) -> None:
    recorded = manifest["files"].get(relpath)
    if recorded is None:
        raise IntegrityError(f"{relpath} is not recorded in the manifest")
    path = workspace / relpath
    if not path.exists():
        raise IntegrityError(f"{relpath} is missing from the workspace")
    actual = fileio.sha256_file(path)
    if actual != recorded:
        raise IntegrityError(f"{relpath} hash mismatch: manifest {recorded[:12]}..., file {actual[:12]}...")


def _require_stage(manifest: dict, stage: str) -> None:
    if not manifest["stages"].get(stage):
        raise StageOrderError(f"stage '{stage.replace('_', '-')}' has not completed in this workspace")


def _complete_stage(manifest: dict, stage: str) -> None:
    manifest["stages"][stage] = True
    for later in STAGES[STAGES.index(stage) + 1:]:
        manifest["stages"][later] = False


def _parse_kv_file(path) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def _coerce_into(instance, values: dict[str, str], source: str):
    by_name = {f.name: f for f in dataclasses.fields(instance)}
    for key, raw in values.items():
        f = by_name.get(key)
        if f is None:
            raise ValidationError(f"{source}: unknown config field {key!r}")
        try:
            if f.type in ("int", int):
                val = int(raw)
            elif f.type in ("float", float):
                val = float(raw)
            elif f.type in ("bool", bool):
                val = raw.lower() in ("1", "true", "yes", "on")
            else:
                val = raw
        except ValueError:
            raise ValidationError(f"{source}: field {key!r} got unparsable value {raw!r}") from None
        setattr(instance, key, val)
    return instance


def resolve_training_config(manifest: dict | None, config_path, flag_values: dict) -> TrainingConfig:
    """Precedence: defaults < manifest snapshot < config file < flags."""
    cfg = TrainingConfig()
    if manifest and manifest.get("config"):
        cfg = TrainingConfig(**manifest["config"])
    if config_path:
        _coerce_into(cfg, _parse_kv_file(config_path), str(config_path))
    for key, value in flag_values.items():
        if value is not None:
            setattr(cfg, key, value)
    return cfg.validate()


def _config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", default=None, help="key=value config file")
    parser.add_argument("--d", type=int, default=None)
    parser.add_argument("--k-context", type=int, default=None)
    parser.add_argument("--margin-sv", type=float, default=None)
    parser.add_argument("--margin-poi", type=float, default=None)
    parser.add_argument("--neg-exponent", type=float, default=None)
    parser.add_argument("--lr-sv", type=float, default=None)
    parser.add_argument("--lr-poi", type=float, default=None)
    parser.add_argument("--epochs-sv", type=int, default=None)
    parser.add_argument("--epochs-poi", type=int, default=None)
    parser.add_argument("--triplets-per-anchor", type=int, default=None)
    parser.add_argument("--batch-size", type=int, default=None)
    parser.add_argument("--hidden", type=int, default=None)
    parser.add_argument("--anchor-weight", type=float, default=None)
    parser.add_argument("--empty-policy", choices=["error", "zero"], default=None)
    parser.add_argument("--seed", type=int, default=None)


def _flag_config_values(args) -> dict:
    return {name: getattr(args, name) for name in TrainingConfig.field_names()
            if hasattr(args, name)}


def _workspace(args) -> Path:
    return Path(args.workspace)


# ---------------------------------------------------------------- commands


def cmd_synth(args) -> int:
    cfg = synthcity.SynthConfig()
    if args.config:
        _coerce_into(cfg, _parse_kv_file(args.config), str(args.config))
    cfg.validate()
    city = synthcity.generate_city(cfg)
    paths = synthcity.export_city(city, args.out, features_format=args.features_format)
    print(f"synthetic city: {cfg.n_neighborhoods} neighborhoods, "
          f"{len(city.street_views)} street views, {len(city.pois)} POIs")
    for name, path in sorted(paths.items()):
        print(f"  {name}: {path}")
    return 0


def _load_features(features_path, metadata: list[fileio.StreetViewRecord]):
    """Features either as GVFEAT01 binary (rows follow the id-sorted metadata)
    or CSV with inline ids; returns the matrix aligned to the metadata order."""
    with open(features_path, "rb") as fh:
        is_bin = fh.read(8) == fileio.FEATURE_MAGIC
    meta_ids = [r.id for r in metadata]
    if is_bin:
        if meta_ids != sorted(meta_ids):
            raise ValidationError("binary features require the ids file sorted ascending by id")
        matrix = fileio.read_feature_bin(features_path)
        if matrix.shape[0] != len(meta_ids):
            raise ValidationError(f"{matrix.shape[0]} feature rows but {len(meta_ids)} metadata rows")
        return matrix
    ids, matrix = fileio.read_features_csv(features_path)
    row_of = {rid: i for i, rid in enumerate(ids)}
    if len(row_of) != len(ids):
        raise ValidationError("duplicate ids in feature CSV")
    missing = [rid for rid in meta_ids if rid not in row_of]
    extra = [rid for rid in ids if rid not in set(meta_ids)]
    if missing or extra:
        raise ValidationError(f"feature/metadata id mismatch: missing {missing[:5]}, extra {extra[:5]}")
    return matrix[[row_of[rid] for rid in meta_ids]]


def cmd_ingest(args) -> int:
    workspace = _workspace(args)
    workspace.mkdir(parents=True, exist_ok=True)
    (workspace / "ingested").mkdir(exist_ok=True)

    centroids = fileio.read_centroids_csv(args.centroids)
    centroid_ids = [cid for cid, _, _ in centroids]
    if len(set(centroid_ids)) != len(centroid_ids):
        raise ValidationError("duplicate centroid ids")
    known = set(centroid_ids)
    centroid_points = [(cid, pt) for cid, pt, _ in centroids]

    metadata = fileio.read_sv_metadata(args.ids)
    sv_ids = [r.id for r in metadata]
    if len(set(sv_ids)) != len(sv_ids):
        raise ValidationError("duplicate street-view ids")
    features = _load_features(args.features, metadata)
    if not np.isfinite(features).all():
        bad = [metadata[i].id for i in np.unique(np.nonzero(~np.isfinite(features))[0])][:5]
        raise ValidationError(f"non-finite feature values for street views {bad}")

    pois = corpus.read_poi_jsonl(args.poi)
    poi_ids = [p.id for p in pois]
    if len(set(poi_ids)) != len(poi_ids):
        raise ValidationError("duplicate POI ids")

    def resolve(records, kind):
        unassigned = [r for r in records if r.neighborhood_id is None]
        dangling = [r for r in records if r.neighborhood_id is not None and r.neighborhood_id not in known]
        if dangling:
            names = [(r.id, r.neighborhood_id) for r in dangling[:10]]
            raise ValidationError(f"{kind} records reference unknown neighborhoods: {names}")
        if unassigned:
            if not args.assign_missing:
                ids = [r.id for r in unassigned[:10]]
                raise ValidationError(f"{kind} records without neighborhood ids (use --assign-missing): {ids}")
            for r in unassigned:
                r.neighborhood_id = assign_neighborhood(r.geo, centroid_points)
            log.info("assigned %d %s records to nearest centroids", len(unassigned), kind)

    resolve(metadata, "street-view")
    resolve(pois, "POI")

    order = sorted(range(len(metadata)), key=lambda i: metadata[i].id)
    metadata = [metadata[i] for i in order]
    features = features[order]

    fileio.write_sv_metadata(workspace / INGESTED["street_views"], metadata)
    fileio.write_feature_bin(workspace / INGESTED["features"], [r.id for r in metadata], features)
    corpus.write_poi_jsonl(workspace / INGESTED["poi"], pois)
    fileio.write_centroids_csv(workspace / INGESTED["centroids"], centroids)

    manifest = _new_manifest()
    manifest["inputs"] = {"poi": str(args.poi), "features": str(args.features),
                          "ids": str(args.ids), "centroids": str(args.centroids)}
    for relpath in INGESTED.values():
        _record_file(workspace, manifest, relpath)
    _complete_stage(manifest, "ingest")
    save_manifest(workspace, manifest)
    print(f"ingested {len(metadata)} street views, {len(pois)} POIs, "
          f"{len(centroid_ids)} neighborhoods into {workspace}")
    return 0


def _read_ingested(workspace: Path, manifest: dict, *names: str):
    for name in names:
        _verify_file(workspace, manifest, INGESTED[name])
    out = []
    for name in names:
        path = workspace / INGESTED[name]
        if name == "street_views":
            out.append(fileio.read_sv_metadata(path))
        elif name == "features":
            out.append(fileio.read_feature_bin(path))
        elif name == "poi":
            out.append(corpus.read_poi_jsonl(path))
        elif name == "centroids":
            out.append(fileio.read_centroids_csv(path))
    return out


def _write_checkpoint(workspace: Path, manifest: dict, name: str, ids, matrix) -> None:
    (workspace / "checkpoints").mkdir(exist_ok=True)
    relpath = CHECKPOINTS[name]
    fileio.write_embeddings(workspace / relpath, ids, matrix)
    _record_file(workspace, manifest, relpath)
    _record_file(workspace, manifest, relpath + ".ids")


def _read_checkpoint(workspace: Path, manifest: dict, name: str):
    relpath = CHECKPOINTS[name]
    _verify_file(workspace, manifest, relpath)
    _verify_file(workspace, manifest, relpath + ".ids")
    return fileio.read_embeddings(workspace / relpath)


def cmd_train_sv(args) -> int:
    workspace = _workspace(args)
    manifest = load_manifest(workspace)
    _require_stage(manifest, "ingest")
    config = resolve_training_config(manifest, args.config, _flag_config_values(args))
    metadata, features = _read_ingested(workspace, manifest, "street_views", "features")

    index = build_index([(r.id, r.geo) for r in metadata])
    params = init_encoder(features.shape[1], config.hidden, config.d, config.seed)
    params, X = training.train_street_view(params, [r.id for r in metadata],
                                           features.astype(np.float64), index, config)
    _write_checkpoint(workspace, manifest, "sv", [r.id for r in metadata], X)
    manifest["config"] = dataclasses.asdict(config)
    manifest["root_seed"] = config.seed
    _complete_stage(manifest, "train_sv")
    save_manifest(workspace, manifest)
    print(f"trained street-view embeddings: {X.shape[0]} x {X.shape[1]} "
          f"({config.epochs_sv} epochs, seed {config.seed})")
    return 0


def cmd_aggregate(args) -> int:
    workspace = _workspace(args)
    manifest = load_manifest(workspace)
    _require_stage(manifest, "train_sv")
    config = resolve_training_config(manifest, args.config, _flag_config_values(args))
    sv_ids, X = _read_checkpoint(workspace, manifest, "sv")
    metadata, centroids = _read_ingested(workspace, manifest, "street_views", "centroids")
    nbhd_of = {r.id: r.neighborhood_id for r in metadata}
    try:
        assignments = [nbhd_of[sid] for sid in sv_ids]
    except KeyError as exc:
        raise ValidationError(f"checkpoint id {exc} missing from ingested street views") from None
    neighborhood_ids = sorted(cid for cid, _, _ in centroids)
    Z = training.aggregate_neighborhoods(X.astype(np.float64), assignments,
                                         neighborhood_ids, policy=config.empty_policy)
    _write_checkpoint(workspace, manifest, "sve", neighborhood_ids, Z)
    manifest["config"] = dataclasses.asdict(config)
    _complete_stage(manifest, "aggregate")
    save_manifest(workspace, manifest)
    print(f"aggregated {X.shape[0]} street views into {Z.shape[0]} neighborhood embeddings")
    return 0


def _neighborhood_bags(pois, neighborhood_ids):
    grouped = defaultdict(list)
    for poi in pois:
        grouped[poi.neighborhood_id].append(poi)
    return {nid: corpus.build_neighborhood_bag(grouped.get(nid, [])) for nid in neighborhood_ids}


def cmd_train_poi(args) -> int:
    workspace = _workspace(args)
    manifest = load_manifest(workspace)
    _require_stage(manifest, "aggregate")
    config = resolve_training_config(manifest, args.config, _flag_config_values(args))
    neighborhood_ids, z_init = _read_checkpoint(workspace, manifest, "sve")
    (pois,) = _read_ingested(workspace, manifest, "poi")
    bags = _neighborhood_bags(pois, neighborhood_ids)
    vocab = corpus.build_vocabulary(bags.values())
    pretrained = None
    if args.pretrained:
        pretrained = corpus.load_pretrained_vectors(args.pretrained, vocab, config.d)
        log.info("loaded %d pretrained word vectors", len(pretrained))
    Z, Y = training.train_poi_stage(z_init.astype(np.float64), neighborhood_ids,
                                    vocab, bags, config, pretrained)
    _write_checkpoint(workspace, manifest, "u2v", neighborhood_ids, Z)
    _write_checkpoint(workspace, manifest, "words", list(vocab.tokens), Y)
    manifest["config"] = dataclasses.asdict(config)
    _complete_stage(manifest, "train_poi")
    save_manifest(workspace, manifest)
    print(f"trained joint embeddings: {Z.shape[0]} neighborhoods, {Y.shape[0]} words "
          f"({config.epochs_poi} epochs)")
    return 0


def _load_representation(workspace: Path, manifest: dict, name: str, config: TrainingConfig):
    """Neighborhood representation matrix for evaluation: the full pipeline
    (u2v), street-view-only (sve), POI-only trained from a random start, or
    the category tf-idf baseline."""
    if name == "u2v":
        _require_stage(manifest, "train_poi")
        return _read_checkpoint(workspace, manifest, "u2v")
    if name == "sve":
        _require_stage(manifest, "aggregate")
        return _read_checkpoint(workspace, manifest, "sve")
    _require_stage(manifest, "ingest")
    (pois,) = _read_ingested(workspace, manifest, "poi")
    (centroids,) = _read_ingested(workspace, manifest, "centroids")
    neighborhood_ids = sorted(cid for cid, _, _ in centroids)
    bags = _neighborhood_bags(pois, neighborhood_ids)
    if name == "poistats":
        ids, _, matrix = analytics.poistats_tfidf(bags)
        return ids, matrix
    if name == "poi":
        vocab = corpus.build_vocabulary(bags.values())
        rng = np.random.default_rng(config.seed + POI_ONLY_Z_SEED_OFFSET)
        z_init = rng.uniform(-0.5 / config.d, 0.5 / config.d, size=(len(neighborhood_ids), config.d))
        Z, _ = training.train_poi_stage(z_init, neighborhood_ids, vocab, bags, config)
        return neighborhood_ids, Z
    raise UsageError(f"unknown embedding {name!r}; expected u2v, sve, poi, or poistats")


def cmd_eval(args) -> int:
    if args.regressor != "pca-lr":
        raise UsageError(f"unknown regressor {args.regressor!r}; only pca-lr is supported")
    workspace = _workspace(args)
    manifest = load_manifest(workspace)
    config = resolve_training_config(manifest, None, {"seed": args.seed})
    ids, Z = _load_representation(workspace, manifest, args.embedding, config)

    target_ids, target_names, values = fileio.read_targets_csv(args.targets)
    row_of = {tid: i for i, tid in enumerate(target_ids)}
    missing = [nid for nid in ids if nid not in row_of]
    extra = sorted(set(target_ids) - set(ids))
    if missing or extra:
        raise ValidationError(f"target/neighborhood id mismatch: missing {missing[:5]}, extra {extra[:5]}")
    targets = values[[row_of[nid] for nid in ids]]

    candidates = []
    if args.pca_components:
        try:
            candidates = [int(c) for c in args.pca_components.split(",") if c.strip()]
        except ValueError:
            raise UsageError(f"--pca-components must be a comma-separated int list, got {args.pca_components!r}") from None
    protocol = analytics.SplitProtocol(repeats=args.repeats, pca_candidates=candidates,
                                       seed=config.seed)
    report = analytics.evaluate_regression(np.asarray(Z, dtype=np.float64), targets,
                                           target_names, protocol)

    (workspace / "reports").mkdir(exist_ok=True)
    csv_path = workspace / "reports" / f"eval_{args.embedding}.csv"
    with open(csv_path, "w", encoding="utf-8") as fh:
        for row in report.to_csv_rows():
            fh.write(",".join(str(v) for v in row) + "\n")
    txt_path = workspace / "reports" / f"eval_{args.embedding}.txt"
    text = f"embedding: {args.embedding}\n{report.format_text()}\n"
    with open(txt_path, "w", encoding="utf-8") as fh:
        fh.write(text)
    print(text, end="")
    print(f"report written to {csv_path}")
    return 0


def cmd_cluster(args) -> int:
    workspace = _workspace(args)
    manifest = load_manifest(workspace)
    config = resolve_training_config(manifest, None, {"seed": args.seed})
    ids, Z = _load_representation(workspace, manifest, args.embedding, config)
    labels, _ = analytics.kmeans(np.asarray(Z, dtype=np.float64), args.k, seed=config.seed)
    (workspace / "reports").mkdir(exist_ok=True)
    out = workspace / "reports" / f"clusters_{args.embedding}.csv"
    with open(out, "w", encoding="utf-8") as fh:
        fh.write("id,cluster\n")
        for nid, lab in zip(ids, labels):
            fh.write(f"{nid},{lab}\n")
    print(f"k-means (k={args.k}) cluster assignments written to {out}")
    return 0


def cmd_similar(args) -> int:
    workspace = _workspace(args)
    manifest = load_manifest(workspace)
    config = resolve_training_config(manifest, None, {})
    ids, Z = _load_representation(workspace, manifest, args.embedding, config)
    row_of = {nid: i for i, nid in enumerate(ids)}
    if args.query not in row_of:
        raise NotFoundError(f"unknown query neighborhood {args.query!r}")

    if args.from_city:
        (centroids,) = _read_ingested(workspace, manifest, "centroids")
        city_of = {cid: city for cid, _, city in centroids}
        if not any(city_of.values()):
            raise ValidationError("centroids carry no city tags; --from-city is unavailable")
        keep = [nid for nid in ids if city_of.get(nid) == args.from_city]
        if not keep:
            raise ValidationError(f"no neighborhoods tagged with city {args.from_city!r}")
    else:
        keep = list(ids)

    Zf = np.asarray(Z, dtype=np.float64)
    ranked = analytics.cosine_rank(Zf[row_of[args.query]], keep,
                                   Zf[[row_of[nid] for nid in keep]],
                                   top_n=args.top, ascending=args.least)
    (workspace / "reports").mkdir(exist_ok=True)
    suffix = f"_{args.from_city}" if args.from_city else ""
    out = workspace / "reports" / f"similar_{args.query}{suffix}.csv"
    with open(out, "w", encoding="utf-8") as fh:
        fh.write("rank,id,cosine\n")
        for rank, (nid, sim) in enumerate(ranked, start=1):
            fh.write(f"{rank},{nid},{sim!r}\n")
    direction = "least" if args.least else "most"
    print(f"{direction} similar to {args.query}:")
    for rank, (nid, sim) in enumerate(ranked, start=1):
        print(f"  {rank}. {nid}  cosine={sim:.6f}")
    print(f"written to {out}")
    return 0


def cmd_export_emb(args) -> int:
    workspace = _workspace(args)
    manifest = load_manifest(workspace)
    if args.embedding not in CHECKPOINTS:
        raise UsageError(f"unknown embedding {args.embedding!r}; expected one of {sorted(CHECKPOINTS)}")
    ids, matrix = _read_checkpoint(workspace, manifest, args.embedding)
    fileio.write_embeddings_tsv(args.out, ids, matrix)
    print(f"wrote {len(ids)} rows to {args.out}")
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="metrovec",
                                     description="Neighborhood embeddings from street-view features and POI text")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic city")
    p.add_argument("--config", default=None, help="key=value synth config file")
    p.add_argument("--out", required=True)
    p.add_argument("--features-format", choices=["bin", "csv"], default="bin")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="validate inputs into a workspace")
    p.add_argument("--workspace", required=True)
    p.add_argument("--poi", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--ids", required=True, help="street-view metadata CSV (id,lat,lon,neighborhood_id)")
    p.add_argument("--centroids", required=True)
    p.add_argument("--assign-missing", action="store_true")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train-sv", help="stage 1: street-view triplet training")
    p.add_argument("--workspace", required=True)
    _config_flags(p)
    p.set_defaults(func=cmd_train_sv)

    p = sub.add_parser("aggregate", help="stage 2: mean street-view embedding per neighborhood")
    p.add_argument("--workspace", required=True)
    _config_flags(p)
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("train-poi", help="stage 3: joint neighborhood/word training")
    p.add_argument("--workspace", required=True)
    p.add_argument("--pretrained", default=None, help="optional pretrained word-vector file")
    _config_flags(p)
    p.set_defaults(func=cmd_train_poi)

    p = sub.add_parser("eval", help="repeated-split PCA+LR regression report")
    p.add_argument("--workspace", required=True)
    p.add_argument("--targets", required=True)
    p.add_argument("--repeats", type=int, default=20)
    p.add_argument("--regressor", default="pca-lr")
    p.add_argument("--embedding", default="u2v", choices=["u2v", "sve", "poi", "poistats"])
    p.add_argument("--pca-components", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("cluster", help="k-means over neighborhood embeddings")
    p.add_argument("--workspace", required=True)
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--embedding", default="u2v", choices=["u2v", "sve"])
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("similar", help="cosine-similarity neighborhood search")
    p.add_argument("--workspace", required=True)
    p.add_argument("--query", required=True)
    p.add_argument("--from-city", default=None)
    p.add_argument("--top", type=int, default=5)
    p.add_argument("--least", action="store_true")
    p.add_argument("--embedding", default="u2v", choices=["u2v", "sve"])
    p.set_defaults(func=cmd_similar)

    p = sub.add_parser("export-emb", help="export a checkpoint as TSV")
    p.add_argument("--workspace", required=True)
    p.add_argument("--embedding", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_emb)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
