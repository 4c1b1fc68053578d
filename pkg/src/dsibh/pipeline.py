"""End-to-end experiment orchestration behind the service endpoints.

Every function here is a pure artifact producer: given a validated
config it reads/writes files under the configured output directory and
returns a JSON-safe summary. Reruns with identical inputs produce
byte-identical artifacts; metrics files carry a full config echo and no
timestamps.
"""

from __future__ import annotations

import csv as csv_mod
import json
import os

import numpy as np

from . import dataio, hamming, nets, renyi, schemas, trainer
from .errors import FormatError, InvalidArgumentError

HOLDOUT_ROWS = 256


def run_synth(req: schemas.SynthRequest) -> schemas.SynthResponse:
    cfg = req.synth
    spec = dataio.SynthSpec(
        class_count=cfg.classes,
        samples_per_class=cfg.per_class,
        d1=cfg.d1,
        d2=cfg.d2,
        label_dim=cfg.label_dim,
        noise_sigma=cfg.noise,
        multilabel_rate=cfg.multilabel_rate,
        seed=cfg.seed,
    )
    bundle = dataio.generate_synthetic(spec)
    os.makedirs(req.out_dir, exist_ok=True)
    files = {
        "x1": os.path.join(req.out_dir, "x1.dsibf"),
        "x2": os.path.join(req.out_dir, "x2.dsibf"),
        "labels": os.path.join(req.out_dir, "labels.csv"),
        "synth": os.path.join(req.out_dir, "synth.json"),
    }
    dataio.save_features(files["x1"], bundle.x1)
    dataio.save_features(files["x2"], bundle.x2)
    dataio.save_labels(files["labels"], bundle.y)
    echo = cfg.model_dump(mode="json")
    echo["rows"] = bundle.n
    _write_json(files["synth"], echo)
    return schemas.SynthResponse(
        files=files,
        rows=bundle.n,
        d1=bundle.x1.shape[1],
        d2=bundle.x2.shape[1],
        label_dim=bundle.y.shape[1],
    )


def resolve_bundle(cfg: schemas.ExperimentConfig) -> dataio.DatasetBundle:
    if cfg.synth is not None:
        s = cfg.synth
        spec = dataio.SynthSpec(
            class_count=s.classes,
            samples_per_class=s.per_class,
            d1=s.d1,
            d2=s.d2,
            label_dim=s.label_dim,
            noise_sigma=s.noise,
            multilabel_rate=s.multilabel_rate,
            seed=s.seed,
        )
        bundle = dataio.generate_synthetic(spec)
    else:
        bundle = dataio.DatasetBundle(
            dataio.load_features(cfg.data.x1),
            dataio.load_features(cfg.data.x2),
            dataio.load_labels(cfg.data.labels),
        )
    return dataio.split(bundle, cfg.split.query_count, cfg.split.train_count, cfg.split.seed)


def run_train(cfg: schemas.ExperimentConfig, threads: int = 1) -> schemas.TrainResponse:
    bundle = resolve_bundle(cfg)
    tc = cfg.train.to_train_config()
    shapes = cfg.nets.to_shapes()
    os.makedirs(cfg.out_dir, exist_ok=True)
    ckpt_dir = os.path.join(cfg.out_dir, "checkpoints") if cfg.checkpoints else None
    state = trainer.train(bundle, tc, shapes, checkpoint_dir=ckpt_dir)

    files = {
        "imgnet": os.path.join(cfg.out_dir, "imgnet.dsibm"),
        "txtnet": os.path.join(cfg.out_dir, "txtnet.dsibm"),
        "img_codes": os.path.join(cfg.out_dir, "img_codes.dsibc"),
        "txt_codes": os.path.join(cfg.out_dir, "txt_codes.dsibc"),
        "metrics": os.path.join(cfg.out_dir, "metrics.json"),
    }
    nets.save_model(state.imgnet, files["imgnet"])
    nets.save_model(state.txtnet, files["txtnet"])

    ri = bundle.retrieval_indices
    img_db = hamming.encode(
        state.imgnet, bundle.x1[ri], labels=bundle.y[ri], ids=ri.astype(np.uint64)
    )
    txt_db = hamming.encode(
        state.txtnet, bundle.x2[ri], labels=bundle.y[ri], ids=ri.astype(np.uint64)
    )
    hamming.save_db(files["img_codes"], img_db)
    hamming.save_db(files["txt_codes"], txt_db)

    qi = bundle.query_indices
    map_scores: dict[str, float] = {}
    skipped: dict[str, int] = {}
    if qi.size:
        img_q = hamming.encode(
            state.imgnet, bundle.x1[qi], labels=bundle.y[qi], ids=qi.astype(np.uint64)
        )
        txt_q = hamming.encode(
            state.txtnet, bundle.x2[qi], labels=bundle.y[qi], ids=qi.astype(np.uint64)
        )
        files["img_query_codes"] = os.path.join(cfg.out_dir, "img_query_codes.dsibc")
        files["txt_query_codes"] = os.path.join(cfg.out_dir, "txt_query_codes.dsibc")
        hamming.save_db(files["img_query_codes"], img_q)
        hamming.save_db(files["txt_query_codes"], txt_q)
        per_direction = {"x->r": (img_q, txt_db), "r->x": (txt_q, img_db)}
        for direction in cfg.eval_directions:
            queries, db = per_direction[direction]
            res = hamming.mean_average_precision(queries, db, threads=threads)
            map_scores[direction] = res.map
            skipped[direction] = res.skipped

    metrics = {
        "config": cfg.model_dump(mode="json"),
        "rounds_run": state.rounds_run,
        "converged": state.converged,
        "loss_history": state.loss_history,
        "map": map_scores,
        "skipped_queries": skipped,
        "holdout_mi": _holdout_mi(bundle, state, tc),
        "train_code_agreement": _train_code_agreement(bundle, state),
    }
    _write_json(files["metrics"], metrics)
    if cfg.csv and map_scores:
        files["eval_csv"] = os.path.join(cfg.out_dir, "eval.csv")
        with open(files["eval_csv"], "w", newline="") as fh:
            writer = csv_mod.writer(fh)
            writer.writerow(["direction", "bits", "map", "skipped"])
            for direction in cfg.eval_directions:
                writer.writerow(
                    [direction, tc.code_bits, map_scores[direction], skipped[direction]]
                )
    return schemas.TrainResponse(files=files, metrics=metrics)


def _holdout_mi(bundle, state, tc) -> dict[str, float]:
    """Compression estimate I(features; relaxed codes) on rows the
    trainer never saw, deterministically subsampled."""
    held = bundle.query_indices
    if held.size < 2:
        held = np.setdiff1d(bundle.retrieval_indices, bundle.train_indices)
    if held.size < 2:
        return {}
    rng = np.random.default_rng([tc.seed, 7])
    take = min(HOLDOUT_ROWS, held.size)
    rows = held[np.sort(rng.choice(held.size, size=take, replace=False))]
    out = {}
    for name, net, x in (("img", state.imgnet, bundle.x1), ("txt", state.txtnet, bundle.x2)):
        feats = x[rows]
        codes = nets.forward(net, feats)
        out[name] = renyi.mutual_information(
            feats,
            codes,
            renyi.select_sigma(feats),
            renyi.select_sigma(codes),
            alpha=tc.alpha,
        )
    return out


def _train_code_agreement(bundle, state) -> float:
    """Fraction of matching bits between the two modalities' binary
    codes over the training pairs."""
    ti = bundle.train_indices
    if ti.size == 0:
        ti = np.arange(bundle.n)
    img_bits = nets.forward(state.imgnet, bundle.x1[ti]) >= 0.0
    txt_bits = nets.forward(state.txtnet, bundle.x2[ti]) >= 0.0
    return float((img_bits == txt_bits).mean())


def run_encode(req: schemas.EncodeRequest) -> schemas.EncodeResponse:
    params = nets.load_model(req.model_path)
    feats = dataio.load_features(req.features_path)
    labels = dataio.load_labels(req.labels_path) if req.labels_path else None
    if labels is not None and labels.shape[0] != feats.shape[0]:
        raise InvalidArgumentError(
            f"{labels.shape[0]} label rows for {feats.shape[0]} feature rows"
        )
    db = hamming.encode(params, feats, labels=labels)
    hamming.save_db(req.out_path, db)
    return schemas.EncodeResponse(
        path=req.out_path, count=db.count, code_bits=db.code_bits
    )


def run_retrieve(req: schemas.RetrieveRequest) -> schemas.RetrieveResponse:
    params = nets.load_model(req.model_path)
    feats = dataio.load_features(req.query_features_path)
    db = hamming.load_db(req.db_path)
    if params.code_bits != db.code_bits:
        raise FormatError(
            f"model emits {params.code_bits}-bit codes, db holds {db.code_bits}-bit codes"
        )
    if req.k < 0:
        raise InvalidArgumentError("k must be >= 0")
    words = hamming.pack_codes(nets.forward(params, feats))
    results = []
    for i in range(words.shape[0]):
        ranked = hamming.retrieve(words[i], db, k=req.k, query_id=i)
        items = [
            schemas.RetrievedItem(id=int(item_id), distance=int(dist))
            for item_id, dist in zip(ranked.ids, ranked.distances)
        ]
        results.append(schemas.QueryResult(query_id=i, items=items))
    return schemas.RetrieveResponse(code_bits=db.code_bits, results=results)


def run_eval(req: schemas.EvalRequest) -> schemas.EvalResponse:
    queries = hamming.load_db(req.query_db_path)
    db = hamming.load_db(req.db_path)
    if queries.code_bits != db.code_bits:
        raise FormatError(
            f"bit-length mismatch between DBs: queries {queries.code_bits}, "
            f"db {db.code_bits}"
        )
    res = hamming.mean_average_precision(
        queries, db, radius=req.radius, threads=req.threads
    )
    if req.csv_path:
        with open(req.csv_path, "w", newline="") as fh:
            writer = csv_mod.writer(fh)
            writer.writerow(["direction", "bits", "map", "skipped"])
            writer.writerow([req.direction, db.code_bits, res.map, res.skipped])
    return schemas.EvalResponse(
        direction=req.direction,
        code_bits=db.code_bits,
        map=res.map,
        evaluated=res.evaluated,
        skipped=res.skipped,
    )


def _write_json(path, payload) -> None:
    with open(path, "w") as fh:
        fh.write(json.dumps(payload, sort_keys=True, indent=2) + "\n")
