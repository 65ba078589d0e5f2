"""Config-driven pipeline stages: synth, featurize, pca, align, evaluate,
sweep, baseline.

Every stage writes its outputs atomically into the configured directory plus
a run manifest (resolved config, input checksums, tool version, wall times,
output list). Data outputs are byte-reproducible for identical configs; the
manifest is not, because it records timings.
"""

from __future__ import annotations

import hashlib
import json
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .adversarial import (EpochRecord, GanConfig, TrainTrace, train_adversarial,
                          train_semi_supervised)
from .alignment import AlignConfig, ProjectionModel, fit_ea_closed, fit_ea_gradient, refine
from .config import ExperimentConfig
from .corpus import (EmbeddingSet, PairSet, average_word_vectors, fit_tfidf,
                     tokenize, transform_tfidf)
from .errors import ConfigError, DataFormatError
from .evaluation import (RetrievalIndex, aggregate_ci, chance_mrr, chance_ndcg,
                         iou_relevance, rank_candidates)
from .formats import (read_embeddings, read_labels, read_model, read_pairs,
                      read_reports, read_word_vectors, write_embeddings,
                      write_fraction_sweep, write_labels, write_metric_rows,
                      write_model, write_pairs, write_section_sweep, write_trace,
                      atomic_write_text)
from .linalg import apply_pca, derive_seed, fit_pca
from .synthetic import SynthConfig, generate, split_supervision


@dataclass
class StageResult:
    stage: str
    outputs: list
    manifest_path: str
    elapsed_s: float
    info: dict = field(default_factory=dict)


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out_dir: Path, stage: str, cfg: ExperimentConfig,
                    inputs, outputs, timings, info) -> Path:
    manifest = {
        "stage": stage,
        "tool_version": __version__,
        "config": cfg.snapshot(),
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": [str(Path(p).name) for p in outputs],
        "timings": timings,
        "info": info,
    }
    path = out_dir / "manifest.json"
    atomic_write_text(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _prepare_out(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataFormatError(f"cannot create output directory {out}: {exc}") from exc
    return out


def _require(value, message: str):
    if value is None:
        raise ConfigError(message)
    return value


def _finish(stage, cfg, out, inputs, outputs, t0, info) -> StageResult:
    elapsed = time.perf_counter() - t0
    manifest = _write_manifest(out, stage, cfg, inputs, outputs,
                               {stage: elapsed}, info)
    return StageResult(stage=stage, outputs=[str(p) for p in outputs],
                       manifest_path=str(manifest), elapsed_s=elapsed, info=info)


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

def run_synth(cfg: ExperimentConfig) -> StageResult:
    t0 = time.perf_counter()
    out = _prepare_out(cfg)
    s = cfg.synth
    sc = SynthConfig(n_train=s.n_train, n_test=s.n_test, latent_dim=s.latent_dim,
                     text_dim=s.text_dim, image_dim=s.image_dim,
                     noise_sigma=s.noise_sigma, ground_truth=s.ground_truth,
                     n_code_clusters=s.n_code_clusters,
                     codes_per_cluster=s.codes_per_cluster, seed=s.seed)
    try:
        sc.validate()
    except ValueError as exc:
        raise ConfigError(f"[synth] {exc}") from exc
    ds = generate(sc)
    outputs = [out / "text.emb", out / "image.emb", out / "pairs.csv",
               out / "labels.csv", out / "wstar.mdl"]
    write_embeddings(ds.text, outputs[0])
    write_embeddings(ds.image, outputs[1])
    write_pairs(ds.pairs, outputs[2])
    write_labels(ds.labels, outputs[3])
    write_model(ProjectionModel(W=ds.w_star, method_tag="ea-closed", seed=s.seed),
                outputs[4])
    info = {"n_train": ds.n_train, "n_test": ds.n_test,
            "ground_truth": s.ground_truth}
    return _finish("synth", cfg, out, [], outputs, t0, info)


# ---------------------------------------------------------------------------
# featurize
# ---------------------------------------------------------------------------

def run_featurize(cfg: ExperimentConfig) -> StageResult:
    t0 = time.perf_counter()
    out = _prepare_out(cfg)
    feats = cfg.features
    if feats.kind == "precomputed":
        raise ConfigError("featurize does nothing for kind=precomputed; "
                          "point [data] text at the precomputed embedding file")
    reports_path = _require(cfg.data.reports, "[data] reports is required for featurize")
    reports = read_reports(reports_path)
    inputs = [reports_path]

    kept, skipped = [], []
    for rep in reports:
        body = rep.sections.get(feats.section)
        if body is None:
            skipped.append(rep.id)
        else:
            kept.append((rep.id, tokenize(body)))
    if not kept:
        raise DataFormatError(
            f"no report has a {feats.section!r} section; featurize corpus is empty")

    ids = [rid for rid, _ in kept]
    docs = [doc for _, doc in kept]
    n_fit = len(docs) - cfg.data.n_test
    if n_fit < 1:
        raise ConfigError(f"[data] n_test={cfg.data.n_test} leaves no training document")

    if feats.kind == "tfidf":
        model = fit_tfidf(docs[:n_fit], ngram_order=feats.ngram, min_df=feats.min_df)
        matrix = transform_tfidf(model, docs).toarray()
        info_extra = {"vocabulary_size": model.size}
    else:  # wordvec
        wv_path = _require(cfg.data.wordvec, "[data] wordvec is required for kind=wordvec")
        table = read_word_vectors(wv_path)
        inputs.append(wv_path)
        rows, oov = [], []
        for rid, doc in kept:
            vec, matched = average_word_vectors(table, doc)
            rows.append(vec)
            if matched == 0:
                oov.append(rid)
        matrix = np.asarray(rows, dtype=np.float64)
        info_extra = {"dimension": table.dimension, "all_oov_ids": oov}
        if oov:
            warnings.warn(f"{len(oov)} documents had no in-table token; zero vectors emitted")

    emb = EmbeddingSet(ids=tuple(ids), vectors=matrix, modality_tag="text")
    emb_path = out / f"features_{feats.section}_{feats.kind}.emb"
    write_embeddings(emb, emb_path)
    outputs = [emb_path]
    if skipped:
        skip_path = out / f"skipped_{feats.section}.txt"
        atomic_write_text(skip_path, "\n".join(skipped) + "\n")
        outputs.append(skip_path)
    info = {"documents": len(ids), "skipped": skipped, **info_extra}
    return _finish("featurize", cfg, out, inputs, outputs, t0, info)


# ---------------------------------------------------------------------------
# pca
# ---------------------------------------------------------------------------

def run_pca(cfg: ExperimentConfig) -> StageResult:
    t0 = time.perf_counter()
    out = _prepare_out(cfg)
    k = cfg.reduction.pca_dim
    outputs, inputs, info = [], [], {}
    for target in cfg.reduction.targets:
        src = getattr(cfg.data, target)
        src = _require(src, f"[data] {target} is required to reduce {target}")
        emb = read_embeddings(src, modality_tag=target)
        inputs.append(src)
        n_fit = emb.n - cfg.data.n_test
        if n_fit < 2:
            raise ConfigError(
                f"pca needs at least 2 training rows in {src}, got {n_fit}")
        if k > min(n_fit, emb.dim):
            raise ConfigError(
                f"[reduction] pca_dim={k} exceeds min(n_train={n_fit}, d={emb.dim}) for {target}")
        # fitted on training rows only; test rows are transformed with the same model
        model = fit_pca(emb.vectors[:n_fit], k)
        reduced = apply_pca(model, emb.vectors)
        dst = out / f"{Path(src).stem}_pca{k}.emb"
        write_embeddings(EmbeddingSet(ids=emb.ids, vectors=reduced,
                                      modality_tag=target), dst)
        outputs.append(dst)
        info[target] = {
            "source": str(src), "k": k,
            "explained_variance": float(np.sum(model.explained_variance_ratio)),
        }
    if not outputs:
        raise ConfigError("[reduction] targets is empty")
    return _finish("pca", cfg, out, inputs, outputs, t0, info)


# ---------------------------------------------------------------------------
# align
# ---------------------------------------------------------------------------

def _load_train_data(cfg: ExperimentConfig, need_pairs: bool):
    text_path = _require(cfg.data.text, "[data] text is required")
    image_path = _require(cfg.data.image, "[data] image is required")
    text = read_embeddings(text_path, "text")
    image = read_embeddings(image_path, "image")
    inputs = [text_path, image_path]
    n_test = cfg.data.n_test
    if n_test >= min(text.n, image.n):
        raise ConfigError(f"[data] n_test={n_test} leaves no training rows")
    text_train = text.take(range(text.n - n_test))
    image_train = image.take(range(image.n - n_test))
    pairs = None
    if cfg.data.pairs is not None:
        all_pairs = read_pairs(cfg.data.pairs)
        inputs.append(cfg.data.pairs)
        train_ids = set(text_train.ids) | set(image_train.ids)
        pairs = PairSet(tuple(p for p in all_pairs.pairs
                              if p[0] in train_ids and p[1] in train_ids))
    if need_pairs and (pairs is None or len(pairs) == 0):
        raise ConfigError(
            f"method {cfg.method.name!r} needs supervision but no usable pairs were given")
    return text, image, text_train, image_train, pairs, inputs


def _train_one(cfg: ExperimentConfig, method, x, y, pairs, text_train, image_train, seed):
    """Train a single model; returns (model, trace)."""
    m = cfg.method
    if method in ("ea-closed", "ea-grad", "semi") and m.fraction < 1.0:
        sup_pairs, _ = split_supervision(pairs, m.fraction,
                                         derive_seed(seed, "supervision"))
    else:
        sup_pairs = pairs
    if method in ("ea-closed", "ea-grad") and (sup_pairs is None or len(sup_pairs) == 0):
        raise ConfigError(f"supervision fraction {m.fraction} leaves no pairs for {method}")

    if method == "ea-closed":
        xi, yi = sup_pairs.column_indices(text_train, image_train)
        model = fit_ea_closed(x[:, xi], y[:, yi])
        model.seed = int(seed)
        return model, TrainTrace()
    if method == "ea-grad":
        xi, yi = sup_pairs.column_indices(text_train, image_train)
        ac = AlignConfig(beta=m.beta, learning_rate=m.lr, epochs=m.epochs,
                         batch_size=m.batch_size,
                         ortho_enabled=bool(m.ortho) if m.ortho is not None else False,
                         refinement_rounds=m.refine_rounds, dictionary_size=m.dict_size)
        model = fit_ea_gradient(x[:, xi], y[:, yi], ac, seed=seed)
        trace = TrainTrace()
        losses = model.extras.pop("losses", [])
        for epoch, loss in enumerate(losses[1:]):  # entry 0 is the initial loss
            trace.append(EpochRecord(epoch=epoch, d_loss=0.0, g_loss=0.0,
                                     ea_loss=loss, val_metric=0.0))
        return model, trace
    gc = GanConfig(d_steps_per_g_step=m.d_steps, learning_rate_d=m.lr_d,
                   learning_rate_g=m.lr, epochs=m.epochs, batch_size=m.batch_size,
                   lam=m.lam, smoothing=m.smoothing, beta=m.beta,
                   ortho_enabled=m.ortho if m.ortho is not None else True,
                   lr_decay=m.lr_decay)
    if method == "adv":
        return train_adversarial(x, y, gc, seed=seed)
    if method == "adv-proc":
        if x.shape[0] != y.shape[0]:
            raise ConfigError(
                f"adv-proc requires equal feature dimensions (got {x.shape[0]} and "
                f"{y.shape[0]}); reduce the text features with the pca stage first")
        model, trace = train_adversarial(x, y, gc, seed=seed)
        disc = model.extras.get("discriminator")
        refined = refine(model.W, x, y, rounds=m.refine_rounds, size=m.dict_size)
        refined.seed = int(seed)
        if disc is not None:
            refined.extras["discriminator"] = disc
        return refined, trace
    if method == "semi":
        if sup_pairs is None:
            sup_pairs = PairSet()
        xi_ids = list(text_train.ids)
        yi_ids = list(image_train.ids)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return train_semi_supervised(x, y, sup_pairs, gc, seed=seed,
                                         text_ids=xi_ids, image_ids=yi_ids)
    raise ConfigError(f"unknown method {method!r}")


def run_align(cfg: ExperimentConfig) -> StageResult:
    t0 = time.perf_counter()
    out = _prepare_out(cfg)
    method = cfg.method.name
    need_pairs = method in ("ea-closed", "ea-grad", "semi")
    text, image, text_train, image_train, pairs, inputs = _load_train_data(cfg, need_pairs)
    x = text_train.columns()
    y = image_train.columns()
    outputs, info_models = [], {}
    for seed in cfg.evaluation.seeds:
        model, trace = _train_one(cfg, method, x, y, pairs, text_train, image_train, seed)
        mpath = out / f"model_seed{seed}.mdl"
        tpath = out / f"trace_seed{seed}.csv"
        write_model(model, mpath)
        write_trace(trace, tpath)
        outputs.extend([mpath, tpath])
        entry = {"epochs_recorded": len(trace)}
        for key in ("chosen_round", "rounds", "round_mean_cosine", "warning"):
            if key in model.extras:
                entry[key] = model.extras[key]
        info_models[f"seed{seed}"] = entry
    info = {"method": method, "models": info_models,
            "n_train": text_train.n, "supervised_pairs": len(pairs) if pairs else 0}
    return _finish("align", cfg, out, inputs, outputs, t0, info)


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------

class _RelCache:
    """Memoizes IoU between label sets (they repeat heavily across items)."""

    def __init__(self, labels):
        self.labels = labels
        self.cache = {}

    def rel(self, a: str, b: str) -> float:
        ka, kb = self.labels[a], self.labels[b]
        key = (ka, kb)
        if key not in self.cache:
            self.cache[key] = iou_relevance(ka, kb)
        return self.cache[key]


def _evaluate_model(w, text_test: EmbeddingSet, image_test: EmbeddingSet,
                    pairs: PairSet, labels, ks, directions, metrics):
    """Metric values for one model: {(metric, direction, k): value}."""
    proj = (w.T @ text_test.columns()).T          # (n, 64) projected text rows
    img = image_test.vectors
    t2i = {}
    i2t = {}
    for a, b in pairs.pairs:
        t2i.setdefault(a, set()).add(b)
        i2t.setdefault(b, set()).add(a)
    out = {}
    rel_cache = _RelCache(labels) if labels is not None else None
    for direction in directions:
        if direction == "T->I":
            queries, q_ids = proj, text_test.ids
            cands, c_ids = img, image_test.ids
            truth = t2i
        else:
            queries, q_ids = img, image_test.ids
            cands, c_ids = proj, text_test.ids
            truth = i2t
        index = RetrievalIndex(ids=c_ids, vectors=cands)
        qnorm = np.linalg.norm(queries, axis=1)
        cnorm = np.where(index.zero_rows, 1.0, index.norms)
        sims = (queries @ index.vectors.T) / np.where(qnorm == 0, 1.0, qnorm)[:, None] / cnorm
        if np.any(index.zero_rows):
            sims[:, index.zero_rows] = 0.0
        sims[qnorm == 0.0, :] = 0.0

        if "similarity" in metrics:
            # mean cosine over the true pairs present in the test rows
            cid_pos = {c: j for j, c in enumerate(c_ids)}
            vals = [sims[qi, cid_pos[t]]
                    for qi, qid in enumerate(q_ids) for t in sorted(truth.get(qid, ()))]
            out[("similarity", direction, None)] = float(np.mean(vals)) if vals else 0.0

        need_rank = ("mrr" in metrics) or ("ndcg" in metrics)
        if not need_rank:
            continue
        cid_pos = {c: j for j, c in enumerate(c_ids)}
        rr = []
        ndcg_vals = {k: [] for k in ks}
        for qi, qid in enumerate(q_ids):
            order = rank_candidates(sims[qi])
            if "mrr" in metrics:
                true_pos = [cid_pos[t] for t in truth.get(qid, ()) if t in cid_pos]
                if true_pos:
                    pos_rank = np.empty(len(c_ids), dtype=np.int64)
                    pos_rank[order] = np.arange(1, len(c_ids) + 1)
                    rr.append(1.0 / int(np.min(pos_rank[true_pos])))
            if "ndcg" in metrics and rel_cache is not None:
                rels = np.array([rel_cache.rel(qid, c_ids[j]) for j in order])
                ideal = np.sort(rels)[::-1]
                for k in ks:
                    kk = min(k, rels.size)
                    pos = np.arange(1, kk + 1)
                    gains = (np.exp2(rels[:kk]) - 1.0) / np.log2(pos + 1.0)
                    igains = (np.exp2(ideal[:kk]) - 1.0) / np.log2(pos + 1.0)
                    idcg = float(np.sum(igains))
                    ndcg_vals[k].append(float(np.sum(gains)) / idcg if idcg > 0 else 0.0)
        if "mrr" in metrics:
            out[("mrr", direction, None)] = float(np.mean(rr)) if rr else 0.0
        if "ndcg" in metrics and rel_cache is not None:
            for k in ks:
                out[("ndcg", direction, k)] = float(np.mean(ndcg_vals[k]))
    return out


def _load_eval_data(cfg: ExperimentConfig):
    text_path = _require(cfg.data.text, "[data] text is required")
    image_path = _require(cfg.data.image, "[data] image is required")
    pairs_path = _require(cfg.data.pairs, "[data] pairs is required for evaluation")
    text = read_embeddings(text_path, "text")
    image = read_embeddings(image_path, "image")
    all_pairs = read_pairs(pairs_path)
    inputs = [text_path, image_path, pairs_path]
    n_test = cfg.data.n_test
    if n_test < 1:
        raise ConfigError("[data] n_test must be >= 1 for evaluation")
    if n_test > min(text.n, image.n):
        raise ConfigError(f"[data] n_test={n_test} exceeds available rows")
    text_test = text.take(range(text.n - n_test, text.n))
    image_test = image.take(range(image.n - n_test, image.n))
    test_ids = set(text_test.ids) | set(image_test.ids)
    pairs = PairSet(tuple(p for p in all_pairs.pairs
                          if p[0] in test_ids and p[1] in test_ids))
    if len(pairs) == 0:
        raise DataFormatError("no true pairs fall inside the test rows")
    labels = None
    if "ndcg" in cfg.evaluation.metrics:
        labels_path = cfg.data.labels
        if labels_path is None:
            raise ConfigError("[data] labels is required when ndcg is evaluated")
        labels = read_labels(labels_path)
        inputs.append(labels_path)
        missing = [i for i in (list(text_test.ids) + list(image_test.ids))
                   if i not in labels]
        if missing:
            raise DataFormatError(
                f"{len(missing)} evaluated ids missing from the label file "
                f"(first: {missing[0]!r})")
    return text_test, image_test, pairs, labels, inputs


def _model_files(cfg: ExperimentConfig):
    models = _require(cfg.data.models, "[data] models is required for evaluation")
    mpath = Path(models)
    if mpath.is_dir():
        files = sorted(mpath.glob("model_seed*.mdl"))
        if not files:
            raise DataFormatError(f"no model_seed*.mdl files in {mpath}")
        return files
    if not mpath.exists():
        raise DataFormatError(f"model path {mpath} does not exist")
    return [mpath]


def run_evaluate(cfg: ExperimentConfig) -> StageResult:
    t0 = time.perf_counter()
    out = _prepare_out(cfg)
    text_test, image_test, pairs, labels, inputs = _load_eval_data(cfg)
    model_files = _model_files(cfg)
    inputs.extend(model_files)
    ks = cfg.evaluation.k
    per_seed_rows = []
    collected = {}
    for mf in model_files:
        model = read_model(mf)
        if model.W.shape[0] != text_test.dim or model.W.shape[1] != image_test.dim:
            raise ConfigError(
                f"model {mf} is {model.W.shape} but features are "
                f"{text_test.dim} (text) and {image_test.dim} (image)")
        vals = _evaluate_model(model.W, text_test, image_test, pairs, labels,
                               ks, cfg.evaluation.directions, cfg.evaluation.metrics)
        for (metric, direction, k), v in vals.items():
            per_seed_rows.append((metric, direction, k, model.seed, v))
            collected.setdefault((metric, direction, k), []).append(v)
    summary_rows = []
    for (metric, direction, k), values in collected.items():
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            rep = aggregate_ci(values, metric=metric, k=k, direction=direction)
        summary_rows.append((metric, direction, k, rep.mean, rep.ci95_halfwidth))
    per_seed_path = out / "metrics_per_seed.csv"
    summary_path = out / "metrics_summary.csv"
    write_metric_rows(per_seed_rows, per_seed_path, summary=False)
    write_metric_rows(summary_rows, summary_path, summary=True)
    outputs = [per_seed_path, summary_path]
    info = {"models": [str(m) for m in model_files], "n_test_pairs": len(pairs)}
    return _finish("evaluate", cfg, out, inputs, outputs, t0, info)


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

def run_sweep(cfg: ExperimentConfig) -> StageResult:
    if cfg.sweep.kind == "fraction":
        return _run_fraction_sweep(cfg)
    return _run_section_sweep(cfg)


def _run_fraction_sweep(cfg: ExperimentConfig) -> StageResult:
    t0 = time.perf_counter()
    out = _prepare_out(cfg)
    text, image, text_train, image_train, pairs, inputs = _load_train_data(cfg, True)
    n_test = cfg.data.n_test
    if n_test < 1:
        raise ConfigError("[data] n_test must be >= 1 for a sweep")
    text_test = text.take(range(text.n - n_test, text.n))
    image_test = image.take(range(image.n - n_test, image.n))
    test_ids = set(text_test.ids) | set(image_test.ids)
    all_pairs = read_pairs(cfg.data.pairs)
    test_pairs = PairSet(tuple(p for p in all_pairs.pairs
                               if p[0] in test_ids and p[1] in test_ids))
    labels = None
    if "ndcg" in cfg.evaluation.metrics:
        labels = read_labels(_require(cfg.data.labels,
                                      "[data] labels is required when ndcg is evaluated"))
        inputs.append(cfg.data.labels)
    x, y = text_train.columns(), image_train.columns()
    m = cfg.method
    outputs = []
    rows_per_cell = []
    collected = {}
    for f_idx, fraction in enumerate(cfg.sweep.fractions):
        for r_idx in range(cfg.sweep.repeats):
            seed = derive_seed(cfg.sweep.base_seed, f_idx, r_idx)
            sup_pairs, _ = split_supervision(pairs, fraction,
                                             derive_seed(seed, "supervision"))
            gc = GanConfig(d_steps_per_g_step=m.d_steps, learning_rate_d=m.lr_d,
                           learning_rate_g=m.lr, epochs=m.epochs,
                           batch_size=m.batch_size, lam=m.lam, smoothing=m.smoothing,
                           beta=m.beta, ortho_enabled=m.ortho if m.ortho is not None else True,
                           lr_decay=m.lr_decay)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                model, trace = train_semi_supervised(
                    x, y, sup_pairs, gc, seed=seed,
                    text_ids=list(text_train.ids), image_ids=list(image_train.ids))
            mpath = out / f"model_f{f_idx}_r{r_idx}.mdl"
            tpath = out / f"trace_f{f_idx}_r{r_idx}.csv"
            write_model(model, mpath)
            write_trace(trace, tpath)
            outputs.extend([mpath, tpath])
            vals = _evaluate_model(model.W, text_test, image_test, test_pairs,
                                   labels, cfg.evaluation.k,
                                   cfg.evaluation.directions, cfg.evaluation.metrics)
            for (metric, direction, k), v in vals.items():
                rows_per_cell.append((fraction, metric, direction, k, r_idx, v))
                collected.setdefault((fraction, metric, direction, k), []).append(v)
    summary_rows = []
    for (fraction, metric, direction, k), values in sorted(
            collected.items(), key=lambda kv: (kv[0][0], kv[0][1], kv[0][2], str(kv[0][3]))):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            rep = aggregate_ci(values)
        summary_rows.append((fraction, metric, direction, k, rep.mean, rep.ci95_halfwidth))
    sweep_path = out / "fraction_sweep.csv"
    write_fraction_sweep(summary_rows, sweep_path)
    outputs.append(sweep_path)
    info = {"fractions": list(cfg.sweep.fractions), "repeats": cfg.sweep.repeats,
            "base_seed": cfg.sweep.base_seed}
    return _finish("sweep", cfg, out, inputs, outputs, t0, info)


def _run_section_sweep(cfg: ExperimentConfig) -> StageResult:
    """Featurize -> align -> evaluate per report section; emits one summary row
    block per section for bar-chart style comparison."""
    t0 = time.perf_counter()
    out = _prepare_out(cfg)
    reports_path = _require(cfg.data.reports, "[data] reports is required for a section sweep")
    image_path = _require(cfg.data.image, "[data] image is required")
    pairs_path = _require(cfg.data.pairs, "[data] pairs is required")
    reports = read_reports(reports_path)
    image = read_embeddings(image_path, "image")
    all_pairs = read_pairs(pairs_path)
    inputs = [reports_path, image_path, pairs_path]
    labels = None
    if "ndcg" in cfg.evaluation.metrics:
        labels = read_labels(_require(cfg.data.labels,
                                      "[data] labels is required when ndcg is evaluated"))
        inputs.append(cfg.data.labels)
    n_test = cfg.data.n_test
    if n_test < 1:
        raise ConfigError("[data] n_test must be >= 1 for a sweep")
    feats = cfg.features
    m = cfg.method
    outputs, rows = [], []
    for section in cfg.sweep.sections:
        kept = [(r.id, tokenize(r.sections[section])) for r in reports
                if section in r.sections]
        if not kept:
            raise DataFormatError(f"no report has a {section!r} section")
        ids = [rid for rid, _ in kept]
        docs = [d for _, d in kept]
        n_fit = len(docs) - n_test
        if n_fit < 1:
            raise ConfigError(f"n_test={n_test} leaves no training document for {section}")
        tf = fit_tfidf(docs[:n_fit], ngram_order=feats.ngram, min_df=feats.min_df)
        text = EmbeddingSet(ids=tuple(ids),
                            vectors=transform_tfidf(tf, docs).toarray(),
                            modality_tag="text")
        text_train = text.take(range(text.n - n_test))
        image_train = image.take(range(image.n - n_test))
        text_test = text.take(range(text.n - n_test, text.n))
        image_test = image.take(range(image.n - n_test, image.n))
        train_ids = set(text_train.ids) | set(image_train.ids)
        test_ids = set(text_test.ids) | set(image_test.ids)
        train_pairs = PairSet(tuple(p for p in all_pairs.pairs
                                    if p[0] in train_ids and p[1] in train_ids))
        test_pairs = PairSet(tuple(p for p in all_pairs.pairs
                                   if p[0] in test_ids and p[1] in test_ids))
        if len(train_pairs) == 0 or len(test_pairs) == 0:
            raise DataFormatError(f"section {section!r} leaves no usable pairs")
        collected = {}
        for r_idx, seed in enumerate(cfg.evaluation.seeds):
            run_seed = derive_seed(cfg.sweep.base_seed, section, r_idx)
            sup_pairs, _ = split_supervision(train_pairs, m.fraction,
                                             derive_seed(run_seed, "supervision"))
            if len(sup_pairs) == 0:
                raise ConfigError(f"fraction {m.fraction} leaves no supervised pairs")
            xi, yi = sup_pairs.column_indices(text_train, image_train)
            model = fit_ea_closed(text_train.columns()[:, xi], image_train.columns()[:, yi])
            vals = _evaluate_model(model.W, text_test, image_test, test_pairs,
                                   labels, cfg.evaluation.k,
                                   cfg.evaluation.directions, cfg.evaluation.metrics)
            for key, v in vals.items():
                collected.setdefault(key, []).append(v)
        for (metric, direction, k), values in collected.items():
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                rep = aggregate_ci(values)
            rows.append((section, metric, direction, k, rep.mean, rep.ci95_halfwidth))
    sweep_path = out / "section_sweep.csv"
    write_section_sweep(rows, sweep_path)
    outputs.append(sweep_path)
    info = {"sections": list(cfg.sweep.sections)}
    return _finish("sweep", cfg, out, inputs, outputs, t0, info)


# ---------------------------------------------------------------------------
# baseline
# ---------------------------------------------------------------------------

def run_baseline(cfg: ExperimentConfig) -> StageResult:
    t0 = time.perf_counter()
    out = _prepare_out(cfg)
    b = cfg.baseline
    seeds = cfg.evaluation.seeds
    inputs = []
    if b.metric == "mrr":
        report = chance_mrr(b.n_candidates, b.n_queries, seeds)
        k = None
    else:
        labels_path = _require(cfg.data.labels, "[data] labels is required for an ndcg baseline")
        labels = read_labels(labels_path)
        inputs.append(labels_path)
        ids = list(labels.keys())
        report = chance_ndcg(labels, ids, ids, b.k, b.n_queries, seeds)
        k = b.k
    per_seed = [(report.metric, "", k, seed, v) for seed, v in zip(seeds, report.per_seed)]
    summary = [(report.metric, "", k, report.mean, report.ci95_halfwidth)]
    per_seed_path = out / "baseline_per_seed.csv"
    summary_path = out / "baseline_summary.csv"
    write_metric_rows(per_seed, per_seed_path, summary=False)
    write_metric_rows(summary, summary_path, summary=True)
    outputs = [per_seed_path, summary_path]
    info = {"metric": b.metric, "n_candidates": b.n_candidates,
            "n_queries": b.n_queries, "mean": report.mean}
    return _finish("baseline", cfg, out, inputs, outputs, t0, info)


STAGES = {
    "synth": run_synth,
    "featurize": run_featurize,
    "pca": run_pca,
    "align": run_align,
    "evaluate": run_evaluate,
    "sweep": run_sweep,
    "baseline": run_baseline,
}


def run_stage(stage: str, cfg: ExperimentConfig) -> StageResult:
    if stage not in STAGES:
        raise ConfigError(f"unknown stage {stage!r}; expected one of {sorted(STAGES)}")
    return STAGES[stage](cfg)
