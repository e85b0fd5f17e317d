"""Pipeline stages. Each reads its inputs from, and writes its artifacts to, ``run.dir``.

Artifacts that are not JSON get a ``<name>.meta.json`` sidecar holding the
config hash and the full config; JSON artifacts carry ``config_hash`` inline.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import __version__
from .autoencoder import selection_sweep
from .config import Config
from .data import Dataset, synthesize_dataset
from .errors import ConfigError, MissingArtifactError
from .evaluate import Gallery, RetrievalResult, embed, evaluate_embeddings
from .hashing import ItqModel, binarize, fit_itq, save_codes
from .sideinfo import (build_class_embeddings, corpus_ic, load_aliases, load_ic_counts,
                       load_taxonomy, load_word_vectors, save_embeddings, tokenize)
from .trainer import ABLATIONS, fit, load_checkpoint, save_checkpoint

COMMANDS = ("build-sideinfo", "synth-data", "train", "embed", "fit-itq", "retrieve", "eval",
            "ablate", "sweep-sideinfo")
DATA_FILES = ("sketch_features.txt", "image_features.txt", "side_info.txt", "split.txt")


class Run:
    """Paths and provenance for one run directory."""

    def __init__(self, cfg: Config):
        self.cfg = cfg
        self.dir = Path(cfg["run.dir"])
        self.hash = cfg.hash()

    def path(self, name: str) -> Path:
        return self.dir / name

    def output(self, name: str) -> Path:
        self.dir.mkdir(parents=True, exist_ok=True)
        return self.path(name)

    def require(self, name: str, producer: str) -> Path:
        p = self.path(name)
        if not p.exists():
            raise MissingArtifactError(f"{p} does not exist; produce it with `sempcyc {producer}`")
        return p

    def stamp(self, path, command: str) -> None:
        meta = {"artifact": Path(path).name, "command": command, "config_hash": self.hash,
                "package_version": __version__, "config": self.cfg.to_dict()}
        _write_json(Path(str(path) + ".meta.json"), meta)


def _write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_list(path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]


# ---------------------------------------------------------------- data

def synth_data(run: Run) -> dict:
    ds = synthesize_dataset(run.cfg.synth_config())
    out = run.output("data")
    ds.save(out)
    for name in DATA_FILES:
        run.stamp(out / name, "synth-data")
    return {"classes": len(ds.classes), "seen": len(ds.seen), "unseen": len(ds.unseen),
            "sketches": len(ds.X), "images": len(ds.Y), "side_dim": ds.side_dim}


def build_sideinfo(run: Run) -> dict:
    cfg = run.cfg
    text_src, measure = cfg.sources()
    if not cfg["sideinfo.classes"]:
        raise ConfigError("sideinfo.classes must name a class-list file (one class per line)")
    classes = _read_list(cfg["sideinfo.classes"])
    seen = _read_list(cfg["sideinfo.seen"]) if cfg["sideinfo.seen"] else classes
    aliases = load_aliases(cfg["sideinfo.aliases"]) if cfg["sideinfo.aliases"] else {}

    table = None
    if text_src is not None:
        vec_path = cfg[f"sideinfo.{text_src}"]
        if not vec_path:
            raise ConfigError(f"sideinfo.{text_src} must point to a word-vector file")
        vocab = {t for c in classes for t in tokenize(aliases.get(c, c))}
        table = load_word_vectors(vec_path, vocab)
    tax, ic = None, None
    if measure is not None:
        if not cfg["sideinfo.taxonomy"]:
            raise ConfigError("sideinfo.taxonomy must point to a child<TAB>parent edge list")
        tax = load_taxonomy(cfg["sideinfo.taxonomy"])
        if cfg["sideinfo.ic_counts"]:
            ic = corpus_ic(tax, load_ic_counts(cfg["sideinfo.ic_counts"]))

    embs = build_class_embeddings(classes, seen, table=table, tax=tax, measure=measure,
                                  aliases=aliases, ic=ic)
    out = Path(cfg["sideinfo.output"]) if cfg["sideinfo.output"] else run.output("side_info.txt")
    save_embeddings(embs, out)
    run.stamp(out, "build-sideinfo")
    return {"classes": len(embs), "k_text": len(embs[0].text), "k_hier": len(embs[0].hier),
            "k": len(embs[0].combined), "output": str(out)}


def load_dataset(run: Run) -> Dataset:
    cfg = run.cfg
    source = cfg["data.source"]
    if source == "synth":
        paths = [run.require(f"data/{n}", "synth-data") for n in DATA_FILES]
        dim = cfg["synth.feature_dim"]
    elif source == "files":
        paths = []
        for key in ("data.sketch_features", "data.image_features", "data.side_info", "data.split"):
            if key == "data.side_info" and not cfg[key]:
                paths.append(run.require("side_info.txt", "build-sideinfo"))
                continue
            if not cfg[key]:
                raise ConfigError(f"{key} must be set when data.source=files")
            paths.append(Path(cfg[key]))
        dim = cfg["data.feature_dim"]
    else:
        raise ConfigError(f"data.source must be 'synth' or 'files', got {source!r}")
    return Dataset.from_files(*paths, feature_dim=dim,
                              min_images_per_class=cfg["data.min_images_per_class"])


# ---------------------------------------------------------------- training

def train(run: Run) -> dict:
    tc = run.cfg.train_config()
    ds = load_dataset(run)
    ckpt = fit(ds, tc, log_path=run.output("train_log.csv"))
    ckpt.extra = {"config_hash": run.hash}
    save_checkpoint(ckpt, run.output("model.ckpt"))
    run.stamp(run.path("train_log.csv"), "train")
    last = ckpt.log_tail[-1].split(",") if ckpt.log_tail else []
    return {"epochs": ckpt.epoch, "steps": ckpt.state.step,
            "final_total_loss": float(last[-1]) if last else None}


def _load_model(run: Run, ds: Dataset):
    ckpt = load_checkpoint(run.require("model.ckpt", "train"))
    st = ckpt.state
    if st.d_feat != ds.feature_dim:
        raise ConfigError(f"checkpoint expects {st.d_feat}-D features, data has {ds.feature_dim}")
    if st.k != ds.side_dim or st.n_seen != len(ds.seen):
        raise ConfigError("checkpoint was trained on different side information or classes")
    return ckpt


def embed_stage(run: Run) -> dict:
    ds = load_dataset(run)
    state = _load_model(run, ds).state
    out = run.output("embeddings.npz")
    np.savez(out, sketch=embed(state, ds.X, "sketch"), image=embed(state, ds.Y, "image"),
             sketch_labels=np.array(ds.classes)[ds.x_labels],
             image_labels=np.array(ds.classes)[ds.y_labels],
             seen=np.array(ds.seen), unseen=np.array(ds.unseen))
    run.stamp(out, "embed")
    return {"sketches": len(ds.X), "images": len(ds.Y), "M": state.M}


def _load_embeddings(run: Run) -> dict[str, np.ndarray]:
    with np.load(run.require("embeddings.npz", "embed")) as z:
        return {k: z[k] for k in z.files}


def fit_itq_stage(run: Run) -> dict:
    E = _load_embeddings(run)
    seen = set(E["seen"].tolist())
    # one rotation for both modalities, fitted on the seen-class (training) embeddings
    train_emb = np.concatenate([E["sketch"][np.isin(E["sketch_labels"], list(seen))],
                                E["image"][np.isin(E["image_labels"], list(seen))]])
    model = fit_itq(train_emb, iters=run.cfg["itq.iters"], seed=run.cfg["itq.seed"],
                    init=run.cfg["itq.init"])
    out = run.output("itq.npz")
    model.save(out)
    run.stamp(out, "fit-itq")
    for mod in ("sketch", "image"):
        p = run.output(f"codes_{mod}.txt")
        save_codes([f"{mod}{i}" for i in range(len(E[mod]))], binarize(model, E[mod]), p)
        run.stamp(p, "fit-itq")
    return {"bits": model.bits, "final_quantization_loss": model.loss_history[-1]}


def _retrieval(run: Run) -> tuple[RetrievalResult, np.ndarray]:
    cfg = run.cfg
    E = _load_embeddings(run)
    unseen = E["unseen"].tolist()
    q = np.isin(E["sketch_labels"], unseen)
    mode = cfg["eval.mode"]
    if mode == "unseen_only":
        g = np.isin(E["image_labels"], unseen)
    elif mode == "seen_plus_unseen":
        g = np.ones(len(E["image"]), dtype=bool)
    else:
        raise ConfigError(f"eval.mode must be unseen_only or seen_plus_unseen, got {mode!r}")
    itq = None
    if cfg["eval.metric"] == "hamming":
        itq = ItqModel.load(run.require("itq.npz", "fit-itq"))
    elif cfg["eval.metric"] != "euclidean":
        raise ConfigError(f"eval.metric must be euclidean or hamming, got {cfg['eval.metric']!r}")
    gallery = Gallery(E["image"][g], E["image_labels"][g], mode=mode)
    res = evaluate_embeddings(E["sketch"][q], E["sketch_labels"][q], gallery,
                              cfg["eval.metric"], cfg["eval.k"], itq)
    return res, np.flatnonzero(g)


def retrieve(run: Run) -> dict:
    res, gallery_idx = _retrieval(run)
    out = run.output("topk.tsv")
    res.write_topk(out, run.cfg["eval.topk"], [f"image{i}" for i in gallery_idx])
    run.stamp(out, "retrieve")
    return {"queries": len(res.ranked), "topk": run.cfg["eval.topk"], "output": str(out)}


def evaluate_stage(run: Run) -> dict:
    res, gallery_idx = _retrieval(run)
    res.write_metrics(run.output("metrics.json"),
                      {"config_hash": run.hash, "n_queries": len(res.ranked),
                       "n_gallery": len(gallery_idx)})
    res.write_pr(run.output("pr.csv"))
    run.stamp(run.path("pr.csv"), "eval")
    return {"mAP_all": res.mAP, f"precision_at_{res.k}": res.precision_at_k}


# ---------------------------------------------------------------- experiments

def _unseen_map(run: Run, ds: Dataset, ckpt) -> float:
    mode = run.cfg["eval.mode"]
    names = np.array(ds.classes)
    Xq, yq = ds.split("unseen", "sketch")
    Yg, yg = ds.split("unseen" if mode == "unseen_only" else "all", "image")
    gallery = Gallery(embed(ckpt.state, Yg, "image"), names[yg], mode=mode)
    return evaluate_embeddings(embed(ckpt.state, Xq, "sketch"), names[yq], gallery,
                               "euclidean", run.cfg["eval.k"]).mAP


def ablate(run: Run) -> dict:
    ds = load_dataset(run)
    seeds = run.cfg.int_list("ablate.seeds")
    rows = {}
    for ablation in ABLATIONS:
        scores = []
        for seed in seeds:
            ckpt = fit(ds, run.cfg.train_config(ablation=ablation, seed=seed))
            scores.append(_unseen_map(run, ds, ckpt))
        rows[ablation] = scores
    out = run.output("ablation.tsv")
    with open(out, "w", encoding="utf-8") as fh:
        fh.write("ablation\tmAP_mean\tmAP_std\t" + "\t".join(f"seed{s}" for s in seeds) + "\n")
        for name, scores in rows.items():
            fh.write(f"{name}\t{np.mean(scores):.4f}\t{np.std(scores):.4f}\t"
                     + "\t".join(f"{v:.4f}" for v in scores) + "\n")
    run.stamp(out, "ablate")
    _write_json(run.output("ablation.json"),
                {"config_hash": run.hash, "seeds": seeds, "mAP_all": rows,
                 "mAP_mean": {k: float(np.mean(v)) for k, v in rows.items()}})
    return {k: float(np.mean(v)) for k, v in rows.items()}


def sweep_sideinfo(run: Run) -> dict:
    """Train once, rank side-information coordinates by W1 row norm, retrain on each subset."""
    ds = load_dataset(run)
    tc = run.cfg.train_config()
    if not tc.select_side_info:
        raise ConfigError("sweep-sideinfo needs the auto-encoder; ablation "
                          "no_sideinfo_selection has none")
    ratios = run.cfg.float_list("sweep.ratios")
    base = fit(ds, tc)
    try:
        kept = selection_sweep(base.state.aenc, ratios)
    except ValueError as e:
        raise ConfigError(f"sweep.ratios: {e}") from None
    rows = []
    for r in ratios:
        idx = kept[r]
        ckpt = fit(ds.with_side(ds.side[:, idx]), tc)
        rows.append({"ratio": r, "n_kept": int(len(idx)), "kept": idx.tolist(),
                     "mAP_all": _unseen_map(run, ds, ckpt)})
    out = run.output("sweep.csv")
    with open(out, "w", encoding="utf-8") as fh:
        fh.write("ratio,n_kept,mAP_all\n")
        for row in rows:
            fh.write(f"{row['ratio']},{row['n_kept']},{row['mAP_all']!r}\n")
    run.stamp(out, "sweep-sideinfo")
    _write_json(run.output("sweep.json"), {"config_hash": run.hash, "rows": rows})
    return {str(row["ratio"]): row["mAP_all"] for row in rows}


STAGES = {
    "build-sideinfo": build_sideinfo,
    "synth-data": synth_data,
    "train": train,
    "embed": embed_stage,
    "fit-itq": fit_itq_stage,
    "retrieve": retrieve,
    "eval": evaluate_stage,
    "ablate": ablate,
    "sweep-sideinfo": sweep_sideinfo,
}


def run_experiment(cfg: Config, mode: str) -> dict:
    """Execute one stage and return a short summary of what it produced."""
    if mode not in STAGES:
        raise ConfigError(f"unknown mode {mode!r}; choose from {', '.join(STAGES)}")
    return STAGES[mode](Run(cfg))
