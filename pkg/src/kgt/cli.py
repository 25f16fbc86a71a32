"""``kgt`` command line: prepare | train-kge | embed-text | train | eval | ablate | sweep-gamma | report.

Every command works inside one workspace directory (``--out``), one
subdirectory per stage, and leaves a ``run_manifest.json`` there with the
inputs, seed, git revision, timestamps and a sha256 of every artifact.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import datetime as dt
import json
import logging
import os
import subprocess
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .backbone import NumericalError, PromptTooLongError
from .checkpoint import CheckpointError, load_checkpoint, read_metrics
from .config import ConfigError, RunConfig, load_config, parse_config
from .evaluator import evaluate, sweep_gamma, write_table
from .feature_bank import (
    BANK_FILES,
    EmbeddingEndpoint,
    EmbeddingServiceError,
    FeatureBank,
    FeatureFormatError,
    encode_text_deterministic,
    encode_text_remote,
    entity_text_inputs,
    file_sha256,
    load_features,
    relation_text_inputs,
    save_features,
)
from .kg_store import (
    FILTER_POLICIES,
    DatasetError,
    DatasetSchema,
    FilterIndex,
    augment_inverses,
    build_filter_index,
    load_dataset,
)
from .struct_embedder import corruption_auc, save_kge, train_kge
from .struct_embedder import NonFiniteLossError as KgeNonFiniteLossError
from .synthetic import write_synthetic_dataset
from .trainer import (
    ABLATION_LABELS,
    AblationConflictError,
    AblationSetting,
    NonFiniteLossError,
    apply_ablation,
    train,
)

log = logging.getLogger("kgt")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

STAGES = {"prepare": "prepare", "kge": "train-kge", "text": "embed-text", "train": "train",
          "eval": "eval", "ablate": "ablate", "sweep": "sweep-gamma"}


class UsageError(ValueError):
    pass


class MissingPrerequisiteError(DatasetError):
    def __init__(self, path: Path, command: str):
        super().__init__(f"missing {path}; run `kgt {command}` first")
        self.path, self.command = path, command


# --- run manifest --------------------------------------------------------------------


def git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], capture_output=True,
                             text=True, timeout=10, cwd=Path(__file__).resolve().parent)
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() if out.returncode == 0 and out.stdout.strip() else "unknown"


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    command: str
    out_dir: str
    dataset: str | None = None
    config: str | None = None
    seed: int | None = None
    argv: list[str] = field(default_factory=list)
    git_describe: str = field(default_factory=git_describe)
    version: str = __version__
    started: str = field(default_factory=_now)
    finished: str | None = None
    files: dict[str, str] = field(default_factory=dict)

    def finish(self) -> Path:
        """Hash every file under ``out_dir`` and write ``run_manifest.json``."""
        root = Path(self.out_dir)
        self.finished = _now()
        self.files = {str(p.relative_to(root)): file_sha256(p) for p in sorted(root.rglob("*"))
                      if p.is_file() and p.name != "run_manifest.json"}
        path = root / "run_manifest.json"
        path.write_text(json.dumps(dataclasses.asdict(self), indent=2))
        return path


# --- workspace helpers ---------------------------------------------------------------


class Workspace:
    def __init__(self, root, config_path=None):
        self.root = Path(root)
        self._config_path = config_path

    def stage(self, name: str) -> Path:
        return self.root / name

    def require(self, path: Path, stage: str) -> Path:
        if not path.exists():
            raise MissingPrerequisiteError(path, STAGES[stage])
        return path

    # prepared graph
    def graph_info(self) -> dict:
        return json.loads(self.require(self.stage("prepare") / "graph.json", "prepare").read_text())

    def config(self) -> RunConfig:
        if self._config_path is not None:
            return load_config(self._config_path)
        stored = self.stage("prepare") / "config.ini"
        return load_config(stored) if stored.exists() else RunConfig()

    def config_source(self) -> str | None:
        if self._config_path is not None:
            return str(Path(self._config_path).resolve())
        stored = self.stage("prepare") / "config.ini"
        return str(stored.resolve()) if stored.exists() else None

    def graph(self):
        info = self.graph_info()
        kg = load_dataset(info["dataset_dir"], DatasetSchema(**info["schema"]))
        return augment_inverses(kg)

    def filter_index(self, kg, policy: str | None = None) -> FilterIndex:
        stored = self.stage("prepare") / "filter_index.json"
        if policy is None and stored.exists():
            return FilterIndex.from_json(json.loads(stored.read_text()))
        return build_filter_index(kg, policy or "all-splits")

    # features
    def feature_paths(self) -> dict[str, Path]:
        paths = {}
        for name, fname in BANK_FILES.items():
            stage = "text" if name.endswith("_text") else "kge"
            paths[name] = self.require(self.stage(stage) / fname, stage)
        return paths

    def bank(self) -> tuple[FeatureBank, dict[str, Path]]:
        paths = self.feature_paths()
        return FeatureBank(**{name: load_features(p) for name, p in paths.items()}), paths


def _seeded(cfg: RunConfig, seed: int | None) -> RunConfig:
    if seed is None:
        return cfg
    return dataclasses.replace(cfg, kge=dataclasses.replace(cfg.kge, seed=seed),
                               train=dataclasses.replace(cfg.train, seed=seed))


def _train_config(cfg: RunConfig, args, ablation: str | None = None):
    tc = cfg.train
    changes = {}
    if ablation is not None:
        changes["ablation"] = ablation
    if getattr(args, "mode", None):
        changes["prompt_mode"] = args.mode
    tc = dataclasses.replace(tc, **changes)
    try:
        AblationSetting(tc.ablation)
    except ValueError:
        raise UsageError(f"unknown ablation {tc.ablation!r}; choose from {[s.value for s in AblationSetting]}")
    return tc


def _parse_gammas(text: str) -> list[float]:
    try:
        gammas = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"--gammas must be a comma-separated list of numbers, got {text!r}")
    if not gammas:
        raise UsageError("--gammas is empty")
    return gammas


def _print_metrics(title: str, summary: dict) -> None:
    print(title)
    for view, agg in summary["aggregates"].items():
        print(f"  {view:<7} MRR {agg['mrr']:.4f}  H@1 {agg['hits@1']:.4f}  H@3 {agg['hits@3']:.4f}"
              f"  H@10 {agg['hits@10']:.4f}  (n={agg['count']})")
    if summary.get("filter_note"):
        print(f"  note: {summary['filter_note']}")


# --- commands ------------------------------------------------------------------------


def cmd_prepare(args, ws: Workspace) -> None:
    if not args.dataset:
        raise UsageError("prepare needs --dataset (a directory or 'synthetic')")
    out = ws.stage("prepare")
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest("prepare", str(out), dataset=args.dataset, config=args.config, seed=args.seed,
                           argv=sys.argv[1:])
    if args.config:
        text = Path(args.config).read_text(encoding="utf-8") if Path(args.config).exists() else None
        if text is None:
            raise ConfigError(f"config file {args.config} does not exist")
        parse_config(text, args.config)  # validate before storing
        (out / "config.ini").write_text(text, encoding="utf-8")
    cfg = ws.config()
    if args.dataset == "synthetic":
        dataset_dir = out / "dataset"
        write_synthetic_dataset(dataset_dir, seed=args.seed or 0)
        schema = DatasetSchema()
    else:
        dataset_dir = Path(args.dataset)
        if not dataset_dir.is_dir():
            raise DatasetError(f"dataset directory {dataset_dir} does not exist")
        schema = cfg.dataset
    base = load_dataset(dataset_dir, schema)
    kg = augment_inverses(base)
    policy = args.policy or "all-splits"
    index = build_filter_index(kg, policy)
    (out / "filter_index.json").write_text(json.dumps(index.to_json()))
    from .backbone import default_base_tokens, extend_vocabulary

    vocab = extend_vocabulary(kg, default_base_tokens(kg))
    (out / "vocab.json").write_text(json.dumps({
        "base_tokens": list(vocab.base_tokens), "n_entities": vocab.n_entities,
        "n_relations": vocab.n_relations, "size": len(vocab)}, indent=2))
    info = {"dataset_dir": str(dataset_dir.resolve()), "schema": dataclasses.asdict(schema),
            "filter_policy": policy, "summary": kg.summary()}
    (out / "graph.json").write_text(json.dumps(info, indent=2))
    manifest.finish()
    s = kg.summary()
    print(f"prepared {dataset_dir}: {s}")
    print(f"vocabulary {len(vocab)} tokens; filter index ({policy}) with {len(index)} queries -> {out}")


def cmd_train_kge(args, ws: Workspace) -> None:
    cfg = _seeded(ws.config(), args.seed)
    kg = ws.graph()
    out = ws.stage("kge")
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest("train-kge", str(out), dataset=ws.graph_info()["dataset_dir"],
                           config=ws.config_source(), seed=cfg.kge.seed, argv=sys.argv[1:])
    start = time.perf_counter()
    model, history = train_kge(kg, cfg.kge, return_history=True)
    save_kge(model, out, cfg.kge)
    metrics = {"train_auc": corruption_auc(model, kg, "train"),
               "final_loss": history[-1] if history else None,
               "epochs": cfg.kge.epochs, "seconds": time.perf_counter() - start}
    (out / "metrics.json").write_text(json.dumps(metrics, indent=2))
    manifest.finish()
    print(f"{cfg.kge.kind} d_s={cfg.kge.d_s}: train AUC {metrics['train_auc']:.4f} -> {out}")


def cmd_embed_text(args, ws: Workspace) -> None:
    cfg = ws.config()
    kg = ws.graph()
    out = ws.stage("text")
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest("embed-text", str(out), dataset=ws.graph_info()["dataset_dir"],
                           config=ws.config_source(), seed=cfg.text.seed, argv=sys.argv[1:])
    ent_texts, rel_texts = entity_text_inputs(kg), relation_text_inputs(kg)
    if args.offline:
        ent = encode_text_deterministic(ent_texts, cfg.text.dim, cfg.text.seed)
        rel = encode_text_deterministic(rel_texts, cfg.text.dim, cfg.text.seed)
        meta = {"encoder": "deterministic-trigram", "dim": cfg.text.dim, "seed": cfg.text.seed}
    else:
        endpoint = EmbeddingEndpoint.from_env(model=os.environ.get("KGT_EMBED_MODEL") or cfg.text.model,
                                              dim=cfg.text.dim, batch_size=cfg.text.batch_size,
                                              concurrency=cfg.text.concurrency, retries=cfg.text.retries)
        if not endpoint.token:
            raise EmbeddingServiceError(
                "no embedding credentials: set KGT_EMBED_TOKEN (or OPENAI_API_KEY) and optionally "
                "KGT_EMBED_URL, or pass --offline for the deterministic encoder")
        cache = ws.root / "text_cache"
        ent = encode_text_remote(ent_texts, endpoint, cache)
        rel = encode_text_remote(rel_texts, endpoint, cache)
        meta = {"encoder": "remote", "url": endpoint.url, "model": endpoint.model, "dim": endpoint.dim}
    save_features(ent, out / BANK_FILES["entity_text"])
    save_features(rel, out / BANK_FILES["relation_text"])
    (out / "text_meta.json").write_text(json.dumps(meta, indent=2))
    manifest.finish()
    print(f"text features {ent.shape} / {rel.shape} ({meta['encoder']}) -> {out}")


def _train_into(out: Path, kg, bank, paths, cfg: RunConfig, tc, fi):
    return train(kg, bank, cfg.model, tc, out_dir=out, filter_index=fi,
                 feature_paths={k: str(v) for k, v in paths.items()})


def cmd_train(args, ws: Workspace) -> None:
    cfg = _seeded(ws.config(), args.seed)
    tc = _train_config(cfg, args, args.ablation)
    apply_ablation(cfg.model, tc.ablation)  # surface conflicts before any work
    kg = ws.graph()
    bank, paths = ws.bank()
    fi = ws.filter_index(kg, args.policy)
    out = ws.stage("train")
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest("train", str(out), dataset=ws.graph_info()["dataset_dir"],
                           config=ws.config_source(), seed=tc.seed, argv=sys.argv[1:])
    result = _train_into(out, kg, bank, paths, cfg, tc, fi)
    manifest.finish()
    last = result.history[-1] if result.history else {}
    print(f"trained {tc.ablation} for {tc.epochs} epochs in {result.seconds:.1f}s; "
          f"final loss {last.get('loss', float('nan')):.4f}, valid MRR {last.get('valid_mrr', float('nan')):.4f}"
          f" -> {out}")


def cmd_eval(args, ws: Workspace) -> None:
    ckpt = Path(args.checkpoint) if args.checkpoint else ws.stage("train") / "checkpoint"
    if not (ckpt / "manifest.json").exists():
        raise MissingPrerequisiteError(ckpt / "manifest.json", "train")
    kg = ws.graph()
    fi = ws.filter_index(kg, args.policy)
    model = load_checkpoint(ckpt)
    out = ws.stage("eval")
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest("eval", str(out), dataset=ws.graph_info()["dataset_dir"],
                           config=ws.config_source(), seed=args.seed, argv=sys.argv[1:])
    mode = args.mode or model_prompt_mode(ckpt)
    report = evaluate(model, kg, args.split, fi, prompt_mode=mode)
    report.write(out, kg, args.split)
    summary = report.summary()
    stored = read_metrics(ckpt)
    key = f"{args.split}:{fi.policy}:{mode}"
    stored = dict(stored or {})
    if key in stored:
        reproduced = stored[key] == json.loads(json.dumps(summary))
        print(f"stored metrics for {key} reproduced exactly: {reproduced}")
    else:
        stored[key] = summary
        (ckpt / "metrics.json").write_text(json.dumps(stored, indent=2))
    manifest.finish()
    _print_metrics(f"{args.split} ({fi.policy}) from {ckpt}", summary)


def model_prompt_mode(ckpt: Path) -> str:
    manifest = json.loads((ckpt / "manifest.json").read_text())
    return manifest.get("extra", {}).get("train_config", {}).get("prompt_mode", "minimal")


def _parse_settings(text: str) -> list[AblationSetting]:
    if text == "all":
        return list(AblationSetting)
    try:
        return [AblationSetting(s.strip()) for s in text.split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"unknown ablation in {text!r}; choose from 'all' or {[s.value for s in AblationSetting]}")


ABLATION_HEADER = ["setting", "label", "mrr", "hits@1", "hits@3", "hits@10", "text_mrr", "struct_mrr", "seconds"]


def cmd_ablate(args, ws: Workspace) -> None:
    settings = _parse_settings(args.settings or args.ablation or "all")
    cfg = _seeded(ws.config(), args.seed)
    for s in settings:
        apply_ablation(cfg.model, s)
    kg = ws.graph()
    bank, paths = ws.bank()
    fi = ws.filter_index(kg, args.policy)
    out = ws.stage("ablate")
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest("ablate", str(out), dataset=ws.graph_info()["dataset_dir"],
                           config=ws.config_source(), seed=cfg.train.seed, argv=sys.argv[1:])
    rows = []
    for s in settings:
        tc = _train_config(cfg, args, s.value)
        run_dir = out / s.value
        result = _train_into(run_dir, kg, bank, paths, cfg, tc, fi)
        report = evaluate(result.model, kg, args.split, fi, prompt_mode=tc.prompt_mode)
        report.write(run_dir, kg, args.split)
        agg = report.aggregates
        rows.append([s.value, ABLATION_LABELS[s], agg["fused"]["mrr"], agg["fused"]["hits@1"],
                     agg["fused"]["hits@3"], agg["fused"]["hits@10"],
                     agg.get("text", {}).get("mrr", ""), agg.get("struct", {}).get("mrr", ""),
                     round(result.seconds, 2)])
        print(f"{ABLATION_LABELS[s]:<36} MRR {agg['fused']['mrr']:.4f}  ({result.seconds:.1f}s)", flush=True)
    write_table(out / "ablation_report.csv", ABLATION_HEADER, rows)
    manifest.finish()
    print(f"{len(rows)}-row ablation report -> {out / 'ablation_report.csv'}")


def cmd_sweep_gamma(args, ws: Workspace) -> None:
    gammas = _parse_gammas(args.gammas or "0.6,0.8,1.0,1.2,1.4,1.6,1.8")
    cfg = _seeded(ws.config(), args.seed)
    kg = ws.graph()
    fi = ws.filter_index(kg, args.policy)
    out = ws.stage("sweep")
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest("sweep-gamma", str(out), dataset=ws.graph_info()["dataset_dir"],
                           config=ws.config_source(), seed=cfg.train.seed, argv=sys.argv[1:])
    if args.sweep_mode == "rescore":
        ckpt = ws.stage("train") / "checkpoint"
        if not (ckpt / "manifest.json").exists():
            raise MissingPrerequisiteError(ckpt / "manifest.json", "train")
        model = load_checkpoint(ckpt)
        reports = sweep_gamma(model, kg, gammas, fi, args.split, "rescore",
                              prompt_mode=args.mode or model_prompt_mode(ckpt))
    else:
        bank, paths = ws.bank()
        tc = _train_config(cfg, args, "full")

        def fit(gamma):
            model_cfg = cfg.model.updated(scaler_mode="fixed", gamma=gamma)
            return train(kg, bank, model_cfg, dataclasses.replace(tc, eval_valid=False)).model

        reports = sweep_gamma(None, kg, gammas, fi, args.split, "retrain", train_fn=fit,
                              prompt_mode=tc.prompt_mode)
    rows = []
    for g, rep in reports.items():
        agg = rep.aggregates["fused"]
        rows.append([g, agg["mrr"], agg["hits@1"], agg["hits@3"], agg["hits@10"]])
        rep.write(out, kg, f"gamma_{g:g}")
        print(f"gamma {g:<5g} MRR {agg['mrr']:.4f}  H@1 {agg['hits@1']:.4f}", flush=True)
    write_table(out / "gamma_table.csv", ["gamma", "mrr", "hits@1", "hits@3", "hits@10"], rows)
    manifest.finish()


def render_table(header: list[str], rows: list[list[str]]) -> str:
    widths = [max(len(str(x)) for x in col) for col in zip(header, *rows)]
    fmt = lambda row: "  ".join(str(x).ljust(w) for x, w in zip(row, widths)).rstrip()  # noqa: E731
    return "\n".join([fmt(header), fmt(["-" * w for w in widths])] + [fmt(r) for r in rows])


def _read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    import csv

    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def cmd_report(args, ws: Workspace) -> None:
    sections = []
    kge_metrics = ws.stage("kge") / "metrics.json"
    if kge_metrics.exists():
        m = json.loads(kge_metrics.read_text())
        sections.append(f"Structural pre-training\n  train AUC {m['train_auc']:.4f}  final loss {m['final_loss']}")
    for summary in sorted(ws.stage("eval").glob("*_summary.json")):
        s = json.loads(summary.read_text())
        rows = [[view, f"{a['mrr']:.4f}", f"{a['hits@1']:.4f}", f"{a['hits@3']:.4f}", f"{a['hits@10']:.4f}"]
                for view, a in s["aggregates"].items()]
        title = f"Evaluation: {s['split']} ({s['filter_policy']})"
        sections.append(title + "\n" + render_table(["view", "MRR", "H@1", "H@3", "H@10"], rows))
    for name, title in (("ablate/ablation_report.csv", "Ablations"), ("sweep/gamma_table.csv", "Logit-scaling sweep")):
        path = ws.root / name
        if path.exists():
            header, rows = _read_csv(path)
            sections.append(title + "\n" + render_table(header, rows))
    if not sections:
        raise MissingPrerequisiteError(ws.stage("eval"), "eval")
    text = "\n\n".join(sections) + "\n"
    (ws.root / "report.txt").write_text(text, encoding="utf-8")
    print(text, end="")


COMMANDS = {
    "prepare": cmd_prepare,
    "train-kge": cmd_train_kge,
    "embed-text": cmd_embed_text,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "sweep-gamma": cmd_sweep_gamma,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default="kgt_run", help="workspace directory (default: ./kgt_run)")
    common.add_argument("--config", help="INI config with [kge] [text] [model] [train] [dataset] sections")
    common.add_argument("--seed", type=int, help="overrides the KGE and training seeds")
    common.add_argument("--policy", choices=sorted(FILTER_POLICIES), help="filter policy (default all-splits)")
    common.add_argument("--mode", choices=["minimal", "templated"], help="prompt mode")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress")

    parser = argparse.ArgumentParser(prog="kgt", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"kgt {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", parents=[common], help="load a dataset, build vocabulary and filter index")
    p.add_argument("--dataset", help="dataset directory, or 'synthetic' for the built-in toy graph")
    sub.add_parser("train-kge", parents=[common], help="pre-train structural (TuckER/TransE) features")
    p = sub.add_parser("embed-text", parents=[common], help="encode entity and relation descriptions")
    p.add_argument("--offline", action="store_true", help="use the deterministic local encoder")
    p = sub.add_parser("train", parents=[common], help="train a KGT model")
    p.add_argument("--ablation", help="ablation setting (default: from config, 'full')")
    p = sub.add_parser("eval", parents=[common], help="filtered evaluation of a checkpoint")
    p.add_argument("--split", default="test", choices=["train", "valid", "test"])
    p.add_argument("--checkpoint", help="checkpoint directory (default: <out>/train/checkpoint)")
    p = sub.add_parser("ablate", parents=[common], help="train and evaluate ablation settings")
    p.add_argument("--settings", help="'all' or a comma-separated list of settings")
    p.add_argument("--ablation", help="single setting (same as --settings NAME)")
    p.add_argument("--split", default="test", choices=["valid", "test"])
    p = sub.add_parser("sweep-gamma", parents=[common], help="MRR as a function of the logit-scaling ratio")
    p.add_argument("--gammas", help="comma-separated ratios lambda_t/lambda_s")
    p.add_argument("--sweep-mode", choices=["rescore", "retrain"], default="rescore",
                   help="rescore the trained model's cached logits or retrain per ratio")
    p.add_argument("--split", default="test", choices=["valid", "test"])
    sub.add_parser("report", parents=[common], help="render stored results as text tables")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    ws = Workspace(args.out, getattr(args, "config", None) if args.command != "prepare" else None)
    try:
        COMMANDS[args.command](args, ws)
    except (UsageError, ConfigError, AblationConflictError) as exc:
        print(f"kgt {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DatasetError, FeatureFormatError, CheckpointError, EmbeddingServiceError, PromptTooLongError) as exc:
        print(f"kgt {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NonFiniteLossError, KgeNonFiniteLossError, NumericalError, FloatingPointError) as exc:
        print(f"kgt {args.command}: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
