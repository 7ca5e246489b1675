"""`vkg` command line: gen, train, eval, export and baseline."""

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from src.baselines.capability import (
    KGE_METHODS,
    METHODS,
    TWO_STAGE_METHODS,
    check_capability,
    kge_variant,
    parse_method,
    supported_tasks,
)
from src.baselines.clip_only import clip_only_train, stagewise_train
from src.baselines.fusion import entity_text_embeddings, fuse_and_train
from src.baselines.two_stage import (
    TwoStagePipeline,
    TwoStageScorer,
    train_kge_baseline,
    train_two_stage,
)
from src.cli.export import select_videos, write_embeddings, write_projection
from src.cli.run_config import RunConfig, load_run_config
from src.config import configure_logging, settings
from src.datamodel.models import Dataset
from src.datamodel.synthetic import gen_synthetic
from src.datamodel.triplet_io import load_triplets, with_split
from src.datamodel.video_io import load_dataset_dir, write_dataset_dir
from src.errors import CheckpointError, ConfigError, DataFormatError, ExitCode, VkgError
from src.evaluation.ranking import MODES, Task, expand_tasks
from src.evaluation.results import result_rows, write_rank_dump, write_results
from src.evaluation.tasks import JointScorer, KgeScorer, Scorer, evaluate
from src.kge.models import KgeModel
from src.kge.trainer import fit_relations
from src.training.checkpoint import (
    KIND_KGE_MODEL,
    kge_model_from_checkpoint,
    read_checkpoint,
    save_checkpoint,
    save_kge_model,
)
from src.training.stages import run_stage
from src.training.state import LossRecord, ModelState
from src.training.train_config import TrainConfig

logger = logging.getLogger(__name__)

TASK_CHOICES = ("vt", "tv", "trt", "vrt", "vrv", "all")
MODE_CHOICES = ("raw", "filtered", "both")
TEXT_SPLIT_FRACTION = 0.95


# --- shared helpers ---


def _modes(mode: str) -> tuple[str, ...]:
    return MODES if mode == "both" else (mode,)


def _tasks(names: list[str], method: str) -> list[Task]:
    """Explicit tasks are kept (and capability-checked later); `all` means what `method` can do."""
    if "all" in names:
        return supported_tasks(method)
    return expand_tasks(names)


def write_loss_log(path: str | Path, records: list[LossRecord]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fields = list(LossRecord.model_fields)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for record in records:
            writer.writerow(
                {
                    key: repr(value) if isinstance(value, float) else value
                    for key, value in record.model_dump().items()
                }
            )
    logger.info(f"[STAGE] ✓ wrote {len(records)} loss records to {path}")
    return path


def _load_state(path: str, cfg: TrainConfig) -> ModelState:
    meta, arrays, _ = read_checkpoint(path)
    if meta.get("kind") == KIND_KGE_MODEL:
        raise CheckpointError(f"{path}: expected a joint model checkpoint, got a KGE model")
    return ModelState.from_arrays(arrays, meta, cfg)


def _load_data(args: argparse.Namespace, cfg: RunConfig) -> Dataset:
    """A dataset directory, or one triplet file re-split with the run seed."""
    if args.triplets is None:
        return load_dataset_dir(args.data)
    if not 0.0 < args.split_fraction < 1.0:
        raise ConfigError(f"--split-fraction must be in (0, 1), got {args.split_fraction}")
    return with_split(load_triplets(args.triplets), args.split_fraction, cfg.seed)


def _scorer_from_checkpoint(
    path: str, dataset: Dataset, cfg: RunConfig, kge_path: str | None, vrv_scoring: str
) -> Scorer:
    meta, arrays, _ = read_checkpoint(path)
    if meta.get("kind") == KIND_KGE_MODEL:
        model = kge_model_from_checkpoint(meta, arrays)
        return KgeScorer(model, str(meta.get("method", model.variant)))
    state = ModelState.from_arrays(arrays, meta, cfg.train)
    if kge_path is None:
        return JointScorer(state, dataset, vrv_scoring)
    kge_meta, kge_arrays, _ = read_checkpoint(kge_path)
    if kge_meta.get("kind") != KIND_KGE_MODEL:
        raise CheckpointError(f"{kge_path}: expected a KGE model checkpoint")
    if state.method != "clip":
        raise ConfigError("--kge pairs a KGE model with a CLIP-only checkpoint")
    kge = kge_model_from_checkpoint(kge_meta, kge_arrays)
    pipeline = TwoStagePipeline.build(dataset, kge, state)
    return TwoStageScorer(pipeline, dataset)


def _report(
    scorer: Scorer,
    dataset: Dataset,
    tasks: list[Task],
    modes: tuple[str, ...],
    split: str,
    out: str,
    dump: str | None,
) -> int:
    results = evaluate(scorer, dataset, tasks, modes, split)
    write_results(out, result_rows(scorer.method, results))
    if dump:
        write_rank_dump(dump, scorer.method, results)
    if isinstance(scorer, TwoStageScorer) and scorer.pipeline.fallbacks:
        logger.info(
            f"[EVAL] {scorer.pipeline.fallbacks} VRV queries fell back past an untagged tail"
        )
    return ExitCode.OK


# --- commands ---


def cmd_gen(args: argparse.Namespace) -> int:
    cfg = load_run_config(args.config)
    dataset = gen_synthetic(cfg.synth)
    write_dataset_dir(dataset, args.out)
    print(
        f"entities={dataset.num_entities} relations={dataset.num_relations} "
        f"train={len(dataset.train)} test={len(dataset.test)} "
        f"tags={dataset.num_tags} videos={dataset.num_videos}"
    )
    return ExitCode.OK


def _stages_for(arg: str, state: ModelState, cfg: TrainConfig) -> list[int]:
    if arg != "all":
        return [int(arg)]
    stages = [3] if cfg.skip_pretraining and not state.completed_stages else [1, 2, 3]
    return [stage for stage in stages if stage not in state.completed_stages]


def cmd_train(args: argparse.Namespace) -> int:
    cfg = load_run_config(args.config)
    dataset = load_dataset_dir(args.data)
    if args.checkpoint_in:
        state = _load_state(args.checkpoint_in, cfg.train)
    else:
        state = ModelState.init(dataset, cfg.train, cfg.seed)
    if state.method != "ours":
        raise ConfigError(
            f"checkpoint was trained as '{state.method}'; train continues 'ours' only"
        )

    records: list[LossRecord] = []
    for stage in _stages_for(args.stage, state, cfg.train):
        records.extend(
            run_stage(state, dataset, cfg.train, stage, weights=cfg.weights, kge=cfg.kge)
        )
    out = args.checkpoint_out or cfg.output.checkpoint
    save_checkpoint(state, out, cfg.digest())
    write_loss_log(args.loss_log or cfg.output.loss_log, records)
    return ExitCode.OK


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = load_run_config(args.config)
    dataset = _load_data(args, cfg)
    scorer = _scorer_from_checkpoint(args.checkpoint, dataset, cfg, args.kge, args.vrv_scoring)
    tasks = _tasks(args.task, scorer.method)
    return _report(
        scorer,
        dataset,
        tasks,
        _modes(args.mode),
        args.split,
        args.out or cfg.output.results,
        args.dump_ranks,
    )


def cmd_export(args: argparse.Namespace) -> int:
    cfg = load_run_config(args.config)
    meta, arrays, _ = read_checkpoint(args.checkpoint)

    if meta.get("kind") == KIND_KGE_MODEL:
        model = kge_model_from_checkpoint(meta, arrays)
        if args.what != "embeddings" or args.kind not in ("entity", "relation"):
            raise ConfigError("KGE checkpoints export --what embeddings --kind entity|relation")
        vectors = model.all_entity_vectors() if args.kind == "entity" else model.relations
        write_embeddings(args.out, np.arange(len(vectors)), vectors)
        return ExitCode.OK

    state = ModelState.from_arrays(arrays, meta, cfg.train)
    if args.what == "embeddings":
        if args.kind == "tag":
            vectors = state.tag_embeddings()
        elif args.kind == "relation":
            vectors = state.relations.table
        elif args.kind == "video":
            if args.data is None:
                raise ConfigError("--kind video needs --data")
            vectors = state.video_embeddings(load_dataset_dir(args.data))
        else:
            raise ConfigError(f"joint checkpoints have no '{args.kind}' embeddings")
        write_embeddings(args.out, np.arange(len(vectors)), vectors)
        return ExitCode.OK

    if args.data is None:
        raise ConfigError("--what projection2d needs --data")
    dataset = load_dataset_dir(args.data)
    tags = [name for name in args.tags.split(",") if name] if args.tags else None
    if tags is not None and not tags:
        raise DataFormatError("empty tag selection")
    videos = select_videos(dataset, tags)
    write_projection(args.out, dataset, videos, state.video_embeddings(dataset, videos))
    return ExitCode.OK


def _tag_encoder_state(args: argparse.Namespace, dataset: Dataset, cfg: RunConfig) -> ModelState:
    if args.tag_encoder:
        return _load_state(args.tag_encoder, cfg.train)
    return clip_only_train(dataset, cfg.train, cfg.seed)


def _save_model(path: str | None, model: KgeModel, method: str, cfg: RunConfig) -> None:
    if path:
        save_kge_model(model, path, method=method, digest=cfg.digest())


def cmd_baseline(args: argparse.Namespace) -> int:
    method = parse_method(args.method)
    cfg = load_run_config(args.config)
    dataset = _load_data(args, cfg)
    tasks = _tasks(args.task, method)
    for task in tasks:
        check_capability(method, task)
    logger.info("=" * 70)
    logger.info(f"[BASELINE] {method} on {args.triplets or args.data} (seed {cfg.seed})")

    scorer: Scorer
    if method in KGE_METHODS:
        model = train_kge_baseline(method, dataset, cfg.train, cfg.kge, cfg.seed)
        _save_model(args.save, model, method, cfg)
        scorer = KgeScorer(model, method)
    elif method in TWO_STAGE_METHODS:
        pipeline = train_two_stage(kge_variant(method), dataset, cfg.train, cfg.kge, cfg.seed)
        if args.save:
            save_checkpoint(pipeline.clip, args.save, cfg.digest())
            _save_model(f"{args.save}.kge", pipeline.kge, kge_variant(method), cfg)
        scorer = TwoStageScorer(pipeline, dataset)
    elif method.endswith("+embed"):
        encoder = _tag_encoder_state(args, dataset, cfg).tag_encoder
        model = fuse_and_train(
            kge_variant(method),
            dataset,
            encoder,
            cfg.kge,
            cfg.train.optimizer,
            cfg.train.dim,
            cfg.train.kge_epochs,
            cfg.train.kge_batch_size,
            cfg.seed,
            fixed=args.fixed_reduction,
        )
        _save_model(args.save, model, method, cfg)
        scorer = KgeScorer(model, method)
    elif method == "tag-encoder":
        encoder = _tag_encoder_state(args, dataset, cfg).tag_encoder
        text, _ = entity_text_embeddings(dataset, encoder)
        model = fit_relations(
            text,
            dataset,
            cfg.kge,
            cfg.train.optimizer,
            cfg.train.kge_epochs,
            cfg.train.kge_batch_size,
            cfg.seed,
        )
        _save_model(args.save, model, method, cfg)
        scorer = KgeScorer(model, method)
    else:
        if method == "clip":
            state = clip_only_train(dataset, cfg.train, cfg.seed)
        elif method == "stagewise":
            state = stagewise_train(dataset, cfg.train, cfg.kge, cfg.seed)
        else:
            state = ModelState.init(dataset, cfg.train, cfg.seed)
        if method == "ours":
            for stage in _stages_for("all", state, cfg.train):
                run_stage(state, dataset, cfg.train, stage, weights=cfg.weights, kge=cfg.kge)
        if args.save:
            save_checkpoint(state, args.save, cfg.digest())
        scorer = JointScorer(state, dataset, args.vrv_scoring)

    logger.info(f"[BASELINE] ✓ {method} trained")
    return _report(
        scorer,
        dataset,
        tasks,
        _modes(args.mode),
        args.split,
        args.out or cfg.output.results,
        args.dump_ranks,
    )


# --- argument parsing ---


def _add_eval_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--task", nargs="+", choices=TASK_CHOICES, default=["all"])
    parser.add_argument("--mode", choices=MODE_CHOICES, default="both")
    parser.add_argument("--split", choices=("train", "test"), default="test")
    parser.add_argument("--vrv-scoring", choices=("distance", "cosine"), default="distance")
    parser.add_argument("--out", help="results CSV (defaults to the config's output.results)")
    parser.add_argument("--dump-ranks", help="also write per-query ranks to this CSV")
    parser.add_argument("--triplets", help="text-only run: one head/relation/tail TSV file")
    parser.add_argument(
        "--split-fraction",
        type=float,
        default=TEXT_SPLIT_FRACTION,
        help=f"train share when splitting --triplets (default {TEXT_SPLIT_FRACTION})",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vkg", description="Joint video / knowledge-graph embedding toolkit"
    )
    parser.add_argument("--log-level", default=None, help=f"default {settings.LOG_LEVEL}")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a planted synthetic dataset")
    gen.add_argument("--config")
    gen.add_argument("--out", default=settings.DATA_DIR)
    gen.set_defaults(handler=cmd_gen)

    train = sub.add_parser("train", help="run training stages")
    train.add_argument("--config")
    train.add_argument("--data", default=settings.DATA_DIR)
    train.add_argument("--stage", choices=("1", "2", "3", "all"), default="all")
    train.add_argument("--checkpoint-in")
    train.add_argument("--checkpoint-out")
    train.add_argument("--loss-log")
    train.set_defaults(handler=cmd_train)

    ev = sub.add_parser("eval", help="evaluate a checkpoint")
    ev.add_argument("--config")
    ev.add_argument("--data", default=settings.DATA_DIR)
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--kge", help="KGE checkpoint completing a CLIP-only checkpoint (two-stage)")
    _add_eval_options(ev)
    ev.set_defaults(handler=cmd_eval)

    export = sub.add_parser("export", help="export embeddings or a 2-D projection")
    export.add_argument("--config")
    export.add_argument("--data")
    export.add_argument("--checkpoint", required=True)
    export.add_argument("--what", choices=("embeddings", "projection2d"), default="embeddings")
    export.add_argument(
        "--kind", choices=("video", "tag", "relation", "entity"), default="tag"
    )
    export.add_argument("--tags", help="comma-separated tag names to project")
    export.add_argument("--out", required=True)
    export.set_defaults(handler=cmd_export)

    baseline = sub.add_parser("baseline", help="train and evaluate a comparison method")
    baseline.add_argument("--method", required=True, help=", ".join(METHODS))
    baseline.add_argument("--config")
    baseline.add_argument("--data", default=settings.DATA_DIR)
    baseline.add_argument("--save", help="write the trained model checkpoint here")
    baseline.add_argument("--tag-encoder", help="checkpoint supplying a pre-trained tag encoder")
    baseline.add_argument("--fixed-reduction", action="store_true")
    _add_eval_options(baseline)
    baseline.set_defaults(handler=cmd_baseline)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level)
    try:
        return int(args.handler(args))
    except VkgError as e:
        logger.error(f"✗ {e}")
        return int(e.exit_code)


if __name__ == "__main__":
    sys.exit(main())

