import argparse
import json
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import yaml
from pydantic import ValidationError

from rod_studio.benchmark.metrics import evaluate, evaluation_report
from rod_studio.benchmark.splits import SplitManifest, SplitSpec, build_manifest
from rod_studio.benchmark.synth import SceneSpec, generate
from rod_studio.config import (
    EngineConfig,
    SpatialVocabulary,
    load_engine_config,
    load_vocabulary,
)
from rod_studio.errors import EmptyDataset, RodStudioError
from rod_studio.fusion.net import FusionNet, forward_batch, train_fusion
from rod_studio.fusion.rules import Mode, select, stage_rule_for
from rod_studio.grounding.phrase import parse_terms
from rod_studio.grounding.priors import field_from_terms
from rod_studio.logging import get_logger, init_logging
from rod_studio.matching.assign import training_examples
from rod_studio.matching.loss import compute_loss
from rod_studio.persistence.jsonl import (
    Dataset,
    atomic_write_many,
    dumps_json,
    ingest,
    read_samples,
    relmaps_jsonl,
    samples_jsonl,
)
from rod_studio.persistence.records import PredictionsFile

log = get_logger("rod_studio.cli")

# (path, text) pairs a command wants on disk; main writes them all or none.
Outputs = List[Tuple[Path, str]]
CommandResult = Tuple[Dict[str, Any], Outputs]


def _load_mapping(path: Optional[str]) -> Dict[str, Any]:
    if not path:
        return {}
    p = Path(path)
    with p.open("r", encoding="utf-8") as f:
        data = yaml.safe_load(f) if p.suffix in (".yaml", ".yml") else json.load(f)
    if not isinstance(data, dict):
        raise RodStudioError(f"{p} does not contain an object", path=str(p))
    return data


def _load_net(path: str) -> FusionNet:
    return FusionNet.model_validate(_load_mapping(path))


def _load_manifest(path: str) -> SplitManifest:
    return SplitManifest.model_validate(_load_mapping(path))


def _engine(args: argparse.Namespace) -> EngineConfig:
    return load_engine_config(getattr(args, "config", None))


def _positive(value: Optional[int], flag: str) -> None:
    if value is not None and value < 1:
        raise RodStudioError(f"{flag} must be at least 1", flag=flag, value=value)


def _predict_all(
    dataset: Dataset,
    cfg: EngineConfig,
    mode: Mode,
    vocab: SpatialVocabulary,
    net: Optional[FusionNet] = None,
    top_n: Optional[int] = None,
    reference_priors: bool = True,
) -> Dict[str, Optional[int]]:
    preds: Dict[str, Optional[int]] = {}
    empty = 0
    for sample, bundle in zip(dataset.samples, dataset.bundles(cfg.priors, vocab)):
        if not sample.candidates:
            empty += 1
            preds[sample.id] = None
            continue
        preds[sample.id] = select(bundle, mode, net, top_n, reference_priors)
    if empty:
        log.warning("%d samples have no candidates; predictions left empty", empty)
    return preds


def _train(
    dataset: Dataset,
    cfg: EngineConfig,
    vocab: SpatialVocabulary,
    epochs: int,
    seed: int,
    init: Optional[FusionNet] = None,
):
    bundles = dataset.bundles(cfg.priors, vocab)
    examples = training_examples(dataset.samples, bundles, cfg.loss_weights)
    if not examples:
        raise EmptyDataset("no samples with candidates to train on")
    result = train_fusion(
        examples,
        epochs=epochs,
        seed=seed,
        net=init,
        weights=cfg.loss_weights,
        config=cfg.fusion,
    )
    return result, examples


def cmd_gen(args: argparse.Namespace) -> CommandResult:
    spec = SceneSpec.model_validate(_load_mapping(args.spec))
    if args.seed is not None:
        spec = spec.model_copy(update={"seed": args.seed})
    scenes = generate(spec, args.n)
    out = Path(args.out)
    outputs = [
        (out / "samples.jsonl", samples_jsonl([s for s, _ in scenes])),
        (out / "relmaps.jsonl", relmaps_jsonl([(s.id, g) for s, g in scenes])),
    ]
    summary = {
        "command": "gen",
        "scenes": len(scenes),
        "ambiguous": sum(1 for s, _ in scenes if s.ambiguous),
        "seed": spec.seed,
        "out": str(out),
    }
    return summary, outputs


def cmd_split(args: argparse.Namespace) -> CommandResult:
    data = _load_mapping(args.spec)
    data["mode"] = args.mode
    spec = SplitSpec.model_validate(data)
    samples = read_samples(Path(args.samples))
    manifest = build_manifest(
        spec, [(s.id, s.category) for s in samples], seed=args.seed
    )
    summary = {
        "command": "split",
        "mode": manifest.mode,
        "seed": manifest.seed,
        "spec_hash": manifest.spec_hash,
        "splits": {name: len(ids) for name, ids in manifest.splits.items()},
    }
    return summary, [(Path(args.out), manifest.to_json())]


def cmd_score(args: argparse.Namespace) -> CommandResult:
    cfg = _engine(args)
    mode = Mode(args.mode)
    _positive(args.top_n, "--top-n")
    net = None
    if mode is Mode.LEARNED:
        if not args.net:
            raise RodStudioError("--mode learned requires --net", mode=mode.value)
        net = _load_net(args.net)
    dataset = ingest(Path(args.samples), Path(args.relmaps) if args.relmaps else None)
    top_n = args.top_n if args.top_n is not None else cfg.reference.top_n
    reference_priors = cfg.reference.use_priors and not args.detector_references
    preds = _predict_all(
        dataset, cfg, mode, load_vocabulary(args.lang), net, top_n, reference_priors
    )
    out = PredictionsFile(mode=mode.value, top_n=top_n, predictions=preds)
    summary = {
        "command": "score",
        "mode": mode.value,
        "rule": stage_rule_for(mode).rule.value,
        "samples": len(dataset),
        "missing_relmaps": dataset.missing_relmaps,
        "top_n": top_n,
        "reference_priors": reference_priors,
    }
    return summary, [(Path(args.out), dumps_json(out.model_dump(mode="json")))]


def cmd_train(args: argparse.Namespace) -> CommandResult:
    cfg = _engine(args)
    vocab = load_vocabulary(args.lang)
    dataset = ingest(Path(args.samples), Path(args.relmaps) if args.relmaps else None)
    if args.manifest:
        if not args.split:
            raise RodStudioError("--manifest requires --split")
        dataset = dataset.subset(_load_manifest(args.manifest).ids(args.split))
    init = _load_net(args.init) if args.init else None
    epochs = args.epochs if args.epochs is not None else cfg.fusion.epochs
    seed = args.seed if args.seed is not None else 0
    result, examples = _train(dataset, cfg, vocab, epochs, seed, init)

    # training_examples keeps exactly the samples that have candidates, in order
    trainable = [s for s in dataset.samples if s.candidates]
    reports = [
        compute_loss(
            sample,
            ex.bundle,
            [(ex.positive, 0)],
            cfg.loss_weights,
            forward_batch(result.net, ex.bundle.features()),
        )
        for sample, ex in zip(trainable, examples)
    ]
    mean_loss = {
        key: float(np.mean([getattr(r, key) for r in reports]))
        for key in ("total", "cls", "bbox", "conf")
    }

    outputs = [(Path(args.out), dumps_json(result.net.model_dump(mode="json")))]
    if args.log:
        log_text = "epoch,loss\n" + "".join(
            f"{i},{v!r}\n" for i, v in enumerate(result.loss_trace)
        )
        outputs.append((Path(args.log), log_text))
    summary = {
        "command": "train-fusion",
        "samples": len(examples),
        "epochs": epochs,
        "seed": seed,
        "final_objective": result.loss_trace[-1] if result.loss_trace else None,
        "loss": mean_loss,
    }
    return summary, outputs


def cmd_eval(args: argparse.Namespace) -> CommandResult:
    cfg = _engine(args)
    samples = read_samples(Path(args.samples))
    preds = PredictionsFile.model_validate(_load_mapping(args.preds))
    threshold = (
        args.iou_threshold
        if args.iou_threshold is not None
        else cfg.evaluation.iou_threshold
    )
    report = evaluation_report(samples, preds.predictions, threshold)
    body = report.model_dump(mode="json")
    return {"command": "eval", **body}, [(Path(args.out), dumps_json(body))]


def cmd_export_field(args: argparse.Namespace) -> CommandResult:
    cfg = _engine(args)
    _positive(args.res, "--res")
    priors = cfg.priors
    if args.decay:
        priors = priors.model_copy(update={"decay": args.decay})
    terms = parse_terms(args.terms, load_vocabulary(args.lang))
    field = field_from_terms(terms, priors)
    summary = {
        "command": "export-field",
        "terms": [t.label for t in terms],
        "res": args.res,
        "decay": field.decay,
    }
    return summary, [(Path(args.out), dumps_json(field.export(args.res)))]


def cmd_sweep(args: argparse.Namespace) -> CommandResult:
    cfg = _engine(args)
    vocab = load_vocabulary(args.lang)
    train_set = ingest(
        Path(args.samples), Path(args.relmaps) if args.relmaps else None
    )
    eval_set = ingest(
        Path(args.eval_samples), Path(args.eval_relmaps) if args.eval_relmaps else None
    )
    manifest = _load_manifest(args.manifest)
    epochs = args.epochs if args.epochs is not None else cfg.fusion.epochs
    seed = args.seed if args.seed is not None else 0
    threshold = cfg.evaluation.iou_threshold
    reference = cfg.reference

    def accuracy(mode: Mode, net: Optional[FusionNet] = None) -> float:
        preds = _predict_all(
            eval_set, cfg, mode, vocab, net, reference.top_n, reference.use_priors
        )
        return evaluate(eval_set.samples, preds, threshold)

    detector = accuracy(Mode.DETECTOR)
    zeroshot = accuracy(Mode.ZERO_SHOT)
    rows: List[Dict[str, Any]] = []
    for name, ids in manifest.splits.items():
        result, examples = _train(train_set.subset(ids), cfg, vocab, epochs, seed)
        rows.append(
            {
                "split": name,
                "train_samples": len(examples),
                "detector": detector,
                "zeroshot": zeroshot,
                "learned": accuracy(Mode.LEARNED, result.net),
            }
        )
        log.info("Sweep split %s: learned=%.4f", name, rows[-1]["learned"])
    curve = {
        "manifest_mode": manifest.mode,
        "epochs": epochs,
        "seed": seed,
        "eval_samples": len(eval_set),
        "top_n": reference.top_n,
        "reference_priors": reference.use_priors,
        "rows": rows,
    }
    summary = {"command": "sweep", "splits": len(rows), "out": args.out}
    return summary, [(Path(args.out), dumps_json(curve))]


def _common(p: argparse.ArgumentParser, out_help: str) -> None:
    p.add_argument("--out", required=True, help=out_help)
    p.add_argument("--seed", type=int, default=None, help="Random seed")
    p.add_argument("--log", default=None, help="Optional log/summary file")
    p.add_argument(
        "--config",
        default=None,
        help="Engine config YAML (default: ROD_STUDIO_ENGINE_CONFIG or tasks/engine)",
    )
    p.add_argument("--lang", default="en", help="Spatial vocabulary language")
    p.add_argument(
        "--log-level",
        default=None,
        choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"],
        help="Logging level (default from ROD_STUDIO_LOG_LEVEL)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rod-studio",
        description=(
            "Prior injection for referring object detection: generate corpora, "
            "build benchmark splits, train the fusion net, score and evaluate."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="Generate a synthetic corpus")
    gen.add_argument("--spec", default=None, help="Scene spec JSON/YAML")
    gen.add_argument("--n", type=int, required=True, help="Number of scenes")
    _common(gen, "Output directory for samples.jsonl and relmaps.jsonl")
    gen.set_defaults(func=cmd_gen)

    split = sub.add_parser("split", help="Build a low-data or few-shot manifest")
    split.add_argument("--mode", required=True, choices=["lowdata", "fewshot"])
    split.add_argument("--spec", default=None, help="Split spec JSON/YAML")
    split.add_argument("--samples", required=True, help="Samples JSONL")
    _common(split, "Manifest JSON path")
    split.set_defaults(func=cmd_split)

    score = sub.add_parser("score", help="Select one candidate per sample")
    score.add_argument("--samples", required=True, help="Samples JSONL")
    score.add_argument("--relmaps", default=None, help="Relevance maps JSONL")
    score.add_argument(
        "--mode", default="zeroshot", choices=[m.value for m in Mode]
    )
    score.add_argument("--net", default=None, help="Fusion net JSON (learned mode)")
    score.add_argument(
        "--top-n", type=int, default=None, help="Restrict to the top-N references"
    )
    score.add_argument(
        "--detector-references",
        action="store_true",
        help="Rank references by detector score only",
    )
    _common(score, "Predictions JSON path")
    score.set_defaults(func=cmd_score)

    train = sub.add_parser("train-fusion", help="Train the fusion net")
    train.add_argument("--samples", required=True, help="Samples JSONL")
    train.add_argument("--relmaps", default=None, help="Relevance maps JSONL")
    train.add_argument("--epochs", type=int, default=None, help="Training epochs")
    train.add_argument("--init", default=None, help="Start from this net JSON")
    train.add_argument("--manifest", default=None, help="Split manifest JSON")
    train.add_argument("--split", default=None, help="Split name in the manifest")
    _common(train, "Fusion net JSON path")
    train.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="Top-1 accuracy of a predictions file")
    ev.add_argument("--samples", required=True, help="Samples JSONL")
    ev.add_argument("--preds", required=True, help="Predictions JSON")
    ev.add_argument("--iou-threshold", type=float, default=None)
    _common(ev, "Report JSON path")
    ev.set_defaults(func=cmd_eval)

    field = sub.add_parser("export-field", help="Rasterize a spatial prior field")
    field.add_argument("--terms", required=True, help='e.g. "bottom left"')
    field.add_argument("--res", type=int, default=64, help="Grid resolution")
    field.add_argument("--decay", default=None, choices=["linear", "gaussian"])
    _common(field, "Grid JSON path")
    field.set_defaults(func=cmd_export_field)

    sweep = sub.add_parser("sweep", help="Accuracy per manifest split")
    sweep.add_argument("--samples", required=True, help="Training samples JSONL")
    sweep.add_argument("--relmaps", default=None)
    sweep.add_argument("--manifest", required=True, help="Split manifest JSON")
    sweep.add_argument("--eval-samples", required=True)
    sweep.add_argument("--eval-relmaps", default=None)
    sweep.add_argument("--epochs", type=int, default=None)
    _common(sweep, "Curve JSON path")
    sweep.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Optional[List[str]] = None) -> None:
    parser = build_parser()
    args = parser.parse_args(argv)
    init_logging(args.log_level)
    log.info("Starting %s", args.command)
    try:
        summary, outputs = args.func(args)
        if args.log and args.command != "train-fusion":
            outputs.append((Path(args.log), dumps_json(summary)))
        atomic_write_many(outputs)
    except RodStudioError as e:
        error = e.to_dict()
    except ValidationError as e:
        error = {"error": "ValidationError", "message": str(e)}
    except (OSError, ValueError, yaml.YAMLError, KeyError) as e:
        error = {"error": type(e).__name__, "message": str(e)}
    else:
        print(json.dumps(summary, ensure_ascii=False))
        log.info("Finished %s", args.command)
        return
    print(json.dumps(error, ensure_ascii=False, default=str), file=sys.stderr)
    raise SystemExit(1)


if __name__ == "__main__":
    main()
