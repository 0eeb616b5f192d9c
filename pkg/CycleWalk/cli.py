# This file is a part of CycleWalk

import argparse
import json
import logging
import os
import time
import traceback
from typing import List, Optional

import numpy as np

from CycleWalk.config import RunConfig
from CycleWalk.data.dataset import SequenceDataset, load_dataset, write_dataset
from CycleWalk.data.labels import grid_labels, node_classes
from CycleWalk.data.synth import generate_many
from CycleWalk.engine import ParamSet
from CycleWalk.evaluation.metrics import evaluate_propagation, evaluate_walks, propagation_score
from CycleWalk.evaluation.sweep import AXES, generate_dataset, run_sweep
from CycleWalk.exceptions import CycleWalkError, UsageError
from CycleWalk.propagation.propagate import adapt_and_propagate, export_predictions, propagate_sequence
from CycleWalk.train.checkpoint import load_checkpoint
from CycleWalk.train.trainer import fit, gradient_check
from CycleWalk.utils.files import dump_json, write_files
from CycleWalk.utils.run_info import stamp
from CycleWalk.utils.seeds import sequence_seeds, stream_rng
from CycleWalk.utils.time_format import get_readable_time
from CycleWalk.walk.encoder import init_encoder
from CycleWalk.walk.lemma import lemma_property_run
from CycleWalk.walk.nodes import grid_geometry

GRADCHECK_BOUND = 1e-4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage()
        raise UsageError(message)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run config; flags override it")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--precision", choices=("float32", "float64"))


def _propagation_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="dataset directory to label")
    p.add_argument("--checkpoint", default="none", help="checkpoint path, or 'none' for a random encoder")
    p.add_argument("--neighbors", type=int)
    p.add_argument("--context", type=int)
    p.add_argument("--radius", type=float)
    p.add_argument("--topk-mode", choices=("global", "per_frame"))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="python -m CycleWalk", description="Space-time correspondence by contrastive random walks")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("synth", help="write train and held-out sprite datasets")
    _common(p)
    p.add_argument("--sequences", type=int)
    p.add_argument("--heldout", type=int)
    p.add_argument("--frames", type=int)
    p.add_argument("--sprites", type=int)
    p.add_argument("--speed", type=int)
    p.add_argument("--occlusion", action="store_true", default=None)
    p.add_argument("--noise-std", type=float, help="per-frame Gaussian pixel noise")

    p = sub.add_parser("train", help="fit an encoder with the cycle walk loss")
    _common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--heldout", help="held-out dataset for periodic evaluation")
    p.add_argument("--steps", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--clip-length", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--temperature", type=float)
    p.add_argument("--edge-dropout", type=float)
    p.add_argument("--dropout-mode", choices=("prefill", "renormalize"))
    p.add_argument("--objective", choices=("cycle", "supervised"))
    p.add_argument("--embed-dim", type=int)
    p.add_argument("--checkpoint-every", type=int)
    p.add_argument("--eval-every", type=int)

    p = sub.add_parser("eval-walk", help="walk accuracy per hop against ground truth")
    _common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", default="none")
    p.add_argument("--hops", type=int, nargs="+", default=[1, 2, 3])
    p.add_argument("--baseline", action="store_true", help="also score the untrained encoder")

    p = sub.add_parser("propagate", help="propagate frame-0 labels and score IoU")
    _common(p)
    _propagation_flags(p)

    p = sub.add_parser("adapt", help="online test-time adaptation, then propagate")
    _common(p)
    _propagation_flags(p)
    p.add_argument("--updates", type=int)
    p.add_argument("--window", type=int)
    p.add_argument("--every", type=int)
    p.add_argument("--adapt-lr", type=float)

    p = sub.add_parser("gradcheck", help="finite-difference check of the training loss")
    _common(p)
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--step", type=float, default=1e-5)

    p = sub.add_parser("lemma", help="false-negative coefficient property run")
    _common(p)
    p.add_argument("--draws", type=int, default=10_000)

    p = sub.add_parser("sweep", help="ablation sweep over one axis")
    _common(p)
    p.add_argument("--axis", required=True, choices=AXES)
    p.add_argument("--values", required=True, nargs="+", type=float)
    p.add_argument("--data", help="training dataset; generated from the config when omitted")
    p.add_argument("--heldout", help="held-out dataset; generated from the config when omitted")
    p.add_argument("--checkpoint", help="encoder for evaluation-only axes")
    return parser


OVERRIDES = {
    "seed": "seed", "out": "out", "precision": "train.precision",
    "sequences": "sequences", "frames": "scene.frames", "sprites": "scene.sprites",
    "speed": "scene.speed", "occlusion": "scene.occlusion", "noise_std": "scene.noise_std",
    "steps": "train.steps", "batch_size": "train.batch_size", "clip_length": "walk.clip_length",
    "lr": "train.learning_rate", "temperature": "walk.temperature", "edge_dropout": "walk.edge_dropout",
    "dropout_mode": "walk.dropout_mode", "objective": "train.objective", "embed_dim": "encoder.embed_dim",
    "checkpoint_every": "train.checkpoint_every", "eval_every": "train.eval_every",
    "neighbors": "propagation.neighbors", "context": "propagation.context", "radius": "propagation.radius",
    "topk_mode": "propagation.topk_mode", "updates": "adapt.updates", "window": "adapt.window",
    "every": "adapt.every", "adapt_lr": "adapt.learning_rate",
}


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Defaults < config file < flags."""
    run = RunConfig.load(args.config)
    values = {key: getattr(args, flag) for flag, key in OVERRIDES.items() if hasattr(args, flag)}
    if args.command == "synth" and getattr(args, "heldout", None) is not None:
        values["heldout"] = args.heldout
    return run.override(values).validate()


def _load_params(path: Optional[str], run: RunConfig) -> ParamSet:
    """Checkpoint weights (adopting its architecture), or a fresh encoder for 'none'."""
    if path is None or path.lower() == "none":
        return init_encoder(run.encoder, stream_rng(run.seed, "init"), dtype=run.train.dtype)
    ckpt = load_checkpoint(path, dtype=run.train.dtype)
    saved = RunConfig.from_dict(ckpt.run_config) if ckpt.run_config else None
    if saved is not None:
        run.grid, run.encoder = saved.grid, saved.encoder
    return ckpt.params


def _emit(run: RunConfig, name: str, payload: dict) -> str:
    path = os.path.join(run.out, name)
    write_files({path: dump_json(stamp(payload, run.to_dict()))})
    return path


def cmd_synth(run: RunConfig, args) -> int:
    for split, count, heldout in (("train", run.sequences, False), ("heldout", run.heldout, True)):
        seeds = sequence_seeds(run.seed, count, heldout=heldout)
        items = generate_many(run.scene, seeds)
        root = os.path.join(run.out, split)
        write_dataset(root, items, stamp({"split": split, "seeds": seeds}, run.to_dict()))
        print(f"{split}: {count} sequences -> {root}")
    return 0


def cmd_train(run: RunConfig, args) -> int:
    dataset = load_dataset(args.data)
    heldout = load_dataset(args.heldout) if args.heldout else None
    result = fit(dataset, run, out_dir=run.out, heldout=heldout)
    last = result.history[-1]["total"] if result.history else float("nan")
    print(f"steps: {run.train.steps}  final loss: {last:.6f}  checkpoint: {os.path.join(run.out, 'final.cwck')}")
    return 0


def cmd_eval_walk(run: RunConfig, args) -> int:
    dataset = load_dataset(args.data)
    params = _load_params(args.checkpoint, run)
    report = evaluate_walks(params, dataset, run.grid, run.encoder, run.walk.temperature, args.hops)
    payload = {"checkpoint": args.checkpoint, "metrics": report.to_dict()}
    if args.baseline:
        random = init_encoder(run.encoder, stream_rng(run.seed, "init"), dtype=run.train.dtype)
        baseline = evaluate_walks(random, dataset, run.grid, run.encoder, run.walk.temperature, args.hops)
        payload["baseline"] = baseline.to_dict()
    for k, acc in report.walk_accuracy.items():
        line = f"hop {k}: walk accuracy {acc:.4f}"
        if args.baseline and k in baseline.walk_accuracy:
            line += f"  (untrained {baseline.walk_accuracy[k]:.4f})"
        print(line)
    _emit(run, "eval_walk.json", payload)
    return 0


def cmd_propagate(run: RunConfig, args) -> int:
    dataset = load_dataset(args.data)
    params = _load_params(args.checkpoint, run)
    predictions, scores = [], []
    for index, (seq, gt) in enumerate(zip(dataset.sequences, dataset.truths)):
        geometry = grid_geometry(seq.frame_shape, run.grid)
        result = propagate_sequence(params, seq.frames, grid_labels(gt, geometry)[0], run.grid, run.encoder,
                                    run.propagation)
        scores.append(propagation_score(result.hard, node_classes(gt, geometry)))
        predictions.append({"sequence": index, **export_predictions(result)})
    mean_iou = float(np.mean(scores)) if scores else 0.0
    print(f"mean IoU over {len(scores)} sequences: {mean_iou:.4f}")
    _emit(run, "propagation.json", {"checkpoint": args.checkpoint, "mean_iou": mean_iou, "per_sequence": scores})
    _emit(run, "predictions.json", {"sequences": predictions})
    return 0


def cmd_adapt(run: RunConfig, args) -> int:
    dataset = load_dataset(args.data)
    params = _load_params(args.checkpoint, run)
    rng = stream_rng(run.seed, "adapt")
    plain = evaluate_propagation(params, dataset, run.grid, run.encoder, run.propagation)
    adapted_scores, improved, windows = [], 0, 0
    for seq, gt in zip(dataset.sequences, dataset.truths):
        geometry = grid_geometry(seq.frame_shape, run.grid)
        result = adapt_and_propagate(params, seq.frames, grid_labels(gt, geometry)[0], run.grid, run.encoder,
                                     run.propagation, run.adapt, run.walk, rng=rng)
        adapted_scores.append(propagation_score(result.hard, node_classes(gt, geometry)))
        for a in result.adaptations:
            windows += 1
            improved += a["after"] < a["before"]
    adapted_iou = float(np.mean(adapted_scores)) if adapted_scores else 0.0
    print(f"IoU without adaptation {plain['mean_iou']:.4f}, with adaptation {adapted_iou:.4f}")
    print(f"window loss decreased in {improved}/{windows} adaptations")
    _emit(run, "adapt.json", {
        "checkpoint": args.checkpoint,
        "mean_iou": {"plain": plain["mean_iou"], "adapted": adapted_iou,
                     "delta": adapted_iou - plain["mean_iou"]},
        "per_sequence": {"plain": plain["per_sequence"], "adapted": adapted_scores},
        "windows": {"count": windows, "decreased": improved},
    })
    return 0


def cmd_gradcheck(run: RunConfig, args) -> int:
    worst = 0.0
    for offset in range(args.seeds):
        for clip_length in (2, 3, 4):
            worst = max(worst, gradient_check(run.seed + offset, clip_length, h=args.step))
    print(f"max relative error: {worst:.3e}")
    _emit(run, "gradcheck.json", {"max_relative_error": worst, "seeds": args.seeds, "step": args.step})
    return 0 if worst < GRADCHECK_BOUND else 1


def cmd_lemma(run: RunConfig, args) -> int:
    result = lemma_property_run(args.draws, seed=run.seed)
    print(f"draws: {result.draws}  min lambda_u: {result.min_lambda:.3e}  "
          f"max autodiff disagreement: {result.max_disagreement:.3e}")
    _emit(run, "lemma.json", {"draws": result.draws, "min_lambda": result.min_lambda,
                              "max_disagreement": result.max_disagreement, "passed": result.passed})
    return 0 if result.passed else 1


def cmd_sweep(run: RunConfig, args) -> int:
    train_data: Optional[SequenceDataset] = load_dataset(args.data) if args.data else None
    heldout = load_dataset(args.heldout) if args.heldout else generate_dataset(run, heldout=True)
    params = _load_params(args.checkpoint, run) if args.checkpoint else None
    values = [int(v) if float(v).is_integer() and args.axis != "edge-dropout" else v for v in args.values]
    rows = run_sweep(args.axis, values, run, heldout, train_data=train_data, params=params, out_dir=run.out)
    for row in rows:
        acc = row.get("walk_accuracy", {}).get(3)
        print(f"{args.axis}={row['value']}: {row['status']}"
              + (f"  walk@3 {acc:.4f}  IoU {row['mean_iou']:.4f}" if acc is not None else ""))
    return 0


COMMANDS = {
    "synth": cmd_synth, "train": cmd_train, "eval-walk": cmd_eval_walk, "propagate": cmd_propagate,
    "adapt": cmd_adapt, "gradcheck": cmd_gradcheck, "lemma": cmd_lemma, "sweep": cmd_sweep,
}


def run_cli(argv: Optional[List[str]] = None) -> int:
    """Exit code: 0 ok, 1 failed run or check, 2 bad usage."""
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        logging.error(json.dumps({"error": type(e).__name__, "message": e.message, "details": e.details}))
        return 2
    started = time.time()
    print(f"------------------ {args.command} ------------------")
    try:
        run = resolve_config(args)
        code = COMMANDS[args.command](run, args)
    except CycleWalkError as e:
        logging.error(json.dumps({"error": type(e).__name__, "message": e.message, "details": e.details},
                                 default=str))
        return 1
    except Exception:
        logging.error(traceback.format_exc())
        return 1
    print(f"------------------ DONE in {get_readable_time(time.time() - started)} ------------------")
    return code
