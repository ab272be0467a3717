"""Command-line driver for the dataset-to-service pipeline.

Commands: synth, train, evaluate, diagnose, project, steer, serve.
Exit codes: 0 success, 1 invalid input (flags, files, values), 2 runtime
failure (diverged training, I/O trouble mid-run). Every command is
deterministic given its flags; all randomness descends from --seed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .data import (
    Dataset,
    Split,
    generate_synthetic,
    load_dataset,
    load_split_config,
    make_split,
    save_dataset,
    standardize_signatures,
)
from .diagnostics import export_diagnostics
from .errors import CheckpointError, DataFormatError, ZslensError
from .model import TrainConfig, evaluate, load_checkpoint, save_checkpoint, train
from .projection import TsneConfig, default_perplexity, project
from .steering import GUIDANCE_FLOOR, SteeringState, diagnose, retrain


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad flags; the contract reserves 2 for runtime
    # failures and 1 for invalid input.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    cfg = TrainConfig()
    p.add_argument("--epochs", type=int, default=cfg.epochs, help=f"training epochs (default {cfg.epochs})")
    p.add_argument("--batch-size", type=int, default=cfg.batch_size, help=f"minibatch size (default {cfg.batch_size})")
    p.add_argument("--lr", type=float, default=cfg.learning_rate, help=f"learning rate (default {cfg.learning_rate})")
    p.add_argument("--momentum", type=float, default=cfg.momentum, help=f"SGD momentum (default {cfg.momentum})")
    p.add_argument("--weight-decay", type=float, default=cfg.weight_decay, help=f"L2 penalty (default {cfg.weight_decay})")
    p.add_argument("--margin", type=float, default=cfg.margin_eta, help=f"hinge margin (default {cfg.margin_eta})")
    p.add_argument("--hidden", type=int, default=cfg.hidden_dim, help=f"hidden layer width (default {cfg.hidden_dim})")


def _train_config(args, seed: int) -> TrainConfig:
    return TrainConfig(
        margin_eta=args.margin,
        learning_rate=args.lr,
        momentum=args.momentum,
        batch_size=args.batch_size,
        epochs=args.epochs,
        weight_decay=args.weight_decay,
        hidden_dim=args.hidden,
        seed=seed,
    )


def _add_data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--unseen", default=None,
                   help="comma-separated unseen class names (default: from split.json)")
    p.add_argument("--diag-fraction", type=float, default=None,
                   help="held-out diagnostic fraction per seen class (default: split.json value or 0.2)")


def _resolve_split(dataset: Dataset, args, fallback_seed: int) -> Split:
    """Split from --unseen when given, else from the directory's split.json."""
    stored = load_split_config(args.data)
    if args.unseen is not None:
        unseen = [n.strip() for n in args.unseen.split(",") if n.strip()]
    elif stored is not None:
        unseen = list(stored["unseen"])
    else:
        raise ValueError("no --unseen flag and no split.json in the dataset directory")
    diag_fraction = args.diag_fraction
    if diag_fraction is None:
        diag_fraction = float(stored.get("diag_fraction", 0.2)) if stored else 0.2
    seed = fallback_seed
    if stored is not None and "seed" in stored and getattr(args, "seed", None) is None:
        seed = int(stored["seed"])
    return make_split(dataset, unseen, diag_fraction=diag_fraction, seed=seed)


def _load_weights_file(path: str, n_attributes: int) -> np.ndarray:
    with open(path) as f:
        payload = json.load(f)
    if not isinstance(payload, dict) or "weights" not in payload:
        raise ValueError(f'{path}: expected {{"weights": [...]}}')
    w = np.asarray(payload["weights"], dtype=np.float64)
    if w.shape != (n_attributes,):
        raise ValueError(f"{path}: expected {n_attributes} weights, got shape {w.shape}")
    return w


def _warn_below_guidance(w: np.ndarray) -> None:
    for k in np.flatnonzero(w < GUIDANCE_FLOOR):
        print(
            f"warning: weight for attribute {int(k)} is {w[k]:.2f}, below the "
            f"{GUIDANCE_FLOOR} guidance floor; values in [0.5, 0.7] tend to work best",
            file=sys.stderr,
        )


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


# -- subcommands -------------------------------------------------------------


def _cmd_synth(args) -> int:
    dataset = generate_synthetic(
        C_seen=args.seen,
        C_unseen=args.unseen,
        a=args.attrs,
        d=args.dim,
        per_class=args.per_class,
        noise_sigma=args.noise,
        corrupt_attribute=args.corrupt,
        seed=args.seed,
    )
    unseen_names = [n for n in dataset.class_names if n.startswith("unseen_")]
    save_dataset(
        dataset,
        args.out,
        split_info={
            "unseen": unseen_names,
            "diag_fraction": args.diag_fraction,
            "seed": args.seed,
        },
    )
    print(f"wrote {dataset.n_instances} instances, {dataset.n_classes} classes to {args.out}")
    return 0


def _cmd_train(args) -> int:
    dataset = load_dataset(args.data)
    seed = args.seed if args.seed is not None else 0
    split = _resolve_split(dataset, args, seed)
    signatures = standardize_signatures(dataset.raw_attributes)
    if args.weights:
        w = _load_weights_file(args.weights, dataset.n_attributes)
    else:
        w = np.ones(dataset.n_attributes)
    _warn_below_guidance(w)
    config = _train_config(args, seed)
    model, report = train(dataset, split, signatures, w, config)
    save_checkpoint(args.out, model, w, config)
    print(f"trained {report.epochs_run} epochs, final loss {report.final_loss:.6f}, saved {args.out}")
    return 0


def _load_model_session(args):
    """Shared loader for commands that start from a checkpoint."""
    model, w, config = load_checkpoint(args.model)
    dataset = load_dataset(args.data)
    if model.d != dataset.n_features or model.a != dataset.n_attributes:
        raise ValueError(
            f"checkpoint expects d={model.d}, a={model.a}; dataset has "
            f"d={dataset.n_features}, a={dataset.n_attributes}"
        )
    seed = args.seed if args.seed is not None else config.seed
    split = _resolve_split(dataset, args, seed)
    signatures = standardize_signatures(dataset.raw_attributes)
    return model, w, config, dataset, split, signatures


def _cmd_evaluate(args) -> int:
    model, w, _config, dataset, split, signatures = _load_model_session(args)
    if args.on == "diag":
        instances, candidates = split.diag_instances, split.seen_classes
    else:
        instances = np.flatnonzero(np.isin(dataset.labels, list(split.unseen_classes)))
        candidates = split.unseen_classes
        if instances.size == 0:
            raise ValueError("dataset has no instances of the unseen classes")
    metrics = evaluate(model, instances, candidates, dataset, signatures, w)
    print(
        f"{args.on}: overall {metrics.overall:.4f} mean_per_class "
        f"{metrics.mean_per_class:.4f} ({metrics.n_correct}/{metrics.n_instances})"
    )
    if args.out:
        _write_json(args.out, metrics.to_dict(dataset.class_names))
    return 0


def _cmd_diagnose(args) -> int:
    model, w, _config, dataset, split, signatures = _load_model_session(args)
    summary = diagnose(model, dataset, split, signatures, w)
    unseen_rows = (
        signatures.signatures[list(split.unseen_classes)]
        if split.unseen_classes
        else None
    )
    payload = export_diagnostics(summary, dataset, unseen_rows)
    payload["weights"] = [float(v) for v in w]
    _write_json(args.out, payload)
    n_cells = sum(1 for _ in summary.fp_breakdown)
    print(f"diagnosed {len(summary.selected_categories)} categories, {n_cells} non-empty cells, wrote {args.out}")
    return 0


def _cmd_project(args) -> int:
    dataset = load_dataset(args.data)
    signatures = standardize_signatures(dataset.raw_attributes)
    stored = load_split_config(args.data)
    if args.unseen is not None:
        unseen_names = [n.strip() for n in args.unseen.split(",") if n.strip()]
    elif stored is not None:
        unseen_names = list(stored["unseen"])
    else:
        unseen_names = []
    unseen = {dataset.class_index(n) for n in unseen_names}
    seen_mask = np.array([i not in unseen for i in range(dataset.n_classes)])

    perplexity = args.perplexity
    if perplexity is None:
        perplexity = default_perplexity(dataset.n_classes)
    config = TsneConfig(
        perplexity=perplexity,
        iterations=args.iterations,
        early_exaggeration=args.exaggeration,
        learning_rate=args.lr,
        momentum_start=args.momentum_start,
        momentum_final=args.momentum_final,
        seed=args.seed if args.seed is not None else 0,
    )
    result = project(signatures.signatures, config, seen_mask)
    _write_json(
        args.out,
        {
            "classes": list(dataset.class_names),
            "seen": [bool(v) for v in result.seen_mask],
            "coords": result.coords.tolist(),
            "kl": result.final_kl,
        },
    )
    print(f"projected {dataset.n_classes} classes, final KL {result.final_kl:.4f}, wrote {args.out}")
    return 0


def _cmd_steer(args) -> int:
    model, _w_old, config, dataset, split, signatures = _load_model_session(args)
    w = _load_weights_file(args.weights, dataset.n_attributes)
    if (w < 0).any() or (w > 1).any():
        raise ValueError(f"{args.weights}: weights must lie in [0, 1]")
    _warn_below_guidance(w)
    state = SteeringState(weights=w, revision=0, history=())
    before = evaluate(model, split.diag_instances, split.seen_classes, dataset, signatures, w)
    new_model, report, _summary = retrain(dataset, split, signatures, state, config)
    after = evaluate(new_model, split.diag_instances, split.seen_classes, dataset, signatures, w)
    save_checkpoint(args.out, new_model, w, config)
    print(
        f"retrained {report.epochs_run} epochs, final loss {report.final_loss:.6f}; "
        f"diag overall {before.overall:.4f} -> {after.overall:.4f}, saved {args.out}"
    )
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import Session, create_app

    model, w, config, dataset, split, signatures = _load_model_session(args)
    if not np.array_equal(w, np.ones_like(w)):
        # The steering state always starts at all-ones; a checkpoint trained
        # under other weights would disagree with it.
        print(
            "warning: checkpoint was trained with non-identity attribute weights; "
            "the service starts from an all-ones steering state",
            file=sys.stderr,
        )
    session = Session(
        dataset, split, signatures, model, config, eval_unseen=args.eval_unseen
    )
    app = create_app(session, static_dir=args.static)
    print(f"serving on http://{args.host}:{args.port}")
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


# -- parser wiring -----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="zslens", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset directory")
    p.add_argument("--seen", type=int, required=True, help="number of seen classes")
    p.add_argument("--unseen", type=int, required=True, help="number of unseen classes")
    p.add_argument("--attrs", type=int, required=True, help="number of attributes")
    p.add_argument("--dim", type=int, required=True, help="feature dimensionality")
    p.add_argument("--per-class", type=int, required=True, help="instances per class")
    p.add_argument("--noise", type=float, default=0.3, help="feature noise stddev (default 0.3)")
    p.add_argument("--corrupt", type=int, default=None,
                   help="attribute index whose feature channel becomes pure noise (default none)")
    p.add_argument("--diag-fraction", type=float, default=0.2,
                   help="diagnostic holdout fraction recorded in split.json (default 0.2)")
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("train", help="train a mapping model and write a checkpoint")
    _add_data_flags(p)
    _add_train_flags(p)
    p.add_argument("--weights", default=None, help='JSON weights file {"weights": [...]} (default all ones)')
    p.add_argument("--seed", type=int, default=None, help="random seed (default 0, or split.json's for the split)")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="accuracy of a checkpoint on a dataset")
    p.add_argument("--model", required=True, help="checkpoint path")
    _add_data_flags(p)
    p.add_argument("--on", choices=("diag", "unseen"), default="unseen",
                   help="evaluate the diagnostic holdout or the unseen classes (default unseen)")
    p.add_argument("--seed", type=int, default=None, help="split seed (default: checkpoint's)")
    p.add_argument("--out", default=None, help="optional JSON metrics output path")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("diagnose", help="misprediction diagnostics to JSON")
    p.add_argument("--model", required=True, help="checkpoint path")
    _add_data_flags(p)
    p.add_argument("--seed", type=int, default=None, help="split seed (default: checkpoint's)")
    p.add_argument("--out", required=True, help="diagnostics JSON output path")
    p.set_defaults(func=_cmd_diagnose)

    p = sub.add_parser("project", help="2-D embedding of the class signatures")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--unseen", default=None,
                   help="comma-separated unseen class names (default: split.json, else none)")
    p.add_argument("--perplexity", type=float, default=None,
                   help="target perplexity (default min(30, (N-1)/3))")
    p.add_argument("--iterations", type=int, default=1000, help="gradient steps (default 1000)")
    p.add_argument("--exaggeration", type=float, default=12.0, help="early exaggeration factor (default 12)")
    p.add_argument("--lr", type=float, default=200.0, help="embedding learning rate (default 200)")
    p.add_argument("--momentum-start", type=float, default=0.5, help="momentum before iteration 250 (default 0.5)")
    p.add_argument("--momentum-final", type=float, default=0.8, help="momentum from iteration 250 (default 0.8)")
    p.add_argument("--seed", type=int, default=None, help="random seed (default 0)")
    p.add_argument("--out", required=True, help="projection JSON output path")
    p.set_defaults(func=_cmd_project)

    p = sub.add_parser("steer", help="apply a weights file and retrain")
    p.add_argument("--model", required=True, help="base checkpoint path")
    _add_data_flags(p)
    p.add_argument("--weights", required=True, help='JSON weights file {"weights": [...]}')
    p.add_argument("--seed", type=int, default=None, help="split seed (default: checkpoint's)")
    p.add_argument("--out", required=True, help="retrained checkpoint output path")
    p.set_defaults(func=_cmd_steer)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--model", required=True, help="checkpoint path")
    _add_data_flags(p)
    p.add_argument("--seed", type=int, default=None, help="split seed (default: checkpoint's)")
    p.add_argument("--host", default="127.0.0.1", help="bind address (default 127.0.0.1)")
    p.add_argument("--port", type=int, default=8000, help="port (default 8000)")
    p.add_argument("--static", default=None, help="directory with the UI bundle to serve at /")
    p.add_argument("--eval-unseen", action="store_true",
                   help="expose unseen-class metrics (experiments only; never affects training)")
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except (DataFormatError, CheckpointError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (ValueError, FileNotFoundError, IsADirectoryError, NotADirectoryError,
            json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except ZslensError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
