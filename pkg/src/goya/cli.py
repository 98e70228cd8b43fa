"""Command line frontend.

Commands: gen-prompts, gen-synthetic, train, export, eval-dc, eval-probe,
retrieve. Every command exits 0 on success and nonzero with a single-line
JSON error on stderr otherwise. All randomness flows from --rng-seed; with
--threads 1 two identical invocations produce identical artifacts.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig
from .data import (
    GENRES,
    STYLE_MOVEMENTS,
    Dataset,
    gen_prompt_manifest,
    gen_synthetic_dataset,
    read_dataset,
    read_label_table,
    write_dataset,
)
from .errors import ConfigError, DataError, GoyaError, UsageError
from .metrics import (
    ProbeConfig,
    distance_correlation_subsampled,
    evaluate_probe,
    retrieve_topk,
    train_probe,
)
from .model import GoyaModel
from .train import run_training


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # noqa: D102 - argparse hook
        raise UsageError(message)


def _emit(obj) -> None:
    print(json.dumps(obj))


def _read_lines(path) -> list[str]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    out = [line for line in lines if line.strip()]
    if not out:
        raise DataError(f"{path}: no non-empty lines")
    return out


# ---- commands ---------------------------------------------------------------


def cmd_gen_prompts(args) -> int:
    contents = _read_lines(args.contents)
    styles = read_label_table(args.styles) if args.styles else list(STYLE_MOVEMENTS)
    manifest = gen_prompt_manifest(contents, styles, args.per_content,
                                   args.seeds_per_prompt, getattr(args, "rng_seed", 0))
    manifest.write_jsonl(args.out)
    _emit({"prompts": manifest.n_prompts, "specs": manifest.n_specs, "out": str(args.out)})
    return 0


def cmd_gen_synthetic(args) -> int:
    ds = gen_synthetic_dataset(
        n=args.n, content_clusters=args.content_clusters, style_classes=args.style_classes,
        d_img=args.d_img, d_txt=args.d_txt, noise=args.noise,
        rng_seed=getattr(args, "rng_seed", 0), latent_dim=args.latent_dim,
        content_scale=args.content_scale, style_scale=args.style_scale,
        text_noise=args.text_noise,
    )
    write_dataset(ds, args.out)
    _emit({"records": len(ds), "d_img": ds.d_img, "d_txt": ds.d_txt,
           "n_styles": ds.n_styles, "out": str(args.out)})
    return 0


_TRAIN_OVERRIDES = (
    ("lr", "optimizer", "lr"),
    ("lr_decay", "optimizer", "lr_decay"),
    ("epochs", "optimizer", "epochs"),
    ("batch_size", "optimizer", "batch_size"),
    ("eps_t", "loss", "eps_t"),
    ("eps_c", "loss", "eps_c"),
    ("eps_s", "loss", "eps_s"),
    ("lambda_c", "loss", "lambda_c"),
    ("lambda_s", "loss", "lambda_s"),
    ("lambda_sc", "loss", "lambda_sc"),
    ("ablation", "loss", "ablation"),
    ("ntxent_temperature", "loss", "ntxent_temperature"),
    ("triplet_margin", "loss", "triplet_margin"),
    ("embed_dim", "architecture", "embed_dim"),
    ("proj_dim", "architecture", "proj_dim"),
    ("input_dim", "architecture", "input_dim"),
    ("n_styles", "architecture", "n_styles"),
)


def _resolve_run_config(args, train_ds: Dataset) -> RunConfig:
    """Merge precedence: built-in defaults < --config file < explicit flags.

    input_dim and n_styles fall back to the training file's header when not
    set anywhere; explicit values must agree with the data.
    """
    merged: dict = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        try:
            merged = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(merged, dict):
            raise ConfigError(f"{path}: run config must be a JSON object")
    for attr, section, key in _TRAIN_OVERRIDES:
        if hasattr(args, attr):
            merged.setdefault(section, {})[key] = getattr(args, attr)
    if getattr(args, "no_classifier", False):
        merged.setdefault("loss", {})["use_classifier"] = False
    if getattr(args, "single_layer", False):
        merged.setdefault("architecture", {})["single_layer"] = True
    if hasattr(args, "rng_seed"):
        merged["rng_seed"] = args.rng_seed
    arch = merged.setdefault("architecture", {})
    arch.setdefault("input_dim", train_ds.d_img)
    arch.setdefault("n_styles", max(train_ds.n_styles, 1))
    cfg = RunConfig.from_dict(merged)
    if cfg.arch.input_dim != train_ds.d_img:
        raise ConfigError(
            f"input_dim={cfg.arch.input_dim} does not match the training file's "
            f"d_img={train_ds.d_img}"
        )
    return cfg


def cmd_train(args) -> int:
    train_ds = read_dataset(args.train)
    val_ds = read_dataset(args.val)
    cfg = _resolve_run_config(args, train_ds)
    result = run_training(cfg, train_ds, val_ds, args.out_dir)
    _emit({
        "best_checkpoint": str(result.best_checkpoint),
        "final_checkpoint": str(result.final_checkpoint),
        "log": str(result.log_path),
        "best_epoch": result.best_epoch,
        "best_val_total": result.best_val_total,
    })
    return 0


def cmd_export(args) -> int:
    model = GoyaModel.load(args.checkpoint)
    ds = read_dataset(args.data)
    if ds.d_img != model.config.input_dim:
        raise ConfigError(
            f"data d_img={ds.d_img} does not match checkpoint input_dim={model.config.input_dim}"
        )
    content = model.encode_content(ds.images, args.batch_size).astype(np.float32)
    style = model.encode_style(ds.images, args.batch_size).astype(np.float32)
    for mat, out in ((content, args.out_content), (style, args.out_style)):
        emb = Dataset(
            record_ids=ds.record_ids, content_ids=ds.content_ids, style_ids=ds.style_ids,
            genre_ids=ds.genre_ids, content_clusters=ds.content_clusters,
            images=mat, texts=None, n_styles=ds.n_styles,
        )
        write_dataset(emb, out)
    _emit({"records": len(ds), "embed_dim": model.config.embed_dim,
           "out_content": str(args.out_content), "out_style": str(args.out_style)})
    return 0


def cmd_eval_dc(args) -> int:
    content = read_dataset(args.content)
    style = read_dataset(args.style)
    if len(content) != len(style) or not np.array_equal(content.record_ids, style.record_ids):
        raise DataError("content and style files do not cover the same record ids in order")
    dc, n_used = distance_correlation_subsampled(
        content.images.astype(np.float64), style.images.astype(np.float64),
        max_n=args.max_n, rng_seed=getattr(args, "rng_seed", 0),
    )
    _emit({"dc": dc, "n_total": len(content), "n_used": n_used})
    return 0


_LABEL_COLUMNS = {
    "style": "style_ids",
    "genre": "genre_ids",
    "content-cluster": "content_clusters",
}


def cmd_eval_probe(args) -> int:
    train_ds = read_dataset(args.train)
    test_ds = read_dataset(args.test)
    column = _LABEL_COLUMNS[args.label]
    y_train = getattr(train_ds, column).astype(np.int64)
    y_test = getattr(test_ds, column).astype(np.int64)
    for name, y in (("train", y_train), ("test", y_test)):
        if (y < 0).any():
            bad = int(np.flatnonzero(y < 0)[0])
            raise DataError(f"{name} record {bad} lacks a {args.label} label")
    n_classes = int(max(y_train.max(), y_test.max())) + 1
    if args.label == "style":
        n_classes = max(n_classes, train_ds.n_styles, test_ds.n_styles)
    cfg = ProbeConfig(lr=args.lr, momentum=args.momentum, epochs=args.epochs,
                      batch_size=args.batch_size)
    probe = train_probe(train_ds.images.astype(np.float64), y_train, n_classes,
                        cfg, getattr(args, "rng_seed", 0))
    result = evaluate_probe(probe, test_ds.images.astype(np.float64), y_test)
    if args.confusion_out:
        result.confusion.write_csv(args.confusion_out)
    per_class = [None if np.isnan(v) else float(v)
                 for v in result.confusion.per_class_accuracy()]
    _emit({
        "label": args.label, "accuracy": result.accuracy, "n_classes": n_classes,
        "n_train": len(train_ds), "n_test": len(test_ds),
        "per_class_accuracy": per_class,
        "confusion_out": str(args.confusion_out) if args.confusion_out else None,
    })
    return 0


def cmd_retrieve(args) -> int:
    ds = read_dataset(args.db)
    pos = np.flatnonzero(ds.record_ids == np.uint64(args.query_id))
    if pos.size == 0:
        raise DataError(f"record id {args.query_id} not found in {args.db}")
    row = int(pos[0])
    idx, sims = retrieve_topk(ds.images[row].astype(np.float64),
                              ds.images.astype(np.float64), args.k)
    lines = ["query_id,rank,result_id,similarity"]
    for rank, (i, s) in enumerate(zip(idx, sims), start=1):
        lines.append(f"{args.query_id},{rank},{int(ds.record_ids[i])},{s:.6f}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


# ---- parser ---------------------------------------------------------------------


def _build_parser() -> _Parser:
    common = _Parser(add_help=False)
    common.add_argument("--rng-seed", type=int, default=argparse.SUPPRESS,
                        help="seed for all randomness (default: 0)")
    common.add_argument("--threads", type=int, default=0,
                        help="cap BLAS threads; 1 gives bit-reproducible runs "
                             "(default: 0 = library default)")
    common.add_argument("--config", type=str, default=None,
                        help="JSON run config; explicit flags override it (default: none)")

    parser = _Parser(prog="goya", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-prompts", parents=[common],
                       help="build the content x style x seed prompt manifest")
    p.add_argument("--contents", required=True, help="text file, one content description per line")
    p.add_argument("--styles", default=None,
                   help="style label CSV (default: built-in 27 style movements)")
    p.add_argument("--per-content", type=int, default=5,
                   help="styles sampled per content without replacement (default: 5)")
    p.add_argument("--seeds-per-prompt", type=int, default=5,
                   help="generation seeds per prompt (default: 5)")
    p.add_argument("--out", required=True, help="output JSONL path")
    p.set_defaults(func=cmd_gen_prompts)

    p = sub.add_parser("gen-synthetic", parents=[common],
                       help="sample a factor-model dataset with known ground truth")
    p.add_argument("--n", type=int, required=True, help="number of records")
    p.add_argument("--content-clusters", type=int, required=True, help="number of content clusters")
    p.add_argument("--style-classes", type=int, required=True, help="number of style classes")
    p.add_argument("--d-img", type=int, default=512, help="image embedding dim (default: 512)")
    p.add_argument("--d-txt", type=int, default=512, help="text embedding dim (default: 512)")
    p.add_argument("--noise", type=float, default=0.3,
                   help="image noise level relative to unit signal (default: 0.3)")
    p.add_argument("--text-noise", type=float, default=None,
                   help="text noise level (default: same as --noise)")
    p.add_argument("--latent-dim", type=int, default=32, help="latent factor dim (default: 32)")
    p.add_argument("--content-scale", type=float, default=1.0,
                   help="content component magnitude (default: 1.0)")
    p.add_argument("--style-scale", type=float, default=1.0,
                   help="style component magnitude (default: 1.0)")
    p.add_argument("--out", required=True, help="output GEMB path")
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("train", parents=[common], help="train the encoders")
    p.add_argument("--train", required=True, help="training GEMB file")
    p.add_argument("--val", required=True, help="validation GEMB file")
    p.add_argument("--out-dir", required=True, help="directory for checkpoints and log")
    p.add_argument("--epochs", type=int, default=argparse.SUPPRESS,
                   help="training epochs (default: 30)")
    p.add_argument("--batch-size", type=int, default=argparse.SUPPRESS,
                   help="minibatch size (default: 512)")
    p.add_argument("--lr", type=float, default=argparse.SUPPRESS,
                   help="Adam learning rate (default: 0.0005)")
    p.add_argument("--lr-decay", type=float, default=argparse.SUPPRESS,
                   help="per-epoch lr decay factor (default: 0.9)")
    p.add_argument("--eps-t", type=float, default=argparse.SUPPRESS,
                   help="text cosine-distance threshold for content positives (default: 0.25)")
    p.add_argument("--eps-c", type=float, default=argparse.SUPPRESS,
                   help="content negative-pair margin (default: 0.5)")
    p.add_argument("--eps-s", type=float, default=argparse.SUPPRESS,
                   help="style negative-pair margin (default: 0.5)")
    p.add_argument("--lambda-c", type=float, default=argparse.SUPPRESS,
                   help="content loss weight (default: 1.0)")
    p.add_argument("--lambda-s", type=float, default=argparse.SUPPRESS,
                   help="style loss weight (default: 1.0)")
    p.add_argument("--lambda-sc", type=float, default=argparse.SUPPRESS,
                   help="style classifier loss weight (default: 1.0)")
    p.add_argument("--ablation", choices=["goya-contrastive", "triplet", "ntxent"],
                   default=argparse.SUPPRESS,
                   help="pair loss variant (default: goya-contrastive)")
    p.add_argument("--ntxent-temperature", type=float, default=argparse.SUPPRESS,
                   help="NT-Xent temperature (default: 0.5)")
    p.add_argument("--triplet-margin", type=float, default=argparse.SUPPRESS,
                   help="triplet margin (default: 0.5)")
    p.add_argument("--no-classifier", action="store_true",
                   help="drop the style classifier term (default: classifier on)")
    p.add_argument("--embed-dim", type=int, default=argparse.SUPPRESS,
                   help="encoder output dim (default: 2048)")
    p.add_argument("--proj-dim", type=int, default=argparse.SUPPRESS,
                   help="projector output dim (default: 64)")
    p.add_argument("--input-dim", type=int, default=argparse.SUPPRESS,
                   help="joint embedding dim (default: from the training file)")
    p.add_argument("--n-styles", type=int, default=argparse.SUPPRESS,
                   help="classifier classes (default: from the training file)")
    p.add_argument("--single-layer", action="store_true",
                   help="single linear layer per encoder (default: two layers)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("export", parents=[common],
                       help="run a checkpoint over a dataset, writing both embedding spaces")
    p.add_argument("--checkpoint", required=True, help="GCKP checkpoint path")
    p.add_argument("--data", required=True, help="input GEMB file")
    p.add_argument("--out-content", required=True, help="output GEMB for the content space")
    p.add_argument("--out-style", required=True, help="output GEMB for the style space")
    p.add_argument("--batch-size", type=int, default=1024,
                   help="forward batch size (default: 1024)")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("eval-dc", parents=[common],
                       help="distance correlation between two embedding files")
    p.add_argument("--content", required=True, help="content-space GEMB file")
    p.add_argument("--style", required=True, help="style-space GEMB file")
    p.add_argument("--max-n", type=int, default=20000,
                   help="subsample cap on rows (default: 20000)")
    p.set_defaults(func=cmd_eval_dc)

    p = sub.add_parser("eval-probe", parents=[common],
                       help="train and score a linear probe on frozen embeddings")
    p.add_argument("--train", required=True, help="training GEMB file")
    p.add_argument("--test", required=True, help="held-out GEMB file")
    p.add_argument("--label", choices=sorted(_LABEL_COLUMNS), required=True,
                   help="which label column to probe")
    p.add_argument("--lr", type=float, default=0.02, help="probe learning rate (default: 0.02)")
    p.add_argument("--momentum", type=float, default=0.9, help="probe momentum (default: 0.9)")
    p.add_argument("--epochs", type=int, default=90, help="probe epochs (default: 90)")
    p.add_argument("--batch-size", type=int, default=4096,
                   help="probe batch size, capped at the train size (default: 4096)")
    p.add_argument("--confusion-out", default=None,
                   help="write the confusion matrix CSV here (default: not written)")
    p.set_defaults(func=cmd_eval_probe)

    p = sub.add_parser("retrieve", parents=[common],
                       help="top-k nearest records by cosine similarity")
    p.add_argument("--db", required=True, help="GEMB file to search")
    p.add_argument("--query-id", type=int, required=True, help="record id of the query")
    p.add_argument("--k", type=int, default=5, help="neighbors to return (default: 5)")
    p.add_argument("--out", default=None, help="output CSV path (default: stdout)")
    p.set_defaults(func=cmd_retrieve)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        threads = getattr(args, "threads", 0)
        if threads:
            from threadpoolctl import threadpool_limits

            with threadpool_limits(limits=threads):
                return args.func(args)
        return args.func(args)
    except UsageError as exc:
        _print_error(exc)
        return 2
    except (GoyaError, OSError) as exc:
        _print_error(exc)
        return 1


def _print_error(exc: Exception) -> None:
    message = " ".join(str(exc).split())
    print(json.dumps({"error": type(exc).__name__, "message": message}), file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
