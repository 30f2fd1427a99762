"""Command-line front end: synthesis, batch runs, training, caching, checks.

Exit codes: 0 on success, 1 on usage errors (bad flags or arguments), 2 on
runtime failures (missing files, invalid data, failed checks).  Runtime
failures print a single diagnostic line to stderr that includes the
offending path or stage.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import List, Optional

from sketchsynth.config import PRESETS, SynthesisConfig, apply_preset, load_config
from sketchsynth.content import ContentNetConfig, train
from sketchsynth.manifest import load_manifest
from sketchsynth.pipeline import (
    StageError,
    _align_pair,
    load_exemplars,
    load_weights,
    run_batch,
    synthesize_file,
)
from sketchsynth.selfcheck import all_ok, run_selfcheck

USAGE_ERROR = 1
RUNTIME_ERROR = 2


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; the contract here is 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(USAGE_ERROR)


def _build_parser() -> _Parser:
    parser = _Parser(prog="sketchsynth", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_flags(p):
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--preset", choices=PRESETS, help="named loss-weight preset")

    p = sub.add_parser("synth", help="synthesize a sketch for one photo")
    p.add_argument("--photo", required=True, help="input photo (PNG or PGM)")
    p.add_argument("--out", required=True, help="output sketch PNG")
    p.add_argument(
        "--eyes",
        help="eye centers as lx,ly,rx,ry in photo pixels; "
        "defaults to the photo's manifest record",
    )
    p.add_argument("--debug-dir", help="write stage artifacts here")
    add_config_flags(p)

    p = sub.add_parser("batch", help="synthesize every photo in a manifest")
    p.add_argument("--manifest", required=True, help="photos to synthesize")
    p.add_argument("--out-dir", required=True, help="output directory")
    p.add_argument("--debug-dir", help="write per-entry stage artifacts here")
    add_config_flags(p)

    p = sub.add_parser("train-content", help="train the photo-to-outline network")
    p.add_argument("--out", required=True, help="checkpoint path to write")
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    add_config_flags(p)

    p = sub.add_parser("cache-exemplars", help="precompute exemplar feature pyramids")
    add_config_flags(p)

    p = sub.add_parser("check", help="run the built-in gradient and optimizer checks")
    return parser


def _load_cli_config(args) -> SynthesisConfig:
    cfg = SynthesisConfig()
    if getattr(args, "config", None):
        cfg = load_config(args.config)
    if getattr(args, "preset", None):
        cfg = apply_preset(cfg, args.preset)
    return cfg.validate()


def _parse_eyes(text: str):
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 4:
        raise ValueError("--eyes needs four numbers: lx,ly,rx,ry")
    return (parts[0], parts[1]), (parts[2], parts[3])


def _eyes_from_manifest(cfg: SynthesisConfig, photo: str):
    """Look up the photo's eye record by resolved path, then by stem."""
    if not cfg.manifest:
        raise ValueError(f"no --eyes given and no manifest configured for {photo}")
    entries = load_manifest(cfg.manifest, check_paths=False)
    target = Path(photo).resolve()
    by_stem = {}
    for entry in entries:
        if Path(entry.photo).resolve() == target:
            return entry.left_eye, entry.right_eye
        by_stem.setdefault(Path(entry.photo).stem, entry)
    entry = by_stem.get(Path(photo).stem)
    if entry is None:
        raise ValueError(f"photo {photo} has no record in manifest {cfg.manifest}")
    return entry.left_eye, entry.right_eye


def _cmd_synth(args) -> int:
    cfg = _load_cli_config(args)
    if args.eyes:
        left, right = _parse_eyes(args.eyes)
    else:
        left, right = _eyes_from_manifest(cfg, args.photo)
    synthesize_file(args.photo, left, right, cfg, args.out, debug_dir=args.debug_dir)
    print(f"wrote {args.out}")
    return 0


def _cmd_batch(args) -> int:
    cfg = _load_cli_config(args)
    outputs = run_batch(args.manifest, cfg, args.out_dir, debug_dir=args.debug_dir)
    for path in outputs:
        print(f"wrote {path}")
    return 0


def _cmd_train_content(args) -> int:
    cfg = _load_cli_config(args)
    if not cfg.manifest:
        raise ValueError("training needs a manifest in the config")
    if not args.out:
        raise ValueError("training needs an --out checkpoint path")
    entries = [e for e in load_manifest(cfg.manifest) if e.sketch is not None]
    if not entries:
        raise ValueError(f"manifest {cfg.manifest} has no photo-sketch pairs")
    photos, sketches = [], []
    for entry in entries:
        photo, sketch, _ = _align_pair(entry, cfg)
        photos.append(photo)
        sketches.append(sketch)
    net_config = ContentNetConfig(
        branch_channels=cfg.branch_channels,
        integrate_channels=cfg.integrate_channels,
        recon_channels=cfg.recon_channels,
        dog_sigma1=cfg.dog_sigma1,
        dog_sigma2=cfg.dog_sigma2,
    )
    net, stats = train(
        photos,
        sketches,
        net_config,
        epochs=args.epochs,
        batch_size=args.batch_size,
        seed=args.seed,
    )
    net.save(args.out)
    last = stats[-1]
    print(
        f"wrote {args.out} after {len(stats)} epochs "
        f"(train {last.train_loss:.4f}, val {last.val_loss:.4f})"
    )
    return 0


def _cmd_cache_exemplars(args) -> int:
    cfg = _load_cli_config(args)
    if not cfg.cache_dir:
        raise ValueError("cache-exemplars needs cache_dir set in the config")
    weights = load_weights(cfg)
    exemplars = load_exemplars(cfg, weights)
    print(f"cached {len(exemplars.photos)} exemplar pyramids in {cfg.cache_dir}")
    return 0


def _cmd_check(_args) -> int:
    results = run_selfcheck(stream=sys.stdout)
    if not all_ok(results):
        failed = sum(1 for r in results if not r.ok)
        print(f"{failed} of {len(results)} checks failed", file=sys.stderr)
        return RUNTIME_ERROR
    print(f"all {len(results)} checks passed")
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "batch": _cmd_batch,
    "train-content": _cmd_train_content,
    "cache-exemplars": _cmd_cache_exemplars,
    "check": _cmd_check,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (StageError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
