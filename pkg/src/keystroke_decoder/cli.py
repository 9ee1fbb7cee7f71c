from __future__ import annotations

import argparse
import logging
from typing import List, Optional

from .config import get_settings, load_config
from .domain.errors import KeystrokeDecoderError
from .pipeline.pipeline import STAGE_RUNNERS, StageContext, run_all

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON pipeline config (defaults when omitted)")
    common.add_argument("--seed", type=int, help="global seed")
    common.add_argument("--train-fraction", type=float, help="uniformly subsample the training sentences")
    common.add_argument("--alpha", type=float, help="language-model weight for shallow fusion")
    common.add_argument("--beam", type=int, help="beam width")
    common.add_argument("--device", choices=("eeg", "meg"), help="synthetic recording device")
    common.add_argument("--layout", help="keyboard layout JSON (key -> [x, y, hand]) replacing QWERTY")
    common.add_argument("--out", help="output directory (KD_OUT_DIR otherwise)")
    common.add_argument("--force", action="store_true", help="run even if upstream stages used another config")

    parser = argparse.ArgumentParser(prog="keystroke-decoder", description="Decode typed sentences from EEG/MEG.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in (*STAGE_RUNNERS, "run-all"):
        sub.add_parser(name, parents=[common])
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    return {
        "seed": args.seed,
        "train.train_fraction": args.train_fraction,
        "decode.alpha": args.alpha,
        "decode.beam": args.beam,
        "synth.device": args.device,
        "keyboard.layout_file": args.layout,
    }


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    settings = get_settings()
    logging.basicConfig(
        level=getattr(logging, settings.log_level.upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_config(args.config, _overrides(args))
        ctx = StageContext.create(cfg, settings, args.out, args.force)
        logger.info("Running '%s' into %s (config %s).", args.command, ctx.store.root, ctx.artifacts.config_hash[:12])
        if args.command == "run-all":
            run_all(ctx)
        else:
            STAGE_RUNNERS[args.command](ctx)
    except KeystrokeDecoderError as exc:
        logger.error("%s", exc)
        return exc.exit_code
    return 0
