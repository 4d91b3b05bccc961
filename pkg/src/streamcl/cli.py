"""Command-line entry points.

Exit codes: 0 success, 2 configuration error, 3 numeric failure during
optimization, 4 transport/stream failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .config import RunConfig, parse_config_file, parse_config_text, resolve_strategy
from .errors import ConfigError, NumericFailureError, ProtocolError, TransportError
from .runner import compare_strategies, evaluate_checkpoint, run_experiment


def _load_config(args: argparse.Namespace) -> RunConfig:
    overrides = getattr(args, "set", None) or []
    if overrides:
        # Overrides share the config-file grammar; later lines win, so the
        # merged text is just the file followed by the override lines.
        base_text = ""
        if getattr(args, "config", None):
            try:
                with open(args.config, "r", encoding="utf-8") as fh:
                    base_text = fh.read()
            except OSError as exc:
                raise ConfigError(f"cannot read config file {args.config}: {exc}") from exc
        cfg = parse_config_text(base_text + "\n" + "\n".join(overrides), source="<config>")
    elif getattr(args, "config", None):
        cfg = parse_config_file(args.config)
    else:
        cfg = RunConfig()
    if getattr(args, "strategy", None):
        cfg = replace(cfg, strategy=resolve_strategy(args.strategy, cfg.strategy.condition_variant))
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "transport", None):
        cfg = replace(cfg, transport=args.transport)
    if getattr(args, "out_dir", None):
        cfg = replace(cfg, out_dir=args.out_dir)
    return cfg


def _print_report(report) -> None:
    print(f"strategy={report.strategy} seed={report.seed} digest={report.config_digest}")
    for task_id, l1, ssim in report.per_task:
        print(f"  task {task_id}: l1={l1:.6f} ssim={ssim:.6f}")
    print(
        f"  avg_l1={report.avg_l1:.6f} avg_ssim={report.avg_ssim:.6f} "
        f"mem_overhead={report.mem_overhead_bytes} B"
    )


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    report = run_experiment(cfg, make_plots=args.plots)
    _print_report(report)
    return 0


def _cmd_compare(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    strategies = [resolve_strategy(tok) for tok in args.strategies.split(",") if tok.strip()]
    seeds = [int(tok) for tok in args.seeds.split(",") if tok.strip()]
    if not strategies or not seeds:
        raise ConfigError("compare needs at least one strategy and one seed")
    results = compare_strategies(cfg, strategies, seeds, out_dir=cfg.out_dir, make_plots=args.plots)
    failed = 0
    for kind, seed, report in results:
        if report is None:
            failed += 1
            print(f"{kind.label} seed={seed}: FAILED")
        else:
            print(
                f"{kind.label} seed={seed}: avg_l1={report.avg_l1:.6f} "
                f"avg_ssim={report.avg_ssim:.6f} mem={report.mem_overhead_bytes} B"
            )
    print(f"wrote {cfg.out_dir}/comparison.csv ({len(results) - failed} ok, {failed} failed)")
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    report = evaluate_checkpoint(cfg, args.checkpoint)
    _print_report(report)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="streamcl",
        description="Streaming continual learning for a 3D field autoencoder.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="config file with key = value lines")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override one config key (repeatable)")
        p.add_argument("--seed", type=int, help="run seed (init + replay sampling)")
        p.add_argument("--out", dest="out_dir", help="output directory")

    p_run = sub.add_parser("run", help="train one strategy on the stream")
    add_common(p_run)
    p_run.add_argument("--strategy", help="naive | ewc | agem | latent-global | latent-layerwise")
    p_run.add_argument("--transport", choices=("inproc", "tcp"))
    p_run.add_argument("--plots", action="store_true", help="save reconstruction slices")
    p_run.set_defaults(func=_cmd_run)

    p_cmp = sub.add_parser("compare", help="run several strategies over several seeds")
    add_common(p_cmp)
    p_cmp.add_argument("--strategies", default="naive,ewc,agem,latent-layerwise",
                       help="comma-separated strategy names")
    p_cmp.add_argument("--seeds", default="0,1,2", help="comma-separated run seeds")
    p_cmp.add_argument("--transport", choices=("inproc", "tcp"))
    p_cmp.add_argument("--plots", action="store_true")
    p_cmp.set_defaults(func=_cmd_compare)

    p_eval = sub.add_parser("eval", help="re-score a checkpoint against the regenerated stream")
    add_common(p_eval)
    p_eval.add_argument("--strategy", help="strategy label used for reporting")
    p_eval.add_argument("--checkpoint", required=True, help="path to a checkpoint file")
    p_eval.set_defaults(func=_cmd_eval)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"streamcl: config error: {exc}", file=sys.stderr)
        return 2
    except NumericFailureError as exc:
        print(f"streamcl: numeric failure: {exc}", file=sys.stderr)
        return 3
    except (ProtocolError, TransportError) as exc:
        print(f"streamcl: stream error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
