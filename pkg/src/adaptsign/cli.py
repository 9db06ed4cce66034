"""
Command-line entry point: ``adaptsign <subcommand>`` or ``python -m adaptsign``.

Relative output paths resolve under $ADAPTSIGN_OUTPUT_ROOT (default: the
current directory).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

OUTPUT_ROOT_ENV = "ADAPTSIGN_OUTPUT_ROOT"


def output_path(path: str | Path) -> Path:
    path = Path(path)
    if path.is_absolute():
        return path
    return Path(os.environ.get(OUTPUT_ROOT_ENV, ".")) / path


def _echo_config(out: Path, name: str, payload: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def cmd_gen_data(args) -> int:
    from .data import SyntheticSpec, generate_dataset

    fields = {}
    if args.config:
        fields.update(json.loads(Path(args.config).read_text()))
    for key in ("vocab", "min_len", "max_len", "frames_per_gloss", "image", "noise", "train", "dev", "test", "seed"):
        value = getattr(args, key)
        if value is not None:
            fields[key] = value
    spec = SyntheticSpec(**fields)
    out = output_path(args.out)
    paths = generate_dataset(spec, out)
    _echo_config(out, "dataset.json", spec.to_dict())
    for split, path in paths.items():
        print(f"{split}: {path}")
    return 0


def _experiment(args):
    from .adaptation import AdaptationConfig
    from .training import PRESETS, ExperimentConfig

    config = ExperimentConfig.load(args.config) if args.config else PRESETS[args.preset]()
    overrides = {k: getattr(args, k) for k in ("regime", "epochs", "lr", "seed", "backbone_seed") if getattr(args, k, None) is not None}
    if getattr(args, "no_stop", False):
        overrides["stop_train_wer"] = None
    config = replace(config, **overrides)
    ad = {k: getattr(args, k) for k in ("ratio", "prefix_length", "tau", "direction", "prefix_mode") if getattr(args, k, None) is not None}
    if ad:
        config = replace(config, adaptation=AdaptationConfig(**{**config.adaptation.to_dict(), **ad}))
    return config


def cmd_train(args) -> int:
    from .training import train

    config = _experiment(args)
    out = output_path(args.out)
    result = train(config, args.data, out, log=print)
    print(f"best dev WER {result.best_dev_wer:.2f}; median step time {result.median_step_time * 1e3:.1f} ms; outputs in {out}")
    return 0


def cmd_eval(args) -> int:
    from .ctc import greedy_decode, load_lattice_csv
    from .errors import UsageError
    from .metrics import align_and_count

    if args.lattice:
        if args.ref is None:
            raise UsageError("--lattice needs --ref, the reference gloss ids separated by spaces")
        hyp = greedy_decode(load_lattice_csv(args.lattice))
        b = align_and_count([int(t) for t in args.ref.split()], hyp)
        print(json.dumps({"hyp": hyp, **b.to_dict()}, sort_keys=True))
        return 0
    if not (args.checkpoint and args.data):
        raise UsageError("eval needs --checkpoint and --data, or --lattice and --ref")
    from .training import evaluate

    result = evaluate(args.checkpoint, args.data, args.split)
    summary = {"split": args.split, **result.breakdown.to_dict()}
    print(json.dumps(summary, sort_keys=True))
    if args.out:
        out = output_path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(json.dumps({"summary": summary, "samples": result.samples}, indent=1, sort_keys=True) + "\n")
    return 0


def cmd_compare(args) -> int:
    from .training import REGIMES, run_comparison

    if not args.config and args.preset == "default":
        args.preset = "compare"
    config = _experiment(args)
    out = output_path(args.out)
    _echo_config(out, "compare_config.json", {"experiment": config.to_dict(), "seeds": args.seeds, "regimes": args.regimes or list(REGIMES)})
    _, table = run_comparison(config, args.data, out, seeds=args.seeds, regimes=args.regimes or REGIMES, log=print)
    print(table, end="")
    return 0


def cmd_flops(args) -> int:
    from .accounting import count_flops, overhead_report, report_json, scaling_exponents
    from .adaptation import AdaptationConfig
    from .backbone import ViTConfig

    vit = ViTConfig.preset(args.preset)
    if args.image:
        vit = vit.with_image(args.image)
    adaptation = AdaptationConfig(
        ratio=args.ratio, prefix_length=args.prefix_length, tau=args.tau, direction=args.direction, project_kv=args.project_kv
    )
    report = count_flops(vit, adaptation, frames=args.frames, vocab=args.vocab)
    _, text = overhead_report(report)
    print(text)
    exps = scaling_exponents(vit, adaptation)
    print("FLOP exponent vs patch count n in {16, 49, 196}: " + ", ".join(f"{k} {v:.3f}" for k, v in exps.items()))
    if args.out:
        out = output_path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        payload = json.loads(report_json(report))
        payload["scaling_exponents"] = exps
        out.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return 0


def cmd_grad_check(args) -> int:
    from .checks import gradient_suite

    failed = 0
    for name, report in gradient_suite(tol=args.tol, include_model=not args.ops_only, model_coords=args.coords, seed=args.seed):
        print(f"{name:<18} worst rel err {report.worst:.3e}  {'pass' if report.passed else 'FAIL'}")
        if args.verbose or not report.passed:
            print(report)
        failed += not report.passed
    return 1 if failed else 0


def cmd_dump_attn(args) -> int:
    from .attention_maps import dump_attention
    from .checkpoint import load_checkpoint
    from .data import AugmentConfig, augment, load_split

    model, _ = load_checkpoint(args.checkpoint)
    _, samples = load_split(args.data, args.split)
    sample = samples[args.index]
    view = augment(sample, training=False, rng=None, config=AugmentConfig(crop=model.spec.vit.image))
    out = output_path(args.out)
    dump = dump_attention(model, view.frames, out, scale=args.scale)
    print(f"{sample.sample_id}: wrote {len(dump.files)} heatmaps and CSVs to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adaptsign", description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a synthetic train/dev/test corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="JSON file with SyntheticSpec fields")
    for key, typ in (("vocab", int), ("min_len", int), ("max_len", int), ("frames_per_gloss", int), ("image", int), ("noise", float), ("train", int), ("dev", int), ("test", int), ("seed", int)):
        p.add_argument(f"--{key.replace('_', '-')}", dest=key, type=typ)
    p.set_defaults(func=cmd_gen_data)

    def experiment_flags(p):
        p.add_argument("--data", required=True, help="dataset root written by gen-data")
        p.add_argument("--out", required=True)
        p.add_argument("--config", help="ExperimentConfig JSON; overrides --preset")
        p.add_argument("--preset", choices=("default", "overfit", "compare"), default="default")
        p.add_argument("--regime")
        p.add_argument("--epochs", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--backbone-seed", dest="backbone_seed", type=int)
        p.add_argument("--ratio", type=float)
        p.add_argument("--prefix-length", dest="prefix_length", type=int)
        p.add_argument("--prefix-mode", dest="prefix_mode", choices=("independent", "shared"))
        p.add_argument("--tau", type=int)
        p.add_argument("--direction", choices=("bidirectional", "unidirectional"))
        p.add_argument("--no-stop", action="store_true", help="ignore the preset's early-stop threshold")

    p = sub.add_parser("train", help="train one regime and write metrics and a checkpoint")
    experiment_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="decode a split with a checkpoint, or score one lattice CSV")
    p.add_argument("--checkpoint")
    p.add_argument("--data")
    p.add_argument("--split", default="dev")
    p.add_argument("--out", help="JSON file for per-sample results")
    p.add_argument("--lattice", help="CSV of log-probabilities, one row per step, blank first")
    p.add_argument("--ref", help="reference gloss ids, space separated")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="train every regime over several seeds and tabulate")
    experiment_flags(p)
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--regimes", nargs="+")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("flops", help="analytic parameter and FLOP accounting")
    p.add_argument("--preset", default="B16-full")
    p.add_argument("--image", type=int)
    p.add_argument("--ratio", type=float, default=0.25)
    p.add_argument("--prefix-length", dest="prefix_length", type=int, default=8)
    p.add_argument("--tau", type=int, default=2)
    p.add_argument("--direction", default="bidirectional", choices=("bidirectional", "unidirectional"))
    p.add_argument("--project-kv", dest="project_kv", action="store_true")
    p.add_argument("--frames", type=int, default=16)
    p.add_argument("--vocab", type=int, default=1000)
    p.add_argument("--out", help="write report.json here")
    p.set_defaults(func=cmd_flops)

    p = sub.add_parser("grad-check", help="finite-difference check of every op and the end-to-end model")
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--coords", type=int, default=3, help="coordinates sampled per model tensor")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ops-only", action="store_true")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("dump-attn", help="export spatial and cross-frame attention heatmaps")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="dev")
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--scale", type=int, default=8, help="pixel upscaling of each map cell")
    p.set_defaults(func=cmd_dump_attn)
    return parser


def main(argv: list[str] | None = None) -> int:
    from .errors import AdaptSignError

    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except AdaptSignError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
