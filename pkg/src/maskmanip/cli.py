"""Command-line entry points: gen-data, train, eval, ablate, serve.

Configuration files use the repo's plain-text key-value format with
dotted sections, e.g.:

    world.width = 48
    skew.episodes_per_cell = 10
    noise.jitter_sigma = 1.5
    policy.size = L
    optim.steps = 20000
    suite.split = unseen_category
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import configio
from .data import (
    SkewConfig,
    default_skew,
    generate_demos,
    load_dataset,
    save_dataset,
)
from .detect import DEFAULT_NOISE, DEFAULT_THRESHOLD, DetectorNoise
from .evalsuite import (
    EvalSuite,
    Evaluator,
    ablate_data,
    ablate_model_size,
    pick_suite,
    write_report,
)
from .instructions import SKILLS_BY_NAME, Skill
from .masks import PerturbMode
from .policy.checkpoint import checkpoint_fingerprint, load_checkpoint
from .policy.config import PolicyConfig, sized_config
from .training import OptimConfig, train, train_baseline_no_mask
from .world.catalog import default_split
from .world.config import WorldConfig


def _load_sections(path: str | None) -> dict:
    if path is None:
        return {}
    return configio.load_config(path)


def _world_config(sections: dict) -> WorldConfig:
    return WorldConfig.from_dict(sections.get("world", {}))


def _noise_config(sections: dict) -> DetectorNoise:
    if "noise" not in sections:
        return DEFAULT_NOISE
    return DetectorNoise(**sections["noise"])


def _as_str_tuple(value) -> tuple[str, ...]:
    if isinstance(value, str):
        return (value,)
    return tuple(str(v) for v in value)


def _skew_config(sections: dict, split) -> SkewConfig:
    skew = dict(sections.get("skew", {}))
    episodes = int(skew.get("episodes_per_cell", 10))
    if "core_objects" in skew or "pick_only_objects" in skew:
        return SkewConfig(
            core_objects=_as_str_tuple(skew.get("core_objects", ())),
            pick_only_objects=_as_str_tuple(skew.get("pick_only_objects", ())),
            episodes_per_cell=episodes,
        )
    return default_skew(split, episodes_per_cell=episodes)


def _policy_config(sections: dict) -> PolicyConfig:
    policy = dict(sections.get("policy", {}))
    size = policy.pop("size", None)
    if "conv_widths" in policy:
        policy["conv_widths"] = tuple(policy["conv_widths"])
    if size is not None:
        return sized_config(str(size), **policy)
    return PolicyConfig(**policy)


def _optim_config(sections: dict) -> OptimConfig:
    return OptimConfig.from_dict(sections.get("optim", {}))


def _suite_from_config(name: str, sections: dict) -> EvalSuite:
    suite = dict(sections.get("suite", {}))
    if "skills" in suite:
        skills = tuple(SKILLS_BY_NAME[s] for s in _as_str_tuple(suite["skills"]))
    else:
        skills = tuple(Skill)
    noise = (
        DetectorNoise(**sections["suite_noise"])
        if "suite_noise" in sections
        else DEFAULT_NOISE
    )
    return EvalSuite(
        name=suite.get("name", name),
        split=suite.get("split", "seen"),
        skills=skills,
        episodes_per_cell=int(suite.get("episodes_per_cell", 50)),
        distractors=(2, 4),
        background=suite.get("background", "plain"),
        noise=noise,
        threshold=float(suite.get("threshold", DEFAULT_THRESHOLD)),
        mask_mode=suite.get("mask_mode", "detector"),
        object_pool=(
            _as_str_tuple(suite["object_pool"]) if "object_pool" in suite else None
        ),
    )


def cmd_gen_data(args: argparse.Namespace) -> int:
    sections = _load_sections(args.config)
    world = _world_config(sections)
    split = default_split(world.split_seed)
    skew = _skew_config(sections, split)
    noise = _noise_config(sections)
    threshold = float(sections.get("threshold", DEFAULT_THRESHOLD))
    dataset = generate_demos(world, skew, split, noise, args.seed, threshold)
    save_dataset(dataset, args.out)
    print(
        f"wrote {len(dataset)} episodes "
        f"({sum(e.length for e in dataset.episodes)} steps) to {args.out}"
    )
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    sections = _load_sections(args.config)
    dataset = load_dataset(args.data)
    optim = _optim_config(sections)
    if args.baseline:
        base = _policy_config(sections) if "policy" in sections else None
        result = train_baseline_no_mask(
            dataset, base, optim, seed=args.seed, out_path=args.out, progress=True
        )
    else:
        policy = _policy_config(sections)
        result = train(
            dataset, policy, optim, seed=args.seed, out_path=args.out, progress=True
        )
    print(f"final loss {result.final_loss:.4f}; checkpoint at {args.out}")
    return 0


_BUILTIN_SUITES = ("seen", "unseen_seen_category", "unseen_category")


def cmd_eval(args: argparse.Namespace) -> int:
    model = load_checkpoint(args.ckpt)
    if args.suite in _BUILTIN_SUITES:
        suite = EvalSuite(name=args.suite, split=args.suite, episodes_per_cell=args.seeds)
        sections = {}
    else:
        sections = _load_sections(args.suite)
        suite = _suite_from_config(Path(args.suite).stem, sections)
    world = _world_config(sections)
    evaluator = Evaluator(default_split(world.split_seed), world)
    report = evaluator.run_suite(model, suite, n_seeds=args.seeds, base_seed=args.base_seed)
    paths = write_report(report, args.out, name=suite.name.replace("/", "_"))
    for row in report.rows:
        print(f"{row.suite} {row.skill}: {row.successes}/{row.trials} = {row.rate:.1%}")
    print(f"report written to {paths[0]}")
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    sections = _load_sections(args.config)
    world = _world_config(sections)
    split = default_split(world.split_seed)
    evaluator = Evaluator(split, world)
    optim = _optim_config(sections)
    out = Path(args.out)

    if args.kind == "mask":
        model = load_checkpoint(args.ckpt)
        suite = pick_suite("mask-sensitivity", "seen", args.trials, mask_mode="manual")
        report = evaluator.ablate_mask(model, suite, tuple(PerturbMode), args.base_seed)
        write_report(report, out, name="mask_sensitivity")
        for row in report.rows:
            print(f"{row.suite}: {row.successes}/{row.trials}")
        return 0

    dataset = load_dataset(args.data)
    if args.kind == "data":
        policy = _policy_config(sections)
        reports = ablate_data(
            dataset, evaluator, policy, optim,
            train_seed=args.seed, eval_seed=args.base_seed, trials=args.trials,
        )
    elif args.kind == "size":
        configs = {size: sized_config(size) for size in ("S", "M", "L")}
        reports = ablate_model_size(
            dataset, evaluator, configs, optim,
            train_seed=args.seed, eval_seed=args.base_seed, trials=args.trials,
        )
    else:
        raise ValueError(f"unknown ablation kind {args.kind!r}")
    for name, report in reports.items():
        write_report(report, out, name=f"{args.kind}_{name}")
        for row in report.rows:
            print(f"{row.suite} {row.skill}: {row.successes}/{row.trials} = {row.rate:.1%}")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    from .server import detector_from_spec, serve

    sections = _load_sections(args.config)
    world = _world_config(sections)
    model = load_checkpoint(args.ckpt)
    split = default_split(world.split_seed)
    detector = detector_from_spec(args.detector, world)
    serve(
        model,
        split,
        world,
        detector,
        host=args.host,
        port=args.port,
        checkpoint_fingerprint=checkpoint_fingerprint(args.ckpt),
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="maskmanip",
        description="mask-conditioned tabletop manipulation toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-data", help="generate a skewed demonstration dataset")
    gen.add_argument("--config", default=None)
    gen.add_argument("--out", required=True)
    gen.add_argument("--seed", type=int, default=0)
    gen.set_defaults(fn=cmd_gen_data)

    tr = sub.add_parser("train", help="behavioral-cloning training")
    tr.add_argument("--data", required=True)
    tr.add_argument("--config", default=None)
    tr.add_argument("--out", required=True)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--baseline", action="store_true", help="train the no-mask baseline")
    tr.set_defaults(fn=cmd_train)

    ev = sub.add_parser("eval", help="run an evaluation suite")
    ev.add_argument("--ckpt", required=True)
    ev.add_argument("--suite", required=True, help="builtin split name or config file")
    ev.add_argument("--seeds", type=int, default=50)
    ev.add_argument("--base-seed", type=int, default=0)
    ev.add_argument("--out", required=True)
    ev.set_defaults(fn=cmd_eval)

    ab = sub.add_parser("ablate", help="data / mask / size ablations")
    ab.add_argument("--kind", choices=("data", "mask", "size"), required=True)
    ab.add_argument("--data", default=None)
    ab.add_argument("--ckpt", default=None)
    ab.add_argument("--config", default=None)
    ab.add_argument("--seed", type=int, default=0)
    ab.add_argument("--base-seed", type=int, default=0)
    ab.add_argument("--trials", type=int, default=150)
    ab.add_argument("--out", required=True)
    ab.set_defaults(fn=cmd_ablate)

    sv = sub.add_parser("serve", help="HTTP rollout service")
    sv.add_argument("--ckpt", required=True)
    sv.add_argument("--config", default=None)
    sv.add_argument("--host", default="127.0.0.1")
    sv.add_argument("--port", type=int, default=8080)
    sv.add_argument(
        "--detector",
        default="oracle",
        help="oracle | oracle:noisy | remote:<url>",
    )
    sv.set_defaults(fn=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
