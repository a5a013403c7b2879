"""Evaluation suites, ablation runners, and report emission.

Episodes are scored by the simulator's success criteria. Every suite is
deterministic given its base seed: each (skill-cell, trial) derives its
own scene/detector/perturbation seeds, so reports reproduce exactly and
episodes could run in any order or in parallel.
"""

from __future__ import annotations

import json
import hashlib
import math
import zlib
from dataclasses import dataclass, field, replace as dc_replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch

from .data import DemoDataset, SkewConfig
from .detect import (
    DEFAULT_NOISE,
    DEFAULT_THRESHOLD,
    DetectorNoise,
    NoDetection,
    OracleDetector,
)
from .instructions import SKILL_NAMES, SKILLS_BY_NAME, Instruction, Skill, verb_index
from .masks import ObjectMask, PerturbMode, centroid, encode_mask, first_frame_mask, perturb_mask
from .policy.actions import ActMode, select_tokens, tokens_to_action
from .policy.checkpoint import checkpoint_bytes
from .policy.model import Policy, desc_indices
from .world.catalog import CatalogSplit
from .world.config import WorldConfig
from .world.render import ground_truth_bbox, render
from .world.scene import Action, SceneState, check_success, sample_scene, step

MASK_MODES = ("detector", "manual") + tuple(
    f"perturbed:{m.value}" for m in PerturbMode
)


@dataclass(frozen=True)
class EvalSuite:
    """One evaluation configuration.

    ``split`` picks the target pool (seen / unseen_seen_category /
    unseen_category); ``object_pool`` optionally restricts it to explicit
    descriptions (e.g. pick-only-trained objects). ``mask_mode`` is
    'detector' (prompts through the suite's noisy detector), 'manual'
    (exact ground-truth centroid mask, as a GUI click would give), or
    'perturbed:<mode>' (manual mask relocated per the localization-noise
    study).
    """

    name: str
    split: str = "seen"
    skills: tuple[Skill, ...] = tuple(Skill)
    episodes_per_cell: int = 50
    distractors: tuple[int, int] = (2, 4)
    background: str = "plain"
    noise: DetectorNoise = DEFAULT_NOISE
    threshold: float = DEFAULT_THRESHOLD
    mask_mode: str = "detector"
    object_pool: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if self.episodes_per_cell < 1:
            raise ValueError("episodes_per_cell must be >= 1")
        lo, hi = self.distractors
        if not (2 <= lo <= hi <= 4):
            raise ValueError("distractor range must sit inside [2, 4]")
        if self.mask_mode not in MASK_MODES:
            raise ValueError(f"mask_mode must be one of {MASK_MODES}")
        if self.split not in ("seen", "unseen_seen_category", "unseen_category"):
            raise ValueError(f"unknown split {self.split!r}")
        object.__setattr__(self, "skills", tuple(self.skills))

    def perturbation(self) -> PerturbMode | None:
        if self.mask_mode.startswith("perturbed:"):
            return PerturbMode(self.mask_mode.split(":", 1)[1])
        return None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "split": self.split,
            "skills": [SKILL_NAMES[s] for s in self.skills],
            "episodes_per_cell": self.episodes_per_cell,
            "distractors": list(self.distractors),
            "background": self.background,
            "noise": {
                "jitter_sigma": self.noise.jitter_sigma,
                "miss_prob": self.noise.miss_prob,
                "false_positive_prob": self.noise.false_positive_prob,
                "score_mean_hit": self.noise.score_mean_hit,
                "score_mean_miss": self.noise.score_mean_miss,
            },
            "threshold": self.threshold,
            "mask_mode": self.mask_mode,
            "object_pool": list(self.object_pool) if self.object_pool else None,
        }


@dataclass(frozen=True)
class EpisodeResult:
    success: bool
    steps: int
    mask: ObjectMask | None
    detections: tuple
    cause: str  # "success" | "timeout" | "no_detection"


@dataclass(frozen=True)
class ReportRow:
    suite: str
    skill: str
    split: str
    successes: int
    trials: int
    no_detection: int = 0

    def __post_init__(self) -> None:
        if self.successes > self.trials:
            raise ValueError("successes cannot exceed trials")

    @property
    def rate(self) -> float:
        return self.successes / self.trials if self.trials else 0.0


def wilson_interval(successes: int, trials: int, z: float = 1.96) -> tuple[float, float]:
    """95% Wilson score interval for a success rate."""
    if trials == 0:
        return (0.0, 1.0)
    p = successes / trials
    denom = 1 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    margin = (z / denom) * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials))
    return (max(0.0, center - margin), min(1.0, center + margin))


@dataclass(frozen=True)
class EvalReport:
    rows: tuple[ReportRow, ...]
    base_seed: int
    fingerprint: str
    suite_configs: tuple[dict, ...] = ()

    def __post_init__(self) -> None:
        ordered = tuple(
            sorted(self.rows, key=lambda r: (r.suite, r.skill, r.split))
        )
        object.__setattr__(self, "rows", ordered)

    def row(self, suite: str, skill: Skill | str) -> ReportRow:
        skill_name = skill if isinstance(skill, str) else SKILL_NAMES[skill]
        for row in self.rows:
            if row.suite == suite and row.skill == skill_name:
                return row
        raise KeyError(f"no row for ({suite}, {skill_name})")

    def overall(self, suite: str | None = None) -> tuple[int, int]:
        rows = [r for r in self.rows if suite is None or r.suite == suite]
        return (sum(r.successes for r in rows), sum(r.trials for r in rows))

    def merged(self, *others: "EvalReport") -> "EvalReport":
        rows = list(self.rows)
        configs = list(self.suite_configs)
        for other in others:
            rows.extend(other.rows)
            configs.extend(other.suite_configs)
        return EvalReport(
            rows=tuple(rows),
            base_seed=self.base_seed,
            fingerprint=self.fingerprint,
            suite_configs=tuple(configs),
        )


def model_fingerprint(model: Policy) -> str:
    return f"{zlib.crc32(checkpoint_bytes(model)):08x}"


ExpertFn = Callable[[SceneState, Instruction], Action]


class _Rollout:
    """Mutable per-episode rollout state for the lockstep runner."""

    __slots__ = (
        "instr", "scene", "frames", "mask", "verb", "desc_idx",
        "done", "success", "steps", "cause", "detections", "perturb_seed",
    )

    def __init__(self, instr: Instruction):
        self.instr = instr
        self.scene: SceneState | None = None
        self.frames: list[np.ndarray] = []
        self.mask: ObjectMask | None = None
        self.verb = verb_index(instr)
        self.desc_idx: np.ndarray | None = None
        self.done = False
        self.success = False
        self.steps = 0
        self.cause = "timeout"
        self.detections: tuple = ()
        self.perturb_seed = 0

    def result(self) -> EpisodeResult:
        return EpisodeResult(
            success=self.success,
            steps=self.steps,
            mask=self.mask,
            detections=self.detections,
            cause=self.cause,
        )


class Evaluator:
    """Runs suites and ablations against a fixed world and catalog split."""

    def __init__(
        self,
        split: CatalogSplit,
        config: WorldConfig = WorldConfig(),
        batch_size: int = 64,
    ):
        self.split = split
        self.config = config
        self.batch_size = batch_size

    # ----- episode construction -------------------------------------

    def _instruction_for(
        self, rng: np.random.Generator, suite: EvalSuite, skill: Skill
    ) -> Instruction:
        if suite.object_pool is not None:
            targets = list(suite.object_pool)
        else:
            targets = [s.description for s in self.split.pool(suite.split)]
        target = targets[int(rng.integers(len(targets)))]
        if skill in (Skill.MOVE_NEAR, Skill.PLACE_INTO):
            pool = [
                s.description
                for s in self.split.seen
                if s.description != target
                and (skill is not Skill.PLACE_INTO or s.is_container)
            ]
            second = pool[int(rng.integers(len(pool)))]
            return Instruction(skill, (target, second))
        return Instruction(skill, (target,))

    def _ground_truth_mask(self, scene: SceneState, instr: Instruction) -> ObjectMask:
        primary = centroid(ground_truth_bbox(scene, instr.target, self.config))
        secondary = None
        if instr.secondary is not None:
            secondary = centroid(
                ground_truth_bbox(scene, instr.secondary, self.config)
            )
        return encode_mask(
            primary, secondary, self.config.width, self.config.height
        )

    def _prepare(
        self,
        instr: Instruction,
        suite: EvalSuite,
        scene_seed: int,
        detector_seed: int,
        perturb_seed: int,
        needs_mask: bool,
    ) -> _Rollout:
        rollout = _Rollout(instr)
        rng = np.random.default_rng(scene_seed)
        n_distractors = int(rng.integers(suite.distractors[0], suite.distractors[1] + 1))
        world = dc_replace(self.config, background=suite.background)
        scene = sample_scene(instr, self.split, n_distractors, scene_seed, world)
        rollout.scene = scene
        rollout.perturb_seed = perturb_seed
        frame0 = render(scene, world)
        rollout.frames = [frame0]
        if not needs_mask:
            return rollout
        try:
            if suite.mask_mode == "detector":
                detector = OracleDetector(noise=suite.noise, config=world)
                mask, detections = first_frame_mask(
                    scene, frame0, instr, detector, suite.threshold, detector_seed
                )
                rollout.detections = tuple(detections)
            else:
                mask = self._ground_truth_mask(scene, instr)
                mode = suite.perturbation()
                if mode is not None:
                    mask = perturb_mask(
                        mask, scene, instr.target, mode, perturb_seed, world
                    )
            rollout.mask = mask
        except NoDetection:
            rollout.done = True
            rollout.cause = "no_detection"
        return rollout

    # ----- rollout execution ----------------------------------------

    def _stack_frames(self, rollout: _Rollout, model: Policy) -> np.ndarray:
        cfg = model.config
        h = cfg.history_len
        frames = rollout.frames[-h:]
        while len(frames) < h:
            frames = [frames[0]] + frames
        stack = np.empty(
            (h, cfg.in_channels, cfg.image_size, cfg.image_size), dtype=np.float32
        )
        rgb = np.stack(frames).astype(np.float32) / 255.0
        stack[:, :3] = rgb.transpose(0, 3, 1, 2)
        if cfg.use_mask:
            stack[:, 3] = rollout.mask.values[None, :, :]
        return stack

    def _run_rollouts(
        self,
        model: Policy,
        rollouts: list[_Rollout],
        suite: EvalSuite,
        max_steps: int | None = None,
    ) -> None:
        torch.set_num_threads(1)
        cfg = model.config
        world = dc_replace(self.config, background=suite.background)
        budget = self.config.t_max if max_steps is None else max_steps
        if cfg.desc_vocab:
            for r in rollouts:
                r.desc_idx = desc_indices(cfg, [r.instr.objects]).numpy()[0]
        for start in range(0, len(rollouts), self.batch_size):
            chunk = [r for r in rollouts[start : start + self.batch_size] if not r.done]
            for t in range(budget):
                alive = [r for r in chunk if not r.done]
                if not alive:
                    break
                frames = torch.from_numpy(
                    np.stack([self._stack_frames(r, model) for r in alive])
                )
                verbs = torch.tensor([r.verb for r in alive], dtype=torch.long)
                desc = None
                if cfg.desc_vocab:
                    desc = torch.from_numpy(np.stack([r.desc_idx for r in alive]))
                with torch.no_grad():
                    logits = model(frames, verbs, desc).double().numpy()
                for r, lg in zip(alive, logits):
                    tokens = select_tokens(lg, ActMode.GREEDY)
                    action = tokens_to_action(tokens, cfg.bins)
                    r.scene = step(r.scene, action, world)
                    r.frames.append(render(r.scene, world))
                    r.steps += 1
                    if check_success(r.scene, r.instr, world):
                        r.done = True
                        r.success = True
                        r.cause = "success"

    def run_episode(
        self,
        model: Policy | ExpertFn,
        instr: Instruction,
        scene_seed: int,
        suite: EvalSuite,
        detector_seed: int | None = None,
        perturb_seed: int = 0,
    ) -> EpisodeResult:
        """Single evaluation episode (greedy policy or an expert stub)."""
        is_model = isinstance(model, Policy)
        needs_mask = is_model and model.config.use_mask
        rollout = self._prepare(
            instr,
            suite,
            scene_seed,
            scene_seed if detector_seed is None else detector_seed,
            perturb_seed,
            needs_mask,
        )
        if rollout.done:
            return rollout.result()
        if is_model:
            self._run_rollouts(model, [rollout], suite)
        else:
            world = dc_replace(self.config, background=suite.background)
            for _ in range(self.config.t_max):
                if check_success(rollout.scene, instr, world):
                    rollout.done = True
                    rollout.success = True
                    rollout.cause = "success"
                    break
                action = model(rollout.scene, instr)
                rollout.scene = step(rollout.scene, action, world)
                rollout.steps += 1
            if not rollout.done and check_success(rollout.scene, instr, world):
                rollout.success = True
                rollout.cause = "success"
        return rollout.result()

    def run_suite(
        self,
        model: Policy,
        suite: EvalSuite,
        n_seeds: int | None = None,
        base_seed: int = 0,
    ) -> EvalReport:
        """Aggregate per-skill success over seeded episodes."""
        n = suite.episodes_per_cell if n_seeds is None else n_seeds
        needs_mask = model.config.use_mask
        rows = []
        for cell_index, skill in enumerate(suite.skills):
            rollouts = []
            for trial in range(n):
                seeds = np.random.SeedSequence([base_seed, cell_index, trial])
                scene_seed, detector_seed, perturb_seed = (
                    int(v) for v in seeds.generate_state(3, dtype=np.uint64)
                )
                rng = np.random.default_rng(seeds)
                instr = self._instruction_for(rng, suite, skill)
                rollouts.append(
                    self._prepare(
                        instr, suite, scene_seed, detector_seed, perturb_seed, needs_mask
                    )
                )
            self._run_rollouts(model, rollouts, suite)
            rows.append(
                ReportRow(
                    suite=suite.name,
                    skill=SKILL_NAMES[skill],
                    split=suite.split,
                    successes=sum(r.success for r in rollouts),
                    trials=len(rollouts),
                    no_detection=sum(r.cause == "no_detection" for r in rollouts),
                )
            )
        fingerprint = self._fingerprint(model, [suite])
        return EvalReport(
            rows=tuple(rows),
            base_seed=base_seed,
            fingerprint=fingerprint,
            suite_configs=(suite.to_dict(),),
        )

    def _fingerprint(self, model: Policy, suites: Sequence[EvalSuite]) -> str:
        blob = json.dumps(
            {
                "world": self.config.to_dict(),
                "suites": [s.to_dict() for s in suites],
                "model": model_fingerprint(model),
            },
            sort_keys=True,
        ).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    # ----- ablations --------------------------------------------------

    def ablate_mask(
        self,
        model: Policy,
        suite: EvalSuite,
        modes: Sequence[PerturbMode] = tuple(PerturbMode),
        base_seed: int = 0,
    ) -> EvalReport:
        """Evaluate perturbed first-frame masks on identical scenes."""
        reports = []
        for mode in modes:
            variant = dc_replace(
                suite,
                name=f"{suite.name}/{mode.value}",
                mask_mode=f"perturbed:{mode.value}",
            )
            reports.append(self.run_suite(model, variant, base_seed=base_seed))
        merged = reports[0].merged(*reports[1:])
        return merged


def ablate_data_cuts(
    dataset: DemoDataset,
    object_fractions: Sequence[float] = (1.0, 0.5, 0.18),
    episode_fractions: Sequence[float] = (1.0, 0.5, 0.1),
) -> dict[str, DemoDataset]:
    """Diversity and scale cuts of a skewed dataset.

    Object cuts keep episodes-per-object but drop whole target objects
    (core objects are kept first); episode cuts keep every object but
    drop a per-cell fraction of its episodes.
    """
    if dataset.skew is None:
        raise ValueError("dataset has no skew metadata to cut against")
    skew = dataset.skew
    ordered_objects = list(skew.core_objects) + list(skew.pick_only_objects)
    cuts: dict[str, DemoDataset] = {}

    for fraction in object_fractions:
        keep_n = math.ceil(fraction * len(ordered_objects))
        kept = set(ordered_objects[:keep_n])
        episodes = tuple(
            ep for ep in dataset.episodes if ep.instruction.target in kept
        )
        cuts[f"objects-{int(round(fraction * 100))}"] = dc_replace(
            dataset,
            episodes=episodes,
            manifest={},
            skew=SkewConfig(
                core_objects=tuple(d for d in skew.core_objects if d in kept),
                pick_only_objects=tuple(
                    d for d in skew.pick_only_objects if d in kept
                ),
                episodes_per_cell=skew.episodes_per_cell,
            ),
        )

    for fraction in episode_fractions:
        keep_per_cell = math.ceil(fraction * skew.episodes_per_cell)
        counts: dict[tuple[str, Skill], int] = {}
        episodes = []
        for ep in dataset.episodes:
            key = (ep.instruction.target, ep.instruction.skill)
            if counts.get(key, 0) < keep_per_cell:
                counts[key] = counts.get(key, 0) + 1
                episodes.append(ep)
        cuts[f"episodes-{int(round(fraction * 100))}"] = dc_replace(
            dataset,
            episodes=tuple(episodes),
            manifest={},
            skew=SkewConfig(
                core_objects=skew.core_objects,
                pick_only_objects=skew.pick_only_objects,
                episodes_per_cell=keep_per_cell,
            ),
        )
    return cuts


def pick_suite(
    name: str,
    split: str,
    episodes_per_cell: int = 50,
    mask_mode: str = "detector",
    background: str = "plain",
    object_pool: tuple[str, ...] | None = None,
) -> EvalSuite:
    """Single-skill Pick suite (the ablations' common yardstick)."""
    return EvalSuite(
        name=name,
        split=split,
        skills=(Skill.PICK,),
        episodes_per_cell=episodes_per_cell,
        mask_mode=mask_mode,
        background=background,
        object_pool=object_pool,
    )


TrainFn = Callable[[DemoDataset, "object", int, str], Policy]


def _default_train_fn(policy_config, optim_config):
    from .training import train

    def fn(dataset: DemoDataset, config, seed: int, tag: str) -> Policy:
        return train(dataset, config or policy_config, optim_config, seed).model

    return fn


def ablate_data(
    dataset: DemoDataset,
    evaluator: Evaluator,
    policy_config,
    optim_config,
    train_seed: int = 0,
    eval_seed: int = 0,
    trials: int = 150,
    object_fractions: Sequence[float] = (1.0, 0.5, 0.18),
    episode_fractions: Sequence[float] = (1.0, 0.5, 0.1),
    train_fn: TrainFn | None = None,
) -> dict[str, EvalReport]:
    """Train one model per data cut (shared seeds); report seen/unseen Pick."""
    train_fn = train_fn or _default_train_fn(policy_config, optim_config)
    cuts = ablate_data_cuts(dataset, object_fractions, episode_fractions)
    reports: dict[str, EvalReport] = {}
    for cut_name, cut_dataset in sorted(cuts.items()):
        model = train_fn(cut_dataset, policy_config, train_seed, f"data-{cut_name}")
        seen = evaluator.run_suite(
            model,
            pick_suite(f"data-{cut_name}/seen", "seen", trials),
            base_seed=eval_seed,
        )
        unseen = evaluator.run_suite(
            model,
            pick_suite(f"data-{cut_name}/unseen", "unseen_category", trials),
            base_seed=eval_seed,
        )
        reports[cut_name] = seen.merged(unseen)
    return reports


def ablate_model_size(
    dataset: DemoDataset,
    evaluator: Evaluator,
    configs: dict[str, object],
    optim_config,
    train_seed: int = 0,
    eval_seed: int = 0,
    trials: int = 150,
    train_fn: TrainFn | None = None,
) -> dict[str, EvalReport]:
    """Train S/M/L capacity variants on identical data; report Pick success."""
    sizes = list(configs)
    counts = {}
    reports: dict[str, EvalReport] = {}
    train_fn = train_fn or _default_train_fn(None, optim_config)
    for size in sizes:
        config = configs[size]
        model = train_fn(dataset, config, train_seed, f"size-{size}")
        counts[size] = model.parameter_count()
        seen = evaluator.run_suite(
            model,
            pick_suite(f"size-{size}/seen", "seen", trials),
            base_seed=eval_seed,
        )
        unseen = evaluator.run_suite(
            model,
            pick_suite(f"size-{size}/unseen", "unseen_category", trials),
            base_seed=eval_seed,
        )
        reports[size] = seen.merged(unseen)
    return reports


def write_report(report: EvalReport, out_dir: str | Path, name: str = "report") -> list[Path]:
    """Emit a TSV table and a human summary with reproduction info."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    table_path = out / f"{name}.tsv"
    summary_path = out / f"{name}.txt"

    lines = [
        f"# fingerprint\t{report.fingerprint}",
        f"# base_seed\t{report.base_seed}",
        "suite\tskill\tsplit\tsuccesses\ttrials\trate\twilson_lo\twilson_hi\tno_detection",
    ]
    for row in report.rows:
        lo, hi = wilson_interval(row.successes, row.trials)
        lines.append(
            f"{row.suite}\t{row.skill}\t{row.split}\t{row.successes}\t{row.trials}"
            f"\t{row.rate:.4f}\t{lo:.4f}\t{hi:.4f}\t{row.no_detection}"
        )
    table_path.write_text("\n".join(lines) + "\n")

    by_suite: dict[str, list[ReportRow]] = {}
    for row in report.rows:
        by_suite.setdefault(row.suite, []).append(row)
    text = [
        f"evaluation report (fingerprint {report.fingerprint}, base seed {report.base_seed})",
        "",
    ]
    for suite_name in sorted(by_suite):
        rows = by_suite[suite_name]
        successes, trials = sum(r.successes for r in rows), sum(r.trials for r in rows)
        text.append(f"{suite_name}: {successes}/{trials} overall")
        for row in rows:
            lo, hi = wilson_interval(row.successes, row.trials)
            text.append(
                f"  {row.skill:>13s} [{row.split}] "
                f"{row.successes:4d}/{row.trials:<4d} = {row.rate:6.1%}"
                f"  (95% CI {lo:.1%}..{hi:.1%})"
            )
        text.append("")
    summary_path.write_text("\n".join(text))
    return [table_path, summary_path]


def load_report_table(path: str | Path) -> EvalReport:
    """Parse a written TSV back into an EvalReport (for re-run checks)."""
    fingerprint = ""
    base_seed = 0
    rows = []
    for line in Path(path).read_text().splitlines():
        if line.startswith("# fingerprint"):
            fingerprint = line.split("\t")[1]
        elif line.startswith("# base_seed"):
            base_seed = int(line.split("\t")[1])
        elif line and not line.startswith(("#", "suite\t")):
            parts = line.split("\t")
            rows.append(
                ReportRow(
                    suite=parts[0],
                    skill=parts[1],
                    split=parts[2],
                    successes=int(parts[3]),
                    trials=int(parts[4]),
                    no_detection=int(parts[8]),
                )
            )
    return EvalReport(rows=tuple(rows), base_seed=base_seed, fingerprint=fingerprint)
