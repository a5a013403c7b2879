"""Demonstration episodes, skewed dataset generation, and serialization.

Training data follows the paper-style skew: a small core object set is
demonstrated on all five skills, while a larger diverse set appears in
pick demonstrations only. Every stored episode is a successful expert
rollout whose mask came from the frozen (noisy) detector, with the
detector seed and raw detections kept for audit.
"""

from __future__ import annotations

import io
import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .detect import (
    DEFAULT_THRESHOLD,
    Detection,
    DetectorNoise,
    NoDetection,
    OracleDetector,
)
from .instructions import (
    Instruction,
    Skill,
    SKILL_NAMES,
    parse_instruction,
    render_instruction,
    verb_index,
)
from .masks import ObjectMask, first_frame_mask
from .world.catalog import CatalogSplit, ObjectSpec
from .world.config import WorldConfig
from .world.expert import expert_rollout, noisy_expert_rollout
from .world.render import render
from .world.scene import Action, sample_scene

MAGIC = b"MMDS"
VERSION = 1


class DatasetError(Exception):
    """Base class for dataset problems."""


class CorruptFile(DatasetError):
    """Truncated, mangled, or checksum-failing dataset file."""


class VersionMismatch(DatasetError):
    """The dataset's format version is not supported."""


class FillFailure(DatasetError):
    """A (object, skill) cell could not be filled within the retry budget."""


@dataclass(frozen=True)
class CollectionNoise:
    """Exploration noise injected while recording demonstrations.

    The executed action is a perturbed copy of the expert's; the stored
    label stays clean, so episodes teach recovery from off-path states.
    Zero values reproduce plain expert rollouts.
    """

    action_noise: float = 0.4
    grip_flip_prob: float = 0.03

    def __post_init__(self) -> None:
        if self.action_noise < 0:
            raise ValueError("action_noise must be >= 0")
        if not 0.0 <= self.grip_flip_prob <= 1.0:
            raise ValueError("grip_flip_prob must be in [0, 1]")

    @property
    def enabled(self) -> bool:
        return self.action_noise > 0 or self.grip_flip_prob > 0


NO_COLLECTION_NOISE = CollectionNoise(action_noise=0.0, grip_flip_prob=0.0)


@dataclass(frozen=True)
class Episode:
    instruction: Instruction
    mask: ObjectMask
    frames: tuple[np.ndarray, ...]  # T observations, uint8 (h, w, 3)
    actions: tuple[Action, ...]  # T actions
    success: bool
    scene_seed: int
    detector_seed: int
    detections: tuple[Detection, ...] = ()

    def __post_init__(self) -> None:
        if len(self.frames) != len(self.actions) or not self.frames:
            raise DatasetError("episode needs T >= 1 matched (frame, action) steps")

    @property
    def length(self) -> int:
        return len(self.actions)

    @property
    def verb(self) -> int:
        return verb_index(self.instruction)


@dataclass(frozen=True)
class SkewConfig:
    """Which seen objects get full-skill coverage vs pick-only coverage."""

    core_objects: tuple[str, ...]
    pick_only_objects: tuple[str, ...]
    episodes_per_cell: int = 10

    def __post_init__(self) -> None:
        if set(self.core_objects) & set(self.pick_only_objects):
            raise ValueError("core and pick-only object sets overlap")
        if self.episodes_per_cell < 1:
            raise ValueError("episodes_per_cell must be >= 1")
        object.__setattr__(self, "core_objects", tuple(self.core_objects))
        object.__setattr__(self, "pick_only_objects", tuple(self.pick_only_objects))

    def cells(self) -> list[tuple[str, Skill]]:
        out = [(desc, skill) for desc in self.core_objects for skill in Skill]
        out.extend((desc, Skill.PICK) for desc in self.pick_only_objects)
        return out

    def validate_against(self, split: CatalogSplit) -> None:
        seen = {s.description for s in split.seen}
        stray = (set(self.core_objects) | set(self.pick_only_objects)) - seen
        if stray:
            raise ValueError(f"skew objects not in the seen split: {sorted(stray)}")


def default_skew(split: CatalogSplit, episodes_per_cell: int = 10) -> SkewConfig:
    """12 core objects (all skills) + 36 pick-only, drawn from the seen split.

    Core objects are chosen round-robin across shapes so containers and
    every pose-relevant category appear in non-pick cells.
    """
    by_shape: dict[str, list[ObjectSpec]] = {}
    for spec in split.seen:
        by_shape.setdefault(spec.category, []).append(spec)
    core: list[str] = []
    rank = 0
    while len(core) < 12:
        for shape in sorted(by_shape):
            group = by_shape[shape]
            if rank < len(group) and len(core) < 12:
                core.append(group[rank].description)
        rank += 1
    pick_only = [
        s.description for s in split.seen if s.description not in set(core)
    ]
    return SkewConfig(
        core_objects=tuple(core),
        pick_only_objects=tuple(pick_only),
        episodes_per_cell=episodes_per_cell,
    )


@dataclass(frozen=True)
class DemoDataset:
    episodes: tuple[Episode, ...]
    world_config: WorldConfig
    noise: DetectorNoise
    threshold: float
    seed: int
    skew: SkewConfig | None = None
    collection: CollectionNoise = CollectionNoise()
    manifest: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        counted: dict[tuple[str, str], int] = {}
        for ep in self.episodes:
            key = (SKILL_NAMES[ep.instruction.skill], ep.instruction.target)
            counted[key] = counted.get(key, 0) + 1
            if not ep.success:
                raise DatasetError("datasets admit only successful episodes")
        if not self.manifest:
            object.__setattr__(self, "manifest", counted)
        elif self.manifest != counted:
            raise DatasetError("manifest disagrees with episode contents")

    def __len__(self) -> int:
        return len(self.episodes)

    def descriptions(self) -> list[str]:
        """Sorted unique instruction descriptions (both slots)."""
        out = set()
        for ep in self.episodes:
            out.update(ep.instruction.objects)
        return sorted(out)

    def fingerprint(self) -> str:
        return f"{zlib.crc32(dataset_bytes(self)):08x}"


def _pick_second(
    rng: np.random.Generator,
    split: CatalogSplit,
    target: str,
    skill: Skill,
) -> str | None:
    if skill not in (Skill.MOVE_NEAR, Skill.PLACE_INTO):
        return None
    pool = [
        s.description
        for s in split.seen
        if s.description != target and (skill is not Skill.PLACE_INTO or s.is_container)
    ]
    if not pool:
        raise DatasetError(f"no second object available for {SKILL_NAMES[skill]}")
    return pool[int(rng.integers(len(pool)))]


def _cell_instruction(
    rng: np.random.Generator, split: CatalogSplit, desc: str, skill: Skill
) -> Instruction:
    second = _pick_second(rng, split, desc, skill)
    objects = (desc,) if second is None else (desc, second)
    return Instruction(skill, objects)


def record_episode(
    instr: Instruction,
    split: CatalogSplit,
    scene_seed: int,
    detector_seed: int,
    n_distractors: int,
    detector: OracleDetector,
    threshold: float,
    config: WorldConfig,
    collection: CollectionNoise = NO_COLLECTION_NOISE,
    collection_seed: int = 0,
) -> Episode:
    """One expert rollout with a detector-in-the-loop mask.

    Raises NoDetection or DatasetError("expert failed") on bad draws;
    callers resample with fresh seeds.
    """
    scene = sample_scene(instr, split, n_distractors, scene_seed, config)
    frame0 = render(scene, config)
    mask, detections = first_frame_mask(
        scene, frame0, instr, detector, threshold, detector_seed, detector.catalog
    )
    if collection.enabled:
        rng = np.random.default_rng(collection_seed)
        states, actions, success = noisy_expert_rollout(
            scene, instr, rng, collection.action_noise,
            collection.grip_flip_prob, config,
        )
    else:
        states, actions, success = expert_rollout(scene, instr, config)
    if not success:
        raise DatasetError("expert failed")
    frames = [frame0]
    frames.extend(render(s, config) for s in states[1 : len(actions)])
    # quantize to the file format's float32 now, so a freshly generated
    # dataset and a saved+loaded one train bit-identically
    actions = [Action.from_array(a.as_array().astype(np.float32)) for a in actions]
    return Episode(
        instruction=instr,
        mask=mask,
        frames=tuple(frames),
        actions=tuple(actions),
        success=True,
        scene_seed=scene_seed,
        detector_seed=detector_seed,
        detections=tuple(detections),
    )


def generate_demos(
    config: WorldConfig,
    skew: SkewConfig,
    split: CatalogSplit,
    noise: DetectorNoise,
    seed: int,
    threshold: float = DEFAULT_THRESHOLD,
    retry_factor: int = 3,
    collection: CollectionNoise = CollectionNoise(),
) -> DemoDataset:
    """Fill every skew cell with successful expert episodes.

    Deterministic given the seed: every episode derives its own seeds from
    (dataset seed, cell index, attempt), so generation could fan out
    across workers without changing the result.
    """
    skew.validate_against(split)
    detector = OracleDetector(noise=noise, config=config)
    episodes: list[Episode] = []
    for cell_index, (desc, skill) in enumerate(skew.cells()):
        kept = 0
        budget = retry_factor * skew.episodes_per_cell
        for attempt in range(budget):
            if kept == skew.episodes_per_cell:
                break
            seeds = np.random.SeedSequence([seed, cell_index, attempt])
            scene_seed, detector_seed, collection_seed = (
                int(v) for v in seeds.generate_state(3, dtype=np.uint64)
            )
            rng = np.random.default_rng(seeds)
            instr = _cell_instruction(rng, split, desc, skill)
            n_distractors = int(rng.integers(2, 5))
            try:
                episode = record_episode(
                    instr,
                    split,
                    scene_seed,
                    detector_seed,
                    n_distractors,
                    detector,
                    threshold,
                    config,
                    collection,
                    collection_seed,
                )
            except (NoDetection, DatasetError):
                continue
            episodes.append(episode)
            kept += 1
        if kept < skew.episodes_per_cell:
            raise FillFailure(
                f"cell ({desc!r}, {SKILL_NAMES[skill]}) filled {kept}"
                f"/{skew.episodes_per_cell} within {budget} attempts"
            )
    return DemoDataset(
        episodes=tuple(episodes),
        world_config=config,
        noise=noise,
        threshold=threshold,
        seed=seed,
        skew=skew,
        collection=collection,
    )


def _png_bytes(frame: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(frame).save(buf, format="PNG")
    return buf.getvalue()


def _png_decode(blob: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(blob)) as img:
        return np.asarray(img.convert("RGB"))


def dataset_bytes(dataset: DemoDataset) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    header = {
        "world": dataset.world_config.to_dict(),
        "noise": {
            "jitter_sigma": dataset.noise.jitter_sigma,
            "miss_prob": dataset.noise.miss_prob,
            "false_positive_prob": dataset.noise.false_positive_prob,
            "score_mean_hit": dataset.noise.score_mean_hit,
            "score_mean_miss": dataset.noise.score_mean_miss,
        },
        "threshold": dataset.threshold,
        "seed": dataset.seed,
        "collection": {
            "action_noise": dataset.collection.action_noise,
            "grip_flip_prob": dataset.collection.grip_flip_prob,
        },
        "skew": None
        if dataset.skew is None
        else {
            "core_objects": list(dataset.skew.core_objects),
            "pick_only_objects": list(dataset.skew.pick_only_objects),
            "episodes_per_cell": dataset.skew.episodes_per_cell,
        },
        "manifest": sorted(
            [skill, desc, count] for (skill, desc), count in dataset.manifest.items()
        ),
    }
    header_json = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    buf.write(struct.pack("<I", len(header_json)))
    buf.write(header_json)
    buf.write(struct.pack("<I", len(dataset.episodes)))
    w, h = dataset.world_config.width, dataset.world_config.height
    for ep in dataset.episodes:
        sentence = render_instruction(ep.instruction).encode()
        buf.write(struct.pack("<H", len(sentence)))
        buf.write(sentence)
        buf.write(struct.pack("<QQB", ep.scene_seed, ep.detector_seed, ep.success))
        mask_bytes = ep.mask.to_bytes()
        if len(mask_bytes) != w * h:
            raise DatasetError("mask resolution disagrees with world config")
        buf.write(mask_bytes)
        det_json = json.dumps(
            [
                {"bbox": list(d.bbox), "score": d.score, "query_index": d.query_index}
                for d in ep.detections
            ],
            sort_keys=True,
            separators=(",", ":"),
        ).encode()
        buf.write(struct.pack("<I", len(det_json)))
        buf.write(det_json)
        buf.write(struct.pack("<I", ep.length))
        for frame, action in zip(ep.frames, ep.actions):
            blob = _png_bytes(frame)
            buf.write(struct.pack("<I", len(blob)))
            buf.write(blob)
            buf.write(struct.pack("<7f", *action.as_array()))
    payload = buf.getvalue()
    return payload + struct.pack("<I", zlib.crc32(payload))


def save_dataset(dataset: DemoDataset, path: str | Path) -> None:
    """Atomic write: temp file then rename."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(dataset_bytes(dataset))
    tmp.replace(path)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def read(self, n: int) -> bytes:
        if self.offset + n > len(self.data):
            raise CorruptFile("unexpected end of dataset file")
        chunk = self.data[self.offset : self.offset + n]
        self.offset += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.read(struct.calcsize(fmt)))


def load_dataset_bytes(data: bytes) -> DemoDataset:
    if len(data) < len(MAGIC) + 12:
        raise CorruptFile("dataset file too short")
    payload, (stored_crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(payload) != stored_crc:
        raise CorruptFile("checksum mismatch")
    reader = _Reader(payload)
    if reader.read(4) != MAGIC:
        raise CorruptFile("bad magic")
    (version,) = reader.unpack("<I")
    if version != VERSION:
        raise VersionMismatch(f"unsupported dataset version {version}")
    (header_len,) = reader.unpack("<I")
    try:
        header = json.loads(reader.read(header_len))
        world_config = WorldConfig.from_dict(header["world"])
        noise = DetectorNoise(**header["noise"])
        collection = CollectionNoise(**header.get("collection", {}))
        skew = (
            None
            if header["skew"] is None
            else SkewConfig(
                core_objects=tuple(header["skew"]["core_objects"]),
                pick_only_objects=tuple(header["skew"]["pick_only_objects"]),
                episodes_per_cell=header["skew"]["episodes_per_cell"],
            )
        )
    except (KeyError, TypeError, ValueError) as bad:
        raise CorruptFile(f"bad header: {bad}") from bad

    w, h = world_config.width, world_config.height
    (n_episodes,) = reader.unpack("<I")
    episodes = []
    for _ in range(n_episodes):
        (sent_len,) = reader.unpack("<H")
        instr = parse_instruction(reader.read(sent_len).decode())
        scene_seed, detector_seed, success = reader.unpack("<QQB")
        mask = ObjectMask.from_bytes(reader.read(w * h), w, h)
        (det_len,) = reader.unpack("<I")
        try:
            detections = tuple(
                Detection(
                    bbox=tuple(d["bbox"]),
                    score=d["score"],
                    query_index=d["query_index"],
                )
                for d in json.loads(reader.read(det_len))
            )
        except (KeyError, TypeError, ValueError) as bad:
            raise CorruptFile(f"bad detections block: {bad}") from bad
        (length,) = reader.unpack("<I")
        frames = []
        actions = []
        for _ in range(length):
            (blob_len,) = reader.unpack("<I")
            frames.append(_png_decode(reader.read(blob_len)))
            actions.append(Action.from_array(reader.unpack("<7f")))
        episodes.append(
            Episode(
                instruction=instr,
                mask=mask,
                frames=tuple(frames),
                actions=tuple(actions),
                success=bool(success),
                scene_seed=scene_seed,
                detector_seed=detector_seed,
                detections=detections,
            )
        )
    if reader.offset != len(payload):
        raise CorruptFile("trailing bytes after episodes")
    manifest_raw = header.get("manifest", [])
    manifest = {(skill, desc): count for skill, desc, count in manifest_raw}
    return DemoDataset(
        episodes=tuple(episodes),
        world_config=world_config,
        noise=noise,
        threshold=header["threshold"],
        seed=header["seed"],
        skew=skew,
        collection=collection,
        manifest=manifest,
    )


def load_dataset(path: str | Path) -> DemoDataset:
    return load_dataset_bytes(Path(path).read_bytes())
