"""Session-oriented HTTP service over the simulator and a loaded policy.

One session models one robot: a sampled scene, at most one pending task
(mask + verb), and one rollout at a time. Clients specify tasks by text
(through the detector) or by clicking pixels (bypassing it); both paths
feed the identical policy rollout code. The checkpoint is read-only; the
service never trains.

Endpoints (field names are part of the wire contract):
  POST /session                      {"seed","distractors","split"}
  POST /session/{id}/task/text      {"text"}
  POST /session/{id}/task/click     {"skill","primary",["secondary"]}
  POST /session/{id}/rollout        {"max_steps"}
  GET  /healthz
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field, replace as dc_replace

import numpy as np
from fastapi import FastAPI
from fastapi.responses import JSONResponse

from .detect import (
    DEFAULT_THRESHOLD,
    Detector,
    NoDetection,
    OracleDetector,
    RemoteDetector,
    image_to_png_b64,
)
from .instructions import (
    SKILLS_BY_NAME,
    Instruction,
    InstructionError,
    TEMPLATES,
    parse_instruction,
    verb_index,
)
from .masks import ObjectMask, encode_mask, first_frame_mask
from .policy.actions import ActMode, select_tokens, tokens_to_action
from .policy.model import Policy
from .world.catalog import CatalogSplit
from .world.config import WorldConfig
from .world.render import NoMatch, render
from .world.scene import SceneError, SceneState, check_success, sample_free_scene, step

import torch


class TaskUnset(RuntimeError):
    """Rollout requested before a task was set."""


class ArityMismatch(ValueError):
    """Click count disagrees with the chosen skill's arity."""


class Busy(RuntimeError):
    """Another request is already running on this session."""


@dataclass
class Session:
    id: str
    seed: int
    scene: SceneState
    mask: ObjectMask | None = None
    verb: int | None = None
    instruction: Instruction | None = None
    task_counter: int = 0
    rollout_log: list[dict] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)


def _error(status: int, code: str, detail: str = "") -> JSONResponse:
    body = {"error": code}
    if detail:
        body["detail"] = detail
    return JSONResponse(body, status_code=status)


def _mask_preview(mask: ObjectMask) -> list[dict]:
    return [{"x": x, "y": y, "v": v} for x, y, v in mask.nonzero_pixels()]


class SessionService:
    """Holds the policy, world, detector, and live sessions."""

    def __init__(
        self,
        model: Policy,
        split: CatalogSplit,
        config: WorldConfig = WorldConfig(),
        detector: Detector | None = None,
        threshold: float = DEFAULT_THRESHOLD,
        checkpoint_fingerprint: str = "",
    ):
        if not model.config.use_mask:
            raise ValueError("the rollout service requires a mask-conditioned policy")
        if model.config.image_size != config.width or config.width != config.height:
            raise ValueError("policy image size disagrees with world config")
        self.model = model
        self.split = split
        self.config = config
        self.detector = detector or OracleDetector(config=config)
        self.threshold = threshold
        self.checkpoint_fingerprint = checkpoint_fingerprint
        self.sessions: dict[str, Session] = {}
        self._registry_lock = threading.Lock()
        self._counter = 0

    # ----- session lifecycle -----------------------------------------

    def create_session(self, seed: int, distractors: int, split_name: str) -> Session:
        if not 2 <= distractors <= 4:
            raise SceneError(f"distractors must be in [2, 4], got {distractors}")
        scene = sample_free_scene(
            self.split, distractors + 1, seed, self.config, split_name
        )
        with self._registry_lock:
            self._counter += 1
            sid = f"s{self._counter:04d}"
            session = Session(id=sid, seed=seed, scene=scene)
            self.sessions[sid] = session
        return session

    def get(self, sid: str) -> Session | None:
        return self.sessions.get(sid)

    # ----- task specification ----------------------------------------

    def set_task_text(self, session: Session, text: str) -> dict:
        instr = parse_instruction(text)  # InstructionError propagates
        frame = render(session.scene, self.config)
        session.task_counter += 1
        detector_seed = int(
            np.random.SeedSequence([session.seed, session.task_counter]).generate_state(
                1, dtype=np.uint64
            )[0]
        )
        try:
            mask, _ = first_frame_mask(
                session.scene, frame, instr, self.detector, self.threshold, detector_seed
            )
        except (NoDetection, NoMatch) as miss:
            # an oracle NoMatch is what a real detector would report as
            # "nothing found" - same typed failure for the UI either way
            return {"verb": verb_index(instr), "mask": [], "error": "no_detection",
                    "detail": str(miss)}
        session.mask = mask
        session.verb = verb_index(instr)
        session.instruction = instr
        return {"verb": session.verb, "mask": _mask_preview(mask)}

    def _resolve_click(self, session: Session, pixel: tuple[int, int]) -> str:
        """Description of the object whose center is nearest the click."""
        px = (pixel[0] + 0.5) / self.config.width
        py = (pixel[1] + 0.5) / self.config.height
        dists = [
            (obj.center[0] - px) ** 2 + (obj.center[1] - py) ** 2
            for obj in session.scene.objects
        ]
        return session.scene.objects[int(np.argmin(dists))].description

    def set_task_click(
        self,
        session: Session,
        skill_name: str,
        primary: tuple[int, int],
        secondary: tuple[int, int] | None,
    ) -> dict:
        skill = SKILLS_BY_NAME.get(skill_name)
        if skill is None:
            raise InstructionError(f"unknown skill {skill_name!r}")
        arity = TEMPLATES[skill].arity
        if (secondary is not None) != (arity == 2):
            raise ArityMismatch(
                f"{skill_name} takes {arity} click(s), got {1 + (secondary is not None)}"
            )
        mask = encode_mask(primary, secondary, self.config.width, self.config.height)
        # the click bypasses the detector entirely; the instruction is only
        # reconstructed so the rollout can score success
        objects = [self._resolve_click(session, primary)]
        if secondary is not None:
            objects.append(self._resolve_click(session, secondary))
        session.mask = mask
        session.verb = int(skill)
        session.instruction = Instruction(skill, tuple(objects))
        return {"verb": session.verb, "mask": _mask_preview(mask)}

    # ----- rollout ----------------------------------------------------

    def rollout(self, session: Session, max_steps: int) -> dict:
        torch.set_num_threads(1)
        if session.mask is None or session.verb is None:
            raise TaskUnset("set a task before rolling out")
        model = self.model
        cfg = model.config
        scene = session.scene
        frames_u8 = [render(scene, self.config)]
        actions: list[list[float]] = []
        success = check_success(scene, session.instruction, self.config)
        mask_values = session.mask.values
        for _ in range(max_steps):
            if success:
                break
            history = frames_u8[-cfg.history_len :]
            while len(history) < cfg.history_len:
                history = [history[0]] + history
            stack = np.empty(
                (1, cfg.history_len, cfg.in_channels, cfg.image_size, cfg.image_size),
                dtype=np.float32,
            )
            rgb = np.stack(history).astype(np.float32) / 255.0
            stack[0, :, :3] = rgb.transpose(0, 3, 1, 2)
            stack[0, :, 3] = mask_values[None, :, :]
            with torch.no_grad():
                logits = model(
                    torch.from_numpy(stack),
                    torch.tensor([session.verb], dtype=torch.long),
                )
            tokens = select_tokens(logits[0].double().numpy(), ActMode.GREEDY)
            action = tokens_to_action(tokens, cfg.bins)
            scene = step(scene, action, self.config)
            frames_u8.append(render(scene, self.config))
            actions.append([float(v) for v in action.as_array()])
            success = check_success(scene, session.instruction, self.config)
        session.scene = scene
        session.mask = None
        session.verb = None
        session.instruction = None
        session.rollout_log.append({"steps": len(actions), "success": success})
        return {
            "success": bool(success),
            "frames": [image_to_png_b64(f) for f in frames_u8],
            "actions": actions,
        }


def create_app(service: SessionService) -> FastAPI:
    app = FastAPI(title="maskmanip rollout service")
    # the operator console is served from its own origin
    from fastapi.middleware.cors import CORSMiddleware

    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    @app.get("/healthz")
    def healthz():
        return {
            "status": "ok",
            "sessions": len(service.sessions),
            "checkpoint": service.checkpoint_fingerprint,
        }

    @app.post("/session")
    def create_session(body: dict):
        try:
            seed = int(body["seed"])
            distractors = int(body["distractors"])
            split_name = body.get("split", "seen")
        except (KeyError, TypeError, ValueError) as bad:
            return _error(400, "bad_config", str(bad))
        try:
            session = service.create_session(seed, distractors, split_name)
        except (SceneError, ValueError) as bad:
            return _error(400, "bad_config", str(bad))
        frame = render(session.scene, service.config)
        return {
            "id": session.id,
            "frame_png_b64": image_to_png_b64(frame),
            "w": service.config.width,
            "h": service.config.height,
        }

    @app.post("/session/{sid}/task/text")
    def task_text(sid: str, body: dict):
        session = service.get(sid)
        if session is None:
            return _error(404, "unknown_session")
        if "text" not in body or not isinstance(body["text"], str):
            return _error(400, "bad_request", "body needs a 'text' string")
        if not session.lock.acquire(blocking=False):
            return _error(409, "busy")
        try:
            return service.set_task_text(session, body["text"])
        except InstructionError as bad:
            return _error(400, "unknown_template", str(bad))
        finally:
            session.lock.release()

    @app.post("/session/{sid}/task/click")
    def task_click(sid: str, body: dict):
        session = service.get(sid)
        if session is None:
            return _error(404, "unknown_session")
        skill_name = body.get("skill")
        primary = body.get("primary")
        secondary = body.get("secondary")
        if not isinstance(skill_name, str) or not isinstance(primary, list):
            return _error(400, "bad_request", "body needs 'skill' and 'primary'")
        if not session.lock.acquire(blocking=False):
            return _error(409, "busy")
        try:
            return service.set_task_click(
                session,
                skill_name,
                tuple(int(v) for v in primary),
                tuple(int(v) for v in secondary) if secondary is not None else None,
            )
        except ArityMismatch as bad:
            return _error(400, "arity_mismatch", str(bad))
        except InstructionError as bad:
            return _error(400, "unknown_skill", str(bad))
        except ValueError as bad:  # OutOfBounds from encode_mask
            return _error(400, "out_of_bounds", str(bad))
        finally:
            session.lock.release()

    @app.post("/session/{sid}/rollout")
    def rollout(sid: str, body: dict):
        session = service.get(sid)
        if session is None:
            return _error(404, "unknown_session")
        try:
            max_steps = int(body.get("max_steps", service.config.t_max))
        except (TypeError, ValueError) as bad:
            return _error(400, "bad_request", str(bad))
        if max_steps < 1:
            return _error(400, "bad_request", "max_steps must be >= 1")
        if not session.lock.acquire(blocking=False):
            return _error(409, "busy")
        try:
            return service.rollout(session, max_steps)
        except TaskUnset as unset:
            return _error(409, "task_unset", str(unset))
        finally:
            session.lock.release()

    return app


def serve(
    model: Policy,
    split: CatalogSplit,
    config: WorldConfig,
    detector: Detector | None,
    host: str = "127.0.0.1",
    port: int = 8080,
    checkpoint_fingerprint: str = "",
) -> None:
    import uvicorn

    service = SessionService(
        model, split, config, detector,
        checkpoint_fingerprint=checkpoint_fingerprint,
    )
    uvicorn.run(create_app(service), host=host, port=port, log_level="info")


def detector_from_spec(spec: str, config: WorldConfig) -> Detector:
    """Parse 'oracle' / 'oracle:noisy' / 'remote:<url>' detector specs."""
    if spec == "oracle":
        return OracleDetector(config=config)
    if spec == "oracle:noisy":
        from .detect import DEFAULT_NOISE

        return OracleDetector(noise=DEFAULT_NOISE, config=config)
    if spec.startswith("remote:"):
        return RemoteDetector(spec.split(":", 1)[1])
    raise ValueError(f"unknown detector spec {spec!r}")
