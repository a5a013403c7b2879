"""Scripted waypoint experts that demonstrate the five skills.

Each expert is a stateless feedback controller: approach the target in
(x, y), descend while correcting, grasp, do the skill-specific motion,
release or lift. Because every action is recomputed from the current
state, the experts recover from perturbations (their own collection
noise, dropped objects, accidental wrong grasps), which is exactly what
makes them usable as relabeling supervisors.
"""

from __future__ import annotations

import math

from ..instructions import Instruction, Skill
from .config import WorldConfig
from .scene import Action, Pose, SceneState, check_success, step

_CARRY_Z = 0.35
_NEAR_DROP = 0.07
_INTO_TOLERANCE = 0.03


class Infeasible(ValueError):
    """The instruction cannot be demonstrated in this scene."""


def _clip(v: float) -> float:
    return min(1.0, max(-1.0, v))


def _xy_correction(state: SceneState, tx: float, ty: float, config: WorldConfig) -> tuple[float, float]:
    g = state.gripper
    return (
        _clip((tx - g.x) / config.delta_xy),
        _clip((ty - g.y) / config.delta_xy),
    )


def _dist_to(state: SceneState, tx: float, ty: float) -> float:
    g = state.gripper
    return math.hypot(tx - g.x, ty - g.y)


def _approach_and_grasp(state: SceneState, idx: int, config: WorldConfig) -> Action:
    """Move over object ``idx``; once roughly centered, descend closing.

    The descent keeps correcting (x, y), so the grasp lands even when the
    approach was knocked off center.
    """
    tx, ty = state.objects[idx].center
    dx, dy = _xy_correction(state, tx, ty, config)
    if _dist_to(state, tx, ty) > 0.5 * config.r_grasp:
        return Action(dx=dx, dy=dy, grip=1.0)
    return Action(dx=dx, dy=dy, dz=-1.0, grip=-1.0)


def expert_action(
    state: SceneState, instr: Instruction, config: WorldConfig = WorldConfig()
) -> Action:
    """Next expert action for the instruction, given the current scene."""
    g = state.gripper
    target_idx = state.find(instr.target)
    target = state.objects[target_idx]
    holding = g.holding

    if instr.skill is Skill.KNOCK_OVER and target.inside_of is not None:
        raise Infeasible("cannot knock over an object inside a container")

    if check_success(state, instr, config):
        return Action(grip=1.0 if holding is None else -1.0)

    if instr.skill is Skill.PICK:
        if holding == target_idx:
            return Action(dz=1.0, grip=-1.0)
        if holding is not None:
            return Action(grip=1.0)
        return _approach_and_grasp(state, target_idx, config)

    if instr.skill is Skill.MOVE_NEAR:
        dest = state.objects[state.find(instr.secondary)]
        if holding == target_idx:
            if _dist_to(state, *dest.center) <= _NEAR_DROP:
                return Action(grip=1.0)
            if g.z < _CARRY_Z:
                return Action(dz=1.0, grip=-1.0)
            dx, dy = _xy_correction(state, *dest.center, config=config)
            return Action(dx=dx, dy=dy, grip=-1.0)
        if holding is not None:
            return Action(grip=1.0)
        return _approach_and_grasp(state, target_idx, config)

    if instr.skill is Skill.KNOCK_OVER:
        if holding is not None:
            return Action(grip=1.0)
        dx, dy = _xy_correction(state, *target.center, config=config)
        dist = _dist_to(state, *target.center)
        rolling = g.cumulative_roll > 0 and dist <= config.r_contact
        if rolling or dist <= 0.5 * config.r_contact:
            return Action(dx=dx, dy=dy, droll=1.0, grip=1.0)
        return Action(dx=dx, dy=dy, grip=1.0)

    if instr.skill is Skill.PLACE_UPRIGHT:
        if holding == target_idx:
            if target.pose is Pose.SIDE:
                return Action(droll=1.0, grip=-1.0)
            return Action(grip=1.0)
        if holding is not None:
            return Action(grip=1.0)
        return _approach_and_grasp(state, target_idx, config)

    if instr.skill is Skill.PLACE_INTO:
        container = state.objects[state.find(instr.secondary)]
        if holding == target_idx:
            if _dist_to(state, *container.center) <= _INTO_TOLERANCE:
                return Action(grip=1.0)
            if g.z < _CARRY_Z:
                return Action(dz=1.0, grip=-1.0)
            dx, dy = _xy_correction(state, *container.center, config=config)
            return Action(dx=dx, dy=dy, grip=-1.0)
        if holding is not None:
            return Action(grip=1.0)
        return _approach_and_grasp(state, target_idx, config)

    raise ValueError(f"unhandled skill {instr.skill}")


def expert_rollout(
    state: SceneState,
    instr: Instruction,
    config: WorldConfig = WorldConfig(),
    max_steps: int | None = None,
) -> tuple[list[SceneState], list[Action], bool]:
    """Roll the expert until success or the step budget runs out.

    Returns (states, actions, success) with len(states) == len(actions) + 1.
    """
    budget = config.t_max if max_steps is None else max_steps
    states = [state]
    actions: list[Action] = []
    for _ in range(budget):
        if check_success(state, instr, config):
            break
        action = expert_action(state, instr, config)
        state = step(state, action, config)
        states.append(state)
        actions.append(action)
    return states, actions, check_success(state, instr, config)


def noisy_expert_rollout(
    state: SceneState,
    instr: Instruction,
    rng,
    action_noise: float,
    grip_flip_prob: float,
    config: WorldConfig = WorldConfig(),
    max_steps: int | None = None,
) -> tuple[list[SceneState], list[Action], bool]:
    """Expert rollout with exploration noise on the EXECUTED actions.

    Each visited state is labeled with the expert's clean action, but the
    simulator steps on a perturbed copy, so the recorded trajectory covers
    off-policy states and their corrections.
    """
    budget = config.t_max if max_steps is None else max_steps
    states = [state]
    labels: list[Action] = []
    for _ in range(budget):
        if check_success(state, instr, config):
            break
        label = expert_action(state, instr, config)
        noise = rng.normal(0.0, action_noise, size=4) if action_noise > 0 else (0.0,) * 4
        grip = label.grip
        if grip_flip_prob > 0 and rng.random() < grip_flip_prob:
            grip = -grip
        executed = Action(
            dx=_clip(label.dx + noise[0]),
            dy=_clip(label.dy + noise[1]),
            dz=_clip(label.dz + noise[2]),
            droll=_clip(label.droll + noise[3]),
            grip=grip,
        )
        state = step(state, executed, config)
        states.append(state)
        labels.append(label)
    return states, labels, check_success(state, instr, config)
