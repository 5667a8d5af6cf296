"""The 21-joint kinematic hand skeleton and its constant tables.

Rest-pose bone offsets, capsule radii, and the articulation table are
shipped as a versioned JSON data file so the joint vocabulary is fixed
across datasets, predictions, and annotations. Joint order is canonical:
wrist, then index/middle/ring/pinky chains (mcp, pip, dip, tip), then
the thumb chain (cmc, mcp, ip, tip).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np


@dataclass(frozen=True)
class Bone:
    """Capsule geometry: segment from the parent joint to `joint`."""

    joint: int
    parent: int
    radius: float


@dataclass(frozen=True, eq=False)
class HandSkeleton:
    joint_names: tuple[str, ...]
    parents: tuple[int, ...]                 # -1 for the root
    rest_offsets: np.ndarray                 # (n_joints, 3) mm, in parent frame
    bone_radii: np.ndarray                   # (n_joints,) mm, bone ending at joint
    articulation: dict[str, tuple[str, ...]]
    forearm_offset: np.ndarray               # mm, in the pre-articulation root frame
    forearm_radius: float
    name_to_index: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        self.rest_offsets.setflags(write=False)
        self.bone_radii.setflags(write=False)
        self.forearm_offset.setflags(write=False)
        object.__setattr__(self, "name_to_index",
                           {n: i for i, n in enumerate(self.joint_names)})
        if self.parents[0] != -1 or any(p < 0 for p in self.parents[1:]):
            raise ValueError("skeleton must be a tree rooted at joint 0")
        lengths = np.linalg.norm(self.rest_offsets[1:], axis=1)
        if not (lengths > 0).all():
            raise ValueError("all bone lengths must be positive")

    @property
    def n_joints(self) -> int:
        return len(self.joint_names)

    def index(self, name: str) -> int:
        return self.name_to_index[name]

    def bones(self) -> list[Bone]:
        """All skeleton capsules, one per non-root joint."""
        return [Bone(j, self.parents[j], float(self.bone_radii[j]))
                for j in range(1, self.n_joints)]

    def rest_positions(self) -> np.ndarray:
        """Joint positions at identity pose (cumulative rest offsets)."""
        pos = np.zeros((self.n_joints, 3))
        for j in range(1, self.n_joints):
            pos[j] = pos[self.parents[j]] + self.rest_offsets[j]
        return pos


def load_skeleton() -> HandSkeleton:
    """Load the canonical skeleton from the bundled constant table."""
    raw = json.loads(resources.files("voxhand").joinpath("data/skeleton.json").read_text())
    if raw["schema_version"] != 1:
        raise ValueError(f"unsupported skeleton schema version {raw['schema_version']}")
    joints = raw["joints"]
    names = tuple(j["name"] for j in joints)
    order = {n: i for i, n in enumerate(names)}
    parents = tuple(-1 if j["parent"] is None else order[j["parent"]] for j in joints)
    offsets = np.array([j["offset"] for j in joints], dtype=np.float64)
    radii = np.array([j["radius"] for j in joints], dtype=np.float64)
    forearm = next(b for b in raw["extra_bones"] if b["name"] == "forearm")
    articulation = {k: tuple(v) for k, v in raw["articulation"].items()}
    return HandSkeleton(
        joint_names=names,
        parents=parents,
        rest_offsets=offsets,
        bone_radii=radii,
        articulation=articulation,
        forearm_offset=np.array(forearm["offset"], dtype=np.float64),
        forearm_radius=float(forearm["radius"]),
    )


def adjacent_bone_radii(skeleton: HandSkeleton) -> np.ndarray:
    """Per joint: the largest capsule radius touching it (forearm counts
    for the wrist). The visible surface over a joint sits roughly this
    far in front of the joint center."""
    radii = np.zeros(skeleton.n_joints)
    for bone in skeleton.bones():
        radii[bone.joint] = max(radii[bone.joint], bone.radius)
        radii[bone.parent] = max(radii[bone.parent], bone.radius)
    radii[0] = max(radii[0], skeleton.forearm_radius)
    return radii


def finger_chains(skeleton: HandSkeleton) -> list[list[str]]:
    """Joint names grouped per digit, base to tip."""
    chains = [[f"{f}_{p}" for p in ("mcp", "pip", "dip", "tip")]
              for f in ("index", "middle", "ring", "pinky")]
    chains.append(["thumb_cmc", "thumb_mcp", "thumb_ip", "thumb_tip"])
    return chains


def skeleton_edges(skeleton: HandSkeleton) -> list[tuple[str, str]]:
    """(parent, child) joint-name pairs, for overlays and renderers."""
    return [(skeleton.joint_names[skeleton.parents[j]], skeleton.joint_names[j])
            for j in range(1, skeleton.n_joints)]


JOINT_NAMES: tuple[str, ...] = load_skeleton().joint_names
N_JOINTS = len(JOINT_NAMES)
