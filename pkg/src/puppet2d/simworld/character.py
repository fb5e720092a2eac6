"""Character description: links, joints, keypoint bindings, contact geometry.

Characters are data files (JSON). Each link carries its mass and a capsule
or sphere collider; rotational inertia is derived from the collider unless
given explicitly. Exactly one free-root joint sits at the tree root; the
remaining joints are spherical (3-DoF, exponential coordinates) or revolute.

Schema (units: kg, m, rad, N*m)::

    {"name": "...",
     "links": [
        {"name": "pelvis", "parent": -1, "mass": 8.0,
         "geometry": {"type": "capsule", "a": [x,y,z], "b": [x,y,z], "radius": r},
         "joint": {"type": "free"},
         "attach": [0, 0, 0]},
        {"name": "torso", "parent": 0, "mass": 4.0,
         "geometry": {...},
         "joint": {"type": "spherical", "limit": 1.0, "kp": 200, "kd": 20,
                   "torque_limit": 120},
         "attach": [0, 0, 0.12]},
        {... "joint": {"type": "revolute", "axis": [0,1,0], "range": [0, 2.4],
                       "kp": 150, "kd": 15, "torque_limit": 90} ...}],
     "keypoints": [{"link": 0, "offset": [0,0,0]}, ...],
     "key_bodies": [3, 5],
     "contact": {"stiffness": 2e4, "damping": 500, "friction": 0.8,
                 "tangent_damping": 250},
     "rest_pose": [..joint coords..]}           # optional, defaults to zeros
"""

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from ..errors import ConfigError
from ..rotations import rotvec_to_mat

FREE, SPHERICAL, REVOLUTE = "free", "spherical", "revolute"


def _capsule_inertia(mass, a, b, radius):
    """Solid-capsule inertia about its COM, in body coordinates."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    length = float(np.linalg.norm(b - a))
    r = float(radius)
    if length < 1e-9:
        return np.eye(3) * (0.4 * mass * r * r), 0.5 * (a + b)
    v_cyl = np.pi * r * r * length
    v_sph = 4.0 / 3.0 * np.pi * r**3
    m_cyl = mass * v_cyl / (v_cyl + v_sph)
    m_sph = mass - m_cyl
    m_hs = 0.5 * m_sph
    i_axial = 0.5 * m_cyl * r * r + 0.4 * m_sph * r * r
    d = 0.5 * length + 0.375 * r
    i_perp = m_cyl * (length * length / 12.0 + 0.25 * r * r) + 2.0 * (
        83.0 / 320.0 * m_hs * r * r + m_hs * d * d
    )
    axis = (b - a) / length
    # rotate diag(perp, perp, axial) so its z-axis matches the capsule axis
    z = np.array([0.0, 0.0, 1.0])
    v = np.cross(z, axis)
    s = np.linalg.norm(v)
    rot = np.eye(3) if s < 1e-9 else rotvec_to_mat(v / s * np.arctan2(s, float(z @ axis)))
    inertia = rot @ np.diag([i_perp, i_perp, i_axial]) @ rot.T
    return inertia, 0.5 * (a + b)


@dataclass
class Joint:
    jtype: str
    axis: np.ndarray = None
    limit_lo: np.ndarray = None
    limit_hi: np.ndarray = None
    kp: np.ndarray = None
    kd: np.ndarray = None
    torque_limit: np.ndarray = None
    armature: np.ndarray = None  # reflected rotor inertia, stabilizes light links
    nv: int = 0


@dataclass
class Link:
    name: str
    parent: int
    mass: float
    geometry: dict
    joint: Joint
    attach: np.ndarray
    inertia: np.ndarray = None
    com: np.ndarray = None


@dataclass
class CharacterModel:
    """Validated articulated character ready for simulation."""

    name: str
    links: list
    keypoint_links: np.ndarray  # [J]
    keypoint_offsets: np.ndarray  # [J, 3]
    key_bodies: np.ndarray
    contact: dict
    rest_pose: np.ndarray

    def __post_init__(self):
        if not self.links:
            raise ConfigError("character has no links")
        if self.links[0].joint.jtype != FREE or self.links[0].parent != -1:
            raise ConfigError("the first link must carry the free root joint")
        for i, link in enumerate(self.links):
            if i > 0 and link.joint.jtype == FREE:
                raise ConfigError(f"link {link.name}: only the root may be free")
            if i > 0 and not (0 <= link.parent < i):
                raise ConfigError(f"link {link.name}: parent must precede it (tree order)")
            if link.mass <= 0:
                raise ConfigError(f"link {link.name}: mass must be positive")
        if self.contact["stiffness"] <= 0 or self.contact["friction"] < 0:
            raise ConfigError("contact stiffness must be > 0 and friction >= 0")
        # dof layout: root occupies v[0:6]; actuated joints follow in link order
        self.nv = 6
        self.nq_joint = 0
        self.dof_slices = [slice(0, 6)]
        for link in self.links[1:]:
            j = link.joint
            self.dof_slices.append(slice(self.nv, self.nv + j.nv))
            self.nv += j.nv
            self.nq_joint += j.nv
        self.nu = self.nv - 6
        if self.rest_pose is None:
            self.rest_pose = np.zeros(self.nu)
        if self.rest_pose.shape != (self.nu,):
            raise ConfigError(f"rest_pose must have {self.nu} entries")
        self.joint_limits_lo = np.concatenate([l.joint.limit_lo for l in self.links[1:]]) if self.nu else np.zeros(0)
        self.joint_limits_hi = np.concatenate([l.joint.limit_hi for l in self.links[1:]]) if self.nu else np.zeros(0)
        self.kp = np.concatenate([l.joint.kp for l in self.links[1:]]) if self.nu else np.zeros(0)
        self.kd = np.concatenate([l.joint.kd for l in self.links[1:]]) if self.nu else np.zeros(0)
        self.torque_limit = np.concatenate([l.joint.torque_limit for l in self.links[1:]]) if self.nu else np.zeros(0)
        self.armature = np.concatenate([l.joint.armature for l in self.links[1:]]) if self.nu else np.zeros(0)
        bad = np.clip(self.rest_pose, self.joint_limits_lo, self.joint_limits_hi) != self.rest_pose
        if np.any(bad):
            raise ConfigError("rest_pose violates joint limits")

    @property
    def num_links(self):
        return len(self.links)

    @property
    def num_keypoints(self):
        return len(self.keypoint_links)

    def total_mass(self):
        return sum(l.mass for l in self.links)


def _parse_joint(spec, name):
    jtype = spec.get("type")
    if jtype == FREE:
        return Joint(jtype=FREE, nv=6)
    kp = float(spec.get("kp", 0.0))
    kd = float(spec.get("kd", 0.0))
    tl = float(spec.get("torque_limit", np.inf))
    arm = float(spec.get("armature", 0.1))
    if kp < 0 or kd < 0:
        raise ConfigError(f"joint {name}: PD gains must be >= 0")
    if jtype == SPHERICAL:
        lim = spec.get("limit", np.pi * 0.9)
        lim = np.full(3, float(lim)) if np.isscalar(lim) else np.asarray(lim, float)
        return Joint(
            jtype=SPHERICAL,
            limit_lo=-lim,
            limit_hi=lim,
            kp=np.full(3, kp),
            kd=np.full(3, kd),
            torque_limit=np.full(3, tl),
            armature=np.full(3, arm),
            nv=3,
        )
    if jtype == REVOLUTE:
        axis = np.asarray(spec["axis"], float)
        axis = axis / np.linalg.norm(axis)
        lo, hi = spec.get("range", (-np.pi * 0.9, np.pi * 0.9))
        return Joint(
            jtype=REVOLUTE,
            axis=axis,
            limit_lo=np.array([float(lo)]),
            limit_hi=np.array([float(hi)]),
            kp=np.array([kp]),
            kd=np.array([kd]),
            torque_limit=np.array([tl]),
            armature=np.array([arm]),
            nv=1,
        )
    raise ConfigError(f"joint {name}: unknown type {jtype!r}")


def character_from_dict(doc):
    links = []
    for spec in doc["links"]:
        geom = spec["geometry"]
        mass = float(spec["mass"])
        if geom["type"] == "capsule":
            inertia, com = _capsule_inertia(mass, geom["a"], geom["b"], geom["radius"])
        elif geom["type"] == "sphere":
            coef = 2.0 / 3.0 if geom.get("hollow") else 0.4
            inertia = np.eye(3) * (coef * mass * geom["radius"] ** 2)
            com = np.asarray(geom.get("center", [0.0, 0.0, 0.0]), float)
        else:
            raise ConfigError(f"link {spec['name']}: unknown geometry {geom['type']!r}")
        if "inertia" in spec:
            inertia = np.diag(np.asarray(spec["inertia"], float))
        links.append(
            Link(
                name=spec["name"],
                parent=int(spec["parent"]),
                mass=mass,
                geometry=geom,
                joint=_parse_joint(spec["joint"], spec["name"]),
                attach=np.asarray(spec.get("attach", [0.0, 0.0, 0.0]), float),
                inertia=inertia,
                com=com,
            )
        )
    kp_links = np.array([k["link"] for k in doc["keypoints"]], dtype=int)
    kp_offsets = np.array([k["offset"] for k in doc["keypoints"]], dtype=float)
    rest = np.asarray(doc["rest_pose"], float) if "rest_pose" in doc else None
    contact = {
        "stiffness": 2.0e4,
        "damping": 500.0,
        "friction": 0.8,
        "tangent_damping": 250.0,
    }
    contact.update(doc.get("contact", {}))
    return CharacterModel(
        name=doc.get("name", "unnamed"),
        links=links,
        keypoint_links=kp_links,
        keypoint_offsets=kp_offsets,
        key_bodies=np.asarray(doc.get("key_bodies", []), dtype=int),
        contact=contact,
        rest_pose=rest,
    )


def load_character(path):
    with open(path) as fh:
        return character_from_dict(json.load(fh))


def builtin_character(name):
    """Load one of the shipped characters: humanoid-lite, quadruped-lite, ball, chain3."""
    fname = name.replace("-", "_") + ".json"
    ref = resources.files("puppet2d.simworld") / "data" / fname
    if not ref.is_file():
        raise ConfigError(f"unknown builtin character {name!r}")
    return character_from_dict(json.loads(ref.read_text()))
