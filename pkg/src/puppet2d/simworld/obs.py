"""Proprioceptive observation: heading-invariant body state features.

Layout (flat vector, fixed per character):
root height (1) | root linear velocity, heading frame (3) | root angular
velocity, heading frame (3) | joint rotations: 6D per spherical joint,
(sin, cos) per revolute | joint velocities (nu) | key-body positions in
the heading-aligned root frame (3 per key body).
"""

import numpy as np

from ..rotations import quat_to_mat, rotvec_to_mat, yaw_of_quat
from .character import REVOLUTE, SPHERICAL


def proprio_dim(character):
    n_sph = sum(1 for l in character.links[1:] if l.joint.jtype == SPHERICAL)
    n_rev = sum(1 for l in character.links[1:] if l.joint.jtype == REVOLUTE)
    return 1 + 3 + 3 + 6 * n_sph + 2 * n_rev + character.nu + 3 * len(character.key_bodies)


def proprio_obs(world):
    """Batched observation [N, P] for every environment in `world`."""
    tree = world.tree
    model = world.character
    n = world.n
    root_r = quat_to_mat(tree.root_quat)
    yaw = yaw_of_quat(tree.root_quat)
    ez = np.array([0.0, 0.0, 1.0])
    heading_inv = rotvec_to_mat(-yaw[:, None] * ez)
    omega_w = np.einsum("nij,nj->ni", root_r, tree.root_vel[:, :3])
    vel_w = np.einsum("nij,nj->ni", root_r, tree.root_vel[:, 3:])
    parts = [
        tree.root_pos[:, 2:3],
        np.einsum("nij,nj->ni", heading_inv, vel_w),
        np.einsum("nij,nj->ni", heading_inv, omega_w),
    ]
    for i, link in enumerate(model.links[1:], start=1):
        sl = model.dof_slices[i]
        a, b = sl.start - 6, sl.stop - 6
        if link.joint.jtype == SPHERICAL:
            rot = rotvec_to_mat(tree.joint_q[:, a:b])
            parts.append(rot[:, :, :2].reshape(n, 6))
        else:
            angle = tree.joint_q[:, a]
            parts.append(np.stack([np.sin(angle), np.cos(angle)], axis=-1))
    if model.nu:
        parts.append(tree.joint_dq)
    if len(model.key_bodies):
        _, _, e_0, r_0 = tree.kinematics()
        for b in model.key_bodies:
            rel = r_0[b] - tree.root_pos
            parts.append(np.einsum("nij,nj->ni", heading_inv, rel))
    return np.concatenate(parts, axis=1)
