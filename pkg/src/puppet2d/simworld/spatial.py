"""Batched 6D spatial algebra (Featherstone convention, angular part first).

Transforms are kept as (E, r) pairs where E rotates coordinates from frame A
to frame B and r is B's origin expressed in A. All functions broadcast over
a leading environment axis.
"""

import numpy as np

from ..rotations import skew


def xform_motion(E, r, m):
    """Motion vector from A coords to B coords: [Ew, E(v - r x w)]."""
    w, v = m[..., :3], m[..., 3:]
    w2 = np.einsum("...ij,...j->...i", E, w)
    v2 = np.einsum("...ij,...j->...i", E, v - np.cross(r, w))
    return np.concatenate([w2, v2], axis=-1)


def xform_force_to_parent(E, r, f):
    """Force vector from B (child) coords back to A (parent) coords."""
    n, fl = f[..., :3], f[..., 3:]
    fp = np.einsum("...ji,...j->...i", E, fl)
    np_ = np.einsum("...ji,...j->...i", E, n) + np.cross(r, fp)
    return np.concatenate([np_, fp], axis=-1)


def xform_force_from_world(E0, r0, wrench_world):
    """World wrench (moment about world origin) into body coordinates."""
    n, fl = wrench_world[..., :3], wrench_world[..., 3:]
    nb = np.einsum("...ij,...j->...i", E0, n - np.cross(r0, fl))
    fb = np.einsum("...ij,...j->...i", E0, fl)
    return np.concatenate([nb, fb], axis=-1)


def compose(E_a, r_a, E_b, r_b):
    """Compose world->A with A->B into world->B (r in world coords)."""
    E = np.einsum("...ij,...jk->...ik", E_b, E_a)
    r = r_a + np.einsum("...ji,...j->...i", E_a, r_b)
    return E, r


def cross_motion(v, u):
    """v x_m u for motion vectors."""
    w, vo = v[..., :3], v[..., 3:]
    uw, uv = u[..., :3], u[..., 3:]
    return np.concatenate([np.cross(w, uw), np.cross(vo, uw) + np.cross(w, uv)], axis=-1)


def cross_force(v, f):
    """v x_f f for force vectors."""
    w, vo = v[..., :3], v[..., 3:]
    n, fl = f[..., :3], f[..., 3:]
    return np.concatenate([np.cross(w, n) + np.cross(vo, fl), np.cross(w, fl)], axis=-1)


def spatial_inertia(mass, com, inertia_com):
    """6x6 spatial inertia from mass, COM offset and rotational inertia."""
    c = skew(np.asarray(com, float))
    out = np.zeros((6, 6))
    out[:3, :3] = inertia_com + mass * (c @ c.T)
    out[:3, 3:] = mass * c
    out[3:, :3] = mass * c.T
    out[3:, 3:] = mass * np.eye(3)
    return out


def xmat(E, r):
    """Materialized 6x6 motion transform [[E, 0], [-E r^, E]] (batched)."""
    batch = E.shape[:-2]
    out = np.zeros(batch + (6, 6))
    out[..., :3, :3] = E
    out[..., 3:, 3:] = E
    out[..., 3:, :3] = -np.einsum("...ij,...jk->...ik", E, skew(r))
    return out


def apply_inertia(I, m):
    return np.einsum("...ij,...j->...i", I, m)
