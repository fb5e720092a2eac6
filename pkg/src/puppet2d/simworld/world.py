"""Reduced-coordinate articulated dynamics with penalty ground contact.

One `World` owns N independent environment instances of the same character
(optionally plus a free object such as a ball), batched over the leading
axis of every state array. Dynamics: composite-rigid-body mass matrix +
recursive Newton-Euler bias forces, solved per step, integrated with
semi-implicit Euler at 60 Hz; control runs at 30 Hz (exactly two substeps).

Root generalized velocity is the body-frame spatial velocity [w_body,
v_body]; spherical joints store exponential coordinates with child-frame
angular velocity.
"""

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, ResetError, ShapeError, SimulationDivergedError
from ..rotations import (
    quat_from_rotvec,
    quat_mul,
    quat_normalize,
    quat_to_mat,
    quat_to_rotvec,
    rotvec_to_mat,
)
from . import spatial
from .character import FREE, REVOLUTE, SPHERICAL

PHYSICS_DT = 1.0 / 60.0
CONTROL_SUBSTEPS = 2
VELOCITY_CAP = 1.0e3


@dataclass
class SimState:
    """Generalized coordinates/velocities of one environment instance."""

    root_pos: np.ndarray  # [3] m
    root_quat: np.ndarray  # [4] wxyz, unit
    joint_q: np.ndarray  # [nu] rad
    root_vel: np.ndarray  # [6] = [w_body, v_body]
    joint_dq: np.ndarray  # [nu]
    object_pos: np.ndarray = None
    object_quat: np.ndarray = None
    object_vel: np.ndarray = None
    time: float = 0.0

    def copy(self):
        return SimState(
            root_pos=self.root_pos.copy(),
            root_quat=self.root_quat.copy(),
            joint_q=self.joint_q.copy(),
            root_vel=self.root_vel.copy(),
            joint_dq=self.joint_dq.copy(),
            object_pos=None if self.object_pos is None else self.object_pos.copy(),
            object_quat=None if self.object_quat is None else self.object_quat.copy(),
            object_vel=None if self.object_vel is None else self.object_vel.copy(),
            time=self.time,
        )


class _Tree:
    """Static structure plus batched per-step dynamics for one kinematic tree."""

    def __init__(self, model, n_envs):
        self.model = model
        self.n = n_envs
        nb = model.num_links
        self.parent = np.array([l.parent for l in model.links])
        self.attach = np.stack([l.attach for l in model.links])
        self.inertia6 = np.stack(
            [spatial.spatial_inertia(l.mass, l.com, l.inertia) for l in model.links]
        )
        self.subspace = []
        for link in model.links:
            j = link.joint
            s = np.zeros((6, j.nv))
            if j.jtype == FREE:
                s = np.eye(6)
            elif j.jtype == SPHERICAL:
                s[:3, :3] = np.eye(3)
            else:
                s[:3, 0] = j.axis
            self.subspace.append(s)
        # contact spheres: capsule endpoints / sphere centers
        bodies, offsets, radii = [], [], []
        for b, link in enumerate(model.links):
            g = link.geometry
            if g["type"] == "capsule":
                for end in (g["a"], g["b"]):
                    bodies.append(b)
                    offsets.append(end)
                    radii.append(g["radius"])
            else:
                bodies.append(b)
                offsets.append(g.get("center", [0.0, 0.0, 0.0]))
                radii.append(g["radius"])
        self.contact_body = np.array(bodies)
        self.contact_offset = np.array(offsets, dtype=float)
        self.contact_radius = np.array(radii, dtype=float)
        self.contact_mass = np.array([model.links[b].mass for b in bodies])

        self.nb = nb
        self.nv = model.nv
        self.nu = model.nu
        # state (batched)
        self.root_pos = np.zeros((n_envs, 3))
        self.root_quat = np.tile(np.array([1.0, 0.0, 0.0, 0.0]), (n_envs, 1))
        self.joint_q = np.tile(model.rest_pose, (n_envs, 1))
        self.root_vel = np.zeros((n_envs, 6))
        self.joint_dq = np.zeros((n_envs, self.nu))

    # -- kinematics --------------------------------------------------------

    def _joint_rot(self, i):
        """Child-to-parent rotation of joint i (batched)."""
        link = self.model.links[i]
        sl = self.model.dof_slices[i]
        if link.joint.jtype == SPHERICAL:
            return rotvec_to_mat(self.joint_q[:, sl.start - 6 : sl.stop - 6])
        angle = self.joint_q[:, sl.start - 6]
        return rotvec_to_mat(link.joint.axis[None, :] * angle[:, None])

    def kinematics(self):
        """Per-body coordinate transforms: parent->body and world->body."""
        n = self.n
        e_up = [None] * self.nb
        r_up = [None] * self.nb
        e_0 = [None] * self.nb
        r_0 = [None] * self.nb
        root_r = quat_to_mat(self.root_quat)
        e_up[0] = np.swapaxes(root_r, -1, -2)
        r_up[0] = self.root_pos
        e_0[0], r_0[0] = e_up[0], self.root_pos
        for i in range(1, self.nb):
            p = self.parent[i]
            rot = self._joint_rot(i)
            e_up[i] = np.swapaxes(rot, -1, -2)
            r_up[i] = np.broadcast_to(self.attach[i], (n, 3))
            e_0[i], r_0[i] = spatial.compose(e_0[p], r_0[p], e_up[i], r_up[i])
        return e_up, r_up, e_0, r_0

    def joint_velocity(self, i):
        sl = self.model.dof_slices[i]
        if i == 0:
            return self.root_vel
        qd = self.joint_dq[:, sl.start - 6 : sl.stop - 6]
        return np.einsum("jk,nk->nj", self.subspace[i], qd)

    def velocities(self, e_up, r_up):
        v = [None] * self.nb
        v[0] = self.root_vel.copy()
        for i in range(1, self.nb):
            vj = self.joint_velocity(i)
            v[i] = spatial.xform_motion(e_up[i], r_up[i], v[self.parent[i]]) + vj
        return v

    # -- dynamics ------------------------------------------------------------

    def forward_dynamics(self, tau_joint, ext_wrench_world, e_up, r_up, e_0, r_0, gravity):
        """Generalized accelerations [N, nv] from joint torques + externals."""
        n, nb, nv = self.n, self.nb, self.nv
        v = self.velocities(e_up, r_up)
        # bias pass (RNEA with qacc = 0, gravity folded into the base acceleration)
        a_world = np.zeros((n, 6))
        a_world[:, 3:] = -gravity
        a = [None] * nb
        f = [None] * nb
        for i in range(nb):
            p = self.parent[i]
            a_par = a_world if i == 0 else a[p]
            vj = self.joint_velocity(i)
            a[i] = spatial.xform_motion(e_up[i], r_up[i], a_par) + spatial.cross_motion(v[i], vj)
            f[i] = spatial.apply_inertia(self.inertia6[i], a[i]) + spatial.cross_force(
                v[i], spatial.apply_inertia(self.inertia6[i], v[i])
            )
            if ext_wrench_world is not None:
                f[i] -= spatial.xform_force_from_world(e_0[i], r_0[i], ext_wrench_world[:, i])
        bias = np.zeros((n, nv))
        for i in range(nb - 1, -1, -1):
            sl = self.model.dof_slices[i]
            bias[:, sl] = np.einsum("jk,nj->nk", self.subspace[i], f[i])
            if i > 0:
                f[self.parent[i]] += spatial.xform_force_to_parent(e_up[i], r_up[i], f[i])
        # composite-rigid-body mass matrix
        xm = [spatial.xmat(e_up[i], r_up[i]) for i in range(nb)]
        ic = [np.broadcast_to(self.inertia6[i], (n, 6, 6)).copy() for i in range(nb)]
        for i in range(nb - 1, 0, -1):
            p = self.parent[i]
            ic[p] += np.einsum("nji,njk,nkl->nil", xm[i], ic[i], xm[i])
        h = np.zeros((n, nv, nv))
        for i in range(nb):
            sl_i = self.model.dof_slices[i]
            fblock = np.einsum("nij,jk->nik", ic[i], self.subspace[i])
            h[:, sl_i, sl_i] = np.einsum("jk,njl->nkl", self.subspace[i], fblock)
            j = i
            while self.parent[j] >= 0:
                fblock = np.einsum("nji,njk->nik", xm[j], fblock)
                j = self.parent[j]
                sl_j = self.model.dof_slices[j]
                block = np.einsum("nji,jk->nik", fblock, self.subspace[j])  # [ni, nj]
                h[:, sl_i, sl_j] = block
                h[:, sl_j, sl_i] = np.swapaxes(block, -1, -2)
        if self.nu:
            idx = np.arange(6, nv)
            h[:, idx, idx] += self.model.armature
        tau = np.zeros((n, nv))
        if self.nu:
            tau[:, 6:] = tau_joint
        return np.linalg.solve(h, (tau - bias)[..., None])[..., 0]

    # -- integration -----------------------------------------------------------

    def integrate(self, qacc, dt):
        self.root_vel += dt * qacc[:, :6]
        if self.nu:
            self.joint_dq += dt * qacc[:, 6:]
        root_r = quat_to_mat(self.root_quat)
        self.root_pos = self.root_pos + dt * np.einsum("nij,nj->ni", root_r, self.root_vel[:, 3:])
        self.root_quat = quat_normalize(
            quat_mul(self.root_quat, quat_from_rotvec(dt * self.root_vel[:, :3]))
        )
        model = self.model
        for i in range(1, self.nb):
            sl = self.model.dof_slices[i]
            a, b = sl.start - 6, sl.stop - 6
            if model.links[i].joint.jtype == SPHERICAL:
                q = quat_mul(
                    quat_from_rotvec(self.joint_q[:, a:b]),
                    quat_from_rotvec(dt * self.joint_dq[:, a:b]),
                )
                self.joint_q[:, a:b] = quat_to_rotvec(q)
            else:
                self.joint_q[:, a:b] += dt * self.joint_dq[:, a:b]
        if self.nu:
            lo, hi = model.joint_limits_lo, model.joint_limits_hi
            at_lo = (self.joint_q <= lo) & (self.joint_dq < 0)
            at_hi = (self.joint_q >= hi) & (self.joint_dq > 0)
            self.joint_dq[at_lo | at_hi] = 0.0
            np.clip(self.joint_q, lo, hi, out=self.joint_q)

    # -- contact geometry --------------------------------------------------------

    def contact_points(self, e_0, r_0, v=None):
        """World positions (and velocities) of every contact sphere center."""
        pts, vels = [], []
        for k in range(len(self.contact_body)):
            b = self.contact_body[k]
            off = self.contact_offset[k]
            pts.append(r_0[b] + np.einsum("nji,j->ni", e_0[b], off))
            if v is not None:
                local = v[b][:, 3:] + np.cross(v[b][:, :3], off)
                vels.append(np.einsum("nji,nj->ni", e_0[b], local))
        return np.stack(pts, axis=1), (np.stack(vels, axis=1) if v is not None else None)


class World:
    """N batched environments of one character (plus optional free object)."""

    def __init__(
        self,
        character,
        n_envs=1,
        object_model=None,
        gravity=(0.0, 0.0, -9.81),
        dt=PHYSICS_DT,
        velocity_cap=VELOCITY_CAP,
    ):
        if n_envs < 1:
            raise ConfigError("n_envs must be >= 1")
        self.character = character
        self.n = n_envs
        self.dt = dt
        self.gravity = np.asarray(gravity, dtype=float)
        self.velocity_cap = velocity_cap
        self.tree = _Tree(character, n_envs)
        self.obj = _Tree(object_model, n_envs) if object_model is not None else None
        self.time = np.zeros(n_envs)
        half = 0.5 * (character.joint_limits_hi - character.joint_limits_lo)
        self.action_scale = half
        self.nu = character.nu

    # -- state access ---------------------------------------------------------

    def get_state(self, env=0):
        t = self.tree
        s = SimState(
            root_pos=t.root_pos[env].copy(),
            root_quat=t.root_quat[env].copy(),
            joint_q=t.joint_q[env].copy(),
            root_vel=t.root_vel[env].copy(),
            joint_dq=t.joint_dq[env].copy(),
            time=float(self.time[env]),
        )
        if self.obj is not None:
            s.object_pos = self.obj.root_pos[env].copy()
            s.object_quat = self.obj.root_quat[env].copy()
            s.object_vel = self.obj.root_vel[env].copy()
        return s

    def reset_to(self, state, env=None):
        """Set environment(s) exactly to `state`; strict validation."""
        if abs(np.linalg.norm(state.root_quat) - 1.0) > 1e-6:
            raise ResetError("root quaternion is not unit-norm")
        if state.joint_q.shape != (self.nu,):
            raise ResetError(f"joint_q must have {self.nu} entries")
        lo, hi = self.character.joint_limits_lo, self.character.joint_limits_hi
        if self.nu and (np.any(state.joint_q < lo - 1e-9) or np.any(state.joint_q > hi + 1e-9)):
            raise ResetError("joint coordinates outside limits")
        if not all(
            np.all(np.isfinite(x)) for x in (state.root_pos, state.root_vel, state.joint_dq)
        ):
            raise ResetError("non-finite state")
        envs = range(self.n) if env is None else [env]
        t = self.tree
        for e in envs:
            t.root_pos[e] = state.root_pos
            t.root_quat[e] = state.root_quat
            t.joint_q[e] = state.joint_q
            t.root_vel[e] = state.root_vel
            t.joint_dq[e] = state.joint_dq
            self.time[e] = state.time
            if self.obj is not None and state.object_pos is not None:
                self.obj.root_pos[e] = state.object_pos
                self.obj.root_quat[e] = state.object_quat
                self.obj.root_vel[e] = state.object_vel

    def _snapshot(self):
        arrays = [
            self.tree.root_pos,
            self.tree.root_quat,
            self.tree.joint_q,
            self.tree.root_vel,
            self.tree.joint_dq,
            self.time,
        ]
        if self.obj is not None:
            arrays += [self.obj.root_pos, self.obj.root_quat, self.obj.root_vel]
        return [a.copy() for a in arrays]

    def _restore(self, snap):
        targets = [
            self.tree.root_pos,
            self.tree.root_quat,
            self.tree.joint_q,
            self.tree.root_vel,
            self.tree.joint_dq,
            self.time,
        ]
        if self.obj is not None:
            targets += [self.obj.root_pos, self.obj.root_quat, self.obj.root_vel]
        for dst, src in zip(targets, snap):
            dst[...] = src

    # -- forces ------------------------------------------------------------------

    def _ground_forces(self, tree, e_0, r_0, v):
        """Penalty ground contact: world wrench per body [N, nb, 6]."""
        con = tree.model.contact
        # explicit damping is only stable below ~m/dt per contact; cap per link mass
        stab = 1.5 * tree.contact_mass / self.dt
        c_n = np.minimum(con["damping"], stab)[None, :]
        c_t = np.minimum(con["tangent_damping"], stab)[None, :, None]
        pts, vels = tree.contact_points(e_0, r_0, v)
        pen = tree.contact_radius[None, :] - pts[..., 2]
        active = pen > 0.0
        f_n = np.maximum(con["stiffness"] * pen - c_n * vels[..., 2], 0.0) * active
        f_t = -c_t * vels[..., :2]
        t_norm = np.linalg.norm(f_t, axis=-1)
        cap = con["friction"] * f_n
        scale = np.where(t_norm > 1e-12, np.minimum(1.0, cap / np.maximum(t_norm, 1e-12)), 0.0)
        force = np.concatenate([f_t * scale[..., None], f_n[..., None]], axis=-1)
        force *= active[..., None]
        wrench = np.zeros((tree.n, tree.nb, 6))
        moment = np.cross(pts, force)
        for k in range(len(tree.contact_body)):
            b = tree.contact_body[k]
            wrench[:, b, :3] += moment[:, k]
            wrench[:, b, 3:] += force[:, k]
        return wrench

    def _coupling_forces(self, e_0c, r_0c, v_c, e_0o, r_0o, v_o):
        """Sphere-vs-capsule penalty forces between the object and character."""
        con = self.obj.model.contact  # object params govern the coupling
        obj_geom = self.obj.model.links[0].geometry
        ball_r = obj_geom["radius"]
        center = r_0o[0] + np.einsum("nji,j->ni", e_0o[0], np.asarray(obj_geom.get("center", [0, 0, 0]), float))
        w_char = np.zeros((self.n, self.tree.nb, 6))
        w_obj = np.zeros((self.n, 1, 6))
        for b, link in enumerate(self.character.links):
            g = link.geometry
            if g["type"] != "capsule":
                continue
            pa = r_0c[b] + np.einsum("nji,j->ni", e_0c[b], np.asarray(g["a"], float))
            pb = r_0c[b] + np.einsum("nji,j->ni", e_0c[b], np.asarray(g["b"], float))
            seg = pb - pa
            seg_len2 = np.maximum((seg * seg).sum(-1), 1e-12)
            t = np.clip(((center - pa) * seg).sum(-1) / seg_len2, 0.0, 1.0)
            closest = pa + t[:, None] * seg
            dvec = center - closest
            dist = np.maximum(np.linalg.norm(dvec, axis=-1), 1e-9)
            pen = ball_r + g["radius"] - dist
            active = pen > 0.0
            if not np.any(active):
                continue
            normal = dvec / dist[:, None]
            # contact-point velocities
            local_c = np.einsum("nij,nj->ni", e_0c[b], closest - r_0c[b])
            vel_c = np.einsum(
                "nji,nj->ni", e_0c[b], v_c[b][:, 3:] + np.cross(v_c[b][:, :3], local_c)
            )
            local_o = np.einsum("nij,nj->ni", e_0o[0], closest - r_0o[0])
            vel_o = np.einsum(
                "nji,nj->ni", e_0o[0], v_o[0][:, 3:] + np.cross(v_o[0][:, :3], local_o)
            )
            rel = vel_o - vel_c
            vn = (rel * normal).sum(-1)
            f_n = np.maximum(con["stiffness"] * pen - con["damping"] * vn, 0.0) * active
            vt = rel - vn[:, None] * normal
            f_t = -con["tangent_damping"] * vt
            t_norm = np.linalg.norm(f_t, axis=-1)
            cap = con["friction"] * f_n
            scale = np.where(t_norm > 1e-12, np.minimum(1.0, cap / np.maximum(t_norm, 1e-12)), 0.0)
            force_on_obj = (f_n[:, None] * normal + f_t * scale[:, None]) * active[:, None]
            w_obj[:, 0, :3] += np.cross(closest, force_on_obj)
            w_obj[:, 0, 3:] += force_on_obj
            w_char[:, b, :3] -= np.cross(closest, force_on_obj)
            w_char[:, b, 3:] -= force_on_obj
        return w_char, w_obj

    # -- stepping -------------------------------------------------------------------

    def pd_torques(self, targets):
        """tau = clamp(kp (q* - q) - kd qdot, +-limit), per-axis."""
        if targets.shape[-1] != self.nu:
            raise ShapeError(f"targets must have {self.nu} entries, got {targets.shape}")
        q, dq = self.tree.joint_q, self.tree.joint_dq
        tau = self.character.kp * (targets - q) - self.character.kd * dq
        return np.clip(tau, -self.character.torque_limit, self.character.torque_limit)

    def action_to_targets(self, action):
        """PD targets as rest-pose offsets scaled to joint half-ranges."""
        rest = self.character.rest_pose
        return np.clip(
            rest + action * self.action_scale,
            self.character.joint_limits_lo,
            self.character.joint_limits_hi,
        )

    def step_physics(self, torques, dt=None):
        """One physics substep; torques [N, nu] are clamped to limits."""
        dt = self.dt if dt is None else dt
        torques = np.asarray(torques, dtype=float)
        if torques.shape != (self.n, self.nu):
            raise ShapeError(f"torques must be [{self.n}, {self.nu}], got {torques.shape}")
        torques = np.clip(torques, -self.character.torque_limit, self.character.torque_limit)
        tree = self.tree
        e_up, r_up, e_0, r_0 = tree.kinematics()
        v = tree.velocities(e_up, r_up)
        wrench = self._ground_forces(tree, e_0, r_0, v)
        if self.obj is not None:
            oe_up, or_up, oe_0, or_0 = self.obj.kinematics()
            ov = self.obj.velocities(oe_up, or_up)
            w_obj = self._ground_forces(self.obj, oe_0, or_0, ov)
            wc, wo = self._coupling_forces(e_0, r_0, v, oe_0, or_0, ov)
            wrench += wc
            w_obj += wo
            oacc = self.obj.forward_dynamics(
                np.zeros((self.n, 0)), w_obj, oe_up, or_up, oe_0, or_0, self.gravity
            )
        qacc = tree.forward_dynamics(torques, wrench, e_up, r_up, e_0, r_0, self.gravity)
        tree.integrate(qacc, dt)
        if self.obj is not None:
            self.obj.integrate(oacc, dt)
        self.time += dt
        self._check_divergence()

    def control_step(self, action):
        """One 30 Hz control step: exactly two substeps, torques recomputed."""
        if action.shape != (self.n, self.nu):
            raise ShapeError(f"action must be [{self.n}, {self.nu}], got {action.shape}")
        targets = self.action_to_targets(action)
        snap = self._snapshot()
        try:
            for _ in range(CONTROL_SUBSTEPS):
                self.step_physics(self.pd_torques(targets))
        except SimulationDivergedError:
            self._restore(snap)
            raise

    def _check_divergence(self):
        for tree in (self.tree,) if self.obj is None else (self.tree, self.obj):
            vel = np.abs(tree.root_vel).max()
            if tree.nu:
                vel = max(vel, np.abs(tree.joint_dq).max())
            finite = all(
                np.all(np.isfinite(arr))
                for arr in (tree.root_pos, tree.root_quat, tree.joint_q, tree.root_vel, tree.joint_dq)
            )
            if not finite or vel > self.velocity_cap:
                raise SimulationDivergedError(f"simulation diverged (max |qdot| = {vel:.3e})")

    # -- kinematic outputs -------------------------------------------------------------

    def forward_kinematics(self):
        """World keypoints [N, J, 3] (+ object keypoints [N, Jo, 3] if present)."""
        tree = self.tree
        _, _, e_0, r_0 = tree.kinematics()
        model = self.character
        pts = np.stack(
            [
                r_0[b] + np.einsum("nji,j->ni", e_0[b], off)
                for b, off in zip(model.keypoint_links, model.keypoint_offsets)
            ],
            axis=1,
        )
        if self.obj is None:
            return pts, None
        _, _, oe_0, or_0 = self.obj.kinematics()
        om = self.obj.model
        opts = np.stack(
            [
                or_0[b] + np.einsum("nji,j->ni", oe_0[b], off)
                for b, off in zip(om.keypoint_links, om.keypoint_offsets)
            ],
            axis=1,
        )
        return pts, opts

    def link_frames(self):
        _, _, e_0, r_0 = self.tree.kinematics()
        return e_0, r_0

    # -- diagnostics ----------------------------------------------------------------------

    def mechanical_energy(self):
        """Kinetic + gravitational + contact-spring energy per env [N]."""
        total = np.zeros(self.n)
        for tree in (self.tree,) if self.obj is None else (self.tree, self.obj):
            e_up, r_up, e_0, r_0 = tree.kinematics()
            v = tree.velocities(e_up, r_up)
            for i, link in enumerate(tree.model.links):
                iv = spatial.apply_inertia(tree.inertia6[i], v[i])
                total += 0.5 * np.einsum("nj,nj->n", v[i], iv)
                com_w = r_0[i] + np.einsum("nji,j->ni", e_0[i], link.com)
                total += link.mass * (-self.gravity[2]) * com_w[:, 2]
            pts, _ = tree.contact_points(e_0, r_0)
            pen = np.maximum(tree.contact_radius[None, :] - pts[..., 2], 0.0)
            total += 0.5 * tree.model.contact["stiffness"] * (pen**2).sum(axis=1)
        return total

    def linear_momentum(self):
        """World-frame total linear momentum per env [N, 3]."""
        total = np.zeros((self.n, 3))
        for tree in (self.tree,) if self.obj is None else (self.tree, self.obj):
            e_up, r_up, e_0, r_0 = tree.kinematics()
            v = tree.velocities(e_up, r_up)
            for i, link in enumerate(tree.model.links):
                v_com = v[i][:, 3:] + np.cross(v[i][:, :3], link.com)
                total += link.mass * np.einsum("nji,nj->ni", e_0[i], v_com)
        return total
