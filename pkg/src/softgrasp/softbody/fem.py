"""Energy, forces, and Hessian of the soft gripper.

Total energy = elastic + tendon + pin (+ gravity):

  elastic   sum_tets V * Psi(F), stable Neo-Hookean
            Psi = mu/2 (I_C - 3) - mu (J - 1) + kappa/2 (J - 1)^2
  tendon    sum_routes 1/2 k_t max(0, L(q) - l_group)^2, L = polyline length
  pin       sum_pins 1/2 k_pin |q_i - anchor|^2
  gravity   sum_nodes m_i g z_i

Psi is polynomial in F, so energy stays finite through element inversion
(det F <= 0); inversion is reported by count_inverted rather than by an
exception. Forces are the exact negative gradient and the Hessian is the
exact second derivative, both assembled vectorized over elements.
"""

from __future__ import annotations

import numpy as np

from softgrasp.softbody.mesh import SoftBodyMesh, TendonLengths

GRAVITY = 9.81

_EPS3 = np.zeros((3, 3, 3))
for _i, _j, _k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
    _EPS3[_i, _j, _k] = 1.0
    _EPS3[_i, _k, _j] = -1.0


def as_lengths(l) -> np.ndarray:
    if isinstance(l, TendonLengths):
        return l.lengths
    return np.asarray(l, dtype=float)


def _anchors_world(mesh: SoftBodyMesh, base_pose):
    if base_pose is None:
        return mesh.pin_anchors
    rot, pos = base_pose
    return mesh.pin_anchors @ np.asarray(rot).T + np.asarray(pos)


def deformation_gradients(mesh: SoftBodyMesh, q: np.ndarray) -> np.ndarray:
    x = q[mesh.tets]
    ds = (x[:, 1:] - x[:, :1]).transpose(0, 2, 1)
    return ds @ mesh.inv_rest_mats


def _cofactor(f: np.ndarray) -> np.ndarray:
    c0 = np.cross(f[:, :, 1], f[:, :, 2])
    c1 = np.cross(f[:, :, 2], f[:, :, 0])
    c2 = np.cross(f[:, :, 0], f[:, :, 1])
    return np.stack([c0, c1, c2], axis=2)


def count_inverted(mesh: SoftBodyMesh, q: np.ndarray) -> int:
    """Number of tets with non-positive volume (the degeneracy flag)."""
    return int((np.linalg.det(deformation_gradients(mesh, q)) <= 0.0).sum())


def _group_extensions(mesh: SoftBodyMesh, q: np.ndarray, lengths: np.ndarray):
    route_len = mesh.route_lengths(q)
    ext = route_len - lengths[mesh.route_groups]
    return route_len, np.maximum(ext, 0.0)


def total_energy(mesh: SoftBodyMesh, q: np.ndarray, l,
                 base_pose=None, gravity_on: bool = False) -> float:
    lengths = as_lengths(l)
    f = deformation_gradients(mesh, q)
    i_c = np.einsum('tij,tij->t', f, f)
    j = np.linalg.det(f)
    mat = mesh.material
    psi = (0.5 * mat.mu * (i_c - 3.0) - mat.mu * (j - 1.0)
           + 0.5 * mat.kappa * (j - 1.0) ** 2)
    elastic = float(mesh.tet_volumes @ psi)

    _, ext = _group_extensions(mesh, q, lengths)
    tendon = 0.5 * mesh.tendon_stiffness * float(ext @ ext)

    dp = q[mesh.pin_nodes] - _anchors_world(mesh, base_pose)
    pin = 0.5 * float(mesh.pin_stiffness @ np.einsum('ij,ij->i', dp, dp))

    total = elastic + tendon + pin
    if gravity_on:
        total += GRAVITY * float(mesh.node_masses @ q[:, 2])
    return total


def _elastic_stress(mesh: SoftBodyMesh, f: np.ndarray):
    mat = mesh.material
    cof = _cofactor(f)
    j = np.einsum('ti,ti->t', f[:, :, 0], cof[:, :, 0])
    coef = mat.kappa * (j - 1.0) - mat.mu
    p = mat.mu * f + coef[:, None, None] * cof
    return p, cof, j, coef


def forces(mesh: SoftBodyMesh, q: np.ndarray, l,
           base_pose=None, gravity_on: bool = False) -> np.ndarray:
    """-grad of total_energy, shape (N, 3)."""
    lengths = as_lengths(l)
    out = np.zeros_like(q)

    f = deformation_gradients(mesh, q)
    p, _, _, _ = _elastic_stress(mesh, f)
    g = mesh.tet_volumes[:, None, None] * (
        p @ mesh.inv_rest_mats.transpose(0, 2, 1))
    contrib = np.empty((len(mesh.tets), 4, 3))
    contrib[:, 1:, :] = -g.transpose(0, 2, 1)
    contrib[:, 0, :] = g.sum(axis=2)
    np.add.at(out, mesh.tets.ravel(), contrib.reshape(-1, 3))

    _, ext = _group_extensions(mesh, q, lengths)
    seg = q[mesh.edge_head] - q[mesh.edge_tail]
    seg_len = np.linalg.norm(seg, axis=1)
    unit = seg / np.maximum(seg_len, 1e-30)[:, None]
    tension = mesh.tendon_stiffness * ext[mesh.edge_route]
    pull = tension[:, None] * unit
    np.add.at(out, mesh.edge_head, -pull)
    np.add.at(out, mesh.edge_tail, pull)

    dp = q[mesh.pin_nodes] - _anchors_world(mesh, base_pose)
    np.add.at(out, mesh.pin_nodes, -mesh.pin_stiffness[:, None] * dp)

    if gravity_on:
        out[:, 2] -= mesh.node_masses * GRAVITY
    return out


def route_length_gradients(mesh: SoftBodyMesh, q: np.ndarray) -> np.ndarray:
    """d(route length)/dq for every route, shape (R, N, 3)."""
    seg = q[mesh.edge_head] - q[mesh.edge_tail]
    seg_len = np.linalg.norm(seg, axis=1)
    unit = seg / np.maximum(seg_len, 1e-30)[:, None]
    out = np.zeros((len(mesh.routes),) + q.shape)
    np.add.at(out, (mesh.edge_route, mesh.edge_head), unit)
    np.add.at(out, (mesh.edge_route, mesh.edge_tail), -unit)
    return out


def hessian(mesh: SoftBodyMesh, q: np.ndarray, l, base_pose=None) -> np.ndarray:
    """Exact d2E/dq2 as a dense (3N, 3N) matrix; gravity contributes nothing."""
    lengths = as_lengths(l)
    n = mesh.num_nodes
    h = np.zeros((3 * n, 3 * n))

    f = deformation_gradients(mesh, q)
    _, cof, j, coef = _elastic_stress(mesh, f)
    mat = mesh.material
    eye = np.eye(3)
    i4 = np.einsum('pr,qs->pqrs', eye, eye)
    # dP/dF = mu I + kappa vec(cof) vec(cof)^T + (kappa(J-1) - mu) dcof/dF
    a = (mat.mu * i4[None]
         + mat.kappa * np.einsum('tpq,trs->tpqrs', cof, cof)
         + coef[:, None, None, None, None]
         * np.einsum('prb,qsd,tbd->tpqrs', _EPS3, _EPS3, f, optimize=True))
    d = np.empty((len(mesh.tets), 4, 3))
    d[:, 1:, :] = mesh.inv_rest_mats
    d[:, 0, :] = -mesh.inv_rest_mats.sum(axis=1)
    k_tet = np.einsum('t,tpqrs,taq,tbs->tapbr', mesh.tet_volumes, a, d, d,
                      optimize=True)
    idx = (3 * mesh.tets[:, :, None] + np.arange(3)).reshape(-1, 12)
    np.add.at(h, (idx[:, :, None], idx[:, None, :]), k_tet.reshape(-1, 12, 12))

    route_len, ext = _group_extensions(mesh, q, lengths)
    k_t = mesh.tendon_stiffness
    grads = None
    for r, route in enumerate(mesh.routes):
        if ext[r] <= 0.0:
            continue
        if grads is None:
            grads = route_length_gradients(mesh, q)
        gl = grads[r].ravel()
        nz = np.flatnonzero(gl)
        h[np.ix_(nz, nz)] += k_t * np.outer(gl[nz], gl[nz])
        # curvature of the polyline length, edge by edge
        tension = k_t * ext[r]
        for a_i, b_i in zip(route[:-1], route[1:]):
            seg = q[b_i] - q[a_i]
            ln = float(np.linalg.norm(seg))
            if ln < 1e-9:
                continue  # collapsed edge: curvature undefined, skip block
            u = seg / ln
            blk = tension * (eye - np.outer(u, u)) / ln
            sa, sb = slice(3 * a_i, 3 * a_i + 3), slice(3 * b_i, 3 * b_i + 3)
            h[sa, sa] += blk
            h[sb, sb] += blk
            h[sa, sb] -= blk
            h[sb, sa] -= blk

    for node, k in zip(mesh.pin_nodes, mesh.pin_stiffness):
        for c in range(3):
            h[3 * node + c, 3 * node + c] += k
    return h


def length_coupling(mesh: SoftBodyMesh, q: np.ndarray, l) -> np.ndarray:
    """Mixed second derivative d2E/dq dl, shape (3N, 4).

    Only the tendon term couples q and l: column g is
    -k_t * sum of active routes' length gradients in group g.
    Slack routes contribute nothing, so fully slack groups give zero columns.
    """
    lengths = as_lengths(l)
    _, ext = _group_extensions(mesh, q, lengths)
    grads = route_length_gradients(mesh, q)
    out = np.zeros((3 * mesh.num_nodes, mesh.num_groups))
    for r in range(len(mesh.routes)):
        if ext[r] > 0.0:
            out[:, mesh.route_groups[r]] -= (
                mesh.tendon_stiffness * grads[r].ravel())
    return out
