"""Explicit dynamics for the soft gripper, with an optional free rigid base.

Semi-implicit Euler on lumped node masses:

    v += dt * f(q, v) / m,   q += dt * v

Forces: elastic stress (same stable Neo-Hookean as the statics), Rayleigh
damping (mass-proportional term applied implicitly; stiffness-proportional
term folded into the stress as beta * dP/dt, evaluated matrix-free from
the velocity gradient), tendons, pins to the base, gravity, and one-sided
ground penalty contact. The contact normal spring and the velocity-decay
terms are integrated implicitly per node, which keeps the scheme stable
for the light fingertip nodes without shrinking dt.

The base is either held fixed or integrated as a rigid body driven by the
pin reactions, its own weight, and ground contact on its corners.

The same compiled kernel runs both the public single step and the long
landing rollouts, so there is exactly one integration code path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from softgrasp.errors import DivergenceError
from softgrasp.softbody import fem
from softgrasp.softbody.mesh import SoftBodyMesh

GRAVITY = 9.81

STATUS_RAN = 0
STATUS_REST = 1
STATUS_UNSTABLE = 2


@dataclass
class ContactParams:
    k_c: float = 1e5      # penalty stiffness [N/m]
    d_c: float = 30.0     # normal-rate damping [N*s/m]
    mu_t: float = 10.0    # tangential viscous coefficient [N*s/m]
    ground_z: float = 0.0


@dataclass
class DampingParams:
    """Rayleigh damping. The stiffness term is integrated explicitly, so it
    must satisfy beta < 2 / (omega_max^2 dt); the default keeps a ~3x margin
    for the stiffest modes of the default mesh (~1.2e4 rad/s, set by the
    thin joint slices) at dt = 1e-4."""
    alpha_mass: float = 5.0       # [1/s]
    beta_stiffness: float = 5e-5  # [s]


@dataclass
class FreeBase:
    """Rigid base coupled to the mesh through the pins; mutated by stepping."""
    position: np.ndarray
    rotation: np.ndarray
    velocity: np.ndarray
    omega: np.ndarray  # body frame
    mass: float = 1.7
    inertia_diag: np.ndarray = field(
        default_factory=lambda: np.array([0.08, 0.08, 0.14]))
    half_extents: np.ndarray = field(
        default_factory=lambda: np.array([0.07, 0.07, 0.015]))

    @classmethod
    def at_rest(cls, position=(0.0, 0.0, 0.0), **kw) -> "FreeBase":
        return cls(np.asarray(position, dtype=float), np.eye(3),
                   np.zeros(3), np.zeros(3), **kw)


@njit(cache=True, nogil=True)
def _advance(q, v, base_p, base_r, base_v, base_w,
             tets, inv_d, vols, masses,
             mu, kappa, alpha_m, beta_k,
             edge_tail, edge_head, edge_route, route_group, lengths, k_t,
             n_routes, pin_nodes, pin_anchors, pin_k,
             k_c, d_c, mu_t, ground_z,
             base_free, base_mass, base_inertia, base_half, gravity_on,
             dt, n_steps, ke_stop, hold_steps, ke_cap,
             f_trace, ke_trace, pen_trace):
    n = q.shape[0]
    f = np.zeros((n, 3))
    route_len = np.zeros(n_routes)
    route_tension = np.zeros(n_routes)
    status = STATUS_RAN
    steps_done = 0
    hold = 0

    for step in range(n_steps):
        for i in range(n):
            f[i, 0] = 0.0
            f[i, 1] = 0.0
            f[i, 2] = 0.0

        # elastic stress + matrix-free stiffness-proportional damping
        for t in range(tets.shape[0]):
            i0, i1, i2, i3 = tets[t, 0], tets[t, 1], tets[t, 2], tets[t, 3]
            b00, b01, b02 = inv_d[t, 0, 0], inv_d[t, 0, 1], inv_d[t, 0, 2]
            b10, b11, b12 = inv_d[t, 1, 0], inv_d[t, 1, 1], inv_d[t, 1, 2]
            b20, b21, b22 = inv_d[t, 2, 0], inv_d[t, 2, 1], inv_d[t, 2, 2]

            d0x = q[i1, 0] - q[i0, 0]
            d0y = q[i1, 1] - q[i0, 1]
            d0z = q[i1, 2] - q[i0, 2]
            d1x = q[i2, 0] - q[i0, 0]
            d1y = q[i2, 1] - q[i0, 1]
            d1z = q[i2, 2] - q[i0, 2]
            d2x = q[i3, 0] - q[i0, 0]
            d2y = q[i3, 1] - q[i0, 1]
            d2z = q[i3, 2] - q[i0, 2]

            # F columns
            f0x = d0x * b00 + d1x * b10 + d2x * b20
            f0y = d0y * b00 + d1y * b10 + d2y * b20
            f0z = d0z * b00 + d1z * b10 + d2z * b20
            f1x = d0x * b01 + d1x * b11 + d2x * b21
            f1y = d0y * b01 + d1y * b11 + d2y * b21
            f1z = d0z * b01 + d1z * b11 + d2z * b21
            f2x = d0x * b02 + d1x * b12 + d2x * b22
            f2y = d0y * b02 + d1y * b12 + d2y * b22
            f2z = d0z * b02 + d1z * b12 + d2z * b22

            # cofactor columns: c0 = f1 x f2, c1 = f2 x f0, c2 = f0 x f1
            c0x = f1y * f2z - f1z * f2y
            c0y = f1z * f2x - f1x * f2z
            c0z = f1x * f2y - f1y * f2x
            c1x = f2y * f0z - f2z * f0y
            c1y = f2z * f0x - f2x * f0z
            c1z = f2x * f0y - f2y * f0x
            c2x = f0y * f1z - f0z * f1y
            c2y = f0z * f1x - f0x * f1z
            c2z = f0x * f1y - f0y * f1x

            jdet = f0x * c0x + f0y * c0y + f0z * c0z
            coef = kappa * (jdet - 1.0) - mu

            # velocity gradient dF = Dv B
            e0x = v[i1, 0] - v[i0, 0]
            e0y = v[i1, 1] - v[i0, 1]
            e0z = v[i1, 2] - v[i0, 2]
            e1x = v[i2, 0] - v[i0, 0]
            e1y = v[i2, 1] - v[i0, 1]
            e1z = v[i2, 2] - v[i0, 2]
            e2x = v[i3, 0] - v[i0, 0]
            e2y = v[i3, 1] - v[i0, 1]
            e2z = v[i3, 2] - v[i0, 2]

            g0x = e0x * b00 + e1x * b10 + e2x * b20
            g0y = e0y * b00 + e1y * b10 + e2y * b20
            g0z = e0z * b00 + e1z * b10 + e2z * b20
            g1x = e0x * b01 + e1x * b11 + e2x * b21
            g1y = e0y * b01 + e1y * b11 + e2y * b21
            g1z = e0z * b01 + e1z * b11 + e2z * b21
            g2x = e0x * b02 + e1x * b12 + e2x * b22
            g2y = e0y * b02 + e1y * b12 + e2y * b22
            g2z = e0z * b02 + e1z * b12 + e2z * b22

            djdt = (c0x * g0x + c0y * g0y + c0z * g0z
                    + c1x * g1x + c1y * g1y + c1z * g1z
                    + c2x * g2x + c2y * g2y + c2z * g2z)

            # d(cof)/dt columns: dc0 = g1 x f2 + f1 x g2, cyclic
            dc0x = (g1y * f2z - g1z * f2y) + (f1y * g2z - f1z * g2y)
            dc0y = (g1z * f2x - g1x * f2z) + (f1z * g2x - f1x * g2z)
            dc0z = (g1x * f2y - g1y * f2x) + (f1x * g2y - f1y * g2x)
            dc1x = (g2y * f0z - g2z * f0y) + (f2y * g0z - f2z * g0y)
            dc1y = (g2z * f0x - g2x * f0z) + (f2z * g0x - f2x * g0z)
            dc1z = (g2x * f0y - g2y * f0x) + (f2x * g0y - f2y * g0x)
            dc2x = (g0y * f1z - g0z * f1y) + (f0y * g1z - f0z * g1y)
            dc2y = (g0z * f1x - g0x * f1z) + (f0z * g1x - f0x * g1z)
            dc2z = (g0x * f1y - g0y * f1x) + (f0x * g1y - f0y * g1x)

            # P + beta * dP/dt, column by column
            p0x = mu * f0x + coef * c0x + beta_k * (
                mu * g0x + kappa * djdt * c0x + coef * dc0x)
            p0y = mu * f0y + coef * c0y + beta_k * (
                mu * g0y + kappa * djdt * c0y + coef * dc0y)
            p0z = mu * f0z + coef * c0z + beta_k * (
                mu * g0z + kappa * djdt * c0z + coef * dc0z)
            p1x = mu * f1x + coef * c1x + beta_k * (
                mu * g1x + kappa * djdt * c1x + coef * dc1x)
            p1y = mu * f1y + coef * c1y + beta_k * (
                mu * g1y + kappa * djdt * c1y + coef * dc1y)
            p1z = mu * f1z + coef * c1z + beta_k * (
                mu * g1z + kappa * djdt * c1z + coef * dc1z)
            p2x = mu * f2x + coef * c2x + beta_k * (
                mu * g2x + kappa * djdt * c2x + coef * dc2x)
            p2y = mu * f2y + coef * c2y + beta_k * (
                mu * g2y + kappa * djdt * c2y + coef * dc2y)
            p2z = mu * f2z + coef * c2z + beta_k * (
                mu * g2z + kappa * djdt * c2z + coef * dc2z)

            vol = vols[t]
            # G = vol * P B^T; column k goes to node k+1, minus-sum to node 0
            h0x = vol * (p0x * b00 + p1x * b01 + p2x * b02)
            h0y = vol * (p0y * b00 + p1y * b01 + p2y * b02)
            h0z = vol * (p0z * b00 + p1z * b01 + p2z * b02)
            h1x = vol * (p0x * b10 + p1x * b11 + p2x * b12)
            h1y = vol * (p0y * b10 + p1y * b11 + p2y * b12)
            h1z = vol * (p0z * b10 + p1z * b11 + p2z * b12)
            h2x = vol * (p0x * b20 + p1x * b21 + p2x * b22)
            h2y = vol * (p0y * b20 + p1y * b21 + p2y * b22)
            h2z = vol * (p0z * b20 + p1z * b21 + p2z * b22)

            f[i1, 0] -= h0x
            f[i1, 1] -= h0y
            f[i1, 2] -= h0z
            f[i2, 0] -= h1x
            f[i2, 1] -= h1y
            f[i2, 2] -= h1z
            f[i3, 0] -= h2x
            f[i3, 1] -= h2y
            f[i3, 2] -= h2z
            f[i0, 0] += h0x + h1x + h2x
            f[i0, 1] += h0y + h1y + h2y
            f[i0, 2] += h0z + h1z + h2z

        # tendons: route lengths, then one-sided tensions along edges
        for r in range(n_routes):
            route_len[r] = 0.0
        for e in range(edge_tail.shape[0]):
            a, b = edge_tail[e], edge_head[e]
            sx = q[b, 0] - q[a, 0]
            sy = q[b, 1] - q[a, 1]
            sz = q[b, 2] - q[a, 2]
            route_len[edge_route[e]] += np.sqrt(sx * sx + sy * sy + sz * sz)
        for r in range(n_routes):
            ext = route_len[r] - lengths[route_group[r]]
            route_tension[r] = k_t * ext if ext > 0.0 else 0.0
        for e in range(edge_tail.shape[0]):
            tension = route_tension[edge_route[e]]
            if tension == 0.0:
                continue
            a, b = edge_tail[e], edge_head[e]
            sx = q[b, 0] - q[a, 0]
            sy = q[b, 1] - q[a, 1]
            sz = q[b, 2] - q[a, 2]
            ln = np.sqrt(sx * sx + sy * sy + sz * sz)
            if ln < 1e-30:
                continue
            s = tension / ln
            f[b, 0] -= s * sx
            f[b, 1] -= s * sy
            f[b, 2] -= s * sz
            f[a, 0] += s * sx
            f[a, 1] += s * sy
            f[a, 2] += s * sz

        # pins; accumulate the reaction wrench on the base
        pfx = pfy = pfz = 0.0
        ptx = pty = ptz = 0.0
        for p in range(pin_nodes.shape[0]):
            node = pin_nodes[p]
            ax = (base_r[0, 0] * pin_anchors[p, 0]
                  + base_r[0, 1] * pin_anchors[p, 1]
                  + base_r[0, 2] * pin_anchors[p, 2] + base_p[0])
            ay = (base_r[1, 0] * pin_anchors[p, 0]
                  + base_r[1, 1] * pin_anchors[p, 1]
                  + base_r[1, 2] * pin_anchors[p, 2] + base_p[1])
            az = (base_r[2, 0] * pin_anchors[p, 0]
                  + base_r[2, 1] * pin_anchors[p, 1]
                  + base_r[2, 2] * pin_anchors[p, 2] + base_p[2])
            dx = q[node, 0] - ax
            dy = q[node, 1] - ay
            dz = q[node, 2] - az
            k = pin_k[p]
            f[node, 0] -= k * dx
            f[node, 1] -= k * dy
            f[node, 2] -= k * dz
            # equal and opposite on the base, applied at the anchor
            rx, ry, rz = ax - base_p[0], ay - base_p[1], az - base_p[2]
            bx, by, bz = k * dx, k * dy, k * dz
            pfx += bx
            pfy += by
            pfz += bz
            ptx += ry * bz - rz * by
            pty += rz * bx - rx * bz
            ptz += rx * by - ry * bx

        f_trace[step] = np.sqrt(pfx * pfx + pfy * pfy + pfz * pfz)

        # integrate nodes: gravity, implicit decay terms, implicit contact
        ke = 0.0
        max_pen = 0.0
        decay = 1.0 / (1.0 + alpha_m * dt)
        for i in range(n):
            m = masses[i]
            fz = f[i, 2] - m * GRAVITY if gravity_on else f[i, 2]
            vx = (v[i, 0] + dt * f[i, 0] / m) * decay
            vy = (v[i, 1] + dt * f[i, 1] / m) * decay
            vz = (v[i, 2] + dt * fz / m) * decay
            pen = ground_z - q[i, 2]
            if pen > 0.0:
                if pen > max_pen:
                    max_pen = pen
                vx /= 1.0 + dt * mu_t / m
                vy /= 1.0 + dt * mu_t / m
                vz_new = (vz + dt * k_c * pen / m) / (
                    1.0 + dt * (d_c + dt * k_c) / m)
                fn = k_c * (pen - dt * vz_new) - d_c * vz_new
                if fn > 0.0:
                    vz = vz_new
            v[i, 0] = vx
            v[i, 1] = vy
            v[i, 2] = vz
            q[i, 0] += dt * vx
            q[i, 1] += dt * vy
            q[i, 2] += dt * vz
            ke += 0.5 * m * (vx * vx + vy * vy + vz * vz)

        if base_free:
            bfx, bfy, bfz = pfx, pfy, pfz
            btx, bty, btz = ptx, pty, ptz
            if gravity_on:
                bfz -= base_mass * GRAVITY
            # corner contacts of the rigid base box
            for sx_i in range(-1, 2, 2):
                for sy_i in range(-1, 2, 2):
                    for sz_i in range(-1, 2, 2):
                        lx = sx_i * base_half[0]
                        ly = sy_i * base_half[1]
                        lz = sz_i * base_half[2]
                        cx = (base_r[0, 0] * lx + base_r[0, 1] * ly
                              + base_r[0, 2] * lz + base_p[0])
                        cy = (base_r[1, 0] * lx + base_r[1, 1] * ly
                              + base_r[1, 2] * lz + base_p[1])
                        cz = (base_r[2, 0] * lx + base_r[2, 1] * ly
                              + base_r[2, 2] * lz + base_p[2])
                        pen = ground_z - cz
                        if pen <= 0.0:
                            continue
                        # world angular velocity and corner velocity
                        wx = (base_r[0, 0] * base_w[0]
                              + base_r[0, 1] * base_w[1]
                              + base_r[0, 2] * base_w[2])
                        wy = (base_r[1, 0] * base_w[0]
                              + base_r[1, 1] * base_w[1]
                              + base_r[1, 2] * base_w[2])
                        wz = (base_r[2, 0] * base_w[0]
                              + base_r[2, 1] * base_w[1]
                              + base_r[2, 2] * base_w[2])
                        rx, ry, rz = cx - base_p[0], cy - base_p[1], cz - base_p[2]
                        vcx = base_v[0] + wy * rz - wz * ry
                        vcy = base_v[1] + wz * rx - wx * rz
                        vcz = base_v[2] + wx * ry - wy * rx
                        fn = k_c * pen - d_c * vcz
                        if fn < 0.0:
                            fn = 0.0
                        gx = -mu_t * vcx
                        gy = -mu_t * vcy
                        bfx += gx
                        bfy += gy
                        bfz += fn
                        btx += ry * fn - rz * gy
                        bty += rz * gx - rx * fn
                        btz += rx * gy - ry * gx

            base_v[0] += dt * bfx / base_mass
            base_v[1] += dt * bfy / base_mass
            base_v[2] += dt * bfz / base_mass
            # torque to body frame, Euler equations with diagonal inertia
            tbx = (base_r[0, 0] * btx + base_r[1, 0] * bty
                   + base_r[2, 0] * btz)
            tby = (base_r[0, 1] * btx + base_r[1, 1] * bty
                   + base_r[2, 1] * btz)
            tbz = (base_r[0, 2] * btx + base_r[1, 2] * bty
                   + base_r[2, 2] * btz)
            jx, jy, jz = base_inertia[0], base_inertia[1], base_inertia[2]
            ox, oy, oz = base_w[0], base_w[1], base_w[2]
            base_w[0] = ox + dt * (tbx - (oy * jz * oz - oz * jy * oy)) / jx
            base_w[1] = oy + dt * (tby - (oz * jx * ox - ox * jz * oz)) / jy
            base_w[2] = oz + dt * (tbz - (ox * jy * oy - oy * jx * ox)) / jz
            base_p[0] += dt * base_v[0]
            base_p[1] += dt * base_v[1]
            base_p[2] += dt * base_v[2]

            # rotation update: R <- R exp(dt * w), then one orthonormal step
            wxs, wys, wzs = dt * base_w[0], dt * base_w[1], dt * base_w[2]
            th = np.sqrt(wxs * wxs + wys * wys + wzs * wzs)
            if th < 1e-8:
                a_c = 1.0 - th * th / 6.0
                b_c = 0.5 - th * th / 24.0
            else:
                a_c = np.sin(th) / th
                b_c = (1.0 - np.cos(th)) / (th * th)
            expm = np.empty((3, 3))
            kx, ky, kz = wxs, wys, wzs
            expm[0, 0] = 1.0 + b_c * (-kz * kz - ky * ky)
            expm[0, 1] = -a_c * kz + b_c * kx * ky
            expm[0, 2] = a_c * ky + b_c * kx * kz
            expm[1, 0] = a_c * kz + b_c * kx * ky
            expm[1, 1] = 1.0 + b_c * (-kx * kx - kz * kz)
            expm[1, 2] = -a_c * kx + b_c * ky * kz
            expm[2, 0] = -a_c * ky + b_c * kx * kz
            expm[2, 1] = a_c * kx + b_c * ky * kz
            expm[2, 2] = 1.0 + b_c * (-kx * kx - ky * ky)
            rn = base_r @ expm
            rtr = rn.T @ rn
            corr = 1.5 * np.eye(3) - 0.5 * rtr
            base_r[:, :] = rn @ corr

            ke += 0.5 * base_mass * (base_v[0] ** 2 + base_v[1] ** 2
                                     + base_v[2] ** 2)
            ke += 0.5 * (jx * base_w[0] ** 2 + jy * base_w[1] ** 2
                         + jz * base_w[2] ** 2)

        ke_trace[step] = ke
        pen_trace[step] = max_pen
        steps_done = step + 1
        if not np.isfinite(ke) or ke > ke_cap:
            status = STATUS_UNSTABLE
            break
        if ke_stop > 0.0:
            if ke < ke_stop:
                hold += 1
                if hold >= hold_steps:
                    status = STATUS_REST
                    break
            else:
                hold = 0
    return steps_done, status


def _kernel_args(mesh: SoftBodyMesh, l, contact: ContactParams,
                 damping: DampingParams):
    lengths = fem.as_lengths(l)
    mat = mesh.material
    return dict(
        tets=mesh.tets, inv_d=mesh.inv_rest_mats, vols=mesh.tet_volumes,
        masses=mesh.node_masses, mu=mat.mu, kappa=mat.kappa,
        alpha_m=damping.alpha_mass, beta_k=damping.beta_stiffness,
        edge_tail=mesh.edge_tail, edge_head=mesh.edge_head,
        edge_route=mesh.edge_route, route_group=mesh.route_groups,
        lengths=lengths, k_t=mesh.tendon_stiffness,
        n_routes=len(mesh.routes), pin_nodes=mesh.pin_nodes,
        pin_anchors=mesh.pin_anchors, pin_k=mesh.pin_stiffness,
        k_c=contact.k_c, d_c=contact.d_c, mu_t=contact.mu_t,
        ground_z=contact.ground_z,
    )


def _base_state(base):
    if base is None:
        return (False, np.zeros(3), np.eye(3), np.zeros(3), np.zeros(3),
                1.0, np.ones(3), np.ones(3))
    if isinstance(base, FreeBase):
        return (True, base.position, base.rotation, base.velocity,
                base.omega, base.mass, base.inertia_diag, base.half_extents)
    rot, pos = base  # fixed pose
    return (False, np.asarray(pos, dtype=float), np.asarray(rot, dtype=float),
            np.zeros(3), np.zeros(3), 1.0, np.ones(3), np.ones(3))


def mechanical_energy(mesh: SoftBodyMesh, q, v, l, base=None,
                      gravity_on: bool = True) -> float:
    """Potential + kinetic energy of the mesh (base KE included if free)."""
    free, base_p, base_r, base_v, base_w, bm, bj, _ = _base_state(base)
    pot = fem.total_energy(mesh, q, l, (base_r, base_p), gravity_on)
    ke = 0.5 * float(mesh.node_masses @ np.einsum('ij,ij->i', v, v))
    if free:
        ke += 0.5 * bm * float(base_v @ base_v)
        ke += 0.5 * float(base_w @ (bj * base_w))
        if gravity_on:
            pot += bm * GRAVITY * float(base_p[2])
    return pot + ke


def step_dynamic(mesh: SoftBodyMesh, q: np.ndarray, v: np.ndarray, l,
                 contact: ContactParams, base=None, dt: float = 1e-4,
                 damping: DampingParams | None = None,
                 gravity_on: bool = True,
                 check_stability: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """One integration step; returns new (q, v) without touching the inputs.

    base: None (anchors fixed at the origin pose), a (rotation, position)
    pair (fixed pose), or a FreeBase, which is advanced in place.
    Raises DivergenceError when total mechanical energy grows more than
    tenfold in the step.
    """
    if not 0.0 < dt <= 1e-3:
        raise ValueError(f"dt must be in (0, 1e-3], got {dt}")
    if damping is None:
        damping = DampingParams()
    q = np.array(q, dtype=float)
    v = np.array(v, dtype=float)
    free, base_p, base_r, base_v, base_w, bm, bj, bh = _base_state(base)

    e_before = (mechanical_energy(mesh, q, v, l, base, gravity_on)
                if check_stability else 0.0)

    f_trace = np.zeros(1)
    ke_trace = np.zeros(1)
    pen_trace = np.zeros(1)
    _, status = _advance(
        q, v, base_p, base_r, base_v, base_w,
        **_kernel_args(mesh, l, contact, damping),
        base_free=free, base_mass=bm, base_inertia=bj, base_half=bh,
        gravity_on=gravity_on, dt=dt, n_steps=1,
        ke_stop=0.0, hold_steps=0, ke_cap=np.inf,
        f_trace=f_trace, ke_trace=ke_trace, pen_trace=pen_trace)

    if check_stability:
        e_after = mechanical_energy(mesh, q, v, l, base, gravity_on)
        scale = max(abs(e_before), 1e-6)
        if not np.isfinite(e_after) or e_after - e_before > 10.0 * scale:
            raise DivergenceError(
                f"energy grew from {e_before:.3e} to {e_after:.3e} in one "
                f"step; reduce dt")
    if status == STATUS_UNSTABLE:
        raise DivergenceError("non-finite state in dynamic step; reduce dt")
    return q, v


def run_rollout(mesh: SoftBodyMesh, q, v, l, contact: ContactParams,
                base, dt: float, n_steps: int,
                damping: DampingParams | None = None,
                gravity_on: bool = True, ke_stop: float = 0.0,
                hold_time: float = 0.1, ke_cap: float = np.inf):
    """Advance many steps in one kernel call; mutates q, v, and the base.

    Returns (steps_done, status, f_trace, ke_trace, pen_trace) where the
    traces are truncated to steps_done and pen_trace holds the deepest node
    penetration of each step. status is STATUS_RAN, STATUS_REST (kinetic
    energy stayed under ke_stop for hold_time), or STATUS_UNSTABLE.
    """
    if damping is None:
        damping = DampingParams()
    free, base_p, base_r, base_v, base_w, bm, bj, bh = _base_state(base)
    f_trace = np.zeros(n_steps)
    ke_trace = np.zeros(n_steps)
    pen_trace = np.zeros(n_steps)
    steps_done, status = _advance(
        q, v, base_p, base_r, base_v, base_w,
        **_kernel_args(mesh, l, contact, damping),
        base_free=free, base_mass=bm, base_inertia=bj, base_half=bh,
        gravity_on=gravity_on, dt=dt, n_steps=n_steps,
        ke_stop=ke_stop, hold_steps=int(round(hold_time / dt)),
        ke_cap=ke_cap, f_trace=f_trace, ke_trace=ke_trace,
        pen_trace=pen_trace)
    return (steps_done, status, f_trace[:steps_done], ke_trace[:steps_done],
            pen_trace[:steps_done])
