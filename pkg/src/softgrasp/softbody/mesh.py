"""Tetrahedral gripper mesh: four tendon-driven soft fingers on a rigid base.

The default gripper has four 0.2 m fingers attached to the corners of a
0.14 m square base, angled 45 degrees downward, with thinned joint slabs
at the 3.5:2.5:1.5:1 segment boundaries so the fingers bend there. Each
finger carries two tendon routes per side (palmar and dorsal); routes on
the same side of the two fingers that point the same way share one rest
length, giving 16 tendons but only 4 unique length groups.

Node masses are lumped: each tet spreads rho*V/4 onto its corners.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from softgrasp.errors import MeshError

FINGER_LENGTH = 0.2
BASE_WIDTH = 0.14
FINGER_ANGLE = np.pi / 4
THICKNESS = 0.02   # palmar-dorsal extent, the bending direction
WIDTH = 0.025      # lateral extent
SEGMENT_RATIO = (3.5, 2.5, 1.5, 1.0)
JOINT_LENGTH = 0.012
JOINT_THINNING = 0.45
TIP_CAP = 0.005


@dataclass
class MaterialParams:
    """Material constants; defaults are the silicone values used throughout.

    youngs/poisson and the Lame pair are stored independently: use
    from_youngs_poisson when you want the pair derived from (E, nu).
    """
    youngs: float = 1e6
    poisson: float = 0.25
    mu: float = 400000.0
    kappa: float = 333333.0
    density: float = 1000.0

    def __post_init__(self):
        if not 0.0 < self.poisson < 0.5:
            raise MeshError(f"poisson ratio must be in (0, 0.5): {self.poisson}")
        if min(self.youngs, self.mu, self.kappa, self.density) <= 0:
            raise MeshError("material constants must be positive")

    @classmethod
    def from_youngs_poisson(cls, youngs: float, poisson: float,
                            density: float = 1000.0) -> "MaterialParams":
        mu = youngs / (2.0 * (1.0 + poisson))
        kappa = poisson * youngs / ((1.0 + poisson) * (1.0 - 2.0 * poisson))
        return cls(youngs, poisson, mu, kappa, density)


@dataclass
class TendonLengths:
    lengths: np.ndarray = field(
        default_factory=lambda: np.array([0.190, 0.190, 0.208, 0.208]))
    lower: float = 0.10
    upper: float = 0.30

    def __post_init__(self):
        self.lengths = np.asarray(self.lengths, dtype=float)
        if self.lengths.shape != (4,):
            raise MeshError("tendon lengths must be a 4-vector")
        if np.any(self.lengths < self.lower) or np.any(self.lengths > self.upper):
            raise MeshError(
                f"lengths {self.lengths} outside [{self.lower}, {self.upper}]")

    def clipped(self, values) -> "TendonLengths":
        return TendonLengths(np.clip(values, self.lower, self.upper),
                             self.lower, self.upper)


class SoftBodyMesh:
    """Immutable tet mesh with tendon routes, pins, and lumped masses."""

    def __init__(self, rest_positions, tets, routes, route_groups,
                 pin_nodes, pin_anchors, pin_stiffness, fingertips,
                 material: MaterialParams, tendon_stiffness: float = 1e4):
        self.rest_positions = np.asarray(rest_positions, dtype=float)
        self.tets = np.asarray(tets, dtype=np.int64)
        self.routes = [np.asarray(r, dtype=np.int64) for r in routes]
        self.route_groups = np.asarray(route_groups, dtype=np.int64)
        self.pin_nodes = np.asarray(pin_nodes, dtype=np.int64)
        self.pin_anchors = np.asarray(pin_anchors, dtype=float)
        self.pin_stiffness = np.asarray(pin_stiffness, dtype=float)
        self.fingertips = np.asarray(fingertips, dtype=np.int64)
        self.material = material
        self.tendon_stiffness = float(tendon_stiffness)
        self._finalize()

    def _finalize(self):
        n = len(self.rest_positions)
        if self.tets.min() < 0 or self.tets.max() >= n:
            raise MeshError("tet index out of range")
        d = (self.rest_positions[self.tets[:, 1:]]
             - self.rest_positions[self.tets[:, :1]]).transpose(0, 2, 1)
        vols = np.linalg.det(d) / 6.0
        if np.any(vols <= 0):
            raise MeshError(f"{int((vols <= 0).sum())} non-positive tet volumes")
        self.tet_volumes = vols
        self.inv_rest_mats = np.linalg.inv(d)

        masses = np.zeros(n)
        np.add.at(masses, self.tets.ravel(),
                  np.repeat(self.material.density * vols / 4.0, 4))
        self.node_masses = masses

        for r in self.routes:
            if len(r) < 2:
                raise MeshError("tendon route needs at least 2 nodes")
        if len(self.routes) != len(self.route_groups):
            raise MeshError("route/group count mismatch")
        if self.pin_nodes.size and (self.pin_nodes.min() < 0
                                    or self.pin_nodes.max() >= n):
            raise MeshError("pin node out of range")

        # flattened edge arrays for vectorized tendon terms
        e0, e1, er = [], [], []
        for i, r in enumerate(self.routes):
            e0.extend(r[:-1])
            e1.extend(r[1:])
            er.extend([i] * (len(r) - 1))
        self.edge_tail = np.asarray(e0, dtype=np.int64)
        self.edge_head = np.asarray(e1, dtype=np.int64)
        self.edge_route = np.asarray(er, dtype=np.int64)
        self.num_groups = int(self.route_groups.max()) + 1 if self.routes else 0

    @property
    def num_nodes(self) -> int:
        return len(self.rest_positions)

    def total_mass(self) -> float:
        return float(self.node_masses.sum())

    def route_lengths(self, q: np.ndarray) -> np.ndarray:
        """Polyline length of every route at configuration q."""
        seg = q[self.edge_head] - q[self.edge_tail]
        return np.bincount(self.edge_route,
                           weights=np.linalg.norm(seg, axis=1),
                           minlength=len(self.routes))

    def rest_group_lengths(self) -> np.ndarray:
        """Per-group route length in the rest configuration."""
        lens = self.route_lengths(self.rest_positions)
        out = np.zeros(self.num_groups)
        for g in range(self.num_groups):
            out[g] = lens[self.route_groups == g].max()
        return out


def _finger_template(resolution: int):
    """One finger meshed along +x at 45 degrees down, root at the origin.

    Local frame: zeta along the finger axis, eta lateral (world y),
    xi the palmar normal (inward-down). Returns node coords plus the
    bookkeeping needed for routes/pins/tip in template index space.
    """
    res = int(resolution)
    c, s = np.cos(FINGER_ANGLE), np.sin(FINGER_ANGLE)
    axis = np.array([c, 0.0, -s])
    xi = np.array([-s, 0.0, -c])  # palmar side faces in and down
    eta = np.array([0.0, 1.0, 0.0])

    unit = FINGER_LENGTH / sum(SEGMENT_RATIO)
    joints = np.cumsum(SEGMENT_RATIO)[:3] * unit
    body_len = FINGER_LENGTH - TIP_CAP

    # each joint is a pair of short slabs tapering to a thin center slice,
    # so phalanx slabs keep full thickness at their boundary slices
    stations = [(0.0, 1.0)]
    for j in joints:
        stations.extend([(j - JOINT_LENGTH / 2, 1.0), (j, JOINT_THINNING),
                         (j + JOINT_LENGTH / 2, 1.0)])
    stations.append((body_len, 1.0))
    if not all(b[0] > a[0] for a, b in zip(stations, stations[1:])):
        raise MeshError("joint slabs overlap; geometry constants inconsistent")

    # subdivide the phalanx slabs lengthwise by the resolution factor
    arcs, thins = [], []
    for (a0, t0), (a1, t1) in zip(stations, stations[1:]):
        sub = 1 if (t0 < 1.0 or t1 < 1.0) else res
        for k in range(sub):
            f = k / sub
            arcs.append(a0 + f * (a1 - a0))
            thins.append(t0 + f * (t1 - t0))
    arcs.append(stations[-1][0])
    thins.append(stations[-1][1])

    nxs = res + 1  # nodes per cross-section edge
    half_xi, half_eta = THICKNESS / 2, WIDTH / 2
    nodes = []
    for a, th in zip(arcs, thins):
        for iu in range(nxs):
            for iv in range(nxs):
                u = -1.0 + 2.0 * iu / res if res else 0.0
                v = -1.0 + 2.0 * iv / res if res else 0.0
                nodes.append(a * axis + (u * half_xi * th) * xi
                             + (v * half_eta) * eta)

    def nid(sl, iu, iv):
        return sl * nxs * nxs + iu * nxs + iv

    tets = []
    # Kuhn 6-tet split of each hex cell; consistent orientation keeps the
    # shared quad diagonals conforming between stacked slabs
    corner_order = [(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1),
                    (1, 1, 0), (1, 0, 1), (0, 1, 1), (1, 1, 1)]
    perms = [(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]
    for sl in range(len(arcs) - 1):
        for iu in range(res):
            for iv in range(res):
                def corner(dx, dy, dz):
                    return nid(sl + dz, iu + dx, iv + dy)
                for p in perms:
                    path = [(0, 0, 0)]
                    cur = [0, 0, 0]
                    for axis_i in p:
                        cur[axis_i] += 1
                        path.append(tuple(cur))
                    tets.append([corner(*pt) for pt in path])

    apex = len(nodes)
    nodes.append(FINGER_LENGTH * axis)
    top = len(arcs) - 1
    for iu in range(res):
        for iv in range(res):
            q00 = nid(top, iu, iv)
            q10 = nid(top, iu + 1, iv)
            q01 = nid(top, iu, iv + 1)
            q11 = nid(top, iu + 1, iv + 1)
            tets.append([q00, q10, q11, apex])
            tets.append([q00, q11, q01, apex])

    nodes = np.asarray(nodes)
    tets = np.asarray(tets, dtype=np.int64)
    # orient all tets positive in the template frame
    d = (nodes[tets[:, 1:]] - nodes[tets[:, :1]]).transpose(0, 2, 1)
    flip = np.linalg.det(d) < 0
    tets[flip] = tets[flip][:, [0, 1, 3, 2]]

    n_slices = len(arcs)
    palmar = [[nid(sl, res, 0) for sl in range(n_slices)],
              [nid(sl, res, res) for sl in range(n_slices)]]
    dorsal = [[nid(sl, 0, 0) for sl in range(n_slices)],
              [nid(sl, 0, res) for sl in range(n_slices)]]
    root = [nid(0, iu, iv) for iu in range(nxs) for iv in range(nxs)]
    return nodes, tets, palmar, dorsal, root, apex


def build_default_gripper(resolution: int = 1,
                          material: MaterialParams | None = None,
                          tendon_stiffness: float = 1e4,
                          pin_stiffness: float = 1e5) -> SoftBodyMesh:
    """Four-finger tendon-driven gripper in the base frame (base at z = 0).

    Fingers sit at the base corners; the two +x fingers point the same way
    and share tendon groups, likewise the two -x fingers. Groups are
    ordered [palmar +x pair, palmar -x pair, dorsal +x pair, dorsal -x pair].
    """
    if resolution < 1:
        raise MeshError(f"resolution must be >= 1, got {resolution}")
    if material is None:
        material = MaterialParams()

    tnodes, ttets, palmar, dorsal, root, apex = _finger_template(resolution)
    half = BASE_WIDTH / 2
    # (corner, mirror_x, mirror_y); mirrored fingers keep pair symmetry
    placements = [
        (np.array([half, half, 0.0]), 1.0, 1.0),
        (np.array([half, -half, 0.0]), 1.0, -1.0),
        (np.array([-half, half, 0.0]), -1.0, 1.0),
        (np.array([-half, -half, 0.0]), -1.0, -1.0),
    ]

    all_nodes, all_tets = [], []
    routes, groups = [], []
    pin_nodes, pin_anchors = [], []
    fingertips = [0, 0, 0, 0]
    offset = 0
    for fi, (corner, sx, sy) in enumerate(placements):
        nodes = tnodes * np.array([sx, sy, 1.0]) + corner
        tets = ttets + offset
        if sx * sy < 0:  # odd mirror flips orientation
            tets = tets[:, [0, 1, 3, 2]]
        all_nodes.append(nodes)
        all_tets.append(tets)

        pair = 0 if sx > 0 else 1  # +x pair shares groups 0/2, -x pair 1/3
        for r in palmar:
            routes.append(np.asarray(r) + offset)
            groups.append(pair)
        for r in dorsal:
            routes.append(np.asarray(r) + offset)
            groups.append(2 + pair)

        for node in root:
            pin_nodes.append(node + offset)
            pin_anchors.append(nodes[node])

        # tip cyclic order (+,+), (-,+), (-,-), (+,-) around the base center
        cyclic = {(1.0, 1.0): 0, (-1.0, 1.0): 1, (-1.0, -1.0): 2,
                  (1.0, -1.0): 3}
        fingertips[cyclic[(sx, sy)]] = apex + offset
        offset += len(nodes)

    return SoftBodyMesh(
        rest_positions=np.vstack(all_nodes),
        tets=np.vstack(all_tets),
        routes=routes,
        route_groups=groups,
        pin_nodes=pin_nodes,
        pin_anchors=pin_anchors,
        pin_stiffness=np.full(len(pin_nodes), float(pin_stiffness)),
        fingertips=fingertips,
        material=material,
        tendon_stiffness=tendon_stiffness,
    )


MESH_FORMAT_VERSION = 1


def _fmt(x) -> str:
    """Shortest decimal that round-trips the float64 exactly."""
    return repr(float(x))


def save_mesh(mesh: SoftBodyMesh, path: str) -> None:
    buf = io.StringIO()
    buf.write(f"softmesh {MESH_FORMAT_VERSION}\n")
    m = mesh.material
    buf.write("material " + " ".join(_fmt(x) for x in (
        m.youngs, m.poisson, m.mu, m.kappa, m.density)) + "\n")
    buf.write(f"tendon_stiffness {_fmt(mesh.tendon_stiffness)}\n")
    buf.write(f"nodes {mesh.num_nodes}\n")
    for p in mesh.rest_positions:
        buf.write(f"{_fmt(p[0])} {_fmt(p[1])} {_fmt(p[2])}\n")
    buf.write(f"tets {len(mesh.tets)}\n")
    for t in mesh.tets:
        buf.write(f"{t[0]} {t[1]} {t[2]} {t[3]}\n")
    buf.write(f"routes {len(mesh.routes)}\n")
    for r, g in zip(mesh.routes, mesh.route_groups):
        buf.write(f"{g}: " + " ".join(str(i) for i in r) + "\n")
    buf.write(f"pins {len(mesh.pin_nodes)}\n")
    for n, a, k in zip(mesh.pin_nodes, mesh.pin_anchors, mesh.pin_stiffness):
        buf.write(f"{n} {_fmt(a[0])} {_fmt(a[1])} {_fmt(a[2])} {_fmt(k)}\n")
    buf.write("fingertips " + " ".join(str(i) for i in mesh.fingertips) + "\n")
    with open(path, "w") as f:
        f.write(buf.getvalue())


def load_mesh(path: str) -> SoftBodyMesh:
    with open(path) as f:
        lines = [ln.rstrip("\n") for ln in f]
    it = iter(lines)

    def expect(tag):
        parts = next(it).split()
        if parts[0] != tag:
            raise MeshError(f"expected section '{tag}', got '{parts[0]}'")
        return parts[1:]

    version = int(expect("softmesh")[0])
    if version != MESH_FORMAT_VERSION:
        raise MeshError(f"unsupported mesh format version {version}")
    mvals = [float(x) for x in expect("material")]
    material = MaterialParams(*mvals)
    k_t = float(expect("tendon_stiffness")[0])
    n = int(expect("nodes")[0])
    nodes = np.array([[float(x) for x in next(it).split()] for _ in range(n)])
    t = int(expect("tets")[0])
    tets = np.array([[int(x) for x in next(it).split()] for _ in range(t)])
    r = int(expect("routes")[0])
    routes, groups = [], []
    for _ in range(r):
        head, rest = next(it).split(":")
        groups.append(int(head))
        routes.append([int(x) for x in rest.split()])
    p = int(expect("pins")[0])
    pin_nodes, pin_anchors, pin_k = [], [], []
    for _ in range(p):
        parts = next(it).split()
        pin_nodes.append(int(parts[0]))
        pin_anchors.append([float(x) for x in parts[1:4]])
        pin_k.append(float(parts[4]))
    tips = [int(x) for x in expect("fingertips")]
    return SoftBodyMesh(nodes, tets, routes, groups, pin_nodes, pin_anchors,
                        pin_k, tips, material, k_t)
