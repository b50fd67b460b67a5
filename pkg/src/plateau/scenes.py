"""Test geometries and controlled perturbations.

Generators return validated :class:`MultiMaterialMesh` objects.  The
double bubble is built from two spherical caps meshed ring by ring plus a
flat interface disk; all three surfaces share the vertices of the
intersection circle, which form the triple junction.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import GenerationError, SheetNotFound
from .mmesh import MultiMaterialMesh, extract_junctions

# Interior spacing is the junction edge length divided by this factor.
# At 1.0 the mesh is near-isotropic with roughly 1.4 n^2 faces.
DEFAULT_FILL = 1.0


@dataclass
class DoubleBubbleSpec:
    subdivision: int = 16
    radius: float = 1.0
    center_distance: float | None = None
    fill: float = DEFAULT_FILL

    def __post_init__(self):
        if self.center_distance is None:
            self.center_distance = self.radius

    def validate(self):
        if self.subdivision < 8:
            raise GenerationError(f"subdivision must be >= 8, got {self.subdivision}")
        if self.radius <= 0:
            raise GenerationError("radius must be positive")
        if not 0 < self.center_distance < 2 * self.radius:
            raise GenerationError(
                f"center distance {self.center_distance} does not give intersecting spheres of radius {self.radius}")
        if self.fill <= 0:
            raise GenerationError("fill must be positive")

    def as_dict(self):
        return asdict(self)


def _zipper(ring_a, ang_a, ring_b, ang_b):
    """Triangulate the band between two closed vertex rings ordered by angle."""
    two_pi = 2.0 * math.pi
    base = ang_a[0]
    ra = (np.asarray(ang_a) - base) % two_pi
    rb = (np.asarray(ang_b) - base) % two_pi
    shift = int(np.argmin(rb))
    ring_b = np.roll(ring_b, -shift)
    rb = np.roll(rb, -shift)
    a, b = len(ring_a), len(ring_b)
    tris = []
    i = j = 0
    while i < a or j < b:
        na = ra[i + 1] if i + 1 < a else two_pi
        nb = rb[j + 1] if j + 1 < b else two_pi + rb[0]
        if j >= b or (i < a and na <= nb):
            tris.append((ring_a[i], ring_a[(i + 1) % a], ring_b[j % b]))
            i += 1
        else:
            tris.append((ring_a[i % a], ring_b[(j + 1) % b], ring_b[j]))
            j += 1
    return tris


def _fan(center, ring):
    n = len(ring)
    return [(center, ring[i], ring[(i + 1) % n]) for i in range(n)]


def _orient(tris, positions, direction_fn):
    """Flip triangles whose normal disagrees with ``direction_fn(centroid)``."""
    tris = np.asarray(tris, dtype=np.int64)
    p = positions
    n = np.cross(p[tris[:, 1]] - p[tris[:, 0]], p[tris[:, 2]] - p[tris[:, 0]])
    want = direction_fn(p[tris].mean(axis=1))
    flip = np.einsum("ij,ij->i", n, want) < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    return tris


def _ring_count(circumference, h, minimum=3):
    return max(minimum, int(round(circumference / h)))


def make_double_bubble(spec: DoubleBubbleSpec) -> MultiMaterialMesh:
    """Two equal spherical caps (regions 1 and 2) and their flat interface.

    Labels: left cap (1|0), right cap (2|0), disk (1|2).  The junction ring
    has exactly ``spec.subdivision`` vertices; the rest of the surface is
    meshed with spacing ``junction_edge / spec.fill``.
    """
    spec.validate()
    n, r, d = spec.subdivision, float(spec.radius), float(spec.center_distance)
    rho = math.sqrt(r * r - 0.25 * d * d)
    psi_j = math.acos(-d / (2.0 * r))
    h = 2.0 * math.pi * rho / n / spec.fill

    pts = []
    theta_j = 2.0 * math.pi * np.arange(n) / n
    junction = np.arange(n)
    pts.extend(np.column_stack([np.zeros(n), rho * np.cos(theta_j), rho * np.sin(theta_j)]))

    # left cap rings, from the junction toward the far pole
    m = max(2, int(round(r * psi_j / h)))
    cap_rings, cap_angles = [junction], [theta_j]
    for k in range(m - 1, 0, -1):
        psi = psi_j * k / m
        cnt = _ring_count(2.0 * math.pi * r * math.sin(psi), h)
        th = 2.0 * math.pi * (np.arange(cnt) + 0.5 * ((m - k) % 2)) / cnt
        idx = np.arange(len(pts), len(pts) + cnt)
        pts.extend(np.column_stack([
            np.full(cnt, -0.5 * d - r * math.cos(psi)),
            r * math.sin(psi) * np.cos(th),
            r * math.sin(psi) * np.sin(th),
        ]))
        cap_rings.append(idx)
        cap_angles.append(th)
    pole = len(pts)
    pts.append(np.array([-0.5 * d - r, 0.0, 0.0]))
    left_idx_end = len(pts)

    cap_tris = []
    for k in range(len(cap_rings) - 1):
        cap_tris += _zipper(cap_rings[k], cap_angles[k], cap_rings[k + 1], cap_angles[k + 1])
    cap_tris += _fan(pole, cap_rings[-1])

    # disk rings, from the junction inward
    q = max(1, int(round(rho / h)))
    disk_rings, disk_angles = [junction], [theta_j]
    for j in range(q - 1, 0, -1):
        rad = rho * j / q
        cnt = _ring_count(2.0 * math.pi * rad, h)
        th = 2.0 * math.pi * (np.arange(cnt) + 0.5 * ((q - j) % 2)) / cnt
        idx = np.arange(len(pts), len(pts) + cnt)
        pts.extend(np.column_stack([np.zeros(cnt), rad * np.cos(th), rad * np.sin(th)]))
        disk_rings.append(idx)
        disk_angles.append(th)
    center = len(pts)
    pts.append(np.zeros(3))
    disk_tris = []
    for k in range(len(disk_rings) - 1):
        disk_tris += _zipper(disk_rings[k], disk_angles[k], disk_rings[k + 1], disk_angles[k + 1])
    disk_tris += _fan(center, disk_rings[-1])

    # right cap mirrors the left one across x = 0
    left = np.arange(n, left_idx_end)
    right_start = len(pts)
    mirror_map = np.arange(left_idx_end)
    mirror_map[left] = right_start + np.arange(len(left))
    pts = np.asarray(pts)
    right_pts = pts[left] * np.array([-1.0, 1.0, 1.0])
    positions = np.vstack([pts, right_pts])

    c_left = np.array([-0.5 * d, 0.0, 0.0])
    c_right = -c_left
    left_tris = _orient(cap_tris, positions, lambda x: x - c_left)
    right_tris = _orient(mirror_map[np.asarray(cap_tris)], positions, lambda x: x - c_right)
    disk_tris = _orient(disk_tris, positions, lambda x: np.tile([1.0, 0.0, 0.0], (len(x), 1)))

    tris = np.vstack([left_tris, right_tris, disk_tris])
    labels = np.vstack([
        np.tile([1, 0], (len(left_tris), 1)),
        np.tile([2, 0], (len(right_tris), 1)),
        np.tile([1, 2], (len(disk_tris), 1)),
    ])
    return MultiMaterialMesh(positions, tris, labels, region_count=3)


def make_labeled_icosphere(radius: float = 1.0, subdivision: int = 3, center=(0.0, 0.0, 0.0)) -> MultiMaterialMesh:
    """Icosphere with outward triangles labeled (front=1, back=0)."""
    if not 0 <= subdivision <= 7:
        raise GenerationError(f"icosphere subdivision must be in [0, 7], got {subdivision}")
    t = (1.0 + math.sqrt(5.0)) / 2.0
    verts = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
             (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
             (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
             (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
             (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
             (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.array(v, dtype=float) / np.linalg.norm(v) for v in verts]
    for _ in range(subdivision):
        midpoint = {}

        def mid(a, b):
            key = (a, b) if a < b else (b, a)
            if key not in midpoint:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                midpoint[key] = len(verts) - 1
            return midpoint[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    positions = radius * np.asarray(verts) + np.asarray(center, dtype=float)
    tris = _orient(faces, positions, lambda x: x - np.asarray(center, dtype=float))
    labels = np.tile([1, 0], (len(tris), 1))
    return MultiMaterialMesh(positions, tris, labels, region_count=2)


def make_y_junction_strip(angles=(120.0, 120.0, 120.0), length: float = 1.0, resolution: int = 8,
                          width: float | None = None) -> MultiMaterialMesh:
    """Three planar sheets meeting along the z axis.

    ``angles[i]`` is the opening between sheet ``i`` and sheet ``i+1``.
    Sheets are labeled (1|2), (2|3), (3|1); the wedge after sheet 0 is
    region 2, after sheet 1 region 3, after sheet 2 region 1.  Every vertex
    on the outer rim of the strip is clamped.
    """
    angles = tuple(float(a) for a in angles)
    if len(angles) != 3 or abs(sum(angles) - 360.0) > 1e-9 or min(angles) <= 0:
        raise GenerationError(f"need three positive angles summing to 360, got {angles}")
    if resolution < 1:
        raise GenerationError("resolution must be >= 1")
    if width is None:
        width = 0.5 * length
    h = length / resolution
    rows = max(2, int(round(width / h)))
    nz = resolution + 1
    z = h * np.arange(nz)
    pts = [np.column_stack([np.zeros(nz), np.zeros(nz), z])]
    fixed = [np.isin(np.arange(nz), [0, nz - 1])]
    grid_start = []
    tris, labels = [], []
    sheet_labels = [(1, 2), (2, 3), (3, 1)]
    offset = nz
    azimuth = 0.0
    for sheet in range(3):
        a = math.radians(azimuth)
        t = np.array([math.cos(a), math.sin(a), 0.0])
        grid = np.empty((rows + 1, nz), dtype=np.int64)
        grid[0] = np.arange(nz)
        for k in range(1, rows + 1):
            grid[k] = offset + np.arange(nz)
            offset += nz
            row = np.outer(np.full(nz, k * h), t)
            row[:, 2] = z
            pts.append(row)
            fx = np.zeros(nz, dtype=bool)
            fx[[0, -1]] = True
            if k == rows:
                fx[:] = True
            fixed.append(fx)
        grid_start.append(grid)
        normal = np.array([-math.sin(a), math.cos(a), 0.0])
        sheet_tris = []
        for k in range(rows):
            for l in range(resolution):
                v00, v10, v01, v11 = grid[k, l], grid[k + 1, l], grid[k, l + 1], grid[k + 1, l + 1]
                sheet_tris += [(v00, v10, v11), (v00, v11, v01)]
        positions = np.vstack(pts)
        sheet_tris = _orient(sheet_tris, positions, lambda x, nn=normal: np.tile(nn, (len(x), 1)))
        tris.append(sheet_tris)
        labels.append(np.tile(sheet_labels[sheet], (len(sheet_tris), 1)))
        azimuth += angles[sheet]
    return MultiMaterialMesh(np.vstack(pts), np.vstack(tris), np.vstack(labels), region_count=4,
                             fixed=np.concatenate(fixed))


# -- perturbations ------------------------------------------------------------------


def _stretch_profile(s, d1, S, factor):
    """Piecewise-linear remap of distance-from-junction ``s``.

    Distances up to ``d1`` (the junction-adjacent row) scale by ``factor``;
    the map then returns linearly to the identity at ``w = (factor + 2) d1``
    (capped at the sheet extent ``S``), beyond which nothing moves.
    """
    s = np.asarray(s, dtype=float)
    if factor == 1.0:
        return s.copy()
    w = min((factor + 2.0) * d1, S)
    if not factor * d1 < w:
        raise ValueError(f"sheet too narrow to stretch its first row by {factor}")
    blend = factor * d1 + (s - d1) * (w - factor * d1) / (w - d1)
    return np.where(s <= d1, factor * s, np.where(s < w, blend, s))


def _fit_sphere(points):
    A = np.column_stack([2.0 * points, np.ones(len(points))])
    b = (points ** 2).sum(axis=1)
    sol, *_ = np.linalg.lstsq(A, b, rcond=None)
    center = sol[:3]
    return center, math.sqrt(sol[3] + center @ center)


def _fit_circle_2d(xy):
    A = np.column_stack([2.0 * xy, np.ones(len(xy))])
    b = (xy ** 2).sum(axis=1)
    sol, *_ = np.linalg.lstsq(A, b, rcond=None)
    return sol[:2]


def sheet_vertices(mesh: MultiMaterialMesh, pair):
    """Face indices and movable (non-junction) vertex indices of the (a|b) sheet."""
    a, b = pair
    lab = mesh.labels
    faces = np.flatnonzero(((lab[:, 0] == a) & (lab[:, 1] == b)) | ((lab[:, 0] == b) & (lab[:, 1] == a)))
    if len(faces) == 0:
        raise SheetNotFound(f"no triangles labeled ({a}|{b})")
    verts = np.unique(mesh.triangles[faces])
    junction = extract_junctions(mesh).vertices
    on_junction = np.isin(verts, junction)
    return faces, verts[~on_junction], verts[on_junction]


def stretch_sheet(mesh: MultiMaterialMesh, pair, factor: float) -> MultiMaterialMesh:
    """Slide the vertices of one sheet away from its junction, within the sheet.

    Distance from the junction ``s`` is remapped so that the row of vertices
    next to the junction moves ``factor`` times farther out, blending back to
    no motion a few rows later (see :func:`_stretch_profile`).
    Planar sheets (straight or circular junction) and spherical sheets are
    supported; junction vertices never move.  On a spherical sheet the
    apexes of junction triangles stay in their original planes, so they
    sit slightly off the sphere.
    """
    if not factor > 0:
        raise ValueError(f"stretch factor must be positive, got {factor}")
    _, movable, jverts = sheet_vertices(mesh, pair)
    out = mesh.copy()
    if factor == 1.0 or len(movable) == 0:
        return out
    if len(jverts) < 2:
        raise SheetNotFound(f"sheet {tuple(pair)} does not touch a junction")
    apexes = _junction_apexes(mesh, pair)
    first_row = np.isin(movable, list(apexes))
    if not first_row.any():
        raise SheetNotFound(f"sheet {tuple(pair)} has no triangle on a junction edge")
    p = mesh.positions.copy()
    allv = np.concatenate([movable, jverts])
    centroid = p[allv].mean(axis=0)
    _, sv, vt = np.linalg.svd(p[allv] - centroid)
    extent = sv[0] if sv[0] > 0 else 1.0
    if sv[2] / extent < 1e-9:
        normal = vt[2]
        js = p[jverts] - centroid
        _, jsv, jvt = np.linalg.svd(js - js.mean(axis=0))
        if len(jverts) == 2 or jsv[1] / max(jsv[0], 1e-300) < 1e-9:
            # straight junction line
            line_pt = p[jverts].mean(axis=0)
            direction = jvt[0]
            rel = p[movable] - line_pt
            perp = rel - np.outer(rel @ direction, direction)
            s = np.linalg.norm(perp, axis=1)
            u = perp / s[:, None]
            S = s.max()
            d1 = s[first_row].max()
            p[movable] += (_stretch_profile(s, d1, S, factor) - s)[:, None] * u
        else:
            # circular junction in the sheet plane
            e1 = vt[0]
            e2 = np.cross(normal, e1)
            xy = np.column_stack([(p[jverts] - centroid) @ e1, (p[jverts] - centroid) @ e2])
            c2 = _fit_circle_2d(xy)
            center = centroid + c2[0] * e1 + c2[1] * e2
            rho = float(np.linalg.norm(p[jverts] - center, axis=1).mean())
            rel = p[movable] - center
            rel -= np.outer(rel @ normal, normal)
            rad = np.linalg.norm(rel, axis=1)
            s = rho - rad
            S = rho
            d1 = s[first_row].max()
            with np.errstate(invalid="ignore", divide="ignore"):
                u = np.where(rad[:, None] > 0, -rel / rad[:, None], 0.0)
            p[movable] += (_stretch_profile(s, d1, S, factor) - s)[:, None] * u
    else:
        center, R = _fit_sphere(p[allv])
        js = p[jverts] - centroid
        _, _, jvt = np.linalg.svd(js - js.mean(axis=0))
        axis = jvt[2]
        rel = p[movable] - center
        if (rel @ axis).mean() < ((p[jverts] - center) @ axis).mean():
            axis = -axis
        # polar angle from the far pole; the junction sits at psi_j
        dirs = rel / np.linalg.norm(rel, axis=1)[:, None]
        psi = np.arccos(np.clip(dirs @ axis, -1.0, 1.0))
        jdirs = (p[jverts] - center) / np.linalg.norm(p[jverts] - center, axis=1)[:, None]
        psi_j = float(np.arccos(np.clip(jdirs @ axis, -1.0, 1.0)).mean())
        s = psi_j - psi
        s_new = _stretch_profile(s, s[first_row].max(), psi_j, factor)
        psi_new = psi_j - s_new
        radial = np.linalg.norm(rel, axis=1)
        perp = dirs - np.outer(dirs @ axis, axis)
        pn = np.linalg.norm(perp, axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            perp = np.where(pn[:, None] > 1e-14, perp / pn[:, None], 0.0)
        new_dirs = np.outer(np.cos(psi_new), axis) + np.sin(psi_new)[:, None] * perp
        p[movable] = center + radial[:, None] * new_dirs
    _keep_junction_planes(mesh, apexes, p)
    out.set_positions(p)
    return out


def _junction_apexes(mesh, pair):
    """Map apex vertex -> junction edges it tops, over the sheet's junction triangles."""
    faces, _, _ = sheet_vertices(mesh, pair)
    jset = set(extract_junctions(mesh).vertices.tolist())
    apex_edges = {}
    for f in faces:
        tri = mesh.triangles[f].tolist()
        on = [v for v in tri if v in jset]
        if len(on) != 2 or mesh.edge_face_counts[mesh.find_edge(*on)] < 3:
            continue
        w = next(v for v in tri if v not in jset)
        apex_edges.setdefault(w, []).append(tuple(on))
    return apex_edges


def _keep_junction_planes(mesh, apex_edges, p):
    """Put apexes of junction-edge triangles back into their original half-planes.

    On a curved sheet the remapped apex leaves the plane through its junction
    edge, which would change the junction angles.  Each apex instead slides
    away from its edge along the perpendicular (or away from the shared
    junction vertex when it tops two junction edges), by the same ratio the
    remap applied to its distance from the junction.
    """
    old = mesh.positions
    for w, edges in apex_edges.items():
        if mesh.fixed[w]:
            continue
        if len(edges) == 1:
            a, b = edges[0]
            axis = old[b] - old[a]
            axis /= np.linalg.norm(axis)
            rel = old[w] - old[a]
            base = old[a] + (rel @ axis) * axis
        elif len(edges) == 2 and len(set(edges[0]) & set(edges[1])) == 1:
            base = old[(set(edges[0]) & set(edges[1])).pop()]
        else:
            p[w] = old[w]
            continue
        d_old = np.linalg.norm(old[w] - base)
        d_new = np.linalg.norm(p[w] - base)
        p[w] = base + (d_new / d_old) * (old[w] - base)


def tangential_jitter(mesh: MultiMaterialMesh, amplitude: float, seed: int = 0) -> MultiMaterialMesh:
    """Random in-plane displacement of every free non-junction vertex.

    Each displacement lies in the vertex's tangent plane and has length at
    most ``amplitude``.  Junction and clamped vertices do not move.
    """
    if amplitude < 0:
        raise ValueError("amplitude must be non-negative")
    out = mesh.copy()
    if amplitude == 0:
        return out
    junction = extract_junctions(mesh).vertices
    movable = np.ones(mesh.n_vertices, dtype=bool)
    movable[junction] = False
    movable &= ~mesh.fixed
    p = mesh.positions
    e = mesh.edges
    lengths = mesh.edge_lengths()
    local = np.full(mesh.n_vertices, np.inf)
    np.minimum.at(local, e[:, 0], lengths)
    np.minimum.at(local, e[:, 1], lengths)
    if np.any(amplitude >= 0.3 * local[movable]):
        raise ValueError(f"jitter amplitude {amplitude} is not below 0.3x the local edge length")
    normals = np.zeros_like(p)
    av = mesh.area_vectors()
    for col in range(3):
        np.add.at(normals, mesh.triangles[:, col], av)
    normals /= np.linalg.norm(normals, axis=1)[:, None]
    rng = np.random.default_rng(seed)
    raw = rng.normal(size=p.shape)
    raw -= np.einsum("ij,ij->i", raw, normals)[:, None] * normals
    raw /= np.linalg.norm(raw, axis=1)[:, None]
    mag = amplitude * rng.uniform(0.0, 1.0, size=len(p))
    q = p.copy()
    q[movable] += (mag[:, None] * raw)[movable]
    out.set_positions(q)
    return out
