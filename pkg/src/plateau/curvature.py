"""Per-region discrete mean curvature and junction vertex-area strategies.

Integrated curvature at a vertex is the cotangent mean-curvature normal of
the region's own surface,

    K = 1/2 * sum_j (cot a_j + cot b_j) (p_v - p_j),

which is the area gradient of the one-ring and points out of a convex
region.  Pointwise curvature is ``H = |K| / (2 A)`` where ``A`` is the
normalizing vertex area.  Away from junctions ``A`` is the mixed Voronoi
area; at junction vertices it depends on the chosen :class:`AreaStrategy`.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import DegenerateEdge, NotAJunctionVertex, NumericalError
from .mmesh import DEGENERATE_REL, JunctionSet, MultiMaterialMesh, RegionSurface, extract_junctions, region_surface

COT_LIMIT = 1.0 / DEGENERATE_REL


# -- strategies -------------------------------------------------------------


@dataclass(frozen=True)
class NaivePerRegion:
    """Each region normalizes by its own mixed area, junction or not."""

    name = "naive"

    def __str__(self):
        return "naive"


@dataclass(frozen=True)
class ConstantEdge:
    """Junction area = half the incident junction-edge length x fraction x mean edge length."""

    fraction: float = 0.5
    name = "constant"

    def __post_init__(self):
        if not self.fraction > 0:
            raise ValueError(f"ConstantEdge fraction must be positive, got {self.fraction}")

    def __str__(self):
        return f"constant:{self.fraction:g}"


@dataclass(frozen=True)
class AveragedArea:
    """Junction area = arithmetic mean of the incident regions' mixed areas."""

    name = "averaged"

    def __str__(self):
        return "averaged"


AreaStrategy = Union[NaivePerRegion, ConstantEdge, AveragedArea]


def parse_strategy(text: str) -> AreaStrategy:
    """Parse ``naive``, ``averaged``, ``constant`` or ``constant:<fraction>``."""
    text = text.strip().lower()
    if text == "naive":
        return NaivePerRegion()
    if text == "averaged":
        return AveragedArea()
    if text == "constant":
        return ConstantEdge()
    if text.startswith("constant:"):
        return ConstantEdge(float(text.split(":", 1)[1]))
    raise ValueError(f"unknown area strategy {text!r}")


# -- per-triangle kernels ---------------------------------------------------------


def scatter_add(index: np.ndarray, values: np.ndarray, n: int) -> np.ndarray:
    """Sum ``values`` rows into ``n`` bins given by ``index`` (1-D or (m, k) values)."""
    if values.ndim == 1:
        return np.bincount(index, weights=values, minlength=n)
    return np.column_stack([np.bincount(index, weights=values[:, c], minlength=n) for c in range(values.shape[1])])


def _corner_cotangents(p: np.ndarray, tris: np.ndarray) -> np.ndarray:
    """cot of the interior angle at each corner, shape (F, 3)."""
    a, b, c = p[tris[:, 0]], p[tris[:, 1]], p[tris[:, 2]]
    twice_area = np.linalg.norm(np.cross(b - a, c - a), axis=1)
    cots = np.empty((len(tris), 3))
    cots[:, 0] = np.einsum("ij,ij->i", b - a, c - a)
    cots[:, 1] = np.einsum("ij,ij->i", c - b, a - b)
    cots[:, 2] = np.einsum("ij,ij->i", a - c, b - c)
    with np.errstate(divide="ignore", invalid="ignore"):
        cots /= twice_area[:, None]
    return cots


def _corner_terms(p: np.ndarray, tris: np.ndarray):
    """Per-corner curvature-normal contributions (F, 3, 3), mixed-area shares (F, 3)
    and area vectors (F, 3) of an oriented triangle list."""
    cots = _corner_cotangents(p, tris)
    if not np.all(np.isfinite(cots)) or np.abs(cots).max(initial=0.0) > COT_LIMIT:
        raise NumericalError("corner cotangent exceeds the degeneracy bound")
    a, b, c = p[tris[:, 0]], p[tris[:, 1]], p[tris[:, 2]]
    e0, e1, e2 = c - b, a - c, b - a  # opposite corners 0, 1, 2
    # K at corner i: 1/2 sum over the two incident edges of cot(opposite) * (p_i - p_j)
    kc = np.empty((len(tris), 3, 3))
    kc[:, 0] = 0.5 * (cots[:, 2, None] * -e2 + cots[:, 1, None] * e1)
    kc[:, 1] = 0.5 * (cots[:, 0, None] * -e0 + cots[:, 2, None] * e2)
    kc[:, 2] = 0.5 * (cots[:, 1, None] * -e1 + cots[:, 0, None] * e0)
    av = 0.5 * np.cross(e2, -e1)
    area = np.linalg.norm(av, axis=1)
    sq0, sq1, sq2 = (e0 * e0).sum(1), (e1 * e1).sum(1), (e2 * e2).sum(1)
    # Voronoi share at corner i: (|e_ij|^2 cot k + |e_ik|^2 cot j) / 8
    vor = np.column_stack([
        (sq2 * cots[:, 2] + sq1 * cots[:, 1]) / 8.0,
        (sq0 * cots[:, 0] + sq2 * cots[:, 2]) / 8.0,
        (sq1 * cots[:, 1] + sq0 * cots[:, 0]) / 8.0,
    ])
    obtuse = cots < 0.0
    share = np.where(obtuse.any(axis=1)[:, None], np.where(obtuse, 0.5, 0.25) * area[:, None], vor)
    return kc, share, av


def cotan_curvature_normals(p: np.ndarray, tris: np.ndarray, n_vertices: int) -> np.ndarray:
    """Integrated mean-curvature normal at every vertex of an oriented triangle set."""
    kc, _, _ = _corner_terms(p, tris)
    return scatter_add(tris.reshape(-1), kc.reshape(-1, 3), n_vertices)


def mixed_areas(p: np.ndarray, tris: np.ndarray, n_vertices: int) -> np.ndarray:
    """Mixed Voronoi vertex areas.

    Non-obtuse triangles give each corner its Voronoi share.  An obtuse
    triangle gives half its area to the obtuse corner and a quarter to
    each of the others.
    """
    _, share, _ = _corner_terms(p, tris)
    return scatter_add(tris.reshape(-1), share.reshape(-1), n_vertices)


# -- region-level quantities ------------------------------------------------------


def _face_terms(mesh: MultiMaterialMesh):
    if "face_terms" not in mesh._geom:
        mesh._geom["face_terms"] = _corner_terms(mesh.positions, mesh.triangles)
    return mesh._geom["face_terms"]


def region_curvature_data(mesh: MultiMaterialMesh, region: int):
    """(K, A, N) arrays over all vertices for one region's surface.

    ``K`` integrated curvature normals, ``A`` mixed areas, ``N`` summed
    outward area vectors.  Rows of vertices not on the region are zero.
    Cached until the mesh positions change.
    """
    cache = mesh._geom.setdefault("region_curv", {})
    if region not in cache:
        region_surface(mesh, region)
        faces, flip = mesh.region_faces(region)
        kc, share, av = _face_terms(mesh)
        V = mesh.n_vertices
        idx = mesh.triangles[faces].reshape(-1)
        sign = np.where(flip, -1.0, 1.0)[:, None]
        cache[region] = (
            scatter_add(idx, kc[faces].reshape(-1, 3), V),
            scatter_add(idx, share[faces].reshape(-1), V),
            scatter_add(idx, np.repeat(av[faces] * sign, 3, axis=0), V),
        )
    return cache[region]


def integrated_curvature(surface: RegionSurface, positions, v: int) -> np.ndarray:
    """Cotangent curvature normal of ``surface`` at vertex ``v``."""
    tris = surface.triangles
    local = tris[np.any(tris == v, axis=1)]
    if len(local) == 0:
        raise ValueError(f"vertex {v} is not on region {surface.region}")
    p = np.asarray(positions, dtype=np.float64)
    return cotan_curvature_normals(p, local, len(p))[v]


def naive_vertex_area(surface: RegionSurface, positions, v: int) -> float:
    tris = surface.triangles
    local = tris[np.any(tris == v, axis=1)]
    if len(local) == 0:
        raise ValueError(f"vertex {v} is not on region {surface.region}")
    p = np.asarray(positions, dtype=np.float64)
    return float(mixed_areas(p, local, len(p))[v])


def junction_edge_length_sums(mesh: MultiMaterialMesh, junctions: JunctionSet) -> np.ndarray:
    """Per vertex, the summed length of incident junction edges."""
    p = mesh.positions
    e = junctions.edges
    out = np.zeros(mesh.n_vertices)
    if len(e):
        lengths = np.linalg.norm(p[e[:, 1]] - p[e[:, 0]], axis=1)
        np.add.at(out, e[:, 0], lengths)
        np.add.at(out, e[:, 1], lengths)
    return out


def normalizing_areas(mesh: MultiMaterialMesh, strategy: AreaStrategy, junctions=None) -> np.ndarray:
    """(V, regionCount) normalizing areas, NaN where a region is not incident."""
    key = ("norm_areas", str(strategy))
    if key in mesh._geom:
        return mesh._geom[key]
    if junctions is None:
        junctions = extract_junctions(mesh)
    vr = mesh.vertex_regions
    out = np.full(vr.shape, np.nan)
    for r in mesh.present_regions():
        _, A, _ = region_curvature_data(mesh, r)
        out[vr[:, r], r] = A[vr[:, r]]
    jv = junctions.vertices
    if len(jv) and not isinstance(strategy, NaivePerRegion):
        if isinstance(strategy, ConstantEdge):
            common = 0.5 * junction_edge_length_sums(mesh, junctions)[jv] * strategy.fraction * mesh.mean_edge_length()
        elif isinstance(strategy, AveragedArea):
            common = np.nanmean(out[jv], axis=1)
        else:
            raise TypeError(f"unknown strategy {strategy!r}")
        rows = out[jv]
        rows[vr[jv]] = np.repeat(common, vr[jv].sum(axis=1))
        out[jv] = rows
    mesh._geom[key] = out
    return out


def junction_vertex_area(mesh, junctions, v: int, region: int, strategy: AreaStrategy) -> float:
    regions = mesh.incident_regions(v)
    if len(regions) < 3:
        raise NotAJunctionVertex(f"vertex {v} touches only {len(regions)} regions")
    if region not in regions:
        raise ValueError(f"region {region} is not incident to vertex {v}")
    return float(normalizing_areas(mesh, strategy, junctions)[v, region])


@dataclass
class VertexCurvature:
    vertex: int
    region: int
    K: np.ndarray
    A: float
    H: float


def signed_curvatures(mesh: MultiMaterialMesh, region: int, strategy: AreaStrategy, junctions=None) -> np.ndarray:
    """Signed pointwise H for every vertex of ``region`` (NaN elsewhere).

    Positive when the curvature normal and the region's outward normal
    agree, so a ball seen from inside has H = +1/r.
    """
    K, _, N = region_curvature_data(mesh, region)
    A = normalizing_areas(mesh, strategy, junctions)[:, region]
    mag = np.linalg.norm(K, axis=1)
    sign = np.where(np.einsum("ij,ij->i", K, N) < 0.0, -1.0, 1.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        return sign * mag / (2.0 * A)


def pointwise_curvature(mesh, junctions, v: int, region: int, strategy: AreaStrategy) -> VertexCurvature:
    if not mesh.vertex_regions[v, region]:
        raise ValueError(f"vertex {v} is not on region {region}")
    K, _, N = region_curvature_data(mesh, region)
    A = float(normalizing_areas(mesh, strategy, junctions)[v, region])
    k = K[v].copy()
    H = float(np.linalg.norm(k) / (2.0 * A))
    if np.dot(k, N[v]) < 0.0:
        H = -H
    return VertexCurvature(int(v), int(region), k, A, H)


# -- junction geometry --------------------------------------------------------------


def junction_wedges(mesh: MultiMaterialMesh, junctions: JunctionSet, e: int):
    """Angular gaps around junction edge ``e`` and the region filling each.

    Incident triangles are projected onto the plane perpendicular to the
    edge and sorted by azimuth.  Returns ``(angles_deg, regions)`` where
    ``angles_deg[i]`` is the gap from sheet ``i`` to sheet ``i+1``.
    """
    a, b = junctions.edges[e]
    p = mesh.positions
    axis = p[b] - p[a]
    length = float(np.linalg.norm(axis))
    if length < math.sqrt(DEGENERATE_REL) * mesh.mean_edge_length():
        raise DegenerateEdge(f"junction edge {e} has length {length:.3e}")
    axis /= length
    faces = junctions.edge_triangles[e]
    tris = mesh.triangles[faces]
    others = tris[(tris != a) & (tris != b)]
    d = p[others] - p[a]
    d -= np.outer(d @ axis, axis)
    ref = d[0] / np.linalg.norm(d[0])
    ortho = np.cross(axis, ref)
    az = np.arctan2(d @ ortho, d @ ref)
    order = np.argsort(az, kind="stable")
    az = az[order]
    gaps = np.diff(np.concatenate([az, [az[0] + 2.0 * np.pi]]))
    labels = mesh.labels[faces][order]
    regions = []
    for i in range(len(order)):
        shared = set(labels[i].tolist()) & set(labels[(i + 1) % len(order)].tolist())
        regions.append(min(shared) if shared else -1)
    return np.degrees(gaps), regions


def junction_dihedral_angles(mesh: MultiMaterialMesh, junctions: JunctionSet, e: int) -> np.ndarray:
    return junction_wedges(mesh, junctions, e)[0]


def all_junction_angles(mesh: MultiMaterialMesh, junctions=None):
    """Concatenated angles and wedge regions over every junction edge."""
    if junctions is None:
        junctions = extract_junctions(mesh)
    angles, regions = [], []
    for e in range(len(junctions)):
        ang, reg = junction_wedges(mesh, junctions, e)
        angles.extend(ang.tolist())
        regions.extend(reg)
    return np.array(angles), np.array(regions, dtype=np.int64)


def junction_edge_curvatures(mesh: MultiMaterialMesh, junctions: JunctionSet, e: int) -> dict:
    """Scalar |e| * theta per wedge region, theta the turning angle of that region's surface."""
    a, b = junctions.edges[e]
    length = float(np.linalg.norm(mesh.positions[b] - mesh.positions[a]))
    angles, regions = junction_wedges(mesh, junctions, e)
    return {r: length * math.radians(180.0 - ang) for ang, r in zip(angles, regions)}


# -- diagnostics -------------------------------------------------------------------


def write_curvature_csv(mesh: MultiMaterialMesh, strategies, path, vertices=None) -> None:
    """Dump ``vertex,region,strategy,K_x,K_y,K_z,A,H`` rows (junction vertices by default)."""
    junctions = extract_junctions(mesh)
    if vertices is None:
        vertices = junctions.vertices
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["vertex", "region", "strategy", "K_x", "K_y", "K_z", "A", "H"])
        for strategy in strategies:
            for v in vertices:
                for r in sorted(mesh.incident_regions(int(v))):
                    vc = pointwise_curvature(mesh, junctions, int(v), r, strategy)
                    w.writerow([vc.vertex, vc.region, str(strategy), *map(repr, vc.K.tolist()), repr(vc.A), repr(vc.H)])
