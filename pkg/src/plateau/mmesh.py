"""Region-labeled non-manifold triangle meshes.

Each triangle carries an ordered label pair ``(front, back)``.  The
triangle normal (right-hand rule over ``i, j, k``) points *out of* the
``front`` region and into the ``back`` region.  Region 0 is the ambient
exterior and never carries a volume constraint.

Topology (edges, region membership, junctions) is cached on the mesh and
survives vertex moves; anything that depends on positions is recomputed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, MeshError, TopologyError

logger = logging.getLogger(__name__)

DEGENERATE_REL = 1e-12


def triangle_area_vectors(positions: np.ndarray, tris: np.ndarray) -> np.ndarray:
    """Half cross products; the area vector of each oriented triangle."""
    p0 = positions[tris[:, 0]]
    return 0.5 * np.cross(positions[tris[:, 1]] - p0, positions[tris[:, 2]] - p0)


class MultiMaterialMesh:
    """Vertices plus labeled triangles; the single source of geometric truth.

    Parameters
    ----------
    vertices : (V, 3) array_like
    triangles : (F, 3) array_like of int
    labels : (F, 2) array_like of int, columns ``(front, back)``
    region_count : int, optional
        Defaults to ``labels.max() + 1``.
    fixed : (V,) array_like of bool, optional
        Clamped vertices.  Boundary edges are only legal between clamped
        vertices (open strip scenes).
    """

    def __init__(self, vertices, triangles, labels, region_count=None, fixed=None, validate=True):
        self._positions = np.array(vertices, dtype=np.float64, copy=True).reshape(-1, 3)
        self.triangles = np.array(triangles, dtype=np.int64, copy=True).reshape(-1, 3)
        self.labels = np.array(labels, dtype=np.int64, copy=True).reshape(-1, 2)
        if region_count is None:
            region_count = int(self.labels.max()) + 1 if len(self.labels) else 1
        self.region_count = int(region_count)
        if fixed is None:
            fixed = np.zeros(len(self._positions), dtype=bool)
        self.fixed = np.array(fixed, dtype=bool, copy=True).reshape(-1)
        self._topo: dict = {}
        self._geom: dict = {}
        if validate:
            self.validate()

    # -- basic access ------------------------------------------------------

    @property
    def positions(self) -> np.ndarray:
        """Read-only view of vertex positions; use :meth:`set_positions` to move."""
        view = self._positions.view()
        view.flags.writeable = False
        return view

    vertices = positions

    @property
    def n_vertices(self) -> int:
        return len(self._positions)

    @property
    def n_faces(self) -> int:
        return len(self.triangles)

    def set_positions(self, positions) -> None:
        positions = np.asarray(positions, dtype=np.float64)
        if positions.shape != self._positions.shape:
            raise MeshError(f"position array shape {positions.shape} != {self._positions.shape}")
        self._positions = positions.copy()
        self._geom.clear()

    def copy(self) -> "MultiMaterialMesh":
        out = MultiMaterialMesh.__new__(MultiMaterialMesh)
        out._positions = self._positions.copy()
        out.triangles = self.triangles.copy()
        out.labels = self.labels.copy()
        out.region_count = self.region_count
        out.fixed = self.fixed.copy()
        # topology is immutable once built, so sharing it is safe
        out._topo = self._topo
        out._geom = {}
        return out

    def with_positions(self, positions) -> "MultiMaterialMesh":
        out = self.copy()
        out.set_positions(positions)
        return out

    def relabeled(self, permutation) -> "MultiMaterialMesh":
        """Return a mesh with region ``r`` renamed to ``permutation[r]``."""
        perm = np.asarray(permutation, dtype=np.int64)
        return MultiMaterialMesh(self._positions, self.triangles, perm[self.labels],
                                 self.region_count, self.fixed)

    def __repr__(self):
        return (f"MultiMaterialMesh(V={self.n_vertices}, F={self.n_faces}, "
                f"regions={self.region_count})")

    # -- cached topology ---------------------------------------------------

    def _edge_table(self):
        if "edges" not in self._topo:
            tris = self.triangles
            half = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
            face_of = np.tile(np.arange(len(tris)), 3)
            key = np.sort(half, axis=1)
            edges, inverse, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
            inverse = inverse.reshape(-1)
            order = np.argsort(inverse, kind="stable")
            offsets = np.concatenate([[0], np.cumsum(counts)])
            self._topo["edges"] = (edges, counts, face_of[order], offsets, inverse)
        return self._topo["edges"]

    @property
    def edges(self) -> np.ndarray:
        """Unique undirected edges as sorted ``(a, b)`` pairs."""
        return self._edge_table()[0]

    @property
    def edge_face_counts(self) -> np.ndarray:
        return self._edge_table()[1]

    def edge_faces(self, e: int) -> np.ndarray:
        _, _, faces, offsets, _ = self._edge_table()
        return faces[offsets[e]:offsets[e + 1]]

    def find_edge(self, a: int, b: int) -> int:
        edges = self.edges
        a, b = min(a, b), max(a, b)
        lo = np.searchsorted(edges[:, 0], a, side="left")
        hi = np.searchsorted(edges[:, 0], a, side="right")
        idx = lo + np.searchsorted(edges[lo:hi, 1], b)
        if idx >= hi or edges[idx, 1] != b:
            raise KeyError((a, b))
        return int(idx)

    def region_faces(self, region: int):
        """Face indices bounding ``region`` and whether each must be flipped."""
        cache = self._topo.setdefault("region_faces", {})
        if region not in cache:
            front = np.flatnonzero(self.labels[:, 0] == region)
            back = np.flatnonzero(self.labels[:, 1] == region)
            faces = np.concatenate([front, back])
            flip = np.concatenate([np.zeros(len(front), bool), np.ones(len(back), bool)])
            order = np.argsort(faces, kind="stable")
            cache[region] = (faces[order], flip[order])
        return cache[region]

    def region_triangles(self, region: int) -> np.ndarray:
        """Triangles of ``region``'s boundary oriented with normals pointing out of it."""
        cache = self._topo.setdefault("region_tris", {})
        if region not in cache:
            faces, flip = self.region_faces(region)
            tris = self.triangles[faces].copy()
            tris[flip] = tris[flip][:, [0, 2, 1]]
            cache[region] = tris
        return cache[region]

    @property
    def vertex_regions(self) -> np.ndarray:
        """(V, regionCount) boolean incidence of vertices and region labels."""
        if "vertex_regions" not in self._topo:
            vr = np.zeros((self.n_vertices, self.region_count), dtype=bool)
            for col in range(3):
                vr[self.triangles[:, col], self.labels[:, 0]] = True
                vr[self.triangles[:, col], self.labels[:, 1]] = True
            self._topo["vertex_regions"] = vr
        return self._topo["vertex_regions"]

    def incident_regions(self, v: int) -> frozenset:
        return frozenset(np.flatnonzero(self.vertex_regions[v]).tolist())

    def present_regions(self) -> list[int]:
        return sorted(set(np.unique(self.labels).tolist()))

    def enclosed_regions(self) -> list[int]:
        """Labels >= 1 that bound a closed surface (volume-constrained regions)."""
        if "enclosed" not in self._topo:
            out = []
            for r in self.present_regions():
                if r == 0:
                    continue
                faces, _ = self.region_faces(r)
                verts = np.unique(self.triangles[faces])
                if not self.fixed[verts].any() and _surface_is_closed(self.region_triangles(r)):
                    out.append(r)
            self._topo["enclosed"] = out
        return self._topo["enclosed"]

    # -- geometry ------------------------------------------------------------

    def edge_lengths(self) -> np.ndarray:
        if "edge_lengths" not in self._geom:
            e = self.edges
            self._geom["edge_lengths"] = np.linalg.norm(
                self._positions[e[:, 1]] - self._positions[e[:, 0]], axis=1)
        return self._geom["edge_lengths"]

    def mean_edge_length(self) -> float:
        return float(self.edge_lengths().mean())

    def min_edge_length(self) -> float:
        return float(self.edge_lengths().min())

    def area_vectors(self) -> np.ndarray:
        if "area_vectors" not in self._geom:
            self._geom["area_vectors"] = triangle_area_vectors(self._positions, self.triangles)
        return self._geom["area_vectors"]

    def face_areas(self) -> np.ndarray:
        return np.linalg.norm(self.area_vectors(), axis=1)

    def total_area(self) -> float:
        return float(self.face_areas().sum())

    # -- validation ----------------------------------------------------------

    def validate(self) -> None:
        V = self.n_vertices
        if self.triangles.size and (self.triangles.min() < 0 or self.triangles.max() >= V):
            raise MeshError("triangle index out of range")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.region_count):
            raise MeshError("region label out of range")
        if np.any(self.labels[:, 0] == self.labels[:, 1]):
            bad = int(np.flatnonzero(self.labels[:, 0] == self.labels[:, 1])[0])
            raise MeshError(f"triangle {bad} has identical front and back labels")
        t = self.triangles
        if np.any((t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])):
            raise MeshError("triangle with repeated vertex index")
        if len(self.fixed) != V:
            raise MeshError("fixed mask length differs from vertex count")
        eps = DEGENERATE_REL * self.mean_edge_length() ** 2
        areas = self.face_areas()
        if np.any(areas <= eps):
            bad = int(np.argmin(areas))
            raise MeshError(f"degenerate triangle {bad} (area {areas[bad]:.3e} <= {eps:.3e})")
        edges, counts = self.edges, self.edge_face_counts
        lone = counts < 2
        if np.any(lone & ~(self.fixed[edges[:, 0]] & self.fixed[edges[:, 1]])):
            e = edges[np.flatnonzero(lone & ~(self.fixed[edges[:, 0]] & self.fixed[edges[:, 1]]))[0]]
            raise TopologyError(f"boundary edge {tuple(e)} between unclamped vertices")
        for r in self.present_regions():
            region_surface(self, r)


def _surface_is_closed(tris: np.ndarray) -> bool:
    directed = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    fwd = {tuple(d) for d in directed.tolist()}
    return all((b, a) in fwd for a, b in fwd)


@dataclass
class RegionSurface:
    """Boundary of one region, normals pointing out of it."""

    region: int
    triangles: np.ndarray
    faces: np.ndarray = field(repr=False)
    closed: bool = True

    def __len__(self):
        return len(self.triangles)

    @property
    def vertices(self) -> np.ndarray:
        return np.unique(self.triangles)

    def euler_characteristic(self) -> int:
        t = self.triangles
        edges = np.unique(np.sort(np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]]), axis=1), axis=0)
        return len(np.unique(t)) - len(edges) + len(t)


def region_surface(mesh: MultiMaterialMesh, region: int) -> RegionSurface:
    """Collect and orient the triangles bounding ``region``.

    Raises TopologyError if a directed edge repeats (inconsistent
    orientation) or if an unclamped edge is used only once.
    """
    if not 0 <= region < mesh.region_count:
        raise MeshError(f"region {region} outside [0, {mesh.region_count})")
    cache = mesh._topo.setdefault("surfaces", {})
    if region in cache:
        return cache[region]
    faces, _ = mesh.region_faces(region)
    tris = mesh.region_triangles(region)
    directed = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    uniq, counts = np.unique(directed, axis=0, return_counts=True)
    if np.any(counts > 1):
        a, b = uniq[np.argmax(counts)]
        raise TopologyError(f"region {region}: directed edge ({a}, {b}) used twice; orientation inconsistent")
    und, ucounts = np.unique(np.sort(directed, axis=1), axis=0, return_counts=True)
    if np.any(ucounts > 2):
        raise TopologyError(f"region {region}: edge used by more than two of its triangles")
    lone = und[ucounts == 1]
    if len(lone) and not np.all(mesh.fixed[lone]):
        a, b = lone[np.flatnonzero(~np.all(mesh.fixed[lone], axis=1))[0]]
        raise TopologyError(f"region {region}: surface not closed at edge ({a}, {b})")
    surf = RegionSurface(region, tris, faces, closed=len(lone) == 0)
    cache[region] = surf
    return surf


@dataclass
class JunctionSet:
    """Edges shared by three or more triangles, and the vertices on them."""

    edges: np.ndarray
    edge_triangles: list
    vertices: np.ndarray
    regions: dict

    def __len__(self):
        return len(self.edges)

    def incident_regions(self, v: int) -> frozenset:
        return self.regions[int(v)]

    def is_junction_vertex(self, v: int) -> bool:
        return int(v) in self.regions

    def edges_at(self, v: int) -> np.ndarray:
        return np.flatnonzero((self.edges[:, 0] == v) | (self.edges[:, 1] == v))


def extract_junctions(mesh: MultiMaterialMesh) -> JunctionSet:
    if "junctions" in mesh._topo:
        return mesh._topo["junctions"]
    counts = mesh.edge_face_counts
    idx = np.flatnonzero(counts >= 3)
    edges = mesh.edges[idx]
    tri_lists = [mesh.edge_faces(int(e)) for e in idx]
    verts = np.unique(edges)
    vr = mesh.vertex_regions
    regions = {int(v): frozenset(np.flatnonzero(vr[v]).tolist()) for v in verts}
    js = JunctionSet(edges, tri_lists, verts, regions)
    mesh._topo["junctions"] = js
    return js


def enclosed_volume(mesh: MultiMaterialMesh, region: int) -> float:
    """Signed volume bounded by ``region``'s outward surface."""
    if region < 1:
        raise MeshError("the ambient region 0 has no enclosed volume")
    tris = region_surface(mesh, region).triangles
    p = mesh.positions
    return float(np.einsum("ij,ij->i", p[tris[:, 0]], np.cross(p[tris[:, 1]], p[tris[:, 2]])).sum() / 6.0)


def volume_gradient(mesh: MultiMaterialMesh, region: int) -> np.ndarray:
    """dV/dp per vertex: a third of the incident outward area vectors."""
    if region < 1:
        raise MeshError("the ambient region 0 has no enclosed volume")
    tris = region_surface(mesh, region).triangles
    av = np.repeat(triangle_area_vectors(mesh.positions, tris) / 3.0, 3, axis=0)
    idx = tris.reshape(-1)
    V = mesh.n_vertices
    return np.column_stack([np.bincount(idx, weights=av[:, c], minlength=V) for c in range(3)])


def region_area_vector_sum(mesh: MultiMaterialMesh, region: int) -> np.ndarray:
    tris = region_surface(mesh, region).triangles
    return triangle_area_vectors(mesh.positions, tris).sum(axis=0)


# -- MMM v1 text format ---------------------------------------------------------

def dumps_mmm(mesh: MultiMaterialMesh) -> str:
    """Serialize as ``mmm 1 <regionCount>`` then ``v``/``f`` lines.

    Clamped vertices are written as ``v x y z fixed``.  Floats use
    ``repr`` so the text round-trips bit-exactly.
    """
    lines = [f"mmm 1 {mesh.region_count}"]
    for p, fx in zip(mesh.positions.tolist(), mesh.fixed.tolist()):
        line = f"v {p[0]!r} {p[1]!r} {p[2]!r}"
        lines.append(line + " fixed" if fx else line)
    for t, lab in zip(mesh.triangles.tolist(), mesh.labels.tolist()):
        lines.append(f"f {t[0]} {t[1]} {t[2]} {lab[0]} {lab[1]}")
    return "\n".join(lines) + "\n"


def loads_mmm(text: str, validate: bool = True) -> MultiMaterialMesh:
    verts, fixed, tris, labels = [], [], [], []
    region_count = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        try:
            if tok[0] == "mmm":
                if tok[1] != "1":
                    raise FormatError(f"line {lineno}: unsupported MMM version {tok[1]}")
                region_count = int(tok[2])
            elif tok[0] == "v":
                if len(tok) not in (4, 5) or (len(tok) == 5 and tok[4] != "fixed"):
                    raise FormatError(f"line {lineno}: expected 'v x y z [fixed]'")
                verts.append([float(x) for x in tok[1:4]])
                fixed.append(len(tok) > 4 and tok[4] == "fixed")
            elif tok[0] == "f":
                vals = [int(x) for x in tok[1:6]]
                if len(vals) != 5:
                    raise FormatError(f"line {lineno}: face needs 5 integers")
                tris.append(vals[:3])
                labels.append(vals[3:])
            else:
                raise FormatError(f"line {lineno}: unknown record {tok[0]!r}")
        except (ValueError, IndexError) as exc:
            raise FormatError(f"line {lineno}: {exc}") from exc
    if region_count is None:
        raise FormatError("missing 'mmm 1 <regionCount>' header")
    return MultiMaterialMesh(verts, tris, labels, region_count, fixed, validate=validate)


def write_mmm(mesh: MultiMaterialMesh, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_mmm(mesh))


def read_mmm(path, validate: bool = True) -> MultiMaterialMesh:
    with open(path) as fh:
        return loads_mmm(fh.read(), validate=validate)
