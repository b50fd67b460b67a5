"""Scalar measurements of simulated foams: junction angles, drift, curvature error."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .curvature import AveragedArea, all_junction_angles, signed_curvatures
from .errors import NoJunction, NotConverged
from .mmesh import MultiMaterialMesh, enclosed_volume, extract_junctions, region_surface

log = logging.getLogger(__name__)

PLATEAU_ANGLE = 120.0


@dataclass
class DiagnosticsReport:
    """Snapshot of one logged flow step."""

    step: int
    dt: float
    max_disp: float
    rms_deviation_deg: float
    volumes: dict
    centroid: np.ndarray
    centroid_drift: float
    max_curvature: float

    def as_dict(self) -> dict:
        d = asdict(self)
        d["centroid"] = [float(x) for x in self.centroid]
        d["volumes"] = {str(k): float(v) for k, v in self.volumes.items()}
        return d


def rms_angular_deviation(mesh: MultiMaterialMesh, junctions=None) -> float:
    """Root-mean-square deviation from 120 degrees over every junction angle."""
    if junctions is None:
        junctions = extract_junctions(mesh)
    if len(junctions) == 0:
        raise NoJunction("mesh has no junction edges")
    angles, _ = all_junction_angles(mesh, junctions)
    return float(np.sqrt(np.mean((angles - PLATEAU_ANGLE) ** 2)))


def wedge_angle_means(mesh: MultiMaterialMesh, junctions=None) -> dict:
    """Mean junction angle per filling region."""
    angles, regions = all_junction_angles(mesh, junctions)
    return {int(r): float(angles[regions == r].mean()) for r in np.unique(regions)}


def region_centroid(mesh: MultiMaterialMesh, region: int):
    """(volume, centroid) of an enclosed region from its signed tetrahedra."""
    tris = region_surface(mesh, region).triangles
    p = mesh.positions
    a, b, c = p[tris[:, 0]], p[tris[:, 1]], p[tris[:, 2]]
    vol = np.einsum("ij,ij->i", a, np.cross(b, c)) / 6.0
    total = vol.sum()
    return float(total), ((a + b + c) * vol[:, None]).sum(axis=0) / (4.0 * total)


def cluster_centroid(mesh: MultiMaterialMesh) -> np.ndarray:
    """Volume-weighted centroid of all enclosed regions."""
    regions = mesh.enclosed_regions()
    if not regions:
        return mesh.positions.mean(axis=0)
    vols, cents = zip(*(region_centroid(mesh, r) for r in regions))
    w = np.asarray(vols)
    return (np.asarray(cents) * w[:, None]).sum(axis=0) / w.sum()


def centroid_drift(history) -> float:
    """Distance between first and last centroid of a snapshot sequence.

    Accepts meshes, :class:`DiagnosticsReport` objects, or raw points.
    """
    items = list(history)
    if len(items) < 2:
        raise ValueError("need at least two snapshots")

    def point(x):
        if isinstance(x, MultiMaterialMesh):
            return cluster_centroid(x)
        if isinstance(x, DiagnosticsReport):
            return np.asarray(x.centroid)
        return np.asarray(x, dtype=float)

    return float(np.linalg.norm(point(items[-1]) - point(items[0])))


def max_abs_curvature(mesh: MultiMaterialMesh, strategy) -> float:
    out = 0.0
    for r in mesh.present_regions():
        H = signed_curvatures(mesh, r, strategy)
        H = H[np.isfinite(H)]
        if len(H):
            out = max(out, float(np.abs(H).max()))
    return out


def diagnostics(mesh, step, dt, max_disp, strategy, origin) -> DiagnosticsReport:
    junctions = extract_junctions(mesh)
    rms = rms_angular_deviation(mesh, junctions) if len(junctions) else float("nan")
    c = cluster_centroid(mesh)
    return DiagnosticsReport(
        step=step,
        dt=float(dt),
        max_disp=float(max_disp),
        rms_deviation_deg=rms,
        volumes={r: enclosed_volume(mesh, r) for r in mesh.enclosed_regions()},
        centroid=c,
        centroid_drift=float(np.linalg.norm(c - origin)),
        max_curvature=max_abs_curvature(mesh, strategy),
    )


# -- curvature oracle ----------------------------------------------------------------


def sphere_curvature_error(subdivisions, radius: float = 1.0, region: int = 1) -> list:
    """Rows ``(s, mean |H - 1/r|)`` on labeled icospheres.

    ``region=0`` measures from outside, where H is negative; the absolute
    error is the same.
    """
    from .scenes import make_labeled_icosphere

    rows = []
    for s in subdivisions:
        if s > 6:
            raise ValueError("subdivision above 6 is not supported")
        mesh = make_labeled_icosphere(radius, s)
        H = signed_curvatures(mesh, region, AveragedArea())
        exact = 1.0 / radius if region != 0 else -1.0 / radius
        err = float(np.mean(np.abs(H - exact)))
        rows.append((int(s), err))
    return rows


# -- convergence table ----------------------------------------------------------------


@dataclass
class ConvergenceRow:
    subdivision: int
    faces_initial: int
    angular_deviation_deg: float
    converged: bool = True
    steps: int = 0
    exterior_angle_deg: float = float("nan")
    extra: dict = field(default_factory=dict)


def _study_row(n, spec_kwargs, config):
    from .flow import run_to_equilibrium
    from .scenes import DoubleBubbleSpec, make_double_bubble

    mesh = make_double_bubble(DoubleBubbleSpec(subdivision=n, **spec_kwargs))
    faces = mesh.n_faces
    result = run_to_equilibrium(mesh, config)
    if result.blowup is not None:
        raise result.blowup
    final = result.mesh
    row = ConvergenceRow(
        subdivision=int(n),
        faces_initial=int(faces),
        angular_deviation_deg=rms_angular_deviation(final),
        converged=result.converged,
        steps=result.steps,
        exterior_angle_deg=wedge_angle_means(final).get(0, float("nan")),
    )
    if not result.converged:
        log.warning("subdivision %d did not reach equilibrium in %d steps", n, result.steps)
    return row


def convergence_study(subdivisions, config, spec_kwargs=None, workers: int = 1) -> list:
    """Run the double bubble to equilibrium at each subdivision, in input order."""
    if not isinstance(config.strategy, AveragedArea):
        raise ValueError("the convergence study uses the averaged strategy")
    spec_kwargs = dict(spec_kwargs or {})
    subdivisions = [int(n) for n in subdivisions]
    if workers > 1 and len(subdivisions) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_study_row, n, spec_kwargs, config) for n in subdivisions]
            return [f.result() for f in futures]
    return [_study_row(n, spec_kwargs, config) for n in subdivisions]


def require_converged(rows) -> None:
    bad = [r.subdivision for r in rows if not r.converged]
    if bad:
        raise NotConverged(f"subdivisions {bad} did not converge")


def write_convergence_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["subdivision", "faces_initial", "angular_deviation_deg"])
        for r in rows:
            w.writerow([r.subdivision, r.faces_initial, f"{r.angular_deviation_deg:.6f}"])


def deviation_ratios(rows) -> list:
    d = [r.angular_deviation_deg for r in rows]
    return [b / a for a, b in zip(d, d[1:])]


def rms(values) -> float:
    v = np.asarray(values, dtype=float)
    return float(math.sqrt(np.mean(v * v)))
