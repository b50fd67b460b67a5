"""Volume-constrained surface-tension flow on multi-material meshes.

Each step moves vertices with the tension velocity

    u_v = -(sigma / 2) * sum_R K_R(v) / A(v, R)

over the regions incident to ``v`` (every interface is seen by two
regions, hence the half).  Enclosed volumes are held fixed by removing
the components of ``u`` along the volume gradients, then restoring the
volumes exactly with a few Newton iterations.

Pressure directions are taken in the lumped-mass metric, ``g_R =
grad V_R / m`` with ``m`` the true vertex area (the mean of the incident
regions' mixed areas).  With this metric a constant pressure produces a
uniform normal speed, so the constraint force does not depend on how the
surface is triangulated.  ``metric="euclidean"`` uses ``g_R = grad V_R``.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .curvature import AreaStrategy, AveragedArea, normalizing_areas, region_curvature_data
from .errors import BlowupDetected, NumericalError, SingularConstraint, TopologyError
from .metrics import DiagnosticsReport, cluster_centroid, diagnostics
from .mmesh import MultiMaterialMesh, volume_gradient, write_mmm

log = logging.getLogger(__name__)

CONDITION_LIMIT = 1e12
NEWTON_ITERATIONS = 5
METRICS = ("mass", "euclidean")


@dataclass
class FlowConfig:
    sigma: float = 1.0
    cfl: float = 0.1
    max_steps: int = 20000
    disp_tol: float = 1e-5
    strategy: AreaStrategy = field(default_factory=AveragedArea)
    volume_tol: float = 1e-9
    constrain_volumes: bool = True
    metric: str = "mass"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not 0 < self.cfl <= 0.5:
            raise ValueError(f"cfl must lie in (0, 0.5], got {self.cfl}")
        if self.max_steps < 0:
            raise ValueError("max_steps must be non-negative")
        if not self.disp_tol > 0 or not self.volume_tol > 0:
            raise ValueError("tolerances must be positive")
        if self.metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}")

    def as_dict(self) -> dict:
        return {
            "sigma": self.sigma,
            "cfl": self.cfl,
            "max_steps": self.max_steps,
            "disp_tol": self.disp_tol,
            "strategy": str(self.strategy),
            "volume_tol": self.volume_tol,
            "constrain_volumes": self.constrain_volumes,
            "metric": self.metric,
        }


@dataclass
class StepResult:
    dt: float
    max_disp: float
    volumes_before: dict
    volumes_after: dict
    pressures: dict
    newton_iterations: int = 0


def tension_velocities(mesh: MultiMaterialMesh, strategy: AreaStrategy, sigma: float = 1.0, junctions=None) -> np.ndarray:
    """Surface-tension velocity per vertex; clamped vertices get zero."""
    A = normalizing_areas(mesh, strategy, junctions)
    u = np.zeros((mesh.n_vertices, 3))
    vr = mesh.vertex_regions
    for r in mesh.present_regions():
        K, _, _ = region_curvature_data(mesh, r)
        on = vr[:, r]
        u[on] += K[on] / A[on, r][:, None]
    u *= -0.25 * sigma
    u[mesh.fixed] = 0.0
    if not np.all(np.isfinite(u)):
        raise NumericalError("non-finite tension velocity")
    return u


def lumped_mass(mesh: MultiMaterialMesh) -> np.ndarray:
    """True vertex area: mean of the incident regions' mixed areas."""
    A = normalizing_areas(mesh, AveragedArea())
    return np.nanmean(A, axis=1)


def volume_gradients(mesh: MultiMaterialMesh, regions) -> list:
    return [region_curvature_data(mesh, r)[2] / 3.0 for r in regions]


def region_volumes(mesh: MultiMaterialMesh, regions) -> dict:
    """Enclosed volumes of ``regions`` from one pass over all faces."""
    p = mesh.positions
    t = mesh.triangles
    det = np.einsum("ij,ij->i", p[t[:, 0]], np.cross(p[t[:, 1]], p[t[:, 2]])) / 6.0
    R = mesh.region_count
    vol = np.bincount(mesh.labels[:, 0], weights=det, minlength=R) - np.bincount(mesh.labels[:, 1], weights=det, minlength=R)
    return {r: float(vol[r]) for r in regions}


def _directions(mesh, grads, metric, mass=None):
    if metric == "euclidean":
        g = [x.copy() for x in grads]
    else:
        if mass is None:
            mass = lumped_mass(mesh)
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = np.where(mass > 0, 1.0 / mass, 0.0)
        g = [x * inv[:, None] for x in grads]
    for x in g:
        x[mesh.fixed] = 0.0
    return g


def _gram(grads, dirs) -> np.ndarray:
    G = np.array([[np.vdot(a, b) for b in dirs] for a in grads])
    cond = np.linalg.cond(G) if G.size else 1.0
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise SingularConstraint(f"volume constraint matrix has condition {cond:.3e}")
    return G


def project_volumes(mesh: MultiMaterialMesh, velocities, metric: str = "mass", regions=None, mass=None):
    """Remove volume-changing components from ``velocities``.

    Returns ``(u', p)`` with ``u' = u - sum_R p_R g_R`` and
    ``<grad V_R, u'> = 0`` for every enclosed region.  ``p`` maps region
    to multiplier; with the mass metric it is a pressure in units of
    sigma times curvature, negative for a region being squeezed.
    """
    if regions is None:
        regions = mesh.enclosed_regions()
    u = np.array(velocities, dtype=np.float64)
    if not regions:
        raise ValueError("no enclosed regions to constrain")
    grads = volume_gradients(mesh, regions)
    dirs = _directions(mesh, grads, metric, mass)
    G = _gram(grads, dirs)
    d = np.array([np.vdot(a, u) for a in grads])
    p = np.linalg.solve(G, d)
    for pr, g in zip(p, dirs):
        u -= pr * g
    # one refinement pass against round-off
    d2 = np.array([np.vdot(a, u) for a in grads])
    if np.any(d2 != 0.0):
        dp = np.linalg.solve(G, d2)
        for q, g in zip(dp, dirs):
            u -= q * g
        p += dp
    return u, {r: float(x) for r, x in zip(regions, p)}


def _restore_volumes(mesh, regions, targets, dirs, tol):
    """Newton correction along fixed directions; returns iterations used."""
    for it in range(NEWTON_ITERATIONS + 1):
        vols = region_volumes(mesh, regions)
        res = np.array([vols[r] - targets[r] for r in regions])
        scale = np.array([abs(targets[r]) for r in regions])
        if np.all(np.abs(res) <= 1e-3 * tol * scale):
            return it
        if it == NEWTON_ITERATIONS:
            break
        grads = [volume_gradient(mesh, r) for r in regions]
        J = np.array([[np.vdot(a, b) for b in dirs] for a in grads])
        mu = np.linalg.solve(J, res)
        P = mesh.positions.copy()
        for m, g in zip(mu, dirs):
            P -= m * g
        mesh.set_positions(P)
    worst = float(np.max(np.abs(res) / scale))
    if worst > tol:
        raise NumericalError(f"volume correction stalled at relative error {worst:.3e}")
    return NEWTON_ITERATIONS


def step(mesh: MultiMaterialMesh, config: FlowConfig, targets=None) -> StepResult:
    """Advance ``mesh`` in place by one explicit step.

    ``targets`` maps enclosed region to its target volume; defaults to the
    current volumes.  Raises BlowupDetected (leaving the mesh untouched)
    when some vertex would move farther than the shortest edge.
    """
    regions = mesh.enclosed_regions() if config.constrain_volumes else []
    before = region_volumes(mesh, regions)
    if targets is None:
        targets = dict(before)
    u = tension_velocities(mesh, config.strategy, config.sigma)
    pressures = {}
    dirs = None
    if regions:
        mass = lumped_mass(mesh) if config.metric == "mass" else None
        u, pressures = project_volumes(mesh, u, config.metric, regions, mass)
        dirs = _directions(mesh, volume_gradients(mesh, regions), config.metric, mass)
    h_min = mesh.min_edge_length()
    dt = config.cfl * h_min * h_min / config.sigma
    max_disp = float(dt * np.sqrt(np.max(np.einsum("ij,ij->i", u, u)))) if len(u) else 0.0
    if not np.isfinite(max_disp) or max_disp > h_min:
        raise BlowupDetected(f"step displacement {max_disp:.3e} exceeds shortest edge {h_min:.3e}", max_disp=max_disp)
    iterations = 0
    if max_disp > 0.0:
        mesh.set_positions(mesh.positions + dt * u)
        if regions:
            iterations = _restore_volumes(mesh, regions, targets, dirs, config.volume_tol)
    after = region_volumes(mesh, regions)
    return StepResult(dt, max_disp, before, after, pressures, iterations)


@dataclass
class RunResult:
    """Outcome of :func:`run_to_equilibrium`; ``mesh`` is the final state."""

    mesh: MultiMaterialMesh
    reports: list
    converged: bool
    steps: int
    targets: dict
    blowup: BlowupDetected | None = None

    @property
    def final(self) -> DiagnosticsReport:
        return self.reports[-1]

    @property
    def centroid_drift(self) -> float:
        return self.reports[-1].centroid_drift

    def max_volume_error(self) -> float:
        worst = 0.0
        for rep in self.reports:
            for r, v in rep.volumes.items():
                worst = max(worst, abs(v - self.targets[r]) / abs(self.targets[r]))
        return worst


def _csv_row(rep: DiagnosticsReport, regions):
    return [rep.step, f"{rep.dt:.9e}", f"{rep.max_disp:.9e}", f"{rep.rms_deviation_deg:.9f}"] + [
        f"{rep.volumes[r]:.15e}" for r in regions
    ] + [f"{rep.centroid_drift:.9e}"]


def run_to_equilibrium(
    mesh: MultiMaterialMesh,
    config: FlowConfig,
    log_every: int = 1,
    log_path=None,
    snapshot_every: int = 0,
    snapshot_dir=None,
) -> RunResult:
    """Step a copy of ``mesh`` until the largest step displacement falls
    below ``disp_tol`` times the mean edge length, or ``max_steps``.

    Diagnostics are recorded at step 0, every ``log_every`` steps and at
    the last step.  A blow-up ends the run with ``blowup`` set.
    """
    mesh = mesh.copy()
    regions = mesh.enclosed_regions() if config.constrain_volumes else []
    targets = region_volumes(mesh, regions)
    origin = cluster_centroid(mesh)
    reports = []
    writer = None
    fh = None
    if log_path is not None:
        fh = open(log_path, "w", newline="")
        writer = csv.writer(fh)
        writer.writerow(["step", "dt", "maxDisp", "rmsDeviationDeg"] + [f"vol_{r}" for r in regions] + ["centroidDrift"])
    if snapshot_every and snapshot_dir is not None:
        Path(snapshot_dir).mkdir(parents=True, exist_ok=True)

    def record(k, dt, disp):
        rep = diagnostics(mesh, k, dt, disp, config.strategy, origin)
        reports.append(rep)
        if writer is not None:
            writer.writerow(_csv_row(rep, regions))
        return rep

    converged = False
    blowup = None
    k = 0
    res = None
    try:
        record(0, 0.0, 0.0)
        while k < config.max_steps:
            try:
                res = step(mesh, config, targets)
            except BlowupDetected as exc:
                exc.step = k + 1
                blowup = exc
                break
            except (NumericalError, SingularConstraint, TopologyError) as exc:
                blowup = BlowupDetected(f"geometry broke down: {exc}", step=k + 1)
                break
            k += 1
            converged = res.max_disp < config.disp_tol * mesh.mean_edge_length()
            if converged or k == config.max_steps or (log_every and k % log_every == 0):
                record(k, res.dt, res.max_disp)
            if snapshot_every and snapshot_dir is not None and k % snapshot_every == 0:
                write_mmm(mesh, Path(snapshot_dir) / f"step_{k:07d}.mmm")
            if converged:
                break
        if blowup is not None:
            log.warning("blow-up at step %d: %s", blowup.step, blowup)
            if reports[-1].step != k:
                try:
                    record(k, res.dt if res else 0.0, res.max_disp if res else 0.0)
                except Exception:  # a wrecked mesh may not be measurable
                    pass
        elif not converged:
            log.info("no equilibrium after %d steps", k)
    finally:
        if fh is not None:
            fh.close()
    return RunResult(mesh, reports, converged, k, targets, blowup)
