"""End-to-end acceptance checks; each prints one PASS/FAIL line."""

import csv
import functools

import numpy as np
import pytest

from plateau.cli import main
from plateau.curvature import (
    AveragedArea,
    ConstantEdge,
    NaivePerRegion,
    junction_dihedral_angles,
    junction_vertex_area,
    pointwise_curvature,
)
from plateau.flow import FlowConfig, run_to_equilibrium
from plateau.metrics import rms_angular_deviation, sphere_curvature_error, wedge_angle_means
from plateau.mmesh import extract_junctions
from plateau.scenes import (
    DoubleBubbleSpec,
    make_double_bubble,
    make_y_junction_strip,
    stretch_sheet,
    tangential_jitter,
)

from conftest import record_acceptance

pytestmark = pytest.mark.acceptance

TABLE_LEVELS = [16, 24, 48, 96]
TABLE_REFERENCE = [12.79, 9.35, 4.15, 2.65]
BIAS_LEVEL = 48
DRIFT_LEVEL = 24
RADIUS = 1.0


def verdict(ok):
    return "PASS" if ok else "FAIL"


@functools.lru_cache(maxsize=None)
def table1(tmp_root):
    out = f"{tmp_root}/table1"
    code = main(["reproduce", "table1", "--subdivisions", ",".join(map(str, TABLE_LEVELS)), "--out-dir", out])
    with open(f"{out}/table1.csv") as fh:
        rows = list(csv.DictReader(fh))
    return code, {int(r["subdivision"]): float(r["angular_deviation_deg"]) for r in rows}


@functools.lru_cache(maxsize=None)
def constant_edge_run():
    mesh = make_double_bubble(DoubleBubbleSpec(BIAS_LEVEL))
    config = FlowConfig(strategy=ConstantEdge(0.5), cfl=0.5, disp_tol=1e-4, max_steps=100000)
    return run_to_equilibrium(mesh, config, log_every=100)


@functools.lru_cache(maxsize=None)
def stretched_runs():
    mesh = stretch_sheet(make_double_bubble(DoubleBubbleSpec(DRIFT_LEVEL)), (1, 0), 2.0)
    out = {}
    for strategy in (NaivePerRegion(), AveragedArea()):
        config = FlowConfig(strategy=strategy, cfl=0.5, max_steps=100000)
        out[str(strategy)] = run_to_equilibrium(mesh, config, log_every=100)
    return out


@functools.lru_cache(maxsize=None)
def jittered_run():
    mesh = tangential_jitter(make_double_bubble(DoubleBubbleSpec(16)), 0.02, seed=11)
    return run_to_equilibrium(mesh, FlowConfig(cfl=0.5, max_steps=100000), log_every=1)


@pytest.fixture(scope="module")
def tmp_root(tmp_path_factory):
    return str(tmp_path_factory.mktemp("acceptance"))


def test_criterion_1_convergence_trend(tmp_root):
    code, rows = table1(tmp_root)
    devs = [rows[n] for n in TABLE_LEVELS]
    decreasing = all(b < a for a, b in zip(devs, devs[1:]))
    windows = all(ref / 2 <= d <= ref * 2 for d, ref in zip(devs, TABLE_REFERENCE))
    ok = code == 0 and decreasing and devs[-1] < 5.0 and devs[0] >= 3.0 * devs[-1] and windows
    record_acceptance(f"ACCEPTANCE 1: {verdict(ok)} rms deg by n { {n: round(d, 2) for n, d in zip(TABLE_LEVELS, devs)} }, "
                      f"coarse/fine {devs[0] / devs[-1]:.2f}")
    assert code == 0
    assert decreasing
    assert devs[-1] < 5.0
    assert devs[0] >= 3.0 * devs[-1]
    assert windows


def test_criterion_2_constant_edge_bias(tmp_root):
    result = constant_edge_run()
    exterior = wedge_angle_means(result.mesh)[0]
    const_rms = rms_angular_deviation(result.mesh)
    _, rows = table1(tmp_root)
    avg_rms = rows[BIAS_LEVEL]
    ok = result.converged and exterior > 125.0 and avg_rms * 2.0 <= const_rms
    record_acceptance(f"ACCEPTANCE 2: {verdict(ok)} n={BIAS_LEVEL} constant:0.5 exterior mean {exterior:.2f} deg, "
                      f"rms {const_rms:.2f} deg; averaged rms {avg_rms:.2f} deg")
    assert result.converged
    assert exterior > 125.0
    assert avg_rms * 2.0 <= const_rms


def test_criterion_3_naive_instability():
    runs = stretched_runs()
    naive, avg = runs["naive"], runs["averaged"]
    naive_blowup = naive.blowup is not None and naive.blowup.step <= 5000
    naive_drift = naive.centroid_drift
    naive_ok = naive_blowup or naive_drift > 0.1 * RADIUS
    avg_ok = avg.converged and avg.blowup is None and avg.centroid_drift < 0.01 * RADIUS
    record_acceptance(f"ACCEPTANCE 3: {verdict(naive_ok and avg_ok)} n={DRIFT_LEVEL} naive blowup={naive_blowup} "
                      f"drift {naive_drift:.4f} r; averaged converged={avg.converged} drift {avg.centroid_drift:.4f} r")
    assert naive_ok
    assert avg_ok


def test_criterion_4_curvature_oracle():
    errs = [e for _, e in sphere_curvature_error([2, 3, 4, 5])]
    ok = all(b < a for a, b in zip(errs, errs[1:])) and errs[-1] < 0.02
    record_acceptance(f"ACCEPTANCE 4: {verdict(ok)} mean |H-1| s=2..5 {[f'{e:.2e}' for e in errs]}")
    assert all(b < a for a, b in zip(errs, errs[1:]))
    assert errs[-1] < 0.02


def test_criterion_5_stretched_y():
    before = make_y_junction_strip()
    after = stretch_sheet(before, (1, 2), 2.0)
    jb, ja = extract_junctions(before), extract_junctions(after)
    changed_ok, steady_ok, equal_ok = True, True, True
    worst_steady, least_changed = 0.0, np.inf
    for v in jb.vertices:
        if before.fixed[v]:
            continue
        for r in (1, 2, 3):
            h0 = pointwise_curvature(before, jb, int(v), r, NaivePerRegion()).H
            h1 = pointwise_curvature(after, ja, int(v), r, NaivePerRegion()).H
            rel = abs(h1 - h0) / abs(h0)
            if r == 3:
                worst_steady = max(worst_steady, rel)
                steady_ok &= rel < 1e-12
            else:
                least_changed = min(least_changed, rel)
                changed_ok &= rel > 0.01
        for mesh, js in ((before, jb), (after, ja)):
            areas = [junction_vertex_area(mesh, js, int(v), r, AveragedArea()) for r in (1, 2, 3)]
            equal_ok &= areas[0] == areas[1] == areas[2]
    ok = changed_ok and steady_ok and equal_ok
    record_acceptance(f"ACCEPTANCE 5: {verdict(ok)} naive bounding-region change >= {least_changed:.3f}, "
                      f"third region change {worst_steady:.1e}, averaged areas equal={equal_ok}")
    assert changed_ok and steady_ok and equal_ok


def _all_runs(tmp_root):
    runs = {"constant n48": constant_edge_run(), "jittered averaged n16": jittered_run()}
    runs.update({f"stretched {k} n{DRIFT_LEVEL}": v for k, v in stretched_runs().items()})
    return runs


def test_criterion_6_volume_conservation(tmp_root):
    errors = {name: run.max_volume_error() for name, run in _all_runs(tmp_root).items()}
    logged = sum(len(run.reports) for run in _all_runs(tmp_root).values())
    worst = max(errors.values())
    ok = worst <= 1e-9
    record_acceptance(f"ACCEPTANCE 6: {verdict(ok)} worst relative volume error {worst:.1e} over {logged} logged steps")
    assert ok


def test_criterion_7_angle_sums(tmp_root):
    meshes = [make_double_bubble(DoubleBubbleSpec(n)) for n in (16, 24, 48)]
    meshes += [make_y_junction_strip(), make_y_junction_strip((90, 90, 180)), make_y_junction_strip((100, 125, 135))]
    meshes += [stretch_sheet(meshes[0], (1, 0), 2.0), stretch_sheet(meshes[0], (1, 2), 2.0)]
    meshes += [run.mesh for run in _all_runs(tmp_root).values()]
    worst = 0.0
    for mesh in meshes:
        js = extract_junctions(mesh)
        for e in range(len(js)):
            worst = max(worst, abs(junction_dihedral_angles(mesh, js, e).sum() - 360.0))
    ok = worst < 1e-9
    record_acceptance(f"ACCEPTANCE 7: {verdict(ok)} worst |angle sum - 360| {worst:.1e} deg over {len(meshes)} meshes")
    assert ok
