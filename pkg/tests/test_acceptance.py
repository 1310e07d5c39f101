"""Acceptance criteria 1-10.

Each test records exactly one ``PASS``/``FAIL`` line (also listed in the
terminal summary) at the criterion's own tolerance, then asserts it.
Runtimes are wall-clock on the machine running the suite and exclude
interpreter start-up and module imports.
"""

import math
import time

import numpy as np
import pytest
import yaml
from scipy import integrate, stats

from _oracles import spherical_cap, subdivision_area, weibull_mc_total
from lcfpof import cli
from lcfpof.bootstrap import (
    BootstrapEnsemble,
    load_ensemble,
    read_pof_csv,
    run_bootstrap,
    sample_lives,
    simulate_dataset,
    total_pof,
    weibull_cdf,
)
from lcfpof.calibration import (
    CalibrationProblem,
    FitOptions,
    FittedModel,
    SpecimenRecord,
    load_fitted,
    mle_fit,
    specimen_eta,
)
from lcfpof.errors import LcfError
from lcfpof.field_mesh import (
    FieldSet,
    SurfaceMesh,
    build_quadrature,
    extract_surface,
    load_model,
    read_vtk_field,
)
from lcfpof.hazard import (
    WeibullLife,
    evaluate_ndet_field,
    hazard_face_values,
    hazard_rate,
    pof,
    scale_eta,
)
from lcfpof.material import CMB_NAMES, MaterialTables, PointParams, params_at
from lcfpof.strain_life import CmbPoint, cmb_strain, solve_ndet
from lcfpof.synthetic import blade_case, blade_material, box_tet10, simulate_specimens, specimen_design

BLADE_SAMPLES = 2000


# ---------------------------------------------------------------- shared synthetic blade run


@pytest.fixture(scope="module")
def blade_run(tmp_path_factory):
    """Demo blade case, calibrated, assessed with B=2000 at two worker counts."""
    d = tmp_path_factory.mktemp("blade")
    assert cli.main(["demo", str(d), "--samples", str(BLADE_SAMPLES)]) == 0
    cfg = str(d / "config.yaml")
    assert cli.main(["calibrate", cfg]) == 0
    runs = {}
    for workers in (1, 4):
        out = d / f"out_w{workers}"
        t0 = time.perf_counter()
        code = cli.main(["assess", cfg, "--workers", str(workers), "--output-dir", str(out)])
        runs[workers] = (code, time.perf_counter() - t0, out)
    return d, runs


# ---------------------------------------------------------------- 1


def test_criterion_1_cmb_round_trip(acceptance):
    rng = np.random.default_rng(20240101)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        E = rng.uniform(5e4, 3e5)
        p = PointParams(E * rng.uniform(2e-3, 2e-2), rng.uniform(-0.2, -0.03), rng.uniform(0.02, 1.5),
                        rng.uniform(-0.9, -0.35), E)
        N = 10 ** rng.uniform(0, 8)
        worst = max(worst, abs(solve_ndet(CmbPoint(float(cmb_strain(N, p)), p)) / N - 1))
    basquin = solve_ndet(CmbPoint(0.005, PointParams(0.01, -0.1, 0.0, -0.5, 1.0)))
    coffin = solve_ndet(CmbPoint(0.05, PointParams(0.0, -0.1, 0.5, -0.5, 1.0)))
    elapsed = time.perf_counter() - t0
    e_b, e_c = abs(basquin / 512 - 1), abs(coffin / 50 - 1)
    ok = worst <= 1e-8 and e_b <= 1e-10 and e_c <= 1e-10 and elapsed < 1.0
    acceptance(1, ok, f"round-trip max rel err {worst:.2e} (tol 1e-8); Basquin-only {e_b:.1e}, "
                      f"Coffin-only {e_c:.1e} (tol 1e-10); {elapsed:.3f} s (< 1 s)")


# ---------------------------------------------------------------- 2


def test_criterion_2_uniform_field_eta(acceptance):
    t0 = time.perf_counter()
    # elastic Ramberg-Osgood branch, strain chosen so that N_det = 1000 everywhere
    tables = MaterialTables([500.0], [1000.0], [-0.1], [0.4], [-0.6], [2e5], [1e30], [0.5],
                            amplitude_factor=0.5)
    eps = float(cmb_strain(1000.0, params_at(tables, 500.0)))
    side = 1.0 / math.sqrt(3.0)  # cube surface area 2
    mesh, _, _ = box_tet10(2, 2, 2, size=(side, side, side))
    stress = np.zeros((mesh.n_nodes, 6))
    stress[:, 0] = 2.0 * 2e5 * eps  # range; amplitude = 0.5 * range
    quad = build_quadrature(extract_surface(mesh), FieldSet(np.full(mesh.n_nodes, 500.0), stress))
    eta = scale_eta(quad, evaluate_ndet_field(quad, tables), 2.0)
    elapsed = time.perf_counter() - t0
    err = abs(eta / (1000.0 / math.sqrt(2.0)) - 1)
    acceptance(2, err <= 1e-10 and elapsed < 1.0,
               f"eta {eta:.10f} vs 707.1067811865 rel err {err:.1e} (tol 1e-10); {elapsed:.3f} s (< 1 s)")


# ---------------------------------------------------------------- 3


def test_criterion_3_size_effect(acceptance):
    mesh, fields, _ = blade_case(8, 2, 6)
    surf = extract_surface(mesh)
    double = SurfaceMesh.from_faces(surf.coords, np.concatenate([surf.faces, surf.faces]))
    q1, q2 = build_quadrature(surf, fields), build_quadrature(double, fields)
    nd1 = evaluate_ndet_field(q1, blade_material(), clamp_life=True)
    nd2 = evaluate_ndet_field(q2, blade_material(), clamp_life=True)
    errs = {m: abs(scale_eta(q2, nd2, m) / scale_eta(q1, nd1, m) / 2 ** (-1 / m) - 1)
            for m in (1.0, 1.5, 3.0, 10.0)}
    worst = max(errs.values())
    acceptance(3, worst <= 1e-12, "eta ratio vs 2^(-1/m) for m in {1, 1.5, 3, 10}: "
                                  f"max rel err {worst:.1e} (tol 1e-12)")


# ---------------------------------------------------------------- 4


def test_criterion_4_hazard_cdf_consistency(acceptance):
    rng = np.random.default_rng(4)
    mesh, fields, _ = blade_case(4, 1, 3)
    quad = build_quadrature(extract_surface(mesh), fields)
    worst = 0.0
    for _ in range(50):
        nd = 10 ** rng.uniform(2, 6, len(quad))
        m = rng.uniform(1.0, 15.0)
        eta = scale_eta(quad, nd, m)
        n = eta * 10 ** rng.uniform(-1.5, 0.4)
        H, _ = integrate.quad(lambda s: hazard_rate(s, quad, nd, m), 0.0, n, epsabs=0.0, epsrel=1e-12,
                              limit=200)
        worst = max(worst, abs(-math.expm1(-H) - pof(n, WeibullLife(m, eta))))
    acceptance(4, worst <= 1e-8, f"50 random (m, eta, n): max |1-exp(-int h) - pof| {worst:.1e} (tol 1e-8)")


# ---------------------------------------------------------------- 5


def test_criterion_5_quadrature(acceptance):
    cap = spherical_cap(8)
    oracle = subdivision_area(cap.coords, cap.faces, level=16)
    cap_err = abs(build_quadrature(cap, degree=4).total_area() / oracle - 1)
    # flat straight-sided faces of assorted shapes and orientations
    rng = np.random.default_rng(5)
    flat_err = 0.0
    for _ in range(20):
        v = rng.normal(size=(3, 3))
        mids = [(v[0] + v[1]) / 2, (v[1] + v[2]) / 2, (v[2] + v[0]) / 2]
        surf = SurfaceMesh.from_faces(np.vstack([v, mids]), [[0, 1, 2, 3, 4, 5]])
        exact = 0.5 * np.linalg.norm(np.cross(v[1] - v[0], v[2] - v[0]))
        for degree in (2, 4, 6):
            flat_err = max(flat_err, abs(build_quadrature(surf, degree=degree).total_area() / exact - 1))
    ok = cap_err <= 1e-5 and flat_err <= 1e-12
    acceptance(5, ok, f"cap degree-4 area rel err {cap_err:.1e} vs 256-fold subdivision (tol 1e-5); "
                      f"flat faces {flat_err:.1e} (tol 1e-12)")


# ---------------------------------------------------------------- 6


def test_criterion_6_mle_recovery(acceptance):
    truth = blade_material()
    m_true = 10.0
    design = specimen_design(truth, 100, lives=(2.0, 1e8))  # 2 knots x 100 = 200 specimens
    t0 = time.perf_counter()
    good, notes = 0, []
    for seed in range(10):
        recs = simulate_specimens(truth, m_true, design, seed=seed, runout_prob=0.1)
        try:
            fit = mle_fit(CalibrationProblem(recs, truth))
        except LcfError as exc:
            notes.append(f"seed {seed}: {exc}")
            continue
        m_err = abs(fit.shape_m / m_true - 1)
        t_err = max(np.max(np.abs(getattr(fit.tables, n) / getattr(truth, n) - 1)) for n in CMB_NAMES)
        notes.append(f"seed {seed}: m {fit.shape_m:.2f}, worst table {t_err:.1%}")
        good += m_err <= 0.15 and t_err <= 0.10
    elapsed = time.perf_counter() - t0
    print("\n".join(notes))
    acceptance(6, good >= 9 and elapsed < 60.0,
               f"{good}/10 seeds within m +-15% and CMB tables +-10% (need >= 9); {elapsed:.1f} s (< 60 s)")


# ---------------------------------------------------------------- 7


MINI_T = 900.0
MINI_M = 10.0
MINI_REF = SpecimenRecord(0.006, MINI_T, 1.0, 1.0, False)  # reference feature inside the tested range


def mini_tables():
    return MaterialTables([MINI_T], [1200.0], [-0.09], [0.3], [-0.62], [190000.0], [1100.0], [0.13])


def mini_study(k, truth, design, eta_true):
    recs = simulate_specimens(truth, MINI_M, design, seed=10_000 + k, runout_prob=0.1)
    problem = CalibrationProblem(recs, truth)
    try:
        fit = mle_fit(problem)
        ens = run_bootstrap(fit, problem, 200, seed=k)
    except LcfError:
        return False
    etas = [specimen_eta(MINI_REF, s.tables, s.shape_m) for s in ens.samples]
    lo, hi = np.percentile(etas, [5.0, 95.0])
    return lo <= eta_true <= hi


def test_criterion_7_bootstrap_sanity(acceptance):
    t0 = time.perf_counter()
    truth = mini_tables()
    # KS of the simulator against the analytic Weibull law, 1e5 draws
    rec = SpecimenRecord(0.006, MINI_T, 1.0, 1.0, False)
    eta1 = specimen_eta(rec, truth, MINI_M)
    n_draws = 100_000
    from lcfpof.bootstrap import sample_rng

    lives = simulate_dataset(FittedModel(MINI_M, truth, 0.0), [rec] * n_draws, sample_rng(7, 0))
    D = stats.kstest([r.cycles for r in lives], stats.weibull_min(MINI_M, scale=eta1).cdf).statistic
    D_crit = stats.kstwo.ppf(0.99, n_draws)
    # coverage of nominal 90 % percentile bands over repeated mini-studies
    design = specimen_design(truth, 25, lives=(2.0, 1e8))
    eta_true = specimen_eta(MINI_REF, truth, MINI_M)
    covered = sum(mini_study(k, truth, design, eta_true) for k in range(100))
    elapsed = time.perf_counter() - t0
    ok = D < D_crit and covered >= 80 and elapsed < 600.0
    acceptance(7, ok, f"KS D {D:.5f} < 1% critical {D_crit:.5f} at 1e5 draws; 90% bands cover true eta "
                      f"in {covered}/100 mini-studies (need >= 80, B=200); {elapsed:.0f} s (< 600 s)")


# ---------------------------------------------------------------- 8


def test_criterion_8_total_pof(acceptance, blade_run):
    d, runs = blade_run
    code, _, out = runs[1]
    assert code == 0
    fit = load_fitted(d / "out" / "fitted_model.json")
    mesh, fields = load_model(d / "blade.model")
    quad = build_quadrature(extract_surface(mesh), fields)
    eta = scale_eta(quad, evaluate_ndet_field(quad, fit.tables, clamp_life=True), fit.shape_m)
    grid = np.linspace(0.0, 2.0 * eta, 81)
    deg = total_pof(BootstrapEnsemble.degenerate(fit, 3), quad, grid, clamp_life=True)
    exact = np.array_equal(deg.total, weibull_cdf(grid, fit.shape_m, eta))

    ens = load_ensemble(out / "ensemble.json")
    curve = read_pof_csv(out / "pof_curve.csv")
    shapes, etas = sample_lives(ens, quad, clamp_life=True)
    trials = 1_000_000
    p_mc, _ = weibull_mc_total(shapes, etas, curve["n"], trials, np.random.default_rng(8))
    p = curve["total"]
    se = np.sqrt(p * (1.0 - p) / trials)  # standard error of the MC estimate at the tested value
    z = np.where(se > 0, np.abs(p_mc - p) / np.where(se > 0, se, 1.0), np.where(p_mc == p, 0.0, np.inf))
    ok = exact and len(ens) >= 0.9 * BLADE_SAMPLES and float(z.max()) <= 3.0
    acceptance(8, ok, f"degenerate ensemble equals single CDF exactly: {exact}; {len(ens)}-sample blade total "
                      f"PoF vs 1e6-trial MC: max |z| {z.max():.2f} over {p.size} grid points (limit 3)")


# ---------------------------------------------------------------- 9


def test_criterion_9_determinism_and_runtime(acceptance, blade_run):
    d, runs = blade_run
    (c1, t1, o1), (c4, t4, o4) = runs[1], runs[4]
    files = ("pof_curve.csv", "hazard_field.vtk", "assess_summary.yaml", "ensemble.json")
    same = c1 == 0 and c4 == 0 and all((o1 / f).read_bytes() == (o4 / f).read_bytes() for f in files)
    summary = yaml.safe_load((o1 / "assess_summary.yaml").read_text())
    points = summary["quadrature_points"]
    samples = summary["ensemble"]["requested"]
    ok = same and points >= 20_000 and samples == BLADE_SAMPLES and max(t1, t4) < 300.0
    acceptance(9, ok, f"assess B={samples}, {points} quadrature points: outputs byte-identical for "
                      f"workers 1 and 4: {same}; runtimes {t1:.0f} s / {t4:.0f} s (< 300 s)")


# ---------------------------------------------------------------- 10


def test_criterion_10_hazard_field(acceptance, blade_run):
    d, runs = blade_run
    _, _, out = runs[1]
    fit = load_fitted(d / "out" / "fitted_model.json")
    mesh, fields = load_model(d / "blade.model")
    quad = build_quadrature(extract_surface(mesh), fields)
    nd = evaluate_ndet_field(quad, fit.tables, clamp_life=True)
    summary = yaml.safe_load((out / "assess_summary.yaml").read_text())
    n = summary["hazard_cycles"]
    values = hazard_face_values(n, quad, nd, fit.shape_m)
    agg_err = 0.0
    for m, frac in ((fit.shape_m, 0.1), (fit.shape_m, 1.0), (2.0, 0.5), (1.0, 0.3)):
        eta = scale_eta(quad, nd, m)
        v = hazard_face_values(frac * eta, quad, nd, m)
        h = hazard_rate(frac * eta, quad, nd, m)
        agg_err = max(agg_err, abs(math.fsum(v * quad.face_areas()) / h - 1))
    stored = read_vtk_field(out / "hazard_field.vtk")["cell_data"]["hazard_density"]
    bit_exact = np.array_equal(stored, values)
    ok = agg_err <= 1e-8 and bit_exact
    acceptance(10, ok, f"sum(face hazard x face area) vs hazard_rate max rel err {agg_err:.1e} (tol 1e-8); "
                       f"exported field bit-exact on read-back: {bit_exact}")
