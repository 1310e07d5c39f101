"""Synthetic inputs: structured quadratic-tet meshes, a blade-like test case, specimen data.

Used by the test suite and by ``lcfpof demo``; nothing here is needed for
assessing real models.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .field_mesh import TET10_EDGES, FieldSet, Mesh
from .material import MaterialTables
from .strain_life import cmb_strain


@dataclass
class MeshCounts:
    vertices: int
    edges: int
    elements: int

    @property
    def nodes(self):
        return self.vertices + self.edges


def kuhn_counts(nx, ny, nz) -> MeshCounts:
    """Closed-form vertex/edge/element counts of the Kuhn-triangulated grid."""
    v = (nx + 1) * (ny + 1) * (nz + 1)
    axis = nx * (ny + 1) * (nz + 1) + (nx + 1) * ny * (nz + 1) + (nx + 1) * (ny + 1) * nz
    face_diag = nx * ny * (nz + 1) + nx * (ny + 1) * nz + (nx + 1) * ny * nz
    body = nx * ny * nz
    return MeshCounts(v, axis + face_diag + body, 6 * nx * ny * nz)


def box_tet10(nx, ny, nz, size=(1.0, 1.0, 1.0), mapping=None):
    """Structured box meshed into 10-node tets (6 per hex, Kuhn split).

    ``mapping`` takes parameter points ``(k, 3)`` in the unit cube and returns
    physical points; midside nodes are mapped edge midpoints, so a nonlinear
    mapping gives curved elements.  Returns ``(mesh, counts, params)`` where
    ``params`` are the unit-cube coordinates of every node.
    """
    g = np.stack(
        np.meshgrid(np.arange(nx + 1), np.arange(ny + 1), np.arange(nz + 1), indexing="ij"), axis=-1
    ).reshape(-1, 3)

    def vid(i, j, k):
        return (i * (ny + 1) + j) * (nz + 1) + k

    hexes = np.stack(
        np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij"), axis=-1
    ).reshape(-1, 3)
    tets = []
    for perm in itertools.permutations(range(3)):
        corner = np.zeros(3, dtype=int)
        path = [corner.copy()]
        for ax in perm:
            corner[ax] += 1
            path.append(corner.copy())
        ids = [vid(*(hexes + p).T) for p in path]
        tets.append(np.stack(ids, axis=1))
    tets = np.concatenate(tets).astype(np.int64)

    scale = np.array([nx, ny, nz], dtype=float)
    par_v = g / scale
    # orientation from parameter-space volumes (the mapping is orientation preserving)
    x = par_v[tets]
    det = np.einsum("ij,ij->i", np.cross(x[:, 1] - x[:, 0], x[:, 2] - x[:, 0]), x[:, 3] - x[:, 0])
    neg = det < 0
    tets[neg] = tets[neg][:, [0, 2, 1, 3]]

    edges = np.sort(tets[:, TET10_EDGES], axis=2).reshape(-1, 2)
    uniq, inverse = np.unique(edges, axis=0, return_inverse=True)
    mid_ids = g.shape[0] + inverse.reshape(-1, 6)
    par_mid = 0.5 * (par_v[uniq[:, 0]] + par_v[uniq[:, 1]])
    params = np.concatenate([par_v, par_mid])

    if mapping is None:
        coords = params * np.asarray(size, dtype=float)
    else:
        coords = np.asarray(mapping(params), dtype=float)
    elements = np.concatenate([tets, mid_ids], axis=1)
    n_nodes = params.shape[0]
    mesh = Mesh(
        node_ids=np.arange(1, n_nodes + 1, dtype=np.int64),
        coords=coords,
        element_ids=np.arange(1, elements.shape[0] + 1, dtype=np.int64),
        elements=elements,
    )
    return mesh, kuhn_counts(nx, ny, nz), params


def single_tet10(T=300.0):
    """Unit right tetrahedron with straight edges and uniform temperature."""
    v = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])
    mids = 0.5 * (v[TET10_EDGES[:, 0]] + v[TET10_EDGES[:, 1]])
    coords = np.concatenate([v, mids])
    mesh = Mesh(np.arange(1, 11), coords, np.array([1]), np.arange(10)[None, :])
    return mesh, FieldSet(np.full(10, float(T)), np.zeros((10, 6)))


# ---------------------------------------------------------------- blade


def blade_mapping(chord=40.0, thickness=4.0, span=60.0, camber=4.0, twist_deg=25.0):
    """Unit cube (chord, thickness, span) -> cambered, tapered, twisted plate."""

    def f(p):
        u, v, w = p[:, 0], p[:, 1], p[:, 2]
        t = thickness * (0.35 + 0.65 * np.sin(np.pi * (0.1 + 0.8 * u)))
        x = chord * (u - 0.5)
        y = camber * np.sin(np.pi * u) + t * (v - 0.5)
        th = np.deg2rad(twist_deg) * w
        return np.stack(
            [x * np.cos(th) - y * np.sin(th), x * np.sin(th) + y * np.cos(th), span * w], axis=1
        )

    return f


def blade_fields(params, peak_stress=1300.0):
    """Temperature (K) and operating-state stress (MPa) on blade parameter coords."""
    u, v, w = params[:, 0], params[:, 1], params[:, 2]
    T = 850.0 + 300.0 * np.sin(np.pi * u) * (0.4 + 0.6 * np.sin(np.pi * w)) + 40.0 * v
    root = (1.0 - w) ** 1.5
    hot = np.exp(-(((u - 0.15) / 0.12) ** 2) - ((w - 0.1) / 0.15) ** 2)
    szz = peak_stress * (0.35 * root + 0.55 * hot) * (0.8 + 0.4 * v)
    sxx = 0.25 * szz * np.cos(np.pi * u)
    sxz = 0.08 * peak_stress * root * np.sin(2 * np.pi * u)
    stress = np.stack([sxx, np.zeros_like(u), szz, np.zeros_like(u), 0.02 * szz, sxz], axis=1)
    return FieldSet(T, stress)


def blade_case(nx=30, ny=3, nz=24, peak_stress=1300.0):
    """Blade-like curved model with nodal fields; returns ``(mesh, fields, counts)``."""
    mesh, counts, params = box_tet10(nx, ny, nz, mapping=blade_mapping())
    return mesh, blade_fields(params, peak_stress), counts


def blade_material() -> MaterialTables:
    """Representative nickel-alloy-like tables in MPa, two knots."""
    return MaterialTables(
        temperature_knots=[800.0, 1300.0],
        sigma_f=[1300.0, 1100.0],
        b_exp=[-0.09, -0.10],
        eps_f=[0.25, 0.35],
        c_exp=[-0.65, -0.60],
        young=[200000.0, 170000.0],
        ro_K=[1200.0, 1000.0],
        ro_n=[0.12, 0.14],
        amplitude_factor=0.5,
    )


# ---------------------------------------------------------------- specimens


def specimen_design(tables: MaterialTables, per_knot: int, *, lives=(50.0, 5e5),
                    areas=(0.5, 1.0, 2.0), temperatures=None):
    """Test conditions spread log-uniformly in life between ``lives`` at each temperature.

    Strain amplitudes come from the CMB curve of ``tables`` so every
    condition sits in a well-identified part of the strain-life curve.
    Returns a list of ``(eps_a, temperature, gauge_area)``.
    """
    from .material import params_at

    temps = tables.temperature_knots if temperatures is None else temperatures
    out = []
    for T in temps:
        p = params_at(tables, T)
        N = np.geomspace(lives[0], lives[1], per_knot)
        eps = cmb_strain(N, p)
        for i, e in enumerate(np.atleast_1d(eps)):
            out.append((float(e), float(T), float(areas[i % len(areas)])))
    return out


def simulate_specimens(tables: MaterialTables, m: float, design, seed: int, runout_prob=0.1):
    """Weibull lives at each design condition with per-record type-I censoring.

    Each record gets a test-stop limit at the ``1 - runout_prob`` quantile
    of its own life distribution, so about ``runout_prob`` of the records
    are runouts.
    """
    from .calibration import SpecimenRecord, specimen_eta

    rng = np.random.default_rng(seed)
    out = []
    for eps, T, area in design:
        rec = SpecimenRecord(eps, T, area, 1.0, False)
        eta = specimen_eta(rec, tables, m)
        u = rng.random()
        while u == 0.0:
            u = rng.random()
        life = eta * (-math.log(u)) ** (1.0 / m)
        limit = eta * (-math.log(runout_prob)) ** (1.0 / m) if runout_prob > 0 else math.inf
        if life > limit:
            out.append(SpecimenRecord(eps, T, area, limit, True))
        else:
            out.append(SpecimenRecord(eps, T, area, life, False))
    return out
