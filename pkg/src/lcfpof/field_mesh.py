"""Quadratic tetrahedral models: ingest, free-surface extraction, surface quadrature.

Model file format (plain text, one record per line, ``#`` starts a comment)::

    NODES <count>
    <id> <x> <y> <z>
    ...
    ELEMENTS <count>
    <id> <n1> ... <n10>
    ...
    FIELD temperature 1
    <node id> <T>
    ...
    FIELD stress 6
    <node id> <sxx> <syy> <szz> <sxy> <syz> <sxz>
    ...

Element node order: 4 vertices, then midside nodes of edges
(0,1) (1,2) (0,2) (0,3) (1,3) (2,3).  The vertex order must give a positive
Jacobian.  Both fields are required and must cover every node.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import DegenerateFaceError, ModelFormatError, NonManifoldError, ValidationError

log = logging.getLogger(__name__)

FIELD_ARITY = {"temperature": 1, "stress": 6}

# local (corner, corner, corner, mid, mid, mid) per tet face; mids follow edges c0c1, c1c2, c2c0
TET10_FACES = np.array(
    [
        [0, 1, 2, 4, 5, 6],
        [0, 1, 3, 4, 8, 7],
        [1, 2, 3, 5, 9, 8],
        [0, 2, 3, 6, 9, 7],
    ]
)
TET10_EDGES = np.array([[0, 1], [1, 2], [0, 2], [0, 3], [1, 3], [2, 3]])

VTK_QUADRATIC_TRIANGLE = 22


@dataclass(frozen=True, eq=False)
class Mesh:
    node_ids: np.ndarray  # (n,)
    coords: np.ndarray  # (n, 3)
    element_ids: np.ndarray  # (m,)
    elements: np.ndarray  # (m, 10) node indices (not ids)

    @property
    def n_nodes(self):
        return self.node_ids.size

    @property
    def n_elements(self):
        return self.element_ids.size


@dataclass(frozen=True, eq=False)
class FieldSet:
    temperature: np.ndarray  # (n,) kelvin
    stress: np.ndarray  # (n, 6) xx yy zz xy yz xz


@dataclass(frozen=True, eq=False)
class SurfaceMesh:
    """Outward oriented 6-node faces of the free surface.

    ``faces`` holds node indices into ``coords``; ``parent_element`` holds
    element indices into the originating mesh.
    """

    coords: np.ndarray
    faces: np.ndarray  # (F, 6)
    parent_element: np.ndarray
    parent_face_index: np.ndarray
    node_ids: np.ndarray | None = None
    element_ids: np.ndarray | None = None

    @property
    def n_faces(self):
        return self.faces.shape[0]

    @classmethod
    def from_faces(cls, coords, faces):
        """Surface made directly from coordinates and 6-node faces (no parent mesh)."""
        faces = np.asarray(faces, dtype=np.int64).reshape(-1, 6)
        idx = np.arange(faces.shape[0])
        return cls(np.asarray(coords, dtype=float), faces, idx, np.zeros_like(idx))


class QuadPoint(NamedTuple):
    face_id: int
    barycentric_coords: np.ndarray
    weight: float
    area_scale: float
    temperature: float
    stress: np.ndarray


@dataclass(frozen=True, eq=False)
class Quadrature:
    """Surface quadrature points stored column-wise, ordered by face then rule point."""

    face: np.ndarray
    bary: np.ndarray
    weight: np.ndarray
    area_scale: np.ndarray
    temperature: np.ndarray | None
    stress: np.ndarray | None
    n_faces: int
    degree: int

    def __len__(self):
        return self.face.size

    def __getitem__(self, i) -> QuadPoint:
        return QuadPoint(
            int(self.face[i]),
            self.bary[i],
            float(self.weight[i]),
            float(self.area_scale[i]),
            float(self.temperature[i]) if self.temperature is not None else math.nan,
            self.stress[i] if self.stress is not None else None,
        )

    @property
    def dA(self):
        """Area element ``weight * area_scale`` per point."""
        return self.weight * self.area_scale

    def face_areas(self):
        return np.bincount(self.face, weights=self.dA, minlength=self.n_faces)

    def total_area(self):
        from .hazard import pairwise_sum

        return pairwise_sum(self.dA)


# ---------------------------------------------------------------- loading


def _parse_int(tok, path, lineno):
    try:
        return int(tok)
    except ValueError:
        raise ModelFormatError(f"expected integer, got {tok!r}", path, lineno) from None


def _parse_floats(toks, path, lineno):
    try:
        vals = [float(t) for t in toks]
    except ValueError:
        raise ModelFormatError(f"expected numbers, got {' '.join(toks)!r}", path, lineno) from None
    if not all(math.isfinite(v) for v in vals):
        raise ModelFormatError("non-finite value", path, lineno)
    return vals


def load_model(path) -> tuple[Mesh, FieldSet]:
    """Read a model file (format in the module docstring) and validate it."""
    path = Path(path)
    with open(path) as fh:
        lines = fh.readlines()

    nodes: dict[int, list[float]] = {}
    elements: dict[int, list[int]] = {}
    elem_line: dict[int, int] = {}
    fields: dict[str, dict[int, list[float]]] = {}
    block = None
    arity = None
    expected = None
    seen = 0
    block_line = 0

    def close_block():
        if block in ("NODES", "ELEMENTS") and expected is not None and seen != expected:
            raise ModelFormatError(
                f"{block} block declares {expected} records but has {seen}", path, block_line
            )

    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        head = toks[0].upper()
        if head in ("NODES", "ELEMENTS"):
            close_block()
            block, seen, block_line = head, 0, lineno
            expected = _parse_int(toks[1], path, lineno) if len(toks) > 1 else None
            continue
        if head == "FIELD":
            close_block()
            if len(toks) != 3:
                raise ModelFormatError("FIELD header must be 'FIELD <name> <arity>'", path, lineno)
            name = toks[1].lower()
            arity = _parse_int(toks[2], path, lineno)
            if name in FIELD_ARITY and FIELD_ARITY[name] != arity:
                raise ModelFormatError(
                    f"field {name!r} must have arity {FIELD_ARITY[name]}, got {arity}", path, lineno
                )
            if name in fields:
                raise ModelFormatError(f"field {name!r} defined twice", path, lineno)
            fields[name] = {}
            block, expected, seen, block_line = ("FIELD", name), None, 0, lineno
            continue
        if head == "END":
            close_block()
            block = None
            continue
        if block is None:
            raise ModelFormatError(f"record outside any block: {line!r}", path, lineno)

        seen += 1
        if block == "NODES":
            if len(toks) != 4:
                raise ModelFormatError("node record must be '<id> <x> <y> <z>'", path, lineno)
            nid = _parse_int(toks[0], path, lineno)
            if nid in nodes:
                raise ModelFormatError(f"duplicate node id {nid}", path, lineno)
            nodes[nid] = _parse_floats(toks[1:], path, lineno)
        elif block == "ELEMENTS":
            if len(toks) != 11:
                raise ModelFormatError(
                    f"element record must have an id and 10 node ids, got {len(toks) - 1} ids",
                    path,
                    lineno,
                )
            eid = _parse_int(toks[0], path, lineno)
            if eid in elements:
                raise ModelFormatError(f"duplicate element id {eid}", path, lineno)
            conn = [_parse_int(t, path, lineno) for t in toks[1:]]
            if len(set(conn)) != 10:
                raise ModelFormatError(f"element {eid} repeats a node id", path, lineno)
            elements[eid] = conn
            elem_line[eid] = lineno
        else:
            name = block[1]
            if len(toks) != arity + 1:
                raise ModelFormatError(
                    f"field {name!r} record needs a node id and {arity} values", path, lineno
                )
            nid = _parse_int(toks[0], path, lineno)
            if nid in fields[name]:
                raise ModelFormatError(f"field {name!r} repeats node {nid}", path, lineno)
            fields[name][nid] = _parse_floats(toks[1:], path, lineno)
    close_block()

    if not nodes:
        raise ModelFormatError("no NODES block", path)
    if not elements:
        raise ModelFormatError("no ELEMENTS block", path)

    node_ids = np.fromiter(nodes.keys(), dtype=np.int64, count=len(nodes))
    order = np.argsort(node_ids, kind="stable")
    node_ids = node_ids[order]
    coords = np.array(list(nodes.values()), dtype=float)[order]
    index = {int(n): i for i, n in enumerate(node_ids)}

    element_ids = np.fromiter(elements.keys(), dtype=np.int64, count=len(elements))
    conn = np.empty((len(elements), 10), dtype=np.int64)
    for row, (eid, ids) in enumerate(elements.items()):
        for j, nid in enumerate(ids):
            k = index.get(nid)
            if k is None:
                raise ModelFormatError(
                    f"element {eid} references node id {nid} which is not defined",
                    path,
                    elem_line[eid],
                )
            conn[row, j] = k

    arrays = {}
    for name, arity_ in FIELD_ARITY.items():
        if name not in fields:
            raise ModelFormatError(f"missing field {name!r}", path)
        values = fields[name]
        missing = [n for n in node_ids if int(n) not in values]
        if missing:
            raise ModelFormatError(
                f"field {name!r} has no value for node {missing[0]} ({len(missing)} nodes missing)",
                path,
            )
        extra = [n for n in values if n not in index]
        if extra:
            raise ModelFormatError(f"field {name!r} refers to unknown node {extra[0]}", path)
        arr = np.array([values[int(n)] for n in node_ids], dtype=float)
        arrays[name] = arr[:, 0] if arity_ == 1 else arr

    mesh = Mesh(node_ids, coords, element_ids, conn)
    check_mesh(mesh)
    log.info("loaded %s: %d nodes, %d elements", path, mesh.n_nodes, mesh.n_elements)
    return mesh, FieldSet(arrays["temperature"], arrays["stress"])


def write_model(path, mesh: Mesh, fields: FieldSet):
    """Write ``mesh`` and ``fields`` in the model file format."""
    with open(path, "w") as fh:
        fh.write(f"NODES {mesh.n_nodes}\n")
        for nid, xyz in zip(mesh.node_ids.tolist(), mesh.coords.tolist()):
            fh.write(f"{nid} " + " ".join(repr(float(v)) for v in xyz) + "\n")
        fh.write(f"ELEMENTS {mesh.n_elements}\n")
        for eid, row in zip(mesh.element_ids.tolist(), mesh.node_ids[mesh.elements].tolist()):
            fh.write(f"{eid} " + " ".join(str(int(v)) for v in row) + "\n")
        fh.write("FIELD temperature 1\n")
        for nid, t in zip(mesh.node_ids.tolist(), fields.temperature):
            fh.write(f"{nid} {float(t)!r}\n")
        fh.write("FIELD stress 6\n")
        for nid, s in zip(mesh.node_ids.tolist(), fields.stress):
            fh.write(f"{nid} " + " ".join(repr(float(v)) for v in s) + "\n")


def _tet10_dshape_centroid():
    # dN/dxi at L = 1/4; corner terms vanish (4L - 1 = 0)
    grad_L = np.array([[-1.0, -1.0, -1.0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])
    d = np.zeros((10, 3))
    for k, (i, j) in enumerate(TET10_EDGES):
        d[4 + k] = grad_L[i] + grad_L[j]
    return d


def element_jacobians_at_centroid(mesh: Mesh) -> np.ndarray:
    x = mesh.coords[mesh.elements]  # (m, 10, 3)
    J = np.einsum("mai,aj->mij", x, _tet10_dshape_centroid())
    return np.linalg.det(J)


def check_mesh(mesh: Mesh):
    if len(np.unique(mesh.node_ids)) != mesh.n_nodes:
        raise ValidationError("node ids are not unique")
    if not np.all(np.isfinite(mesh.coords)):
        raise ValidationError("node coordinates must be finite")
    det = element_jacobians_at_centroid(mesh)
    bad = np.flatnonzero(~(det > 0))
    if bad.size:
        eid = int(mesh.element_ids[bad[0]])
        raise ValidationError(
            f"element {eid} has non-positive Jacobian at its centroid ({det[bad[0]]:.3g}); "
            "check vertex ordering"
        )


# ---------------------------------------------------------------- surface


def tri6_shape(bary) -> np.ndarray:
    """6-node triangle shape functions at barycentric points ``(k, 3)``."""
    L = np.atleast_2d(bary)
    L1, L2, L3 = L[:, 0], L[:, 1], L[:, 2]
    return np.stack(
        [L1 * (2 * L1 - 1), L2 * (2 * L2 - 1), L3 * (2 * L3 - 1), 4 * L1 * L2, 4 * L2 * L3, 4 * L3 * L1],
        axis=1,
    )


def tri6_dshape(bary) -> np.ndarray:
    """Derivatives ``(k, 6, 2)`` w.r.t. reference coordinates (xi=L2, eta=L3)."""
    L = np.atleast_2d(bary)
    L1, L2, L3 = L[:, 0], L[:, 1], L[:, 2]
    z = np.zeros_like(L1)
    dxi = np.stack([-(4 * L1 - 1), 4 * L2 - 1, z, 4 * (L1 - L2), 4 * L3, -4 * L3], axis=1)
    deta = np.stack([-(4 * L1 - 1), z, 4 * L3 - 1, -4 * L2, 4 * L2, 4 * (L1 - L3)], axis=1)
    return np.stack([dxi, deta], axis=2)


def _face_tangents(xf, bary):
    """Tangent vectors (F, k, 3) x 2 of the quadratic map for faces ``xf`` (F, 6, 3)."""
    d = tri6_dshape(bary)
    t1 = np.einsum("fai,ka->fki", xf, d[:, :, 0])
    t2 = np.einsum("fai,ka->fki", xf, d[:, :, 1])
    return t1, t2


def extract_surface(mesh: Mesh) -> SurfaceMesh:
    """Faces that belong to exactly one element, oriented outward."""
    local = mesh.elements[:, TET10_FACES]  # (m, 4, 6)
    m = mesh.n_elements
    all_faces = local.reshape(-1, 6)
    keys = np.sort(all_faces[:, :3], axis=1)
    _, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    if np.any(counts > 2):
        k = int(np.flatnonzero(counts[inverse] > 2)[0])
        corners = mesh.node_ids[keys[k]]
        raise NonManifoldError(
            f"face with corner nodes {corners.tolist()} is shared by {counts[inverse[k]]} elements"
        )
    free = np.flatnonzero(counts[inverse] == 1)
    faces = all_faces[free].copy()
    parent = free // 4
    face_index = free % 4

    # orientation: normal at the face centroid must point away from the element centroid
    xf = mesh.coords[faces]
    c = np.array([[1 / 3, 1 / 3, 1 / 3]])
    t1, t2 = _face_tangents(xf, c)
    normal = np.cross(t1[:, 0], t2[:, 0])
    face_c = np.einsum("fai,a->fi", xf, tri6_shape(c)[0])
    elem_c = mesh.coords[mesh.elements[parent, :4]].mean(axis=1)
    flip = np.einsum("fi,fi->f", normal, face_c - elem_c) < 0
    faces[flip] = faces[flip][:, [0, 2, 1, 5, 4, 3]]
    log.debug("surface: %d of %d element faces are free (%d flipped)", free.size, 4 * m, flip.sum())
    return SurfaceMesh(mesh.coords, faces, parent, face_index, mesh.node_ids, mesh.element_ids)


# ---------------------------------------------------------------- quadrature


def _s2(a, w):
    b = 1.0 - 2.0 * a
    return [(a, a, b, w), (a, b, a, w), (b, a, a, w)]


def _s1(a, b, w):
    c = 1.0 - a - b
    return [(a, b, c, w), (b, c, a, w), (c, a, b, w), (a, c, b, w), (b, a, c, w), (c, b, a, w)]


# symmetric Dunavant rules; weights sum to one (reference area factor 1/2 applied later)
_RULES = {
    2: _s2(1.0 / 6.0, 1.0 / 3.0),
    4: _s2(0.091576213509770743459571463402201508, 0.10995174365532186763832632490021053)
    + _s2(0.44594849091596488631832925388305199, 0.22338158967801146569500700843312280),
    6: _s2(0.063089014491502228340331602870819157, 0.050844906370206816920936809106869055)
    + _s2(0.24928674517091042129163855310701908, 0.11678627572637936602528961138557944)
    + _s1(0.053145049844816947353249671631398147, 0.31035245103378440541660773395655215,
          0.082851075618373575193553456420442225),
}


def triangle_rule(degree: int):
    """Barycentric points ``(k, 3)`` and weights ``(k,)`` on the reference triangle (area 1/2)."""
    avail = sorted(d for d in _RULES if d >= degree)
    if degree < 1 or not avail:
        raise ValidationError(f"no triangle rule for degree {degree} (available: {sorted(_RULES)})")
    rule = np.array(_RULES[avail[0]], dtype=float)
    return rule[:, :3], 0.5 * rule[:, 3]


def build_quadrature(surface: SurfaceMesh, fields: FieldSet | None = None, degree: int = 4) -> Quadrature:
    """Map a symmetric triangle rule onto every curved face and interpolate nodal fields."""
    if surface.n_faces == 0:
        raise ValidationError("surface has no faces")
    bary, w = triangle_rule(degree)
    k = w.size
    xf = surface.coords[surface.faces]
    t1, t2 = _face_tangents(xf, bary)
    cross = np.cross(t1, t2)  # (F, k, 3)
    area_scale = np.linalg.norm(cross, axis=2)
    # inverted parts of a face show up as normals opposing the centroid normal
    c1, c2 = _face_tangents(xf, np.array([[1 / 3, 1 / 3, 1 / 3]]))
    n0 = np.cross(c1[:, 0], c2[:, 0])
    signed = np.einsum("fki,fi->fk", cross, n0)
    bad = np.flatnonzero(np.any((area_scale <= 0) | (signed <= 0), axis=1))
    if bad.size:
        raise DegenerateFaceError(f"face {int(bad[0])} is collapsed or inverted at a quadrature point")

    N = tri6_shape(bary)  # (k, 6)
    F = surface.n_faces
    temperature = stress = None
    if fields is not None:
        temperature = np.einsum("fa,ka->fk", fields.temperature[surface.faces], N).reshape(-1)
        stress = np.einsum("fai,ka->fki", fields.stress[surface.faces], N).reshape(-1, 6)
    return Quadrature(
        face=np.repeat(np.arange(F), k),
        bary=np.tile(bary, (F, 1)),
        weight=np.tile(w, F),
        area_scale=area_scale.reshape(-1),
        temperature=temperature,
        stress=stress,
        n_faces=F,
        degree=degree,
    )


def interpolate_on_faces(surface: SurfaceMesh, nodal: np.ndarray, bary) -> np.ndarray:
    """Evaluate a nodal quantity at barycentric points of every face: ``(F, k, ...)``."""
    N = tri6_shape(bary)
    vals = np.asarray(nodal)[surface.faces]
    return np.einsum("fa...,ka->fk...", vals, N)


# ---------------------------------------------------------------- export

_LABEL_RE = re.compile(r"^[A-Za-z0-9_.\-]+$")


def export_hazard_field(surface: SurfaceMesh, values, label: str, path, header: str | None = None):
    """Write the surface and one scalar to a legacy ASCII VTK unstructured grid.

    ``values`` has one entry per face (written as cell data) or one per mesh
    node referenced by the surface (point data, ordered like
    ``surface_nodes(surface)``).  Values are written with round-trip precision.
    """
    if surface.n_faces == 0:
        raise ValidationError("cannot export an empty surface")
    if not _LABEL_RE.match(label):
        raise ValidationError(f"label {label!r} must be a single token of [A-Za-z0-9_.-]")
    values = np.asarray(values, dtype=float).reshape(-1)
    nodes = surface_nodes(surface)
    if values.size == surface.n_faces:
        kind = "CELL_DATA"
    elif values.size == nodes.size:
        kind = "POINT_DATA"
    else:
        raise ValidationError(
            f"got {values.size} values; expected {surface.n_faces} (faces) or {nodes.size} (surface nodes)"
        )
    if not np.all(np.isfinite(values)) or np.any(values < 0):
        raise ValidationError("field values must be finite and >= 0")

    local = np.full(surface.coords.shape[0], -1, dtype=np.int64)
    local[nodes] = np.arange(nodes.size)
    cells = local[surface.faces]
    title = (header or f"lcfpof {label}").replace("\n", " ")[:255]
    out = [
        "# vtk DataFile Version 2.0",
        title,
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {nodes.size} double",
    ]
    out += [f"{x!r} {y!r} {z!r}" for x, y, z in surface.coords[nodes].tolist()]
    out.append(f"CELLS {cells.shape[0]} {cells.shape[0] * 7}")
    out += ["6 " + " ".join(map(str, row)) for row in cells.tolist()]
    out.append(f"CELL_TYPES {cells.shape[0]}")
    out += [str(VTK_QUADRATIC_TRIANGLE)] * cells.shape[0]
    out.append(f"{kind} {values.size}")
    out.append(f"SCALARS {label} double 1")
    out.append("LOOKUP_TABLE default")
    out += [repr(v) for v in values.tolist()]
    text = "\n".join(out) + "\n"
    with open(path, "w") as fh:
        fh.write(text)
    return Path(path)


def surface_nodes(surface: SurfaceMesh) -> np.ndarray:
    """Sorted indices of mesh nodes used by the surface."""
    return np.unique(surface.faces)


def read_vtk_field(path) -> dict:
    """Read back a file written by :func:`export_hazard_field`."""
    tokens = Path(path).read_text().split("\n")
    i = 4
    out = {"title": tokens[1], "cell_data": {}, "point_data": {}}

    def take(n):
        nonlocal i
        rows = tokens[i : i + n]
        i += n
        return rows

    head = tokens[i].split()
    i += 1
    n_pts = int(head[1])
    out["points"] = np.array([r.split() for r in take(n_pts)], dtype=float).reshape(-1, 3)
    head = tokens[i].split()
    i += 1
    n_cells = int(head[1])
    out["cells"] = np.array([r.split()[1:] for r in take(n_cells)], dtype=np.int64).reshape(-1, 6)
    i += 1
    out["cell_types"] = np.array(take(n_cells), dtype=np.int64)
    while i < len(tokens) and tokens[i].strip():
        kind, n = tokens[i].split()
        i += 1
        _, name, _dtype, _ = tokens[i].split()
        i += 2
        vals = np.array([float(v) for v in take(int(n))])
        out["cell_data" if kind == "CELL_DATA" else "point_data"][name] = vals
    return out
