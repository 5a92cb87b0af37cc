"""ASCII OFF / OBJ reading and writing, and the stats record format."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import IndexOutOfRange, MeshSyntaxError
from .mesh_core import RawMesh

STATS_SCHEMA = "ncsg-stats/1"


def _lines(data):
    if isinstance(data, (bytes, bytearray)):
        data = data.decode("ascii")
    for lineno, line in enumerate(data.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if body:
            yield lineno, body


def _floats(tokens, lineno):
    try:
        return [float(t) for t in tokens]
    except ValueError:
        raise MeshSyntaxError(f"bad number in {tokens!r}", lineno) from None


def _ints(tokens, lineno):
    try:
        return [int(t) for t in tokens]
    except ValueError:
        raise MeshSyntaxError(f"bad index in {tokens!r}", lineno) from None


def parse_off(data):
    it = _lines(data)
    try:
        lineno, header = next(it)
    except StopIteration:
        raise MeshSyntaxError("empty file", 1) from None
    rest = header.split()
    if rest[0] != "OFF":
        raise MeshSyntaxError("missing OFF header", lineno)
    rest = rest[1:]
    if not rest:
        try:
            lineno, counts_line = next(it)
        except StopIteration:
            raise MeshSyntaxError("missing counts line", lineno + 1) from None
        rest = counts_line.split()
    counts = _ints(rest, lineno)
    if len(counts) < 2:
        raise MeshSyntaxError("counts line needs vertex and facet counts", lineno)
    nv, nf = counts[0], counts[1]
    verts = []
    for _ in range(nv):
        try:
            lineno, line = next(it)
        except StopIteration:
            raise MeshSyntaxError(f"expected {nv} vertices", lineno + 1) from None
        xyz = _floats(line.split(), lineno)
        if len(xyz) < 3:
            raise MeshSyntaxError("vertex needs 3 coordinates", lineno)
        verts.append(xyz[:3])
    facets = []
    for _ in range(nf):
        try:
            lineno, line = next(it)
        except StopIteration:
            raise MeshSyntaxError(f"expected {nf} facets", lineno + 1) from None
        vals = _ints(line.split(), lineno)
        k = vals[0] if vals else 0
        if k < 3 or len(vals) < k + 1:
            raise MeshSyntaxError("facet needs a count followed by at least 3 indices", lineno)
        loop = vals[1 : k + 1]
        for v in loop:
            if v < 0 or v >= nv:
                raise IndexOutOfRange(f"line {lineno}: vertex {v} of {nv}")
        facets.append(loop)
    return RawMesh(np.array(verts, dtype=np.float64).reshape(-1, 3), facets)


def parse_obj(data):
    verts = []
    facets = []
    for lineno, line in _lines(data):
        tokens = line.split()
        tag = tokens[0]
        if tag == "v":
            xyz = _floats(tokens[1:4], lineno)
            if len(xyz) < 3:
                raise MeshSyntaxError("vertex needs 3 coordinates", lineno)
            verts.append(xyz)
        elif tag == "f":
            loop = []
            for tok in tokens[1:]:
                head = tok.split("/", 1)[0]
                (idx,) = _ints([head], lineno)
                if idx > 0:
                    v = idx - 1
                elif idx < 0:
                    v = len(verts) + idx
                else:
                    raise IndexOutOfRange(f"line {lineno}: OBJ indices start at 1")
                if v < 0 or v >= len(verts):
                    raise IndexOutOfRange(f"line {lineno}: vertex {idx} of {len(verts)}")
                loop.append(v)
            if len(loop) < 3:
                raise MeshSyntaxError("facet needs at least 3 vertices", lineno)
            facets.append(loop)
    return RawMesh(np.array(verts, dtype=np.float64).reshape(-1, 3), facets)


def _fmt(x):
    return format(float(x), ".17g")


def write_off(mesh):
    verts = np.asarray(mesh.vertices).reshape(-1, 3)
    out = ["OFF", f"{len(verts)} {len(mesh.facets)} 0"]
    out += [" ".join(_fmt(c) for c in p) for p in verts]
    out += [" ".join([str(len(f))] + [str(v) for v in f]) for f in mesh.facets]
    return ("\n".join(out) + "\n").encode("ascii")


def write_obj(mesh):
    verts = np.asarray(mesh.vertices).reshape(-1, 3)
    out = ["v " + " ".join(_fmt(c) for c in p) for p in verts]
    out += ["f " + " ".join(str(v + 1) for v in f) for f in mesh.facets]
    return ("\n".join(out) + "\n").encode("ascii")


def read_mesh(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if str(path).lower().endswith(".obj"):
        return parse_obj(data)
    return parse_off(data)


def write_mesh(path, mesh):
    data = write_obj(mesh) if str(path).lower().endswith(".obj") else write_off(mesh)
    with open(path, "wb") as fh:
        fh.write(data)


@dataclass
class StatsRecord:
    m: int = 0
    s: int = 0
    h: int = 0
    t_topology_s: float = 0.0
    t_vertices_s: float = 0.0
    t_facets_s: float = 0.0
    errors: int = 0

    def scaling(self):
        """(m + s) * log2(h), or None when h == 0."""
        if self.h <= 0:
            return None
        return (self.m + self.s) * math.log2(self.h)


def write_stats(record):
    fields = asdict(record)
    lines = [f"schema={STATS_SCHEMA}"]
    lines += [f"{k}={v}" for k, v in fields.items()]
    scale = record.scaling()
    lines.append("scaling=absent" if scale is None else f"scaling={scale!r}")
    block = dict(fields, schema=STATS_SCHEMA, scaling=scale)
    lines.append("json=" + json.dumps(block, sort_keys=True))
    return ("\n".join(lines) + "\n").encode("ascii")


def parse_stats(data):
    if isinstance(data, (bytes, bytearray)):
        data = data.decode("ascii")
    for line in data.splitlines():
        if line.startswith("json="):
            return json.loads(line[5:])
    raise MeshSyntaxError("no json line in stats", 1)
