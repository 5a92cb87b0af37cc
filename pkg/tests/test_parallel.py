import math

import numpy as np
import pytest

from ncsg import boolfn, scenes
from ncsg.classify import FinalVertex
from ncsg.errors import DuplicateVertex
from ncsg.kdtree import ExplorationConfig, kd_vertices
from ncsg.mesh_core import JitterConfig, apply_jitter, topology_pass
from ncsg.parallel_runtime import TaskBudget, explore_parallel, merge_results


@pytest.fixture(scope="module")
def scene():
    raws = scenes.t1_scene(8, nu=16, nv=8, seed=2)
    meshes = apply_jitter([topology_pass(r) for r in raws], JitterConfig(seed=2))[0]
    f = boolfn.parse_expr(scenes.t1_expr(8))
    return meshes, f


def _summary(verts):
    return [(v.key, tuple(v.coords), v.classification) for v in verts]


def test_worker_counts_agree(scene):
    meshes, f = scene
    config = ExplorationConfig(fmax=10, seq_threshold=20)
    ref, _, _ = kd_vertices(meshes, f, config)
    for workers in (1, 2, 4):
        verts, stats, _ = explore_parallel(meshes, f, config, TaskBudget(workers=workers, seq_threshold=20))
        # coordinates come from provenance, so they are bit-identical
        assert _summary(verts) == _summary(ref)
        assert stats.errors == 0


def test_sequential_threshold_infinite(scene):
    meshes, f = scene
    config = ExplorationConfig(fmax=10, seq_threshold=math.inf)
    ref, _, _ = kd_vertices(meshes, f, config)
    verts, _, _ = explore_parallel(meshes, f, config, TaskBudget(workers=2, seq_threshold=math.inf))
    assert _summary(verts) == _summary(ref)


def test_merge_rejects_duplicates():
    a = FinalVertex((1, 0, 3), np.zeros(3))
    b = FinalVertex((1, 0, 4), np.ones(3))
    assert [v.key for v in merge_results([[b], [a]])] == [(1, 0, 3), (1, 0, 4)]
    with pytest.raises(DuplicateVertex):
        merge_results([[a], [b, FinalVertex((1, 0, 3), np.zeros(3))]])


def test_budget_validation():
    assert TaskBudget(workers=0).workers >= 1
    with pytest.raises(ValueError):
        TaskBudget(workers=-1)
    with pytest.raises(ValueError):
        TaskBudget(seq_threshold=0)
