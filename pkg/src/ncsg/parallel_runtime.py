"""Task-parallel kd exploration over worker processes."""

from __future__ import annotations

import multiprocessing as mp
import os
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ArityMismatch, DuplicateVertex
from .kdtree import Exploration, ExplorationConfig, Fragments, KDCell, explore, make_stats, process, root_cell


@dataclass
class TaskBudget:
    """``workers`` = 0 means one per CPU. Cells holding at least
    ``seq_threshold`` fragments may become separate tasks; splits in the top
    ``split_depth`` levels clip their fragments in parallel chunks."""

    workers: int = 1
    split_depth: int = 3
    seq_threshold: float = 80
    tasks_per_worker: int = 4

    def __post_init__(self):
        if self.workers == 0:
            self.workers = os.cpu_count() or 1
        if self.workers < 1:
            raise ValueError("worker count must be >= 1")
        if self.split_depth < 0 or self.seq_threshold <= 0 or self.tasks_per_worker < 1:
            raise ValueError("thresholds must be positive")


# worker side: meshes and f are inherited through fork
_SHARED = {}


def _pack(cell, ex):
    """Cell with its clipped polygons, detached from the parent's store."""
    fr = cell.frags
    cut = fr.poly >= 0
    polys = [ex.store[int(p)] for p in fr.poly[cut]]
    local = fr.poly.copy()
    local[cut] = np.arange(len(polys))
    frags = Fragments(fr.mesh, fr.facet, fr.lo, fr.hi, local)
    return KDCell(cell.lo, cell.hi, frags, cell.indicator, cell.depth), polys


def _run_task(payload):
    cell, polys = payload
    ex = Exploration(_SHARED["meshes"], _SHARED["f"], _SHARED["config"], store=list(polys))
    out = explore(ex, cell, [])
    return out, ex.counters, ex.tally


def merge_results(parts):
    """Concatenate per-task vertex lists; a provenance key seen twice is fatal."""
    seen = set()
    out = []
    for part in parts:
        for v in part:
            if v.key in seen:
                raise DuplicateVertex(f"vertex {v.key} reported by two tasks")
            seen.add(v.key)
            out.append(v)
    out.sort(key=lambda v: v.key)
    return out


def _frontier(ex, budget, out):
    """Expand the top of the tree in this process until enough task cells exist."""
    target = budget.workers * budget.tasks_per_worker
    pending = [root_cell(ex.meshes)]
    tasks = []
    with ThreadPoolExecutor(max_workers=budget.workers) as pool:
        while pending:
            if len(pending) + len(tasks) >= target:
                tasks.extend(pending)
                break
            cell = pending.pop(0)
            if len(cell.frags) < budget.seq_threshold:
                tasks.append(cell)
                continue
            kids = process(ex, cell, out, pool if cell.depth < budget.split_depth else None)
            pending.extend(kids)
    return tasks


def explore_parallel(meshes, f, config=None, budget=None, tally=None):
    """Same result as ``kd_vertices`` for any worker count."""
    if f.arity != len(meshes):
        raise ArityMismatch(f"function of arity {f.arity} over {len(meshes)} meshes")
    config = config or ExplorationConfig()
    budget = budget or TaskBudget(seq_threshold=config.seq_threshold)
    ex = Exploration(meshes, f, config)
    t0 = time.perf_counter()
    if budget.workers == 1:
        parts = [explore(ex, root_cell(meshes), [])]
        counters, errors = ex.counters, ex.tally
    else:
        top = []
        tasks = _frontier(ex, budget, top)
        payloads = [_pack(c, ex) for c in tasks]
        _SHARED.update(meshes=meshes, f=f, config=config)
        try:
            ctx = mp.get_context("fork")
            with ProcessPoolExecutor(max_workers=budget.workers, mp_context=ctx) as pool:
                results = list(pool.map(_run_task, payloads))
        finally:
            _SHARED.clear()
        parts = [top] + [r[0] for r in results]
        counters, errors = Counter(ex.counters), Counter(ex.tally)
        for _, c, t in results:
            counters += c
            errors += t
    verts = merge_results(parts)
    if tally is not None:
        tally.update(errors)
    return verts, make_stats(meshes, verts, counters, errors, time.perf_counter() - t0), counters
