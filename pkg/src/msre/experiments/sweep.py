"""Monte-Carlo height sweeps over box sizes and disorder samples."""
from __future__ import annotations

import json
import logging
import multiprocessing as mp
import os

import numpy as np

from .. import rng as rngmod
from ..disorder import HeightGrid, HurstParams, sample_disorder
from ..errors import CapacityError, MsreError
from ..lattice import Domain, LatticeField
from ..solvers import get_solver
from .config import ExperimentConfig
from .records import (ExperimentRecord, error_line, make_header, read_records,
                      truncate_partial)

log = logging.getLogger(__name__)


def sample_seed(config: ExperimentConfig, L: int, sample: int) -> int:
    return rngmod.child_seed(config.seed, rngmod.SWEEP, L, sample)


def _scalar_stats(stats: dict) -> dict:
    # wall times and traces are excluded so record lines stay reproducible
    out = {}
    for k, v in stats.items():
        if k == "wall_time" or isinstance(v, (list, tuple, dict, np.ndarray)):
            continue
        if isinstance(v, (bool, np.bool_)):
            out[k] = bool(v)
        elif isinstance(v, (int, np.integer)):
            out[k] = int(v)
        elif isinstance(v, (float, np.floating)):
            out[k] = float(v)
    return out


def solve_sample(config: ExperimentConfig, L: int, sample: int):
    """Draw the disorder for (L, sample), solve, and return (record, SolveResult).

    When the ground state touches the edge of the height grid the grid is
    doubled and the disorder redrawn under the next resample index.
    """
    seed = sample_seed(config, L, sample)
    dom = Domain.box(L, config.d)
    params = HurstParams(config.H, config.n)
    K = config.grid_K(L)
    solver_name = config.resolved_solver()
    solver = get_solver(solver_name)
    tau = None
    if config.tau_const:
        c = np.zeros(config.n)
        c[0] = config.tau_const
        tau = LatticeField.constant(dom, c)
    opts = {}
    if solver_name == "coord_descent":
        opts = {"restarts": config.restarts, "seed": seed}
    for doubling in range(config.max_doublings + 1):
        grid = HeightGrid(config.n, config.delta, K)
        field = sample_disorder(dom, grid, params, seed, resample=doubling)
        res = solver(field, tau=tau, **opts)
        if not res.pinned():
            break
        if doubling == config.max_doublings:
            raise CapacityError(f"ground state still pinned at K={K} after "
                                f"{config.max_doublings} doublings")
        K *= 2
    norms = np.linalg.norm(res.phi.interior(), axis=-1)
    H = config.H
    ladder = [float(h) for h in config.ladder(L)]
    rec = ExperimentRecord(
        config_hash=config.hash(), L=L, sample=sample, seed=seed,
        GE=float(res.ground_energy), max_height=float(norms.max()),
        heights_ell2H=float(np.mean(norms ** (2 * H))),
        frac_above=[float(np.mean(norms >= h)) for h in ladder], h_ladder=ladder,
        solver=solver_name, solver_stats=_scalar_stats(res.stats), K=K, K_doublings=doubling,
        ge_recheck=float(abs(res.ground_energy - res.objective)),
        site_heights=res.phi.interior().ravel().tolist() if config.store_heights else None,
    )
    return rec, res


def _task(args):
    config, L, sample = args
    try:
        rec, _ = solve_sample(config, L, sample)
        return rec.to_json(), None
    except MsreError as exc:
        return None, error_line(L, sample, sample_seed(config, L, sample), exc)


def sweep_tasks(config: ExperimentConfig):
    return [(L, i) for L in config.L_values for i in range(config.samples_per_L)]


def run_height_sweep(config: ExperimentConfig, path=None, jobs: int = 1, resume: bool = True,
                     progress=None):
    """Run every (L, sample) of the configuration, appending to a JSONL file.

    Returns (records, errors). Existing files with the same configuration hash
    are resumed: completed (L, sample) pairs are kept and the rest appended in
    index order. Solver errors are written as error lines and counted.
    """
    path = path or config.output
    header = make_header(config.to_dict(), config.hash())
    done = set()
    if resume and os.path.exists(path) and os.path.getsize(path) > 0:
        truncate_partial(path)
        existing = read_records(path)
        if existing.header.get("config_hash") != config.hash():
            raise MsreError(f"{path} holds records of a different configuration")
        done = existing.done()
    else:
        with open(path, "w") as fh:
            fh.write(json.dumps(header, sort_keys=True) + "\n")
    todo = [(config, L, i) for L, i in sweep_tasks(config) if (L, i) not in done]
    n_err = 0
    with open(path, "a") as fh:
        if jobs > 1 and len(todo) > 1:
            ctx = mp.get_context("fork" if hasattr(os, "fork") else "spawn")
            with ctx.Pool(jobs) as pool:
                results = pool.imap(_task, todo, chunksize=1)
                n_err = _drain(results, fh, progress, len(todo))
        else:
            n_err = _drain(map(_task, todo), fh, progress, len(todo))
    if n_err:
        log.warning("%d sample(s) failed; see error lines in %s", n_err, path)
    rs = read_records(path)
    return rs.records, rs.errors


def _drain(results, fh, progress, total):
    n_err = 0
    for k, (line, err) in enumerate(results):
        if err is not None:
            n_err += 1
            fh.write(err + "\n")
        else:
            fh.write(line + "\n")
        fh.flush()
        if progress:
            progress(k + 1, total)
    return n_err
