#!/usr/bin/env python3

"""
Resolution sweeps of the effective conductivity of two-phase media with a
known answer, stored in convergence.sqlite3 (see database.py).

    checkerboard -- σ* = √(σ₁σ₂) for the square checkerboard
    laminate     -- harmonic mean across the layers, arithmetic mean along

Errors per resolution can be retrieved as thus:

    SELECT resolution, contrast, MAX(relative_error), SUM(iterations)
      FROM runs
     WHERE geometry = 'checkerboard'
     GROUP BY resolution, contrast
     ORDER BY contrast, resolution;
"""

import argparse
import logging
import sqlite3
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import List, Tuple

import numpy as np
from tqdm import tqdm

from database import init_db, insert_batch
from gammakit import microstructure
from gammakit import projections as pr
from gammakit.exact_relations import laminate_effective_tensor
from gammakit.fields import Grid
from gammakit.homogenize import effective_tensor
from gammakit.physics import build_conductivity
from gammakit.solver import SolveOptions

logger = logging.getLogger(__name__)

Job = Tuple[str, int, float, float]


def main():
    parser = argparse.ArgumentParser(description=__doc__.split("\n\n")[0].strip())
    parser.add_argument("study", choices=("checkerboard", "laminate"))
    parser.add_argument("--resolutions", type=int, nargs="+", default=[32, 64, 128, 256])
    parser.add_argument("--contrasts", type=float, nargs="+", default=[4.0, 10.0, 100.0])
    parser.add_argument("--tol", type=float, default=1e-10)
    parser.add_argument("--processes", type=int, default=4)
    parser.add_argument("--database", type=Path, default=Path("convergence.sqlite3"))
    args = parser.parse_args()

    jobs = [
        (args.study, n, contrast, args.tol)
        for contrast in args.contrasts
        for n in args.resolutions
    ]
    conn = sqlite3.connect(args.database)
    try:
        init_db(conn)
        with ProcessPoolExecutor(max_workers=args.processes) as executor:
            for rows in tqdm(executor.map(run_job, jobs), total=len(jobs)):
                insert_batch(conn, rows)
    finally:
        conn.close()


def expected_tensor(study: str, contrast: float) -> np.ndarray:
    if study == "checkerboard":
        return np.sqrt(contrast) * np.eye(2)
    return laminate_effective_tensor(
        [contrast * np.eye(2), np.eye(2)], [0.5, 0.5], pr.grad(2), (1.0, 0.0)
    ).real


def labels_for(study: str, grid: Grid) -> np.ndarray:
    if study == "checkerboard":
        return microstructure.checkerboard(grid)
    return microstructure.laminate(grid, axis=0, fractions=(0.5, 0.5))


def run_job(job: Job) -> List[tuple]:
    """
    One homogenization at one resolution and contrast. Returns a row per
    diagonal component, or no rows if the solve raised.
    """
    study, n, contrast, tol = job
    logger.debug("Starting %s at %d² with contrast %g", study, n, contrast)
    grid = Grid.square(n)
    sigma = np.where(labels_for(study, grid) == 1, contrast, 1.0)
    try:
        response = effective_tensor(build_conductivity(grid, sigma), SolveOptions(tolerance=tol))
    except Exception:
        logger.exception("Homogenization failed: %s", job)
        return []

    expected = expected_tensor(study, contrast)
    rows = []
    for c in range(2):
        report = response.reports[c]
        effective = float(np.real(response.L_star[c, c]))
        rows.append(
            (
                "resolution-sweep",
                study,
                n,
                contrast,
                c,
                effective,
                float(expected[c, c]),
                abs(effective - expected[c, c]) / expected[c, c],
                report.iterations if report else None,
                int(not response.failed[c]),
                report.method if report else None,
                report.wall_time if report else None,
            )
        )
    return rows


if __name__ == "__main__":
    logging.basicConfig(filename="convergence-study.log", level=logging.DEBUG)
    main()
