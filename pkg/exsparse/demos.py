"""Seeded demonstration instances.

All randomness comes from numpy's Mersenne Twister bit generator
(`np.random.MT19937`), so an instance is reproducible from its seed.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from exsparse.atom_families import family_for
from exsparse.atoms_base import SparseSolution
from exsparse.certificate import CertificateReport
from exsparse.core_model import Kind, ProblemSpec, dual_vector, forward
from exsparse.errors import UnknownDemo
from exsparse.io_files import (
    ResultFile,
    dumps,
    truth_to_dict,
    write_certificate_csv,
    write_problem,
    write_reconstruction_csv,
    write_result,
)
from exsparse.kernels import Kernel
from exsparse.solver import SolverOptions, SolverReport, solve

logger = logging.getLogger(__name__)

DEFAULT_SEED = 7


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.MT19937(seed))


@dataclass(frozen=True)
class DemoInstance:
    name: str
    seed: int
    spec: ProblemSpec
    truth: SparseSolution


@dataclass(frozen=True)
class DemoOutcome:
    instance: DemoInstance
    solution: SparseSolution
    certificate: CertificateReport
    report: SolverReport


def _separated(rng: np.random.Generator, count: int, lo: float, hi: float, gap: float) -> List[float]:
    while True:
        points = np.sort(rng.uniform(lo, hi, size=count))
        if count < 2 or np.min(np.diff(points)) >= gap:
            return [float(p) for p in points]


def _signs(rng: np.random.Generator, count: int) -> List[int]:
    return [int(s) for s in rng.choice([-1, 1], size=count)]


def _with_truth_data(
    kind: Kind,
    kernels: Sequence[Kernel],
    truth: SparseSolution,
    lam: float,
    spline_order: Optional[int] = None,
    noise: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> ProblemSpec:
    blank = ProblemSpec.build(kind, (0.0, 1.0), kernels, [0.0] * len(kernels), lam, spline_order)
    data = forward(blank, truth)
    if noise > 0 and rng is not None:
        data = data + noise * rng.standard_normal(data.size)
    return blank.with_data(data)


def _truth(
    kind: Kind,
    params: Sequence[float],
    signs: Sequence[int],
    weights: Sequence[float],
    beta: Sequence[float],
    order: Optional[int] = None,
) -> SparseSolution:
    template = ProblemSpec.build(kind, (0.0, 1.0), [Kernel.fourier_sin(1)], [0.0], 1.0, order)
    family = family_for(template)
    return SparseSolution.build(
        [(family.make_atom(p, s), w) for p, s, w in zip(params, signs, weights)], beta
    )


def staircase(seed: int = DEFAULT_SEED) -> DemoInstance:
    """Three-jump piecewise constant signal seen through six Gaussian windows."""
    rng = make_rng(seed)
    jumps = _separated(rng, 3, 0.15, 0.85, 0.1)
    truth = _truth(Kind.TV1D, jumps, _signs(rng, 3), rng.uniform(0.5, 1.5, 3), [rng.uniform(-1, 1)])
    kernels = [Kernel.gaussian(c, 0.12) for c in np.linspace(0.1, 0.9, 6)]
    return DemoInstance("staircase", seed, _with_truth_data(Kind.TV1D, kernels, truth, 100.0), truth)


def spline(seed: int = DEFAULT_SEED) -> DemoInstance:
    """Piecewise linear signal (two knots) seen through eight Gaussian windows."""
    rng = make_rng(seed)
    knots = _separated(rng, 2, 0.2, 0.8, 0.15)
    truth = _truth(
        Kind.SPLINE, knots, _signs(rng, 2), rng.uniform(2.0, 4.0, 2), rng.uniform(-1, 1, 2), order=2
    )
    kernels = [Kernel.gaussian(c, 0.06) for c in np.linspace(0.1, 0.9, 8)]
    spec = _with_truth_data(Kind.SPLINE, kernels, truth, 1e5, spline_order=2)
    return DemoInstance("spline", seed, spec, truth)


def spikes(seed: int = DEFAULT_SEED) -> DemoInstance:
    """Three signed spikes blurred by eight narrow Gaussians."""
    rng = make_rng(seed)
    positions = _separated(rng, 3, 0.3, 0.7, 0.08)
    truth = _truth(Kind.MEASURES, positions, _signs(rng, 3), rng.uniform(0.5, 1.5, 3), [])
    kernels = [Kernel.gaussian(c, 0.03) for c in np.linspace(0.25, 0.75, 8)]
    return DemoInstance("spikes", seed, _with_truth_data(Kind.MEASURES, kernels, truth, 1000.0), truth)


DEMOS: Dict[str, Callable[[int], DemoInstance]] = {
    "staircase": staircase,
    "spline": spline,
    "spikes": spikes,
}


def _random_kernels(kind: Kind, rng: np.random.Generator, n: int) -> List[Kernel]:
    kernels = []
    for _ in range(n):
        pick = rng.integers(3)
        if kind == Kind.MEASURES:
            # Must vanish at 0 and 1 to within 1e-9
            if pick == 0:
                kernels.append(Kernel.fourier_sin(int(rng.integers(1, 6))))
            else:
                kernels.append(Kernel.gaussian(rng.uniform(0.3, 0.7), rng.uniform(0.03, 0.045)))
        elif pick == 0:
            kernels.append(Kernel.fourier_cos(int(rng.integers(1, 6))))
        elif pick == 1 and kind == Kind.TV1D:
            a = rng.uniform(0.0, 0.7)
            kernels.append(Kernel.cell(a, a + rng.uniform(0.1, 0.3)))
        else:
            kernels.append(Kernel.gaussian(rng.uniform(0.1, 0.9), rng.uniform(0.05, 0.2)))
    return kernels


def random_instance(kind: Kind, seed: int, spline_order: int = 2) -> DemoInstance:
    """N in 3..8 kernels from the shipped families, one to three true atoms, light noise."""
    rng = make_rng(seed)
    n = int(rng.integers(3, 9))
    kernels = _random_kernels(kind, rng, n)
    count = int(rng.integers(1, 4))
    order = spline_order if kind == Kind.SPLINE else None
    null_size = {Kind.MEASURES: 0, Kind.TV1D: 1, Kind.SPLINE: spline_order}[kind]
    truth = _truth(
        kind,
        _separated(rng, count, 0.2, 0.8, 0.05),
        _signs(rng, count),
        rng.uniform(0.5, 1.5, count),
        rng.uniform(-1, 1, null_size),
        order=order,
    )
    lam = float(10 ** rng.uniform(1, 3))
    spec = _with_truth_data(kind, kernels, truth, lam, order, noise=0.01, rng=rng)
    return DemoInstance(f"random-{kind.value}", seed, spec, truth)


def run_demo(
    name: str,
    out_dir: Path,
    seed: int = DEFAULT_SEED,
    opts: Optional[SolverOptions] = None,
) -> DemoOutcome:
    if name not in DEMOS:
        raise UnknownDemo(f"unknown demo {name!r}; choose from {sorted(DEMOS)}")
    instance = DEMOS[name](seed)
    spec = instance.spec
    opts = opts or SolverOptions()
    solution, certificate, report = solve(spec, opts)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_problem(out_dir / "problem.json", spec, seed=seed)
    write_result(out_dir / "result.json", ResultFile.from_solve(spec, solution, certificate, report))
    write_certificate_csv(
        out_dir / "certificate.csv", spec, dual_vector(spec, solution), lmo_grid=opts.lmo_grid
    )
    write_reconstruction_csv(out_dir / "reconstruction.csv", spec, solution)
    (out_dir / "truth.json").write_text(dumps(truth_to_dict(spec, instance.truth)))
    logger.info(f"demo {name} (seed {seed}) written to {out_dir}")
    return DemoOutcome(instance, solution, certificate, report)
