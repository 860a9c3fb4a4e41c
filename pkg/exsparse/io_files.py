"""Problem files, result files and plot CSVs."""

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple

import numpy as np
import pandas as pd
from pygments import highlight
from pygments.formatters import TerminalFormatter
from pygments.lexers import JsonLexer

from exsparse import __version__
from exsparse.atom_families import family_for
from exsparse.atoms_base import SparseSolution
from exsparse.atoms_measures import spike_train
from exsparse.atoms_splines import reconstruct as reconstruct_spline
from exsparse.atoms_tv1d import reconstruct as reconstruct_tv1d
from exsparse.certificate import CertificateReport, certificate_curve
from exsparse.core_model import Kind, ProblemSpec
from exsparse.errors import MalformedSpec, ProblemFileError
from exsparse.kernels import Kernel
from exsparse.oracle import OracleResult
from exsparse.solver import SolverOptions, SolverReport

logger = logging.getLogger(__name__)

PROBLEM_KEYS = ("kind", "domain", "spline_order", "kernels", "data", "lambda", "solver", "seed")
RECON_POINTS = 1024


@dataclass(frozen=True)
class ProblemFile:
    spec: ProblemSpec
    solver: Mapping[str, Any] = field(default_factory=dict)
    seed: Optional[int] = None

    def options(self, base: Optional[SolverOptions] = None) -> SolverOptions:
        return (base or SolverOptions()).with_overrides(self.solver)


def _line_of(text: str, key: str) -> Optional[int]:
    match = re.search(rf'"{re.escape(key)}"\s*:', text)
    if match is None:
        return None
    return text.count("\n", 0, match.start()) + 1


def _number(value: Any, key: str, line: Optional[int]) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ProblemFileError(f"expected a number, got {value!r}", key=key, line=line)
    return float(value)


def parse_problem(text: str) -> ProblemFile:
    try:
        document = json.loads(text)
    except json.JSONDecodeError as e:
        raise ProblemFileError(f"invalid JSON: {e.msg}", line=e.lineno) from None
    if not isinstance(document, dict):
        raise ProblemFileError("problem file must be a JSON object", line=1)

    for key in document:
        if key not in PROBLEM_KEYS:
            raise ProblemFileError("unknown key", key=key, line=_line_of(text, key))
    for key in ("kind", "domain", "kernels", "data", "lambda"):
        if key not in document:
            raise ProblemFileError("missing required key", key=key)

    def line(key: str) -> Optional[int]:
        return _line_of(text, key)

    try:
        kind = Kind(document["kind"])
    except ValueError:
        raise ProblemFileError(
            f"kind must be one of {[k.value for k in Kind]}, got {document['kind']!r}",
            key="kind",
            line=line("kind"),
        ) from None

    domain = document["domain"]
    if not isinstance(domain, list) or len(domain) != 2:
        raise ProblemFileError("domain must be [lo, hi]", key="domain", line=line("domain"))
    domain = [_number(v, "domain", line("domain")) for v in domain]

    spline_order = document.get("spline_order")
    if spline_order is not None and (isinstance(spline_order, bool) or not isinstance(spline_order, int)):
        raise ProblemFileError(
            f"spline_order must be an integer, got {spline_order!r}",
            key="spline_order",
            line=line("spline_order"),
        )

    raw_kernels = document["kernels"]
    if not isinstance(raw_kernels, list):
        raise ProblemFileError("kernels must be a list", key="kernels", line=line("kernels"))
    kernels = []
    for i, descriptor in enumerate(raw_kernels):
        try:
            kernels.append(Kernel.from_dict(descriptor, where=f"kernels[{i}]"))
        except ProblemFileError as e:
            raise ProblemFileError(e.message, key=e.key, line=line("kernels")) from None

    data = document["data"]
    if not isinstance(data, list):
        raise ProblemFileError("data must be a list", key="data", line=line("data"))
    data = [_number(v, f"data[{i}]", line("data")) for i, v in enumerate(data)]
    lam = _number(document["lambda"], "lambda", line("lambda"))

    solver = document.get("solver", {})
    if not isinstance(solver, dict):
        raise ProblemFileError("solver must be an object", key="solver", line=line("solver"))
    try:
        SolverOptions().with_overrides(solver)
    except ProblemFileError as e:
        raise ProblemFileError(e.message, key=e.key, line=line("solver")) from None
    except MalformedSpec as e:
        raise ProblemFileError(e.message, key="solver", line=line("solver")) from None

    seed = document.get("seed")
    if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int)):
        raise ProblemFileError(f"seed must be an integer, got {seed!r}", key="seed", line=line("seed"))

    try:
        spec = ProblemSpec.build(kind, domain, kernels, data, lam, spline_order)
    except ProblemFileError:
        raise
    except MalformedSpec as e:
        raise ProblemFileError(e.message, key=e.key, line=line(e.key) if e.key else None) from None
    return ProblemFile(spec=spec, solver=dict(solver), seed=seed)


def load_problem(path: Path) -> ProblemFile:
    return parse_problem(Path(path).read_text())


def problem_to_dict(
    spec: ProblemSpec, solver: Optional[Mapping[str, Any]] = None, seed: Optional[int] = None
) -> Dict[str, Any]:
    document: Dict[str, Any] = {
        "kind": spec.kind.value,
        "domain": [spec.domain.lo, spec.domain.hi],
    }
    if spec.spline_order is not None:
        document["spline_order"] = spec.spline_order
    document["kernels"] = [kernel.to_dict() for kernel in spec.kernels]
    document["data"] = list(spec.data)
    document["lambda"] = spec.lam
    if solver:
        document["solver"] = dict(solver)
    if seed is not None:
        document["seed"] = seed
    return document


def write_problem(
    path: Path, spec: ProblemSpec, solver: Optional[Mapping[str, Any]] = None, seed: Optional[int] = None
) -> None:
    Path(path).write_text(dumps(problem_to_dict(spec, solver, seed)))


@dataclass(frozen=True)
class AtomRecord:
    param: float
    sign: int
    weight: float


@dataclass(frozen=True)
class ResultFile:
    """Serialized outcome of a solve or an oracle run.

    `meta` holds the version string and timings and is excluded from equality.
    """

    kind: str
    source: str
    atoms: Tuple[AtomRecord, ...]
    null_coeffs: Tuple[float, ...]
    objective: float
    gap: Optional[float]
    dual_value: Optional[float]
    p: int
    dim_hn: int
    certified: bool
    iterations: int
    certificate: Optional[Dict[str, Any]] = None
    warnings: Tuple[str, ...] = ()
    meta: Dict[str, Any] = field(default_factory=dict, compare=False)

    @classmethod
    def from_solve(
        cls,
        spec: ProblemSpec,
        solution: SparseSolution,
        certificate: CertificateReport,
        report: SolverReport,
    ) -> "ResultFile":
        return cls(
            kind=spec.kind.value,
            source="solver",
            atoms=_records(solution),
            null_coeffs=solution.null_coeffs,
            objective=report.objective,
            gap=report.gap,
            dual_value=report.dual_value,
            p=report.p,
            dim_hn=report.dim_hn,
            certified=report.certified,
            iterations=report.iterations,
            certificate=certificate.to_dict(),
            warnings=report.warnings,
            meta={"version": __version__, "wall_time": report.wall_time},
        )

    @classmethod
    def from_oracle(cls, spec: ProblemSpec, result: OracleResult, dim_hn: int) -> "ResultFile":
        solution = result.to_solution(spec)
        return cls(
            kind=spec.kind.value,
            source=f"oracle-{result.mode.value}",
            atoms=_records(solution),
            null_coeffs=solution.null_coeffs,
            objective=result.objective,
            gap=None,
            dual_value=None,
            p=solution.p,
            dim_hn=dim_hn,
            certified=False,
            iterations=result.iterations,
            warnings=() if result.converged else ("iteration cap reached",),
            meta={"version": __version__, "grid": result.m, "converged": result.converged},
        )

    def to_solution(self, spec: ProblemSpec) -> SparseSolution:
        family = family_for(spec)
        return SparseSolution.build(
            [(family.make_atom(a.param, a.sign), a.weight) for a in self.atoms], self.null_coeffs
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "source": self.source,
            "atoms": [{"param": a.param, "sign": a.sign, "weight": a.weight} for a in self.atoms],
            "null_coeffs": list(self.null_coeffs),
            "objective": self.objective,
            "gap": self.gap,
            "dual_value": self.dual_value,
            "p": self.p,
            "dim_HN": self.dim_hn,
            "certified": self.certified,
            "iterations": self.iterations,
            "certificate": self.certificate,
            "warnings": list(self.warnings),
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, document: Mapping[str, Any]) -> "ResultFile":
        try:
            return cls(
                kind=document["kind"],
                source=document["source"],
                atoms=tuple(
                    AtomRecord(float(a["param"]), int(a["sign"]), float(a["weight"]))
                    for a in document["atoms"]
                ),
                null_coeffs=tuple(float(b) for b in document["null_coeffs"]),
                objective=document["objective"],
                gap=document["gap"],
                dual_value=document["dual_value"],
                p=document["p"],
                dim_hn=document["dim_HN"],
                certified=document["certified"],
                iterations=document["iterations"],
                certificate=document.get("certificate"),
                warnings=tuple(document.get("warnings", ())),
                meta=dict(document.get("meta", {})),
            )
        except KeyError as e:
            raise ProblemFileError("missing result field", key=str(e.args[0])) from None
        except (TypeError, ValueError) as e:
            raise ProblemFileError(f"bad result field: {e}") from None


def _records(solution: SparseSolution) -> Tuple[AtomRecord, ...]:
    return tuple(AtomRecord(atom.param, atom.sign, weight) for atom, weight in solution.atoms)


def dumps(document: Mapping[str, Any]) -> str:
    return json.dumps(document, indent=2) + "\n"


def write_result(path: Path, result: ResultFile) -> None:
    Path(path).write_text(dumps(result.to_dict()))


def load_result(path: Path) -> ResultFile:
    text = Path(path).read_text()
    try:
        document = json.loads(text)
    except json.JSONDecodeError as e:
        raise ProblemFileError(f"invalid JSON: {e.msg}", line=e.lineno) from None
    if not isinstance(document, dict):
        raise ProblemFileError("result file must be a JSON object", line=1)
    return ResultFile.from_dict(document)


def format_json(document: Mapping[str, Any], color: bool = False) -> str:
    text = dumps(document)
    if color:
        return highlight(text, JsonLexer(), TerminalFormatter())
    return text


def _write_csv(path: Path, frame: pd.DataFrame) -> None:
    frame.to_csv(path, index=False, float_format="%.17g")


def write_certificate_csv(
    path: Path, spec: ProblemSpec, w: Any, grid_factor: int = 10, lmo_grid: int = 1024
) -> None:
    _write_csv(path, certificate_curve(spec, w, grid_factor, lmo_grid))


def reconstruction_frame(
    spec: ProblemSpec, solution: SparseSolution, points: int = RECON_POINTS
) -> pd.DataFrame:
    """Spike list for measures; otherwise u(s) at `points` cell midpoints."""
    if spec.kind == Kind.MEASURES:
        positions, masses = spike_train(solution)
        return pd.DataFrame({"position": positions, "mass": masses})
    lo, hi = spec.domain
    s = lo + (np.arange(points) + 0.5) * (hi - lo) / points
    if spec.kind == Kind.TV1D:
        values = reconstruct_tv1d(solution, s)
    else:
        values = reconstruct_spline(solution, s, spec.spline_order)
    return pd.DataFrame({"s": s, "u": values})


def write_reconstruction_csv(
    path: Path, spec: ProblemSpec, solution: SparseSolution, points: int = RECON_POINTS
) -> None:
    _write_csv(path, reconstruction_frame(spec, solution, points))


def trace_frame(report: SolverReport) -> pd.DataFrame:
    return pd.DataFrame(
        [(e.iteration, e.objective, e.gap, e.atoms) for e in report.trace],
        columns=["iteration", "objective", "gap", "atoms"],
    )


def write_trace_csv(path: Path, report: SolverReport) -> None:
    _write_csv(path, trace_frame(report))


def truth_to_dict(spec: ProblemSpec, truth: SparseSolution) -> Dict[str, Any]:
    return {
        "kind": spec.kind.value,
        "atoms": [{"param": a.param, "sign": a.sign, "weight": a.weight} for a in _records(truth)],
        "null_coeffs": list(truth.null_coeffs),
    }