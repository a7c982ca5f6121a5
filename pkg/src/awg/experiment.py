"""End-to-end experiments: problem setup, preconditioner build, solve, report.

Configurations are flat INI files (see ``ExperimentConfig.from_ini``). Each
run yields a :class:`TableRow` with the columns kappa, iterations, lambda_min,
lambda_max, coarse dimension and n_minus.
"""
from __future__ import annotations

import configparser
import csv
import dataclasses
import json
import os
import time
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources

import numpy as np

from .dd import Partition, SplitOperator, bfs_partition, check_minimal_overlap, grid_partition, OverlapError
from .fem import AssembledSystem, CoefficientField, MeshSpec, assemble, write_dof_map
from .geneo import ThresholdSpec
from .krylov import dense_spectrum, pcg
from .linalg import (NotSPDError, SparseSymMatrix, cholesky, read_matrix_market, read_vector,
                     write_matrix_market, write_vector)
from .precond import PreconditionerConfig, build_preconditioner

DENSE_CAP = 2000
COLUMNS = ("label", "kappa", "iterations", "lambda_min", "lambda_max", "coarse_dim", "n_minus")


class PipelineError(RuntimeError):
    """An error raised inside one stage of a run, tagged with the stage name."""

    def __init__(self, stage, err):
        self.stage = stage
        self.__cause__ = err
        super().__init__(f"[{stage}] {type(err).__name__}: {err}")


class _stage:
    def __init__(self, name, timings):
        self.name = name
        self.timings = timings

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        self.timings[self.name] = time.perf_counter() - self.t0
        if exc is not None and not isinstance(exc, PipelineError):
            raise PipelineError(self.name, exc)
        return False


def _num(text):
    """Parse ``0.3``, ``1e11`` or a fraction such as ``1/21``."""
    text = str(text).strip()
    if "/" in text:
        return float(Fraction(text))
    return float(text)


# ---------------------------------------------------------------------------
# configuration

@dataclass
class ExperimentConfig:
    label: str = ""
    kind: str = "builtin"  # builtin | external
    width: float = 3.0
    height: float = 3.0
    h: float = 1 / 21
    nu: float = 0.3
    young: str = "layers"  # layers | constant
    layers: int = 6
    E1: float = 1e11
    E2: float = 1e7
    matrix: str | None = None
    rhs: str | None = None
    partition_file: str | None = None
    auto_parts: int | None = None
    sub_w: float = 1.0
    sub_h: float = 1.0
    precond: PreconditionerConfig = field(default_factory=PreconditionerConfig)
    rtol: float = 1e-10
    maxit: int = 1000
    norm: str = "preconditioned"
    eig_method: str = "auto"

    def coefficient(self) -> CoefficientField:
        if self.young == "constant":
            return CoefficientField.constant(self.E1, self.nu)
        if self.young == "layers":
            return CoefficientField.layers(self.layers, self.E1, self.E2, self.nu)
        raise ValueError(f"unknown Young's modulus rule {self.young!r}")

    def mesh(self) -> MeshSpec:
        return MeshSpec(self.width, self.height, self.h)

    def replace(self, **kw) -> "ExperimentConfig":
        pc = {k[3:]: kw.pop(k) for k in list(kw) if k.startswith("pc_")}
        out = dataclasses.replace(self, **kw)
        if pc:
            th = pc.pop("threshold", out.precond.threshold)
            out = dataclasses.replace(out, precond=dataclasses.replace(out.precond, threshold=th, **pc))
        return out

    def problem_key(self):
        if self.kind == "external":
            return ("external", self.matrix, self.rhs, self.partition_file, self.auto_parts)
        return ("builtin", self.width, self.height, self.h, self.nu, self.young, self.layers,
                self.E1, self.E2, self.sub_w, self.sub_h, self.eig_method)

    # -- INI round trip -----------------------------------------------------
    @classmethod
    def from_ini(cls, path_or_text) -> "ExperimentConfig":
        cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        if os.path.exists(str(path_or_text)):
            cp.read(path_or_text)
            base = os.path.dirname(os.path.abspath(path_or_text))
        else:
            cp.read_string(str(path_or_text))
            base = os.getcwd()
        get = lambda sec, key, default=None: cp.get(sec, key, fallback=default)  # noqa: E731

        def path(v):
            return None if v in (None, "") else os.path.normpath(os.path.join(base, v))

        cfg = cls()
        cfg.label = get("output", "label", "") or ""
        cfg.kind = get("problem", "kind", "builtin")
        for key in ("width", "height", "h", "nu", "E1", "E2"):
            v = get("problem", key)
            if v is not None:
                setattr(cfg, key, _num(v))
        cfg.young = get("problem", "young", cfg.young)
        cfg.layers = int(get("problem", "layers", cfg.layers))
        cfg.matrix = path(get("problem", "matrix"))
        cfg.rhs = path(get("problem", "rhs"))
        cfg.partition_file = path(get("partition", "file"))
        auto = get("partition", "auto")
        cfg.auto_parts = int(auto) if auto else None
        cfg.sub_w = _num(get("partition", "sub_w", "1"))
        cfg.sub_h = _num(get("partition", "sub_h", "1"))

        one = get("preconditioner", "one_level", "NN")
        variant = get("preconditioner", "coarse", one)
        ts = get("preconditioner", "tau_sharp", "0.1")
        tf = get("preconditioner", "tau_flat", "10")
        if variant.lower() == "none":
            th = None
        else:
            th = ThresholdSpec(variant,
                               tau_sharp=_num(ts) if variant in ("NN", "AS") else None,
                               tau_flat=_num(tf) if variant in ("AS_PLUS", "AS") else None)
        cfg.precond = PreconditionerConfig(
            one_level=one,
            composition=get("preconditioner", "composition", "hybrid"),
            threshold=th,
            awg_mode=get("preconditioner", "awg_mode", "ad"),
            w_rtol=_num(get("preconditioner", "w_rtol", "1e-10")),
            w_norm=get("preconditioner", "w_norm", "preconditioned"),
        )
        cfg.rtol = _num(get("solver", "rtol", "1e-10"))
        cfg.maxit = int(get("solver", "maxit", "1000"))
        cfg.norm = get("solver", "norm", "preconditioned")
        cfg.eig_method = get("solver", "eig_method", "auto")
        return cfg

    def to_ini(self) -> str:
        pc = self.precond
        th = pc.threshold
        lines = ["[problem]", f"kind = {self.kind}"]
        if self.kind == "builtin":
            lines += [f"width = {self.width!r}", f"height = {self.height!r}", f"h = {self.h!r}",
                      f"nu = {self.nu!r}", f"young = {self.young}", f"layers = {self.layers}",
                      f"E1 = {self.E1!r}", f"E2 = {self.E2!r}"]
        else:
            lines += [f"matrix = {self.matrix}", f"rhs = {self.rhs}"]
        lines += ["", "[partition]"]
        if self.partition_file:
            lines.append(f"file = {self.partition_file}")
        elif self.auto_parts:
            lines.append(f"auto = {self.auto_parts}")
        else:
            lines += [f"sub_w = {self.sub_w!r}", f"sub_h = {self.sub_h!r}"]
        lines += ["", "[preconditioner]", f"one_level = {pc.one_level}",
                  f"composition = {pc.composition}",
                  f"coarse = {th.variant if th else 'none'}"]
        if th is not None and th.tau_sharp is not None:
            lines.append(f"tau_sharp = {th.tau_sharp!r}")
        if th is not None and th.tau_flat is not None:
            lines.append(f"tau_flat = {th.tau_flat!r}")
        lines += [f"awg_mode = {pc.awg_mode}", f"w_rtol = {pc.w_rtol!r}", f"w_norm = {pc.w_norm}",
                  "", "[solver]", f"rtol = {self.rtol!r}", f"maxit = {self.maxit}",
                  f"norm = {self.norm}", f"eig_method = {self.eig_method}",
                  "", "[output]", f"label = {self.label}", ""]
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# problems

@dataclass(eq=False)
class Problem:
    A: SparseSymMatrix
    b: np.ndarray
    partition: Partition
    system: AssembledSystem | None = None

    @property
    def n(self):
        return self.A.n


def builtin_problem(cfg: ExperimentConfig) -> Problem:
    system = assemble(cfg.mesh(), cfg.coefficient())
    part = grid_partition(system.mesh, system.dof_map, cfg.sub_w, cfg.sub_h)
    return Problem(system.A, system.b, part, system)


def import_external(matrix_path, rhs_path=None, partition_path=None, auto_partition=None,
                    spd_check_max=DENSE_CAP) -> Problem:
    """Load a coordinate-format matrix, right-hand side and partition.

    Without a partition file ``auto_partition`` parts are produced by the
    breadth-first partitioner. Matrices up to ``spd_check_max`` rows are checked
    for positive definiteness with a dense Cholesky; larger ones are caught by
    the PCG breakdown test.
    """
    A = read_matrix_market(matrix_path)
    b = read_vector(rhs_path) if rhs_path else np.ones(A.n)
    if b.shape != (A.n,):
        raise ValueError(f"right-hand side has length {len(b)}, matrix has {A.n} rows")
    if partition_path:
        part = Partition.read(partition_path, A.n)
        bad = check_minimal_overlap(A, part)
        if bad:
            raise OverlapError(bad)
    elif auto_partition:
        part = bfs_partition(A, int(auto_partition))
    else:
        raise ValueError("either a partition file or an automatic part count is required")
    if A.n <= spd_check_max:
        cholesky(A.toarray())  # raises NotSPDError
    return Problem(A, b, part, None)


def build_problem(cfg: ExperimentConfig) -> Problem:
    if cfg.kind == "builtin":
        return builtin_problem(cfg)
    if cfg.kind == "external":
        return import_external(cfg.matrix, cfg.rhs, cfg.partition_file, cfg.auto_parts)
    raise ValueError(f"unknown problem kind {cfg.kind!r}")


def export_problem(problem: Problem, out_dir, stem="problem"):
    """Write matrix, right-hand side, partition and (if known) dof map files."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {"matrix": os.path.join(out_dir, f"{stem}.mtx"),
             "rhs": os.path.join(out_dir, f"{stem}_rhs.txt"),
             "partition": os.path.join(out_dir, f"{stem}_partition.txt")}
    write_matrix_market(paths["matrix"], problem.A)
    write_vector(paths["rhs"], problem.b)
    problem.partition.write(paths["partition"])
    if problem.system is not None:
        paths["dofmap"] = os.path.join(out_dir, f"{stem}_dofmap.txt")
        write_dof_map(paths["dofmap"], problem.system)
    return paths


# ---------------------------------------------------------------------------
# runs

@dataclass(frozen=True)
class TableRow:
    label: str
    kappa: float
    iterations: int
    lambda_min: float
    lambda_max: float
    coarse_dim: int
    n_minus: int

    def as_list(self):
        return [getattr(self, c) for c in COLUMNS]

    def fmt(self):
        return (f"{self.label:<34s} kappa={self.kappa:10.4g}  It={self.iterations:4d}  "
                f"lmin={self.lambda_min:9.3g}  lmax={self.lambda_max:7.3g}  "
                f"#V0={self.coarse_dim:4d}  n-={self.n_minus:4d}")


@dataclass(eq=False)
class RunResult:
    row: TableRow
    report: dict
    solve: object
    precond: object = None
    problem: Problem | None = None


class RunCache:
    """Share problems, splittings and second coarse spaces between runs."""

    def __init__(self):
        self.problems = {}
        self.ops = {}
        self.seconds = {}

    def problem(self, cfg):
        key = cfg.problem_key()
        if key not in self.problems:
            self.problems[key] = build_problem(cfg)
        return self.problems[key]


def run(cfg: ExperimentConfig, dense_verify=False, dump_spectra=False, out_dir=None,
        cache: RunCache | None = None, problem: Problem | None = None) -> RunResult:
    """Execute one experiment and return its table row and report."""
    timings = {}
    with _stage("problem", timings):
        if problem is None:
            problem = cache.problem(cfg) if cache else build_problem(cfg)
    with _stage("splitting", timings):
        key = (cfg.problem_key(), cfg.eig_method)
        op = cache.ops.get(key) if cache else None
        if op is None:
            op = SplitOperator.build(problem.A, problem.partition, cfg.eig_method)
            if cache:
                cache.ops[key] = op
    with _stage("preconditioner", timings):
        pc = cfg.precond
        h2key = (key, pc.one_level, pc.composition, pc.threshold, pc.w_rtol, pc.w_norm)
        second = cache.seconds.get(h2key) if cache else None
        pre = build_preconditioner(pc, op, cfg.eig_method, second=second)
        if cache and pre.second is not None:
            cache.seconds[h2key] = pre.second
    with _stage("solve", timings):
        x, rep = pcg(op.apply_A, pre.H, problem.b, cfg.rtol, cfg.maxit, cfg.norm)
    row = TableRow(cfg.label or pc.label(), float(rep.kappa_estimate), int(rep.iterations),
                   float(rep.ritz_min), float(rep.ritz_max), int(pre.coarse_dim), int(op.n_minus))
    report = {
        "label": row.label,
        "row": dataclasses.asdict(row),
        "n": problem.n,
        "N": problem.partition.N,
        "subdomain_sizes": problem.partition.sizes(),
        "n_minus_per_subdomain": [ls.n_strict for ls in op.splits],
        "zero_modes_per_subdomain": [ls.n_neg - ls.n_strict for ls in op.splits],
        "coarse_per_subdomain": [] if pre.coarse is None else list(pre.coarse.counts),
        "coarse_rank": 0 if pre.coarse is None else pre.coarse.rank,
        "w_rank": None if pre.second is None else pre.second.n_minus,
        "w_inner_iterations": None if pre.second is None else list(pre.second.inner_iterations),
        "solve": {"iterations": rep.iterations, "converged": rep.converged, "norm": rep.norm,
                  "true_relative_residual": rep.true_residual,
                  "residual_history": rep.residual_history.tolist()},
        "timings": timings,
        "config": cfg.to_ini(),
    }
    if dense_verify:
        with _stage("dense-verify", timings):
            if problem.n > DENSE_CAP:
                report["dense_verify"] = {"skipped": f"n = {problem.n} > {DENSE_CAP}"}
            else:
                ev = dense_spectrum(op.apply_A, pre.H, problem.n, DENSE_CAP)
                report["dense_verify"] = {"lambda_min": float(ev[0]), "lambda_max": float(ev[-1]),
                                          "kappa": float(ev[-1] / ev[0])}
    result = RunResult(row, report, rep, pre, problem)
    if out_dir:
        write_outputs(result, out_dir, dump_spectra)
    return result


def write_outputs(result: RunResult, out_dir, dump_spectra=False, stem=None):
    os.makedirs(out_dir, exist_ok=True)
    stem = stem or _slug(result.row.label)
    write_rows(os.path.join(out_dir, f"{stem}_row.csv"), [result.row])
    with open(os.path.join(out_dir, f"{stem}_report.json"), "w") as fh:
        json.dump(result.report, fh, indent=1, default=float)
    with open(os.path.join(out_dir, f"{stem}_residuals.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "relative_residual"])
        for k, r in enumerate(result.solve.residual_history, 1):
            w.writerow([k, repr(float(r))])
    if dump_spectra and result.precond is not None and result.precond.coarse is not None:
        with open(os.path.join(out_dir, f"{stem}_spectra.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["subdomain", "pencil", "index", "eigenvalue"])
            for s, spec in enumerate(result.precond.coarse.spectra):
                for name, vals in spec.items():
                    for k, v in enumerate(vals):
                        w.writerow([s, name, k, repr(float(v))])


def _slug(text):
    keep = "".join(c if c.isalnum() or c in "-_." else "_" for c in text)
    return "_".join(p for p in keep.split("_") if p) or "run"


def write_rows(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(COLUMNS)
        for r in rows:
            w.writerow([r.label, repr(r.kappa), r.iterations, repr(r.lambda_min),
                        repr(r.lambda_max), r.coarse_dim, r.n_minus])


def read_rows(path):
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(TableRow(rec["label"], float(rec["kappa"]), int(rec["iterations"]),
                                 float(rec["lambda_min"]), float(rec["lambda_max"]),
                                 int(rec["coarse_dim"]), int(rec["n_minus"])))
    return rows


# ---------------------------------------------------------------------------
# sweeps

SWEEP_AXES = ("tau_sharp", "tau_flat", "nu", "E", "w_rtol", "layers", "N")


def apply_axis(cfg: ExperimentConfig, axis, value) -> ExperimentConfig:
    """Copy of ``cfg`` with one sweep parameter set."""
    if axis == "tau_sharp":
        th = cfg.precond.threshold
        return cfg.replace(label=f"tau_sharp={value:g}",
                           pc_threshold=dataclasses.replace(th, tau_sharp=float(value)))
    if axis == "tau_flat":
        th = cfg.precond.threshold
        return cfg.replace(label=f"tau_flat={value:g}",
                           pc_threshold=dataclasses.replace(th, tau_flat=float(value)))
    if axis == "nu":
        return cfg.replace(label=f"nu={value:g}", nu=float(value))
    if axis == "w_rtol":
        return cfg.replace(label=f"w_rtol={value:g}", pc_w_rtol=float(value))
    if axis == "E":
        e1, e2 = value
        return cfg.replace(label=f"(E1,E2)=({e1:g},{e2:g})", young="layers", E1=float(e1),
                           E2=float(e2))
    if axis == "layers":
        if str(value).startswith("E="):
            E = _num(str(value)[2:])
            return cfg.replace(label=str(value), young="constant", E1=E, E2=E)
        return cfg.replace(label=f"{int(value)} layers", young="layers", layers=int(value))
    if axis == "N":
        N = int(value)
        return cfg.replace(label=f"N={N}", width=float(N), height=1.0, sub_w=1.0, sub_h=1.0)
    raise ValueError(f"unknown sweep axis {axis!r}; choose from {SWEEP_AXES}")


def parse_axis_values(axis, text):
    items = [t.strip() for t in text.split(",") if t.strip()]
    if axis == "E":
        return [tuple(_num(p) for p in t.strip("()").split(":")) for t in items]
    if axis == "layers":
        return [t if t.startswith("E=") else int(t) for t in items]
    if axis == "N":
        return [int(t) for t in items]
    return [_num(t) for t in items]


def sweep(template: ExperimentConfig, axis, values, cache=None, **run_kw):
    """One run per axis value, in the given order."""
    cache = cache or RunCache()
    return [run(apply_axis(template, axis, v), cache=cache, **run_kw).row for v in values]


# ---------------------------------------------------------------------------
# named configurations and tables

def headline_config(**kw) -> ExperimentConfig:
    """3 x 3 unit squares, h = 1/21, six hard layers, H3,ad on NN-hybrid(0.1)."""
    return ExperimentConfig(label="headline").replace(**kw)


def bar_config(N, **kw) -> ExperimentConfig:
    return ExperimentConfig(label=f"N={N}", width=float(N), height=1.0, h=1 / 14).replace(**kw)


BUILTINS = {
    "headline": lambda: headline_config(),
    "small-3x3": lambda: ExperimentConfig(label="small-3x3", h=1 / 7),
    "small-2x2-constant": lambda: ExperimentConfig(label="small-2x2-constant", width=2.0, height=2.0,
                                                   h=1 / 7, young="constant", nu=0.4),
    "small-3x3-AS": lambda: ExperimentConfig(label="small-3x3-AS", h=1 / 7).replace(
        pc_one_level="AS", pc_threshold=ThresholdSpec("AS", 0.1, 10.0)),
    "bar-2": lambda: bar_config(2, label="bar-2"),
    "bar-4": lambda: bar_config(4, label="bar-4"),
    "bar-8": lambda: bar_config(8, label="bar-8"),
}


def builtin(name) -> ExperimentConfig:
    try:
        return BUILTINS[name]()
    except KeyError:
        raise KeyError(f"unknown builtin configuration {name!r}; known: {sorted(BUILTINS)}") from None


def table1_configs():
    base = headline_config()
    h2 = [("NN-hyb(0.1)", dict(pc_one_level="NN", pc_composition="hybrid",
                               pc_threshold=ThresholdSpec("NN", tau_sharp=0.1))),
          ("AS-hyb(0.1,10)", dict(pc_one_level="AS", pc_composition="hybrid",
                                  pc_threshold=ThresholdSpec("AS", 0.1, 10.0))),
          ("AS+-hyb(10)", dict(pc_one_level="AS_PLUS", pc_composition="hybrid",
                               pc_threshold=ThresholdSpec("AS_PLUS", tau_flat=10.0))),
          ("AS+-ad(10)", dict(pc_one_level="AS_PLUS", pc_composition="additive",
                              pc_threshold=ThresholdSpec("AS_PLUS", tau_flat=10.0)))]
    out = []
    for mode in ("ad", "hyb"):
        for name, kw in h2:
            out.append(base.replace(label=f"H3,{mode} / {name}", pc_awg_mode=mode, **kw))
    out.append(base.replace(label="one-level AS", maxit=150, pc_one_level="AS",
                            pc_threshold=None, pc_awg_mode="none"))
    return out


TABLE_SWEEPS = {
    2: ("nu", [0.2, 0.3, 0.35, 0.4, 0.45, 0.49],
        dict(young="constant", E1=1e11, E2=1e11, pc_threshold=ThresholdSpec("NN", tau_sharp=0.05))),
    3: ("E", [(1e5, 1e11), (1e7, 1e11), (1e9, 1e11), (1e11, 1e11), (1e11, 1e9), (1e11, 1e7),
              (1e11, 1e5)], {}),
    4: ("tau_sharp", [0.001, 0.01, 0.05, 0.1, 0.2, 0.5], {}),
    5: ("w_rtol", [1e-10, 1e-2, 0.05, 0.1, 0.5, 0.9], {}),
    6: ("layers", ["E=1e11", 9, 6, 3, "E=1e7"], {}),
    7: ("N", [2, 4, 8, 15, 29], dict(h=1 / 14)),
}
TABLE_TITLES = {
    1: "AWG preconditioners and the one-level baseline, 3x3 layered case",
    2: "Poisson ratio sweep, constant E = 1e11, tau_sharp = 0.05",
    3: "Young's modulus values (E1 on hard layers, E2 elsewhere)",
    4: "Coarse threshold tau_sharp sweep",
    5: "Tolerance of the inner solves that build W (nu = 0.3 and nu = 0.4)",
    6: "Number of hard layers",
    7: "Weak scaling on the [N, 1] bar",
}


def table_configs(k):
    """The list of configurations behind table k (1..7)."""
    if k == 1:
        return table1_configs()
    if k not in TABLE_SWEEPS:
        raise ValueError("table number must be between 1 and 7")
    axis, values, kw = TABLE_SWEEPS[k]
    base = headline_config(**kw)
    cfgs = [apply_axis(base, axis, v) for v in values]
    if k == 5:
        base4 = headline_config(nu=0.4)
        cfgs += [apply_axis(base4, axis, v).replace(label=f"nu=0.4 w_rtol={v:g}") for v in values]
        cfgs[: len(values)] = [c.replace(label=f"nu=0.3 {c.label}") for c in cfgs[: len(values)]]
    return cfgs


def reference_table(k):
    """Reference rows for table k as a list of dicts (missing values are None)."""
    data = json.loads(resources.files("awg").joinpath("data/reference_tables.json").read_text())
    return data[str(k)]


def run_table(k, out_dir=None, dense_verify=False, progress=None):
    cache = RunCache()
    rows = []
    for cfg in table_configs(k):
        res = run(cfg, dense_verify=dense_verify, cache=cache)
        rows.append(res.row)
        if progress:
            progress(res.row)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        write_rows(os.path.join(out_dir, f"table{k}.csv"), rows)
    return rows
