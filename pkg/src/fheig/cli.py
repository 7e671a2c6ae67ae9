"""Command-line front end: configuration, experiments and verification.

Configuration files are flat ``key = value`` text with section headers
(INI syntax, parsed by the standard library).  Every run is seeded; the
same configuration and seed produce byte-identical output files.  Floats
are written with the shortest round-tripping decimal (Python ``repr``).

Subcommands
    hardy-constant   sweep the (n, alpha, p) lattice, emit a CSV table
    solve            least eigenvalue (and the p = 2 sequence), emit
                     lambda table plus per-eigenfunction node files
    verify           run the theorem-level check suite, one report line
                     per check, exit 3 on any failure
    check-weight     admissibility proxies for the configured weight
    scaling-test     Rayleigh quotients under geometric rescaling

Exit codes: 0 success, 1 validation error, 2 non-convergence,
3 verification failure.  FHE_MAX_THREADS caps solver-trial parallelism.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import eigen
from . import nonlocal_form as nf
from .errors import ConvergenceError, ValidationError, VerificationError
from .grid import Grid, build_box_grid, build_interval_grid, restrict
from .hardy import HardyParams, hardy_constant
from .weights import (
    ProbePlan,
    Weight,
    check_Ap,
    constant_weight,
    example_weight,
    expression_weight,
    perturbed_weight,
    scale_weight,
)

DEFAULT_CONFIG = """\
[problem]
n = 1
alpha = 0.4
p = 2.0
mu = 0.0

[domain]
shape = interval
a = -1.0
b = 1.0
m = 64
r_ext = 1.0

[weight]
kind = constant
value = 1.0

[solver]
tol = 3e-8
max_iter = 20000
trials = 1
seed = 20240811
k_max = 10

[verify]
growth_ratio = 5.0
picone_pairs = 200
bl_kmax = 64
fd_probes = 5
simplicity_trials = 4
scaling_exponent = 8

[hardy]
n_values = 1 2
alpha_values = 0.25 0.5 0.75
p_values = 2 3
tol = 1e-8

[scaling]
direction = origin
r_exponent = 8
"""


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration (see DEFAULT_CONFIG for the schema)."""

    parser: configparser.ConfigParser
    seed: int

    @classmethod
    def load(cls, path: str | None, seed_override: int | None = None) -> "RunConfig":
        parser = configparser.ConfigParser()
        parser.read_string(DEFAULT_CONFIG)
        if path is not None:
            cfg_path = Path(path)
            if not cfg_path.exists():
                raise ValidationError(f"config file not found: {path}")
            user = configparser.ConfigParser()
            try:
                with open(cfg_path) as fh:
                    user.read_file(fh)
            except configparser.Error as exc:
                raise ValidationError(f"malformed config {path}: {exc}") from None
            has_seed = user.has_option("solver", "seed")
            for section in user.sections():
                if not parser.has_section(section):
                    parser.add_section(section)
                for key, value in user.items(section):
                    parser.set(section, key, value)
            if not has_seed and seed_override is None:
                raise ValidationError(
                    "runs must be reproducible: set seed in [solver] or pass --seed"
                )
        seed = seed_override if seed_override is not None else parser.getint("solver", "seed")
        parser.set("solver", "seed", str(seed))
        return cls(parser=parser, seed=seed)

    # section accessors -------------------------------------------------
    def params(self) -> HardyParams:
        sec = self.parser["problem"]
        return HardyParams(sec.getint("n"), sec.getfloat("alpha"), sec.getfloat("p"))

    def mu(self) -> float:
        return self.parser.getfloat("problem", "mu")

    def grid(self) -> Grid:
        sec = self.parser["domain"]
        shape = sec.get("shape", "interval").strip()
        r_ext = sec.getfloat("r_ext", 1.0)
        collar = sec.getfloat("collar", fallback=r_ext)
        if collar < r_ext:
            raise ValidationError(f"collar width {collar} must be at least r_ext {r_ext}")
        if shape == "interval":
            return build_interval_grid(sec.getfloat("a"), sec.getfloat("b"), sec.getint("m"), collar)
        if shape == "box":
            center = (sec.getfloat("center_x", 0.0), sec.getfloat("center_y", 0.0))
            halves = (sec.getfloat("half_width_x"), sec.getfloat("half_width_y"))
            ms = (sec.getint("m_x", sec.getint("m", fallback=16)),
                  sec.getint("m_y", sec.getint("m", fallback=16)))
            return build_box_grid(center, halves, ms, collar)
        raise ValidationError(f"unknown domain shape {shape!r} (interval or box)")

    def weight(self) -> Weight:
        sec = self.parser["weight"]
        kind = sec.get("kind", "constant").strip()
        if kind == "constant":
            return constant_weight(sec.getfloat("value", 1.0))
        if kind == "example":
            return example_weight(sec.get("name", "W1"), self.params())
        if kind == "expression":
            expr = sec.get("expr", fallback=None)
            if not expr:
                raise ValidationError("expression weights need expr = <formula in r>")
            singular = tuple(float(tok) for tok in sec.get("singular", "").split())
            origin_exp = sec.getfloat("origin_exponent", fallback=None)
            tail_exp = sec.getfloat("tail_exponent", fallback=None)
            return expression_weight(
                expr,
                v1_expr=sec.get("v1_expr", fallback=None) or None,
                v2_expr=sec.get("v2_expr", fallback=None) or None,
                singular_radii=singular,
                origin_exponent=origin_exp,
                tail_exponent=tail_exp,
            )
        raise ValidationError(f"unknown weight kind {kind!r} (constant, example, expression)")

    def probe_plan(self) -> ProbePlan:
        unbounded = self.parser.getboolean("weight", "unbounded", fallback=False)
        return ProbePlan(unbounded_domain=unbounded, seed=self.seed)

    def solver_options(self) -> eigen.SolverOptions:
        sec = self.parser["solver"]
        return eigen.SolverOptions(
            tol=sec.getfloat("tol", 1e-8),
            max_iter=sec.getint("max_iter", 20000),
            seed=self.seed,
            trials=sec.getint("trials", 1),
            mu_cap=sec.getfloat("mu_cap", 0.95),
        )


# deterministic CSV helpers ---------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(x) for x in row])


def _say(args, *msg) -> None:
    if not args.quiet:
        print(*msg)


# subcommands -------------------------------------------------------------

def cmd_hardy_constant(config: RunConfig, args) -> int:
    sec = config.parser["hardy"]
    ns = [int(t) for t in sec.get("n_values").split()]
    alphas = [float(t) for t in sec.get("alpha_values").split()]
    ps = [float(t) for t in sec.get("p_values").split()]
    tol = sec.getfloat("tol", 1e-8)
    rows = []
    for n in ns:
        for alpha in alphas:
            for p in ps:
                if abs(p - n / alpha) <= 1e-12 * n / alpha:
                    rows.append([n, alpha, p, "", "", "degenerate"])
                    _say(args, f"warning: skipping degenerate triple n={n} alpha={alpha} p={p}")
                    continue
                res = hardy_constant(HardyParams(n, alpha, p), tol=tol)
                rows.append([n, alpha, p, res.value, res.est_error, "ok"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "hardy_constants.csv", ["n", "alpha", "p", "C", "err", "status"], rows)
    _say(args, f"wrote {out / 'hardy_constants.csv'} ({len(rows)} rows)")
    return 0


def cmd_solve(config: RunConfig, args) -> int:
    params = config.params()
    grid = config.grid()
    form = nf.assemble(params, grid, config.mu())
    V = config.weight()
    opts = config.solver_options()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    k_max = config.parser.getint("solver", "k_max", fallback=1)
    if params.p == 2.0 and k_max > 1:
        report = eigen.solve_sequence_p2(form, V, k_max, opts)
        pairs = report.pairs
        sign_changes = report.sign_changes
    else:
        pair = eigen.solve_lambda1(form, V, opts)
        pairs = [pair]
        sign_changes = [eigen._has_sign_change(pair.function)]

    rows = [
        [k + 1, pr.value, pr.constraint_residual, pr.stationarity_residual,
         int(sign_changes[k]), pr.label]
        for k, pr in enumerate(pairs)
    ]
    _write_csv(out / "lambda_table.csv",
               ["k", "lambda", "constraint_residual", "stationarity_residual",
                "sign_change", "label"], rows)

    coords = grid.interior_coords
    coord_cols = [f"x{k + 1}" for k in range(grid.dimension)]
    for k, pr in enumerate(pairs):
        body = [list(coords[i]) + [pr.function[i]] for i in range(len(pr.function))]
        _write_csv(out / f"eigenfunction_{k + 1:02d}.csv", coord_cols + ["value"], body)

    _write_csv(out / "kernel_row_sums.csv", ["i", "row_sum"],
               [[i, s] for i, s in enumerate(form.kernel_row_sums())])

    _say(args, f"lambda_1 = {pairs[0].value!r}")
    if len(pairs) > 1:
        _say(args, f"computed {len(pairs)} eigenvalues up to lambda_{len(pairs)} = {pairs[-1].value!r}")
    _say(args, f"wrote outputs to {out}/")
    return 0


def _verify_checks(config: RunConfig, args):
    """Yield (name, passed, detail) for every theorem-level check."""
    params = config.params()
    grid = config.grid()
    mu = config.mu()
    form = nf.assemble(params, grid, mu)
    V = config.weight()
    opts = config.solver_options()
    vsec = config.parser["verify"]
    rng = np.random.default_rng(config.seed)
    p = params.p

    # gradient vs central differences
    fd_probes = vsec.getint("fd_probes", 5)
    worst_fd = 0.0
    for p_test in (2.0, 3.0, 4.0):
        alpha_t = params.alpha
        if abs(p_test - params.n / alpha_t) <= 1e-9:
            alpha_t = 0.3      # dodge the degenerate triple p = n/alpha
        params_t = HardyParams(params.n, alpha_t, p_test)
        form_t = nf.assemble(params_t, grid, 0.0)
        for _ in range(fd_probes):
            u = rng.uniform(-1.0, 1.0, form_t.n_dof)
            g = nf.gradient(form_t, u)
            for i in rng.choice(form_t.n_dof, size=3, replace=False):
                e = np.zeros(form_t.n_dof)
                e[i] = 1e-5
                fd = (nf.energy(form_t, u + e) - nf.energy(form_t, u - e)) / 2e-5
                worst_fd = max(worst_fd, abs(fd - g[i]))
    yield "gradient_fd", worst_fd <= 1e-5, f"max_abs_err={_fmt(worst_fd)}"

    # Picone nonnegativity and equality detection
    n_pairs = vsec.getint("picone_pairs", 200)
    min_entry = np.inf
    max_equal_agg = 0.0
    ok_equality = True
    for _ in range(n_pairs):
        u = np.abs(rng.standard_normal(form.n_dof))
        v = np.abs(rng.standard_normal(form.n_dof)) + 1e-3
        res = nf.picone_defect(form, u, v)
        min_entry = min(min_entry, res.min_entry)
        if res.aggregate <= 1e-10 and not np.allclose(u * v[0], v * u[0], rtol=1e-8, atol=1e-12):
            ok_equality = False
    for c in (1.0, 3.0):
        v = np.abs(rng.standard_normal(form.n_dof)) + 1e-3
        res = nf.picone_defect(form, c * v, v)
        max_equal_agg = max(max_equal_agg, abs(res.aggregate))
    picone_ok = min_entry >= -1e-12 and max_equal_agg <= 1e-10 and ok_equality
    yield "picone", picone_ok, (
        f"min_entry={_fmt(min_entry)} equal_case_aggregate={_fmt(max_equal_agg)}"
    )

    # Brezis-Lieb defect decay
    bl_k = vsec.getint("bl_kmax", 64)
    f_vec = rng.standard_normal(form.n_dof)
    g_vec = rng.standard_normal(form.n_dof)
    rep = nf.brezis_lieb_check(form, f_vec, g_vec, bl_k)
    zero_rep = nf.brezis_lieb_check(form, f_vec, np.zeros(form.n_dof), 4)
    d_first = abs(rep.defects[min(9, len(rep.defects) - 1)])
    d_last = abs(rep.defects[-1])
    bl_ok = d_last < d_first and float(np.max(np.abs(zero_rep.defects))) == 0.0
    yield "brezis_lieb", bl_ok, f"defect_k10={_fmt(d_first)} defect_k{bl_k}={_fmt(d_last)}"

    # simplicity at p = 3 (nonlinear route)
    params3 = HardyParams(params.n, min(params.alpha, 0.3), 3.0)
    form3 = nf.assemble(params3, grid, 0.0)
    simp = eigen.verify_simplicity(
        form3, V, vsec.getint("simplicity_trials", 4),
        replace(opts, tol=max(opts.tol, 1e-8)), alignment_tol=1e-6,
    )
    yield "simplicity", simp.passed, (
        f"min_alignment={_fmt(simp.min_alignment)} lambda_spread={_fmt(simp.lambda_spread)}"
    )

    # sign structure of the p = 2 spectrum
    if p == 2.0:
        spectrum = eigen.solve_sequence_p2(form, V, max(5, config.parser.getint("solver", "k_max", fallback=5)), opts)
    else:
        form2 = nf.assemble(HardyParams(params.n, params.alpha, 2.0), grid, mu)
        spectrum = eigen.solve_sequence_p2(form2, V, 5, opts)
    sign = eigen.verify_sign_properties(spectrum)
    yield "sign_properties", sign.passed, (
        f"first_one_signed={sign.first_one_signed} higher_changing={all(sign.higher_sign_changing)}"
    )

    # strict monotonicity in the weight, plus constraint homogeneity
    wrep = eigen.verify_weight_monotonicity(form, V, perturbed_weight(V), opts)
    lam_v = wrep.lambda_high
    lam_2v = eigen.solve_lambda1(form, scale_weight(V, 2.0), opts).value
    hom_err = abs(lam_2v - lam_v / 2.0) / (lam_v / 2.0)
    wm_ok = wrep.passed and hom_err <= 1e-10
    yield "weight_monotonicity", wm_ok, (
        f"margin={_fmt(wrep.margin)} homogeneity_rel_err={_fmt(hom_err)}"
    )

    # strict monotonicity in the domain
    mid = sum(grid.bounds[0]) / 2.0
    rel = restrict(grid, lambda x: x[0] > mid)
    drep = eigen.verify_domain_monotonicity(rel, V, params, mu, opts)
    yield "domain_monotonicity", drep.passed, (
        f"lambda_parent={_fmt(drep.lambda_low)} lambda_child={_fmt(drep.lambda_high)} "
        f"margin={_fmt(drep.margin)}"
    )

    # scaling collapse with the inadmissible weight, W1 as control
    pa = params.p_alpha
    k_exp = vsec.getint("scaling_exponent", 8)
    r_seq = 2.0 ** -np.arange(0, k_exp + 1)
    X = grid.interior_coords
    u0 = np.exp(-np.sum(X ** 2, axis=1) / (2 * (0.1 * grid.domain_measure) ** 2))
    v_sing = expression_weight(
        f"r**(-{pa + 0.5!r})", name="hardy-supercritical",
        singular_radii=(0.0,), origin_exponent=pa + 0.5,
    )
    collapse = eigen.scaling_collapse_test(params, grid, v_sing, u0, r_seq, "origin", mu)
    control = eigen.scaling_collapse_test(params, grid, example_weight("W1", params), u0, r_seq, "origin", mu)
    sc_ok = (
        collapse.monotone_decreasing
        and collapse.collapse_ratio >= 10.0
        and float(np.min(control.quotients)) >= 0.5 * control.quotients[0]
    )
    yield "scaling_collapse", sc_ok, (
        f"collapse_ratio={_fmt(collapse.collapse_ratio)} "
        f"control_min_over_base={_fmt(float(np.min(control.quotients) / control.quotients[0]))}"
    )

    # eigenvalue growth (p = 2 proxy)
    growth_form = form if p == 2.0 else nf.assemble(HardyParams(params.n, params.alpha, 2.0), grid, mu)
    spectrum10 = eigen.solve_sequence_p2(growth_form, V, 10, opts)
    growth = eigen.lambda_growth_check(spectrum10, vsec.getfloat("growth_ratio", 5.0))
    yield "lambda_growth", growth.passed, (
        f"ratio={_fmt(growth.ratio)} nondecreasing={growth.nondecreasing}"
    )

    # admissibility of the reference examples; their formulas carry the
    # exponent 2*alpha and are stated for p = 2, so probe them there
    alpha_w = params.alpha
    if abs(2.0 - params.n / alpha_w) <= 1e-9:
        alpha_w = 0.4
    params_w = HardyParams(params.n, alpha_w, 2.0)
    plan = ProbePlan(unbounded_domain=True, seed=config.seed)
    rep_w1 = check_Ap(example_weight("W1", params_w), params_w, grid, plan)
    rep_w3 = check_Ap(example_weight("W3", params_w), params_w, grid, plan)
    adm_ok = rep_w1.verdict == "admissible" and rep_w3.verdict == "inadmissible"
    yield "admissibility_examples", adm_ok, (
        f"W1={rep_w1.verdict} W3={rep_w3.verdict}"
    )

    # discrete Hardy ratio against the sharp constant
    c_sharp = hardy_constant(params, tol=1e-6).value
    ratio = nf.discrete_hardy_min_ratio(form, n_samples=500, seed=config.seed)
    dh_ok = ratio > 0.0 and ratio >= 0.5 * c_sharp
    yield "discrete_hardy", dh_ok, f"min_ratio={_fmt(ratio)} sharp={_fmt(c_sharp)}"


def cmd_verify(config: RunConfig, args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = []
    failures = []
    for name, ok, detail in _verify_checks(config, args):
        status = "PASS" if ok else "FAIL"
        line = f"{name} {status} {detail}"
        lines.append(line)
        _say(args, line)
        if not ok:
            failures.append(name)
    with open(out / "verify_report.txt", "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")
    if failures:
        raise VerificationError("failing checks: " + ", ".join(failures))
    _say(args, f"all {len(lines)} checks passed; report at {out / 'verify_report.txt'}")
    return 0


def cmd_check_weight(config: RunConfig, args) -> int:
    params = config.params()
    grid = config.grid()
    V = config.weight()
    report = check_Ap(V, params, grid, config.probe_plan())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for key, seq in report.local_sequences.items():
        for step, val in enumerate(seq):
            rows.append(["local", key, step, val])
    if report.tail_sequence is not None:
        for step, val in enumerate(report.tail_sequence):
            rows.append(["tail", "dyadic", step, val])
    _write_csv(out / "ap_probes.csv", ["proxy", "target", "step", "value"], rows)
    _say(args, f"verdict: {report.verdict}")
    _say(args, f"v1_ok={report.v1_ok} local_ok={report.local_ok} tail_ok={report.tail_ok}")
    for note in report.notes:
        _say(args, f"note: {note}")
    with open(out / "ap_report.txt", "w", newline="") as fh:
        fh.write(f"verdict {report.verdict}\n")
        fh.write(f"v1_ok {report.v1_ok}\nlocal_ok {report.local_ok}\ntail_ok {report.tail_ok}\n")
    return 0


def cmd_scaling_test(config: RunConfig, args) -> int:
    params = config.params()
    grid = config.grid()
    V = config.weight()
    sec = config.parser["scaling"]
    direction = sec.get("direction", "origin").strip()
    k_exp = sec.getint("r_exponent", 8)
    if direction == "origin":
        r_seq = 2.0 ** -np.arange(0, k_exp + 1)
    else:
        r_seq = 2.0 ** np.arange(0, k_exp + 1)
    X = grid.interior_coords
    center = np.array([np.mean(grid.bounds[k]) for k in range(grid.dimension)])
    if direction == "infinity":
        center = center + 0.25 * np.array([hi - lo for lo, hi in grid.bounds])
    u0 = np.exp(-np.sum((X - center) ** 2, axis=1) / (2 * (0.05 * grid.domain_measure) ** 2))
    if direction == "infinity":
        u0[grid.radii("interior") < 2.0 * grid.cell_diameter] = 0.0
    table = eigen.scaling_collapse_test(params, grid, V, u0, r_seq, direction, config.mu())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "scaling.csv", ["r", "rayleigh_quotient"],
               list(zip(table.r_values, table.quotients)))
    _say(args, f"quotient {table.quotients[0]!r} -> {table.quotients[-1]!r} "
               f"(monotone decreasing: {table.monotone_decreasing})")
    return 0


def build_arg_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fheig",
        description="Eigenvalues of the p-fractional Hardy operator with sign-changing weights",
    )
    parser.add_argument("--config", default=None, help="path to an INI run configuration")
    parser.add_argument("--out", default="fheig_out", help="output directory (default fheig_out)")
    parser.add_argument("--seed", type=int, default=None, help="override the configured seed")
    parser.add_argument("--quiet", action="store_true", help="suppress progress output")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("hardy-constant", "solve", "verify", "check-weight", "scaling-test"):
        sub.add_parser(name)
    return parser


_COMMANDS = {
    "hardy-constant": cmd_hardy_constant,
    "solve": cmd_solve,
    "verify": cmd_verify,
    "check-weight": cmd_check_weight,
    "scaling-test": cmd_scaling_test,
}


def main(argv=None) -> int:
    args = build_arg_parser().parse_args(argv)
    try:
        config = RunConfig.load(args.config, args.seed)
        return _COMMANDS[args.command](config, args)
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 1
    except ConvergenceError as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return 2
    except VerificationError as exc:
        print(f"verification failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
