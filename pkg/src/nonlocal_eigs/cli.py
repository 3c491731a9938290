"""Command-line runner: ``run <config>``, ``list-scenarios`` and ``sweep``.

Exit status: 0 when every verdict passes (inconclusive verdicts only warn),
1 on a failed verdict or a numerical failure, 2 on invalid input.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import yaml

from .errors import NumericalError, ValidationError
from .geometry import build_domain, make_field
from .operator import eigenpair, residual, spectrum
from .scenarios import Scenario, build_setup, get_scenario, list_scenarios
from .shape import (DEFAULT_STEPS, THREADS_ENV, eigenfunction_derivative, hadamard_derivative,
                    pullback_check, scenario_hadamard, thread_count)

logger = logging.getLogger("nonlocal_eigs")

TASKS = ("spectrum", "hadamard", "pullback", "eigfun-derivative", "faber-krahn", "rearrange-suite")

DEFAULT_TOLERANCES = {
    "rel_err": 0.02,
    "manifold_rel_err": 0.05,
    "neumann_zero": 1e-10,
    "residual": 1e-8,
    "pullback": 1e-8,
    "solvability": 1e-4,
    "orthogonality": 1e-12,
    "slack": 1e-8,
}

CONFIG_KEYS = {"scenario", "task", "resolution", "domain", "kernel", "rule", "hole", "ambient",
               "eigen_index", "fields", "steps", "tolerances", "output", "seed", "trials", "runs",
               "embedding"}


def fmt(x):
    """Seventeen significant digits for floats, plain text otherwise."""
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    return str(x)


@dataclasses.dataclass
class TaskResult:
    """One table of a run with its verdicts."""

    name: str
    columns: list
    rows: list

    @property
    def verdicts(self):
        k = self.columns.index("verdict")
        return [r[k] for r in self.rows]


# ---------------------------------------------------------------- config


def _set_nested(cfg, dotted, value):
    keys = dotted.split(".")
    d = cfg
    for k in keys[:-1]:
        d = d.setdefault(k, {})
        if not isinstance(d, dict):
            raise ValidationError(f"cannot override {dotted!r}: {k!r} is not a section")
    d[keys[-1]] = value


def load_config(path, overrides=()):
    """Read a YAML config and apply ``key.sub=value`` overrides."""
    try:
        with open(path) as fh:
            cfg = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ValidationError(f"config {path} is not valid YAML: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ValidationError("the config must be a mapping")
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ValidationError(f"override {item!r} must look like key=value")
        _set_nested(cfg, key.strip(), yaml.safe_load(raw))
    return cfg


def validate_config(cfg):
    """Check keys, task, tolerances; return a normalised copy."""
    unknown = set(cfg) - CONFIG_KEYS
    if unknown:
        raise ValidationError(f"unknown config keys: {sorted(unknown)}")
    cfg = dict(cfg)
    task = cfg.get("task", "spectrum")
    if task not in TASKS:
        raise ValidationError(f"unknown task {task!r}; expected one of {list(TASKS)}")
    cfg["task"] = task
    tols = dict(DEFAULT_TOLERANCES)
    for k, v in (cfg.get("tolerances") or {}).items():
        if k not in DEFAULT_TOLERANCES:
            raise ValidationError(f"unknown tolerance {k!r}")
        if not isinstance(v, (int, float)) or isinstance(v, bool) or not v > 0:
            raise ValidationError(f"tolerance {k} must be a positive number")
        tols[k] = float(v)
    cfg["tolerances"] = tols
    steps = cfg.get("steps", list(DEFAULT_STEPS))
    if (not isinstance(steps, list) or not steps
            or not all(isinstance(s, (int, float)) and s > 0 for s in steps)):
        raise ValidationError("steps must be a list of positive numbers")
    cfg["steps"] = [float(s) for s in steps]
    res = cfg.get("resolution")
    if res is not None and (not isinstance(res, int) or isinstance(res, bool) or res < 2):
        raise ValidationError("resolution must be an integer >= 2")
    cfg["seed"] = int(cfg.get("seed", 0))
    cfg["scenario_obj"] = _scenario_from(cfg)
    if cfg.get("fields"):
        dim = build_domain(cfg["scenario_obj"].domain, 4).ambient_dim
        for f in cfg["fields"]:
            make_field(f, dim)
    return cfg


def _scenario_from(cfg):
    """The scenario named in the config, with any explicit descriptors applied."""
    name = cfg.get("scenario")
    if name is None:
        missing = [k for k in ("domain", "kernel", "rule") if k not in cfg]
        if missing:
            raise ValidationError(f"without a scenario the config needs {missing}")
        base = Scenario("custom", "custom configuration", "custom", cfg["domain"],
                        cfg.get("resolution") or 32, (), cfg["kernel"], cfg["rule"])
    else:
        base = get_scenario(name)
    changes = {}
    for key in ("domain", "rule", "hole", "ambient", "eigen_index"):
        if key in cfg:
            changes[key] = cfg[key]
    if "kernel" in cfg:
        if not isinstance(cfg["kernel"], dict):
            raise ValidationError("kernel must be a mapping with family and delta")
        changes["kernel"] = {**base.kernel, **cfg["kernel"]}
    if cfg.get("fields"):
        changes["fields"] = tuple(cfg["fields"])
    if changes.get("rule") == "hole" and not (changes.get("hole") or base.hole):
        raise ValidationError("the hole rule needs a hole descriptor")
    return dataclasses.replace(base, **changes) if changes else base


# ----------------------------------------------------------------- tasks


def _task_spectrum(cfg):
    sc, tol = cfg["scenario_obj"], cfg["tolerances"]
    setup = build_setup(sc, cfg.get("resolution"))
    rep = spectrum(setup.operator, n_eigs=max(sc.eigen_index + 2, 6))
    rows = []
    for k in range(len(rep)):
        pair = eigenpair(rep, k)
        res = residual(setup.operator, pair)
        ok = res <= tol["residual"]
        if sc.rule == "neumann" and k == 0:
            ok = ok and abs(pair.value) <= tol["neumann_zero"]
        rows.append([sc.name, k, pair.value, pair.simple, pair.gap, bool(rep.below_band[k]), res,
                     "pass" if ok else "fail"])
    if not np.any(rep.below_band):
        logger.warning("%s: no eigenvalue below the essential band at this resolution", sc.name)
        rows.append([sc.name, -1, float("nan"), False, float("nan"), False, float("nan"),
                     "inconclusive"])
    cols = ["scenario", "index", "eigenvalue", "simple", "gap", "below_band", "residual", "verdict"]
    return [TaskResult("spectrum", cols, rows)]


def _task_hadamard(cfg):
    sc, tol = cfg["scenario_obj"], cfg["tolerances"]
    out = scenario_hadamard(sc, cfg.get("resolution"), steps=cfg["steps"])
    limit = tol["manifold_rel_err"] if sc.manifold else tol["rel_err"]
    cols = ["scenario", "eigen_index", "field", "lambda0", "term1", "term2", "term3", "term4",
            "formula", "fd_value", "rel_err", "verdict"]
    rows = [[sc.name, r.eigen_index, r.field, r.eigenvalue, *r.terms, r.formula, r.fd_value,
             r.rel_err, "pass" if r.rel_err <= limit else "fail"] for r in out.reports]
    conv_cols = ["scenario", "field", "curvature", "normal_term", "formula", "fd_value",
                 "rel_err", "selected", "verdict"]
    conv_rows = [[sc.name, c.field, c.curvature, c.normal_term, c.formula, c.fd_value, c.rel_err,
                  (c.curvature if out.selected[0] else "flat", c.normal_term)
                  == (out.selected[0] or "flat", out.selected[1]), "info"]
                 for c in out.conventions]
    spec_cols = ["scenario", "field", "formula_literal", "specialized", "verdict"]
    spec_rows = [[sc.name, r.field, lit, r.specialized, "info"]
                 for r, lit in zip(out.reports, out._literal)]
    return [TaskResult("hadamard", cols, rows), TaskResult("conventions", conv_cols, conv_rows),
            TaskResult("specialized", spec_cols, spec_rows)]


def _task_pullback(cfg):
    from .geometry import dilation

    sc, tol = cfg["scenario_obj"], cfg["tolerances"]
    setup = build_setup(sc, cfg.get("resolution"), sparse_matrix=False)
    desc = cfg.get("embedding") or {"kind": "dilation"}
    dim = setup.domain.ambient_dim
    h = dilation(dim) + 1.0 * make_field(desc, dim)
    rep = pullback_check(h, setup.domain, setup.kernel, setup.coefficient)
    ok = rep.hausdorff <= tol["pullback"] and rep.bands_equal
    cols = ["scenario", "n_direct", "n_pullback", "hausdorff", "band_equal", "verdict"]
    return [TaskResult("pullback", cols, [[sc.name, len(rep.direct), len(rep.pullback),
                                           rep.hausdorff, rep.bands_equal,
                                           "pass" if ok else "fail"]])]


def _task_eigfun(cfg):
    sc, tol = cfg["scenario_obj"], cfg["tolerances"]
    setup = build_setup(sc, cfg.get("resolution"), sparse_matrix=False)
    rep = spectrum(setup.operator, n_eigs=sc.eigen_index + 2)
    pair = eigenpair(rep, sc.eigen_index)
    rows = []
    curv, normal = sc.convention
    for desc in sc.fields:
        V = make_field(desc, setup.domain.ambient_dim)
        dlam = hadamard_derivative(setup.operator, pair, V, curvature=curv,
                                   normal_term=normal).formula
        d = eigenfunction_derivative(setup.operator, pair, V, dlam, curvature=curv,
                                     solv_tol=tol["solvability"],
                                     normal_advection="both" if normal == "kernel-flux"
                                     else "source")
        ok = (abs(d.solvability) <= tol["solvability"] and d.residual <= tol["residual"]
              and abs(d.orthogonality) <= tol["orthogonality"])
        rows.append([sc.name, V.name, pair.value, dlam, d.solvability, d.residual,
                     d.orthogonality, "pass" if ok else "fail"])
    cols = ["scenario", "field", "lambda0", "dlam", "solvability", "residual", "orthogonality",
            "verdict"]
    return [TaskResult("eigfun-derivative", cols, rows)]


def _task_faber_krahn(cfg):
    from .rearrange import faber_krahn_compare

    sc = cfg["scenario_obj"]
    res = cfg.get("resolution") or sc.resolution
    fine = build_setup(sc, res)
    coarse = build_setup(sc, max(2, res // 2))
    rep = faber_krahn_compare(fine.domain, fine.kernel, fine.coefficient,
                              coarse=(coarse.domain, coarse.coefficient))
    cols = ["scenario", "lambda1_omega", "lambda1_star", "margin", "tol_spec", "verdict",
            "lambda1_star_rebuilt"]
    return [TaskResult("faber-krahn", cols, [[sc.name, rep.lambda_omega, rep.lambda_star,
                                              rep.margin, rep.tol_spec, rep.verdict,
                                              rep.rebuilt_star]])]


def _task_rearrange(cfg):
    from .rearrange import (NodalFunction, distribution_function, hardy_littlewood_check,
                            layer_cake_check, riesz_check, symmetric_decreasing,
                            symmetric_increasing)

    sc, tol = cfg["scenario_obj"], cfg["tolerances"]
    rng = np.random.default_rng(cfg["seed"])
    trials = int(cfg.get("trials", 100))
    dom = build_setup(sc, cfg.get("resolution")).domain if sc.euclidean else None
    if dom is None:
        raise ValidationError("the rearrangement suite runs on Euclidean scenarios")
    grid = build_domain({"shape": "interval", "bounds": (0.0, 1.0)}, 60)
    rows = []
    wmax = float(dom.weights.max())
    for t in range(trials):
        u = NodalFunction(dom, rng.random(dom.n_nodes) ** 2)
        star, lower = symmetric_decreasing(u), symmetric_increasing(u)
        lev = rng.uniform(0, u.values.max(), 20)
        mu = distribution_function(u)(lev)
        err = max(np.max(np.abs(distribution_function(star)(lev) - mu)),
                  np.max(np.abs(distribution_function(lower)(lev) - mu)))
        rows.append(["equimeasurable", t, err, wmax, wmax - err,
                     wmax * (1 + 1e-12), "pass" if err <= wmax * (1 + 1e-12) else "fail"])
        lc = layer_cake_check(u, lambda s: s**2)
        rows.append(["layer-cake", t, lc.original, lc.decreasing, -lc.gap, lc.tol,
                     "pass" if lc.ok else "fail"])
        v = NodalFunction(dom, rng.random(dom.n_nodes))
        hl = hardy_littlewood_check(u, v)
        rows.append(["hardy-littlewood", t, hl.lhs, hl.rhs, hl.slack, tol["slack"],
                     "pass" if hl.slack >= -tol["slack"] else "fail"])
        f = NodalFunction(grid, rng.random(grid.n_nodes))
        h = NodalFunction(grid, rng.random(grid.n_nodes))
        width = rng.uniform(0.05, 0.5)
        rz = riesz_check(f, lambda z, w=width: np.clip(1 - np.abs(z) / w, 0, None), h)
        rows.append(["riesz", t, rz.lhs, rz.rhs, rz.slack, tol["slack"],
                     "pass" if rz.slack >= -tol["slack"] else "fail"])
    cols = ["check", "trial", "lhs", "rhs", "slack", "tol", "verdict"]
    return [TaskResult("rearrange-suite", cols, rows)]


_TASKS = {"spectrum": _task_spectrum, "hadamard": _task_hadamard, "pullback": _task_pullback,
          "eigfun-derivative": _task_eigfun, "faber-krahn": _task_faber_krahn,
          "rearrange-suite": _task_rearrange}


# ---------------------------------------------------------------- output


def write_csv(path, table):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(table.columns)
        for row in table.rows:
            w.writerow([fmt(x) for x in row])


def _write_outputs(outdir, prefix, results, cfg, elapsed):
    os.makedirs(outdir, exist_ok=True)
    lines = [f"scenario: {cfg['scenario_obj'].name}", f"task: {cfg['task']}",
             f"resolution: {cfg.get('resolution') or cfg['scenario_obj'].resolution}",
             f"seed: {cfg['seed']}",
             "tolerances: " + ", ".join(f"{k}={fmt(v)}" for k, v in cfg["tolerances"].items()),
             f"elapsed_seconds: {elapsed:.2f}", ""]
    for table in results:
        path = os.path.join(outdir, f"{prefix}{table.name}.csv")
        write_csv(path, table)
        counts = {v: table.verdicts.count(v) for v in sorted(set(table.verdicts))}
        lines.append(f"{table.name}: {counts} -> {path}")
    with open(os.path.join(outdir, f"{prefix}report.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return lines


def run_config(cfg):
    """Run one validated config; return the task tables."""
    try:
        return _TASKS[cfg["task"]](cfg)
    except NumericalError as exc:
        exc.stage = getattr(exc, "stage", None) or cfg["task"]
        raise


def run(cfg):
    """Run a config (or a batch under ``runs``) and write its outputs.

    Returns
    -------
    int
        Exit status.
    """
    batch = cfg.pop("runs", None)
    if batch is not None:
        if not isinstance(batch, list) or not batch:
            raise ValidationError("runs must be a non-empty list of configs")
        cfgs = [validate_config({**cfg, **item}) for item in batch]
    else:
        cfgs = [validate_config(cfg)]

    def one(i_cfg):
        i, c = i_cfg
        t0 = time.perf_counter()
        results = run_config(c)
        out = c.get("output") or {}
        prefix = out.get("prefix", f"{c['scenario_obj'].name}_" if len(cfgs) > 1 else "")
        lines = _write_outputs(out.get("dir", "results"), prefix, results, c,
                               time.perf_counter() - t0)
        return results, lines

    with ThreadPoolExecutor(max_workers=min(thread_count(), len(cfgs))) as pool:
        outputs = list(pool.map(one, enumerate(cfgs)))
    status = 0
    for results, lines in outputs:
        print("\n".join(lines))
        for table in results:
            if "fail" in table.verdicts:
                status = 1
            if "inconclusive" in table.verdicts:
                print(f"warning: {table.name} has inconclusive verdicts", file=sys.stderr)
    return status


def sweep(names, resolutions=None, deltas=None, outdir="results", field_index=None):
    """Convergence tables of the studied eigenvalue and the formula value.

    Returns
    -------
    TaskResult
        One row per (scenario, delta, resolution); ``verdict`` is
        ``monotone`` when the increments shrink along the resolution
        ladder, ``not-monotone`` otherwise.  The tracked field is
        ``field_index`` or, when None, each scenario's ``sweep_field``.
    """
    rows = []
    for name in names:
        sc = get_scenario(name)
        for delta in deltas or [sc.kernel["delta"]]:
            s = dataclasses.replace(sc, kernel={**sc.kernel, "delta": float(delta)})
            lams, forms, block = [], [], []
            for res in resolutions or sc.sweep:
                fi = sc.sweep_field if field_index is None else field_index
                out = scenario_hadamard(s, res, fields=[sc.fields[fi]], fd=False)
                r = out.reports[0]
                lams.append(r.eigenvalue)
                forms.append(r.formula)
                block.append([sc.name, float(delta), res, out.n_nodes, r.eigenvalue, r.formula])
            dl = np.abs(np.diff(lams))
            df = np.abs(np.diff(forms))
            ok = bool(np.all(np.diff(dl) < 0) and np.all(np.diff(df) < 0))
            for k, row in enumerate(block):
                inc_l = float(dl[k - 1]) if k else float("nan")
                inc_f = float(df[k - 1]) if k else float("nan")
                rows.append(row + [inc_l, inc_f, "monotone" if ok else "not-monotone"])
    cols = ["scenario", "delta", "resolution", "n_nodes", "lambda", "formula",
            "lambda_increment", "formula_increment", "verdict"]
    table = TaskResult("sweep", cols, rows)
    os.makedirs(outdir, exist_ok=True)
    write_csv(os.path.join(outdir, "sweep.csv"), table)
    return table


# ------------------------------------------------------------------- main


def build_parser():
    p = argparse.ArgumentParser(prog="nonlocal-eigs",
                                description="Spectra and domain derivatives of nonlocal operators.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a YAML config")
    r.add_argument("config")
    r.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key (dotted for nested sections)")
    r.add_argument("--resolution", type=int)
    r.add_argument("--output", help="output directory")
    r.add_argument("--seed", type=int)
    r.add_argument("--threads", type=int, help=f"worker threads (also {THREADS_ENV})")

    sub.add_parser("list-scenarios", help="print the built-in scenarios")

    s = sub.add_parser("sweep", help="resolution / horizon convergence tables")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--scenario", action="append")
    g.add_argument("--all", action="store_true", help="every built-in scenario")
    s.add_argument("--resolutions", type=int, nargs="+")
    s.add_argument("--deltas", type=float, nargs="+")
    s.add_argument("--field-index", type=int,
                   help="field tracked by the sweep (default: the scenario's sweep field)")
    s.add_argument("--output", default="results")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "list-scenarios":
            for sc in list_scenarios():
                print(f"{sc.name:20s} {sc.example:52s} {sc.summary}")
            return 0
        if args.command == "sweep":
            names = [s.name for s in list_scenarios()] if args.all else args.scenario
            table = sweep(names, args.resolutions, args.deltas, args.output, args.field_index)
            for row in table.rows:
                print(",".join(fmt(x) for x in row))
            return 0 if all(v == "monotone" for v in table.verdicts) else 1
        if args.threads:
            os.environ[THREADS_ENV] = str(args.threads)
        overrides = list(args.set)
        if args.resolution is not None:
            overrides.append(f"resolution={args.resolution}")
        if args.output is not None:
            overrides.append(f"output.dir={args.output}")
        if args.seed is not None:
            overrides.append(f"seed={args.seed}")
        return run(load_config(args.config, overrides))
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure in stage {getattr(exc, 'stage', None) or 'unknown'}: {exc}",
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
