"""Experiment driver: run/describe/resume subcommands over INI configs.

Every run writes a CSV of measurements, a JSON report tree, and a copy of the
resolved config (with its hash) into the output directory.  Exit status: 0
when every comparison passes, 1 on any failure, 2 when the only non-passes
are inconclusive (noise-dominated) checks.
"""
from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import os
import sys

import numpy as np

from . import __version__, decouple, forms, harmonic, ivgauss, lattice
from . import observables as obs
from . import sampler
from .forms import Form, d, d_star, d_matrix
from .ivgauss import IvgParams
from .lattice import FREE, ZERO, LatticeSpec
from .stats import FAIL, INCONCLUSIVE, PASS, MeasureReport

_MAX_CELLS = 40_000_000   # pre-flight ceiling on total cell count

_COMMON_KEYS = {"experiment", "n", "j", "mode", "beta", "seed", "out"}
_CHAIN_KEYS = {"samples", "burn_in", "thinning", "replicas"}

EXPERIMENTS = {
    "calculus-check": _COMMON_KEYS,
    "green": _COMMON_KEYS,
    "ranks": _COMMON_KEYS,
    "villain": _COMMON_KEYS | _CHAIN_KEYS | {"degree"},
    "decouple": _COMMON_KEYS | _CHAIN_KEYS,
    "wilson": _COMMON_KEYS | _CHAIN_KEYS | {"loop_l", "loop_h", "margin_override"},
    "free-energy": _COMMON_KEYS | _CHAIN_KEYS,
    "coulomb-sample": _COMMON_KEYS | _CHAIN_KEYS | {"degree"},
    "ivg-table": _COMMON_KEYS | {"beta_max", "beta_step"},
}

_DESCRIPTIONS = {
    "calculus-check": """\
Exact discrete-calculus identities on small boxes:
  - d(d(f)) = 0 and d*(d*(f)) = 0 (integer arithmetic, margin 0)
  - adjointness <d f, g> = -<f, d* g> (tolerance 1e-12)
  - boundary-of-boundary cancellation per cell (exact)
  - integer preimage round trip d(n_q) = q (exact)
Runs over modes free and zero.  Runtime: seconds.""",
    "green": """\
Green-function structure checks:
  - cross-direction 1-form Green entries are 0 (tolerance 1e-10)
  - same-direction entries match the direction-graph solve (1e-10)
  - vertex Green power law: fitted exponent -(n-2) within 0.05
  - c_gff stability under refinement (1e-6) and the loop-energy slope
    2*c_gff within 3% at L = H in {16, 24, 32}.
Runtime: about a minute.""",
    "ranks": """\
Projection dimension table: for each degree k, the lower/upper projection
ranks of the k-forms, cross-checked between an SVD rank and an exact mod-p
elimination, against the closed-form table for n = 4.  Runtime: seconds at
j <= 2.""",
    "villain": """\
Joint (theta, m) Gibbs chain at the configured beta; reports moments of
d theta on a bulk face (wrapped to [-pi, pi)) and the mean of m, each with
batch-means standard errors.  On one- and two-plaquette boxes these match
quadrature oracles.  Runtime: depends on samples.""",
    "decouple": """\
Spin-wave/Coulomb decomposition diagnostics on a chain:
  - per-sample Pythagoras split (exact to 1e-8 relative)
  - energy identity E|w|^2 = dim/beta + (2 pi)^2 E_coul (3 s.e.)
  - independence panel: rho functionals vs q functionals (3 s.e. of 0).
Runtime: minutes at the default sizes.""",
    "wilson": """\
Wilson-loop expectation at the configured loop size:
  - two-sided agreement with the spin-wave value exp(-E/(2 beta))
    (10% relative + 3 s.e.), the small-loop regime
  - one-sided upper-bound check (3 s.e.), any loop
  - imaginary part consistent with 0
Loops whose expectation is below 5 s.e. report inconclusive, not pass.
Runtime: up to hours for large boxes.""",
    "free-energy": """\
Free-energy derivative estimator -E|w|^2 / (8 (2j)^n) per beta:
  - one-sided check against the rank-corrected spin-wave floor
  - one-sided check against the corrected bound with the exponential term
  - monotonicity across the beta list.
Runtime: minutes at j = 4.""",
    "coulomb-sample": """\
Equilibrium Coulomb-charge sampler q = dm (theta in the configured degree);
writes the empirical distribution of q over interior cells.  On tiny boxes
this matches a truncated-enumeration Boltzmann oracle in total variation.
Runtime: minutes for 1e6 samples on small boxes.""",
    "ivg-table": """\
Integer-valued Gaussian tables over a beta grid: truncation window, minimal
variance (error function M), its argmin, and the third-moment ratio
diagnostic K.  Runtime: seconds.""",
}


class ConfigError(ValueError):
    pass


def load_config(path):
    cp = configparser.ConfigParser()
    read = cp.read(path)
    if not read:
        raise ConfigError(f"cannot read config {path}")
    if "run" not in cp:
        raise ConfigError("config must have a [run] section")
    cfg = dict(cp["run"])
    exp = cfg.get("experiment")
    if exp not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {exp!r}; choose from "
                          f"{sorted(EXPERIMENTS)}")
    allowed = EXPERIMENTS[exp]
    for key in cfg:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} for experiment {exp}")
    return cfg


def _resolved(cfg, args):
    out = dict(cfg)
    if args.seed is not None:
        out["seed"] = str(args.seed)
    elif "seed" not in out:
        out["seed"] = os.environ.get("VILLAIN_SEED", "0")
    if args.out is not None:
        out["out"] = args.out
    out.setdefault("out", ".")
    return out


def _hash(cfg):
    # the output directory is not part of the experiment identity
    keyed = {k: v for k, v in cfg.items() if k != "out"}
    blob = json.dumps(keyed, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _spec_of(cfg, default_n=4, default_j=2):
    n = int(cfg.get("n", default_n))
    j = int(cfg.get("j", default_j))
    mode = cfg.get("mode", "free").lower()
    if mode not in (FREE, ZERO):
        raise ConfigError(f"mode must be free or zero, got {mode!r}")
    total = sum(lattice.cell_count(LatticeSpec.cube(n, j, mode), k)
                for k in range(n + 1))
    if total > _MAX_CELLS:
        raise ConfigError(f"box too large: {total} cells exceeds the "
                          f"{_MAX_CELLS} pre-flight ceiling")
    return LatticeSpec.cube(n, j, mode)


def _chain_config(cfg, beta):
    return sampler.ChainConfig(
        beta=beta,
        n_samples=int(cfg.get("samples", 2000)),
        burn_in=int(cfg["burn_in"]) if "burn_in" in cfg else None,
        thinning=int(cfg.get("thinning", 1)),
        seed=int(cfg.get("seed", 0)),
        replicas=int(cfg.get("replicas", 8)),
    )


def _exact_report(name, max_err, tol):
    rep = MeasureReport(name, float(max_err), 0.0, 1)
    rep.targets.append({"label": f"max error <= {tol:g}", "target": tol,
                        "margin": 0.0, "gap": float(max_err) - tol,
                        "verdict": PASS if max_err <= tol else FAIL,
                        "one_sided": True})
    return rep


# ---------------------------------------------------------------------------
# experiment bodies, each returning a list of MeasureReport
# ---------------------------------------------------------------------------

def _run_calculus(cfg):
    reports = []
    rng = np.random.Generator(np.random.Philox(key=[int(cfg.get("seed", 0)), 1]))
    ns = [int(cfg["n"])] if "n" in cfg else [2, 3, 4]
    js = [int(cfg["j"])] if "j" in cfg else [1, 2]
    modes = [cfg["mode"]] if "mode" in cfg else [FREE, ZERO]
    for n in ns:
        for j in js:
            for mode in modes:
                spec = LatticeSpec.cube(n, j, mode)
                tag = f"n{n}j{j}{mode}"
                for k in range(n - 1):
                    f = Form(spec, k, rng.integers(-3, 4, lattice.cell_count(spec, k)).astype(float))
                    err = np.abs(d(d(f)).values).max()
                    reports.append(_exact_report(f"dd_zero_{tag}_k{k}", err, 0.0))
                for k in range(2, n + 1):
                    g = Form(spec, k, rng.normal(size=lattice.cell_count(spec, k)))
                    err = np.abs(d_star(d_star(g, mode), mode).values).max()
                    reports.append(_exact_report(f"dsds_zero_{tag}_k{k}", err, 1e-12))
                for k in range(n):
                    f = Form(spec, k, rng.normal(size=lattice.cell_count(spec, k)))
                    g = Form(spec, k + 1, rng.normal(size=lattice.cell_count(spec, k + 1)))
                    lhs = forms.inner(d(f), g)
                    rhs = -forms.inner(f, d_star(g, mode))
                    scale = max(abs(lhs), 1.0)
                    reports.append(_exact_report(
                        f"adjoint_{tag}_k{k}", abs(lhs - rhs) / scale, 1e-12))
    return reports


def _run_green(cfg):
    reports = []
    spec = _spec_of(cfg, default_n=4, default_j=2)
    mode = spec.boundary
    rng = np.random.Generator(np.random.Philox(key=[int(cfg.get("seed", 0)), 2]))
    A, _ = harmonic._poisson_system(spec, 1, mode)
    lu = harmonic._poisson_factor(spec, 1, mode)
    edges = [lattice.cell_at(spec, 1, i) for i in
             rng.integers(0, lattice.cell_count(spec, 1), 30)]
    cross_err = same_err = 0.0
    for e in edges[:15]:
        i = lattice.cell_index(spec, e)
        col = lu.solve(_unit(A.shape[0], i))
        for e1 in edges[15:]:
            j = lattice.cell_index(spec, e1)
            val = col[j]
            if mode == ZERO and (lattice.is_boundary_cell(e, spec)
                                 or lattice.is_boundary_cell(e1, spec)):
                continue
            ref = harmonic.green_one_form(e, e1, spec, mode)
            if e.dirs != e1.dirs:
                cross_err = max(cross_err, abs(val))
            same_err = max(same_err, abs(val - ref))
    reports.append(_exact_report(f"green_cross_zero_{mode}", cross_err, 1e-10))
    reports.append(_exact_report(f"green_dg_match_{mode}", same_err, 1e-10))
    for n in (3, 4):
        rs = np.arange(8, 21)
        gs = np.array([harmonic.green_infinite_vertex((int(r),) + (0,) * (n - 1), n)
                       for r in rs])
        slope = np.polyfit(np.log(rs), np.log(gs), 1)[0]
        reports.append(_exact_report(f"green_power_law_n{n}",
                                     abs(slope + (n - 2)), 0.05))
    c1 = harmonic.c_gff()
    partial, tail = harmonic.c_gff_partial(60)
    reports.append(_exact_report("c_gff_stability",
                                 abs(c1 - (partial + tail / 2)) - tail / 2,
                                 1e-6))
    vals = {}
    for L in (16, 24, 32):
        lspec = LatticeSpec.cube(4, (3 * L) // 2, FREE)
        loop = obs.RectLoop((0, 1), (-L // 2, -L // 2, 0, 0), L, L)
        vals[L] = obs.loop_energy(loop, lspec, FREE, method="dg")
    slope = np.polyfit([2 * L for L in vals], list(vals.values()), 1)[0]
    target = 2.0 * harmonic.c_gff()
    reports.append(_exact_report("loop_energy_slope",
                                 abs(slope - target) / target, 0.03))
    return reports


def _unit(n, i):
    v = np.zeros(n)
    v[i] = 1.0
    return v


def _run_ranks(cfg):
    spec = _spec_of(cfg, default_n=4, default_j=1)
    table = harmonic.rank_table(spec)
    reports = []
    mode = spec.boundary
    for k, row in table.items():
        # the constants (Free, k=0) / top ring forms (Zero, k=n) are the one
        # harmonic dimension outside the two projection images
        harm = 1 if (mode == FREE and k == 0) or (mode == ZERO and k == spec.n) \
            else 0
        want = row["cells"] - harm
        rep = MeasureReport(f"rank_k{k}", float(row["lower"]), 0.0, 1,
                            extras=dict(row))
        rep.targets.append({"label": "lower + upper + harmonic = cells",
                            "target": float(want), "margin": 0.0,
                            "gap": float(row["lower"] + row["upper"] - want),
                            "verdict": PASS if row["lower"] + row["upper"]
                            == want else FAIL, "one_sided": False})
        reports.append(rep)
    return reports


def _run_villain(cfg):
    spec = _spec_of(cfg, default_n=4, default_j=2)
    beta = float(cfg.get("beta", 1.0))
    p = int(cfg.get("degree", 1))
    config = _chain_config(cfg, beta)
    face = _bulk_cell(spec, p + 1)
    fi = lattice.cell_index(spec, face)
    row = np.asarray(d_matrix(spec, p)[fi].todense(), dtype=float).ravel()
    res = sampler.measure_chain(spec, p, config, {
        "dtheta": lambda st: st.theta @ row,
        "m": lambda st: st.m[:, fi].astype(float),
    })
    from .stats import batch_means
    s = np.mod(res["dtheta"].ravel() + np.pi, 2 * np.pi) - np.pi
    reports = []
    for name, vals in (("dtheta_mean", s), ("dtheta_var", s ** 2),
                       ("dtheta_m4", s ** 4), ("m_mean", res["m"].ravel())):
        est, se = batch_means(vals)
        reports.append(MeasureReport(name, est, se, vals.size))
    return reports


def _bulk_cell(spec, k):
    mid = tuple((spec.lo[a] + spec.hi[a]) // 2 for a in range(spec.n))
    return lattice.CellKey(mid, tuple(range(k)))


def _run_decouple(cfg):
    spec = _spec_of(cfg, default_n=4, default_j=2)
    beta = float(cfg.get("beta", 1.0))
    config = _chain_config(cfg, beta)
    w2, coul, rhos, qs = [], [], [], []
    pyth_err = 0.0
    for st in sampler.run_chain(spec, 1, config):
        pair = decouple.decompose(st)
        lhs, mid, cl = decouple.pythagoras_check(st, pair)
        pyth_err = max(pyth_err, float(np.max(np.abs(lhs - mid - cl)
                                              / np.maximum(lhs, 1e-12))))
        w2.append(lhs)
        coul.append(cl / decouple.TWO_PI_SQ)
        rhos.append(pair.rho.copy())
        qs.append(pair.q.copy())
    w2 = np.stack(w2)
    coul = np.stack(coul)
    reports = [_exact_report("pythagoras", pyth_err, 1e-8),
               obs.energy_identity(w2, coul, spec, beta)]
    rho = np.concatenate(rhos)
    q = np.concatenate(qs)
    panel = decouple.independence_report(rho, q, seed=config.seed)
    worst = max(abs(v["corr"]) / max(v["se"], 1e-12)
                for v in panel["pairs"].values())
    rep = MeasureReport("independence_panel", worst, 1.0,
                        panel["n_samples"], extras={"pairs": len(panel["pairs"])})
    rep.targets.append({"label": "max |corr|/se <= 3", "target": 3.0,
                        "margin": 0.0, "gap": worst - 3.0,
                        "verdict": PASS if worst <= 3.0 else FAIL,
                        "one_sided": True})
    reports.append(rep)
    return reports


def _run_wilson(cfg):
    spec = _spec_of(cfg, default_n=4, default_j=8)
    beta = float(cfg.get("beta", 4.0))
    L = int(cfg.get("loop_l", 3))
    H = int(cfg.get("loop_h", L))
    loop = obs.RectLoop((0, 1), tuple([-L // 2, -H // 2] + [0] * (spec.n - 2)),
                        L, H)
    if not cfg.get("margin_override", ""):
        loop.check_inside(spec, margin=max(L, H))
    config = _chain_config(cfg, beta)
    return [obs.wilson_experiment(spec, loop, config,
                                  report_name=f"wilson_{L}x{H}")]


def _run_free_energy(cfg):
    spec = _spec_of(cfg, default_n=4, default_j=4)
    betas = [float(b) for b in str(cfg.get("beta", "1,2,4")).split(",")]
    reports = []
    means = []
    for beta in betas:
        config = _chain_config(cfg, beta)
        res = sampler.measure_chain(spec, 1, config, {
            "w2": lambda st: _w_norm2(st)})
        rep = obs.free_energy_derivative(res["w2"], spec, beta,
                                         report_name=f"free_energy_b{beta:g}")
        reports.append(rep)
        means.append(rep.estimate)
    if len(means) > 1:
        mono = all(means[i] < means[i + 1] for i in range(len(means) - 1))
        rep = MeasureReport("free_energy_monotone", float(mono), 0.0,
                            len(means))
        rep.targets.append({"label": "increasing in beta", "target": 1.0,
                            "margin": 0.0, "gap": float(mono) - 1.0,
                            "verdict": PASS if mono else FAIL,
                            "one_sided": False})
        reports.append(rep)
    return reports


def _w_norm2(st):
    D = d_matrix(st.spec, st.p)
    w = (D @ st.theta.T).T + 2 * np.pi * st.m
    if st.spec.boundary == ZERO:
        w[:, lattice.boundary_mask(st.spec, st.p + 1)] = 0.0
    return np.einsum("ij,ij->i", w, w)


def _run_coulomb(cfg):
    spec = _spec_of(cfg, default_n=4, default_j=1)
    beta = float(cfg.get("beta", 0.5))
    p = int(cfg.get("degree", spec.n - 2))
    config = _chain_config(cfg, beta)
    interior = lattice.interior_indices(spec, p + 2) \
        if spec.boundary == ZERO else np.arange(lattice.cell_count(spec, p + 2))
    counts = {}
    total = 0
    for q in decouple.coulomb_sample(spec.n, spec, beta, config=config,
                                     degree=p):
        for row in q[:, interior]:
            counts[tuple(int(v) for v in row)] = counts.get(
                tuple(int(v) for v in row), 0) + 1
            total += 1
    zero_frac = counts.get(tuple([0] * len(interior)), 0) / total
    rep = MeasureReport("coulomb_sample", zero_frac, 0.0, total,
                        extras={"distinct_states": len(counts)})
    return [rep]


def _run_ivg(cfg):
    beta0 = float(cfg.get("beta", 0.25))
    beta1 = float(cfg.get("beta_max", 4.0))
    step = float(cfg.get("beta_step", 0.25))
    reports = []
    b = beta0
    while b <= beta1 + 1e-12:
        rep = MeasureReport(f"ivg_b{b:g}", ivgauss.error_M(b), 0.0, 1,
                            extras={
                                "window": ivgauss.window_halfwidth(
                                    ivgauss.TWO_PI_SQ * b),
                                "argmin": ivgauss.error_M_argmin(b),
                                "ratio_K": ivgauss.ratio_K(b),
                            })
        reports.append(rep)
        b += step
    return reports


_RUNNERS = {
    "calculus-check": _run_calculus,
    "green": _run_green,
    "ranks": _run_ranks,
    "villain": _run_villain,
    "decouple": _run_decouple,
    "wilson": _run_wilson,
    "free-energy": _run_free_energy,
    "coulomb-sample": _run_coulomb,
    "ivg-table": _run_ivg,
}


def _emit(reports, cfg, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    exp = cfg["experiment"]
    meta = {"experiment": exp, "config_hash": _hash(cfg),
            "version": __version__}
    obs.reports_to_csv(reports, os.path.join(out_dir, f"{exp}.csv"), meta)
    verdict = obs.reports_to_json(reports,
                                  os.path.join(out_dir, f"{exp}.json"), meta)
    with open(os.path.join(out_dir, f"{exp}.resolved.cfg"), "w") as fh:
        fh.write(f"# config_hash = {meta['config_hash']}\n[run]\n")
        for k in sorted(cfg):
            fh.write(f"{k} = {cfg[k]}\n")
    return verdict


def _exit_code(reports):
    # reports with no recorded comparisons are plain tables, not checks
    verdicts = [r.verdict for r in reports if r.targets]
    if FAIL in verdicts:
        return 1
    if PASS in verdicts and INCONCLUSIVE not in verdicts:
        return 0
    return 2 if verdicts else 0


def cmd_run(args):
    try:
        cfg = _resolved(load_config(args.config), args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    if args.threads is not None:
        os.environ["OMP_NUM_THREADS"] = str(args.threads)
    reports = _RUNNERS[cfg["experiment"]](cfg)
    _emit(reports, cfg, cfg["out"])
    for rep in reports:
        print(f"{rep.name}: estimate={rep.estimate:.6g} se={rep.se:.3g} "
              f"verdict={rep.verdict}")
    return _exit_code(reports)


def cmd_describe(args):
    if args.experiment not in _DESCRIPTIONS:
        print(f"unknown experiment {args.experiment!r}", file=sys.stderr)
        return 1
    print(f"experiment: {args.experiment}")
    print(_DESCRIPTIONS[args.experiment])
    print(f"config keys: {sorted(EXPERIMENTS[args.experiment])}")
    return 0


def cmd_resume(args):
    try:
        cfg = _resolved(load_config(args.config), args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    state, config, header = sampler.load_checkpoint(args.checkpoint)
    spec = state.spec
    extra = int(cfg.get("samples", config.n_samples))
    config.n_samples = extra
    config.burn_in = 0
    n_done = 0
    for st in sampler.run_chain(spec, state.p, config, state=state):
        n_done += 1
    out = cfg.get("out", ".")
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, "resumed.ck")
    sampler.save_checkpoint(path, state, config, config_hash=_hash(cfg))
    print(f"resumed {n_done} sweeps from sweep {header['sweep']}; "
          f"checkpoint written to {path}")
    return 0


def main(argv=None):
    ap = argparse.ArgumentParser(prog="villain",
                                 description="U(1) Villain lattice gauge "
                                 "theory experiments")
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--threads", type=int, default=None)
    ap.add_argument("--out", default=None)
    sub = ap.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config")
    p_run.set_defaults(func=cmd_run)
    p_desc = sub.add_parser("describe", help="print an experiment plan")
    p_desc.add_argument("experiment")
    p_desc.set_defaults(func=cmd_describe)
    p_res = sub.add_parser("resume", help="resume a chain from a checkpoint")
    p_res.add_argument("config")
    p_res.add_argument("checkpoint")
    p_res.set_defaults(func=cmd_resume)
    args = ap.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
