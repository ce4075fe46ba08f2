"""Command-line front end.

Each subcommand resolves its parameters (built-in defaults, then a JSON
``--config`` file, then explicit flags), runs one solver and writes a JSON
report with the command, resolved parameters, results, tool version, seed
and wall-clock duration. Floats are written with 17 significant digits.
Failures exit nonzero with a JSON error object on stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .core import Bernoulli, CompletelyRandomized, CovariateMatrix, ScienceTable, sample_ate
from .deterministic import DaProblem, da_exhaustive, da_local_search, dopt_search
from .errors import DesignError, ParseError
from .estimators import aggregate_estimate, dm_estimate, ipw_estimate, ols_fit, var_tau_ols
from .fixtures import partition_from_labels, simpson_observed
from .io import parse_baselines, parse_covariates, parse_observed, parse_panel, parse_science_table
from .oracle import NonDegenerate, exact_estimator_moments, two_stage_adaptive_expectation
from .robust import (
    AdditiveModelSpec,
    BoxUncertainty,
    additive_crd_risk,
    bernoulli_worst_case_risk,
    minimax_bernoulli,
    optimal_crd_split,
)
from .simulation import (
    Additive,
    adaptive_two_stage_mc,
    factor_fixture,
    run_replications,
    stopping_rule_simulation,
    synth_bias_study,
)
from .stochastic import optimal_matched_pairs
from .synth import (
    FW_GAP_TOL,
    FW_MAX_ITER,
    SynthProblem,
    Theorem4Params,
    check_fit_constants,
    solve_synth_design,
    theorem4_bound,
)

# flags shared by every subcommand; --threads is deliberately not echoed in reports
COMMON = {"seed": 0, "out": None, "config": None, "threads": 1}


# ------------------------------------------------------------ value parsing


def _floats(v) -> list:
    if v is None:
        return None
    if isinstance(v, (list, tuple)):
        return [float(x) for x in v]
    return [float(x) for x in str(v).split(",") if x.strip()]


def _fraction(v):
    """'2/3' or 0.5 -> Fraction (exact) for rational inputs."""
    return Fraction(str(v)) if isinstance(v, str) else Fraction(v).limit_denominator(10**9)


def _need(params: dict, *names):
    missing = [n for n in names if params.get(n) is None]
    if missing:
        raise DesignError("missing required parameter(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))


def _baselines(params) -> np.ndarray:
    if params.get("baselines"):
        return parse_baselines(params["baselines"])[1]
    _need(params, "g")
    return np.asarray(_floats(params["g"]))


def _covariates(params) -> CovariateMatrix:
    _need(params, "covariates")
    _, x = parse_covariates(params["covariates"])
    if params.get("intercept"):
        x = CovariateMatrix(np.column_stack([np.ones(x.n), x.values]), ("intercept",) + x.labels)
    return x


# ---------------------------------------------------------------- commands


def cmd_minimax_bernoulli(p, seed, threads):
    _need(p, "n", "b")
    box = BoxUncertainty(float(p["b"]))
    res = minimax_bernoulli(int(p["n"]), box)
    grid = [round(0.1 * i, 12) for i in range(1, 10)]
    scan = [bernoulli_worst_case_risk(np.full(int(p["n"]), q), box) for q in grid]
    return {
        "optimal_p": res.optimal_p.tolist(),
        "worst_case_risk": res.worst_case_risk,
        "worst_case_outcomes": res.worst_case_outcomes,
        "symmetric_grid": {"p": grid, "worst_case_risk": scan},
    }


def cmd_crd_risk(p, seed, threads):
    g = _baselines(p)
    n = g.size
    m = AdditiveModelSpec(g, float(p["sigma2"]))
    splits = {str(n1): additive_crd_risk(n1, n - n1, m) for n1 in range(1, n)}
    out = {"n": n, "risk_by_n1": splits}
    if p.get("n1") is not None:
        n1 = int(p["n1"])
        out["risk"] = additive_crd_risk(n1, n - n1, m)
    if n % 2 == 0:
        n1, n0 = optimal_crd_split(n)
        out["optimal_split"] = [n1, n0]
        out["optimal_risk"] = splits[str(n1)]
    return out


def cmd_matched_pairs(p, seed, threads):
    g = _baselines(p)
    res = optimal_matched_pairs(g)
    return {"pairs": res.partition.one_based(), "objective": res.objective}


def cmd_da_opt(p, seed, threads):
    x = _covariates(p)
    prob = DaProblem(x)
    if p["mode"] == "exhaustive":
        w, f = da_exhaustive(prob)
    elif p["mode"] == "local":
        w, f = da_local_search(prob, int(p["restarts"]), seed)
    else:
        raise DesignError(f"unknown mode {p['mode']!r}; use 'exhaustive' or 'local'")
    return {"w": w.tolist(), "objective": f, "var_tau": var_tau_ols(w, x, 1.0), "sigma2": 1.0}


def cmd_d_opt(p, seed, threads):
    x = _covariates(p)
    _need(p, "k")
    res = dopt_search(x, int(p["k"]), p["mode"])
    return {
        "subset": [i + 1 for i in res.subset],
        "log_det": res.objective,
        "det": math.exp(res.objective) if np.isfinite(res.objective) else 0.0,
        "information_matrix": res.information_matrix.tolist(),
    }


def cmd_synth_design(p, seed, threads):
    _need(p, "panel", "T0")
    units, periods, panel = parse_panel(p["panel"], int(p["T0"]))
    x = None
    if p.get("covariates"):
        xu, x = parse_covariates(p["covariates"])
        if xu != units:
            raise DesignError("covariate units do not match panel units")
    f = _floats(p.get("f"))
    prob = SynthProblem(panel, x, None if f is None else np.asarray(f), int(p["k"]))
    w = solve_synth_design(prob, p["mode"])
    c_cov, c_out = check_fit_constants(prob, w)
    post = panel.outcomes[:, panel.T0 :]
    return {
        "treated_units": [units[i] for i in w.treated_set],
        "u": w.u.tolist(),
        "v": w.v.tolist(),
        "fit_loss": w.fit_loss,
        "u_loss": w.u_loss,
        "v_loss": w.v_loss,
        "c_covariates": c_cov,
        "c_outcomes": c_out,
        "post_periods": periods[panel.T0 :],
        "estimates": (w.u @ post - w.v @ post).tolist(),
        "solver": {"duality_gap_tol": FW_GAP_TOL, "max_iter": FW_MAX_ITER},
    }


def cmd_theorem4_bound(p, seed, threads):
    _need(p, "beta_bar", "lambda_bar", "r", "d", "zeta_lower", "c", "sigma_bar", "T0", "n")
    params = Theorem4Params(
        float(p["beta_bar"]), float(p["lambda_bar"]), int(p["r"]), int(p["d"]), float(p["zeta_lower"]),
        float(p["c"]), float(p["sigma_bar"]), int(p["T0"]), int(p["n"]),
    )
    noise = Theorem4Params(**{**params.__dict__, "c": 0.0})
    return {"bound": theorem4_bound(params), "noise_term": theorem4_bound(noise)}


def cmd_estimate(p, seed, threads):
    if p.get("fixture"):
        if p["fixture"] != "simpson":
            raise DesignError(f"unknown fixture {p['fixture']!r}; available: simpson")
        data = simpson_observed()
    else:
        _need(p, "data")
        data = parse_observed(p["data"])
    w, y = data["w"], data["y"]
    method = p["method"]
    out = {"method": method, "n": int(w.size), "n_treated": int(w.sum())}
    if method == "dm":
        out["estimate"] = dm_estimate(y, w)
    elif method == "ipw":
        _need(p, "propensity")
        out["estimate"] = ipw_estimate(y, w, _floats(p["propensity"]))
    elif method == "aggregate":
        if "stratum" not in data:
            raise DesignError("aggregate needs a stratum column")
        out["estimate"] = aggregate_estimate(y, w, partition_from_labels(data["stratum"]))
    elif method == "ols":
        x = _covariates(p)
        fit = ols_fit(w, x, y, float(p["sigma2"]))
        out["estimate"] = fit.tau_hat
        out["beta"] = fit.beta_hat.tolist()
        out["var_tau"] = float(fit.covariance[0, 0])
    else:
        raise DesignError(f"unknown method {method!r}; use dm, ipw, aggregate or ols")
    if "stratum" in data:
        part = partition_from_labels(data["stratum"])
        names = data.get("stratum_names")
        out["per_stratum"] = [
            {
                "stratum": names[l] if names else float(data["stratum"][s[0]]),
                "n": len(s),
                "dm": dm_estimate(y[list(s)], w[list(s)]),
            }
            for l, s in enumerate(part.strata)
        ]
    return out


def cmd_oracle(p, seed, threads):
    if p.get("two_stage"):
        q = _fraction(p["q"])
        explore = _fraction(p["explore"])
        out = {"q": str(q), "explore": str(explore)}
        out["sample_mean_expectation"] = str(two_stage_adaptive_expectation(q, "adaptive", "sample_mean", explore))
        if explore > 0:
            out["ipw_expectation"] = str(two_stage_adaptive_expectation(q, "adaptive", "ipw", explore))
        return out
    _need(p, "science")
    _, t = parse_science_table(p["science"])
    if p["design"] == "crd":
        _need(p, "n1")
        design = CompletelyRandomized(t.n, int(p["n1"]))
    elif p["design"] == "bernoulli":
        design = Bernoulli.uniform(t.n, float(p["p"]))
    else:
        raise DesignError(f"unknown design {p['design']!r}; use crd or bernoulli")
    cond = NonDegenerate() if p["estimator"] == "dm" and p["design"] == "bernoulli" else None
    mom = exact_estimator_moments(design, t, p["estimator"], cond)
    ate = sample_ate(t)
    return {
        "sample_ate": ate,
        "mean": mom.mean,
        "variance": mom.variance,
        "risk": mom.variance + (mom.mean - ate) ** 2,
        "conditioning_mass": mom.conditioning_mass,
    }


def cmd_simulate(p, seed, threads):
    model = p["model"]
    reps = int(p["reps"])
    if model == "stopping":
        r = stopping_rule_simulation(_fraction(p["threshold"]), int(p["horizon"]), reps, seed, threads)
        return {
            "stop_fraction": r.stop_fraction,
            "stopped": r.stopped,
            "conditional_mean": r.conditional_mean,
            "conditional_mean_exact": None if r.conditional_mean_exact is None else str(r.conditional_mean_exact),
            "min_stopped_value": None if r.min_stopped_value is None else str(r.min_stopped_value),
        }
    if model == "adaptive":
        est = p.get("estimator") or "sample_mean"
        rep = adaptive_two_stage_mc(float(p["q"]), reps, seed, est, float(p["explore"]), threads)
        return {"target": float(p["q"]), **_report(rep)}
    if model == "additive":
        g = _baselines(p)
        dgp = Additive(AdditiveModelSpec(g, float(p["sigma2"]), float(p["tau"]), 0.0), p["noise"])
        n1 = int(p["n1"]) if p.get("n1") is not None else g.size // 2
        est = p.get("estimator") or "dm"
        rep = run_replications(dgp, CompletelyRandomized(g.size, n1), est, p["estimand"], reps, seed, threads)
        return _report(rep)
    if model == "synth":
        fx = factor_fixture(int(p["n"]), int(p["T0"]), int(p["T_post"]), float(p["sigma"]), p["noise"])
        s = synth_bias_study(fx, int(p["T0"]), int(p["k"]), None, reps, seed, threads)
        return {
            "bias": s.bias.tolist(),
            "standard_error": s.standard_error.tolist(),
            "c": s.c,
            "bound": s.bound,
            "bound_noise_term": s.bound_noise_term,
            "replications": s.replications,
        }
    raise DesignError(f"unknown model {model!r}; use stopping, adaptive, additive or synth")


def _report(rep) -> dict:
    return {
        "replications": rep.replications,
        "excluded": rep.excluded,
        "mean": rep.mean,
        "bias": rep.bias,
        "variance": rep.variance,
        "mse": rep.mse,
        "mc_standard_error": rep.mc_standard_error,
        "mse_standard_error": rep.mse_standard_error,
    }


# name: (handler, help, {dest: (default, help)})
COMMANDS = {
    "minimax-bernoulli": (cmd_minimax_bernoulli, "minimax Bernoulli design over a box of outcomes", {
        "n": (None, "number of units"),
        "b": (None, "outcome bound: every potential outcome lies in [-b, b]"),
    }),
    "crd-risk": (cmd_crd_risk, "additive-model risk of completely randomized designs", {
        "g": (None, "comma-separated unit fixed effects"),
        "baselines": (None, "CSV with header unit,g (alternative to --g)"),
        "sigma2": (0.0, "noise variance"),
        "n1": (None, "treated count to report (all splits are always listed)"),
    }),
    "matched-pairs": (cmd_matched_pairs, "optimal matched pairs from known baselines", {
        "g": (None, "comma-separated baselines"),
        "baselines": (None, "CSV with header unit,g (alternative to --g)"),
    }),
    "da-opt": (cmd_da_opt, "D_A-optimal treatment/control split", {
        "covariates": (None, "CSV with header unit,x1,...,xd"),
        "intercept": (False, "prepend an intercept column"),
        "mode": ("exhaustive", "exhaustive or local"),
        "restarts": (50, "local-search restarts"),
    }),
    "d-opt": (cmd_d_opt, "D-optimal subset of k units", {
        "covariates": (None, "CSV with header unit,x1,...,xd"),
        "intercept": (False, "prepend an intercept column"),
        "k": (None, "subset size"),
        "mode": ("exhaustive", "exhaustive or greedy_exchange"),
    }),
    "synth-design": (cmd_synth_design, "synthetic control experiment design", {
        "panel": (None, "CSV with header unit,period,outcome"),
        "T0": (None, "number of pre-experimental periods"),
        "covariates": (None, "optional CSV with header unit,x1,...,xd"),
        "f": (None, "comma-separated target weights (default uniform)"),
        "k": (1, "maximum number of treated units"),
        "mode": ("exhaustive", "exhaustive or greedy"),
    }),
    "theorem4-bound": (cmd_theorem4_bound, "bias bound for the synthetic control estimator", {
        "beta_bar": (None, "covariate coefficient bound"),
        "lambda_bar": (None, "factor loading bound"),
        "r": (None, "factor dimension"),
        "d": (None, "covariate dimension"),
        "zeta_lower": (None, "lower bound on the scaled smallest loading eigenvalue"),
        "c": (None, "fit constant"),
        "sigma_bar": (None, "noise scale"),
        "T0": (None, "pre-experimental periods"),
        "n": (None, "number of units"),
    }),
    "estimate": (cmd_estimate, "treatment effect estimate from observed data", {
        "data": (None, "CSV with header unit,w,y[,stratum]"),
        "fixture": (None, "built-in dataset instead of --data (simpson)"),
        "method": ("dm", "dm, ipw, aggregate or ols"),
        "propensity": (None, "ipw: one propensity or a comma-separated list"),
        "covariates": (None, "ols: CSV with header unit,x1,...,xd"),
        "intercept": (False, "ols: prepend an intercept column"),
        "sigma2": (1.0, "ols: noise variance for the coefficient covariance"),
    }),
    "oracle": (cmd_oracle, "exact moments by enumerating the design", {
        "science": (None, "CSV with header unit,y1,y0"),
        "design": ("crd", "crd or bernoulli"),
        "n1": (None, "crd: treated count"),
        "p": (0.5, "bernoulli: treatment probability"),
        "estimator": ("dm", "dm or ipw"),
        "two_stage": (False, "exact expectation for the two-stage adaptive example instead"),
        "q": ("1/2", "two-stage: Bernoulli outcome parameter"),
        "explore": ("0", "two-stage: probability of a fair coin in stage two"),
    }),
    "simulate": (cmd_simulate, "seeded Monte Carlo studies", {
        "model": ("stopping", "stopping, adaptive, additive or synth"),
        "reps": (10000, "replications"),
        "threshold": ("2/3", "stopping: running-mean threshold"),
        "horizon": (10000, "stopping: path length"),
        "q": (0.5, "adaptive: Bernoulli outcome parameter"),
        "explore": (0.0, "adaptive: fair-coin probability in stage two"),
        "estimator": (None, "adaptive: sample_mean (default) or ipw; additive: dm (default) or ipw"),
        "g": (None, "additive: comma-separated fixed effects"),
        "baselines": (None, "additive: CSV with header unit,g"),
        "sigma2": (1.0, "additive: noise variance"),
        "tau": (0.0, "additive: treatment effect alpha1 - alpha0"),
        "n1": (None, "additive: treated count (default n/2)"),
        "estimand": ("sample", "additive: sample or population"),
        "noise": ("gaussian", "gaussian or rademacher"),
        "n": (20, "synth: number of units"),
        "T0": (50, "synth: pre-experimental periods (even)"),
        "T_post": (3, "synth: experimental periods"),
        "sigma": (1.0, "synth: noise scale"),
        "k": (1, "synth: maximum treated units"),
    }),
}


class UsageError(ValueError):
    """Bad command line (unknown command or flag, malformed value)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="expdesign", description="Experimental design solvers and checks.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True
    for name, (_, help_text, opts) in COMMANDS.items():
        sp = sub.add_parser(name, help=help_text, description=help_text)
        for dest, (default, h) in opts.items():
            flag = "--" + dest.replace("_", "-")
            if default is False:
                sp.add_argument(flag, dest=dest, action="store_true", default=None, help=f"{h} (default: off)")
            else:
                sp.add_argument(flag, dest=dest, default=None, help=f"{h} (default: {default})")
        sp.add_argument("--config", default=None, help="JSON file of parameters; flags override it (default: None)")
        sp.add_argument("--seed", type=int, default=None, help="64-bit random seed (default: 0)")
        sp.add_argument("--threads", type=int, default=None, help="worker threads for simulations (default: 1)")
        sp.add_argument("--out", default=None, help="write the report here instead of stdout (default: None)")
    return parser


def _scalar(v):
    """Flag strings that are plain integers or decimals become numbers."""
    if not isinstance(v, str):
        return v
    for conv in (int, float):
        try:
            out = conv(v)
        except ValueError:
            continue
        return out if math.isfinite(out) else v
    return v


def resolve(command: str, flags: dict) -> dict:
    """Defaults, overridden by the --config file, overridden by explicit flags."""
    if command not in COMMANDS:
        raise DesignError(f"unknown command {command!r}")
    opts = COMMANDS[command][2]
    params = {k: v[0] for k, v in opts.items()}
    params.update(COMMON)
    cfg_path = flags.get("config")
    if cfg_path:
        try:
            cfg = json.loads(Path(cfg_path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ParseError(f"{cfg_path}: config file not found") from None
        except json.JSONDecodeError as exc:
            raise ParseError(f"{cfg_path}: row {exc.lineno}, column {exc.colno}: invalid JSON ({exc.msg})") from None
        if not isinstance(cfg, dict):
            raise ParseError(f"{cfg_path}: config must be a JSON object")
        cfg.pop("command", None)
        unknown = sorted(set(cfg) - set(params))
        if unknown:
            raise DesignError(f"{cfg_path}: unknown config key(s) for {command}: {', '.join(unknown)}")
        params.update(cfg)
    params.update({k: _scalar(v) for k, v in flags.items() if v is not None})
    seed = int(params["seed"])
    if not 0 <= seed < 2**64:
        raise DesignError("seed must be an unsigned 64-bit integer")
    return params


def dispatch(command: str, params: dict) -> dict:
    handler = COMMANDS[command][0]
    seed = int(params["seed"])
    threads = int(params["threads"])
    if threads < 1:
        raise DesignError("threads must be at least 1")
    start = time.perf_counter()
    results = handler(params, seed, threads)
    echoed = {k: v for k, v in params.items() if k not in ("threads", "out", "config")}
    return {
        "command": command,
        "parameters": echoed,
        "results": results,
        "version": __version__,
        "seed": seed,
        "duration": time.perf_counter() - start,
    }


def _to_json(obj, indent: int = 0) -> str:
    pad = "  " * (indent + 1)
    end = "  " * indent
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return json.dumps(str(x))
        return format(x, ".17g")
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, Fraction):
        return json.dumps(str(obj))
    if isinstance(obj, np.ndarray):
        return _to_json(obj.tolist(), indent)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_to_json(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(_to_json(v, indent + 1) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + _to_json(v, indent + 1) for v in obj) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps_report(report: dict) -> str:
    """JSON text of a report; floats carry 17 significant digits."""
    return _to_json(report) + "\n"


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        argv = sys.argv[1:] if argv is None else list(argv)
        command = next((a for a in argv if a in COMMANDS), None)
        sys.stderr.write(json.dumps({"error": "UsageError", "message": str(exc), "command": command}) + "\n")
        return 2
    flags = {k: v for k, v in vars(args).items() if k != "command"}
    try:
        params = resolve(args.command, flags)
        report = dispatch(args.command, params)
        text = dumps_report(report)
        if params.get("out"):
            Path(params["out"]).write_text(text, encoding="utf-8")
        else:
            sys.stdout.write(text)
    except (ValueError, OSError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc), "command": args.command}
        sys.stderr.write(json.dumps(err) + "\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
