"""Command-line interface: ``simulate``, ``sample``, ``fit`` and ``summary``.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure.
"""
import argparse
import os
import sys
from pathlib import Path

import numpy as np

from .chain import SAMPLERS, SamplerConfig, run_chain, run_chains, sampler_info
from .diagnostics import render_tables
from .distributions import make_rng
from .errors import EnvelopeViolation, FitError, GlmmError, ModelError, NumericalError, UndefinedStatisticError
from .inference import FitConfig, mcem_fit, mcml_fit
from .io import (ConfigError, config_hash, load_config, read_chain, read_dataset, write_chain,
                 write_dataset, write_json)
from .model import BayesState, ConditionalTarget, PriorSpec
from .simulate import simulate


def _vector(value, n, what):
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.shape == (1,) and n != 1:
        arr = np.full(n, arr[0])
    if arr.shape != (n,):
        raise ConfigError(f"{what} needs {n} values, got {arr.shape[0]}")
    return arr


def _matrix(value, p, base_dir):
    if isinstance(value, str):
        path = Path(value) if os.path.isabs(value) else Path(base_dir) / value
        try:
            value = np.loadtxt(path, delimiter=",", ndmin=2)
        except OSError as exc:
            raise ConfigError(f"cannot read matrix file {path}: {exc.strerror}") from None
    Q = np.asarray(value, dtype=float)
    return float(Q) * np.eye(p) if Q.ndim == 0 else Q


def _require(cfg, key):
    if key not in cfg:
        raise ConfigError(f"config is missing {key!r}")
    return cfg[key]


def _load_model(cfg, base_dir):
    data = _require(cfg, "data")
    path = data if os.path.isabs(data) else os.path.join(base_dir, data)
    ds = read_dataset(path)
    return ds.model(_require(cfg, "family"), cfg.get("intercept", True)), path


def _prior(cfg, model, base_dir):
    pc = cfg.get("prior", {})
    return PriorSpec(_vector(pc.get("mu0", 0.0), model.p, "prior.mu0"),
                     _matrix(pc.get("Q", 0.001), model.p, base_dir),
                     _vector(pc.get("a", 0.01), model.r, "prior.a"),
                     _vector(pc.get("b", 0.01), model.r, "prior.b"))


def _conditional_target(cfg, model):
    cc = cfg.get("conditional", {})
    beta = _vector(cc.get("beta", 0.0), model.p, "conditional.beta")
    if "G" in cc:
        return ConditionalTarget(model, beta, np.asarray(cc["G"], dtype=float))
    lam = _vector(cc.get("lambda", 1.0), model.r, "conditional.lambda")
    return ConditionalTarget.from_precisions(model, beta, lam)


def _sampler_config(cfg):
    try:
        return SamplerConfig(
            sampler=str(_require(cfg, "sampler")),
            n_iter=int(_require(cfg, "n_iter")),
            burn_in=int(cfg.get("burn_in", 0)),
            thin=int(cfg.get("thin", 1)),
            step_size=float(cfg.get("step_size", 0.1)),
            n_leapfrog=int(cfg.get("n_leapfrog", 10)),
            mass=cfg.get("mass", 1.0),
            adapt=bool(cfg.get("adapt", True)),
            target_accept=cfg.get("target_accept"),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad sampler settings: {exc}") from None


def _apply_overrides(cfg, args, keys):
    cfg = dict(cfg)
    for key in keys:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


def _table_coords(names):
    coords = [n for n in names if not n.startswith("u.")]
    return coords or names


def _summaries_text(samples_by_label):
    summaries = {lab: sm.summary() for lab, sm in samples_by_label.items()}
    first = next(iter(samples_by_label.values()))
    text = render_tables(summaries, _table_coords(first.names))
    notes = [f"{lab}: {n}" for lab, s in summaries.items() for n in s.notes]
    if notes:
        text += "\n" + "\n".join(notes) + "\n"
    return text


def cmd_simulate(args):
    cfg = load_config(args.config).get("simulate", {}) if args.config else {}
    cfg = _apply_overrides(cfg, args, ["family", "m", "p", "blocks", "beta", "lam", "trials", "seed"])
    if "lam" in cfg:
        cfg["lambda"] = cfg.pop("lam")
    family = _require(cfg, "family")
    m = int(_require(cfg, "m"))
    p = int(cfg.get("p", 1))
    blocks = [int(b) for b in np.atleast_1d(_require(cfg, "blocks"))]
    beta = _vector(cfg.get("beta", 0.0), p, "beta")
    lam = _vector(cfg.get("lambda", 1.0), len(blocks), "lambda")
    seed = int(cfg.get("seed", 0))
    ds, truth = simulate(make_rng(seed), family, m, p, blocks, beta, lam, cfg.get("trials", 1))
    out = args.out or "data.csv"
    write_dataset(out, ds)
    truth.update({"seed": seed, "m": m, "p": p, "blocks": blocks})
    stem = out[:-4] if out.endswith(".csv") else out
    write_json(stem + ".truth.json", truth)
    print(f"wrote {out} (m={m}, mean y={ds.y.mean():.4f}) and {stem}.truth.json")


def cmd_sample(args):
    cfg = load_config(args.config)
    base_dir = os.path.dirname(os.path.abspath(args.config))
    cfg = _apply_overrides(cfg, args, ["seed", "data", "sampler", "n_iter", "burn_in", "thin", "chains"])
    if args.data is not None:
        base_dir = os.getcwd()
    model, data_path = _load_model(cfg, base_dir)
    scfg = _sampler_config(cfg)
    info = sampler_info(scfg.sampler, model)
    kwargs = {}
    if info.bayesian:
        kwargs["prior"] = _prior(cfg, model, base_dir)
        init = cfg.get("init", {})
        kwargs["init"] = BayesState.initial(
            model,
            u=_vector(init["u"], model.q, "init.u") if "u" in init else None,
            beta=_vector(init["beta"], model.p, "init.beta") if "beta" in init else None,
            lam=_vector(init["lambda"], model.r, "init.lambda") if "lambda" in init else None,
        )
    else:
        kwargs["target"] = _conditional_target(cfg, model)
        if "u" in cfg.get("init", {}):
            kwargs["init"] = _vector(cfg["init"]["u"], model.q, "init.u")
    seed = int(cfg.get("seed", 0))
    n_chains = int(cfg.get("chains", 1))
    threads = max(1, int(args.threads or 1))
    h = config_hash(cfg, data_path)
    rng = make_rng(seed)
    if n_chains == 1:
        results = [run_chain(rng, model, scfg, **kwargs)]
    else:
        results = run_chains(rng, model, scfg, n_chains, threads, **kwargs)
    out = args.out or "chain.csv"
    stem = out[:-4] if out.endswith(".csv") else out
    labelled = {}
    for k, sm in enumerate(results):
        path = out if n_chains == 1 else f"{stem}.chain{k + 1}.csv"
        write_chain(path, sm, seed, h, {"chain": k + 1, "chains": n_chains, "family": model.family.value})
        labelled[scfg.sampler if n_chains == 1 else f"{scfg.sampler}#{k + 1}"] = sm
    sys.stdout.write(_summaries_text(labelled))


def cmd_fit(args):
    cfg = load_config(args.config)
    base_dir = os.path.dirname(os.path.abspath(args.config))
    cfg = _apply_overrides(cfg, args, ["seed", "data"])
    if args.data is not None:
        base_dir = os.getcwd()
    model, _ = _load_model(cfg, base_dir)
    fc = dict(cfg.get("fit", {}))
    mode = fc.pop("mode", "mcem")
    if mode not in ("mcem", "mcml"):
        raise ConfigError(f"fit.mode must be 'mcem' or 'mcml', got {mode!r}")
    beta0 = _vector(fc.pop("beta", 0.0), model.p, "fit.beta")
    lam0 = _vector(fc.pop("lambda", 1.0), model.r, "fit.lambda")
    try:
        fit_cfg = FitConfig(**fc)
    except TypeError as exc:
        raise ConfigError(f"bad fit settings: {exc}") from None
    rng = make_rng(int(cfg.get("seed", 0)))
    fitter = mcem_fit if mode == "mcem" else mcml_fit
    res = fitter(rng, model, (beta0, lam0), fit_cfg)
    report = {
        "mode": mode,
        "beta": res.beta.tolist(),
        "lambda": np.asarray(res.lam).tolist(),
        "objective": res.objective,
        "iterations": res.n_iter,
        "converged": res.converged,
        "importance_ess": res.importance_ess,
        "warnings": res.warnings,
        "trajectory": [{"beta": b.tolist(), "lambda": lam.tolist()} for b, lam in res.trajectory],
    }
    write_json(args.out or "fit.json", report)
    lines = [f"{mode} fit ({res.n_iter} iterations, converged={res.converged})",
             f"{'parameter':<12}{'estimate':>14}"]
    lines += [f"beta.{i:<7}{v:>14.6f}" for i, v in enumerate(res.beta)]
    lines += [f"lambda.{j + 1:<5}{v:>14.6f}" for j, v in enumerate(np.asarray(res.lam))]
    lines.append(f"{'objective':<12}{res.objective:>14.6f}")
    if res.importance_ess is not None:
        lines.append(f"{'import. ESS':<12}{res.importance_ess:>14.1f}")
    lines += [f"warning: {w}" for w in res.warnings]
    print("\n".join(lines))


def cmd_summary(args):
    labelled = {}
    for path in args.chains:
        sm = read_chain(path)
        label = sm.sampler
        while label in labelled:
            label += "'"
        labelled[label] = sm
    sys.stdout.write(_summaries_text(labelled))


def build_parser():
    parser = argparse.ArgumentParser(prog="glmmcmc", description="MCMC samplers for GLMMs")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="simulate a GLMM dataset")
    sim.add_argument("--config", help="JSON config; settings under the 'simulate' key")
    sim.add_argument("--family", choices=["logistic", "probit", "poisson-log"])
    sim.add_argument("--m", type=int)
    sim.add_argument("--p", type=int, help="fixed effects including the intercept")
    sim.add_argument("--blocks", type=int, nargs="+")
    sim.add_argument("--beta", type=float, nargs="+")
    sim.add_argument("--lambda", dest="lam", type=float, nargs="+")
    sim.add_argument("--trials", type=int)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--out", help="dataset CSV path (default data.csv)")
    sim.set_defaults(func=cmd_simulate)

    smp = sub.add_parser("sample", help="run a sampler and write the chain")
    smp.add_argument("--config", required=True)
    smp.add_argument("--data")
    smp.add_argument("--sampler", choices=list(SAMPLERS))
    smp.add_argument("--n-iter", dest="n_iter", type=int)
    smp.add_argument("--burn-in", dest="burn_in", type=int)
    smp.add_argument("--thin", type=int)
    smp.add_argument("--seed", type=int)
    smp.add_argument("--chains", type=int)
    smp.add_argument("--threads", type=int)
    smp.add_argument("--out", help="chain CSV path (default chain.csv)")
    smp.set_defaults(func=cmd_sample)

    fit = sub.add_parser("fit", help="MCEM or MCML estimation")
    fit.add_argument("--config", required=True)
    fit.add_argument("--data")
    fit.add_argument("--seed", type=int)
    fit.add_argument("--threads", type=int)
    fit.add_argument("--out", help="report JSON path (default fit.json)")
    fit.set_defaults(func=cmd_fit)

    summ = sub.add_parser("summary", help="re-render diagnostic tables from chain files")
    summ.add_argument("chains", nargs="+")
    summ.set_defaults(func=cmd_summary)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except (NumericalError, FitError, EnvelopeViolation) as exc:
        print(f"glmmcmc: numerical failure: {exc}", file=sys.stderr)
        return 3
    except (ModelError, UndefinedStatisticError, GlmmError, OSError) as exc:
        print(f"glmmcmc: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
