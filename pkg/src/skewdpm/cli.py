"""Command-line interface.

Every command prints progress to standard error and a single JSON record to
standard output. Exit codes: 0 success, 2 configuration or argument error,
3 data-format error, 4 numerical failure.
"""

import argparse
from dataclasses import asdict, dataclass, field, fields
import hashlib
import json
import os
import sys

import numpy as np
import yaml

from . import __version__
from .dataio import (ResultBundle, TransformSpec, load_data, read_draws, read_labels,
                     read_results, transform, write_csv, write_draws, write_labels,
                     write_results)
from .diagnostics import gelman_rubin, iterations_to_convergence
from .exceptions import (ConfigError, DataFormatError, NumericalError, SkewDPMError,
                         UndefinedMetricError)
from .fcs import read_fcs
from .linalg import SpdMatrix
from .model import ClusterParams, NuPrior, default_hyperparams
from .partition import (binder_losses, binder_point_estimate, canonical_labels,
                        f_measure_total, f_point_estimate, limited_f_measure,
                        similarity_matrix)
from .sampler import ChainConfig, run_chain
from .sequential import build_informative_prior
from .simulate import four_cluster_scenario, simulate_mixture

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4

_SIMILARITY_AUTO_MAX = 5000
_DRAWS_FILE = "draws.npz"


# --- configuration ---------------------------------------------------------------

@dataclass
class HyperConfig:
    """Overrides of the default empirical base measure."""

    scale_divisor: float = 3.0
    prior_var: float = 100.0
    alpha_shape: float = 0.5
    alpha_rate: float = 0.125
    nu_prior: str = "exponential"
    nu_rate: float = 0.1
    nu_lo: float = 0.0
    nu_hi: float = 100.0


@dataclass
class RunConfig:
    """Everything needed to reproduce one ``fit`` or ``seqfit`` run."""

    input: str = None
    out: str = None
    transform: str = "none"
    n_iter: int = 1000
    burn_in: int = 500
    thin: int = 1
    mode: str = "st"
    c_nu: float = 1.0
    seed: int = 0
    parallel: bool = False
    n_threads: int = None
    jitter: float = 0.0
    n_init_clusters: int = 30
    point_estimate: str = "binder"
    similarity: str = "auto"
    progress_every: int = 0
    prior_from: str = None
    prior_k: int = None
    hyper: HyperConfig = field(default_factory=HyperConfig)

    def chain_config(self):
        return ChainConfig(n_iter=self.n_iter, burn_in=self.burn_in, thin=self.thin,
                           mode=self.mode, c_nu=self.c_nu, seed=self.seed,
                           parallel=self.parallel, n_threads=self.n_threads,
                           jitter=self.jitter, n_init_clusters=self.n_init_clusters)

    def provenance(self):
        """Settings that determine the result; the output location is excluded."""
        doc = asdict(self)
        doc.pop("out")
        return doc

    def digest(self):
        doc = json.dumps(self.provenance(), sort_keys=True, default=str)
        return hashlib.sha256(doc.encode("utf-8")).hexdigest()


def _coerce(name, value, default):
    if value is None:
        return None
    kind = type(default) if default is not None else None
    if name in ("n_threads", "prior_k"):
        kind = int
    elif name in ("input", "out", "prior_from"):
        kind = str
    try:
        if kind is bool:
            return _parse_bool(value)
        if kind is int:
            if isinstance(value, bool) or float(value) != int(float(value)):
                raise ValueError
            return int(float(value))
        if kind is float:
            return float(value)
        if kind is str:
            return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"config key {name!r}: invalid value {value!r}") from None
    return value


def _fill(cls, doc, where):
    if not isinstance(doc, dict):
        raise ConfigError(f"{where} must be a mapping")
    known = {f.name: f for f in fields(cls)}
    obj = cls()
    for key, value in doc.items():
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}" + (f" in {where}" if where else ""))
        if key == "hyper":
            setattr(obj, key, _fill(HyperConfig, value or {}, "hyper"))
        else:
            setattr(obj, key, _coerce(key, value, getattr(obj, key)))
    return obj


def load_run_config(path=None):
    """Read a YAML run configuration; unknown keys are rejected."""
    if path is None:
        return RunConfig()
    try:
        with open(path, encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file {path!r} does not exist") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {path!r} is not valid YAML: {exc}") from None
    return _fill(RunConfig, doc or {}, "")


def _parse_bool(text):
    if isinstance(text, bool):
        return text
    s = str(text).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _bool_arg(text):
    try:
        return _parse_bool(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


_FLAG_TO_KEY = {"iters": "n_iter", "burnin": "burn_in", "thin": "thin", "mode": "mode",
                "seed": "seed", "parallel": "parallel", "out": "out",
                "transform": "transform", "prior_from": "prior_from", "prior_k": "prior_k",
                "threads": "n_threads", "point_estimate": "point_estimate",
                "similarity": "similarity", "progress_every": "progress_every"}


def _resolve(args):
    cfg = load_run_config(args.config)
    for flag, key in _FLAG_TO_KEY.items():
        value = getattr(args, flag, None)
        if value is not None:
            setattr(cfg, key, _coerce(key, value, getattr(RunConfig(), key)))
    if getattr(args, "input", None):
        cfg.input = args.input
    if cfg.input is None:
        raise ConfigError("no input data given (positional argument or 'input' key)")
    if cfg.out is None:
        raise ConfigError("no output directory given (--out or 'out' key)")
    if cfg.point_estimate not in ("binder", "fmeasure"):
        raise ConfigError("point_estimate must be 'binder' or 'fmeasure'")
    if cfg.similarity not in ("auto", "yes", "no"):
        raise ConfigError("similarity must be 'auto', 'yes' or 'no'")
    TransformSpec.parse(cfg.transform)
    cfg.chain_config()
    return cfg


# --- helpers ---------------------------------------------------------------------

def _log(msg):
    print(msg, file=sys.stderr, flush=True)


def _emit(record):
    print(json.dumps(record, sort_keys=True, default=_json_default), flush=True)


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(type(obj).__name__)


def _finite_or_none(x):
    return float(x) if np.isfinite(x) else None


def _k_mode(draws):
    if draws.n_draws == 0:
        return None
    values, counts = np.unique(draws.k_trace, return_counts=True)
    return int(values[np.argmax(counts)])


def _point_estimate(draws, method):
    if method == "fmeasure" and draws.n_draws > 1:
        return f_point_estimate(draws.partitions), None
    labels, loss = binder_point_estimate(draws.partitions)
    return labels, loss


def _progress(n_iter, every):
    step = every if every > 0 else max(1, n_iter // 10)

    def report(it, state):
        if (it + 1) % step == 0 or it + 1 == n_iter:
            _log(f"iteration {it + 1}/{n_iter}: K={state.n_clusters} alpha={state.alpha:.3f}")
    return report


def _hyper(data, h):
    nu_prior = NuPrior(h.nu_prior, h.nu_rate, h.nu_lo, h.nu_hi)
    return default_hyperparams(data, h.scale_divisor, h.prior_var, nu_prior,
                               (h.alpha_shape, h.alpha_rate))


def _run_and_save(cfg, data, base, prior, command, extra_meta):
    chain = cfg.chain_config()
    _log(f"{command}: {data.n_obs} observations x {data.dim} markers, mode={chain.mode}, "
         f"{chain.n_iter} iterations")
    draws = run_chain(data, base, prior, chain,
                      callback=_progress(chain.n_iter, cfg.progress_every))
    if draws.n_draws == 0:
        raise ConfigError("no draws were stored; check n_iter, burn_in and thin")
    labels, loss = _point_estimate(draws, cfg.point_estimate)
    want_sim = (cfg.similarity == "yes"
                or (cfg.similarity == "auto" and data.n_obs <= _SIMILARITY_AUTO_MAX))
    sim = similarity_matrix(draws.partitions) if want_sim else None
    meta = {
        "command": command, "version": __version__, "seed": cfg.seed,
        "config_hash": cfg.digest(), "config": cfg.provenance(),
        "input": os.path.abspath(cfg.input), "n_obs": data.n_obs, "dim": data.dim,
        "columns": list(data.columns), "mode": chain.mode, "n_draws": draws.n_draws,
        "k_mode": _k_mode(draws), "k_point_estimate": int(labels.max()),
        "point_estimate": cfg.point_estimate, "binder_loss": loss,
    }
    meta.update(extra_meta)
    bundle = ResultBundle.from_draws(labels, draws, chain.burn_in, meta, sim)
    write_results(bundle, cfg.out)
    write_draws(draws, os.path.join(cfg.out, _DRAWS_FILE))
    _log(f"{command}: K mode {meta['k_mode']}, acceptance rate "
         f"{draws.acceptance_rate:.3f}, runtime {draws.runtime:.1f}s")
    _emit({"command": command, "out": cfg.out, "k_mode": meta["k_mode"],
           "k_point_estimate": meta["k_point_estimate"],
           "acceptance_rate": _finite_or_none(draws.acceptance_rate),
           "runtime_seconds": round(draws.runtime, 3), "config_hash": meta["config_hash"]})


# --- commands ----------------------------------------------------------------------

_SIM_KEYS = {"n", "seed", "components", "exact"}
_COMP_KEYS = {"weight", "xi", "psi", "sigma", "nu"}


def _simulation_spec(path):
    if path is None:
        weights, comps = four_cluster_scenario()
        return weights, comps, 2000, None, True
    try:
        with open(path, encoding="utf-8") as fh:
            doc = yaml.safe_load(fh) or {}
    except FileNotFoundError:
        raise ConfigError(f"config file {path!r} does not exist") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {path!r} is not valid YAML: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("simulation config must be a mapping")
    for key in doc:
        if key not in _SIM_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
    if "components" not in doc:
        raise ConfigError("simulation config needs a 'components' list")
    weights, comps = [], []
    for i, c in enumerate(doc["components"]):
        if not isinstance(c, dict):
            raise ConfigError(f"component {i + 1} must be a mapping")
        for key in c:
            if key not in _COMP_KEYS:
                raise ConfigError(f"unknown config key {key!r} in component {i + 1}")
        try:
            xi = np.atleast_1d(np.asarray(c["xi"], float))
            d = xi.shape[0]
            psi = np.atleast_1d(np.asarray(c.get("psi", np.zeros(d)), float))
            sigma = np.asarray(c.get("sigma", np.eye(d)), float).reshape(d, d)
            nu = float(c.get("nu", float("inf")))
            weights.append(float(c["weight"]))
        except KeyError as exc:
            raise ConfigError(f"component {i + 1} is missing {exc.args[0]!r}") from None
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"component {i + 1}: {exc}") from None
        comps.append(ClusterParams(xi, psi, SpdMatrix(sigma), nu))
    return (np.array(weights), comps, int(doc.get("n", 2000)), doc.get("seed"),
            bool(doc.get("exact", True)))


def cmd_simulate(args):
    weights, comps, n, seed, exact = _simulation_spec(args.config)
    if args.n is not None:
        n = args.n
    if args.seed is not None:
        seed = args.seed
    seed = 0 if seed is None else int(seed)
    if args.out is None:
        raise ConfigError("--out is required")
    if len({c.dim for c in comps}) != 1:
        raise ConfigError("all components must share one dimension")
    y, labels = simulate_mixture(weights, comps, n, np.random.default_rng(seed), exact)
    os.makedirs(args.out, exist_ok=True)
    data_path = os.path.join(args.out, "data.csv")
    truth_path = os.path.join(args.out, "truth.csv")
    write_csv(data_path, y, [f"V{j + 1}" for j in range(y.shape[1])])
    write_labels(truth_path, labels)
    _log(f"simulate: wrote {n} observations from {len(comps)} components")
    _emit({"command": "simulate", "data": data_path, "truth": truth_path, "n": n,
           "seed": seed, "counts": np.bincount(labels)[1:].tolist()})
    return EXIT_OK


def cmd_fit(args):
    cfg = _resolve(args)
    data = load_data(cfg.input, cfg.transform)
    base, prior = _hyper(data, cfg.hyper)
    _run_and_save(cfg, data, base, prior, "fit", {})
    return EXIT_OK


def cmd_seqfit(args):
    cfg = _resolve(args)
    if cfg.prior_from is None:
        raise ConfigError("seqfit needs --prior-from DIR")
    draws_path = os.path.join(cfg.prior_from, _DRAWS_FILE)
    if not os.path.isdir(cfg.prior_from) or not os.path.exists(draws_path):
        raise ConfigError(f"prior run {cfg.prior_from!r} has no {_DRAWS_FILE}")
    previous = read_draws(draws_path)
    data = load_data(cfg.input, cfg.transform)
    d_prev = previous.cluster_params[0][0].dim
    if d_prev != data.dim:
        raise ConfigError(f"prior run has dimension {d_prev}, data has {data.dim}")
    h = cfg.hyper
    nu_prior = NuPrior(h.nu_prior, h.nu_rate, h.nu_lo, h.nu_hi)
    base, prior = build_informative_prior(previous, cfg.prior_k, nu_prior=nu_prior,
                                          seed=cfg.seed)
    _log(f"seqfit: informative prior with {len(base.components)} components, "
         f"alpha ~ Gamma({prior.a:.3f}, {prior.b:.3f})")
    extra = {"prior_from": os.path.abspath(cfg.prior_from),
             "prior_k": len(base.components),
             "prior_alpha_gamma": [prior.a, prior.b]}
    _run_and_save(cfg, data, base, prior, "seqfit", extra)
    return EXIT_OK


def cmd_pointest(args):
    path = args.run_dir
    if os.path.isdir(path):
        path = os.path.join(path, _DRAWS_FILE)
    if not os.path.exists(path):
        raise ConfigError(f"no stored draws at {path!r}")
    draws = read_draws(path)
    if draws.n_draws == 0:
        raise ConfigError("the run holds no stored draws")
    record = {"command": "pointest", "method": args.method, "n_draws": draws.n_draws}
    if args.method == "binder":
        losses = binder_losses(draws.partitions)
        labels, loss = binder_point_estimate(draws.partitions)
        record["binder_loss"] = loss
        record["min_sampled_loss"] = float(max(losses.min(), 0.0))
    else:
        labels = (f_point_estimate(draws.partitions) if draws.n_draws > 1
                  else canonical_labels(draws.partitions[0]))
    out = args.out or os.path.join(os.path.dirname(path) or ".", f"partition_{args.method}.csv")
    write_labels(out, labels)
    record.update({"out": out, "k": int(labels.max())})
    _emit(record)
    return EXIT_OK


def _limit_count(p, n):
    if p <= 0:
        raise ConfigError("--limit-p must be positive")
    return int(np.ceil(p * n)) if p < 1 else int(p)


def cmd_eval(args):
    pred = read_labels(args.pred)
    ref = read_labels(args.ref)
    if pred.shape != ref.shape:
        raise ConfigError(f"prediction has {pred.size} labels, reference has {ref.size}")
    record = {"command": "eval", "f_measure": round(f_measure_total(pred, ref), 4),
              "k_pred": int(np.unique(pred).size), "k_ref": int(np.unique(ref).size)}
    if args.limit_p is not None:
        p = _limit_count(args.limit_p, pred.size)
        try:
            record["limited_f_measure"] = round(limited_f_measure(pred, ref, p), 4)
            record["limit_p"] = p
        except UndefinedMetricError as exc:
            _log(f"warning: limited F-measure omitted: {exc}")
    _emit(record)
    return EXIT_OK


def _trace_from_dir(path, column):
    bundle = read_results(path)
    if column not in bundle.traces:
        raise DataFormatError(f"{path}: traces.csv has no {column!r} column")
    trace = bundle.traces[column]
    stored = bundle.traces.get("stored")
    burn = int(np.argmax(stored)) if stored is not None and stored.any() else 0
    return trace, burn


def cmd_diagnose(args):
    if len(args.run_dirs) < 2:
        raise ConfigError("diagnose needs at least two run directories")
    loaded = [_trace_from_dir(d, args.trace) for d in args.run_dirs]
    lengths = {len(t) for t, _ in loaded}
    if len(lengths) != 1:
        raise ConfigError(f"runs have different trace lengths: {sorted(lengths)}")
    burn = max(b for _, b in loaded)
    traces = [t.astype(float) for t, _ in loaded]
    rhat = gelman_rubin([t[burn:] for t in traces])
    n_conv = iterations_to_convergence(traces, args.threshold)
    _emit({"command": "diagnose", "trace": args.trace, "n_runs": len(traces),
           "rhat": _finite_or_none(rhat), "burn_in": burn,
           "iterations_to_convergence": n_conv, "threshold": args.threshold})
    return EXIT_OK


def cmd_fcs2csv(args):
    data = read_fcs(args.input)
    if args.transform is not None:
        data = transform(data, args.transform)
    write_csv(args.output, data)
    _emit({"command": "fcs2csv", "out": args.output, "n_obs": data.n_obs, "dim": data.dim,
           "columns": list(data.columns),
           "transform": str(TransformSpec.parse(args.transform or "none"))})
    return EXIT_OK


# --- parser ----------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _add_chain_flags(p):
    p.add_argument("input", nargs="?", help="CSV or FCS data file")
    p.add_argument("--config", help="YAML run configuration")
    p.add_argument("--seed", type=int)
    p.add_argument("--iters", type=int, help="total sweeps")
    p.add_argument("--burnin", type=int)
    p.add_argument("--thin", type=int)
    p.add_argument("--mode", choices=["sn", "st"])
    p.add_argument("--parallel", type=_bool_arg, metavar="BOOL")
    p.add_argument("--threads", type=int)
    p.add_argument("--out", help="results directory")
    p.add_argument("--transform", help="none, arcsinh(COFACTOR) or boxcox(LAMBDA)")
    p.add_argument("--point-estimate", choices=["binder", "fmeasure"])
    p.add_argument("--similarity", choices=["auto", "yes", "no"])
    p.add_argument("--progress-every", type=int)


def build_parser():
    parser = _Parser(prog="skewdpm",
                     description="Dirichlet process mixtures of skew-t distributions.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("simulate", help="draw data from a skew-t mixture")
    p.add_argument("--config", help="YAML with n, seed and components")
    p.add_argument("--seed", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--out", help="output directory for data.csv and truth.csv")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="run the Gibbs sampler with the default prior")
    _add_chain_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("seqfit", help="run the sampler with a prior built from a previous run")
    _add_chain_flags(p)
    p.add_argument("--prior-from", help="results directory of the previous run")
    p.add_argument("--prior-k", type=int, help="number of prior mixture components")
    p.set_defaults(func=cmd_seqfit)

    p = sub.add_parser("pointest", help="partition point estimate from stored draws")
    p.add_argument("run_dir")
    p.add_argument("--method", choices=["binder", "fmeasure"], default="binder")
    p.add_argument("--out", help="output partition CSV")
    p.set_defaults(func=cmd_pointest)

    p = sub.add_parser("eval", help="F-measure of a partition against a reference")
    p.add_argument("pred")
    p.add_argument("ref")
    p.add_argument("--limit-p", type=float,
                   help="limited F-measure threshold: a count, or a fraction of C if < 1")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("diagnose", help="Gelman-Rubin statistic across runs")
    p.add_argument("run_dirs", nargs="*")
    p.add_argument("--trace", default="logdensity", choices=["logdensity", "k", "alpha"])
    p.add_argument("--threshold", type=float, default=1.1)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("fcs2csv", help="convert a list-mode FCS file to CSV")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--transform")
    p.set_defaults(func=cmd_fcs2csv)
    return parser


def exit_code_for(exc):
    if isinstance(exc, (ConfigError, UndefinedMetricError)):
        return EXIT_CONFIG
    if isinstance(exc, DataFormatError):
        return EXIT_DATA
    if isinstance(exc, NumericalError):
        return EXIT_NUMERICAL
    return EXIT_CONFIG


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SkewDPMError as exc:
        _log(f"error: {exc}")
        return exit_code_for(exc)
    except OSError as exc:
        _log(f"error: {exc}")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
