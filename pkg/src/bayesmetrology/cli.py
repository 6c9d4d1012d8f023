"""Command-line runner: ``bayesmetrology <command> [options]``.

Commands
--------
state-info   photon statistics and QFI of a probe
personick    optimal single-shot bound and estimator spectrum
simulate     mean squared error versus repetitions (CSV)
loss         lossy two-photon sweep (CSV)

Exit status is 0 on success, 2 for configuration errors and 3 for numerical
failures.
"""
from __future__ import annotations

import argparse
import configparser
import math
import re
import sys
import warnings
from dataclasses import dataclass, fields

import numpy as np

from .bayes import (CSV_COLUMNS, DEFAULT_SAMPLES, BudgetWarning, MseCurve, NotReachedError,
                    ZeroEvidenceError, atomic_write, mse_repeated, mu_tau)
from .fisher import quantum_fisher
from .fock import (DegenerateVarianceError, SymmetryError, TruncationError, j_parameter,
                   make_probe, mandel_q, mean_photon_number, probe_from_name)
from .personick import (EmptySupportError, FlatPrior, averaged_moments, narrow_prior_bound,
                        solve_estimator, write_spectrum_csv)
from .povm import SCHEMES, scheme_for_probe

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
COMMANDS = ("simulate", "personick", "loss")
SECTION = re.compile(r"^experiment\s+(\S+)$")


class ConfigError(ValueError):
    pass


_ANGLE = re.compile(r"^\s*([-+]?\d*\.?\d*)\s*\*?\s*pi\s*(?:/\s*(\d+\.?\d*))?\s*$")


def parse_angle(text) -> float:
    """Parse ``0.3``, ``pi``, ``pi/2`` or ``3*pi/8`` into radians."""
    if isinstance(text, (int, float)):
        return float(text)
    s = str(text).strip().lower()
    try:
        return float(s)
    except ValueError:
        pass
    m = _ANGLE.match(s)
    if not m:
        raise ConfigError(f"cannot parse angle {text!r}")
    coef = m.group(1)
    coef = 1.0 if coef in ("", "+") else (-1.0 if coef == "-" else float(coef))
    den = float(m.group(2)) if m.group(2) else 1.0
    return coef * math.pi / den


@dataclass
class ExperimentConfig:
    """One run of ``command`` (simulate, personick or loss).

    ``r``, ``alpha`` and ``n`` override probe defaults; ``eta`` is only used by
    the loss sweep.
    """

    name: str = "run"
    command: str = "simulate"
    state: str = "noon"
    scheme: str = "optimal"
    w0: float = math.pi / 2
    theta_bar: float = 0.0
    mu_max: int = 10
    seed: int = 0
    samples: int = DEFAULT_SAMPLES
    out: str = ""
    cutoff: int | None = None
    r: float | None = None
    alpha: float | None = None
    n: int | None = None
    eta: float = 0.9

    _ints = ("mu_max", "seed", "samples", "cutoff", "n")
    _angles = ("w0", "theta_bar")

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}; choose from {', '.join(COMMANDS)}")
        if not 0 < self.eta <= 1:
            raise ConfigError("eta must lie in (0, 1]")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}; choose from {', '.join(SCHEMES)}")
        if self.mu_max < 0:
            raise ConfigError("mu_max must be >= 0")
        if self.samples < 1:
            raise ConfigError("samples must be positive")
        if not self.w0 > 0:
            raise ConfigError("w0 must be positive")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls) if f.name != "name"]

    def output(self) -> str:
        return self.out or f"{self.name}.csv"

    def probe_params(self) -> dict:
        return {k: getattr(self, k) for k in ("r", "alpha", "n") if getattr(self, k) is not None}

    def to_section(self) -> dict:
        out = {}
        for k in self.keys():
            v = getattr(self, k)
            if v is None:
                continue
            out[k] = repr(v) if isinstance(v, float) else str(v)
        return out

    @classmethod
    def from_section(cls, name: str, items: dict) -> "ExperimentConfig":
        unknown = set(items) - set(cls.keys())
        if unknown:
            raise ConfigError(f"[experiment {name}]: unknown key(s) {sorted(unknown)}")
        kw = {"name": name}
        for k, v in items.items():
            try:
                if k in cls._ints:
                    kw[k] = int(v)
                elif k in cls._angles:
                    kw[k] = parse_angle(v)
                elif k in ("r", "alpha", "eta"):
                    kw[k] = float(v)
                else:
                    kw[k] = v
            except ValueError as exc:
                raise ConfigError(f"[experiment {name}] {k}: {exc}") from None
        return cls(**kw)


def read_configs(path) -> list[ExperimentConfig]:
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    out = []
    for sec in parser.sections():
        m = SECTION.match(sec)
        if not m:
            raise ConfigError(f"{path}: section [{sec}] must be [experiment NAME]")
        out.append(ExperimentConfig.from_section(m.group(1), dict(parser[sec])))
    if not out:
        raise ConfigError(f"{path}: no [experiment NAME] sections")
    return out


def write_configs(path, configs) -> None:
    parser = configparser.ConfigParser(interpolation=None)
    for cfg in configs:
        parser[f"experiment {cfg.name}"] = cfg.to_section()
    with open(path, "w") as fh:
        parser.write(fh)


def _probe(state, params, cutoff=None):
    return make_probe(probe_from_name(state, **params), cutoff)


def run_experiment(cfg: ExperimentConfig) -> MseCurve | None:
    """Simulate one config; returns ``None`` (header-only output) when mu_max is 0."""
    probe = _probe(cfg.state, cfg.probe_params(), cfg.cutoff)
    prior = FlatPrior(cfg.theta_bar, cfg.w0)
    if cfg.mu_max == 0:
        return None
    fq = quantum_fisher(probe)
    povm = scheme_for_probe(cfg.scheme, probe, prior)
    curve = mse_repeated(probe, povm, prior, cfg.mu_max, samples=cfg.samples,
                         seed=cfg.seed, fq=fq if fq > 0 else None)
    meta = dict(curve.meta, state=cfg.state, scheme=cfg.scheme)
    return MseCurve(curve.mu, curve.mse, curve.stderr, curve.taylor_delta, curve.crb,
                    curve.exact, meta)


def run_personick(cfg: ExperimentConfig):
    probe = _probe(cfg.state, cfg.probe_params(), cfg.cutoff)
    prior = FlatPrior(cfg.theta_bar, cfg.w0)
    return solve_estimator(averaged_moments(probe, prior, "sector"))


def run_loss(cfg: ExperimentConfig):
    from .loss import lossy_personick_sweep

    prior = FlatPrior(cfg.theta_bar, cfg.w0)
    if cfg.mu_max == 0:
        return None, None
    return lossy_personick_sweep(cfg.eta, prior, cfg.mu_max, samples=cfg.samples,
                                 seed=cfg.seed)


def execute(cfg: ExperimentConfig) -> str:
    """Run a config and write its CSV; returns a one-line summary."""
    out = cfg.output()
    if cfg.command == "personick":
        sol = run_personick(cfg)
        write_spectrum_csv(out, {cfg.state: sol})
        return f"{cfg.name}: bound {sol.bound:.6e}, wrote {out}"
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", BudgetWarning)
        if cfg.command == "loss":
            curve, sol = run_loss(cfg)
            extra = {"eta": repr(cfg.eta), "encoding": "single-arm"}
        else:
            curve, extra = run_experiment(cfg), None
    for w in caught:
        print(f"warning [{cfg.name}]: {w.message}", file=sys.stderr)
    _write_curve(curve, out, extra)
    return f"{cfg.name}: wrote {out}"


def _write_curve(curve, path, extra=None):
    if curve is None:
        cols = list(CSV_COLUMNS) + list(extra or {})
        atomic_write(path, ",".join(cols) + "\r\n")
    else:
        curve.to_csv(path, extra)


# -- commands -----------------------------------------------------------------

def cmd_state_info(args) -> int:
    probe = _probe(args.state, _params(args), args.cutoff)
    print(f"state: {args.state}  cutoffs: ({probe.dims.d1}, {probe.dims.d2})  tail: {probe.tail:.3g}")
    print(f"n_bar: {mean_photon_number(probe):.6f}")
    for label, fn in (("Q", mandel_q), ("J", j_parameter)):
        try:
            print(f"{label}: {fn(probe):.6f}")
        except (DegenerateVarianceError, ZeroDivisionError) as exc:
            print(f"{label}: undefined ({exc})")
        except SymmetryError as exc:
            print(f"{label}: undefined, probe is not path symmetric ({exc})")
    fq = quantum_fisher(probe)
    print(f"F_q: {fq:.6f}")
    if args.curve:
        curve = MseCurve.from_csv(args.curve)
        print(f"mu_tau: {mu_tau(curve, fq, args.target)}")
    return EXIT_OK


def cmd_personick(args) -> int:
    probe = _probe(args.state, _params(args), args.cutoff)
    prior = FlatPrior(parse_angle(args.theta_bar), parse_angle(args.w0))
    sol = solve_estimator(averaged_moments(probe, prior, args.method))
    print(f"bound: {sol.bound:.6e}")
    print(f"support: {sol.support_dim}  residual: {sol.residual:.2e}")
    if prior.width < 0.1:
        print(f"narrow-prior approximation: {narrow_prior_bound(probe, prior):.6e}")
    if sol.degenerate_groups:
        print(f"degenerate estimate groups: {sol.degenerate_groups}")
    if args.out:
        write_spectrum_csv(args.out, {args.state: sol})
    else:
        print("estimates: " + " ".join(f"{e:.6e}" for e in sol.estimates))
    return EXIT_OK


def _configs_from_args(args) -> list[ExperimentConfig]:
    if args.config:
        cfgs = read_configs(args.config)
        if args.experiment:
            cfgs = [c for c in cfgs if c.name == args.experiment]
            if not cfgs:
                raise ConfigError(f"no experiment named {args.experiment!r}")
        return cfgs
    kw = dict(state=args.state, scheme=args.scheme, w0=parse_angle(args.w0),
              theta_bar=parse_angle(args.theta_bar), mu_max=args.mu_max, seed=args.seed,
              samples=args.samples, out=args.out or "", cutoff=args.cutoff)
    kw.update(_params(args))
    return [ExperimentConfig(**kw)]


def cmd_simulate(args) -> int:
    for cfg in _configs_from_args(args):
        print(execute(cfg))
    return EXIT_OK


def cmd_loss(args) -> int:
    cfg = ExperimentConfig(name="loss", command="loss", w0=parse_angle(args.w0),
                           theta_bar=parse_angle(args.theta_bar), mu_max=args.mu_max,
                           seed=args.seed, samples=args.samples, out=args.out, eta=args.eta)
    print(execute(cfg))
    return EXIT_OK


def _params(args) -> dict:
    return {k: getattr(args, k) for k in ("r", "alpha", "n") if getattr(args, k, None) is not None}


def _add_probe_args(p):
    p.add_argument("--state", default="noon", help="coherent, noon, tsv, ses, tsc, tsc-int")
    p.add_argument("--r", type=float, help="squeezing parameter override")
    p.add_argument("--alpha", type=float, help="displacement override")
    p.add_argument("--n", type=int, help="NOON photon number override")
    p.add_argument("--cutoff", type=int, help="Fock cutoff per mode")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bayesmetrology", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("state-info", help="photon statistics and QFI")
    _add_probe_args(p)
    p.add_argument("--curve", help="MSE curve CSV; also report mu_tau")
    p.add_argument("--target", type=float, default=0.05, help="relative error for mu_tau")
    p.set_defaults(func=cmd_state_info)

    p = sub.add_parser("personick", help="optimal single-shot bound")
    _add_probe_args(p)
    p.add_argument("--w0", default="pi/2")
    p.add_argument("--theta-bar", default="0")
    p.add_argument("--method", choices=("sector", "full"), default="sector")
    p.add_argument("--out", help="spectrum CSV path")
    p.set_defaults(func=cmd_personick)

    p = sub.add_parser("simulate", help="MSE versus repetitions, or every run in --config")
    _add_probe_args(p)
    p.add_argument("--scheme", default="optimal", choices=SCHEMES)
    p.add_argument("--w0", default="pi/2")
    p.add_argument("--theta-bar", default="0")
    p.add_argument("--mu-max", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=DEFAULT_SAMPLES)
    p.add_argument("--out", help="output CSV path")
    p.add_argument("--config", help="config file with [experiment NAME] sections")
    p.add_argument("--experiment", help="run only this experiment from --config")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("loss", help="lossy two-photon sweep")
    p.add_argument("--eta", type=float, default=0.9)
    p.add_argument("--w0", default="pi/2")
    p.add_argument("--theta-bar", default="pi/4")
    p.add_argument("--mu-max", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=DEFAULT_SAMPLES)
    p.add_argument("--out", default="loss.csv")
    p.set_defaults(func=cmd_loss)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        return args.func(args)
    except (ConfigError, TruncationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (EmptySupportError, ZeroEvidenceError, NotReachedError,
            np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
