"""Command line entry point: ``mpg {train,variance,check,mcheck}``.

Exit codes: 0 ok, 1 a check failed, 2 usage or configuration error.
"""

import argparse
import configparser
import csv
import hashlib
import json
import logging
import os
import re
import sys
import time
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path

from mpg import checks, kernels
from mpg.estimators import MIN_VARIANCE_SAMPLES, EstimatorKind
from mpg.study import MODES, Q_SOURCES, variance_protocol
from mpg.trainer import (A2C, TrainConfig, episodes_to_reach, final_mean,
                         write_episode_csv)

log = logging.getLogger("mpg")

EXIT_OK, EXIT_CHECK, EXIT_USAGE = 0, 1, 2
DEFAULT_ESTIMATORS = ("angular", "standard", "wrapped_angle")
SUMMARY_COLUMNS = ("run_id", "estimator", "seed", "episodes", "final100_mean",
                   "episodes_to_90pct")
MCHECK_COLUMNS = ("d", "alpha", "recursion", "quadrature", "rel_err")
MCHECK_TOL = 1e-8
SECTION = "mpg"

# keys accepted in a config file besides TrainConfig fields
EXTRA_KEYS = {
    "runs": int,
    "estimators": str,
    "draws": int,
    "n_states": int,
    "n_boot": int,
    "q_source": str,
    "mode": str,
}


class ConfigError(ValueError):
    pass


def _parse_bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _converter(kind):
    if kind in (bool, "bool"):
        return _parse_bool
    if kind in (int, "int"):
        return int
    if kind in (float, "float"):
        return float
    if kind in (tuple, "tuple"):
        return lambda t: tuple(int(x) for x in t.replace(",", " ").split())
    return str


def _line_of(text, key):
    for i, line in enumerate(text.splitlines(), 1):
        if line.split("=", 1)[0].strip() == key:
            return i
    return 0


def read_config(path):
    """Flat ``key = value`` file (an optional ``[mpg]`` header is allowed).

    Returns ``(train_kwargs, extras)``; raises ConfigError with the file,
    line and field on any problem.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    has_header = re.search(r"^\s*\[", text, re.MULTILINE) is not None
    body = text if has_header else f"[{SECTION}]\n{text}"
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(body, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if parser.sections() != [SECTION]:
        raise ConfigError(f"{path}: expected a single [{SECTION}] section")
    types = TrainConfig.field_types()
    train_kw, extras = {}, {}
    for key, raw in parser[SECTION].items():
        where = f"{path}:{_line_of(text, key) or '?'}"
        if key in types:
            kind = types[key]
            kind = "str" if key == "estimator" else kind
            target = train_kw
        elif key in EXTRA_KEYS:
            kind, target = EXTRA_KEYS[key], extras
        else:
            raise ConfigError(f"{where}: field {key!r}: unknown key")
        try:
            target[key] = _converter(kind)(raw)
        except ValueError as exc:
            raise ConfigError(f"{where}: field {key!r}: {exc}") from None
    return train_kw, extras


@dataclass
class RunManifest:
    command: str
    config: dict
    seeds: list
    outputs: list = field(default_factory=list)
    started: float = field(default_factory=time.time)
    finished: float = None

    @property
    def run_id(self):
        """Content hash of command and config; stable across reruns."""
        blob = json.dumps({"command": self.command, "config": self.config, "seeds": self.seeds},
                          sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]

    def to_dict(self):
        return {
            "run_id": self.run_id,
            "command": self.command,
            "config": self.config,
            "code_version": code_version(),
            "backend": kernels.BACKEND,
            "seeds": self.seeds,
            "outputs": self.outputs,
            "started": self.started,
            "finished": self.finished,
        }

    def write(self, out_dir):
        self.finished = time.time()
        path = Path(out_dir) / f"manifest_{self.command}_{self.run_id}.json"
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return path


def code_version():
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


# -- argument handling ----------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="mpg", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", type=Path, help="flat key = value config file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", type=Path, help="output directory (default $MPG_OUT_DIR or ./runs)")

    tr = sub.add_parser("train", help="A2C training runs, one CSV per run")
    common(tr)
    tr.add_argument("--estimator", help="comma separated estimator kinds")
    tr.add_argument("--runs", type=int, help="seeds per estimator")
    tr.add_argument("--episodes", type=int)

    va = sub.add_parser("variance", help="standard vs marginal estimator variance")
    common(va)
    va.add_argument("--estimator")
    va.add_argument("--checkpoint", type=Path, help="trained model for --mode trained")
    va.add_argument("--mode", choices=MODES + ("both",))

    ch = sub.add_parser("check", help="run oracle suites")
    ch.add_argument("suite", nargs="?", default="all", choices=tuple(checks.SUITES) + ("all",))

    mc = sub.add_parser("mcheck", help="M-function recursion vs quadrature table")
    mc.add_argument("--out", type=Path)
    return p


def _out_dir(args):
    out = args.out or Path(os.environ.get("MPG_OUT_DIR", "runs"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load(args):
    if args.config is None:
        return {}, {}
    if not args.config.exists():
        raise ConfigError(f"{args.config}: config file not found")
    return read_config(args.config)


def _make_config(train_kw, **overrides):
    kw = dict(train_kw)
    kw.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return TrainConfig(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from None


def _estimators(text):
    names = [s.strip() for s in text.split(",") if s.strip()]
    try:
        return [EstimatorKind.parse(n).value for n in names]
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


# -- subcommands -----------------------------------------------------------------

def cmd_train(args):
    train_kw, extras = _load(args)
    kinds = _estimators(args.estimator or extras.get("estimators", ",".join(DEFAULT_ESTIMATORS)))
    runs = args.runs if args.runs is not None else extras.get("runs", 1)
    if runs < 1:
        raise ConfigError("runs must be >= 1")
    base = _make_config(train_kw, seed=args.seed, episodes=args.episodes)
    seeds = [base.seed + i for i in range(runs)]
    out = _out_dir(args)
    snapshot = base.to_dict()
    snapshot.update(estimators=kinds, runs=runs)
    manifest = RunManifest("train", snapshot, seeds)
    summary = []
    for kind in kinds:
        for seed in seeds:
            cfg = _make_config({**base.to_dict(), "estimator": kind, "seed": seed})
            run_id = f"{manifest.run_id}:{kind}:s{seed}"
            agent = A2C(cfg)
            records = agent.run()
            stem = f"{kind}_s{seed}"
            write_episode_csv(out / f"{stem}.csv", records, run_id)
            agent.save(out / f"{stem}.ckpt")
            manifest.outputs += [f"{stem}.csv", f"{stem}.ckpt"]
            env = cfg.make_env()
            target = 0.9 * env.optimal_return(cfg.gamma) if hasattr(env, "optimal_return") else None
            hit = episodes_to_reach(records, target) if target is not None else None
            summary.append((run_id, kind, seed, len(records), final_mean(records),
                            "" if hit is None else hit))
            log.info("%s final100=%.4f", run_id, summary[-1][4])
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_COLUMNS)
        for row in summary:
            w.writerow([row[0], row[1], row[2], row[3], repr(row[4]), row[5]])
    manifest.outputs.append("summary.csv")
    print(manifest.write(out))
    return EXIT_OK


def cmd_variance(args):
    train_kw, extras = _load(args)
    mode = args.mode or extras.get("mode") or ("trained" if args.checkpoint else "init")
    if mode not in MODES + ("both",):
        raise ConfigError(f"mode must be one of {MODES + ('both',)}")
    modes = MODES if mode == "both" else (mode,)
    if "trained" in modes and args.checkpoint is None:
        raise ConfigError("trained mode needs --checkpoint")
    if args.checkpoint is not None and not args.checkpoint.exists():
        raise ConfigError(f"{args.checkpoint}: checkpoint not found")
    draws = extras.get("draws", MIN_VARIANCE_SAMPLES)
    if draws < MIN_VARIANCE_SAMPLES:
        raise ConfigError(f"draws must be >= {MIN_VARIANCE_SAMPLES}, got {draws}")
    q_source = extras.get("q_source", "critic")
    if q_source not in Q_SOURCES:
        raise ConfigError(f"q_source must be one of {Q_SOURCES}")
    base = _make_config(train_kw, seed=args.seed, estimator=args.estimator)
    out = _out_dir(args)
    snapshot = base.to_dict()
    snapshot.update(modes=list(modes), draws=draws, q_source=q_source,
                    n_states=extras.get("n_states", 32), n_boot=extras.get("n_boot", 1000),
                    checkpoint=str(args.checkpoint) if args.checkpoint else None)
    manifest = RunManifest("variance", snapshot, [base.seed])
    for m in modes:
        if m == "init":
            agent = A2C(base)
        else:
            try:
                agent = A2C.load(args.checkpoint)
            except (ValueError, KeyError, OSError) as exc:
                raise ConfigError(f"{args.checkpoint}: {exc}") from None
        report = variance_protocol(agent, m, n=draws, n_states=snapshot["n_states"],
                                   seed=base.seed, q_source=q_source, n_boot=snapshot["n_boot"])
        report.extra["run_id"] = manifest.run_id
        name = f"variance_{m}.json"
        (out / name).write_text(report.to_json() + "\n")
        manifest.outputs.append(name)
        print(report.to_json())
    manifest.write(out)
    return EXIT_OK


def cmd_check(args):
    names = tuple(checks.SUITES) if args.suite == "all" else (args.suite,)
    ok = True
    for name in names:
        for res in checks.SUITES[name]():
            print(res.line())
            ok &= res.passed
    print("all checks passed" if ok else "SOME CHECKS FAILED")
    return EXIT_OK if ok else EXIT_CHECK


def cmd_mcheck(args):
    out = _out_dir(args)
    rows = checks.mfun_table()
    path = out / "mcheck.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(MCHECK_COLUMNS)
        for d, a, rec, quad, err in rows:
            w.writerow([d, repr(a), repr(rec), repr(quad), repr(err)])
    worst = max(r[4] for r in rows)
    print(f"{path}: {len(rows)} rows, worst rel_err {worst:.3e} (tol {MCHECK_TOL:.0e})")
    return EXIT_OK if worst <= MCHECK_TOL else EXIT_CHECK


COMMANDS = {"train": cmd_train, "variance": cmd_variance, "check": cmd_check,
            "mcheck": cmd_mcheck}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"mpg {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
