"""Command-line driver.

Verbs: explore (geometry artifacts), certify (window certification over
the eccentricity schedule), constants (quantitative consequences),
stochastic (random-walk energy paths), export (validated round-trip of
the artifact set).  Every artifact embeds the schema version and the
hash of the run configuration.

Exit codes: 0 success, 2 verification failure, 3 configuration or
artifact error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, field

from . import __version__
from .errors import (
    BlowUp,
    ConfigInvalid,
    EnclosureTooWide,
    MissingArtifact,
    NoConvergence,
    NoCrossing,
    Per3bpError,
    SchemaMismatch,
    SingularPosition,
    StepUnderflow,
    TangentialCrossing,
    TrackingLost,
)

SCHEMA_VERSION = 1

#: failures of the enclosure machinery itself, as opposed to a
#: verification clause coming out negative
NUMERICAL_ERRORS = (
    BlowUp,
    EnclosureTooWide,
    StepUnderflow,
    NoCrossing,
    TangentialCrossing,
    NoConvergence,
    SingularPosition,
    TrackingLost,
)
_NUMERICAL_NAMES = tuple(e.__name__ for e in NUMERICAL_ERRORS)

EXIT_OK = 0
EXIT_VERIFICATION = 2
EXIT_CONFIG = 3
EXIT_NUMERICAL = 4


# ---------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------


def _default_grid() -> dict:
    return {"uu": [4, 6], "dd": [4, 6], "ud": [4, 2], "du": [4, 2]}


def _default_walk() -> dict:
    return {"X0": 0.5, "mu": 0.1, "sigma": 0.15}


@dataclass
class RunConfig:
    """Run configuration; every default reproduces the desk-scale suite."""

    h0: float = -1.5050906397016
    mu: float = 2.089e-4
    eps0: float = 1.6e-5
    parts: int = 8
    grid: dict = field(default_factory=_default_grid)
    full_scale: bool = False
    gamma: float = 2.0
    track_M: float = 10.0
    seed: int = 0
    threads: int = 0
    n_paths: int = 200
    rungs: list = field(default_factory=lambda: [1e-2])
    walk: dict = field(default_factory=_default_walk)
    band: list = field(default_factory=lambda: [0.0, 1.0])
    calibration_nodes: int = 9
    outdir: str = "artifacts"

    def validate(self) -> "RunConfig":
        if not self.eps0 > 0.0:
            raise ConfigInvalid("eps0 must be positive")
        if self.parts < 1:
            raise ConfigInvalid("parts must be at least 1")
        if self.threads < 0:
            raise ConfigInvalid("threads must be nonnegative")
        if self.n_paths < 1:
            raise ConfigInvalid("n_paths must be positive")
        if not (isinstance(self.band, (list, tuple)) and len(self.band) == 2
                and self.band[0] < self.band[1]):
            raise ConfigInvalid("band must be an increasing pair")
        for name, dims in self.grid.items():
            if name not in ("uu", "dd", "ud", "du"):
                raise ConfigInvalid(f"unknown grid class {name!r}")
            if len(dims) != 2 or min(dims) < 1:
                raise ConfigInvalid(f"bad grid dimensions for {name!r}")
        for key in ("X0", "mu", "sigma"):
            if key not in self.walk:
                raise ConfigInvalid(f"walk config misses {key!r}")
        if any(not e > 0.0 for e in self.rungs):
            raise ConfigInvalid("every rung eccentricity must be positive")
        return self

    def canonical(self) -> dict:
        doc = asdict(self)
        doc["version"] = SCHEMA_VERSION
        doc["tool"] = __version__
        return doc

    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def load_config(path: str = None, overrides: dict = None) -> RunConfig:
    cfg = RunConfig()
    if path is not None:
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except FileNotFoundError:
            raise ConfigInvalid(f"config file not found: {path}")
        except json.JSONDecodeError as exc:
            raise ConfigInvalid(f"config file does not parse: {exc}")
        known = set(asdict(cfg))
        unknown = set(doc) - known
        if unknown:
            raise ConfigInvalid(f"unknown config keys: {sorted(unknown)}")
        for key, value in doc.items():
            setattr(cfg, key, value)
    for key, value in (overrides or {}).items():
        if value is not None:
            setattr(cfg, key, value)
    return cfg.validate()


def _parse_grid_flag(text: str) -> dict:
    out = {}
    for part in text.split(","):
        try:
            name, dims = part.split("=")
            r, c = dims.lower().split("x")
            out[name.strip()] = [int(r), int(c)]
        except ValueError:
            raise ConfigInvalid(f"grid flag entry {part!r} is not NAME=RxC")
    return out


# ---------------------------------------------------------------------
# artifact plumbing
# ---------------------------------------------------------------------


def _meta(cfg: RunConfig) -> dict:
    return {
        "schema": SCHEMA_VERSION,
        "tool": __version__,
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
    }


def _stamp_csv(path: str, cfg: RunConfig) -> None:
    """Prepend the artifact header comment to a CSV file."""
    with open(path) as fh:
        body = fh.read()
    header = (f"# schema={SCHEMA_VERSION} tool={__version__} "
              f"config_hash={cfg.config_hash()}\n")
    with open(path, "w") as fh:
        fh.write(header + body)


def _write_json(path: str, doc: dict) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _require(path: str) -> str:
    if not os.path.exists(path):
        raise MissingArtifact(f"required artifact missing: {path}")
    return path


def _geometry(cfg: RunConfig):
    from .explore import find_lyapunov, shoot_homoclinic

    orbit = find_lyapunov(cfg.h0, cfg.mu)
    return orbit, shoot_homoclinic(orbit)


# ---------------------------------------------------------------------
# verbs
# ---------------------------------------------------------------------


def cmd_explore(cfg: RunConfig) -> int:
    from .explore import build_grids, fit_section_charts, write_artifacts

    _, trace = _geometry(cfg)
    chartset = fit_section_charts(trace)
    grids = build_grids(cfg.grid)
    paths = write_artifacts(cfg.outdir, trace, chartset, grids,
                            meta=_meta(cfg))
    _stamp_csv(paths["homoclinic"], cfg)
    _write_json(os.path.join(cfg.outdir, "run.json"),
                {"verb": "explore", "config": cfg.canonical(),
                 **_meta(cfg)})
    print(f"explore: wrote {', '.join(sorted(paths))} to {cfg.outdir}")
    return EXIT_OK


def cmd_certify(cfg: RunConfig) -> int:
    from .certify import run_certification

    _require(os.path.join(cfg.outdir, "charts.json"))
    _require(os.path.join(cfg.outdir, "grids.json"))
    _, trace = _geometry(cfg)
    if cfg.full_scale:
        dims = {"uu": [16, 30], "dd": [16, 30], "ud": [16, 4], "du": [16, 4]}
    else:
        dims = cfg.grid
    cert = run_certification(
        trace, eps0=cfg.eps0, parts=cfg.parts, dims=dims,
        workers=cfg.threads or None,
    )
    merged = os.path.join(cfg.outdir, "certificate.json")
    with open(merged, "w") as fh:
        fh.write(cert.to_json())
    # one sub-certificate per eccentricity subinterval
    by_eps = {}
    for frag in cert.fragments:
        by_eps.setdefault(tuple(frag["eps"]), []).append(frag)
    for li, eps_key in enumerate(sorted(by_eps, key=lambda k: float(k[0]))):
        sub = {
            "version": SCHEMA_VERSION,
            "config_hash": cert.config_hash,
            "eps": list(eps_key),
            "fragments": by_eps[eps_key],
            "C2": cert.C2.get(f"e{li}", {}),
        }
        _write_json(os.path.join(cfg.outdir, f"certificate_e{li}.json"), sub)
    print(f"certify: {len(cert.fragments)} fragments, "
          f"{len(by_eps)} sub-certificates, "
          f"{len(cert.failures)} failures, elapsed {cert.elapsed:.0f}s")
    if cert.ok:
        return EXIT_OK
    _write_json(os.path.join(cfg.outdir, "failures.json"),
                {"failures": cert.failures, **_meta(cfg)})
    numerical = all(
        str(f.get("error", "")).split(":")[0] in _NUMERICAL_NAMES
        for f in cert.failures
    )
    return EXIT_NUMERICAL if numerical else EXIT_VERIFICATION


def cmd_constants(cfg: RunConfig, certificate: str = None, c: float = None,
                  C: float = None, transition_time: float = None) -> int:
    from .certify import derive_constants

    cert_doc = None
    if certificate is not None:
        with open(_require(certificate)) as fh:
            cert_doc = json.load(fh)
        if "C2" in cert_doc and isinstance(cert_doc["C2"], dict) \
                and cert_doc["C2"] and "c" not in cert_doc["C2"]:
            # merged certificates key the C2 result per subinterval;
            # the reported constants use the weakest one
            worst = min(cert_doc["C2"].values(), key=lambda v: float(v["c"]))
            cert_doc = dict(cert_doc, C2=worst)
    geometry = {
        "c": c, "C": C, "transition_time": transition_time,
        "eps": cfg.eps0,
    }
    if transition_time is None:
        geometry["transition_time"] = (9.0 + 0.1) * math.pi
    out = derive_constants(cert_doc, geometry)
    doc = {"constants": out, **_meta(cfg)}
    _write_json(os.path.join(cfg.outdir, "constants.json"), doc)
    ok = True
    for key, entry in out.items():
        if isinstance(entry, dict) and "ok" in entry:
            ok = ok and entry["ok"]
            detail = ", ".join(f"{k}={v}" for k, v in entry.items()
                               if k != "ok")
            print(f"constants: {key}: {'ok' if entry['ok'] else 'FAIL'} "
                  f"({detail})")
        else:
            print(f"constants: {key}: {entry}")
    return EXIT_OK if ok else EXIT_VERIFICATION


def cmd_stochastic(cfg: RunConfig, exact_every: int = 0) -> int:
    from .certify import default_strips
    from .explore import fit_section_charts
    from .stochastic import (
        calibrate_classes,
        class_routes,
        donsker_check,
        make_schedule,
        steer_orbit,
        write_donsker_report,
        write_paths_csv,
    )

    _, trace = _geometry(cfg)
    strips = default_strips()
    chartsets = {
        "u": fit_section_charts(trace, phase=math.pi / 2.0),
        "d": fit_section_charts(trace, phase=3.0 * math.pi / 2.0),
    }
    routes = class_routes(trace, chartsets)
    walk = cfg.walk
    paths, seeds = [], []
    for rung in cfg.rungs:
        tables = calibrate_classes(routes, strips, rung,
                                   nodes=cfg.calibration_nodes)
        for i in range(cfg.n_paths):
            seed = cfg.seed + i
            schedule = make_schedule(walk["X0"], walk["mu"], walk["sigma"],
                                     rung, seed=seed)
            path, _ = steer_orbit(schedule, strips, tables,
                                  band=tuple(cfg.band), gamma=cfg.gamma,
                                  track_M=cfg.track_M,
                                  exact_every=exact_every)
            paths.append(path)
            seeds.append(seed)
    report = donsker_check(paths, walk["mu"], walk["sigma"],
                           min_paths=min(cfg.n_paths, 200), seeds=seeds)
    report.update(_meta(cfg))
    csv_path = os.path.join(cfg.outdir, "paths.csv")
    os.makedirs(cfg.outdir, exist_ok=True)
    write_paths_csv(paths, csv_path)
    _stamp_csv(csv_path, cfg)
    write_donsker_report(report,
                         os.path.join(cfg.outdir, "donsker_report.json"))
    for rung in report["rungs"]:
        print(f"stochastic: eps={rung['eps']:g} n={rung['n_paths']} "
              f"p_ks={rung['p_ks']} terminal_mean={rung['terminal_mean']:.4f}"
              f" (expect {rung['expected_terminal_mean']:.4f})")
    return EXIT_OK


_EXPORTABLE = (
    "homoclinic.csv", "charts.json", "grids.json", "paths.csv",
    "certificate.json", "donsker_report.json", "constants.json",
)


def cmd_export(cfg: RunConfig, dest: str) -> int:
    """Validated byte-exact copy of the artifact set."""
    os.makedirs(dest, exist_ok=True)
    copied = []
    for name in _EXPORTABLE:
        src = os.path.join(cfg.outdir, name)
        if not os.path.exists(src):
            continue
        with open(src, "rb") as fh:
            blob = fh.read()
        if name.endswith(".json"):
            doc = json.loads(blob)
            version = doc.get("version", doc.get("schema"))
            if version != SCHEMA_VERSION:
                raise SchemaMismatch(
                    f"{name}: schema {version!r}, expected {SCHEMA_VERSION}")
        with open(os.path.join(dest, name), "wb") as fh:
            fh.write(blob)
        copied.append(name)
    if not copied:
        raise MissingArtifact(f"no exportable artifacts in {cfg.outdir}")
    print(f"export: copied {', '.join(copied)} to {dest}")
    return EXIT_OK


# ---------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigInvalid(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="per3bp", description=__doc__)
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p):
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--out", help="artifact directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int)

    p = sub.add_parser("explore", help="geometry artifacts")
    common(p)
    p.add_argument("--grid", help="grid dims, e.g. uu=4x6,ud=4x2")

    p = sub.add_parser("certify", help="window certification")
    common(p)
    p.add_argument("--parts", type=int)
    p.add_argument("--eps0", type=float)
    p.add_argument("--grid", help="grid dims, e.g. uu=4x6,ud=4x2")
    p.add_argument("--full-scale", action="store_true")

    p = sub.add_parser("constants", help="quantitative consequences")
    common(p)
    p.add_argument("--certificate", help="certificate JSON to read")
    p.add_argument("--c", type=float, help="certified lower drift rate")
    p.add_argument("--C", type=float, help="certified upper drift rate")
    p.add_argument("--transition-time", type=float)

    p = sub.add_parser("stochastic", help="random-walk energy paths")
    common(p)
    p.add_argument("--paths", type=int)
    p.add_argument("--rungs", help="comma list of eccentricities")
    p.add_argument("--exact-every", type=int, default=0)

    p = sub.add_parser("export", help="validated artifact round-trip")
    common(p)
    p.add_argument("--dest", required=True)
    return parser


def cmd(verb: str, config: str = None, **flags) -> int:
    """Programmatic entry point mirroring the command line."""
    argv = [verb]
    if config:
        argv += ["--config", config]
    for key, value in flags.items():
        name = "--" + key.replace("_", "-")
        if value is True:
            argv.append(name)
        elif value is not None and value is not False:
            argv += [name, str(value)]
    return main(argv)


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
        overrides = {
            "outdir": getattr(args, "out", None),
            "seed": getattr(args, "seed", None),
            "threads": getattr(args, "threads", None),
        }
        if getattr(args, "parts", None) is not None:
            overrides["parts"] = args.parts
        if getattr(args, "eps0", None) is not None:
            overrides["eps0"] = args.eps0
        if getattr(args, "grid", None):
            overrides["grid"] = _parse_grid_flag(args.grid)
        if getattr(args, "full_scale", False):
            overrides["full_scale"] = True
        if getattr(args, "paths", None) is not None:
            overrides["n_paths"] = args.paths
        if getattr(args, "rungs", None):
            try:
                overrides["rungs"] = [float(x)
                                      for x in args.rungs.split(",")]
            except ValueError:
                raise ConfigInvalid(f"bad rungs flag: {args.rungs!r}")
        cfg = load_config(args.config, overrides)
        os.makedirs(cfg.outdir, exist_ok=True)
        if args.verb == "explore":
            return cmd_explore(cfg)
        if args.verb == "certify":
            return cmd_certify(cfg)
        if args.verb == "constants":
            return cmd_constants(cfg, certificate=args.certificate,
                                 c=args.c, C=args.C,
                                 transition_time=args.transition_time)
        if args.verb == "stochastic":
            return cmd_stochastic(cfg, exact_every=args.exact_every)
        if args.verb == "export":
            return cmd_export(cfg, args.dest)
        raise ConfigInvalid(f"unknown verb {args.verb!r}")
    except (ConfigInvalid, MissingArtifact, SchemaMismatch) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return EXIT_NUMERICAL
    except Per3bpError as exc:
        print(f"verification failure: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return EXIT_VERIFICATION


if __name__ == "__main__":
    sys.exit(main())
