"""Command line front end.

    emmviscowave run <config> [--out DIR] [--parallel] [--seed N]
    emmviscowave check-identities [--trials N] [--seed N]
    emmviscowave mesh gen --nx N --ny N [--label side=D|N ...] -o FILE
    emmviscowave mesh validate FILE

Exit codes: 0 all checks pass, 1 a contract check failed, 2 invalid input.
"""
import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor

from . import __version__
from .experiments import run_scenario
from .identities import run_identity_suite
from .mesh import DIRICHLET, NEUMANN, SIDES, MeshError, load_mesh, rect_mesh, save_mesh
from .report import dumps
from .scenario import ConfigError, load

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

log = logging.getLogger("emmviscowave")


def _print_result(res, out=None):
    status = "PASS" if res.passed else "FAIL"
    label = f"{res.kind} {res.name}" if res.name else res.kind
    print(f"[{status}] {label} ({len(res.checks)} checks)", file=out)
    for c in res.failing():
        print(f"    failed: {c.name} = {c.value:.6g} (required {c.relation} {c.threshold:.6g})", file=out)


def _run_one(args):
    sc, out, seed = args
    return run_scenario(sc, out, seed)


def cmd_run(ns):
    try:
        scenarios = load(ns.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    names = [s.name or s.kind for s in scenarios]
    if len(set(names)) != len(names):
        print("config error: scenario: names must be unique (set 'name' to tell them apart)", file=sys.stderr)
        return EXIT_CONFIG
    jobs = [(s, ns.out, ns.seed) for s in scenarios]
    try:
        if ns.parallel and len(jobs) > 1:
            with ProcessPoolExecutor() as pool:
                results = list(pool.map(_run_one, jobs))
        else:
            results = [_run_one(j) for j in jobs]
    except (ConfigError, MeshError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for r in results:
        _print_result(r)
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


def cmd_check_identities(ns):
    if ns.trials < 1:
        print("config error: --trials must be positive", file=sys.stderr)
        return EXIT_CONFIG
    rep = run_identity_suite(ns.trials, ns.seed)
    d = rep.to_dict()
    d.pop("seconds")
    sys.stdout.write(dumps(d))
    return EXIT_OK if rep.passed else EXIT_FAIL


def _parse_labels(items):
    labels = {}
    for item in items or []:
        side, _, lab = item.partition("=")
        if side not in SIDES or lab not in (DIRICHLET, NEUMANN):
            raise ConfigError("--label", f"expected side=D|N with side in {', '.join(SIDES)}, got {item!r}")
        labels[side] = lab
    return labels or None


def cmd_mesh(ns):
    try:
        if ns.mesh_cmd == "gen":
            mesh = rect_mesh(ns.nx, ns.ny, _parse_labels(ns.label))
            save_mesh(mesh, ns.output)
            print(f"wrote {ns.output}: {mesh.n_nodes} nodes, {mesh.n_triangles} triangles")
        else:
            mesh = load_mesh(ns.file)
            nd = len(mesh.dirichlet_nodes())
            print(f"valid: {mesh.n_nodes} nodes, {mesh.n_triangles} triangles, "
                  f"{len(mesh.boundary_edges)} boundary edges, {nd} Dirichlet nodes, h = {mesh.h():.6g}")
    except (ConfigError, MeshError) as exc:
        print(f"mesh error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"mesh error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="emmviscowave", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run the scenarios of a TOML config")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (overrides config and environment)")
    r.add_argument("--parallel", action="store_true", help="run independent scenarios in parallel processes")
    r.add_argument("--seed", type=int, help="override every scenario seed")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("check-identities", help="randomized tensor-identity suite")
    c.add_argument("--trials", type=int, default=1000)
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(func=cmd_check_identities)

    m = sub.add_parser("mesh", help="generate or validate mesh files")
    msub = m.add_subparsers(dest="mesh_cmd", required=True)
    g = msub.add_parser("gen", help="structured mesh of the unit square")
    g.add_argument("--nx", type=int, default=8)
    g.add_argument("--ny", type=int, default=8)
    g.add_argument("--label", action="append", metavar="SIDE=D|N",
                   help="boundary label of a side (default: left=D, others N)")
    g.add_argument("-o", "--output", required=True)
    v = msub.add_parser("validate", help="check a mesh file")
    v.add_argument("file")
    m.set_defaults(func=cmd_mesh)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return ns.func(ns)


if __name__ == "__main__":
    sys.exit(main())
