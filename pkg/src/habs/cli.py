"""Command line front end: parse -> analyze -> generate -> simulate -> monitor.

Exit statuses are a stable contract for CI: 0 success, 1 usage or parse
error, 2 analysis error, 3 monitor violation, 4 runtime error.
"""

from __future__ import annotations

import argparse
import sys

from . import analysis, vcg
from .lang import (HabsNameError, HabsSyntaxError, check_types, normalize,
                   parse_program)
from .sim import (DeterministicPolicy, RandomPolicy, RunError, ScenarioError,
                  SimConfig, SolverError, check_run, extract_trace,
                  parse_script, run_program)

EXIT_OK = 0
EXIT_PARSE = 1
EXIT_ANALYSIS = 2
EXIT_MONITOR = 3
EXIT_RUNTIME = 4

GENERATORS = ("basic", "local", "structural", "composed")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="habs",
        description="post-region verification toolchain for hybrid active objects")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, out=True):
        p.add_argument("input", help="model source file (.habs)")
        p.add_argument("--generator", choices=GENERATORS, default="basic")
        if out:
            p.add_argument("--out", default="out", help="output directory")

    pv = sub.add_parser("verify", help="emit prover obligations and a manifest")
    common(pv)
    pv.add_argument("--no-frames", action="store_true",
                    help="also emit obligations for frame-exempt methods")

    ps = sub.add_parser("simulate", help="run the semantics, export log and traces")
    common(ps)
    _sim_flags(ps)
    ps.add_argument("--strict", action="store_true",
                    help="nonzero exit on deadlock or Zeno cap")

    pc = sub.add_parser("check", help="simulate and monitor post-region soundness")
    common(pc)
    _sim_flags(pc)

    pa = sub.add_parser("analyze", help="print regions, controllers, call sets")
    common(pa, out=False)
    pa.add_argument("--impact", metavar="CHANGE:Class.method",
                    help="reproof set for a hypothetical change "
                         "(added|removed|guard_changed:Class.method)")
    return ap


def _sim_flags(p):
    p.add_argument("--horizon", type=float, default=100.0)
    p.add_argument("--step", type=float, default=1e-3,
                   help="sampling step for traces and monitoring")
    p.add_argument("--policy", choices=("deterministic", "random"),
                   default="deterministic")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--script", help="scenario script of external calls")
    p.add_argument("--step-cap", type=int, default=1_000_000)


def _load(path: str):
    try:
        with open(path) as fh:
            source = fh.read()
    except OSError as e:
        print(f"habs: {e}", file=sys.stderr)
        raise SystemExit(EXIT_PARSE)
    try:
        program = normalize(parse_program(source, path), path)
    except (HabsSyntaxError, HabsNameError) as e:
        print(e, file=sys.stderr)
        raise SystemExit(EXIT_PARSE)
    diags = check_types(program)
    if diags:
        for d in diags:
            print(d.format(path), file=sys.stderr)
        raise SystemExit(EXIT_ANALYSIS)
    return program


def _generator(program, kind):
    try:
        return analysis.make_generator(program, kind)
    except analysis.AnalysisError as e:
        print(f"habs: {e}", file=sys.stderr)
        raise SystemExit(EXIT_ANALYSIS)


def cmd_verify(args) -> int:
    program = _load(args.input)
    gen = _generator(program, args.generator)
    try:
        files = vcg.emit(program, gen, args.out,
                         exempt_frames=not args.no_frames)
    except (vcg.VcgError, OSError) as e:
        print(f"habs: {e}", file=sys.stderr)
        return EXIT_ANALYSIS
    for f in files:
        print(f)
    return EXIT_OK


def _run(args, program):
    policy = (RandomPolicy(args.seed) if args.policy == "random"
              else DeterministicPolicy())
    script = None
    if args.script:
        with open(args.script) as fh:
            script = parse_script(fh.read())
    sim = SimConfig(horizon=args.horizon, step_cap=args.step_cap)
    return run_program(program, horizon=args.horizon, policy=policy,
                       sim=sim, script=script)


def cmd_simulate(args) -> int:
    program = _load(args.input)
    import os

    try:
        run = _run(args, program)
    except (RunError, SolverError, ScenarioError) as e:
        print(f"habs: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    os.makedirs(args.out, exist_ok=True)
    log_path = os.path.join(args.out, "run.log")
    with open(log_path, "w") as fh:
        fh.write("\n".join(run.log_lines()) + "\n")
    print(log_path)
    import numpy as np

    final = run.final
    for oid, obj in final.objects.items():
        if obj.cls is None:
            continue
        trace = extract_trace(run, oid)
        names = sorted(n for n, v in trace.segments[0].store.items()
                       if isinstance(v, float) and not isinstance(v, bool))
        ts = np.arange(0.0, trace.end + args.step / 2, args.step)
        data = trace.sample(names, ts)
        path = os.path.join(args.out, f"trace_{oid}.tsv")
        with open(path, "w") as fh:
            for i, t in enumerate(ts):
                row = "\t".join(f"{n}={data[n][i]:.9g}" for n in names)
                fh.write(f"{t:.9g}\t{row}\n")
        print(path)
    print(f"outcome: {run.outcome}" + (f" ({run.error})" if run.error else ""))
    if args.strict and run.outcome in ("deadlock", "zeno", "error"):
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_check(args) -> int:
    program = _load(args.input)
    gen = _generator(program, args.generator)
    try:
        run = _run(args, program)
    except (RunError, SolverError, ScenarioError) as e:
        print(f"habs: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    if run.outcome in ("deadlock", "zeno", "error"):
        print(f"habs: run ended with {run.outcome}: {run.error}", file=sys.stderr)
        return EXIT_RUNTIME
    report = check_run(run, gen, sampling=args.step)
    for e in report.entries:
        status = "ok" if e.ok else "VIOLATED"
        print(f"{e.oid}.{e.member}: {status} "
              f"({e.subtraces} subtraces, {e.samples} samples)")
    if not report.ok:
        print(f"first counterexample: {report.first().describe()}")
        return EXIT_MONITOR
    return EXIT_OK


def cmd_analyze(args) -> int:
    program = _load(args.input)
    gen = _generator(program, args.generator)
    from . import dl

    for (cls, key), formula in gen.items():
        print(f"{cls}.{key} ↦ {dl.render_formula(formula)}")
    for c in program.classes:
        ctrl = sorted(analysis.detect_controllers(c, program))
        print(f"controllers {c.name}: {{{', '.join(ctrl)}}}")
        for m in c.methods:
            graph = analysis.build_causality_graph(m.body)
            calls = sorted(analysis.guaranteed_calls(graph, "exit"))
            print(f"gcall {c.name}.{m.name}: {{{', '.join(calls)}}}")
        for m in c.methods:
            if analysis.frame_exempt(m, c):
                print(f"frame-exempt: {c.name}.{m.name}")
    if args.impact:
        change, _, member = args.impact.partition(":")
        try:
            members = analysis.reproof_set(change, member, args.generator, program)
        except analysis.AnalysisError as e:
            print(f"habs: {e}", file=sys.stderr)
            return EXIT_ANALYSIS
        print(f"reproof: {{{', '.join(sorted(members))}}}")
    return EXIT_OK


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_PARSE if e.code not in (0, None) else 0
    try:
        if args.command == "verify":
            return cmd_verify(args)
        if args.command == "simulate":
            return cmd_simulate(args)
        if args.command == "check":
            return cmd_check(args)
        if args.command == "analyze":
            return cmd_analyze(args)
    except SystemExit as e:
        return e.code
    return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
