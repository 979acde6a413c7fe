"""``finita`` command line.

Grammar::

    finita [--threads N] gen {zipf|markov|block-iid|scrambled-product} ...
    finita [--threads N] solve {exact-product|bb|plr|qary|constrained} ...
    finita [--threads N] app {bss|block-coding|codebook} ...
    finita [--threads N] verify {counts|bounds} ...

Distributions are JSON (``{"n", "q", "probs"}``) on files or stdin/stdout,
so ``finita gen markov --n 6 --flip 0.2 | finita solve plr --k 8`` works.
Exit codes: 0 success, 1 solver or verification failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
from importlib import metadata
from pathlib import Path

import numpy as np

from . import coding_apps, constrained, generators, plr, qary
from .branch_bound import solve_exact
from .core import (
    JointDistribution,
    WordMapping,
    apply_mapping,
    entropy,
    sum_marginal_entropies,
    total_correlation,
)
from .errors import FinitaError
from .exact_recovery import recover_product_params

DEFAULT_SEED = 20240101


class UsageError(Exception):
    pass


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def _write_atomic(path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp")
    tmp.write_text(text)
    tmp.replace(path)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _read_joint(args) -> JointDistribution:
    src = getattr(args, "input", None)
    try:
        if src in (None, "-"):
            text = sys.stdin.read()
            if not text.strip():
                raise UsageError("no distribution on stdin; pass --input FILE")
        else:
            text = Path(src).read_text()
        doc = json.loads(text)
        if not isinstance(doc, dict):
            raise UsageError('a distribution must be a JSON object {"n": .., "q": .., "probs": [..]}')
        return JointDistribution.from_dict(doc, renormalize=args.renormalize)
    except OSError as e:
        raise UsageError(f"cannot read {src}: {e.strerror}") from e
    except json.JSONDecodeError as e:
        raise UsageError(f"input is not valid JSON: {e}") from e
    except KeyError as e:
        raise UsageError(f"input JSON lacks the field {e}") from e


def _emit_joint(args, joint: JointDistribution) -> dict:
    text = json.dumps(joint.to_dict())
    if args.out:
        _write_atomic(args.out, text + "\n")
    else:
        print(text)
    return {"n": joint.n, "q": joint.q, "entropy": entropy(joint.probs)}


def _report(joint: JointDistribution, mapping: WordMapping, extra: dict) -> dict:
    after = apply_mapping(joint, mapping)
    out = {
        "joint_entropy": entropy(joint.probs),
        "initial_sum_marginals": sum_marginal_entropies(joint),
        "final_sum_marginals": sum_marginal_entropies(after),
        "total_correlation_before": total_correlation(joint),
        "total_correlation_after": total_correlation(after),
    }
    out.update(extra)
    return out


def _finish_solve(args, joint, mapping, extra) -> dict:
    summary = _report(joint, mapping, extra)
    for key, val in summary.items():
        print(f"{key}: {val}")
    if args.out:
        _write_atomic(args.out, json.dumps(mapping.to_dict()) + "\n")
    else:
        print("mapping: " + json.dumps(mapping.perm.tolist()))
    return summary


# gen -------------------------------------------------------------------------


def cmd_gen_zipf(args):
    p = generators.zipf(args.q, args.s)
    probs = np.ones(1)
    for _ in range(args.n):
        probs = np.outer(p, probs).ravel()
    return _emit_joint(args, JointDistribution(args.n, args.q, probs))


def cmd_gen_markov(args):
    spec = generators.MarkovSpec(args.n, args.flip, args.flip_back)
    return _emit_joint(args, generators.markov_joint(spec))


def cmd_gen_block_iid(args):
    if args.block:
        block = np.array([float(v) for v in args.block.split(",")])
    else:
        block = np.random.default_rng(args.seed).dirichlet(np.ones(2**args.r))
    return _emit_joint(args, generators.block_iid_joint(args.n, args.r, block))


def cmd_gen_scrambled(args):
    joint, pi, mapping = generators.random_product_scrambled(args.n, args.seed)
    if args.truth:
        _write_atomic(args.truth, json.dumps({"pi": pi.tolist(), "mapping": mapping.perm.tolist()}) + "\n")
    return _emit_joint(args, joint)


# solve -----------------------------------------------------------------------


def cmd_solve_exact_product(args):
    joint = _read_joint(args)
    params, mapping = recover_product_params(joint, tol=args.tol)
    return _finish_solve(args, joint, mapping, {"pi": params.pi.tolist()})


def cmd_solve_bb(args):
    joint = _read_joint(args)
    res = solve_exact(joint, args.max_nodes, args.max_seconds)
    return _finish_solve(args, joint, res.mapping, {"value": res.value, **res.stats.to_dict()})


def cmd_solve_plr(args):
    joint = _read_joint(args)
    method = "matrix" if args.matrix_form else "grouped"
    res = plr.solve_plr(joint, args.k, schedule=args.schedule, method=method)
    if args.emit_curve:
        rows = []
        for k in range(2, args.k + 1, 2):
            r = plr.solve_plr(joint, k, schedule=args.schedule, method=method)
            rows.append((k, repr(r.ub_value), repr(r.true_objective), repr(r.joint_entropy)))
        _write_atomic(args.emit_curve, _csv_text(["k", "ub_value", "true_objective", "joint_entropy"], rows))
    return _finish_solve(args, joint, res.mapping, res.to_dict())


def cmd_solve_qary(args):
    joint = _read_joint(args)
    if args.exhaustive:
        res = qary.solve_exhaustive_qary(joint, args.k, schedule=args.schedule)
        return _finish_solve(args, joint, res.mapping, res.to_dict())
    res = qary.objective_descent(joint, args.k, args.inits, args.seed, schedule=args.schedule)
    if args.emit_trace:
        rows = [(w.init_index, w.steps, repr(w.final_value)) for w in res.trace]
        _write_atomic(args.emit_trace, _csv_text(["init_index", "steps", "final_value"], rows))
    extra = {"value": res.value, "ub_value": res.ub_value, "best_init": res.best_init}
    return _finish_solve(args, joint, res.mapping, extra)


def cmd_solve_constrained(args):
    joint = _read_joint(args)
    if args.immune:
        cfg = constrained.ImmuneConfig(population=args.pop, generations=args.gens, r=args.r, seed=args.seed)
        res = constrained.immune_search(joint, cfg)
        matrix, value = res.matrix, res.value
        if args.emit_history:
            rows = [(g, repr(v)) for g, v in enumerate(res.history)]
            _write_atomic(args.emit_history, _csv_text(["generation", "best_value"], rows))
    else:
        if args.r != 2:
            raise UsageError("exhaustive constrained search supports --r 2 only; add --immune for other r")
        matrix, value = constrained.search_r2(joint)
    extra = {"value": value, "matrix": matrix.to_array().tolist()}
    return _finish_solve(args, joint, constrained.linear_word_map(matrix), extra)


# app -------------------------------------------------------------------------


def _print_dict(d: dict) -> dict:
    for key, val in d.items():
        print(f"{key}: {val}")
    return d


def cmd_app_bss(args):
    qs = range(args.q, args.q_max + 1) if args.q_max else [args.q]
    rows, last = [], None
    for q in qs:
        last = coding_apps.bss_experiment(q, args.s, args.method, args.k, args.inits, args.seed)
        rows.append(last)
        if len(qs) > 1:
            print(json.dumps(last))
    if args.emit_csv:
        keys = list(rows[0])
        _write_atomic(args.emit_csv, _csv_text(keys, [[repr(r[k]) for k in keys] for r in rows]))
    return _print_dict(last) if len(qs) == 1 else {"rows": rows}


def cmd_app_block_coding(args):
    if args.samples:
        try:
            samples = coding_apps.SampleSet.load(args.samples)
        except OSError as e:
            raise UsageError(f"cannot read samples: {e}") from e
    else:
        samples = coding_apps.zipf_samples(args.N, args.zipf_s, args.bits, args.seed)
    trace = coding_apps.algorithm2(samples, args.blocks, args.iters, args.k, args.seed)
    cost = coding_apps.total_cost(trace)
    if args.emit_trace:
        _write_atomic(args.emit_trace, _csv_text(["iter", "H_m", "H_b", "accepted"],
                                                 [(i, repr(a), repr(b), c) for i, a, b, c in trace.rows()]))
    out = {
        "N": samples.N,
        "empirical_entropy": trace.joint_entropy,
        "single_block_cost": coding_apps.single_block_cost(samples),
        "min_H_b": trace.min_H_b,
        "best_I0": cost.best_I0,
        "total_cost": cost.best_bits,
    }
    if args.naive_trials:
        out["naive_best"] = coding_apps.naive_block_search(samples, args.blocks, args.naive_trials, args.seed).best
    return _print_dict(out)


def cmd_app_codebook(args):
    try:
        text = Path(args.table).read_text()
    except OSError as e:
        raise UsageError(f"cannot read {args.table}: {e.strerror}") from e
    try:
        table = json.loads(text)
    except json.JSONDecodeError:
        table = [float(v) for v in text.replace(",", " ").split()]
    res = coding_apps.codebook_experiment(table, args.k)
    mapping = res.pop("mapping")
    if args.out:
        _write_atomic(args.out, json.dumps(mapping.to_dict()) + "\n")
    return _print_dict(res)


# verify ----------------------------------------------------------------------


def cmd_verify_counts(args):
    ok, lines = True, []
    for n in range(2, args.n_max + 1):
        got = len(constrained.enumerate_banded_invertible(n))
        good = got == 2 ** (n + 1) - 2
        if n <= min(args.n_max, 6):
            good &= len(constrained.brute_force_banded_invertible(n)) == got
        lines.append(f"banded n={n}: {got} (2^(n+1)-2={2 ** (n + 1) - 2}) {'ok' if good else 'FAIL'}")
        ok &= good
    for n in range(3, args.n_max + 1):
        for flip in (0.1, 0.2, 0.3):
            got = generators.count_unique_probs(generators.markov_joint(generators.MarkovSpec(n, flip)))
            classes = generators.markov_class_count(n)
            good = got == n * (n - 1) + 2
            lines.append(
                f"markov n={n} flip={flip}: unique={got} n(n-1)+2={n * (n - 1) + 2} "
                f"(first-bit/ones/transition classes={classes}) {'ok' if good else 'FAIL'}"
            )
            ok &= good
    rng = np.random.default_rng(args.seed)
    for n, r in ((4, 2), (6, 2), (6, 3), (8, 4), (9, 3)):
        got = generators.count_unique_probs(generators.block_iid_joint(n, r, rng.dirichlet(np.ones(2**r))))
        bound = generators.block_iid_unique_bound(n, r)
        lines.append(f"block-iid n={n} r={r}: unique={got} bound={bound} {'ok' if got <= bound else 'FAIL'}")
        ok &= got <= bound
    print("\n".join(lines))
    return {"ok": bool(ok), "checks": len(lines)}


def cmd_verify_bounds(args):
    joint = _read_joint(args)
    h = entropy(joint.probs)
    rows = {"joint_entropy": h, "sum_marginals": sum_marginal_entropies(joint)}
    if joint.q == 2:
        r = plr.solve_plr(joint, args.k)
        rows["plr_ub_value"] = r.ub_value
        rows["plr_true_objective"] = r.true_objective
        ok = r.ub_value >= r.true_objective - 1e-9 and r.true_objective >= h - 1e-9
        if joint.n <= 4:
            bb = solve_exact(joint)
            rows["bb_optimum"] = bb.value
            ok &= r.ub_value >= bb.value - 1e-9 and bb.value >= h - 1e-9
    else:
        d = qary.objective_descent(joint, args.k, 10, args.seed)
        rows["descent_ub_value"] = d.ub_value
        rows["descent_value"] = d.value
        ok = d.ub_value >= d.value - 1e-9 and d.value >= h - 1e-9
    _print_dict(rows)
    print("bounds: " + ("ok" if ok else "FAIL"))
    return {"ok": bool(ok), **rows}


# parser ----------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def _threads(value: str) -> int:
    try:
        v = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError("threads must be a positive integer")
    if v < 1:
        raise argparse.ArgumentTypeError("threads must be a positive integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="finita", description="Minimise the sum of marginal entropies of finite-alphabet vectors.")
    p.add_argument("--threads", type=_threads, default=None, help="worker cap (also FINITA_THREADS)")
    p.add_argument("--manifest", help="write the run manifest here (default: next to --out)")
    p.add_argument("--version", action="version", version=f"finita {_version()}")
    groups = p.add_subparsers(dest="group", required=True, parser_class=_Parser)

    def add(sub, name, func, help_text):
        sp = sub.add_parser(name, help=help_text)
        sp.set_defaults(func=func)
        return sp

    def io_opts(sp, reads=True):
        if reads:
            sp.add_argument("--input", help="distribution JSON (default: stdin)")
            sp.add_argument("--renormalize", action="store_true", help="rescale probabilities to sum to 1")
        sp.add_argument("--out", help="output file (default: stdout)")

    gen = groups.add_parser("gen", help="generate a distribution").add_subparsers(dest="cmd", required=True, parser_class=_Parser)
    sp = add(gen, "zipf", cmd_gen_zipf, "i.i.d. finite Zipf components")
    sp.add_argument("--q", type=int, required=True)
    sp.add_argument("--s", type=float, default=1.6)
    sp.add_argument("--n", type=int, default=1)
    io_opts(sp, reads=False)
    sp = add(gen, "markov", cmd_gen_markov, "stationary binary Markov chain")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--flip", type=float, required=True)
    sp.add_argument("--flip-back", type=float, default=None)
    io_opts(sp, reads=False)
    sp = add(gen, "block-iid", cmd_gen_block_iid, "i.i.d. blocks of r bits")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--r", type=int, required=True)
    sp.add_argument("--block", help="comma-separated block law over 2^r words (default: random)")
    sp.add_argument("--seed", type=int, default=DEFAULT_SEED)
    io_opts(sp, reads=False)
    sp = add(gen, "scrambled-product", cmd_gen_scrambled, "product source behind a random word permutation")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--seed", type=int, default=DEFAULT_SEED)
    sp.add_argument("--truth", help="also write the ground-truth pi and mapping here")
    io_opts(sp, reads=False)

    solve = groups.add_parser("solve", help="search for a mapping").add_subparsers(dest="cmd", required=True, parser_class=_Parser)
    sp = add(solve, "exact-product", cmd_solve_exact_product, "recover a scrambled product source")
    sp.add_argument("--tol", type=float, default=1e-9)
    io_opts(sp)
    sp = add(solve, "bb", cmd_solve_bb, "branch and bound (exact, small n)")
    sp.add_argument("--max-nodes", type=int, default=None)
    sp.add_argument("--max-seconds", type=float, default=None)
    io_opts(sp)
    sp = add(solve, "plr", cmd_solve_plr, "piecewise-linear relaxation")
    sp.add_argument("--k", type=int, default=8)
    sp.add_argument("--schedule", choices=plr.SCHEDULES, default="midpoint")
    sp.add_argument("--matrix-form", action="store_true", help="use the sorted coefficient matrix")
    sp.add_argument("--emit-curve", help="CSV of k, ub_value, true_objective, joint_entropy for k=2,4,..")
    io_opts(sp)
    sp = add(solve, "qary", cmd_solve_qary, "relaxation for alphabet q")
    sp.add_argument("--k", type=int, default=8)
    sp.add_argument("--inits", type=int, default=1000)
    sp.add_argument("--seed", type=int, default=DEFAULT_SEED)
    sp.add_argument("--schedule", choices=plr.SCHEDULES, default="midpoint")
    sp.add_argument("--exhaustive", action="store_true")
    sp.add_argument("--emit-trace", help="CSV of init_index, steps, final_value")
    io_opts(sp)
    sp = add(solve, "constrained", cmd_solve_constrained, "linear maps with bounded row weight")
    sp.add_argument("--r", type=int, default=2)
    sp.add_argument("--immune", action="store_true")
    sp.add_argument("--pop", type=int, default=20)
    sp.add_argument("--gens", type=int, default=100)
    sp.add_argument("--seed", type=int, default=DEFAULT_SEED)
    sp.add_argument("--emit-history", help="CSV of generation, best_value")
    io_opts(sp)

    app = groups.add_parser("app", help="applications").add_subparsers(dest="cmd", required=True, parser_class=_Parser)
    sp = add(app, "bss", cmd_app_bss, "separate two mixed Zipf sources")
    sp.add_argument("--q", type=int, required=True)
    sp.add_argument("--q-max", type=int, default=None, help="sweep q..q-max")
    sp.add_argument("--s", type=float, default=1.6)
    sp.add_argument("--method", choices=("exhaustive", "descent"), default="exhaustive")
    sp.add_argument("--k", type=int, default=8)
    sp.add_argument("--inits", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--emit-csv")
    sp = add(app, "block-coding", cmd_app_block_coding, "block-wise coding of large-alphabet samples")
    sp.add_argument("--samples", help="word file with a .json sidecar (default: generate Zipf samples)")
    sp.add_argument("--N", type=int, default=10**6)
    sp.add_argument("--bits", type=int, default=24)
    sp.add_argument("--zipf-s", type=float, default=1.4)
    sp.add_argument("--blocks", type=int, required=True)
    sp.add_argument("--iters", type=int, default=100)
    sp.add_argument("--k", type=int, default=8)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--naive-trials", type=int, default=0)
    sp.add_argument("--emit-trace", help="CSV of iter, H_m, H_b, accepted")
    sp = add(app, "codebook", cmd_app_codebook, "re-encode an 8-bit frequency table")
    sp.add_argument("--table", required=True, help="256 frequencies (JSON list or whitespace separated)")
    sp.add_argument("--k", type=int, default=8)
    sp.add_argument("--out")

    verify = groups.add_parser("verify", help="self-checks").add_subparsers(dest="cmd", required=True, parser_class=_Parser)
    sp = add(verify, "counts", cmd_verify_counts, "compare enumerated counts with their closed forms")
    sp.add_argument("--n-max", type=int, default=10)
    sp.add_argument("--seed", type=int, default=DEFAULT_SEED)
    sp = add(verify, "bounds", cmd_verify_bounds, "entropy <= solver values <= relaxation bounds")
    sp.add_argument("--k", type=int, default=8)
    sp.add_argument("--seed", type=int, default=DEFAULT_SEED)
    io_opts(sp)
    return p


def _manifest(args, argv, result, seconds) -> dict:
    params = {k: v for k, v in vars(args).items() if k not in ("func", "group", "cmd", "manifest")}
    paths = {k: params.get(k) for k in ("input", "out", "samples", "table", "emit_curve", "emit_trace",
                                          "emit_history", "emit_csv", "truth") if params.get(k)}
    return {
        "subcommand": f"{args.group} {args.cmd}",
        "argv": list(argv),
        "parameters": params,
        "seed": params.get("seed"),
        "paths": paths,
        "version": _version(),
        "threads": args.threads,
        "wall_clock_seconds": seconds,
        "stats": result,
    }


def dispatch(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if args.threads is None:
        env = os.environ.get("FINITA_THREADS")
        if env:
            try:
                args.threads = _threads(env)
            except argparse.ArgumentTypeError as e:
                print(f"finita: error: FINITA_THREADS: {e}", file=sys.stderr)
                return 2
    start = time.perf_counter()
    try:
        result = args.func(args)
    except UsageError as e:
        print(f"finita: error: {e}", file=sys.stderr)
        return 2
    except FinitaError as e:
        print(f"finita: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    manifest_path = args.manifest or (f"{args.out}.manifest.json" if getattr(args, "out", None) else None)
    if manifest_path:
        doc = _manifest(args, argv, result, time.perf_counter() - start)
        _write_atomic(manifest_path, json.dumps(doc, indent=2, default=_jsonable) + "\n")
    if args.group == "verify" and not result.get("ok", True):
        return 1
    return 0


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


def main() -> None:
    sys.exit(dispatch())
