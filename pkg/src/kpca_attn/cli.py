"""Command-line front end: ``kpca-attn {pcp,rpc-attn,verify,bench}``.

Every run resolves its parameters as defaults < ``--config`` JSON < flags,
echoes the resolved config (with a hash and the tool version) in its output,
and is deterministic for a given config.

Exit codes: 0 success, 1 input error, 2 non-convergence, 3 verification
failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bench import SynthSpec, corruption_bench, synth_lowrank_sparse, make_rng
from .errors import KpcaAttnError
from .matrixcore import format_matrix_csv, norms, read_matrix_csv
from .rpc import PapConfig, admm_pcp, format_trace_csv, pap
from .verify import diagnostic_instance, gradient_check, run_diagnostics

EXIT_OK, EXIT_INPUT, EXIT_NOCONV, EXIT_VERIFY = 0, 1, 2, 3

TOOL = "kpca-attn"

COMMON = {"seed": 0, "output": None, "format": "json"}

DEFAULTS = {
    "pcp": {
        "input": None, "synth": None, "lambda": None, "mu": None,
        "tol": 1e-7, "max_iter": 1000, "update": "classical",
    },
    "rpc-attn": {
        "keys": None, "queries": None, "lambda": 4.0, "iters": 4, "mu": "auto",
        "variant": "sym", "scale": None,
    },
    "verify": {
        "keys": None, "queries": None, "values": None, "random_v": False,
        "grad_only": False, "n": 4, "dim": 3, "entry_floor": 1e-6, "epsilon": 1e-5,
    },
    "bench": {
        "trials": 100, "rows": 32, "cols": 16, "rank": 2, "rho": 0.05, "spike": 10.0,
        "iters": 6, "lambda": 4.0, "mu": "auto", "scale": None, "hist_bins": 20,
    },
}


class InputError(Exception):
    """Bad user input; maps to exit code 1."""


def _mu_arg(text):
    if text == "auto":
        return "auto"
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError("mu must be positive or 'auto'")
    return value


def _add(p, cmd, flag, **kw):
    dest = flag.lstrip("-").replace("-", "_")
    default = DEFAULTS.get(cmd, {}).get(dest, COMMON.get(dest))
    kw["help"] = f"{kw.get('help', '')} (default: {default})".strip()
    p.add_argument(flag, dest=dest, default=argparse.SUPPRESS, **kw)


def build_parser():
    parser = argparse.ArgumentParser(prog=TOOL, description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"{TOOL} {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, help):
        p = sub.add_parser(name, help=help, description=help)
        p.add_argument("--config", default=None, help="JSON file of parameters; flags override it")
        _add(p, name, "--seed", type=int, help="random seed")
        _add(p, name, "--output", help="directory for output files")
        _add(p, name, "--format", choices=["json", "csv"], help="stdout format")
        return p

    p = command("pcp", "Principal Component Pursuit by ADMM on a matrix file or a synthetic instance")
    _add(p, "pcp", "--input", help="matrix CSV file")
    _add(p, "pcp", "--synth", help="synthetic instance, e.g. rank=2,rho=0.05[,rows=50,cols=50,spike=10]")
    _add(p, "pcp", "--lambda", type=float, help="l1 weight; None means 1/sqrt(max(N, D))")
    _add(p, "pcp", "--mu", type=float, help="penalty; None means N*D/(4*||M||_1)")
    _add(p, "pcp", "--tol", type=float, help="relative residual tolerance")
    _add(p, "pcp", "--max-iter", type=int, help="iteration cap")
    _add(p, "pcp", "--update", choices=["classical", "listing"], help="low-rank update rule")

    p = command("rpc-attn", "RPC-Attention (Principal Attention Pursuit) on a key matrix")
    _add(p, "rpc-attn", "--keys", help="key matrix CSV file")
    _add(p, "rpc-attn", "--queries", help="query matrix CSV file (asymmetric variant)")
    _add(p, "rpc-attn", "--lambda", type=float, help="sparsity weight")
    _add(p, "rpc-attn", "--iters", type=int, help="PAP iterations")
    _add(p, "rpc-attn", "--mu", type=_mu_arg, help="penalty or 'auto' for N*D/(4*||K||_1)")
    _add(p, "rpc-attn", "--variant", choices=["sym", "asym"], help="attention variant")
    _add(p, "rpc-attn", "--scale", type=float, help="logit scale; None means 1/sqrt(D)")

    p = command("verify", "kernel PCA diagnostics on a seeded or supplied instance")
    _add(p, "verify", "--keys", help="key matrix CSV file (default: seeded Gaussian keys)")
    _add(p, "verify", "--queries", help="query matrix CSV file")
    _add(p, "verify", "--values", help="value matrix CSV file to test")
    _add(p, "verify", "--random-v", action="store_const", const=True,
         help="use Gaussian values (negative control)")
    _add(p, "verify", "--grad-only", action="store_const", const=True,
         help="only run the gradient check and print its scalar")
    _add(p, "verify", "--n", type=int, help="number of seeded keys")
    _add(p, "verify", "--dim", type=int, help="key dimension of seeded keys")
    _add(p, "verify", "--entry-floor", type=float, help="relative floor for gamma ratios")
    _add(p, "verify", "--epsilon", type=float, help="finite-difference step")

    p = command("bench", "key-corruption benchmark: softmax attention vs RPC-Attention")
    _add(p, "bench", "--trials", type=int, help="number of trials")
    _add(p, "bench", "--rows", type=int, help="keys per trial")
    _add(p, "bench", "--cols", type=int, help="key dimension")
    _add(p, "bench", "--rank", type=int, help="rank of the clean keys")
    _add(p, "bench", "--rho", type=float, help="fraction of corrupted entries")
    _add(p, "bench", "--spike", type=float, help="corruption magnitude")
    _add(p, "bench", "--iters", type=int, help="PAP iterations")
    _add(p, "bench", "--lambda", type=float, help="sparsity weight")
    _add(p, "bench", "--mu", type=_mu_arg, help="penalty or 'auto'")
    _add(p, "bench", "--scale", type=float, help="logit scale; None means 1/sqrt(D)")
    _add(p, "bench", "--hist-bins", type=int, help="bins in histogram.csv")
    return parser


def resolve_config(command, args):
    resolved = {**COMMON, **DEFAULTS[command]}
    config_path = getattr(args, "config", None)
    if config_path:
        try:
            loaded = json.loads(Path(config_path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config {config_path}: {exc}") from None
        if not isinstance(loaded, dict):
            raise InputError(f"config {config_path} must hold a JSON object")
        for key, value in loaded.items():
            if key not in resolved:
                raise InputError(f"unknown config key {key!r} for command {command}")
            resolved[key] = value
    for key in resolved:
        if hasattr(args, key):
            resolved[key] = getattr(args, key)
    return resolved


def config_hash(config):
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def provenance(command, config):
    return {
        "tool": {"name": TOOL, "version": __version__, "command": command},
        "config": config,
        "config_hash": config_hash(config),
    }


def provenance_line(command, config):
    return f"{TOOL} {__version__} {command} config_hash={config_hash(config)}"


def _dump_json(obj):
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _flat_csv(summary):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["key", "value"])

    def walk(prefix, obj):
        if isinstance(obj, dict):
            for k in sorted(obj):
                walk(f"{prefix}.{k}" if prefix else k, obj[k])
        elif isinstance(obj, list):
            for i, v in enumerate(obj):
                walk(f"{prefix}.{i}", v)
        else:
            w.writerow([prefix, "" if obj is None else obj])

    walk("", summary)
    return buf.getvalue()


def _emit(summary, config, stdout):
    stdout.write(_dump_json(summary) if config["format"] == "json" else _flat_csv(summary))


def _outdir(config):
    if config["output"] is None:
        return None
    out = Path(config["output"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _read(path, what):
    if path is None:
        raise InputError(f"--{what} is required")
    return read_matrix_csv(path)


def _parse_synth(text, seed):
    fields = {"rows": 50, "cols": 50, "rank": 2, "rho": 0.05, "spike": 10.0}
    for item in filter(None, (s.strip() for s in str(text).split(","))):
        key, sep, value = item.partition("=")
        if not sep or key not in fields:
            raise InputError(f"bad --synth item {item!r}; keys are {sorted(fields)}")
        fields[key] = type(fields[key])(float(value)) if key not in ("rho", "spike") else float(value)
    return SynthSpec(fields["rows"], fields["cols"], fields["rank"], fields["rho"], fields["spike"], seed)


def cmd_pcp(config, stdout):
    if (config["input"] is None) == (config["synth"] is None):
        raise InputError("give exactly one of --input or --synth")
    truth = None
    if config["input"] is not None:
        M = read_matrix_csv(config["input"])
    else:
        spec = _parse_synth(config["synth"], config["seed"])
        L0, S0, M = synth_lowrank_sparse(spec, make_rng(spec.seed))
        truth = (L0, S0)
    state = admm_pcp(M, lam=config["lambda"], mu=config["mu"], tol=config["tol"],
                     max_iter=config["max_iter"], update=config["update"], record_trace=True)
    nL = norms(state.L)
    summary = {
        **provenance("pcp", config),
        "converged": state.converged,
        "iterations": state.iterations,
        "rel_residual": state.rel_residual,
        "nuclear_L": nL.nuclear,
        "l1_S": float(np.abs(state.S).sum()),
        "lambda": state.lam,
        "mu": state.mu,
    }
    if truth is not None:
        L0, S0 = truth
        summary["recovery"] = {
            "rel_error_L": float(np.linalg.norm(state.L - L0) / np.linalg.norm(L0)),
            "support_match": bool(np.array_equal(np.abs(state.S) > 1e-6, S0 != 0)),
        }
    out = _outdir(config)
    if out is not None:
        line = provenance_line("pcp", config)
        (out / "L.csv").write_text(format_matrix_csv(state.L, line), encoding="utf-8")
        (out / "S.csv").write_text(format_matrix_csv(state.S, line), encoding="utf-8")
        (out / "trace.csv").write_text(format_trace_csv(state.trace, line), encoding="utf-8")
        (out / "summary.json").write_text(_dump_json(summary), encoding="utf-8")
    _emit(summary, config, stdout)
    return EXIT_OK if state.converged else EXIT_NOCONV


def cmd_rpc_attn(config, stdout):
    K = _read(config["keys"], "keys")
    variant = {"sym": "symmetric", "asym": "asymmetric"}.get(config["variant"], config["variant"])
    Q = None
    if variant == "asymmetric":
        Q = _read(config["queries"], "queries")
    pcfg = PapConfig(n_iter=config["iters"], lam=config["lambda"], mu=config["mu"],
                     variant=variant, scale=config["scale"])
    result = pap(K, pcfg, Q)
    summary = {
        **provenance("rpc-attn", config),
        "mu_resolved": None if np.isnan(result.mu) else result.mu,
        "lambda": pcfg.lam,
        "iters": pcfg.n_iter,
        "variant": pcfg.variant.value,
        "shape": list(result.L.shape),
        "trace": [r._asdict() for r in result.trace],
    }
    out = _outdir(config)
    if out is not None:
        line = provenance_line("rpc-attn", config)
        (out / "H.csv").write_text(format_matrix_csv(result.L, line), encoding="utf-8")
        (out / "trace.csv").write_text(format_trace_csv(result.trace, line), encoding="utf-8")
        (out / "summary.json").write_text(_dump_json(summary), encoding="utf-8")
    _emit(summary, config, stdout)
    return EXIT_OK


def cmd_verify(config, stdout):
    if config["grad_only"]:
        value = gradient_check(config["seed"], config["epsilon"])
        out = _outdir(config)
        if out is not None:
            payload = {**provenance("verify", config), "gradient": value}
            (out / "gradient.json").write_text(_dump_json(payload), encoding="utf-8")
        stdout.write(f"{value:.17g}\n")
        return EXIT_OK if value <= 1e-5 else EXIT_VERIFY

    if config["keys"] is not None:
        keys = read_matrix_csv(config["keys"])
        queries = read_matrix_csv(config["queries"]) if config["queries"] else keys
    else:
        keys, queries = diagnostic_instance(config["seed"], n=config["n"], dim=config["dim"])
    values = read_matrix_csv(config["values"]) if config["values"] else None
    report = run_diagnostics(
        keys, queries, values=values,
        random_values_seed=config["seed"] if config["random_v"] else None,
        entry_floor=config["entry_floor"], epsilon=config["epsilon"], seed=config["seed"],
    )
    summary = {**provenance("verify", config), **report.to_dict()}
    summary.pop("config")
    summary["config"] = config
    out = _outdir(config)
    if out is not None:
        (out / "report.json").write_text(_dump_json(summary), encoding="utf-8")
    _emit(summary, config, stdout)
    return EXIT_OK if report.passed else EXIT_VERIFY


def cmd_bench(config, stdout):
    synth = SynthSpec(config["rows"], config["cols"], config["rank"], config["rho"],
                      config["spike"], config["seed"])
    pcfg = PapConfig(n_iter=config["iters"], lam=config["lambda"], mu=config["mu"],
                     scale=config["scale"])
    report = corruption_bench(pcfg, synth, config["trials"], scale=config["scale"])
    summary = {**provenance("bench", config), **report.to_dict()}
    summary.pop("config")
    summary["config"] = config
    summary["bench_config"] = report.config
    out = _outdir(config)
    if out is not None:
        line = f"# {provenance_line('bench', config)}\n"
        (out / "report.json").write_text(_dump_json(summary), encoding="utf-8")
        (out / "trials.csv").write_text(line + report.to_csv(), encoding="utf-8")
        (out / "histogram.csv").write_text(line + report.histogram_csv(config["hist_bins"]),
                                           encoding="utf-8")
    if config["format"] == "json":
        stdout.write(_dump_json(summary))
    else:
        stdout.write(report.to_csv())
    return EXIT_OK


COMMANDS = {"pcp": cmd_pcp, "rpc-attn": cmd_rpc_attn, "verify": cmd_verify, "bench": cmd_bench}


def main(argv=None, stdout=None, stderr=None):
    stdout = sys.stdout if stdout is None else stdout
    stderr = sys.stderr if stderr is None else stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    try:
        config = resolve_config(args.command, args)
        return COMMANDS[args.command](config, stdout)
    except (InputError, KpcaAttnError, ValueError, TypeError) as exc:
        stderr.write(f"{TOOL} {args.command}: error: {exc}\n")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
