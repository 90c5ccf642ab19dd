"""Command-line surface: synthesize, simulate, and run the benchmark suites.

Exit codes:
  0   success (synth: certificate written; sim: audit clean; bench: outcome
      pattern matched)
  1   sim audit found violations
  2   candidate search proved the witness constraints unsatisfiable
  3   iteration cap reached without a surviving candidate
  4   numerical failure in a solver
  5   dense-sampling confirmation rejected the candidate
  64  usage error (missing or malformed inputs)
  65  certificate does not match the model (hash check)
  66  initial state outside the certified invariant region

Environment: CLF_LOG sets the log level (DEBUG, INFO, ...);
CLF_PURE_NUMPY=1 selects the pure-numpy integration kernels.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import click
import numpy as np

from .catalog import NUM_SYSTEMS, data_dir, load_benchmark
from .engine import (
    Certificate,
    SynthesisConfig,
    SynthesisResult,
    synthesize,
)
from .phi import PhiFunction
from .plant import ControlAffinePlant, SwitchedPlant, affine_to_switched, load_model
from .poly import Polynomial
from .sim import PreconditionError, audit_trace, simulate, write_trace_csv

EXIT_OK = 0
EXIT_AUDIT_FAILED = 1
EXIT_UNSAT = 2
EXIT_ITERATION_CAP = 3
EXIT_NUMERICAL = 4
EXIT_CONFIRMATION = 5
EXIT_USAGE = 64
EXIT_HASH_MISMATCH = 65
EXIT_BAD_X0 = 66

_STATUS_EXIT = {
    "Success": EXIT_OK,
    "CandidateUnsat": EXIT_UNSAT,
    "IterationCap": EXIT_ITERATION_CAP,
    "NumericalFailure": EXIT_NUMERICAL,
    "ConfirmationFailed": EXIT_CONFIRMATION,
}

log = logging.getLogger("clfsynth")


def _setup_logging() -> None:
    level = os.environ.get("CLF_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )


def _model_hash(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _resolve_model(
    model: Optional[str], bench: Optional[int]
) -> Tuple[Union[SwitchedPlant, ControlAffinePlant], Path]:
    if (model is None) == (bench is None):
        raise click.UsageError("exactly one of --model and --bench is required")
    if bench is not None:
        path = data_dir() / f"sys{bench:02d}.json"
    else:
        path = Path(model)
    if not path.exists():
        raise click.UsageError(f"model file not found: {path}")
    return load_model(str(path)), path


def certificate_to_doc(cert: Certificate, model_hash: str) -> Dict:
    doc = cert.to_json()
    doc["model_hash"] = model_hash
    return doc


def certificate_from_doc(
    doc: Dict, variables: Sequence[str]
) -> Certificate:
    V = Polynomial.from_json(doc["V"], variables)
    template = tuple(V.monomials())
    return Certificate(
        V=V,
        c=tuple(V.coefficient(m) for m in template),
        template=template,
        phi=tuple(PhiFunction(d=tuple(d)) for d in doc["phi"]),
        eps=tuple(doc["eps"]),
        lambda1=tuple(doc["lambda1"]),
        lambda2=tuple(doc["lambda2"]),
        beta_lb=float(doc["beta_lb"]),
        dwell_lb=(None if doc["dwell_lb"] is None else float(doc["dwell_lb"])),
        lam=float(doc["lambda"]),
        iterations=int(doc["iterations"]),
        witness_count=int(doc["witness_count"]),
        confirmation=doc["confirmation"],
        variables=tuple(variables),
    )


@click.group()
def main() -> None:
    """Switching-controller synthesis with certified Lyapunov decrease."""
    _setup_logging()


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------


@main.command("synth")
@click.option("--model", type=str, default=None, help="Model JSON path.")
@click.option("--bench", type=int, default=None, help="Benchmark id (1-21).")
@click.option("--template", type=str, default=None,
              help="Template name (currently 'quad'); default from the model.")
@click.option("--eps", type=float, default=None, help="Strictness epsilon.")
@click.option("--lambda", "lam", type=float, default=2.0,
              help="Switching threshold scale (> 1).")
@click.option("--c0", type=float, default=None,
              help="Coefficient box half-width.")
@click.option("--max-iters", type=int, default=200)
@click.option("--seed", type=int, default=0)
@click.option("--out", type=str, default=None, help="Certificate JSON path.")
@click.option("--dump-relaxation", type=str, default=None)
@click.option("--dump-sdp", type=str, default=None)
def cmd_synth(model, bench, template, eps, lam, c0, max_iters, seed, out,
              dump_relaxation, dump_sdp) -> None:
    """Synthesize a certificate for one model."""
    plant, path = _resolve_model(model, bench)
    config = SynthesisConfig(
        template=template, eps=eps, c0=c0, lam=lam, max_iters=max_iters,
        seed=seed, dump_relaxation=dump_relaxation, dump_sdp=dump_sdp,
    )
    result = synthesize(plant, config)
    click.echo(
        f"{plant.name}: {result.status} after {result.iterations} iterations "
        f"({result.witness_count} witnesses, {result.elapsed:.1f}s)"
        + (f" - {result.reason}" if result.reason else "")
    )
    if result.success and out:
        doc = certificate_to_doc(result.certificate, _model_hash(path))
        with open(out, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
        click.echo(f"certificate written to {out}")
    sys.exit(_STATUS_EXIT[result.status])


# ---------------------------------------------------------------------------
# sim
# ---------------------------------------------------------------------------


@main.command("sim")
@click.option("--model", type=str, default=None)
@click.option("--bench", type=int, default=None)
@click.option("--cert", type=str, required=True, help="Certificate JSON.")
@click.option("--x0", type=str, required=True,
              help="Initial state, comma-separated.")
@click.option("--horizon", type=float, default=50.0)
@click.option("--step", type=float, default=None)
@click.option("--out", type=str, default="trace.csv")
def cmd_sim(model, bench, cert, x0, horizon, step, out) -> None:
    """Run the closed loop and audit the trace against the certificate."""
    plant, path = _resolve_model(model, bench)
    if not isinstance(plant, SwitchedPlant):
        plant = affine_to_switched(plant)
    cert_path = Path(cert)
    if not cert_path.exists():
        raise click.UsageError(f"certificate file not found: {cert_path}")
    doc = json.loads(cert_path.read_text())
    if doc.get("model_hash") != _model_hash(path):
        click.echo("certificate was not produced from this model", err=True)
        sys.exit(EXIT_HASH_MISMATCH)
    certificate = certificate_from_doc(doc, plant.variables)
    try:
        x0_vec = np.array([float(v) for v in x0.split(",")])
    except ValueError:
        raise click.UsageError(f"malformed --x0 {x0!r}")
    try:
        trace = simulate(plant, certificate, x0_vec, horizon, step=step)
    except PreconditionError as exc:
        click.echo(str(exc), err=True)
        sys.exit(EXIT_BAD_X0)
    write_trace_csv(trace, out, plant.variables)
    report = audit_trace(trace, certificate, plant)
    audit_path = out + ".audit.json"
    with open(audit_path, "w") as fh:
        json.dump(report.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    click.echo(
        f"trace: {len(trace.t)} samples, {len(trace.switch_t)} switches, "
        f"status {trace.status}; audit "
        + ("passed" if report.passed else "FAILED")
    )
    sys.exit(EXIT_OK if report.passed else EXIT_AUDIT_FAILED)


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------

# Qualitative outcome pattern the suite is expected to reproduce.  Iteration
# counts published for each system set the band [1, 10x published]; rows
# marked allowed-fail may fail at the relaxed level without failing the
# suite.  System 20 is capped at 500 iterations, per its published budget.
EXPECTED_PATTERN: Dict[int, Dict] = {
    1: {"outcome": "must-succeed", "published_iters": 18},
    2: {"outcome": "allowed-fail", "published_iters": 30},
    3: {"outcome": "must-succeed", "published_iters": 10},
    4: {"outcome": "must-succeed", "published_iters": 12},
    5: {"outcome": "must-succeed", "published_iters": 4},
    6: {"outcome": "must-succeed", "published_iters": 1},
    7: {"outcome": "must-succeed", "published_iters": 1},
    8: {"outcome": "must-succeed", "published_iters": 13},
    9: {"outcome": "must-succeed", "published_iters": 1},
    10: {"outcome": "must-succeed", "published_iters": 1},
    11: {"outcome": "must-succeed", "published_iters": 1},
    12: {"outcome": "must-succeed", "published_iters": 1},
    13: {"outcome": "must-succeed", "published_iters": 1},
    14: {"outcome": "must-succeed", "published_iters": 2},
    15: {"outcome": "must-succeed", "published_iters": 34},
    16: {"outcome": "must-succeed", "published_iters": 1},
    17: {"outcome": "must-succeed", "published_iters": 38},
    18: {"outcome": "must-succeed", "published_iters": 20},
    19: {"outcome": "must-succeed", "published_iters": 1},
    20: {"outcome": "must-succeed", "published_iters": 50, "cap": 500},
    21: {"outcome": "allowed-fail", "published_iters": 20},
}

SUITES = {
    "switched": list(range(1, 15)),
    "affine": list(range(15, 22)),
    "all": list(range(1, NUM_SYSTEMS + 1)),
}


def iteration_cap(bench_id: int) -> int:
    entry = EXPECTED_PATTERN[bench_id]
    if "cap" in entry:
        return entry["cap"]
    return max(20, 10 * entry["published_iters"])


def _run_one(args: Tuple[int, int]) -> Tuple[int, Dict, Optional[Dict], Dict]:
    """One benchmark; returns (id, report row, certificate doc, timings)."""
    bench_id, seed = args
    plant = load_benchmark(bench_id)
    path = data_dir() / f"sys{bench_id:02d}.json"
    t0 = time.time()
    result = synthesize(
        plant, SynthesisConfig(max_iters=iteration_cap(bench_id), seed=seed)
    )
    total = time.time() - t0
    row = {
        "id": bench_id,
        "name": plant.name,
        "status": result.status,
        "ok": result.success,
        "iterations": result.iterations,
        "witness_count": result.witness_count,
        "reason": result.reason,
        "certificate": (
            f"sys{bench_id:02d}.cert.json" if result.success else None
        ),
    }
    cert_doc = None
    if result.success:
        cert_doc = certificate_to_doc(result.certificate, _model_hash(path))
    timings = {"id": bench_id, "total_s": round(total, 3)}
    return bench_id, row, cert_doc, timings


def _pattern_ok(rows: List[Dict]) -> bool:
    for row in rows:
        entry = EXPECTED_PATTERN[row["id"]]
        if entry["outcome"] == "must-succeed":
            if not row["ok"]:
                return False
            band_hi = iteration_cap(row["id"])
            if not (1 <= row["iterations"] <= band_hi):
                return False
    return True


def _text_table(rows: List[Dict]) -> str:
    header = f"{'id':>3} {'name':<28} {'status':<18} {'iters':>5} {'wit':>4}"
    lines = [header, "-" * len(header)]
    for row in rows:
        mark = "ok" if row["ok"] else "FAIL"
        lines.append(
            f"{row['id']:>3} {row['name']:<28} {row['status']:<18} "
            f"{row['iterations']:>5} {row['witness_count']:>4}  {mark}"
        )
    return "\n".join(lines) + "\n"


@main.command("bench")
@click.option("--suite", type=click.Choice(sorted(SUITES)), default=None)
@click.option("--only", type=int, multiple=True, help="Run specific ids.")
@click.option("--seed", type=int, default=7)
@click.option("--jobs", type=int, default=1)
@click.option("--out-dir", type=str, default="bench-out")
def cmd_bench(suite, only, seed, jobs, out_dir) -> None:
    """Run a benchmark suite and write a machine-readable report.

    Wall-clock timings go to a separate sidecar so the report proper is
    byte-identical across runs with the same seed.
    """
    if suite is None and not only:
        raise click.UsageError("provide --suite or --only")
    ids = sorted(set(SUITES[suite] if suite else []) | set(only))
    for bench_id in ids:
        if bench_id not in EXPECTED_PATTERN:
            raise click.UsageError(f"unknown benchmark id {bench_id}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    work = [(bench_id, seed) for bench_id in ids]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_one, work))
    else:
        results = [_run_one(w) for w in work]
    results.sort(key=lambda r: r[0])
    rows = [r[1] for r in results]
    for bench_id, _, cert_doc, _ in results:
        if cert_doc is not None:
            cert_path = out / f"sys{bench_id:02d}.cert.json"
            cert_path.write_text(
                json.dumps(cert_doc, indent=2, sort_keys=True) + "\n"
            )
    report = {"seed": seed, "suite": suite, "rows": rows}
    (out / "report.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n"
    )
    (out / "report.txt").write_text(_text_table(rows))
    (out / "timings.json").write_text(
        json.dumps({"rows": [r[3] for r in results]}, indent=2, sort_keys=True)
        + "\n"
    )
    click.echo(_text_table(rows), nl=False)
    ok = _pattern_ok(rows)
    click.echo("pattern: " + ("matched" if ok else "NOT matched"))
    sys.exit(EXIT_OK if ok else EXIT_AUDIT_FAILED)


if __name__ == "__main__":
    main()
