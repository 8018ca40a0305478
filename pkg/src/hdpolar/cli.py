"""Command line: kernel-info, compile, construct, decode, simulate, selftest."""

from __future__ import annotations

import hashlib
import json
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import __version__
from . import construction as C
from . import plan as P
from .channel import sigma_from_ebn0
from .compiler import DEFAULT_MAX_SUBSET, compile_kernel, plan_metrics
from .decoder import CodeSpec, sc_decode
from .expr import render
from .gf2 import BlockSingular, KernelError, load_kernel, standard_form
from .sim import THREADS_ENV, default_workers, manifest, simulate


def _kernel(spec: str):
    try:
        return load_kernel(spec)
    except (KernelError, OSError, KeyError, ValueError) as exc:
        raise click.BadParameter(str(exc), param_hint="kernel") from exc


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        click.echo(text, nl=False)
    else:
        Path(path).write_text(text)


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.replace(",", " ").split()]


def _sha(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()[:16]


@click.group()
@click.version_option(__version__)
def main():
    """Closed-form bit-channel expressions and SC decoding for polar kernels."""


@main.command("kernel-info")
@click.argument("kernel")
@click.option("--lengths/--no-lengths", default=False, help="Compile both modes and print per-index lengths.")
@click.option("--show", is_flag=True, help="Print the compiled expressions (implies --lengths).")
@click.option("--max-subset", default=DEFAULT_MAX_SUBSET, show_default=True)
def kernel_info(kernel, lengths, show, max_subset):
    """Describe KERNEL (a built-in name such as G6, or a kernel file)."""
    G = _kernel(kernel)
    click.echo(f"m = {G.m}")
    click.echo(str(G))
    click.echo(f"hash = {G.digest()}")
    click.echo(f"lower triangular = {G.is_lower_triangular()}")
    singular = []
    for i in range(1, G.m + 1):
        try:
            standard_form(G, i)
        except BlockSingular:
            singular.append(i)
    click.echo(f"indices needing column pivots = {singular or 'none'}")
    if lengths or show:
        for mode in ("L", "W"):
            plans = compile_kernel(G, mode, max_subset)
            met = plan_metrics(plans)
            click.echo(f"{mode}: lengths {list(met.lengths)}  C = {met.C:.4g}  ops = {met.ops}")
            if show:
                for p in plans:
                    click.echo(f"  {p.index}: {render(p.nodes, p.roots[0][0])}")


@main.command("compile")
@click.argument("kernel")
@click.option("--mode", type=click.Choice(["L", "W"]), default="W", show_default=True)
@click.option("--max-subset", default=DEFAULT_MAX_SUBSET, show_default=True,
              help="Largest variable subset tried by the symmetric transform.")
@click.option("--workers", default=1, show_default=True, help="Threads used across bit indices.")
@click.option("-o", "--out", default="-", help="Plan file to write (default stdout).")
def compile_cmd(kernel, mode, max_subset, workers, out):
    """Compile all bit indices of KERNEL into one plan file."""
    G = _kernel(kernel)
    plans = compile_kernel(G, mode, max_subset, workers)
    met = plan_metrics(plans)
    _write(out, P.plans_to_json(G, plans, {"max_subset": max_subset}))
    click.echo(f"{mode}-plans for m={G.m}: lengths {list(met.lengths)}, C = {met.C:.4g}, ops = {met.ops}",
               err=True)


def _load_plans(path: str | None, G, mode: str = "W"):
    if path is None:
        return compile_kernel(G, mode), None
    text = Path(path).read_text()
    kernel, plans, _ = P.plans_from_json(text)
    if kernel != G:
        raise click.BadParameter(f"plans were compiled for kernel {kernel.digest()}, code uses {G.digest()}",
                                 param_hint="plans")
    return plans, _sha(text)


@main.command("construct")
@click.option("--kernel", "--kernel-file", "kernel", required=True, help="Built-in name or kernel file.")
@click.option("--n", "n", type=int, required=True, help="Kronecker power.")
@click.option("--rate", type=float, default=None, help="Code rate K/N (rounded down).")
@click.option("--K", "K", type=int, default=None, help="Number of information bits.")
@click.option("--method", type=click.Choice(["mc", "ga"]), default="ga", show_default=True)
@click.option("--ebn0", type=float, required=True, help="Design Eb/N0 in dB.")
@click.option("--trials", type=int, default=10_000, show_default=True, help="Monte Carlo trials.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--plans", "plans_path", default=None, help="Plan file (l-plans for ga, any for mc).")
@click.option("-o", "--out", default="-", help="Code-spec file to write.")
def construct(kernel, n, rate, K, method, ebn0, trials, seed, plans_path, out):
    """Select an information set and write a code-spec file."""
    G = _kernel(kernel)
    N = G.m**n
    if (rate is None) == (K is None):
        raise click.UsageError("give exactly one of --rate and --K")
    if K is None:
        K = int(np.floor(rate * N))
    if not 1 <= K <= N:
        raise click.BadParameter(f"K must lie in 1..{N}", param_hint="K")
    sigma = sigma_from_ebn0(ebn0, K / N)
    if method == "ga":
        plans, plan_hash = _load_plans(plans_path, G, "L")
        prof = C.ga_construct(G, n, sigma, plans, ebn0)
    else:
        plans, plan_hash = _load_plans(plans_path, G, "W")
        prof = C.monte_carlo_construct(G, n, sigma, trials, plans, seed=seed, ebn0_db=ebn0)
    info = C.select_info_set(prof, K)
    bound = C.union_bound_fer(prof, info, clamp=False)
    meta = {
        "method": method,
        "design_ebn0_db": ebn0,
        "seed": seed if method == "mc" else None,
        "trials": trials if method == "mc" else None,
        "union_bound": min(bound, 1.0),
        "union_bound_clamped": bound > 1.0,
        "profile": prof.to_dict(),
    }
    if plan_hash:
        meta["plan_hash"] = plan_hash
    spec = CodeSpec(G, n, info, meta=meta)
    _write(out, spec.to_json())
    click.echo(f"K={K} N={N} method={method} union bound={min(bound, 1.0):.4g}"
               + (" (clamped)" if bound > 1.0 else ""), err=True)


def _read_obs(path: str, N: int) -> np.ndarray:
    rows = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip() and not ln.startswith("#")]
    obs = np.array(rows, dtype=float)
    if obs.shape != (N, 2):
        raise click.BadParameter(f"expected {N} lines of 'p0 p1', got shape {obs.shape}", param_hint="obs")
    if np.any(obs < 0) or np.any(obs.max(axis=1) == 0):
        raise click.BadParameter("pairs must be nonnegative and not both zero", param_hint="obs")
    return obs


@main.command("decode")
@click.option("--plans", "plans_path", required=True, help="Plan file for the code's kernel.")
@click.option("--code", "code_path", required=True, help="Code-spec file.")
@click.option("--obs", "obs_path", required=True, help="Observation file: N lines of 'p0 p1'.")
@click.option("-o", "--out", default="-", help="Output: line 1 u_hat, line 2 info bits.")
def decode(plans_path, code_path, obs_path, out):
    """SC-decode one frame of channel observations."""
    spec = CodeSpec.from_json(Path(code_path).read_text())
    plans, _ = _load_plans(plans_path, spec.kernel)
    obs = _read_obs(obs_path, spec.N)
    u_hat, info = sc_decode(spec, plans, obs)
    _write(out, "".join(map(str, u_hat)) + "\n" + "".join(map(str, info)) + "\n")


@main.command("simulate")
@click.option("--code", "code_path", required=True, help="Code-spec file.")
@click.option("--plans", "plans_path", default=None, help="Plan file (default: compile W-plans).")
@click.option("--ebn0", required=True, help="Eb/N0 points in dB, e.g. '1,1.5,2'.")
@click.option("--max-frames", default=100_000, show_default=True)
@click.option("--min-errors", default=100, show_default=True, help="Stop a point at this many frame errors.")
@click.option("--block", default=200, show_default=True, help="Frames per seeded block.")
@click.option("--seed", default=0, show_default=True)
@click.option("--workers", type=int, default=None,
              help=f"Worker processes (default from ${THREADS_ENV}, else 1).")
@click.option("--csv", "csv_path", default="-", help="Result CSV (one row per point).")
@click.option("--manifest", "manifest_path", default=None, help="JSON run manifest.")
def simulate_cmd(code_path, plans_path, ebn0, max_frames, min_errors, block, seed, workers, csv_path,
                 manifest_path):
    """Frame and bit error rates of a code under SC decoding over BPSK-AWGN."""
    code_text = Path(code_path).read_text()
    spec = CodeSpec.from_json(code_text)
    plans, plan_hash = _load_plans(plans_path, spec.kernel)
    if plan_hash is None:
        plan_hash = _sha(P.plans_to_json(spec.kernel, plans))
    workers = default_workers() if workers is None else workers
    t0 = time.perf_counter()
    res = simulate(spec, plans, _floats(ebn0), seed=seed, max_frames=max_frames, min_frame_errors=min_errors,
                   block_frames=block, workers=workers)
    text = res.to_csv()
    _write(csv_path, text)
    if manifest_path:
        doc = manifest(res, version=__version__, argv=sys.argv[1:], kernel_hash=spec.kernel.digest(),
                       plan_hash=plan_hash, code_hash=_sha(code_text), csv_hash=_sha(text), workers=workers,
                       wall_time_total=time.perf_counter() - t0)
        Path(manifest_path).write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")


@main.command("selftest")
@click.option("--random-per-m", default=3, show_default=True, help="Random kernels per size m = 3..8.")
@click.option("--cases", default=20, show_default=True, help="Random inputs per bit index.")
@click.option("--seed", default=2024, show_default=True)
def selftest(random_per_m, cases, seed):
    """Check compiled plans against exhaustive bit-channel sums."""
    from .selftest import oracle_suite

    reports = oracle_suite(random_per_m=random_per_m, cases=cases, seed=seed)
    failed = 0
    for r in reports:
        ok = r.ok()
        failed += not ok
        click.echo(f"{'PASS' if ok else 'FAIL'} {r.kernel:<16} {r.mode} cases={r.cases} "
                   f"max rel err={r.worst_rel_err:.2e}")
    click.echo(f"{len(reports) - failed}/{len(reports)} passed")
    if failed:
        raise SystemExit(1)


if __name__ == "__main__":  # pragma: no cover
    main()
