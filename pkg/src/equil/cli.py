"""Command line entry points: sweeps, norm batteries, critical-layer stats."""

from __future__ import annotations

import csv
import json
import sys

import click

from .grid import load_field
from .norms import NormSpec, norm
from .poisson import solve
from .rigidity import critical_layer, energy_identity_stats
from .studies import RunManifest, run_sweep
from .variational import SolverOptions


@click.group()
def main():
    """Near-shear relative equilibria: construction and diagnostics."""


@main.command()
@click.option("--mode", type=click.Choice(["steady", "traveling"]), default="steady")
@click.option("-c", "speed", type=float, default=0.0, help="traveling speed in (-1, 1)")
@click.option("--eps", default="0.1,0.05,0.025", help="comma-separated, decreasing")
@click.option("--q", type=float, default=0.05)
@click.option("--grid", "grid_str", default="513x129", help="NXxNY, both odd")
@click.option("--Lx", "lx", type=float, default=8.0)
@click.option("--out", type=click.Path(), required=True)
@click.option("--theta", type=float, default=0.3)
@click.option("--max-iters", type=int, default=5000)
@click.option("--tol", type=float, default=1e-8)
@click.option("--steiner-every", type=int, default=10)
@click.option("--phase1-steps", type=int, default=40)
@click.option("--seed", type=int, default=0)
@click.option("--no-refine", is_flag=True, help="skip the grid-doubling steadiness check")
@click.option("--no-plots", is_flag=True)
def run(mode, speed, eps, q, grid_str, lx, out, theta, max_iters, tol,
        steiner_every, phase1_steps, seed, no_refine, no_plots):
    """Run an eps sweep and write results, fits, fields, and plots."""
    nx, ny = (int(v) for v in grid_str.lower().split("x"))
    manifest = RunManifest(
        mode=mode,
        c=speed,
        eps_list=tuple(float(v) for v in eps.split(",")),
        q=q,
        nx=nx,
        ny=ny,
        Lx=lx,
        solver=SolverOptions(
            theta=theta,
            max_iters=max_iters,
            tol=tol,
            steiner_every=steiner_every,
            phase1_steps=phase1_steps,
        ),
        seed=seed,
        refine_check=not no_refine,
    )
    result = run_sweep(manifest, out, make_plots=not no_plots)
    click.echo(f"wrote {result.out_dir}/results.csv ({len(result.rows)} runs)")
    for f in result.failures:
        click.echo(f"FAILED eps={f['eps']}: {f['error']}", err=True)
    if result.failures:
        sys.exit(2)  # partial success


@main.command("norms")
@click.option("--field", "field_path", type=click.Path(exists=True), required=True)
@click.option("--spec", "spec_path", type=click.Path(exists=True), required=True,
              help="CSV with header kind,s,p,k")
@click.option("--out", "out_path", type=click.Path(), default=None)
def norms_cmd(field_path, spec_path, out_path):
    """Evaluate a batch of norms of a stored field."""
    f = load_field(field_path)
    rows = []
    with open(spec_path, newline="") as fh:
        for rec in csv.DictReader(fh):
            spec = NormSpec(
                kind=rec["kind"].strip(),
                s=float(rec.get("s", 0) or 0),
                p=float(rec.get("p", 2) or 2),
                k=int(rec.get("k", 0) or 0),
            )
            rep = norm(f, spec)
            rows.append(
                {"kind": spec.kind, "s": spec.s, "p": spec.p, "k": spec.k,
                 "value": rep.value, "method_notes": rep.method_notes}
            )
    writer = csv.DictWriter(
        open(out_path, "w", newline="") if out_path else sys.stdout,
        fieldnames=["kind", "s", "p", "k", "value", "method_notes"],
        lineterminator="\n",
    )
    writer.writeheader()
    writer.writerows(rows)


@main.command("rigidity")
@click.option("--field", "field_path", type=click.Path(exists=True), required=True)
@click.option("-c", "speed", type=float, default=0.0)
def rigidity_cmd(field_path, speed):
    """Critical-layer and energy-identity statistics for a stored vorticity."""
    omega = load_field(field_path)
    sol = solve(omega)
    layer = critical_layer(sol.ux, speed)
    stats = energy_identity_stats(omega, sol, speed)
    out = {
        "monotone_ok": layer.monotone_ok,
        "max_dy_ux": layer.max_dy_ux,
        "interior_root_columns": sum(r == "interior-root" for r in layer.regime),
        **{k: v for k, v in stats.items() if k != "monotone_ok"},
    }
    click.echo(json.dumps(out, indent=2))


if __name__ == "__main__":
    main()
