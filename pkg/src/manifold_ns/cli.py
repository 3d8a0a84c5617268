"""Command-line interface.

Usage::

    manifold-ns {spectrum,run,trap,estimates,export} --config FILE [--out DIR]
                [--seed N] [--cache DIR] [--quiet]

Configs are INI files (``key = value`` lines under ``[section]`` headers).
Physical parameters have no defaults. Every command writes
``manifest.json`` to the output directory before computing; passing that
manifest back as ``--config`` reproduces the outputs byte for byte.

Exit codes: 0 success, 2 configuration error, 3 numerical blow-up,
4 I/O error.
"""

import argparse
import configparser
import datetime
import json
import math
import os
import sys

import numpy as np

from .exceptions import BlowUpError, ConfigurationError, InsufficientDataError, ManifoldNSError
from .spectrum import cache as spectrum_cache
from .spectrum.config import ManifoldConfig

EXIT_OK, EXIT_CONFIG, EXIT_BLOWUP, EXIT_IO = 0, 2, 3, 4
COMMANDS = ("spectrum", "run", "trap", "estimates", "export")


def _version():
    try:
        from importlib.metadata import version

        return version("artifact")
    except Exception:  # pragma: no cover - metadata missing in odd installs
        return "0.1.0"


# ----------------------------------------------------------------------
# config handling

class Config:
    """Typed access to INI sections with explicit required keys."""

    def __init__(self, sections, path=None):
        self.sections = {name: dict(values) for name, values in sections.items()}
        self.path = path

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError:
            raise
        if text.lstrip().startswith("{"):
            data = json.loads(text)
            if "config" not in data:
                raise ConfigurationError(f"{path} is JSON but not a run manifest")
            return cls(data["config"], path)
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
        parser.optionxform = str
        try:
            parser.read_string(text, source=str(path))
        except configparser.Error as err:
            raise ConfigurationError(f"cannot parse {path}: {err}") from None
        return cls({s: dict(parser.items(s)) for s in parser.sections()}, path)

    def has(self, section):
        return section in self.sections

    def raw(self, section, key, default=None, required=True):
        sec = self.sections.get(section)
        if sec is None or key not in sec:
            if required and default is None:
                raise ConfigurationError(f"missing required key [{section}] {key}")
            return default
        return sec[key]

    def float(self, section, key, default=None, required=True):
        value = self.raw(section, key, default, required)
        if value is None:
            return None
        try:
            return float(value)
        except (TypeError, ValueError):
            raise ConfigurationError(f"[{section}] {key} must be a number, got {value!r}") from None

    def int(self, section, key, default=None, required=True):
        value = self.raw(section, key, default, required)
        if value is None:
            return None
        try:
            return int(value)
        except (TypeError, ValueError):
            raise ConfigurationError(f"[{section}] {key} must be an integer, got {value!r}") from None

    def bool(self, section, key, default=False):
        value = self.raw(section, key, str(default), required=False)
        text = str(value).strip().lower()
        if text in ("1", "true", "yes", "on"):
            return True
        if text in ("0", "false", "no", "off"):
            return False
        raise ConfigurationError(f"[{section}] {key} must be a boolean, got {value!r}")

    def ints(self, section, key, default=None, required=True):
        value = self.raw(section, key, default, required)
        if value is None:
            return None
        return _parse_int_list(value, f"[{section}] {key}")

    def floats(self, section, key, default=None, required=True):
        value = self.raw(section, key, default, required)
        if value is None:
            return None
        try:
            return [float(v) for v in str(value).replace(",", " ").split()]
        except ValueError:
            raise ConfigurationError(f"[{section}] {key} must be a list of numbers") from None


def _parse_int_list(text, what):
    """``"3 5 7"``, ``"3,5,7"`` or a range ``"3:8"`` (end exclusive)."""
    text = str(text).strip()
    try:
        if ":" in text:
            parts = [int(p) for p in text.split(":")]
            return list(range(*parts))
        return [int(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise ConfigurationError(f"{what} must be integers or a start:stop range, got {text!r}") from None


def manifold_from(cfg):
    return ManifoldConfig(
        cfg.raw("manifold", "kind"),
        cfg.float("manifold", "cutoff"),
        cfg.raw("manifold", "variant"),
    )


# ----------------------------------------------------------------------
# output directory handling

class OutputDir:
    """Owns an output directory for one invocation via an exclusive lockfile."""

    def __init__(self, path):
        self.path = path
        self.lock = os.path.join(path, ".lock")

    def __enter__(self):
        os.makedirs(self.path, exist_ok=True)
        fd = os.open(self.lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        return self

    def __exit__(self, *exc):
        try:
            os.remove(self.lock)
        except OSError:
            pass
        return False

    def file(self, name):
        return os.path.join(self.path, name)

    def write_json(self, name, payload):
        with open(self.file(name), "w") as fh:
            json.dump(payload, fh, sort_keys=True, indent=1, allow_nan=True)
            fh.write("\n")


def write_manifest(out, args, cfg, seed):
    out.write_json("manifest.json", {
        "command": args.command,
        "config_path": os.path.abspath(cfg.path) if cfg.path else None,
        "config": cfg.sections,
        "output_dir": os.path.abspath(out.path),
        "seed": seed,
        "tool_version": _version(),
        "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    })


class Context:
    def __init__(self, args, cfg, out, seed):
        self.args = args
        self.cfg = cfg
        self.out = out
        self.seed = seed

    def say(self, *parts):
        if not self.args.quiet:
            print(*parts)

    def cache_root(self):
        if self.args.cache is not None:
            return self.args.cache
        return spectrum_cache.default_cache_root()

    def spectrum(self, manifold):
        table, triads, path, hit = spectrum_cache.load_or_build(manifold, root=self.cache_root())
        return table, triads, path, hit


# ----------------------------------------------------------------------
# commands

def cmd_spectrum(ctx):
    """Build (or reuse) the cached spectrum and triad tensors."""
    manifold = manifold_from(ctx.cfg)
    table, triads, path, hit = ctx.spectrum(manifold)
    p_nnz, a_nnz = triads.nnz
    summary = {
        "manifold": manifold.to_dict(),
        "lambda1": table.lambda1,
        "n_modes": int(table.n_modes),
        "n_shells": len(table.shells),
        "product_nnz": int(p_nnz),
        "advection_nnz": int(a_nnz),
        "degree": triads.degree,
        "cache_file": os.path.basename(path),
    }
    ctx.out.write_json("spectrum.json", summary)
    ctx.say(f"{'cache hit' if hit else 'cache written'}: {path}")
    ctx.say(f"lambda1 = {table.lambda1!r}  modes = {table.n_modes}  triads: product {p_nnz}, advection {a_nnz}")
    return EXIT_OK


def _initial_state(ctx, table, section="initial"):
    from .dynamics import GalerkinState, random_state
    from .operators import SpectralField

    cfg = ctx.cfg
    kind = cfg.raw(section, "type")
    if kind == "zero":
        return GalerkinState.zeros(table)
    if kind == "random":
        rng = np.random.default_rng(ctx.seed)
        return random_state(
            table,
            rng,
            amplitude=cfg.float(section, "amplitude"),
            harmonic_scale=cfg.float(section, "harmonic_scale", 0.0, required=False),
            decay=cfg.float(section, "decay", 0.0, required=False),
        )
    if kind == "mode":
        c = np.zeros(table.n_modes)
        mode = cfg.int(section, "mode")
        if not 0 < mode < table.n_modes:
            raise ConfigurationError(f"[{section}] mode must be a nonconstant retained mode id")
        c[mode] = cfg.float(section, "amplitude")
        return GalerkinState(0.0, SpectralField(c, table))
    if kind == "taylor_green":
        if table.kind != "torus":
            raise ConfigurationError("taylor_green initial data is defined on the torus")
        # A cos(2 pi x) cos(2 pi y) = A / (2 sqrt 2) * (sqrt2 cos on n = (1, 1) and n = (1, -1))
        amp = cfg.float(section, "amplitude")
        c = np.zeros(table.n_modes)
        lab = table.labels
        for n in ((1, 1), (1, -1)):
            hit = np.flatnonzero((lab[:, 0] == n[0]) & (lab[:, 1] == n[1]) & (lab[:, 2] == 1))
            if hit.size == 0:
                raise ConfigurationError("cutoff too low for Taylor-Green data (needs |n| = sqrt 2)")
            c[hit[0]] = amp / (2.0 * math.sqrt(2.0))
        return GalerkinState(0.0, SpectralField(c, table))
    if kind == "snapshot":
        path = cfg.raw(section, "path")
        with open(path) as fh:
            return GalerkinState.from_json(fh.read(), table)
    raise ConfigurationError(f"[{section}] type must be zero, random, mode, taylor_green or snapshot, got {kind!r}")


def _run_config(cfg, manifold):
    from .dynamics import RunConfig

    shells = cfg.ints("run", "shells", required=False)
    return RunConfig(
        manifold=manifold,
        nu=cfg.float("run", "nu"),
        dt=cfg.float("run", "dt"),
        T_end=cfg.float("run", "T_end"),
        scheme=cfg.raw("run", "scheme"),
        monitor_every=cfg.int("run", "monitor_every", 1, required=False),
        Z=shells,
    )


def cmd_run(ctx):
    """Integrate the Galerkin system; trajectory CSV, final snapshot, summary."""
    from .dynamics import run, write_trajectory_csv

    manifold = manifold_from(ctx.cfg)
    table, triads, _, _ = ctx.spectrum(manifold)
    rc = _run_config(ctx.cfg, manifold)
    initial = _initial_state(ctx, table)
    if rc.Z is not None:
        from .dynamics import GalerkinState

        initial = GalerkinState(initial.t, initial.omega, initial.harmonic, rc.Z)
    status = "ok"
    try:
        traj, final = run(rc, initial, triads)
    except BlowUpError as err:
        traj, final, status = err.trajectory, err.state, "blowup"
        message = str(err)
    write_trajectory_csv(ctx.out.file("trajectory.csv"), traj)
    with open(ctx.out.file("snapshot_final.json"), "w") as fh:
        fh.write(final.to_json())
        fh.write("\n")
    summary = {
        "status": status,
        "run": rc.to_dict(),
        "records": len(traj),
        "t_final": final.t,
        "max_energy_residual": max((r.energy_residual for r in traj), default=0.0),
        "max_enstrophy_residual": max((r.enstrophy_residual for r in traj), default=0.0),
        "final_energy": traj[-1].energy if traj else 0.0,
        "final_enstrophy": traj[-1].enstrophy if traj else 0.0,
    }
    if status == "blowup":
        summary["message"] = message
    ctx.out.write_json("summary.json", summary)
    if status == "blowup":
        print(f"error: {message}", file=sys.stderr)
        return EXIT_BLOWUP
    ctx.say(
        f"{len(traj)} records to t = {final.t:.6g}; max energy residual "
        f"{summary['max_energy_residual']:.3g}, max enstrophy residual {summary['max_enstrophy_residual']:.3g}"
    )
    return EXIT_OK


def cmd_trap(ctx):
    """Envelope margins, domination reports and decay fit."""
    from . import trapping

    cfg = ctx.cfg
    manifold = manifold_from(cfg)
    r = cfg.float("trap", "r")
    K0 = cfg.float("trap", "K0")
    nu = cfg.float("trap", "nu")
    T = cfg.float("trap", "T")
    if K0 < manifold.lambda1 + 10:
        raise ConfigurationError(f"K0 must be >= lambda1 + 10 = {manifold.lambda1 + 10!r}")
    source = cfg.raw("trap", "state")
    use_triads = cfg.bool("trap", "use_triads", False)
    if use_triads:
        table, triads, _, _ = ctx.spectrum(manifold)
    else:
        from .spectrum.table import build_spectrum

        table, triads = build_spectrum(manifold), None
    if source == "synthetic":
        state = trapping.synthetic_state(table, r, cfg.float("trap", "amplitude"), rng=ctx.seed)
    else:
        state = _initial_state(ctx, table, "trap_state")
    A0 = cfg.float("trap", "A0", required=False)
    env = trapping.TrappingEnvelope.from_state(state, r, K0, nu, T, A0)
    margins = trapping.envelope_margins(state, env)
    trapping.write_margins_csv(ctx.out.file("margins.csv"), margins)
    offsets = cfg.ints("trap", "k_shells", required=False)
    if offsets is None:
        offsets = [k.n for k in table.shells if float(k) > K0]
    reports = trapping.domination_sweep(state, [table.shell(n) for n in offsets], env, nu, triads)
    ctx.out.write_json("reports.json", {"envelope": env.to_dict(), "reports": [rep.to_dict() for rep in reports]})
    trapping.write_sweep_csv(ctx.out.file("sweep.csv"), reports)
    try:
        fit = trapping.decay_fit(reports, r, cfg.float("trap", "slack", 0.3, required=False)).to_dict()
    except InsufficientDataError as err:
        fit = {"flag": "insufficient-data", "message": str(err), "passed": False}
    ctx.out.write_json("decay_fit.json", fit)
    n_contact = sum(m.contact for m in margins)
    n_dom = sum(rep.dominated for rep in reports)
    ctx.say(
        f"A1 = {env.A1:.6g}, E* = {env.E_star:.6g}; {n_contact} contact shells; "
        f"{n_dom}/{len(reports)} reports dominated; fit slope {fit.get('slope')}"
    )
    return EXIT_OK


def cmd_estimates(ctx):
    """Bilinear / trilinear / Fourier-trick / appendix-identity measurements."""
    from . import estimates as est
    from .spectrum.basis import make_basis
    from .spectrum.table import build_spectrum

    cfg = ctx.cfg
    manifold = manifold_from(cfg)
    ran = []
    if cfg.has("bilinear"):
        sweep = est.EstimateSweepConfig(
            manifold,
            l1=cfg.ints("bilinear", "l1"),
            l2=cfg.ints("bilinear", "l2", required=False) or (),
            a=cfg.int("bilinear", "a"),
            b=cfg.int("bilinear", "b"),
            c=cfg.int("bilinear", "c"),
            equal_shells=cfg.bool("bilinear", "equal_shells", False),
            trials=cfg.int("bilinear", "trials"),
            seed=ctx.seed,
            ascent_steps=cfg.int("bilinear", "ascent_steps", 0, required=False),
        )
        cells = est.bilinear_sweep(sweep)
        est.write_cells_csv(ctx.out.file("bilinear.csv"), cells)
        summary = {"config": sweep.to_dict(), "cells": len(cells)}
        if len(cells) >= 2:
            x = [c.l1 for c in cells]
            summary["raw_slope"] = est.loglog_slope(x, [c.raw_max for c in cells])
            summary["normalized_slope"] = est.loglog_slope(x, [c.ratio_max for c in cells])
        est.write_summary_json(ctx.out.file("bilinear_fit.json"), summary)
        ran.append("bilinear")
    if cfg.has("trilinear"):
        curve = est.trilinear_decay(
            manifold,
            cfg.int("trilinear", "l2"),
            cfg.int("trilinear", "l3"),
            cfg.floats("trilinear", "K"),
            trials=cfg.int("trilinear", "trials"),
            seed=ctx.seed,
        )
        est.write_summary_json(ctx.out.file("trilinear.json"), curve.to_dict())
        ran.append("trilinear")
    if cfg.has("fourier") or cfg.has("appendix"):
        table = build_spectrum(manifold)
        basis = make_basis(table)
        rng = np.random.default_rng(ctx.seed)
    if cfg.has("fourier"):
        from .operators import SpectralField

        cases = []
        keys = list(table.shells)
        for _ in range(cfg.int("fourier", "cases")):
            key = keys[int(rng.integers(len(keys)))]
            c = rng.standard_normal(table.n_modes)
            c[0] = 0.0
            theta = float(rng.uniform())
            res = est.fourier_trick_check(SpectralField(c, table), key, theta, basis)
            cases.append({
                "shell": float(key), "theta": theta, "residual": res.residual,
                "decomposition_residual": res.decomposition_residual, "n_eigenvalues": res.n_eigenvalues,
            })
        est.write_summary_json(ctx.out.file("fourier.json"), {
            "cases": cases, "max_residual": max((c["residual"] for c in cases), default=0.0),
        })
        ran.append("fourier")
    if cfg.has("appendix"):
        triples = est.random_eigen_triples(table, cfg.int("appendix", "triples"), ctx.seed)
        results = [est.appendix_base_identity(table, *t, basis=basis) for t in triples]
        est.write_summary_json(ctx.out.file("appendix.json"), {
            "triples": len(results),
            "max_relative_residual": max((r.relative_residual for r in results), default=0.0),
            "resonant": sum(r.resonant for r in results),
        })
        ran.append("appendix")
    if not ran:
        raise ConfigurationError("no estimate sections ([bilinear], [trilinear], [fourier], [appendix]) configured")
    ctx.say("estimates written: " + ", ".join(ran))
    return EXIT_OK


def cmd_export(ctx):
    """Export a snapshot as a per-mode CSV and optional grid CSV."""
    from .dynamics import GalerkinState, fmt
    from .spectrum.basis import make_basis
    from .spectrum.table import build_spectrum

    cfg = ctx.cfg
    path = cfg.raw("export", "snapshot")
    with open(path) as fh:
        data = json.load(fh)
    table = build_spectrum(ManifoldConfig(**data["manifold"]))
    state = GalerkinState.from_dict(data, table)
    w = state.omega.coeffs
    label_names = ("n_x", "n_y", "kind") if table.kind == "torus" else ("l", "m")
    with open(ctx.out.file("modes.csv"), "w") as fh:
        fh.write(",".join(("mode_id",) + label_names + ("s", "shell", "omega")) + "\n")
        for i in range(table.n_modes):
            shell = table.shell_index[i]
            shell_txt = fmt(table.lambda1 + shell) if shell >= 0 else ""
            fields = [str(i)] + [str(int(v)) for v in table.labels[i]] + [fmt(table.eigenvalues[i]), shell_txt, fmt(w[i])]
            fh.write(",".join(fields) + "\n")
    if cfg.bool("export", "grid", False):
        basis = make_basis(table)
        vals = basis.values(w)
        if table.kind == "sphere":
            a = np.repeat(basis.theta, basis.n_lon)
            b = np.tile(basis.phi, basis.n_lat)
            names = "theta,phi,omega"
        else:
            a, b = basis.X, basis.Y
            names = "x,y,omega"
        with open(ctx.out.file("grid.csv"), "w") as fh:
            fh.write(names + "\n")
            for row in zip(a, b, vals):
                fh.write(",".join(fmt(v) for v in row) + "\n")
    ctx.say(f"exported t = {state.t!r} snapshot with {table.n_modes} modes")
    return EXIT_OK


_HANDLERS = {
    "spectrum": cmd_spectrum,
    "run": cmd_run,
    "trap": cmd_trap,
    "estimates": cmd_estimates,
    "export": cmd_export,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="manifold-ns", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=_HANDLERS[name].__doc__.split("\n")[0])
        p.add_argument("--config", required=True, help="INI config file or a previous manifest.json")
        p.add_argument("--out", default=None, help="output directory (default: ./out-<command>)")
        p.add_argument("--seed", type=int, default=None, help="RNG seed (unsigned 64-bit)")
        p.add_argument("--cache", default=None,
                       help=f"cache root directory (default: ${spectrum_cache.ENV_VAR} or ~/.cache/manifold_ns)")
        p.add_argument("--quiet", action="store_true", help="suppress progress output")
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        cfg = Config.load(args.config)
        seed = args.seed
        if seed is None:
            seed = int(cfg.raw("seed", "value", 0, required=False)) if cfg.has("seed") else 0
        if not 0 <= seed < 2**64:
            raise ConfigurationError("seed must be an unsigned 64-bit integer")
        cfg.sections.setdefault("seed", {})["value"] = str(seed)
        out_path = args.out or f"out-{args.command}"
        with OutputDir(out_path) as out:
            write_manifest(out, args, cfg, seed)
            return _HANDLERS[args.command](Context(args, cfg, out, seed))
    except FileExistsError:
        print(f"error: output directory {args.out!r} is locked by another invocation", file=sys.stderr)
        return EXIT_IO
    except BlowUpError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_BLOWUP
    except (ManifoldNSError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
