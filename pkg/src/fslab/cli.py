"""``fslab`` command line: audits and experiments driven by one INI config."""

from __future__ import annotations

import argparse
import csv
import io
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import LabConfig, RunManifest, atomic_write, dumps, load_config
from .errors import FslabError, NumericalError, ValidationError
from .field import FracParams, Grid, read_field, write_field

PIPELINE = ["sharp-constant", "audit-refined", "audit-chain", "profile-extract", "subcritical-sweep", "cca-atoms"]


def _csv_text(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([format(v, ".17g") if isinstance(v, float) else v for v in row])
    return buf.getvalue()


class Writer:
    """Collects the files a command writes under its own subdirectory."""

    def __init__(self, root: Path, command: str):
        self.root = root
        self.dir = root / command
        self.files: list[str] = []

    def text(self, name: str, text: str) -> Path:
        path = self.dir / name
        atomic_write(path, text)
        self.files.append(str(path.relative_to(self.root)))
        return path

    def field(self, name: str, u) -> Path:
        path = self.dir / name
        path.parent.mkdir(parents=True, exist_ok=True)
        write_field(path, u)
        self.files.append(str(path.relative_to(self.root)))
        return path


# ---------------------------------------------------------------------------
# commands


def cmd_sharp_constant(cfg: LabConfig, args, out: Writer) -> None:
    from .extremals import sharp_constant

    rows = []
    for n in cfg["sharp_constant.dims"]:
        count = cfg["sharp_constant.s_count"]
        for k in range(count):
            s = (k + 0.5) / count * n / 2
            sc = sharp_constant(n, s)
            rows.append([n, s, sc.two_star, sc.value])
    out.text("sharp_constant.csv", _csv_text(["N", "s", "two_star", "S_star"], rows))


def cmd_norms(cfg: LabConfig, args, out: Writer) -> None:
    from .norms import norm_report

    if not args.input:
        raise ValidationError("norms: --input FIELD is required")
    u = read_field(args.input)
    p = FracParams(u.grid.dim, cfg["frac.s"])
    rep = norm_report(u, p, with_gagliardo=True)
    out.text("norms.json", dumps({"input": str(args.input), "s": p.s, **rep.to_dict(u.grid)}))


def _corpus_fields(cfg: LabConfig):
    from .audits import generate_corpus, reference_corpus

    g, p = cfg.grid, cfg.frac
    corpus = reference_corpus(g.dim, g.extent, p, cfg["corpus.seed"], cfg["corpus.size"])
    return corpus, generate_corpus(corpus, g, p)


def cmd_audit_refined(cfg: LabConfig, args, out: Writer) -> None:
    from .audits import CSV_COLUMNS, audit_refined

    corpus, fields = _corpus_fields(cfg)
    p = cfg.frac
    rs = cfg["audit.r_list"]
    rows, summary = [], []
    for r in rs:
        res = audit_refined(fields, p, cfg["audit.theta"], r, corpus.labels)
        for row in res.rows:
            line = row.csv_row()
            if len(rs) > 1:
                line[0] = f"{line[0]}@r={r:g}"
            rows.append(line)
        summary.append({"r": r, "theta": res.theta, "constant": res.constant, "violations": res.violations})
    out.text("audit_refined.csv", _csv_text(CSV_COLUMNS, rows))
    out.text("audit_refined_summary.json", dumps({"grid": cfg.grid.meta(), "s": p.s, "audits": summary}))


def cmd_audit_chain(cfg: LabConfig, args, out: Writer) -> None:
    from .audits import CSV_COLUMNS, audit_chain

    corpus, fields = _corpus_fields(cfg)
    p = cfg.frac
    res = audit_chain(fields, p, corpus.labels, r=2.0)
    out.text("audit_chain.csv", _csv_text(CSV_COLUMNS, [row.csv_row() for row in res.rows]))
    out.text(
        "audit_chain_summary.json",
        dumps({"constants": res.constants, "violations": res.violations, "excluded": res.excluded}),
    )


def cmd_profile_extract(cfg: LabConfig, args, out: Writer) -> None:
    from .norms import hs_norm
    from .profiles import extract_profiles, two_bubble_field

    src = args.input or cfg["profiles.input"]
    if src:
        u = read_field(src)
        p = FracParams(u.grid.dim, cfg["frac.s"])
    else:
        g = cfg.profile_grid
        p = FracParams(g.dim, cfg["frac.s"])
        u = two_bubble_field(g, p, cfg["profiles.wide_lambda"], cfg["profiles.lambda_ratio"])
    J = args.max_profiles if args.max_profiles is not None else cfg["profiles.max_profiles"]
    tau = args.tau if args.tau is not None else cfg["profiles.tau"]
    rho = args.rho if args.rho is not None else cfg["profiles.rho"]
    dec = extract_profiles(u, p, J, tau, rho)
    names = []
    rows = []
    for j, (psi, d) in enumerate(dec.profiles):
        name = f"profile_{j:02d}.fslb"
        out.field(name, psi)
        names.append(name)
        rows.append([j, *d.y, d.lam, dec.scores[j], hs_norm(psi, p)])
    out.field("residual.fslb", dec.residual)
    summary = dec.summary()
    summary.update(
        {
            "input": str(src) if src else "two-bubble synthetic",
            "s": p.s,
            "grid": u.grid.meta(),
            "profile_files": names,
            "separations": dec.separations.tolist(),
            "hs_input_sq": hs_norm(u, p) ** 2,
            "reconstruction_error": dec.reconstruction_error(u, p),
        }
    )
    out.text("profiles.json", dumps(summary))
    axes = [f"y{k}" for k in range(u.grid.dim)]
    out.text("profiles_summary.csv", _csv_text(["index", *axes, "lambda", "score", "hs_profile"], rows))


def _sub_setup(cfg: LabConfig, args):
    from .subcritical import DomainSpec

    s = args.s if getattr(args, "s", None) is not None else cfg["subcritical.s"]
    M, L = cfg["subcritical.points_M"], cfg["subcritical.extent_L"]
    if getattr(args, "grid", None):
        try:
            m_txt, l_txt = args.grid.split(",")
            M, L = int(m_txt), float(l_txt)
        except ValueError:
            raise ValidationError(f"--grid expects M,L, got {args.grid!r}") from None
    g = Grid(cfg["grid.dim_N"], M, L)
    p = FracParams(g.dim, s)
    dom = DomainSpec.parse(getattr(args, "domain", None) or cfg["subcritical.domain"])
    return g, p, dom


def cmd_subcritical_sweep(cfg: LabConfig, args, out: Writer) -> None:
    from .subcritical import SolverConfig, default_eps_list, epsilon_sweep, holder_bound, rescaled_limit_check

    g, p, dom = _sub_setup(cfg, args)
    if args.eps_list:
        try:
            eps = [float(v) for v in args.eps_list.split(",")]
        except ValueError:
            raise ValidationError(f"--eps-list expects comma-separated numbers, got {args.eps_list!r}") from None
    else:
        eps = cfg["subcritical.eps_list"] or default_eps_list(p)
    seed = args.seed if args.seed is not None else cfg["subcritical.seed"]
    scfg = SolverConfig(max_iter=cfg["subcritical.max_iter"], seed=seed)
    results = epsilon_sweep(dom, g, p, eps, scfg, cfg["subcritical.cell_size_delta"], cfg["subcritical.atom_threshold"])
    area = g.cell_volume * float(dom.mask(g).sum())
    axes = [f"peak_x{k}" for k in range(g.dim)]
    rows = [
        [r.epsilon, r.S_eps, r.ball_fraction, *r.peak, r.iterations, r.lagrange_lambda, r.el_residual, len(r.defects.atoms)]
        for r in results
    ]
    out.text(
        "sweep.csv",
        _csv_text(["epsilon", "S_eps", "ball_fraction", *axes, "iterations", "lagrange_lambda", "el_residual", "atoms"], rows),
    )
    tail = results[-3:] if len(results) >= 3 else results
    limit = rescaled_limit_check(tail, p).to_json() if len(tail) >= 2 else None
    doc = {
        "grid": g.meta(),
        "s": p.s,
        "domain": dom.to_text(),
        "omega_measure": area,
        "results": [{**r.to_json(), "holder_bound": holder_bound(p, r.epsilon, area)} for r in results],
        "rescaled_limit": limit,
    }
    out.text("sweep.json", dumps(doc))
    out.field("maximizer_final.fslb", results[-1].maximizer)


def cmd_cca_atoms(cfg: LabConfig, args, out: Writer) -> None:
    from .profiles import defect_measures

    src = Path(args.input) if args.input else out.root / "subcritical-sweep" / "maximizer_final.fslb"
    if not src.exists():
        raise ValidationError(f"cca-atoms: input field {src} not found (run subcritical-sweep first or pass --input)")
    u = read_field(src)
    s = args.s if args.s is not None else cfg["subcritical.s"]
    p = FracParams(u.grid.dim, s)
    delta = cfg["subcritical.cell_size_delta"] or 4 * u.grid.spacing
    rep = defect_measures(u, p, delta, cfg["subcritical.atom_threshold"])
    doc = {
        "input": src.name,
        "s": p.s,
        "cell_size": rep.cell_size,
        "nu_total": float(rep.nu_cells.sum()),
        "mu_total": float(rep.mu_cells.sum()),
        "slack": rep.slack,
        "atoms": [a.to_json() for a in rep.atoms],
    }
    out.text("atoms.json", dumps(doc))


COMMANDS = {
    "sharp-constant": cmd_sharp_constant,
    "norms": cmd_norms,
    "audit-refined": cmd_audit_refined,
    "audit-chain": cmd_audit_chain,
    "profile-extract": cmd_profile_extract,
    "subcritical-sweep": cmd_subcritical_sweep,
    "cca-atoms": cmd_cca_atoms,
}


# ---------------------------------------------------------------------------
# plot data


PLOT_SCHEMAS = {
    "sweep": (["epsilon", "S_eps", "ball_fraction"], "epsilon", ["S_eps", "ball_fraction"]),
    "sharp": (["N", "s", "two_star", "S_star"], "s", ["S_star"]),
    "audit": (
        ["label", "hs", "l2star", "weak", "morrey", "besov"],
        None,
        ["ratio_refined", "ratio_chain1", "ratio_chain2", "ratio_holder", "ratio_morrey_strong"],
    ),
}


def _schema_of(header: list[str]) -> str:
    for name, (cols, _, _) in PLOT_SCHEMAS.items():
        if header[: len(cols)] == cols:
            return name
    raise ValidationError(f"unrecognized report schema with columns {header}")


def emit_plotdata(paths: list[str | Path]) -> str:
    """Long-format ``series,x,y`` rows from sweep, sharp-constant or audit CSV reports."""
    rows = []
    kinds = set()
    for path in paths:
        with open(path, newline="") as fh:
            data = list(csv.reader(fh))
        if not data:
            raise ValidationError(f"{path}: empty report")
        header, body = data[0], data[1:]
        kind = _schema_of(header)
        kinds.add(kind)
        if len(kinds) > 1:
            raise ValidationError(f"{path}: mixed report schemas {sorted(kinds)}")
        _, xcol, ycols = PLOT_SCHEMAS[kind]
        for i, rec in enumerate(body):
            row = dict(zip(header, rec))
            x = row[xcol] if xcol else str(i)
            for y in ycols:
                series = y if kind != "sharp" else f"{y}_N={row['N']}"
                rows.append([series, x, row[y]])
    return _csv_text(["series", "x", "y"], rows)


# ---------------------------------------------------------------------------
# entry point


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fslab", description="Fractional Sobolev lab: audits and experiments.")
    ap.add_argument("--version", action="version", version=f"fslab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="INI config file (defaults when omitted)")
        sp.add_argument("--output-dir", help="override run.output_dir")
        sp.add_argument("overrides", nargs="*", help="section.key=value overrides")

    for name in [*COMMANDS, "pipeline"]:
        sp = sub.add_parser(name)
        common(sp)
        if name in ("norms", "profile-extract", "cca-atoms"):
            sp.add_argument("--input", help="input field file")
        if name == "profile-extract":
            sp.add_argument("--max-profiles", type=int)
            sp.add_argument("--tau", type=float)
            sp.add_argument("--rho", type=float)
        if name in ("subcritical-sweep", "cca-atoms"):
            sp.add_argument("--s", type=float)
        if name == "subcritical-sweep":
            sp.add_argument("--domain", help="disk:cx,cy,r or box:cx,cy,hx,hy")
            sp.add_argument("--eps-list")
            sp.add_argument("--grid", help="M,L")
            sp.add_argument("--seed", type=int)
    sp = sub.add_parser("plotdata")
    sp.add_argument("reports", nargs="*")
    sp.add_argument("--output", help="output CSV (stdout when omitted)")
    return ap


def _defaults(args) -> argparse.Namespace:
    for k in ("input", "max_profiles", "tau", "rho", "s", "domain", "eps_list", "grid", "seed"):
        if not hasattr(args, k):
            setattr(args, k, None)
    return args


def run(argv: list[str] | None = None) -> int:
    args = _defaults(_parser().parse_args(argv))
    try:
        if args.command == "plotdata":
            text = emit_plotdata(args.reports)
            if args.output:
                atomic_write(args.output, text)
            else:
                sys.stdout.write(text)
            return 0
        overrides = list(args.overrides)
        if args.output_dir:
            overrides.append(f"run.output_dir={args.output_dir}")
        cfg = load_config(args.config, overrides)
        root = cfg.output_dir
        manifest = RunManifest(cfg.hash(), __version__)
        commands = PIPELINE if args.command == "pipeline" else [args.command]
        for name in commands:
            t0 = time.perf_counter()
            w = Writer(root, name)
            COMMANDS[name](cfg, args, w)
            manifest.add(name, w.files, time.perf_counter() - t0)
        cfg.save(root / "config.ini")
        manifest.write(root / "manifest.json")
        for f in manifest.files:
            print(root / f)
        return 0
    except ValidationError as exc:
        print(f"fslab: error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, FslabError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"fslab: numerical failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"fslab: error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
