"""Command line interface.

Subcommands
-----------
spectrum      exact sector spectra, optionally cross-validated against the
              nonlinear-equation route
steady-state  steady-state populations and certification
gap-scan      dissipative gap across system sizes
rg-solve      solve the spectral-parameter equations in one sector
oracle-check  verify the fast sector assembly against the definition
evolve        observable dynamics from a product or mixed start

Options resolve with precedence command line > environment > config file >
default; environment variables use the LIOUVRG_ prefix (LIOUVRG_METHOD,
LIOUVRG_TOL, ...).  Outputs are deterministic: rerunning a command with the
same inputs produces byte-identical files, and every payload embeds the
resolved configuration plus a sha256 hash of its own content.

Exit codes: 0 success, 2 invalid input, 3 numerical failure, 4 resource
limit exceeded.
"""

import argparse
import hashlib
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import bethe, ed, meanfield, rg
from .model import (
    LiouvParams,
    NumericError,
    ResourceLimitError,
    SectorLabel,
    ValidationError,
    enumerate_sectors,
    sector_dimension,
)

ENV_PREFIX = "LIOUVRG_"

_CASTS = {
    "levels": int,
    "atoms": int,
    "gamma": float,
    "gamma0": float,
    "p": float,
    "tol": float,
    "jobs": int,
    "seed": int,
    "tries": int,
    "count": int,
    "steps": int,
    "t0": float,
    "t1": float,
    "bethe_limit": int,
    "degree": int,
}

_CHOICES = {
    "method": ("ed", "rg", "both"),
    "format": ("json", "csv"),
    "match": ("ed", "none"),
}


def _load_config(path):
    if not path:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ValidationError(f"config file {path} must hold a JSON object")
    return cfg


def _resolve(name, cli_value, config, default=None):
    """Option value with precedence flag > LIOUVRG_ env > config file > default."""
    value = cli_value
    source = "flag"
    if value is None:
        env = os.environ.get(ENV_PREFIX + name.upper().replace("-", "_"))
        if env is not None:
            value, source = env, "env"
    if value is None and name in config:
        value, source = config[name], "config"
    if value is None:
        return default
    cast = _CASTS.get(name)
    if cast is not None and not isinstance(value, cast):
        try:
            value = cast(value)
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"option {name} ({source}) is not a valid {cast.__name__}: {value!r}") from exc
    if name in _CHOICES and value not in _CHOICES[name]:
        raise ValidationError(f"option {name} must be one of {_CHOICES[name]}, got {value!r}")
    return value


def _parse_floats(text):
    if isinstance(text, (list, tuple)):
        return tuple(float(v) for v in text)
    return tuple(float(v) for v in str(text).split(",") if v.strip() != "")


def _parse_ints(text):
    if isinstance(text, (list, tuple)):
        return tuple(int(v) for v in text)
    return tuple(int(v) for v in str(text).split(",") if v.strip() != "")


def build_params(args, config):
    levels = _resolve("levels", args.levels, config, 3)
    atoms = _resolve("atoms", args.atoms, config, 4)
    eps = _resolve("eps", args.eps, config)
    gamma = _resolve("gamma", args.gamma, config, 1.0)
    gamma0 = _resolve("gamma0", args.gamma0, config, 0.0)
    p = _resolve("p", args.p, config, 0.0)
    eps_t = _parse_floats(eps) if eps is not None else ()
    return LiouvParams(levels, atoms, eps_t, gamma, gamma0, p)


def _sector_from(text, params):
    s = SectorLabel(_parse_ints(text))
    if len(s) != params.n_levels:
        raise ValidationError(
            f"sector {s.s} has {len(s)} entries, the model has {params.n_levels} levels"
        )
    return s


def _cnum(z):
    z = complex(z)
    return {"re": float(z.real), "im": float(z.imag)}


def _payload_hash(payload):
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def _csv_text(payload, rows, header):
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for cell in row:
            if isinstance(cell, float):
                cells.append(repr(cell))
            else:
                cells.append(str(cell))
        lines.append(",".join(cells))
    data = "\n".join(lines) + "\n"
    digest = hashlib.sha256(data.encode("utf-8")).hexdigest()
    config_line = json.dumps(payload.get("config", {}), sort_keys=True, separators=(",", ":"))
    return (
        f"# liouvrg {payload.get('command', '')}\n"
        f"# config={config_line}\n"
        f"# sha256={digest}\n" + data
    )


def _json_text(payload):
    payload = dict(payload)
    payload["content_sha256"] = _payload_hash(payload)
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def emit(payload, rows, header, args, config):
    """Serialize one command's results and write them out.

    JSON embeds the full payload plus its own sha256; CSV keeps the tabular
    rows with the configuration and the data hash in comment lines.
    """
    out = _resolve("out", args.out, config)
    fmt = _resolve("format", args.format, config)
    if fmt is None:
        fmt = "csv" if (out or "").endswith(".csv") else "json"
    if fmt == "json":
        text = _json_text(payload)
    else:
        text = _csv_text(payload, rows, header)
    if out:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _config_record(params, command, extra=None):
    rec = {"command": command, "params": params.to_dict()}
    if extra:
        rec.update(extra)
    return rec


def _rg_cross_validate(params, sector, targets, tries, seed, tol):
    rng = np.random.default_rng(seed)
    found, unmatched = rg.find_sector_solutions(
        params, sector, targets, rng, tries=tries, tol=tol
    )
    max_dev = 0.0
    for idx, sol in found.items():
        max_dev = max(max_dev, abs(sol.eigenvalue - complex(targets[idx])))
    return found, unmatched, max_dev


# ---------------------------------------------------------------------------
# subcommands


def cmd_spectrum(args, config):
    """Sector spectra; with --out a directory, per-sector files and a p sweep."""
    params = build_params(args, config)
    method = _resolve("method", args.method, config, "ed")
    tol = _resolve("tol", args.tol, config)
    jobs = _resolve("jobs", args.jobs, config, 1)
    tries = _resolve("tries", args.tries, config, 200)
    seed = _resolve("seed", args.seed, config, 0)
    if method == "rg":
        raise ValidationError(
            "the spectrum command enumerates eigenvalues, which needs the exact route; "
            "use --method ed or both, or the rg-solve command for one sector"
        )
    sector_opt = _resolve("sector", args.sector, config)
    p_list_opt = _resolve("p-list", args.p_list, config)
    p_values = _parse_floats(p_list_opt) if p_list_opt is not None else (params.p,)
    out = _resolve("out", args.out, config)
    outdir = out if out and (os.path.isdir(out) or out.endswith(os.sep)) else None
    if len(p_values) > 1 and outdir is None:
        raise ValidationError(
            "a p sweep writes one file per p; point --out at an existing directory"
        )
    header = [f"sector_s{a + 1}" for a in range(params.n_levels)] + [
        "re", "im", "method", "residual",
    ]

    def sweep(p):
        pl = LiouvParams(
            params.n_levels, params.n_atoms, params.eps, params.gamma, params.gamma0, p
        )
        if sector_opt is not None:
            sectors = [_sector_from(sector_opt, pl)]
        else:
            sectors = enumerate_sectors(pl)

        def one(sec):
            try:
                return ed.full_spectrum(ed.build_sector_matrix(pl, sec))
            except ResourceLimitError as exc:
                raise ResourceLimitError(f"sector {tuple(sec.s)}: {exc}") from exc

        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                spectra = list(pool.map(one, sectors))
        else:
            spectra = [one(sec) for sec in sectors]
        results = []
        rows = []
        sector_rows = []
        for sec, res in zip(sectors, spectra):
            entry = {
                "sector": list(sec.s),
                "dim": int(res.eigenvalues.size),
                "eigenvalues": [_cnum(v) for v in res.eigenvalues],
            }
            if method == "both" and res.eigenvalues.size:
                found, unmatched, max_dev = _rg_cross_validate(
                    pl, sec, list(res.eigenvalues), tries, seed, tol
                )
                entry["rg_matched"] = len(found)
                entry["rg_unmatched"] = len(unmatched)
                entry["rg_max_dev"] = float(max_dev)
            results.append(entry)
            _, sec_rows = ed.spectra_csv_rows([res])
            rows.extend(sec_rows)
            sector_rows.append((sec, sec_rows))
        payload = {
            "command": "spectrum",
            "config": _config_record(pl, "spectrum", {"method": method}),
            "results": results,
        }
        return payload, rows, sector_rows

    if outdir is None:
        payload, rows, _ = sweep(p_values[0])
        return emit(payload, rows, header, args, config)

    index = []
    for p in p_values:
        payload, rows, sector_rows = sweep(p)
        ptag = f"{p:g}"
        merged = f"spectrum_p{ptag}.csv"
        with open(os.path.join(outdir, merged), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(_csv_text(payload, rows, header))
        files = [merged]
        for sec, sec_rows in sector_rows:
            name = f"spectrum_p{ptag}_sector_{'_'.join(str(v) for v in sec.s)}.csv"
            with open(os.path.join(outdir, name), "w", encoding="utf-8", newline="\n") as fh:
                fh.write(_csv_text(payload, sec_rows, header))
            files.append(name)
        index.append({"p": float(p), "config": payload["config"],
                      "results": payload["results"], "files": files})
    with open(os.path.join(outdir, "spectrum_index.json"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_json_text({"command": "spectrum", "sweep": index}))
    return 0


def _rg_steady_state(params, tol, tries, seed):
    L = params.n_atoms
    zero = SectorLabel((0,) * params.n_levels)
    if params.n_levels == 3:
        try:
            sol = rg.solve(rg.init_steady_state_guess(L, params.p), params, tol=tol)
            if sol.converged and abs(sol.eigenvalue) <= 1e-6 * params.gamma * L * L:
                return sol
        except (NumericError, ValidationError):
            pass
    found, _ = rg.find_sector_solutions(
        params, zero, [0.0], np.random.default_rng(seed), tries=tries, tol=tol
    )
    if 0 not in found:
        raise NumericError("no steady-state solution of the nonlinear equations found")
    return found[0]


def cmd_steady_state(args, config):
    params = build_params(args, config)
    method = _resolve("method", args.method, config, "ed")
    tol = _resolve("tol", args.tol, config)
    tries = _resolve("tries", args.tries, config, 200)
    seed = _resolve("seed", args.seed, config, 0)
    bethe_limit = _resolve("bethe_limit", args.bethe_limit, config, 5)
    results = {}
    pops_ed = None
    if method in ("ed", "both"):
        ss = ed.steady_state(params)
        pops_ed = ed.level_populations(params, ss.rho)
        results["ed"] = {
            "eigenvalue": _cnum(ss.eigenvalue),
            "degenerate": bool(ss.degenerate),
            "populations": [float(v.real) for v in pops_ed],
        }
    if method in ("rg", "both"):
        sol = _rg_steady_state(params, tol, tries, seed)
        entry = sol.to_dict()
        entry.pop("params", None)
        if params.n_atoms <= bethe_limit:
            vec, sector = bethe.build_eigenvector(sol, params)
            rho = vec / vec.sum()
            pops = ed.level_populations(params, rho)
            entry["populations"] = [float(v.real) for v in pops]
            if pops_ed is not None:
                entry["population_max_dev"] = float(np.max(np.abs(pops - pops_ed)))
        results["rg"] = entry
    if method in ("rg", "both"):
        # plot-ready spectral-parameter table; populations stay in the payload
        header = ["family", "re", "im"]
        rows = [(fam, float(re_v), float(im_v))
                for re_v, im_v, fam in rg.solutions_to_csv_rows(sol)]
    else:
        header = ["level", "population"]
        rows = [(a + 1, float(v.real)) for a, v in enumerate(pops_ed)]
    payload = {
        "command": "steady-state",
        "config": _config_record(params, "steady-state", {"method": method}),
        "results": results,
    }
    return emit(payload, rows, header, args, config)


def cmd_gap_scan(args, config):
    params = build_params(args, config)
    method = _resolve("method", args.method, config, "ed")
    tol = _resolve("tol", args.tol, config)
    jobs = _resolve("jobs", args.jobs, config, 1)
    tries = _resolve("tries", args.tries, config, 200)
    seed = _resolve("seed", args.seed, config, 0)
    atoms_list = _resolve("atoms-list", args.atoms_list, config)
    sector_opt = _resolve("sector", args.sector, config)
    sizes = _parse_ints(atoms_list) if atoms_list is not None else (params.n_atoms,)

    def one(L):
        pl = LiouvParams(
            params.n_levels, L, params.eps, params.gamma, params.gamma0, params.p
        )
        if sector_opt is not None:
            sec = _sector_from(sector_opt, pl)
            samples = meanfield.collect_gap_samples(pl, sec, [L])
            gap_per_atom = float(samples[0])
            lam = complex(gap_per_atom * L, 0.0)
            mat = ed.build_sector_matrix(pl, sec)
            anchor = complex(-1j * float(np.dot(pl.eps, sec.s)) - pl.p * pl.gamma * L)
            if mat.dim <= 12:
                vals = ed.full_spectrum(mat).eigenvalues
            else:
                vals = ed.target_eigenvalues_near(mat, anchor, count=10).eigenvalues
            lam = vals[np.argmax(vals.real)]
            return pl, sec, abs(lam.real), lam
        res = ed.dissipative_gap(pl)
        return pl, res.sector, res.gap, res.eigenvalue

    def safe(L):
        try:
            return one(L)
        except (NumericError, ResourceLimitError) as exc:
            print(f"warning: size L={L} skipped: {exc}", file=sys.stderr)
            return None

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            scans = list(pool.map(safe, sizes))
    else:
        scans = [safe(L) for L in sizes]
    results = []
    rows = []
    header = ["L", "gap", "re", "im", "sector"]
    for scan, L in zip(scans, sizes):
        if scan is None:
            continue
        pl, sec, gap, lam = scan
        entry = {
            "L": int(L),
            "gap": float(gap),
            "eigenvalue": _cnum(lam),
            "sector": list(sec.s),
        }
        if method in ("rg", "both"):
            found, unmatched, max_dev = _rg_cross_validate(
                pl, sec, [lam], tries, seed, tol
            )
            entry["rg_matched"] = len(found)
            if 0 in found:
                entry["rg_residual"] = float(found[0].residual_norm)
                entry["rg_eigenvalue_dev"] = float(max_dev)
        results.append(entry)
        rows.append((int(L), float(gap), float(lam.real), float(lam.imag),
                     " ".join(str(v) for v in sec.s)))
    payload = {
        "command": "gap-scan",
        "config": _config_record(params, "gap-scan", {"method": method}),
        "results": results,
    }
    if params.p != 0.0:
        payload["tl_gap_per_atom"] = float(-abs(params.p) * params.gamma)
    if len(results) >= 5:
        degree = _resolve("degree", args.degree, config, 2)
        fit = meanfield.gap_scaling_fit(
            [r["L"] for r in results],
            [-r["gap"] / r["L"] for r in results],
            degree=degree,
        )
        payload["fit"] = {
            "coefficients": [float(c) for c in fit.coefficients],
            "stderr": [float(s) if math.isfinite(s) else None for s in fit.stderr],
            "cond": float(fit.cond),
            "dof": int(fit.dof),
        }
    return emit(payload, rows, header, args, config)


def cmd_rg_solve(args, config):
    params = build_params(args, config)
    tol = _resolve("tol", args.tol, config)
    tries = _resolve("tries", args.tries, config, 400)
    seed = _resolve("seed", args.seed, config, 0)
    sector_opt = _resolve("sector", args.sector, config)
    if sector_opt is None:
        raise ValidationError("rg-solve needs --sector")
    sector = _sector_from(sector_opt, params)
    match = _resolve("match", args.match, config, "ed")
    results = {"sector": list(sector.s)}
    rows = []
    header = ["solution", "family", "re", "im"]
    if match == "ed":
        dim = sector_dimension(params.n_atoms, sector)
        if dim > ed.DENSE_LIMIT:
            raise ResourceLimitError(
                f"sector dimension {dim} too large to enumerate exact targets; "
                "use --match none"
            )
        mat = ed.build_sector_matrix(params, sector)
        targets = list(ed.full_spectrum(mat).eigenvalues)
        rng = np.random.default_rng(seed)
        found, unmatched = rg.find_sector_solutions(
            params, sector, targets, rng, tries=tries, tol=tol
        )
        sols = [found[i] for i in sorted(found)]
        results["targets"] = [_cnum(t) for t in targets]
        results["matched"] = len(found)
        results["unmatched"] = len(unmatched)
        results["complete"] = not unmatched
    else:
        rng = np.random.default_rng(seed)
        seen = {}
        parks = rg.park_options(params.n_atoms, sector)
        free_park, singular = parks[0], parks[1:]
        styles = ["gauss", "circle", "wide"]
        for attempt in range(tries):
            if singular and attempt % 2 == 1:
                idx = attempt // 2
                park = singular[idx % len(singular)]
                style = styles[(idx // len(singular)) % 3]
            else:
                idx = attempt // 2 if singular else attempt
                park = free_park
                style = styles[idx % 3]
            guess = rg.random_guess(params, sector, rng, style=style, park=park)
            try:
                sol = rg.solve(guess, params, tol=tol)
            except NumericError:
                continue
            if sol.converged:
                seen.setdefault(rg.solution_signature(sol), sol)
        sols = [seen[k] for k in sorted(seen)]
        results["distinct"] = len(sols)
    results["solutions"] = [s.to_dict() for s in sols]
    for n, sol in enumerate(sols):
        for re_v, im_v, fam in rg.solutions_to_csv_rows(sol):
            rows.append((n, fam, float(re_v), float(im_v)))
    payload = {
        "command": "rg-solve",
        "config": _config_record(params, "rg-solve", {"match": match, "seed": seed}),
        "results": results,
    }
    return emit(payload, rows, header, args, config)


def cmd_oracle_check(args, config):
    params = build_params(args, config)
    tol = _resolve("tol", args.tol, config, 1e-10)
    full = ed.build_oracle_matrix(params)
    scale = params.gamma * (params.n_atoms**2 + (params.n_levels - 1) * params.n_atoms)
    worst = 0.0
    rows = []
    header = ["sector", "dim", "max_dev"]
    results = []
    for sec in enumerate_sectors(params):
        block = ed.oracle_sector_matrix(params, sec, full=full).toarray()
        fast = ed.build_sector_matrix(params, sec).toarray()
        dev = float(np.max(np.abs(block - fast))) if block.size else 0.0
        worst = max(worst, dev)
        results.append({"sector": list(sec.s), "dim": int(block.shape[0]), "max_dev": dev})
        rows.append((" ".join(str(v) for v in sec.s), int(block.shape[0]), dev))
    off = ed.offblock_mass(params, full=full)
    comm = ed.weak_symmetry_max_commutator(params, full=full)
    trace_dev = ed.trace_functional_deviation(params, full=full)
    if params.p != 0.0 and abs(params.p) < 1.0:
        integ = ed.integrability_check(params)
        integ_comm, integ_rec = integ.commutator, integ.reconstruction
    else:
        integ_comm = integ_rec = None
    if getattr(args, "dump_matrix", None):
        with open(args.dump_matrix, "w") as fh:
            for sec in enumerate_sectors(params):
                fh.write(f"# sector {' '.join(str(v) for v in sec.s)}\n")
                fh.write(ed.matrix_to_coo_text(ed.build_sector_matrix(params, sec)))
    passed = (
        worst <= tol * scale
        and off <= tol * scale
        and comm == 0.0
        and trace_dev <= tol * scale
        and (integ_comm is None or integ_comm <= tol * scale)
        and (integ_rec is None or integ_rec <= tol * scale)
    )
    payload = {
        "command": "oracle-check",
        "config": _config_record(params, "oracle-check", {"tol": tol}),
        "results": {
            "sectors": results,
            "max_dev": worst,
            "offblock_mass": float(off),
            "symmetry_commutator": float(comm),
            "trace_functional": float(trace_dev),
            "integrals_commutator": integ_comm,
            "integrals_reconstruction": integ_rec,
            "passed": bool(passed),
        },
    }
    code = emit(payload, rows, header, args, config)
    if not passed:
        raise NumericError(
            f"sector assembly deviates from the definition: max dev {worst:.3g}, "
            f"off-block mass {off:.3g}, symmetry commutator {comm:.3g}"
        )
    return code


def cmd_evolve(args, config):
    params = build_params(args, config)
    t0 = _resolve("t0", args.t0, config, 0.0)
    t1 = _resolve("t1", args.t1, config, 10.0)
    steps = _resolve("steps", args.steps, config, 101)
    if steps < 2 or t1 <= t0:
        raise ValidationError("need steps >= 2 and t1 > t0")
    rho_spec = _resolve("rho0", args.rho0, config, "mixed")
    obs_spec = _resolve("observable", args.observable, config, "level:1")
    if rho_spec == "mixed":
        rho0 = ed.rho0_mixed(params)
    elif rho_spec.startswith("level:"):
        rho0 = ed.rho0_level(params, int(rho_spec.split(":", 1)[1]))
    else:
        raise ValidationError(f"unknown initial state {rho_spec!r}; use 'mixed' or 'level:<a>'")
    if obs_spec.startswith("level:"):
        obs = ed.level_occupation_operator(params, int(obs_spec.split(":", 1)[1]))
    else:
        raise ValidationError(f"unknown observable {obs_spec!r}; use 'level:<a>'")
    times = np.linspace(t0, t1, steps)
    values = ed.evolve_expectation(params, rho0, obs, times)
    rows = [(float(t), float(v.real), float(v.imag)) for t, v in zip(times, values)]
    payload = {
        "command": "evolve",
        "config": _config_record(
            params, "evolve", {"rho0": rho_spec, "observable": obs_spec}
        ),
        "results": {"times": [float(t) for t in times],
                    "values": [_cnum(v) for v in values]},
    }
    return emit(payload, rows, ["t", "re", "im"], args, config)


# ---------------------------------------------------------------------------
# parser


def _add_common(sub):
    sub.add_argument("--config", help="JSON file with default option values")
    sub.add_argument("--out", help="output path (stdout when omitted)")
    sub.add_argument("--format", choices=["json", "csv"], default=None,
                     help="output format; inferred from --out extension when omitted")
    sub.add_argument("--levels", type=int, default=None, help="number of levels N")
    sub.add_argument("--atoms", type=int, default=None, help="number of atoms L")
    sub.add_argument("--eps", default=None, help="level energies, comma separated")
    sub.add_argument("--gamma", type=float, default=None, help="collective rate")
    sub.add_argument("--gamma0", type=float, default=None, help="dephasing rate")
    sub.add_argument("--p", type=float, default=None, help="pump asymmetry in (-1, 1)")
    sub.add_argument("--method", choices=["ed", "rg", "both"], default=None)
    sub.add_argument("--tol", type=float, default=None, help="solver tolerance")
    sub.add_argument("--jobs", type=int, default=None, help="parallel workers")
    sub.add_argument("--seed", type=int, default=None, help="random seed for searches")
    sub.add_argument("--tries", type=int, default=None, help="multi-start attempts")


def make_parser():
    parser = argparse.ArgumentParser(
        prog="liouvrg",
        description="exact spectra, steady states and gaps of collective Liouvillians",
    )
    sub = parser.add_subparsers(dest="cmd", required=True)

    sp = sub.add_parser("spectrum", help="sector spectra")
    _add_common(sp)
    sp.add_argument("--sector", default=None, help="restrict to one sector, e.g. 1,-1,0")
    sp.add_argument("--p-list", default=None, dest="p_list",
                    help="comma separated p values; needs --out pointing at a directory")
    sp.set_defaults(func=cmd_spectrum)

    ss = sub.add_parser("steady-state", help="steady-state populations")
    _add_common(ss)
    ss.add_argument("--bethe-limit", type=int, default=None, dest="bethe_limit",
                    help="largest L for eigenvector-based populations on the rg route")
    ss.set_defaults(func=cmd_steady_state)

    gs = sub.add_parser("gap-scan", help="dissipative gap across sizes")
    _add_common(gs)
    gs.add_argument("--atoms-list", default=None, dest="atoms_list",
                    help="comma separated system sizes")
    gs.add_argument("--sector", default=None, help="restrict the gap search to one sector")
    gs.add_argument("--degree", type=int, default=None,
                    help="polynomial degree in 1/L for the size fit (default 2)")
    gs.set_defaults(func=cmd_gap_scan)

    rs = sub.add_parser("rg-solve", help="solve the spectral equations in a sector")
    _add_common(rs)
    rs.add_argument("--sector", default=None, help="sector label, e.g. 0,0,0")
    rs.add_argument("--match", choices=["ed", "none"], default=None,
                    help="match solutions against exact eigenvalues (default ed)")
    rs.set_defaults(func=cmd_rg_solve)

    oc = sub.add_parser("oracle-check", help="verify the sector assembly")
    _add_common(oc)
    oc.add_argument("--dump-matrix", default=None, metavar="PATH",
                    help="also write every sector matrix as a coordinate list")
    oc.set_defaults(func=cmd_oracle_check)

    ev = sub.add_parser("evolve", help="observable dynamics")
    _add_common(ev)
    ev.add_argument("--rho0", default=None, help="initial state: mixed or level:<a>")
    ev.add_argument("--observable", default=None, help="observable: level:<a>")
    ev.add_argument("--t0", type=float, default=None)
    ev.add_argument("--t1", type=float, default=None)
    ev.add_argument("--steps", type=int, default=None)
    ev.set_defaults(func=cmd_evolve)
    return parser


def main(argv=None):
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_config(getattr(args, "config", None))
        return args.func(args, config)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ResourceLimitError as exc:
        print(f"resource limit: {exc}", file=sys.stderr)
        return 4
    except NumericError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
