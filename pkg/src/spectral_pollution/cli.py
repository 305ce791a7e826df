"""Batch driver: ``run`` Galerkin sequences or ``probe`` two-dimensional tests.

Both subcommands read one JSON configuration, write a CSV table and a JSON
report into the output directory and exit with

    0  PASS
    1  FAIL (detection contradicts the predicted set, or a probe bound fails)
    2  configuration error
    3  numerical error

See the README for the configuration schema.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from .errors import LabError, NoTheoryError, NumericalError, ValidationError

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3


class ConfigError(ValidationError):
    """Malformed or inconsistent experiment configuration."""


# --------------------------------------------------------------------------
# Config parsing
# --------------------------------------------------------------------------

TOP_RUN = {"model", "scheme", "sizes", "detector", "output", "seed", "threads"}
TOP_PROBE = {"probe", "output", "seed", "threads"}
OUTPUT_KEYS = {"dir", "table", "report"}
DETECTOR_KEYS = {"cluster", "drift", "true", "margin"}


def _block(cfg, name, allowed, required=(), where="config"):
    if not isinstance(cfg, dict):
        raise ConfigError(f"{where}: expected an object, got {type(cfg).__name__}")
    unknown = sorted(set(cfg) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {unknown}")
    missing = [k for k in required if k not in cfg]
    if missing:
        raise ConfigError(f"{where}: missing key(s) {missing}")
    return cfg


def _num(v, where, integer=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {v!r}")
    if integer and int(v) != v:
        raise ConfigError(f"{where}: expected an integer, got {v!r}")
    return int(v) if integer else float(v)


def _sizes(v, where="sizes"):
    if not isinstance(v, list) or not v:
        raise ConfigError(f"{where}: expected a nonempty list of integers")
    return [_num(s, where, integer=True) for s in v]


def load_config(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return cfg


def _theta(cfg):
    from .toy import ThetaRule

    cfg = _block(cfg, "theta", {"kind", "alpha", "value"}, ("kind",), "model.theta")
    kw = {"kind": cfg["kind"]}
    for k in ("alpha", "value"):
        if k in cfg:
            kw[k] = _num(cfg[k], f"model.theta.{k}")
    return ThetaRule(**kw)


def _potential(cfg):
    from .dirac import PotentialSpec

    cfg = _block(cfg, "potential", {"kind", "v0", "width", "kappa_c", "r_cut"}, ("kind",),
                 "model.potential")
    kind = cfg["kind"]
    get = lambda k, d=None: _num(cfg[k], f"model.potential.{k}") if k in cfg else d  # noqa: E731
    if kind == "zero":
        return PotentialSpec.zero()
    if kind in ("gaussian_well", "gaussian_bump"):
        return getattr(PotentialSpec, kind)(get("v0"), get("width", 1.0))
    if kind == "coulomb":
        return PotentialSpec.coulomb(get("kappa_c"))
    if kind == "smeared_coulomb":
        return PotentialSpec.smeared_coulomb(get("kappa_c"), get("r_cut"))
    raise ConfigError(f"model.potential.kind: unknown kind {kind!r}")


def _scheme(cfg):
    from .dirac import SchemeSpec

    cfg = _block(cfg, "scheme", {"kind", "epsilon", "angles", "ref_factor"}, ("kind",), "scheme")
    kw = {"kind": cfg["kind"]}
    if "epsilon" in cfg:
        kw["epsilon"] = _num(cfg["epsilon"], "scheme.epsilon")
    if "ref_factor" in cfg:
        kw["ref_factor"] = _num(cfg["ref_factor"], "scheme.ref_factor", integer=True)
    if "angles" in cfg:
        if not isinstance(cfg["angles"], list):
            raise ConfigError("scheme.angles: expected a list")
        kw["angles"] = tuple(_num(a, "scheme.angles") for a in cfg["angles"])
    return SchemeSpec(**kw)


def _dirac_model(cfg, size):
    from .bases import DEFAULT_ORDER, DEFAULT_R_MAX
    from .dirac import DiracChannelModel

    cfg = _block(cfg, "model", {"type", "kappa_d", "potential", "order", "r_max", "graded"},
                 ("type", "potential"), "model")
    graded = cfg.get("graded", True)
    if not isinstance(graded, bool):
        raise ConfigError("model.graded: expected true or false")
    return DiracChannelModel.for_size(
        size,
        kappa_d=_num(cfg.get("kappa_d", -1), "model.kappa_d", integer=True),
        potential=_potential(cfg["potential"]),
        order=_num(cfg.get("order", DEFAULT_ORDER), "model.order", integer=True),
        r_max=_num(cfg.get("r_max", DEFAULT_R_MAX), "model.r_max"),
        graded=graded,
    )


def _periodic_model(cfg):
    from .periodic import DefectSpec, PeriodicModel

    cfg = _block(cfg, "model", {"type", "a", "vper", "defect", "cutoff", "n_xi", "n_above",
                                "reference_cells"}, ("type",), "model")
    kw = {}
    if "a" in cfg:
        kw["a"] = _num(cfg["a"], "model.a")
    if "vper" in cfg:
        v = cfg["vper"]
        if not isinstance(v, dict):
            raise ConfigError("model.vper: expected an object mapping harmonic index to coefficient")
        try:
            kw["vper_coeffs"] = {int(j): _num(c, f"model.vper.{j}") for j, c in v.items()}
        except ValueError as exc:
            raise ConfigError(f"model.vper: harmonic indices must be integers ({exc})") from exc
    if "defect" in cfg:
        d = _block(cfg["defect"], "defect", {"kind", "amplitude", "width"}, ("kind",),
                   "model.defect")
        dkw = {"kind": d["kind"]}
        for k in ("amplitude", "width"):
            if k in d:
                dkw[k] = _num(d[k], f"model.defect.{k}")
        kw["defect"] = DefectSpec(**dkw)
    if "cutoff" in cfg:
        kw["planewave_cutoff"] = _num(cfg["cutoff"], "model.cutoff", integer=True)
    extra = {k: _num(cfg[k], f"model.{k}", integer=True)
             for k in ("n_xi", "n_above", "reference_cells") if k in cfg}
    return PeriodicModel(**kw), extra


def _detector(cfg):
    from .lab import DetectorParams

    if cfg is None:
        return DetectorParams()
    cfg = _block(cfg, "detector", DETECTOR_KEYS, (), "detector")
    return DetectorParams(**{k: _num(v, f"detector.{k}") for k, v in cfg.items()})


def _output(cfg, out_dir, table_default, report_default):
    cfg = _block(cfg or {}, "output", OUTPUT_KEYS, (), "output")
    d = Path(out_dir) if out_dir is not None else Path(cfg.get("dir", "."))
    names = {"table": cfg.get("table", table_default), "report": cfg.get("report", report_default)}
    for k, v in names.items():
        if not isinstance(v, str) or not v or os.sep in v:
            raise ConfigError(f"output.{k}: expected a plain file name")
    return d, names


def build_run(cfg, sizes_override=None, threads=None):
    """Problem, sizes and detector parameters from a ``run`` configuration."""
    from .lab import dirac_problem, periodic_problem, toy_problem
    from .toy import ToyRotatedModel

    _block(cfg, "config", TOP_RUN, ("model", "sizes"))
    sizes = sizes_override if sizes_override is not None else _sizes(cfg["sizes"])
    model = cfg["model"]
    if not isinstance(model, dict) or "type" not in model:
        raise ConfigError("model: expected an object with a 'type' key")
    kind = model["type"]
    if kind == "toy":
        _block(model, "model", {"type", "variant", "theta"}, ("type",), "model")
        if "scheme" in cfg:
            raise ConfigError("scheme: toy models take no scheme block")
        theta = _theta(model.get("theta", {"kind": "inv_sqrt_2n"}))
        m = ToyRotatedModel(model.get("variant", "bounded_below"), theta, 1)
        return toy_problem(m), sizes
    if kind == "dirac":
        if "scheme" not in cfg:
            raise ConfigError("config: dirac runs need a scheme block")
        scheme = _scheme(cfg["scheme"])
        return dirac_problem(_dirac_model(model, max(sizes)), scheme), sizes
    if kind == "periodic":
        if "scheme" in cfg:
            raise ConfigError("scheme: periodic runs always use the Wannier splitting")
        m, extra = _periodic_model(model)
        prob = periodic_problem(m, max_translates=max(sizes), n_xi=extra.get("n_xi"),
                                n_above=extra.get("n_above"),
                                reference_cells=extra.get("reference_cells", 64),
                                threads=threads)
        return prob, sizes
    raise ConfigError(f"model.type: unknown type {kind!r}")


# --------------------------------------------------------------------------
# Output
# --------------------------------------------------------------------------


def _fmt(x) -> str:
    return repr(float(x))


def spectra_table(run) -> str:
    lines = ["size,index,value"]
    for n, vals in zip(run.sizes, run.spectra):
        lines.extend(f"{n},{i},{_fmt(v)}" for i, v in enumerate(vals))
    return "\n".join(lines) + "\n"


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if np.isfinite(x) else str(x)
    if isinstance(x, np.integer):
        return int(x)
    return x


def dump_report(doc: dict) -> str:
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"


def write_atomic(files: dict[Path, str]) -> None:
    """Write every file through a temporary sibling and rename it into place."""
    staged = []
    try:
        for path, text in files.items():
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
            with os.fdopen(fd, "w", newline="\n") as fh:
                fh.write(text)
            staged.append((tmp, path))
        for tmp, path in staged:
            os.replace(tmp, path)
    finally:
        for tmp, _ in staged:
            if os.path.exists(tmp):
                os.unlink(tmp)


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------


def cmd_run(cfg: dict, sizes=None, seed=None, out_dir=None, threads=None) -> int:
    from .lab import compare_report, detect_spurious, run_sequence

    threads = threads if threads is not None else cfg.get("threads")
    if threads is not None:
        threads = _num(threads, "threads", integer=True)
    problem, sizes = build_run(cfg, sizes, threads)
    params = _detector(cfg.get("detector"))
    dest, names = _output(cfg.get("output"), out_dir, "spectra.csv", "report.json")
    seed = seed if seed is not None else cfg.get("seed", 0)
    run = run_sequence(problem, sizes, threads)
    rep = detect_spurious(run, problem.spectrum, params, problem.predicted)
    doc = {"command": "run", "seed": seed, "label": problem.label, "report": rep.to_dict()}
    if problem.predicted is None:
        doc["comparison"] = {"verdict": "NO_THEORY",
                             "provenance": "no closed-form prediction covers this pair"}
        code = EXIT_PASS
    else:
        cmp = compare_report(rep)
        doc["comparison"] = cmp.to_dict()
        code = EXIT_PASS if cmp.passed else EXIT_FAIL
    write_atomic({dest / names["table"]: spectra_table(run),
                  dest / names["report"]: dump_report(doc)})
    return code


PROBE_KEYS = {
    "mu2": {"kind", "scheme", "epsilon", "kappa_c", "samples", "size", "r_max", "kappa_d"},
    "bump": {"kind", "kappa_c", "ns", "delta", "size"},
    "hardy": {"kind", "kappas", "samples", "size", "r_max", "m_param", "ground_state"},
}


def _probe_mu2(cfg, rng):
    from .dirac import DiracChannelModel, PotentialSpec, SchemeSpec
    from .dirac_probes import atomic_balance_mu2_bound, mu2_probe, random_trial_coefficients

    kappa = _num(cfg.get("kappa_c", 0.5), "probe.kappa_c")
    kind = cfg.get("scheme", "atomic_balance")
    scheme = SchemeSpec(kind, **({"epsilon": _num(cfg["epsilon"], "probe.epsilon")}
                                 if "epsilon" in cfg else {}))
    model = DiracChannelModel.for_size(
        _num(cfg.get("size", 200), "probe.size", integer=True),
        kappa_d=_num(cfg.get("kappa_d", -1), "probe.kappa_d", integer=True),
        potential=PotentialSpec.coulomb(kappa),
        r_max=_num(cfg.get("r_max", 80.0), "probe.r_max"),
    )
    n = _num(cfg.get("samples", 200), "probe.samples", integer=True)
    rows = []
    for i in range(n):
        mu1, mu2 = mu2_probe(model, scheme, random_trial_coefficients(model.basis, rng))
        rows.append((i, mu1, mu2))
    mu2s = np.array([r[2] for r in rows])
    summary = {"scheme": scheme.describe(), "kappa_c": kappa, "samples": n,
               "min_mu2": float(mu2s.min())}
    ok = True
    if scheme.kind == "atomic_balance":
        bound = atomic_balance_mu2_bound(kappa)
        summary["bound"] = bound
        summary["provenance"] = "Lemma bound for atomic balance: mu2 >= 1 - 2(1-s)/(1+s)"
        ok = bool(mu2s.min() >= bound - 1e-9)
    return "sample,mu1,mu2", rows, summary, ok


def _probe_bump(cfg, rng):
    from .dirac_probes import bump_sweep

    kappa = _num(cfg.get("kappa_c", 0.5), "probe.kappa_c")
    ns = tuple(_sizes(cfg.get("ns", [1, 2, 4, 8]), "probe.ns"))
    delta = cfg.get("delta")
    delta = None if delta is None else _num(delta, "probe.delta")
    res = bump_sweep(kappa, ns, delta, _num(cfg.get("size", 300), "probe.size", integer=True))
    rows = [(n, mu1, mu2, det) for n, mu1, mu2, det in res["rows"]]
    mu2 = np.array([r[2] for r in rows])
    decreasing = bool(np.all(np.diff(mu2) < 0))
    ok = decreasing and res["quad_coef"] > 0
    summary = {"kappa_c": kappa, "delta": res["delta"], "quad_coef": res["quad_coef"],
               "r2": res["r2"], "mu2_strictly_decreasing": decreasing,
               "provenance": "kinetic balance with Coulomb: mu2 of the two-scale bump -> -inf"}
    return "n,mu1,mu2,det", rows, summary, ok


def _probe_hardy(cfg, rng):
    from .dirac import DiracChannelModel, PotentialSpec, SchemeSpec
    from .dirac_probes import (
        ChannelSample,
        ground_upper_component,
        hardy_mass,
        hardy_terms,
        random_trial_coefficients,
    )

    kappas = cfg.get("kappas", [0.3, 0.6, 0.86])
    if not isinstance(kappas, list) or not kappas:
        raise ConfigError("probe.kappas: expected a nonempty list")
    kappas = [_num(k, "probe.kappas") for k in kappas]
    n = _num(cfg.get("samples", 50), "probe.samples", integer=True)
    size = _num(cfg.get("size", 200), "probe.size", integer=True)
    r_max = _num(cfg.get("r_max", 80.0), "probe.r_max")
    m_param = cfg.get("m_param")
    model = DiracChannelModel.for_size(size, -1, PotentialSpec.zero(), r_max=r_max)
    rows, ok, worst = [], True, np.inf
    for kappa in kappas:
        m = hardy_mass(kappa) if m_param is None else _num(m_param, "probe.m_param")
        for i in range(n):
            g = ChannelSample.from_spline(model.basis, random_trial_coefficients(model.basis, rng))
            lhs, rhs = hardy_terms(g, kappa, m)
            gap = lhs - rhs
            rel = gap / lhs
            worst = min(worst, rel)
            ok &= bool(gap >= -1e-8 * lhs)
            rows.append((kappa, i, gap, rel))
    summary = {"kappas": kappas, "samples": n, "min_relative_gap": float(worst),
               "provenance": "Hardy-type inequality for the upper spinor component"}
    if cfg.get("ground_state", True):
        eq = []
        for kappa in kappas:
            cm = DiracChannelModel.for_size(size, -1, PotentialSpec.coulomb(kappa), r_max=r_max)
            e, g = ground_upper_component(cm, SchemeSpec("free_split"))
            lhs, rhs = hardy_terms(g, kappa, hardy_mass(kappa))
            eq.append({"kappa": kappa, "energy": e, "relative_gap": (lhs - rhs) / lhs})
            ok &= bool(abs(lhs - rhs) <= 1e-3 * lhs)
        summary["ground_state"] = eq
    return "kappa,sample,gap,relative_gap", rows, summary, ok


PROBES = {"mu2": _probe_mu2, "bump": _probe_bump, "hardy": _probe_hardy}


def cmd_probe(cfg: dict, seed=None, out_dir=None) -> int:
    _block(cfg, "config", TOP_PROBE, ("probe",))
    probe = cfg["probe"]
    if not isinstance(probe, dict) or probe.get("kind") not in PROBES:
        raise ConfigError(f"probe.kind: expected one of {sorted(PROBES)}")
    _block(probe, "probe", PROBE_KEYS[probe["kind"]], ("kind",), "probe")
    dest, names = _output(cfg.get("output"), out_dir, "probe.csv", "probe_report.json")
    seed = seed if seed is not None else _num(cfg.get("seed", 0), "seed", integer=True)
    rng = np.random.default_rng(seed)
    header, rows, summary, ok = PROBES[probe["kind"]](probe, rng)
    lines = [header] + [",".join(str(v) if isinstance(v, (int, np.integer)) else _fmt(v)
                                 for v in r) for r in rows]
    doc = {"command": "probe", "kind": probe["kind"], "seed": seed, "summary": summary,
           "verdict": "PASS" if ok else "FAIL"}
    write_atomic({dest / names["table"]: "\n".join(lines) + "\n",
                  dest / names["report"]: dump_report(doc)})
    return EXIT_PASS if ok else EXIT_FAIL


# --------------------------------------------------------------------------
# Entry point
# --------------------------------------------------------------------------


def _parse_sizes(text):
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad size list {text!r}") from exc


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spectral-pollution", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("run", "probe"):
        sp = sub.add_parser(name)
        sp.add_argument("config", help="JSON experiment configuration")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out-dir", default=None)
        sp.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: $POLLUTION_LAB_THREADS or CPU count)")
        if name == "run":
            sp.add_argument("--sizes", type=_parse_sizes, default=None,
                            help="comma-separated sizes overriding the config")
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.command == "run":
            return cmd_run(cfg, args.sizes, args.seed, args.out_dir, args.threads)
        if args.threads is not None:
            os.environ["POLLUTION_LAB_THREADS"] = str(args.threads)
        return cmd_probe(cfg, args.seed, args.out_dir)
    except (ValidationError, NoTheoryError, TypeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except LabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
