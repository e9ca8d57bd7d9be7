"""Seeded experiment runner: ``lentparticle {isotropic,sde,suite}``.

Configuration is TOML with a strict schema.  Precedence, lowest first:
built-in defaults, the config file, ``LENT_*`` environment variables, command
line flags.  A seed is mandatory.  Outputs are CSV/JSON written in canonical
order, so a rerun with the same configuration and seed is byte-identical.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import density, lent, sde
from .config_space import (DiracLevy, PowerLawLevy, ProcessSpec, child_seed, configuration,
                           isotropic_attribute, make_rng, radial_attribute)
from .errors import ConfigError, LentParticleError
from .marks import CircleMarkSpace

log = logging.getLogger("lentparticle")

# section -> key -> (type, default); None default means optional
SCHEMA = {
    "isotropic": {
        "horizon": (float, 1.0),
        "levy": (str, "power"),
        "exponent": (float, 1.5),
        "upper": (float, 1.0),
        "scale": (float, 1.0),
        "atoms": (list, [1.0]),
        "weights": (list, [5.0]),
        "truncation": (float, 1e-3),
        "truncations": (list, [0.1, 0.01, 0.001]),
        "n_samples": (int, 1000),
        "threshold": (float, 1e-10),
        "kde_samples": (int, 100000),
        "kde_bandwidth": (float, None),
        "grid_size": (int, 61),
        "grid_extent": (float, 3.0),
        "isotropy_radii": (list, [0.5, 1.0]),
        "n_angles": (int, 64),
        "isotropy_tol": (float, 0.1),
        "oracle_checks": (int, 100),
        "inject": (list, None),
    },
    "sde": {
        "preset": (str, "linear"),
        "params": (dict, {}),
        "horizon": (float, 1.0),
        "exponent": (float, 1.5),
        "upper": (float, 1.0),
        "truncation": (float, 0.05),
        "t": (float, 1.0),
        "n_steps": (int, 64),
        "n_samples": (int, 50),
        "rank_tol": (float, 1e-10),
        "refinement_steps": (list, [16, 32, 64, 128, 256, 512]),
        "refinement_paths": (int, 32),
        "lemma3_paths": (int, 2000),
        "lemma3_decades": (int, 4),
        "prop4_sequences": (int, 20),
        "prop4_length": (int, 25),
    },
    "suite": {
        "n_configs": (int, 100),
        "max_points": (int, 8),
        "isometry_configs": (int, 3),
        "isometry_draws": (int, 100000),
        "negative_control": (str, "none"),
    },
}

POSITIVE = {"horizon", "upper", "truncation", "n_samples", "threshold", "kde_samples", "kde_bandwidth",
            "grid_size", "grid_extent", "n_angles", "isotropy_tol", "t", "n_steps", "rank_tol",
            "lemma3_paths", "lemma3_decades", "prop4_sequences", "prop4_length", "n_configs",
            "max_points", "refinement_paths", "isometry_configs", "isometry_draws", "oracle_checks", "scale"}


@dataclass
class ExperimentConfig:
    kind: str
    seed: int
    out: Path
    threads: int = 1
    sections: dict = field(default_factory=dict)

    def __getitem__(self, section):
        return self.sections[section]


def _coerce(section, key, value, typ):
    where = f"[{section}] {key}"
    if typ is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        value = float(value)
        if not math.isfinite(value):
            raise ConfigError(f"{where}: must be finite")
    elif typ is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
    elif not isinstance(value, typ):
        raise ConfigError(f"{where}: expected {typ.__name__}, got {value!r}")
    if key in POSITIVE and not value > 0:
        raise ConfigError(f"{where}: must be strictly positive, got {value!r}")
    return value


def _section(name, raw, active=True):
    schema = SCHEMA[name]
    raw = raw or {}
    if not isinstance(raw, dict):
        raise ConfigError(f"[{name}] must be a table")
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(f"[{name}] unknown key(s): {', '.join(unknown)}")
    if not raw and active:
        log.info("section [%s] empty or absent: defaults applied", name)
    out = {}
    for key, (typ, default) in schema.items():
        if key in raw:
            out[key] = _coerce(name, key, raw[key], typ)
        else:
            out[key] = default
    return out


def parse_config(text: str, kind: str, seed=None, out=None, threads=None, env=None) -> ExperimentConfig:
    """Validate a TOML document and apply environment and flag overrides."""
    env = os.environ if env is None else env
    try:
        doc = tomllib.loads(text) if text else {}
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"TOML syntax error: {exc}") from None
    top_keys = {"seed", "out", "threads"} | set(SCHEMA)
    unknown = sorted(set(doc) - top_keys)
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    sections = {name: _section(name, doc.get(name), name == kind) for name in SCHEMA}

    def pick(name, flag, cast):
        value = doc.get(name)
        if f"LENT_{name.upper()}" in env:
            value = env[f"LENT_{name.upper()}"]
        if flag is not None:
            value = flag
        if value is None:
            return None
        try:
            return cast(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{name}: cannot interpret {value!r}") from None

    seed_value = pick("seed", seed, int)
    if seed_value is None:
        raise ConfigError("a seed is required (config 'seed', LENT_SEED or --seed)")
    if not 0 <= seed_value < 2 ** 64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    threads_value = pick("threads", threads, int) or 1
    if threads_value < 1:
        raise ConfigError("threads must be at least 1")
    out_value = pick("out", out, Path) or Path("lent_out")
    cfg = ExperimentConfig(kind, seed_value, out_value, threads_value, sections)
    _validate_kind(cfg)
    return cfg


def _isotropic_spec(s) -> ProcessSpec:
    if s["levy"] == "power":
        levy = PowerLawLevy(s["exponent"], s["upper"], s["scale"])
    elif s["levy"] == "dirac":
        if len(s["atoms"]) != len(s["weights"]) or not s["atoms"]:
            raise ConfigError("[isotropic] atoms and weights must be non-empty and of equal length")
        try:
            levy = DiracLevy(tuple(s["atoms"]), tuple(s["weights"]))
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"[isotropic] atoms/weights: {exc}") from None
    else:
        raise ConfigError(f"[isotropic] levy: expected 'power' or 'dirac', got {s['levy']!r}")
    return ProcessSpec(s["horizon"], levy, s["truncation"], radial_attribute)


def _sde_coeffs(s):
    try:
        return sde.preset(s["preset"], **s["params"])
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"[sde] preset/params: {exc}") from None


def _sde_spec(s, dim) -> ProcessSpec:
    return ProcessSpec(s["horizon"], PowerLawLevy(s["exponent"], s["upper"]), s["truncation"],
                       isotropic_attribute(dim))


def _validate_kind(cfg: ExperimentConfig):
    if cfg.kind == "isotropic":
        s = cfg["isotropic"]
        spec = _isotropic_spec(s)
        for eps in [s["truncation"]] + list(s["truncations"]):
            if not (isinstance(eps, (int, float)) and eps > 0):
                raise ConfigError(f"[isotropic] truncations: invalid level {eps!r}")
            if not spec.levy.truncated_mass(eps) > 0:
                raise ConfigError(f"[isotropic] truncation={eps}: jump measure has zero mass above it")
        for row in s["inject"] or []:
            if not (isinstance(row, list) and len(row) == 3):
                raise ConfigError("[isotropic] inject: rows must be [time, radius, angle]")
    elif cfg.kind == "sde":
        s = cfg["sde"]
        coeffs = _sde_coeffs(s)
        if not _sde_spec(s, coeffs.dim).truncated_mass > 0:
            raise ConfigError(f"[sde] truncation={s['truncation']}: jump measure has zero mass above it")
        if any(not isinstance(n, int) or n < 2 for n in s["refinement_steps"]):
            raise ConfigError("[sde] refinement_steps: integers >= 2 required")
        steps = sorted(s["refinement_steps"])
        if len(steps) < 2 or any(b != 2 * a for a, b in zip(steps, steps[1:])):
            raise ConfigError("[sde] refinement_steps: need a doubling sequence such as [32, 64, 128]")
    elif cfg.kind == "suite":
        if cfg["suite"]["negative_control"] not in ("none", "wrong_sign"):
            raise ConfigError("[suite] negative_control: expected 'none' or 'wrong_sign'")
    else:
        raise ConfigError(f"unknown experiment kind {cfg.kind!r}")


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def _write(out: Path, name: str, text: str) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(text, encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# isotropic
# ---------------------------------------------------------------------------

def run_isotropic(cfg: ExperimentConfig) -> dict:
    """Nondegeneracy survey, KDE grid, isotropy report and oracle log for planar isotropic jumps."""
    s = cfg["isotropic"]
    spec = _isotropic_spec(s)
    space = CircleMarkSpace()
    t = spec.horizon
    gamma_fn = lambda w: density.isotropic_gamma(w, t)
    levels = sorted(set([s["truncation"]] + list(s["truncations"])), reverse=True)
    reports = density.survey_truncations(None, spec, space, levels, s["n_samples"], s["threshold"],
                                         child_seed(cfg.seed, 0), gamma_fn, cfg.threads)
    rows = []
    for rep in reports:
        for i in range(rep.n_samples):
            rows.append([str(i), rep.truncation, int(rep.counts[i]), rep.dets[i], rep.min_eigenvalues[i],
                         int(rep.dets[i] > s["threshold"])])
    if s["inject"]:
        w = configuration([(tt, r, th) for tt, r, th in s["inject"]], "circle", t)
        G = gamma_fn(w)
        pairs = [density.det_lower_bound(p, q) for i, p in enumerate(w.points) for q in w.points[i + 1:]]
        log.info("injected configuration: det=%r, best pair bound=%r", density.det2(G), max(pairs, default=0.0))
        rows.append(["injected", float("nan"), len(w), density.det2(G), float(np.linalg.eigvalsh(G)[0]),
                     int(density.det2(G) > s["threshold"])])
    files = {"survey.csv": _csv(["replica", "truncation", "n_points", "det", "min_eig", "nondegenerate"], rows)}
    summary = [dict(rep.to_dict(), truncated_mass=spec.levy.truncated_mass(rep.truncation),
                    poisson_two_point=density.poisson_two_point_bound(
                        spec.horizon * spec.levy.truncated_mass(rep.truncation)))
               for rep in reports]
    files["survey_summary.json"] = _json(summary)

    samples = density.sample_isotropic_endpoint(spec, s["kde_samples"], child_seed(cfg.seed, 1))
    est = density.kde_estimate(samples, s["kde_bandwidth"])
    ext = s["grid_extent"]
    xs, ys, vals = est.grid((-ext, -ext), (ext, ext), s["grid_size"])
    files["kde_grid.csv"] = density.grid_csv(xs, ys, vals)
    iso = density.isotropy_check(est, s["isotropy_radii"], s["n_angles"], s["isotropy_tol"])
    files["isotropy.json"] = _json(dict(iso.to_dict(), bandwidth=est.bandwidth.tolist(),
                                        n_samples=int(s["kde_samples"])))

    F = lent.make_polar_jump_sum(until=t)
    lines = []
    worst = 0.0
    for i in range(s["oracle_checks"]):
        w = density.simulate_replica(spec.with_truncation(max(levels)), space, child_seed(cfg.seed, 2), i)
        G = lent.gamma_total(F, w, space)
        e_oracle = lent.relative_error(G, lent.gamma_total_oracle(F, w, space))
        e_closed = lent.relative_error(G, gamma_fn(w))
        worst = max(worst, e_oracle, e_closed)
        lines.append(f"replica={i} n_points={len(w)} eq1_vs_product={e_oracle!r} eq1_vs_closed_form={e_closed!r}")
    lines.append(f"max_relative_deviation={worst!r}")
    files["oracle_equivalence.log"] = "\n".join(lines) + "\n"
    for name, text in files.items():
        _write(cfg.out, name, text)
    return {"files": sorted(files), "fractions": [r.fraction for r in reports],
            "isotropy_passed": iso.passed, "oracle_max_deviation": worst,
            "ok": iso.passed and worst <= 1e-10}


# ---------------------------------------------------------------------------
# sde
# ---------------------------------------------------------------------------

def run_sde_transform(cfg: ExperimentConfig) -> dict:
    """Gamma spectra of the transformed jump sum, span ranks, moment report, grid refinement."""
    s = cfg["sde"]
    coeffs = _sde_coeffs(s)
    m = coeffs.dim
    spec = _sde_spec(s, m)
    space = sde.WienerMarkSpace(coeffs.noise_dim, s["n_steps"], s["t"])
    F = sde.make_sde_jump_sum(coeffs)
    tol = s["rank_tol"]

    def one(i):
        w = density.simulate_replica(spec, space, child_seed(cfg.seed, 0), i)
        try:
            G = lent.gamma_total(F, w, space)
        except LentParticleError as exc:
            raise LentParticleError(f"replica {i}: {exc}") from exc
        eig = np.linalg.eigvalsh(G)
        rank = int(np.sum(eig > tol * max(eig[-1], 0.0))) if eig[-1] > 0 else 0
        span = density.prop4_span_test(sde.prop4_fields(coeffs), w.attributes(), tol) if len(w) else 0
        return [i, len(w)] + list(eig) + [rank, span]

    rows = density._replicate(one, s["n_samples"], cfg.threads)
    header = ["replica", "n_jumps"] + [f"eig_{k}" for k in range(1, m + 1)] + ["rank", "span_rank"]
    files = {"gamma_spectra.csv": _csv(header, rows)}

    seq_rows = []
    for k in range(s["prop4_sequences"]):
        seq = density.jump_sequence_to_zero(m, s["prop4_length"], child_seed(cfg.seed, 1, k))
        seq_rows.append([k, density.prop4_span_test(sde.prop4_fields(coeffs), seq, tol), m])
    files["prop4_ranks.csv"] = _csv(["sequence", "rank", "dim"], seq_rows)

    grid = [np.full(m, 1.0 / math.sqrt(m)) * 10.0 ** -k for k in range(s["lemma3_decades"] + 1)]
    try:
        report = sde.lemma3_moment_check(coeffs, s["t"], grid, s["lemma3_paths"],
                                         child_seed(cfg.seed, 2), n_steps=s["n_steps"]).to_dict()
    except LentParticleError as exc:
        report = {"skipped": str(exc)}
    files["lemma3.json"] = _json(report)

    # Cauchy differences of gamma_sde under dt halving, averaged over driver paths
    x0 = np.full(m, 0.5 / math.sqrt(m))
    steps = sorted(s["refinement_steps"])
    diffs = np.zeros(len(steps) - 1)
    for k in range(s["refinement_paths"]):
        path = sde.sample_driver(steps[-1], coeffs.noise_dim, s["t"], child_seed(cfg.seed, 3, k))
        gammas = {}
        for n in reversed(steps):
            while path.n_steps > n:
                path = path.coarsened()
            gammas[n] = sde.gamma_sde(coeffs, x0, path)
        diffs += [np.max(np.abs(gammas[a] - gammas[b])) for a, b in zip(steps, steps[1:])]
    diffs /= s["refinement_paths"]
    ref_rows = [[a, b, float(d)] for a, b, d in zip(steps, steps[1:], diffs)]
    files["refinement.csv"] = _csv(["n_steps", "n_steps_fine", "cauchy_difference"], ref_rows)
    for name, text in files.items():
        _write(cfg.out, name, text)
    ranks_ok = all(r[-2] == m for r in rows if r[1] > 0)
    ranks_match = all(r[-2] == r[-1] for r in rows)
    return {"files": sorted(files), "full_rank_all": ranks_ok, "rank_matches_span": ranks_match, "lemma3": report,
            "prop4_ranks": [r[1] for r in seq_rows], "refinement": [r[2] for r in ref_rows],
            "refinement_decreasing": bool(np.all(np.diff(diffs) < 0)), "ok": True}


# ---------------------------------------------------------------------------
# identity suite
# ---------------------------------------------------------------------------

class WrongSignCircle(CircleMarkSpace):
    """Negative control: flips the off-diagonal sign of the one-mark carré du champ."""

    def gamma_one(self, g, u):
        G = super().gamma_one(g, u).copy()
        off = ~np.eye(len(G), dtype=bool)
        G[off] *= -1
        return G


def _f_rsin(base, theta):
    return base.attribute[0] * math.sin(theta)


def _random_config(rng, max_points):
    n = int(rng.integers(0, max_points + 1))
    return configuration([(rng.uniform(0, 1), rng.uniform(0.05, 2.0), rng.uniform(0, 2 * math.pi))
                          for _ in range(n)], "circle", 1.0)


def run_identity_suite(cfg: ExperimentConfig, space=None) -> list[dict]:
    """Evaluate the carré du champ identities; one row per identity with its worst deviation.

    Rows measured in standard errors (``*_se``) are Monte Carlo checks at 3
    standard errors; the others are relative deviations.
    """
    s = cfg["suite"]
    if space is None:
        space = WrongSignCircle() if s["negative_control"] == "wrong_sign" else CircleMarkSpace()
    rng = make_rng(child_seed(cfg.seed, 0))
    configs = [_random_config(rng, s["max_points"]) for _ in range(s["n_configs"])]
    lin, ex, polar = lent.make_linear(_f_rsin), lent.make_exp(_f_rsin), lent.make_polar_jump_sum()
    rows = []

    def row(name, dev, tol):
        rows.append({"identity": name, "max_deviation": float(dev), "tolerance": tol,
                     "passed": bool(dev <= tol)})

    for name, F in (("linear", lin), ("exp", ex)):
        dev = max(lent.relative_error(lent.gamma_total(F, w, space), lent.gamma_total_oracle(F, w, space))
                  for w in configs)
        row(f"oracle_equivalence[{name}]", dev, 1e-12)
    dev = max(max(lent.relative_error(lent.gamma_total(polar, w, space), lent.gamma_total_oracle(polar, w, space)),
                  lent.relative_error(lent.gamma_total(polar, w, space), density.isotropic_gamma(w)))
              for w in configs)
    row("oracle_equivalence[polar]", dev, 1e-10)

    dev_lin = dev_exp = 0.0
    for w in configs:
        n_gamma = sum((space.gamma_one(lambda u, b=p.base: _f_rsin(b, u), p.mark) for p in w), np.zeros((1, 1)))
        dev_lin = max(dev_lin, lent.relative_error(lent.gamma_total(lin, w, space), n_gamma))
        dev_exp = max(dev_exp, lent.relative_error(lent.gamma_total(ex, w, space),
                                                   math.exp(-2 * lin.eval(w)[0]) * n_gamma))
    row("closed_form[linear]", dev_lin, 1e-10)
    row("closed_form[exp]", dev_exp, 1e-10)

    worst_eig = max(max(0.0, -float(np.linalg.eigvalsh(lent.gamma_total(polar, w, space))[0])) for w in configs)
    row("psd", worst_eig, 1e-12)

    chain = 0.0
    for theta in np.linspace(0, 2 * math.pi, 50, endpoint=False):
        g = lambda u: 0.3 + math.sin(u) + 0.5 * math.cos(2 * u)
        lhs = space.gamma_one(lambda u: math.tanh(g(u)), theta)[0, 0]
        rhs = (1 - math.tanh(g(theta)) ** 2) ** 2 * space.gamma_one(g, theta)[0, 0]
        chain = max(chain, abs(lhs - rhs) / max(abs(rhs), 1e-12))
    row("chain_rule", chain, 1e-6)

    n = s["isometry_draws"]
    iso = 0.0
    for k in range(s["isometry_configs"]):
        w = _random_config(make_rng(child_seed(cfg.seed, 1, k)), s["max_points"])
        G = lent.gamma_total(polar, w, space)
        x = lent.sharp_sample(polar, w, space, child_seed(cfg.seed, 2, k), size=n)
        iso = max(iso, _se_deviation(x, G))
    row("isometry_sharp_se", iso, 3.0)

    g = lambda u: (1.3 * math.cos(u), 0.7 * math.sin(2 * u))
    G = space.gamma_one(g, 0.8)
    x = space.flat_sample(g, 0.8, child_seed(cfg.seed, 3), size=n)
    row("flat_gamma_se", _se_deviation(x, G), 3.0)
    return rows


def _se_deviation(x, G) -> float:
    """Worst entrywise deviation of the empirical second moment (and mean) in standard errors."""
    n = len(x)
    d = np.clip(np.diag(G), 0.0, None)
    se_cov = np.sqrt((np.outer(d, d) + G ** 2) / n)
    emp = x.T @ x / n
    with np.errstate(divide="ignore", invalid="ignore"):
        z_cov = np.where(se_cov > 0, np.abs(emp - G) / se_cov, np.where(np.abs(emp - G) > 1e-15, np.inf, 0.0))
        se_mean = np.sqrt(d / n)
        z_mean = np.where(se_mean > 0, np.abs(x.mean(axis=0)) / se_mean, 0.0)
    return float(max(np.max(z_cov, initial=0.0), np.max(z_mean, initial=0.0)))


def suite_table(rows) -> str:
    return _csv(["identity", "max_deviation", "tolerance", "passed"],
                [[r["identity"], r["max_deviation"], r["tolerance"], "pass" if r["passed"] else "FAIL"]
                 for r in rows])


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lentparticle", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("isotropic", "planar isotropic jump process"),
                            ("sde", "jumps transformed by an SDE"),
                            ("suite", "carré du champ identity checks")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=Path, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", type=Path, default=None)
        p.add_argument("--threads", type=int, default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    config_path = args.config or (Path(os.environ["LENT_CONFIG"]) if "LENT_CONFIG" in os.environ else None)
    try:
        text = config_path.read_text(encoding="utf-8") if config_path else ""
        cfg = parse_config(text, args.command, args.seed, args.out, args.threads)
        if args.command == "isotropic":
            result = run_isotropic(cfg)
            ok = result["ok"]
        elif args.command == "sde":
            result = run_sde_transform(cfg)
            ok = result["ok"]
        else:
            rows = run_identity_suite(cfg)
            table = suite_table(rows)
            _write(cfg.out, "suite.csv", table)
            sys.stdout.write(table)
            ok = all(r["passed"] for r in rows)
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return 2
    except (LentParticleError, OSError) as exc:
        log.error("%s", exc)
        return 1
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
