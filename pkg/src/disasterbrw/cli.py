"""Batch experiment driver.

Subcommands: annealed, lyapunov, brw-survival, moment-check, embed, phase,
sweep, boxes-fkg, perc, verify.  Config files are flat "key = value" text;
command-line flags override file values, and the fully resolved config is
echoed into every output record so results are reproducible from their
artifacts.

Outputs are CSV (header row, comma-separated, LF) or JSON (one top-level
array of record objects); every float is printed with 17 significant digits
and record order is canonical, so a fixed (config, seed, threads) produces
byte-identical files.  Wall-clock timing goes to the stderr log only, never
into output files.

Serialized event logs (brw.serialize_events) are tab-separated lines with
the field order: time (17 significant digits), kind, particle id
(dot-joined child indices), site (comma-joined coordinates).  Lattice dumps
(perc --dump) are "k l occupied open" lines.

Exit codes: 0 success, 1 config error, 2 oracle-suite failure, 3 statistical
acceptance failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction

import numpy as np

from . import boxes as boxes_mod
from . import brw as brw_mod
from . import gw_embed, orders, percolation, walk
from .brw import BRWParams, Caps, offspring_pmf
from .env import DisasterField
from .rng import derive_seed


class ConfigError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def __init__(self, *a, **k):
        k.setdefault("allow_abbrev", False)
        super().__init__(*a, **k)

    def error(self, message):  # exit 1 on bad flags, per the documented codes
        raise ConfigError(message)


# ---------------------------------------------------------------------------
# config plumbing
# ---------------------------------------------------------------------------

def parse_config_file(path: str) -> dict:
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{line_no}: expected key = value")
            key, val = line.split("=", 1)
            out[key.strip().replace("-", "_")] = val.strip()
    return out


def parse_offspring(text: str) -> tuple[float, ...]:
    """Offspring law literal: 'count:prob,count:prob', e.g. '0:0.5,2:0.5'."""
    pairs = {}
    for part in text.split(","):
        if ":" not in part:
            raise ConfigError(f"bad offspring entry {part!r}; use count:prob")
        k, p = part.split(":", 1)
        pairs[int(k)] = float(p)
    try:
        return offspring_pmf(pairs)
    except ValueError as e:
        raise ConfigError(str(e))


def fmt(v) -> str:
    if isinstance(v, float):
        return format(v, ".17g")
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return ""
    return str(v)


def _json_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g") if math.isfinite(v) else json.dumps(str(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None:
        return "null"
    return json.dumps(str(v))


def emit(records: list[dict], out, fmt_name: str) -> None:
    """Write records with a stable schema (union of keys, first-seen order)."""
    cols: list[str] = []
    for rec in records:
        for k in rec:
            if k not in cols:
                cols.append(k)
    if fmt_name == "csv":
        import csv

        w = csv.writer(out, lineterminator="\n")
        w.writerow(cols)
        for rec in records:
            w.writerow([fmt(rec.get(k)) for k in cols])
    else:
        chunks = []
        for rec in records:
            body = ", ".join(f"{json.dumps(k)}: {_json_value(rec.get(k))}" for k in cols)
            chunks.append("{" + body + "}")
        out.write("[\n" + ",\n".join(chunks) + "\n]\n")


def log(msg: str) -> None:
    print(msg, file=sys.stderr)


def parallel_map(fn, items, threads: int):
    """Order-preserving map; reduction order is independent of thread count."""
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def _params_from(ns) -> BRWParams:
    try:
        return BRWParams(jump_rate=ns.kappa, birth_rate=ns.lam, offspring=parse_offspring(ns.q),
                         disaster_rate=ns.alpha, dimension=ns.d)
    except ValueError as e:
        raise ConfigError(str(e))


def _echo(ns, fields) -> dict:
    return {k: getattr(ns, k) for k in fields}


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_annealed(ns) -> tuple[list[dict], int]:
    est = walk.annealed_survival(ns.kappa, ns.alpha, ns.t, ns.n, ns.seed, dimension=ns.d)
    target = math.exp(-ns.alpha * ns.t)
    z = (est.value - target) / est.std_err if est.std_err > 0 else 0.0
    rec = {"experiment": "annealed", **_echo(ns, ("seed", "kappa", "alpha", "d", "t", "n")),
           "value": est.value, "std_err": est.std_err, "target": target, "z": z,
           "ok": abs(z) <= 3.0}
    return [rec], (0 if abs(z) <= 3.0 else 3)


def cmd_lyapunov(ns) -> tuple[list[dict], int]:
    est = walk.estimate_lyapunov(ns.kappa, ns.alpha, ns.t, ns.n_env, ns.n_walkers,
                                 ns.pin, ns.seed, dimension=ns.d)
    rec = {"experiment": "lyapunov",
           **_echo(ns, ("seed", "kappa", "alpha", "d", "t", "n_env", "n_walkers", "pin")),
           "p_hat": est.p_hat, "std_err": est.std_err, "censor_fraction": est.censor_fraction}
    return [rec], 0


def cmd_brw_survival(ns) -> tuple[list[dict], int]:
    params = _params_from(ns)
    est = brw_mod.survival_frequency(params, ns.horizon, ns.n_reps, ns.seed,
                                     caps=Caps(max_alive=ns.cap_alive, max_events=ns.cap_events))
    rec = {"experiment": "brw-survival",
           **_echo(ns, ("seed", "kappa", "lam", "q", "alpha", "d", "horizon", "n_reps")),
           "value": est.value, "std_err": est.std_err, "cap_fraction": est.cap_fraction}
    return [rec], 0


def cmd_moment_check(ns) -> tuple[list[dict], int]:
    params = _params_from(ns)

    def one(i: int) -> dict:
        fld = DisasterField(derive_seed(ns.seed, "moment-field", i), ns.alpha, ns.d)
        chk = brw_mod.moment_identity_check(params, fld, ns.t, ns.n_reps,
                                            derive_seed(ns.seed, "moment", i))
        return {"experiment": "moment-check", "field_index": i,
                **_echo(ns, ("seed", "kappa", "lam", "q", "alpha", "d", "t", "n_reps")),
                "lhs": chk.lhs, "lhs_se": chk.lhs_se, "rhs": chk.rhs, "rhs_se": chk.rhs_se,
                "z": chk.z}
    recs = parallel_map(one, range(ns.n_fields), ns.threads)
    frac_ok = sum(1 for r in recs if abs(r["z"]) <= 3.0) / len(recs)
    return recs, (0 if frac_ok >= 0.95 else 3)


def cmd_embed(ns) -> tuple[list[dict], int]:
    params = _params_from(ns)

    def one(i: int) -> dict:
        fld = DisasterField(derive_seed(ns.seed, "embed-field", i), ns.alpha, ns.d)
        chk = gw_embed.offspring_mean_identity_check(fld, params, ns.period, ns.n_reps,
                                                     derive_seed(ns.seed, "embed", i))
        return {"experiment": "embed", "field_index": i,
                **_echo(ns, ("seed", "kappa", "lam", "q", "alpha", "d", "period", "n_reps")),
                "lhs": chk.lhs, "lhs_se": chk.lhs_se, "rhs": chk.rhs, "rhs_se": chk.rhs_se,
                "z": chk.z}
    recs = parallel_map(one, range(ns.n_fields), ns.threads)
    frac_ok = sum(1 for r in recs if abs(r["z"]) <= 3.0) / len(recs)
    return recs, (0 if frac_ok >= 0.95 else 3)


def cmd_phase(ns) -> tuple[list[dict], int]:
    params = _params_from(ns)
    v = gw_embed.phase_classify(params, ns.t_lyap, ns.n_env, ns.n_walkers, ns.seed)
    rec = {"experiment": "phase",
           **_echo(ns, ("seed", "kappa", "lam", "q", "alpha", "d", "t_lyap", "n_env", "n_walkers")),
           "criterion_value": v.criterion_value, "std_err": v.std_err, "verdict": v.verdict,
           "censor_fraction": v.censor_fraction, "unreliable": v.unreliable}
    return [rec], 0


def _grid(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as e:
        raise ConfigError(f"bad grid {text!r}: {e}")


def cmd_sweep(ns) -> tuple[list[dict], int]:
    if ns.p_grid:
        ps = _grid(ns.p_grid)
        gen = np.random.default_rng(derive_seed(ns.seed, "sweep-perc"))
        uniforms = gen.random((ns.n_reps, ns.rows + 1, ns.rows + 1))
        recs = []
        for p in ps:  # shared uniforms couple the grid monotonically
            est = percolation.independent_perc(p, ns.rows, ns.n_reps, 0, uniforms=uniforms)
            recs.append({"experiment": "sweep-perc", "p": p,
                         **_echo(ns, ("seed", "rows", "n_reps")),
                         "survival": est.value, "std_err": est.std_err})
        return recs, 0
    kappas = _grid(ns.kappa_grid) if ns.kappa_grid else [ns.kappa]
    lams = sorted(_grid(ns.lam_grid)) if ns.lam_grid else [ns.lam]
    q = parse_offspring(ns.q)
    recs = []

    def column(kappa: float) -> list[dict]:
        params_max = BRWParams(jump_rate=kappa, birth_rate=lams[-1], offspring=q,
                               disaster_rate=ns.alpha, dimension=ns.d)
        ests = brw_mod.coupled_birth_rate_survival(
            params_max, lams, ns.horizon, ns.n_reps,
            derive_seed(ns.seed, "sweep", format(kappa, ".17g")),
            caps=Caps(max_alive=ns.cap_alive, max_events=ns.cap_events))
        out = []
        for lam, est in zip(lams, ests):
            out.append({"experiment": "sweep", "kappa": kappa, "lam": lam,
                        **_echo(ns, ("seed", "q", "alpha", "d", "horizon", "n_reps")),
                        "survival": est.value, "std_err": est.std_err,
                        "cap_fraction": est.cap_fraction})
        return out
    for chunk in parallel_map(column, kappas, ns.threads):
        recs.extend(chunk)
    return recs, 0


_FUNCTIONALS = {
    "total": lambda tv, fv: float(tv.sum() + fv.sum()),
    "top-total": lambda tv, fv: float(tv.sum()),
    "face-total": lambda tv, fv: float(fv.sum()),
    "top-indicator": lambda tv, fv: float(tv.sum() >= 1),
    "face-indicator": lambda tv, fv: float(fv.sum() >= 1),
}


def cmd_boxes_fkg(ns) -> tuple[list[dict], int]:
    params = _params_from(ns)
    box = boxes_mod.SpaceTimeBox(ns.box_l, ns.box_t, ns.d)
    eta = {(0,) * ns.d: ns.start_count}
    f = _FUNCTIONALS[ns.f]
    g = _FUNCTIONALS[ns.g]
    recs = []
    worst = math.inf

    def one(b: int):
        return boxes_mod.fkg_test(params, eta, eta, box, f, g, ns.n_reps,
                                  derive_seed(ns.seed, "fkg-batch", b))
    for b, est in enumerate(parallel_map(one, range(ns.n_batches), ns.threads)):
        sig = est.cov / est.std_err if est.std_err > 0 else 0.0
        worst = min(worst, sig)
        recs.append({"experiment": "boxes-fkg", "batch": b,
                     **_echo(ns, ("seed", "kappa", "lam", "q", "alpha", "d",
                                  "box_l", "box_t", "f", "g", "n_reps")),
                     "cov": est.cov, "std_err": est.std_err, "sigmas": sig})
    return recs, (0 if worst >= -3.0 else 3)


def cmd_perc(ns) -> tuple[list[dict], int]:
    if ns.mode == "indep":
        est = percolation.independent_perc(ns.p, ns.rows, ns.n_reps,
                                           derive_seed(ns.seed, "perc-indep"))
        recs = [{"experiment": "perc", "mode": "indep",
                 **_echo(ns, ("seed", "p", "rows", "n_reps")),
                 "survival": est.value, "std_err": est.std_err}]
        return recs, 0
    params = _params_from(ns)
    recs = []
    lines = []
    survived = 0
    for i in range(ns.n_reps):
        fld = DisasterField(derive_seed(ns.seed, "perc-field", i), ns.alpha, ns.d)
        lat = percolation.build_eta_from_brw(params, fld, ns.box_l, ns.box_t, ns.block_n,
                                             ns.copies_s, ns.rows,
                                             derive_seed(ns.seed, "perc-tree", i))
        surv = bool(lat.survives_to_row(ns.rows))
        survived += surv
        if i == 0 and ns.dump:
            lines = list(lat.dump_lines())
        recs.append({"experiment": "perc", "mode": "brw", "replica": i,
                     **_echo(ns, ("seed", "kappa", "lam", "q", "alpha", "d", "rows",
                                  "box_l", "box_t", "block_n", "copies_s")),
                     "survives": surv, "flagged_rows": ";".join(map(str, lat.flagged_rows))})
    if ns.dump:
        with open(ns.dump, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
    value = survived / ns.n_reps
    recs.append({"experiment": "perc", "mode": "brw-summary", "survival": value,
                 "std_err": math.sqrt(max(value * (1 - value), 0.0) / ns.n_reps)})
    return recs, 0


def cmd_verify(ns) -> tuple[list[dict], int]:
    """Exact oracle suites; exit 2 when any fails."""
    gen = np.random.default_rng(derive_seed(ns.seed, "verify"))
    suites = []

    def parity_closed_form() -> bool:
        for n in range(31):
            for p in np.arange(0.0, 1.0001, 0.05):
                brute = sum(math.comb(n, k) * p**k * (1 - p) ** (n - k)
                            for k in range(0, n + 1, 2))
                if abs(orders.binom_parity_even(n, float(p)) - brute) > 1e-12:
                    return False
        return True

    def parity_law_enumeration() -> bool:
        from itertools import product as iproduct

        for _ in range(12):
            n_bins = int(gen.integers(2, 5))
            w = gen.dirichlet(np.ones(n_bins))
            k = int(gen.integers(0, 3)) * 2
            dist = orders.parity_dist(w, k)
            probs = {tuple(int(b) for b in row): p for row, p in zip(dist.patterns, dist.probs)}
            brute: dict = {}
            for assign in iproduct(range(n_bins), repeat=k):
                bits = tuple(sum(1 for a in assign if a == j) % 2 for j in range(n_bins))
                pr = 1.0
                for a in assign:
                    pr *= w[a]
                brute[bits] = brute.get(bits, 0.0) + pr
            for bits, pr in brute.items():
                if abs(probs.get(bits, 0.0) - pr) > 1e-10:
                    return False
        return True

    def parity_monotone() -> bool:
        for _ in range(20):
            w = orders.WeightVector(gen.dirichlet(np.ones(4)))
            for k in (1, 2):
                if orders.parity_monotonicity_violations(w, k):
                    return False
        return True

    def ratio_exhaustive() -> bool:
        return orders.srw_ratio_bound_exhaustive(40)

    def lr_orders() -> bool:
        return all(orders.jump_count_lr_dominates(k, x, 60)
                   for k in (0.5, 1.0, 4.0) for x in (0, 2))

    def coupling() -> bool:
        w = orders.WeightVector((0.1, 0.2, 0.3, 0.4))
        lo, hi = orders.couple_parity_batch(w, 1, 20_000, gen)
        return bool((np.cumsum(lo, 1) <= np.cumsum(hi, 1)).all())

    def zero_product() -> bool:
        for _ in range(400):
            m = int(gen.integers(1, 6))
            s = int(gen.integers(1, 5))
            raw = [Fraction(int(x)) for x in gen.integers(0, 50, 2 ** (m + 1))]
            tot = sum(raw) or Fraction(1)
            joint = {}
            from itertools import product as iproduct

            for code, pat in enumerate(iproduct((0, 1), repeat=m + 1)):
                joint[pat] = raw[code] / tot
            holds, _slack = boxes_mod.zero_pattern_product_bound(joint, s)
            if not holds:
                return False
        return True

    checks = [("binom-parity-closed-form", parity_closed_form),
              ("parity-law-vs-enumeration", parity_law_enumeration),
              ("parity-prefix-monotonicity", parity_monotone),
              ("walk-ratio-bound-exhaustive", ratio_exhaustive),
              ("jump-count-lr-order", lr_orders),
              ("parity-coupling-order", coupling),
              ("zero-pattern-product-bound", zero_product)]
    recs = []
    all_ok = True
    for name, fn in checks:
        ok = bool(fn())
        all_ok &= ok
        log(f"verify {name}: {'pass' if ok else 'FAIL'}")
        recs.append({"experiment": "verify", "suite": name, "seed": ns.seed, "ok": ok})
    return recs, (0 if all_ok else 2)


# ---------------------------------------------------------------------------
# argument wiring
# ---------------------------------------------------------------------------

def _add_common(sp, *, model: bool = False):
    sp.add_argument("--config", default=None)
    sp.add_argument("--seed", type=int, default=None, help="mandatory (no wall-clock default)")
    sp.add_argument("--out", default=None)
    sp.add_argument("--format", dest="fmt", choices=("csv", "json"), default="csv")
    sp.add_argument("--threads", type=int, default=1)
    if model:
        sp.add_argument("--kappa", type=float, default=1.0)
        sp.add_argument("--lam", type=float, default=1.0)
        sp.add_argument("--q", default="0:0.5,2:0.5")
        sp.add_argument("--alpha", type=float, default=1.0)
        sp.add_argument("--d", type=int, default=1)


def build_parser() -> _Parser:
    ap = _Parser(prog="disasterbrw", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("annealed");    _add_common(sp, model=True)
    sp.add_argument("--t", type=float, default=1.0)
    sp.add_argument("--n", type=int, default=100_000)
    sp.set_defaults(fn=cmd_annealed)

    sp = sub.add_parser("lyapunov");    _add_common(sp, model=True)
    sp.add_argument("--t", type=float, default=4.0)
    sp.add_argument("--n-env", type=int, default=100)
    sp.add_argument("--n-walkers", type=int, default=2000)
    sp.add_argument("--pin", action="store_true")
    sp.set_defaults(fn=cmd_lyapunov)

    sp = sub.add_parser("brw-survival"); _add_common(sp, model=True)
    sp.add_argument("--horizon", type=float, default=10.0)
    sp.add_argument("--n-reps", type=int, default=200)
    sp.add_argument("--cap-alive", type=int, default=10_000)
    sp.add_argument("--cap-events", type=int, default=5_000_000)
    sp.set_defaults(fn=cmd_brw_survival)

    sp = sub.add_parser("moment-check"); _add_common(sp, model=True)
    sp.add_argument("--t", type=float, default=2.0)
    sp.add_argument("--n-reps", type=int, default=400)
    sp.add_argument("--n-fields", type=int, default=50)
    sp.set_defaults(fn=cmd_moment_check)

    sp = sub.add_parser("embed");       _add_common(sp, model=True)
    sp.add_argument("--period", type=float, default=2.0)
    sp.add_argument("--n-reps", type=int, default=1000)
    sp.add_argument("--n-fields", type=int, default=50)
    sp.set_defaults(fn=cmd_embed)

    sp = sub.add_parser("phase");       _add_common(sp, model=True)
    sp.add_argument("--t-lyap", type=float, default=4.0)
    sp.add_argument("--n-env", type=int, default=100)
    sp.add_argument("--n-walkers", type=int, default=3000)
    sp.set_defaults(fn=cmd_phase)

    sp = sub.add_parser("sweep");       _add_common(sp, model=True)
    sp.add_argument("--kappa-grid", default=None)
    sp.add_argument("--lam-grid", default=None)
    sp.add_argument("--p-grid", default=None)
    sp.add_argument("--rows", type=int, default=50)
    sp.add_argument("--horizon", type=float, default=10.0)
    sp.add_argument("--n-reps", type=int, default=200)
    sp.add_argument("--cap-alive", type=int, default=10_000)
    sp.add_argument("--cap-events", type=int, default=5_000_000)
    sp.set_defaults(fn=cmd_sweep)

    sp = sub.add_parser("boxes-fkg");   _add_common(sp, model=True)
    sp.add_argument("--box-l", type=int, default=3)
    sp.add_argument("--box-t", type=float, default=1.0)
    sp.add_argument("--start-count", type=int, default=1)
    sp.add_argument("--f", choices=sorted(_FUNCTIONALS), default="total")
    sp.add_argument("--g", choices=sorted(_FUNCTIONALS), default="total")
    sp.add_argument("--n-reps", type=int, default=300)
    sp.add_argument("--n-batches", type=int, default=20)
    sp.set_defaults(fn=cmd_boxes_fkg)

    sp = sub.add_parser("perc");        _add_common(sp, model=True)
    sp.add_argument("--mode", choices=("indep", "brw"), default="indep")
    sp.add_argument("--p", type=float, default=0.8)
    sp.add_argument("--rows", type=int, default=50)
    sp.add_argument("--n-reps", type=int, default=1000)
    sp.add_argument("--box-l", type=int, default=2)
    sp.add_argument("--box-t", type=float, default=0.4)
    sp.add_argument("--block-n", type=int, default=0)
    sp.add_argument("--copies-s", type=int, default=1)
    sp.add_argument("--dump", default=None)
    sp.set_defaults(fn=cmd_perc)

    sp = sub.add_parser("verify");      _add_common(sp)
    sp.set_defaults(fn=cmd_verify)
    return ap


_RANGE_CHECKS = [
    ("t", lambda v: v >= 0.0, "t must be >= 0"),
    ("n", lambda v: v >= 1, "n must be >= 1"),
    ("n_env", lambda v: v >= 1, "n_env must be >= 1"),
    ("n_walkers", lambda v: v >= 1, "n_walkers must be >= 1"),
    ("n_reps", lambda v: v >= 1, "n_reps must be >= 1"),
    ("n_fields", lambda v: v >= 1, "n_fields must be >= 1"),
    ("threads", lambda v: 1 <= v <= 256, "threads must be in 1..256"),
    ("rows", lambda v: 1 <= v <= 10_000, "rows must be in 1..10000"),
    ("p", lambda v: 0.0 <= v <= 1.0, "p must be in [0, 1]"),
]


def _explicit_dests(actions, argv) -> set:
    """Dests whose option strings literally appear on the command line."""
    seen = set()
    flags = set()
    for a in argv:
        flags.add(a.split("=", 1)[0] if a.startswith("--") else a)
    for act in actions:
        if any(op in flags for op in act.option_strings):
            seen.add(act.dest)
    return seen


def _apply_config_overrides(ns, actions, argv) -> None:
    """File values apply wherever the flag was not given explicitly."""
    if ns.config is None:
        return
    explicit = _explicit_dests(actions, argv)
    defaults = {a.dest: a.default for a in actions}
    file_vals = parse_config_file(ns.config)
    for key, raw in file_vals.items():
        if key not in defaults:
            raise ConfigError(f"unknown config key {key!r}")
        if key in explicit:
            continue  # explicit flag wins
        default = defaults.get(key)
        if isinstance(default, bool):
            setattr(ns, key, raw.lower() in ("1", "true", "yes"))
        elif isinstance(default, int) and default is not None:
            setattr(ns, key, int(raw))
        elif isinstance(default, float) and default is not None:
            setattr(ns, key, float(raw))
        else:
            setattr(ns, key, raw)


def main(argv=None) -> int:
    ap = build_parser()
    if argv is None:
        argv = sys.argv[1:]
    try:
        ns = ap.parse_args(argv)
        actions = ap._subparsers._group_actions[0].choices[ns.command]._actions
        _apply_config_overrides(ns, actions, argv)
        if ns.seed is None:
            raise ConfigError("--seed is required (reproducibility: no wall-clock default)")
        for name, check, msg in _RANGE_CHECKS:
            if hasattr(ns, name) and getattr(ns, name) is not None and not check(getattr(ns, name)):
                raise ConfigError(f"{name}: {msg}")
        records, code = ns.fn(ns)
    except ConfigError as e:
        log(f"config error: {e}")
        return 1
    except ValueError as e:
        log(f"config error: {e}")
        return 1
    if ns.out:
        with open(ns.out, "w", encoding="utf-8", newline="") as fh:
            emit(records, fh, ns.fmt)
    else:
        emit(records, sys.stdout, ns.fmt)
    log(f"{ns.command}: {len(records)} record(s), exit {code}")
    return code


if __name__ == "__main__":
    sys.exit(main())
