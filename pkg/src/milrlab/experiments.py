"""Registered experiments, one per acceptance check plus the leakage game.

Each experiment yields rows in a fixed order.  Work units are top-level
functions so they can be shipped to worker processes; each one seeds itself
from ``derive_seed(seed, ...)`` and never from shared state.
"""

from __future__ import annotations

import functools
import math
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import ada_games as ag
from . import cc_sampling as cc
from . import da_problem as da
from . import extractor_lab as ex
from . import fingerprinting as fp
from . import milr
from .harness import Experiment, Param, int_list, int_list_check, nonnegative, positive, register, unit_open
from .prf_cipher import TablePRF
from .streams import derive_seed, trial_rng
from .universal_hash import collision_prob_exact, sample_multipliers


def rate_bound(p: float, trials: int, z: float = 3.0) -> float:
    """``p + z * sqrt(p / trials)``: a rate p plus z standard errors (sqrt(p/T) bounds the binomial one)."""
    return p + z * math.sqrt(p / trials)


def _lambda_check(v):
    bad = [x for x in int_list(v) if x not in milr.SUPPORTED_LAMBDAS]
    return f"contains unsupported lambda values {bad}" if bad else None


# --- milr-roundtrip ----------------------------------------------------------

def _roundtrip_random(lam: int, trials: int, seed: int):
    rng = trial_rng(seed, 1, lam)
    lp = milr.lambda_prime_for(lam)
    keys = sample_multipliers(lam, rng, size=trials).astype(np.uint64)
    mults = sample_multipliers(lam, rng, size=trials).astype(np.uint64)
    msgs = rng.integers(0, 2, size=trials, dtype=np.uint8)
    nonces, masked = milr.enc_rows(keys, mults, lam, lp, msgs, rng)
    back = milr.dec_rows(keys, mults, lam, lp, nonces, masked)
    return {"phase": "random", "lam": lam, "lambda_prime": lp, "cases": trials,
            "failures": int(np.count_nonzero(back != msgs))}


def _roundtrip_exhaustive(lam: int, params_per_key: int, seed: int):
    rng = trial_rng(seed, 2, lam)
    prf = TablePRF(derive_seed(seed, 3, lam))
    lp = milr.lambda_prime_for(lam)
    keys = np.repeat(np.arange(1 << lam, dtype=np.uint64), 2 * params_per_key)
    mults = sample_multipliers(lam, rng, size=keys.shape[0]).astype(np.uint64)
    msgs = np.tile(np.array([0, 1], dtype=np.uint8), keys.shape[0] // 2)
    nonces, masked = milr.enc_rows(keys, mults, lam, lp, msgs, rng, prf)
    back = milr.dec_rows(keys, mults, lam, lp, nonces, masked, prf)
    return {"phase": "exhaustive", "lam": lam, "lambda_prime": lp, "cases": int(keys.shape[0]),
            "failures": int(np.count_nonzero(back != msgs))}


def roundtrip_rows(params, seed, trials, pmap):
    jobs = [functools.partial(_roundtrip_random, lam, trials, seed) for lam in int_list(params["lambdas"])]
    if params["exhaustive_max"] > 0:
        jobs += [functools.partial(_roundtrip_exhaustive, lam, params["params_per_key"], seed)
                 for lam in range(1, params["exhaustive_max"] + 1)]
    yield from pmap(_call, jobs)


def _call(job):
    return job()


def roundtrip_summary(rows, params, trials):
    failures = sum(r["failures"] for r in rows)
    cases = sum(r["cases"] for r in rows)
    return {"cases": cases, "failures": failures}, {"zero_failures": failures == 0}


register(Experiment(
    id="milr-roundtrip",
    description="Encrypt/decrypt round trips: random at the listed lambdas, exhaustive over keys with a table PRF",
    params={
        "lambdas": Param(str, "16,32,64", check=_lambda_check),
        "exhaustive_max": Param(int, 10, check=lambda v: None if 0 <= v <= 16 else "must be in 0..16"),
        "params_per_key": Param(int, 2, check=positive),
    },
    columns=("phase", "lam", "lambda_prime", "cases", "failures"),
    rows=roundtrip_rows,
    summarize=roundtrip_summary,
    criterion="1",
    default_trials=10_000,
))


# --- universality --------------------------------------------------------------

def _universality_job(lam: int, lp: int, trials: int, seed: int):
    rng = trial_rng(seed, lam, lp)
    out = []
    for i in range(trials):
        x, y = (int(v) for v in rng.choice(1 << lam, size=2, replace=False))
        prob = collision_prob_exact(lam, lp, x, y)
        expected = Fraction(1, 1 << lp)
        out.append({"lam": lam, "lambda_prime": lp, "pair": i, "x": x, "y": y,
                    "prob": prob, "expected": expected, "exact": prob == expected})
    return out


def universality_rows(params, seed, trials, pmap):
    jobs = [(lam, lp) for lam in int_list(params["lambdas"]) for lp in range(1, lam + 1)]
    for chunk in pmap(_call, [functools.partial(_universality_job, lam, lp, trials, seed) for lam, lp in jobs]):
        yield from chunk


def universality_summary(rows, params, trials):
    bad = sum(not r["exact"] for r in rows)
    return {"pairs": len(rows), "mismatches": bad}, {"all_exact": bad == 0}


register(Experiment(
    id="universality",
    description="Exact pairwise collision probability of the multiply-truncate hash",
    params={"lambdas": Param(str, "4,8", check=_lambda_check)},
    columns=("lam", "lambda_prime", "pair", "x", "y", "prob", "expected", "exact"),
    rows=universality_rows,
    summarize=universality_summary,
    criterion="2",
    default_trials=50,
))


# --- extractor-check -------------------------------------------------------------

def _extractor_job(entry: ex.CorpusEntry):
    res = ex.check_leftover_bound(entry.source, entry.delta, entry.lambda_prime)
    return {"source_id": entry.source_id, "t": entry.source.t, "lambda": entry.source.lam,
            "lambda_prime": entry.lambda_prime, "delta": float(entry.delta),
            "distance": float(res.distance), "distance_exact": res.distance,
            "bound": res.bound, "pass": res.passed}


def extractor_rows(params, seed, trials, pmap):
    corpus = ex.standard_corpus(params["corpus_seed"])[:trials]
    yield from pmap(_extractor_job, corpus)


def extractor_summary(rows, params, trials):
    passed = sum(r["pass"] for r in rows)
    oracle = next((r["distance_exact"] for r in rows if r["source_id"] == "uniform-t1-l4-lp1"), None)
    aggregates = {"sources": len(rows), "passed": passed,
                  "max_ratio": max(r["distance"] / r["bound"] for r in rows),
                  "uniform_t1_l4_lp1_distance": None if oracle is None else str(oracle)}
    criteria = {"all_within_bound": passed == len(rows), "corpus_size_at_least_20": len(rows) >= 20,
                "uniform_oracle_1_32": oracle == Fraction(1, 32)}
    return aggregates, criteria


register(Experiment(
    id="extractor-check",
    description="Exact statistical distance of hashed dense sources against the block-wise leftover bound",
    params={"corpus_seed": Param(int, 2024, check=nonnegative)},
    columns=("source_id", "t", "lambda", "lambda_prime", "delta", "distance", "distance_exact", "bound", "pass"),
    rows=extractor_rows,
    summarize=extractor_summary,
    criterion="3",
    default_trials=1000,
))


# --- deficiency --------------------------------------------------------------------

LEAKS = {
    "bit_projection": ex.bit_projection,
    "parity": ex.parity_leak,
    "truncated_sum": ex.truncated_sum,
    "clipped_identity": ex.clipped_identity,
}


def _shapes(text: str) -> list[tuple[int, int]]:
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if part:
            n, lam = part.lower().split("x")
            out.append((int(n), int(lam)))
    return out


def _shapes_check(v):
    try:
        shapes = _shapes(v)
    except ValueError:
        return "must look like '2x8,4x4'"
    bad = [f"{n}x{lam}" for n, lam in shapes if n < 1 or lam < 1 or n * lam > 16]
    return f"has shapes outside 1 <= n*lambda <= 16: {bad}" if bad else None


def _deficiency_job(name: str, n: int, lam: int, s: int):
    out = []
    for s_prime in range(s + 1, n * lam + 1):
        res = ex.deficiency_experiment(LEAKS[name](s, n, lam), n, lam, s, s_prime)
        out.append({"leak": name, "n": n, "lam": lam, "s": s, "s_prime": s_prime,
                    "violating_mass": res.violating_mass, "bound": res.bound, "holds": res.holds})
    return out


def deficiency_rows(params, seed, trials, pmap):
    names = [x.strip() for x in params["leaks"].split(",") if x.strip()]
    jobs = [functools.partial(_deficiency_job, name, n, lam, s)
            for name in names for n, lam in _shapes(params["shapes"])
            for s in range(1, min(params["s_max"], n * lam - 1) + 1)]
    for chunk in pmap(_call, jobs):
        yield from chunk


def deficiency_summary(rows, params, trials):
    bad = sum(not r["holds"] for r in rows)
    worst = float(max(r["violating_mass"] / r["bound"] for r in rows))
    return {"cases": len(rows), "violations": bad, "max_ratio": worst}, {"all_below_bound": bad == 0}


def _leaks_check(v):
    bad = [x.strip() for x in v.split(",") if x.strip() and x.strip() not in LEAKS]
    return f"names unknown leak functions {bad}; choose from {sorted(LEAKS)}" if bad else None


register(Experiment(
    id="deficiency",
    description="Mass of leakage outcomes whose preimage loses more than s' bits, against 2^(s-s')",
    params={
        "leaks": Param(str, "bit_projection,parity,truncated_sum", check=_leaks_check),
        "shapes": Param(str, "2x4,2x8,3x5,4x4", check=_shapes_check),
        "s_max": Param(int, 6, check=positive),
    },
    columns=("leak", "n", "lam", "s", "s_prime", "violating_mass", "bound", "holds"),
    rows=deficiency_rows,
    summarize=deficiency_summary,
    criterion="4",
    default_trials=1,
))


# --- fpc-bench ------------------------------------------------------------------------

def _fpc_job(params, seed, trial):
    res = fp.run_fpc_trial(params["n"], params["k"], params["gamma"], params["pirate"],
                           trial_rng(seed, trial), params["length_constant"])
    return {"trial": trial, "coalition": res.coalition, "accused": res.accused,
            "marking_ok": res.marking_ok, "caught": res.caught,
            "false_accusation": res.false_accusation, "completeness_failure": res.completeness_failure}


def fpc_rows(params, seed, trials, pmap):
    yield from pmap(functools.partial(_fpc_job, params, seed), range(trials))


def fpc_summary(rows, params, trials):
    T = len(rows)
    gamma = params["gamma"]
    fa = sum(r["false_accusation"] for r in rows) / T
    cf = sum(r["completeness_failure"] for r in rows) / T
    fa_bound = rate_bound(gamma, T)
    cf_bound = rate_bound(2 * gamma, T)
    aggregates = {"false_accusation_rate": fa, "completeness_failure_rate": cf,
                  "caught_rate": sum(r["caught"] for r in rows) / T,
                  "marking_rate": sum(r["marking_ok"] for r in rows) / T,
                  "false_accusation_bound": fa_bound, "completeness_failure_bound": cf_bound}
    return aggregates, {"false_accusation": fa <= fa_bound, "completeness": cf <= cf_bound}


register(Experiment(
    id="fpc-bench",
    description="Tardos code tracing against a pirate coalition: false accusations and completeness failures",
    params={
        "n": Param(int, 50, check=positive),
        "k": Param(int, 4, check=positive),
        "gamma": Param(float, 0.05, check=unit_open),
        "pirate": Param(str, "majority", choices=tuple(sorted(fp.PIRATES))),
        "length_constant": Param(float, fp.DEFAULT_LENGTH_CONSTANT, check=positive),
    },
    columns=("trial", "coalition", "accused", "marking_ok", "caught", "false_accusation", "completeness_failure"),
    rows=fpc_rows,
    summarize=fpc_summary,
    criterion="5",
    default_trials=500,
))


# --- da-attack ----------------------------------------------------------------------

def _da_arm(arm: str, params, seed, trials, pmap):
    rng = trial_rng(seed, 0 if arm == "subsample" else 1)
    if arm == "subsample":
        solver = da.SubsampleSolver(params["c"])
        code = da.CodeParams(params["collusion"], params["gamma"], params["length_constant"])
        n = params["n"]
    else:
        n, code = da.dp_attack_config(params["epsilon"], params["delta"], params["dp_d"],
                                      params["collusion"], params["gamma"], params["dp_sample_constant"])
        solver = da.DPSolver(params["epsilon"], params["delta"], params["dp_d"], params["dp_sample_constant"])
    rec = da.fpc_attack(solver, n, params["lam"], code, rng, trials=trials, map_fn=pmap)
    return n, rec


def da_rows(params, seed, trials, pmap):
    arms = ("subsample", "dp") if params["arm"] == "both" else (params["arm"],)
    for arm in arms:
        n, rec = _da_arm(arm, params, seed, trials, pmap)
        for r in rec.rows:
            row = r.csv_row()
            row.update(arm=arm, n=n, target=rec.target,
                       target_accused=int(rec.target in r.accused))
            yield row


def da_summary(rows, params, trials):
    aggregates, criteria = {}, {}
    for arm in ("subsample", "dp"):
        mine = [r for r in rows if r["arm"] == arm]
        if not mine:
            continue
        e1 = [r for r in mine if r["experiment"] == 1]
        e2 = [r for r in mine if r["experiment"] == 2]
        hit = sum(r["target_hit"] for r in e1) / len(e1)
        f1 = sum(r["target_accused"] for r in e1) / len(e1)
        f2 = sum(r["target_accused"] for r in e2) / max(1, len(e2))
        errs = [float(r["max_error"]) for r in mine]
        aggregates[arm] = {"n": mine[0]["n"], "target": mine[0]["target"], "retained_hit_rate": hit,
                           "freq1": f1, "freq2": f2, "mean_max_error": sum(errs) / len(errs),
                           "marking_rate": sum(r["marking_ok"] for r in mine) / len(mine)}
        if arm == "subsample":
            criteria["subsample_accuses_retained"] = hit >= params["hit_threshold"]
        else:
            criteria["dp_frequency_ratio"] = f2 <= math.exp(2 * params["epsilon"]) * f1 + 0.05
    return aggregates, criteria


register(Experiment(
    id="da-attack",
    description="Fingerprinting attack on DA solvers: subsample solver and DP solver arms",
    params={
        "arm": Param(str, "both", choices=("both", "subsample", "dp")),
        "n": Param(int, 60, check=positive),
        "lam": Param(int, 32, choices=tuple(milr.SUPPORTED_LAMBDAS)),
        "c": Param(int, 10, check=positive),
        "collusion": Param(int, 10, check=positive),
        "gamma": Param(float, 0.05, check=unit_open),
        "length_constant": Param(float, fp.DEFAULT_LENGTH_CONSTANT, check=positive),
        "epsilon": Param(float, 1.0, check=positive),
        "delta": Param(float, 1e-4, check=unit_open),
        "dp_d": Param(int, 200, check=positive),
        "dp_sample_constant": Param(float, da.DP_SAMPLE_CONSTANT, check=positive),
        "hit_threshold": Param(float, 0.5, check=lambda v: None if 0 <= v <= 1 else "must be in [0, 1]"),
    },
    columns=("arm", "n", "target") + da.REPORT_COLUMNS + ("target_accused",),
    rows=da_rows,
    summarize=da_summary,
    criterion="6",
    default_trials=100,
))


# --- ada-game --------------------------------------------------------------------------

ADA_GAMES = ("one", "two", "space", "omniscient_one", "omniscient_two")


def _ada_adversary(params, N, seed, trial):
    return ag.IFPCAdversary(N, params["collusion"] or params["t"], params["gamma"],
                            params["length_constant"], trial_rng(seed, trial, 0))


def _ada_job(params, seed, job):
    trial, game = job
    t, df, lam = params["t"], params["domain_factor"], params["lam"]
    N = t * df
    adv = _ada_adversary(params, N, seed, trial)
    mech_rng, game_rng = trial_rng(seed, trial, 1), trial_rng(seed, trial, 2)
    if game == "space":
        s = ag.space_budget(lam, N, params["space_points"])
        wrapped = ag.wrap_b_adversary(adv, N, lam, trial_rng(seed, trial, 3))
        tr = ag.game_space(ag.KeySubsampleMechanism(s, mech_rng), wrapped, s)
        mech = "keysub"
    else:
        omni = game.startswith("omniscient")
        mech_obj = ag.OmniscientMechanism(mech_rng) if omni else ag.EmpiricalMechanism(mech_rng)
        play = ag.game_two if game.endswith("two") else ag.game_one
        tr = play(mech_obj, adv, t, domain_factor=df, rng=game_rng)
        mech = mech_obj.name
    if params["transcripts"]:
        folder = Path(params["transcripts"])
        folder.mkdir(parents=True, exist_ok=True)
        (folder / f"{game}-{trial:04d}.jsonl").write_text(tr.to_jsonl())
    ff = tr.first_failure()
    return {"trial": trial, "game": game, "mechanism": mech, "rounds": len(tr.rounds), "outcome": tr.outcome,
            "first_failure": "" if ff is None else ff, "max_error": tr.max_error,
            "accused": len(adv.accused) if adv.accused is not None else 0}


def ada_rows(params, seed, trials, pmap):
    games = [g.strip() for g in params["games"].split(",") if g.strip()]
    jobs = [(trial, g) for trial in range(trials) for g in games]
    yield from pmap(functools.partial(_ada_job, params, seed), jobs)


def ada_summary(rows, params, trials):
    aggregates, criteria = {}, {}
    for g in ADA_GAMES:
        mine = [r for r in rows if r["game"] == g]
        if not mine:
            continue
        freq = sum(r["outcome"] for r in mine) / len(mine)
        aggregates[g] = {"runs": len(mine), "outcome_one_freq": freq,
                         "mean_max_error": sum(r["max_error"] for r in mine) / len(mine)}
        if g.startswith("omniscient"):
            criteria[f"{g}_never_fails"] = freq == 0
        else:
            criteria[f"{g}_adversary_wins"] = freq >= 2 / 3
    return aggregates, criteria


def _games_check(v):
    bad = [g.strip() for g in v.split(",") if g.strip() and g.strip() not in ADA_GAMES]
    return f"names unknown games {bad}; choose from {list(ADA_GAMES)}" if bad else None


register(Experiment(
    id="ada-game",
    description="Interactive fingerprinting adversary against empirical, key-subsample and omniscient mechanisms",
    params={
        "t": Param(int, 10, check=positive),
        "domain_factor": Param(int, 100, check=positive),
        "length_constant": Param(float, 25.0, check=positive),
        "gamma": Param(float, 0.05, check=unit_open),
        "collusion": Param(int, 0, check=nonnegative, help="0 means t"),
        "lam": Param(int, 3, choices=tuple(milr.SUPPORTED_LAMBDAS)),
        "space_points": Param(int, 9, check=positive),
        "games": Param(str, ",".join(ADA_GAMES), check=_games_check),
        "transcripts": Param(str, ""),
    },
    columns=("trial", "game", "mechanism", "rounds", "outcome", "first_failure", "max_error", "accused"),
    rows=ada_rows,
    summarize=ada_summary,
    criterion="7",
    default_trials=20,
))


# --- wrapper-identity ----------------------------------------------------------------

def _identity_job(params, seed, trial):
    t, df, lam = params["t"], params["domain_factor"], params["lam"]
    N = t * df
    s = ag.space_budget(lam, N, params["space_points"])

    def adversary():
        return ag.IFPCAdversary(N, params["collusion"], params["gamma"], params["length_constant"],
                                trial_rng(seed, trial, 0))

    def space_mech():
        return ag.KeySubsampleMechanism(s, trial_rng(seed, trial, 1))

    def wrapper_rng():
        return trial_rng(seed, trial, 2)

    wa = ag.wrap_a(space_mech(), lam, s, wrapper_rng())
    wb = ag.wrap_b(space_mech(), lam, s, wrapper_rng())
    c0 = ag.wrap_c(space_mech(), lam, s, milr.E0, wrapper_rng())
    c1 = ag.wrap_c(space_mech(), lam, s, milr.E1, wrapper_rng())
    ta, tb, t0, t1 = (ag.game_two(m, adversary(), t, domain_factor=df) for m in (wa, wb, c0, c1))
    wadv = ag.wrap_b_adversary(adversary(), N, lam, wrapper_rng())
    ts = ag.game_space(space_mech(), wadv, s)
    return {
        "trial": trial,
        "rounds": len(ta.rounds),
        "c1_vs_a": t1.body_bytes() == ta.body_bytes(),
        "c0_vs_b": t0.body_bytes() == tb.body_bytes(),
        "c0_vs_a_ciphertexts": c0.ciphertext_log == wa.ciphertext_log,
        "c1_vs_b_ciphertexts": c1.ciphertext_log == wb.ciphertext_log,
        "two_vs_space": tb.body_bytes() == ts.body_bytes(),
        "two_vs_space_ciphertexts": wb.ciphertext_log == wadv.ciphertext_log,
        "outcome": ta.outcome,
    }


IDENTITY_CHECKS = ("c1_vs_a", "c0_vs_b", "c0_vs_a_ciphertexts", "c1_vs_b_ciphertexts",
                   "two_vs_space", "two_vs_space_ciphertexts")


def identity_rows(params, seed, trials, pmap):
    yield from pmap(functools.partial(_identity_job, params, seed), range(trials))


def identity_summary(rows, params, trials):
    counts = {c: sum(r[c] for r in rows) for c in IDENTITY_CHECKS}
    return ({"runs": len(rows), "identical": counts},
            {c: counts[c] == len(rows) for c in IDENTITY_CHECKS})


register(Experiment(
    id="wrapper-identity",
    description="Shared-seed runs showing the MILR-oracle wrapper matches WrapA/WrapB and the space-game translation",
    params={
        "t": Param(int, 10, check=positive),
        "domain_factor": Param(int, 10, check=positive),
        "length_constant": Param(float, 0.5, check=positive),
        "gamma": Param(float, 0.05, check=unit_open),
        "collusion": Param(int, 4, check=positive),
        "lam": Param(int, 3, choices=tuple(milr.SUPPORTED_LAMBDAS)),
        "space_points": Param(int, 3, check=positive),
    },
    columns=("trial", "rounds") + IDENTITY_CHECKS + ("outcome",),
    rows=identity_rows,
    summarize=identity_summary,
    criterion="8",
    default_trials=50,
))


# --- cc-sim ---------------------------------------------------------------------------

def cc_rows(params, seed, trials, pmap):
    grid = int_list(params["k_grid"])
    pts = cc.advantage_curve(params["n"], params["lam"], grid, trials, trial_rng(seed, 0),
                             params["target"], map_fn=pmap)
    for p in pts:
        yield {"k": p.k, "trials": p.trials, "successes": p.successes, "success": p.success,
               "advantage": p.advantage, "halfwidth": p.halfwidth}


def cc_summary(rows, params, trials):
    n = params["n"]
    pts = [cc.CurvePoint(r["k"], r["trials"], r["successes"], params["target"]) for r in rows]
    fit = cc.fit_sqrt_law(pts, n)
    by_k = {p.k: p for p in pts}
    chance = cc.chance_level(params["target"])
    aggregates = {"fit_c": fit.c, "r_squared": fit.r_squared,
                  "success": {str(p.k): p.success for p in pts}}
    criteria = {"monotone": cc.monotone_within(pts), "sqrt_fit": fit.r_squared >= 0.9}
    if 0 in by_k:
        criteria["chance_at_zero"] = abs(by_k[0].success - chance) <= 0.02
    if n in by_k:
        criteria["exact_at_n"] = by_k[n].success == 1.0
    return aggregates, criteria


def _cc_grid_check(v):
    msg = int_list_check(v)
    if msg:
        return msg
    return None if int_list(v) else "must list at least one k"


register(Experiment(
    id="cc-sim",
    description="Success of the k-sample protocol for hashed majority, against sqrt(k/n)",
    params={
        "n": Param(int, 1025, check=positive),
        "lam": Param(int, 16, check=lambda v: None if 1 <= v <= 64 else "must be in 1..64"),
        "k_grid": Param(str, "0,16,64,256,1024,1025", check=_cc_grid_check),
        "target": Param(str, "majority", choices=cc.TARGETS),
    },
    columns=("k", "trials", "successes", "success", "advantage", "halfwidth"),
    rows=cc_rows,
    summarize=cc_summary,
    criterion="9",
    default_trials=10_000,
))


# --- leak-game ------------------------------------------------------------------------

class ProbeDistinguisher:
    """Asks for an encryption of 1 at ``probe`` and decrypts it with the key
    read from the summary when that key was stored, else with key 0.

    Key 0 hashes to the all-zero base key, which matches the true hashed key
    with probability ``2^-lambda'``; on a hidden probe the advantage is
    therefore exactly that guessing probability.  On a retained probe both
    modes encrypt honestly and the advantage is 0.
    """

    def __init__(self, stored: tuple, lam: int, probe: int):
        self.stored = stored
        self.lam = lam
        self.probe = probe

    def __call__(self, summary, params, oracle):
        c = oracle(self.probe, 1)
        if self.probe in self.stored:
            pos = self.stored.index(self.probe) * self.lam
            key = milr.SecretKey(int(summary[pos:pos + self.lam], 2), self.lam)
        else:
            key = milr.SecretKey(0, self.lam)
        return milr.dec(key, params[self.probe], c)


def _leak_job(params, seed, trial):
    n, lam, s = params["n"], params["lam"], params["s"]
    stored = tuple(range(min(s // lam, milr.tau_bar(lam, s), n)))
    probe = stored[0] if params["probe"] == "retained" and stored else n - 1
    pre = milr.StoreKeys(stored)
    dist = ProbeDistinguisher(stored, lam, probe)
    bits = {}
    for mode in (milr.E0, milr.E1):
        tr = milr.run_distinguisher_game(pre, dist, n, lam, s, mode, derive_seed(seed, trial))
        bits[mode] = tr.output_bit
    return {"trial": trial, "probe": probe, "hidden": probe not in stored, "retained": len(stored),
            "out_e0": bits[milr.E0], "out_e1": bits[milr.E1]}


def leak_rows(params, seed, trials, pmap):
    yield from pmap(functools.partial(_leak_job, params, seed), range(trials))


def leak_summary(rows, params, trials):
    T = len(rows)
    adv = (sum(r["out_e1"] for r in rows) - sum(r["out_e0"] for r in rows)) / T
    expected = 2.0 ** -milr.lambda_prime_for(params["lam"]) if rows[0]["hidden"] else 0.0
    # shared seeds make each per-trial difference lie in {-1, 0, 1}, variance at most 1
    bound = 3 / math.sqrt(T)
    return ({"advantage": adv, "expected": expected, "noise_bound": bound},
            {"matches_key_guessing": abs(adv - expected) <= bound})


register(Experiment(
    id="leak-game",
    description="Bounded-preprocessing game: a key-storing preprocessor and a probing distinguisher",
    params={
        "n": Param(int, 8, check=positive),
        "lam": Param(int, 16, choices=tuple(milr.SUPPORTED_LAMBDAS)),
        "s": Param(int, 32, check=nonnegative),
        "probe": Param(str, "hidden", choices=("hidden", "retained")),
    },
    columns=("trial", "probe", "hidden", "retained", "out_e0", "out_e1"),
    rows=leak_rows,
    summarize=leak_summary,
    default_trials=200,
))
